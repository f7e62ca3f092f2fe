use rand::SeedableRng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use epistate::error::Error;
use epistate::essengine::{
    ess_bs_route, ess_measure, photon_hv, DecisionTime, ElementaryStateSphere, Hv, PhotonHvTable,
    PhotonSystem, SphereSystem,
};
use epistate::experiments::{
    double_slit_spectrum, rho_statistic_with, run_delayed_choice_sharded, run_epr_sweep_sharded,
    run_optical_teleport_sharded, run_teleport_ideal_with, slit_terms, Coincidence, CoincidenceRecord,
    DoubleSlitModel, Engine, TeleportApparatus,
};
use epistate::linalg::{c, re, Matrix, SeededRng};
use epistate::qmengine::{mach_zehnder, pbs_route, BellKind, MzConfig, MzDetector, PbsPort, PolarizationState};

fn within_five_sigma(k: u64, n: u64, p: f64) -> bool {
    let f = k as f64 / n as f64;
    (f - p).abs() <= 5.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn malus_law_at_45_degrees() {
    let mut rng = SeededRng::seed_from_u64(11);
    let n = 100_000;
    let plus = (0..n)
        .filter(|_| pbs_route(&PolarizationState::new(0.2 + FRAC_PI_4), 0.2, &mut rng).0 == PbsPort::Plus)
        .count() as u64;
    assert!(within_five_sigma(plus, n, 0.5));
}

#[test]
fn open_interferometer_splits_evenly() {
    let mut rng = SeededRng::seed_from_u64(12);
    let n = 100_000;
    let da = (0..n).filter(|_| mach_zehnder(MzConfig::Open, &mut rng) == MzDetector::Da).count() as u64;
    assert!(within_five_sigma(da, n, 0.5));
}

#[test]
fn sphere_marginals_follow_born_weights() {
    let n = 10_000u64;
    let mut rng = SeededRng::seed_from_u64(13);
    for prep_k in 0..4 {
        for meas_k in 0..6 {
            let (tp, tm) = (prep_k as f64 * PI / 4.0, meas_k as f64 * PI / 6.0);
            let prep = [tp.sin(), 0.0, tp.cos()];
            let axis = [tm.sin(), 0.0, tm.cos()];
            let mut up = 0;
            for _ in 0..n {
                let mut sys = SphereSystem::new();
                let id = sys.add(ElementaryStateSphere::prepared(prep).unwrap());
                if ess_measure(&mut sys, id, axis, &mut rng).unwrap() > 0.0 {
                    up += 1;
                }
            }
            let born = ((tp - tm) / 2.0).cos().powi(2);
            if born > 0.0 && born < 1.0 {
                assert!(within_five_sigma(up, n, born), "prep {tp} meas {tm}: {up}");
            } else {
                assert_eq!(up as f64, born * n as f64);
            }
        }
    }
}

#[test]
fn sphere_prepared_z_measured_x() {
    let n = 100_000;
    let mut rng = SeededRng::seed_from_u64(14);
    let up = (0..n)
        .filter(|_| {
            let mut sys = SphereSystem::new();
            let id = sys.add(ElementaryStateSphere::prepared([0.0, 0.0, 1.0]).unwrap());
            ess_measure(&mut sys, id, [1.0, 0.0, 0.0], &mut rng).unwrap() > 0.0
        })
        .count() as u64;
    assert!(within_five_sigma(up, n, 0.5));
}

#[test]
fn diagonal_photon_in_rectilinear_basis() {
    let n = 100_000;
    let mut rng = SeededRng::seed_from_u64(15);
    let h = (0..n)
        .filter(|_| {
            let mut sys = PhotonSystem::new();
            let id = sys.add(PhotonHvTable::polarized(FRAC_PI_4));
            photon_hv(&mut sys, id, 0.0, &mut rng) == Hv::H
        })
        .count() as u64;
    assert!(within_five_sigma(h, n, 0.5));
}

#[test]
fn mixed_hidden_values_split_half_the_time() {
    let n = 100_000;
    let mut rng = SeededRng::seed_from_u64(16);
    let split = (0..n)
        .filter(|_| {
            let mut sys = PhotonSystem::new();
            let a = sys.add(PhotonHvTable::polarized(0.0));
            let b = sys.add(PhotonHvTable::polarized(FRAC_PI_2));
            let (x, y) = ess_bs_route(&mut sys, a, b, 0.0, &mut rng);
            x != y
        })
        .count() as u64;
    assert!(within_five_sigma(split, n, 0.5));
}

#[test]
fn identical_hidden_values_never_split() {
    let mut rng = SeededRng::seed_from_u64(17);
    let violations = (0..1_000_000)
        .filter(|k| {
            let theta = (k % 7) as f64 * 0.3;
            let mut sys = PhotonSystem::new();
            let a = sys.add(PhotonHvTable::polarized(theta));
            let b = sys.add(PhotonHvTable::polarized(theta));
            let (x, y) = ess_bs_route(&mut sys, a, b, theta, &mut rng);
            x != y
        })
        .count();
    assert_eq!(violations, 0);
}

#[test]
fn double_slit_pattern() {
    let model = DoubleSlitModel::default();
    let s = double_slit_spectrum(&model, true).unwrap();
    assert!((s.total().iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert!(s.interference.iter().any(|x| x.abs() > 1e-6));
    // symmetric about k = 0
    let total = s.total();
    for (i, &k) in s.momenta.iter().enumerate() {
        if let Some(j) = s.momenta.iter().position(|&m| m == -k) {
            assert!((total[i] - total[j]).abs() < 1e-12, "k = {k}");
        }
    }
    for i in 0..s.momenta.len() {
        assert!((s.a_term[i] + s.b_term[i] - s.classical_mixture[i]).abs() < 1e-10);
    }
    let closed = double_slit_spectrum(&model, false).unwrap();
    assert!(closed.interference.iter().all(|&x| x == 0.0));
    for (x, y) in closed.total().iter().zip(&closed.classical_mixture) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn commuting_observables_kill_the_cross_term() {
    let model = DoubleSlitModel::default();
    for site in [0, 24, 25, 33, 40, 41] {
        let mut k = Matrix::zeros(64);
        k.set(site, site, re(1.0));
        assert!(slit_terms(&model, &k).unwrap().interference.abs() < 1e-12);
    }
    let pa = model.slit_projector_a();
    assert!(slit_terms(&model, &pa).unwrap().interference.abs() < 1e-12);
}

#[test]
fn empty_slits_are_rejected() {
    assert!(matches!(DoubleSlitModel::new(64, vec![], vec![3]), Err(Error::InvalidInput(_))));
}

#[test]
fn epr_same_axis_and_orthogonal() {
    for engine in [Engine::Qm, Engine::Ess] {
        let sweep = run_epr_sweep_sharded(&[(0.0, 0.0), (0.7, 0.7)], 100_000, engine, 3, 4).unwrap();
        for row in &sweep.rows {
            assert_eq!(row.agree, 0, "{engine}");
            assert_eq!(row.correlation.value, -1.0);
        }
    }
    let sweep = run_epr_sweep_sharded(&[(0.0, FRAC_PI_2)], 100_000, Engine::Qm, 3, 4).unwrap();
    assert!(within_five_sigma(sweep.rows[0].agree, 100_000, 0.5));
    assert_eq!(sweep.table.len(), 1);
}

#[test]
fn ess_sweep_follows_minus_cosine() {
    let n = 100_000;
    for deg in [30.0f64, 60.0, 120.0] {
        let b = deg.to_radians();
        let sweep = run_epr_sweep_sharded(&[(0.0, b)], n, Engine::Ess, 8, 4).unwrap();
        // P(agree) = (1 − cos)/2
        assert!(within_five_sigma(sweep.rows[0].agree, n, (1.0 - b.cos()) / 2.0));
    }
}

#[test]
fn ideal_teleportation() {
    let n = 100_000;
    let res = run_teleport_ideal_with(c(0.6, 0.0), c(0.0, 0.8), true, n, 4, 4).unwrap();
    assert!((res.mean_fidelity - 1.0).abs() < 1e-10);
    for k in BellKind::ALL {
        assert!(within_five_sigma(res.histogram[&k], n, 0.25), "{k:?}");
    }
    let raw = run_teleport_ideal_with(re(1.0), re(0.0), false, 10_000, 4, 4).unwrap();
    for (k, f) in raw.branch_fidelity {
        let expect = if matches!(k, BellKind::PsiMinus | BellKind::PsiPlus) { 1.0 } else { 0.0 };
        assert!((f - expect).abs() < 1e-10, "{k:?}: {f}");
    }
    assert!(matches!(
        run_teleport_ideal_with(re(1.0), re(1.0), true, 10, 0, 1),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn optical_teleport_examples() {
    let n = 100_000;
    let qm = TeleportApparatus::new(90.0, 90.0, true, n, Engine::Qm).unwrap();
    let run = run_optical_teleport_sharded(&qm, 1, 4).unwrap();
    assert_eq!(run.counts.n_minus, 0);
    assert!(run.counts.n_plus > 0);
    assert_eq!(run.counts.total(), n);
    assert_eq!(run.records.len() as u64, n);
    for r in &run.records {
        assert_eq!(CoincidenceRecord::classify(&r.fired), r.classification);
        if r.classification != Coincidence::NoCoincidence {
            assert_eq!(r.classification, Coincidence::PlusCoincidence);
        }
    }

    let mis = TeleportApparatus::new(90.0, 90.0, false, n, Engine::Qm).unwrap();
    let c = run_optical_teleport_sharded(&mis, 1, 4).unwrap().counts;
    let total = c.coincidences();
    assert!(within_five_sigma(c.n_minus, total, 0.5));

    let ess = TeleportApparatus::new(90.0, 90.0, true, n, Engine::Ess).unwrap();
    let c = run_optical_teleport_sharded(&ess, 1, 4).unwrap().counts;
    assert_eq!(c.n_minus, 0);
    assert!(c.n_plus > 0);
}

#[test]
fn ideal_apparatus_rho_is_insufficient() {
    let err = rho_statistic_with(1_000, 1, Engine::Qm, 0.0, 2).unwrap_err();
    assert!(matches!(err, Error::InsufficientStatistics(_)));
}

#[test]
fn delayed_choice_examples() {
    let n = 100_000;
    let schedule = [
        (MzConfig::Closed, DecisionTime::BeforeEntry),
        (MzConfig::Closed, DecisionTime::AfterEntry),
        (MzConfig::Open, DecisionTime::BeforeEntry),
        (MzConfig::Open, DecisionTime::AfterEntry),
    ];
    for engine in [Engine::Qm, Engine::Ess] {
        let res = run_delayed_choice_sharded(&schedule, n, engine, 9, 4);
        assert!(res.timing_independent);
        for row in &res.rows {
            match row.config {
                MzConfig::Closed => assert_eq!(row.db, n),
                MzConfig::Open => assert!(within_five_sigma(row.da, n, 0.5)),
            }
        }
    }
}
