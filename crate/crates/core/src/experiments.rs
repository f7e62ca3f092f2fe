//! Experiment definitions run under either engine: double slit, delayed
//! choice interferometer, EPR correlation sweep, ideal teleportation and the
//! optical teleportation apparatus with the `ρ` discriminator.
//!
//! Every shot draws from its own generator derived from `(seed, lane, shot)`
//! so results do not depend on the shard count.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::contextprob::{classical_double_slit, CorrelationTable};
use crate::error::{Error, Result};
use crate::essengine::{
    ess_bs_route, ess_mach_zehnder, ess_measure, ess_route_single, photon_hv, DecisionTime, Hv,
    PhotonHvTable, PhotonSystem, Side, SphereSystem,
};
use crate::linalg::{
    c, pick_index, spin, tensor, Matrix, ProjectiveMeasurement, SeededRng, StateVector,
    ZERO_BRANCH_TOL,
};
use crate::qmengine::{
    bell_measurement_12, bell_side_weights, bell_vector, mach_zehnder, pbs_measurement_3,
    polarization_vector, teleport_with, BellKind, MzConfig, MzDetector,
};
use crate::rng::{derive_seed, fold_shots, run_shots, shot_rng};

/// Bootstrap resamples for every confidence interval.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Residual probability that photons 1 and 2 are distinguishable at an
/// aligned splitter, used by the `ρ` run.
pub const DEFAULT_RESIDUAL_DISTINGUISHABILITY: f64 = 0.1;

const BOOTSTRAP_LANE: u64 = 0xB007;

pub fn default_shards() -> usize {
    rayon::current_num_threads().max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Qm,
    Ess,
}

impl Engine {
    pub fn label(self) -> &'static str {
        match self {
            Engine::Qm => "qm",
            Engine::Ess => "ess",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qm" => Ok(Engine::Qm),
            "ess" => Ok(Engine::Ess),
            other => Err(Error::InvalidInput(format!("unknown engine '{other}'"))),
        }
    }
}

/// Point estimate with a 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, ci_low: value, ci_high: value }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }
}

fn percentile_interval(mut samples: Vec<f64>) -> (f64, f64) {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let lo = ((n as f64) * 0.025).floor() as usize;
    let hi = (((n as f64) * 0.975).ceil() as usize).saturating_sub(1);
    (samples[lo.min(n - 1)], samples[hi.min(n - 1)])
}

fn binomial(n: u64, p: f64) -> Result<Binomial> {
    Binomial::new(n, p.clamp(0.0, 1.0)).map_err(|e| Error::InvalidDistribution(e.to_string()))
}

/// `E = 2k/n − 1` for `k` agreeing shots out of `n`, with a binomial
/// bootstrap interval.
pub fn correlation_estimate(agree: u64, n: u64, boot_seed: u64) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::InsufficientStatistics("no shots".into()));
    }
    let e = |k: u64| 2.0 * k as f64 / n as f64 - 1.0;
    let dist = binomial(n, agree as f64 / n as f64)?;
    let mut rng = shot_rng(boot_seed, BOOTSTRAP_LANE, 0);
    let samples = (0..BOOTSTRAP_RESAMPLES).map(|_| e(dist.sample(&mut rng))).collect();
    let (lo, hi) = percentile_interval(samples);
    Ok(Estimate { value: e(agree), ci_low: lo, ci_high: hi })
}

/// Proportion `k/n` with a binomial bootstrap interval.
pub fn proportion_estimate(k: u64, n: u64, boot_seed: u64) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::InsufficientStatistics("no shots".into()));
    }
    let p = k as f64 / n as f64;
    let dist = binomial(n, p)?;
    let mut rng = shot_rng(boot_seed, BOOTSTRAP_LANE, 1);
    let samples = (0..BOOTSTRAP_RESAMPLES).map(|_| dist.sample(&mut rng) as f64 / n as f64).collect();
    let (lo, hi) = percentile_interval(samples);
    Ok(Estimate { value: p, ci_low: lo, ci_high: hi })
}

/// Precomputed Born weights with numerically empty branches zeroed so they
/// can never be drawn.
fn clean(mut w: Vec<f64>) -> Vec<f64> {
    for x in w.iter_mut() {
        if *x < ZERO_BRANCH_TOL {
            *x = 0.0;
        }
    }
    w
}

fn draw<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    pick_index(weights, rng.random::<f64>())
}

fn fair<R: Rng + ?Sized>(rng: &mut R) -> bool {
    rng.random::<f64>() < 0.5
}

pub fn degrees_to_radians(deg: f64) -> f64 {
    deg * PI / 180.0
}

/// Reduces an angle in degrees to `[0, 180)`.
pub fn canonical_degrees(deg: f64) -> f64 {
    let r = deg.rem_euclid(180.0);
    if r >= 180.0 {
        0.0
    } else {
        r
    }
}

/// Number of sign changes in a sequence, ignoring entries below `tol`.
pub fn sign_changes(values: &[f64], tol: f64) -> usize {
    let signs: Vec<bool> = values.iter().filter(|x| x.abs() > tol).map(|x| *x > 0.0).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

// ---------------------------------------------------------------------------
// Double slit
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct DoubleSlitModel {
    n_sites: usize,
    slit_a: Vec<usize>,
    slit_b: Vec<usize>,
    momentum_bins: Vec<Vec<usize>>,
}

impl Default for DoubleSlitModel {
    /// 64 sites, two-site slits 16 sites apart, one bin per momentum in
    /// centred order `−32..32`.
    fn default() -> Self {
        Self::new(64, vec![24, 25], vec![40, 41]).expect("default lattice is valid")
    }
}

impl DoubleSlitModel {
    /// Lattice with single-index momentum bins in centred order.
    pub fn new(n_sites: usize, slit_a: Vec<usize>, slit_b: Vec<usize>) -> Result<Self> {
        let half = (n_sites / 2) as i64;
        let bins = (-half..n_sites as i64 - half)
            .map(|k| vec![k.rem_euclid(n_sites as i64) as usize])
            .collect();
        Self::with_bins(n_sites, slit_a, slit_b, bins)
    }

    pub fn with_bins(
        n_sites: usize,
        slit_a: Vec<usize>,
        slit_b: Vec<usize>,
        momentum_bins: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidInput("lattice must have at least one site".into()));
        }
        if slit_a.is_empty() || slit_b.is_empty() {
            return Err(Error::InvalidInput("slit site sets must be non-empty".into()));
        }
        let a: BTreeSet<usize> = slit_a.iter().copied().collect();
        let b: BTreeSet<usize> = slit_b.iter().copied().collect();
        if a.len() != slit_a.len() || b.len() != slit_b.len() {
            return Err(Error::InvalidInput("slit sites repeat".into()));
        }
        if a.iter().chain(&b).any(|&s| s >= n_sites) {
            return Err(Error::InvalidInput("slit site outside the lattice".into()));
        }
        if !a.is_disjoint(&b) {
            return Err(Error::InvalidInput("slits overlap".into()));
        }
        let mut seen = vec![false; n_sites];
        for &k in momentum_bins.iter().flatten() {
            if k >= n_sites || seen[k] {
                return Err(Error::InvalidInput("momentum bins must partition the index range".into()));
            }
            seen[k] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidInput("momentum bins must partition the index range".into()));
        }
        Ok(Self { n_sites, slit_a, slit_b, momentum_bins })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn slit_a(&self) -> &[usize] {
        &self.slit_a
    }

    pub fn slit_b(&self) -> &[usize] {
        &self.slit_b
    }

    pub fn momentum_bins(&self) -> &[Vec<usize>] {
        &self.momentum_bins
    }

    /// Centred momentum of each bin's first index.
    pub fn bin_labels(&self) -> Vec<i64> {
        let n = self.n_sites as i64;
        self.momentum_bins
            .iter()
            .map(|bin| {
                let k = bin[0] as i64;
                if k >= n - n / 2 {
                    k - n
                } else {
                    k
                }
            })
            .collect()
    }

    pub fn slit_projector_a(&self) -> Matrix {
        site_projector(self.n_sites, &self.slit_a)
    }

    pub fn slit_projector_b(&self) -> Matrix {
        site_projector(self.n_sites, &self.slit_b)
    }

    /// Uniform amplitude on the open slit sites.
    pub fn slit_state(&self) -> StateVector {
        let norm = ((self.slit_a.len() + self.slit_b.len()) as f64).sqrt();
        let mut amps = vec![0.0; self.n_sites];
        for &s in self.slit_a.iter().chain(&self.slit_b) {
            amps[s] = 1.0 / norm;
        }
        StateVector::from_real(&amps).expect("non-empty lattice")
    }

    /// Projector onto the plane waves of one bin.
    pub fn momentum_projector(&self, bin: usize) -> Matrix {
        let n = self.n_sites;
        let waves: Vec<Vec<crate::linalg::Complex>> = self.momentum_bins[bin]
            .iter()
            .map(|&k| {
                (0..n)
                    .map(|x| {
                        let phase = 2.0 * PI * (k * x % n) as f64 / n as f64;
                        c(phase.cos(), phase.sin()) / (n as f64).sqrt()
                    })
                    .collect()
            })
            .collect();
        Matrix::from_fn(n, |i, j| waves.iter().map(|w| w[i] * w[j].conj()).sum())
    }
}

fn site_projector(n: usize, sites: &[usize]) -> Matrix {
    let mut diag = vec![0.0; n];
    for &s in sites {
        diag[s] = 1.0;
    }
    Matrix::diag_real(&diag)
}

/// Direct terms and the cross term of `⟨ψ|K|ψ⟩` split by slit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlitTerms {
    pub a_term: f64,
    pub b_term: f64,
    pub interference: f64,
}

impl SlitTerms {
    pub fn total(&self) -> f64 {
        self.a_term + self.b_term + self.interference
    }
}

/// `⟨ψ|p_a K p_a|ψ⟩`, `⟨ψ|p_b K p_b|ψ⟩` and `⟨ψ|p_a K p_b + p_b K p_a|ψ⟩`.
pub fn slit_terms(model: &DoubleSlitModel, observable: &Matrix) -> Result<SlitTerms> {
    if observable.dim() != model.n_sites {
        return Err(Error::DimensionMismatch { expected: model.n_sites, found: observable.dim() });
    }
    let psi = model.slit_state();
    let (pa, pb) = (model.slit_projector_a(), model.slit_projector_b());
    let a_term = psi.expectation(&pa.mul(observable).mul(&pa))?.re;
    let b_term = psi.expectation(&pb.mul(observable).mul(&pb))?.re;
    let cross = pa.mul(observable).mul(&pb).add(&pb.mul(observable).mul(&pa));
    let interference = psi.expectation(&cross)?.re;
    Ok(SlitTerms { a_term, b_term, interference })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DoubleSlitSpectrum {
    pub both_open: bool,
    pub momenta: Vec<i64>,
    pub a_term: Vec<f64>,
    pub b_term: Vec<f64>,
    /// Zero when only one slit is open at a time.
    pub interference: Vec<f64>,
    /// Distribution with only slit a (resp. b) open.
    pub single_slit_a: Vec<f64>,
    pub single_slit_b: Vec<f64>,
    /// Probability-weighted mixture of the single-slit distributions.
    pub classical_mixture: Vec<f64>,
}

impl DoubleSlitSpectrum {
    pub fn total(&self) -> Vec<f64> {
        (0..self.momenta.len())
            .map(|i| self.a_term[i] + self.b_term[i] + self.interference[i])
            .collect()
    }
}

pub fn double_slit_spectrum(model: &DoubleSlitModel, both_open: bool) -> Result<DoubleSlitSpectrum> {
    let psi = model.slit_state();
    let (pa, pb) = (model.slit_projector_a(), model.slit_projector_b());
    let weight_a = psi.expectation(&pa)?.re;
    let weight_b = psi.expectation(&pb)?.re;
    let bins = model.momentum_bins.len();
    let (mut a_term, mut b_term, mut interference) =
        (Vec::with_capacity(bins), Vec::with_capacity(bins), Vec::with_capacity(bins));
    for bin in 0..bins {
        let t = slit_terms(model, &model.momentum_projector(bin))?;
        a_term.push(t.a_term);
        b_term.push(t.b_term);
        interference.push(if both_open { t.interference } else { 0.0 });
    }
    let single_slit_a: Vec<f64> = a_term.iter().map(|x| x / weight_a).collect();
    let single_slit_b: Vec<f64> = b_term.iter().map(|x| x / weight_b).collect();
    let classical_mixture = classical_double_slit(weight_a, weight_b, &single_slit_a, &single_slit_b)?;
    Ok(DoubleSlitSpectrum {
        both_open,
        momenta: model.bin_labels(),
        a_term,
        b_term,
        interference,
        single_slit_a,
        single_slit_b,
        classical_mixture,
    })
}

/// Samples detected momenta from the spectrum's total distribution.
pub fn sample_double_slit(
    model: &DoubleSlitModel,
    both_open: bool,
    shots: u64,
    seed: u64,
    shards: usize,
) -> Result<BTreeMap<i64, u64>> {
    let spectrum = double_slit_spectrum(model, both_open)?;
    let weights = clean(spectrum.total());
    let counts = fold_shots(
        shots,
        shards,
        vec![0u64; weights.len()],
        |acc, shot| acc[draw(&weights, &mut shot_rng(seed, 0, shot))] += 1,
        |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
    );
    Ok(spectrum.momenta.iter().copied().zip(counts).collect())
}

// ---------------------------------------------------------------------------
// Delayed choice
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct DelayedChoiceRow {
    pub config: MzConfig,
    pub decision_time: DecisionTime,
    pub da: u64,
    pub db: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayedChoiceResult {
    pub rows: Vec<DelayedChoiceRow>,
    /// Rows sharing a configuration have identical histograms regardless of
    /// decision time.
    pub timing_independent: bool,
}

/// One photon; the generator lane depends on the configuration only.
pub fn delayed_choice_shot(engine: Engine, config: MzConfig, time: DecisionTime, seed: u64, shot: u64) -> MzDetector {
    let lane = match config {
        MzConfig::Open => 0,
        MzConfig::Closed => 1,
    };
    let mut rng = shot_rng(seed, lane, shot);
    match engine {
        Engine::Qm => mach_zehnder(config, &mut rng),
        Engine::Ess => ess_mach_zehnder(config, time, &mut rng),
    }
}

pub fn run_delayed_choice(
    schedule: &[(MzConfig, DecisionTime)],
    shots: u64,
    engine: Engine,
    seed: u64,
) -> DelayedChoiceResult {
    run_delayed_choice_sharded(schedule, shots, engine, seed, default_shards())
}

pub fn run_delayed_choice_sharded(
    schedule: &[(MzConfig, DecisionTime)],
    shots: u64,
    engine: Engine,
    seed: u64,
    shards: usize,
) -> DelayedChoiceResult {
    let rows: Vec<DelayedChoiceRow> = schedule
        .iter()
        .map(|&(config, decision_time)| {
            let [da, db] = fold_shots(
                shots,
                shards,
                [0u64; 2],
                |acc, shot| match delayed_choice_shot(engine, config, decision_time, seed, shot) {
                    MzDetector::Da => acc[0] += 1,
                    MzDetector::Db => acc[1] += 1,
                },
                |a, b| [a[0] + b[0], a[1] + b[1]],
            );
            DelayedChoiceRow { config, decision_time, da, db }
        })
        .collect();
    let timing_independent = rows.iter().all(|r| {
        rows.iter().filter(|o| o.config == r.config).all(|o| o.da == r.da && o.db == r.db)
    });
    DelayedChoiceResult { rows, timing_independent }
}

// ---------------------------------------------------------------------------
// EPR correlations
// ---------------------------------------------------------------------------

/// Spin axis at angle `a` from `z` in the x–z plane.
pub fn xz_axis(angle: f64) -> [f64; 3] {
    [angle.sin(), 0.0, angle.cos()]
}

fn angle_label(rad: f64) -> String {
    let deg = (rad.to_degrees() * 1e6).round() / 1e6;
    format!("{deg}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct EprRow {
    pub alice: f64,
    pub bob: f64,
    pub shots: u64,
    /// Shots whose outcome product is `+1`.
    pub agree: u64,
    pub correlation: Estimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EprSweep {
    pub rows: Vec<EprRow>,
    pub table: CorrelationTable,
}

/// Sequential Born weights for one setting pair: Alice's marginal and Bob's
/// conditional given Alice's branch.
struct SingletBranches {
    alice: Vec<f64>,
    bob_given: [Vec<f64>; 2],
}

fn spin_measurement(axis: [f64; 3], site: usize) -> ProjectiveMeasurement {
    let s = spin::along(axis);
    let half_id = Matrix::identity(2).scale_real(0.5);
    let local = [half_id.add(&s), half_id.sub(&s)];
    let ps = local
        .iter()
        .map(|p| if site == 0 { p.kron(&Matrix::identity(2)) } else { Matrix::identity(2).kron(p) })
        .collect();
    ProjectiveMeasurement::new(ps).expect("spin projectors resolve the identity")
}

impl SingletBranches {
    fn new(alice: [f64; 3], bob: [f64; 3]) -> Result<Self> {
        let singlet = bell_vector(BellKind::PsiMinus);
        let ma = spin_measurement(alice, 0);
        let mb = spin_measurement(bob, 1);
        let wa = clean(ma.weights(&singlet)?);
        let mut bob_given = [Vec::new(), Vec::new()];
        for (k, slot) in bob_given.iter_mut().enumerate() {
            if wa[k] > 0.0 {
                let post = crate::linalg::apply(&ma.projectors()[k], &singlet)?.normalize()?;
                *slot = clean(mb.weights(&post)?);
            } else {
                *slot = vec![0.5, 0.5];
            }
        }
        Ok(Self { alice: wa, bob_given })
    }
}

/// `true` when the two ±½ outcomes of one shot have equal sign.
fn epr_shot(engine: Engine, qm: Option<&SingletBranches>, alice: [f64; 3], bob: [f64; 3], rng: &mut SeededRng) -> Result<bool> {
    match engine {
        Engine::Qm => {
            let b = qm.expect("QM branches precomputed");
            let ka = draw(&b.alice, rng);
            let kb = draw(&b.bob_given[ka], rng);
            Ok(ka == kb)
        }
        Engine::Ess => {
            let mut sys = SphereSystem::new();
            let (p, q) = sys.add_singlet();
            let sa = ess_measure(&mut sys, p, alice, rng)?;
            let sb = ess_measure(&mut sys, q, bob, rng)?;
            Ok(sa * sb > 0.0)
        }
    }
}

/// Correlation `E(a, b)` of the singlet for each `(alice, bob)` angle pair
/// (radians, x–z plane).
pub fn run_epr_sweep(axes: &[(f64, f64)], shots: u64, engine: Engine, seed: u64) -> Result<EprSweep> {
    run_epr_sweep_sharded(axes, shots, engine, seed, default_shards())
}

pub fn run_epr_sweep_sharded(
    axes: &[(f64, f64)],
    shots: u64,
    engine: Engine,
    seed: u64,
    shards: usize,
) -> Result<EprSweep> {
    let mut rows = Vec::with_capacity(axes.len());
    let mut table = CorrelationTable::new();
    for (lane, &(a, b)) in axes.iter().enumerate() {
        let (na, nb) = (xz_axis(a), xz_axis(b));
        let branches = match engine {
            Engine::Qm => Some(SingletBranches::new(na, nb)?),
            Engine::Ess => None,
        };
        let agree = fold_shots(
            shots,
            shards,
            Ok(0u64),
            |acc: &mut Result<u64>, shot| {
                if let Ok(n) = acc {
                    let mut rng = shot_rng(seed, lane as u64, shot);
                    match epr_shot(engine, branches.as_ref(), na, nb, &mut rng) {
                        Ok(same) => *n += same as u64,
                        Err(e) => *acc = Err(e),
                    }
                }
            },
            |x, y| Ok(x? + y?),
        )?;
        let correlation = correlation_estimate(agree, shots, derive_seed(seed, lane as u64))?;
        table.insert(&angle_label(a), &angle_label(b), correlation.value)?;
        rows.push(EprRow { alice: a, bob: b, shots, agree, correlation });
    }
    Ok(EprSweep { rows, table })
}

/// Largest-magnitude CHSH combination of a four-row sweep (rows in the
/// order of [`chsh_axes`]), with a bootstrap interval from binomial
/// resamples of every row.
pub fn chsh_estimate(sweep: &EprSweep, seed: u64) -> Result<Estimate> {
    if sweep.rows.len() != 4 {
        return Err(Error::InvalidInput("CHSH needs exactly four setting pairs".into()));
    }
    let e = sweep.table.as_chsh()?;
    let value = crate::contextprob::chsh_witness(&e).value;
    let dists = sweep
        .rows
        .iter()
        .map(|r| binomial(r.shots, r.agree as f64 / r.shots as f64).map(|d| (d, r.shots)))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = shot_rng(derive_seed(seed, BOOTSTRAP_LANE), BOOTSTRAP_LANE, 3);
    let samples = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let mut es = [[0.0; 2]; 2];
            for (i, (d, n)) in dists.iter().enumerate() {
                es[i / 2][i % 2] = 2.0 * d.sample(&mut rng) as f64 / *n as f64 - 1.0;
            }
            crate::contextprob::chsh_witness(&es).value
        })
        .collect();
    let (ci_low, ci_high) = percentile_interval(samples);
    Ok(Estimate { value, ci_low, ci_high })
}

/// Alice at `0°, 90°`, Bob at `45°, 135°`.
pub fn chsh_axes() -> [(f64, f64); 4] {
    let (a0, a1, b0, b1) = (0.0, PI / 2.0, PI / 4.0, 3.0 * PI / 4.0);
    [(a0, b0), (a0, b1), (a1, b0), (a1, b1)]
}

// ---------------------------------------------------------------------------
// Ideal teleportation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct TeleportIdealResult {
    pub histogram: BTreeMap<BellKind, u64>,
    pub mean_fidelity: f64,
    /// Mean fidelity per Bell outcome (outcomes never seen are absent).
    pub branch_fidelity: BTreeMap<BellKind, f64>,
}

pub fn run_teleport_ideal(
    alpha: crate::linalg::Complex,
    beta: crate::linalg::Complex,
    shots: u64,
    seed: u64,
) -> Result<TeleportIdealResult> {
    run_teleport_ideal_with(alpha, beta, true, shots, seed, default_shards())
}

pub fn run_teleport_ideal_with(
    alpha: crate::linalg::Complex,
    beta: crate::linalg::Complex,
    corrections: bool,
    shots: u64,
    seed: u64,
    shards: usize,
) -> Result<TeleportIdealResult> {
    crate::qmengine::teleport_input(alpha, beta)?;
    if shots == 0 {
        return Err(Error::InsufficientStatistics("no shots".into()));
    }
    let outcomes = run_shots(0, shots, shards, |shot| {
        teleport_with(alpha, beta, corrections, &mut shot_rng(seed, 0, shot)).map(|o| (o.bell, o.fidelity))
    });
    let mut histogram: BTreeMap<BellKind, u64> = BellKind::ALL.iter().map(|&k| (k, 0)).collect();
    let mut sums: BTreeMap<BellKind, f64> = BTreeMap::new();
    let mut total = 0.0;
    for o in outcomes {
        let (k, f) = o?;
        *histogram.get_mut(&k).expect("all kinds present") += 1;
        *sums.entry(k).or_insert(0.0) += f;
        total += f;
    }
    let branch_fidelity = sums.iter().map(|(k, s)| (*k, s / histogram[k] as f64)).collect();
    Ok(TeleportIdealResult { histogram, mean_fidelity: total / shots as f64, branch_fidelity })
}

// ---------------------------------------------------------------------------
// Optical teleportation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TeleportApparatus {
    encoder_angle: f64,
    pbs_angle: f64,
    pub mirror_aligned: bool,
    pub shots: u64,
    pub engine: Engine,
    /// Probability per shot that photons 1 and 2 are distinguishable even
    /// with the mirror aligned.
    residual_distinguishability: f64,
}

impl TeleportApparatus {
    /// Ideal apparatus; angles in degrees.
    pub fn new(encoder_deg: f64, pbs_deg: f64, mirror_aligned: bool, shots: u64, engine: Engine) -> Result<Self> {
        if !encoder_deg.is_finite() || !pbs_deg.is_finite() {
            return Err(Error::InvalidInput("angles must be finite".into()));
        }
        Ok(Self {
            encoder_angle: canonical_degrees(encoder_deg),
            pbs_angle: canonical_degrees(pbs_deg),
            mirror_aligned,
            shots,
            engine,
            residual_distinguishability: 0.0,
        })
    }

    pub fn with_residual_distinguishability(mut self, eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidInput(format!("residual distinguishability {eps} outside [0,1]")));
        }
        self.residual_distinguishability = eps;
        Ok(self)
    }

    pub fn encoder_angle(&self) -> f64 {
        self.encoder_angle
    }

    pub fn pbs_angle(&self) -> f64 {
        self.pbs_angle
    }

    pub fn residual_distinguishability(&self) -> f64 {
        self.residual_distinguishability
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Detector {
    D0,
    D1,
    D2,
    DPlus3,
    DMinus3,
}

impl Detector {
    pub fn label(self) -> &'static str {
        match self {
            Detector::D0 => "D0",
            Detector::D1 => "D1",
            Detector::D2 => "D2",
            Detector::DPlus3 => "D+3",
            Detector::DMinus3 => "D-3",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coincidence {
    MinusCoincidence,
    PlusCoincidence,
    NoCoincidence,
}

impl Coincidence {
    pub fn label(self) -> &'static str {
        match self {
            Coincidence::MinusCoincidence => "minus_coincidence",
            Coincidence::PlusCoincidence => "plus_coincidence",
            Coincidence::NoCoincidence => "no_coincidence",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoincidenceRecord {
    pub fired: BTreeSet<Detector>,
    pub classification: Coincidence,
}

impl CoincidenceRecord {
    pub fn classify(fired: &BTreeSet<Detector>) -> Coincidence {
        let base = [Detector::D0, Detector::D1, Detector::D2].iter().all(|d| fired.contains(d));
        let plus = fired.contains(&Detector::DPlus3);
        let minus = fired.contains(&Detector::DMinus3);
        match (base, plus, minus) {
            (true, false, true) => Coincidence::MinusCoincidence,
            (true, true, false) => Coincidence::PlusCoincidence,
            _ => Coincidence::NoCoincidence,
        }
    }

    fn from_sides(sides: (Side, Side), photon3_plus: bool) -> Self {
        let mut fired = BTreeSet::from([Detector::D0]);
        for s in [sides.0, sides.1] {
            fired.insert(match s {
                Side::Up => Detector::D1,
                Side::Down => Detector::D2,
            });
        }
        // two photons in one detector register as that detector only
        fired.insert(if photon3_plus { Detector::DPlus3 } else { Detector::DMinus3 });
        let classification = Self::classify(&fired);
        Self { fired, classification }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpticalCounts {
    pub n_minus: u64,
    pub n_plus: u64,
    pub n_other: u64,
}

impl OpticalCounts {
    pub fn add(&mut self, c: Coincidence) {
        match c {
            Coincidence::MinusCoincidence => self.n_minus += 1,
            Coincidence::PlusCoincidence => self.n_plus += 1,
            Coincidence::NoCoincidence => self.n_other += 1,
        }
    }

    pub fn merge(self, o: Self) -> Self {
        Self {
            n_minus: self.n_minus + o.n_minus,
            n_plus: self.n_plus + o.n_plus,
            n_other: self.n_other + o.n_other,
        }
    }

    pub fn coincidences(&self) -> u64 {
        self.n_minus + self.n_plus
    }

    pub fn total(&self) -> u64 {
        self.coincidences() + self.n_other
    }
}

/// Born weights of the QM optical shot, fixed per apparatus.
struct QmOptical {
    bell: Vec<f64>,
    pbs_given_bell: Vec<Vec<f64>>,
    pbs_unentangled: Vec<f64>,
    sides: Vec<Vec<f64>>,
}

impl QmOptical {
    fn new(app: &TeleportApparatus) -> Result<Self> {
        let photon1 = polarization_vector(degrees_to_radians(app.encoder_angle));
        let state = tensor(&photon1, &bell_vector(BellKind::PsiMinus));
        let bell_m = bell_measurement_12();
        let pbs = pbs_measurement_3(degrees_to_radians(app.pbs_angle));
        let bell = clean(bell_m.weights(&state)?);
        let mut pbs_given_bell = Vec::with_capacity(4);
        for (k, &w) in bell.iter().enumerate() {
            if w > 0.0 {
                let post = crate::linalg::apply(&bell_m.projectors()[k], &state)?.normalize()?;
                pbs_given_bell.push(clean(pbs.weights(&post)?));
            } else {
                pbs_given_bell.push(vec![0.5, 0.5]);
            }
        }
        let pbs_unentangled = clean(pbs.weights(&state)?);
        let sides = BellKind::ALL
            .iter()
            .map(|&k| {
                let w = bell_side_weights(k);
                clean(vec![w.opposite, w.both_up, w.both_down])
            })
            .collect();
        Ok(Self { bell, pbs_given_bell, pbs_unentangled, sides })
    }

    fn shot(&self, overlap: bool, rng: &mut SeededRng) -> CoincidenceRecord {
        if overlap {
            let k = draw(&self.bell, rng);
            let sides = match draw(&self.sides[k], rng) {
                0 => (Side::Up, Side::Down),
                1 => (Side::Up, Side::Up),
                _ => (Side::Down, Side::Down),
            };
            let plus = draw(&self.pbs_given_bell[k], rng) == 0;
            CoincidenceRecord::from_sides(sides, plus)
        } else {
            let sides = (fair_side(rng), fair_side(rng));
            let plus = draw(&self.pbs_unentangled, rng) == 0;
            CoincidenceRecord::from_sides(sides, plus)
        }
    }
}

fn fair_side(rng: &mut SeededRng) -> Side {
    if fair(rng) {
        Side::Up
    } else {
        Side::Down
    }
}

fn ess_optical_shot(app: &TeleportApparatus, overlap: bool, rng: &mut SeededRng) -> CoincidenceRecord {
    let mut sys = PhotonSystem::new();
    let p1 = sys.add(PhotonHvTable::polarized(degrees_to_radians(app.encoder_angle)));
    let (p2, p3) = sys.add_epr_pair();
    let sides = if overlap {
        ess_bs_route(&mut sys, p1, p2, 0.0, rng)
    } else {
        (ess_route_single(rng), ess_route_single(rng))
    };
    let plus = photon_hv(&mut sys, p3, degrees_to_radians(app.pbs_angle), rng) == Hv::H;
    CoincidenceRecord::from_sides(sides, plus)
}

/// Per-shot simulator for one apparatus.
pub struct OpticalSimulator {
    app: TeleportApparatus,
    qm: Option<QmOptical>,
}

impl OpticalSimulator {
    pub fn new(app: TeleportApparatus) -> Result<Self> {
        let qm = match app.engine {
            Engine::Qm => Some(QmOptical::new(&app)?),
            Engine::Ess => None,
        };
        Ok(Self { app, qm })
    }

    pub fn shot(&self, seed: u64, lane: u64, shot: u64) -> CoincidenceRecord {
        let mut rng = shot_rng(seed, lane, shot);
        let u: f64 = rng.random();
        let overlap = self.app.mirror_aligned && u >= self.app.residual_distinguishability;
        match &self.qm {
            Some(qm) => qm.shot(overlap, &mut rng),
            None => ess_optical_shot(&self.app, overlap, &mut rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpticalRun {
    pub counts: OpticalCounts,
    pub records: Vec<CoincidenceRecord>,
}

impl OpticalRun {
    /// Share of coincidences on the plus branch.
    pub fn teleported_fraction(&self) -> Option<f64> {
        let n = self.counts.coincidences();
        (n > 0).then(|| self.counts.n_plus as f64 / n as f64)
    }
}

pub fn run_optical_teleport(app: &TeleportApparatus, seed: u64) -> Result<OpticalRun> {
    run_optical_teleport_sharded(app, seed, default_shards())
}

pub fn run_optical_teleport_sharded(app: &TeleportApparatus, seed: u64, shards: usize) -> Result<OpticalRun> {
    let sim = OpticalSimulator::new(*app)?;
    let records = run_shots(0, app.shots, shards, |shot| sim.shot(seed, 0, shot));
    let mut counts = OpticalCounts::default();
    for r in &records {
        counts.add(r.classification);
    }
    Ok(OpticalRun { counts, records })
}

/// Aggregate counts only.
pub fn count_optical_teleport(app: &TeleportApparatus, seed: u64, shards: usize) -> Result<OpticalCounts> {
    let sim = OpticalSimulator::new(*app)?;
    Ok(fold_shots(
        app.shots,
        shards,
        OpticalCounts::default(),
        |acc, shot| acc.add(sim.shot(seed, 0, shot).classification),
        OpticalCounts::merge,
    ))
}

// ---------------------------------------------------------------------------
// ρ discriminator
// ---------------------------------------------------------------------------

/// Shots are simulated in blocks of this size until the target is met.
const RHO_BLOCK: u64 = 1 << 18;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedCounts {
    pub angle: f64,
    pub shots: u64,
    pub counts: OpticalCounts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhoResult {
    pub engine: Engine,
    pub target: u64,
    pub residual_distinguishability: f64,
    pub at_45: MatchedCounts,
    pub at_90: MatchedCounts,
    pub rho: Estimate,
}

/// Runs shots in order until `coincidences` reaches `target`.
pub fn run_until_target(app: &TeleportApparatus, seed: u64, lane: u64, target: u64, shards: usize) -> Result<MatchedCounts> {
    let sim = OpticalSimulator::new(*app)?;
    let mut counts = OpticalCounts::default();
    let mut next = 0u64;
    if target == 0 {
        return Ok(MatchedCounts { angle: app.encoder_angle, shots: 0, counts });
    }
    loop {
        let block = run_shots(next, next + RHO_BLOCK, shards, |shot| sim.shot(seed, lane, shot).classification);
        for c in block {
            next += 1;
            counts.add(c);
            if counts.coincidences() == target {
                return Ok(MatchedCounts { angle: app.encoder_angle, shots: next, counts });
            }
        }
        if next >= target.saturating_mul(1_000).max(RHO_BLOCK * 4) && counts.coincidences() == 0 {
            return Err(Error::InsufficientStatistics("no coincidences registered".into()));
        }
    }
}

/// `ρ = N₋(45)/N₋(90)` with `N₋+N₊` matched to `target` in both
/// configurations.
pub fn rho_statistic(target: u64, seed: u64, engine: Engine) -> Result<RhoResult> {
    rho_statistic_with(target, seed, engine, DEFAULT_RESIDUAL_DISTINGUISHABILITY, default_shards())
}

pub fn rho_statistic_with(
    target: u64,
    seed: u64,
    engine: Engine,
    residual_distinguishability: f64,
    shards: usize,
) -> Result<RhoResult> {
    if target == 0 {
        return Err(Error::InsufficientStatistics("target must be positive".into()));
    }
    let config = |deg: f64| -> Result<TeleportApparatus> {
        TeleportApparatus::new(deg, deg, true, 0, engine)?.with_residual_distinguishability(residual_distinguishability)
    };
    let at_45 = run_until_target(&config(45.0)?, seed, 45, target, shards)?;
    let at_90 = run_until_target(&config(90.0)?, seed, 90, target, shards)?;
    let (num, den) = (at_45.counts.n_minus, at_90.counts.n_minus);
    if den == 0 {
        return Err(Error::InsufficientStatistics("no minus coincidences at 90°".into()));
    }
    let b45 = binomial(target, num as f64 / target as f64)?;
    let b90 = binomial(target, den as f64 / target as f64)?;
    let mut rng = shot_rng(derive_seed(seed, BOOTSTRAP_LANE), BOOTSTRAP_LANE, 2);
    let mut samples = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    while samples.len() < BOOTSTRAP_RESAMPLES {
        let n = b45.sample(&mut rng);
        let d = b90.sample(&mut rng);
        if d > 0 {
            samples.push(n as f64 / d as f64);
        }
    }
    let (ci_low, ci_high) = percentile_interval(samples);
    Ok(RhoResult {
        engine,
        target,
        residual_distinguishability,
        at_45,
        at_90,
        rho: Estimate { value: num as f64 / den as f64, ci_low, ci_high },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::re;

    #[test]
    fn default_lattice_shape() {
        let m = DoubleSlitModel::default();
        assert_eq!(m.n_sites(), 64);
        assert_eq!(m.bin_labels().first(), Some(&-32));
        assert_eq!(m.bin_labels().last(), Some(&31));
        assert!((m.slit_state().norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lattice_validation() {
        assert!(DoubleSlitModel::new(8, vec![], vec![1]).is_err());
        assert!(DoubleSlitModel::new(8, vec![1], vec![1]).is_err());
        assert!(DoubleSlitModel::new(8, vec![9], vec![1]).is_err());
        assert!(DoubleSlitModel::with_bins(4, vec![0], vec![2], vec![vec![0, 1], vec![2]]).is_err());
    }

    #[test]
    fn spectrum_sums_to_one() {
        let s = double_slit_spectrum(&DoubleSlitModel::default(), true).unwrap();
        assert!((s.total().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let cls = double_slit_spectrum(&DoubleSlitModel::default(), false).unwrap();
        assert!((cls.total().iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn site_observable_has_no_cross_term() {
        let m = DoubleSlitModel::default();
        let mut k = Matrix::zeros(64);
        k.set(24, 24, re(1.0));
        assert!(slit_terms(&m, &k).unwrap().interference.abs() < 1e-12);
    }

    #[test]
    fn sign_change_counter() {
        assert_eq!(sign_changes(&[1.0, 0.0, -1.0, 1e-15, -2.0, 3.0], 1e-12), 2);
    }

    #[test]
    fn percentile_of_uniform_grid() {
        let (lo, hi) = percentile_interval((0..1000).map(|x| x as f64).collect());
        assert_eq!((lo, hi), (25.0, 974.0));
    }

    #[test]
    fn coincidence_classification() {
        let f = BTreeSet::from([Detector::D0, Detector::D1, Detector::D2, Detector::DMinus3]);
        assert_eq!(CoincidenceRecord::classify(&f), Coincidence::MinusCoincidence);
        let f = BTreeSet::from([Detector::D0, Detector::D1, Detector::DPlus3]);
        assert_eq!(CoincidenceRecord::classify(&f), Coincidence::NoCoincidence);
    }

    #[test]
    fn engine_parsing() {
        assert_eq!("ess".parse::<Engine>().unwrap(), Engine::Ess);
        assert!("classical".parse::<Engine>().is_err());
    }

    #[test]
    fn angles_are_canonical() {
        let app = TeleportApparatus::new(225.0, -90.0, true, 1, Engine::Qm).unwrap();
        assert_eq!(app.encoder_angle(), 45.0);
        assert_eq!(app.pbs_angle(), 90.0);
        assert!(app.with_residual_distinguishability(1.5).is_err());
    }
}
