//! Exact-rational enumeration of the optical teleportation event tree.
#![allow(dead_code)]

use num_rational::Ratio;

pub type Q = Ratio<i64>;

pub fn q(n: i64, d: i64) -> Q {
    Ratio::new(n, d)
}

/// cos² of a difference of multiples of 45°.
pub fn cos2(deg: i64) -> Q {
    match deg.rem_euclid(180) {
        0 => q(1, 1),
        45 | 135 => q(1, 2),
        90 => q(0, 1),
        other => panic!("oracle only handles multiples of 45°, got {other}"),
    }
}

/// Per-shot rates `(N₋, N₊)` of the hidden-value model, enumerated over
/// the overlap draw, the predetermined outcomes of photons 1 and 2 at the
/// splitter basis, the routing draws, and photon 3's outcome at the PBS.
pub fn ess_rates(angle: i64, eps: Q) -> (Q, Q) {
    let half = q(1, 2);
    let mut minus = q(0, 1);
    let mut plus = q(0, 1);
    // aligned, photons overlap
    for h1 in [true, false] {
        let p1 = if h1 { cos2(angle) } else { q(1, 1) - cos2(angle) };
        for h2 in [true, false] {
            let w = (q(1, 1) - eps) * p1 * half;
            // photon 3 is the opposite of photon 2 at the splitter basis
            let axis3 = if h2 { 90 } else { 0 };
            let p_plus3 = cos2(axis3 - angle);
            // equal outcomes leave together; different outcomes route
            // independently and split with probability 1/2
            let p_split = if h1 == h2 { q(0, 1) } else { half };
            minus += w * p_split * (q(1, 1) - p_plus3);
            plus += w * p_split * p_plus3;
        }
    }
    // distinguishable: independent routing, photon 3 untouched
    minus += eps * half * half;
    plus += eps * half * half;
    (minus, plus)
}

/// Per-shot rates from the quantum amplitudes: only the singlet Bell branch
/// (weight ¼) splits the photons, and it hands photon 3 the encoder state,
/// which passes a PBS at the same angle. Distinguishable photons split with
/// probability ½ and photon 3 is unpolarized.
pub fn qm_rates(eps: Q) -> (Q, Q) {
    let quarter = q(1, 4);
    let minus = eps * q(1, 2) * q(1, 2);
    let plus = (q(1, 1) - eps) * quarter + eps * q(1, 2) * q(1, 2);
    (minus, plus)
}

pub fn minus_share((m, p): (Q, Q)) -> Q {
    m / (m + p)
}

/// Expected `ρ` under count matching: ratio of minus shares.
pub fn rho_oracle(engine_ess: bool, eps: Q) -> Q {
    if engine_ess {
        minus_share(ess_rates(45, eps)) / minus_share(ess_rates(90, eps))
    } else {
        minus_share(qm_rates(eps)) / minus_share(qm_rates(eps))
    }
}

pub fn to_f64(r: Q) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
