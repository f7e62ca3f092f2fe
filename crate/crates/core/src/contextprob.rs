//! Per-context Kolmogorov probability spaces, mean values, the classical
//! (no-interference) double-slit mixture, and the joint-measure feasibility
//! test for the two-setting CHSH scenario.

use std::collections::BTreeMap;

use crate::algebra::{spectral_decompose, Character, StateFunctional};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, StateVector};

const MEASURE_TOL: f64 = 1e-12;

/// Finite probability space for one measurement context. The σ-algebra is
/// the power set of `outcomes`; events are bitmasks over outcome indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextualProbabilitySpace {
    context_label: String,
    outcomes: Vec<String>,
    measure: Vec<f64>,
}

impl ContextualProbabilitySpace {
    pub fn new(
        context_label: impl Into<String>,
        outcomes: Vec<String>,
        measure: Vec<f64>,
    ) -> Result<Self> {
        if outcomes.len() != measure.len() || outcomes.is_empty() {
            return Err(Error::InvalidDistribution("one probability per outcome required".into()));
        }
        if outcomes.len() > 64 {
            return Err(Error::InvalidDistribution("at most 64 outcomes".into()));
        }
        validate_distribution(&measure)?;
        Ok(Self { context_label: context_label.into(), outcomes, measure })
    }

    /// Distribution of the characters of one context in a vector state.
    pub fn from_state(v: &StateVector, characters: &[Character]) -> Result<Self> {
        let v = v.normalize()?;
        let measure = characters
            .iter()
            .map(|ch| Ok(v.expectation(ch.projector())?.re.max(0.0)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_characters(characters, measure)
    }

    /// Distribution of the characters of one context under a state
    /// functional.
    pub fn from_functional(psi: &StateFunctional, characters: &[Character]) -> Result<Self> {
        let measure = characters
            .iter()
            .map(|ch| Ok(psi.evaluate(ch.projector())?.re.max(0.0)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_characters(characters, measure)
    }

    fn from_characters(characters: &[Character], measure: Vec<f64>) -> Result<Self> {
        let label = characters.first().map(|c| c.context().to_string()).unwrap_or_default();
        let outcomes = characters
            .iter()
            .map(|ch| {
                let vals: Vec<String> = ch.values().iter().map(|v| format!("{v:+}")).collect();
                format!("({})", vals.join(","))
            })
            .collect();
        Self::new(label, outcomes, measure)
    }

    pub fn context_label(&self) -> &str {
        &self.context_label
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    /// `P(F)` for the event given as a bitmask over outcome indices.
    pub fn probability(&self, event: u64) -> f64 {
        self.measure
            .iter()
            .enumerate()
            .filter(|(i, _)| event >> i & 1 == 1)
            .map(|(_, p)| p)
            .sum()
    }

    /// The whole sample space as an event.
    pub fn sure_event(&self) -> u64 {
        if self.outcomes.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.outcomes.len()) - 1
        }
    }

    /// Mean of a random variable given by its value on each outcome.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.measure.iter().zip(values).map(|(p, v)| p * v).sum()
    }
}

fn validate_distribution(p: &[f64]) -> Result<()> {
    if p.iter().any(|&x| !x.is_finite() || !(-MEASURE_TOL..=1.0 + MEASURE_TOL).contains(&x)) {
        return Err(Error::InvalidDistribution("probabilities must lie in [0,1]".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Mean values
// ---------------------------------------------------------------------------

/// Something that assigns mean values to observables.
pub trait MeanValue {
    /// `Σ_k λ_k P(outcome k)` over the spectral decomposition of `observable`.
    fn mean_value(&self, observable: &Matrix) -> Result<f64>;

    /// `Ψ(a)` by linearity.
    fn linear_value(&self, a: &Matrix) -> Result<f64>;
}

impl MeanValue for StateVector {
    fn mean_value(&self, observable: &Matrix) -> Result<f64> {
        let v = self.normalize()?;
        spectral_decompose(observable)?
            .iter()
            .map(|t| Ok(t.eigenvalue * v.expectation(&t.projector)?.re))
            .sum()
    }

    fn linear_value(&self, a: &Matrix) -> Result<f64> {
        Ok(self.normalize()?.expectation(a)?.re)
    }
}

impl MeanValue for StateFunctional {
    fn mean_value(&self, observable: &Matrix) -> Result<f64> {
        spectral_decompose(observable)?
            .iter()
            .map(|t| Ok(t.eigenvalue * self.evaluate(&t.projector)?.re))
            .sum()
    }

    fn linear_value(&self, a: &Matrix) -> Result<f64> {
        Ok(self.evaluate(a)?.re)
    }
}

pub fn mean_value<S: MeanValue + ?Sized>(psi: &S, observable: &Matrix) -> Result<f64> {
    psi.mean_value(observable)
}

/// `|Ψ(a+b) − Ψ(a) − Ψ(b)|`, each term computed from its own spectral
/// distribution.
pub fn additivity_check<S: MeanValue + ?Sized>(psi: &S, a: &Matrix, b: &Matrix) -> Result<f64> {
    let sum = psi.mean_value(&a.add(b))?;
    Ok((sum - psi.mean_value(a)? - psi.mean_value(b)?).abs())
}

// ---------------------------------------------------------------------------
// Classical double slit
// ---------------------------------------------------------------------------

/// `P(F_k) = [P(F_a) P(k|a) + P(F_b) P(k|b)] / [P(F_a) + P(F_b)]`, which
/// for identical slits is the even mixture of the two conditionals.
pub fn classical_double_slit(
    p_pass_a: f64,
    p_pass_b: f64,
    k_given_a: &[f64],
    k_given_b: &[f64],
) -> Result<Vec<f64>> {
    for p in [p_pass_a, p_pass_b] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidDistribution(format!("slit probability {p} outside [0,1]")));
        }
    }
    let total = p_pass_a + p_pass_b;
    if total <= 0.0 {
        return Err(Error::InvalidDistribution("no probability of passing either slit".into()));
    }
    if k_given_a.len() != k_given_b.len() {
        return Err(Error::DimensionMismatch { expected: k_given_a.len(), found: k_given_b.len() });
    }
    validate_distribution(k_given_a)?;
    validate_distribution(k_given_b)?;
    let (wa, wb) = (p_pass_a / total, p_pass_b / total);
    Ok(k_given_a.iter().zip(k_given_b).map(|(a, b)| wa * a + wb * b).collect())
}

// ---------------------------------------------------------------------------
// Correlation tables and joint-measure feasibility
// ---------------------------------------------------------------------------

/// Correlations `E(a, b)` of ±1-valued outcomes for pairs of settings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrelationTable {
    settings: Vec<(String, String)>,
    values: BTreeMap<(String, String), f64>,
}

impl CorrelationTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Standard 2×2 table; `e[i][j] = E(a_i, b_j)`.
    pub fn chsh(alice: [&str; 2], bob: [&str; 2], e: [[f64; 2]; 2]) -> Result<Self> {
        let mut t = Self::new();
        for i in 0..2 {
            for j in 0..2 {
                t.insert(alice[i], bob[j], e[i][j])?;
            }
        }
        Ok(t)
    }

    pub fn insert(&mut self, a: &str, b: &str, value: f64) -> Result<()> {
        if !value.is_finite() || value.abs() > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!("correlation {value} outside [-1,1]")));
        }
        let key = (a.to_string(), b.to_string());
        if self.values.insert(key.clone(), value).is_none() {
            self.settings.push(key);
        }
        Ok(())
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        self.values.get(&(a.to_string(), b.to_string())).copied()
    }

    /// Setting pairs in insertion order.
    pub fn settings(&self) -> &[(String, String)] {
        &self.settings
    }

    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    /// Distinct Alice and Bob settings in order of first appearance.
    fn sides(&self) -> (Vec<String>, Vec<String>) {
        let mut alice: Vec<String> = Vec::new();
        let mut bob: Vec<String> = Vec::new();
        for (a, b) in &self.settings {
            if !alice.contains(a) {
                alice.push(a.clone());
            }
            if !bob.contains(b) {
                bob.push(b.clone());
            }
        }
        (alice, bob)
    }

    /// The 2×2 correlation block, or an error for any other shape.
    pub fn as_chsh(&self) -> Result<[[f64; 2]; 2]> {
        let (alice, bob) = self.sides();
        if alice.len() != 2 || bob.len() != 2 || self.len() != 4 {
            return Err(Error::InvalidInput(
                "table must hold exactly two settings per side and four correlations".into(),
            ));
        }
        let mut e = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                e[i][j] = self.get(&alice[i], &bob[j]).expect("all four pairs present");
            }
        }
        Ok(e)
    }
}

/// Single-party expectations `⟨A_i⟩`, `⟨B_j⟩` in the same setting order as
/// the correlation table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Marginals {
    pub alice: [f64; 2],
    pub bob: [f64; 2],
}

/// The CHSH combination with the minus sign at `minus = (i, j)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChshWitness {
    pub value: f64,
    pub minus: (usize, usize),
}

/// Largest-magnitude CHSH combination over the four sign placements.
pub fn chsh_witness(e: &[[f64; 2]; 2]) -> ChshWitness {
    let total: f64 = e.iter().flatten().sum();
    let mut best = ChshWitness { value: 0.0, minus: (1, 1) };
    for (i, j) in [(1, 1), (0, 0), (0, 1), (1, 0)] {
        let s = (total - 2.0 * e[i][j]).abs();
        if s > best.value + 1e-15 {
            best = ChshWitness { value: s, minus: (i, j) };
        }
    }
    best
}

/// Standard combination `E(a,b) + E(a,b′) + E(a′,b) − E(a′,b′)`.
pub fn chsh_value(e: &[[f64; 2]; 2]) -> f64 {
    e[0][0] + e[0][1] + e[1][0] - e[1][1]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    /// Joint distribution over the 16 deterministic assignments
    /// `(a, a′, b, b′)`, indexed by the bit pattern (bit set ⇒ −1), when
    /// feasible.
    pub joint: Option<[f64; 16]>,
    pub witness: ChshWitness,
}

/// Decides whether one joint distribution over the 16 deterministic
/// assignments reproduces the table (and the marginals, when given).
pub fn joint_measure_feasible(
    table: &CorrelationTable,
    marginals: Option<&Marginals>,
) -> Result<Feasibility> {
    let e = table.as_chsh()?;
    if let Some(m) = marginals {
        if m.alice.iter().chain(&m.bob).any(|x| !x.is_finite() || x.abs() > 1.0 + 1e-12) {
            return Err(Error::InvalidInput("marginal outside [-1,1]".into()));
        }
    }
    let sign = |lambda: usize, bit: usize| if lambda >> bit & 1 == 1 { -1.0 } else { 1.0 };
    // bits: 0 = a, 1 = a′, 2 = b, 3 = b′
    let mut rows: Vec<([f64; 16], f64)> = Vec::new();
    rows.push(([1.0; 16], 1.0));
    for i in 0..2 {
        for j in 0..2 {
            let mut r = [0.0; 16];
            for (l, x) in r.iter_mut().enumerate() {
                *x = sign(l, i) * sign(l, 2 + j);
            }
            rows.push((r, e[i][j]));
        }
    }
    if let Some(m) = marginals {
        for bit in 0..4 {
            let mut r = [0.0; 16];
            for (l, x) in r.iter_mut().enumerate() {
                *x = sign(l, bit);
            }
            let target = if bit < 2 { m.alice[bit] } else { m.bob[bit - 2] };
            rows.push((r, target));
        }
    }
    let joint = phase_one_simplex(&rows);
    Ok(Feasibility { feasible: joint.is_some(), joint, witness: chsh_witness(&e) })
}

/// Phase-one simplex with Bland's rule for `A x = b, x ≥ 0` over 16
/// variables. Returns a feasible point or `None`.
fn phase_one_simplex(rows: &[([f64; 16], f64)]) -> Option<[f64; 16]> {
    const N: usize = 16;
    const EPS: f64 = 1e-11;
    const FEAS_TOL: f64 = 1e-9;
    let m = rows.len();
    let width = N + m + 1; // variables, artificials, rhs
    let mut t = vec![vec![0.0; width]; m + 1];
    let mut basis = vec![0usize; m];
    for (r, (coef, rhs)) in rows.iter().enumerate() {
        let flip = if *rhs < 0.0 { -1.0 } else { 1.0 };
        for j in 0..N {
            t[r][j] = flip * coef[j];
        }
        t[r][N + r] = 1.0;
        t[r][width - 1] = flip * rhs;
        basis[r] = N + r;
    }
    // Objective row: minimize the sum of artificials, expressed in reduced
    // costs relative to the artificial basis.
    for j in 0..width {
        let s: f64 = (0..m).map(|r| t[r][j]).sum();
        t[m][j] = if (N..N + m).contains(&j) { 0.0 } else { -s };
    }
    for _ in 0..10_000 {
        // Entering column: smallest index with negative reduced cost.
        let Some(col) = (0..N + m).find(|&j| t[m][j] < -EPS) else { break };
        // Ratio test, ties broken by smallest basis index.
        let mut pivot: Option<(usize, f64)> = None;
        for r in 0..m {
            if t[r][col] > EPS {
                let ratio = t[r][width - 1] / t[r][col];
                match pivot {
                    None => pivot = Some((r, ratio)),
                    Some((pr, pratio)) => {
                        if ratio < pratio - EPS
                            || ((ratio - pratio).abs() <= EPS && basis[r] < basis[pr])
                        {
                            pivot = Some((r, ratio));
                        }
                    }
                }
            }
        }
        let (pr, _) = pivot?;
        let pv = t[pr][col];
        for x in t[pr].iter_mut() {
            *x /= pv;
        }
        let prow = t[pr].clone();
        for (r, row) in t.iter_mut().enumerate() {
            if r != pr {
                let f = row[col];
                if f != 0.0 {
                    for (x, p) in row.iter_mut().zip(&prow) {
                        *x -= f * p;
                    }
                }
            }
        }
        basis[pr] = col;
    }
    let infeasibility = -t[m][width - 1];
    if infeasibility > FEAS_TOL {
        return None;
    }
    let mut x = [0.0; 16];
    for (r, &b) in basis.iter().enumerate() {
        if b < N {
            x[b] = t[r][width - 1].max(0.0);
        }
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{enumerate_characters, two_spin, CommutativeSubalgebra, FiniteAlgebra};
    use crate::linalg::spin;
    use crate::linalg::SeededRng;
    use rand::{Rng, SeedableRng};

    fn singlet() -> StateVector {
        let s = 1.0 / 2f64.sqrt();
        StateVector::from_real(&[0.0, s, -s, 0.0]).unwrap()
    }

    #[test]
    fn probability_space_validation() {
        let ok = ContextualProbabilitySpace::new(
            "z",
            vec!["+".into(), "-".into()],
            vec![0.25, 0.75],
        )
        .unwrap();
        assert_eq!(ok.probability(ok.sure_event()), 1.0);
        assert_eq!(ok.probability(0b01), 0.25);
        assert_eq!(ok.probability(0), 0.0);
        assert!(ContextualProbabilitySpace::new("z", vec!["+".into()], vec![0.5]).is_err());
        assert!(ContextualProbabilitySpace::new("z", vec!["+".into(), "-".into()], vec![1.5, -0.5])
            .is_err());
    }

    #[test]
    fn context_space_from_characters() {
        let a = FiniteAlgebra::spins(2);
        let q = CommutativeSubalgebra::generated(&a, vec![two_spin::s1z(), two_spin::s2z()], "Q'")
            .unwrap();
        let chars = enumerate_characters(&q);
        let space = ContextualProbabilitySpace::from_state(&singlet(), &chars).unwrap();
        assert!((space.measure().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // singlet: only (+½,−½) and (−½,+½) have weight
        let heavy = space.measure().iter().filter(|&&p| p > 1e-9).count();
        assert_eq!(heavy, 2);
        let s1z_values: Vec<f64> = chars.iter().map(|c| c.values()[0]).collect();
        assert!(space.integrate(&s1z_values).abs() < 1e-12);
    }

    #[test]
    fn mean_value_examples() {
        let up = StateVector::basis(2, 0);
        assert!((mean_value(&up, &spin::sz()).unwrap() - 0.5).abs() < 1e-12);
        for n in [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.6, 0.0, 0.8], [0.0, 1.0, 0.0]] {
            let total = spin::embed(&spin::along(n), 0, 2).add(&spin::embed(&spin::along(n), 1, 2));
            assert!(mean_value(&singlet(), &total).unwrap().abs() < 1e-12);
        }
        assert!(mean_value(&up, &Matrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]])).is_err());
    }

    #[test]
    fn additivity_for_noncommuting_pair() {
        let mut rng = SeededRng::seed_from_u64(17);
        for _ in 0..20 {
            let v = StateVector::new(
                (0..2).map(|_| crate::linalg::c(rng.random(), rng.random())).collect(),
            )
            .unwrap();
            assert!(additivity_check(&v, &spin::sx(), &spin::sz()).unwrap() < 1e-10);
        }
        let dev = additivity_check(&singlet(), &two_spin::s1z(), &two_spin::s2z()).unwrap();
        assert!(dev < 1e-10);
    }

    #[test]
    fn classical_mixture_examples() {
        let d = vec![0.2, 0.3, 0.5];
        assert_eq!(classical_double_slit(0.5, 0.5, &d, &d).unwrap(), d);
        assert_eq!(
            classical_double_slit(0.3, 0.3, &[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            vec![0.5, 0.5]
        );
        assert!(classical_double_slit(0.5, 0.5, &[0.7, 0.7], &[0.5, 0.5]).is_err());
        assert!(classical_double_slit(0.0, 0.0, &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn feasibility_examples() {
        let zero = CorrelationTable::chsh(["a", "a'"], ["b", "b'"], [[0.0; 2]; 2]).unwrap();
        assert!(joint_measure_feasible(&zero, None).unwrap().feasible);
        let ones = CorrelationTable::chsh(["a", "a'"], ["b", "b'"], [[1.0; 2]; 2]).unwrap();
        let f = joint_measure_feasible(
            &ones,
            Some(&Marginals { alice: [1.0, 1.0], bob: [1.0, 1.0] }),
        )
        .unwrap();
        assert!(f.feasible);
        assert!((f.witness.value - 2.0).abs() < 1e-12);
        let x = std::f64::consts::FRAC_1_SQRT_2;
        let tsirelson =
            CorrelationTable::chsh(["a", "a'"], ["b", "b'"], [[x, x], [x, -x]]).unwrap();
        let f = joint_measure_feasible(&tsirelson, None).unwrap();
        assert!(!f.feasible);
        assert!((f.witness.value - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(f.witness.minus, (1, 1));
    }

    #[test]
    fn feasible_joint_reproduces_table() {
        let e = [[0.3, -0.2], [0.5, 0.1]];
        let table = CorrelationTable::chsh(["a", "a'"], ["b", "b'"], e).unwrap();
        let m = Marginals { alice: [0.1, 0.0], bob: [-0.1, 0.2] };
        let f = joint_measure_feasible(&table, Some(&m)).unwrap();
        assert!(f.feasible);
        let q = f.joint.unwrap();
        let sign = |l: usize, bit: usize| if l >> bit & 1 == 1 { -1.0 } else { 1.0 };
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..2 {
            for j in 0..2 {
                let got: f64 = (0..16).map(|l| q[l] * sign(l, i) * sign(l, 2 + j)).sum();
                assert!((got - e[i][j]).abs() < 1e-9);
            }
        }
        let ma: f64 = (0..16).map(|l| q[l] * sign(l, 0)).sum();
        assert!((ma - 0.1).abs() < 1e-9);
    }

    #[test]
    fn malformed_tables_rejected() {
        let mut t = CorrelationTable::new();
        t.insert("a", "b", 0.5).unwrap();
        assert!(joint_measure_feasible(&t, None).is_err());
        assert!(t.insert("a", "b'", 1.5).is_err());
    }
}
