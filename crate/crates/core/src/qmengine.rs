//! Standard-formalism models: Bell states, photon polarization and
//! polarizing beam splitters, the two-photon beam splitter, the
//! Mach-Zehnder interferometer and the teleportation circuit.
//!
//! Two beam-splitter conventions coexist and are kept local:
//! the two-photon splitter uses `u → (u+d)/√2, d → (u−d)/√2`, the
//! interferometer uses a `π/2` phase on reflection.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::OnceLock;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    c, inner, pick_index, re, tensor, Complex, Matrix, ProjectiveMeasurement, StateVector,
    ANALYTIC_TOL,
};

// ---------------------------------------------------------------------------
// Bell states
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BellKind {
    PsiMinus,
    PsiPlus,
    PhiMinus,
    PhiPlus,
}

impl BellKind {
    pub const ALL: [BellKind; 4] =
        [BellKind::PsiMinus, BellKind::PsiPlus, BellKind::PhiMinus, BellKind::PhiPlus];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            BellKind::PsiMinus => "psi_minus",
            BellKind::PsiPlus => "psi_plus",
            BellKind::PhiMinus => "phi_minus",
            BellKind::PhiPlus => "phi_plus",
        }
    }

    pub fn is_singlet(self) -> bool {
        self == BellKind::PsiMinus
    }
}

fn qubit_labels() -> Vec<String> {
    vec!["+".into(), "-".into()]
}

/// `|+⟩` / `|−⟩` with labels.
pub fn qubit(alpha: Complex, beta: Complex) -> StateVector {
    StateVector::with_labels(vec![alpha, beta], qubit_labels()).expect("two labels")
}

/// The four maximally entangled two-particle vectors in the basis
/// `{++, +−, −+, −−}`.
pub fn bell_vector(kind: BellKind) -> StateVector {
    let s = FRAC_1_SQRT_2;
    let amps = match kind {
        BellKind::PsiMinus => [0.0, s, -s, 0.0],
        BellKind::PsiPlus => [0.0, s, s, 0.0],
        BellKind::PhiMinus => [s, 0.0, 0.0, -s],
        BellKind::PhiPlus => [s, 0.0, 0.0, s],
    };
    let labels = ["++", "+-", "-+", "--"].iter().map(|s| s.to_string()).collect();
    StateVector::with_labels(amps.iter().map(|&x| re(x)).collect(), labels).expect("4 labels")
}

/// Measurement of particles 1–2 of a three-particle system in the Bell
/// basis (outcome index = [`BellKind::index`]).
pub fn bell_measurement_12() -> &'static ProjectiveMeasurement {
    static M: OnceLock<ProjectiveMeasurement> = OnceLock::new();
    M.get_or_init(|| {
        let ps = BellKind::ALL
            .iter()
            .map(|&k| Matrix::outer(&bell_vector(k)).kron(&Matrix::identity(2)))
            .collect();
        ProjectiveMeasurement::new(ps).expect("Bell projectors resolve the identity")
    })
}

// ---------------------------------------------------------------------------
// Polarization
// ---------------------------------------------------------------------------

/// Linear polarization `|θ⟩ = cos θ |H⟩ + sin θ |V⟩`, with `|H⟩ ≡ |+⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarizationState {
    theta: f64,
}

impl PolarizationState {
    /// Angle is reduced to `[0, π)`.
    pub fn new(theta: f64) -> Self {
        Self { theta: theta.rem_euclid(std::f64::consts::PI) }
    }

    pub fn horizontal() -> Self {
        Self::new(0.0)
    }

    pub fn vertical() -> Self {
        Self::new(std::f64::consts::FRAC_PI_2)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn vector(&self) -> StateVector {
        polarization_vector(self.theta)
    }
}

pub fn polarization_vector(theta: f64) -> StateVector {
    StateVector::with_labels(vec![re(theta.cos()), re(theta.sin())], vec!["H".into(), "V".into()])
        .expect("two labels")
}

/// PBS output port: `Plus` is the H-branch of the PBS basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PbsPort {
    Plus,
    Minus,
}

/// `[|b⟩⟨b|, |b⊥⟩⟨b⊥|]` for a PBS whose H axis is at angle `b`.
pub fn pbs_projectors(basis_angle: f64) -> [Matrix; 2] {
    let plus = polarization_vector(basis_angle);
    let minus = polarization_vector(basis_angle + std::f64::consts::FRAC_PI_2);
    [Matrix::outer(&plus), Matrix::outer(&minus)]
}

/// PBS measurement acting on the last photon of a three-photon state.
pub fn pbs_measurement_3(basis_angle: f64) -> ProjectiveMeasurement {
    let id4 = Matrix::identity(4);
    let ps = pbs_projectors(basis_angle).iter().map(|p| id4.kron(p)).collect();
    ProjectiveMeasurement::new(ps).expect("PBS projectors resolve the identity")
}

/// Routes a photon through a PBS. One uniform draw; the output photon is
/// polarized along the axis of the branch it took.
pub fn pbs_route<R: Rng + ?Sized>(
    photon: &PolarizationState,
    pbs_basis_angle: f64,
    rng: &mut R,
) -> (PbsPort, PolarizationState) {
    let p_plus = (photon.theta - pbs_basis_angle).cos().powi(2);
    let u: f64 = rng.random();
    if pick_index(&[p_plus, 1.0 - p_plus], u) == 0 {
        (PbsPort::Plus, PolarizationState::new(pbs_basis_angle))
    } else {
        (PbsPort::Minus, PolarizationState::new(pbs_basis_angle + std::f64::consts::FRAC_PI_2))
    }
}

// ---------------------------------------------------------------------------
// Two-photon beam splitter
// ---------------------------------------------------------------------------

/// Single-photon mode: path × polarization. Index = `2·path + pol`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    UpH,
    UpV,
    DownH,
    DownV,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::UpH, Mode::UpV, Mode::DownH, Mode::DownV];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_up(self) -> bool {
        matches!(self, Mode::UpH | Mode::UpV)
    }

    /// Normal-ordered display label, e.g. `H_u`.
    pub fn label(self) -> &'static str {
        match self {
            Mode::UpH => "H_u",
            Mode::UpV => "V_u",
            Mode::DownH => "H_d",
            Mode::DownV => "V_d",
        }
    }
}

fn two_photon_labels() -> Vec<String> {
    let short = ["uH", "uV", "dH", "dV"];
    let mut out = Vec::with_capacity(16);
    for a in short {
        for b in short {
            out.push(format!("{a},{b}"));
        }
    }
    out
}

/// Photon-exchange operator on the labelled two-photon space.
fn swap16() -> Matrix {
    Matrix::from_fn(16, |i, j| {
        let (a, b) = (j / 4, j % 4);
        if i == b * 4 + a {
            Complex::ONE
        } else {
            Complex::ZERO
        }
    })
}

/// Bosonic two-photon state with one photon entering on each side: the
/// first polarization factor of `pol_ud` rides the upper input, the second
/// the lower input. `pol_ud` is a 4-dim vector over `{HH, HV, VH, VV}`.
pub fn dual_rail_input(pol_ud: &StateVector) -> Result<StateVector> {
    if pol_ud.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, found: pol_ud.dim() });
    }
    let mut amps = vec![Complex::ZERO; 16];
    for pu in 0..2 {
        for pd in 0..2 {
            let m_up = pu; // UpH / UpV
            let m_down = 2 + pd;
            amps[m_up * 4 + m_down] = pol_ud.amplitudes()[pu * 2 + pd];
        }
    }
    let labelled = StateVector::with_labels(amps, two_photon_labels())?;
    symmetrize(&labelled)
}

/// Projection onto the exchange-symmetric subspace, renormalized.
pub fn symmetrize(v: &StateVector) -> Result<StateVector> {
    if v.dim() != 16 {
        return Err(Error::DimensionMismatch { expected: 16, found: v.dim() });
    }
    let swapped = crate::linalg::apply(&swap16(), v)?;
    v.add(&swapped)?
        .normalize()
        .map_err(|_| Error::InvalidState("state has no bosonic component".into()))
}

/// `U ⊗ U` where `U` mixes paths (`u → (u+d)/√2`, `d → (u−d)/√2`) and
/// leaves polarization untouched.
pub fn beamsplitter_unitary() -> &'static Matrix {
    static U: OnceLock<Matrix> = OnceLock::new();
    U.get_or_init(|| {
        let s = FRAC_1_SQRT_2;
        let path = Matrix::from_real_rows(&[vec![s, s], vec![s, -s]]);
        let single = path.kron(&Matrix::identity(2));
        Matrix::unitary(single.kron(&single)).expect("beam splitter is unitary")
    })
}

/// Applies the beam splitter to a two-photon dual-rail state. The input is
/// symmetrized first, so labelled (first-quantized) inputs are accepted.
pub fn beamsplitter_transform(in_state: &StateVector) -> Result<StateVector> {
    if !in_state.is_normalized(1e-8) {
        return Err(Error::InvalidState("beam splitter input must be normalized".into()));
    }
    let sym = symmetrize(in_state)?;
    crate::linalg::apply(beamsplitter_unitary(), &sym)
}

/// Where the two photons leave the beam splitter.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SideWeights {
    pub opposite: f64,
    pub both_up: f64,
    pub both_down: f64,
}

impl SideWeights {
    pub fn same_side(&self) -> f64 {
        self.both_up + self.both_down
    }
}

pub fn side_weights(out: &StateVector) -> SideWeights {
    let mut w = SideWeights::default();
    for (idx, amp) in out.amplitudes().iter().enumerate() {
        let (a, b) = (Mode::ALL[idx / 4], Mode::ALL[idx % 4]);
        let p = amp.norm_sqr();
        match (a.is_up(), b.is_up()) {
            (true, true) => w.both_up += p,
            (false, false) => w.both_down += p,
            _ => w.opposite += p,
        }
    }
    w
}

/// Probability of each normal-ordered mode occupation, e.g. `"H_u V_d"` or
/// `"V_u V_u"` for two photons in the same mode.
pub fn mode_occupancy(out: &StateVector) -> BTreeMap<String, f64> {
    let mut occ = BTreeMap::new();
    for (idx, amp) in out.amplitudes().iter().enumerate() {
        let (mut a, mut b) = (Mode::ALL[idx / 4], Mode::ALL[idx % 4]);
        if b < a {
            std::mem::swap(&mut a, &mut b);
        }
        let key = format!("{} {}", a.label(), b.label());
        *occ.entry(key).or_insert(0.0) += amp.norm_sqr();
    }
    occ.retain(|_, p| *p > ANALYTIC_TOL);
    occ
}

/// Draws the output modes of both photons with one uniform draw.
pub fn sample_modes<R: Rng + ?Sized>(out: &StateVector, rng: &mut R) -> Result<(Mode, Mode)> {
    if out.dim() != 16 {
        return Err(Error::DimensionMismatch { expected: 16, found: out.dim() });
    }
    let idx = pick_index(&out.probabilities(), rng.random::<f64>());
    Ok((Mode::ALL[idx / 4], Mode::ALL[idx % 4]))
}

/// Beam-splitter side weights for a Bell-state polarization input, cached.
pub fn bell_side_weights(kind: BellKind) -> SideWeights {
    static W: OnceLock<[SideWeights; 4]> = OnceLock::new();
    W.get_or_init(|| {
        BellKind::ALL.map(|k| {
            let input = dual_rail_input(&bell_vector(k)).expect("Bell input");
            side_weights(&beamsplitter_transform(&input).expect("normalized input"))
        })
    })[kind.index()]
}

// ---------------------------------------------------------------------------
// Mach-Zehnder interferometer
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MzConfig {
    Open,
    Closed,
}

impl MzConfig {
    pub fn label(self) -> &'static str {
        match self {
            MzConfig::Open => "open",
            MzConfig::Closed => "closed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MzDetector {
    Da,
    Db,
}

impl MzDetector {
    pub fn label(self) -> &'static str {
        match self {
            MzDetector::Da => "Da",
            MzDetector::Db => "Db",
        }
    }
}

/// Output amplitudes `[Da, Db]` for a photon entering on path `a`, with an
/// extra phase `delta` on path `b`. Reflection multiplies by `i`,
/// transmission by 1 (each with the `1/√2` splitting factor). The arm
/// mirrors reflect both paths and contribute only a global phase.
pub fn mach_zehnder_amplitudes(config: MzConfig, delta: f64) -> [Complex; 2] {
    let s = FRAC_1_SQRT_2;
    let t = re(s);
    let r = c(0.0, s);
    // after BS_in: path a transmitted, path b reflected
    let path_a = t;
    let path_b = r * Complex::from_polar(1.0, delta);
    match config {
        MzConfig::Open => [path_a, path_b],
        MzConfig::Closed => {
            // BS_out: a transmits to Da, reflects to Db; b transmits to Db,
            // reflects to Da.
            [path_a * t + path_b * r, path_a * r + path_b * t]
        }
    }
}

pub fn mach_zehnder_probabilities(config: MzConfig, delta: f64) -> [f64; 2] {
    mach_zehnder_amplitudes(config, delta).map(|z| z.norm_sqr())
}

/// One photon through the interferometer; one uniform draw.
pub fn mach_zehnder<R: Rng + ?Sized>(config: MzConfig, rng: &mut R) -> MzDetector {
    let p = mach_zehnder_probabilities(config, 0.0);
    let u: f64 = rng.random();
    if pick_index(&p, u) == 0 {
        MzDetector::Da
    } else {
        MzDetector::Db
    }
}

// ---------------------------------------------------------------------------
// Teleportation
// ---------------------------------------------------------------------------

/// Bob's unitary for each Bell outcome of particles 1–2:
/// `Ψ⁻` nothing, `Ψ⁺` flip the sign of `|+⟩`, `Φ⁻` swap `|+⟩ ↔ |−⟩`,
/// `Φ⁺` sign flip then swap.
pub fn bob_correction(kind: BellKind) -> Matrix {
    let flip_plus = Matrix::diag_real(&[-1.0, 1.0]);
    let swap = Matrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
    match kind {
        BellKind::PsiMinus => Matrix::identity(2),
        BellKind::PsiPlus => flip_plus,
        BellKind::PhiMinus => swap,
        BellKind::PhiPlus => swap.mul(&flip_plus),
    }
}

#[derive(Clone, Debug)]
pub struct TeleportOutcome {
    pub bell: BellKind,
    /// Particle 3 right after Alice's measurement.
    pub received: StateVector,
    /// Particle 3 after Bob's correction (or `received` if corrections are
    /// disabled).
    pub corrected: StateVector,
    pub fidelity: f64,
}

/// `|ψ⟩₁ ⊗ |Ψ⁻⟩₂₃` for `|ψ⟩₁ = α|+⟩ + β|−⟩`.
pub fn teleport_input(alpha: Complex, beta: Complex) -> Result<StateVector> {
    let norm = alpha.norm_sqr() + beta.norm_sqr();
    if (norm - 1.0).abs() > ANALYTIC_TOL {
        return Err(Error::InvalidInput(format!("|α|²+|β|² = {norm}, expected 1")));
    }
    Ok(tensor(&qubit(alpha, beta), &bell_vector(BellKind::PsiMinus)))
}

/// State of particle 3 given that particles 1–2 were found in `kind`
/// (contracts the three-particle vector with the Bell vector).
pub fn conditional_third(state: &StateVector, kind: BellKind) -> Result<StateVector> {
    if state.dim() != 8 {
        return Err(Error::DimensionMismatch { expected: 8, found: state.dim() });
    }
    let b = bell_vector(kind);
    let amps = (0..2)
        .map(|s| (0..4).map(|ab| b.amplitudes()[ab].conj() * state.amplitudes()[ab * 2 + s]).sum())
        .collect();
    Ok(StateVector::with_labels(amps, qubit_labels())?)
}

pub fn teleport<R: Rng + ?Sized>(alpha: Complex, beta: Complex, rng: &mut R) -> Result<TeleportOutcome> {
    teleport_with(alpha, beta, true, rng)
}

/// Full protocol: Bell measurement on 1–2 (one draw), optional correction,
/// fidelity `|⟨ψ_in|ψ₃⟩|²`.
pub fn teleport_with<R: Rng + ?Sized>(
    alpha: Complex,
    beta: Complex,
    apply_correction: bool,
    rng: &mut R,
) -> Result<TeleportOutcome> {
    let state = teleport_input(alpha, beta)?;
    let (k, post) = bell_measurement_12().sample(&state, rng)?;
    let bell = BellKind::ALL[k];
    let received = conditional_third(&post, bell)?.normalize()?;
    let corrected = if apply_correction {
        crate::linalg::apply(&bob_correction(bell), &received)?
    } else {
        received.clone()
    };
    let fidelity = inner(&qubit(alpha, beta), &corrected)?.norm_sqr();
    Ok(TeleportOutcome { bell, received, corrected, fidelity })
}
