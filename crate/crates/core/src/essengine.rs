//! Local elementary-state model: spin-½ particles carry a two-coloured
//! sphere of predetermined outcomes, photons carry a table of predetermined
//! H/V outcomes per polarizer basis, and an interferometer photon is a kern
//! riding one path with a dark field spanning all open paths.
//!
//! Colours and table entries are sampled lazily: the first query of a
//! direction draws from the Born marginal of the particle's current
//! preparation and is memoized. A fresh draw repaints the record (all
//! other entries are discarded) and re-prepares the particle along the
//! measured axis. A linked partner receives the opposite value at the same
//! axis and is re-prepared antiparallel; its other entries are kept.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;

use crate::error::{Error, Result};
use crate::qmengine::{MzConfig, MzDetector};

const QUANTUM: f64 = 1e-9;

fn quantize(x: f64) -> i64 {
    (x / QUANTUM).round() as i64
}

// ---------------------------------------------------------------------------
// Spheres
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Color {
    Black,
    White,
}

impl Color {
    pub fn opposite(self) -> Color {
        match self {
            Color::Black => Color::White,
            Color::White => Color::Black,
        }
    }

    /// Black is `+½`, white is `−½`.
    pub fn spin(self) -> f64 {
        match self {
            Color::Black => 0.5,
            Color::White => -0.5,
        }
    }

    fn sign(self) -> f64 {
        2.0 * self.spin()
    }
}

/// Quantized direction shared by `n` and `−n`; `flipped` is set when the
/// queried vector points opposite to the key direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AxisKey([i64; 3]);

fn unit(v: [f64; 3]) -> Result<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(n > QUANTUM) || !n.is_finite() {
        return Err(Error::InvalidInput(format!("axis {v:?} is not a direction")));
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

pub fn canonical_axis(n: [f64; 3]) -> Result<(AxisKey, bool)> {
    let u = unit(n)?;
    let q = u.map(quantize);
    let first = q.iter().copied().find(|&x| x != 0).unwrap_or(0);
    if first < 0 {
        Ok((AxisKey(q.map(|x| -x)), true))
    } else {
        Ok((AxisKey(q), false))
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Clone, Debug, Default)]
pub struct ElementaryStateSphere {
    /// Colour of the key direction (the antipode is implicitly opposite).
    memo: BTreeMap<AxisKey, Color>,
    preparation: Option<[f64; 3]>,
    partner: Option<usize>,
}

impl ElementaryStateSphere {
    pub fn unprepared() -> Self {
        Self::default()
    }

    /// Pure state polarized along `m` (black at `m`).
    pub fn prepared(m: [f64; 3]) -> Result<Self> {
        let m = unit(m)?;
        let mut s = Self { preparation: Some(m), ..Self::default() };
        s.insert(m, Color::Black)?;
        Ok(s)
    }

    pub fn preparation(&self) -> Option<[f64; 3]> {
        self.preparation
    }

    pub fn partner(&self) -> Option<usize> {
        self.partner
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }

    /// Memoized colour at `n`, if any.
    pub fn color_at(&self, n: [f64; 3]) -> Result<Option<Color>> {
        let (key, flipped) = canonical_axis(n)?;
        Ok(self.memo.get(&key).map(|&c| if flipped { c.opposite() } else { c }))
    }

    fn insert(&mut self, n: [f64; 3], color: Color) -> Result<()> {
        let (key, flipped) = canonical_axis(n)?;
        self.memo.insert(key, if flipped { color.opposite() } else { color });
        Ok(())
    }

    fn p_black(&self, n: [f64; 3]) -> f64 {
        self.preparation.map_or(0.5, |m| ((1.0 + dot(m, n)) / 2.0).clamp(0.0, 1.0))
    }

    /// Every memoized key is in canonical orientation, so a direction and
    /// its antipode always resolve to one entry with opposite colours.
    pub fn antipodal_consistent(&self) -> bool {
        self.memo.keys().all(|k| k.0.iter().copied().find(|&x| x != 0).is_some_and(|x| x > 0))
    }
}

/// A collection of spheres, some linked as singlet partners.
#[derive(Clone, Debug, Default)]
pub struct SphereSystem {
    spheres: Vec<ElementaryStateSphere>,
}

impl SphereSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, sphere: ElementaryStateSphere) -> usize {
        self.spheres.push(sphere);
        self.spheres.len() - 1
    }

    /// Two unprepared spheres linked as a singlet pair.
    pub fn add_singlet(&mut self) -> (usize, usize) {
        let a = self.add(ElementaryStateSphere::unprepared());
        let b = self.add(ElementaryStateSphere::unprepared());
        self.spheres[a].partner = Some(b);
        self.spheres[b].partner = Some(a);
        (a, b)
    }

    pub fn sphere(&self, id: usize) -> &ElementaryStateSphere {
        &self.spheres[id]
    }

    /// For every direction memoized on both members of a linked pair, the
    /// colours are opposite.
    pub fn pairing_consistent(&self) -> bool {
        self.spheres.iter().all(|s| {
            let Some(p) = s.partner else { return true };
            let other = &self.spheres[p];
            s.memo.iter().all(|(k, c)| other.memo.get(k).is_none_or(|o| *o == c.opposite()))
        })
    }
}

/// Spin projection of sphere `id` on `axis` in units of ħ (`±½`).
pub fn ess_measure<R: Rng + ?Sized>(
    system: &mut SphereSystem,
    id: usize,
    axis: [f64; 3],
    rng: &mut R,
) -> Result<f64> {
    let n = unit(axis)?;
    if let Some(c) = system.spheres[id].color_at(n)? {
        return Ok(c.spin());
    }
    let sphere = &mut system.spheres[id];
    let u: f64 = rng.random();
    let color = if u < sphere.p_black(n) { Color::Black } else { Color::White };
    sphere.memo.clear();
    sphere.insert(n, color)?;
    let sign = color.sign();
    sphere.preparation = Some(n.map(|x| sign * x));
    if let Some(p) = sphere.partner {
        let partner = &mut system.spheres[p];
        partner.insert(n, color.opposite())?;
        partner.preparation = Some(n.map(|x| -sign * x));
    }
    Ok(color.spin())
}

// ---------------------------------------------------------------------------
// Photon tables
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Hv {
    H,
    V,
}

impl Hv {
    pub fn opposite(self) -> Hv {
        match self {
            Hv::H => Hv::V,
            Hv::V => Hv::H,
        }
    }
}

/// Basis `b + 90°` is basis `b` with H and V exchanged, so keys live in
/// `[0, π/2)` and carry a swap flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisKey(i64);

pub fn canonical_basis(angle: f64) -> (BasisKey, bool) {
    let a = angle.rem_euclid(PI);
    let mut q = quantize(a);
    let half = quantize(FRAC_PI_2);
    let full = quantize(PI);
    if q >= full {
        q -= full;
    }
    if q >= half {
        (BasisKey(q - half), true)
    } else {
        (BasisKey(q), false)
    }
}

#[derive(Clone, Debug, Default)]
pub struct PhotonHvTable {
    memo: BTreeMap<BasisKey, Hv>,
    preparation: Option<f64>,
    partner: Option<usize>,
}

impl PhotonHvTable {
    pub fn unprepared() -> Self {
        Self::default()
    }

    /// Linearly polarized at `theta` (H in the basis at `theta`).
    pub fn polarized(theta: f64) -> Self {
        let mut t = Self { preparation: Some(theta.rem_euclid(PI)), ..Self::default() };
        t.insert(theta, Hv::H);
        t
    }

    pub fn preparation(&self) -> Option<f64> {
        self.preparation
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }

    pub fn outcome_at(&self, basis: f64) -> Option<Hv> {
        let (key, swapped) = canonical_basis(basis);
        self.memo.get(&key).map(|&o| if swapped { o.opposite() } else { o })
    }

    fn insert(&mut self, basis: f64, outcome: Hv) {
        let (key, swapped) = canonical_basis(basis);
        self.memo.insert(key, if swapped { outcome.opposite() } else { outcome });
    }

    fn p_h(&self, basis: f64) -> f64 {
        self.preparation.map_or(0.5, |t| (t - basis).cos().powi(2))
    }
}

fn axis_of(basis: f64, outcome: Hv) -> f64 {
    match outcome {
        Hv::H => basis.rem_euclid(PI),
        Hv::V => (basis + FRAC_PI_2).rem_euclid(PI),
    }
}

#[derive(Clone, Debug, Default)]
pub struct PhotonSystem {
    photons: Vec<PhotonHvTable>,
}

impl PhotonSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, table: PhotonHvTable) -> usize {
        self.photons.push(table);
        self.photons.len() - 1
    }

    /// Two unprepared photons linked as an EPR pair (opposite at every basis).
    pub fn add_epr_pair(&mut self) -> (usize, usize) {
        let a = self.add(PhotonHvTable::unprepared());
        let b = self.add(PhotonHvTable::unprepared());
        self.photons[a].partner = Some(b);
        self.photons[b].partner = Some(a);
        (a, b)
    }

    pub fn photon(&self, id: usize) -> &PhotonHvTable {
        &self.photons[id]
    }

    pub fn pairing_consistent(&self) -> bool {
        self.photons.iter().all(|t| {
            let Some(p) = t.partner else { return true };
            let other = &self.photons[p];
            t.memo.iter().all(|(k, o)| other.memo.get(k).is_none_or(|x| *x == o.opposite()))
        })
    }
}

/// Predetermined outcome of photon `id` at a polarizer basis.
pub fn photon_hv<R: Rng + ?Sized>(system: &mut PhotonSystem, id: usize, basis: f64, rng: &mut R) -> Hv {
    if let Some(o) = system.photons[id].outcome_at(basis) {
        return o;
    }
    let table = &mut system.photons[id];
    let u: f64 = rng.random();
    let outcome = if u < table.p_h(basis) { Hv::H } else { Hv::V };
    table.memo.clear();
    table.insert(basis, outcome);
    table.preparation = Some(axis_of(basis, outcome));
    if let Some(p) = table.partner {
        let partner = &mut system.photons[p];
        partner.insert(basis, outcome.opposite());
        partner.preparation = Some(axis_of(basis, outcome.opposite()));
    }
    outcome
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Up,
    Down,
}

fn fair_side<R: Rng + ?Sized>(rng: &mut R) -> Side {
    if rng.random::<f64>() < 0.5 {
        Side::Up
    } else {
        Side::Down
    }
}

/// Two photons arriving together at a beam splitter. Equal predetermined
/// outcomes in the splitter basis leave together on one fairly drawn side;
/// different outcomes route independently.
pub fn ess_bs_route<R: Rng + ?Sized>(
    system: &mut PhotonSystem,
    p1: usize,
    p2: usize,
    bs_basis: f64,
    rng: &mut R,
) -> (Side, Side) {
    let o1 = photon_hv(system, p1, bs_basis, rng);
    let o2 = photon_hv(system, p2, bs_basis, rng);
    if o1 == o2 {
        let side = fair_side(rng);
        (side, side)
    } else {
        (fair_side(rng), fair_side(rng))
    }
}

/// Independent single-photon routing (no table queries).
pub fn ess_route_single<R: Rng + ?Sized>(rng: &mut R) -> Side {
    fair_side(rng)
}

// ---------------------------------------------------------------------------
// Kern and dark field
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArmPath {
    A,
    B,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernDarkField {
    pub kern_path: ArmPath,
    pub dark_field_paths: Vec<ArmPath>,
    pub coherent: bool,
}

impl KernDarkField {
    /// Kern on one arm; the coherent dark field fills both arms.
    pub fn split<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let kern_path = if rng.random::<f64>() < 0.5 { ArmPath::A } else { ArmPath::B };
        Self { kern_path, dark_field_paths: vec![ArmPath::A, ArmPath::B], coherent: true }
    }

    pub fn is_consistent(&self) -> bool {
        self.dark_field_paths.contains(&self.kern_path)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DecisionTime {
    BeforeEntry,
    AfterEntry,
}

impl DecisionTime {
    pub fn label(self) -> &'static str {
        match self {
            DecisionTime::BeforeEntry => "before_entry",
            DecisionTime::AfterEntry => "after_entry",
        }
    }
}

/// One photon through the interferometer. With the exit splitter in place
/// the recombined dark field steers the kern to `Db`; without it the kern's
/// arm decides. The decision time is not consulted.
pub fn ess_mach_zehnder<R: Rng + ?Sized>(config: MzConfig, _decision_time: DecisionTime, rng: &mut R) -> MzDetector {
    let field = KernDarkField::split(rng);
    match config {
        MzConfig::Closed if field.coherent => MzDetector::Db,
        _ => match field.kern_path {
            ArmPath::A => MzDetector::Da,
            ArmPath::B => MzDetector::Db,
        },
    }
}
