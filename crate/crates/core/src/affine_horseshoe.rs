//! Standard affine horseshoes on the unit cube.
//!
//! Branch `j` acts on `Bⱼᵘ × Bˢ` by `z ↦ Az + vⱼ` with `A` diagonal and
//! positive. Coordinates are ordered strong unstable, centre, stable. The
//! unstable sub-rectangles are `Bⱼᵘ = (Aᵘ)⁻¹(Bᵘ − πᵘvⱼ)` and the stable ones
//! `Bⱼˢ = AˢBˢ + πˢvⱼ`, with `Bᵘ × Bˢ = [0,1]^d`.

use crate::error::{Error, Result};
use crate::interval::{box_intersects, box_subset, Interval};
use crate::seed::rng_for;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Containment and disjointness slack below which values are treated as
/// touching rather than violating.
pub const GEOMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearPart {
    pub d_uu: usize,
    pub d_c: usize,
    pub d_s: usize,
    /// Diagonal of `A = A_uu × A_c × A_s`.
    pub diag: Vec<f64>,
}

impl LinearPart {
    pub fn dim(&self) -> usize {
        self.d_uu + self.d_c + self.d_s
    }

    pub fn d_u(&self) -> usize {
        self.d_uu + self.d_c
    }

    pub fn unstable(&self) -> &[f64] {
        &self.diag[..self.d_u()]
    }

    pub fn stable(&self) -> &[f64] {
        &self.diag[self.d_u()..]
    }

    pub fn strong(&self) -> &[f64] {
        &self.diag[..self.d_uu]
    }

    pub fn center(&self) -> &[f64] {
        &self.diag[self.d_uu..self.d_u()]
    }

    fn check_shape(&self) -> Result<()> {
        if self.diag.len() != self.dim() || self.dim() == 0 {
            return Err(Error::InvalidModel {
                clause: format!("diag has {} entries, dimensions sum to {}", self.diag.len(), self.dim()),
            });
        }
        if self.diag.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidModel { clause: "diagonal entries must be positive and finite".into() });
        }
        Ok(())
    }

    /// `κ = min |log aᵢ|`.
    pub fn hyperbolicity_margin(&self) -> f64 {
        self.diag.iter().map(|a| a.ln().abs()).fold(f64::INFINITY, f64::min)
    }

    /// Largest contraction rate of `(Aᵘ)⁻¹` and of `Aˢ`.
    pub fn contraction_rates(&self) -> (f64, f64) {
        let lu = self.unstable().iter().map(|a| 1.0 / a).fold(0.0, f64::max);
        let ls = self.stable().iter().cloned().fold(0.0, f64::max);
        (lu, ls)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardAffineHorseshoe {
    #[serde(flatten)]
    pub linear: LinearPart,
    pub branches: Vec<BranchSpec>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub simple_spectrum: bool,
}

/// Map from the horseshoe cube `[0,1]` to the centred cube `[−1/2,1/2]`.
pub fn to_centered(z: f64) -> f64 {
    z - 0.5
}

pub fn from_centered(u: f64) -> f64 {
    u + 0.5
}

fn ival(x: f64) -> Interval {
    Interval::point(x)
}

fn inv(a: f64) -> Interval {
    ival(1.0) / ival(a)
}

impl StandardAffineHorseshoe {
    pub fn new(linear: LinearPart, branches: Vec<Vec<f64>>) -> StandardAffineHorseshoe {
        StandardAffineHorseshoe { linear, branches: branches.into_iter().map(|v| BranchSpec { v }).collect(), simple_spectrum: false }
    }

    pub fn dim(&self) -> usize {
        self.linear.dim()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn v(&self, j: usize) -> &[f64] {
        &self.branches[j].v
    }

    /// Smale model: `A = diag(4, 1/4)`, `v₀ = (0, 0)`, `v₁ = (−3, 3/4)`.
    pub fn smale() -> StandardAffineHorseshoe {
        Self::new(LinearPart { d_uu: 1, d_c: 0, d_s: 1, diag: vec![4.0, 0.25] }, vec![vec![0.0, 0.0], vec![-3.0, 0.75]])
    }

    /// Two branches in dimension 3 whose centre IFS is `u ↦ (2/3)u ∓ 1/6`.
    pub fn overlap_model() -> StandardAffineHorseshoe {
        Self::new(
            LinearPart { d_uu: 1, d_c: 1, d_s: 1, diag: vec![4.0, 1.5, 1.0 / 3.0] },
            vec![vec![-0.25, 0.0, 0.0], vec![-2.75, -0.5, 2.0 / 3.0]],
        )
    }

    /// Two branches in dimension 3 whose centre IFS is `u ↦ u/3 ∓ 1/3`.
    pub fn disjoint_model() -> StandardAffineHorseshoe {
        Self::new(
            LinearPart { d_uu: 1, d_c: 1, d_s: 1, diag: vec![4.0, 3.0, 1.0 / 3.0] },
            vec![vec![-0.25, 0.0, 0.0], vec![-2.75, -2.0, 2.0 / 3.0]],
        )
    }

    /// Overlap model with both branches sharing the centre translation.
    pub fn integrable_model() -> StandardAffineHorseshoe {
        Self::new(
            LinearPart { d_uu: 1, d_c: 1, d_s: 1, diag: vec![4.0, 1.5, 1.0 / 3.0] },
            vec![vec![-0.25, -0.25, 0.0], vec![-2.75, -0.25, 2.0 / 3.0]],
        )
    }

    /// `Bⱼᵘ`, outward rounded.
    pub fn unstable_rect(&self, j: usize) -> Vec<Interval> {
        let v = self.v(j);
        self.linear
            .unstable()
            .iter()
            .enumerate()
            .map(|(i, &a)| (Interval::new(0.0, 1.0) - ival(v[i])) * inv(a))
            .collect()
    }

    /// `Bⱼˢ`, outward rounded.
    pub fn stable_rect(&self, j: usize) -> Vec<Interval> {
        let du = self.linear.d_u();
        let v = self.v(j);
        self.linear.stable().iter().enumerate().map(|(i, &a)| Interval::new(0.0, a) + ival(v[du + i])).collect()
    }

    pub fn apply(&self, j: usize, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.linear.diag).zip(self.v(j)).map(|((x, a), v)| a * x + v).collect()
    }

    pub fn apply_inverse(&self, j: usize, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.linear.diag).zip(self.v(j)).map(|((x, a), v)| (x - v) / a).collect()
    }

    /// Branch whose domain `Bⱼᵘ × Bˢ` contains `z`.
    pub fn branch_of(&self, z: &[f64]) -> Option<usize> {
        let du = self.linear.d_u();
        (0..self.n_branches()).find(|&j| {
            self.unstable_rect(j).iter().zip(&z[..du]).all(|(iv, &x)| iv.contains(x))
                && z[du..].iter().all(|&x| (0.0..=1.0).contains(&x))
        })
    }
}

fn box_gap(a: &[Interval], b: &[Interval]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (y.lo - x.hi).max(x.lo - y.hi)).fold(f64::NEG_INFINITY, f64::max)
}

fn containment_slack(b: &[Interval]) -> f64 {
    b.iter().map(|x| x.lo.min(1.0 - x.hi)).fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// `min |log aᵢ|` over all diagonal entries.
    pub contraction_margin: f64,
    /// Minimal ∞-distance between distinct unstable (stable) sub-rectangles;
    /// `None` with a single branch.
    pub unstable_gap: Option<f64>,
    pub stable_gap: Option<f64>,
    /// Minimal distance from a sub-rectangle to the cube boundary.
    pub unstable_slack: f64,
    pub stable_slack: f64,
    pub strictly_interior: bool,
    /// `min A_uu − max A_c`, when there is a centre.
    pub domination_margin: Option<f64>,
    pub simple_spectrum: bool,
}

pub fn validate(h: &StandardAffineHorseshoe) -> Result<ValidationReport> {
    let lin = &h.linear;
    lin.check_shape()?;
    if h.branches.is_empty() {
        return Err(Error::InvalidModel { clause: "no branches".into() });
    }
    if let Some(j) = h.branches.iter().position(|b| b.v.len() != lin.dim()) {
        return Err(Error::InvalidModel { clause: format!("branch {j} translation has wrong dimension") });
    }
    let margin_u = lin.unstable().iter().map(|a| a.ln()).fold(f64::INFINITY, f64::min);
    let margin_s = lin.stable().iter().map(|a| -a.ln()).fold(f64::INFINITY, f64::min);
    if margin_u <= 0.0 {
        return Err(Error::InvalidModel { clause: format!("contraction of (A^u)^-1: margin {margin_u:.6}") });
    }
    if margin_s <= 0.0 {
        return Err(Error::InvalidModel { clause: format!("contraction of A^s: margin {margin_s:.6}") });
    }
    let domination_margin = (lin.d_c > 0 && lin.d_uu > 0).then(|| {
        lin.strong().iter().cloned().fold(f64::INFINITY, f64::min) - lin.center().iter().cloned().fold(0.0, f64::max)
    });
    if let Some(m) = domination_margin {
        if m <= 0.0 {
            return Err(Error::InvalidModel { clause: format!("domination of A_c by A_uu: margin {m:.6}") });
        }
    }
    let ur: Vec<_> = (0..h.n_branches()).map(|j| h.unstable_rect(j)).collect();
    let sr: Vec<_> = (0..h.n_branches()).map(|j| h.stable_rect(j)).collect();
    let unstable_slack = ur.iter().map(|b| containment_slack(b)).fold(f64::INFINITY, f64::min);
    let stable_slack = if lin.d_s == 0 { f64::INFINITY } else { sr.iter().map(|b| containment_slack(b)).fold(f64::INFINITY, f64::min) };
    if unstable_slack < -GEOMETRY_TOL {
        return Err(Error::InvalidModel { clause: format!("containment of unstable sub-rectangles: slack {unstable_slack:.6}") });
    }
    if stable_slack < -GEOMETRY_TOL {
        return Err(Error::InvalidModel { clause: format!("containment of stable sub-rectangles: slack {stable_slack:.6}") });
    }
    let mut unstable_gap: Option<f64> = None;
    let mut stable_gap: Option<f64> = None;
    for i in 0..ur.len() {
        for j in i + 1..ur.len() {
            let gu = box_gap(&ur[i], &ur[j]);
            unstable_gap = Some(unstable_gap.map_or(gu, |g| g.min(gu)));
            if lin.d_s > 0 {
                let gs = box_gap(&sr[i], &sr[j]);
                stable_gap = Some(stable_gap.map_or(gs, |g| g.min(gs)));
            }
        }
    }
    if let Some(g) = unstable_gap.filter(|&g| g <= GEOMETRY_TOL) {
        return Err(Error::InvalidModel { clause: format!("disjointness of unstable sub-rectangles: gap {g:.6}") });
    }
    if let Some(g) = stable_gap.filter(|&g| g <= GEOMETRY_TOL) {
        return Err(Error::InvalidModel { clause: format!("disjointness of stable sub-rectangles: gap {g:.6}") });
    }
    let mut sorted = lin.diag.clone();
    sorted.sort_by(f64::total_cmp);
    let distinct = sorted.windows(2).all(|w| w[0] != w[1]);
    if h.simple_spectrum && !distinct {
        return Err(Error::InvalidModel { clause: "simple spectrum: diagonal entries are not distinct".into() });
    }
    Ok(ValidationReport {
        contraction_margin: lin.hyperbolicity_margin(),
        unstable_gap,
        stable_gap,
        unstable_slack,
        stable_slack,
        strictly_interior: unstable_slack > GEOMETRY_TOL && stable_slack > GEOMETRY_TOL,
        domination_margin,
        simple_spectrum: distinct,
    })
}

/// Finite window `[lo, hi]` of a bi-infinite branch sequence, `lo < 0 ≤ hi`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Itinerary {
    pub lo: i64,
    pub symbols: Vec<usize>,
}

impl Itinerary {
    pub fn new(lo: i64, symbols: Vec<usize>) -> Result<Itinerary> {
        let hi = lo + symbols.len() as i64 - 1;
        if lo > -1 || hi < 0 {
            return Err(Error::InvalidInput(format!("window [{lo}, {hi}] must contain −1 and 0")));
        }
        Ok(Itinerary { lo, symbols })
    }

    /// Window `[−w, w]` filled from `f`.
    pub fn symmetric(w: usize, f: impl Fn(i64) -> usize) -> Itinerary {
        let w = w.max(1) as i64;
        Itinerary { lo: -w, symbols: (-w..=w).map(f).collect() }
    }

    /// Constant sequence on `[−w, w]`.
    pub fn constant(w: usize, j: usize) -> Itinerary {
        Self::symmetric(w, |_| j)
    }

    /// Periodic sequence with `p[0]` at time 0.
    pub fn periodic(w: usize, p: &[usize]) -> Itinerary {
        let n = p.len() as i64;
        Self::symmetric(w, |i| p[i.rem_euclid(n) as usize])
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.symbols.len() as i64 - 1
    }

    pub fn at(&self, i: i64) -> usize {
        self.symbols[(i - self.lo) as usize]
    }

    /// `σw`: time `i` of the result reads time `i + 1`.
    pub fn shift(&self) -> Itinerary {
        Itinerary { lo: self.lo - 1, symbols: self.symbols.clone() }
    }

    pub fn forward_len(&self) -> usize {
        (self.hi() + 1) as usize
    }

    pub fn backward_len(&self) -> usize {
        (-self.lo) as usize
    }

    pub fn random<R: Rng>(rng: &mut R, w: usize, n_branches: usize) -> Itinerary {
        let w = w.max(1) as i64;
        Itinerary { lo: -w, symbols: (-w..=w).map(|_| rng.random_range(0..n_branches)).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodedPoint {
    pub coords: Vec<f64>,
    /// ∞-norm bound on the distance to the point of any bi-infinite sequence
    /// extending the window.
    pub error_bound: f64,
}

/// Coding map. The unstable coordinates are fixed by the forward symbols
/// (nested contractions `Tⱼ = (Aᵘ)⁻¹(· − πᵘvⱼ)`), the stable ones by the
/// backward symbols (`Sⱼ = Aˢ · + πˢvⱼ`). Unknown tails are replaced by the
/// cube centre.
pub fn point_from_itinerary(h: &StandardAffineHorseshoe, it: &Itinerary) -> CodedPoint {
    let lin = &h.linear;
    let du = lin.d_u();
    let mut z = vec![0.5; lin.dim()];
    for t in (0..=it.hi()).rev() {
        let v = h.v(it.at(t));
        for i in 0..du {
            z[i] = (z[i] - v[i]) / lin.diag[i];
        }
    }
    for t in it.lo..0 {
        let v = h.v(it.at(t));
        for i in du..lin.dim() {
            z[i] = lin.diag[i] * z[i] + v[i];
        }
    }
    let (lu, ls) = lin.contraction_rates();
    let eu = if du > 0 { 0.5 * lu.powi(it.forward_len() as i32) } else { 0.0 };
    let es = if lin.d_s > 0 { 0.5 * ls.powi(it.backward_len() as i32) } else { 0.0 };
    CodedPoint { coords: z, error_bound: eu.max(es) * (1.0 + 1e-12) + 4.0 * f64::EPSILON }
}

/// Forward branch sequence of `z` for `n` steps, stopping at the first exit.
pub fn read_itinerary(h: &StandardAffineHorseshoe, z: &[f64], n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let mut x = z.to_vec();
    for _ in 0..n {
        match h.branch_of(&x) {
            Some(j) => {
                out.push(j);
                x = h.apply(j, &x);
            }
            None => break,
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Distinct exponents, descending, with multiplicities.
    pub exponents: Vec<(f64, usize)>,
    pub chi_u_inf: f64,
    pub chi_u_max: f64,
    /// `log Jac_{Eᵘ}(A)`, the sum of the positive exponents.
    pub log_jac_u: f64,
    pub log_det_uu: f64,
    pub log_det_c: f64,
}

pub fn lyapunov_spectrum(lin: &LinearPart) -> Result<Spectrum> {
    lin.check_shape()?;
    let mut logs: Vec<f64> = lin.diag.iter().map(|a| a.ln()).collect();
    logs.sort_by(|a, b| b.total_cmp(a));
    let mut exponents: Vec<(f64, usize)> = Vec::new();
    for x in logs {
        match exponents.last_mut() {
            Some((y, m)) if *y == x => *m += 1,
            _ => exponents.push((x, 1)),
        }
    }
    let pos: Vec<f64> = lin.unstable().iter().map(|a| a.ln()).collect();
    if pos.iter().any(|&x| x <= 0.0) || pos.is_empty() {
        return Err(Error::InvalidModel { clause: "unstable block has a non-positive exponent".into() });
    }
    Ok(Spectrum {
        exponents,
        chi_u_inf: pos.iter().cloned().fold(f64::INFINITY, f64::min),
        chi_u_max: pos.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        log_jac_u: pos.iter().sum(),
        log_det_uu: lin.strong().iter().map(|a| a.ln()).sum(),
        log_det_c: lin.center().iter().map(|a| a.ln()).sum(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub h_top: f64,
    pub k: u32,
    /// `h_top − (log Jac_{Eᵘ} − χᵘ_inf/(2k))`.
    pub eq4_margin: f64,
    pub eq4_ok: bool,
    /// Open interval of admissible `c` and the returned midpoint.
    pub c_interval: (f64, f64),
    pub c: f64,
    /// `χᵘ_inf − c·k·χᵘ_max`.
    pub eq22_margin: f64,
    pub eq22_ok: bool,
    /// `h_top − log|det A|_{Eᵘ}| + (c/2)·χᵘ_max`.
    pub eq23_margin: f64,
    pub eq23_ok: bool,
    /// `log H − log|det A|_{Eᵘ}| + (c/2)·log β`, with `H` the branch count
    /// minus one and `β = |det A_uu|`.
    pub eq24_margin: f64,
    pub eq24_ok: bool,
    /// `2 log(JH) − (2 − c) log β`, the equivalent counting form.
    pub counting_margin: f64,
}

/// Entropy inequality and the choice of `c`. `h_top` defaults to
/// `log(branches)`.
pub fn blender_entropy_hypothesis(lin: &LinearPart, n_branches: usize, k: u32, h_top: Option<f64>) -> Result<HypothesisReport> {
    if k == 0 || n_branches == 0 {
        return Err(Error::InvalidInput("need k ≥ 1 and at least one branch".into()));
    }
    let sp = lyapunov_spectrum(lin)?;
    let h = h_top.unwrap_or((n_branches as f64).ln());
    let kf = k as f64;
    let eq4_margin = h - (sp.log_jac_u - sp.chi_u_inf / (2.0 * kf));
    if eq4_margin <= 0.0 {
        return Err(Error::HypothesisFails { which: "eq4".into(), margin: eq4_margin });
    }
    let c_hi = (sp.chi_u_inf / (kf * sp.chi_u_max)).min(1.0);
    let c_lo = (2.0 * (sp.log_jac_u - h) / sp.chi_u_max).max(0.0);
    if c_lo >= c_hi {
        return Err(Error::HypothesisFails { which: "eq22-eq23".into(), margin: c_hi - c_lo });
    }
    let c = 0.5 * (c_lo + c_hi);
    let eq22_margin = sp.chi_u_inf - c * kf * sp.chi_u_max;
    let eq23_margin = h - sp.log_jac_u + 0.5 * c * sp.chi_u_max;
    let big_h = (n_branches - 1) as f64;
    let log_beta = sp.log_det_uu;
    let eq24_margin = big_h.ln() - sp.log_jac_u + 0.5 * c * log_beta;
    let log_j = -sp.log_det_c;
    let counting_margin = 2.0 * (log_j + big_h.ln()) - (2.0 - c) * log_beta;
    Ok(HypothesisReport {
        h_top: h,
        k,
        eq4_margin,
        eq4_ok: true,
        c_interval: (c_lo, c_hi),
        c,
        eq22_margin,
        eq22_ok: eq22_margin > 0.0,
        eq23_margin,
        eq23_ok: eq23_margin > 0.0,
        eq24_margin,
        eq24_ok: eq24_margin > 0.0,
        counting_margin,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaqueHitReport {
    pub n: usize,
    pub beta: f64,
    pub bound: u64,
    pub max_count: u64,
    pub exhaustive: bool,
}

/// Largest number of depth-`n` centre compositions whose image contains a
/// point, against `⌈βⁿ⌉` with `β = |det A_uu|`.
pub fn plaque_hit_bound_check(h: &StandardAffineHorseshoe, n: usize, samples: usize, seed: u64) -> Result<PlaqueHitReport> {
    validate(h)?;
    let ifs = crate::ifs_blender::extract_center_ifs(h)?;
    let beta = h.linear.strong().iter().product::<f64>();
    let (max_count, exhaustive) = crate::ifs_blender::max_image_count(&ifs, None, n, samples, seed)?;
    let bound = (beta.powi(n as i32) * (1.0 + 1e-12)).ceil() as u64;
    if max_count > bound {
        return Err(Error::BoundViolated { count: max_count, bound });
    }
    Ok(PlaqueHitReport { n, beta, bound, max_count, exhaustive })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterKind {
    Essential,
    JointlyIntegrable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EssentialReport {
    pub kind: CenterKind,
    pub diameter: f64,
}

/// Diameter of the centre attractor, `(max vⱼ − min vⱼ)/(1 − L)`.
pub fn essential_center_test(h: &StandardAffineHorseshoe, tol: f64) -> Result<EssentialReport> {
    if h.linear.d_c != 1 {
        return Err(Error::UnsupportedDimension(format!("essential centre test needs d_c = 1, got {}", h.linear.d_c)));
    }
    validate(h)?;
    let ifs = crate::ifs_blender::extract_center_ifs(h)?;
    let l = ifs.contraction[0];
    let ts: Vec<f64> = ifs.translations.iter().map(|v| v[0]).collect();
    let spread = ts.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ts.iter().cloned().fold(f64::INFINITY, f64::min);
    let diameter = spread / (1.0 - l);
    let kind = if diameter < tol { CenterKind::JointlyIntegrable } else { CenterKind::Essential };
    Ok(EssentialReport { kind, diameter })
}

/// Cylinder of a forward word in the unstable slice: `T_w(Bᵘ)` stored as a
/// per-coordinate affine map `s·z + t` with interval coefficients.
#[derive(Clone)]
struct Cell {
    s: Vec<Interval>,
    t: Vec<Interval>,
    weight: f64,
}

impl Cell {
    fn bbox(&self) -> Vec<Interval> {
        self.s.iter().zip(&self.t).map(|(s, t)| *s * Interval::new(0.0, 1.0) + *t).collect()
    }
}

/// Options for ball masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassOptions {
    /// Stop when `hi − lo ≤ resolution · max(hi, floor)`.
    pub resolution: f64,
    pub floor: f64,
    pub max_cells: usize,
    pub max_depth: usize,
    /// Branch weights; uniform when `None`.
    pub weights: Option<Vec<f64>>,
}

impl Default for MassOptions {
    fn default() -> Self {
        MassOptions { resolution: 1e-2, floor: 1e-6, max_cells: 2_000_000, max_depth: 200, weights: None }
    }
}

/// `μᵘ(Wᵘ(x, r))` for `x = π(base)`, with balls in the ∞-norm on the
/// unstable coordinates. The slice is the attractor of the `Tⱼ` and `μᵘ` the
/// self-similar measure with the branch weights.
pub fn unstable_ball_mass(h: &StandardAffineHorseshoe, base: &Itinerary, r: f64, opts: &MassOptions) -> Result<Interval> {
    if !(r >= 0.0) {
        return Err(Error::InvalidInput("radius must be nonnegative".into()));
    }
    if r == 0.0 {
        return Ok(Interval::point(0.0));
    }
    let lin = &h.linear;
    let du = lin.d_u();
    let nb = h.n_branches();
    let weights = opts.weights.clone().unwrap_or_else(|| vec![1.0 / nb as f64; nb]);
    if weights.len() != nb {
        return Err(Error::InvalidInput("weights do not match branches".into()));
    }
    let p = point_from_itinerary(h, base);
    let e = p.error_bound;
    let outer: Vec<Interval> =
        p.coords[..du].iter().map(|&x| Interval::new(crate::interval::down(x - r - e), crate::interval::up(x + r + e))).collect();
    let inner: Option<Vec<Interval>> = (r > e)
        .then(|| p.coords[..du].iter().map(|&x| (crate::interval::up(x - r + e), crate::interval::down(x + r - e))).collect::<Vec<_>>())
        .filter(|v: &Vec<(f64, f64)>| v.iter().all(|(a, b)| a <= b))
        .map(|v| v.into_iter().map(|(a, b)| Interval::new(a, b)).collect());
    let maps: Vec<(Vec<Interval>, Vec<Interval>)> = (0..nb)
        .map(|j| {
            let sc: Vec<Interval> = lin.unstable().iter().map(|&a| inv(a)).collect();
            let tr: Vec<Interval> = (0..du).map(|i| -ival(h.v(j)[i]) * inv(lin.diag[i])).collect();
            (sc, tr)
        })
        .collect();
    let mut frontier = vec![Cell { s: vec![ival(1.0); du], t: vec![ival(0.0); du], weight: 1.0 }];
    let mut lo = 0.0;
    for _depth in 0..=opts.max_depth {
        let mut boundary = Vec::new();
        let mut bw = 0.0;
        for c in frontier {
            let bb = c.bbox();
            if inner.as_ref().is_some_and(|ib| box_subset(&bb, ib)) {
                lo += c.weight;
            } else if box_intersects(&bb, &outer) {
                bw += c.weight;
                boundary.push(c);
            }
        }
        let hi = lo + bw;
        if bw <= opts.resolution * hi.max(opts.floor) {
            return Ok(Interval::new(lo, hi.min(1.0).max(lo)));
        }
        if boundary.len() * nb > opts.max_cells {
            return Err(Error::ResolutionExceeded(format!("{} boundary cells, mass in [{lo:.3e}, {hi:.3e}]", boundary.len())));
        }
        frontier = Vec::with_capacity(boundary.len() * nb);
        for c in boundary {
            for (j, (sc, tr)) in maps.iter().enumerate() {
                // T_w ∘ T_j: s' = s·sc, t' = s·tr + t.
                let s: Vec<Interval> = c.s.iter().zip(sc).map(|(a, b)| *a * *b).collect();
                let t: Vec<Interval> = c.s.iter().zip(tr).zip(&c.t).map(|((a, b), t0)| *a * *b + *t0).collect();
                frontier.push(Cell { s, t, weight: c.weight * weights[j] });
            }
        }
    }
    Err(Error::ResolutionExceeded(format!("depth cap {} reached", opts.max_depth)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DoublingResult {
    /// Every check `hi(μᵘ(ηr)) < ½·lo(μᵘ(r))` held; `worst_ratio` is the
    /// largest `hi/lo` seen.
    Certified { rho: f64, eta: f64, worst_ratio: f64, checks: usize },
    BestFailure { rho: f64, eta: f64, worst_ratio: f64 },
}

/// Radii tested for a given `ρ`: `ρ·2^{−i/4}`, `i = 1..=n_radii`.
pub fn doubling_radii(rho: f64, n_radii: usize) -> Vec<f64> {
    (1..=n_radii).map(|i| rho * 2f64.powf(-(i as f64) / 4.0)).collect()
}

/// Search `(ρ, η)` on the grids, in grid order, for the reverse doubling
/// inequality at `samples` seeded points of `Λ`.
pub fn reverse_doubling_search(
    h: &StandardAffineHorseshoe,
    rho_grid: &[f64],
    eta_grid: &[f64],
    samples: usize,
    n_radii: usize,
    seed: u64,
    opts: &MassOptions,
) -> Result<DoublingResult> {
    let ess = essential_center_test(h, 1e-12)?;
    if ess.kind != CenterKind::Essential {
        return Err(Error::PreconditionFailed("centre is jointly integrable (attractor diameter 0)".into()));
    }
    if rho_grid.is_empty() || eta_grid.is_empty() || samples == 0 {
        return Err(Error::InvalidInput("empty grid or no samples".into()));
    }
    let points: Vec<Itinerary> = (0..samples)
        .map(|i| {
            let mut rng = rng_for(seed, "reverse-doubling", i as u64);
            Itinerary::random(&mut rng, 60, h.n_branches())
        })
        .collect();
    let mut best: Option<(f64, f64, f64)> = None;
    for &rho in rho_grid {
        for &eta in eta_grid {
            let radii = doubling_radii(rho, n_radii);
            let ratios: Vec<Result<f64>> = points
                .par_iter()
                .flat_map_iter(|x| radii.iter().map(move |&r| (x, r)))
                .map(|(x, r)| {
                    let big = unstable_ball_mass(h, x, r, opts)?;
                    let small = unstable_ball_mass(h, x, eta * r, opts)?;
                    Ok(if big.lo > 0.0 { small.hi / big.lo } else { f64::INFINITY })
                })
                .collect();
            let mut worst = 0.0f64;
            for r in ratios {
                worst = worst.max(r?);
            }
            if worst < 0.5 {
                return Ok(DoublingResult::Certified { rho, eta, worst_ratio: worst, checks: samples * n_radii });
            }
            if best.is_none_or(|b| worst < b.2) {
                best = Some((rho, eta, worst));
            }
        }
    }
    let (rho, eta, worst_ratio) = best.expect("grids are nonempty");
    Ok(DoublingResult::BestFailure { rho, eta, worst_ratio })
}
