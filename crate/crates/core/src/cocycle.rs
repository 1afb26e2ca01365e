//! Locally constant linear cocycles over subshifts of finite type.
//!
//! `A(x)` depends on the coordinates `x_l … x_r` of the base point, with
//! `l ≤ 0 ≤ r`. Matrix norms are operator 2-norms.

use crate::error::{Error, Result};
use crate::seed::rng_for;
pub use crate::subshift::SymbolicPoint;
use crate::subshift::{admissible_words, ParryMeasure, Sft, Word, DEFAULT_WORD_CAP};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Relative threshold under which eigenvalues are clustered.
pub const CLUSTER_TOL: f64 = 1e-8;
/// Condition threshold for eigenvector bases.
pub const CONDITION_LIMIT: f64 = 1e8;

#[derive(Clone, Debug)]
pub struct LocallyConstantCocycle {
    pub base: Sft,
    pub l: i64,
    pub r: i64,
    pub d: usize,
    values: HashMap<Word, DMatrix<f64>>,
}

/// Serialized form: the base shift, the window and one row-major matrix per
/// admissible window word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocycleSpec {
    pub sft: Sft,
    pub window: (i64, i64),
    pub values: Vec<CylinderValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderValue {
    pub word: Word,
    pub matrix: Vec<Vec<f64>>,
}

pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = m.clone().svd(false, false).singular_values;
    let (mx, mn) = (s.max(), s.min());
    if mn == 0.0 {
        f64::INFINITY
    } else {
        mx / mn
    }
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput("matrix must be square and nonempty".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

impl LocallyConstantCocycle {
    /// Validates that every admissible window word has an invertible value.
    pub fn new(base: Sft, l: i64, r: i64, values: Vec<(Word, DMatrix<f64>)>) -> Result<Self> {
        if l > 0 || r < 0 {
            return Err(Error::InvalidInput(format!("window ({l},{r}) must satisfy l ≤ 0 ≤ r")));
        }
        let d = values.first().map(|v| v.1.nrows()).ok_or_else(|| Error::InvalidInput("no cocycle values".into()))?;
        let len = (r - l + 1) as usize;
        let mut map = HashMap::new();
        for (w, m) in values {
            if w.len() != len {
                return Err(Error::InvalidInput(format!("cylinder {w:?} has length {}, window needs {len}", w.len())));
            }
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::InvalidInput(format!("cylinder {w:?}: matrix is not {d}×{d}")));
            }
            if !(condition_number(&m) < 1e14) {
                return Err(Error::InvalidInput(format!("cylinder {w:?}: matrix is not invertible")));
            }
            map.insert(w, m);
        }
        for w in admissible_words(&base, len, None, None, DEFAULT_WORD_CAP)? {
            if !map.contains_key(&w) {
                return Err(Error::InvalidInput(format!("admissible cylinder {w:?} has no value")));
            }
        }
        Ok(LocallyConstantCocycle { base, l, r, d, values: map })
    }

    pub fn constant(base: Sft, m: DMatrix<f64>) -> Result<Self> {
        let vals = (0..base.alphabet_size).map(|s| (vec![s], m.clone())).collect();
        Self::new(base, 0, 0, vals)
    }

    /// Window (0,0): one matrix per symbol.
    pub fn per_symbol(base: Sft, ms: Vec<DMatrix<f64>>) -> Result<Self> {
        let vals = ms.into_iter().enumerate().map(|(s, m)| (vec![s], m)).collect();
        Self::new(base, 0, 0, vals)
    }

    pub fn from_spec(spec: &CocycleSpec) -> Result<Self> {
        let vals = spec.values.iter().map(|v| Ok((v.word.clone(), from_rows(&v.matrix)?))).collect::<Result<_>>()?;
        Self::new(spec.sft.clone(), spec.window.0, spec.window.1, vals)
    }

    pub fn to_spec(&self) -> CocycleSpec {
        let mut values: Vec<CylinderValue> =
            self.values.iter().map(|(w, m)| CylinderValue { word: w.clone(), matrix: to_rows(m) }).collect();
        values.sort_by(|a, b| a.word.cmp(&b.word));
        CocycleSpec { sft: self.base.clone(), window: (self.l, self.r), values }
    }

    pub fn value(&self, w: &[usize]) -> Option<&DMatrix<f64>> {
        self.values.get(w)
    }

    /// `A(x)`.
    pub fn at(&self, x: &SymbolicPoint) -> Result<&DMatrix<f64>> {
        let w = x.window(self.l, self.r);
        self.values.get(&w).ok_or_else(|| Error::InvalidInput(format!("point has inadmissible window {w:?}")))
    }

    /// `Aₙ(x) = A(σⁿ⁻¹x)⋯A(x)`.
    pub fn product(&self, x: &SymbolicPoint, n: usize) -> Result<DMatrix<f64>> {
        let mut p = DMatrix::identity(self.d, self.d);
        for k in 0..n {
            p = self.at(&x.shift(k as i64))? * p;
        }
        Ok(p)
    }

    fn is_diagonal(&self) -> bool {
        self.values.values().all(|m| (0..self.d).all(|i| (0..self.d).all(|j| i == j || m[(i, j)] == 0.0)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Descending.
    pub exponents: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Closed form for simultaneously diagonal cocycles, descending.
    pub exact: Option<Vec<f64>>,
    /// Measure average of `log|det A|`.
    pub mean_log_det: f64,
}

/// Sample a stationary path of the Markov measure.
fn sample_path<R: Rng>(m: &ParryMeasure, len: usize, rng: &mut R) -> Word {
    let pick = |p: &[f64], rng: &mut R| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &x) in p.iter().enumerate() {
            acc += x;
            if u < acc {
                return i;
            }
        }
        p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
    };
    let mut w = Vec::with_capacity(len);
    w.push(pick(&m.stationary, rng));
    for t in 1..len {
        let prev = w[t - 1];
        w.push(pick(&m.transition_probs[prev], rng));
    }
    w
}

/// Lyapunov spectrum by QR along `n_orbits` sampled orbits of length
/// `orbit_len`. Orbit `i` uses the stream `(seed, "lyapunov", i)`.
pub fn lyapunov_exponents(
    coc: &LocallyConstantCocycle,
    measure: &ParryMeasure,
    n_orbits: usize,
    orbit_len: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    let d = coc.d;
    if orbit_len < 10 * d {
        return Err(Error::InvalidInput(format!("orbit length {orbit_len} below 10·d = {}", 10 * d)));
    }
    if measure.stationary.len() != coc.base.alphabet_size {
        return Err(Error::InvalidInput("measure is not defined on the cocycle base".into()));
    }
    if n_orbits == 0 {
        return Err(Error::InvalidInput("need at least one orbit".into()));
    }
    let span = (coc.r - coc.l) as usize;
    let per_orbit: Vec<Result<Vec<f64>>> = (0..n_orbits)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, "lyapunov", i as u64);
            let path = sample_path(measure, orbit_len + span, &mut rng);
            let mut q = DMatrix::<f64>::identity(d, d);
            let mut sums = vec![0.0; d];
            for t in 0..orbit_len {
                let a = coc.values.get(&path[t..=t + span]).ok_or_else(|| Error::InvalidInput("sampled inadmissible window".into()))?;
                let qr = (a * &q).qr();
                let r = qr.r();
                for k in 0..d {
                    let v = r[(k, k)].abs();
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::Degenerate(format!("orthonormalization collapsed at step {t}")));
                    }
                    sums[k] += v.ln();
                }
                q = qr.q();
            }
            Ok(sums.into_iter().map(|s| s / orbit_len as f64).collect())
        })
        .collect();
    let per_orbit: Vec<Vec<f64>> = per_orbit.into_iter().collect::<Result<_>>()?;
    let n = n_orbits as f64;
    let mut exponents = vec![0.0; d];
    let mut std_errors = vec![0.0; d];
    for k in 0..d {
        let mean = per_orbit.iter().map(|v| v[k]).sum::<f64>() / n;
        let var = if n_orbits > 1 { per_orbit.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        exponents[k] = mean;
        std_errors[k] = (var / n).sqrt();
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| exponents[b].total_cmp(&exponents[a]));
    let exponents = order.iter().map(|&k| exponents[k]).collect();
    let std_errors = order.iter().map(|&k| std_errors[k]).collect();

    let mut mean_log_det = 0.0;
    let mut diag_avg = vec![0.0; d];
    for (w, m) in &coc.values {
        let mu = measure.cylinder(w);
        if mu == 0.0 {
            continue;
        }
        mean_log_det += mu * m.determinant().abs().ln();
        for k in 0..d {
            diag_avg[k] += mu * m[(k, k)].abs().ln();
        }
    }
    let exact = coc.is_diagonal().then(|| {
        diag_avg.sort_by(|a, b| b.total_cmp(a));
        diag_avg
    });
    Ok(LyapunovEstimate { exponents, std_errors, exact, mean_log_det })
}

/// Eventually periodic point `…p p . p p…` built from the periodic word `p`
/// with `p[0]` at coordinate 0.
pub fn periodic_point(p: &[usize]) -> SymbolicPoint {
    SymbolicPoint::periodic(p)
}

fn rotate(w: &[usize], k: i64) -> Word {
    let n = w.len() as i64;
    (0..n).map(|j| w[((j + k).rem_euclid(n)) as usize]).collect()
}

/// Point equal to the periodic point of `p` off `[start, start + core.len())`
/// and to `core` on it.
pub fn homoclinic_point(p: &[usize], core: &[usize], start: i64) -> SymbolicPoint {
    let end = start + core.len() as i64;
    SymbolicPoint { left: rotate(p, start), center: core.to_vec(), start, right: rotate(p, end) }
}

fn periodic_words(sft: &Sft, p_max: usize) -> Result<Vec<Word>> {
    let mut out = Vec::new();
    for p in 1..=p_max {
        for w in admissible_words(sft, p, None, None, DEFAULT_WORD_CAP)? {
            if sft.allowed(*w.last().unwrap(), w[0]) {
                out.push(w);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberBunchingReport {
    pub pass: bool,
    /// Largest `lhs / (C·e^{−εn})` seen.
    pub worst_ratio: f64,
    /// `(x, y, n)` attaining the worst ratio.
    pub witness: Option<(SymbolicPoint, SymbolicPoint, usize)>,
    pub pairs_checked: usize,
}

/// Check `‖Aₙ(x)‖‖Aₙ(x)⁻¹‖‖A(σⁿx) − A(σⁿy)‖ < C e^{−εn}` for `n ≤ n_max`
/// over pairs in a common local stable set: `x` periodic of period
/// `≤ p_max`, `y` with the future of `x` and the past of another periodic
/// point (when the junction is admissible), plus `n_samples` seeded pairs
/// with random cores.
pub fn fiber_bunching_check(
    coc: &LocallyConstantCocycle,
    c: f64,
    eps: f64,
    n_max: usize,
    p_max: usize,
    n_samples: usize,
    seed: u64,
) -> Result<FiberBunchingReport> {
    if !(c > 0.0 && eps > 0.0) {
        return Err(Error::InvalidInput("C and eps must be positive".into()));
    }
    let sft = &coc.base;
    let pers = periodic_words(sft, p_max)?;
    let mut pairs: Vec<(SymbolicPoint, SymbolicPoint)> = Vec::new();
    for xw in &pers {
        for zw in &pers {
            if !sft.allowed(*zw.last().unwrap(), xw[0]) {
                continue;
            }
            let x = periodic_point(xw);
            let y = SymbolicPoint { left: zw.clone(), center: vec![], start: 0, right: xw.clone() };
            pairs.push((x, y));
        }
    }
    let mut rng = rng_for(seed, "fiber-bunching", 0);
    for _ in 0..n_samples {
        let xw = &pers[rng.random_range(0..pers.len())];
        let zw = &pers[rng.random_range(0..pers.len())];
        // Random admissible past core between z's past and x's future.
        let len = rng.random_range(1..=4usize);
        let mut core = vec![*zw.last().unwrap()];
        let mut ok = true;
        for _ in 0..len {
            let prev = *core.last().unwrap();
            let succ: Vec<usize> = (0..sft.alphabet_size).filter(|&t| sft.allowed(prev, t)).collect();
            if succ.is_empty() {
                ok = false;
                break;
            }
            core.push(succ[rng.random_range(0..succ.len())]);
        }
        core.remove(0);
        if !ok || core.is_empty() || !sft.allowed(*core.last().unwrap(), xw[0]) || !sft.allowed(*zw.last().unwrap(), core[0]) {
            continue;
        }
        let start = -(core.len() as i64);
        let x = periodic_point(xw);
        let y = SymbolicPoint { left: zw.clone(), center: core, start, right: xw.clone() };
        if y.admissible_in(sft) && x.agrees_from(&y, 0) {
            pairs.push((x, y));
        }
    }
    let mut worst = 0.0f64;
    let mut witness = None;
    for (x, y) in &pairs {
        let mut an = DMatrix::identity(coc.d, coc.d);
        for n in 0..=n_max {
            let xs = x.shift(n as i64);
            let ys = y.shift(n as i64);
            let ax = coc.at(&xs)?;
            let ay = coc.at(&ys)?;
            let diff = op_norm(&(ax - ay));
            let inv = an.clone().try_inverse().ok_or_else(|| Error::Degenerate("product not invertible".into()))?;
            let lhs = op_norm(&an) * op_norm(&inv) * diff;
            let ratio = lhs / (c * (-eps * n as f64).exp());
            if ratio > worst || witness.is_none() {
                worst = ratio;
                witness = Some((x.clone(), y.clone(), n));
            }
            an = ax * an;
        }
    }
    Ok(FiberBunchingReport { pass: worst < 1.0, worst_ratio: worst, witness, pairs_checked: pairs.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Stable,
    Unstable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolonomyMap {
    pub from_point: SymbolicPoint,
    pub to_point: SymbolicPoint,
    pub matrix: Vec<Vec<f64>>,
    pub side: Side,
    pub convergence_residual: f64,
    pub iterations: usize,
    /// Residual of the intertwining identity with `A`.
    pub intertwining_residual: f64,
}

impl HolonomyMap {
    pub fn matrix(&self) -> DMatrix<f64> {
        from_rows(&self.matrix).expect("holonomy matrix is square")
    }
}

/// Partial products of the holonomy limit, evaluated inside out:
/// stable `Hₙ = A(y)⁻¹⋯A(σⁿy)⁻¹A(σⁿx)⋯A(x)`, unstable
/// `Hₙ = A(σ⁻¹y)⋯A(σ⁻ⁿy)A(σ⁻ⁿx)⁻¹⋯A(σ⁻¹x)⁻¹`.
fn holonomy_limit(
    coc: &LocallyConstantCocycle,
    x: &SymbolicPoint,
    y: &SymbolicPoint,
    side: Side,
    tol: f64,
    n_max: usize,
) -> Result<(DMatrix<f64>, f64, usize)> {
    let d = coc.d;
    let inv = |m: &DMatrix<f64>| m.clone().try_inverse().ok_or_else(|| Error::Degenerate("cocycle value not invertible".into()));
    let mut prev: Option<DMatrix<f64>> = None;
    let mut residual = f64::INFINITY;
    for n in 0..=n_max {
        let mut h = DMatrix::<f64>::identity(d, d);
        match side {
            Side::Stable => {
                for k in (0..=n as i64).rev() {
                    h = inv(coc.at(&y.shift(k))?)? * h * coc.at(&x.shift(k))?;
                }
            }
            Side::Unstable => {
                for k in (1..=n as i64 + 1).rev() {
                    h = coc.at(&y.shift(-k))? * h * inv(coc.at(&x.shift(-k))?)?;
                }
            }
        }
        if let Some(p) = &prev {
            residual = op_norm(&(&h - p));
            if residual < tol {
                return Ok((h, residual, n));
            }
        }
        prev = Some(h);
    }
    Err(Error::NotConverged { iterations: n_max, residual })
}

/// Stable (or unstable) holonomy between points in a common local stable
/// (unstable) set: coordinates agree for `i ≥ 0` (`i ≤ 0`).
pub fn holonomy(
    coc: &LocallyConstantCocycle,
    x: &SymbolicPoint,
    y: &SymbolicPoint,
    side: Side,
    tol: f64,
    n_max: usize,
) -> Result<HolonomyMap> {
    let related = match side {
        Side::Stable => x.agrees_from(y, 0),
        Side::Unstable => x.agrees_until(y, 0),
    };
    if !related {
        return Err(Error::NotComparable { side: format!("{side:?}").to_lowercase() });
    }
    let (h, residual, iters) = holonomy_limit(coc, x, y, side, tol, n_max)?;
    // Stable: H(σx,σy)A(x) = A(y)H(x,y). Unstable, one step back:
    // H(x,y)A(σ⁻¹x) = A(σ⁻¹y)H(σ⁻¹x,σ⁻¹y).
    let intertwining = match side {
        Side::Stable => {
            let (h1, _, _) = holonomy_limit(coc, &x.shift(1), &y.shift(1), side, tol, n_max)?;
            op_norm(&(h1 * coc.at(x)? - coc.at(y)? * &h))
        }
        Side::Unstable => {
            let (xb, yb) = (x.shift(-1), y.shift(-1));
            let (h1, _, _) = holonomy_limit(coc, &xb, &yb, side, tol, n_max)?;
            op_norm(&(&h * coc.at(&xb)? - coc.at(&yb)? * h1))
        }
    };
    if intertwining > 10.0 * tol.max(1e-15) * (1.0 + op_norm(&h)) {
        return Err(Error::PostconditionViolated(format!("intertwining residual {intertwining:.3e}")));
    }
    Ok(HolonomyMap {
        from_point: x.clone(),
        to_point: y.clone(),
        matrix: to_rows(&h),
        side,
        convergence_residual: residual,
        iterations: iters,
        intertwining_residual: intertwining,
    })
}

/// Finite measure on projective space: unit vectors (up to sign) with
/// weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectiveCloud {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl ProjectiveCloud {
    pub fn new(points: Vec<DVector<f64>>, weights: Vec<f64>) -> ProjectiveCloud {
        let total: f64 = weights.iter().sum();
        ProjectiveCloud {
            points: points.iter().map(|v| (v / v.norm()).as_slice().to_vec()).collect(),
            weights: weights.iter().map(|w| w / total).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    /// `E[vvᵀ]`, a sign-invariant summary.
    pub fn second_moment(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for (p, w) in self.points.iter().zip(&self.weights) {
            let v = DVector::from_column_slice(p);
            m += *w * &v * v.transpose();
        }
        m
    }

    pub fn push_forward(&self, g: &DMatrix<f64>) -> ProjectiveCloud {
        let pts = self.points.iter().map(|p| g * DVector::from_column_slice(p)).collect();
        ProjectiveCloud::new(pts, self.weights.clone())
    }

    /// Equally spaced lines through the unit circle of the plane spanned by
    /// the columns of `basis` (d×2), uniform in the parameter angle.
    pub fn circle(basis: &DMatrix<f64>, n: usize) -> ProjectiveCloud {
        let pts = (0..n)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / n as f64;
                basis.column(0) * t.cos() + basis.column(1) * t.sin()
            })
            .collect();
        ProjectiveCloud::new(pts, vec![1.0; n])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MeasureVerdict {
    Exists(ProjectiveCloud),
    NoneFound(Vec<String>),
}

impl MeasureVerdict {
    pub fn exists(&self) -> bool {
        matches!(self, MeasureVerdict::Exists(_))
    }
}

/// Real eigen-structure of a matrix: real eigenspaces and invariant planes of
/// complex pairs, with the eigenvalue each belongs to.
struct EigenStructure {
    real: Vec<(f64, DMatrix<f64>)>,
    /// (modulus, argument in (0, π), basis d×2 of the real invariant plane)
    complex: Vec<(f64, f64, DMatrix<f64>)>,
}

/// Orthonormal basis of the numerical null space of `m`, or an error when
/// the rank is ambiguous.
fn null_space(m: &DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let sv = &svd.singular_values;
    let mut cols = Vec::new();
    for i in 0..sv.len() {
        let rel = sv[i] / scale.max(1e-300);
        if rel <= CLUSTER_TOL {
            cols.push(vt.row(i).transpose());
        } else if rel < CLUSTER_TOL * 100.0 {
            return Err(Error::IllConditioned(format!("singular value ratio {rel:.2e} is ambiguous")));
        }
    }
    Ok(if cols.is_empty() { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&cols) })
}

fn eigen_structure(b: &DMatrix<f64>) -> Result<EigenStructure> {
    let d = b.nrows();
    let scale = op_norm(b);
    let eig = b.complex_eigenvalues();
    let mut reals: Vec<f64> = Vec::new();
    let mut cplx: Vec<(f64, f64)> = Vec::new();
    for z in eig.iter() {
        if z.im.abs() <= CLUSTER_TOL * scale {
            if !reals.iter().any(|r| (r - z.re).abs() <= CLUSTER_TOL * scale) {
                reals.push(z.re);
            }
        } else if z.im > 0.0 && !cplx.iter().any(|c| (c.0 - z.re).abs() + (c.1 - z.im).abs() <= CLUSTER_TOL * scale) {
            cplx.push((z.re, z.im));
        }
    }
    let mut real = Vec::new();
    for lam in reals {
        let ns = null_space(&(b - DMatrix::identity(d, d) * lam), scale)?;
        if ns.ncols() == 0 {
            return Err(Error::IllConditioned(format!("no eigenvector found for eigenvalue {lam}")));
        }
        real.push((lam, ns));
    }
    let mut complex = Vec::new();
    for (re, im) in cplx {
        let m = b * b - b * (2.0 * re) + DMatrix::identity(d, d) * (re * re + im * im);
        let ns = null_space(&m, scale * scale)?;
        if ns.ncols() != 2 {
            return Err(Error::IllConditioned(format!(
                "complex pair {re}±{im}i has a {}-dimensional real eigenspace",
                ns.ncols()
            )));
        }
        complex.push(((re * re + im * im).sqrt(), im.atan2(re), ns));
    }
    Ok(EigenStructure { real, complex })
}

/// Is the line spanned by `v` mapped to itself by `g`?
fn fixes_line(g: &DMatrix<f64>, v: &DVector<f64>, tol: f64) -> bool {
    let w = g * v;
    let (vn, wn) = (v.norm(), w.norm());
    if wn == 0.0 {
        return false;
    }
    let c = (v.dot(&w) / (vn * wn)).abs();
    (1.0 - c).abs() <= tol
}

/// Search for a measure invariant by both matrices among the candidates
/// built from `b`'s eigen-structure.
fn candidates_from(b: &DMatrix<f64>, bp: &DMatrix<f64>, tol: f64, log: &mut Vec<String>) -> Result<Option<ProjectiveCloud>> {
    let es = eigen_structure(b)?;
    let esp = eigen_structure(bp)?;
    // Point masses on eigenlines of b that are fixed by b'. For eigenspaces of
    // dimension > 1, intersect with the real eigenspaces of b'.
    let mut lines: Vec<DVector<f64>> = Vec::new();
    for (lam, e) in &es.real {
        if e.ncols() == 1 {
            let v = e.column(0).into_owned();
            if fixes_line(bp, &v, tol) {
                return Ok(Some(ProjectiveCloud::new(vec![v], vec![1.0])));
            }
            log.push(format!("point mass on eigenline of {lam:.6} moved by the other matrix"));
            lines.push(v);
        } else {
            for (mu, f) in &esp.real {
                // Intersection of column spaces: null space of [E, −F].
                let mut stacked = DMatrix::zeros(e.nrows(), e.ncols() + f.ncols());
                stacked.view_mut((0, 0), (e.nrows(), e.ncols())).copy_from(e);
                stacked.view_mut((0, e.ncols()), (f.nrows(), f.ncols())).copy_from(&(-f));
                let ns = null_space(&stacked, 1.0)?;
                if ns.ncols() > 0 {
                    let coeffs = ns.column(0).rows(0, e.ncols()).into_owned();
                    let v = e * coeffs;
                    return Ok(Some(ProjectiveCloud::new(vec![v], vec![1.0])));
                }
                log.push(format!("eigenspace of {lam:.6} (dim {}) meets no eigenspace of {mu:.6}", e.ncols()));
            }
            if esp.real.is_empty() {
                log.push(format!("eigenspace of {lam:.6} (dim {}): other matrix has no real eigenvector", e.ncols()));
            }
            for k in 0..e.ncols() {
                lines.push(e.column(k).into_owned());
            }
        }
    }
    // Finite cycles of eigenlines permuted by b'.
    let image: Vec<Option<usize>> = lines
        .iter()
        .map(|v| {
            let w = bp * v;
            lines.iter().position(|u| fixes_line(&(u * u.transpose()), &w, tol) && w.norm() > 0.0)
        })
        .collect();
    for start in 0..lines.len() {
        let mut cyc = vec![start];
        let mut cur = start;
        while let Some(nx) = image[cur] {
            if nx == start {
                let pts = cyc.iter().map(|&i| lines[i].clone()).collect();
                return Ok(Some(ProjectiveCloud::new(pts, vec![1.0; cyc.len()])));
            }
            if cyc.contains(&nx) {
                break;
            }
            cyc.push(nx);
            cur = nx;
        }
    }
    if !lines.is_empty() {
        log.push("no cycle of eigenlines is permuted by the other matrix".into());
    }
    // Elliptic planes: b' must preserve the plane and act there by a
    // similarity in the basis that makes b a rotation.
    for (modulus, arg, plane) in &es.complex {
        let img = bp * plane;
        let proj = plane * (plane.transpose() * &img);
        if op_norm(&(&img - &proj)) > tol * op_norm(&img).max(1e-300) {
            log.push(format!("elliptic plane (modulus {modulus:.6}, angle {arg:.6}) not preserved"));
            continue;
        }
        // Basis T with T⁻¹ b|P T a rotation: T = [Re w, Im w] for an
        // eigenvector w, expressed in plane coordinates.
        let bp2 = plane.transpose() * b * plane;
        let (re, im) = (modulus * arg.cos(), modulus * arg.sin());
        let m = &bp2 - DMatrix::identity(2, 2) * re;
        // w = (x, y) complex solves (m − i·im)w = 0; pick x real.
        let t = if m[(0, 1)].abs() > m[(1, 0)].abs() {
            // Row 0: m00 x + m01 y = i·im x → y = (i·im − m00) x / m01 with x = 1.
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -m[(0, 0)] / m[(0, 1)], im / m[(0, 1)]])
        } else {
            DMatrix::from_row_slice(2, 2, &[(-m[(1, 1)]) / m[(1, 0)], im / m[(1, 0)], 1.0, 0.0])
        };
        let tinv = t.clone().try_inverse().ok_or_else(|| Error::IllConditioned("degenerate elliptic basis".into()))?;
        let c = &tinv * (plane.transpose() * bp * plane) * &t;
        let det = c.determinant().abs();
        if det == 0.0 {
            log.push("other matrix is singular on an elliptic plane".into());
            continue;
        }
        let s = c / det.sqrt();
        let orth = op_norm(&(s.transpose() * &s - DMatrix::identity(2, 2)));
        if orth <= tol {
            let basis = plane * &t;
            return Ok(Some(ProjectiveCloud::circle(&basis, 64)));
        }
        log.push(format!("other matrix is not conformal on the elliptic plane (defect {orth:.3e})"));
    }
    Ok(None)
}

/// Decide whether some probability measure on projective space is invariant
/// by both `b` and `bp`, by checking the extreme candidate classes of each.
pub fn common_invariant_measure_test(b: &DMatrix<f64>, bp: &DMatrix<f64>, tol: f64) -> Result<MeasureVerdict> {
    if b.nrows() < 2 || b.nrows() != bp.nrows() || !b.is_square() || !bp.is_square() {
        return Err(Error::InvalidInput("need two square matrices of the same size d ≥ 2".into()));
    }
    let mut log = Vec::new();
    if let Some(c) = candidates_from(b, bp, tol, &mut log)? {
        return Ok(MeasureVerdict::Exists(c));
    }
    if let Some(c) = candidates_from(bp, b, tol, &mut log)? {
        return Ok(MeasureVerdict::Exists(c));
    }
    Ok(MeasureVerdict::NoneFound(log))
}

/// Per-block log growth rates (per iterate) for the pinching and bunching
/// inequalities. Blocks are ordered by increasing growth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRates {
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockVerdict {
    pub index: usize,
    /// Products of the two pinching inequalities (`None`: missing neighbour).
    pub pinch: [Option<f64>; 2],
    /// Products of the two bunching inequalities (`None`: no stable or no
    /// unstable bundle).
    pub bunch: [Option<f64>; 2],
    pub pinched: bool,
    pub bunched: bool,
}

/// Evaluate the pinching and bunching inequalities at horizon `n` from rate
/// bounds: `‖Dfⁿ|E_j‖ ≤ e^{n·max_j}`, `‖(Dfⁿ|E_j)⁻¹‖ ≤ e^{−n·min_j}`, and the
/// global bounds from the extreme rates.
pub fn pinching_bunching_check(blocks: &[BlockRates], alpha: f64, n: usize) -> Result<Vec<BlockVerdict>> {
    if n == 0 || blocks.is_empty() {
        return Err(Error::InvalidInput("need n ≥ 1 and at least one block".into()));
    }
    let nf = n as f64;
    let gmax = blocks.iter().map(|b| b.max).fold(f64::NEG_INFINITY, f64::max);
    let gmin = blocks.iter().map(|b| b.min).fold(f64::INFINITY, f64::min);
    let s_max = blocks.iter().filter(|b| b.max < 0.0).map(|b| b.max).fold(f64::NEG_INFINITY, f64::max);
    let u_min = blocks.iter().filter(|b| b.min > 0.0).map(|b| b.min).fold(f64::INFINITY, f64::min);
    let has_s = s_max.is_finite();
    let has_u = u_min.is_finite();
    let out = (0..blocks.len())
        .map(|j| {
            let b = blocks[j];
            let p1 = (j + 1 < blocks.len()).then(|| (nf * (b.max - blocks[j + 1].min + alpha * gmax)).exp());
            let p2 = (j > 0).then(|| (nf * (-b.min + blocks[j - 1].max - alpha * gmin)).exp());
            let b1 = has_s.then(|| (nf * (b.max - b.min + alpha * s_max)).exp());
            let b2 = has_u.then(|| (nf * (-alpha * u_min - b.min + b.max)).exp());
            let ok = |x: Option<f64>| x.is_none_or(|v| v < 1.0);
            BlockVerdict { index: j, pinch: [p1, p2], bunch: [b1, b2], pinched: ok(p1) && ok(p2), bunched: ok(b1) && ok(b2) }
        })
        .collect();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub cloud: ProjectiveCloud,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Random cloud of `n` unit vectors in dimension `d`; for `d = 2` the lines
/// are equally spaced.
pub fn uniform_cloud(d: usize, n: usize, seed: u64) -> ProjectiveCloud {
    if d == 2 {
        return ProjectiveCloud::circle(&DMatrix::identity(2, 2), n);
    }
    let mut rng = rng_for(seed, "cloud", 0);
    let pts = (0..n)
        .map(|_| loop {
            let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let nv = v.norm();
            if nv > 1e-3 && nv <= 1.0 {
                break v;
            }
        })
        .collect();
    ProjectiveCloud::new(pts, vec![1.0; n])
}

/// Iterate `μ ↦ (1/G) Σ_g g_*μ` over the generators at a fixed base point
/// and report the change of the second moment. With several generators the
/// mixture is resampled back to the cloud size (systematic resampling with a
/// seeded offset). A numerical probe only.
pub fn projective_stationary_probe(
    generators: &[DMatrix<f64>],
    initial: ProjectiveCloud,
    iterations: usize,
    tol: f64,
    seed: u64,
) -> Result<ProbeReport> {
    if generators.is_empty() {
        return Err(Error::InvalidInput("no generators".into()));
    }
    let size = initial.points.len();
    let mut cloud = initial;
    let mut residual = f64::INFINITY;
    let mut rng = rng_for(seed, "probe", 0);
    for it in 1..=iterations {
        let before = cloud.second_moment();
        let next = if generators.len() == 1 {
            cloud.push_forward(&generators[0])
        } else {
            let mut pts = Vec::new();
            let mut ws = Vec::new();
            for g in generators {
                let pf = cloud.push_forward(g);
                pts.extend(pf.points);
                ws.extend(pf.weights.iter().map(|w| w / generators.len() as f64));
            }
            let offset: f64 = rng.random();
            let mut chosen = Vec::with_capacity(size);
            let mut acc = 0.0;
            let mut k = 0;
            for (i, w) in ws.iter().enumerate() {
                acc += w * size as f64;
                while k < size && (k as f64 + offset) < acc {
                    chosen.push(DVector::from_column_slice(&pts[i]));
                    k += 1;
                }
            }
            while chosen.len() < size {
                chosen.push(DVector::from_column_slice(pts.last().unwrap()));
            }
            ProjectiveCloud::new(chosen, vec![1.0; size])
        };
        residual = (next.second_moment() - before).norm();
        cloud = next;
        if residual < tol {
            return Ok(ProbeReport { cloud, residual, iterations: it, converged: true });
        }
    }
    Ok(ProbeReport { cloud, residual, iterations, converged: false })
}

/// Return-map generator `Aₚ(p)` of the periodic point of `p`.
pub fn periodic_generator(coc: &LocallyConstantCocycle, p: &[usize]) -> Result<DMatrix<f64>> {
    coc.product(&periodic_point(p), p.len())
}

/// Homoclinic loop `H_s(σᵐq, p)·Aₘ(q)·H_u(p, q)` at the periodic point of
/// `p`, with `q` the homoclinic point carrying `core` on `[1, 1 + |core|)`
/// and `m` the least multiple of the period with `m ≥ 1 + |core|`.
pub fn homoclinic_generator(coc: &LocallyConstantCocycle, p: &[usize], core: &[usize], tol: f64) -> Result<DMatrix<f64>> {
    let pp = periodic_point(p);
    let q = homoclinic_point(p, core, 1);
    if !q.admissible_in(&coc.base) {
        return Err(Error::InvalidInput("homoclinic point is not admissible".into()));
    }
    let per = p.len();
    let end = 1 + core.len();
    let m = end.div_ceil(per) * per;
    let hu = holonomy(coc, &pp, &q, Side::Unstable, tol, 200)?;
    let am = coc.product(&q, m)?;
    let hs = holonomy(coc, &q.shift(m as i64), &pp, Side::Stable, tol, 200)?;
    Ok(hs.matrix() * am * hu.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subshift::parry_measure;
    use proptest::prelude::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    fn rot(t: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()])
    }

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        op_norm(&(a - b)) <= tol
    }

    #[test]
    fn constant_diagonal_exponents() {
        let c = LocallyConstantCocycle::constant(Sft::full_shift(2), diag(&[3.0, 1.0 / 3.0])).unwrap();
        let m = parry_measure(&Sft::full_shift(2)).unwrap();
        let e = lyapunov_exponents(&c, &m, 8, 100, 1).unwrap();
        assert!((e.exponents[0] - 3f64.ln()).abs() < 1e-12);
        assert!((e.exponents[1] + 3f64.ln()).abs() < 1e-12);
        let ex = e.exact.unwrap();
        assert!((ex[0] - 3f64.ln()).abs() < 1e-15 && (ex[1] + 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn two_cylinder_diagonal_matches_closed_form() {
        let c = LocallyConstantCocycle::per_symbol(Sft::full_shift(2), vec![diag(&[2.0, 0.5]), diag(&[8.0, 0.125])]).unwrap();
        let m = ParryMeasure::bernoulli(&[0.5, 0.5]);
        let e = lyapunov_exponents(&c, &m, 100, 100, 7).unwrap();
        let exact = e.exact.clone().unwrap();
        assert!((exact[0] - 2.0 * 2f64.ln()).abs() < 1e-14);
        assert!((e.exponents[0] - exact[0]).abs() <= 3.0 * e.std_errors[0]);
        assert!((e.exponents.iter().sum::<f64>() - e.mean_log_det).abs() < 1e-12);
    }

    #[test]
    fn identity_cocycle_has_zero_exponents() {
        let c = LocallyConstantCocycle::constant(Sft::golden_mean(), DMatrix::identity(3, 3)).unwrap();
        let m = parry_measure(&Sft::golden_mean()).unwrap();
        let e = lyapunov_exponents(&c, &m, 4, 40, 0).unwrap();
        assert!(e.exponents.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn missing_cylinder_is_rejected() {
        let r = LocallyConstantCocycle::new(Sft::full_shift(2), 0, 0, vec![(vec![0], diag(&[1.0, 1.0]))]);
        assert!(r.is_err());
        let sing = LocallyConstantCocycle::constant(Sft::full_shift(2), diag(&[1.0, 0.0]));
        assert!(sing.is_err());
    }

    fn window_cocycle() -> LocallyConstantCocycle {
        // Window (−1, 0) over the full 2-shift; value depends on x₋₁ x₀.
        let vals = vec![
            (vec![0, 0], DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.0, 0.5])),
            (vec![0, 1], DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.7, 0.8])),
            (vec![1, 0], DMatrix::from_row_slice(2, 2, &[3.0, -0.4, 0.2, 0.4])),
            (vec![1, 1], rot(0.7) * 1.2),
        ];
        LocallyConstantCocycle::new(Sft::full_shift(2), -1, 0, vals).unwrap()
    }

    #[test]
    fn holonomy_telescoping() {
        let f2 = Sft::full_shift(2);
        let c0 = LocallyConstantCocycle::per_symbol(f2.clone(), vec![diag(&[2.0, 0.5]), rot(1.0)]).unwrap();
        let x = SymbolicPoint::new(vec![0], vec![], 0, vec![1, 0, 0]).unwrap();
        let y = SymbolicPoint::new(vec![1], vec![], 0, vec![1, 0, 0]).unwrap();
        let h = holonomy(&c0, &x, &y, Side::Stable, 1e-12, 50).unwrap();
        assert!(close(&h.matrix(), &DMatrix::identity(2, 2), 1e-10));

        let c = window_cocycle();
        let h = holonomy(&c, &x, &y, Side::Stable, 1e-12, 50).unwrap();
        let expect = c.at(&y).unwrap().clone().try_inverse().unwrap() * c.at(&x).unwrap();
        assert!(close(&h.matrix(), &expect, 1e-10));
        assert!(h.intertwining_residual <= 1e-10);

        let k = LocallyConstantCocycle::constant(f2, rot(0.3)).unwrap();
        let h = holonomy(&k, &x, &y, Side::Stable, 1e-12, 50).unwrap();
        assert_eq!(h.convergence_residual, 0.0);
        assert!(close(&h.matrix(), &DMatrix::identity(2, 2), 1e-12));
    }

    #[test]
    fn holonomy_relation_is_checked() {
        let c = window_cocycle();
        let x = periodic_point(&[0]);
        let y = periodic_point(&[1]);
        assert!(matches!(holonomy(&c, &x, &y, Side::Stable, 1e-12, 10), Err(Error::NotComparable { .. })));
    }

    #[test]
    fn holonomy_identities() {
        let c = window_cocycle();
        let fut = vec![0, 1, 1];
        let x = SymbolicPoint::new(vec![0], vec![], 0, fut.clone()).unwrap();
        let y = SymbolicPoint::new(vec![1], vec![], 0, fut.clone()).unwrap();
        let z = SymbolicPoint::new(vec![0, 1], vec![1, 1], -2, fut).unwrap();
        let h = |a: &SymbolicPoint, b: &SymbolicPoint| holonomy(&c, a, b, Side::Stable, 1e-12, 50).unwrap().matrix();
        assert!(close(&h(&x, &x), &DMatrix::identity(2, 2), 1e-12));
        assert!(close(&(h(&y, &z) * h(&x, &y)), &h(&x, &z), 1e-10));
        // Unstable side, mirrored.
        let past = vec![1, 0];
        let xu = SymbolicPoint::new(past.clone(), vec![], 1, vec![0]).unwrap();
        let yu = SymbolicPoint::new(past, vec![], 1, vec![1, 1, 0]).unwrap();
        let hu = holonomy(&c, &xu, &yu, Side::Unstable, 1e-12, 50).unwrap();
        assert!(hu.intertwining_residual <= 1e-10);
    }

    #[test]
    fn fiber_bunching_examples() {
        let f2 = Sft::full_shift(2);
        let k = LocallyConstantCocycle::constant(f2.clone(), diag(&[5.0, 0.2])).unwrap();
        assert!(fiber_bunching_check(&k, 1.0, 0.5, 8, 3, 20, 0).unwrap().pass);
        let w0 = LocallyConstantCocycle::per_symbol(f2, vec![diag(&[5.0, 0.2]), rot(1.0)]).unwrap();
        assert!(fiber_bunching_check(&w0, 1.0, 0.5, 8, 3, 20, 0).unwrap().pass);
        let mut vals = window_cocycle().to_spec();
        vals.values[2].matrix = vec![vec![40.0, 0.0], vec![0.0, 0.025]];
        let c = LocallyConstantCocycle::from_spec(&vals).unwrap();
        let rep = fiber_bunching_check(&c, 10.0, 0.5, 8, 3, 20, 0).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.witness.unwrap().2, 0);
    }

    #[test]
    fn common_measure_examples() {
        let id = DMatrix::identity(2, 2);
        assert!(common_invariant_measure_test(&id, &id, 1e-9).unwrap().exists());
        let b = diag(&[2.0, 1.0]);
        assert!(!common_invariant_measure_test(&b, &rot(1.0), 1e-9).unwrap().exists());
        assert!(!common_invariant_measure_test(&rot(1.0), &b, 1e-9).unwrap().exists());
        assert!(common_invariant_measure_test(&b, &b, 1e-9).unwrap().exists());
        // Two rotations share the uniform measure.
        assert!(common_invariant_measure_test(&rot(1.0), &rot(0.4), 1e-9).unwrap().exists());
        // A swap of the axes preserves (δ_e1 + δ_e2)/2.
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        match common_invariant_measure_test(&b, &swap, 1e-9).unwrap() {
            MeasureVerdict::Exists(c) => assert_eq!(c.points.len(), 2),
            v => panic!("{v:?}"),
        }
        // Shared eigenline in dimension 3.
        let b3 = diag(&[3.0, 2.0, 1.0]);
        let mut r3 = DMatrix::identity(3, 3);
        r3.view_mut((1, 1), (2, 2)).copy_from(&rot(1.0));
        assert!(common_invariant_measure_test(&b3, &r3, 1e-9).unwrap().exists());
    }

    #[test]
    fn pinching_examples() {
        let blocks = [
            BlockRates { min: -3f64.ln(), max: -3f64.ln() },
            BlockRates { min: 2f64.ln(), max: 2f64.ln() },
            BlockRates { min: 4f64.ln(), max: 4f64.ln() },
        ];
        let v = pinching_bunching_check(&blocks, 0.1, 1).unwrap();
        let mid = &v[1];
        assert!((mid.pinch[0].unwrap() - 2.0 * 0.25 * 4f64.powf(0.1)).abs() < 1e-12);
        assert!((mid.pinch[1].unwrap() - 0.5 * (1.0 / 3.0) * 3f64.powf(0.1)).abs() < 1e-12);
        assert!(mid.pinched);
        let eq = [BlockRates { min: 0.0, max: 1.0 }, BlockRates { min: 1.0, max: 1.0 }];
        for a in [0.0, 0.1, 0.5] {
            assert!(!pinching_bunching_check(&eq, a, 1).unwrap()[0].pinched);
        }
        let wide = [
            BlockRates { min: -100f64.ln(), max: -100f64.ln() },
            BlockRates { min: 0.0, max: 0.0 },
            BlockRates { min: 100f64.ln(), max: 100f64.ln() },
        ];
        let v = pinching_bunching_check(&wide, 0.5, 1).unwrap();
        assert!(v[1].pinched && v[1].bunched);
    }

    #[test]
    fn probe_examples() {
        let r = projective_stationary_probe(&[diag(&[2.0, 1.0])], uniform_cloud(2, 16, 0), 200, 1e-30, 0).unwrap();
        let m = r.cloud.second_moment();
        assert!((m[(0, 0)] - 1.0).abs() < 1e-6);
        assert!(r.residual < 1e-6);
        let id = projective_stationary_probe(&[DMatrix::identity(2, 2)], uniform_cloud(2, 16, 0), 5, 1e-12, 0).unwrap();
        assert!(id.converged && id.residual == 0.0);
        let rr = projective_stationary_probe(&[rot(1.0)], uniform_cloud(2, 16, 0), 5, 1e-6, 0).unwrap();
        assert!(rr.converged);
    }

    #[test]
    fn homoclinic_generator_of_constant_cocycle_is_a_power() {
        let c = LocallyConstantCocycle::constant(Sft::full_shift(2), diag(&[2.0, 0.5])).unwrap();
        let g = homoclinic_generator(&c, &[0], &[1, 1], 1e-12).unwrap();
        assert!(close(&g, &diag(&[8.0, 0.125]), 1e-9));
        let w = window_cocycle();
        let g = homoclinic_generator(&w, &[0, 1], &[1, 1, 0], 1e-12).unwrap();
        assert!(g.determinant().abs() > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn exponent_sum_matches_log_det(seed in any::<u64>(), a in 0.2f64..3.0, b in -1.0f64..1.0) {
            let m0 = DMatrix::from_row_slice(2, 2, &[a, b, 0.3, 1.0]);
            prop_assume!(m0.determinant().abs() > 0.05);
            let c = LocallyConstantCocycle::per_symbol(Sft::full_shift(2), vec![m0, rot(0.9) * 1.5]).unwrap();
            let m = ParryMeasure::bernoulli(&[0.5, 0.5]);
            let e = lyapunov_exponents(&c, &m, 40, 200, seed).unwrap();
            let se: f64 = e.std_errors.iter().sum::<f64>();
            prop_assert!((e.exponents.iter().sum::<f64>() - e.mean_log_det).abs() <= 3.0 * se + 0.02);
        }

        #[test]
        fn common_measure_verdict_is_symmetric(v in proptest::collection::vec(-2.0f64..2.0, 8)) {
            let b = DMatrix::from_row_slice(2, 2, &v[..4]);
            let bp = DMatrix::from_row_slice(2, 2, &v[4..]);
            prop_assume!(b.determinant().abs() > 0.1 && bp.determinant().abs() > 0.1);
            if let (Ok(x), Ok(y)) = (common_invariant_measure_test(&b, &bp, 1e-9), common_invariant_measure_test(&bp, &b, 1e-9)) {
                prop_assert_eq!(x.exists(), y.exists());
            }
        }

        #[test]
        fn stable_holonomy_intertwines(past in proptest::collection::vec(0usize..2, 1..4), fut in proptest::collection::vec(0usize..2, 1..4), past2 in proptest::collection::vec(0usize..2, 1..4)) {
            let c = window_cocycle();
            let x = SymbolicPoint::new(past, vec![], 0, fut.clone()).unwrap();
            let y = SymbolicPoint::new(past2, vec![], 0, fut).unwrap();
            let h = holonomy(&c, &x, &y, Side::Stable, 1e-12, 50).unwrap();
            prop_assert!(h.intertwining_residual <= 1e-10 * (1.0 + op_norm(&h.matrix())));
        }
    }
}
