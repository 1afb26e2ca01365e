//! Uniform shadowing for sequences of hyperbolic maps.
//!
//! A sequence of maps `gₙ(z) = Lₙz + bₙ + rₙ(z)` on `ℝ^{du} × ℝ^{ds}` with
//! `Lₙ = diag(Lₙᵘ, Lₙˢ)`. A pseudo-orbit `(xₙ)` has jumps
//! `eₙ = gₙ(xₙ) − xₙ₊₁`; a shadow orbit is `yₙ = xₙ + uₙ` with
//! `yₙ₊₁ = gₙ(yₙ)`. In the affine case the deviation satisfies
//! `uₙ₊₁ = Lₙuₙ + eₙ`, solved with stable components summed forward and
//! unstable components summed backward.
//!
//! All norms are sup norms. With `κ` the hyperbolicity rate, the bounded
//! solution operator has norm at most `θ = 1/(1 − e^{−κ})`.

use crate::affine_horseshoe::{point_from_itinerary, Itinerary, StandardAffineHorseshoe};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Orbit relation tolerance for affine solves.
pub const AFFINE_RESIDUAL_TOL: f64 = 1e-12;

/// One map of the sequence. Matrices are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub lu: Vec<Vec<f64>>,
    pub ls: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Smooth remainder added to every affine map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Remainder {
    /// `r(z)_i = coeff · z_{i+1}²` (indices mod d), certified on the ball
    /// `‖z‖ ≤ radius`.
    Quadratic { coeff: f64, radius: f64 },
    /// `r(z)_i = amp · sin(freq · z_i)`, globally Lipschitz.
    Sine { amp: f64, freq: f64 },
}

impl Remainder {
    pub fn eval(&self, z: &DVector<f64>) -> DVector<f64> {
        let d = z.len();
        match *self {
            Remainder::Quadratic { coeff, .. } => DVector::from_fn(d, |i, _| coeff * z[(i + 1) % d].powi(2)),
            Remainder::Sine { amp, freq } => z.map(|x| amp * (freq * x).sin()),
        }
    }

    /// `max(sup‖r‖, sup‖Dr‖)` over the certified region.
    pub fn c1_size(&self) -> f64 {
        match *self {
            Remainder::Quadratic { coeff, radius } => (coeff.abs() * radius * radius).max(2.0 * coeff.abs() * radius),
            Remainder::Sine { amp, freq } => amp.abs().max((amp * freq).abs()),
        }
    }

    /// Radius of the region on which `c1_size` is certified.
    pub fn radius(&self) -> f64 {
        match *self {
            Remainder::Quadratic { radius, .. } => radius,
            Remainder::Sine { .. } => f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicSequence {
    pub n_min: i64,
    pub du: usize,
    pub ds: usize,
    pub steps: Vec<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remainder: Option<Remainder>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoOrbit {
    pub n_min: i64,
    pub points: Vec<Vec<f64>>,
}

/// End condition for the finite window.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Boundary {
    /// Stable deviation fixed at the left end, unstable at the right end.
    /// Empty vectors mean zero.
    Clamp { left_stable: Vec<f64>, right_unstable: Vec<f64> },
    /// Step `m−1` maps the last point back to the first.
    Periodic,
    #[default]
    ZeroClamp,
}

impl Boundary {
    fn is_periodic(&self) -> bool {
        matches!(self, Boundary::Periodic)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowOrbit {
    pub n_min: i64,
    pub points: Vec<Vec<f64>>,
    pub max_deviation: f64,
    pub epsilon: f64,
    pub kappa: f64,
    pub theta: f64,
    pub residual: f64,
    pub boundary: Boundary,
    /// Picard iterations (0 for the affine solver).
    pub iterations: usize,
    /// Bound on the effect of the end conditions at the window centre,
    /// `e^{−κ·h}·θ·ε` with `h` the distance from the centre to the nearer end.
    pub clamp_error: f64,
}

pub(crate) fn mat(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput(format!("expected a {n}×{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub(crate) fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub(crate) fn vinf(v: &DVector<f64>) -> f64 {
    v.amax()
}

/// Linear data of the sequence in matrix form.
struct Prepared {
    du: usize,
    ds: usize,
    lu: Vec<DMatrix<f64>>,
    lu_inv: Vec<DMatrix<f64>>,
    ls: Vec<DMatrix<f64>>,
    kappa: f64,
}

impl HyperbolicSequence {
    pub fn dim(&self) -> usize {
        self.du + self.ds
    }

    /// Constant linear part `diag(lu, ls)` with zero offsets.
    pub fn constant(n_min: i64, steps: usize, lu: Vec<Vec<f64>>, ls: Vec<Vec<f64>>) -> HyperbolicSequence {
        let (du, ds) = (lu.len(), ls.len());
        let step = Step { lu, ls, b: vec![0.0; du + ds] };
        HyperbolicSequence { n_min, du, ds, steps: vec![step; steps], remainder: None }
    }

    fn prepare(&self) -> Result<Prepared> {
        let (du, ds) = (self.du, self.ds);
        let mut p = Prepared { du, ds, lu: vec![], lu_inv: vec![], ls: vec![], kappa: f64::INFINITY };
        if self.steps.is_empty() {
            return Err(Error::InvalidInput("sequence has no steps".into()));
        }
        for (n, s) in self.steps.iter().enumerate() {
            let lu = mat(&s.lu, du)?;
            let ls = mat(&s.ls, ds)?;
            if s.b.len() != du + ds {
                return Err(Error::InvalidInput(format!("step {n}: offset has wrong dimension")));
            }
            let inv = if du == 0 {
                DMatrix::zeros(0, 0)
            } else {
                lu.clone()
                    .try_inverse()
                    .ok_or_else(|| Error::InvalidInput(format!("step {n}: unstable block is singular")))?
            };
            let ku = if du == 0 { f64::INFINITY } else { -inf_norm(&inv).ln() };
            let ks = if ds == 0 { f64::INFINITY } else { -inf_norm(&ls).ln() };
            p.kappa = p.kappa.min(ku).min(ks);
            p.lu.push(lu);
            p.lu_inv.push(inv);
            p.ls.push(ls);
        }
        Ok(p)
    }

    /// Hyperbolicity rate `κ = min_n min(−log‖Lₙˢ‖, −log‖(Lₙᵘ)⁻¹‖)`.
    pub fn kappa(&self) -> Result<f64> {
        Ok(self.prepare()?.kappa)
    }

    /// `gₙ(z)` for the step with local index `n`.
    pub fn apply(&self, n: usize, z: &[f64]) -> Vec<f64> {
        let s = &self.steps[n];
        let mut out = s.b.clone();
        for i in 0..self.du {
            for j in 0..self.du {
                out[i] += s.lu[i][j] * z[j];
            }
        }
        for i in 0..self.ds {
            for j in 0..self.ds {
                out[self.du + i] += s.ls[i][j] * z[self.du + j];
            }
        }
        if let Some(r) = &self.remainder {
            let rz = r.eval(&DVector::from_column_slice(z));
            for (o, x) in out.iter_mut().zip(rz.iter()) {
                *o += x;
            }
        }
        out
    }

    /// Largest `‖gₙ(zₙ) − z_{n+1}‖` over the window.
    pub fn orbit_residual(&self, points: &[Vec<f64>], periodic: bool) -> f64 {
        let m = self.steps.len();
        (0..m)
            .map(|n| {
                let next = if periodic { &points[(n + 1) % m] } else { &points[n + 1] };
                self.apply(n, &points[n]).iter().zip(next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

pub fn theta(kappa: f64) -> f64 {
    1.0 / (1.0 - (-kappa).exp())
}

/// Admissibility bound on the remainder size for the Picard solver.
pub fn admissibility_bound(kappa: f64) -> f64 {
    (1.0 - (-kappa).exp()) / 4.0
}

impl PseudoOrbit {
    /// Jumps `eₙ = gₙ(xₙ) − xₙ₊₁`.
    pub fn jumps(&self, seq: &HyperbolicSequence, periodic: bool) -> Vec<Vec<f64>> {
        let m = seq.steps.len();
        (0..m)
            .map(|n| {
                let next = if periodic { &self.points[(n + 1) % m] } else { &self.points[n + 1] };
                seq.apply(n, &self.points[n]).iter().zip(next).map(|(a, b)| a - b).collect()
            })
            .collect()
    }

    pub fn jump_sizes(&self, seq: &HyperbolicSequence, periodic: bool) -> Vec<f64> {
        self.jumps(seq, periodic).iter().map(|e| e.iter().map(|x| x.abs()).fold(0.0, f64::max)).collect()
    }

    pub fn epsilon(&self, seq: &HyperbolicSequence, periodic: bool) -> f64 {
        self.jump_sizes(seq, periodic).into_iter().fold(0.0, f64::max)
    }
}

fn check_shapes(seq: &HyperbolicSequence, pseudo: &PseudoOrbit, boundary: &Boundary) -> Result<()> {
    let m = seq.steps.len();
    let want = if boundary.is_periodic() { m } else { m + 1 };
    if pseudo.points.len() != want {
        return Err(Error::InvalidInput(format!("pseudo-orbit has {} points, expected {want}", pseudo.points.len())));
    }
    if pseudo.n_min != seq.n_min {
        return Err(Error::InvalidInput("pseudo-orbit and sequence windows start at different indices".into()));
    }
    if pseudo.points.iter().any(|p| p.len() != seq.dim()) {
        return Err(Error::InvalidInput("pseudo-orbit point has wrong dimension".into()));
    }
    if let Boundary::Clamp { left_stable, right_unstable } = boundary {
        if !(left_stable.is_empty() || left_stable.len() == seq.ds) || !(right_unstable.is_empty() || right_unstable.len() == seq.du) {
            return Err(Error::InvalidInput("clamp values have wrong dimension".into()));
        }
    }
    Ok(())
}

/// Bounded solution of `uₙ₊₁ = Lₙuₙ + fₙ` under the given end condition.
fn solve_linear(p: &Prepared, f: &[DVector<f64>], boundary: &Boundary) -> Result<Vec<DVector<f64>>> {
    let (du, ds) = (p.du, p.ds);
    let m = f.len();
    let npts = if boundary.is_periodic() { m } else { m + 1 };
    let mut us: Vec<DVector<f64>> = vec![DVector::zeros(ds); m + 1];
    let mut uu: Vec<DVector<f64>> = vec![DVector::zeros(du); m + 1];
    let (s0, um) = match boundary {
        Boundary::Clamp { left_stable, right_unstable } => (
            if left_stable.is_empty() { DVector::zeros(ds) } else { DVector::from_column_slice(left_stable) },
            if right_unstable.is_empty() { DVector::zeros(du) } else { DVector::from_column_slice(right_unstable) },
        ),
        Boundary::ZeroClamp => (DVector::zeros(ds), DVector::zeros(du)),
        Boundary::Periodic => {
            // Fixed point of the period map for each block.
            let mut w = DVector::zeros(ds);
            let mut mprod = DMatrix::identity(ds, ds);
            for n in 0..m {
                w = &p.ls[n] * w + f[n].rows(du, ds);
                mprod = &p.ls[n] * mprod;
            }
            let s0 = (DMatrix::identity(ds, ds) - mprod)
                .lu()
                .solve(&w)
                .ok_or_else(|| Error::IllConditioned("stable period map has eigenvalue 1".into()))?;
            let mut v = DVector::zeros(du);
            let mut nprod = DMatrix::identity(du, du);
            for n in (0..m).rev() {
                v = &p.lu_inv[n] * (v - f[n].rows(0, du));
                nprod = &p.lu_inv[n] * nprod;
            }
            let um = (DMatrix::identity(du, du) - nprod)
                .lu()
                .solve(&v)
                .ok_or_else(|| Error::IllConditioned("unstable period map has eigenvalue 1".into()))?;
            (s0, um)
        }
    };
    us[0] = s0;
    for n in 0..m {
        us[n + 1] = &p.ls[n] * &us[n] + f[n].rows(du, ds);
    }
    uu[m] = um;
    for n in (0..m).rev() {
        uu[n] = &p.lu_inv[n] * (&uu[n + 1] - f[n].rows(0, du));
    }
    Ok((0..npts)
        .map(|n| {
            let mut v = DVector::zeros(du + ds);
            v.rows_mut(0, du).copy_from(&uu[n]);
            v.rows_mut(du, ds).copy_from(&us[n]);
            v
        })
        .collect())
}

fn require_hyperbolic(kappa: f64) -> Result<()> {
    if !(kappa > 0.0) {
        return Err(Error::HypothesisViolated(format!("sequence is not hyperbolic (kappa = {kappa:.6})")));
    }
    Ok(())
}

fn finish(
    seq: &HyperbolicSequence,
    pseudo: &PseudoOrbit,
    u: &[DVector<f64>],
    kappa: f64,
    epsilon: f64,
    boundary: &Boundary,
    iterations: usize,
) -> ShadowOrbit {
    let points: Vec<Vec<f64>> =
        pseudo.points.iter().zip(u).map(|(x, d)| x.iter().zip(d.iter()).map(|(a, b)| a + b).collect()).collect();
    let max_deviation = u.iter().map(vinf).fold(0.0, f64::max);
    let residual = seq.orbit_residual(&points, boundary.is_periodic());
    let th = theta(kappa);
    let half = (seq.steps.len() / 2) as f64;
    let clamp_error = if boundary.is_periodic() { 0.0 } else { (-kappa * half).exp() * th * epsilon };
    ShadowOrbit {
        n_min: seq.n_min,
        points,
        max_deviation,
        epsilon,
        kappa,
        theta: th,
        residual,
        boundary: boundary.clone(),
        iterations,
        clamp_error,
    }
}

/// Shadow a pseudo-orbit of an affine sequence (the remainder, if any, is
/// ignored).
pub fn shadow_affine(seq: &HyperbolicSequence, pseudo: &PseudoOrbit, boundary: &Boundary) -> Result<ShadowOrbit> {
    check_shapes(seq, pseudo, boundary)?;
    let affine = HyperbolicSequence { remainder: None, ..seq.clone() };
    let p = affine.prepare()?;
    require_hyperbolic(p.kappa)?;
    let periodic = boundary.is_periodic();
    let f: Vec<DVector<f64>> = pseudo.jumps(&affine, periodic).into_iter().map(DVector::from_vec).collect();
    let eps = f.iter().map(vinf).fold(0.0, f64::max);
    let u = solve_linear(&p, &f, boundary)?;
    Ok(finish(&affine, pseudo, &u, p.kappa, eps, boundary, 0))
}

/// Shadow a pseudo-orbit of `gₙ = Lₙ + bₙ + r` by Picard iteration on the
/// bounded-solution operator.
pub fn shadow_nonlinear(
    seq: &HyperbolicSequence,
    pseudo: &PseudoOrbit,
    boundary: &Boundary,
    tol: f64,
    max_iter: usize,
) -> Result<ShadowOrbit> {
    check_shapes(seq, pseudo, boundary)?;
    let p = seq.prepare()?;
    require_hyperbolic(p.kappa)?;
    let Some(r) = seq.remainder else {
        return shadow_affine(seq, pseudo, boundary);
    };
    let eta = r.c1_size();
    let bound = admissibility_bound(p.kappa);
    if !(eta < bound) {
        return Err(Error::AdmissibilityViolated { eta, bound });
    }
    let periodic = boundary.is_periodic();
    let f: Vec<DVector<f64>> = pseudo.jumps(seq, periodic).into_iter().map(DVector::from_vec).collect();
    let eps = f.iter().map(vinf).fold(0.0, f64::max);
    let xs: Vec<DVector<f64>> = pseudo.points.iter().map(|x| DVector::from_column_slice(x)).collect();
    let rx: Vec<DVector<f64>> = xs.iter().map(|x| r.eval(x)).collect();
    let m = seq.steps.len();
    let mut u = solve_linear(&p, &f, boundary)?;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let forcing: Vec<DVector<f64>> = (0..m).map(|n| &f[n] + r.eval(&(&xs[n] + &u[n])) - &rx[n]).collect();
        let next = solve_linear(&p, &forcing, boundary)?;
        if let Some(n) = (0..next.len()).find(|&n| vinf(&(&xs[n] + &next[n])) > r.radius()) {
            return Err(Error::PreconditionFailed(format!(
                "iterate left the region where the remainder bound holds (index {})",
                seq.n_min + n as i64
            )));
        }
        u = next;
        let pts: Vec<Vec<f64>> = xs.iter().zip(&u).map(|(x, d)| (x + d).as_slice().to_vec()).collect();
        residual = seq.orbit_residual(&pts, periodic);
        if residual <= tol {
            return Ok(finish(seq, pseudo, &u, p.kappa, eps, boundary, it));
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual })
}

/// Independent solve of the affine deviation equations as one dense linear
/// system (unknowns stacked, end conditions as extra rows).
pub fn solve_dense(seq: &HyperbolicSequence, pseudo: &PseudoOrbit, boundary: &Boundary) -> Result<Vec<Vec<f64>>> {
    check_shapes(seq, pseudo, boundary)?;
    let affine = HyperbolicSequence { remainder: None, ..seq.clone() };
    let (du, ds, d) = (seq.du, seq.ds, seq.dim());
    let m = seq.steps.len();
    let periodic = boundary.is_periodic();
    let npts = if periodic { m } else { m + 1 };
    let jumps = pseudo.jumps(&affine, periodic);
    let rows = m * d + if periodic { 0 } else { d };
    let mut a = DMatrix::<f64>::zeros(rows, npts * d);
    let mut rhs = DVector::<f64>::zeros(rows);
    for n in 0..m {
        let next = if periodic { (n + 1) % m } else { n + 1 };
        let s = &seq.steps[n];
        for i in 0..d {
            let r = n * d + i;
            a[(r, next * d + i)] += 1.0;
            for j in 0..d {
                let l = if i < du && j < du {
                    s.lu[i][j]
                } else if i >= du && j >= du {
                    s.ls[i - du][j - du]
                } else {
                    0.0
                };
                a[(r, n * d + j)] -= l;
            }
            rhs[r] = jumps[n][i];
        }
    }
    if !periodic {
        let (ls, ru) = match boundary {
            Boundary::Clamp { left_stable, right_unstable } => (left_stable.clone(), right_unstable.clone()),
            _ => (vec![], vec![]),
        };
        for i in 0..ds {
            a[(m * d + i, du + i)] = 1.0;
            rhs[m * d + i] = ls.get(i).copied().unwrap_or(0.0);
        }
        for i in 0..du {
            a[(m * d + ds + i, m * d + i)] = 1.0;
            rhs[m * d + ds + i] = ru.get(i).copied().unwrap_or(0.0);
        }
    }
    let sol = a.lu().solve(&rhs).ok_or_else(|| Error::IllConditioned("dense system is singular".into()))?;
    Ok((0..npts).map(|n| (0..d).map(|i| pseudo.points[n][i] + sol[n * d + i]).collect()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub pass: bool,
    /// `(k, rhs − lhs)` for each index of the range.
    pub margins: Vec<(i64, f64)>,
    pub min_margin: f64,
}

/// Slack allowed for rounding in the decay comparison.
pub const DECAY_SLACK: f64 = 1e-12;

/// Check `‖zₖ − yₖ‖ ≤ e^{−κ(k−n1)}‖z_{n1} − y_{n1}‖ + e^{−κ(n2−k)}‖z_{n2} − y_{n2}‖`
/// for `n1 ≤ k ≤ n2`. Both inputs must be orbits of the sequence.
pub fn uniqueness_decay_check(
    seq: &HyperbolicSequence,
    a: &ShadowOrbit,
    b: &ShadowOrbit,
    n1: i64,
    n2: i64,
    orbit_tol: f64,
) -> Result<DecayReport> {
    let kappa = seq.kappa()?;
    require_hyperbolic(kappa)?;
    for o in [a, b] {
        let periodic = o.boundary.is_periodic();
        let m = seq.steps.len();
        for n in 0..m {
            let next = if periodic { &o.points[(n + 1) % m] } else { &o.points[n + 1] };
            let r = seq.apply(n, &o.points[n]).iter().zip(next).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if r > orbit_tol {
                return Err(Error::NotAnOrbit { index: seq.n_min + n as i64, residual: r });
            }
        }
    }
    let idx = |n: i64| -> Result<usize> {
        let i = n - seq.n_min;
        if i < 0 || i as usize >= a.points.len().min(b.points.len()) {
            return Err(Error::InvalidInput(format!("index {n} outside the window")));
        }
        Ok(i as usize)
    };
    let dist = |i: usize| a.points[i].iter().zip(&b.points[i]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let (i1, i2) = (idx(n1)?, idx(n2)?);
    let (d1, d2) = (dist(i1), dist(i2));
    let mut margins = Vec::new();
    for k in n1..=n2 {
        let i = idx(k)?;
        let rhs = (-kappa * (k - n1) as f64).exp() * d1 + (-kappa * (n2 - k) as f64).exp() * d2;
        margins.push((k, rhs - dist(i)));
    }
    let min_margin = margins.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    Ok(DecayReport { pass: min_margin >= -DECAY_SLACK, margins, min_margin })
}

/// Random affine instance with hyperbolicity rate at least `kappa`: unstable
/// blocks with `‖(Lᵘ)⁻¹‖ < e^{−κ}`, stable blocks with `‖Lˢ‖ < e^{−κ}`,
/// random offsets and a pseudo-orbit with jumps of size exactly `eps` in sup
/// norm.
pub fn random_affine_instance<R: Rng>(
    rng: &mut R,
    kappa: f64,
    du: usize,
    ds: usize,
    steps: usize,
    eps: f64,
) -> (HyperbolicSequence, PseudoOrbit) {
    let d = du + ds;
    let c = (-kappa).exp();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        // Stable block: random matrix rescaled to norm c·s with s < 1.
        let mut ls: Vec<Vec<f64>> = (0..ds).map(|_| (0..ds).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let nrm = ls.iter().map(|r| r.iter().map(|x: &f64| x.abs()).sum::<f64>()).fold(0.0, f64::max).max(1e-12);
        let s = c * rng.random_range(0.3..0.99) / nrm;
        ls.iter_mut().for_each(|r| r.iter_mut().for_each(|x| *x *= s));
        // Unstable block: inverse of such a matrix, kept well conditioned by
        // a dominant diagonal.
        let inv = loop {
            let mut m: Vec<Vec<f64>> = (0..du)
                .map(|i| (0..du).map(|j| if i == j { rng.random_range(0.5..1.0) } else { rng.random_range(-0.2..0.2) / du as f64 }).collect())
                .collect();
            let nrm = m.iter().map(|r| r.iter().map(|x: &f64| x.abs()).sum::<f64>()).fold(0.0, f64::max);
            let s = c * rng.random_range(0.3..0.99) / nrm;
            m.iter_mut().for_each(|r| r.iter_mut().for_each(|x| *x *= s));
            if let Some(i) = DMatrix::from_fn(du, du, |i, j| m[i][j]).try_inverse() {
                break i;
            }
        };
        let lu: Vec<Vec<f64>> = (0..du).map(|i| (0..du).map(|j| inv[(i, j)]).collect()).collect();
        out.push(Step { lu, ls, b: vec![0.0; d] });
    }
    // Bounded points; offsets chosen so that gₙ(xₙ) = xₙ₊₁ + eₙ exactly.
    let pts: Vec<Vec<f64>> = (0..=steps).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut seq = HyperbolicSequence { n_min: 0, du, ds, steps: out, remainder: None };
    for n in 0..steps {
        let mut e: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = e.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
        e.iter_mut().for_each(|x| *x *= eps / m);
        let lx = seq.apply(n, &pts[n]);
        seq.steps[n].b = (0..d).map(|i| pts[n + 1][i] + e[i] - lx[i]).collect();
    }
    (seq, PseudoOrbit { n_min: 0, points: pts })
}

/// Shadowed concatenation of horseshoe orbit segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Concatenation {
    pub orbit: ShadowOrbit,
    /// `y₀`, the point coded by the concatenated branch word.
    pub coded_point: Vec<f64>,
    /// Branch used at each step of the window.
    pub branches: Vec<usize>,
    /// Endpoint gap entering each block after the first (sup norm).
    pub gaps: Vec<f64>,
    /// The concatenated segments before shadowing.
    pub pseudo: Vec<Vec<f64>>,
}

/// The horseshoe maps `z ↦ Az + vⱼ` along a branch word, as a hyperbolic
/// sequence starting at index 0.
pub fn horseshoe_sequence(h: &StandardAffineHorseshoe, branches: &[usize]) -> HyperbolicSequence {
    let lin = &h.linear;
    let du = lin.d_u();
    let diag = |d: &[f64]| -> Vec<Vec<f64>> { (0..d.len()).map(|i| (0..d.len()).map(|k| if i == k { d[i] } else { 0.0 }).collect()).collect() };
    let lu = diag(&lin.diag[..du]);
    let ls = diag(&lin.diag[du..]);
    HyperbolicSequence {
        n_min: 0,
        du,
        ds: lin.d_s,
        steps: branches.iter().map(|&j| Step { lu: lu.clone(), ls: ls.clone(), b: h.v(j).to_vec() }).collect(),
        remainder: None,
    }
}

/// Concatenate exact orbit segments of the periodic points of the words
/// `ys[code[0]], ys[code[1]], …` and shadow the result. Each block starts
/// at the periodic point of its word, so the only jumps are at block
/// boundaries; a jump above `eps0` is an error.
pub fn concatenate_segments(
    h: &StandardAffineHorseshoe,
    ys: &[Vec<usize>],
    code: &[usize],
    boundary: &Boundary,
    eps0: f64,
) -> Result<Concatenation> {
    let nb = h.n_branches();
    let n = ys.first().map_or(0, |y| y.len());
    if n == 0 || code.is_empty() {
        return Err(Error::InvalidInput("need nonempty words and a nonempty code".into()));
    }
    for y in ys {
        if y.len() != n || y.iter().any(|&j| j >= nb) {
            return Err(Error::InadmissibleWord(format!("{y:?} (length {n}, {nb} branches)")));
        }
    }
    if let Some(&c) = code.iter().find(|&&c| c >= ys.len()) {
        return Err(Error::InadmissibleWord(format!("code letter {c} outside alphabet of size {}", ys.len())));
    }
    let starts: Vec<Vec<f64>> = ys.iter().map(|y| point_from_itinerary(h, &Itinerary::periodic(PERIODIC_WINDOW, y)).coords).collect();
    let branches: Vec<usize> = code.iter().flat_map(|&c| ys[c].iter().copied()).collect();
    let mut points = Vec::with_capacity(branches.len() + 1);
    let mut gaps = Vec::new();
    for (k, &c) in code.iter().enumerate() {
        let mut z = starts[c].clone();
        if k > 0 {
            let prev = points.last().map(|p: &Vec<f64>| h.apply(branches[k * n - 1], p)).unwrap();
            let gap = prev.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if gap > eps0 {
                return Err(Error::GapTooLarge { gap, eps0, at: k });
            }
            gaps.push(gap);
        }
        for &j in &ys[c] {
            points.push(z.clone());
            z = h.apply(j, &z);
        }
        if k + 1 == code.len() && !boundary.is_periodic() {
            points.push(z);
        }
    }
    if boundary.is_periodic() {
        let last = h.apply(*branches.last().unwrap(), points.last().unwrap());
        let gap = last.iter().zip(&points[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > eps0 {
            return Err(Error::GapTooLarge { gap, eps0, at: 0 });
        }
    }
    let seq = horseshoe_sequence(h, &branches);
    let pseudo = PseudoOrbit { n_min: 0, points };
    let orbit = shadow_affine(&seq, &pseudo, boundary)?;
    Ok(Concatenation { coded_point: orbit.points[0].clone(), orbit, branches, gaps, pseudo: pseudo.points })
}

/// Window used for the periodic points starting each block.
pub const PERIODIC_WINDOW: usize = 60;
