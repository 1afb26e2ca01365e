//! Verification of the blender property against 1-Lipschitz graphs, and the
//! transversal recurrent-set criterion, on affine models with one strong
//! unstable direction.
//!
//! Coordinates are `(x_uu, x_c, x_s)` on the unit cube. A graph is a map
//! `θ : [−1, 1] → (−1, 1)^{d_c + d_s}` read through a chart: the strong
//! unstable coordinate `t ∈ [0, 1]` corresponds to `τ = 2t − 1`, and the
//! centre-stable coordinates are `x_cs + δ·θ(τ)`.

use crate::affine_horseshoe::StandardAffineHorseshoe;
use crate::error::{Error, Result};
use crate::ifs_blender::{center_ifs_unchecked, recurrent_compact_check, CenterIfs, GridSet};
use crate::interval::{up, Interval};
use crate::seed::rng_for;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_ITER: usize = 60;
pub const DEFAULT_TOL: f64 = 1e-9;
/// Node budget of the depth-first search in `blender_graph_test`.
pub const NODE_BUDGET: usize = 200_000;

fn ival(x: f64) -> Interval {
    Interval::point(x)
}

/// Piecewise-linear graph over `n` equally spaced nodes of `[−1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzGraph {
    /// `values[i]` is `θ(τᵢ)` with `τᵢ = −1 + 2i/(n−1)`.
    pub values: Vec<Vec<f64>>,
}

impl LipschitzGraph {
    pub fn new(values: Vec<Vec<f64>>) -> Result<LipschitzGraph> {
        if values.len() < 2 || values[0].is_empty() || values.iter().any(|v| v.len() != values[0].len()) {
            return Err(Error::InvalidInput("graph needs at least two nodes of equal dimension".into()));
        }
        let g = LipschitzGraph { values };
        let lip = g.lipschitz_certificate();
        if lip > 1.0 {
            return Err(Error::InvalidInput(format!("Lipschitz certificate {lip} exceeds 1")));
        }
        Ok(g)
    }

    pub fn constant(value: Vec<f64>, nodes: usize) -> LipschitzGraph {
        LipschitzGraph { values: vec![value; nodes.max(2)] }
    }

    pub fn nodes(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    fn spacing(&self) -> f64 {
        2.0 / (self.nodes() - 1) as f64
    }

    /// Upper bound on the max edge slope (∞-norm on values).
    pub fn lipschitz_certificate(&self) -> f64 {
        let h = self.spacing();
        self.values
            .windows(2)
            .flat_map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| up(up((a - b).abs()) / crate::interval::down(h))))
            .fold(0.0, f64::max)
    }

    /// Values strictly inside `(−1, 1)`.
    pub fn inside_chart(&self) -> bool {
        self.values.iter().flatten().all(|&x| x > -1.0 && x < 1.0)
    }

    /// Enclosure of `θ` over `τ ∈ [lo, hi] ⊆ [−1, 1]`, per coordinate.
    pub fn enclose(&self, tau: Interval) -> Vec<Interval> {
        let h = self.spacing();
        let last = self.nodes() - 1;
        let idx = |x: f64| (((x + 1.0) / h).floor().max(0.0) as usize).min(last - 1);
        let (i0, i1) = (idx(tau.lo), idx(tau.hi));
        (0..self.dim())
            .map(|k| {
                let at = |x: f64| {
                    let i = idx(x);
                    let s = ((x + 1.0) / h - i as f64).clamp(0.0, 1.0);
                    self.values[i][k] + s * (self.values[i + 1][k] - self.values[i][k])
                };
                let mut lo = at(tau.lo).min(at(tau.hi));
                let mut hi = at(tau.lo).max(at(tau.hi));
                for i in (i0 + 1)..=i1 {
                    lo = lo.min(self.values[i][k]);
                    hi = hi.max(self.values[i][k]);
                }
                // Interpolation rounding: a few ulps of the node magnitudes.
                Interval::new(lo, hi).inflate(8.0 * f64::EPSILON)
            })
            .collect()
    }

    /// Random node values projected to the Lipschitz cone by clamping each
    /// edge in turn, then into `(−1, 1)`.
    pub fn random<R: Rng>(rng: &mut R, nodes: usize, dim: usize) -> LipschitzGraph {
        let nodes = nodes.max(2);
        let h = 2.0 / (nodes - 1) as f64 * (1.0 - 1e-9);
        let bound = 1.0 - 1e-9;
        let style = rng.random_range(0..3);
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let raw: Vec<f64> = (0..dim)
                .map(|k| match style {
                    0 => rng.random_range(-1.0..1.0),
                    // Steep zig-zags.
                    1 => values.last().map_or(rng.random_range(-1.0..1.0), |p: &Vec<f64>| p[k] + if rng.random_bool(0.5) { h } else { -h }),
                    _ => values.last().map_or(rng.random_range(-1.0..1.0), |p: &Vec<f64>| p[k] + rng.random_range(-h..h)),
                })
                .collect();
            let v = match (i, values.last()) {
                (0, _) | (_, None) => raw,
                (_, Some(p)) => raw.iter().zip(p).map(|(x, q)| x.clamp(q - h, q + h)).collect(),
            };
            values.push(v.into_iter().map(|x| x.clamp(-bound, bound)).collect());
        }
        LipschitzGraph { values }
    }
}

/// Chart of the centre-stable coordinates: `x_cs + δ·θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlenderChart {
    pub x_c: Vec<f64>,
    pub x_s: Vec<f64>,
    pub delta: f64,
}

impl BlenderChart {
    /// With a recurrent centre set `K` (recentred coordinates): the chart is
    /// centred in `∩ⱼ Lⱼ(hull K)` with `δ` at 90% of its half-width, so each
    /// branch is available at time 0. Without one, or when that
    /// intersection is empty, the centre sits at the midpoint of the hull of
    /// the centre attractor with `δ = 0.1`. Stable coordinates are centred
    /// at `1/2`.
    pub fn for_model(h: &StandardAffineHorseshoe, k: Option<&GridSet>) -> Result<BlenderChart> {
        let lin = &h.linear;
        let ifs = center_ifs_unchecked(h)?;
        let mut x_c = Vec::new();
        let mut delta = f64::INFINITY;
        let hull = k.map(|k| hull_box(k));
        for i in 0..lin.d_c {
            let l = ifs.contraction[i];
            let fixed: Vec<f64> = ifs.translations.iter().map(|v| v[i] / (1.0 - l) + 0.5).collect();
            let attractor_mid = 0.5 * (fixed.iter().cloned().fold(f64::INFINITY, f64::min) + fixed.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            let common = hull.as_ref().and_then(|hb| {
                let (lo, hi) = ifs.translations.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), v| {
                    (lo.max(l * hb[i].lo + v[i] + 0.5), hi.min(l * hb[i].hi + v[i] + 0.5))
                });
                (lo < hi).then_some((lo, hi))
            });
            match common {
                Some((lo, hi)) => {
                    x_c.push(0.5 * (lo + hi));
                    delta = delta.min(0.45 * (hi - lo));
                }
                None => {
                    x_c.push(attractor_mid);
                    delta = delta.min(0.1);
                }
            }
        }
        Ok(BlenderChart { x_c, x_s: vec![0.5; lin.d_s], delta })
    }

    fn point(&self, theta: &[Interval]) -> Vec<Interval> {
        self.x_c.iter().chain(&self.x_s).zip(theta).map(|(x, t)| ival(*x) + *t * ival(self.delta)).collect()
    }
}

fn hull_box(k: &GridSet) -> Vec<Interval> {
    let mut lo = vec![f64::INFINITY; k.dim];
    let mut hi = vec![f64::NEG_INFINITY; k.dim];
    for idx in (0..k.mask.len()).filter(|&i| k.mask[i]) {
        for (i, x) in k.cell_box(idx).into_iter().enumerate() {
            lo[i] = lo[i].min(x.lo);
            hi[i] = hi[i].max(x.hi);
        }
    }
    lo.into_iter().zip(hi).map(|(a, b)| Interval::new(a, b)).collect()
}

fn require_one_strong(h: &StandardAffineHorseshoe) -> Result<()> {
    if h.linear.d_uu != 1 || h.linear.d_c == 0 {
        return Err(Error::UnsupportedDimension("blender verification needs d_uu = 1 and d_c ≥ 1".into()));
    }
    Ok(())
}

/// `K = K^c × ∪ⱼ Bⱼˢ` on the transversal `{1/2} × (0,1)^{d_c+d_s}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransversalRecurrentSet {
    /// Centre part in recentred coordinates `[−1/2, 1/2]^{d_c}`.
    pub center: GridSet,
    /// The stable slabs `Bⱼˢ` (empty when `d_s = 0`).
    pub stable: Vec<Vec<Interval>>,
}

/// Stable slabs `AˢH + vⱼˢ`, with `H` the hull of the attractor of the
/// stable branch maps. They equal `Bⱼˢ` when the outermost branches fix
/// the faces of the cube, and are invariant under every branch in general.
pub fn stable_slabs(h: &StandardAffineHorseshoe) -> Vec<Vec<Interval>> {
    let lin = &h.linear;
    if lin.d_s == 0 {
        return Vec::new();
    }
    let du = lin.d_u();
    let hull: Vec<Interval> = lin
        .stable()
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let fixed = (0..h.n_branches()).map(|j| h.v(j)[du + i] / (1.0 - a));
            let (lo, hi) = fixed.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            Interval::new(lo, hi).inflate(4.0 * f64::EPSILON)
        })
        .collect();
    (0..h.n_branches())
        .map(|j| hull.iter().enumerate().map(|(i, x)| *x * ival(lin.stable()[i]) + ival(h.v(j)[du + i])).collect())
        .collect()
}

pub fn build_transversal_recurrent_set(h: &StandardAffineHorseshoe, kc: &GridSet) -> Result<TransversalRecurrentSet> {
    require_one_strong(h)?;
    let ifs = center_ifs_unchecked(h)?;
    if !recurrent_compact_check(&ifs, kc).is_certified() {
        return Err(Error::NotCertified("centre set is not a recurrent compact set of the centre IFS".into()));
    }
    Ok(TransversalRecurrentSet { center: kc.clone(), stable: stable_slabs(h) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TransversalVerdict {
    Certified { max_n: usize, plaques_checked: usize },
    Rejected { cell: Option<usize>, slab: Option<usize>, reason: String },
}

impl TransversalVerdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, TransversalVerdict::Certified { .. })
    }
}

/// For each centre cell and stable slab, find `n ≤ n_max` and branches
/// `j₁..jₙ` such that the composed inverse branch maps the full
/// strong-unstable plaque through the cell into itself, the centre part
/// into the erosion of `K^c`, and the stable slab into `∪ⱼBⱼˢ`.
pub fn transversal_recurrence_check(h: &StandardAffineHorseshoe, k: &TransversalRecurrentSet, n_max: usize) -> Result<TransversalVerdict> {
    require_one_strong(h)?;
    if n_max == 0 {
        return Ok(TransversalVerdict::Rejected { cell: None, slab: None, reason: "n_max = 0".into() });
    }
    if k.center.is_empty() {
        return Ok(TransversalVerdict::Rejected { cell: None, slab: None, reason: "empty centre set".into() });
    }
    let ifs = center_ifs_unchecked(h)?;
    let lin = &h.linear;
    let interior = k.center.interior();
    let nb = h.n_branches();
    let unit = Interval::new(0.0, 1.0);
    let strips_ok: Vec<bool> = (0..nb).map(|j| h.unstable_rect(j)[0].subset_of(&unit)).collect();
    let slabs: Vec<Vec<Interval>> = if k.stable.is_empty() { vec![vec![]] } else { k.stable.clone() };
    let cells: Vec<usize> = (0..k.center.mask.len()).filter(|&i| k.center.mask[i]).collect();
    let results: Vec<std::result::Result<usize, (usize, usize)>> = cells
        .par_iter()
        .flat_map_iter(|&cell| {
            let cbox = k.center.cell_box(cell);
            let ifs = &ifs;
            let interior = &interior;
            let strips_ok = &strips_ok;
            slabs.iter().enumerate().map(move |(si, slab)| {
                // Breadth-first over words, shortest first.
                let mut frontier: Vec<(Vec<Interval>, Vec<Interval>)> = vec![(cbox.clone(), slab.clone())];
                for n in 1..=n_max {
                    let mut next = Vec::new();
                    for (c, s) in &frontier {
                        for j in (0..nb).filter(|&j| strips_ok[j]) {
                            // Forward branch on the plaque: centre coordinates
                            // go through Lⱼ⁻¹, stable ones through Aˢ·+vⱼˢ.
                            let c2 = ifs.preimage(j, c);
                            let s2: Vec<Interval> = s
                                .iter()
                                .enumerate()
                                .map(|(i, x)| *x * ival(lin.stable()[i]) + ival(h.v(j)[lin.d_u() + i]))
                                .collect();
                            let centre_ok = k.center.box_within(interior, &c2);
                            let stable_ok = k.stable.is_empty() || k.stable.iter().any(|b| crate::interval::box_subset(&s2, b));
                            if centre_ok && stable_ok {
                                return Ok(n);
                            }
                            if c2.iter().all(|x| x.lo >= -0.5 && x.hi <= 0.5) {
                                next.push((c2, s2));
                            }
                        }
                    }
                    if next.len() > 4096 {
                        break;
                    }
                    frontier = next;
                }
                Err((cell, si))
            })
        })
        .collect();
    let mut max_n = 0;
    for r in &results {
        match r {
            Ok(n) => max_n = max_n.max(*n),
            Err((cell, si)) => {
                return Ok(TransversalVerdict::Rejected {
                    cell: Some(*cell),
                    slab: (!k.stable.is_empty()).then_some(*si),
                    reason: format!("no word of length ≤ {n_max} returns the plaque over centre cell {:?}", k.center.cell_box(*cell)),
                })
            }
        }
    }
    Ok(TransversalVerdict::Certified { max_n, plaques_checked: results.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum GraphVerdict {
    /// `point` is the midpoint of `enclosure`, a box in cube coordinates
    /// around the graph point whose orbit follows `itinerary`.
    Intersects { point: Vec<f64>, enclosure: Vec<Interval>, itinerary: Vec<usize> },
    /// Every branch is provably unavailable after `exit_time − 1` steps.
    Escapes { exit_time: usize },
}

/// `t`-interval of the graph points whose strong unstable coordinate
/// follows the itinerary, `T_{j₀}∘⋯∘T_{jₙ}([0,1])`.
fn t_interval(h: &StandardAffineHorseshoe, it: &[usize]) -> Interval {
    let a = h.linear.diag[0];
    it.iter().rev().fold(Interval::new(0.0, 1.0), |u, &j| (u - ival(h.v(j)[0])) / ival(a))
}

/// Enclosure of the graph over a `t`-interval, as a cube point.
fn graph_box(chart: &BlenderChart, g: &LipschitzGraph, t: Interval) -> Vec<Interval> {
    let tau = Interval::new((t.lo * 2.0 - 1.0).max(-1.0), (t.hi * 2.0 - 1.0).min(1.0)).inflate(2.0 * f64::EPSILON);
    let tau = Interval::new(tau.lo.max(-1.0), tau.hi.min(1.0));
    let mut z = vec![t];
    z.extend(chart.point(&g.enclose(tau)));
    z
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Fit {
    Inside,
    Outside,
    Partial,
}

/// Iterate the centre-stable part of a box through the itinerary and
/// classify whether step `n = it.len() − 1` is allowed.
fn fit(h: &StandardAffineHorseshoe, z0: &[Interval], it: &[usize]) -> (Fit, Vec<Interval>) {
    let lin = &h.linear;
    let mut cs: Vec<Interval> = z0[1..].to_vec();
    let n = it.len() - 1;
    for &j in &it[..n] {
        cs = cs.iter().enumerate().map(|(i, x)| *x * ival(lin.diag[1 + i]) + ival(h.v(j)[1 + i])).collect();
    }
    let j = it[n];
    let rect = h.unstable_rect(j);
    let mut verdict = Fit::Inside;
    for i in 0..lin.d_c {
        let x = cs[i];
        if !x.intersects(&rect[1 + i]) {
            return (Fit::Outside, cs);
        }
        if !x.subset_of(&rect[1 + i]) {
            verdict = Fit::Partial;
        }
    }
    let unit = Interval::new(0.0, 1.0);
    for x in &cs[lin.d_c..] {
        if !x.intersects(&unit) {
            return (Fit::Outside, cs);
        }
        if !x.subset_of(&unit) {
            verdict = Fit::Partial;
        }
    }
    (verdict, cs)
}

/// Search for a point of the graph whose forward orbit stays in the branch
/// rectangles for `max_iter` steps. Branches are tried nearest-to-chart
/// first with backtracking.
pub fn blender_graph_test(h: &StandardAffineHorseshoe, chart: &BlenderChart, g: &LipschitzGraph, max_iter: usize, tol: f64) -> Result<GraphVerdict> {
    require_one_strong(h)?;
    let lin = &h.linear;
    if g.dim() != lin.d_c + lin.d_s {
        return Err(Error::InvalidInput(format!("graph has {} values per node, model needs {}", g.dim(), lin.d_c + lin.d_s)));
    }
    if !g.inside_chart() {
        return Err(Error::PreconditionFailed("graph leaves the chart box (−1, 1)".into()));
    }
    let nb = h.n_branches();
    let target: Vec<f64> = chart.x_c.iter().chain(&chart.x_s).copied().collect();
    let mut nodes = 0usize;
    let mut deepest = 0usize;
    let mut undecided = false;
    let mut it: Vec<usize> = Vec::new();
    // Stack of remaining candidate lists per depth.
    let mut stack: Vec<Vec<usize>> = Vec::new();
    let order = |it: &[usize]| -> (Vec<usize>, bool) {
        let mut cands = Vec::new();
        let mut partial = false;
        for j in 0..nb {
            let mut w = it.to_vec();
            w.push(j);
            let z0 = graph_box(chart, g, t_interval(h, &w));
            let (f, cs) = fit(h, &z0, &w);
            match f {
                Fit::Inside => {
                    let next: f64 = cs
                        .iter()
                        .enumerate()
                        .map(|(i, x)| (x.mid() * lin.diag[1 + i] + h.v(j)[1 + i] - target[i]).abs())
                        .fold(0.0, f64::max);
                    cands.push((next, j));
                }
                Fit::Partial => partial = true,
                Fit::Outside => {}
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0));
        (cands.into_iter().map(|c| c.1).collect(), partial)
    };
    let (first, p) = order(&it);
    undecided |= p;
    stack.push(first);
    loop {
        if it.len() == max_iter {
            let z = graph_box(chart, g, t_interval(h, &it));
            let diameter = z.iter().map(|x| x.width()).fold(0.0, f64::max);
            if diameter > tol {
                return Err(Error::ToleranceNotReached { diameter, tol });
            }
            return Ok(GraphVerdict::Intersects { point: z.iter().map(|x| x.mid()).collect(), enclosure: z, itinerary: it });
        }
        match stack.last_mut().and_then(|c| c.pop()) {
            Some(j) => {
                nodes += 1;
                if nodes > NODE_BUDGET {
                    return Err(Error::SearchExhausted { detail: format!("node budget {NODE_BUDGET} exhausted at depth {deepest}") });
                }
                it.push(j);
                deepest = deepest.max(it.len());
                if it.len() < max_iter {
                    let (c, p) = order(&it);
                    undecided |= p;
                    stack.push(c);
                }
            }
            None => {
                stack.pop();
                if it.pop().is_none() {
                    if undecided {
                        return Err(Error::ToleranceNotReached { diameter: f64::INFINITY, tol });
                    }
                    return Ok(GraphVerdict::Escapes { exit_time: deepest + 1 });
                }
            }
        }
    }
}

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Exact re-check of an `Intersects` verdict: the midpoint of the
/// itinerary's parameter interval is put on the graph and iterated in
/// rational arithmetic (model constants taken as the exact rationals of
/// their f64 values). Every iterate must lie in its branch rectangle
/// inflated by `tol`.
pub fn recertify(h: &StandardAffineHorseshoe, chart: &BlenderChart, g: &LipschitzGraph, itinerary: &[usize], tol: f64) -> bool {
    let lin = &h.linear;
    let d = lin.dim();
    let diag: Vec<BigRational> = lin.diag.iter().map(|&a| rat(a)).collect();
    let v: Vec<Vec<BigRational>> = (0..h.n_branches()).map(|j| h.v(j).iter().map(|&x| rat(x)).collect()).collect();
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut t = half.clone();
    for &j in itinerary.iter().rev() {
        t = (t - &v[j][0]) / &diag[0];
    }
    // θ at τ = 2t − 1 by exact linear interpolation.
    let tau = &t * BigRational::from_integer(2.into()) - BigRational::one();
    let n = g.nodes();
    let pos = (&tau + BigRational::one()) * BigRational::from_integer(BigInt::from(n - 1)) / BigRational::from_integer(2.into());
    let i = pos.floor().to_integer().try_into().unwrap_or(0usize).min(n - 2);
    let s = &pos - BigRational::from_integer(BigInt::from(i));
    let delta = rat(chart.delta);
    let mut z = vec![t];
    for (k, x) in chart.x_c.iter().chain(&chart.x_s).enumerate() {
        let a = rat(g.values[i][k]);
        let b = rat(g.values[i + 1][k]);
        let theta = &a + &s * (b - &a);
        z.push(rat(*x) + &delta * theta);
    }
    let tol = rat(tol);
    let zero = BigRational::zero();
    let one = BigRational::one();
    for &j in itinerary {
        // Branch rectangle: (Aᵘ)⁻¹([0,1] − vᵘ) on the unstable coordinates.
        for k in 0..lin.d_u() {
            let lo = (&zero - &v[j][k]) / &diag[k];
            let hi = (&one - &v[j][k]) / &diag[k];
            let slack = if k == 0 { zero.clone() } else { tol.clone() };
            if z[k] < &lo - &slack || z[k] > &hi + &slack {
                return false;
            }
        }
        for k in lin.d_u()..d {
            if z[k] < -tol.clone() || z[k] > &one + &tol {
                return false;
            }
        }
        z = (0..d).map(|k| &diag[k] * &z[k] + &v[j][k]).collect();
    }
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub n_graphs: usize,
    pub intersect_count: usize,
    pub recertified_count: usize,
    /// `(graph index, exit time)`.
    pub escape_witnesses: Vec<(usize, usize)>,
    /// Graphs whose test was inconclusive or errored, with the message.
    pub inconclusive: Vec<(usize, String)>,
    pub chart: BlenderChart,
}

/// Seeded random graphs (graph `i` from stream `("graph", i)`), each tested
/// and every intersection re-certified exactly.
pub fn monte_carlo_blender(h: &StandardAffineHorseshoe, chart: &BlenderChart, n_graphs: usize, max_iter: usize, tol: f64, seed: u64) -> Result<MonteCarloReport> {
    require_one_strong(h)?;
    let dim = h.linear.d_c + h.linear.d_s;
    let outcomes: Vec<(Result<GraphVerdict>, bool)> = (0..n_graphs)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, "graph", i as u64);
            let nodes = rng.random_range(2..=65);
            let g = LipschitzGraph::random(&mut rng, nodes, dim);
            let v = blender_graph_test(h, chart, &g, max_iter, tol);
            let ok = match &v {
                Ok(GraphVerdict::Intersects { itinerary, .. }) => recertify(h, chart, &g, itinerary, tol),
                _ => false,
            };
            (v, ok)
        })
        .collect();
    let mut report = MonteCarloReport {
        n_graphs,
        intersect_count: 0,
        recertified_count: 0,
        escape_witnesses: Vec::new(),
        inconclusive: Vec::new(),
        chart: chart.clone(),
    };
    for (i, (v, ok)) in outcomes.into_iter().enumerate() {
        match v {
            Ok(GraphVerdict::Intersects { .. }) => {
                report.intersect_count += 1;
                report.recertified_count += ok as usize;
            }
            Ok(GraphVerdict::Escapes { exit_time }) => report.escape_witnesses.push((i, exit_time)),
            Err(e) => report.inconclusive.push((i, e.to_string())),
        }
    }
    Ok(report)
}

/// Constant graphs through the midpoints of the gaps of `∪ⱼBⱼᶜ` along
/// the first centre coordinate, when they fall inside the chart.
pub fn gap_graphs(h: &StandardAffineHorseshoe, chart: &BlenderChart, nodes: usize) -> Vec<LipschitzGraph> {
    let mut strips: Vec<Interval> = (0..h.n_branches()).map(|j| h.unstable_rect(j)[1]).collect();
    strips.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut gaps = Vec::new();
    let mut reach = 0.0f64;
    for s in &strips {
        if s.lo > reach {
            gaps.push(0.5 * (reach + s.lo));
        }
        reach = reach.max(s.hi);
    }
    if reach < 1.0 {
        gaps.push(0.5 * (reach + 1.0));
    }
    gaps.into_iter()
        .filter_map(|c| {
            let th = (c - chart.x_c[0]) / chart.delta;
            (th > -1.0 && th < 1.0).then(|| {
                let mut v = vec![0.0; chart.x_c.len() + chart.x_s.len()];
                v[0] = th;
                LipschitzGraph::constant(v, nodes)
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub trials: usize,
    pub magnitude: f64,
    pub certified_count: usize,
    /// Trials where either check failed, with the largest translation change.
    pub failures: Vec<(usize, f64)>,
}

/// Model with every branch translation moved by at most `magnitude` (sup
/// norm), seeded per trial.
pub fn perturb_translations(h: &StandardAffineHorseshoe, magnitude: f64, seed: u64, trial: usize) -> (StandardAffineHorseshoe, f64) {
    let mut rng = rng_for(seed, "translation-perturbation", trial as u64);
    let mut p = h.clone();
    let mut worst = 0.0f64;
    for b in &mut p.branches {
        for x in &mut b.v {
            let d = rng.random_range(-magnitude..=magnitude);
            worst = worst.max(d.abs());
            *x += d;
        }
    }
    (p, worst)
}

/// Re-run the centre recurrence and the transversal check on perturbed
/// models, keeping the centre set fixed. Stable slabs are recomputed for
/// each perturbed model.
pub fn robustness_probe(h: &StandardAffineHorseshoe, kc: &GridSet, magnitude: f64, trials: usize, seed: u64) -> Result<RobustnessReport> {
    require_one_strong(h)?;
    let outcomes: Vec<Result<(bool, f64)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (p, worst) = perturb_translations(h, magnitude, seed, t);
            let ifs: CenterIfs = center_ifs_unchecked(&p)?;
            if !recurrent_compact_check(&ifs, kc).is_certified() {
                return Ok((false, worst));
            }
            let k = TransversalRecurrentSet { center: kc.clone(), stable: stable_slabs(&p) };
            Ok((transversal_recurrence_check(&p, &k, 1)?.is_certified(), worst))
        })
        .collect();
    let mut report = RobustnessReport { trials, magnitude, certified_count: 0, failures: Vec::new() };
    for (t, o) in outcomes.into_iter().enumerate() {
        let (ok, worst) = o?;
        if ok {
            report.certified_count += 1;
        } else {
            report.failures.push((t, worst));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn k04() -> GridSet {
        GridSet::from_box(&[-0.4], &[0.4], 1000)
    }

    fn overlap_setup() -> (StandardAffineHorseshoe, BlenderChart) {
        let h = StandardAffineHorseshoe::overlap_model();
        let chart = BlenderChart::for_model(&h, Some(&k04())).unwrap();
        (h, chart)
    }

    #[test]
    fn chart_of_overlap_model() {
        let (_, c) = overlap_setup();
        // ∩ Lⱼ([0.1, 0.9]) = [0.4, 0.6] in cube coordinates.
        assert!((c.x_c[0] - 0.5).abs() < 1e-12);
        assert!((c.delta - 0.09).abs() < 1e-3, "{}", c.delta);
        let d = BlenderChart::for_model(&StandardAffineHorseshoe::disjoint_model(), None).unwrap();
        assert!((d.x_c[0] - 0.5).abs() < 1e-12 && d.delta == 0.1);
    }

    #[test]
    fn build_product_set() {
        let h = StandardAffineHorseshoe::overlap_model();
        let k = build_transversal_recurrent_set(&h, &k04()).unwrap();
        assert_eq!(k.stable.len(), 2);
        assert!(k.stable[0][0].contains(0.0) && k.stable[0][0].contains(1.0 / 3.0));
        let bad = GridSet::from_box(&[-0.2], &[0.2], 1000);
        assert!(matches!(build_transversal_recurrent_set(&h, &bad), Err(Error::NotCertified(_))));
        let mut flat = h.clone();
        flat.linear.d_s = 0;
        flat.linear.diag.pop();
        for b in &mut flat.branches {
            b.v.pop();
        }
        assert!(build_transversal_recurrent_set(&flat, &k04()).unwrap().stable.is_empty());
    }

    #[test]
    fn transversal_check_reduces_to_centre() {
        let h = StandardAffineHorseshoe::overlap_model();
        let k = build_transversal_recurrent_set(&h, &k04()).unwrap();
        match transversal_recurrence_check(&h, &k, 3).unwrap() {
            TransversalVerdict::Certified { max_n, plaques_checked } => {
                assert_eq!(max_n, 1);
                assert_eq!(plaques_checked, 2 * k04().len());
            }
            v => panic!("{v:?}"),
        }
        let shrunk = TransversalRecurrentSet { center: GridSet::from_box(&[-0.2], &[0.2], 1000), ..k.clone() };
        assert!(matches!(transversal_recurrence_check(&h, &shrunk, 1).unwrap(), TransversalVerdict::Rejected { cell: Some(_), .. }));
        assert!(!transversal_recurrence_check(&h, &k, 0).unwrap().is_certified());
    }

    #[test]
    fn constant_graph_intersects() {
        let (h, chart) = overlap_setup();
        for c in [-0.9, 0.0, 0.5, 0.99] {
            let g = LipschitzGraph::constant(vec![c, -c], 5);
            match blender_graph_test(&h, &chart, &g, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap() {
                GraphVerdict::Intersects { itinerary, enclosure, .. } => {
                    assert_eq!(itinerary.len(), 60);
                    assert!(enclosure.iter().all(|x| x.width() <= DEFAULT_TOL));
                    assert!(recertify(&h, &chart, &g, &itinerary, DEFAULT_TOL));
                }
                v => panic!("{v:?}"),
            }
        }
    }

    #[test]
    fn disjoint_gap_graph_escapes() {
        let h = StandardAffineHorseshoe::disjoint_model();
        let chart = BlenderChart::for_model(&h, None).unwrap();
        let gaps = gap_graphs(&h, &chart, 9);
        assert_eq!(gaps.len(), 1);
        assert_eq!(gaps[0].values[0], vec![0.0, 0.0]);
        assert_eq!(blender_graph_test(&h, &chart, &gaps[0], 60, 1e-9).unwrap(), GraphVerdict::Escapes { exit_time: 1 });
    }

    #[test]
    fn chart_precondition() {
        let (h, chart) = overlap_setup();
        let g = LipschitzGraph::constant(vec![1.0, 0.0], 3);
        assert!(matches!(blender_graph_test(&h, &chart, &g, 60, 1e-9), Err(Error::PreconditionFailed(_))));
        assert!(LipschitzGraph::new(vec![vec![0.0, 0.0], vec![0.9, 0.0], vec![0.0, 0.0]]).is_ok());
        assert!(LipschitzGraph::new(vec![vec![-0.5, 0.0], vec![0.5, 0.0], vec![-0.6, 0.0]]).is_err());
    }

    #[test]
    fn monte_carlo_on_overlap_model() {
        let (h, chart) = overlap_setup();
        let r = monte_carlo_blender(&h, &chart, 40, 60, 1e-9, 0).unwrap();
        assert_eq!(r.intersect_count, 40, "{:?}", r.inconclusive);
        assert_eq!(r.recertified_count, 40);
        assert!(monte_carlo_blender(&h, &chart, 0, 60, 1e-9, 0).unwrap().intersect_count == 0);
    }

    #[test]
    fn robustness_on_overlap_model() {
        let h = StandardAffineHorseshoe::overlap_model();
        let r = robustness_probe(&h, &k04(), 1e-3, 8, 0).unwrap();
        assert_eq!(r.certified_count, 8, "{:?}", r.failures);
    }

    #[test]
    fn unsupported_shapes() {
        assert!(matches!(BlenderChart::for_model(&StandardAffineHorseshoe::smale(), None), Err(Error::UnsupportedDimension(_))));
        let h = StandardAffineHorseshoe::smale();
        let chart = BlenderChart { x_c: vec![], x_s: vec![0.5], delta: 0.1 };
        let g = LipschitzGraph::constant(vec![0.0], 2);
        assert!(matches!(blender_graph_test(&h, &chart, &g, 10, 1e-9), Err(Error::UnsupportedDimension(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sampled_graphs_are_certified_lipschitz(seed in any::<u64>(), nodes in 2usize..80, dim in 1usize..4) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = LipschitzGraph::random(&mut rng, nodes, dim);
            prop_assert!(g.lipschitz_certificate() <= 1.0);
            prop_assert!(g.inside_chart());
        }

        #[test]
        fn enclosure_contains_samples(seed in any::<u64>(), a in -1.0f64..1.0, w in 0.0f64..0.5, s in 0.0f64..1.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = LipschitzGraph::random(&mut rng, 17, 2);
            let hi = (a + w).min(1.0);
            let tau = Interval::new(a, hi);
            let x = a + s * (hi - a);
            let e = g.enclose(tau);
            let hstep = 2.0 / 16.0;
            let i = (((x + 1.0) / hstep).floor() as usize).min(15);
            let f = (x + 1.0) / hstep - i as f64;
            for k in 0..2 {
                let val = g.values[i][k] + f * (g.values[i + 1][k] - g.values[i][k]);
                prop_assert!(e[k].contains(val));
            }
        }
    }
}
