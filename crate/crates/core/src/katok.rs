//! Katok-style horseshoe selection on symbolic systems.
//!
//! Points of a subshift carry the metric `d(x, y) = 2^{−min{|i| : xᵢ ≠ yᵢ}}`.
//! The dynamical distance `d_{f,n}(x, y)` is the maximum of `d(fᵏx, fᵏy)`
//! over `0 ≤ k < n`, which equals `2^{−dist}` with `dist` the distance from
//! `[0, n−1]` to the nearest disagreement. Hence
//!
//! * `d_{f,n}(x, y) ≥ 2^{−j}` iff the windows `[−j, n−1+j]` differ;
//! * the closed ball of radius `2^{−b−1}` about `c` is the cylinder fixing
//!   `[−b, b]`.
//!
//! Radii are therefore handled through depths: a separation radius `ρ`
//! becomes the depth `j` with `2^{−j−1} < ρ ≤ 2^{−j}`, and a ball of radius
//! `ε/2` becomes the depth `b` of the largest cylinder inside it.
//!
//! The return-set pipeline works on the periodic points of one period `P`,
//! weighted by the cylinder measure of their period word.

use crate::affine_horseshoe::{point_from_itinerary, Itinerary, StandardAffineHorseshoe};
use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::shadowing::{concatenate_segments, Boundary};
use crate::subshift::{count_words, for_each_word, parry_measure, top_entropy, verify_sync, ParryMeasure, Sft, SymbolicPoint, Word};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

/// Largest number of words enumerated by the estimators.
pub const ENUMERATION_CAP: u128 = 1 << 24;

/// Steps of exact forward iteration in the affine assembly.
pub const EXACT_STEPS: usize = 1000;

/// `d(x, y)` for the two-sided symbolic metric.
pub fn symbolic_distance(x: &SymbolicPoint, y: &SymbolicPoint) -> f64 {
    dyn_distance(x, y, 1)
}

/// `d_{f,n}(x, y) = max_{0≤k<n} d(σᵏx, σᵏy)`. `n = 0` is treated as 1.
pub fn dyn_distance(x: &SymbolicPoint, y: &SymbolicPoint, n: usize) -> f64 {
    let n = n.max(1) as i64;
    let above = x.first_disagreement_above(y, -1).map(|i| (i - (n - 1)).max(0));
    let below = x.last_disagreement_below(y, 0).map(|i| -i);
    match above.into_iter().chain(below).min() {
        None => 0.0,
        Some(k) => 2f64.powi(-(k.min(1100) as i32)),
    }
}

/// Depth `j` with `2^{−j−1} < ρ ≤ 2^{−j}`, so `d_{f,n} ≥ ρ` iff windows
/// `[−j, n−1+j]` differ.
pub fn separation_depth(rho: f64) -> Result<usize> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidInput(format!("rho = {rho} must lie in (0, 1]")));
    }
    Ok(((1.0 / rho).log2() + 1e-9).floor() as usize)
}

/// Depth `b` such that the cylinder on `[−b, b]` is the closed ball of
/// radius `ε/2`.
pub fn ball_depth(eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidInput(format!("eps = {eps} must lie in (0, 1]")));
    }
    // Largest 2^{−k} ≤ ε/2 fixes [−(k−1), k−1].
    let k = ((2.0 / eps).log2() - 1e-9).ceil() as usize;
    Ok(k.max(1) - 1)
}

/// Finite sum of weighted cylinder indicators `Σ cᵢ·1_{[wᵢ]}`, each word
/// read from coordinate 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub terms: Vec<(Word, f64)>,
}

impl TestFunction {
    pub fn indicator(w: &[usize]) -> TestFunction {
        TestFunction { terms: vec![(w.to_vec(), 1.0)] }
    }

    /// `ψ(σᵏx)` for the periodic point of the word `x`.
    fn eval_periodic(&self, x: &[u8], k: usize) -> f64 {
        let p = x.len();
        self.terms
            .iter()
            .filter(|(w, _)| w.iter().enumerate().all(|(i, &s)| x[(k + i) % p] as usize == s))
            .map(|(_, c)| c)
            .sum()
    }

    pub fn eval(&self, x: &SymbolicPoint) -> f64 {
        self.terms
            .iter()
            .filter(|(w, _)| w.iter().enumerate().all(|(i, &s)| x.symbol(i as i64) == s))
            .map(|(_, c)| c)
            .sum()
    }

    pub fn integral(&self, mu: &ParryMeasure) -> f64 {
        self.terms.iter().map(|(w, c)| c * mu.cylinder(w)).sum()
    }
}

/// A subshift with an invariant Markov measure and test functions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymbolicSystem {
    pub sft: Sft,
    pub measure: ParryMeasure,
    pub tests: Vec<TestFunction>,
}

impl SymbolicSystem {
    /// The measure of maximal entropy.
    pub fn with_mme(sft: Sft, tests: Vec<TestFunction>) -> Result<SymbolicSystem> {
        let measure = parry_measure(&sft)?;
        Ok(SymbolicSystem { sft, measure, tests })
    }

    /// `h(μ)` in nats.
    pub fn entropy(&self) -> f64 {
        self.measure.entropy_rate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub n: usize,
    pub rho: f64,
    pub beta: f64,
    /// Length `n + 2j` of the words naming the dynamical balls.
    pub word_length: usize,
    /// Size of a maximal separated set inside the carrier.
    pub lower: usize,
    /// Number of balls in the greedy cover.
    pub upper: usize,
    pub lower_rate: f64,
    pub upper_rate: f64,
    /// Measure reached by the cover.
    pub mass: f64,
}

/// Separated-set and covering counts for `(n, ρ)`-balls carrying measure
/// at least `β`. Balls are cylinders on `[−j, n−1+j]`, taken greedily by
/// decreasing measure (lexicographic among ties). Since the balls of one
/// radius partition the space, one point per chosen ball is a maximal
/// separated set in the carrier, and the two counts agree.
pub fn entropy_estimate(sys: &SymbolicSystem, n: usize, rho: f64, beta: f64) -> Result<EntropyEstimate> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let j = separation_depth(rho)?;
    let len = n + 2 * j;
    let count = count_words(&sys.sft, len, None, None);
    if count > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { count, cap: ENUMERATION_CAP });
    }
    let mut balls: Vec<(f64, Word)> = Vec::with_capacity(count as usize);
    for_each_word(&sys.sft, len, None, None, |w| {
        let m = sys.measure.cylinder(w);
        if m > 0.0 {
            balls.push((m, w.to_vec()));
        }
        true
    });
    balls.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let mut mass = 0.0;
    let mut upper = 0;
    for (m, _) in &balls {
        if upper > 0 && mass >= beta - 1e-12 {
            break;
        }
        mass += m;
        upper += 1;
    }
    // One representative per ball; distinct balls give separated points.
    let lower = balls[..upper].iter().map(|(_, w)| w).collect::<HashSet<_>>().len();
    let rate = |c: usize| (c.max(1) as f64).ln() / n as f64;
    Ok(EntropyEstimate { n, rho, beta, word_length: len, lower, upper, lower_rate: rate(lower), upper_rate: rate(upper), mass })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnParams {
    pub delta: f64,
    pub gamma: f64,
    pub xi: f64,
    /// Separation radius, in `(0, 1]`.
    pub rho: f64,
    pub n0: usize,
    /// Ball diameter; balls have radius `ε/2`.
    pub eps: f64,
    /// Period of the universe of periodic points; smallest admissible if absent.
    pub period: Option<usize>,
}

impl Default for ReturnParams {
    fn default() -> Self {
        ReturnParams { delta: 0.2, gamma: 0.5, xi: 0.04, rho: 1.0, n0: 1, eps: 1.0, period: None }
    }
}

/// Counts entering the cardinality estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingChain {
    pub e_m: usize,
    pub v_n: usize,
    pub y: usize,
    pub balls: usize,
    /// Number of integers in `[m, (1+ξ)m)`.
    pub return_times: usize,
    pub xi_m: f64,
    /// `#V_N · #return_times ≥ #E_m`.
    pub pigeonhole_ok: bool,
    /// `#Y · t ≥ #V_N`.
    pub ball_ok: bool,
    /// `exp(m(h − ξ))`, compared against `#E_m`.
    pub e_m_target: f64,
    pub e_m_target_met: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnSet {
    pub params: ReturnParams,
    pub entropy: f64,
    pub period: usize,
    pub m: usize,
    /// The return time `N`.
    pub n: usize,
    pub rho_depth: usize,
    pub ball_depth: usize,
    /// Ball centre, the window `[−b, b]`.
    pub center: Word,
    /// Period words of the points of `Y`, coordinate 0 first.
    pub points: Vec<Word>,
    /// `exp(N(h − δ))`.
    pub required: f64,
    pub attrition: Vec<(String, usize)>,
    pub measure_xm: f64,
    /// Whether `μ(X_m) > μ(X)/2` held for the chosen `m`.
    pub measure_condition_met: bool,
    pub chain: CountingChain,
    pub certificate: ReturnCertificate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnCertificate {
    /// Pairs compared with `dyn_distance`.
    pub separation_pairs: usize,
    pub min_separation: f64,
    pub returns_checked: usize,
    pub birkhoff_checked: usize,
    /// Largest `|Birkhoff average − ∫ψ|` over the checked range.
    pub max_birkhoff_deviation: f64,
}

fn largest_below(x: f64) -> usize {
    let f = x.floor();
    if f == x {
        f as usize - 1
    } else {
        f as usize
    }
}

/// Return times `m..=n_hi` with `n_hi` the largest integer below `(1+ξ)m`.
fn return_range(m: usize, xi: f64) -> (usize, usize) {
    (m, largest_below((1.0 + xi) * m as f64).max(m))
}

fn windows_equal(x: &[u8], a: usize, b: usize, radius: usize) -> bool {
    let p = x.len();
    (0..=2 * radius).all(|i| x[(a + p * (radius + 1) + i - radius) % p] == x[(b + p * (radius + 1) + i - radius) % p])
}

fn window_key(x: &[u8], lo: i64, hi: i64) -> Vec<u8> {
    let p = x.len() as i64;
    (lo..=hi).map(|i| x[i.rem_euclid(p) as usize]).collect()
}

/// `sup_{n≥m} |(1/n)·Σ_{k<n} ψ(σᵏx) − c|` for a periodic point with values
/// `a_k = ψ(σᵏx)`, `0 ≤ k < P`. Along each residue class of `n` mod `P`
/// the average is monotone and tends to `S/P`, so the supremum is attained
/// at the first representative `≥ m` of some class or in the limit.
fn birkhoff_sup(a: &[f64], m: usize, c: f64) -> f64 {
    let p = a.len();
    let mut pre = vec![0.0; p + 1];
    for k in 0..p {
        pre[k + 1] = pre[k] + a[k];
    }
    let s = pre[p];
    let mut sup = (s / p as f64 - c).abs();
    for n in m..m + p {
        let avg = ((n / p) as f64 * s + pre[n % p]) / n as f64;
        sup = sup.max((avg - c).abs());
    }
    sup
}

/// The return-set pipeline: cover by `ε/2`-balls, returns within
/// `[m, (1+ξ)m)`, Birkhoff control, a maximal `(m, ρ)`-separated set, the
/// return time with the most returns and the densest ball.
pub fn select_return_set(sys: &SymbolicSystem, params: &ReturnParams) -> Result<ReturnSet> {
    let h = sys.entropy();
    let xi_max = params.delta / (h + 4.0);
    if !(params.xi > 0.0 && params.xi < xi_max) {
        return Err(Error::PreconditionFailed(format!("xi = {} must lie in (0, delta/(h+4) = {xi_max})", params.xi)));
    }
    if !(params.gamma > 0.0) {
        return Err(Error::InvalidInput("gamma must be positive".into()));
    }
    let sft = &sys.sft;
    if sft.alphabet_size > 256 {
        return Err(Error::InvalidInput("alphabets above 256 symbols are not supported".into()));
    }
    let j = separation_depth(params.rho)?;
    let b = ball_depth(params.eps)?;
    let t_bound = count_words(sft, 2 * b + 1, None, None).max(1);
    let m_lo = params.n0.max((t_bound as f64).ln().div_euclid(params.xi) as usize + 1);
    // Return windows and separation windows fit inside one period.
    let need = |m: usize| (return_range(m, params.xi).1 + b + 1).max(m + 2 * j);
    let period = params.period.unwrap_or(need(m_lo));
    if period < need(m_lo) {
        return Err(Error::PreconditionFailed(format!("period {period} is below {} required for m = {m_lo}", need(m_lo))));
    }
    let mut m_hi = m_lo;
    while need(m_hi + 1) <= period {
        m_hi += 1;
    }

    let universe = periodic_universe(sft, period)?;
    let p = period;
    let n_pts = universe.len() / p;
    let point = |i: usize| &universe[i * p..(i + 1) * p];
    let weights: Vec<f64> = (0..n_pts).map(|i| sys.measure.cylinder(&point(i).iter().map(|&s| s as usize).collect::<Vec<_>>())).collect();
    let total: f64 = weights.iter().sum();
    let balls: HashSet<Vec<u8>> = (0..n_pts).map(|i| window_key(point(i), -(b as i64), b as i64)).collect();
    let t = balls.len();

    let targets: Vec<f64> = sys.tests.iter().map(|f| f.integral(&sys.measure)).collect();
    let values: Vec<Vec<Vec<f64>>> =
        (0..n_pts).into_par_iter().map(|i| sys.tests.iter().map(|f| (0..p).map(|k| f.eval_periodic(point(i), k)).collect()).collect()).collect();
    let half_gamma = params.gamma / 2.0;

    // Per m: the points of X_m⁰ and X_m.
    let stage = |m: usize| -> (Vec<usize>, Vec<usize>) {
        let (lo, hi) = return_range(m, params.xi);
        let x0: Vec<usize> = (0..n_pts).into_par_iter().filter(|&i| (lo..=hi).any(|n| windows_equal(point(i), 0, n, b))).collect();
        let xm: Vec<usize> = x0
            .par_iter()
            .copied()
            .filter(|&i| values[i].iter().zip(&targets).all(|(a, &c)| birkhoff_sup(a, m, c) < half_gamma))
            .collect();
        (x0, xm)
    };
    let mut best: Option<(usize, Vec<usize>, Vec<usize>, f64)> = None;
    for m in m_lo..=m_hi {
        let (x0, xm) = stage(m);
        let mu = xm.iter().map(|&i| weights[i]).sum::<f64>() / total;
        let better = best.as_ref().is_none_or(|bst| mu > bst.3);
        if better {
            best = Some((m, x0, xm, mu));
        }
        if mu > 0.5 {
            break;
        }
    }
    let (m, x0, xm, measure_xm) = best.expect("m range is nonempty");

    let mut seen = HashSet::new();
    let e_m: Vec<usize> = xm.iter().copied().filter(|&i| seen.insert(window_key(point(i), -(j as i64), (m + j) as i64 - 1))).collect();
    let (lo, hi) = return_range(m, params.xi);
    let mut n_best = lo;
    let mut v_best: Vec<usize> = Vec::new();
    for n in lo..=hi {
        let v: Vec<usize> = e_m.iter().copied().filter(|&i| windows_equal(point(i), 0, n, b)).collect();
        if v.len() > v_best.len() || n == lo {
            n_best = n;
            v_best = v;
        }
    }
    let mut by_ball: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
    for &i in &v_best {
        by_ball.entry(window_key(point(i), -(b as i64), b as i64)).or_default().push(i);
    }
    let mut center = Vec::new();
    let mut y: Vec<usize> = Vec::new();
    for (c, members) in by_ball {
        if members.len() > y.len() {
            center = c;
            y = members;
        }
    }

    let attrition = vec![
        ("universe".to_string(), n_pts),
        ("returning (X_m^0)".to_string(), x0.len()),
        ("birkhoff (X_m)".to_string(), xm.len()),
        ("separated (E_m)".to_string(), e_m.len()),
        ("returning at N (V_N)".to_string(), v_best.len()),
        ("densest ball (Y)".to_string(), y.len()),
    ];
    let required = (n_best as f64 * (h - params.delta)).exp();
    if !(y.len() as f64 > required) {
        return Err(Error::CardinalityShortfall { achieved: y.len(), required, attrition });
    }
    let e_m_target = (m as f64 * (h - params.xi)).exp();
    let chain = CountingChain {
        e_m: e_m.len(),
        v_n: v_best.len(),
        y: y.len(),
        balls: t,
        return_times: hi - lo + 1,
        xi_m: params.xi * m as f64,
        pigeonhole_ok: v_best.len() * (hi - lo + 1) >= e_m.len(),
        ball_ok: y.len() * t >= v_best.len(),
        e_m_target,
        e_m_target_met: e_m.len() as f64 >= e_m_target,
    };
    if !(chain.pigeonhole_ok && chain.ball_ok) {
        return Err(Error::PostconditionViolated(format!("counting chain broken: {chain:?}")));
    }
    let to_word = |i: usize| point(i).iter().map(|&s| s as usize).collect::<Word>();
    let mut ret = ReturnSet {
        params: params.clone(),
        entropy: h,
        period,
        m,
        n: n_best,
        rho_depth: j,
        ball_depth: b,
        center: center.iter().map(|&s| s as usize).collect(),
        points: y.iter().map(|&i| to_word(i)).collect(),
        required,
        attrition,
        measure_xm,
        measure_condition_met: measure_xm > 0.5,
        chain,
        certificate: ReturnCertificate { separation_pairs: 0, min_separation: 0.0, returns_checked: 0, birkhoff_checked: 0, max_birkhoff_deviation: 0.0 },
    };
    ret.certificate = verify_return_set(sys, &ret, 0).map_err(|e| Error::PostconditionViolated(format!("return set failed its own check: {e}")))?;
    Ok(ret)
}

/// Period words of all periodic points of period `p`, flattened, in
/// lexicographic order.
fn periodic_universe(sft: &Sft, p: usize) -> Result<Vec<u8>> {
    let k = sft.alphabet_size;
    let mut count: u128 = 0;
    for s in 0..k {
        for e in 0..k {
            if sft.allowed(e, s) {
                count = count.saturating_add(count_words(sft, p, Some(s), Some(e)));
            }
        }
    }
    if count > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { count, cap: ENUMERATION_CAP });
    }
    let mut out = Vec::with_capacity(count as usize * p);
    for_each_word(sft, p, None, None, |w| {
        if sft.allowed(w[p - 1], w[0]) {
            out.extend(w.iter().map(|&s| s as u8));
        }
        true
    });
    Ok(out)
}

/// Re-check a return set from its points alone: pairwise `(N, ρ)`
/// separation, the return `σᴺy ∈ B` for every `y`, and the Birkhoff bound
/// by direct summation over `m ≤ n ≤ m + 2P` together with the period
/// average. `samples` random pairs are compared on top of the pairs that
/// are adjacent in window order, which already decide separation.
pub fn verify_return_set(sys: &SymbolicSystem, ret: &ReturnSet, samples: usize) -> Result<ReturnCertificate> {
    let rho = 2f64.powi(-(ret.rho_depth as i32));
    let (j, b, n) = (ret.rho_depth as i64, ret.ball_depth as i64, ret.n);
    let pts: Vec<SymbolicPoint> = ret.points.iter().map(|w| SymbolicPoint::periodic(w)).collect();
    if pts.iter().any(|x| !x.admissible_in(&sys.sft)) {
        return Err(Error::InadmissibleWord("a point of Y".into()));
    }
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by_cached_key(|&i| pts[i].window(-j, n as i64 - 1 + j));
    let mut pairs: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0], w[1])).collect();
    if pts.len() >= 2 {
        let mut rng = rng_for(0, "katok-verify", pts.len() as u64);
        for _ in 0..samples {
            let a = rng.random_range(0..pts.len());
            let c = rng.random_range(0..pts.len());
            if a != c {
                pairs.push((a, c));
            }
        }
    }
    let mut min_sep = f64::INFINITY;
    for &(a, c) in &pairs {
        let d = dyn_distance(&pts[a], &pts[c], n);
        if d < rho {
            return Err(Error::SeparationFailure(format!("points {a} and {c} are at d_(f,{n}) = {d} < {rho}")));
        }
        min_sep = min_sep.min(d);
    }
    for (i, x) in pts.iter().enumerate() {
        if x.window(-b, b) != ret.center || x.shift(n as i64).window(-b, b) != ret.center {
            return Err(Error::PostconditionViolated(format!("point {i} does not return to the ball at time {n}")));
        }
    }
    let targets: Vec<f64> = sys.tests.iter().map(|f| f.integral(&sys.measure)).collect();
    let half_gamma = ret.params.gamma / 2.0;
    let horizon = ret.m + 2 * ret.period;
    let mut worst: f64 = 0.0;
    for (i, x) in pts.iter().enumerate() {
        for (f, &c) in sys.tests.iter().zip(&targets) {
            let mut sum = 0.0;
            for k in 0..horizon {
                sum += f.eval(&x.shift(k as i64));
                let n = k + 1;
                if n >= ret.m {
                    worst = worst.max((sum / n as f64 - c).abs());
                }
            }
            let period_avg = (0..ret.period).map(|k| f.eval(&x.shift(k as i64))).sum::<f64>() / ret.period as f64;
            worst = worst.max((period_avg - c).abs());
            if worst >= half_gamma {
                return Err(Error::PostconditionViolated(format!("Birkhoff average of point {i} leaves the γ/2 band ({worst})")));
            }
        }
    }
    Ok(ReturnCertificate {
        separation_pairs: pairs.len(),
        min_separation: if pairs.is_empty() { 1.0 } else { min_sep },
        returns_checked: pts.len(),
        birkhoff_checked: pts.len() * sys.tests.len(),
        max_birkhoff_deviation: worst,
    })
}

/// Full shift over the `N`-blocks of a return set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolicHorseshoe {
    pub block_length: usize,
    pub blocks: Vec<Word>,
    /// `(1/N)·log #Y`.
    pub entropy: f64,
    /// `h − δ`.
    pub target: f64,
    pub exceeds: bool,
    /// A single block: the horseshoe is one periodic orbit.
    pub degenerate: bool,
    pub pairs_checked: usize,
}

/// Assemble the symbolic horseshoe by concatenating `N`-blocks. Every block
/// starts and, shifted by `N`, ends in the same ball, so consecutive blocks
/// glue admissibly. Injectivity is checked on `samples` random code pairs
/// of length `code_len`.
pub fn assemble_horseshoe(sys: &SymbolicSystem, ret: &ReturnSet, code_len: usize, samples: usize, seed: u64) -> Result<SymbolicHorseshoe> {
    let n = ret.n;
    let blocks: Vec<Word> = ret.points.iter().map(|w| (0..n).map(|k| w[k % w.len()]).collect()).collect();
    let distinct: HashSet<&Word> = blocks.iter().collect();
    if distinct.len() != blocks.len() {
        return Err(Error::SeparationFailure("two points of Y share their N-block".into()));
    }
    if blocks.is_empty() {
        return Err(Error::InvalidInput("empty return set".into()));
    }
    let rho = 2f64.powi(-(ret.rho_depth as i32));
    let code_len = code_len.max(1);
    let mut rng = rng_for(seed, "katok-assemble", 0);
    let mut checked = 0;
    for s in 0..samples {
        let a: Vec<usize> = (0..code_len).map(|_| rng.random_range(0..blocks.len())).collect();
        let mut c = a.clone();
        if blocks.len() > 1 {
            let pos = s % code_len;
            c[pos] = (a[pos] + 1 + rng.random_range(0..blocks.len() - 1)) % blocks.len();
        }
        let word = |code: &[usize]| -> Word { code.iter().flat_map(|&i| blocks[i].iter().copied()).collect() };
        let (xa, xc) = (SymbolicPoint::periodic(&word(&a)), SymbolicPoint::periodic(&word(&c)));
        if !xa.admissible_in(&sys.sft) || !xc.admissible_in(&sys.sft) {
            return Err(Error::InadmissibleWord(format!("concatenation of code {a:?}")));
        }
        if a != c {
            let d = dyn_distance(&xa, &xc, n * code_len);
            if d < rho {
                return Err(Error::SeparationFailure(format!("codes {a:?} and {c:?} give points at distance {d}")));
            }
        }
        checked += 1;
    }
    let entropy = (blocks.len() as f64).ln() / n as f64;
    let target = ret.entropy - ret.params.delta;
    Ok(SymbolicHorseshoe { block_length: n, degenerate: blocks.len() == 1, exceeds: entropy > target, entropy, target, blocks, pairs_checked: checked })
}

/// Affine horseshoe assembled from a return set of its coding shift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineAssembly {
    pub block_length: usize,
    pub n_blocks: usize,
    pub entropy: f64,
    pub target: f64,
    pub exceeds: bool,
    /// Least `d_{f,N}` distance between the periodic points of two blocks.
    pub rho: f64,
    pub epsilon: f64,
    pub theta: f64,
    /// Branch word of the sampled code.
    pub code: Vec<usize>,
    pub steps: usize,
    /// Largest distance from the exact periodic orbit to the pseudo-orbit.
    pub pseudo_deviation: f64,
    /// Largest distance from the exact periodic orbit to the solver's orbit.
    pub solver_deviation: f64,
    pub within_bound: bool,
    /// Least `d_{f,·}` distance between shadow orbits of distinct codes.
    pub min_code_separation: f64,
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite horseshoe data")
}

/// The periodic orbit of the branch word `w` in exact arithmetic, iterated
/// for `steps` steps from its point at time 0.
fn exact_periodic_orbit(h: &StandardAffineHorseshoe, w: &[usize], steps: usize) -> Vec<Vec<f64>> {
    let d = h.dim();
    let a: Vec<BigRational> = h.linear.diag.iter().map(|&x| exact(x)).collect();
    let v: Vec<Vec<BigRational>> = (0..h.n_branches()).map(|j| h.v(j).iter().map(|&x| exact(x)).collect()).collect();
    // z ↦ αz + β is the composition along one period.
    let mut alpha = vec![BigRational::one(); d];
    let mut beta = vec![BigRational::from_integer(BigInt::from(0)); d];
    for &j in w {
        for i in 0..d {
            alpha[i] = &a[i] * &alpha[i];
            beta[i] = &a[i] * &beta[i] + &v[j][i];
        }
    }
    let mut z: Vec<BigRational> = (0..d).map(|i| &beta[i] / (BigRational::one() - &alpha[i])).collect();
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        out.push(z.iter().map(|q| q.to_f64().unwrap_or(f64::NAN)).collect());
        let j = w[k % w.len()];
        for i in 0..d {
            z[i] = &a[i] * &z[i] + &v[j][i];
        }
    }
    out
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Concatenate the `N`-blocks of `ret` in the horseshoe along a random code
/// with at least `EXACT_STEPS` steps, then check the shadowing bound against
/// the exact periodic orbit of the branch word. Requires `θε < ρ/2`.
pub fn assemble_affine(h: &StandardAffineHorseshoe, ret: &ReturnSet, pair_samples: usize, seed: u64) -> Result<AffineAssembly> {
    let n = ret.n;
    let blocks: Vec<Word> = ret.points.iter().map(|w| (0..n).map(|k| w[k % w.len()]).collect()).collect();
    if blocks.is_empty() {
        return Err(Error::InvalidInput("empty return set".into()));
    }
    let orbits: Vec<Vec<Vec<f64>>> = blocks
        .iter()
        .map(|y| {
            let mut z = point_from_itinerary(h, &Itinerary::periodic(crate::shadowing::PERIODIC_WINDOW, y)).coords;
            let mut o = Vec::with_capacity(n);
            for &j in y {
                o.push(z.clone());
                z = h.apply(j, &z);
            }
            o
        })
        .collect();
    let block_dist = |a: usize, c: usize| (0..n).map(|k| sup_dist(&orbits[a][k], &orbits[c][k])).fold(0.0, f64::max);
    let mut rho = f64::INFINITY;
    let mut rng = rng_for(seed, "katok-affine", 0);
    if blocks.len() <= 600 {
        for a in 0..blocks.len() {
            for c in a + 1..blocks.len() {
                rho = rho.min(block_dist(a, c));
            }
        }
    } else {
        for _ in 0..100_000 {
            let (a, c) = (rng.random_range(0..blocks.len()), rng.random_range(0..blocks.len()));
            if a != c {
                rho = rho.min(block_dist(a, c));
            }
        }
    }
    let len = EXACT_STEPS.div_ceil(n);
    let code: Vec<usize> = (0..len).map(|_| rng.random_range(0..blocks.len())).collect();
    let conc = concatenate_segments(h, &blocks, &code, &Boundary::Periodic, f64::INFINITY)?;
    let (eps, theta) = (conc.orbit.epsilon, conc.orbit.theta);
    if blocks.len() > 1 && !(theta * eps < rho / 2.0) {
        return Err(Error::PreconditionFailed(format!("θε = {} is not below ρ/2 = {}", theta * eps, rho / 2.0)));
    }
    let period = conc.branches.len();
    let steps = EXACT_STEPS.max(period);
    let z = exact_periodic_orbit(h, &conc.branches, steps);
    let mut pseudo_dev: f64 = 0.0;
    let mut solver_dev: f64 = 0.0;
    for (k, zk) in z.iter().enumerate() {
        pseudo_dev = pseudo_dev.max(sup_dist(zk, &conc.pseudo[k % period]));
        solver_dev = solver_dev.max(sup_dist(zk, &conc.orbit.points[k % period]));
    }
    let mut min_code_sep = f64::INFINITY;
    if blocks.len() > 1 {
        for s in 0..pair_samples {
            let mut other = code.clone();
            let pos = (s * 7919) % len;
            other[pos] = (code[pos] + 1 + rng.random_range(0..blocks.len() - 1)) % blocks.len();
            let c2 = concatenate_segments(h, &blocks, &other, &Boundary::Periodic, f64::INFINITY)?;
            let d = conc.orbit.points.iter().zip(&c2.orbit.points).map(|(p, q)| sup_dist(p, q)).fold(0.0, f64::max);
            if d < 2.0 * theta * eps {
                return Err(Error::SeparationFailure(format!("codes differing at block {pos} give orbits {d} apart")));
            }
            min_code_sep = min_code_sep.min(d);
        }
    }
    let entropy = (blocks.len() as f64).ln() / n as f64;
    let target = ret.entropy - ret.params.delta;
    Ok(AffineAssembly {
        block_length: n,
        n_blocks: blocks.len(),
        entropy,
        target,
        exceeds: entropy > target,
        rho,
        epsilon: eps,
        theta,
        code: conc.branches.clone(),
        steps,
        within_bound: pseudo_dev <= theta * eps * (1.0 + 1e-9) + 1e-12,
        pseudo_deviation: pseudo_dev,
        solver_deviation: solver_dev,
        min_code_separation: min_code_sep,
    })
}

/// Full-shift subsystem built from a marker block and free pieces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinedSubsystem {
    pub star: usize,
    pub n: usize,
    /// Blocks per code word: two marker blocks and `ℓ − 2` free pieces.
    pub ell: usize,
    /// `x·L₀`, of minimal period exactly `N`.
    pub marker: Word,
    pub pieces: Vec<Word>,
    /// `(ℓ−2)·log #pieces / (Nℓ)`.
    pub entropy: f64,
    pub target: f64,
    pub degenerate: bool,
    /// Period `Nℓ` for which `σⁱ(Λ₀) ∩ Λ₀ = ∅`, `1 ≤ i < Nℓ`, was verified.
    pub disjointness_period: usize,
    pub attrition: Vec<(String, usize)>,
}

impl RefinedSubsystem {
    /// Code word for the given piece indices (`ℓ − 2` of them).
    pub fn code_word(&self, pieces: &[usize]) -> Word {
        let mut w = self.marker.clone();
        w.extend(&self.marker);
        for &i in pieces {
            w.extend(&self.pieces[i]);
        }
        w
    }
}

fn is_primitive(w: &[usize]) -> bool {
    let n = w.len();
    (1..n).filter(|d| n % d == 0).all(|d| (0..n).any(|i| w[i] != w[(i + d) % n]))
}

/// Refine a coded set into a full-shift subsystem with entropy at least
/// `h − δ`. Pieces are `N`-words `x·L` with `x·L·x` admissible; the marker
/// `x·L₀` has minimal period `N`, and pieces whose tail `L` occurs as a
/// subword of `L₀·x·L₀` are discarded. Code words are `(xL₀)(xL₀)` followed
/// by `ℓ − 2` pieces, with `ℓ` minimal for the entropy target; the marker
/// pattern is verified to occur only at multiples of `Nℓ`.
pub fn marker_refine(sft: &Sft, n: usize, delta: f64) -> Result<RefinedSubsystem> {
    let h = top_entropy(sft)?;
    let target = h - delta;
    if n < 2 {
        return Err(Error::InvalidInput("N must be at least 2".into()));
    }
    if h <= 1e-12 {
        let (s, cycle) = (0..sft.alphabet_size)
            .find_map(|s| sft.shortest_cycle(s).map(|c| (s, c)))
            .ok_or(Error::EmptySubshift)?;
        return Ok(RefinedSubsystem {
            star: s,
            n: cycle.len(),
            ell: 1,
            disjointness_period: cycle.len(),
            marker: cycle,
            pieces: Vec::new(),
            entropy: 0.0,
            target,
            degenerate: true,
            attrition: Vec::new(),
        });
    }
    let mut attrition = Vec::new();
    for star in 0..sft.alphabet_size {
        if count_words(sft, n, Some(star), None) > ENUMERATION_CAP {
            return Err(Error::EnumerationCap { count: count_words(sft, n, Some(star), None), cap: ENUMERATION_CAP });
        }
        let mut words: Vec<Word> = Vec::new();
        for_each_word(sft, n, Some(star), None, |w| {
            if sft.allowed(w[n - 1], star) {
                words.push(w.to_vec());
            }
            true
        });
        let tag = |s: &str| format!("{s} (x = {star})");
        attrition.push((tag("pieces x·L"), words.len()));
        let markers: Vec<&Word> = words.iter().filter(|w| is_primitive(w)).collect();
        attrition.push((tag("primitive markers"), markers.len()));
        let mut tried = 0;
        for marker in markers {
            let l0 = &marker[1..];
            let mut around: Word = l0.to_vec();
            around.push(star);
            around.extend(l0);
            let banned: HashSet<&[usize]> = around.windows(n - 1).collect();
            let pieces: Vec<Word> = words.iter().filter(|w| !banned.contains(&w[1..]) && *w != marker).cloned().collect();
            if pieces.len() < 2 {
                continue;
            }
            let rate = (pieces.len() as f64).ln() / n as f64;
            if rate <= target {
                continue;
            }
            // (ℓ−2)/ℓ · rate ≥ target.
            let mut ell = 3;
            while ((ell - 2) as f64 / ell as f64) * rate < target {
                ell += 1;
            }
            tried += 1;
            let m = marker.clone();
            let mut slots: Vec<Vec<&Word>> = vec![vec![&m], vec![&m]];
            slots.extend(std::iter::repeat_n(pieces.iter().collect::<Vec<_>>(), ell - 2));
            let mut pat = m.clone();
            pat.extend(&m);
            if verify_sync(&slots, &pat, n * ell).is_err() {
                continue;
            }
            attrition.push((tag("pieces avoiding L0·x·L0"), pieces.len()));
            attrition.push((tag("markers tried"), tried));
            let entropy = (ell - 2) as f64 * (pieces.len() as f64).ln() / (n * ell) as f64;
            return Ok(RefinedSubsystem {
                star,
                n,
                ell,
                marker: m,
                pieces,
                entropy,
                target,
                degenerate: false,
                disjointness_period: n * ell,
                attrition,
            });
        }
        attrition.push((tag("markers tried"), tried));
    }
    Err(Error::SearchExhausted { detail: format!("no marker of length {n} reaches entropy {target}: {attrition:?}") })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn full2(tests: Vec<TestFunction>) -> SymbolicSystem {
        SymbolicSystem::with_mme(Sft::full_shift(2), tests).unwrap()
    }

    #[test]
    fn distance_examples() {
        let x = SymbolicPoint::periodic(&[0]);
        assert_eq!(dyn_distance(&x, &x, 5), 0.0);
        for n in 1..8usize {
            let mut c = vec![0; n];
            c[n - 1] = 1;
            let y = SymbolicPoint::new(vec![0], c, 0, vec![0]).unwrap();
            assert_eq!(dyn_distance(&x, &y, n), 1.0);
            assert_eq!(dyn_distance(&x, &y, 1), 2f64.powi(-(n as i32 - 1)));
        }
        let y = SymbolicPoint::new(vec![0], vec![1], -3, vec![0]).unwrap();
        assert_eq!(symbolic_distance(&x, &y), 0.125);
        assert_eq!(dyn_distance(&x, &y, 10), 0.125);
    }

    #[test]
    fn depths() {
        assert_eq!(separation_depth(1.0).unwrap(), 0);
        assert_eq!(separation_depth(0.25).unwrap(), 2);
        assert_eq!(separation_depth(0.3).unwrap(), 1);
        assert_eq!(ball_depth(1.0).unwrap(), 0);
        assert_eq!(ball_depth(0.25).unwrap(), 2);
        assert!(separation_depth(0.0).is_err());
    }

    #[test]
    fn full_shift_counts_are_exact() {
        let sys = full2(vec![]);
        for (n, j) in [(4, 0), (5, 1), (6, 2)] {
            let e = entropy_estimate(&sys, n, 2f64.powi(-(j as i32)), 1.0).unwrap();
            assert_eq!(e.upper, 1 << (n + 2 * j));
            assert_eq!(e.lower, e.upper);
        }
        let e = entropy_estimate(&sys, 20, 1.0, 1.0).unwrap();
        assert!((e.upper_rate - 2f64.ln()).abs() < 1e-12);
        let tiny = entropy_estimate(&sys, 6, 0.5, 1e-9).unwrap();
        assert_eq!((tiny.lower, tiny.upper), (1, 1));
    }

    #[test]
    fn golden_mean_estimate() {
        let sys = SymbolicSystem::with_mme(Sft::golden_mean(), vec![]).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let e = entropy_estimate(&sys, 20, 1.0, 0.5).unwrap();
        assert!((e.lower_rate - phi.ln()).abs() < 0.05, "{e:?}");
        assert!(e.lower <= e.upper);
    }

    #[test]
    fn xi_precondition_rejected() {
        let sys = full2(vec![TestFunction::indicator(&[0])]);
        let p = ReturnParams { xi: 0.1, ..ReturnParams::default() };
        assert!(matches!(select_return_set(&sys, &p), Err(Error::PreconditionFailed(_))));
    }

    #[test]
    fn large_delta_is_trivial() {
        let sys = full2(vec![TestFunction::indicator(&[0])]);
        let p = ReturnParams { delta: 1.0, xi: 0.2, ..ReturnParams::default() };
        let r = select_return_set(&sys, &p).unwrap();
        assert!(!r.points.is_empty());
        let a = assemble_horseshoe(&sys, &r, 4, 20, 1).unwrap();
        assert!(a.exceeds);
    }

    #[test]
    fn narrow_gamma_is_a_shortfall() {
        let sys = full2(vec![TestFunction::indicator(&[0])]);
        let p = ReturnParams { delta: 1.0, xi: 0.2, gamma: 1e-6, ..ReturnParams::default() };
        match select_return_set(&sys, &p) {
            Err(Error::CardinalityShortfall { achieved, attrition, .. }) => {
                assert_eq!(achieved, 0);
                assert_eq!(attrition.len(), 6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn marker_refine_full_shift() {
        let r = marker_refine(&Sft::full_shift(2), 8, 0.3).unwrap();
        assert!(r.entropy >= 2f64.ln() - 0.3);
        assert!(!r.degenerate);
        assert_eq!(r.ell, 6);
        assert_eq!(r.disjointness_period, 48);
        let w = r.code_word(&[0, 1, 2, 3]);
        assert!(Sft::full_shift(2).is_admissible(&w));
    }

    #[test]
    fn marker_refine_degenerate_and_exhausted() {
        let r = marker_refine(&Sft::cycle(3), 4, 0.1).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.entropy, 0.0);
        assert!(matches!(marker_refine(&Sft::full_shift(2), 4, 0.01), Err(Error::SearchExhausted { .. })));
    }

    #[test]
    fn primitive_words() {
        assert!(is_primitive(&[0, 0, 1]));
        assert!(!is_primitive(&[0, 1, 0, 1]));
        assert!(!is_primitive(&[1, 1]));
    }

    #[test]
    fn birkhoff_sup_matches_direct_sums() {
        let a = [1.0, 0.0, 0.0, 1.0, 1.0];
        let direct = (7..200).map(|n| ((0..n).map(|k| a[k % 5]).sum::<f64>() / n as f64 - 0.5).abs()).fold(0.0, f64::max);
        assert!((birkhoff_sup(&a, 7, 0.5) - direct).abs() < 1e-12);
    }

    #[test]
    fn affine_smale_end_to_end() {
        let h = StandardAffineHorseshoe::smale();
        let sys = full2(vec![TestFunction::indicator(&[0])]);
        let p = ReturnParams { delta: 2.0, xi: 0.4, eps: 0.25, ..ReturnParams::default() };
        let r = select_return_set(&sys, &p).unwrap();
        let a = assemble_affine(&h, &r, 3, 5).unwrap();
        assert!(a.steps >= 1000);
        assert!(a.within_bound, "{a:?}");
        assert!(a.solver_deviation < 1e-9);
        assert!(a.theta * a.epsilon < a.rho / 2.0);
    }

    proptest! {
        #[test]
        fn distance_is_an_ultrametric(ws in proptest::collection::vec(proptest::collection::vec(0usize..2, 1..6), 3), n in 1usize..6) {
            let p: Vec<SymbolicPoint> = ws.iter().map(|w| SymbolicPoint::periodic(w)).collect();
            let d = |a: usize, b: usize| dyn_distance(&p[a], &p[b], n);
            prop_assert_eq!(d(0, 1), d(1, 0));
            prop_assert!(d(0, 2) <= d(0, 1).max(d(1, 2)));
            prop_assert!(dyn_distance(&p[0], &p[1], n + 1) >= d(0, 1));
        }

        #[test]
        fn lower_never_exceeds_upper(n in 1usize..8, j in 0i32..3, beta in 0.01f64..1.0) {
            let sys = SymbolicSystem::with_mme(Sft::golden_mean(), vec![]).unwrap();
            let e = entropy_estimate(&sys, n, 2f64.powi(-j), beta).unwrap();
            prop_assert!(e.lower <= e.upper);
            prop_assert!(e.mass >= beta - 1e-9);
        }
    }
}
