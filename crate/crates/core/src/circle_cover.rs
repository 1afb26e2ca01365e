//! Covering a finite subset of the circle ℝ/ℤ by equal arcs with long gaps.
//!
//! Given `X` with `d` points and `a ∈ (0, 1/2)`, find `κ` and arcs of length
//! `κ` covering `X` whose complementary gaps are all longer than `κ/a`, with
//! `κ ∈ [ℓ, a/2]` and `ℓ = d^{−2d}(a/2)^d`.
//!
//! Everything is exact. Floats are rationalized to the nearest multiple of
//! 2⁻⁵³ by [`rationalize`].

use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Q = BigRational;

/// Result of [`cover_circle`]. Arc `i` is `[centres[i] − κ/2, centres[i] + κ/2]`
/// taken mod 1.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleCover {
    pub points: Vec<Q>,
    pub a: Q,
    pub kappa: Q,
    pub centres: Vec<Q>,
    /// Recursion depth reached (1 for a base or direct case).
    pub depth: usize,
    /// Branch taken at each level, outermost first.
    pub branches: Vec<Branch>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Single,
    Direct,
    PairMerged,
    Collapse { clusters: usize },
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Branch::Single => write!(f, "single"),
            Branch::Direct => write!(f, "direct"),
            Branch::PairMerged => write!(f, "pair-merged"),
            Branch::Collapse { clusters } => write!(f, "collapse({clusters})"),
        }
    }
}

fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

fn frac(x: &Q) -> Q {
    x - x.floor()
}

/// Nearest multiple of 2⁻⁵³ (ties away from zero).
pub fn rationalize(x: f64) -> Result<Q> {
    if !x.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite coordinate {x}")));
    }
    let scale: BigInt = BigInt::one() << 53usize;
    let exact = Q::from_float(x).ok_or_else(|| Error::InvalidInput(format!("cannot rationalize {x}")))?;
    let scaled = exact * Q::from_integer(scale.clone());
    Ok(Q::new(scaled.round().to_integer(), scale))
}

/// Parse `p/q`, an integer, or a finite decimal like `0.125` exactly.
pub fn parse_rational(s: &str) -> Result<Q> {
    let s = s.trim();
    let bad = || Error::InvalidInput(format!("not a rational number: {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Q::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, dec) = body.split_once('.').unwrap_or((body, ""));
    if (int.is_empty() && dec.is_empty()) || !int.chars().chain(dec.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int}{dec}");
    let n: BigInt = digits.parse().map_err(|_| bad())?;
    let den = num_traits::pow(BigInt::from(10), dec.len());
    let v = Q::new(n, den);
    Ok(if neg { -v } else { v })
}

/// `ℓ = d^{−2d}(a/2)^d`.
pub fn ell(d: usize, a: &Q) -> Q {
    let half = a / Q::from_integer(BigInt::from(2));
    let den = num_traits::pow(BigInt::from(d), 2 * d);
    num_traits::pow(half, d) / Q::from_integer(den)
}

/// Cover `points` (any representatives; duplicates mod 1 are merged).
pub fn cover_circle(points: &[Q], a: &Q) -> Result<CircleCover> {
    if points.is_empty() {
        return Err(Error::InvalidInput("point set is empty".into()));
    }
    if !(a.is_positive() && *a < q(1, 2)) {
        return Err(Error::InvalidInput(format!("a = {a} outside (0, 1/2)")));
    }
    let mut pts: Vec<Q> = points.iter().map(frac).collect();
    pts.sort();
    pts.dedup();
    let mut branches = Vec::new();
    let (kappa, mut centres) = cover_rec(&pts, a, &mut branches);
    centres.sort();
    let cover = CircleCover { points: pts, a: a.clone(), kappa, centres, depth: branches.len(), branches };
    cover.verify()?;
    Ok(cover)
}

fn cover_rec(pts: &[Q], a: &Q, branches: &mut Vec<Branch>) -> (Q, Vec<Q>) {
    let d = pts.len();
    if d == 1 {
        branches.push(Branch::Single);
        return (a / q(2, 1), pts.to_vec());
    }
    let l = ell(d, a);
    let t = (Q::one() + a.recip()) * &l;
    let gaps: Vec<Q> = (0..d)
        .map(|i| if i + 1 < d { &pts[i + 1] - &pts[i] } else { &pts[0] + Q::one() - &pts[d - 1] })
        .collect();
    if gaps.iter().all(|g| *g > t) {
        branches.push(Branch::Direct);
        return (l, pts.to_vec());
    }
    if d == 2 {
        // Exactly one gap is short: cover the short arc with margin ℓ/2 on
        // each side.
        branches.push(Branch::PairMerged);
        let i = if gaps[0] <= t { 0 } else { 1 };
        let g = &gaps[i];
        let c = frac(&(&pts[i] + g / q(2, 1)));
        return (g + &l, vec![c]);
    }

    // Rotate so that a cluster starts at 0.
    let s = (0..d).find(|&i| gaps[(i + d - 1) % d] > t).expect("some gap exceeds the threshold");
    let origin = pts[s].clone();
    let y: Vec<Q> = (0..d).map(|j| frac(&(&pts[(s + j) % d] - &origin))).collect();
    let mut clusters: Vec<(Q, Q)> = vec![(y[0].clone(), y[0].clone())];
    for j in 0..d - 1 {
        let h = &y[j + 1] - &y[j];
        if h <= t {
            clusters.last_mut().unwrap().1 = y[j + 1].clone();
        } else {
            clusters.push((y[j + 1].clone(), y[j + 1].clone()));
        }
    }
    let collapsed: Q = clusters.iter().map(|(s, e)| e - s).fold(Q::zero(), |acc, x| acc + x);
    let big_l = Q::one() - &collapsed;
    let mut u = Vec::with_capacity(clusters.len());
    let mut acc = Q::zero();
    for (s, e) in &clusters {
        u.push(s - &acc);
        acc += e - s;
    }
    branches.push(Branch::Collapse { clusters: clusters.len() });
    let qpts: Vec<Q> = u.iter().map(|x| x / &big_l).collect();
    let a2 = a * q(d as i64 - 2, d as i64 - 1);
    let (k2, c2) = cover_rec(&qpts, &a2, branches);
    let kappa = &k2 * &big_l + Q::from_integer(BigInt::from(d - 1)) * &t;

    // Preimage of a quotient coordinate (in units where the quotient has
    // length L). `low` picks the start of a cluster hit exactly.
    let pull = |v: &Q, low: bool| -> Q {
        let m = (v / &big_l).floor();
        let v0 = v - &m * &big_l;
        let k = u.iter().rposition(|uk| *uk <= v0).unwrap_or(0);
        let base = if v0 == u[k] {
            if low {
                clusters[k].0.clone()
            } else {
                clusters[k].1.clone()
            }
        } else {
            &clusters[k].1 + (&v0 - &u[k])
        };
        base + m
    };
    let half = &k2 * &big_l / q(2, 1);
    let centres = c2
        .iter()
        .map(|c| {
            let cl = c * &big_l;
            let lo = pull(&(&cl - &half), true);
            let hi = pull(&(&cl + &half), false);
            frac(&((lo + hi) / q(2, 1) + &origin))
        })
        .collect();
    (kappa, centres)
}

/// Circular distance on ℝ/ℤ.
fn circ_dist(x: &Q, y: &Q) -> Q {
    let f = frac(&(x - y));
    let g = Q::one() - &f;
    if f < g {
        f
    } else {
        g
    }
}

impl CircleCover {
    pub fn d(&self) -> usize {
        self.points.len()
    }

    pub fn lower_bound(&self) -> Q {
        ell(self.d(), &self.a)
    }

    /// Arcs as `(start in [0,1), length)`.
    pub fn intervals(&self) -> Vec<(Q, Q)> {
        let half = &self.kappa / q(2, 1);
        let mut v: Vec<(Q, Q)> = self.centres.iter().map(|c| (frac(&(c - &half)), self.kappa.clone())).collect();
        v.sort();
        v
    }

    /// Lengths of the uncovered gaps, in circular order starting after the
    /// first arc.
    pub fn gaps(&self) -> Vec<Q> {
        let arcs = self.intervals();
        let s0 = arcs[0].0.clone();
        // All starts lie in [s0, s0 + 1), so merging on the line is exact and
        // only the closing gap can wrap.
        let mut merged: Vec<(Q, Q)> = Vec::new();
        for (s, l) in arcs {
            let e = &s + l;
            match merged.last_mut() {
                Some(last) if s <= last.1 => {
                    if e > last.1 {
                        last.1 = e;
                    }
                }
                _ => merged.push((s, e)),
            }
        }
        let mut gaps: Vec<Q> = merged.windows(2).map(|w| &w[1].0 - &w[0].1).collect();
        let closing = s0 + Q::one() - &merged.last().unwrap().1;
        if closing.is_positive() {
            gaps.push(closing);
        }
        gaps
    }

    /// Exact check of the three postconditions and the bracket on `κ`.
    pub fn verify(&self) -> Result<()> {
        let half = &self.kappa / q(2, 1);
        for x in &self.points {
            if !self.centres.iter().any(|c| circ_dist(x, c) <= half) {
                return Err(Error::PostconditionViolated(format!("point {x} not covered")));
            }
        }
        // Lengths are equal by construction of `intervals`; check that the
        // arcs are proper.
        if !(self.kappa.is_positive() && self.kappa < Q::one()) {
            return Err(Error::PostconditionViolated(format!("arc length {} not in (0,1)", self.kappa)));
        }
        let bound = &self.kappa / &self.a;
        let gaps = self.gaps();
        if gaps.is_empty() {
            return Err(Error::PostconditionViolated("arcs cover the whole circle".into()));
        }
        if let Some(g) = gaps.iter().find(|g| **g <= bound) {
            return Err(Error::PostconditionViolated(format!("gap {g} not larger than kappa/a = {bound}")));
        }
        let lo = self.lower_bound();
        let hi = &self.a / q(2, 1);
        if self.kappa < lo || self.kappa > hi {
            return Err(Error::PostconditionViolated(format!("kappa {} outside [{lo}, {hi}]", self.kappa)));
        }
        if self.depth > self.d() {
            return Err(Error::PostconditionViolated(format!("recursion depth {} exceeds d = {}", self.depth, self.d())));
        }
        Ok(())
    }

    /// Smallest gap divided by `κ/a` (as f64, for reporting).
    pub fn gap_ratio(&self) -> f64 {
        let bound = &self.kappa / &self.a;
        self.gaps().iter().map(|g| (g / &bound).to_f64().unwrap_or(f64::INFINITY)).fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn single_point() {
        let c = cover_circle(&[Q::zero()], &q(1, 4)).unwrap();
        assert_eq!(c.kappa, q(1, 8));
        assert_eq!(c.centres, vec![Q::zero()]);
        assert_eq!(c.gaps(), vec![q(7, 8)]);
        assert_eq!(c.branches, vec![Branch::Single]);
    }

    #[test]
    fn two_antipodal_points() {
        let c = cover_circle(&[Q::zero(), q(1, 2)], &q(1, 4)).unwrap();
        assert_eq!(c.kappa, q(1, 1024));
        assert_eq!(c.centres.len(), 2);
        assert_eq!(c.gaps(), vec![q(1, 2) - q(1, 1024); 2]);
        assert!(c.gaps()[0] > q(1, 256));
    }

    #[test]
    fn close_pair_is_merged() {
        let eps = Q::new(BigInt::one(), BigInt::one() << 40usize);
        let c = cover_circle(&[q(1, 3), q(1, 3) + &eps], &q(1, 4)).unwrap();
        assert_eq!(c.branches, vec![Branch::PairMerged]);
        assert_eq!(c.centres.len(), 1);
        assert_eq!(c.kappa, eps + q(1, 1024));
    }

    #[test]
    fn tight_cluster_collapses() {
        let eps = Q::new(BigInt::one(), BigInt::one() << 100usize);
        let pts: Vec<Q> = (0..5).map(|i| q(1, 5) + &eps * q(i, 1)).chain([q(7, 10)]).collect();
        let c = cover_circle(&pts, &q(1, 3)).unwrap();
        assert!(matches!(c.branches[0], Branch::Collapse { clusters: 2 }));
        assert_eq!(c.centres.len(), 2);
        assert!(c.depth <= pts.len());
    }

    #[test]
    fn parsing() {
        assert_eq!(parse_rational("1/4").unwrap(), q(1, 4));
        assert_eq!(parse_rational("0.125").unwrap(), q(1, 8));
        assert_eq!(parse_rational("-3").unwrap(), q(-3, 1));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
        assert_eq!(rationalize(0.5).unwrap(), q(1, 2));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(cover_circle(&[], &q(1, 4)).is_err());
        assert!(cover_circle(&[Q::zero()], &q(1, 2)).is_err());
        assert!(cover_circle(&[Q::zero()], &Q::zero()).is_err());
    }

    #[test]
    fn verification_catches_bad_covers() {
        let mut c = cover_circle(&[Q::zero(), q(1, 2)], &q(1, 4)).unwrap();
        c.centres[1] = q(1, 4);
        assert!(c.verify().is_err());
        let mut c = cover_circle(&[Q::zero()], &q(1, 4)).unwrap();
        c.kappa = q(1, 2);
        assert!(c.verify().is_err());
    }

    /// Random instance mixing spread-out points with clusters far below the
    /// collapse threshold.
    pub(crate) fn random_instance<R: Rng>(rng: &mut R) -> (Vec<Q>, Q) {
        let d = rng.random_range(1..=8usize);
        let a = q(rng.random_range(1..500), 1000);
        let mut pts = Vec::new();
        while pts.len() < d {
            let base = q(rng.random_range(0..1_000_000), 1_000_000);
            let run = rng.random_range(1..=(d - pts.len()));
            let shift = rng.random_range(20..120u32);
            for i in 0..run {
                let e = Q::new(BigInt::from(rng.random_range(1..1000) * i as i64), BigInt::one() << shift);
                pts.push(&base + e);
            }
        }
        (pts, a)
    }

    #[test]
    fn random_instances_satisfy_postconditions() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut collapses = 0;
        for _ in 0..300 {
            let (pts, a) = random_instance(&mut rng);
            let c = cover_circle(&pts, &a).unwrap();
            c.verify().unwrap();
            if c.branches.iter().any(|b| matches!(b, Branch::Collapse { .. })) {
                collapses += 1;
            }
        }
        assert!(collapses > 20, "collapse branch exercised only {collapses} times");
    }

    proptest! {
        #[test]
        fn rotation_equivariance(seed in any::<u64>(), tn in 0i64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (pts, a) = random_instance(&mut rng);
            let t = q(tn, 997);
            let c0 = cover_circle(&pts, &a).unwrap();
            let moved: Vec<Q> = pts.iter().map(|p| p + &t).collect();
            let c1 = cover_circle(&moved, &a).unwrap();
            prop_assert_eq!(&c0.kappa, &c1.kappa);
            let mut rotated: Vec<Q> = c0.centres.iter().map(|c| frac(&(c + &t))).collect();
            rotated.sort();
            prop_assert_eq!(rotated, c1.centres.clone());
        }

        #[test]
        fn deterministic(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (pts, a) = random_instance(&mut rng);
            prop_assert_eq!(cover_circle(&pts, &a).unwrap(), cover_circle(&pts, &a).unwrap());
        }
    }
}
