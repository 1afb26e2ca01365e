//! Centre iterated function systems on `B = [−1/2, 1/2]^d`: extraction from
//! a horseshoe, recurrent compact certification on uniform grids, and the
//! randomized perturbation of composite systems.

use crate::affine_horseshoe::{validate, StandardAffineHorseshoe};
use crate::error::{Error, Result};
use crate::interval::{down, up, Interval};
use crate::seed::rng_for;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Cap on enumerated compositions.
pub const ENUMERATION_CAP: u128 = 1_000_000;

/// Affine contractions `Lⱼ(z) = L·z + vⱼ` with `L` diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterIfs {
    pub contraction: Vec<f64>,
    pub translations: Vec<Vec<f64>>,
}

fn ival(x: f64) -> Interval {
    Interval::point(x)
}

impl CenterIfs {
    pub fn new(contraction: Vec<f64>, translations: Vec<Vec<f64>>) -> Result<CenterIfs> {
        if contraction.is_empty() || contraction.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return Err(Error::InvalidInput("contraction entries must lie in (0, 1)".into()));
        }
        if translations.is_empty() || translations.iter().any(|v| v.len() != contraction.len()) {
            return Err(Error::InvalidInput("translations must be nonempty and match the dimension".into()));
        }
        Ok(CenterIfs { contraction, translations })
    }

    /// Scalar system `z ↦ l·z + vⱼ`.
    pub fn scalar(l: f64, v: &[f64]) -> CenterIfs {
        Self::new(vec![l], v.iter().map(|&x| vec![x]).collect()).expect("valid scalar IFS")
    }

    pub fn dim(&self) -> usize {
        self.contraction.len()
    }

    pub fn n_maps(&self) -> usize {
        self.translations.len()
    }

    /// `J = |det L|`.
    pub fn jacobian(&self) -> f64 {
        self.contraction.iter().product()
    }

    pub fn apply(&self, j: usize, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.contraction).zip(&self.translations[j]).map(|((x, l), v)| l * x + v).collect()
    }

    pub fn apply_inverse(&self, j: usize, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.contraction).zip(&self.translations[j]).map(|((x, l), v)| (x - v) / l).collect()
    }

    /// `Lⱼ⁻¹(box)`, outward rounded.
    pub fn preimage(&self, j: usize, b: &[Interval]) -> Vec<Interval> {
        b.iter().zip(&self.contraction).zip(&self.translations[j]).map(|((x, l), v)| (*x - ival(*v)) / ival(*l)).collect()
    }

    /// `Lⱼ(B)`, outward rounded.
    pub fn image_box(&self, j: usize) -> Vec<Interval> {
        self.contraction
            .iter()
            .zip(&self.translations[j])
            .map(|(l, v)| Interval::new(-0.5, 0.5) * ival(*l) + ival(*v))
            .collect()
    }

    /// Minimal distance from an image `Lⱼ(B)` to the boundary of `B`
    /// (negative when an image leaves `B`).
    pub fn slack(&self) -> f64 {
        (0..self.n_maps())
            .flat_map(|j| self.image_box(j).into_iter().map(|x| (x.lo + 0.5).min(0.5 - x.hi)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Centre IFS of a horseshoe: `z ↦ (A_c)⁻¹(z − π^c vⱼ)` on `[0,1]^{d_c}`,
/// recentred to `[−1/2, 1/2]^{d_c}`.
pub fn extract_center_ifs(h: &StandardAffineHorseshoe) -> Result<CenterIfs> {
    let lin = &h.linear;
    if lin.d_c == 0 {
        return Err(Error::UnsupportedDimension("model has no centre direction".into()));
    }
    validate(h)?;
    center_ifs_unchecked(h)
}

/// Centre IFS without the geometric validation of the model (used on
/// perturbed models whose images may touch or leave the cube).
pub fn center_ifs_unchecked(h: &StandardAffineHorseshoe) -> Result<CenterIfs> {
    let lin = &h.linear;
    if lin.d_c == 0 {
        return Err(Error::UnsupportedDimension("model has no centre direction".into()));
    }
    let contraction: Vec<f64> = lin.center().iter().map(|a| 1.0 / a).collect();
    let translations = (0..h.n_branches())
        .map(|j| {
            let vc = &h.v(j)[lin.d_uu..lin.d_u()];
            vc.iter().zip(&contraction).map(|(v, l)| l * (0.5 - v) - 0.5).collect()
        })
        .collect();
    CenterIfs::new(contraction, translations)
}

/// Occupancy mask of the uniform grid with `cells` cells per axis on `B`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridSet {
    pub dim: usize,
    pub cells: usize,
    pub mask: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct GridSetFile {
    dim: usize,
    cells: usize,
    /// Alternating run lengths of the flattened mask, starting with empty.
    runs: Vec<usize>,
}

impl Serialize for GridSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridSetFile { dim: self.dim, cells: self.cells, runs: self.runs() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = GridSetFile::deserialize(d)?;
        GridSet::from_runs(f.dim, f.cells, &f.runs).map_err(serde::de::Error::custom)
    }
}

impl GridSet {
    pub fn empty(dim: usize, cells: usize) -> GridSet {
        GridSet { dim, cells, mask: vec![false; cells.pow(dim as u32)] }
    }

    /// Cells per axis for a cell width `h`.
    pub fn cells_for_width(h: f64) -> usize {
        (1.0 / h).round().max(1.0) as usize
    }

    /// Cells whose closed box lies in `∏[lo_i, hi_i]`.
    pub fn from_box(lo: &[f64], hi: &[f64], cells: usize) -> GridSet {
        let mut g = GridSet::empty(lo.len(), cells);
        for idx in 0..g.mask.len() {
            let b = g.cell_box(idx);
            g.mask[idx] = b.iter().zip(lo.iter().zip(hi)).all(|(x, (&l, &h))| l <= x.lo && x.hi <= h);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    fn coords(&self, mut idx: usize) -> Vec<usize> {
        let mut c = vec![0; self.dim];
        for k in 0..self.dim {
            c[k] = idx % self.cells;
            idx /= self.cells;
        }
        c
    }

    fn index(&self, c: &[usize]) -> usize {
        c.iter().rev().fold(0, |acc, &x| acc * self.cells + x)
    }

    /// Closed box of a cell, outward rounded.
    pub fn cell_box(&self, idx: usize) -> Vec<Interval> {
        let n = self.cells as f64;
        self.coords(idx)
            .into_iter()
            .map(|i| Interval::new(down(i as f64 / n - 0.5), up((i + 1) as f64 / n - 0.5)))
            .collect()
    }

    /// Cell index range per axis met by a closed box, or `None` if the box
    /// leaves `B`. Ranges are widened so that boxes touching a grid line
    /// include both neighbours.
    fn cell_range(&self, b: &[Interval]) -> Option<Vec<(usize, usize)>> {
        let n = self.cells as f64;
        b.iter()
            .map(|x| {
                if x.lo < -0.5 || x.hi > 0.5 {
                    return None;
                }
                let lo = ((x.lo + 0.5) * n - 1e-9).floor().max(0.0) as usize;
                let hi = (((x.hi + 0.5) * n + 1e-9).floor() as usize).min(self.cells - 1);
                Some((lo, hi))
            })
            .collect()
    }

    fn all_in_range(&self, mask: &[bool], range: &[(usize, usize)]) -> bool {
        let mut c: Vec<usize> = range.iter().map(|r| r.0).collect();
        loop {
            if !mask[self.index(&c)] {
                return false;
            }
            let mut k = 0;
            loop {
                if k == self.dim {
                    return true;
                }
                if c[k] < range[k].1 {
                    c[k] += 1;
                    break;
                }
                c[k] = range[k].0;
                k += 1;
            }
        }
    }

    /// Cells all of whose `3^d − 1` neighbours are occupied.
    pub fn interior(&self) -> Vec<bool> {
        (0..self.mask.len())
            .map(|idx| {
                if !self.mask[idx] {
                    return false;
                }
                let c = self.coords(idx);
                if c.iter().any(|&x| x == 0 || x + 1 == self.cells) {
                    return false;
                }
                let range: Vec<(usize, usize)> = c.iter().map(|&x| (x - 1, x + 1)).collect();
                self.all_in_range(&self.mask, &range)
            })
            .collect()
    }

    /// Is the closed box covered by cells set in `mask` (same shape as the
    /// grid)?
    pub fn box_within(&self, mask: &[bool], b: &[Interval]) -> bool {
        self.cell_range(b).is_some_and(|r| self.all_in_range(mask, &r))
    }

    /// Is the closed box covered by occupied cells?
    pub fn covers(&self, b: &[Interval]) -> bool {
        self.cell_range(b).is_some_and(|r| self.all_in_range(&self.mask, &r))
    }

    pub fn runs(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut cur = false;
        let mut len = 0;
        for &b in &self.mask {
            if b == cur {
                len += 1;
            } else {
                runs.push(len);
                cur = b;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    pub fn from_runs(dim: usize, cells: usize, runs: &[usize]) -> std::result::Result<GridSet, String> {
        let total = cells.checked_pow(dim as u32).ok_or("grid too large")?;
        let mut mask = Vec::with_capacity(total);
        for (i, &r) in runs.iter().enumerate() {
            mask.extend(std::iter::repeat_n(i % 2 == 1, r));
        }
        if mask.len() != total {
            return Err(format!("runs cover {} cells, grid has {total}", mask.len()));
        }
        Ok(GridSet { dim, cells, mask })
    }

    /// `gridset <dim> <cells>` followed by the run lengths.
    pub fn to_text(&self) -> String {
        let runs: Vec<String> = self.runs().iter().map(|r| r.to_string()).collect();
        format!("gridset {} {}\n{}\n", self.dim, self.cells, runs.join(" "))
    }

    pub fn parse_text(s: &str) -> Result<GridSet> {
        let mut toks = s.split_whitespace();
        let bad = |m: &str| Error::InvalidInput(format!("gridset: {m}"));
        if toks.next() != Some("gridset") {
            return Err(bad("missing header"));
        }
        let dim: usize = toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad dimension"))?;
        let cells: usize = toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad cell count"))?;
        let runs: Vec<usize> = toks.map(|t| t.parse().map_err(|_| bad("bad run length"))).collect::<Result<_>>()?;
        GridSet::from_runs(dim, cells, &runs).map_err(|e| bad(&e))
    }

    /// Hull of the occupied cells in dimension 1.
    pub fn hull_1d(&self) -> Option<Interval> {
        let first = self.mask.iter().position(|&b| b)?;
        let last = self.mask.iter().rposition(|&b| b)?;
        Some(Interval::new(self.cell_box(first)[0].lo, self.cell_box(last)[0].hi))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RecurrenceVerdict {
    /// Branch used for each occupied cell, in cell order.
    Certified { witness: Vec<(usize, usize)> },
    Rejected { cell: Option<usize>, reason: String },
}

impl RecurrenceVerdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, RecurrenceVerdict::Certified { .. })
    }
}

fn covered_branch(ifs: &CenterIfs, k: &GridSet, interior: &[bool], idx: usize) -> Option<usize> {
    let b = k.cell_box(idx);
    (0..ifs.n_maps()).find(|&j| k.cell_range(&ifs.preimage(j, &b)).is_some_and(|r| k.all_in_range(interior, &r)))
}

/// Every occupied cell must have a branch whose preimage of the cell lies in
/// the one-cell erosion of `K`.
pub fn recurrent_compact_check(ifs: &CenterIfs, k: &GridSet) -> RecurrenceVerdict {
    if k.dim != ifs.dim() {
        return RecurrenceVerdict::Rejected { cell: None, reason: "dimension mismatch".into() };
    }
    if k.is_empty() {
        return RecurrenceVerdict::Rejected { cell: None, reason: "empty".into() };
    }
    let interior = k.interior();
    let mut witness = Vec::with_capacity(k.len());
    for idx in (0..k.mask.len()).filter(|&i| k.mask[i]) {
        match covered_branch(ifs, k, &interior, idx) {
            Some(j) => witness.push((idx, j)),
            None => {
                return RecurrenceVerdict::Rejected {
                    cell: Some(idx),
                    reason: format!("no branch maps the interior onto cell {:?}", k.cell_box(idx)),
                }
            }
        }
    }
    RecurrenceVerdict::Certified { witness }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub set: Option<GridSet>,
    pub iterations: usize,
}

/// Largest grid fixed point of `K ↦ {z ∈ K : ∃j, Lⱼ⁻¹(z) ⊆ interior(K)}`
/// started from the cells inside `∪ Lⱼ(B)`.
pub fn search_recurrent_compact(ifs: &CenterIfs, cells: usize) -> SearchOutcome {
    let mut k = GridSet::empty(ifs.dim(), cells);
    let images: Vec<Vec<Interval>> = (0..ifs.n_maps()).map(|j| ifs.image_box(j)).collect();
    for idx in 0..k.mask.len() {
        let b = k.cell_box(idx);
        k.mask[idx] = images.iter().any(|im| crate::interval::box_subset(&b, im));
    }
    let mut iterations = 0;
    loop {
        iterations += 1;
        if k.is_empty() {
            return SearchOutcome { set: None, iterations };
        }
        let interior = k.interior();
        let next: Vec<bool> = (0..k.mask.len()).map(|idx| k.mask[idx] && covered_branch(ifs, &k, &interior, idx).is_some()).collect();
        if next == k.mask {
            break;
        }
        k.mask = next;
    }
    if recurrent_compact_check(ifs, &k).is_certified() {
        SearchOutcome { set: Some(k), iterations }
    } else {
        SearchOutcome { set: None, iterations }
    }
}

/// Largest number of depth-`n` compositions `L_{jₙ}∘⋯∘L_{j₁}(B)` (over the
/// given branches, all by default) containing a common point. Exact by a
/// sweep over all images in dimension 1 when enumerable, otherwise a lower
/// bound from `samples` seeded points. Returns `(count, exhaustive)`.
pub fn max_image_count(ifs: &CenterIfs, branches: Option<&[usize]>, n: usize, samples: usize, seed: u64) -> Result<(u64, bool)> {
    let all: Vec<usize> = (0..ifs.n_maps()).collect();
    let br = branches.unwrap_or(&all);
    if n == 0 {
        return Ok((1, true));
    }
    let total = (br.len() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if ifs.dim() == 1 && total <= ENUMERATION_CAP {
        let imgs = composite_images(ifs, br, n, &[]);
        return Ok((max_overlap(&imgs), true));
    }
    // Count by descending through preimages from sampled points.
    fn count(ifs: &CenterIfs, br: &[usize], x: &[f64], n: usize) -> u64 {
        if x.iter().any(|&c| !(-0.5..=0.5).contains(&c)) {
            return 0;
        }
        if n == 0 {
            return 1;
        }
        br.iter().map(|&j| count(ifs, br, &ifs.apply_inverse(j, x), n - 1)).sum()
    }
    let best = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, "image-count", i as u64);
            let x: Vec<f64> = (0..ifs.dim()).map(|_| rng.random_range(-0.5..=0.5)).collect();
            count(ifs, br, &x, n)
        })
        .max()
        .unwrap_or(0);
    Ok((best, false))
}

/// 1-D images `prefix ∘ L_{jₙ}∘⋯∘L_{j₁}(B)` for all words over `br`.
fn composite_images(ifs: &CenterIfs, br: &[usize], n: usize, prefix: &[usize]) -> Vec<(f64, f64)> {
    let l = ifs.contraction[0];
    let mut out = Vec::new();
    let mut word = vec![0usize; n];
    loop {
        let mut lo = -0.5;
        let mut hi = 0.5;
        for &k in &word {
            let v = ifs.translations[br[k]][0];
            lo = l * lo + v;
            hi = l * hi + v;
        }
        for &p in prefix {
            let v = ifs.translations[p][0];
            lo = l * lo + v;
            hi = l * hi + v;
        }
        out.push((lo, hi));
        let mut i = 0;
        loop {
            if i == n {
                return out;
            }
            word[i] += 1;
            if word[i] < br.len() {
                break;
            }
            word[i] = 0;
            i += 1;
        }
    }
}

fn max_overlap(imgs: &[(f64, f64)]) -> u64 {
    let mut ev: Vec<(f64, i64)> = imgs.iter().flat_map(|&(a, b)| [(a, 1), (b, -1)]).collect();
    // Closed intervals: starts before ends at equal coordinates.
    ev.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.cmp(&x.1)));
    let mut cur = 0i64;
    let mut best = 0i64;
    for (_, d) in ev {
        cur += d;
        best = best.max(cur);
    }
    best as u64
}

/// Total length of the points covered by at least `t` of the closed
/// intervals.
fn measure_at_least(imgs: &[(f64, f64)], t: u64) -> f64 {
    let mut ev: Vec<(f64, i64)> = imgs.iter().flat_map(|&(a, b)| [(a, 1), (b, -1)]).collect();
    ev.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.cmp(&x.1)));
    let mut cur = 0i64;
    let mut total = 0.0;
    let mut last = f64::NEG_INFINITY;
    for (x, d) in ev {
        if cur >= t as i64 {
            total += x - last;
        }
        cur += d;
        last = x;
    }
    total
}

/// Maximal intervals covered by at least `t` images.
fn region_at_least(imgs: &[(f64, f64)], t: u64) -> Vec<(f64, f64)> {
    let mut ev: Vec<(f64, i64)> = imgs.iter().flat_map(|&(a, b)| [(a, 1), (b, -1)]).collect();
    ev.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.cmp(&x.1)));
    let mut cur = 0i64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut start = 0.0;
    for (x, d) in ev {
        let before = cur >= t as i64;
        cur += d;
        let after = cur >= t as i64;
        if !before && after {
            start = x;
        } else if before && !after {
            match out.last_mut() {
                Some(last) if last.1 >= start => last.1 = x,
                _ => out.push((start, x)),
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub n: usize,
    pub beta: f64,
    /// Lebesgue measure of the set of points in at least `threshold` images.
    pub measure_a: f64,
    /// `½ J^{n+1} (β⁻¹H)ⁿ`.
    pub alpha_n: f64,
    /// `½ J^{n+1} Hⁿ`.
    pub threshold: f64,
    pub threshold_count: u64,
    pub holds: bool,
}

/// Exhaustive check of `|A| ≥ αₙ` over the composite images `L₀∘L_j(B)`,
/// `j ∈ {1..H}ⁿ`. Exact sweep in dimension 1, a 512-per-axis inner grid
/// quadrature otherwise.
pub fn coverage_claim_bruteforce(ifs: &CenterIfs, n: usize, beta: f64) -> Result<ClaimReport> {
    let h = ifs.n_maps().saturating_sub(1);
    if h == 0 {
        return Err(Error::InvalidInput("need at least two maps (L₀ and one more)".into()));
    }
    let total = (h as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if total > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { count: total, cap: ENUMERATION_CAP });
    }
    let j = ifs.jacobian();
    let threshold = 0.5 * j.powi(n as i32 + 1) * (h as f64).powi(n as i32);
    let threshold_count = (threshold - 1e-12).ceil().max(1.0) as u64;
    let alpha_n = 0.5 * j.powi(n as i32 + 1) * (h as f64 / beta).powi(n as i32);
    let br: Vec<usize> = (1..=h).collect();
    let measure_a = if ifs.dim() == 1 {
        measure_at_least(&composite_images(ifs, &br, n, &[0]), threshold_count)
    } else {
        quadrature_at_least(ifs, &br, n, threshold_count)
    };
    Ok(ClaimReport { n, beta, measure_a, alpha_n, threshold, threshold_count, holds: measure_a >= alpha_n })
}

/// Lower bound for the measure of `{x : #images ∋ x ≥ t}` from grid cells
/// contained in at least `t` composite image boxes.
fn quadrature_at_least(ifs: &CenterIfs, br: &[usize], n: usize, t: u64) -> f64 {
    let d = ifs.dim();
    let g = GridSet::empty(d, 512);
    let mut boxes = Vec::new();
    let mut word = vec![0usize; n];
    'outer: loop {
        let mut b: Vec<Interval> = vec![Interval::new(-0.5, 0.5); d];
        for &k in word.iter().chain(std::iter::once(&usize::MAX)) {
            let jj = if k == usize::MAX { 0 } else { br[k] };
            b = b.iter().zip(&ifs.contraction).zip(&ifs.translations[jj]).map(|((x, l), v)| *x * ival(*l) + ival(*v)).collect();
        }
        boxes.push(b);
        let mut i = 0;
        loop {
            if i == n {
                break 'outer;
            }
            word[i] += 1;
            if word[i] < br.len() {
                break;
            }
            word[i] = 0;
            i += 1;
        }
    }
    let cell_vol = (1.0 / 512f64).powi(d as i32);
    (0..g.mask.len())
        .into_par_iter()
        .filter(|&idx| {
            let c = g.cell_box(idx);
            boxes.iter().filter(|b| crate::interval::box_subset(&c, b)).count() as u64 >= t
        })
        .count() as f64
        * cell_vol
}

/// Sampled parameter `w` of the perturbation, keyed by length-`m` suffixes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationFamily {
    pub n: usize,
    pub c: f64,
    pub m: usize,
    pub beta: f64,
    pub seed: u64,
    pub trial: usize,
    /// `(suffix over {1..H}, w ∈ B)`.
    pub w: Vec<(Vec<usize>, Vec<f64>)>,
}

impl PerturbationFamily {
    pub fn lookup(&self, word: &[usize]) -> &[f64] {
        let suf = &word[word.len() - self.m..];
        &self.w.iter().find(|(s, _)| s.as_slice() == suf).expect("every suffix is sampled").1
    }
}

/// Options of the perturbation pipeline. Defaults are the constants 10 and
/// 1/100.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbOptions {
    pub shift_factor: f64,
    pub lattice_spacing: f64,
    /// Grid cells per axis for the recurrent compact search.
    pub search_cells: usize,
}

impl Default for PerturbOptions {
    fn default() -> Self {
        PerturbOptions { shift_factor: 10.0, lattice_spacing: 0.01, search_cells: 4000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbReport {
    pub trials: usize,
    /// Trials whose `w` satisfies the covering condition.
    pub covering_count: usize,
    /// Trials satisfying the covering condition whose perturbed system was
    /// also certified.
    pub success_count: usize,
    /// `2 log(JH) − (2 − c) log β`.
    pub hypothesis_margin: f64,
    /// Largest image count over `{1..H}ⁿ` against `βⁿ` (reported only).
    pub card_max: u64,
    pub card_bound: f64,
    pub claim: ClaimReport,
    pub probe_points: usize,
    pub first_witness: Option<(PerturbationFamily, GridSet)>,
    /// Trials that passed the covering condition but whose search found no
    /// certified set.
    pub uncertified_trials: Vec<usize>,
}

/// Composite system `z ↦ L₀∘L_j(z) + 10·L^{n+1}(w_j)` for `j ∈ {1..H}ⁿ`, in
/// lexicographic word order (first letter slowest).
pub fn perturbed_system(ifs: &CenterIfs, fam: &PerturbationFamily, shift_factor: f64) -> CenterIfs {
    let h = ifs.n_maps() - 1;
    let lam: Vec<f64> = ifs.contraction.iter().map(|l| l.powi(fam.n as i32 + 1)).collect();
    let mut trans = Vec::new();
    for word in words(h, fam.n) {
        let mut z = vec![0.0; ifs.dim()];
        for &j in &word {
            z = ifs.apply(j, &z);
        }
        z = ifs.apply(0, &z);
        let w = fam.lookup(&word);
        trans.push(z.iter().zip(&lam).zip(w).map(|((t, l), wi)| t + shift_factor * l * wi).collect());
    }
    CenterIfs { contraction: lam, translations: trans }
}

/// All words over `{1..h}` of length `n`, lexicographic.
fn words(h: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out.into_iter().flat_map(|w| (1..=h).map(move |j| [w.clone(), vec![j]].concat())).collect();
    }
    out
}

fn sample_family(h: usize, dim: usize, n: usize, c: f64, beta: f64, seed: u64, trial: usize) -> PerturbationFamily {
    let m = (c * n as f64).floor() as usize + 1;
    let m = m.min(n);
    let w = words(h, m)
        .into_iter()
        .enumerate()
        .map(|(k, suf)| {
            let key = (trial as u64) << 32 | k as u64;
            let mut rng = rng_for(seed, "perturb-w", key);
            let v = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
            (suf, v)
        })
        .collect();
    PerturbationFamily { n, c, m, beta, seed, trial, w }
}

/// Covering condition for one `w` in dimension 1: every lattice point of
/// `A′` lies in some shifted image of a core.
fn covering_holds(tiles: &[i64], probe: &[f64], pert: &CenterIfs) -> bool {
    let lam = pert.contraction[0];
    let tile_set: std::collections::HashSet<i64> = tiles.iter().copied().collect();
    probe.iter().all(|&z| {
        pert.translations.iter().any(|t| {
            // z ∈ λ·core_u + t with core_u = λ(u + [−1/4, 1/4]).
            let y = (z - t[0]) / lam / lam;
            let u = y.round();
            (y - u).abs() <= 0.25 && tile_set.contains(&(u as i64))
        })
    })
}

/// Randomized search for `w` satisfying the covering condition, with
/// certification of each success. Dimension 1 only.
pub fn perturb_and_verify(ifs: &CenterIfs, n: usize, c: f64, beta: f64, trials: usize, seed: u64, opts: &PerturbOptions) -> Result<PerturbReport> {
    if ifs.dim() != 1 {
        return Err(Error::UnsupportedDimension("perturbation pipeline is implemented for d_c = 1".into()));
    }
    if !(c > 0.0 && c < 1.0) || n == 0 {
        return Err(Error::InvalidInput("need c ∈ (0,1) and n ≥ 1".into()));
    }
    let h = ifs.n_maps() - 1;
    if h == 0 {
        return Err(Error::InvalidInput("need at least two maps".into()));
    }
    let j = ifs.jacobian();
    let hypothesis_margin = 2.0 * (j * h as f64).ln() - (2.0 - c) * beta.ln();
    if hypothesis_margin <= 0.0 {
        return Err(Error::HypothesisViolated(format!("β^(2−c) ≥ (JH)²: margin {hypothesis_margin:.6}")));
    }
    let total = (h as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if total > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { count: total, cap: ENUMERATION_CAP });
    }
    let br: Vec<usize> = (1..=h).collect();
    let (card_max, _) = max_image_count(ifs, Some(&br), n, 64, seed)?;
    let claim = coverage_claim_bruteforce(ifs, n, beta)?;

    // A, tiles meeting A, and the lattice probe A′ = K ∩ λ·(spacing)ℤ.
    let imgs = composite_images(ifs, &br, n, &[0]);
    let a_region = region_at_least(&imgs, claim.threshold_count);
    let lam = ifs.contraction[0].powi(n as i32 + 1);
    let mut tiles: Vec<i64> = Vec::new();
    for &(lo, hi) in &a_region {
        let u0 = (lo / lam - 0.5).ceil() as i64;
        let u1 = (hi / lam + 0.5).floor() as i64;
        tiles.extend(u0..=u1);
    }
    tiles.sort_unstable();
    tiles.dedup();
    let mut probe = Vec::new();
    let per_tile = (1.0 / opts.lattice_spacing).round() as i64;
    for &u in &tiles {
        for k in (u * per_tile - per_tile / 2)..=(u * per_tile + per_tile / 2) {
            probe.push(lam * k as f64 * opts.lattice_spacing);
        }
    }
    probe.sort_by(f64::total_cmp);
    probe.dedup();

    let outcomes: Vec<(bool, Option<GridSet>, PerturbationFamily)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let fam = sample_family(h, 1, n, c, beta, seed, t);
            let pert = perturbed_system(ifs, &fam, opts.shift_factor);
            if !covering_holds(&tiles, &probe, &pert) {
                return (false, None, fam);
            }
            (true, search_recurrent_compact(&pert, opts.search_cells).set, fam)
        })
        .collect();
    let mut covering_count = 0;
    let mut success_count = 0;
    let mut first_witness = None;
    let mut uncertified = Vec::new();
    for (t, (cov, set, fam)) in outcomes.into_iter().enumerate() {
        if !cov {
            continue;
        }
        covering_count += 1;
        match set {
            Some(g) => {
                success_count += 1;
                if first_witness.is_none() {
                    first_witness = Some((fam, g));
                }
            }
            None => uncertified.push(t),
        }
    }
    Ok(PerturbReport {
        trials,
        covering_count,
        success_count,
        hypothesis_margin,
        card_max,
        card_bound: beta.powi(n as i32),
        claim,
        probe_points: probe.len(),
        first_witness,
        uncertified_trials: uncertified,
    })
}

/// Resolution sweep: certification status at `cells`, `2·cells`, `4·cells`.
pub fn refinement_sweep(ifs: &CenterIfs, lo: &[f64], hi: &[f64], cells: usize) -> Vec<(usize, bool)> {
    [cells, 2 * cells, 4 * cells]
        .into_iter()
        .map(|c| (c, recurrent_compact_check(ifs, &GridSet::from_box(lo, hi, c)).is_certified()))
        .collect()
}

/// Distinct suffix classes actually used by a family (for reporting).
pub fn suffix_classes(fam: &PerturbationFamily, h: usize) -> HashMap<Vec<usize>, usize> {
    let mut out = HashMap::new();
    for w in words(h, fam.n) {
        *out.entry(w[w.len() - fam.m..].to_vec()).or_insert(0) += 1;
    }
    out
}
