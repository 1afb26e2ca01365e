//! Subshifts of finite type.
//!
//! Entropy is reported in nats. Word enumeration is lexicographic and every
//! tie is broken lexicographically.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, VecDeque};

pub type Word = Vec<usize>;

/// Default cap on the number of enumerated words.
pub const DEFAULT_WORD_CAP: u128 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sft {
    pub alphabet_size: usize,
    pub transitions: Vec<Vec<u8>>,
}

impl Sft {
    pub fn new(transitions: Vec<Vec<u8>>) -> Result<Sft> {
        let n = transitions.len();
        if n == 0 {
            return Err(Error::EmptySubshift);
        }
        for (i, row) in transitions.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            if row.iter().any(|&b| b > 1) {
                return Err(Error::InvalidInput(format!("row {i} has an entry other than 0/1")));
            }
        }
        Ok(Sft { alphabet_size: n, transitions })
    }

    pub fn full_shift(k: usize) -> Sft {
        Sft { alphabet_size: k, transitions: vec![vec![1; k]; k] }
    }

    /// Transitions `[[1,1],[1,0]]`: the word `11` is forbidden.
    pub fn golden_mean() -> Sft {
        Sft { alphabet_size: 2, transitions: vec![vec![1, 1], vec![1, 0]] }
    }

    /// A single cycle `0 → 1 → … → p−1 → 0`.
    pub fn cycle(p: usize) -> Sft {
        let mut t = vec![vec![0; p]; p];
        for i in 0..p {
            t[i][(i + 1) % p] = 1;
        }
        Sft { alphabet_size: p, transitions: t }
    }

    #[inline]
    pub fn allowed(&self, a: usize, b: usize) -> bool {
        self.transitions[a][b] == 1
    }

    pub fn is_admissible(&self, w: &[usize]) -> bool {
        w.iter().all(|&s| s < self.alphabet_size) && w.windows(2).all(|p| self.allowed(p[0], p[1]))
    }

    /// Parse the text format: `sft <n>` then `n` rows of 0/1 digits
    /// (separated by whitespace or not).
    pub fn parse_text(text: &str) -> Result<Sft> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::InvalidInput("line 1: missing `sft <n>` header".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("sft") {
            return Err(Error::InvalidInput("line 1: header must start with `sft`".into()));
        }
        let n: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::InvalidInput("line 1: bad alphabet size".into()))?;
        let mut rows = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            let row: Vec<u8> = line
                .chars()
                .filter(|c| !c.is_whitespace() && *c != ',')
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    _ => Err(Error::InvalidInput(format!("row {}: unexpected character {c:?}", i + 1))),
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        if rows.len() != n {
            return Err(Error::InvalidInput(format!("expected {n} rows, found {}", rows.len())));
        }
        Sft::new(rows)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("sft {}\n", self.alphabet_size);
        for row in &self.transitions {
            let r: Vec<String> = row.iter().map(|b| b.to_string()).collect();
            s.push_str(&r.join(" "));
            s.push('\n');
        }
        s
    }

    /// Remove symbols with no successor or no predecessor until none remain.
    /// Returns the pruned shift and, for each kept symbol, its original index.
    pub fn pruned(&self) -> Result<(Sft, Vec<usize>)> {
        let n = self.alphabet_size;
        let mut alive = vec![true; n];
        loop {
            let mut changed = false;
            for i in 0..n {
                if !alive[i] {
                    continue;
                }
                let has_out = (0..n).any(|j| alive[j] && self.allowed(i, j));
                let has_in = (0..n).any(|j| alive[j] && self.allowed(j, i));
                if !has_out || !has_in {
                    alive[i] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let keep: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
        if keep.is_empty() {
            return Err(Error::EmptySubshift);
        }
        let t = keep.iter().map(|&i| keep.iter().map(|&j| self.transitions[i][j]).collect()).collect();
        Ok((Sft { alphabet_size: keep.len(), transitions: t }, keep))
    }

    /// Strongly connected components (Kosaraju), each sorted, listed in order
    /// of their smallest symbol.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.alphabet_size;
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let mut stack = vec![(s, 0usize)];
            seen[s] = true;
            while let Some(&mut (v, ref mut next)) = stack.last_mut() {
                if *next < n {
                    let w = *next;
                    *next += 1;
                    if self.allowed(v, w) && !seen[w] {
                        seen[w] = true;
                        stack.push((w, 0));
                    }
                } else {
                    order.push(v);
                    stack.pop();
                }
            }
        }
        let mut comp = vec![usize::MAX; n];
        let mut comps: Vec<Vec<usize>> = Vec::new();
        for &s in order.iter().rev() {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut members = vec![s];
            comp[s] = id;
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                for u in 0..n {
                    if self.allowed(u, v) && comp[u] == usize::MAX {
                        comp[u] = id;
                        members.push(u);
                        stack.push(u);
                    }
                }
            }
            members.sort_unstable();
            comps.push(members);
        }
        comps.sort_by_key(|c| c[0]);
        comps
    }

    /// Strongly connected with at least one transition.
    pub fn is_transitive(&self) -> bool {
        let comps = self.components();
        comps.len() == 1 && self.transitions.iter().any(|r| r.contains(&1))
    }

    fn submatrix(&self, members: &[usize]) -> Vec<Vec<f64>> {
        members.iter().map(|&i| members.iter().map(|&j| self.transitions[i][j] as f64).collect()).collect()
    }

    /// A shortest cycle through `s`, as a word starting at `s`.
    pub fn shortest_cycle(&self, s: usize) -> Option<Word> {
        let n = self.alphabet_size;
        let mut prev = vec![usize::MAX; n];
        let mut q = VecDeque::new();
        for t in 0..n {
            if self.allowed(s, t) {
                if t == s {
                    return Some(vec![s]);
                }
                if prev[t] == usize::MAX {
                    prev[t] = s;
                    q.push_back(t);
                }
            }
        }
        while let Some(v) = q.pop_front() {
            for t in 0..n {
                if !self.allowed(v, t) {
                    continue;
                }
                if t == s {
                    let mut path = vec![v];
                    let mut c = v;
                    while prev[c] != s {
                        c = prev[c];
                        path.push(c);
                    }
                    path.push(s);
                    path.reverse();
                    return Some(path);
                }
                if prev[t] == usize::MAX {
                    prev[t] = v;
                    q.push_back(t);
                }
            }
        }
        None
    }
}

/// Perron root of an irreducible nonnegative matrix together with the
/// Collatz–Wielandt bracket reached. Power iteration runs on `M + I`, which
/// is primitive whenever `M` is irreducible.
fn perron_root_power(m: &[Vec<f64>], rel_tol: f64, max_iter: usize) -> (f64, f64, f64) {
    let n = m.len();
    let mut x = vec![1.0; n];
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    for _ in 0..max_iter {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..n {
                acc += m[i][j] * x[j];
            }
            y[i] = acc;
        }
        let (mut l, mut h) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let r = y[i] / x[i];
            l = l.min(r);
            h = h.max(r);
        }
        lo = l - 1.0;
        hi = h - 1.0;
        let norm = y.iter().cloned().fold(0.0, f64::max);
        for v in y.iter_mut() {
            *v /= norm;
        }
        x = y;
        if hi - lo <= rel_tol * hi.max(1e-300) {
            break;
        }
    }
    (0.5 * (lo + hi), lo, hi)
}

fn perron_root_dense(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let a = DMatrix::from_fn(n, n, |i, j| m[i][j]);
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn perron_root(m: &[Vec<f64>]) -> Result<f64> {
    let n = m.len();
    if n == 1 {
        return Ok(m[0][0]);
    }
    let (rho, lo, hi) = perron_root_power(m, 1e-13, 200_000);
    if hi - lo <= 1e-12 * hi.max(1e-300) {
        return Ok(rho);
    }
    if n <= 64 {
        return Ok(perron_root_dense(m));
    }
    Err(Error::NotConverged { iterations: 200_000, residual: (hi - lo) / hi })
}

/// Topological entropy (nats): log of the spectral radius, taken as the
/// maximum over strongly connected components.
pub fn top_entropy(sft: &Sft) -> Result<f64> {
    let (p, _) = sft.pruned()?;
    let mut best = 0.0f64;
    for c in p.components() {
        let m = p.submatrix(&c);
        if c.len() == 1 && m[0][0] == 0.0 {
            continue;
        }
        best = best.max(perron_root(&m)?);
    }
    if best < 1.0 {
        // A pruned nonempty graph contains a cycle, so this only absorbs rounding.
        best = 1.0;
    }
    Ok(best.ln())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParryMeasure {
    pub stationary: Vec<f64>,
    pub transition_probs: Vec<Vec<f64>>,
}

impl ParryMeasure {
    /// Shannon entropy rate of the Markov chain, in nats.
    pub fn entropy_rate(&self) -> f64 {
        let mut h = 0.0;
        for (i, row) in self.transition_probs.iter().enumerate() {
            for &p in row {
                if p > 0.0 {
                    h -= self.stationary[i] * p * p.ln();
                }
            }
        }
        h
    }

    /// Measure of the cylinder spelled by `w` at a fixed position.
    pub fn cylinder(&self, w: &[usize]) -> f64 {
        if w.is_empty() {
            return 1.0;
        }
        let mut m = self.stationary[w[0]];
        for p in w.windows(2) {
            m *= self.transition_probs[p[0]][p[1]];
        }
        m
    }

    /// Bernoulli measure with the given weights (full shift).
    pub fn bernoulli(weights: &[f64]) -> ParryMeasure {
        ParryMeasure {
            stationary: weights.to_vec(),
            transition_probs: vec![weights.to_vec(); weights.len()],
        }
    }
}

fn perron_vector(m: &[Vec<f64>], transpose: bool, rho: f64) -> Vec<f64> {
    let n = m.len();
    let at = |i: usize, j: usize| if transpose { m[j][i] } else { m[i][j] };
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..200_000 {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..n {
                acc += at(i, j) * x[j];
            }
            y[i] = acc / (rho + 1.0);
        }
        let s: f64 = y.iter().sum();
        for v in y.iter_mut() {
            *v /= s;
        }
        let diff = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = y;
        if diff < 1e-15 {
            break;
        }
    }
    x
}

/// The measure of maximal entropy of a transitive subshift.
pub fn parry_measure(sft: &Sft) -> Result<ParryMeasure> {
    let comps = sft.components();
    if comps.len() != 1 || !sft.transitions.iter().any(|r| r.contains(&1)) {
        return Err(Error::NotTransitive { components: comps.len() });
    }
    let n = sft.alphabet_size;
    let m = sft.submatrix(&(0..n).collect::<Vec<_>>());
    let rho = perron_root(&m)?;
    let v = perron_vector(&m, false, rho);
    let u = perron_vector(&m, true, rho);
    let z: f64 = (0..n).map(|i| u[i] * v[i]).sum();
    let stationary: Vec<f64> = (0..n).map(|i| u[i] * v[i] / z).collect();
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if sft.allowed(i, j) {
                p[i][j] = v[j] / (rho * v[i]);
            }
        }
        // Remove rounding drift so rows are stochastic.
        let s: f64 = p[i].iter().sum();
        for x in p[i].iter_mut() {
            *x /= s;
        }
    }
    Ok(ParryMeasure { stationary, transition_probs: p })
}

/// Exact number of admissible words of length `n` with optional first/last
/// symbol constraints, saturating at `u128::MAX`.
pub fn count_words(sft: &Sft, n: usize, first: Option<usize>, last: Option<usize>) -> u128 {
    if n == 0 {
        return 0;
    }
    let k = sft.alphabet_size;
    let mut c: Vec<u128> = (0..k).map(|s| u128::from(first.is_none_or(|f| f == s))).collect();
    for _ in 1..n {
        let mut d = vec![0u128; k];
        for s in 0..k {
            if c[s] == 0 {
                continue;
            }
            for t in 0..k {
                if sft.allowed(s, t) {
                    d[t] = d[t].saturating_add(c[s]);
                }
            }
        }
        c = d;
    }
    (0..k).filter(|&t| last.is_none_or(|l| l == t)).fold(0u128, |a, t| a.saturating_add(c[t]))
}

/// Lexicographic DFS over admissible words of length `n`, calling `visit`
/// until it returns `false`. `last` constrains the final symbol.
pub fn for_each_word<F: FnMut(&[usize]) -> bool>(sft: &Sft, n: usize, first: Option<usize>, last: Option<usize>, mut visit: F) {
    if n == 0 {
        return;
    }
    let k = sft.alphabet_size;
    // can[r][s]: a word of r more symbols can follow s and end legally.
    let mut can = vec![vec![false; k]; n];
    for s in 0..k {
        can[0][s] = last.is_none_or(|l| l == s);
    }
    for r in 1..n {
        for s in 0..k {
            can[r][s] = (0..k).any(|t| sft.allowed(s, t) && can[r - 1][t]);
        }
    }
    let mut w = Vec::with_capacity(n);
    fn rec<F: FnMut(&[usize]) -> bool>(sft: &Sft, n: usize, can: &[Vec<bool>], w: &mut Vec<usize>, visit: &mut F) -> bool {
        if w.len() == n {
            return visit(w);
        }
        let rem = n - w.len() - 1;
        let prev = *w.last().unwrap();
        for t in 0..sft.alphabet_size {
            if sft.allowed(prev, t) && can[rem][t] {
                w.push(t);
                let go = rec(sft, n, can, w, visit);
                w.pop();
                if !go {
                    return false;
                }
            }
        }
        true
    }
    for s in 0..k {
        if first.is_some_and(|f| f != s) || !can[n - 1][s] {
            continue;
        }
        w.push(s);
        let go = rec(sft, n, &can, &mut w, &mut visit);
        w.pop();
        if !go {
            return;
        }
    }
}

/// All admissible words of length `n` meeting the constraints, in
/// lexicographic order.
pub fn admissible_words(sft: &Sft, n: usize, first: Option<usize>, last: Option<usize>, cap: u128) -> Result<Vec<Word>> {
    if n == 0 {
        return Err(Error::InvalidInput("word length must be at least 1".into()));
    }
    let count = count_words(sft, n, first, last);
    if count > cap {
        return Err(Error::LengthOverflow { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    for_each_word(sft, n, first, last, |w| {
        out.push(w.to_vec());
        true
    });
    Ok(out)
}

/// `w` has a nonempty proper prefix equal to a suffix.
pub fn is_bordered(w: &[usize]) -> bool {
    (1..w.len()).any(|l| w[..l] == w[w.len() - l..])
}

/// Number of occurrences of `pat` in `text`.
pub fn occurrences(text: &[usize], pat: &[usize]) -> usize {
    if pat.is_empty() || pat.len() > text.len() {
        return 0;
    }
    text.windows(pat.len()).filter(|w| *w == pat).count()
}

/// Words `(a_0..a_{n-1})` with `a_0 = star` such that `a_0..a_{n-1} star` is
/// admissible.
fn star_words_count(sft: &Sft, n: usize, star: usize) -> u128 {
    let k = sft.alphabet_size;
    (0..k)
        .filter(|&t| sft.allowed(t, star))
        .fold(0u128, |a, t| a.saturating_add(count_words(sft, n, Some(star), Some(t))))
}

fn for_each_star_word<F: FnMut(&[usize]) -> bool>(sft: &Sft, n: usize, star: usize, mut visit: F) {
    for_each_word(sft, n, Some(star), None, |w| {
        if sft.allowed(*w.last().unwrap(), star) {
            visit(w)
        } else {
            true
        }
    });
}

/// Lexicographically least unbordered word of `𝓛(n, star)`. Such a word
/// occurs exactly twice in its own square. Lengths below 2 are rejected: a
/// single letter is useless as a synchronising marker because every piece
/// would then be a subword of the marker square.
pub fn find_marker_word(sft: &Sft, n: usize, star: usize) -> Result<Word> {
    if star >= sft.alphabet_size {
        return Err(Error::InvalidInput(format!("symbol {star} outside alphabet")));
    }
    if n < 2 {
        return Err(Error::NoMarker { n, examined: star_words_count(sft, n.max(1), star) as usize });
    }
    let mut found = None;
    let mut examined = 0usize;
    for_each_star_word(sft, n, star, |w| {
        examined += 1;
        if !is_bordered(w) {
            found = Some(w.to_vec());
            false
        } else {
            true
        }
    });
    found.ok_or(Error::NoMarker { n, examined })
}

/// Embedded full shift built from a marker word.
///
/// Every word of the extraction is `marker^{marker_blocks}` followed by
/// `q − marker_blocks` pieces, each piece an element of `pieces`. Words have
/// length `k = q·n`. Words are indexed in mixed radix over the pieces, so
/// word 0 uses `pieces[0]` in every free slot.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FullShiftExtraction {
    pub k: usize,
    pub n: usize,
    pub q: usize,
    pub star: usize,
    pub marker: Word,
    pub marker_blocks: usize,
    pub pieces: Vec<Word>,
    pub degenerate: bool,
}

impl FullShiftExtraction {
    pub fn free_slots(&self) -> usize {
        self.q - self.marker_blocks
    }

    /// Number of words, as a float (it is usually astronomically large).
    pub fn count_f64(&self) -> f64 {
        (self.pieces.len() as f64).powi(self.free_slots() as i32)
    }

    pub fn log_count(&self) -> f64 {
        if self.free_slots() == 0 {
            0.0
        } else {
            self.free_slots() as f64 * (self.pieces.len() as f64).ln()
        }
    }

    /// Entropy of the embedded full shift per original time step.
    pub fn entropy(&self) -> f64 {
        self.log_count() / self.k as f64
    }

    /// The word with mixed-radix index `idx` (digits over the free slots,
    /// most significant first).
    pub fn word(&self, mut idx: u128) -> Word {
        let p = self.pieces.len() as u128;
        let slots = self.free_slots();
        let mut digits = vec![0usize; slots];
        for d in (0..slots).rev() {
            digits[d] = (idx % p.max(1)) as usize;
            idx /= p.max(1);
        }
        let mut w = Vec::with_capacity(self.k);
        for _ in 0..self.marker_blocks {
            w.extend_from_slice(&self.marker);
        }
        for d in digits {
            w.extend_from_slice(&self.pieces[d]);
        }
        w
    }

    /// Verify that the marker square occurs, in every bi-infinite
    /// concatenation of words, only at positions ≡ 0 mod k. This is the
    /// symbolic certificate that the k shifts of the embedded set are
    /// pairwise disjoint.
    pub fn verify_disjoint_shifts(&self) -> std::result::Result<(), String> {
        let blocks: Vec<Vec<&Word>> = (0..self.q)
            .map(|s| if s < self.marker_blocks { vec![&self.marker] } else { self.pieces.iter().collect() })
            .collect();
        let mut pat = Vec::new();
        for _ in 0..self.marker_blocks {
            pat.extend_from_slice(&self.marker);
        }
        verify_sync(&blocks, &pat, self.k)
    }

    /// Every concatenation of words is admissible.
    pub fn verify_admissible(&self, sft: &Sft) -> bool {
        let all: Vec<&Word> = std::iter::once(&self.marker).chain(self.pieces.iter()).collect();
        all.iter().all(|w| sft.is_admissible(w))
            && all.iter().all(|a| all.iter().all(|b| sft.allowed(*a.last().unwrap(), b[0])))
    }
}

/// KMP failure function.
fn kmp_table(p: &[usize]) -> Vec<usize> {
    let mut f = vec![0; p.len()];
    let mut k = 0;
    for i in 1..p.len() {
        while k > 0 && p[i] != p[k] {
            k = f[k - 1];
        }
        if p[i] == p[k] {
            k += 1;
        }
        f[i] = k;
    }
    f
}

/// Check that `pat` occurs only at offsets ≡ 0 mod `period` in every
/// bi-infinite concatenation whose slot `s` (mod the number of slots) is
/// filled by one of `slots[s]`. Explores the product of slot index and KMP
/// state. Starting from the empty KMP state at a block boundary reaches every
/// state that can occur in a bi-infinite sequence once one full period has
/// been read, provided `period ≥ pat.len()`.
pub fn verify_sync(slots: &[Vec<&Word>], pat: &[usize], period: usize) -> std::result::Result<(), String> {
    let fail = kmp_table(pat);
    let step = |mut st: usize, c: usize| -> usize {
        if st == pat.len() {
            st = fail[st - 1];
        }
        while st > 0 && pat[st] != c {
            st = fail[st - 1];
        }
        if pat[st] == c {
            st + 1
        } else {
            0
        }
    };
    let q = slots.len();
    let mut offsets = vec![0usize; q + 1];
    for s in 0..q {
        let len = slots[s][0].len();
        if slots[s].iter().any(|w| w.len() != len) {
            return Err(format!("slot {s} mixes piece lengths"));
        }
        offsets[s + 1] = offsets[s] + len;
    }
    if offsets[q] != period {
        return Err(format!("slot lengths sum to {} but period is {period}", offsets[q]));
    }
    // Slots with identical contents share their transitions: group them by
    // the addresses of their words.
    let mut group_of: HashMap<Vec<usize>, usize> = HashMap::new();
    let groups: Vec<usize> = slots
        .iter()
        .map(|sl| {
            let key: Vec<usize> = sl.iter().map(|w| *w as *const Word as usize).collect();
            let next = group_of.len();
            *group_of.entry(key).or_insert(next)
        })
        .collect();
    // (group, start state) -> (end states, in-slot positions where a match ends)
    let mut memo: HashMap<(usize, usize), (BTreeSet<usize>, BTreeSet<usize>)> = HashMap::new();
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert((0usize, 0usize));
    queue.push_back((0usize, 0usize));
    while let Some((s, st)) = queue.pop_front() {
        let (ends, hits) = memo.entry((groups[s], st)).or_insert_with(|| {
            let mut ends = BTreeSet::new();
            let mut hits = BTreeSet::new();
            for w in &slots[s] {
                let mut cur = st;
                for (j, &c) in w.iter().enumerate() {
                    cur = step(cur, c);
                    if cur == pat.len() {
                        hits.insert(j);
                    }
                }
                ends.insert(cur);
            }
            (ends, hits)
        });
        for &j in hits.iter() {
            let end = offsets[s] + j + 1;
            let start = (end + period * pat.len() - pat.len()) % period;
            if start != 0 {
                return Err(format!("marker occurrence at offset {start} mod {period}"));
            }
        }
        for &cur in ends.iter() {
            let key = ((s + 1) % q, cur);
            if seen.insert(key) {
                queue.push_back(key);
            }
        }
    }
    Ok(())
}

/// Largest piece family materialized by [`extract_full_shift`].
pub const PIECE_CAP: u128 = 1 << 20;

/// Report of a single `(n, star)` candidate in the extraction search.
#[derive(Clone, Debug)]
struct Candidate {
    k: usize,
    n: usize,
    q: usize,
    star: usize,
    marker: Word,
}

/// Entropy-preserving full-shift extraction.
///
/// Scans `n` from `⌈log₂ alphabet⌉ + 2` up to `n_cap` and every symbol as
/// `star`; for each, counts the pieces (words of `𝓛(n, star)` that are not
/// length-`n` subwords of the marker square) and takes the least number of
/// slots `q` making `(q−2)·log|pieces| / (q·n)` exceed `h − ε`. The candidate
/// with the smallest `k = q·n` wins; ties go to smaller `n`, then smaller
/// symbol. Candidates with more than [`PIECE_CAP`] pieces are skipped.
pub fn extract_full_shift(sft: &Sft, epsilon: f64, n_cap: usize) -> Result<FullShiftExtraction> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    if !sft.is_transitive() {
        return Err(Error::NotTransitive { components: sft.components().len() });
    }
    let h = top_entropy(sft)?;
    let target = h - epsilon;
    if target < 0.0 {
        // Nothing to preserve: a single periodic orbit already has entropy
        // 0 > h − ε.
        let cyc = sft.shortest_cycle(0).ok_or(Error::EmptySubshift)?;
        let n = cyc.len();
        return Ok(FullShiftExtraction {
            k: n,
            n,
            q: 1,
            star: cyc[0],
            marker: cyc,
            marker_blocks: 1,
            pieces: Vec::new(),
            degenerate: true,
        });
    }
    let n_lo = (usize::BITS - (sft.alphabet_size.max(1) - 1).leading_zeros()) as usize + 2;
    let mut best: Option<Candidate> = None;
    for n in n_lo..=n_cap {
        if best.as_ref().is_some_and(|b| 3 * n > b.k) {
            break;
        }
        for star in 0..sft.alphabet_size {
            let total = star_words_count(sft, n, star);
            if total < 2 {
                continue;
            }
            let marker = match find_marker_word(sft, n, star) {
                Ok(m) => m,
                Err(_) => continue,
            };
            let excluded = marker_square_windows(sft, &marker, star).len() as u128;
            let pieces = total - excluded;
            if pieces < 2 || pieces > PIECE_CAP {
                continue;
            }
            let r = (pieces as f64).ln() / n as f64;
            if r <= target {
                continue;
            }
            let q = ((2.0 * r / (r - target)).floor() as usize + 1).max(3);
            let k = q * n;
            if best.as_ref().is_none_or(|b| k < b.k) {
                best = Some(Candidate { k, n, q, star, marker });
            }
        }
    }
    let c = best.ok_or_else(|| Error::SearchExhausted {
        detail: format!("no marker/piece family reaches entropy {target:.6} for n in {n_lo}..={n_cap}"),
    })?;
    let excluded = marker_square_windows(sft, &c.marker, c.star);
    let mut pieces = Vec::new();
    for_each_star_word(sft, c.n, c.star, |w| {
        if !excluded.contains(w) {
            pieces.push(w.to_vec());
        }
        true
    });
    let ext = FullShiftExtraction {
        k: c.k,
        n: c.n,
        q: c.q,
        star: c.star,
        marker: c.marker,
        marker_blocks: 2,
        pieces,
        degenerate: false,
    };
    if let Err(e) = ext.verify_disjoint_shifts() {
        return Err(Error::PostconditionViolated(e));
    }
    Ok(ext)
}

/// Distinct length-`n` subwords of `w₀w₀` lying in `𝓛(n, star)`.
fn marker_square_windows(sft: &Sft, marker: &[usize], star: usize) -> BTreeSet<Word> {
    let n = marker.len();
    let mut sq = marker.to_vec();
    sq.extend_from_slice(marker);
    sq.windows(n)
        .filter(|w| w[0] == star && sft.allowed(w[n - 1], star))
        .map(|w| w.to_vec())
        .collect()
}

/// Bi-infinite, eventually periodic symbolic point.
///
/// Coordinates `start..start+center.len()` hold `center`; to the right the
/// sequence repeats `right` (aligned so `right[0]` sits at the first index
/// after the center), to the left it repeats `left` (aligned so `left[0]`
/// would sit at `start`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolicPoint {
    pub left: Word,
    pub center: Word,
    pub start: i64,
    pub right: Word,
}

impl SymbolicPoint {
    pub fn new(left: Word, center: Word, start: i64, right: Word) -> Result<SymbolicPoint> {
        if left.is_empty() || right.is_empty() {
            return Err(Error::InvalidInput("periodic parts must be nonempty".into()));
        }
        Ok(SymbolicPoint { left, center, start, right })
    }

    /// The periodic point `…www.www…` with `w[0]` at coordinate 0.
    pub fn periodic(w: &[usize]) -> SymbolicPoint {
        SymbolicPoint { left: w.to_vec(), center: Vec::new(), start: 0, right: w.to_vec() }
    }

    fn end(&self) -> i64 {
        self.start + self.center.len() as i64
    }

    pub fn symbol(&self, i: i64) -> usize {
        if i < self.start {
            self.left[(i - self.start).rem_euclid(self.left.len() as i64) as usize]
        } else if i < self.end() {
            self.center[(i - self.start) as usize]
        } else {
            self.right[(i - self.end()).rem_euclid(self.right.len() as i64) as usize]
        }
    }

    /// `σᵏ(x)`, i.e. `(σᵏx)_i = x_{i+k}`.
    pub fn shift(&self, k: i64) -> SymbolicPoint {
        SymbolicPoint { start: self.start - k, ..self.clone() }
    }

    pub fn window(&self, lo: i64, hi: i64) -> Word {
        (lo..=hi).map(|i| self.symbol(i)).collect()
    }

    /// Coordinates from which both points are purely right-periodic, and a
    /// common period.
    fn right_tail(&self, other: &SymbolicPoint) -> (i64, i64) {
        let p = lcm(self.right.len(), other.right.len()) as i64;
        (self.end().max(other.end()), p)
    }

    fn left_tail(&self, other: &SymbolicPoint) -> (i64, i64) {
        let p = lcm(self.left.len(), other.left.len()) as i64;
        (self.start.min(other.start), p)
    }

    /// `x_i = y_i` for every `i ≥ from`.
    pub fn agrees_from(&self, other: &SymbolicPoint, from: i64) -> bool {
        let (t, p) = self.right_tail(other);
        let hi = t.max(from) + p;
        (from..hi).all(|i| self.symbol(i) == other.symbol(i))
    }

    /// `x_i = y_i` for every `i ≤ to`.
    pub fn agrees_until(&self, other: &SymbolicPoint, to: i64) -> bool {
        let (t, p) = self.left_tail(other);
        let lo = t.min(to) - p;
        (lo..=to).all(|i| self.symbol(i) == other.symbol(i))
    }

    /// Coordinates in `[lo, hi]` at which the point differs from `other`,
    /// bounded search for the largest (or smallest) disagreement.
    pub fn last_disagreement_below(&self, other: &SymbolicPoint, from: i64) -> Option<i64> {
        let (t, p) = self.left_tail(other);
        let lo = t.min(from) - p;
        (lo..from).rev().find(|&i| self.symbol(i) != other.symbol(i))
    }

    pub fn first_disagreement_above(&self, other: &SymbolicPoint, to: i64) -> Option<i64> {
        let (t, p) = self.right_tail(other);
        let hi = t.max(to) + p;
        ((to + 1)..hi).find(|&i| self.symbol(i) != other.symbol(i))
    }

    pub fn admissible_in(&self, sft: &Sft) -> bool {
        let lo = self.start - 2 * self.left.len() as i64;
        let hi = self.end() + 2 * self.right.len() as i64;
        (lo..hi).all(|i| {
            let (a, b) = (self.symbol(i), self.symbol(i + 1));
            a < sft.alphabet_size && b < sft.alphabet_size && sft.allowed(a, b)
        })
    }
}

pub(crate) fn lcm(a: usize, b: usize) -> usize {
    a / num_integer::gcd(a, b) * b
}

/// Count of the admissible words of length `n`, as a cache keyed by `n`.
pub fn word_count_table(sft: &Sft, n_max: usize) -> HashMap<usize, u128> {
    (1..=n_max).map(|n| (n, count_words(sft, n, None, None))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn golden() -> f64 {
        ((1.0 + 5f64.sqrt()) / 2.0).ln()
    }

    #[test]
    fn entropy_examples() {
        assert!((top_entropy(&Sft::full_shift(3)).unwrap() - 3f64.ln()).abs() < 1e-12);
        assert!((top_entropy(&Sft::golden_mean()).unwrap() - golden()).abs() < 1e-10);
        assert_eq!(top_entropy(&Sft::full_shift(1)).unwrap(), 0.0);
        assert!(top_entropy(&Sft::cycle(5)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn entropy_of_reducible_shift_is_max_over_components() {
        // Two full 2-shift blocks {0,1} and {2,3,4} (full 3-shift) joined by 1 → 2.
        let mut t = vec![vec![0u8; 5]; 5];
        for i in 0..2 {
            for j in 0..2 {
                t[i][j] = 1;
            }
        }
        for i in 2..5 {
            for j in 2..5 {
                t[i][j] = 1;
            }
        }
        t[1][2] = 1;
        let s = Sft::new(t).unwrap();
        assert!(!s.is_transitive());
        assert!((top_entropy(&s).unwrap() - 3f64.ln()).abs() < 1e-12);
        assert!(matches!(parry_measure(&s), Err(Error::NotTransitive { .. })));
    }

    #[test]
    fn pruning_removes_dead_symbols() {
        let s = Sft::new(vec![vec![1, 1, 0], vec![1, 0, 1], vec![0, 0, 0]]).unwrap();
        let (p, keep) = s.pruned().unwrap();
        assert_eq!(keep, vec![0, 1]);
        assert_eq!(p, Sft::golden_mean());
        let dead = Sft::new(vec![vec![0, 1], vec![0, 0]]).unwrap();
        assert_eq!(dead.pruned().unwrap_err(), Error::EmptySubshift);
        assert_eq!(top_entropy(&dead).unwrap_err(), Error::EmptySubshift);
    }

    #[test]
    fn parry_examples() {
        let p = parry_measure(&Sft::full_shift(2)).unwrap();
        for x in &p.stationary {
            assert!((x - 0.5).abs() < 1e-12);
        }
        for row in &p.transition_probs {
            for x in row {
                assert!((x - 0.5).abs() < 1e-12);
            }
        }
        // Independent oracle: left and right Perron vectors of [[1,1],[1,0]]
        // are both (φ, 1), so the stationary vector is (φ², 1)/(1+φ²).
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let g = parry_measure(&Sft::golden_mean()).unwrap();
        assert!((g.stationary[0] - phi * phi / (1.0 + phi * phi)).abs() < 1e-12);
        assert!((g.stationary[1] - 1.0 / (1.0 + phi * phi)).abs() < 1e-12);
        assert!((g.transition_probs[0][0] - 1.0 / phi).abs() < 1e-12);
        let one = parry_measure(&Sft::full_shift(1)).unwrap();
        assert_eq!(one.stationary, vec![1.0]);
    }

    #[test]
    fn word_examples() {
        let f2 = Sft::full_shift(2);
        assert_eq!(admissible_words(&f2, 3, None, None, DEFAULT_WORD_CAP).unwrap().len(), 8);
        let g = admissible_words(&Sft::golden_mean(), 4, None, None, DEFAULT_WORD_CAP).unwrap();
        assert_eq!(g.len(), 8);
        assert!(g.windows(2).all(|p| p[0] < p[1]));
        assert!(g.iter().all(|w| !w.windows(2).any(|p| p == [1, 1])));
        let ones = admissible_words(&Sft::full_shift(4), 1, None, None, DEFAULT_WORD_CAP).unwrap();
        assert_eq!(ones, vec![vec![0], vec![1], vec![2], vec![3]]);
        let e = admissible_words(&f2, 30, None, None, DEFAULT_WORD_CAP).unwrap_err();
        assert!(matches!(e, Error::LengthOverflow { .. }));
        let c = admissible_words(&f2, 3, Some(1), Some(0), DEFAULT_WORD_CAP).unwrap();
        assert_eq!(c, vec![vec![1, 0, 0], vec![1, 1, 0]]);
    }

    #[test]
    fn marker_examples() {
        let f2 = Sft::full_shift(2);
        assert_eq!(find_marker_word(&f2, 4, 0).unwrap(), vec![0, 0, 0, 1]);
        assert!(matches!(find_marker_word(&f2, 1, 0), Err(Error::NoMarker { .. })));
        let g = Sft::golden_mean();
        let m = find_marker_word(&g, 5, 0).unwrap();
        let mut sq = m.clone();
        sq.extend_from_slice(&m);
        assert_eq!(occurrences(&sq, &m), 2);
        assert!(g.is_admissible(&sq));
        assert_eq!(m[0], 0);
    }

    #[test]
    fn marker_brute_force_agrees_on_full_two_shift() {
        // Oracle: scan the 8 candidates 0xyz and keep those occurring exactly
        // twice in their square.
        let mut ok = Vec::new();
        for bits in 0..8usize {
            let w = vec![0, (bits >> 2) & 1, (bits >> 1) & 1, bits & 1];
            let mut sq = w.clone();
            sq.extend_from_slice(&w);
            let occ = (0..=4).filter(|&i| sq[i..i + 4] == w[..]).count();
            if occ == 2 {
                ok.push(w);
            }
        }
        assert_eq!(ok[0], vec![0, 0, 0, 1]);
    }

    #[test]
    fn extraction_on_full_two_shift() {
        let f2 = Sft::full_shift(2);
        let e = extract_full_shift(&f2, 0.3, 24).unwrap();
        assert_eq!((e.n, e.q, e.k, e.star, e.pieces.len()), (5, 8, 40, 1, 15));
        assert!(e.entropy() > 2f64.ln() - 0.3);
        assert!(e.verify_disjoint_shifts().is_ok());
        assert!(e.verify_admissible(&f2));
        let w = e.word(12345);
        assert_eq!(w.len(), 40);
        assert_eq!(&w[..5], &e.marker[..]);
        assert_eq!(&w[5..10], &e.marker[..]);
    }

    #[test]
    fn zero_entropy_extraction_is_degenerate() {
        let e = extract_full_shift(&Sft::cycle(3), 0.1, 24).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.k, 3);
        assert_eq!(e.count_f64(), 1.0);
        assert!(e.verify_disjoint_shifts().is_ok());
    }

    #[test]
    fn sync_check_detects_misaligned_marker() {
        // Pieces containing the marker square break synchronisation.
        let marker = vec![0, 1];
        let bad = vec![0, 1];
        let slots = vec![vec![&marker], vec![&marker], vec![&bad]];
        assert!(verify_sync(&slots, &[0, 1, 0, 1], 6).is_err());
    }

    #[test]
    fn symbolic_point_shift_and_agreement() {
        let x = SymbolicPoint::new(vec![1], vec![0, 1, 1], -1, vec![0]).unwrap();
        assert_eq!(x.window(-3, 3), vec![1, 1, 0, 1, 1, 0, 0]);
        let y = x.shift(2);
        assert_eq!(y.symbol(0), x.symbol(2));
        assert_eq!(y.symbol(-5), x.symbol(-3));
        let z = SymbolicPoint::new(vec![0], vec![1, 1], 0, vec![0]).unwrap();
        assert!(x.agrees_from(&z, 0));
        assert!(!x.agrees_until(&z, 0));
        assert_eq!(x.last_disagreement_below(&z, 0), Some(-2));
    }

    fn arb_sft() -> impl Strategy<Value = Sft> {
        (2usize..6).prop_flat_map(|n| {
            proptest::collection::vec(proptest::collection::vec(prop_oneof![3 => Just(1u8), 1 => Just(0u8)], n), n)
                .prop_map(|t| Sft::new(t).unwrap())
        })
    }

    proptest! {
        #[test]
        fn subsystem_entropy_is_smaller(s in arb_sft(), drop in any::<(usize, usize)>()) {
            let h = match top_entropy(&s) { Ok(h) => h, Err(_) => return Ok(()) };
            let mut t = s.clone();
            let (i, j) = (drop.0 % s.alphabet_size, drop.1 % s.alphabet_size);
            t.transitions[i][j] = 0;
            if let Ok(h2) = top_entropy(&t) {
                prop_assert!(h2 <= h + 1e-12);
            }
        }

        #[test]
        fn word_growth_bounds_entropy_from_above(s in arb_sft()) {
            let h = match top_entropy(&s) { Ok(h) => h, Err(_) => return Ok(()) };
            let (p, _) = s.pruned().unwrap();
            for n in 1..=14 {
                let c = count_words(&p, n, None, None) as f64;
                prop_assert!(c.ln() / n as f64 >= h - 1e-9);
            }
        }

        #[test]
        fn parry_invariants(s in arb_sft()) {
            prop_assume!(s.is_transitive());
            let m = parry_measure(&s).unwrap();
            let total: f64 = m.stationary.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let n = s.alphabet_size;
            for j in 0..n {
                let v: f64 = (0..n).map(|i| m.stationary[i] * m.transition_probs[i][j]).sum();
                prop_assert!((v - m.stationary[j]).abs() < 1e-10);
            }
            prop_assert!((m.entropy_rate() - top_entropy(&s).unwrap()).abs() < 1e-9);
        }

    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn extraction_invariants(s in arb_sft(), eps in 0.15f64..0.6) {
            prop_assume!(s.is_transitive());
            let h = top_entropy(&s).unwrap();
            prop_assume!(h > eps + 0.05);
            if let Ok(e) = extract_full_shift(&s, eps, 8) {
                prop_assert!(e.entropy() > h - eps);
                prop_assert!(e.verify_disjoint_shifts().is_ok());
                prop_assert!(e.verify_admissible(&s));
                let mut sq = e.marker.clone();
                sq.extend_from_slice(&e.marker);
                prop_assert_eq!(occurrences(&sq, &e.marker), 2);
            }
        }
    }
}
