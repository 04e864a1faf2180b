//! Sparse annotation format selection.
//!
//! Given an affinity matrix `A` and a budget `m`, pick `m` landmarks so that
//! the worst-covered unselected landmark is as strongly correlated as
//! possible with its best selected proxy:
//!
//! ```text
//! c(S) = min_{j ∉ S} max_{i ∈ S} A[i][j]
//! ```
//!
//! This is the K-center problem in the distance `1 - A`. The exact solver
//! binary-searches the distinct off-diagonal affinity values: a threshold
//! `t` is achievable iff some `m` landmarks dominate every landmark in the
//! graph with edges `A[i][j] >= t`. Each decision is a branch-and-bound
//! minimum dominating set search.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bitset::Bits;
use crate::cca::affinity_matrix;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{AffinityMatrix, SquareMatrix};
use crate::shape::normalize_dataset;

/// Largest landmark count the `auto` method hands to the exact solver.
pub const AUTO_EXACT_MAX_M: usize = 100;

/// An affinity matrix with an annotation budget.
#[derive(Debug, Clone, Copy)]
pub struct SearchProblem<'a> {
    affinity: &'a AffinityMatrix,
    budget_m: usize,
}

impl<'a> SearchProblem<'a> {
    pub fn new(affinity: &'a AffinityMatrix, budget_m: usize) -> Result<Self> {
        let m_size = affinity.m_size();
        if budget_m == 0 || budget_m > m_size {
            return Err(Error::InvalidArgument(format!(
                "budget m = {budget_m} outside [1, {m_size}]"
            )));
        }
        Ok(Self { affinity, budget_m })
    }

    pub fn affinity(&self) -> &'a AffinityMatrix {
        self.affinity
    }

    pub fn budget_m(&self) -> usize {
        self.budget_m
    }

    fn m_size(&self) -> usize {
        self.affinity.m_size()
    }
}

/// A selected landmark subset with its proxy assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFormat {
    pub budget_m: usize,
    /// Selected landmarks, ascending.
    pub selected: Vec<usize>,
    /// `assignment[j]` is the selected landmark that stands in for `j`.
    pub assignment: Vec<usize>,
    /// Minimum correlation between an unselected landmark and its proxy.
    pub c_hat: f64,
    /// True when `c_hat` is proven maximal.
    pub optimal: bool,
    /// Upper bound on the optimum minus `c_hat`; 0 when optimal.
    pub gap: f64,
}

#[derive(Serialize)]
struct SparseFormatJson<'a> {
    budget_m: usize,
    selected: &'a [usize],
    assignment: BTreeMap<usize, usize>,
    c_hat: f64,
    optimal: bool,
    gap: f64,
    seed: Option<u64>,
    sampling_ratio: Option<f64>,
}

impl SparseFormat {
    fn from_selection(affinity: &SquareMatrix, selected: Vec<usize>) -> Self {
        let (c_hat, assignment) = evaluate_sorted(affinity, &selected);
        Self {
            budget_m: selected.len(),
            selected,
            assignment,
            c_hat,
            optimal: false,
            gap: 0.0,
        }
    }

    /// JSON document with the run's seed and image sampling ratio.
    pub fn to_json(&self, seed: Option<u64>, sampling_ratio: Option<f64>) -> Result<String> {
        let doc = SparseFormatJson {
            budget_m: self.budget_m,
            selected: &self.selected,
            assignment: self.assignment.iter().copied().enumerate().collect(),
            c_hat: self.c_hat,
            optimal: self.optimal,
            gap: self.gap,
            seed,
            sampling_ratio,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// Coverage value and proxy assignment of a selection.
///
/// Ties in the proxy choice go to the lowest index. The value is 1 when the
/// selection covers every landmark.
pub fn evaluate_format(affinity: &SquareMatrix, selected: &[usize]) -> Result<(f64, Vec<usize>)> {
    if selected.is_empty() {
        return Err(Error::InvalidArgument("selection is empty".into()));
    }
    let m_size = affinity.m_size();
    if let Some(&bad) = selected.iter().find(|&&i| i >= m_size) {
        return Err(Error::InvalidArgument(format!(
            "selected index {bad} out of range for M = {m_size}"
        )));
    }
    let mut sorted = selected.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    Ok(evaluate_sorted(affinity, &sorted))
}

fn evaluate_sorted(affinity: &SquareMatrix, selected: &[usize]) -> (f64, Vec<usize>) {
    let m_size = affinity.m_size();
    let mut is_selected = vec![false; m_size];
    for &i in selected {
        is_selected[i] = true;
    }
    let mut c = 1.0f64;
    let mut assignment = Vec::with_capacity(m_size);
    for j in 0..m_size {
        if is_selected[j] {
            assignment.push(j);
            continue;
        }
        let mut best = selected[0];
        for &i in &selected[1..] {
            if affinity.get(i, j) > affinity.get(best, j) {
                best = i;
            }
        }
        assignment.push(best);
        c = c.min(affinity.get(best, j));
    }
    (c, assignment)
}

/// Solver selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    Exact,
    Greedy,
    /// Exact for `M <= 100`, greedy otherwise.
    #[default]
    Auto,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Self::Exact),
            "greedy" => Ok(Self::Greedy),
            "auto" => Ok(Self::Auto),
            other => Err(Error::InvalidArgument(format!("unknown search method '{other}'"))),
        }
    }
}

pub fn search(p: &SearchProblem<'_>, method: Method, time_limit: Option<Duration>) -> SparseFormat {
    match method {
        Method::Exact => search_exact(p, time_limit),
        Method::Greedy => search_greedy(p),
        Method::Auto if p.m_size() <= AUTO_EXACT_MAX_M => search_exact(p, time_limit),
        Method::Auto => search_greedy(p),
    }
}

/// Sorted distinct off-diagonal affinity values.
fn candidate_thresholds(affinity: &SquareMatrix) -> Vec<f64> {
    let m = affinity.m_size();
    let mut values: Vec<f64> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .map(|(i, j)| affinity.get(i, j))
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
}

/// An upper bound on the optimal coverage value. Landmark `j` can do no
/// better than its strongest off-diagonal affinity, and at most `m` of the
/// weakest landmarks can be excused by selecting them.
fn coverage_upper_bound(affinity: &SquareMatrix, budget_m: usize) -> f64 {
    let m = affinity.m_size();
    if budget_m >= m {
        return 1.0;
    }
    let mut best: Vec<f64> = (0..m)
        .map(|j| {
            (0..m)
                .filter(|&i| i != j)
                .map(|i| affinity.get(i, j))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    best.sort_by(f64::total_cmp);
    best[budget_m]
}

/// Outcome of one dominating-set decision.
enum Decision {
    Feasible(Vec<usize>),
    Infeasible,
    Timeout,
}

/// Branch-and-bound decision procedure for "at most `r` landmarks from an
/// allowed set dominate the uncovered set".
struct Dominator {
    /// `cover[i]`: landmarks covered by selecting `i` (itself included).
    cover: Vec<Bits>,
    deadline: Option<Instant>,
    nodes: u64,
    timed_out: bool,
}

impl Dominator {
    fn new(affinity: &SquareMatrix, threshold: f64, deadline: Option<Instant>) -> Self {
        let m = affinity.m_size();
        let cover = (0..m)
            .map(|i| {
                let mut b = Bits::empty(m);
                for j in 0..m {
                    if i == j || affinity.get(i, j) >= threshold {
                        b.insert(j);
                    }
                }
                b
            })
            .collect();
        Self {
            cover,
            deadline,
            nodes: 0,
            timed_out: false,
        }
    }

    fn decide(&mut self, uncovered: &Bits, allowed: &Bits, budget: usize) -> Decision {
        self.timed_out = false;
        match self.solve(uncovered, allowed.clone(), budget) {
            Some(picks) => Decision::Feasible(picks),
            None if self.timed_out => Decision::Timeout,
            None => Decision::Infeasible,
        }
    }

    fn out_of_time(&mut self) -> bool {
        self.nodes += 1;
        if self.nodes.is_multiple_of(256) {
            if let Some(deadline) = self.deadline {
                if Instant::now() >= deadline {
                    self.timed_out = true;
                }
            }
        }
        self.timed_out
    }

    fn solve(&mut self, uncovered: &Bits, allowed: Bits, budget: usize) -> Option<Vec<usize>> {
        if uncovered.is_empty() {
            return Some(Vec::new());
        }
        if budget == 0 || self.out_of_time() {
            return None;
        }
        let need = uncovered.count();

        // Allowed coverers of every uncovered landmark.
        let mut coverers: Vec<(usize, Bits)> = uncovered
            .iter()
            .map(|v| (v, self.cover[v].intersection(&allowed)))
            .collect();
        if coverers.iter().any(|(_, c)| c.is_empty()) {
            return None;
        }

        // Packing bound: landmarks with pairwise disjoint coverer sets each
        // need their own pick.
        coverers.sort_by_key(|(v, c)| (c.count(), *v));
        let mut used = Bits::empty(allowed.capacity());
        let mut disjoint = 0;
        for (_, c) in &coverers {
            if !c.intersects(&used) {
                used.union_with(c);
                disjoint += 1;
                if disjoint > budget {
                    return None;
                }
            }
        }

        // Candidates that cover something, by gain.
        let mut gains: Vec<(usize, usize)> = allowed
            .iter()
            .map(|u| (self.cover[u].intersection_count(uncovered), u))
            .filter(|&(g, _)| g > 0)
            .collect();
        gains.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

        // Max-coverage bound: even disjoint best picks fall short.
        if gains.iter().take(budget).map(|g| g.0).sum::<usize>() < need {
            return None;
        }
        if gains.first().is_some_and(|g| g.0 == need) {
            return Some(vec![gains[0].1]);
        }
        if budget == 1 {
            return None;
        }
        if let Some(picks) = self.greedy_cover(uncovered, &gains, budget) {
            return Some(picks);
        }

        // Drop candidates whose useful coverage is contained in that of an
        // earlier (no smaller) candidate: swapping them never hurts.
        let mut kept: Vec<(usize, Bits)> = Vec::with_capacity(gains.len());
        for &(_, u) in &gains {
            let useful = self.cover[u].intersection(uncovered);
            if !kept.iter().any(|(_, w)| useful.is_subset(w)) {
                kept.push((u, useful));
            }
        }
        let mut allowed = Bits::empty(allowed.capacity());
        for (u, _) in &kept {
            allowed.insert(*u);
        }

        // Branch on the uncovered landmark with the fewest remaining coverers.
        let mut branch_on = None;
        let mut fewest = usize::MAX;
        for (v, _) in &coverers {
            let k = self.cover[*v].intersection_count(&allowed);
            if k < fewest {
                fewest = k;
                branch_on = Some(*v);
                if k <= 1 {
                    break;
                }
            }
        }
        let v = branch_on?;
        let branches: Vec<usize> = kept
            .iter()
            .map(|(u, _)| *u)
            .filter(|&u| self.cover[v].contains(u))
            .collect();
        for u in branches {
            let rest = uncovered.difference(&self.cover[u]);
            allowed.remove(u);
            if let Some(mut picks) = self.solve(&rest, allowed.clone(), budget - 1) {
                picks.push(u);
                return Some(picks);
            }
            if self.timed_out {
                return None;
            }
        }
        None
    }

    fn greedy_cover(&self, uncovered: &Bits, gains: &[(usize, usize)], budget: usize) -> Option<Vec<usize>> {
        let mut left = uncovered.clone();
        let mut picks = Vec::with_capacity(budget);
        for _ in 0..budget {
            let mut best: Option<(usize, usize)> = None;
            for &(_, u) in gains {
                let g = self.cover[u].intersection_count(&left);
                if g > best.map_or(0, |b| b.0) {
                    best = Some((g, u));
                }
            }
            let (_, u) = best?;
            left.difference_with(&self.cover[u]);
            picks.push(u);
            if left.is_empty() {
                return Some(picks);
            }
        }
        None
    }
}

/// Whether `budget` landmarks can cover every landmark at affinity
/// `threshold` or above.
pub fn dominating_set_feasible(affinity: &SquareMatrix, threshold: f64, budget: usize) -> bool {
    let m = affinity.m_size();
    if budget >= m {
        return true;
    }
    let mut dom = Dominator::new(affinity, threshold, None);
    matches!(
        dom.decide(&Bits::full(m), &Bits::full(m), budget),
        Decision::Feasible(_)
    )
}

/// Pads a dominating witness to exactly `budget` landmarks with the lowest
/// unused indices.
fn pad_selection(mut picks: Vec<usize>, budget: usize) -> Vec<usize> {
    picks.sort_unstable();
    picks.dedup();
    let mut i = 0;
    while picks.len() < budget {
        if picks.binary_search(&i).is_err() {
            picks.push(i);
            picks.sort_unstable();
        }
        i += 1;
    }
    picks
}

/// Lexicographically smallest `budget`-subset dominating at the solver's
/// threshold, or `None` on timeout.
fn lex_smallest(dom: &mut Dominator, m_size: usize, budget: usize) -> Option<Vec<usize>> {
    let mut selected = Vec::with_capacity(budget);
    let mut uncovered = Bits::full(m_size);
    let mut next = 0;
    for pos in 0..budget {
        let remaining = budget - pos - 1;
        let mut chosen = None;
        for x in next..=(m_size - 1 - remaining) {
            let rest = uncovered.difference(&dom.cover[x]);
            let mut allowed = Bits::empty(m_size);
            for y in x + 1..m_size {
                allowed.insert(y);
            }
            match dom.decide(&rest, &allowed, remaining) {
                Decision::Feasible(_) => {
                    chosen = Some((x, rest));
                    break;
                }
                Decision::Infeasible => {}
                Decision::Timeout => return None,
            }
        }
        let (x, rest) = chosen.expect("a dominating completion exists at the optimal threshold");
        selected.push(x);
        uncovered = rest;
        next = x + 1;
    }
    Some(selected)
}

/// Exact maximin selection.
///
/// Returns the lexicographically smallest optimal subset. When the time
/// limit expires the best subset found so far is returned with
/// `optimal = false` and `gap` bounding the distance to the optimum.
pub fn search_exact(p: &SearchProblem<'_>, time_limit: Option<Duration>) -> SparseFormat {
    let affinity: &SquareMatrix = p.affinity();
    let m_size = p.m_size();
    let budget = p.budget_m();
    if budget == m_size {
        let mut f = SparseFormat::from_selection(affinity, (0..m_size).collect());
        f.optimal = true;
        return f;
    }
    let deadline = time_limit.map(|d| Instant::now() + d);
    let thresholds = candidate_thresholds(affinity);

    // `lo` is achievable (greedy witness); everything above `hi` is not.
    let warm = search_greedy(p);
    let index_of = |v: f64| thresholds.partition_point(|&t| t < v);
    let mut lo = index_of(warm.c_hat);
    let upper = coverage_upper_bound(affinity, budget);
    let mut hi = thresholds.partition_point(|&t| t <= upper) - 1;
    let mut witness = warm.selected.clone();
    let mut timed_out = false;

    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        let mut dom = Dominator::new(affinity, thresholds[mid], deadline);
        match dom.decide(&Bits::full(m_size), &Bits::full(m_size), budget) {
            Decision::Feasible(picks) => {
                witness = pad_selection(picks, budget);
                lo = mid;
            }
            Decision::Infeasible => hi = mid - 1,
            Decision::Timeout => {
                timed_out = true;
                break;
            }
        }
    }

    if !timed_out {
        let mut dom = Dominator::new(affinity, thresholds[lo], deadline);
        // On timeout the witness is still optimal, just not lexicographically
        // smallest.
        let selected = lex_smallest(&mut dom, m_size, budget).unwrap_or(witness);
        let mut f = SparseFormat::from_selection(affinity, selected);
        f.optimal = true;
        return f;
    }

    let mut f = SparseFormat::from_selection(affinity, witness);
    if f.c_hat < warm.c_hat {
        f = warm;
    }
    f.optimal = false;
    f.gap = (thresholds[hi] - f.c_hat).max(0.0);
    f
}

/// Farthest-first traversal in the distance `1 - A` followed by single-swap
/// local search.
///
/// `1 - A` need not satisfy the triangle inequality, so no approximation
/// factor is claimed. The result is flagged optimal only when it meets the
/// cheap upper bound.
pub fn search_greedy(p: &SearchProblem<'_>) -> SparseFormat {
    let affinity: &SquareMatrix = p.affinity();
    let m_size = p.m_size();
    let budget = p.budget_m();
    if budget == m_size {
        let mut f = SparseFormat::from_selection(affinity, (0..m_size).collect());
        f.optimal = true;
        return f;
    }

    // Start from the landmark whose weakest correlation is strongest.
    let row_min = |i: usize| {
        (0..m_size)
            .filter(|&j| j != i)
            .map(|j| affinity.get(i, j))
            .fold(f64::INFINITY, f64::min)
    };
    let mut first = 0;
    for i in 1..m_size {
        if row_min(i) > row_min(first) {
            first = i;
        }
    }
    let mut selected = vec![first];
    let mut nearest: Vec<f64> = (0..m_size).map(|j| affinity.get(first, j)).collect();
    let mut is_selected = vec![false; m_size];
    is_selected[first] = true;
    while selected.len() < budget {
        let mut far = None;
        for j in 0..m_size {
            if !is_selected[j] && far.is_none_or(|f: usize| nearest[j] < nearest[f]) {
                far = Some(j);
            }
        }
        let far = far.expect("budget below M leaves a candidate");
        is_selected[far] = true;
        selected.push(far);
        for j in 0..m_size {
            nearest[j] = nearest[j].max(affinity.get(far, j));
        }
    }
    selected.sort_unstable();

    let (mut best_c, _) = evaluate_sorted(affinity, &selected);
    loop {
        let mut improvement: Option<(f64, usize, usize)> = None;
        for (pos, &out) in selected.iter().enumerate() {
            for cand in 0..m_size {
                if is_selected[cand] {
                    continue;
                }
                let mut trial = selected.clone();
                trial[pos] = cand;
                trial.sort_unstable();
                let (c, _) = evaluate_sorted(affinity, &trial);
                if c > improvement.map_or(best_c, |b| b.0) {
                    improvement = Some((c, out, cand));
                }
            }
        }
        let Some((c, out, cand)) = improvement else { break };
        is_selected[out] = false;
        is_selected[cand] = true;
        selected.retain(|&i| i != out);
        selected.push(cand);
        selected.sort_unstable();
        best_c = c;
    }

    let mut f = SparseFormat::from_selection(affinity, selected);
    let upper = coverage_upper_bound(affinity, budget);
    f.optimal = f.c_hat >= upper;
    f.gap = (upper - f.c_hat).max(0.0);
    f
}

/// Coverage of an existing format next to a searched one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FormatComparison {
    pub c_existing: f64,
    pub c_hat: f64,
    pub delta: f64,
}

pub fn compare_format(
    affinity: &SquareMatrix,
    existing: &[usize],
    searched: &SparseFormat,
) -> Result<FormatComparison> {
    if existing.len() != searched.budget_m {
        return Err(Error::InvalidArgument(format!(
            "existing format has {} landmarks, searched budget is {}",
            existing.len(),
            searched.budget_m
        )));
    }
    let (c_existing, _) = evaluate_format(affinity, existing)?;
    Ok(FormatComparison {
        c_existing,
        c_hat: searched.c_hat,
        delta: searched.c_hat - c_existing,
    })
}

/// One budget on a sweep curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub m: usize,
    pub c_hat_mean: f64,
    /// Population variance across runs.
    pub c_hat_var: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
    pub sampling_ratio: f64,
    pub seed: u64,
}

impl SweepCurve {
    /// `m,mean,var` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,mean,var\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{}\n",
                p.m,
                crate::matrix::format_sig9(p.c_hat_mean),
                crate::matrix::format_sig9(p.c_hat_var)
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub ratio: f64,
    pub runs: usize,
    pub seed: u64,
    pub method: Method,
    pub time_limit: Option<Duration>,
    pub ridge: f64,
}

/// Number of images drawn per run.
pub fn subsample_size(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).ceil() as usize).min(n)
}

/// Indices of the images drawn for `run`, ascending.
pub fn subsample_indices(n: usize, ratio: f64, seed: u64, run: usize) -> Vec<usize> {
    let k = subsample_size(n, ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Coverage value versus budget over repeated seeded image subsamples.
///
/// Each run draws `ceil(ratio * N)` images without replacement, normalizes
/// them, builds the affinity matrix and searches every budget in `m_range`.
pub fn sweep(d: &Dataset, m_range: RangeInclusive<usize>, cfg: &SweepConfig) -> Result<SweepCurve> {
    if !(cfg.ratio > 0.0 && cfg.ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("ratio {} outside (0, 1]", cfg.ratio)));
    }
    if cfg.runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    let (lo, hi) = (*m_range.start(), *m_range.end());
    if lo == 0 || lo > hi || hi > d.m_size() {
        return Err(Error::InvalidArgument(format!(
            "budget range {lo}:{hi} outside [1, {}]",
            d.m_size()
        )));
    }
    let k = subsample_size(d.len(), cfg.ratio);
    if k < 3 {
        return Err(Error::TooFewRecords { required: 3, found: k });
    }

    let per_run: Vec<Vec<f64>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<f64>> {
            let idx = subsample_indices(d.len(), cfg.ratio, cfg.seed, run);
            let sample = normalize_dataset(&d.subset(&idx)?)?;
            let affinity = affinity_matrix(sample.dataset(), cfg.ridge)?;
            m_range
                .clone()
                .map(|m| {
                    let p = SearchProblem::new(&affinity, m)?;
                    Ok(search(&p, cfg.method, cfg.time_limit).c_hat)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let runs = cfg.runs as f64;
    let points = m_range
        .enumerate()
        .map(|(k, m)| {
            let mean = per_run.iter().map(|r| r[k]).sum::<f64>() / runs;
            let var = per_run.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / runs;
            SweepPoint {
                m,
                c_hat_mean: mean,
                c_hat_var: var,
                runs: cfg.runs,
            }
        })
        .collect();
    Ok(SweepCurve {
        points,
        sampling_ratio: cfg.ratio,
        seed: cfg.seed,
    })
}
