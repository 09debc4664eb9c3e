//! Closed-form candidate placements and the searches that pick the optimum.
//!
//! An optimal placement has at most three file groups: a fully cached head
//! (`1..=n_o`), an optional partly cached middle (`n_o+1..=n_1`) and an
//! uncached tail. Each structure has a closed form parameterised by the
//! group boundaries and by the one or two subset sizes `l_o`, `l_1` that
//! carry cached data, so the optimum is found by enumerating those tuples
//! and evaluating the linear rate of each.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::placement::{binom_f64, check_users, linear_rate, rate_coefficients, PlacementMatrix, RateCoefficients};
use crate::popularity::{order_stats, PopularityModel};

/// Slack used when comparing `KM/n` against integer subset sizes.
const BOUNDARY_TOL: f64 = 1e-9;
/// Entries at or below this are treated as nonpositive when validating a
/// candidate.
const POSITIVE_TOL: f64 = 1e-12;
/// Rates this close are treated as tied.
const RATE_TIE_TOL: f64 = 1e-12;

fn floor_tol(x: f64) -> i64 {
    (x + BOUNDARY_TOL).floor() as i64
}

fn ceil_tol(x: f64) -> i64 {
    (x - BOUNDARY_TOL).ceil() as i64
}

/// Which closed-form structure produced a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseId {
    OneGroup,
    TwoGroupZeroTail,
    TwoGroupCase2i,
    TwoGroupCase2ii,
    ThreeGroupCase1,
    ThreeGroupCase2,
}

impl CaseId {
    pub fn group_count(self) -> usize {
        match self {
            CaseId::OneGroup => 1,
            CaseId::TwoGroupZeroTail | CaseId::TwoGroupCase2i | CaseId::TwoGroupCase2ii => 2,
            CaseId::ThreeGroupCase1 | CaseId::ThreeGroupCase2 => 3,
        }
    }
}

/// Generating parameters of a candidate; absent entries do not apply.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CandidateTuple {
    pub n_o: Option<usize>,
    pub n_1: Option<usize>,
    pub l_o: Option<usize>,
    pub l_1: Option<usize>,
}

/// A closed-form placement together with its rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSolution {
    #[serde(rename = "case")]
    pub case_id: CaseId,
    #[serde(flatten)]
    pub tuple: CandidateTuple,
    pub rate: f64,
    pub placement: PlacementMatrix,
}

impl CandidateSolution {
    /// Size of the most popular file group (`N` for a single group).
    pub fn first_group_size(&self) -> usize {
        match self.case_id {
            CaseId::OneGroup => self.placement.n_files(),
            _ => self.tuple.n_o.expect("multi-group candidates carry n_o"),
        }
    }

    fn preference(&self, other: &Self) -> Ordering {
        self.case_id.group_count().cmp(&other.case_id.group_count()).then_with(|| self.tuple.cmp(&other.tuple))
    }
}

/// Knobs for the candidate search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolverOptions {
    /// Only split groups between files of strictly different popularity.
    /// Optimal placements give equally popular files identical vectors, so
    /// this shrinks the search without changing the result.
    pub prune_equal_popularity: bool,
    pub execution: Execution,
}

fn check_cache(n_files: usize, cache: f64) -> Result<()> {
    if !cache.is_finite() || cache < 0.0 || cache > n_files as f64 + BOUNDARY_TOL {
        return Err(Error::InvalidParameter(format!("cache size M = {cache} outside [0, {n_files}]")));
    }
    Ok(())
}

/// The symmetric optimum for `v = K * (cache fraction)` subsets' worth of
/// data: mass `1 + floor(v) - v` on `l = floor(v)` and `v - floor(v)` on
/// `l = floor(v) + 1`.
fn symmetric_row(k_users: usize, v: f64) -> Vec<f64> {
    let mut row = vec![0.0; k_users + 1];
    let v = v.clamp(0.0, k_users as f64);
    let mut lo = floor_tol(v).clamp(0, k_users as i64) as usize;
    let mut frac = v - lo as f64;
    if frac < 0.0 {
        // v sits within tolerance just below an integer
        frac = 0.0;
    }
    if lo == k_users {
        frac = 0.0;
    }
    if frac >= 1.0 {
        lo += 1;
        frac = 0.0;
    }
    row[lo] = (1.0 - frac) / binom_f64(k_users, lo);
    if frac > 0.0 {
        row[lo + 1] = frac / binom_f64(k_users, lo + 1);
    }
    row
}

/// Identical placement for every file, using the whole cache.
pub fn one_group_placement(n_files: usize, k_users: usize, cache: f64) -> Result<PlacementMatrix> {
    if n_files == 0 {
        return Err(Error::InvalidParameter("number of files must be at least 1".into()));
    }
    check_users(k_users)?;
    check_cache(n_files, cache)?;
    let row = symmetric_row(k_users, k_users as f64 * cache / n_files as f64);
    let mut m = PlacementMatrix::zeros(n_files, k_users);
    for n in 1..=n_files {
        m.set_row(n, &row);
    }
    Ok(m)
}

/// Two row types for files `1..=n_o` and `n_o+1..=n_end` when the second
/// group holds a single cached subgroup `l_o` that is smaller than the
/// first group's.
fn case2i_rows(n_end: usize, k_users: usize, cache: f64, n_o: usize, l_o: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n_o == 0 || n_o >= n_end {
        return Err(Error::InfeasibleCase(format!("n_o = {n_o} outside 1..{n_end}")));
    }
    let km = k_users as f64 * cache;
    let lo_min = floor_tol(km / n_end as f64) + 1;
    let lo_max = (k_users as i64).min(ceil_tol(km / n_o as f64) - 1);
    if (l_o as i64) < lo_min || (l_o as i64) > lo_max {
        return Err(Error::InfeasibleCase(format!("l_o = {l_o} outside [{lo_min}, {lo_max}] for n_o = {n_o}")));
    }
    let (ne, no, lof) = (n_end as f64, n_o as f64, l_o as f64);
    let head_share = no / ne;
    let share = (km / (lof * ne) - head_share) / (1.0 - head_share);
    let server = (1.0 - km / (lof * ne)) / (1.0 - head_share);
    if share <= POSITIVE_TOL || share >= 1.0 - POSITIVE_TOL || server <= POSITIVE_TOL {
        return Err(Error::InfeasibleCase(format!("degenerate split at n_o = {n_o}, l_o = {l_o}")));
    }
    let b = binom_f64(k_users, l_o);
    let mut first = vec![0.0; k_users + 1];
    first[l_o] = 1.0 / b;
    let mut second = vec![0.0; k_users + 1];
    second[l_o] = share / b;
    second[0] = server;
    Ok((first, second))
}

/// Two row types when both groups share subgroup `l_o` and only the first
/// group also caches subgroup `l_1`.
fn case2ii_rows(
    n_end: usize,
    k_users: usize,
    cache: f64,
    n_o: usize,
    l_o: usize,
    l_1: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if n_o == 0 || n_o >= n_end {
        return Err(Error::InfeasibleCase(format!("n_o = {n_o} outside 1..{n_end}")));
    }
    if l_o == l_1 || !(1..=k_users).contains(&l_o) || !(1..=k_users).contains(&l_1) {
        return Err(Error::InfeasibleCase(format!("invalid subgroup pair ({l_o}, {l_1})")));
    }
    let km = k_users as f64 * cache;
    let (ne, no, lof, l1f) = (n_end as f64, n_o as f64, l_o as f64, l_1 as f64);
    let v_end = km / ne;
    let v_head = km / no;
    let c1 = lof > v_end + BOUNDARY_TOL && l1f < v_head - BOUNDARY_TOL;
    let c2 = lof < v_end - BOUNDARY_TOL && l1f > v_head + BOUNDARY_TOL;
    let head_fits = no <= cache + BOUNDARY_TOL;
    if !(c1 || (c2 && !head_fits)) {
        return Err(Error::InfeasibleCase(format!(
            "(l_o, l_1) = ({l_o}, {l_1}) meets neither ordering condition for n_o = {n_o}"
        )));
    }
    let denom = 1.0 - l1f * no / (lof * ne);
    if denom.abs() <= POSITIVE_TOL {
        return Err(Error::InfeasibleCase("singular split (l_1 n_o = l_o n_end)".into()));
    }
    let shared = (km / (lof * ne) - l1f * no / (lof * ne)) / denom;
    let extra = (1.0 - km / (lof * ne)) / denom;
    if shared <= POSITIVE_TOL || extra <= POSITIVE_TOL {
        return Err(Error::InfeasibleCase(format!("nonpositive entry at n_o = {n_o}, l_o = {l_o}, l_1 = {l_1}")));
    }
    let a_lo = shared / binom_f64(k_users, l_o);
    let mut first = vec![0.0; k_users + 1];
    first[l_o] = a_lo;
    first[l_1] = extra / binom_f64(k_users, l_1);
    let mut second = vec![0.0; k_users + 1];
    second[l_o] = a_lo;
    second[0] = extra;
    Ok((first, second))
}

fn assemble(
    n_files: usize,
    k_users: usize,
    n_o: usize,
    n_end: usize,
    first: &[f64],
    second: &[f64],
) -> PlacementMatrix {
    let mut m = PlacementMatrix::uncached(n_files, k_users);
    for n in 1..=n_o {
        m.set_row(n, first);
    }
    for n in n_o + 1..=n_end {
        m.set_row(n, second);
    }
    m
}

/// Two-group placement with a partly cached second group (single shared
/// subgroup `l_o`, first group strictly larger).
pub fn case2i_placement(n_files: usize, k_users: usize, cache: f64, n_o: usize, l_o: usize) -> Result<PlacementMatrix> {
    check_users(k_users)?;
    check_cache(n_files, cache)?;
    let (first, second) = case2i_rows(n_files, k_users, cache, n_o, l_o)?;
    Ok(assemble(n_files, k_users, n_o, n_files, &first, &second))
}

/// Two-group placement where the groups share subgroup `l_o` and the first
/// group additionally caches subgroup `l_1`.
pub fn case2ii_placement(
    n_files: usize,
    k_users: usize,
    cache: f64,
    n_o: usize,
    l_o: usize,
    l_1: usize,
) -> Result<PlacementMatrix> {
    check_users(k_users)?;
    check_cache(n_files, cache)?;
    let (first, second) = case2ii_rows(n_files, k_users, cache, n_o, l_o, l_1)?;
    Ok(assemble(n_files, k_users, n_o, n_files, &first, &second))
}

/// A candidate before it is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    /// files `1..=n_o` share the symmetric row, the rest are uncached
    HeadOnly {
        n_o: usize,
    },
    Shrink {
        n_end: usize,
        n_o: usize,
        l_o: usize,
    },
    Shared {
        n_end: usize,
        n_o: usize,
        l_o: usize,
        l_1: usize,
    },
}

/// Coefficients and parameters of one placement problem.
#[derive(Debug, Clone)]
pub struct PlacementProblem {
    model: PopularityModel,
    k_users: usize,
    cache: f64,
    coeffs: RateCoefficients,
    options: SolverOptions,
}

impl PlacementProblem {
    pub fn new(model: &PopularityModel, k_users: usize, cache: f64) -> Result<Self> {
        Self::with_options(model, k_users, cache, SolverOptions::default())
    }

    pub fn with_options(model: &PopularityModel, k_users: usize, cache: f64, options: SolverOptions) -> Result<Self> {
        check_users(k_users)?;
        check_cache(model.n_files(), cache)?;
        let ystats = order_stats(model, k_users)?;
        let coeffs = rate_coefficients(model, &ystats)?;
        Ok(PlacementProblem {
            model: model.clone(),
            k_users,
            cache: cache.min(model.n_files() as f64),
            coeffs,
            options,
        })
    }

    pub fn model(&self) -> &PopularityModel {
        &self.model
    }

    pub fn n_files(&self) -> usize {
        self.model.n_files()
    }

    pub fn k_users(&self) -> usize {
        self.k_users
    }

    pub fn cache(&self) -> f64 {
        self.cache
    }

    pub fn coefficients(&self) -> &RateCoefficients {
        &self.coeffs
    }

    pub fn options(&self) -> SolverOptions {
        self.options
    }

    /// Whether a group may end at file `n` (always true unless pruning).
    fn may_split_after(&self, n: usize) -> bool {
        !self.options.prune_equal_popularity || n >= self.n_files() || self.model.p(n) > self.model.p(n + 1)
    }

    fn head_only_shapes(&self) -> Vec<Shape> {
        (1..=self.n_files())
            .filter(|&n_o| self.cache <= n_o as f64 + BOUNDARY_TOL)
            .filter(|&n_o| self.may_split_after(n_o))
            .map(|n_o| Shape::HeadOnly { n_o })
            .collect()
    }

    /// Loop bounds of the two-group search over files `1..=n_end`.
    fn two_group_shapes(&self, n_end: usize, out: &mut Vec<Shape>) {
        let k = self.k_users as i64;
        let km = self.k_users as f64 * self.cache;
        let lo_start = floor_tol(km / n_end as f64) + 1;
        for n_o in 1..n_end {
            if !self.may_split_after(n_o) {
                continue;
            }
            let head_ceil = ceil_tol(km / n_o as f64);
            for l_o in lo_start.max(1)..=k.min(head_ceil - 1) {
                out.push(Shape::Shrink { n_end, n_o, l_o: l_o as usize });
            }
            for l_o in lo_start.max(1)..=k {
                for l_1 in 1..=k.min(head_ceil - 1) {
                    if l_1 != l_o {
                        out.push(Shape::Shared { n_end, n_o, l_o: l_o as usize, l_1: l_1 as usize });
                    }
                }
            }
            for l_o in 1..=(lo_start - 1).min(k) {
                for l_1 in head_ceil.max(1)..=k {
                    if l_1 != l_o {
                        out.push(Shape::Shared { n_end, n_o, l_o: l_o as usize, l_1: l_1 as usize });
                    }
                }
            }
        }
    }

    fn two_group_tail_shapes(&self) -> Vec<Shape> {
        let mut shapes = Vec::new();
        self.two_group_shapes(self.n_files(), &mut shapes);
        shapes
    }

    fn three_group_shapes(&self) -> Vec<Shape> {
        let mut shapes = Vec::new();
        let n = self.n_files();
        if n < 3 {
            return shapes;
        }
        let start = (floor_tol(self.cache) + 1).max(2) as usize;
        for n_1 in start..n {
            if self.may_split_after(n_1) {
                self.two_group_shapes(n_1, &mut shapes);
            }
        }
        shapes
    }

    fn build(&self, shape: Shape) -> Result<CandidateSolution> {
        let (n, k, m) = (self.n_files(), self.k_users, self.cache);
        let (case_id, tuple, placement) = match shape {
            Shape::HeadOnly { n_o } => {
                let v = k as f64 * m / n_o as f64;
                let row = symmetric_row(k, v);
                let mut p = PlacementMatrix::uncached(n, k);
                for i in 1..=n_o {
                    p.set_row(i, &row);
                }
                let case_id = if n_o == n { CaseId::OneGroup } else { CaseId::TwoGroupZeroTail };
                let tuple = CandidateTuple {
                    n_o: Some(n_o),
                    l_o: Some(floor_tol(v).clamp(0, k as i64) as usize),
                    ..Default::default()
                };
                (case_id, tuple, p)
            }
            Shape::Shrink { n_end, n_o, l_o } => {
                let (first, second) = case2i_rows(n_end, k, m, n_o, l_o)?;
                let (case_id, n_1) =
                    if n_end == n { (CaseId::TwoGroupCase2i, None) } else { (CaseId::ThreeGroupCase1, Some(n_end)) };
                let tuple = CandidateTuple { n_o: Some(n_o), n_1, l_o: Some(l_o), l_1: Some(l_o) };
                (case_id, tuple, assemble(n, k, n_o, n_end, &first, &second))
            }
            Shape::Shared { n_end, n_o, l_o, l_1 } => {
                let (first, second) = case2ii_rows(n_end, k, m, n_o, l_o, l_1)?;
                let (case_id, n_1) =
                    if n_end == n { (CaseId::TwoGroupCase2ii, None) } else { (CaseId::ThreeGroupCase2, Some(n_end)) };
                let tuple = CandidateTuple { n_o: Some(n_o), n_1, l_o: Some(l_o), l_1: Some(l_1) };
                (case_id, tuple, assemble(n, k, n_o, n_end, &first, &second))
            }
        };
        let rate = linear_rate(&placement, &self.coeffs);
        Ok(CandidateSolution { case_id, tuple, rate, placement })
    }

    /// Builds and evaluates every feasible candidate of `shapes`, in order.
    fn evaluate(&self, shapes: &[Shape]) -> Vec<CandidateSolution> {
        self.options.execution.map(shapes, |&s| self.build(s).ok()).into_iter().flatten().collect()
    }

    /// Feasible candidates of the chosen families, in enumeration order.
    pub fn candidates(&self, families: CandidateFamilies) -> Vec<CandidateSolution> {
        let mut shapes = Vec::new();
        if families.head_only {
            shapes.extend(self.head_only_shapes());
        }
        if families.two_group {
            shapes.extend(self.two_group_tail_shapes());
        }
        if families.three_group {
            shapes.extend(self.three_group_shapes());
        }
        self.evaluate(&shapes)
    }

    /// Best candidate where files `1..=n_o` share the symmetric placement and
    /// the rest stay at the server (`n_o = N` is the single-group case).
    pub fn algorithm1(&self) -> Result<CandidateSolution> {
        let shapes = self.head_only_shapes();
        select_best(self.evaluate(&shapes))
            .ok_or_else(|| Error::InvalidParameter(format!("no feasible head size for M = {}", self.cache)))
    }

    /// Best two-group candidate whose second group is partly cached;
    /// `None` when no tuple is feasible.
    pub fn algorithm2(&self) -> Option<CandidateSolution> {
        select_best(self.evaluate(&self.two_group_tail_shapes()))
    }

    /// Best three-group candidate (uncached third group); `None` when the
    /// search space is empty.
    pub fn algorithm3(&self) -> Option<CandidateSolution> {
        select_best(self.evaluate(&self.three_group_shapes()))
    }

    /// Optimal placement: best of all three searches.
    pub fn algorithm4(&self) -> CandidateSolution {
        let (n, k) = (self.n_files(), self.k_users);
        if self.cache <= BOUNDARY_TOL || self.cache >= n as f64 - BOUNDARY_TOL {
            let shape = Shape::HeadOnly { n_o: n };
            return self.build(shape).expect("single group always feasible");
        }
        let mut shapes = self.head_only_shapes();
        shapes.extend(self.two_group_tail_shapes());
        shapes.extend(self.three_group_shapes());
        debug_assert!(k >= 1);
        select_best(self.evaluate(&shapes)).expect("single-group candidate is always feasible")
    }

    /// The single-group placement over all `N` files.
    pub fn one_group(&self) -> CandidateSolution {
        self.build(Shape::HeadOnly { n_o: self.n_files() }).expect("single group always feasible")
    }
}

/// Which candidate families [`PlacementProblem::candidates`] enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateFamilies {
    pub head_only: bool,
    pub two_group: bool,
    pub three_group: bool,
}

impl CandidateFamilies {
    pub const ALL: Self = CandidateFamilies { head_only: true, two_group: true, three_group: true };
}

/// Minimum rate; near-ties go to fewer groups, then the smaller tuple.
fn select_best(candidates: Vec<CandidateSolution>) -> Option<CandidateSolution> {
    let min_rate = candidates.iter().map(|c| c.rate).fold(f64::INFINITY, f64::min);
    candidates.into_iter().filter(|c| c.rate <= min_rate + RATE_TIE_TOL).min_by(|a, b| a.preference(b))
}

pub fn algorithm1(model: &PopularityModel, k_users: usize, cache: f64) -> Result<CandidateSolution> {
    PlacementProblem::new(model, k_users, cache)?.algorithm1()
}

pub fn algorithm2(model: &PopularityModel, k_users: usize, cache: f64) -> Result<Option<CandidateSolution>> {
    Ok(PlacementProblem::new(model, k_users, cache)?.algorithm2())
}

pub fn algorithm3(model: &PopularityModel, k_users: usize, cache: f64) -> Result<Option<CandidateSolution>> {
    Ok(PlacementProblem::new(model, k_users, cache)?.algorithm3())
}

pub fn algorithm4(model: &PopularityModel, k_users: usize, cache: f64) -> Result<CandidateSolution> {
    Ok(PlacementProblem::new(model, k_users, cache)?.algorithm4())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::{analyze_groups, average_rate};
    use crate::popularity::{make_custom, make_zipf};
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_group_fractional_and_edges() {
        let p = one_group_placement(9, 7, 7.0).unwrap();
        // v = 49/9
        assert_abs_diff_eq!(p.get(1, 5), (1.0 + 5.0 - 49.0 / 9.0) / 21.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(9, 6), (49.0 / 9.0 - 5.0) / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(1, 5), 0.0265, epsilon = 5e-5);
        assert_abs_diff_eq!(p.get(1, 6), 0.0635, epsilon = 5e-5);
        assert_eq!(p.get(1, 0), 0.0);
        assert!(p.check(7.0).cache_fully_used());

        let full = one_group_placement(4, 3, 4.0).unwrap();
        assert_eq!(full.row(2), &[0.0, 0.0, 0.0, 1.0]);
        let empty = one_group_placement(4, 3, 0.0).unwrap();
        assert_eq!(empty.row(3), &[1.0, 0.0, 0.0, 0.0]);
        assert!(one_group_placement(4, 3, 4.5).is_err());
        assert!(one_group_placement(4, 3, -0.1).is_err());
    }

    #[test]
    fn one_group_integer_v_has_single_entry() {
        let p = one_group_placement(4, 4, 2.0).unwrap();
        assert_eq!(p.nonzeros_in_row(1), 1);
        assert_abs_diff_eq!(p.get(1, 2), 1.0 / 6.0);
    }

    #[test]
    fn case2i_zipf_m6() {
        let p = case2i_placement(9, 7, 6.0, 8, 5).unwrap();
        assert_abs_diff_eq!(p.get(8, 5), 1.0 / 21.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(9, 5), 0.0190, epsilon = 5e-5);
        assert_abs_diff_eq!(p.get(9, 0), 0.6, epsilon = 1e-12);
        assert!(p.check(6.0).cache_fully_used());
    }

    #[test]
    fn case2i_window_and_degenerate() {
        assert!(matches!(case2i_placement(9, 7, 6.0, 8, 4), Err(Error::InfeasibleCase(_))));
        assert!(matches!(case2i_placement(2, 2, 1.0, 1, 1), Err(Error::InfeasibleCase(_))));
    }

    #[test]
    fn case2ii_inner_block_m2_5() {
        let p = case2ii_placement(6, 7, 2.5, 4, 3, 4).unwrap();
        assert_abs_diff_eq!(p.get(1, 3), 0.75 / 35.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(1, 4), 0.25 / 35.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(5, 3), 0.75 / 35.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(5, 0), 0.25, epsilon = 1e-15);
        assert_eq!(p.get(4, 0), 0.0);
        assert!(p.check(2.5).cache_fully_used());
        assert!(matches!(case2ii_placement(9, 7, 2.5, 4, 3, 3), Err(Error::InfeasibleCase(_))));
    }

    #[test]
    fn algorithm1_small_instance() {
        let m = make_custom(&[0.7, 0.3]).unwrap();
        let best = algorithm1(&m, 2, 1.0).unwrap();
        assert_eq!(best.tuple.n_o, Some(2));
        assert_eq!(best.case_id, CaseId::OneGroup);
        assert_abs_diff_eq!(best.placement.get(1, 1), 0.5);
        assert_abs_diff_eq!(best.rate, 0.5, epsilon = 1e-14);
        // n_o = 1 would need a whole file per user: v = 2, a_2 = 1 for file 1
        let problem = PlacementProblem::new(&m, 2, 1.0).unwrap();
        let all = problem.candidates(CandidateFamilies { head_only: true, two_group: false, three_group: false });
        assert_eq!(all.len(), 2);
        assert!(all[0].rate > best.rate);
    }

    #[test]
    fn algorithm1_rejects_oversized_cache() {
        let m = make_custom(&[0.7, 0.3]).unwrap();
        assert!(algorithm1(&m, 2, 3.0).is_err());
    }

    #[test]
    fn algorithm2_zipf_m6() {
        let m = make_zipf(9, 1.5).unwrap();
        let best = algorithm2(&m, 7, 6.0).unwrap().unwrap();
        assert_eq!(best.case_id, CaseId::TwoGroupCase2i);
        assert_eq!((best.tuple.n_o, best.tuple.l_o, best.tuple.l_1), (Some(8), Some(5), Some(5)));
    }

    #[test]
    fn algorithm2_empty_window() {
        let m = make_zipf(3, 0.0).unwrap();
        let problem = PlacementProblem::new(&m, 2, 3.0).unwrap();
        assert!(problem.algorithm2().is_none());
        assert!(problem.two_group_tail_shapes().iter().all(|s| !matches!(s, Shape::Shrink { .. })));
    }

    #[test]
    fn algorithm3_zipf_m2_5_and_m5_5() {
        let m = make_zipf(9, 1.5).unwrap();
        let best = algorithm3(&m, 7, 2.5).unwrap().unwrap();
        assert_eq!(best.case_id, CaseId::ThreeGroupCase2);
        assert_eq!(best.tuple, CandidateTuple { n_o: Some(4), n_1: Some(6), l_o: Some(3), l_1: Some(4) });
        assert_eq!(best.placement.get(7, 0), 1.0);

        let best = algorithm3(&m, 7, 5.5).unwrap().unwrap();
        assert_eq!(best.case_id, CaseId::ThreeGroupCase1);
        assert_eq!((best.tuple.n_o, best.tuple.n_1, best.tuple.l_o), (Some(7), Some(8), Some(5)));
        assert_abs_diff_eq!(best.placement.get(8, 5), 0.7 / 21.0, epsilon = 1e-12);
        assert_abs_diff_eq!(best.placement.get(8, 0), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn algorithm3_empty_when_cache_covers_all_but_one() {
        let m = make_zipf(9, 1.5).unwrap();
        assert!(algorithm3(&m, 7, 8.5).unwrap().is_none());
    }

    #[test]
    fn algorithm4_picks_single_group_at_large_cache() {
        let m = make_zipf(9, 1.5).unwrap();
        let best = algorithm4(&m, 7, 7.0).unwrap();
        assert_eq!(best.case_id, CaseId::OneGroup);
        assert_eq!(analyze_groups(&best.placement).group_count, 1);
        let problem = PlacementProblem::new(&m, 7, 7.0).unwrap();
        if let Some(two) = problem.algorithm2() {
            assert!(two.rate > best.rate);
        }
    }

    #[test]
    fn algorithm4_trivial_caches() {
        let m = make_custom(&[0.7, 0.3]).unwrap();
        let none = algorithm4(&m, 2, 0.0).unwrap();
        assert_abs_diff_eq!(none.rate, 2.0, epsilon = 1e-14);
        assert_eq!(none.placement, PlacementMatrix::uncached(2, 2));
        let full = algorithm4(&m, 2, 2.0).unwrap();
        assert_eq!(full.rate, 0.0);
    }

    #[test]
    fn uniform_popularity_gives_one_group() {
        for (n, k) in [(5, 3), (6, 4), (4, 5)] {
            let m = make_zipf(n, 0.0).unwrap();
            for step in 1..(2 * n) {
                let cache = step as f64 * 0.5;
                let best = algorithm4(&m, k, cache).unwrap();
                assert_eq!(analyze_groups(&best.placement).group_count, 1, "N={n} K={k} M={cache}");
            }
        }
    }

    #[test]
    fn rate_matches_checked_functional() {
        let m = make_zipf(7, 1.1).unwrap();
        let problem = PlacementProblem::new(&m, 4, 2.5).unwrap();
        for c in problem.candidates(CandidateFamilies::ALL) {
            let checked = average_rate(&c.placement, problem.coefficients()).unwrap();
            assert_abs_diff_eq!(checked, c.rate, epsilon = 1e-12);
            assert!(c.placement.check(2.5).cache_fully_used(), "{:?}", c.tuple);
        }
    }

    #[test]
    fn pruning_does_not_change_the_optimum() {
        let mut probs = vec![5.0 / 9.0];
        probs.extend(std::iter::repeat_n(1.0 / 30.0, 10));
        probs.extend(std::iter::repeat_n(1.0 / 90.0, 10));
        let m = make_custom(&probs).unwrap();
        for cache in [1.0, 2.0, 3.5, 7.0, 12.0] {
            let plain = PlacementProblem::new(&m, 12, cache).unwrap().algorithm4();
            let opts = SolverOptions { prune_equal_popularity: true, ..Default::default() };
            let pruned = PlacementProblem::with_options(&m, 12, cache, opts).unwrap().algorithm4();
            assert_abs_diff_eq!(plain.rate, pruned.rate, epsilon = 1e-12);
            assert_eq!(plain.placement, pruned.placement);
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let m = make_zipf(10, 1.5).unwrap();
        for cache in [1.0, 3.3, 6.0] {
            let seq = SolverOptions { execution: Execution::Sequential, ..Default::default() };
            let par = SolverOptions { execution: Execution::Parallel, ..Default::default() };
            let a = PlacementProblem::with_options(&m, 6, cache, seq).unwrap().algorithm4();
            let b = PlacementProblem::with_options(&m, 6, cache, par).unwrap().algorithm4();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn solution_json_shape() {
        let m = make_zipf(9, 1.5).unwrap();
        let best = algorithm4(&m, 7, 2.5).unwrap();
        let v: serde_json::Value = serde_json::to_value(&best).unwrap();
        assert_eq!(v["case"], "three_group_case2");
        assert_eq!(v["n_o"], 4);
        assert_eq!(v["n_1"], 6);
        assert_eq!(v["l_o"], 3);
        assert_eq!(v["l_1"], 4);
        assert_eq!(v["placement"]["N"], 9);
    }
}
