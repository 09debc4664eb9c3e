//! Genie-based lower bounds on the average rate of any caching scheme.
//!
//! All schemes evaluate `(1/11) K p' (N_{p'} + N^m - M)` for some popularity
//! threshold `p'`; they differ in how `p'` is picked. Files below the
//! threshold are merged greedily into virtual files whose accumulated
//! popularity exceeds `p'`, and each complete virtual file counts as one
//! more popular file.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::csv_number;
use crate::popularity::PopularityModel;
use crate::solver::PlacementProblem;

const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundScheme {
    Generic,
    TwoGroupPrior,
    ExhaustivePrior,
    Proposed,
}

impl BoundScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundScheme::Generic => "generic",
            BoundScheme::TwoGroupPrior => "two_group_prior",
            BoundScheme::ExhaustivePrior => "exhaustive_prior",
            BoundScheme::Proposed => "proposed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub scheme: BoundScheme,
    pub p_threshold: f64,
    pub n_popular: usize,
    pub n_merged: usize,
    /// never negative; see `clamped`
    pub value: f64,
    /// the algebraic value was negative and has been replaced by 0
    pub clamped: bool,
    /// proposed scheme on a single-group optimum (`n_o = N`)
    pub single_group: bool,
}

impl BoundReport {
    pub const CSV_HEADER: &'static str = "scheme,N,K,M,p_threshold,n_popular,n_merged,value,clamped";

    pub fn csv_row(&self, n_files: usize, k_users: usize, cache: f64) -> String {
        format!(
            "{},{n_files},{k_users},{},{},{},{},{},{}",
            self.scheme.as_str(),
            csv_number(cache),
            csv_number(self.p_threshold),
            self.n_popular,
            self.n_merged,
            csv_number(self.value),
            self.clamped
        )
    }
}

/// Number of complete virtual files formed from files `n_popular+1..=N`:
/// consecutive files are pooled until their total popularity exceeds
/// `p_threshold`; a final pool that never gets there is dropped.
pub fn merge_count(model: &PopularityModel, n_popular: usize, p_threshold: f64) -> usize {
    let mut count = 0;
    let mut acc = 0.0;
    for &p in model.probs().iter().skip(n_popular) {
        acc += p;
        if acc > p_threshold * (1.0 + REL_TOL) {
            count += 1;
            acc = 0.0;
        }
    }
    count
}

/// Rounded closed-form estimate `⌊tail / (2p') + 1/2⌋` of the merge count.
/// Agrees with [`merge_count`] on most inputs but not all.
pub fn merge_count_rounded(model: &PopularityModel, n_popular: usize, p_threshold: f64) -> usize {
    let tail = model.tail_mass(n_popular + 1);
    (tail / (2.0 * p_threshold) + 0.5).floor().max(0.0) as usize
}

/// `(1/11) K p' (N_{p'} + N^m - M)` and whether it had to be clamped at 0.
pub fn bound_value(k_users: usize, p_threshold: f64, n_popular: usize, n_merged: usize, cache: f64) -> (f64, bool) {
    let v = k_users as f64 * p_threshold * ((n_popular + n_merged) as f64 - cache) / 11.0;
    if v < 0.0 {
        (0.0, true)
    } else {
        (v, false)
    }
}

fn report(
    scheme: BoundScheme,
    model: &PopularityModel,
    k_users: usize,
    cache: f64,
    p: f64,
    n_popular: usize,
) -> BoundReport {
    let n_merged = merge_count(model, n_popular, p);
    let (value, clamped) = bound_value(k_users, p, n_popular, n_merged, cache);
    BoundReport { scheme, p_threshold: p, n_popular, n_merged, value, clamped, single_group: false }
}

fn check_threshold(p: f64) -> Result<()> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold p' = {p} must be positive")));
    }
    Ok(())
}

/// Bound for an arbitrary threshold, `N_{p'} = |{n : p_n ≥ p'}|`.
pub fn bound_generic(model: &PopularityModel, k_users: usize, cache: f64, p_threshold: f64) -> Result<BoundReport> {
    check_threshold(p_threshold)?;
    let n_popular = model.count_at_least(p_threshold);
    Ok(report(BoundScheme::Generic, model, k_users, cache, p_threshold, n_popular))
}

/// Threshold `p' = 1 / (K max{3, M})`.
pub fn bound_two_group_prior(model: &PopularityModel, k_users: usize, cache: f64) -> BoundReport {
    let p = 1.0 / (k_users as f64 * cache.max(3.0));
    let n_popular = model.count_at_least(p);
    report(BoundScheme::TwoGroupPrior, model, k_users, cache, p, n_popular)
}

/// Best threshold `p' = p_n` over the files below the two-group threshold;
/// `None` when every file clears that threshold.
pub fn bound_exhaustive_prior(model: &PopularityModel, k_users: usize, cache: f64) -> Option<BoundReport> {
    let p1 = 1.0 / (k_users as f64 * cache.max(3.0));
    let start = model.count_at_least(p1) + 1;
    (start..=model.n_files())
        .map(|n| {
            let p = model.p(n);
            report(BoundScheme::ExhaustivePrior, model, k_users, cache, p, model.count_at_least(p))
        })
        .reduce(|best, r| if r.value > best.value { r } else { best })
}

/// Larger of the two prior-art schemes.
pub fn bound_prior(model: &PopularityModel, k_users: usize, cache: f64) -> BoundReport {
    let two = bound_two_group_prior(model, k_users, cache);
    match bound_exhaustive_prior(model, k_users, cache) {
        Some(ex) if ex.value > two.value => ex,
        _ => two,
    }
}

/// Threshold `p' = p_{n_o}` with `n_o` the size of the optimal placement's
/// first file group.
pub fn bound_proposed(model: &PopularityModel, k_users: usize, cache: f64, n_o: usize) -> Result<BoundReport> {
    if n_o == 0 || n_o > model.n_files() {
        return Err(Error::InvalidParameter(format!("n_o = {n_o} outside 1..={}", model.n_files())));
    }
    let mut r = report(BoundScheme::Proposed, model, k_users, cache, model.p(n_o), n_o);
    r.single_group = n_o == model.n_files();
    Ok(r)
}

/// [`bound_proposed`] with `n_o` taken from the optimal placement.
pub fn bound_proposed_optimal(model: &PopularityModel, k_users: usize, cache: f64) -> Result<BoundReport> {
    let best = PlacementProblem::new(model, k_users, cache)?.algorithm4();
    bound_proposed(model, k_users, cache, best.first_group_size())
}

/// CSV with one row per report.
pub fn reports_to_csv(reports: &[BoundReport], n_files: usize, k_users: usize, cache: f64) -> String {
    let mut s = String::from(BoundReport::CSV_HEADER);
    s.push('\n');
    for r in reports {
        let _ = writeln!(s, "{}", r.csv_row(n_files, k_users, cache));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::popularity::{make_custom, make_zipf};
    use approx::assert_abs_diff_eq;

    #[test]
    fn merge_examples() {
        let z = make_zipf(5, 1.5).unwrap();
        assert_eq!(merge_count(&z, 3, z.p(3)), 1);
        assert_eq!(merge_count(&z, 5, 0.01), 0);
        assert_eq!(merge_count(&z, 4, 1.0 / 18.0), 0);
        assert_eq!(merge_count_rounded(&z, 3, z.p(3)), 1);
        assert_eq!(merge_count_rounded(&z, 4, 1.0 / 18.0), 0);
    }

    #[test]
    fn merge_needs_strict_excess() {
        let m = make_custom(&[0.5, 0.25, 0.125, 0.125]).unwrap();
        // 0.125 + 0.125 only equals 0.25
        assert_eq!(merge_count(&m, 2, 0.25), 0);
        assert_eq!(merge_count(&m, 2, 0.2), 1);
    }

    #[test]
    fn value_and_clamp() {
        let (v, c) = bound_value(6, 1.0 / 18.0, 4, 0, 1.0);
        assert_abs_diff_eq!(v, 1.0 / 11.0, epsilon = 1e-15);
        assert!(!c);
        assert_eq!(bound_value(6, 0.1, 2, 1, 3.0), (0.0, false));
        assert_eq!(bound_value(6, 0.1, 2, 0, 3.0), (0.0, true));
    }

    #[test]
    fn prior_scheme_n5() {
        let z = make_zipf(5, 1.5).unwrap();
        let two = bound_two_group_prior(&z, 6, 1.0);
        assert_eq!((two.n_popular, two.n_merged), (4, 0));
        let ex = bound_exhaustive_prior(&z, 6, 1.0).unwrap();
        assert_eq!((ex.n_popular, ex.n_merged), (5, 0));
        assert_abs_diff_eq!(ex.value, 0.1109, epsilon = 5e-4);
        let best = bound_prior(&z, 6, 1.0);
        assert_eq!(best.scheme, BoundScheme::ExhaustivePrior);
    }

    #[test]
    fn full_cache_is_flagged() {
        let z = make_zipf(4, 1.0).unwrap();
        let r = bound_prior(&z, 3, 4.0);
        assert_eq!(r.value, 0.0);
        assert!(r.clamped || r.n_popular + r.n_merged == 4);
        let g = bound_generic(&z, 3, 4.5, 0.01).unwrap();
        assert!(g.clamped);
        assert!(bound_generic(&z, 3, 1.0, 0.0).is_err());
    }

    #[test]
    fn proposed_single_group_flag() {
        let z = make_zipf(6, 0.0).unwrap();
        let r = bound_proposed_optimal(&z, 3, 2.0).unwrap();
        assert!(r.single_group);
        assert_eq!(r.n_popular, 6);
        assert!(bound_proposed(&z, 3, 2.0, 0).is_err());
    }

    #[test]
    fn csv_layout() {
        let z = make_zipf(5, 1.5).unwrap();
        let csv = reports_to_csv(&[bound_two_group_prior(&z, 6, 1.0)], 5, 6, 1.0);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(BoundReport::CSV_HEADER));
        assert!(lines
            .next()
            .unwrap()
            .starts_with("two_group_prior,5,6,1.000000000,0.05555555556,4,0,0.09090909091,false"));
    }
}
