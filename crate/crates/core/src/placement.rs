//! Placement matrices, the linear rate functional, file-group analysis and
//! subpacketization accounting.
//!
//! Entry `a[n][l]` is the size (as a fraction of the file size) of each of
//! the `C(K, l)` subfiles of file `n` that are cached by exactly the users
//! of one `l`-subset. Column 0 is the part of the file kept only at the
//! server.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::csv_number;
use crate::popularity::{OrderStatTable, PopularityModel};

/// Largest user count for which binomials stay exactly representable.
pub const MAX_USERS: usize = 62;

/// Tolerance for treating a placement entry as nonzero.
pub const ZERO_TOL: f64 = 1e-9;
/// Tolerance for the partition, cache and popularity-first invariants.
pub const INVARIANT_TOL: f64 = 1e-9;
/// Tolerance for nonnegativity.
pub const NONNEG_TOL: f64 = 1e-12;

/// Binomial coefficient with `C(n, r) = 0` outside `0 <= r <= n`.
pub fn binom_ext(n: i64, r: i64) -> Result<u64> {
    if n < 0 {
        return Err(Error::InvalidParameter(format!("binomial with negative n = {n}")));
    }
    if r < 0 || r > n {
        return Ok(0);
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return Err(Error::Overflow { n, r });
        }
    }
    Ok(acc as u64)
}

pub(crate) fn binom_f64(n: usize, r: usize) -> f64 {
    binom_ext(n as i64, r as i64).expect("binomial within MAX_USERS") as f64
}

pub(crate) fn check_users(k_users: usize) -> Result<()> {
    if k_users == 0 || k_users > MAX_USERS {
        return Err(Error::InvalidParameter(format!("number of users must be in 1..={MAX_USERS}, got {k_users}")));
    }
    Ok(())
}

/// N x (K+1) matrix of subfile-size fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementMatrix {
    n_files: usize,
    k_users: usize,
    a: Vec<f64>,
}

impl PlacementMatrix {
    /// All-zero matrix (not a valid placement until filled in).
    pub fn zeros(n_files: usize, k_users: usize) -> Self {
        PlacementMatrix { n_files, k_users, a: vec![0.0; n_files * (k_users + 1)] }
    }

    /// Every file kept at the server only.
    pub fn uncached(n_files: usize, k_users: usize) -> Self {
        let mut m = Self::zeros(n_files, k_users);
        for n in 1..=n_files {
            m.set(n, 0, 1.0);
        }
        m
    }

    pub fn from_rows(k_users: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::DimensionMismatch("placement has no rows".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != k_users + 1) {
            return Err(Error::DimensionMismatch(format!(
                "placement row has {} entries, expected K+1 = {}",
                bad.len(),
                k_users + 1
            )));
        }
        Ok(PlacementMatrix { n_files: rows.len(), k_users, a: rows.into_iter().flatten().collect() })
    }

    pub fn n_files(&self) -> usize {
        self.n_files
    }

    pub fn k_users(&self) -> usize {
        self.k_users
    }

    /// `a_{n,l}` with `n` 1-based and `l` in `0..=K`.
    pub fn get(&self, n: usize, l: usize) -> f64 {
        self.a[(n - 1) * (self.k_users + 1) + l]
    }

    pub fn set(&mut self, n: usize, l: usize, value: f64) {
        self.a[(n - 1) * (self.k_users + 1) + l] = value;
    }

    /// Placement vector of file `n` (1-based).
    pub fn row(&self, n: usize) -> &[f64] {
        let w = self.k_users + 1;
        &self.a[(n - 1) * w..n * w]
    }

    pub fn set_row(&mut self, n: usize, row: &[f64]) {
        let w = self.k_users + 1;
        self.a[(n - 1) * w..n * w].copy_from_slice(row);
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.a.chunks(self.k_users + 1)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }

    /// Largest `|sum_l C(K,l) a_{n,l} - 1|` over files.
    pub fn partition_residual(&self) -> f64 {
        let b: Vec<f64> = (0..=self.k_users).map(|l| binom_f64(self.k_users, l)).collect();
        self.rows().map(|row| (row.iter().zip(&b).map(|(a, b)| a * b).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Per-user cache occupancy `sum_n sum_l C(K-1,l-1) a_{n,l}`, in files.
    pub fn cache_usage(&self) -> f64 {
        let c = cache_weights(self.k_users);
        self.rows().map(|row| row.iter().zip(&c).map(|(a, c)| a * c).sum::<f64>()).sum()
    }

    pub fn min_entry(&self) -> f64 {
        self.a.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest `a_{n+1,l} - a_{n,l}` over `l >= 1` (positive means the
    /// popularity-first ordering is broken).
    pub fn popularity_first_violation(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for n in 1..self.n_files {
            for l in 1..=self.k_users {
                worst = worst.max(self.get(n + 1, l) - self.get(n, l));
            }
        }
        if worst == f64::NEG_INFINITY {
            0.0
        } else {
            worst
        }
    }

    pub fn is_popularity_first(&self) -> bool {
        self.popularity_first_violation() <= INVARIANT_TOL
    }

    /// Number of entries above [`ZERO_TOL`] in row `n`.
    pub fn nonzeros_in_row(&self, n: usize) -> usize {
        self.row(n).iter().filter(|&&a| a > ZERO_TOL).count()
    }

    /// Checks every placement invariant against cache size `cache`.
    pub fn check(&self, cache: f64) -> InvariantReport {
        let usage = self.cache_usage();
        InvariantReport {
            partition_residual: self.partition_residual(),
            cache_usage: usage,
            cache_size: cache,
            min_entry: self.min_entry(),
            popularity_first_violation: self.popularity_first_violation(),
        }
    }

    /// CSV with one line per file and columns `l = 0..=K`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("file");
        for l in 0..=self.k_users {
            out.push_str(&format!(",l{l}"));
        }
        out.push('\n');
        for (i, row) in self.rows().enumerate() {
            out.push_str(&(i + 1).to_string());
            for v in row {
                out.push(',');
                out.push_str(&csv_number(*v));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct PlacementJson {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    a: Vec<Vec<f64>>,
}

impl Serialize for PlacementMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PlacementJson { n: self.n_files, k: self.k_users, a: self.rows().map(<[f64]>::to_vec).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PlacementMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = PlacementJson::deserialize(d)?;
        if raw.a.len() != raw.n {
            return Err(serde::de::Error::custom(format!("N = {} but {} rows given", raw.n, raw.a.len())));
        }
        PlacementMatrix::from_rows(raw.k, raw.a).map_err(serde::de::Error::custom)
    }
}

/// Result of [`PlacementMatrix::check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    pub partition_residual: f64,
    pub cache_usage: f64,
    pub cache_size: f64,
    pub min_entry: f64,
    pub popularity_first_violation: f64,
}

impl InvariantReport {
    pub fn partition_ok(&self) -> bool {
        self.partition_residual <= INVARIANT_TOL
    }

    pub fn cache_within_budget(&self) -> bool {
        self.cache_usage <= self.cache_size + INVARIANT_TOL
    }

    pub fn cache_fully_used(&self) -> bool {
        (self.cache_usage - self.cache_size).abs() <= INVARIANT_TOL
    }

    pub fn nonnegative(&self) -> bool {
        self.min_entry >= -NONNEG_TOL
    }

    pub fn popularity_first(&self) -> bool {
        self.popularity_first_violation <= INVARIANT_TOL
    }

    /// Feasible for the placement problem (cache may be under-used).
    pub fn is_feasible(&self) -> bool {
        self.partition_ok() && self.cache_within_budget() && self.nonnegative() && self.popularity_first()
    }

    /// Human-readable list of broken invariants.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !self.partition_ok() {
            v.push(format!("file partition off by {:.3e}", self.partition_residual));
        }
        if !self.cache_within_budget() {
            v.push(format!("cache usage {:.10} exceeds M = {}", self.cache_usage, self.cache_size));
        }
        if !self.nonnegative() {
            v.push(format!("negative entry {:.3e}", self.min_entry));
        }
        if !self.popularity_first() {
            v.push(format!("popularity-first violated by {:.3e}", self.popularity_first_violation));
        }
        v
    }
}

/// `c_l = C(K-1, l-1)` with `c_0 = 0`: the number of `l`-subsets holding a
/// given user.
pub(crate) fn cache_weights(k_users: usize) -> Vec<f64> {
    (0..=k_users).map(|l| binom_ext(k_users as i64 - 1, l as i64 - 1).expect("within MAX_USERS") as f64).collect()
}

/// Linear objective and constraint vectors of the placement LP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCoefficients {
    n_files: usize,
    k_users: usize,
    /// row-major N x (K+1)
    g: Vec<f64>,
    /// `b_l = C(K, l)`
    pub b: Vec<f64>,
    /// `c_l = C(K-1, l-1)`, `c_0 = 0`
    pub c: Vec<f64>,
}

impl RateCoefficients {
    pub fn n_files(&self) -> usize {
        self.n_files
    }

    pub fn k_users(&self) -> usize {
        self.k_users
    }

    /// `g_{n,l}`, `n` 1-based.
    pub fn g(&self, n: usize, l: usize) -> f64 {
        self.g[(n - 1) * (self.k_users + 1) + l]
    }

    pub fn g_row(&self, n: usize) -> &[f64] {
        let w = self.k_users + 1;
        &self.g[(n - 1) * w..n * w]
    }
}

/// Builds `g`, `b` and `c` from the order-statistic table.
pub fn rate_coefficients(model: &PopularityModel, ystats: &OrderStatTable) -> Result<RateCoefficients> {
    let (n_files, k_users) = (ystats.n_files(), ystats.k_users());
    if model.n_files() != n_files {
        return Err(Error::DimensionMismatch(format!(
            "model has {} files, order statistics cover {n_files}",
            model.n_files()
        )));
    }
    check_users(k_users)?;
    let w = k_users + 1;
    let mut g = vec![0.0; n_files * w];
    for n in 1..=n_files {
        for m in 1..=k_users {
            let pr = ystats.prob(m, n);
            g[(n - 1) * w] += pr;
            for l in 1..=k_users.saturating_sub(m) {
                g[(n - 1) * w + l] += binom_f64(k_users - m, l) * pr;
            }
        }
    }
    Ok(RateCoefficients {
        n_files,
        k_users,
        g,
        b: (0..=k_users).map(|l| binom_f64(k_users, l)).collect(),
        c: cache_weights(k_users),
    })
}

fn check_dims(placement: &PlacementMatrix, coeffs: &RateCoefficients) -> Result<()> {
    if placement.n_files() != coeffs.n_files() || placement.k_users() != coeffs.k_users() {
        return Err(Error::DimensionMismatch(format!(
            "placement is {}x{}, coefficients are {}x{}",
            placement.n_files(),
            placement.k_users() + 1,
            coeffs.n_files(),
            coeffs.k_users() + 1
        )));
    }
    Ok(())
}

/// Expected delivery load `sum_n g_n^T a_n`, in files.
///
/// The closed form is only the true expectation for popularity-first
/// placements, so other inputs are rejected.
pub fn average_rate(placement: &PlacementMatrix, coeffs: &RateCoefficients) -> Result<f64> {
    check_dims(placement, coeffs)?;
    let violation = placement.popularity_first_violation();
    if violation > INVARIANT_TOL {
        return Err(Error::Precondition(format!("placement is not popularity-first (violation {violation:.3e})")));
    }
    Ok(linear_rate(placement, coeffs))
}

pub(crate) fn linear_rate(placement: &PlacementMatrix, coeffs: &RateCoefficients) -> f64 {
    placement.as_slice().iter().zip(&coeffs.g).map(|(a, g)| a * g).sum()
}

/// Grouping of files by identical placement vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileGroupReport {
    pub group_count: usize,
    /// Last file index (1-based) before each change of placement vector.
    pub boundaries: Vec<usize>,
    /// Group id (1-based, in order of first appearance) of every file.
    pub group_labels: Vec<usize>,
}

fn rows_equal(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= ZERO_TOL)
}

pub fn analyze_groups(placement: &PlacementMatrix) -> FileGroupReport {
    let mut representatives: Vec<usize> = Vec::new();
    let mut labels = Vec::with_capacity(placement.n_files());
    for n in 1..=placement.n_files() {
        let found = representatives.iter().position(|&r| rows_equal(placement.row(r), placement.row(n)));
        let label = match found {
            Some(i) => i + 1,
            None => {
                representatives.push(n);
                representatives.len()
            }
        };
        labels.push(label);
    }
    let boundaries = labels.windows(2).enumerate().filter(|(_, w)| w[0] != w[1]).map(|(i, _)| i + 1).collect();
    FileGroupReport { group_count: representatives.len(), boundaries, group_labels: labels }
}

/// Number of nonempty subfiles per file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubpacketizationReport {
    pub per_file: Vec<u64>,
    pub max_level: u64,
    pub avg_level: f64,
}

pub fn subpacketization(placement: &PlacementMatrix) -> SubpacketizationReport {
    let k = placement.k_users();
    let per_file: Vec<u64> = placement
        .rows()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, &a)| a > ZERO_TOL)
                .map(|(l, _)| binom_ext(k as i64, l as i64).expect("within MAX_USERS"))
                .sum()
        })
        .collect();
    let max_level = per_file.iter().copied().max().unwrap_or(0);
    let avg_level = per_file.iter().sum::<u64>() as f64 / per_file.len().max(1) as f64;
    SubpacketizationReport { per_file, max_level, avg_level }
}

/// Worst-case subpacketization of an optimal placement and its Stirling
/// upper estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubpacketizationBound {
    pub exact: u64,
    pub stirling: f64,
}

pub fn worst_case_subpacketization_bound(k_users: usize) -> Result<SubpacketizationBound> {
    if k_users == 0 {
        return Err(Error::InvalidParameter("number of users must be at least 1".into()));
    }
    let k = k_users as i64;
    let half = k / 2;
    let exact = binom_ext(k, half)?.checked_add(binom_ext(k, half + 1)?).ok_or(Error::Overflow { n: k, r: half })?;
    let kf = k_users as f64;
    let stirling = (8.0 / std::f64::consts::PI).sqrt() * (1.0 / (12.0 * kf)).exp() * 2f64.powf(kf) / kf.sqrt();
    Ok(SubpacketizationBound { exact, stirling })
}
