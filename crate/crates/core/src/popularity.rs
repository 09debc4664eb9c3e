//! File popularity models and the exact distribution of demand order
//! statistics.
//!
//! Files are always held in non-increasing popularity order (file 1 is the
//! most popular). A model built from caller-supplied probabilities keeps the
//! sorting permutation so results can be reported in the caller's order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// Where a popularity vector came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Source {
    Zipf { theta: f64 },
    Step { levels: Vec<StepLevel> },
    Custom,
}

/// `count` consecutive files that share probability `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLevel {
    pub p: f64,
    pub count: usize,
}

/// Sorted file-popularity vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopularityModel {
    probs: Vec<f64>,
    source: Source,
    /// `permutation[i]` is the caller's index of the i-th most popular file.
    permutation: Vec<usize>,
}

impl PopularityModel {
    pub fn n_files(&self) -> usize {
        self.probs.len()
    }

    /// Probabilities in non-increasing order; index 0 is file 1.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability of file `n` (1-based).
    pub fn p(&self, n: usize) -> f64 {
        self.probs[n - 1]
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Reorders per-file values from sorted order back to the caller's
    /// original file order.
    pub fn to_original_order<T: Clone>(&self, sorted: &[T]) -> Vec<T> {
        assert_eq!(sorted.len(), self.probs.len());
        let mut out: Vec<Option<T>> = vec![None; sorted.len()];
        for (i, &orig) in self.permutation.iter().enumerate() {
            out[orig] = Some(sorted[i].clone());
        }
        out.into_iter().map(|v| v.expect("permutation is a bijection")).collect()
    }

    /// Number of files with popularity at least `threshold`.
    pub fn count_at_least(&self, threshold: f64) -> usize {
        let tol = 1e-12 * threshold.abs().max(1e-300);
        self.probs.iter().take_while(|&&p| p >= threshold - tol).count()
    }

    /// Sum of the probabilities of files `from..=N` (1-based).
    pub fn tail_mass(&self, from: usize) -> f64 {
        if from > self.probs.len() {
            return 0.0;
        }
        self.probs[from.max(1) - 1..].iter().sum()
    }

    /// True if every file has the same popularity.
    pub fn is_uniform(&self) -> bool {
        let first = self.probs[0];
        self.probs.iter().all(|&p| (p - first).abs() <= 1e-15)
    }
}

/// Zipf popularity `p_n = n^-theta / sum_i i^-theta`.
pub fn make_zipf(n_files: usize, theta: f64) -> Result<PopularityModel> {
    if n_files == 0 {
        return Err(Error::InvalidParameter("number of files must be at least 1".into()));
    }
    if !theta.is_finite() || theta < 0.0 {
        return Err(Error::InvalidParameter(format!("Zipf parameter must be a finite nonnegative real, got {theta}")));
    }
    let weights: Vec<f64> = (1..=n_files).map(|n| (n as f64).powf(-theta)).collect();
    let total: f64 = weights.iter().sum();
    Ok(PopularityModel {
        probs: weights.iter().map(|w| w / total).collect(),
        source: Source::Zipf { theta },
        permutation: (0..n_files).collect(),
    })
}

/// Arbitrary popularity vector; entries are sorted internally.
pub fn make_custom(probs: &[f64]) -> Result<PopularityModel> {
    let (probs, permutation) = validate_and_sort(probs)?;
    Ok(PopularityModel { probs, source: Source::Custom, permutation })
}

/// Step-function popularity: each level contributes `count` files of
/// probability `p`.
pub fn make_step(levels: &[StepLevel]) -> Result<PopularityModel> {
    if levels.iter().any(|l| l.count == 0) {
        return Err(Error::InvalidDistribution("step level with zero files".into()));
    }
    let expanded: Vec<f64> = levels.iter().flat_map(|l| std::iter::repeat_n(l.p, l.count)).collect();
    let (probs, permutation) = validate_and_sort(&expanded)?;
    Ok(PopularityModel { probs, source: Source::Step { levels: levels.to_vec() }, permutation })
}

fn validate_and_sort(raw: &[f64]) -> Result<(Vec<f64>, Vec<usize>)> {
    if raw.is_empty() {
        return Err(Error::InvalidDistribution("empty popularity vector".into()));
    }
    if let Some(bad) = raw.iter().find(|p| !p.is_finite() || **p <= 0.0) {
        return Err(Error::InvalidDistribution(format!("every probability must be positive and finite, got {bad}")));
    }
    let total: f64 = raw.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("probabilities sum to {total}, not 1")));
    }
    let mut order: Vec<usize> = (0..raw.len()).collect();
    // stable: tied files keep the caller's relative order
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]));
    let probs = order.iter().map(|&i| raw[i] / total).collect();
    Ok((probs, order))
}

/// Parses a probability written either as a decimal (`0.25`) or as a
/// fraction (`5/9`).
pub fn parse_prob(text: &str) -> Result<f64> {
    let text = text.trim();
    let parse =
        |s: &str| s.trim().parse::<f64>().map_err(|_| Error::InvalidParameter(format!("cannot parse number '{s}'")));
    match text.split_once('/') {
        Some((num, den)) => {
            let den = parse(den)?;
            if den == 0.0 {
                return Err(Error::InvalidParameter(format!("zero denominator in '{text}'")));
            }
            Ok(parse(num)? / den)
        }
        None => parse(text),
    }
}

/// A probability in a config file: a JSON number or a fraction string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbValue {
    Number(f64),
    Text(String),
}

impl ProbValue {
    pub fn value(&self) -> Result<f64> {
        match self {
            ProbValue::Number(x) => Ok(*x),
            ProbValue::Text(s) => parse_prob(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLevelSpec {
    pub p: ProbValue,
    pub count: usize,
}

/// Popularity section of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PopularitySpec {
    Zipf { theta: f64 },
    Step { levels: Vec<StepLevelSpec> },
    Custom { probs: Vec<ProbValue> },
}

impl PopularitySpec {
    /// Builds the model. `n_files` is required for Zipf and, when given,
    /// must agree with the file count implied by step/custom specs.
    pub fn build(&self, n_files: Option<usize>) -> Result<PopularityModel> {
        let model = match self {
            PopularitySpec::Zipf { theta } => {
                let n = n_files
                    .ok_or_else(|| Error::InvalidParameter("Zipf popularity needs the number of files".into()))?;
                return make_zipf(n, *theta);
            }
            PopularitySpec::Step { levels } => {
                let levels = levels
                    .iter()
                    .map(|l| Ok(StepLevel { p: l.p.value()?, count: l.count }))
                    .collect::<Result<Vec<_>>>()?;
                make_step(&levels)?
            }
            PopularitySpec::Custom { probs } => {
                let probs = probs.iter().map(ProbValue::value).collect::<Result<Vec<_>>>()?;
                make_custom(&probs)?
            }
        };
        if let Some(n) = n_files {
            if n != model.n_files() {
                return Err(Error::DimensionMismatch(format!(
                    "popularity lists {} files but N = {n}",
                    model.n_files()
                )));
            }
        }
        Ok(model)
    }
}

/// `Pr[Y_m = n]` for the m-th smallest file index in a K-user demand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderStatTable {
    k_users: usize,
    n_files: usize,
    /// row-major, row `m-1` holds `Pr[Y_m = 1..=N]`
    probs: Vec<f64>,
}

impl OrderStatTable {
    pub fn k_users(&self) -> usize {
        self.k_users
    }

    pub fn n_files(&self) -> usize {
        self.n_files
    }

    /// `Pr[Y_m = n]`, both indices 1-based.
    pub fn prob(&self, m: usize, n: usize) -> f64 {
        debug_assert!((1..=self.k_users).contains(&m) && (1..=self.n_files).contains(&n));
        self.probs[(m - 1) * self.n_files + (n - 1)]
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.probs[(m - 1) * self.n_files..m * self.n_files]
    }
}

/// Exact order-statistic distribution for i.i.d. demands.
///
/// Uses `Pr[Y_m <= n] = Pr[Bin(K, P_n) >= m]` with `P_n = p_1 + ... + p_n`,
/// then differences over `n`.
pub fn order_stats(model: &PopularityModel, k_users: usize) -> Result<OrderStatTable> {
    if k_users == 0 {
        return Err(Error::InvalidParameter("number of users must be at least 1".into()));
    }
    let n_files = model.n_files();
    let ln_binom = ln_binomial_row(k_users);

    // cdf[m-1] over n = 0..=N, starting at 0
    let mut cdf_prev = vec![0.0_f64; k_users];
    let mut probs = vec![0.0_f64; k_users * n_files];
    let mut cumulative = 0.0;
    for n in 1..=n_files {
        cumulative += model.p(n);
        let p_le = if n == n_files { 1.0 } else { cumulative.min(1.0) };
        let tails = binomial_upper_tails(k_users, p_le, &ln_binom);
        for m in 1..=k_users {
            let cdf = tails[m];
            probs[(m - 1) * n_files + (n - 1)] = (cdf - cdf_prev[m - 1]).max(0.0);
            cdf_prev[m - 1] = cdf;
        }
    }
    Ok(OrderStatTable { k_users, n_files, probs })
}

fn ln_binomial_row(k: usize) -> Vec<f64> {
    let mut row = vec![0.0; k + 1];
    for j in 1..=k {
        row[j] = row[j - 1] + ((k - j + 1) as f64).ln() - (j as f64).ln();
    }
    row
}

/// `tails[m] = Pr[Bin(k, p) >= m]` for m in 0..=k.
fn binomial_upper_tails(k: usize, p: f64, ln_binom: &[f64]) -> Vec<f64> {
    let pmf: Vec<f64> = if p <= 0.0 {
        (0..=k).map(|j| if j == 0 { 1.0 } else { 0.0 }).collect()
    } else if p >= 1.0 {
        (0..=k).map(|j| if j == k { 1.0 } else { 0.0 }).collect()
    } else {
        let (lp, lq) = (p.ln(), (-p).ln_1p());
        (0..=k).map(|j| (ln_binom[j] + j as f64 * lp + (k - j) as f64 * lq).exp()).collect()
    };
    let mut tails = vec![0.0; k + 2];
    for j in (0..=k).rev() {
        tails[j] = tails[j + 1] + pmf[j];
    }
    tails.truncate(k + 1);
    tails
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zipf_five_files() {
        let m = make_zipf(5, 1.5).unwrap();
        let expected = [0.5681, 0.2008, 0.1093, 0.0710, 0.0508];
        for (p, e) in m.probs().iter().zip(expected) {
            assert_abs_diff_eq!(*p, e, epsilon = 5e-4);
        }
        assert_abs_diff_eq!(m.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zipf_zero_is_uniform() {
        let m = make_zipf(4, 0.0).unwrap();
        assert!(m.probs().iter().all(|&p| p == 0.25));
        assert!(m.is_uniform());
    }

    #[test]
    fn zipf_nine_files_full_precision() {
        let m = make_zipf(9, 1.5).unwrap();
        // direct evaluation of the normalized power law
        assert_abs_diff_eq!(m.p(1), 0.509_239_198_908_344_2, epsilon = 1e-12);
        assert_abs_diff_eq!(m.p(9), 0.018_860_711_070_679_4, epsilon = 1e-12);
    }

    #[test]
    fn zipf_rejects_bad_theta() {
        assert!(matches!(make_zipf(3, f64::NAN), Err(Error::InvalidParameter(_))));
        assert!(matches!(make_zipf(3, f64::INFINITY), Err(Error::InvalidParameter(_))));
        assert!(matches!(make_zipf(0, 1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn custom_step_distribution() {
        let mut probs = vec![5.0 / 9.0];
        probs.extend(std::iter::repeat_n(1.0 / 30.0, 10));
        probs.extend(std::iter::repeat_n(1.0 / 90.0, 10));
        let m = make_custom(&probs).unwrap();
        assert_eq!(m.n_files(), 21);
        assert_abs_diff_eq!(m.p(1), 5.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn custom_sorts_and_records_permutation() {
        let m = make_custom(&[0.3, 0.7]).unwrap();
        assert_eq!(m.probs(), &[0.7, 0.3]);
        assert_eq!(m.permutation(), &[1, 0]);
        assert_eq!(m.to_original_order(&["a", "b"]), vec!["b", "a"]);
        assert!(make_custom(&[0.7, 0.3]).is_ok());
    }

    #[test]
    fn custom_rejects_invalid() {
        assert!(matches!(make_custom(&[1.2, -0.2]), Err(Error::InvalidDistribution(_))));
        assert!(matches!(make_custom(&[0.5, 0.4]), Err(Error::InvalidDistribution(_))));
        assert!(matches!(make_custom(&[]), Err(Error::InvalidDistribution(_))));
    }

    #[test]
    fn ties_keep_caller_order() {
        let m = make_custom(&[0.2, 0.4, 0.2, 0.2]).unwrap();
        assert_eq!(m.permutation(), &[1, 0, 2, 3]);
    }

    #[test]
    fn step_spec_with_fractions() {
        let json =
            r#"{"type":"step","levels":[{"p":"5/9","count":1},{"p":"1/30","count":10},{"p":"1/90","count":10}]}"#;
        let spec: PopularitySpec = serde_json::from_str(json).unwrap();
        let m = spec.build(Some(21)).unwrap();
        assert_eq!(m.n_files(), 21);
        assert!(spec.build(Some(20)).is_err());
        let zipf: PopularitySpec = serde_json::from_str(r#"{"type":"zipf","theta":1.5}"#).unwrap();
        assert!(zipf.build(None).is_err());
        assert_eq!(zipf.build(Some(9)).unwrap().n_files(), 9);
    }

    #[test]
    fn parse_prob_forms() {
        assert_abs_diff_eq!(parse_prob("5/9").unwrap(), 5.0 / 9.0);
        assert_abs_diff_eq!(parse_prob(" 0.25 ").unwrap(), 0.25);
        assert!(parse_prob("1/0").is_err());
        assert!(parse_prob("x").is_err());
    }

    #[test]
    fn order_stats_single_file() {
        let m = make_custom(&[1.0]).unwrap();
        let t = order_stats(&m, 5).unwrap();
        for k in 1..=5 {
            assert_eq!(t.prob(k, 1), 1.0);
        }
    }

    #[test]
    fn order_stats_one_user_is_popularity() {
        let m = make_zipf(6, 0.8).unwrap();
        let t = order_stats(&m, 1).unwrap();
        for n in 1..=6 {
            assert_abs_diff_eq!(t.prob(1, n), m.p(n), epsilon = 1e-14);
        }
    }

    #[test]
    fn order_stats_two_users_two_files() {
        // enumerated: (1,1) .49, (1,2) .21, (2,1) .21, (2,2) .09
        let m = make_custom(&[0.7, 0.3]).unwrap();
        let t = order_stats(&m, 2).unwrap();
        assert_abs_diff_eq!(t.prob(1, 1), 0.91, epsilon = 1e-14);
        assert_abs_diff_eq!(t.prob(1, 2), 0.09, epsilon = 1e-14);
        assert_abs_diff_eq!(t.prob(2, 1), 0.49, epsilon = 1e-14);
        assert_abs_diff_eq!(t.prob(2, 2), 0.51, epsilon = 1e-14);
    }

    #[test]
    fn order_stats_zero_users() {
        let m = make_zipf(3, 1.0).unwrap();
        assert!(order_stats(&m, 0).is_err());
    }
}
