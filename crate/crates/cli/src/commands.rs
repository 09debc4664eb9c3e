//! The four subcommands. Each returns its output as text so the caller
//! decides where it goes; nothing here touches stdout.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use ccs_placement::bounds::{bound_exhaustive_prior, bound_proposed_optimal, bound_two_group_prior};
use ccs_placement::delivery::{
    decode, demand_rate, min_file_size, monte_carlo_rate, realize, sample_demand, serve, trial_rng, FileLibrary,
    MonteCarloResult,
};
use ccs_placement::format::csv_number;
use ccs_placement::lp::{certify_problem, CertifyReport, MAX_VARIABLES};
use ccs_placement::placement::{
    analyze_groups, average_rate, subpacketization, worst_case_subpacketization_bound, InvariantReport,
};
use ccs_placement::popularity::{make_custom, order_stats, PopularityModel};
use ccs_placement::{CandidateSolution, Execution, PlacementMatrix, PlacementProblem};
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Format, RawConfig, DEFAULT_SEED, DEFAULT_TRIALS};
use crate::{CliError, CommandOutput};

/// Decode tests are skipped above these sizes.
pub const DECODE_MAX_USERS: usize = 12;
pub const DECODE_MAX_FILE_BITS: u64 = 1 << 20;
/// Monte Carlo agreement band, in standard errors.
pub const MC_SIGMAS: f64 = 4.0;
/// Allowed gap between a supplied placement's rate and the optimum.
pub const OPTIMALITY_TOL: f64 = 1e-8;
/// Size of the default verification batch.
pub const BATCH_SIZE: usize = 20;

fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn permutation_note(model: &PopularityModel) -> Option<String> {
    let perm = model.permutation();
    let identity = perm.iter().enumerate().all(|(i, &p)| p == i);
    (!identity).then(|| {
        let list: Vec<String> = perm.iter().map(|p| (p + 1).to_string()).collect();
        format!("note: files renumbered by decreasing popularity; row n is input file {}", list.join(","))
    })
}

fn structure_line(m: f64, s: &CandidateSolution) -> String {
    let groups = analyze_groups(&s.placement);
    format!(
        "M={}: {} group(s), case {}, boundaries {:?}, rate {}",
        m,
        groups.group_count,
        serde_json::to_value(s.case_id).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        groups.boundaries,
        csv_number(s.rate)
    )
}

#[derive(Serialize)]
struct SolveEntry<'a> {
    #[serde(rename = "M")]
    cache: f64,
    #[serde(flatten)]
    solution: &'a CandidateSolution,
}

fn solve_all(cfg: &ExperimentConfig) -> Result<Vec<CandidateSolution>> {
    let results = Execution::default()
        .map(&cfg.cache_sizes, |&m| PlacementProblem::new(&cfg.model, cfg.k_users, m).map(|p| p.algorithm4()));
    Ok(results.into_iter().collect::<ccs_placement::Result<Vec<_>>>()?)
}

fn solutions_json(cfg: &ExperimentConfig, sols: &[CandidateSolution]) -> Result<String> {
    if let [only] = sols {
        return to_json(only);
    }
    let entries: Vec<SolveEntry> =
        cfg.cache_sizes.iter().zip(sols).map(|(&cache, solution)| SolveEntry { cache, solution }).collect();
    to_json(&entries)
}

fn solutions_csv(cfg: &ExperimentConfig, sols: &[CandidateSolution]) -> String {
    if let [only] = sols {
        return only.placement.to_csv();
    }
    // several cache sizes: one block, M as the leading column
    let mut out = String::new();
    for (i, (&m, s)) in cfg.cache_sizes.iter().zip(sols).enumerate() {
        for (j, line) in s.placement.to_csv().lines().enumerate() {
            if j == 0 {
                if i == 0 {
                    let _ = writeln!(out, "M,{line}");
                }
                continue;
            }
            let _ = writeln!(out, "{},{line}", csv_number(m));
        }
    }
    out
}

/// Optimal placement per cache size: solution JSON and placement CSV.
pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let sols = solve_all(cfg)?;
    let json = solutions_json(cfg, &sols)?;
    let csv = solutions_csv(cfg, &sols);
    let format = cfg.format.unwrap_or(Format::Json);
    let (data, other, ext) = match format {
        Format::Json => (json, csv, "csv"),
        Format::Csv => (csv, json, "json"),
    };
    let extra_files = match &cfg.out {
        Some(p) if p.extension().and_then(|e| e.to_str()) != Some(ext) => vec![(p.with_extension(ext), other)],
        _ => Vec::new(),
    };
    let mut summary: Vec<String> = cfg.cache_sizes.iter().zip(&sols).map(|(&m, s)| structure_line(m, s)).collect();
    summary.extend(permutation_note(&cfg.model));
    Ok(CommandOutput { data, extra_files, summary, failed: false })
}

/// One sweep row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "M")]
    pub cache: f64,
    pub optimal_rate: f64,
    pub one_group_rate: f64,
    pub alg1_rate: f64,
    pub lb_two_group_prior: f64,
    pub lb_exhaustive_prior: Option<f64>,
    pub lb_proposed: f64,
    pub groups: usize,
    pub case: String,
}

const SWEEP_HEADER: &str =
    "M,optimal_rate,one_group_rate,alg1_rate,lb_two_group_prior,lb_exhaustive_prior,lb_proposed,groups,case";

fn sweep_row(model: &PopularityModel, k: usize, m: f64) -> ccs_placement::Result<SweepRow> {
    let problem = PlacementProblem::new(model, k, m)?;
    let best = problem.algorithm4();
    Ok(SweepRow {
        cache: m,
        optimal_rate: best.rate,
        one_group_rate: problem.one_group().rate,
        alg1_rate: problem.algorithm1()?.rate,
        lb_two_group_prior: bound_two_group_prior(model, k, m).value,
        lb_exhaustive_prior: bound_exhaustive_prior(model, k, m).map(|b| b.value),
        lb_proposed: bound_proposed_optimal(model, k, m)?.value,
        groups: best.case_id.group_count(),
        case: serde_json::to_value(best.case_id).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
    })
}

pub fn sweep_rows(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let rows = Execution::default().map(&cfg.cache_sizes, |&m| sweep_row(&cfg.model, cfg.k_users, m));
    Ok(rows.into_iter().collect::<ccs_placement::Result<Vec<_>>>()?)
}

/// Achievable rates and lower bounds over the cache-size grid.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let rows = sweep_rows(cfg)?;
    let data = match cfg.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let mut s = format!("{SWEEP_HEADER}\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{}",
                    csv_number(r.cache),
                    csv_number(r.optimal_rate),
                    csv_number(r.one_group_rate),
                    csv_number(r.alg1_rate),
                    csv_number(r.lb_two_group_prior),
                    r.lb_exhaustive_prior.map(csv_number).unwrap_or_default(),
                    csv_number(r.lb_proposed),
                    r.groups,
                    r.case
                );
            }
            s
        }
    };
    let mut summary = vec![format!("{} sweep point(s), N={}, K={}", rows.len(), cfg.n_files, cfg.k_users)];
    summary.extend(permutation_note(&cfg.model));
    Ok(CommandOutput { data, summary, ..Default::default() })
}

/// One subpacketization row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubpktRow {
    #[serde(rename = "M")]
    pub cache: f64,
    #[serde(rename = "L_max")]
    pub max_level: u64,
    #[serde(rename = "L_avg")]
    pub avg_level: f64,
    pub worst_case_bound: u64,
    pub stirling: f64,
}

/// Subpacketization of the optimal placement over the cache-size grid.
pub fn cmd_subpkt(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let bound = worst_case_subpacketization_bound(cfg.k_users)?;
    let rows = solve_all(cfg)?
        .iter()
        .zip(&cfg.cache_sizes)
        .map(|(s, &m)| {
            let r = subpacketization(&s.placement);
            SubpktRow {
                cache: m,
                max_level: r.max_level,
                avg_level: r.avg_level,
                worst_case_bound: bound.exact,
                stirling: bound.stirling,
            }
        })
        .collect::<Vec<_>>();
    let data = match cfg.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let mut s = String::from("M,L_max,L_avg,worst_case_bound,stirling\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    csv_number(r.cache),
                    r.max_level,
                    csv_number(r.avg_level),
                    r.worst_case_bound,
                    csv_number(r.stirling)
                );
            }
            s
        }
    };
    let peak = rows.iter().map(|r| r.max_level).max().unwrap_or(0);
    let summary = vec![format!("largest L_max {peak}; worst-case bound {}", bound.exact)];
    Ok(CommandOutput { data, summary, ..Default::default() })
}

/// Monte Carlo cross-check of the analytic rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCheck {
    pub analytic_rate: f64,
    #[serde(flatten)]
    pub result: MonteCarloResult,
    pub ok: bool,
}

/// Bit-exact delivery of a few demands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeCheck {
    pub file_size_bits: Option<u64>,
    pub demands: Vec<Vec<usize>>,
    pub users_decoded: usize,
    pub skipped: Option<String>,
    pub error: Option<String>,
    pub ok: bool,
}

/// Verification of one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRecord {
    #[serde(rename = "N")]
    pub n_files: usize,
    #[serde(rename = "K")]
    pub k_users: usize,
    #[serde(rename = "M")]
    pub cache: f64,
    pub probs: Vec<f64>,
    pub certify: CertifyReport,
    pub monte_carlo: McCheck,
    pub decode: DecodeCheck,
    pub passed: bool,
}

fn monte_carlo_check(sol: &CandidateSolution, model: &PopularityModel, trials: usize, seed: u64) -> Result<McCheck> {
    let result = monte_carlo_rate(&sol.placement, model, trials, seed, Execution::default())?;
    // a demand-independent rate has zero spread
    let band = (MC_SIGMAS * result.stderr).max(1e-9);
    Ok(McCheck { analytic_rate: sol.rate, ok: (result.mean - sol.rate).abs() <= band, result })
}

fn decode_check(placement: &PlacementMatrix, model: &PopularityModel, seed: u64, stream: u64) -> DecodeCheck {
    let (n, k) = (placement.n_files(), placement.k_users());
    let mut check = DecodeCheck {
        file_size_bits: None,
        demands: Vec::new(),
        users_decoded: 0,
        skipped: None,
        error: None,
        ok: true,
    };
    if k > DECODE_MAX_USERS {
        check.skipped = Some(format!("K > {DECODE_MAX_USERS}"));
        return check;
    }
    let f = match min_file_size(placement) {
        Ok(f) if f <= DECODE_MAX_FILE_BITS => f,
        Ok(f) => {
            check.skipped = Some(format!("file size {f} bits exceeds {DECODE_MAX_FILE_BITS}"));
            return check;
        }
        Err(e) => {
            check.skipped = Some(e.to_string());
            return check;
        }
    };
    check.file_size_bits = Some(f);
    // round-robin demand plus one drawn from the popularity
    let spread: Vec<usize> = (0..k).map(|u| u % n + 1).collect();
    let sampled = match WeightedIndex::new(model.probs()) {
        Ok(w) => sample_demand(&w, k, &mut trial_rng(seed, stream)),
        Err(_) => spread.clone(),
    };
    check.demands = vec![spread, sampled];
    let run = |check: &mut DecodeCheck| -> ccs_placement::Result<()> {
        let library = FileLibrary::random(n, f, seed)?;
        let real = realize(placement, &library)?;
        for demand in check.demands.clone() {
            let transcript = serve(&real, &demand)?;
            let expected = demand_rate(placement, &demand);
            if (transcript.rate(f) - expected).abs() > 1e-9 {
                return Err(ccs_placement::Error::Corruption {
                    user: 0,
                    reason: format!("transcript rate {} differs from {expected}", transcript.rate(f)),
                });
            }
            for user in 1..=k {
                decode(&real, &transcript, user)?;
                check.users_decoded += 1;
            }
        }
        Ok(())
    };
    if let Err(e) = run(&mut check) {
        check.error = Some(e.to_string());
        check.ok = false;
    }
    check
}

fn check_guard(n: usize, k: usize) -> Result<()> {
    let vars = n * (k + 1);
    if vars > MAX_VARIABLES {
        return Err(CliError::Guard(format!("N(K+1) = {vars} LP variables, limit {MAX_VARIABLES}")).into());
    }
    Ok(())
}

fn verify_instance(model: &PopularityModel, k: usize, m: f64, trials: usize, seed: u64) -> Result<VerifyRecord> {
    let problem = PlacementProblem::new(model, k, m)?;
    let best = problem.algorithm4();
    let certify = certify_problem(&problem, &best)?;
    let monte_carlo = monte_carlo_check(&best, model, trials, seed)?;
    let decode = decode_check(&best.placement, model, seed, trials as u64);
    let passed =
        certify.certified && certify.lp_nonnegative && certify.structural.all_hold() && monte_carlo.ok && decode.ok;
    Ok(VerifyRecord {
        n_files: model.n_files(),
        k_users: k,
        cache: m,
        probs: model.probs().to_vec(),
        certify,
        monte_carlo,
        decode,
        passed,
    })
}

/// Seeded random instances with `N <= 6`, `K <= 5`.
pub fn random_batch(seed: u64) -> Result<Vec<(PopularityModel, usize, f64)>> {
    let mut rng = trial_rng(seed, u64::MAX);
    (0..BATCH_SIZE)
        .map(|_| {
            let n = rng.random_range(2..=6usize);
            let k = rng.random_range(1..=5usize);
            let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
            // quarter-step cache sizes keep file sizes small for the decode test
            let m = rng.random_range(0..=4 * n) as f64 / 4.0;
            Ok((make_custom(&w)?, k, m))
        })
        .collect()
}

const VERIFY_HEADER: &str =
    "N,K,M,lp_rate,alg_rate,gap,certified,structure_ok,mc_mean,mc_stderr,mc_ok,decode_bits,decode_ok,passed";

fn records_csv(records: &[VerifyRecord]) -> String {
    let mut s = format!("{VERIFY_HEADER}\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.n_files,
            r.k_users,
            csv_number(r.cache),
            csv_number(r.certify.lp_rate),
            csv_number(r.certify.alg_rate),
            csv_number(r.certify.gap),
            r.certify.certified,
            r.certify.structural.all_hold(),
            csv_number(r.monte_carlo.result.mean),
            csv_number(r.monte_carlo.result.stderr),
            r.monte_carlo.ok,
            r.decode.file_size_bits.map(|f| f.to_string()).unwrap_or_default(),
            r.decode.ok,
            r.passed
        );
    }
    s
}

/// A placement supplied for checking, either bare or inside solver output.
#[derive(Deserialize)]
#[serde(untagged)]
enum PlacementFile {
    Bare(PlacementMatrix),
    Wrapped { placement: PlacementMatrix },
}

/// Invariant (and optionally optimality) check of a placement file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementCheck {
    #[serde(rename = "N")]
    pub n_files: usize,
    #[serde(rename = "K")]
    pub k_users: usize,
    #[serde(rename = "M")]
    pub cache: f64,
    pub invariants: InvariantReport,
    pub violations: Vec<String>,
    pub rate: Option<f64>,
    pub optimal_rate: Option<f64>,
    pub optimal: Option<bool>,
    pub passed: bool,
}

fn read_placement(path: &Path) -> Result<PlacementMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("reading placement {}", path.display()))?;
    let parsed: PlacementFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("placement {}: {e}", path.display())))?;
    Ok(match parsed {
        PlacementFile::Bare(p) | PlacementFile::Wrapped { placement: p } => p,
    })
}

fn verify_placement(raw: &RawConfig, path: &Path) -> Result<CommandOutput> {
    let placement = read_placement(path)?;
    let caches = raw.cache_sizes()?;
    let [cache] = caches.as_slice() else {
        return Err(CliError::Config("checking a placement needs exactly one cache size".into()).into());
    };
    let (n, k) = (placement.n_files(), placement.k_users());
    if raw.n_files.is_some_and(|given| given != n) {
        return Err(CliError::Config(format!("placement has {n} files but N = {}", raw.n_files.unwrap_or(0))).into());
    }
    if raw.k_users.is_some_and(|given| given != k) {
        return Err(CliError::Config(format!("placement has K = {k} but --K = {}", raw.k_users.unwrap_or(0))).into());
    }
    let invariants = placement.check(*cache);
    let mut violations = invariants.violations();
    if violations.is_empty() && !invariants.cache_fully_used() {
        violations.push(format!("cache usage {} below M = {cache}", invariants.cache_usage));
    }
    let (mut rate, mut optimal_rate, mut optimal) = (None, None, None);
    if let Some(spec) = raw.popularity_spec()? {
        let model = spec.build(Some(n)).map_err(|e| CliError::Config(e.to_string()))?;
        if violations.is_empty() {
            let problem = PlacementProblem::new(&model, k, *cache)?;
            let coeffs = ccs_placement::placement::rate_coefficients(&model, &order_stats(&model, k)?)?;
            let r = average_rate(&placement, &coeffs)?;
            let best = problem.algorithm4().rate;
            let ok = r <= best + OPTIMALITY_TOL;
            if !ok {
                violations.push(format!("rate {r} exceeds the optimum {best}"));
            }
            (rate, optimal_rate, optimal) = (Some(r), Some(best), Some(ok));
        }
    }
    let passed = violations.is_empty();
    let report = PlacementCheck {
        n_files: n,
        k_users: k,
        cache: *cache,
        invariants,
        violations: violations.clone(),
        rate,
        optimal_rate,
        optimal,
        passed,
    };
    let data = match raw.format_or(Format::Json)? {
        Format::Json => to_json(&report)?,
        Format::Csv => format!(
            "N,K,M,partition_residual,cache_usage,min_entry,rate,optimal_rate,passed\n{},{},{},{},{},{},{},{},{}\n",
            n,
            k,
            csv_number(*cache),
            csv_number(report.invariants.partition_residual),
            csv_number(report.invariants.cache_usage),
            csv_number(report.invariants.min_entry),
            rate.map(csv_number).unwrap_or_default(),
            optimal_rate.map(csv_number).unwrap_or_default(),
            passed
        ),
    };
    let mut summary = vec![format!("placement {}: {}", path.display(), if passed { "PASS" } else { "FAIL" })];
    summary.extend(violations.into_iter().map(|v| format!("  {v}")));
    Ok(CommandOutput { data, summary, failed: !passed, ..Default::default() })
}

/// Certification, Monte Carlo cross-check and decode test.
///
/// With `--placement` the file is checked instead; with no instance given a
/// seeded random batch is verified.
pub fn cmd_verify(raw: &RawConfig) -> Result<CommandOutput> {
    if let Some(path) = &raw.placement {
        return verify_placement(raw, path);
    }
    let trials = raw.trials.unwrap_or(DEFAULT_TRIALS);
    if trials == 0 {
        return Err(CliError::Config("trials must be at least 1".into()).into());
    }
    let seed = raw.seed.unwrap_or(DEFAULT_SEED);
    let instances = if raw.n_files.is_none() && raw.popularity_spec()?.is_none() {
        random_batch(seed)?
    } else {
        let cfg = raw.resolve()?;
        check_guard(cfg.n_files, cfg.k_users)?;
        cfg.cache_sizes.iter().map(|&m| (cfg.model.clone(), cfg.k_users, m)).collect()
    };
    for (model, k, _) in &instances {
        check_guard(model.n_files(), *k)?;
    }
    let records = instances
        .iter()
        .map(|(model, k, m)| verify_instance(model, *k, *m, trials, seed))
        .collect::<Result<Vec<_>>>()?;
    let data = match raw.format_or(Format::Json)? {
        Format::Json => to_json(&records)?,
        Format::Csv => records_csv(&records),
    };
    let failures = records.iter().filter(|r| !r.passed).count();
    let mut summary = vec![format!(
        "{} instance(s) verified, {} failed; max LP gap {:.3e}",
        records.len(),
        failures,
        records.iter().map(|r| r.certify.gap).fold(0.0, f64::max)
    )];
    for r in records.iter().filter(|r| !r.passed) {
        summary.push(format!("  FAIL N={} K={} M={}", r.n_files, r.k_users, r.cache));
    }
    Ok(CommandOutput { data, summary, failed: failures > 0, ..Default::default() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(json: &str) -> ExperimentConfig {
        serde_json::from_str::<RawConfig>(json).unwrap().resolve().unwrap()
    }

    #[test]
    fn batch_is_seeded_and_small() {
        let a = random_batch(DEFAULT_SEED).unwrap();
        let b = random_batch(DEFAULT_SEED).unwrap();
        assert_eq!(a.len(), BATCH_SIZE);
        for ((ma, ka, ca), (mb, kb, cb)) in a.iter().zip(&b) {
            assert_eq!((ma.probs(), ka, ca), (mb.probs(), kb, cb));
            assert!(ma.n_files() <= 6 && *ka <= 5 && *ca <= ma.n_files() as f64);
        }
    }

    #[test]
    fn solve_csv_for_several_sizes_has_m_column() {
        let c = cfg(r#"{"N": 3, "K": 2, "M": [0, 1], "probs": "0.5,0.3,0.2", "format": "csv"}"#);
        let out = cmd_solve(&c).unwrap();
        let lines: Vec<&str> = out.data.lines().collect();
        assert_eq!(lines[0], "M,file,l0,l1,l2");
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert!(lines[1].starts_with("0,1,1.000000000"));
    }

    #[test]
    fn sweep_full_cache_row_is_zero() {
        let c = cfg(r#"{"N": 4, "K": 3, "M": 4, "zipf": 1.0}"#);
        let rows = sweep_rows(&c).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert!(r.optimal_rate.abs() < 1e-12 && r.one_group_rate.abs() < 1e-12 && r.alg1_rate.abs() < 1e-12);
    }

    #[test]
    fn decode_check_runs_for_small_instance() {
        let model = make_custom(&[0.5, 0.3, 0.2]).unwrap();
        let sol = PlacementProblem::new(&model, 3, 1.0).unwrap().algorithm4();
        let d = decode_check(&sol.placement, &model, 7, 0);
        assert!(d.ok, "{d:?}");
        assert_eq!(d.users_decoded, 6);
    }
}
