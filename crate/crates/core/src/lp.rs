//! Independent optimality oracle: the placement problem as an explicit LP,
//! solved by a dense two-phase simplex.
//!
//! Intentionally shares nothing with the closed-form search except the rate
//! coefficients, so agreement between the two is meaningful.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::placement::{check_users, PlacementMatrix, RateCoefficients};
use crate::popularity::PopularityModel;
use crate::solver::{CandidateSolution, PlacementProblem};

/// Largest `N(K+1)` accepted by [`certify`].
pub const MAX_VARIABLES: usize = 200;
/// Smallest magnitude accepted as a pivot element.
pub const PIVOT_TOL: f64 = 1e-9;
/// A column enters when its reduced cost is below `-ENTER_TOL`.
pub const ENTER_TOL: f64 = 1e-10;
/// Feasibility / optimality tolerance for reported solutions.
pub const FEAS_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 1_000_000;
/// Placement entries closer than this are treated as equal when reading
/// structure off a solution.
const STRUCT_TOL: f64 = 1e-7;

/// `min c·x` s.t. `eq_rows·x = eq_rhs`, `ineq_rows·x ≤ ineq_rhs`,
/// `x_j ≥ 0` for `j ∈ nonneg`, other variables free.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub ineq_rows: Vec<Vec<f64>>,
    pub ineq_rhs: Vec<f64>,
    pub nonneg: Vec<usize>,
}

impl LinearProgram {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    /// Plain-text dump: objective, then one line per constraint.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        let _ = writeln!(s, "vars {}", self.n_vars());
        let nonneg: Vec<String> = self.nonneg.iter().map(|j| j.to_string()).collect();
        let _ = writeln!(s, "nonneg {}", nonneg.join(" "));
        let _ = writeln!(s, "min {}", join(&self.objective));
        for (row, rhs) in self.eq_rows.iter().zip(&self.eq_rhs) {
            let _ = writeln!(s, "eq {} = {rhs:.17e}", join(row));
        }
        for (row, rhs) in self.ineq_rows.iter().zip(&self.ineq_rhs) {
            let _ = writeln!(s, "le {} <= {rhs:.17e}", join(row));
        }
        s
    }

    /// Largest violation of any constraint at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |r: &[f64]| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let eq = self.eq_rows.iter().zip(&self.eq_rhs).map(|(r, b)| (dot(r) - b).abs());
        let le = self.ineq_rows.iter().zip(&self.ineq_rhs).map(|(r, b)| (dot(r) - b).max(0.0));
        let sign = self.nonneg.iter().map(|&j| (-x[j]).max(0.0));
        eq.chain(le).chain(sign).fold(0.0, f64::max)
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

fn var_index(k_users: usize, n: usize, l: usize) -> usize {
    (n - 1) * (k_users + 1) + l
}

/// The placement LP over row-major variables `a_{n,l}`: partition and cache
/// equalities, popularity-first ordering for `l ≥ 1`, and sign constraints
/// only on `a_{N,l}` (`l ≥ 1`) and `a_{1,0}` — the rest follows from those.
pub fn build_p2(coeffs: &RateCoefficients, cache: f64) -> LinearProgram {
    let (n_files, k) = (coeffs.n_files(), coeffs.k_users());
    let nv = n_files * (k + 1);
    let mut objective = vec![0.0; nv];
    for n in 1..=n_files {
        for l in 0..=k {
            objective[var_index(k, n, l)] = coeffs.g(n, l);
        }
    }
    let mut eq_rows = Vec::with_capacity(n_files + 1);
    let mut eq_rhs = Vec::with_capacity(n_files + 1);
    for n in 1..=n_files {
        let mut row = vec![0.0; nv];
        for l in 0..=k {
            row[var_index(k, n, l)] = coeffs.b[l];
        }
        eq_rows.push(row);
        eq_rhs.push(1.0);
    }
    let mut row = vec![0.0; nv];
    for n in 1..=n_files {
        for l in 1..=k {
            row[var_index(k, n, l)] = coeffs.c[l];
        }
    }
    eq_rows.push(row);
    eq_rhs.push(cache);

    let mut ineq_rows = Vec::with_capacity((n_files.saturating_sub(1)) * k);
    for n in 1..n_files {
        for l in 1..=k {
            // a_{n+1,l} - a_{n,l} <= 0
            let mut row = vec![0.0; nv];
            row[var_index(k, n + 1, l)] = 1.0;
            row[var_index(k, n, l)] = -1.0;
            ineq_rows.push(row);
        }
    }
    let ineq_rhs = vec![0.0; ineq_rows.len()];
    let mut nonneg: Vec<usize> = (1..=k).map(|l| var_index(k, n_files, l)).collect();
    nonneg.push(var_index(k, 1, 0));
    nonneg.sort_unstable();
    LinearProgram { objective, eq_rows, eq_rhs, ineq_rows, ineq_rhs, nonneg }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Original variables; empty unless optimal.
    pub values: Vec<f64>,
    pub objective_value: f64,
    /// Smallest reduced cost at the final basis (optimal only).
    pub min_reduced_cost: f64,
    pub iterations: usize,
}

impl LpSolution {
    /// Reads the values back as an `N x (K+1)` placement.
    pub fn placement(&self, n_files: usize, k_users: usize) -> Result<PlacementMatrix> {
        if self.values.len() != n_files * (k_users + 1) {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {n_files} x {} placement",
                self.values.len(),
                k_users + 1
            )));
        }
        let rows = self.values.chunks(k_users + 1).map(<[f64]>::to_vec).collect();
        PlacementMatrix::from_rows(k_users, rows)
    }
}

/// Standard form `A y = b, y ≥ 0, b ≥ 0` of a [`LinearProgram`].
struct StandardForm {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    /// (positive column, negative column for free variables)
    columns: Vec<(usize, Option<usize>)>,
}

fn standardize(lp: &LinearProgram) -> StandardForm {
    let nv = lp.n_vars();
    let mut is_nonneg = vec![false; nv];
    for &j in &lp.nonneg {
        is_nonneg[j] = true;
    }
    let mut columns = Vec::with_capacity(nv);
    let mut ncols = 0;
    for &nn in &is_nonneg {
        let pos = ncols;
        ncols += 1;
        let neg = if nn {
            None
        } else {
            ncols += 1;
            Some(pos + 1)
        };
        columns.push((pos, neg));
    }
    let n_slack = lp.ineq_rows.len();
    let total = ncols + n_slack;
    let mut c = vec![0.0; total];
    for (j, &(p, q)) in columns.iter().enumerate() {
        c[p] = lp.objective[j];
        if let Some(q) = q {
            c[q] = -lp.objective[j];
        }
    }
    let expand = |row: &[f64]| {
        let mut out = vec![0.0; total];
        for (j, &(p, q)) in columns.iter().enumerate() {
            out[p] = row[j];
            if let Some(q) = q {
                out[q] = -row[j];
            }
        }
        out
    };
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (row, &rhs) in lp.eq_rows.iter().zip(&lp.eq_rhs) {
        a.push(expand(row));
        b.push(rhs);
    }
    for (i, (row, &rhs)) in lp.ineq_rows.iter().zip(&lp.ineq_rhs).enumerate() {
        let mut r = expand(row);
        r[ncols + i] = 1.0;
        a.push(r);
        b.push(rhs);
    }
    for (row, rhs) in a.iter_mut().zip(b.iter_mut()) {
        if *rhs < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
            *rhs = -*rhs;
        }
    }
    StandardForm { a, b, c, columns }
}

/// Dense tableau: `rows` constraint rows, then the reduced-cost row. The
/// last column holds the right-hand side (and `-z` in the cost row).
struct Tableau {
    rows: usize,
    cols: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, r: usize, s: usize) {
        let w = self.cols + 1;
        let pv = self.t[r * w + s];
        for j in 0..w {
            self.t[r * w + j] /= pv;
        }
        let prow: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let f = self.t[i * w + s];
            if f != 0.0 {
                for (j, &pj) in prow.iter().enumerate() {
                    self.t[i * w + j] -= f * pj;
                }
            }
        }
        self.basis[r] = s;
    }

    /// Bland's rule iterations over the allowed columns. `Ok(true)` means
    /// optimal, `Ok(false)` unbounded.
    fn run(&mut self, allowed: impl Fn(usize) -> bool) -> Result<bool> {
        loop {
            let cost = self.rows;
            let Some(s) = (0..self.cols).find(|&j| allowed(j) && self.at(cost, j) < -ENTER_TOL) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, s);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - 1e-12 || (ratio <= best + 1e-12 && self.basis[i] < self.basis[r]) {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Ok(false);
            };
            self.iterations += 1;
            if self.iterations > MAX_ITERATIONS {
                return Err(Error::SolverStalled { iterations: self.iterations });
            }
            self.pivot(r, s);
        }
    }

    fn set_costs(&mut self, c: &[f64]) {
        let w = self.cols + 1;
        let cost = self.rows;
        let row = &mut self.t[cost * w..(cost + 1) * w];
        row.fill(0.0);
        row[..self.cols].copy_from_slice(&c[..self.cols]);
        for i in 0..self.rows {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    self.t[cost * w + j] -= cb * self.t[i * w + j];
                }
            }
        }
    }

    fn remove_row(&mut self, r: usize) {
        let w = self.cols + 1;
        self.t.drain(r * w..(r + 1) * w);
        self.basis.remove(r);
        self.rows -= 1;
    }
}

/// Solves `m` with partial pivoting; `None` if singular.
fn gauss_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let p = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[p][col].abs() < 1e-13 {
            return None;
        }
        m.swap(col, p);
        rhs.swap(col, p);
        for i in col + 1..n {
            let f = m[i][col] / m[col][col];
            if f != 0.0 {
                let (top, bottom) = m.split_at_mut(i);
                for (x, y) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *x -= f * y;
                }
                rhs[i] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (rhs[i] - s) / m[i][i];
    }
    Some(x)
}

/// Two-phase primal simplex with Bland's rule.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let nv = lp.n_vars();
    let shape_ok = lp.eq_rows.iter().chain(&lp.ineq_rows).all(|r| r.len() == nv)
        && lp.eq_rows.len() == lp.eq_rhs.len()
        && lp.ineq_rows.len() == lp.ineq_rhs.len()
        && lp.nonneg.iter().all(|&j| j < nv);
    if !shape_ok {
        return Err(Error::DimensionMismatch("malformed linear program".into()));
    }
    let sf = standardize(lp);
    let m = sf.b.len();
    let n_real = sf.c.len();
    let cols = n_real + m;
    let w = cols + 1;
    let mut t = vec![0.0; (m + 1) * w];
    for i in 0..m {
        t[i * w..i * w + n_real].copy_from_slice(&sf.a[i]);
        t[i * w + n_real + i] = 1.0;
        t[i * w + cols] = sf.b[i];
    }
    let mut tab = Tableau { rows: m, cols, t, basis: (n_real..cols).collect(), iterations: 0 };

    // phase one: minimise the artificial sum
    let mut c1 = vec![0.0; cols];
    c1[n_real..].iter_mut().for_each(|v| *v = 1.0);
    tab.set_costs(&c1);
    tab.run(|_| true)?;
    let infeasibility = -tab.rhs(tab.rows);
    let not_optimal = |status, iterations| LpSolution {
        status,
        values: Vec::new(),
        objective_value: f64::NAN,
        min_reduced_cost: f64::NAN,
        iterations,
    };
    if infeasibility > FEAS_TOL {
        return Ok(not_optimal(LpStatus::Infeasible, tab.iterations));
    }

    // drive remaining (zero-level) artificials out, dropping redundant rows
    let mut kept_rows: Vec<usize> = (0..m).collect();
    let mut i = 0;
    while i < tab.rows {
        if tab.basis[i] >= n_real {
            match (0..n_real).find(|&j| tab.at(i, j).abs() > PIVOT_TOL) {
                Some(j) => {
                    tab.pivot(i, j);
                    i += 1;
                }
                None => {
                    tab.remove_row(i);
                    kept_rows.remove(i);
                }
            }
        } else {
            i += 1;
        }
    }

    let mut c2 = sf.c.clone();
    c2.resize(cols, 0.0);
    tab.set_costs(&c2);
    if !tab.run(|j| j < n_real)? {
        return Ok(not_optimal(LpStatus::Unbounded, tab.iterations));
    }

    // Recompute the basic solution and duals from the original data so
    // tableau round-off does not leak into the answer.
    let basis = tab.basis.clone();
    let bmat: Vec<Vec<f64>> = kept_rows.iter().map(|&r| basis.iter().map(|&j| sf.a[r][j]).collect()).collect();
    let brhs: Vec<f64> = kept_rows.iter().map(|&r| sf.b[r]).collect();
    let y_std: Vec<f64> = match gauss_solve(bmat.clone(), brhs) {
        Some(xb) => {
            let mut y = vec![0.0; n_real];
            for (&j, &v) in basis.iter().zip(&xb) {
                y[j] = v;
            }
            y
        }
        None => {
            let mut y = vec![0.0; n_real];
            for (i, &j) in basis.iter().enumerate() {
                y[j] = tab.rhs(i);
            }
            y
        }
    };
    let bt: Vec<Vec<f64>> = (0..basis.len()).map(|i| bmat.iter().map(|row| row[i]).collect()).collect();
    let cb: Vec<f64> = basis.iter().map(|&j| sf.c[j]).collect();
    let min_reduced_cost = match gauss_solve(bt, cb) {
        Some(duals) => (0..n_real)
            .map(|j| sf.c[j] - kept_rows.iter().zip(&duals).map(|(&r, d)| sf.a[r][j] * d).sum::<f64>())
            .fold(f64::INFINITY, f64::min),
        None => (0..n_real).map(|j| tab.at(tab.rows, j)).fold(f64::INFINITY, f64::min),
    };

    let values: Vec<f64> = sf.columns.iter().map(|&(p, q)| y_std[p] - q.map_or(0.0, |q| y_std[q])).collect();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: lp.objective_at(&values),
        values,
        min_reduced_cost,
        iterations: tab.iterations,
    })
}

/// Outcome of one structural claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Holds,
    Violated,
    NotApplicable,
}

impl Check {
    fn from(applies: bool, holds: bool) -> Self {
        match (applies, holds) {
            (false, _) => Check::NotApplicable,
            (true, true) => Check::Holds,
            (true, false) => Check::Violated,
        }
    }

    pub fn ok(self) -> bool {
        self != Check::Violated
    }
}

/// Which placement the structural report was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureSource {
    LpVertex,
    /// The LP vertex was a non-canonical optimum; the closed-form candidate
    /// (verified LP-feasible with a tying objective) was inspected instead.
    Algorithm4,
}

/// Structure of an optimal placement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuralReport {
    pub source: StructureSource,
    pub group_count: usize,
    /// group sizes in file order
    pub group_sizes: Vec<usize>,
    pub max_nonzeros_per_row: usize,
    /// at most three file groups
    pub at_most_three_groups: Check,
    /// every row has at most two nonzero entries
    pub at_most_two_nonzeros: Check,
    /// two groups: second group caches at most one subgroup
    pub second_group_single_level: Check,
    /// two groups, second partly cached: cached parts differ in one place
    pub groups_differ_in_one_level: Check,
    /// two groups, second partly cached: first group keeps nothing at the server
    pub first_group_fully_cached: Check,
    /// three groups: the last group is uncached
    pub third_group_uncached: Check,
}

impl StructuralReport {
    pub fn all_hold(&self) -> bool {
        [
            self.at_most_three_groups,
            self.at_most_two_nonzeros,
            self.second_group_single_level,
            self.groups_differ_in_one_level,
            self.first_group_fully_cached,
            self.third_group_uncached,
        ]
        .iter()
        .all(|c| c.ok())
    }
}

fn nonzero(x: f64) -> bool {
    x.abs() > STRUCT_TOL
}

/// Reads the group structure off `p` and checks each structural claim.
pub fn structural_report(p: &PlacementMatrix, source: StructureSource) -> StructuralReport {
    let k = p.k_users();
    // consecutive grouping (popularity-first placements group contiguously)
    let mut starts = vec![1];
    for n in 2..=p.n_files() {
        let same = p.row(n).iter().zip(p.row(n - 1)).all(|(a, b)| (a - b).abs() <= STRUCT_TOL);
        if !same {
            starts.push(n);
        }
    }
    let group_count = starts.len();
    let mut group_sizes: Vec<usize> = starts.windows(2).map(|w| w[1] - w[0]).collect();
    group_sizes.push(p.n_files() + 1 - starts[group_count - 1]);
    let max_nonzeros = (1..=p.n_files()).map(|n| p.row(n).iter().filter(|&&x| nonzero(x)).count()).max().unwrap_or(0);

    let two = group_count == 2;
    let (head, second) = if group_count >= 2 { (p.row(starts[0]), p.row(starts[1])) } else { (p.row(1), p.row(1)) };
    let second_levels = (1..=k).filter(|&l| nonzero(second[l])).count();
    let second_cached = two && second_levels > 0;
    let differing = (1..=k).filter(|&l| nonzero(head[l] - second[l])).count();
    let third_uncached = group_count == 3 && {
        let last = p.row(starts[2]);
        (1..=k).all(|l| !nonzero(last[l])) && (last[0] - 1.0).abs() <= STRUCT_TOL
    };

    StructuralReport {
        source,
        group_count,
        group_sizes,
        max_nonzeros_per_row: max_nonzeros,
        at_most_three_groups: Check::from(true, group_count <= 3),
        at_most_two_nonzeros: Check::from(true, max_nonzeros <= 2),
        second_group_single_level: Check::from(two, second_levels <= 1),
        groups_differ_in_one_level: Check::from(second_cached, differing == 1),
        first_group_fully_cached: Check::from(second_cached, !nonzero(head[0])),
        third_group_uncached: Check::from(group_count == 3, third_uncached),
    }
}

/// Closed-form optimum versus LP optimum for one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifyReport {
    pub n_files: usize,
    pub k_users: usize,
    pub cache: f64,
    pub lp_rate: f64,
    pub alg_rate: f64,
    pub gap: f64,
    /// gap within tolerance
    pub certified: bool,
    /// LP solution is nonnegative everywhere (not just where constrained)
    pub lp_nonnegative: bool,
    /// LP solution uses the whole cache
    pub lp_cache_equality: bool,
    pub lp_iterations: usize,
    pub structural: StructuralReport,
}

fn check_guard(n_files: usize, k_users: usize) -> Result<()> {
    let variables = n_files * (k_users + 1);
    if variables > MAX_VARIABLES {
        return Err(Error::InstanceTooLarge { variables, limit: MAX_VARIABLES });
    }
    Ok(())
}

/// Solves the placement LP of an existing problem.
pub fn solve_problem(problem: &PlacementProblem) -> Result<LpSolution> {
    check_guard(problem.n_files(), problem.k_users())?;
    solve(&build_p2(problem.coefficients(), problem.cache()))
}

/// Runs the closed-form search and the LP on one instance and compares them.
pub fn certify(model: &PopularityModel, k_users: usize, cache: f64) -> Result<CertifyReport> {
    check_users(k_users)?;
    check_guard(model.n_files(), k_users)?;
    let problem = PlacementProblem::new(model, k_users, cache)?;
    let best = problem.algorithm4();
    certify_problem(&problem, &best)
}

/// Certification against an already computed candidate.
pub fn certify_problem(problem: &PlacementProblem, best: &CandidateSolution) -> Result<CertifyReport> {
    let (n_files, k_users) = (problem.n_files(), problem.k_users());
    check_guard(n_files, k_users)?;
    let lp = build_p2(problem.coefficients(), problem.cache());
    let sol = solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::InfeasibleCase(format!("placement LP reported {:?}", sol.status)));
    }
    let vertex = sol.placement(n_files, k_users)?;
    let gap = (sol.objective_value - best.rate).abs();
    let mut structural = structural_report(&vertex, StructureSource::LpVertex);
    if !structural.all_hold() {
        let tied = best.rate <= sol.objective_value + FEAS_TOL;
        if tied && lp.max_violation(best.placement.as_slice()) <= FEAS_TOL {
            structural = structural_report(&best.placement, StructureSource::Algorithm4);
        }
    }
    Ok(CertifyReport {
        n_files,
        k_users,
        cache: problem.cache(),
        lp_rate: sol.objective_value,
        alg_rate: best.rate,
        gap,
        certified: gap <= FEAS_TOL,
        lp_nonnegative: vertex.min_entry() >= -FEAS_TOL,
        lp_cache_equality: (vertex.cache_usage() - problem.cache()).abs() <= FEAS_TOL,
        lp_iterations: sol.iterations,
        structural,
    })
}

/// One certification job.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: PopularityModel,
    pub k_users: usize,
    pub cache: f64,
}

/// Certifies independent instances, in order.
pub fn certify_batch(instances: &[Instance], execution: Execution) -> Vec<Result<CertifyReport>> {
    execution.map(instances, |i| certify(&i.model, i.k_users, i.cache))
}
