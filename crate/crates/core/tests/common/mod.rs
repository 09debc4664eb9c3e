//! Brute-force oracles and reference values shared by the
//! integration tests and the acceptance run.
#![allow(dead_code)]

use ccs_placement::placement::PlacementMatrix;
use ccs_placement::popularity::PopularityModel;
use rand::Rng;

/// Calls `f(demand, probability)` for every one of the `N^K` demands.
pub fn for_each_demand(model: &PopularityModel, k: usize, mut f: impl FnMut(&[usize], f64)) {
    let n = model.n_files();
    let mut d = vec![1usize; k];
    loop {
        let pr: f64 = d.iter().map(|&i| model.p(i)).product();
        f(&d, pr);
        let mut i = 0;
        loop {
            if i == k {
                return;
            }
            d[i] += 1;
            if d[i] <= n {
                break;
            }
            d[i] = 1;
            i += 1;
        }
    }
}

/// `Pr[Y_m = n]` by enumeration, row-major `[m-1][n-1]`.
pub fn brute_order_stats(model: &PopularityModel, k: usize) -> Vec<Vec<f64>> {
    let mut table = vec![vec![0.0; model.n_files()]; k];
    for_each_demand(model, k, |d, pr| {
        let mut sorted = d.to_vec();
        sorted.sort_unstable();
        for (m, &n) in sorted.iter().enumerate() {
            table[m][n - 1] += pr;
        }
    });
    table
}

/// Load of one demand straight from the delivery rule: every nonempty user
/// set sends its longest requested subfile.
pub fn brute_demand_rate(a: &PlacementMatrix, d: &[usize]) -> f64 {
    let k = a.k_users();
    (1u32..1 << k)
        .map(|s| {
            let l = s.count_ones() as usize - 1;
            (0..k).filter(|u| s & (1 << u) != 0).map(|u| a.get(d[u], l)).fold(0.0, f64::max)
        })
        .sum()
}

/// Expected load over all demands.
pub fn brute_average_rate(a: &PlacementMatrix, model: &PopularityModel) -> f64 {
    let mut total = 0.0;
    for_each_demand(model, a.k_users(), |d, pr| total += pr * brute_demand_rate(a, d));
    total
}

/// Random placement satisfying the partition constraint and
/// popularity-first ordering, built from the least popular file upwards.
pub fn random_popularity_first(n: usize, k: usize, rng: &mut impl Rng) -> PlacementMatrix {
    let b: Vec<f64> = (0..=k).map(|l| binom(k, l)).collect();
    let mut rows = vec![vec![0.0; k + 1]; n];
    let mut bar = vec![0.0; k + 1];
    for row in rows.iter_mut().rev() {
        let used: f64 = (1..=k).map(|l| b[l] * bar[l]).sum();
        let budget = (1.0 - used).max(0.0) * rng.random_range(0.0..1.0);
        let mut delta: Vec<f64> =
            (0..=k).map(|l| if l > 0 && rng.random_bool(0.6) { rng.random_range(0.0..1.0) } else { 0.0 }).collect();
        let mass: f64 = (1..=k).map(|l| b[l] * delta[l]).sum();
        if mass > 0.0 {
            delta.iter_mut().for_each(|x| *x *= budget / mass);
        }
        for l in 1..=k {
            bar[l] += delta[l];
        }
        row.copy_from_slice(&bar);
        row[0] = 1.0 - (1..=k).map(|l| b[l] * bar[l]).sum::<f64>();
        row[0] = row[0].max(0.0);
    }
    PlacementMatrix::from_rows(k, rows).unwrap()
}

pub fn binom(n: usize, r: usize) -> f64 {
    if r > n {
        return 0.0;
    }
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Reference optimal placements (4 decimals) for N = 9, K = 7, Zipf 1.5, indexed
/// `[l][file-1]`, keyed by cache size.
pub fn reference_placements() -> Vec<(f64, [[f64; 9]; 8])> {
    const Z: [f64; 9] = [0.0; 9];
    vec![
        (
            1.0,
            [
                [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
                Z,
                [0.0317, 0.0317, 0.0317, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                [0.0095, 0.0095, 0.0095, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                Z,
                Z,
                Z,
                Z,
            ],
        ),
        (
            2.5,
            [
                [0.0, 0.0, 0.0, 0.0, 0.25, 0.25, 1.0, 1.0, 1.0],
                Z,
                Z,
                [0.0214, 0.0214, 0.0214, 0.0214, 0.0214, 0.0214, 0.0, 0.0, 0.0],
                [0.0071, 0.0071, 0.0071, 0.0071, 0.0, 0.0, 0.0, 0.0, 0.0],
                Z,
                Z,
                Z,
            ],
        ),
        (
            4.0,
            [
                [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0],
                Z,
                Z,
                Z,
                [0.0286, 0.0286, 0.0286, 0.0286, 0.0286, 0.0286, 0.0286, 0.0, 0.0],
                Z,
                Z,
                Z,
            ],
        ),
        (
            5.5,
            [
                [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.3, 1.0],
                Z,
                Z,
                Z,
                Z,
                [0.0476, 0.0476, 0.0476, 0.0476, 0.0476, 0.0476, 0.0476, 0.0333, 0.0],
                Z,
                Z,
            ],
        ),
        (
            6.0,
            [
                [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.6],
                Z,
                Z,
                Z,
                Z,
                [0.0476, 0.0476, 0.0476, 0.0476, 0.0476, 0.0476, 0.0476, 0.0476, 0.019],
                Z,
                Z,
            ],
        ),
        (7.0, [Z, Z, Z, Z, Z, [0.0265; 9], [0.0635; 9], Z]),
    ]
}

/// Largest elementwise distance between a placement and a reference table.
pub fn table_distance(a: &PlacementMatrix, table: &[[f64; 9]; 8]) -> f64 {
    let mut worst = 0.0f64;
    for (l, row) in table.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            worst = worst.max((a.get(i + 1, l) - v).abs());
        }
    }
    worst
}

/// One printed lower-bound cell: `(N_{p'}, N^m, value)`.
pub type BoundCell = (usize, usize, f64);

/// Reference lower bounds for K = 6, M = 1, Zipf 1.5:
/// `(N, two-group prior, exhaustive prior, proposed)`.
pub fn reference_bounds() -> Vec<(usize, BoundCell, BoundCell, BoundCell)> {
    vec![
        (5, (4, 0, 0.0909), (5, 0, 0.1109), (3, 1, 0.1789)),
        (7, (4, 1, 0.1212), (5, 1, 0.1296), (3, 1, 0.1673)),
        (9, (4, 2, 0.1515), (5, 1, 0.1242), (3, 2, 0.2138)),
    ]
}
