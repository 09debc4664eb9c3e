//! Bit-level simulation of placement and coded delivery.
//!
//! Files are sliced left to right into subfiles ordered by subset size and
//! then by user mask (user `k` is bit `k-1`). For every nonempty user set
//! `S` the server multicasts the XOR of the subfiles `W_{d_k, S\{k}}`,
//! zero-padded at the tail to the longest operand.

use std::collections::HashMap;
use std::fmt::Write as _;

use bitvec::prelude::*;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{pairwise_sum, Execution};
use crate::placement::{binom_ext, PlacementMatrix};
use crate::popularity::PopularityModel;

pub type Bits = BitVec<u8, Msb0>;

/// Largest user count for which subfiles are materialised (`2^K` per file).
pub const MAX_REALIZE_USERS: usize = 20;
/// Entries are matched to fractions `p/q` within this tolerance.
const RATIONAL_TOL: f64 = 1e-10;
const MAX_DENOMINATOR: u64 = 1 << 40;

/// `N` synthetic files of `F` bits each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileLibrary {
    file_size_bits: u64,
    files: Vec<Bits>,
}

impl FileLibrary {
    /// Uniformly random contents, reproducible from `seed`.
    pub fn random(n_files: usize, file_size_bits: u64, seed: u64) -> Result<Self> {
        if n_files == 0 || file_size_bits == 0 {
            return Err(Error::InvalidParameter("library needs at least one file of at least one bit".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_bytes = file_size_bits.div_ceil(8) as usize;
        let files = (0..n_files)
            .map(|_| {
                let mut bytes = vec![0u8; n_bytes];
                rng.fill_bytes(&mut bytes);
                let mut bits = Bits::from_vec(bytes);
                bits.truncate(file_size_bits as usize);
                bits
            })
            .collect();
        Ok(FileLibrary { file_size_bits, files })
    }

    pub fn from_files(files: Vec<Bits>) -> Result<Self> {
        let f = files.first().map(|b| b.len()).unwrap_or(0);
        if f == 0 || files.iter().any(|b| b.len() != f) {
            return Err(Error::InvalidParameter("files must be nonempty and of equal length".into()));
        }
        Ok(FileLibrary { file_size_bits: f as u64, files })
    }

    pub fn file_size_bits(&self) -> u64 {
        self.file_size_bits
    }

    pub fn n_files(&self) -> usize {
        self.files.len()
    }

    /// File `n`, 1-based.
    pub fn file(&self, n: usize) -> &BitSlice<u8, Msb0> {
        &self.files[n - 1]
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Smallest `q` with `x ≈ p/q`, by continued fractions.
fn denominator(x: f64) -> Option<u64> {
    let (mut h0, mut h1) = (0f64, 1f64);
    let (mut k0, mut k1) = (1f64, 0f64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        let h2 = a * h1 + h0;
        let k2 = a * k1 + k0;
        if k2 > MAX_DENOMINATOR as f64 {
            return None;
        }
        if (x - h2 / k2).abs() <= RATIONAL_TOL {
            return Some(k2 as u64);
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a;
        if frac <= 0.0 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

/// Smallest file size (bits) that makes every subfile of `placement` an
/// integral number of bits.
pub fn min_file_size(placement: &PlacementMatrix) -> Result<u64> {
    let mut lcm = 1u64;
    for &a in placement.as_slice() {
        let q = denominator(a)
            .ok_or_else(|| Error::InvalidParameter(format!("entry {a} is not a small-denominator rational")))?;
        lcm = (lcm / gcd(lcm, q))
            .checked_mul(q)
            .ok_or_else(|| Error::InvalidParameter("file size LCM overflows u64".into()))?;
    }
    Ok(lcm)
}

/// User masks of each subset size, ascending.
fn subsets_by_size(k_users: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); k_users + 1];
    for mask in 0u32..(1 << k_users) {
        out[mask.count_ones() as usize].push(mask);
    }
    out
}

/// A library partitioned according to a placement, with user caches filled.
#[derive(Debug, Clone)]
pub struct PlacementRealization {
    k_users: usize,
    file_size_bits: u64,
    /// subfile size in bits, per file (0-based) and subset size
    sizes: Vec<Vec<u64>>,
    /// `subfiles[n][mask]`, n 0-based
    subfiles: Vec<Vec<Bits>>,
    caches: Vec<UserCache>,
    files: Vec<Bits>,
}

/// Everything user `k` stores: `W_{n,S}` for all `n` and all `S ∋ k`.
#[derive(Debug, Clone, Default)]
pub struct UserCache {
    entries: HashMap<(usize, u32), Bits>,
}

impl UserCache {
    /// Subfile `W_{n,S}`, file `n` 1-based.
    pub fn get(&self, n: usize, mask: u32) -> Option<&Bits> {
        self.entries.get(&(n, mask))
    }

    pub fn cached_bits(&self) -> u64 {
        self.entries.values().map(|b| b.len() as u64).sum()
    }
}

/// Slices every file of `library` according to `placement`.
pub fn realize(placement: &PlacementMatrix, library: &FileLibrary) -> Result<PlacementRealization> {
    let (n_files, k) = (placement.n_files(), placement.k_users());
    if library.n_files() != n_files {
        return Err(Error::DimensionMismatch(format!("placement has {n_files} files, library {}", library.n_files())));
    }
    if k > MAX_REALIZE_USERS {
        return Err(Error::InvalidParameter(format!("realization limited to {MAX_REALIZE_USERS} users, got {k}")));
    }
    let report = placement.check(0.0);
    if !report.partition_ok() || !report.nonnegative() {
        return Err(Error::Precondition(format!("placement is not valid: {}", report.violations().join("; "))));
    }
    let f = library.file_size_bits();
    let min_f = min_file_size(placement)?;
    if !f.is_multiple_of(min_f) {
        return Err(Error::InvalidFileSize { f, min_f });
    }
    let subsets = subsets_by_size(k);
    let mut sizes = Vec::with_capacity(n_files);
    let mut subfiles = Vec::with_capacity(n_files);
    for n in 1..=n_files {
        let row_sizes: Vec<u64> = placement.row(n).iter().map(|&a| (a * f as f64).round() as u64).collect();
        let total: u64 =
            row_sizes.iter().enumerate().map(|(l, s)| s * binom_ext(k as i64, l as i64).expect("K within limit")).sum();
        if total != f {
            return Err(Error::InvalidFileSize { f, min_f });
        }
        let file = library.file(n);
        let mut parts = vec![Bits::new(); 1 << k];
        let mut offset = 0usize;
        for (l, masks) in subsets.iter().enumerate() {
            let len = row_sizes[l] as usize;
            for &mask in masks {
                parts[mask as usize] = file[offset..offset + len].to_bitvec();
                offset += len;
            }
        }
        sizes.push(row_sizes);
        subfiles.push(parts);
    }
    let caches = (0..k)
        .map(|user| {
            let bit = 1u32 << user;
            let mut cache = UserCache::default();
            for (n, parts) in subfiles.iter().enumerate() {
                for (mask, part) in parts.iter().enumerate() {
                    if mask as u32 & bit != 0 && !part.is_empty() {
                        cache.entries.insert((n + 1, mask as u32), part.clone());
                    }
                }
            }
            cache
        })
        .collect();
    Ok(PlacementRealization { k_users: k, file_size_bits: f, sizes, subfiles, caches, files: library.files.clone() })
}

impl PlacementRealization {
    pub fn k_users(&self) -> usize {
        self.k_users
    }

    pub fn n_files(&self) -> usize {
        self.sizes.len()
    }

    pub fn file_size_bits(&self) -> u64 {
        self.file_size_bits
    }

    /// `|W_{n,S}|` for `|S| = l`, file `n` 1-based.
    pub fn subfile_size(&self, n: usize, l: usize) -> u64 {
        self.sizes[n - 1][l]
    }

    pub fn subfile(&self, n: usize, mask: u32) -> &Bits {
        &self.subfiles[n - 1][mask as usize]
    }

    /// Cache of user `k`, 1-based.
    pub fn cache(&self, user: usize) -> &UserCache {
        &self.caches[user - 1]
    }

    fn check_demand(&self, demand: &[usize]) -> Result<()> {
        if demand.len() != self.k_users {
            return Err(Error::DimensionMismatch(format!(
                "demand has {} entries for {} users",
                demand.len(),
                self.k_users
            )));
        }
        if let Some(&d) = demand.iter().find(|&&d| d == 0 || d > self.n_files()) {
            return Err(Error::InvalidParameter(format!("requested file {d} outside 1..={}", self.n_files())));
        }
        Ok(())
    }
}

/// One coded multicast.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub mask: u32,
    pub payload: Bits,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryTranscript {
    pub demand: Vec<usize>,
    /// nonempty messages, by ascending mask
    pub messages: Vec<Message>,
    pub total_bits: u64,
}

fn to_hex(bits: &BitSlice<u8, Msb0>) -> String {
    let mut s = String::with_capacity(bits.len().div_ceil(4));
    for chunk in bits.chunks(8) {
        let mut byte = 0u8;
        for (i, b) in chunk.iter().enumerate() {
            if *b {
                byte |= 0x80 >> i;
            }
        }
        let _ = write!(s, "{byte:02x}");
    }
    s
}

impl DeliveryTranscript {
    /// One `mask,bits,hex` line per message (mask in decimal).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for m in &self.messages {
            let _ = writeln!(s, "{},{},{}", m.mask, m.payload.len(), to_hex(&m.payload));
        }
        s
    }

    pub fn message(&self, mask: u32) -> Option<&Message> {
        self.messages.binary_search_by_key(&mask, |m| m.mask).ok().map(|i| &self.messages[i])
    }

    pub fn rate(&self, file_size_bits: u64) -> f64 {
        self.total_bits as f64 / file_size_bits as f64
    }
}

/// XORs `src` into the head of `acc` (tail padding).
fn xor_into(acc: &mut BitSlice<u8, Msb0>, src: &BitSlice<u8, Msb0>) {
    *acc.get_mut(..src.len()).expect("operand no longer than accumulator") ^= src;
}

/// Encodes all multicasts for `demand` (1-based file per user).
pub fn serve(real: &PlacementRealization, demand: &[usize]) -> Result<DeliveryTranscript> {
    real.check_demand(demand)?;
    let k = real.k_users;
    let mut messages = Vec::new();
    let mut total_bits = 0;
    for mask in 1u32..(1 << k) {
        let operands: Vec<&Bits> =
            (0..k).filter(|u| mask & (1 << u) != 0).map(|u| real.subfile(demand[u], mask & !(1 << u))).collect();
        let len = operands.iter().map(|b| b.len()).max().unwrap_or(0);
        if len == 0 {
            continue;
        }
        let mut payload = bitvec![u8, Msb0; 0; len];
        for op in operands {
            xor_into(&mut payload, op);
        }
        total_bits += len as u64;
        messages.push(Message { mask, payload });
    }
    Ok(DeliveryTranscript { demand: demand.to_vec(), messages, total_bits })
}

/// Rebuilds the file requested by `user` (1-based) from its cache and the
/// transcript, and checks it against the original.
pub fn decode(real: &PlacementRealization, transcript: &DeliveryTranscript, user: usize) -> Result<Bits> {
    let k = real.k_users;
    if user == 0 || user > k {
        return Err(Error::InvalidParameter(format!("user {user} outside 1..={k}")));
    }
    real.check_demand(&transcript.demand)?;
    let corrupt = |reason: String| Error::Corruption { user, reason };
    let demand = &transcript.demand;
    let wanted = demand[user - 1];
    let me = 1u32 << (user - 1);
    let cache = real.cache(user);
    let mut out = Bits::with_capacity(real.file_size_bits as usize);
    for (l, masks) in subsets_by_size(k).iter().enumerate() {
        let len = real.subfile_size(wanted, l) as usize;
        if len == 0 {
            continue;
        }
        for &mask in masks {
            if mask & me != 0 {
                let part = cache
                    .get(wanted, mask)
                    .ok_or_else(|| corrupt(format!("missing cached subfile for mask {mask}")))?;
                out.extend_from_bitslice(part);
                continue;
            }
            let target = mask | me;
            let msg = transcript.message(target).ok_or_else(|| corrupt(format!("no message for mask {target}")))?;
            if msg.payload.len() < len {
                return Err(corrupt(format!("message {target} shorter than the subfile")));
            }
            let mut piece = msg.payload.clone();
            for other in (0..k).filter(|&u| target & (1 << u) != 0 && u != user - 1) {
                let sub = target & !(1 << other);
                let d = demand[other];
                if real.subfile_size(d, l) == 0 {
                    continue;
                }
                let op =
                    cache.get(d, sub).ok_or_else(|| corrupt(format!("missing side information for mask {sub}")))?;
                if op.len() > piece.len() {
                    return Err(corrupt(format!("side information longer than message {target}")));
                }
                xor_into(&mut piece, op);
            }
            piece.truncate(len);
            out.extend_from_bitslice(&piece);
        }
    }
    if out != real.files[wanted - 1] {
        return Err(corrupt(format!("reconstruction of file {wanted} does not match")));
    }
    Ok(out)
}

/// `total_bits / F` of serving `demand`, from subfile sizes alone.
///
/// For each level `l` the multicast for a size-`l+1` set costs the largest
/// `a_{d_k,l}` in it; with the users' entries sorted descending, the `i`-th
/// largest is the maximum of exactly `C(K-i, l)` such sets.
pub fn demand_rate(placement: &PlacementMatrix, demand: &[usize]) -> f64 {
    let k = placement.k_users();
    let mut x = vec![0.0; k];
    let mut total = 0.0;
    for l in 0..k {
        for (xi, &d) in x.iter_mut().zip(demand) {
            *xi = placement.get(d, l);
        }
        x.sort_by(|a, b| b.total_cmp(a));
        for (i, &xi) in x.iter().enumerate() {
            if xi > 0.0 {
                total += xi * binom_ext((k - 1 - i) as i64, l as i64).expect("K within limit") as f64;
            }
        }
    }
    total
}

/// Samples a demand vector (1-based files) for `k_users` users.
pub fn sample_demand<R: Rng + ?Sized>(sampler: &WeightedIndex<f64>, k_users: usize, rng: &mut R) -> Vec<usize> {
    (0..k_users).map(|_| sampler.sample(rng) + 1).collect()
}

/// Generator for trial `trial`: stream `trial` of the seeded ChaCha8.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloResult {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Average delivery rate over `trials` random demands.
pub fn monte_carlo_rate(
    placement: &PlacementMatrix,
    model: &PopularityModel,
    trials: usize,
    seed: u64,
    execution: Execution,
) -> Result<MonteCarloResult> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if placement.n_files() != model.n_files() {
        return Err(Error::DimensionMismatch(format!(
            "placement has {} files, model {}",
            placement.n_files(),
            model.n_files()
        )));
    }
    let sampler = WeightedIndex::new(model.probs()).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
    let k = placement.k_users();
    let rates = execution.map_range(trials, |t| {
        let mut rng = trial_rng(seed, t as u64);
        demand_rate(placement, &sample_demand(&sampler, k, &mut rng))
    });
    let n = trials as f64;
    let mean = pairwise_sum(&rates) / n;
    let stderr = if trials > 1 {
        let sq: Vec<f64> = rates.iter().map(|r| (r - mean) * (r - mean)).collect();
        (pairwise_sum(&sq) / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    Ok(MonteCarloResult { mean, stderr, trials, seed })
}
