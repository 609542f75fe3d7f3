//! Partitioning functionals: sampled assignments of dataset indices into
//! `L` parts, plus repetition seeding and sub-measure restriction.
//!
//! Three schemes are shipped. `RandomBalanced` cuts a seeded pseudorandom
//! permutation of `0..n` into `L` contiguous blocks whose sizes differ by at
//! most one. `RangeBounded` assigns index `i` to part `j` iff
//! `bounds[j] <= x_i[key_dim] < bounds[j+1]` and ignores the repetition
//! index (a degenerate distribution). `Subsample` draws `L` independent
//! parts of a fixed size uniformly with replacement, waiving disjointness
//! (the Bootstrap/BLB family).
//!
//! Every assignment is a pure function of `(base_seed, repetition_index, n,
//! spec)`. The balanced permutation is a cycle-walking Feistel network, so a
//! point's part can be computed positionally during streaming without
//! materializing any index table.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::numeric::{mix_seed, quantile_r7_sorted, splitmix64};

/// Whether parts must form a disjoint cover of the index set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Partition,
    Subsample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum PartitionScheme {
    RandomBalanced,
    RangeBounded {
        bounds: Vec<f64>,
        #[serde(default)]
        key_dim: usize,
    },
    Subsample {
        part_size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionerSpec {
    #[serde(flatten)]
    pub scheme: PartitionScheme,
    #[serde(rename = "L")]
    pub part_count: usize,
    pub base_seed: u64,
}

impl PartitionerSpec {
    pub fn mode(&self) -> PartitionMode {
        match self.scheme {
            PartitionScheme::Subsample { .. } => PartitionMode::Subsample,
            _ => PartitionMode::Partition,
        }
    }

    /// Static validity: part count and scheme parameters.
    pub fn validate(&self) -> Result<()> {
        if self.part_count == 0 {
            return Err(Error::InvalidSpec("part count must be at least 1".into()));
        }
        match &self.scheme {
            PartitionScheme::RandomBalanced => {}
            PartitionScheme::RangeBounded { bounds, .. } => {
                if bounds.len() != self.part_count + 1 {
                    return Err(Error::InvalidSpec(format!(
                        "range bounds need {} entries for L={}, got {}",
                        self.part_count + 1,
                        self.part_count,
                        bounds.len()
                    )));
                }
                if bounds.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidSpec(
                        "range bounds must be strictly increasing".into(),
                    ));
                }
                if bounds.iter().any(|b| !b.is_finite()) {
                    return Err(Error::NonfiniteValue("range bound".into()));
                }
            }
            PartitionScheme::Subsample { part_size } => {
                if *part_size == 0 {
                    return Err(Error::InvalidSpec(
                        "subsample part size must be at least 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A realized partitioning: `L` index lists over `0..n-1`, each sorted
/// ascending (with multiplicity in subsample mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionAssignment {
    pub parts: Vec<Vec<usize>>,
    pub mode: PartitionMode,
    pub part_count: usize,
    pub seed: u64,
}

/// Format-preserving pseudorandom permutation of `0..n` built from a
/// 4-round balanced Feistel network with cycle walking. Both directions are
/// O(1) per element, so the balanced scheme never materializes a table.
#[derive(Debug, Clone)]
pub struct FeistelPerm {
    n: u64,
    half_bits: u32,
    mask: u64,
    keys: [u64; 4],
}

impl FeistelPerm {
    pub fn new(n: usize, seed: u64) -> Self {
        let n = n as u64;
        // Smallest even bit-width whose range covers n.
        let mut bits = 2u32;
        while (1u64 << bits) < n {
            bits += 2;
        }
        let half_bits = bits / 2;
        let mut keys = [0u64; 4];
        let mut s = splitmix64(seed);
        for k in &mut keys {
            *k = s;
            s = splitmix64(s);
        }
        Self {
            n,
            half_bits,
            mask: (1u64 << half_bits) - 1,
            keys,
        }
    }

    #[inline]
    fn round(&self, r: u64, key: u64) -> u64 {
        splitmix64(r ^ key) & self.mask
    }

    #[inline]
    fn encrypt_raw(&self, x: u64) -> u64 {
        let mut left = x >> self.half_bits;
        let mut right = x & self.mask;
        for key in self.keys {
            let next = left ^ self.round(right, key);
            left = right;
            right = next;
        }
        (left << self.half_bits) | right
    }

    #[inline]
    fn decrypt_raw(&self, x: u64) -> u64 {
        let mut left = x >> self.half_bits;
        let mut right = x & self.mask;
        for key in self.keys.iter().rev() {
            let prev = right ^ self.round(left, *key);
            right = left;
            left = prev;
        }
        (left << self.half_bits) | right
    }

    /// Image of position `p` under the permutation.
    pub fn forward(&self, p: usize) -> usize {
        debug_assert!((p as u64) < self.n);
        let mut x = p as u64;
        loop {
            x = self.encrypt_raw(x);
            if x < self.n {
                return x as usize;
            }
        }
    }

    /// Position whose image is `i`.
    pub fn inverse(&self, i: usize) -> usize {
        debug_assert!((i as u64) < self.n);
        let mut x = i as u64;
        loop {
            x = self.decrypt_raw(x);
            if x < self.n {
                return x as usize;
            }
        }
    }
}

/// Contiguous block sizes `floor(n/L)` or `ceil(n/L)`, larger blocks first.
#[derive(Debug, Clone, Copy)]
pub struct BlockCuts {
    n: usize,
    quot: usize,
    rem: usize,
}

impl BlockCuts {
    pub fn new(n: usize, l: usize) -> Self {
        Self {
            n,
            quot: n / l,
            rem: n % l,
        }
    }

    /// Block containing position `p`.
    #[inline]
    pub fn block_of(&self, p: usize) -> usize {
        debug_assert!(p < self.n);
        let wide = self.rem * (self.quot + 1);
        if p < wide {
            p / (self.quot + 1)
        } else {
            self.rem + (p - wide) / self.quot
        }
    }
}

/// A partitioner resolved against a dataset size and repetition index;
/// routes single indices to parts without materializing the assignment
/// (except in subsample mode, where the drawn multiset is itself the
/// assignment and is small by construction).
#[derive(Debug, Clone)]
pub enum ResolvedPartitioner {
    Balanced {
        perm: FeistelPerm,
        cuts: BlockCuts,
    },
    Range {
        bounds: Vec<f64>,
        key_dim: usize,
    },
    Subsample {
        /// `parts[l]` = sorted drawn indices (with multiplicity).
        parts: Vec<Vec<usize>>,
    },
}

impl ResolvedPartitioner {
    /// Part id for a point in partition mode. Errors in `Range` when the
    /// key value falls outside the bounds.
    pub fn part_of(&self, index: usize, point: &[f64]) -> Result<usize> {
        match self {
            ResolvedPartitioner::Balanced { perm, cuts } => Ok(cuts.block_of(perm.inverse(index))),
            ResolvedPartitioner::Range { bounds, key_dim } => {
                let v = point[*key_dim];
                let lo = bounds[0];
                let hi = bounds[bounds.len() - 1];
                if v < lo || v >= hi {
                    return Err(Error::BoundsDoNotCover { value: v, lo, hi });
                }
                // First j with bounds[j] > v; the part is j - 1.
                let j = bounds.partition_point(|b| *b <= v);
                Ok(j - 1)
            }
            ResolvedPartitioner::Subsample { .. } => Err(Error::InvalidSpec(
                "subsample parts overlap; use multiplicities()".into(),
            )),
        }
    }

    pub fn is_subsample(&self) -> bool {
        matches!(self, ResolvedPartitioner::Subsample { .. })
    }
}

/// Resolves `spec` for a dataset of `n` points at the given repetition.
pub fn resolve_partitioner(
    spec: &PartitionerSpec,
    n: usize,
    repetition_index: u64,
) -> Result<ResolvedPartitioner> {
    spec.validate()?;
    let l = spec.part_count;
    match &spec.scheme {
        PartitionScheme::RandomBalanced => {
            if l > n {
                return Err(Error::InvalidPartitionCount { l, n });
            }
            let seed = mix_seed(spec.base_seed, repetition_index, 0);
            Ok(ResolvedPartitioner::Balanced {
                perm: FeistelPerm::new(n, seed),
                cuts: BlockCuts::new(n, l),
            })
        }
        PartitionScheme::RangeBounded { bounds, key_dim } => Ok(ResolvedPartitioner::Range {
            bounds: bounds.clone(),
            key_dim: *key_dim,
        }),
        PartitionScheme::Subsample { part_size } => {
            let mut parts = Vec::with_capacity(l);
            for part in 0..l {
                let seed = mix_seed(spec.base_seed, repetition_index, 1 + part as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut draws: Vec<usize> = (0..*part_size).map(|_| rng.gen_range(0..n)).collect();
                draws.sort_unstable();
                parts.push(draws);
            }
            Ok(ResolvedPartitioner::Subsample { parts })
        }
    }
}

/// Draws the realized assignment for one repetition. Deterministic in its
/// arguments: equal inputs produce bit-identical assignments.
pub fn sample_partition(
    spec: &PartitionerSpec,
    m: &EmpiricalMeasure,
    repetition_index: u64,
) -> Result<PartitionAssignment> {
    let n = m.len();
    let resolved = resolve_partitioner(spec, n, repetition_index)?;
    let l = spec.part_count;
    let parts = match &resolved {
        ResolvedPartitioner::Subsample { parts } => parts.clone(),
        _ => {
            let mut parts = vec![Vec::new(); l];
            for i in 0..n {
                let p = resolved.part_of(i, m.point(i))?;
                parts[p].push(i);
            }
            for (idx, part) in parts.iter().enumerate() {
                if part.is_empty() {
                    return Err(Error::EmptyPart { part: idx });
                }
            }
            parts
        }
    };
    Ok(PartitionAssignment {
        parts,
        mode: spec.mode(),
        part_count: l,
        seed: spec.base_seed,
    })
}

/// Empirical-quantile range bounds for a sort key: `L+1` strictly increasing
/// values whose first and last enclose the data with an epsilon margin.
/// Interior bounds are R-7 quantiles at `j/L` of a seeded sample of
/// `min(n, sample_budget)` points. Bounds that would produce an empty part
/// are dropped, so the returned length reports the effective part count
/// (`len - 1`).
pub fn quantile_bounds(
    m: &EmpiricalMeasure,
    l: usize,
    key_dim: usize,
    sample_budget: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if l == 0 || sample_budget == 0 {
        return Err(Error::EmptyInput(
            "quantile_bounds needs L >= 1 and a positive budget",
        ));
    }
    if key_dim >= m.dim() {
        return Err(Error::IndexOutOfRange {
            index: key_dim,
            n: m.dim(),
        });
    }
    let n = m.len();
    let keys: Vec<f64> = if sample_budget >= n {
        (0..n).map(|i| m.point(i)[key_dim]).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2, 0));
        rand::seq::index::sample(&mut rng, n, sample_budget)
            .into_iter()
            .map(|i| m.point(i)[key_dim])
            .collect()
    };
    let mut sorted = keys;
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());

    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let v = m.point(i)[key_dim];
        min = min.min(v);
        max = max.max(v);
    }
    let margin = |v: f64| v.abs().max(1.0) * f64::EPSILON * 8.0;
    let lo = min - margin(min);
    let hi = max + margin(max);

    let mut bounds = vec![lo];
    for j in 1..l {
        let q = quantile_r7_sorted(&sorted, j as f64 / l as f64);
        // An interior bound separates data only if min < q <= max; equal or
        // out-of-order candidates collapse adjacent parts.
        if q > min && q <= max && q > *bounds.last().unwrap() {
            bounds.push(q);
        }
    }
    bounds.push(hi);
    Ok(bounds)
}

/// Sub-measure containing exactly the indexed points, in the order given,
/// with a mapping back to the parent's indices.
pub fn restrict(m: &EmpiricalMeasure, part: &[usize]) -> Result<EmpiricalMeasure> {
    if part.is_empty() {
        return Err(Error::EmptyPart { part: 0 });
    }
    let d = m.dim();
    let mut data = Vec::with_capacity(part.len() * d);
    let mut parent = Vec::with_capacity(part.len());
    for &i in part {
        if i >= m.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: m.len(),
            });
        }
        data.extend_from_slice(m.point(i));
        parent.push(m.parent_index(i));
    }
    EmpiricalMeasure::with_parent(data, d, parent)
}
