//! Sparse PPVs to comparable node representations: sparsification,
//! ℓ1 normalization and signed-log feature hashing.

use std::io::Cursor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::sparse::SparseVec;

pub const DEFAULT_DIM: usize = 1024;

/// Sparsification threshold for a graph of `node_count` nodes.
pub fn default_epsilon_c(node_count: usize) -> f64 {
    (1.0 / node_count.max(1) as f64).min(1e-5)
}

/// Bucket and sign hash functions sharing a target dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashPair {
    pub dim: usize,
    pub seed_bucket: u32,
    pub seed_sign: u32,
}

fn murmur3(i: NodeId, seed: u32) -> u32 {
    murmur3::murmur3_32(&mut Cursor::new(i.0.to_le_bytes()), seed)
        .expect("hashing an in-memory buffer cannot fail")
}

impl HashPair {
    pub fn new(dim: usize, seed_bucket: u32, seed_sign: u32) -> Self {
        assert!(dim >= 1, "dim must be positive");
        Self {
            dim,
            seed_bucket,
            seed_sign,
        }
    }

    #[inline]
    pub fn bucket(&self, i: NodeId) -> usize {
        murmur3(i, self.seed_bucket) as usize % self.dim
    }

    #[inline]
    pub fn sign(&self, i: NodeId) -> f64 {
        if (murmur3(i, self.seed_sign) as i32) >= 0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl Default for HashPair {
    fn default() -> Self {
        Self::new(DEFAULT_DIM, 0, 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepresentationMode {
    Raw,
    Hashed,
}

impl RepresentationMode {
    /// Raw vectors are used only when the whole id space fits in `dim`.
    pub fn for_id_space(node_count: usize, dim: usize, force_hashed: bool) -> Self {
        if force_hashed || node_count > dim {
            Self::Hashed
        } else {
            Self::Raw
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Raw => "raw",
            Self::Hashed => "hashed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeRepresentation {
    Raw(SparseVec),
    Hashed(Vec<f64>),
}

impl NodeRepresentation {
    pub fn mode(&self) -> RepresentationMode {
        match self {
            Self::Raw(_) => RepresentationMode::Raw,
            Self::Hashed(_) => RepresentationMode::Hashed,
        }
    }

    pub fn l1_norm(&self) -> f64 {
        match self {
            Self::Raw(x) => x.l1_norm(),
            Self::Hashed(x) => x.iter().map(|v| v.abs()).sum(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Raw(x) => x.is_empty(),
            Self::Hashed(x) => x.iter().all(|&v| v == 0.0),
        }
    }

    /// ℓp distance; both sides must share mode and dimension.
    pub fn lp_distance(&self, other: &Self, p: u32) -> Result<f64> {
        match (self, other) {
            (Self::Raw(a), Self::Raw(b)) => Ok(a.lp_distance(b, p)),
            (Self::Hashed(a), Self::Hashed(b)) if a.len() == b.len() => {
                let acc: f64 = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).abs().powi(p as i32))
                    .sum();
                Ok(crate::sparse::root(acc, p))
            }
            (Self::Hashed(a), Self::Hashed(b)) => Err(Error::ModeMismatch(format!(
                "hashed dimensions {} and {}",
                a.len(),
                b.len()
            ))),
            _ => Err(Error::ModeMismatch(format!(
                "{} vs {}",
                self.mode().as_str(),
                other.mode().as_str()
            ))),
        }
    }

    /// `idx:value;idx:value;…` over nonzero entries, ascending index.
    pub fn encode_entries(&self) -> String {
        let entries: Vec<(usize, f64)> = match self {
            Self::Raw(x) => x.sorted_entries().into_iter().map(|(k, v)| (k.index(), v)).collect(),
            Self::Hashed(x) => x
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect(),
        };
        entries
            .iter()
            .map(|(i, v)| format!("{i}:{v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Drops every entry at or below `epsilon_c`.
pub fn sparsify(p: &SparseVec, epsilon_c: f64) -> SparseVec {
    let mut out = p.clone();
    out.retain(|_, v| v > epsilon_c);
    out
}

/// Divides by the ℓ1 norm; the zero vector stays zero.
pub fn l1_normalize(p: &SparseVec) -> SparseVec {
    let norm = p.l1_norm();
    if norm == 0.0 {
        SparseVec::new()
    } else {
        p.scaled(1.0 / norm)
    }
}

/// Settings for turning estimates into representations; fixed for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reducer {
    pub mode: RepresentationMode,
    pub hash: HashPair,
    pub epsilon_c: f64,
    /// Clamp `log(x(i))` from below at `log(epsilon_c)`.
    pub log_floor: bool,
}

impl Reducer {
    /// Reduces an ℓ1-normalized, sparsified vector.
    pub fn reduce_dim(&self, x: &SparseVec) -> NodeRepresentation {
        match self.mode {
            RepresentationMode::Raw => NodeRepresentation::Raw(x.clone()),
            RepresentationMode::Hashed => {
                let floor = self.epsilon_c.ln();
                let mut sketch = vec![0.0; self.hash.dim];
                for (i, v) in x.sorted_entries() {
                    let mut log = v.ln();
                    if self.log_floor && self.epsilon_c > 0.0 {
                        log = log.max(floor);
                    }
                    sketch[self.hash.bucket(i)] += self.hash.sign(i) * log;
                }
                let norm: f64 = sketch.iter().map(|v| v.abs()).sum();
                if norm > 0.0 {
                    sketch.iter_mut().for_each(|v| *v /= norm);
                }
                NodeRepresentation::Hashed(sketch)
            }
        }
    }

    /// Sparsify, normalize and reduce one estimate.
    pub fn represent(&self, p: &SparseVec) -> NodeRepresentation {
        self.reduce_dim(&l1_normalize(&sparsify(p, self.epsilon_c)))
    }

    /// Representations for a whole estimate series.
    pub fn dyn_node_rep(&self, series: &[SparseVec]) -> Vec<NodeRepresentation> {
        series.iter().map(|p| self.represent(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(entries: &[(u32, f64)]) -> SparseVec {
        entries.iter().map(|&(k, v)| (NodeId(k), v)).collect()
    }

    fn hashed(seed_bucket: u32, seed_sign: u32) -> Reducer {
        Reducer {
            mode: RepresentationMode::Hashed,
            hash: HashPair::new(64, seed_bucket, seed_sign),
            epsilon_c: 1e-5,
            log_floor: true,
        }
    }

    #[test]
    fn sparsify_drops_small_entries() {
        assert_eq!(sparsify(&sv(&[(0, 0.5), (1, 1e-7)]), 1e-5), sv(&[(0, 0.5)]));
        let both = sv(&[(0, 0.5), (1, 0.5)]);
        assert_eq!(sparsify(&both, 1e-5), both);
        assert!(sparsify(&SparseVec::new(), 1e-5).is_empty());
        // Entries equal to the threshold go too.
        assert!(sparsify(&sv(&[(0, 1e-5)]), 1e-5).is_empty());
    }

    #[test]
    fn raw_mode_returns_input() {
        let x = sv(&[(0, 0.25), (3, 0.75)]);
        let reducer = Reducer {
            mode: RepresentationMode::Raw,
            ..hashed(0, 1)
        };
        assert_eq!(reducer.reduce_dim(&x), NodeRepresentation::Raw(x));
    }

    #[test]
    fn unit_mass_hashes_to_zero() {
        let rep = hashed(0, 1).reduce_dim(&sv(&[(7, 1.0)]));
        assert!(rep.is_zero());
    }

    #[test]
    fn hashing_depends_only_on_seeds() {
        let x = sv(&[(0, 0.1), (1, 0.2), (2, 0.3), (3, 0.4), (9, 0.0001)]);
        assert_eq!(hashed(5, 6).reduce_dim(&x), hashed(5, 6).reduce_dim(&x));
        assert_ne!(hashed(5, 6).reduce_dim(&x), hashed(7, 8).reduce_dim(&x));
    }

    #[test]
    fn hashed_output_is_normalized() {
        let x = l1_normalize(&sv(&[(0, 3.0), (1, 2.0), (2, 1.0), (40, 0.5)]));
        let rep = hashed(1, 2).reduce_dim(&x);
        assert!((rep.l1_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_estimate_gives_zero_representation() {
        let r = hashed(0, 1);
        let reps = r.dyn_node_rep(&[SparseVec::new()]);
        assert_eq!(reps.len(), 1);
        assert!(reps[0].is_zero());
        let raw = Reducer {
            mode: RepresentationMode::Raw,
            ..r
        };
        assert!(raw.represent(&SparseVec::new()).is_zero());
    }

    #[test]
    fn identical_estimates_identical_representations() {
        let p = sv(&[(0, 0.4), (1, 0.3), (2, 0.2)]);
        let reps = hashed(3, 4).dyn_node_rep(&[p.clone(), p]);
        assert_eq!(reps[0], reps[1]);
    }

    #[test]
    fn mode_selection() {
        assert_eq!(RepresentationMode::for_id_space(1024, 1024, false), RepresentationMode::Raw);
        assert_eq!(RepresentationMode::for_id_space(1025, 1024, false), RepresentationMode::Hashed);
        assert_eq!(RepresentationMode::for_id_space(3, 1024, true), RepresentationMode::Hashed);
        assert_eq!(default_epsilon_c(500), 1e-5);
        assert_eq!(default_epsilon_c(1_000_000), 1e-6);
    }

    #[test]
    fn mismatched_modes_are_rejected() {
        let a = NodeRepresentation::Raw(SparseVec::new());
        let b = NodeRepresentation::Hashed(vec![0.0; 4]);
        assert!(matches!(a.lp_distance(&b, 1), Err(Error::ModeMismatch(_))));
        let c = NodeRepresentation::Hashed(vec![0.0; 5]);
        assert!(b.lp_distance(&c, 1).is_err());
    }

    #[test]
    fn hash_buckets_and_signs_are_balanced() {
        let h = HashPair::new(1024, 17, 29);
        let n = 100_000u32;
        let mut counts = vec![0usize; h.dim];
        let mut sign_sum = 0.0;
        for i in 0..n {
            let id = NodeId(i);
            let b = h.bucket(id);
            assert!(b < h.dim);
            counts[b] += 1;
            sign_sum += h.sign(id);
        }
        let expected = n as f64 / h.dim as f64;
        for &c in &counts {
            assert!((c as f64) < 5.0 * expected && (c as f64) > expected / 5.0);
        }
        assert!((sign_sum / n as f64).abs() < 0.02);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn estimates() -> impl Strategy<Value = Vec<SparseVec>> {
            prop::collection::vec(
                prop::collection::vec((0u32..300, 1e-7f64..1.0), 0..40)
                    .prop_map(|e| e.into_iter().map(|(k, v)| (NodeId(k), v)).collect()),
                1..6,
            )
        }

        proptest! {
            #[test]
            fn representations_are_snapshot_local(series in estimates(), hashed_mode: bool) {
                let mut r = hashed(11, 12);
                if !hashed_mode {
                    r.mode = RepresentationMode::Raw;
                }
                let forward = r.dyn_node_rep(&series);
                let mut reversed_in = series.clone();
                reversed_in.reverse();
                let mut backward = r.dyn_node_rep(&reversed_in);
                backward.reverse();
                prop_assert_eq!(&forward, &backward);
                for rep in &forward {
                    prop_assert_eq!(rep.mode(), r.mode);
                    if !rep.is_zero() {
                        prop_assert!((rep.l1_norm() - 1.0).abs() <= 1e-9);
                    }
                }
            }
        }
    }
}
