//! Dataset construction and sampling: the shifted-Gaussian toy pairs, IDX
//! ingestion for MNIST-format files, synthetic high-dimensional surrogates,
//! dataset splitting, and the deterministic minibatch streams every
//! experiment consumes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::exact_ot::DiscreteMeasure;
use crate::tensor::Array;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset needs at least {needed} points, has {have}")]
    TooSmall { needed: usize, have: usize },

    #[error("bad idx magic 0x{0:08x}; expected 0x00000801 (labels) or 0x00000803 (images)")]
    BadMagic(u32),

    #[error("idx payload truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("idx dimensions overflow a usize product")]
    DimOverflow,

    #[error("batch size {batch} exceeds dataset size {dataset} without replacement")]
    BatchTooLarge { batch: usize, dataset: usize },

    #[error("stream exhausted and reshuffling is disabled")]
    Exhausted,

    #[error(transparent)]
    Ot(#[from] crate::exact_ot::OtError),

    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    GaussianShift,
    Mnist,
    Csv,
    /// Seeded Gaussian-mixture surrogate standing in for an image dataset
    /// of the same dimension.
    SyntheticMixture,
}

/// Pixel/coordinate normalization applied at load time. Always recorded,
/// never implicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Raw values, untouched.
    Raw,
    /// Scaled into [0, 1] by dividing by 255.
    #[default]
    ZeroOne,
    /// Scaled into [-1, 1].
    PlusMinusOne,
}

impl Normalization {
    pub fn apply_to_byte(self, v: u8) -> f64 {
        match self {
            Normalization::Raw => v as f64,
            Normalization::ZeroOne => v as f64 / 255.0,
            Normalization::PlusMinusOne => v as f64 / 127.5 - 1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Normalization::Raw => "raw",
            Normalization::ZeroOne => "zero-one",
            Normalization::PlusMinusOne => "plus-minus-one",
        }
    }
}

/// An immutable collection of points with its provenance and recorded
/// normalization.
#[derive(Debug, Clone)]
pub struct Dataset {
    points: Array,
    provenance: Provenance,
    normalization: Normalization,
}

impl Dataset {
    pub fn new(points: Array, provenance: Provenance, normalization: Normalization) -> Self {
        Dataset {
            points,
            provenance,
            normalization,
        }
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn points(&self) -> &Array {
        &self.points
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    /// Rows selected by index, as a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.point(i));
        }
        Dataset {
            points: Array::matrix(indices.len(), d, data).expect("sized correctly"),
            provenance: self.provenance.clone(),
            normalization: self.normalization,
        }
    }

    /// The whole dataset as a uniform measure.
    pub fn as_measure(&self) -> Result<DiscreteMeasure> {
        Ok(DiscreteMeasure::uniform(self.points.clone())?)
    }

    /// A uniform random subset of the given size, deterministic from seed.
    pub fn random_subset(&self, size: usize, seed: u64) -> Result<Dataset> {
        if size > self.len() {
            return Err(DataError::TooSmall {
                needed: size,
                have: self.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices: Vec<usize> = (0..self.len()).collect();
        indices.shuffle(&mut rng);
        indices.truncate(size);
        Ok(self.subset(&indices))
    }
}

/// Two standard Gaussian clouds shifted by +v and -v. With `paired` the
/// same base samples underlie both clouds; the default draws the two
/// datasets independently, matching a two-sample setting.
pub fn gaussian_shift_pair(
    n: usize,
    d: usize,
    shift: &[f64],
    seed: u64,
    paired: bool,
) -> (Dataset, Dataset) {
    assert!(n >= 1 && d >= 1, "need at least one point and one dimension");
    assert_eq!(shift.len(), d, "shift must have dimension d");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n * d).map(|_| rng.sample(StandardNormal)).collect()
    };
    let base = draw(&mut rng);
    let second = if paired { base.clone() } else { draw(&mut rng) };
    let plus: Vec<f64> = base
        .iter()
        .enumerate()
        .map(|(k, &x)| x + shift[k % d])
        .collect();
    let minus: Vec<f64> = second
        .iter()
        .enumerate()
        .map(|(k, &x)| x - shift[k % d])
        .collect();
    let make = |data: Vec<f64>| {
        Dataset::new(
            Array::matrix(n, d, data).expect("sized correctly"),
            Provenance::GaussianShift,
            Normalization::Raw,
        )
    };
    (make(plus), make(minus))
}

/// Gaussian mixture with explicit centers: points cycle through the
/// clusters with isotropic noise of the given standard deviation. The toy
/// generative target.
pub fn gaussian_mixture(n: usize, centers: &[Vec<f64>], std: f64, seed: u64) -> Dataset {
    assert!(!centers.is_empty(), "need at least one cluster center");
    let d = centers[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * d);
    for k in 0..n {
        let center = &centers[k % centers.len()];
        for c in center {
            let jitter: f64 = rng.sample::<f64, _>(StandardNormal);
            data.push(c + std * jitter);
        }
    }
    Dataset::new(
        Array::matrix(n, d, data).expect("sized correctly"),
        Provenance::SyntheticMixture,
        Normalization::Raw,
    )
}

/// Seeded Gaussian-mixture surrogate for an image dataset: `clusters`
/// centers drawn uniformly in [0.2, 0.8]^d, points jittered around them
/// and clamped to [0, 1] so the scale matches zero-one normalized pixels.
pub fn synthetic_mixture(n: usize, d: usize, clusters: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..clusters.max(1))
        .map(|_| (0..d).map(|_| rng.gen_range(0.2..0.8)).collect())
        .collect();
    let mut data = Vec::with_capacity(n * d);
    for k in 0..n {
        let center = &centers[k % centers.len()];
        for c in center {
            let jitter: f64 = rng.sample::<f64, _>(StandardNormal) * 0.15;
            data.push((c + jitter).clamp(0.0, 1.0));
        }
    }
    Dataset::new(
        Array::matrix(n, d, data).expect("sized correctly"),
        Provenance::SyntheticMixture,
        Normalization::ZeroOne,
    )
}

// ---- IDX format ----

const IDX_MAGIC_LABELS: u32 = 0x0000_0801;
const IDX_MAGIC_IMAGES: u32 = 0x0000_0803;

/// A parsed IDX file: raw 0-255 values preserved exactly, dims from the
/// big-endian header. Images flatten to one row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxData {
    pub magic: u32,
    pub dims: Vec<usize>,
    /// Raw byte values as f64 (0..=255), row-major.
    pub values: Array,
}

/// Parse an IDX byte buffer: big-endian magic (0x801 labels, 0x803
/// images), big-endian u32 dimension sizes, unsigned-byte payload.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    if bytes.len() < 4 {
        return Err(DataError::Truncated {
            expected: 4,
            actual: bytes.len(),
        });
    }
    let magic = u32::from_be_bytes(bytes[0..4].try_into().expect("4 bytes"));
    let ndims = match magic {
        IDX_MAGIC_LABELS => 1,
        IDX_MAGIC_IMAGES => 3,
        other => return Err(DataError::BadMagic(other)),
    };
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(DataError::Truncated {
            expected: header,
            actual: bytes.len(),
        });
    }
    let mut dims = Vec::with_capacity(ndims);
    for k in 0..ndims {
        let off = 4 + 4 * k;
        dims.push(u32::from_be_bytes(bytes[off..off + 4].try_into().expect("4 bytes")) as usize);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(DataError::DimOverflow)?;
    let expected = header + count;
    if bytes.len() != expected {
        return Err(DataError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let payload = &bytes[header..];
    let values = if ndims == 1 {
        Array::vector(payload.iter().map(|&b| b as f64).collect())
    } else {
        let rows = dims[0];
        let cols = count / dims[0].max(1);
        Array::matrix(rows, cols, payload.iter().map(|&b| b as f64).collect())?
    };
    Ok(IdxData {
        magic,
        dims,
        values,
    })
}

/// Re-serialize parsed IDX data; inverse of [`parse_idx`] byte for byte.
pub fn serialize_idx(data: &IdxData) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * data.dims.len() + data.values.len());
    out.extend_from_slice(&data.magic.to_be_bytes());
    for &d in &data.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for &v in data.values.data() {
        out.push(v as u8);
    }
    out
}

/// Load an IDX image file as a dataset with the given normalization.
pub fn load_idx_images(path: &std::path::Path, normalization: Normalization) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    let parsed = parse_idx(&bytes)?;
    let data: Vec<f64> = parsed
        .values
        .data()
        .iter()
        .map(|&v| normalization.apply_to_byte(v as u8))
        .collect();
    let points = Array::matrix(parsed.values.rows(), parsed.values.cols(), data)?;
    Ok(Dataset::new(points, Provenance::Mnist, normalization))
}

/// Disjoint random halves, deterministic from seed. The union is the
/// original multiset.
pub fn split_halves(ds: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    if ds.len() < 2 {
        return Err(DataError::TooSmall {
            needed: 2,
            have: ds.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    indices.shuffle(&mut rng);
    let half = ds.len() / 2;
    let (first, second) = indices.split_at(half);
    Ok((ds.subset(first), ds.subset(second)))
}

/// How a stream refills once an epoch is exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplacementPolicy {
    /// Fresh shuffle each epoch; within one epoch no point repeats.
    WithoutReplacement { reshuffle: bool },
    /// Independent uniform draws every batch.
    WithReplacement,
}

/// Deterministic minibatch source over one dataset.
#[derive(Debug, Clone)]
pub struct BatchStream {
    dataset: Dataset,
    batch_size: usize,
    seed: u64,
    policy: ReplacementPolicy,
    epoch: u64,
    cursor: usize,
    order: Vec<usize>,
    rng: ChaCha8Rng,
}

impl BatchStream {
    pub fn new(
        dataset: Dataset,
        batch_size: usize,
        seed: u64,
        policy: ReplacementPolicy,
    ) -> Result<Self> {
        if matches!(policy, ReplacementPolicy::WithoutReplacement { .. })
            && batch_size > dataset.len()
        {
            return Err(DataError::BatchTooLarge {
                batch: batch_size,
                dataset: dataset.len(),
            });
        }
        let mut stream = BatchStream {
            dataset,
            batch_size,
            seed,
            policy,
            epoch: 0,
            cursor: 0,
            order: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        stream.reshuffle();
        Ok(stream)
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn reshuffle(&mut self) {
        // Each epoch reshuffles with a key derived from (seed, epoch) so
        // position in the stream fully determines the sample.
        let key = self.seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(self.epoch + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        self.order = (0..self.dataset.len()).collect();
        self.order.shuffle(&mut rng);
        self.cursor = 0;
    }

    /// Draw the next uniform-weighted minibatch measure.
    pub fn next_batch(&mut self) -> Result<DiscreteMeasure> {
        let indices = match self.policy {
            ReplacementPolicy::WithReplacement => (0..self.batch_size)
                .map(|_| self.rng.gen_range(0..self.dataset.len()))
                .collect::<Vec<_>>(),
            ReplacementPolicy::WithoutReplacement { reshuffle } => {
                if self.cursor + self.batch_size > self.order.len() {
                    if !reshuffle {
                        return Err(DataError::Exhausted);
                    }
                    self.epoch += 1;
                    self.reshuffle();
                }
                let slice = &self.order[self.cursor..self.cursor + self.batch_size];
                self.cursor += self.batch_size;
                slice.to_vec()
            }
        };
        let subset = self.dataset.subset(&indices);
        Ok(DiscreteMeasure::uniform(subset.points().clone())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn gaussian_pair_determinism_and_pairing() {
        let (a1, b1) = gaussian_shift_pair(100, 2, &[1.0, 1.0], 9, false);
        let (a2, b2) = gaussian_shift_pair(100, 2, &[1.0, 1.0], 9, false);
        assert_eq!(a1.points().data(), a2.points().data());
        assert_eq!(b1.points().data(), b2.points().data());

        // Paired with zero shift: the two clouds coincide.
        let (p, q) = gaussian_shift_pair(50, 3, &[0.0, 0.0, 0.0], 4, true);
        assert_eq!(p.points().data(), q.points().data());

        // Paired with shift v: difference is exactly 2v per coordinate.
        let (p, q) = gaussian_shift_pair(10, 2, &[1.0, 1.0], 4, true);
        for (a, b) in p.points().data().iter().zip(q.points().data()) {
            assert!((a - b - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn idx_header_arithmetic() {
        // 2 images of 28x28: header 00000803, dims (2, 28, 28), payload
        // 1568 bytes -> 2x784 array.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        for d in [2u32, 28, 28] {
            bytes.extend_from_slice(&d.to_be_bytes());
        }
        bytes.extend((0..1568u32).map(|v| (v % 251) as u8));
        let parsed = parse_idx(&bytes).unwrap();
        assert_eq!(parsed.values.shape(), &[2, 784]);
        assert_eq!(parsed.dims, vec![2, 28, 28]);

        // Round trip is exact.
        assert_eq!(serialize_idx(&parsed), bytes);
    }

    #[test]
    fn idx_truncation_reports_counts() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        for d in [2u32, 28, 28] {
            bytes.extend_from_slice(&d.to_be_bytes());
        }
        bytes.extend(std::iter::repeat_n(7u8, 1000));
        match parse_idx(&bytes) {
            Err(DataError::Truncated { expected, actual }) => {
                assert_eq!(expected, 16 + 1568);
                assert_eq!(actual, 16 + 1000);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn idx_bad_magic() {
        let bytes = 0xdead_beefu32.to_be_bytes().to_vec();
        assert!(matches!(parse_idx(&bytes), Err(DataError::BadMagic(0xdeadbeef))));
    }

    #[test]
    fn idx_labels_are_one_dimensional() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        bytes.extend_from_slice(&5u32.to_be_bytes());
        bytes.extend_from_slice(&[0, 1, 2, 3, 4]);
        let parsed = parse_idx(&bytes).unwrap();
        assert_eq!(parsed.values.shape(), &[5]);
        assert_eq!(serialize_idx(&parsed), bytes);
    }

    #[test]
    fn halves_are_disjoint_and_cover() {
        let ds = synthetic_mixture(512, 4, 10, 3);
        let (a, b) = split_halves(&ds, 17).unwrap();
        assert_eq!(a.len(), 256);
        assert_eq!(b.len(), 256);
        // Union of the halves is the original multiset of rows.
        let row_key = |r: &[f64]| -> String {
            r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
        };
        let mut original: Vec<String> = (0..ds.len()).map(|i| row_key(ds.point(i))).collect();
        let mut pieces: Vec<String> = (0..a.len())
            .map(|i| row_key(a.point(i)))
            .chain((0..b.len()).map(|i| row_key(b.point(i))))
            .collect();
        original.sort();
        pieces.sort();
        assert_eq!(original, pieces);
    }

    #[test]
    fn batches_are_uniform_and_deterministic() {
        let ds = synthetic_mixture(256, 3, 5, 21);
        let mut s1 = BatchStream::new(
            ds.clone(),
            64,
            5,
            ReplacementPolicy::WithoutReplacement { reshuffle: true },
        )
        .unwrap();
        let mut s2 = BatchStream::new(
            ds,
            64,
            5,
            ReplacementPolicy::WithoutReplacement { reshuffle: true },
        )
        .unwrap();
        for _ in 0..10 {
            let a = s1.next_batch().unwrap();
            let b = s2.next_batch().unwrap();
            assert_eq!(a.points().data(), b.points().data());
            assert_eq!(a.len(), 64);
            assert!((a.weights()[0] - 1.0 / 64.0).abs() < 1e-15);
        }
    }

    #[test]
    fn epoch_partitions_dataset() {
        let ds = synthetic_mixture(128, 2, 4, 8);
        let mut stream = BatchStream::new(
            ds,
            32,
            1,
            ReplacementPolicy::WithoutReplacement { reshuffle: true },
        )
        .unwrap();
        let mut seen: HashSet<String> = HashSet::new();
        for _ in 0..4 {
            let batch = stream.next_batch().unwrap();
            for i in 0..batch.len() {
                let key: String = batch
                    .point(i)
                    .iter()
                    .map(|v| format!("{v:?}"))
                    .collect::<Vec<_>>()
                    .join(",");
                assert!(seen.insert(key), "point repeated within an epoch");
            }
        }
        assert_eq!(seen.len(), 128);
    }

    #[test]
    fn full_dataset_batch_is_the_dataset_measure() {
        let ds = synthetic_mixture(64, 2, 4, 8);
        let mut stream = BatchStream::new(
            ds.clone(),
            64,
            1,
            ReplacementPolicy::WithoutReplacement { reshuffle: true },
        )
        .unwrap();
        let batch = stream.next_batch().unwrap();
        assert_eq!(batch.len(), 64);
        // Same multiset of rows as the dataset.
        let mut batch_rows: Vec<Vec<u8>> = (0..64)
            .map(|i| batch.point(i).iter().flat_map(|v| v.to_le_bytes()).collect())
            .collect();
        let mut ds_rows: Vec<Vec<u8>> = (0..64)
            .map(|i| ds.point(i).iter().flat_map(|v| v.to_le_bytes()).collect())
            .collect();
        batch_rows.sort();
        ds_rows.sort();
        assert_eq!(batch_rows, ds_rows);
    }

    #[test]
    fn oversize_batch_rejected() {
        let ds = synthetic_mixture(16, 2, 2, 3);
        assert!(matches!(
            BatchStream::new(
                ds,
                32,
                1,
                ReplacementPolicy::WithoutReplacement { reshuffle: true }
            ),
            Err(DataError::BatchTooLarge { .. })
        ));
    }

    #[test]
    fn no_reshuffle_stream_exhausts() {
        let ds = synthetic_mixture(64, 2, 2, 3);
        let mut stream = BatchStream::new(
            ds,
            48,
            1,
            ReplacementPolicy::WithoutReplacement { reshuffle: false },
        )
        .unwrap();
        stream.next_batch().unwrap();
        assert!(matches!(stream.next_batch(), Err(DataError::Exhausted)));
    }
}
