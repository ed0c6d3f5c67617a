//! Synthetic shape datasets, normalization, registration pairs, and
//! point cloud file I/O.
//!
//! Generation is deterministic: every cloud draws from a ChaCha stream
//! seeded by `(dataset seed, class, index)`, so the same configuration
//! reproduces the same dataset bit for bit, and per-cloud generation is
//! independent of iteration order.

mod io;
mod shapes;

pub use io::{read_cloud, read_manifest, write_cloud, write_manifest, ManifestRow};
pub use shapes::{sample_surface, Primitive, CLASS_NAMES};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{GeometryError, PointCloud};
use crate::networks::Rotation;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("unknown primitive {0:?}")]
    UnknownPrimitive(String),
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error("unknown point cloud format {0:?}")]
    UnknownFormat(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("vertex count mismatch: header declares {declared}, body has {actual}")]
    VertexCount { declared: usize, actual: usize },
    #[error("cannot normalize: all points identical")]
    ZeroScale,
    #[error("need at least {minimum} points, got {actual}")]
    TooFewPoints { minimum: usize, actual: usize },
    #[error("rotation range {0} degrees exceeds 180")]
    RotationRange(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Translate the centroid to the origin and scale the farthest point to
/// unit radius. Errors when all points coincide.
pub fn normalize(cloud: &PointCloud) -> Result<PointCloud> {
    let c = cloud.centroid();
    let mut centered: Vec<[f64; 3]> = cloud
        .points()
        .iter()
        .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
        .collect();
    let radius = centered
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .fold(0.0, f64::max);
    if radius < 1e-12 {
        return Err(DataError::ZeroScale);
    }
    for p in &mut centered {
        for v in p.iter_mut() {
            *v /= radius;
        }
    }
    Ok(PointCloud::new(centered)?)
}

// ---------------------------------------------------------------------------
// Shape specs and cloud generation
// ---------------------------------------------------------------------------

/// Everything needed to deterministically generate one cloud.
#[derive(Clone, Debug)]
pub struct ShapeSpec {
    pub class_id: usize,
    pub primitive: Primitive,
    pub jitter_sigma: f64,
    /// Per-axis scale drawn uniformly from this range before normalizing.
    pub scale_range: (f64, f64),
    pub seed: u64,
}

impl ShapeSpec {
    pub fn new(
        class_id: usize,
        jitter_sigma: f64,
        scale_range: (f64, f64),
        seed: u64,
    ) -> Result<Self> {
        Ok(ShapeSpec {
            class_id,
            primitive: Primitive::from_class_id(class_id)?,
            jitter_sigma,
            scale_range,
            seed,
        })
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one draw per call keeps the stream layout simple.
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Sample `n` points on the spec's primitive, apply anisotropic scale and
/// jitter, and normalize to zero centroid and unit max radius.
pub fn generate_cloud(spec: &ShapeSpec, n: usize) -> Result<PointCloud> {
    if n < 8 {
        return Err(DataError::TooFewPoints {
            minimum: 8,
            actual: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pts = shapes::sample_surface(spec.primitive, n, &mut rng);
    let (lo, hi) = spec.scale_range;
    let scale = if hi > lo {
        [
            rng.random_range(lo..hi),
            rng.random_range(lo..hi),
            rng.random_range(lo..hi),
        ]
    } else {
        [lo; 3]
    };
    for p in &mut pts {
        for (axis, v) in p.iter_mut().enumerate() {
            *v *= scale[axis];
        }
    }
    if spec.jitter_sigma > 0.0 {
        for p in &mut pts {
            for v in p.iter_mut() {
                *v += spec.jitter_sigma * gaussian(&mut rng);
            }
        }
    }
    normalize(&PointCloud::new(pts)?)
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(DataError::UnknownSplit(other.to_string())),
        }
    }
}

/// Disjoint, covering index lists produced by fixed fractions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split `count` indices by `(train, validation, test)` fractions.
/// Deterministic: leading indices train, then validation, then test, with
/// rounding remainders going to train.
pub fn make_split(count: usize, fractions: (f64, f64, f64)) -> DatasetSplit {
    let val = (count as f64 * fractions.1).floor() as usize;
    let test = (count as f64 * fractions.2).floor() as usize;
    let train = count - val - test;
    DatasetSplit {
        train: (0..train).collect(),
        validation: (train..train + val).collect(),
        test: (train + val..count).collect(),
    }
}

#[derive(Clone, Debug)]
pub struct DatasetConfig {
    pub classes: usize,
    pub clouds_per_class: usize,
    pub points: usize,
    pub jitter_sigma: f64,
    pub scale_range: (f64, f64),
    /// (train, validation, test) fractions of each class.
    pub split_fractions: (f64, f64, f64),
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            classes: 8,
            clouds_per_class: 240,
            points: 256,
            jitter_sigma: 0.02,
            scale_range: (0.7, 1.3),
            split_fractions: (0.85, 0.05, 0.10),
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    pub class_id: usize,
    pub split: Split,
}

pub struct Dataset {
    pub config: DatasetConfig,
    pub items: Vec<LabeledCloud>,
}

fn mix_seed(seed: u64, class: u64, index: u64) -> u64 {
    // FNV-1a over the three coordinates; one stream per cloud.
    let mut h: u64 = 0xcbf29ce484222325;
    for word in [seed, class, index] {
        for byte in word.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

impl Dataset {
    /// Generate the full dataset in memory. Per-cloud seeds derive from
    /// `(seed, class, index)`, so any subset regenerates identically.
    pub fn generate(config: DatasetConfig) -> Result<Self> {
        let split = make_split(config.clouds_per_class, config.split_fractions);
        let mut items = Vec::with_capacity(config.classes * config.clouds_per_class);
        for class in 0..config.classes {
            for index in 0..config.clouds_per_class {
                let spec = ShapeSpec::new(
                    class,
                    config.jitter_sigma,
                    config.scale_range,
                    mix_seed(config.seed, class as u64, index as u64),
                )?;
                let cloud = generate_cloud(&spec, config.points)?;
                let split = if split.train.contains(&index) {
                    Split::Train
                } else if split.validation.contains(&index) {
                    Split::Validation
                } else {
                    Split::Test
                };
                items.push(LabeledCloud {
                    cloud,
                    class_id: class,
                    split,
                });
            }
        }
        Ok(Dataset { config, items })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledCloud> {
        self.items.iter().filter(move |it| it.split == split)
    }

    /// Write every cloud as XYZ plus a manifest CSV into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut rows = Vec::with_capacity(self.items.len());
        let mut counters = vec![0usize; self.config.classes];
        for item in &self.items {
            let idx = counters[item.class_id];
            counters[item.class_id] += 1;
            let name = format!(
                "{}_{idx:04}.xyz",
                Primitive::from_class_id(item.class_id)?.name()
            );
            write_cloud(&dir.join(&name), &item.cloud)?;
            rows.push(ManifestRow {
                path: name,
                class_id: item.class_id,
                split: item.split,
            });
        }
        write_manifest(&dir.join("manifest.csv"), &rows)?;
        Ok(())
    }

    /// Load a dataset previously written by [`Dataset::save`].
    pub fn load(manifest: &Path, config: DatasetConfig) -> Result<Self> {
        let dir = manifest.parent().unwrap_or_else(|| Path::new("."));
        let rows = read_manifest(manifest)?;
        let mut items = Vec::with_capacity(rows.len());
        for row in rows {
            items.push(LabeledCloud {
                cloud: read_cloud(&dir.join(&row.path))?,
                class_id: row.class_id,
                split: row.split,
            });
        }
        Ok(Dataset { config, items })
    }
}

// ---------------------------------------------------------------------------
// Registration pairs
// ---------------------------------------------------------------------------

/// Rotate `template` by a rotation drawn from Euler angles uniform in
/// `±angle_range_deg` (intrinsic Z-Y-X). The source keeps the template's
/// point order; pair it with [`shuffle_points`] when index correspondence
/// must not leak to samplers.
pub fn make_registration_pair(
    template: &PointCloud,
    angle_range_deg: f64,
    seed: u64,
) -> Result<(PointCloud, Rotation)> {
    if angle_range_deg > 180.0 {
        return Err(DataError::RotationRange(angle_range_deg));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        if angle_range_deg == 0.0 {
            0.0
        } else {
            rng.random_range(-angle_range_deg..angle_range_deg)
                .to_radians()
        }
    };
    let (z, y, x) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
    let rotation = Rotation::from_euler_zyx(z, y, x);
    Ok((rotation.apply(template), rotation))
}

/// Deterministically permute a cloud's point order (Fisher-Yates).
pub fn shuffle_points(cloud: &PointCloud, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..cloud.len()).collect();
    for i in (1..idx.len()).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    cloud.subset(&idx).expect("permutation stays in range")
}

#[cfg(test)]
mod tests;
