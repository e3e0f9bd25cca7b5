//! Run configuration, dataset simulation, on-disk format and ground-truth
//! comparison.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{canonicalize, sample_rotations, FamilyRotation, GeometryError, RigidMotion, Rotation, Sign};
use crate::moments::MomentTable;
use crate::momentfit::CoefficientTable2;
use crate::optics::{fourier_image, FourierImage, GridSpec, OpticsConfig, OpticsError};
use crate::phantom::{GaussianBlob, Phantom, PhantomError};
use crate::recovery::{epsilon_from_moments, per_order_relative_error, Epsilon, Mode, RecoveryResult, RecoveryTolerances};
use crate::series::{data_series, SeriesError};

pub const FORMAT_VERSION: u32 = 1;
pub const MAX_ORDER: usize = 12;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checksum mismatch for {0}")]
    Checksum(PathBuf),
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Phantom(#[from] PhantomError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> DatasetError + '_ {
    move |source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhantomSpec {
    Reference,
    Blobs { blobs: Vec<GaussianBlob> },
    /// JSON file holding a [`Phantom`]; relative paths resolve against the config file.
    File { path: PathBuf },
    /// First candidate passing the admissibility checks from a seeded stream.
    Random { seed: u64, count: usize },
}

impl PhantomSpec {
    pub fn build(&self, k: f64) -> Result<Phantom, DatasetError> {
        match self {
            PhantomSpec::Reference => Ok(Phantom::reference()),
            PhantomSpec::Blobs { blobs } => Ok(Phantom::new(blobs.clone())?),
            PhantomSpec::File { path } => {
                let text = fs::read_to_string(path).map_err(io_err(path))?;
                let p: Phantom = serde_json::from_str(&text).map_err(json_err(path))?;
                p.validate()?;
                Ok(p)
            }
            PhantomSpec::Random { seed, count } => Ok(Phantom::from_rejection_sampling(*seed, *count, k).0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub phantom: PhantomSpec,
    /// Simulate the mirror image, with conjugated uniform rotations.
    pub mirror: bool,
    pub optics: OpticsConfig,
    pub n_uniform: usize,
    pub n_family: usize,
    /// Explicit family angles (all `S₁ = +1`); replaces the random family.
    pub family_thetas: Option<Vec<f64>>,
    pub max_shift: f64,
    pub grid: Option<GridSpec>,
    /// Recovery order M.
    pub order: usize,
    /// Order of the stored coefficient tables; defaults to `order`.
    pub coefficient_order: Option<usize>,
    pub mode: Mode,
    pub seed: u64,
    pub tolerances: RecoveryTolerances,
    pub demo: DemoConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    /// Rotations in the paired hand datasets.
    pub rotations: usize,
    /// Curved-model comparison ring, as a fraction of k.
    pub ring: f64,
    /// Starting wavenumber of the flat-limit table; defaults to `4k`.
    pub flat_k0: Option<f64>,
    pub flat_xi: [f64; 2],
    pub flat_steps: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            rotations: 64,
            ring: 0.1,
            flat_k0: None,
            flat_xi: [0.3, 0.2],
            flat_steps: 4,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            phantom: PhantomSpec::Reference,
            mirror: false,
            optics: OpticsConfig::default(),
            n_uniform: 512,
            n_family: 32,
            family_thetas: None,
            max_shift: 0.5,
            grid: None,
            order: 5,
            coefficient_order: None,
            mode: Mode::Oracle,
            seed: 1,
            tolerances: RecoveryTolerances::default(),
            demo: DemoConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(json_err(path))?;
        if let PhantomSpec::File { path: p } = &mut cfg.phantom {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn coefficient_order(&self) -> usize {
        self.coefficient_order.unwrap_or(self.order)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid.unwrap_or_else(|| GridSpec::default_for(&self.optics))
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        self.optics.validate()?;
        if !(3..=MAX_ORDER).contains(&self.order) {
            return Err(DatasetError::Config(format!("order {} outside [3, {MAX_ORDER}]", self.order)));
        }
        let co = self.coefficient_order();
        if !(self.order..=MAX_ORDER).contains(&co) {
            return Err(DatasetError::Config(format!(
                "coefficient order {co} outside [{}, {MAX_ORDER}]",
                self.order
            )));
        }
        let n_family = self.family_thetas.as_ref().map_or(self.n_family, Vec::len);
        if self.n_uniform + n_family == 0 {
            return Err(DatasetError::Config("dataset would be empty".into()));
        }
        if !(self.max_shift >= 0.0 && self.max_shift.is_finite()) {
            return Err(DatasetError::Config(format!("max_shift {} must be finite and ≥ 0", self.max_shift)));
        }
        if self.mode == Mode::Image {
            self.grid().validate(&self.optics)?;
        }
        Ok(())
    }
}

/// One pose-blinded observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: usize,
    pub coefficients: Option<CoefficientTable2>,
    pub image: Option<FourierImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthPose {
    pub id: usize,
    pub pose: RigidMotion,
    pub family: Option<FamilyRotation>,
}

/// Sealed ground truth; never read by recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    /// The centered phantom the poses act on.
    pub phantom: Phantom,
    pub canonical_moments: MomentTable,
    pub canonical_motion: RigidMotion,
    pub epsilon: Epsilon,
    pub hand: Sign,
    pub seed: u64,
    pub poses: Vec<TruthPose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub optics: OpticsConfig,
    pub coefficient_order: usize,
    pub grid: Option<GridSpec>,
    pub records: Vec<DatasetRecord>,
    pub truth: Truth,
}

fn disc_point(rng: &mut impl Rng, radius: f64) -> [f64; 2] {
    if radius == 0.0 {
        return [0.0, 0.0];
    }
    loop {
        let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if p[0] * p[0] + p[1] * p[1] <= 1.0 {
            return [p[0] * radius, p[1] * radius];
        }
    }
}

/// Family angles: the anchors `0, π/2, π, 3π/2`, about one eighth with
/// `S₁ = −1` at arbitrary angles, the rest inside `0.9 ε` of `0` or `π`.
fn family_angles(n: usize, epsilon: f64, rng: &mut impl Rng) -> Vec<FamilyRotation> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let anchors = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2];
    let mut out: Vec<FamilyRotation> = anchors.iter().take(n).map(|&t| FamilyRotation::new(Sign::Plus, t)).collect();
    let negatives = n.saturating_sub(out.len()) / 8;
    for _ in 0..negatives {
        out.push(FamilyRotation::new(Sign::Minus, rng.gen_range(0.0..std::f64::consts::TAU)));
    }
    let lobe = 0.9 * epsilon;
    while out.len() < n {
        let offset = if lobe > 0.0 { rng.gen_range(-lobe..lobe) } else { 0.0 };
        let centre = if rng.gen_bool(0.5) { 0.0 } else { PI };
        out.push(FamilyRotation::new(Sign::Plus, centre + offset));
    }
    out
}

/// Poses, payloads and sealed truth for a configuration.
pub fn simulate(config: &RunConfig) -> Result<Dataset, DatasetError> {
    config.validate()?;
    let optics = config.optics;
    let mut base = config.phantom.build(optics.k)?;
    if config.mirror {
        base = base.mirror();
    }
    let phantom = base.centered();
    let coefficient_order = config.coefficient_order();
    let moments = phantom.moments_analytic(coefficient_order);
    let (canonical_motion, canonical_moments) = canonicalize(&moments)?;
    let epsilon = epsilon_from_moments(&canonical_moments, &optics, config.tolerances.exclusion);
    let g = canonical_motion.rotation;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let uniform_seed: u64 = rng.gen();
    let mut rotations: Vec<(Rotation, Option<FamilyRotation>)> = sample_rotations(config.n_uniform, uniform_seed)
        .into_iter()
        .map(|r| (if config.mirror { r.mirror_conjugate() } else { r }, None))
        .collect();
    let family = match &config.family_thetas {
        Some(thetas) => thetas.iter().map(|&t| FamilyRotation::new(Sign::Plus, t)).collect(),
        None => family_angles(config.n_family, epsilon.value, &mut rng),
    };
    rotations.extend(family.into_iter().map(|f| (f.rotation().compose(&g), Some(f))));
    rotations.shuffle(&mut rng);
    let poses: Vec<TruthPose> = rotations
        .into_iter()
        .enumerate()
        .map(|(id, (rotation, family))| {
            let [s1, s2] = disc_point(&mut rng, config.max_shift);
            TruthPose {
                id,
                pose: RigidMotion::new(rotation, [s1, s2, optics.c0]),
                family,
            }
        })
        .collect();

    let taylor = phantom.taylor_of_hat::<f64>(coefficient_order);
    let grid = (config.mode == Mode::Image).then(|| config.grid());
    let records = poses
        .par_iter()
        .map(|p| {
            let series = data_series(&taylor, &p.pose.rotation, p.pose.translation, &optics, coefficient_order)?;
            let image = match &grid {
                Some(g) => Some(fourier_image(&phantom, &p.pose, &optics, g)?),
                None => None,
            };
            Ok(DatasetRecord {
                id: p.id,
                coefficients: Some(CoefficientTable2::exact(&series)),
                image,
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;

    Ok(Dataset {
        optics,
        coefficient_order,
        grid,
        records,
        truth: Truth {
            hand: Sign::of(canonical_moments.get(2, 0, 1)),
            phantom,
            canonical_moments,
            canonical_motion,
            epsilon,
            seed: config.seed,
            poses,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub coefficients: Option<FileRef>,
    pub grid: Option<FileRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub optics: OpticsConfig,
    pub record_count: usize,
    pub coefficient_order: usize,
    pub has_coefficients: bool,
    pub has_grids: bool,
    /// Grid payloads: `n × n` complex samples, row-major, interleaved
    /// real/imaginary little-endian f64.
    pub grid: Option<GridSpec>,
    pub records: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct CoefficientFile {
    id: usize,
    coefficients: CoefficientTable2,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<FileRef, DatasetError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(io_err(&path))?;
    Ok(FileRef {
        name: name.to_string(),
        sha256: sha256_hex(bytes),
    })
}

fn read_checked(dir: &Path, file: &FileRef) -> Result<Vec<u8>, DatasetError> {
    if file.name.contains(['/', '\\']) || file.name.starts_with('.') {
        return Err(DatasetError::Format(format!("unsafe file name {}", file.name)));
    }
    let path = dir.join(&file.name);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    if sha256_hex(&bytes) != file.sha256 {
        return Err(DatasetError::Checksum(path));
    }
    Ok(bytes)
}

pub fn encode_grid(image: &FourierImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(image.samples.len() * 16);
    for v in &image.samples {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8], grid: GridSpec) -> Result<FourierImage, DatasetError> {
    let expected = grid.n * grid.n * 16;
    if bytes.len() != expected {
        return Err(DatasetError::Format(format!(
            "grid payload has {} bytes, {expected} expected",
            bytes.len()
        )));
    }
    let samples = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            num_complex::Complex::new(re, im)
        })
        .collect();
    Ok(FourierImage { grid, samples })
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Writes the manifest, one file per payload, and `truth.json`.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<DatasetManifest, DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let entries = dataset
        .records
        .par_iter()
        .map(|r| {
            let coefficients = match &r.coefficients {
                Some(table) => {
                    let file = CoefficientFile {
                        id: r.id,
                        coefficients: table.clone(),
                    };
                    Some(write_file(dir, &format!("record_{:06}.json", r.id), to_json_pretty(&file).as_bytes())?)
                }
                None => None,
            };
            let grid = match &r.image {
                Some(img) => Some(write_file(dir, &format!("record_{:06}.f64", r.id), &encode_grid(img))?),
                None => None,
            };
            Ok(ManifestEntry {
                id: r.id,
                coefficients,
                grid,
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        optics: dataset.optics,
        record_count: entries.len(),
        coefficient_order: dataset.coefficient_order,
        has_coefficients: entries.iter().all(|e| e.coefficients.is_some()),
        has_grids: entries.iter().all(|e| e.grid.is_some()),
        grid: dataset.grid,
        records: entries,
    };
    write_file(dir, MANIFEST_FILE, to_json_pretty(&manifest).as_bytes())?;
    write_file(dir, TRUTH_FILE, to_json_pretty(&dataset.truth).as_bytes())?;
    Ok(manifest)
}

/// Reads the manifest and every payload it lists, verifying checksums.
/// The truth file is not touched.
pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<DatasetRecord>), DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(json_err(&path))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(DatasetError::Format(format!("unsupported format version {}", manifest.format_version)));
    }
    if manifest.record_count != manifest.records.len() {
        return Err(DatasetError::Format(format!(
            "manifest lists {} records but declares {}",
            manifest.records.len(),
            manifest.record_count
        )));
    }
    manifest.optics.validate()?;
    let records = manifest
        .records
        .par_iter()
        .map(|e| {
            let coefficients = match &e.coefficients {
                Some(f) => {
                    let bytes = read_checked(dir, f)?;
                    let file: CoefficientFile = serde_json::from_slice(&bytes).map_err(json_err(&dir.join(&f.name)))?;
                    if file.id != e.id || !file.coefficients.is_consistent() {
                        return Err(DatasetError::Format(format!("record file {} is inconsistent", f.name)));
                    }
                    Some(file.coefficients)
                }
                None => None,
            };
            let image = match &e.grid {
                Some(f) => {
                    let grid = manifest
                        .grid
                        .ok_or_else(|| DatasetError::Format("grid payload without grid spec".into()))?;
                    Some(decode_grid(&read_checked(dir, f)?, grid)?)
                }
                None => None,
            };
            Ok(DatasetRecord {
                id: e.id,
                coefficients,
                image,
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    Ok((manifest, records))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, to_json_pretty(value)).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Per-order error, normalized by the largest true moment of that order.
    pub per_order: Vec<f64>,
    pub max_relative_error: f64,
    pub hand_truth: Sign,
    pub hand_recovered: Sign,
    pub hand_match: bool,
}

pub fn compare(truth: &Truth, result: &RecoveryResult) -> Comparison {
    let order = result.order.min(truth.canonical_moments.max_order());
    let per_order = per_order_relative_error(&truth.canonical_moments.truncated(order), &result.moments.truncated(order));
    Comparison {
        max_relative_error: per_order.iter().cloned().fold(0.0, f64::max),
        per_order,
        hand_truth: truth.hand,
        hand_recovered: result.hand,
        hand_match: truth.hand == result.hand,
    }
}
