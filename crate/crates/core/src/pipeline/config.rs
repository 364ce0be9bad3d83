use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal_form::FitMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    pub geometry: GeometryConfig,
    pub normalform: NormalFormConfig,
    #[serde(default)]
    pub forcing: Option<ForcingConfig>,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub orderscan: Option<OrderScanConfig>,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
    /// Seed for every random draw (noise injection).
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    /// CSV trajectories (`t,ch0,ch1,...`), paths relative to the config file.
    Csv { files: Vec<CsvInput> },
    Synth(SynthInput),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvInput {
    pub path: PathBuf,
    pub role: Role,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthInput {
    pub system: SystemConfig,
    /// Polynomial observable of the state; the full state when absent.
    #[serde(default)]
    pub observable: Option<ObservableConfig>,
    pub dt: f64,
    pub trajectories: Vec<TrajectorySpec>,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    StuartLandau {
        alpha0: f64,
        beta: f64,
        gamma: f64,
        omega0: f64,
    },
    Duffing {
        damping: f64,
        stiffness: f64,
        beta: f64,
    },
    ModalLinear {
        /// `[re, im]` pairs; complex ones in adjacent conjugate pairs.
        eigenvalues: Vec<[f64; 2]>,
    },
    SlowFast {
        slow: [f64; 2],
        fast: Vec<[f64; 2]>,
        #[serde(default = "one")]
        quadratic: f64,
        cubic: [f64; 2],
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> f64 {
    1.0
}

impl SystemConfig {
    pub fn slow_fast_spec(&self) -> Option<crate::synth::SlowFastSpec> {
        match self {
            SystemConfig::SlowFast {
                slow,
                fast,
                quadratic,
                cubic,
                seed,
            } => Some(crate::synth::SlowFastSpec {
                slow: Complex64::new(slow[0], slow[1]),
                fast: fast.iter().map(|f| Complex64::new(f[0], f[1])).collect(),
                quadratic: *quadratic,
                cubic: Complex64::new(cubic[0], cubic[1]),
                seed: *seed,
            }),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub degree: usize,
    pub channels: usize,
    /// `(channel, exponent, coefficient)` triples.
    pub terms: Vec<(usize, Vec<u32>, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub role: Role,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation as a fraction of each channel's max |value|.
    pub level: f64,
    #[serde(default = "train_only")]
    pub roles: Vec<Role>,
}

fn train_only() -> Vec<Role> {
    vec![Role::Train]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(default = "one_usize")]
    pub p: usize,
    #[serde(default = "one_usize")]
    pub shift: usize,
    /// Use `p = 2d + 1` (single channel) instead of `p`.
    #[serde(default)]
    pub auto: bool,
}

fn one_usize() -> usize {
    1
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            p: 1,
            shift: 1,
            auto: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub d: usize,
    #[serde(rename = "M")]
    pub order: usize,
    #[serde(default)]
    pub mode: GeometryMode,
    #[serde(default)]
    pub ridge: f64,
    #[serde(default)]
    pub refine_iterations: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryMode {
    #[default]
    Default,
    /// Rows of the `p x d` projection matrix.
    FixedProjection(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalFormConfig {
    #[serde(rename = "N")]
    pub order: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub mode: FitMode,
    /// Linear part fitted on samples with `|eta| <= cutoff * max |eta|`.
    #[serde(default = "one")]
    pub cutoff: f64,
    /// Polynomial order of the linear-part regression; defaults to `N`.
    #[serde(default)]
    pub regression_order: Option<usize>,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

fn default_delta() -> f64 {
    1e-8
}
fn default_iterations() -> usize {
    500
}
fn default_rel_tol() -> f64 {
    1e-9
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    /// Explicit forcing amplitudes.
    #[serde(default)]
    pub amplitudes: Vec<f64>,
    /// Calibration points `(Omega, rho0)` each yielding an amplitude.
    #[serde(default)]
    pub calibration: Vec<CalibrationPoint>,
    /// Amplitude grid for the sweep; defaults to 400 points up to 1.5x the
    /// largest training amplitude.
    #[serde(default)]
    pub rho_grid: Option<GridSpec>,
    /// Forcing frequencies for the fixed-frequency table `frc_omega.csv`.
    #[serde(default)]
    pub omega_grid: Option<GridSpec>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationPoint {
    #[serde(rename = "Omega")]
    pub omega: f64,
    pub rho0: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.min];
        }
        (0..self.count)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub directory: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: default_out() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderScanConfig {
    pub orders: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "one_usize")]
    pub m: usize,
    #[serde(default = "default_oracle_order")]
    pub order: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Relative tolerance on the polar coefficients.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_oracle_order() -> usize {
    7
}
fn default_threshold() -> f64 {
    0.02
}

pub const MAX_DIM: usize = 16;
pub const MAX_ORDER: usize = 15;
pub const MAX_EMBEDDING: usize = 512;

impl PipelineConfig {
    /// Reads a config; relative CSV paths are resolved against the config's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if let InputConfig::Csv { files } = &mut cfg.input {
            let base = path.parent().unwrap_or(Path::new("."));
            for f in files.iter_mut() {
                if f.path.is_relative() {
                    f.path = base.join(&f.path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.d == 0 || g.d > MAX_DIM {
            return Err(Error::arg(format!("geometry.d must be in 1..={MAX_DIM}")));
        }
        if g.order == 0 || g.order > MAX_ORDER {
            return Err(Error::arg(format!("geometry.M must be in 1..={MAX_ORDER}")));
        }
        if self.normalform.order < 2 || self.normalform.order > MAX_ORDER {
            return Err(Error::arg(format!("normalform.N must be in 2..={MAX_ORDER}")));
        }
        if !self.embedding.auto && (self.embedding.p == 0 || self.embedding.p > MAX_EMBEDDING) {
            return Err(Error::arg(format!("embedding.p must be in 1..={MAX_EMBEDDING}")));
        }
        if self.embedding.shift == 0 {
            return Err(Error::arg("embedding.shift must be positive"));
        }
        if !(self.normalform.cutoff > 0.0) {
            return Err(Error::arg("normalform.cutoff must be positive"));
        }
        match &self.input {
            InputConfig::Csv { files } => {
                if files.is_empty() {
                    return Err(Error::arg("no input files"));
                }
            }
            InputConfig::Synth(s) => {
                if !(s.dt > 0.0) {
                    return Err(Error::arg("synth.dt must be positive"));
                }
                if s.trajectories.is_empty() {
                    return Err(Error::arg("no trajectories to simulate"));
                }
            }
        }
        let roles: Vec<Role> = match &self.input {
            InputConfig::Csv { files } => files.iter().map(|f| f.role).collect(),
            InputConfig::Synth(s) => s.trajectories.iter().map(|t| t.role).collect(),
        };
        if !roles.contains(&Role::Train) {
            return Err(Error::arg("at least one trajectory must have role 'train'"));
        }
        Ok(())
    }
}
