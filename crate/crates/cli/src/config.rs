use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cascade_core::linalg::SolverOptions;
use cascade_core::{CouplingProfile, Precision, SystemParams, Truncation, Variant};
use serde::{Deserialize, Serialize};

/// Raised for anything wrong with the configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    WaveHeat,
    HeatWave,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ParamsConfig {
    pub length_L: f64,
    pub reaction_c: f64,
    pub horizon_T: f64,
    pub variant: VariantName,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub n_p: u32,
    pub n_h: u32,
    /// Number of grid points on `[0, L]` for mode evaluations.
    pub grid_points: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            n_p: 10,
            n_h: 10,
            grid_points: 101,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaScanConfig {
    pub beta0: f64,
    /// Left end of the indicator support on the b-line scan.
    pub a: f64,
    pub b_lo: f64,
    pub b_hi: f64,
    pub b_count: usize,
    pub n_max: u32,
    /// Scan the full `(a, b)` lattice instead of a single `b` line.
    pub lattice: bool,
    pub lattice_count: usize,
    pub refine_tol: f64,
}

impl Default for GammaScanConfig {
    fn default() -> Self {
        GammaScanConfig {
            beta0: 1.0,
            a: 0.0,
            b_lo: 0.0,
            b_hi: 1.0,
            b_count: 201,
            n_max: 2,
            lattice: false,
            lattice_count: 50,
            refine_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HumConfig {
    pub n_p: u32,
    pub n_h: u32,
    /// Random unit-norm init/target pairs.
    pub pairs: usize,
    pub seed: u64,
    /// Time samples for the control and trajectory tables.
    pub samples: usize,
}

impl Default for HumConfig {
    fn default() -> Self {
        HumConfig {
            n_p: 3,
            n_h: 6,
            pairs: 1,
            seed: 1,
            samples: 101,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoninvConfig {
    pub t: f64,
    pub n_lo: u32,
    pub n_hi: u32,
}

impl Default for NoninvConfig {
    fn default() -> Self {
        NoninvConfig {
            t: 1.25,
            n_lo: 5,
            n_hi: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsConfig {
    pub t_list: Vec<f64>,
    /// Sizes of the hyperbolic families in the gap table.
    pub n_list: Vec<u32>,
    /// Truncation for the observability and admissibility estimates.
    pub n_p: u32,
    pub n_h: u32,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        ConstantsConfig {
            t_list: vec![1.0, 1.5, 2.0, 2.5, 3.0],
            n_list: vec![1, 4, 16, 64],
            n_p: 4,
            n_h: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HwConfig {
    pub m_lo: u64,
    pub m_hi: u64,
    /// Rows of the Gamma_m table: `-m_table..=m_table`.
    pub m_table: i64,
    pub n_p: u32,
    pub n_h: u32,
    pub seed: u64,
}

impl Default for HwConfig {
    fn default() -> Self {
        HwConfig {
            m_lo: 16,
            m_hi: 512,
            m_table: 20,
            n_p: 2,
            n_h: 3,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: ParamsConfig,
    pub profile: CouplingProfile,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Worker threads for internal sweeps; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
    /// Ceiling of the precision ladder: "double" or "double_double".
    #[serde(default = "default_precision")]
    pub precision: Precision,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub gamma_scan: GammaScanConfig,
    #[serde(default)]
    pub hum: HumConfig,
    #[serde(default)]
    pub noninv: NoninvConfig,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub hw: HwConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("cascade-out")
}

fn default_precision() -> Precision {
    Precision::DoubleDouble
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            params: ParamsConfig {
                length_L: 1.0,
                reaction_c: 0.0,
                horizon_T: 2.5,
                variant: VariantName::WaveHeat,
            },
            profile: CouplingProfile::Constant { beta0: 1.0 },
            output_dir: default_output(),
            workers: 0,
            precision: default_precision(),
            spectrum: Default::default(),
            gamma_scan: Default::default(),
            hum: Default::default(),
            noninv: Default::default(),
            constants: Default::default(),
            hw: Default::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn defaults_toml() -> String {
        toml::to_string_pretty(&ExperimentConfig::default()).expect("defaults serialize")
    }

    pub fn system_params(&self) -> anyhow::Result<SystemParams> {
        let variant = match self.params.variant {
            VariantName::WaveHeat => Variant::WaveHeat,
            VariantName::HeatWave => Variant::HeatWave,
        };
        SystemParams::new(self.params.length_L, self.params.reaction_c, self.params.horizon_T, variant).map_err(|e| ConfigError(e.to_string()).into())
    }

    /// Precision ceiling after the `CASCADE_PRECISION` override.
    pub fn solver_options(&self) -> anyhow::Result<SolverOptions> {
        let mut opts = SolverOptions {
            max_precision: self.precision,
            ..Default::default()
        };
        if let Ok(v) = std::env::var("CASCADE_PRECISION") {
            opts.max_precision = v.parse().map_err(|e: String| ConfigError(format!("CASCADE_PRECISION: {e}")))?;
        }
        Ok(opts)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let p = self.system_params()?;
        self.profile.validate(p.length_l).map_err(|e| ConfigError(e.to_string()))?;
        let err = |m: String| -> anyhow::Result<()> { Err(ConfigError(m).into()) };
        if self.spectrum.grid_points < 2 {
            return err("spectrum.grid_points: need at least 2".into());
        }
        let g = &self.gamma_scan;
        if !(g.b_count >= 2 && g.lattice_count >= 2) {
            return err("gamma_scan.b_count, gamma_scan.lattice_count: need at least 2".into());
        }
        if !(g.refine_tol > 0.0) || g.n_max == 0 {
            return err("gamma_scan.refine_tol, gamma_scan.n_max: must be positive".into());
        }
        if self.hum.samples < 2 {
            return err("hum.samples: need at least 2".into());
        }
        let nv = &self.noninv;
        if !(nv.t > 0.0 && nv.t < p.horizon_t) {
            return err(format!("noninv.t: need 0 < t < horizon_T, got {}", nv.t));
        }
        if nv.n_lo == 0 || nv.n_hi < nv.n_lo + 2 {
            return err("noninv.n_lo, noninv.n_hi: need 1 <= n_lo and n_hi >= n_lo + 2".into());
        }
        if self.constants.t_list.iter().any(|t| !(*t > 0.0)) {
            return err("constants.t_list: horizons must be positive".into());
        }
        if self.hw.m_hi < 10 * self.hw.m_lo.max(16) {
            return err("hw.m_lo, hw.m_hi: need m_hi >= 10 * max(m_lo, 16)".into());
        }
        if self.hw.m_table < 0 {
            bail!(ConfigError("hw.m_table: must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn hum_truncation(&self) -> Truncation {
        Truncation::new(self.hum.n_p, self.hum.n_h)
    }
}
