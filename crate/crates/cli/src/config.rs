use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Parser;
use dpg_core::amg::AmgParams;
use dpg_core::mesh::ElementKind;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("bad mesh spec `{0}`: expected cartesian:NX,NY,tri|quad or file:PATH")]
    MeshSpec(String),
    #[error("a contrast coefficient needs an explicit --seed")]
    ContrastWithoutSeed,
    #[error("the reduced_order study needs a triangle mesh")]
    ReducedOrderNeedsTriangles,
    #[error("test order {r} is below trial order {p}")]
    TestOrder { p: usize, r: usize },
    #[error("trial order {0} is not supported (1..=3)")]
    Order(usize),
    #[error("contrast must be positive and finite, got {0}")]
    Contrast(f64),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MeshSource {
    Cartesian { nx: usize, ny: usize, kind: ElementKind },
    File { path: PathBuf },
}

impl FromStr for MeshSource {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let bad = || ConfigError::MeshSpec(s.to_string());
        if let Some(rest) = s.strip_prefix("cartesian:") {
            let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            let nx = parts[0].parse().map_err(|_| bad())?;
            let ny = parts[1].parse().map_err(|_| bad())?;
            let kind = parts[2].parse().map_err(|_| bad())?;
            Ok(MeshSource::Cartesian { nx, ny, kind })
        } else if let Some(path) = s.strip_prefix("file:") {
            if path.is_empty() {
                return Err(bad());
            }
            Ok(MeshSource::File { path: PathBuf::from(path) })
        } else {
            Err(bad())
        }
    }
}

impl fmt::Display for MeshSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshSource::Cartesian { nx, ny, kind } => write!(f, "cartesian:{nx},{ny},{kind}"),
            MeshSource::File { path } => write!(f, "file:{}", path.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KappaSpec {
    Constant { value: f64 },
    /// `κ = 1` or `κ₀` with probability ½ on each element.
    Contrast { kappa0: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PrecondChoice {
    Ideal,
    Practical,
    None,
}

impl fmt::Display for PrecondChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecondChoice::Ideal => "ideal",
            PrecondChoice::Practical => "practical",
            PrecondChoice::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Study {
    Solve,
    #[value(name = "h_p_table")]
    #[serde(rename = "h_p_table")]
    HPTable,
    ReducedOrder,
    Contrast,
    VerifySuite,
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Study::Solve => "solve",
            Study::HPTable => "h_p_table",
            Study::ReducedOrder => "reduced_order",
            Study::Contrast => "contrast",
            Study::VerifySuite => "verify_suite",
        })
    }
}

/// Right-hand side of `−div(κ∇u) = f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    One,
    Zero,
    Sine,
}

impl Source {
    pub fn eval(self, x: [f64; 2]) -> f64 {
        use std::f64::consts::PI;
        match self {
            Source::One => 1.0,
            Source::Zero => 0.0,
            Source::Sine => 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub refinements: usize,
    pub p: usize,
    pub r: Option<usize>,
    pub kappa: KappaSpec,
    pub rtol: f64,
    pub maxit: usize,
    pub precond: PrecondChoice,
    pub study: Study,
    pub source: Source,
    pub amg: AmgParams,
    pub seed: u64,
    pub out_json: Option<PathBuf>,
    pub export_matrices: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mesh: MeshSource::Cartesian { nx: 2, ny: 2, kind: ElementKind::Quadrilateral },
            refinements: 0,
            p: 1,
            r: None,
            kappa: KappaSpec::Constant { value: 1.0 },
            rtol: 1e-6,
            maxit: 500,
            precond: PrecondChoice::Practical,
            study: Study::Solve,
            source: Source::One,
            amg: AmgParams::default(),
            seed: 0,
            out_json: None,
            export_matrices: None,
        }
    }
}

impl RunConfig {
    pub fn test_order(&self) -> usize {
        self.r.unwrap_or(self.p + 1)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=3).contains(&self.p) {
            return Err(ConfigError::Order(self.p));
        }
        if let Some(r) = self.r {
            if r < self.p {
                return Err(ConfigError::TestOrder { p: self.p, r });
            }
            if r > 4 {
                return Err(ConfigError::Invalid(format!("test order {r} is not supported (max 4)")));
            }
        }
        if let KappaSpec::Contrast { kappa0, .. } = self.kappa {
            if !(kappa0 > 0.0) || !kappa0.is_finite() {
                return Err(ConfigError::Contrast(kappa0));
            }
        }
        if let KappaSpec::Constant { value } = self.kappa {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ConfigError::Contrast(value));
            }
        }
        if let MeshSource::Cartesian { nx, ny, kind } = self.mesh {
            if nx == 0 || ny == 0 {
                return Err(ConfigError::Invalid("cartesian mesh counts must be positive".into()));
            }
            if self.study == Study::ReducedOrder && kind != ElementKind::Triangle {
                return Err(ConfigError::ReducedOrderNeedsTriangles);
            }
        }
        if !(self.rtol > 0.0) {
            return Err(ConfigError::Invalid(format!("rtol must be positive, got {}", self.rtol)));
        }
        if self.maxit == 0 {
            return Err(ConfigError::Invalid("maxit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "dpg", about = "Primal DPG Poisson solver and preconditioner studies")]
pub struct Cli {
    /// cartesian:NX,NY,tri|quad or file:PATH
    #[arg(long, default_value = "cartesian:2,2,quad")]
    pub mesh: String,
    /// Number of uniform refinements (levels 0..=N)
    #[arg(long, default_value_t = 0)]
    pub refine: usize,
    /// Trial order p
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// Test order r (default p + 1)
    #[arg(long)]
    pub test_order: Option<usize>,
    /// Random two-valued coefficient with contrast K0 (needs --seed)
    #[arg(long)]
    pub contrast: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1e-6)]
    pub rtol: f64,
    #[arg(long, default_value_t = 500)]
    pub maxit: usize,
    #[arg(long, value_enum, default_value_t = PrecondChoice::Practical)]
    pub precond: PrecondChoice,
    #[arg(long, value_enum, default_value_t = Study::Solve)]
    pub study: Study,
    #[arg(long, value_enum, default_value_t = Source::One)]
    pub source: Source,
    /// AMG strength threshold
    #[arg(long, default_value_t = 0.25)]
    pub amg_theta: f64,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub export_matrices: Option<PathBuf>,
}

impl Cli {
    pub fn into_config(self) -> Result<RunConfig, ConfigError> {
        let kappa = match (self.contrast, self.seed) {
            (Some(_), None) => return Err(ConfigError::ContrastWithoutSeed),
            (Some(kappa0), Some(seed)) => KappaSpec::Contrast { kappa0, seed },
            (None, _) => KappaSpec::Constant { value: 1.0 },
        };
        if self.study == Study::Contrast && self.seed.is_none() {
            return Err(ConfigError::ContrastWithoutSeed);
        }
        let cfg = RunConfig {
            mesh: self.mesh.parse()?,
            refinements: self.refine,
            p: self.order,
            r: self.test_order,
            kappa,
            rtol: self.rtol,
            maxit: self.maxit,
            precond: self.precond,
            study: self.study,
            source: self.source,
            amg: AmgParams { theta: self.amg_theta, ..AmgParams::default() },
            seed: self.seed.unwrap_or(0),
            out_json: self.out_json,
            export_matrices: self.export_matrices,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
