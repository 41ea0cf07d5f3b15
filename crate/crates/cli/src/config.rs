use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Rum,
    Odd,
    Power,
    EvenReal,
    EvenComplex,
    Carleman,
    Trajectory,
    Sweep,
}

impl Scenario {
    pub fn tag(self) -> &'static str {
        match self {
            Scenario::Rum => "rum",
            Scenario::Odd => "odd",
            Scenario::Power => "power",
            Scenario::EvenReal => "even-real",
            Scenario::EvenComplex => "even-complex",
            Scenario::Carleman => "carleman",
            Scenario::Trajectory => "trajectory",
            Scenario::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeTag {
    ImplicitEuler,
    CrankNicolson,
}

/// Named initial profiles on `(0, 1)`, scaled by `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Zero,
    /// `sin(πx/L)`
    Sin,
    /// `x(L − x)/L²`
    Parabola,
}

impl Profile {
    pub fn eval(self, x: f64, length: f64) -> f64 {
        let y = x / length;
        match self {
            Profile::Zero => 0.0,
            Profile::Sin => (std::f64::consts::PI * y).sin(),
            Profile::Parabola => y * (1.0 - y),
        }
    }
}

/// `rumheat <scenario> [options]`
#[derive(Debug, Parser)]
#[command(
    name = "rumheat",
    version,
    about = "Null-control experiments for heat equations and power-coupled systems"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub scenario: Scenario,
    /// TOML file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub nt: Option<usize>,
    #[arg(long)]
    pub k: Option<u32>,
    /// Coupling power for `power`, `even-real`, `even-complex`.
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long, conflicts_with = "eps_ladder")]
    pub eps: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub eps_ladder: Option<Vec<f64>>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Config-file schema. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub nx: Option<usize>,
    pub nt: Option<usize>,
    #[serde(rename = "T", alias = "horizon")]
    pub horizon: Option<f64>,
    pub length: Option<f64>,
    pub omega: Option<[f64; 2]>,
    pub omega1: Option<[f64; 2]>,
    pub omega0: Option<[f64; 2]>,
    pub k: Option<u32>,
    pub n: Option<u32>,
    pub eps: Option<f64>,
    pub eps_ladder: Option<Vec<f64>>,
    pub phase1_eps: Option<f64>,
    pub s: Option<f64>,
    pub lambda: Option<f64>,
    pub scheme: Option<SchemeTag>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub draws: Option<usize>,
    pub s_values: Option<Vec<f64>>,
    pub amplitude: Option<f64>,
    pub nonlinearity: Option<String>,
    pub f1: Option<Vec<f64>>,
    pub g1: Option<Vec<f64>>,
    pub g2: Option<Vec<f64>>,
    pub u0: Option<Profile>,
    pub v0: Option<Profile>,
    pub zeta0: Option<Profile>,
    pub u0_scale: Option<f64>,
    pub v0_scale: Option<f64>,
    pub zeta0_scale: Option<f64>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub nx: usize,
    pub nt: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub length: f64,
    pub omega: [f64; 2],
    pub omega1: [f64; 2],
    pub omega0: [f64; 2],
    pub k: u32,
    pub n: u32,
    pub eps: f64,
    pub eps_ladder: Vec<f64>,
    pub phase1_eps: f64,
    pub s: f64,
    pub lambda: f64,
    pub scheme: SchemeTag,
    pub tol: f64,
    pub max_iter: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub draws: usize,
    pub s_values: Vec<f64>,
    pub amplitude: f64,
    pub nonlinearity: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g1: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g2: Option<Vec<f64>>,
    pub u0: Profile,
    pub v0: Profile,
    pub zeta0: Profile,
    pub u0_scale: f64,
    pub v0_scale: f64,
    pub zeta0_scale: f64,
}

fn default_power(scenario: Scenario, k: u32) -> u32 {
    match scenario {
        Scenario::EvenReal | Scenario::EvenComplex => 2 * k,
        _ => 2 * k + 1,
    }
}

/// Reads the optional file, applies flags on top and validates.
pub fn parse_config(cli: &Cli) -> CliResult<RunConfig> {
    let file = match &cli.config {
        Some(path) => read_file(path)?,
        None => FileConfig::default(),
    };
    resolve(cli, file)
}

pub fn read_file(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        field: "config".into(),
        reason: format!("cannot read {}: {e}", path.display()),
    })?;
    toml::from_str(&text).map_err(|e| CliError::Config {
        field: "config".into(),
        reason: e.to_string(),
    })
}

pub fn resolve(cli: &Cli, file: FileConfig) -> CliResult<RunConfig> {
    let scenario = cli.scenario;
    let k = cli.k.or(file.k).unwrap_or(1);
    let n = cli
        .n
        .or(file.n)
        .unwrap_or_else(|| default_power(scenario, k));
    let config = RunConfig {
        scenario,
        nx: cli.nx.or(file.nx).unwrap_or(63),
        nt: cli.nt.or(file.nt).unwrap_or(256),
        horizon: file.horizon.unwrap_or(1.0),
        length: file.length.unwrap_or(1.0),
        omega: file.omega.unwrap_or([0.3, 0.7]),
        omega1: file.omega1.unwrap_or([0.4, 0.6]),
        omega0: file.omega0.unwrap_or([0.4, 0.6]),
        k,
        n,
        eps: cli.eps.or(file.eps).unwrap_or(1e-6),
        eps_ladder: cli
            .eps_ladder
            .clone()
            .or(file.eps_ladder)
            .unwrap_or_else(|| vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6]),
        phase1_eps: file.phase1_eps.unwrap_or(1e-8),
        s: cli.s.or(file.s).unwrap_or(1.0),
        lambda: file.lambda.unwrap_or(1.0),
        scheme: file.scheme.unwrap_or(SchemeTag::ImplicitEuler),
        tol: file.tol.unwrap_or(1e-10),
        max_iter: file.max_iter.unwrap_or(2000),
        out: cli
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("out")),
        seed: cli.seed.or(file.seed).unwrap_or(0),
        draws: file.draws.unwrap_or(100),
        s_values: file.s_values.unwrap_or_else(|| vec![5.0, 10.0, 20.0, 40.0]),
        amplitude: file.amplitude.unwrap_or(0.1),
        nonlinearity: file.nonlinearity.unwrap_or_else(|| "reaction-2k1".into()),
        f1: file.f1,
        g1: file.g1,
        g2: file.g2,
        u0: file.u0.unwrap_or(Profile::Sin),
        v0: file.v0.unwrap_or(match scenario {
            Scenario::EvenReal => Profile::Sin,
            _ => Profile::Parabola,
        }),
        zeta0: file.zeta0.unwrap_or(Profile::Sin),
        u0_scale: file.u0_scale.unwrap_or(1.0),
        v0_scale: file.v0_scale.unwrap_or(1.0),
        zeta0_scale: file.zeta0_scale.unwrap_or(1.0),
    };
    config.validate()?;
    Ok(config)
}

fn bad(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

fn inside(inner: [f64; 2], outer: [f64; 2]) -> bool {
    outer[0] < inner[0] && inner[1] < outer[1]
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.nx < 3 {
            return Err(bad("nx", "need at least 3 interior nodes"));
        }
        if self.nt < 4 || self.nt % 2 != 0 {
            return Err(bad(
                "nt",
                format!("must be even and at least 4, got {}", self.nt),
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(bad("T", "must be positive"));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(bad("length", "must be positive"));
        }
        for (name, iv) in [
            ("omega", self.omega),
            ("omega1", self.omega1),
            ("omega0", self.omega0),
        ] {
            if !(iv[0] < iv[1]) {
                return Err(bad(name, "lower end must be below upper end"));
            }
        }
        if !inside(self.omega, [0.0, self.length]) {
            return Err(bad("omega", "must lie strictly inside (0, L)"));
        }
        if !inside(self.omega1, self.omega) {
            return Err(bad("omega1", "must lie strictly inside omega"));
        }
        if !inside(self.omega0, self.omega) {
            return Err(bad("omega0", "must lie strictly inside omega"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(bad("eps", "must be positive"));
        }
        if !(self.phase1_eps > 0.0 && self.phase1_eps.is_finite()) {
            return Err(bad("phase1_eps", "must be positive"));
        }
        if self.eps_ladder.is_empty()
            || self.eps_ladder.iter().any(|e| !(*e > 0.0 && e.is_finite()))
        {
            return Err(bad("eps_ladder", "needs positive entries"));
        }
        if self.eps_ladder.windows(2).any(|w| w[1] >= w[0]) {
            return Err(bad("eps_ladder", "must be strictly decreasing"));
        }
        if !(self.s >= 1.0 && self.s.is_finite()) {
            return Err(bad("s", "must be at least 1"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(bad("lambda", "must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(bad("tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(bad("max_iter", "must be positive"));
        }
        if self.s_values.is_empty() || self.s_values.iter().any(|s| !(*s >= 1.0)) {
            return Err(bad("s_values", "entries must be at least 1"));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(bad("amplitude", "must be positive"));
        }
        match self.scenario {
            Scenario::Odd if self.n % 2 == 0 => {
                return Err(bad("n", "odd scenario needs an odd power"))
            }
            Scenario::EvenReal | Scenario::EvenComplex if self.n % 2 == 1 || self.n == 0 => {
                return Err(bad("n", "even scenarios need an even power"))
            }
            Scenario::Odd | Scenario::Power | Scenario::EvenReal | Scenario::EvenComplex
                if self.n < 2 =>
            {
                return Err(bad("n", "coupling power must be at least 2"))
            }
            Scenario::Trajectory | Scenario::Carleman if self.k == 0 => {
                return Err(bad("k", "must be at least 1"))
            }
            _ => {}
        }
        if self.scenario == Scenario::EvenReal && self.scheme != SchemeTag::ImplicitEuler {
            return Err(bad("scheme", "the comparison check needs implicit-euler"));
        }
        let polys = [self.f1.is_some(), self.g1.is_some(), self.g2.is_some()];
        if polys.iter().any(|&p| p) && !polys.iter().all(|&p| p) {
            return Err(bad("g1", "f1, g1 and g2 tables must be given together"));
        }
        Ok(())
    }
}
