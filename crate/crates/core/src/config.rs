//! Run configuration: a sectioned TOML file with `[grid]`, `[diffusion]`,
//! `[noise]`, `[solver]`, `[experiment]` and `[output]`.
//!
//! Unknown keys are rejected and every default is materialized, so the
//! normalized form written next to the results describes the run completely.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{DiffusionSpec, Law, Regime};
use crate::error::{Error, Result};
use crate::experiments::ball_entry::{self, BallEntryParams};
use crate::experiments::contraction::{self, CouplingParams};
use crate::experiments::energy::{self, EnergyParams};
use crate::experiments::ergodic::{self, ErgodicParams};
use crate::experiments::invariant::{self, InvariantParams};
use crate::experiments::irreducibility::{self, IrreducibilityParams};
use crate::experiments::kinetic::{self, KineticParams};
use crate::experiments::oracle::{self, OracleParams};
use crate::experiments::validation::{self, BoundaryLayerParams, ValidateParams};
use crate::experiments::{ExperimentKind, ExperimentReport, Setup};
use crate::grid::Grid;
use crate::noise::{NoiseMode, NoiseSpec, StateProfile};
use crate::par::Execution;
use crate::stepper::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "unit_length")]
    pub length: f64,
    /// Interior nodes.
    pub n: usize,
}

fn unit_length() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    Constant,
    AffineFloor,
    Porous,
    PorousFloor,
    Bounded,
    Expr,
}

/// Flat description of `b`; which parameters are required depends on `law`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSection {
    pub law: LawKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holder_gamma: Option<f64>,
    #[serde(default)]
    pub bypass_validation: bool,
}

impl DiffusionSection {
    fn param_names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        for (name, set) in [
            ("b0", self.b0.is_some()),
            ("b1", self.b1.is_some()),
            ("c", self.c.is_some()),
            ("theta", self.theta.is_some()),
            ("slope", self.slope.is_some()),
            ("expr", self.expr.is_some()),
        ] {
            if set {
                v.push(name);
            }
        }
        v
    }

    pub fn build(&self) -> Result<DiffusionSpec> {
        let required: &[&str] = match self.law {
            LawKind::Constant => &["b0"],
            LawKind::AffineFloor => &["b0", "slope"],
            LawKind::Porous => &["c", "theta"],
            LawKind::PorousFloor => &["b0", "c", "theta"],
            LawKind::Bounded => &["b0", "b1"],
            LawKind::Expr => &["expr"],
        };
        let given = self.param_names();
        if let Some(extra) = given.iter().find(|g| !required.contains(g)) {
            return Err(Error::InvalidArgument(format!("diffusion.{extra} is not a parameter of law {:?}", self.law)));
        }
        if let Some(missing) = required.iter().find(|r| !given.contains(r)) {
            return Err(Error::InvalidArgument(format!("diffusion.{missing} is required for law {:?}", self.law)));
        }
        let f = |x: Option<f64>| x.unwrap_or(f64::NAN);
        let law = match self.law {
            LawKind::Constant => Law::Constant { b0: f(self.b0) },
            LawKind::AffineFloor => Law::AffineFloor { b0: f(self.b0), slope: f(self.slope) },
            LawKind::Porous => Law::Porous { c: f(self.c), theta: f(self.theta) },
            LawKind::PorousFloor => Law::PorousFloor { b0: f(self.b0), c: f(self.c), theta: f(self.theta) },
            LawKind::Bounded => Law::Bounded { b0: f(self.b0), b1: f(self.b1) },
            LawKind::Expr => Law::expression(self.expr.as_deref().unwrap_or_default())?,
        };
        let regime = match self.regime.or_else(|| law.natural_regime()) {
            Some(r) => r,
            None => return Err(Error::InvalidArgument("diffusion.regime is required for law expr".into())),
        };
        if self.bypass_validation {
            return Ok(DiffusionSpec::bypass_validation(law, regime));
        }
        let spec = DiffusionSpec::with_regime(law, regime)?;
        match self.holder_gamma {
            Some(g) => spec.with_holder_gamma(g),
            None => Ok(spec),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    One,
    Sin,
    Tanh,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub mode: NoiseMode,
    /// Defaults to `min(64, n)`.
    #[serde(default)]
    pub n_modes: Option<usize>,
    #[serde(default = "one")]
    pub lambda_bar: f64,
    #[serde(default = "one")]
    pub decay_q: f64,
    #[serde(default = "default_profile")]
    pub profile: ProfileKind,
    /// Slope of the `linear` profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn default_profile() -> ProfileKind {
    ProfileKind::One
}

impl NoiseSection {
    pub fn build(&self, grid: &Grid) -> Result<NoiseSpec> {
        let profile = match (self.profile, self.slope) {
            (ProfileKind::Linear, Some(slope)) => StateProfile::Linear { slope },
            (ProfileKind::Linear, None) => return Err(Error::InvalidArgument("noise.slope is required for profile linear".into())),
            (_, Some(_)) => return Err(Error::InvalidArgument("noise.slope only applies to profile linear".into())),
            (ProfileKind::One, None) => StateProfile::One,
            (ProfileKind::Sin, None) => StateProfile::Sin,
            (ProfileKind::Tanh, None) => StateProfile::Tanh,
        };
        if self.mode == NoiseMode::Additive && profile != StateProfile::One {
            return Err(Error::InvalidArgument("additive noise takes profile one".into()));
        }
        let spec = NoiseSpec {
            mode: self.mode,
            n_modes: self.n_modes.unwrap_or_else(|| NoiseSpec::default_modes(grid)),
            lambda_bar: self.lambda_bar,
            decay_q: self.decay_q,
            profile,
            seed: self.seed,
        };
        spec.validate(grid)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub path_offset: u64,
    #[serde(default = "default_slack")]
    pub slack_c: f64,
    #[serde(default)]
    pub execution: Execution,
    /// Kind-specific parameters; absent keys take their defaults.
    #[serde(default)]
    pub params: toml::Table,
}

fn default_paths() -> usize {
    200
}

fn default_slack() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Write binary snapshots of one representative path.
    pub snapshots: bool,
    /// Write per-step diagnostics of one representative path as JSON lines.
    pub diagnostics: bool,
}

/// Fully materialized configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridSection,
    pub diffusion: DiffusionSection,
    pub noise: NoiseSection,
    #[serde(default)]
    pub solver: SolverConfig,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Fields that affect numerics, in a fixed order.
#[derive(Serialize)]
struct Hashed<'a> {
    grid: &'a GridSection,
    diffusion: &'a DiffusionSection,
    noise: &'a NoiseSection,
    solver: &'a SolverConfig,
    kind: ExperimentKind,
    paths: usize,
    path_offset: u64,
    slack_c: f64,
    params: &'a toml::Table,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses, materializes defaults and validates.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_for(text, None)
    }

    /// As [`Config::parse`]; `kind` fills `experiment.kind` and must agree with it when both are given.
    pub fn parse_for(text: &str, kind: Option<ExperimentKind>) -> Result<Self> {
        let mut raw: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(kind) = kind {
            let exp = raw
                .entry("experiment")
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config("experiment must be a table".into()))?;
            let name = toml::Value::try_from(kind).map_err(|e| Error::Config(e.to_string()))?;
            match exp.get("kind") {
                Some(k) if *k != name => {
                    return Err(Error::Config(format!("experiment.kind = {k} does not match the subcommand ({name})")));
                }
                _ => {
                    exp.insert("kind".into(), name);
                }
            }
        }
        let mut cfg: Config = toml::Value::Table(raw).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.normalize()?;
        Ok(cfg)
    }

    /// Command-line overrides; re-validates afterwards.
    pub fn apply_overrides(&mut self, seed: Option<u64>, paths: Option<usize>) -> Result<()> {
        if let Some(s) = seed {
            self.noise.seed = s;
        }
        if let Some(m) = paths {
            self.experiment.paths = m;
        }
        self.normalize()
    }

    /// Fills defaults (noise modes, experiment parameters) and runs the semantic checks.
    pub fn normalize(&mut self) -> Result<()> {
        let grid = self.grid()?;
        if self.noise.n_modes.is_none() {
            self.noise.n_modes = Some(NoiseSpec::default_modes(&grid));
        }
        self.experiment.params = materialize(self.experiment.kind, &self.experiment.params)?;
        self.validate()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 over the numerics-affecting fields; `[output]` and the execution mode are excluded.
    pub fn hash(&self) -> Result<String> {
        let e = &self.experiment;
        let h = Hashed {
            grid: &self.grid,
            diffusion: &self.diffusion,
            noise: &self.noise,
            solver: &self.solver,
            kind: e.kind,
            paths: e.paths,
            path_offset: e.path_offset,
            slack_c: e.slack_c,
            params: &e.params,
        };
        let json = serde_json::to_vec(&h).map_err(|e| Error::Config(e.to_string()))?;
        Ok(hex::encode(Sha256::digest(&json)))
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.length, self.grid.n)
    }

    pub fn setup(&self) -> Result<Setup> {
        let grid = self.grid()?;
        let mut s = Setup::new(grid, self.diffusion.build()?, self.noise.build(&grid)?, self.solver, self.experiment.paths);
        s.path_offset = self.experiment.path_offset;
        s.slack_c = self.experiment.slack_c;
        s.execution = self.experiment.execution;
        Ok(s)
    }

    /// Typed parameters of the configured experiment.
    pub fn params<T: DeserializeOwned>(&self) -> Result<T> {
        from_table(&self.experiment.params)
    }

    fn validate(&self) -> Result<()> {
        // TOML integers are signed 64-bit.
        if self.noise.seed > i64::MAX as u64 || self.experiment.path_offset > i64::MAX as u64 {
            return Err(Error::Config("noise.seed and experiment.path_offset must not exceed 2^63 - 1".into()));
        }
        let setup = self.setup()?;
        setup.check()?;
        let additive = self.noise.mode == NoiseMode::Additive;
        match self.experiment.kind {
            ExperimentKind::Ergodic => {
                let p: ErgodicParams = self.params()?;
                if !additive && !p.negative_control {
                    return Err(Error::Precondition(
                        "ergodic coupling requires additive noise and a bounded diffusion b; \
                         set params.negative_control = true to run outside that scope"
                            .into(),
                    ));
                }
            }
            ExperimentKind::Invariant if setup.diffusion.regime().is_degenerate() => {
                return Err(Error::Precondition(
                    "invariant measure estimation requires the non-degenerate regime b0 <= b(r)".into(),
                ));
            }
            ExperimentKind::Irreducibility | ExperimentKind::BallEntry if !additive => {
                return Err(Error::Precondition(format!("{} requires additive noise", self.experiment.kind.name())));
            }
            _ => {}
        }
        Ok(())
    }

    /// Runs the configured experiment.
    pub fn run(&self) -> Result<ExperimentReport> {
        let setup = self.setup()?;
        let mut report = match self.experiment.kind {
            ExperimentKind::Contraction => contraction::run_contraction(&setup, &self.params::<CouplingParams>()?),
            ExperimentKind::Comparison => contraction::run_comparison(&setup, &self.params::<CouplingParams>()?),
            ExperimentKind::Energy => energy::run_energy(&setup, &self.params::<EnergyParams>()?),
            ExperimentKind::Ergodic => ergodic::run_ergodic(&setup, &self.params::<ErgodicParams>()?),
            ExperimentKind::Invariant => invariant::run_invariant(&setup, &self.params::<InvariantParams>()?),
            ExperimentKind::Irreducibility => {
                irreducibility::run_irreducibility(&setup, &self.params::<IrreducibilityParams>()?)
            }
            ExperimentKind::BallEntry => ball_entry::run_ball_entry(&setup, &self.params::<BallEntryParams>()?),
            ExperimentKind::Kinetic => kinetic::run_kinetic(&setup, &self.params::<KineticParams>()?),
            ExperimentKind::LinearOracle => oracle::run_linear_oracle(&setup, &self.params::<OracleParams>()?),
            ExperimentKind::Validate => validation::run_validate(&setup, &self.params::<ValidateParams>()?),
            ExperimentKind::BoundaryLayer => {
                validation::run_boundary_layer(&setup, &self.params::<BoundaryLayerParams>()?)
            }
        }?;
        report.provenance.config_hash = Some(self.hash()?);
        Ok(report)
    }
}

fn from_table<T: DeserializeOwned>(t: &toml::Table) -> Result<T> {
    toml::Value::Table(t.clone())
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("experiment.params: {}", e.message())))
}

fn to_table<T: Serialize>(v: &T) -> Result<toml::Table> {
    match toml::Value::try_from(v).map_err(|e| Error::Config(e.to_string()))? {
        toml::Value::Table(t) => Ok(t),
        _ => Err(Error::Config("experiment parameters must form a table".into())),
    }
}

fn roundtrip<T: DeserializeOwned + Serialize>(t: &toml::Table) -> Result<toml::Table> {
    to_table(&from_table::<T>(t)?)
}

/// Parses `params` as the parameter type of `kind` and writes it back with defaults filled.
fn materialize(kind: ExperimentKind, params: &toml::Table) -> Result<toml::Table> {
    match kind {
        ExperimentKind::Contraction => roundtrip::<CouplingParams>(params),
        ExperimentKind::Comparison => {
            // Missing keys come from the ordered pair, not the generic default.
            let mut merged = to_table(&CouplingParams::ordered())?;
            merged.extend(params.clone());
            roundtrip::<CouplingParams>(&merged)
        }
        ExperimentKind::Energy => roundtrip::<EnergyParams>(params),
        ExperimentKind::Ergodic => roundtrip::<ErgodicParams>(params),
        ExperimentKind::Invariant => roundtrip::<InvariantParams>(params),
        ExperimentKind::Irreducibility => roundtrip::<IrreducibilityParams>(params),
        ExperimentKind::BallEntry => roundtrip::<BallEntryParams>(params),
        ExperimentKind::Kinetic => roundtrip::<KineticParams>(params),
        ExperimentKind::LinearOracle => roundtrip::<OracleParams>(params),
        ExperimentKind::Validate => roundtrip::<ValidateParams>(params),
        ExperimentKind::BoundaryLayer => roundtrip::<BoundaryLayerParams>(params),
    }
}
