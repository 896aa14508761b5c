//! Run configuration: JSON file plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use fluortraj::distance::{self, DistanceMeasure};
use fluortraj::ensemble::Target;
use fluortraj::measure::WEAK_EPSILON;
use fluortraj::{BlochVector, Scheme, SchemeConfig};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CliError, CliResult};

/// Initial or target state: a Bloch triple or one of `e`, `g`, `x+`, `x-`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Named(String),
    Vector([f64; 3]),
}

impl StateSpec {
    pub fn bloch(&self) -> CliResult<BlochVector> {
        let q = match self {
            StateSpec::Named(name) => match name.as_str() {
                "e" | "excited" => BlochVector::EXCITED,
                "g" | "ground" => BlochVector::GROUND,
                "x+" => BlochVector::new(1.0, 0.0, 0.0),
                "x-" => BlochVector::new(-1.0, 0.0, 0.0),
                other => return invalid(format!("unknown state '{other}' (use e, g, x+, x- or x,y,z)")),
            },
            StateSpec::Vector([x, y, z]) => BlochVector::new(*x, *y, *z),
        };
        Ok(q.checked()?)
    }
}

impl FromStr for StateSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if !s.contains(',') {
            return Ok(StateSpec::Named(s.trim().to_string()));
        }
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [x, y, z] => Ok(StateSpec::Vector([x, y, z])),
            _ => Err(format!("expected three components, got {}", parts.len())),
        }
    }
}

impl fmt::Display for StateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSpec::Named(n) => f.write_str(n),
            StateSpec::Vector([x, y, z]) => write!(f, "{x},{y},{z}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSpec {
    Angle(f64),
    State(StateSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub target: Option<TargetSpec>,
    pub window: f64,
    /// Share of the ranked selection averaged into the most-likely path.
    pub fraction: f64,
    pub distance: String,
    /// Smallest acceptable averaged group.
    pub min_group: usize,
    pub batch: usize,
    pub max_total: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            target: None,
            window: 0.01,
            fraction: fluortraj::mlp::DEFAULT_FRACTION,
            distance: "trace".into(),
            min_group: 100,
            batch: 20_000,
            max_total: 2_000_000,
        }
    }
}

impl SelectionConfig {
    pub fn target(&self) -> CliResult<Target> {
        match &self.target {
            None => invalid("post-selection needs a target (--target-angle or --target-state)"),
            Some(TargetSpec::Angle(a)) => Ok(Target::Angle(*a)),
            Some(TargetSpec::State(s)) => Ok(Target::State(s.bloch()?)),
        }
    }

    pub fn measure(&self) -> CliResult<Box<dyn DistanceMeasure>> {
        distance::by_name(&self.distance)
            .ok_or_else(|| CliError::Invalid(format!("unknown distance '{}'", self.distance)))
    }
}

/// Everything a run depends on. Times are in units of T₁, so γ = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `homodyne` with `eta < 1` runs the inefficient-detection model.
    pub scheme: Scheme,
    pub eta: f64,
    pub theta: f64,
    pub omega: f64,
    pub delta: f64,
    pub initial: StateSpec,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    pub n: usize,
    pub seed: u64,
    pub decimation: usize,
    pub out: PathBuf,
    pub selection: SelectionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Homodyne,
            eta: 1.0,
            theta: 0.0,
            omega: 0.0,
            delta: 0.0,
            initial: StateSpec::Named("e".into()),
            t_final: 5.0,
            dt: 1e-3,
            n: 1000,
            seed: 0,
            decimation: 1,
            out: PathBuf::from("fluortraj-out"),
            selection: SelectionConfig::default(),
        }
    }
}

pub const GAMMA: f64 = 1.0;

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let wrap = |e: Box<dyn std::error::Error + Send + Sync>| CliError::ConfigFile {
            path: path.display().to_string(),
            source: e,
        };
        let text = std::fs::read_to_string(path).map_err(|e| wrap(e.into()))?;
        serde_json::from_str(&text).map_err(|e| wrap(e.into()))
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return invalid(format!("eta = {} lies outside [0, 1]", self.eta));
        }
        let eps = GAMMA * self.dt;
        if !(eps > 0.0) || !eps.is_finite() {
            return invalid(format!("dt must be positive, got {}", self.dt));
        }
        if eps >= 1.0 {
            return invalid(format!("gamma*dt = {eps} must be below 1"));
        }
        if eps >= WEAK_EPSILON {
            log::warn!("gamma*dt = {eps} is outside the weak-measurement regime (< {WEAK_EPSILON})");
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return invalid(format!("T must be positive, got {}", self.t_final));
        }
        if self.n == 0 || self.decimation == 0 {
            return invalid("n and decimation must be at least 1");
        }
        let s = &self.selection;
        if !(s.window > 0.0) {
            return invalid(format!("window must be positive, got {}", s.window));
        }
        if !(s.fraction > 0.0 && s.fraction <= 1.0) {
            return invalid(format!("fraction must lie in (0, 1], got {}", s.fraction));
        }
        if s.batch == 0 || s.max_total == 0 {
            return invalid("batch and max_total must be at least 1");
        }
        s.measure()?;
        self.initial.bloch()?;
        self.scheme_config()?.validate()?;
        Ok(())
    }

    /// Library configuration. Imperfect homodyne detection maps onto the
    /// inefficient scheme; imperfect heterodyne is rejected.
    pub fn scheme_config(&self) -> CliResult<SchemeConfig> {
        let scheme = match self.scheme {
            Scheme::Homodyne if self.eta < 1.0 => Scheme::HomodyneInefficient,
            Scheme::Heterodyne if self.eta < 1.0 => {
                return invalid("heterodyne runs model ideal detection only (eta = 1)")
            }
            Scheme::Photodetect if self.eta < 1.0 => return invalid("photodetection runs model eta = 1 only"),
            s => s,
        };
        Ok(SchemeConfig::new(scheme, GAMMA, self.dt)
            .with_theta(self.theta)
            .with_eta(self.eta)
            .with_drive(self.omega, self.delta))
    }

    pub fn apply(&mut self, o: &RunArgs) {
        macro_rules! set {
            ($($field:ident).+ <- $arg:ident) => {
                if let Some(v) = o.$arg.clone() {
                    self.$($field).+ = v;
                }
            };
        }
        set!(scheme <- scheme);
        set!(eta <- eta);
        set!(theta <- theta);
        set!(omega <- omega);
        set!(delta <- delta);
        set!(initial <- initial);
        set!(t_final <- t_final);
        set!(dt <- dt);
        set!(n <- n);
        set!(seed <- seed);
        set!(decimation <- decimation);
        set!(selection.window <- window);
        set!(selection.fraction <- fraction);
        set!(selection.distance <- distance);
        set!(selection.min_group <- min_group);
        set!(selection.batch <- batch);
        set!(selection.max_total <- max_total);
        if let Some(a) = o.target_angle {
            self.selection.target = Some(TargetSpec::Angle(a));
        }
        if let Some(s) = &o.target_state {
            self.selection.target = Some(TargetSpec::State(s.clone()));
        }
    }
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: fluortraj::Error| e.to_string())
}

/// Overrides for fields of the JSON configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// photodetect, heterodyne or homodyne.
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<Scheme>,
    /// Detection efficiency in [0, 1].
    #[arg(long)]
    pub eta: Option<f64>,
    /// Local-oscillator phase.
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// e, g, x+, x- or a Bloch triple `x,y,z`.
    #[arg(long, allow_hyphen_values = true)]
    pub initial: Option<StateSpec>,
    /// Duration in units of T₁.
    #[arg(long = "T")]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Ensemble size.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep every k-th state.
    #[arg(long)]
    pub decimation: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub target_angle: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub target_state: Option<StateSpec>,
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long)]
    pub fraction: Option<f64>,
    /// trace, bures or fidelity-angle.
    #[arg(long)]
    pub distance: Option<String>,
    #[arg(long)]
    pub min_group: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub max_total: Option<usize>,
}
