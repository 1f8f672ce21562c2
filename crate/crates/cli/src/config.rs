use clap::Args;
use scalar_closure::error::{Error, Result as CoreResult};
use scalar_closure::experiments::{
    run_gbm_moments, run_homogenize, run_intermittency, run_mc_vs_closure, run_ou_limit, run_propagator_check,
    run_strain, GbmConfig, HomogenizeConfig, IntermittencyConfig, McVsClosureConfig, OuLimitConfig, Outcome,
    PropagatorConfig, StrainConfig, DEFAULT_SEED,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Strain,
    McVsClosure,
    OuLimit,
    PropagatorCheck,
    Homogenize,
    GbmMoments,
    Intermittency,
}

const ALL: [Experiment; 7] = [
    Experiment::Strain,
    Experiment::McVsClosure,
    Experiment::OuLimit,
    Experiment::PropagatorCheck,
    Experiment::Homogenize,
    Experiment::GbmMoments,
    Experiment::Intermittency,
];

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Strain => "strain",
            Experiment::McVsClosure => "mc-vs-closure",
            Experiment::OuLimit => "ou-limit",
            Experiment::PropagatorCheck => "propagator-check",
            Experiment::Homogenize => "homogenize",
            Experiment::GbmMoments => "gbm-moments",
            Experiment::Intermittency => "intermittency",
        }
    }

    /// Acceptance criterion verified by this experiment.
    pub fn criterion(self) -> usize {
        ALL.iter().position(|&e| e == self).unwrap() + 1
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<_> = ALL.iter().map(|e| e.name()).collect();
            format!("unknown experiment `{s}` (expected one of {})", names.join(", "))
        })
    }
}

/// Shortcuts for the most common physical parameters.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub g: Option<f64>,
    /// Comma-separated damping rates.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
}

/// Parameter block of the selected experiment, defaults filled in.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Params {
    Strain(StrainConfig),
    McVsClosure(McVsClosureConfig),
    OuLimit(OuLimitConfig),
    PropagatorCheck(PropagatorConfig),
    Homogenize(HomogenizeConfig),
    GbmMoments(GbmConfig),
    Intermittency(IntermittencyConfig),
}

impl Params {
    pub fn run(&self, seed: u64) -> CoreResult<Outcome> {
        match self {
            Params::Strain(c) => run_strain(c, seed),
            Params::McVsClosure(c) => run_mc_vs_closure(c, seed),
            Params::OuLimit(c) => run_ou_limit(c, seed),
            Params::PropagatorCheck(c) => run_propagator_check(c, seed),
            Params::Homogenize(c) => run_homogenize(c, seed),
            Params::GbmMoments(c) => run_gbm_moments(c, seed),
            Params::Intermittency(c) => run_intermittency(c, seed),
        }
    }
}

/// Layout of a config file: optional run settings plus one table per experiment.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ConfigFile {
    experiment: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    strain: Option<StrainConfig>,
    mc_vs_closure: Option<McVsClosureConfig>,
    ou_limit: Option<OuLimitConfig>,
    propagator_check: Option<PropagatorConfig>,
    homogenize: Option<HomogenizeConfig>,
    gbm_moments: Option<GbmConfig>,
    intermittency: Option<IntermittencyConfig>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub experiment: &'static str,
    pub seed: u64,
    pub parameters: Params,
    #[serde(skip)]
    pub kind: Experiment,
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn resolve(
    experiment: Experiment,
    config: Option<&Path>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    o: &Overrides,
) -> Result<Resolved, String> {
    let file = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            toml::from_str::<ConfigFile>(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))?
        }
        None => ConfigFile::default(),
    };
    if let Some(name) = &file.experiment {
        if name != experiment.name() {
            return Err(format!("config is for `{name}`, not `{}`", experiment.name()));
        }
    }
    let unused = |flag: &str| format!("--{flag} does not apply to {}", experiment.name());
    let params = match experiment {
        Experiment::Strain => {
            let mut c = file.strain.unwrap_or_default();
            set(&mut c.t, o.t);
            set(&mut c.kappa, o.kappa);
            set(&mut c.g, o.g);
            if o.gammas.is_some() {
                return Err(unused("gammas"));
            }
            Params::Strain(c)
        }
        Experiment::McVsClosure => {
            let mut c = file.mc_vs_closure.unwrap_or_default();
            set(&mut c.t, o.t);
            set(&mut c.kappa, o.kappa);
            set(&mut c.g, o.g);
            if o.gammas.is_some() {
                return Err(unused("gammas"));
            }
            Params::McVsClosure(c)
        }
        Experiment::OuLimit => {
            let mut c = file.ou_limit.unwrap_or_default();
            set(&mut c.t, o.t);
            set(&mut c.kappa, o.kappa);
            set(&mut c.g, o.g);
            if let Some(g) = &o.gammas {
                c.gammas = g.clone();
            }
            Params::OuLimit(c)
        }
        other => {
            for (flag, given) in [("t", o.t.is_some()), ("kappa", o.kappa.is_some()), ("g", o.g.is_some()), ("gammas", o.gammas.is_some())] {
                if given {
                    return Err(unused(flag));
                }
            }
            match other {
                Experiment::PropagatorCheck => Params::PropagatorCheck(file.propagator_check.unwrap_or_default()),
                Experiment::Homogenize => Params::Homogenize(file.homogenize.unwrap_or_default()),
                Experiment::GbmMoments => Params::GbmMoments(file.gbm_moments.unwrap_or_default()),
                _ => Params::Intermittency(file.intermittency.unwrap_or_default()),
            }
        }
    };
    Ok(Resolved {
        experiment: experiment.name(),
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        parameters: params,
        kind: experiment,
        out: out.or(file.out).unwrap_or_else(|| PathBuf::from("out").join(experiment.name())),
    })
}

fn set(slot: &mut f64, value: Option<f64>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Errors caused by the input rather than by the numerics.
pub fn is_validation(e: &Error) -> bool {
    matches!(e, Error::InvalidParameter(_) | Error::UnknownField(_))
}
