//! Run configuration: a JSON file with per-run parameters, overridable by
//! command-line flags. Every random choice in a run derives from the single
//! root seed through named substreams, so a config + seed pair pins the
//! entire output byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use bellforge_core::questions::{random_specials, QuestionSet};
use bellforge_core::strategy::{
    conjugated_honest_strategy, depolarize, honest_strategy, NoiseKind, StrategyFile,
};
use bellforge_core::verifier::cell_rng;
use bellforge_core::{Error, NoiseSpec, Question, Result, Strategy};

/// How the special-question set 𝒮 is chosen.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecialsSpec {
    /// Explicit digit strings; duplicates are dropped with a warning.
    Explicit(Vec<String>),
    /// Drawn uniformly, rejecting strings whose z-fraction is too small.
    Random {
        count: usize,
        #[serde(default)]
        min_z_fraction: f64,
        /// Substream seed override; defaults to the root seed.
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl Default for SpecialsSpec {
    fn default() -> Self {
        SpecialsSpec::Random {
            count: 1,
            min_z_fraction: 0.0,
            seed: None,
        }
    }
}

/// Where the strategy under test comes from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrategySource {
    /// `"honest"` or `"conjugated"`, built at the configured `n`.
    Named(String),
    /// An explicit strategy file on disk.
    File { file: PathBuf },
}

impl Default for StrategySource {
    fn default() -> Self {
        StrategySource::Named("honest".into())
    }
}

fn default_m() -> u8 {
    5
}

fn default_alpha() -> f64 {
    0.01
}

fn default_tolerance() -> f64 {
    1e-9
}

/// Parameters of one run. All fields have defaults, so `{}` is a valid
/// config (n = 2, one random special, honest strategy, no noise).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Bell pairs per round.
    pub n: usize,
    /// Alphabet size for Alice's per-position symbols.
    #[serde(default = "default_m")]
    pub m: u8,
    /// Root seed; every substream (questions, trials, oracle) derives from
    /// it by name.
    pub seed: u64,
    pub specials: SpecialsSpec,
    pub strategy: StrategySource,
    pub noise: NoiseSpec,
    /// Rounds sampled per question cell in statistical audits (0 = exact
    /// audit only).
    pub trials_per_cell: usize,
    /// Confidence parameter for Hoeffding radii.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Default gate for analytic (exact) checks.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 2,
            m: default_m(),
            seed: 0,
            specials: SpecialsSpec::default(),
            strategy: StrategySource::default(),
            noise: NoiseSpec::none(),
            trials_per_cell: 0,
            alpha: default_alpha(),
            tolerance: default_tolerance(),
        }
    }
}

impl RunConfig {
    /// Loads a config file, or the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let cfg = match path {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
            None => RunConfig::default(),
        };
        Ok(cfg)
    }

    /// Structural validation of the numeric ranges.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidQuestion {
                question: "n=0".into(),
                reason: "at least one Bell pair is required",
            });
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidQuestion {
                question: format!("alpha={}", self.alpha),
                reason: "confidence parameter must lie in (0, 1)",
            });
        }
        if self.tolerance <= 0.0 || !self.tolerance.is_finite() {
            return Err(Error::InvalidQuestion {
                question: format!("tolerance={}", self.tolerance),
                reason: "tolerance must be a positive finite number",
            });
        }
        self.noise.validate()?;
        if let SpecialsSpec::Random {
            count,
            min_z_fraction,
            ..
        } = &self.specials
        {
            if *count == 0 {
                return Err(Error::InvalidQuestion {
                    question: "count=0".into(),
                    reason: "the special set must be nonempty",
                });
            }
            if !(0.0..=1.0).contains(min_z_fraction) {
                return Err(Error::InvalidQuestion {
                    question: format!("min_z_fraction={min_z_fraction}"),
                    reason: "z fraction must lie in [0, 1]",
                });
            }
        }
        Ok(())
    }

    /// Builds 𝒮 from the spec. Returns the set plus the number of duplicate
    /// explicit entries that were dropped (the caller warns about them).
    pub fn resolve_specials(&self) -> Result<(QuestionSet, usize)> {
        match &self.specials {
            SpecialsSpec::Explicit(strings) => {
                let mut members = Vec::with_capacity(strings.len());
                for s in strings {
                    members.push(Question::parse(s)?);
                }
                let given = members.len();
                let set = QuestionSet::new(self.m, self.n, members)?;
                let dropped = given - set.len();
                Ok((set, dropped))
            }
            SpecialsSpec::Random {
                count,
                min_z_fraction,
                seed,
            } => {
                let mut rng = cell_rng(seed.unwrap_or(self.seed), b"questions", 0);
                let set = random_specials(self.m, self.n, *count, *min_z_fraction, &mut rng)?;
                Ok((set, 0))
            }
        }
    }

    /// Builds or loads the strategy under test, applying configured noise.
    pub fn load_strategy(&self) -> Result<Strategy> {
        let base = match &self.strategy {
            StrategySource::Named(name) => match name.as_str() {
                "honest" => honest_strategy(self.n)?,
                "conjugated" => conjugated_honest_strategy(self.n)?,
                other => {
                    return Err(Error::MalformedFile(format!(
                        "unknown strategy name {other:?}; expected \"honest\", \
                         \"conjugated\", or {{\"file\": PATH}}"
                    )))
                }
            },
            StrategySource::File { file } => {
                let s = StrategyFile::parse(&fs::read_to_string(file)?)?;
                if s.n() != self.n {
                    return Err(Error::DimensionMismatch {
                        left: s.n(),
                        right: self.n,
                        context: "strategy file n vs configured n",
                    });
                }
                s
            }
        };
        match self.noise.kind {
            NoiseKind::None => Ok(base),
            NoiseKind::Depolarizing => depolarize(&base, self.noise),
        }
    }
}
