//! Experiment configuration.
//!
//! Config files are TOML. Top-level keys describe one training run, the
//! `[task]` table selects the dataset, `[adam]` optionally overrides Adam
//! moments, and an optional `[sweep]` table lists grid axes:
//!
//! ```toml
//! algorithm = "aux_weight"      # aux_weight | controller_mask | static
//! optimizer = "gd_batch"        # gd_batch | gd_stochastic | adam
//! eta = 0.001
//! lambda = 0.1
//! epochs = 40000
//! n_max = 5
//! seed = 1
//! trials = 200
//!
//! [task]
//! kind = "bessel_simple"        # bessel_simple | bessel_composite | spiral
//! n_data = 40
//!
//! [sweep]
//! epochs = [1000, 3000, 10000]
//! lambda = [0.1, 1.0]
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Init;
use crate::optim::{AdamParams, OptimizerKind};
use crate::tasks::{gen_regression, gen_spirals, Dataset, RegressionTarget, SpiralSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    AuxWeight,
    ControllerMask,
    Static,
}

impl Algorithm {
    pub fn is_growing(self) -> bool {
        !matches!(self, Algorithm::Static)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    BesselSimple {
        n_data: usize,
    },
    BesselComposite {
        n_data: usize,
    },
    Spiral {
        classes: usize,
        n_per_class: usize,
        #[serde(default = "default_noise")]
        noise_std: f64,
        #[serde(default = "default_turns")]
        turns: f64,
    },
}

fn default_noise() -> f64 {
    SpiralSpec::new(2, 1).noise_std
}

fn default_turns() -> f64 {
    SpiralSpec::new(2, 1).turns
}

impl TaskSpec {
    pub fn spiral(spec: SpiralSpec) -> Self {
        TaskSpec::Spiral {
            classes: spec.classes,
            n_per_class: spec.n_per_class,
            noise_std: spec.noise_std,
            turns: spec.turns,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, TaskSpec::Spiral { .. })
    }

    pub fn classes(&self) -> Option<usize> {
        match *self {
            TaskSpec::Spiral { classes, .. } => Some(classes),
            _ => None,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        match *self {
            TaskSpec::BesselSimple { n_data } => {
                gen_regression(n_data, RegressionTarget::BesselSimple, seed)
            }
            TaskSpec::BesselComposite { n_data } => {
                gen_regression(n_data, RegressionTarget::BesselComposite, seed)
            }
            TaskSpec::Spiral {
                classes,
                n_per_class,
                noise_std,
                turns,
            } => gen_spirals(
                &SpiralSpec {
                    classes,
                    n_per_class,
                    noise_std,
                    turns,
                },
                seed,
            ),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            TaskSpec::BesselSimple { n_data } | TaskSpec::BesselComposite { n_data } => {
                if n_data < 5 {
                    return Err(Error::Config(format!(
                        "task.n_data must be >= 5, got {n_data}"
                    )));
                }
                Ok(())
            }
            TaskSpec::Spiral {
                classes,
                n_per_class,
                noise_std,
                turns,
            } => SpiralSpec {
                classes,
                n_per_class,
                noise_std,
                turns,
            }
            .validate()
            .map_err(|e| Error::Config(format!("task: {e}"))),
        }
    }
}

fn default_lambda() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

/// Everything needed to reproduce one set of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub optimizer: OptimizerKind,
    pub eta: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub epochs: usize,
    /// Hidden neurons per layer of the growing network (or of a static run).
    pub n_max: usize,
    /// Aux-weight size target; defaults to `n_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_target: Option<f64>,
    /// Hidden neurons of the static comparison arm; defaults to `n_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_static: Option<usize>,
    #[serde(default = "default_one")]
    pub hidden_layers: usize,
    #[serde(default = "default_true")]
    pub augment_input: bool,
    /// Dense-layer initialization; defaults to uniform `[-1, 1]` for
    /// aux-weight and static runs, standard normal for controller-mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Init>,
    /// Initial growth parameter (size weight or controller weight).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_init: Option<f64>,
    /// Train a static network of the final size next to every growing trial.
    #[serde(default = "default_true")]
    pub compare_static: bool,
    pub seed: u64,
    pub trials: usize,
    #[serde(default)]
    pub adam: AdamParams,
    pub task: TaskSpec,
}

impl TrainConfig {
    pub fn n_target(&self) -> f64 {
        self.n_target.unwrap_or(self.n_max as f64)
    }

    pub fn n_static(&self) -> usize {
        self.n_static.unwrap_or(self.n_max)
    }

    pub fn init(&self) -> Init {
        self.init.unwrap_or(match self.algorithm {
            Algorithm::ControllerMask => Init::Normal,
            _ => Init::Uniform { lo: -1.0, hi: 1.0 },
        })
    }

    /// Whether a static arm runs next to the growing arm.
    pub fn has_static_arm(&self) -> bool {
        self.compare_static && self.algorithm.is_growing()
    }

    /// The static comparison arm: same data, optimizer, schedule and shared
    /// initial weights, with `n_static` hidden neurons.
    pub fn static_counterpart(&self) -> TrainConfig {
        TrainConfig {
            algorithm: Algorithm::Static,
            n_max: self.n_static(),
            n_static: None,
            n_target: None,
            init: Some(self.init()),
            size_init: None,
            compare_static: false,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return fail(format!("eta must be a finite value > 0, got {}", self.eta));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return fail(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.n_max == 0 {
            return fail("n_max must be >= 1".into());
        }
        if self.n_static == Some(0) {
            return fail("n_static must be >= 1".into());
        }
        if self.hidden_layers == 0 {
            return fail("hidden_layers must be >= 1".into());
        }
        if self.trials == 0 {
            return fail("trials must be >= 1".into());
        }
        if let Some(t) = self.n_target {
            if !t.is_finite() {
                return fail("n_target must be finite".into());
            }
        }
        if let Some(s) = self.size_init {
            if !s.is_finite() {
                return fail("size_init must be finite".into());
            }
        }
        if self.algorithm == Algorithm::AuxWeight && self.hidden_layers != 1 {
            return fail("aux_weight supports exactly one hidden layer".into());
        }
        self.init()
            .validate()
            .map_err(|e| Error::Config(format!("init: {e}")))?;
        self.adam
            .validate()
            .map_err(|e| Error::Config(format!("adam: {e}")))?;
        self.task.validate()
    }
}

/// Grid axes for a sweep; absent axes keep the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<usize>>,
}

/// A parsed config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub train: TrainConfig,
    pub sweep: Option<SweepGrid>,
}

impl ConfigFile {
    /// Parses and validates a config file's text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let sweep = match table.remove("sweep") {
            Some(v) => Some(
                v.try_into::<SweepGrid>()
                    .map_err(|e| Error::Config(format!("sweep: {e}")))?,
            ),
            None => None,
        };
        let train: TrainConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        train.validate()?;
        if let Some(grid) = &sweep {
            grid.validate(&train)?;
        }
        Ok(Self { train, sweep })
    }

    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::try_from(&self.train).expect("config serializes");
        if let Some(grid) = &self.sweep {
            table.insert(
                "sweep".into(),
                toml::Value::try_from(grid).expect("grid serializes"),
            );
        }
        toml::to_string(&table).expect("table serializes")
    }
}
