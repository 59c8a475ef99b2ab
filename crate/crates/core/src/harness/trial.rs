//! Single trials and paired multi-trial runs.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::config::{Algorithm, TrainConfig};
use crate::harness::stats::accuracy;
use crate::models::{AuxWeightNet, ControllerMaskNet, Model, Network, SizeState, StaticMlp};
use crate::optim::{train_epoch, Optimizer};
use crate::seeding::{rng_from, stream, trial_seed};
use crate::tasks::Dataset;

/// Which side of a paired comparison a trial belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    /// The configured algorithm (growing, or static for a static-only config).
    Primary,
    /// Static network of the primary arm's final size.
    Static,
}

/// Seeds used by one trial. Both arms of a pair use the same values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub data: u64,
    pub init: u64,
    pub shuffle: u64,
}

impl TrialSeeds {
    pub fn derive(base_seed: u64, trial: usize) -> Self {
        Self {
            data: trial_seed(base_seed, trial, stream::DATA),
            init: trial_seed(base_seed, trial, stream::INIT),
            shuffle: trial_seed(base_seed, trial, stream::SHUFFLE),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    pub arm: Arm,
    pub seeds: TrialSeeds,
    /// Per-epoch task loss on the training split.
    pub train_loss: Vec<f64>,
    /// Per-epoch task loss on the test split.
    pub test_loss: Vec<f64>,
    /// Per-epoch training objective including the weighted size loss.
    pub objective: Vec<f64>,
    /// Size readout after each epoch.
    pub sizes: Vec<SizeState>,
    /// Epoch (1-based) at which a non-finite loss appeared.
    pub diverged_at: Option<usize>,
    pub final_accuracy: Option<f64>,
    pub model: Network,
}

impl TrialResult {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// Test loss after the last epoch; `None` for a divergent trial.
    pub fn final_test_loss(&self) -> Option<f64> {
        if self.diverged() {
            None
        } else {
            self.test_loss.last().copied()
        }
    }

    /// Clamped control values per epoch, for controller-mask trials.
    pub fn c1_trajectory(&self) -> Option<Vec<f64>> {
        self.sizes
            .iter()
            .map(|s| match *s {
                SizeState::Controller { c1, .. } => Some(c1),
                _ => None,
            })
            .collect()
    }
}

/// Builds the untrained network for `cfg` on `data`.
pub fn build_model(cfg: &TrainConfig, data: &Dataset, init_seed: u64) -> Result<Network> {
    let d_in = data.input_dim();
    let d_out = data.output_dim();
    let mut model = match cfg.algorithm {
        Algorithm::AuxWeight => {
            let mut m = AuxWeightNet::new(d_in, cfg.n_max, d_out, cfg.n_target())?;
            if let Some(n) = cfg.size_init {
                m.set_size(n);
            }
            Network::Aux(m)
        }
        Algorithm::ControllerMask => {
            let mut m = ControllerMaskNet::new(
                d_in,
                cfg.n_max,
                cfg.hidden_layers,
                d_out,
                cfg.augment_input,
            )?;
            if let Some(w) = cfg.size_init {
                m.set_controller(w);
            }
            Network::Mask(m)
        }
        Algorithm::Static => {
            let mut sizes = vec![d_in];
            sizes.extend(std::iter::repeat_n(cfg.n_max, cfg.hidden_layers));
            sizes.push(d_out);
            Network::Static(StaticMlp::new(&sizes)?)
        }
    };
    cfg.init().apply(&mut model, init_seed)?;
    Ok(model)
}

/// Trains one trial of `cfg` for `cfg.epochs` epochs.
///
/// Data, initial weights and shuffling are seeded from `(cfg.seed, trial)`
/// only, so a static counterpart run with the same index sees the same data
/// and the same initial values for every weight both networks share. A
/// non-finite loss stops training and sets `diverged_at`.
pub fn run_trial(cfg: &TrainConfig, trial: usize) -> Result<TrialResult> {
    run_arm(cfg, trial, Arm::Primary)
}

fn run_arm(cfg: &TrainConfig, trial: usize, arm: Arm) -> Result<TrialResult> {
    cfg.validate()?;
    let seeds = TrialSeeds::derive(cfg.seed, trial);
    let data = cfg.task.generate(seeds.data)?;
    let train = data.train();
    let test = data.test();
    let mut model = build_model(cfg, &data, seeds.init)?;
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.eta, model.params(), cfg.adam)?;
    let mut rng = rng_from(seeds.shuffle);

    let mut result = TrialResult {
        trial,
        arm,
        seeds,
        train_loss: Vec::with_capacity(cfg.epochs),
        test_loss: Vec::with_capacity(cfg.epochs),
        objective: Vec::with_capacity(cfg.epochs),
        sizes: Vec::with_capacity(cfg.epochs),
        diverged_at: None,
        final_accuracy: None,
        model: model.clone(),
    };
    for epoch in 1..=cfg.epochs {
        match train_epoch(
            &mut model,
            &train,
            &test,
            cfg.lambda,
            &mut optimizer,
            &mut rng,
            epoch,
        ) {
            Ok(l) => {
                result.train_loss.push(l.train);
                result.test_loss.push(l.test);
                result.objective.push(l.objective);
                result.sizes.push(model.size_state());
            }
            Err(Error::Diverged { .. }) => {
                result.diverged_at = Some(epoch);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if !result.diverged() && test.labels.is_some() {
        result.final_accuracy = Some(accuracy(&model, &test)?);
    }
    result.model = model;
    Ok(result)
}

/// All trials of one config, in trial order.
#[derive(Debug, Clone)]
pub struct TrialSet {
    pub primary: Vec<TrialResult>,
    /// Static comparison arm, when the config asks for one.
    pub baseline: Option<Vec<TrialResult>>,
}

/// Runs `cfg.trials` trials of every arm on the current rayon pool.
///
/// Trials are independent and keyed by `(arm, trial)`; results come back in
/// trial order whatever the interleaving.
pub fn run_trials(cfg: &TrainConfig) -> Result<TrialSet> {
    cfg.validate()?;
    let static_cfg = cfg.has_static_arm().then(|| cfg.static_counterpart());
    let mut jobs: Vec<(Arm, usize)> = (0..cfg.trials).map(|t| (Arm::Primary, t)).collect();
    if static_cfg.is_some() {
        jobs.extend((0..cfg.trials).map(|t| (Arm::Static, t)));
    }
    let mut results = jobs
        .par_iter()
        .map(|&(arm, t)| match arm {
            Arm::Primary => run_arm(cfg, t, arm),
            Arm::Static => run_arm(static_cfg.as_ref().expect("static arm configured"), t, arm),
        })
        .collect::<Result<Vec<_>>>()?;
    let baseline = static_cfg.map(|_| results.split_off(cfg.trials));
    Ok(TrialSet {
        primary: results,
        baseline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::TaskSpec;
    use crate::harness::test_support::tiny;
    use crate::models::Init;
    use crate::optim::OptimizerKind;

    #[test]
    fn trial_records_full_trajectories() {
        for alg in [
            Algorithm::AuxWeight,
            Algorithm::ControllerMask,
            Algorithm::Static,
        ] {
            let cfg = tiny(alg, OptimizerKind::GdBatch);
            let r = run_trial(&cfg, 0).unwrap();
            assert!(!r.diverged());
            assert_eq!(r.train_loss.len(), cfg.epochs);
            assert_eq!(r.test_loss.len(), cfg.epochs);
            assert_eq!(r.sizes.len(), cfg.epochs);
            assert!(r.final_test_loss().unwrap().is_finite());
            assert!(r.final_accuracy.is_none());
        }
    }

    #[test]
    fn controller_size_trajectory_is_bounded() {
        let mut cfg = tiny(Algorithm::ControllerMask, OptimizerKind::Adam);
        cfg.eta = 0.05;
        cfg.epochs = 40;
        let r = run_trial(&cfg, 1).unwrap();
        for s in &r.sizes {
            let SizeState::Controller {
                c1_raw,
                c1,
                effective,
            } = *s
            else {
                panic!("expected controller state");
            };
            assert_eq!(c1, c1_raw.clamp(0.0, 1.0));
            assert!((0.0..=cfg.n_max as f64).contains(&effective));
        }
        let c1 = r.c1_trajectory().unwrap();
        assert!(
            c1.last().unwrap() > &c1[0],
            "size loss should open the mask"
        );
    }

    #[test]
    fn arms_share_data_and_initial_weights() {
        let cfg = tiny(Algorithm::ControllerMask, OptimizerKind::GdBatch);
        let seeds = TrialSeeds::derive(cfg.seed, 2);
        let data_g = cfg.task.generate(seeds.data).unwrap();
        let s_cfg = cfg.static_counterpart();
        let data_s = s_cfg
            .task
            .generate(TrialSeeds::derive(s_cfg.seed, 2).data)
            .unwrap();
        assert_eq!(data_g, data_s);

        let g = build_model(&cfg, &data_g, seeds.init).unwrap();
        let s = build_model(&s_cfg, &data_s, seeds.init).unwrap();
        // W0 of the growing net has an extra trailing column for the control input.
        let (gw, sw) = (&g.params()[1], &s.params()[0]);
        for r in 0..cfg.n_max {
            assert_eq!(gw.data()[r * 2], sw.data()[r]);
        }
        assert_eq!(&g.params()[2..], &s.params()[1..]);
    }

    #[test]
    fn run_trials_pairs_arms_in_order() {
        let cfg = tiny(Algorithm::AuxWeight, OptimizerKind::GdStochastic);
        let set = run_trials(&cfg).unwrap();
        let base = set.baseline.as_ref().unwrap();
        assert_eq!(set.primary.len(), 3);
        assert_eq!(base.len(), 3);
        for (t, (p, s)) in set.primary.iter().zip(base).enumerate() {
            assert_eq!((p.trial, s.trial), (t, t));
            assert_eq!((p.arm, s.arm), (Arm::Primary, Arm::Static));
            assert_eq!(p.seeds, s.seeds);
        }
        let again = run_trials(&cfg).unwrap();
        assert_eq!(again.primary[1].test_loss, set.primary[1].test_loss);
    }

    #[test]
    fn divergence_sets_flag_and_truncates() {
        let mut cfg = tiny(Algorithm::Static, OptimizerKind::GdBatch);
        cfg.eta = 1e6;
        cfg.epochs = 50;
        cfg.init = Some(Init::Uniform { lo: -1.0, hi: 1.0 });
        let r = run_trial(&cfg, 0).unwrap();
        let e = r.diverged_at.expect("huge step diverges");
        assert_eq!(r.test_loss.len(), e - 1);
        assert!(r.final_test_loss().is_none());
    }

    #[test]
    fn spiral_trials_report_accuracy() {
        let mut cfg = tiny(Algorithm::ControllerMask, OptimizerKind::Adam);
        cfg.task = TaskSpec::spiral(crate::tasks::SpiralSpec::new(3, 10));
        let r = run_trial(&cfg, 0).unwrap();
        let a = r.final_accuracy.unwrap();
        assert!((0.0..=1.0).contains(&a));
        assert_eq!(r.model.output_dim(), 3);
    }
}
