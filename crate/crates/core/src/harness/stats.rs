//! Aggregation over trials and the comparison metrics.

use crate::error::{Error, Result};
use crate::harness::trial::{TrialResult, TrialSet};
use crate::models::Model;
use crate::tasks::Split;

/// Streaming mean and population variance (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Population standard deviation (divides by `n`).
    pub fn std(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            (self.m2 / self.n as f64).max(0.0).sqrt()
        }
    }
}

/// Summary of one arm's trials. Divergent trials are counted but excluded
/// from every mean and deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmAggregate {
    pub mean_test: Vec<f64>,
    pub std_test: Vec<f64>,
    pub mean_train: Vec<f64>,
    pub final_mean: f64,
    pub final_std: f64,
    pub accuracy_mean: Option<f64>,
    pub completed: usize,
    pub divergent: usize,
}

impl ArmAggregate {
    /// More than half of the trials diverged.
    pub fn unreliable(&self) -> bool {
        2 * self.divergent > self.completed + self.divergent
    }
}

pub fn aggregate_arm(trials: &[TrialResult]) -> Result<ArmAggregate> {
    if trials.is_empty() {
        return Err(Error::invalid("no trials to aggregate"));
    }
    let ok: Vec<&TrialResult> = trials.iter().filter(|t| !t.diverged()).collect();
    let divergent = trials.len() - ok.len();
    if ok.is_empty() {
        return Err(Error::AllTrialsDiverged(divergent));
    }
    let epochs = ok[0].test_loss.len();
    let mut test = vec![Welford::default(); epochs];
    let mut train = vec![Welford::default(); epochs];
    let mut fin = Welford::default();
    let mut acc = Welford::default();
    for t in &ok {
        for (w, &x) in test.iter_mut().zip(&t.test_loss) {
            w.push(x);
        }
        for (w, &x) in train.iter_mut().zip(&t.train_loss) {
            w.push(x);
        }
        fin.push(t.final_test_loss().expect("completed trial"));
        if let Some(a) = t.final_accuracy {
            acc.push(a);
        }
    }
    Ok(ArmAggregate {
        mean_test: test.iter().map(Welford::mean).collect(),
        std_test: test.iter().map(Welford::std).collect(),
        mean_train: train.iter().map(Welford::mean).collect(),
        final_mean: fin.mean(),
        final_std: fin.std(),
        accuracy_mean: (acc.count() > 0).then(|| acc.mean()),
        completed: ok.len(),
        divergent,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub primary: ArmAggregate,
    pub baseline: Option<ArmAggregate>,
}

impl AggregateResult {
    /// `R = L^g_f / L^s_f`; `None` without a static arm.
    pub fn loss_ratio(&self) -> Option<Result<f64>> {
        self.baseline
            .as_ref()
            .map(|s| loss_ratio_r(self.primary.final_mean, s.final_mean))
    }

    /// `δL = L^g_f - L^s_f`; `None` without a static arm.
    pub fn delta_l(&self) -> Option<f64> {
        self.baseline
            .as_ref()
            .map(|s| delta_l(self.primary.final_mean, s.final_mean))
    }

    pub fn divergent_count(&self) -> usize {
        self.primary.divergent + self.baseline.as_ref().map_or(0, |b| b.divergent)
    }

    pub fn unreliable(&self) -> bool {
        self.primary.unreliable() || self.baseline.as_ref().is_some_and(ArmAggregate::unreliable)
    }
}

pub fn aggregate(set: &TrialSet) -> Result<AggregateResult> {
    Ok(AggregateResult {
        primary: aggregate_arm(&set.primary)?,
        baseline: set.baseline.as_deref().map(aggregate_arm).transpose()?,
    })
}

/// Ratio of final growing to final static loss.
pub fn loss_ratio_r(growing: f64, static_loss: f64) -> Result<f64> {
    if !(static_loss > 0.0) {
        return Err(Error::UndefinedRatio(static_loss));
    }
    Ok(growing / static_loss)
}

/// Difference of final growing and final static loss; negative favors growing.
pub fn delta_l(growing: f64, static_loss: f64) -> f64 {
    growing - static_loss
}

/// Final control values of controller-mask trials against a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct C1Threshold {
    pub fraction: f64,
    /// Clamped control value per epoch, one row per completed trial.
    pub trajectories: Vec<Vec<f64>>,
}

/// Fraction of completed trials whose final clamped control value is at
/// least `threshold`. Trials without a control trajectory are ignored.
pub fn c1_threshold_stat(trials: &[TrialResult], threshold: f64) -> C1Threshold {
    let trajectories: Vec<Vec<f64>> = trials
        .iter()
        .filter(|t| !t.diverged())
        .filter_map(TrialResult::c1_trajectory)
        .filter(|c| !c.is_empty())
        .collect();
    let hits = trajectories
        .iter()
        .filter(|c| *c.last().expect("non-empty") >= threshold)
        .count();
    let fraction = if trajectories.is_empty() {
        f64::NAN
    } else {
        hits as f64 / trajectories.len() as f64
    };
    C1Threshold {
        fraction,
        trajectories,
    }
}

/// Index of the largest entry; ties go to the lowest index.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of `split` rows whose largest logit is the label.
pub fn accuracy<M: Model + ?Sized>(model: &M, split: &Split) -> Result<f64> {
    let labels = split
        .labels
        .as_ref()
        .ok_or_else(|| Error::invalid("accuracy needs a labelled split"))?;
    if labels.is_empty() {
        return Err(Error::invalid("accuracy of an empty split"));
    }
    let logits = model.predict(&split.inputs)?;
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax(logits.row(i)) == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Algorithm;
    use crate::harness::test_support::tiny;
    use crate::harness::trial::{run_trials, Arm, TrialSeeds};
    use crate::models::{Network, SizeState, StaticMlp};
    use crate::optim::OptimizerKind;
    use crate::tasks::{gen_spirals, SpiralSpec};
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn fake(trial: usize, test: Vec<f64>, diverged: bool) -> TrialResult {
        let n = test.len();
        TrialResult {
            trial,
            arm: Arm::Primary,
            seeds: TrialSeeds::derive(0, trial),
            train_loss: test.clone(),
            objective: test.clone(),
            sizes: vec![SizeState::Fixed { hidden: 1 }; n],
            test_loss: test,
            diverged_at: diverged.then_some(n + 1),
            final_accuracy: None,
            model: Network::Static(StaticMlp::new(&[1, 1, 1]).unwrap()),
        }
    }

    fn two_pass(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    #[test]
    fn single_trial_has_zero_spread() {
        let agg = aggregate_arm(&[fake(0, vec![3.0, 2.0, 1.0], false)]).unwrap();
        assert_eq!(agg.mean_test, vec![3.0, 2.0, 1.0]);
        assert_eq!(agg.std_test, vec![0.0; 3]);
        assert_eq!((agg.final_mean, agg.final_std), (1.0, 0.0));
    }

    proptest! {
        #[test]
        fn welford_matches_two_pass(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 1..12)
        ) {
            let trials: Vec<_> = rows.iter().enumerate().map(|(i, r)| fake(i, r.clone(), false)).collect();
            let agg = aggregate_arm(&trials).unwrap();
            for e in 0..4 {
                let col: Vec<f64> = rows.iter().map(|r| r[e]).collect();
                let (m, s) = two_pass(&col);
                prop_assert!((agg.mean_test[e] - m).abs() <= 1e-9 * (1.0 + m.abs()));
                prop_assert!((agg.std_test[e] - s).abs() <= 1e-8 * (1.0 + s));
            }
        }

        #[test]
        fn ratio_and_difference_agree_in_sign(g in 1e-6f64..10.0, s in 1e-6f64..10.0) {
            let r = loss_ratio_r(g, s).unwrap();
            let d = delta_l(g, s);
            if d > 0.0 {
                prop_assert!(r >= 1.0);
            }
            if d < 0.0 {
                prop_assert!(r <= 1.0);
            }
        }
    }

    #[test]
    fn divergent_trials_are_counted_not_averaged() {
        let trials = vec![
            fake(0, vec![1.0, 1.0], false),
            fake(1, vec![f64::INFINITY], true),
            fake(2, vec![3.0, 3.0], false),
        ];
        let agg = aggregate_arm(&trials).unwrap();
        assert_eq!((agg.completed, agg.divergent), (2, 1));
        assert_eq!(agg.final_mean, 2.0);
        assert!(!agg.unreliable());
        let mostly_bad = vec![
            fake(0, vec![1.0], false),
            fake(1, vec![], true),
            fake(2, vec![], true),
        ];
        assert!(aggregate_arm(&mostly_bad).unwrap().unreliable());
        let all_bad = vec![fake(0, vec![], true)];
        assert!(matches!(
            aggregate_arm(&all_bad),
            Err(Error::AllTrialsDiverged(1))
        ));
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(loss_ratio_r(0.3, 0.3).unwrap(), 1.0);
        assert!((loss_ratio_r(0.01, 0.05).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(
            loss_ratio_r(1.0, 0.0),
            Err(Error::UndefinedRatio(_))
        ));
        assert_eq!(delta_l(0.5, 0.5), 0.0);
    }

    #[test]
    fn identical_arms_give_unit_ratio() {
        let mut cfg = tiny(Algorithm::Static, OptimizerKind::GdBatch);
        cfg.trials = 2;
        let set = run_trials(&cfg).unwrap();
        let paired = TrialSet {
            baseline: Some(set.primary.clone()),
            primary: set.primary,
        };
        let agg = aggregate(&paired).unwrap();
        assert_eq!(agg.loss_ratio().unwrap().unwrap(), 1.0);
        assert_eq!(agg.delta_l(), Some(0.0));
    }

    fn with_c1(trial: usize, c1: &[f64]) -> TrialResult {
        let mut t = fake(trial, vec![0.0; c1.len()], false);
        t.sizes = c1
            .iter()
            .map(|&c| SizeState::Controller {
                c1_raw: c,
                c1: c.clamp(0.0, 1.0),
                effective: 0.0,
            })
            .collect();
        t
    }

    #[test]
    fn c1_threshold_examples() {
        let all_open = [with_c1(0, &[0.2, 1.0]), with_c1(1, &[0.5, 1.3])];
        assert_eq!(c1_threshold_stat(&all_open, 0.7).fraction, 1.0);
        let mixed = [
            with_c1(0, &[0.1, 0.2]),
            with_c1(1, &[0.5, 0.9]),
            with_c1(2, &[-0.5, -0.1]),
        ];
        let stat = c1_threshold_stat(&mixed, 0.7);
        assert!((stat.fraction - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(stat.trajectories[2], vec![0.0, 0.0]);
        assert_eq!(c1_threshold_stat(&mixed, 0.0).fraction, 1.0);
    }

    #[test]
    fn constant_class_zero_has_half_accuracy_on_two_balanced_classes() {
        let data = gen_spirals(&SpiralSpec::new(2, 50), 4).unwrap();
        // zero weights and a bias favoring class 0
        let mut params = StaticMlp::new(&[2, 3, 2]).unwrap().params().to_vec();
        params[3] = Tensor::vector(vec![1.0, 0.0]);
        let m = StaticMlp::from_params(&[2, 3, 2], params).unwrap();
        let all = data.train().rows(&[]);
        assert!(accuracy(&m, &all).is_err());
        let mut split = data.test();
        let zeros = split
            .labels
            .as_ref()
            .unwrap()
            .iter()
            .filter(|&&y| y == 0)
            .count();
        let acc = accuracy(&m, &split).unwrap();
        assert_eq!(acc, zeros as f64 / split.len() as f64);
        // on a balanced split the constant predictor scores exactly one half
        let zeros: Vec<usize> = (0..split.len())
            .filter(|&i| split.labels.as_ref().unwrap()[i] == 0)
            .collect();
        let ones: Vec<usize> = (0..split.len())
            .filter(|&i| split.labels.as_ref().unwrap()[i] == 1)
            .collect();
        let k = zeros.len().min(ones.len());
        let balanced: Vec<usize> = zeros[..k].iter().chain(&ones[..k]).copied().collect();
        split = split.rows(&balanced);
        assert_eq!(accuracy(&m, &split).unwrap(), 0.5);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }
}
