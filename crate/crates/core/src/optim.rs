//! Gradient descent, Adam, and the per-epoch training step.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::tasks::Split;
use crate::tensor::Tensor;

fn check_pairs(params: &[Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len()
        || params
            .iter()
            .zip(grads)
            .any(|(p, g)| p.shape() != g.shape())
    {
        return Err(Error::shape(
            "optimizer step",
            "parameters and gradients differ",
        ));
    }
    Ok(())
}

/// `θ ← θ - η∇θ` for every parameter.
pub fn gd_step(params: &mut [Tensor], grads: &[Tensor], eta: f64) -> Result<()> {
    check_pairs(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (v, d) in p.data_mut().iter_mut().zip(g.data()) {
            *v -= eta * d;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    #[serde(default = "AdamParams::default_beta1")]
    pub beta1: f64,
    #[serde(default = "AdamParams::default_beta2")]
    pub beta2: f64,
    #[serde(default = "AdamParams::default_eps")]
    pub eps: f64,
}

impl AdamParams {
    fn default_beta1() -> f64 {
        0.9
    }
    fn default_beta2() -> f64 {
        0.999
    }
    fn default_eps() -> f64 {
        1e-8
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps >= 0.0
            && self.eps.is_finite();
        if !ok {
            return Err(Error::invalid(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: Self::default_beta1(),
            beta2: Self::default_beta2(),
            eps: Self::default_eps(),
        }
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
    pub hyper: AdamParams,
}

impl AdamState {
    pub fn new(params: &[Tensor], hyper: AdamParams) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
            hyper,
        }
    }
}

/// One bias-corrected Adam step.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    eta: f64,
) -> Result<()> {
    check_pairs(params, grads)?;
    check_pairs(&state.m, grads)?;
    let AdamParams { beta1, beta2, eps } = state.hyper;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        let slots = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut());
        for (((p, &g), m), v) in slots {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= eta * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// One step per epoch on the full training split.
    GdBatch,
    /// One step per training pair, in a freshly shuffled order each epoch.
    GdStochastic,
    /// Full-batch Adam, one step per epoch.
    Adam,
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Gd { eta: f64, stochastic: bool },
    Adam { eta: f64, state: AdamState },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, eta: f64, params: &[Tensor], adam: AdamParams) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate must be > 0, got {eta}"
            )));
        }
        Ok(match kind {
            OptimizerKind::GdBatch => Optimizer::Gd {
                eta,
                stochastic: false,
            },
            OptimizerKind::GdStochastic => Optimizer::Gd {
                eta,
                stochastic: true,
            },
            OptimizerKind::Adam => {
                adam.validate()?;
                Optimizer::Adam {
                    eta,
                    state: AdamState::new(params, adam),
                }
            }
        })
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            Optimizer::Gd {
                stochastic: true,
                ..
            }
        )
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        match self {
            Optimizer::Gd { eta, .. } => gd_step(params, grads, *eta),
            Optimizer::Adam { eta, state } => adam_step(params, grads, state, *eta),
        }
    }
}

/// Task loss family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    MeanSquaredError,
    SoftmaxCrossEntropy,
}

impl Objective {
    pub fn for_split(split: &Split) -> Self {
        if split.labels.is_some() {
            Objective::SoftmaxCrossEntropy
        } else {
            Objective::MeanSquaredError
        }
    }
}

/// Loss nodes of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub base: Var,
    pub size: Option<Var>,
    pub total: Var,
    pub output: Var,
}

/// Records `base + λ·size` for `model` on `split`.
pub fn build_loss<M: Model + ?Sized>(
    g: &mut Graph,
    model: &M,
    vars: &[Var],
    split: &Split,
    lambda: f64,
) -> Result<LossNodes> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    let x = g.constant(split.inputs.clone());
    let fwd = model.forward(g, vars, x)?;
    let base = match &split.labels {
        Some(labels) => g.softmax_cross_entropy(fwd.output, labels.clone())?,
        None => {
            let y = g.constant(split.targets.clone());
            let diff = g.sub(fwd.output, y)?;
            let sq = g.square(diff)?;
            g.reduce_mean(sq)?
        }
    };
    let total = match fwd.size_loss {
        Some(size) if lambda > 0.0 => {
            let l = g.constant(Tensor::scalar(lambda));
            let weighted = g.mul(l, size)?;
            g.add(base, weighted)?
        }
        _ => base,
    };
    Ok(LossNodes {
        base,
        size: fwd.size_loss,
        total,
        output: fwd.output,
    })
}

/// Gradients of the total loss on `split` with respect to every parameter.
pub fn loss_and_grads<M: Model + ?Sized>(
    model: &M,
    split: &Split,
    lambda: f64,
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let vars = model.bind(&mut g);
    let nodes = build_loss(&mut g, model, &vars, split, lambda)?;
    g.backward(nodes.total)?;
    let grads = vars.iter().map(|&v| g.grad(v)).collect();
    Ok((g.value(nodes.total).item(), grads))
}

/// Loss values without gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub base: f64,
    pub total: f64,
}

pub fn evaluate<M: Model + ?Sized>(model: &M, split: &Split, lambda: f64) -> Result<Evaluation> {
    let mut g = Graph::new();
    let vars: Vec<Var> = model
        .params()
        .iter()
        .map(|p| g.constant(p.clone()))
        .collect();
    let nodes = build_loss(&mut g, model, &vars, split, lambda)?;
    Ok(Evaluation {
        base: g.value(nodes.base).item(),
        total: g.value(nodes.total).item(),
    })
}

/// Losses recorded after one epoch's updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLosses {
    /// Task loss on the training split.
    pub train: f64,
    /// Task loss on the test split.
    pub test: f64,
    /// Training objective including the weighted size loss.
    pub objective: f64,
    /// Optimizer steps taken this epoch.
    pub steps: usize,
}

/// Runs one epoch: a single full-batch step, or one step per shuffled
/// training pair for stochastic GD. Non-finite losses abort with
/// [`Error::Diverged`].
pub fn train_epoch<M: Model + ?Sized>(
    model: &mut M,
    train: &Split,
    test: &Split,
    lambda: f64,
    optimizer: &mut Optimizer,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<EpochLosses> {
    if train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let mut steps = 0;
    if optimizer.is_stochastic() {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(rng);
        for i in order {
            let pair = train.rows(&[i]);
            let (loss, grads) = loss_and_grads(model, &pair, lambda)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            optimizer.step(model.params_mut(), &grads)?;
            steps += 1;
        }
    } else {
        let (loss, grads) = loss_and_grads(model, train, lambda)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        optimizer.step(model.params_mut(), &grads)?;
        steps += 1;
    }
    let tr = evaluate(model, train, lambda)?;
    let test_loss = if test.is_empty() {
        f64::NAN
    } else {
        evaluate(model, test, lambda)?.base
    };
    if !tr.total.is_finite() || !(test.is_empty() || test_loss.is_finite()) {
        return Err(Error::Diverged {
            epoch,
            loss: tr.total,
        });
    }
    Ok(EpochLosses {
        train: tr.base,
        test: test_loss,
        objective: tr.total,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_uniform, AuxWeightNet, StaticMlp};
    use crate::seeding::rng_from;
    use crate::tasks::{gen_regression, RegressionTarget};

    #[test]
    fn gd_examples() {
        let mut p = vec![Tensor::scalar(1.0)];
        gd_step(&mut p, &[Tensor::scalar(2.0)], 0.1).unwrap();
        assert!((p[0].item() - 0.8).abs() < 1e-15);
        gd_step(&mut p, &[Tensor::scalar(0.0)], 0.1).unwrap();
        assert!((p[0].item() - 0.8).abs() < 1e-15);
        assert!(gd_step(&mut p, &[Tensor::vector(vec![1.0, 2.0])], 0.1).is_err());
    }

    #[test]
    fn gd_contracts_on_quadratic_bowl() {
        let mut p = vec![Tensor::scalar(3.0)];
        let mut prev = 3.0f64;
        for _ in 0..50 {
            let g = Tensor::scalar(2.0 * p[0].item());
            gd_step(&mut p, &[g], 0.3).unwrap();
            assert!(p[0].item().abs() < prev.abs());
            prev = p[0].item();
        }
    }

    #[test]
    fn gd_scaled_gradient_equals_scaled_rate() {
        let g = Tensor::vector(vec![0.3, -1.2, 4.0]);
        let lam = 0.37;
        let mut a = vec![Tensor::vector(vec![1.0, 2.0, 3.0])];
        let mut b = a.clone();
        gd_step(&mut a, &[g.map(|v| lam * v)], 0.01).unwrap();
        gd_step(&mut b, std::slice::from_ref(&g), 0.01 * lam).unwrap();
        for (x, y) in a[0].data().iter().zip(b[0].data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_first_step_is_sign_like() {
        let hyper = AdamParams {
            eps: 0.0,
            ..AdamParams::default()
        };
        for g in [3.0, -0.002] {
            let mut p = vec![Tensor::scalar(0.0)];
            let mut s = AdamState::new(&p, hyper);
            adam_step(&mut p, &[Tensor::scalar(g)], &mut s, 0.01).unwrap();
            assert!((p[0].item() + 0.01 * g.signum()).abs() < 1e-12);
            assert_eq!(s.t, 1);
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = vec![Tensor::vector(vec![0.5, -0.5])];
        let mut s = AdamState::new(&p, AdamParams::default());
        for _ in 0..10 {
            adam_step(&mut p, &[Tensor::vector(vec![0.0, 0.0])], &mut s, 0.1).unwrap();
        }
        assert_eq!(p[0].data(), &[0.5, -0.5]);
        assert!(s.v[0].data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn adam_is_invariant_to_gradient_scale() {
        let hyper = AdamParams {
            eps: 1e-12,
            ..AdamParams::default()
        };
        let grads = [0.7, -0.1, 0.45, 2.0, -3.3, 0.01];
        let run = |lam: f64| {
            let mut p = vec![Tensor::scalar(0.0)];
            let mut s = AdamState::new(&p, hyper);
            let mut traj = vec![];
            for g in grads {
                adam_step(&mut p, &[Tensor::scalar(lam * g)], &mut s, 0.001).unwrap();
                traj.push(p[0].item());
            }
            traj
        };
        let base = run(1.0);
        for lam in [0.1, 10.0] {
            for (a, b) in run(lam).iter().zip(&base) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn step_counts_per_mode() {
        let d = gen_regression(40, RegressionTarget::BesselSimple, 2).unwrap();
        let (train, test) = (d.train(), d.test());
        let mut m = StaticMlp::new(&[1, 3, 1]).unwrap();
        init_uniform(&mut m, -1.0, 1.0, 1).unwrap();
        let mut rng = rng_from(0);
        let mut batch = Optimizer::new(
            OptimizerKind::GdBatch,
            1e-3,
            m.params(),
            AdamParams::default(),
        )
        .unwrap();
        let e = train_epoch(&mut m, &train, &test, 0.0, &mut batch, &mut rng, 0).unwrap();
        assert_eq!(e.steps, 1);
        let mut sgd = Optimizer::new(
            OptimizerKind::GdStochastic,
            1e-3,
            m.params(),
            AdamParams::default(),
        )
        .unwrap();
        let e = train_epoch(&mut m, &train, &test, 0.0, &mut sgd, &mut rng, 1).unwrap();
        assert_eq!(e.steps, 32);
    }

    #[test]
    fn constant_target_converges_to_mean() {
        // bias-only fit of a constant: all other weights zero keeps the net linear in b
        let mut split = gen_regression(20, RegressionTarget::BesselSimple, 5)
            .unwrap()
            .train();
        split.targets = split.targets.map(|_| 0.25);
        let mut m = StaticMlp::new(&[1, 2, 1]).unwrap();
        let mut opt = Optimizer::new(
            OptimizerKind::GdBatch,
            0.1,
            m.params(),
            AdamParams::default(),
        )
        .unwrap();
        let mut rng = rng_from(0);
        for e in 0..500 {
            train_epoch(&mut m, &split, &split, 0.0, &mut opt, &mut rng, e).unwrap();
        }
        assert!((m.params()[3].item() - 0.25).abs() < 1e-6);
    }

    #[test]
    fn divergence_is_reported() {
        let split = gen_regression(20, RegressionTarget::BesselSimple, 5)
            .unwrap()
            .train();
        let mut m = AuxWeightNet::new(1, 3, 1, 3.0).unwrap();
        let mut opt = Optimizer::new(
            OptimizerKind::GdBatch,
            1e200,
            m.params(),
            AdamParams::default(),
        )
        .unwrap();
        let mut rng = rng_from(0);
        let mut err = None;
        for e in 0..10 {
            if let Err(x) = train_epoch(&mut m, &split, &split, 1.0, &mut opt, &mut rng, e) {
                err = Some(x);
                break;
            }
        }
        assert!(matches!(err, Some(Error::Diverged { .. })));
    }
}
