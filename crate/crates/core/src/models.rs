//! Static MLP baseline and the two growing networks.
//!
//! All models keep their trainable tensors in one flat `Vec<Tensor>` so the
//! optimizers and the checkpoint format can treat them uniformly. A forward
//! pass first binds those tensors as graph leaves ([`Model::bind`]) and then
//! records the computation against the bound handles.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, UnaryOp, Var};
use crate::error::{Error, Result};
use crate::growth::{clamp_control, effective_size_unchecked, psi_unchecked};
use crate::seeding::{derive_seed, rng_from};
use crate::tensor::Tensor;

/// Initial value of the auxiliary size weight: the network starts almost empty.
pub const AUX_SIZE_INIT: f64 = 0.1;
/// Initial controller weight: the mask starts nearly closed.
pub const CONTROLLER_INIT: f64 = 0.01;

/// Graph handles produced by a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub output: Var,
    /// Unweighted size penalty, for growing models.
    pub size_loss: Option<Var>,
}

/// Size readout of a model's current parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizeState {
    Fixed {
        hidden: usize,
    },
    Aux {
        /// The size weight `N` itself.
        n: f64,
        /// `Σᵢ ψ(i - N)`.
        active: f64,
    },
    Controller {
        c1_raw: f64,
        c1: f64,
        effective: f64,
    },
}

impl SizeState {
    /// `(size_metric, effective_size)` as logged per epoch.
    pub fn metrics(&self) -> (f64, f64) {
        match *self {
            SizeState::Fixed { hidden } => (hidden as f64, hidden as f64),
            SizeState::Aux { n, active } => (n, active),
            SizeState::Controller {
                c1_raw, effective, ..
            } => (c1_raw, effective),
        }
    }
}

pub trait Model {
    fn params(&self) -> &[Tensor];
    fn params_mut(&mut self) -> &mut [Tensor];
    fn param_names(&self) -> Vec<String>;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn size_state(&self) -> SizeState;

    /// Records the forward pass on `x[B×input_dim]` using leaves from [`Model::bind`].
    fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Forward>;

    /// `(weight, bias)` pairs of the dense layers, in layer order.
    fn dense_layers_mut(&mut self) -> Vec<(&mut Tensor, &mut Tensor)>;

    fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.params()
            .iter()
            .map(|p| g.param_tensor(p.clone()))
            .collect()
    }

    /// Forward pass without keeping the graph.
    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let xv = g.constant(x.clone());
        let out = self.forward(&mut g, &vars, xv)?;
        Ok(g.value(out.output).clone())
    }
}

fn check_input(x: &Tensor, d_in: usize) -> Result<()> {
    match x.dims2() {
        Some((_, c)) if c == d_in => Ok(()),
        _ => Err(Error::shape(
            "forward",
            format!("expected inputs [B×{d_in}], got {:?}", x.shape()),
        )),
    }
}

/// Conventional dense network: `tanh` hidden layers and an identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticMlp {
    layer_sizes: Vec<usize>,
    params: Vec<Tensor>,
    hidden_activation: UnaryOp,
    output_activation: UnaryOp,
}

impl StaticMlp {
    /// Zero-initialized network with `layer_sizes = [d_in, h₁, …, d_out]`.
    pub fn new(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::invalid(format!(
                "layer sizes {layer_sizes:?} need an input and an output, all non-zero"
            )));
        }
        let params = layer_sizes
            .windows(2)
            .flat_map(|w| [Tensor::zeros(&[w[1], w[0]]), Tensor::zeros(&[w[1]])])
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params,
            hidden_activation: UnaryOp::Tanh,
            output_activation: UnaryOp::Identity,
        })
    }

    pub fn from_params(layer_sizes: &[usize], params: Vec<Tensor>) -> Result<Self> {
        let mut m = Self::new(layer_sizes)?;
        if params.len() != m.params.len()
            || params
                .iter()
                .zip(&m.params)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::invalid("parameter shapes do not match layer sizes"));
        }
        m.params = params;
        Ok(m)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn hidden_activation(&self) -> UnaryOp {
        self.hidden_activation
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Forward pass with an optional per-hidden-layer column mask.
    fn forward_masked(
        &self,
        g: &mut Graph,
        vars: &[Var],
        x: Var,
        mask: Option<Var>,
    ) -> Result<Var> {
        check_input(g.value(x), self.layer_sizes[0])?;
        let last = self.num_layers() - 1;
        let mut h = x;
        for l in 0..=last {
            h = g.affine(h, vars[2 * l], vars[2 * l + 1])?;
            if l < last {
                h = g.unary(self.hidden_activation, h)?;
                if let Some(m) = mask {
                    h = g.scale_columns(h, m)?;
                }
            } else if self.output_activation != UnaryOp::Identity {
                h = g.unary(self.output_activation, h)?;
            }
        }
        Ok(h)
    }
}

impl Model for StaticMlp {
    fn params(&self) -> &[Tensor] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.num_layers())
            .flat_map(|l| [format!("W{l}"), format!("b{l}")])
            .collect()
    }

    fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn size_state(&self) -> SizeState {
        SizeState::Fixed {
            hidden: self.layer_sizes[1..self.layer_sizes.len() - 1].iter().sum(),
        }
    }

    fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Forward> {
        Ok(Forward {
            output: self.forward_masked(g, vars, x, None)?,
            size_loss: None,
        })
    }

    fn dense_layers_mut(&mut self) -> Vec<(&mut Tensor, &mut Tensor)> {
        self.params
            .chunks_exact_mut(2)
            .map(|pair| {
                let (w, b) = pair.split_at_mut(1);
                (&mut w[0], &mut b[0])
            })
            .collect()
    }
}

/// One hidden layer whose size is the trainable weight `N`, prepended as
/// `N = id(w·1 + 0)`. Hidden neuron `i` (0-based) is gated by `ψ(i - N)`,
/// so integer `N` means exactly `N` fully active neurons.
///
/// Parameter layout: `[N, W1, b1, W2, b2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxWeightNet {
    n_max: usize,
    n_target: f64,
    d_in: usize,
    d_out: usize,
    params: Vec<Tensor>,
}

impl AuxWeightNet {
    pub fn new(d_in: usize, n_max: usize, d_out: usize, n_target: f64) -> Result<Self> {
        if d_in == 0 || d_out == 0 || n_max == 0 {
            return Err(Error::invalid("aux-weight dimensions must be non-zero"));
        }
        if !n_target.is_finite() {
            return Err(Error::invalid("N_target must be finite"));
        }
        Ok(Self {
            n_max,
            n_target,
            d_in,
            d_out,
            params: vec![
                Tensor::scalar(AUX_SIZE_INIT),
                Tensor::zeros(&[n_max, d_in]),
                Tensor::zeros(&[n_max]),
                Tensor::zeros(&[d_out, n_max]),
                Tensor::zeros(&[d_out]),
            ],
        })
    }

    pub fn from_params(
        d_in: usize,
        n_max: usize,
        d_out: usize,
        n_target: f64,
        params: Vec<Tensor>,
    ) -> Result<Self> {
        let mut m = Self::new(d_in, n_max, d_out, n_target)?;
        if params.len() != m.params.len()
            || params
                .iter()
                .zip(&m.params)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::invalid(
                "parameter shapes do not match aux-weight layout",
            ));
        }
        m.params = params;
        Ok(m)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn n_target(&self) -> f64 {
        self.n_target
    }

    /// The size weight `N`.
    pub fn size(&self) -> f64 {
        self.params[0].item()
    }

    pub fn set_size(&mut self, n: f64) {
        self.params[0] = Tensor::scalar(n);
    }

    /// `ψ(i - N)` for each hidden neuron.
    pub fn gates(&self) -> Vec<f64> {
        let n = self.size();
        (0..self.n_max)
            .map(|i| psi_unchecked(i as f64 - n))
            .collect()
    }

    /// Fractional count of participating neurons, `Σᵢ ψ(i - N)`.
    pub fn active_neuron_count(&self) -> f64 {
        self.gates().iter().sum()
    }

    /// The same weights read as an ungated static network.
    pub fn to_static(&self) -> StaticMlp {
        StaticMlp::from_params(
            &[self.d_in, self.n_max, self.d_out],
            self.params[1..].to_vec(),
        )
        .expect("aux-weight layout matches a one-hidden-layer MLP")
    }
}

impl Model for AuxWeightNet {
    fn params(&self) -> &[Tensor] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    fn param_names(&self) -> Vec<String> {
        ["N", "W0", "b0", "W1", "b1"].map(String::from).to_vec()
    }

    fn input_dim(&self) -> usize {
        self.d_in
    }

    fn output_dim(&self) -> usize {
        self.d_out
    }

    fn size_state(&self) -> SizeState {
        SizeState::Aux {
            n: self.size(),
            active: self.active_neuron_count(),
        }
    }

    fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Forward> {
        check_input(g.value(x), self.d_in)?;
        let n = vars[0];
        let index = g.constant(Tensor::vector((0..self.n_max).map(|i| i as f64).collect()));
        let offset = g.sub(index, n)?;
        let gate = g.unary(UnaryOp::Psi, offset)?;
        let pre = g.affine(x, vars[1], vars[2])?;
        let hidden = g.unary(UnaryOp::Tanh, pre)?;
        let gated = g.scale_columns(hidden, gate)?;
        let output = g.affine(gated, vars[3], vars[4])?;

        let target = g.constant(Tensor::scalar(self.n_target));
        let diff = g.sub(n, target)?;
        let size_loss = g.square(diff)?;
        Ok(Forward {
            output,
            size_loss: Some(size_loss),
        })
    }

    fn dense_layers_mut(&mut self) -> Vec<(&mut Tensor, &mut Tensor)> {
        let [_, w1, b1, w2, b2] = &mut self.params[..] else {
            unreachable!("aux-weight layout has five tensors")
        };
        vec![(w1, b1), (w2, b2)]
    }
}

/// The size controller `C(x) = w·x`; the control value is `C1 = C(1) = w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controller {
    pub w: f64,
}

impl Controller {
    pub fn eval(&self, x: f64) -> f64 {
        self.w * x
    }
}

/// Records `C1 = w·1` as a differentiable node.
pub fn controller_eval(g: &mut Graph, w: Var) -> Result<Var> {
    let one = g.constant(Tensor::scalar(1.0));
    g.mul(w, one)
}

/// A fixed maximum-size MLP whose hidden outputs are multiplied by the mask
/// derived from the controller value. With `augment_input`, the clamped
/// control value is appended to every input row.
///
/// Parameter layout: `[w, W0, b0, W1, b1, …]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerMaskNet {
    d_in: usize,
    n_max: usize,
    augment_input: bool,
    mlp: StaticMlp,
    params: Vec<Tensor>,
}

impl ControllerMaskNet {
    /// `hidden_layers` layers of `n_max` neurons each.
    pub fn new(
        d_in: usize,
        n_max: usize,
        hidden_layers: usize,
        d_out: usize,
        augment_input: bool,
    ) -> Result<Self> {
        if hidden_layers == 0 {
            return Err(Error::invalid(
                "controller-mask needs at least one hidden layer",
            ));
        }
        let mut sizes = vec![d_in + usize::from(augment_input)];
        sizes.extend(std::iter::repeat_n(n_max, hidden_layers));
        sizes.push(d_out);
        let mlp = StaticMlp::new(&sizes)?;
        let mut params = vec![Tensor::scalar(CONTROLLER_INIT)];
        params.extend(mlp.params.iter().cloned());
        Ok(Self {
            d_in,
            n_max,
            augment_input,
            mlp,
            params,
        })
    }

    pub fn from_params(
        d_in: usize,
        n_max: usize,
        hidden_layers: usize,
        d_out: usize,
        augment_input: bool,
        params: Vec<Tensor>,
    ) -> Result<Self> {
        let mut m = Self::new(d_in, n_max, hidden_layers, d_out, augment_input)?;
        if params.len() != m.params.len()
            || params
                .iter()
                .zip(&m.params)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::invalid(
                "parameter shapes do not match controller-mask layout",
            ));
        }
        m.params = params;
        Ok(m)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn augment_input(&self) -> bool {
        self.augment_input
    }

    pub fn hidden_layers(&self) -> usize {
        self.mlp.num_layers() - 1
    }

    pub fn controller(&self) -> Controller {
        Controller {
            w: self.params[0].item(),
        }
    }

    pub fn set_controller(&mut self, w: f64) {
        self.params[0] = Tensor::scalar(w);
    }

    /// Masked forward for a given control value node (pre-clamp).
    pub fn masked_forward(&self, g: &mut Graph, vars: &[Var], x: Var, c1: Var) -> Result<Var> {
        check_input(g.value(x), self.d_in)?;
        let c = g.clamp(c1, 0.0, 1.0)?;
        let mask = g.control_mask(c, self.n_max)?;
        let input = if self.augment_input {
            g.append_column(x, c)?
        } else {
            x
        };
        self.mlp.forward_masked(g, &vars[1..], input, Some(mask))
    }
}

impl Model for ControllerMaskNet {
    fn params(&self) -> &[Tensor] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["controller".to_string()];
        names.extend(self.mlp.param_names());
        names
    }

    fn input_dim(&self) -> usize {
        self.d_in
    }

    fn output_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    fn size_state(&self) -> SizeState {
        let c1_raw = self.controller().eval(1.0);
        let c1 = clamp_control(c1_raw);
        SizeState::Controller {
            c1_raw,
            c1,
            effective: effective_size_unchecked(c1, self.n_max),
        }
    }

    fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Forward> {
        let c1 = controller_eval(g, vars[0])?;
        let output = self.masked_forward(g, vars, x, c1)?;
        let one = g.constant(Tensor::scalar(1.0));
        let diff = g.sub(c1, one)?;
        let size_loss = g.square(diff)?;
        Ok(Forward {
            output,
            size_loss: Some(size_loss),
        })
    }

    fn dense_layers_mut(&mut self) -> Vec<(&mut Tensor, &mut Tensor)> {
        self.params[1..]
            .chunks_exact_mut(2)
            .map(|pair| {
                let (w, b) = pair.split_at_mut(1);
                (&mut w[0], &mut b[0])
            })
            .collect()
    }
}

/// Any of the three network forms.
#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Static(StaticMlp),
    Aux(AuxWeightNet),
    Mask(ControllerMaskNet),
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            Network::Static($m) => $e,
            Network::Aux($m) => $e,
            Network::Mask($m) => $e,
        }
    };
}

impl Model for Network {
    fn params(&self) -> &[Tensor] {
        delegate!(self, m => m.params())
    }

    fn params_mut(&mut self) -> &mut [Tensor] {
        delegate!(self, m => m.params_mut())
    }

    fn param_names(&self) -> Vec<String> {
        delegate!(self, m => m.param_names())
    }

    fn input_dim(&self) -> usize {
        delegate!(self, m => m.input_dim())
    }

    fn output_dim(&self) -> usize {
        delegate!(self, m => m.output_dim())
    }

    fn size_state(&self) -> SizeState {
        delegate!(self, m => m.size_state())
    }

    fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Forward> {
        delegate!(self, m => m.forward(g, vars, x))
    }

    fn dense_layers_mut(&mut self) -> Vec<(&mut Tensor, &mut Tensor)> {
        delegate!(self, m => m.dense_layers_mut())
    }
}

/// Distribution for dense-layer weights and biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Init {
    Uniform { lo: f64, hi: f64 },
    Normal,
}

const WEIGHT_TAG: u64 = 0;
const BIAS_TAG: u64 = 1;

impl Init {
    pub fn validate(&self) -> Result<()> {
        if let Init::Uniform { lo, hi } = *self {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(format!(
                    "uniform init needs finite lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Draws one value for the element keyed by `key`.
    ///
    /// Every element gets its own stream, so a weight at `(layer, row, col)`
    /// has the same initial value in any network that contains it. Growing and
    /// static arms of a comparison therefore start from identical shared weights.
    fn draw(&self, key: &[u64]) -> f64 {
        let mut rng = rng_from(derive_seed(key));
        match *self {
            Init::Uniform { lo, hi } => rng.random_range(lo..=hi),
            Init::Normal => StandardNormal.sample(&mut rng),
        }
    }

    /// Re-draws every dense weight and bias of `model`. Growth parameters
    /// keep their construction-time values.
    pub fn apply<M: Model + ?Sized>(&self, model: &mut M, seed: u64) -> Result<()> {
        self.validate()?;
        for (l, (w, b)) in model.dense_layers_mut().into_iter().enumerate() {
            let (rows, cols) = w.dims2().expect("dense weights are rank 2");
            for r in 0..rows {
                for c in 0..cols {
                    w.data_mut()[r * cols + c] =
                        self.draw(&[seed, WEIGHT_TAG, l as u64, r as u64, c as u64]);
                }
                b.data_mut()[r] = self.draw(&[seed, BIAS_TAG, l as u64, r as u64]);
            }
        }
        Ok(())
    }
}

/// Uniform `[lo, hi]` initialization of all dense weights and biases.
pub fn init_uniform<M: Model + ?Sized>(model: &mut M, lo: f64, hi: f64, seed: u64) -> Result<()> {
    Init::Uniform { lo, hi }.apply(model, seed)
}

/// Standard-normal initialization of all dense weights and biases.
pub fn init_normal<M: Model + ?Sized>(model: &mut M, seed: u64) -> Result<()> {
    Init::Normal.apply(model, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(xs: &[f64]) -> Tensor {
        Tensor::matrix(xs.len(), 1, xs.to_vec()).unwrap()
    }

    #[test]
    fn zero_static_net_outputs_zero() {
        let m = StaticMlp::new(&[2, 5, 3]).unwrap();
        let y = m
            .predict(&Tensor::matrix(2, 2, vec![0.3, -4.0, 1.0, 2.0]).unwrap())
            .unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_path_static_net_is_tanh() {
        let m = StaticMlp::from_params(
            &[1, 1, 1],
            vec![
                Tensor::matrix(1, 1, vec![1.0]).unwrap(),
                Tensor::vector(vec![0.0]),
                Tensor::matrix(1, 1, vec![1.0]).unwrap(),
                Tensor::vector(vec![0.0]),
            ],
        )
        .unwrap();
        let xs = [-2.0, -0.3, 0.0, 0.8];
        let y = m.predict(&column(&xs)).unwrap();
        for (x, y) in xs.iter().zip(y.data()) {
            assert_eq!(*y, x.tanh());
        }
    }

    #[test]
    fn static_forward_rejects_wrong_width() {
        let m = StaticMlp::new(&[2, 3, 1]).unwrap();
        assert!(m.predict(&column(&[1.0, 2.0])).is_err());
        assert!(StaticMlp::new(&[3]).is_err());
    }

    #[test]
    fn empty_aux_net_outputs_bias() {
        let mut m = AuxWeightNet::new(1, 5, 1, 5.0).unwrap();
        init_uniform(&mut m, -1.0, 1.0, 4).unwrap();
        m.set_size(0.0);
        let b2 = m.params()[4].item();
        let y = m.predict(&column(&[-0.7, 0.1, 0.9])).unwrap();
        assert!(y.data().iter().all(|&v| v == b2));
        assert_eq!(m.active_neuron_count(), 0.0);
    }

    #[test]
    fn saturated_aux_net_equals_ungated_mlp() {
        let mut m = AuxWeightNet::new(1, 5, 1, 5.0).unwrap();
        init_uniform(&mut m, -1.0, 1.0, 5).unwrap();
        m.set_size(6.0);
        assert_eq!(m.gates(), vec![1.0; 5]);
        let x = column(&[-0.5, 0.25, 1.0]);
        assert_eq!(m.predict(&x).unwrap(), m.to_static().predict(&x).unwrap());
    }

    #[test]
    fn aux_gates_and_counts() {
        let mut m = AuxWeightNet::new(1, 5, 1, 5.0).unwrap();
        m.set_size(2.5);
        let gates = m.gates();
        assert_eq!(&gates[..2], &[1.0, 1.0]);
        assert!((gates[2] - 0.5).abs() < 1e-15);
        assert_eq!(&gates[3..], &[0.0, 0.0]);
        assert!((m.active_neuron_count() - 2.5).abs() < 1e-15);

        // integer N opens exactly N neurons: ψ(4 - 5) = ψ(-1) = 1
        m.set_size(5.0);
        assert_eq!(m.active_neuron_count(), 5.0);
        m.set_size(4.0);
        assert_eq!(m.active_neuron_count(), 4.0);
    }

    #[test]
    fn controller_eval_is_identity_on_w() {
        for w in [0.0, 0.6] {
            let mut g = Graph::new();
            let wv = g.param(&[1], vec![w]).unwrap();
            let c1 = controller_eval(&mut g, wv).unwrap();
            assert_eq!(g.value(c1).item(), w);
            g.backward(c1).unwrap();
            assert_eq!(g.grad(wv).item(), 1.0);
        }
    }

    #[test]
    fn open_mask_matches_static_bitwise() {
        let mut m = ControllerMaskNet::new(2, 6, 1, 3, false).unwrap();
        init_normal(&mut m, 12).unwrap();
        m.set_controller(1.0);
        let stat = StaticMlp::from_params(&[2, 6, 3], m.params()[1..].to_vec()).unwrap();
        let x = Tensor::matrix(3, 2, vec![0.1, -0.4, 0.9, 0.3, -1.0, 0.0]).unwrap();
        let a = m.predict(&x).unwrap();
        let b = stat.predict(&x).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }

    #[test]
    fn closed_mask_leaves_output_bias() {
        let mut m = ControllerMaskNet::new(1, 4, 1, 1, false).unwrap();
        init_normal(&mut m, 2).unwrap();
        m.set_controller(0.0);
        let b = m.params()[4].item();
        let y = m.predict(&column(&[0.3, -0.8])).unwrap();
        assert!(y.data().iter().all(|&v| v == b));
    }

    #[test]
    fn partial_mask_scales_third_neuron() {
        // only the third hidden neuron feeds the output
        let mut m = ControllerMaskNet::new(1, 4, 1, 1, false).unwrap();
        m.set_controller(0.6);
        m.params_mut()[1] = Tensor::matrix(4, 1, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        m.params_mut()[3] = Tensor::matrix(1, 4, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let y = m.predict(&column(&[0.5])).unwrap().item();
        assert!((y - 0.618_034 * 0.5f64.tanh()).abs() < 1e-6);
    }

    #[test]
    fn augmented_input_changes_width() {
        let m = ControllerMaskNet::new(1, 4, 1, 1, true).unwrap();
        assert_eq!(m.params()[1].shape(), &[4, 2]);
        assert_eq!(m.input_dim(), 1);
        assert!(m.predict(&column(&[0.5])).is_ok());
    }

    #[test]
    fn uniform_init_statistics() {
        let mut m = StaticMlp::new(&[100, 100]).unwrap();
        init_uniform(&mut m, -1.0, 1.0, 77).unwrap();
        let w = m.params()[0].data();
        let (lo, hi) = w
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!(lo >= -1.0 && hi <= 1.0);
        assert!(mean.abs() < 0.05);
        assert!(init_uniform(&mut m, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn normal_init_statistics() {
        let mut m = StaticMlp::new(&[100, 100]).unwrap();
        init_normal(&mut m, 78).unwrap();
        let w = m.params()[0].data();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.05);
        assert!((std - 1.0).abs() < 0.05);
    }

    #[test]
    fn init_is_seeded_and_shared_across_sizes() {
        let mut a = StaticMlp::new(&[1, 5, 1]).unwrap();
        let mut b = StaticMlp::new(&[1, 5, 1]).unwrap();
        init_uniform(&mut a, -1.0, 1.0, 3).unwrap();
        init_uniform(&mut b, -1.0, 1.0, 3).unwrap();
        assert_eq!(a, b);

        let mut aux = AuxWeightNet::new(1, 6, 1, 5.0).unwrap();
        init_uniform(&mut aux, -1.0, 1.0, 3).unwrap();
        assert_eq!(aux.size(), AUX_SIZE_INIT);
        assert_eq!(&aux.params()[1].data()[..5], a.params()[0].data());
        assert_eq!(&aux.params()[3].data()[..5], a.params()[2].data());
        assert_eq!(aux.params()[4], a.params()[3]);
    }
}
