//! Differentiable size machinery shared by both growing networks.
//!
//! The transition function `psi` is a smooth step: 1 left of -1, 0 right of
//! 0 and `sin²(πx/2)` in between. A controller value `C1 ∈ [0, 1]` maps to
//! an effective size `Ñ = N_max·sin²(πC1/2)`, and the mask turns `Ñ` into
//! per-neuron multipliers: `⌊Ñ⌋` fully open neurons, one partial neuron
//! carrying the fractional part, then closed neurons.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::invalid(format!("{what} must be finite, got {x}")))
    }
}

/// Transition function without input validation; callers guarantee finiteness.
#[inline]
pub(crate) fn psi_unchecked(x: f64) -> f64 {
    if x < -1.0 {
        1.0
    } else if x > 0.0 {
        0.0
    } else {
        let s = (FRAC_PI_2 * x).sin();
        s * s
    }
}

#[inline]
pub(crate) fn psi_prime_unchecked(x: f64) -> f64 {
    if (-1.0..=0.0).contains(&x) {
        FRAC_PI_2 * (PI * x).sin()
    } else {
        0.0
    }
}

/// Smooth step: `ψ(x) = 1` for `x < -1`, `sin²(πx/2)` on `[-1, 0]`, `0` for `x > 0`.
pub fn psi(x: f64) -> Result<f64> {
    finite(x, "psi argument").map(psi_unchecked)
}

/// Derivative of [`psi`]: `π·sin(πx/2)·cos(πx/2)` on `[-1, 0]`, zero elsewhere.
pub fn psi_prime(x: f64) -> Result<f64> {
    finite(x, "psi_prime argument").map(psi_prime_unchecked)
}

fn check_n_max(n_max: usize) -> Result<()> {
    if n_max < 1 {
        return Err(Error::invalid("N_max must be at least 1"));
    }
    Ok(())
}

#[inline]
pub(crate) fn effective_size_unchecked(c1: f64, n_max: usize) -> f64 {
    let s = (FRAC_PI_2 * c1).sin();
    n_max as f64 * s * s
}

/// `dÑ/dC1 = N_max·(π/2)·sin(πC1)`.
#[inline]
pub(crate) fn effective_size_slope(c1: f64, n_max: usize) -> f64 {
    n_max as f64 * FRAC_PI_2 * (PI * c1).sin()
}

/// Effective network size `Ñ = N_max·sin²(πC1/2)` for a controller value
/// already clamped to `[0, 1]`.
pub fn effective_size(c1: f64, n_max: usize) -> Result<f64> {
    check_n_max(n_max)?;
    let c1 = finite(c1, "C1")?;
    if !(0.0..=1.0).contains(&c1) {
        return Err(Error::invalid(format!(
            "C1 must be clamped to [0, 1], got {c1}"
        )));
    }
    Ok(effective_size_unchecked(c1, n_max))
}

/// Clamps a raw controller output to the normalized range used by the mask.
pub fn clamp_control(c1: f64) -> f64 {
    c1.clamp(0.0, 1.0)
}

/// Per-neuron participation for a given effective size.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub values: Vec<f64>,
    pub effective_size: f64,
}

impl Mask {
    /// Index of the neuron that receives the mask gradient (`⌊Ñ⌋`), if it exists.
    pub fn boundary_neuron(&self) -> Option<usize> {
        let k = self.effective_size.floor() as usize;
        (k < self.values.len()).then_some(k)
    }
}

pub(crate) fn mask_values(effective: f64, n_max: usize) -> Vec<f64> {
    let whole = effective.floor();
    let frac = effective - whole;
    let whole = whole as usize;
    (0..n_max)
        .map(|n| match n.cmp(&whole) {
            std::cmp::Ordering::Less => 1.0,
            std::cmp::Ordering::Equal => frac,
            std::cmp::Ordering::Greater => 0.0,
        })
        .collect()
}

/// Builds the neuron mask for controller value `c1` (already clamped).
pub fn control_to_mask(c1: f64, n_max: usize) -> Result<Mask> {
    let effective = effective_size(c1, n_max)?;
    Ok(Mask {
        values: mask_values(effective, n_max),
        effective_size: effective,
    })
}

/// Quadratic size penalty `(N - N_target)²` of the auxiliary-weight network.
pub fn size_loss_aux(n: f64, n_target: f64) -> Result<f64> {
    let d = finite(n, "N")? - finite(n_target, "N_target")?;
    Ok(d * d)
}

/// Size penalty `(C1 - 1)²` of the controller-mask network.
pub fn size_loss_controller(c1: f64) -> Result<f64> {
    let d = finite(c1, "C1")? - 1.0;
    Ok(d * d)
}

/// `base + λ·size`.
pub fn total_loss(base: f64, size: f64, lambda: f64) -> Result<f64> {
    finite(base, "base loss")?;
    finite(size, "size loss")?;
    finite(lambda, "lambda")?;
    if lambda < 0.0 {
        return Err(Error::invalid(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    Ok(base + lambda * size)
}
