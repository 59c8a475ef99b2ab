//! Regression targets built from Bessel functions, spiral classification
//! data, and the seeded train/test split shared by every task.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{derive_seed, rng_from};
use crate::tensor::Tensor;

const SERIES_TERMS: usize = 12;

/// Fraction of rows used for training.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Bessel function of the first kind, `J_n(x)` for `n ∈ {0, 1, 2}`, by its
/// power series truncated at 12 terms. Accepts `|x| ≤ 2`.
pub fn bessel_j(order: u32, x: f64) -> Result<f64> {
    if order > 2 {
        return Err(Error::invalid(format!(
            "Bessel order {order} not supported"
        )));
    }
    if !x.is_finite() || x.abs() > 2.0 {
        return Err(Error::invalid(format!(
            "Bessel argument {x} outside [-2, 2]"
        )));
    }
    Ok(bessel_series(order, x, SERIES_TERMS))
}

fn bessel_series(order: u32, x: f64, terms: usize) -> f64 {
    let half = 0.5 * x;
    let n = order as f64;
    // m = 0 term: (x/2)^n / n!
    let mut term = half.powi(order as i32) / (1..=order).product::<u32>().max(1) as f64;
    let mut sum = term;
    let q = -half * half;
    for m in 1..terms {
        let m = m as f64;
        term *= q / (m * (m + n));
        sum += term;
    }
    sum
}

fn check_unit(x: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("target input {x} outside [-1, 1]")));
    }
    Ok(())
}

/// Affine map `y = offset + scale·g` that sends the extremes of `g` on
/// `[-1, 1]` to `±1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub offset: f64,
    pub scale: f64,
}

impl AffineMap {
    fn from_extremes(min: f64, max: f64) -> Self {
        let scale = 2.0 / (max - min);
        Self {
            offset: 1.0 - scale * max,
            scale,
        }
    }

    pub fn apply(&self, g: f64) -> f64 {
        self.offset + self.scale * g
    }
}

/// `J₀` peaks at 0 and is smallest at the endpoints of `[-1, 1]`.
pub fn simple_target_map() -> AffineMap {
    let j = |x| bessel_series(0, x, SERIES_TERMS);
    AffineMap::from_extremes(j(1.0), j(0.0))
}

fn composite_raw(x: f64) -> f64 {
    (0..=2).map(|n| bessel_series(n, x, SERIES_TERMS)).sum()
}

/// Grid size for locating the composite target's extremes.
pub const COMPOSITE_GRID: usize = 10_000;

/// Affine map for `J₀ + J₁ + J₂`, from its min and max on a uniform grid.
pub fn composite_target_map() -> AffineMap {
    static MAP: OnceLock<AffineMap> = OnceLock::new();
    *MAP.get_or_init(|| {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..COMPOSITE_GRID {
            let x = -1.0 + 2.0 * i as f64 / (COMPOSITE_GRID - 1) as f64;
            let g = composite_raw(x);
            lo = lo.min(g);
            hi = hi.max(g);
        }
        AffineMap::from_extremes(lo, hi)
    })
}

/// `a + b·J₀(x)` scaled onto `[-1, 1]`.
pub fn target_simple(x: f64) -> Result<f64> {
    check_unit(x)?;
    Ok(simple_target_map().apply(bessel_series(0, x, SERIES_TERMS)))
}

/// `a + b·(J₀ + J₁ + J₂)(x)` scaled onto `[-1, 1]`.
pub fn target_composite(x: f64) -> Result<f64> {
    check_unit(x)?;
    Ok(composite_target_map().apply(composite_raw(x)))
}

/// Input/target rows with a fixed train/test partition.
///
/// Classification targets store the class index as a value in a single
/// target column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub n_classes: Option<usize>,
    pub seed: u64,
}

/// Rows of one split, gathered into contiguous tensors.
#[derive(Debug, Clone)]
pub struct Split {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub labels: Option<Vec<usize>>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.inputs.dims2().map_or(0, |(r, _)| r)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Subset of this split by row positions.
    pub fn rows(&self, rows: &[usize]) -> Split {
        Split {
            inputs: self.inputs.select_rows(rows),
            targets: self.targets.select_rows(rows),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&r| l[r]).collect()),
        }
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.dims2().map_or(0, |(r, _)| r)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.dims2().map_or(0, |(_, c)| c)
    }

    /// Output width a model needs: one for regression, one logit per class.
    pub fn output_dim(&self) -> usize {
        self.n_classes.unwrap_or(1)
    }

    fn split(&self, idx: &[usize]) -> Split {
        let targets = self.targets.select_rows(idx);
        let labels = self
            .n_classes
            .map(|_| targets.data().iter().map(|&v| v as usize).collect());
        Split {
            inputs: self.inputs.select_rows(idx),
            targets,
            labels,
        }
    }

    pub fn train(&self) -> Split {
        self.split(&self.train_idx)
    }

    pub fn test(&self) -> Split {
        self.split(&self.test_idx)
    }

    pub fn is_train_row(&self) -> Vec<bool> {
        let mut flags = vec![false; self.len()];
        for &i in &self.train_idx {
            flags[i] = true;
        }
        flags
    }

    /// Writes one CSV row per sample, in generation order: `x,y,split` for
    /// regression and `x0,x1,class,split` for classification, with split
    /// `train` or `test`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.into());
        let d = self.input_dim();
        let mut header: Vec<String> = if d == 1 {
            vec!["x".into()]
        } else {
            (0..d).map(|j| format!("x{j}")).collect()
        };
        header.push(
            if self.n_classes.is_some() {
                "class"
            } else {
                "y"
            }
            .into(),
        );
        header.push("split".into());
        w.write_record(&header).map_err(io)?;
        let train = self.is_train_row();
        for (i, is_train) in train.into_iter().enumerate() {
            let mut rec: Vec<String> = self.inputs.row(i).iter().map(f64::to_string).collect();
            let t = self.targets.row(i)[0];
            rec.push(match self.n_classes {
                Some(_) => (t as usize).to_string(),
                None => t.to_string(),
            });
            rec.push(if is_train { "train" } else { "test" }.into());
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `round(0.8·n)` training rows, chosen by a seeded shuffle.
pub fn train_test_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from(derive_seed(&[seed, 0x59117])));
    let n_train = (TRAIN_FRACTION * n as f64).round() as usize;
    let test = idx.split_off(n_train);
    (idx, test)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionTarget {
    BesselSimple,
    BesselComposite,
}

impl RegressionTarget {
    pub fn eval(self, x: f64) -> Result<f64> {
        match self {
            RegressionTarget::BesselSimple => target_simple(x),
            RegressionTarget::BesselComposite => target_composite(x),
        }
    }
}

/// Draws `n` inputs uniformly from `[-1, 1]` and labels them with `target`.
pub fn gen_regression(n: usize, target: RegressionTarget, seed: u64) -> Result<Dataset> {
    if n < 5 {
        return Err(Error::invalid(format!("need at least 5 rows, got {n}")));
    }
    let mut rng = rng_from(derive_seed(&[seed, 0x726567]));
    let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let ys = xs
        .iter()
        .map(|&x| target.eval(x))
        .collect::<Result<Vec<_>>>()?;
    let (train_idx, test_idx) = train_test_split(n, seed);
    Ok(Dataset {
        inputs: Tensor::matrix(n, 1, xs)?,
        targets: Tensor::matrix(n, 1, ys)?,
        train_idx,
        test_idx,
        n_classes: None,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpiralSpec {
    pub classes: usize,
    pub n_per_class: usize,
    #[serde(default = "SpiralSpec::default_noise")]
    pub noise_std: f64,
    #[serde(default = "SpiralSpec::default_turns")]
    pub turns: f64,
}

impl SpiralSpec {
    pub const MIN_T: f64 = 0.05;

    fn default_noise() -> f64 {
        0.02
    }

    fn default_turns() -> f64 {
        1.0
    }

    pub fn new(classes: usize, n_per_class: usize) -> Self {
        Self {
            classes,
            n_per_class,
            noise_std: Self::default_noise(),
            turns: Self::default_turns(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid("spirals need at least 2 classes"));
        }
        if self.n_per_class == 0 {
            return Err(Error::invalid("spirals need at least one point per class"));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::invalid("spiral noise_std must be finite and >= 0"));
        }
        if !(self.turns > 0.0) || !self.turns.is_finite() {
            return Err(Error::invalid("spiral turns must be finite and > 0"));
        }
        if self.classes * self.n_per_class < 5 {
            return Err(Error::invalid("spirals need at least 5 points in total"));
        }
        Ok(())
    }
}

/// Interleaved spiral arms, one per class, rotated by `2π/N_c` from each other.
pub fn gen_spirals(spec: &SpiralSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng_from(derive_seed(&[seed, 0x737069]));
    let noise = Normal::new(0.0, spec.noise_std)
        .map_err(|e| Error::invalid(format!("spiral noise: {e}")))?;
    let n = spec.classes * spec.n_per_class;
    let mut xs = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for k in 0..spec.classes {
        let phase = 2.0 * PI * k as f64 / spec.classes as f64;
        for _ in 0..spec.n_per_class {
            let t = rng.random_range(SpiralSpec::MIN_T..=1.0);
            let theta = 2.0 * PI * spec.turns * t + phase;
            xs.push(t * theta.cos() + noise.sample(&mut rng));
            xs.push(t * theta.sin() + noise.sample(&mut rng));
            labels.push(k as f64);
        }
    }
    let (train_idx, test_idx) = train_test_split(n, seed);
    Ok(Dataset {
        inputs: Tensor::matrix(n, 2, xs)?,
        targets: Tensor::matrix(n, 1, labels)?,
        train_idx,
        test_idx,
        n_classes: Some(spec.classes),
        seed,
    })
}
