//! Plain-text model checkpoints.
//!
//! ```text
//! gradgrow-checkpoint v1
//! kind aux_weight
//! d_in 1
//! n_max 5
//! d_out 1
//! n_target 5
//! param N [1] = 4.98
//! param W0 [5,1] = 0.1 -0.3 0.7 0.2 -0.9
//! ...
//! ```
//!
//! Structure keys come first and depend on `kind` (`static`, `aux_weight`,
//! `controller_mask`). Parameters follow in the model's own order, each as
//! `param NAME [shape] = values` in row-major order. Values are written in
//! shortest round-trip form, so decode(encode(m)) == m exactly. Blank lines
//! and lines starting with `#` are ignored.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::models::{AuxWeightNet, ControllerMaskNet, Model, Network, StaticMlp};
use crate::tensor::Tensor;

pub const MAGIC: &str = "gradgrow-checkpoint v1";

fn join<T: ToString>(xs: &[T], sep: &str) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

pub fn encode(model: &Network) -> String {
    let mut out = format!("{MAGIC}\n");
    match model {
        Network::Static(m) => {
            out += "kind static\n";
            out += &format!("layers {}\n", join(m.layer_sizes(), ","));
        }
        Network::Aux(m) => {
            out += "kind aux_weight\n";
            out += &format!(
                "d_in {}\nn_max {}\nd_out {}\nn_target {}\n",
                m.input_dim(),
                m.n_max(),
                m.output_dim(),
                m.n_target()
            );
        }
        Network::Mask(m) => {
            out += "kind controller_mask\n";
            out += &format!(
                "d_in {}\nn_max {}\nhidden_layers {}\nd_out {}\naugment_input {}\n",
                m.input_dim(),
                m.n_max(),
                m.hidden_layers(),
                m.output_dim(),
                m.augment_input()
            );
        }
    }
    for (name, p) in model.param_names().iter().zip(model.params()) {
        out += &format!(
            "param {name} [{}] = {}\n",
            join(p.shape(), ","),
            join(p.data(), " ")
        );
    }
    out
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

struct Keys {
    values: BTreeMap<String, (usize, String)>,
    last_line: usize,
}

impl Keys {
    fn raw(&self, key: &str) -> Result<(usize, &str)> {
        self.values
            .get(key)
            .map(|(l, v)| (*l, v.as_str()))
            .ok_or_else(|| err(self.last_line, format!("missing key {key}")))
    }

    fn count(&self, key: &str) -> Result<usize> {
        let (line, v) = self.raw(key)?;
        match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(err(
                line,
                format!("{key}: expected a positive integer, got {v:?}"),
            )),
        }
    }

    fn real(&self, key: &str) -> Result<f64> {
        let (line, v) = self.raw(key)?;
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| err(line, format!("{key}: expected a finite number, got {v:?}")))
    }

    fn flag(&self, key: &str) -> Result<bool> {
        let (line, v) = self.raw(key)?;
        v.parse::<bool>()
            .map_err(|_| err(line, format!("{key}: expected true or false, got {v:?}")))
    }

    fn expect_only(&self, allowed: &[&str]) -> Result<()> {
        match self
            .values
            .iter()
            .find(|(k, _)| !allowed.contains(&k.as_str()))
        {
            Some((k, (line, _))) => Err(err(*line, format!("unexpected key {k}"))),
            None => Ok(()),
        }
    }
}

fn parse_param(line_no: usize, rest: &str) -> Result<(String, Tensor)> {
    let (lhs, values) = rest
        .split_once('=')
        .ok_or_else(|| err(line_no, "param line needs '='"))?;
    let lhs = lhs.trim();
    let (name, shape) = lhs
        .split_once(' ')
        .ok_or_else(|| err(line_no, "param line needs a name and a shape"))?;
    let shape = shape
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| err(line_no, "shape must be written as [d1,d2,...]"))?;
    let dims = shape
        .split(',')
        .map(|d| d.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| err(line_no, format!("bad shape [{shape}]")))?;
    let data = values
        .split_whitespace()
        .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| err(line_no, "values must be finite numbers"))?;
    let tensor = Tensor::new(dims, data).map_err(|e| err(line_no, e.to_string()))?;
    Ok((name.to_string(), tensor))
}

/// Expected `(name, shape)` list; sizes are computed with overflow checks
/// so that a hostile header cannot trigger a large allocation.
fn layout(kind: &str, keys: &Keys) -> Result<Vec<(String, Vec<usize>)>> {
    let line = keys.last_line;
    let dense = |sizes: &[usize], offset: usize| -> Vec<(String, Vec<usize>)> {
        sizes
            .windows(2)
            .enumerate()
            .flat_map(|(l, w)| {
                [
                    (format!("W{}", l + offset), vec![w[1], w[0]]),
                    (format!("b{}", l + offset), vec![w[1]]),
                ]
            })
            .collect()
    };
    match kind {
        "static" => {
            keys.expect_only(&["kind", "layers"])?;
            let (l, v) = keys.raw("layers")?;
            let sizes = v
                .split(',')
                .map(|d| d.trim().parse::<usize>().ok().filter(|&n| n > 0))
                .collect::<Option<Vec<_>>>()
                .filter(|s| s.len() >= 2)
                .ok_or_else(|| {
                    err(
                        l,
                        format!("layers: expected at least two positive sizes, got {v:?}"),
                    )
                })?;
            Ok(dense(&sizes, 0))
        }
        "aux_weight" => {
            keys.expect_only(&["kind", "d_in", "n_max", "d_out", "n_target"])?;
            let (d_in, n, d_out) = (
                keys.count("d_in")?,
                keys.count("n_max")?,
                keys.count("d_out")?,
            );
            keys.real("n_target")?;
            let mut out = vec![("N".to_string(), vec![1])];
            out.extend(dense(&[d_in, n, d_out], 0));
            Ok(out)
        }
        "controller_mask" => {
            keys.expect_only(&[
                "kind",
                "d_in",
                "n_max",
                "hidden_layers",
                "d_out",
                "augment_input",
            ])?;
            let d_in = keys.count("d_in")?;
            let n = keys.count("n_max")?;
            let hidden = keys.count("hidden_layers")?;
            let d_out = keys.count("d_out")?;
            let augment = keys.flag("augment_input")?;
            let first = d_in
                .checked_add(usize::from(augment))
                .ok_or_else(|| err(line, "d_in too large"))?;
            let mut sizes = vec![first];
            // params are checked against the file's own data before any
            // allocation, so the hidden count is bounded by the file length
            if hidden > 1 << 16 {
                return Err(err(line, "hidden_layers too large"));
            }
            sizes.extend(std::iter::repeat_n(n, hidden));
            sizes.push(d_out);
            let mut out = vec![("controller".to_string(), vec![1])];
            out.extend(dense(&sizes, 0));
            Ok(out)
        }
        other => Err(err(line, format!("unknown model kind {other:?}"))),
    }
}

pub fn decode(text: &str) -> Result<Network> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        Some((n, _)) => return Err(err(n, format!("expected header {MAGIC:?}"))),
        None => return Err(err(1, "empty checkpoint")),
    }
    let mut keys = Keys {
        values: BTreeMap::new(),
        last_line: 1,
    };
    let mut params: Vec<(usize, String, Tensor)> = Vec::new();
    for (n, l) in lines {
        keys.last_line = n;
        if let Some(rest) = l.strip_prefix("param ") {
            let (name, t) = parse_param(n, rest)?;
            params.push((n, name, t));
            continue;
        }
        if !params.is_empty() {
            return Err(err(n, "structure keys must precede parameters"));
        }
        let (k, v) = l
            .split_once(char::is_whitespace)
            .ok_or_else(|| err(n, format!("expected 'key value', got {l:?}")))?;
        if keys
            .values
            .insert(k.to_string(), (n, v.trim().to_string()))
            .is_some()
        {
            return Err(err(n, format!("duplicate key {k}")));
        }
    }
    let (_, kind) = keys.raw("kind")?;
    let kind = kind.to_string();
    let expected = layout(&kind, &keys)?;
    if expected.len() != params.len() {
        return Err(err(
            keys.last_line,
            format!(
                "expected {} parameters, found {}",
                expected.len(),
                params.len()
            ),
        ));
    }
    for ((name, shape), (line, got_name, t)) in expected.iter().zip(&params) {
        if name != got_name || shape.as_slice() != t.shape() {
            return Err(err(
                *line,
                format!(
                    "expected param {name} {shape:?}, found {got_name} {:?}",
                    t.shape()
                ),
            ));
        }
    }
    let tensors: Vec<Tensor> = params.into_iter().map(|(_, _, t)| t).collect();
    let fail = |e: Error| err(keys.last_line, e.to_string());
    match kind.as_str() {
        "static" => {
            let mut sizes = vec![tensors[0].shape()[1]];
            sizes.extend(tensors.iter().step_by(2).map(|w| w.shape()[0]));
            StaticMlp::from_params(&sizes, tensors)
                .map(Network::Static)
                .map_err(fail)
        }
        "aux_weight" => AuxWeightNet::from_params(
            keys.count("d_in")?,
            keys.count("n_max")?,
            keys.count("d_out")?,
            keys.real("n_target")?,
            tensors,
        )
        .map(Network::Aux)
        .map_err(fail),
        _ => ControllerMaskNet::from_params(
            keys.count("d_in")?,
            keys.count("n_max")?,
            keys.count("hidden_layers")?,
            keys.count("d_out")?,
            keys.flag("augment_input")?,
            tensors,
        )
        .map(Network::Mask)
        .map_err(fail),
    }
}
