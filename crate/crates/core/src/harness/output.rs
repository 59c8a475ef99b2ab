//! Per-epoch run logs.

use std::io::Write;

use crate::error::{Error, Result};
use crate::harness::trial::TrialResult;

pub const RUNS_HEADER: [&str; 6] = [
    "trial_id",
    "epoch",
    "train_loss",
    "test_loss",
    "size_metric",
    "effective_size",
];

/// Writes one row per trial and epoch (1-based). `size_metric` is `N` for
/// aux-weight runs, the unclamped `C₁` for controller-mask runs and the
/// hidden width for static runs. Divergent trials stop at their last finite
/// epoch.
pub fn write_runs<W: Write>(out: W, trials: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(RUNS_HEADER).map_err(io)?;
    for t in trials {
        for (i, size) in t.sizes.iter().enumerate() {
            let (metric, effective) = size.metrics();
            w.write_record([
                t.trial.to_string(),
                (i + 1).to_string(),
                t.train_loss[i].to_string(),
                t.test_loss[i].to_string(),
                metric.to_string(),
                effective.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}
