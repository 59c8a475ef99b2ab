//! Grid sweeps and the persisted sweep table.
//!
//! A sweep runs one paired [`run_trials`](crate::harness::trial::run_trials)
//! per grid point and appends one row per point to `sweep.csv` as soon as the
//! point finishes. Rows are written in grid order, so an interrupted table is
//! always a prefix of the full one and can be resumed by position.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::config::{SweepGrid, TaskSpec, TrainConfig};
use crate::harness::stats::aggregate;
use crate::harness::trial::run_trials;

/// Coordinates of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub epochs: usize,
    pub lambda: f64,
    pub eta: f64,
    pub n_max: usize,
    pub classes: Option<usize>,
}

impl GridPoint {
    pub fn of(cfg: &TrainConfig) -> Self {
        Self {
            epochs: cfg.epochs,
            lambda: cfg.lambda,
            eta: cfg.eta,
            n_max: cfg.n_max,
            classes: cfg.task.classes(),
        }
    }

    /// `base` moved to this point. The static arm follows `n_max`.
    pub fn apply(&self, base: &TrainConfig) -> Result<TrainConfig> {
        let mut cfg = base.clone();
        cfg.epochs = self.epochs;
        cfg.lambda = self.lambda;
        cfg.eta = self.eta;
        if cfg.n_max != self.n_max {
            cfg.n_max = self.n_max;
            cfg.n_static = None;
            cfg.n_target = None;
        }
        if let Some(c) = self.classes {
            match &mut cfg.task {
                TaskSpec::Spiral { classes, .. } => *classes = c,
                _ => {
                    return Err(Error::Config(
                        "sweep over classes needs a spiral task".into(),
                    ))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl SweepGrid {
    /// Grid points in table order: classes, then `n_max`, `eta`, `lambda`,
    /// with `epochs` varying fastest.
    pub fn points(&self, base: &TrainConfig) -> Vec<GridPoint> {
        let here = GridPoint::of(base);
        let classes: Vec<Option<usize>> = match &self.classes {
            Some(v) => v.iter().map(|&c| Some(c)).collect(),
            None => vec![here.classes],
        };
        let n_max = self.n_max.clone().unwrap_or_else(|| vec![here.n_max]);
        let eta = self.eta.clone().unwrap_or_else(|| vec![here.eta]);
        let lambda = self.lambda.clone().unwrap_or_else(|| vec![here.lambda]);
        let epochs = self.epochs.clone().unwrap_or_else(|| vec![here.epochs]);
        let mut out = Vec::new();
        for &c in &classes {
            for &n in &n_max {
                for &h in &eta {
                    for &l in &lambda {
                        for &e in &epochs {
                            out.push(GridPoint {
                                epochs: e,
                                lambda: l,
                                eta: h,
                                n_max: n,
                                classes: c,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self, base: &TrainConfig) -> Result<()> {
        let empty = [
            ("epochs", self.epochs.as_ref().map(Vec::len)),
            ("lambda", self.lambda.as_ref().map(Vec::len)),
            ("eta", self.eta.as_ref().map(Vec::len)),
            ("n_max", self.n_max.as_ref().map(Vec::len)),
            ("classes", self.classes.as_ref().map(Vec::len)),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, n)| *n == Some(0)) {
            return Err(Error::Config(format!("sweep.{name} must not be empty")));
        }
        for p in self.points(base) {
            p.apply(base)
                .map_err(|e| Error::Config(format!("sweep point {p:?}: {e}")))?;
        }
        Ok(())
    }
}

/// Outcome of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    /// More than half of some arm's trials diverged.
    Unreliable,
    /// The cell produced no usable aggregate.
    Failed,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Unreliable => "unreliable",
            RowStatus::Failed => "failed",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(RowStatus::Ok),
            "unreliable" => Some(RowStatus::Unreliable),
            "failed" => Some(RowStatus::Failed),
            _ => None,
        }
    }
}

/// One line of `sweep.csv`. Metrics that do not apply are `None` and are
/// written as empty fields.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: GridPoint,
    pub mean_final_g: Option<f64>,
    pub std_final_g: Option<f64>,
    pub mean_final_s: Option<f64>,
    pub std_final_s: Option<f64>,
    pub r: Option<f64>,
    pub delta_l: Option<f64>,
    pub a_g: Option<f64>,
    pub a_s: Option<f64>,
    pub divergent_count: usize,
    pub status: RowStatus,
}

pub const SWEEP_HEADER: [&str; 15] = [
    "epochs",
    "lambda",
    "eta",
    "n_max",
    "classes",
    "mean_final_g",
    "std_final_g",
    "mean_final_s",
    "std_final_s",
    "R",
    "delta_L",
    "A_g",
    "A_s",
    "divergent_count",
    "status",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepRow {
    fn failed(point: GridPoint, divergent_count: usize) -> Self {
        Self {
            point,
            mean_final_g: None,
            std_final_g: None,
            mean_final_s: None,
            std_final_s: None,
            r: None,
            delta_l: None,
            a_g: None,
            a_s: None,
            divergent_count,
            status: RowStatus::Failed,
        }
    }

    pub fn fields(&self) -> [String; 15] {
        let p = &self.point;
        [
            p.epochs.to_string(),
            p.lambda.to_string(),
            p.eta.to_string(),
            p.n_max.to_string(),
            p.classes.map(|c| c.to_string()).unwrap_or_default(),
            opt(self.mean_final_g),
            opt(self.std_final_g),
            opt(self.mean_final_s),
            opt(self.std_final_s),
            opt(self.r),
            opt(self.delta_l),
            opt(self.a_g),
            opt(self.a_s),
            self.divergent_count.to_string(),
            self.status.as_str().to_string(),
        ]
    }

    pub fn to_line(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(self.fields()).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii fields")
    }

    fn from_record(rec: &csv::StringRecord, line: usize) -> Result<Self> {
        let bad = |msg: String| Error::Parse { line, msg };
        if rec.len() != SWEEP_HEADER.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                SWEEP_HEADER.len(),
                rec.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("{}: bad number {:?}", SWEEP_HEADER[i], &rec[i])))
        };
        let count = |i: usize| -> Result<usize> {
            rec[i]
                .parse::<usize>()
                .map_err(|_| bad(format!("{}: bad count {:?}", SWEEP_HEADER[i], &rec[i])))
        };
        let maybe = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let classes = if rec[4].is_empty() {
            None
        } else {
            Some(count(4)?)
        };
        let status = RowStatus::parse(&rec[14])
            .ok_or_else(|| bad(format!("status: unknown value {:?}", &rec[14])))?;
        Ok(Self {
            point: GridPoint {
                epochs: count(0)?,
                lambda: num(1)?,
                eta: num(2)?,
                n_max: count(3)?,
                classes,
            },
            mean_final_g: maybe(5)?,
            std_final_g: maybe(6)?,
            mean_final_s: maybe(7)?,
            std_final_s: maybe(8)?,
            r: maybe(9)?,
            delta_l: maybe(10)?,
            a_g: maybe(11)?,
            a_s: maybe(12)?,
            divergent_count: count(13)?,
            status,
        })
    }
}

pub fn header_line() -> String {
    SWEEP_HEADER.join(",") + "\n"
}

/// Parses a sweep table. Every line, including the last, must be complete.
pub fn parse_table(text: &str) -> Result<Vec<SweepRow>> {
    if text.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "empty table".into(),
        });
    }
    if !text.ends_with('\n') {
        let line = text.lines().count();
        return Err(Error::Parse {
            line,
            msg: "truncated final line".into(),
        });
    }
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut header = false;
    for (i, rec) in rd.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if i == 0 {
            if rec.iter().ne(SWEEP_HEADER.iter().copied()) {
                return Err(Error::Parse {
                    line,
                    msg: "unexpected header".into(),
                });
            }
            header = true;
            continue;
        }
        rows.push(SweepRow::from_record(&rec, line)?);
    }
    if !header {
        return Err(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        });
    }
    Ok(rows)
}

/// Runs the trials for one grid point. Failures become `Failed` rows.
pub fn run_cell(cfg: &TrainConfig) -> SweepRow {
    let point = GridPoint::of(cfg);
    let set = match run_trials(cfg) {
        Ok(s) => s,
        Err(_) => return SweepRow::failed(point, 0),
    };
    let all = set.primary.len() + set.baseline.as_ref().map_or(0, Vec::len);
    let divergent = set
        .primary
        .iter()
        .chain(set.baseline.iter().flatten())
        .filter(|t| t.diverged())
        .count();
    let agg = match aggregate(&set) {
        Ok(a) => a,
        Err(_) => return SweepRow::failed(point, divergent.min(all)),
    };
    let s = agg.baseline.as_ref();
    SweepRow {
        point,
        mean_final_g: Some(agg.primary.final_mean),
        std_final_g: Some(agg.primary.final_std),
        mean_final_s: s.map(|s| s.final_mean),
        std_final_s: s.map(|s| s.final_std),
        r: agg.loss_ratio().and_then(|r| r.ok()),
        delta_l: agg.delta_l(),
        a_g: agg.primary.accuracy_mean,
        a_s: s.and_then(|s| s.accuracy_mean),
        divergent_count: agg.divergent_count(),
        status: if agg.unreliable() {
            RowStatus::Unreliable
        } else {
            RowStatus::Ok
        },
    }
}

/// Runs every grid point in order, handing each finished row to `sink`.
/// The first `skip` points are assumed done and are not run.
pub fn sweep_with(
    base: &TrainConfig,
    grid: &SweepGrid,
    skip: usize,
    mut sink: impl FnMut(&SweepRow) -> Result<()>,
) -> Result<()> {
    grid.validate(base)?;
    for p in grid.points(base).into_iter().skip(skip) {
        let row = run_cell(&p.apply(base)?);
        sink(&row)?;
    }
    Ok(())
}

/// Runs a sweep in memory.
pub fn sweep(base: &TrainConfig, grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    sweep_with(base, grid, 0, |r| {
        rows.push(r.clone());
        Ok(())
    })?;
    Ok(rows)
}

/// Rows of an existing table at `path` that can be kept when resuming.
///
/// The table must parse completely and its rows must match the first grid
/// points in order; anything else is refused.
pub fn resume_prefix(path: &Path, points: &[GridPoint]) -> Result<Vec<SweepRow>> {
    let text = std::fs::read_to_string(path)?;
    let rows = parse_table(&text)?;
    if rows.len() > points.len() {
        return Err(Error::Parse {
            line: points.len() + 2,
            msg: "table has more rows than the grid".into(),
        });
    }
    for (i, (row, p)) in rows.iter().zip(points).enumerate() {
        if row.point != *p {
            return Err(Error::Parse {
                line: i + 2,
                msg: format!("row does not match grid point {p:?}"),
            });
        }
    }
    Ok(rows)
}

/// Runs a sweep and writes `path` incrementally. With `resume`, an existing
/// table is validated and only the missing points are run; a corrupt table
/// is an error and is left untouched.
pub fn sweep_to_file(
    base: &TrainConfig,
    grid: &SweepGrid,
    path: &Path,
    resume: bool,
) -> Result<Vec<SweepRow>> {
    grid.validate(base)?;
    let points = grid.points(base);
    let mut rows = if resume && path.exists() {
        resume_prefix(path, &points)?
    } else {
        let mut f = File::create(path)?;
        f.write_all(header_line().as_bytes())?;
        Vec::new()
    };
    let mut f = OpenOptions::new().append(true).open(path)?;
    sweep_with(base, grid, rows.len(), |row| {
        f.write_all(row.to_line().as_bytes())?;
        f.flush()?;
        rows.push(row.clone());
        Ok(())
    })?;
    Ok(rows)
}

/// A growing-network accuracy paired with static accuracies at `N` and `2N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyPair {
    pub classes: Option<usize>,
    pub n: usize,
    pub a_g: f64,
    pub a_s_same: f64,
    pub a_s_double: f64,
}

/// Pairs `A^g` at `N` with `A^s` at `2N` for the same class count. Rows whose
/// `2N` partner is missing are skipped and reported in the warnings.
pub fn efficiency_pairs(rows: &[SweepRow]) -> (Vec<EfficiencyPair>, Vec<String>) {
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for row in rows {
        let (Some(a_g), Some(a_s_same)) = (row.a_g, row.a_s) else {
            continue;
        };
        let partner = rows.iter().find(|o| {
            o.point.n_max == 2 * row.point.n_max
                && o.point.classes == row.point.classes
                && o.point.epochs == row.point.epochs
                && o.point.lambda == row.point.lambda
                && o.point.eta == row.point.eta
                && o.a_s.is_some()
        });
        match partner {
            Some(o) => pairs.push(EfficiencyPair {
                classes: row.point.classes,
                n: row.point.n_max,
                a_g,
                a_s_same,
                a_s_double: o.a_s.expect("filtered"),
            }),
            None => warnings.push(format!(
                "no static row at N = {} for N = {}, classes = {:?}; pair skipped",
                2 * row.point.n_max,
                row.point.n_max,
                row.point.classes
            )),
        }
    }
    (pairs, warnings)
}
