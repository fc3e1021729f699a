use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::adapt::similarity_matrix;
use crate::engine::Tensor;
use crate::error::Result;
use crate::game::IterationLog;

pub const METRICS_HEADER: [&str; 13] = [
    "epoch",
    "iter",
    "l_ds",
    "l_as",
    "l_b",
    "l_bns",
    "l_g",
    "l_q",
    "bg",
    "delta_g",
    "delta_q",
    "mean_h_norm",
    "q_acc",
];

/// Writes one row per logged iteration. `q_acc` is empty between
/// evaluations. Floats use the shortest representation that parses back to
/// the same value.
pub fn emit_metrics(logs: &[IterationLog], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for l in logs {
        w.write_record(metrics_row(l))?;
    }
    w.flush()?;
    Ok(())
}

fn metrics_row(l: &IterationLog) -> Vec<String> {
    let mut row = vec![l.epoch.to_string(), l.iter.to_string()];
    row.extend(
        [
            l.l_ds,
            l.l_as,
            l.l_b,
            l.l_bns,
            l.l_g,
            l.l_q,
            l.gap.bg,
            l.gap.delta_g,
            l.gap.delta_q,
            l.mean_h_norm,
        ]
        .iter()
        .map(f64::to_string),
    );
    row.push(l.q_acc.map(|a| a.to_string()).unwrap_or_default());
    row
}

/// One parsed metrics row.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub iter: usize,
    /// `l_ds, l_as, l_b, l_bns, l_g, l_q, bg, delta_g, delta_q, mean_h_norm`.
    pub values: [f64; 10],
    pub q_acc: Option<f64>,
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(crate::Error::config(format!(
            "unexpected metrics header {header:?}"
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| {
                crate::Error::config(format!("bad number {:?} in column {i}", &rec[i]))
            })
        };
        let int = |i: usize| -> Result<usize> {
            rec[i].parse().map_err(|_| {
                crate::Error::config(format!("bad integer {:?} in column {i}", &rec[i]))
            })
        };
        let mut values = [0.0; 10];
        for (k, v) in values.iter_mut().enumerate() {
            *v = num(k + 2)?;
        }
        out.push(MetricsRow {
            epoch: int(0)?,
            iter: int(1)?,
            values,
            q_acc: if rec[12].is_empty() {
                None
            } else {
                Some(num(12)?)
            },
        });
    }
    Ok(out)
}

/// Pairwise ℓ1 distances between the rows of a `p_ds` batch, as a bare
/// grid with no header.
pub fn emit_similarity(p_ds: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let s = similarity_matrix(p_ds)?;
    let mut f = File::create(path)?;
    for row in s.row_iter() {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    Ok(())
}
