use serde::{Deserialize, Serialize};

use crate::engine::{RngStream, Tensor};
use crate::error::{Error, Result};
use crate::nets::LabeledSet;

const STREAM_DATA: u64 = 1;
const TRAIN_FRACTION: f64 = 0.8;

/// Gaussian clusters, one per class, each with its own axis-aligned
/// anisotropic spread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub classes: usize,
    pub input_dim: usize,
    pub samples_per_class: usize,
    /// Scale of the within-class noise.
    pub spread: f64,
    /// Scale of the class centres.
    pub separation: f64,
    /// Per-axis standard deviations are drawn from
    /// `spread·[1/anisotropy, anisotropy]`, log-uniformly.
    pub anisotropy: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            classes: 10,
            input_dim: 20,
            samples_per_class: 400,
            spread: 1.0,
            separation: 1.0,
            anisotropy: 6.0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("dataset needs at least 2 classes"));
        }
        if self.samples_per_class < 20 {
            return Err(Error::config("dataset needs at least 20 samples per class"));
        }
        if self.input_dim == 0 {
            return Err(Error::config("input_dim must be positive"));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(Error::config(format!(
                "degenerate cluster spread {}",
                self.spread
            )));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::config(format!(
                "degenerate cluster separation {}",
                self.separation
            )));
        }
        if !(self.anisotropy >= 1.0 && self.anisotropy.is_finite()) {
            return Err(Error::config("anisotropy must be at least 1"));
        }
        Ok(())
    }
}

/// Train and test split of one synthetic task. Both are sorted by class;
/// the first 80% of every class's draws go to training. Features are
/// shifted and scaled to zero mean and unit variance on the training split.
pub fn synth_dataset(spec: &DatasetSpec, seed: u64) -> Result<(LabeledSet, LabeledSet)> {
    spec.validate()?;
    let mut rng = RngStream::derive(seed, STREAM_DATA);
    let d = spec.input_dim;
    let n_train = (spec.samples_per_class as f64 * TRAIN_FRACTION).round() as usize;
    let log_a = spec.anisotropy.ln();

    let mut train = (Vec::new(), Vec::new());
    let mut test = (Vec::new(), Vec::new());
    for c in 0..spec.classes {
        let centre: Vec<f64> = (0..d).map(|_| spec.separation * rng.normal()).collect();
        let scales: Vec<f64> = (0..d)
            .map(|_| spec.spread * rng.uniform(-log_a, log_a).exp())
            .collect();
        for i in 0..spec.samples_per_class {
            let row = centre
                .iter()
                .zip(&scales)
                .map(|(m, s)| m + s * rng.normal());
            let (x, y) = if i < n_train { &mut train } else { &mut test };
            x.extend(row);
            y.push(c);
        }
    }
    standardize(&mut train.0, &mut test.0, d);
    let build = |(x, y): (Vec<f64>, Vec<usize>)| -> Result<LabeledSet> {
        Ok(LabeledSet {
            x: Tensor::new(vec![y.len(), d], x)?,
            labels: y,
        })
    };
    Ok((build(train)?, build(test)?))
}

fn standardize(train: &mut [f64], test: &mut [f64], d: usize) {
    let n = (train.len() / d) as f64;
    for j in 0..d {
        let mean = train.iter().skip(j).step_by(d).sum::<f64>() / n;
        let var = train
            .iter()
            .skip(j)
            .step_by(d)
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / n;
        let sd = var.sqrt();
        for v in train.iter_mut().chain(test.iter_mut()).skip(j).step_by(d) {
            *v = (*v - mean) / sd;
        }
    }
}
