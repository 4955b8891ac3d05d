use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lower bound applied to fitted standard deviations.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-feature z-score parameters, fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationStats {
    pub fn identity(d: usize) -> Self {
        StandardizationStats {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn apply_matrix(&self, x: &Tensor) -> Result<Tensor> {
        let d = self.mean.len();
        if x.rank() != 2 || x.cols() != d {
            return Err(Error::dim("standardize_apply", x.shape(), &[d]));
        }
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % d]) / self.std[i % d])
            .collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn invert_matrix(&self, z: &Tensor) -> Result<Tensor> {
        let d = self.mean.len();
        if z.rank() != 2 || z.cols() != d {
            return Err(Error::dim("standardize_invert", z.shape(), &[d]));
        }
        let data = z
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.std[i % d] + self.mean[i % d])
            .collect();
        Tensor::new(z.shape().to_vec(), data)
    }
}

/// Column means and population standard deviations (floored at
/// [`STD_FLOOR`]).
pub fn standardize_fit(train: &Dataset) -> Result<StandardizationStats> {
    let n = train.n_rows();
    if n < 2 {
        return Err(Error::Usage(format!(
            "standardize_fit needs at least 2 rows, got {n}"
        )));
    }
    let d = train.n_features();
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(train.x.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for r in 0..n {
        for ((s, v), m) in var.iter_mut().zip(train.x.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var
        .into_iter()
        .map(|s| (s / n as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(StandardizationStats { mean, std })
}

pub fn standardize_apply(data: &Dataset, stats: &StandardizationStats) -> Result<Dataset> {
    data.with_features(stats.apply_matrix(&data.x)?)
}
