use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KidOptions {
    pub subset_size: usize,
    pub n_subsets: usize,
    pub seed: u64,
}

impl Default for KidOptions {
    fn default() -> Self {
        Self {
            subset_size: 100,
            n_subsets: 10,
            seed: 2021,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KidEstimate {
    pub mean: f64,
    /// Population standard deviation over subsets.
    pub std: f64,
    /// Size actually drawn per subset.
    pub subset_size: usize,
}

/// `(X Yᵀ / d + 1)³` elementwise.
fn kernel_matrix(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let d = x.ncols() as f64;
    (x * y.transpose()).map(|v| (v / d + 1.0).powi(3))
}

fn off_diagonal_mean(k: &DMatrix<f64>) -> f64 {
    let m = k.nrows();
    let mut sum = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                sum += k[(i, j)];
            }
        }
    }
    sum / (m * (m - 1)) as f64
}

/// Unbiased MMD² between the rows of `x` and `y`.
pub fn mmd2_unbiased(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if x.nrows() < 2 || y.nrows() < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 samples per set, got {} and {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::dim(format!("dimension {}", x.ncols()), format!("dimension {}", y.ncols())));
    }
    let kxy = kernel_matrix(x, y);
    let cross = kxy.iter().sum::<f64>() / (x.nrows() * y.nrows()) as f64;
    Ok(off_diagonal_mean(&kernel_matrix(x, x)) + off_diagonal_mean(&kernel_matrix(y, y)) - 2.0 * cross)
}

fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

/// MMD² averaged over seeded subsets drawn without replacement from each set.
pub fn kid(real: &DMatrix<f64>, fake: &DMatrix<f64>, opts: &KidOptions) -> Result<KidEstimate> {
    let n = real.nrows().min(fake.nrows());
    if n < 2 {
        return Err(Error::Argument(format!("need at least 2 samples per set, got {n}")));
    }
    if opts.n_subsets == 0 || opts.subset_size < 2 {
        return Err(Error::Argument("KID needs n_subsets >= 1 and subset_size >= 2".into()));
    }
    let m = opts.subset_size.min(n);
    let mut rng = RngStream::new(opts.seed, "kid.subsets");
    let mut values = Vec::with_capacity(opts.n_subsets);
    for _ in 0..opts.n_subsets {
        let ir = sample(&mut rng, real.nrows(), m).into_vec();
        let jf = sample(&mut rng, fake.nrows(), m).into_vec();
        values.push(mmd2_unbiased(&select_rows(real, &ir), &select_rows(fake, &jf))?);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    Ok(KidEstimate {
        mean,
        std: var.sqrt(),
        subset_size: m,
    })
}
