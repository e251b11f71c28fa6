use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FidelityError {
    #[error("degenerate perturbation design: difference matrix has rank below {dim}")]
    Degenerate { dim: usize },
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample {index} has dimension {got}, expected {expected}")]
    Dimension { index: usize, expected: usize, got: usize },
}

const RANK_TOL: f64 = 1e-14;
const CONDITION_LIMIT: f64 = 1e10;
const TIKHONOV: f64 = 1e-10;

/// Least-squares gradient `g* = (X̃ᵀX̃)⁻¹ X̃ᵀ δ` where rows of `X̃` are
/// `a_j - a_i` and `δ_ij = q_j - q_i` over all ordered pairs `(i, j)`.
pub fn lmse_fit(center: &[f64], samples: &[(Vec<f64>, f64)]) -> Result<Vec<f64>, FidelityError> {
    let n = samples.len();
    let dim = center.len();
    if n < 2 {
        return Err(FidelityError::TooFewSamples(n));
    }
    for (index, (a, _)) in samples.iter().enumerate() {
        if a.len() != dim {
            return Err(FidelityError::Dimension {
                index,
                expected: dim,
                got: a.len(),
            });
        }
    }
    let mut x = DMatrix::<f64>::zeros(n * n, dim);
    let mut d = DVector::<f64>::zeros(n * n);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..dim {
                x[(row, k)] = samples[j].0[k] - samples[i].0[k];
            }
            d[row] = samples[j].1 - samples[i].1;
        }
    }
    let xtx = x.transpose() * &x;
    let xtd = x.transpose() * &d;
    let eig = nalgebra::SymmetricEigen::new(xtx.clone()).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if hi <= 0.0 || lo <= RANK_TOL * hi {
        return Err(FidelityError::Degenerate { dim });
    }
    let system = if hi / lo > CONDITION_LIMIT {
        xtx + DMatrix::identity(dim, dim) * TIKHONOV
    } else {
        xtx
    };
    let chol = system.cholesky().ok_or(FidelityError::Degenerate { dim })?;
    Ok(chol.solve(&xtd).iter().copied().collect())
}

/// `u·v / (‖u‖‖v‖)`, or `None` when either norm is at most `1e-12`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Option<f64> {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu <= 1e-12 || nv <= 1e-12 {
        return None;
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Some((dot / (nu * nv)).clamp(-1.0, 1.0))
}
