//! Meyer-type spectral graph wavelet filter bank.
//!
//! Kernels use the transition polynomial
//! `nu(x) = x^4 (35 - 84x + 70x^2 - 20x^3)` with breakpoints 2/3, 4/3, 8/3.
//! Scales are dyadic, `s_j = 4 / (3 lambda_max) * 2^(j-1)`, so the band with
//! the smallest scale peaks at `lambda_max` and every doubling of `s` moves
//! the peak down an octave. The scaling kernel uses the largest scale and
//! covers the spectrum below the coarsest band. Squared responses sum to
//! one on `[0, lambda_max]`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};

use super::LaplacianDecomposition;
use crate::error::{Error, Result};

const L1: f64 = 2.0 / 3.0;
const L2: f64 = 4.0 / 3.0;
const L3: f64 = 8.0 / 3.0;

/// Upper limit on the number of wavelet bands.
pub const MAX_SCALES: usize = 9;

fn nu(x: f64) -> f64 {
    x.powi(4) * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x.powi(3))
}

/// Low-pass Meyer kernel: 1 below 2/3, smooth roll-off to 0 at 4/3.
pub fn meyer_scaling_kernel(x: f64) -> f64 {
    let x = x.abs();
    if x < L1 {
        1.0
    } else if x < L2 {
        (FRAC_PI_2 * nu(x / L1 - 1.0)).cos()
    } else {
        0.0
    }
}

/// Band-pass Meyer kernel supported on `[2/3, 8/3]`, peaking at 4/3.
pub fn meyer_wavelet_kernel(x: f64) -> f64 {
    let x = x.abs();
    if x < L1 {
        0.0
    } else if x < L2 {
        (FRAC_PI_2 * nu(x / L1 - 1.0)).sin()
    } else if x < L3 {
        (FRAC_PI_2 * nu(x / L2 - 1.0)).cos()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub lambda_max: f64,
    /// Ascending wavelet scales. Band `j` (1-based) uses `scales[j - 1]`,
    /// so band 1 is the finest.
    pub scales: Vec<f64>,
}

impl FilterBank {
    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    /// Scaling band plus one band per scale.
    pub fn num_bands(&self) -> usize {
        self.scales.len() + 1
    }

    /// Response of `band` at eigenvalue `lambda`. Band 0 is the scaling
    /// (low-pass) band.
    pub fn response(&self, band: usize, lambda: f64) -> f64 {
        if band == 0 {
            let coarsest = *self.scales.last().expect("bank has at least one scale");
            meyer_scaling_kernel(coarsest * lambda)
        } else {
            meyer_wavelet_kernel(self.scales[band - 1] * lambda)
        }
    }

    /// `h^2 + Σ_j g_j^2` at `lambda`.
    pub fn frame_function(&self, lambda: f64) -> f64 {
        (0..self.num_bands()).map(|b| self.response(b, lambda).powi(2)).sum()
    }

    /// Min and max of the frame function over `points` evenly spaced
    /// samples of `[0, lambda_max]`.
    pub fn frame_bounds(&self, points: usize) -> (f64, f64) {
        let points = points.max(2);
        (0..points)
            .map(|i| self.frame_function(self.lambda_max * i as f64 / (points - 1) as f64))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

pub fn make_meyer_bank(lambda_max: f64, num_scales: usize) -> Result<FilterBank> {
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(Error::Parameter(format!(
            "lambda_max must be positive, got {lambda_max}"
        )));
    }
    if !(1..=MAX_SCALES).contains(&num_scales) {
        return Err(Error::Parameter(format!(
            "num_scales must lie in 1..={MAX_SCALES}, got {num_scales}"
        )));
    }
    let base = 4.0 / (3.0 * lambda_max);
    let scales = (0..num_scales).map(|j| base * 2f64.powi(j as i32)).collect();
    Ok(FilterBank { lambda_max, scales })
}

/// Per-node, per-band wavelet coefficients. Column 0 is the scaling band,
/// column `j` the `j`-th wavelet band.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoefficients {
    pub matrix: DMatrix<f64>,
}

impl WaveletCoefficients {
    pub fn num_nodes(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_bands(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn get(&self, node: usize, band: usize) -> f64 {
        self.matrix[(node, band)]
    }
}

/// `W[:, b] = U G_b(Λ) Uᵀ f` for every band. Row `n` equals `ψ_{b,n}ᵀ f`
/// because `U G_b Uᵀ` is symmetric.
pub fn wavelet_coefficients(
    decomp: &LaplacianDecomposition,
    bank: &FilterBank,
    signal: &DVector<f64>,
) -> Result<WaveletCoefficients> {
    let n = decomp.len();
    if signal.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: signal.len(),
        });
    }
    let u = &decomp.eigenvectors;
    let spectrum = u.tr_mul(signal);
    let bands = bank.num_bands();
    let mut matrix = DMatrix::zeros(n, bands);
    for band in 0..bands {
        let filtered = DVector::from_iterator(
            n,
            spectrum
                .iter()
                .zip(decomp.eigenvalues.iter())
                .map(|(c, lam)| c * bank.response(band, *lam)),
        );
        matrix.set_column(band, &(u * filtered));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite wavelet coefficient".into()));
    }
    Ok(WaveletCoefficients { matrix })
}

/// `U G_b(Λ) Uᵀ`; column `n` is the wavelet `ψ_{b,n}` centred at node `n`.
pub fn wavelet_operator(decomp: &LaplacianDecomposition, bank: &FilterBank, band: usize) -> DMatrix<f64> {
    let u = &decomp.eigenvectors;
    let g = DVector::from_iterator(
        decomp.len(),
        decomp.eigenvalues.iter().map(|lam| bank.response(band, *lam)),
    );
    u * DMatrix::from_diagonal(&g) * u.transpose()
}
