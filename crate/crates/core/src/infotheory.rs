//! Entropy and mutual information for discrete distributions and
//! multivariate Gaussians. Every quantity is in bits.

use nalgebra::DMatrix;

use crate::error::{Result, SivoError};

/// Converts natural-log quantities to bits. Only this module uses it.
const NATS_TO_BITS: f64 = std::f64::consts::LOG2_E;

const PROBABILITY_SUM_TOL: f64 = 1e-9;
const SYMMETRY_TOL: f64 = 1e-9;

/// A validated probability mass function.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution(Vec<f64>);

impl DiscreteDistribution {
    /// Rejects negative or non-finite entries and sums outside `1 +- 1e-9`.
    /// Nothing is renormalized.
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        check_probabilities(&probabilities)?;
        Ok(DiscreteDistribution(probabilities))
    }

    pub fn uniform(n: usize) -> Self {
        DiscreteDistribution(vec![1.0 / n as f64; n])
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(SivoError::InvalidDistribution("empty probability vector".into()));
    }
    if let Some(bad) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(SivoError::InvalidDistribution(format!(
            "entry {bad} is negative or not finite"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(SivoError::InvalidDistribution(format!(
            "probabilities sum to {sum}"
        )));
    }
    Ok(())
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Shannon entropy `-sum p log2 p`, with `0 log 0 = 0`.
pub fn discrete_entropy(d: &DiscreteDistribution) -> f64 {
    entropy_bits_unchecked(d.probabilities())
}

pub(crate) fn entropy_bits_unchecked(p: &[f64]) -> f64 {
    // max(0) absorbs the -0.0 of a one-hot vector.
    (-p.iter().map(|&v| plogp(v)).sum::<f64>()).max(0.0)
}

/// Mutual information of a joint probability table (rows index X, columns Y).
pub fn discrete_mutual_information(joint: &DMatrix<f64>) -> Result<f64> {
    check_probabilities(joint.as_slice())?;
    let px: Vec<f64> = joint.row_iter().map(|r| r.sum()).collect();
    let py: Vec<f64> = joint.column_iter().map(|c| c.sum()).collect();
    let mut mi = 0.0;
    for i in 0..joint.nrows() {
        for j in 0..joint.ncols() {
            let pxy = joint[(i, j)];
            if pxy > 0.0 {
                mi += pxy * (pxy / (px[i] * py[j])).log2();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// A multivariate Gaussian with a symmetric positive-definite covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    mean: nalgebra::DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: nalgebra::DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if mean.len() != covariance.nrows() {
            return Err(SivoError::DimensionMismatch(format!(
                "mean has {} entries, covariance is {}x{}",
                mean.len(),
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        log2_det_spd(&covariance)?;
        Ok(GaussianBelief { mean, covariance })
    }

    /// Zero-mean belief; only the covariance matters for entropy.
    pub fn from_covariance(covariance: DMatrix<f64>) -> Result<Self> {
        let n = covariance.nrows();
        Self::new(nalgebra::DVector::zeros(n), covariance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &nalgebra::DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
}

/// `log2 det(m)` through a Cholesky factorization. Failure of the
/// factorization is the positive-definiteness test.
pub fn log2_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(SivoError::DimensionMismatch(format!(
            "covariance is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = (m - m.transpose()).amax();
    let scale = m.amax().max(1.0);
    if !asym.is_finite() || asym > SYMMETRY_TOL * scale {
        return Err(SivoError::NotPositiveDefinite(format!(
            "asymmetry {asym:.3e}"
        )));
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| SivoError::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    let l = chol.l_dirty();
    let ln_det: f64 = 2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
    if !ln_det.is_finite() {
        return Err(SivoError::NotPositiveDefinite("degenerate factor".into()));
    }
    Ok(ln_det * NATS_TO_BITS)
}

/// Differential entropy of an n-dimensional Gaussian with covariance `cov`:
/// `1/2 log2((2 pi e)^n det cov)`.
pub fn gaussian_entropy_of(cov: &DMatrix<f64>) -> Result<f64> {
    let n = cov.nrows() as f64;
    let log2_2pie = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() * NATS_TO_BITS;
    Ok(0.5 * (n * log2_2pie + log2_det_spd(cov)?))
}

pub fn gaussian_entropy(g: &GaussianBelief) -> Result<f64> {
    gaussian_entropy_of(g.covariance())
}

/// Extracts the principal sub-matrix for `idx`.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Mutual information between the variables indexed by `part_a` and the
/// remaining ones: `1/2 log2(det S_aa det S_bb / det S)`.
pub fn gaussian_mutual_information(g: &GaussianBelief, part_a: &[usize]) -> Result<f64> {
    let n = g.dim();
    if part_a.is_empty() || part_a.len() >= n || part_a.iter().any(|&i| i >= n) {
        return Err(SivoError::DimensionMismatch(format!(
            "partition {part_a:?} does not split {n} variables"
        )));
    }
    let mut in_a = vec![false; n];
    for &i in part_a {
        in_a[i] = true;
    }
    let part_b: Vec<usize> = (0..n).filter(|&i| !in_a[i]).collect();
    if part_a.len() + part_b.len() != n {
        return Err(SivoError::DimensionMismatch("partition repeats an index".into()));
    }
    let cov = g.covariance();
    mi_from_parts(cov, part_a, &part_b)
}

/// Same as [`gaussian_mutual_information`] for a leading block of size `split`.
pub fn gaussian_mutual_information_split(cov: &DMatrix<f64>, split: usize) -> Result<f64> {
    let n = cov.nrows();
    if split == 0 || split >= n {
        return Err(SivoError::DimensionMismatch(format!(
            "split {split} does not partition {n} variables"
        )));
    }
    let a: Vec<usize> = (0..split).collect();
    let b: Vec<usize> = (split..n).collect();
    mi_from_parts(cov, &a, &b)
}

fn mi_from_parts(cov: &DMatrix<f64>, a: &[usize], b: &[usize]) -> Result<f64> {
    let full = log2_det_spd(cov)?;
    let aa = log2_det_spd(&submatrix(cov, a, a))?;
    let bb = log2_det_spd(&submatrix(cov, b, b))?;
    // Exact arithmetic gives >= 0; rounding can leave a hair below zero.
    Ok((0.5 * (aa + bb - full)).max(0.0))
}
