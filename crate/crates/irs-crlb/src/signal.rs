//! Slow-time signal model: Doppler steering, the sensing matrix
//! `A = x h^T .* P(nu)` and its per-column Doppler derivative, and
//! synthesis of noisy received vectors `y = A alpha + w`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::ChannelSet;

/// Pulse train parameters and the slow-time code.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarParams {
    pulse_count: usize,
    pri: f64,
    waveform: DVector<Complex64>,
}

impl RadarParams {
    pub fn new(pulse_count: usize, pri: f64, waveform: DVector<Complex64>) -> Result<Self> {
        if pulse_count < 2 {
            return Err(Error::invalid(
                "at least two pulses are required to observe Doppler",
            ));
        }
        if waveform.len() != pulse_count {
            return Err(Error::invalid(format!(
                "waveform length {} does not match pulse count {}",
                waveform.len(),
                pulse_count
            )));
        }
        if !(pri.is_finite() && pri > 0.0) {
            return Err(Error::invalid("pulse repetition interval must be positive"));
        }
        if !waveform.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::invalid("waveform entries must be finite"));
        }
        if waveform.iter().all(|c| c.norm_sqr() == 0.0) {
            return Err(Error::invalid("waveform must not be identically zero"));
        }
        Ok(Self {
            pulse_count,
            pri,
            waveform,
        })
    }

    /// Constant-modulus all-ones slow-time code of length `n`.
    pub fn constant_waveform(pulse_count: usize, pri: f64) -> Result<Self> {
        let x = DVector::from_element(pulse_count, Complex64::new(1.0, 0.0));
        Self::new(pulse_count, pri, x)
    }

    pub fn pulse_count(&self) -> usize {
        self.pulse_count
    }

    pub fn pri(&self) -> f64 {
        self.pri
    }

    pub fn waveform(&self) -> &DVector<Complex64> {
        &self.waveform
    }
}

/// Complex reflectivities and normalized Dopplers, index 0 = the LoS path.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetParams {
    pub alpha: Vec<Complex64>,
    pub nu: Vec<f64>,
}

impl TargetParams {
    pub fn new(alpha: Vec<Complex64>, nu: Vec<f64>) -> Result<Self> {
        if alpha.len() != nu.len() || alpha.is_empty() {
            return Err(Error::invalid(
                "alpha and nu must have equal nonzero length K+1",
            ));
        }
        for &v in &nu {
            if !(-0.5..0.5).contains(&v) {
                return Err(Error::invalid(format!(
                    "normalized Doppler {v} outside [-0.5, 0.5)"
                )));
            }
        }
        Ok(Self { alpha, nu })
    }

    /// Number of NLoS paths `K`.
    pub fn nlos_count(&self) -> usize {
        self.alpha.len() - 1
    }
}

/// Noise covariance: either white `R = sigma^2 I` or a general Hermitian
/// positive-definite matrix.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    White { sigma2: f64 },
    General { r: DMatrix<Complex64> },
}

const HERMITIAN_TOL: f64 = 1e-12;

impl NoiseModel {
    pub fn white(sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::InvalidCovariance(
                "noise variance must be positive".into(),
            ));
        }
        Ok(NoiseModel::White { sigma2 })
    }

    /// Validates Hermitian symmetry (to 1e-12 relative) and positive
    /// definiteness via Cholesky.
    pub fn general(r: DMatrix<Complex64>) -> Result<Self> {
        if r.nrows() != r.ncols() || r.nrows() == 0 {
            return Err(Error::InvalidCovariance(
                "covariance must be square and nonempty".into(),
            ));
        }
        let scale = r.iter().map(|c| c.norm()).fold(0.0f64, f64::max).max(1.0);
        for i in 0..r.nrows() {
            for j in 0..=i {
                if (r[(i, j)] - r[(j, i)].conj()).norm() > HERMITIAN_TOL * scale {
                    return Err(Error::InvalidCovariance(format!(
                        "covariance is not Hermitian at ({i}, {j})"
                    )));
                }
            }
        }
        // Complex Cholesky cannot detect indefiniteness (every complex
        // number has a square root), so test positivity on the real
        // representation [[Re R, -Im R], [Im R, Re R]].
        let n = r.nrows();
        let mut real_rep = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                real_rep[(i, j)] = r[(i, j)].re;
                real_rep[(i + n, j + n)] = r[(i, j)].re;
                real_rep[(i, j + n)] = -r[(i, j)].im;
                real_rep[(i + n, j)] = r[(i, j)].im;
            }
        }
        let real_rep = (&real_rep + real_rep.transpose()) * 0.5;
        if Cholesky::new(real_rep).is_none() {
            return Err(Error::InvalidCovariance(
                "covariance is not positive definite".into(),
            ));
        }
        Ok(NoiseModel::General { r })
    }

    pub fn dim_matches(&self, n: usize) -> bool {
        match self {
            NoiseModel::White { .. } => true,
            NoiseModel::General { r } => r.nrows() == n,
        }
    }

    /// Applies `R^{-1}` to each column of `m`.
    pub fn solve(&self, m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        match self {
            NoiseModel::White { sigma2 } => Ok(m.map(|c| c / *sigma2)),
            NoiseModel::General { r } => {
                if r.nrows() != m.nrows() {
                    return Err(Error::invalid(format!(
                        "covariance dimension {} does not match matrix rows {}",
                        r.nrows(),
                        m.nrows()
                    )));
                }
                let chol = Cholesky::new(r.clone()).ok_or_else(|| {
                    Error::InvalidCovariance("covariance is not positive definite".into())
                })?;
                Ok(chol.solve(m))
            }
        }
    }

    /// Lower Cholesky factor `L` with `R = L L^H`, for noise coloring.
    fn cholesky_factor(&self, n: usize) -> Result<CholeskyFactor> {
        match self {
            NoiseModel::White { sigma2 } => Ok(CholeskyFactor::Scalar(sigma2.sqrt())),
            NoiseModel::General { r } => {
                if r.nrows() != n {
                    return Err(Error::invalid(format!(
                        "covariance dimension {} does not match signal length {n}",
                        r.nrows()
                    )));
                }
                let chol = Cholesky::new(r.clone()).ok_or_else(|| {
                    Error::InvalidCovariance("covariance is not positive definite".into())
                })?;
                Ok(CholeskyFactor::Lower(chol))
            }
        }
    }
}

enum CholeskyFactor {
    Scalar(f64),
    Lower(Cholesky<Complex64, Dyn>),
}

/// Doppler steering vector `p(nu)`: entry `i` is `exp(j i nu)`.
///
/// The `2 pi T_p` factor lives inside `nu` by its definition as a
/// normalized Doppler shift.
pub fn doppler_steering(nu: f64, n: usize) -> DVector<Complex64> {
    DVector::from_iterator(n, (0..n).map(|i| Complex64::from_polar(1.0, i as f64 * nu)))
}

/// Entrywise derivative of `p(nu)`: entry `i` is `j i exp(j i nu)`.
pub fn doppler_steering_derivative(nu: f64, n: usize) -> DVector<Complex64> {
    DVector::from_iterator(
        n,
        (0..n).map(|i| Complex64::new(0.0, i as f64) * Complex64::from_polar(1.0, i as f64 * nu)),
    )
}

/// Sensing matrix `A`: column `k` is `h_k (x .* p(nu_k))`, equivalently
/// the Hadamard form `x h^T .* P(nu)`.
pub fn sensing_matrix(
    radar: &RadarParams,
    channels: &ChannelSet,
    nu: &[f64],
) -> Result<DMatrix<Complex64>> {
    let h = channels.stacked();
    build_columns(radar, &h, nu, doppler_steering)
}

/// Per-column Doppler derivative of the sensing matrix: column `k` is
/// `h_k (x .* pdot(nu_k))`. Each column of `A` depends only on its own
/// `nu_k`, so this collects the K+1 nonzero derivative columns.
pub fn sensing_matrix_derivative(
    radar: &RadarParams,
    channels: &ChannelSet,
    nu: &[f64],
) -> Result<DMatrix<Complex64>> {
    let h = channels.stacked();
    build_columns(radar, &h, nu, doppler_steering_derivative)
}

fn build_columns(
    radar: &RadarParams,
    h: &[Complex64],
    nu: &[f64],
    steer: impl Fn(f64, usize) -> DVector<Complex64>,
) -> Result<DMatrix<Complex64>> {
    if h.len() != nu.len() {
        return Err(Error::invalid(format!(
            "channel count {} does not match Doppler count {}",
            h.len(),
            nu.len()
        )));
    }
    let n = radar.pulse_count();
    let x = radar.waveform();
    let mut a = DMatrix::zeros(n, h.len());
    for (k, (&hk, &nuk)) in h.iter().zip(nu).enumerate() {
        let p = steer(nuk, n);
        for i in 0..n {
            a[(i, k)] = hk * x[i] * p[i];
        }
    }
    Ok(a)
}

/// Draws `y = A alpha + w` with `w ~ CN(0, R)`, deterministically from the
/// seed. White noise uses `w = sigma g`; colored noise applies the lower
/// Cholesky factor of `R` to the same i.i.d. standard draws.
pub fn synthesize_received(
    a: &DMatrix<Complex64>,
    target: &TargetParams,
    noise: &NoiseModel,
    seed: u64,
) -> Result<DVector<Complex64>> {
    if a.ncols() != target.alpha.len() {
        return Err(Error::invalid(format!(
            "sensing matrix has {} columns but {} reflectivities were given",
            a.ncols(),
            target.alpha.len()
        )));
    }
    let n = a.nrows();
    if !noise.dim_matches(n) {
        return Err(Error::invalid(
            "noise covariance dimension does not match pulse count",
        ));
    }
    let alpha = DVector::from_column_slice(&target.alpha);
    let mut y = a * alpha;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // CN(0,1): real and imaginary parts are N(0, 1/2).
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let g = DVector::from_iterator(
        n,
        (0..n).map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * half, im * half)
        }),
    );
    match noise.cholesky_factor(n)? {
        CholeskyFactor::Scalar(sigma) => {
            y += g.map(|c| c * sigma);
        }
        CholeskyFactor::Lower(chol) => {
            y += chol.l() * g;
        }
    }
    Ok(y)
}
