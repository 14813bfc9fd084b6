//! Scene geometry, array steering and the radar-IRS-target-IRS-radar
//! channel in both its direct and quadratic-form representation.
//!
//! Every IRS is a uniform linear array lying along the x-axis with
//! broadside pointing toward +y. Bearings are measured from broadside,
//! positive clockwise (toward +x), so a point at direction `(dx, dy)` seen
//! from the array sits at `theta = atan2(dx, dy)` and only `sin(theta)`
//! enters the steering phases.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// A point in the 2-D scene plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Position2D {
    pub x: f64,
    pub y: f64,
}

impl Position2D {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_to(&self, other: &Position2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One IRS: per-element phase shifts of a uniform linear array.
///
/// Amplitude reflection gains are fixed at unity; only the phases are
/// designable. Phases are canonicalized into `[0, 2*pi)` on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct IrsPanel {
    phases: Vec<f64>,
    spacing_ratio: f64,
}

/// Half-wavelength element spacing, the standard unambiguous ULA choice.
pub const DEFAULT_SPACING_RATIO: f64 = 0.5;

impl IrsPanel {
    pub fn new(phases: Vec<f64>, spacing_ratio: f64) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::invalid("IRS panel must have at least one element"));
        }
        if !phases.iter().all(|p| p.is_finite()) {
            return Err(Error::invalid("IRS phases must be finite"));
        }
        if !(spacing_ratio.is_finite() && spacing_ratio > 0.0) {
            return Err(Error::invalid("spacing ratio d/lambda must be positive"));
        }
        let phases = phases.into_iter().map(canonical_phase).collect();
        Ok(Self {
            phases,
            spacing_ratio,
        })
    }

    /// All-zero phases (identity reflection).
    pub fn identity(element_count: usize) -> Result<Self> {
        Self::new(vec![0.0; element_count.max(1)], DEFAULT_SPACING_RATIO)
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn element_count(&self) -> usize {
        self.phases.len()
    }

    pub fn spacing_ratio(&self) -> f64 {
        self.spacing_ratio
    }

    /// Unit-modulus reflection coefficients `v_m = exp(j phi_m)`.
    pub fn reflection_vector(&self) -> DVector<Complex64> {
        DVector::from_iterator(
            self.phases.len(),
            self.phases.iter().map(|&p| Complex64::from_polar(1.0, p)),
        )
    }
}

fn canonical_phase(p: f64) -> f64 {
    let r = p.rem_euclid(TAU);
    // rem_euclid can return TAU itself when p is a tiny negative number.
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// LoS and NLoS channel coefficients of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h_los: Complex64,
    pub h_nlos: Vec<Complex64>,
}

impl ChannelSet {
    pub fn new(h_los: Complex64, h_nlos: Vec<Complex64>) -> Result<Self> {
        let finite = |c: &Complex64| c.re.is_finite() && c.im.is_finite();
        if !finite(&h_los) || !h_nlos.iter().all(finite) {
            return Err(Error::invalid("channel coefficients must be finite"));
        }
        Ok(Self { h_los, h_nlos })
    }

    /// Number of NLoS paths `K`.
    pub fn nlos_count(&self) -> usize {
        self.h_nlos.len()
    }

    /// The stacked coefficient vector `h = [h_los, h_nlos_1, ..., h_nlos_K]`.
    pub fn stacked(&self) -> Vec<Complex64> {
        let mut h = Vec::with_capacity(1 + self.h_nlos.len());
        h.push(self.h_los);
        h.extend_from_slice(&self.h_nlos);
        h
    }
}

/// The rank-1 symmetric matrix `S = u u^T` with
/// `u = b(theta_ir) .* b(theta_ti)`, which turns the twice-reflected
/// channel into the quadratic form `h = v^T S v`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    factor: DVector<Complex64>,
}

impl CouplingMatrix {
    /// The rank-1 factor `u`.
    pub fn factor(&self) -> &DVector<Complex64> {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.len()
    }

    /// Materializes `S = u u^T` (symmetric, not Hermitian in general).
    pub fn matrix(&self) -> DMatrix<Complex64> {
        let m = self.factor.len();
        DMatrix::from_fn(m, m, |i, j| self.factor[i] * self.factor[j])
    }

    /// Evaluates `v^T S v = (v^T u)^2` without materializing `S`.
    pub fn quadratic_form(&self, v: &DVector<Complex64>) -> Complex64 {
        let z: Complex64 = v
            .iter()
            .zip(self.factor.iter())
            .map(|(a, b)| a * b)
            .sum();
        z * z
    }
}

/// ULA steering vector: entry `i` is `exp(j 2 pi (d/lambda) i sin(theta))`.
pub fn steering_vector(theta: f64, m: usize, spacing_ratio: f64) -> Result<DVector<Complex64>> {
    if m == 0 {
        return Err(Error::invalid("steering vector needs at least one element"));
    }
    let step = TAU * spacing_ratio * theta.sin();
    Ok(DVector::from_iterator(
        m,
        (0..m).map(|i| Complex64::from_polar(1.0, step * i as f64)),
    ))
}

/// Bearings of the radar and the target as seen from an IRS, measured from
/// the array broadside (+y), positive clockwise.
///
/// The pair `(range, bearing)` inverts back to the input position via
/// `p = irs + range * (sin theta, cos theta)`.
pub fn angles_from_positions(
    radar: Position2D,
    irs: Position2D,
    target: Position2D,
) -> Result<(f64, f64)> {
    let theta_ir = bearing_from(irs, radar)?;
    let theta_ti = bearing_from(irs, target)?;
    Ok((theta_ir, theta_ti))
}

fn bearing_from(origin: Position2D, point: Position2D) -> Result<f64> {
    let dx = point.x - origin.x;
    let dy = point.y - origin.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::invalid(
            "bearing undefined for coincident points in the scene",
        ));
    }
    Ok(dx.atan2(dy))
}

/// Distance-dependent path loss `10^(l0_db/10) * (d/d0)^(-beta0)` as a
/// linear amplitude gain.
pub fn path_loss(distance: f64, l0_db: f64, d0: f64, beta0: f64) -> Result<f64> {
    if !(distance.is_finite() && distance > 0.0) {
        return Err(Error::invalid("path loss distance must be positive"));
    }
    if !(d0.is_finite() && d0 > 0.0) {
        return Err(Error::invalid("reference distance d0 must be positive"));
    }
    Ok(10f64.powf(l0_db / 10.0) * (distance / d0).powf(-beta0))
}

/// Diagonal phase-shift matrix `Phi = Diag(exp(j phi_1), ..., exp(j phi_M))`.
pub fn phase_matrix(panel: &IrsPanel) -> DMatrix<Complex64> {
    DMatrix::from_diagonal(&panel.reflection_vector())
}

/// Builds `S = u u^T` with `u = b(theta_ir) .* b(theta_ti)`.
pub fn coupling_matrix(
    theta_ir: f64,
    theta_ti: f64,
    m: usize,
    spacing_ratio: f64,
) -> Result<CouplingMatrix> {
    let b_ir = steering_vector(theta_ir, m, spacing_ratio)?;
    let b_ti = steering_vector(theta_ti, m, spacing_ratio)?;
    let factor = b_ir.component_mul(&b_ti);
    Ok(CouplingMatrix { factor })
}

/// Twice-reflected channel by its definition:
/// `b^T(theta_ir) Phi b(theta_ti) * b^T(theta_ti) Phi b(theta_ir)`.
pub fn nlos_channel_direct(panel: &IrsPanel, theta_ir: f64, theta_ti: f64) -> Result<Complex64> {
    let m = panel.element_count();
    let rho = panel.spacing_ratio();
    let b_ir = steering_vector(theta_ir, m, rho)?;
    let b_ti = steering_vector(theta_ti, m, rho)?;
    let v = panel.reflection_vector();
    let mut fwd = Complex64::default();
    let mut back = Complex64::default();
    for i in 0..m {
        fwd += b_ir[i] * v[i] * b_ti[i];
        back += b_ti[i] * v[i] * b_ir[i];
    }
    Ok(fwd * back)
}

const UNIMODULAR_TOL: f64 = 1e-9;

/// Twice-reflected channel as the quadratic form `v^T S v`.
///
/// `v` must be unimodular entrywise (checked to 1e-9).
pub fn nlos_channel_quadratic(v: &DVector<Complex64>, s: &CouplingMatrix) -> Result<Complex64> {
    if v.len() != s.dim() {
        return Err(Error::invalid(format!(
            "reflection vector length {} does not match coupling matrix dimension {}",
            v.len(),
            s.dim()
        )));
    }
    for (i, c) in v.iter().enumerate() {
        if (c.norm() - 1.0).abs() > UNIMODULAR_TOL {
            return Err(Error::invalid(format!(
                "reflection coefficient {i} has modulus {:.12}, expected 1",
                c.norm()
            )));
        }
    }
    Ok(s.quadratic_form(v))
}

/// Scales raw reflectivities so that `|alpha_0 h_los|^2 = gamma` and
/// `sum_k |alpha_k h_nlos_k|^2 = 1`, preserving each entry's phase.
///
/// The LoS and NLoS groups are scaled independently; all propagation
/// magnitude not already in `channels` is absorbed here, since only the
/// products `alpha_k h_k` enter the signal model.
pub fn scale_reflectivities(
    raw_alpha: &[Complex64],
    channels: &ChannelSet,
    gamma: f64,
) -> Result<Vec<Complex64>> {
    let k = channels.nlos_count();
    if raw_alpha.len() != k + 1 {
        return Err(Error::invalid(format!(
            "expected {} reflectivities for {} NLoS paths, got {}",
            k + 1,
            k,
            raw_alpha.len()
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive"));
    }
    if k == 0 {
        return Err(Error::invalid(
            "reflectivity scaling needs at least one NLoS path",
        ));
    }
    let los_mag = raw_alpha[0].norm() * channels.h_los.norm();
    if los_mag == 0.0 {
        return Err(Error::DegenerateChannel(
            "LoS product |alpha_0 h_los| is zero; cannot reach the requested gamma".into(),
        ));
    }
    let mut alpha = Vec::with_capacity(k + 1);
    alpha.push(raw_alpha[0] * (gamma.sqrt() / los_mag));

    let mut nlos_power = 0.0;
    for (a, h) in raw_alpha[1..].iter().zip(&channels.h_nlos) {
        if a.norm() > 0.0 && h.norm() == 0.0 {
            return Err(Error::DegenerateChannel(
                "an NLoS channel coefficient is zero; its path carries no power".into(),
            ));
        }
        nlos_power += (a * h).norm_sqr();
    }
    if nlos_power == 0.0 {
        return Err(Error::DegenerateChannel(
            "total NLoS power is zero; cannot normalize to unity".into(),
        ));
    }
    let scale = 1.0 / nlos_power.sqrt();
    alpha.extend(raw_alpha[1..].iter().map(|a| a * scale));
    Ok(alpha)
}

/// LoS-to-NLoS link strength ratio
/// `|alpha_0 h_los|^2 / sum_k |alpha_k h_nlos_k|^2`.
pub fn lsr(alpha: &[Complex64], channels: &ChannelSet) -> Result<f64> {
    let k = channels.nlos_count();
    if alpha.len() != k + 1 {
        return Err(Error::invalid(format!(
            "expected {} reflectivities, got {}",
            k + 1,
            alpha.len()
        )));
    }
    let num = (alpha[0] * channels.h_los).norm_sqr();
    let den: f64 = alpha[1..]
        .iter()
        .zip(&channels.h_nlos)
        .map(|(a, h)| (a * h).norm_sqr())
        .sum();
    if den == 0.0 {
        return Err(Error::DegenerateChannel(
            "zero NLoS power: link strength ratio undefined".into(),
        ));
    }
    Ok(num / den)
}
