//! Cauchy data of the periodic anomalous-wave problem and the elementary
//! spectral quantities derived from it.
//!
//! The initial condition is `u(x, 0) = 1 + eps * v(x)` with
//! `v(x) = sum_j c_j exp(i k_j x)`, `k_j = 2 pi j / L`, `c_0 = 0`.
//! Modes with `1 <= |j| <= N = floor(L / pi)` are linearly unstable; every
//! quantity in [`ModeSet`] refers to those modes only.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound on `|alpha_j beta_j|`.
pub const DEFAULT_GAP_FLOOR: f64 = 1e-30;

/// Tolerance on the distance of `L / pi` to the nearest integer.
pub const GENERICITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyData {
    /// Spatial period `L`.
    pub period: f64,
    pub epsilon: f64,
    /// Fourier coefficients `c_j` keyed by the signed mode number `j != 0`.
    pub coeffs: BTreeMap<i64, Complex64>,
    /// Horizon `T0` of the time partition.
    pub horizon: f64,
    /// Accuracy exponent `p` of the visibility rule.
    pub p: f64,
}

impl CauchyData {
    pub fn new(
        period: f64,
        epsilon: f64,
        coeffs: BTreeMap<i64, Complex64>,
        horizon: f64,
        p: f64,
    ) -> Result<Self> {
        let data = Self {
            period,
            epsilon,
            coeffs,
            horizon,
            p,
        };
        data.validate()?;
        Ok(data)
    }

    /// Builds data from `(j, c_j)` pairs with the default `p = 1/2`.
    pub fn from_pairs(
        period: f64,
        epsilon: f64,
        horizon: f64,
        pairs: &[(i64, Complex64)],
    ) -> Result<Self> {
        Self::new(
            period,
            epsilon,
            pairs.iter().copied().collect(),
            horizon,
            0.5,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::InvalidInput(format!(
                "period must be positive, got {}",
                self.period
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "accuracy exponent p must lie in (0, 1], got {}",
                self.p
            )));
        }
        let ratio = self.period / PI;
        if (ratio - ratio.round()).abs() < GENERICITY_TOLERANCE {
            return Err(Error::GenericityViolation {
                period: self.period,
                ratio,
            });
        }
        if self.coeffs.contains_key(&0) {
            return Err(Error::InvalidInput(
                "the perturbation must have zero average (c_0 is not allowed)".into(),
            ));
        }
        if let Some((j, c)) = self
            .coeffs
            .iter()
            .find(|(_, c)| !(c.re.is_finite() && c.im.is_finite()))
        {
            return Err(Error::InvalidInput(format!(
                "coefficient c_{j} = {c} is not finite"
            )));
        }
        let n = self.unstable_count() as i64;
        let excited = self
            .coeffs
            .iter()
            .any(|(&j, c)| j.abs() >= 1 && j.abs() <= n && c.norm() > 0.0);
        if !excited {
            return Err(Error::InvalidInput(format!(
                "no unstable mode is excited: need a nonzero c_j with 1 <= |j| <= {n}"
            )));
        }
        Ok(())
    }

    /// `N = floor(L / pi)`.
    pub fn unstable_count(&self) -> usize {
        (self.period / PI).floor() as usize
    }

    pub fn coeff(&self, j: i64) -> Complex64 {
        self.coeffs.get(&j).copied().unwrap_or_default()
    }

    pub fn wavenumber(&self, j: i64) -> f64 {
        2.0 * PI * j as f64 / self.period
    }

    /// The zero-average perturbation `v(x)`.
    pub fn perturbation(&self, x: f64) -> Complex64 {
        self.coeffs
            .iter()
            .map(|(&j, &c)| c * Complex64::from_polar(1.0, self.wavenumber(j) * x))
            .sum()
    }

    pub fn initial_value(&self, x: f64) -> Complex64 {
        Complex64::new(1.0, 0.0) + self.epsilon * self.perturbation(x)
    }
}

/// Per-mode quantities of the `N` unstable modes and their `2N` hatted
/// extensions. Vectors are indexed from zero: entry `j` is mode `j + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub n: usize,
    pub k: Vec<f64>,
    pub sigma: Vec<f64>,
    pub phi: Vec<f64>,
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
    pub hat_phi: Vec<f64>,
    pub hat_alpha: Vec<Complex64>,
    pub hat_beta: Vec<Complex64>,
    /// Square roots of `hat_alpha * hat_beta`, `Re >= 0` for the first `N`
    /// entries and complex conjugates of those for the last `N`.
    pub sqrt_ab: Vec<Complex64>,
}

impl ModeSet {
    /// `chi_j = log sqrt|alpha_j / beta_j|`.
    pub fn chi(&self, j: usize) -> f64 {
        0.5 * (self.alpha[j].norm() / self.beta[j].norm()).ln()
    }

    /// 1-based mode number of the `j`-th entry of a `2N` hatted vector.
    pub fn mode_of(&self, hatted: usize) -> usize {
        hatted % self.n + 1
    }
}

/// Square root with `Re >= 0`; on the imaginary axis the root with `Im >= 0`.
pub fn sqrt_right_half(z: Complex64) -> Complex64 {
    let s = z.sqrt();
    if s.re < 0.0 || (s.re == 0.0 && s.im < 0.0) {
        -s
    } else {
        s
    }
}

pub fn derive_modes(data: &CauchyData) -> Result<ModeSet> {
    derive_modes_with_floor(data, DEFAULT_GAP_FLOOR)
}

pub fn derive_modes_with_floor(data: &CauchyData, gap_floor: f64) -> Result<ModeSet> {
    data.validate()?;
    let n = data.unstable_count();
    let mut set = ModeSet {
        n,
        k: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        phi: Vec::with_capacity(n),
        alpha: Vec::with_capacity(n),
        beta: Vec::with_capacity(n),
        hat_phi: vec![0.0; 2 * n],
        hat_alpha: vec![Complex64::default(); 2 * n],
        hat_beta: vec![Complex64::default(); 2 * n],
        sqrt_ab: vec![Complex64::default(); 2 * n],
    };
    for j in 1..=n {
        let phi = (PI * j as f64 / data.period).acos();
        let rot = Complex64::from_polar(1.0, phi);
        let cp = data.coeff(j as i64);
        let cm = data.coeff(-(j as i64));
        let alpha = rot.conj() * cp.conj() - rot * cm;
        let beta = rot * cm.conj() - rot.conj() * cp;
        let product = (alpha * beta).norm();
        if !(product >= gap_floor) {
            return Err(Error::DegenerateGap { mode: j, product });
        }
        set.k.push(2.0 * phi.cos());
        set.sigma.push(2.0 * (2.0 * phi).sin());
        set.phi.push(phi);
        set.alpha.push(alpha);
        set.beta.push(beta);
    }
    for j in 0..n {
        let root = sqrt_right_half(set.alpha[j] * set.beta[j]);
        set.hat_phi[j] = set.phi[j];
        set.hat_phi[j + n] = -set.phi[j];
        set.hat_alpha[j] = set.alpha[j];
        set.hat_alpha[j + n] = set.beta[j].conj();
        set.hat_beta[j] = set.beta[j];
        set.hat_beta[j + n] = set.alpha[j].conj();
        set.sqrt_ab[j] = root;
        set.sqrt_ab[j + n] = root.conj();
    }
    Ok(set)
}

/// Leading-order branch points and divisor of one unstable resonant point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapDiagnostics {
    /// Unperturbed resonant point `lambda_n = i sin(phi_n)`.
    pub lambda: Complex64,
    /// `mu_n = pi n / L = cos(phi_n)`.
    pub mu: f64,
    /// `(E_{2n-1}, E_{2n})` near `lambda_n`.
    pub branch_points: (Complex64, Complex64),
    /// `(E~_{2n-1}, E~_{2n})` near `-lambda_n`.
    pub mirrored_branch_points: (Complex64, Complex64),
    pub alpha_tilde: Complex64,
    pub beta_tilde: Complex64,
    /// `lambda(gamma_n)` and `p(gamma_n)`.
    pub divisor_upper: (Complex64, Complex64),
    /// `lambda(gamma_{-n})` and `p(gamma_{-n})`.
    pub divisor_lower: (Complex64, Complex64),
}

impl GapDiagnostics {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.branch_points.1 - self.branch_points.0).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDiagnostics {
    pub gaps: Vec<GapDiagnostics>,
}

pub fn perturbed_spectrum(data: &CauchyData, modes: &ModeSet) -> Result<SpectralDiagnostics> {
    let eps = data.epsilon;
    let i = Complex64::i();
    let mut gaps = Vec::with_capacity(modes.n);
    for j in 0..modes.n {
        let (alpha, beta) = (modes.alpha[j], modes.beta[j]);
        if (alpha * beta).norm() == 0.0 {
            return Err(Error::DegenerateGap {
                mode: j + 1,
                product: 0.0,
            });
        }
        let phi = modes.phi[j];
        let mu = phi.cos();
        let lambda = i * phi.sin();
        let plus = mu + lambda;
        let minus = mu - lambda;
        let cp = data.coeff(j as i64 + 1);
        let cm = data.coeff(-(j as i64 + 1));
        let alpha_tilde = plus * cp.conj() - minus * cm;
        let beta_tilde = minus * cm.conj() - plus * cp;

        let split = eps / (2.0 * lambda) * modes.sqrt_ab[j];
        let split_tilde = eps / (2.0 * lambda) * sqrt_right_half(alpha_tilde * beta_tilde);

        let divisor_upper = (
            lambda + eps / (4.0 * lambda) * (plus * alpha + minus * beta),
            eps / (4.0 * mu) * (plus * alpha - minus * beta),
        );
        let divisor_lower = (
            -lambda - eps / (4.0 * lambda) * (minus * alpha_tilde + plus * beta_tilde),
            eps / (4.0 * mu) * (minus * alpha_tilde - plus * beta_tilde),
        );
        gaps.push(GapDiagnostics {
            lambda,
            mu,
            branch_points: (lambda - split, lambda + split),
            mirrored_branch_points: (-lambda + split_tilde, -lambda - split_tilde),
            alpha_tilde,
            beta_tilde,
            divisor_upper,
            divisor_lower,
        });
    }
    Ok(SpectralDiagnostics { gaps })
}

/// O(eps)-accurate field during the first linear stage of modulation
/// instability. Stable-mode oscillations are not included.
pub fn linear_stage(data: &CauchyData, modes: &ModeSet, x: f64, t: f64) -> Complex64 {
    let eps = data.epsilon;
    let mut bracket = Complex64::new(1.0, 0.0);
    for j in 0..modes.n {
        let (k, phi, sigma) = (modes.k[j], modes.phi[j], modes.sigma[j]);
        let (alpha, beta) = (modes.alpha[j], modes.beta[j]);
        let s2 = (2.0 * phi).sin();
        let x_grow = (alpha.arg() + FRAC_PI_2) / k;
        let x_decay = (-beta.arg() + FRAC_PI_2) / k;
        bracket += eps * alpha.norm() / s2
            * Complex64::from_polar((sigma * t).exp(), phi)
            * (k * (x - x_grow)).cos();
        bracket += eps * beta.norm() / s2
            * Complex64::from_polar((-sigma * t).exp(), -phi)
            * (k * (x - x_decay)).cos();
    }
    Complex64::from_polar(1.0, 2.0 * t) * bracket
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_mode() -> CauchyData {
        CauchyData::from_pairs(
            6.0,
            1e-4,
            30.0,
            &[
                (1, Complex64::new(0.5, 0.0)),
                (-1, Complex64::new(0.15, -0.2)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn mode_counts_match_fixture_periods() {
        let one = |l: f64| {
            CauchyData::from_pairs(l, 1e-6, 30.0, &[(1, Complex64::new(0.5, 0.0))])
                .unwrap()
                .unstable_count()
        };
        assert_eq!(one(6.0), 1);
        assert_eq!(one(10.0), 3);
        assert_eq!(one(14.0), 4);
        assert_eq!(one(20.0), 6);
        let modes = derive_modes(&one_mode()).unwrap();
        assert_eq!(modes.n, 1);
        assert!((modes.k[0] - 2.0 * PI / 6.0).abs() < 1e-15);
    }

    #[test]
    fn one_mode_alpha_and_angles() {
        let modes = derive_modes(&one_mode()).unwrap();
        let phi = (PI / 6.0).acos();
        assert!((modes.phi[0] - phi).abs() < 1e-15);
        assert!((modes.sigma[0] - 2.0 * (2.0 * phi).sin()).abs() < 1e-15);
        // alpha_1 = e^{-i phi} conj(c_1) - e^{i phi} c_{-1}; both terms written out by hand.
        let (c, s) = (phi.cos(), phi.sin());
        let expected = Complex64::new(0.5 * c, -0.5 * s)
            - Complex64::new(0.15 * c + 0.2 * s, 0.15 * s - 0.2 * c);
        assert!((modes.alpha[0] - expected).norm() < 1e-15);
    }

    #[test]
    fn resonant_period_is_rejected() {
        let err = CauchyData::from_pairs(2.0 * PI, 1e-4, 10.0, &[(1, Complex64::new(1.0, 0.0))])
            .unwrap_err();
        assert!(matches!(err, Error::GenericityViolation { .. }));
    }

    #[test]
    fn zero_mode_and_unexcited_data_are_rejected() {
        let zero = CauchyData::from_pairs(6.0, 1e-4, 10.0, &[(0, Complex64::new(1.0, 0.0))]);
        assert!(matches!(zero, Err(Error::InvalidInput(_))));
        // only a stable mode: nothing to grow
        let stable = CauchyData::from_pairs(6.0, 1e-4, 10.0, &[(3, Complex64::new(1.0, 0.0))]);
        assert!(matches!(stable, Err(Error::InvalidInput(_))));
        let bad_eps = CauchyData::from_pairs(6.0, 0.0, 10.0, &[(1, Complex64::new(1.0, 0.0))]);
        assert!(matches!(bad_eps, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn unexcited_unstable_mode_is_a_degenerate_gap() {
        // N = 2 with only the second mode excited
        let data =
            CauchyData::from_pairs(7.0, 1e-4, 10.0, &[(2, Complex64::new(0.5, 0.1))]).unwrap();
        assert!(matches!(
            derive_modes(&data),
            Err(Error::DegenerateGap { mode: 1, .. })
        ));
    }

    #[test]
    fn sqrt_branch_convention() {
        assert_eq!(
            sqrt_right_half(Complex64::new(-4.0, 0.0)),
            Complex64::new(0.0, 2.0)
        );
        assert_eq!(
            sqrt_right_half(Complex64::new(-4.0, -0.0)),
            Complex64::new(0.0, 2.0)
        );
        let s = sqrt_right_half(Complex64::new(-3.0, -1e-3));
        assert!(s.re >= 0.0);
    }

    #[test]
    fn closed_gap_at_zero_epsilon() {
        let mut data = one_mode();
        let modes = derive_modes(&data).unwrap();
        data.epsilon = 0.0;
        let diag = perturbed_spectrum(&data, &modes).unwrap();
        let gap = &diag.gaps[0];
        assert_eq!(gap.branch_points.0, gap.lambda);
        assert_eq!(gap.branch_points.1, gap.lambda);
    }

    #[test]
    fn mirrored_branch_points_are_conjugates() {
        let data = one_mode();
        let modes = derive_modes(&data).unwrap();
        let diag = perturbed_spectrum(&data, &modes).unwrap();
        let gap = &diag.gaps[0];
        assert!((gap.mirrored_branch_points.0 - gap.branch_points.0.conj()).norm() < 1e-18);
        assert!((gap.mirrored_branch_points.1 - gap.branch_points.1.conj()).norm() < 1e-18);
        let mid = 0.5 * (gap.branch_points.0 + gap.branch_points.1);
        assert!((mid - gap.lambda).norm() < 1e-18);
    }

    /// Gap width against the eigenvalue splitting of the degenerate 2x2
    /// block of the perturbation in the `psi^+_{+-n}` basis.
    #[test]
    fn gap_width_matches_degenerate_perturbation_block() {
        let data = one_mode();
        let modes = derive_modes(&data).unwrap();
        let diag = perturbed_spectrum(&data, &modes).unwrap();
        let mu = PI / data.period;
        let lam = Complex64::new(mu * mu - 1.0, 0.0).sqrt();
        let (cp, cm) = (data.coeff(1), data.coeff(-1));
        let m12 = (cp * (lam - mu).powi(2) - cm.conj()) / (2.0 * lam);
        let m21 = (cm * (lam + mu).powi(2) - cp.conj()) / (2.0 * lam);
        // zero diagonal: eigenvalues are +- sqrt(m12 m21)
        let split = (m12 * m21).sqrt().norm() * data.epsilon;
        let expected = data.epsilon / (2.0 * diag.gaps[0].lambda.norm()) * modes.sqrt_ab[0].norm();
        assert!((split - expected).abs() < 1e-12 * expected);
        assert!((diag.gaps[0].half_width() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn linear_stage_background_and_initial_data() {
        let mut data = one_mode();
        let modes = derive_modes(&data).unwrap();
        let x = 0.37;
        data.epsilon = 0.0;
        let t = 1.3;
        assert_eq!(
            linear_stage(&data, &modes, x, t),
            Complex64::from_polar(1.0, 2.0 * t)
        );

        let data = one_mode();
        let worst = (0..256)
            .map(|m| -3.0 + 6.0 * m as f64 / 256.0)
            .map(|x| (linear_stage(&data, &modes, x, 0.0) - data.initial_value(x)).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-14, "t = 0 mismatch {worst}");
    }

    #[test]
    fn linear_stage_drops_stable_modes() {
        let data = CauchyData::from_pairs(
            6.0,
            1e-4,
            30.0,
            &[(1, Complex64::new(0.5, 0.0)), (2, Complex64::new(0.4, 0.0))],
        )
        .unwrap();
        let modes = derive_modes(&data).unwrap();
        let gap = (linear_stage(&data, &modes, 0.0, 0.0) - data.initial_value(0.0)).norm();
        assert!((gap - 0.4e-4).abs() < 1e-12);
    }
}
