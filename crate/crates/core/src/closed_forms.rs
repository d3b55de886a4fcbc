//! Elementary-function solutions and predictions: the Akhmediev breather,
//! one-mode recurrence parameters, multi-mode appearance estimates and the
//! Fourier-energy laws at the breather peak.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riemann::{Partition, RiemannData};
use crate::spectral::{CauchyData, ModeSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreatherParams {
    pub theta: f64,
    pub x: f64,
    pub t: f64,
}

impl BreatherParams {
    pub fn new(theta: f64, x: f64, t: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < FRAC_PI_2) {
            return Err(Error::InvalidInput(format!(
                "breather angle must lie in (0, pi/2), got {theta}"
            )));
        }
        if !(x.is_finite() && t.is_finite()) {
            return Err(Error::InvalidInput("breather shifts must be finite".into()));
        }
        Ok(Self { theta, x, t })
    }

    pub fn k(&self) -> f64 {
        2.0 * self.theta.cos()
    }

    pub fn sigma(&self) -> f64 {
        2.0 * (2.0 * self.theta).sin()
    }

    pub fn peak(&self) -> f64 {
        1.0 + 2.0 * self.theta.sin()
    }
}

pub fn akhmediev(params: &BreatherParams, x: f64, t: f64) -> Complex64 {
    let th = params.theta;
    let s = params.sigma() * (t - params.t);
    let c = th.sin() * (params.k() * (x - params.x)).cos();
    let num = Complex64::new(s, 2.0 * th).cosh() + c;
    let den = s.cosh() - c;
    Complex64::from_polar(1.0, 2.0 * t) * num / den
}

/// Maps `x` into `(-L/2, L/2]`.
pub fn wrap_position(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    if r > period / 2.0 {
        r - period
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceParams {
    /// 1-based mode number.
    pub mode: usize,
    pub phi: f64,
    pub x1: f64,
    pub t1: f64,
    pub dx: f64,
    pub dt: f64,
    pub phase_step: f64,
    pub xn: f64,
    pub xtilde_n: f64,
}

impl RecurrenceParams {
    /// Position and time of the `m`-th appearance, `m >= 1`.
    pub fn appearance(&self, m: usize, period: f64) -> (f64, f64) {
        let k = (m as f64) - 1.0;
        (
            wrap_position(self.x1 + k * self.dx, period),
            self.t1 + k * self.dt,
        )
    }

    pub fn phase(&self, m: usize) -> f64 {
        2.0 * self.phi + (m as f64 - 1.0) * self.phase_step
    }

    /// Breather-sequence approximant: the appearance nearest to `t`.
    pub fn sequence(&self, period: f64, x: f64, t: f64) -> Complex64 {
        let m = (((t - self.t1) / self.dt).round().max(0.0) as usize) + 1;
        let (xm, tm) = self.appearance(m, period);
        let params = BreatherParams {
            theta: self.phi,
            x: xm,
            t: tm,
        };
        Complex64::from_polar(1.0, self.phase(m)) * akhmediev(&params, x, t)
    }
}

/// One-mode recurrence parameters for the 1-based mode `n`.
pub fn recurrence_params(data: &CauchyData, modes: &ModeSet, n: usize) -> Result<RecurrenceParams> {
    if n == 0 || n > modes.n {
        return Err(Error::InvalidInput(format!(
            "mode {n} is not one of the {} unstable modes",
            modes.n
        )));
    }
    let j = n - 1;
    let (alpha, beta) = (modes.alpha[j], modes.beta[j]);
    let product = (alpha * beta).norm();
    if product == 0.0 {
        return Err(Error::DegenerateGap { mode: n, product });
    }
    let (k, sigma, phi) = (modes.k[j], modes.sigma[j], modes.phi[j]);
    let eps = data.epsilon;
    let xn = (alpha.arg() + FRAC_PI_2) / k;
    Ok(RecurrenceParams {
        mode: n,
        phi,
        x1: xn,
        t1: (sigma * sigma / (2.0 * eps * alpha.norm())).ln() / sigma,
        dx: wrap_position((alpha * beta).arg() / k, data.period),
        dt: 2.0 / sigma * (sigma * sigma / (2.0 * eps * product.sqrt())).ln(),
        phase_step: 4.0 * phi,
        xn,
        xtilde_n: (-beta.arg() + FRAC_PI_2) / k,
    })
}

/// Delay added to the appearance of mode `j` per appearance of mode `k`
/// (0-based indices).
pub fn pairwise_delay(modes: &ModeSet, j: usize, k: usize) -> Result<f64> {
    let (a, b) = (modes.phi[j], modes.phi[k]);
    if j == k || (a - b).sin() == 0.0 {
        return Err(Error::ModeCollision { j: j + 1, k: k + 1 });
    }
    Ok(2.0 / modes.sigma[j] * ((a + b).sin() / (a - b).sin()).abs().ln())
}

/// Appearance counts for an appearance of mode `j` (0-based) at time `t`:
/// nearest integer to `w_k` for `k != j`, `floor(w_j)` for `j`.
pub fn appearance_counts(rd: &RiemannData, j: usize, t: f64) -> Vec<i64> {
    rd.w(t)
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            if k == j {
                w.floor() as i64
            } else {
                w.round_ties_even() as i64
            }
        })
        .collect()
}

/// `(T_max, X_max)` of the appearance of mode `j` (0-based) with the given
/// appearance counts; `X_max` in `(-L/2, L/2]`.
pub fn appearance_estimate(
    data: &CauchyData,
    modes: &ModeSet,
    j: usize,
    counts: &[i64],
) -> Result<(f64, f64)> {
    let rp = recurrence_params(data, modes, j + 1)?;
    let mut t = rp.t1 + counts[j] as f64 * rp.dt;
    for (k, &m) in counts.iter().enumerate() {
        if k != j {
            t += m as f64 * pairwise_delay(modes, j, k)?;
        }
    }
    let x = wrap_position(rp.x1 + counts[j] as f64 * rp.dx, data.period);
    Ok((t, x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    /// 0-based mode index.
    pub mode: usize,
    pub t: f64,
    pub x: f64,
    pub counts: Vec<i64>,
    /// Index of the partition interval the estimate was built from.
    pub interval: usize,
}

/// Estimated appearances of isolated modes: one per partition interval with
/// exactly one visible mode.
pub fn isolated_appearances(
    data: &CauchyData,
    modes: &ModeSet,
    rd: &RiemannData,
    part: &Partition,
) -> Result<Vec<Appearance>> {
    let mut out = Vec::new();
    for (i, iv) in part.intervals.iter().enumerate() {
        if iv.visible.len() != 1 {
            continue;
        }
        let j = *iv.visible.iter().next().expect("one visible mode");
        let counts = appearance_counts(rd, j, 0.5 * (iv.start + iv.end));
        let (t, x) = appearance_estimate(data, modes, j, &counts)?;
        out.push(Appearance {
            mode: j,
            t,
            x,
            counts,
            interval: i,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierLaws {
    /// `|u_0|^2` at the breather peak.
    pub background_at_peak: f64,
    /// `(m, |u_m|^2)` at the peak for `1 <= |m| <= m_max`.
    pub harmonics: Vec<(i64, f64)>,
    /// `|u_0|^2` at the recurrence times.
    pub background_at_recurrence: f64,
    /// `(|u_1|^2, |u_-1|^2)` at the recurrence times.
    pub first_harmonics_at_recurrence: (f64, f64),
}

/// Fourier-energy laws for the 1-based mode `n`; harmonics are multiples
/// of `k_n`.
pub fn fourier_energy_laws(
    data: &CauchyData,
    modes: &ModeSet,
    n: usize,
    m_max: i64,
) -> FourierLaws {
    let phi = modes.phi[n - 1];
    let c2 = 4.0 * phi.cos().powi(2);
    let r = (phi / 2.0).tan().powi(2);
    let harmonics = (-m_max..=m_max)
        .filter(|&m| m != 0)
        .map(|m| (m, c2 * r.powi(m.abs() as i32)))
        .collect();
    let eps2 = data.epsilon * data.epsilon;
    FourierLaws {
        background_at_peak: (2.0 * phi.cos() - 1.0).powi(2),
        harmonics,
        background_at_recurrence: 1.0,
        first_harmonics_at_recurrence: (
            eps2 * data.coeff(n as i64).norm_sqr(),
            eps2 * data.coeff(-(n as i64)).norm_sqr(),
        ),
    }
}

/// `u_xx` at `x` by spectral differentiation of `f` sampled on `points`
/// nodes of one period.
pub fn spectral_second_derivative<F>(f: F, x: f64, period: f64, points: usize) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    let mut buf: Vec<Complex64> = (0..points)
        .map(|i| f(x + period * i as f64 / points as f64))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(points).process(&mut buf);
    let kappa = 2.0 * PI / period;
    // evaluating the inverse transform at node 0 is just the mean of the
    // weighted spectrum
    buf.iter()
        .enumerate()
        .map(|(i, c)| {
            let q = if i <= points / 2 {
                i as f64
            } else {
                i as f64 - points as f64
            };
            let q = if points.is_multiple_of(2) && i == points / 2 {
                0.0
            } else {
                q
            };
            -(q * kappa).powi(2) * c
        })
        .sum::<Complex64>()
        / points as f64
}

/// `u_t` by the 6th-order central difference with step `h`.
pub fn central_time_derivative<F>(f: F, t: f64, h: f64) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    const W: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
    W.iter()
        .enumerate()
        .map(|(i, w)| {
            let s = (i + 1) as f64 * h;
            w * (f(t + s) - f(t - s))
        })
        .sum::<Complex64>()
        / h
}

/// `|i u_t + u_xx + 2 |u|^2 u|` for an `x`-periodic field.
pub fn nls_residual<F>(u: F, x: f64, t: f64, period: f64) -> f64
where
    F: Fn(f64, f64) -> Complex64,
{
    let ut = central_time_derivative(|s| u(x, s), t, 1e-4);
    let uxx = spectral_second_derivative(|y| u(y, t), x, period, 256);
    let v = u(x, t);
    (Complex64::i() * ut + uxx + 2.0 * v.norm_sqr() * v).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::{partition, riemann_matrix};
    use crate::spectral::derive_modes;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn one_mode() -> CauchyData {
        CauchyData::from_pairs(6.0, 1e-4, 30.0, &[(1, c(0.5, 0.0)), (-1, c(0.15, -0.2))]).unwrap()
    }

    fn four_mode() -> CauchyData {
        CauchyData::from_pairs(
            14.0,
            1e-6,
            30.0,
            &[
                (1, c(0.5, 0.0)),
                (-1, c(0.3, 0.3)),
                (2, c(0.5, 0.0)),
                (-2, c(-0.03, 0.03)),
                (3, c(0.3, 0.0)),
                (-3, c(0.2, 0.3)),
                (4, c(0.3, 0.0)),
                (-4, c(-0.3, 0.03)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn breather_peak_and_limits() {
        let p = BreatherParams::new(0.7, 0.3, 2.0).unwrap();
        assert!((akhmediev(&p, 0.3, 2.0).norm() - p.peak()).abs() < 1e-14);
        for (t, sign) in [(40.0, 1.0), (-36.0, -1.0)] {
            let v = akhmediev(&p, 1.1, t) * Complex64::from_polar(1.0, -2.0 * t);
            assert!((v - Complex64::from_polar(1.0, sign * 1.4)).norm() < 1e-12);
        }
        assert!(BreatherParams::new(0.0, 0.0, 0.0).is_err());
        assert!(BreatherParams::new(FRAC_PI_2, 0.0, 0.0).is_err());
    }

    #[test]
    fn breather_symmetries() {
        let p = BreatherParams::new(1.1, -0.4, 0.5).unwrap();
        let lx = 2.0 * PI / p.k();
        for (x, t) in [(0.1, 0.2), (1.7, -0.9), (-2.3, 3.1)] {
            let v = akhmediev(&p, x, t);
            assert!((akhmediev(&p, x + lx, t) - v).norm() < 1e-12);
            assert!((akhmediev(&p, 2.0 * p.x - x, t) - v).norm() < 1e-12);
        }
    }

    #[test]
    fn breather_solves_nls() {
        let p = BreatherParams::new(0.9, 0.2, 1.0).unwrap();
        let period = 2.0 * PI / p.k();
        for (x, t) in [(0.0, 1.0), (0.7, 0.3), (-1.4, 2.2)] {
            let r = nls_residual(|x, t| akhmediev(&p, x, t), x, t, period);
            assert!(r < 1e-6, "residual {r} at ({x}, {t})");
        }
    }

    #[test]
    fn one_mode_recurrence_parameters() {
        let data = one_mode();
        let modes = derive_modes(&data).unwrap();
        let rp = recurrence_params(&data, &modes, 1).unwrap();
        assert!((rp.t1 - 5.870759).abs() < 1e-5);
        assert!((rp.dt - 11.456198).abs() < 1e-5);
        assert!(rp.dx > -3.0 && rp.dx <= 3.0);
        assert!((rp.phase_step - 4.0 * modes.phi[0]).abs() < 1e-15);
        let (x2, t2) = rp.appearance(2, data.period);
        assert!((t2 - rp.t1 - rp.dt).abs() < 1e-12);
        assert!((wrap_position(x2 - rp.x1 - rp.dx, 6.0)).abs() < 1e-12);
    }

    #[test]
    fn recurrence_epsilon_law_and_balanced_gap() {
        let data = one_mode();
        let modes = derive_modes(&data).unwrap();
        let mut small = data.clone();
        small.epsilon /= 10.0;
        let a = recurrence_params(&data, &modes, 1).unwrap();
        let b = recurrence_params(&small, &modes, 1).unwrap();
        assert!((b.t1 - a.t1 - 10f64.ln() / modes.sigma[0]).abs() < 1e-12);

        let j = 0;
        let gap = a.dt - 2.0 * a.t1;
        let expected = 2.0 / modes.sigma[j]
            * (modes.alpha[j].norm() / (modes.alpha[j] * modes.beta[j]).norm().sqrt()).ln();
        assert!((gap - expected).abs() < 1e-12);

        // c_-1 = 0 gives |alpha| = |beta|
        let sym = CauchyData::from_pairs(6.0, 1e-4, 30.0, &[(1, c(0.5, 0.0))]).unwrap();
        let sm = derive_modes(&sym).unwrap();
        let rp = recurrence_params(&sym, &sm, 1).unwrap();
        assert!((rp.dt - 2.0 * rp.t1).abs() < 1e-12);
    }

    #[test]
    fn sequence_is_quasi_periodic_in_modulus() {
        let data = one_mode();
        let modes = derive_modes(&data).unwrap();
        let rp = recurrence_params(&data, &modes, 1).unwrap();
        for (x, t) in [(0.3, 7.0), (-2.0, 9.5), (1.0, 14.0)] {
            let a = rp.sequence(6.0, x, t).norm();
            let b = rp.sequence(6.0, x + rp.dx, t + rp.dt).norm();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn delays_are_positive() {
        let data = four_mode();
        let modes = derive_modes(&data).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                if j != k {
                    assert!(pairwise_delay(&modes, j, k).unwrap() > 0.0);
                }
            }
        }
        assert!(matches!(
            pairwise_delay(&modes, 1, 1),
            Err(Error::ModeCollision { j: 2, k: 2 })
        ));
    }

    #[test]
    fn estimate_with_zero_counts_is_first_appearance() {
        let data = four_mode();
        let modes = derive_modes(&data).unwrap();
        let rp = recurrence_params(&data, &modes, 2).unwrap();
        let (t, x) = appearance_estimate(&data, &modes, 1, &[0, 0, 0, 0]).unwrap();
        assert_eq!(t, rp.t1);
        assert!((x - wrap_position(rp.x1, 14.0)).abs() < 1e-15);
    }

    #[test]
    fn four_mode_center_peak_estimate() {
        let data = four_mode();
        let modes = derive_modes(&data).unwrap();
        let rd = riemann_matrix(&modes, data.epsilon).unwrap();
        let part = partition(&rd, data.horizon, data.p).unwrap();
        let schedule = isolated_appearances(&data, &modes, &rd, &part).unwrap();
        let hit = schedule
            .iter()
            .find(|a| a.mode == 0 && (a.t - 18.76901).abs() < 1e-3)
            .unwrap_or_else(|| panic!("no mode-1 appearance near 18.769 in {schedule:?}"));
        assert!((hit.t - 18.76901).abs() < 1e-4, "{}", hit.t);
        assert!((hit.x - 0.8443).abs() < 1e-3, "{}", hit.x);
    }

    #[test]
    fn single_mode_schedule_is_a_lattice() {
        let data = one_mode();
        let modes = derive_modes(&data).unwrap();
        let rd = riemann_matrix(&modes, data.epsilon).unwrap();
        let part = partition(&rd, data.horizon, data.p).unwrap();
        let rp = recurrence_params(&data, &modes, 1).unwrap();
        let schedule = isolated_appearances(&data, &modes, &rd, &part).unwrap();
        assert!(schedule.len() >= 2);
        for (m, a) in schedule.iter().enumerate() {
            assert!((a.t - rp.t1 - m as f64 * rp.dt).abs() < 1e-10);
        }
    }

    #[test]
    fn fourier_laws_sum_to_mass_and_match_breather() {
        let data = one_mode();
        let modes = derive_modes(&data).unwrap();
        let laws = fourier_energy_laws(&data, &modes, 1, 60);
        let total: f64 = laws.background_at_peak + laws.harmonics.iter().map(|h| h.1).sum::<f64>();
        assert!((total - 1.0).abs() < 1e-12);

        let phi = modes.phi[0];
        let p = BreatherParams::new(phi, 0.0, 0.0).unwrap();
        let period = 2.0 * PI / p.k();
        let n = 256;
        let mut buf: Vec<Complex64> = (0..n)
            .map(|i| akhmediev(&p, period * i as f64 / n as f64, 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let energy = |m: i64| (buf[m.rem_euclid(n as i64) as usize] / n as f64).norm_sqr();
        assert!((energy(0) - laws.background_at_peak).abs() < 1e-8);
        for &(m, e) in laws.harmonics.iter().filter(|h| h.0.abs() <= 5) {
            assert!((energy(m) - e).abs() < 1e-8, "m = {m}");
        }
    }

    #[test]
    fn fourier_laws_small_angle_limit() {
        // phi -> 0 corresponds to L just above pi, where the law tends to the background
        let data = CauchyData::from_pairs(PI + 1e-6, 1e-4, 10.0, &[(1, c(0.5, 0.0))]).unwrap();
        let modes = derive_modes(&data).unwrap();
        let laws = fourier_energy_laws(&data, &modes, 1, 3);
        assert!((laws.background_at_peak - 1.0).abs() < 1e-2);
        assert!(laws.harmonics.iter().all(|h| h.1 < 1e-2));
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_position(3.0, 6.0), 3.0);
        assert_eq!(wrap_position(-3.0, 6.0), 3.0);
        assert!((wrap_position(7.5, 6.0) - 1.5).abs() < 1e-15);
    }
}
