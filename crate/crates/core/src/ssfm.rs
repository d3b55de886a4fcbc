//! Split-step Fourier integrator for the periodic focusing NLS Cauchy problem,
//! sampled field grids, conserved quantities and peak extraction.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::closed_forms::wrap_position;
use crate::error::{Error, Result};
use crate::spectral::CauchyData;

/// `max |u|` above which the integration is declared unstable.
pub const BLOWUP_LIMIT: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Second-order Strang splitting.
    #[default]
    Strang,
    /// Fourth-order Yoshida composition of Strang steps.
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n_x: usize,
    pub dt: f64,
    pub scheme: Scheme,
    pub t_samples: Vec<f64>,
    /// Left end of the grid; `-L/2` when absent.
    pub x0: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_x: 1024,
            dt: 1e-4,
            scheme: Scheme::Strang,
            t_samples: Vec::new(),
            x0: None,
        }
    }
}

impl SolverConfig {
    pub fn with_samples(mut self, t_samples: Vec<f64>) -> Self {
        self.t_samples = t_samples;
        self
    }

    pub fn validate(&self, highest_mode: u64) -> Result<()> {
        if !self.n_x.is_power_of_two() || self.n_x < 4 {
            return Err(Error::InvalidInput(format!(
                "n_x must be a power of two >= 4, got {}",
                self.n_x
            )));
        }
        if (self.n_x as u64) < 4 * highest_mode {
            return Err(Error::InvalidInput(format!(
                "n_x = {} does not resolve mode {highest_mode} (need at least {})",
                self.n_x,
                4 * highest_mode
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.t_samples.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidInput(
                "sample times must be finite and >= 0".into(),
            ));
        }
        if self.t_samples.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("sample times must be sorted".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub source: String,
    pub n_x: usize,
    pub dt: Option<f64>,
    pub scheme: Option<Scheme>,
    pub steps: u64,
    /// `(1/L) int |u|^2` per sample.
    pub mass: Vec<f64>,
    /// `(1/L) int |u_x|^2 - |u|^4` per sample.
    pub energy: Vec<f64>,
}

/// Samples `u(x_i, t_k)` stored row-major, one row per time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub period: f64,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub u: Vec<Complex64>,
    pub meta: GridMeta,
}

impl FieldGrid {
    pub fn from_fn<F>(period: f64, x: Vec<f64>, t: Vec<f64>, source: &str, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Result<Complex64> + Sync,
    {
        let rows: Result<Vec<Vec<Complex64>>> = t
            .par_iter()
            .map(|&tk| x.iter().map(|&xi| f(xi, tk)).collect())
            .collect();
        let u = rows?.into_iter().flatten().collect();
        Ok(Self {
            period,
            meta: GridMeta {
                source: source.into(),
                n_x: x.len(),
                ..GridMeta::default()
            },
            x,
            t,
            u,
        })
    }

    pub fn row(&self, k: usize) -> &[Complex64] {
        let n = self.x.len();
        &self.u[k * n..(k + 1) * n]
    }

    pub fn at(&self, k: usize, i: usize) -> Complex64 {
        self.u[k * self.x.len() + i]
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Uniform grid `x0 + i L / n`.
pub fn uniform_x(period: f64, n: usize, x0: f64) -> Vec<f64> {
    (0..n).map(|i| x0 + period * i as f64 / n as f64).collect()
}

struct Stepper {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    k2: Vec<f64>,
}

impl Stepper {
    fn new(n: usize, period: f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let kappa = 2.0 * PI / period;
        let k2 = (0..n)
            .map(|i| {
                let q = if i <= n / 2 {
                    i as f64
                } else {
                    i as f64 - n as f64
                };
                (q * kappa).powi(2)
            })
            .collect();
        Self {
            n,
            forward,
            inverse,
            scratch: vec![Complex64::default(); len],
            k2,
        }
    }

    fn linear_factors(&self, h: f64) -> Vec<Complex64> {
        let norm = 1.0 / self.n as f64;
        self.k2
            .iter()
            .map(|k2| Complex64::from_polar(norm, -k2 * h))
            .collect()
    }

    fn linear(&mut self, u: &mut [Complex64], factors: &[Complex64]) {
        self.forward.process_with_scratch(u, &mut self.scratch);
        u.iter_mut().zip(factors).for_each(|(v, f)| *v *= f);
        self.inverse.process_with_scratch(u, &mut self.scratch);
    }

    /// Returns `max |u|^2` before the rotation.
    fn nonlinear(u: &mut [Complex64], h: f64) -> f64 {
        let mut peak = 0.0f64;
        for v in u.iter_mut() {
            let a = v.norm_sqr();
            peak = peak.max(a);
            *v *= Complex64::from_polar(1.0, 2.0 * a * h);
        }
        peak
    }

    /// `steps` Strang steps of size `h`; adjacent nonlinear half steps are
    /// merged.
    fn strang(&mut self, u: &mut [Complex64], steps: u64, h: f64, factors: &[Complex64]) -> f64 {
        let mut peak = Self::nonlinear(u, 0.5 * h);
        for s in 0..steps {
            self.linear(u, factors);
            let last = s + 1 == steps;
            peak = peak.max(Self::nonlinear(u, if last { 0.5 * h } else { h }));
        }
        peak
    }
}

fn check_field(u: &[Complex64], peak_sq: f64, t: f64) -> Result<()> {
    if !peak_sq.is_finite() || u.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::NonfiniteField { t });
    }
    if peak_sq > BLOWUP_LIMIT * BLOWUP_LIMIT {
        return Err(Error::BlowupDetected {
            t,
            max_abs: peak_sq.sqrt(),
        });
    }
    Ok(())
}

/// Integrates from the Cauchy data of `data` and samples at `cfg.t_samples`.
pub fn evolve(data: &CauchyData, cfg: &SolverConfig) -> Result<FieldGrid> {
    data.validate()?;
    let highest = data
        .coeffs
        .keys()
        .map(|j| j.unsigned_abs())
        .max()
        .unwrap_or(0);
    cfg.validate(highest)?;
    let x = uniform_x(data.period, cfg.n_x, cfg.x0.unwrap_or(-data.period / 2.0));
    let u0 = x.iter().map(|&xi| data.initial_value(xi)).collect();
    evolve_from(u0, data.period, cfg)
}

/// Integrates an arbitrary initial field given on the grid of `cfg`.
pub fn evolve_from(u0: Vec<Complex64>, period: f64, cfg: &SolverConfig) -> Result<FieldGrid> {
    cfg.validate(0)?;
    if u0.len() != cfg.n_x {
        return Err(Error::InvalidInput(format!(
            "initial field has {} points, expected {}",
            u0.len(),
            cfg.n_x
        )));
    }
    let n = cfg.n_x;
    let x = uniform_x(period, n, cfg.x0.unwrap_or(-period / 2.0));
    let mut stepper = Stepper::new(n, period);
    let dt = cfg.dt;

    // Yoshida triple-jump weights
    let cbrt2 = 2f64.cbrt();
    let w1 = 1.0 / (2.0 - cbrt2);
    let w0 = -cbrt2 / (2.0 - cbrt2);
    let factors = match cfg.scheme {
        Scheme::Strang => vec![stepper.linear_factors(dt)],
        Scheme::Refined => vec![
            stepper.linear_factors(w1 * dt),
            stepper.linear_factors(w0 * dt),
        ],
    };

    let mut u = u0;
    check_field(&u, u.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max), 0.0)?;
    let mut current = 0u64;
    let mut times = Vec::with_capacity(cfg.t_samples.len());
    let mut samples = Vec::with_capacity(cfg.t_samples.len() * n);
    let mut mass = Vec::new();
    let mut energy = Vec::new();
    for &ts in &cfg.t_samples {
        let target = (ts / dt).round() as u64;
        while current < target {
            let chunk = (target - current).min(1000);
            let peak = match cfg.scheme {
                Scheme::Strang => stepper.strang(&mut u, chunk, dt, &factors[0]),
                Scheme::Refined => {
                    let mut peak = 0.0f64;
                    for _ in 0..chunk {
                        peak = peak.max(stepper.strang(&mut u, 1, w1 * dt, &factors[0]));
                        peak = peak.max(stepper.strang(&mut u, 1, w0 * dt, &factors[1]));
                        peak = peak.max(stepper.strang(&mut u, 1, w1 * dt, &factors[0]));
                    }
                    peak
                }
            };
            current += chunk;
            check_field(&u, peak, current as f64 * dt)?;
        }
        times.push(current as f64 * dt);
        let (m, e) = invariants(&u, period);
        mass.push(m);
        energy.push(e);
        samples.extend_from_slice(&u);
    }
    Ok(FieldGrid {
        period,
        x,
        t: times,
        u: samples,
        meta: GridMeta {
            source: "ssfm".into(),
            n_x: n,
            dt: Some(dt),
            scheme: Some(cfg.scheme),
            steps: current,
            mass,
            energy,
        },
    })
}

fn invariants(u: &[Complex64], period: f64) -> (f64, f64) {
    let n = u.len();
    let mass = u.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
    let quartic = u.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() / n as f64;
    let spectrum = spectrum(u);
    let kappa = 2.0 * PI / period;
    // Parseval on the normalized spectrum
    let gradient: f64 = spectrum
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let q = if i <= n / 2 {
                i as f64
            } else {
                i as f64 - n as f64
            };
            (q * kappa).powi(2) * c.norm_sqr()
        })
        .sum();
    (mass, gradient - quartic)
}

/// Normalized discrete Fourier coefficients `(1/n) sum u_i exp(-2 pi i q i / n)`.
fn spectrum(u: &[Complex64]) -> Vec<Complex64> {
    let n = u.len();
    let mut buf = u.to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter_mut().for_each(|v| *v /= n as f64);
    buf
}

/// `(mass, energy)` of the sample at `t_index`.
pub fn conserved(grid: &FieldGrid, t_index: usize) -> (f64, f64) {
    invariants(grid.row(t_index), grid.period)
}

/// `|u_q|^2` for `|q| <= q_max`, where `u_q` is the coefficient of
/// `exp(2 pi i q x / L)`. Requires a uniform grid over one period.
pub fn fourier_energies(grid: &FieldGrid, t_index: usize, q_max: i64) -> Vec<(i64, f64)> {
    let s = spectrum(grid.row(t_index));
    let n = s.len() as i64;
    (-q_max..=q_max)
        .map(|q| (q, s[q.rem_euclid(n) as usize].norm_sqr()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub x: f64,
    pub t: f64,
    pub amplitude: f64,
}

/// Local maxima of `|u|` above `threshold`, refined by a least-squares
/// biquadratic on the 3x3 stencil. `x` is treated as periodic; maxima on the
/// first or last time row are skipped. Sorted by time.
pub fn extract_peaks(grid: &FieldGrid, threshold: f64) -> Vec<Peak> {
    let (nx, nt) = (grid.x.len(), grid.t.len());
    if nx < 3 || nt < 3 {
        return Vec::new();
    }
    let a = |k: usize, i: usize| grid.at(k, i).norm();
    let hx = grid.x[1] - grid.x[0];
    let mut peaks = Vec::new();
    for k in 1..nt - 1 {
        for i in 0..nx {
            let v = a(k, i);
            if v <= threshold {
                continue;
            }
            let mut stencil = [[0.0; 3]; 3];
            let mut is_max = true;
            for (dk, row) in stencil.iter_mut().enumerate() {
                for (di, cell) in row.iter_mut().enumerate() {
                    let kk = k + dk - 1;
                    let ii = (i + nx + di - 1) % nx;
                    *cell = a(kk, ii);
                    if (dk, di) != (1, 1) {
                        // ties are assigned to the later neighbour
                        let later = (dk, di) > (1, 1);
                        if *cell > v || (later && *cell == v) {
                            is_max = false;
                        }
                    }
                }
            }
            if !is_max {
                continue;
            }
            let (dx, dt, amp) = refine(&stencil);
            let ht = if dt >= 0.0 {
                grid.t[k + 1] - grid.t[k]
            } else {
                grid.t[k] - grid.t[k - 1]
            };
            peaks.push(Peak {
                x: wrap_position(grid.x[i] + dx * hx, grid.period),
                t: grid.t[k] + dt * ht,
                amplitude: amp,
            });
        }
    }
    peaks.sort_by(|p, q| p.t.total_cmp(&q.t));
    peaks
}

/// Stationary point of the least-squares quadratic through a 3x3 stencil
/// indexed `[t][x]`, in units of the grid spacing.
fn refine(s: &[[f64; 3]; 3]) -> (f64, f64, f64) {
    let f = |dt: i32, dx: i32| s[(dt + 1) as usize][(dx + 1) as usize];
    let mut sum = [[0.0; 3]; 2];
    let mut total = 0.0;
    for dt in -1..=1 {
        for dx in -1..=1 {
            let v = f(dt, dx);
            sum[0][(dx + 1) as usize] += v;
            sum[1][(dt + 1) as usize] += v;
            total += v;
        }
    }
    let bx = (sum[0][2] - sum[0][0]) / 6.0;
    let bt = (sum[1][2] - sum[1][0]) / 6.0;
    let cx = (sum[0][2] + sum[0][0] - 2.0 * sum[0][1]) / 6.0;
    let ct = (sum[1][2] + sum[1][0] - 2.0 * sum[1][1]) / 6.0;
    let cxt = (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / 4.0;
    let a0 = total / 9.0 - 2.0 / 3.0 * (cx + ct);
    let det = 4.0 * cx * ct - cxt * cxt;
    let (mut dx, mut dt) = if det > 0.0 && cx < 0.0 {
        (
            (-2.0 * ct * bx + cxt * bt) / det,
            (-2.0 * cx * bt + cxt * bx) / det,
        )
    } else {
        (0.0, 0.0)
    };
    if dx.abs() > 1.0 || dt.abs() > 1.0 {
        dx = 0.0;
        dt = 0.0;
    }
    let amp = a0 + bx * dx + bt * dt + cx * dx * dx + ct * dt * dt + cxt * dx * dt;
    (dx, dt, amp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::{akhmediev, BreatherParams};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn background_is_exact() {
        let cfg = SolverConfig {
            n_x: 64,
            dt: 1e-2,
            t_samples: vec![0.0, 2.5, 10.0],
            ..SolverConfig::default()
        };
        let grid = evolve_from(vec![c(1.0, 0.0); 64], 6.0, &cfg).unwrap();
        for (k, &t) in grid.t.iter().enumerate() {
            let expected = Complex64::from_polar(1.0, 2.0 * t);
            for v in grid.row(k) {
                assert!((v - expected).norm() < 1e-12, "{v} vs {expected} at {t}");
            }
            let (m, e) = conserved(&grid, k);
            assert!(
                (m - 1.0).abs() < 1e-12 && (e + 1.0).abs() < 1e-12,
                "{m} {e}"
            );
        }
    }

    #[test]
    fn samples_snap_to_steps() {
        let cfg = SolverConfig {
            n_x: 16,
            dt: 0.1,
            t_samples: vec![0.0, 0.26, 0.26, 1.0],
            ..SolverConfig::default()
        };
        let grid = evolve_from(vec![c(1.0, 0.0); 16], 6.0, &cfg).unwrap();
        assert_eq!(grid.t.len(), 4);
        assert!((grid.t[1] - 0.3).abs() < 1e-15);
        assert_eq!(grid.row(1), grid.row(2));
        assert_eq!(grid.meta.steps, 10);
    }

    #[test]
    fn config_validation() {
        let data = CauchyData::from_pairs(6.0, 1e-4, 10.0, &[(1, c(0.5, 0.0)), (30, c(0.1, 0.0))])
            .unwrap();
        let bad_n = SolverConfig {
            n_x: 100,
            ..SolverConfig::default()
        };
        assert!(evolve(&data, &bad_n).is_err());
        let unresolved = SolverConfig {
            n_x: 64,
            ..SolverConfig::default()
        };
        assert!(evolve(&data, &unresolved).is_err());
        let unsorted = SolverConfig {
            t_samples: vec![1.0, 0.5],
            ..SolverConfig::default()
        };
        assert!(evolve(&data, &unsorted).is_err());
        let neg = SolverConfig {
            dt: -1.0,
            ..SolverConfig::default()
        };
        assert!(evolve(&data, &neg).is_err());
    }

    #[test]
    fn blowup_is_detected() {
        let cfg = SolverConfig {
            n_x: 16,
            dt: 1e-3,
            t_samples: vec![0.1],
            ..SolverConfig::default()
        };
        let err = evolve_from(vec![c(200.0, 0.0); 16], 6.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::BlowupDetected { .. }));
        let mut nan = vec![c(1.0, 0.0); 16];
        nan[3] = c(f64::NAN, 0.0);
        assert!(matches!(
            evolve_from(nan, 6.0, &cfg),
            Err(Error::NonfiniteField { .. })
        ));
    }

    #[test]
    fn breather_is_reproduced() {
        let p = BreatherParams::new(1.0, 0.0, 1.0).unwrap();
        let period = 2.0 * PI / p.k();
        let cfg = SolverConfig {
            n_x: 128,
            dt: 2e-4,
            scheme: Scheme::Refined,
            t_samples: vec![2.0],
            x0: Some(-period / 2.0),
        };
        let x = uniform_x(period, 128, -period / 2.0);
        let u0 = x.iter().map(|&xi| akhmediev(&p, xi, 0.0)).collect();
        let grid = evolve_from(u0, period, &cfg).unwrap();
        let err = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| (grid.at(0, i) - akhmediev(&p, xi, grid.t[0])).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn peaks_of_sampled_breather() {
        let p = BreatherParams::new(0.8, 0.37, 1.234).unwrap();
        let period = 2.0 * PI / p.k();
        let x = uniform_x(period, 200, -period / 2.0);
        let t: Vec<f64> = (0..81).map(|k| 0.02 * k as f64).collect();
        let grid =
            FieldGrid::from_fn(period, x, t, "breather", |x, t| Ok(akhmediev(&p, x, t))).unwrap();
        let peaks = extract_peaks(&grid, 1.5);
        assert_eq!(peaks.len(), 1, "{peaks:?}");
        let pk = peaks[0];
        assert!((pk.x - 0.37).abs() < 2e-3, "{pk:?}");
        assert!((pk.t - 1.234).abs() < 2e-3, "{pk:?}");
        assert!((pk.amplitude - p.peak()).abs() < 1e-3, "{pk:?}");
        assert!(extract_peaks(&grid, 5.0).is_empty());
    }

    #[test]
    fn fourier_energies_of_plane_wave() {
        let x = uniform_x(6.0, 32, -3.0);
        let grid = FieldGrid::from_fn(6.0, x, vec![0.0], "test", |x, _| {
            Ok(c(1.0, 0.0) + 0.5 * Complex64::from_polar(1.0, 2.0 * PI * 2.0 * x / 6.0))
        })
        .unwrap();
        let e = fourier_energies(&grid, 0, 3);
        for (q, v) in e {
            let expected = match q {
                0 => 1.0,
                2 => 0.25,
                _ => 0.0,
            };
            assert!((v - expected).abs() < 1e-14, "q = {q}");
        }
    }
}
