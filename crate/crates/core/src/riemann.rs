//! Leading-order Riemann matrix, the reduced `N x N` system, the winding
//! trajectory `w(t)` and the partition of `[0, T0]` into intervals on which
//! the set of visible modes is constant.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::ModeSet;

/// Upper bound on the 2-norm condition number of the reduced matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative tolerance (in units of `T0`) below which transition times of
/// different modes are merged.
pub const COINCIDENCE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiemannData {
    pub n: usize,
    /// `2N x 2N` leading-order Riemann matrix. Off-diagonal entries are real;
    /// the diagonal keeps the argument of `sqrt(alpha_j beta_j)`.
    pub b: DMatrix<Complex64>,
    /// Reduced symmetric matrix `P - Q` acting on `w`.
    pub reduced: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub tau: Vec<f64>,
    pub chi: Vec<f64>,
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
    /// 2-norm condition number of the reduced matrix.
    pub condition: f64,
}

impl RiemannData {
    pub fn real_b(&self) -> DMatrix<f64> {
        self.b.map(|z| z.re)
    }

    /// Half-size winding `w(t) = w1 t + w0`.
    pub fn w(&self, t: f64) -> Vec<f64> {
        self.w0
            .iter()
            .zip(&self.w1)
            .map(|(a, b)| b * t + a)
            .collect()
    }

    /// Largest relative residual of `reduced * w1 = -sigma` and
    /// `reduced * w0 = -chi`.
    pub fn solve_residual(&self) -> f64 {
        let w1 = DVector::from_column_slice(&self.w1);
        let w0 = DVector::from_column_slice(&self.w0);
        let sigma = DVector::from_column_slice(&self.sigma);
        let chi = DVector::from_column_slice(&self.chi);
        let r1 = (&self.reduced * w1 + &sigma).norm();
        let r0 = (&self.reduced * w0 + &chi).norm();
        r1.max(r0) / sigma.norm()
    }
}

pub fn riemann_matrix(modes: &ModeSet, epsilon: f64) -> Result<RiemannData> {
    let n = modes.n;
    if n == 0 {
        return Err(Error::InvalidInput("no unstable modes".into()));
    }
    let m = 2 * n;
    let hp = &modes.hat_phi;
    let mut b = DMatrix::<Complex64>::zeros(m, m);
    for j in 0..m {
        let scale = (4.0 * (2.0 * hp[j]).sin() * hp[j].cos()).abs();
        b[(j, j)] = 2.0 * (epsilon * modes.sqrt_ab[j] / scale).ln();
        for k in 0..m {
            if k != j {
                let ratio = ((hp[j] - hp[k]) / 2.0).sin() / ((hp[j] + hp[k]) / 2.0).cos();
                b[(j, k)] = Complex64::new(2.0 * ratio.abs().ln(), 0.0);
            }
        }
    }
    if let Some(j) = (0..m).find(|&j| !(b[(j, j)].re < 0.0)) {
        return Err(Error::InvalidInput(format!(
            "epsilon {epsilon} is too large: diagonal entry {} of the Riemann matrix is {}",
            j + 1,
            b[(j, j)].re
        )));
    }

    let sigma = modes.sigma.clone();
    let chi: Vec<f64> = (0..n).map(|j| modes.chi(j)).collect();
    let tau: Vec<f64> = (0..n)
        .map(|j| {
            let s = sigma[j];
            2.0 / s
                * (s * s / (2.0 * epsilon * (modes.alpha[j] * modes.beta[j]).norm().sqrt())).ln()
        })
        .collect();
    let phi = &modes.phi;
    let reduced = DMatrix::from_fn(n, n, |j, k| {
        if j == k {
            -sigma[j] * tau[j]
        } else {
            2.0 * ((phi[j] - phi[k]).sin() / (phi[j] + phi[k]).sin())
                .abs()
                .ln()
        }
    });

    let sv = reduced.singular_values();
    let condition = sv.max() / sv.min();
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularReducedMatrix { condition });
    }
    let lu = reduced.clone().lu();
    let rhs1 = -DVector::from_column_slice(&sigma);
    let rhs0 = -DVector::from_column_slice(&chi);
    let (w1, w0) = match (lu.solve(&rhs1), lu.solve(&rhs0)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::SingularReducedMatrix { condition }),
    };
    if let Some(j) = (0..n).find(|&j| !(w1[j] > 0.0)) {
        return Err(Error::NonrecurrentMode {
            mode: j + 1,
            speed: w1[j],
        });
    }
    Ok(RiemannData {
        n,
        b,
        reduced,
        sigma,
        tau,
        chi,
        w0: w0.iter().copied().collect(),
        w1: w1.iter().copied().collect(),
        condition,
    })
}

/// Full winding vector `(w(t), -w(t))` of length `2N`.
pub fn winding(rd: &RiemannData, t: f64) -> Vec<f64> {
    let w = rd.w(t);
    w.iter().copied().chain(w.iter().map(|v| -v)).collect()
}

/// Visibility status of a single winding component.
pub fn status_of(w: f64, p: f64) -> u8 {
    let frac = w - w.floor();
    if frac < (1.0 - p) / 2.0 {
        0
    } else if frac <= (1.0 + p) / 2.0 {
        1
    } else {
        2
    }
}

/// Status vector of length `2N`; the second half mirrors the first so that
/// `st[j] + st[j + N] = 2`.
pub fn status(rd: &RiemannData, t: f64, p: f64) -> Vec<u8> {
    let first: Vec<u8> = rd.w(t).iter().map(|&w| status_of(w, p)).collect();
    first
        .iter()
        .copied()
        .chain(first.iter().map(|s| 2 - s))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub t: f64,
    /// 0-based mode index.
    pub mode: usize,
    /// 1-based transition counter; odd values enter the visible band.
    pub k: usize,
    /// Other `(mode, k)` transitions merged into this one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub merged: Vec<(usize, usize)>,
}

impl Boundary {
    pub fn label(&self) -> String {
        format!("t^({})_{}", self.mode + 1, self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub status: Vec<u8>,
    /// 0-based indices of the visible modes.
    pub visible: BTreeSet<usize>,
    /// `2 floor(w_j) + st_j` for `j < N`; constant on the interval even when
    /// an invisible status flips from 2 to 0 at an integer crossing of `w_j`.
    pub counts: Vec<i64>,
}

impl Interval {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub horizon: f64,
    pub p: f64,
    pub boundaries: Vec<Boundary>,
    pub intervals: Vec<Interval>,
    pub warnings: Vec<String>,
}

impl Partition {
    /// Index of the interval containing `t`; interior boundary times belong
    /// to the interval on their left.
    pub fn locate(&self, t: f64) -> Option<usize> {
        if !(t >= 0.0 && t <= self.horizon) {
            return None;
        }
        let idx = self.intervals.partition_point(|iv| iv.end < t);
        Some(idx.min(self.intervals.len() - 1))
    }

    pub fn interval_at(&self, t: f64) -> Option<&Interval> {
        self.locate(t).map(|i| &self.intervals[i])
    }
}

/// `2 floor(w_j(t)) + st_j(t)` for the first `N` components.
pub fn counts(rd: &RiemannData, t: f64, p: f64) -> Vec<i64> {
    rd.w(t)
        .iter()
        .map(|&w| 2 * w.floor() as i64 + status_of(w, p) as i64)
        .collect()
}

/// Transition time `t^(j)_k` for a 0-based mode `j` and 1-based `k`.
pub fn transition_time(rd: &RiemannData, j: usize, k: usize, p: f64) -> f64 {
    let n = k.div_ceil(2) as f64;
    let edge = if k % 2 == 1 {
        (1.0 - p) / 2.0
    } else {
        (1.0 + p) / 2.0
    };
    (edge + n - 1.0 - rd.w0[j]) / rd.w1[j]
}

pub fn partition(rd: &RiemannData, horizon: f64, p: f64) -> Result<Partition> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "p must lie in (0, 1], got {p}"
        )));
    }
    let mut raw = Vec::new();
    for j in 0..rd.n {
        // Transitions happen when w_j crosses m + (1 -+ p)/2 for integers m;
        // the counter k follows the indexing n = m + 1 and may start below 1
        // when w0_j is large, so only positive counters are enumerated from
        // the first crossing after t = 0.
        let w_start = rd.w0[j];
        let lo = (w_start - (1.0 + p) / 2.0).floor() as i64;
        let hi = (rd.w1[j] * horizon + w_start).ceil() as i64;
        for m in lo..=hi {
            for (parity, edge) in [(1usize, (1.0 - p) / 2.0), (0, (1.0 + p) / 2.0)] {
                let t = (edge + m as f64 - w_start) / rd.w1[j];
                if t > 0.0 && t <= horizon {
                    let k = 2 * (m + 1) - parity as i64;
                    if k < 1 {
                        continue;
                    }
                    raw.push(Boundary {
                        t,
                        mode: j,
                        k: k as usize,
                        merged: Vec::new(),
                    });
                }
            }
        }
    }
    raw.sort_by(|a, b| a.t.total_cmp(&b.t));

    let tol = COINCIDENCE_TOLERANCE * horizon;
    let mut warnings = Vec::new();
    let mut boundaries: Vec<Boundary> = Vec::with_capacity(raw.len());
    for b in raw {
        match boundaries.last_mut() {
            Some(prev) if b.t - prev.t <= tol => {
                warnings.push(format!(
                    "transition {} at t = {} merged with {} at t = {}",
                    b.label(),
                    b.t,
                    prev.label(),
                    prev.t
                ));
                prev.merged.push((b.mode, b.k));
            }
            _ => boundaries.push(b),
        }
    }

    let mut edges = vec![0.0];
    edges.extend(boundaries.iter().map(|b| b.t));
    if *edges.last().unwrap() < horizon {
        edges.push(horizon);
    }
    let intervals = edges
        .windows(2)
        .map(|e| {
            let mid = 0.5 * (e[0] + e[1]);
            let st = status(rd, mid, p);
            let visible = (0..rd.n).filter(|&j| st[j] == 1).collect();
            let counts = rd
                .w(mid)
                .iter()
                .zip(&st)
                .map(|(w, &s)| 2 * w.floor() as i64 + s as i64)
                .collect();
            Interval {
                start: e[0],
                end: e[1],
                status: st,
                visible,
                counts,
            }
        })
        .collect();
    Ok(Partition {
        horizon,
        p,
        boundaries,
        intervals,
        warnings,
    })
}

/// Largest deviation from the affine recurrence identities
/// `t_{2n} - t_{2n-1} = p / w1` and `t_{k+2} - t_k = 1 / w1`, over the
/// first `count` transitions of every mode.
pub fn recurrence_defect(rd: &RiemannData, p: f64, count: usize) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..rd.n {
        let period = 1.0 / rd.w1[j];
        for k in 1..=count {
            let t = |k| transition_time(rd, j, k, p);
            if k % 2 == 1 {
                worst = worst.max((t(k + 1) - t(k) - p * period).abs() / period);
            }
            worst = worst.max((t(k + 2) - t(k) - period).abs() / period);
        }
    }
    worst
}
