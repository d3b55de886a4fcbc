//! Theta-function evaluation of the finite-gap approximation.
//!
//! The theta series is `theta(z | B) = sum_n exp(n.B.n / 2 + n.z)`. For real
//! `(x, t)` it is dominated by the vertices of the unit hypercube containing
//! `-w(t)`; all sums here run over (subsets of) those vertices, written in
//! centered coordinates `nh = 2 n' + 1 in {-1, 1}` with `n = n' - floor(w)`.
//!
//! Sums are accumulated relative to a running maximum of the real exponent,
//! so individual terms of size `exp(O(N |log eps|))` never overflow.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riemann::{partition, riemann_matrix, status, winding, Partition, RiemannData};
use crate::spectral::{derive_modes, CauchyData, ModeSet};

pub const DEFAULT_MAX_MODES: usize = 12;

/// Threshold on the normalized denominator below which a field value is
/// rejected.
pub const UNDERFLOW_THRESHOLD: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sheet {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FgMode {
    Full,
    Reduced,
}

/// How the cell shift and the global phase are organised in the reduced sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseConvention {
    /// Shift by `floor(w)`, fix the invisible signs, phase over all `2N`
    /// components.
    CellShift,
    /// Shift by `floor(w) + st / 2`, sum over visible components only, phase
    /// `sum_k (2 floor(w_k) + st_k) phi_k`.
    #[default]
    Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaArgs {
    pub x: f64,
    pub t: f64,
    pub z_minus: Vec<Complex64>,
    pub z_plus: Vec<Complex64>,
    pub w: Vec<f64>,
    pub floor_w: Vec<i64>,
    pub z_tilde_minus: Vec<Complex64>,
    pub z_tilde_plus: Vec<Complex64>,
    pub z_hat_minus: Vec<Complex64>,
    pub z_hat_plus: Vec<Complex64>,
    pub phase: f64,
}

impl ThetaArgs {
    pub fn z(&self, sheet: Sheet) -> &[Complex64] {
        match sheet {
            Sheet::Plus => &self.z_plus,
            Sheet::Minus => &self.z_minus,
        }
    }

    pub fn z_hat(&self, sheet: Sheet) -> &[Complex64] {
        match sheet {
            Sheet::Plus => &self.z_hat_plus,
            Sheet::Minus => &self.z_hat_minus,
        }
    }

    pub fn z_tilde(&self, sheet: Sheet) -> &[Complex64] {
        match sheet {
            Sheet::Plus => &self.z_tilde_plus,
            Sheet::Minus => &self.z_tilde_minus,
        }
    }
}

/// `z_plus - z_minus`.
pub fn sheet_offset(modes: &ModeSet) -> Vec<Complex64> {
    modes
        .hat_phi
        .iter()
        .map(|&p| Complex64::new(0.0, -PI - 2.0 * p))
        .collect()
}

fn b_times(rd: &RiemannData, v: &[f64]) -> Vec<Complex64> {
    let m = 2 * rd.n;
    (0..m)
        .map(|l| (0..m).map(|k| rd.b[(l, k)] * v[k]).sum())
        .collect()
}

pub fn theta_args(modes: &ModeSet, rd: &RiemannData, x: f64, t: f64) -> Result<ThetaArgs> {
    let m = 2 * modes.n;
    let mut z_minus = Vec::with_capacity(m);
    for j in 0..m {
        let a = modes.hat_alpha[j];
        if a.norm() == 0.0 {
            return Err(Error::DegenerateGap {
                mode: modes.mode_of(j),
                product: 0.0,
            });
        }
        let p = modes.hat_phi[j];
        z_minus.push(
            Complex64::new(-2.0 * (2.0 * p).sin() * t, FRAC_PI_2 + 2.0 * p.cos() * x)
                - (a / modes.sqrt_ab[j]).ln(),
        );
    }
    let offset = sheet_offset(modes);
    let z_plus: Vec<Complex64> = z_minus.iter().zip(&offset).map(|(z, c)| z + c).collect();
    let w = winding(rd, t);
    let floor_w: Vec<i64> = w.iter().map(|v| v.floor() as i64).collect();
    let shift = b_times(rd, &floor_w.iter().map(|&v| v as f64).collect::<Vec<_>>());
    let half = b_times(rd, &vec![0.5; m]);
    let z_tilde_minus: Vec<Complex64> = z_minus.iter().zip(&shift).map(|(z, s)| z - s).collect();
    let z_tilde_plus: Vec<Complex64> = z_plus.iter().zip(&shift).map(|(z, s)| z - s).collect();
    let z_hat_minus = z_tilde_minus
        .iter()
        .zip(&half)
        .map(|(z, s)| z - s)
        .collect();
    let z_hat_plus = z_tilde_plus.iter().zip(&half).map(|(z, s)| z - s).collect();
    let phase = floor_w
        .iter()
        .zip(&modes.hat_phi)
        .map(|(&f, &p)| (FRAC_PI_2 + p) * f as f64)
        .sum();
    Ok(ThetaArgs {
        x,
        t,
        z_minus,
        z_plus,
        w,
        floor_w,
        z_tilde_minus,
        z_tilde_plus,
        z_hat_minus,
        z_hat_plus,
        phase,
    })
}

/// A complex number stored as `exp(log_scale) * mantissa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaValue {
    pub log_scale: f64,
    pub mantissa: Complex64,
}

impl ThetaValue {
    pub fn from_exponent(e: Complex64) -> Self {
        Self {
            log_scale: e.re,
            mantissa: Complex64::from_polar(1.0, e.im),
        }
    }

    pub fn ln(&self) -> Complex64 {
        self.mantissa.ln() + self.log_scale
    }

    pub fn mul_exp(self, e: Complex64) -> Self {
        Self {
            log_scale: self.log_scale + e.re,
            mantissa: self.mantissa * Complex64::from_polar(1.0, e.im),
        }
    }

    pub fn div(&self, other: &ThetaValue) -> Complex64 {
        self.mantissa / other.mantissa * (self.log_scale - other.log_scale).exp()
    }

    /// Relative distance `|self / other - 1|`.
    pub fn relative_distance(&self, other: &ThetaValue) -> f64 {
        (self.div(other) - 1.0).norm()
    }
}

/// Running `sum exp(e_i)` binned by an integer x-frequency.
#[derive(Debug, Clone)]
struct Accumulator {
    q_max: i64,
    scale: f64,
    bins: Vec<Complex64>,
}

impl Accumulator {
    fn new(q_max: i64, scale: f64) -> Self {
        Self {
            q_max,
            scale,
            bins: vec![Complex64::default(); (2 * q_max + 1) as usize],
        }
    }

    #[inline]
    fn add(&mut self, q: i64, e: Complex64) {
        if e.re > self.scale + 30.0 {
            let r = (self.scale - e.re).exp();
            self.bins.iter_mut().for_each(|b| *b *= r);
            self.scale = e.re;
        }
        self.bins[(q + self.q_max) as usize] +=
            Complex64::from_polar((e.re - self.scale).exp(), e.im);
    }

    fn total(&self) -> ThetaValue {
        ThetaValue {
            log_scale: self.scale,
            mantissa: self.bins.iter().sum(),
        }
    }
}

/// Both sheets of one hypercube sum, as trigonometric polynomials in `x`
/// around the point where the arguments were taken.
#[derive(Debug, Clone)]
struct SheetSums {
    minus: Accumulator,
    plus: Accumulator,
}

/// Sums `exp(sum_{l != s in A} b_ls nh_l nh_s / 8 + sum_{l in A} nh_l z_l / 2)`
/// over `nh_l = +-1` for `l` in `free`; indices of `active` not in `free` keep
/// their sign from `signs`. The x-frequency of a vertex is
/// `sum_l mode(l) nh_l / 2`.
fn hypercube(
    rd: &RiemannData,
    active: &[usize],
    free: &[usize],
    signs: &[f64],
    z_minus: &[Complex64],
    z_plus: &[Complex64],
) -> SheetSums {
    let n = rd.n;
    let mode = |l: usize| (l % n + 1) as i64;
    let q_max: i64 = (1..=n as i64).sum();
    let b = |l: usize, s: usize| rd.b[(l, s)].re;

    let mut nh = signs.to_vec();
    for &l in free {
        nh[l] = 1.0;
    }
    let mut e_minus = Complex64::default();
    let mut e_plus = Complex64::default();
    let mut q2 = 0i64;
    for &l in active {
        for &s in active {
            if s != l {
                let v = b(l, s) * nh[l] * nh[s] / 8.0;
                e_minus += v;
                e_plus += v;
            }
        }
        e_minus += 0.5 * nh[l] * z_minus[l];
        e_plus += 0.5 * nh[l] * z_plus[l];
        q2 += mode(l) * nh[l] as i64;
    }
    // g[i] = sum_{s in A, s != free[i]} b_ls nh_s
    let mut g: Vec<f64> = free
        .iter()
        .map(|&l| {
            active
                .iter()
                .filter(|&&s| s != l)
                .map(|&s| b(l, s) * nh[s])
                .sum()
        })
        .collect();
    let coupling: Vec<Vec<f64>> = free
        .iter()
        .map(|&l| {
            free.iter()
                .map(|&s| if s == l { 0.0 } else { b(l, s) })
                .collect()
        })
        .collect();

    let mut minus = Accumulator::new(q_max, e_minus.re);
    let mut plus = Accumulator::new(q_max, e_plus.re);
    minus.add(q2 / 2, e_minus);
    plus.add(q2 / 2, e_plus);
    let count = 1u64 << free.len();
    for step in 1..count {
        let i = step.trailing_zeros() as usize;
        let l = free[i];
        let old = nh[l];
        e_minus -= old * (0.5 * g[i] + z_minus[l]);
        e_plus -= old * (0.5 * g[i] + z_plus[l]);
        for (gk, c) in g.iter_mut().zip(&coupling[i]) {
            *gk -= 2.0 * c * old;
        }
        nh[l] = -old;
        q2 -= 2 * mode(l) * old as i64;
        minus.add(q2 / 2, e_minus);
        plus.add(q2 / 2, e_plus);
    }
    SheetSums { minus, plus }
}

/// Per-sheet factor turning the centered sum into the raw theta value:
/// `floor(w).B.floor(w) / 2 - floor(w).z - sum_{l != s} b_ls / 8 - sum_l zh_l / 2`.
fn raw_prefactor(rd: &RiemannData, args: &ThetaArgs, sheet: Sheet) -> Complex64 {
    let m = 2 * rd.n;
    let f: Vec<f64> = args.floor_w.iter().map(|&v| v as f64).collect();
    let bf = b_times(rd, &f);
    let quad: Complex64 = (0..m).map(|l| 0.5 * f[l] * bf[l]).sum();
    let lin: Complex64 = (0..m).map(|l| f[l] * args.z(sheet)[l]).sum();
    let off: f64 = (0..m)
        .flat_map(|l| (0..m).filter(move |&s| s != l).map(move |s| (l, s)))
        .map(|(l, s)| rd.b[(l, s)].re)
        .sum();
    let zh: Complex64 = args.z_hat(sheet).iter().sum();
    quad - lin - off / 8.0 - 0.5 * zh
}

fn check_size(rd: &RiemannData, max_modes: usize) -> Result<()> {
    if rd.n > max_modes {
        return Err(Error::TooManyModes {
            modes: rd.n,
            max: max_modes,
        });
    }
    Ok(())
}

/// Full hypercube sum in centered form, normalized to the raw value
/// `theta(z | B)` restricted to the hypercube.
pub fn theta_full(
    args: &ThetaArgs,
    rd: &RiemannData,
    sheet: Sheet,
    max_modes: usize,
) -> Result<ThetaValue> {
    check_size(rd, max_modes)?;
    let all: Vec<usize> = (0..2 * rd.n).collect();
    let sums = hypercube(
        rd,
        &all,
        &all,
        &vec![1.0; 2 * rd.n],
        &args.z_hat_minus,
        &args.z_hat_plus,
    );
    let acc = match sheet {
        Sheet::Plus => &sums.plus,
        Sheet::Minus => &sums.minus,
    };
    Ok(acc.total().mul_exp(raw_prefactor(rd, args, sheet)))
}

/// Direct sum of `exp(n.B.n / 2 + n.z)` over
/// `n_j in {-floor(w_j) - 1, -floor(w_j)}`, without any change of variables.
pub fn theta_raw(
    args: &ThetaArgs,
    rd: &RiemannData,
    sheet: Sheet,
    max_modes: usize,
) -> Result<ThetaValue> {
    check_size(rd, max_modes)?;
    let m = 2 * rd.n;
    let z = args.z(sheet);
    let mut acc: Option<Accumulator> = None;
    let mut n = vec![0.0; m];
    for mask in 0u64..(1u64 << m) {
        for (l, nl) in n.iter_mut().enumerate() {
            *nl = -(args.floor_w[l] as f64) - ((mask >> l) & 1) as f64;
        }
        let mut e = Complex64::default();
        for l in 0..m {
            for s in 0..m {
                e += 0.5 * rd.b[(l, s)] * n[l] * n[s];
            }
            e += n[l] * z[l];
        }
        acc.get_or_insert_with(|| Accumulator::new(0, e.re))
            .add(0, e);
    }
    Ok(acc.expect("at least one vertex").total())
}

/// Vertex rule: status 0 keeps `nh = +1`, status 2 keeps `nh = -1`, status 1
/// keeps both.
fn fixed_signs(st: &[u8]) -> (Vec<usize>, Vec<f64>) {
    let free = (0..st.len()).filter(|&l| st[l] == 1).collect();
    let signs = st
        .iter()
        .map(|&s| match s {
            0 => 1.0,
            2 => -1.0,
            _ => 1.0,
        })
        .collect();
    (free, signs)
}

/// Reduced sum in the cell-shift convention, normalized like [`theta_full`]
/// so that the ratio of sheets needs no extra phase.
pub fn theta_reduced(args: &ThetaArgs, rd: &RiemannData, st: &[u8], sheet: Sheet) -> ThetaValue {
    let all: Vec<usize> = (0..2 * rd.n).collect();
    let (free, signs) = fixed_signs(st);
    let sums = hypercube(rd, &all, &free, &signs, &args.z_hat_minus, &args.z_hat_plus);
    let acc = match sheet {
        Sheet::Plus => &sums.plus,
        Sheet::Minus => &sums.minus,
    };
    acc.total().mul_exp(raw_prefactor(rd, args, sheet))
}

/// Arguments shifted by `floor(w) + st / 2`, for the interval convention.
pub fn interval_args(
    rd: &RiemannData,
    args: &ThetaArgs,
    st: &[u8],
) -> (Vec<Complex64>, Vec<Complex64>) {
    let shift: Vec<f64> = args
        .floor_w
        .iter()
        .zip(st)
        .map(|(&f, &s)| f as f64 + 0.5 * s as f64)
        .collect();
    let bs = b_times(rd, &shift);
    let minus = args.z_minus.iter().zip(&bs).map(|(z, s)| z - s).collect();
    let plus = args.z_plus.iter().zip(&bs).map(|(z, s)| z - s).collect();
    (minus, plus)
}

/// `Phi(I) = sum_{k <= N} (2 floor(w_k) + st_k) phi_k`.
pub fn interval_phase(modes: &ModeSet, args: &ThetaArgs, st: &[u8]) -> f64 {
    (0..modes.n)
        .map(|k| (2 * args.floor_w[k] + st[k] as i64) as f64 * modes.phi[k])
        .sum()
}

/// Visible-only sum of the interval convention, unnormalized.
pub fn theta_visible(args: &ThetaArgs, rd: &RiemannData, st: &[u8], sheet: Sheet) -> ThetaValue {
    let (zm, zp) = interval_args(rd, args, st);
    let visible: Vec<usize> = (0..2 * rd.n).filter(|&l| st[l] == 1).collect();
    let sums = hypercube(rd, &visible, &visible, &vec![1.0; 2 * rd.n], &zm, &zp);
    match sheet {
        Sheet::Plus => sums.plus.total(),
        Sheet::Minus => sums.minus.total(),
    }
}

/// Real part of `n.B.n + 2 n.z_-` for an integer vector `n`.
pub fn quadratic_exponent(rd: &RiemannData, args: &ThetaArgs, n: &[i64]) -> f64 {
    let m = 2 * rd.n;
    let mut e = 0.0;
    for l in 0..m {
        for s in 0..m {
            e += rd.b[(l, s)].re * (n[l] * n[s]) as f64;
        }
        e += 2.0 * n[l] as f64 * args.z_minus[l].re;
    }
    e
}

/// `g(n + w, n + w) - g(w, w)` with metric `g = Re B`.
pub fn metric_form(rd: &RiemannData, args: &ThetaArgs, n: &[i64]) -> f64 {
    let m = 2 * rd.n;
    let shifted: Vec<f64> = (0..m).map(|l| n[l] as f64 + args.w[l]).collect();
    let mut e = 0.0;
    for l in 0..m {
        for s in 0..m {
            let g = rd.b[(l, s)].re;
            e += g * (shifted[l] * shifted[s] - args.w[l] * args.w[s]);
        }
    }
    e
}

/// Field along one time level: `u(x) = factor * P(x) / M(x)` with `P`, `M`
/// trigonometric polynomials in `x - x_ref` of frequency `2 pi / L`.
#[derive(Debug, Clone)]
pub struct FieldRow {
    pub t: f64,
    x_ref: f64,
    kappa: f64,
    factor: Complex64,
    q_max: i64,
    plus: Vec<Complex64>,
    minus: Vec<Complex64>,
}

impl FieldRow {
    fn new(t: f64, x_ref: f64, period: f64, prefactor: Complex64, sums: SheetSums) -> Self {
        let factor = Complex64::new(0.0, 2.0 * t).exp()
            * (prefactor + (sums.plus.scale - sums.minus.scale)).exp();
        Self {
            t,
            x_ref,
            kappa: 2.0 * PI / period,
            factor,
            q_max: sums.minus.q_max,
            plus: sums.plus.bins,
            minus: sums.minus.bins,
        }
    }

    pub fn eval(&self, x: f64) -> Result<Complex64> {
        let step = Complex64::from_polar(1.0, self.kappa * (x - self.x_ref));
        let mut rot = step.powi(-(self.q_max as i32));
        let (mut p, mut m) = (Complex64::default(), Complex64::default());
        for (a, b) in self.plus.iter().zip(&self.minus) {
            p += a * rot;
            m += b * rot;
            rot *= step;
        }
        let scale = self.minus.iter().map(|b| b.norm()).fold(0.0, f64::max);
        if !(m.norm() >= UNDERFLOW_THRESHOLD * scale.max(1.0)) {
            return Err(Error::ThetaUnderflow { x, t: self.t });
        }
        Ok(self.factor * p / m)
    }
}

/// Everything needed to evaluate the finite-gap approximation for one set of
/// Cauchy data.
#[derive(Debug, Clone)]
pub struct FgModel {
    pub data: CauchyData,
    pub modes: ModeSet,
    pub rd: RiemannData,
    pub partition: Partition,
    pub max_modes: usize,
    pub convention: PhaseConvention,
}

impl FgModel {
    pub fn new(data: &CauchyData) -> Result<Self> {
        let modes = derive_modes(data)?;
        let rd = riemann_matrix(&modes, data.epsilon)?;
        let partition = partition(&rd, data.horizon, data.p)?;
        Ok(Self {
            data: data.clone(),
            modes,
            rd,
            partition,
            max_modes: DEFAULT_MAX_MODES,
            convention: PhaseConvention::default(),
        })
    }

    pub fn with_convention(mut self, convention: PhaseConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn args(&self, x: f64, t: f64) -> Result<ThetaArgs> {
        theta_args(&self.modes, &self.rd, x, t)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.data.horizon) {
            return Err(Error::InvalidInput(format!(
                "t = {t} lies outside [0, {}]",
                self.data.horizon
            )));
        }
        Ok(())
    }

    /// Field row at time `t`, built from the arguments at `x_ref`.
    fn row_at(&self, x_ref: f64, t: f64, mode: FgMode) -> Result<FieldRow> {
        self.check_time(t)?;
        let args = self.args(x_ref, t)?;
        let m = 2 * self.rd.n;
        let all: Vec<usize> = (0..m).collect();
        let (sums, prefactor) = match (mode, self.convention) {
            (FgMode::Full, _) => {
                check_size(&self.rd, self.max_modes)?;
                let sums = hypercube(
                    &self.rd,
                    &all,
                    &all,
                    &vec![1.0; m],
                    &args.z_hat_minus,
                    &args.z_hat_plus,
                );
                (sums, Complex64::new(0.0, 2.0 * args.phase))
            }
            (FgMode::Reduced, PhaseConvention::CellShift) => {
                let st = status(&self.rd, t, self.data.p);
                let (free, signs) = fixed_signs(&st);
                let sums = hypercube(
                    &self.rd,
                    &all,
                    &free,
                    &signs,
                    &args.z_hat_minus,
                    &args.z_hat_plus,
                );
                (sums, Complex64::new(0.0, 2.0 * args.phase))
            }
            (FgMode::Reduced, PhaseConvention::Interval) => {
                let st = status(&self.rd, t, self.data.p);
                let (zm, zp) = interval_args(&self.rd, &args, &st);
                let visible: Vec<usize> = (0..m).filter(|&l| st[l] == 1).collect();
                let sums = hypercube(&self.rd, &visible, &visible, &vec![1.0; m], &zm, &zp);
                let phase = interval_phase(&self.modes, &args, &st);
                (sums, Complex64::new(0.0, 2.0 * phase))
            }
        };
        // centered sums differ from the cell-shifted ones by exp(-sum zh / 2)
        let correction = match (mode, self.convention) {
            (FgMode::Reduced, PhaseConvention::Interval) => Complex64::default(),
            _ => {
                let zp: Complex64 = args.z_hat_plus.iter().sum();
                let zm: Complex64 = args.z_hat_minus.iter().sum();
                -0.5 * (zp - zm)
            }
        };
        Ok(FieldRow::new(
            t,
            x_ref,
            self.data.period,
            prefactor + correction,
            sums,
        ))
    }

    pub fn row(&self, t: f64, mode: FgMode) -> Result<FieldRow> {
        self.row_at(0.0, t, mode)
    }

    pub fn field(&self, x: f64, t: f64, mode: FgMode) -> Result<Complex64> {
        self.row_at(x, t, mode)?.eval(x)
    }

    /// Row-major `ts.len() x xs.len()` grid of field values.
    pub fn grid(&self, xs: &[f64], ts: &[f64], mode: FgMode) -> Result<Vec<Complex64>> {
        let rows: Result<Vec<Vec<Complex64>>> = ts
            .par_iter()
            .map(|&t| {
                let row = self.row(t, mode)?;
                xs.iter().map(|&x| row.eval(x)).collect()
            })
            .collect();
        Ok(rows?.into_iter().flatten().collect())
    }
}

pub fn solve_fg(model: &FgModel, x: f64, t: f64, mode: FgMode) -> Result<Complex64> {
    model.field(x, t, mode)
}
