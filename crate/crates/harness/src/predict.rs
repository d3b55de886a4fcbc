use nlsfg_core::closed_forms::{isolated_appearances, pairwise_delay, recurrence_params};
use nlsfg_core::riemann::{partition, riemann_matrix};
use nlsfg_core::spectral::derive_modes;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::run::PartitionSummary;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModePrediction {
    pub mode: usize,
    pub k: f64,
    pub sigma: f64,
    pub phi: f64,
    /// First appearance `(T, X)` of the mode on its own.
    pub t1: f64,
    pub x1: f64,
    pub dt: f64,
    pub dx: f64,
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Delay {
    pub j: usize,
    pub k: usize,
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduledAppearance {
    pub mode: usize,
    pub t: f64,
    pub x: f64,
    pub counts: Vec<i64>,
    pub interval: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionReport {
    pub modes: Vec<ModePrediction>,
    pub pairwise_delays: Vec<Delay>,
    /// Isolated appearances over `[0, T0]`, by time.
    pub schedule: Vec<ScheduledAppearance>,
    pub partition: PartitionSummary,
}

pub fn predict(cfg: &ExperimentConfig) -> Result<PredictionReport> {
    let tag = "predict";
    let core = |e| HarnessError::core(tag, e);
    let data = cfg.cauchy_data().map_err(core)?;
    let modes = derive_modes(&data).map_err(core)?;
    let rd = riemann_matrix(&modes, data.epsilon).map_err(core)?;
    let part = partition(&rd, data.horizon, data.p).map_err(core)?;

    let mut rows = Vec::new();
    for n in 1..=modes.n {
        let rp = recurrence_params(&data, &modes, n).map_err(core)?;
        rows.push(ModePrediction {
            mode: n,
            k: modes.k[n - 1],
            sigma: modes.sigma[n - 1],
            phi: rp.phi,
            t1: rp.t1,
            x1: rp.x1,
            dt: rp.dt,
            dx: rp.dx,
            peak: 1.0 + 2.0 * rp.phi.sin(),
        });
    }
    let mut delays = Vec::new();
    for j in 0..modes.n {
        for k in 0..modes.n {
            if j != k {
                delays.push(Delay {
                    j: j + 1,
                    k: k + 1,
                    delay: pairwise_delay(&modes, j, k).map_err(core)?,
                });
            }
        }
    }
    let mut schedule: Vec<ScheduledAppearance> = isolated_appearances(&data, &modes, &rd, &part)
        .map_err(core)?
        .into_iter()
        .filter(|a| (0.0..=data.horizon).contains(&a.t))
        .map(|a| {
            let iv = &part.intervals[a.interval];
            ScheduledAppearance {
                mode: a.mode + 1,
                t: a.t,
                x: a.x,
                counts: a.counts,
                interval: [iv.start, iv.end],
            }
        })
        .collect();
    schedule.sort_by(|a, b| a.t.total_cmp(&b.t));

    Ok(PredictionReport {
        modes: rows,
        pairwise_delays: delays,
        schedule,
        partition: PartitionSummary::new(&part),
    })
}
