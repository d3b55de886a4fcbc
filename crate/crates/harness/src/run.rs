use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nlsfg_core::riemann::Partition;
use nlsfg_core::ssfm::{evolve, extract_peaks, uniform_x, FieldGrid, GridMeta, Scheme};
use nlsfg_core::theta::FgModel;
use serde::Serialize;

use crate::config::{ExperimentConfig, Format, Method, Mode};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMetrics {
    pub a: String,
    pub b: String,
    pub sup_norm_diff: f64,
    /// Root mean square of `|a - b|` over the output grid.
    pub l2_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSup {
    pub a: String,
    pub b: String,
    pub sup_norm_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalDiff {
    pub start: f64,
    pub end: f64,
    /// 1-based visible modes.
    pub visible: Vec<usize>,
    pub rows: usize,
    pub diffs: Vec<PairSup>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakRow {
    pub method: String,
    pub x: f64,
    pub t: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryRow {
    pub label: String,
    pub t: f64,
    pub mode: usize,
    pub k: usize,
    pub merged: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRow {
    pub start: f64,
    pub end: f64,
    pub visible: Vec<usize>,
    pub counts: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionSummary {
    pub horizon: f64,
    pub p: f64,
    pub boundaries: Vec<BoundaryRow>,
    pub intervals: Vec<IntervalRow>,
    pub warnings: Vec<String>,
}

impl PartitionSummary {
    pub fn new(part: &Partition) -> Self {
        Self {
            horizon: part.horizon,
            p: part.p,
            boundaries: part
                .boundaries
                .iter()
                .map(|b| BoundaryRow {
                    label: b.label(),
                    t: b.t,
                    mode: b.mode + 1,
                    k: b.k,
                    merged: b
                        .merged
                        .iter()
                        .map(|&(j, k)| format!("t^({})_{k}", j + 1))
                        .collect(),
                })
                .collect(),
            intervals: part
                .intervals
                .iter()
                .map(|iv| IntervalRow {
                    start: iv.start,
                    end: iv.end,
                    visible: iv.visible.iter().map(|j| j + 1).collect(),
                    counts: iv.counts.clone(),
                })
                .collect(),
            warnings: part.warnings.clone(),
        }
    }

    /// Boundary labels in time order.
    pub fn labels(&self) -> Vec<String> {
        self.boundaries.iter().map(|b| b.label.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverEcho {
    pub n_x: usize,
    pub dt: f64,
    pub scheme: Scheme,
    pub steps: u64,
    pub max_mass_drift: f64,
    pub max_energy_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub mode: Mode,
    pub methods: Vec<Method>,
    pub n_x_out: usize,
    pub n_t_out: usize,
    pub t_range: [f64; 2],
    pub metrics: Vec<PairMetrics>,
    pub per_interval_diff: Vec<IntervalDiff>,
    pub peak_table: Vec<PeakRow>,
    /// Absent for direct-solver runs whose data the finite-gap model rejects.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverEcho>,
}

impl ComparisonReport {
    pub fn metric(&self, a: Method, b: Method) -> Option<&PairMetrics> {
        self.metrics
            .iter()
            .find(|m| (m.a == a.name() && m.b == b.name()) || (m.a == b.name() && m.b == a.name()))
    }
}

/// Sampled fields of one run, all on the same output grid.
#[derive(Debug, Clone)]
pub struct RunFields {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub fields: Vec<(Method, FieldGrid)>,
    pub partition: Option<Partition>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ComparisonReport,
    pub fields: RunFields,
    pub artifacts: Vec<PathBuf>,
}

/// `(sup |a - b|, rms |a - b|)` over two grids of equal shape.
pub fn diff_metrics(a: &FieldGrid, b: &FieldGrid) -> (f64, f64) {
    assert_eq!(a.u.len(), b.u.len(), "grids differ in shape");
    let mut sup = 0.0f64;
    let mut sq = 0.0;
    for (p, q) in a.u.iter().zip(&b.u) {
        let d = (p - q).norm();
        sup = sup.max(d);
        sq += d * d;
    }
    (sup, (sq / a.u.len().max(1) as f64).sqrt())
}

fn origin(cfg: &ExperimentConfig) -> String {
    format!("mode {}", mode_name(cfg.mode))
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::FgFull => "fg_full",
        Mode::FgReduced => "fg_reduced",
        Mode::Ssfm => "ssfm",
        Mode::Compare => "compare",
    }
}

/// Evaluates every method requested by the config on the output grid.
pub fn compute(cfg: &ExperimentConfig) -> Result<RunFields> {
    let tag = origin(cfg);
    let data = cfg.cauchy_data().map_err(|e| HarnessError::core(&tag, e))?;
    let model = match FgModel::new(&data) {
        Ok(model) => Some(model),
        Err(_) if cfg.mode == Mode::Ssfm => None,
        Err(e) => return Err(HarnessError::core(&tag, e)),
    };
    let xs = uniform_x(data.period, cfg.grid.n_x_out, cfg.x0());
    let ts = cfg.output_times();
    let mut fields = Vec::new();
    for method in cfg.mode.methods() {
        let grid = match method.fg_mode() {
            Some(mode) => {
                let model = model.as_ref().expect("finite-gap model");
                let u = model
                    .grid(&xs, &ts, mode)
                    .map_err(|e| HarnessError::core(&tag, e))?;
                FieldGrid {
                    period: data.period,
                    x: xs.clone(),
                    t: ts.clone(),
                    u,
                    meta: GridMeta {
                        source: method.name().into(),
                        n_x: xs.len(),
                        ..GridMeta::default()
                    },
                }
            }
            None => {
                let full =
                    evolve(&data, &cfg.solver_config()).map_err(|e| HarnessError::core(&tag, e))?;
                subsample(full, cfg.grid.n_x_out, &ts)
            }
        };
        fields.push((method, grid));
    }
    Ok(RunFields {
        x: xs,
        t: ts,
        fields,
        partition: model.map(|m| m.partition),
    })
}

fn subsample(full: FieldGrid, n_out: usize, ts: &[f64]) -> FieldGrid {
    let stride = full.x.len() / n_out;
    let x: Vec<f64> = full.x.iter().step_by(stride).copied().collect();
    let u = (0..full.t.len())
        .flat_map(|k| {
            full.row(k)
                .iter()
                .step_by(stride)
                .copied()
                .collect::<Vec<_>>()
        })
        .collect();
    FieldGrid {
        period: full.period,
        x,
        t: ts.to_vec(),
        u,
        meta: full.meta,
    }
}

pub fn report(cfg: &ExperimentConfig, run: &RunFields) -> ComparisonReport {
    let mut metrics = Vec::new();
    let pairs = pairs(&run.fields);
    for &(i, j) in &pairs {
        let (a, b) = (&run.fields[i], &run.fields[j]);
        let (sup, l2) = diff_metrics(&a.1, &b.1);
        metrics.push(PairMetrics {
            a: a.0.name().into(),
            b: b.0.name().into(),
            sup_norm_diff: sup,
            l2_diff: l2,
        });
    }

    let intervals = run.partition.as_ref().map_or(&[][..], |p| &p.intervals[..]);
    let per_interval_diff = intervals
        .iter()
        .filter_map(|iv| {
            let rows: Vec<usize> = (0..run.t.len())
                .filter(|&k| iv.contains(run.t[k]))
                .collect();
            if rows.is_empty() {
                return None;
            }
            let diffs = pairs
                .iter()
                .map(|&(i, j)| {
                    let (a, b) = (&run.fields[i], &run.fields[j]);
                    let sup = rows
                        .iter()
                        .flat_map(|&k| {
                            a.1.row(k)
                                .iter()
                                .zip(b.1.row(k))
                                .map(|(p, q)| (p - q).norm())
                        })
                        .fold(0.0, f64::max);
                    PairSup {
                        a: a.0.name().into(),
                        b: b.0.name().into(),
                        sup_norm_diff: sup,
                    }
                })
                .collect();
            Some(IntervalDiff {
                start: iv.start,
                end: iv.end,
                visible: iv.visible.iter().map(|j| j + 1).collect(),
                rows: rows.len(),
                diffs,
            })
        })
        .collect();

    let mut peak_table: Vec<PeakRow> = run
        .fields
        .iter()
        .flat_map(|(m, g)| {
            extract_peaks(g, cfg.grid.peak_threshold)
                .into_iter()
                .map(|p| PeakRow {
                    method: m.name().into(),
                    x: p.x,
                    t: p.t,
                    amplitude: p.amplitude,
                })
        })
        .collect();
    peak_table.sort_by(|p, q| p.t.total_cmp(&q.t).then_with(|| p.method.cmp(&q.method)));

    let solver = run
        .fields
        .iter()
        .find(|(m, _)| *m == Method::Ssfm)
        .map(|(_, g)| {
            let drift = |v: &[f64]| {
                let v0 = v.first().copied().unwrap_or(0.0);
                v.iter().map(|x| ((x - v0) / v0).abs()).fold(0.0, f64::max)
            };
            SolverEcho {
                n_x: g.meta.n_x,
                dt: g.meta.dt.unwrap_or(cfg.solver.dt),
                scheme: g.meta.scheme.unwrap_or(cfg.solver.scheme),
                steps: g.meta.steps,
                max_mass_drift: drift(&g.meta.mass),
                max_energy_drift: drift(&g.meta.energy),
            }
        });

    ComparisonReport {
        mode: cfg.mode,
        methods: run.fields.iter().map(|(m, _)| *m).collect(),
        n_x_out: run.x.len(),
        n_t_out: run.t.len(),
        t_range: cfg.t_range(),
        metrics,
        per_interval_diff,
        peak_table,
        partition: run.partition.as_ref().map(PartitionSummary::new),
        solver,
    }
}

fn pairs<T>(fields: &[T]) -> Vec<(usize, usize)> {
    let n = fields.len();
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

pub fn field_csv(run: &RunFields) -> String {
    let mut out = String::from("t,x");
    for (m, _) in &run.fields {
        let n = m.name();
        write!(out, ",{n}_re,{n}_im,{n}_abs").unwrap();
    }
    let pairs = pairs(&run.fields);
    for &(i, j) in &pairs {
        write!(
            out,
            ",{}_vs_{}_absdiff",
            run.fields[i].0.name(),
            run.fields[j].0.name()
        )
        .unwrap();
    }
    out.push('\n');
    for (k, t) in run.t.iter().enumerate() {
        for (i, x) in run.x.iter().enumerate() {
            write!(out, "{t:.16e},{x:.16e}").unwrap();
            for (_, g) in &run.fields {
                let u = g.at(k, i);
                write!(out, ",{:.16e},{:.16e},{:.16e}", u.re, u.im, u.norm()).unwrap();
            }
            for &(a, b) in &pairs {
                let d = (run.fields[a].1.at(k, i) - run.fields[b].1.at(k, i)).norm();
                write!(out, ",{d:.16e}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

/// `|u|` in gnuplot's nonuniform matrix layout: first row `n x_0 .. x_n`,
/// then `t_k |u(x_0,t_k)| ..`.
pub fn gnuplot_matrix(grid: &FieldGrid) -> String {
    let mut out = String::new();
    write!(out, "{}", grid.x.len()).unwrap();
    for x in &grid.x {
        write!(out, " {x:.16e}").unwrap();
    }
    out.push('\n');
    for (k, t) in grid.t.iter().enumerate() {
        write!(out, "{t:.16e}").unwrap();
        for u in grid.row(k) {
            write!(out, " {:.16e}", u.norm()).unwrap();
        }
        out.push('\n');
    }
    out
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Writes `files` into `dir`; on any failure the files already written are
/// removed again.
pub fn write_artifacts(dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>> {
    let created_dir = !dir.exists();
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, body) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(&path);
            if created_dir {
                let _ = fs::remove_dir(dir);
            }
            return Err(HarnessError::io(path, e));
        }
        written.push(path);
    }
    Ok(written)
}

/// Executes the experiment and writes its artifacts into the output
/// directory of the config.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let fields = compute(cfg)?;
    let report = report(cfg, &fields);
    let mut files = Vec::new();
    if cfg.outputs.formats.contains(&Format::Csv) {
        files.push(("field.csv".to_string(), field_csv(&fields)));
    }
    if cfg.outputs.formats.contains(&Format::Json) {
        files.push(("report.json".to_string(), to_json(&report)));
        files.push(("config.toml".to_string(), cfg.to_toml_string()));
    }
    if let Some(part) = &report.partition {
        files.push(("partition.json".to_string(), to_json(part)));
    }
    if cfg.outputs.gnuplot {
        for (m, g) in &fields.fields {
            files.push((format!("{}_abs.dat", m.name()), gnuplot_matrix(g)));
        }
    }
    let artifacts = write_artifacts(&cfg.outputs.dir, &files)?;
    Ok(RunOutput {
        report,
        fields,
        artifacts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(values: &[f64]) -> FieldGrid {
        FieldGrid {
            period: 1.0,
            x: vec![0.0, 0.5],
            t: vec![0.0; values.len() / 2],
            u: values
                .iter()
                .map(|&v| num_complex::Complex64::new(v, 0.0))
                .collect(),
            meta: GridMeta::default(),
        }
    }

    #[test]
    fn metrics_are_symmetric_and_vanish_on_self() {
        let a = grid(&[1.0, 2.0, 3.0, 4.0]);
        let b = grid(&[1.0, 2.5, 3.0, 2.0]);
        assert_eq!(diff_metrics(&a, &a), (0.0, 0.0));
        assert_eq!(diff_metrics(&a, &b), diff_metrics(&b, &a));
        let (sup, l2) = diff_metrics(&a, &b);
        assert_eq!(sup, 2.0);
        assert!((l2 - (4.25f64 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn failed_write_leaves_nothing_behind() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("out");
        let files = vec![
            ("a.txt".to_string(), "a".to_string()),
            ("missing/b.txt".to_string(), "b".to_string()),
        ];
        assert!(write_artifacts(&dir, &files).is_err());
        assert!(!dir.exists());
    }
}
