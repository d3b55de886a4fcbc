use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nlsfg_core::spectral::CauchyData;
use nlsfg_core::ssfm::{Scheme, SolverConfig};
use nlsfg_core::theta::FgMode;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Mode {
    FgFull,
    FgReduced,
    Ssfm,
    #[default]
    Compare,
}

impl Mode {
    /// Methods evaluated by this mode, in output order.
    pub fn methods(self) -> Vec<Method> {
        match self {
            Mode::FgFull => vec![Method::FgFull],
            Mode::FgReduced => vec![Method::FgReduced],
            Mode::Ssfm => vec![Method::Ssfm],
            Mode::Compare => vec![Method::Ssfm, Method::FgFull, Method::FgReduced],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ssfm,
    FgFull,
    FgReduced,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ssfm => "ssfm",
            Method::FgFull => "fg_full",
            Method::FgReduced => "fg_reduced",
        }
    }

    pub fn fg_mode(self) -> Option<FgMode> {
        match self {
            Method::Ssfm => None,
            Method::FgFull => Some(FgMode::Full),
            Method::FgReduced => Some(FgMode::Reduced),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CauchySection {
    #[serde(alias = "L")]
    pub period: f64,
    pub epsilon: f64,
    #[serde(alias = "T0")]
    pub horizon: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    /// `c_j` keyed by signed `j`, written as `"re,im"`.
    #[serde(with = "coeff_map")]
    pub coeffs: BTreeMap<i64, (f64, f64)>,
}

fn default_p() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub n_x: usize,
    pub dt: f64,
    pub scheme: Scheme,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            n_x: d.n_x,
            dt: d.dt,
            scheme: d.scheme,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n_x_out: usize,
    pub n_t_out: usize,
    /// Defaults to `[0, T0]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_range: Option<[f64; 2]>,
    pub peak_threshold: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n_x_out: 256,
            n_t_out: 301,
            t_range: None,
            peak_threshold: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
    pub gnuplot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
            gnuplot: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Mode,
    pub cauchy: CauchySection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub outputs: OutputSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub p: Option<f64>,
    pub grid: Option<(usize, usize)>,
    pub out: Option<PathBuf>,
    pub gnuplot: bool,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| HarnessError::config(origin, e.to_string()))?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let text =
            fs::read_to_string(path).map_err(|e| HarnessError::config(&origin, e.to_string()))?;
        Self::from_toml_str(&text, &origin)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(mode) = o.mode {
            self.mode = mode;
        }
        if let Some(p) = o.p {
            self.cauchy.p = p;
        }
        if let Some((nx, nt)) = o.grid {
            self.grid.n_x_out = nx;
            self.grid.n_t_out = nt;
        }
        if let Some(out) = &o.out {
            self.outputs.dir = out.clone();
        }
        if o.gnuplot {
            self.outputs.gnuplot = true;
        }
    }

    pub fn cauchy_data(&self) -> std::result::Result<CauchyData, nlsfg_core::Error> {
        let c = &self.cauchy;
        let coeffs = c
            .coeffs
            .iter()
            .map(|(&j, &(re, im))| (j, Complex64::new(re, im)))
            .collect();
        CauchyData::new(c.period, c.epsilon, coeffs, c.horizon, c.p)
    }

    pub fn t_range(&self) -> [f64; 2] {
        self.grid.t_range.unwrap_or([0.0, self.cauchy.horizon])
    }

    /// Output times snapped to the solver step, so that every method is
    /// sampled at the same instants.
    pub fn output_times(&self) -> Vec<f64> {
        let [a, b] = self.t_range();
        let n = self.grid.n_t_out;
        let dt = self.solver.dt;
        (0..n)
            .map(|k| {
                let t = if n == 1 {
                    a
                } else {
                    a + (b - a) * k as f64 / (n - 1) as f64
                };
                (((t / dt).round() as u64) as f64 * dt).min(self.cauchy.horizon)
            })
            .collect()
    }

    pub fn x0(&self) -> f64 {
        self.solver.x0.unwrap_or(-self.cauchy.period / 2.0)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            n_x: self.solver.n_x,
            dt: self.solver.dt,
            scheme: self.solver.scheme,
            t_samples: self.output_times(),
            x0: self.solver.x0,
        }
    }

    pub fn validate(&self, origin: &str) -> Result<()> {
        let data = self
            .cauchy_data()
            .map_err(|e| HarnessError::config(origin, e.to_string()))?;
        let highest = data
            .coeffs
            .keys()
            .map(|j| j.unsigned_abs())
            .max()
            .unwrap_or(0);
        self.solver_config()
            .validate(highest)
            .map_err(|e| HarnessError::config(origin, e.to_string()))?;
        let g = &self.grid;
        let [a, b] = self.t_range();
        if !(a.is_finite() && b.is_finite() && 0.0 <= a && a <= b && b <= self.cauchy.horizon) {
            return Err(HarnessError::config(
                origin,
                format!(
                    "t_range [{a}, {b}] is not inside [0, {}]",
                    self.cauchy.horizon
                ),
            ));
        }
        if g.n_x_out == 0 || g.n_t_out == 0 {
            return Err(HarnessError::config(
                origin,
                "output grid must be non-empty",
            ));
        }
        if g.n_x_out > self.solver.n_x || !self.solver.n_x.is_multiple_of(g.n_x_out) {
            return Err(HarnessError::config(
                origin,
                format!(
                    "n_x_out = {} must divide the solver grid n_x = {}",
                    g.n_x_out, self.solver.n_x
                ),
            ));
        }
        if !(g.peak_threshold > 1.0) {
            return Err(HarnessError::config(origin, "peak_threshold must exceed 1"));
        }
        if self.outputs.formats.is_empty() && !self.outputs.gnuplot {
            return Err(HarnessError::config(origin, "no output format selected"));
        }
        Ok(())
    }
}

mod coeff_map {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<i64, (f64, f64)>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_map(
            map.iter()
                .map(|(j, (re, im))| (j.to_string(), format!("{re:?},{im:?}"))),
        )
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<i64, (f64, f64)>, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(d)?;
        let mut out = BTreeMap::new();
        for (key, value) in raw {
            let j: i64 = key.trim().parse().map_err(|_| {
                D::Error::custom(format!("coefficient key {key:?} is not an integer"))
            })?;
            let (re, im) = value.split_once(',').ok_or_else(|| {
                D::Error::custom(format!("coefficient {key} = {value:?} is not \"re,im\""))
            })?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| {
                    D::Error::custom(format!("coefficient {key} = {value:?} is not \"re,im\""))
                })
            };
            if out.insert(j, (parse(re)?, parse(im)?)).is_some() {
                return Err(D::Error::custom(format!("coefficient {j} given twice")));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
mode = "fg_full"

[cauchy]
L = 6.0
epsilon = 1e-4
T0 = 10.0

[cauchy.coeffs]
1 = "0.5, 0"
-1 = "0.15,-0.2"

[grid]
n_x_out = 64
n_t_out = 11
"#;

    #[test]
    fn parses_aliases_and_defaults() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE, "sample").unwrap();
        assert_eq!(cfg.mode, Mode::FgFull);
        assert_eq!(cfg.cauchy.period, 6.0);
        assert_eq!(cfg.cauchy.p, 0.5);
        assert_eq!(cfg.cauchy.coeffs[&-1], (0.15, -0.2));
        assert_eq!(cfg.solver.n_x, 1024);
        assert_eq!(cfg.t_range(), [0.0, 10.0]);
        assert_eq!(cfg.outputs.formats, vec![Format::Csv, Format::Json]);
    }

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::from_toml_str(SAMPLE, "sample").unwrap();
        cfg.solver.x0 = Some(-1.0 / 3.0);
        cfg.grid.t_range = Some([0.1, 9.7]);
        cfg.cauchy.coeffs.insert(2, (1.0 / 7.0, -1e-17));
        let text = cfg.to_toml_string();
        let back = ExperimentConfig::from_toml_str(&text, "round trip").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            SAMPLE.replace("L = 6.0", "L = 6.283185307179586"),
            SAMPLE.replace("\"0.5, 0\"", "\"0.5\""),
            SAMPLE.replace("n_x_out = 64", "n_x_out = 100"),
            SAMPLE.replace("n_t_out = 11", "n_t_out = 11\nt_range = [0.0, 11.0]"),
            SAMPLE.replace("epsilon", "eps"),
            SAMPLE.replace("1 = \"0.5, 0\"", "0 = \"0.5, 0\""),
        ];
        for text in bad {
            let err = ExperimentConfig::from_toml_str(&text, "bad.toml").unwrap_err();
            assert_eq!(err.exit_code(), 2, "{err}");
            assert!(err.to_string().starts_with("bad.toml"));
        }
    }

    #[test]
    fn output_times_snap_to_steps() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE, "sample").unwrap();
        let ts = cfg.output_times();
        assert_eq!(ts.len(), 11);
        assert_eq!(ts[0], 0.0);
        assert!((ts[10] - 10.0).abs() < 1e-12);
        for t in ts {
            let steps = t / cfg.solver.dt;
            assert!((steps - steps.round()).abs() < 1e-6);
        }
    }

    #[test]
    fn overrides() {
        let mut cfg = ExperimentConfig::from_toml_str(SAMPLE, "sample").unwrap();
        cfg.apply(&Overrides {
            mode: Some(Mode::Compare),
            p: Some(0.25),
            grid: Some((32, 5)),
            out: Some("elsewhere".into()),
            gnuplot: true,
        });
        assert_eq!(cfg.mode, Mode::Compare);
        assert_eq!(cfg.cauchy.p, 0.25);
        assert_eq!((cfg.grid.n_x_out, cfg.grid.n_t_out), (32, 5));
        assert_eq!(cfg.outputs.dir, PathBuf::from("elsewhere"));
        assert!(cfg.outputs.gnuplot);
    }
}
