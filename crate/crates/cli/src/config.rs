//! Run configuration: a TOML file, overridden field by field by flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    FourState,
    Raman,
    Zeeman,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum G2Method {
    Regression,
    Trajectories,
}

/// A grid given either as explicit values or as start/stop/step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn values(&self, path: &str) -> Result<Vec<f64>, CliError> {
        match *self {
            Grid::Values(ref v) => {
                if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                    return Err(CliError::config(path, "needs at least one finite value"));
                }
                Ok(v.clone())
            }
            Grid::Range { start, stop, step } => {
                if !(step > 0.0 && step.is_finite() && start.is_finite() && stop >= start) {
                    return Err(CliError::config(path, "needs step > 0 and stop >= start"));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                if n > 1_000_000 {
                    return Err(CliError::config(path, "more than a million points"));
                }
                Ok((0..=n).map(|k| start + step * k as f64).collect())
            }
        }
    }
}

impl std::str::FromStr for Grid {
    type Err = String;

    /// `a:b:step` or a comma-separated list.
    fn from_str(s: &str) -> Result<Self, String> {
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.len() {
            1 => Ok(Grid::Values(s.split(',').map(num).collect::<Result<_, _>>()?)),
            3 => Ok(Grid::Range {
                start: num(parts[0])?,
                stop: num(parts[1])?,
                step: num(parts[2])?,
            }),
            _ => Err(format!("expected start:stop:step or a comma list, got `{s}`")),
        }
    }
}

/// Physical parameters; rates in MHz (cycles), intensities in saturation
/// units. Unset fields take the Cs defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamConfig {
    pub g43_mhz: Option<f64>,
    pub g0_mhz: Option<f64>,
    pub kappa_mhz: Option<f64>,
    pub gamma_mhz: Option<f64>,
    pub i3: Option<f64>,
    pub i4: Option<f64>,
    /// Zeeman pump strength x = (7/9)(I3/I4); replaces i3 when set.
    pub x: Option<f64>,
    pub delta3_mhz: Option<f64>,
    pub delta4_mhz: Option<f64>,
    pub delta_ac_mhz: Option<f64>,
    /// Cavity length factor.
    pub f: Option<f64>,
    /// Raman repumping amplitude rate; defaults to γ34.
    pub beta34_mhz: Option<f64>,
    /// Multiplies γ34 in the four-state model.
    pub gamma34_scale: Option<f64>,
    /// Fixed Fock truncation; adaptive when unset (four-state and Raman).
    pub fock_truncation: Option<usize>,
    pub b_gauss: Option<f64>,
    /// Constant pump phase for the Zeeman model (rad).
    pub theta: Option<f64>,
    /// Zeeman velocity ensemble instead of a constant phase.
    pub velocity: Option<bool>,
    pub offresonant_e4: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub i3: Option<Grid>,
    pub delta3_mhz: Option<Grid>,
    pub x: Option<Grid>,
    pub f: Option<Grid>,
    pub tau_us: Option<Grid>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub n_traj: Option<usize>,
    pub t_max: Option<f64>,
    pub t_start: Option<f64>,
    pub seed: Option<u64>,
    /// `pooled` or a mode name (`a`, `b`).
    pub detection: Option<String>,
    pub method: Option<G2Method>,
    /// Coincidence histogram bin (ns) and window (ns).
    pub bin_ns: Option<f64>,
    pub window_ns: Option<f64>,
    pub smooth_ns: Option<f64>,
    pub heterodyne: Option<bool>,
    /// Local-oscillator flux in units of κ.
    pub lo_flux: Option<f64>,
    pub segment_us: Option<f64>,
    pub span_mhz: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<String>,
    pub model: Option<ModelKind>,
    /// Output prefix: `<output>.csv` and `<output>.json`.
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub params: ParamConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub trajectories: TrajectoryConfig,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Flags shared by every experiment; each one overrides the config file.
#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output prefix (writes PREFIX.csv and PREFIX.json).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweep points and trajectories.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,

    #[arg(long = "I3", alias = "i3")]
    pub i3: Option<f64>,
    #[arg(long = "I4", alias = "i4")]
    pub i4: Option<f64>,
    #[arg(long)]
    pub x: Option<f64>,
    #[arg(long)]
    pub f: Option<f64>,
    /// MHz
    #[arg(long, allow_hyphen_values = true)]
    pub delta3: Option<f64>,
    /// MHz
    #[arg(long, allow_hyphen_values = true)]
    pub delta4: Option<f64>,
    /// MHz
    #[arg(long, allow_hyphen_values = true)]
    pub delta_ac: Option<f64>,
    /// MHz
    #[arg(long)]
    pub beta34: Option<f64>,
    #[arg(long)]
    pub gamma34_scale: Option<f64>,
    #[arg(long)]
    pub fock: Option<usize>,
    /// Gauss
    #[arg(long)]
    pub b_field: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub velocity: bool,
    #[arg(long)]
    pub no_offresonant_e4: bool,

    #[arg(long, allow_hyphen_values = true)]
    pub i3_grid: Option<Grid>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta3_grid: Option<Grid>,
    #[arg(long)]
    pub x_grid: Option<Grid>,
    #[arg(long)]
    pub f_grid: Option<Grid>,
    #[arg(long)]
    pub tau_grid: Option<Grid>,

    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub t_start: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub detection: Option<String>,
    #[arg(long, value_enum)]
    pub method: Option<G2Method>,
    #[arg(long)]
    pub bin_ns: Option<f64>,
    #[arg(long)]
    pub window_ns: Option<f64>,
    #[arg(long)]
    pub smooth_ns: Option<f64>,
    /// Also simulate the heterodyne spectrum.
    #[arg(long)]
    pub heterodyne: bool,
    /// Local-oscillator flux in units of κ.
    #[arg(long)]
    pub lo_flux: Option<f64>,
    #[arg(long)]
    pub segment: Option<f64>,
    #[arg(long)]
    pub span: Option<f64>,
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

impl Flags {
    /// Loads the config file, if any, and applies the flags on top.
    pub fn resolve(&self, experiment: &str) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(e) = &c.experiment {
            if e != experiment {
                return Err(CliError::config(
                    "experiment",
                    &format!("config is for `{e}` but `{experiment}` was requested"),
                ));
            }
        }
        c.experiment = Some(experiment.to_string());
        set(&mut c.output, self.out.clone());
        set(&mut c.threads, self.threads);
        set(&mut c.model, self.model);

        let p = &mut c.params;
        set(&mut p.i3, self.i3);
        set(&mut p.i4, self.i4);
        set(&mut p.x, self.x);
        set(&mut p.f, self.f);
        set(&mut p.delta3_mhz, self.delta3);
        set(&mut p.delta4_mhz, self.delta4);
        set(&mut p.delta_ac_mhz, self.delta_ac);
        set(&mut p.beta34_mhz, self.beta34);
        set(&mut p.gamma34_scale, self.gamma34_scale);
        set(&mut p.fock_truncation, self.fock);
        set(&mut p.b_gauss, self.b_field);
        set(&mut p.theta, self.theta);
        if self.velocity {
            p.velocity = Some(true);
        }
        if self.no_offresonant_e4 {
            p.offresonant_e4 = Some(false);
        }

        let g = &mut c.grid;
        set(&mut g.i3, self.i3_grid.clone());
        set(&mut g.delta3_mhz, self.delta3_grid.clone());
        set(&mut g.x, self.x_grid.clone());
        set(&mut g.f, self.f_grid.clone());
        set(&mut g.tau_us, self.tau_grid.clone());

        let t = &mut c.trajectories;
        set(&mut t.n_traj, self.n_traj);
        set(&mut t.t_max, self.t_max);
        set(&mut t.t_start, self.t_start);
        set(&mut t.seed, self.seed);
        set(&mut t.detection, self.detection.clone());
        set(&mut t.method, self.method);
        set(&mut t.bin_ns, self.bin_ns);
        set(&mut t.window_ns, self.window_ns);
        set(&mut t.smooth_ns, self.smooth_ns);
        if self.heterodyne {
            t.heterodyne = Some(true);
        }
        set(&mut t.lo_flux, self.lo_flux);
        set(&mut t.segment_us, self.segment);
        set(&mut t.span_mhz, self.span);
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_forms() {
        let g: Grid = "0:1:0.25".parse().unwrap();
        assert_eq!(g.values("g").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g: Grid = "1,100,2500".parse().unwrap();
        assert_eq!(g.values("g").unwrap(), vec![1.0, 100.0, 2500.0]);
        assert!("1:2".parse::<Grid>().is_err());
        let bad = Grid::Range {
            start: 0.0,
            stop: 1.0,
            step: 0.0,
        };
        assert!(matches!(bad.values("grid.i3"), Err(CliError::Config(m)) if m.starts_with("grid.i3")));
    }

    #[test]
    fn toml_schema() {
        let c: RunConfig = toml::from_str(
            r#"
            experiment = "q-scan"
            model = "raman"
            [params]
            i4 = 2.0
            f = 100.0
            [grid]
            i3 = { start = 0.0, stop = 2.0, step = 0.5 }
            f = [1.0, 2.0]
            "#,
        )
        .unwrap();
        assert_eq!(c.model, Some(ModelKind::Raman));
        assert_eq!(c.grid.i3.unwrap().values("").unwrap().len(), 5);
        assert!(toml::from_str::<RunConfig>("[params]\nI5 = 1.0").is_err());
    }
}
