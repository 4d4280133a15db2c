//! Trajectory ensembles and pooled statistics.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::g2::jackknife_se;
use super::{
    cavity_channels_for, ground_vacuum, run_trajectory_with, ConditionalSpec, JumpRecord, Seed, TrajectoryOptions,
};
use crate::error::{Error, Result};
use crate::hilbert::{Operator, StateVector};
use crate::model::ModelSpec;
use crate::ode::Tolerances;
use crate::zeeman::{build_zeeman, PhaseModel, VelocityAxes, ZeemanParams, MANIFOLDS};

/// Which cavity outputs count as detected photons.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Detection {
    /// Every cavity mode, without polarization discrimination.
    #[default]
    Pooled,
    Mode(String),
}

impl Detection {
    fn modes(&self, model: &ModelSpec) -> Vec<String> {
        match self {
            Detection::Pooled => model.mode_names(),
            Detection::Mode(m) => vec![m.clone()],
        }
    }
}

/// Source of per-run models.
#[derive(Clone, Debug)]
pub enum ModelFamily {
    /// The same model for every run.
    Fixed(Arc<ModelSpec>),
    /// Zeeman model; with `velocity`, every run draws fresh phases and a
    /// velocity uniform in [v_min, v_max] cm/s.
    Zeeman {
        params: ZeemanParams,
        velocity: Option<(f64, f64, VelocityAxes)>,
    },
}

impl ModelFamily {
    pub fn fixed(model: ModelSpec) -> Self {
        ModelFamily::Fixed(Arc::new(model))
    }

    /// Velocity ensemble over 10–20 cm/s on both axes.
    pub fn zeeman_velocity(params: ZeemanParams) -> Self {
        ModelFamily::Zeeman {
            params,
            velocity: Some((10.0, 20.0, VelocityAxes::Both)),
        }
    }

    fn model_for(&self, draw: Seed, shared: &Option<Arc<ModelSpec>>) -> Result<(Arc<ModelSpec>, BTreeMap<String, f64>)> {
        if let Some(m) = shared {
            return Ok((m.clone(), BTreeMap::new()));
        }
        match self {
            ModelFamily::Fixed(m) => Ok((m.clone(), BTreeMap::new())),
            ModelFamily::Zeeman { params, velocity } => {
                let mut p = params.clone();
                if let Some((lo, hi, axes)) = velocity {
                    p.phase_model = PhaseModel::random_velocity(&mut draw.rng(), *lo, *hi, *axes);
                }
                let mut meta = BTreeMap::new();
                if let PhaseModel::ConstantVelocity {
                    theta3x,
                    theta3z,
                    theta4x,
                    theta4z,
                    vx,
                    vz,
                } = p.phase_model
                {
                    for (k, v) in [
                        ("theta3x", theta3x),
                        ("theta3z", theta3z),
                        ("theta4x", theta4x),
                        ("theta4z", theta4z),
                        ("vx", vx),
                        ("vz", vz),
                    ] {
                        meta.insert(k.to_string(), v);
                    }
                }
                Ok((Arc::new(build_zeeman(&p)?), meta))
            }
        }
    }

    /// One model for all runs when nothing is drawn per run.
    fn shared(&self) -> Result<Option<Arc<ModelSpec>>> {
        match self {
            ModelFamily::Fixed(m) => Ok(Some(m.clone())),
            ModelFamily::Zeeman { params, velocity: None } => Ok(Some(Arc::new(build_zeeman(params)?))),
            ModelFamily::Zeeman { .. } => Ok(None),
        }
    }

    fn is_zeeman(&self) -> bool {
        matches!(self, ModelFamily::Zeeman { .. })
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub t_max: f64,
    /// Burn-in; statistics use [t_start, t_max].
    pub t_start: f64,
    pub seed_base: u64,
    pub sample_dt: f64,
    pub detection: Detection,
    /// Delays for the click-conditioned g²(τ); empty to skip it.
    pub taus: Vec<f64>,
    /// Population observables to average; `None` picks the hyperfine
    /// manifolds for Zeeman families and every `pop_` observable otherwise.
    pub populations: Option<Vec<String>>,
    pub psi0: Option<StateVector>,
    pub keep_records: bool,
    pub tol: Tolerances,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_traj: 20,
            t_max: 100.0,
            t_start: 5.0,
            seed_base: 0,
            sample_dt: 1e-3,
            detection: Detection::Pooled,
            taus: Vec::new(),
            populations: None,
            psi0: None,
            keep_records: false,
            tol: super::trajectory_tolerances(),
        }
    }
}

/// Mean with its standard error over trajectories.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn from_runs(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let se = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, se }
    }

    /// |mean − target| in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.se
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct G2Curve {
    pub taus: Vec<f64>,
    pub g2: Vec<f64>,
    pub se: Vec<f64>,
    /// Clicks that opened a conditional window, per delay.
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: Seed,
    pub clicks: usize,
    pub metadata: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub n_traj: usize,
    pub failed: usize,
    pub detection: Detection,
    /// ⟨a†a⟩ per mode.
    pub n_bar: BTreeMap<String, Estimate>,
    /// (Σ_modes n̄)/(number of modes).
    pub n_bar_average: Estimate,
    /// ⟨N⟩ of the detected modes.
    pub n_detected: Estimate,
    /// ⟨N(N−1)⟩/⟨N⟩² of the detected modes from time averages.
    pub g2_zero: Estimate,
    /// Click-conditioned ⟨N⟩(τ)/⟨N⟩.
    pub g2_curve: Option<G2Curve>,
    pub populations: BTreeMap<String, Estimate>,
    /// Detected clicks per μs.
    pub click_rate: Estimate,
    pub runs: Vec<RunMeta>,
    #[serde(skip)]
    pub records: Vec<JumpRecord>,
}

struct RunOutput {
    record: JumpRecord,
    means: BTreeMap<String, f64>,
    detected_clicks: usize,
}

const N_DET: &str = "N_detected";
const N2_DET: &str = "N(N-1)_detected";

/// Draws for run `i` come from a stream keyed apart from its jump stream.
fn draw_seed(seed_base: u64, i: u64) -> Seed {
    Seed::new(seed_base ^ 0x9E37_79B9_7F4A_7C15, i)
}

fn run_one(
    family: &ModelFamily,
    shared: &Option<Arc<ModelSpec>>,
    cfg: &EnsembleConfig,
    i: u64,
) -> Result<RunOutput> {
    let seed = Seed::new(cfg.seed_base, i);
    let (model, metadata) = family.model_for(draw_seed(cfg.seed_base, i), shared)?;
    let modes = cfg.detection.modes(&model);
    let channels = cavity_channels_for(&model, &modes);
    if channels.is_empty() {
        return Err(Error::Domain(format!("no cavity channel for detection {:?}", cfg.detection)));
    }
    let mut observables: Vec<(String, Operator)> = Vec::new();
    let mut n_det = Operator::zero(model.space());
    for m in model.mode_names() {
        let n = model.observable(&format!("n_{m}"))?.clone();
        if modes.contains(&m) {
            n_det = n_det.add(&n);
        }
        observables.push((format!("n_{m}"), n));
    }
    let pops: Vec<String> = match &cfg.populations {
        Some(p) => p.clone(),
        None if family.is_zeeman() => MANIFOLDS.iter().map(|m| format!("pop_{}", m.name())).collect(),
        None => model.observables().keys().filter(|k| k.starts_with("pop_")).cloned().collect(),
    };
    for p in &pops {
        observables.push((p.clone(), model.observable(p)?.clone()));
    }
    // modes commute, so :N²: = N² − N
    let n2_det = n_det.mul(&n_det).sub(&n_det);
    observables.push((N_DET.into(), n_det.clone()));
    observables.push((N2_DET.into(), n2_det));

    let opts = TrajectoryOptions {
        t_start: cfg.t_start,
        sample_dt: Some(cfg.sample_dt),
        observables,
        conditional: (!cfg.taus.is_empty()).then(|| ConditionalSpec {
            taus: cfg.taus.clone(),
            channels: channels.clone(),
            observable: n_det,
        }),
        local_oscillator: None,
        tol: cfg.tol,
    };
    let default_psi;
    let psi0 = match &cfg.psi0 {
        Some(p) => p,
        None => {
            default_psi = ground_vacuum(&model);
            &default_psi
        }
    };
    let mut record = run_trajectory_with(&model, psi0, cfg.t_max, seed, &opts)?;
    record.metadata = metadata;
    let samples = record.samples.as_ref().expect("sampling enabled");
    let means = samples
        .names
        .iter()
        .map(|n| (n.clone(), samples.mean(n).unwrap_or(f64::NAN)))
        .collect();
    let labels: Vec<String> = channels.iter().map(|&k| model.channels()[k].label.clone()).collect();
    let detected_clicks = record.clicks_on(&labels).filter(|&t| t >= cfg.t_start).count();
    Ok(RunOutput {
        record,
        means,
        detected_clicks,
    })
}

/// Runs `cfg.n_traj` trajectories in parallel and pools them. Run i uses
/// jump stream (seed_base, i); results do not depend on the thread count.
pub fn ensemble_average(family: &ModelFamily, cfg: &EnsembleConfig) -> Result<EnsembleResult> {
    if cfg.n_traj == 0 {
        return Err(Error::InvalidParameter {
            name: "n_traj",
            reason: "need at least one trajectory".into(),
        });
    }
    if !(cfg.t_start >= 0.0 && cfg.t_start < cfg.t_max) {
        return Err(Error::InvalidParameter {
            name: "t_start",
            reason: format!("must lie in [0, t_max), got {}", cfg.t_start),
        });
    }
    let shared = family.shared()?;
    let outputs: Vec<Result<RunOutput>> = (0..cfg.n_traj as u64)
        .into_par_iter()
        .map(|i| run_one(family, &shared, cfg, i))
        .collect();
    let total = outputs.len();
    let mut ok = Vec::with_capacity(total);
    let mut first_err = None;
    for o in outputs {
        match o {
            Ok(r) => ok.push(r),
            Err(e) => {
                first_err.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let failed = total - ok.len();
    if failed * 10 > total || ok.is_empty() {
        return Err(Error::Ensemble {
            failed,
            total,
            first: first_err.unwrap_or_default(),
        });
    }
    pool(ok, failed, cfg)
}

fn pool(ok: Vec<RunOutput>, failed: usize, cfg: &EnsembleConfig) -> Result<EnsembleResult> {
    let n = ok.len();
    let series = |name: &str| -> Vec<f64> { ok.iter().map(|r| r.means[name]).collect() };
    let names: Vec<String> = ok[0].means.keys().cloned().collect();

    let mut n_bar = BTreeMap::new();
    let mut populations = BTreeMap::new();
    for name in &names {
        if let Some(mode) = name.strip_prefix("n_") {
            n_bar.insert(mode.to_string(), Estimate::from_runs(&series(name)));
        } else if name.starts_with("pop_") {
            populations.insert(name.clone(), Estimate::from_runs(&series(name)));
        }
    }
    let per_run_avg: Vec<f64> = ok
        .iter()
        .map(|r| {
            let modes: Vec<f64> = r.means.iter().filter(|(k, _)| k.starts_with("n_")).map(|(_, v)| *v).collect();
            modes.iter().sum::<f64>() / modes.len().max(1) as f64
        })
        .collect();

    let nd = series(N_DET);
    let nn = series(N2_DET);
    let sum_nd: f64 = nd.iter().sum();
    let sum_nn: f64 = nn.iter().sum();
    let g2_of = |snn: f64, snd: f64, m: f64| {
        let mean_n = snd / m;
        (snn / m) / (mean_n * mean_n)
    };
    let g2_zero = Estimate {
        mean: g2_of(sum_nn, sum_nd, n as f64),
        se: if n > 1 {
            let loo: Vec<f64> = (0..n).map(|i| g2_of(sum_nn - nn[i], sum_nd - nd[i], (n - 1) as f64)).collect();
            jackknife_se(&loo)
        } else {
            f64::NAN
        },
    };

    let g2_curve = if cfg.taus.is_empty() {
        None
    } else {
        let k_len = cfg.taus.len();
        let mut sums = vec![0.0; k_len];
        let mut counts = vec![0u64; k_len];
        for r in &ok {
            let c = r.record.conditional.as_ref().expect("conditional enabled");
            for k in 0..k_len {
                sums[k] += c.sums[k];
                counts[k] += c.counts[k];
            }
        }
        let value = |s: f64, c: f64, snd: f64, m: f64| (s / c) / (snd / m);
        let g2: Vec<f64> = (0..k_len)
            .map(|k| value(sums[k], counts[k] as f64, sum_nd, n as f64))
            .collect();
        let se = (0..k_len)
            .map(|k| {
                if n < 2 {
                    return f64::NAN;
                }
                let loo: Vec<f64> = ok
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let c = r.record.conditional.as_ref().unwrap();
                        value(
                            sums[k] - c.sums[k],
                            (counts[k] - c.counts[k]) as f64,
                            sum_nd - nd[i],
                            (n - 1) as f64,
                        )
                    })
                    .collect();
                jackknife_se(&loo)
            })
            .collect();
        Some(G2Curve {
            taus: cfg.taus.clone(),
            g2,
            se,
            counts,
        })
    };

    let span = cfg.t_max - cfg.t_start;
    let rates: Vec<f64> = ok.iter().map(|r| r.detected_clicks as f64 / span).collect();
    let runs = ok
        .iter()
        .map(|r| RunMeta {
            seed: r.record.seed,
            clicks: r.record.clicks.len(),
            metadata: r.record.metadata.clone(),
        })
        .collect();
    let records = if cfg.keep_records {
        ok.into_iter()
            .map(|mut r| {
                r.record.samples = None;
                r.record
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(EnsembleResult {
        n_traj: n,
        failed,
        detection: cfg.detection.clone(),
        n_bar,
        n_bar_average: Estimate::from_runs(&per_run_avg),
        n_detected: Estimate::from_runs(&nd),
        g2_zero,
        g2_curve,
        populations,
        click_rate: Estimate::from_runs(&rates),
        runs,
        records,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IoPoint {
    pub x: f64,
    pub n_bar: BTreeMap<String, Estimate>,
    pub n_bar_average: Estimate,
}

/// Input/output curve: one ensemble per pump point, `family_at(x)` giving
/// the family for pump strength x.
pub fn io_curve<F>(family_at: F, x_grid: &[f64], cfg: &EnsembleConfig) -> Result<Vec<IoPoint>>
where
    F: Fn(f64) -> Result<ModelFamily>,
{
    x_grid
        .iter()
        .map(|&x| {
            let r = ensemble_average(&family_at(x)?, cfg)?;
            Ok(IoPoint {
                x,
                n_bar: r.n_bar,
                n_bar_average: r.n_bar_average,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourstate::{build_four_state, FourStateParams};

    fn small_cfg() -> EnsembleConfig {
        EnsembleConfig {
            n_traj: 8,
            t_max: 6.0,
            t_start: 1.0,
            sample_dt: 2e-3,
            taus: vec![0.0, 0.01, 0.05],
            ..Default::default()
        }
    }

    #[test]
    fn dark_atom_gives_nothing() {
        let mut p = FourStateParams::cs_defaults();
        p.fock_truncation = 2;
        let m = build_four_state(&p).unwrap();
        let r = ensemble_average(&ModelFamily::fixed(m), &small_cfg()).unwrap();
        assert_eq!(r.click_rate.mean, 0.0);
        assert_eq!(r.n_bar["a"].mean, 0.0);
        assert!(r.runs.iter().all(|m| m.clicks == 0));
        assert!(r.g2_zero.mean.is_nan());
    }

    #[test]
    fn thread_count_does_not_matter() {
        let p = FourStateParams::cs_defaults().with_intensities(2.0, 3.0);
        let mut p = p;
        p.fock_truncation = 3;
        let fam = ModelFamily::fixed(build_four_state(&p).unwrap());
        let mut cfg = small_cfg();
        cfg.keep_records = true;
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| ensemble_average(&fam, &cfg).unwrap());
        let many = ensemble_average(&fam, &cfg).unwrap();
        assert_eq!(one.records, many.records);
        assert_eq!(one.n_bar["a"], many.n_bar["a"]);
        assert!(one.records.iter().any(|r| !r.clicks.is_empty()));
    }

    #[test]
    fn zero_trajectories_rejected() {
        let m = build_four_state(&FourStateParams::cs_defaults()).unwrap();
        let cfg = EnsembleConfig {
            n_traj: 0,
            ..small_cfg()
        };
        assert!(ensemble_average(&ModelFamily::fixed(m), &cfg).is_err());
    }
}
