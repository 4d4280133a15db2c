//! One function per experiment; each returns its tables and a JSON summary.

use rayon::prelude::*;
use serde_json::{json, Value};

use oneatom::dynamics::{field_correlation, g2_tau, optical_spectrum, TauWindow};
use oneatom::fourstate::{beta_43, build_four_state, build_raman_variant, critical_numbers, FourStateParams};
use oneatom::model::ModelSpec;
use oneatom::semiclassical::sc_scan;
use oneatom::steady::{observables, solve_adaptive, steady_state, FluxRates, SteadyObservables, Truncation};
use oneatom::trajectories::{
    cavity_channels_for, ensemble_average, g2_from_clicks, heterodyne_spectrum, Detection, EnsembleConfig, EnsembleResult,
    Estimate, HeterodyneConfig, ModelFamily,
};
use oneatom::hilbert::DensityMatrix;
use oneatom::units::mhz;
use oneatom::zeeman::build_zeeman;

use crate::config::{G2Method, Grid, ModelKind, RunConfig};
use crate::error::CliError;
use crate::output::{Cell, Table};
use crate::params::{four_state, zeeman, FourStateSetup, ZeemanSetup};

pub struct Report {
    pub tables: Vec<Table>,
    pub params: Value,
    pub summary: Value,
}

fn grid_or(g: &Option<Grid>, path: &str, default: Grid) -> Result<Vec<f64>, CliError> {
    g.clone().unwrap_or(default).values(path)
}

fn range(start: f64, stop: f64, step: f64) -> Grid {
    Grid::Range { start, stop, step }
}

fn model_kind(c: &RunConfig, allowed: &[ModelKind], default: ModelKind) -> Result<ModelKind, CliError> {
    let m = c.model.unwrap_or(default);
    if !allowed.contains(&m) {
        return Err(CliError::config("model", &format!("{m:?} is not supported by {}", c.experiment.as_deref().unwrap_or(""))));
    }
    Ok(m)
}

fn local_maxima(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut k: Vec<usize> = (1..y.len().saturating_sub(1)).filter(|&k| y[k] > y[k - 1] && y[k] >= y[k + 1]).collect();
    k.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    k.into_iter().map(|k| x[k]).collect()
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Steady state of one four-state or Raman point, adaptive in the Fock
/// truncation unless a fixed one was configured.
struct SteadyPoint {
    obs: SteadyObservables,
    truncation: usize,
    n0f: f64,
    model: ModelSpec,
    rho: DensityMatrix,
}

fn build(kind: ModelKind, beta34: f64) -> impl Fn(&FourStateParams) -> oneatom::Result<ModelSpec> + Sync {
    move |p| match kind {
        ModelKind::Raman => build_raman_variant(p, beta34),
        _ => build_four_state(p),
    }
}

fn steady_point(setup: &FourStateSetup, kind: ModelKind, p: &FourStateParams) -> Result<SteadyPoint, CliError> {
    let n0f = critical_numbers(p)?.n0;
    let builder = build(kind, setup.beta34);
    if setup.fixed_truncation.is_some() {
        let model = builder(p)?;
        let rho = steady_state(&model)?;
        let obs = observables(&rho, &model, &FluxRates::from_params(p)?)?;
        return Ok(SteadyPoint {
            obs,
            truncation: p.fock_truncation,
            n0f,
            model,
            rho,
        });
    }
    let sol = solve_adaptive(p, builder, &Truncation::default())?;
    Ok(SteadyPoint {
        obs: sol.observables,
        truncation: sol.truncation,
        n0f,
        model: sol.model,
        rho: sol.solution.rho,
    })
}

fn pop(obs: &SteadyObservables, name: &str) -> Cell {
    obs.populations.get(name).copied().into()
}

pub fn sc_scan_exp(c: &RunConfig) -> Result<Report, CliError> {
    model_kind(c, &[ModelKind::FourState], ModelKind::FourState)?;
    let setup = four_state(&c.params, 0.0, 3.0)?;
    let i3 = grid_or(&c.grid.i3, "grid.i3", range(0.0, 10.0, 0.05))?;
    if i3.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::config("grid.i3", "must be strictly increasing"));
    }
    let fs = match &c.grid.f {
        Some(g) => g.values("grid.f")?,
        None => vec![setup.f],
    };
    let mut t = Table::new(&[
        "f",
        "I3",
        "alpha2_over_n0f",
        "alpha2_over_n0f_down",
        "pop_g3",
        "pop_g4",
        "pop_e3",
        "pop_e4",
        "hysteresis",
    ]);
    let mut per_f = Vec::new();
    let mut curves: Vec<Vec<f64>> = Vec::new();
    for &f in &fs {
        if !(f > 0.0 && f.is_finite()) {
            return Err(CliError::config("grid.f", &format!("must be positive, got {f}")));
        }
        let p = setup.at(f, 0.0, setup.i4)?;
        let scan = match sc_scan(&p, &i3, setup.i4) {
            Ok(s) => s,
            Err(e) => {
                for &x in &i3 {
                    t.push_failed(vec![f.into(), x.into()], &e.to_string());
                }
                curves.push(vec![f64::NAN; i3.len()]);
                continue;
            }
        };
        let mut y = Vec::new();
        for (k, &x) in i3.iter().enumerate() {
            match (&scan.up[k], &scan.down[k]) {
                (Ok(u), d) => {
                    let mut row: Vec<Cell> = vec![f.into(), x.into(), u.alpha2_over_n0.into()];
                    row.push(d.as_ref().ok().map(|d| d.alpha2_over_n0).into());
                    row.extend(u.populations.iter().map(|&v| Cell::from(v)));
                    row.push(usize::from(scan.hysteresis.contains(&x)).into());
                    t.push(row);
                    y.push(u.alpha2_over_n0);
                }
                (Err(e), _) => {
                    t.push_failed(vec![f.into(), x.into()], e);
                    y.push(f64::NAN);
                }
            }
        }
        let peak = y.iter().cloned().filter(|v| v.is_finite()).fold(0.0, f64::max);
        let peak_k = y.iter().position(|&v| v == peak).unwrap_or(0);
        let knee = y.iter().position(|&v| v > 1e-6 * peak).map(|k| i3[k]);
        let quench = (peak_k..y.len()).find(|&k| y[k] < 0.01 * peak).map(|k| i3[k]);
        per_f.push(json!({"f": f, "peak": peak, "peak_i3": i3[peak_k], "knee_i3": knee, "quench_i3": quench, "hysteresis_i3": scan.hysteresis}));
        curves.push(y);
    }
    let deviation = (1..curves.len())
        .flat_map(|j| curves[0].iter().zip(&curves[j]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    Ok(Report {
        tables: vec![t],
        params: to_json(&setup),
        summary: json!({
            "curves": per_f,
            "knee_definition": "first I3 with |alpha|^2 > 1e-6 of the peak",
            "quench_definition": "first I3 after the peak with |alpha|^2 < 1% of the peak",
            "max_scaling_deviation": if curves.len() > 1 { Some(deviation) } else { None },
        }),
    })
}

pub fn q_scan_exp(c: &RunConfig) -> Result<Report, CliError> {
    let kind = model_kind(c, &[ModelKind::FourState, ModelKind::Raman], ModelKind::FourState)?;
    let setup = four_state(&c.params, 1.0, 3.0)?;
    let i3 = grid_or(&c.grid.i3, "grid.i3", range(0.25, 10.0, 0.25))?;
    let points: Vec<Result<SteadyPoint, CliError>> = i3
        .par_iter()
        .map(|&x| steady_point(&setup, kind, &setup.at(setup.f, x, setup.i4)?))
        .collect();
    // semiclassical reference on the same grid
    let mut sc_failures = Vec::new();
    let sc: Option<Vec<f64>> = match kind {
        ModelKind::FourState if i3.windows(2).all(|w| w[1] > w[0]) => {
            let p = setup.at(setup.f, 0.0, setup.i4)?;
            sc_scan(&p, &i3, setup.i4).ok().map(|s| {
                s.up.iter()
                    .zip(&i3)
                    .map(|(r, x)| match r {
                        Ok(q) => q.alpha2_over_n0,
                        Err(e) => {
                            sc_failures.push(json!({"I3": x, "error": e}));
                            f64::NAN
                        }
                    })
                    .collect()
            })
        }
        _ => None,
    };
    let mut t = Table::new(&[
        "I3",
        "n_bar",
        "n_bar_over_n0f",
        "Q",
        "g2_0",
        "pop_g3",
        "pop_e3",
        "pop_g4",
        "pop_e4",
        "R",
        "alpha2_over_n0f",
        "truncation",
    ]);
    let mut peak = (f64::NEG_INFINITY, f64::NAN);
    let mut q_negative = Vec::new();
    for (k, (x, r)) in i3.iter().zip(&points).enumerate() {
        match r {
            Ok(s) => {
                let o = &s.obs;
                let n = o.n_bar / s.n0f;
                if n > peak.0 {
                    peak = (n, *x);
                }
                if o.mandel_q.is_some_and(|q| q < 0.0) {
                    q_negative.push(*x);
                }
                t.push(vec![
                    (*x).into(),
                    o.n_bar.into(),
                    n.into(),
                    o.mandel_q.into(),
                    o.g2_0.into(),
                    pop(o, "g3"),
                    pop(o, "e3"),
                    pop(o, "g4"),
                    pop(o, "e4"),
                    o.ratio_r.into(),
                    sc.as_ref().map(|v| v[k]).into(),
                    s.truncation.into(),
                ]);
            }
            Err(e) => t.push_failed(vec![(*x).into()], &e.to_string()),
        }
    }
    let p = setup.params()?;
    let cn = critical_numbers(&p)?;
    Ok(Report {
        tables: vec![t],
        params: to_json(&setup),
        summary: json!({
            "model": kind,
            "n0f": cn.n0,
            "C1": cn.C1,
            "beta_43": beta_43(&p)?,
            "peak": {"I3": peak.1, "n_bar_over_n0f": peak.0},
            "q_negative_i3": q_negative,
            "mean_field_failures": sc_failures,
        }),
    })
}

pub fn ratio_scan_exp(c: &RunConfig) -> Result<Report, CliError> {
    let kind = model_kind(c, &[ModelKind::FourState, ModelKind::Raman], ModelKind::FourState)?;
    let setup = four_state(&c.params, 1.0, 3.0)?;
    let i3 = grid_or(&c.grid.i3, "grid.i3", range(0.25, 10.0, 0.25))?;
    let beta = beta_43(&setup.params()?)?;
    let limit = beta / (1.0 - beta);
    let points: Vec<_> = i3
        .par_iter()
        .map(|&x| steady_point(&setup, kind, &setup.at(setup.f, x, setup.i4)?))
        .collect();
    let mut t = Table::new(&["I3", "R", "R_limit", "n_bar", "pop_e3", "truncation"]);
    for (x, r) in i3.iter().zip(points) {
        match r {
            Ok(s) => t.push(vec![
                (*x).into(),
                s.obs.ratio_r.into(),
                limit.into(),
                s.obs.n_bar.into(),
                pop(&s.obs, "e3"),
                s.truncation.into(),
            ]),
            Err(e) => t.push_failed(vec![(*x).into()], &e.to_string()),
        }
    }
    Ok(Report {
        tables: vec![t],
        params: to_json(&setup),
        summary: json!({"model": kind, "beta_43": beta, "R_limit": limit, "R_definition": "kappa*n_bar / (gamma43 * pop_e3), cavity flux taken as kappa*n_bar"}),
    })
}

pub fn scaling_sweep_exp(c: &RunConfig) -> Result<Report, CliError> {
    let kind = model_kind(c, &[ModelKind::FourState, ModelKind::Raman], ModelKind::FourState)?;
    let setup = four_state(&c.params, 3.0, 3.0)?;
    let fs = grid_or(&c.grid.f, "grid.f", Grid::Values(vec![1.0 / 99.0, 0.1, 1.0, 10.0, 100.0, 1000.0, 2500.0]))?;
    if let Some(f) = fs.iter().find(|f| !(**f > 0.0)) {
        return Err(CliError::config("grid.f", &format!("must be positive, got {f}")));
    }
    let points: Vec<_> = fs
        .par_iter()
        .map(|&f| steady_point(&setup, kind, &setup.at(f, setup.i3, setup.i4)?))
        .collect();
    let mut t = Table::new(&["f", "n0f", "n_bar", "n_bar_over_n0f", "Q", "g2_0", "R", "R_limit", "truncation"]);
    for (f, r) in fs.iter().zip(points) {
        match r {
            Ok(s) => {
                let beta = s.obs.beta_43;
                t.push(vec![
                    (*f).into(),
                    s.n0f.into(),
                    s.obs.n_bar.into(),
                    (s.obs.n_bar / s.n0f).into(),
                    s.obs.mandel_q.into(),
                    s.obs.g2_0.into(),
                    s.obs.ratio_r.into(),
                    (beta / (1.0 - beta)).into(),
                    s.truncation.into(),
                ]);
            }
            Err(e) => t.push_failed(vec![(*f).into()], &e.to_string()),
        }
    }
    Ok(Report {
        tables: vec![t],
        params: to_json(&setup),
        summary: json!({"model": kind, "I3": setup.i3, "I4": setup.i4}),
    })
}

pub fn rabi_scan_exp(c: &RunConfig) -> Result<Report, CliError> {
    let kind = model_kind(c, &[ModelKind::FourState, ModelKind::Raman], ModelKind::FourState)?;
    let setup = four_state(&c.params, 0.1, 3.0)?;
    let d3 = grid_or(&c.grid.delta3_mhz, "grid.delta3_mhz", range(-40.0, 40.0, 0.5))?;
    let points: Vec<_> = d3
        .par_iter()
        .map(|&d| {
            let mut p = setup.params()?;
            p.delta3 = mhz(d);
            steady_point(&setup, kind, &p)
        })
        .collect();
    let mut t = Table::new(&["delta3_MHz", "n_bar", "n_bar_over_n0f", "truncation"]);
    let mut y = Vec::new();
    for (d, r) in d3.iter().zip(points) {
        match r {
            Ok(s) => {
                y.push(s.obs.n_bar);
                t.push(vec![(*d).into(), s.obs.n_bar.into(), (s.obs.n_bar / s.n0f).into(), s.truncation.into()]);
            }
            Err(e) => {
                y.push(f64::NAN);
                t.push_failed(vec![(*d).into()], &e.to_string());
            }
        }
    }
    Ok(Report {
        tables: vec![t],
        params: to_json(&setup),
        summary: json!({"model": kind, "local_maxima_MHz_by_height": local_maxima(&d3, &y)}),
    })
}

pub fn spectrum_exp(c: &RunConfig) -> Result<Report, CliError> {
    let kind = model_kind(c, &[ModelKind::FourState, ModelKind::Raman], ModelKind::FourState)?;
    let setup = four_state(&c.params, 1.0, 3.0)?;
    let s = steady_point(&setup, kind, &setup.params()?)?;
    let corr = field_correlation(&s.model, &s.rho, &TauWindow::default())?;
    let spec = optical_spectrum(&corr)?;
    let peak = spec.phi.iter().cloned().fold(0.0, f64::max);
    let mut t = Table::new(&["nu_MHz", "phi", "phi_over_peak"]);
    for (nu, phi) in spec.freqs.iter().zip(&spec.phi) {
        t.push(vec![(*nu).into(), (*phi).into(), (phi / peak).into()]);
    }
    let maxima: Vec<f64> = local_maxima(&spec.freqs, &spec.phi)
        .into_iter()
        .filter(|nu| nu.abs() <= 60.0)
        .collect();
    let mut summary = json!({
        "model": kind,
        "n_bar": s.obs.n_bar,
        "integral": spec.integral(),
        "truncation": s.truncation,
        "window": corr.window,
        "bin_width_MHz": spec.bin_width(),
        "local_maxima_MHz_by_height": maxima,
        "convention": "phi(nu) = 2 Re int_0^inf <a+(0)a(tau)> exp(-2 pi i nu tau) dtau, integral over nu equals n_bar",
    });
    let mut tables = vec![t];
    let tc = &c.trajectories;
    if tc.heterodyne.unwrap_or(false) {
        let p = setup.params()?;
        let lo = tc.lo_flux.unwrap_or(1.0);
        if !(lo > 0.0) {
            return Err(CliError::config("trajectories.lo_flux", "must be positive"));
        }
        let defaults = HeterodyneConfig::default();
        let cfg = HeterodyneConfig {
            lo_flux: Some(lo * p.kappa),
            segment: tc.segment_us.unwrap_or(defaults.segment),
            span: tc.span_mhz.unwrap_or(defaults.span),
            n_traj: tc.n_traj.unwrap_or(defaults.n_traj),
            t_max: tc.t_max.unwrap_or(defaults.t_max),
            t_start: tc.t_start.unwrap_or(defaults.t_start),
            ..defaults
        };
        let het = heterodyne_spectrum(&s.model, &cfg, tc.seed.unwrap_or(0))?;
        let mut h = Table::new(&["nu_MHz", "phi", "se"]).with_suffix("heterodyne");
        for k in 0..het.se.len() {
            h.push(vec![het.spectrum.freqs[k].into(), het.spectrum.phi[k].into(), het.se[k].into()]);
        }
        let hp = &het.spectrum;
        let k = (0..hp.phi.len()).max_by(|&a, &b| hp.phi[a].total_cmp(&hp.phi[b])).unwrap_or(0);
        let reg_k = (0..spec.phi.len()).max_by(|&a, &b| spec.phi[a].total_cmp(&spec.phi[b])).unwrap_or(0);
        summary["heterodyne"] = json!({
            "segments": het.segments,
            "lo_flux": het.lo_flux,
            "click_rate": het.click_rate,
            "bin_width_MHz": hp.bin_width(),
            "peak_MHz": hp.freqs.get(k),
            "regression_peak_MHz": spec.freqs.get(reg_k),
        });
        tables.push(h);
    }
    Ok(Report {
        tables,
        params: to_json(&setup),
        summary,
    })
}

fn detection(c: &RunConfig) -> Detection {
    match c.trajectories.detection.as_deref() {
        None | Some("pooled") => Detection::Pooled,
        Some(m) => Detection::Mode(m.to_string()),
    }
}

fn ensemble_cfg(c: &RunConfig, n_traj: usize, t_max: f64, t_start: f64, taus: Vec<f64>) -> Result<EnsembleConfig, CliError> {
    let t = &c.trajectories;
    let cfg = EnsembleConfig {
        n_traj: t.n_traj.unwrap_or(n_traj),
        t_max: t.t_max.unwrap_or(t_max),
        t_start: t.t_start.unwrap_or(t_start),
        seed_base: t.seed.unwrap_or(0),
        detection: detection(c),
        taus,
        keep_records: t.bin_ns.is_some(),
        ..Default::default()
    };
    if cfg.n_traj == 0 {
        return Err(CliError::config("trajectories.n_traj", "must be at least 1"));
    }
    if !(cfg.t_max > cfg.t_start && cfg.t_start >= 0.0) {
        return Err(CliError::config("trajectories.t_max", "need t_max > t_start >= 0"));
    }
    Ok(cfg)
}

fn estimate(e: &Estimate) -> Value {
    json!({"mean": e.mean, "se": e.se})
}

fn ensemble_summary(r: &EnsembleResult) -> Value {
    json!({
        "n_traj": r.n_traj,
        "failed": r.failed,
        "n_bar": r.n_bar.iter().map(|(k, v)| (k.clone(), estimate(v))).collect::<serde_json::Map<_, _>>(),
        "n_bar_average": estimate(&r.n_bar_average),
        "g2_zero": estimate(&r.g2_zero),
        "click_rate": estimate(&r.click_rate),
        "populations": r.populations.iter().map(|(k, v)| (k.clone(), estimate(v))).collect::<serde_json::Map<_, _>>(),
        "runs": r.runs,
    })
}

/// Click-coincidence histogram of the kept records.
fn coincidences(c: &RunConfig, model: &ModelSpec, r: &EnsembleResult, key: f64, table: &mut Table, t_start: f64) -> Value {
    let Some(bin) = c.trajectories.bin_ns else { return Value::Null };
    let window = c.trajectories.window_ns.unwrap_or(500.0) * 1e-3;
    let modes = match detection(c) {
        Detection::Pooled => model.mode_names(),
        Detection::Mode(m) => vec![m],
    };
    let labels: Vec<String> = cavity_channels_for(model, &modes)
        .into_iter()
        .map(|i| model.channels()[i].label.clone())
        .collect();
    match g2_from_clicks(&r.records, &labels, bin * 1e-3, window, t_start) {
        Ok(h) => {
            let h = match c.trajectories.smooth_ns {
                Some(s) => h.smoothed(s * 1e-3),
                None => h,
            };
            for k in 0..h.taus.len() {
                table.push(vec![key.into(), h.taus[k].into(), h.g2[k].into(), h.se[k].into(), h.pairs[k].into()]);
            }
            json!({"clicks": h.clicks})
        }
        Err(e) => {
            table.push_failed(vec![key.into()], &e.to_string());
            json!({"error": e.to_string()})
        }
    }
}

pub fn g2_exp(c: &RunConfig) -> Result<Report, CliError> {
    let kind = model_kind(c, &[ModelKind::FourState, ModelKind::Raman, ModelKind::Zeeman], ModelKind::FourState)?;
    let default_method = if kind == ModelKind::Zeeman { G2Method::Trajectories } else { G2Method::Regression };
    let method = c.trajectories.method.unwrap_or(default_method);
    let mut hist = Table::new(&["point", "tau_us", "g2", "se", "pairs"]).with_suffix("coincidence");
    match (kind, method) {
        (ModelKind::Zeeman, G2Method::Regression) => Err(CliError::config(
            "trajectories.method",
            "the Zeeman model is time dependent; use trajectories",
        )),
        (ModelKind::Zeeman, G2Method::Trajectories) => {
            let setup = zeeman(&c.params, 0.17)?;
            let xs = grid_or(&c.grid.x, "grid.x", Grid::Values(vec![setup.x]))?;
            let taus = grid_or(&c.grid.tau_us, "grid.tau_us", range(0.0, 0.5, 0.01))?;
            let cfg = ensemble_cfg(c, 20, 40.0, 5.0, taus)?;
            let mut t = Table::new(&["x", "tau_us", "g2", "se", "count"]);
            let mut per_x = Vec::new();
            for &x in &xs {
                let family = zeeman_family(&setup, x);
                match ensemble_average(&family, &cfg) {
                    Ok(r) => {
                        if let Some(g) = &r.g2_curve {
                            for k in 0..g.taus.len() {
                                t.push(vec![x.into(), g.taus[k].into(), g.g2[k].into(), g.se[k].into(), g.counts[k].into()]);
                            }
                        }
                        let model = build_zeeman(&setup.at(x))?;
                        let coinc = coincidences(c, &model, &r, x, &mut hist, cfg.t_start);
                        let mut s = ensemble_summary(&r);
                        s["x"] = json!(x);
                        s["coincidences"] = coinc;
                        per_x.push(s);
                    }
                    Err(e) => t.push_failed(vec![x.into()], &e.to_string()),
                }
            }
            let mut tables = vec![t];
            if c.trajectories.bin_ns.is_some() {
                tables.push(hist);
            }
            Ok(Report {
                tables,
                params: to_json(&setup),
                summary: json!({"model": kind, "method": method, "detection": cfg.detection, "points": per_x,
                    "g2_estimator": "click-conditioned <N>(t_c + tau)/<N>; g2_zero from time averages of N(N-1)"}),
            })
        }
        (_, G2Method::Regression) => {
            let setup = four_state(&c.params, 1.0, 3.0)?;
            let s = steady_point(&setup, kind, &setup.params()?)?;
            let taus = grid_or(&c.grid.tau_us, "grid.tau_us", range(0.0, 1.0, 0.002))?;
            let series = g2_tau(&s.model, &s.rho, &taus)?;
            let mut t = Table::new(&["tau_us", "g2"]);
            for (tau, v) in series.taus.iter().zip(&series.values) {
                t.push(vec![(*tau).into(), v.re.into()]);
            }
            Ok(Report {
                tables: vec![t],
                params: to_json(&setup),
                summary: json!({"model": kind, "method": method, "n_bar": s.obs.n_bar, "g2_0": s.obs.g2_0, "truncation": s.truncation}),
            })
        }
        (_, G2Method::Trajectories) => {
            let setup = four_state(&c.params, 1.0, 3.0)?;
            let s = steady_point(&setup, kind, &setup.params()?)?;
            let taus = grid_or(&c.grid.tau_us, "grid.tau_us", range(0.0, 0.5, 0.01))?;
            let cfg = ensemble_cfg(c, 100, 20.0, 1.0, taus)?;
            let r = ensemble_average(&ModelFamily::fixed(s.model.clone()), &cfg)?;
            let mut t = Table::new(&["I3", "tau_us", "g2", "se", "count"]);
            if let Some(g) = &r.g2_curve {
                for k in 0..g.taus.len() {
                    t.push(vec![setup.i3.into(), g.taus[k].into(), g.g2[k].into(), g.se[k].into(), g.counts[k].into()]);
                }
            }
            let coinc = coincidences(c, &s.model, &r, setup.i3, &mut hist, cfg.t_start);
            let z = |e: &Estimate, want: Option<f64>| want.map(|w| json!({"steady": w, "z": e.z_score(w)}));
            let e3 = r.populations.get("pop_e3").map(|e| z(e, s.obs.populations.get("e3").copied()));
            let mut summary = ensemble_summary(&r);
            summary["model"] = to_json(&kind);
            summary["truncation"] = json!(s.truncation);
            summary["coincidences"] = coinc;
            summary["steady_comparison"] = json!({
                "n_bar": z(&r.n_bar_average, Some(s.obs.n_bar)),
                "pop_e3": e3,
                "g2_zero": z(&r.g2_zero, s.obs.g2_0),
            });
            let mut tables = vec![t];
            if c.trajectories.bin_ns.is_some() {
                tables.push(hist);
            }
            Ok(Report {
                tables,
                params: to_json(&setup),
                summary,
            })
        }
    }
}

fn zeeman_family(setup: &ZeemanSetup, x: f64) -> ModelFamily {
    let params = setup.at(x);
    if setup.velocity {
        ModelFamily::zeeman_velocity(params)
    } else {
        ModelFamily::Zeeman { params, velocity: None }
    }
}

pub fn zeeman_io_exp(c: &RunConfig) -> Result<Report, CliError> {
    let kind = model_kind(c, &[ModelKind::Zeeman, ModelKind::FourState], ModelKind::Zeeman)?;
    let xs = grid_or(&c.grid.x, "grid.x", range(0.0, 1.0, 0.1))?;
    if kind == ModelKind::FourState {
        let mut t = Table::new(&["x", "I3", "n_bar", "g2_0", "truncation"]);
        // surrogate: γ34 reduced to mimic the slower Zeeman recycling
        let mut pc = c.params.clone();
        pc.gamma34_scale.get_or_insert(0.07);
        pc.i4.get_or_insert(13.0);
        let setup = four_state(&pc, 0.0, 13.0)?;
        let points: Vec<_> = xs
            .par_iter()
            .map(|&x| {
                let i3 = 9.0 * x * setup.i4 / 7.0;
                steady_point(&setup, kind, &setup.at(setup.f, i3, setup.i4)?)
            })
            .collect();
        for (x, r) in xs.iter().zip(points) {
            let i3 = 9.0 * x * setup.i4 / 7.0;
            match r {
                Ok(s) => t.push(vec![(*x).into(), i3.into(), s.obs.n_bar.into(), s.obs.g2_0.into(), s.truncation.into()]),
                Err(e) => t.push_failed(vec![(*x).into(), i3.into()], &e.to_string()),
            }
        }
        return Ok(Report {
            tables: vec![t],
            params: to_json(&setup),
            summary: json!({"model": kind, "gamma34_scale": pc.gamma34_scale}),
        });
    }
    let mut pc = c.params.clone();
    if pc.theta.is_none() && pc.velocity.is_none() {
        pc.velocity = Some(true);
    }
    let setup = zeeman(&pc, 0.0)?;
    let cfg = ensemble_cfg(c, 20, 100.0, 5.0, Vec::new())?;
    let mut t = Table::new(&["x", "I3", "n_bar_a", "se_a", "n_bar_b", "se_b", "n_bar", "se"]);
    let mut runs = Vec::new();
    for &x in &xs {
        let i3 = 9.0 * x * setup.i4 / 7.0;
        match ensemble_average(&zeeman_family(&setup, x), &cfg) {
            Ok(r) => {
                let m = |k: &str| r.n_bar.get(k).copied();
                let (a, b) = (m("a"), m("b"));
                t.push(vec![
                    x.into(),
                    i3.into(),
                    a.map(|e| e.mean).into(),
                    a.map(|e| e.se).into(),
                    b.map(|e| e.mean).into(),
                    b.map(|e| e.se).into(),
                    r.n_bar_average.mean.into(),
                    r.n_bar_average.se.into(),
                ]);
                runs.push(json!({"x": x, "runs": r.runs}));
            }
            Err(e) => t.push_failed(vec![x.into(), i3.into()], &e.to_string()),
        }
    }
    Ok(Report {
        tables: vec![t],
        params: to_json(&setup),
        summary: json!({"model": kind, "velocity_ensemble": setup.velocity, "n_traj": cfg.n_traj, "t_max": cfg.t_max, "per_point_runs": runs}),
    })
}
