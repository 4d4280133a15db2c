//! Optical spectrum from simulated heterodyne detection of the cavity output.
//!
//! The cavity collapse operator c = √(2κ)a is replaced by c + β(t) with
//! β = √F e^{−iΔt}; the no-jump evolution gains −iβ*c − (i/2)F so the
//! ensemble still follows the same master equation. The click record then
//! carries a beat note at Δ − ω_field, whose power spectrum above the shot
//! noise floor F is 2κF·Φ(ν).

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cavity_channels_for, ground_vacuum, run_trajectory_with, LocalOscillator, Seed, TrajectoryOptions};
use crate::dynamics::{Normalization, Spectrum};
use crate::error::{Error, Result};
use crate::hilbert::StateVector;
use crate::model::{ChannelKind, ModelSpec};
use crate::ode::Tolerances;
use crate::units::mhz;

#[derive(Clone, Debug)]
pub struct HeterodyneConfig {
    /// Local-oscillator photon flux (1/μs); `None` uses the decay rate κ of
    /// the detected mode.
    pub lo_flux: Option<f64>,
    /// Oscillator offset Δ (rad/μs), rounded to a multiple of the
    /// frequency resolution.
    pub shift: f64,
    /// Cavity mode beaten against the oscillator; first mode if `None`.
    pub mode: Option<String>,
    /// Length of one periodogram segment (μs); the resolution is 1/segment MHz.
    pub segment: f64,
    /// Half-width of the reported frequency window (MHz).
    pub span: f64,
    pub n_traj: usize,
    pub t_max: f64,
    pub t_start: f64,
    pub psi0: Option<StateVector>,
    pub tol: Tolerances,
}

impl Default for HeterodyneConfig {
    fn default() -> Self {
        Self {
            lo_flux: None,
            shift: mhz(150.0),
            mode: None,
            segment: 1.0,
            span: 40.0,
            n_traj: 16,
            t_max: 500.0,
            t_start: 5.0,
            psi0: None,
            tol: Tolerances {
                rtol: 1e-6,
                atol: 1e-8,
                ..Tolerances::default()
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeterodyneSpectrum {
    /// Φ(ν) in the regression convention (∫Φ dν = n̄).
    pub spectrum: Spectrum,
    /// Standard error of Φ per bin from the spread over segments.
    pub se: Vec<f64>,
    pub segments: usize,
    pub lo_flux: f64,
    /// Mean click rate on the heterodyne channel (1/μs).
    pub click_rate: f64,
}

/// Simulated heterodyne spectrum of a cavity mode.
pub fn heterodyne_spectrum(model: &ModelSpec, cfg: &HeterodyneConfig, seed: u64) -> Result<HeterodyneSpectrum> {
    if let Some(f) = cfg.lo_flux {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::Domain(format!("local oscillator flux must be positive, got {f}")));
        }
    }
    if !(cfg.segment > 0.0 && cfg.t_max - cfg.t_start >= cfg.segment && cfg.t_start >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "segment",
            reason: format!(
                "need 0 < segment <= t_max - t_start, got {} and [{}, {}]",
                cfg.segment, cfg.t_start, cfg.t_max
            ),
        });
    }
    if cfg.n_traj == 0 {
        return Err(Error::InvalidParameter {
            name: "n_traj",
            reason: "need at least one trajectory".into(),
        });
    }
    let modes: Vec<String> = match &cfg.mode {
        Some(m) => vec![m.clone()],
        None => model.mode_names().into_iter().take(1).collect(),
    };
    let channel = *cavity_channels_for(model, &modes)
        .first()
        .ok_or_else(|| Error::Domain("model has no cavity channel to heterodyne".into()))?;
    // κ from c†c = 2κ a†a
    let kappa = match model.channels()[channel].kind {
        ChannelKind::Cavity { .. } => {
            let c = model.channels()[channel].op.matrix();
            let n = model.observable(&format!("n_{}", modes[0]))?.matrix();
            let cc = c.adjoint().matmul(c);
            let (i, _, v) = n.iter().find(|(i, j, v)| i == j && v.re > 0.5).ok_or_else(|| {
                Error::Domain("mode truncation leaves no photon states".into())
            })?;
            cc.get(i, i).re / (2.0 * v.re)
        }
        ChannelKind::Atomic => unreachable!(),
    };
    let flux = cfg.lo_flux.unwrap_or(kappa);
    let df = 1.0 / cfg.segment;
    let f_lo = (cfg.shift / TAU / df).round() * df;
    let half = (cfg.span / df).ceil() as i64;
    if f_lo <= (half as f64 + 1.0) * df {
        return Err(Error::InvalidParameter {
            name: "shift",
            reason: format!("offset {f_lo} MHz must exceed the {} MHz window", cfg.span),
        });
    }
    let nus: Vec<f64> = (-half..=half).map(|j| j as f64 * df).collect();
    let lo = LocalOscillator {
        channel,
        flux,
        omega: TAU * f_lo,
    };
    let opts = TrajectoryOptions {
        t_start: cfg.t_start,
        local_oscillator: Some(lo),
        tol: cfg.tol,
        ..Default::default()
    };
    let psi0 = cfg.psi0.clone().unwrap_or_else(|| ground_vacuum(model));
    let label = model.channels()[channel].label.clone();
    let n_seg = ((cfg.t_max - cfg.t_start) / cfg.segment).floor() as usize;

    // per trajectory: periodograms of every segment and the click count
    let runs: Vec<Result<(Vec<Vec<f64>>, usize)>> = (0..cfg.n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let rec = run_trajectory_with(model, &psi0, cfg.t_max, Seed::new(seed, i), &opts)?;
            let times: Vec<f64> = rec.clicks.iter().filter(|c| c.channel == label).map(|c| c.time).collect();
            let mut out = Vec::with_capacity(n_seg);
            let mut n_clicks = 0;
            for s in 0..n_seg {
                let t0 = cfg.t_start + s as f64 * cfg.segment;
                let t1 = t0 + cfg.segment;
                let seg: Vec<f64> = times.iter().filter(|&&t| t >= t0 && t < t1).map(|t| t - t0).collect();
                n_clicks += seg.len();
                // |Σ e^{−2πi f t}|²/T at f = f_lo + ν; the mean rate has no
                // weight at these harmonics of 1/T
                let p = nus
                    .iter()
                    .map(|nu| {
                        let w = -TAU * (f_lo + nu);
                        let z: C64 = seg.iter().map(|&t| C64::from_polar(1.0, w * t)).sum();
                        z.norm_sqr() / cfg.segment
                    })
                    .collect();
                out.push(p);
            }
            Ok((out, n_clicks))
        })
        .collect();
    let mut periodograms = Vec::new();
    let mut clicks = 0;
    for r in runs {
        let (p, c) = r?;
        periodograms.extend(p);
        clicks += c;
    }
    let m = periodograms.len() as f64;
    let rate = clicks as f64 / (m * cfg.segment);
    let norm = 2.0 * kappa * flux;
    let mut phi = Vec::with_capacity(nus.len());
    let mut se = Vec::with_capacity(nus.len());
    for j in 0..nus.len() {
        let mean = periodograms.iter().map(|p| p[j]).sum::<f64>() / m;
        let var = periodograms.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        phi.push((mean - rate) / norm);
        se.push((var / m).sqrt() / norm);
    }
    Ok(HeterodyneSpectrum {
        spectrum: Spectrum {
            freqs: nus,
            phi,
            normalization: Normalization::Absolute,
        },
        se,
        segments: periodograms.len(),
        lo_flux: flux,
        click_rate: rate,
    })
}
