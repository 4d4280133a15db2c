//! Turns the text configuration into model parameters.

use serde::Serialize;

use oneatom::fourstate::{scale_cavity, FourStateParams};
use oneatom::units::mhz;
use oneatom::zeeman::{PhaseModel, ZeemanParams};

use crate::config::ParamConfig;
use crate::error::CliError;

fn finite(path: &str, v: Option<f64>, min: f64) -> Result<Option<f64>, CliError> {
    match v {
        Some(x) if !(x.is_finite() && x >= min) => Err(CliError::config(path, &format!("must be a finite number >= {min}, got {x}"))),
        _ => Ok(v),
    }
}

fn positive(path: &str, v: Option<f64>) -> Result<Option<f64>, CliError> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => Err(CliError::config(path, &format!("must be positive, got {x}"))),
        _ => Ok(v),
    }
}

/// Four-state (or Raman) parameters at f = 1 with the pump intensities set;
/// `f` is applied separately so sweeps over it can reuse the base.
#[derive(Clone, Debug, Serialize)]
pub struct FourStateSetup {
    pub base: FourStateParams,
    pub i3: f64,
    pub i4: f64,
    pub f: f64,
    /// Raman repumping amplitude rate (rad/μs).
    pub beta34: f64,
    pub fixed_truncation: Option<usize>,
}

impl FourStateSetup {
    /// Parameters for cavity factor `f` and pump intensities.
    pub fn at(&self, f: f64, i3: f64, i4: f64) -> Result<FourStateParams, CliError> {
        let mut p = scale_cavity(&self.base, f)?.with_intensities(i3, i4);
        if let Some(n) = self.fixed_truncation {
            p.fock_truncation = n;
        }
        Ok(p)
    }

    pub fn params(&self) -> Result<FourStateParams, CliError> {
        self.at(self.f, self.i3, self.i4)
    }
}

pub fn four_state(c: &ParamConfig, default_i3: f64, default_i4: f64) -> Result<FourStateSetup, CliError> {
    let mut p = FourStateParams::cs_defaults();
    if let Some(g) = positive("params.g43_mhz", c.g43_mhz)? {
        p.g43 = mhz(g);
    }
    if let Some(k) = positive("params.kappa_mhz", c.kappa_mhz)? {
        p.kappa = mhz(k);
    }
    if let Some(g) = positive("params.gamma_mhz", c.gamma_mhz)? {
        p.gamma = mhz(g);
    }
    if let Some(s) = positive("params.gamma34_scale", c.gamma34_scale)? {
        p.branching.g34 *= s;
    }
    p.delta3 = mhz(finite("params.delta3_mhz", c.delta3_mhz, f64::MIN)?.unwrap_or(0.0));
    p.delta4 = mhz(finite("params.delta4_mhz", c.delta4_mhz, f64::MIN)?.unwrap_or(0.0));
    p.delta_ac = mhz(finite("params.delta_ac_mhz", c.delta_ac_mhz, f64::MIN)?.unwrap_or(0.0));
    if c.fock_truncation == Some(0) {
        return Err(CliError::config("params.fock_truncation", "must be at least 1"));
    }
    let i3 = finite("params.i3", c.i3, 0.0)?.unwrap_or(default_i3);
    let i4 = finite("params.i4", c.i4, 0.0)?.unwrap_or(default_i4);
    let f = positive("params.f", c.f)?.unwrap_or(1.0);
    let beta34 = positive("params.beta34_mhz", c.beta34_mhz)?.map(mhz).unwrap_or_else(|| p.gamma34());
    p.validate().map_err(|e| CliError::config("params", &e.to_string()))?;
    Ok(FourStateSetup {
        base: p,
        i3,
        i4,
        f,
        beta34,
        fixed_truncation: c.fock_truncation,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ZeemanSetup {
    pub params: ZeemanParams,
    pub i4: f64,
    pub x: f64,
    pub velocity: bool,
}

impl ZeemanSetup {
    pub fn at(&self, x: f64) -> ZeemanParams {
        self.params.clone().with_pump_ratio(x, self.i4)
    }
}

pub fn zeeman(c: &ParamConfig, default_x: f64) -> Result<ZeemanSetup, CliError> {
    let mut p = ZeemanParams::cs_defaults();
    if let Some(g) = positive("params.g0_mhz", c.g0_mhz)? {
        p.g0 = mhz(g);
    }
    if let Some(k) = positive("params.kappa_mhz", c.kappa_mhz)? {
        p.kappa = mhz(k);
    }
    if let Some(g) = positive("params.gamma_mhz", c.gamma_mhz)? {
        p.gamma = mhz(g);
    }
    if c.f.is_some() || c.g43_mhz.is_some() || c.beta34_mhz.is_some() {
        return Err(CliError::config("params", "f, g43_mhz and beta34_mhz do not apply to the Zeeman model"));
    }
    p.delta3 = mhz(finite("params.delta3_mhz", c.delta3_mhz, f64::MIN)?.unwrap_or(0.0));
    p.delta4 = mhz(finite("params.delta4_mhz", c.delta4_mhz, f64::MIN)?.unwrap_or(0.0));
    p.delta_ac = mhz(finite("params.delta_ac_mhz", c.delta_ac_mhz, f64::MIN)?.unwrap_or(0.0));
    if let Some(n) = c.fock_truncation {
        if n == 0 {
            return Err(CliError::config("params.fock_truncation", "must be at least 1"));
        }
        p.fock_truncation = n;
    }
    if let Some(b) = finite("params.b_gauss", c.b_gauss, 0.0)? {
        p.b_pseudo = b;
    }
    if let Some(t) = finite("params.theta", c.theta, f64::MIN)? {
        p.phase_model = PhaseModel::ConstantPhase(t);
    }
    if let Some(e4) = c.offresonant_e4 {
        p.include_offresonant_e4 = e4;
    }
    let velocity = c.velocity.unwrap_or(false);
    if velocity && c.theta.is_some() {
        return Err(CliError::config("params.theta", "a constant phase conflicts with the velocity ensemble"));
    }
    let i4 = positive("params.i4", c.i4)?.unwrap_or(13.0);
    if c.i3.is_some() && c.x.is_some() {
        return Err(CliError::config("params.i3", "give either i3 or x for the Zeeman model"));
    }
    let x = match (c.x, c.i3) {
        (Some(x), _) => finite("params.x", Some(x), 0.0)?.unwrap(),
        (None, Some(i3)) => 7.0 * finite("params.i3", Some(i3), 0.0)?.unwrap() / (9.0 * i4),
        (None, None) => default_x,
    };
    p.validate().map_err(|e| CliError::config("params", &e.to_string()))?;
    Ok(ZeemanSetup { params: p, i4, x, velocity })
}
