//! Time evolution of density matrices, two-time correlations from the
//! regression recipe, and the optical spectrum.
//!
//! The spectrum convention is one-sided with the real part doubled:
//! Φ(ν) = 2 Re ∫₀^∞ C(τ) e^{−2πiντ} dτ. For a stationary field C(−τ) = C(τ)*,
//! which makes this identical to the two-sided transform over the whole
//! line. With ν in cycles per μs (MHz), ∫Φ dν = C(0) = n̄, equivalently
//! ∫Φ dΩ = 2π n̄ over angular frequency.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourstate::{build_four_state, FourStateParams};
use crate::hilbert::{DensityMatrix, SparseMatrix};
use crate::liouvillian::Generator;
use crate::model::{ModelSpec, TimeDependence};
use crate::ode::{integrate, Stepper, Tolerances};
use crate::steady::{solve_adaptive, Truncation};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Right-hand side of the master equation, including harmonic terms.
pub struct Propagator {
    d: usize,
    gen: Generator,
    // (H_k, H_k†, f_k)
    varying: Vec<(SparseMatrix, SparseMatrix, TimeDependence)>,
}

impl Propagator {
    pub fn new(model: &ModelSpec) -> Self {
        let (h0, varying) = model.split_hamiltonian();
        Self {
            d: model.dim(),
            gen: Generator::from_parts(&h0, model),
            varying: varying.into_iter().map(|(h, f)| (h.adjoint(), h, f)).map(|(ha, h, f)| (h, ha, f)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_time_dependent(&self) -> bool {
        !self.varying.is_empty()
    }

    /// dρ/dt at time `t` for a general (not necessarily Hermitian) ρ.
    pub fn rhs(&self, t: f64, rho: &[C64], out: &mut [C64]) {
        self.gen.apply(rho, out);
        for (h, h_adj, f) in &self.varying {
            let v = f.value(t);
            if v == 0.0 {
                continue;
            }
            h.mul_dense_add(C64::new(0.0, -v), rho, self.d, out);
            h_adj.dense_mul_adjoint_add(C64::new(0.0, v), rho, self.d, out);
        }
    }
}

fn check_grid(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Domain(format!("{what} grid is empty")));
    }
    if grid[0] < 0.0 || !grid.iter().all(|t| t.is_finite()) {
        return Err(Error::Domain(format!("{what} grid must start at or after 0 and be finite")));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain(format!("{what} grid is not monotone")));
    }
    Ok(())
}

fn tolerances() -> Tolerances {
    Tolerances {
        rtol: 1e-8,
        atol: 1e-10,
        ..Tolerances::default()
    }
}

/// Regression runs feed a transform, so errors add up over many samples.
fn regression_tolerances(scale: f64) -> Tolerances {
    Tolerances {
        rtol: 1e-10,
        atol: 1e-13 * scale.max(1e-300),
        ..Tolerances::default()
    }
}

/// Integrates dρ/dt = L(t)ρ from t = 0 and returns ρ at every grid time.
pub fn evolve(model: &ModelSpec, rho0: &DensityMatrix, t_grid: &[f64]) -> Result<Vec<DensityMatrix>> {
    check_grid(t_grid, "time")?;
    if rho0.space() != model.space() {
        return Err(Error::Shape("initial state lives on a different space".into()));
    }
    let prop = Propagator::new(model);
    let mut out = Vec::with_capacity(t_grid.len());
    let space = model.space().clone();
    integrate(
        |t, y, dy| prop.rhs(t, y, dy),
        0.0,
        rho0.data().to_vec(),
        t_grid,
        tolerances(),
        |_, _, y| out.push(y.to_vec()),
    )?;
    out.into_iter().map(|data| DensityMatrix::from_dense(&space, data)).collect()
}

/// Tr[ρ·op] for row-major ρ.
fn trace_with(rho: &[C64], op: &SparseMatrix) -> C64 {
    let d = op.nrows();
    let mut s = ZERO;
    for j in 0..d {
        for (i, v) in op.row(j) {
            s += rho[i * d + j] * v;
        }
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationKind {
    /// ⟨a†(0)a(τ)⟩
    Field,
    /// g²(τ)
    Intensity,
}

/// How far a correlation was followed before it was cut.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowInfo {
    /// Delay at which |C| had stayed below `rel_tol`·|C(0)|.
    pub cut: f64,
    /// Last sampled delay, twice `cut` unless the hard cap intervened.
    pub span: f64,
    pub rel_tol: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationSeries {
    /// μs
    pub taus: Vec<f64>,
    pub values: Vec<C64>,
    pub kind: CorrelationKind,
    pub window: Option<WindowInfo>,
}

impl CorrelationSeries {
    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// Value at τ = 0.
    pub fn at_zero(&self) -> Option<C64> {
        self.taus.iter().position(|&t| t == 0.0).map(|k| self.values[k])
    }
}

/// Sampling of a regression run whose end is decided by the data.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TauWindow {
    /// Sample spacing in μs.
    pub dt: f64,
    /// Stop once |C| stays below this fraction of |C(0)|.
    pub rel_tol: f64,
    /// Hard cap on the span in μs.
    pub max_span: f64,
    /// Number of consecutive samples that must be below `rel_tol`.
    pub hold: usize,
}

impl Default for TauWindow {
    fn default() -> Self {
        Self {
            dt: 2e-3,
            rel_tol: 1e-4,
            max_span: 50.0,
            hold: 32,
        }
    }
}

fn require_stationary(model: &ModelSpec) -> Result<()> {
    if model.is_time_dependent() {
        return Err(Error::TimeDependent("regression needs a time-independent generator".into()));
    }
    Ok(())
}

fn mode_operator(model: &ModelSpec, mode: Option<&str>) -> Result<SparseMatrix> {
    let name = match mode {
        Some(m) => m.to_string(),
        None => model
            .mode_names()
            .into_iter()
            .next()
            .ok_or_else(|| Error::Domain("model has no cavity mode".into()))?,
    };
    Ok(model.observable(&name)?.matrix().clone())
}

/// ⟨a†(0)a(τ)⟩ of the first cavity mode.
pub fn field_correlation(model: &ModelSpec, rho_ss: &DensityMatrix, window: &TauWindow) -> Result<CorrelationSeries> {
    field_correlation_mode(model, rho_ss, None, window)
}

/// ⟨a†(0)a(τ)⟩ of a named mode: evolve ρ_ss·a† and read off Tr[ρ(τ)a].
pub fn field_correlation_mode(
    model: &ModelSpec,
    rho_ss: &DensityMatrix,
    mode: Option<&str>,
    window: &TauWindow,
) -> Result<CorrelationSeries> {
    require_stationary(model)?;
    if !(window.dt > 0.0 && window.max_span > window.dt && window.rel_tol > 0.0) {
        return Err(Error::Domain("tau window needs dt > 0, max_span > dt and rel_tol > 0".into()));
    }
    let a = mode_operator(model, mode)?;
    let d = model.dim();
    let mut rho0 = vec![ZERO; d * d];
    // ρ a† = ρ·(a)†
    a.dense_mul_adjoint_add(C64::new(1.0, 0.0), rho_ss.data(), d, &mut rho0);

    let prop = Propagator::new(model);
    let f = |t: f64, y: &[C64], dy: &mut [C64]| prop.rhs(t, y, dy);
    let c0 = trace_with(&rho0, &a);
    let mut taus = vec![0.0];
    let mut values = vec![c0];
    let threshold = window.rel_tol * c0.norm();
    let hold = window.hold.max(1);
    let mut quiet = 0usize;
    let scale = rho0.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut st = Stepper::new(f, 0.0, rho0, regression_tolerances(scale));
    let mut buf = vec![ZERO; d * d];
    let mut k = 1usize;
    // set once the threshold has held; the run then continues as long again
    let mut cut: Option<(f64, f64)> = None;
    loop {
        let t_stop = cut.map_or(window.max_span, |(_, end)| end);
        st.step(f, t_stop)?;
        while (k as f64) * window.dt <= st.t() * (1.0 + 1e-12) {
            let tau = k as f64 * window.dt;
            st.dense(tau.min(st.t()), &mut buf);
            let c = trace_with(&buf, &a);
            taus.push(tau);
            values.push(c);
            k += 1;
            match cut {
                None => {
                    quiet = if c.norm() < threshold { quiet + 1 } else { 0 };
                    if quiet >= hold {
                        cut = Some((tau, (2.0 * tau).min(window.max_span)));
                    }
                }
                Some((at, end)) if tau >= end * (1.0 - 1e-12) => {
                    return Ok(CorrelationSeries {
                        taus,
                        values,
                        kind: CorrelationKind::Field,
                        window: Some(WindowInfo {
                            cut: at,
                            span: tau,
                            rel_tol: window.rel_tol,
                            dt: window.dt,
                        }),
                    });
                }
                Some(_) => {}
            }
        }
        if cut.is_none() && st.t() >= window.max_span {
            let remaining = values.last().map(|c| c.norm()).unwrap_or(0.0) / c0.norm().max(f64::MIN_POSITIVE);
            return Err(Error::Window {
                span: window.max_span,
                remaining,
            });
        }
    }
}

/// g²(τ) for the summed photon number of all modes, by evolving
/// Σ_m a_m ρ_ss a_m† / n̄ and reading ⟨Σ a_m†a_m⟩(τ) / n̄. The result is
/// mirrored to negative delays.
pub fn g2_tau(model: &ModelSpec, rho_ss: &DensityMatrix, tau_grid: &[f64]) -> Result<CorrelationSeries> {
    require_stationary(model)?;
    check_grid(tau_grid, "delay")?;
    let d = model.dim();
    let one = C64::new(1.0, 0.0);
    let names = model.mode_names();
    if names.is_empty() {
        return Err(Error::Domain("model has no cavity mode".into()));
    }
    let mut number = SparseMatrix::zeros(d, d);
    let mut rho0 = vec![ZERO; d * d];
    let mut tmp = vec![ZERO; d * d];
    for name in &names {
        let a = model.observable(name)?.matrix();
        number = number.add(model.observable(&format!("n_{name}"))?.matrix());
        tmp.iter_mut().for_each(|z| *z = ZERO);
        a.mul_dense_add(one, rho_ss.data(), d, &mut tmp);
        a.dense_mul_adjoint_add(one, &tmp, d, &mut rho0);
    }
    let n_total = trace_with(rho_ss.data(), &number).re;
    if !(n_total > 1e-300) {
        return Err(Error::Undefined("g2(tau)"));
    }
    rho0.iter_mut().for_each(|z| *z /= n_total);

    let prop = Propagator::new(model);
    let mut forward = Vec::with_capacity(tau_grid.len());
    integrate(
        |t, y, dy| prop.rhs(t, y, dy),
        0.0,
        rho0,
        tau_grid,
        tolerances(),
        |_, _, y| forward.push(trace_with(y, &number).re / n_total),
    )?;

    let mut taus = Vec::with_capacity(2 * tau_grid.len());
    let mut values = Vec::with_capacity(2 * tau_grid.len());
    for (t, v) in tau_grid.iter().zip(&forward).rev() {
        if *t > 0.0 {
            taus.push(-t);
            values.push(C64::new(*v, 0.0));
        }
    }
    for (t, v) in tau_grid.iter().zip(&forward) {
        taus.push(*t);
        values.push(C64::new(*v, 0.0));
    }
    Ok(CorrelationSeries {
        taus,
        values,
        kind: CorrelationKind::Intensity,
        window: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    Absolute,
    PeakNormalized,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Spectrum {
    /// Cycles per μs (MHz), ascending.
    pub freqs: Vec<f64>,
    pub phi: Vec<f64>,
    pub normalization: Normalization,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() < 2 {
            return 0.0;
        }
        self.freqs[1] - self.freqs[0]
    }

    /// Σ Φ Δν.
    pub fn integral(&self) -> f64 {
        self.phi.iter().sum::<f64>() * self.bin_width()
    }

    pub fn peak_normalized(&self) -> Spectrum {
        let max = self.phi.iter().cloned().fold(f64::MIN, f64::max);
        let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
        Spectrum {
            freqs: self.freqs.clone(),
            phi: self.phi.iter().map(|p| p * scale).collect(),
            normalization: Normalization::PeakNormalized,
        }
    }

    /// Indices of strict local maxima.
    pub fn local_maxima(&self) -> Vec<usize> {
        (1..self.phi.len().saturating_sub(1))
            .filter(|&k| self.phi[k] > self.phi[k - 1] && self.phi[k] >= self.phi[k + 1])
            .collect()
    }

    /// Local maximum nearest to `nu`.
    pub fn nearest_peak(&self, nu: f64) -> Option<f64> {
        self.local_maxima()
            .into_iter()
            .map(|k| self.freqs[k])
            .min_by(|a, b| (a - nu).abs().total_cmp(&(b - nu).abs()))
    }
}

/// Discrete one-sided transform of a field correlation on a uniform grid
/// starting at τ = 0, zero-padded to at least four times its length.
pub fn optical_spectrum(corr: &CorrelationSeries) -> Result<Spectrum> {
    optical_spectrum_padded(corr, 4)
}

pub fn optical_spectrum_padded(corr: &CorrelationSeries, pad: usize) -> Result<Spectrum> {
    if corr.kind != CorrelationKind::Field {
        return Err(Error::Domain("spectrum needs a field correlation".into()));
    }
    let n = corr.len();
    if n < 2 || corr.taus[0] != 0.0 {
        return Err(Error::Domain("field correlation must start at tau = 0 with at least two samples".into()));
    }
    let dt = corr.taus[1] - corr.taus[0];
    if corr
        .taus
        .windows(2)
        .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0))
    {
        return Err(Error::Domain("field correlation grid is not uniform".into()));
    }
    let m = (pad.max(4) * n).next_power_of_two();
    let mut buf = vec![ZERO; m];
    for (k, v) in corr.values.iter().enumerate() {
        // trapezoid weights
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        buf[k] = v * (w * dt);
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let df = 1.0 / (m as f64 * dt);
    let half = m / 2;
    let mut freqs = Vec::with_capacity(m);
    let mut phi = Vec::with_capacity(m);
    for k in (half..m).chain(0..half) {
        let nu = if k >= half { k as f64 - m as f64 } else { k as f64 } * df;
        freqs.push(nu);
        phi.push(2.0 * buf[k].re);
    }
    Ok(Spectrum {
        freqs,
        phi,
        normalization: Normalization::Absolute,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RabiPoint {
    /// rad/μs
    pub delta3: f64,
    pub n_bar: f64,
    pub truncation: usize,
}

/// Steady-state n̄ as the pump detuning Δ3 is swept, points in parallel.
pub fn rabi_scan(p: &FourStateParams, i3: f64, i4: f64, delta3_grid: &[f64], cfg: &Truncation) -> Vec<Result<RabiPoint>> {
    delta3_grid
        .par_iter()
        .map(|&delta3| {
            let mut q = p.clone().with_intensities(i3, i4);
            q.delta3 = delta3;
            let sol = solve_adaptive(&q, build_four_state, cfg)?;
            Ok(RabiPoint {
                delta3,
                n_bar: sol.observables.n_bar,
                truncation: sol.truncation,
            })
        })
        .collect()
}
