//! Mean-field equations obtained by factorizing ⟨σ_kl a†^p a^q⟩ into
//! ⟨σ_kl⟩ ᾱ^p α^q. The equations are generated from the same polynomial
//! model that builds the quantum operators.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourstate::{critical_numbers, four_state_symbolic, FourStateParams, SymbolicModel};
use crate::ode::{Stepper, Tolerances};
use crate::symbolic::{heisenberg, Mono, Poly};

/// Mean-field state: α = ⟨a⟩ and sigma[k][l] = ⟨σ_kl⟩ (row-major).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SCState {
    pub alpha: C64,
    pub sigma: Vec<C64>,
    pub levels: usize,
}

impl SCState {
    /// All population in level `k`, field amplitude `alpha`.
    pub fn ground(levels: usize, k: usize, alpha: C64) -> Self {
        let mut sigma = vec![C64::new(0.0, 0.0); levels * levels];
        sigma[k * levels + k] = C64::new(1.0, 0.0);
        Self { alpha, sigma, levels }
    }

    pub fn population(&self, k: usize) -> f64 {
        self.sigma[k * self.levels + k].re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.levels).map(|k| self.population(k)).collect()
    }

    pub fn get(&self, k: usize, l: usize) -> C64 {
        self.sigma[k * self.levels + l]
    }

    fn to_vec(&self) -> Vec<C64> {
        let mut v = self.sigma.clone();
        v.push(self.alpha);
        v
    }

    fn from_vec(levels: usize, v: &[C64]) -> Self {
        Self {
            alpha: v[levels * levels],
            sigma: v[..levels * levels].to_vec(),
            levels,
        }
    }
}

/// Generated right-hand side.
#[derive(Clone, Debug)]
pub struct ScSystem {
    levels: usize,
    /// Equation for each variable: σ_kl in row-major order, then α.
    equations: Vec<Poly>,
}

impl ScSystem {
    pub fn new(model: &SymbolicModel) -> Self {
        let n = model.levels.len();
        let h = model.total_hamiltonian();
        let channels = model.channel_polys();
        let mut equations = Vec::with_capacity(n * n + 1);
        for k in 0..n {
            for l in 0..n {
                equations.push(heisenberg(&h, &channels, &[Mono::sigma(1.0, k, l)]));
            }
        }
        equations.push(heisenberg(&h, &channels, &[Mono::new(1.0, None, 0, 1)]));
        Self { levels: n, equations }
    }

    pub fn four_state(p: &FourStateParams) -> Result<Self> {
        Ok(Self::new(&four_state_symbolic(p)?))
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Generated equation for ⟨σ_kl⟩ (or for ⟨a⟩ when `None`).
    pub fn equation(&self, sigma: Option<(usize, usize)>) -> &Poly {
        match sigma {
            Some((k, l)) => &self.equations[k * self.levels + l],
            None => &self.equations[self.levels * self.levels],
        }
    }

    fn eval_mono(&self, m: &Mono, y: &[C64]) -> C64 {
        let n = self.levels;
        let alpha = y[n * n];
        let s = match m.sigma {
            Some((k, l)) => y[k * n + l],
            None => C64::new(1.0, 0.0),
        };
        m.coeff * s * alpha.conj().powu(m.create) * alpha.powu(m.destroy)
    }

    /// dy/dt for the flattened state.
    pub fn rhs_vec(&self, y: &[C64], dy: &mut [C64]) {
        for (out, eq) in dy.iter_mut().zip(&self.equations) {
            *out = eq.iter().map(|m| self.eval_mono(m, y)).sum();
        }
    }

    pub fn rhs(&self, state: &SCState) -> SCState {
        let y = state.to_vec();
        let mut dy = vec![C64::new(0.0, 0.0); y.len()];
        self.rhs_vec(&y, &mut dy);
        SCState::from_vec(self.levels, &dy)
    }

    /// Real Jacobian ∂(Re F, Im F)/∂(Re y, Im y), variables interleaved as
    /// (re_0, im_0, re_1, im_1, ...).
    pub fn jacobian(&self, y: &[C64]) -> Vec<f64> {
        let n = self.levels;
        let m = y.len();
        let ai = n * n;
        let alpha = y[ai];
        let i = C64::new(0.0, 1.0);
        let mut jac = vec![0.0; 4 * m * m];
        for (row, eq) in self.equations.iter().enumerate() {
            for mono in eq {
                let s_idx = mono.sigma.map(|(k, l)| k * n + l);
                let s = s_idx.map_or(C64::new(1.0, 0.0), |v| y[v]);
                let (p, q) = (mono.create, mono.destroy);
                let field = alpha.conj().powu(p) * alpha.powu(q);
                // ∂/∂Re and ∂/∂Im of the field factor
                let mut d_re = C64::new(0.0, 0.0);
                let mut d_im = C64::new(0.0, 0.0);
                if p > 0 {
                    let t = p as f64 * alpha.conj().powu(p - 1) * alpha.powu(q);
                    d_re += t;
                    d_im += -i * t;
                }
                if q > 0 {
                    let t = q as f64 * alpha.conj().powu(p) * alpha.powu(q - 1);
                    d_re += t;
                    d_im += i * t;
                }
                let mut put = |col: usize, dr: C64, di: C64| {
                    let (r0, r1) = (2 * row, 2 * row + 1);
                    let (c0, c1) = (2 * col, 2 * col + 1);
                    jac[r0 * 2 * m + c0] += dr.re;
                    jac[r1 * 2 * m + c0] += dr.im;
                    jac[r0 * 2 * m + c1] += di.re;
                    jac[r1 * 2 * m + c1] += di.im;
                };
                if let Some(v) = s_idx {
                    put(v, mono.coeff * field, mono.coeff * field * i);
                }
                if p + q > 0 {
                    put(ai, mono.coeff * s * d_re, mono.coeff * s * d_im);
                }
            }
        }
        jac
    }
}

/// Convenience wrapper: derivative of `state` for parameters `p`.
pub fn sc_rhs(state: &SCState, p: &FourStateParams) -> Result<SCState> {
    Ok(ScSystem::four_state(p)?.rhs(state))
}

fn residual(sys: &ScSystem, y: &[C64]) -> f64 {
    let mut dy = vec![C64::new(0.0, 0.0); y.len()];
    sys.rhs_vec(y, &mut dy);
    dy.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn to_real(y: &[C64]) -> Vec<f64> {
    y.iter().flat_map(|z| [z.re, z.im]).collect()
}

/// Newton iteration with the trace equation substituted for Re dσ_00/dt and
/// a least-squares step through the remaining phase zero mode.
fn newton(sys: &ScSystem, y0: &[C64]) -> Option<Vec<C64>> {
    let n = sys.levels;
    let m = y0.len();
    let mut y = y0.to_vec();
    for _ in 0..50 {
        let mut f = vec![C64::new(0.0, 0.0); m];
        sys.rhs_vec(&y, &mut f);
        let mut fr = to_real(&f);
        let trace: f64 = (0..n).map(|k| y[k * n + k].re).sum();
        fr[0] = trace - 1.0;
        let mut jac = sys.jacobian(&y);
        jac[..2 * m].fill(0.0);
        for k in 0..n {
            jac[2 * (k * n + k)] = 1.0;
        }
        let dim = 2 * m;
        let a = Mat::from_fn(dim, dim, |r, c| jac[r * dim + c]);
        let svd = a.svd().ok()?;
        let s = svd.S().column_vector();
        let smax = s[0];
        let (u, v) = (svd.U(), svd.V());
        let mut step = vec![0.0; dim];
        for k in 0..dim {
            if s[k] <= 1e-11 * smax {
                continue;
            }
            let coef: f64 = (0..dim).map(|r| u[(r, k)] * fr[r]).sum::<f64>() / s[k];
            for (r, st) in step.iter_mut().enumerate() {
                *st -= v[(r, k)] * coef;
            }
        }
        for (j, z) in y.iter_mut().enumerate() {
            *z += C64::new(step[2 * j], step[2 * j + 1]);
        }
        let norm_step = step.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if !norm_step.is_finite() {
            return None;
        }
        if norm_step < 1e-14 && residual(sys, &y) < 1e-11 {
            break;
        }
    }
    (residual(sys, &y) < 1e-10).then_some(y)
}

/// Largest real part of the linearization, excluding the two neutral
/// directions (global phase and the conserved trace).
fn growth_rate(sys: &ScSystem, y: &[C64]) -> f64 {
    let jac = sys.jacobian(y);
    let dim = 2 * y.len();
    let a = Mat::from_fn(dim, dim, |r, c| jac[r * dim + c]);
    let Ok(eigs) = a.eigenvalues() else {
        return f64::INFINITY;
    };
    let mut re: Vec<f64> = eigs.iter().map(|z| z.re).collect();
    re.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // neutral modes sit at zero; skip up to two eigenvalues closest to it
    let scale = jac.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
    let mut skipped = 0;
    for r in re {
        if skipped < 2 && r.abs() < 1e-7 * scale {
            skipped += 1;
            continue;
        }
        return r;
    }
    f64::NEG_INFINITY
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScSolution {
    pub state: SCState,
    pub alpha2: f64,
    /// |α|²/n0 for the parameters solved.
    pub alpha2_over_n0: f64,
    pub residual: f64,
    pub growth_rate: f64,
}

/// Seed added to α: α = 0 is invariant under the mean-field flow.
const ALPHA_SEED: f64 = 1e-4;

/// Integrates from `init` (or from g3 with a small field) until a stable
/// fixed point is reached.
pub fn sc_steady_from(sys: &ScSystem, p: &FourStateParams, init: Option<&SCState>) -> Result<ScSolution> {
    let n = sys.levels;
    let n0 = critical_numbers(p)?.n0;
    let seed = C64::new(ALPHA_SEED * n0.sqrt(), 0.0);
    let mut start = init.cloned().unwrap_or_else(|| SCState::ground(n, 0, seed));
    if start.alpha.norm() < seed.norm() {
        start.alpha += seed;
    }
    let f = |_: f64, y: &[C64], dy: &mut [C64]| sys.rhs_vec(y, dy);
    let tol = Tolerances {
        rtol: 1e-9,
        atol: 1e-12,
        ..Tolerances::default()
    };
    let mut st = Stepper::new(f, 0.0, start.to_vec(), tol);
    // the slowest mean-field rate is near κ, but critical slowing down near
    // threshold can stretch it a lot; Newton finishes the job
    let chunk = 5.0 / p.kappa.min(p.gamma).max(1e-9);
    let t_max = 1000.0 * chunk;
    let mut t_next = chunk;
    let mut last_res = f64::INFINITY;
    while st.t() < t_max {
        st.step(f, t_next)?;
        if st.t() < t_next {
            continue;
        }
        t_next += chunk;
        let y = st.y().to_vec();
        let res = residual(sys, &y);
        last_res = res;
        if res > 1e-3 * p.gamma {
            continue;
        }
        if let Some(fixed) = newton(sys, &y) {
            let rate = growth_rate(sys, &fixed);
            if rate <= 1e-9 * p.gamma {
                let state = SCState::from_vec(n, &fixed);
                let alpha2 = state.alpha.norm_sqr();
                return Ok(ScSolution {
                    alpha2,
                    alpha2_over_n0: alpha2 / n0,
                    residual: residual(sys, &fixed),
                    growth_rate: rate,
                    state,
                });
            }
            // unstable fixed point: kick the field off it and keep going
            if fixed[n * n].norm() < seed.norm() {
                let mut y = st.y().to_vec();
                y[n * n] += seed;
                st.reset(f, st.t(), &y);
            }
        }
    }
    Err(Error::Convergence {
        steps: st.steps(),
        residual: last_res,
    })
}

/// Stable steady state at pump intensity `i3`; Ω4 is taken from `p`.
pub fn sc_steady(p: &FourStateParams, i3: f64) -> Result<ScSolution> {
    let mut q = p.clone();
    q.omega3 = crate::units::rabi_from_intensity(i3, q.gamma);
    let sys = ScSystem::four_state(&q)?;
    sc_steady_from(&sys, &q, None)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScPoint {
    pub i3: f64,
    pub alpha2_over_n0: f64,
    pub populations: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScScan {
    pub up: Vec<std::result::Result<ScPoint, String>>,
    pub down: Vec<std::result::Result<ScPoint, String>>,
    /// Grid values where the two sweep directions disagree.
    pub hysteresis: Vec<f64>,
}

fn sweep<'a, I>(p: &FourStateParams, i4: f64, order: I) -> Vec<(usize, std::result::Result<ScPoint, String>)>
where
    I: Iterator<Item = (usize, &'a f64)>,
{
    let mut prev: Option<SCState> = None;
    let mut out = Vec::new();
    for (k, &i3) in order {
        let q = p.clone().with_intensities(i3, i4);
        let res = ScSystem::four_state(&q).and_then(|sys| sc_steady_from(&sys, &q, prev.as_ref()));
        match res {
            Ok(sol) => {
                out.push((
                    k,
                    Ok(ScPoint {
                        i3,
                        alpha2_over_n0: sol.alpha2_over_n0,
                        populations: sol.state.populations(),
                    }),
                ));
                prev = Some(sol.state);
            }
            Err(e) => out.push((k, Err(e.to_string()))),
        }
    }
    out
}

/// Continuation scan over a monotone grid in both directions.
pub fn sc_scan(p: &FourStateParams, i3_grid: &[f64], i4: f64) -> Result<ScScan> {
    if i3_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("I3 grid must be strictly increasing".into()));
    }
    let up: Vec<_> = sweep(p, i4, i3_grid.iter().enumerate()).into_iter().map(|(_, r)| r).collect();
    let mut down = sweep(p, i4, i3_grid.iter().enumerate().rev());
    down.sort_by_key(|(k, _)| *k);
    let down: Vec<_> = down.into_iter().map(|(_, r)| r).collect();
    let hysteresis = up
        .iter()
        .zip(&down)
        .filter_map(|(a, b)| match (a, b) {
            (Ok(a), Ok(b)) if (a.alpha2_over_n0 - b.alpha2_over_n0).abs() > 1e-6 * a.alpha2_over_n0.abs().max(1e-3) => {
                Some(a.i3)
            }
            _ => None,
        })
        .collect();
    Ok(ScScan { up, down, hysteresis })
}
