//! Dormand–Prince 5(4) with step-size control and continuous output, for
//! complex state vectors.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h_min: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }
}

/// Single-trajectory stepper. After each accepted step the interval
/// `[t_prev, t]` can be sampled with [`Stepper::dense`].
pub struct Stepper {
    pub tol: Tolerances,
    n: usize,
    t: f64,
    t_prev: f64,
    h: f64,
    y: Vec<C64>,
    k: [Vec<C64>; 7],
    ytmp: Vec<C64>,
    ynew: Vec<C64>,
    cont: [Vec<C64>; 5],
    steps: usize,
    fresh: bool,
}

impl Stepper {
    pub fn new<F>(mut f: F, t0: f64, y0: Vec<C64>, tol: Tolerances) -> Self
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let n = y0.len();
        let z = || vec![C64::new(0.0, 0.0); n];
        let mut k = [z(), z(), z(), z(), z(), z(), z()];
        f(t0, &y0, &mut k[0]);
        // initial step from the ratio of state and derivative scales
        let sc: Vec<f64> = y0.iter().map(|b| tol.atol + tol.rtol * b.norm()).collect();
        let rms = |v: &[C64]| {
            (v.iter().zip(&sc).map(|(a, s)| (a.norm() / s).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt()
        };
        let d0 = rms(&y0);
        let d1 = rms(&k[0]);
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h = h.clamp(10.0 * tol.h_min, tol.h_max.max(10.0 * tol.h_min));
        Self {
            tol,
            n,
            t: t0,
            t_prev: t0,
            h,
            y: y0,
            k,
            ytmp: z(),
            ynew: z(),
            cont: [z(), z(), z(), z(), z()],
            steps: 0,
            fresh: true,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn t_prev(&self) -> f64 {
        self.t_prev
    }

    pub fn y(&self) -> &[C64] {
        &self.y
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Replaces the state (after a jump or renormalization) and restarts
    /// the FSAL derivative.
    pub fn reset<F>(&mut self, mut f: F, t: f64, y: &[C64])
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        self.t = t;
        self.t_prev = t;
        self.y.copy_from_slice(y);
        f(t, &self.y, &mut self.k[0]);
        self.fresh = true;
    }

    /// Takes one accepted step, never beyond `t_stop`.
    pub fn step<F>(&mut self, mut f: F, t_stop: f64) -> Result<()>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let n = self.n;
        loop {
            if self.steps >= self.tol.max_steps {
                return Err(Error::StepUnderflow {
                    t: self.t,
                    detail: format!("step budget of {} exhausted", self.tol.max_steps),
                });
            }
            let mut h = self.h.min(self.tol.h_max);
            let mut last = false;
            if self.t + h >= t_stop {
                h = t_stop - self.t;
                last = true;
            }
            if h < self.tol.h_min && !last {
                return Err(Error::StepUnderflow {
                    t: self.t,
                    detail: format!("step {h:e} below minimum"),
                });
            }
            let t = self.t;
            let y = &self.y;
            let (k1, rest) = self.k.split_at_mut(1);
            let k1 = &k1[0];
            let [k2, k3, k4, k5, k6, k7] = rest else { unreachable!() };
            let yt = &mut self.ytmp;
            for i in 0..n {
                yt[i] = y[i] + h * A21 * k1[i];
            }
            f(t + C2 * h, yt, k2);
            for i in 0..n {
                yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * h, yt, k3);
            for i in 0..n {
                yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * h, yt, k4);
            for i in 0..n {
                yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * h, yt, k5);
            for i in 0..n {
                yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(t + h, yt, k6);
            let yn = &mut self.ynew;
            for i in 0..n {
                yn[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            f(t + h, yn, k7);
            let mut err = 0.0;
            for i in 0..n {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.tol.atol + self.tol.rtol * y[i].norm().max(yn[i].norm());
                err += (e.norm() / sc).powi(2);
            }
            let err = (err / n.max(1) as f64).sqrt();
            self.steps += 1;
            if !err.is_finite() {
                self.h = h * 0.1;
                continue;
            }
            if err <= 1.0 {
                // continuous extension
                for i in 0..n {
                    let dy = yn[i] - y[i];
                    let bspl = h * k1[i] - dy;
                    self.cont[0][i] = y[i];
                    self.cont[1][i] = dy;
                    self.cont[2][i] = bspl;
                    self.cont[3][i] = dy - h * k7[i] - bspl;
                    self.cont[4][i] =
                        h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                self.t_prev = t;
                self.t = if last { t_stop } else { t + h };
                std::mem::swap(&mut self.y, &mut self.ynew);
                self.k.swap(0, 6);
                let fac = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
                let grown = h * fac.clamp(0.2, 5.0);
                // a clamped final step says nothing about the natural step
                self.h = if last { self.h.max(grown) } else { grown };
                self.fresh = false;
                return Ok(());
            }
            let fac = 0.9 * err.powf(-0.2);
            self.h = h * fac.clamp(0.1, 1.0);
        }
    }

    /// State at `t` in the last accepted interval.
    pub fn dense(&self, t: f64, out: &mut [C64]) {
        if self.fresh || self.t == self.t_prev {
            out.copy_from_slice(&self.y);
            return;
        }
        let th = (t - self.t_prev) / (self.t - self.t_prev);
        let th1 = 1.0 - th;
        let c = &self.cont;
        for i in 0..self.n {
            out[i] = c[0][i] + th * (c[1][i] + th1 * (c[2][i] + th * (c[3][i] + th1 * c[4][i])));
        }
    }
}

/// Integrates from `t0` and calls `sink(k, t_k, y)` at every requested time.
pub fn integrate<F, S>(mut f: F, t0: f64, y0: Vec<C64>, times: &[f64], tol: Tolerances, mut sink: S) -> Result<Vec<C64>>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    S: FnMut(usize, f64, &[C64]),
{
    let mut st = Stepper::new(&mut f, t0, y0, tol);
    let mut buf = vec![C64::new(0.0, 0.0); st.n];
    let t_end = times.last().copied().unwrap_or(t0);
    let mut next = 0;
    while next < times.len() && times[next] <= t0 {
        sink(next, times[next], st.y());
        next += 1;
    }
    while next < times.len() {
        st.step(&mut f, t_end)?;
        while next < times.len() && times[next] <= st.t() {
            st.dense(times[next], &mut buf);
            sink(next, times[next], &buf);
            next += 1;
        }
    }
    Ok(st.y)
}
