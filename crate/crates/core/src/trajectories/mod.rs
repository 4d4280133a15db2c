//! Quantum-jump (Monte Carlo wave function) trajectories.
//!
//! The unnormalized state evolves under H_eff = H − (i/2)Σc†c until its
//! squared norm falls to a uniform draw; the jump time is then located by
//! bisection on the stepper's dense output.

mod ensemble;
mod g2;
mod heterodyne;

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Operator, SparseMatrix, StateVector};
use crate::model::{ChannelKind, ModelSpec, TimeDependence};
use crate::ode::{Stepper, Tolerances};

pub use ensemble::{
    ensemble_average, io_curve, Detection, EnsembleConfig, EnsembleResult, Estimate, G2Curve, IoPoint, ModelFamily,
};
pub use g2::{g2_from_clicks, smooth_gaussian, G2Histogram};
pub use heterodyne::{heterodyne_spectrum, HeterodyneConfig, HeterodyneSpectrum};

/// Jump times are located to this resolution (μs).
pub const JUMP_TIME_RESOLUTION: f64 = 1e-6;

/// Per-trajectory RNG stream: ChaCha8 keyed by `base`, stream `stream`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed {
    pub base: u64,
    pub stream: u64,
}

impl Seed {
    pub fn new(base: u64, stream: u64) -> Self {
        Self { base, stream }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.base);
        r.set_stream(self.stream);
        r
    }
}

impl From<u64> for Seed {
    fn from(base: u64) -> Self {
        Self { base, stream: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Click {
    pub time: f64,
    pub channel: String,
}

/// Expectations of named operators on a uniform time grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    /// values[k][i]: observable k at times[i].
    pub values: Vec<Vec<f64>>,
}

impl Samples {
    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|k| self.values[k].as_slice())
    }

    pub fn mean(&self, name: &str) -> Option<f64> {
        self.series(name)
            .filter(|s| !s.is_empty())
            .map(|s| s.iter().sum::<f64>() / s.len() as f64)
    }
}

/// Sums of a detected-photon observable evaluated at fixed delays after
/// every detected click.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSums {
    pub taus: Vec<f64>,
    pub sums: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub seed: Seed,
    pub t_max: f64,
    pub clicks: Vec<Click>,
    pub samples: Option<Samples>,
    pub conditional: Option<ConditionalSums>,
    /// Phase and velocity draws, and anything else needed to rebuild the run.
    pub metadata: BTreeMap<String, f64>,
}

impl JumpRecord {
    pub fn clicks_on<'a>(&'a self, channels: &'a [String]) -> impl Iterator<Item = f64> + 'a {
        self.clicks
            .iter()
            .filter(move |c| channels.iter().any(|l| *l == c.channel))
            .map(|c| c.time)
    }

    /// Line format. Header lines start with `#`:
    /// `# seed <base> <stream>`, `# t_max <us>`, `# meta <key> <value>`;
    /// then one click per line, `<time us>\t<channel label>`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# seed {} {}", self.seed.base, self.seed.stream);
        let _ = writeln!(s, "# t_max {:e}", self.t_max);
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "# meta {k} {v:e}");
        }
        for c in &self.clicks {
            let _ = writeln!(s, "{:e}\t{}", c.time, c.channel);
        }
        s
    }

    /// Parses [`JumpRecord::to_text`] output. Samples and conditional sums
    /// are not part of the text format.
    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::Domain(format!("malformed jump record line `{line}`"));
        let num = |tok: Option<&str>, line: &str| -> Result<f64> {
            tok.and_then(|t| t.parse().ok()).ok_or_else(|| bad(line))
        };
        let mut seed = None;
        let mut t_max = None;
        let mut metadata = BTreeMap::new();
        let mut clicks = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if let Some(rest) = line.strip_prefix('#') {
                let mut it = rest.split_whitespace();
                match it.next() {
                    Some("seed") => {
                        let base = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad(line))?;
                        let stream = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad(line))?;
                        seed = Some(Seed { base, stream });
                    }
                    Some("t_max") => t_max = Some(num(it.next(), line)?),
                    Some("meta") => {
                        let key = it.next().ok_or_else(|| bad(line))?.to_string();
                        metadata.insert(key, num(it.next(), line)?);
                    }
                    _ => return Err(bad(line)),
                }
            } else {
                let (t, ch) = line.split_once('\t').ok_or_else(|| bad(line))?;
                clicks.push(Click {
                    time: num(Some(t.trim()), line)?,
                    channel: ch.trim().to_string(),
                });
            }
        }
        Ok(Self {
            seed: seed.ok_or_else(|| Error::Domain("jump record without seed line".into()))?,
            t_max: t_max.ok_or_else(|| Error::Domain("jump record without t_max line".into()))?,
            clicks,
            samples: None,
            conditional: None,
            metadata,
        })
    }
}

/// Coherent local-oscillator amplitude β(t) = √flux·e^{−iωt} added to a
/// collapse operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalOscillator {
    pub channel: usize,
    pub flux: f64,
    pub omega: f64,
}

impl LocalOscillator {
    fn beta(&self, t: f64) -> C64 {
        C64::from_polar(self.flux.sqrt(), -self.omega * t)
    }
}

/// Detected-photon observable evaluated after each click on `channels`.
#[derive(Clone, Debug)]
pub struct ConditionalSpec {
    pub taus: Vec<f64>,
    pub channels: Vec<usize>,
    pub observable: Operator,
}

#[derive(Clone, Debug)]
pub struct TrajectoryOptions {
    /// Samples and conditional sums ignore everything before this time.
    pub t_start: f64,
    pub sample_dt: Option<f64>,
    pub observables: Vec<(String, Operator)>,
    pub conditional: Option<ConditionalSpec>,
    pub local_oscillator: Option<LocalOscillator>,
    pub tol: Tolerances,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            t_start: 0.0,
            sample_dt: None,
            observables: Vec::new(),
            conditional: None,
            local_oscillator: None,
            tol: trajectory_tolerances(),
        }
    }
}

pub fn trajectory_tolerances() -> Tolerances {
    Tolerances {
        rtol: 1e-7,
        atol: 1e-9,
        ..Tolerances::default()
    }
}

/// Right-hand side of dψ/dt = −iH_eff(t)ψ.
struct NoJump {
    k0: SparseMatrix,
    varying: Vec<(SparseMatrix, TimeDependence)>,
    lo: Option<(LocalOscillator, SparseMatrix)>,
}

impl NoJump {
    fn new(model: &ModelSpec, lo: Option<LocalOscillator>) -> Result<Self> {
        let (h0, varying) = model.split_hamiltonian();
        let decay = model.decay_operator();
        let k0 = h0
            .scale(C64::new(0.0, -1.0))
            .add(&decay.matrix().scale(C64::new(-0.5, 0.0)));
        let varying = varying
            .into_iter()
            .map(|(h, f)| (h.scale(C64::new(0.0, -1.0)), f))
            .collect();
        let lo = match lo {
            Some(l) => {
                if !(l.flux > 0.0 && l.flux.is_finite()) {
                    return Err(Error::Domain(format!("local oscillator flux must be positive, got {}", l.flux)));
                }
                let c = model
                    .channels()
                    .get(l.channel)
                    .ok_or_else(|| Error::Domain(format!("no channel {}", l.channel)))?;
                Some((l, c.op.matrix().clone()))
            }
            None => None,
        };
        Ok(Self { k0, varying, lo })
    }

    fn rhs(&self, t: f64, psi: &[C64], out: &mut [C64]) {
        self.k0.matvec(psi, out);
        for (m, f) in &self.varying {
            m.matvec_add(C64::new(f.value(t), 0.0), psi, out);
        }
        if let Some((lo, c)) = &self.lo {
            // −iH_eff gains −β*c − |β|²/2
            let beta = lo.beta(t);
            c.matvec_add(-beta.conj(), psi, out);
            let half = 0.5 * lo.flux;
            for (o, p) in out.iter_mut().zip(psi) {
                *o -= half * p;
            }
        }
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn expect_unnormalized(op: &SparseMatrix, psi: &[C64], scratch: &mut [C64]) -> f64 {
    op.matvec(psi, scratch);
    let num: C64 = psi.iter().zip(scratch.iter()).map(|(a, b)| a.conj() * b).sum();
    num.re / norm_sqr(psi)
}

/// Draws a jump threshold in (0, 1).
fn threshold(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let r: f64 = rng.random();
        if r > 0.0 {
            return r;
        }
    }
}

/// Single trajectory with default options (clicks only).
pub fn run_trajectory(model: &ModelSpec, psi0: &StateVector, t_max: f64, seed: impl Into<Seed>) -> Result<JumpRecord> {
    run_trajectory_with(model, psi0, t_max, seed.into(), &TrajectoryOptions::default())
}

struct Observers<'a> {
    opts: &'a TrajectoryOptions,
    mats: Vec<SparseMatrix>,
    samples: Option<Samples>,
    next_sample: usize,
    cond_mat: Option<SparseMatrix>,
    cond: Option<ConditionalSums>,
    /// (click time, next delay index)
    active: VecDeque<(f64, usize)>,
    scratch: Vec<C64>,
    buf: Vec<C64>,
    t_max: f64,
}

impl<'a> Observers<'a> {
    /// Evaluates every sample and conditional delay in (.., horizon].
    fn advance(&mut self, stepper: &Stepper, horizon: f64) {
        if let Some(samples) = self.samples.as_mut() {
            loop {
                let t = self.opts.t_start + self.next_sample as f64 * self.opts.sample_dt.unwrap();
                if t > horizon || t > self.t_max {
                    break;
                }
                stepper.dense(t, &mut self.buf);
                samples.times.push(t);
                for (k, m) in self.mats.iter().enumerate() {
                    samples.values[k].push(expect_unnormalized(m, &self.buf, &mut self.scratch));
                }
                self.next_sample += 1;
            }
        }
        if let (Some(cond), Some(m)) = (self.cond.as_mut(), self.cond_mat.as_ref()) {
            for entry in self.active.iter_mut() {
                while entry.1 < cond.taus.len() {
                    let t = entry.0 + cond.taus[entry.1];
                    if t > horizon {
                        break;
                    }
                    stepper.dense(t, &mut self.buf);
                    cond.sums[entry.1] += expect_unnormalized(m, &self.buf, &mut self.scratch);
                    cond.counts[entry.1] += 1;
                    entry.1 += 1;
                }
            }
            self.active.retain(|e| e.1 < cond.taus.len());
        }
    }

    fn on_click(&mut self, t: f64, channel: usize) {
        let Some(spec) = self.opts.conditional.as_ref() else { return };
        if t < self.opts.t_start || !spec.channels.contains(&channel) {
            return;
        }
        // only delays that fit inside the run
        let last = spec.taus.last().copied().unwrap_or(0.0);
        if t + last <= self.t_max {
            self.active.push_back((t, 0));
        }
    }
}

/// Single trajectory. Deterministic for a fixed seed.
pub fn run_trajectory_with(
    model: &ModelSpec,
    psi0: &StateVector,
    t_max: f64,
    seed: Seed,
    opts: &TrajectoryOptions,
) -> Result<JumpRecord> {
    let d = model.dim();
    if psi0.data().len() != d {
        return Err(Error::Shape(format!("initial state has {} amplitudes, model needs {d}", psi0.data().len())));
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!("initial state norm {} is not 1", psi0.norm())));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t_max",
            reason: format!("must be positive, got {t_max}"),
        });
    }
    if let Some(dt) = opts.sample_dt {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sample_dt",
                reason: format!("must be positive, got {dt}"),
            });
        }
    }
    let engine = NoJump::new(model, opts.local_oscillator)?;
    let channels: Vec<SparseMatrix> = model.channels().iter().map(|c| c.op.matrix().clone()).collect();
    let labels: Vec<String> = model.channels().iter().map(|c| c.label.clone()).collect();

    let mut obs = Observers {
        opts,
        mats: opts.observables.iter().map(|(_, o)| o.matrix().clone()).collect(),
        samples: opts.sample_dt.map(|_| Samples {
            names: opts.observables.iter().map(|(n, _)| n.clone()).collect(),
            times: Vec::new(),
            values: vec![Vec::new(); opts.observables.len()],
        }),
        next_sample: 0,
        cond_mat: opts.conditional.as_ref().map(|c| c.observable.matrix().clone()),
        cond: opts.conditional.as_ref().map(|c| ConditionalSums {
            taus: c.taus.clone(),
            sums: vec![0.0; c.taus.len()],
            counts: vec![0; c.taus.len()],
        }),
        active: VecDeque::new(),
        scratch: vec![C64::new(0.0, 0.0); d],
        buf: vec![C64::new(0.0, 0.0); d],
        t_max,
    };

    let mut rng = seed.rng();
    let rhs = |t: f64, y: &[C64], out: &mut [C64]| engine.rhs(t, y, out);
    let mut stepper = Stepper::new(rhs, 0.0, psi0.data().to_vec(), opts.tol);
    let mut r = threshold(&mut rng);
    let mut clicks = Vec::new();
    let mut psi = vec![C64::new(0.0, 0.0); d];
    let mut jumped = vec![C64::new(0.0, 0.0); d];

    while stepper.t() < t_max {
        stepper.step(rhs, t_max)?;
        let n2 = norm_sqr(stepper.y());
        if !n2.is_finite() || n2 <= 0.0 {
            return Err(Error::StepUnderflow {
                t: stepper.t(),
                detail: format!("state norm {n2:e} between steps"),
            });
        }
        if n2 > r {
            obs.advance(&stepper, stepper.t());
            if n2 < 1e-6 {
                // keep the state O(1); the threshold scales with it
                let s = n2.sqrt();
                psi.iter_mut().zip(stepper.y()).for_each(|(p, y)| *p = y / s);
                r /= n2;
                stepper.reset(rhs, stepper.t(), &psi);
            }
            continue;
        }
        // bracket [lo, hi] with ‖ψ(lo)‖² > r ≥ ‖ψ(hi)‖²
        let (mut lo, mut hi) = (stepper.t_prev(), stepper.t());
        while hi - lo > JUMP_TIME_RESOLUTION {
            let mid = 0.5 * (lo + hi);
            stepper.dense(mid, &mut psi);
            if norm_sqr(&psi) > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let tj = hi;
        obs.advance(&stepper, tj);
        stepper.dense(tj, &mut psi);

        // channel ∝ ‖c ψ‖²
        let mut weights = Vec::with_capacity(channels.len());
        for (k, c) in channels.iter().enumerate() {
            c.matvec(&psi, &mut jumped);
            if let Some((lo, _)) = engine.lo.as_ref().filter(|(l, _)| l.channel == k) {
                let beta = lo.beta(tj);
                jumped.iter_mut().zip(&psi).for_each(|(j, p)| *j += beta * p);
            }
            weights.push(norm_sqr(&jumped));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::StepUnderflow {
                t: tj,
                detail: "norm decayed with no active jump channel".into(),
            });
        }
        let mut u = rng.random::<f64>() * total;
        let mut k = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                k = i;
                break;
            }
            u -= w;
        }
        channels[k].matvec(&psi, &mut jumped);
        if let Some((lo, _)) = engine.lo.as_ref().filter(|(l, _)| l.channel == k) {
            let beta = lo.beta(tj);
            jumped.iter_mut().zip(&psi).for_each(|(j, p)| *j += beta * p);
        }
        let s = norm_sqr(&jumped).sqrt();
        jumped.iter_mut().for_each(|z| *z /= s);
        stepper.reset(rhs, tj, &jumped);
        clicks.push(Click {
            time: tj,
            channel: labels[k].clone(),
        });
        obs.on_click(tj, k);
        obs.advance(&stepper, tj);
        r = threshold(&mut rng);
    }
    obs.advance(&stepper, t_max);

    Ok(JumpRecord {
        seed,
        t_max,
        clicks,
        samples: obs.samples,
        conditional: obs.cond,
        metadata: BTreeMap::new(),
    })
}

/// Indices of the cavity channels whose mode is in `modes` (all if empty).
pub fn cavity_channels_for(model: &ModelSpec, modes: &[String]) -> Vec<usize> {
    model
        .channels()
        .iter()
        .enumerate()
        .filter_map(|(k, c)| match c.kind {
            ChannelKind::Cavity { mode } => {
                let fname = factor_name(model, mode);
                (modes.is_empty() || modes.iter().any(|m| *m == fname)).then_some(k)
            }
            ChannelKind::Atomic => None,
        })
        .collect()
}

fn factor_name(model: &ModelSpec, index: usize) -> String {
    let names = model.mode_names();
    model
        .modes()
        .iter()
        .position(|&m| m == index)
        .map(|p| names[p].clone())
        .unwrap_or_default()
}

/// Product state with every factor in its first basis state.
pub fn ground_vacuum(model: &ModelSpec) -> StateVector {
    StateVector::basis(model.space(), 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{embed, fock_destroy_on, Factor, HilbertSpace};
    use crate::model::{Channel, HamiltonianTerm};

    fn decaying_cavity(kappa: f64) -> (ModelSpec, StateVector) {
        let space = HilbertSpace::new(vec![Factor::atomic("atom", &["g"]).unwrap(), Factor::fock("a", 1).unwrap()]).unwrap();
        let a = embed(&fock_destroy_on(space.factor(1)).unwrap(), 1, &space).unwrap();
        let ch = Channel {
            label: "cavity_a".into(),
            op: a.scale((2.0 * kappa).sqrt()),
            kind: ChannelKind::Cavity { mode: 1 },
        };
        let m = ModelSpec::new(space.clone(), vec![], vec![ch]).unwrap();
        let psi = StateVector::basis(&space, 1);
        (m, psi)
    }

    #[test]
    fn single_photon_leaves_once() {
        let (m, psi) = decaying_cavity(1.0);
        let rec = run_trajectory(&m, &psi, 50.0, 3).unwrap();
        assert_eq!(rec.clicks.len(), 1);
        assert_eq!(rec.clicks[0].channel, "cavity_a");
        let again = run_trajectory(&m, &psi, 50.0, 3).unwrap();
        assert_eq!(rec, again);
        let other = run_trajectory(&m, &psi, 50.0, Seed::new(3, 1)).unwrap();
        assert_ne!(rec.clicks[0].time, other.clicks[0].time);
    }

    #[test]
    fn jump_time_matches_threshold() {
        // survival e^{−2κt} = r exactly
        let kappa = 0.7;
        let (m, psi) = decaying_cavity(kappa);
        let seed = Seed::new(11, 4);
        let rec = run_trajectory(&m, &psi, 100.0, seed).unwrap();
        let mut rng = seed.rng();
        let r = threshold(&mut rng);
        let want = -r.ln() / (2.0 * kappa);
        assert!((rec.clicks[0].time - want).abs() < 1e-5, "{} vs {want}", rec.clicks[0].time);
    }

    #[test]
    fn text_round_trip() {
        let mut rec = JumpRecord {
            seed: Seed::new(5, 9),
            t_max: 12.5,
            clicks: vec![
                Click { time: 0.1 + 0.2, channel: "cavity_a".into() },
                Click { time: 3.0e-7, channel: "e3->g4,q=+1".into() },
            ],
            samples: None,
            conditional: None,
            metadata: BTreeMap::new(),
        };
        rec.metadata.insert("theta3x".into(), std::f64::consts::PI);
        let back = JumpRecord::from_text(&rec.to_text()).unwrap();
        assert_eq!(back, rec);
        assert!(JumpRecord::from_text("0.5 cavity").is_err());
    }

    #[test]
    fn rejects_unnormalized_start() {
        let (m, _) = decaying_cavity(1.0);
        let psi = StateVector::new(m.space(), vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        assert!(run_trajectory(&m, &psi, 1.0, 0).is_err());
    }

    #[test]
    fn lo_flux_must_be_positive() {
        let (m, psi) = decaying_cavity(1.0);
        let opts = TrajectoryOptions {
            local_oscillator: Some(LocalOscillator { channel: 0, flux: 0.0, omega: 1.0 }),
            ..Default::default()
        };
        assert!(matches!(run_trajectory_with(&m, &psi, 1.0, Seed::from(0), &opts), Err(Error::Domain(_))));
    }

    #[test]
    fn undriven_cavity_with_drive_term_samples() {
        // coherent drive, no atom dynamics: ⟨n⟩ → (ε/κ)²
        let space = HilbertSpace::new(vec![Factor::atomic("atom", &["g"]).unwrap(), Factor::fock("a", 8).unwrap()]).unwrap();
        let a = embed(&fock_destroy_on(space.factor(1)).unwrap(), 1, &space).unwrap();
        let (kappa, eps): (f64, f64) = (2.0, 0.6);
        let h = HamiltonianTerm {
            label: "drive".into(),
            op: a.plus_hc().scale(eps),
            time: TimeDependence::Constant,
        };
        let ch = Channel {
            label: "cavity_a".into(),
            op: a.scale((2.0 * kappa).sqrt()),
            kind: ChannelKind::Cavity { mode: 1 },
        };
        let m = ModelSpec::new(space.clone(), vec![h], vec![ch]).unwrap();
        let n = m.observable("n_a").unwrap().clone();
        let opts = TrajectoryOptions {
            t_start: 5.0,
            sample_dt: Some(0.01),
            observables: vec![("n_a".into(), n)],
            ..Default::default()
        };
        let rec = run_trajectory_with(&m, &ground_vacuum(&m), 10.0, Seed::from(1), &opts).unwrap();
        let s = rec.samples.unwrap();
        assert_eq!(s.times.len(), 501);
        // a coherent state stays coherent under jumps
        let want = (eps / kappa).powi(2);
        for v in s.series("n_a").unwrap() {
            assert!((v - want).abs() < 1e-5, "{v} vs {want}");
        }
        assert_eq!(cavity_channels_for(&m, &[]), vec![0]);
        assert_eq!(cavity_channels_for(&m, &["a".into()]), vec![0]);
        assert!(cavity_channels_for(&m, &["b".into()]).is_empty());
    }
}
