//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Pass criterion numbers as arguments to run a subset; set
//! `ONEATOM_BLESS=1` to rewrite the golden file of criterion 4.

mod common;

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use oneatom::dynamics::{field_correlation, optical_spectrum, rabi_scan, TauWindow};
use oneatom::fourstate::{beta_43, build_four_state, critical_numbers, scale_cavity, FourStateParams};
use oneatom::liouvillian::liouvillian;
use oneatom::semiclassical::sc_scan;
use oneatom::steady::{observables, q_scan, solve_adaptive, steady_state, FluxRates, ScanPoint, Truncation};
use oneatom::trajectories::{ensemble_average, heterodyne_spectrum, EnsembleConfig, HeterodyneConfig, ModelFamily};
use oneatom::units::mhz;
use oneatom::zeeman::{PhaseModel, ZeemanParams};

type Outcome = Result<String, String>;

/// Collects individual checks of one criterion.
#[derive(Default)]
struct Checks {
    notes: Vec<String>,
    failed: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, msg: String) {
        if ok {
            self.notes.push(msg);
        } else {
            self.failed.push(msg);
        }
    }

    fn finish(self) -> Outcome {
        if self.failed.is_empty() {
            Ok(self.notes.join("; "))
        } else {
            Err(format!("{} | passed: {}", self.failed.join("; "), self.notes.join("; ")))
        }
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| lo + step * k as f64).collect()
}

fn local_maxima(y: &[f64]) -> Vec<usize> {
    (1..y.len().saturating_sub(1)).filter(|&k| y[k] > y[k - 1] && y[k] >= y[k + 1]).collect()
}

fn scan_points(pts: Vec<oneatom::Result<ScanPoint>>) -> Result<Vec<ScanPoint>, String> {
    pts.into_iter().collect::<oneatom::Result<Vec<_>>>().map_err(|e| format!("solver failure: {e}"))
}

fn criterion1() -> Outcome {
    let p = FourStateParams::cs_defaults();
    let i3 = grid(0.0, 10.0, 0.025);
    let scan = sc_scan(&p, &i3, 3.0).map_err(|e| e.to_string())?;
    let y: Vec<f64> = scan.up.iter().map(|r| r.as_ref().map(|s| s.alpha2_over_n0).unwrap_or(f64::NAN)).collect();
    let peak_k = (0..y.len()).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
    let peak = y[peak_k];
    // knee: first pump value with a lasing mean-field solution
    let knee = i3[y.iter().position(|&v| v > 1e-6 * peak).unwrap()];
    let quench = (peak_k..y.len()).find(|&k| y[k] < 0.01 * peak).map(|k| i3[k]);
    let mut c = Checks::default();
    c.check((knee - 0.8).abs() <= 0.15, format!("knee I3={knee:.3} (0.8±0.15)"));
    match quench {
        Some(q) => c.check((q - 6.5).abs() <= 1.0, format!("quench I3={q:.3} (6.5±1.0)")),
        None => c.check(false, "no quench up to I3=10".into()),
    }
    c.finish()
}

fn criterion2() -> Outcome {
    let i3 = grid(0.0, 8.0, 0.125);
    let mut curves = Vec::new();
    for f in [1.0, 100.0, 2500.0] {
        let p = scale_cavity(&FourStateParams::cs_defaults(), f).map_err(|e| e.to_string())?;
        let scan = sc_scan(&p, &i3, 3.0).map_err(|e| e.to_string())?;
        let y = scan
            .up
            .into_iter()
            .map(|r| r.map(|s| s.alpha2_over_n0))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("f={f}: {e}"))?;
        curves.push(y);
    }
    let worst = (1..3)
        .flat_map(|j| curves[0].iter().zip(&curves[j]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    let mut c = Checks::default();
    c.check(worst <= 1e-8, format!("max pointwise difference {worst:.2e} (≤1e-8)"));
    c.finish()
}

fn criterion3() -> Outcome {
    let p = scale_cavity(&FourStateParams::cs_defaults(), 2500.0).map_err(|e| e.to_string())?;
    let n0f = critical_numbers(&p).map_err(|e| e.to_string())?.n0;
    let i3 = grid(0.1, 2.0, 0.1);
    let sc = sc_scan(&p, &i3, 3.0).map_err(|e| e.to_string())?;
    let q = scan_points(q_scan(&p, &i3, 3.0, build_four_state, &Truncation::default()))?;
    let mut c = Checks::default();
    c.check((n0f / 33.0 - 1.0).abs() <= 0.02, format!("n0f={n0f:.2} (33±2%)"));
    let mut worst = (0.0, 0.0);
    let mut below = Vec::new();
    let mut above = Vec::new();
    for ((pt, s), &x) in q.iter().zip(&sc.up).zip(&i3) {
        let s = s.as_ref().map_err(|e| e.clone())?;
        let d = (pt.n_over_n0f - s.alpha2_over_n0).abs();
        if d > worst.0 {
            worst = (d, x);
        }
        let g2 = pt.observables.g2_0.unwrap_or(f64::NAN);
        if s.alpha2_over_n0 == 0.0 || s.alpha2_over_n0 < 1e-6 {
            below.push(g2);
        } else if x >= 1.5 {
            above.push(g2);
        }
    }
    c.check(worst.0 <= 0.1, format!("max |n̄/n0f − |α|²/n0f| = {:.3} at I3={:.1} (≤0.1)", worst.0, worst.1));
    let range = |v: &[f64]| (v.iter().cloned().fold(f64::INFINITY, f64::min), v.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let (lo, hi) = range(&below);
    c.check(!below.is_empty() && lo >= 1.8 && hi <= 2.2, format!("g2(0) below threshold in [{lo:.3}, {hi:.3}] (2.0±0.2)"));
    let (lo, hi) = range(&above);
    c.check(!above.is_empty() && lo >= 0.9 && hi <= 1.1, format!("g2(0) for I3∈[1.5,2] in [{lo:.3}, {hi:.3}] (1.0±0.1)"));
    c.finish()
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/criterion4.csv")
}

fn criterion4() -> Outcome {
    let p = FourStateParams::cs_defaults();
    let mut i3 = grid(0.25, 10.0, 0.25);
    i3.extend(grid(11.0, 40.0, 1.0));
    let pts = scan_points(q_scan(&p, &i3, 3.0, build_four_state, &Truncation::default()))?;
    let n: Vec<f64> = pts.iter().map(|s| s.n_over_n0f).collect();
    let g2: Vec<f64> = pts.iter().map(|s| s.observables.g2_0.unwrap()).collect();
    let q: Vec<f64> = pts.iter().map(|s| s.observables.mandel_q.unwrap()).collect();
    let mut c = Checks::default();
    let peak = (0..n.len()).max_by(|&a, &b| n[a].total_cmp(&n[b])).unwrap();
    c.check(peak > 0 && peak + 1 < n.len(), format!("n̄/n0 peak {:.3} at I3={}", n[peak], i3[peak]));
    c.check(g2[peak] < 1.0, format!("g2(0)={:.3} at the peak", g2[peak]));
    let rising = g2.windows(2).all(|w| w[1] >= w[0]);
    c.check(rising, format!("g2(0) increases with I3 ({:.3} → {:.3})", g2[0], g2[g2.len() - 1]));
    let neg: Vec<usize> = (0..q.len()).filter(|&k| q[k] < 0.0).collect();
    let contiguous = !neg.is_empty() && neg.windows(2).all(|w| w[1] == w[0] + 1);
    let window = if neg.is_empty() { "none".to_string() } else { format!("[{}, {}]", i3[neg[0]], i3[*neg.last().unwrap()]) };
    c.check(contiguous, format!("Q<0 contiguous on I3∈{window}"));

    let mut csv = String::from("I3,n_bar,n_bar_over_n0f,Q,g2_0\n");
    for (k, s) in pts.iter().enumerate() {
        writeln!(csv, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", i3[k], s.observables.n_bar, n[k], q[k], g2[k]).unwrap();
    }
    let path = golden_path();
    if std::env::var_os("ONEATOM_BLESS").is_some() {
        std::fs::write(&path, &csv).map_err(|e| e.to_string())?;
    }
    match std::fs::read_to_string(&path) {
        Ok(golden) => {
            let parse = |s: &str| -> Vec<Vec<f64>> {
                s.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
            };
            let (a, b) = (parse(&golden), parse(&csv));
            let worst = if a.len() == b.len() {
                a.iter()
                    .flatten()
                    .zip(b.iter().flatten())
                    .map(|(x, y)| (x - y).abs() / x.abs().max(1e-300))
                    .fold(0.0, f64::max)
            } else {
                f64::INFINITY
            };
            c.check(worst <= 1e-8, format!("golden file max relative deviation {worst:.1e} (≤1e-8)"));
        }
        Err(_) => c.check(false, format!("golden file {} missing", path.display())),
    }
    c.finish()
}

fn criterion5() -> Outcome {
    let p = scale_cavity(&FourStateParams::cs_defaults(), 1.0 / 99.0).map_err(|e| e.to_string())?;
    let n0f = critical_numbers(&p).map_err(|e| e.to_string())?.n0;
    let beta = beta_43(&p).map_err(|e| e.to_string())?;
    let i3 = grid(0.5, 5.0, 0.25);
    let pts = scan_points(q_scan(&p, &i3, 3.0, build_four_state, &Truncation::default()))?;
    let mut c = Checks::default();
    c.check((n0f / 1.31e-4 - 1.0).abs() <= 0.02, format!("n0f={n0f:.3e} (1.31e-4±2%)"));
    c.check((beta - 0.99).abs() <= 0.005, format!("β43={beta:.4} (0.99±0.005)"));
    let g2_max = pts.iter().map(|s| s.observables.g2_0.unwrap()).fold(0.0, f64::max);
    c.check(g2_max <= 0.05, format!("max g2(0)={g2_max:.2e} (≤0.05)"));
    let q_dev = pts
        .iter()
        .map(|s| (s.observables.mandel_q.unwrap() + s.observables.n_bar).abs() / s.observables.n_bar)
        .fold(0.0, f64::max);
    c.check(q_dev <= 0.1, format!("max |Q+n̄|/n̄={q_dev:.2e} (≤0.1)"));
    let target = beta / (1.0 - beta);
    let r_dev = pts
        .iter()
        .map(|s| (s.observables.ratio_r.unwrap() / target - 1.0).abs())
        .fold(0.0, f64::max);
    c.check(r_dev <= 0.2, format!("max |R/(β/(1−β)) − 1|={r_dev:.3} with β/(1−β)={target:.1} (≤0.2)"));
    c.finish()
}

fn criterion6() -> Outcome {
    let p = FourStateParams::cs_defaults();
    let detunings = grid(-30.0, 30.0, 0.5);
    let d3: Vec<f64> = detunings.iter().map(|&x| mhz(x)).collect();
    let cfg = Truncation::default();
    let curve = |i3: f64| -> Result<Vec<f64>, String> {
        rabi_scan(&p, i3, 3.0, &d3, &cfg)
            .into_iter()
            .map(|r| r.map(|x| x.n_bar).map_err(|e| e.to_string()))
            .collect()
    };
    let mut c = Checks::default();
    let low = curve(0.1)?;
    // the two highest local maxima; a weaker central one may remain
    let mut peaks = local_maxima(&low);
    peaks.sort_by(|&a, &b| low[b].total_cmp(&low[a]));
    let top: Vec<f64> = peaks.iter().take(2).map(|&k| detunings[k]).collect();
    let centre = low[detunings.iter().position(|&x| x == 0.0).unwrap()];
    let ok = top.len() == 2
        && top[0] * top[1] < 0.0
        && top.iter().all(|x| (x.abs() - 16.0).abs() <= 1.0)
        && peaks.iter().take(2).all(|&k| low[k] > centre);
    c.check(
        ok,
        format!(
            "I3=0.1 maxima at {top:?} MHz (±16±1), n̄ there {:.3e} vs {centre:.3e} at Δ3=0",
            peaks.first().map(|&k| low[k]).unwrap_or(f64::NAN)
        ),
    );
    let high = curve(10.0)?;
    let peaks: Vec<f64> = local_maxima(&high).into_iter().map(|k| detunings[k]).collect();
    c.check(peaks.len() <= 1, format!("I3=10 maxima at {peaks:?} MHz (single structure)"));
    c.finish()
}

fn criterion7() -> Outcome {
    let p = FourStateParams::cs_defaults().with_intensities(0.5, 0.5);
    let sol = solve_adaptive(&p, build_four_state, &Truncation::default()).map_err(|e| e.to_string())?;
    let m = sol.model;
    let rho = sol.solution.rho;
    let corr = field_correlation(&m, &rho, &TauWindow::default()).map_err(|e| e.to_string())?;
    let spec = optical_spectrum(&corr).map_err(|e| e.to_string())?;
    let mut c = Checks::default();
    // local maxima of log Φ are those of Φ
    let near = |nu: f64| {
        spec.local_maxima()
            .into_iter()
            .map(|k| spec.freqs[k])
            .filter(|f| (f - nu).abs() <= 1.0)
            .collect::<Vec<_>>()
    };
    let (plus, minus) = (near(16.0), near(-16.0));
    c.check(
        !plus.is_empty() && !minus.is_empty(),
        format!("log Φ local maxima near +16 MHz: {plus:?}, near −16 MHz: {minus:?}"),
    );

    let reg_peak = spec.freqs[(0..spec.phi.len()).max_by(|&a, &b| spec.phi[a].total_cmp(&spec.phi[b])).unwrap()];
    let small = FourStateParams::cs_defaults().with_intensities(0.5, 0.5).with_truncation(4);
    let het_model = build_four_state(&small).map_err(|e| e.to_string())?;
    let cfg = HeterodyneConfig {
        n_traj: 8,
        t_max: 401.0,
        t_start: 1.0,
        segment: 1.0,
        span: 30.0,
        ..Default::default()
    };
    let het = heterodyne_spectrum(&het_model, &cfg, 2024).map_err(|e| e.to_string())?;
    let s = &het.spectrum;
    let het_peak = s.freqs[(0..s.phi.len()).max_by(|&a, &b| s.phi[a].total_cmp(&s.phi[b])).unwrap()];
    let bin = s.bin_width();
    c.check(
        (het_peak - reg_peak).abs() <= bin,
        format!("main peak regression {reg_peak:.3} MHz vs heterodyne {het_peak:.3} MHz (bin {bin} MHz)"),
    );
    c.finish()
}

fn criterion8() -> Outcome {
    let p = FourStateParams::cs_defaults().with_intensities(5.0, 3.0).with_truncation(6);
    let m = build_four_state(&p).map_err(|e| e.to_string())?;
    let rho = steady_state(&m).map_err(|e| e.to_string())?;
    let obs = observables(&rho, &m, &FluxRates::from_params(&p).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let cfg = EnsembleConfig {
        n_traj: 1000,
        t_max: 11.0,
        t_start: 1.0,
        seed_base: 8,
        ..Default::default()
    };
    let r = ensemble_average(&ModelFamily::fixed(m), &cfg).map_err(|e| e.to_string())?;
    let mut c = Checks::default();
    let mut cmp = |name: &str, est: &oneatom::trajectories::Estimate, want: f64| {
        let z = est.z_score(want);
        c.check(z.abs() <= 3.0, format!("{name} {:.5}±{:.5} vs {want:.5} (z={z:.2})", est.mean, est.se));
    };
    cmp("n̄", &r.n_bar_average, obs.n_bar);
    cmp("σe3e3", &r.populations["pop_e3"], obs.populations["e3"]);
    cmp("g2(0)", &r.g2_zero, obs.g2_0.unwrap());
    c.finish()
}

fn criterion9() -> Outcome {
    let base = ZeemanParams::cs_defaults();
    let taus: Vec<f64> = vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5];
    let cfg = EnsembleConfig {
        n_traj: 12,
        t_max: 40.0,
        t_start: 5.0,
        seed_base: 9,
        taus: taus.clone(),
        ..Default::default()
    };
    let run = |x: f64, theta: f64| {
        let mut p = base.clone().with_pump_ratio(x, 13.0);
        p.phase_model = PhaseModel::ConstantPhase(theta);
        ensemble_average(&ModelFamily::Zeeman { params: p, velocity: None }, &cfg).map_err(|e| e.to_string())
    };
    let mut c = Checks::default();
    let low = run(0.17, FRAC_PI_2)?;
    let g0 = low.g2_zero;
    c.check(g0.mean < 1.0, format!("x=0.17 g2(0)={:.3}±{:.3} < 1 (target 0.3±0.2)", g0.mean, g0.se));
    let curve = low.g2_curve.as_ref().ok_or("no g2 curve")?;
    let later: Vec<f64> = curve.taus.iter().zip(&curve.g2).filter(|(t, _)| **t >= 0.05).map(|(_, g)| *g).collect();
    let min_later = later.iter().cloned().fold(f64::INFINITY, f64::min);
    c.check(g0.mean < min_later, format!("g2(0) < g2(τ) on [50,500] ns (min {min_later:.3})"));
    let high = run(0.83, FRAC_PI_2)?;
    let g1 = high.g2_zero;
    c.check(
        g1.mean > g0.mean,
        format!("x=0.83 g2(0)={:.3}±{:.3} > x=0.17 value (target 0.6±0.25)", g1.mean, g1.se),
    );
    let dark = ensemble_average(
        &ModelFamily::Zeeman {
            params: {
                let mut p = base.clone().with_pump_ratio(0.17, 13.0);
                p.phase_model = PhaseModel::ConstantPhase(0.0);
                p
            },
            velocity: None,
        },
        &EnsembleConfig {
            n_traj: 2,
            t_max: 20.0,
            taus: Vec::new(),
            ..cfg.clone()
        },
    )
    .map_err(|e| e.to_string())?;
    c.check(
        dark.click_rate.mean == 0.0 && dark.n_bar_average.mean < 1e-9,
        format!("θ=0 click rate {} and n̄ {:.1e}", dark.click_rate.mean, dark.n_bar_average.mean),
    );
    c.finish()
}

fn criterion10() -> Outcome {
    let models = common::small_models();
    let mut c = Checks::default();
    let (mut worst_l, mut worst_td) = (0.0f64, 0.0f64);
    for (name, model) in &models {
        let ours = common::dense_op(&liouvillian(model).map_err(|e| e.to_string())?.matrix);
        let want = common::textbook_liouvillian(model);
        let scale = want.iter().map(|z| z.norm()).fold(1.0, f64::max);
        worst_l = worst_l.max((&ours - &want).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale);
        let (dense, _, _) = common::dense_steady(model);
        let sparse = common::to_dense_rho(&steady_state(model).map_err(|e| format!("{name}: {e}"))?);
        worst_td = worst_td.max(common::trace_distance(&sparse, &dense));
    }
    c.check(worst_l <= 1e-12, format!("{} models, generator max deviation {worst_l:.1e} (≤1e-12)", models.len()));
    c.check(worst_td <= 1e-9, format!("steady-state max trace distance {worst_td:.1e} (≤1e-9)"));
    c.finish()
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("semiclassical threshold and quench", criterion1),
        ("scaling invariance", criterion2),
        ("quantum vs semiclassical at f=2500", criterion3),
        ("strong coupling f=1", criterion4),
        ("Purcell limit f=1/99", criterion5),
        ("vacuum-Rabi scan", criterion6),
        ("spectrum", criterion7),
        ("trajectories vs master equation", criterion8),
        ("Zeeman photon statistics", criterion9),
        ("oracle suite", criterion10),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let n = k + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {n:>2} PASS {name} [{secs:.1}s]: {msg}"),
            Err(msg) => {
                failures += 1;
                println!("criterion {n:>2} FAIL {name} [{secs:.1}s]: {msg}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
