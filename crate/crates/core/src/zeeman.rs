//! Cs D₂ model with every Zeeman sublevel of F = 3, 4 and F′ = 3′, 4′,
//! two orthogonally polarized cavity modes and polarization-gradient pumps.
//!
//! Basis: quantization axis z, cavity axis y. Mode `a` carries the x dipole
//! component and mode `b` the z component.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourstate::Branching;
use crate::hilbert::{clebsch_gordan2, embed, Factor, HilbertSpace, Level, Operator, SparseMatrix};
use crate::model::{Channel, ChannelKind, HamiltonianTerm, ModelSpec, TimeDependence};
use crate::units::{mhz, phase_rate, rabi_from_intensity, BOHR_MHZ_PER_GAUSS};

/// Hyperfine manifolds in basis order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Manifold {
    G3,
    G4,
    E3,
    E4,
}

pub const MANIFOLDS: [Manifold; 4] = [Manifold::G3, Manifold::G4, Manifold::E3, Manifold::E4];
pub const ATOM_DIM: usize = 32;

/// F′ = 4′ lies this far above F′ = 3′ (rad/μs).
pub fn e4_splitting() -> f64 {
    mhz(201.2871)
}

impl Manifold {
    pub fn two_f(self) -> i32 {
        match self {
            Manifold::G3 | Manifold::E3 => 6,
            Manifold::G4 | Manifold::E4 => 8,
        }
    }

    pub fn size(self) -> usize {
        self.two_f() as usize + 1
    }

    pub fn is_excited(self) -> bool {
        matches!(self, Manifold::E3 | Manifold::E4)
    }

    pub fn name(self) -> &'static str {
        match self {
            Manifold::G3 => "g3",
            Manifold::G4 => "g4",
            Manifold::E3 => "e3",
            Manifold::E4 => "e4",
        }
    }

    /// Landé factor of the hyperfine level.
    pub fn g_factor(self) -> f64 {
        match self {
            Manifold::G3 => -0.25,
            Manifold::G4 => 0.25,
            Manifold::E3 => 0.0,
            Manifold::E4 => 4.0 / 15.0,
        }
    }

    /// Index of the m = −F state in the 32-level atom.
    pub fn offset(self) -> usize {
        MANIFOLDS.iter().take_while(|&&m| m != self).map(|m| m.size()).sum()
    }

    /// Atomic index of sublevel `two_m`.
    pub fn index(self, two_m: i32) -> usize {
        debug_assert!(two_m.abs() <= self.two_f() && (two_m + self.two_f()) % 2 == 0);
        self.offset() + ((two_m + self.two_f()) / 2) as usize
    }

    pub fn two_ms(self) -> impl Iterator<Item = i32> {
        let f = self.two_f();
        (-f..=f).step_by(2)
    }
}

pub fn level_label(m: Manifold, two_m: i32) -> String {
    format!("{}({:+})", m.name(), two_m / 2)
}

pub fn zeeman_levels() -> Vec<Level> {
    MANIFOLDS
        .iter()
        .flat_map(|&man| {
            man.two_ms().map(move |tm| Level {
                label: level_label(man, tm),
                angular: Some((man.two_f(), tm)),
            })
        })
        .collect()
}

pub fn atom_factor() -> Factor {
    Factor::atomic_levels("atom", zeeman_levels()).expect("labels are unique")
}

fn atom_space() -> Arc<HilbertSpace> {
    HilbertSpace::single(atom_factor())
}

/// Lowering operator Σ^q = Σ ⟨F,m;1,q|F′,m′⟩ |F,m⟩⟨F′,m′| for a
/// ground/excited pair, on the 32-level atom.
pub fn sigma_q(ground: Manifold, excited: Manifold, q: i32) -> Result<Operator> {
    if ground.is_excited() || !excited.is_excited() {
        return Err(Error::Domain(format!(
            "{} -> {} is not a ground/excited pair",
            ground.name(),
            excited.name()
        )));
    }
    if !(-1..=1).contains(&q) {
        return Err(Error::Domain(format!("spherical component q = {q} outside -1..=1")));
    }
    let mut triplets = Vec::new();
    for tm in ground.two_ms() {
        let tmp = tm + 2 * q;
        if tmp.abs() > excited.two_f() {
            continue;
        }
        let c = clebsch_gordan2(ground.two_f(), tm, 2, 2 * q, excited.two_f(), tmp)?;
        if c != 0.0 {
            triplets.push((ground.index(tm), excited.index(tmp), C64::new(c, 0.0)));
        }
    }
    Operator::new(atom_space(), SparseMatrix::from_triplets(ATOM_DIM, ATOM_DIM, triplets))
}

/// Spherical and Cartesian lowering operators of one transition.
#[derive(Clone, Debug)]
pub struct SigmaOps {
    pub ground: Manifold,
    pub excited: Manifold,
    /// Indexed by q + 1.
    pub spherical: [Operator; 3],
    pub x: Operator,
    pub y: Operator,
    pub z: Operator,
}

impl SigmaOps {
    pub fn new(ground: Manifold, excited: Manifold) -> Result<Self> {
        let minus = sigma_q(ground, excited, -1)?;
        let zero = sigma_q(ground, excited, 0)?;
        let plus = sigma_q(ground, excited, 1)?;
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let x = plus.sub(&minus).scale(-r);
        let y = plus.add(&minus).scale(C64::new(0.0, r));
        let z = zero.clone();
        Ok(Self {
            ground,
            excited,
            spherical: [minus, zero, plus],
            x,
            y,
            z,
        })
    }

    pub fn q(&self, q: i32) -> &Operator {
        &self.spherical[(q + 1) as usize]
    }
}

/// Pump coupling for fixed phases:
/// (Ω/2√2)[(Σᶻ+h.c.) sin θx + (Σˣ+h.c.) sin θz] + (Ω/2)(Σʸ+h.c.)(cos θx + cos θz).
pub fn pump_hamiltonian(omega: f64, ground: Manifold, excited: Manifold, theta_x: f64, theta_z: f64) -> Result<Operator> {
    let parts = pump_parts(omega, ground, excited)?;
    Ok(parts.z.scale(theta_x.sin())
        .add(&parts.x.scale(theta_z.sin()))
        .add(&parts.y.scale(theta_x.cos() + theta_z.cos())))
}

/// Hermitian pieces of the pump with their prefactors folded in.
struct PumpParts {
    z: Operator,
    x: Operator,
    y: Operator,
}

fn pump_parts(omega: f64, ground: Manifold, excited: Manifold) -> Result<PumpParts> {
    let s = SigmaOps::new(ground, excited)?;
    let w = omega / (2.0 * 2f64.sqrt());
    Ok(PumpParts {
        z: s.z.plus_hc().scale(w),
        x: s.x.plus_hc().scale(w),
        y: s.y.plus_hc().scale(0.5 * omega),
    })
}

fn f_plus(two_f: i32) -> Vec<(usize, usize, f64)> {
    // F+|m⟩ = √(F(F+1) − m(m+1)) |m+1⟩, local indices
    let f = two_f as f64 / 2.0;
    (0..two_f as usize)
        .map(|k| {
            let m = -f + k as f64;
            (k + 1, k, (f * (f + 1.0) - m * (m + 1.0)).sqrt())
        })
        .collect()
}

/// μ_B g_F B F_y summed over the four manifolds, B along the cavity axis y.
pub fn pseudo_field_hamiltonian(b_gauss: f64) -> Result<Operator> {
    if !(b_gauss >= 0.0 && b_gauss.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "b_pseudo",
            reason: format!("field must be finite and non-negative, got {b_gauss}"),
        });
    }
    let mu_b = mhz(BOHR_MHZ_PER_GAUSS);
    let mut triplets = Vec::new();
    for man in MANIFOLDS {
        let scale = mu_b * man.g_factor() * b_gauss;
        if scale == 0.0 {
            continue;
        }
        let o = man.offset();
        // F_y = (F+ − F−)/2i
        for (r, c, v) in f_plus(man.two_f()) {
            triplets.push((o + r, o + c, C64::new(0.0, -0.5 * v * scale)));
            triplets.push((o + c, o + r, C64::new(0.0, 0.5 * v * scale)));
        }
    }
    Operator::new(atom_space(), SparseMatrix::from_triplets(ATOM_DIM, ATOM_DIM, triplets))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PhaseModel {
    /// θ3x = θ3z = θ4x = θ4z = θ.
    ConstantPhase(f64),
    /// θ(t) = θ0 + k·v·t; speeds in cm/s.
    ConstantVelocity {
        theta3x: f64,
        theta3z: f64,
        theta4x: f64,
        theta4z: f64,
        vx: f64,
        vz: f64,
    },
}

/// Which transverse axes the atom moves along.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum VelocityAxes {
    /// v_x and v_z drawn independently.
    #[default]
    Both,
    /// Only v_x is drawn; v_z = 0.
    XOnly,
}

impl PhaseModel {
    /// Initial phases uniform on [0, 2π); each moving velocity component
    /// uniform on [v_min, v_max] cm/s.
    pub fn random_velocity<R: Rng + ?Sized>(rng: &mut R, v_min: f64, v_max: f64, axes: VelocityAxes) -> Self {
        let mut phase = || rng.random_range(0.0..2.0 * PI);
        let (theta3x, theta3z, theta4x, theta4z) = (phase(), phase(), phase(), phase());
        let mut speed = || if v_max > v_min { rng.random_range(v_min..v_max) } else { v_min };
        let vx = speed();
        let vz = match axes {
            VelocityAxes::Both => speed(),
            VelocityAxes::XOnly => 0.0,
        };
        PhaseModel::ConstantVelocity {
            theta3x,
            theta3z,
            theta4x,
            theta4z,
            vx,
            vz,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZeemanParams {
    /// Reduced coupling; a transition F′→F with branching b and Clebsch-Gordan
    /// coefficient c couples at g0·√b·c.
    pub g0: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub branching: Branching,
    pub omega3: f64,
    pub omega4: f64,
    pub delta_ac: f64,
    pub delta3: f64,
    pub delta4: f64,
    /// Highest Fock state of each mode.
    pub fock_truncation: usize,
    /// Gauss
    pub b_pseudo: f64,
    pub phase_model: PhaseModel,
    pub include_offresonant_e4: bool,
}

impl ZeemanParams {
    pub fn cs_defaults() -> Self {
        Self {
            g0: mhz(32.0),
            kappa: mhz(4.2),
            gamma: mhz(2.6),
            branching: Branching::cs(),
            omega3: 0.0,
            omega4: 0.0,
            delta_ac: 0.0,
            delta3: 0.0,
            delta4: 0.0,
            fock_truncation: 2,
            b_pseudo: 0.75,
            phase_model: PhaseModel::ConstantPhase(PI / 2.0),
            include_offresonant_e4: true,
        }
    }

    pub fn with_intensities(mut self, i3: f64, i4: f64) -> Self {
        self.omega3 = rabi_from_intensity(i3, self.gamma);
        self.omega4 = rabi_from_intensity(i4, self.gamma);
        self
    }

    /// Pump strength x = (7/9)(I3/I4) at fixed I4.
    pub fn with_pump_ratio(self, x: f64, i4: f64) -> Self {
        self.with_intensities(9.0 * x * i4 / 7.0, i4)
    }

    /// Amplitude decay rate F′ → F.
    pub fn gamma_pair(&self, excited: Manifold, ground: Manifold) -> f64 {
        let b = &self.branching;
        let frac = match (excited, ground) {
            (Manifold::E3, Manifold::G3) => b.g33,
            (Manifold::E3, Manifold::G4) => b.g43,
            (Manifold::E4, Manifold::G4) => b.g44,
            (Manifold::E4, Manifold::G3) => b.g34,
            _ => 0.0,
        };
        frac * self.gamma
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("g0", self.g0), ("kappa", self.kappa), ("gamma", self.gamma)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        for (name, v) in [("omega3", self.omega3), ("omega4", self.omega4)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be non-negative, got {v}"),
                });
            }
        }
        if self.fock_truncation < 1 {
            return Err(Error::InvalidTruncation(self.fock_truncation));
        }
        Ok(())
    }
}

/// Resonant coupling of e3 ↔ g4 to both modes: g0√b43 Σ_mode (mode†Σ + h.c.).
pub fn cavity_coupling(g0: f64, branching_43: f64, space: &Arc<HilbertSpace>) -> Result<Operator> {
    if !(g0 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "g0",
            reason: format!("must be positive, got {g0}"),
        });
    }
    let s = SigmaOps::new(Manifold::G4, Manifold::E3)?;
    let (emit_a, emit_b) = emission(&s, space)?;
    Ok(emit_a.add(&emit_b).plus_hc().scale(g0 * branching_43.sqrt()))
}

/// mode†·Σ for both modes of the full space, mode a with Σˣ and b with Σᶻ.
fn emission(s: &SigmaOps, space: &Arc<HilbertSpace>) -> Result<(Operator, Operator)> {
    let atom = space.factor_index("atom")?;
    let ia = space.factor_index("a")?;
    let ib = space.factor_index("b")?;
    let a = embed(&crate::hilbert::fock_destroy_on(space.factor(ia))?, ia, space)?;
    let b = embed(&crate::hilbert::fock_destroy_on(space.factor(ib))?, ib, space)?;
    let sx = embed(&s.x, atom, space)?;
    let sz = embed(&s.z, atom, space)?;
    Ok((a.adjoint().mul(&sx), b.adjoint().mul(&sz)))
}

/// Off-resonant e4 ↔ g4 cavity coupling, rotating at `omega` in the frame
/// of the pumps: g(a†Σ e^{−iωt} + h.c.) = g[cos ωt (a†Σ + h.c.) + sin ωt (−i a†Σ + h.c.)].
pub fn offresonant_e4_terms(g: f64, omega: f64, space: &Arc<HilbertSpace>) -> Result<Vec<HamiltonianTerm>> {
    let s = SigmaOps::new(Manifold::G4, Manifold::E4)?;
    let (emit_a, emit_b) = emission(&s, space)?;
    let emit = emit_a.add(&emit_b);
    Ok(vec![
        HamiltonianTerm {
            label: "cavity_e4_cos".into(),
            op: emit.plus_hc().scale(g),
            time: TimeDependence::Cos { phase0: 0.0, omega },
        },
        HamiltonianTerm {
            label: "cavity_e4_sin".into(),
            op: emit.scale(C64::new(0.0, -1.0)).plus_hc().scale(g),
            time: TimeDependence::Sin { phase0: 0.0, omega },
        },
    ])
}

fn pump_terms(
    label: &str,
    omega: f64,
    ground: Manifold,
    excited: Manifold,
    phases: (f64, f64),
    rates: (f64, f64),
    space: &Arc<HilbertSpace>,
    atom: usize,
) -> Result<Vec<HamiltonianTerm>> {
    if omega == 0.0 {
        return Ok(Vec::new());
    }
    let parts = pump_parts(omega, ground, excited)?;
    let (tx, tz) = phases;
    let (wx, wz) = rates;
    let lift = |op: &Operator| embed(op, atom, space);
    if wx == 0.0 && wz == 0.0 {
        let op = pump_hamiltonian(omega, ground, excited, tx, tz)?;
        return Ok(vec![HamiltonianTerm {
            label: label.into(),
            op: lift(&op)?,
            time: TimeDependence::Constant,
        }]);
    }
    let y = lift(&parts.y)?;
    Ok(vec![
        HamiltonianTerm {
            label: format!("{label}_z"),
            op: lift(&parts.z)?,
            time: TimeDependence::Sin { phase0: tx, omega: wx },
        },
        HamiltonianTerm {
            label: format!("{label}_x"),
            op: lift(&parts.x)?,
            time: TimeDependence::Sin { phase0: tz, omega: wz },
        },
        HamiltonianTerm {
            label: format!("{label}_y_from_x"),
            op: y.clone(),
            time: TimeDependence::Cos { phase0: tx, omega: wx },
        },
        HamiltonianTerm {
            label: format!("{label}_y_from_z"),
            op: y,
            time: TimeDependence::Cos { phase0: tz, omega: wz },
        },
    ])
}

/// Full 32-level, two-mode model.
pub fn build_zeeman(p: &ZeemanParams) -> Result<ModelSpec> {
    p.validate()?;
    let n = p.fock_truncation;
    let space = HilbertSpace::new(vec![atom_factor(), Factor::fock("a", n)?, Factor::fock("b", n)?])?;
    let atom = 0;
    let lift = |op: &Operator| embed(op, atom, &space);

    let mut hamiltonian = Vec::new();

    // detunings
    let projector_sum = |man: Manifold| {
        let d: Vec<_> = man.two_ms().map(|tm| (man.index(tm), man.index(tm), C64::new(1.0, 0.0))).collect();
        Operator::new(atom_space(), SparseMatrix::from_triplets(ATOM_DIM, ATOM_DIM, d))
    };
    let photons = {
        let na = embed(&number(space.factor(1))?, 1, &space)?;
        let nb = embed(&number(space.factor(2))?, 2, &space)?;
        na.add(&nb)
    };
    let detuning = lift(&projector_sum(Manifold::E3)?.scale(p.delta3))?
        .add(&lift(&projector_sum(Manifold::E4)?.scale(p.delta4))?)
        .add(&photons.scale(p.delta_ac + p.delta3));
    if !detuning.is_zero() {
        hamiltonian.push(HamiltonianTerm {
            label: "detuning".into(),
            op: detuning,
            time: TimeDependence::Constant,
        });
    }

    let (ph3, ph4, rates) = match p.phase_model {
        PhaseModel::ConstantPhase(t) => ((t, t), (t, t), (0.0, 0.0)),
        PhaseModel::ConstantVelocity {
            theta3x,
            theta3z,
            theta4x,
            theta4z,
            vx,
            vz,
        } => ((theta3x, theta3z), (theta4x, theta4z), (phase_rate(vx), phase_rate(vz))),
    };
    hamiltonian.extend(pump_terms("pump3", p.omega3, Manifold::G3, Manifold::E3, ph3, rates, &space, atom)?);
    hamiltonian.extend(pump_terms("pump4", p.omega4, Manifold::G4, Manifold::E4, ph4, rates, &space, atom)?);

    hamiltonian.push(HamiltonianTerm {
        label: "cavity".into(),
        op: cavity_coupling(p.g0, p.branching.g43, &space)?,
        time: TimeDependence::Constant,
    });
    if p.include_offresonant_e4 {
        let omega = e4_splitting() + p.delta3 - p.delta4;
        hamiltonian.extend(offresonant_e4_terms(p.g0 * p.branching.g44.sqrt(), omega, &space)?);
    }
    if p.b_pseudo > 0.0 {
        hamiltonian.push(HamiltonianTerm {
            label: "pseudo_field".into(),
            op: lift(&pseudo_field_hamiltonian(p.b_pseudo)?)?,
            time: TimeDependence::Constant,
        });
    } else {
        pseudo_field_hamiltonian(p.b_pseudo)?;
    }

    let mut channels = Vec::new();
    for (k, name) in [(1usize, "a"), (2, "b")] {
        let op = embed(&crate::hilbert::fock_destroy_on(space.factor(k))?, k, &space)?;
        channels.push(Channel {
            label: format!("cavity_{name}"),
            op: op.scale((2.0 * p.kappa).sqrt()),
            kind: ChannelKind::Cavity { mode: k },
        });
    }
    for excited in [Manifold::E3, Manifold::E4] {
        for ground in [Manifold::G3, Manifold::G4] {
            let rate = p.gamma_pair(excited, ground);
            if rate == 0.0 {
                continue;
            }
            for q in -1..=1 {
                let op = sigma_q(ground, excited, q)?.scale((2.0 * rate).sqrt());
                channels.push(Channel {
                    label: format!("{}->{},q={q:+}", excited.name(), ground.name()),
                    op: lift(&op)?,
                    kind: ChannelKind::Atomic,
                });
            }
        }
    }

    let mut model = ModelSpec::new(space.clone(), hamiltonian, channels)?;
    for man in MANIFOLDS {
        model = model.with_observable(&format!("pop_{}", man.name()), lift(&projector_sum(man)?)?);
    }
    if !p.include_offresonant_e4 {
        // excitations: photons + 1 for g3 and e3
        let charge = (0..space.total_dim())
            .map(|k| {
                let parts = space.split(k);
                let lvl = parts[0];
                let up = lvl < Manifold::G4.offset() || (Manifold::E3.offset()..Manifold::E4.offset()).contains(&lvl);
                up as i64 + parts[1] as i64 + parts[2] as i64
            })
            .collect();
        model = model.with_charge(charge);
    }
    Ok(model)
}

fn number(f: &Factor) -> Result<Operator> {
    let a = crate::hilbert::fock_destroy_on(f)?;
    Ok(a.adjoint().mul(&a))
}
