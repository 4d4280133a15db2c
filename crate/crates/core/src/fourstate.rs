//! Four-level one-atom laser (g3, g4, e3, e4 plus one cavity mode), its
//! three-level Raman variant, cavity-length scaling and critical numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Factor, HilbertSpace};
use crate::model::{Channel, ChannelKind, HamiltonianTerm, ModelSpec, TimeDependence};
use crate::symbolic::{materialize, Mono, Poly};
use crate::units::{mhz, rabi_from_intensity};

pub const G3: usize = 0;
pub const G4: usize = 1;
pub const E3: usize = 2;
pub const E4: usize = 3;
pub const LEVELS: [&str; 4] = ["g3", "g4", "e3", "e4"];

/// Spontaneous decay rates as fractions of γ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branching {
    pub g33: f64,
    pub g43: f64,
    pub g44: f64,
    pub g34: f64,
}

impl Branching {
    pub fn cs() -> Self {
        Self {
            g33: 0.75,
            g43: 0.25,
            g44: 7.0 / 12.0,
            g34: 5.0 / 12.0,
        }
    }
}

/// All rates in rad/us.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourStateParams {
    pub g43: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub branching: Branching,
    pub omega3: f64,
    pub omega4: f64,
    pub delta_ac: f64,
    pub delta3: f64,
    pub delta4: f64,
    pub fock_truncation: usize,
}

impl Default for FourStateParams {
    fn default() -> Self {
        Self::cs_defaults()
    }
}

impl FourStateParams {
    /// g43 = 2π·16 MHz, κ = 2π·4.2 MHz, γ = 2π·2.6 MHz, pumps off.
    pub fn cs_defaults() -> Self {
        Self {
            g43: mhz(16.0),
            kappa: mhz(4.2),
            gamma: mhz(2.6),
            branching: Branching::cs(),
            omega3: 0.0,
            omega4: 0.0,
            delta_ac: 0.0,
            delta3: 0.0,
            delta4: 0.0,
            fock_truncation: 15,
        }
    }

    /// Sets both pumps from intensities I = (Ω/2γ)².
    pub fn with_intensities(mut self, i3: f64, i4: f64) -> Self {
        self.omega3 = rabi_from_intensity(i3, self.gamma);
        self.omega4 = rabi_from_intensity(i4, self.gamma);
        self
    }

    pub fn with_truncation(mut self, n: usize) -> Self {
        self.fock_truncation = n;
        self
    }

    pub fn gamma33(&self) -> f64 {
        self.branching.g33 * self.gamma
    }

    pub fn gamma43(&self) -> f64 {
        self.branching.g43 * self.gamma
    }

    pub fn gamma44(&self) -> f64 {
        self.branching.g44 * self.gamma
    }

    pub fn gamma34(&self) -> f64 {
        self.branching.g34 * self.gamma
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("g43", self.g43),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("branching.g33", self.branching.g33),
            ("branching.g43", self.branching.g43),
            ("branching.g44", self.branching.g44),
            ("branching.g34", self.branching.g34),
            ("omega3", self.omega3),
            ("omega4", self.omega4),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and nonnegative, got {v}"),
                });
            }
        }
        for (name, v) in [("delta_ac", self.delta_ac), ("delta3", self.delta3), ("delta4", self.delta4)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be finite".into(),
                });
            }
        }
        if self.fock_truncation < 1 {
            return Err(Error::InvalidTruncation(self.fock_truncation));
        }
        Ok(())
    }
}

/// Saturation photon number, critical atom number and cooperativity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct CriticalNumbers {
    pub n0: f64,
    pub N0: f64,
    pub C1: f64,
}

pub fn critical_numbers(p: &FourStateParams) -> Result<CriticalNumbers> {
    if p.g43 <= 0.0 {
        return Err(Error::Domain("critical numbers need a nonzero coupling".into()));
    }
    let g2 = p.g43 * p.g43;
    let n0 = p.gamma * p.gamma / (2.0 * g2);
    let big_n0 = 2.0 * p.kappa * p.gamma / g2;
    Ok(CriticalNumbers {
        n0,
        N0: big_n0,
        C1: 1.0 / big_n0,
    })
}

/// Cooperativity of the lasing transition alone, C1·γ/γ43.
pub fn c1_43(p: &FourStateParams) -> Result<f64> {
    Ok(critical_numbers(p)?.C1 * p.gamma / p.gamma43())
}

/// Fraction of e3→g4 emission going into the cavity, 2C/(1+2C).
pub fn beta_43(p: &FourStateParams) -> Result<f64> {
    let c = c1_43(p)?;
    Ok(2.0 * c / (1.0 + 2.0 * c))
}

/// Lengthens the cavity by `f`: g → g/√f, κ → κ/f.
pub fn scale_cavity(p: &FourStateParams, f: f64) -> Result<FourStateParams> {
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::Domain(format!("cavity scale factor must be positive, got {f}")));
    }
    let mut q = p.clone();
    q.g43 = p.g43 / f.sqrt();
    q.kappa = p.kappa / f;
    Ok(q)
}

/// Model written as normal-ordered polynomials, before it is placed on a
/// truncated Fock space.
#[derive(Clone, Debug)]
pub struct SymbolicModel {
    pub levels: Vec<&'static str>,
    pub hamiltonian: Vec<(String, Poly)>,
    pub channels: Vec<(String, Poly, ChannelKind)>,
    /// Excitation charge per level; with the photon number it is conserved
    /// by every term.
    pub level_charge: Vec<i64>,
}

impl SymbolicModel {
    pub fn build(&self, truncation: usize) -> Result<ModelSpec> {
        let space = HilbertSpace::new(vec![
            Factor::atomic("atom", &self.levels)?,
            Factor::fock("a", truncation)?,
        ])?;
        let hamiltonian = self
            .hamiltonian
            .iter()
            .map(|(label, poly)| {
                Ok(HamiltonianTerm {
                    label: label.clone(),
                    op: materialize(poly, &space, 0, 1)?,
                    time: TimeDependence::Constant,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let channels = self
            .channels
            .iter()
            .map(|(label, poly, kind)| {
                Ok(Channel {
                    label: label.clone(),
                    op: materialize(poly, &space, 0, 1)?,
                    kind: *kind,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let charge = (0..space.total_dim())
            .map(|k| {
                let parts = space.split(k);
                self.level_charge[parts[0]] + parts[1] as i64
            })
            .collect();
        Ok(ModelSpec::new(space, hamiltonian, channels)?.with_charge(charge))
    }

    pub fn total_hamiltonian(&self) -> Poly {
        crate::symbolic::simplify(self.hamiltonian.iter().flat_map(|(_, p)| p.iter().copied()).collect())
    }

    pub fn channel_polys(&self) -> Vec<Poly> {
        self.channels.iter().map(|(_, p, _)| p.clone()).collect()
    }
}

fn sigma(c: f64, k: usize, l: usize) -> Mono {
    Mono::sigma(c, k, l)
}

fn hop(c: f64, k: usize, l: usize) -> Poly {
    vec![sigma(c, k, l), sigma(c, l, k)]
}

fn decay(rate: f64, to: usize, from: usize) -> Poly {
    vec![sigma((2.0 * rate).sqrt(), to, from)]
}

/// Polynomial form of the four-level model.
pub fn four_state_symbolic(p: &FourStateParams) -> Result<SymbolicModel> {
    p.validate()?;
    let h1 = vec![
        Mono::new(p.g43, Some((G4, E3)), 1, 0),
        Mono::new(p.g43, Some((E3, G4)), 0, 1),
    ];
    let h2 = hop(0.5 * p.omega3, E3, G3);
    let h3 = hop(0.5 * p.omega4, E4, G4);
    // in the frame where g3 and g4 are at rest the photon carries the pump
    // detuning: ω_c − (ω_pump − ω_g4) = Δ_AC + Δ3
    let h4 = vec![Mono::new(p.delta_ac + p.delta3, None, 1, 1)];
    let h5 = vec![sigma(p.delta3, E3, E3), sigma(p.delta4, E4, E4)];
    let hamiltonian = [("H1", h1), ("H2", h2), ("H3", h3), ("H4", h4), ("H5", h5)]
        .into_iter()
        .map(|(l, poly)| (l.to_string(), crate::symbolic::simplify(poly)))
        .collect();
    let channels = vec![
        ("cavity".to_string(), vec![Mono::new((2.0 * p.kappa).sqrt(), None, 0, 1)], ChannelKind::Cavity { mode: 1 }),
        ("e3->g3".to_string(), decay(p.gamma33(), G3, E3), ChannelKind::Atomic),
        ("e3->g4".to_string(), decay(p.gamma43(), G4, E3), ChannelKind::Atomic),
        ("e4->g4".to_string(), decay(p.gamma44(), G4, E4), ChannelKind::Atomic),
        ("e4->g3".to_string(), decay(p.gamma34(), G3, E4), ChannelKind::Atomic),
    ];
    Ok(SymbolicModel {
        levels: LEVELS.to_vec(),
        hamiltonian,
        channels,
        level_charge: vec![1, 0, 1, 0],
    })
}

/// Polynomial form of the three-level variant: e4 and Ω4 are dropped and g4
/// returns to g3 by an incoherent channel at amplitude rate `beta34`.
pub fn raman_symbolic(p: &FourStateParams, beta34: f64) -> Result<SymbolicModel> {
    p.validate()?;
    if !(beta34.is_finite() && beta34 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "beta34",
            reason: format!("must be positive, got {beta34}"),
        });
    }
    let h1 = vec![
        Mono::new(p.g43, Some((G4, E3)), 1, 0),
        Mono::new(p.g43, Some((E3, G4)), 0, 1),
    ];
    let hamiltonian = vec![
        ("H1".to_string(), h1),
        ("H2".to_string(), hop(0.5 * p.omega3, E3, G3)),
        ("H4".to_string(), vec![Mono::new(p.delta_ac + p.delta3, None, 1, 1)]),
        ("H5".to_string(), crate::symbolic::simplify(vec![sigma(p.delta3, E3, E3)])),
    ];
    let channels = vec![
        ("cavity".to_string(), vec![Mono::new((2.0 * p.kappa).sqrt(), None, 0, 1)], ChannelKind::Cavity { mode: 1 }),
        ("e3->g3".to_string(), decay(p.gamma33(), G3, E3), ChannelKind::Atomic),
        ("e3->g4".to_string(), decay(p.gamma43(), G4, E3), ChannelKind::Atomic),
        ("g4->g3".to_string(), decay(beta34, G3, G4), ChannelKind::Atomic),
    ];
    Ok(SymbolicModel {
        levels: LEVELS[..3].to_vec(),
        hamiltonian,
        channels,
        level_charge: vec![1, 0, 1],
    })
}

pub fn build_four_state(p: &FourStateParams) -> Result<ModelSpec> {
    four_state_symbolic(p)?.build(p.fock_truncation)
}

pub fn build_raman_variant(p: &FourStateParams, beta34: f64) -> Result<ModelSpec> {
    raman_symbolic(p, beta34)?.build(p.fock_truncation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drives_off_leaves_only_coupling() {
        let p = FourStateParams::cs_defaults().with_truncation(2);
        let m = build_four_state(&p).unwrap();
        let nonzero: Vec<_> = m
            .hamiltonian_terms()
            .iter()
            .filter(|t| !t.op.is_zero())
            .map(|t| t.label.as_str())
            .collect();
        assert_eq!(nonzero, vec!["H1"]);
        assert_eq!(m.channels().len(), 5);
    }

    #[test]
    fn coupling_matrix_element() {
        let p = FourStateParams::cs_defaults().with_truncation(3);
        let m = build_four_state(&p).unwrap();
        let s = m.space();
        let h = m.constant_hamiltonian().unwrap();
        let row = s.index(&[E3, 0]);
        let col = s.index(&[G4, 1]);
        assert!((h.matrix().get(row, col).re - p.g43).abs() < 1e-12);
    }

    #[test]
    fn cs_critical_numbers() {
        let c = critical_numbers(&FourStateParams::cs_defaults()).unwrap();
        assert!((c.C1 - 11.72).abs() < 0.01, "{}", c.C1);
        assert!((c.n0 - 0.0132).abs() < 1e-4, "{}", c.n0);
        assert_eq!(c.C1, 1.0 / c.N0);
    }

    #[test]
    fn raman_has_four_channels() {
        let p = FourStateParams::cs_defaults().with_truncation(2);
        let m = build_raman_variant(&p, p.gamma34()).unwrap();
        assert_eq!(m.channels().len(), 4);
        assert_eq!(m.dim(), 9);
        assert!(build_raman_variant(&p, 0.0).is_err());
    }

    #[test]
    fn scale_rejects_nonpositive() {
        assert!(scale_cavity(&FourStateParams::cs_defaults(), 0.0).is_err());
        assert!(scale_cavity(&FourStateParams::cs_defaults(), -1.0).is_err());
    }
}
