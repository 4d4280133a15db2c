//! Unit conventions. Rates and detunings are angular frequencies in rad/us,
//! times are in us.

use std::f64::consts::TAU;

/// Converts a value quoted as 2π × (x MHz) into rad/us.
pub fn mhz(x: f64) -> f64 {
    TAU * x
}

/// Inverse of [`mhz`].
pub fn to_mhz(omega: f64) -> f64 {
    omega / TAU
}

/// Rabi frequency for a pump intensity in saturation units, I = (Ω/2γ)².
pub fn rabi_from_intensity(intensity: f64, gamma: f64) -> f64 {
    2.0 * gamma * intensity.max(0.0).sqrt()
}

pub fn intensity_from_rabi(omega: f64, gamma: f64) -> f64 {
    (omega / (2.0 * gamma)).powi(2)
}

/// Bohr magneton over h, in MHz per gauss.
pub const BOHR_MHZ_PER_GAUSS: f64 = 1.399_624_493;

/// Cs D2 line vacuum wavelength in nm.
pub const CS_D2_WAVELENGTH_NM: f64 = 852.347;

/// Optical wavenumber of the Cs D2 line in rad per cm.
pub fn cs_wavenumber_per_cm() -> f64 {
    TAU / (CS_D2_WAVELENGTH_NM * 1e-7)
}

/// Phase angular frequency ω = k·v in rad/us for a speed in cm/s.
pub fn phase_rate(speed_cm_per_s: f64) -> f64 {
    cs_wavenumber_per_cm() * speed_cm_per_s * 1e-6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intensity_round_trip() {
        let g = mhz(2.6);
        let om = rabi_from_intensity(3.0, g);
        assert!((intensity_from_rabi(om, g) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn phase_rate_range() {
        // 10 to 20 cm/s over a 852 nm wave
        let lo = to_mhz(phase_rate(10.0)) * 1e3;
        let hi = to_mhz(phase_rate(20.0)) * 1e3;
        assert!((lo - 117.3).abs() < 0.5, "{lo}");
        assert!((hi - 234.6).abs() < 1.0, "{hi}");
    }
}
