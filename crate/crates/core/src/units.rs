//! Conversion table between the laboratory units used at the interface
//! (fs, W cm^-2, nm) and the atomic units used internally.

/// One atomic unit of time in femtoseconds.
pub const AU_TIME_FS: f64 = 0.024_188_843_265_857;

/// Intensity (W cm^-2) of a field whose amplitude is one atomic unit.
pub const AU_INTENSITY_W_CM2: f64 = 3.509_45e16;

/// Photon energy in hartree times wavelength in nm (hc in au·nm).
pub const HARTREE_NM: f64 = 45.563_352_5;

/// Deuteron mass in electron masses.
pub const DEUTERON_MASS: f64 = 3670.48;

/// Reduced mass of two deuterons, electron masses.
pub const D2_REDUCED_MASS: f64 = DEUTERON_MASS / 2.0;

/// Ionization energy of atomic hydrogen, hartree. Aligns the H + H and
/// H + H+ asymptotes when forming vertical ionization potentials.
pub const HYDROGEN_IP: f64 = 0.5;

#[inline]
pub fn fs_to_au(t_fs: f64) -> f64 {
    t_fs / AU_TIME_FS
}

#[inline]
pub fn au_to_fs(t_au: f64) -> f64 {
    t_au * AU_TIME_FS
}

/// Peak field amplitude (au) for a cycle-averaged intensity in W cm^-2.
#[inline]
pub fn intensity_to_field(intensity_w_cm2: f64) -> f64 {
    (intensity_w_cm2 / AU_INTENSITY_W_CM2).sqrt()
}

/// Carrier angular frequency (au) for a wavelength in nm.
#[inline]
pub fn wavelength_to_omega(wavelength_nm: f64) -> f64 {
    HARTREE_NM / wavelength_nm
}

/// Frequency in fs^-1 to the equivalent energy spacing in hartree.
#[inline]
pub fn frequency_to_energy(freq_per_fs: f64) -> f64 {
    2.0 * std::f64::consts::PI * freq_per_fs * AU_TIME_FS
}

/// Energy spacing (hartree) to the corresponding beat frequency in fs^-1.
#[inline]
pub fn energy_to_frequency(energy_au: f64) -> f64 {
    energy_au / (2.0 * std::f64::consts::PI * AU_TIME_FS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_field_fixed_point() {
        assert_eq!(intensity_to_field(AU_INTENSITY_W_CM2), 1.0);
    }

    #[test]
    fn energy_frequency_roundtrip() {
        let e = 0.0063;
        assert!((frequency_to_energy(energy_to_frequency(e)) - e).abs() < 1e-15);
        assert!((au_to_fs(fs_to_au(24.0)) - 24.0).abs() < 1e-12);
    }

    #[test]
    fn eight_hundred_nm_carrier() {
        let w = wavelength_to_omega(800.0);
        assert!((w - 0.056954).abs() < 1e-5);
        // optical period ~2.67 fs
        let period = au_to_fs(2.0 * std::f64::consts::PI / w);
        assert!((period - 2.6685).abs() < 1e-3);
    }
}
