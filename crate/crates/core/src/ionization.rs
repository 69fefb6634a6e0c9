//! Pump-pulse ionization of the neutral and the resulting vibrational
//! population of the ion.
//!
//! The cycle-resolved rate is the nonadiabatic (Yudin–Ivanov) form: a
//! PPT-type exponent that depends on the Keldysh parameter and on the
//! instantaneous laser phase, with an ADK/hydrogenic prefactor. Ionization
//! at each internuclear separation uses the vertical ionization potential
//! of the two surfaces at that R.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{QcmError, Result};
use crate::pes::{ionization_potential, PotentialSurface};
use crate::spectrum::{initial_positions, VibSpectrum};
use crate::units::{fs_to_au, intensity_to_field, wavelength_to_omega, HYDROGEN_IP};

/// How a pulse's field is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseMode {
    /// Gaussian envelope only; rates are cycle-averaged.
    Envelope,
    /// Envelope times cos(ω(t - t0) + φ).
    #[default]
    CarrierResolved,
}

impl FromStr for PhaseMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "envelope" => Ok(PhaseMode::Envelope),
            "carrier" | "carrier-resolved" => Ok(PhaseMode::CarrierResolved),
            other => Err(format!("unknown phase mode {other:?}")),
        }
    }
}

impl fmt::Display for PhaseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhaseMode::Envelope => "envelope",
            PhaseMode::CarrierResolved => "carrier",
        })
    }
}

/// Measured field E(t), linearly interpolated and zero outside its range.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedField {
    times_fs: Vec<f64>,
    field_au: Vec<f64>,
}

impl TabulatedField {
    pub fn new(times_fs: Vec<f64>, field_au: Vec<f64>) -> Result<Self> {
        if times_fs.len() != field_au.len() || times_fs.len() < 2 {
            return Err(QcmError::validation(
                "tabulated field needs matching time and field columns with >= 2 rows",
            ));
        }
        if times_fs.iter().chain(&field_au).any(|x| !x.is_finite()) {
            return Err(QcmError::validation("tabulated field contains non-finite values"));
        }
        if times_fs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(QcmError::validation("tabulated field times must be increasing"));
        }
        Ok(TabulatedField { times_fs, field_au })
    }

    pub fn at(&self, t_fs: f64) -> f64 {
        let t = &self.times_fs;
        if t_fs < t[0] || t_fs > t[t.len() - 1] {
            return 0.0;
        }
        let i = t.partition_point(|&x| x <= t_fs).clamp(1, t.len() - 1);
        let s = (t_fs - t[i - 1]) / (t[i] - t[i - 1]);
        self.field_au[i - 1] * (1.0 - s) + self.field_au[i] * s
    }

    pub fn time_range(&self) -> (f64, f64) {
        (self.times_fs[0], *self.times_fs.last().unwrap())
    }
}

/// Gaussian-envelope laser pulse. Intensities in W cm^-2, times in fs.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserPulse {
    pub peak_intensity: f64,
    /// Intensity FWHM, fs.
    pub fwhm: f64,
    pub center_time: f64,
    /// nm
    pub wavelength: f64,
    pub phase_mode: PhaseMode,
    /// Carrier-envelope phase, rad.
    pub carrier_phase: f64,
    pub tabulated: Option<TabulatedField>,
}

impl LaserPulse {
    pub fn new(peak_intensity: f64, fwhm: f64, center_time: f64) -> Result<Self> {
        let p = LaserPulse {
            peak_intensity,
            fwhm,
            center_time,
            wavelength: 800.0,
            phase_mode: PhaseMode::default(),
            carrier_phase: 0.0,
            tabulated: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_phase_mode(mut self, mode: PhaseMode) -> Self {
        self.phase_mode = mode;
        self
    }

    pub fn with_wavelength(mut self, wavelength_nm: f64) -> Result<Self> {
        self.wavelength = wavelength_nm;
        self.validate()?;
        Ok(self)
    }

    pub fn with_tabulated(mut self, field: TabulatedField) -> Self {
        self.tabulated = Some(field);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_intensity > 0.0 && self.peak_intensity.is_finite()) {
            return Err(QcmError::validation(format!(
                "peak intensity must be positive, got {}",
                self.peak_intensity
            )));
        }
        if !(self.fwhm > 0.0 && self.fwhm.is_finite()) {
            return Err(QcmError::validation(format!(
                "fwhm must be positive, got {}",
                self.fwhm
            )));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(QcmError::validation(format!(
                "wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        if !self.center_time.is_finite() {
            return Err(QcmError::validation("pulse center time must be finite"));
        }
        Ok(())
    }

    /// Carrier angular frequency, au.
    pub fn omega(&self) -> f64 {
        wavelength_to_omega(self.wavelength)
    }

    /// I(t) / I0 of the Gaussian envelope.
    pub fn relative_intensity(&self, t_fs: f64) -> f64 {
        let dt = t_fs - self.center_time;
        (-4.0 * std::f64::consts::LN_2 * dt * dt / (self.fwhm * self.fwhm)).exp()
    }

    /// Envelope field magnitude, au.
    pub fn envelope(&self, t_fs: f64) -> f64 {
        match &self.tabulated {
            Some(tab) => tab.at(t_fs).abs(),
            None => intensity_to_field(self.peak_intensity * self.relative_intensity(t_fs)),
        }
    }

    /// Field at `t_fs` in au: the envelope, or envelope times carrier in
    /// carrier-resolved mode. A tabulated override is returned as given.
    pub fn field_amplitude(&self, t_fs: f64) -> f64 {
        if let Some(tab) = &self.tabulated {
            return tab.at(t_fs);
        }
        let env = self.envelope(t_fs);
        match self.phase_mode {
            PhaseMode::Envelope => env,
            PhaseMode::CarrierResolved => env * self.carrier_angle(t_fs).cos(),
        }
    }

    /// Instantaneous carrier phase ω(t - t0) + φ.
    pub fn carrier_angle(&self, t_fs: f64) -> f64 {
        self.omega() * fs_to_au(t_fs - self.center_time) + self.carrier_phase
    }

    /// Time after which the intensity stays below `fraction` of its peak.
    pub fn end_time(&self, fraction: f64) -> f64 {
        match &self.tabulated {
            Some(tab) => tab.time_range().1,
            None => {
                self.center_time + self.fwhm * ((1.0 / fraction).ln() / (4.0 * std::f64::consts::LN_2)).sqrt()
            }
        }
    }

    /// Interval over which the pulse is integrated (intensity above ~3e-8 of
    /// peak for the Gaussian).
    pub fn support(&self) -> (f64, f64) {
        match &self.tabulated {
            Some(tab) => tab.time_range(),
            None => (
                self.center_time - 2.5 * self.fwhm,
                self.center_time + 2.5 * self.fwhm,
            ),
        }
    }
}

/// Gaussian model of the neutral's v' = 0 probability density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeutralGroundState {
    /// au
    pub center: f64,
    /// Standard deviation of |ψ|², au.
    pub width: f64,
}

impl NeutralGroundState {
    pub fn new(center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || !center.is_finite() {
            return Err(QcmError::validation(format!(
                "ground state needs finite center and positive width, got {center}, {width}"
            )));
        }
        Ok(NeutralGroundState { center, width })
    }

    /// Width from the harmonic frequency at the minimum of `neutral`:
    /// σ = 1/sqrt(2 μ ω), ω = sqrt(V''/μ).
    pub fn from_surface(neutral: &PotentialSurface, mass: f64, center: f64) -> Result<Self> {
        let (r_eq, _) = neutral.minimum();
        let d = 1e-3;
        let k = (neutral.derivative(r_eq + d)? - neutral.derivative(r_eq - d)?) / (2.0 * d);
        if !(k > 0.0) {
            return Err(QcmError::validation(
                "neutral surface has no curvature at its minimum",
            ));
        }
        let omega = (k / mass).sqrt();
        Self::new(center, (1.0 / (2.0 * mass * omega)).sqrt())
    }

    /// |ψ(R)|², normalized to one.
    pub fn density(&self, r: f64) -> f64 {
        let z = (r - self.center) / self.width;
        (-0.5 * z * z).exp() / (self.width * (2.0 * PI).sqrt())
    }

    /// ψ(R), real and positive.
    pub fn amplitude(&self, r: f64) -> f64 {
        self.density(r).sqrt()
    }
}

/// Normalized vibrational populations of the ion.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPopulation {
    pub weights: Vec<f64>,
    /// ∫ |ψ(R)|² ∫ Γ dt dR: the rate integrated over the pump, averaged
    /// over the neutral's distribution.
    pub relative_yield: f64,
    /// ∫ Γ dt at the peak of |ψ(R)|.
    pub peak_yield: f64,
}

impl InitialPopulation {
    pub fn from_weights(raw: &[f64]) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) || raw.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(QcmError::validation(
                "population weights must be non-negative with a positive sum",
            ));
        }
        Ok(InitialPopulation {
            weights: raw.iter().map(|w| w / total).collect(),
            relative_yield: 0.0,
            peak_yield: 0.0,
        })
    }

    /// Level holding the most population.
    pub fn dominant(&self) -> usize {
        argmax(&self.weights)
    }

    pub fn mean_level(&self) -> f64 {
        self.weights.iter().enumerate().map(|(v, w)| v as f64 * w).sum()
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &x)| {
                if x > best.1 {
                    (i, x)
                } else {
                    best
                }
            },
        )
        .0
}

/// Σ |a_i - b_i| over the common length (missing entries count as zero).
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonizationOptions {
    /// Added to V_ion - V_neutral to form I_p(R), au.
    pub channel_offset: f64,
    /// Pump integration step, fs.
    pub time_step: f64,
    /// Charge of the residual ion.
    pub charge: f64,
    /// Spacing of the R samples of the transfer profile, au.
    pub r_step: f64,
}

impl Default for IonizationOptions {
    fn default() -> Self {
        IonizationOptions {
            channel_offset: HYDROGEN_IP,
            time_step: 0.05,
            charge: 1.0,
            r_step: 0.01,
        }
    }
}

/// Below this Keldysh parameter the exponent is evaluated in its static
/// limit to avoid cancellation.
const STATIC_GAMMA: f64 = 1e-3;
const CYCLE_POINTS: usize = 64;

fn ln_prefactor(ip: f64, charge: f64, field: f64, gamma: f64) -> f64 {
    let kappa = (2.0 * ip).sqrt();
    let n_star = charge / kappa;
    // |C_{n*l*}|² for l = 0: 2^{2n*} / (n* Γ(2n*)).
    let ln_c2 = 2.0 * n_star * std::f64::consts::LN_2 - n_star.ln() - ln_gamma(2.0 * n_star);
    let keldysh_ratio = if gamma < STATIC_GAMMA {
        1.0 - 0.9 * gamma * gamma
    } else {
        3.0 * (gamma.asinh() - gamma / (1.0 + gamma * gamma).sqrt()) / gamma.powi(3)
    };
    ln_c2 + ip.ln() + 0.5 * keldysh_ratio.ln() + (2.0 * n_star - 1.0) * (2.0 * kappa.powi(3) / field).ln()
}

/// Nonadiabatic exponent Φ(γ, θ); the rate goes as exp(-F²Φ/ω³).
fn phase_exponent(gamma: f64, theta: f64) -> f64 {
    let s = theta.sin();
    let s2 = s * s;
    let g2 = gamma * gamma;
    let a = 1.0 + g2 - s2;
    let b = (a * a + 4.0 * g2 * s2).sqrt();
    let bm = (b - a).max(0.0);
    let c = (((b + a) / 2.0).sqrt() + gamma).powi(2) + ((bm / 2.0).sqrt() + s.abs()).powi(2);
    (g2 + s2 + 0.5) * 0.5 * c.ln()
        - 3.0 * bm.sqrt() / (2.0 * std::f64::consts::SQRT_2) * s.abs()
        - (b + a).sqrt() / (2.0 * std::f64::consts::SQRT_2) * gamma
}

/// Cycle-resolved nonadiabatic ionization rate (per au of time) for an
/// envelope field `field` (au), ionization potential `ip` (au), carrier
/// frequency `omega` (au) and instantaneous carrier phase θ, the field
/// being F cos θ.
pub fn nonadiabatic_rate(field: f64, ip: f64, omega: f64, instantaneous_phase: f64) -> Result<f64> {
    rate_with_charge(field, ip, omega, instantaneous_phase, 1.0)
}

pub fn rate_with_charge(
    field: f64,
    ip: f64,
    omega: f64,
    instantaneous_phase: f64,
    charge: f64,
) -> Result<f64> {
    if !(ip > 0.0) {
        return Err(QcmError::validation(format!(
            "ionization potential must be positive, got {ip}"
        )));
    }
    if !(field >= 0.0) {
        return Err(QcmError::validation(format!(
            "field must be non-negative, got {field}"
        )));
    }
    if !(omega > 0.0) {
        return Err(QcmError::validation(format!(
            "frequency must be positive, got {omega}"
        )));
    }
    if field == 0.0 {
        return Ok(0.0);
    }
    let kappa = (2.0 * ip).sqrt();
    let gamma = omega * kappa / field;
    let exponent = if gamma < STATIC_GAMMA {
        let c = instantaneous_phase.cos().abs();
        if c == 0.0 {
            return Ok(0.0);
        }
        2.0 * kappa.powi(3) / (3.0 * field * c)
    } else {
        field * field / omega.powi(3) * phase_exponent(gamma, instantaneous_phase)
    };
    Ok((ln_prefactor(ip, charge, field, gamma) - exponent).exp())
}

/// Rate averaged over one optical cycle at fixed envelope.
pub fn cycle_averaged_rate(field: f64, ip: f64, omega: f64, charge: f64) -> Result<f64> {
    let mut acc = 0.0;
    for k in 0..CYCLE_POINTS {
        let theta = 2.0 * PI * k as f64 / CYCLE_POINTS as f64;
        acc += rate_with_charge(field, ip, omega, theta, charge)?;
    }
    Ok(acc / CYCLE_POINTS as f64)
}

/// ∫ Γ(t) dt over the pump for a fixed ionization potential.
pub fn integrated_rate(pump: &LaserPulse, ip: f64, options: &IonizationOptions) -> Result<f64> {
    let (t0, t1) = pump.support();
    let n = ((t1 - t0) / options.time_step).ceil() as usize;
    let dt_au = fs_to_au(options.time_step);
    let omega = pump.omega();
    let mut total = 0.0;
    for k in 0..=n {
        let t = t0 + k as f64 * options.time_step;
        let rate = match (&pump.tabulated, pump.phase_mode) {
            (Some(tab), _) => rate_with_charge(tab.at(t).abs(), ip, omega, 0.0, options.charge)?,
            (None, PhaseMode::Envelope) => cycle_averaged_rate(pump.envelope(t), ip, omega, options.charge)?,
            (None, PhaseMode::CarrierResolved) => {
                rate_with_charge(pump.envelope(t), ip, omega, pump.carrier_angle(t), options.charge)?
            }
        };
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        total += w * rate;
    }
    Ok(total * dt_au)
}

/// P_ion(R) · |ψ(R)|² at one separation.
pub fn transfer_probability(
    pump: &LaserPulse,
    neutral: &PotentialSurface,
    ion: &PotentialSurface,
    ground: &NeutralGroundState,
    r: f64,
    options: &IonizationOptions,
) -> Result<f64> {
    let ip = ionization_potential(neutral, ion, r, options.channel_offset)?;
    let p_ion = 1.0 - (-integrated_rate(pump, ip, options)?).exp();
    Ok(p_ion * ground.density(r))
}

/// P_trans sampled over R, with the intermediate quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferProfile {
    pub r: Vec<f64>,
    pub integrated_rate: Vec<f64>,
    pub density: Vec<f64>,
    pub p_trans: Vec<f64>,
    pub peak_yield: f64,
}

impl TransferProfile {
    /// ∫ |ψ|² ∫Γdt dR by the trapezoid rule.
    pub fn relative_yield(&self) -> f64 {
        let f: Vec<f64> = self
            .density
            .iter()
            .zip(&self.integrated_rate)
            .map(|(d, g)| d * g)
            .collect();
        integrate_linear(&self.r, &f, self.r[0], *self.r.last().unwrap())
    }
}

pub fn transfer_profile(
    pump: &LaserPulse,
    neutral: &PotentialSurface,
    ion: &PotentialSurface,
    ground: &NeutralGroundState,
    options: &IonizationOptions,
) -> Result<TransferProfile> {
    pump.validate()?;
    let lo = neutral.r_min().max(ion.r_min());
    let hi = neutral
        .r_max()
        .min(ion.r_max())
        .min(ion.minimum().0.max(ground.center + 8.0 * ground.width));
    let n = ((hi - lo) / options.r_step).floor() as usize + 1;
    let r: Vec<f64> = (0..n).map(|i| lo + i as f64 * options.r_step).collect();
    let integrated: Vec<f64> = r
        .par_iter()
        .map(|&ri| {
            let ip = ionization_potential(neutral, ion, ri, options.channel_offset)?;
            integrated_rate(pump, ip, options)
        })
        .collect::<Result<_>>()?;
    let density: Vec<f64> = r.iter().map(|&ri| ground.density(ri)).collect();
    let p_trans = integrated
        .iter()
        .zip(&density)
        .map(|(g, d)| (1.0 - (-g).exp()) * d)
        .collect();
    let ip_peak = ionization_potential(neutral, ion, ground.center, options.channel_offset)?;
    Ok(TransferProfile {
        r,
        integrated_rate: integrated,
        density,
        p_trans,
        peak_yield: integrated_rate(pump, ip_peak, options)?,
    })
}

/// ∫_a^b of the piecewise-linear interpolant of (x, f).
pub(crate) fn integrate_linear(x: &[f64], f: &[f64], a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let interp = |t: f64, i: usize| f[i] + (f[i + 1] - f[i]) * (t - x[i]) / (x[i + 1] - x[i]);
    let mut total = 0.0;
    for i in 0..x.len().saturating_sub(1) {
        let lo = x[i].max(a);
        let hi = x[i + 1].min(b);
        if hi > lo {
            total += 0.5 * (interp(lo, i) + interp(hi, i)) * (hi - lo);
        }
    }
    total
}

/// Bands P_trans(R) onto the levels: level v collects the inner-wall
/// interval between its own mid-point crossing and the one below it (the
/// potential minimum for v = 0).
pub fn project_populations(
    profile: &TransferProfile,
    spectrum: &VibSpectrum,
    surface: &PotentialSurface,
) -> Result<InitialPopulation> {
    let ics = initial_positions(spectrum, surface)?;
    let r_eq = surface.minimum().0;
    let raw: Vec<f64> = ics
        .iter()
        .enumerate()
        .map(|(v, ic)| {
            let upper = if v == 0 { r_eq } else { ics[v - 1].r0 };
            integrate_linear(&profile.r, &profile.p_trans, ic.r0, upper)
        })
        .collect();
    let mut pop = InitialPopulation::from_weights(&raw)
        .map_err(|_| QcmError::validation("pump transfers no population into bound levels"))?;
    pop.relative_yield = profile.relative_yield();
    pop.peak_yield = profile.peak_yield;
    Ok(pop)
}

/// Initial population for a pump pulse, with the profile it came from.
pub fn initial_population(
    pump: &LaserPulse,
    neutral: &PotentialSurface,
    ion: &PotentialSurface,
    ground: &NeutralGroundState,
    spectrum: &VibSpectrum,
    options: &IonizationOptions,
) -> Result<(InitialPopulation, TransferProfile)> {
    let profile = transfer_profile(pump, neutral, ion, ground, options)?;
    let pop = project_populations(&profile, spectrum, ion)?;
    Ok((pop, profile))
}

/// |<χ_v|ψ>|² for an arbitrary real amplitude ψ(R), normalized over the
/// levels in `spectrum`.
pub fn franck_condon_weights(
    amplitude: impl Fn(f64) -> f64,
    spectrum: &VibSpectrum,
) -> Result<InitialPopulation> {
    let h = spectrum.grid_step();
    let psi: Vec<f64> = spectrum.grid().iter().map(|&r| amplitude(r)).collect();
    let raw: Vec<f64> = (0..spectrum.len())
        .map(|v| {
            let s: f64 = spectrum
                .wavefunction(v)
                .iter()
                .zip(&psi)
                .map(|(a, b)| a * b)
                .sum();
            (s * h).powi(2)
        })
        .collect();
    InitialPopulation::from_weights(&raw)
}

/// Franck–Condon distribution from the neutral's Gaussian ground state.
pub fn franck_condon_reference(
    ground: &NeutralGroundState,
    spectrum: &VibSpectrum,
) -> Result<InitialPopulation> {
    franck_condon_weights(|r| ground.amplitude(r), spectrum)
}
