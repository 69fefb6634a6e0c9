//! Non-interacting classical ensemble propagated on the bound surface,
//! dressed by whatever laser pulses are active.
//!
//! All elements share one clock, so the dressed force table is rebuilt
//! once per step and reused for every element. The rebuild schedule
//! depends only on the pulse sequence, which keeps each element's
//! trajectory identical whether it is propagated alone or in a batch.

use std::io::Write;

use crate::error::{QcmError, Result};
use crate::ionization::LaserPulse;
use crate::pes::{dressed_surface, DressingMode, PotentialSurface};
use crate::spectrum::InitialCondition;
use crate::units::{fs_to_au, D2_REDUCED_MASS};

/// Intensity fraction below which a pulse counts as over.
pub const PULSE_OFF_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Bound,
    Dissociated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleElement {
    pub v_label: usize,
    /// au
    pub r: f64,
    /// au / au-time
    pub velocity: f64,
    pub weight: f64,
    pub status: Status,
}

impl EnsembleElement {
    pub fn at_rest(ic: &InitialCondition) -> Self {
        EnsembleElement {
            v_label: ic.v,
            r: ic.r0,
            velocity: 0.0,
            weight: ic.weight,
            status: Status::Bound,
        }
    }
}

/// How the field enters the dressing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldMode {
    /// Quasi-static dressing by the pulse envelopes.
    #[default]
    Envelope,
    /// Dressing follows the instantaneous carrier field.
    Carrier,
}

impl std::str::FromStr for FieldMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "envelope" => Ok(FieldMode::Envelope),
            "carrier" => Ok(FieldMode::Carrier),
            other => Err(format!("unknown field mode {other:?}")),
        }
    }
}

impl std::fmt::Display for FieldMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FieldMode::Envelope => "envelope",
            FieldMode::Carrier => "carrier",
        })
    }
}

/// Time-stepping scheme. All are symplectic splittings of drift (position)
/// and kick (velocity) updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Second-order velocity Verlet.
    Verlet,
    /// Fourth-order Yoshida composition (three force evaluations per step).
    Yoshida4,
    /// Fourth-order Omelyan–Mryglod–Folk splitting with a small error
    /// constant (four force evaluations per step).
    #[default]
    Omelyan4,
}

struct Splitting {
    /// n + 1 drift fractions of dt.
    drifts: Vec<f64>,
    /// n kick fractions of dt, applied between drifts.
    kicks: Vec<f64>,
}

impl Integrator {
    fn splitting(self) -> Splitting {
        match self {
            Integrator::Verlet => Splitting {
                drifts: vec![0.5, 0.5],
                kicks: vec![1.0],
            },
            Integrator::Yoshida4 => {
                let c = 2f64.cbrt();
                let w1 = 1.0 / (2.0 - c);
                let w0 = -c / (2.0 - c);
                Splitting {
                    drifts: vec![0.5 * w1, 0.5 * (w1 + w0), 0.5 * (w0 + w1), 0.5 * w1],
                    kicks: vec![w1, w0, w1],
                }
            }
            Integrator::Omelyan4 => {
                let xi = 0.178_617_895_844_809_1;
                let lambda = -0.212_341_831_062_605_4;
                let chi = -0.066_264_582_669_818_5;
                let mid = 1.0 - 2.0 * (chi + xi);
                let outer = 0.5 * (1.0 - 2.0 * lambda);
                Splitting {
                    drifts: vec![xi, chi, mid, chi, xi],
                    kicks: vec![outer, lambda, lambda, outer],
                }
            }
        }
    }
}

impl std::str::FromStr for Integrator {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "verlet" => Ok(Integrator::Verlet),
            "yoshida4" => Ok(Integrator::Yoshida4),
            "omelyan4" => Ok(Integrator::Omelyan4),
            other => Err(format!("unknown integrator {other:?}")),
        }
    }
}

impl std::fmt::Display for Integrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Integrator::Verlet => "verlet",
            Integrator::Yoshida4 => "yoshida4",
            Integrator::Omelyan4 => "omelyan4",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    /// fs
    pub dt: f64,
    /// fs
    pub t_end: f64,
    /// au
    pub dissociation_radius: f64,
    pub record_stride: usize,
    /// Reduced mass, electron masses.
    pub mass: f64,
    pub dressing: DressingMode,
    pub field_mode: FieldMode,
    /// Field change (au) that triggers a rebuild of the dressed force table.
    pub rebuild_threshold: f64,
    pub integrator: Integrator,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            dt: 0.1,
            t_end: 500.0,
            dissociation_radius: 10.0,
            record_stride: 1,
            mass: D2_REDUCED_MASS,
            dressing: DressingMode::Adiabatic,
            field_mode: FieldMode::Envelope,
            rebuild_threshold: 1e-6,
            integrator: Integrator::Omelyan4,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self, bound: &PotentialSurface) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(QcmError::validation(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end > 0.0) {
            return Err(QcmError::validation(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if self.record_stride == 0 {
            return Err(QcmError::validation("record stride must be at least 1"));
        }
        if !(self.mass > 0.0) {
            return Err(QcmError::validation("mass must be positive"));
        }
        let (lo, hi) = bound.derivative_range();
        if !(self.dissociation_radius > lo && self.dissociation_radius < hi) {
            return Err(QcmError::validation(format!(
                "dissociation radius {} outside surface range ({lo}, {hi})",
                self.dissociation_radius
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Time between recorded samples, fs.
    pub fn sample_interval(&self) -> f64 {
        self.dt * self.record_stride as f64
    }
}

/// Sampled path of one element. Sample `i` is at time `i * sample_interval`.
/// Positions stop at the sample where the element was flagged dissociated.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub v_label: usize,
    pub weight: f64,
    /// fs
    pub sample_interval: f64,
    pub positions: Vec<f64>,
    /// Velocity at each recorded sample, au.
    pub velocities: Vec<f64>,
    /// Time (fs) at which the element was flagged dissociated.
    pub dissociated_at: Option<f64>,
    /// Total sample count of the run, including samples after dissociation.
    pub n_samples: usize,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_samples).map(move |i| i as f64 * self.sample_interval)
    }

    pub fn is_dissociated(&self) -> bool {
        self.dissociated_at.is_some()
    }

    pub fn status_at(&self, t_fs: f64) -> Status {
        match self.dissociated_at {
            Some(td) if t_fs >= td => Status::Dissociated,
            _ => Status::Bound,
        }
    }

    /// Position at sample `i`, or `None` once dissociated.
    pub fn position(&self, i: usize) -> Option<f64> {
        self.positions.get(i).copied()
    }

    pub fn duration(&self) -> f64 {
        (self.n_samples.saturating_sub(1)) as f64 * self.sample_interval
    }

    /// ½ μ v² + V(R) at every recorded sample.
    pub fn energies(&self, surface: &PotentialSurface, mass: f64) -> Result<Vec<f64>> {
        self.positions
            .iter()
            .zip(&self.velocities)
            .map(|(&r, &v)| Ok(0.5 * mass * v * v + surface.evaluate(r)?))
            .collect()
    }
}

/// Sum of the pulse fields at `t_fs` (each in its own phase mode).
pub fn total_field(pulses: &[LaserPulse], t_fs: f64) -> f64 {
    pulses.iter().map(|p| p.field_amplitude(t_fs)).sum()
}

fn dressing_field(pulses: &[LaserPulse], t_fs: f64, mode: FieldMode) -> f64 {
    match mode {
        FieldMode::Envelope => pulses.iter().map(|p| p.envelope(t_fs)).sum(),
        FieldMode::Carrier => total_field(pulses, t_fs).abs(),
    }
}

/// Time after which every pulse has dropped below [`PULSE_OFF_FRACTION`].
pub fn pulses_end(pulses: &[LaserPulse]) -> f64 {
    pulses
        .iter()
        .map(|p| p.end_time(PULSE_OFF_FRACTION))
        .fold(0.0, f64::max)
}

/// ½ μ v² + V(r) on `surface`.
pub fn energy_of(element: &EnsembleElement, surface: &PotentialSurface, mass: f64) -> Result<f64> {
    Ok(0.5 * mass * element.velocity * element.velocity + surface.evaluate(element.r)?)
}

/// Force table for the current field; rebuilt lazily.
struct ForceCache<'a> {
    bound: &'a PotentialSurface,
    repulsive: &'a PotentialSurface,
    dressing: DressingMode,
    threshold: f64,
    field: f64,
    dressed: Option<PotentialSurface>,
}

impl<'a> ForceCache<'a> {
    fn update(&mut self, field: f64) -> Result<()> {
        if field < self.threshold {
            self.field = 0.0;
            self.dressed = None;
        } else if self.dressed.is_none() || (field - self.field).abs() > self.threshold {
            self.dressed = Some(dressed_surface(self.bound, self.repulsive, field, self.dressing)?);
            self.field = field;
        }
        Ok(())
    }

    #[inline]
    fn surface(&self) -> &PotentialSurface {
        self.dressed.as_ref().unwrap_or(self.bound)
    }
}

/// Velocity-Verlet propagation of every element through the pulse sequence.
pub fn propagate(
    elements: &[EnsembleElement],
    bound: &PotentialSurface,
    repulsive: &PotentialSurface,
    pulses: &[LaserPulse],
    config: &PropagationConfig,
) -> Result<Vec<Trajectory>> {
    config.validate(bound)?;
    for p in pulses {
        p.validate()?;
    }
    for e in elements {
        if !(e.weight >= 0.0) {
            return Err(QcmError::validation(format!(
                "element v = {} has negative weight",
                e.v_label
            )));
        }
    }
    let steps = config.steps();
    let n_samples = steps / config.record_stride + 1;
    let dt = fs_to_au(config.dt);
    let mass = config.mass;
    let t_off = pulses_end(pulses);

    let mut cache = ForceCache {
        bound,
        repulsive,
        dressing: config.dressing,
        threshold: config.rebuild_threshold,
        field: 0.0,
        dressed: None,
    };
    cache.update(dressing_field(pulses, 0.0, config.field_mode))?;

    let mut state: Vec<EnsembleElement> = elements.to_vec();
    let mut trajectories: Vec<Trajectory> = elements
        .iter()
        .map(|e| Trajectory {
            v_label: e.v_label,
            weight: e.weight,
            sample_interval: config.sample_interval(),
            positions: Vec::with_capacity(n_samples),
            velocities: Vec::with_capacity(n_samples),
            dissociated_at: None,
            n_samples,
        })
        .collect();

    let check_low = |e: &EnsembleElement, surf: &PotentialSurface| -> Result<()> {
        let (lo, _) = surf.derivative_range();
        if e.r < lo {
            return Err(QcmError::Integrator(format!(
                "element v = {} reached R = {:.4} au below the surface grid (min {lo}); \
                 reduce dt or check the surface",
                e.v_label, e.r
            )));
        }
        Ok(())
    };

    for (e, traj) in state.iter_mut().zip(trajectories.iter_mut()) {
        check_low(e, cache.surface())?;
        if e.status == Status::Dissociated || e.r > config.dissociation_radius {
            e.status = Status::Dissociated;
            traj.dissociated_at = Some(0.0);
        } else {
            cache.surface().derivative(e.r)?;
            traj.positions.push(e.r);
            traj.velocities.push(e.velocity);
        }
    }

    let split = config.integrator.splitting();
    let r_top = config.dissociation_radius.min(bound.derivative_range().1);
    for step in 1..=steps {
        let t0 = (step - 1) as f64 * config.dt;
        let t = step as f64 * config.dt;
        let record = step % config.record_stride == 0;
        let mut escaped = vec![false; state.len()];
        let mut clock = 0.0;
        for (i, &d) in split.drifts.iter().enumerate() {
            clock += d;
            for (e, gone) in state.iter_mut().zip(escaped.iter_mut()) {
                if e.status == Status::Bound && !*gone {
                    e.r += d * dt * e.velocity;
                    if e.r > r_top {
                        *gone = true;
                    }
                }
            }
            let Some(&k) = split.kicks.get(i) else { break };
            cache.update(dressing_field(pulses, t0 + clock * config.dt, config.field_mode))?;
            let surf = cache.surface();
            for (e, gone) in state.iter_mut().zip(&escaped) {
                if e.status == Status::Bound && !*gone {
                    check_low(e, surf)?;
                    e.velocity -= k * dt * surf.derivative_unchecked(e.r) / mass;
                }
            }
        }
        for ((e, traj), gone) in state.iter_mut().zip(trajectories.iter_mut()).zip(&escaped) {
            if e.status == Status::Dissociated {
                continue;
            }
            let unbound = !gone
                && t >= t_off
                && 0.5 * mass * e.velocity * e.velocity + bound.evaluate_unchecked(e.r) > 0.0;
            if *gone || unbound {
                e.status = Status::Dissociated;
                traj.dissociated_at = Some(t);
                continue;
            }
            if record {
                traj.positions.push(e.r);
                traj.velocities.push(e.velocity);
            }
        }
    }
    Ok(trajectories)
}

/// Elements at rest at their initial conditions.
pub fn elements_from(ics: &[InitialCondition]) -> Vec<EnsembleElement> {
    ics.iter().map(EnsembleElement::at_rest).collect()
}

/// CSV with `t_fs` then one R column per element, blank after dissociation.
pub fn write_trajectories_csv<W: Write>(out: &mut W, trajectories: &[Trajectory]) -> std::io::Result<()> {
    write!(out, "t_fs")?;
    for t in trajectories {
        write!(out, ",v{}", t.v_label)?;
    }
    writeln!(out)?;
    let (n, dt) = trajectories
        .first()
        .map(|t| (t.n_samples, t.sample_interval))
        .unwrap_or((0, 0.0));
    for i in 0..n {
        write!(out, "{:.4}", i as f64 * dt)?;
        for t in trajectories {
            match t.position(i) {
                Some(r) => write!(out, ",{r:.10}")?,
                None => write!(out, ",")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Binary dump, little-endian throughout:
/// `u64 element_count, u64 record_stride, f64 dt_fs, u64 n_samples`, then
/// `n_samples × element_count` f64 positions in time-major order, NaN after
/// dissociation.
pub fn write_trajectories_binary<W: Write>(
    out: &mut W,
    trajectories: &[Trajectory],
    config: &PropagationConfig,
) -> std::io::Result<()> {
    let n = trajectories.first().map(|t| t.n_samples).unwrap_or(0);
    out.write_all(&(trajectories.len() as u64).to_le_bytes())?;
    out.write_all(&(config.record_stride as u64).to_le_bytes())?;
    out.write_all(&config.dt.to_le_bytes())?;
    out.write_all(&(n as u64).to_le_bytes())?;
    for i in 0..n {
        for t in trajectories {
            out.write_all(&t.position(i).unwrap_or(f64::NAN).to_le_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::au_to_fs;

    fn harmonic(k: f64) -> PotentialSurface {
        let (r, v): (Vec<f64>, Vec<f64>) = (0..981)
            .map(|i| {
                let r = 0.4 + 0.02 * i as f64;
                (r, 0.5 * k * (r - 2.0).powi(2) - 0.5)
            })
            .unzip();
        PotentialSurface::from_table("h", &r, &v).unwrap()
    }

    fn flat() -> PotentialSurface {
        let (r, v): (Vec<f64>, Vec<f64>) = (0..981).map(|i| (0.4 + 0.02 * i as f64, 1.0)).unzip();
        PotentialSurface::from_table("u", &r, &v).unwrap()
    }

    fn element(r: f64) -> EnsembleElement {
        EnsembleElement {
            v_label: 0,
            r,
            velocity: 0.0,
            weight: 1.0,
            status: Status::Bound,
        }
    }

    #[test]
    fn harmonic_returns_to_turning_point() {
        let k = 0.01;
        let s = harmonic(k);
        let period = au_to_fs(2.0 * std::f64::consts::PI * (D2_REDUCED_MASS / k).sqrt());
        let cfg = PropagationConfig {
            dt: period / 400.0,
            t_end: 10.0 * period,
            ..Default::default()
        };
        let traj = propagate(&[element(1.5)], &s, &flat(), &[], &cfg).unwrap();
        for cycle in 1..=10 {
            let r = traj[0].positions[cycle * 400];
            assert!((r - 1.5).abs() < 1e-3, "cycle {cycle}: {r}");
        }
    }

    #[test]
    fn total_field_linear() {
        assert_eq!(total_field(&[], 3.0), 0.0);
        let p = LaserPulse::new(3.5e13, 7.0, 24.0)
            .unwrap()
            .with_phase_mode(crate::ionization::PhaseMode::Envelope);
        let single = total_field(std::slice::from_ref(&p), 24.0);
        assert_eq!(single, p.envelope(24.0));
        assert_eq!(total_field(&[p.clone(), p], 24.0), 2.0 * single);
    }

    #[test]
    fn energy_at_turning_point_is_potential() {
        let s = harmonic(0.01);
        let e = element(1.7);
        assert_eq!(
            energy_of(&e, &s, D2_REDUCED_MASS).unwrap(),
            s.evaluate(1.7).unwrap()
        );
        assert!(energy_of(&element(50.0), &s, D2_REDUCED_MASS).is_err());
    }

    #[test]
    fn falling_off_the_grid_is_an_error() {
        let s = harmonic(0.01);
        let mut e = element(0.5);
        e.velocity = -1.0;
        let cfg = PropagationConfig {
            t_end: 10.0,
            ..Default::default()
        };
        assert!(matches!(
            propagate(&[e], &s, &flat(), &[], &cfg),
            Err(QcmError::Integrator(_))
        ));
    }

    #[test]
    fn escaping_element_is_flagged() {
        let s = harmonic(0.01);
        let mut e = element(3.0);
        e.velocity = 0.05;
        let cfg = PropagationConfig {
            t_end: 100.0,
            ..Default::default()
        };
        let t = propagate(&[e], &s, &flat(), &[], &cfg).unwrap();
        assert!(t[0].is_dissociated());
        assert_eq!(t[0].status_at(99.0), Status::Dissociated);
        assert_eq!(t[0].status_at(0.0), Status::Bound);
        assert!(t[0].positions.len() < t[0].n_samples);
    }

    #[test]
    fn bad_config_rejected() {
        let s = harmonic(0.01);
        for cfg in [
            PropagationConfig {
                dt: 0.0,
                ..Default::default()
            },
            PropagationConfig {
                t_end: -1.0,
                ..Default::default()
            },
            PropagationConfig {
                record_stride: 0,
                ..Default::default()
            },
            PropagationConfig {
                dissociation_radius: 50.0,
                ..Default::default()
            },
        ] {
            assert!(propagate(&[element(1.5)], &s, &flat(), &[], &cfg).is_err());
        }
    }

    #[test]
    fn csv_blank_after_dissociation() {
        let traj = Trajectory {
            v_label: 3,
            weight: 1.0,
            sample_interval: 0.5,
            positions: vec![1.0, 2.0],
            velocities: vec![0.0, 0.0],
            dissociated_at: Some(1.0),
            n_samples: 3,
        };
        let mut buf = Vec::new();
        write_trajectories_csv(&mut buf, &[traj]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t_fs,v3\n0.0000,1.0000000000\n0.5000,2.0000000000\n1.0000,\n"
        );
    }

    #[test]
    fn binary_header_layout() {
        let traj = Trajectory {
            v_label: 0,
            weight: 1.0,
            sample_interval: 0.1,
            positions: vec![1.5],
            velocities: vec![0.0],
            dissociated_at: Some(0.1),
            n_samples: 2,
        };
        let mut buf = Vec::new();
        write_trajectories_binary(&mut buf, &[traj], &PropagationConfig::default()).unwrap();
        assert_eq!(buf.len(), 32 + 16);
        assert_eq!(u64::from_le_bytes(buf[0..8].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), 0.1);
        assert_eq!(f64::from_le_bytes(buf[32..40].try_into().unwrap()), 1.5);
        assert!(f64::from_le_bytes(buf[40..48].try_into().unwrap()).is_nan());
    }
}
