//! End-to-end pump / control / probe runs on a fixed set of surfaces.

use rayon::prelude::*;

use crate::analysis::{
    build_population_matrix, match_trajectory, phase_report, probe_scan, MatchResult, MatchWindow,
    PhaseReport, PopulationMatrix, WeightSharing,
};
use crate::ensemble::{propagate, EnsembleElement, PropagationConfig, Trajectory, PULSE_OFF_FRACTION};
use crate::error::{QcmError, Result};
use crate::ionization::{
    franck_condon_reference, initial_population, InitialPopulation, IonizationOptions, LaserPulse,
    NeutralGroundState, TransferProfile,
};
use crate::pes::{bundled, PotentialSurface};
use crate::spectrum::{bound_states, initial_positions, period_of, InitialCondition, VibSpectrum};
use crate::units::D2_REDUCED_MASS;

/// Levels carried by the ensemble by default (v = 0..18).
pub const DEFAULT_LEVELS: usize = 19;
/// Centre of the neutral's ground-state Gaussian, au.
pub const GROUND_CENTER: f64 = 1.40;

/// Surfaces, spectrum and the per-level starting data derived from them.
#[derive(Debug, Clone)]
pub struct Model {
    pub neutral: PotentialSurface,
    pub bound: PotentialSurface,
    pub repulsive: PotentialSurface,
    pub mass: f64,
    /// Every bound level of `bound`.
    pub spectrum: VibSpectrum,
    pub ground: NeutralGroundState,
    /// Starting points of the ensemble levels.
    pub initial_conditions: Vec<InitialCondition>,
    /// Classical periods of the ensemble levels, fs.
    pub periods: Vec<f64>,
}

impl Model {
    pub fn new(
        neutral: PotentialSurface,
        bound: PotentialSurface,
        repulsive: PotentialSurface,
        mass: f64,
        levels: usize,
    ) -> Result<Self> {
        if levels < 2 {
            return Err(QcmError::validation("the ensemble needs at least two levels"));
        }
        let spectrum = bound_states(&bound, mass, usize::MAX - 1)?;
        if spectrum.len() < levels {
            return Err(QcmError::validation(format!(
                "{levels} levels requested but the surface binds only {}",
                spectrum.len()
            )));
        }
        let mut ics = initial_positions(&spectrum, &bound)?;
        ics.truncate(levels);
        let periods = (0..levels)
            .into_par_iter()
            .map(|v| period_of(&spectrum, &bound, v))
            .collect::<Result<Vec<_>>>()?;
        let ground = NeutralGroundState::from_surface(&neutral, mass, GROUND_CENTER)?;
        Ok(Model {
            neutral,
            bound,
            repulsive,
            mass,
            spectrum,
            ground,
            initial_conditions: ics,
            periods,
        })
    }

    /// D₂ / D₂⁺ surfaces shipped with the crate.
    pub fn bundled(levels: usize) -> Result<Self> {
        Self::new(
            bundled::d2_neutral()?,
            bundled::d2plus_1ssg()?,
            bundled::d2plus_2psu()?,
            D2_REDUCED_MASS,
            levels,
        )
    }

    pub fn levels(&self) -> usize {
        self.initial_conditions.len()
    }

    pub fn longest_period(&self) -> f64 {
        self.periods.iter().copied().fold(0.0, f64::max)
    }

    /// Pump-created population over the ensemble levels. Weight banded onto
    /// levels above the ensemble is dropped and the rest renormalized.
    pub fn pump_population(
        &self,
        pump: &LaserPulse,
        options: &IonizationOptions,
    ) -> Result<(InitialPopulation, TransferProfile)> {
        let (full, profile) = initial_population(
            pump,
            &self.neutral,
            &self.bound,
            &self.ground,
            &self.spectrum,
            options,
        )?;
        Ok((self.truncate(&full)?, profile))
    }

    /// Franck–Condon distribution over the ensemble levels.
    pub fn franck_condon(&self) -> Result<InitialPopulation> {
        self.truncate(&franck_condon_reference(&self.ground, &self.spectrum)?)
    }

    fn truncate(&self, pop: &InitialPopulation) -> Result<InitialPopulation> {
        let mut out = InitialPopulation::from_weights(&pop.weights[..self.levels()])?;
        out.relative_yield = pop.relative_yield;
        out.peak_yield = pop.peak_yield;
        Ok(out)
    }

    /// One element per ensemble level, at rest on the inner wall.
    pub fn elements(&self, population: &InitialPopulation) -> Result<Vec<EnsembleElement>> {
        if population.weights.len() != self.levels() {
            return Err(QcmError::validation(format!(
                "population over {} levels for a {}-level ensemble",
                population.weights.len(),
                self.levels()
            )));
        }
        Ok(self
            .initial_conditions
            .iter()
            .zip(&population.weights)
            .map(|(ic, &w)| EnsembleElement::at_rest(&InitialCondition { weight: w, ..*ic }))
            .collect())
    }

    pub fn propagate(
        &self,
        population: &InitialPopulation,
        pulses: &[LaserPulse],
        config: &PropagationConfig,
    ) -> Result<Vec<Trajectory>> {
        let config = PropagationConfig {
            mass: self.mass,
            ..*config
        };
        propagate(
            &self.elements(population)?,
            &self.bound,
            &self.repulsive,
            pulses,
            &config,
        )
    }

    /// Pump, optional control, then matching against field-free references.
    pub fn run_control(&self, setup: &ControlSetup) -> Result<ControlOutcome> {
        let (initial, _) = self.pump_population(&setup.pump, &setup.ionization)?;
        self.run_control_from(initial, setup)
    }

    /// As [`Model::run_control`] with a given initial population.
    pub fn run_control_from(
        &self,
        initial: InitialPopulation,
        setup: &ControlSetup,
    ) -> Result<ControlOutcome> {
        let pulses = setup.pulses();
        let start = pulses
            .iter()
            .map(|p| p.end_time(PULSE_OFF_FRACTION))
            .fold(0.0, f64::max);
        let si = setup.propagation.sample_interval();
        let mut window = MatchWindow::for_periods(start, &self.periods, si);
        // negative offsets must stay inside the references
        window.start = window.start.max(0.5 * window.offset_range);
        let needed = window.reference_end() + 2.0 * si;
        let config = PropagationConfig {
            t_end: setup.propagation.t_end.max(needed),
            ..setup.propagation
        };
        let references = self.propagate(&initial, &[], &config)?;
        if let Some(r) = references.iter().find(|r| r.is_dissociated()) {
            return Err(QcmError::Integrator(format!(
                "field-free reference v = {} dissociated",
                r.v_label
            )));
        }
        let perturbed = if pulses.is_empty() {
            references.clone()
        } else {
            self.propagate(&initial, &pulses, &config)?
        };
        let matches = perturbed
            .par_iter()
            .map(|t| match_trajectory(t, &references, &self.periods, &window, setup.sharing))
            .collect::<Result<Vec<_>>>()?;
        let matrix = build_population_matrix(&matches, &initial)?;
        let phases = phase_report(&matches, &self.periods)?;
        Ok(ControlOutcome {
            initial,
            window,
            matches,
            matrix,
            phases,
            trajectories: perturbed,
        })
    }

    /// Probe yield against probe delay for the ensemble after `pulses`.
    pub fn probe_delay_scan(
        &self,
        population: &InitialPopulation,
        pulses: &[LaserPulse],
        probe: &LaserPulse,
        delays: &[f64],
        critical_r: f64,
        config: &PropagationConfig,
    ) -> Result<Vec<f64>> {
        let last = delays.iter().copied().fold(0.0, f64::max) + 0.5 * probe.fwhm;
        let config = PropagationConfig {
            t_end: config.t_end.max(last + config.sample_interval()),
            ..*config
        };
        let trajectories = self.propagate(population, pulses, &config)?;
        probe_scan(&trajectories, probe, delays, critical_r)
    }

    /// `v,E_au,r0_au,period_fs` over the ensemble levels.
    pub fn spectrum_csv(&self) -> String {
        let mut s = String::from("v,E_au,r0_au,period_fs\n");
        for (v, (ic, p)) in self.initial_conditions.iter().zip(&self.periods).enumerate() {
            s.push_str(&format!(
                "{v},{:.10e},{:.10e},{:.10e}\n",
                self.spectrum.energies()[v],
                ic.r0,
                p
            ));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct ControlSetup {
    pub pump: LaserPulse,
    pub control: Option<LaserPulse>,
    pub propagation: PropagationConfig,
    pub ionization: IonizationOptions,
    pub sharing: WeightSharing,
    /// Let the pump's own trailing edge dress the surface.
    pub pump_tail_dressing: bool,
}

impl ControlSetup {
    pub fn new(pump: LaserPulse, control: Option<LaserPulse>) -> Self {
        ControlSetup {
            pump,
            control,
            propagation: PropagationConfig::default(),
            ionization: IonizationOptions::default(),
            sharing: WeightSharing::default(),
            pump_tail_dressing: false,
        }
    }

    /// Pulses acting on the ion during propagation.
    pub fn pulses(&self) -> Vec<LaserPulse> {
        let mut out = Vec::new();
        if self.pump_tail_dressing {
            out.push(self.pump.clone());
        }
        out.extend(self.control.iter().cloned());
        out
    }
}

#[derive(Debug, Clone)]
pub struct ControlOutcome {
    pub initial: InitialPopulation,
    pub window: MatchWindow,
    pub matches: Vec<MatchResult>,
    pub matrix: PopulationMatrix,
    pub phases: PhaseReport,
    pub trajectories: Vec<Trajectory>,
}

impl ControlOutcome {
    pub fn final_population(&self) -> Vec<f64> {
        self.matrix.final_population()
    }
}
