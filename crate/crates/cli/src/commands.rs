use std::fmt::Write as _;

use qcm_core::analysis::{fourier_magnitude, satisfies_nyquist, QuantumOracle};
use qcm_core::ensemble::{write_trajectories_binary, write_trajectories_csv};
use qcm_core::ionization::l1_distance;
use qcm_core::scenario::Model;
use qcm_core::units::D2_REDUCED_MASS;
use qcm_core::{ControlSetup, InitialPopulation, LaserPulse};
use rayon::prelude::*;

use crate::config::{PopulationSource, RunConfig};
use crate::error::CliError;
use crate::output::{ensure_dir, point_suffix, write_atomic};
use crate::scan::ScanAxis;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Populate,
    Propagate,
    ControlScan,
    Probe,
    Spectrum,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Populate => "populate",
            Command::Propagate => "propagate",
            Command::ControlScan => "control-scan",
            Command::Probe => "probe",
            Command::Spectrum => "spectrum",
        }
    }

    /// Parameters this command may scan over.
    fn scannable(self) -> &'static [&'static str] {
        match self {
            Command::Populate => &["pump.intensity", "pump.fwhm", "pump.wavelength"],
            Command::ControlScan => &["control.intensity", "control.delay"],
            Command::Probe => &["probe.delay"],
            Command::Propagate | Command::Spectrum => &[],
        }
    }
}

/// Oracle grid, au.
const ORACLE_R: (f64, f64, f64) = (0.6, 8.0, 0.02);

pub fn run(command: Command, config: &RunConfig) -> Result<(), CliError> {
    let axis = config.scan_axis()?;
    if let Some(axis) = &axis {
        if !command.scannable().contains(&axis.param.as_str()) {
            let allowed = command.scannable();
            return Err(CliError::Usage(if allowed.is_empty() {
                format!("{} does not take a scan axis", command.name())
            } else {
                format!(
                    "{} cannot scan {}; allowed: {}",
                    command.name(),
                    axis.param,
                    allowed.join(", ")
                )
            }));
        }
    }
    ensure_dir(&config.out)?;
    let header = format!("# effective configuration of `qcm {}`\n", command.name());
    write_atomic(
        &config.out,
        "effective.cfg",
        (header + &config.to_toml()).as_bytes(),
    )?;

    match command {
        Command::Populate => populate(config, axis.as_ref()),
        Command::Propagate => propagate(config),
        Command::ControlScan => control_scan(config, axis.as_ref()),
        Command::Probe => probe(config, axis.as_ref()),
        Command::Spectrum => spectrum(config),
    }
}

fn build_model(config: &RunConfig) -> Result<Model, CliError> {
    let [neutral, bound, repulsive] = config.surfaces()?;
    Ok(Model::new(
        neutral,
        bound,
        repulsive,
        D2_REDUCED_MASS,
        config.ensemble.levels,
    )?)
}

fn initial_population(model: &Model, config: &RunConfig) -> Result<InitialPopulation, CliError> {
    Ok(match config.population_source()? {
        PopulationSource::Pump => {
            model
                .pump_population(&config.pump_pulse()?, &config.ionization_options())?
                .0
        }
        PopulationSource::FranckCondon => model.franck_condon()?,
        PopulationSource::Uniform => InitialPopulation::from_weights(&vec![1.0; model.levels()])?,
    })
}

/// Pulses acting on the ion after it is formed.
fn ion_pulses(config: &RunConfig) -> Result<Vec<LaserPulse>, CliError> {
    let mut pulses = Vec::new();
    if config.propagation.pump_tail_dressing {
        pulses.push(config.pump_pulse()?);
    }
    pulses.extend(config.control_pulse()?);
    Ok(pulses)
}

/// One configuration per scan point, or the base configuration alone.
fn points(config: &RunConfig, axis: Option<&ScanAxis>) -> Result<Vec<(Option<usize>, RunConfig)>, CliError> {
    match axis {
        None => Ok(vec![(None, config.clone())]),
        Some(a) => a
            .values()
            .into_iter()
            .enumerate()
            .map(|(i, v)| Ok((Some(i), config.with_value(&a.param, v)?)))
            .collect(),
    }
}

fn axis_value(config: &RunConfig, key: &str) -> f64 {
    match key {
        "pump.intensity" => config.pump.intensity,
        "pump.fwhm" => config.pump.fwhm,
        "pump.wavelength" => config.pump.wavelength,
        "control.intensity" => config.control.intensity,
        "control.delay" => config.control.delay,
        "probe.delay" => config.probe.delay,
        _ => f64::NAN,
    }
}

fn populate(config: &RunConfig, axis: Option<&ScanAxis>) -> Result<(), CliError> {
    let model = build_model(config)?;
    let fc = model.franck_condon()?;
    let points = points(config, axis)?;
    let rows = points
        .par_iter()
        .map(|(i, cfg)| -> Result<String, CliError> {
            let (pop, _) = model.pump_population(&cfg.pump_pulse()?, &cfg.ionization_options())?;
            let l1 = l1_distance(&pop.weights, &fc.weights);
            let mut s = String::new();
            writeln!(s, "# pump_intensity_w_cm2 = {:e}", cfg.pump.intensity).unwrap();
            writeln!(s, "# pump_fwhm_fs = {}", cfg.pump.fwhm).unwrap();
            writeln!(s, "# relative_yield = {:.9e}", pop.relative_yield).unwrap();
            writeln!(s, "# peak_yield = {:.9e}", pop.peak_yield).unwrap();
            writeln!(s, "# l1_to_franck_condon = {l1:.9e}").unwrap();
            s.push_str(if cfg.output.franck_condon {
                "v,weight,franck_condon\n"
            } else {
                "v,weight\n"
            });
            for (v, w) in pop.weights.iter().enumerate() {
                write!(s, "{v},{w:.9e}").unwrap();
                if cfg.output.franck_condon {
                    write!(s, ",{:.9e}", fc.weights[v]).unwrap();
                }
                s.push('\n');
            }
            write_atomic(
                &cfg.out,
                &format!("population{}.csv", point_suffix(*i)),
                s.as_bytes(),
            )?;
            Ok(format!(
                "{},{:.9e},{:.9e},{:.9e},{:.9e},{},{:.6}\n",
                i.unwrap_or(0),
                axis.map(|a| axis_value(cfg, &a.param))
                    .unwrap_or(cfg.pump.intensity),
                pop.relative_yield,
                pop.peak_yield,
                l1,
                pop.dominant(),
                pop.mean_level()
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(a) = axis {
        let mut s = format!(
            "point,{},relative_yield,peak_yield,l1_to_franck_condon,dominant_v,mean_v\n",
            a.param
        );
        rows.iter().for_each(|r| s.push_str(r));
        write_atomic(&config.out, "summary.csv", s.as_bytes())?;
    }
    Ok(())
}

fn propagate(config: &RunConfig) -> Result<(), CliError> {
    let model = build_model(config)?;
    let pop = initial_population(&model, config)?;
    let pulses = ion_pulses(config)?;
    if config.output.oracle && !pulses.is_empty() {
        return Err(CliError::Usage(
            "output.oracle: the quantum reference is field-free; set control.intensity = 0".into(),
        ));
    }
    let prop = config.propagation_config()?;
    let trajectories = model.propagate(&pop, &pulses, &prop)?;

    let mut csv = Vec::new();
    write_trajectories_csv(&mut csv, &trajectories).expect("in-memory write");
    write_atomic(&config.out, "trajectories.csv", &csv)?;
    if config.output.binary {
        let mut bin = Vec::new();
        write_trajectories_binary(&mut bin, &trajectories, &prop).expect("in-memory write");
        write_atomic(&config.out, "trajectories.bin", &bin)?;
    }

    let mut s = String::from("v,weight,status,dissociated_at_fs\n");
    for t in &trajectories {
        match t.dissociated_at {
            Some(td) => writeln!(s, "{},{:.9e},dissociated,{td:.4}", t.v_label, t.weight),
            None => writeln!(s, "{},{:.9e},bound,", t.v_label, t.weight),
        }
        .unwrap();
    }
    write_atomic(&config.out, "status.csv", s.as_bytes())?;

    if config.output.oracle {
        let (lo, hi, dr) = ORACLE_R;
        let n = ((hi - lo) / dr).round() as usize + 1;
        let grid: Vec<f64> = (0..n).map(|i| lo + i as f64 * dr).collect();
        let oracle = QuantumOracle::new(&pop, &model.spectrum, &grid)?;
        let first = &trajectories[0];
        let rows: Vec<String> = (0..first.n_samples)
            .into_par_iter()
            .map(|i| {
                let t = i as f64 * first.sample_interval;
                let mut line = format!("{t:.4}");
                for rho in oracle.density(t) {
                    write!(line, " {rho:.6e}").unwrap();
                }
                line.push('\n');
                line
            })
            .collect();
        // gnuplot nonuniform matrix: first row is the column count then R
        let mut s = n.to_string();
        for r in &grid {
            write!(s, " {r:.4}").unwrap();
        }
        s.push('\n');
        rows.iter().for_each(|r| s.push_str(r));
        write_atomic(&config.out, "oracle_density.dat", s.as_bytes())?;
    }
    Ok(())
}

fn control_scan(config: &RunConfig, axis: Option<&ScanAxis>) -> Result<(), CliError> {
    let scans_intensity = axis.is_some_and(|a| a.param == "control.intensity");
    if config.control.intensity == 0.0 && !scans_intensity {
        return Err(CliError::Usage(
            "control-scan needs a control pulse: set control.intensity > 0 or scan it".into(),
        ));
    }
    let model = build_model(config)?;
    let initial = initial_population(&model, config)?;
    let points = points(config, axis)?;
    let axis_name = axis.map(|a| a.param.as_str()).unwrap_or("control.delay");

    let rows = points
        .par_iter()
        .map(|(i, cfg)| -> Result<String, CliError> {
            let mut setup = ControlSetup::new(cfg.pump_pulse()?, cfg.control_pulse()?);
            setup.propagation = cfg.propagation_config()?;
            setup.ionization = cfg.ionization_options();
            setup.sharing = cfg.weight_sharing()?;
            setup.pump_tail_dressing = cfg.propagation.pump_tail_dressing;
            let outcome = model.run_control_from(initial.clone(), &setup)?;
            let sfx = point_suffix(*i);
            write_atomic(
                &cfg.out,
                &format!("matrix{sfx}.csv"),
                outcome.matrix.to_csv().as_bytes(),
            )?;
            write_atomic(
                &cfg.out,
                &format!("phases{sfx}.csv"),
                outcome.phases.to_csv().as_bytes(),
            )?;
            let final_pop = outcome.final_population();
            let mut s = String::from("v,initial,final\n");
            for (v, (a, b)) in outcome.initial.weights.iter().zip(&final_pop).enumerate() {
                writeln!(s, "{v},{a:.9e},{b:.9e}").unwrap();
            }
            write_atomic(&cfg.out, &format!("populations{sfx}.csv"), s.as_bytes())?;

            let mut row = format!("{},{:.9e}", i.unwrap_or(0), axis_value(cfg, axis_name));
            for p in &final_pop {
                write!(row, ",{p:.9e}").unwrap();
            }
            writeln!(
                row,
                ",{:.9e},{:.9e}",
                outcome.matrix.total_dissociated(),
                outcome.matrix.off_diagonal_mass()
            )
            .unwrap();
            Ok(row)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut s = format!("point,{axis_name}");
    for v in 0..model.levels() {
        write!(s, ",v{v}").unwrap();
    }
    s.push_str(",dissociated,off_diagonal\n");
    rows.iter().for_each(|r| s.push_str(r));
    write_atomic(&config.out, "summary.csv", s.as_bytes())?;
    Ok(())
}

fn probe(config: &RunConfig, axis: Option<&ScanAxis>) -> Result<(), CliError> {
    let model = build_model(config)?;
    let (delays, step) = match axis {
        Some(a) => (a.values(), a.step),
        None => (vec![config.probe.delay], config.propagation.dt),
    };
    let e = model.spectrum.energies();
    let max_gap = e[..model.levels()]
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    if !satisfies_nyquist(step, max_gap) {
        eprintln!(
            "warning: a {step} fs delay step undersamples the highest level-spacing beat \
             ({:.4} fs^-1); Fourier peaks above {:.4} fs^-1 alias",
            qcm_core::units::energy_to_frequency(max_gap),
            0.5 / step
        );
    }
    let pop = initial_population(&model, config)?;
    let pulses = ion_pulses(config)?;
    let yields = model.probe_delay_scan(
        &pop,
        &pulses,
        &config.probe_pulse()?,
        &delays,
        config.probe.critical_r,
        &config.propagation_config()?,
    )?;
    let mut s = String::from("delay_fs,yield\n");
    for (d, y) in delays.iter().zip(&yields) {
        writeln!(s, "{d:.6},{y:.9e}").unwrap();
    }
    write_atomic(&config.out, "yield.csv", s.as_bytes())?;
    write_atomic(
        &config.out,
        "fourier.csv",
        fourier_magnitude(&yields, step).to_csv().as_bytes(),
    )?;
    Ok(())
}

fn spectrum(config: &RunConfig) -> Result<(), CliError> {
    let model = build_model(config)?;
    write_atomic(&config.out, "spectrum.csv", model.spectrum_csv().as_bytes())?;
    Ok(())
}
