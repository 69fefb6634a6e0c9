//! Run configuration: a TOML key-value file layered over built-in defaults,
//! with command-line overrides on top.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use qcm_core::ionization::IonizationOptions;
use qcm_core::{
    DressingMode, FieldMode, Integrator, LaserPulse, PhaseMode, PotentialSurface, PropagationConfig,
    WeightSharing,
};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;
use crate::scan::ScanAxis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory.
    pub out: PathBuf,
    /// Scan axis as `param:start:stop:step`, empty for a single run.
    pub scan: String,
    /// Worker threads, 0 for one per core.
    pub workers: usize,
    pub pump: PumpSection,
    pub control: ControlSection,
    pub probe: ProbeSection,
    pub propagation: PropagationSection,
    pub ensemble: EnsembleSection,
    pub ionization: IonizationSection,
    pub analysis: AnalysisSection,
    pub surfaces: SurfaceSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpSection {
    /// W cm^-2
    pub intensity: f64,
    /// fs
    pub fwhm: f64,
    /// nm
    pub wavelength: f64,
    pub phase_mode: String,
}

/// A control intensity of zero means no control pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub intensity: f64,
    /// Centre time after the pump peak, fs.
    pub delay: f64,
    pub fwhm: f64,
    pub wavelength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub intensity: f64,
    pub delay: f64,
    pub fwhm: f64,
    pub wavelength: f64,
    /// au
    pub critical_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationSection {
    pub dt: f64,
    pub t_end: f64,
    pub dissociation_radius: f64,
    pub record_stride: usize,
    pub dressing: String,
    pub field_mode: String,
    pub integrator: String,
    pub pump_tail_dressing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub levels: usize,
    /// `pump`, `franck-condon` or `uniform`.
    pub population: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IonizationSection {
    pub channel_offset: f64,
    /// fs
    pub time_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub weight_sharing: String,
}

/// Surface tables: a file path or `bundled`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceSection {
    pub neutral: String,
    pub bound: String,
    pub repulsive: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Quantum reference density next to the trajectories.
    pub oracle: bool,
    /// Binary trajectory dump next to the CSV.
    pub binary: bool,
    /// Franck-Condon column in population files.
    pub franck_condon: bool,
}

pub const BUNDLED: &str = "bundled";

impl Default for RunConfig {
    fn default() -> Self {
        let prop = PropagationConfig::default();
        let ion = IonizationOptions::default();
        RunConfig {
            out: PathBuf::from("out"),
            scan: String::new(),
            workers: 0,
            pump: PumpSection {
                intensity: 1e14,
                fwhm: 7.0,
                wavelength: 800.0,
                phase_mode: PhaseMode::default().to_string(),
            },
            control: ControlSection {
                intensity: 0.0,
                delay: 24.0,
                fwhm: 7.0,
                wavelength: 800.0,
            },
            probe: ProbeSection {
                intensity: 3e14,
                delay: 100.0,
                fwhm: 7.0,
                wavelength: 800.0,
                critical_r: 3.0,
            },
            propagation: PropagationSection {
                dt: prop.dt,
                t_end: prop.t_end,
                dissociation_radius: prop.dissociation_radius,
                record_stride: prop.record_stride,
                dressing: prop.dressing.to_string(),
                field_mode: prop.field_mode.to_string(),
                integrator: prop.integrator.to_string(),
                pump_tail_dressing: false,
            },
            ensemble: EnsembleSection {
                levels: qcm_core::scenario::DEFAULT_LEVELS,
                population: PopulationSource::Pump.to_string(),
            },
            ionization: IonizationSection {
                channel_offset: ion.channel_offset,
                time_step: ion.time_step,
            },
            analysis: AnalysisSection {
                weight_sharing: WeightSharing::default().to_string(),
            },
            surfaces: SurfaceSection {
                neutral: BUNDLED.into(),
                bound: BUNDLED.into(),
                repulsive: BUNDLED.into(),
            },
            output: OutputSection {
                oracle: false,
                binary: false,
                franck_condon: false,
            },
        }
    }
}

macro_rules! default_section {
    ($($ty:ident => $field:ident),* $(,)?) => {
        $(impl Default for $ty {
            fn default() -> Self {
                RunConfig::default().$field
            }
        })*
    };
}

default_section! {
    PumpSection => pump,
    ControlSection => control,
    ProbeSection => probe,
    PropagationSection => propagation,
    EnsembleSection => ensemble,
    IonizationSection => ionization,
    AnalysisSection => analysis,
    SurfaceSection => surfaces,
    OutputSection => output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PopulationSource {
    Pump,
    FranckCondon,
    Uniform,
}

impl FromStr for PopulationSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pump" => Ok(PopulationSource::Pump),
            "franck-condon" | "fc" => Ok(PopulationSource::FranckCondon),
            "uniform" => Ok(PopulationSource::Uniform),
            other => Err(format!("unknown population source {other:?}")),
        }
    }
}

impl std::fmt::Display for PopulationSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PopulationSource::Pump => "pump",
            PopulationSource::FranckCondon => "franck-condon",
            PopulationSource::Uniform => "uniform",
        })
    }
}

/// Builds configurations in precedence order: defaults, then a file, then
/// individual overrides.
#[derive(Debug, Clone)]
pub struct ConfigBuilder {
    table: Table,
}

impl Default for ConfigBuilder {
    fn default() -> Self {
        ConfigBuilder {
            table: Table::try_from(RunConfig::default()).expect("defaults serialize"),
        }
    }
}

impl ConfigBuilder {
    pub fn from_config(config: &RunConfig) -> Self {
        ConfigBuilder {
            table: Table::try_from(config).expect("config serializes"),
        }
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file: Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("{}: {}", path.display(), e.message())))?;
        merge(&mut self.table, file, "")?;
        Ok(self)
    }

    /// Sets a dotted key such as `control.delay`. The key must exist and the
    /// value must have the same type as its default.
    pub fn set(&mut self, key: &str, value: Value) -> Result<&mut Self, CliError> {
        let slot = lookup(&mut self.table, key)?;
        let value = match (&*slot, value) {
            (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
            (old, new) if old.same_type(&new) => new,
            (old, new) => {
                return Err(CliError::Usage(format!(
                    "{key}: expected {}, got {}",
                    old.type_str(),
                    new.type_str()
                )))
            }
        };
        *slot = value;
        Ok(self)
    }

    pub fn set_float(&mut self, key: &str, value: f64) -> Result<&mut Self, CliError> {
        self.set(key, Value::Float(value))
    }

    pub fn build(&self) -> Result<RunConfig, CliError> {
        let config: RunConfig = self
            .table
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;
        config.validate()?;
        Ok(config)
    }
}

fn merge(base: &mut Table, over: Table, prefix: &str) -> Result<(), CliError> {
    for (k, v) in over {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o, &path)?,
            (Some(Value::Table(_)), _) => {
                return Err(CliError::Usage(format!("{path}: expected a section")));
            }
            (Some(slot), Value::Integer(i)) if slot.is_float() => *slot = Value::Float(i as f64),
            (Some(slot), v) if slot.same_type(&v) => *slot = v,
            (Some(slot), v) => {
                return Err(CliError::Usage(format!(
                    "{path}: expected {}, got {}",
                    slot.type_str(),
                    v.type_str()
                )));
            }
            (None, _) => return Err(CliError::Usage(format!("unknown config key {path}"))),
        }
    }
    Ok(())
}

fn lookup<'a>(table: &'a mut Table, key: &str) -> Result<&'a mut Value, CliError> {
    let unknown = || CliError::Usage(format!("unknown config key {key}"));
    let mut parts = key.split('.').peekable();
    let mut current = table;
    while let Some(part) = parts.next() {
        let value = current.get_mut(part).ok_or_else(unknown)?;
        if parts.peek().is_none() {
            return match value {
                Value::Table(_) => Err(unknown()),
                v => Ok(v),
            };
        }
        current = value.as_table_mut().ok_or_else(unknown)?;
    }
    Err(unknown())
}

/// True when `key` names a floating-point setting.
pub fn is_float_key(key: &str) -> bool {
    let mut table = Table::try_from(RunConfig::default()).expect("defaults serialize");
    matches!(lookup(&mut table, key), Ok(Value::Float(_)))
}

fn parse_field<T: FromStr<Err = String>>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|e: String| CliError::Usage(format!("{key}: {e}")))
}

fn require(key: &str, ok: bool, what: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{key} {what}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        require(
            "pump.intensity",
            finite_pos(self.pump.intensity),
            "must be positive",
        )?;
        require("pump.fwhm", finite_pos(self.pump.fwhm), "must be positive")?;
        require(
            "pump.wavelength",
            finite_pos(self.pump.wavelength),
            "must be positive",
        )?;
        require(
            "control.intensity",
            self.control.intensity.is_finite() && self.control.intensity >= 0.0,
            "must be zero (no control) or positive",
        )?;
        require("control.delay", self.control.delay.is_finite(), "must be finite")?;
        require("control.fwhm", finite_pos(self.control.fwhm), "must be positive")?;
        require(
            "control.wavelength",
            finite_pos(self.control.wavelength),
            "must be positive",
        )?;
        require(
            "probe.intensity",
            finite_pos(self.probe.intensity),
            "must be positive",
        )?;
        require("probe.delay", self.probe.delay.is_finite(), "must be finite")?;
        require("probe.fwhm", finite_pos(self.probe.fwhm), "must be positive")?;
        require(
            "probe.wavelength",
            finite_pos(self.probe.wavelength),
            "must be positive",
        )?;
        require(
            "probe.critical_r",
            finite_pos(self.probe.critical_r),
            "must be positive",
        )?;
        require(
            "propagation.dt",
            finite_pos(self.propagation.dt),
            "must be positive",
        )?;
        require(
            "propagation.t_end",
            finite_pos(self.propagation.t_end),
            "must be positive",
        )?;
        require(
            "propagation.dissociation_radius",
            finite_pos(self.propagation.dissociation_radius),
            "must be positive",
        )?;
        require(
            "propagation.record_stride",
            self.propagation.record_stride > 0,
            "must be at least 1",
        )?;
        require("ensemble.levels", self.ensemble.levels >= 2, "must be at least 2")?;
        require(
            "ionization.time_step",
            finite_pos(self.ionization.time_step),
            "must be positive",
        )?;
        require(
            "ionization.channel_offset",
            self.ionization.channel_offset.is_finite(),
            "must be finite",
        )?;
        parse_field::<PhaseMode>("pump.phase_mode", &self.pump.phase_mode)?;
        parse_field::<DressingMode>("propagation.dressing", &self.propagation.dressing)?;
        parse_field::<FieldMode>("propagation.field_mode", &self.propagation.field_mode)?;
        parse_field::<Integrator>("propagation.integrator", &self.propagation.integrator)?;
        parse_field::<PopulationSource>("ensemble.population", &self.ensemble.population)?;
        parse_field::<WeightSharing>("analysis.weight_sharing", &self.analysis.weight_sharing)?;
        self.scan_axis()?;
        Ok(())
    }

    pub fn scan_axis(&self) -> Result<Option<ScanAxis>, CliError> {
        if self.scan.trim().is_empty() {
            Ok(None)
        } else {
            self.scan.parse().map(Some)
        }
    }

    /// The configuration with `key` set to `value`, as used by one scan point.
    pub fn with_value(&self, key: &str, value: f64) -> Result<RunConfig, CliError> {
        let mut b = ConfigBuilder::from_config(self);
        b.set_float(key, value)?;
        b.table
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn pump_pulse(&self) -> Result<LaserPulse, CliError> {
        let p = &self.pump;
        Ok(LaserPulse::new(p.intensity, p.fwhm, 0.0)?
            .with_wavelength(p.wavelength)?
            .with_phase_mode(parse_field("pump.phase_mode", &p.phase_mode)?))
    }

    /// None when the control intensity is zero.
    pub fn control_pulse(&self) -> Result<Option<LaserPulse>, CliError> {
        let c = &self.control;
        if c.intensity == 0.0 {
            return Ok(None);
        }
        Ok(Some(
            LaserPulse::new(c.intensity, c.fwhm, c.delay)?.with_wavelength(c.wavelength)?,
        ))
    }

    pub fn probe_pulse(&self) -> Result<LaserPulse, CliError> {
        let p = &self.probe;
        Ok(LaserPulse::new(p.intensity, p.fwhm, p.delay)?.with_wavelength(p.wavelength)?)
    }

    pub fn propagation_config(&self) -> Result<PropagationConfig, CliError> {
        let p = &self.propagation;
        Ok(PropagationConfig {
            dt: p.dt,
            t_end: p.t_end,
            dissociation_radius: p.dissociation_radius,
            record_stride: p.record_stride,
            dressing: parse_field("propagation.dressing", &p.dressing)?,
            field_mode: parse_field("propagation.field_mode", &p.field_mode)?,
            integrator: parse_field("propagation.integrator", &p.integrator)?,
            ..PropagationConfig::default()
        })
    }

    pub fn ionization_options(&self) -> IonizationOptions {
        IonizationOptions {
            channel_offset: self.ionization.channel_offset,
            time_step: self.ionization.time_step,
            ..IonizationOptions::default()
        }
    }

    pub fn population_source(&self) -> Result<PopulationSource, CliError> {
        parse_field("ensemble.population", &self.ensemble.population)
    }

    pub fn weight_sharing(&self) -> Result<WeightSharing, CliError> {
        parse_field("analysis.weight_sharing", &self.analysis.weight_sharing)
    }

    /// Surface tables in the order neutral, bound, repulsive.
    pub fn surfaces(&self) -> Result<[PotentialSurface; 3], CliError> {
        use qcm_core::pes::bundled;
        let load = |spec: &str, label: &str, fallback: fn() -> qcm_core::Result<PotentialSurface>| {
            if spec == BUNDLED {
                fallback().map_err(CliError::from)
            } else {
                PotentialSurface::load(spec, label).map_err(|e| match e {
                    e @ qcm_core::QcmError::Io { .. } => e.into(),
                    e => CliError::Usage(format!("surfaces.{label} ({spec}): {e}")),
                })
            }
        };
        Ok([
            load(&self.surfaces.neutral, "neutral", bundled::d2_neutral)?,
            load(&self.surfaces.bound, "bound", bundled::d2plus_1ssg)?,
            load(&self.surfaces.repulsive, "repulsive", bundled::d2plus_2psu)?,
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn file_then_override_precedence() {
        let dir = std::env::temp_dir().join(format!("qcm-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.cfg");
        std::fs::write(&path, "[control]\nintensity = 3.5e13\ndelay = 30\n").unwrap();
        let mut b = ConfigBuilder::default();
        b.merge_file(&path).unwrap();
        b.set_float("control.delay", 28.0).unwrap();
        let c = b.build().unwrap();
        assert_eq!(c.control.intensity, 3.5e13);
        assert_eq!(c.control.delay, 28.0);
        assert_eq!(c.pump.intensity, 1e14);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn unknown_and_mistyped_keys_are_rejected() {
        let mut b = ConfigBuilder::default();
        assert!(matches!(
            b.set_float("control.dely", 1.0),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            b.set("pump.intensity", Value::Boolean(true)),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(b.set_float("pump", 1.0), Err(CliError::Usage(_))));
        let mut over = Table::new();
        over.insert("pumpp".into(), Value::Table(Table::new()));
        assert!(merge(&mut b.table, over, "").is_err());
    }

    #[test]
    fn non_positive_pump_names_the_field() {
        let mut b = ConfigBuilder::default();
        b.set_float("pump.intensity", 0.0).unwrap();
        match b.build() {
            Err(CliError::Usage(m)) => assert!(m.contains("pump.intensity"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn float_keys() {
        assert!(is_float_key("control.delay"));
        assert!(is_float_key("pump.intensity"));
        assert!(!is_float_key("ensemble.levels"));
        assert!(!is_float_key("propagation"));
        assert!(!is_float_key("nope.x"));
    }

    #[test]
    fn zero_control_means_none() {
        let c = RunConfig::default();
        assert!(c.control_pulse().unwrap().is_none());
        let c = c.with_value("control.intensity", 3.5e13).unwrap();
        let p = c.control_pulse().unwrap().unwrap();
        assert_eq!(p.center_time, 24.0);
    }
}
