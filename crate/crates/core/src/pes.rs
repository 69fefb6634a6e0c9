//! One-dimensional potential energy surfaces: ingestion, spline
//! interpolation, five-point-stencil differentiation and laser dressing.
//!
//! Every surface is resampled onto a uniform working grid (spacing
//! [`WORKING_STEP`]) before differencing. The derivative is the five-point
//! central stencil on that grid, itself interpolated by a natural spline,
//! so `derivative` is defined two working steps inside each table end.

use std::fmt;
use std::path::Path;

use crate::error::{QcmError, Result};
use crate::spline::NaturalSpline;

/// Spacing of the uniform working grid, au.
pub const WORKING_STEP: f64 = 0.02;

const MIN_TABLE_LEN: usize = 8;

#[derive(Clone)]
pub struct PotentialSurface {
    label: String,
    spline: NaturalSpline,
    derivative: NaturalSpline,
    working_step: f64,
}

impl fmt::Debug for PotentialSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSurface")
            .field("label", &self.label)
            .field("points", &self.r_grid().len())
            .field("r_min", &self.r_min())
            .field("r_max", &self.r_max())
            .finish()
    }
}

impl PotentialSurface {
    /// Builds a surface from table columns in any order. Rows are sorted by R;
    /// duplicated R values are rejected.
    pub fn from_table(label: impl Into<String>, r: &[f64], v: &[f64]) -> Result<Self> {
        Self::with_step(label, r, v, WORKING_STEP)
    }

    /// As [`from_table`](Self::from_table) with an explicit working-grid step.
    pub fn with_step(label: impl Into<String>, r: &[f64], v: &[f64], working_step: f64) -> Result<Self> {
        if r.len() != v.len() {
            return Err(QcmError::validation(format!(
                "column lengths differ ({} R values, {} V values)",
                r.len(),
                v.len()
            )));
        }
        if r.len() < MIN_TABLE_LEN {
            return Err(QcmError::validation(format!(
                "surface table needs at least {MIN_TABLE_LEN} rows, got {}",
                r.len()
            )));
        }
        if !(working_step > 0.0) {
            return Err(QcmError::validation("working step must be positive"));
        }
        let mut rows: Vec<(f64, f64)> = r.iter().copied().zip(v.iter().copied()).collect();
        for &(ri, vi) in &rows {
            if !(ri > 0.0 && ri <= 100.0) {
                return Err(QcmError::validation(format!("R = {ri} au outside (0, 100]")));
            }
            if !vi.is_finite() {
                return Err(QcmError::validation(format!("non-finite V at R = {ri}")));
            }
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = rows.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(QcmError::validation(format!(
                "R values not strictly increasing (duplicate R = {})",
                w[0].0
            )));
        }
        let (rs, vs): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
        let spline = NaturalSpline::new(rs, vs);

        let r0 = spline.x_min();
        let n = ((spline.x_max() - r0) / working_step + 1e-9).floor() as usize + 1;
        if n < 5 {
            return Err(QcmError::validation(
                "surface range shorter than the five-point stencil",
            ));
        }
        let work_v: Vec<f64> = (0..n)
            .map(|i| spline.eval((r0 + i as f64 * working_step).min(spline.x_max())))
            .collect();
        let (dr, dv): (Vec<f64>, Vec<f64>) = (2..n - 2)
            .map(|i| {
                let d = (work_v[i - 2] - 8.0 * work_v[i - 1] + 8.0 * work_v[i + 1] - work_v[i + 2])
                    / (12.0 * working_step);
                (r0 + i as f64 * working_step, d)
            })
            .unzip();
        let derivative = if dr.len() >= 2 {
            NaturalSpline::new(dr, dv)
        } else {
            return Err(QcmError::validation(
                "surface range shorter than the five-point stencil",
            ));
        };

        Ok(PotentialSurface {
            label: label.into(),
            spline,
            derivative,
            working_step,
        })
    }

    /// Parses the two-column text format ('#' comments, whitespace separated).
    pub fn parse(text: &str, label: impl Into<String>) -> Result<Self> {
        let mut r = Vec::new();
        let mut v = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(QcmError::Parse {
                    line: idx + 1,
                    message: format!("expected 2 columns, found {}", cols.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| QcmError::Parse {
                    line: idx + 1,
                    message: format!("bad number {s:?}: {e}"),
                })
            };
            r.push(parse(cols[0])?);
            v.push(parse(cols[1])?);
        }
        Self::from_table(label, &r, &v)
    }

    /// Reads a surface file.
    pub fn load(path: impl AsRef<Path>, label: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| QcmError::io(path, e))?;
        Self::parse(&text, label)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn r_grid(&self) -> &[f64] {
        self.spline.knots()
    }

    pub fn v_grid(&self) -> &[f64] {
        self.spline.values()
    }

    pub fn r_min(&self) -> f64 {
        self.spline.x_min()
    }

    pub fn r_max(&self) -> f64 {
        self.spline.x_max()
    }

    pub fn working_step(&self) -> f64 {
        self.working_step
    }

    /// Interval on which [`derivative`](Self::derivative) is defined.
    pub fn derivative_range(&self) -> (f64, f64) {
        (self.derivative.x_min(), self.derivative.x_max())
    }

    /// Value at the largest tabulated R; the dissociation asymptote for the
    /// bundled tables.
    pub fn asymptote(&self) -> f64 {
        *self.v_grid().last().unwrap()
    }

    /// Working-grid abscissae and spline values.
    pub fn working_grid(&self) -> (Vec<f64>, Vec<f64>) {
        let r0 = self.r_min();
        let n = ((self.r_max() - r0) / self.working_step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| {
                let r = (r0 + i as f64 * self.working_step).min(self.r_max());
                (r, self.spline.eval(r))
            })
            .unzip()
    }

    /// Natural-cubic-spline value at `r`. No extrapolation.
    pub fn evaluate(&self, r: f64) -> Result<f64> {
        if !self.spline.contains(r) {
            return Err(QcmError::OutOfRange {
                r,
                min: self.r_min(),
                max: self.r_max(),
            });
        }
        Ok(self.spline.eval(r))
    }

    /// dV/dR from the five-point stencil on the working grid.
    pub fn derivative(&self, r: f64) -> Result<f64> {
        if !self.derivative.contains(r) {
            let (min, max) = self.derivative_range();
            return Err(QcmError::OutOfRange { r, min, max });
        }
        Ok(self.derivative.eval(r))
    }

    /// Unchecked derivative for hot loops whose callers already bound `r`.
    #[inline]
    pub(crate) fn derivative_unchecked(&self, r: f64) -> f64 {
        self.derivative.eval(r)
    }

    #[inline]
    pub(crate) fn evaluate_unchecked(&self, r: f64) -> f64 {
        self.spline.eval(r)
    }

    /// Global minimum located by a brute-force scan of the working grid,
    /// refined by a parabola through the three bracketing nodes.
    pub fn minimum(&self) -> (f64, f64) {
        let (r, v) = self.working_grid();
        let (i, _) = v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        if i == 0 || i + 1 == r.len() {
            return (r[i], v[i]);
        }
        let h = self.working_step;
        let denom = v[i - 1] - 2.0 * v[i] + v[i + 1];
        if denom <= 0.0 {
            return (r[i], v[i]);
        }
        let shift = 0.5 * h * (v[i - 1] - v[i + 1]) / denom;
        let rm = r[i] + shift;
        (rm, self.spline.eval(rm))
    }
}

/// Convention for the laser-dressed bound surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DressingMode {
    /// Lower adiabatic eigenvalue of the field-coupled two-state system:
    /// (V_g + V_u)/2 - sqrt(dV^2/4 + W^2).
    #[default]
    Adiabatic,
    /// The printed two-state formula (V_u - V_g)/2 + sqrt(dV^2/4 + W^2);
    /// kept for comparison only, it does not reduce to V_g at zero field.
    Eq3Literal,
}

impl std::str::FromStr for DressingMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "adiabatic" => Ok(DressingMode::Adiabatic),
            "eq3-literal" => Ok(DressingMode::Eq3Literal),
            other => Err(format!("unknown dressing mode {other:?}")),
        }
    }
}

impl fmt::Display for DressingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DressingMode::Adiabatic => "adiabatic",
            DressingMode::Eq3Literal => "eq3-literal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DressedSurfaceSample {
    pub r: f64,
    pub v: f64,
    pub field_amplitude: f64,
}

#[inline]
fn dress(vg: f64, vu: f64, r: f64, field: f64, mode: DressingMode) -> f64 {
    let coupling = 0.5 * r * field;
    let gap = vu - vg;
    let root = (0.25 * gap * gap + coupling * coupling).sqrt();
    match mode {
        DressingMode::Adiabatic => 0.5 * (vg + vu) - root,
        DressingMode::Eq3Literal => 0.5 * gap + root,
    }
}

fn check_field(field_amplitude: f64) -> Result<()> {
    if !(field_amplitude >= 0.0) || !field_amplitude.is_finite() {
        return Err(QcmError::validation(format!(
            "field amplitude must be finite and non-negative, got {field_amplitude}"
        )));
    }
    Ok(())
}

/// Laser-dressed bound potential at `r` for a field magnitude (au), with the
/// transition coupling W = R |E| / 2.
pub fn dressed_potential(
    bound: &PotentialSurface,
    repulsive: &PotentialSurface,
    r: f64,
    field_amplitude: f64,
    mode: DressingMode,
) -> Result<DressedSurfaceSample> {
    check_field(field_amplitude)?;
    let vg = bound.evaluate(r)?;
    let vu = repulsive.evaluate(r)?;
    // Exact at zero field: no round-off from the mean/root recombination.
    let v = if field_amplitude == 0.0 && mode == DressingMode::Adiabatic && vu >= vg {
        vg
    } else {
        dress(vg, vu, r, field_amplitude, mode)
    };
    Ok(DressedSurfaceSample {
        r,
        v,
        field_amplitude,
    })
}

/// Tabulates the dressed surface on the common working grid of the two
/// inputs and wraps it as a new surface (with its own stencil derivative).
pub fn dressed_surface(
    bound: &PotentialSurface,
    repulsive: &PotentialSurface,
    field_amplitude: f64,
    mode: DressingMode,
) -> Result<PotentialSurface> {
    check_field(field_amplitude)?;
    let h = bound.working_step();
    let lo = bound.r_min().max(repulsive.r_min());
    let hi = bound.r_max().min(repulsive.r_max());
    if hi <= lo {
        return Err(QcmError::validation("bound and repulsive grids do not overlap"));
    }
    let n = ((hi - lo) / h + 1e-9).floor() as usize + 1;
    let mut rs = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    for i in 0..n {
        let r = (lo + i as f64 * h).min(hi);
        let vg = bound.evaluate_unchecked(r);
        let vu = repulsive.evaluate_unchecked(r);
        rs.push(r);
        vs.push(dress(vg, vu, r, field_amplitude, mode));
    }
    PotentialSurface::with_step(format!("{} dressed", bound.label()), &rs, &vs, h)
}

/// Vertical ionization potential V_ion(R) - V_neutral(R) + offset.
pub fn ionization_potential(
    neutral: &PotentialSurface,
    ion: &PotentialSurface,
    r: f64,
    channel_offset: f64,
) -> Result<f64> {
    Ok(ion.evaluate(r)? - neutral.evaluate(r)? + channel_offset)
}

/// Tables shipped with the crate.
pub mod bundled {
    use super::PotentialSurface;
    use crate::error::Result;

    pub const D2_NEUTRAL: &str = include_str!("../../../data/d2_neutral.dat");
    pub const D2PLUS_1SSG: &str = include_str!("../../../data/d2plus_1ssg.dat");
    pub const D2PLUS_2PSU: &str = include_str!("../../../data/d2plus_2psu.dat");

    /// D2 ground electronic state.
    pub fn d2_neutral() -> Result<PotentialSurface> {
        PotentialSurface::parse(D2_NEUTRAL, "D2 X")
    }

    /// D2+ bound 1s sigma_g state.
    pub fn d2plus_1ssg() -> Result<PotentialSurface> {
        PotentialSurface::parse(D2PLUS_1SSG, "D2+ 1ssg")
    }

    /// D2+ repulsive 2p sigma_u state.
    pub fn d2plus_2psu() -> Result<PotentialSurface> {
        PotentialSurface::parse(D2PLUS_2PSU, "D2+ 2psu")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn table(f: impl Fn(f64) -> f64, a: f64, b: f64, h: f64) -> (Vec<f64>, Vec<f64>) {
        let n = ((b - a) / h).round() as usize + 1;
        (0..n)
            .map(|i| {
                let r = a + i as f64 * h;
                (r, f(r))
            })
            .unzip()
    }

    fn surface(f: impl Fn(f64) -> f64, h: f64) -> PotentialSurface {
        let (r, v) = table(f, 0.4, 8.0, h);
        PotentialSurface::from_table("test", &r, &v).unwrap()
    }

    #[test]
    fn two_rows_rejected() {
        let err = PotentialSurface::from_table("x", &[1.0, 2.0], &[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, QcmError::Validation(_)));
    }

    #[test]
    fn duplicate_r_rejected() {
        let r = [1.0, 2.0, 3.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let v = [0.0; 8];
        assert!(matches!(
            PotentialSurface::from_table("x", &r, &v),
            Err(QcmError::Validation(_))
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "# header\n1.0 0.5\n1.1 0.4 0.3\n";
        match PotentialSurface::parse(text, "x") {
            Err(QcmError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match PotentialSurface::parse("1.0 abc\n", "x") {
            Err(QcmError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reversed_rows_give_same_surface() {
        let (r, v) = table(|x| (x - 2.0).powi(2), 0.5, 4.0, 0.1);
        let a = PotentialSurface::from_table("a", &r, &v).unwrap();
        let rr: Vec<f64> = r.iter().rev().copied().collect();
        let vr: Vec<f64> = v.iter().rev().copied().collect();
        let b = PotentialSurface::from_table("b", &rr, &vr).unwrap();
        for x in [0.6, 1.234, 2.0, 3.77] {
            assert_eq!(a.evaluate(x).unwrap(), b.evaluate(x).unwrap());
            assert_eq!(a.derivative(x).unwrap(), b.derivative(x).unwrap());
        }
    }

    #[test]
    fn node_values_exact_and_no_extrapolation() {
        let s = surface(|x| (x - 2.0).powi(2), 0.05);
        for (r, v) in s.r_grid().iter().zip(s.v_grid()) {
            assert!((s.evaluate(*r).unwrap() - v).abs() <= 1e-12 * v.abs().max(1e-300));
        }
        assert!((s.evaluate(2.5).unwrap() - 0.25).abs() < 1e-6);
        assert!(matches!(
            s.evaluate(s.r_max() + 0.1),
            Err(QcmError::OutOfRange { .. })
        ));
    }

    #[test]
    fn harmonic_derivative() {
        let k = 0.1;
        let s = surface(|x| 0.5 * k * (x - 2.0).powi(2), 0.02);
        assert!(s.derivative(2.0).unwrap().abs() < 1e-8);
        assert!((s.derivative(3.0).unwrap() - 0.1).abs() < 1e-6);
        assert!(s.derivative(s.r_min() + 0.01).is_err());
        assert!(s.derivative(s.r_max() - 0.01).is_err());
    }

    #[test]
    fn morse_derivative_matches_closed_form() {
        let (d, a, r0) = (0.1, 0.7, 2.0);
        let s = surface(|x| d * (1.0 - (-a * (x - r0)).exp()).powi(2), 0.02);
        let x: f64 = 2.5;
        let e = (-a * (x - r0)).exp();
        let exact = 2.0 * d * a * e * (1.0 - e);
        assert!((s.derivative(x).unwrap() - exact).abs() < 1e-5);
    }

    #[test]
    fn coarse_tables_are_resampled() {
        let (d, a, r0) = (0.1, 0.7, 2.0);
        let s = surface(|x| d * (1.0 - (-a * (x - r0)).exp()).powi(2), 0.1);
        assert_eq!(s.working_step(), WORKING_STEP);
        let x: f64 = 3.1;
        let e = (-a * (x - r0)).exp();
        let exact = 2.0 * d * a * e * (1.0 - e);
        assert!((s.derivative(x).unwrap() - exact).abs() < 1e-4);
    }

    #[test]
    fn identical_surfaces_give_constant_ip() {
        let s = surface(|x| (x - 2.0).powi(2) - 0.1, 0.02);
        for r in [0.5, 1.4, 3.3] {
            assert_eq!(ionization_potential(&s, &s, r, 0.37).unwrap(), 0.37);
        }
    }

    #[test]
    fn negative_field_rejected() {
        let s = surface(|x| (x - 2.0).powi(2) - 0.1, 0.02);
        assert!(matches!(
            dressed_potential(&s, &s, 2.0, -1e-3, DressingMode::Adiabatic),
            Err(QcmError::Validation(_))
        ));
    }

    #[test]
    fn literal_mode_differs_at_zero_field() {
        let g = surface(|x| (x - 2.0).powi(2) - 0.1, 0.02);
        let u = surface(|x| 1.0 / x, 0.02);
        let lit = dressed_potential(&g, &u, 2.0, 0.0, DressingMode::Eq3Literal).unwrap();
        assert!((lit.v - (0.5 + 0.1)).abs() < 1e-12);
        let adi = dressed_potential(&g, &u, 2.0, 0.0, DressingMode::Adiabatic).unwrap();
        assert_eq!(adi.v, g.evaluate(2.0).unwrap());
    }
}
