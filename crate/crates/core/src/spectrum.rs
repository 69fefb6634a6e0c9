//! Bound vibrational levels of a surface and the quantized starting points
//! of the classical ensemble.
//!
//! Eigenvalues come from Numerov integration with bisection on the node
//! count of the outward solution (the count equals the number of discrete
//! eigenvalues below the trial energy). Each ensemble element starts at
//! rest on the inner wall where the surface crosses the mid-point energy
//! between its level and the next.

use rayon::prelude::*;

use crate::error::{QcmError, Result};
use crate::pes::PotentialSurface;
use crate::units::{au_to_fs, fs_to_au};

/// Default Numerov step, au. Eigenvalues are converged well below 1e-6 au
/// for D2+ at this spacing.
pub const NUMEROV_STEP: f64 = 0.005;

#[derive(Debug, Clone)]
pub struct VibSpectrum {
    mass: f64,
    energies: Vec<f64>,
    grid: Vec<f64>,
    wavefunctions: Vec<Vec<f64>>,
    asymptote: f64,
}

impl VibSpectrum {
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Abscissae of the sampled wavefunctions (uniform).
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn grid_step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Normalized eigenfunction of level `v`, positive on the inner wall.
    pub fn wavefunction(&self, v: usize) -> &[f64] {
        &self.wavefunctions[v]
    }

    pub fn asymptote(&self) -> f64 {
        self.asymptote
    }

    /// Number of sign changes of the eigenfunction, ignoring the
    /// exponentially small tails.
    pub fn node_count(&self, v: usize) -> usize {
        let psi = &self.wavefunctions[v];
        let peak = psi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut last_sign = 0.0;
        let mut nodes = 0;
        for &x in psi {
            if x.abs() < 1e-8 * peak {
                continue;
            }
            let s = x.signum();
            if last_sign != 0.0 && s != last_sign {
                nodes += 1;
            }
            last_sign = s;
        }
        nodes
    }

    /// ∫ χ_a χ_b dR by the trapezoid rule on the sampling grid.
    pub fn overlap(&self, a: usize, b: usize) -> f64 {
        let h = self.grid_step();
        self.wavefunctions[a]
            .iter()
            .zip(&self.wavefunctions[b])
            .map(|(x, y)| x * y)
            .sum::<f64>()
            * h
    }

    /// Energies bounding each level's band: element `v` is the mid-point
    /// between E_v and E_{v+1}. For the top level the upper energy is the
    /// last gap extrapolated, capped at the asymptote.
    pub fn mid_point_energies(&self) -> Vec<f64> {
        let e = &self.energies;
        let n = e.len();
        (0..n)
            .map(|v| {
                let upper = if v + 1 < n {
                    e[v + 1]
                } else if n >= 2 {
                    (e[v] + (e[v] - e[v - 1])).min(self.asymptote)
                } else {
                    self.asymptote
                };
                0.5 * (e[v] + upper)
            })
            .collect()
    }
}

struct NumerovGrid {
    r0: f64,
    h: f64,
    v: Vec<f64>,
}

impl NumerovGrid {
    fn new(surface: &PotentialSurface, h: f64) -> Self {
        let r0 = surface.r_min();
        let n = ((surface.r_max() - r0) / h + 1e-9).floor() as usize + 1;
        let v = (0..n)
            .map(|i| surface.evaluate_unchecked((r0 + i as f64 * h).min(surface.r_max())))
            .collect();
        NumerovGrid { r0, h, v }
    }

    fn weights(&self, mass: f64, energy: f64) -> Vec<f64> {
        let c = self.h * self.h / 12.0 * 2.0 * mass;
        self.v.iter().map(|v| 1.0 - c * (v - energy)).collect()
    }

    /// Sign changes of the outward solution with psi(r_min) = 0.
    fn count_nodes(&self, mass: f64, energy: f64) -> usize {
        let f = self.weights(mass, energy);
        let mut prev = 0.0f64;
        let mut cur = 1e-30f64;
        let mut nodes = 0;
        for i in 1..f.len() - 1 {
            let mut next = ((12.0 - 10.0 * f[i]) * cur - f[i - 1] * prev) / f[i + 1];
            if next == 0.0 {
                next = -cur.signum() * f64::MIN_POSITIVE;
            }
            if next.signum() != cur.signum() {
                nodes += 1;
            }
            prev = cur;
            cur = next;
            if cur.abs() > 1e250 {
                prev *= 1e-250;
                cur *= 1e-250;
            }
        }
        nodes
    }

    /// Eigenfunction at a converged energy: outward and inward solutions
    /// joined at the outer classical turning point, normalized.
    fn eigenfunction(&self, mass: f64, energy: f64) -> Vec<f64> {
        let f = self.weights(mass, energy);
        let n = f.len();
        let turning = self
            .v
            .iter()
            .rposition(|&v| v <= energy)
            .unwrap_or(n / 2)
            .clamp(2, n - 3);

        let mut out = vec![0.0; turning + 1];
        out[1] = 1e-30;
        for i in 1..turning {
            out[i + 1] = ((12.0 - 10.0 * f[i]) * out[i] - f[i - 1] * out[i - 1]) / f[i + 1];
            if out[i + 1].abs() > 1e250 {
                out.iter_mut().take(i + 2).for_each(|x| *x *= 1e-250);
            }
        }

        let mut inw = vec![0.0; n];
        inw[n - 2] = 1e-30;
        for i in (turning + 1..n - 1).rev() {
            inw[i - 1] = ((12.0 - 10.0 * f[i]) * inw[i] - f[i + 1] * inw[i + 1]) / f[i - 1];
            if inw[i - 1].abs() > 1e250 {
                inw.iter_mut().skip(i - 1).for_each(|x| *x *= 1e-250);
            }
        }
        let scale = out[turning] / inw[turning];
        let mut psi: Vec<f64> = out;
        psi.extend(inw[turning + 1..].iter().map(|x| x * scale));

        let norm = (psi.iter().map(|x| x * x).sum::<f64>() * self.h).sqrt();
        let peak = psi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let first = psi.iter().find(|x| x.abs() > 1e-3 * peak).copied().unwrap_or(1.0);
        let sign = if first < 0.0 { -1.0 } else { 1.0 };
        psi.iter_mut().for_each(|x| *x *= sign / norm);
        psi
    }

    fn abscissae(&self) -> Vec<f64> {
        (0..self.v.len()).map(|i| self.r0 + i as f64 * self.h).collect()
    }
}

/// Bound levels v = 0..=v_max_hint (or fewer, if the surface holds fewer)
/// at the default Numerov step.
pub fn bound_states(surface: &PotentialSurface, mass: f64, v_max_hint: usize) -> Result<VibSpectrum> {
    bound_states_with_step(surface, mass, v_max_hint, NUMEROV_STEP)
}

pub fn bound_states_with_step(
    surface: &PotentialSurface,
    mass: f64,
    v_max_hint: usize,
    step: f64,
) -> Result<VibSpectrum> {
    if !(mass > 0.0) {
        return Err(QcmError::validation(format!("mass must be positive, got {mass}")));
    }
    if !(step > 0.0) {
        return Err(QcmError::validation("Numerov step must be positive"));
    }
    let grid = NumerovGrid::new(surface, step);
    let asymptote = surface.asymptote();
    let ceiling = grid.v[0].min(*grid.v.last().unwrap());
    let floor = grid.v.iter().copied().fold(f64::INFINITY, f64::min);
    if floor >= ceiling {
        return Err(QcmError::EmptySpectrum);
    }
    let available = grid.count_nodes(mass, ceiling);
    let n_states = available.min(v_max_hint + 1);
    if n_states == 0 {
        return Err(QcmError::EmptySpectrum);
    }

    let energies: Vec<f64> = (0..n_states)
        .into_par_iter()
        .map(|v| {
            let (mut lo, mut hi) = (floor, ceiling);
            for _ in 0..200 {
                if hi - lo <= 1e-13 * (1.0 + hi.abs()) {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if grid.count_nodes(mass, mid) > v {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            if hi - lo > 1e-9 {
                return Err(QcmError::Solver(format!(
                    "level v = {v} did not converge: bracket [{lo}, {hi}]"
                )));
            }
            Ok(0.5 * (lo + hi))
        })
        .collect::<Result<_>>()?;

    if energies.windows(2).any(|w| w[1] <= w[0]) {
        return Err(QcmError::Solver(format!(
            "eigenvalues not strictly increasing: {energies:?}"
        )));
    }
    let wavefunctions = energies
        .par_iter()
        .map(|&e| grid.eigenfunction(mass, e))
        .collect();

    Ok(VibSpectrum {
        mass,
        energies,
        grid: grid.abscissae(),
        wavefunctions,
        asymptote,
    })
}

/// Starting point of one ensemble element; it starts at rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialCondition {
    pub v: usize,
    pub r0: f64,
    pub weight: f64,
}

/// Inner-wall crossing of `energy` on `surface`, by bisection.
pub fn inner_root(surface: &PotentialSurface, energy: f64) -> Result<f64> {
    let (r_eq, v_eq) = surface.minimum();
    let mut lo = surface.r_min();
    let mut hi = r_eq;
    let v_lo = surface.evaluate(lo)?;
    if !(v_lo > energy && v_eq < energy) {
        return Err(QcmError::Geometry(format!(
            "energy {energy} au not bracketed on the inner wall [{lo}, {hi}] (V = {v_lo} .. {v_eq})"
        )));
    }
    while hi - lo > 1e-11 {
        let mid = 0.5 * (lo + hi);
        if surface.evaluate_unchecked(mid) > energy {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One [`InitialCondition`] per level, weights left at zero.
pub fn initial_positions(
    spectrum: &VibSpectrum,
    surface: &PotentialSurface,
) -> Result<Vec<InitialCondition>> {
    if spectrum.len() < 2 {
        return Err(QcmError::Geometry(
            "mid-point construction needs at least two levels".into(),
        ));
    }
    spectrum
        .mid_point_energies()
        .into_iter()
        .enumerate()
        .map(|(v, e)| {
            Ok(InitialCondition {
                v,
                r0: inner_root(surface, e)?,
                weight: 0.0,
            })
        })
        .collect()
}

const PERIOD_DT_FS: f64 = 0.02;
const PERIOD_CYCLES: usize = 5;

/// Classical period (fs) of a particle released at rest from `r0`:
/// mean spacing of the next five inner turning points.
pub fn classical_period(surface: &PotentialSurface, mass: f64, r0: f64) -> Option<f64> {
    let dt = fs_to_au(PERIOD_DT_FS);
    let (lo, hi) = surface.derivative_range();
    let max_steps = (20_000.0 / PERIOD_DT_FS) as usize;
    let mut r = r0;
    let mut vel = 0.0;
    let mut acc = -surface.derivative(r).ok()? / mass;
    let mut turns = Vec::with_capacity(PERIOD_CYCLES);
    for step in 0..max_steps {
        let v_half = vel + 0.5 * dt * acc;
        r += dt * v_half;
        if r <= lo || r >= hi {
            return None;
        }
        acc = -surface.derivative_unchecked(r) / mass;
        let new_vel = v_half + 0.5 * dt * acc;
        if vel < 0.0 && new_vel >= 0.0 {
            let frac = -vel / (new_vel - vel);
            turns.push((step as f64 + frac) * dt);
            if turns.len() == PERIOD_CYCLES {
                return Some(au_to_fs(turns[PERIOD_CYCLES - 1] / PERIOD_CYCLES as f64));
            }
        }
        vel = new_vel;
    }
    None
}

/// Classical period (fs) of level `v` started from its mid-point position.
pub fn period_of(spectrum: &VibSpectrum, surface: &PotentialSurface, v: usize) -> Result<f64> {
    if v >= spectrum.len() {
        return Err(QcmError::validation(format!(
            "v = {v} outside spectrum with {} levels",
            spectrum.len()
        )));
    }
    let target = spectrum.mid_point_energies()[v];
    if target >= surface.asymptote() {
        return Err(QcmError::Unbound { v });
    }
    let r0 = inner_root(surface, target)?;
    classical_period(surface, spectrum.mass(), r0).ok_or(QcmError::Unbound { v })
}

/// Periods of every level, in order.
pub fn periods(spectrum: &VibSpectrum, surface: &PotentialSurface) -> Result<Vec<f64>> {
    (0..spectrum.len())
        .into_par_iter()
        .map(|v| period_of(spectrum, surface, v))
        .collect()
}
