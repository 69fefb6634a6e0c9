//! Reading populations and phases back out of perturbed trajectories.
//!
//! After the control pulse has gone, each perturbed element is compared
//! against the field-free reference motion of every level. The squared
//! difference, minimised over a time offset, scores each level; the two
//! best levels share the element's weight. The offset at the minimum
//! gives the phase of the motion relative to the unperturbed level.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};

use crate::ensemble::Trajectory;
use crate::error::{QcmError, Result};
use crate::ionization::{argmax, InitialPopulation, LaserPulse};
use crate::spectrum::VibSpectrum;
use crate::spline::NaturalSpline;
use crate::units::{energy_to_frequency, frequency_to_energy, fs_to_au};

/// Convention for splitting weight between the two best-fitting levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightSharing {
    /// Share in inverse proportion to the fit values (better fit, more weight).
    #[default]
    Inverse,
    /// Share in direct proportion to the fit values.
    Direct,
}

impl std::str::FromStr for WeightSharing {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "inverse" => Ok(WeightSharing::Inverse),
            "direct" => Ok(WeightSharing::Direct),
            other => Err(format!("unknown weight sharing {other:?}")),
        }
    }
}

impl std::fmt::Display for WeightSharing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightSharing::Inverse => "inverse",
            WeightSharing::Direct => "direct",
        })
    }
}

/// Comparison window and offset scan, all in fs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchWindow {
    pub start: f64,
    pub length: f64,
    /// Total width of the offset scan, centred on zero.
    pub offset_range: f64,
    pub offset_step: f64,
}

impl MatchWindow {
    /// Window starting at `start` and lasting twice the longest period, with
    /// an offset scan 10% wider than that period.
    pub fn for_periods(start: f64, periods: &[f64], offset_step: f64) -> Self {
        let longest = periods.iter().copied().fold(0.0, f64::max);
        MatchWindow {
            start,
            length: 2.0 * longest,
            offset_range: 1.1 * longest,
            offset_step,
        }
    }

    /// Last reference time the scan can touch.
    pub fn reference_end(&self) -> f64 {
        self.start + self.length + 0.5 * self.offset_range
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub v_out: usize,
    /// Σ_t [R_pert(t) - R_ref(t + τ)]² at the best τ.
    pub fit: f64,
    /// Best τ, fs. A motion lagging its reference has negative τ.
    pub offset: f64,
    /// Share of the element's weight.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchOutcome {
    Dissociated,
    /// Best and (when present) second-best levels, best first.
    Matched(Vec<Candidate>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub v_in: usize,
    pub weight: f64,
    pub outcome: MatchOutcome,
}

impl MatchResult {
    pub fn candidates(&self) -> &[Candidate] {
        match &self.outcome {
            MatchOutcome::Matched(c) => c,
            MatchOutcome::Dissociated => &[],
        }
    }

    pub fn best(&self) -> Option<&Candidate> {
        self.candidates().first()
    }

    /// Weight carried by each candidate; sums to `weight` when matched.
    pub fn shared_weights(&self) -> Vec<(usize, f64)> {
        self.candidates()
            .iter()
            .map(|c| (c.v_out, c.fraction * self.weight))
            .collect()
    }
}

fn sample_index(t: f64, interval: f64) -> usize {
    (t / interval).round().max(0.0) as usize
}

/// Scores `perturbed` against every reference level.
///
/// `periods[v]` is the classical period of reference `v`; offsets for that
/// reference are confined to half a period either side of zero, so the
/// minimum is unique and does not depend on how far beyond the longest
/// period `offset_range` extends.
pub fn match_trajectory(
    perturbed: &Trajectory,
    references: &[Trajectory],
    periods: &[f64],
    window: &MatchWindow,
    sharing: WeightSharing,
) -> Result<MatchResult> {
    if perturbed.is_dissociated() {
        return Ok(MatchResult {
            v_in: perturbed.v_label,
            weight: perturbed.weight,
            outcome: MatchOutcome::Dissociated,
        });
    }
    if references.is_empty() || periods.len() != references.len() {
        return Err(QcmError::validation(
            "need one period per reference trajectory and at least one reference",
        ));
    }
    let si = perturbed.sample_interval;
    if references.iter().any(|r| (r.sample_interval - si).abs() > 1e-12) {
        return Err(QcmError::validation(
            "reference sampling differs from the perturbed run",
        ));
    }
    let start = sample_index(window.start, si);
    let len = sample_index(window.length, si);
    if len == 0 {
        return Err(QcmError::validation("empty analysis window"));
    }
    if start + len > perturbed.positions.len() {
        return Err(QcmError::validation(format!(
            "analysis window ends at {:.1} fs beyond the perturbed run ({:.1} fs)",
            window.start + window.length,
            perturbed.duration()
        )));
    }
    let longest = periods.iter().copied().fold(0.0, f64::max);
    if window.offset_range <= longest {
        return Err(QcmError::validation(format!(
            "offset range {} fs must exceed the longest period {longest} fs",
            window.offset_range
        )));
    }
    let step = sample_index(window.offset_step, si).max(1);
    let pert = &perturbed.positions[start..start + len];

    let mut scored: Vec<Candidate> = Vec::with_capacity(references.len());
    for (v, (reference, &period)) in references.iter().zip(periods).enumerate() {
        if reference.is_dissociated() {
            continue;
        }
        let half = (0.5 * window.offset_range).min(0.5 * period);
        let max_shift = (half / si).floor() as i64;
        let mut best = (f64::INFINITY, 0i64);
        let mut k = -(max_shift / step as i64) * step as i64;
        while k <= max_shift {
            // offsets in (-T/2, T/2]
            if (k as f64) * si > -0.5 * period || max_shift == 0 {
                let first = start as i64 + k;
                if first < 0 || (first as usize + len) > reference.positions.len() {
                    return Err(QcmError::validation(format!(
                        "reference v = {v} does not cover the offset scan"
                    )));
                }
                let refs = &reference.positions[first as usize..first as usize + len];
                let fit: f64 = pert.iter().zip(refs).map(|(a, b)| (a - b) * (a - b)).sum();
                if fit < best.0 || (fit == best.0 && k.abs() < best.1.abs()) {
                    best = (fit, k);
                }
            }
            k += step as i64;
        }
        scored.push(Candidate {
            v_out: v,
            fit: best.0,
            offset: best.1 as f64 * si,
            fraction: 0.0,
        });
    }
    if scored.is_empty() {
        return Err(QcmError::validation("no bound reference trajectory"));
    }
    scored.sort_by(|a, b| a.fit.total_cmp(&b.fit).then(a.v_out.cmp(&b.v_out)));
    scored.truncate(2);
    if scored.len() == 1 {
        scored[0].fraction = 1.0;
    } else {
        let (f1, f2) = (scored[0].fit, scored[1].fit);
        let first = if f1 + f2 == 0.0 || (f2 - f1) <= 0.01 * f2 {
            0.5
        } else {
            match sharing {
                WeightSharing::Inverse => f2 / (f1 + f2),
                WeightSharing::Direct => f1 / (f1 + f2),
            }
        };
        scored[0].fraction = first;
        scored[1].fraction = 1.0 - first;
    }
    Ok(MatchResult {
        v_in: perturbed.v_label,
        weight: perturbed.weight,
        outcome: MatchOutcome::Matched(scored),
    })
}

/// v_in × v_out transfer probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMatrix {
    pub entries: Vec<Vec<f64>>,
    pub dissociated: Vec<f64>,
    /// Initial population the matrix acts on.
    pub initial: Vec<f64>,
}

impl PopulationMatrix {
    pub fn identity(initial: &InitialPopulation) -> Self {
        let n = initial.weights.len();
        PopulationMatrix {
            entries: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            dissociated: vec![0.0; n],
            initial: initial.weights.clone(),
        }
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    /// Column sums weighted by the initial population (not renormalized, so
    /// dissociated population is simply missing).
    pub fn final_population(&self) -> Vec<f64> {
        let n = self.entries.first().map_or(0, |r| r.len());
        (0..n)
            .map(|j| {
                self.entries
                    .iter()
                    .zip(&self.initial)
                    .map(|(row, w)| w * row[j])
                    .sum()
            })
            .collect()
    }

    pub fn total_dissociated(&self) -> f64 {
        self.dissociated
            .iter()
            .zip(&self.initial)
            .map(|(d, w)| d * w)
            .sum()
    }

    /// Most probable final level for `v_in`, or None if fully dissociated.
    pub fn dominant_out(&self, v_in: usize) -> Option<usize> {
        let row = &self.entries[v_in];
        if row.iter().all(|x| *x == 0.0) {
            None
        } else {
            Some(argmax(row))
        }
    }

    /// Population-weighted mass on the diagonal.
    pub fn diagonal_mass(&self) -> f64 {
        (0..self.size())
            .map(|i| self.initial[i] * self.entries[i][i])
            .sum()
    }

    /// Population-weighted mass off the diagonal.
    pub fn off_diagonal_mass(&self) -> f64 {
        let total: f64 = self
            .entries
            .iter()
            .zip(&self.initial)
            .map(|(row, w)| w * row.iter().sum::<f64>())
            .sum();
        total - self.diagonal_mass()
    }

    /// CSV: `v_in,0,1,...,dissociated`.
    pub fn to_csv(&self) -> String {
        let n = self.entries.first().map_or(0, |r| r.len());
        let mut s = String::from("v_in");
        for j in 0..n {
            s.push_str(&format!(",{j}"));
        }
        s.push_str(",dissociated\n");
        for (i, row) in self.entries.iter().enumerate() {
            s.push_str(&i.to_string());
            for x in row {
                s.push_str(&format!(",{x:.9e}"));
            }
            s.push_str(&format!(",{:.9e}\n", self.dissociated[i]));
        }
        s
    }
}

/// Assembles the transfer matrix from one match per initial level.
pub fn build_population_matrix(
    matches: &[MatchResult],
    initial: &InitialPopulation,
) -> Result<PopulationMatrix> {
    let n = initial.weights.len();
    if matches.len() != n {
        return Err(QcmError::validation(format!(
            "{} match results for {n} initial levels",
            matches.len()
        )));
    }
    let mut entries = vec![vec![0.0; n]; n];
    let mut dissociated = vec![0.0; n];
    for (i, m) in matches.iter().enumerate() {
        if m.v_in != i {
            return Err(QcmError::validation(format!(
                "match {i} is for v_in = {}; expected one result per level in order",
                m.v_in
            )));
        }
        if (m.weight - initial.weights[i]).abs() > 1e-12 * initial.weights[i].abs().max(1.0) {
            return Err(QcmError::validation(format!(
                "match weight {} for v_in = {i} differs from the initial population {}",
                m.weight, initial.weights[i]
            )));
        }
        match &m.outcome {
            MatchOutcome::Dissociated => dissociated[i] = 1.0,
            MatchOutcome::Matched(cands) => {
                for c in cands {
                    if c.v_out >= n {
                        return Err(QcmError::validation(format!(
                            "candidate level {} outside the {n}-level matrix",
                            c.v_out
                        )));
                    }
                    entries[i][c.v_out] += c.fraction;
                }
            }
        }
    }
    Ok(PopulationMatrix {
        entries,
        dissociated,
        initial: initial.weights.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEntry {
    pub v: usize,
    /// Weighted circular mean, rad, in (-π, π].
    pub mean_phase: f64,
    /// Circular standard deviation, rad.
    pub std: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseReport {
    pub entries: Vec<PhaseEntry>,
}

impl PhaseReport {
    pub fn get(&self, v: usize) -> Option<&PhaseEntry> {
        self.entries.iter().find(|e| e.v == v)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("v,mean_phase_rad,std_rad,weight\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{:.9e},{:.9e},{:.9e}\n",
                e.v, e.mean_phase, e.std, e.weight
            ));
        }
        s
    }
}

/// Maps an angle onto (-π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let mut x = phi.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Phase 2π τ / T of every contribution, combined per final level with
/// circular statistics.
pub fn phase_report(matches: &[MatchResult], periods: &[f64]) -> Result<PhaseReport> {
    let n = periods.len();
    let mut sums = vec![(0.0f64, 0.0f64, 0.0f64); n];
    for m in matches {
        for c in m.candidates() {
            let period = *periods
                .get(c.v_out)
                .ok_or_else(|| QcmError::validation(format!("no period for level {}", c.v_out)))?;
            let w = m.weight * c.fraction;
            let phi = wrap_phase(2.0 * PI * c.offset / period);
            sums[c.v_out].0 += w * phi.cos();
            sums[c.v_out].1 += w * phi.sin();
            sums[c.v_out].2 += w;
        }
    }
    let entries = sums
        .into_iter()
        .enumerate()
        .filter(|(_, s)| s.2 > 0.0)
        .map(|(v, (c, s, w))| {
            let resultant = ((c * c + s * s).sqrt() / w).min(1.0);
            let mean = if s == 0.0 && c < 0.0 {
                PI
            } else {
                wrap_phase(s.atan2(c))
            };
            PhaseEntry {
                v,
                mean_phase: mean,
                std: (-2.0 * resultant.ln()).max(0.0).sqrt(),
                weight: w,
            }
        })
        .collect();
    Ok(PhaseReport { entries })
}

/// Fraction of surviving weight whose R exceeds `critical_r` at any sample
/// inside the probe's FWHM window. Elements that dissociate inside the
/// window count as exceeding it; those gone before it are excluded.
pub fn probe_yield(trajectories: &[Trajectory], probe: &LaserPulse, critical_r: f64) -> Result<f64> {
    let Some(first) = trajectories.first() else {
        return Err(QcmError::validation("no trajectories to probe"));
    };
    let si = first.sample_interval;
    let a = probe.center_time - 0.5 * probe.fwhm;
    let b = probe.center_time + 0.5 * probe.fwhm;
    if a < -1e-9 || b > first.duration() + 1e-9 {
        return Err(QcmError::validation(format!(
            "probe window [{a:.2}, {b:.2}] fs outside trajectory range [0, {:.2}] fs",
            first.duration()
        )));
    }
    let mut i0 = (a / si - 1e-9).ceil().max(0.0) as usize;
    let mut i1 = (b / si + 1e-9).floor() as usize;
    if i1 < i0 {
        i0 = sample_index(probe.center_time, si);
        i1 = i0;
    }
    let mut hit = 0.0;
    let mut total = 0.0;
    for t in trajectories {
        if matches!(t.dissociated_at, Some(td) if td <= i0 as f64 * si) {
            continue;
        }
        total += t.weight;
        let above = (i0..=i1).any(|i| match t.position(i) {
            Some(r) => r > critical_r,
            None => true,
        });
        if above {
            hit += t.weight;
        }
    }
    Ok(if total > 0.0 { hit / total } else { 0.0 })
}

/// Probe yield for a sequence of probe delays (probe centre times, fs).
pub fn probe_scan(
    trajectories: &[Trajectory],
    probe: &LaserPulse,
    delays: &[f64],
    critical_r: f64,
) -> Result<Vec<f64>> {
    delays
        .iter()
        .map(|&d| {
            let mut p = probe.clone();
            p.center_time = d;
            probe_yield(trajectories, &p, critical_r)
        })
        .collect()
}

/// One-sided discrete Fourier magnitude of a uniformly sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSpectrum {
    /// fs^-1
    pub frequency: Vec<f64>,
    /// Energy spacing equivalent of each frequency, hartree.
    pub energy: Vec<f64>,
    /// |X_k| / N
    pub magnitude: Vec<f64>,
}

impl FourierSpectrum {
    pub fn resolution(&self) -> f64 {
        self.frequency.get(1).copied().unwrap_or(0.0)
    }

    /// Local maxima of the magnitude, excluding the zero-frequency bin.
    pub fn peaks(&self) -> Vec<usize> {
        let m = &self.magnitude;
        (1..m.len().saturating_sub(1))
            .filter(|&k| m[k] > m[k - 1] && m[k] >= m[k + 1])
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("frequency_per_fs,energy_au,magnitude\n");
        for ((f, e), m) in self.frequency.iter().zip(&self.energy).zip(&self.magnitude) {
            s.push_str(&format!("{f:.9e},{e:.9e},{m:.9e}\n"));
        }
        s
    }
}

pub fn fourier_magnitude(signal: &[f64], step_fs: f64) -> FourierSpectrum {
    let n = signal.len();
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    if n > 0 {
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    }
    let half = n / 2 + 1;
    let frequency: Vec<f64> = (0..half.min(n))
        .map(|k| k as f64 / (n as f64 * step_fs))
        .collect();
    FourierSpectrum {
        energy: frequency.iter().map(|&f| frequency_to_energy(f)).collect(),
        magnitude: buf
            .iter()
            .take(frequency.len())
            .map(|c| c.norm() / n as f64)
            .collect(),
        frequency,
    }
}

/// True when a scan step resolves beats up to `max_gap_au`.
pub fn satisfies_nyquist(step_fs: f64, max_gap_au: f64) -> bool {
    step_fs <= 0.5 / energy_to_frequency(max_gap_au)
}

/// Field-free eigenstate expansion Ψ(R,t) = Σ sqrt(w_v) χ_v(R) e^{-iE_v t},
/// with zero relative phases at t = 0.
pub struct QuantumOracle {
    r_grid: Vec<f64>,
    amplitudes: Vec<f64>,
    energies: Vec<f64>,
    /// χ_v on `r_grid`, one row per populated level.
    chi: Vec<Vec<f64>>,
}

impl QuantumOracle {
    pub fn new(initial: &InitialPopulation, spectrum: &VibSpectrum, r_grid: &[f64]) -> Result<Self> {
        if initial.weights.len() > spectrum.len() {
            return Err(QcmError::validation(format!(
                "{} populated levels but the spectrum holds {}",
                initial.weights.len(),
                spectrum.len()
            )));
        }
        if r_grid.len() < 2 || r_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(QcmError::validation(
                "oracle grid must be increasing with >= 2 points",
            ));
        }
        let (lo, hi) = (spectrum.grid()[0], *spectrum.grid().last().unwrap());
        let mut chi = Vec::new();
        let mut amplitudes = Vec::new();
        let mut energies = Vec::new();
        for (v, &w) in initial.weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let spline = NaturalSpline::new(spectrum.grid().to_vec(), spectrum.wavefunction(v).to_vec());
            chi.push(
                r_grid
                    .iter()
                    .map(|&r| if r < lo || r > hi { 0.0 } else { spline.eval(r) })
                    .collect(),
            );
            amplitudes.push(w.sqrt());
            energies.push(spectrum.energies()[v]);
        }
        Ok(QuantumOracle {
            r_grid: r_grid.to_vec(),
            amplitudes,
            energies,
            chi,
        })
    }

    /// |Ψ(R,t)|² on the grid, normalized by the trapezoid rule.
    pub fn density(&self, t_fs: f64) -> Vec<f64> {
        let t = fs_to_au(t_fs);
        let phases: Vec<(f64, f64)> = self
            .energies
            .iter()
            .zip(&self.amplitudes)
            .map(|(e, a)| (a * (e * t).cos(), -a * (e * t).sin()))
            .collect();
        let mut rho: Vec<f64> = (0..self.r_grid.len())
            .map(|i| {
                let (mut re, mut im) = (0.0, 0.0);
                for (row, (c, s)) in self.chi.iter().zip(&phases) {
                    re += row[i] * c;
                    im += row[i] * s;
                }
                re * re + im * im
            })
            .collect();
        let norm = trapezoid(&self.r_grid, &rho);
        if norm > 0.0 {
            rho.iter_mut().for_each(|x| *x /= norm);
        }
        rho
    }

    pub fn grid(&self) -> &[f64] {
        &self.r_grid
    }
}

/// One-shot oracle density at a single time.
pub fn quantum_reference(
    initial: &InitialPopulation,
    spectrum: &VibSpectrum,
    t_fs: f64,
    r_grid: &[f64],
) -> Result<Vec<f64>> {
    Ok(QuantumOracle::new(initial, spectrum, r_grid)?.density(t_fs))
}

pub(crate) fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2)
        .zip(f.windows(2))
        .map(|(xs, fs)| 0.5 * (fs[0] + fs[1]) * (xs[1] - xs[0]))
        .sum()
}

/// Weighted Gaussian kernel density of ensemble positions on `r_grid`.
pub fn ensemble_density(samples: &[(f64, f64)], r_grid: &[f64], bandwidth: f64) -> Vec<f64> {
    let norm = 1.0 / (bandwidth * (2.0 * PI).sqrt());
    r_grid
        .iter()
        .map(|&r| {
            samples
                .iter()
                .map(|&(x, w)| {
                    let z = (r - x) / bandwidth;
                    w * norm * (-0.5 * z * z).exp()
                })
                .sum()
        })
        .collect()
}

/// Interior local maxima `(position, height)`, tallest first. Positions are
/// refined by a parabola through the neighbouring samples.
pub fn local_maxima(r_grid: &[f64], f: &[f64]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = (1..f.len().saturating_sub(1))
        .filter(|&i| f[i] > f[i - 1] && f[i] >= f[i + 1])
        .map(|i| {
            let denom = f[i - 1] - 2.0 * f[i] + f[i + 1];
            let h = 0.5 * (r_grid[i + 1] - r_grid[i - 1]);
            let shift = if denom < 0.0 {
                0.5 * h * (f[i - 1] - f[i + 1]) / denom
            } else {
                0.0
            };
            (r_grid[i] + shift, f[i])
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}
