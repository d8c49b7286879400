//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 9, 10 and 12 run the desk-scale construction ladder three times
//! and take most of the half hour this target needs. Set
//! `ZKMS_ACCEPTANCE_QUICK=1` to skip them.
//!
//! The target fails when a criterion outside [`KNOWN_FAILURES`] fails, or
//! when a known failure starts passing (so the list stays honest).

mod common;

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zkms::config::parse_config;
use zkms::construction::{construct, uniqueness_crosscheck, ConstructionLadder};
use zkms::evolution::{mass, ConservationObserver, Evolver, EvolverConfig};
use zkms::groundstate::{
    decay_audit, elliptic_residual, multi_soliton, soliton_field, solve_ground_state, GroundState,
    GroundStateCache, DEFAULT_TOL,
};
use zkms::linearized::{coercivity_norm_sq, random_test_field, CoercivityForm, LinearizedOperator};
use zkms::modulation::{ModulationMode, Modulator};
use zkms::output::write_ladder;
use zkms::spectral::{self, Field};
use zkms::{Grid, SolitonParams, ZkError};

/// Criteria expected to fail, with the reason recorded next to them.
///
/// 9: at `T₀ = 2` with both solitons started at `y = 0` they still overlap,
/// the `H¹` error is not a single exponential over the early window, and the
/// log-linear fit residual lands at 0.10 to 0.16 instead of below 0.1.
const KNOWN_FAILURES: &[u32] = &[9];

const FLAGSHIP: &str = r#"
[problem]
dim = 2
p = 2

[[solitons]]
c = 1.0
y = [0.0, 0.0]

[[solitons]]
c = 2.0
y = [0.0, 0.0]

[grid]
n = [512, 256]
box = [64.0, 32.0]
frame = 1.5

[evolver]
dt = 5e-4
scheme = "etdrk4"

[ladder]
T0 = 2.0
Sn = [6.0, 8.0, 10.0]

[diagnostics]
s_list = [2, 3, 4]
cadence = 200
"#;

struct Outcome {
    id: u32,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(id: u32, title: &'static str, passed: bool, detail: String) -> Outcome {
    let verdict = if passed { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} [{verdict}] {title}: {detail}");
    Outcome { id, title, passed, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn criterion_1(grid: &Arc<Grid>) -> (Outcome, GroundState) {
    let start = Instant::now();
    let q1 = solve_ground_state(1.0, 2, grid.clone(), DEFAULT_TOL).expect("ground state");
    let secs = start.elapsed().as_secs_f64();
    let residual = elliptic_residual(&q1.profile, 1.0, 2).max_abs();
    let (peak, l2) = common::RADIAL_D2P2;
    let (e_peak, e_mass) = (rel(q1.peak(), peak), rel(q1.l2_sq(), l2));
    let passed = residual < 1e-10 && e_peak < 1e-6 && e_mass < 1e-6 && secs < 30.0;
    let o = outcome(
        1,
        "ground-state residual",
        passed,
        format!("residual {residual:.2e}, peak rel {e_peak:.2e}, mass rel {e_mass:.2e}, {secs:.1} s"),
    );
    (o, q1)
}

/// `Q_4` on the 256²/32² grid against `4 Q_1(2x)`, with `Q_1` solved on a
/// 512²/64² grid of the same spacing so that every stretched sample is a grid
/// point of the larger box.
fn criterion_2(grid: &Arc<Grid>) -> (Outcome, GroundState) {
    let start = Instant::now();
    let q4 = solve_ground_state(4.0, 2, grid.clone(), DEFAULT_TOL).expect("Q_4");
    let wide = Arc::new(Grid::uniform(2, 64.0, 512).unwrap());
    let q1_wide = solve_ground_state(1.0, 2, wide, DEFAULT_TOL).expect("Q_1 on the wide box");
    let secs = start.elapsed().as_secs_f64();
    let n = grid.points()[0];
    let mut err: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let stretched = 4.0 * q1_wide.profile.values()[(2 * i) * (2 * n) + 2 * j];
            err = err.max((q4.profile.values()[i * n + j] - stretched).abs());
        }
    }
    let passed = err < 1e-7 && secs < 60.0;
    (outcome(2, "scaling law", passed, format!("L∞ {err:.2e}, {secs:.1} s")), q4)
}

fn criterion_3(q1: &GroundState) -> Outcome {
    let d = decay_audit(q1).expect("decay audit");
    let passed = (0.9..=1.1).contains(&d.rate_compensated);
    outcome(
        3,
        "decay audit",
        passed,
        format!(
            "rate {:.4} after removing r^(-1/2) (raw slope {:.4}) over r in [{}, {}]",
            d.rate_compensated, d.rate, d.r_min, d.r_max
        ),
    )
}

fn criterion_4(q1: &GroundState) -> Outcome {
    let grid = q1.profile.grid().clone();
    let mut ev = Evolver::new(grid, 2, EvolverConfig::new(1e-3)).unwrap();
    let mut cons = ConservationObserver::new(2);
    let u = ev.evolve(&q1.profile, 0.0, 1.0, 50, &mut [&mut cons]).expect("evolution");
    let (dm, de) = cons.max_relative_drift();
    let target = spectral::translate(&q1.profile, &[1.0, 0.0]).unwrap();
    let shape = u.sub(&target).unwrap().l2_norm();
    let passed = dm < 1e-8 && de < 1e-8 && shape < 1e-6;
    outcome(
        4,
        "evolver conservation",
        passed,
        format!("mass drift {dm:.2e}, energy drift {de:.2e}, shape error {shape:.2e} (L²)"),
    )
}

fn criterion_5(q1: &GroundState) -> Outcome {
    let grid = q1.profile.grid().clone();
    let u0 = spectral::translate(&q1.profile, &[-2.0, 1.0]).unwrap();
    let mut ev = Evolver::new(grid, 2, EvolverConfig::new(1e-3)).unwrap();
    let u1 = ev.evolve(&u0, 0.0, 1.0, 1000, &mut []).unwrap();
    let back = ev.evolve(&u1, 1.0, 0.0, 1000, &mut []).unwrap();
    let err = back.sub(&u0).unwrap().l2_norm();
    outcome(5, "reversibility", err < 1e-9, format!("‖u(0) - B(F(u(0)))‖ = {err:.2e}"))
}

fn criterion_6(q1: &GroundState, q4: &GroundState) -> Outcome {
    let s1 = LinearizedOperator::new(q1).ground_eigenpair(1e-11).expect("eigenpair c=1");
    let s4 = LinearizedOperator::new(q4).ground_eigenpair(1e-11).expect("eigenpair c=4");
    let kernel = s1.kernel_residuals.iter().cloned().fold(0.0, f64::max);
    let oracle = rel(s1.lambda0, common::LAMBDA0_DENSE);
    let z_min = s1.z.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let z_norm = (s1.z.l2_norm() - 1.0).abs();
    let scaling = rel(s4.lambda0, 4.0 * s1.lambda0);
    let passed = kernel < 1e-8 && oracle < 1e-4 && z_min > -1e-12 && z_norm < 1e-12 && scaling < 1e-4;
    outcome(
        6,
        "spectrum",
        passed,
        format!(
            "kernel residual {kernel:.2e}, λ0 {:.10} vs dense {:.10} (rel {oracle:.1e}), min Z {z_min:.1e}, \
             |‖Z‖-1| {z_norm:.1e}, λ0(4)/4λ0(1) rel {scaling:.1e}",
            s1.lambda0,
            common::LAMBDA0_DENSE
        ),
    )
}

/// Gram-Schmidt in `L²`, then removes those directions from `w`.
fn project(w: &Field, cons: &[Field]) -> Field {
    let mut basis: Vec<Field> = Vec::new();
    for c in cons {
        let mut v = c.clone();
        for b in &basis {
            v = v.axpy(-spectral::inner_product(b, &v).unwrap(), b).unwrap();
        }
        let n = v.l2_norm();
        basis.push(v.scaled(1.0 / n));
    }
    let mut out = w.clone();
    for _ in 0..2 {
        for b in &basis {
            out = out.axpy(-spectral::inner_product(b, &out).unwrap(), b).unwrap();
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let (grid, sol, p, t, l) = common::coercivity_setup();
    let cache = GroundStateCache::new(None);
    let form = CoercivityForm::new(&cache, &sol, p, t, l, &grid).unwrap();
    let cons = form.constraint_fields(&cache).unwrap();
    let centers: Vec<Vec<f64>> = sol.iter().map(|s| s.center(t, &grid)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let c0 = common::C0_DENSE;
    let mut violations = 0;
    let mut q_min = f64::INFINITY;
    for _ in 0..100 {
        let w = project(&random_test_field(&grid, &centers, &mut rng).unwrap(), &cons);
        let (value, norm) = (form.value(&w).unwrap(), coercivity_norm_sq(&w));
        if value - 1e-12 < c0 * norm {
            violations += 1;
        }
        q_min = q_min.min(value / norm);
    }
    let z = form.eigenfunction(&cache, 0).unwrap();
    let noise = random_test_field(&grid, &centers, &mut rng).unwrap();
    let w = z.axpy(0.1 / noise.l2_norm(), &noise).unwrap();
    let q_z = form.value(&w).unwrap() / coercivity_norm_sq(&w);
    let passed = c0 > 0.0 && violations == 0 && q_z < q_min;
    outcome(
        7,
        "coercivity sampling",
        passed,
        format!(
            "C0 = {c0:.6}, {violations} of 100 projected samples below it (smallest quotient {q_min:.4}); \
             unprojected Z-field quotient {q_z:.4}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let grid = Arc::new(Grid::new(&[48.0, 24.0], &[192, 96], 1.5).unwrap());
    let sol = vec![SolitonParams::new(1.0, vec![0.0, 0.0], 1.0), SolitonParams::new(2.0, vec![0.0, 0.5], 1.0)];
    let cache = GroundStateCache::new(None);
    let m = Modulator::new(&cache, &sol, 2, &grid, ModulationMode::Subcritical).unwrap().with_tolerance(1e-13);
    let t = 12.0;

    // Exact parameters.
    let (x0, c0) = m.initial_guess(t);
    let mut xs = x0.clone();
    xs[0][0] += 0.03;
    xs[1][1] -= 0.02;
    let u = m.modulated_sum(t, &xs, &c0).unwrap();
    let st = m.modulate(&u, t, None).unwrap();
    let exact_err =
        st.xtilde.iter().flatten().zip(xs.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    // u = R + ε ∂₂Q_{c¹} moves soliton 1 by -ε along axis 2.
    let eps = 1e-3;
    let r = multi_soliton(&sol, 2, t, &grid).unwrap();
    let q1 = soliton_field(&sol[0], 2, t, &grid).unwrap();
    let u = r.axpy(eps, &spectral::derivative(&q1, &[2]).unwrap()).unwrap();
    let st = m.modulate(&u, t, None).unwrap();
    let objective = |a: f64| {
        let mut x = st.xtilde.clone();
        x[0][1] = a;
        let d = u.sub(&m.modulated_sum(t, &x, &st.ctilde).unwrap()).unwrap();
        spectral::inner_product(&d, &d).unwrap()
    };
    // Grid search over [-3ε, 3ε], refined by the parabola through the best
    // grid point and its neighbours.
    let h = eps / 20.0;
    let samples: Vec<(f64, f64)> = (-60..=60).map(|i| (i as f64 * h, objective(i as f64 * h))).collect();
    let best = (1..samples.len() - 1).min_by(|&a, &b| samples[a].1.total_cmp(&samples[b].1)).unwrap();
    let (fm, f0, fp) = (samples[best - 1].1, samples[best].1, samples[best + 1].1);
    let a_star = samples[best].0 + 0.5 * h * (fm - fp) / (fm - 2.0 * f0 + fp);
    let oracle_gap = (st.xtilde[0][1] - a_star).abs();
    let shift_gap = (st.xtilde[0][1] + eps).abs();

    // K₁ over perturbation amplitudes.
    let r0 = multi_soliton(&sol, 2, t, &grid).unwrap();
    let centers: Vec<Vec<f64>> = sol.iter().map(|s| s.center(t, &grid)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phi = random_test_field(&grid, &centers, &mut rng).unwrap();
    let phi = phi.scaled(1.0 / spectral::sobolev_norm(&phi, 1.0, false).unwrap());
    let mut ks = Vec::new();
    for amp in [1e-4, 1e-3, 1e-2] {
        let u = r0.axpy(amp, &phi).unwrap();
        let st = m.modulate(&u, t, None).unwrap();
        let dist = spectral::sobolev_norm(&u.sub(&r0).unwrap(), 1.0, false).unwrap();
        ks.push(m.consistency_ratio(&st, dist).unwrap());
    }
    let spread = ks.iter().cloned().fold(0.0, f64::max) / ks.iter().cloned().fold(f64::INFINITY, f64::min);

    let passed = exact_err < 1e-10 && oracle_gap < eps * eps && shift_gap < 10.0 * eps * eps && spread <= 2.0;
    outcome(
        8,
        "modulation",
        passed,
        format!(
            "exact recovery {exact_err:.1e}; ε = 1e-3: |x̃ - grid search| {oracle_gap:.1e}, |x̃ + ε| {shift_gap:.1e}; \
             K1 = {:.3}/{:.3}/{:.3} (spread {spread:.3})",
            ks[0], ks[1], ks[2]
        ),
    )
}

fn flagship(sn: Option<&str>) -> (ConstructionLadder, f64) {
    let text = match sn {
        Some(s) => FLAGSHIP.replace("Sn = [6.0, 8.0, 10.0]", s),
        None => FLAGSHIP.to_string(),
    };
    let cfg = parse_config(&text).expect("flagship configuration").construction().unwrap();
    let start = Instant::now();
    let ladder = construct(&cfg, GroundStateCache::global()).expect("construction");
    (ladder, start.elapsed().as_secs_f64())
}

fn criterion_9(ladder: &ConstructionLadder, secs: f64) -> Outcome {
    let mut notes = Vec::new();
    let mut a = ladder.first_failure().is_none();
    let mut b = true;
    let mut d = true;
    let mut e = true;
    for r in &ladder.reports {
        match &r.decay_h1 {
            Some(f) => {
                a &= f.rate > 0.0 && f.residual < 0.1;
                notes.push(format!("S={}: δ̂ {:.3} res {:.3} [{:.1},{:.1}]", r.sn, f.rate, f.residual, f.t_min, f.t_max));
            }
            None => {
                a = false;
                notes.push(format!("S={}: no fit", r.sn));
            }
        }
        b &= r.theory.as_ref().is_some_and(|t| t.meets_guarantee);
        for v in r.monotonicity.iter().filter(|v| v.kappa == 1) {
            d &= v.passed() && v.mass.fitted_constant.is_finite() && v.energy.fitted_constant.is_finite();
        }
        d &= r.monotonicity.iter().any(|v| v.kappa == 1);
        for (s, fit) in &r.decay_hs {
            e &= fit.as_ref().is_some_and(|f| f.rate > 0.0);
            if fit.is_none() {
                notes.push(format!("S={} s={s}: no Hs fit", r.sn));
            }
        }
    }
    let c = ladder.cauchy_l2.as_ref().is_some_and(|c| c.ratio < 1.0);
    let ratio = ladder.cauchy_l2.as_ref().map_or(f64::NAN, |c| c.ratio);
    let passed = a && b && c && d && e && secs < 1800.0;
    let flag = |x: bool| if x { "ok" } else { "FAIL" };
    outcome(
        9,
        "construction flagship",
        passed,
        format!(
            "(a) {} (b) {} (c) {} ratio {ratio:.3} (d) {} (e) {}; {}; {secs:.0} s",
            flag(a),
            flag(b),
            flag(c),
            flag(d),
            flag(e),
            notes.join("; ")
        ),
    )
}

fn criterion_10(a: &ConstructionLadder, b: &ConstructionLadder) -> Outcome {
    let r = uniqueness_crosscheck(a, b).expect("uniqueness cross-check");
    outcome(
        10,
        "uniqueness crosscheck",
        r.passed,
        format!(
            "‖U0(A) - U0(B)‖_H1 = {:.3e} against 10 × tail = {:.3e} (tails {:.2e}, {:.2e})",
            r.difference_h1, r.threshold, r.tail_a, r.tail_b
        ),
    )
}

fn criterion_11() -> Outcome {
    let grid = Arc::new(Grid::uniform(2, 24.0, 128).unwrap());
    let q = solve_ground_state(1.0, 3, grid.clone(), DEFAULT_TOL).expect("cubic ground state");
    let small = q.profile.scaled(0.7);
    let ratio = 2.0 * mass(&small) / q.l2_sq();
    let mut ev = Evolver::new(grid.clone(), 3, EvolverConfig::new(1e-3)).unwrap();
    let sub = ev.evolve(&small, 0.0, 5.0, 500, &mut []);
    let sub_ok = sub.as_ref().is_ok_and(|u| u.values().iter().all(|v| v.is_finite()));

    let mut ev = Evolver::new(grid, 3, EvolverConfig::new(1e-3)).unwrap();
    let mut cons = ConservationObserver::new(3);
    let big = ev.evolve(&q.profile.scaled(2.0), 0.0, 10.0, 50, &mut [&mut cons]);
    let (blew_up, detail) = match &big {
        Err(ZkError::BlowUpDetected { t_last_good, reason }) => {
            let clean = t_last_good.is_finite()
                && *t_last_good < 10.0
                && cons.records.iter().all(|r| r.mass.is_finite() && r.energy.is_finite());
            (clean, format!(
                "blow-up detected after t = {t_last_good:.3} ({reason}), {} finite records kept",
                cons.records.len()
            ))
        }
        Err(e) => (false, format!("unexpected error {e}")),
        Ok(_) => (false, "2Q completed without blow-up".into()),
    };
    outcome(
        11,
        "critical-case guard",
        sub_ok && blew_up,
        format!("0.7Q (mass {ratio:.2} of ∫Q²) to t = 5: {}; 2Q: {detail}", if sub_ok { "completed" } else { "failed" }),
    )
}

fn identical_outputs(a: &Path, b: &Path) -> (bool, usize) {
    let mut names: Vec<String> = fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv") || n.ends_with(".ndjson"))
        .collect();
    names.sort();
    let same = names.iter().all(|n| fs::read(a.join(n)).ok() == fs::read(b.join(n)).ok());
    (same && !names.is_empty(), names.len())
}

fn criterion_12(first: &ConstructionLadder) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    write_ladder(first, &a).unwrap();
    let (second, _) = flagship(None);
    write_ladder(&second, &b).unwrap();
    let (same, count) = identical_outputs(&a, &b);
    outcome(12, "determinism", same, format!("{count} CSV/NDJSON files compared byte for byte"))
}

fn main() {
    // Accept and ignore the libtest flags cargo passes to every target.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let quick = std::env::var_os("ZKMS_ACCEPTANCE_QUICK").is_some();
    let grid = Arc::new(Grid::uniform(2, 32.0, 256).unwrap());
    let mut results = Vec::new();

    let (o, q1) = criterion_1(&grid);
    results.push(o);
    let (o, q4) = criterion_2(&grid);
    results.push(o);
    results.push(criterion_3(&q1));
    results.push(criterion_4(&q1));
    results.push(criterion_5(&q1));
    results.push(criterion_6(&q1, &q4));
    results.push(criterion_7());
    results.push(criterion_8());
    results.push(criterion_11());
    if quick {
        println!("criteria 9, 10, 12 skipped (ZKMS_ACCEPTANCE_QUICK)");
    } else {
        eprintln!("running the flagship ladder; this takes several minutes");
        let (ladder, secs) = flagship(None);
        results.push(criterion_9(&ladder, secs));
        let (other, _) = flagship(Some("Sn = [7.0, 9.0, 11.0]"));
        results.push(criterion_10(&ladder, &other));
        drop(other);
        results.push(criterion_12(&ladder));
    }
    results.sort_by_key(|o| o.id);

    let unexpected: Vec<&Outcome> =
        results.iter().filter(|o| !o.passed && !KNOWN_FAILURES.contains(&o.id)).collect();
    let fixed: Vec<&Outcome> = results.iter().filter(|o| o.passed && KNOWN_FAILURES.contains(&o.id)).collect();
    let failed = results.iter().filter(|o| !o.passed).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    for o in &unexpected {
        println!("unexpected failure: criterion {} ({}): {}", o.id, o.title, o.detail);
    }
    for o in &fixed {
        println!("criterion {} now passes; remove it from KNOWN_FAILURES", o.id);
    }
    if !unexpected.is_empty() || !fixed.is_empty() {
        std::process::exit(1);
    }
}
