use std::sync::Arc;

use zkms::groundstate::{multi_soliton, GroundStateCache, SolitonParams};
use zkms::modulation::*;
use zkms::spectral;
use zkms::{Grid, ZkError};

fn run_grid() -> Arc<Grid> {
    Arc::new(Grid::new(&[48.0, 24.0], &[192, 96], 1.5).unwrap())
}

#[test]
fn subcritical_modulation_recovers_exact_shifts() {
    let g = run_grid();
    let sol = vec![SolitonParams::new(1.0, vec![0.0, 0.0], 1.0), SolitonParams::new(2.0, vec![0.0, 0.5], 1.0)];
    let cache = GroundStateCache::new(None);
    let m = Modulator::new(&cache, &sol, 2, &g, ModulationMode::Subcritical).unwrap();
    let t = 12.0;
    let (x0, c0) = m.initial_guess(t);
    assert_eq!(x0, vec![vec![12.0, 0.0], vec![24.0, 0.0]]);
    let mut xs = x0.clone();
    xs[0][0] += 0.03;
    xs[1][1] -= 0.02;
    let u = m.modulated_sum(t, &xs, &c0).unwrap();
    let st = m.modulate(&u, t, None).unwrap();
    for k in 0..2 {
        for i in 0..2 {
            assert!((st.xtilde[k][i] - xs[k][i]).abs() < 1e-9, "{:?} vs {xs:?}", st.xtilde);
        }
    }
    assert_eq!(st.ctilde, c0);
    assert!(st.w.max_abs() < 1e-9);
    assert!(st.ortho_residuals.iter().all(|r| r.abs() < 1e-10), "{:?}", st.ortho_residuals);
    assert!(st.jacobian_condition.is_finite() && st.jacobian_condition < MAX_CONDITION);
    // The unmodulated sum is R(t).
    let r = multi_soliton(&sol, 2, t, &g).unwrap();
    assert!(m.modulated_sum(t, &x0, &c0).unwrap().sub(&r).unwrap().max_abs() < 1e-12);
}

#[test]
fn critical_modulation_recovers_speeds_and_signs() {
    let g = run_grid();
    let sol = vec![SolitonParams::new(1.0, vec![0.0, 0.0], 1.0), SolitonParams::new(2.0, vec![0.0, 0.0], -1.0)];
    let cache = GroundStateCache::new(None);
    let m = Modulator::new(&cache, &sol, 3, &g, ModulationMode::Critical).unwrap();
    let t = 12.0;
    let (x0, mut cs) = m.initial_guess(t);
    cs[0] = 1.01;
    let mut xs = x0.clone();
    xs[1][0] += 0.01;
    let u = m.modulated_sum(t, &xs, &cs).unwrap();
    let st = m.modulate(&u, t, None).unwrap();
    assert!((st.ctilde[0] - 1.01).abs() < 1e-8 && (st.ctilde[1] - 2.0).abs() < 1e-8, "{:?}", st.ctilde);
    assert!((st.xtilde[1][0] - xs[1][0]).abs() < 1e-8, "{:?}", st.xtilde);
    assert_eq!(st.critical_terms.len(), 2);
    let refs = m.critical_reference_terms();
    assert_eq!(refs.len(), 2);
    // Both factors carry the soliton sign, so the term is negative for either
    // sign and close to its value at the exact speed.
    for k in 0..2 {
        assert!(st.critical_terms[k] < 0.0 && refs[k] < 0.0);
        assert!((st.critical_terms[k] - refs[k]).abs() < 0.05 * refs[k].abs(), "{:?} vs {refs:?}", st.critical_terms);
    }
    // At the exact speed they agree up to the spatial error of the cubic
    // profile at this spacing.
    assert!((st.critical_terms[1] - refs[1]).abs() < 1e-3 * refs[1].abs(), "{:?} vs {refs:?}", st.critical_terms);
}

#[test]
fn warm_start_converges_in_fewer_iterations() {
    let g = run_grid();
    let sol = vec![SolitonParams::new(1.0, vec![0.0, 0.0], 1.0), SolitonParams::new(2.0, vec![0.0, 0.0], 1.0)];
    let cache = GroundStateCache::new(None);
    let m = Modulator::new(&cache, &sol, 2, &g, ModulationMode::Subcritical).unwrap();
    let t = 10.0;
    let (mut xs, c0) = m.initial_guess(t);
    xs[0][0] += 0.05;
    xs[1][1] += 0.05;
    let u = m.modulated_sum(t, &xs, &c0).unwrap();
    let cold = m.modulate(&u, t, None).unwrap();
    let warm = m.modulate(&u, t, Some((&cold.xtilde, &cold.ctilde))).unwrap();
    assert!(warm.iterations <= cold.iterations);
    assert!(warm.iterations <= 1, "{}", warm.iterations);
}

#[test]
fn inputs_outside_the_radius_are_rejected() {
    let g = run_grid();
    let sol = vec![SolitonParams::new(1.0, vec![0.0, 0.0], 1.0), SolitonParams::new(2.0, vec![0.0, 0.0], 1.0)];
    let cache = GroundStateCache::new(None);
    let m = Modulator::new(&cache, &sol, 2, &g, ModulationMode::Subcritical).unwrap().with_alpha(0.1);
    let u = multi_soliton(&sol, 2, 12.0, &g).unwrap().scaled(1.5);
    assert!(matches!(m.modulate(&u, 12.0, None), Err(ZkError::InvalidArgument(_))));
    let other = spectral::Field::zeros(Arc::new(Grid::new(&[48.0, 24.0], &[96, 48], 1.5).unwrap()));
    assert!(m.modulate(&other, 12.0, None).is_err());
}

#[test]
fn unordered_speeds_are_rejected() {
    let g = run_grid();
    let sol = vec![SolitonParams::new(2.0, vec![0.0, 0.0], 1.0), SolitonParams::new(1.0, vec![0.0, 0.0], 1.0)];
    assert!(Modulator::new(&GroundStateCache::new(None), &sol, 2, &g, ModulationMode::Subcritical).is_err());
}

#[test]
fn consistency_ratio_vanishes_at_the_reference() {
    let g = run_grid();
    let sol = vec![SolitonParams::new(1.0, vec![0.0, 0.0], 1.0), SolitonParams::new(2.0, vec![0.0, 0.0], 1.0)];
    let cache = GroundStateCache::new(None);
    let m = Modulator::new(&cache, &sol, 2, &g, ModulationMode::Subcritical).unwrap();
    let t = 12.0;
    let (mut xs, c0) = m.initial_guess(t);
    xs[0][1] = 0.01;
    let r = multi_soliton(&sol, 2, t, &g).unwrap();
    let u = m.modulated_sum(t, &xs, &c0).unwrap();
    let st = m.modulate(&u, t, None).unwrap();
    let dist = spectral::sobolev_norm(&u.sub(&r).unwrap(), 1.0, false).unwrap();
    let k = m.consistency_ratio(&st, dist).unwrap();
    // |x̃ - x| = 0.01 against ‖∂_2 R‖_{H¹} · 0.01 to first order.
    assert!(k > 0.1 && k < 10.0, "{k}");
}

fn synthetic(times: &[f64], shift: impl Fn(f64) -> f64, rhs: impl Fn(f64) -> f64) -> Vec<DriftSample> {
    times
        .iter()
        .map(|&t| DriftSample { t, xtilde: vec![vec![t + shift(t), 0.0]], ctilde: vec![1.0], rhs: rhs(t) })
        .collect()
}

#[test]
fn drift_audit_accepts_proportional_drift() {
    let times: Vec<f64> = (0..40).map(|i| 2.0 + 0.1 * i as f64).collect();
    let v = parameter_drift_audit(&synthetic(&times, |t| 0.3 * (-t).exp(), |t| (-t).exp())).unwrap();
    assert!(v.passed, "{v:?}");
    assert!((v.constant - 0.3).abs() < 0.01, "{}", v.constant);

    let exact = parameter_drift_audit(&synthetic(&times, |_| 0.0, |t| (-t).exp())).unwrap();
    assert!(exact.passed && exact.constant < 1e-9, "{exact:?}");
}

#[test]
fn drift_audit_rejects_growing_constants() {
    let times: Vec<f64> = (0..40).map(|i| 2.0 + 0.1 * i as f64).collect();
    let v = parameter_drift_audit(&synthetic(&times, |t| 0.01 * t * t, |t| (-t).exp())).unwrap();
    assert!(!v.passed, "{v:?}");
    assert!(v.constant_late > 2.0 * v.constant_early);
}

#[test]
fn drift_audit_input_validation() {
    let times = [0.0, 0.1, 0.2, 0.35, 0.4, 0.5];
    assert!(parameter_drift_audit(&synthetic(&times, |_| 0.0, |_| 1.0)).is_err());
    assert!(parameter_drift_audit(&synthetic(&times[..3], |_| 0.0, |_| 1.0)).is_err());
}

#[test]
fn drift_rhs_has_the_interaction_floor() {
    let g = run_grid();
    let sol = vec![SolitonParams::new(1.0, vec![0.0, 0.0], 1.0), SolitonParams::new(2.0, vec![0.0, 0.0], 1.0)];
    let w = spectral::Field::zeros(g.clone());
    let t = 4.0;
    let rhs = drift_rhs(&w, &sol, t, 1.0).unwrap();
    assert!((rhs - (-0.5 * t).exp()).abs() < 1e-15);
    let w = spectral::Field::from_fn(g, |_| 1e-3);
    assert!(drift_rhs(&w, &sol, t, 1.0).unwrap() > rhs);
}
