use std::sync::Arc;

use zkms::construction::*;
use zkms::evolution::Scheme;
use zkms::groundstate::{multi_soliton, GroundStateCache, SolitonParams};
use zkms::{Grid, ZkError};

fn pair_config(sn: Vec<f64>) -> ConstructionConfig {
    ConstructionConfig {
        p: 2,
        solitons: vec![SolitonParams::new(1.0, vec![0.0, 0.0], 1.0), SolitonParams::new(2.0, vec![0.0, 0.0], 1.0)],
        grid: Arc::new(Grid::new(&[48.0, 24.0], &[128, 64], 1.5).unwrap()),
        dt: 4e-3,
        scheme: Scheme::Etdrk4,
        t0: 4.0,
        sn,
        s_list: vec![2, 3],
        cadence: 25,
        snapshot_every: 2,
        modulate: true,
        hs_audit: Some(4),
        cutoff_scale: None,
        fit_fraction: 2.0 / 3.0,
    }
}

#[test]
fn single_soliton_is_reproduced_exactly() {
    // With K = 1 the backward solution from R(S_n) is R itself.
    let grid = Arc::new(Grid::new(&[40.0, 40.0], &[256, 256], 1.0).unwrap());
    let cfg = ConstructionConfig {
        solitons: vec![SolitonParams::new(1.0, vec![0.0, 0.0], 1.0)],
        grid,
        dt: 1e-2,
        t0: 2.0,
        sn: vec![3.0, 4.0],
        cadence: 10,
        modulate: false,
        hs_audit: None,
        s_list: vec![2],
        ..pair_config(vec![])
    };
    let ladder = construct(&cfg, &GroundStateCache::new(None)).unwrap();
    assert!(ladder.first_failure().is_none());
    for r in &ladder.reports {
        let e = r.h1_error_t0.unwrap();
        assert!(e < 1e-8, "S_n={}: ‖u(T0) - R(T0)‖_H1 = {e:e}", r.sn);
    }
}

#[test]
fn two_soliton_ladder_converges() {
    let cfg = pair_config(vec![8.0, 10.0, 12.0]);
    let cache = GroundStateCache::new(None);
    let ladder = construct(&cfg, &cache).unwrap();
    assert!(ladder.first_failure().is_none());
    assert_eq!(ladder.l, 2.0);
    assert!(ladder.threshold_a.is_some());

    let errs: Vec<f64> = ladder.reports.iter().map(|r| r.h1_error_t0.unwrap()).collect();
    assert!(errs.iter().all(|e| e.is_finite() && *e > 0.0), "{errs:?}");
    let cauchy = ladder.cauchy_h1.as_ref().unwrap();
    assert_eq!(cauchy.differences.len(), 2);
    assert!(cauchy.ratio < 1.0, "{cauchy:?}");
    assert!(ladder.cauchy_l2.as_ref().unwrap().ratio < 1.0);

    for (rung, rep) in ladder.rungs.iter().zip(&ladder.reports) {
        // Rows are ordered by increasing time and end at S_n.
        assert!(rung.rows.windows(2).all(|w| w[1].t > w[0].t));
        assert_eq!(rung.rows.first().unwrap().t, cfg.t0);
        assert_eq!(rung.rows.last().unwrap().t, rung.sn);
        assert!(rung.rows.last().unwrap().h1_error < 1e-12);
        assert_eq!(rung.modulation.len(), rung.rows.len());
        assert!(rung.modulation_failure.is_none());
        // Coarse grid; the flagship resolution holds the drift near 1e-13.
        assert!(rung.mass_drift < 1e-6, "{}", rung.mass_drift);
        assert_eq!(rep.monotonicity.len(), 2);
        assert!(rep.drift_audit.is_some());
        assert!(rep.hs_audit.is_some());
        assert_eq!(rep.decay_hs.len(), 2);
        let fit = rep.decay_h1.as_ref().unwrap();
        assert!(fit.rate > 0.0 && fit.decaying, "{fit:?}");
        assert!(rep.theory.as_ref().unwrap().guaranteed_rate == guaranteed_rate(1.0));
    }
    assert_eq!(ladder.best_approximation().unwrap().values(), ladder.rungs[2].u_t0.as_ref().unwrap().values());

    // The starting data is R(S_n).
    let r = multi_soliton(&cfg.solitons, 2, 8.0, &cfg.grid).unwrap();
    assert_eq!(final_data(&cfg, &cache, 8.0).unwrap().sub(&r).unwrap().max_abs(), 0.0);
}

#[test]
fn construction_is_deterministic_and_self_consistent() {
    let mut cfg = pair_config(vec![7.0, 8.0]);
    cfg.hs_audit = None;
    let cache = GroundStateCache::new(None);
    let a = construct(&cfg, &cache).unwrap();
    let b = construct(&cfg, &cache).unwrap();
    for (ra, rb) in a.rungs.iter().zip(&b.rungs) {
        assert_eq!(ra.u_t0.as_ref().unwrap().values(), rb.u_t0.as_ref().unwrap().values());
    }
    let u = uniqueness_crosscheck(&a, &b).unwrap();
    assert_eq!(u.difference_h1, 0.0);
    assert!(u.passed);
    assert!(!u.h_series.is_empty());
    assert!(u.h_series.iter().all(|(_, h)| *h == 0.0));

    let mut other = cfg.clone();
    other.t0 = 5.0;
    let c = construct(&other, &cache).unwrap();
    assert!(matches!(uniqueness_crosscheck(&a, &c), Err(ZkError::InvalidArgument(_))));
}

#[test]
fn invalid_ladders_are_rejected() {
    let base = pair_config(vec![8.0, 10.0]);
    let cache = GroundStateCache::new(None);
    let mut bad = vec![];
    let mut c = base.clone();
    c.sn = vec![10.0, 8.0];
    bad.push(c);
    let mut c = base.clone();
    c.t0 = 8.0;
    bad.push(c);
    let mut c = base.clone();
    c.sn.clear();
    bad.push(c);
    let mut c = base.clone();
    c.hs_audit = Some(3);
    bad.push(c);
    let mut c = base.clone();
    c.fit_fraction = 0.0;
    bad.push(c);
    let mut c = base.clone();
    c.cadence = 0;
    bad.push(c);
    let mut c = base.clone();
    c.solitons.reverse();
    bad.push(c);
    for cfg in &bad {
        assert!(matches!(construct(cfg, &cache), Err(ZkError::InvalidArgument(_))), "{:?} {:?}", cfg.sn, cfg.t0);
    }
    let mut c = base.clone();
    c.grid = Arc::new(Grid::new(&[24.0, 12.0, 12.0], &[32, 16, 16], 1.5).unwrap());
    c.p = 3;
    c.solitons = vec![SolitonParams::new(1.0, vec![0.0; 3], 1.0)];
    assert!(matches!(construct(&c, &cache), Err(ZkError::UnsupportedCase(_))));
}

#[test]
fn cauchy_fit_geometry() {
    let f = cauchy_fit(&[1.0, 0.5, 0.25]).unwrap();
    assert!((f.ratio - 0.5).abs() < 1e-14);
    assert!((f.tail - 0.25).abs() < 1e-14);
    assert!(cauchy_fit(&[1.0]).is_none());
    assert!(cauchy_fit(&[1.0, 0.0]).is_none());
    assert_eq!(cauchy_fit(&[1.0, 2.0]).unwrap().tail, f64::INFINITY);
}

#[test]
fn theory_comparison_margin() {
    let samples: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, (-0.5 * i as f64).exp())).collect();
    let fit = fit_decay("h1", &samples).unwrap();
    let cmp = theory_comparison(&fit, 1.0);
    assert_eq!(cmp.guaranteed_rate, 0.125);
    assert!(cmp.meets_guarantee);
    assert!((cmp.margin - 0.375).abs() < 1e-9, "{}", cmp.margin);
    assert!(fit_decay("h1", &samples[..5]).is_err());
    let mut neg = samples.clone();
    neg[3].1 = -1.0;
    assert!(fit_decay("h1", &neg).is_err());
}
