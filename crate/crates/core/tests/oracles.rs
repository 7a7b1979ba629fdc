use ferulam_core::collision::residual_tolerance;
use ferulam_core::export::{
    census_svg, orbit_svg, read_census_csv, read_decomposition_csv, read_drift_csv, read_orbit_csv, write_census_csv,
    write_decomposition_csv, write_drift_csv, write_orbit_csv,
};
use ferulam_core::invariants::{drift_samples, eval_w};
use ferulam_core::pingpong_map::default_energy_floor;
use ferulam_core::torus_flow::{check_haar_decomposition, haar_sample};
use ferulam_core::*;
use std::fs::File;

/// Root of `(t − t0) v0 = p(t)` by plain bisection on the torus-flow forcing.
fn bisect_impact(spec: &ForcingSpec, omega: &TorusPoint, t0: f64, v0: f64) -> f64 {
    let g = |t: f64| (t - t0) * v0 - spec.eval_p(&flow_advance(omega, t, spec.nu()));
    let (mut lo, mut hi) = (t0 + spec.lower_bound() / v0, t0 + spec.upper_bound() / v0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn tv_step_matches_bisection_composition() {
    let spec = ForcingSpec::standard();
    let w = TorusPoint::zero(2);
    let (t0, v0) = (0.0, 10.0);
    let tt = bisect_impact(&spec, &w, t0, v0);
    // closed-form update at the oracle root, derivative from the trig series
    let theta = flow_advance(&w, tt, spec.nu());
    let p = spec.eval_p(&theta);
    let pdot = spec.eval_dpsi_p(&theta);
    let v1 = v0 - 2.0 * pdot;
    let expected = PhaseStateTV { t: tt + p / v1, v: v1 };
    let got = step_tv(&spec.at(&w), PhaseStateTV { t: t0, v: v0 }).unwrap();
    assert!((got.t - expected.t).abs() < 1e-12, "{got:?} vs {expected:?}");
    assert!((got.v - expected.v).abs() < 1e-12);
}

#[test]
fn orbit_residuals_stay_small() {
    let spec = ForcingSpec::standard();
    let rng = CounterRng::new(17);
    let omegas = haar_sample(&rng, 0, 1000, 2);
    let u = rng.child(1).uniforms(0, 1000);
    let floor = default_energy_floor(&spec.at(&omegas[0]));
    let mut worst: f64 = 0.0;
    for (i, w) in omegas.iter().enumerate() {
        let path = spec.at(w);
        let trace = iterate(&path, PhaseStateTE::new(0.0, 50.0 + 500.0 * u[i]), 1000, floor).unwrap();
        assert_eq!(trace.states.len(), trace.residuals.len());
        worst = trace.residuals.iter().fold(worst, |m, r| m.max(r.abs()));
    }
    assert!(worst < 1e-11, "worst residual {worst:e}");
    assert!(worst <= residual_tolerance(spec.upper_bound()));
}

#[test]
fn planar_energy_tracks_skew_energy() {
    let spec = ForcingSpec::standard_two_mode();
    let w = TorusPoint::new(vec![0.12, 0.34]);
    let mut planar = PhaseStateTE::new(0.3, 400.0);
    let mut skew = SkewState {
        omega: flow_advance(&w, 0.3, spec.nu()),
        e: 400.0,
    };
    for _ in 0..200 {
        planar = step_te(&spec.at(&w), planar).unwrap();
        skew = step_skew(&spec, &skew).unwrap();
    }
    assert!((planar.e - skew.e).abs() < 1e-8 * 200.0);
    assert!(skew.omega.distance(&flow_advance(&w, planar.t, spec.nu())) < 1e-8);
}

#[test]
fn w_trace_matches_definition() {
    let spec = ForcingSpec::standard_two_mode();
    let w = TorusPoint::new(vec![0.5, 0.25]);
    let trace = iterate(&spec.at(&w), PhaseStateTE::new(0.0, 300.0), 50, 3.0).unwrap();
    for (s, &wv) in trace.states.iter().zip(&trace.w_values) {
        let direct = eval_w(&spec, &flow_advance(&w, s.t, spec.nu()), s.e);
        assert!((direct - wv).abs() < 1e-9 * wv);
    }
}

#[test]
fn csv_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ForcingSpec::standard_two_mode();
    let w = TorusPoint::new(vec![0.2, 0.9]);

    let trace = iterate(&spec.at(&w), PhaseStateTE::new(0.0, 80.0), 100, 3.0).unwrap();
    let path = dir.path().join("orbit.csv");
    write_orbit_csv(File::create(&path).unwrap(), &trace).unwrap();
    let rows = read_orbit_csv(File::open(&path).unwrap()).unwrap();
    assert_eq!(rows.len(), 101);
    for (r, s) in rows.iter().zip(&trace.states) {
        assert_eq!((r.t, r.e), (s.t, s.e));
    }

    let drift = drift_samples(&spec, 50, (1e2, 1e4), 1.0, &CounterRng::new(1)).unwrap();
    let path = dir.path().join("drift.csv");
    write_drift_csv(File::create(&path).unwrap(), &drift).unwrap();
    let back = read_drift_csv(File::open(&path).unwrap()).unwrap();
    assert!(back.iter().zip(&drift).all(|(a, b)| a.e0 == b.e0 && a.drift == b.drift));

    let section = CrossSection::new(spec.nu().clone());
    let rects = [Rectangle::full(2), Rectangle::new(vec![(0.1, 0.4), (0.2, 0.9)]).unwrap()];
    let dec = check_haar_decomposition(&section, 2000, &rects, &CounterRng::new(2)).unwrap();
    let path = dir.path().join("dec.csv");
    write_decomposition_csv(File::create(&path).unwrap(), &dec).unwrap();
    let back = read_decomposition_csv(File::open(&path).unwrap()).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0].haar_estimate, 1.0);
    assert!(back[0].pass);

    let cfg = CensusConfig {
        n_omega: 2,
        n_orbits: 10,
        n_max: 200,
        ..CensusConfig::default()
    };
    let report = run_census(&spec, &cfg).unwrap();
    let path = dir.path().join("census.csv");
    write_census_csv(File::create(&path).unwrap(), &report).unwrap();
    let back = read_census_csv(File::open(&path).unwrap()).unwrap();
    assert_eq!(back.len(), 3 * (cfg.n_omega + 1));
    assert!(back.iter().filter(|r| r.omega_index.is_none()).count() == 3);
    let json = serde_json::to_string(&report).unwrap();
    let parsed: CensusReport = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed, report);

    assert!(orbit_svg(&trace).contains("<polyline"));
    assert!(census_svg(&report).matches("<polyline").count() == cfg.n_omega + 1);
}

#[test]
fn spec_json_round_trip() {
    let spec = ForcingSpec::standard_two_mode();
    let json = serde_json::to_string(&spec).unwrap();
    let back: ForcingSpec = serde_json::from_str(&json).unwrap();
    assert_eq!(back, spec);
    let bad = r#"{"nu":[1.0,1.5],"c0":0.1,"modes":[{"k":[1,0],"a":0.2,"b":0.0}]}"#;
    assert!(serde_json::from_str::<ForcingSpec>(bad).is_err());
}
