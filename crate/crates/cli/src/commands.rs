use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ferulam_core::census::{build_report, recurrence_profile_from, simulate_census};
use ferulam_core::export;
use ferulam_core::forcing::{DEFAULT_RESONANCE_ORDER, DEFAULT_RESONANCE_TOL, DEFAULT_VSTAR_GRID};
use ferulam_core::invariants::{band_hits, delta_modulus, drift_samples, drift_scaling, estimate_drift_constant};
use ferulam_core::pingpong_map::{build_noninjectivity_example, injectivity_probe};
use ferulam_core::torus_flow::check_haar_decomposition;
use ferulam_core::{iterate, CounterRng, CrossSection, OrbitStatus, PhaseStateTE, Rectangle, TorusPoint};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::Resolved;
use crate::CliError;

pub struct Context {
    pub resolved: Resolved,
    pub out: PathBuf,
}

/// Every JSON report carries the resolved config, its hash and the seed.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a Resolved,
    result: T,
}

/// SHA-256 of the resolved config serialized with sorted keys.
pub fn config_hash(cfg: &Resolved) -> Result<String, CliError> {
    let value = serde_json::to_value(cfg).map_err(|e| CliError::Numeric(e.to_string()))?;
    let bytes = serde_json::to_vec(&value).map_err(|e| CliError::Numeric(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Context {
    fn prepare(&self) -> Result<&Path, CliError> {
        fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.prepare()?.join(name))?))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        fs::write(self.prepare()?.join(name), text)?;
        Ok(())
    }

    fn write_report<T: Serialize>(&self, command: &str, result: T) -> Result<(), CliError> {
        let report = Report {
            command,
            seed: self.resolved.seed,
            config_hash: config_hash(&self.resolved)?,
            config: &self.resolved,
            result,
        };
        let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Numeric(e.to_string()))?;
        text.push('\n');
        self.write_text(&format!("{command}.json"), &text)
    }

    fn rng(&self) -> CounterRng {
        CounterRng::new(self.resolved.seed)
    }
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let spec = &ctx.resolved.forcing;
    let sim = &ctx.resolved.simulate;
    let omega = sim.validate(spec)?;
    let floor = sim.e_floor.unwrap_or(1.01 * spec.energy_threshold());
    let trace = iterate(&spec.at(&omega), PhaseStateTE::new(sim.t0, sim.e0), sim.n_max, floor)?;
    export::write_orbit_csv(ctx.create("orbit.csv")?, &trace)?;
    ctx.write_text("orbit.svg", &export::orbit_svg(&trace))?;
    let max_residual = trace.residuals.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let hits = band_hits(&trace, &sim.bands);
    ctx.write_report(
        "simulate",
        json!({
            "status": trace.status,
            "rows": trace.states.len(),
            "energy_floor": floor,
            "max_residual": max_residual,
            "band_hits": hits,
        }),
    )?;
    println!(
        "simulate: {} states, status {:?}, max residual {max_residual:.3e}, {} band hits",
        trace.states.len(),
        trace.status,
        hits.len()
    );
    if let OrbitStatus::Diverged(step) = trace.status {
        return Err(CliError::Numeric(format!("impact solver failed at step {step}")));
    }
    Ok(())
}

pub fn census(ctx: &Context) -> Result<(), CliError> {
    let spec = &ctx.resolved.forcing;
    let cfg = &ctx.resolved.census;
    cfg.validate(spec)?;
    let (omegas, rows) = simulate_census(spec, cfg)?;
    let report = build_report(spec, cfg, omegas, &rows);
    let profile = recurrence_profile_from(&rows, cfg.n_max);
    export::write_census_csv(ctx.create("census.csv")?, &report)?;
    export::write_recurrence_csv(ctx.create("recurrence.csv")?, &profile)?;
    ctx.write_text("census.svg", &export::census_svg(&report))?;
    ctx.write_report(
        "census",
        json!({
            "note": "fractions are upper bounds on the escape-candidate measure at each finite horizon",
            "report": report,
            "recurrence": profile,
        }),
    )?;
    for ef in &report.pooled {
        println!(
            "census: horizon {:>8}  escape fraction {:.6}  wilson95 [{:.6}, {:.6}]",
            ef.horizon, ef.fraction, ef.wilson95.0, ef.wilson95.1
        );
    }
    println!(
        "census: no-return mass {:.6} at {} and {:.6} at {}",
        profile.no_return_mass(),
        cfg.n_max,
        profile.no_return_mass_half(),
        cfg.n_max / 2
    );
    Ok(())
}

pub fn drift(ctx: &Context) -> Result<(), CliError> {
    let spec = &ctx.resolved.forcing;
    let d = &ctx.resolved.drift;
    d.validate(spec)?;
    let rng = ctx.rng();
    let scaling = drift_scaling(spec, &d.energies, d.n_per_energy, d.c, &rng.child(0))?;
    let c_hat = estimate_drift_constant(spec, d.calibration_samples, d.e_range, d.c, &rng.child(1))?;
    let fresh = drift_samples(spec, d.check_samples, d.e_range, d.c, &rng.child(2))?;
    let violations = fresh
        .iter()
        .filter(|r| !(r.drift <= 1.5 * c_hat * delta_modulus(spec, r.e0, d.c)))
        .count();
    export::write_drift_csv(ctx.create("drift.csv")?, &fresh)?;
    export::write_drift_scaling_csv(ctx.create("drift_scaling.csv")?, &scaling)?;
    ctx.write_report(
        "drift",
        json!({
            "slope": scaling.fit.slope,
            "intercept": scaling.fit.intercept,
            "r_squared": scaling.fit.r_squared,
            "energies": scaling.energies,
            "max_drift": scaling.max_drift,
            "c_hat": c_hat,
            "check_samples": fresh.len(),
            "violations_above_1_5_c_hat_delta": violations,
        }),
    )?;
    println!(
        "drift: slope {:.4}  R^2 {:.6}  C_hat {c_hat:.4}  violations {violations}/{}",
        scaling.fit.slope,
        scaling.fit.r_squared,
        fresh.len()
    );
    Ok(())
}

pub fn decompose(ctx: &Context) -> Result<(), CliError> {
    let spec = &ctx.resolved.forcing;
    let d = &ctx.resolved.decompose;
    d.validate(spec)?;
    let rng = ctx.rng();
    let rects: Vec<Rectangle> = if d.rectangles.is_empty() {
        (0..d.n_random as u64)
            .map(|i| Rectangle::random(&rng.child(0), i, spec.dim()))
            .collect()
    } else {
        d.rectangles
            .iter()
            .map(|r| Rectangle::new(r.clone()))
            .collect::<Result<_, _>>()?
    };
    let section = CrossSection::new(spec.nu().clone());
    let rows = check_haar_decomposition(&section, d.n, &rects, &rng.child(1))?;
    export::write_decomposition_csv(ctx.create("decompose.csv")?, &rows)?;
    let failures = rows.iter().filter(|r| !r.passes()).count();
    let per_set: Vec<_> = rows
        .iter()
        .map(|r| json!({"set_id": r.set_id, "diff": r.diff, "three_sigma": r.three_sigma, "pass": r.passes()}))
        .collect();
    ctx.write_report(
        "decompose",
        json!({
            "rectangles": rects,
            "rows": per_set,
            "outside_three_sigma": failures,
        }),
    )?;
    for r in &rows {
        println!(
            "decompose: set {:>3}  haar {:.6}  product {:.6}  diff {:.3e}  3sigma {:.3e}  {}",
            r.set_id,
            r.haar_estimate,
            r.product_estimate,
            r.diff,
            r.three_sigma,
            if r.passes() { "pass" } else { "FAIL" }
        );
    }
    Ok(())
}

pub fn counterexample(ctx: &Context) -> Result<(), CliError> {
    let ex = build_noninjectivity_example()?;
    export::write_counterexample_csv(ctx.create("counterexample.csv")?, &ex)?;
    ctx.write_report("counterexample", &ex)?;
    println!("counterexample: {}", ex.formula);
    println!("{:<16} {:>24} {:>24} {:>14}", "label", "t", "v", "max_difference");
    for r in export::counterexample_rows(&ex) {
        println!("{:<16} {:>24.16e} {:>24.16e} {:>14.3e}", r.label, r.t, r.v, r.max_difference);
    }
    Ok(())
}

pub fn validate(ctx: &Context) -> Result<(), CliError> {
    let r = &ctx.resolved;
    let spec = &r.forcing;
    spec.nu().certify_nonresonant(DEFAULT_RESONANCE_ORDER, DEFAULT_RESONANCE_TOL)?;
    r.simulate.validate(spec)?;
    r.census.validate(spec)?;
    r.drift.validate(spec)?;
    r.decompose.validate(spec)?;
    let vstar = spec.v_star_report(DEFAULT_VSTAR_GRID);
    // image energies from threshold/1000 up to the threshold, along ω = 0
    let threshold = spec.energy_threshold();
    let energies: Vec<f64> = (0..=40).map(|i| threshold * 10f64.powf(-3.0 + 3.0 * i as f64 / 40.0)).collect();
    let path = spec.at(&TorusPoint::zero(spec.dim()));
    let probe = injectivity_probe(&path, (0.0, 200.0), 200_001, &energies)?;
    let summary = json!({
        "config_hash": config_hash(r)?,
        "seed": r.seed,
        "dimension": spec.dim(),
        "bounds": [spec.lower_bound(), spec.upper_bound()],
        "derivative_bounds": spec.derivative_bounds(),
        "v_star": vstar,
        "energy_threshold": threshold,
        "injectivity_energy": probe.smallest_passing,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::Numeric(e.to_string()))?
    );
    Ok(())
}
