//! Fixed inputs shared by the criterion benchmarks in `benches/`.

use ferulam_core::torus_flow::haar_sample;
use ferulam_core::{CounterRng, ForcingSpec, TorusPoint};

/// `(ω, t0, v0)` triples with `v0 ∈ [1.5 v*, 50 v*]`, reproducible across runs.
pub fn impact_inputs(spec: &ForcingSpec, n: usize) -> Vec<(TorusPoint, f64, f64)> {
    let rng = CounterRng::new(2024);
    let omegas = haar_sample(&rng.child(0), 0, n, spec.dim());
    let u = rng.child(1).uniforms(0, 2 * n);
    omegas
        .into_iter()
        .enumerate()
        .map(|(i, w)| (w, -100.0 + 200.0 * u[2 * i], spec.v_star() * (1.5 + 48.5 * u[2 * i + 1])))
        .collect()
}
