use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{axial, FieldSpec};
use crate::Vec3;

/// Pass threshold applied to every maximum in a [`VerifyReport`].
pub const VERIFY_TOLERANCE: f64 = 1e-8;

/// Time window sampled for time-dependent fields.
const TIME_WINDOW: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub field: String,
    pub n_samples: usize,
    pub rng_seed: u64,
    /// max |div u|
    pub max_divergence: f64,
    /// max ‖(J − Jᵀ)·ω‖
    pub max_antisym_residual: f64,
    /// max ‖ω − axial(J)‖, consistency of the two vorticity routes
    pub max_vorticity_mismatch: f64,
    /// max ‖curl[(u·∇)u]‖, only when the field claims to be steady Euler
    pub max_steady_residual: Option<f64>,
    pub divergence_free: bool,
    pub steady: Option<bool>,
    pub pass: bool,
}

/// Samples `n_samples` space-time points and checks the structural
/// identities. Failures are reported, never raised.
pub fn verify_field(spec: &FieldSpec, n_samples: usize, rng_seed: u64) -> VerifyReport {
    let n_samples = n_samples.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (lo, hi) = spec.domain().sampling_box();
    let time_dependent = spec.is_time_dependent();

    let mut max_div = 0.0_f64;
    let mut max_anti = 0.0_f64;
    let mut max_vort = 0.0_f64;
    let mut max_steady = 0.0_f64;
    for _ in 0..n_samples {
        let x = Vec3::from_fn(|i, _| rng.random_range(lo[i]..hi[i]));
        let t = if time_dependent {
            rng.random_range(0.0..TIME_WINDOW)
        } else {
            0.0
        };
        let s = spec.sample(t, &x);
        max_div = max_div.max(s.div.abs());
        max_anti = max_anti.max(((s.jac - s.jac.transpose()) * s.vort).norm());
        max_vort = max_vort.max((spec.vorticity(t, &x) - axial(&s.jac)).norm());
        if spec.steady_euler() {
            max_steady = max_steady.max(spec.advection_curl(t, &x).norm());
        }
    }

    let divergence_free =
        max_div <= VERIFY_TOLERANCE && max_anti <= VERIFY_TOLERANCE && max_vort <= VERIFY_TOLERANCE;
    let steady = spec
        .steady_euler()
        .then_some(max_steady <= VERIFY_TOLERANCE);
    VerifyReport {
        field: spec.kind().name().to_string(),
        n_samples,
        rng_seed,
        max_divergence: max_div,
        max_antisym_residual: max_anti,
        max_vorticity_mismatch: max_vort,
        max_steady_residual: spec.steady_euler().then_some(max_steady),
        divergence_free,
        steady,
        pass: divergence_free && steady.unwrap_or(true),
    }
}
