//! Analytic divergence-free velocity fields.
//!
//! Every catalog kind has closed-form velocity, Jacobian, Hessian and
//! vorticity, so the structural identities the ray analysis depends on
//! (`div u = 0`, `((∇u) − (∇u)ᵀ)·ω = 0`, steadiness of Euler solutions) can
//! be checked at machine precision. Jacobians follow the convention
//! `jac[(i, j)] = ∂_j u_i`.

mod verify;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Mat3, Vec3};

pub use verify::{verify_field, VerifyReport, VERIFY_TOLERANCE};

/// Period of the torus domain in every direction.
pub const TORUS_PERIOD: f64 = 2.0 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("strain eigenvalues must sum to zero (got {0:e})")]
    StrainTrace(f64),
    #[error(
        "trig_poly mode {index}: amplitude is not orthogonal to its wavevector (k·û = {dot:e})"
    )]
    ModeNotSolenoidal { index: usize, dot: f64 },
    #[error("trig_poly mode {index}: no conjugate partner with wavevector -k, amplitude conj(û) and frequency -ν")]
    MissingConjugate { index: usize },
    #[error("trig_poly mode {index}: the k = 0 mode must be real and have zero frequency")]
    BadMeanMode { index: usize },
    #[error("steady_euler may only be set for rotation, strain, shear and abc fields")]
    SteadyNotAllowed,
    #[error("{kind} fields are not periodic and need a free-space domain")]
    NeedsFreeSpace { kind: &'static str },
    #[error("sampling box must satisfy lo < hi in every direction")]
    DegenerateBox,
    #[error("parameter `{0}` must be finite")]
    NonFinite(&'static str),
}

/// One Fourier mode `û e^{i(k·x − ν t)}` of a trigonometric polynomial field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigMode {
    pub k: [i32; 3],
    pub amp_re: [f64; 3],
    pub amp_im: [f64; 3],
    #[serde(default)]
    pub freq: f64,
}

impl TrigMode {
    fn kvec(&self) -> Vec3 {
        Vec3::new(self.k[0] as f64, self.k[1] as f64, self.k[2] as f64)
    }

    fn conjugate(&self) -> TrigMode {
        TrigMode {
            k: [-self.k[0], -self.k[1], -self.k[2]],
            amp_re: self.amp_re,
            amp_im: [-self.amp_im[0], -self.amp_im[1], -self.amp_im[2]],
            freq: -self.freq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    /// Rigid rotation `u = e₃ × x = (−x₂, x₁, 0)`.
    Rotation,
    /// Linear strain `u = (λ₁x₁, λ₂x₂, λ₃x₃)` with `Σλ = 0`.
    Strain { lambda: [f64; 3] },
    /// Parallel shear `u = (a sin x₂, 0, 0)`.
    Shear { a: f64 },
    /// Arnold–Beltrami–Childress flow.
    Abc { a: f64, b: f64, c: f64 },
    /// Real, solenoidal trigonometric polynomial; every mode is listed
    /// together with its conjugate partner.
    TrigPoly { modes: Vec<TrigMode> },
}

impl FieldKind {
    pub fn name(&self) -> &'static str {
        match self {
            FieldKind::Rotation => "rotation",
            FieldKind::Strain { .. } => "strain",
            FieldKind::Shear { .. } => "shear",
            FieldKind::Abc { .. } => "abc",
            FieldKind::TrigPoly { .. } => "trig_poly",
        }
    }

    fn is_periodic(&self) -> bool {
        matches!(
            self,
            FieldKind::Shear { .. } | FieldKind::Abc { .. } | FieldKind::TrigPoly { .. }
        )
    }

    fn is_time_dependent(&self) -> bool {
        match self {
            FieldKind::TrigPoly { modes } => modes.iter().any(|m| m.freq != 0.0),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    /// `[0, 2π)³` with periodic identification.
    Torus,
    /// All of ℝ³; `lo`/`hi` bound the region used for sampling.
    Free { lo: [f64; 3], hi: [f64; 3] },
}

impl Domain {
    pub fn free_cube(half_width: f64) -> Domain {
        Domain::Free {
            lo: [-half_width; 3],
            hi: [half_width; 3],
        }
    }

    /// Sampling box `(lo, hi)`; the torus uses its fundamental cell.
    pub fn sampling_box(&self) -> (Vec3, Vec3) {
        match self {
            Domain::Torus => (Vec3::zeros(), Vec3::repeat(TORUS_PERIOD)),
            Domain::Free { lo, hi } => (Vec3::from(*lo), Vec3::from(*hi)),
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Domain::Torus)
    }
}

/// A validated velocity field from the catalog.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSpec {
    #[serde(flatten)]
    kind: FieldKind,
    domain: Domain,
    steady_euler: bool,
}

/// Velocity and its first derivatives at one space-time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub u: Vec3,
    pub jac: Mat3,
    pub vort: Vec3,
    pub div: f64,
}

/// Axial vector of the antisymmetric part of a Jacobian, i.e. `curl u`.
pub fn axial(jac: &Mat3) -> Vec3 {
    Vec3::new(
        jac[(2, 1)] - jac[(1, 2)],
        jac[(0, 2)] - jac[(2, 0)],
        jac[(1, 0)] - jac[(0, 1)],
    )
}

impl FieldSpec {
    pub fn new(kind: FieldKind, domain: Domain, steady_euler: bool) -> Result<Self, FieldError> {
        validate_kind(&kind)?;
        if let Domain::Free { lo, hi } = &domain {
            if lo.iter().chain(hi.iter()).any(|v| !v.is_finite()) {
                return Err(FieldError::NonFinite("domain box"));
            }
            if (0..3).any(|i| lo[i] >= hi[i]) {
                return Err(FieldError::DegenerateBox);
            }
        }
        if domain.is_torus() && !kind.is_periodic() {
            return Err(FieldError::NeedsFreeSpace { kind: kind.name() });
        }
        if steady_euler && matches!(kind, FieldKind::TrigPoly { .. }) {
            return Err(FieldError::SteadyNotAllowed);
        }
        Ok(FieldSpec {
            kind,
            domain,
            steady_euler,
        })
    }

    /// Rigid rotation on a free-space box of half-width 4.
    pub fn rotation() -> Self {
        Self::new(FieldKind::Rotation, Domain::free_cube(4.0), true).expect("valid")
    }

    pub fn strain(lambda: [f64; 3]) -> Result<Self, FieldError> {
        Self::new(FieldKind::Strain { lambda }, Domain::free_cube(4.0), true)
    }

    pub fn shear(a: f64) -> Self {
        Self::new(FieldKind::Shear { a }, Domain::Torus, true).expect("valid")
    }

    pub fn abc(a: f64, b: f64, c: f64) -> Self {
        Self::new(FieldKind::Abc { a, b, c }, Domain::Torus, true).expect("valid")
    }

    pub fn trig_poly(modes: Vec<TrigMode>) -> Result<Self, FieldError> {
        Self::new(FieldKind::TrigPoly { modes }, Domain::Torus, false)
    }

    /// Random solenoidal trigonometric polynomial with `n_pairs` conjugate
    /// mode pairs, wavevectors in `[-kmax, kmax]³ \ {0}` and frequencies
    /// uniform in `[-1, 1]`, scaled so the spatial rms of `|u|` equals
    /// `rms_speed`.
    pub fn random_trig_poly(rng_seed: u64, n_pairs: usize, kmax: i32, rms_speed: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut modes: Vec<TrigMode> = Vec::with_capacity(2 * n_pairs);
        while modes.len() < 2 * n_pairs {
            let k = [
                rng.random_range(-kmax..=kmax),
                rng.random_range(-kmax..=kmax),
                rng.random_range(-kmax..=kmax),
            ];
            if k == [0, 0, 0] || modes.iter().any(|m| m.k == k) {
                continue;
            }
            let kv = Vec3::new(k[0] as f64, k[1] as f64, k[2] as f64);
            let khat = kv / kv.norm();
            let mut part = || {
                let g = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                g - khat * khat.dot(&g)
            };
            let re = part();
            let im = part();
            let mode = TrigMode {
                k,
                amp_re: re.into(),
                amp_im: im.into(),
                freq: rng.random_range(-1.0..1.0),
            };
            modes.push(mode.conjugate());
            modes.push(mode);
        }
        // mean of |u|² over the torus is Σ|û_k|² over all listed modes
        let energy: f64 = modes
            .iter()
            .map(|m| m.amp_re.iter().chain(&m.amp_im).map(|c| c * c).sum::<f64>())
            .sum();
        let scale = if energy > 0.0 {
            rms_speed / energy.sqrt()
        } else {
            0.0
        };
        for m in &mut modes {
            m.amp_re = m.amp_re.map(|c| c * scale);
            m.amp_im = m.amp_im.map(|c| c * scale);
        }
        Self::trig_poly(modes).expect("generated modes are valid by construction")
    }

    /// Returns a copy with the `steady_euler` flag overwritten without any
    /// validation. Only meant for exercising [`verify_field`] on fields that
    /// falsely claim to be steady Euler solutions.
    pub fn with_steady_flag_unchecked(mut self, steady: bool) -> Self {
        self.steady_euler = steady;
        self
    }

    /// Replaces the domain (for free-space kinds, the sampling box).
    pub fn with_domain(self, domain: Domain) -> Result<Self, FieldError> {
        Self::new(self.kind, domain, self.steady_euler)
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn steady_euler(&self) -> bool {
        self.steady_euler
    }

    pub fn is_time_dependent(&self) -> bool {
        self.kind.is_time_dependent()
    }

    pub fn velocity(&self, t: f64, x: &Vec3) -> Vec3 {
        match &self.kind {
            FieldKind::Rotation => Vec3::new(-x[1], x[0], 0.0),
            FieldKind::Strain { lambda } => {
                Vec3::new(lambda[0] * x[0], lambda[1] * x[1], lambda[2] * x[2])
            }
            FieldKind::Shear { a } => Vec3::new(a * x[1].sin(), 0.0, 0.0),
            FieldKind::Abc { a, b, c } => {
                let (s1, c1) = x[0].sin_cos();
                let (s2, c2) = x[1].sin_cos();
                let (s3, c3) = x[2].sin_cos();
                Vec3::new(a * s3 + c * c2, b * s1 + a * c3, c * s2 + b * c1)
            }
            FieldKind::TrigPoly { modes } => {
                let mut u = Vec3::zeros();
                for m in modes {
                    let (s, c) = (m.kvec().dot(x) - m.freq * t).sin_cos();
                    for i in 0..3 {
                        u[i] += m.amp_re[i] * c - m.amp_im[i] * s;
                    }
                }
                u
            }
        }
    }

    pub fn jacobian(&self, t: f64, x: &Vec3) -> Mat3 {
        self.sample(t, x).jac
    }

    pub fn vorticity(&self, t: f64, x: &Vec3) -> Vec3 {
        match &self.kind {
            FieldKind::Rotation => Vec3::new(0.0, 0.0, 2.0),
            FieldKind::Strain { .. } => Vec3::zeros(),
            _ => axial(&self.jacobian(t, x)),
        }
    }

    /// Velocity, Jacobian, vorticity and divergence in one evaluation.
    pub fn sample(&self, t: f64, x: &Vec3) -> FieldSample {
        let (u, jac) = match &self.kind {
            FieldKind::Rotation => (
                Vec3::new(-x[1], x[0], 0.0),
                Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            ),
            FieldKind::Strain { lambda } => (
                Vec3::new(lambda[0] * x[0], lambda[1] * x[1], lambda[2] * x[2]),
                Mat3::from_diagonal(&Vec3::from(*lambda)),
            ),
            FieldKind::Shear { a } => {
                let (s2, c2) = x[1].sin_cos();
                let mut jac = Mat3::zeros();
                jac[(0, 1)] = a * c2;
                (Vec3::new(a * s2, 0.0, 0.0), jac)
            }
            FieldKind::Abc { a, b, c } => {
                let (s1, c1) = x[0].sin_cos();
                let (s2, c2) = x[1].sin_cos();
                let (s3, c3) = x[2].sin_cos();
                let u = Vec3::new(a * s3 + c * c2, b * s1 + a * c3, c * s2 + b * c1);
                let jac = Mat3::new(
                    0.0,
                    -c * s2,
                    a * c3,
                    b * c1,
                    0.0,
                    -a * s3,
                    -b * s1,
                    c * c2,
                    0.0,
                );
                (u, jac)
            }
            FieldKind::TrigPoly { modes } => {
                let mut u = Vec3::zeros();
                let mut jac = Mat3::zeros();
                for m in modes {
                    let kv = m.kvec();
                    let (s, c) = (kv.dot(x) - m.freq * t).sin_cos();
                    for i in 0..3 {
                        u[i] += m.amp_re[i] * c - m.amp_im[i] * s;
                        // Re(i k_j û_i e^{iθ})
                        let d = -(m.amp_re[i] * s + m.amp_im[i] * c);
                        for j in 0..3 {
                            jac[(i, j)] += kv[j] * d;
                        }
                    }
                }
                (u, jac)
            }
        };
        FieldSample {
            u,
            jac,
            vort: axial(&jac),
            div: jac.trace(),
        }
    }

    /// Second derivatives: `hess[i][(j, k)] = ∂_j ∂_k u_i`.
    pub fn hessian(&self, t: f64, x: &Vec3) -> [Mat3; 3] {
        let mut h = [Mat3::zeros(); 3];
        match &self.kind {
            FieldKind::Rotation | FieldKind::Strain { .. } => {}
            FieldKind::Shear { a } => {
                h[0][(1, 1)] = -a * x[1].sin();
            }
            FieldKind::Abc { a, b, c } => {
                let (s1, c1) = x[0].sin_cos();
                let (s2, c2) = x[1].sin_cos();
                let (s3, c3) = x[2].sin_cos();
                h[0][(1, 1)] = -c * c2;
                h[0][(2, 2)] = -a * s3;
                h[1][(0, 0)] = -b * s1;
                h[1][(2, 2)] = -a * c3;
                h[2][(0, 0)] = -b * c1;
                h[2][(1, 1)] = -c * s2;
            }
            FieldKind::TrigPoly { modes } => {
                for m in modes {
                    let kv = m.kvec();
                    let (s, c) = (kv.dot(x) - m.freq * t).sin_cos();
                    for (i, hi) in h.iter_mut().enumerate() {
                        let val = -(m.amp_re[i] * c - m.amp_im[i] * s);
                        *hi += kv * kv.transpose() * val;
                    }
                }
            }
        }
        h
    }

    /// `curl[(u·∇)u]`; vanishes exactly when a pressure balancing the
    /// advection term exists, i.e. for steady Euler solutions.
    pub fn advection_curl(&self, t: f64, x: &Vec3) -> Vec3 {
        let s = self.sample(t, x);
        let hess = self.hessian(t, x);
        // g[(i, k)] = ∂_k [(u·∇)u]_i = Σ_j ∂_k J_ij u_j + (J J)_ik
        let mut g = s.jac * s.jac;
        for i in 0..3 {
            for k in 0..3 {
                for j in 0..3 {
                    g[(i, k)] += hess[i][(j, k)] * s.u[j];
                }
            }
        }
        axial(&g)
    }
}

fn validate_kind(kind: &FieldKind) -> Result<(), FieldError> {
    match kind {
        FieldKind::Rotation => Ok(()),
        FieldKind::Strain { lambda } => {
            if lambda.iter().any(|l| !l.is_finite()) {
                return Err(FieldError::NonFinite("lambda"));
            }
            let trace: f64 = lambda.iter().sum();
            let scale = lambda.iter().map(|l| l.abs()).fold(1.0, f64::max);
            if trace.abs() > 1e-12 * scale {
                return Err(FieldError::StrainTrace(trace));
            }
            Ok(())
        }
        FieldKind::Shear { a } => {
            if !a.is_finite() {
                return Err(FieldError::NonFinite("a"));
            }
            Ok(())
        }
        FieldKind::Abc { a, b, c } => {
            if ![a, b, c].iter().all(|v| v.is_finite()) {
                return Err(FieldError::NonFinite("abc amplitudes"));
            }
            Ok(())
        }
        FieldKind::TrigPoly { modes } => validate_modes(modes),
    }
}

fn validate_modes(modes: &[TrigMode]) -> Result<(), FieldError> {
    for (index, m) in modes.iter().enumerate() {
        let finite = m
            .amp_re
            .iter()
            .chain(m.amp_im.iter())
            .chain(std::iter::once(&m.freq))
            .all(|v| v.is_finite());
        if !finite {
            return Err(FieldError::NonFinite("trig_poly mode"));
        }
        let kv = m.kvec();
        let re = Vec3::from(m.amp_re);
        let im = Vec3::from(m.amp_im);
        let scale = kv.norm() * (re.norm() + im.norm()).max(1e-300);
        let dot = kv.dot(&re).abs().max(kv.dot(&im).abs());
        if dot > 1e-12 * scale {
            return Err(FieldError::ModeNotSolenoidal { index, dot });
        }
        if m.k == [0, 0, 0] {
            if m.amp_im.iter().any(|v| *v != 0.0) || m.freq != 0.0 {
                return Err(FieldError::BadMeanMode { index });
            }
            continue;
        }
        let partner = m.conjugate();
        let matched = modes.iter().any(|o| {
            o.k == partner.k
                && o.freq == partner.freq
                && o.amp_re == partner.amp_re
                && o.amp_im == partner.amp_im
        });
        if !matched {
            return Err(FieldError::MissingConjugate { index });
        }
    }
    Ok(())
}
