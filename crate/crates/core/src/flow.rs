//! Ray integration along a velocity field.
//!
//! The state carried by the integrator is `(γ, ξ, b, b̃, ω)`, fifteen reals.
//! `b̃` is a second amplitude transported by the same linear equation as `b`;
//! it is zero when the seed does not supply one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::FieldSpec;
use crate::ode::{self, DenseSegment};
pub use crate::ode::{IntegratorConfig, Method, OdeError};
use crate::Vec3;

/// Below this norm the amplitude equation is treated as singular.
pub const XI_UNDERFLOW: f64 = 1e-300;

const DIM: usize = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("|ξ| underflowed below 1e-300 at t = {t}; the amplitude equation is singular")]
    XiUnderflow { t: f64 },
    #[error("invalid seed: {0}")]
    InvalidSeed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaySeed {
    pub x0: Vec3,
    pub xi0: Vec3,
    pub b0: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub btilde0: Option<Vec3>,
    /// Initial vorticity; the field's `curl u(0, x0)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0: Option<Vec3>,
}

impl RaySeed {
    pub fn new(x0: Vec3, xi0: Vec3, b0: Vec3) -> Self {
        RaySeed {
            x0,
            xi0,
            b0,
            btilde0: None,
            omega0: None,
        }
    }

    /// Seed with `b̃0 = ξ0 × b0`, so that `(b0, b̃0, ξ0)` is a frame.
    pub fn framed(x0: Vec3, xi0: Vec3, b0: Vec3) -> Self {
        RaySeed::new(x0, xi0, b0).with_btilde(xi0.cross(&b0))
    }

    pub fn with_btilde(mut self, btilde0: Vec3) -> Self {
        self.btilde0 = Some(btilde0);
        self
    }

    pub fn with_omega(mut self, omega0: Vec3) -> Self {
        self.omega0 = Some(omega0);
        self
    }

    pub fn with_xi(mut self, xi0: Vec3) -> Self {
        self.xi0 = xi0;
        self
    }

    /// Checks the admissibility conditions. `unit` additionally requires the
    /// normalization used for amplitude-growth seeds.
    pub fn validate(&self, unit: bool) -> Result<(), FlowError> {
        let vecs = [
            Some(self.x0),
            Some(self.xi0),
            Some(self.b0),
            self.btilde0,
            self.omega0,
        ];
        if vecs
            .iter()
            .flatten()
            .any(|v| v.iter().any(|c| !c.is_finite()))
        {
            return Err(FlowError::InvalidSeed("non-finite component".into()));
        }
        let nxi = self.xi0.norm();
        if nxi == 0.0 {
            return Err(FlowError::InvalidSeed("xi0 must be nonzero".into()));
        }
        let tol = 1e-9;
        if self.b0.dot(&self.xi0).abs() > tol * nxi * self.b0.norm().max(1.0) {
            return Err(FlowError::InvalidSeed(
                "b0 must be orthogonal to xi0".into(),
            ));
        }
        if let Some(bt) = self.btilde0 {
            if bt.dot(&self.xi0).abs() > tol * nxi * bt.norm().max(1.0) {
                return Err(FlowError::InvalidSeed(
                    "btilde0 must be orthogonal to xi0".into(),
                ));
            }
            if self.b0.cross(&bt).dot(&self.xi0) == 0.0 {
                return Err(FlowError::InvalidSeed(
                    "det(b0, btilde0, xi0) must be nonzero".into(),
                ));
            }
        }
        if unit && ((nxi - 1.0).abs() > tol || (self.b0.norm() - 1.0).abs() > tol) {
            return Err(FlowError::InvalidSeed(
                "xi0 and b0 must be unit vectors".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayState {
    pub t: f64,
    pub gamma: Vec3,
    pub xi: Vec3,
    pub b: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub btilde: Option<Vec3>,
    pub omega: Vec3,
}

impl RayState {
    fn from_raw(t: f64, y: &[f64; DIM], has_btilde: bool) -> Self {
        let v = |o: usize| Vec3::new(y[o], y[o + 1], y[o + 2]);
        RayState {
            t,
            gamma: v(0),
            xi: v(3),
            b: v(6),
            btilde: has_btilde.then(|| v(9)),
            omega: v(12),
        }
    }

    /// `(b × b̃)·ξ` when `b̃` is carried.
    pub fn det(&self) -> Option<f64> {
        self.btilde.map(|bt| self.b.cross(&bt).dot(&self.xi))
    }
}

/// States at every accepted step of one ray integration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<RayState>,
    pub n_rejected: usize,
    has_btilde: bool,
    dense: Option<Vec<DenseSegment<DIM>>>,
}

impl Trajectory {
    pub fn last(&self) -> &RayState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn first(&self) -> &RayState {
        &self.states[0]
    }

    pub fn has_btilde(&self) -> bool {
        self.has_btilde
    }

    /// State recorded at exactly time `t` (stops are always recorded).
    pub fn state_at(&self, t: f64) -> Option<&RayState> {
        self.states.iter().find(|s| s.t == t)
    }

    /// Dense-output interpolation; needs `dense_output` in the config.
    pub fn interpolate(&self, t: f64) -> Option<RayState> {
        let times: Vec<f64> = self.states.iter().map(|s| s.t).collect();
        let y = ode::dense_eval(&times, self.dense.as_ref()?, t)?;
        Some(RayState::from_raw(t, &y, self.has_btilde))
    }
}

fn ray_rhs(spec: &FieldSpec, t: f64, y: &[f64; DIM]) -> [f64; DIM] {
    let x = Vec3::new(y[0], y[1], y[2]);
    let xi = Vec3::new(y[3], y[4], y[5]);
    let s = spec.sample(t, &x);
    let j = &s.jac;
    let xi2 = xi.norm_squared();
    let xi_dot = -j.transpose() * xi;
    let amp = |o: usize| {
        let b = Vec3::new(y[o], y[o + 1], y[o + 2]);
        let jb = j * b;
        -jb + xi * (2.0 * xi.dot(&jb) / xi2)
    };
    let b_dot = amp(6);
    let bt_dot = amp(9);
    let om_dot = j * Vec3::new(y[12], y[13], y[14]);
    let mut out = [0.0; DIM];
    for i in 0..3 {
        out[i] = s.u[i];
        out[3 + i] = xi_dot[i];
        out[6 + i] = b_dot[i];
        out[9 + i] = bt_dot[i];
        out[12 + i] = om_dot[i];
    }
    out
}

fn initial_raw(spec: &FieldSpec, seed: &RaySeed) -> [f64; DIM] {
    let omega0 = seed.omega0.unwrap_or_else(|| spec.vorticity(0.0, &seed.x0));
    let bt = seed.btilde0.unwrap_or_else(Vec3::zeros);
    let mut y = [0.0; DIM];
    for i in 0..3 {
        y[i] = seed.x0[i];
        y[3 + i] = seed.xi0[i];
        y[6 + i] = seed.b0[i];
        y[9 + i] = bt[i];
        y[12 + i] = omega0[i];
    }
    y
}

/// Integrates the ray system from `t = 0` to `t = T` (backwards when `T < 0`).
pub fn integrate_ray(
    spec: &FieldSpec,
    seed: &RaySeed,
    t_final: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, FlowError> {
    integrate_ray_through(spec, seed, &[t_final], cfg)
}

/// Like [`integrate_ray`] but also lands exactly on each of `stops`
/// (monotone; the last entry is the final time).
pub fn integrate_ray_through(
    spec: &FieldSpec,
    seed: &RaySeed,
    stops: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, FlowError> {
    seed.validate(false)?;
    let y0 = initial_raw(spec, seed);
    let sol = ode::solve::<DIM, _, _, FlowError>(
        |t, y| ray_rhs(spec, t, y),
        0.0,
        y0,
        stops,
        cfg,
        |t, y| {
            let xi2 = y[3] * y[3] + y[4] * y[4] + y[5] * y[5];
            if xi2.sqrt() < XI_UNDERFLOW {
                Err(FlowError::XiUnderflow { t })
            } else {
                Ok(())
            }
        },
    )?;
    let has_btilde = seed.btilde0.is_some();
    let states = sol
        .t
        .iter()
        .zip(&sol.y)
        .map(|(&t, y)| RayState::from_raw(t, y, has_btilde))
        .collect();
    Ok(Trajectory {
        states,
        n_rejected: sol.n_rejected,
        has_btilde,
        dense: sol.dense,
    })
}

/// Trajectory map `x ↦ γ_{t}(x)` started at time `t0`.
pub fn flow_map(
    spec: &FieldSpec,
    x: &Vec3,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec3, FlowError> {
    let sol = ode::solve::<3, _, _, FlowError>(
        |t, y| {
            let u = spec.velocity(t, &Vec3::from(*y));
            [u[0], u[1], u[2]]
        },
        t0,
        [x[0], x[1], x[2]],
        &[t1],
        &IntegratorConfig {
            dense_output: false,
            ..*cfg
        },
        |_, _| Ok(()),
    )?;
    Ok(Vec3::from(*sol.last().1))
}

/// `γ_t⁻¹(x)`: integrates the original field backwards from `(t, x)` to 0.
pub fn inverse_flow(
    spec: &FieldSpec,
    x: &Vec3,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec3, FlowError> {
    flow_map(spec, x, t, 0.0, cfg)
}

/// Drift of one conserved quantity over a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub initial: f64,
    pub max_abs: f64,
    /// `max_abs` divided by the product of the initial factor norms, or
    /// equal to `max_abs` when that product vanishes.
    pub max_rel: f64,
}

impl Drift {
    fn track(values: impl Iterator<Item = f64>, scale: f64) -> Drift {
        let mut initial = None;
        let mut max_abs: f64 = 0.0;
        for v in values {
            let v0 = *initial.get_or_insert(v);
            let d = (v - v0).abs();
            // propagate NaN instead of silently ignoring it
            max_abs = if d.is_nan() { f64::NAN } else { max_abs.max(d) };
        }
        let max_rel = if scale > 0.0 {
            max_abs / scale
        } else {
            max_abs
        };
        Drift {
            initial: initial.unwrap_or(0.0),
            max_abs,
            max_rel,
        }
    }

    pub fn worst(&self) -> f64 {
        self.max_rel
    }
}

/// Conserved quantities `ω·ξ`, `b·ξ`, `b̃·ξ` and `(b × b̃)·ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantLedger {
    pub n_states: usize,
    pub omega_xi: Drift,
    pub b_xi: Drift,
    pub btilde_xi: Option<Drift>,
    pub det: Option<Drift>,
}

impl InvariantLedger {
    /// Largest relative drift over the quantities present.
    pub fn max_rel(&self) -> f64 {
        [
            Some(self.omega_xi),
            Some(self.b_xi),
            self.btilde_xi,
            self.det,
        ]
        .iter()
        .flatten()
        .map(Drift::worst)
        .fold(0.0, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) })
    }
}

pub fn monitor_invariants(traj: &Trajectory) -> InvariantLedger {
    let s0 = traj.first();
    let xi0 = s0.xi.norm();
    let st = &traj.states;
    let omega_xi = Drift::track(st.iter().map(|s| s.omega.dot(&s.xi)), s0.omega.norm() * xi0);
    let b_xi = Drift::track(st.iter().map(|s| s.b.dot(&s.xi)), s0.b.norm() * xi0);
    let (btilde_xi, det) = match s0.btilde {
        Some(bt0) if traj.has_btilde => (
            Some(Drift::track(
                st.iter().map(|s| s.btilde.unwrap().dot(&s.xi)),
                bt0.norm() * xi0,
            )),
            Some(Drift::track(
                st.iter().map(|s| s.det().unwrap()),
                s0.b.norm() * bt0.norm() * xi0,
            )),
        ),
        _ => (None, None),
    };
    InvariantLedger {
        n_states: st.len(),
        omega_xi,
        b_xi,
        btilde_xi,
        det,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    pub c: f64,
    pub n_compared: usize,
    /// max over common times of `|b_c(t) − b(t)|`
    pub max_b_deviation: f64,
    /// max over common times of `|ξ_c(t) − c ξ(t)| / |c ξ(t)|`
    pub max_xi_rel_deviation: f64,
}

/// Number of common comparison times used by [`scale_xi_check`].
pub const SCALE_CHECK_POINTS: usize = 100;

/// Integrates `seed` and the seed with `ξ0 → c ξ0`, comparing the two on a
/// uniform grid of common times.
pub fn scale_xi_check(
    spec: &FieldSpec,
    seed: &RaySeed,
    c: f64,
    t_final: f64,
    cfg: &IntegratorConfig,
) -> Result<ScaleReport, FlowError> {
    if c == 0.0 || !c.is_finite() {
        return Err(FlowError::InvalidSeed(
            "scale factor must be finite and nonzero".into(),
        ));
    }
    let stops: Vec<f64> = (1..=SCALE_CHECK_POINTS)
        .map(|k| t_final * k as f64 / SCALE_CHECK_POINTS as f64)
        .collect();
    let a = integrate_ray_through(spec, seed, &stops, cfg)?;
    let scaled = seed.with_xi(seed.xi0 * c);
    let b = integrate_ray_through(spec, &scaled, &stops, cfg)?;
    let mut max_b: f64 = 0.0;
    let mut max_xi: f64 = 0.0;
    let mut n = 0;
    for t in std::iter::once(0.0).chain(stops.iter().copied()) {
        let (Some(sa), Some(sb)) = (a.state_at(t), b.state_at(t)) else {
            continue;
        };
        n += 1;
        max_b = max_b.max((sb.b - sa.b).norm());
        let target = sa.xi * c;
        max_xi = max_xi.max((sb.xi - target).norm() / target.norm());
    }
    Ok(ScaleReport {
        c,
        n_compared: n,
        max_b_deviation: max_b,
        max_xi_rel_deviation: max_xi,
    })
}
