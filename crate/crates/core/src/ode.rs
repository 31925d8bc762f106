//! Explicit Runge–Kutta integrators on fixed-size real states.
//!
//! Two methods are provided: classical fixed-step RK4 and the Dormand–Prince
//! 5(4) pair with Hairer's step-size control and 4th-order continuous
//! extension. Both integrate towards a list of *stops*: the step size is
//! clipped so every stop is hit exactly, which lets callers sample a
//! trajectory on a prescribed time grid without interpolation error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size collapsed to {h:e} at t = {t}")]
    StepCollapse { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("exceeded {0} steps")]
    TooManySteps(usize),
    #[error("stop times must be monotone in the integration direction")]
    BadStops,
    #[error("{0}")]
    Rejected(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Classical 4th-order Runge–Kutta with equal steps between stops.
    Rk4,
    /// Dormand–Prince embedded 5(4) pair with error control.
    Dopri5,
}

/// Integrator settings; `max_step`/`initial_step` of `None` mean "derive
/// from the span" (`|T|/100`) and "automatic guess".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub max_step: Option<f64>,
    pub initial_step: Option<f64>,
    pub dense_output: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Dopri5,
            rtol: 1e-10,
            atol: 1e-10,
            max_step: None,
            initial_step: None,
            dense_output: false,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerance(rtol: f64, atol: f64) -> Self {
        IntegratorConfig {
            rtol,
            atol,
            ..Default::default()
        }
    }

    pub fn rk4(step: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk4,
            max_step: Some(step),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), OdeError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.rtol) || !positive(self.atol) {
            return Err(OdeError::Rejected("rtol and atol must be positive".into()));
        }
        if self.max_step.is_some_and(|h| !positive(h)) {
            return Err(OdeError::Rejected("max_step must be positive".into()));
        }
        if self.initial_step.is_some_and(|h| !positive(h)) {
            return Err(OdeError::Rejected("initial_step must be positive".into()));
        }
        Ok(())
    }

    fn max_step_for(&self, span: f64) -> f64 {
        self.max_step
            .unwrap_or(span.abs() / 100.0)
            .max(f64::MIN_POSITIVE)
    }
}

/// Continuous extension of one accepted step.
#[derive(Debug, Clone)]
pub enum DenseSegment<const N: usize> {
    /// Dormand–Prince interpolant coefficients.
    Dopri { t0: f64, h: f64, r: [[f64; N]; 5] },
    /// Cubic Hermite interpolant from endpoint values and slopes.
    Hermite {
        t0: f64,
        h: f64,
        y0: [f64; N],
        y1: [f64; N],
        f0: [f64; N],
        f1: [f64; N],
    },
}

impl<const N: usize> DenseSegment<N> {
    pub fn eval(&self, t: f64) -> [f64; N] {
        match self {
            DenseSegment::Dopri { t0, h, r } => {
                let s = (t - t0) / h;
                let s1 = 1.0 - s;
                std::array::from_fn(|i| {
                    r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i])))
                })
            }
            DenseSegment::Hermite {
                t0,
                h,
                y0,
                y1,
                f0,
                f1,
            } => {
                let s = (t - t0) / h;
                let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
                let h10 = s * (1.0 - s) * (1.0 - s);
                let h01 = s * s * (3.0 - 2.0 * s);
                let h11 = s * s * (s - 1.0);
                std::array::from_fn(|i| {
                    h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i]
                })
            }
        }
    }
}

/// Accepted steps of one integration. `t[0]`/`y[0]` is the initial state,
/// `dense[i]` (when kept) spans `t[i]..t[i+1]`.
#[derive(Debug, Clone)]
pub struct Solution<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub dense: Option<Vec<DenseSegment<N>>>,
    pub n_rejected: usize,
}

impl<const N: usize> Solution<N> {
    pub fn last(&self) -> (f64, &[f64; N]) {
        let i = self.t.len() - 1;
        (self.t[i], &self.y[i])
    }

    /// Interpolated state; `None` outside the span or without dense output.
    pub fn at(&self, t: f64) -> Option<[f64; N]> {
        dense_eval(&self.t, self.dense.as_ref()?, t)
    }
}

/// Evaluates piecewise dense output; `times[i]..times[i+1]` is covered by
/// `dense[i]`.
pub fn dense_eval<const N: usize>(
    times: &[f64],
    dense: &[DenseSegment<N>],
    t: f64,
) -> Option<[f64; N]> {
    let (t0, t1) = (*times.first()?, *times.last()?);
    let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
    if !(lo..=hi).contains(&t) || dense.is_empty() {
        return None;
    }
    let forward = t1 >= t0;
    let idx = times[1..]
        .partition_point(|&ti| if forward { ti < t } else { ti > t })
        .min(dense.len() - 1);
    Some(dense[idx].eval(t))
}

/// `n` equal classical RK4 steps from `t0` to `t1`. With `n` fixed the
/// result is a smooth function of `y0`, `t0` and `t1`.
pub fn rk4_fixed<const N: usize, F>(rhs: F, t0: f64, t1: f64, y0: [f64; N], n: usize) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let n = n.max(1);
    let h = (t1 - t0) / n as f64;
    let mut y = y0;
    for i in 0..n {
        let t = t0 + i as f64 * h;
        y = rk4_step(&rhs, t, &y, h).0;
    }
    y
}

#[inline]
fn rk4_step<const N: usize, F>(rhs: &F, t: f64, y: &[f64; N], h: f64) -> ([f64; N], [f64; N])
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let k1 = rhs(t, y);
    let k2 = rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &[(1.0, &k1)]));
    let k3 = rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &[(1.0, &k2)]));
    let k4 = rhs(t + h, &axpy(y, h, &[(1.0, &k3)]));
    (
        axpy(
            y,
            h / 6.0,
            &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)],
        ),
        k1,
    )
}

const MAX_STEPS: usize = 5_000_000;

/// Integrates `y' = rhs(t, y)` from `(t0, y0)` through every entry of `stops`
/// (monotone in the integration direction; the last one is the final time).
/// `on_step` sees every accepted state and may abort the run.
pub fn solve<const N: usize, F, G, E>(
    rhs: F,
    t0: f64,
    y0: [f64; N],
    stops: &[f64],
    cfg: &IntegratorConfig,
    mut on_step: G,
) -> Result<Solution<N>, E>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    G: FnMut(f64, &[f64; N]) -> Result<(), E>,
    E: From<OdeError>,
{
    cfg.validate()?;
    let tend = *stops.last().unwrap_or(&t0);
    let dir = if tend >= t0 { 1.0 } else { -1.0 };
    let mut prev = t0;
    for &s in stops {
        if (s - prev) * dir < 0.0 || !s.is_finite() {
            return Err(OdeError::BadStops.into());
        }
        prev = s;
    }
    let mut sol = Solution {
        t: vec![t0],
        y: vec![y0],
        dense: cfg.dense_output.then(Vec::new),
        n_rejected: 0,
    };
    on_step(t0, &y0)?;
    if tend == t0 {
        return Ok(sol);
    }
    match cfg.method {
        Method::Rk4 => rk4_run(&rhs, t0, y0, stops, cfg, &mut sol, &mut on_step)?,
        Method::Dopri5 => dopri_run(&rhs, t0, y0, stops, dir, cfg, &mut sol, &mut on_step)?,
    }
    Ok(sol)
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        y[i] + h * acc
    })
}

fn finite<const N: usize>(y: &[f64; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

fn rk4_run<const N: usize, F, G, E>(
    rhs: &F,
    t0: f64,
    y0: [f64; N],
    stops: &[f64],
    cfg: &IntegratorConfig,
    sol: &mut Solution<N>,
    on_step: &mut G,
) -> Result<(), E>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    G: FnMut(f64, &[f64; N]) -> Result<(), E>,
    E: From<OdeError>,
{
    let hmax = cfg.max_step_for(stops.last().unwrap() - t0);
    let (mut t, mut y) = (t0, y0);
    let mut total = 0usize;
    for &stop in stops {
        let span = stop - t;
        if span == 0.0 {
            continue;
        }
        let n = (span.abs() / hmax).ceil().max(1.0) as usize;
        total += n;
        if total > MAX_STEPS {
            return Err(OdeError::TooManySteps(MAX_STEPS).into());
        }
        let h = span / n as f64;
        let seg_start = t;
        for i in 0..n {
            let (ynew, k1) = rk4_step(rhs, t, &y, h);
            // land exactly on the stop, avoid accumulated rounding in t
            let tnew = if i + 1 == n {
                stop
            } else {
                seg_start + (i + 1) as f64 * h
            };
            if !finite(&ynew) {
                return Err(OdeError::NonFinite { t: tnew }.into());
            }
            if let Some(d) = sol.dense.as_mut() {
                d.push(DenseSegment::Hermite {
                    t0: t,
                    h: tnew - t,
                    y0: y,
                    y1: ynew,
                    f0: k1,
                    f1: rhs(tnew, &ynew),
                });
            }
            t = tnew;
            y = ynew;
            sol.t.push(t);
            sol.y.push(y);
            on_step(t, &y)?;
        }
    }
    Ok(())
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn err_norm<const N: usize>(
    y: &[f64; N],
    ynew: &[f64; N],
    err: &[f64; N],
    cfg: &IntegratorConfig,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = cfg.atol + cfg.rtol * y[i].abs().max(ynew[i].abs());
        acc += (err[i] / sc).powi(2);
    }
    (acc / N as f64).sqrt()
}

/// Hairer's starting step heuristic.
fn initial_step<const N: usize, F>(
    rhs: &F,
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    dir: f64,
    hmax: f64,
    cfg: &IntegratorConfig,
) -> f64
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let scaled = |v: &[f64; N]| {
        let mut acc = 0.0;
        for i in 0..N {
            let sc = cfg.atol + cfg.rtol * y0[i].abs();
            acc += (v[i] / sc).powi(2);
        }
        (acc / N as f64).sqrt()
    };
    let d0 = scaled(y0);
    let d1 = scaled(f0);
    let mut h0 = if d0 < 1e-10 || d1 < 1e-10 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(hmax);
    let y1 = axpy(y0, dir * h0, &[(1.0, f0)]);
    let f1 = rhs(t0 + dir * h0, &y1);
    let diff: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = scaled(&diff) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(hmax)
}

#[allow(clippy::too_many_arguments)]
fn dopri_run<const N: usize, F, G, E>(
    rhs: &F,
    t0: f64,
    y0: [f64; N],
    stops: &[f64],
    dir: f64,
    cfg: &IntegratorConfig,
    sol: &mut Solution<N>,
    on_step: &mut G,
) -> Result<(), E>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    G: FnMut(f64, &[f64; N]) -> Result<(), E>,
    E: From<OdeError>,
{
    let tend = *stops.last().unwrap();
    let span = (tend - t0).abs();
    let hmax = cfg.max_step_for(tend - t0);
    let (mut t, mut y) = (t0, y0);
    let mut k1 = rhs(t, &y);
    let mut h = match cfg.initial_step {
        Some(h) => h.min(hmax),
        None => initial_step(rhs, t, &y, &k1, dir, hmax, cfg),
    };
    let mut stop_idx = stops
        .iter()
        .position(|&s| (s - t) * dir > 0.0)
        .unwrap_or(stops.len());
    let mut last_rejected = false;
    let mut n_steps = 0usize;

    while stop_idx < stops.len() {
        let target = stops[stop_idx];
        let remaining = (target - t).abs();
        let mut hit = false;
        let mut hs = h.min(hmax);
        // avoid a sliver step right before a stop
        if hs >= remaining || remaining - hs < 1e-12 * span {
            hs = remaining;
            hit = true;
        }
        if hs < f64::EPSILON * span.max(t.abs()) {
            return Err(OdeError::StepCollapse { t, h: hs }.into());
        }
        n_steps += 1;
        if n_steps > MAX_STEPS {
            return Err(OdeError::TooManySteps(MAX_STEPS).into());
        }
        let hd = dir * hs;
        let k2 = rhs(t + C2 * hd, &axpy(&y, hd, &[(A21, &k1)]));
        let k3 = rhs(t + C3 * hd, &axpy(&y, hd, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(
            t + C4 * hd,
            &axpy(&y, hd, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = rhs(
            t + C5 * hd,
            &axpy(&y, hd, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = rhs(
            t + hd,
            &axpy(
                &y,
                hd,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let ynew = axpy(
            &y,
            hd,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let tnew = if hit { target } else { t + hd };
        let k7 = rhs(tnew, &ynew);
        let errv: [f64; N] = std::array::from_fn(|i| {
            hd * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
        });
        let err = if finite(&ynew) && finite(&k7) {
            err_norm(&y, &ynew, &errv, cfg)
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            if let Some(d) = sol.dense.as_mut() {
                let r1: [f64; N] = std::array::from_fn(|i| ynew[i] - y[i]);
                let r2: [f64; N] = std::array::from_fn(|i| hd * k1[i] - r1[i]);
                let r3: [f64; N] = std::array::from_fn(|i| r1[i] - hd * k7[i] - r2[i]);
                let r4: [f64; N] = std::array::from_fn(|i| {
                    hd * (D1 * k1[i]
                        + D3 * k3[i]
                        + D4 * k4[i]
                        + D5 * k5[i]
                        + D6 * k6[i]
                        + D7 * k7[i])
                });
                d.push(DenseSegment::Dopri {
                    t0: t,
                    h: tnew - t,
                    r: [y, r1, r2, r3, r4],
                });
            }
            t = tnew;
            y = ynew;
            k1 = k7;
            sol.t.push(t);
            sol.y.push(y);
            on_step(t, &y)?;
            if hit {
                stop_idx += 1;
            }
            let mut fac = if err == 0.0 {
                10.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 10.0)
            };
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            // a step truncated to hit a stop says little about the natural size
            if !hit || fac < 1.0 {
                h = hs * fac;
            }
        } else {
            if !err.is_finite() && !finite(&y) {
                return Err(OdeError::NonFinite { t }.into());
            }
            sol.n_rejected += 1;
            last_rejected = true;
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)
            } else {
                0.2
            };
            h = hs * fac;
        }
    }
    Ok(())
}
