//! Periodic 1D Burgers equation `u_t + (u²/2)_x = 0` with the linearized
//! transport `v_t + (u v)_x = 0` carried in the frozen per-step `u`.
//!
//! Both are first-order finite-volume schemes. `u` uses the exact Riemann
//! (Godunov) flux; `v` is upwinded by the Godunov face state of `u`. With
//! `cfl ≤ 1/2` the `v` update is a nonnegative combination of old values,
//! so a nonnegative `v` keeps its L¹ norm up to rounding.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wkb::bump_profile;

/// Default multiple of the initial indicator that marks a shock.
pub const SHOCK_FACTOR: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BurgersError {
    #[error("grid needs at least 16 cells (got {0})")]
    TooFewCells(usize),
    #[error("period must be positive and finite")]
    BadPeriod,
    #[error("cfl must lie in (0, 1] (got {0})")]
    BadCfl(f64),
    #[error("final time must be non-negative and finite")]
    BadTime,
    #[error("initial profile is not bounded")]
    Unbounded,
    #[error("profile has {got} values but the grid has {expected} cells")]
    LengthMismatch { got: usize, expected: usize },
    #[error("run has no per-step u history")]
    MissingHistory,
    #[error("step {step}: dt {dt} does not match the run's time stamps")]
    StepMismatch { step: usize, dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub nx: usize,
    pub dx: f64,
    pub period: f64,
}

impl Grid1D {
    pub fn new(nx: usize, period: f64) -> Result<Self, BurgersError> {
        if nx < 16 {
            return Err(BurgersError::TooFewCells(nx));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(BurgersError::BadPeriod);
        }
        Ok(Grid1D {
            nx,
            dx: period / nx as f64,
            period,
        })
    }

    /// `nx` cells on `[0, 2π)`.
    pub fn periodic(nx: usize) -> Result<Self, BurgersError> {
        Self::new(nx, TAU)
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.center(i)).collect()
    }
}

/// Initial data. Smooth profiles are cell-averaged with 4-point
/// Gauss–Legendre quadrature; jumps sit on cell faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `offset + amplitude·sin(wavenumber·x)`.
    Sine {
        amplitude: f64,
        #[serde(default = "one")]
        wavenumber: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `left` on `[0, jump)`, `right` on `[jump, period)`.
    Riemann {
        left: f64,
        right: f64,
        #[serde(default)]
        jump: Option<f64>,
    },
    /// `base + height·exp(1/(r² − 1))`, `r = |x − center|/width`.
    Bump {
        center: f64,
        width: f64,
        height: f64,
        #[serde(default)]
        base: f64,
    },
    /// Explicit cell values.
    Values {
        values: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl Profile {
    pub fn eval(&self, x: f64, period: f64) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Sine {
                amplitude,
                wavenumber,
                offset,
            } => offset + amplitude * (wavenumber * x).sin(),
            Profile::Riemann { left, right, jump } => {
                let j = jump.unwrap_or(0.5 * period);
                if x.rem_euclid(period) < j {
                    *left
                } else {
                    *right
                }
            }
            Profile::Bump {
                center,
                width,
                height,
                base,
            } => {
                // distance on the circle
                let d = (x - center).rem_euclid(period);
                let d = d.min(period - d);
                base + height * bump_profile(d / width)
            }
            Profile::Values { .. } => f64::NAN,
        }
    }

    pub fn cell_averages(&self, grid: &Grid1D) -> Result<Vec<f64>, BurgersError> {
        let out = match self {
            Profile::Values { values } => {
                if values.len() != grid.nx {
                    return Err(BurgersError::LengthMismatch {
                        got: values.len(),
                        expected: grid.nx,
                    });
                }
                values.clone()
            }
            Profile::Riemann { left, right, jump } => {
                let j = jump.unwrap_or(0.5 * grid.period);
                (0..grid.nx)
                    .map(|i| {
                        let (a, b) = (i as f64 * grid.dx, (i + 1) as f64 * grid.dx);
                        let frac = ((j - a) / (b - a)).clamp(0.0, 1.0);
                        frac * left + (1.0 - frac) * right
                    })
                    .collect()
            }
            _ => {
                const NODES: [f64; 4] = [
                    -0.861_136_311_594_052_6,
                    -0.339_981_043_584_856_3,
                    0.339_981_043_584_856_3,
                    0.861_136_311_594_052_6,
                ];
                const WEIGHTS: [f64; 4] = [
                    0.347_854_845_137_453_9,
                    0.652_145_154_862_546_1,
                    0.652_145_154_862_546_1,
                    0.347_854_845_137_453_9,
                ];
                (0..grid.nx)
                    .map(|i| {
                        let c = grid.center(i);
                        NODES
                            .iter()
                            .zip(WEIGHTS)
                            .map(|(n, w)| 0.5 * w * self.eval(c + 0.5 * grid.dx * n, grid.period))
                            .sum()
                    })
                    .collect()
            }
        };
        if out.iter().any(|v: &f64| !v.is_finite()) {
            return Err(BurgersError::Unbounded);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurgersRun {
    pub grid: Grid1D,
    pub cfl: f64,
    pub t_final: f64,
    /// Time stamps of every step, starting at 0.
    pub times: Vec<f64>,
    /// Cell values at every time stamp.
    #[serde(skip)]
    pub u_history: Vec<Vec<f64>>,
    pub snapshot_times: Vec<f64>,
    pub u_snapshots: Vec<Vec<f64>>,
    pub v_snapshots: Vec<Vec<f64>>,
    /// `Σ|v|·dx` at every time stamp (empty before linearization).
    pub l1_ledger: Vec<f64>,
    /// `Σv·dx` at every time stamp (empty before linearization).
    pub v_mass: Vec<f64>,
    /// `Σu·dx` at every time stamp.
    pub u_mass: Vec<f64>,
    /// `max |u_{i+1} − u_i| / dx` at every time stamp.
    pub shock_indicator: Vec<f64>,
    /// `Σ|u_{i+1} − u_i|` at every time stamp.
    pub total_variation: Vec<f64>,
}

#[inline]
fn flux(u: f64) -> f64 {
    0.5 * u * u
}

/// Value of the exact Riemann solution at the face.
pub fn godunov_state(ul: f64, ur: f64) -> f64 {
    if ul <= ur {
        if ul > 0.0 {
            ul
        } else if ur < 0.0 {
            ur
        } else {
            0.0
        }
    } else {
        let s = 0.5 * (ul + ur);
        if s > 0.0 {
            ul
        } else if s < 0.0 {
            ur
        } else {
            0.0
        }
    }
}

/// Godunov flux for `f(u) = u²/2`.
pub fn godunov_flux(ul: f64, ur: f64) -> f64 {
    if ul <= ur {
        flux(godunov_state(ul, ur))
    } else {
        flux(ul).max(flux(ur))
    }
}

fn indicator(u: &[f64], dx: f64) -> (f64, f64) {
    let n = u.len();
    let mut max_jump: f64 = 0.0;
    let mut tv = 0.0;
    for i in 0..n {
        let d = (u[(i + 1) % n] - u[i]).abs();
        max_jump = max_jump.max(d);
        tv += d;
    }
    (max_jump / dx, tv)
}

fn snapshot_targets(t_final: f64, requested: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = requested
        .iter()
        .copied()
        .filter(|t| *t >= 0.0 && *t <= t_final)
        .collect();
    s.push(0.0);
    s.push(t_final);
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// Solves Burgers to `t_final`, storing `u` at every step and snapshots at
/// `snapshot_times` (plus 0 and `t_final`).
pub fn solve_burgers(
    u0: &Profile,
    t_final: f64,
    grid: &Grid1D,
    cfl: f64,
    snapshot_times: &[f64],
) -> Result<BurgersRun, BurgersError> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(BurgersError::BadCfl(cfl));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(BurgersError::BadTime);
    }
    let mut u = u0.cell_averages(grid)?;
    let dx = grid.dx;
    let targets = snapshot_targets(t_final, snapshot_times);
    let mut run = BurgersRun {
        grid: *grid,
        cfl,
        t_final,
        times: Vec::new(),
        u_history: Vec::new(),
        snapshot_times: Vec::new(),
        u_snapshots: Vec::new(),
        v_snapshots: Vec::new(),
        l1_ledger: Vec::new(),
        v_mass: Vec::new(),
        u_mass: Vec::new(),
        shock_indicator: Vec::new(),
        total_variation: Vec::new(),
    };
    let record = |run: &mut BurgersRun, t: f64, u: &[f64]| {
        let (ind, tv) = indicator(u, dx);
        run.times.push(t);
        run.u_history.push(u.to_vec());
        run.u_mass.push(u.iter().sum::<f64>() * dx);
        run.shock_indicator.push(ind);
        run.total_variation.push(tv);
    };
    let mut t = 0.0;
    record(&mut run, t, &u);
    let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if umax == 0.0 {
        // rest state: a single step to the final time
        if t_final > 0.0 {
            record(&mut run, t_final, &u);
        }
    } else {
        let n = grid.nx;
        let mut f = vec![0.0; n];
        let mut next = 1;
        while t < t_final {
            let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut dt = cfl * dx / umax;
            while next < targets.len() && targets[next] <= t {
                next += 1;
            }
            let target = targets.get(next).copied().unwrap_or(t_final);
            let landed = t + dt >= target;
            if landed {
                dt = target - t;
            }
            // f[i] is the flux through the face between cells i and i+1
            for i in 0..n {
                f[i] = godunov_flux(u[i], u[(i + 1) % n]);
            }
            let lam = dt / dx;
            for i in 0..n {
                u[i] -= lam * (f[i] - f[(i + n - 1) % n]);
            }
            t = if landed { target } else { t + dt };
            record(&mut run, t, &u);
        }
    }
    for &s in &targets {
        if let Some(k) = run.times.iter().position(|&t| t == s) {
            run.snapshot_times.push(s);
            run.u_snapshots.push(run.u_history[k].clone());
        }
    }
    Ok(run)
}

/// Transports `v0` through the stored `u` history of `run`.
pub fn solve_linearized(run: &BurgersRun, v0: &Profile) -> Result<BurgersRun, BurgersError> {
    if run.u_history.len() != run.times.len() || run.times.is_empty() {
        return Err(BurgersError::MissingHistory);
    }
    let grid = run.grid;
    let dx = grid.dx;
    let n = grid.nx;
    let mut v = v0.cell_averages(&grid)?;
    let mut out = run.clone();
    out.l1_ledger.clear();
    out.v_mass.clear();
    out.v_snapshots.clear();
    let push = |out: &mut BurgersRun, v: &[f64]| {
        out.l1_ledger
            .push(v.iter().map(|x| x.abs()).sum::<f64>() * dx);
        out.v_mass.push(v.iter().sum::<f64>() * dx);
    };
    push(&mut out, &v);
    let mut snaps = vec![None; run.snapshot_times.len()];
    let mark = |snaps: &mut Vec<Option<Vec<f64>>>, t: f64, v: &[f64]| {
        for (k, &s) in run.snapshot_times.iter().enumerate() {
            if s == t {
                snaps[k] = Some(v.to_vec());
            }
        }
    };
    mark(&mut snaps, run.times[0], &v);
    let mut g = vec![0.0; n];
    for step in 0..run.times.len() - 1 {
        let u = &run.u_history[step];
        let dt = run.times[step + 1] - run.times[step];
        let umax = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(dt > 0.0) || (umax > 0.0 && dt > run.cfl * dx / umax * (1.0 + 1e-12)) {
            return Err(BurgersError::StepMismatch { step, dt });
        }
        for i in 0..n {
            let a = godunov_state(u[i], u[(i + 1) % n]);
            g[i] = a.max(0.0) * v[i] + a.min(0.0) * v[(i + 1) % n];
        }
        let lam = dt / dx;
        for i in 0..n {
            v[i] -= lam * (g[i] - g[(i + n - 1) % n]);
        }
        push(&mut out, &v);
        mark(&mut snaps, run.times[step + 1], &v);
    }
    out.v_snapshots = snaps.into_iter().map(|s| s.unwrap_or_default()).collect();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ShockEstimate {
    Shock { t: f64 },
    NoShock { t_final: f64 },
}

impl ShockEstimate {
    pub fn time(&self) -> Option<f64> {
        match self {
            ShockEstimate::Shock { t } => Some(*t),
            ShockEstimate::NoShock { .. } => None,
        }
    }
}

/// First time the indicator exceeds `factor` times its initial value. Data
/// that already holds a jump of at least half its range report `t = 0`.
pub fn shock_time_estimate(run: &BurgersRun, factor: f64) -> ShockEstimate {
    let no = ShockEstimate::NoShock {
        t_final: run.t_final,
    };
    let Some(u0) = run.u_history.first() else {
        return no;
    };
    let range = u0.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
        - u0.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if !(range > 0.0) {
        return no;
    }
    let i0 = run.shock_indicator[0];
    if i0 * run.grid.dx >= 0.5 * range {
        return ShockEstimate::Shock { t: run.times[0] };
    }
    run.shock_indicator
        .iter()
        .zip(&run.times)
        .find(|(ind, _)| **ind > factor * i0)
        .map(|(_, &t)| ShockEstimate::Shock { t })
        .unwrap_or(no)
}

/// Exact smooth solution by solving `x = x0 + t·u0(x0)` with Newton's method;
/// valid before characteristics cross.
pub fn characteristics_solution<F, D>(u0: F, du0: D, x: f64, t: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut x0 = x - t * u0(x);
    for _ in 0..100 {
        let g = x0 + t * u0(x0) - x;
        let dg = 1.0 + t * du0(x0);
        let step = g / dg;
        x0 -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    u0(x0)
}
