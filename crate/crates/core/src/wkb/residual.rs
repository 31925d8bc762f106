//! Linearized-Euler residual of the packet,
//! `R̄ = ∂_t v + (u·∇)v + (v·∇)u + ∇q`.
//!
//! `|R̄|` is not oscillatory (the phase factor has unit modulus), so its L^p
//! norm is taken by midpoint quadrature on a coarse lattice of spacing
//! `quad_spacing`. At each lattice point the derivatives use second-order
//! centered stencils of spacing `h` in space and `dt` in time, which need the
//! potential at 25 nodes at `t` and 6 nodes at each of `t ± dt`. Every node's
//! ray data is independent of `ε`, so one pass serves the whole sweep and
//! every `p`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    amplitude, bump_normalization, cnorm, lp_norm_of, potential, CVec3, Geo, PacketSpec, Tracer,
    WkbError, ANCHOR_NOTE,
};
use crate::fields::FieldSpec;
use crate::flow::IntegratorConfig;
use crate::stats::fit_line;
use crate::{Mat3, Vec3};

/// Residual norms of one `ε` at the sampled times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub epsilon: f64,
    pub p: f64,
    pub times: Vec<f64>,
    pub residual: Vec<f64>,
    pub v_norm: Vec<f64>,
    /// `‖v + V‖_p`, the `O(ε)` corrector.
    pub corrector_norm: Vec<f64>,
    /// `‖φ |b|‖_p`.
    pub phib_norm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonEntry {
    pub epsilon: f64,
    pub residual: Vec<f64>,
    pub residual_max: f64,
    pub norm_v_final: f64,
    pub norm_phib_final: f64,
    /// `‖v_ε(T)‖_p / ‖φ(T)|b(T)|‖_p`.
    pub norm_ratio: f64,
    /// max over sampled t of `‖v + V‖_p / ε`.
    pub corrector_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub field: String,
    pub p: f64,
    pub delta: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub times: Vec<f64>,
    pub h: f64,
    pub dt: f64,
    pub quad_spacing: f64,
    pub rk4_step: f64,
    pub entries: Vec<EpsilonEntry>,
    /// Least-squares slope of log max-residual against log ε.
    pub slope: f64,
    pub intercept: f64,
    pub fit_rms: f64,
    pub under_resolved: bool,
    /// Geometric mean of `residual_max / ε`.
    pub constant_c: f64,
    /// `max_ε (‖φ_T |b_T|‖_p − C ε)`.
    pub gamma_lower: f64,
    pub active_points: Vec<usize>,
    /// Whether the support reached the outer layer of a quadrature lattice.
    pub boundary_contact: bool,
    /// Stencils never leave the lattice box, so they are always centered.
    pub one_sided_stencils: bool,
    pub note: String,
}

/// Stencil offsets in units of `h` for the nodes at time `t`: the centre,
/// `±e_j`, `±2e_j` and `±e_j ± e_k`.
fn stencil_offsets() -> Vec<[i32; 3]> {
    let mut out = vec![[0, 0, 0]];
    for mult in [1, 2] {
        for j in 0..3 {
            for s in [1, -1] {
                let mut o = [0; 3];
                o[j] = s * mult;
                out.push(o);
            }
        }
    }
    for j in 0..3 {
        for k in (j + 1)..3 {
            for sj in [1, -1] {
                for sk in [1, -1] {
                    let mut o = [0; 3];
                    o[j] = sj;
                    o[k] = sk;
                    out.push(o);
                }
            }
        }
    }
    out
}

/// Offsets `±e_j` in the order used for the `t ± dt` nodes.
fn unit_offsets() -> [[i32; 3]; 6] {
    let mut out = [[0; 3]; 6];
    for j in 0..3 {
        out[2 * j][j] = 1;
        out[2 * j + 1][j] = -1;
    }
    out
}

struct Stencil {
    offsets: Vec<[i32; 3]>,
    /// For each of the 7 points `0, ±e_j` where v is needed: indices of the
    /// nodes at `+e_axis` and `−e_axis` from it.
    curl_nodes: [[[usize; 2]; 3]; 7],
}

impl Stencil {
    fn new() -> Self {
        let offsets = stencil_offsets();
        let find = |o: [i32; 3]| {
            offsets
                .iter()
                .position(|x| *x == o)
                .expect("offset in stencil")
        };
        let mut centers = vec![[0, 0, 0]];
        centers.extend(unit_offsets());
        let mut curl_nodes = [[[0; 2]; 3]; 7];
        for (c, base) in centers.iter().enumerate() {
            for axis in 0..3 {
                for (s, sign) in [1, -1].iter().enumerate() {
                    let mut o = *base;
                    o[axis] += sign;
                    curl_nodes[c][axis][s] = find(o);
                }
            }
        }
        Stencil {
            offsets,
            curl_nodes,
        }
    }
}

struct PointData {
    at_t: Vec<Geo>,
    minus: Vec<Geo>,
    plus: Vec<Geo>,
    u: Vec3,
    jac: Mat3,
    /// Jacobians at `±e_j` in `unit_offsets` order.
    jac_nb: [Mat3; 6],
    outer: bool,
}

/// `|R̄|`, `|v|`, `|v + V|`, `φ|b|` at one lattice point, unnormalized.
#[derive(Debug, Clone, Copy)]
struct PointValues {
    r: f64,
    v: f64,
    corrector: f64,
    phib: f64,
}

fn curl(a: &[CVec3], nodes: &[[usize; 2]; 3], h: f64) -> CVec3 {
    let inv = 1.0 / (2.0 * h);
    let d = |axis: usize, comp: usize| (a[nodes[axis][0]][comp] - a[nodes[axis][1]][comp]) * inv;
    [d(1, 2) - d(2, 1), d(2, 0) - d(0, 2), d(0, 1) - d(1, 0)]
}

fn pressure(g: &Geo, jac: &Mat3, eps: f64, s_ref: f64) -> Complex64 {
    if g.phi == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let vv = amplitude(g, eps, s_ref);
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            acc += vv[j] * (g.xi[i] * jac[(i, j)]);
        }
    }
    Complex64::new(0.0, -2.0 * eps) * acc / g.xi.norm_squared()
}

fn evaluate(pd: &PointData, st: &Stencil, eps: f64, h: f64, dt: f64, s_ref: f64) -> PointValues {
    let a_t: Vec<CVec3> = pd.at_t.iter().map(|g| potential(g, eps, s_ref)).collect();
    // the t ± dt nodes sit at ±e_j, which curl_nodes[0] addresses through
    // their positions 1..7 in the stencil
    let remap = |geos: &[Geo]| -> Vec<CVec3> {
        let mut full = vec![[Complex64::new(0.0, 0.0); 3]; st.offsets.len()];
        for (k, g) in geos.iter().enumerate() {
            full[1 + k] = potential(g, eps, s_ref);
        }
        full
    };
    let a_m = remap(&pd.minus);
    let a_p = remap(&pd.plus);
    let v: Vec<CVec3> = st.curl_nodes.iter().map(|n| curl(&a_t, n, h)).collect();
    let v_m = curl(&a_m, &st.curl_nodes[0], h);
    let v_p = curl(&a_p, &st.curl_nodes[0], h);
    let q: Vec<Complex64> = (0..6)
        .map(|k| pressure(&pd.at_t[1 + k], &pd.jac_nb[k], eps, s_ref))
        .collect();
    let mut r = [Complex64::new(0.0, 0.0); 3];
    for i in 0..3 {
        let mut acc = (v_p[i] - v_m[i]) / (2.0 * dt);
        for k in 0..3 {
            acc += (v[1 + 2 * k][i] - v[2 + 2 * k][i]) * (pd.u[k] / (2.0 * h));
        }
        for (j, vj) in v[0].iter().enumerate() {
            acc += vj * pd.jac[(i, j)];
        }
        acc += (q[2 * i] - q[2 * i + 1]) / (2.0 * h);
        r[i] = acc;
    }
    let g0 = &pd.at_t[0];
    let vv = amplitude(g0, eps, s_ref);
    let corr = [v[0][0] + vv[0], v[0][1] + vv[1], v[0][2] + vv[2]];
    PointValues {
        r: cnorm(&r),
        v: cnorm(&v[0]),
        corrector: cnorm(&corr),
        phib: g0.phi * g0.b.norm(),
    }
}

struct TimeSlice {
    points: Vec<PointData>,
    boundary_contact: bool,
}

fn lattice_slice(tr: &Tracer, st: &Stencil, t: f64) -> Result<TimeSlice, WkbError> {
    let pk = tr.pk;
    let (lo, hi) = tr.support_box(t)?;
    let hq = pk.quad_spacing;
    let m: [usize; 3] = std::array::from_fn(|i| ((hi[i] - lo[i]) / hq).ceil().max(1.0) as usize);
    let centre = (lo + hi) * 0.5;
    let origin = centre - Vec3::new(m[0] as f64, m[1] as f64, m[2] as f64) * (0.5 * hq);
    let total = m[0] * m[1] * m[2];
    let n = tr.steps_for(t);
    let reach = pk.delta * (1.0 + 1e-3);
    let units = unit_offsets();
    let off = |o: &[i32; 3]| Vec3::new(o[0] as f64, o[1] as f64, o[2] as f64) * pk.h;
    let points: Vec<Option<PointData>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let c = [idx / (m[1] * m[2]), (idx / m[2]) % m[1], idx % m[2]];
            let x =
                origin + Vec3::new(c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5) * hq;
            let x0 = if t == 0.0 { x } else { tr.backward(&x, t, n) };
            if (x0 - pk.x0).norm() > reach {
                return None;
            }
            let at_t = st
                .offsets
                .iter()
                .map(|o| tr.geo(&(x + off(o)), t, n))
                .collect();
            let side = |s: f64| -> Vec<Geo> {
                units
                    .iter()
                    .map(|o| tr.geo(&(x + off(o)), t + s * pk.dt, n))
                    .collect()
            };
            let jac_nb = std::array::from_fn(|k| tr.spec.jacobian(t, &(x + off(&units[k]))));
            Some(PointData {
                at_t,
                minus: side(-1.0),
                plus: side(1.0),
                u: tr.spec.velocity(t, &x),
                jac: tr.spec.jacobian(t, &x),
                jac_nb,
                outer: (0..3).any(|i| c[i] == 0 || c[i] + 1 == m[i]),
            })
        })
        .collect();
    let points: Vec<PointData> = points.into_iter().flatten().collect();
    let boundary_contact = points.iter().any(|p| p.outer && p.at_t[0].phi > 0.0);
    Ok(TimeSlice {
        points,
        boundary_contact,
    })
}

/// Per-(t, ε) pointwise magnitudes, unnormalized.
struct SweepData {
    times: Vec<f64>,
    values: Vec<Vec<Vec<PointValues>>>,
    active: Vec<usize>,
    boundary_contact: bool,
    rk4_step: f64,
}

fn sweep_data(
    spec: &FieldSpec,
    pk: &PacketSpec,
    epsilons: &[f64],
    cfg: &IntegratorConfig,
) -> Result<SweepData, WkbError> {
    let tr = Tracer::new(spec, pk, cfg)?;
    tr.check_support()?;
    let st = Stencil::new();
    let s_ref = pk.x0.dot(&pk.xi0);
    let times = pk.sample_times();
    let mut values = Vec::with_capacity(times.len());
    let mut active = Vec::new();
    let mut boundary_contact = false;
    for &t in &times {
        let slice = lattice_slice(&tr, &st, t)?;
        active.push(slice.points.len());
        boundary_contact |= slice.boundary_contact;
        let per_eps = epsilons
            .iter()
            .map(|&eps| {
                slice
                    .points
                    .par_iter()
                    // a constant phase shift s_ref leaves every modulus unchanged
                    .map(|pd| evaluate(pd, &st, eps, pk.h, pk.dt, s_ref))
                    .collect()
            })
            .collect();
        values.push(per_eps);
    }
    Ok(SweepData {
        times,
        values,
        active,
        boundary_contact,
        rk4_step: tr.step,
    })
}

fn series_for(data: &SweepData, pk: &PacketSpec, e_idx: usize, eps: f64, p: f64) -> ResidualSeries {
    let c = bump_normalization(pk.delta, p);
    let hq = pk.quad_spacing;
    let norm = |f: &dyn Fn(&PointValues) -> f64, t_idx: usize| {
        c * lp_norm_of(data.values[t_idx][e_idx].iter().map(f), p, hq)
    };
    let nt = data.times.len();
    ResidualSeries {
        epsilon: eps,
        p,
        times: data.times.clone(),
        residual: (0..nt).map(|k| norm(&|v| v.r, k)).collect(),
        v_norm: (0..nt).map(|k| norm(&|v| v.v, k)).collect(),
        corrector_norm: (0..nt).map(|k| norm(&|v| v.corrector, k)).collect(),
        phib_norm: (0..nt).map(|k| norm(&|v| v.phib, k)).collect(),
    }
}

/// Residual norms for a single `ε` (exponent `pk.p`).
pub fn linearized_residual(
    spec: &FieldSpec,
    pk: &PacketSpec,
    epsilon: f64,
    cfg: &IntegratorConfig,
) -> Result<ResidualSeries, WkbError> {
    if !(epsilon > 0.0) || pk.h > epsilon / 10.0 || pk.dt > epsilon / 10.0 {
        return Err(WkbError::Invalid(format!(
            "epsilon = {epsilon} violates the resolution constraint h, dt <= epsilon/10"
        )));
    }
    let data = sweep_data(spec, pk, &[epsilon], cfg)?;
    Ok(series_for(&data, pk, 0, epsilon, pk.p))
}

/// Sweep over `pk.epsilons` for exponent `pk.p`.
pub fn epsilon_sweep(
    spec: &FieldSpec,
    pk: &PacketSpec,
    cfg: &IntegratorConfig,
) -> Result<ScalingReport, WkbError> {
    Ok(epsilon_sweep_multi(spec, pk, &[pk.p], cfg)?.remove(0))
}

/// Sweep over `pk.epsilons`, one report per exponent in `ps`. The residual
/// is linear in the bump amplitude, so all exponents share one computation.
pub fn epsilon_sweep_multi(
    spec: &FieldSpec,
    pk: &PacketSpec,
    ps: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<ScalingReport>, WkbError> {
    if pk.epsilons.len() < 3 {
        return Err(WkbError::Invalid(
            "an epsilon sweep needs at least 3 epsilons".into(),
        ));
    }
    if ps.is_empty() || ps.iter().any(|p| !(*p > 1.0 && p.is_finite())) {
        return Err(WkbError::Invalid("every p must lie in (1, inf)".into()));
    }
    let data = sweep_data(spec, pk, &pk.epsilons, cfg)?;
    Ok(ps.iter().map(|&p| report_for(spec, pk, &data, p)).collect())
}

fn report_for(spec: &FieldSpec, pk: &PacketSpec, data: &SweepData, p: f64) -> ScalingReport {
    let last = data.times.len() - 1;
    let entries: Vec<EpsilonEntry> = pk
        .epsilons
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            let s = series_for(data, pk, i, eps, p);
            let residual_max = s.residual.iter().copied().fold(0.0, f64::max);
            let corrector = s.corrector_norm.iter().copied().fold(0.0, f64::max) / eps;
            EpsilonEntry {
                epsilon: eps,
                residual_max,
                norm_v_final: s.v_norm[last],
                norm_phib_final: s.phib_norm[last],
                norm_ratio: s.v_norm[last] / s.phib_norm[last],
                corrector_ratio: corrector,
                residual: s.residual,
            }
        })
        .collect();
    let lx: Vec<f64> = entries.iter().map(|e| e.epsilon.ln()).collect();
    let ly: Vec<f64> = entries.iter().map(|e| e.residual_max.ln()).collect();
    let fit = fit_line(&lx, &ly);
    let (slope, intercept, fit_rms) = fit
        .map(|f| (f.slope, f.intercept, f.rms_residual))
        .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
    let under_resolved = entries
        .windows(2)
        .any(|w| !(w[1].residual_max < w[0].residual_max));
    let constant_c = (entries
        .iter()
        .map(|e| (e.residual_max / e.epsilon).ln())
        .sum::<f64>()
        / entries.len() as f64)
        .exp();
    let gamma_lower = entries
        .iter()
        .map(|e| e.norm_phib_final - constant_c * e.epsilon)
        .fold(f64::NEG_INFINITY, f64::max);
    ScalingReport {
        field: spec.kind().name().to_string(),
        p,
        delta: pk.delta,
        t_final: pk.t_final,
        times: data.times.clone(),
        h: pk.h,
        dt: pk.dt,
        quad_spacing: pk.quad_spacing,
        rk4_step: data.rk4_step,
        entries,
        slope,
        intercept,
        fit_rms,
        under_resolved,
        constant_c,
        gamma_lower,
        active_points: data.active.clone(),
        boundary_contact: data.boundary_contact,
        one_sided_stencils: false,
        note: ANCHOR_NOTE.to_string(),
    }
}
