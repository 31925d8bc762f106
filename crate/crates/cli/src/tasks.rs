//! Runs one scenario task in memory and renders its result files.

use rayon::prelude::*;
use raystab::burgers::{
    shock_time_estimate, solve_burgers, solve_linearized, BurgersError, BurgersRun, Grid1D,
    ShockEstimate,
};
use raystab::fields::{verify_field, FieldSpec};
use raystab::flow::{
    integrate_ray, monitor_invariants, scale_xi_check, FlowError, IntegratorConfig,
    InvariantLedger, RaySeed, RayState, ScaleReport,
};
use raystab::growth::{
    certify_vorticity_bound, estimate_beta, lyapunov_exponent, GrowthError, SeriesPoint,
};
use raystab::wkb::{build_packet, epsilon_sweep_multi, WkbError};
use serde::Serialize;
use thiserror::Error;

use crate::scenario::{BurgersTask, FrameRequest, Scenario, Task, WkbTask};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Growth(#[from] GrowthError),
    #[error(transparent)]
    Wkb(#[from] WkbError),
    #[error(transparent)]
    Burgers(#[from] BurgersError),
    #[error("ray {index}: {source}")]
    Ray { index: usize, source: FlowError },
    #[error("frame {index}: {source}")]
    Frame { index: usize, source: WkbError },
    #[error("rendering {file}: {message}")]
    Render { file: String, message: String },
}

/// One result file, named relative to the output directory.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct TaskOutput {
    pub artifacts: Vec<Artifact>,
    /// Certificate or verification verdict, when the task has one.
    pub verdict: Option<bool>,
}

fn json<T: Serialize>(name: &str, value: &T) -> Result<Artifact, TaskError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| TaskError::Render {
        file: name.into(),
        message: e.to_string(),
    })?;
    bytes.push(b'\n');
    Ok(Artifact {
        name: name.into(),
        bytes,
    })
}

/// CSV with every number in shortest round-trip exponent form.
fn csv_file(name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<Artifact, TaskError> {
    let render = |e: csv::Error| TaskError::Render {
        file: name.into(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(render)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:e}")))
            .map_err(render)?;
    }
    let bytes = w.into_inner().map_err(|e| TaskError::Render {
        file: name.into(),
        message: e.to_string(),
    })?;
    Ok(Artifact {
        name: name.into(),
        bytes,
    })
}

fn series_csv(name: &str, series: &[SeriesPoint]) -> Result<Artifact, TaskError> {
    let rows: Vec<Vec<f64>> = series.iter().map(|p| vec![p.t, p.sup_b]).collect();
    csv_file(name, &["t", "sup_b"], &rows)
}

pub fn run_task(sc: &Scenario) -> Result<TaskOutput, TaskError> {
    let cfg = &sc.integrator;
    let csv = sc.output.csv;
    let mut artifacts = Vec::new();
    let mut verdict = None;
    let field = || {
        sc.field
            .as_ref()
            .expect("parsing requires a field for this task")
    };
    match &sc.task {
        Task::VerifyField {
            n_samples,
            rng_seed,
        } => {
            let r = verify_field(field(), *n_samples, *rng_seed);
            verdict = Some(r.pass);
            artifacts.push(json("verify_report.json", &r)?);
        }
        Task::Ray { t_final, seeds } => {
            artifacts.extend(rays(field(), *t_final, seeds, cfg)?);
        }
        Task::Invariants {
            t_final,
            seeds,
            scale_c,
        } => {
            let report = invariants(field(), *t_final, seeds, *scale_c, cfg)?;
            if csv {
                let rows: Vec<Vec<f64>> = report
                    .rays
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let l = &r.ledger;
                        vec![
                            i as f64,
                            l.omega_xi.max_rel,
                            l.b_xi.max_rel,
                            l.btilde_xi.map_or(f64::NAN, |d| d.max_rel),
                            l.det.map_or(f64::NAN, |d| d.max_rel),
                            r.max_rel,
                        ]
                    })
                    .collect();
                artifacts.push(csv_file(
                    "invariants.csv",
                    &["seed", "omega_xi", "b_xi", "btilde_xi", "det", "max_rel"],
                    &rows,
                )?);
            }
            artifacts.insert(0, json("invariants_report.json", &report)?);
        }
        Task::Beta { t_final, plan } => {
            let r = estimate_beta(field(), *t_final, plan, cfg)?;
            artifacts.push(json("growth_report.json", &r)?);
            if csv {
                artifacts.push(series_csv("sup_series.csv", &r.sup_series)?);
            }
        }
        Task::Lyapunov { t_max, plan } => {
            let r = lyapunov_exponent(field(), *t_max, plan, cfg)?;
            artifacts.push(json("lyapunov_report.json", &r)?);
            if csv {
                artifacts.push(series_csv("lyapunov_series.csv", &r.series)?);
            }
        }
        Task::Certify { t_final, plan } => {
            let r = certify_vorticity_bound(field(), *t_final, plan, cfg)?;
            let pass = r.certificate.as_ref().is_some_and(|c| c.pass);
            verdict = Some(pass);
            let doc = CertifyDocument {
                verdict: if pass { "pass" } else { "fail" },
                report: &r,
            };
            artifacts.push(json("certificate_report.json", &doc)?);
            if csv {
                artifacts.push(series_csv("sup_series.csv", &r.sup_series)?);
            }
        }
        Task::WkbSweep(w) => artifacts.extend(wkb(field(), w, csv)?),
        Task::Burgers(b) => artifacts.extend(burgers(b, csv)?),
    }
    Ok(TaskOutput { artifacts, verdict })
}

#[derive(Serialize)]
struct CertifyDocument<'a> {
    verdict: &'static str,
    report: &'a raystab::growth::GrowthReport,
}

#[derive(Serialize)]
struct RaySummary {
    index: usize,
    seed: RaySeed,
    file: String,
    n_states: usize,
    n_rejected: usize,
    last: RayState,
}

fn rays(
    spec: &FieldSpec,
    t_final: f64,
    seeds: &[RaySeed],
    cfg: &IntegratorConfig,
) -> Result<Vec<Artifact>, TaskError> {
    let mut out = Vec::new();
    let mut summary = Vec::new();
    for (index, seed) in seeds.iter().enumerate() {
        let traj = integrate_ray(spec, seed, t_final, cfg)
            .map_err(|source| TaskError::Ray { index, source })?;
        let name = format!("ray_{index:03}.jsonl");
        let mut bytes = Vec::new();
        for s in &traj.states {
            serde_json::to_writer(&mut bytes, s).map_err(|e| TaskError::Render {
                file: name.clone(),
                message: e.to_string(),
            })?;
            bytes.push(b'\n');
        }
        summary.push(RaySummary {
            index,
            seed: *seed,
            file: name.clone(),
            n_states: traj.states.len(),
            n_rejected: traj.n_rejected,
            last: *traj.last(),
        });
        out.push(Artifact { name, bytes });
    }
    out.insert(0, json("ray_summary.json", &summary)?);
    Ok(out)
}

#[derive(Serialize)]
struct RayInvariants {
    index: usize,
    seed: RaySeed,
    ledger: InvariantLedger,
    max_rel: f64,
    scale: Option<ScaleReport>,
}

#[derive(Serialize)]
struct InvariantsReport {
    field: String,
    #[serde(rename = "T")]
    t_final: f64,
    worst_max_rel: f64,
    worst_scale_b_deviation: Option<f64>,
    rays: Vec<RayInvariants>,
}

fn invariants(
    spec: &FieldSpec,
    t_final: f64,
    seeds: &[RaySeed],
    scale_c: Option<f64>,
    cfg: &IntegratorConfig,
) -> Result<InvariantsReport, TaskError> {
    let rays = seeds
        .par_iter()
        .enumerate()
        .map(|(index, seed)| {
            let wrap = |source| TaskError::Ray { index, source };
            let traj = integrate_ray(spec, seed, t_final, cfg).map_err(wrap)?;
            let ledger = monitor_invariants(&traj);
            let scale = match scale_c {
                Some(c) => Some(scale_xi_check(spec, seed, c, t_final, cfg).map_err(wrap)?),
                None => None,
            };
            Ok(RayInvariants {
                index,
                seed: *seed,
                max_rel: ledger.max_rel(),
                ledger,
                scale,
            })
        })
        .collect::<Result<Vec<_>, TaskError>>()?;
    let worst_max_rel = rays.iter().map(|r| r.max_rel).fold(0.0, f64::max);
    let worst_scale_b_deviation = scale_c.map(|_| {
        rays.iter()
            .filter_map(|r| r.scale.map(|s| s.max_b_deviation))
            .fold(0.0, f64::max)
    });
    Ok(InvariantsReport {
        field: spec.kind().name().into(),
        t_final,
        worst_max_rel,
        worst_scale_b_deviation,
        rays,
    })
}

/// Structural frame metrics at spacing `h` and `h/2`.
#[derive(Serialize)]
struct FrameCheck {
    t: f64,
    epsilon: f64,
    h: [f64; 2],
    dims: [[usize; 3]; 2],
    max_b_dot_xi: [f64; 2],
    grad_s_error: [f64; 2],
    grad_s_order: f64,
    max_div_v: [f64; 2],
    max_abs_v: [f64; 2],
    /// `max|div v| / (h² max|v|)`.
    div_relative: [f64; 2],
    boundary_support: [bool; 2],
}

fn wkb(spec: &FieldSpec, w: &WkbTask, csv: bool) -> Result<Vec<Artifact>, TaskError> {
    let rk4 = IntegratorConfig::rk4(w.rk4_step);
    let mut out = Vec::new();
    for r in epsilon_sweep_multi(spec, &w.packet, &w.ps, &rk4)? {
        let tag = format!("{}", r.p);
        out.push(json(&format!("scaling_p{tag}.json"), &r)?);
        if csv {
            let rows: Vec<Vec<f64>> = r
                .entries
                .iter()
                .map(|e| vec![e.epsilon, e.residual_max, e.norm_ratio, e.corrector_ratio])
                .collect();
            out.push(csv_file(
                &format!("scaling_p{tag}.csv"),
                &["epsilon", "residual", "norm_ratio", "corrector_ratio"],
                &rows,
            )?);
        }
    }
    for (index, f) in w.frames.iter().enumerate() {
        let frame = build_packet(spec, &f.packet(&w.packet), f.t, f.epsilon, &rk4)
            .map_err(|source| TaskError::Frame { index, source })?;
        let name = format!("frame_{index:02}.txt");
        let mut bytes = Vec::new();
        frame
            .write_text(&mut bytes)
            .map_err(|e| TaskError::Render {
                file: name.clone(),
                message: e.to_string(),
            })?;
        out.push(Artifact { name, bytes });
    }
    if let Some(f) = &w.frame_check {
        out.push(json(
            "frame_check.json",
            &frame_check(spec, &w.packet, f, &rk4)?,
        )?);
    }
    Ok(out)
}

fn frame_check(
    spec: &FieldSpec,
    base: &raystab::wkb::PacketSpec,
    f: &FrameRequest,
    rk4: &IntegratorConfig,
) -> Result<FrameCheck, TaskError> {
    let fine = FrameRequest { h: f.h / 2.0, ..*f };
    let a = build_packet(spec, &f.packet(base), f.t, f.epsilon, rk4)?;
    let b = build_packet(spec, &fine.packet(base), f.t, f.epsilon, rk4)?;
    let ge = [a.grad_s_error(), b.grad_s_error()];
    let div = [a.max_div_v(), b.max_div_v()];
    let vmax = [a.max_abs_v(), b.max_abs_v()];
    let rel = |k: usize, h: f64| {
        if vmax[k] > 0.0 {
            div[k] / (h * h * vmax[k])
        } else {
            0.0
        }
    };
    Ok(FrameCheck {
        t: f.t,
        epsilon: f.epsilon,
        h: [a.h, b.h],
        dims: [a.dims, b.dims],
        max_b_dot_xi: [a.max_b_dot_xi(), b.max_b_dot_xi()],
        grad_s_error: ge,
        grad_s_order: (ge[0] / ge[1]).log2(),
        max_div_v: div,
        max_abs_v: vmax,
        div_relative: [rel(0, a.h), rel(1, b.h)],
        boundary_support: [a.boundary_support, b.boundary_support],
    })
}

#[derive(Serialize)]
struct Snapshot<'a> {
    t: f64,
    u: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    v: Option<&'a [f64]>,
}

#[derive(Serialize)]
struct L1Summary {
    initial: f64,
    final_value: f64,
    /// `max_t |‖v(t)‖₁ − ‖v(0)‖₁| / ‖v(0)‖₁`.
    max_rel_drift: f64,
    nonincreasing: bool,
    v0_nonnegative: bool,
    v_mass_drift: f64,
}

#[derive(Serialize)]
struct BurgersReport<'a> {
    grid: Grid1D,
    cfl: f64,
    #[serde(rename = "T")]
    t_final: f64,
    n_steps: usize,
    shock_factor: f64,
    shock: ShockEstimate,
    u_mass_drift: f64,
    total_variation_nonincreasing: bool,
    l1: Option<L1Summary>,
    x: Vec<f64>,
    snapshots: Vec<Snapshot<'a>>,
}

fn max_drift(series: &[f64]) -> f64 {
    series
        .iter()
        .map(|m| (m - series[0]).abs())
        .fold(0.0, f64::max)
}

fn nonincreasing(series: &[f64]) -> bool {
    series.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12))
}

fn burgers(b: &BurgersTask, csv: bool) -> Result<Vec<Artifact>, TaskError> {
    let run = solve_burgers(&b.u0, b.t_final, &b.grid, b.cfl, &b.snapshot_times)?;
    let lin: Option<BurgersRun> = match &b.v0 {
        Some(v0) => Some(solve_linearized(&run, v0)?),
        None => None,
    };
    let src = lin.as_ref().unwrap_or(&run);
    let l1 = match (&lin, &b.v0) {
        (Some(l), Some(v0)) => {
            let first = l.l1_ledger[0];
            Some(L1Summary {
                initial: first,
                final_value: *l.l1_ledger.last().expect("ledger has t = 0"),
                max_rel_drift: if first > 0.0 {
                    max_drift(&l.l1_ledger) / first
                } else {
                    max_drift(&l.l1_ledger)
                },
                nonincreasing: nonincreasing(&l.l1_ledger),
                v0_nonnegative: v0.cell_averages(&b.grid)?.iter().all(|v| *v >= 0.0),
                v_mass_drift: max_drift(&l.v_mass),
            })
        }
        _ => None,
    };
    let snapshots = src
        .snapshot_times
        .iter()
        .enumerate()
        .map(|(k, &t)| Snapshot {
            t,
            u: &src.u_snapshots[k],
            v: lin.as_ref().map(|l| l.v_snapshots[k].as_slice()),
        })
        .collect();
    let report = BurgersReport {
        grid: b.grid,
        cfl: b.cfl,
        t_final: b.t_final,
        n_steps: run.times.len() - 1,
        shock_factor: b.shock_factor,
        shock: shock_time_estimate(&run, b.shock_factor),
        u_mass_drift: max_drift(&run.u_mass),
        total_variation_nonincreasing: nonincreasing(&run.total_variation),
        l1,
        x: b.grid.centers(),
        snapshots,
    };
    let mut out = vec![json("burgers_report.json", &report)?];
    if csv {
        let x = b.grid.centers();
        let mut rows = Vec::new();
        for (k, &t) in src.snapshot_times.iter().enumerate() {
            for (i, &xi) in x.iter().enumerate() {
                let v = lin.as_ref().map_or(f64::NAN, |l| l.v_snapshots[k][i]);
                rows.push(vec![t, xi, src.u_snapshots[k][i], v]);
            }
        }
        out.push(csv_file(
            "burgers_snapshots.csv",
            &["t", "x", "u", "v"],
            &rows,
        )?);
        let rows: Vec<Vec<f64>> = (0..run.times.len())
            .map(|k| {
                let l1 = lin.as_ref().map_or(f64::NAN, |l| l.l1_ledger[k]);
                let vm = lin.as_ref().map_or(f64::NAN, |l| l.v_mass[k]);
                vec![
                    run.times[k],
                    l1,
                    run.shock_indicator[k],
                    run.total_variation[k],
                    run.u_mass[k],
                    vm,
                ]
            })
            .collect();
        out.push(csv_file(
            "burgers_ledger.csv",
            &[
                "t",
                "l1",
                "shock_indicator",
                "total_variation",
                "u_mass",
                "v_mass",
            ],
            &rows,
        )?);
    }
    Ok(out)
}
