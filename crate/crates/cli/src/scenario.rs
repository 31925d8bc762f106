//! Scenario documents: TOML text to a fully validated [`Scenario`].

use std::f64::consts::TAU;

use raystab::burgers::{Grid1D, Profile, SHOCK_FACTOR};
use raystab::fields::{Domain, FieldError, FieldKind, FieldSpec, TrigMode};
use raystab::flow::{IntegratorConfig, Method, RaySeed};
use raystab::growth::{sample_seeds, SamplingPlan};
use raystab::wkb::{PacketSpec, DEFAULT_RK4_STEP};
use raystab::Vec3;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;

/// Configuration error tied to a key path such as `task.plan.n_seeds`.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

fn err<T>(path: impl Into<String>, message: impl ToString) -> Result<T, ConfigError> {
    Err(ConfigError {
        path: path.into(),
        message: message.to_string(),
    })
}

#[derive(Debug, Clone)]
pub struct Scenario {
    /// Absent only for the burgers task, which has no 3D field.
    pub field: Option<FieldSpec>,
    pub integrator: IntegratorConfig,
    pub task: Task,
    pub output: OutputConfig,
    /// Every rng seed the run depends on, in key order.
    pub rng_seeds: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct OutputConfig {
    pub dir: Option<String>,
    pub csv: bool,
}

#[derive(Debug, Clone)]
pub enum Task {
    VerifyField {
        n_samples: usize,
        rng_seed: u64,
    },
    Ray {
        t_final: f64,
        seeds: Vec<RaySeed>,
    },
    Invariants {
        t_final: f64,
        seeds: Vec<RaySeed>,
        scale_c: Option<f64>,
    },
    Beta {
        t_final: f64,
        plan: SamplingPlan,
    },
    Lyapunov {
        t_max: f64,
        plan: SamplingPlan,
    },
    Certify {
        t_final: f64,
        plan: SamplingPlan,
    },
    WkbSweep(WkbTask),
    Burgers(BurgersTask),
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::VerifyField { .. } => "verify_field",
            Task::Ray { .. } => "ray",
            Task::Invariants { .. } => "invariants",
            Task::Beta { .. } => "beta",
            Task::Lyapunov { .. } => "lyapunov",
            Task::Certify { .. } => "certify",
            Task::WkbSweep(_) => "wkb_sweep",
            Task::Burgers(_) => "burgers",
        }
    }
}

#[derive(Debug, Clone)]
pub struct WkbTask {
    pub packet: PacketSpec,
    pub ps: Vec<f64>,
    pub rk4_step: f64,
    pub frames: Vec<FrameRequest>,
    pub frame_check: Option<FrameRequest>,
}

/// One exported or checked frame: time, `ε` and grid spacing.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRequest {
    pub t: f64,
    pub epsilon: f64,
    pub h: f64,
}

impl FrameRequest {
    /// Packet with a single `ε` and spacing `h`, otherwise copied from `base`.
    pub fn packet(&self, base: &PacketSpec) -> PacketSpec {
        PacketSpec {
            epsilons: vec![self.epsilon],
            h: self.h,
            dt: self.h,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct BurgersTask {
    pub grid: Grid1D,
    pub cfl: f64,
    pub t_final: f64,
    pub u0: Profile,
    pub v0: Option<Profile>,
    pub snapshot_times: Vec<f64>,
    pub shock_factor: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    field: Option<toml::Table>,
    #[serde(default)]
    integrator: Option<RawIntegrator>,
    task: toml::Table,
    #[serde(default)]
    output: Option<RawOutput>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    method: Option<Method>,
    rtol: Option<f64>,
    atol: Option<f64>,
    max_step: Option<f64>,
    initial_step: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    #[serde(default = "yes")]
    csv: bool,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RotationRaw {
    domain: Option<Domain>,
    steady_euler: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StrainRaw {
    lambda: [f64; 3],
    domain: Option<Domain>,
    steady_euler: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ShearRaw {
    #[serde(default = "unit")]
    a: f64,
    domain: Option<Domain>,
    steady_euler: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AbcRaw {
    #[serde(default = "unit")]
    a: f64,
    #[serde(default = "unit")]
    b: f64,
    #[serde(default = "unit")]
    c: f64,
    domain: Option<Domain>,
    steady_euler: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrigPolyRaw {
    modes: Option<Vec<TrigMode>>,
    random: Option<RandomTrigRaw>,
    domain: Option<Domain>,
    steady_euler: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomTrigRaw {
    rng_seed: u64,
    #[serde(default = "three")]
    n_pairs: usize,
    #[serde(default = "two")]
    kmax: i32,
    #[serde(default = "unit")]
    rms_speed: f64,
}

fn unit() -> f64 {
    1.0
}

fn two() -> i32 {
    2
}

fn three() -> usize {
    3
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyRaw {
    #[serde(default = "thousand")]
    n_samples: usize,
    #[serde(default)]
    rng_seed: u64,
}

fn thousand() -> usize {
    1000
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SeedRaw {
    x0: [f64; 3],
    xi0: [f64; 3],
    b0: [f64; 3],
    btilde0: Option<[f64; 3]>,
    omega0: Option<[f64; 3]>,
    /// Attach `b̃0 = ξ0 × b0` when `btilde0` is absent.
    #[serde(default)]
    framed: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomSeedsRaw {
    count: usize,
    #[serde(default)]
    rng_seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RayRaw {
    #[serde(rename = "T")]
    t_final: f64,
    #[serde(default)]
    seeds: Vec<SeedRaw>,
    random_seeds: Option<RandomSeedsRaw>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InvariantsRaw {
    #[serde(rename = "T")]
    t_final: f64,
    #[serde(default)]
    seeds: Vec<SeedRaw>,
    random_seeds: Option<RandomSeedsRaw>,
    scale_c: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GrowthRaw {
    #[serde(rename = "T")]
    t_final: f64,
    #[serde(default)]
    plan: SamplingPlan,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LyapunovRaw {
    #[serde(rename = "T_max")]
    t_max: f64,
    #[serde(default)]
    plan: SamplingPlan,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WkbRaw {
    #[serde(rename = "T")]
    t_final: f64,
    epsilons: Vec<f64>,
    #[serde(default = "default_ps")]
    p: Vec<f64>,
    x0: Option<[f64; 3]>,
    xi0: Option<[f64; 3]>,
    b0: Option<[f64; 3]>,
    delta: Option<f64>,
    h: Option<f64>,
    dt: Option<f64>,
    n_times: Option<usize>,
    quad_spacing: Option<f64>,
    #[serde(default = "default_rk4_step")]
    rk4_step: f64,
    #[serde(default)]
    frames: Vec<FrameRequest>,
    frame_check: Option<FrameRequest>,
}

fn default_ps() -> Vec<f64> {
    vec![2.0]
}

fn default_rk4_step() -> f64 {
    DEFAULT_RK4_STEP
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BurgersRaw {
    #[serde(default = "default_nx")]
    nx: usize,
    #[serde(default = "default_period")]
    period: f64,
    #[serde(default = "default_cfl")]
    cfl: f64,
    #[serde(rename = "T")]
    t_final: f64,
    u0: Profile,
    v0: Option<Profile>,
    #[serde(default)]
    snapshot_times: Vec<f64>,
    #[serde(default = "default_shock_factor")]
    shock_factor: f64,
}

fn default_nx() -> usize {
    1024
}

fn default_period() -> f64 {
    TAU
}

fn default_cfl() -> f64 {
    0.5
}

fn default_shock_factor() -> f64 {
    SHOCK_FACTOR
}

/// Deserializes `value` reporting errors at `prefix` + the inner key path.
fn typed<T: DeserializeOwned>(prefix: &str, value: toml::Value) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." || inner.is_empty() {
            prefix.to_string()
        } else if inner.starts_with('[') {
            format!("{prefix}{inner}")
        } else {
            format!("{prefix}.{inner}")
        };
        ConfigError {
            path,
            message: e.into_inner().message().to_string(),
        }
    })
}

/// Splits the `kind` key off a tagged section.
fn split_kind(section: &str, mut table: toml::Table) -> Result<(String, toml::Value), ConfigError> {
    match table.remove("kind") {
        Some(toml::Value::String(k)) => Ok((k, toml::Value::Table(table))),
        Some(_) => err(format!("{section}.kind"), "must be a string"),
        None => err(format!("{section}.kind"), "missing required key"),
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let doc: toml::Table = toml::from_str(text).map_err(|e| ConfigError {
        path: "<document>".into(),
        message: e.to_string().trim_end().to_string(),
    })?;
    let raw: RawScenario = typed("", toml::Value::Table(doc)).map_err(|mut e| {
        e.path = e.path.trim_start_matches('.').to_string();
        if e.path.is_empty() {
            e.path = "<document>".into();
        }
        e
    })?;
    let mut rng_seeds = Vec::new();
    let field = match raw.field {
        Some(t) => Some(parse_field(t, &mut rng_seeds)?),
        None => None,
    };
    let integrator = parse_integrator(raw.integrator)?;
    let task = parse_task(raw.task, field.as_ref(), &mut rng_seeds)?;
    let output = match raw.output {
        Some(o) => OutputConfig {
            dir: o.dir,
            csv: o.csv,
        },
        None => OutputConfig {
            dir: None,
            csv: true,
        },
    };
    Ok(Scenario {
        field,
        integrator,
        task,
        output,
        rng_seeds,
    })
}

fn field_error(e: FieldError) -> ConfigError {
    let path = match &e {
        FieldError::StrainTrace(_) => "field.lambda".to_string(),
        FieldError::ModeNotSolenoidal { index, .. }
        | FieldError::MissingConjugate { index }
        | FieldError::BadMeanMode { index } => format!("field.modes[{index}]"),
        FieldError::SteadyNotAllowed => "field.steady_euler".into(),
        FieldError::NeedsFreeSpace { .. } | FieldError::DegenerateBox => "field.domain".into(),
        FieldError::NonFinite(_) => "field".into(),
    };
    ConfigError {
        path,
        message: e.to_string(),
    }
}

fn finite(path: &str, vals: &[f64]) -> Result<(), ConfigError> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        err(path, "must be finite")
    }
}

fn parse_field(table: toml::Table, rng_seeds: &mut Vec<u64>) -> Result<FieldSpec, ConfigError> {
    let (kind, rest) = split_kind("field", table)?;
    let free = Domain::free_cube(4.0);
    let (kind, domain, steady) = match kind.as_str() {
        "rotation" => {
            let r: RotationRaw = typed("field", rest)?;
            (
                FieldKind::Rotation,
                r.domain.unwrap_or(free),
                r.steady_euler.unwrap_or(true),
            )
        }
        "strain" => {
            let r: StrainRaw = typed("field", rest)?;
            finite("field.lambda", &r.lambda)?;
            (
                FieldKind::Strain { lambda: r.lambda },
                r.domain.unwrap_or(free),
                r.steady_euler.unwrap_or(true),
            )
        }
        "shear" => {
            let r: ShearRaw = typed("field", rest)?;
            finite("field.a", &[r.a])?;
            (
                FieldKind::Shear { a: r.a },
                r.domain.unwrap_or(Domain::Torus),
                r.steady_euler.unwrap_or(true),
            )
        }
        "abc" => {
            let r: AbcRaw = typed("field", rest)?;
            finite("field", &[r.a, r.b, r.c])?;
            (
                FieldKind::Abc {
                    a: r.a,
                    b: r.b,
                    c: r.c,
                },
                r.domain.unwrap_or(Domain::Torus),
                r.steady_euler.unwrap_or(true),
            )
        }
        "trig_poly" => {
            let r: TrigPolyRaw = typed("field", rest)?;
            let modes = match (r.modes, r.random) {
                (Some(m), None) => m,
                (None, Some(g)) => {
                    if g.n_pairs == 0 {
                        return err("field.random.n_pairs", "must be at least 1");
                    }
                    if g.kmax < 1 {
                        return err("field.random.kmax", "must be at least 1");
                    }
                    if !(g.rms_speed >= 0.0 && g.rms_speed.is_finite()) {
                        return err("field.random.rms_speed", "must be finite and non-negative");
                    }
                    rng_seeds.push(g.rng_seed);
                    let generated =
                        FieldSpec::random_trig_poly(g.rng_seed, g.n_pairs, g.kmax, g.rms_speed);
                    match generated.kind() {
                        FieldKind::TrigPoly { modes } => modes.clone(),
                        _ => unreachable!("random_trig_poly builds a trig_poly"),
                    }
                }
                _ => {
                    return err(
                        "field",
                        "trig_poly needs exactly one of `modes` or `random`",
                    )
                }
            };
            (
                FieldKind::TrigPoly { modes },
                r.domain.unwrap_or(Domain::Torus),
                r.steady_euler.unwrap_or(false),
            )
        }
        other => return err(
            "field.kind",
            format!(
                "unknown field kind `{other}` (expected rotation, strain, shear, abc or trig_poly)"
            ),
        ),
    };
    FieldSpec::new(kind, domain, steady).map_err(field_error)
}

fn parse_integrator(raw: Option<RawIntegrator>) -> Result<IntegratorConfig, ConfigError> {
    let mut cfg = IntegratorConfig::default();
    if let Some(r) = raw {
        if let Some(m) = r.method {
            cfg.method = m;
        }
        cfg.rtol = r.rtol.unwrap_or(cfg.rtol);
        cfg.atol = r.atol.unwrap_or(cfg.atol);
        cfg.max_step = r.max_step.or(cfg.max_step);
        cfg.initial_step = r.initial_step.or(cfg.initial_step);
    }
    cfg.validate().or_else(|e| err("integrator", e))?;
    Ok(cfg)
}

fn positive_time(path: &str, t: f64) -> Result<f64, ConfigError> {
    if t > 0.0 && t.is_finite() {
        Ok(t)
    } else {
        err(path, format!("must be positive and finite (got {t})"))
    }
}

fn parse_seeds(
    explicit: Vec<SeedRaw>,
    random: Option<RandomSeedsRaw>,
    field: &FieldSpec,
    rng_seeds: &mut Vec<u64>,
) -> Result<Vec<RaySeed>, ConfigError> {
    let mut seeds = Vec::new();
    for (i, s) in explicit.into_iter().enumerate() {
        let mut seed = RaySeed::new(s.x0.into(), s.xi0.into(), s.b0.into());
        match s.btilde0 {
            Some(bt) => seed = seed.with_btilde(bt.into()),
            None if s.framed => seed = seed.with_btilde(seed.xi0.cross(&seed.b0)),
            None => {}
        }
        if let Some(w) = s.omega0 {
            seed = seed.with_omega(w.into());
        }
        seed.validate(false)
            .or_else(|e| err(format!("task.seeds[{i}]"), e))?;
        seeds.push(seed);
    }
    if let Some(r) = random {
        if r.count == 0 {
            return err("task.random_seeds.count", "must be at least 1");
        }
        rng_seeds.push(r.rng_seed);
        let region = field.domain().sampling_box();
        seeds.extend(sample_seeds(&region, r.count, r.rng_seed));
    }
    if seeds.is_empty() {
        return err("task", "needs at least one of `seeds` or `random_seeds`");
    }
    Ok(seeds)
}

fn check_plan(plan: &SamplingPlan, rng_seeds: &mut Vec<u64>) -> Result<(), ConfigError> {
    plan.validate().or_else(|e| err("task.plan", e))?;
    rng_seeds.push(plan.rng_seed);
    Ok(())
}

fn parse_task(
    table: toml::Table,
    field: Option<&FieldSpec>,
    rng_seeds: &mut Vec<u64>,
) -> Result<Task, ConfigError> {
    let (kind, rest) = split_kind("task", table)?;
    if kind == "burgers" {
        return Ok(Task::Burgers(parse_burgers(typed("task", rest)?)?));
    }
    let Some(field) = field else {
        return err(
            "field",
            format!("missing required section for task `{kind}`"),
        );
    };
    let task = match kind.as_str() {
        "verify_field" => {
            let r: VerifyRaw = typed("task", rest)?;
            if r.n_samples == 0 {
                return err("task.n_samples", "must be at least 1");
            }
            rng_seeds.push(r.rng_seed);
            Task::VerifyField {
                n_samples: r.n_samples,
                rng_seed: r.rng_seed,
            }
        }
        "ray" => {
            let r: RayRaw = typed("task", rest)?;
            let t_final = r.t_final;
            if !t_final.is_finite() {
                return err("task.T", "must be finite");
            }
            Task::Ray {
                t_final,
                seeds: parse_seeds(r.seeds, r.random_seeds, field, rng_seeds)?,
            }
        }
        "invariants" => {
            let r: InvariantsRaw = typed("task", rest)?;
            let t_final = positive_time("task.T", r.t_final)?;
            if let Some(c) = r.scale_c {
                if c == 0.0 || !c.is_finite() {
                    return err("task.scale_c", "must be finite and nonzero");
                }
            }
            Task::Invariants {
                t_final,
                seeds: parse_seeds(r.seeds, r.random_seeds, field, rng_seeds)?,
                scale_c: r.scale_c,
            }
        }
        "beta" | "certify" => {
            let r: GrowthRaw = typed("task", rest)?;
            let t_final = positive_time("task.T", r.t_final)?;
            check_plan(&r.plan, rng_seeds)?;
            if kind == "beta" {
                Task::Beta {
                    t_final,
                    plan: r.plan,
                }
            } else {
                Task::Certify {
                    t_final,
                    plan: r.plan,
                }
            }
        }
        "lyapunov" => {
            let r: LyapunovRaw = typed("task", rest)?;
            let t_max = positive_time("task.T_max", r.t_max)?;
            check_plan(&r.plan, rng_seeds)?;
            Task::Lyapunov {
                t_max,
                plan: r.plan,
            }
        }
        "wkb_sweep" => Task::WkbSweep(parse_wkb(typed("task", rest)?, field)?),
        other => {
            return err(
                "task.kind",
                format!(
                    "unknown task `{other}` (expected verify_field, ray, invariants, beta, \
                     lyapunov, certify, wkb_sweep or burgers)"
                ),
            )
        }
    };
    Ok(task)
}

/// Key of the packet parameter an invalid-packet message is about.
fn packet_key(message: &str) -> &'static str {
    for key in [
        "h",
        "dt",
        "delta",
        "p",
        "T",
        "n_times",
        "quad_spacing",
        "epsilons",
    ] {
        if message.starts_with(&format!("{key} ")) || message.starts_with(&format!("{key} =")) {
            return match key {
                "h" => "task.h",
                "dt" => "task.dt",
                "delta" => "task.delta",
                "p" => "task.p",
                "T" => "task.T",
                "n_times" => "task.n_times",
                "quad_spacing" => "task.quad_spacing",
                _ => "task.epsilons",
            };
        }
    }
    if message.contains("epsilons") {
        "task.epsilons"
    } else {
        "task"
    }
}

fn packet_error(e: raystab::wkb::WkbError) -> ConfigError {
    let message = match &e {
        raystab::wkb::WkbError::Invalid(m) => m.clone(),
        other => other.to_string(),
    };
    ConfigError {
        path: packet_key(&message).into(),
        message,
    }
}

fn parse_wkb(r: WkbRaw, field: &FieldSpec) -> Result<WkbTask, ConfigError> {
    if r.epsilons.len() < 3 {
        return err(
            "task.epsilons",
            "an epsilon sweep needs at least 3 epsilons",
        );
    }
    if r.p.is_empty() {
        return err("task.p", "needs at least one exponent");
    }
    if let Some(i) = r.p.iter().position(|p| !(*p > 1.0 && p.is_finite())) {
        return err(format!("task.p[{i}]"), "must lie in (1, inf)");
    }
    if !(r.rk4_step > 0.0 && r.rk4_step.is_finite()) {
        return err("task.rk4_step", "must be positive and finite");
    }
    let mut pk = PacketSpec::default_for(field, r.epsilons, r.p[0], r.t_final);
    if let Some(v) = r.x0 {
        pk.x0 = Vec3::from(v);
    }
    if let Some(v) = r.xi0 {
        pk.xi0 = Vec3::from(v);
    }
    if let Some(v) = r.b0 {
        pk.b0 = Vec3::from(v);
    }
    if let Some(d) = r.delta {
        pk.delta = d;
        if r.quad_spacing.is_none() {
            pk.quad_spacing = d / 8.0;
        }
    }
    pk.h = r.h.unwrap_or(pk.h);
    pk.dt = r.dt.unwrap_or(pk.dt);
    pk.n_times = r.n_times.unwrap_or(pk.n_times);
    pk.quad_spacing = r.quad_spacing.unwrap_or(pk.quad_spacing);
    pk.validate().map_err(packet_error)?;

    let check_frame = |path: String, f: &FrameRequest| -> Result<(), ConfigError> {
        if !(0.0..=pk.t_final).contains(&f.t) {
            return err(
                format!("{path}.t"),
                format!("must lie in [0, T = {}]", pk.t_final),
            );
        }
        f.packet(&pk).validate().map_err(|e| {
            let mut c = packet_error(e);
            c.path = c.path.replacen("task", &path, 1);
            c
        })
    };
    for (i, f) in r.frames.iter().enumerate() {
        check_frame(format!("task.frames[{i}]"), f)?;
    }
    if let Some(f) = &r.frame_check {
        check_frame("task.frame_check".into(), f)?;
    }
    Ok(WkbTask {
        packet: pk,
        ps: r.p,
        rk4_step: r.rk4_step,
        frames: r.frames,
        frame_check: r.frame_check,
    })
}

fn parse_burgers(r: BurgersRaw) -> Result<BurgersTask, ConfigError> {
    let grid = match Grid1D::new(r.nx, r.period) {
        Ok(g) => g,
        Err(e @ raystab::burgers::BurgersError::TooFewCells(_)) => return err("task.nx", e),
        Err(e) => return err("task.period", e),
    };
    if !(r.cfl > 0.0 && r.cfl <= 1.0) {
        return err("task.cfl", format!("must lie in (0, 1] (got {})", r.cfl));
    }
    if !(r.t_final >= 0.0 && r.t_final.is_finite()) {
        return err("task.T", "must be finite and non-negative");
    }
    if !(r.shock_factor > 1.0 && r.shock_factor.is_finite()) {
        return err("task.shock_factor", "must be finite and greater than 1");
    }
    if let Some(i) = r.snapshot_times.iter().position(|t| !t.is_finite()) {
        return err(format!("task.snapshot_times[{i}]"), "must be finite");
    }
    r.u0.cell_averages(&grid).or_else(|e| err("task.u0", e))?;
    if let Some(v0) = &r.v0 {
        v0.cell_averages(&grid).or_else(|e| err("task.v0", e))?;
    }
    Ok(BurgersTask {
        grid,
        cfl: r.cfl,
        t_final: r.t_final,
        u0: r.u0,
        v0: r.v0,
        snapshot_times: r.snapshot_times,
        shock_factor: r.shock_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_beta_scenario_gets_defaults() {
        let sc = parse_scenario("[field]\nkind = \"rotation\"\n[task]\nkind = \"beta\"\nT = 5.0\n")
            .unwrap();
        let Task::Beta { t_final, plan } = &sc.task else {
            panic!("wrong task")
        };
        assert_eq!(*t_final, 5.0);
        assert_eq!(*plan, SamplingPlan::default());
        assert_eq!(sc.integrator, IntegratorConfig::default());
        assert!(sc.output.csv && sc.output.dir.is_none());
        assert_eq!(sc.rng_seeds, vec![0]);
    }

    #[test]
    fn strain_trace_is_rejected_at_its_key() {
        let e = parse_scenario(
            "[field]\nkind = \"strain\"\nlambda = [1.0, 1.0, 1.0]\n[task]\nkind = \"beta\"\nT = 1.0\n",
        )
        .unwrap_err();
        assert_eq!(e.path, "field.lambda");
        assert!(e.message.contains("strain eigenvalues must sum to zero"));
    }

    #[test]
    fn coarse_packet_cites_the_resolution_constraint() {
        let e = parse_scenario(
            "[field]\nkind = \"strain\"\nlambda = [-1.0, 0.0, 1.0]\n\
             [task]\nkind = \"wkb_sweep\"\nT = 1.0\nepsilons = [0.1, 0.05, 0.02]\nh = 0.01\n",
        )
        .unwrap_err();
        assert_eq!(e.path, "task.h");
        assert!(e.message.contains("resolution constraint"), "{e}");
    }

    #[test]
    fn unknown_keys_are_located() {
        let e = parse_scenario(
            "[field]\nkind = \"abc\"\n[task]\nkind = \"beta\"\nT = 1.0\n[task.plan]\nn_sedes = 3\n",
        )
        .unwrap_err();
        assert_eq!(e.path, "task.plan.n_sedes");
        let e =
            parse_scenario("[field]\nkind = \"abc\"\nd = 1\n[task]\nkind = \"beta\"\nT = 1.0\n")
                .unwrap_err();
        assert_eq!(e.path, "field.d");
        let e =
            parse_scenario("[field]\nkind = \"abc\"\n[task]\nkind = \"beta\"\nT = 1.0\n[extra]\n")
                .unwrap_err();
        assert_eq!(e.path, "extra");
        let e = parse_scenario("[field]\nkind = \"abc\"\n[task]\nkind = \"beta\"\n").unwrap_err();
        assert_eq!(e.path, "task");
        assert!(e.message.contains("missing field `T`"), "{e}");
    }

    #[test]
    fn seeds_are_validated_before_running() {
        let e = parse_scenario(
            "[field]\nkind = \"abc\"\n[task]\nkind = \"ray\"\nT = 1.0\n\
             [[task.seeds]]\nx0 = [0, 0, 0]\nxi0 = [1, 0, 0]\nb0 = [1, 0, 0]\n",
        )
        .unwrap_err();
        assert_eq!(e.path, "task.seeds[0]");
        assert!(e.message.contains("orthogonal"), "{e}");
    }
}
