//! Executes one configured experiment and writes its report and CSV.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use ergwalk_core::drift::{
    compose_v, contraction_scan, default_delta, recurrence_statistic, spanning_points,
    verify_drift, DriftFunction, HorizonBudget, RECURRENCE_GRID,
};
use ergwalk_core::equidist::{
    bootstrap_reference, reference_means, run_walk, three_modes_report, torus_escape,
    ObservableDictionary, ThreeModesConfig,
};
use ergwalk_core::markov::{
    centered_observable, decay_estimate, reference_points, tail_bound_check, CenteredObservable,
    TailBoundConfig,
};
use ergwalk_core::step::top_lyapunov_estimate;
use ergwalk_core::surface::TranslationSurface;
use ergwalk_core::torus::{stationarity_test, ShapeLaw};
use ergwalk_core::{Point, SeedKey, Space, StepDistribution};

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind, SpaceSpec};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] ergwalk_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Informational,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass | Verdict::Informational => 0,
            Verdict::Fail => 2,
        }
    }

    fn from_checks(checks: &BTreeMap<String, bool>) -> Self {
        if checks.values().all(|&ok| ok) {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// A plot-ready table.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn to_csv(&self) -> Result<Vec<u8>, RunError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| RunError::Io(e.into_error()))
    }
}

/// Result of an experiment before it is written out.
pub struct Run {
    pub verdict: Verdict,
    pub checks: BTreeMap<String, bool>,
    pub payload: Value,
    pub table: Option<Table>,
}

#[derive(Serialize)]
struct Report<'a> {
    version: String,
    experiment: &'static str,
    space: String,
    seed: u64,
    seed_override: bool,
    verdict: Verdict,
    checks: &'a BTreeMap<String, bool>,
    config: &'a ExperimentConfig,
    config_text: &'a str,
    payload: &'a Value,
}

pub fn version() -> String {
    format!("ergwalk v{}", env!("CARGO_PKG_VERSION"))
}

/// Paths written by a run.
#[derive(Debug, Clone)]
pub struct Written {
    pub verdict: Verdict,
    pub report: PathBuf,
    pub csv: Option<PathBuf>,
}

/// Output directory: `--out`, then `ERGWALK_OUT`, then `output.dir`, then
/// the working directory.
pub fn output_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    if let Some(o) = out {
        return o.to_path_buf();
    }
    if let Some(o) = std::env::var_os("ERGWALK_OUT").filter(|o| !o.is_empty()) {
        return PathBuf::from(o);
    }
    cfg.output
        .dir
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| RunError::Io(e.error))?;
    Ok(())
}

/// Run the experiment and write the report (and CSV, if any). Nothing is
/// written when the experiment fails with an error.
pub fn run_and_write(cfg: &ExperimentConfig, out: Option<&Path>, seed_override: bool) -> Result<Written, RunError> {
    let run = execute(cfg)?;
    let dir = output_dir(cfg, out);
    let name = cfg.experiment.name();
    let report_path = dir.join(cfg.output.report.clone().unwrap_or_else(|| format!("{name}_report.json")));
    let csv_path = run
        .table
        .as_ref()
        .map(|_| dir.join(cfg.output.csv.clone().unwrap_or_else(|| format!("{name}.csv"))));
    let report = Report {
        version: version(),
        experiment: name,
        space: space_tag(&cfg.space),
        seed: cfg.seed,
        seed_override,
        verdict: run.verdict,
        checks: &run.checks,
        config: cfg,
        config_text: &cfg.text,
        payload: &run.payload,
    };
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    if let (Some(t), Some(p)) = (&run.table, &csv_path) {
        write_atomic(p, &t.to_csv()?)?;
    }
    write_atomic(&report_path, &json)?;
    Ok(Written {
        verdict: run.verdict,
        report: report_path,
        csv: csv_path,
    })
}

fn space_tag(s: &SpaceSpec) -> String {
    match s {
        SpaceSpec::Torus => "torus".into(),
        SpaceSpec::Builtin { name } => format!("surface:{name}"),
        SpaceSpec::File { path } => format!("surface:file:{}", path.display()),
    }
}

pub fn build_space(spec: &SpaceSpec) -> Result<Space, RunError> {
    Ok(match spec {
        SpaceSpec::Torus => Space::torus(),
        SpaceSpec::Builtin { name } => Space::builtin_surface(name)?,
        SpaceSpec::File { path } => {
            let text = std::fs::read_to_string(path)?;
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "file".into());
            Space::surface(&label, TranslationSurface::from_text(&text)?)?
        }
    })
}

/// Rough number of group actions the experiment performs.
pub fn estimated_steps(cfg: &ExperimentConfig) -> u128 {
    let b = &cfg.budget;
    let p = &cfg.params;
    let n = b.n as u128;
    let w = |d: usize| b.walkers.unwrap_or(d) as u128;
    let i = |d: usize| b.inner.unwrap_or(d) as u128;
    match cfg.experiment {
        ExperimentKind::Walk | ExperimentKind::Stationarity => n,
        ExperimentKind::Drift => {
            let pts = b.points.unwrap_or(DRIFT_POINTS) as u128;
            let m = p.m_max.unwrap_or(DRIFT_M_MAX) as u128;
            pts * i(DRIFT_INNER) * (p.steps.unwrap_or(1) as u128 + m * (m + 1) / 2 + 1)
        }
        ExperimentKind::Spectral => w(SPECTRAL_OUTER) * i(SPECTRAL_INNER) * n,
        ExperimentKind::Tailbound => {
            let ns = p.ns.clone().unwrap_or_else(|| TAIL_NS.to_vec());
            let top = ns.iter().max().copied().unwrap_or(0) + p.look_ahead.unwrap_or(TAIL_LOOK_AHEAD);
            let decay = if p.rho.is_some() { 0 } else { SPECTRAL_OUTER as u128 * SPECTRAL_INNER as u128 * n };
            w(TAIL_OUTER) * i(TAIL_INNER) * top as u128 + decay
        }
        ExperimentKind::ThreeModes => {
            let path = p.path_steps.unwrap_or(MODES_PATH) as u128;
            let chains = if matches!(cfg.space, SpaceSpec::Torus) {
                0
            } else {
                p.chains.unwrap_or(MODES_CHAINS) as u128 * p.chain_steps.unwrap_or(path as usize) as u128 * 11 / 10
            };
            w(MODES_WALKERS) * n + path + chains
        }
    }
}

const DRIFT_POINTS: usize = 100;
const DRIFT_INNER: usize = 1000;
const DRIFT_M_MAX: usize = 4;
const SPECTRAL_OUTER: usize = 4000;
const SPECTRAL_INNER: usize = 100;
const REFERENCE: usize = 20_000;
const TAIL_OUTER: usize = 1000;
const TAIL_INNER: usize = 10_000;
const TAIL_NS: [usize; 2] = [10, 20];
const TAIL_LOOK_AHEAD: usize = 2;
const MODES_WALKERS: usize = 10_000;
const MODES_PATH: usize = 100_000;
const MODES_CHAINS: usize = 8;
const MODES_REFERENCE: usize = 1_000_000;

pub fn execute(cfg: &ExperimentConfig) -> Result<Run, RunError> {
    let space = build_space(&cfg.space)?;
    let key = SeedKey::new(cfg.seed);
    match cfg.experiment {
        ExperimentKind::Walk => walk(cfg, &space, key),
        ExperimentKind::Stationarity => stationarity(cfg, &space, key),
        ExperimentKind::Drift => drift(cfg, &space, key),
        ExperimentKind::Spectral => spectral(cfg, &space, key),
        ExperimentKind::Tailbound => tailbound(cfg, &space, key),
        ExperimentKind::ThreeModes => three_modes(cfg, &space, key),
    }
}

fn checks(items: &[(&str, bool)]) -> BTreeMap<String, bool> {
    items.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn walk(cfg: &ExperimentConfig, space: &Space, key: SeedKey) -> Result<Run, RunError> {
    let n = cfg.budget.n;
    let obs = run_walk(&cfg.dist, &space.base_point(), n, key.named("walk"))?;
    let exps = cfg.params.v_exponents.clone().unwrap_or_default();
    let fs = exps
        .iter()
        .map(|&s| DriftFunction::systole_power(s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut header = vec!["step", "systole", "second_min", "shape_re", "shape_im", "code_hash"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend(exps.iter().map(|s| format!("V_systole^-{s}")));
    let mut table = Table { header, rows: Vec::with_capacity(n) };
    for (i, o) in obs.iter().enumerate() {
        let mut r = vec![
            i.to_string(),
            num(o.systole),
            num(o.second_min),
            num(o.shape_re),
            num(o.shape_im),
            o.code_hash.to_string(),
        ];
        r.extend(fs.iter().map(|f| num(f.value_obs(o))));
        table.rows.push(r);
    }
    let escape = matches!(space, Space::Torus).then(|| torus_escape(&obs));
    let recurrence = if n >= 10_000 {
        Some(recurrence_statistic(&obs, &DriftFunction::systole_power(1.0)?, &RECURRENCE_GRID)?)
    } else {
        None
    };
    Ok(Run {
        verdict: Verdict::Informational,
        checks: BTreeMap::new(),
        payload: json!({
            "records": obs.len(),
            "final": obs.last(),
            "anecdotal": true,
            "escape": escape,
            "recurrence": recurrence,
        }),
        table: Some(table),
    })
}

fn stationarity(cfg: &ExperimentConfig, space: &Space, key: SeedKey) -> Result<Run, RunError> {
    if !space.has_reference() {
        return Err(ergwalk_core::Error::Precondition(format!(
            "stationarity needs a closed-form reference sampler; `{}` has none",
            space.tag()
        ))
        .into());
    }
    let tol = cfg.params.tolerance.unwrap_or(0.02);
    let r = stationarity_test(&cfg.dist, cfg.budget.n, ShapeLaw::HyperbolicArea, key.named("reference"))?;
    let c = stationarity_test(&cfg.dist, cfg.budget.n, ShapeLaw::InverseY, key.named("control"))?;
    let ch = checks(&[
        ("reference_stationary", r.systole.statistic < tol),
        ("control_rejected", c.systole.statistic > 0.05),
    ]);
    Ok(Run {
        verdict: Verdict::from_checks(&ch),
        checks: ch,
        payload: json!({ "tolerance": tol, "reference": r, "control": c }),
        table: None,
    })
}

fn drift(cfg: &ExperimentConfig, space: &Space, key: SeedKey) -> Result<Run, RunError> {
    let p = &cfg.params;
    let s = p.s.unwrap_or(0.5);
    let f = DriftFunction::systole_power(s)?;
    let f_max = p.f_max.unwrap_or(1e3);
    let points_n = cfg.budget.points.unwrap_or(DRIFT_POINTS);
    let inner = cfg.budget.inner.unwrap_or(DRIFT_INNER);
    let steps = p.steps.unwrap_or(1);
    let points = spanning_points(space, f_max.powf(-1.0 / s), points_n, key.named("points"))?;
    let est = verify_drift(&f, &cfg.dist, &points, steps, inner, key.named("verify"))?;
    let mut ch = vec![("drift_holds", est.holds)];
    let mut table = Table::new(&["m", "alpha_hat", "ci", "short_excursion"]);
    let mut horizon = Value::Null;
    let mut composed = Value::Null;
    if p.compose.unwrap_or(true) {
        let budget = HorizonBudget {
            points: &points,
            n_inner: inner,
            t0: p.t0.unwrap_or(0.5),
            excursion_samples: 20_000,
        };
        let scan = contraction_scan(
            &f,
            &cfg.dist,
            p.alpha_target.unwrap_or(0.9),
            p.m_max.unwrap_or(DRIFT_M_MAX),
            &budget,
            key.named("horizon"),
        )?;
        for r in &scan.rows {
            table.rows.push(vec![r.m.to_string(), num(r.alpha_hat), num(r.ci), num(r.short_excursion)]);
        }
        ch.push(("horizon_found", scan.m.is_some()));
        if let (Some(m), Some(e)) = (scan.m, &scan.estimate) {
            let lyap = top_lyapunov_estimate(&cfg.dist, 2000, 16, key.named("lyapunov"))?;
            let delta = p.delta.unwrap_or_else(|| default_delta(s, lyap.value));
            let v = compose_v(&f, &cfg.dist, m, e.alpha_upper(), delta)?;
            let ve = verify_drift(&v, &cfg.dist, &points, 1, inner, key.named("composed"))?;
            let bound = v.promised_factor() + 2.0 * ve.ci;
            ch.push(("composed_contracts", ve.alpha_hat <= bound));
            composed = json!({
                "m": m,
                "alpha": e.alpha_upper(),
                "delta": delta,
                "lyapunov": lyap,
                "promised_factor": v.promised_factor(),
                "bound": bound,
                "estimate": ve,
            });
        }
        horizon = serde_json::to_value(&scan)?;
    }
    let ch = checks(&ch);
    Ok(Run {
        verdict: Verdict::from_checks(&ch),
        checks: ch,
        payload: json!({ "drift": est, "horizon": horizon, "composed": composed }),
        table: Some(table),
    })
}

/// Points standing in for the reference measure: exact draws on the
/// torus, a thinned long chain otherwise.
fn reference_sample(
    space: &Space,
    dist: &StepDistribution,
    n: usize,
    key: SeedKey,
) -> Result<(Vec<Point>, &'static str), RunError> {
    if space.has_reference() {
        return Ok((reference_points(space, n, key)?, "exact"));
    }
    const BURN: usize = 1000;
    const THIN: usize = 10;
    let mut rng = key.named("chain").rng();
    let mut x = space.base_point();
    let mut out = Vec::with_capacity(n);
    let mut step = 0usize;
    while out.len() < n {
        x = x.act(&dist.sample_step(&mut rng))?;
        step += 1;
        if step > BURN && step % THIN == 0 {
            out.push(x.clone());
        }
    }
    Ok((out, "chain"))
}

fn centred(
    cfg: &ExperimentConfig,
    space: &Space,
    key: SeedKey,
) -> Result<(CenteredObservable, &'static str), RunError> {
    let name = cfg.params.observable.clone().unwrap_or_else(|| "min(systole,1)^1".into());
    let dict = ObservableDictionary::standard();
    let obs = dict
        .members
        .iter()
        .find(|m| m.name == name)
        .cloned()
        .ok_or_else(|| ConfigError {
            line: None,
            msg: format!("params.observable `{name}` is not one of: {}", dict.names().join(", ")),
        })?;
    let (refs, kind) = reference_sample(space, &cfg.dist, cfg.params.reference.unwrap_or(REFERENCE), key)?;
    Ok((centered_observable(obs, &refs)?, kind))
}

fn spectral(cfg: &ExperimentConfig, space: &Space, key: SeedKey) -> Result<Run, RunError> {
    let (f, kind) = centred(cfg, space, key.named("reference"))?;
    let outer_n = cfg.budget.walkers.unwrap_or(SPECTRAL_OUTER);
    let (outer, _) = reference_sample(space, &cfg.dist, outer_n, key.named("outer"))?;
    let d = decay_estimate(
        &f,
        &cfg.dist,
        &outer,
        cfg.budget.n,
        cfg.budget.inner.unwrap_or(SPECTRAL_INNER),
        key.named("decay"),
    )?;
    let mut table = Table::new(&["n", "value", "ci_lo", "ci_hi"]);
    for (n, (v, se)) in d.e2.iter().zip(&d.e2_se).enumerate() {
        table.rows.push(vec![n.to_string(), num(*v), num(v - 1.96 * se), num(v + 1.96 * se)]);
    }
    let ch = checks(&[("spectral_gap", d.gap)]);
    Ok(Run {
        verdict: Verdict::from_checks(&ch),
        checks: ch,
        payload: json!({
            "reference": kind,
            "mean": f.mean,
            "norm": f.norm,
            "decay": d,
        }),
        table: Some(table),
    })
}

fn tailbound(cfg: &ExperimentConfig, space: &Space, key: SeedKey) -> Result<Run, RunError> {
    let p = &cfg.params;
    let (f, kind) = centred(cfg, space, key.named("reference"))?;
    let (rho, decay) = match p.rho {
        Some(r) => (r, Value::Null),
        None => {
            let (outer, _) = reference_sample(space, &cfg.dist, SPECTRAL_OUTER, key.named("decay-outer"))?;
            let d = decay_estimate(&f, &cfg.dist, &outer, cfg.budget.n, SPECTRAL_INNER, key.named("decay"))?;
            (d.rho_hat, serde_json::to_value(&d)?)
        }
    };
    let (outer, _) = reference_sample(space, &cfg.dist, cfg.budget.walkers.unwrap_or(TAIL_OUTER), key.named("outer"))?;
    let tcfg = TailBoundConfig {
        ns: p.ns.clone().unwrap_or_else(|| TAIL_NS.to_vec()),
        alpha: p.alpha,
        look_ahead: p.look_ahead.unwrap_or(TAIL_LOOK_AHEAD),
        n_inner: cfg.budget.inner.unwrap_or(TAIL_INNER),
    };
    let r = tail_bound_check(&f, &cfg.dist, &outer, rho, &tcfg, key.named("tail"))?;
    let mut table = Table::new(&["n", "budget", "flagged_fraction", "sigma", "vacuous"]);
    let mut ch = Vec::new();
    for row in &r.rows {
        table.rows.push(vec![
            row.n.to_string(),
            num(row.budget),
            num(row.flagged_fraction),
            num(row.sigma),
            row.vacuous.to_string(),
        ]);
        if !row.vacuous {
            ch.push((format!("within_budget_n{}", row.n), row.pass));
        }
    }
    let ch: BTreeMap<String, bool> = ch.into_iter().collect();
    let verdict = if ch.is_empty() {
        Verdict::Informational
    } else {
        Verdict::from_checks(&ch)
    };
    let labels: Vec<Value> = r
        .rows
        .iter()
        .map(|row| json!({ "n": row.n, "status": if row.vacuous { "vacuous" } else if row.pass { "pass" } else { "fail" } }))
        .collect();
    Ok(Run {
        verdict,
        checks: ch,
        payload: json!({
            "reference": kind,
            "mean": f.mean,
            "norm": f.norm,
            "decay": decay,
            "tail": r,
            "labels": labels,
        }),
        table: Some(table),
    })
}

fn three_modes(cfg: &ExperimentConfig, space: &Space, key: SeedKey) -> Result<Run, RunError> {
    let p = &cfg.params;
    let dict = ObservableDictionary::standard();
    let path_steps = p.path_steps.unwrap_or(MODES_PATH);
    let tol = p.tolerance.unwrap_or(0.03);
    let (reference, bootstrap) = if space.has_reference() {
        (reference_means(space, &dict, p.reference.unwrap_or(MODES_REFERENCE), key.named("reference"))?, None)
    } else {
        let b = bootstrap_reference(
            &dict,
            &cfg.dist,
            &space.base_point(),
            p.chains.unwrap_or(MODES_CHAINS),
            p.chain_steps.unwrap_or(path_steps),
            key.named("bootstrap"),
        )?;
        (b.pooled.clone(), Some(b))
    };
    let mcfg = ThreeModesConfig {
        n: cfg.budget.n,
        walkers: cfg.budget.walkers.unwrap_or(MODES_WALKERS),
        path_steps,
        burn_in: p.burn_in.unwrap_or(path_steps / 10),
    };
    let r = three_modes_report(space, &dict, &cfg.dist, &reference, bootstrap.as_ref(), &mcfg, key)?;
    let path_tol = if bootstrap.is_some() { 0.05 } else { 0.02 };
    let mut ch = vec![
        ("cesaro_close", r.ensemble.cesaro_distance < tol),
        ("instant_close", r.ensemble.instant_distance < tol),
        ("instant_not_worse", r.ensemble.instant_not_worse),
        ("pathwise_close", r.pathwise.final_distance < path_tol),
        ("pathwise_monotone", r.pathwise.monotone),
        ("no_escape", r.escape.no_escape),
    ];
    if let Some(b) = &bootstrap {
        ch.push(("chains_agree", b.max_pairwise < 0.03));
    }
    let mut table = Table::new(&["n", "distance", "noise"]);
    for c in &r.pathwise.checkpoints {
        table.rows.push(vec![c.n.to_string(), num(c.distance), num(c.noise)]);
    }
    let ch = checks(&ch);
    Ok(Run {
        verdict: Verdict::from_checks(&ch),
        checks: ch,
        payload: json!({
            "dictionary": dict.names(),
            "reference": reference,
            "bootstrap": bootstrap,
            "tolerance": tol,
            "pathwise_tolerance": path_tol,
            "modes": r,
        }),
        table: Some(table),
    })
}
