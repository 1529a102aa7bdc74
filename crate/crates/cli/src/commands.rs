use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use nhgeo_core::connection::{metric_defect, mixed_symmetry_defect, torsion_data, TorsionData};
use nhgeo_core::extremal::{rhs_family, rhs_limit, RhsSpec};
use nhgeo_core::hamiltonian::{compare, compare_run, CompareError, CompareReport};
use nhgeo_core::integrate::{integrate, IntegrateError, Solution, Trajectory, TrajectoryMeta};
use nhgeo_core::models::ModelSpec;
use nhgeo_core::splitting::{solve_canonical_splitting, InjectivityReport, SplitError};
use nhgeo_core::{ExtremalState, FramedGeometry, IntegratorConfig, Tensor3};
use serde::Serialize;

use crate::config::{parse_point, Format, ModelField, RunConfig};
use crate::output::{emit, json, pairs_csv, rows, trajectory_csv};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Integrate,
    Compare,
    SweepDelta,
    Split,
    Torsion,
}

impl Command {
    fn default_format(self) -> Format {
        match self {
            Self::Integrate => Format::Csv,
            _ => Format::Json,
        }
    }

    fn allows_csv(self) -> bool {
        !matches!(self, Self::Split | Self::Torsion)
    }
}

/// Command-line flags that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub model: Option<String>,
    pub point: Option<String>,
}

/// Emitted text plus a failure to report after writing it.
#[derive(Debug)]
pub struct Rendered {
    pub text: String,
    pub failure: Option<CliError>,
}

impl Rendered {
    fn ok(text: String) -> Self {
        Self { text, failure: None }
    }
}

pub fn resolve(ov: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match &ov.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &ov.model {
        cfg.model = Some(ModelField::Id(m.clone()));
    }
    if let Some(p) = &ov.point {
        cfg.point = Some(parse_point(p)?);
    }
    if let Some(o) = &ov.out {
        cfg.output.path = Some(o.clone());
    }
    if let Some(f) = ov.format {
        cfg.output.format = Some(f);
    }
    Ok(cfg)
}

fn format_for(cmd: Command, cfg: &RunConfig) -> Result<Format, CliError> {
    let ext = cfg.output.path.as_deref().and_then(Path::extension).and_then(|e| e.to_str());
    let f = cfg.output.format.unwrap_or(match ext {
        Some("json") => Format::Json,
        Some("csv") if cmd.allows_csv() => Format::Csv,
        _ => cmd.default_format(),
    });
    if f == Format::Csv && !cmd.allows_csv() {
        return Err(CliError::Config("--format csv is not available for this verb (reports are JSON)".into()));
    }
    Ok(f)
}

/// Resolves the config, runs `cmd`, writes the output, then reports any failure.
pub fn run(cmd: Command, ov: &Overrides) -> Result<(), CliError> {
    let cfg = resolve(ov)?;
    let r = render(cmd, &cfg)?;
    emit(cfg.output.path.as_deref(), &r.text)?;
    if let Some(p) = &cfg.output.path {
        info!("wrote {}", p.display());
    }
    r.failure.map_or(Ok(()), Err)
}

pub fn render(cmd: Command, cfg: &RunConfig) -> Result<Rendered, CliError> {
    let fmt = format_for(cmd, cfg)?;
    let spec = cfg.model_spec()?;
    let g = spec.build().map_err(|e| CliError::Model(e.to_string()))?;
    info!("model {} (dim {}, rank {}), config {}", spec.id(), g.dim(), g.rank_d(), &cfg.hash()[..12]);
    match cmd {
        Command::Integrate => cmd_integrate(cfg, &spec, &g, fmt),
        Command::Compare => cmd_compare(cfg, &spec, &g, fmt),
        Command::SweepDelta => cmd_sweep_delta(cfg, &spec, &g, fmt),
        Command::Split => cmd_split(cfg, &spec, &g),
        Command::Torsion => cmd_torsion(cfg, &spec, &g),
    }
}

fn numerical(e: IntegrateError) -> CliError {
    match e.last_good_time() {
        Some(t) => CliError::Numerical(format!("{e} (last good t = {t})")),
        None => CliError::Config(format!("integrator: {e}")),
    }
}

fn start(cfg: &RunConfig, spec: &ModelSpec, g: &FramedGeometry) -> Result<ExtremalState, CliError> {
    cfg.validate_integrator()?;
    let s0 = cfg.initial_state(spec, g.dim(), g.rank_d(), g.rank_q())?;
    g.frame_data(&s0.x).map_err(|e| CliError::Model(format!("at initial point: {e}")))?;
    Ok(s0)
}

fn run_delta(g: &FramedGeometry, s0: &ExtremalState, delta: f64, ic: &IntegratorConfig) -> Result<Solution, IntegrateError> {
    let (m, n) = (g.dim(), g.rank_d());
    let sol = if delta == 0.0 {
        integrate(|_, y: &[f64]| rhs_limit(&ExtremalState::from_flat(y, m, n), g).map(|d| d.to_flat()), &s0.to_flat(), ic)
    } else {
        let rs = RhsSpec::new(g, delta).map_err(|e| IntegrateError::InvalidConfig(e.to_string()))?;
        integrate(|_, y: &[f64]| rhs_family(&ExtremalState::from_flat(y, m, n), &rs).map(|d| d.to_flat()), &s0.to_flat(), ic)
    }?;
    debug!("delta {delta}: {} steps, {} rejected", sol.steps, sol.rejected);
    Ok(sol)
}

fn meta(cfg: &RunConfig, spec: &ModelSpec) -> TrajectoryMeta {
    TrajectoryMeta {
        model: spec.id(),
        method: cfg.integrator.method.as_str().into(),
        dt: cfg.integrator.dt,
        config_hash: cfg.hash(),
    }
}

#[derive(Serialize)]
struct TrajectoryJson<'a> {
    coords: &'a [String],
    delta: f64,
    #[serde(flatten)]
    trajectory: &'a Trajectory,
}

fn cmd_integrate(cfg: &RunConfig, spec: &ModelSpec, g: &FramedGeometry, fmt: Format) -> Result<Rendered, CliError> {
    let s0 = start(cfg, spec, g)?;
    let sol = run_delta(g, &s0, cfg.delta, &cfg.integrator).map_err(numerical)?;
    let traj = Trajectory::from_solution(&sol, g.dim(), g.rank_d(), meta(cfg, spec));
    Ok(Rendered::ok(match fmt {
        Format::Csv => trajectory_csv(&traj, g.coord_names(), g.rank_d(), g.rank_q()),
        Format::Json => json(&TrajectoryJson { coords: g.coord_names(), delta: cfg.delta, trajectory: &traj }),
    }))
}

#[derive(Serialize)]
struct CompareJson {
    model: String,
    config_hash: String,
    max_deviation: f64,
    per_sample: Vec<Sample>,
    speed_drift: f64,
    energy_drift: f64,
}

#[derive(Serialize)]
struct Sample {
    t: f64,
    deviation: f64,
}

fn cmd_compare(cfg: &RunConfig, spec: &ModelSpec, g: &FramedGeometry, fmt: Format) -> Result<Rendered, CliError> {
    let s0 = start(cfg, spec, g)?;
    if cfg.delta != 0.0 {
        warn!("compare always uses the delta = 0 system; ignoring delta = {}", cfg.delta);
    }
    let rep: CompareReport = compare_run(g, &s0, &cfg.integrator).map_err(|e| match e {
        CompareError::Integrate(e) => numerical(e),
        CompareError::Geometry(e) => CliError::Model(e.to_string()),
        e @ CompareError::GridMismatch => CliError::Numerical(e.to_string()),
    })?;
    info!("max deviation {:e}, speed drift {:e}, energy drift {:e}", rep.max_deviation, rep.speed_drift, rep.energy_drift);
    Ok(Rendered::ok(match fmt {
        Format::Csv => pairs_csv(["t", "deviation"], rep.times.iter().copied().zip(rep.deviations.iter().copied())),
        Format::Json => json(&CompareJson {
            model: spec.id(),
            config_hash: cfg.hash(),
            max_deviation: rep.max_deviation,
            per_sample: rep.times.iter().zip(&rep.deviations).map(|(t, d)| Sample { t: *t, deviation: *d }).collect(),
            speed_drift: rep.speed_drift,
            energy_drift: rep.energy_drift,
        }),
    }))
}

#[derive(Serialize)]
struct SweepEntry {
    delta: f64,
    error: f64,
}

#[derive(Serialize)]
struct SweepJson {
    model: String,
    config_hash: String,
    entries: Vec<SweepEntry>,
    /// Errors strictly decrease as delta decreases.
    monotone: bool,
}

/// Sup-distance of each penalized run to the `δ = 0` run, in input order.
pub fn sweep(g: &FramedGeometry, s0: &ExtremalState, deltas: &[f64], ic: &IntegratorConfig) -> Result<Vec<f64>, CliError> {
    let base = run_delta(g, s0, 0.0, ic).map_err(numerical)?;
    let runs: Vec<Result<Solution, IntegrateError>> = std::thread::scope(|sc| {
        let hs: Vec<_> = deltas.iter().map(|d| sc.spawn(move || run_delta(g, s0, *d, ic))).collect();
        hs.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    runs.into_iter()
        .zip(deltas)
        .map(|(r, d)| {
            let sol = r.map_err(|e| match numerical(e) {
                CliError::Numerical(m) => CliError::Numerical(format!("delta = {d}: {m}")),
                other => other,
            })?;
            compare(&sol, &base, g.dim()).map_err(|e| CliError::Numerical(e.to_string()))
        })
        .collect()
}

pub fn is_monotone(deltas: &[f64], errors: &[f64]) -> bool {
    let mut v: Vec<(f64, f64)> = deltas.iter().copied().zip(errors.iter().copied()).collect();
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    v.windows(2).all(|w| w[1].1 < w[0].1 || (w[0].0 == w[1].0 && w[0].1 == w[1].1))
}

fn cmd_sweep_delta(cfg: &RunConfig, spec: &ModelSpec, g: &FramedGeometry, fmt: Format) -> Result<Rendered, CliError> {
    let s0 = start(cfg, spec, g)?;
    let deltas = cfg.deltas()?;
    let errors = sweep(g, &s0, &deltas, &cfg.integrator)?;
    let monotone = is_monotone(&deltas, &errors);
    if !monotone {
        warn!("sweep errors are not monotone in delta");
    }
    Ok(Rendered::ok(match fmt {
        Format::Csv => pairs_csv(["delta", "error"], deltas.iter().copied().zip(errors.iter().copied())),
        Format::Json => json(&SweepJson {
            model: spec.id(),
            config_hash: cfg.hash(),
            entries: deltas.iter().zip(&errors).map(|(d, e)| SweepEntry { delta: *d, error: *e }).collect(),
            monotone,
        }),
    }))
}

#[derive(Serialize)]
struct SplitJson<'a> {
    model: String,
    point: &'a [f64],
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    f: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    u_before: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    u_after: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    torsion_norm: Option<f64>,
    report: &'a InjectivityReport,
}

fn cmd_split(cfg: &RunConfig, spec: &ModelSpec, g: &FramedGeometry) -> Result<Rendered, CliError> {
    let p = cfg.point_for(g.dim())?;
    match solve_canonical_splitting(g, &p) {
        Ok(sol) => {
            info!("canonical splitting: |U| {:e} -> {:e}", sol.u_before, sol.u_after);
            Ok(Rendered::ok(json(&SplitJson {
                model: spec.id(),
                point: &p,
                status: "ok",
                f: Some(sol.change.rows()),
                u_before: Some(sol.u_before),
                u_after: Some(sol.u_after),
                torsion_norm: Some(sol.torsion_norm),
                report: &sol.report,
            })))
        }
        Err(SplitError::NotInjective { report }) => {
            let msg = format!("torsion map not injective at {p:?} (kernel dimension {})", report.kernel_dim);
            Ok(Rendered {
                text: json(&SplitJson {
                    model: spec.id(),
                    point: &p,
                    status: "not_injective",
                    f: None,
                    u_before: None,
                    u_after: None,
                    torsion_norm: None,
                    report: &report,
                }),
                failure: Some(CliError::Numerical(msg)),
            })
        }
        Err(e) => Err(CliError::Model(e.to_string())),
    }
}

#[derive(Serialize)]
struct TorsionJson<'a> {
    model: String,
    point: &'a [f64],
    coords: &'a [String],
    n: usize,
    l: usize,
    structure: &'a Tensor3,
    gram_d: Vec<Vec<f64>>,
    gram_q: Vec<Vec<f64>>,
    #[serde(flatten)]
    blocks: &'a TorsionData,
    metric_defect: f64,
    mixed_symmetry_defect: f64,
}

fn cmd_torsion(cfg: &RunConfig, spec: &ModelSpec, g: &FramedGeometry) -> Result<Rendered, CliError> {
    let p = cfg.point_for(g.dim())?;
    let data = g.frame_data(&p).map_err(|e| CliError::Model(e.to_string()))?;
    let td = torsion_data(&data);
    Ok(Rendered::ok(json(&TorsionJson {
        model: spec.id(),
        point: &p,
        coords: g.coord_names(),
        n: data.n,
        l: data.l,
        structure: &data.structure,
        gram_d: rows(&data.gram_d),
        gram_q: rows(&data.gram_q),
        blocks: &td,
        metric_defect: metric_defect(&data, &td),
        mixed_symmetry_defect: mixed_symmetry_defect(&data, &td),
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_order() {
        assert!(is_monotone(&[1e-1, 1e-2, 0.0], &[3.0, 0.3, 0.0]));
        assert!(is_monotone(&[0.0, 1e-1, 1e-2], &[0.0, 3.0, 0.3]));
        assert!(!is_monotone(&[1e-1, 1e-2], &[0.3, 3.0]));
    }

    #[test]
    fn csv_rejected_for_reports() {
        let mut cfg = RunConfig { model: Some(ModelField::Id("heisenberg_a".into())), ..Default::default() };
        cfg.output.format = Some(Format::Csv);
        assert!(matches!(render(Command::Split, &cfg), Err(CliError::Config(_))));
        assert!(matches!(render(Command::Torsion, &cfg), Err(CliError::Config(_))));
    }
}
