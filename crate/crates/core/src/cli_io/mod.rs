//! Command dispatch and artifact emission: CSV tables, a JSON summary, a
//! manifest with the effective configuration, and optional SVG figures.

mod config;
mod svg;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub use config::{
    emit_config, parse_config, Command, ConfigError, MlSpec, ModelSpec, MomentSpec, Preset,
    RunConfig, StabilitySweep, ValidateSpec, DESK_DELTA_GRID, DESK_REFERENCE_DELTA,
    PAPER_REFERENCE_DELTA,
};
pub use svg::{render_svg, Plot, PlotKind, RenderError, Series};

use crate::clock::{grid_point, simulate_subordinator, BrownianDriver, ClockError};
use crate::csv::{Cell, CsvWriter};
use crate::experiments::{
    fit_order, moment_validation, stability_curve, strong_error, ExperimentError, ReferenceRule,
};
use crate::model::{validate_assumptions, ModelDescriptor, ModelError, ValidationGrid};
use crate::seeding::{SeedLineage, StreamTag};
use crate::special_fn::{mittag_leffler, SpecialFnError, StabilityIndex};
use crate::theta::{integrate, max_stepsize, SchemeConfig, SchemeError};

/// Version of the JSON summary and manifest layout.
pub const SCHEMA_VERSION: u32 = 1;

pub const STRONG_ERROR_HEADER: [&str; 4] = ["delta", "mse", "se", "n_eff"];
pub const CONVERGENCE_HEADER: [&str; 3] = ["slope", "intercept", "r2"];
pub const STABILITY_HEADER: [&str; 5] = ["t", "msq", "envelope", "phi", "gamma"];
pub const MOMENTS_HEADER: [&str; 5] = ["p", "t", "empirical", "formula", "zscore"];
pub const TRAJECTORY_HEADER: [&str; 5] = ["n", "tau_n", "x_st", "x_fbem", "newton_iters"];
pub const ML_HEADER: [&str; 3] = ["alpha", "z", "value"];
pub const VALIDATE_HEADER: [&str; 5] = ["assumption", "margin", "worst_t", "worst_x", "satisfied"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Special(#[from] SpecialFnError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Module the error originated in.
    pub fn module(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::Render(_) | CliError::Io { .. } => "cli_io",
            CliError::Model(_) => "model",
            CliError::Clock(_) => "stochastic_clock",
            CliError::Scheme(_) => "theta_scheme",
            CliError::Special(_) => "special_fn",
            CliError::Experiment(_) => "experiments",
        }
    }

    pub fn to_json(&self) -> Value {
        let key = match self {
            CliError::Config(e) => e.key().map(str::to_string),
            _ => None,
        };
        json!({ "error": { "module": self.module(), "message": self.to_string(), "key": key } })
    }

    /// Process exit status: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Files written by one run, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputBundle {
    pub output_dir: PathBuf,
    pub csv_paths: Vec<PathBuf>,
    pub json_summary_path: PathBuf,
    pub svg_paths: Vec<PathBuf>,
    pub manifest_path: PathBuf,
    /// Short human-readable results.
    pub messages: Vec<String>,
}

struct Emitter {
    dir: PathBuf,
    csv: Vec<PathBuf>,
    svg: Vec<PathBuf>,
    emit_svg: bool,
    messages: Vec<String>,
}

impl Emitter {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<Cell>>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let file = fs::File::create(&path).map_err(Self::io(&path))?;
        let mut w = CsvWriter::new(BufWriter::new(file), header).map_err(Self::io(&path))?;
        for r in &rows {
            w.row(r).map_err(Self::io(&path))?;
        }
        w.finish().map_err(Self::io(&path))?;
        self.csv.push(PathBuf::from(name));
        Ok(())
    }

    fn svg(&mut self, name: &str, plot: &Plot, kind: PlotKind) -> Result<(), CliError> {
        if !self.emit_svg {
            return Ok(());
        }
        let doc = render_svg(plot, kind)?;
        self.text(name, &doc)?;
        self.svg.push(PathBuf::from(name));
        Ok(())
    }

    fn text(&self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(Self::io(&path))
    }
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("summary values always serialize");
    s.push('\n');
    s
}

/// Executes the configured command and writes its artifacts.
pub fn run(config: &RunConfig) -> Result<OutputBundle, CliError> {
    config.validate()?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).map_err(Emitter::io(&dir))?;
    let mut em = Emitter {
        dir,
        csv: Vec::new(),
        svg: Vec::new(),
        emit_svg: config.emit_svg,
        messages: Vec::new(),
    };
    let alpha = StabilityIndex::new(config.alpha)?;
    let model = config.model.as_ref().map(ModelSpec::build).transpose()?;
    let report = match config.command {
        Command::Path => run_path(config, alpha, model.as_ref(), &mut em)?,
        Command::Ml => run_ml(config, alpha, &mut em)?,
        Command::Moments => run_moments(config, alpha, &mut em)?,
        Command::Convergence => run_convergence(config, alpha, need(model.as_ref()), &mut em)?,
        Command::Stability => run_stability(config, alpha, need(model.as_ref()), &mut em)?,
        Command::Validate => run_validate(config, need(model.as_ref()), &mut em)?,
    };
    let notes = config.notes();
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": config.command.name(),
        "master_seed": config.mc.master_seed,
        "notes": notes,
        "report": report,
    });
    em.text("summary.json", &json_text(&summary))?;
    em.text("config.toml", &emit_config(config))?;
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "code_version": env!("CARGO_PKG_VERSION"),
        "command": config.command.name(),
        "master_seed": config.mc.master_seed,
        "config_file": "config.toml",
        "config": emit_config(config),
        "csv": em.csv,
        "svg": em.svg,
        "summary": "summary.json",
    });
    em.text("manifest.json", &json_text(&manifest))?;
    em.messages
        .extend(notes.into_iter().map(|n| format!("note: {n}")));
    Ok(OutputBundle {
        output_dir: em.dir,
        csv_paths: em.csv,
        json_summary_path: PathBuf::from("summary.json"),
        svg_paths: em.svg,
        manifest_path: PathBuf::from("manifest.json"),
        messages: em.messages,
    })
}

fn need(model: Option<&ModelDescriptor>) -> &ModelDescriptor {
    model.expect("validated configs carry a model for this command")
}

fn run_path(
    config: &RunConfig,
    alpha: StabilityIndex,
    model: Option<&ModelDescriptor>,
    em: &mut Emitter,
) -> Result<Value, CliError> {
    let delta = config.delta.expect("path command has a step");
    let seed = config.mc.master_seed;
    let clock_seed = SeedLineage::new(seed, 0, StreamTag::Clock);
    let path = simulate_subordinator(alpha, delta, config.horizon, &mut clock_seed.rng())?;
    let file = em.dir.join("subordinator.csv");
    path.write_csv(BufWriter::new(
        fs::File::create(&file).map_err(Emitter::io(&file))?,
    ))
    .map_err(Emitter::io(&file))?;
    em.csv.push(PathBuf::from("subordinator.csv"));
    let inv = path.inverse();
    let times: Vec<f64> = (0..=1000)
        .map(|i| config.horizon * i as f64 / 1000.0)
        .collect();
    let file = em.dir.join("inverse.csv");
    inv.write_csv(
        &times,
        BufWriter::new(fs::File::create(&file).map_err(Emitter::io(&file))?),
    )
    .map_err(Emitter::io(&file))?;
    em.csv.push(PathBuf::from("inverse.csv"));
    let e_horizon = grid_point(inv.index_at(config.horizon)?, delta);
    let d_times: Vec<f64> = (0..path.values().len())
        .map(|n| grid_point(n, delta))
        .collect();
    em.svg(
        "subordinator.svg",
        &Plot {
            title: format!("{alpha}-stable subordinator", alpha = alpha.get()),
            x_label: "t".into(),
            y_label: "D_t".into(),
            series: vec![Series {
                name: "D".into(),
                x: d_times,
                y: path.values().to_vec(),
                dashed: false,
            }],
            annotation: None,
        },
        PlotKind::Line,
    )?;
    let e_values: Vec<f64> = times
        .iter()
        .map(|&t| inv.index_at(t).map(|n| grid_point(n, delta)))
        .collect::<Result<_, _>>()?;
    em.svg(
        "inverse.svg",
        &Plot {
            title: "inverse subordinator".into(),
            x_label: "t".into(),
            y_label: "E_t".into(),
            series: vec![Series {
                name: "E".into(),
                x: times.clone(),
                y: e_values,
                dashed: false,
            }],
            annotation: None,
        },
        PlotKind::Line,
    )?;
    let mut report = json!({
        "alpha": config.alpha,
        "delta": delta,
        "horizon": config.horizon,
        "n_steps": path.n_steps(),
        "e_tilde_at_horizon": e_horizon,
    });
    em.messages.push(format!(
        "E~_T = {e_horizon} after {} clock steps",
        path.n_steps()
    ));
    if let Some(model) = model {
        let noise = BrownianDriver::sample(
            delta,
            path.n_steps(),
            SeedLineage::new(seed, 0, StreamTag::Noise),
        )?;
        let scheme = SchemeConfig {
            theta: config.theta,
            delta,
            horizon: config.horizon,
            solver: config.solver,
        };
        let rec = integrate(model, &scheme, &path, &noise, true)?;
        let fbem = rec.x_fbem.as_deref();
        let rows = (0..rec.tau.len())
            .map(|n| {
                vec![
                    Cell::from(n),
                    rec.tau[n].into(),
                    rec.x_st[n].into(),
                    fbem.map(|f| f[n]).into(),
                    if n == 0 {
                        Cell::Missing
                    } else {
                        rec.newton_iters[n].into()
                    },
                ]
            })
            .collect();
        em.csv("trajectory.csv", &TRAJECTORY_HEADER, rows)?;
        em.svg(
            "trajectory.svg",
            &Plot {
                title: format!("{} under theta = {}", model.name(), config.theta),
                x_label: "tau_n".into(),
                y_label: "X".into(),
                series: vec![Series {
                    name: "x_st".into(),
                    x: rec.tau.clone(),
                    y: rec.x_st.clone(),
                    dashed: false,
                }],
                annotation: None,
            },
            PlotKind::Line,
        )?;
        report["trajectory"] = json!({
            "model": model.name(),
            "theta": config.theta,
            "final_x_st": rec.final_value(),
            "final_x_fbem": fbem.and_then(|f| f.last()),
            "bisection_steps": rec.bisection_steps,
            "warnings": rec.warnings,
        });
        for w in &rec.warnings {
            em.messages.push(format!("warning: {w}"));
        }
    }
    Ok(report)
}

fn run_ml(config: &RunConfig, alpha: StabilityIndex, em: &mut Emitter) -> Result<Value, CliError> {
    let zs = &config.ml.as_ref().expect("ml command has points").z;
    let values = zs
        .iter()
        .map(|&z| mittag_leffler(alpha, z))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = zs
        .iter()
        .zip(&values)
        .map(|(&z, &v)| vec![config.alpha.into(), z.into(), v.into()])
        .collect();
    em.csv("ml.csv", &ML_HEADER, rows)?;
    for (z, v) in zs.iter().zip(&values) {
        em.messages.push(format!("E_{}({z}) = {v}", config.alpha));
    }
    Ok(json!({ "alpha": config.alpha, "z": zs, "value": values }))
}

fn run_moments(
    config: &RunConfig,
    alpha: StabilityIndex,
    em: &mut Emitter,
) -> Result<Value, CliError> {
    let spec = config.moments.as_ref().expect("moments command has a spec");
    let delta = config.delta.expect("moments command has a step");
    let rows = moment_validation(alpha, &spec.p, &spec.t, delta, &config.mc)?;
    let cells = rows
        .iter()
        .map(|r| {
            vec![
                r.p.into(),
                r.t.into(),
                r.empirical.into(),
                r.formula.into(),
                r.zscore.into(),
            ]
        })
        .collect();
    em.csv("moments.csv", &MOMENTS_HEADER, cells)?;
    let failing = rows.iter().filter(|r| !r.within).count();
    em.messages.push(format!(
        "{} of {} moments within tolerance",
        rows.len() - failing,
        rows.len()
    ));
    Ok(json!({ "alpha": config.alpha, "delta": delta, "n_paths": config.mc.n_paths, "rows": rows }))
}

fn run_convergence(
    config: &RunConfig,
    alpha: StabilityIndex,
    model: &ModelDescriptor,
    em: &mut Emitter,
) -> Result<Value, CliError> {
    let grid = config
        .delta_grid
        .as_deref()
        .expect("convergence command has a grid");
    let reference = config.reference.unwrap_or(ReferenceRule::FineGrid {
        delta0: DESK_REFERENCE_DELTA,
    });
    let report = strong_error(
        model,
        alpha,
        config.theta,
        grid,
        config.horizon,
        reference,
        &config.mc,
        &config.solver,
    )?;
    let rows = report
        .rows
        .iter()
        .map(|r| vec![r.delta.into(), r.mse.into(), r.se.into(), r.n_eff.into()])
        .collect();
    em.csv("strong_error.csv", &STRONG_ERROR_HEADER, rows)?;
    let fit = if report.rows.len() >= 3 {
        Some(fit_order(&report)?)
    } else {
        None
    };
    match &fit {
        Some(f) => {
            em.csv(
                "convergence.csv",
                &CONVERGENCE_HEADER,
                vec![vec![f.slope.into(), f.intercept.into(), f.r_squared.into()]],
            )?;
            em.svg(
                "convergence.svg",
                &Plot::from_convergence(f),
                PlotKind::Loglog,
            )?;
            em.messages.push(format!(
                "fitted order {:.4} (r2 = {:.4})",
                f.slope, f.r_squared
            ));
            if f.excluded_rows > 0 {
                em.messages.push(format!(
                    "warning: {} zero-error rows left out of the fit",
                    f.excluded_rows
                ));
            }
        }
        None => em
            .messages
            .push("fewer than 3 step sizes; no order fitted".into()),
    }
    for r in &report.rows {
        em.messages.push(format!(
            "delta = {:e}: mse = {:e} (se {:e})",
            r.delta, r.mse, r.se
        ));
    }
    Ok(json!({
        "model": model.name(),
        "alpha": config.alpha,
        "theta": config.theta,
        "horizon": config.horizon,
        "strong_error": report,
        "convergence": fit,
    }))
}

fn run_stability(
    config: &RunConfig,
    alpha: StabilityIndex,
    model: &ModelDescriptor,
    em: &mut Emitter,
) -> Result<Value, CliError> {
    let sweep = config
        .stability
        .as_ref()
        .expect("stability command has a sweep");
    let mut runs = Vec::new();
    for &theta in &sweep.thetas {
        for &delta in &sweep.deltas {
            let n_steps = (config.horizon / delta).round() as usize;
            let curve = stability_curve(
                model,
                alpha,
                theta,
                delta,
                n_steps,
                &config.mc,
                &config.solver,
            )?;
            let phi = curve.threshold.map(|t| t.phi);
            let gamma = curve.threshold.and_then(|t| t.gamma);
            let rows = (0..curve.msq.len())
                .map(|n| {
                    vec![
                        curve.times[n].into(),
                        curve.msq[n].into(),
                        curve.envelope.as_ref().map(|e| e[n]).into(),
                        phi.into(),
                        gamma.into(),
                    ]
                })
                .collect();
            let stem = format!("stability_theta{theta}_delta{delta}");
            em.csv(&format!("{stem}.csv"), &STABILITY_HEADER, rows)?;
            if curve.msq.len() >= 2 {
                em.svg(
                    &format!("{stem}.svg"),
                    &Plot::from_stability(&curve),
                    PlotKind::Line,
                )?;
            }
            let violations = curve.envelope_violations().map(|v| v.len());
            let decay = match (curve.msq.first(), curve.msq.last()) {
                (Some(&a), Some(&b)) if a > 0.0 => Some(b / a),
                _ => None,
            };
            let verdict = if curve.divergent {
                "divergent"
            } else {
                "bounded"
            };
            em.messages.push(format!(
                "theta = {theta}, delta = {delta}: {verdict}, final/initial = {}, phi = {}",
                decay.map_or("n/a".into(), |d| format!("{d:.3e}")),
                phi.map_or("n/a".into(), |p| format!("{p:.4}")),
            ));
            runs.push(json!({
                "theta": theta,
                "delta": delta,
                "n_steps": n_steps,
                "divergent": curve.divergent,
                "final_over_initial": decay,
                "envelope_violations": violations,
                "threshold": curve.threshold,
                "theory_stable": curve.threshold.map(|t| t.stable),
                "truncated_at": curve.truncated_at,
                "failed_paths": curve.failed_paths,
                "curve": curve,
            }));
        }
    }
    Ok(
        json!({ "model": model.name(), "alpha": config.alpha, "horizon": config.horizon, "runs": runs }),
    )
}

fn run_validate(
    config: &RunConfig,
    model: &ModelDescriptor,
    em: &mut Emitter,
) -> Result<Value, CliError> {
    let spec = config.validate.clone().unwrap_or_default();
    let grid = ValidationGrid {
        horizon: config.horizon,
        x_max: spec.x_max,
        n_t: spec.n_t,
        n_x: spec.n_x,
    };
    let report = validate_assumptions(model, &grid, &spec.assumptions)?;
    let rows = report
        .checks
        .iter()
        .map(|c| {
            vec![
                Cell::Text(c.assumption.name()),
                c.margin.into(),
                c.worst_t.into(),
                c.worst_x.into(),
                Cell::Int(u64::from(c.satisfied)),
            ]
        })
        .collect();
    em.csv("validate.csv", &VALIDATE_HEADER, rows)?;
    for c in &report.checks {
        let status = if c.satisfied { "ok" } else { "VIOLATED" };
        em.messages.push(format!(
            "{}: {status} (margin {:.3e} at t = {}, x = {})",
            c.assumption, c.margin, c.worst_t, c.worst_x
        ));
    }
    let delta_star = match max_stepsize(model, config.theta) {
        Ok(d) => Some(d),
        Err(SchemeError::MissingConstant(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(json!({ "validation": report, "theta": config.theta, "delta_star": delta_star }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_config(command: Command) -> (tempfile::TempDir, RunConfig) {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::default_for(command);
        c.output_dir = dir.path().to_path_buf();
        c.mc.n_paths = 20;
        (dir, c)
    }

    #[test]
    fn ml_reduces_to_exponential() {
        let (_d, mut c) = temp_config(Command::Ml);
        c.alpha = 1.0;
        c.ml = Some(MlSpec { z: vec![-2.0] });
        let out = run(&c).unwrap();
        let v: f64 = out.messages[0].rsplit(' ').next().unwrap().parse().unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-12, "{}", out.messages[0]);
    }

    #[test]
    fn every_command_writes_its_headers() {
        let expect: [(Command, &str, &[&str]); 6] = [
            (Command::Path, "trajectory.csv", &TRAJECTORY_HEADER),
            (Command::Ml, "ml.csv", &ML_HEADER),
            (Command::Moments, "moments.csv", &MOMENTS_HEADER),
            (
                Command::Convergence,
                "strong_error.csv",
                &STRONG_ERROR_HEADER,
            ),
            (
                Command::Stability,
                "stability_theta1_delta2.csv",
                &STABILITY_HEADER,
            ),
            (Command::Validate, "validate.csv", &VALIDATE_HEADER),
        ];
        for (cmd, file, header) in expect {
            let (dir, mut c) = temp_config(cmd);
            if cmd == Command::Path {
                c.delta = Some(1e-2);
            }
            if cmd == Command::Stability {
                c.horizon = 10.0;
            }
            c.emit_svg = true;
            let out = run(&c).unwrap();
            let text = fs::read_to_string(dir.path().join(file)).unwrap();
            assert_eq!(text.lines().next().unwrap(), header.join(","), "{cmd:?}");
            assert!(out.csv_paths.contains(&PathBuf::from(file)));
            let summary: Value =
                serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
                    .unwrap();
            assert_eq!(summary["schema_version"], 1);
        }
    }

    #[test]
    fn manifest_config_reproduces_outputs() {
        let (dir, mut c) = temp_config(Command::Convergence);
        c.delta_grid = Some(vec![2e-2, 1e-2, 5e-3]);
        c.reference = Some(ReferenceRule::ClosedForm { clock_delta: 1e-3 });
        run(&c).unwrap();
        let manifest: Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        let mut again = parse_config(manifest["config"].as_str().unwrap()).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        again.output_dir = dir2.path().to_path_buf();
        again.mc.max_concurrency = Some(2);
        run(&again).unwrap();
        for f in ["strong_error.csv", "convergence.csv", "summary.json"] {
            assert_eq!(
                fs::read(dir.path().join(f)).unwrap(),
                fs::read(dir2.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn errors_carry_module_and_key() {
        let e = CliError::from(parse_config("command = \"ml\"\nalpha = 0.0\n").unwrap_err());
        let j = e.to_json();
        assert_eq!(j["error"]["module"], "cli_io");
        assert_eq!(j["error"]["key"], "alpha");
        assert_eq!(e.exit_code(), 2);
    }
}
