//! `grazing`: batch front end for grazing-core.

mod scenario;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use grazing_core::conditions::validate_conditions;
use grazing_core::continuation::{analyze_cycle, bifurcation_scan, find_periodic, generating_seed, pinned_coordinate, Seed};
use grazing_core::export;
use grazing_core::floquet::{monodromy, stability_verdict, DEFAULT_UNIT_TOL};
use grazing_core::graze::{axial_on, classify_point, transversality, Side};
use grazing_core::linearize::assemble_branches;
use grazing_core::{builtin_system, simulate, simulate_backward, Error, ErrorKind, Model, StateVec, SystemDef};

use scenario::Scenario;

#[derive(Parser)]
#[command(name = "grazing", version, about = "Impulsive systems with grazing periodic orbits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Seed for sampled checks.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Multiplies every integration and Newton tolerance.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate from `initial_state` over `[t0, t_end]`.
    Simulate(Common),
    /// Classify `initial_state` as a surface point.
    Classify(Common),
    /// Jump matrices of every variational branch of the cycle.
    Linearize(Common),
    /// Monodromy, multipliers and stability verdict of the cycle.
    Floquet(Common),
    /// Newton continuation of the cycle at `mu`.
    Continue(Common),
    /// Periodic orbits over `mu_grid`.
    Bifurcate(Common),
    /// Sampled checks of the standing conditions.
    Validate(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Classify(_) => "classify",
            Command::Linearize(_) => "linearize",
            Command::Floquet(_) => "floquet",
            Command::Continue(_) => "continue",
            Command::Bifurcate(_) => "bifurcate",
            Command::Validate(_) => "validate",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c)
            | Command::Classify(c)
            | Command::Linearize(c)
            | Command::Floquet(c)
            | Command::Continue(c)
            | Command::Bifurcate(c)
            | Command::Validate(c) => c,
        }
    }
}

struct Run<'a> {
    common: &'a Common,
    scenario: Scenario,
    model: Model,
    written: Vec<String>,
}

impl Run<'_> {
    fn sys(&self) -> SystemDef {
        self.model.at(self.scenario.mu)
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> anyhow::Result<()> {
        let path = self.common.out.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.common.out).context("creating temporary output")?;
        {
            let mut w = std::io::BufWriter::new(tmp.as_file_mut());
            body(&mut w)?;
            w.flush()?;
        }
        tmp.persist(&path).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        self.write(name, |w| export::write_json(w, value))
    }

    fn state(&self, what: &str) -> anyhow::Result<StateVec> {
        let x = self.scenario.initial_state.clone().ok_or_else(|| Error::Invalid(format!("{what} needs initial_state")))?;
        let dim = self.sys().dim;
        if x.len() != dim {
            return Err(Error::Invalid(format!("initial_state has {} entries, system dimension is {dim}", x.len())).into());
        }
        Ok(StateVec::from_vec(x))
    }

    fn cycle(&self, sys: &SystemDef) -> anyhow::Result<(StateVec, f64, Option<usize>)> {
        if let Some(c) = &self.scenario.cycle {
            if c.zeta.len() != sys.dim {
                return Err(Error::Invalid(format!("cycle zeta has {} entries, system dimension is {}", c.zeta.len(), sys.dim)).into());
            }
            return Ok((StateVec::from_vec(c.zeta.clone()), c.period, c.fixed_coordinate.map(|j| j - 1)));
        }
        let known = self.model.base().meta.cycles.first().ok_or_else(|| Error::Invalid(format!("{} has no known cycle; give \"cycle\"", sys.name())))?;
        Ok((known.zeta.clone(), known.period, None))
    }
}

fn simulate_cmd(run: &mut Run) -> anyhow::Result<()> {
    let sys = run.sys();
    let x0 = run.state("simulate")?;
    let t_end = run.scenario.t_end.ok_or_else(|| Error::Invalid("simulate needs t_end".into()))?;
    let sim = run.scenario.sim(run.common.tol_scale);
    let tr = if run.scenario.backward || t_end < run.scenario.t0 {
        simulate_backward(&sys, &x0, run.scenario.t0, t_end, &sim)?
    } else {
        simulate(&sys, &x0, run.scenario.t0, t_end, &sim)?
    };
    match run.common.format {
        Format::Csv => {
            run.write("trajectory.csv", |w| export::write_trajectory_csv(w, &tr))?;
            run.write("events.csv", |w| export::write_events_csv(w, &tr))?;
        }
        Format::Json => {
            let nodes: Vec<_> = tr.arcs.iter().enumerate().flat_map(|(k, a)| a.nodes().into_iter().map(move |(t, x)| (t, x, k))).collect();
            let doc = json!({
                "system": sys.name(),
                "direction": tr.direction,
                "t0": tr.t0,
                "t1": tr.t1,
                "final_state": tr.final_state().as_slice(),
                "nodes": nodes.iter().map(|(t, x, k)| json!({"t": t, "x": x.as_slice(), "arc_index": k})).collect::<Vec<_>>(),
                "events": tr.events,
            });
            run.write_json("trajectory.json", &doc)?;
        }
    }
    Ok(())
}

fn classify_cmd(run: &mut Run) -> anyhow::Result<()> {
    let sys = run.sys();
    let x = run.state("classify")?;
    let sim = run.scenario.sim(run.common.tol_scale);
    let side = if run.scenario.backward { Side::Backward } else { Side::Forward };
    let (index, kind) = classify_point(&sys, &x, side, &sim)?;
    let ax = axial_on(&sys, index, &x, &sim);
    let doc = json!({
        "system": sys.name(),
        "point": x.as_slice(),
        "surface": sys.patch(index).label,
        "type": kind.as_str(),
        "inner_product": transversality(&sys, index, &x, side),
        "axial": ax.axial,
        "zero_coords": ax.surface_zero_coords,
        "image_zero_coords": ax.image_zero_coords,
    });
    match run.common.format {
        Format::Json => run.write_json("classification.json", &doc),
        Format::Csv => run.write("classification.csv", |w| {
            writeln!(w, "surface,type,axial,inner_product")?;
            writeln!(w, "{},{},{},{}", sys.patch(index).label, kind.as_str(), ax.axial, export::fmt_f64(transversality(&sys, index, &x, side)))
        }),
    }
}

fn linearize_cmd(run: &mut Run) -> anyhow::Result<()> {
    let sys = run.sys();
    let (zeta, period, _) = run.cycle(&sys)?;
    let branches = assemble_branches(&sys, &zeta, period, &run.scenario.lin(run.common.tol_scale))?;
    let report = export::linearization_report(&branches);
    run.write_json("linearization.json", &report)
}

fn floquet_cmd(run: &mut Run) -> anyhow::Result<()> {
    let sys = run.sys();
    let (zeta, period, _) = run.cycle(&sys)?;
    let lin = run.scenario.lin(run.common.tol_scale);
    let branches = assemble_branches(&sys, &zeta, period, &lin)?;
    let ctl = lin.sim.control();
    let results = branches.iter().map(|b| monodromy(b, &ctl)).collect::<grazing_core::Result<Vec<_>>>()?;
    let verdict = stability_verdict(&results, run.scenario.unit_tol.unwrap_or(DEFAULT_UNIT_TOL));
    let report = export::floquet_report(sys.name(), &results, verdict);
    match run.common.format {
        Format::Json => run.write_json("floquet.json", &report),
        Format::Csv => run.write("floquet.csv", |w| {
            writeln!(w, "branch_id,label,rho_re,rho_im,modulus,verdict")?;
            for (b, v) in report.branches.iter().zip(&report.verdict.branches) {
                for m in &v.multipliers {
                    let verdict = serde_json::to_value(v.verdict).ok().and_then(|x| x.as_str().map(str::to_string)).unwrap_or_default();
                    writeln!(w, "{},{},{},{},{},{}", b.branch_id, b.label, export::fmt_f64(m.re), export::fmt_f64(m.im), export::fmt_f64(m.modulus), verdict)?;
                }
            }
            Ok(())
        }),
    }
}

fn continue_cmd(run: &mut Run) -> anyhow::Result<()> {
    let sys = run.sys();
    let newton = run.scenario.newton(run.common.tol_scale);
    let seed = match &run.scenario.cycle {
        Some(c) => {
            let zeta = StateVec::from_vec(c.zeta.clone());
            let j = c.fixed_coordinate.map(|j| j - 1).unwrap_or_else(|| pinned_coordinate(&sys, &zeta));
            Seed { label: "scenario".into(), period: c.period, zeta, fixed_index: j }
        }
        None => {
            let known = run.model.base().meta.cycles.first().ok_or_else(|| Error::Invalid(format!("{} has no known cycle; give \"cycle\"", sys.name())))?;
            generating_seed(&sys, known, &newton.sim)?
        }
    };
    let mut orbit = find_periodic(&sys, run.scenario.mu, &seed, &newton)?;
    let scan = run.scenario.scan(run.common.tol_scale);
    match analyze_cycle(&sys, &orbit.zeta, orbit.period, orbit.fixed_index, &scan.lin, scan.unit_tol) {
        Ok(rep) => orbit.stability = Some(rep.verdict),
        Err(e) => orbit.notes.push(format!("stability unavailable: {e}")),
    }
    run.write_json("orbit.json", &orbit)
}

fn bifurcate_cmd(run: &mut Run) -> anyhow::Result<()> {
    let grid = run.scenario.mu_grid.clone().ok_or_else(|| Error::Invalid("bifurcate needs mu_grid".into()))?;
    let family = run.model.family();
    let cells = bifurcation_scan(&family, &grid, &run.scenario.scan(run.common.tol_scale))?;
    let dim = family.base.dim;
    match run.common.format {
        Format::Csv => run.write("bifurcation.csv", |w| export::write_bifurcation_csv(w, &cells, dim)),
        Format::Json => run.write_json("bifurcation.json", &cells),
    }
}

fn validate_cmd(run: &mut Run) -> anyhow::Result<()> {
    let sys = run.sys();
    let report = validate_conditions(&sys, &run.scenario.samples(run.common.seed), &run.scenario.sim(run.common.tol_scale))?;
    run.write_json("conditions.json", &report)?;
    if let Some(c) = report.conditions.iter().find(|c| c.status.is_fail()) {
        return Err(anyhow!(ConditionFailed(c.id.clone())));
    }
    Ok(())
}

#[derive(Debug)]
struct ConditionFailed(String);

impl std::fmt::Display for ConditionFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "condition {} fails on samples (see conditions.json)", self.0)
    }
}

impl std::error::Error for ConditionFailed {}

fn manifest(run: &Run, command: &str, input: &[u8]) -> serde_json::Value {
    json!({
        "tool": "grazing",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "system": run.scenario.system,
        "mu": run.scenario.mu,
        "scenario_sha256": hex::encode(Sha256::digest(input)),
        "seed": run.common.seed,
        "tol_scale": run.common.tol_scale,
        "tolerances": run.scenario.sim(run.common.tol_scale),
        "outputs": run.written,
    })
}

fn execute(command: &Command) -> anyhow::Result<()> {
    let common = command.common();
    if !(common.tol_scale.is_finite() && common.tol_scale > 0.0) {
        return Err(Error::Invalid(format!("--tol-scale must be positive, got {}", common.tol_scale)).into());
    }
    let (scenario, bytes) = scenario::load(&common.scenario)?;
    let model = builtin_system(&scenario.system)?;
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    let mut run = Run { common, scenario, model, written: Vec::new() };
    let outcome = match command {
        Command::Simulate(_) => simulate_cmd(&mut run),
        Command::Classify(_) => classify_cmd(&mut run),
        Command::Linearize(_) => linearize_cmd(&mut run),
        Command::Floquet(_) => floquet_cmd(&mut run),
        Command::Continue(_) => continue_cmd(&mut run),
        Command::Bifurcate(_) => bifurcate_cmd(&mut run),
        Command::Validate(_) => validate_cmd(&mut run),
    };
    let m = manifest(&run, command.name(), &bytes);
    run.write_json("manifest.json", &m)?;
    outcome
}

fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    if err.downcast_ref::<ConditionFailed>().is_some() {
        return (4, "condition");
    }
    match err.downcast_ref::<Error>().map(Error::kind) {
        Some(ErrorKind::Validation) => (2, "validation"),
        Some(ErrorKind::Numeric) => (3, "numeric"),
        Some(ErrorKind::Condition) => (4, "condition"),
        None => (1, "io"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = exit_code(&err);
            let diag = json!({
                "error": kind,
                "command": cli.command.name(),
                "out": cli.command.common().out.display().to_string(),
                "message": format!("{err:#}"),
            });
            eprintln!("{diag}");
            ExitCode::from(code)
        }
    }
}
