use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use fiberfold::config::{preset_names, preset_source, Instance, Resolved, RunConfig};
use fiberfold::Error;

mod commands;
mod output;
mod svg;

#[derive(Parser)]
#[command(name = "fiberfold", version, about = "Fibers, heights and folds of semilinear Dirichlet problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues and the gap condition.
    Eigs(Common),
    /// Trace the fiber through z0 (P g by default).
    Fiber(Common),
    /// Solve F(u) = g by locating crossings of the height.
    Preimages(Common),
    /// Classify critical points and check the eigenvalue link.
    Classify(Common),
    /// Preimage counts over a range of heights.
    Sweep(Common),
    /// Behaviour of fibers as |t| grows.
    Asymptotics(Common),
    /// Compare the fiber method with Newton multistart.
    Oracle(Common),
    /// List the shipped presets or print one.
    Presets {
        /// Preset to print.
        name: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Shipped preset to start from.
    #[arg(long)]
    preset: Option<String>,
    /// TOML or JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Target height s.
    #[arg(long, allow_hyphen_values = true)]
    height: Option<f64>,
    /// Oracle seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Oracle start count.
    #[arg(long)]
    starts: Option<usize>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Unsupported(_) | Error::Io(_) | Error::InvalidDomain(_) | Error::InvalidNonlinearity(_) => 2,
        Error::GapViolated { .. } | Error::MultipleInteraction { .. } => 3,
        Error::NonConvergence { .. } | Error::IllConditioned { .. } | Error::FucikLocationFailed(_) => 4,
        _ => 5,
    }
}

fn load(common: &Common) -> fiberfold::Result<Resolved> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if common.preset.is_some() {
        cfg.preset = common.preset.clone();
    }
    if cfg.preset.is_none() && cfg.problem.is_none() {
        return Err(Error::Config("give --preset or --config".into()));
    }
    let mut r = cfg.resolve()?;
    if let Some(h) = common.height {
        r.preimages.height = Some(h);
    }
    if let Some(s) = common.seed {
        r.oracle.seed = s;
    }
    if let Some(n) = common.starts {
        r.oracle.starts = n;
    }
    if common.svg {
        r.output.svg = true;
    }
    if let Some(o) = &common.out {
        r.output.dir = o.display().to_string();
    }
    r.validate()?;
    Ok(r)
}

fn header(name: &str, cfg: &Resolved, inst: Option<&Instance>) -> Value {
    let mut config = serde_json::to_value(cfg).unwrap_or(Value::Null);
    // where artifacts go does not change what is computed
    if let Some(out) = config.get_mut("output").and_then(Value::as_object_mut) {
        out.remove("dir");
    }
    let problem = match inst {
        Some(Instance::Problem(ps)) => ps.describe(),
        Some(Instance::Toy(t)) => json!({ "kind": format!("{:?}", t.kind).to_lowercase(), "dim": t.dim }),
        None => Value::Null,
    };
    json!({
        "tool": "fiberfold",
        "version": env!("CARGO_PKG_VERSION"),
        "command": name,
        "config_hash": output::config_hash(&config),
        "config": config,
        "problem": problem,
        "tolerances": { "solver": cfg.solver, "analysis": cfg.analysis, "oracle_match": cfg.oracle.match_tol },
    })
}

fn write_report(dir: &Path, name: &str, mut head: Value, body: Value, failed: bool, error: Option<String>) -> std::io::Result<()> {
    head["failed"] = json!(failed);
    head["error"] = json!(error);
    head["report"] = body;
    output::write_atomic(dir, &format!("{name}.json"), &output::to_json(&head)).map(|_| ())
}

fn run(name: &str, common: &Common, f: fn(&Resolved, &Instance) -> fiberfold::Result<commands::Outcome>) -> u8 {
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: thread cap not applied: {e}");
        }
    }
    let cfg = match load(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let dir = PathBuf::from(&cfg.output.dir);
    let inst = cfg.problem.build(&cfg.solve_options());
    let result = inst.as_ref().map_err(Clone::clone).and_then(|i| f(&cfg, i));
    let head = header(name, &cfg, inst.as_ref().ok());
    match result {
        Ok(out) => {
            for line in &out.lines {
                println!("{line}");
            }
            let mut written = write_report(&dir, name, head, out.report, !out.ok, None);
            for (file, contents) in &out.files {
                if written.is_ok() {
                    written = output::write_atomic(&dir, file, contents).map(|_| ());
                }
            }
            if let Err(e) = written {
                eprintln!("error: writing artifacts to {}: {e}", dir.display());
                return 2;
            }
            println!("artifacts written to {}", dir.display());
            if out.ok {
                0
            } else {
                eprintln!("invariant check failed (see {name}.json)");
                5
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Err(w) = write_report(&dir, name, head, Value::Null, true, Some(e.to_string())) {
                eprintln!("error: writing partial report: {w}");
            }
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli) -> u8 {
    match &cli.command {
        Command::Eigs(c) => run("eigs", c, commands::eigs),
        Command::Fiber(c) => run("fiber", c, commands::fiber),
        Command::Preimages(c) => run("preimages", c, commands::preimages),
        Command::Classify(c) => run("classify", c, commands::classify),
        Command::Sweep(c) => run("sweep", c, commands::sweep),
        Command::Asymptotics(c) => run("asymptotics", c, commands::asymptotics),
        Command::Oracle(c) => run("oracle", c, commands::oracle),
        Command::Presets { name } => match name {
            Some(n) => match preset_source(n) {
                Ok(src) => {
                    print!("{src}");
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    2
                }
            },
            None => {
                for n in preset_names() {
                    println!("{n}");
                }
                0
            }
        },
    }
}

fn main() -> ExitCode {
    ExitCode::from(dispatch(&Cli::parse()))
}
