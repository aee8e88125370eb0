use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isochron_cli::config::Command;
use isochron_cli::error::EXIT_CONFIG;
use isochron_cli::{run, CliError, RunConfig};
use serde_json::{json, Map, Value};

/// Phase reduction of stochastic limit-cycle oscillators.
#[derive(Parser)]
#[command(name = "isochron", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Locate the limit cycle and write its samples.
    FindCycle(Flags),
    /// Monodromy matrix and Floquet multipliers at phase 0.
    Floquet(Flags),
    /// Isochron gradient and Hessian along the cycle.
    Jets(Flags),
    /// Phase-diffusion coefficient sigma and frequency shift b.
    Coeffs(Flags),
    /// Monte Carlo dephasing ensemble.
    Simulate(Flags),
    /// Reference table: ensembles at several noise levels plus the limit row.
    Table1(Flags),
    /// Stuart-Landau closed-form comparison.
    Oracle(Flags),
    /// Run the command named in the config document.
    Run(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
    /// Built-in system: fhn or stuart_landau.
    #[arg(long)]
    system: Option<String>,
    /// System parameter override, e.g. --param a=0.6 (repeatable).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    n_jets: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    /// Observation time, e.g. 40T or 282.6.
    #[arg(long)]
    tobs: Option<String>,
    /// Integration step, e.g. T/2000.
    #[arg(long)]
    dt: Option<String>,
    /// Spacing of phase observations, e.g. T/16.
    #[arg(long)]
    observe_every: Option<String>,
    /// euler_maruyama (em), rk4_maruyama (rk4) or heun_stratonovich (heun).
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    beta1: Option<f64>,
    /// Count trajectories leaving the tube as exited instead of relaxing them.
    #[arg(long)]
    no_relax: bool,
    /// Number of trajectories (per row for table1).
    #[arg(long)]
    n: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv; csv adds plot-ready tables next to the JSON.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    no_cache: bool,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// table1: all five noise levels.
    #[arg(long)]
    full: bool,
    /// table1: compare against the reference values, exit 4 on mismatch.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
}

fn set(doc: &mut Value, path: &[&str], value: Value) {
    let mut cur = doc;
    for key in &path[..path.len() - 1] {
        let obj = cur.as_object_mut().expect("config is an object");
        cur = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
    }
    cur.as_object_mut().expect("config is an object").insert(path[path.len() - 1].to_string(), value);
}

fn scheme_name(s: &str) -> &str {
    match s {
        "em" => "euler_maruyama",
        "rk4" => "rk4_maruyama",
        "heun" => "heun_stratonovich",
        other => other,
    }
}

fn resolve(command: Option<Command>, flags: &Flags) -> Result<RunConfig, CliError> {
    let mut doc = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<Value>(&text).map_err(|e| CliError::config(e.to_string()))?
        }
        None => json!({}),
    };
    if !doc.is_object() {
        return Err(CliError::config("the configuration must be a JSON object"));
    }
    if let Some(c) = command {
        set(&mut doc, &["command"], json!(c));
    }
    let table1 = doc.get("command").and_then(Value::as_str) == Some("table1");

    if let Some(name) = &flags.system {
        let same = doc.pointer("/system/name").and_then(Value::as_str) == Some(name.as_str());
        if !same {
            set(&mut doc, &["system"], json!({ "name": name }));
        }
    }
    for kv in &flags.params {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::config(format!("--param expects KEY=VALUE, got `{kv}`")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        if doc.get("system").is_none() {
            set(&mut doc, &["system"], json!({ "name": "fhn" }));
        }
        set(&mut doc, &["system", "params", k], value);
    }
    if let Some(v) = flags.seed {
        set(&mut doc, &["master_seed"], json!(v));
    }
    if let Some(v) = flags.n_samples {
        set(&mut doc, &["cycle", "n_samples"], json!(v));
    }
    if let Some(v) = flags.n_jets {
        set(&mut doc, &["jets", "n"], json!(v));
    }
    if let Some(v) = flags.eps {
        set(&mut doc, &["sim", "eps"], json!(v));
    }
    if let Some(v) = &flags.tobs {
        set(&mut doc, &["sim", "t_obs"], json!(v));
    }
    if let Some(v) = &flags.dt {
        let section = if table1 { "table1" } else { "sim" };
        set(&mut doc, &[section, "dt"], json!(v));
    }
    if let Some(v) = &flags.observe_every {
        set(&mut doc, &["sim", "observe_every"], json!(v));
    }
    if let Some(v) = &flags.scheme {
        set(&mut doc, &["sim", "scheme"], json!(scheme_name(v)));
    }
    if let Some(v) = flags.beta1 {
        set(&mut doc, &["sim", "beta1"], json!(v));
    }
    if flags.no_relax {
        set(&mut doc, &["sim", "relax"], json!(false));
    }
    if let Some(v) = flags.n {
        let section = if table1 { "table1" } else { "sim" };
        set(&mut doc, &[section, "n"], json!(v));
    }
    if let Some(v) = &flags.out {
        set(&mut doc, &["output", "dir"], json!(v));
    }
    if let Some(v) = &flags.format {
        set(&mut doc, &["output", "format"], json!(v));
    }
    if let Some(v) = &flags.cache_dir {
        set(&mut doc, &["cache", "dir"], json!(v));
    }
    if flags.no_cache {
        set(&mut doc, &["cache", "enabled"], json!(false));
    }
    if let Some(v) = flags.threads {
        set(&mut doc, &["threads"], json!(v));
    }
    if flags.full {
        set(&mut doc, &["table1", "full"], json!(true));
    }
    if flags.check {
        set(&mut doc, &["table1", "check"], json!(true));
    }
    if let Some(v) = flags.omega {
        set(&mut doc, &["oracle", "omega"], json!(v));
    }
    if let Some(v) = flags.kappa {
        set(&mut doc, &["oracle", "kappa"], json!(v));
    }
    let config = RunConfig::from_value(doc)?;
    config.validate()?;
    Ok(config)
}

fn fail(err: &CliError) -> ExitCode {
    println!("{}", err.to_json());
    eprintln!("error: {err}");
    ExitCode::from(err.code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            return fail(&CliError { code: EXIT_CONFIG, kind: "usage".into(), message: message.trim().to_string() });
        }
    };
    let (command, flags) = match cli.command {
        Sub::FindCycle(f) => (Some(Command::FindCycle), f),
        Sub::Floquet(f) => (Some(Command::Floquet), f),
        Sub::Jets(f) => (Some(Command::Jets), f),
        Sub::Coeffs(f) => (Some(Command::Coeffs), f),
        Sub::Simulate(f) => (Some(Command::Simulate), f),
        Sub::Table1(f) => (Some(Command::Table1), f),
        Sub::Oracle(f) => (Some(Command::Oracle), f),
        Sub::Run(f) => (None, f),
    };
    let config = match resolve(command, &flags) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if flags.print_config {
        match serde_json::to_string_pretty(&config) {
            Ok(s) => println!("{s}"),
            Err(e) => return fail(&CliError::config(e.to_string())),
        }
        return ExitCode::SUCCESS;
    }
    if let Some(n) = config.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&CliError::config(e.to_string()));
        }
    }
    match run(&config) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => fail(&e),
    }
}
