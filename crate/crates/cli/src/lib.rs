//! The `stockflow` command line: check, run, loops, equilibrium and serve.
//!
//! Everything goes through [`run_cli`], which takes its output streams as arguments so the
//! commands can be exercised in-process.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use stockflow_client::{Client, ClientError};
use stockflow_core::analysis::{
    build_causal_graph, enumerate_loops, identify_schedules, solve_linear_equilibrium, AnalysisError, LoopReport,
};
use stockflow_core::engine::{initial_point, RunError, Series};
use stockflow_core::wire::{RunPayload, RunRequest};
use stockflow_core::{load_model, simulate, CheckedModel, ModelError, RunSpec};

/// Environment variable naming the directory searched for model files.
pub const MODEL_DIR_VAR: &str = "STOCKFLOW_MODEL_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    /// Parse, compile or units error.
    ModelError = 1,
    /// Numeric fault during a run, or no equilibrium exists.
    RuntimeFault = 2,
    /// Bad flags, bad run settings, or a missing file.
    Usage = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Parser)]
#[command(name = "stockflow", version, about = "Check, simulate and analyze stock-and-flow models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, compile and unit-check a model, then print each element's units.
    Check { model: PathBuf },
    /// Simulate a model and write the saved samples as CSV.
    Run(RunArgs),
    /// List the feedback loops at the initial operating point.
    Loops {
        model: PathBuf,
        /// Also write the causal graph as an edge list.
        #[arg(long, value_name = "FILE")]
        edges: Option<PathBuf>,
        /// Ask a running service instead of analyzing locally.
        #[arg(long, value_name = "URL")]
        server: Option<String>,
    },
    /// Solve for the price where the supply and demand schedules cross.
    Equilibrium {
        model: PathBuf,
        /// Quantity added to demand at every price.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        shift: f64,
        /// Supply table name; by default the one table named like `*Supply*`.
        #[arg(long)]
        supply: Option<String>,
        /// Demand table name; by default the one table named like `*Demand*`.
        #[arg(long)]
        demand: Option<String>,
    },
    /// Serve the models in a directory over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Defaults to $STOCKFLOW_MODEL_DIR, then `./models`.
        #[arg(long, value_name = "DIR")]
        models: Option<PathBuf>,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
    },
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    model: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    start: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    stop: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, value_parser = ["euler", "rk4"], ignore_case = true)]
    method: Option<String>,
    /// Save interval; must be a whole multiple of dt.
    #[arg(long)]
    save: Option<f64>,
    /// Override a constant, e.g. `--set Shift_Height=0`. Repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE", value_parser = parse_assignment, allow_hyphen_values = true)]
    set: Vec<(String, f64)>,
    /// Write CSV here instead of standard output.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Run on a service at this URL; the model is named by its file stem.
    #[arg(long, value_name = "URL")]
    server: Option<String>,
}

impl RunArgs {
    fn request(&self) -> RunRequest {
        RunRequest {
            overrides: self.set.iter().cloned().collect::<BTreeMap<_, _>>(),
            start: self.start,
            stop: self.stop,
            dt: self.dt,
            save: self.save,
            method: self.method.as_ref().map(|m| m.to_ascii_lowercase()),
        }
    }
}

fn parse_assignment(text: &str) -> Result<(String, f64), String> {
    let (name, value) = text.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{text}`"))?;
    let value = value.trim().parse::<f64>().map_err(|e| format!("`{value}`: {e}"))?;
    Ok((name.trim().to_owned(), value))
}

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                ExitStatus::Usage
            } else {
                let _ = write!(stdout, "{text}");
                ExitStatus::Success
            };
        }
    };
    let mut io = Io { stdout, stderr };
    match dispatch(cli.command, &mut io) {
        Ok(status) => status,
        Err(Failure(status, message)) => {
            let _ = writeln!(io.stderr, "error: {message}");
            status
        }
    }
}

struct Io<'a> {
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

struct Failure(ExitStatus, String);

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure(ExitStatus::Usage, message.into())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

fn dispatch(command: Command, io: &mut Io<'_>) -> Result<ExitStatus, Failure> {
    match command {
        Command::Check { model } => check(&model, io),
        Command::Run(args) => run(&args, io),
        Command::Loops { model, edges, server } => loops(&model, edges.as_deref(), server.as_deref(), io),
        Command::Equilibrium { model, shift, supply, demand } => {
            equilibrium(&model, shift, supply.as_deref(), demand.as_deref(), io)
        }
        Command::Serve { port, models, host } => serve(SocketAddr::new(host, port), models),
    }
}

/// The model file: `path` as given, else relative to the model directory.
pub fn resolve_model_path(path: &Path) -> Option<PathBuf> {
    if path.is_file() {
        return Some(path.to_owned());
    }
    if path.is_absolute() {
        return None;
    }
    let dir = model_dir();
    [dir.join(path), dir.join(path).with_extension("sdm")].into_iter().find(|p| p.is_file())
}

fn model_dir() -> PathBuf {
    std::env::var_os(MODEL_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("models"))
}

fn model_id(path: &Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn load(path: &Path) -> Result<(PathBuf, CheckedModel), Failure> {
    let resolved = resolve_model_path(path).ok_or_else(|| Failure::usage(format!("{}: no such model file", path.display())))?;
    let source = std::fs::read_to_string(&resolved).map_err(|e| Failure::usage(format!("{}: {e}", resolved.display())))?;
    let model = load_model(&model_id(&resolved), &source).map_err(|e| model_failure(&resolved, &e))?;
    Ok((resolved, model))
}

fn model_failure(path: &Path, e: &ModelError) -> Failure {
    let mut message = format!("{}:{e}", path.display());
    if let ModelError::Units(all) = e {
        if all.len() > 1 {
            let _ = write!(message, " (and {} more)", all.len() - 1);
        }
    }
    Failure(ExitStatus::ModelError, message)
}

fn check(path: &Path, io: &mut Io<'_>) -> Result<ExitStatus, Failure> {
    let (_, model) = load(path)?;
    let width = model.units.entries.iter().map(|e| e.name.len()).max().unwrap_or(0);
    for entry in &model.units.entries {
        let units = match &entry.domain {
            Some(domain) => format!("{domain} -> {}", entry.units),
            None => entry.units.to_string(),
        };
        writeln!(io.stdout, "{:<width$}  {:<5}  {units}", entry.name, entry.kind.keyword())?;
    }
    Ok(ExitStatus::Success)
}

fn run(args: &RunArgs, io: &mut Io<'_>) -> Result<ExitStatus, Failure> {
    let request = args.request();
    let payload = match &args.server {
        Some(url) => remote_run(url, &model_id(&args.model), &request)?,
        None => {
            let (resolved, model) = load(&args.model)?;
            let spec = request.to_spec().map_err(|fields| Failure::usage(fields_message(&fields)))?;
            let result = simulate(&model.compiled, &spec).map_err(|RunError::InvalidSpec(fields)| Failure::usage(fields_message(&fields)))?;
            RunPayload::new(&model_id(&resolved), model.definition(), result)
        }
    };
    let csv = render_csv(&payload);
    match &args.out {
        Some(path) => std::fs::write(path, &csv).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?,
        None => io.stdout.write_all(csv.as_bytes())?,
    }
    for d in &payload.diagnostics {
        writeln!(io.stderr, "{}", d.message)?;
    }
    Ok(if payload.fault.is_some() { ExitStatus::RuntimeFault } else { ExitStatus::Success })
}

fn fields_message(fields: &[stockflow_core::engine::SpecError]) -> String {
    fields.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure(ExitStatus::RuntimeFault, e.to_string()))
}

fn remote_failure(e: ClientError) -> Failure {
    let status = match e.status().map(|s| s.as_u16()) {
        Some(400 | 404) => ExitStatus::Usage,
        _ => ExitStatus::RuntimeFault,
    };
    Failure(status, e.to_string())
}

fn remote_run(url: &str, id: &str, request: &RunRequest) -> Result<RunPayload, Failure> {
    let client = Client::new(url);
    match runtime()?.block_on(client.run(id, request)) {
        Ok(payload) => Ok(payload),
        Err(e) => match e.partial_run() {
            Some(partial) => Ok(partial.clone()),
            None => Err(remote_failure(e)),
        },
    }
}

/// `time,<names>` header, one row per saved sample, and a trailing comment on a fault.
pub fn render_csv(payload: &RunPayload) -> String {
    let mut out = String::from("time");
    for s in &payload.series {
        out.push(',');
        out.push_str(&s.name);
    }
    out.push('\n');
    for (i, t) in payload.times.iter().enumerate() {
        out.push_str(&format_value(*t));
        for Series { values, .. } in &payload.series {
            out.push(',');
            out.push_str(&format_value(values[i]));
        }
        out.push('\n');
    }
    if let Some(fault) = &payload.fault {
        let _ = writeln!(out, "# fault at t={}: {}", format_value(fault.time()), fault.subject());
    }
    out
}

/// Rounds to 9 significant digits and prints the shortest text that reads back as that value.
pub fn format_value(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    if rounded == 0.0 {
        "0".to_owned()
    } else {
        rounded.to_string()
    }
}

fn loops(path: &Path, edges: Option<&Path>, server: Option<&str>, io: &mut Io<'_>) -> Result<ExitStatus, Failure> {
    let report = match server {
        Some(url) => {
            if edges.is_some() {
                return Err(Failure::usage("--edges is only available for local analysis"));
            }
            let client = Client::new(url);
            runtime()?.block_on(client.loops(&model_id(path))).map_err(remote_failure)?.report
        }
        None => {
            let (_, model) = load(path)?;
            let spec = RunSpec::default();
            let point = initial_point(&model.compiled, &spec).map_err(|e| Failure(ExitStatus::RuntimeFault, e.to_string()))?;
            let graph = build_causal_graph(&model.compiled, &point, &spec.overrides)
                .map_err(|e| Failure(ExitStatus::RuntimeFault, e.to_string()))?;
            if let Some(file) = edges {
                std::fs::write(file, graph.to_edge_list()).map_err(|e| Failure::usage(format!("{}: {e}", file.display())))?;
            }
            enumerate_loops(&graph).map_err(|e| Failure(ExitStatus::RuntimeFault, e.to_string()))?
        }
    };
    write!(io.stdout, "{}", render_loops(&report))?;
    Ok(ExitStatus::Success)
}

pub fn render_loops(report: &LoopReport) -> String {
    if report.loops.is_empty() {
        return "no feedback loops\n".to_owned();
    }
    report.loops.iter().map(|l| format!("{l}\n")).collect()
}

fn equilibrium(
    path: &Path,
    shift: f64,
    supply: Option<&str>,
    demand: Option<&str>,
    io: &mut Io<'_>,
) -> Result<ExitStatus, Failure> {
    let (_, model) = load(path)?;
    let (s, d) = identify_schedules(model.definition(), supply, demand).map_err(|e| Failure(ExitStatus::ModelError, e.to_string()))?;
    match solve_linear_equilibrium(s, d, shift) {
        Ok(eq) => {
            writeln!(io.stdout, "P={:.4} Q={:.4}", eq.price, eq.quantity)?;
            Ok(ExitStatus::Success)
        }
        Err(e @ AnalysisError::NoCrossing { .. }) => Err(Failure(ExitStatus::RuntimeFault, e.to_string())),
        Err(e) => Err(Failure(ExitStatus::ModelError, e.to_string())),
    }
}

fn serve(addr: SocketAddr, models: Option<PathBuf>) -> Result<ExitStatus, Failure> {
    let _ = tracing_subscriber::fmt().with_writer(io::stderr).try_init();
    let dir = models.unwrap_or_else(model_dir);
    let catalog = stockflow_service::Catalog::load_dir(&dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;
    for failure in catalog.errors() {
        eprintln!("skipping {}: {}", failure.file, failure.message);
    }
    let app = stockflow_service::router(catalog);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure(ExitStatus::RuntimeFault, e.to_string()))?;
    rt.block_on(stockflow_service::serve(addr, app)).map_err(|e| Failure(ExitStatus::RuntimeFault, e.to_string()))?;
    Ok(ExitStatus::Success)
}
