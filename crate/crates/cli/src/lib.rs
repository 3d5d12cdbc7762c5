//! Command-line front end: `run`, `posterior-demo` and `validate`.

pub mod config;
pub mod output;

use std::fmt;
use std::path::{Path, PathBuf};

use cbou_core::cbo_loop::{
    run_experiment, run_posterior_demo, ExperimentConfig, Method, PosteriorDemoResult, Trace,
};
use cbou_core::scm::{self, Role, Scm};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use config::{DemoFile, RunFile};
use output::{Manifest, Writer};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_SCM: i32 = 4;
pub const EXIT_RUNTIME: i32 = 5;

/// Environment variable naming the root under which outputs go when no
/// `--out` is given.
pub const OUTPUT_ENV: &str = "CBOU_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(m: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: m.into(),
        }
    }

    pub fn scm(m: impl Into<String>) -> Self {
        Self {
            code: EXIT_SCM,
            message: m.into(),
        }
    }

    pub fn runtime(m: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: m.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "cbou", version, about = "Causal Bayesian optimization with an unknown causal graph")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one or more methods over a range of seeds.
    Run(RunArgs),
    /// Compare posterior updates with and without interventional data.
    PosteriorDemo(DemoArgs),
    /// Load an SCM spec, check it and print a summary.
    Validate(ValidateArgs),
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|_| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.as_str()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Re-run the resolved config stored in a previous manifest and check
    /// that the traces match.
    #[arg(long, conflicts_with = "config")]
    pub manifest: Option<PathBuf>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub method: Vec<Method>,
    /// Builtin SCM name or path to an SCM spec file.
    #[arg(long)]
    pub scm: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Number of consecutive seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// First seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_obs: Option<usize>,
    #[arg(long)]
    pub n_int: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override any config key, e.g. `--set dr.bootstrap_count=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(short, long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scm: Option<String>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(short, long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// SCM spec file.
    #[arg(required_unless_present = "builtin", conflicts_with = "builtin")]
    pub path: Option<PathBuf>,
    /// Validate a builtin SCM instead.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Print the SCM as a spec file instead of the summary.
    #[arg(long)]
    pub emit_spec: bool,
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Run(a) => cmd_run(&a).map(|o| o.exit_code),
        Command::PosteriorDemo(a) => cmd_posterior_demo(&a).map(|o| o.exit_code),
        Command::Validate(a) => cmd_validate(&a).map(|text| {
            print!("{text}");
            0
        }),
    }
}

fn output_dir(flag: Option<&Path>, from_config: Option<&Path>, default_sub: &str) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    let root = std::env::var_os(OUTPUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("cbou-output"));
    root.join(from_config.unwrap_or(Path::new(default_sub)))
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::runtime(format!("thread pool: {e}")))
}

fn int(v: usize) -> toml::Value {
    toml::Value::Integer(v as i64)
}

pub fn resolve_run_file(a: &RunArgs) -> Result<RunFile, CliError> {
    use config::*;
    let mut table = match &a.manifest {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
            let m: Manifest = serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("invalid manifest: {e}")))?;
            if m.command != "run" {
                return Err(CliError::config("manifest was not written by `run`"));
            }
            let f: RunFile = serde_json::from_value(m.resolved_config)
                .map_err(|e| CliError::config(format!("invalid manifest config: {e}")))?;
            toml::Table::try_from(f).map_err(|e| CliError::config(e.to_string()))?
        }
        None => read_table(a.config.as_deref())?,
    };
    let sec = "experiment";
    if !a.method.is_empty() {
        let list = a
            .method
            .iter()
            .map(|m| toml::Value::String(m.as_str().into()))
            .collect();
        set_key(&mut table, "methods", toml::Value::Array(list), RUN_TOP_LEVEL, sec)?;
    }
    if let Some(s) = &a.scm {
        set_key(&mut table, "scm", scm_value(s), RUN_TOP_LEVEL, sec)?;
    }
    for (key, v) in [
        ("trials", a.trials),
        ("seeds", a.seeds),
        ("n_obs", a.n_obs),
        ("n_int", a.n_int),
    ] {
        if let Some(v) = v {
            set_key(&mut table, key, int(v), RUN_TOP_LEVEL, sec)?;
        }
    }
    if let Some(s) = a.seed {
        let v = i64::try_from(s).map_err(|_| CliError::config("seed must fit in a TOML integer"))?;
        set_key(&mut table, "seed", toml::Value::Integer(v), RUN_TOP_LEVEL, sec)?;
    }
    apply_sets(&mut table, &a.sets, RUN_TOP_LEVEL, sec)?;
    let file: RunFile = finish(table)?;
    if file.seed_list().is_empty() {
        return Err(CliError::config("no seeds to run"));
    }
    for m in file.methods() {
        let mut c = file.experiment.clone();
        c.method = m;
        c.validate().map_err(|e| CliError::config(e.to_string()))?;
    }
    Ok(file)
}

/// What a completed `run` produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub traces: Vec<Trace>,
    pub manifest: Manifest,
}

fn load_scm(cfg: &ExperimentConfig, seed: u64) -> Result<Scm, CliError> {
    cfg.scm
        .load(seed)
        .map_err(|e| CliError::scm(format!("cannot load SCM: {e}")))
}

pub fn cmd_run(a: &RunArgs) -> Result<RunOutcome, CliError> {
    let file = resolve_run_file(a)?;
    let seeds = file.seed_list();
    let methods = file.methods();
    for &s in &seeds {
        load_scm(&file.experiment, s)?;
    }
    let jobs: Vec<ExperimentConfig> = methods
        .iter()
        .flat_map(|&m| {
            seeds.iter().map(move |&s| (m, s))
        })
        .map(|(m, s)| {
            let mut c = file.experiment.clone();
            c.method = m;
            c.seed = s;
            c
        })
        .collect();

    let quiet = a.quiet;
    let results: Vec<Result<Trace, CliError>> = pool(a.jobs)?.install(|| {
        jobs.par_iter()
            .map(|c| {
                let t = run_experiment(c).map_err(|e| CliError::runtime(e.to_string()))?;
                if !quiet {
                    eprintln!(
                        "{} seed {}: Y* {} after {} trials{}",
                        c.method,
                        c.seed,
                        t.summary.y_star.map_or("-".into(), |y| format!("{y:.4}")),
                        t.summary.trials_completed,
                        t.summary
                            .error
                            .as_ref()
                            .map_or(String::new(), |e| format!(" (stopped: {e})")),
                    );
                }
                Ok(t)
            })
            .collect()
    });
    let traces = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let out_dir = output_dir(a.out.as_deref(), file.output_dir.as_deref(), "run");
    let mut w = Writer::new(&out_dir)?;
    for t in &traces {
        w.write(
            &output::trace_file_name(t.header.method, t.header.seed),
            t.to_ndjson().as_bytes(),
        )?;
    }
    w.write("metrics.csv", &output::metrics_csv(&traces)?)?;
    let summary = output::summarize(&traces);
    w.write("summary.csv", &output::summary_csv(&summary)?)?;
    let table = output::summary_table(&summary);
    w.write("summary.txt", table.as_bytes())?;
    let resolved = serde_json::to_value(&file).expect("config serializes");
    let manifest = w.finish("run", a.config.as_deref(), resolved, seeds)?;
    if !quiet {
        print!("{table}");
        println!("wrote {}", out_dir.display());
    }

    let mut exit_code = 0;
    if traces.iter().any(|t| !t.is_complete()) {
        eprintln!("error: at least one run stopped early; see the trace summaries");
        exit_code = EXIT_RUNTIME;
    }
    if let Some(p) = &a.manifest {
        let original: Manifest = serde_json::from_str(
            &std::fs::read_to_string(p).map_err(|e| CliError::runtime(e.to_string()))?,
        )
        .map_err(|e| CliError::runtime(e.to_string()))?;
        let differing: Vec<&str> = original
            .artifacts
            .iter()
            .filter(|o| o.path.starts_with("traces/"))
            .filter(|o| !manifest.artifacts.contains(o))
            .map(|o| o.path.as_str())
            .collect();
        if differing.is_empty() {
            if !quiet {
                println!("replay matches the manifest");
            }
        } else {
            eprintln!("error: replay differs from the manifest: {}", differing.join(", "));
            exit_code = EXIT_RUNTIME;
        }
    }
    Ok(RunOutcome {
        exit_code,
        out_dir,
        traces,
        manifest,
    })
}

pub fn resolve_demo_file(a: &DemoArgs) -> Result<DemoFile, CliError> {
    use config::*;
    let mut table = read_table(a.config.as_deref())?;
    let sec = "demo";
    if let Some(s) = &a.scm {
        set_key(&mut table, "scm", scm_value(s), DEMO_TOP_LEVEL, sec)?;
    }
    if let Some(n) = a.seeds {
        set_key(&mut table, "seeds", int(n), DEMO_TOP_LEVEL, sec)?;
    }
    if let Some(s) = a.seed {
        let v = i64::try_from(s).map_err(|_| CliError::config("seed must fit in a TOML integer"))?;
        set_key(&mut table, "seed", toml::Value::Integer(v), DEMO_TOP_LEVEL, sec)?;
    }
    apply_sets(&mut table, &a.sets, DEMO_TOP_LEVEL, sec)?;
    let file: DemoFile = finish(table)?;
    if file.seed_list().is_empty() {
        return Err(CliError::config("no seeds to run"));
    }
    Ok(file)
}

#[derive(Debug)]
pub struct DemoOutcome {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub results: Vec<PosteriorDemoResult>,
    pub manifest: Manifest,
}

pub fn cmd_posterior_demo(a: &DemoArgs) -> Result<DemoOutcome, CliError> {
    let file = resolve_demo_file(a)?;
    let seeds = file.seed_list();
    for &s in &seeds {
        file.demo
            .scm
            .load(s)
            .map_err(|e| CliError::scm(format!("cannot load SCM: {e}")))?;
    }
    let results: Vec<Result<PosteriorDemoResult, CliError>> = pool(a.jobs)?.install(|| {
        seeds
            .par_iter()
            .map(|&s| {
                let mut c = file.demo.clone();
                c.seed = s;
                run_posterior_demo(&c).map_err(|e| CliError::runtime(e.to_string()))
            })
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let out_dir = output_dir(a.out.as_deref(), file.output_dir.as_deref(), "posterior-demo");
    let mut w = Writer::new(&out_dir)?;
    w.write("posterior_demo.csv", &output::demo_csv(&results)?)?;
    let wins = results
        .iter()
        .filter(|r| r.int_accuracy.last() >= r.obs_accuracy.last())
        .count();
    let mut text = String::from("seed   obs acc  int acc   obs f1   int f1\n");
    for r in &results {
        let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
        text.push_str(&format!(
            "{:<5} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
            r.seed,
            last(&r.obs_accuracy),
            last(&r.int_accuracy),
            last(&r.obs_f1),
            last(&r.int_f1)
        ));
    }
    text.push_str(&format!(
        "interventional accuracy >= observational at the final step in {wins}/{} seeds\n",
        results.len()
    ));
    w.write("summary.txt", text.as_bytes())?;
    let resolved = serde_json::to_value(&file).expect("config serializes");
    let manifest = w.finish("posterior-demo", a.config.as_deref(), resolved, seeds)?;
    if !a.quiet {
        print!("{text}");
        println!("wrote {}", out_dir.display());
    }
    Ok(DemoOutcome {
        exit_code: 0,
        out_dir,
        results,
        manifest,
    })
}

fn role_name(r: Role) -> &'static str {
    match r {
        Role::Manipulative => "manipulative",
        Role::NonManipulative => "non-manipulative",
        Role::Target => "target",
    }
}

/// Human-readable summary of an SCM.
pub fn describe(scm: &Scm) -> String {
    let dag = scm.dag();
    let mut s = format!(
        "SCM `{}`: {} nodes, {} edges, target {}\n",
        scm.name(),
        dag.num_nodes(),
        dag.edges().len(),
        dag.name(dag.target())
    );
    for i in 0..dag.num_nodes() {
        let parents: Vec<&str> = dag.parents(i).iter().map(|&p| dag.name(p)).collect();
        let domain = scm.declared_domains()[i]
            .map(|d| format!(" domain [{}, {}]", d.lo, d.hi))
            .unwrap_or_default();
        s.push_str(&format!(
            "  {:<12} {:<17} parents [{}]{}\n",
            dag.name(i),
            role_name(dag.role(i)),
            parents.join(", "),
            domain
        ));
    }
    s
}

pub fn cmd_validate(a: &ValidateArgs) -> Result<String, CliError> {
    let scm = match (&a.path, &a.builtin) {
        (_, Some(name)) => scm::builtin(name).ok_or_else(|| {
            CliError::scm(format!(
                "unknown builtin SCM `{name}` (expected one of {})",
                scm::BUILTIN_NAMES.join(", ")
            ))
        })?,
        (Some(p), None) => scm::load_scm_spec(p).map_err(|e| CliError::scm(e.to_string()))?,
        (None, None) => return Err(CliError::config("give a spec path or --builtin")),
    };
    if a.emit_spec {
        scm::spec_file::to_toml_string(&scm).map_err(|e| CliError::scm(e.to_string()))
    } else {
        Ok(describe(&scm))
    }
}
