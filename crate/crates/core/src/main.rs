use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mbbm::config::ExperimentConfig;
use mbbm::experiments::{self, num, Outcome};
use mbbm::fkpp::{solve, InitialCondition, SolveOptions};
use mbbm::model::builtin;
use mbbm::simulator::{SimOptions, Simulator, Start};
use mbbm::spine::{many_to_one_check, Functional};
use mbbm::{spectral_data, validate_model, Error, ModelSpec};

/// Environment variable holding the worker thread count.
const WORKERS_VAR: &str = "MBBM_WORKERS";

#[derive(Parser)]
#[command(name = "mbbm", version, about = "Multitype branching Brownian motion laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model against the standing assumptions.
    Validate {
        model: String,
        /// Accept self-type mean mass.
        #[arg(long)]
        permissive: bool,
    },
    /// Print lambda*, g, h, mu and the critical speed.
    Spectral { model: String },
    /// Simulate replicates and print one CSV row per replicate.
    Simulate {
        model: String,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Type of the initial particle (1-based).
        #[arg(long, default_value_t = 1)]
        start_type: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare both sides of the many-to-one identity.
    SpineCheck {
        model: String,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        start_type: usize,
        #[arg(long, default_value_t = 3.0)]
        z_max: f64,
    },
    /// Solve the F-KPP system and write `t,x,type,value` rows.
    SolveFkpp {
        model: String,
        /// heaviside, typed-heaviside:i, constant:a,b, laplace:phi or truncated:phi:L
        #[arg(long, default_value = "heaviside")]
        ic: String,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 0.05)]
        dx: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = -20.0)]
        x_lo: f64,
        #[arg(long)]
        x_hi: Option<f64>,
        /// Output times; defaults to the final time.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one estimator with default parameters overridable by `--set`.
    Estimate {
        model: String,
        #[arg(long, value_enum)]
        what: Estimator,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Extra `key=value` parameters.
        #[arg(long = "set", value_parser = parse_key_value)]
        params: Vec<(String, String)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Exit with status 1 if any required check fails.
        #[arg(long)]
        check: bool,
        /// Override the output directory of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the available experiments.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    Cinf,
    CinfTyped,
    Martingale,
    Overshoot,
    LimitLaw,
    DpppCheck,
}

impl Estimator {
    fn experiment(self) -> &'static str {
        match self {
            Self::Cinf | Self::CinfTyped => "cv-stabilization",
            Self::Martingale => "martingale",
            Self::Overshoot => "overshoot-exp",
            Self::LimitLaw => "limit-law",
            Self::DpppCheck => "dppp-crosscheck",
        }
    }
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got '{s}'"))
}

enum Failure {
    Check(String),
    Usage(String),
    Resource(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_resource() {
            Failure::Resource(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

fn load_model(arg: &str) -> mbbm::Result<ModelSpec> {
    if !Path::new(arg).exists() {
        if let Some(spec) = builtin::by_name(arg) {
            return Ok(spec);
        }
    }
    ModelSpec::load(arg)
}

fn writer(out: &Option<PathBuf>) -> mbbm::Result<Box<dyn Write>> {
    match out {
        Some(path) => {
            let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            Ok(Box::new(std::io::BufWriter::new(f)))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn emit(w: &mut dyn Write, out: &Option<PathBuf>, text: &str) -> mbbm::Result<()> {
    let path = out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    w.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
}

fn start(spec: &ModelSpec, start_type: usize) -> mbbm::Result<Start> {
    if start_type == 0 || start_type > spec.d() {
        return Err(Error::Domain(format!("start type {start_type} not in 1..={}", spec.d())));
    }
    Ok(Start::origin(start_type - 1))
}

fn report(outcome: &Outcome) {
    for c in &outcome.checks {
        let status = match (c.required, c.passed) {
            (true, true) => "PASS",
            (true, false) => "FAIL",
            (false, true) => "ok",
            (false, false) => "note",
        };
        println!("{status:>4}  {}: {}", c.name, c.detail);
    }
    println!("{}: {:.1} s", outcome.experiment, outcome.wall_seconds);
}

fn finish(outcome: &Outcome, check: bool) -> CliResult {
    report(outcome);
    if check && !outcome.passed() {
        let names: Vec<&str> = outcome.failures().iter().map(|c| c.name.as_str()).collect();
        return Err(Failure::Check(format!("failed checks: {}", names.join(", "))));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Validate { model, permissive } => {
            let spec = load_model(&model)?;
            let r = validate_model(&spec)?;
            println!("model {}: {} types", spec.name, spec.d());
            println!("irreducible = {}", r.irreducible);
            println!("no_death = {}", r.no_death);
            println!("no_self_mean = {}", r.no_self_mean);
            println!("moments_finite = {}", r.moments_finite);
            for m in &r.messages {
                println!("  {m}");
            }
            if !r.accepted(!permissive) {
                return Err(Failure::Check(format!("model {} rejected", spec.name)));
            }
            println!("accepted ({})", if permissive { "permissive" } else { "strict" });
        }
        Command::Spectral { model } => {
            let spec = load_model(&model)?;
            let sd = spectral_data(&spec)?;
            let join = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(" ");
            println!("lambda = {}", num(sd.lambda_star));
            println!("g = {}", join(&sd.g));
            println!("h = {}", join(&sd.h));
            println!("mu = {}", join(&sd.mu));
            println!("speed = {}", num(sd.sqrt2lam));
        }
        Command::Simulate {
            model,
            t,
            reps,
            seed,
            start_type,
            out,
        } => {
            let spec = load_model(&model)?;
            let sd = spectral_data(&spec)?;
            let sim = Simulator::new(&spec, &sd, SimOptions::default())?;
            let d = spec.d();
            let rows = sim.map_snapshots(start(&spec, start_type)?, t, reps, seed, |s| {
                let counts: Vec<String> = s.type_counts(d).iter().map(usize::to_string).collect();
                format!(
                    "{},{},{},{},{}\n",
                    s.seed.unwrap_or_default(),
                    s.len(),
                    counts.join(","),
                    num(s.max_position()),
                    num(s.min_position())
                )
            })?;
            let mut w = writer(&out)?;
            let counts: Vec<String> = (1..=d).map(|j| format!("n{j}")).collect();
            emit(&mut *w, &out, &format!("replicate,seed,particles,{},max,min\n", counts.join(",")))?;
            for (k, row) in rows.iter().enumerate() {
                emit(&mut *w, &out, &format!("{k},{row}"))?;
            }
        }
        Command::SpineCheck {
            model,
            t,
            reps,
            seed,
            start_type,
            z_max,
        } => {
            let spec = load_model(&model)?;
            let sd = spectral_data(&spec)?;
            let results = many_to_one_check(&spec, &sd, &Functional::ALL, start(&spec, start_type)?, t, reps, seed)?;
            println!("functional,branching,branching_se,spine,spine_se,z");
            let mut worst = 0.0f64;
            for (f, r) in Functional::ALL.iter().zip(&results) {
                worst = worst.max(r.z_score());
                println!(
                    "{},{},{},{},{},{}",
                    f.name(),
                    num(r.branching.estimate),
                    num(r.branching.std_error),
                    num(r.spine.estimate),
                    num(r.spine.std_error),
                    num(r.z_score())
                );
            }
            if worst > z_max {
                return Err(Failure::Check(format!("max z {worst:.2} exceeds {z_max}")));
            }
        }
        Command::SolveFkpp {
            model,
            ic,
            t,
            dx,
            dt,
            x_lo,
            x_hi,
            times,
            out,
        } => {
            let spec = load_model(&model)?;
            let sd = spectral_data(&spec)?;
            let ic = InitialCondition::parse(&ic)?;
            let opts = SolveOptions {
                dx,
                dt,
                x_lo,
                x_hi,
                save_times: times,
                ..SolveOptions::default()
            };
            let sol = solve(&spec, &sd, &ic, t, &opts)?;
            let xs = sol.xs();
            let mut w = writer(&out)?;
            emit(&mut *w, &out, "t,x,type,value\n")?;
            for (k, &tk) in sol.times.iter().enumerate() {
                for (i, row) in sol.values[k].iter().enumerate() {
                    let mut block = String::new();
                    for (x, v) in xs.iter().zip(row) {
                        block.push_str(&format!("{},{},{},{}\n", num(tk), num(*x), i + 1, num(*v)));
                    }
                    emit(&mut *w, &out, &block)?;
                }
            }
            eprintln!("max positivity violation {:.3e}", sol.max_violation);
        }
        Command::Estimate {
            model,
            what,
            seed,
            params,
            out,
        } => {
            let mut cfg = ExperimentConfig::new(what.experiment(), seed).with("model", &model);
            if matches!(what, Estimator::CinfTyped) {
                cfg = cfg.with("typed_model", &model);
            }
            for (k, v) in params {
                cfg = cfg.with(&k, v);
            }
            let outcome = experiments::run(&cfg)?;
            if let Some(dir) = &out {
                experiments::write_outputs(&outcome, &cfg, dir)?;
            }
            for table in &outcome.tables {
                if table.rows.len() <= 40 {
                    println!("[{}]\n{}", table.name, table.to_csv());
                }
            }
            finish(&outcome, false)?;
        }
        Command::Run { config, check, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(dir) = out {
                cfg.out = dir;
            }
            let outcome = experiments::run(&cfg)?;
            experiments::write_outputs(&outcome, &cfg, &cfg.out)?;
            println!("outputs in {}", cfg.out.display());
            finish(&outcome, check)?;
        }
        Command::List => {
            for e in experiments::registry() {
                println!("{:<18} {}", e.name, e.description);
            }
        }
    }
    Ok(())
}

fn configure_workers() -> std::result::Result<(), Failure> {
    let Ok(raw) = std::env::var(WORKERS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Usage(format!("{WORKERS_VAR} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Resource(format!("cannot start {n} workers: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match configure_workers().and_then(|_| dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Resource(msg)) => {
            eprintln!("resource error: {msg}");
            ExitCode::from(3)
        }
    }
}
