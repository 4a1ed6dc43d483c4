//! `laru` command-line front end: trace generation, single runs, noise
//! sweeps and the verification battery. All tabular output is CSV.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use laru::harness::{
    cost_ratio, noise_sweep, phase_audit, run_battery, simulate, BatteryOptions, PredictorSpec,
    SweepTable, DEFAULT_P_GRID,
};
use laru::oracle::belady;
use laru::policies::{Mode, PolicyConfig, PolicyKind};
use laru::predictor::{NoiseModel, RefreshRule};
use laru::trace::{
    gen_conversation, gen_cyclic_scan, gen_zipf, load_trace, write_csv, ConversationConfig,
    TraceFormat,
};
use laru::{Error, Trace};

const EXIT_USAGE: u8 = 1;
const EXIT_AUDIT: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "laru", version, about = "Learning-augmented cache eviction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic trace as CSV.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Simulate one policy on a trace and report misses, ratio and audit.
    Run(RunArgs),
    /// Cost ratios across flip-noise levels and seeds.
    Sweep(SweepArgs),
    /// Randomized property battery against the optimal oracle.
    Verify(VerifyArgs),
}

#[derive(Subcommand, Debug)]
enum GenKind {
    Zipf {
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        alphabet: usize,
        #[arg(long, default_value_t = 1.0)]
        s: f64,
        #[arg(long, env = "LARU_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    Scan {
        #[arg(long)]
        cycle: usize,
        #[arg(long)]
        rounds: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    Conversation {
        #[arg(long, default_value_t = 100)]
        convs: usize,
        #[arg(long, default_value_t = 4)]
        turns: usize,
        #[arg(long, default_value_t = 128)]
        prompt_len: usize,
        #[arg(long, default_value_t = 16)]
        block_size: usize,
        #[arg(long, default_value_t = 266.0)]
        interval_mean: f64,
        #[arg(long, default_value_t = 77.5)]
        interval_sd: f64,
        #[arg(long, env = "LARU_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct PolicyArgs {
    /// Cache size in items.
    #[arg(long)]
    k: usize,
    /// Confidence decay base.
    #[arg(long, default_value_t = 2)]
    b: u32,
    /// Prediction-induced misses per decay step.
    #[arg(long, default_value_t = 1)]
    errors_per_decay: usize,
    /// One decay step per ceil(k/32) prediction-induced misses.
    #[arg(long, conflicts_with = "errors_per_decay")]
    coarse_decay: bool,
    #[arg(long, default_value_t = 4)]
    hf_candidates: usize,
    /// sync or async.
    #[arg(long, default_value = "sync")]
    mode: String,
    /// Async mode: minimum ordinals between refreshes of one key.
    #[arg(long, default_value_t = 1)]
    refresh_interval: usize,
}

impl PolicyArgs {
    fn config(&self, kind: PolicyKind, seed: u64) -> Result<PolicyConfig, Error> {
        let mut cfg = PolicyConfig::new(kind, self.k);
        cfg.b = self.b;
        cfg.errors_per_decay = self.errors_per_decay;
        cfg.hf_candidates = self.hf_candidates.min(self.k.max(1));
        cfg.mode = self.mode.parse::<Mode>()?;
        cfg.refresh = RefreshRule {
            interval: self.refresh_interval,
        };
        cfg.seed = seed;
        if self.coarse_decay {
            cfg = cfg.with_coarse_decay();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    policy: String,
    /// none | oracle | adversarial | heuristic | noisy:P | noisy-heuristic:P
    #[arg(long)]
    predictor: Option<String>,
    /// Flip coins per query, or once per key between its requests.
    #[arg(long, default_value = "interval")]
    noise_model: String,
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    policy_args: PolicyArgs,
    /// Seed for Marker and predictor noise.
    #[arg(long, env = "LARU_SEED", default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Comma-separated policies.
    #[arg(long, default_value = "lru,fpb,hf,laru", value_delimiter = ',')]
    policies: Vec<String>,
    /// Comma-separated flip probabilities.
    #[arg(long, value_delimiter = ',')]
    p_grid: Option<Vec<f64>>,
    /// Number of seeds, counted up from --seed.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, env = "LARU_SEED", default_value_t = 0)]
    seed: u64,
    /// Noise-free base predictor: oracle or heuristic.
    #[arg(long, default_value = "oracle")]
    base: String,
    /// Flip coins per query, or once per key between its requests.
    #[arg(long, default_value = "interval")]
    noise_model: String,
    #[command(flatten)]
    policy_args: PolicyArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, env = "LARU_SEED", default_value_t = 0)]
    seed: u64,
    /// Number of random instances.
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
    /// Corrupt the optimal miss counts to check that the battery fails.
    #[arg(long, hide = true)]
    inject_bug: bool,
}

enum Failure {
    Usage(String),
    Audit(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Gen { kind } => cmd_gen(kind),
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Audit(m)) => {
            eprintln!("{m}");
            ExitCode::from(EXIT_AUDIT)
        }
    }
}

fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_trace(path: &Path) -> Result<Trace, Failure> {
    let f = File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(load_trace(BufReader::new(f), TraceFormat::Csv)?)
}

fn cmd_gen(kind: GenKind) -> Result<(), Failure> {
    let (trace, output) = match kind {
        GenKind::Zipf {
            n,
            alphabet,
            s,
            seed,
            output,
        } => (gen_zipf(n, alphabet, s, seed)?, output),
        GenKind::Scan {
            cycle,
            rounds,
            output,
        } => (gen_cyclic_scan(cycle, rounds)?, output),
        GenKind::Conversation {
            convs,
            turns,
            prompt_len,
            block_size,
            interval_mean,
            interval_sd,
            seed,
            output,
        } => {
            let cfg = ConversationConfig {
                num_conversations: convs,
                turns_per_conv: turns,
                prompt_len_mean: prompt_len,
                interval_mean,
                interval_sd,
                block_size,
                seed,
            };
            (gen_conversation(&cfg)?, output)
        }
    };
    let mut out = sink(output.as_deref())?;
    write_csv(&trace, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Fills in the seed, and the noise model unless the spec names one.
fn with_seed(spec: PredictorSpec, text: &str, seed: u64, default_model: NoiseModel) -> PredictorSpec {
    let explicit = text.matches(':').count() == 2;
    let pick = |model| if explicit { model } else { default_model };
    match spec {
        PredictorSpec::Noisy { p, model, .. } => PredictorSpec::Noisy {
            p,
            seed,
            model: pick(model),
        },
        PredictorSpec::NoisyHeuristic { p, model, .. } => PredictorSpec::NoisyHeuristic {
            p,
            seed,
            model: pick(model),
        },
        other => other,
    }
}

fn parse_noise_model(s: &str) -> Result<NoiseModel, Failure> {
    match s {
        "query" => Ok(NoiseModel::PerQuery),
        "interval" => Ok(NoiseModel::PerInterval),
        other => Err(Failure::Usage(format!("unknown noise model {other:?}"))),
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let kind: PolicyKind = args.policy.parse()?;
    let cfg = args.policy_args.config(kind, args.seed)?;
    let spec = match &args.predictor {
        Some(s) => with_seed(s.parse()?, s, args.seed, parse_noise_model(&args.noise_model)?),
        None if kind.needs_predictor() => PredictorSpec::Oracle,
        None => PredictorSpec::None,
    };
    if !kind.needs_predictor() && spec != PredictorSpec::None {
        return Err(Failure::Usage(format!("policy {kind} takes no predictor")));
    }
    let trace = read_trace(&args.trace)?;
    let trace_id = args.trace.display().to_string();
    let report = simulate(&cfg, &trace, &spec, &trace_id)?;
    let opt = belady(&trace, cfg.k)?;
    let ratio = cost_ratio(&report, &opt).ok();
    let verdict = if kind == PolicyKind::Laru {
        Some(phase_audit(&report, &opt, &cfg)?)
    } else {
        None
    };
    let audit = verdict.as_ref().map_or_else(|| "n/a".to_string(), |v| v.summary());

    let mut w = csv::Writer::from_writer(sink(args.output.as_deref())?);
    w.write_record([
        "policy",
        "k",
        "trace",
        "misses",
        "hits",
        "hit_rate",
        "cost_ratio",
        "predictor_calls",
        "phases",
        "audit",
    ])?;
    w.write_record([
        kind.as_str().to_string(),
        cfg.k.to_string(),
        trace_id,
        report.misses.to_string(),
        report.hits.to_string(),
        format!("{:.6}", report.hit_rate),
        ratio.map_or_else(String::new, |r| format!("{r:.6}")),
        report.predictor_calls.to_string(),
        report.completed_phases.to_string(),
        audit.clone(),
    ])?;
    w.flush()?;

    eprintln!(
        "{kind} k={} predictor={spec}: hit rate {:.4}, misses {} (OPT {}), ratio {}, audit {audit}",
        cfg.k,
        report.hit_rate,
        report.misses,
        opt.misses,
        ratio.map_or_else(|| "undefined".to_string(), |r| format!("{r:.4}")),
    );
    match verdict {
        Some(v) if !v.passed() => Err(Failure::Audit(format!("audit failed: {:?}", v.violations))),
        _ => Ok(()),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    if args.seeds == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    let heuristic_base = match args.base.as_str() {
        "oracle" => false,
        "heuristic" => true,
        other => return Err(Failure::Usage(format!("unknown base predictor {other:?}"))),
    };
    let configs = args
        .policies
        .iter()
        .map(|p| {
            let kind: PolicyKind = p.trim().parse()?;
            args.policy_args.config(kind, args.seed)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let p_grid = args.p_grid.clone().unwrap_or_else(|| DEFAULT_P_GRID.to_vec());
    let seeds: Vec<u64> = (0..args.seeds).map(|i| args.seed.wrapping_add(i)).collect();
    let trace = read_trace(&args.trace)?;
    let model = parse_noise_model(&args.noise_model)?;
    let table = noise_sweep(&configs, &trace, &p_grid, &seeds, heuristic_base, model)?;
    write_sweep(&table, sink(args.output.as_deref())?)?;
    Ok(())
}

fn write_sweep<W: Write>(table: &SweepTable, out: W) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["policy", "p", "seed", "misses", "cost_ratio", "hit_rate", "predictor_calls"])?;
    for r in &table.rows {
        w.write_record([
            r.policy.clone(),
            format!("{:.2}", r.p),
            r.seed.map_or_else(|| "mean".to_string(), |s| s.to_string()),
            format!("{:.1}", r.misses),
            format!("{:.6}", r.cost_ratio),
            format!("{:.6}", r.hit_rate),
            format!("{:.1}", r.predictor_calls),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    if args.budget == 0 {
        eprintln!("warning: budget 0, nothing checked");
    }
    let report = run_battery(&BatteryOptions {
        seed: args.seed,
        budget: args.budget,
        inject_fault: args.inject_bug,
    })?;
    println!(
        "instances {} checks {} failures {}",
        report.instances,
        report.checks,
        report.failures.len()
    );
    if report.passed() {
        println!("PASS");
        Ok(())
    } else {
        for f in report.failures.iter().take(20) {
            println!("  {f}");
        }
        Err(Failure::Audit("FAIL".into()))
    }
}
