use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use subq_core::harness::{self, dr, Experiment, ExperimentConfig, Outcome};
use subq_core::net::WorldOptions;
use subq_core::types::Bit;

#[derive(Parser)]
#[command(name = "subq", version, about = "Monte Carlo experiments for committee-based Byzantine agreement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of seeded trials and write trials.csv and summary.json.
    Run(RunArgs),
    /// Run paired broadcast attack trials (A, A′ and passive) for both sender bits.
    Dr(DrArgs),
    /// Print the effective configuration as TOML.
    Config(Overrides),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write trace-<seed>.jsonl for every trial.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct DrArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Configuration file plus per-field overrides named after the fields.
#[derive(Args, Default)]
struct Overrides {
    /// TOML file with any subset of the fields below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    adversary: Option<String>,
    #[arg(long = "bit_specific")]
    bit_specific: Option<String>,
    #[arg(long = "strongly_adaptive")]
    strongly_adaptive: Option<String>,
    #[arg(long)]
    bb: Option<String>,
    #[arg(long = "bb_sender")]
    bb_sender: Option<String>,
    #[arg(long = "sender_input")]
    sender_input: Option<String>,
    #[arg(long)]
    inputs: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    /// Base seed; trial k uses base_seed + k.
    #[arg(long = "base_seed", visible_alias = "seed")]
    base_seed: Option<String>,
    #[arg(long = "max_rounds")]
    max_rounds: Option<String>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let fields = [
            ("protocol", &self.protocol),
            ("mode", &self.mode),
            ("n", &self.n),
            ("epsilon", &self.epsilon),
            ("lambda", &self.lambda),
            ("iterations", &self.iterations),
            ("delta", &self.delta),
            ("adversary", &self.adversary),
            ("bit_specific", &self.bit_specific),
            ("strongly_adaptive", &self.strongly_adaptive),
            ("bb", &self.bb),
            ("bb_sender", &self.bb_sender),
            ("sender_input", &self.sender_input),
            ("inputs", &self.inputs),
            ("trials", &self.trials),
            ("base_seed", &self.base_seed),
            ("max_rounds", &self.max_rounds),
        ];
        for (name, value) in fields {
            if let Some(v) = value {
                cfg.set(name, v).with_context(|| format!("--{name} {v}"))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Config(o) => {
            print!("{}", o.resolve()?.to_toml());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(args) => run_batch(&args),
        Command::Dr(args) => run_dr(&args),
    }
}

fn run_batch(args: &RunArgs) -> Result<ExitCode> {
    let cfg = args.overrides.resolve()?;
    let exp = harness::run_experiment(&cfg)?;
    harness::write_experiment(&exp, &args.out)?;
    if args.trace {
        write_traces(&cfg, &args.out)?;
    }
    print_summary(&exp);
    Ok(if exp.summary.violations == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn write_traces(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let options = WorldOptions { trace: true, inbox_digests: false };
    cfg.seeds().collect::<Vec<_>>().par_iter().try_for_each(|seed| -> Result<()> {
        let t = harness::run_trial(cfg, *seed, options)?;
        let path = dir.join(format!("trace-{seed}.jsonl"));
        let file = BufWriter::new(File::create(&path).with_context(|| path.display().to_string())?);
        t.world.trace().expect("tracing enabled").write_jsonl(file)?;
        Ok(())
    })
}

fn print_summary(exp: &Experiment) {
    let s = &exp.summary;
    let c = &exp.config;
    println!(
        "{} {} n={} f={} lambda={} adversary={} trials={}",
        c.protocol,
        c.mode,
        c.n,
        c.f(),
        c.lambda,
        c.adversary,
        s.trials
    );
    for o in Outcome::ALL {
        let f = &s.outcomes[o.name()];
        println!(
            "  {:<22} {:>6}  {:.4}  [{:.4}, {:.4}]",
            o.name(),
            f.count,
            f.frequency,
            f.wilson_low,
            f.wilson_high
        );
    }
    println!(
        "  multicasts mean {:.1} p99 {:.0} | rounds mean {:.1} p99 {:.0} | iterations mean {:.2} max {:.0}",
        s.honest_multicasts.mean, s.honest_multicasts.p99, s.rounds.mean, s.rounds.p99, s.iterations.mean, s.iterations.max
    );
    for (k, a) in &s.audits {
        if a.total > 0 {
            println!("  audit {k}: total {} in {} trials", a.total, a.trials);
        }
    }
}

fn run_dr(args: &DrArgs) -> Result<ExitCode> {
    let cfg = args.overrides.resolve()?;
    if !cfg.bb {
        bail!("the attack pair needs bb = true");
    }
    std::fs::create_dir_all(&args.out)?;
    let mut w = csv::Writer::from_path(args.out.join("dr.csv"))?;
    w.write_record(["seed", "sender_input", "p", "u_equal", "aprime_error", "passive_error", "attack_failed", "blocked"])?;
    for bit in Bit::BOTH {
        let mut c = cfg.clone();
        c.sender_input = bit;
        let pairs = c
            .seeds()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|s| dr::dr_pair(&c, *s))
            .collect::<Result<Vec<_>, _>>()?;
        for p in &pairs {
            w.write_record([
                p.seed.to_string(),
                p.sender_input.to_string(),
                p.p.to_string(),
                p.u_equal.to_string(),
                p.aprime_error.to_string(),
                p.passive_error.to_string(),
                p.attack_failed.to_string(),
                p.blocked.to_string(),
            ])?;
        }
        let k = pairs.len() as f64;
        let count = |f: fn(&dr::DrPair) -> bool| pairs.iter().filter(|p| f(p)).count();
        println!(
            "sender input {bit}: pairs {} | U inboxes equal {} | A' error {:.4} | passive error {:.4} | attack failed {}",
            pairs.len(),
            count(|p| p.u_equal),
            count(|p| p.aprime_error) as f64 / k,
            count(|p| p.passive_error) as f64 / k,
            count(|p| p.attack_failed),
        );
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}
