use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tddbp::dbp::{estimate_crossover, BlockPolicy, CostModel};
use tddbp::filter::{default_passband_fraction, design_lsco_bank, DEFAULT_MAGNITUDE_BOUND};
use tddbp::fixed::cost_report;
use tddbp::harness::{compare_report, load_bank_file, run_experiment, summary_csv, BankSource, ExperimentSpec, LoadedBank, ResultSet};
use tddbp::learn::{train, write_loss_csv};
use tddbp::Error;

#[derive(Parser)]
#[command(name = "tddbp", version, about = "Time-domain digital backpropagation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replaces the sweep seeds and the training seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write LS-CO banks for every `lsco` variant.
    Design(Common),
    /// Run the training section of a spec.
    Train(Common),
    /// Run the launch-power sweep and write results.csv.
    Run {
        #[command(flatten)]
        common: Common,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Summarise two or more result directories.
    Compare {
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Datapath parallelism used for the cost columns.
        #[arg(long, default_value_t = 96)]
        parallelism: usize,
    },
    /// Multiplier-cost table for the quantized variants and the FFT crossover.
    Cost {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 96)]
        parallelism: usize,
    },
}

fn load(c: &Common) -> tddbp::Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::load(&c.spec)?;
    if let Some(seed) = c.seed {
        spec.sweep.seeds = vec![seed];
        if let Some(t) = &mut spec.train {
            t.seed = seed;
        }
    }
    std::fs::create_dir_all(&c.out)?;
    Ok(spec)
}

fn design(c: &Common) -> tddbp::Result<()> {
    let spec = load(c)?;
    let fs = spec.system.sample_rate();
    let pf = default_passband_fraction(spec.system.symbol_rate, spec.system.rolloff, fs);
    for v in &spec.variants {
        if let BankSource::Lsco { taps } = v.bank {
            let l = &spec.link;
            let bank = design_lsco_bank(l.num_spans, l.span_length_m, l.beta2, taps, fs, pf, DEFAULT_MAGNITUDE_BOUND)?;
            let path = c.out.join(format!("bank_{}.json", v.name));
            bank.save(&path)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn train_cmd(c: &Common) -> tddbp::Result<()> {
    let spec = load(c)?;
    let cfg = spec
        .train
        .as_ref()
        .ok_or_else(|| Error::Schema("spec has no train section".into()))?;
    let outcome = train(cfg, &spec.link, &spec.system)?;
    outcome.float_bank.save(c.out.join("bank_float.json"))?;
    if let Some(q) = &outcome.quantized_bank {
        q.save(c.out.join("bank_fixed.json"))?;
    }
    write_loss_csv(&outcome.loss_history, c.out.join("loss.csv"))?;
    outcome.state.checkpoint().save(c.out.join("checkpoint.json"))?;
    if let Some((_, snr)) = outcome.loss_history.last() {
        println!("final batch effective SNR {snr:.3} dB");
    }
    Ok(())
}

fn run(c: &Common, threads: usize) -> tddbp::Result<bool> {
    let spec = load(c)?;
    let report = run_experiment(&spec, threads)?;
    report.write(&c.out)?;
    for f in &report.failures {
        eprintln!("failed: {f}");
    }
    println!("{}", c.out.join("results.csv").display());
    Ok(report.failures.is_empty())
}

fn compare(dirs: &[PathBuf], out: Option<&Path>, parallelism: usize) -> tddbp::Result<()> {
    let sets = dirs.iter().map(|d| ResultSet::load(d)).collect::<tddbp::Result<Vec<_>>>()?;
    let table = summary_csv(&compare_report(&sets, parallelism)?);
    match out {
        Some(p) => std::fs::write(p, &table)?,
        None => print!("{table}"),
    }
    Ok(())
}

fn cost(c: &Common, parallelism: usize) -> tddbp::Result<()> {
    let spec = load(c)?;
    let mut s = String::from("variant,taps,signal_bits,coeff_bits,complex_multipliers,real_multipliers,real_adders,proxy\n");
    for v in &spec.variants {
        let Some(q) = v.quant else { continue };
        let taps = match &v.bank {
            BankSource::Lsco { taps } => *taps,
            BankSource::Learned => spec.train.as_ref().map_or(0, |t| t.target_taps),
            BankSource::File { path } => match load_bank_file(path)? {
                LoadedBank::Float(b) => b.num_taps(),
                LoadedBank::Fixed(b) => b.num_taps(),
            },
        };
        let r = cost_report(taps, &q, parallelism)?;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            v.name, taps, r.signal_bits, r.coeff_bits, r.complex_multipliers, r.real_multipliers, r.real_adders, r.proxy
        )
        .unwrap();
    }
    std::fs::write(c.out.join("cost.csv"), &s)?;
    print!("{s}");
    let model = CostModel {
        block: BlockPolicy::Parallel(parallelism),
        ..CostModel::default()
    };
    let x = estimate_crossover(3..=81, &[], &model)?;
    std::fs::write(c.out.join("crossover.json"), serde_json::to_string_pretty(&x)?)?;
    match x.crossover_taps {
        Some(t) => println!("direct/FFT crossover at {t} taps"),
        None => println!("no direct/FFT crossover below 81 taps"),
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Schema(_) | Error::Json(_) | Error::InvalidArgument(_) | Error::Mismatch(_) => 2,
        Error::Io(_) => 1,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Design(c) => design(c),
        Command::Train(c) => train_cmd(c),
        Command::Run { common, threads } => match run(common, *threads) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(3),
            Err(e) => Err(e),
        },
        Command::Compare { dirs, out, parallelism } => compare(dirs, out.as_deref(), *parallelism),
        Command::Cost { common, parallelism } => cost(common, *parallelism),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
