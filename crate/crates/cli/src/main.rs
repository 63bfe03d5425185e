use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use thoughtseq::complexity::{
    expected_search_steps, montecarlo_report, montecarlo_search_cost, p_counts_bruteforce, p_counts_formula,
    report_csv, sqrt_fit, Variant, BRUTEFORCE_LIMIT,
};
use thoughtseq::consistency::format_matrix;
use thoughtseq::runtime::trace_csv;
use thoughtseq::tm::{config_csv, first_divergence, parse_input, read_tm, simulate, Algo, TmError};
use thoughtseq::training::{init_weights, train, DataSet, TrainConfig, TrainMode};
use thoughtseq::verify::{run_suite, Suite};

#[derive(Parser, Debug)]
#[command(name = "thoughtseq", version, about = "Consistent layers, thought sequences and TM simulation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run invariant suites and print one line per check.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a linear layer on a data file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "transpose")]
        mode: String,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Turing machine through a compiled layout and diff it against the reference.
    Simulate {
        #[arg(long)]
        tm: PathBuf,
        #[arg(long, default_value = "memory")]
        algo: String,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Initial tape, one symbol per character, starting at cell 0.
        #[arg(long, default_value = "")]
        input: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact or sampled search-cost analysis.
    Complexity {
        #[arg(long, value_enum)]
        mode: ComplexityMode,
        /// Walk lengths, comma separated.
        #[arg(long = "N", value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 10000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "bounded")]
        variant: VariantArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ComplexityMode {
    Exact,
    Montecarlo,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum VariantArg {
    Plain,
    Bounded,
}

enum Failure {
    /// A check ran and did not hold.
    Check(anyhow::Error),
    /// Bad flags or unreadable inputs.
    Usage(anyhow::Error),
}

type Outcome = Result<(), Failure>;

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Verify { suite, seed } => cmd_verify(&suite, seed),
        Command::Train { data, mode, lambda, epochs, seed, out } => cmd_train(&data, &mode, lambda, epochs, seed, &out),
        Command::Simulate { tm, algo, steps, input, out } => cmd_simulate(&tm, &algo, steps, &input, &out),
        Command::Complexity { mode, n, trials, seed, variant, out } => cmd_complexity(mode, &n, trials, seed, variant, &out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Outcome {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(usage)?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display())).map_err(usage)
}

fn cmd_verify(suite: &str, seed: u64) -> Outcome {
    let suite: Suite = suite.parse().map_err(usage)?;
    let results = run_suite(suite, seed);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("{} checks, {failed} failed", results.len());
    if failed > 0 {
        return Err(Failure::Check(anyhow!("{failed} invariant checks failed")));
    }
    Ok(())
}

fn cmd_train(data: &Path, mode: &str, lambda: f64, epochs: usize, seed: u64, out: &Path) -> Outcome {
    let mode: TrainMode = mode.parse().map_err(usage)?;
    if epochs == 0 {
        return Err(usage(anyhow!("--epochs must be positive")));
    }
    let data = DataSet::read(data).with_context(|| format!("reading {}", data.display())).map_err(usage)?;
    let config = TrainConfig { lambda, epochs, seed, ..TrainConfig::new(mode) };
    let mut rng = thoughtseq::seeded_rng(seed);
    let w0 = init_weights(data.dim(), data.dim(), &mut rng);
    let trained = train(&config, &data, &w0).map_err(|e| Failure::Check(e.into()))?;
    write_file(out, "forward.txt", &format_matrix(&trained.forward))?;
    write_file(out, "generative.txt", &format_matrix(&trained.effective_generative()))?;
    if let (Some(u), Some(ug)) = (&trained.residue_forward, &trained.residue_generative) {
        write_file(out, "residue_forward.txt", &format_matrix(u))?;
        write_file(out, "residue_generative.txt", &format_matrix(ug))?;
    }
    write_file(out, "epochs.csv", &trained.history_csv())?;
    println!(
        "trained {} epochs: objective {:.6e}, reconstruction {:.6e}",
        trained.history.len(),
        trained.final_objective,
        trained.final_reconstruction
    );
    Ok(())
}

fn tm_failure(e: TmError) -> Failure {
    match e {
        TmError::Runtime(_) | TmError::MalformedTrace(_) => Failure::Check(e.into()),
        _ => usage(e),
    }
}

fn cmd_simulate(tm: &Path, algo: &str, steps: usize, input: &str, out: &Path) -> Outcome {
    let algo: Algo = algo.parse().map_err(usage)?;
    let spec = read_tm(tm).with_context(|| format!("reading {}", tm.display())).map_err(usage)?;
    let input = parse_input(&spec, input).map_err(usage)?;
    let sim = simulate(&spec, &input, steps, algo).map_err(tm_failure)?;
    let trace = trace_csv(&sim.program.model, &sim.execution.sequence).map_err(|e| tm_failure(e.into()))?;
    write_file(out, "trace.csv", &trace)?;
    write_file(out, "configs.csv", &config_csv(&sim.configs).map_err(tm_failure)?)?;
    println!("{} TM steps, {} model steps ({})", sim.model_step_counts.len(), sim.model_steps(), algo.name());
    match first_divergence(&spec, &input, &sim.configs) {
        None => {
            println!("ORACLE MATCH");
            Ok(())
        }
        Some(k) => {
            println!("DIVERGENCE at TM step {k}");
            Err(Failure::Check(anyhow!("decoded configuration differs from the reference at TM step {k}")))
        }
    }
}

fn cmd_complexity(
    mode: ComplexityMode,
    ns: &[usize],
    trials: usize,
    seed: u64,
    variant: VariantArg,
    out: &Path,
) -> Outcome {
    if let Some(&n) = ns.iter().find(|&&n| n < 2) {
        return Err(usage(anyhow!("walk length must be at least 2, got {n}")));
    }
    match mode {
        ComplexityMode::Exact => {
            let mut reports = Vec::new();
            let mut mismatches = Vec::new();
            for &n in ns {
                let formula = p_counts_formula(n).map_err(usage)?;
                let expected = expected_search_steps(n).map_err(usage)?;
                if !formula.partition_holds() {
                    mismatches.push(format!("N={n}: partition identity fails"));
                }
                if n <= BRUTEFORCE_LIMIT {
                    let counted = p_counts_bruteforce(n).map_err(usage)?;
                    let agree = counted.p_counts == formula.p_counts && counted.p_infinity == formula.p_infinity;
                    println!("N={n} E[search]={expected} formula {} enumeration", if agree { "==" } else { "!=" });
                    if !agree {
                        mismatches.push(format!("N={n}: formula and enumeration differ"));
                    }
                    reports.push(formula);
                    reports.push(counted);
                } else {
                    println!("N={n} E[search]={expected} (enumeration skipped above N={BRUTEFORCE_LIMIT})");
                    reports.push(formula);
                }
            }
            write_file(out, "report.csv", &report_csv(&reports))?;
            if !mismatches.is_empty() {
                return Err(Failure::Check(anyhow!(mismatches.join("; "))));
            }
            Ok(())
        }
        ComplexityMode::Montecarlo => {
            let variant = match variant {
                VariantArg::Plain => Variant::Plain,
                VariantArg::Bounded => Variant::Bounded,
            };
            let mut reports = Vec::new();
            let mut points = Vec::new();
            for &n in ns {
                let estimate = montecarlo_search_cost(n, trials, seed, variant).map_err(usage)?;
                println!("N={n} mean={:.6} ci95={:.6}", estimate.mean, estimate.ci95);
                points.push((n, estimate.mean));
                reports.push(montecarlo_report(n, trials, seed, estimate));
            }
            write_file(out, "report.csv", &report_csv(&reports))?;
            if points.len() >= 3 {
                let fit = sqrt_fit(&points).map_err(|e| Failure::Check(e.into()))?;
                println!("fit mean = {:.6} * sqrt(N), r^2 = {:.6}", fit.coefficient, fit.r_squared);
                write_file(out, "fit.csv", &fit.to_csv())?;
            }
            Ok(())
        }
    }
}
