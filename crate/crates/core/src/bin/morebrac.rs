use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use morebrac::pipeline::{emit_report, run_matrix, Ablation, Pipeline, RunConfig, Stage, Variant};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    GenerateData,
    TrainSim,
    TrainVae,
    Synthesize,
    TrainPolicy,
    Evaluate,
    /// Every stage in order.
    Run,
    /// Every (seed, ablation) cell plus a summary table.
    Matrix,
    /// Charts and progress table from existing metrics.
    Report,
}

#[derive(Debug, Parser)]
#[command(name = "morebrac", version, about = "Model-based data synthesis for offline RL")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Restrict to one seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Ablation switch; repeatable.
    #[arg(long, value_parser = parse_ablation)]
    ablate: Vec<Ablation>,
    /// Rerun stages whose artifacts are up to date.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse().map_err(|e: morebrac::Error| e.to_string())
}

fn stage(c: Command) -> Option<Stage> {
    Some(match c {
        Command::GenerateData => Stage::GenerateData,
        Command::TrainSim => Stage::TrainSim,
        Command::TrainVae => Stage::TrainVae,
        Command::Synthesize => Stage::Synthesize,
        Command::TrainPolicy => Stage::TrainPolicy,
        Command::Evaluate => Stage::Evaluate,
        _ => return None,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let config = match RunConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let out = cli.out.clone().unwrap_or_else(|| config.out_dir.clone());
    let seeds = cli.seed.map_or_else(|| config.seeds.clone(), |s| vec![s]);
    let variant: Variant = cli.ablate.iter().copied().collect();

    let result = match cli.command {
        Command::Report => emit_report(&out).map(|s| {
            println!("{} runs, {} points, {} malformed lines skipped", s.runs, s.points, s.skipped);
            0
        }),
        Command::Matrix => {
            let mut variants = config.matrix_variants();
            for a in &cli.ablate {
                let v = Variant::single(*a);
                if !variants.contains(&v) {
                    variants.push(v);
                }
            }
            run_matrix(&config, &out, &seeds, &variants, cli.force).map(|r| {
                print!("{}", morebrac::pipeline::summary_tsv(&r));
                if r.failures() > 0 {
                    3
                } else {
                    0
                }
            })
        }
        cmd => seeds.iter().try_fold(0, |_, &seed| {
            let p = Pipeline::new(config.clone(), &out, seed, cli.force)?;
            match stage(cmd) {
                Some(s) => p.run(s, &variant).map(|_| 0),
                None => p.run_all(&variant).map(|e| {
                    println!("seed {seed} {}: normalized score {:.2}", variant.name(), e.score);
                    0
                }),
            }
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
