use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use metalogic::config::RunConfig;
use metalogic::logic::{apply_law, counterexample, parse_formula, Law, LawVariant};
use metalogic::pipeline::{run_pipeline, RunOptions, Stage};
use metalogic::templates::template_registry;

#[derive(Parser)]
#[command(name = "metalogic", version, about = "Metamorphic testing of text-to-image models with logically equivalent prompt pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand templates into suite.jsonl
    GenSuite(RunArgs),
    /// Generate both images of every case
    Generate(RunArgs),
    /// Run object detection on generated images
    Detect(RunArgs),
    /// Compare image pairs and write verdicts.jsonl
    Compare(RunArgs),
    /// Aggregate verdicts into report.{json,csv,html} and archive counterexamples
    Report(RunArgs),
    /// Run several stages (all by default)
    Run {
        #[command(flatten)]
        args: RunArgs,
        /// Comma-separated subset of gen-suite,generate,detect,compare,report
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<Stage>>,
    },
    /// Print the template registry
    Templates {
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Check two formulas for logical equivalence (exit 0 if equivalent, 1 if not)
    Eqcheck {
        #[arg(long)]
        formula_a: String,
        #[arg(long)]
        formula_b: String,
    },
    /// Apply one equivalence law at the root of a formula
    Rewrite {
        #[arg(long)]
        formula: String,
        #[arg(long, value_parser = parse_law)]
        law: Law,
        #[arg(long, value_enum, default_value_t = VariantArg::And)]
        variant: VariantArg,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Run directory; overrides output_dir from the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// Redo work even when artifacts exist
    #[arg(long)]
    force: bool,
    /// Suite seed; overrides suite.seed from the config
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    And,
    Or,
}

fn parse_law(s: &str) -> Result<Law, String> {
    Law::from_name(s).ok_or_else(|| format!("unknown law {s:?}"))
}

fn run_stages(args: RunArgs, stages: BTreeSet<Stage>) -> ExitCode {
    let mut config = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    if let Some(seed) = args.seed {
        config.suite.seed = seed;
    }
    let opts = RunOptions {
        stages,
        force: args.force,
    };
    match run_pipeline(config, &opts) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let one = |s: Stage| BTreeSet::from([s]);
    match cli.command {
        Command::GenSuite(a) => run_stages(a, one(Stage::GenSuite)),
        Command::Generate(a) => run_stages(a, one(Stage::Generate)),
        Command::Detect(a) => run_stages(a, one(Stage::Detect)),
        Command::Compare(a) => run_stages(a, one(Stage::Compare)),
        Command::Report(a) => run_stages(a, one(Stage::Report)),
        Command::Run { args, stages } => {
            let stages = stages.map_or_else(|| Stage::ALL.into_iter().collect(), |v| v.into_iter().collect());
            run_stages(args, stages)
        }
        Command::Templates { format } => {
            let reg = template_registry();
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&reg).expect("registry serializes")),
                Format::Text => {
                    for t in &reg {
                        println!("{}\n  A: {}   [{}]\n  B: {}   [{}]", t.id, t.skeleton_a, t.formula_a, t.skeleton_b, t.formula_b);
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Command::Eqcheck { formula_a, formula_b } => {
            let parsed = parse_formula(&formula_a).and_then(|a| Ok((a, parse_formula(&formula_b)?)));
            let (a, b) = match parsed {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match counterexample(&a, &b) {
                Ok(None) => {
                    println!("{}", json!({"equivalent": true}));
                    ExitCode::SUCCESS
                }
                Ok(Some(assignment)) => {
                    let cx: serde_json::Map<String, serde_json::Value> =
                        assignment.iter().map(|(k, v)| (k.to_string(), (*v).into())).collect();
                    println!("{}", json!({"equivalent": false, "counterexample": cx}));
                    ExitCode::from(1)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Rewrite { formula, law, variant } => {
            let variant = match variant {
                VariantArg::And => LawVariant::And,
                VariantArg::Or => LawVariant::Or,
            };
            match parse_formula(&formula).and_then(|f| apply_law(&f, law, variant)) {
                Ok(g) => {
                    println!("{g}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
