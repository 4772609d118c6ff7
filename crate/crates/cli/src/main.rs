use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use credit_pricer::market::DemandFamily;
use credit_pricer::pipeline;
use credit_pricer::response::ResponseVariant;
use credit_pricer::{Error, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "credit-pricer", version, about = "Offline RL pricing on synthetic loan markets")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single seed; overrides the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for row-parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Demand family of the generated market.
    #[arg(long, global = true)]
    family: Option<DemandFamily>,
    /// Pins α during training (ablation).
    #[arg(long, global = true)]
    alpha: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a market: dataset.csv and truth.json.
    GenData,
    /// Fit a price-response model on the train split.
    FitResponse {
        #[arg(long)]
        dataset: PathBuf,
        /// logistic, l2:<lambda>, fdpe or neural.
        #[arg(long)]
        variant: Option<ResponseVariant>,
    },
    /// Train the CQL agent on the train split.
    Train {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Price the test split greedily under a fitted model.
    Optimize {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Evaluate policies on the test split.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long = "policy")]
        policies: Vec<PathBuf>,
    },
    /// Response and expected-reward curves for one application.
    Explain {
        #[arg(long)]
        dataset: PathBuf,
        /// Fitted model.json or truth.json.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        app: u64,
    },
    /// Every stage for every seed, then a combined report.
    Run,
}

fn load_config(common: &Common) -> credit_pricer::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(family) = common.family {
        cfg.market.demand_family = family;
    }
    if let Some(alpha) = common.alpha {
        cfg.cql.fixed_alpha = Some(alpha);
    }
    cfg.validate()?;
    // single-seed stages use the first seed; `run` iterates all of them
    let seeds = cfg.seeds.clone();
    let mut cfg = cfg.for_seed(seeds[0]);
    cfg.seeds = seeds;
    Ok(cfg)
}

fn run(cli: Cli) -> credit_pricer::Result<()> {
    let cfg = load_config(&cli.common)?;
    if let Some(jobs) = cli.common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("--jobs: {e}")))?;
    }
    let out = cfg.output_dir.clone();
    let seed = cfg.seeds[0];
    match cli.command {
        Command::GenData => {
            pipeline::gen_data(&cfg, seed, &out)?;
        }
        Command::FitResponse { dataset, variant } => {
            let variant = variant.unwrap_or(cfg.response.variant);
            let model = pipeline::fit_response_stage(&cfg, &dataset, variant, &out)?;
            println!("{}", serde_json::to_string_pretty(&diagnostics(&model))?);
        }
        Command::Train { dataset } => {
            let r = pipeline::train_stage(&cfg, &dataset, &out)?;
            println!("final alpha {:.6}, conservative gap {:.6}", r.final_alpha, r.conservative_gap);
        }
        Command::Optimize { dataset, model } => {
            pipeline::optimize_stage(&cfg, &dataset, &model, &out)?;
        }
        Command::Evaluate {
            dataset,
            truth,
            policies,
        } => {
            let rows = pipeline::evaluate_stage(&cfg, &dataset, truth.as_deref(), &policies, &out)?;
            print!("{}", pipeline::summary_document(&rows));
        }
        Command::Explain { dataset, model, app } => {
            let ex = pipeline::explain_stage(&cfg, &dataset, app, &model, &out)?;
            println!(
                "application {}: behavioral {:.2}%, optimal {:.2}% under {}",
                ex.app_index, ex.behavioral_rate, ex.optimal_rate, ex.model
            );
        }
        Command::Run => {
            let rows = pipeline::run_pipeline(&cfg, &out)?;
            print!("{}", pipeline::summary_document(&rows));
        }
    }
    log::info!("outputs in {}", display(&out));
    Ok(())
}

fn diagnostics(model: &credit_pricer::response::ResponseModel) -> serde_json::Value {
    use credit_pricer::response::ResponseModel;
    match model {
        ResponseModel::Logistic(m) => serde_json::to_value(&m.diagnostics).unwrap_or_default(),
        ResponseModel::Neural(m) => serde_json::to_value(&m.report).unwrap_or_default(),
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = std::env::var("CREDIT_PRICER_LOG").unwrap_or_else(|_| "info".into());
    env_logger::Builder::new().parse_filters(&level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
