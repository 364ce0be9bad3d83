//! `ssmrom`: learn spectral-submanifold reduced-order models from data.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssm_core::pipeline::{
    run_frc, run_oracle_compare, run_orderscan, run_pipeline, run_simulate, write_csv_rows, PipelineConfig, Stage,
    StageError,
};

#[derive(Parser)]
#[command(name = "ssmrom", version, about = "Data-driven SSM reduced-order models")]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    config: PathBuf,

    /// Output directory; defaults to `outputs.directory` of the config.
    #[arg(short, long)]
    out: Option<PathBuf>,

    /// Noise seed; defaults to `seed` of the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Embed, fit the chart and normal form, and write model files and
    /// response curves.
    Pipeline(Common),
    /// Compare the data-driven polar model with the invariance-equation
    /// oracle on a synthetic slow-fast system.
    OracleCompare(Common),
    /// Conjugacy error against normal-form order.
    Orderscan {
        #[command(flatten)]
        common: Common,
        /// Orders to fit, e.g. `3,5,7`; defaults to `orderscan.orders`.
        #[arg(long, value_delimiter = ',')]
        orders: Vec<usize>,
    },
    /// Integrate the configured synthetic trajectories to CSV.
    Simulate(Common),
    /// Backbone and forced response curves of a saved model.
    Frc {
        #[command(flatten)]
        common: Common,
        /// `model.json` written by `pipeline`.
        #[arg(long)]
        model: PathBuf,
    },
}

fn input_error(e: ssm_core::Error) -> StageError {
    StageError {
        stage: Stage::Input,
        source: e,
    }
}

struct Setup {
    cfg: PipelineConfig,
    out: PathBuf,
    seed: u64,
}

fn setup(c: &Common) -> Result<Setup, StageError> {
    let cfg = PipelineConfig::load(&c.config).map_err(input_error)?;
    let out = c.out.clone().unwrap_or_else(|| cfg.outputs.directory.clone());
    let seed = c.seed.unwrap_or(cfg.seed);
    Ok(Setup { cfg, out, seed })
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<(), StageError> {
    let mut text = serde_json::to_string_pretty(v).expect("serializable report");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| input_error(ssm_core::Error::io(path, e)))
}

fn create_dir(dir: &Path) -> Result<(), StageError> {
    std::fs::create_dir_all(dir).map_err(|e| input_error(ssm_core::Error::io(dir, e)))
}

fn pipeline(c: &Common) -> Result<(), StageError> {
    let s = setup(c)?;
    let out = run_pipeline(&s.cfg, s.seed)?;
    out.write(&s.cfg, &s.out).map_err(input_error)?;
    let m = &out.metrics;
    println!("chart residual      {:.3e}", m.chart_residual);
    println!("conjugacy residual  {:.3e} (mean)", m.mean_conjugacy_residual);
    if let Some(t) = m.train_nmte {
        println!("train NMTE          {t:.3e}");
    }
    if let Some(t) = m.test_nmte {
        println!("test NMTE           {t:.3e}");
    }
    if let Some(p) = &out.polar {
        for (j, mode) in p.modes.iter().enumerate() {
            println!("mode {j}: alpha {:?}  omega {:?}", mode.alpha_coeffs, mode.omega_coeffs);
        }
    }
    println!("wrote {}", s.out.display());
    Ok(())
}

fn oracle_compare(c: &Common) -> Result<(), StageError> {
    let s = setup(c)?;
    let (cmp, out) = run_oracle_compare(&s.cfg, s.seed)?;
    out.write(&s.cfg, &s.out).map_err(input_error)?;
    write_json(&s.out.join("comparison.json"), &cmp)?;
    let worst = cmp.invariance_residual.iter().copied().fold(0.0, f64::max);
    println!("oracle invariance residual {worst:.3e}");
    for c in &cmp.coefficients {
        println!("{:<8} oracle {:>12.6e}  data {:>12.6e}  rel error {:.2e}", c.name, c.oracle, c.data, c.error);
    }
    println!(
        "{} (threshold {})",
        if cmp.pass { "PASS" } else { "FAIL" },
        cmp.threshold
    );
    Ok(())
}

fn orderscan(c: &Common, orders: &[usize]) -> Result<(), StageError> {
    let s = setup(c)?;
    let orders = if orders.is_empty() {
        s.cfg.orderscan.as_ref().map(|o| o.orders.clone()).unwrap_or_default()
    } else {
        orders.to_vec()
    };
    let rows = run_orderscan(&s.cfg, &orders, s.seed)?;
    create_dir(&s.out)?;
    let path = s.out.join("orderscan.csv");
    write_csv_rows(&path, &rows).map_err(input_error)?;
    println!("{:>3}  {:>12}  {:>12}", "N", "train", "test");
    for r in &rows {
        let test = r.test_error.map_or("-".to_string(), |t| format!("{t:.4e}"));
        println!("{:>3}  {:>12.4e}  {:>12}", r.order, r.train_error, test);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn simulate(c: &Common) -> Result<(), StageError> {
    let s = setup(c)?;
    let files = run_simulate(&s.cfg, s.seed, &s.out)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn frc(c: &Common, model: &Path) -> Result<(), StageError> {
    let s = setup(c)?;
    run_frc(&s.cfg, model, &s.out)?;
    println!("wrote {}", s.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Pipeline(c) => pipeline(c),
        Command::OracleCompare(c) => oracle_compare(c),
        Command::Orderscan { common, orders } => orderscan(common, orders),
        Command::Simulate(c) => simulate(c),
        Command::Frc { common, model } => frc(common, model),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
