use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use dataprice::anchor::{anchor_for_year, AnchorDataset};
use dataprice::calibration::{default_blend_weight, fit_ols, parse_observed_deals, refresh_prior, FitResult};
use dataprice::report::{fixed_sig, run_pipeline, run_price, run_validate, sig, write_samples_csv, Run, Timing};
use dataprice::scenario::PriorSection;
use dataprice::{Error, ErrorKind, Lever, PriorSpec, Scenario};
use serde::Serialize;

/// Prior-predictive price bands for data products.
#[derive(Parser)]
#[command(name = "dataprice", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price the scenario's single deal.
    Price(RunArgs),
    /// Price a pipeline of deals drawn from the scenario's mix.
    Pipeline(RunArgs),
    /// Print the baseline anchor b0 for a year (or every year).
    Anchor(AnchorArgs),
    /// Fit elasticities to observed deals and refresh the scenario's prior.
    Calibrate(CalibrateArgs),
    /// Check a scenario without simulating.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the machine-readable JSON report instead of text.
    #[arg(long)]
    json: bool,
    /// Write every simulated price to this CSV file.
    #[arg(long)]
    samples_out: Option<PathBuf>,
    /// Leave wall-clock fields (timestamp, runtime) out of the report.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args)]
struct AnchorArgs {
    #[arg(long)]
    year: Option<i32>,
    /// Anchor dataset file; defaults to the built-in table.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Observed deals file (TOML, one [[deal]] table per transaction).
    deals: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// Weight in [0, 1] given to the fit; defaults to n / (n + 20).
    #[arg(long)]
    blend: Option<f64>,
    /// Write the scenario with the refreshed prior to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Price(args) => run(args, run_price),
        Command::Pipeline(args) => run(args, run_pipeline),
        Command::Anchor(args) => anchor(args),
        Command::Calibrate(args) => calibrate(args),
        Command::Validate(args) => validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Sampling => 3,
                ErrorKind::Io => 4,
            })
        }
    }
}

fn run(args: RunArgs, price: fn(&Scenario) -> dataprice::Result<Run>) -> dataprice::Result<()> {
    let mut scenario = Scenario::from_path(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.plan.seed = seed;
    }
    let start = Instant::now();
    let Run { mut report, samples } = price(&scenario)?;
    let elapsed = start.elapsed().as_secs_f64();
    let worlds_per_second = report.telemetry.worlds as f64 / elapsed.max(1e-9);
    eprintln!(
        "diagnostics: {} worlds, acceptance {:.4}, {:.0} worlds/s",
        report.telemetry.worlds, report.telemetry.acceptance_rate, worlds_per_second
    );
    if !args.no_timestamp {
        report.generated_at_unix = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
        report.timing = Some(Timing {
            elapsed_ms: elapsed * 1e3,
            worlds_per_second,
        });
    }
    if let Some(path) = &args.samples_out {
        let file = File::create(path).map_err(|err| Error::io(path, &err))?;
        let mut out = BufWriter::new(file);
        write_samples_csv(&samples, &mut out)
            .and_then(|()| out.flush())
            .map_err(|err| Error::io(path, &err))?;
    }
    if args.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

#[derive(Serialize)]
struct AnchorLine {
    year: i32,
    b0: f64,
    is_projection: bool,
    economy_value_usd: f64,
    data_volume_zb: f64,
    published_b0: Option<f64>,
    dataset: String,
}

fn anchor(args: AnchorArgs) -> dataprice::Result<()> {
    let (dataset, name) = match &args.dataset {
        Some(path) => (AnchorDataset::load(path)?, path.display().to_string()),
        None => (AnchorDataset::embedded(), "embedded".to_owned()),
    };
    let years: Vec<i32> = match args.year {
        Some(year) => vec![year],
        None => dataset.rows.iter().map(|r| r.year).collect(),
    };
    let mut lines = Vec::with_capacity(years.len());
    for year in years {
        let anchor = anchor_for_year(year, &dataset)?;
        let row = dataset.row(year).expect("anchor_for_year found the row");
        lines.push(AnchorLine {
            year,
            b0: anchor.b0,
            is_projection: anchor.is_projection,
            economy_value_usd: row.economy_value_usd,
            data_volume_zb: row.data_volume_zb,
            published_b0: row.published_b0,
            dataset: name.clone(),
        });
    }
    if args.json {
        let json = if args.year.is_some() {
            serde_json::to_string_pretty(&lines[0])
        } else {
            serde_json::to_string_pretty(&lines)
        };
        println!("{}", json.expect("anchor lines serialize"));
        return Ok(());
    }
    for line in &lines {
        println!(
            "{}  b0 = {} USD/MB  ({} $B / {} ZB, {}, {} dataset)",
            line.year,
            sig(line.b0, 4),
            fixed_sig(line.economy_value_usd / 1e9, 5),
            line.data_volume_zb,
            if line.is_projection { "projection" } else { "estimate" },
            line.dataset
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct CalibrationReport {
    fit: FitResult,
    blend_weight: f64,
    old_prior: PriorSpec,
    refreshed_prior: PriorSpec,
}

fn calibrate(args: CalibrateArgs) -> dataprice::Result<()> {
    let text = std::fs::read_to_string(&args.deals).map_err(|err| Error::io(&args.deals, &err))?;
    let deals = parse_observed_deals(&text)?;
    let mut scenario = Scenario::from_path(&args.scenario)?;
    let old = scenario.resolve()?.prior;
    let fit = fit_ols(&deals)?;
    let weight = args.blend.unwrap_or_else(|| default_blend_weight(fit.n));
    let refreshed = refresh_prior(&old, &fit, weight)?;

    if let Some(path) = &args.out {
        scenario.anchor.b0 = Some(refreshed.b0);
        scenario.anchor.year = None;
        scenario.anchor.dataset = None;
        scenario.prior = PriorSection::from(&refreshed);
        write_file(path, &scenario.to_toml())?;
    }

    let report = CalibrationReport {
        fit,
        blend_weight: weight,
        old_prior: old,
        refreshed_prior: refreshed,
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("calibration report serializes"));
    } else {
        print_calibration(&report);
        if let Some(path) = &args.out {
            println!("refreshed scenario written to {} (anchor now explicit b0)", path.display());
        }
    }
    Ok(())
}

fn print_calibration(report: &CalibrationReport) {
    let fit = &report.fit;
    println!(
        "fit: n = {}, sigma_hat = {}, condition number = {}",
        fit.n,
        fixed_sig(fit.sigma_hat, 4),
        sig(fit.condition_number, 3)
    );
    println!("{:<12} {:>11} {:>10}", "", "estimate", "s.e.");
    println!("{:<12} {:>11.4} {:>10.4}", "alpha", fit.alpha_hat, fit.alpha_se);
    for lever in Lever::ALL {
        let j = lever.index();
        println!(
            "{:<12} {:>11.4} {:>10.4}",
            format!("beta.{}", lever.code()),
            fit.beta_hat[j],
            fit.beta_se[j]
        );
    }
    let (old, new) = (&report.old_prior, &report.refreshed_prior);
    println!("blend weight w = {:.4}", report.blend_weight);
    println!("{:<12} {:>22} {:>22}", "", "prior (mean, sd)", "refreshed (mean, sd)");
    println!(
        "{:<12} {:>22} {:>22}",
        "b0",
        sig(old.b0, 4),
        sig(new.b0, 4)
    );
    println!(
        "{:<12} {:>22} {:>22}",
        "s_alpha",
        fixed_sig(old.s_alpha, 4),
        fixed_sig(new.s_alpha, 4)
    );
    for lever in Lever::ALL {
        let j = lever.index();
        println!(
            "{:<12} {:>22} {:>22}",
            format!("beta.{}", lever.code()),
            format!("{:.4}, {:.4}", old.mu[j], old.s[j]),
            format!("{:.4}, {:.4}", new.mu[j], new.s[j])
        );
    }
    println!(
        "{:<12} {:>22} {:>22}",
        "s_sigma",
        fixed_sig(old.s_sigma, 4),
        fixed_sig(new.s_sigma, 4)
    );
}

fn validate(args: ValidateArgs) -> dataprice::Result<()> {
    let scenario = Scenario::from_path(&args.scenario)?;
    let report = run_validate(&scenario)?;
    if args.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> dataprice::Result<()> {
    std::fs::write(path, contents).map_err(|err| Error::io(path, &err))
}
