use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use sectornet::centrality::ThetaFormula;
use sectornet::coremap::HammingNorm;
use sectornet::ingest::{write_fundamentals_csv, write_panel_csv, MissingPolicy};
use sectornet::pipeline::{self, RegressionSource, RunConfig};
use sectornet::synthetic::{generate, SyntheticConfig};
use sectornet::{Error, ErrorClass};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Sector correlation networks from price panels: centrality cores, spanning
/// trees, MDS maps, size regressions and minimum-variance portfolios.
#[derive(Debug, Parser)]
#[command(name = "sectornet", version)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Log returns and sector-level fundamentals: writes returns.csv and fundamentals.csv.
    Ingest(Opts),
    /// Correlation and distance matrices: writes rho.csv and dist.csv.
    ///
    /// Reads returns.csv from the output directory, or the raw prices when --prices is given.
    Corr(Opts),
    /// Eigenvector centrality of |rho| and rho^c with core labels: writes centrality.json.
    Centrality(Opts),
    /// Minimum spanning tree with core labels: writes mst.dot and mst.json.
    Mst(Opts),
    /// Two-dimensional MDS coordinates: writes mds.csv and mds.json.
    Mds(Opts),
    /// Standardized regressions of centrality on sector size: writes regression.csv.
    Regress(Opts),
    /// Long-only minimum-variance portfolio: writes portfolio.json.
    Portfolio(Opts),
    /// EVC/PWT bit-strings, Hamming distance and n sweep: writes coremap.json and sweep.csv.
    Coremap(Opts),
    /// Every stage in order, then manifest.json.
    ///
    /// With --config, runs each [[market]] of a TOML file concurrently.
    Run(RunOpts),
    /// Write a seeded synthetic one-factor market (prices and company fundamentals).
    Synth(SynthOpts),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ThetaArg {
    /// theta = (n/100) * std
    Std,
    /// theta = (n/100) * std / mean
    Cv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum PolicyArg {
    DropRow,
    ForwardFill,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormArg {
    /// Differing positions divided by N.
    Normalized,
    /// Raw count of differing positions.
    Count,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SourceArg {
    AbsRho,
    RhoPower,
}

#[derive(Debug, Clone, Args)]
struct Opts {
    /// Price panel CSV: `date` column then one column per sector code.
    #[arg(long)]
    prices: Option<PathBuf>,

    /// Company fundamentals CSV: company,sector,market_cap,revenue,employees.
    #[arg(long)]
    fundamentals: Option<PathBuf>,

    /// Run directory holding the artifacts.
    #[arg(long, env = "SECTORNET_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,

    /// Even exponent c for the sharpened matrix rho^c.
    #[arg(long, default_value_t = 32)]
    power: u32,

    /// Threshold percentage n for core and portfolio labels.
    #[arg(long, default_value_t = 2.0)]
    n_pct: f64,

    /// Threshold rule.
    #[arg(long, value_enum, default_value = "std")]
    theta_formula: ThetaArg,

    /// Handling of blank price cells.
    #[arg(long, value_enum, default_value = "drop_row")]
    missing_policy: PolicyArg,

    /// Seed for the MDS fallback initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Market label written to the regression table.
    #[arg(long, default_value = "market")]
    country: String,

    /// Period label written to the regression table.
    #[arg(long, default_value = "full")]
    period: String,

    /// First price date to keep (YYYY-MM-DD).
    #[arg(long)]
    start: Option<NaiveDate>,

    /// Last price date to keep (YYYY-MM-DD).
    #[arg(long)]
    end: Option<NaiveDate>,

    /// Centrality vector used in the size regressions.
    #[arg(long, value_enum, default_value = "abs_rho")]
    regression_source: SourceArg,

    /// Iteration cap for MDS.
    #[arg(long, default_value_t = 1000)]
    mds_max_iter: usize,

    /// Relative stress change at which MDS stops.
    #[arg(long, default_value_t = 1e-9)]
    mds_tol: f64,

    /// Weight on expected returns in the portfolio objective (0 = minimum variance).
    #[arg(long, default_value_t = 0.0)]
    portfolio_theta: f64,

    /// Comma-separated n values for the sweep [default: 1,2,...,20].
    #[arg(long, value_delimiter = ',')]
    sweep_n: Option<Vec<f64>>,

    /// Hamming distance normalization.
    #[arg(long, value_enum, default_value = "normalized")]
    hamming_norm: NormArg,
}

#[derive(Debug, Clone, Args)]
struct RunOpts {
    #[command(flatten)]
    opts: Opts,

    /// TOML file with one [[market]] table per market; other flags are ignored.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct SynthOpts {
    /// Output price CSV.
    #[arg(long, default_value = "prices.csv")]
    prices: PathBuf,

    /// Output company fundamentals CSV.
    #[arg(long, default_value = "fundamentals.csv")]
    fundamentals: PathBuf,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Number of sectors (3 to 10).
    #[arg(long, default_value_t = 10)]
    sectors: usize,

    /// Number of daily returns.
    #[arg(long, default_value_t = 250)]
    days: usize,
}

impl Opts {
    fn config(&self) -> RunConfig {
        let mut cfg = RunConfig::new(
            self.prices.clone().unwrap_or_default(),
            self.fundamentals.clone().unwrap_or_default(),
            self.out_dir.clone(),
        );
        cfg.country = self.country.clone();
        cfg.period = self.period.clone();
        cfg.start = self.start;
        cfg.end = self.end;
        cfg.missing_policy = match self.missing_policy {
            PolicyArg::DropRow => MissingPolicy::DropRow,
            PolicyArg::ForwardFill => MissingPolicy::ForwardFill,
        };
        cfg.power = self.power;
        cfg.n_pct = self.n_pct;
        cfg.theta_formula = match self.theta_formula {
            ThetaArg::Std => ThetaFormula::StdScaled,
            ThetaArg::Cv => ThetaFormula::RawCv,
        };
        cfg.regression_source = match self.regression_source {
            SourceArg::AbsRho => RegressionSource::AbsRho,
            SourceArg::RhoPower => RegressionSource::RhoPower,
        };
        cfg.seed = self.seed;
        cfg.mds_max_iter = self.mds_max_iter;
        cfg.mds_tol = self.mds_tol;
        cfg.portfolio_theta = self.portfolio_theta;
        if let Some(n) = &self.sweep_n {
            cfg.sweep_n = n.clone();
        }
        cfg.hamming_norm = match self.hamming_norm {
            NormArg::Normalized => HammingNorm::Normalized,
            NormArg::Count => HammingNorm::Count,
        };
        cfg
    }
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn require(flag: &str, value: &Option<PathBuf>) -> Result<(), Failure> {
    match value {
        Some(_) => Ok(()),
        None => Err(Failure::Usage(format!("--{flag} is required for this command"))),
    }
}

fn wrote(cfg: &RunConfig, names: &[&str]) {
    for name in names {
        println!("wrote {}", cfg.out_dir.join(name).display());
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    use pipeline::*;
    match command {
        Command::Ingest(o) => {
            require("prices", &o.prices)?;
            require("fundamentals", &o.fundamentals)?;
            let cfg = o.config();
            cfg.validate()?;
            let summary = stage_ingest(&cfg)?;
            println!(
                "{} returns x {} sectors ({} price rows read, {} dropped, {} cells filled)",
                summary.n_returns, summary.n_sectors, summary.rows_read, summary.rows_dropped, summary.cells_filled
            );
            wrote(&cfg, &[RETURNS_CSV, FUNDAMENTALS_CSV]);
        }
        Command::Corr(o) => {
            let cfg = o.config();
            cfg.validate()?;
            stage_corr(&cfg, o.prices.is_some())?;
            wrote(&cfg, &[RHO_CSV, DIST_CSV]);
        }
        Command::Centrality(o) => {
            let cfg = o.config();
            cfg.validate()?;
            let c = stage_centrality(&cfg)?;
            println!("core (rho^{}): {}", cfg.power, c.power.core_codes().join(" "));
            wrote(&cfg, &[CENTRALITY_JSON]);
        }
        Command::Mst(o) => {
            let cfg = o.config();
            cfg.validate()?;
            let t = stage_mst(&cfg)?;
            println!("total weight {}", t.tree.total_weight);
            wrote(&cfg, &[MST_DOT, MST_JSON]);
        }
        Command::Mds(o) => {
            let cfg = o.config();
            cfg.validate()?;
            let r = stage_mds(&cfg)?;
            println!("stress {} after {} iterations (converged: {})", r.stress, r.iterations, r.converged);
            wrote(&cfg, &[MDS_CSV, MDS_JSON]);
        }
        Command::Regress(o) => {
            let cfg = o.config();
            cfg.validate()?;
            for row in stage_regress(&cfg)? {
                match row.fit {
                    Some(f) => println!("{}: beta1 {:.4} p {:.4} n {}", row.metric, f.fit.beta1, f.fit.p1, f.fit.n_obs),
                    None => println!("{}: skipped", row.metric),
                }
            }
            wrote(&cfg, &[REGRESSION_CSV]);
        }
        Command::Portfolio(o) => {
            let cfg = o.config();
            cfg.validate()?;
            let p = stage_portfolio(&cfg)?;
            println!("variance {}", p.variance);
            wrote(&cfg, &[PORTFOLIO_JSON]);
        }
        Command::Coremap(o) => {
            let cfg = o.config();
            cfg.validate()?;
            let c = stage_coremap(&cfg)?;
            println!("D = {} at n = {}", c.d, cfg.n_pct);
            wrote(&cfg, &[COREMAP_JSON, SWEEP_CSV]);
        }
        Command::Run(r) => match &r.config {
            Some(path) => {
                let markets = load_config_file(path)?;
                let mut first_error = None;
                for (cfg, result) in markets.iter().zip(run_many(&markets)?) {
                    match result {
                        Ok(m) => println!("{}: D = {}, manifest in {}", cfg.country, m.d, cfg.out_dir.display()),
                        Err(e) => {
                            eprintln!("{}: {}", cfg.country, render(&e));
                            first_error.get_or_insert(e);
                        }
                    }
                }
                if let Some(e) = first_error {
                    return Err(Failure::Run(e));
                }
            }
            None => {
                require("prices", &r.opts.prices)?;
                require("fundamentals", &r.opts.fundamentals)?;
                let cfg = r.opts.config();
                let m = run_pipeline(&cfg)?;
                println!("core (rho^{}): {}", cfg.power, m.core_power.join(" "));
                println!("D = {} at n = {}", m.d, cfg.n_pct);
                wrote(&cfg, &ARTIFACTS);
                wrote(&cfg, &[MANIFEST_JSON]);
            }
        },
        Command::Synth(s) => {
            let config = SyntheticConfig {
                n_sectors: s.sectors,
                n_returns: s.days,
                ..SyntheticConfig::default()
            };
            let market = generate(s.seed, &config)?;
            let create = |p: &PathBuf| File::create(p).map(BufWriter::new).map_err(|e| io_failure(p, e));
            write_panel_csv(&market.prices, create(&s.prices)?)?;
            write_fundamentals_csv(&market.companies, create(&s.fundamentals)?)?;
            println!("wrote {}", s.prices.display());
            println!("wrote {}", s.fundamentals.display());
        }
    }
    Ok(())
}

fn io_failure(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::Run(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn render(e: &Error) -> String {
    let mut text = e.to_string();
    let mut source = std::error::Error::source(e);
    // Stage and Io messages already embed their source
    if matches!(e, Error::Stage { .. } | Error::Io { .. } | Error::Json { .. }) {
        source = None;
    }
    while let Some(s) = source {
        text.push_str(": ");
        text.push_str(&s.to_string());
        source = s.source();
    }
    text
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(match e.class() {
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Numerical => EXIT_NUMERICAL,
            })
        }
    }
}
