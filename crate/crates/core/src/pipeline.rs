//! Staged batch pipeline over one market.
//!
//! Every stage reads the artifacts of earlier stages from the run directory
//! and writes its own, so any stage can be rerun on its own.
//!
//! | stage        | reads                                 | writes                          |
//! |--------------|---------------------------------------|---------------------------------|
//! | `ingest`     | prices, fundamentals                  | `returns.csv`, `fundamentals.csv` |
//! | `corr`       | `returns.csv` (or prices)             | `rho.csv`, `dist.csv`           |
//! | `centrality` | `rho.csv`                             | `centrality.json`               |
//! | `mst`        | `rho.csv`, `centrality.json`          | `mst.dot`, `mst.json`           |
//! | `mds`        | `rho.csv`                             | `mds.csv`, `mds.json`           |
//! | `regress`    | `centrality.json`, `fundamentals.csv` | `regression.csv`                |
//! | `portfolio`  | `returns.csv`                         | `portfolio.json`                |
//! | `coremap`    | `centrality.json`, `portfolio.json`   | `coremap.json`, `sweep.csv`     |
//!
//! `run` executes all of them in order and then writes `manifest.json`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::centrality::{centrality_report, CentralityReport, MatrixKind, ThetaFormula, DEFAULT_N_PCT};
use crate::coremap::{make_bitstrings, sweep_n, write_sweep_csv, BitStringPair, HammingNorm, Sweep};
use crate::error::{Error, Result};
use crate::ingest::{
    aggregate_fundamentals, load_fundamentals, load_prices_detailed, read_panel_csv, read_sector_fundamentals_csv,
    to_log_returns, write_panel_csv, write_sector_fundamentals_csv, MissingPolicy,
};
use crate::mds::{mds_embed, write_coords_csv, EmbeddingResult, MdsOptions};
use crate::model::{CorrelationNet, PanelData, PanelKind, SizeMetric};
use crate::mst::{backbone_check, minimum_spanning_tree, write_dot, TreeExport};
use crate::network::{pearson_correlation, read_matrix_csv, write_matrix_csv, DEFAULT_POWER};
use crate::portfolio::{covariance, mean_returns, portfolio_solution, PortfolioSolution};
use crate::regression::{regress_on_size, write_regression_csv, RegressionRow};

pub const RETURNS_CSV: &str = "returns.csv";
pub const FUNDAMENTALS_CSV: &str = "fundamentals.csv";
pub const RHO_CSV: &str = "rho.csv";
pub const DIST_CSV: &str = "dist.csv";
pub const CENTRALITY_JSON: &str = "centrality.json";
pub const MST_DOT: &str = "mst.dot";
pub const MST_JSON: &str = "mst.json";
pub const MDS_CSV: &str = "mds.csv";
pub const MDS_JSON: &str = "mds.json";
pub const REGRESSION_CSV: &str = "regression.csv";
pub const PORTFOLIO_JSON: &str = "portfolio.json";
pub const COREMAP_JSON: &str = "coremap.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

/// Every artifact `run` writes besides the manifest, in stage order.
pub const ARTIFACTS: [&str; 13] = [
    RETURNS_CSV,
    FUNDAMENTALS_CSV,
    RHO_CSV,
    DIST_CSV,
    CENTRALITY_JSON,
    MST_DOT,
    MST_JSON,
    MDS_CSV,
    MDS_JSON,
    REGRESSION_CSV,
    PORTFOLIO_JSON,
    COREMAP_JSON,
    SWEEP_CSV,
];

/// Which centrality vector the size regression uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionSource {
    #[default]
    AbsRho,
    RhoPower,
}

fn default_country() -> String {
    "market".into()
}
fn default_period() -> String {
    "full".into()
}
fn default_power() -> u32 {
    DEFAULT_POWER
}
fn default_n_pct() -> f64 {
    DEFAULT_N_PCT
}
fn default_mds_max_iter() -> usize {
    MdsOptions::default().max_iter
}
fn default_mds_tol() -> f64 {
    MdsOptions::default().tol
}
fn default_sweep() -> Vec<f64> {
    (1..=20).map(f64::from).collect()
}

/// All parameters of one market run. Paths in a config file are relative
/// to that file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub prices: PathBuf,
    pub fundamentals: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default = "default_country")]
    pub country: String,
    #[serde(default = "default_period")]
    pub period: String,
    #[serde(default)]
    pub start: Option<NaiveDate>,
    #[serde(default)]
    pub end: Option<NaiveDate>,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
    #[serde(default = "default_power")]
    pub power: u32,
    #[serde(default = "default_n_pct")]
    pub n_pct: f64,
    #[serde(default)]
    pub theta_formula: ThetaFormula,
    #[serde(default)]
    pub regression_source: RegressionSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mds_max_iter")]
    pub mds_max_iter: usize,
    #[serde(default = "default_mds_tol")]
    pub mds_tol: f64,
    /// Risk-appetite weight on expected returns; 0 gives minimum variance.
    #[serde(default)]
    pub portfolio_theta: f64,
    #[serde(default = "default_sweep")]
    pub sweep_n: Vec<f64>,
    #[serde(default)]
    pub hamming_norm: HammingNorm,
}

impl RunConfig {
    pub fn new(prices: impl Into<PathBuf>, fundamentals: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            prices: prices.into(),
            fundamentals: fundamentals.into(),
            out_dir: out_dir.into(),
            country: default_country(),
            period: default_period(),
            start: None,
            end: None,
            missing_policy: MissingPolicy::default(),
            power: default_power(),
            n_pct: default_n_pct(),
            theta_formula: ThetaFormula::default(),
            regression_source: RegressionSource::default(),
            seed: 0,
            mds_max_iter: default_mds_max_iter(),
            mds_tol: default_mds_tol(),
            portfolio_theta: 0.0,
            sweep_n: default_sweep(),
            hamming_norm: HammingNorm::default(),
        }
    }

    pub fn mds_options(&self) -> MdsOptions {
        MdsOptions {
            seed: self.seed,
            max_iter: self.mds_max_iter,
            tol: self.mds_tol,
        }
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Parameter checks that need no data.
    pub fn validate(&self) -> Result<()> {
        if self.power == 0 || self.power % 2 != 0 {
            return Err(Error::InvalidExponent(self.power));
        }
        if !(self.n_pct > 0.0 && self.n_pct.is_finite()) {
            return Err(Error::InvalidInput(format!("n_pct must be positive, got {}", self.n_pct)));
        }
        if self.sweep_n.is_empty() || self.sweep_n.iter().any(|n| !(*n > 0.0 && n.is_finite())) {
            return Err(Error::InvalidInput("sweep_n must be a non-empty list of positive values".into()));
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if s > e {
                return Err(Error::InvalidInput(format!("start {s} is after end {e}")));
            }
        }
        if !(self.mds_tol >= 0.0) {
            return Err(Error::InvalidInput(format!("mds_tol must be nonnegative, got {}", self.mds_tol)));
        }
        if !self.portfolio_theta.is_finite() {
            return Err(Error::InvalidInput("portfolio_theta must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ConfigFile {
    #[serde(rename = "market")]
    markets: Vec<RunConfig>,
}

/// Reads a TOML file of `[[market]]` tables.
pub fn load_config_file(path: impl AsRef<Path>) -> Result<Vec<RunConfig>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ConfigFile =
        toml::from_str(&text).map_err(|e| Error::Schema(format!("{}: {}", path.display(), e.message())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(file
        .markets
        .into_iter()
        .map(|mut c| {
            for p in [&mut c.prices, &mut c.fundamentals, &mut c.out_dir] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            c
        })
        .collect())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open_artifact(path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::Dependency(path.to_path_buf())),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open_artifact(path)?).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn with_writer(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
        ))
    }
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))
}

/// What ingest did to the raw price file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub cells_filled: usize,
    pub first_return: NaiveDate,
    pub last_return: NaiveDate,
    pub n_returns: usize,
    pub n_sectors: usize,
    pub sectors_with_fundamentals: usize,
}

fn returns_from_prices(cfg: &RunConfig) -> Result<(PanelData, crate::ingest::PanelLoad)> {
    let load = load_prices_detailed(&cfg.prices, cfg.missing_policy)?;
    let windowed = load.panel.window(cfg.start, cfg.end)?;
    Ok((to_log_returns(&windowed)?, load))
}

pub fn stage_ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    ensure_out_dir(cfg)?;
    let (returns, load) = returns_from_prices(cfg)?;
    let companies = load_fundamentals(&cfg.fundamentals)?;
    let sectors = aggregate_fundamentals(&companies, returns.sectors())?;
    with_writer(&cfg.artifact(RETURNS_CSV), |w| write_panel_csv(&returns, w))?;
    with_writer(&cfg.artifact(FUNDAMENTALS_CSV), |w| write_sector_fundamentals_csv(&sectors, w))?;
    Ok(IngestSummary {
        rows_read: load.rows_read,
        rows_dropped: load.rows_dropped,
        cells_filled: load.cells_filled,
        first_return: returns.dates()[0],
        last_return: *returns.dates().last().expect("non-empty panel"),
        n_returns: returns.n_dates(),
        n_sectors: returns.n_sectors(),
        sectors_with_fundamentals: sectors.len(),
    })
}

fn read_returns(cfg: &RunConfig) -> Result<PanelData> {
    let path = cfg.artifact(RETURNS_CSV);
    let load = read_panel_csv(open_artifact(&path)?, PanelKind::LogReturns, MissingPolicy::DropRow)?;
    Ok(load.panel)
}

fn read_net(cfg: &RunConfig) -> Result<CorrelationNet> {
    let (sectors, rho) = read_matrix_csv(open_artifact(&cfg.artifact(RHO_CSV))?)?;
    CorrelationNet::from_rho(sectors, rho)
}

/// Correlation network from `returns.csv`, or straight from the price file
/// when `from_prices` is set.
pub fn stage_corr(cfg: &RunConfig, from_prices: bool) -> Result<CorrelationNet> {
    ensure_out_dir(cfg)?;
    let returns = if from_prices {
        returns_from_prices(cfg)?.0
    } else {
        read_returns(cfg)?
    };
    let net = pearson_correlation(&returns)?;
    with_writer(&cfg.artifact(RHO_CSV), |w| write_matrix_csv(net.sectors(), net.rho(), w))?;
    with_writer(&cfg.artifact(DIST_CSV), |w| write_matrix_csv(net.sectors(), net.dist(), w))?;
    Ok(net)
}

/// Both centrality reports: `|rho|` and `rho^c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityArtifact {
    pub abs: CentralityReport,
    pub power: CentralityReport,
}

pub fn stage_centrality(cfg: &RunConfig) -> Result<CentralityArtifact> {
    let net = read_net(cfg)?;
    let artifact = CentralityArtifact {
        abs: centrality_report(&net, MatrixKind::AbsRho, cfg.n_pct, cfg.theta_formula)?,
        power: centrality_report(&net, MatrixKind::RhoPower(cfg.power), cfg.n_pct, cfg.theta_formula)?,
    };
    write_json(&cfg.artifact(CENTRALITY_JSON), &artifact)?;
    Ok(artifact)
}

fn read_centrality(cfg: &RunConfig) -> Result<CentralityArtifact> {
    read_json(&cfg.artifact(CENTRALITY_JSON))
}

/// Spanning tree labelled with the `rho^c` core.
pub fn stage_mst(cfg: &RunConfig) -> Result<TreeExport> {
    let net = read_net(cfg)?;
    let centrality = read_centrality(cfg)?;
    let core = centrality.power.core;
    if centrality.power.sectors != net.sectors() {
        return Err(Error::InvalidInput(format!("{CENTRALITY_JSON} and {RHO_CSV} list different sectors")));
    }
    let tree = minimum_spanning_tree(&net)?;
    let backbone = backbone_check(&tree, &core)?;
    with_writer(&cfg.artifact(MST_DOT), |w| {
        write_dot(&tree, Some(&core), w).map_err(|e| Error::io(cfg.artifact(MST_DOT), e))
    })?;
    let export = TreeExport {
        tree,
        core: Some(core),
        backbone: Some(backbone),
    };
    write_json(&cfg.artifact(MST_JSON), &export)?;
    Ok(export)
}

pub fn stage_mds(cfg: &RunConfig) -> Result<EmbeddingResult> {
    let net = read_net(cfg)?;
    let result = mds_embed(&net, &cfg.mds_options())?;
    with_writer(&cfg.artifact(MDS_CSV), |w| write_coords_csv(&result, w))?;
    write_json(&cfg.artifact(MDS_JSON), &result)?;
    Ok(result)
}

/// One regression per size metric; metrics with fewer than three reporting
/// sectors or no variation get a blank row.
pub fn stage_regress(cfg: &RunConfig) -> Result<Vec<RegressionRow>> {
    let centrality = read_centrality(cfg)?;
    let fundamentals = read_sector_fundamentals_csv(open_artifact(&cfg.artifact(FUNDAMENTALS_CSV))?)?;
    let report = match cfg.regression_source {
        RegressionSource::AbsRho => &centrality.abs,
        RegressionSource::RhoPower => &centrality.power,
    };
    let mut rows = Vec::new();
    for metric in SizeMetric::ALL {
        let fit = match regress_on_size(report, &fundamentals, metric) {
            Ok(fit) => Some(fit),
            Err(e @ (Error::InvalidInput(_) | Error::Degenerate(_))) => {
                log::warn!("{}: skipping {metric} regression: {e}", cfg.country);
                None
            }
            Err(e) => return Err(e),
        };
        rows.push(RegressionRow {
            country: cfg.country.clone(),
            metric,
            period: cfg.period.clone(),
            fit,
        });
    }
    with_writer(&cfg.artifact(REGRESSION_CSV), |w| write_regression_csv(&rows, w))?;
    Ok(rows)
}

pub fn stage_portfolio(cfg: &RunConfig) -> Result<PortfolioSolution> {
    let returns = read_returns(cfg)?;
    let sigma = covariance(&returns)?;
    let expected = mean_returns(&returns);
    let solution = portfolio_solution(
        returns.sectors().to_vec(),
        &sigma,
        cfg.portfolio_theta,
        &expected,
        cfg.n_pct,
        cfg.theta_formula,
    )?;
    write_json(&cfg.artifact(PORTFOLIO_JSON), &solution)?;
    Ok(solution)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoremapArtifact {
    pub bitstrings: BitStringPair,
    #[serde(rename = "D")]
    pub d: f64,
    pub sweep: Sweep,
}

pub fn stage_coremap(cfg: &RunConfig) -> Result<CoremapArtifact> {
    let centrality = read_centrality(cfg)?;
    let portfolio: PortfolioSolution = read_json(&cfg.artifact(PORTFOLIO_JSON))?;
    let report = &centrality.power;
    if report.sectors != portfolio.sectors {
        return Err(Error::InvalidInput(format!("{CENTRALITY_JSON} and {PORTFOLIO_JSON} list different sectors")));
    }
    let bitstrings = make_bitstrings(&report.sectors, &report.x, &portfolio.weights, cfg.n_pct, cfg.theta_formula)?;
    let sweep = sweep_n(
        &report.sectors,
        &report.x,
        &portfolio.weights,
        &cfg.sweep_n,
        cfg.theta_formula,
        cfg.hamming_norm,
    )?;
    let artifact = CoremapArtifact {
        d: bitstrings.distance(),
        bitstrings,
        sweep,
    };
    write_json(&cfg.artifact(COREMAP_JSON), &artifact)?;
    with_writer(&cfg.artifact(SWEEP_CSV), |w| write_sweep_csv(&artifact.sweep, w))?;
    Ok(artifact)
}

/// Everything needed to reproduce a run, plus a few headline results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub distance: String,
    pub centrality_normalization: String,
    pub theta_rule: String,
    pub mds_stress_exponent: u32,
    pub mds_dimension: usize,
    pub mds_init: crate::mds::Initialization,
    pub mds_converged: bool,
    pub ingest: IngestSummary,
    pub ridge_epsilon: f64,
    pub core_power: Vec<String>,
    pub core_abs: Vec<String>,
    pub backbone_connected: bool,
    #[serde(rename = "D")]
    pub d: f64,
    pub artifacts: Vec<String>,
}

fn stage<T>(name: &'static str, result: Result<T>) -> Result<T> {
    result.map_err(|e| e.in_stage(name))
}

/// Full pipeline for one market. Artifacts of completed stages stay on disk
/// when a later stage fails.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    require_file(&cfg.prices)?;
    require_file(&cfg.fundamentals)?;
    let ingest = stage("ingest", stage_ingest(cfg))?;
    stage("corr", stage_corr(cfg, false))?;
    let centrality = stage("centrality", stage_centrality(cfg))?;
    let tree = stage("mst", stage_mst(cfg))?;
    let mds = stage("mds", stage_mds(cfg))?;
    stage("regress", stage_regress(cfg))?;
    let portfolio = stage("portfolio", stage_portfolio(cfg))?;
    let coremap = stage("coremap", stage_coremap(cfg))?;

    let codes = |r: &CentralityReport| r.core_codes().into_iter().map(String::from).collect();
    let manifest = Manifest {
        tool: "sectornet".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        distance: "d = sqrt(2 (1 - rho)) on raw rho".into(),
        centrality_normalization: "sum(x) = 1".into(),
        theta_rule: cfg.theta_formula.describe().into(),
        mds_stress_exponent: mds.stress_exponent,
        mds_dimension: mds.dimension,
        mds_init: mds.init,
        mds_converged: mds.converged,
        ingest,
        ridge_epsilon: portfolio.ridge_epsilon,
        core_power: codes(&centrality.power),
        core_abs: codes(&centrality.abs),
        backbone_connected: tree.backbone.is_some_and(|b| b.is_connected_subtree),
        d: coremap.d,
        artifacts: ARTIFACTS.iter().map(|s| s.to_string()).collect(),
    };
    stage("manifest", write_json(&cfg.artifact(MANIFEST_JSON), &manifest))?;
    Ok(manifest)
}

/// Runs several markets concurrently. Output directories must be distinct.
pub fn run_many(configs: &[RunConfig]) -> Result<Vec<Result<Manifest>>> {
    if configs.is_empty() {
        return Err(Error::EmptyInput("no markets configured"));
    }
    for (i, a) in configs.iter().enumerate() {
        if configs[..i].iter().any(|b| b.out_dir == a.out_dir) {
            return Err(Error::InvalidInput(format!(
                "output directory {} is used by more than one market",
                a.out_dir.display()
            )));
        }
    }
    for cfg in configs {
        cfg.validate()?;
        require_file(&cfg.prices)?;
        require_file(&cfg.fundamentals)?;
    }
    Ok(std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| scope.spawn(move || run_pipeline(cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Numerical("pipeline thread panicked".into()))))
            .collect()
    }))
}
