//! Flag/file configuration handling and defaults.

use std::fmt;
use std::path::PathBuf;

use improx::{Error, OuterParams, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Solve,
    Gridsearch,
    GenScenarios,
    Verify,
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subcommand::Solve => "solve",
            Subcommand::Gridsearch => "gridsearch",
            Subcommand::GenScenarios => "gen-scenarios",
            Subcommand::Verify => "verify",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceKind {
    Gas,
    Beam,
    DcToy,
    /// Instance rebuilt from a scenario file written by `gen-scenarios`;
    /// needs `scenario_file` and `file_kind` in the config.
    File,
}

impl fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InstanceKind::Gas => "gas",
            InstanceKind::Beam => "beam",
            InstanceKind::DcToy => "dc-toy",
            InstanceKind::File => "file",
        })
    }
}

fn parse_instance(s: &str) -> Result<InstanceKind> {
    match s {
        "gas" => Ok(InstanceKind::Gas),
        "beam" => Ok(InstanceKind::Beam),
        "dc-toy" => Ok(InstanceKind::DcToy),
        "file" => Ok(InstanceKind::File),
        other => Err(Error::Config(format!(
            "unknown instance '{other}' (expected gas | beam | dc-toy | file)"
        ))),
    }
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("grid '{s}' is not of the form ROWSxCOLS, e.g. 1000x100"));
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let rows: usize = r.trim().parse().map_err(|_| bad())?;
    let cols: usize = c.trim().parse().map_err(|_| bad())?;
    if rows < 2 || cols < 2 {
        return Err(Error::Config("grid needs at least 2 points per axis".into()));
    }
    Ok((rows, cols))
}

/// Raw command-line flags; every field optional so file values can fill in.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Flags {
    /// Instance to build: gas | beam | dc-toy | file
    #[arg(long)]
    pub instance: Option<String>,
    /// Number of scenarios
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Risk/probability level (beam: AVaR level, gas: chance level)
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Sigmoid smoothing parameter (gas)
    #[arg(long)]
    pub theta: Option<f64>,
    /// RNG seed for scenario sampling and random starts
    #[arg(long)]
    pub seed: Option<u64>,
    /// Descent weight kappa, in (0,1)
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Inexactness weight lambda, in [0, kappa)
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Initial prox parameter
    #[arg(long)]
    pub mu0: Option<f64>,
    /// Stopping tolerance on the step norm
    #[arg(long)]
    pub tol: Option<f64>,
    /// Epsilon for the epsilon-active DC model family (default: adaptive)
    #[arg(long = "eps-dc")]
    pub eps_dc: Option<f64>,
    /// Cap on enumerated subgradient tuples per model family
    #[arg(long)]
    pub tuples: Option<usize>,
    /// Grid size ROWSxCOLS for gridsearch
    #[arg(long)]
    pub grid: Option<String>,
    /// Rayon thread count (default: all cores); output is identical either way
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory (default: $IMPROX_OUT_DIR or the working directory)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config file; flags given on the command line take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenario file for --instance file
    #[arg(long = "scenario-file")]
    pub scenario_file: Option<PathBuf>,
    /// Instance family of the scenario file: gas | beam
    #[arg(long = "file-kind")]
    pub file_kind: Option<String>,
}

/// JSON config-file schema: same keys as the long flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_dc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file_kind: Option<String>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub instance: InstanceKind,
    pub n: usize,
    pub alpha: f64,
    pub theta: f64,
    pub seed: u64,
    pub params: OuterParams,
    pub eps_dc: Option<f64>,
    pub tuples: usize,
    pub grid: (usize, usize),
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
    pub scenario_file: Option<PathBuf>,
    pub file_kind: Option<InstanceKind>,
}

impl RunConfig {
    /// Config echo for the report: every resolved value, in the config-file
    /// schema so it can be fed back through `--config` to reproduce the run.
    /// Execution-environment fields (threads, out) are omitted: they do not
    /// affect the results and would break byte-level report comparison.
    pub fn echo(&self) -> PartialConfig {
        PartialConfig {
            instance: Some(self.instance.to_string()),
            n: Some(self.n),
            alpha: Some(self.alpha),
            theta: Some(self.theta),
            seed: Some(self.seed),
            kappa: Some(self.params.kappa),
            lambda: Some(self.params.lambda),
            mu0: Some(self.params.mu0),
            tol: Some(self.params.tol),
            eps_dc: self.eps_dc,
            tuples: Some(self.tuples),
            grid: Some(format!("{}x{}", self.grid.0, self.grid.1)),
            threads: None,
            out: None,
            scenario_file: self.scenario_file.clone(),
            file_kind: self.file_kind.map(|k| k.to_string()),
        }
    }
}

fn load_config_file(path: &PathBuf) -> Result<PartialConfig> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

/// Merges flags over the optional config file and applies per-instance
/// defaults; all range checks happen here, before anything runs.
pub fn resolve(subcommand: Subcommand, flags: &Flags) -> Result<RunConfig> {
    let file = match &flags.config {
        Some(path) => load_config_file(path)?,
        None => PartialConfig::default(),
    };
    let instance_str = flags
        .instance
        .clone()
        .or(file.instance)
        .or_else(|| (subcommand == Subcommand::Verify).then(|| "dc-toy".to_string()))
        .ok_or_else(|| Error::Config("--instance is required".into()))?;
    let instance = parse_instance(&instance_str)?;
    let file_kind = match flags.file_kind.clone().or(file.file_kind) {
        Some(s) => {
            let k = parse_instance(&s)?;
            if !matches!(k, InstanceKind::Gas | InstanceKind::Beam) {
                return Err(Error::Config(format!("file-kind '{s}' must be gas or beam")));
            }
            Some(k)
        }
        None => None,
    };
    let scenario_file = flags.scenario_file.clone().or(file.scenario_file);
    if instance == InstanceKind::File && (scenario_file.is_none() || file_kind.is_none()) {
        return Err(Error::Config(
            "--instance file needs --scenario-file and --file-kind".into(),
        ));
    }

    // effective family for per-instance defaults
    let family = match (instance, file_kind) {
        (InstanceKind::File, Some(k)) => k,
        _ => instance,
    };
    let n = flags.n.or(file.n).unwrap_or(match family {
        InstanceKind::Beam => 100_000,
        InstanceKind::Gas => 10_000,
        _ => 1,
    });
    let alpha = flags.alpha.or(file.alpha).unwrap_or(match family {
        InstanceKind::Beam => 0.999,
        _ => 0.05,
    });
    let theta = flags.theta.or(file.theta).unwrap_or(0.1);
    let seed = flags.seed.or(file.seed).unwrap_or(12);
    let kappa = flags.kappa.or(file.kappa).unwrap_or(0.3);
    let lambda = flags.lambda.or(file.lambda).unwrap_or(0.1);
    let mu0 = flags.mu0.or(file.mu0).unwrap_or(match family {
        InstanceKind::Gas => 2.0,
        _ => kappa,
    });
    let tol = flags.tol.or(file.tol).unwrap_or(1e-6);
    let params = OuterParams::new(kappa, lambda, mu0, tol)?;

    let eps_dc = flags.eps_dc.or(file.eps_dc);
    if let Some(e) = eps_dc {
        if !(e > 0.0) {
            return Err(Error::Config(format!("eps-dc = {e} must be > 0")));
        }
    }
    let tuples = flags.tuples.or(file.tuples).unwrap_or(1);
    if tuples == 0 {
        return Err(Error::Config("tuples must be >= 1".into()));
    }
    let grid = parse_grid(flags.grid.as_deref().or(file.grid.as_deref()).unwrap_or("1000x100"))?;
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {alpha} not in (0,1)")));
    }
    if !(theta > 0.0) {
        return Err(Error::Config(format!("theta = {theta} must be > 0")));
    }
    if n == 0 {
        return Err(Error::Config("N must be >= 1".into()));
    }

    let out_dir = flags
        .out
        .clone()
        .or(file.out)
        .or_else(|| std::env::var_os(crate::OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    Ok(RunConfig {
        subcommand,
        instance,
        n,
        alpha,
        theta,
        seed,
        params,
        eps_dc,
        tuples,
        grid,
        threads: flags.threads.or(file.threads),
        out_dir,
        scenario_file,
        file_kind,
    })
}
