//! Command-line runner: settings from an optional JSON config file,
//! overridden by flags, dispatched to one experiment per subcommand.
//!
//! Every CSV ends with `# key=value` lines holding the command, the master
//! seed and a SHA-256 hash of the effective settings (worker count and
//! output path excluded, since they do not change results).

mod commands;
pub mod table;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conditions::Verdict;
use crate::error::{Error, Result};
pub use table::Table;

/// Effective settings of one run. Every field is optional so a config file
/// may set any subset; flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub dist: Option<String>,
    pub kernel: Option<String>,
    pub gamma: Option<String>,
    pub d: Option<usize>,
    pub k_min: Option<u32>,
    pub k_max: Option<u32>,
    pub budget: Option<usize>,
    pub replicates: Option<usize>,
    pub mode: Option<String>,
    pub theorem: Option<u8>,
    pub region: Option<String>,
    pub lemma: Option<String>,
    pub trials: Option<usize>,
    pub n: Option<usize>,
    pub family: Option<String>,
    pub cutoff: Option<usize>,
    pub panel: Option<usize>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),*) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl Settings {
    /// Parses a JSON config, reporting the line and column of any error.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn overlay(&mut self, other: &Settings) {
        overlay!(
            self, other, experiment, seed, workers, out, dist, kernel, gamma, d, k_min, k_max, budget, replicates, mode, theorem, region, lemma, trials, n,
            family, cutoff, panel
        );
    }

    /// SHA-256 of the canonical JSON form, without workers or output path.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("settings serialize");
        hex::encode(Sha256::digest(&json))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Debug, Parser)]
#[command(name = "slln-lab", version, about = "Strong-law conditions for U-statistics: simulation and numerical checks")]
pub struct Cli {
    /// JSON file with default settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// CSV output path (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate normalized statistic paths at dyadic checkpoints.
    Path(PathArgs),
    /// Evaluate the series conditions of the strong-law theorems.
    Conditions(ConditionsArgs),
    /// Check the hitting-probability inequalities.
    Verify(VerifyArgs),
    /// Test convergence criteria for multi-indexed random series.
    Series(SeriesArgs),
    /// Solve for the truncation constants c_n at n = 2^k.
    Cn(CnArgs),
    /// Certify a normalizing sequence against the regularity assumptions.
    Regularity(RegularityArgs),
    /// Run the experiment named in the config file.
    Run,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Distribution: rademacher, uniform, uniform01, pareto:p, zero.
    #[arg(long)]
    pub dist: Option<String>,
    /// Kernel: product[:s], sum-product, indicator-threshold:t, const:v, zero.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Normalizer: poly:e[:coef] (γ_n = coef·n^e) or const:v.
    #[arg(long)]
    pub gamma: Option<String>,
    /// Kernel arity.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long = "kmin")]
    pub k_min: Option<u32>,
    #[arg(long = "kmax")]
    pub k_max: Option<u32>,
}

#[derive(Debug, Args)]
pub struct PathArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// A, Apr, B, Bpr, MAX or all.
    #[arg(long)]
    pub mode: Option<String>,
    /// Independent paths.
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConditionsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// 1: Zprod terms, 2: conditions (C)/(Cpr), 3: B/C decomposition, 4: two-dimensional criterion.
    #[arg(long)]
    pub theorem: Option<u8>,
    /// Region for theorem 3: intro:a:b, box:w, empty, full or akd.
    #[arg(long)]
    pub region: Option<String>,
    /// Monte-Carlo budget per term.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Panel size per side for the two-dimensional criterion.
    #[arg(long)]
    pub panel: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// d1max, lemma1, lemma2, section or intro.
    #[arg(long)]
    pub lemma: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Sample size (largest size for random instances).
    #[arg(long)]
    pub n: Option<usize>,
    /// Random instances.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Monte-Carlo replicates per instance.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// For intro: intro:a:b.
    #[arg(long)]
    pub region: Option<String>,
}

#[derive(Debug, Args)]
pub struct SeriesArgs {
    /// Dimension of the index set.
    #[arg(long = "dim")]
    pub d: Option<usize>,
    /// geometric, harmonic, constant:c or diagonal[:s].
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Panel size for outer and inner expectations.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub dist: Option<String>,
    /// Simulated partial-sum paths.
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CnArgs {
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long = "kmax")]
    pub k_max: Option<u32>,
    /// Sample size when no closed form exists.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RegularityArgs {
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long = "kmax")]
    pub k_max: Option<u32>,
}

impl ModelArgs {
    fn settings(&self) -> Settings {
        Settings {
            dist: self.dist.clone(),
            kernel: self.kernel.clone(),
            gamma: self.gamma.clone(),
            d: self.d,
            k_min: self.k_min,
            k_max: self.k_max,
            ..Default::default()
        }
    }
}

impl Command {
    fn name(&self) -> Option<&'static str> {
        Some(match self {
            Command::Path(_) => "path",
            Command::Conditions(_) => "conditions",
            Command::Verify(_) => "verify",
            Command::Series(_) => "series",
            Command::Cn(_) => "cn",
            Command::Regularity(_) => "regularity",
            Command::Run => return None,
        })
    }

    fn settings(&self) -> Settings {
        match self {
            Command::Path(a) => Settings { mode: a.mode.clone(), replicates: a.replicates, ..a.model.settings() },
            Command::Conditions(a) => Settings { theorem: a.theorem, region: a.region.clone(), budget: a.budget, replicates: a.replicates, panel: a.panel, ..a.model.settings() },
            Command::Verify(a) => Settings { lemma: a.lemma.clone(), d: a.d, n: a.n, trials: a.trials, replicates: a.replicates, region: a.region.clone(), ..Default::default() },
            Command::Series(a) => Settings {
                d: a.d,
                family: a.family.clone(),
                cutoff: a.cutoff,
                budget: a.budget,
                dist: a.dist.clone(),
                replicates: a.replicates,
                ..Default::default()
            },
            Command::Cn(a) => Settings { dist: a.dist.clone(), k_max: a.k_max, budget: a.budget, ..Default::default() },
            Command::Regularity(a) => Settings { gamma: a.gamma.clone(), d: a.d, k_max: a.k_max, ..Default::default() },
            Command::Run => Settings::default(),
        }
    }
}

/// Resolves the effective settings: config file, then flags.
pub fn resolve(cli: &Cli) -> Result<Settings> {
    let mut settings = match &cli.config {
        Some(path) => Settings::from_json(&std::fs::read_to_string(path)?)?,
        None => Settings::default(),
    };
    let mut flags = cli.command.settings();
    flags.seed = cli.seed;
    flags.workers = cli.workers;
    flags.out = cli.out.clone();
    if let Some(name) = cli.command.name() {
        if settings.experiment.as_deref().is_some_and(|e| e != name) {
            return Err(Error::Config(format!("config is for '{}' but the command is '{name}'", settings.experiment.as_deref().unwrap_or_default())));
        }
        flags.experiment = Some(name.into());
    }
    settings.overlay(&flags);
    if settings.experiment.is_none() {
        return Err(Error::Config("'run' needs a config with an \"experiment\" field".into()));
    }
    Ok(settings)
}

/// Runs the experiment and returns its table with metadata attached.
pub fn execute(settings: &Settings) -> Result<Table> {
    let workers = settings.workers.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let mut table = pool.install(|| commands::dispatch(settings))?;
    let experiment = settings.experiment.clone().unwrap_or_default();
    table.metadata.insert(0, ("command".into(), experiment));
    table.metadata.insert(1, ("seed".into(), settings.seed().to_string()));
    table.metadata.insert(2, ("config_hash".into(), settings.hash()));
    Ok(table)
}

/// Exit status for a finished run: 2 when verdicts were produced and none
/// is conclusive, else 0.
pub fn exit_status(table: &Table) -> i32 {
    if !table.verdicts.is_empty() && table.verdicts.iter().all(|(_, v)| *v == Verdict::Inconclusive) {
        2
    } else {
        0
    }
}

/// Entry point for the binary. Validation and usage errors exit with 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = resolve(&cli).and_then(|s| {
        let table = execute(&s)?;
        match &s.out {
            Some(path) => table.write_csv(&mut std::fs::File::create(path)?)?,
            None => table.write_csv(&mut std::io::stdout().lock())?,
        }
        Ok(table)
    });
    match result {
        Ok(table) => {
            let mut err = std::io::stderr().lock();
            for line in &table.summary {
                let _ = writeln!(err, "{line}");
            }
            for (name, v) in &table.verdicts {
                let _ = writeln!(err, "verdict {name}: {v}");
            }
            exit_status(&table)
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
