//! `wardsource` command line.
//!
//! Exit status: 0 on success, 1 for invalid arguments or input data, 2 when
//! the evidence rules out every hypothesis for some focal case.

use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use wardsource_core::report::{AblationReport, FocalFailure, HeatmapMatrix, InputDigest, PosteriorReport, Provenance};
use wardsource_core::synth::{synthetic_ward, SynthConfig};
use wardsource_core::{
    ingest, load_ward, DataSource, DataToggles, Engine, InferenceError, SourcePosterior, SourcePrior, WardPaths,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_DEGENERATE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "wardsource", version, about = "Infer who infected whom on a hospital ward")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Posterior over infection sources for one or every focal case.
    Posterior(PosteriorArgs),
    /// Posteriors after adding each data source in turn.
    Ablation(AblationArgs),
    /// Write a seeded synthetic ward to a directory.
    Demo(DemoArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct WardArgs {
    /// Cases table: id, onset_date, admission_date, sample_date.
    #[arg(long)]
    cases: PathBuf,
    /// Locations table: id, date, location_code.
    #[arg(long)]
    locations: Option<PathBuf>,
    /// Elicited contact probabilities: id_a, id_b, date, weight.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Aligned genomes; record ids must match case ids.
    #[arg(long)]
    fasta: Option<PathBuf>,
    /// Model settings; defaults apply to every key left out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `uniform` or `noso:<p>`.
    #[arg(long, default_value = "uniform")]
    prior: String,
    /// Directory for report files; reports go to standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Suppress data warnings on standard error.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct PosteriorArgs {
    #[command(flatten)]
    ward: WardArgs,
    #[arg(long, conflicts_with = "all", required_unless_present = "all")]
    focal: Option<String>,
    /// Every case in turn, each against all others.
    #[arg(long)]
    all: bool,
    #[arg(long)]
    no_genetics: bool,
    #[arg(long)]
    no_locations: bool,
    #[arg(long)]
    no_admissions: bool,
}

#[derive(Debug, Args)]
struct AblationArgs {
    #[command(flatten)]
    ward: WardArgs,
    #[arg(long)]
    focal: String,
    /// Order in which sources are added, after onsets.
    #[arg(long, default_value = "genetics,locations,admissions")]
    order: String,
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    candidates: usize,
    #[arg(long, default_value_t = 60)]
    days: i64,
    #[arg(long, default_value_t = 29903)]
    genome_length: usize,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "WARDSOURCE_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Event logs are kept here; in-memory only when absent.
    #[arg(long, env = "WARDSOURCE_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Require `Authorization: Bearer <token>`.
    #[arg(long, env = "WARDSOURCE_TOKEN", hide_env_values = true)]
    token: Option<String>,
    /// Allowed browser origin; repeat for several. Any origin when absent.
    #[arg(long = "cors-origin", env = "WARDSOURCE_CORS_ORIGINS", value_delimiter = ',')]
    cors_origins: Vec<String>,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn invalid(message: impl ToString) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: message.to_string(),
        }
    }
}

impl From<InferenceError> for Failure {
    fn from(e: InferenceError) -> Self {
        let code = match e {
            InferenceError::DegenerateEvidence(_) => EXIT_DEGENERATE,
            _ => EXIT_INVALID,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Posterior(a) => posterior(a),
        Command::Ablation(a) => ablation(a),
        Command::Demo(a) => demo(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn digest(role: &str, path: &Path) -> Result<InputDigest, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    Ok(InputDigest {
        role: role.into(),
        file: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

struct Loaded {
    ward: wardsource_core::WardSnapshot,
    digests: Vec<InputDigest>,
    prior: SourcePrior,
}

fn load(args: &WardArgs) -> Result<Loaded, Failure> {
    let prior: SourcePrior = args.prior.parse().map_err(Failure::invalid)?;
    let paths = WardPaths {
        cases: args.cases.clone(),
        locations: args.locations.clone(),
        weights: args.weights.clone(),
        fasta: args.fasta.clone(),
        config: args.config.clone(),
    };
    let loaded = load_ward(&paths).map_err(Failure::invalid)?;
    if !args.quiet {
        for w in &loaded.warnings {
            eprintln!("warning: {w}");
        }
    }
    let mut digests = vec![digest("cases", &paths.cases)?];
    for (role, path) in [
        ("locations", &paths.locations),
        ("weights", &paths.weights),
        ("fasta", &paths.fasta),
        ("config", &paths.config),
    ] {
        if let Some(p) = path {
            digests.push(digest(role, p)?);
        }
    }
    Ok(Loaded {
        ward: loaded.snapshot,
        digests,
        prior,
    })
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(Failure::invalid)
}

fn emit(out: &Option<PathBuf>, files: &[(String, String)]) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Failure::invalid(format!("{}: {e}", dir.display())))?;
            for (name, contents) in files {
                let path = dir.join(name);
                fs::write(&path, contents).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
            }
        }
        None => {
            if let Some((_, contents)) = files.first() {
                print!("{contents}");
            }
        }
    }
    Ok(())
}

fn provenance_json(p: &Provenance) -> String {
    let mut s = serde_json::to_string_pretty(p).expect("provenance serialises");
    s.push('\n');
    s
}

fn posterior(args: PosteriorArgs) -> Result<i32, Failure> {
    let loaded = load(&args.ward)?;
    let ward = &loaded.ward;
    let toggles = DataToggles {
        use_genetics: !args.no_genetics,
        use_locations: !args.no_locations,
        use_admissions: !args.no_admissions,
    };
    let engine = Engine::new(ward);
    let focals: Vec<String> = match &args.focal {
        Some(f) => {
            if ward.case(f).is_none() {
                return Err(Failure::invalid(format!("unknown focal case `{f}`")));
            }
            vec![f.clone()]
        }
        None => ward.case_ids().map(str::to_string).collect(),
    };
    let prior = &loaded.prior;
    let results: Vec<(String, Result<SourcePosterior, InferenceError>)> = pool(args.ward.threads)?.install(|| {
        focals
            .par_iter()
            .map(|focal| {
                let candidates = engine.candidates_for(focal);
                (focal.clone(), engine.posterior(focal, &candidates, prior, toggles))
            })
            .collect()
    });

    let mut posteriors = Vec::new();
    let mut failures = Vec::new();
    let mut code = EXIT_OK;
    for (focal, result) in results {
        match result {
            Ok(p) => posteriors.push(p),
            Err(e @ InferenceError::DegenerateEvidence(_)) => {
                eprintln!("error: {e}");
                code = EXIT_DEGENERATE;
                failures.push(FocalFailure {
                    focal,
                    error: e.to_string(),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    if args.focal.is_some() && code != EXIT_OK {
        return Ok(code);
    }

    let provenance = Provenance::new(ward, prior.describe(), toggles, loaded.digests);
    let report = PosteriorReport::new(provenance.clone(), &posteriors, failures);
    let ids: Vec<String> = ward.case_ids().map(str::to_string).collect();
    let heatmap = HeatmapMatrix::new(&ids, &posteriors);
    let files = match args.ward.format {
        Format::Json => {
            let mut f = vec![("posterior.json".to_string(), report.to_json())];
            if args.all {
                f.push(("heatmap.json".into(), heatmap.to_json()));
            }
            f
        }
        Format::Csv => {
            let mut f = vec![("posterior.csv".to_string(), report.to_csv())];
            if args.all {
                f.push(("heatmap.csv".into(), heatmap.to_csv()));
            }
            f.push(("provenance.json".into(), provenance_json(&provenance)));
            f
        }
    };
    emit(&args.ward.out, &files)?;
    Ok(code)
}

fn ablation(args: AblationArgs) -> Result<i32, Failure> {
    let order = args
        .order
        .split(',')
        .map(str::parse::<DataSource>)
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::invalid)?;
    let loaded = load(&args.ward)?;
    let ward = &loaded.ward;
    if ward.case(&args.focal).is_none() {
        return Err(Failure::invalid(format!("unknown focal case `{}`", args.focal)));
    }
    let engine = Engine::new(ward);
    let candidates = engine.candidates_for(&args.focal);
    let stages = engine.ablation_sequence(&args.focal, &candidates, &loaded.prior, &order)?;
    let provenance = Provenance::new(ward, loaded.prior.describe(), DataToggles::all(), loaded.digests);
    let report = AblationReport::new(provenance.clone(), &args.focal, &stages);
    let files = match args.ward.format {
        Format::Json => vec![("ablation.json".to_string(), report.to_json())],
        Format::Csv => vec![
            ("ablation.csv".to_string(), report.to_csv()),
            ("provenance.json".into(), provenance_json(&provenance)),
        ],
    };
    emit(&args.ward.out, &files)?;
    Ok(EXIT_OK)
}

fn demo(args: DemoArgs) -> Result<i32, Failure> {
    let ward = synthetic_ward(&SynthConfig {
        seed: args.seed,
        candidates: args.candidates,
        days: args.days.max(2),
        genome_length: args.genome_length,
        ..SynthConfig::default()
    });
    let paths = ingest::write_ward(&ward, &args.out).map_err(Failure::invalid)?;
    println!("wrote {}", paths.cases.display());
    for p in [&paths.locations, &paths.weights, &paths.fasta, &paths.config].into_iter().flatten() {
        println!("wrote {}", p.display());
    }
    Ok(EXIT_OK)
}

fn serve(args: ServeArgs) -> Result<i32, Failure> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let config = wardsource_service::ServiceConfig {
        bind: args.bind,
        data_dir: args.data_dir,
        token: args.token,
        cors_origins: args.cors_origins,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::invalid)?;
    runtime
        .block_on(wardsource_service::serve(config))
        .map_err(Failure::invalid)?;
    Ok(EXIT_OK)
}
