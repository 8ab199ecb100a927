use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use placeshift::config::{PipelineConfig, CONFIG_VERSION};
use placeshift::pipeline::{self, AlignInputs, CityInputs, PipelineError};
use placeshift::synthcity::CitySpec;
use placeshift::translation::Method;
use placeshift::{derive_seed, CityId, PlaceId};
use serde_json::json;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "placeshift",
    version,
    long_version = concat!(env!("CARGO_PKG_VERSION"), " (config_version 1)"),
    about = "Learn place embeddings from GPS traces and translate them between cities"
)]
struct Cli {
    /// TOML pipeline configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `paths.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// GPS records to staypoint corpus files.
    Extract {
        #[arg(long)]
        gps: PathBuf,
        /// Grid definition (JSON).
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        city: String,
    },
    /// Trains the sequence model on one corpus directory.
    Train {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Trains one model on two cities with a shared vocabulary.
    TrainJoint {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        other_corpus: PathBuf,
    },
    /// Fits a translation matrix from the source to the target space.
    Align {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Corpus directory of the source city (procrustes only).
        #[arg(long)]
        source_corpus: Option<PathBuf>,
        #[arg(long)]
        target_corpus: Option<PathBuf>,
        #[command(flatten)]
        translation: TranslationFlags,
    },
    /// Applies a translation matrix to an embedding file.
    Translate {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        embedding: PathBuf,
        /// Unit-normalize embedding columns first.
        #[arg(long)]
        normalize: bool,
    },
    /// Validation reports against landuse data.
    Evaluate {
        #[command(subcommand)]
        mode: EvalMode,
    },
    /// Similarity of one source place to every target place.
    Simmap {
        #[arg(long)]
        place: PlaceId,
        /// Translated source embedding.
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Grid of the target city.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Writes a synthetic city pair with ground truth.
    Synth {
        /// City spec (TOML) of the first city; built-in default when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        other_spec: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct TranslationFlags {
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    n_anchors: Option<usize>,
    /// Unit-normalize embedding columns before fitting.
    #[arg(long)]
    normalize: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Procrustes,
    Adversarial,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Procrustes => Method::Procrustes,
            MethodArg::Adversarial => Method::Adversarial,
        }
    }
}

#[derive(Args, Debug)]
struct CityArgs {
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long)]
    landuse: PathBuf,
    #[arg(long)]
    grid: PathBuf,
}

#[derive(Args, Debug)]
struct PairArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    source_landuse: PathBuf,
    #[arg(long)]
    source_grid: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    target_landuse: PathBuf,
    #[arg(long)]
    target_grid: PathBuf,
}

impl PairArgs {
    fn inputs(&self) -> (CityInputs<'_>, CityInputs<'_>) {
        (
            CityInputs {
                embedding: &self.source,
                landuse: &self.source_landuse,
                grid: &self.source_grid,
            },
            CityInputs {
                embedding: &self.target,
                landuse: &self.target_landuse,
                grid: &self.target_grid,
            },
        )
    }
}

#[derive(Subcommand, Debug)]
enum EvalMode {
    /// Same-type distances and similarities within one city.
    Intra(CityArgs),
    /// Same-type similarities between a translated source and a target.
    Inter(PairArgs),
    /// Ranked against random anchor pairing over the configured counts.
    Sweep {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long)]
        source_corpus: PathBuf,
        #[arg(long)]
        target_corpus: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Pipeline(PipelineError),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Pipeline(e)
    }
}

impl Failure {
    fn code_and_kind(&self) -> (u8, &'static str) {
        match self {
            Failure::Usage(_) | Failure::Pipeline(PipelineError::Config(_)) => (EXIT_USAGE, "usage"),
            Failure::Pipeline(e) if e.is_numerical() => (EXIT_NUMERICAL, "numerical"),
            Failure::Pipeline(_) => (EXIT_DATA, "data"),
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Pipeline(e) => e.to_string(),
        }
    }
}

fn report_failure(f: &Failure) -> ExitCode {
    let (code, kind) = f.code_and_kind();
    let body = json!({ "error": { "kind": kind, "exit_code": code, "message": f.message() } });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return report_failure(&Failure::Usage(e.kind().to_string()));
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(f) => report_failure(&f),
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(PipelineError::from)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.paths.out_dir = out.clone();
    }
    Ok(cfg)
}

fn to_json<T: serde::Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("summary serializes")
}

fn load_spec(path: Option<&Path>, fallback: CitySpec) -> Result<CitySpec, Failure> {
    let Some(path) = path else { return Ok(fallback) };
    let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_owned(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<serde_json::Value, Failure> {
    let mut cfg = load_config(&cli)?;
    let out = cfg.paths.out_dir.clone();
    log::debug!("config_version {CONFIG_VERSION}, seed {}", cfg.seed);
    match &cli.command {
        Command::Extract { gps, grid, city } => {
            let city = CityId::new(city.clone()).map_err(|e| Failure::Usage(e.to_string()))?;
            let grid = pipeline::load_grid(grid)?;
            Ok(to_json(&pipeline::run_extract(gps, &grid, city, &cfg, &out)?))
        }
        Command::Train { corpus } => Ok(to_json(&pipeline::run_train(corpus, &cfg, &out)?)),
        Command::TrainJoint { corpus, other_corpus } => {
            Ok(to_json(&pipeline::run_train_joint(corpus, other_corpus, &cfg, &out)?))
        }
        Command::Align {
            source,
            target,
            source_corpus,
            target_corpus,
            translation,
        } => {
            if let Some(m) = translation.method {
                cfg.translation.method = m.into();
            }
            if let Some(n) = translation.n_anchors {
                cfg.translation.n_anchors = n;
            }
            cfg.translation.normalize |= translation.normalize;
            cfg.validate().map_err(PipelineError::from)?;
            let corpora = match (source_corpus, target_corpus) {
                (Some(s), Some(t)) => Some((s.as_path(), t.as_path())),
                (None, None) => None,
                _ => return Err(Failure::Usage("give both --source-corpus and --target-corpus".into())),
            };
            if cfg.translation.method == Method::Procrustes && corpora.is_none() {
                return Err(Failure::Usage("procrustes alignment needs --source-corpus and --target-corpus".into()));
            }
            let inputs = AlignInputs {
                source,
                target,
                corpora,
            };
            Ok(to_json(&pipeline::run_align(&inputs, &cfg, &out)?))
        }
        Command::Translate {
            matrix,
            embedding,
            normalize,
        } => {
            let file = out.join("translated.tsv");
            let x = pipeline::run_translate(matrix, embedding, *normalize || cfg.translation.normalize, &file)?;
            Ok(json!({ "city_id": x.city_id(), "n_places": x.n_places(), "path": file }))
        }
        Command::Evaluate { mode } => match mode {
            EvalMode::Intra(city) => {
                let inputs = CityInputs {
                    embedding: &city.embedding,
                    landuse: &city.landuse,
                    grid: &city.grid,
                };
                let report = pipeline::run_evaluate_intra(&inputs, &cfg, &out.join("intra.json"))?;
                Ok(to_json(&report))
            }
            EvalMode::Inter(pair) => {
                let (src, tgt) = pair.inputs();
                Ok(to_json(&pipeline::run_evaluate_inter(&src, &tgt, &cfg, &out.join("inter.json"))?))
            }
            EvalMode::Sweep {
                pair,
                source_corpus,
                target_corpus,
            } => {
                let (src, tgt) = pair.inputs();
                let curve = pipeline::run_sweep(
                    &src,
                    &tgt,
                    (source_corpus, target_corpus),
                    &cfg,
                    &out.join("sweep.json"),
                )?;
                Ok(to_json(&curve))
            }
        },
        Command::Simmap {
            place,
            source,
            target,
            grid,
        } => {
            let n = pipeline::run_simmap(*place, source, target, grid, &out)?;
            Ok(json!({ "place": place, "n_features": n }))
        }
        Command::Synth { spec, other_spec } => {
            let phi = load_spec(spec.as_deref(), CitySpec::default())?;
            let psi = load_spec(other_spec.as_deref(), CitySpec::default_second())?;
            let dirs = pipeline::synth_pair(&phi, &psi, derive_seed(cfg.seed, "behavior"), &out)?;
            Ok(json!({ "cities": dirs }))
        }
    }
}
