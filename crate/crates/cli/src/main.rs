use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use clipgraph::config::{PipelineConfig, CONFIG_ENV};
use clipgraph::corpus_gen::{generate_corpus, write_corpus, CorpusSpec, GroundTruthManifest, InjectionSpec};
use clipgraph::eval::evaluate_dir;
use clipgraph::fingerprint::{read_fingerprint, write_fingerprint_file, Fingerprint, FINGERPRINT_MAGIC};
use clipgraph::match_db::{MatchDb, DB_MAGIC};
use clipgraph::pipeline::{fingerprint_file, ingest, organise, OrganiseOptions};

/// Organise concert recordings into events and rank them by quality.
#[derive(Parser, Debug)]
#[command(name = "clipgraph", version)]
struct Cli {
    /// Config file (`key = value` lines).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads for fingerprinting and matching (default: all cores).
    #[arg(long, short, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus of WAV clips plus manifest.json.
    GenCorpus(GenCorpusArgs),
    /// Fingerprint every WAV in a directory into a database file.
    Ingest(IngestArgs),
    /// Match, filter, cluster and rank a database; write reports.
    Organise(OrganiseArgs),
    /// Score reports against a ground-truth manifest.
    Eval(EvalArgs),
    /// Print a fingerprint as JSON, or save it as a CLFP file.
    DumpFingerprint(DumpArgs),
}

#[derive(Args, Debug)]
struct GenCorpusArgs {
    #[arg(long, default_value_t = 2017)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    songs: usize,
    /// Clips per song including the reference, as `LO:HI`.
    #[arg(long, default_value = "5:9", value_parser = parse_usize_range)]
    clips_per_song: (usize, usize),
    /// User clip SNR in dB, as `LO:HI`.
    #[arg(long, default_value = "5:25", value_parser = parse_f64_range, allow_hyphen_values = true)]
    snr_range: (f64, f64),
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Directory of WAV files (default: `input_dir` from the config).
    dir: Option<PathBuf>,
    /// Database to write (default: `db_path` from the config, else clips.cldb).
    #[arg(long)]
    db: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OrganiseArgs {
    /// Database file (default: `db_path` from the config).
    db: Option<PathBuf>,
    /// Report directory (default: `out_dir` from the config, else reports).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip false-positive filtering.
    #[arg(long)]
    no_filter: bool,
    /// Ground-truth manifest; marks references in the rankings and is
    /// copied next to the reports.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Plant false positives before filtering (needs --manifest).
    #[arg(long)]
    inject: bool,
    #[arg(long, default_value_t = InjectionSpec::default().seed)]
    inject_seed: u64,
    #[arg(long, default_value_t = InjectionSpec::default().sample_level)]
    inject_sample_level: usize,
    #[arg(long, default_value_t = InjectionSpec::default().landmark_level)]
    inject_landmark_level: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory holding the organise reports.
    reports: PathBuf,
    /// Manifest (default: manifest.json inside the report directory).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DumpArgs {
    /// A WAV, CLFP or CLDB file.
    input: PathBuf,
    /// Sample to dump from a database (default: all).
    #[arg(long)]
    id: Option<String>,
    /// Write a CLFP file instead of printing JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_range<T: std::str::FromStr + PartialOrd>(s: &str) -> Result<(T, T), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected LO:HI, got `{s}`"))?;
    let lo: T = lo.trim().parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: T = hi.trim().parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    if lo > hi {
        return Err(format!("empty range `{s}`"));
    }
    Ok((lo, hi))
}

fn parse_usize_range(s: &str) -> Result<(usize, usize), String> {
    parse_range(s)
}

fn parse_f64_range(s: &str) -> Result<(f64, f64), String> {
    parse_range(s)
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| clipgraph::Error::Input(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn required(path: Option<PathBuf>, fallback: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    match path.or_else(|| fallback.cloned()) {
        Some(p) => Ok(p),
        None => Err(clipgraph::Error::Input(format!("no {what} given")).into()),
    }
}

/// Print to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn gen_corpus(args: GenCorpusArgs) -> Result<()> {
    let spec = CorpusSpec {
        seed: args.seed,
        n_songs: args.songs,
        clips_per_song: args.clips_per_song,
        snr_db: args.snr_range,
        ..CorpusSpec::default()
    };
    let corpus = generate_corpus(&spec)?;
    write_corpus(&corpus, &args.out)?;
    println!(
        "wrote {} clips of {} songs to {} (song redraws {}, clip redraws {})",
        corpus.clips.len(),
        spec.n_songs,
        args.out.display(),
        corpus.manifest.song_redraws,
        corpus.manifest.clip_redraws
    );
    Ok(())
}

fn cmd_ingest(args: IngestArgs, cfg: &PipelineConfig) -> Result<()> {
    let dir = required(args.dir, cfg.input_dir.as_ref(), "input directory")?;
    let db_path = args
        .db
        .or_else(|| cfg.db_path.clone())
        .unwrap_or_else(|| PathBuf::from("clips.cldb"));
    let out = ingest(&dir, &cfg.fingerprint)?;
    if out.db.is_empty() {
        log::warn!("no WAV files in {}", dir.display());
    }
    for (path, reason) in &out.failures {
        eprintln!("skipped {}: {reason}", path.display());
    }
    out.db.save(&db_path)?;
    println!(
        "{} clips, {} landmarks -> {}",
        out.db.len(),
        out.db.index_entries(),
        db_path.display()
    );
    Ok(())
}

fn cmd_organise(args: OrganiseArgs, cfg: &PipelineConfig) -> Result<()> {
    let db_path = required(args.db, cfg.db_path.as_ref(), "database")?;
    let out_dir = args
        .out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("reports"));
    let db = MatchDb::load(&db_path).with_context(|| format!("loading {}", db_path.display()))?;
    let manifest = args
        .manifest
        .as_deref()
        .map(|p| GroundTruthManifest::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    if args.inject && manifest.is_none() {
        bail!(clipgraph::Error::Input("--inject needs --manifest".into()));
    }
    let opts = OrganiseOptions {
        no_filter: args.no_filter,
        inject: args.inject.then(|| InjectionSpec {
            seed: args.inject_seed,
            sample_level: args.inject_sample_level,
            landmark_level: args.inject_landmark_level,
            t_l: cfg.filter.t_l,
            ..InjectionSpec::default()
        }),
    };
    let result = organise(&db, cfg, manifest, &opts)?;
    result.write(&out_dir, true)?;
    let r = &result.cluster_report;
    println!(
        "{} clusters, {} unmatched, filtering {} -> {}",
        r.clusters.len(),
        r.unmatched.len(),
        if r.filtered { "on" } else { "off" },
        out_dir.display()
    );
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let manifest_path = args.manifest.unwrap_or_else(|| args.reports.join("manifest.json"));
    let manifest =
        GroundTruthManifest::load(&manifest_path).with_context(|| format!("loading {}", manifest_path.display()))?;
    let report = evaluate_dir(&args.reports, &manifest)?;
    emit(&report.summary())
}

fn dump(fps: &[Fingerprint], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let [fp] = fps else {
                bail!(clipgraph::Error::Input(format!(
                    "--out writes one fingerprint, selected {}",
                    fps.len()
                )));
            };
            write_fingerprint_file(path, fp)?;
        }
        None => {
            let json: Vec<_> = fps.iter().map(Fingerprint::to_json).collect();
            let value = match <[_; 1]>::try_from(json) {
                Ok([one]) => one,
                Err(many) => serde_json::Value::Array(many),
            };
            emit(&(serde_json::to_string_pretty(&value)? + "\n"))?;
        }
    }
    Ok(())
}

fn cmd_dump(args: DumpArgs, cfg: &PipelineConfig) -> Result<()> {
    let bytes = std::fs::read(&args.input).map_err(|e| clipgraph::Error::io(&args.input, e))?;
    let fps = if bytes.starts_with(DB_MAGIC) {
        let db = MatchDb::from_bytes(&bytes)?;
        match &args.id {
            Some(id) => vec![db
                .get(id)
                .cloned()
                .ok_or_else(|| clipgraph::Error::Input(format!("no sample {id:?} in the database")))?],
            None => db.fingerprints().to_vec(),
        }
    } else if bytes.starts_with(FINGERPRINT_MAGIC) {
        let mut fps = Vec::new();
        let mut r = bytes.as_slice();
        while let Some(fp) = read_fingerprint(&mut r)? {
            fps.push(fp);
        }
        fps
    } else {
        vec![fingerprint_file(&args.input, &cfg.fingerprint)?]
    };
    dump(&fps, args.out.as_deref())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Ingest(a) => cmd_ingest(a, &cfg),
        Command::Organise(a) => cmd_organise(a, &cfg),
        Command::Eval(a) => cmd_eval(a),
        Command::DumpFingerprint(a) => cmd_dump(a, &cfg),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<clipgraph::Error>())
        .map_or(1, |e| e.exit_code() as u8)
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|p| p.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
