//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid input or arguments, 2 when the
//! filesystem fails. Flags override values from `--config <json>`, which
//! override the built-in defaults.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::alignment::pairwise_matrix_with_threads;
use crate::error::{Error, Result};
use crate::evaluation::{
    pool_stripes, rank_queries, rerank, sweep, write_csv, RerankParams, SweepParam,
};
use crate::io::{load_embeddings, save_embeddings};
use crate::losses::gradcheck::{run_suite, TOLERANCE};
use crate::model::{AlignmentConfig, EmbeddingSet, MetricTag};
use crate::synth::{generate, CorruptionMode, SynthSpec};

#[derive(Debug, Parser)]
#[command(
    name = "lsa-reid",
    version,
    about = "Sliding-window stripe alignment for re-identification embeddings"
)]
struct Cli {
    /// JSON file with default values for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for distance matrices. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic query/gallery pair.
    Gen(GenArgs),
    /// Compute a query x gallery distance matrix.
    Dist(DistArgs),
    /// Rank the gallery for each query and report CMC and mAP.
    Eval(EvalArgs),
    /// Evaluate over several stripe counts or window sizes.
    Sweep(SweepArgs),
    /// Compare analytic loss gradients with finite differences.
    LossCheck(LossCheckArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    ids: Option<usize>,
    #[arg(long)]
    per_id: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Stripe width (the global feature has the same width).
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    shift_prob: Option<f64>,
    #[arg(long)]
    max_shift: Option<usize>,
    #[arg(long)]
    occl_prob: Option<f64>,
    /// Corrupt the queries after generation: erase or crop.
    #[arg(long)]
    corrupt: Option<String>,
    /// Fraction range for --corrupt, as lo,hi.
    #[arg(long)]
    corrupt_frac: Option<String>,
    #[arg(long)]
    seed: u64,
    /// Output directory; receives `q/` and `g/`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PairArgs {
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    gallery: PathBuf,
    /// global, lsa, hard or combined.
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    window: Option<usize>,
    /// Pool stripes down to this count before comparing.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Args)]
struct DistArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    rerank: bool,
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// stripes or window.
    #[arg(long)]
    param: Option<String>,
    /// Comma-separated values.
    #[arg(long)]
    values: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LossCheckArgs {
    #[arg(long)]
    seed: u64,
    /// Number of consecutive seeds to check.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
}

/// Values a `--config` file may provide. Unknown keys are rejected.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    threads: Option<usize>,
    ids: Option<usize>,
    per_id: Option<usize>,
    k: Option<usize>,
    d: Option<usize>,
    noise: Option<f64>,
    shift_prob: Option<f64>,
    max_shift: Option<usize>,
    occl_prob: Option<f64>,
    corrupt: Option<String>,
    corrupt_frac: Option<(f64, f64)>,
    metric: Option<String>,
    window: Option<usize>,
    k1: Option<usize>,
    k2: Option<usize>,
    lambda: Option<f64>,
    param: Option<String>,
    values: Option<Vec<usize>>,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
struct DistSidecar {
    n_query: usize,
    n_gallery: usize,
    metric: MetricTag,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    metric: MetricTag,
    window: usize,
    rank1: f64,
    rank5: f64,
    rank10: f64,
    map: f64,
    n_query: usize,
    n_gallery: usize,
    rerank: bool,
}

fn parse_metric(s: &str) -> Result<MetricTag> {
    let m: MetricTag = s.parse()?;
    if m == MetricTag::Reranked {
        return Err(Error::InvalidConfig(
            "use eval --rerank instead of --metric reranked".into(),
        ));
    }
    Ok(m)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad {what} value {v:?}")))
        })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Both sets loaded, pooled to `k` if requested, with the alignment settings.
struct Loaded {
    query: EmbeddingSet,
    gallery: EmbeddingSet,
    cfg: AlignmentConfig,
    metric: MetricTag,
}

fn load_pair(args: &PairArgs, conf: &FileConfig) -> Result<Loaded> {
    let query = load_embeddings(&args.query)?;
    let gallery = load_embeddings(&args.gallery)?;
    query.check_conforms(&gallery)?;
    let (query, gallery) = match args.k.or(conf.k) {
        Some(k) if k != query.k() => (pool_stripes(&query, k)?, pool_stripes(&gallery, k)?),
        _ => (query, gallery),
    };
    let mut cfg = AlignmentConfig::new(query.k());
    if let Some(w) = args.window.or(conf.window) {
        cfg.window = w;
    }
    cfg.validate()?;
    let metric = parse_metric(
        args.metric
            .as_deref()
            .or(conf.metric.as_deref())
            .unwrap_or("lsa"),
    )?;
    Ok(Loaded {
        query,
        gallery,
        cfg,
        metric,
    })
}

fn cmd_gen(a: &GenArgs, conf: &FileConfig) -> Result<()> {
    let base = SynthSpec::default();
    let spec = SynthSpec {
        n_ids: a.ids.or(conf.ids).unwrap_or(base.n_ids),
        per_id: a.per_id.or(conf.per_id).unwrap_or(base.per_id),
        k: a.k.or(conf.k).unwrap_or(base.k),
        d_local: a.d.or(conf.d).unwrap_or(base.d_local),
        noise_sigma: a.noise.or(conf.noise).unwrap_or(base.noise_sigma),
        shift_prob: a.shift_prob.or(conf.shift_prob).unwrap_or(base.shift_prob),
        max_shift: a.max_shift.or(conf.max_shift).unwrap_or(base.max_shift),
        occl_prob: a.occl_prob.or(conf.occl_prob).unwrap_or(base.occl_prob),
        seed: a.seed,
        ..base
    };
    let mut bench = generate(&spec)?;
    if let Some(mode) = a.corrupt.as_deref().or(conf.corrupt.as_deref()) {
        let mode: CorruptionMode = mode.parse()?;
        let range = match &a.corrupt_frac {
            Some(s) => match parse_list::<f64>(s, "--corrupt-frac")?.as_slice() {
                [lo, hi] => (*lo, *hi),
                _ => {
                    return Err(Error::InvalidConfig(
                        "--corrupt-frac takes two values lo,hi".into(),
                    ))
                }
            },
            None => conf.corrupt_frac.unwrap_or(match mode {
                CorruptionMode::Erase => spec.occl_frac_range,
                CorruptionMode::Crop => spec.crop_frac_range,
            }),
        };
        // a seed stream separate from generation
        bench = bench.corrupt_queries(mode, range, a.seed.wrapping_add(1))?;
    }
    save_embeddings(&bench.query, &a.out.join("q"))?;
    save_embeddings(&bench.gallery, &a.out.join("g"))?;
    println!(
        "wrote {} queries and {} gallery images to {}",
        bench.query.len(),
        bench.gallery.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_dist(a: &DistArgs, conf: &FileConfig, threads: usize) -> Result<()> {
    let l = load_pair(&a.pair, conf)?;
    let dist = pairwise_matrix_with_threads(&l.query, &l.gallery, &l.cfg, l.metric, threads)?;
    let bytes: Vec<u8> = dist.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_file(&a.out, &bytes)?;
    let mut sidecar = a.out.clone().into_os_string();
    sidecar.push(".json");
    write_json(
        Path::new(&sidecar),
        &DistSidecar {
            n_query: dist.n_query(),
            n_gallery: dist.n_gallery(),
            metric: dist.metric(),
        },
    )
}

fn cmd_eval(a: &EvalArgs, conf: &FileConfig, threads: usize) -> Result<()> {
    let l = load_pair(&a.pair, conf)?;
    let mut dist = pairwise_matrix_with_threads(&l.query, &l.gallery, &l.cfg, l.metric, threads)?;
    if a.rerank {
        let base = RerankParams::default();
        let params = RerankParams {
            k1: a.k1.or(conf.k1).unwrap_or(base.k1),
            k2: a.k2.or(conf.k2).unwrap_or(base.k2),
            lambda: a.lambda.or(conf.lambda).unwrap_or(base.lambda),
        };
        let qq = pairwise_matrix_with_threads(&l.query, &l.query, &l.cfg, l.metric, threads)?;
        let gg = pairwise_matrix_with_threads(&l.gallery, &l.gallery, &l.cfg, l.metric, threads)?;
        dist = rerank(&dist, &qq, &gg, &params)?;
    }
    let r = rank_queries(&dist, &l.query.labels(), &l.gallery.labels())?;
    let report = EvalReport {
        metric: l.metric,
        window: l.cfg.window,
        rank1: r.rank(1),
        rank5: r.rank(5),
        rank10: r.rank(10),
        map: r.map,
        n_query: l.query.len(),
        n_gallery: l.gallery.len(),
        rerank: a.rerank,
    };
    write_json(&a.out, &report)?;
    println!(
        "{} W={} rank1={:.4} map={:.4}",
        report.metric, report.window, report.rank1, report.map
    );
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, conf: &FileConfig, threads: usize) -> Result<()> {
    let l = load_pair(&a.pair, conf)?;
    let param: SweepParam = a
        .param
        .as_deref()
        .or(conf.param.as_deref())
        .unwrap_or("window")
        .parse()?;
    let values = match (&a.values, &conf.values) {
        (Some(s), _) => parse_list(s, "--values")?,
        (None, Some(v)) => v.clone(),
        (None, None) => return Err(Error::InvalidConfig("--values is required".into())),
    };
    let rows = sweep(
        param, &values, &l.query, &l.gallery, &l.cfg, l.metric, threads,
    )?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_csv(&rows, &a.out)?;
    for r in &rows {
        println!("{:>4} rank1={:.4} map={:.4}", r.value, r.rank1, r.map);
    }
    Ok(())
}

/// Returns whether every check passed.
fn cmd_loss_check(a: &LossCheckArgs) -> bool {
    println!("{:<12} {:>6} {:>14}  result", "loss", "seed", "max rel err");
    let mut ok = true;
    for r in run_suite(a.seed, a.seeds) {
        let pass = r.passed();
        ok &= pass;
        println!(
            "{:<12} {:>6} {:>14.3e}  {}",
            r.loss,
            r.seed,
            r.max_rel_error,
            if pass { "pass" } else { "FAIL" }
        );
    }
    println!(
        "tolerance {TOLERANCE:e}: {}",
        if ok { "all passed" } else { "FAILED" }
    );
    ok
}

fn execute(cli: &Cli) -> Result<i32> {
    let conf = read_config(cli.config.as_deref())?;
    let threads = cli
        .threads
        .or(conf.threads)
        .unwrap_or_else(rayon::current_num_threads);
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, &conf)?,
        Command::Dist(a) => cmd_dist(a, &conf, threads)?,
        Command::Eval(a) => cmd_eval(a, &conf, threads)?,
        Command::Sweep(a) => cmd_sweep(a, &conf, threads)?,
        Command::LossCheck(a) => {
            if !cmd_loss_check(a) {
                return Ok(1);
            }
        }
    }
    Ok(0)
}

/// Runs the program on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}
