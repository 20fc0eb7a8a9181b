//! Command-line front end. Every subcommand validates its inputs, runs the
//! corresponding library call, and emits a schema-versioned JSON report to
//! `--report FILE` and/or stdout (`--stdout`); artifacts go to flag-named
//! files. Exit codes: 0 success, 1 domain error (diagnostic on stderr),
//! 2 usage error. Output files are written to a temporary sibling and
//! renamed on success, so failures never leave partial files behind.

use std::ffi::OsString;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::automaton::{
    finkelstein, hit_detector, is_complementary, property_logic, run_experiment as run_words,
    experiment_partition, LogicMode, MooreAutomaton,
};
use crate::clicklog::{
    parse_log, synthesize, ClickstreamCollection, LogFormat, SyntheticConfig, SyntheticMode,
};
use crate::embedding::{
    embed_incremental, embed_restarts, refine_tails, EmbedParams, SpacetimeEmbedding,
};
use crate::geodesic::{
    integrate_geodesic, predict_next, samples_from_embedding, FitParams, MetricField,
};
use crate::melucci::{invariant_with_se, run_all, run_experiment, SlitMode, SourceConfig};
use crate::pipeline::{run_pipeline, PipelineConfig};
use crate::prespace::{build_skeleton, complete_layer, DistanceScheme, LayeredSkeleton, PointRef};
use crate::probcheck::{
    accardi_fedullo_classical, accardi_invariant, bell_sum, classify_accardi, kolmogorov_feasible,
    total_probability_residual, Classicality, DichotomicTriple, MelucciStats,
};
use crate::rota::{
    algebra_closure, propagate, spatialize, template_matrix, Dag, MatrixSubspace, TemplateMatrix,
};

pub const REPORT_SCHEMA: &str = "reality-forge/report/1";

#[derive(Parser)]
#[command(
    name = "reality-forge",
    about = "Clickstream geometry toolkit: logs to spacetime embeddings, \
             geodesic prediction, and non-classical probability checks",
    version,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Jsonl,
    Tsv,
}

impl From<Format> for LogFormat {
    fn from(f: Format) -> LogFormat {
        match f {
            Format::Jsonl => LogFormat::Jsonl,
            Format::Tsv => LogFormat::Tsv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Cosine,
    Jaccard,
}

impl From<Scheme> for DistanceScheme {
    fn from(s: Scheme) -> DistanceScheme {
        match s {
            Scheme::Cosine => DistanceScheme::Cosine,
            Scheme::Jaccard => DistanceScheme::Jaccard,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthMode {
    Random,
    PlantedGeodesic,
}

/// Report destination shared by every subcommand.
#[derive(Args)]
struct ReportArgs {
    /// Write the JSON report to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Print the JSON report on stdout.
    #[arg(long, global = true)]
    stdout: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a click log.
    Ingest {
        /// Log file (JSONL or TSV).
        input: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        /// Re-serialize the normalized log here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Format of --out (defaults to the input format).
        #[arg(long, value_enum)]
        out_format: Option<Format>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Generate a synthetic click log.
    Synth {
        /// Full generator config as JSON; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        streams: Option<usize>,
        #[arg(long)]
        len: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<SynthMode>,
        #[arg(long)]
        latent_dim: Option<usize>,
        #[arg(long)]
        step_len: Option<f64>,
        #[arg(long)]
        start_span: Option<f64>,
        #[arg(long)]
        directions: Option<usize>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the generated log here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: Format,
        /// Write planted latent coordinates here (CSV; planted mode only).
        #[arg(long)]
        latent_out: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Build the layered distance skeleton of a log.
    Prespace {
        input: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        #[arg(long, value_enum, default_value = "cosine")]
        scheme: Scheme,
        /// Nearest neighbors per point within a layer.
        #[arg(long, default_value_t = 8)]
        k: usize,
        /// Write the skeleton JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Embed a skeleton into R^{n+1} by stress descent.
    Embed {
        /// Skeleton JSON from `prespace`.
        #[arg(long)]
        skeleton: PathBuf,
        /// Spatial dimension.
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Thread-continuity penalty weight.
        #[arg(long, default_value_t = 1e-5)]
        lambda: f64,
        /// Temporal spacing between layers.
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
        /// Treat edges at least this long as lower bounds only.
        #[arg(long)]
        hinge_above: Option<f64>,
        #[arg(long, default_value_t = 8000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-14)]
        tol: f64,
        /// Random restarts (best final stress wins).
        #[arg(long, default_value_t = 1)]
        restarts: u64,
        /// Use the incremental layer-growth solver, anchored on the given
        /// log's first layer (requires --format).
        #[arg(long)]
        incremental_from_log: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long, value_enum, default_value = "cosine")]
        scheme: Scheme,
        /// Write coordinates CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the parameter/stress sidecar JSON here.
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Metric-field fitting and geodesic tracing.
    Geodesic {
        #[command(subcommand)]
        action: GeodesicAction,
    },
    /// Predict each stream's next click by geodesic continuation.
    Predict {
        /// Fitted metric JSON from `geodesic fit`.
        #[arg(long)]
        metric: PathBuf,
        /// Embedding CSV from `embed`.
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long, default_value_t = 8)]
        substeps: usize,
        /// Finite-difference step for Christoffel symbols.
        #[arg(long, default_value_t = 1e-3)]
        fd_h: f64,
        /// Write predictions CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Probabilistic-model checks (Bell sum, Accardi-Fedullo, invariant).
    Probcheck {
        #[command(subcommand)]
        action: ProbcheckAction,
    },
    /// Two-slit relevance simulation with an Accardi-invariant estimate.
    Melucci {
        #[arg(long, default_value_t = 0.5)]
        p_r: f64,
        #[arg(long, default_value_t = 0.7)]
        p_x_given_r: f64,
        #[arg(long, default_value_t = 0.3)]
        p_x_given_not_r: f64,
        /// Additive law-of-total-probability deviation in no-filter mode.
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 100_000)]
        num_docs: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Moore-automaton experiments and property logics.
    Automaton {
        #[command(subcommand)]
        action: AutomatonAction,
    },
    /// Incidence-algebra templates and spatialization.
    Rota {
        #[command(subcommand)]
        action: RotaAction,
    },
    /// Full run: source -> skeleton -> embedding -> metric -> prediction.
    Pipeline {
        /// Pipeline config JSON (missing fields take defaults).
        config: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
}

#[derive(Subcommand)]
enum GeodesicAction {
    /// Fit a smooth metric field to an embedded skeleton.
    Fit {
        #[arg(long)]
        skeleton: PathBuf,
        /// Embedding CSV from `embed`.
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long, default_value_t = 8)]
        grid_res: usize,
        #[arg(long, default_value_t = 0.25)]
        margin: f64,
        #[arg(long, default_value_t = 1.5)]
        bandwidth_scale: f64,
        /// Write the fitted metric JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Integrate a geodesic of a fitted metric.
    Trace {
        #[arg(long)]
        metric: PathBuf,
        /// Start point, comma-separated.
        #[arg(long)]
        start: String,
        /// Initial velocity, comma-separated.
        #[arg(long)]
        velocity: String,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 1e-3)]
        fd_h: f64,
        /// Write the path CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
}

#[derive(Subcommand)]
enum ProbcheckAction {
    /// Bell-Wigner sum of three pairwise disagreement probabilities.
    Bell {
        #[arg(long)]
        p_ab: f64,
        #[arg(long)]
        p_bc: f64,
        #[arg(long)]
        p_ac: f64,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Accardi-Fedullo classicality of a dichotomic triple, cross-checked
    /// against Kolmogorov feasibility.
    Accardi {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        r: f64,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Accardi statistical invariant of measured relevance statistics.
    Invariant {
        #[arg(long)]
        p_x: f64,
        #[arg(long)]
        p_x_given_r: f64,
        #[arg(long)]
        p_x_given_not_r: f64,
        #[arg(long)]
        p_r: f64,
        #[command(flatten)]
        report: ReportArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    HitDetector,
    Finkelstein,
}

#[derive(Args)]
struct MachineArgs {
    /// Built-in automaton.
    #[arg(long, value_enum, conflicts_with = "machine")]
    preset: Option<Preset>,
    /// Automaton JSON file.
    #[arg(long)]
    machine: Option<PathBuf>,
}

impl MachineArgs {
    fn load(&self) -> Result<MooreAutomaton, String> {
        match (&self.preset, &self.machine) {
            (Some(Preset::HitDetector), _) => Ok(hit_detector()),
            (Some(Preset::Finkelstein), _) => Ok(finkelstein()),
            (None, Some(path)) => {
                let text = read_file(path)?;
                MooreAutomaton::from_json(&text).map_err(|e| e.to_string())
            }
            (None, None) => Err("one of --preset or --machine is required".to_string()),
        }
    }
}

#[derive(Subcommand)]
enum AutomatonAction {
    /// Poset of experimentally decidable propositions.
    Logic {
        #[command(flatten)]
        machine: MachineArgs,
        /// Maximum experiment word length.
        #[arg(long, default_value_t = 1)]
        max_len: usize,
        /// Keep only cells whose outputs all lie in this set
        /// (comma-separated); default keeps every union of cells.
        #[arg(long, value_delimiter = ',')]
        designated: Option<Vec<String>>,
        /// Write the poset JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// State partition induced by one input word.
    Partition {
        #[command(flatten)]
        machine: MachineArgs,
        /// Input word, comma-separated symbols.
        #[arg(long, value_delimiter = ',')]
        word: Vec<String>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Two-sided complementarity of a pair of one-input experiments.
    Complementary {
        #[command(flatten)]
        machine: MachineArgs,
        #[arg(long)]
        first: String,
        #[arg(long)]
        second: String,
        #[command(flatten)]
        report: ReportArgs,
    },
}

#[derive(Subcommand)]
enum RotaAction {
    /// Support template of a DAG.
    Template {
        /// DAG JSON {m, edges}.
        #[arg(long)]
        dag: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Algebraic closure of a DAG's template.
    Closure {
        #[arg(long)]
        dag: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Push a signal through the template weights.
    Propagate {
        #[arg(long)]
        dag: PathBuf,
        /// Signal vector, comma-separated.
        #[arg(long)]
        signal: String,
        #[arg(long, default_value_t = 1)]
        layers: usize,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Recover a topological space from a matrix subspace.
    Spatialize {
        /// JSON list of dense row-major matrices.
        #[arg(long)]
        subspace: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
}

/// Parse argv, run, and return the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.exit_code() == 0 { 0 } else { 2 };
            let _ = e.print();
            return code;
        }
    };
    init_threads();
    match run(cli.command) {
        Ok(()) => 0,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

/// Honor REALITY_FORGE_THREADS (0 or unset = automatic).
fn init_threads() {
    if let Ok(v) = std::env::var("REALITY_FORGE_THREADS") {
        if let Ok(t) = v.trim().parse::<usize>() {
            if t > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            }
        }
    }
}

fn read_file(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

/// Write via a temporary sibling and rename, so failures leave no partial
/// file.
fn write_atomic(path: &Path, contents: &str) -> Result<(), String> {
    let tmp = path.with_extension(format!(
        "{}.tmp-{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    let fail = |e: std::io::Error| format!("{}: {e}", path.display());
    let mut f = std::fs::File::create(&tmp).map_err(fail)?;
    f.write_all(contents.as_bytes()).map_err(fail)?;
    f.sync_all().map_err(fail)?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(fail)
}

/// Pending artifact writes, flushed only after the whole command succeeds.
struct Outputs {
    files: Vec<(PathBuf, String)>,
}

impl Outputs {
    fn new() -> Self {
        Outputs { files: Vec::new() }
    }

    fn add(&mut self, path: &Option<PathBuf>, contents: String) {
        if let Some(p) = path {
            self.files.push((p.clone(), contents));
        }
    }

    fn finish(
        mut self,
        report_args: &ReportArgs,
        command: &str,
        body: serde_json::Value,
        started: std::time::Instant,
    ) -> Result<(), String> {
        let report = json!({
            "schema": REPORT_SCHEMA,
            "command": command,
            "result": body,
            "timing_ms": started.elapsed().as_millis() as u64,
        });
        let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        if report_args.report.is_some() {
            self.files.push((report_args.report.clone().unwrap(), text.clone()));
        }
        for (path, contents) in &self.files {
            write_atomic(path, contents)?;
        }
        if report_args.stdout {
            print!("{text}");
        }
        Ok(())
    }
}

fn load_log(path: &Path, format: LogFormat) -> Result<ClickstreamCollection, String> {
    let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_log(BufReader::new(file), format).map_err(|e| e.to_string())
}

/// Parse an embedding CSV (`stream,seq,t,x1..xn`) back into coordinates.
fn load_embedding_csv(path: &Path, n_hint: Option<usize>) -> Result<SpacetimeEmbedding, String> {
    let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut points = Vec::new();
    let mut coords: Vec<Vec<f64>> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| format!("{}: {e}", path.display()))?;
        if i == 0 {
            if !line.starts_with("stream,seq,t") {
                return Err(format!("{}: not an embedding CSV", path.display()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(format!("{}: line {}: too few fields", path.display(), i + 1));
        }
        let stream_index: usize = fields[0]
            .parse()
            .map_err(|_| format!("{}: line {}: bad stream index", path.display(), i + 1))?;
        let seq: usize = fields[1]
            .parse()
            .map_err(|_| format!("{}: line {}: bad seq", path.display(), i + 1))?;
        let xs: Result<Vec<f64>, _> = fields[2..].iter().map(|s| s.parse::<f64>()).collect();
        let xs = xs.map_err(|_| format!("{}: line {}: bad coordinate", path.display(), i + 1))?;
        points.push(PointRef { stream_index, seq });
        coords.push(xs);
    }
    if coords.is_empty() {
        return Err(format!("{}: no data rows", path.display()));
    }
    let n = coords[0].len() - 1;
    if let Some(h) = n_hint {
        if h != n {
            return Err(format!("{}: expected n={h}, found n={n}", path.display()));
        }
    }
    Ok(SpacetimeEmbedding {
        points,
        coords,
        params: EmbedParams {
            n,
            ..EmbedParams::default()
        },
        final_stress: f64::NAN,
        stress_trace: Vec::new(),
    })
}

fn parse_vec(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number '{}'", s.trim()))
        })
        .collect()
}

fn mask_rows(t: &TemplateMatrix) -> Vec<String> {
    t.mask
        .iter()
        .map(|row| row.iter().map(|&b| if b { '*' } else { '0' }).collect())
        .collect()
}

fn poset_masks_to_sets(elements: &[u64], num_states: usize) -> Vec<Vec<usize>> {
    elements
        .iter()
        .map(|&m| (0..num_states).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

fn run(command: Command) -> Result<(), String> {
    let started = std::time::Instant::now();
    match command {
        Command::Ingest {
            input,
            format,
            out,
            out_format,
            report,
        } => {
            let fmt: LogFormat = format.into();
            let collection = load_log(&input, fmt)?;
            let mut outputs = Outputs::new();
            if out.is_some() {
                let ofmt: LogFormat = out_format.unwrap_or(format).into();
                outputs.add(&out, collection.serialize(ofmt).map_err(|e| e.to_string())?);
            }
            let body = json!({
                "input": input.display().to_string(),
                "num_streams": collection.streams().len(),
                "num_clicks": collection.num_clicks(),
                "max_stream_len": collection.max_stream_len(),
                "vocabulary_size": collection.vocabulary().len(),
            });
            outputs.finish(&report, "ingest", body, started)
        }
        Command::Synth {
            config,
            streams,
            len,
            mode,
            latent_dim,
            step_len,
            start_span,
            directions,
            resolution,
            seed,
            out,
            format,
            latent_out,
            report,
        } => {
            let mut cfg: SyntheticConfig = match &config {
                Some(path) => serde_json::from_str(&read_file(path)?)
                    .map_err(|e| format!("{}: {e}", path.display()))?,
                None => SyntheticConfig::default(),
            };
            if let Some(v) = streams {
                cfg.num_streams = v;
            }
            if let Some(v) = len {
                cfg.stream_len = v;
            }
            if let Some(v) = mode {
                cfg.mode = match v {
                    SynthMode::Random => SyntheticMode::Random,
                    SynthMode::PlantedGeodesic => SyntheticMode::PlantedGeodesic,
                };
            }
            if let Some(v) = latent_dim {
                cfg.latent_dim = v;
            }
            if let Some(v) = step_len {
                cfg.step_len = v;
            }
            if let Some(v) = start_span {
                cfg.start_span = v;
            }
            if let Some(v) = directions {
                cfg.num_directions = v;
            }
            if let Some(v) = resolution {
                cfg.resolution = v;
            }
            let synth = synthesize(&cfg, seed).map_err(|e| e.to_string())?;
            let mut outputs = Outputs::new();
            if out.is_some() {
                outputs.add(
                    &out,
                    synth
                        .collection
                        .serialize(format.into())
                        .map_err(|e| e.to_string())?,
                );
            }
            if latent_out.is_some() {
                let latent = synth
                    .latent
                    .as_ref()
                    .ok_or("--latent-out requires planted-geodesic mode")?;
                let mut csv = String::from("stream,seq");
                for a in 0..cfg.latent_dim {
                    csv.push_str(&format!(",y{}", a + 1));
                }
                csv.push('\n');
                for (s, stream) in latent.iter().enumerate() {
                    for (k, y) in stream.iter().enumerate() {
                        csv.push_str(&format!("{s},{k}"));
                        for v in y {
                            csv.push_str(&format!(",{v:.16e}"));
                        }
                        csv.push('\n');
                    }
                }
                outputs.add(&latent_out, csv);
            }
            let body = json!({
                "config": cfg,
                "seed": seed,
                "num_streams": synth.collection.streams().len(),
                "num_clicks": synth.collection.num_clicks(),
            });
            outputs.finish(&report, "synth", body, started)
        }
        Command::Prespace {
            input,
            format,
            scheme,
            k,
            out,
            report,
        } => {
            let collection = load_log(&input, format.into())?;
            let skeleton = build_skeleton(&collection, scheme.into(), k);
            let mut outputs = Outputs::new();
            outputs.add(&out, skeleton.to_json());
            let body = json!({
                "input": input.display().to_string(),
                "num_points": skeleton.num_points(),
                "num_edges": skeleton.edges.len(),
                "num_layers": skeleton.layers.len(),
            });
            outputs.finish(&report, "prespace", body, started)
        }
        Command::Embed {
            skeleton,
            n,
            seed,
            lambda,
            time_scale,
            hinge_above,
            max_iters,
            tol,
            restarts,
            incremental_from_log,
            format,
            scheme,
            out,
            sidecar,
            report,
        } => {
            let sk = LayeredSkeleton::from_json(&read_file(&skeleton)?)
                .map_err(|e| e.to_string())?;
            let params = EmbedParams {
                n,
                seed,
                temporal_stiffness: lambda,
                time_scale,
                hinge_above,
                max_iters,
                tol,
            };
            let emb = match &incremental_from_log {
                Some(log_path) => {
                    let fmt = format.ok_or("--incremental-from-log requires --format")?;
                    let collection = load_log(log_path, fmt.into())?;
                    let dense = complete_layer(&collection, scheme.into(), 0);
                    let e = embed_incremental(&sk, &params, restarts.max(1), 3, dense.as_ref())
                        .map_err(|e| e.to_string())?;
                    refine_tails(&sk, &params, &e, 8, 4, 1).map_err(|e| e.to_string())?
                }
                None => embed_restarts(&sk, &params, restarts.max(1)).map_err(|e| e.to_string())?,
            };
            let mut outputs = Outputs::new();
            outputs.add(&out, emb.to_csv());
            outputs.add(&sidecar, emb.sidecar_json());
            let body = json!({
                "skeleton": skeleton.display().to_string(),
                "params": params,
                "num_points": emb.points.len(),
                "final_stress": emb.final_stress,
            });
            outputs.finish(&report, "embed", body, started)
        }
        Command::Geodesic { action } => match action {
            GeodesicAction::Fit {
                skeleton,
                embedding,
                grid_res,
                margin,
                bandwidth_scale,
                out,
                report,
            } => {
                let sk = LayeredSkeleton::from_json(&read_file(&skeleton)?)
                    .map_err(|e| e.to_string())?;
                let emb = load_embedding_csv(&embedding, None)?;
                let samples = samples_from_embedding(&sk, &emb);
                let params = FitParams {
                    grid_res,
                    margin,
                    bandwidth_scale,
                };
                let field = MetricField::fit(&samples, &params).map_err(|e| e.to_string())?;
                let mut outputs = Outputs::new();
                outputs.add(&out, field.to_json());
                let body = json!({
                    "num_samples": samples.len(),
                    "dim": field.dim,
                    "fit": params,
                });
                outputs.finish(&report, "geodesic fit", body, started)
            }
            GeodesicAction::Trace {
                metric,
                start,
                velocity,
                step,
                steps,
                fd_h,
                out,
                report,
            } => {
                let field = MetricField::from_json(&read_file(&metric)?)
                    .map_err(|e| e.to_string())?;
                let x0 = parse_vec(&start)?;
                let v0 = parse_vec(&velocity)?;
                let path = integrate_geodesic(&field, &x0, &v0, step, steps, fd_h)
                    .map_err(|e| e.to_string())?;
                let mut outputs = Outputs::new();
                outputs.add(&out, path.to_csv());
                let body = json!({
                    "num_points": path.points.len(),
                    "truncated": path.truncated,
                    "end": path.points.last(),
                });
                outputs.finish(&report, "geodesic trace", body, started)
            }
        },
        Command::Predict {
            metric,
            embedding,
            substeps,
            fd_h,
            out,
            report,
        } => {
            let field =
                MetricField::from_json(&read_file(&metric)?).map_err(|e| e.to_string())?;
            let emb = load_embedding_csv(&embedding, Some(field.dim - 1))?;
            let mut streams: std::collections::BTreeMap<usize, Vec<(usize, Vec<f64>)>> =
                std::collections::BTreeMap::new();
            for (p, x) in emb.points.iter().zip(&emb.coords) {
                streams
                    .entry(p.stream_index)
                    .or_default()
                    .push((p.seq, x.clone()));
            }
            let mut csv = String::from("stream,truncated,t");
            for a in 1..field.dim {
                csv.push_str(&format!(",x{a}"));
            }
            csv.push('\n');
            let mut truncated = 0usize;
            let mut num = 0usize;
            for (s, thread) in &mut streams {
                thread.sort_by_key(|(seq, _)| *seq);
                let prefix: Vec<Vec<f64>> = thread.iter().map(|(_, x)| x.clone()).collect();
                if prefix.len() < 2 {
                    continue;
                }
                let pred =
                    predict_next(&field, &prefix, substeps, fd_h).map_err(|e| e.to_string())?;
                if pred.truncated {
                    truncated += 1;
                }
                num += 1;
                csv.push_str(&format!("{s},{}", pred.truncated as u8));
                for v in &pred.point {
                    csv.push_str(&format!(",{v:.16e}"));
                }
                csv.push('\n');
            }
            let mut outputs = Outputs::new();
            outputs.add(&out, csv);
            let body = json!({
                "num_predictions": num,
                "truncated": truncated,
            });
            outputs.finish(&report, "predict", body, started)
        }
        Command::Probcheck { action } => match action {
            ProbcheckAction::Bell {
                p_ab,
                p_bc,
                p_ac,
                report,
            } => {
                let (sum, classical) = bell_sum(p_ab, p_bc, p_ac).map_err(|e| e.to_string())?;
                let body = json!({
                    "inputs": {"p_ab": p_ab, "p_bc": p_bc, "p_ac": p_ac},
                    "sum": sum,
                    "verdict": if classical { "satisfied" } else { "violated" },
                });
                Outputs::new().finish(&report, "probcheck bell", body, started)
            }
            ProbcheckAction::Accardi { p, q, r, report } => {
                let triple = DichotomicTriple::new(p, q, r).map_err(|e| e.to_string())?;
                let classical = accardi_fedullo_classical(&triple);
                let (feasible, _) = kolmogorov_feasible(
                    &crate::probcheck::ObservableFamily::from_triple(&triple),
                )
                .map_err(|e| e.to_string())?;
                let body = json!({
                    "inputs": {"p": p, "q": q, "r": r},
                    "verdict": if classical { "classical" } else { "nonclassical" },
                    "kolmogorov_feasible": feasible,
                });
                Outputs::new().finish(&report, "probcheck accardi", body, started)
            }
            ProbcheckAction::Invariant {
                p_x,
                p_x_given_r,
                p_x_given_not_r,
                p_r,
                report,
            } => {
                let stats = MelucciStats::new(p_x, p_x_given_r, p_x_given_not_r, p_r)
                    .map_err(|e| e.to_string())?;
                let a = accardi_invariant(&stats).map_err(|e| e.to_string())?;
                let body = json!({
                    "invariant": a,
                    "ltp_residual": total_probability_residual(&stats),
                    "verdict": match classify_accardi(a, 0.0) {
                        Classicality::Classical => "classical",
                        Classicality::Nonclassical => "nonclassical",
                    },
                });
                Outputs::new().finish(&report, "probcheck invariant", body, started)
            }
        },
        Command::Melucci {
            p_r,
            p_x_given_r,
            p_x_given_not_r,
            delta,
            num_docs,
            seed,
            report,
        } => {
            let cfg = SourceConfig {
                p_r,
                p_x_given_r,
                p_x_given_not_r,
                delta,
                num_docs,
                seed,
            };
            let counts: Vec<_> = [SlitMode::FilterR, SlitMode::FilterNotR, SlitMode::NoFilter]
                .into_iter()
                .map(|m| run_experiment(&cfg, m))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let (stats, errors) = run_all(&cfg).map_err(|e| e.to_string())?;
            let (a, se) = invariant_with_se(&stats, &errors).map_err(|e| e.to_string())?;
            let body = json!({
                "config": cfg,
                "counts": counts,
                "stats": stats,
                "invariant": a,
                "invariant_se": se,
                "verdict": match classify_accardi(a, 3.0 * se) {
                    Classicality::Classical => "classical",
                    Classicality::Nonclassical => "nonclassical",
                },
            });
            Outputs::new().finish(&report, "melucci", body, started)
        }
        Command::Automaton { action } => match action {
            AutomatonAction::Logic {
                machine,
                max_len,
                designated,
                out,
                report,
            } => {
                let m = machine.load()?;
                let mode = match designated {
                    Some(outputs) => LogicMode::Designated(outputs),
                    None => LogicMode::AllCells,
                };
                let poset = property_logic(&m, max_len, &mode);
                let mut outputs = Outputs::new();
                outputs.add(&out, poset.to_json(&m));
                let body = json!({
                    "num_propositions": poset.len(),
                    "propositions": poset_masks_to_sets(&poset.elements, poset.num_states),
                    "states": m.states(),
                });
                outputs.finish(&report, "automaton logic", body, started)
            }
            AutomatonAction::Partition {
                machine,
                word,
                report,
            } => {
                let m = machine.load()?;
                let partition = experiment_partition(&m, &word).map_err(|e| e.to_string())?;
                let outputs_per_state: Vec<Vec<String>> = (0..m.num_states())
                    .map(|s| run_words(&m, &word, m.states()[s].as_str()).map_err(|e| e.to_string()))
                    .collect::<Result<_, _>>()?;
                let body = json!({
                    "word": word,
                    "cells": partition.cells,
                    "states": m.states(),
                    "outputs_per_state": outputs_per_state,
                });
                Outputs::new().finish(&report, "automaton partition", body, started)
            }
            AutomatonAction::Complementary {
                machine,
                first,
                second,
                report,
            } => {
                let m = machine.load()?;
                let w1 = vec![first.clone()];
                let w2 = vec![second.clone()];
                let comp = is_complementary(&m, &w1, &w2).map_err(|e| e.to_string())?;
                let body = json!({
                    "first": first,
                    "second": second,
                    "complementary": comp,
                });
                Outputs::new().finish(&report, "automaton complementary", body, started)
            }
        },
        Command::Rota { action } => match action {
            RotaAction::Template { dag, report } => {
                let d = Dag::from_json(&read_file(&dag)?).map_err(|e| e.to_string())?;
                let t = template_matrix(&d);
                let body = json!({
                    "m": t.m,
                    "mask": mask_rows(&t),
                    "closed": crate::rota::is_closed_algebra(&t),
                });
                Outputs::new().finish(&report, "rota template", body, started)
            }
            RotaAction::Closure { dag, report } => {
                let d = Dag::from_json(&read_file(&dag)?).map_err(|e| e.to_string())?;
                let t = template_matrix(&d);
                let c = algebra_closure(&t);
                let body = json!({
                    "m": c.m,
                    "template": mask_rows(&t),
                    "closure": mask_rows(&c),
                });
                Outputs::new().finish(&report, "rota closure", body, started)
            }
            RotaAction::Propagate {
                dag,
                signal,
                layers,
                report,
            } => {
                let d = Dag::from_json(&read_file(&dag)?).map_err(|e| e.to_string())?;
                let t = template_matrix(&d);
                let u = parse_vec(&signal)?;
                let weights: Vec<Vec<f64>> = t
                    .mask
                    .iter()
                    .map(|row| row.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
                    .collect();
                let v = propagate(&t, &weights, &u, layers).map_err(|e| e.to_string())?;
                let body = json!({
                    "signal": u,
                    "layers": layers,
                    "output": v,
                });
                Outputs::new().finish(&report, "rota propagate", body, started)
            }
            RotaAction::Spatialize { subspace, report } => {
                let s =
                    MatrixSubspace::from_json(&read_file(&subspace)?).map_err(|e| e.to_string())?;
                let sp = spatialize(&s).map_err(|e| e.to_string())?;
                let body = json!({
                    "topology": serde_json::from_str::<serde_json::Value>(&sp.topology.to_json())
                        .expect("topology JSON"),
                    "dag": sp.dag.as_ref().map(|d| serde_json::from_str::<serde_json::Value>(
                        &d.to_json()).expect("dag JSON")),
                    "cycles": sp.cycles,
                });
                Outputs::new().finish(&report, "rota spatialize", body, started)
            }
        },
        Command::Pipeline { config, report } => {
            let cfg: PipelineConfig = serde_json::from_str(&read_file(&config)?)
                .map_err(|e| format!("{}: {e}", config.display()))?;
            let result = run_pipeline(&cfg).map_err(|e| e.to_string())?;
            let body = serde_json::to_value(&result).expect("report serializes");
            Outputs::new().finish(&report, "pipeline", body, started)
        }
    }
}
