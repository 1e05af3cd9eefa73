//! Command-line frontend: one thin binary over the library.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 data error.
//! Every output file starts with the resolved run configuration as `#`
//! comment lines; the stream parser skips such lines, so outputs stay
//! machine-readable.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::detector::ScoreRecord;
use crate::engine::{Engine, HyperParams, RunSummary};
use crate::error::Error;
use crate::evalgen::{self, InjectionKind, LabeledStream, SyntheticConfig};
use crate::stream::{
    canonicalize_type, parse_edge_stream, parse_labels, Coalescer, Edge, Interner, StreamFormat,
};

#[derive(Parser)]
#[command(
    name = "ffade",
    version,
    about = "Streaming anomaly detection for edge streams via frequency factorization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score an edge stream; optionally report AUC against labels
    Detect(DetectArgs),
    /// Generate a synthetic labeled stream
    Generate(GenerateArgs),
    /// Compute AUC of an existing score file against a labels file
    Evaluate(EvaluateArgs),
    /// Rerun detection across several memory limits
    Sweep(SweepArgs),
    /// Aggregate a score file into per-period maxima
    Aggregate(AggregateArgs),
    /// Run the pipeline and dump the fitted node embeddings
    DumpEmbeddings(DumpEmbeddingsArgs),
}

/// Engine settings shared by the stream-processing subcommands. Precedence:
/// built-in defaults, then the FFADE_SEED environment variable, then the
/// config file, then flags.
#[derive(Args, Debug, Default)]
struct ParamArgs {
    /// Config file with `key = value` lines mirroring these flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Setup period; scoring starts strictly after this time
    #[arg(long)]
    t_setup: Option<u64>,
    /// Model update interval
    #[arg(long)]
    w_upd: Option<u64>,
    /// Frequency decay rate in [0, 1)
    #[arg(long)]
    alpha: Option<f64>,
    /// Skeleton capacity M (an integer, or "inf" for unbounded)
    #[arg(long)]
    mem_limit: Option<String>,
    /// Embedding dimension m
    #[arg(long)]
    dim: Option<usize>,
    /// Initial cut-off frequency
    #[arg(long)]
    f_th: Option<f64>,
    /// Treat interactions as undirected (canonical node order, identity mix)
    #[arg(long)]
    undirected: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Gradient-ascent epochs per model update
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    neg_per_node: Option<u32>,
    /// Disable the same-source/same-destination group score channels
    #[arg(long)]
    no_group_channels: bool,
}

impl ParamArgs {
    fn resolve(&self) -> Result<HyperParams, CliError> {
        let mut params = HyperParams::default();
        if let Ok(seed) = std::env::var("FFADE_SEED") {
            params.seed = seed
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("FFADE_SEED is not an integer: {seed:?}")))?;
        }
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            params.apply_config_text(&text).map_err(usage)?;
        }
        if let Some(v) = self.t_setup {
            params.t_setup = v;
        }
        if let Some(v) = self.w_upd {
            params.w_upd = v;
        }
        if let Some(v) = self.alpha {
            params.alpha = v;
        }
        if let Some(v) = &self.mem_limit {
            params.mem_limit = match v.as_str() {
                "inf" | "unbounded" | "none" => None,
                n => Some(n.parse().map_err(|_| {
                    CliError::Usage(format!(
                        "--mem-limit expects an integer or \"inf\", got {n:?}"
                    ))
                })?),
            };
        }
        if let Some(v) = self.dim {
            params.dim = v;
        }
        if let Some(v) = self.f_th {
            params.f_th_init = v;
        }
        if self.undirected {
            params.undirected = true;
        }
        if let Some(v) = self.seed {
            params.seed = v;
        }
        if let Some(v) = self.epochs {
            params.optimizer.epochs = v;
        }
        if let Some(v) = self.step_size {
            params.optimizer.step_size = v;
        }
        if let Some(v) = self.neg_per_node {
            params.optimizer.neg_per_node = v;
        }
        if self.no_group_channels {
            params.group_channels = false;
        }
        params.validate().map_err(usage)?;
        Ok(params)
    }
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Edge-stream file: src,dst,time[,weight] per line
    input: PathBuf,
    /// Field delimiter
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// Skip the first line of the input
    #[arg(long)]
    header: bool,
}

impl InputArgs {
    fn format(&self) -> StreamFormat {
        StreamFormat {
            delimiter: self.delimiter,
            has_header: self.header,
        }
    }
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Score file to write (stdout when omitted)
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Labels file (one 0/1 per input line); prints AUC to stderr
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Stream file to write; labels go to `<output>.labels`
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 2)]
    n_groups: usize,
    #[arg(long, default_value_t = 10)]
    nodes_per_group: usize,
    /// Events per tick for each ordered in-group pair
    #[arg(long, default_value_t = 0.05)]
    base_freq: f64,
    #[arg(long, default_value_t = 5000)]
    horizon: u64,
    #[arg(long, default_value_t = 20)]
    n_injections: usize,
    /// Injection kind: S (cliques) or W (simultaneous bursts)
    #[arg(long, default_value = "W")]
    kind: String,
    #[arg(long, default_value_t = 8)]
    clique_size: usize,
    #[arg(long, default_value_t = 70)]
    burst_size: u64,
    /// Injections land strictly after this tick
    #[arg(long, default_value_t = 500)]
    inject_after: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Score file produced by `detect`
    scores: PathBuf,
    /// Labels file, one 0/1 per input event line
    labels: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Labels file, one 0/1 per input event line
    #[arg(long)]
    labels: PathBuf,
    /// Comma-separated memory limits, e.g. 50,100,200,inf
    #[arg(long, value_delimiter = ',', required = true)]
    mem_limits: Vec<String>,
    /// Table file to write (stdout when omitted)
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args, Debug)]
struct AggregateArgs {
    /// Score file produced by `detect`
    scores: PathBuf,
    /// Bucket length in time units (10080 = minutes per week)
    #[arg(long)]
    period: u64,
    /// Table file to write (stdout when omitted)
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DumpEmbeddingsArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Embedding file to write (stdout when omitted)
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

enum CliError {
    Usage(String),
    Data(String),
}

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

/// Library errors surfacing from file contents are data errors; bad
/// configuration is a usage error.
fn data(e: Error) -> CliError {
    match e {
        Error::InvalidConfig(_) => CliError::Usage(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn io_data(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn open_input(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(io_data(path))
}

/// Writes through a temp file in the same directory, then renames.
fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    let mut writer = BufWriter::new(File::create(&tmp).map_err(io_data(path))?);
    body(&mut writer)?;
    writer.flush().map_err(io_data(path))?;
    drop(writer);
    std::fs::rename(&tmp, path).map_err(io_data(path))?;
    Ok(())
}

/// Runs `body` against either the output file (atomically) or stdout.
fn with_output(
    output: Option<&PathBuf>,
    body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
) -> Result<(), CliError> {
    match output {
        Some(path) => write_atomic(path, body),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)
        }
    }
}

fn config_header(params: &HyperParams) -> String {
    params
        .to_config_text()
        .lines()
        .map(|l| format!("# {l}\n"))
        .collect()
}

fn wline(w: &mut dyn Write, args: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    w.write_fmt(args)
        .map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(w).map_err(|e| CliError::Data(e.to_string()))
}

/// Parses the input file and canonicalizes types when running undirected.
fn load_edges(input: &InputArgs, undirected: bool) -> Result<(Vec<Edge>, Interner), CliError> {
    let reader = open_input(&input.input)?;
    let mut interner = Interner::new();
    let mut edges = parse_edge_stream(reader, input.format(), &mut interner).map_err(data)?;
    if undirected {
        for edge in &mut edges {
            let ty = canonicalize_type(edge.ty(), true, &interner);
            edge.src = ty.src;
            edge.dst = ty.dst;
        }
    }
    Ok((edges, interner))
}

/// Engine run over parsed edges with lazily coalesced ticks; each score
/// record goes straight to the sink.
fn run_engine(
    edges: &[Edge],
    params: &HyperParams,
    sink: impl FnMut(&ScoreRecord),
) -> Result<(RunSummary, Engine), CliError> {
    let mut engine = Engine::new(params.clone()).map_err(usage)?;
    let ticks = Coalescer::new(edges.iter().copied().map(Ok));
    let summary = engine.run(ticks, sink).map_err(data)?;
    Ok((summary, engine))
}

fn load_label_file(path: &Path, expected_events: usize) -> Result<Vec<u8>, CliError> {
    let labels = parse_labels(open_input(path)?).map_err(data)?;
    if labels.len() != expected_events {
        return Err(CliError::Data(format!(
            "{}: {} labels for {} input events",
            path.display(),
            labels.len(),
            expected_events
        )));
    }
    Ok(labels)
}

fn cmd_detect(args: DetectArgs) -> Result<(), CliError> {
    let params = args.params.resolve()?;
    let (edges, interner) = load_edges(&args.input, params.undirected)?;
    let labels = match &args.labels {
        Some(path) => Some(load_label_file(path, edges.len())?),
        None => None,
    };

    // Score lines are written as they are produced; only the (score, label)
    // pairs needed for the AUC are kept.
    let mut auc_pairs: Vec<(f64, u8)> = Vec::new();
    let mut summary = RunSummary::default();
    with_output(args.output.as_ref(), |w| {
        w.write_all(config_header(&params).as_bytes())
            .map_err(|e| CliError::Data(e.to_string()))?;
        let mut write_err: Option<std::io::Error> = None;
        let (s, _) = run_engine(&edges, &params, |r| {
            if write_err.is_none() {
                if let Err(e) = writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    r.event_index,
                    r.time,
                    interner.name(r.ty.src),
                    interner.name(r.ty.dst),
                    r.score,
                    r.channel
                ) {
                    write_err = Some(e);
                }
            }
            if let Some(labels) = &labels {
                auc_pairs.push((r.score, labels[r.event_index as usize]));
            }
        })?;
        if let Some(e) = write_err {
            return Err(CliError::Data(e.to_string()));
        }
        summary = s;
        Ok(())
    })?;

    eprintln!(
        "events={} ticks={} scored={} updates={} evictions={} final_f_th={}",
        summary.events,
        summary.ticks,
        summary.scored_copies,
        summary.updates,
        summary.evictions,
        summary.final_f_th
    );
    if labels.is_some() {
        let scores: Vec<f64> = auc_pairs.iter().map(|&(s, _)| s).collect();
        let record_labels: Vec<u8> = auc_pairs.iter().map(|&(_, l)| l).collect();
        let auc = evalgen::auc(&scores, &record_labels).map_err(data)?;
        eprintln!("AUC = {auc:.6}");
    }
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let injection_kind = match args.kind.as_str() {
        "S" | "s" | "clique" => InjectionKind::Clique,
        "W" | "w" | "burst" => InjectionKind::Burst,
        other => {
            return Err(CliError::Usage(format!(
                "--kind expects S or W, got {other:?}"
            )));
        }
    };
    let config = SyntheticConfig {
        n_groups: args.n_groups,
        nodes_per_group: args.nodes_per_group,
        base_freq: args.base_freq,
        horizon: args.horizon,
        n_injections: args.n_injections,
        injection_kind,
        clique_size: args.clique_size,
        burst_size: args.burst_size,
        inject_after: args.inject_after,
        seed: args.seed,
    };
    let stream = evalgen::generate(&config).map_err(usage)?;

    let labels_path = PathBuf::from(format!("{}.labels", args.output.display()));
    write_atomic(&args.output, |stream_out| {
        write_atomic(&labels_path, |labels_out| {
            stream.write_to(&mut *stream_out, labels_out).map_err(data)
        })
    })?;
    eprintln!(
        "wrote {} events ({} labeled anomalous) to {} and {}",
        stream.edges.len(),
        stream.labels.iter().filter(|&&l| l == 1).count(),
        args.output.display(),
        labels_path.display()
    );
    Ok(())
}

/// One parsed line of a score file.
struct ScoreLine {
    event_index: u64,
    time: u64,
    score: f64,
}

fn read_score_file(path: &Path) -> Result<Vec<ScoreLine>, CliError> {
    let reader = open_input(path)?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_data(path))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut fields = t.split(',');
        let parse_err = || {
            CliError::Data(format!(
                "{}:{}: malformed score line",
                path.display(),
                i + 1
            ))
        };
        let event_index = fields
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(parse_err)?;
        let time = fields
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(parse_err)?;
        let score = fields
            .nth(2)
            .and_then(|v| v.parse().ok())
            .ok_or_else(parse_err)?;
        out.push(ScoreLine {
            event_index,
            time,
            score,
        });
    }
    Ok(out)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let lines = read_score_file(&args.scores)?;
    let labels = parse_labels(open_input(&args.labels)?).map_err(data)?;
    let mut scores = Vec::with_capacity(lines.len());
    let mut record_labels = Vec::with_capacity(lines.len());
    for line in &lines {
        let label = labels.get(line.event_index as usize).ok_or_else(|| {
            CliError::Data(format!(
                "score references event {} beyond {} labels",
                line.event_index,
                labels.len()
            ))
        })?;
        scores.push(line.score);
        record_labels.push(*label);
    }
    let auc = evalgen::auc(&scores, &record_labels).map_err(data)?;
    println!("AUC = {auc:.6}");
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let params = args.params.resolve()?;
    let (edges, interner) = load_edges(&args.input, params.undirected)?;
    let labels = load_label_file(&args.labels, edges.len())?;
    let mut limits = Vec::new();
    for raw in &args.mem_limits {
        limits.push(match raw.as_str() {
            "inf" | "unbounded" | "none" => None,
            n => Some(n.parse::<usize>().map_err(|_| {
                CliError::Usage(format!(
                    "--mem-limits entries must be integers or \"inf\", got {n:?}"
                ))
            })?),
        });
    }
    let stream = LabeledStream {
        edges,
        labels,
        interner,
    };
    let rows = evalgen::sweep_memory(&stream, &params, &limits).map_err(data)?;
    with_output(args.output.as_ref(), |w| {
        w.write_all(config_header(&params).as_bytes())
            .map_err(|e| CliError::Data(e.to_string()))?;
        wline(w, format_args!("mem_limit,auc,final_f_th"))?;
        for row in &rows {
            let mem = row
                .mem_limit
                .map(|m| m.to_string())
                .unwrap_or_else(|| "inf".into());
            wline(w, format_args!("{mem},{:.6},{}", row.auc, row.final_f_th))?;
        }
        Ok(())
    })
}

fn cmd_aggregate(args: AggregateArgs) -> Result<(), CliError> {
    if args.period == 0 {
        return Err(CliError::Usage("--period must be >= 1".into()));
    }
    let lines = read_score_file(&args.scores)?;
    let buckets = evalgen::aggregate_events(lines.iter().map(|l| (l.time, l.score)), args.period);
    with_output(args.output.as_ref(), |w| {
        wline(w, format_args!("period_index,max_score"))?;
        for (bucket, score) in buckets {
            wline(w, format_args!("{bucket},{score}"))?;
        }
        Ok(())
    })
}

fn cmd_dump_embeddings(args: DumpEmbeddingsArgs) -> Result<(), CliError> {
    let params = args.params.resolve()?;
    let (edges, interner) = load_edges(&args.input, params.undirected)?;
    let (_, engine) = run_engine(&edges, &params, |_| {})?;
    with_output(args.output.as_ref(), |w| {
        engine
            .embeddings()
            .write_dump(&mut *w, &interner)
            .map_err(data)
    })
}

pub fn main_entry<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Detect(args) => cmd_detect(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Aggregate(args) => cmd_aggregate(args),
        Command::DumpEmbeddings(args) => cmd_dump_embeddings(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
