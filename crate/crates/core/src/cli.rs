//! Command-line front end.
//!
//! Data goes to `--out` (stdout when the flag is absent) and human-readable
//! progress to stderr. When `--out` is given, a manifest sidecar
//! `<out>.manifest.json` records the arguments, resolved configuration and
//! input digests; `replay <manifest>` reruns it.
//!
//! Exit codes: 0 success, 1 a check failed, 2 a run diverged, 64 usage
//! error, 66 unreadable or changed input.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::dynamics::{
    self, check_node_count, generate_graph, parse_edge_list, parse_features, DynamicsConfig, GcnOperatorKind,
    GraphKind, GraphTopology, NormPosition, Propagation,
};
use crate::error::Error;
use crate::metrics::LayerDiagnostics;
use crate::norms::{NormVariant, NormalizerConfig};
use crate::numerics::RepMatrix;
use crate::rng::{derive_seed, gaussian_matrix, seeded};
use crate::verify::{self, SuiteOptions, SuiteSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_NO_INPUT: i32 = 66;

pub const TOOL_VERSION: &str = concat!("contranorm ", env!("CARGO_PKG_VERSION"));

#[derive(Parser, Debug, Clone)]
#[command(name = "contranorm", version, about = "Representation-collapse experiments and checks for ContraNorm")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Stack propagation layers and record per-layer diagnostics.
    Dynamics(DynamicsArgs),
    /// Per-layer singular values for one or more normalizers.
    Spectrum(SpectrumArgs),
    /// Randomized checks of the variance and effective-rank results.
    Verify(VerifyArgs),
    /// Analytic vs finite-difference gradient of the uniformity loss.
    Gradcheck(GradcheckArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PropagationArg {
    Gcn,
    Attention,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PositionArg {
    Before,
    After,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenArg {
    Ring,
    Complete,
    Sbm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GcnOperatorArg {
    Symmetric,
    RowNormalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
pub struct DynamicsArgs {
    #[arg(long, value_enum, default_value_t = PropagationArg::Attention)]
    pub propagation: PropagationArg,
    #[arg(long, default_value_t = 12)]
    pub layers: usize,
    #[arg(long, default_value_t = NormVariant::None)]
    pub norm: NormVariant,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub scale: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub tau: f64,
    /// Divide the stop-gradient and dual logits by the temperature.
    #[arg(long)]
    pub temper_logits: bool,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub residual: Switch,
    #[arg(long, value_enum, default_value_t = PositionArg::After)]
    pub norm_position: PositionArg,
    /// Temperature of the attention operator.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub tau_attn: f64,
    #[arg(long, value_enum, default_value_t = GcnOperatorArg::Symmetric)]
    pub gcn_operator: GcnOperatorArg,
    /// Multiply every layer by a seeded random orthogonal matrix.
    #[arg(long)]
    pub mixing: bool,
    /// Edge list, one `u v` pair per line.
    #[arg(long, conflicts_with = "gen")]
    pub graph: Option<PathBuf>,
    /// Headerless CSV, one row per node.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub gen: Option<GenArg>,
    /// Add `I` to the adjacency before normalizing.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub self_loops: Switch,
    #[arg(long, default_value_t = 0.5)]
    pub p_in: f64,
    #[arg(long, default_value_t = 0.05)]
    pub p_out: f64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
    #[arg(long)]
    pub record_spectrum: bool,
}

#[derive(Args, Debug, Clone)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub run: DynamicsArgs,
    /// Comma-separated normalizers to run side by side (e.g. `none,sg,full`);
    /// defaults to `--norm`.
    #[arg(long, value_delimiter = ',')]
    pub compare: Vec<NormVariant>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PropArg {
    #[value(name = "1")]
    Prop1,
    #[value(name = "2")]
    Prop2,
    Eigenmap,
    Lemma1,
    Lemma3,
    Diagdom,
    All,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub prop: PropArg,
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_counterexample: bool,
}

#[derive(Args, Debug, Clone)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run the full n x d x tau grid instead of one instance.
    #[arg(long)]
    pub grid: bool,
    /// Inputs per grid point.
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write to this path instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Sidecar describing how an output file was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name.
    pub argv: Vec<String>,
    pub config_echo: serde_json::Value,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    /// SHA-256 of every file read, keyed by the path as given.
    pub input_file_digests: BTreeMap<String, String>,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    msg: String,
}

impl Failure {
    fn new(code: i32, msg: impl Into<String>) -> Self {
        Failure { code, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } | Error::Parse { .. } => EXIT_NO_INPUT,
            Error::InvalidConfig(_) | Error::DimensionMismatch(_) | Error::InvalidShape { .. } => EXIT_USAGE,
            Error::Diverged { .. } => EXIT_DIVERGED,
            _ => EXIT_CHECK_FAILED,
        };
        Failure::new(code, e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, argv) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    }
}

fn execute(cli: Cli, argv: Vec<String>) -> CliResult<i32> {
    let started = now();
    let (name, out, outcome) = match cli.command {
        Command::Dynamics(a) => ("dynamics", a.out.clone(), cmd_dynamics(&a)?),
        Command::Spectrum(a) => ("spectrum", a.run.out.clone(), cmd_spectrum(&a)?),
        Command::Verify(a) => ("verify", a.out.clone(), cmd_verify(&a)?),
        Command::Gradcheck(a) => ("gradcheck", a.out.clone(), cmd_gradcheck(&a)?),
        Command::Replay(a) => return cmd_replay(&a),
    };
    emit(&outcome.data, out.as_deref())?;
    if let Some(out) = out {
        let manifest = RunManifest {
            tool_version: TOOL_VERSION.to_string(),
            command: name.to_string(),
            argv,
            config_echo: outcome.echo,
            seed: outcome.seed,
            started,
            finished: now(),
            input_file_digests: outcome.digests,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_file(&manifest_path(&out), &(text + "\n"))?;
    }
    if let Some(msg) = &outcome.failure {
        eprintln!("{msg}");
    }
    Ok(outcome.code)
}

/// What a command produced, before it is written anywhere.
struct Outcome {
    data: String,
    code: i32,
    failure: Option<String>,
    echo: serde_json::Value,
    seed: u64,
    digests: BTreeMap<String, String>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// `<out>.manifest.json`
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::new(EXIT_NO_INPUT, format!("{}: {e}", path.display())))
}

fn emit(data: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => write_file(path, data),
        None => io::stdout()
            .lock()
            .write_all(data.as_bytes())
            .map_err(|e| Failure::new(EXIT_CHECK_FAILED, format!("stdout: {e}"))),
    }
}

fn read_input(path: &Path, digests: &mut BTreeMap<String, String>) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    digests.insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
    String::from_utf8(bytes).map_err(|_| {
        Failure::from(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: "not valid UTF-8".into(),
        })
    })
}

// ---------------------------------------------------------------------------
// Float and record formatting
// ---------------------------------------------------------------------------

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>, none: &str) -> String {
    x.map_or_else(|| none.to_string(), format_f64)
}

fn json_record(variant: Option<NormVariant>, r: &LayerDiagnostics, spectrum: bool) -> String {
    let mut s = String::from("{");
    if let Some(v) = variant {
        let _ = write!(s, "\"variant\":\"{v}\",");
    }
    let _ = write!(
        s,
        "\"layer_index\":{},\"variance\":{},\"effective_rank\":{},\"uniformity_loss\":{},\"vicreg_exp_loss\":{},\"dim_loss\":{},\"feature_similarity\":{},\"attention_similarity\":{}",
        r.layer_index,
        format_f64(r.variance),
        opt(r.effective_rank, "null"),
        format_f64(r.uniformity_loss),
        format_f64(r.vicreg_exp_loss),
        format_f64(r.dim_loss),
        opt(r.feature_similarity, "null"),
        opt(r.attention_similarity, "null"),
    );
    if spectrum {
        let values: Vec<String> = r.singular_values.values().iter().map(|&v| format_f64(v)).collect();
        let _ = write!(s, ",\"singular_values\":[{}]", values.join(","));
    }
    s.push_str("}\n");
    s
}

const CSV_FIELDS: [&str; 8] = [
    "layer_index",
    "variance",
    "effective_rank",
    "uniformity_loss",
    "vicreg_exp_loss",
    "dim_loss",
    "feature_similarity",
    "attention_similarity",
];

fn csv_header(variant: bool, spectrum_len: Option<usize>) -> String {
    let mut cols: Vec<String> = Vec::new();
    if variant {
        cols.push("variant".into());
    }
    cols.extend(CSV_FIELDS.iter().map(|s| s.to_string()));
    if let Some(q) = spectrum_len {
        cols.extend((1..=q).map(|k| format!("sv_{k}")));
    }
    cols.join(",") + "\n"
}

fn csv_record(variant: Option<NormVariant>, r: &LayerDiagnostics, spectrum: bool) -> String {
    let mut cols = Vec::new();
    if let Some(v) = variant {
        cols.push(v.to_string());
    }
    cols.extend([
        r.layer_index.to_string(),
        format_f64(r.variance),
        opt(r.effective_rank, ""),
        format_f64(r.uniformity_loss),
        format_f64(r.vicreg_exp_loss),
        format_f64(r.dim_loss),
        opt(r.feature_similarity, ""),
        opt(r.attention_similarity, ""),
    ]);
    if spectrum {
        cols.extend(r.singular_values.values().iter().map(|&v| format_f64(v)));
    }
    cols.join(",") + "\n"
}

/// Serializes runs in the chosen format. `variant` adds a leading column
/// naming the normalizer of each block of records.
fn render(blocks: &[(Option<NormVariant>, &[LayerDiagnostics])], format: FormatArg, spectrum: bool) -> String {
    let mut s = String::new();
    if format == FormatArg::Csv {
        let q = blocks
            .iter()
            .flat_map(|(_, rs)| rs.first())
            .map(|r| r.singular_values.len())
            .next()
            .unwrap_or(0);
        s.push_str(&csv_header(blocks.iter().any(|(v, _)| v.is_some()), spectrum.then_some(q)));
    }
    for (variant, records) in blocks {
        for r in records.iter() {
            s.push_str(&match format {
                FormatArg::Json => json_record(*variant, r, spectrum),
                FormatArg::Csv => csv_record(*variant, r, spectrum),
            });
        }
    }
    s
}

// ---------------------------------------------------------------------------
// dynamics / spectrum
// ---------------------------------------------------------------------------

struct Prepared {
    cfg: DynamicsConfig,
    h0: RepMatrix,
    graph: Option<GraphTopology>,
    echo: serde_json::Value,
    digests: BTreeMap<String, String>,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::new(EXIT_USAGE, msg)
}

fn prepare(a: &DynamicsArgs, variant: NormVariant) -> CliResult<Prepared> {
    let mut digests = BTreeMap::new();
    let features = match &a.features {
        Some(path) => Some(parse_features(&read_input(path, &mut digests)?, &path.display().to_string())?),
        None => None,
    };
    let propagation = match a.propagation {
        PropagationArg::Gcn => Propagation::GcnSymmetric,
        PropagationArg::Attention => Propagation::Attention,
    };
    let mut graph = match (&a.graph, a.gen) {
        (Some(path), _) => Some(parse_edge_list(&read_input(path, &mut digests)?, &path.display().to_string())?),
        (None, Some(kind)) => {
            let n = a.n.or(features.as_ref().map(|f| f.rows())).unwrap_or(16);
            let kind = match kind {
                GenArg::Ring => GraphKind::Ring,
                GenArg::Complete => GraphKind::Complete,
                GenArg::Sbm => GraphKind::TwoBlockSbm,
            };
            Some(generate_graph(kind, n, a.p_in, a.p_out, derive_seed(a.seed, 1))?)
        }
        (None, None) => None,
    };
    if propagation == Propagation::GcnSymmetric && graph.is_none() {
        return Err(usage("--propagation gcn needs --graph or --gen"));
    }
    if a.self_loops == Switch::On {
        graph = graph.map(GraphTopology::with_self_loops);
    }
    let n = a
        .n
        .or(features.as_ref().map(|f| f.rows()))
        .or(graph.as_ref().map(|g| g.node_count()))
        .unwrap_or(16);
    let h0 = match features {
        Some(f) => {
            if a.n.is_some_and(|n| n != f.rows()) || a.d.is_some_and(|d| d != f.cols()) {
                return Err(usage(format!(
                    "--n/--d disagree with the {}x{} feature file",
                    f.rows(),
                    f.cols()
                )));
            }
            f
        }
        None => {
            let d = a.d.unwrap_or(8);
            if n == 0 || d == 0 {
                return Err(usage("--n and --d must be positive"));
            }
            gaussian_matrix(&mut seeded(derive_seed(a.seed, 0)), n, d)
        }
    };
    if let Some(g) = &graph {
        check_node_count(g, &h0)?;
    }
    let cfg = DynamicsConfig {
        propagation,
        depth: a.layers,
        residual: a.residual == Switch::On,
        norm: NormalizerConfig::new(variant)
            .with_scale(a.scale)
            .with_tau(a.tau)
            .with_temper_logits(a.temper_logits),
        norm_position: match a.norm_position {
            PositionArg::Before => NormPosition::BeforeResidual,
            PositionArg::After => NormPosition::AfterResidual,
        },
        tau_attn: a.tau_attn,
        seed: derive_seed(a.seed, 2),
        record_spectrum: a.record_spectrum,
        gcn_operator: match a.gcn_operator {
            GcnOperatorArg::Symmetric => GcnOperatorKind::Symmetric,
            GcnOperatorArg::RowNormalized => GcnOperatorKind::RowNormalized,
        },
        mixing: a.mixing,
    };
    cfg.validate()?;
    cfg.norm.validate(Some(h0.cols()))?;
    let echo = json!({
        "dynamics": cfg,
        "n": h0.rows(),
        "d": h0.cols(),
        "features": a.features.as_ref().map(|p| p.display().to_string()),
        "graph": a.graph.as_ref().map(|p| p.display().to_string()),
        "gen": a.gen.map(|g| format!("{g:?}").to_lowercase()),
        "p_in": a.p_in,
        "p_out": a.p_out,
        "self_loops": a.self_loops == Switch::On,
        "format": format!("{:?}", a.format).to_lowercase(),
    });
    Ok(Prepared {
        cfg,
        h0,
        graph,
        echo,
        digests,
    })
}

/// Runs one configuration. A divergence keeps the records computed so far.
fn run_records(p: &Prepared) -> CliResult<(Vec<LayerDiagnostics>, Option<String>)> {
    match dynamics::run(&p.h0, &p.cfg, p.graph.as_ref()) {
        Ok(records) => Ok((records, None)),
        Err(Error::Diverged { layer, partial }) => Ok((
            partial,
            Some(format!("representation became non-finite at layer {layer}")),
        )),
        Err(e) => Err(e.into()),
    }
}

fn cmd_dynamics(a: &DynamicsArgs) -> CliResult<Outcome> {
    let p = prepare(a, a.norm)?;
    let (records, diverged) = run_records(&p)?;
    let data = render(&[(None, &records)], a.format, a.record_spectrum);
    if diverged.is_none() {
        if let Some(last) = records.last() {
            eprintln!(
                "dynamics: {} records, final variance {:.6e}, final effective rank {}",
                records.len(),
                last.variance,
                last.effective_rank.map_or("n/a".into(), |r| format!("{r:.6}"))
            );
        }
    }
    Ok(Outcome {
        data,
        code: if diverged.is_some() { EXIT_DIVERGED } else { EXIT_OK },
        failure: diverged,
        echo: p.echo,
        seed: a.seed,
        digests: p.digests,
    })
}

fn cmd_spectrum(a: &SpectrumArgs) -> CliResult<Outcome> {
    if !a.run.record_spectrum {
        return Err(usage("spectrum requires --record-spectrum"));
    }
    let variants = if a.compare.is_empty() { vec![a.run.norm] } else { a.compare.clone() };
    let mut runs = Vec::new();
    let mut echo = Vec::new();
    let mut digests = BTreeMap::new();
    let mut diverged = None;
    for &v in &variants {
        let p = prepare(&a.run, v)?;
        let (records, d) = run_records(&p)?;
        if let Some(last) = records.last() {
            let tiny = last.singular_values.values().iter().filter(|&&s| s < 0.01 * last.singular_values.max().unwrap_or(0.0)).count();
            eprintln!("spectrum: {v}: {tiny} singular values below 1% of the largest at layer {}", last.layer_index);
        }
        echo.push(json!({ "variant": v, "config": p.echo }));
        digests.extend(p.digests);
        runs.push((Some(v), records));
        if d.is_some() {
            diverged = d.map(|m| format!("{v}: {m}"));
            break;
        }
    }
    let blocks: Vec<(Option<NormVariant>, &[LayerDiagnostics])> = runs.iter().map(|(v, r)| (*v, r.as_slice())).collect();
    Ok(Outcome {
        data: render(&blocks, a.run.format, true),
        code: if diverged.is_some() { EXIT_DIVERGED } else { EXIT_OK },
        failure: diverged,
        echo: serde_json::Value::Array(echo),
        seed: a.run.seed,
        digests,
    })
}

// ---------------------------------------------------------------------------
// verify / gradcheck / replay
// ---------------------------------------------------------------------------

fn summary_line(s: &SuiteSummary) -> String {
    format!(
        "{}: {} instances, {} checked, {} skipped, {} counterexamples, worst slack {}",
        s.name,
        s.instances,
        s.checked,
        s.skipped,
        s.counterexamples.len(),
        s.worst_slack.map_or("n/a".into(), |w| format!("{w:.3e}"))
    )
}

fn cmd_verify(a: &VerifyArgs) -> CliResult<Outcome> {
    let opts = SuiteOptions {
        instances: a.instances,
        seed: a.seed,
        inject_counterexample: a.inject_counterexample,
    };
    type Suite = fn(&SuiteOptions) -> crate::Result<SuiteSummary>;
    let all: [(PropArg, Suite); 6] = [
        (PropArg::Prop1, verify::prop1_suite),
        (PropArg::Prop2, verify::prop2_suite),
        (PropArg::Eigenmap, verify::eigenmap_suite),
        (PropArg::Lemma1, verify::lemma1_suite),
        (PropArg::Lemma3, verify::lemma3_suite),
        (PropArg::Diagdom, verify::diagdom_suite),
    ];
    let mut data = String::new();
    let mut failed = 0;
    for (prop, suite) in all {
        if a.prop != PropArg::All && a.prop != prop {
            continue;
        }
        let s = suite(&opts)?;
        eprintln!("{}", summary_line(&s));
        failed += s.counterexamples.len();
        data.push_str(&serde_json::to_string(&s).expect("summary serializes"));
        data.push('\n');
    }
    Ok(Outcome {
        data,
        code: if failed == 0 { EXIT_OK } else { EXIT_CHECK_FAILED },
        failure: (failed > 0).then(|| format!("verify: {failed} counterexample(s)")),
        echo: json!({
            "prop": format!("{:?}", a.prop).to_lowercase(),
            "instances": a.instances,
            "seed": a.seed,
            "inject_counterexample": a.inject_counterexample,
        }),
        seed: a.seed,
        digests: BTreeMap::new(),
    })
}

fn cmd_gradcheck(a: &GradcheckArgs) -> CliResult<Outcome> {
    let (data, passed) = if a.grid {
        let s = verify::gradient_grid(a.seeds, a.seed)?;
        eprintln!("{}", summary_line(&s));
        (serde_json::to_string(&s).expect("summary serializes"), s.passed())
    } else {
        if a.n == 0 || a.d == 0 {
            return Err(usage("--n and --d must be positive"));
        }
        let h = gaussian_matrix(&mut seeded(a.seed), a.n, a.d);
        let r = verify::gradient_check(&h, a.tau)?;
        eprintln!("gradcheck: max relative error {:.3e}", r.max_rel_error);
        (serde_json::to_string(&r).expect("report serializes"), r.passed)
    };
    Ok(Outcome {
        data: data + "\n",
        code: if passed { EXIT_OK } else { EXIT_CHECK_FAILED },
        failure: (!passed).then(|| format!("gradcheck: relative error above {:e}", verify::GRADIENT_REL_TOL)),
        echo: json!({
            "n": a.n,
            "d": a.d,
            "tau": a.tau,
            "seed": a.seed,
            "grid": a.grid,
            "seeds": a.seeds,
        }),
        seed: a.seed,
        digests: BTreeMap::new(),
    })
}

/// `argv` with the value of `--out` replaced (or appended).
fn with_out(argv: &[String], out: &Path) -> Vec<String> {
    let out = out.display().to_string();
    let mut result = Vec::with_capacity(argv.len() + 2);
    let mut replaced = false;
    let mut it = argv.iter();
    while let Some(arg) = it.next() {
        if arg == "--out" {
            it.next();
            result.extend(["--out".to_string(), out.clone()]);
            replaced = true;
        } else if arg.starts_with("--out=") {
            result.push(format!("--out={out}"));
            replaced = true;
        } else {
            result.push(arg.clone());
        }
    }
    if !replaced {
        result.extend(["--out".to_string(), out]);
    }
    result
}

fn cmd_replay(a: &ReplayArgs) -> CliResult<i32> {
    let path = a.manifest.display().to_string();
    let text = fs::read_to_string(&a.manifest).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| {
        Failure::from(Error::Parse {
            path: path.clone(),
            line: e.line(),
            msg: e.to_string(),
        })
    })?;
    for (file, expected) in &manifest.input_file_digests {
        let bytes = fs::read(file).map_err(|source| Error::Io {
            path: file.clone(),
            source,
        })?;
        if &hex::encode(Sha256::digest(&bytes)) != expected {
            return Err(Failure::new(EXIT_NO_INPUT, format!("{file} changed since the manifest was written")));
        }
    }
    let argv = match &a.out {
        Some(out) => with_out(&manifest.argv, out),
        None => manifest.argv.clone(),
    };
    let cli = Cli::try_parse_from(std::iter::once("contranorm".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| usage(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(usage("a manifest cannot record a replay"));
    }
    execute(cli, argv)
}
