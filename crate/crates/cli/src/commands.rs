use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use consensus_core::fixtures::{fixture_suite, Preset};
use consensus_core::fusion::{fuse, Consensus, FusionResult, Method, MethodSpec};
use consensus_core::macchiato::Heuristic;
use consensus_core::metrics::{
    detection_prf, lesionwise_prf, shannon_entropy, size_report, voxel_prf, PrfTriple,
};
use consensus_core::morphology::connected_components;
use consensus_core::oracle::OracleBudget;
use consensus_core::staple::PriorSpec;
use consensus_core::study::{background_sweep, bench_heuristics, limit_analysis, ConsensusDistance};
use consensus_core::{BinaryMask, Neighborhood, RaterStack};
use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::format::{LoadedManifest, Manifest, MaskData, MaskFile};
use crate::png::export_png;
use crate::report::{emit, envelope, write_csv};

#[derive(Debug, Parser)]
#[command(name = "consensus", version, about = "Fuse rater segmentations into consensus masks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse the raters of a manifest into one consensus mask.
    Fuse(FuseArgs),
    /// Score a stored consensus against the raters of a manifest.
    Metrics(MetricsArgs),
    /// Re-run a method while growing the background.
    BgStudy(BgStudyArgs),
    /// Compare MACCHIatO heuristics (and the oracle when affordable).
    BenchHeuristics(BenchArgs),
    /// Write a synthetic rater set and its manifest.
    GenFixtures(GenArgs),
    /// Render one slice of a mask as a greyscale PNG with its contour.
    ExportPng(PngArgs),
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: consensus_core::Error| e.to_string())
}

fn parse_neighborhood(s: &str) -> Result<Neighborhood, String> {
    s.parse().map_err(|e: consensus_core::Error| e.to_string())
}

fn parse_heuristic(s: &str) -> Result<Heuristic, String> {
    s.parse().map_err(|e: consensus_core::Error| e.to_string())
}

fn parse_distance(s: &str) -> Result<ConsensusDistance, String> {
    s.parse().map_err(|e: consensus_core::Error| e.to_string())
}

/// `uninformative`, `avg` or `power:A:alpha`.
pub fn parse_prior(s: &str) -> Result<PriorSpec, String> {
    match s {
        "uninformative" => Ok(PriorSpec::Uninformative),
        "avg" => Ok(PriorSpec::AverageOccurrence),
        _ => {
            let parts: Vec<&str> = s.split(':').collect();
            match parts.as_slice() {
                ["power", a, alpha] => {
                    let a: f64 = a.parse().map_err(|_| format!("bad prior constant '{a}'"))?;
                    let alpha: u32 = alpha.parse().map_err(|_| format!("bad prior exponent '{alpha}'"))?;
                    Ok(PriorSpec::Power { a, alpha })
                }
                _ => Err(format!("unknown prior '{s}' (uninformative, avg, power:A:alpha)")),
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    #[arg(long, value_parser = parse_heuristic)]
    pub heuristic: Option<Heuristic>,
    #[arg(long, value_parser = parse_neighborhood)]
    pub neighborhood: Option<Neighborhood>,
    #[arg(long, value_parser = parse_prior)]
    pub prior: Option<PriorSpec>,
}

impl MethodArgs {
    fn spec(&self) -> Result<MethodSpec, CliError> {
        if self.heuristic.is_some() && !self.method.is_macchiato() {
            return Err(CliError::Usage("heuristic requires a macchiato method".into()));
        }
        if self.prior.is_some() && self.method != Method::MmlStaple {
            return Err(CliError::Usage("prior requires mml-staple".into()));
        }
        let mut spec = MethodSpec::new(self.method);
        if let Some(h) = self.heuristic {
            spec.macchiato.heuristic = h;
        }
        if let Some(p) = self.prior {
            spec.prior = p;
        }
        Ok(spec)
    }

    fn load(&self, manifest: &Path) -> Result<LoadedManifest, CliError> {
        let mut loaded = Manifest::read(manifest)?;
        if let Some(nb) = self.neighborhood {
            loaded.stack = loaded
                .stack
                .with_neighborhood(nb)
                .map_err(|e| CliError::Usage(format!("neighborhood: {e}")))?;
        }
        Ok(loaded)
    }
}

fn input_info(loaded: &LoadedManifest) -> Value {
    json!({
        "name": loaded.manifest.name,
        "manifest": loaded.path.display().to_string(),
        "dims": loaded.stack.grid().dims(),
        "neighborhood": loaded.stack.grid().neighborhood(),
        "raters": loaded.stack.raters(),
    })
}

fn spec_info(spec: &MethodSpec) -> Value {
    let mut v = json!({ "method": spec.method.name() });
    if spec.method.is_macchiato() {
        v["macchiato"] = json!(spec.macchiato);
    }
    if matches!(spec.method, Method::MlStaple | Method::MmlStaple) {
        v["staple"] = json!({
            "max_iter": spec.staple.max_iter,
            "tol": spec.staple.tol,
            "model": spec.staple.model,
        });
    }
    if spec.method == Method::MmlStaple {
        v["prior"] = json!(spec.prior);
    }
    v
}

fn result_info(r: &FusionResult) -> Value {
    let soft = r.consensus.to_soft();
    let mut v = json!({
        "kind": if r.consensus.as_hard().is_some() { "binary" } else { "soft" },
        "size": r.consensus.size(),
        "thresholded_size": r.consensus.binarized().count(),
        "entropy": shannon_entropy(&soft),
    });
    if let Some(l) = r.lmsd {
        v["lmsd"] = json!(l);
    }
    if let Some(p) = &r.performance {
        v["performance"] = json!(p);
    }
    if let Some(w) = r.prior {
        v["prior_w"] = json!(w);
    }
    if let Some(t) = &r.trace {
        v["em"] = json!(t);
    }
    v
}

fn write_consensus(path: &Path, consensus: &Consensus) -> Result<(), CliError> {
    match consensus {
        Consensus::Hard(m) => MaskFile::from_binary(m).write(path),
        Consensus::Soft(m) => MaskFile::from_soft(m).write(path),
    }
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    pub manifest: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON report path (stdout when omitted).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn fuse_cmd(args: &FuseArgs) -> Result<(), CliError> {
    let spec = args.method.spec()?;
    let loaded = args.method.load(&args.manifest)?;
    let start = Instant::now();
    let r = fuse(&loaded.stack, &spec)?;
    let seconds = start.elapsed().as_secs_f64();
    info!("{} on '{}' took {seconds:.3}s", spec.method, loaded.manifest.name);
    write_consensus(&args.out, &r.consensus)?;
    let report = envelope(
        "fuse",
        json!({
            "input": input_info(&loaded),
            "config": spec_info(&spec),
            "output": args.out.display().to_string(),
            "global": result_info(&r),
            "components": r.components,
            "timings": { "seconds": seconds },
        }),
    );
    emit(args.report.as_deref(), &report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricsMode {
    Voxel,
    Lesion,
    Detect,
    Entropy,
    Sizes,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub manifest: PathBuf,
    /// Consensus mask file; repeat for several in `sizes` mode.
    #[arg(long, required = true)]
    pub consensus: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: MetricsMode,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct PrfRow {
    rater: String,
    precision: f64,
    recall: f64,
    f1: f64,
}

impl PrfRow {
    fn new(rater: impl Into<String>, t: &PrfTriple) -> Self {
        Self {
            rater: rater.into(),
            precision: t.precision,
            recall: t.recall,
            f1: t.f1,
        }
    }
}

fn load_consensus(path: &Path, stack: &RaterStack) -> Result<Consensus, CliError> {
    let file = MaskFile::read(path)?;
    if file.dims != stack.grid().dims() {
        return Err(CliError::Format(format!(
            "{}: dims {:?} differ from the raters' {:?}",
            path.display(),
            file.dims,
            stack.grid().dims()
        )));
    }
    let nb = stack.grid().neighborhood();
    Ok(match file.data {
        MaskData::Binary(_) => Consensus::Hard(file.into_binary(nb)?),
        MaskData::Soft(_) => Consensus::Soft(file.into_soft(nb)?),
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn metrics_cmd(args: &MetricsArgs) -> Result<(), CliError> {
    let loaded = Manifest::read(&args.manifest)?;
    let stack = &loaded.stack;
    let consensus: Vec<Consensus> = args
        .consensus
        .iter()
        .map(|p| load_consensus(p, stack))
        .collect::<Result<_, _>>()?;
    if args.mode != MetricsMode::Sizes && consensus.len() > 1 {
        return Err(CliError::Usage("several consensus files are only accepted with --mode sizes".into()));
    }
    let first = &consensus[0];
    let hard: BinaryMask = first.binarized();
    let binarized = first.as_soft().is_some();
    let conventions = "precision = 1 when nothing is predicted; recall = 1 when nothing is expected; f1 = 0 when both are 0";
    let (body, rows): (Value, Vec<PrfRow>) = match args.mode {
        MetricsMode::Voxel | MetricsMode::Detect => {
            let mut rows = Vec::new();
            let mut triples = Vec::new();
            for (k, m) in stack.masks().iter().enumerate() {
                let t = if args.mode == MetricsMode::Voxel {
                    voxel_prf(&hard, m)?
                } else {
                    detection_prf(&hard, m)?
                };
                rows.push(PrfRow::new(k.to_string(), &t));
                triples.push(t);
            }
            let mean = PrfTriple::mean(&triples);
            (
                json!({ "rows": rows, "mean": mean, "binarized": binarized, "conventions": conventions }),
                rows,
            )
        }
        MetricsMode::Lesion => {
            let labels = connected_components(stack);
            let report = lesionwise_prf(&hard, stack, &labels)?;
            let rows: Vec<PrfRow> = report
                .scores
                .iter()
                .map(|s| PrfRow::new(format!("lesion{}-rater{}", s.lesion, s.rater), &s.prf))
                .collect();
            (
                json!({
                    "rows": report.scores,
                    "mean": report.mean,
                    "averaging": "mean over all (lesion, rater) pairs",
                    "binarized": binarized,
                    "conventions": conventions,
                }),
                rows,
            )
        }
        MetricsMode::Entropy => {
            let soft = first.to_soft();
            (
                json!({ "entropy": shannon_entropy(&soft), "log_base": "e" }),
                Vec::new(),
            )
        }
        MetricsMode::Sizes => {
            let mv = fuse(stack, &MethodSpec::new(Method::MajorityVote))?.consensus;
            let mut named: Vec<(String, &Consensus)> = vec![("mv".to_string(), &mv)];
            for (p, c) in args.consensus.iter().zip(&consensus) {
                named.push((stem(p), c));
            }
            let rows = size_report(&named, &mv);
            if let Some(path) = &args.csv {
                write_csv(path, &rows)?;
            }
            let report = envelope(
                "metrics",
                json!({ "input": input_info(&loaded), "mode": "sizes", "reference": "mv", "rows": rows }),
            );
            return emit(args.report.as_deref(), &report);
        }
    };
    if let Some(path) = &args.csv {
        write_csv(path, &rows)?;
    }
    let mode = format!("{:?}", args.mode).to_lowercase();
    let mut report = envelope("metrics", json!({ "input": input_info(&loaded), "mode": mode }));
    if let (Value::Object(r), Value::Object(b)) = (&mut report, body) {
        r.extend(b);
    }
    emit(args.report.as_deref(), &report)
}

#[derive(Debug, Args)]
pub struct BgStudyArgs {
    pub manifest: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Ascending background margins, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub margins: Vec<usize>,
    /// Pad only after the last slice of this axis instead of all around.
    #[arg(long)]
    pub axis: Option<usize>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn bg_study_cmd(args: &BgStudyArgs) -> Result<(), CliError> {
    let spec = args.method.spec()?;
    let loaded = args.method.load(&args.manifest)?;
    let start = Instant::now();
    let rows = background_sweep(&loaded.stack, &spec, &args.margins, args.axis)?;
    let mut body = json!({
        "input": input_info(&loaded),
        "config": spec_info(&spec),
        "padding": match args.axis {
            Some(a) => format!("after axis {a}"),
            None => "all sides".to_string(),
        },
        "rows": rows,
    });
    if spec.method == Method::MmlStaple {
        let power = match spec.prior {
            PriorSpec::Uninformative => Some((0.5, 0)),
            PriorSpec::Power { a, alpha } => Some((a, alpha)),
            PriorSpec::AverageOccurrence => None,
        };
        match (power, rows.last()) {
            (Some((a, alpha)), Some(last)) if last.voxels as f64 > 0.0 => {
                let n = (last.voxels as f64).max(1e6);
                let analysis = limit_analysis(&loaded.stack, a, alpha, &spec.staple, n)?;
                body["limits"] = json!(analysis);
            }
            _ => {
                body["limits"] = json!({ "skipped": "prior is not of the form A / N^alpha" });
            }
        }
    }
    body["timings"] = json!({ "seconds": start.elapsed().as_secs_f64() });
    if let Some(path) = &args.csv {
        write_csv(path, &rows)?;
    }
    emit(args.report.as_deref(), &envelope("bg-study", body))
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Manifests to benchmark.
    pub manifests: Vec<PathBuf>,
    /// Add the built-in fixture suite generated from this seed.
    #[arg(long)]
    pub suite: Option<u64>,
    #[arg(long, value_parser = parse_distance, default_value = "jaccard")]
    pub distance: ConsensusDistance,
    #[arg(long, value_delimiter = ',', value_parser = parse_heuristic, default_value = "subcrown,crown,voxel")]
    pub heuristics: Vec<Heuristic>,
    /// Largest component the exhaustive oracle enumerates.
    #[arg(long, default_value_t = OracleBudget::default().max_support)]
    pub max_support: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct BenchCsvRow {
    name: String,
    support: usize,
    heuristic: String,
    lmsd: f64,
    seconds: f64,
    oracle: Option<f64>,
}

fn bench_cmd(args: &BenchArgs) -> Result<(), CliError> {
    let mut stacks = Vec::new();
    for m in &args.manifests {
        let loaded = Manifest::read(m)?;
        stacks.push((loaded.manifest.name.clone(), loaded.stack));
    }
    if let Some(seed) = args.suite {
        stacks.extend(fixture_suite(seed));
    }
    if stacks.is_empty() {
        return Err(CliError::Usage("give at least one manifest or --suite".into()));
    }
    let budget = OracleBudget {
        max_support: args.max_support,
        ..OracleBudget::default()
    };
    let report = bench_heuristics(&stacks, args.distance, &args.heuristics, &budget)?;
    if let Some(path) = &args.csv {
        let rows: Vec<BenchCsvRow> = report
            .rows
            .iter()
            .flat_map(|r| {
                report.heuristics.iter().enumerate().map(move |(i, h)| BenchCsvRow {
                    name: r.name.clone(),
                    support: r.support,
                    heuristic: h.name().into(),
                    lmsd: r.lmsd[i],
                    seconds: r.seconds[i],
                    oracle: r.oracle,
                })
            })
            .collect();
        write_csv(path, &rows)?;
    }
    let oracle_kind = match args.distance {
        ConsensusDistance::Binary(_) => "exhaustive optimum",
        ConsensusDistance::Soft(_) => "dense coordinate-descent reference",
    };
    emit(
        args.report.as_deref(),
        &envelope(
            "bench-heuristics",
            json!({ "oracle": oracle_kind, "budget": budget, "result": report }),
        ),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    F1,
    Rings,
    Blobs,
    EmptyRater,
    TwoComponents,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::F1 => Preset::F1,
            PresetArg::Rings => Preset::Rings,
            PresetArg::Blobs => Preset::Blobs,
            PresetArg::EmptyRater => Preset::EmptyRater,
            PresetArg::TwoComponents => Preset::TwoComponents,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub preset: PresetArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn gen_cmd(args: &GenArgs) -> Result<(), CliError> {
    let preset = Preset::from(args.preset);
    let stack = preset.build(args.seed);
    let path = Manifest::write_stack(&args.out, preset.name(), &stack)?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct PngArgs {
    pub mask: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Slice index along axis 0 for 3D masks.
    #[arg(long, default_value_t = 0)]
    pub slice: usize,
    /// Pixels per voxel.
    #[arg(long, default_value_t = 8)]
    pub scale: u32,
}

fn png_cmd(args: &PngArgs) -> Result<(), CliError> {
    let file = MaskFile::read(&args.mask)?;
    export_png(&file, args.slice, args.scale, &args.out)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Fuse(a) => fuse_cmd(a),
        Command::Metrics(a) => metrics_cmd(a),
        Command::BgStudy(a) => bg_study_cmd(a),
        Command::BenchHeuristics(a) => bench_cmd(a),
        Command::GenFixtures(a) => gen_cmd(a),
        Command::ExportPng(a) => png_cmd(a),
    }
}
