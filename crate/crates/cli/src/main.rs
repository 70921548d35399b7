//! `repgeom`: command-line front end.
//!
//! Every subcommand reads and writes the formats of `repgeom::io`; `run`
//! executes a whole pipeline from a TOML file. Exit codes: 0 success,
//! 1 usage error, 2 data error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use repgeom::corpus::{DocSplit, TokenizeRules, Weighting};
use repgeom::embed;
use repgeom::io;
use repgeom::latent::{self, AttributeModel, Modulation, SeasonalModel};
use repgeom::lattice::{self, Boundary, ExponentialKernel};
use repgeom::linalg::{self, ModeOrder};
use repgeom::matrix::MatrixKind;
use repgeom::pipeline::{self, Limits, RunConfig};
use repgeom::probe::RidgeGrid;
use repgeom::{Error, Result};

#[derive(Parser)]
#[command(
    name = "repgeom",
    version,
    about = "Geometry of word representations from co-occurrence statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize a corpus and count windowed co-occurrences.
    Count(CountArgs),
    /// Build a target matrix (M*, PMI) over a word subset.
    Build(BuildArgs),
    /// Factorize a target matrix into embeddings.
    Embed(EmbedArgs),
    /// Centered PCA coordinates of a subset of embeddings.
    Project(ProjectArgs),
    /// Gram matrix of (a subset of) embeddings.
    Gram(GramArgs),
    /// Analytic spectrum of an exponential kernel on a lattice.
    Predict(PredictArgs),
    /// Exponential kernel matrix over labelled points (e.g. geographic coordinates).
    GeoKernel(GeoKernelArgs),
    /// Fit an exponential kernel to a matrix laid out on a 1-D lattice.
    FitKernel(FitKernelArgs),
    /// Linear coordinate decoding: double descent over probe rank.
    Decode(DecodeArgs),
    /// Sample a synthetic corpus from the seasonal latent model.
    Synth(SynthArgs),
    /// Spectrum of the seasonal-plus-attributes model.
    CombinedSpectrum(CombinedArgs),
    /// Zero a block of a seasonal matrix and measure what survives.
    AblateExperiment(AblateArgs),
    /// Run a pipeline described by a TOML config.
    Run(RunArgs),
}

#[derive(Args)]
struct CountArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 16)]
    window: usize,
    #[arg(long, default_value = "linear")]
    weighting: Weighting,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    min_doc_len: usize,
    /// Word list that must survive the vocabulary cap.
    #[arg(long)]
    probe_words: Option<PathBuf>,
    #[arg(long)]
    keep_case: bool,
    #[arg(long)]
    keep_numerals: bool,
    /// Documents separated by blank lines instead of one per line.
    #[arg(long)]
    blank_line_docs: bool,
    /// Co-occurrence output; `.csv` selects the text format.
    #[arg(long)]
    out: PathBuf,
    /// Vocabulary output (default: `<out>.vocab.tsv`).
    #[arg(long)]
    vocab_out: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct BuildArgs {
    #[arg(long)]
    stats: PathBuf,
    /// Vocabulary TSV (default: `<stats>.vocab.tsv`).
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value = "mstar")]
    kind: MatrixKind,
    /// Word list; omit for the whole vocabulary (requires --full-vocabulary).
    #[arg(long)]
    subset: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    /// Word list whose mutual co-occurrences are set to independence.
    #[arg(long)]
    ablate: Option<PathBuf>,
    #[arg(long)]
    full_vocabulary: bool,
    #[arg(long, default_value_t = pipeline::DEFAULT_MAX_DENSE)]
    max_dense: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write a labelled CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(short = 'd', long = "dim", default_value_t = 10)]
    d: usize,
    #[arg(long, default_value = "magnitude")]
    order: ModeOrder,
    #[arg(long, default_value_t = pipeline::DEFAULT_MAX_DENSE)]
    max_dense: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Word list of rows to project (default: all).
    #[arg(long)]
    words: Option<PathBuf>,
    /// Words projected into the basis without shaping it (repeatable or comma-separated).
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,
    /// Geometry CSV `word,pc1,..`.
    #[arg(long)]
    out: PathBuf,
    /// Singular values and degenerate groups.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct GramArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    words: Option<PathBuf>,
    #[arg(long)]
    centered: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct PredictArgs {
    #[arg(long, default_value = "periodic")]
    bc: Boundary,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(short = 'L', long = "sites")]
    sites: usize,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 8)]
    modes: usize,
    /// Plain (not periodized) kernel on periodic lattices.
    #[arg(long)]
    no_periodize: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct GeoKernelArgs {
    /// CSV `word,x1,..` with a header row.
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    sigma: f64,
    #[arg(long = "amp", default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.0)]
    shift: f64,
    /// Weight of the second coordinate in the squared distance.
    #[arg(long, default_value_t = 1.0)]
    aspect: f64,
    /// Matrix output (binary); `.csv` writes the labelled CSV instead.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct FitKernelArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// `[periodic:|open:]<word list>`, words in lattice order.
    #[arg(long)]
    lattice: String,
    #[arg(long)]
    periodized: bool,
    #[arg(long)]
    shift: bool,
    #[arg(long)]
    include_diagonal: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// CSV `word,x1,..` of true coordinates.
    #[arg(long)]
    coords: PathBuf,
    #[arg(long, default_value = "1..10")]
    ranks: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 60)]
    train: usize,
    #[arg(long, default_value_t = 60)]
    test: usize,
    /// `auto` or a comma-separated list of ridge values.
    #[arg(long, default_value = "auto")]
    ridge: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Equispaced model with N words (default: 12 months plus helpers).
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long, default_value_t = 12)]
    months: usize,
    #[arg(long, default_value_t = 100)]
    helpers: usize,
    #[arg(long, default_value_t = 12.0)]
    period: f64,
    #[arg(long, default_value_t = 4.0)]
    month_weight: f64,
    /// Wrapped-Gaussian modulation width (with --mod-height).
    #[arg(long, requires = "mod_height")]
    mod_width: Option<f64>,
    #[arg(long, requires = "mod_width")]
    mod_height: Option<f64>,
    /// Exponential-spectrum modulation length (with --mod-variance).
    #[arg(long, conflicts_with = "mod_width")]
    mod_sigma: Option<f64>,
    #[arg(long, default_value_t = 0.2)]
    mod_variance: f64,
    #[arg(long, default_value_t = 64)]
    harmonics: usize,
    /// No modulation at all (g ≡ 0).
    #[arg(long, conflicts_with_all = ["mod_width", "mod_sigma"])]
    flat: bool,
}

impl ModelArgs {
    fn modulation(&self) -> Modulation {
        if self.flat {
            Modulation::None
        } else if let (Some(width), Some(height)) = (self.mod_width, self.mod_height) {
            Modulation::WrappedGaussian { width, height }
        } else if let Some(s) = self.mod_sigma {
            Modulation::exponential_with_variance(s, self.mod_variance, self.harmonics, self.period)
        } else {
            Modulation::exponential_with_variance(1.5, self.mod_variance, self.harmonics, self.period)
        }
    }

    fn params(&self) -> pipeline::SynthParams {
        pipeline::SynthParams {
            n: self.n,
            months: self.months,
            helpers: self.helpers,
            period: self.period,
            month_weight: self.month_weight,
            modulation: self.modulation(),
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "seasonal")]
    model: String,
    #[command(flatten)]
    model_args: ModelArgs,
    #[arg(long, default_value_t = 1e6)]
    tokens: f64,
    #[arg(long, default_value_t = 64)]
    block: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth JSON (default: `<out>.json`).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CombinedArgs {
    #[arg(long = "N", default_value_t = 24)]
    n: usize,
    #[arg(long, value_delimiter = ',', required = true)]
    attrs: Vec<f64>,
    #[arg(long, default_value_t = 12.0)]
    period: f64,
    #[arg(long, default_value_t = 1.5)]
    mod_width: f64,
    #[arg(long, default_value_t = 0.8)]
    mod_height: f64,
    /// Also diagonalize the assembled matrix and report the largest discrepancy.
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    /// Word list of the block to zero.
    #[arg(long)]
    block: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "3,6,12,50")]
    dims: Vec<usize>,
    /// Target matrix; when omitted an equispaced seasonal model is used.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long = "N", default_value_t = 720)]
    n: usize,
    #[arg(long, default_value_t = 12.0)]
    period: f64,
    #[arg(long, default_value_t = 1.5)]
    mod_width: f64,
    #[arg(long, default_value_t = 0.8)]
    mod_height: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config value: `--set count.window=32` (repeatable).
    #[arg(long = "set")]
    overrides: Vec<String>,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn words_opt(path: &Option<PathBuf>) -> Result<Option<Vec<String>>> {
    path.as_deref().map(io::load_word_list).transpose()
}

fn count(a: CountArgs) -> Result<()> {
    let rules = TokenizeRules {
        lowercase: !a.keep_case,
        strip_numerals: !a.keep_numerals,
        vocab_size: a.vocab_size,
        min_doc_len: a.min_doc_len,
        probe_words: words_opt(&a.probe_words)?.unwrap_or_default(),
        doc_split: if a.blank_line_docs {
            DocSplit::BlankLine
        } else {
            DocSplit::Line
        },
        ..Default::default()
    };
    let params = pipeline::CountParams {
        window: a.window,
        weighting: a.weighting,
        tokenize: rules,
        ..Default::default()
    };
    let (vocab, table) = pipeline::count_corpus(&params, &a.corpus)?;
    io::save_cooc(&table, &a.out)?;
    let vocab_out = a.vocab_out.unwrap_or_else(|| sibling(&a.out, ".vocab.tsv"));
    io::write_file(&vocab_out, |w| io::write_vocab_tsv(&vocab, w))?;
    eprintln!(
        "{} tokens in vocabulary, {} nonzero pairs, Z = {:e}",
        vocab.len(),
        table.nnz(),
        table.z()
    );
    Ok(())
}

fn build(a: BuildArgs) -> Result<()> {
    let table = io::load_cooc(&a.stats)?;
    let vocab_path = a.vocab.clone().unwrap_or_else(|| sibling(&a.stats, ".vocab.tsv"));
    let vocab = io::read_vocab_tsv(io::open(&vocab_path)?)?;
    let params = pipeline::BuildParams {
        kind: a.kind,
        subset: words_opt(&a.subset)?,
        eps: a.eps,
        ablate: words_opt(&a.ablate)?.unwrap_or_default(),
        ..Default::default()
    };
    let limits = Limits {
        max_dense: a.max_dense,
        full_vocabulary: a.full_vocabulary,
    };
    let mut m = pipeline::build_matrix(&params, &vocab, &table, &limits)?;
    m.provenance.source = a.stats.display().to_string();
    io::save_matrix(&m, &a.out)?;
    if let Some(csv) = &a.csv {
        io::write_file(csv, |w| io::write_matrix_csv(&m, w))?;
    }
    Ok(())
}

fn embed_cmd(a: EmbedArgs) -> Result<()> {
    let m = io::load_matrix(&a.matrix)?;
    let limits = Limits {
        max_dense: a.max_dense,
        ..Default::default()
    };
    let e = pipeline::embed_matrix(
        &pipeline::EmbedParams {
            d: a.d,
            order: a.order,
            ..Default::default()
        },
        &m,
        &limits,
    )?;
    if e.boundary_tie {
        eprintln!("warning: eigenvalue tie at the truncation boundary; the last modes are not unique");
    }
    io::save_embedding(&e, &a.out)?;
    if let Some(csv) = &a.csv {
        io::write_file(csv, |w| io::write_embedding_csv(&e, w))?;
    }
    Ok(())
}

fn project(a: ProjectArgs) -> Result<()> {
    let e = io::load_embedding(&a.embeddings)?;
    let params = pipeline::ProjectParams {
        words: words_opt(&a.words)?,
        exclude: a.exclude,
        ..Default::default()
    };
    let g = pipeline::project_embeddings(&params, &e)?;
    io::write_file(&a.out, |w| pipeline::write_geometry_csv(&g, w))?;
    if let Some(json) = &a.json {
        io::write_json(&g, json)?;
    }
    Ok(())
}

fn gram(a: GramArgs) -> Result<()> {
    let mut e = io::load_embedding(&a.embeddings)?;
    if let Some(words) = words_opt(&a.words)? {
        e = e.select(&words)?;
    }
    let g = embed::gram(&e.w, a.centered);
    io::write_file(&a.out, |w| pipeline::write_gram_csv(&e.words, &g, w))
}

fn predict(a: PredictArgs) -> Result<()> {
    let params = pipeline::PredictParams {
        dim: a.dim,
        periodized: !a.no_periodize,
        modes: a.modes,
        ..Default::default()
    };
    let p = pipeline::predict_spectrum(&params, a.sigma, a.amplitude, a.sites, a.bc)?;
    io::write_file(&a.out, |w| io::write_prediction_csv(&p, w))
}

fn geo_kernel(a: GeoKernelArgs) -> Result<()> {
    let pts = io::load_points(&a.points)?;
    let mut weights = vec![1.0; pts.coords.ncols()];
    if weights.len() >= 2 {
        weights[1] = a.aspect;
    }
    let kernel = ExponentialKernel {
        amplitude: a.amplitude,
        shift: a.shift,
        ..ExponentialKernel::new(a.sigma)?
    };
    let mut m = lattice::kernel_matrix_points(pts.words, &pts.coords, &kernel, &weights)?;
    m.provenance.source = a.points.display().to_string();
    if a.out.extension().is_some_and(|e| e == "csv") {
        io::write_file(&a.out, |w| io::write_matrix_csv(&m, w))
    } else {
        io::save_matrix(&m, &a.out)
    }
}

fn parse_lattice(spec: &str) -> Result<(Boundary, PathBuf)> {
    match spec.split_once(':') {
        Some((bc, path)) if bc == "periodic" || bc == "open" => Ok((bc.parse()?, PathBuf::from(path))),
        _ => Ok((Boundary::Periodic, PathBuf::from(spec))),
    }
}

fn fit_kernel(a: FitKernelArgs) -> Result<()> {
    let m = io::load_matrix(&a.matrix)?;
    let (boundary, words) = parse_lattice(&a.lattice)?;
    let params = pipeline::FitKernelParams {
        lattice: io::load_word_list(&words)?,
        boundary,
        periodized: a.periodized,
        shift: a.shift,
        exclude_diagonal: !a.include_diagonal,
        ..Default::default()
    };
    let fit = pipeline::fit_kernel(&params, &m)?;
    io::write_json(&pipeline::kernel_fit_report(&fit), &a.out)
}

fn parse_ridge(s: &str) -> Result<RidgeGrid> {
    if s == "auto" {
        return Ok(RidgeGrid::Auto);
    }
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad ridge value '{v}'")))
        })
        .collect::<Result<_>>()
        .map(RidgeGrid::Values)
}

fn decode(a: DecodeArgs) -> Result<()> {
    let e = io::load_embedding(&a.embeddings)?;
    let coords = io::load_points(&a.coords)?;
    let params = pipeline::DecodeParams {
        ranks: a.ranks,
        trials: a.trials,
        train: a.train,
        test: a.test,
        ridge: parse_ridge(&a.ridge)?,
        ..Default::default()
    };
    let dd = pipeline::decode_experiment(&params, &e, &coords, a.seed)?;
    io::write_file(&a.out, |w| pipeline::write_double_descent_csv(&dd, w))?;
    eprintln!("test-error peak at r = {}", dd.test_peak());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    if a.model != "seasonal" {
        return Err(Error::InvalidArgument(format!(
            "unknown model '{}' (only 'seasonal')",
            a.model
        )));
    }
    let params = pipeline::SynthParams {
        tokens: a.tokens,
        block: a.block,
        ..a.model_args.params()
    };
    let (text, report) = pipeline::synth_corpus(&params, a.seed)?;
    io::write_file(&a.out, |w| w.write_all(&text))?;
    let report_path = a.report.unwrap_or_else(|| sibling(&a.out, ".json"));
    io::write_json(&report, &report_path)
}

#[derive(Serialize)]
struct CombinedReport {
    n: usize,
    attrs: Vec<f64>,
    offset: f64,
    circulant_eigenvalues: Vec<f64>,
    eigenvalues: Vec<latent::CombinedEigen>,
    /// Largest |Δλ| against dense diagonalization, when requested.
    dense_max_error: Option<f64>,
}

fn combined(a: CombinedArgs) -> Result<()> {
    let modulation = Modulation::WrappedGaussian {
        width: a.mod_width,
        height: a.mod_height,
    };
    let kt = latent::seasonal_pmi(&SeasonalModel::equispaced(a.n, a.period, modulation)?)?;
    let attrs = AttributeModel::new(a.attrs.clone())?;
    let spec = latent::circulant_spectrum(&kt, 1e-9)?;
    let mut eigenvalues = latent::combined_model_spectrum(&spec.eigenvalues, &attrs);
    eigenvalues.sort_by(|x, y| y.value.total_cmp(&x.value));
    let dense_max_error = if a.verify {
        let c = latent::combined_model_matrix(&kt, &attrs)?;
        let dense = linalg::sym_eigen(&c.values, ModeOrder::Value)?;
        Some(
            eigenvalues
                .iter()
                .zip(&dense.values)
                .map(|(p, d)| (p.value - d).abs())
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    io::write_json(
        &CombinedReport {
            n: a.n,
            offset: attrs.offset(),
            attrs: a.attrs,
            circulant_eigenvalues: spec.eigenvalues,
            eigenvalues,
            dense_max_error,
        },
        &a.out,
    )
}

fn ablate(a: AblateArgs) -> Result<()> {
    let m = match &a.matrix {
        Some(p) => io::load_matrix(p)?,
        None => {
            let params = pipeline::SynthParams {
                n: Some(a.n),
                period: a.period,
                modulation: Modulation::WrappedGaussian {
                    width: a.mod_width,
                    height: a.mod_height,
                },
                ..Default::default()
            };
            latent::seasonal_pmi(&pipeline::seasonal_model(&params)?)?
        }
    };
    let block_words = io::load_word_list(&a.block)?;
    let block = m.indices_of(&block_words)?;
    let reports = a
        .dims
        .iter()
        .map(|&d| latent::robustness_ablation(&m, &block, d))
        .collect::<Result<Vec<_>>>()?;
    io::write_json(&reports, &a.out)
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config, &a.overrides)?;
    let manifest = pipeline::run_pipeline(&cfg)?;
    for s in &manifest.stages {
        for f in &s.files {
            println!("{}\t{}\t{}", s.stage.id(), f.sha256, f.path);
        }
    }
    eprintln!("wrote {}", cfg.out_dir.join("manifest.json").display());
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Count(a) => count(a),
        Command::Build(a) => build(a),
        Command::Embed(a) => embed_cmd(a),
        Command::Project(a) => project(a),
        Command::Gram(a) => gram(a),
        Command::Predict(a) => predict(a),
        Command::GeoKernel(a) => geo_kernel(a),
        Command::FitKernel(a) => fit_kernel(a),
        Command::Decode(a) => decode(a),
        Command::Synth(a) => synth(a),
        Command::CombinedSpectrum(a) => combined(a),
        Command::AblateExperiment(a) => ablate(a),
        Command::Run(a) => run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Stage { completed, .. } = &e {
                if !completed.is_empty() {
                    eprintln!("files completed before the failure:");
                    for (path, hash) in completed {
                        eprintln!("  {hash}  {path}");
                    }
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
