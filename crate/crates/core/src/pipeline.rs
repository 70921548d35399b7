//! Declarative end-to-end runs.
//!
//! A [`RunConfig`] lists stages (synth → count → build → embed → project →
//! fit-kernel → predict → compare, plus decode) and one parameter table per
//! stage. Each stage either consumes the artifact produced earlier in the same
//! run or reads the file named in its table. Outputs are written to a staging
//! directory and renamed into `out_dir` once their stage succeeds; the final
//! `manifest.json` lists every file with its SHA-256.
//!
//! The stage functions (`synth_corpus`, `count_corpus`, ...) are public so the
//! command-line subcommands run exactly the same code.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{self, CooccurrenceTable, TokenizeRules, Vocabulary, Weighting};
use crate::embed::{self, EmbeddingSet, ProjectedGeometry};
use crate::io;
use crate::kernel_fit::{self, FitOptions, KernelFit};
use crate::latent::{self, Modulation, SeasonalModel};
use crate::lattice::{self, Boundary, ExponentialKernel, SemanticLattice, SpectralPrediction};
use crate::linalg::{self, ModeOrder};
use crate::matrix::{self, MatrixKind, Subset, TargetMatrix};
use crate::probe::{self, DoubleDescent, DoubleDescentConfig, RidgeGrid};
use crate::{Error, Result};

/// Default limit for dense eigenproblems.
pub const DEFAULT_MAX_DENSE: usize = 6000;

pub const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageName {
    Synth,
    Count,
    Build,
    Embed,
    Project,
    FitKernel,
    Predict,
    Compare,
    Decode,
}

impl StageName {
    pub fn id(self) -> &'static str {
        match self {
            StageName::Synth => "synth",
            StageName::Count => "count",
            StageName::Build => "build",
            StageName::Embed => "embed",
            StageName::Project => "project",
            StageName::FitKernel => "fit-kernel",
            StageName::Predict => "predict",
            StageName::Compare => "compare",
            StageName::Decode => "decode",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    /// Largest matrix that is diagonalized densely.
    pub max_dense: usize,
    /// Allow `build` without a subset, i.e. over the whole vocabulary.
    pub full_vocabulary: bool,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_dense: DEFAULT_MAX_DENSE,
            full_vocabulary: false,
        }
    }
}

impl Limits {
    fn check(&self, what: &str, n: usize) -> Result<()> {
        if n > self.max_dense {
            return Err(Error::SizeGuard {
                what: what.into(),
                requested: n,
                limit: self.max_dense,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    /// Equispaced model with this many words (`w000`, ...); when unset the
    /// months-plus-helpers layout is used.
    pub n: Option<usize>,
    pub months: usize,
    pub helpers: usize,
    pub period: f64,
    /// Base weight of month words relative to helpers.
    pub month_weight: f64,
    /// Helper centers are `(i/H − ½)·T + helper_offset`.
    pub helper_offset: f64,
    pub modulation: Modulation,
    /// Number of tokens; a float so that `1e6` is accepted.
    pub tokens: f64,
    /// Tokens per latent draw; each block is written as one document line.
    pub block: usize,
    /// Overrides the root seed.
    pub seed: Option<u64>,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n: None,
            months: 12,
            helpers: 100,
            period: 12.0,
            month_weight: 4.0,
            helper_offset: 0.03,
            modulation: Modulation::exponential_with_variance(1.5, 0.2, 64, 12.0),
            tokens: 1e6,
            block: 64,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountParams {
    pub corpus: Option<PathBuf>,
    pub window: usize,
    pub weighting: Weighting,
    pub tokenize: TokenizeRules,
    /// Write the table as CSV instead of the binary format.
    pub csv: bool,
    pub docs_per_shard: usize,
}

impl Default for CountParams {
    fn default() -> Self {
        CountParams {
            corpus: None,
            window: 16,
            weighting: Weighting::Linear,
            tokenize: TokenizeRules::default(),
            csv: false,
            docs_per_shard: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildParams {
    pub stats: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub kind: MatrixKind,
    pub subset: Option<Vec<String>>,
    pub subset_file: Option<PathBuf>,
    pub eps: f64,
    /// Words whose mutual co-occurrences are set to independence before building.
    pub ablate: Vec<String>,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            stats: None,
            vocab: None,
            kind: MatrixKind::Mstar,
            subset: None,
            subset_file: None,
            eps: 0.0,
            ablate: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedParams {
    pub matrix: Option<PathBuf>,
    pub d: usize,
    pub order: ModeOrder,
}

impl Default for EmbedParams {
    fn default() -> Self {
        EmbedParams {
            matrix: None,
            d: 10,
            order: ModeOrder::Magnitude,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectParams {
    pub embeddings: Option<PathBuf>,
    /// Rows to project (default: all).
    pub words: Option<Vec<String>>,
    /// Rows projected into the basis without shaping it.
    pub exclude: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitKernelParams {
    pub matrix: Option<PathBuf>,
    /// Words in lattice order.
    pub lattice: Vec<String>,
    pub boundary: Boundary,
    pub periodized: bool,
    pub shift: bool,
    pub exclude_diagonal: bool,
}

impl Default for FitKernelParams {
    fn default() -> Self {
        FitKernelParams {
            matrix: None,
            lattice: Vec::new(),
            boundary: Boundary::Periodic,
            periodized: true,
            shift: true,
            exclude_diagonal: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictParams {
    /// Kernel length in `[−1, 1]` units; taken from the fit when unset.
    pub sigma: Option<f64>,
    /// Kernel amplitude multiplying the unit-measure spectrum; from the fit when unset, else 1.
    pub amplitude: Option<f64>,
    /// Sites per axis; defaults to the fitted lattice.
    pub sites: Option<usize>,
    pub dim: usize,
    /// Defaults to the fitted lattice's boundary, else periodic.
    pub boundary: Option<Boundary>,
    /// Periodized kernel shape (periodic lattices only).
    pub periodized: bool,
    /// Modes kept in the output (open boundaries solve exactly this many).
    pub modes: usize,
}

impl Default for PredictParams {
    fn default() -> Self {
        PredictParams {
            sigma: None,
            amplitude: None,
            sites: None,
            dim: 1,
            boundary: None,
            periodized: true,
            modes: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareParams {
    /// 1-based centered mode pairs traced as Lissajous curves.
    pub lissajous: Vec<[usize; 2]>,
}

impl Default for CompareParams {
    fn default() -> Self {
        CompareParams {
            lissajous: vec![[1, 2], [1, 3], [2, 4]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeParams {
    pub embeddings: Option<PathBuf>,
    pub coords: Option<PathBuf>,
    /// `a..b` (inclusive) or a comma-separated list.
    pub ranks: String,
    pub trials: usize,
    pub train: usize,
    pub test: usize,
    pub ridge: RidgeGrid,
    /// Overrides the root seed.
    pub seed: Option<u64>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            embeddings: None,
            coords: None,
            ranks: "1..10".into(),
            trials: 100,
            train: 60,
            test: 60,
            ridge: RidgeGrid::Auto,
            seed: None,
        }
    }
}

/// The whole run, as read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub stages: Vec<StageName>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub synth: SynthParams,
    #[serde(default)]
    pub count: CountParams,
    #[serde(default)]
    pub build: BuildParams,
    #[serde(default)]
    pub embed: EmbedParams,
    #[serde(default)]
    pub project: ProjectParams,
    #[serde(default)]
    pub fit_kernel: FitKernelParams,
    #[serde(default)]
    pub predict: PredictParams,
    #[serde(default)]
    pub compare: CompareParams,
    #[serde(default)]
    pub decode: DecodeParams,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Set `a.b.c = value` in a TOML table. The value is read as a TOML literal
/// when it parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("override '{assignment}' is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidArgument(format!("bad override key '{key}'")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let p = p.replace('-', "_");
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::InvalidArgument(format!("override '{key}': '{p}' is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].replace('-', "_"), value);
    Ok(())
}

impl RunConfig {
    /// Parse, apply `key=value` overrides and validate.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<RunConfig> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::from_toml(&text, overrides)?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    /// Resolve relative paths against `dir` (the config file's directory).
    pub fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        };
        if self.out_dir.is_relative() {
            self.out_dir = dir.join(&self.out_dir);
        }
        fix(&mut self.count.corpus);
        fix(&mut self.build.stats);
        fix(&mut self.build.vocab);
        fix(&mut self.build.subset_file);
        fix(&mut self.embed.matrix);
        fix(&mut self.project.embeddings);
        fix(&mut self.fit_kernel.matrix);
        fix(&mut self.decode.embeddings);
        fix(&mut self.decode.coords);
    }

    fn runs(&self, s: StageName) -> bool {
        self.stages.contains(&s)
    }

    /// Stage order, input resolvability and cheap parameter checks.
    pub fn validate(&self) -> Result<()> {
        use StageName::*;
        if self.stages.is_empty() {
            return Err(Error::InvalidArgument("config lists no stages".into()));
        }
        if self.stages.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "stages must be listed once each, in pipeline order \
                 (synth, count, build, embed, project, fit-kernel, predict, compare, decode)"
                    .into(),
            ));
        }
        let need = |stage: StageName, file: bool, producer: StageName, what: &str| -> Result<()> {
            if self.runs(stage) && !file && !self.runs(producer) {
                return Err(Error::InvalidArgument(format!(
                    "stage '{}' needs {what}: run '{}' or give its path",
                    stage.id(),
                    producer.id()
                )));
            }
            Ok(())
        };
        need(Count, self.count.corpus.is_some(), Synth, "a corpus")?;
        let b = &self.build;
        if self.runs(Build) && (b.stats.is_some() != b.vocab.is_some()) {
            return Err(Error::InvalidArgument(
                "build: give both stats and vocab paths, or neither".into(),
            ));
        }
        need(Build, b.stats.is_some(), Count, "co-occurrence statistics")?;
        need(Embed, self.embed.matrix.is_some(), Build, "a matrix")?;
        need(Project, self.project.embeddings.is_some(), Embed, "embeddings")?;
        need(FitKernel, self.fit_kernel.matrix.is_some(), Build, "a matrix")?;
        need(Predict, self.predict.sigma.is_some(), FitKernel, "a kernel length")?;
        need(Compare, false, Project, "projected geometry")?;
        need(Compare, false, Predict, "a prediction")?;
        need(Decode, self.decode.embeddings.is_some(), Embed, "embeddings")?;
        if self.runs(Decode) && self.decode.coords.is_none() {
            return Err(Error::InvalidArgument("decode needs a coords file".into()));
        }
        if self.runs(FitKernel) && self.fit_kernel.lattice.len() < 3 {
            return Err(Error::InvalidArgument(
                "fit_kernel.lattice needs at least 3 words".into(),
            ));
        }
        if self.runs(Build) && b.subset.is_some() && b.subset_file.is_some() {
            return Err(Error::InvalidArgument(
                "build: give subset or subset_file, not both".into(),
            ));
        }
        if self.runs(Build) && b.subset.is_none() && b.subset_file.is_none() && !self.limits.full_vocabulary {
            return Err(Error::InvalidArgument(
                "build without a subset covers the whole vocabulary; set limits.full_vocabulary = true".into(),
            ));
        }
        if self.runs(Synth) {
            tokens_from_f64(self.synth.tokens)?;
        }
        if self.runs(Decode) {
            parse_ranks(&self.decode.ranks)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization (after overrides and rebasing).
    /// `out_dir` is left out: where results land does not change them.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let canonical = toml::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Input files named explicitly in the tables of the stages that run.
    fn declared_inputs(&self) -> Vec<&Path> {
        use StageName::*;
        let mut v: Vec<(StageName, &Option<PathBuf>)> = vec![
            (Count, &self.count.corpus),
            (Build, &self.build.stats),
            (Build, &self.build.vocab),
            (Build, &self.build.subset_file),
            (Embed, &self.embed.matrix),
            (Project, &self.project.embeddings),
            (FitKernel, &self.fit_kernel.matrix),
            (Decode, &self.decode.embeddings),
        ];
        v.push((Decode, &self.decode.coords));
        v.into_iter()
            .filter(|(s, _)| self.runs(*s))
            .filter_map(|(_, p)| p.as_deref())
            .collect()
    }
}

fn tokens_from_f64(t: f64) -> Result<usize> {
    if !(t >= 1.0) || t.fract() != 0.0 || t > 1e12 {
        return Err(Error::InvalidArgument(format!(
            "token count {t} must be a positive integer"
        )));
    }
    Ok(t as usize)
}

/// `"1..120"` (inclusive) or `"1,2,5"`.
pub fn parse_ranks(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidArgument(format!("bad rank list '{spec}' (use a..b or a,b,c)"));
    let ranks: Vec<usize> = if let Some((a, b)) = spec.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a == 0 || b < a || b - a > 1_000_000 {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if ranks.is_empty() || ranks.contains(&0) {
        return Err(bad());
    }
    Ok(ranks)
}

// ---------------------------------------------------------------- stages

/// The seasonal model described by `p`.
pub fn seasonal_model(p: &SynthParams) -> Result<SeasonalModel> {
    if let Some(n) = p.n {
        let mut m = SeasonalModel::equispaced(n, p.period, p.modulation)?;
        let width = (n.max(1) - 1).to_string().len().max(3);
        m.words = (0..n).map(|i| format!("w{i:0width$}")).collect();
        return Ok(m);
    }
    if p.months < 3 {
        return Err(Error::InvalidArgument("synth needs at least 3 month words".into()));
    }
    let month_names: Vec<String> = if p.months == 12 {
        MONTHS.iter().map(|s| s.to_string()).collect()
    } else {
        (0..p.months).map(|i| format!("m{i:02}")).collect()
    };
    let t = p.period;
    let mut words = month_names;
    let mut centers: Vec<f64> = (0..p.months).map(|i| (i as f64 / p.months as f64 - 0.5) * t).collect();
    let mut base = vec![p.month_weight; p.months];
    let width = p.helpers.max(1).to_string().len().max(3);
    for i in 0..p.helpers {
        words.push(format!("h{i:0width$}"));
        centers.push((i as f64 / p.helpers as f64 - 0.5) * t + p.helper_offset);
        base.push(1.0);
    }
    let n = words.len();
    let m = SeasonalModel {
        words,
        period: t,
        centers,
        base,
        strengths: vec![1.0; n],
        modulation: p.modulation,
    };
    m.validate()?;
    Ok(m)
}

/// Ground truth recorded next to a synthetic corpus.
#[derive(Debug, Clone, Serialize)]
pub struct SynthReport {
    pub model: SeasonalModel,
    pub tokens: usize,
    pub block: usize,
    pub seed: u64,
    /// Kernel length of the modulation in `[−1, 1]` lattice units, when it has one.
    pub lattice_sigma: Option<f64>,
}

/// Sample a corpus; returns the text (one block per line) and the ground truth.
pub fn synth_corpus(p: &SynthParams, seed: u64) -> Result<(Vec<u8>, SynthReport)> {
    let model = seasonal_model(p)?;
    let tokens = tokens_from_f64(p.tokens)?;
    let docs = latent::sample_corpus(&model, tokens, p.block, seed)?;
    let mut text = Vec::with_capacity(tokens * 8);
    io::write_documents(&docs, &model.words, &mut text).expect("writing to memory");
    let lattice_sigma = model.modulation.lattice_sigma(model.period);
    Ok((
        text,
        SynthReport {
            model,
            tokens,
            block: p.block,
            seed,
            lattice_sigma,
        },
    ))
}

pub fn count_corpus(p: &CountParams, corpus: &Path) -> Result<(Vocabulary, CooccurrenceTable)> {
    let (docs, vocab) = corpus::tokenize_corpus(io::open(corpus)?, &p.tokenize)?;
    let table = corpus::count_parallel(&docs, vocab.len(), p.window, p.weighting, p.docs_per_shard)?;
    Ok((vocab, table))
}

/// Resolve the subset of `p` against `vocab` (whole vocabulary when unset).
pub fn build_subset(p: &BuildParams, vocab: &Vocabulary, limits: &Limits) -> Result<Subset> {
    let words = match (&p.subset, &p.subset_file) {
        (Some(w), _) => Some(w.clone()),
        (None, Some(f)) => Some(io::load_word_list(f)?),
        (None, None) => None,
    };
    let subset = match words {
        Some(w) => Subset::from_words(vocab, &w)?,
        None => {
            if !limits.full_vocabulary {
                return Err(Error::InvalidArgument(
                    "no subset given; full-vocabulary matrices need an explicit override".into(),
                ));
            }
            Subset::all(vocab)
        }
    };
    limits.check("target matrix", subset.len())?;
    Ok(subset)
}

pub fn build_matrix(
    p: &BuildParams,
    vocab: &Vocabulary,
    table: &CooccurrenceTable,
    limits: &Limits,
) -> Result<TargetMatrix> {
    if table.vocab_size() != vocab.len() {
        return Err(Error::Incompatible(format!(
            "vocabulary has {} tokens but the table was counted over {}",
            vocab.len(),
            table.vocab_size()
        )));
    }
    let subset = build_subset(p, vocab, limits)?;
    let ablated;
    let table = if p.ablate.is_empty() {
        table
    } else {
        ablated = matrix::ablate_block(table, &vocab.ids_of(&p.ablate)?)?;
        &ablated
    };
    let mut m = match p.kind {
        MatrixKind::Mstar => matrix::build_mstar(table, &subset)?,
        MatrixKind::Pmi => matrix::build_pmi(table, &subset, 0.0)?,
        MatrixKind::PmiEps => {
            if !(p.eps > 0.0) {
                return Err(Error::InvalidArgument("pmi-eps needs eps > 0".into()));
            }
            matrix::build_pmi(table, &subset, p.eps)?
        }
        MatrixKind::AbsMstar => matrix::psd_nsd_split(&matrix::build_mstar(table, &subset)?)?.absolute()?,
    };
    m.provenance.ablated = p.ablate.clone();
    Ok(m)
}

pub fn embed_matrix(p: &EmbedParams, m: &TargetMatrix, limits: &Limits) -> Result<EmbeddingSet> {
    limits.check("eigendecomposition", m.len())?;
    embed::factorize(m, p.d, p.order)
}

pub fn project_embeddings(p: &ProjectParams, e: &EmbeddingSet) -> Result<ProjectedGeometry> {
    let e = match &p.words {
        Some(w) => e.select(w)?,
        None => e.clone(),
    };
    embed::project_pca(&e, &p.exclude)
}

pub fn fit_kernel(p: &FitKernelParams, m: &TargetMatrix) -> Result<KernelFit> {
    let lat = SemanticLattice::new(1, p.lattice.len(), p.boundary)?.with_words(p.lattice.clone())?;
    let sub = m.restrict(&m.indices_of(&p.lattice)?)?;
    let stats = kernel_fit::empirical_kernel(&sub, &lat)?;
    kernel_fit::fit_exponential(
        &stats,
        FitOptions {
            periodized: p.periodized,
            fit_shift: p.shift,
            exclude_diagonal: p.exclude_diagonal,
        },
    )
}

/// Multiply every eigenvalue by `factor` (amplitudes by √|factor|).
pub fn scale_prediction(p: &SpectralPrediction, factor: f64) -> SpectralPrediction {
    let mut out = p.clone();
    for m in &mut out.modes {
        m.eigenvalue *= factor;
        m.amplitude = m.eigenvalue.abs().sqrt();
    }
    out
}

/// Spectrum of `amplitude·C_σ` on the lattice, with eigenvalues of the raw
/// kernel matrix (the lattice measure divided back out).
pub fn predict_spectrum(
    p: &PredictParams,
    sigma: f64,
    amplitude: f64,
    sites: usize,
    bc: Boundary,
) -> Result<SpectralPrediction> {
    let lat = SemanticLattice::new(p.dim, sites, bc)?;
    let unit = match bc {
        Boundary::Periodic if p.dim == 1 && p.periodized => lattice::periodized_exp_spectrum(&lat, sigma)?,
        Boundary::Periodic => {
            let kernel = ExponentialKernel {
                periodized: p.periodized,
                ..ExponentialKernel::new(sigma)?
            };
            let measure = lat.measure();
            let samples: Vec<f64> = lat.kernel_samples(|d| measure * kernel.shape(d));
            lattice::predict_fourier_geometry(&lat, &samples)?
        }
        Boundary::Open => lattice::predict_open_geometry(&lat, sigma, p.modes.max(1))?,
    };
    let mut pred = scale_prediction(&unit, amplitude / lat.measure());
    pred.modes.truncate(p.modes.max(1));
    Ok(pred)
}

/// Prediction parameters with unset values filled from a kernel fit.
pub fn predict_from(p: &PredictParams, fit: Option<&KernelFit>) -> Result<SpectralPrediction> {
    let sigma = p
        .sigma
        .or(fit.map(|f| f.kernel.sigma))
        .ok_or_else(|| Error::InvalidArgument("predict needs sigma or a kernel fit".into()))?;
    let amplitude = p.amplitude.or(fit.map(|f| f.kernel.amplitude)).unwrap_or(1.0);
    let sites = p
        .sites
        .or(fit.map(|f| f.stats.sites_per_axis))
        .ok_or_else(|| Error::InvalidArgument("predict needs the number of sites".into()))?;
    let bc = p
        .boundary
        .or(fit.map(|f| f.stats.boundary))
        .unwrap_or(Boundary::Periodic);
    predict_spectrum(p, sigma, amplitude, sites, bc)
}

/// Double descent on the centered PCA coordinates of the rows named in the coords file.
pub fn decode_experiment(p: &DecodeParams, e: &EmbeddingSet, coords: &io::Points, seed: u64) -> Result<DoubleDescent> {
    let e = e.select(&coords.words)?;
    let g = embed::project_pca(&e, &[] as &[&str])?;
    let ranks: Vec<usize> = parse_ranks(&p.ranks)?.into_iter().filter(|&r| r <= g.rank()).collect();
    if ranks.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no requested rank fits the {}-dimensional projection",
            g.rank()
        )));
    }
    let cfg = DoubleDescentConfig {
        ranks,
        train: p.train,
        test: p.test,
        trials: p.trials,
        ridge: p.ridge.clone(),
        seed,
    };
    probe::double_descent_experiment(&g.wbar, &coords.coords, &cfg)
}

// ------------------------------------------------------------- comparison

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupComparison {
    /// Centered mode positions (0-based, half-open).
    pub modes: Range<usize>,
    pub predicted_eigenvalue: f64,
    /// Principal angles (radians) between the empirical and predicted column spans.
    pub principal_angles: Vec<f64>,
    pub max_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LissajousCurve {
    /// 1-based centered mode indices.
    pub mu: usize,
    pub nu: usize,
    /// Empirical points after orthogonal alignment onto the prediction.
    pub empirical: Vec<[f64; 2]>,
    pub predicted: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub words: Vec<String>,
    /// Number of centered modes compared.
    pub modes: usize,
    pub groups: Vec<GroupComparison>,
    /// Largest principal angle between the two leading two-dimensional spans.
    pub top_pair_angle: Option<f64>,
    /// Empirical singular value over predicted column norm, per centered mode.
    pub amplitude_ratios: Vec<f64>,
    /// ‖G_emp − G_pred‖_F / ‖G_pred‖_F for the centered Gram matrices.
    pub gram_relative_frobenius: f64,
    pub procrustes_residual: f64,
    pub lissajous: Vec<LissajousCurve>,
}

/// Compare projected empirical geometry with a prediction on the same sites
/// (rows in lattice order). Degenerate groups are compared as subspaces, so
/// a rotation inside a group does not register.
pub fn compare_geometry(
    empirical: &ProjectedGeometry,
    predicted: &SpectralPrediction,
    lissajous: &[[usize; 2]],
) -> Result<ComparisonReport> {
    let n = empirical.wbar.nrows();
    if predicted.sites != n {
        return Err(Error::Dimension(format!(
            "{n} empirical rows but {} predicted sites",
            predicted.sites
        )));
    }
    let centered = predicted.centered_modes();
    let r = empirical.rank().min(centered.len());
    let emp = empirical.truncate(r);
    let pred = predicted.geometry(r);

    let mut groups = Vec::new();
    for g in predicted.centered_groups() {
        if g.end > r {
            break;
        }
        let a = emp.columns(g.start, g.len()).into_owned();
        let b = pred.columns(g.start, g.len()).into_owned();
        let principal_angles = if b.norm() > 0.0 && a.norm() > 0.0 {
            linalg::principal_angles(&a, &b)?
        } else {
            vec![std::f64::consts::FRAC_PI_2; g.len()]
        };
        let max_angle = principal_angles.iter().cloned().fold(0.0, f64::max);
        groups.push(GroupComparison {
            predicted_eigenvalue: centered[g.start].eigenvalue,
            modes: g,
            principal_angles,
            max_angle,
        });
    }
    let top_pair_angle = if r >= 2 {
        Some(linalg::max_principal_angle(
            &emp.columns(0, 2).into_owned(),
            &pred.columns(0, 2).into_owned(),
        )?)
    } else {
        None
    };
    let amplitude_ratios = (0..r)
        .map(|j| {
            let p = pred.column(j).norm();
            if p > 0.0 {
                emp.column(j).norm() / p
            } else {
                f64::INFINITY
            }
        })
        .collect();

    let g_emp = empirical.gram();
    let g_pred = linalg::double_center(&predicted.centered_gram());
    let gram_relative_frobenius = linalg::relative_frobenius(&g_emp, &g_pred);

    let (aligned, procrustes_residual) = if r > 0 {
        let pr = embed::align_procrustes(&emp, &pred)?;
        (&emp * &pr.q, pr.residual)
    } else {
        (emp.clone(), 0.0)
    };
    let mut curves = Vec::new();
    for &[mu, nu] in lissajous {
        if mu == 0 || nu == 0 || mu > r || nu > r {
            continue;
        }
        let pts = |m: &DMatrix<f64>| (0..n).map(|i| [m[(i, mu - 1)], m[(i, nu - 1)]]).collect();
        curves.push(LissajousCurve {
            mu,
            nu,
            empirical: pts(&aligned),
            predicted: pts(&pred),
        });
    }
    Ok(ComparisonReport {
        words: empirical.words.clone(),
        modes: r,
        groups,
        top_pair_angle,
        amplitude_ratios,
        gram_relative_frobenius,
        procrustes_residual,
        lissajous: curves,
    })
}

// ---------------------------------------------------------------- writers

/// Header `word,pc1,..,pcr`.
pub fn write_geometry_csv<W: Write>(g: &ProjectedGeometry, w: W) -> std::io::Result<()> {
    let cols: Vec<String> = (1..=g.rank()).map(|j| format!("pc{j}")).collect();
    io::write_labeled_csv(&g.words, &g.wbar, &cols, w)
}

pub fn write_gram_csv<W: Write>(words: &[String], gram: &DMatrix<f64>, w: W) -> std::io::Result<()> {
    io::write_labeled_csv(words, gram, words, w)
}

/// Columns `r,train_mean,train_std,test_mean,test_std,best_test_mean,best_train_mean,best_ridge`.
pub fn write_double_descent_csv<W: Write>(dd: &DoubleDescent, mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "r,train_mean,train_std,test_mean,test_std,best_test_mean,best_train_mean,best_ridge"
    )?;
    for c in &dd.curves {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            c.r, c.train_mean, c.train_std, c.test_mean, c.test_std, c.best_test_mean, c.best_train_mean, c.best_ridge
        )?;
    }
    Ok(())
}

/// Per-distance table plus the fitted parameters.
#[derive(Debug, Clone, Serialize)]
pub struct KernelFitReport<'a> {
    pub sigma: f64,
    pub sigma_sites: f64,
    pub amplitude: f64,
    pub shift: f64,
    pub periodized: bool,
    pub residual: f64,
    pub iterations: usize,
    pub options: FitOptions,
    pub table: Vec<DistanceRow>,
    #[serde(skip)]
    pub fit: &'a KernelFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceRow {
    pub sites: usize,
    pub distance: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    pub fitted: f64,
}

pub fn kernel_fit_report(fit: &KernelFit) -> KernelFitReport<'_> {
    let s = &fit.stats;
    let fitted = fit.predicted();
    KernelFitReport {
        sigma: fit.kernel.sigma,
        sigma_sites: fit.sigma_sites(),
        amplitude: fit.kernel.amplitude,
        shift: fit.kernel.shift,
        periodized: fit.kernel.periodized,
        residual: fit.residual,
        iterations: fit.iterations,
        options: fit.options,
        table: (0..s.len())
            .map(|b| DistanceRow {
                sites: s.sites[b],
                distance: s.distance[b],
                mean: s.mean[b],
                std: s.std[b],
                count: s.count[b],
                fitted: fitted[b],
            })
            .collect(),
        fit,
    }
}

/// JSON outputs of a run carry the config hash next to their payload.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_sha256: &'a str,
    #[serde(flatten)]
    payload: &'a T,
}

// ---------------------------------------------------------------- runner

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestStage {
    pub stage: StageName,
    pub files: Vec<ManifestFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub seed: u64,
    pub stages: Vec<ManifestStage>,
}

impl Manifest {
    pub fn files(&self) -> impl Iterator<Item = &ManifestFile> {
        self.stages.iter().flat_map(|s| s.files.iter())
    }
}

#[derive(Default)]
struct Artifacts {
    corpus: Option<PathBuf>,
    vocab: Option<Vocabulary>,
    table: Option<CooccurrenceTable>,
    matrix: Option<TargetMatrix>,
    embedding: Option<EmbeddingSet>,
    geometry: Option<ProjectedGeometry>,
    fit: Option<KernelFit>,
    prediction: Option<SpectralPrediction>,
}

struct Stager {
    staging: PathBuf,
    out_dir: PathBuf,
    pending: Vec<String>,
}

impl Stager {
    fn path(&mut self, name: &str) -> PathBuf {
        self.pending.push(name.to_string());
        self.staging.join(name)
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let p = self.path(name);
        io::write_file(&p, f)
    }

    fn json<T: Serialize>(&mut self, name: &str, hash: &str, payload: &T) -> Result<()> {
        let p = self.path(name);
        io::write_json(
            &Stamped {
                config_sha256: hash,
                payload,
            },
            &p,
        )
    }

    /// Move the stage's files into place and hash them.
    fn promote(&mut self) -> Result<Vec<ManifestFile>> {
        let mut files = Vec::new();
        for name in std::mem::take(&mut self.pending) {
            let from = self.staging.join(&name);
            let to = self.out_dir.join(&name);
            let bytes = fs::read(&from).map_err(|e| Error::io(&from, e))?;
            fs::rename(&from, &to).map_err(|e| Error::io(&to, e))?;
            files.push(ManifestFile {
                path: name,
                sha256: hex::encode(Sha256::digest(&bytes)),
                bytes: bytes.len() as u64,
            });
        }
        Ok(files)
    }

    /// Location of an already promoted file.
    fn promoted(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Run every configured stage. On failure the error names the stage and
/// carries the (path, sha256) list of files promoted before it; files of the
/// failing stage never reach `out_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    for p in cfg.declared_inputs() {
        if !p.is_file() {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
            ));
        }
    }
    let hash = cfg.hash();
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let staging = cfg.out_dir.join(".staging");
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    let mut stager = Stager {
        staging: staging.clone(),
        out_dir: cfg.out_dir.clone(),
        pending: Vec::new(),
    };
    let mut manifest = Manifest {
        config_sha256: hash.clone(),
        seed: cfg.seed,
        stages: Vec::new(),
    };
    let mut art = Artifacts::default();
    let mut result = Ok(());
    for &stage in &cfg.stages {
        let outcome = run_stage(cfg, stage, &hash, &mut art, &mut stager).and_then(|()| stager.promote());
        match outcome {
            Ok(files) => manifest.stages.push(ManifestStage { stage, files }),
            Err(e) => {
                result = Err(Error::Stage {
                    stage: stage.id().to_string(),
                    source: Box::new(e),
                    completed: manifest.files().map(|f| (f.path.clone(), f.sha256.clone())).collect(),
                });
                break;
            }
        }
    }
    let _ = fs::remove_dir_all(&staging);
    result?;
    io::write_json(&manifest, &cfg.out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn take<'a, T>(slot: &'a Option<T>, what: &str) -> Result<&'a T> {
    slot.as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("{what} is not available")))
}

fn run_stage(cfg: &RunConfig, stage: StageName, hash: &str, art: &mut Artifacts, st: &mut Stager) -> Result<()> {
    let note = format!("config_sha256={hash}");
    match stage {
        StageName::Synth => {
            let seed = cfg.synth.seed.unwrap_or(cfg.seed);
            let (text, report) = synth_corpus(&cfg.synth, seed)?;
            st.write("corpus.txt", |w| w.write_all(&text))?;
            st.json("synth.json", hash, &report)?;
            art.corpus = Some(st.promoted("corpus.txt"));
        }
        StageName::Count => {
            let corpus = match &cfg.count.corpus {
                Some(p) => p.clone(),
                None => take(&art.corpus, "corpus")?.clone(),
            };
            let (vocab, table) = count_corpus(&cfg.count, &corpus)?;
            st.write("vocab.tsv", |w| io::write_vocab_tsv(&vocab, w))?;
            if cfg.count.csv {
                st.write("cooc.csv", |w| io::write_cooc_csv(&table, w))?;
            } else {
                st.write("cooc.bin", |w| io::write_cooc_binary(&table, w))?;
            }
            art.vocab = Some(vocab);
            art.table = Some(table);
        }
        StageName::Build => {
            if let (Some(s), Some(v)) = (&cfg.build.stats, &cfg.build.vocab) {
                art.table = Some(io::load_cooc(s)?);
                art.vocab = Some(io::read_vocab_tsv(io::open(v)?)?);
            }
            let mut m = build_matrix(
                &cfg.build,
                take(&art.vocab, "vocabulary")?,
                take(&art.table, "co-occurrence table")?,
                &cfg.limits,
            )?;
            m.provenance.notes.push(note);
            st.write("matrix.rgmx", |w| io::write_matrix(&m, w))?;
            st.write("matrix.csv", |w| io::write_matrix_csv(&m, w))?;
            art.matrix = Some(m);
        }
        StageName::Embed => {
            if let Some(p) = &cfg.embed.matrix {
                art.matrix = Some(io::load_matrix(p)?);
            }
            let e = embed_matrix(&cfg.embed, take(&art.matrix, "matrix")?, &cfg.limits)?;
            st.write("embedding.rgem", |w| io::write_embedding(&e, w))?;
            st.write("embedding.csv", |w| io::write_embedding_csv(&e, w))?;
            art.embedding = Some(e);
        }
        StageName::Project => {
            let loaded;
            let e = match &cfg.project.embeddings {
                Some(p) => {
                    loaded = io::load_embedding(p)?;
                    &loaded
                }
                None => take(&art.embedding, "embedding")?,
            };
            let g = project_embeddings(&cfg.project, e)?;
            st.write("geometry.csv", |w| write_geometry_csv(&g, w))?;
            st.write("gram.csv", |w| write_gram_csv(&g.words, &g.gram(), w))?;
            st.json("geometry.json", hash, &g)?;
            art.geometry = Some(g);
        }
        StageName::FitKernel => {
            let loaded;
            let m = match &cfg.fit_kernel.matrix {
                Some(p) => {
                    loaded = io::load_matrix(p)?;
                    &loaded
                }
                None => take(&art.matrix, "matrix")?,
            };
            let fit = fit_kernel(&cfg.fit_kernel, m)?;
            st.json("kernel_fit.json", hash, &kernel_fit_report(&fit))?;
            art.fit = Some(fit);
        }
        StageName::Predict => {
            let p = predict_from(&cfg.predict, art.fit.as_ref())?;
            st.write("prediction.csv", |w| io::write_prediction_csv(&p, w))?;
            art.prediction = Some(p);
        }
        StageName::Compare => {
            let report = compare_geometry(
                take(&art.geometry, "projected geometry")?,
                take(&art.prediction, "prediction")?,
                &cfg.compare.lissajous,
            )?;
            st.json("comparison.json", hash, &report)?;
        }
        StageName::Decode => {
            let loaded;
            let e = match &cfg.decode.embeddings {
                Some(p) => {
                    loaded = io::load_embedding(p)?;
                    &loaded
                }
                None => take(&art.embedding, "embedding")?,
            };
            let coords = io::load_points(cfg.decode.coords.as_deref().expect("validated"))?;
            let dd = decode_experiment(&cfg.decode, e, &coords, cfg.decode.seed.unwrap_or(cfg.seed))?;
            st.write("double_descent.csv", |w| write_double_descent_csv(&dd, w))?;
        }
    }
    Ok(())
}

/// Stage outputs keyed by name, for callers that want to locate files without
/// hard-coding the layout.
pub fn outputs_of(stage: StageName) -> &'static [&'static str] {
    match stage {
        StageName::Synth => &["corpus.txt", "synth.json"],
        StageName::Count => &["vocab.tsv", "cooc.bin"],
        StageName::Build => &["matrix.rgmx", "matrix.csv"],
        StageName::Embed => &["embedding.rgem", "embedding.csv"],
        StageName::Project => &["geometry.csv", "gram.csv", "geometry.json"],
        StageName::FitKernel => &["kernel_fit.json"],
        StageName::Predict => &["prediction.csv"],
        StageName::Compare => &["comparison.json"],
        StageName::Decode => &["double_descent.csv"],
    }
}

/// Read a manifest written by [`run_pipeline`].
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse("manifest", e.to_string()))
}

/// Hash of every manifest file, for quick comparisons between runs.
pub fn manifest_digest(m: &Manifest) -> BTreeMap<String, String> {
    m.files().map(|f| (f.path.clone(), f.sha256.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Provenance;

    fn circulant_projection(l: usize, sigma: f64) -> (ProjectedGeometry, SpectralPrediction) {
        let lat = SemanticLattice::new(1, l, Boundary::Periodic).unwrap();
        let c = lat.kernel_matrix(|d| lattice::periodized_exp(d, sigma), 1.0);
        let words: Vec<String> = (0..l).map(|i| format!("s{i:02}")).collect();
        let m = TargetMatrix::anonymous(MatrixKind::Pmi, c, "circulant").unwrap();
        let m = TargetMatrix::new(m.kind, m.values, words, Provenance::default()).unwrap();
        let e = embed::factorize(&m, l, ModeOrder::Magnitude).unwrap();
        let g = embed::project_pca(&e, &[] as &[&str]).unwrap();
        let params = PredictParams {
            modes: l,
            ..Default::default()
        };
        let p = predict_spectrum(&params, sigma, 1.0, l, Boundary::Periodic).unwrap();
        (g, p)
    }

    #[test]
    fn circulant_comparison_is_exact() {
        let (g, p) = circulant_projection(12, 0.35);
        let r = compare_geometry(&g, &p, &[[1, 2], [1, 3]]).unwrap();
        assert_eq!(r.modes, 11);
        for grp in &r.groups {
            assert!(grp.max_angle < 1e-6, "{grp:?}");
        }
        for a in &r.amplitude_ratios {
            assert!((a - 1.0).abs() < 1e-8, "{a}");
        }
        assert!(r.gram_relative_frobenius < 1e-10);
        assert!(r.procrustes_residual < 1e-8);
        assert_eq!(r.lissajous.len(), 2);
        let c = &r.lissajous[0];
        for (e, q) in c.empirical.iter().zip(&c.predicted) {
            assert!((e[0] - q[0]).abs() < 1e-8 && (e[1] - q[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn rotation_inside_a_pair_is_invisible() {
        let (mut g, p) = circulant_projection(10, 0.4);
        let (c, s) = (0.7f64.cos(), 0.7f64.sin());
        for i in 0..g.wbar.nrows() {
            let (a, b) = (g.wbar[(i, 0)], g.wbar[(i, 1)]);
            g.wbar[(i, 0)] = c * a - s * b;
            g.wbar[(i, 1)] = s * a + c * b;
        }
        let r = compare_geometry(&g, &p, &[]).unwrap();
        assert!(r.groups[0].max_angle < 1e-8);
        assert!(r.top_pair_angle.unwrap() < 1e-8);
    }

    #[test]
    fn mismatched_sites_error() {
        let (g, _) = circulant_projection(10, 0.4);
        let (_, p) = circulant_projection(12, 0.4);
        assert!(matches!(compare_geometry(&g, &p, &[]), Err(Error::Dimension(_))));
    }

    #[test]
    fn overrides_and_validation() {
        let text = "stages = [\"predict\"]\n[predict]\nsigma = 0.3\nsites = 8\n";
        let cfg = RunConfig::from_toml(text, &["predict.modes=4".into(), "seed = 9".into()]).unwrap();
        assert_eq!(cfg.predict.modes, 4);
        assert_eq!(cfg.seed, 9);
        assert!(RunConfig::from_toml(text, &["predict.bogus=1".into()]).is_err());
        assert!(RunConfig::from_toml("stages = [\"count\"]", &[]).is_err());
        assert!(RunConfig::from_toml("stages = [\"embed\", \"count\"]\n[count]\ncorpus='x'\n", &[]).is_err());
        let e = RunConfig::from_toml("stages = [\"compare\"]", &[]).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        // string fallback for bare values
        let mut t = toml::Table::new();
        apply_override(&mut t, "count.corpus=data/x.txt").unwrap();
        assert_eq!(t["count"]["corpus"].as_str(), Some("data/x.txt"));
        assert_eq!(
            cfg.hash(),
            RunConfig::from_toml(text, &["predict.modes=4".into(), "seed=9".into()])
                .unwrap()
                .hash()
        );
    }

    #[test]
    fn ranks_parse() {
        assert_eq!(parse_ranks("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_ranks("2, 5,9").unwrap(), vec![2, 5, 9]);
        assert!(parse_ranks("0..3").is_err());
        assert!(parse_ranks("5..2").is_err());
        assert!(parse_ranks("x").is_err());
    }

    #[test]
    fn seasonal_layout() {
        let m = seasonal_model(&SynthParams::default()).unwrap();
        assert_eq!(m.len(), 112);
        assert_eq!(m.words[0], "january");
        assert_eq!(m.words[12], "h000");
        assert_eq!(m.base[0], 4.0);
        let eq = seasonal_model(&SynthParams {
            n: Some(720),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(eq.words[5], "w005");
    }

    #[test]
    fn predicted_spectrum_matches_raw_kernel() {
        // eigenvalues are those of amplitude·C(x_i − x_j), without the measure
        let l = 9;
        let p = predict_spectrum(
            &PredictParams {
                modes: l,
                ..Default::default()
            },
            0.5,
            2.0,
            l,
            Boundary::Periodic,
        )
        .unwrap();
        let lat = SemanticLattice::new(1, l, Boundary::Periodic).unwrap();
        let c = lat.kernel_matrix(|d| 2.0 * lattice::periodized_exp(d, 0.5), 1.0);
        let eig = linalg::sym_eigen(&c, ModeOrder::Magnitude).unwrap();
        for (m, v) in p.modes.iter().zip(eig.values.iter()) {
            assert!((m.eigenvalue - v).abs() < 1e-10 * v.abs().max(1.0));
        }
    }
}
