//! On-disk formats.
//!
//! Every reader treats its input as untrusted: lengths are checked before
//! anything is allocated and malformed input becomes [`Error::Parse`].
//!
//! | artifact | format |
//! |---|---|
//! | vocabulary | TSV `token<TAB>count`, id order |
//! | co-occurrence | CSV with a `#cooc` header, or binary `RGCO` |
//! | target matrix | binary `RGMX` (JSON header + f64 LE), CSV export |
//! | embeddings | binary `RGEM` (JSON header + f64 LE), CSV export |
//! | points | CSV `word,x1,..,xD` with a header row |
//! | word lists | one word per line, `#` comments |

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::{CooccurrenceTable, Vocabulary, Weighting};
use crate::embed::EmbeddingSet;
use crate::lattice::SpectralPrediction;
use crate::linalg::ModeOrder;
use crate::matrix::{MatrixKind, Provenance, TargetMatrix};
use crate::{Error, Result};

/// Largest JSON header accepted in binary files.
pub const MAX_HEADER_BYTES: u64 = 64 << 20;
/// Largest number of f64 values accepted in one binary payload.
pub const MAX_VALUES: u64 = 1 << 30;

const COOC_MAGIC: &[u8; 4] = b"RGCO";
const MATRIX_MAGIC: &[u8; 4] = b"RGMX";
const EMBED_MAGIC: &[u8; 4] = b"RGEM";
const FORMAT_VERSION: u32 = 1;

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn wio(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

/// Write through a closure and flush, attributing I/O errors to `path`.
pub fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).map_err(wio(path))?;
    w.flush().map_err(wio(path))
}

fn read_text<R: Read>(mut r: R, context: &str) -> Result<String> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::parse(context, e.to_string()))?;
    String::from_utf8(buf).map_err(|_| Error::parse(context, "input is not valid UTF-8"))
}

// ---------------------------------------------------------------- vocabulary

pub fn write_vocab_tsv<W: Write>(v: &Vocabulary, mut w: W) -> std::io::Result<()> {
    for (t, c) in v.tokens().iter().zip(v.counts()) {
        writeln!(w, "{t}\t{c}")?;
    }
    Ok(())
}

pub fn read_vocab_tsv<R: Read>(r: R) -> Result<Vocabulary> {
    let text = read_text(r, "vocabulary")?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (tok, count) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse("vocabulary", format!("line {}: expected token<TAB>count", n + 1)))?;
        let count: u64 = count
            .trim()
            .parse()
            .map_err(|_| Error::parse("vocabulary", format!("line {}: bad count {count:?}", n + 1)))?;
        pairs.push((tok.to_string(), count));
    }
    Vocabulary::from_ordered(pairs)
}

// ------------------------------------------------------------- co-occurrence

/// `#cooc V=<v> L=<window> weighting=<name> Z=<mass>` followed by `i,j,mass` rows (i ≤ j).
pub fn write_cooc_csv<W: Write>(t: &CooccurrenceTable, mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "#cooc V={} L={} weighting={} Z={:e}",
        t.vocab_size(),
        t.window(),
        t.weighting().id(),
        t.z()
    )?;
    for (i, j, m) in t.entries() {
        writeln!(w, "{i},{j},{m:e}")?;
    }
    Ok(())
}

pub fn read_cooc_csv<R: Read>(r: R) -> Result<CooccurrenceTable> {
    let text = read_text(r, "co-occurrence csv")?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("co-occurrence csv", "empty file"))?;
    let rest = header
        .strip_prefix("#cooc")
        .ok_or_else(|| Error::parse("co-occurrence csv", "missing '#cooc' header"))?;
    let (mut v, mut l, mut wt, mut z) = (None, None, None, None);
    for field in rest.split_whitespace() {
        let (k, val) = field
            .split_once('=')
            .ok_or_else(|| Error::parse("co-occurrence csv", format!("bad header field {field:?}")))?;
        let bad = || Error::parse("co-occurrence csv", format!("bad header value {field:?}"));
        match k {
            "V" => v = Some(val.parse::<usize>().map_err(|_| bad())?),
            "L" => l = Some(val.parse::<usize>().map_err(|_| bad())?),
            "weighting" => wt = Some(Weighting::from_id(val)?),
            "Z" => z = Some(val.parse::<f64>().map_err(|_| bad())?),
            _ => return Err(Error::parse("co-occurrence csv", format!("unknown header key {k:?}"))),
        }
    }
    let missing = |k: &str| Error::parse("co-occurrence csv", format!("header lacks {k}"));
    let (v, l, wt, z) = (
        v.ok_or_else(|| missing("V"))?,
        l.ok_or_else(|| missing("L"))?,
        wt.ok_or_else(|| missing("weighting"))?,
        z.ok_or_else(|| missing("Z"))?,
    );
    check_vocab_size(v)?;
    let mut entries = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let bad = || Error::parse("co-occurrence csv", format!("row {}: expected i,j,mass", n + 2));
        let i: u32 = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
        let j: u32 = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
        let m: f64 = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        entries.push((i, j, m));
    }
    let t = CooccurrenceTable::from_entries(v, l, wt, entries)?;
    check_z(&t, z)?;
    Ok(t)
}

fn check_vocab_size(v: usize) -> Result<()> {
    if v > u32::MAX as usize {
        return Err(Error::parse(
            "co-occurrence",
            format!("vocabulary size {v} exceeds u32 ids"),
        ));
    }
    Ok(())
}

fn check_z(t: &CooccurrenceTable, z: f64) -> Result<()> {
    if !((t.z() - z).abs() <= 1e-9 * z.abs().max(t.z()).max(f64::MIN_POSITIVE)) {
        return Err(Error::parse(
            "co-occurrence",
            format!("header Z = {z} but entries sum to {}", t.z()),
        ));
    }
    Ok(())
}

fn weighting_code(w: Weighting) -> u8 {
    match w {
        Weighting::Linear => 0,
        Weighting::Uniform => 1,
        Weighting::Harmonic => 2,
    }
}

fn weighting_from_code(c: u8) -> Result<Weighting> {
    match c {
        0 => Ok(Weighting::Linear),
        1 => Ok(Weighting::Uniform),
        2 => Ok(Weighting::Harmonic),
        _ => Err(Error::parse(
            "co-occurrence binary",
            format!("unknown weighting code {c}"),
        )),
    }
}

/// `RGCO`, version u32, V u64, L u64, weighting u8, Z f64, nnz u64, then nnz × (u32 i, u32 j, f64 mass); little endian.
pub fn write_cooc_binary<W: Write>(t: &CooccurrenceTable, mut w: W) -> std::io::Result<()> {
    let entries = t.entries();
    w.write_all(COOC_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(t.vocab_size() as u64).to_le_bytes())?;
    w.write_all(&(t.window() as u64).to_le_bytes())?;
    w.write_all(&[weighting_code(t.weighting())])?;
    w.write_all(&t.z().to_le_bytes())?;
    w.write_all(&(entries.len() as u64).to_le_bytes())?;
    for (i, j, m) in entries {
        w.write_all(&i.to_le_bytes())?;
        w.write_all(&j.to_le_bytes())?;
        w.write_all(&m.to_le_bytes())?;
    }
    Ok(())
}

/// Cursor over an in-memory byte buffer with bounds-checked reads.
struct Bytes<'a> {
    buf: &'a [u8],
    pos: usize,
    context: &'static str,
}

impl<'a> Bytes<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::parse(
                self.context,
                format!("truncated input: need {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn magic(&mut self, m: &[u8; 4]) -> Result<()> {
        if self.take(4)? != m {
            return Err(Error::parse(self.context, "bad magic bytes"));
        }
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(Error::parse(self.context, format!("unsupported format version {v}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::parse(
                self.context,
                format!("{} trailing bytes", self.remaining()),
            ));
        }
        Ok(())
    }
}

fn read_all<R: Read>(mut r: R, context: &'static str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::parse(context, e.to_string()))?;
    Ok(buf)
}

pub fn read_cooc_binary<R: Read>(r: R) -> Result<CooccurrenceTable> {
    let buf = read_all(r, "co-occurrence binary")?;
    parse_cooc_binary(&buf)
}

pub fn parse_cooc_binary(buf: &[u8]) -> Result<CooccurrenceTable> {
    let mut b = Bytes {
        buf,
        pos: 0,
        context: "co-occurrence binary",
    };
    b.magic(COOC_MAGIC)?;
    let v = b.u64()?;
    let l = b.u64()?;
    let wt = weighting_from_code(b.u8()?)?;
    let z = b.f64()?;
    let nnz = b.u64()?;
    let v = usize::try_from(v).map_err(|_| Error::parse("co-occurrence binary", "V too large"))?;
    check_vocab_size(v)?;
    let l = usize::try_from(l).map_err(|_| Error::parse("co-occurrence binary", "L too large"))?;
    if nnz.checked_mul(16) != Some(b.remaining() as u64) {
        return Err(Error::parse(
            "co-occurrence binary",
            format!("{nnz} entries declared but {} payload bytes", b.remaining()),
        ));
    }
    let mut entries = Vec::with_capacity(nnz as usize);
    for _ in 0..nnz {
        entries.push((b.u32()?, b.u32()?, b.f64()?));
    }
    b.finish()?;
    let t = CooccurrenceTable::from_entries(v, l, wt, entries)?;
    check_z(&t, z)?;
    Ok(t)
}

/// Pick the reader by extension: `.csv` is text, anything else binary.
pub fn load_cooc(path: &Path) -> Result<CooccurrenceTable> {
    let r = open(path)?;
    if path.extension().is_some_and(|e| e == "csv") {
        read_cooc_csv(r)
    } else {
        read_cooc_binary(r)
    }
}

pub fn save_cooc(t: &CooccurrenceTable, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "csv") {
        write_file(path, |w| write_cooc_csv(t, w))
    } else {
        write_file(path, |w| write_cooc_binary(t, w))
    }
}

// ------------------------------------------------------------------- matrix

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixHeader {
    kind: MatrixKind,
    words: Vec<String>,
    provenance: Provenance,
}

fn write_header<W: Write, H: Serialize>(w: &mut W, magic: &[u8; 4], h: &H) -> std::io::Result<()> {
    let json = serde_json::to_vec(h).map_err(std::io::Error::other)?;
    w.write_all(magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)
}

fn read_header<'a, H: Deserialize<'a>>(b: &mut Bytes<'a>, magic: &[u8; 4]) -> Result<H> {
    b.magic(magic)?;
    let len = b.u64()?;
    if len > MAX_HEADER_BYTES || len > b.remaining() as u64 {
        return Err(Error::parse(b.context, format!("header length {len} is out of range")));
    }
    let json = b.take(len as usize)?;
    serde_json::from_slice(json).map_err(|e| Error::parse(b.context, format!("header: {e}")))
}

fn read_values(b: &mut Bytes, count: u64) -> Result<Vec<f64>> {
    if count > MAX_VALUES || count.checked_mul(8) != Some(b.remaining() as u64) {
        return Err(Error::parse(
            b.context,
            format!("{count} values declared but {} payload bytes", b.remaining()),
        ));
    }
    (0..count).map(|_| b.f64()).collect()
}

/// `RGMX`, version, u64 header length, JSON header, then row-major f64 values.
pub fn write_matrix<W: Write>(m: &TargetMatrix, mut w: W) -> std::io::Result<()> {
    let h = MatrixHeader {
        kind: m.kind,
        words: m.words.clone(),
        provenance: m.provenance.clone(),
    };
    write_header(&mut w, MATRIX_MAGIC, &h)?;
    for i in 0..m.len() {
        for j in 0..m.len() {
            w.write_all(&m.values[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn parse_matrix(buf: &[u8]) -> Result<TargetMatrix> {
    let mut b = Bytes {
        buf,
        pos: 0,
        context: "matrix file",
    };
    let h: MatrixHeader = read_header(&mut b, MATRIX_MAGIC)?;
    let n = h.words.len() as u64;
    let values = read_values(&mut b, n.saturating_mul(n))?;
    b.finish()?;
    let n = n as usize;
    let values = DMatrix::from_row_slice(n, n, &values);
    TargetMatrix::new(h.kind, values, h.words, h.provenance).map_err(|e| Error::parse("matrix file", e.to_string()))
}

pub fn read_matrix<R: Read>(r: R) -> Result<TargetMatrix> {
    parse_matrix(&read_all(r, "matrix file")?)
}

pub fn load_matrix(path: &Path) -> Result<TargetMatrix> {
    read_matrix(open(path)?)
}

pub fn save_matrix(m: &TargetMatrix, path: &Path) -> Result<()> {
    write_file(path, |w| write_matrix(m, w))
}

/// Labelled CSV: header `word,<w1>,..,<wn>`, one row per word.
pub fn write_labeled_csv<W: Write>(
    words: &[String],
    values: &DMatrix<f64>,
    columns: &[String],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "word,{}", columns.join(","))?;
    for (i, word) in words.iter().enumerate() {
        write!(w, "{word}")?;
        for j in 0..values.ncols() {
            write!(w, ",{}", values[(i, j)])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_matrix_csv<W: Write>(m: &TargetMatrix, w: W) -> std::io::Result<()> {
    write_labeled_csv(&m.words, &m.values, &m.words, w)
}

// --------------------------------------------------------------- embeddings

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingHeader {
    words: Vec<String>,
    d: usize,
    /// `null` where the embedding carries no spectral data.
    eigvals: Vec<Option<f64>>,
    order: ModeOrder,
    boundary_tie: bool,
}

/// `RGEM`, version, u64 header length, JSON header, then the |S|×d rows followed
/// by the |S|×d eigenvector block (both row-major f64).
pub fn write_embedding<W: Write>(e: &EmbeddingSet, mut w: W) -> std::io::Result<()> {
    let h = EmbeddingHeader {
        words: e.words.clone(),
        d: e.dim(),
        eigvals: e.eigvals.iter().map(|v| v.is_finite().then_some(*v)).collect(),
        order: e.order,
        boundary_tie: e.boundary_tie,
    };
    write_header(&mut w, EMBED_MAGIC, &h)?;
    for m in [&e.w, &e.modes] {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                w.write_all(&m[(i, j)].to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn parse_embedding(buf: &[u8]) -> Result<EmbeddingSet> {
    let mut b = Bytes {
        buf,
        pos: 0,
        context: "embedding file",
    };
    let h: EmbeddingHeader = read_header(&mut b, EMBED_MAGIC)?;
    if h.eigvals.len() != h.d {
        return Err(Error::parse(
            "embedding file",
            format!("{} eigenvalues for d = {}", h.eigvals.len(), h.d),
        ));
    }
    let n = h.words.len() as u64;
    let count = n
        .checked_mul(h.d as u64)
        .and_then(|c| c.checked_mul(2))
        .unwrap_or(u64::MAX);
    let values = read_values(&mut b, count)?;
    b.finish()?;
    let (n, d) = (n as usize, h.d);
    let w = DMatrix::from_row_slice(n, d, &values[..n * d]);
    let modes = DMatrix::from_row_slice(n, d, &values[n * d..]);
    let mut e = EmbeddingSet::from_rows(h.words, w).map_err(|e| Error::parse("embedding file", e.to_string()))?;
    if modes.iter().any(|v| !v.is_finite()) {
        return Err(Error::parse("embedding file", "non-finite mode value"));
    }
    e.modes = modes;
    e.eigvals = h.eigvals.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    e.order = h.order;
    e.boundary_tie = h.boundary_tie;
    Ok(e)
}

pub fn read_embedding<R: Read>(r: R) -> Result<EmbeddingSet> {
    parse_embedding(&read_all(r, "embedding file")?)
}

pub fn load_embedding(path: &Path) -> Result<EmbeddingSet> {
    read_embedding(open(path)?)
}

pub fn save_embedding(e: &EmbeddingSet, path: &Path) -> Result<()> {
    write_file(path, |w| write_embedding(e, w))
}

pub fn write_embedding_csv<W: Write>(e: &EmbeddingSet, w: W) -> std::io::Result<()> {
    let cols: Vec<String> = (1..=e.dim()).map(|j| format!("dim{j}")).collect();
    write_labeled_csv(&e.words, &e.w, &cols, w)
}

// ------------------------------------------------------------ points, words

/// Labelled point coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    pub words: Vec<String>,
    pub columns: Vec<String>,
    pub coords: DMatrix<f64>,
}

/// CSV with a header row `word,<c1>,..,<cD>`; blank lines and `#` comments are skipped.
pub fn read_points_csv<R: Read>(r: R) -> Result<Points> {
    let text = read_text(r, "points csv")?;
    let mut rows = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = rows.next().ok_or_else(|| Error::parse("points csv", "empty file"))?;
    let columns: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
    if columns.is_empty() {
        return Err(Error::parse(
            "points csv",
            "header needs at least one coordinate column",
        ));
    }
    let mut words = Vec::new();
    let mut values = Vec::new();
    for (n, line) in rows.enumerate() {
        let mut parts = line.split(',');
        let word = parts.next().unwrap_or("").trim();
        if word.is_empty() {
            return Err(Error::parse("points csv", format!("row {}: empty word", n + 1)));
        }
        let coords: Vec<f64> = parts
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse("points csv", format!("row {}: bad number", n + 1)))?;
        if coords.len() != columns.len() {
            return Err(Error::parse(
                "points csv",
                format!("row {}: {} values for {} columns", n + 1, coords.len(), columns.len()),
            ));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse("points csv", format!("row {}: non-finite value", n + 1)));
        }
        if words.iter().any(|w| w == word) {
            return Err(Error::parse("points csv", format!("duplicate word {word:?}")));
        }
        words.push(word.to_string());
        values.extend(coords);
    }
    if words.is_empty() {
        return Err(Error::parse("points csv", "no rows"));
    }
    let coords = DMatrix::from_row_slice(words.len(), columns.len(), &values);
    Ok(Points { words, columns, coords })
}

pub fn load_points(path: &Path) -> Result<Points> {
    read_points_csv(open(path)?)
}

pub fn read_word_list<R: BufRead>(r: R) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::parse("word list", e.to_string()))?;
        let w = line.trim();
        if w.is_empty() || w.starts_with('#') {
            continue;
        }
        if w.chars().any(char::is_whitespace) {
            return Err(Error::parse("word list", format!("{w:?} contains whitespace")));
        }
        if out.iter().any(|x| x == w) {
            return Err(Error::parse("word list", format!("duplicate word {w:?}")));
        }
        out.push(w.to_string());
    }
    if out.is_empty() {
        return Err(Error::parse("word list", "no words"));
    }
    Ok(out)
}

pub fn load_word_list(path: &Path) -> Result<Vec<String>> {
    read_word_list(open(path)?)
}

/// Corpus lines of space-separated tokens, one document per line.
pub fn write_documents<W: Write>(docs: &[Vec<u32>], words: &[String], mut w: W) -> std::io::Result<()> {
    for d in docs {
        let mut first = true;
        for &t in d {
            if !first {
                w.write_all(b" ")?;
            }
            w.write_all(words[t as usize].as_bytes())?;
            first = false;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Columns `mu,kind,k1..kD,lambda,amplitude,normalization,x0..x{n-1}`.
pub fn write_prediction_csv<W: Write>(p: &SpectralPrediction, mut w: W) -> std::io::Result<()> {
    let dim = p.modes.first().map_or(1, |m| m.k.len());
    let mut header = vec!["mu".to_string(), "kind".to_string()];
    header.extend((1..=dim).map(|a| format!("k{a}")));
    header.extend(["lambda", "amplitude", "normalization"].map(String::from));
    header.extend((0..p.sites).map(|i| format!("x{i}")));
    writeln!(w, "{}", header.join(","))?;
    for m in &p.modes {
        write!(w, "{},{}", m.mu, m.kind.id())?;
        for k in &m.k {
            write!(w, ",{k}")?;
        }
        write!(w, ",{},{},{}", m.eigenvalue, m.amplitude, m.normalization)?;
        for s in &m.samples {
            write!(w, ",{s}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        w.write_all(b"\n")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::count_cooccurrences;
    use crate::embed::factorize;
    use crate::lattice::{periodized_exp_spectrum, Boundary, SemanticLattice};
    use proptest::prelude::*;

    fn table() -> CooccurrenceTable {
        let docs = vec![vec![0, 1, 2, 1, 0, 3], vec![2, 2, 1]];
        count_cooccurrences(&docs, 4, 3, Weighting::Harmonic).unwrap()
    }

    fn matrix() -> TargetMatrix {
        let v = DMatrix::from_row_slice(3, 3, &[1.0, -0.5, 0.25, -0.5, 2.0, 0.0, 0.25, 0.0, -1.5]);
        TargetMatrix::new(
            MatrixKind::Mstar,
            v,
            vec!["a".into(), "b".into(), "c".into()],
            Provenance {
                source: "abc".into(),
                ablated: vec!["b".into()],
                notes: vec![],
            },
        )
        .unwrap()
    }

    #[test]
    fn vocab_roundtrip() {
        let v = Vocabulary::from_counts([("b".to_string(), 3), ("a".to_string(), 3), ("z".to_string(), 9)]).unwrap();
        let mut buf = Vec::new();
        write_vocab_tsv(&v, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "z\t9\na\t3\nb\t3\n");
        assert_eq!(read_vocab_tsv(&buf[..]).unwrap(), v);
        assert!(read_vocab_tsv(&b"a\t1\nb\t2\n"[..]).is_err());
        assert!(read_vocab_tsv(&b"a 1\n"[..]).is_err());
    }

    #[test]
    fn cooc_roundtrips() {
        let t = table();
        let mut csv = Vec::new();
        write_cooc_csv(&t, &mut csv).unwrap();
        let back = read_cooc_csv(&csv[..]).unwrap();
        assert_eq!(back.entries(), t.entries());
        let mut bin = Vec::new();
        write_cooc_binary(&t, &mut bin).unwrap();
        assert_eq!(read_cooc_binary(&bin[..]).unwrap(), t);
        // truncation and tampering are parse errors
        assert!(parse_cooc_binary(&bin[..bin.len() - 1]).is_err());
        let mut bad = bin.clone();
        bad[0] = b'X';
        assert!(parse_cooc_binary(&bad).is_err());
        let text = String::from_utf8(csv).unwrap().replace("Z=", "Z=1");
        assert!(read_cooc_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn matrix_roundtrip() {
        let m = matrix();
        let mut buf = Vec::new();
        write_matrix(&m, &mut buf).unwrap();
        assert_eq!(read_matrix(&buf[..]).unwrap(), m);
        assert!(parse_matrix(&buf[..buf.len() - 8]).is_err());
        let mut csv = Vec::new();
        write_matrix_csv(&m, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("word,a,b,c\na,1,-0.5,0.25\n"));
    }

    #[test]
    fn embedding_roundtrip() {
        let e = factorize(&matrix(), 2, ModeOrder::Magnitude).unwrap();
        let mut buf = Vec::new();
        write_embedding(&e, &mut buf).unwrap();
        assert_eq!(read_embedding(&buf[..]).unwrap(), e);
        let raw = EmbeddingSet::from_rows(vec!["x".into()], DMatrix::from_row_slice(1, 2, &[1.0, 2.0])).unwrap();
        let mut buf = Vec::new();
        write_embedding(&raw, &mut buf).unwrap();
        let back = read_embedding(&buf[..]).unwrap();
        assert!(back.eigvals.iter().all(|v| v.is_nan()));
        assert_eq!(back.w, raw.w);
    }

    #[test]
    fn points_and_words() {
        let p = read_points_csv(&b"word,lat,lon\n# comment\nca,37.2,-119.5\nny,42.9,-75.5\n"[..]).unwrap();
        assert_eq!(p.words, vec!["ca", "ny"]);
        assert_eq!(p.columns, vec!["lat", "lon"]);
        assert_eq!(p.coords[(1, 1)], -75.5);
        assert!(read_points_csv(&b"word,x\na,1,2\n"[..]).is_err());
        assert!(read_points_csv(&b"word,x\na,1\na,2\n"[..]).is_err());
        assert!(read_points_csv(&b"word,x\na,nan\n"[..]).is_err());
        let w = read_word_list(&b"# months\njanuary\n\nfebruary\n"[..]).unwrap();
        assert_eq!(w, vec!["january", "february"]);
        assert!(read_word_list(&b"a\na\n"[..]).is_err());
        assert!(read_word_list(&b"\n"[..]).is_err());
    }

    #[test]
    fn prediction_csv_shape() {
        let lat = SemanticLattice::new(1, 4, Boundary::Periodic).unwrap();
        let p = periodized_exp_spectrum(&lat, 0.3).unwrap();
        let mut buf = Vec::new();
        write_prediction_csv(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "mu,kind,k1,lambda,amplitude,normalization,x0,x1,x2,x3");
        assert!(lines.iter().all(|l| l.split(',').count() == 10));
    }

    #[test]
    fn documents_render() {
        let mut buf = Vec::new();
        write_documents(&[vec![0, 1], vec![1]], &["a".into(), "b".into()], &mut buf).unwrap();
        assert_eq!(buf, b"a b\nb\n");
    }

    proptest! {
        #[test]
        fn binary_readers_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = parse_cooc_binary(&bytes);
            let _ = parse_matrix(&bytes);
            let _ = parse_embedding(&bytes);
        }

        #[test]
        fn text_readers_never_panic(s in "\\PC{0,200}") {
            let _ = read_vocab_tsv(s.as_bytes());
            let _ = read_cooc_csv(s.as_bytes());
            let _ = read_points_csv(s.as_bytes());
            let _ = read_word_list(s.as_bytes());
        }

        #[test]
        fn matrix_header_fuzz(prefix in proptest::collection::vec(any::<u8>(), 0..64)) {
            let mut buf = Vec::new();
            write_matrix(&matrix(), &mut buf).unwrap();
            let n = prefix.len().min(buf.len());
            buf[..n].copy_from_slice(&prefix[..n]);
            let _ = parse_matrix(&buf);
        }
    }
}
