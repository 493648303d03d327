//! Labels TSV, embeddings (TSV or `AEMB` binary) and texts TSV.
//!
//! Labels: header `id<TAB>label1<TAB>...`, rows of `0`, `1` or `?` (unobserved).
//! Text embeddings: header `id<TAB>dim=<d>`, rows of `d` decimal floats.
//! Binary embeddings: `AEMB`, version `0x01`, u32le n, u32le d, then per row
//! u16le id length, id bytes, d float32le values.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, DatasetError, LabelSpace, MaskedInstance, Split};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"AEMB";
pub const EMBEDDING_VERSION: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Text,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub rows: Vec<(String, Vec<f64>)>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> DatasetError {
    DatasetError::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

fn read_lines(path: &Path) -> Result<Vec<String>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        lines.push(line.trim_end_matches('\r').to_string());
    }
    Ok(lines)
}

/// Reads only the header of a labels file and returns its label space.
pub fn read_label_space(path: impl AsRef<Path>) -> Result<LabelSpace, DatasetError> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    let header = lines.first().ok_or_else(|| parse_err(path, 1, "missing header"))?;
    let mut cols = header.split('\t');
    if cols.next() != Some("id") {
        return Err(parse_err(path, 1, "first header column must be 'id'"));
    }
    LabelSpace::new(cols.map(str::to_string))
}

struct LabelRow {
    id: String,
    y: Vec<bool>,
    m: Vec<bool>,
}

fn read_label_rows(path: &Path, space: &LabelSpace) -> Result<Vec<LabelRow>, DatasetError> {
    let lines = read_lines(path)?;
    let header = lines.first().ok_or_else(|| parse_err(path, 1, "missing header"))?;
    let mut cols = header.split('\t');
    if cols.next() != Some("id") {
        return Err(parse_err(path, 1, "first header column must be 'id'"));
    }
    let found: Vec<String> = cols.map(str::to_string).collect();
    if let Some(unknown) = found.iter().find(|c| space.index_of(c).is_none()) {
        return Err(DatasetError::UnknownLabel(unknown.clone()));
    }
    if found.as_slice() != space.names() {
        return Err(DatasetError::LabelColumnMismatch { found, expected: space.names().to_vec() });
    }
    let k = space.len();
    let mut rows = Vec::new();
    for (lineno, line) in lines.iter().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != k + 1 {
            return Err(parse_err(path, lineno + 1, format!("expected {} columns, found {}", k + 1, cells.len())));
        }
        let id = cells[0].to_string();
        let mut y = Vec::with_capacity(k);
        let mut m = Vec::with_capacity(k);
        for cell in &cells[1..] {
            let (yv, mv) = match *cell {
                "1" => (true, true),
                "0" => (false, true),
                "?" => (false, false),
                other => {
                    return Err(DatasetError::BadCell { id, cell: other.to_string() });
                }
            };
            y.push(yv);
            m.push(mv);
        }
        rows.push(LabelRow { id, y, m });
    }
    Ok(rows)
}

/// Reads an embeddings file, detecting the binary form by its magic bytes.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable, DatasetError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.starts_with(EMBEDDING_MAGIC) {
        read_binary_embeddings(path, &bytes)
    } else {
        read_text_embeddings(path, &bytes)
    }
}

fn read_text_embeddings(path: &Path, bytes: &[u8]) -> Result<EmbeddingTable, DatasetError> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err(path, 0, e.to_string()))?;
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
    let header = lines.next().ok_or_else(|| parse_err(path, 1, "missing header"))?;
    let dim = header
        .strip_prefix("id\tdim=")
        .and_then(|d| d.trim().parse::<usize>().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| parse_err(path, 1, "header must be 'id<TAB>dim=<d>'"))?;
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut cells = line.split('\t');
        let id = cells.next().unwrap_or_default().to_string();
        let values = cells
            .map(|c| match c.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(path, lineno + 2, format!("bad float '{c}'"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != dim {
            return Err(DatasetError::DimensionMismatch { id, expected: dim, got: values.len() });
        }
        rows.push((id, values));
    }
    Ok(EmbeddingTable { dim, rows })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatasetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            DatasetError::BadEmbeddings { path: self.path.display().to_string(), msg: "truncated".into() }
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, DatasetError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DatasetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn read_binary_embeddings(path: &Path, bytes: &[u8]) -> Result<EmbeddingTable, DatasetError> {
    let bad = |msg: String| DatasetError::BadEmbeddings { path: path.display().to_string(), msg };
    let mut cur = Cursor { bytes, pos: 4, path };
    let version = cur.take(1)?[0];
    if version != EMBEDDING_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = cur.u32()? as usize;
    let dim = cur.u32()? as usize;
    if dim == 0 {
        return Err(bad("dimension 0".into()));
    }
    let mut rows = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let len = cur.u16()? as usize;
        let id = std::str::from_utf8(cur.take(len)?).map_err(|e| bad(format!("id is not UTF-8: {e}")))?.to_string();
        let raw = cur.take(4 * dim)?;
        let values: Vec<f64> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad(format!("non-finite value for id {id}")));
        }
        rows.push((id, values));
    }
    if cur.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(EmbeddingTable { dim, rows })
}

/// Joins a labels file and an embeddings file on id.
///
/// Instance order follows the labels file. Every id must appear exactly once
/// in each file.
pub fn load_dataset(
    labels_path: impl AsRef<Path>,
    embeddings_path: impl AsRef<Path>,
    space: &LabelSpace,
) -> Result<Dataset, DatasetError> {
    let labels = read_label_rows(labels_path.as_ref(), space)?;
    let table = read_embeddings(embeddings_path)?;
    let mut by_id: HashMap<&str, &Vec<f64>> = HashMap::with_capacity(table.rows.len());
    for (id, h) in &table.rows {
        if by_id.insert(id.as_str(), h).is_some() {
            return Err(DatasetError::DuplicateId(id.clone()));
        }
    }
    let mut seen = HashSet::with_capacity(labels.len());
    let mut instances = Vec::with_capacity(labels.len());
    for row in labels {
        let h = by_id.get(row.id.as_str()).ok_or_else(|| DatasetError::MissingEmbedding(row.id.clone()))?;
        if !seen.insert(row.id.clone()) {
            return Err(DatasetError::DuplicateId(row.id));
        }
        instances.push(MaskedInstance {
            id: row.id,
            lang: String::new(),
            h: (*h).clone(),
            y: row.y,
            m: row.m,
            text: None,
        });
    }
    if let Some((id, _)) = table.rows.iter().find(|(id, _)| !seen.contains(id)) {
        return Err(DatasetError::MissingLabels(id.clone()));
    }
    Dataset::new(space.clone(), table.dim, instances, Split::Train)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, DatasetError> {
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

pub fn write_labels(path: impl AsRef<Path>, data: &Dataset) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("id");
    for name in data.space().names() {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for inst in data.instances() {
        out.push_str(&inst.id);
        for (&y, &m) in inst.y.iter().zip(&inst.m) {
            out.push('\t');
            out.push(match (m, y) {
                (false, _) => '?',
                (true, true) => '1',
                (true, false) => '0',
            });
        }
        out.push('\n');
    }
    let mut w = create(path)?;
    w.write_all(out.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Writes embeddings; the text form is exact for every f64, the binary form
/// stores float32.
pub fn write_embeddings<'a>(
    path: impl AsRef<Path>,
    dim: usize,
    rows: impl ExactSizeIterator<Item = (&'a str, &'a [f64])>,
    format: EmbeddingFormat,
) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut buf = Vec::new();
    match format {
        EmbeddingFormat::Text => {
            buf.extend_from_slice(format!("id\tdim={dim}\n").as_bytes());
            for (id, h) in rows {
                buf.extend_from_slice(id.as_bytes());
                for v in h {
                    buf.push(b'\t');
                    buf.extend_from_slice(format!("{v:?}").as_bytes());
                }
                buf.push(b'\n');
            }
        }
        EmbeddingFormat::Binary => {
            let n = u32::try_from(rows.len()).map_err(|_| DatasetError::InvalidArgument("too many rows".into()))?;
            let d = u32::try_from(dim).map_err(|_| DatasetError::InvalidArgument("dim too large".into()))?;
            buf.extend_from_slice(EMBEDDING_MAGIC);
            buf.push(EMBEDDING_VERSION);
            buf.extend_from_slice(&n.to_le_bytes());
            buf.extend_from_slice(&d.to_le_bytes());
            for (id, h) in rows {
                let len =
                    u16::try_from(id.len()).map_err(|_| DatasetError::InvalidArgument(format!("id too long: {id}")))?;
                buf.extend_from_slice(&len.to_le_bytes());
                buf.extend_from_slice(id.as_bytes());
                for &v in h {
                    buf.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
    }
    w.write_all(&buf).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Writes the labels file and the embeddings file of `data`.
pub fn save_dataset(
    data: &Dataset,
    labels_path: impl AsRef<Path>,
    embeddings_path: impl AsRef<Path>,
    format: EmbeddingFormat,
) -> Result<(), DatasetError> {
    write_labels(labels_path, data)?;
    let rows = data.instances().iter().map(|i| (i.id.as_str(), i.h.as_slice()));
    write_embeddings(embeddings_path, data.dim(), rows, format)
}

/// Reads `id<TAB>text` rows; a header line starting with `id<TAB>` is skipped.
pub fn read_texts(path: impl AsRef<Path>) -> Result<HashMap<String, String>, DatasetError> {
    let path = path.as_ref();
    let mut raw = String::new();
    fs::File::open(path).and_then(|mut f| f.read_to_string(&mut raw)).map_err(io_err(path))?;
    let mut out = HashMap::new();
    for (lineno, line) in raw.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || (lineno == 0 && line.starts_with("id\t")) {
            continue;
        }
        let (id, text) = line.split_once('\t').ok_or_else(|| parse_err(path, lineno + 1, "expected 'id<TAB>text'"))?;
        out.insert(id.to_string(), text.to_string());
    }
    Ok(out)
}

pub fn write_texts(path: impl AsRef<Path>, data: &Dataset) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut out = String::from("id\ttext\n");
    for inst in data.instances() {
        let text = inst.text.as_deref().unwrap_or("").replace(['\t', '\n', '\r'], " ");
        out.push_str(&format!("{}\t{}\n", inst.id, text));
    }
    let mut w = create(path)?;
    w.write_all(out.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}
