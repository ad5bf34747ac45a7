//! On-disk formats.
//!
//! * Dense matrix: a header line `BOLD v1 <rows> <cols> <tr>`, an optional
//!   `IDS,<id>,<id>,...` line naming the columns, then either one CSV line
//!   per row (text) or `rows × cols` little-endian `f64` values in row-major
//!   order (binary, extension `.bmat`). Text values are written in Rust's
//!   shortest round-trip notation, so text files also reproduce values
//!   exactly.
//! * Mesh: `MESH v1 <V> <F>`, then `V` coordinate rows and `F` face rows.
//!   Optional trailing sections `EDGES <E>` (followed by `E` index pairs)
//!   and `MASK` (followed by `V` values of 0 or 1; 1 excludes the vertex).
//! * Events: rows `condition,onset,duration[,amplitude]`, comma or tab
//!   separated, with an optional header row.
//!
//! Blank lines and lines starting with `#` are ignored in text formats.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use prewhiten_core::regularize::SmoothingOperator;
use prewhiten_core::{BoldMatrix, EventRow, EventSchedule, Matrix, SurfaceMesh};
use serde::Serialize;

use crate::error::{Error, Result};

const DENSE_MAGIC: &str = "BOLD";
const MESH_MAGIC: &str = "MESH";
const VERSION: &str = "v1";

/// Storage flavour of a dense matrix file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenseFormat {
    #[default]
    Text,
    Binary,
}

impl DenseFormat {
    /// Binary for `.bmat`, text otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bmat") => DenseFormat::Binary,
            _ => DenseFormat::Text,
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            DenseFormat::Text => "txt",
            DenseFormat::Binary => "bmat",
        }
    }
}

/// Contents of a dense matrix file.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseFile {
    pub matrix: Matrix,
    pub tr: f64,
    pub ids: Option<Vec<String>>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), line, message: message.into() }
}

/// Formats a float so that parsing it back gives the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn parse_header(path: &Path, line: &str) -> Result<(usize, usize, f64)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != DENSE_MAGIC || fields[1] != VERSION {
        return Err(format_err(path, 1, format!("expected `{DENSE_MAGIC} {VERSION} <T> <V> <tr>`, found {line:?}")));
    }
    let rows = fields[2].parse().map_err(|_| format_err(path, 1, format!("bad row count {:?}", fields[2])))?;
    let cols = fields[3].parse().map_err(|_| format_err(path, 1, format!("bad column count {:?}", fields[3])))?;
    let tr = fields[4].parse().map_err(|_| format_err(path, 1, format!("bad sampling interval {:?}", fields[4])))?;
    Ok((rows, cols, tr))
}

fn parse_ids(line: &str) -> Option<Vec<String>> {
    line.strip_prefix("IDS,").map(|rest| rest.split(',').map(|s| s.trim().to_string()).collect())
}

/// Splits `bytes` at the first newline.
fn split_line(bytes: &[u8]) -> (&[u8], &[u8]) {
    match bytes.iter().position(|&b| b == b'\n') {
        Some(i) => (&bytes[..i], &bytes[i + 1..]),
        None => (bytes, &[]),
    }
}

/// Reads a dense matrix file, text or binary by extension.
pub fn read_dense(path: &Path) -> Result<DenseFile> {
    let bytes = read_bytes(path)?;
    match DenseFormat::from_path(path) {
        DenseFormat::Binary => read_dense_binary(path, &bytes),
        DenseFormat::Text => {
            let text = std::str::from_utf8(&bytes).map_err(|_| format_err(path, 1, "file is not UTF-8 text"))?;
            read_dense_text(path, text)
        }
    }
}

fn read_dense_binary(path: &Path, bytes: &[u8]) -> Result<DenseFile> {
    let (head, mut rest) = split_line(bytes);
    let head = std::str::from_utf8(head).map_err(|_| format_err(path, 1, "header is not text"))?;
    let (rows, cols, tr) = parse_header(path, head.trim_end())?;
    let need = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| format_err(path, 1, "matrix dimensions overflow"))?;
    let mut ids = None;
    if rest.len() != need {
        let (line, payload) = split_line(rest);
        let parsed = std::str::from_utf8(line).ok().and_then(parse_ids);
        match parsed {
            Some(v) if payload.len() == need => {
                ids = Some(v);
                rest = payload;
            }
            _ => {
                return Err(format_err(
                    path,
                    2,
                    format!("payload holds {} bytes, header promises {rows}×{cols} values ({need} bytes)", rest.len()),
                ))
            }
        }
    }
    let values: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8")))
        .collect();
    Ok(DenseFile { matrix: Matrix::from_row_major(rows, cols, &values), tr, ids })
}

fn read_dense_text(path: &Path, text: &str) -> Result<DenseFile> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (_, head) = lines.next().ok_or_else(|| format_err(path, 1, "empty file"))?;
    let (rows, cols, tr) = parse_header(path, head)?;
    let mut ids = None;
    let mut values = Vec::with_capacity(rows * cols);
    let mut row = 0;
    for (lineno, line) in lines {
        if row == 0 && ids.is_none() {
            if let Some(v) = parse_ids(line) {
                ids = Some(v);
                continue;
            }
        }
        if row == rows {
            return Err(format_err(path, lineno, format!("more than the {rows} rows promised by the header")));
        }
        let before = values.len();
        for (col, field) in line.split(',').enumerate() {
            let field = field.trim();
            let x: f64 = field.parse().map_err(|_| {
                format_err(path, lineno, format!("row {row}, column {col}: cannot parse {field:?} as a number"))
            })?;
            values.push(x);
        }
        let got = values.len() - before;
        if got != cols {
            return Err(format_err(path, lineno, format!("row {row} has {got} values, header promises {cols}")));
        }
        row += 1;
    }
    if row != rows {
        return Err(format_err(path, 0, format!("found {row} rows, header promises {rows}")));
    }
    Ok(DenseFile { matrix: Matrix::from_row_major(rows, cols, &values), tr, ids })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a dense matrix; the format follows the extension.
pub fn write_dense(path: &Path, m: &Matrix, tr: f64, ids: Option<&[String]>) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{DENSE_MAGIC} {VERSION} {} {} {}", m.rows(), m.cols(), fmt_f64(tr)).map_err(io)?;
    if let Some(ids) = ids {
        writeln!(w, "IDS,{}", ids.join(",")).map_err(io)?;
    }
    let values = m.to_row_major();
    match DenseFormat::from_path(path) {
        DenseFormat::Binary => {
            for x in values {
                w.write_all(&x.to_le_bytes()).map_err(io)?;
            }
        }
        DenseFormat::Text => {
            for row in values.chunks(m.cols().max(1)) {
                let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
                writeln!(w, "{}", line.join(",")).map_err(io)?;
            }
        }
    }
    finish(path, w)
}

/// Loads a BOLD matrix. `tr` overrides the header's sampling interval.
pub fn load_bold(path: &Path, tr: Option<f64>) -> Result<BoldMatrix> {
    let f = read_dense(path)?;
    BoldMatrix::new(f.matrix, tr.unwrap_or(f.tr), f.ids)
        .map_err(|source| Error::Invalid { path: path.to_path_buf(), source })
}

pub fn save_bold(path: &Path, bold: &BoldMatrix) -> Result<()> {
    write_dense(path, bold.data(), bold.tr(), Some(bold.vertex_ids()))
}

/// Loads a nuisance matrix (time by regressor) in the dense format.
pub fn load_nuisance(path: &Path) -> Result<Matrix> {
    let f = read_dense(path)?;
    if let Some((row, col)) = (0..f.matrix.rows())
        .flat_map(|r| (0..f.matrix.cols()).map(move |c| (r, c)))
        .find(|&(r, c)| !f.matrix[(r, c)].is_finite())
    {
        return Err(Error::Invalid {
            path: path.to_path_buf(),
            source: prewhiten_core::DataError::NonFinite { row, col },
        });
    }
    Ok(f.matrix)
}

fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty())
}

fn parse_fields<T: std::str::FromStr, const N: usize>(path: &Path, lineno: usize, line: &str, what: &str) -> Result<[T; N]> {
    let parts: Vec<&str> = fields(line).collect();
    if parts.len() != N {
        return Err(format_err(path, lineno, format!("{what} needs {N} values, found {}", parts.len())));
    }
    let mut out = Vec::with_capacity(N);
    for p in parts {
        out.push(p.parse().map_err(|_| format_err(path, lineno, format!("{what}: cannot parse {p:?}")))?);
    }
    Ok(out.try_into().ok().expect("length checked"))
}

/// Loads a mesh file. Isolated vertices are allowed; see
/// [`SurfaceMesh::isolated_vertices`].
pub fn load_mesh(path: &Path) -> Result<SurfaceMesh> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| format_err(path, 1, "file is not UTF-8 text"))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (_, head) = lines.next().ok_or_else(|| format_err(path, 1, "empty file"))?;
    let h: Vec<&str> = head.split_whitespace().collect();
    if h.len() != 4 || h[0] != MESH_MAGIC || h[1] != VERSION {
        return Err(format_err(path, 1, format!("expected `{MESH_MAGIC} {VERSION} <V> <F>`, found {head:?}")));
    }
    let nv: usize = h[2].parse().map_err(|_| format_err(path, 1, "bad vertex count"))?;
    let nf: usize = h[3].parse().map_err(|_| format_err(path, 1, "bad face count"))?;
    let mut next = |what: &str| lines.next().ok_or_else(|| format_err(path, 0, format!("file ends before {what}")));

    let mut coords = Vec::with_capacity(nv);
    for i in 0..nv {
        let (n, l) = next(&format!("vertex {i}"))?;
        coords.push(parse_fields::<f64, 3>(path, n, l, "vertex")?);
    }
    let mut faces = Vec::with_capacity(nf);
    for i in 0..nf {
        let (n, l) = next(&format!("face {i}"))?;
        faces.push(parse_fields::<usize, 3>(path, n, l, "face")?);
    }
    let mut segments = Vec::new();
    let mut mask = None;
    while let Ok((n, l)) = next("section") {
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some("EDGES") if segments.is_empty() => {
                let ne: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| format_err(path, n, "expected `EDGES <count>`"))?;
                for i in 0..ne {
                    let (n, l) = next(&format!("edge {i}"))?;
                    segments.push(parse_fields::<usize, 2>(path, n, l, "edge")?);
                }
            }
            Some("MASK") if mask.is_none() => {
                let mut m = Vec::with_capacity(nv);
                while m.len() < nv {
                    let (n, l) = next("mask values")?;
                    for f in fields(l) {
                        m.push(match f {
                            "0" => false,
                            "1" => true,
                            _ => return Err(format_err(path, n, format!("mask value {f:?} is not 0 or 1"))),
                        });
                    }
                }
                if m.len() != nv {
                    return Err(format_err(path, n, format!("mask has {} values, mesh has {nv} vertices", m.len())));
                }
                mask = Some(m);
            }
            _ => return Err(format_err(path, n, format!("unexpected line {l:?}"))),
        }
    }
    SurfaceMesh::new(coords, faces, segments, mask).map_err(|source| Error::Invalid { path: path.to_path_buf(), source })
}

pub fn save_mesh(path: &Path, mesh: &SurfaceMesh) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{MESH_MAGIC} {VERSION} {} {}", mesh.n_vertices(), mesh.n_faces()).map_err(io)?;
    for c in mesh.coords() {
        writeln!(w, "{} {} {}", fmt_f64(c[0]), fmt_f64(c[1]), fmt_f64(c[2])).map_err(io)?;
    }
    for f in mesh.faces() {
        writeln!(w, "{} {} {}", f[0], f[1], f[2]).map_err(io)?;
    }
    if !mesh.segments().is_empty() {
        writeln!(w, "EDGES {}", mesh.segments().len()).map_err(io)?;
        for s in mesh.segments() {
            writeln!(w, "{} {}", s[0], s[1]).map_err(io)?;
        }
    }
    if let Some(mask) = mesh.boundary_mask() {
        writeln!(w, "MASK").map_err(io)?;
        for &m in mask {
            writeln!(w, "{}", u8::from(m)).map_err(io)?;
        }
    }
    finish(path, w)
}

/// Loads an event schedule. Missing amplitudes default to 1.
pub fn load_events(path: &Path) -> Result<EventSchedule> {
    let bytes = read_bytes(path)?;
    let delimiter = if bytes.contains(&b'\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .delimiter(delimiter)
        .from_reader(bytes.as_slice());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| format_err(path, line, e.to_string()))?;
        let record: Vec<&str> = record.iter().collect();
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rows.is_empty() && record.first().is_some_and(|f| f.eq_ignore_ascii_case("condition")) {
            continue;
        }
        if !(3..=4).contains(&record.len()) {
            return Err(format_err(path, line, format!("expected 3 or 4 fields, found {}", record.len())));
        }
        let num = |k: usize, what: &str| -> Result<f64> {
            record[k]
                .parse()
                .map_err(|_| format_err(path, line, format!("{what}: cannot parse {:?}", record[k])))
        };
        rows.push(EventRow {
            condition: record[0].to_string(),
            onset: num(1, "onset")?,
            duration: num(2, "duration")?,
            amplitude: if record.len() == 4 { Some(num(3, "amplitude")?) } else { None },
        });
    }
    EventSchedule::from_rows(rows).map_err(|source| Error::Invalid { path: path.to_path_buf(), source })
}

pub fn save_events(path: &Path, events: &EventSchedule) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "condition,onset,duration,amplitude").map_err(io)?;
    for c in events.conditions() {
        for k in 0..c.onsets.len() {
            writeln!(w, "{},{},{},{}", c.name, fmt_f64(c.onsets[k]), fmt_f64(c.durations[k]), fmt_f64(c.amplitudes[k]))
                .map_err(io)?;
        }
    }
    finish(path, w)
}

/// Smoother weights as `row,col,weight` lines after a `TRIPLETS v1 <V> <nnz>`
/// header.
pub fn write_triplets(path: &Path, op: &SmoothingOperator) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "TRIPLETS {VERSION} {} {}", op.n_vertices(), op.nnz()).map_err(io)?;
    for (i, j, x) in op.triplets() {
        writeln!(w, "{i},{j},{}", fmt_f64(x)).map_err(io)?;
    }
    finish(path, w)
}

/// One column of a per-vertex table.
#[derive(Clone, Debug)]
pub enum Column {
    Real(Vec<f64>),
    Count(Vec<usize>),
    Flag(Vec<bool>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Real(v) => v.len(),
            Column::Count(v) => v.len(),
            Column::Flag(v) => v.len(),
        }
    }

    fn cell(&self, i: usize) -> String {
        match self {
            Column::Real(v) => fmt_f64(v[i]),
            Column::Count(v) => v[i].to_string(),
            Column::Flag(v) => u8::from(v[i]).to_string(),
        }
    }
}

/// Per-vertex CSV: a `vertex` id column followed by the named columns.
pub fn write_vertex_csv(path: &Path, ids: &[String], columns: &[(&str, Column)]) -> Result<()> {
    write_table(path, "vertex", ids, columns)
}

/// CSV with a leading key column named `key`.
pub fn write_table(path: &Path, key: &str, ids: &[String], columns: &[(&str, Column)]) -> Result<()> {
    for (name, c) in columns {
        if c.len() != ids.len() {
            return Err(Error::Config(format!("column {name} has {} rows, expected {}", c.len(), ids.len())));
        }
    }
    let w = create(path)?;
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| format_err(path, 0, e.to_string());
    let mut header = vec![key];
    header.extend(columns.iter().map(|(n, _)| *n));
    out.write_record(&header).map_err(csv_err)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(columns.iter().map(|(_, c)| c.cell(i)));
        out.write_record(&rec).map_err(csv_err)?;
    }
    let w = out.into_inner().map_err(|e| format_err(path, 0, e.to_string()))?;
    finish(path, w)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Json { path: path.to_path_buf(), message: e.to_string() })?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    finish(path, w)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Json { path: path.to_path_buf(), message: e.to_string() })
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    Ok(hex::encode(Sha256::digest(read_bytes(path)?)))
}

/// `dir/name.ext` for the chosen dense format.
pub fn dense_path(dir: &Path, name: &str, format: DenseFormat) -> PathBuf {
    dir.join(format!("{name}.{}", format.extension()))
}
