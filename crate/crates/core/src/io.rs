//! Persistence: fvecs/bvecs/ivecs vector files and the binary graph format.
//!
//! Vector files follow the standard interleaved layout: per vector, a 32-bit
//! little-endian component count followed by the components (f32 for fvecs,
//! u8 for bvecs, i32 for ivecs). Graph files carry a fixed header and then
//! `n * k` records of `(id, dist)`. Everything is little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::KnnGraph;
use crate::metric::MetricKind;

/// Vector file flavor; component width and type differ, framing is shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VecsKind {
    Fvecs,
    Bvecs,
    Ivecs,
}

impl VecsKind {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("fvecs") => Ok(VecsKind::Fvecs),
            Some("bvecs") => Ok(VecsKind::Bvecs),
            Some("ivecs") => Ok(VecsKind::Ivecs),
            _ => Err(Error::usage(format!(
                "cannot infer vector format from {:?}; expected .fvecs, .bvecs, or .ivecs",
                path
            ))),
        }
    }

    fn component_bytes(self) -> usize {
        match self {
            VecsKind::Fvecs | VecsKind::Ivecs => 4,
            VecsKind::Bvecs => 1,
        }
    }
}

/// Streaming reader over an interleaved vector file. Yields one row at a
/// time so callers can partition large inputs without loading them whole.
pub struct VecsReader<R: Read> {
    reader: R,
    kind: VecsKind,
    path: std::path::PathBuf,
    dim: Option<usize>,
    offset: u64,
    buf: Vec<u8>,
}

impl VecsReader<BufReader<File>> {
    pub fn open(path: &Path, kind: VecsKind) -> Result<Self> {
        let file = File::open(path)?;
        Ok(VecsReader {
            reader: BufReader::new(file),
            kind,
            path: path.to_path_buf(),
            dim: None,
            offset: 0,
            buf: Vec::new(),
        })
    }
}

impl<R: Read> VecsReader<R> {
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    fn read_record(&mut self) -> Result<Option<Vec<f32>>> {
        let mut header = [0u8; 4];
        match read_full(&mut self.reader, &mut header) {
            FillResult::Eof => return Ok(None),
            FillResult::Short(got) => {
                return Err(Error::format_in(
                    &self.path,
                    self.offset + got as u64,
                    "truncated vector header",
                ));
            }
            FillResult::Full => {}
        }
        let d = i32::from_le_bytes(header);
        if d <= 0 {
            return Err(Error::format_in(
                &self.path,
                self.offset,
                format!("invalid component count {d}"),
            ));
        }
        let d = d as usize;
        match self.dim {
            None => self.dim = Some(d),
            Some(expect) if expect != d => {
                return Err(Error::format_in(
                    &self.path,
                    self.offset,
                    format!("inconsistent dimension: expected {expect}, got {d}"),
                ));
            }
            _ => {}
        }
        self.offset += 4;

        let payload = d * self.kind.component_bytes();
        self.buf.resize(payload, 0);
        match read_full(&mut self.reader, &mut self.buf) {
            FillResult::Full => {}
            FillResult::Eof | FillResult::Short(_) => {
                return Err(Error::format_in(
                    &self.path,
                    self.offset,
                    "truncated vector payload",
                ));
            }
        }
        self.offset += payload as u64;

        let row = match self.kind {
            VecsKind::Fvecs => self
                .buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            VecsKind::Bvecs => self.buf.iter().map(|&b| b as f32).collect(),
            VecsKind::Ivecs => self
                .buf
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as f32)
                .collect(),
        };
        Ok(Some(row))
    }
}

impl<R: Read> Iterator for VecsReader<R> {
    type Item = Result<Vec<f32>>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_record().transpose()
    }
}

enum FillResult {
    Full,
    Eof,
    Short(usize),
}

fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> FillResult {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => {
                return if filled == 0 {
                    FillResult::Eof
                } else {
                    FillResult::Short(filled)
                };
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(_) => return FillResult::Short(filled),
        }
    }
    FillResult::Full
}

/// Loads a whole vector file. Components of bvecs/ivecs are widened to f32.
pub fn read_vecs(path: &Path, kind: VecsKind) -> Result<Dataset> {
    let mut reader = VecsReader::open(path, kind)?;
    let mut data = Vec::new();
    let mut rows = 0usize;
    while let Some(row) = reader.next().transpose()? {
        data.extend_from_slice(&row);
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::format_in(path, 0, "file holds no vectors"));
    }
    let d = reader.dim().unwrap();
    Dataset::new(d, data)
}

/// Writes rows in fvecs framing.
pub fn write_fvecs<'a>(path: &Path, rows: impl Iterator<Item = &'a [f32]>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        w.write_all(&(row.len() as i32).to_le_bytes())?;
        for x in row {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes id rows in ivecs framing (used for ground-truth top-k ids).
pub fn write_ivecs_ids(path: &Path, rows: impl Iterator<Item = Vec<u32>>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        w.write_all(&(row.len() as i32).to_le_bytes())?;
        for id in row {
            w.write_all(&(id as i32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads an ivecs file as id rows; negative ids are a format error.
pub fn read_ivecs_ids(path: &Path) -> Result<Vec<Vec<u32>>> {
    let reader = VecsReader::open(path, VecsKind::Ivecs)?;
    let mut out = Vec::new();
    for row in reader {
        let row = row?;
        let ids: Option<Vec<u32>> = row
            .iter()
            .map(|&x| if x >= 0.0 { Some(x as u32) } else { None })
            .collect();
        match ids {
            Some(ids) => out.push(ids),
            None => return Err(Error::format_in(path, 0, "negative id in ground truth")),
        }
    }
    Ok(out)
}

const GRAPH_MAGIC: &[u8; 8] = b"KNNG0001";
/// Header flag bit: neighbor ids are stored as 64-bit values.
const FLAG_WIDE_IDS: u32 = 1;
const HEADER_LEN: u64 = 8 + 8 + 4 + 4 + 4;

/// Writes a finalized graph: magic, n (u64), k (u32), metric code (u32),
/// flags (u32), then `n * k` records of `(id, dist: f32)`. Ids are 32-bit
/// unless `wide_ids` asks for the 64-bit export.
pub fn write_graph_opts(graph: &KnnGraph, path: &Path, wide_ids: bool) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(GRAPH_MAGIC)?;
    w.write_all(&(graph.len() as u64).to_le_bytes())?;
    w.write_all(&(graph.k() as u32).to_le_bytes())?;
    w.write_all(&graph.metric().code().to_le_bytes())?;
    w.write_all(&if wide_ids { FLAG_WIDE_IDS } else { 0 }.to_le_bytes())?;
    for i in 0..graph.len() {
        for (id, dist) in graph.neighbors(i) {
            if wide_ids {
                w.write_all(&(id as u64).to_le_bytes())?;
            } else {
                w.write_all(&id.to_le_bytes())?;
            }
            w.write_all(&dist.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_graph(graph: &KnnGraph, path: &Path) -> Result<()> {
    write_graph_opts(graph, path, false)
}

/// Exact inverse of [`write_graph_opts`]: validates the magic, rejects files
/// whose record count disagrees with the header.
pub fn read_graph(path: &Path) -> Result<KnnGraph> {
    let file = File::open(path)?;
    let expect_len = file.metadata()?.len();
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    if !matches!(read_full(&mut r, &mut magic), FillResult::Full) || &magic != GRAPH_MAGIC {
        return Err(Error::format_in(path, 0, "bad graph file magic"));
    }
    let mut buf8 = [0u8; 8];
    let mut buf4 = [0u8; 4];
    if !matches!(read_full(&mut r, &mut buf8), FillResult::Full) {
        return Err(Error::format_in(path, 8, "truncated header"));
    }
    let n = u64::from_le_bytes(buf8);
    if !matches!(read_full(&mut r, &mut buf4), FillResult::Full) {
        return Err(Error::format_in(path, 16, "truncated header"));
    }
    let k = u32::from_le_bytes(buf4);
    if !matches!(read_full(&mut r, &mut buf4), FillResult::Full) {
        return Err(Error::format_in(path, 20, "truncated header"));
    }
    let metric = MetricKind::from_code(u32::from_le_bytes(buf4)).ok_or_else(|| {
        Error::format_in(path, 20, format!("unknown metric code {}", u32::from_le_bytes(buf4)))
    })?;
    if !matches!(read_full(&mut r, &mut buf4), FillResult::Full) {
        return Err(Error::format_in(path, 24, "truncated header"));
    }
    let flags = u32::from_le_bytes(buf4);
    if flags & !FLAG_WIDE_IDS != 0 {
        return Err(Error::format_in(path, 24, format!("unknown flags {flags:#x}")));
    }
    let wide = flags & FLAG_WIDE_IDS != 0;
    if n == 0 || k == 0 {
        return Err(Error::format_in(path, 8, "empty graph"));
    }

    let records = n
        .checked_mul(k as u64)
        .ok_or_else(|| Error::format_in(path, 8, "header overflow"))?;
    let record_len = if wide { 12 } else { 8 };
    let want_len = HEADER_LEN + records * record_len;
    if expect_len != want_len {
        return Err(Error::format_in(
            path,
            expect_len.min(want_len),
            format!(
                "file length {expect_len} does not match header (n={n}, k={k} needs {want_len})"
            ),
        ));
    }

    let mut ids = Vec::with_capacity(records as usize);
    let mut dists = Vec::with_capacity(records as usize);
    let mut offset = HEADER_LEN;
    for _ in 0..records {
        let id = if wide {
            if !matches!(read_full(&mut r, &mut buf8), FillResult::Full) {
                return Err(Error::format_in(path, offset, "truncated record"));
            }
            let raw = u64::from_le_bytes(buf8);
            u32::try_from(raw)
                .map_err(|_| Error::format_in(path, offset, format!("id {raw} exceeds u32")))?
        } else {
            if !matches!(read_full(&mut r, &mut buf4), FillResult::Full) {
                return Err(Error::format_in(path, offset, "truncated record"));
            }
            u32::from_le_bytes(buf4)
        };
        offset += record_len - 4;
        if !matches!(read_full(&mut r, &mut buf4), FillResult::Full) {
            return Err(Error::format_in(path, offset, "truncated record"));
        }
        dists.push(f32::from_le_bytes(buf4));
        ids.push(id);
        offset += 4;
    }
    KnnGraph::from_parts(n as usize, k as usize, metric, ids, dists)
}
