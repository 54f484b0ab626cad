//! On-disk formats: edge-list text, binary CSR, feature matrices and u32
//! arrays. All binary values are little-endian.

use super::CsrGraph;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

pub const CSR_MAGIC: &[u8; 4] = b"GRIN";
pub const CSR_VERSION: u32 = 1;

/// Result of ingesting an edge list with arbitrary vertex ids.
#[derive(Clone, Debug)]
pub struct IngestedGraph {
    pub graph: CsrGraph,
    /// `original_ids[dense] = id as it appeared in the input`.
    pub original_ids: Vec<u64>,
}

/// Parses `src dst` lines (whitespace separated, `#` comments) and remaps ids
/// densely in order of first appearance. With `symmetrize`, both directions
/// of each pair are stored.
pub fn read_edge_list<R: BufRead>(reader: R, symmetrize: bool) -> Result<IngestedGraph> {
    let mut remap: HashMap<u64, u32> = HashMap::new();
    let mut original_ids = Vec::new();
    let mut edges = Vec::new();
    let mut dense = |raw: u64, ids: &mut Vec<u64>| -> u32 {
        *remap.entry(raw).or_insert_with(|| {
            ids.push(raw);
            (ids.len() - 1) as u32
        })
    };
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut it = t.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<u64> {
            tok.ok_or_else(|| Error::Format(format!("line {}: expected two ids", lineno + 1)))?
                .parse::<u64>()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))
        };
        let s = parse(it.next())?;
        let d = parse(it.next())?;
        let s = dense(s, &mut original_ids);
        let d = dense(d, &mut original_ids);
        edges.push((s, d));
    }
    let n = original_ids.len();
    let graph = if symmetrize {
        CsrGraph::from_undirected_edges(n, &edges)?
    } else {
        CsrGraph::from_edges(n, &edges)?
    };
    Ok(IngestedGraph {
        graph,
        original_ids,
    })
}

pub fn write_edge_list<W: Write>(graph: &CsrGraph, mut w: W) -> Result<()> {
    for (s, d) in graph.edges() {
        writeln!(w, "{s} {d}")?;
    }
    Ok(())
}

pub fn write_csr<W: Write>(graph: &CsrGraph, mut w: W) -> Result<()> {
    w.write_all(CSR_MAGIC)?;
    w.write_u32::<LittleEndian>(CSR_VERSION)?;
    w.write_u64::<LittleEndian>(graph.num_vertices() as u64)?;
    w.write_u64::<LittleEndian>(graph.num_edges() as u64)?;
    for &p in graph.src_ptr() {
        w.write_u64::<LittleEndian>(p)?;
    }
    for &d in graph.dst_idx() {
        w.write_u32::<LittleEndian>(d)?;
    }
    Ok(())
}

pub fn read_csr<R: Read>(mut r: R) -> Result<CsrGraph> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CSR_MAGIC {
        return Err(Error::Format("bad CSR magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CSR_VERSION {
        return Err(Error::Format(format!("unsupported CSR version {version}")));
    }
    let n = r.read_u64::<LittleEndian>()? as usize;
    let m = r.read_u64::<LittleEndian>()? as usize;
    let mut src_ptr = vec![0u64; n + 1];
    r.read_u64_into::<LittleEndian>(&mut src_ptr)?;
    let mut dst_idx = vec![0u32; m];
    r.read_u32_into::<LittleEndian>(&mut dst_idx)?;
    CsrGraph::from_parts(src_ptr, dst_idx)
}

/// Writes `(rows, cols)` as u64 followed by row-major f32 values.
pub fn write_matrix_f32<W: Write>(m: &FeatureMatrix, mut w: W) -> Result<()> {
    w.write_u64::<LittleEndian>(m.rows() as u64)?;
    w.write_u64::<LittleEndian>(m.cols() as u64)?;
    for &v in m.as_slice() {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    Ok(())
}

pub fn read_matrix_f32<R: Read>(mut r: R) -> Result<FeatureMatrix> {
    let rows = r.read_u64::<LittleEndian>()? as usize;
    let cols = r.read_u64::<LittleEndian>()? as usize;
    let mut buf = vec![0f32; rows * cols];
    r.read_f32_into::<LittleEndian>(&mut buf)?;
    FeatureMatrix::from_vec(rows, cols, buf.into_iter().map(f64::from).collect())
}

/// Writes a u64 length followed by the u32 values.
pub fn write_u32_array<W: Write>(values: &[u32], mut w: W) -> Result<()> {
    w.write_u64::<LittleEndian>(values.len() as u64)?;
    for &v in values {
        w.write_u32::<LittleEndian>(v)?;
    }
    Ok(())
}

pub fn read_u32_array<R: Read>(mut r: R) -> Result<Vec<u32>> {
    let n = r.read_u64::<LittleEndian>()? as usize;
    let mut out = vec![0u32; n];
    r.read_u32_into::<LittleEndian>(&mut out)?;
    Ok(out)
}
