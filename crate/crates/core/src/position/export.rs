//! Plan export for external runtimes.
//!
//! JSON (`PlanJson`): `n`, `kind`, per-token `segments`, `buckets` (row-major
//! nested arrays, `null` for masked pairs), `positions` (raw tags: signed
//! distances as decimal strings, or `G2G` / `T2G` / `G2T` / `-`), and `mask`
//! (1 = attend, 0 = blocked).
//!
//! Binary, all little-endian:
//! ```text
//! u32 n
//! u32 kind          0 = local, 1 = global, 2 = sequence
//! u32 x n*n         bucket ids, row-major; u32::MAX for masked pairs
//! u8  x n*n         mask, row-major; 1 = attend, 0 = blocked
//! ```

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{BucketTable, PlanKind, PositionPlan, Segment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanJson {
    pub n: usize,
    pub kind: PlanKind,
    pub segments: Vec<Segment>,
    pub buckets: Vec<Vec<Option<usize>>>,
    pub positions: Vec<Vec<String>>,
    pub mask: Vec<Vec<u8>>,
}

impl PlanJson {
    pub fn new(plan: &PositionPlan, table: &BucketTable) -> Self {
        let rows = |f: &dyn Fn(usize, usize) -> _| -> Vec<Vec<_>> {
            (0..plan.len())
                .map(|i| (0..plan.len()).map(|j| f(i, j)).collect())
                .collect()
        };
        let buckets = plan.buckets(table);
        Self {
            n: plan.len(),
            kind: plan.kind(),
            segments: plan.segments().to_vec(),
            buckets: (0..plan.len()).map(|i| buckets.row(i).to_vec()).collect(),
            positions: rows(&|i, j| plan.position(i, j).to_string()),
            mask: (0..plan.len())
                .map(|i| (0..plan.len()).map(|j| plan.attends(i, j) as u8).collect())
                .collect(),
        }
    }
}

fn kind_code(kind: PlanKind) -> u32 {
    match kind {
        PlanKind::Local => 0,
        PlanKind::Global => 1,
        PlanKind::Sequence => 2,
    }
}

pub fn write_plan_binary(plan: &PositionPlan, table: &BucketTable, mut w: impl Write) -> Result<()> {
    let n = plan.len();
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&kind_code(plan.kind()).to_le_bytes())?;
    for b in plan.buckets(table).iter() {
        let v = b.map_or(u32::MAX, |b| b as u32);
        w.write_all(&v.to_le_bytes())?;
    }
    let mask: Vec<u8> = plan.attend().iter().map(|&a| a as u8).collect();
    w.write_all(&mask)?;
    Ok(())
}

/// Decoded binary plan: kind, bucket ids, attendance.
pub type BinaryPlan = (PlanKind, Array2<Option<u32>>, Array2<bool>);

pub fn read_plan_binary(mut r: impl Read) -> Result<BinaryPlan> {
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let n = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let kind = match u32::from_le_bytes(word) {
        0 => PlanKind::Local,
        1 => PlanKind::Global,
        2 => PlanKind::Sequence,
        k => return Err(Error::Container(format!("unknown plan kind {k}"))),
    };
    let mut raw = vec![0u8; 4 * n * n];
    r.read_exact(&mut raw)?;
    let buckets = raw
        .chunks_exact(4)
        .map(|c| {
            let v = u32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            (v != u32::MAX).then_some(v)
        })
        .collect();
    let mut mask = vec![0u8; n * n];
    r.read_exact(&mut mask)?;
    let shape_err = |e: ndarray::ShapeError| Error::Container(e.to_string());
    Ok((
        kind,
        Array2::from_shape_vec((n, n), buckets).map_err(shape_err)?,
        Array2::from_shape_vec((n, n), mask.into_iter().map(|m| m != 0).collect()).map_err(shape_err)?,
    ))
}
