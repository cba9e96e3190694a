//! `LFHO` feature container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LFHO"
//! 4       2     version (u16, currently 1)
//! 6       2     feature dimension D (u16)
//! 8       4     frame count F (u32)
//! 12      4*D*F row-major f32 values, frame 0 first
//! ```

use std::io::{Read, Write};

use super::IngestError;
use crate::event::Frame;

pub const FEATURE_MAGIC: &[u8; 4] = b"LFHO";
pub const FEATURE_VERSION: u16 = 1;

/// Per-frame backbone features of one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub clip_id: String,
    dim: usize,
    rows: Vec<f32>,
    pooled: Vec<f64>,
}

impl FeatureTable {
    pub fn new(clip_id: impl Into<String>, dim: usize, rows: Vec<f32>) -> Result<Self, IngestError> {
        if dim == 0 || !rows.len().is_multiple_of(dim) {
            return Err(IngestError::Schema(format!(
                "feature buffer of {} values is not a multiple of dimension {dim}",
                rows.len()
            )));
        }
        let frames = rows.len() / dim;
        let mut pooled = vec![0.0; dim];
        for row in rows.chunks_exact(dim) {
            for (p, &x) in pooled.iter_mut().zip(row) {
                *p += x as f64;
            }
        }
        if frames > 0 {
            pooled.iter_mut().for_each(|p| *p /= frames as f64);
        }
        Ok(FeatureTable {
            clip_id: clip_id.into(),
            dim,
            rows,
            pooled,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_count(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn row(&self, t: Frame) -> Option<&[f32]> {
        let t = t as usize;
        if t >= self.frame_count() {
            return None;
        }
        Some(&self.rows[t * self.dim..(t + 1) * self.dim])
    }

    /// Clip-level mean feature.
    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }

    /// Mean of rows `t_s..=t_e`, clipped to the table.
    pub fn mean_over(&self, t_s: Frame, t_e: Frame) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        let mut count = 0usize;
        for t in t_s..=t_e {
            if let Some(row) = self.row(t) {
                for (a, &x) in acc.iter_mut().zip(row) {
                    *a += x as f64;
                }
                count += 1;
            }
        }
        if count > 0 {
            acc.iter_mut().for_each(|a| *a /= count as f64);
        }
        acc
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(FEATURE_MAGIC)?;
        w.write_all(&FEATURE_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u16).to_le_bytes())?;
        w.write_all(&(self.frame_count() as u32).to_le_bytes())?;
        for x in &self.rows {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(clip_id: impl Into<String>, mut r: impl Read) -> Result<Self, IngestError> {
        let mut header = [0u8; 12];
        r.read_exact(&mut header)
            .map_err(|e| IngestError::Parse(format!("feature header: {e}")))?;
        if &header[0..4] != FEATURE_MAGIC {
            return Err(IngestError::Parse("bad feature magic".into()));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != FEATURE_VERSION {
            return Err(IngestError::Schema(format!("unsupported feature version {version}")));
        }
        let dim = u16::from_le_bytes([header[6], header[7]]) as usize;
        let frames = u32::from_le_bytes([header[8], header[9], header[10], header[11]]) as usize;
        let mut bytes = vec![0u8; dim * frames * 4];
        r.read_exact(&mut bytes)
            .map_err(|e| IngestError::Parse(format!("feature body: {e}")))?;
        let rows = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        FeatureTable::new(clip_id, dim, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_exact() {
        let table = FeatureTable::new("c", 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        table.write_to(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"LFHO");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..8], &[2, 0]);
        assert_eq!(&buf[8..12], &[2, 0, 0, 0]);
        assert_eq!(&buf[12..16], &1.0f32.to_le_bytes());
        assert_eq!(buf.len(), 12 + 16);
        let back = FeatureTable::read_from("c", buf.as_slice()).unwrap();
        assert_eq!(back, table);
        assert_eq!(back.pooled(), &[2.0, 3.0]);
    }

    #[test]
    fn truncated_body_is_a_parse_error() {
        let table = FeatureTable::new("c", 2, vec![1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        table.write_to(&mut buf).unwrap();
        buf.pop();
        assert!(matches!(
            FeatureTable::read_from("c", buf.as_slice()),
            Err(IngestError::Parse(_))
        ));
    }

    #[test]
    fn mean_over_window() {
        let table = FeatureTable::new("c", 1, (0..10).map(|x| x as f32).collect()).unwrap();
        assert_eq!(table.mean_over(2, 4), vec![3.0]);
        assert_eq!(table.mean_over(8, 20), vec![8.5]);
    }
}
