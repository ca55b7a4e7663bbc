//! On-disk formats owned by the ensemble:
//!
//! * Feature files — magic `MDFV`, little-endian u32 count and dim, then
//!   count x dim f32 little-endian values row-major (one row per step).
//! * Model files — magic `MDMW`, cell kind byte (0 = LSTM, 1 = BiLSTM,
//!   2 = GRU), u32 input dim, u32 hidden units, u64 parameter count, then
//!   f64 little-endian parameters in flat layout order.
//! * Score files — CSV `video_id,label,score`.

use super::rnn::{CellKind, RnnParams};
use super::EnsembleError;
use std::io::Read;
use std::path::Path;

const FEATURE_MAGIC: &[u8; 4] = b"MDFV";
const MODEL_MAGIC: &[u8; 4] = b"MDMW";

fn io_err(path: &Path, source: std::io::Error) -> EnsembleError {
    EnsembleError::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> EnsembleError {
    EnsembleError::Format { path: path.to_path_buf(), message: message.into() }
}

fn read_all(path: &Path) -> Result<Vec<u8>, EnsembleError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    Ok(bytes)
}

pub fn write_feature_file(path: &Path, steps: &[Vec<f64>]) -> Result<(), EnsembleError> {
    let dim = steps.first().map_or(0, |s| s.len());
    if steps.iter().any(|s| s.len() != dim) {
        return Err(EnsembleError::DimensionMismatch {
            expected: dim,
            got: steps.iter().find(|s| s.len() != dim).unwrap().len(),
        });
    }
    let mut buf = Vec::with_capacity(12 + steps.len() * dim * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&(steps.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for row in steps {
        for &v in row {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| io_err(path, e))
}

pub fn read_feature_file(path: &Path) -> Result<Vec<Vec<f64>>, EnsembleError> {
    let bytes = read_all(path)?;
    if bytes.len() < 12 || &bytes[..4] != FEATURE_MAGIC {
        return Err(format_err(path, "missing MDFV magic"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() != 12 + count * dim * 4 {
        return Err(format_err(path, "truncated feature rows"));
    }
    let mut rows = Vec::with_capacity(count);
    let mut off = 12;
    for _ in 0..count {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            row.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64);
            off += 4;
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_model(path: &Path, params: &RnnParams) -> Result<(), EnsembleError> {
    let theta = params.theta();
    let mut buf = Vec::with_capacity(21 + theta.len() * 8);
    buf.extend_from_slice(MODEL_MAGIC);
    buf.push(params.kind().to_byte());
    buf.extend_from_slice(&(params.input_dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(params.hidden() as u32).to_le_bytes());
    buf.extend_from_slice(&(theta.len() as u64).to_le_bytes());
    for &v in theta {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| io_err(path, e))
}

pub fn read_model(path: &Path) -> Result<RnnParams, EnsembleError> {
    let bytes = read_all(path)?;
    if bytes.len() < 21 || &bytes[..4] != MODEL_MAGIC {
        return Err(format_err(path, "missing MDMW magic"));
    }
    let kind = CellKind::from_byte(bytes[4])
        .ok_or_else(|| format_err(path, format!("unknown cell kind byte {}", bytes[4])))?;
    let input_dim = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let hidden = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[13..21].try_into().unwrap()) as usize;
    if bytes.len() != 21 + count * 8 {
        return Err(format_err(path, "truncated parameter block"));
    }
    let theta: Vec<f64> = bytes[21..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    RnnParams::from_theta(kind, input_dim, hidden, theta)
        .map_err(|_| format_err(path, "parameter count does not match dims"))
}

/// Writes `video_id,label,score` rows with a header line.
pub fn write_scores(path: &Path, rows: &[(String, u8, f64)]) -> Result<(), EnsembleError> {
    let mut out = String::from("video_id,label,score\n");
    for (id, label, score) in rows {
        out.push_str(&format!("{id},{label},{score}\n"));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<(String, u8, f64)>, EnsembleError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line == "video_id,label,score" {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let (id, label, score) = (parts.next(), parts.next(), parts.next());
        let parsed = (|| {
            Some((
                id?.to_string(),
                label?.parse::<u8>().ok()?,
                score?.parse::<f64>().ok()?,
            ))
        })();
        match parsed {
            Some(row) => rows.push(row),
            None => return Err(format_err(path, format!("bad score row {}: `{line}`", i + 1))),
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.mdfv");
        let steps: Vec<Vec<f64>> =
            (0..5).map(|i| (0..7).map(|j| (i * 7 + j) as f64 / 16.0).collect()).collect();
        write_feature_file(&path, &steps).unwrap();
        let back = read_feature_file(&path).unwrap();
        assert_eq!(back.len(), 5);
        for (a, b) in steps.iter().zip(&back) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-6); // f32 storage
            }
        }
        assert_eq!(&std::fs::read(&path).unwrap()[..4], b"MDFV");
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [CellKind::Lstm, CellKind::BiLstm, CellKind::Gru] {
            let path = dir.path().join(format!("{kind}.mdmw"));
            let params = RnnParams::init(kind, 6, 4, 99);
            write_model(&path, &params).unwrap();
            let back = read_model(&path).unwrap();
            assert_eq!(back, params);
            let bits_a: Vec<u64> = params.theta().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = back.theta().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn model_file_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mdmw");
        let params = RnnParams::init(CellKind::Gru, 3, 2, 1);
        write_model(&path, &params).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_model(&path).is_err());
        std::fs::write(&path, b"XXXX").unwrap();
        assert!(read_model(&path).is_err());
    }

    #[test]
    fn score_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let rows = vec![
            ("vid_a".to_string(), 1u8, 0.875),
            ("vid_b".to_string(), 0u8, 0.125),
        ];
        write_scores(&path, &rows).unwrap();
        assert_eq!(read_scores(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("video_id,label,score\n"));
        std::fs::write(&path, "video_id,label,score\njunk\n").unwrap();
        assert!(read_scores(&path).is_err());
    }
}
