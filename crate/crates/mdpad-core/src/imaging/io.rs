//! Frame import/export: PNG and binary PGM (P5, 8-bit). Videos are
//! directories of frames named `frame_%06d.png` (or `.pgm`), ordered by
//! index.

use super::{Frame, ImagingError};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Quantizes a sample for 8-bit storage: round to nearest, clamp.
fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn frame_file_name(index: usize, ext: &str) -> String {
    format!("frame_{index:06}.{ext}")
}

pub fn write_png(path: &Path, frame: &Frame) -> Result<(), ImagingError> {
    let w = frame.width();
    let h = frame.height();
    let bytes: Vec<u8> = frame.data().iter().map(|&v| quantize(v)).collect();
    let result = match frame.channels() {
        1 => image::GrayImage::from_raw(w, h, bytes)
            .expect("sized buffer")
            .save_with_format(path, image::ImageFormat::Png),
        _ => image::RgbImage::from_raw(w, h, bytes)
            .expect("sized buffer")
            .save_with_format(path, image::ImageFormat::Png),
    };
    result.map_err(|e| ImagingError::format(path, e.to_string()))
}

pub fn read_png(path: &Path) -> Result<Frame, ImagingError> {
    let img = image::open(path).map_err(|e| ImagingError::format(path, e.to_string()))?;
    let frame = match img {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width(), g.height());
            Frame::new(w, h, 1, g.into_raw().into_iter().map(f64::from).collect())
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = (rgb.width(), rgb.height());
            Frame::new(w, h, 3, rgb.into_raw().into_iter().map(f64::from).collect())
        }
    };
    frame.map_err(|e| ImagingError::format(path, e.to_string()))
}

/// Binary PGM (P5), 8-bit, single channel only.
pub fn write_pgm(path: &Path, frame: &Frame) -> Result<(), ImagingError> {
    if frame.channels() != 1 {
        return Err(ImagingError::format(path, "PGM export requires a single-channel frame"));
    }
    let mut buf = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    buf.extend(frame.data().iter().map(|&v| quantize(v)));
    let mut file = fs::File::create(path).map_err(|e| ImagingError::io(path, e))?;
    file.write_all(&buf).map_err(|e| ImagingError::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Frame, ImagingError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| ImagingError::io(path, e))?;
    parse_pgm(&bytes).map_err(|m| ImagingError::format(path, m))
}

fn parse_pgm(bytes: &[u8]) -> Result<Frame, String> {
    let mut pos = 0;
    let mut token = || -> Result<String, String> {
        // Skip whitespace and `#` comment lines between header tokens.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token()? != "P5" {
        return Err("not a binary PGM (P5) file".into());
    }
    let width: u32 = token()?.parse().map_err(|_| "bad width")?;
    let height: u32 = token()?.parse().map_err(|_| "bad height")?;
    let maxval: u32 = token()?.parse().map_err(|_| "bad maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}, expected 255"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let expected = width as usize * height as usize;
    let raster = bytes.get(pos..pos + expected).ok_or("truncated raster")?;
    Frame::new(width, height, 1, raster.iter().map(|&b| f64::from(b)).collect())
        .map_err(|e| e.to_string())
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<(), ImagingError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => write_pgm(path, frame),
        _ => write_png(path, frame),
    }
}

pub fn read_frame(path: &Path) -> Result<Frame, ImagingError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => read_pgm(path),
        _ => read_png(path),
    }
}

/// Loads all `frame_*.png` / `frame_*.pgm` files from a directory in
/// filename order and assigns frame indices.
pub fn read_video_dir(dir: &Path) -> Result<Vec<Frame>, ImagingError> {
    let entries = fs::read_dir(dir).map_err(|e| ImagingError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("frame_") && (name.ends_with(".png") || name.ends_with(".pgm"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(ImagingError::format(dir, "no frame_*.png or frame_*.pgm files"));
    }
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| read_frame(p).map(|f| f.with_index(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let f = Frame::from_fn(7, 5, 3, |x, y, c| ((x * 40 + y * 11 + c as u32 * 3) % 256) as f64);
        write_png(&path, &f).unwrap();
        let back = read_png(&path).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let f = Frame::from_fn(9, 4, 1, |x, y, _| ((x * 29 + y * 7) % 256) as f64);
        write_pgm(&path, &f).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn pgm_rejects_color() {
        let dir = tempfile::tempdir().unwrap();
        let f = Frame::filled(2, 2, 3, 1.0);
        assert!(write_pgm(&dir.path().join("c.pgm"), &f).is_err());
    }

    #[test]
    fn quantize_rounds_to_nearest() {
        assert_eq!(quantize(99.5), 100);
        assert_eq!(quantize(99.4), 99);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(300.0), 255);
    }

    #[test]
    fn video_dir_ordering_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        for i in [2usize, 0, 1] {
            let f = Frame::filled(4, 4, 1, (i * 10) as f64);
            write_frame(&dir.path().join(frame_file_name(i, "png")), &f).unwrap();
        }
        let frames = read_video_dir(dir.path()).unwrap();
        assert_eq!(frames.len(), 3);
        for (i, f) in frames.iter().enumerate() {
            assert_eq!(f.index, i);
            assert_eq!(f.get(0, 0, 0), (i * 10) as f64);
        }
        let empty = tempfile::tempdir().unwrap();
        assert!(read_video_dir(empty.path()).is_err());
    }

    #[test]
    fn corrupt_png_error_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.png");
        std::fs::write(&path, b"not a png").unwrap();
        let err = read_png(&path).unwrap_err().to_string();
        assert!(err.contains("bad.png"), "{err}");
    }
}
