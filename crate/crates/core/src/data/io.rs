use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{GazeCase, GazePoint};
use crate::error::{Error, Result};

/// 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

fn ingest(path: &Path, reason: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Reads an 8-bit grayscale PNG or binary PGM (P5), chosen by extension.
pub fn read_gray(path: &Path) -> Result<GrayImage> {
    if is_pgm(path) {
        read_pgm(path)
    } else {
        read_png(path)
    }
}

pub fn write_gray(path: &Path, img: &GrayImage) -> Result<()> {
    if is_pgm(path) {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "P5\n{} {}\n255\n", img.width, img.height)?;
        w.write_all(&img.pixels)?;
        w.flush()?;
        return Ok(());
    }
    let w = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(w, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| ingest(path, e.to_string()))?;
    writer
        .write_image_data(&img.pixels)
        .map_err(|e| ingest(path, e.to_string()))?;
    writer.finish().map_err(|e| ingest(path, e.to_string()))?;
    Ok(())
}

fn read_png(path: &Path) -> Result<GrayImage> {
    let mut decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| ingest(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| ingest(path, e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let data = &buf[..info.buffer_size()];
    let pixels = match channels {
        1 => data.to_vec(),
        2 => data.chunks_exact(2).map(|p| p[0]).collect(),
        3 | 4 => data
            .chunks_exact(channels)
            .map(|p| ((p[0] as u32 * 299 + p[1] as u32 * 587 + p[2] as u32 * 114 + 500) / 1000) as u8)
            .collect(),
        n => return Err(ingest(path, format!("unsupported channel count {n}"))),
    };
    Ok(GrayImage {
        width: w,
        height: h,
        pixels,
    })
}

fn read_pgm(path: &Path) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ingest(path, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(ingest(path, format!("expected binary PGM (P5), found {}", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| ingest(path, format!("bad header field {s}")))
    };
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(ingest(path, format!("only 8-bit PGM supported, maxval {maxval}")));
    }
    let data = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| ingest(path, "truncated PGM data"))?;
    Ok(GrayImage {
        width: w,
        height: h,
        pixels: data.to_vec(),
    })
}

/// Reads a headerless `x,y` CSV of fixations in temporal order.
pub fn read_gaze(path: &Path) -> Result<Vec<GazePoint>> {
    let reader = BufReader::new(File::open(path)?);
    let mut gaze = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let mut next = || {
            parts
                .next()
                .and_then(|v| v.parse::<usize>().ok())
                .ok_or_else(|| ingest(path, format!("line {}: expected `x,y`, got `{line}`", n + 1)))
        };
        let (x, y) = (next()?, next()?);
        gaze.push(GazePoint::new(x, y));
    }
    Ok(gaze)
}

pub fn write_gaze(path: &Path, gaze: &[GazePoint]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for g in gaze {
        writeln!(w, "{},{}", g.x, g.y)?;
    }
    w.flush()?;
    Ok(())
}

/// Whether a case with no fixation inside its lesion is an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Reject,
    /// Accept the case; callers can inspect [`GazeCase::lesion_visits`].
    Warn,
}

/// Loads one case: intensities scaled to `[0, 1]`, mask thresholded at 0.5.
pub fn load_case(
    case_id: &str,
    image_path: &Path,
    mask_path: &Path,
    gaze_path: &Path,
    strictness: Strictness,
) -> Result<GazeCase> {
    let image = read_gray(image_path)?;
    let mask = read_gray(mask_path)?;
    if (image.width, image.height) != (mask.width, mask.height) {
        return Err(ingest(
            mask_path,
            format!(
                "mask is {}x{} but image is {}x{}",
                mask.width, mask.height, image.width, image.height
            ),
        ));
    }
    let case = GazeCase {
        case_id: case_id.to_string(),
        width: image.width,
        height: image.height,
        image: image.pixels.iter().map(|&p| p as f32 / 255.0).collect(),
        mask: mask.pixels.iter().map(|&p| p as f32 / 255.0 >= 0.5).collect(),
        gaze: read_gaze(gaze_path)?,
    };
    match strictness {
        Strictness::Reject => case.validate()?,
        Strictness::Warn => case.validate_structure()?,
    }
    Ok(case)
}

/// One `(image, mask, gaze)` triple, paths relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub case_id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
    pub gaze: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub cases: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes the case as `<id>_image.png`, `<id>_mask.png` and `<id>_gaze.csv`.
pub fn save_case(dir: &Path, case: &GazeCase) -> Result<ManifestEntry> {
    let entry = ManifestEntry {
        case_id: case.case_id.clone(),
        image: PathBuf::from(format!("{}_image.png", case.case_id)),
        mask: PathBuf::from(format!("{}_mask.png", case.case_id)),
        gaze: PathBuf::from(format!("{}_gaze.csv", case.case_id)),
    };
    let gray = |values: Vec<u8>| GrayImage {
        width: case.width,
        height: case.height,
        pixels: values,
    };
    write_gray(
        &dir.join(&entry.image),
        &gray(
            case.image
                .iter()
                .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect(),
        ),
    )?;
    write_gray(
        &dir.join(&entry.mask),
        &gray(case.mask.iter().map(|&m| if m { 255 } else { 0 }).collect()),
    )?;
    write_gaze(&dir.join(&entry.gaze), &case.gaze)?;
    Ok(entry)
}

pub fn save_dataset(dir: &Path, cases: &[GazeCase]) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        cases: cases.iter().map(|c| save_case(dir, c)).collect::<Result<_>>()?,
    };
    let mut w = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    writeln!(w)?;
    w.flush()?;
    Ok(manifest)
}

/// Loads every case listed in `dir/manifest.json`, in manifest order. If any
/// case fails, the error lists every failing case.
pub fn load_dataset(dir: &Path, strictness: Strictness) -> Result<Vec<GazeCase>> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_reader(BufReader::new(
        File::open(&path).map_err(|e| ingest(&path, e.to_string()))?,
    ))?;
    let mut cases = Vec::with_capacity(manifest.cases.len());
    let mut failures = Vec::new();
    for e in &manifest.cases {
        match load_case(
            &e.case_id,
            &dir.join(&e.image),
            &dir.join(&e.mask),
            &dir.join(&e.gaze),
            strictness,
        ) {
            Ok(case) => cases.push(case),
            Err(err) => failures.push(format!("  {}: {err}", e.case_id)),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Input(format!(
            "{} of {} cases failed to load:\n{}",
            failures.len(),
            manifest.cases.len(),
            failures.join("\n")
        )));
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(dir: &Path, name: &str, w: usize, h: usize, px: Vec<u8>) -> PathBuf {
        let p = dir.join(name);
        write_gray(
            &p,
            &GrayImage {
                width: w,
                height: h,
                pixels: px,
            },
        )
        .unwrap();
        p
    }

    #[test]
    fn normalization_and_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let img = write_raw(dir.path(), "i.png", 3, 1, vec![0, 255, 128]);
        let mask = write_raw(dir.path(), "m.pgm", 3, 1, vec![0, 127, 128]);
        let gaze = dir.path().join("g.csv");
        fs::write(&gaze, "0,0\n1,0\n2,0\n").unwrap();
        let case = load_case("a", &img, &mask, &gaze, Strictness::Reject).unwrap();
        assert_eq!(case.image, vec![0.0, 1.0, 128.0 / 255.0]);
        assert_eq!(case.mask, vec![false, false, true]);
        assert_eq!(case.gaze.len(), 3);
    }

    #[test]
    fn ingestion_errors() {
        let dir = tempfile::tempdir().unwrap();
        let img = write_raw(dir.path(), "i.png", 3, 1, vec![0, 0, 0]);
        let mask = write_raw(dir.path(), "m.png", 2, 1, vec![255, 255]);
        let gaze = dir.path().join("g.csv");
        fs::write(&gaze, "0,0\n1,0\n").unwrap();
        assert!(matches!(
            load_case("a", &img, &mask, &gaze, Strictness::Reject),
            Err(Error::Ingestion { .. })
        ));

        let mask = write_raw(dir.path(), "m3.png", 3, 1, vec![0, 0, 255]);
        fs::write(&gaze, "0,0\n5,0\n").unwrap();
        assert!(matches!(
            load_case("a", &img, &mask, &gaze, Strictness::Reject),
            Err(Error::Validation { .. })
        ));

        fs::write(&gaze, "0,0\n1,0\n").unwrap();
        assert!(matches!(
            load_case("a", &img, &mask, &gaze, Strictness::Reject),
            Err(Error::Validation { .. })
        ));
        let lenient = load_case("a", &img, &mask, &gaze, Strictness::Warn).unwrap();
        assert_eq!(lenient.lesion_visits(), 0);

        fs::write(&gaze, "0;0\n").unwrap();
        assert!(load_case("a", &img, &mask, &gaze, Strictness::Warn).is_err());
    }
}
