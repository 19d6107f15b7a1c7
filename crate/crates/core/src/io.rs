//! File formats: 16-bit PGM, 1-bit PBM, and the CSV layouts used for
//! maps, tables, and logs. All writers are byte-deterministic.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::doe::DiffractiveElement;
use crate::error::{CoreError, Result};
use crate::specimen::MfpTable;

/// Write a nonnegative map as 16-bit grayscale PGM (P5, big-endian),
/// normalized so the map maximum hits 65535. `comments` become `#` header
/// lines (used to embed the config hash).
pub fn write_pgm16(path: &Path, map: &Array2<f64>, comments: &[&str]) -> Result<()> {
    let (ny, nx) = map.dim();
    let peak = map.iter().cloned().fold(0.0f64, f64::max);
    let scale = if peak > 0.0 { 65535.0 / peak } else { 0.0 };
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "P5")?;
    for cmt in comments {
        writeln!(w, "# {cmt}")?;
    }
    write!(w, "{nx} {ny}\n65535\n")?;
    for &v in map.iter() {
        let q = (v * scale).round().clamp(0.0, 65535.0) as u16;
        w.write_all(&q.to_be_bytes())?;
    }
    Ok(())
}

/// Read a 16-bit P5 PGM into a map scaled to `[0, 1]`.
pub fn read_pgm16(path: &Path) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    File::open(path)?.read_to_end(&mut data)?;
    // header: magic, width, height, maxval, single whitespace, then raster
    let mut fields = Vec::new();
    let mut pos = 0usize;
    while fields.len() < 4 && pos < data.len() {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < data.len() && data[pos] == b'#' {
            while pos < data.len() && data[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&data[start..pos]).map_err(|_| {
            CoreError::Parse("non-utf8 PGM header".into())
        })?.to_string());
    }
    if fields.len() != 4 || fields[0] != "P5" {
        return Err(CoreError::Parse("expected binary PGM (P5) header".into()));
    }
    let nx: usize = fields[1].parse().map_err(|_| CoreError::Parse("bad PGM width".into()))?;
    let ny: usize = fields[2].parse().map_err(|_| CoreError::Parse("bad PGM height".into()))?;
    let maxval: f64 = fields[3].parse().map_err(|_| CoreError::Parse("bad PGM maxval".into()))?;
    if maxval != 65535.0 {
        return Err(CoreError::Parse(format!("expected 16-bit PGM, maxval {maxval}")));
    }
    pos += 1; // single whitespace after maxval
    let need = nx * ny * 2;
    if data.len() < pos + need {
        return Err(CoreError::Parse("truncated PGM raster".into()));
    }
    let raster = &data[pos..pos + need];
    let map = Array2::from_shape_fn((ny, nx), |(iy, ix)| {
        let i = 2 * (iy * nx + ix);
        u16::from_be_bytes([raster[i], raster[i + 1]]) as f64 / 65535.0
    });
    Ok(map)
}

/// Write a binary element as 1-bit PBM (P4, packed). Set bits (black)
/// mark opaque pixels; clear bits are the open holes.
pub fn write_pbm(path: &Path, element: &DiffractiveElement, comments: &[&str]) -> Result<()> {
    let map = element.transmission();
    let (ny, nx) = map.dim();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "P4")?;
    for cmt in comments {
        writeln!(w, "# {cmt}")?;
    }
    writeln!(w, "{nx} {ny}")?;
    for iy in 0..ny {
        let mut byte = 0u8;
        let mut bits = 0;
        for ix in 0..nx {
            byte <<= 1;
            if map[[iy, ix]] == 0.0 {
                byte |= 1; // opaque -> black
            }
            bits += 1;
            if bits == 8 {
                w.write_all(&[byte])?;
                byte = 0;
                bits = 0;
            }
        }
        if bits > 0 {
            byte <<= 8 - bits;
            w.write_all(&[byte])?;
        }
    }
    Ok(())
}

/// Write a scalar map as CSV: `nx,ny,pixel_size` header line, then one
/// row of comma-separated values per grid row (row-major). `comments`
/// become leading `#` lines.
pub fn write_csv_map(
    path: &Path,
    map: &Array2<f64>,
    pixel_size: f64,
    comments: &[&str],
) -> Result<()> {
    let (ny, nx) = map.dim();
    let mut w = BufWriter::new(File::create(path)?);
    for cmt in comments {
        writeln!(w, "# {cmt}")?;
    }
    writeln!(w, "nx,ny,pixel_size")?;
    writeln!(w, "{nx},{ny},{pixel_size}")?;
    for iy in 0..ny {
        let row: Vec<String> = (0..nx).map(|ix| format!("{}", map[[iy, ix]])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Read a CSV map written by [`write_csv_map`]. Returns `(map, pixel_size)`.
pub fn read_csv_map(path: &Path) -> Result<(Array2<f64>, f64)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().filter(|l| {
        !matches!(l, Ok(line) if line.trim_start().starts_with('#'))
    });
    let header = lines
        .next()
        .ok_or_else(|| CoreError::Parse("empty CSV map".into()))??;
    if header.trim() != "nx,ny,pixel_size" {
        return Err(CoreError::Parse("expected 'nx,ny,pixel_size' header".into()));
    }
    let dims = lines
        .next()
        .ok_or_else(|| CoreError::Parse("missing dimension line".into()))??;
    let parts: Vec<&str> = dims.trim().split(',').collect();
    if parts.len() != 3 {
        return Err(CoreError::Parse("bad dimension line".into()));
    }
    let nx: usize = parts[0].parse().map_err(|_| CoreError::Parse("bad nx".into()))?;
    let ny: usize = parts[1].parse().map_err(|_| CoreError::Parse("bad ny".into()))?;
    let pixel_size: f64 = parts[2].parse().map_err(|_| CoreError::Parse("bad pixel size".into()))?;
    let mut map = Array2::zeros((ny, nx));
    for (iy, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if iy >= ny {
            return Err(CoreError::Parse("too many CSV rows".into()));
        }
        for (ix, cell) in line.trim().split(',').enumerate() {
            if ix >= nx {
                return Err(CoreError::Parse(format!("row {iy} too long")));
            }
            map[[iy, ix]] = cell
                .parse()
                .map_err(|_| CoreError::Parse(format!("bad value at ({iy},{ix})")))?;
        }
    }
    Ok((map, pixel_size))
}

/// Write open pixels of a binary element as a hole list:
/// `x,y` center coordinates in meters, with the pixel size echoed in the
/// header.
pub fn write_hole_csv(path: &Path, element: &DiffractiveElement, comments: &[&str]) -> Result<()> {
    let map = element.transmission();
    let (ny, nx) = map.dim();
    let pixel = element.pixel_size();
    let mut w = BufWriter::new(File::create(path)?);
    for cmt in comments {
        writeln!(w, "# {cmt}")?;
    }
    writeln!(w, "x,y,pixel_size={pixel}")?;
    for iy in 0..ny {
        for ix in 0..nx {
            if map[[iy, ix]] == 1.0 {
                let x = (ix as f64 - (nx / 2) as f64) * pixel;
                let y = (iy as f64 - (ny / 2) as f64) * pixel;
                writeln!(w, "{x},{y}")?;
            }
        }
    }
    Ok(())
}

/// Write a mean free path table as `energy_eV,lambda_m` CSV.
pub fn write_mfp_csv(path: &Path, table: &MfpTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "energy_eV,lambda_m")?;
    for &(e, l) in table.entries() {
        writeln!(w, "{e},{l}")?;
    }
    Ok(())
}

/// Read a mean free path table from `energy_eV,lambda_m` CSV.
pub fn read_mfp_csv(path: &Path) -> Result<MfpTable> {
    let reader = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || (i == 0 && t.starts_with("energy")) {
            continue;
        }
        let parts: Vec<&str> = t.split(',').collect();
        if parts.len() != 2 {
            return Err(CoreError::Parse(format!("bad MFP row: {t}")));
        }
        let e: f64 = parts[0].parse().map_err(|_| CoreError::Parse("bad energy".into()))?;
        let l: f64 = parts[1].parse().map_err(|_| CoreError::Parse("bad mfp".into()))?;
        entries.push((e, l));
    }
    MfpTable::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doe::ElementKind;
    use tempdir::scratch_dir;

    mod tempdir {
        use std::path::PathBuf;
        use std::sync::atomic::{AtomicU64, Ordering};

        static COUNTER: AtomicU64 = AtomicU64::new(0);

        pub fn scratch_dir() -> PathBuf {
            let dir = std::env::temp_dir().join(format!(
                "elver-io-test-{}-{}",
                std::process::id(),
                COUNTER.fetch_add(1, Ordering::SeqCst)
            ));
            std::fs::create_dir_all(&dir).unwrap();
            dir
        }
    }

    #[test]
    fn pgm_round_trip_preserves_shape_and_scale() {
        let dir = scratch_dir();
        let map = Array2::from_shape_fn((12, 8), |(iy, ix)| (iy * 8 + ix) as f64);
        let path = dir.join("map.pgm");
        write_pgm16(&path, &map, &["config_hash=abc123"]).unwrap();
        let back = read_pgm16(&path).unwrap();
        assert_eq!(back.dim(), (12, 8));
        let peak = 95.0;
        for (a, b) in back.iter().zip(map.iter()) {
            assert!((a - b / peak).abs() < 1.0 / 65535.0);
        }
    }

    #[test]
    fn csv_map_round_trip_is_exact() {
        let dir = scratch_dir();
        let map = Array2::from_shape_fn((5, 7), |(iy, ix)| (iy as f64 + 0.125) * (ix as f64 - 2.5e-9));
        let path = dir.join("map.csv");
        write_csv_map(&path, &map, 0.5e-9, &["config_hash=abc123"]).unwrap();
        let (back, pixel) = read_csv_map(&path).unwrap();
        assert_eq!(pixel, 0.5e-9);
        assert_eq!(back, map);
    }

    #[test]
    fn mfp_csv_round_trip() {
        let dir = scratch_dir();
        let table = MfpTable::default();
        let path = dir.join("mfp.csv");
        write_mfp_csv(&path, &table).unwrap();
        let back = read_mfp_csv(&path).unwrap();
        assert_eq!(back.entries(), table.entries());
    }

    #[test]
    fn pbm_encodes_opaque_as_black() {
        let dir = scratch_dir();
        let mut map = Array2::zeros((2, 10));
        map[[0, 0]] = 1.0;
        map[[1, 9]] = 1.0;
        let support = Array2::from_elem((2, 10), true);
        let element =
            DiffractiveElement::new(map, support, 40e-9, ElementKind::Binary).unwrap();
        let path = dir.join("e.pbm");
        write_pbm(&path, &element, &[]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let raster_start = bytes.len() - 4; // 2 rows x 2 bytes
        // row 0: pixel 0 open -> bit clear, rest set: 0111_1111 1100_0000
        assert_eq!(bytes[raster_start], 0b0111_1111);
        assert_eq!(bytes[raster_start + 1], 0b1100_0000);
        // row 1: pixels 0-8 opaque, pixel 9 open, then zero padding
        assert_eq!(bytes[raster_start + 2], 0b1111_1111);
        assert_eq!(bytes[raster_start + 3], 0b1000_0000);
    }
}
