//! Matrix and image I/O.
//!
//! Two matrix formats: plain-text CSV (one node per line) and the binary
//! AFM1 format (magic `"AFM1"`, little-endian `u32` row count, `u32` column
//! count, then row-major `f64` data). Labelings are written as plain PGM
//! (P2). All writes go through a temp file and a rename.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{AfError, Result};

pub const AFM1_MAGIC: &[u8; 4] = b"AFM1";

/// Formats with 17 significant digits so the value round-trips exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    // Temp names carry pid and a counter: files differing only in extension
    // may be written concurrently from one process.
    static COUNTER: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);
    let serial = COUNTER.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let tmp = path.with_extension(format!("tmp.{}.{serial}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Atomic plain-text write (temp file + rename).
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

pub fn write_matrix_csv(path: &Path, a: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for row in a.rows() {
        let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let v = field.trim().parse::<f64>().map_err(|e| AfError::Parse {
                line: lineno + 1,
                msg: format!("{e}: {field:?}"),
            })?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(AfError::Parse {
                    line: lineno + 1,
                    msg: format!("expected {} fields, got {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(AfError::Parse { line: 1, msg: "empty matrix file".into() });
    }
    let m = rows.len();
    let n = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((m, n), flat).expect("consistent row lengths"))
}

pub fn write_matrix_afm1(path: &Path, a: &Array2<f64>) -> Result<()> {
    let (m, n) = a.dim();
    let mut bytes = Vec::with_capacity(12 + 8 * m * n);
    bytes.extend_from_slice(AFM1_MAGIC);
    bytes.extend_from_slice(&(m as u32).to_le_bytes());
    bytes.extend_from_slice(&(n as u32).to_le_bytes());
    for &x in a.iter() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_matrix_afm1(path: &Path) -> Result<Array2<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..4] != AFM1_MAGIC {
        return Err(AfError::Parse { line: 1, msg: "missing AFM1 magic".into() });
    }
    let m = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let want = 12 + 8 * m * n;
    if bytes.len() != want {
        return Err(AfError::Parse {
            line: 1,
            msg: format!("expected {want} bytes for {m}x{n}, got {}", bytes.len()),
        });
    }
    let mut flat = Vec::with_capacity(m * n);
    for chunk in bytes[12..].chunks_exact(8) {
        flat.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok(Array2::from_shape_vec((m, n), flat).expect("length checked"))
}

/// Trajectory dump: one line per sample, time first, then the state entries
/// row-major.
pub fn write_trajectory_csv(
    path: &Path,
    times: &[f64],
    states: &[crate::manifold::AssignmentMatrix],
) -> Result<()> {
    assert_eq!(times.len(), states.len(), "one time per state");
    let mut out = String::new();
    for (t, w) in times.iter().zip(states.iter()) {
        let mut fields = Vec::with_capacity(1 + w.as_array().len());
        fields.push(fmt_f64(*t));
        fields.extend(w.as_array().iter().map(|&x| fmt_f64(x)));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// One AFM1 file per sample, `sample_000000.afm` onward, in `dir`.
pub fn write_trajectory_afm1(
    dir: &Path,
    states: &[crate::manifold::AssignmentMatrix],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, w) in states.iter().enumerate() {
        write_matrix_afm1(&dir.join(format!("sample_{i:06}.afm")), w.as_array())?;
    }
    Ok(())
}

/// Plain PGM (P2) with one gray level per label.
pub fn write_pgm(path: &Path, labels: &[usize], width: usize, height: usize, maxval: usize) -> Result<()> {
    assert_eq!(labels.len(), width * height, "label count must match grid");
    let mut out = format!("P2\n{width} {height}\n{maxval}\n");
    for row in labels.chunks(width) {
        let line: Vec<String> = row.iter().map(|l| l.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}
