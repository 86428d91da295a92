//! Matrix files (CSV and binary) and the framed wire format for complex payloads.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{CMat, Mat};

pub const MATRIX_MAGIC: &[u8; 8] = b"FEDINVM1";

pub fn cmat_to_pairs(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn cmat_from_pairs(rows: &[Vec<[f64; 2]>]) -> Result<CMat> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != c) {
        return Err(Error::Format("ragged complex matrix".into()));
    }
    Ok(CMat::from_fn(r, c, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != c) {
        return Err(Error::Format("ragged matrix".into()));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn write_matrix_csv<W: Write>(m: &Mat, w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..m.nrows() {
        out.write_record(m.row(i).iter().map(|x| format!("{x:e}")))
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(r: R) -> Result<Mat> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Format(format!("bad number {f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    mat_from_rows(&rows)
}

pub fn write_matrix_bin<W: Write>(m: &Mat, mut w: W) -> Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_matrix_bin<R: Read>(mut r: R) -> Result<Mat> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Format("not a fedinv matrix file".into()));
    }
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = read_f64(&mut r)?;
        }
    }
    Ok(m)
}

/// Picks the format from the extension: `.bin` is binary, anything else CSV.
pub fn load_matrix(path: &Path) -> Result<Mat> {
    let f = BufReader::new(File::open(path)?);
    if path.extension().is_some_and(|e| e == "bin") {
        read_matrix_bin(f)
    } else {
        read_matrix_csv(f)
    }
}

pub fn save_matrix(m: &Mat, path: &Path) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e == "bin") {
        write_matrix_bin(m, f)
    } else {
        write_matrix_csv(m, f)
    }
}

/// `u32` header length, JSON header, then interleaved little-endian re/im doubles.
pub fn write_framed<H: Serialize>(header: &H, payload: impl IntoIterator<Item = Complex64>) -> Result<Vec<u8>> {
    let head = serde_json::to_vec(header)?;
    let len = u32::try_from(head.len()).map_err(|_| Error::Format("header too large".into()))?;
    let mut out = Vec::with_capacity(4 + head.len());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&head);
    for z in payload {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    Ok(out)
}

pub fn read_framed<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, Vec<Complex64>)> {
    if bytes.len() < 4 {
        return Err(Error::Format("truncated frame".into()));
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let body = bytes.get(4..4 + len).ok_or_else(|| Error::Format("truncated header".into()))?;
    let header = serde_json::from_slice(body)?;
    let rest = &bytes[4 + len..];
    if !rest.len().is_multiple_of(16) {
        return Err(Error::Format("payload is not a whole number of complex values".into()));
    }
    let payload = rest
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok((header, payload))
}

/// Row-major values of a complex matrix.
pub fn cmat_row_major(m: &CMat) -> impl Iterator<Item = Complex64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

pub fn cmat_from_row_major(rows: usize, cols: usize, vals: &[Complex64]) -> Result<CMat> {
    if vals.len() != rows * cols {
        return Err(Error::Format(format!("expected {} values, got {}", rows * cols, vals.len())));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| vals[i * cols + j]))
}

/// Parses a JSON config, reporting the path of the offending field on error.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("at `{path}`: {}", e.into_inner()))
    })
}

pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let m = Mat::from_row_slice(2, 3, &[1.0, -2.5, 3.25e-7, 0.0, 1e300, -0.1]);
        let mut buf = Vec::new();
        write_matrix_csv(&m, &mut buf).unwrap();
        assert_eq!(read_matrix_csv(&buf[..]).unwrap(), m);
    }

    #[test]
    fn bin_round_trip() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let mut buf = Vec::new();
        write_matrix_bin(&m, &mut buf).unwrap();
        assert_eq!(&buf[..8], MATRIX_MAGIC);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(buf[24..32].try_into().unwrap()), 1.0);
        assert_eq!(f64::from_le_bytes(buf[32..40].try_into().unwrap()), 2.0);
        assert_eq!(read_matrix_bin(&buf[..]).unwrap(), m);
        assert!(read_matrix_bin(&b"NOTMAGIC"[..]).is_err());
    }

    #[test]
    fn frame_round_trip() {
        let vals = vec![Complex64::new(1.0, -1.0), Complex64::new(0.5, 2.0)];
        let bytes = write_framed(&serde_json::json!({"a": 1}), vals.clone()).unwrap();
        let (h, back): (serde_json::Value, _) = read_framed(&bytes).unwrap();
        assert_eq!(h["a"], 1);
        assert_eq!(back, vals);
        assert!(read_framed::<serde_json::Value>(&bytes[..bytes.len() - 3]).is_err());
    }
}
