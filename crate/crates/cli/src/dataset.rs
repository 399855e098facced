//! Binary channel dataset ("NFCH").
//!
//! Layout, little-endian: magic `NFCH`, version `u16`, `N u32`, `K u32`,
//! `count u64`, flags `u8` (bit 0: measurement pairs present). Each sample
//! holds `K·N` complex values (re, im interleaved, column-major by user) and,
//! when flagged, `M u32`, `M` observations and the `M×N` sensing matrix in
//! row-major order.

use std::io::{Read, Write};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};
use xlmimo_core::{CMat, CVec, Complex64};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"NFCH";
pub const VERSION: u16 = 1;
const FLAG_MEASUREMENTS: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Measured {
    pub y: CVec,
    pub sensing: Arc<CMat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// N×K, column k is user k.
    pub h: CMat,
    pub measured: Option<Measured>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub k: usize,
    pub has_measurements: bool,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(n: usize, k: usize, has_measurements: bool) -> Self {
        Self { n, k, has_measurements, samples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, sample: Sample) -> CliResult<()> {
        if sample.h.shape() != (self.n, self.k) {
            return Err(CliError::Data(format!(
                "sample channel is {:?}, dataset expects {}×{}",
                sample.h.shape(),
                self.n,
                self.k
            )));
        }
        match (&sample.measured, self.has_measurements) {
            (Some(m), true) => {
                if m.sensing.ncols() != self.n || m.sensing.nrows() != m.y.len() {
                    return Err(CliError::Data("observation and sensing dimensions disagree".into()));
                }
            }
            (None, false) => {}
            _ => return Err(CliError::Data("measurement presence differs from the dataset flag".into())),
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> CliResult<()> {
        w.write_all(MAGIC)?;
        w.write_u16::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(self.n as u32)?;
        w.write_u32::<LittleEndian>(self.k as u32)?;
        w.write_u64::<LittleEndian>(self.samples.len() as u64)?;
        w.write_u8(if self.has_measurements { FLAG_MEASUREMENTS } else { 0 })?;
        for s in &self.samples {
            for z in s.h.iter() {
                write_c(&mut w, *z)?;
            }
            if let Some(m) = &s.measured {
                w.write_u32::<LittleEndian>(m.y.len() as u32)?;
                for z in m.y.iter() {
                    write_c(&mut w, *z)?;
                }
                for i in 0..m.sensing.nrows() {
                    for j in 0..m.sensing.ncols() {
                        write_c(&mut w, m.sensing[(i, j)])?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        buf
    }

    /// Parses a dataset. Consecutive samples with equal sensing matrices share
    /// one allocation.
    pub fn read<R: Read>(mut r: R) -> CliResult<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(CliError::Data("not an NFCH dataset (bad magic)".into()));
        }
        let version = r.read_u16::<LittleEndian>().map_err(truncated)?;
        if version != VERSION {
            return Err(CliError::Data(format!("unsupported dataset version {version}")));
        }
        let n = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let k = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let count = r.read_u64::<LittleEndian>().map_err(truncated)?;
        let flags = r.read_u8().map_err(truncated)?;
        if flags & !FLAG_MEASUREMENTS != 0 {
            return Err(CliError::Data(format!("unknown dataset flags {flags:#04x}")));
        }
        if n == 0 || k == 0 {
            return Err(CliError::Data(format!("degenerate dataset dimensions N={n}, K={k}")));
        }
        let mut ds = Dataset::new(n, k, flags & FLAG_MEASUREMENTS != 0);
        let mut last: Option<Arc<CMat>> = None;
        for _ in 0..count {
            let mut h = CMat::zeros(n, k);
            for z in h.iter_mut() {
                *z = read_c(&mut r)?;
            }
            let measured = if ds.has_measurements {
                let m = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
                if m == 0 || m > n {
                    return Err(CliError::Data(format!("measurement count {m} outside [1, {n}]")));
                }
                let mut y = CVec::zeros(m);
                for z in y.iter_mut() {
                    *z = read_c(&mut r)?;
                }
                let mut a = CMat::zeros(m, n);
                for i in 0..m {
                    for j in 0..n {
                        a[(i, j)] = read_c(&mut r)?;
                    }
                }
                let sensing = match &last {
                    Some(prev) if **prev == a => prev.clone(),
                    _ => Arc::new(a),
                };
                last = Some(sensing.clone());
                Some(Measured { y, sensing })
            } else {
                None
            };
            ds.samples.push(Sample { h, measured });
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(CliError::Data("trailing bytes after the last sample".into()));
        }
        Ok(ds)
    }

    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::read(std::io::BufReader::new(file))
    }
}

fn truncated(e: std::io::Error) -> CliError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        CliError::Data("dataset is truncated".into())
    } else {
        e.into()
    }
}

fn write_c<W: Write>(w: &mut W, z: Complex64) -> std::io::Result<()> {
    w.write_f64::<LittleEndian>(z.re)?;
    w.write_f64::<LittleEndian>(z.im)
}

fn read_c<R: Read>(r: &mut R) -> CliResult<Complex64> {
    let re = r.read_f64::<LittleEndian>().map_err(truncated)?;
    let im = r.read_f64::<LittleEndian>().map_err(truncated)?;
    Ok(Complex64::new(re, im))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn round_trip_shares_sensing() {
        let a = Arc::new(CMat::from_fn(2, 3, |i, j| c(i as f64, j as f64)));
        let mut ds = Dataset::new(3, 1, true);
        for s in 0..3 {
            ds.push(Sample {
                h: CMat::from_fn(3, 1, |i, _| c(s as f64, i as f64)),
                measured: Some(Measured { y: CVec::from_element(2, c(1.0, -1.0)), sensing: a.clone() }),
            })
            .unwrap();
        }
        let back = Dataset::read(ds.to_bytes().as_slice()).unwrap();
        assert_eq!(back, ds);
        let s0 = &back.samples[0].measured.as_ref().unwrap().sensing;
        let s2 = &back.samples[2].measured.as_ref().unwrap().sensing;
        assert!(Arc::ptr_eq(s0, s2));
    }

    #[test]
    fn header_only_file() {
        let ds = Dataset::new(4, 2, false);
        let bytes = ds.to_bytes();
        assert_eq!(bytes.len(), 4 + 2 + 4 + 4 + 8 + 1);
        assert_eq!(Dataset::read(bytes.as_slice()).unwrap(), ds);
    }

    #[test]
    fn column_major_by_user() {
        let mut ds = Dataset::new(2, 2, false);
        ds.push(Sample { h: CMat::from_fn(2, 2, |i, j| c((10 * j + i) as f64, 0.0)), measured: None }).unwrap();
        let bytes = ds.to_bytes();
        let body: Vec<f64> = bytes[23..]
            .chunks(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        assert_eq!(body, vec![0.0, 0.0, 1.0, 0.0, 10.0, 0.0, 11.0, 0.0]);
    }

    #[test]
    fn corrupt_inputs_are_data_errors() {
        let mut ds = Dataset::new(2, 1, false);
        ds.push(Sample { h: CMat::zeros(2, 1), measured: None }).unwrap();
        let bytes = ds.to_bytes();
        assert!(matches!(Dataset::read(&bytes[..bytes.len() - 3]), Err(CliError::Data(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Dataset::read(bad.as_slice()), Err(CliError::Data(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(Dataset::read(extra.as_slice()), Err(CliError::Data(_))));
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
