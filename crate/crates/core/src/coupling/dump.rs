//! Per-path dumps of the distance process.
//!
//! CSV: header `t,rho,coupled`, one row per recorded time.
//!
//! Binary (little endian):
//!
//! ```text
//! magic   8 bytes  "CPLPATH1"
//! n       u64      number of records
//! seed    u64
//! index   u64      path index
//! tau     f64      coupling time, NaN if censored
//! flags   u64      bit 0: censored
//! records n × (t: f64, rho: f64)
//! ```

use std::io::{self, Read, Write};

use super::PairPath;

pub const MAGIC: &[u8; 8] = b"CPLPATH1";

pub fn write_csv<W: Write>(path: &PairPath, mut w: W) -> io::Result<()> {
    writeln!(w, "t,rho,coupled")?;
    for (k, (t, r)) in path.times.iter().zip(&path.rho).enumerate() {
        writeln!(w, "{t},{r},{}", u8::from(path.coupled_at(k)))?;
    }
    Ok(())
}

pub fn write_binary<W: Write>(path: &PairPath, mut w: W) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(path.times.len() as u64).to_le_bytes())?;
    w.write_all(&path.seed.to_le_bytes())?;
    w.write_all(&path.path_index.to_le_bytes())?;
    w.write_all(&path.coupling_time.unwrap_or(f64::NAN).to_le_bytes())?;
    w.write_all(&u64::from(path.censored).to_le_bytes())?;
    for (t, r) in path.times.iter().zip(&path.rho) {
        w.write_all(&t.to_le_bytes())?;
        w.write_all(&r.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    read_u64(r).map(f64::from_bits)
}

/// Reads back a binary dump (states are not stored).
pub fn read_binary<R: Read>(mut r: R) -> io::Result<PairPath> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "not a CPLPATH1 file"));
    }
    let n = read_u64(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    let path_index = read_u64(&mut r)?;
    let tau = read_f64(&mut r)?;
    let flags = read_u64(&mut r)?;
    let mut times = Vec::with_capacity(n.min(1 << 24));
    let mut rho = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        times.push(read_f64(&mut r)?);
        rho.push(read_f64(&mut r)?);
    }
    Ok(PairPath {
        times,
        rho,
        coupling_time: (!tau.is_nan()).then_some(tau),
        censored: flags & 1 == 1,
        seed,
        path_index,
        states: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PairPath {
        PairPath {
            times: vec![0.0, 0.5, 1.0],
            rho: vec![1.0, 0.25, 0.0],
            coupling_time: Some(0.75),
            censored: false,
            seed: 42,
            path_index: 9,
            states: None,
        }
    }

    #[test]
    fn binary_roundtrip() {
        let mut buf = Vec::new();
        write_binary(&sample(), &mut buf).unwrap();
        assert_eq!(buf.len(), 48 + 3 * 16);
        assert_eq!(read_binary(&buf[..]).unwrap(), sample());
        let mut censored = sample();
        censored.coupling_time = None;
        censored.censored = true;
        buf.clear();
        write_binary(&censored, &mut buf).unwrap();
        assert_eq!(read_binary(&buf[..]).unwrap(), censored);
        buf[0] = b'X';
        assert!(read_binary(&buf[..]).is_err());
    }

    #[test]
    fn csv_marks_coupled_rows() {
        let mut buf = Vec::new();
        write_csv(&sample(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,rho,coupled\n0,1,0\n0.5,0.25,0\n1,0,1\n");
    }
}
