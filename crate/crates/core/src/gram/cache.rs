//! Binary Gram cache.
//!
//! Layout (all integers and reals little-endian):
//!
//! ```text
//! magic    8 bytes  "RKCTGRAM"
//! version  u32      1
//! n        u32      ambient dimension
//! N        u64      number of angles
//! M        u64      number of mesh points
//! gamma    f64
//! layout   u8       0 = dense, 1 = block circulant
//! kind     u8       grid kind (0 full, 1 half, 2 random, 3 lambda, 4 custom)
//! seed     u64      grid seed
//! lambda   f64      grid lambda, NaN when absent
//! hashlen  u32, then that many bytes of config hash (UTF-8)
//! angles   n = 2: N f64 angles; otherwise N × n × n f64 row-major matrices
//! mesh     M × (n-1) f64
//! data     dense: (NM)² f64 row-major; circulant: N blocks of M² f64
//! [optional] "FACT" u32 version, f64 nu, N × M² × 2 f64 lower Cholesky
//!            factors (re, im) of the per-frequency systems
//! ```

use std::io::{Read, Write};

use faer::Mat;

use crate::data::grids::{AngleGrid, DetectorMesh, GridKind};
use crate::error::{Error, Result};
use crate::geometry::Orientation;
use crate::gram::{GramData, GramMatrix, Layout};
use crate::kernels::gaussian::GaussianKernelParams;
use crate::solve::CirculantFactorization;

const MAGIC: &[u8; 8] = b"RKCTGRAM";
const VERSION: u32 = 1;
const FACT_MAGIC: &[u8; 4] = b"FACT";
const FACT_VERSION: u32 = 1;

/// A loaded cache file.
#[derive(Debug)]
pub struct GramCache {
    pub gram: GramMatrix,
    pub config_hash: String,
    pub factorization: Option<CirculantFactorization>,
}

fn kind_code(k: GridKind) -> u8 {
    match k {
        GridKind::EquiangularFull => 0,
        GridKind::EquiangularHalf => 1,
        GridKind::Random => 2,
        GridKind::LambdaMix => 3,
        GridKind::Custom => 4,
    }
}

fn kind_from(code: u8) -> Result<GridKind> {
    Ok(match code {
        0 => GridKind::EquiangularFull,
        1 => GridKind::EquiangularHalf,
        2 => GridKind::Random,
        3 => GridKind::LambdaMix,
        4 => GridKind::Custom,
        _ => return Err(Error::Format(format!("unknown grid code {code}"))),
    })
}

fn put_f64s(out: &mut impl Write, vals: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in vals {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn put_mat(out: &mut impl Write, m: &Mat<f64>) -> Result<()> {
    put_f64s(
        out,
        (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])),
    )
}

/// Writes `gram` (and optionally a circulant factorization) to `out`.
pub fn write_cache(
    out: &mut impl Write,
    gram: &GramMatrix,
    config_hash: &str,
    factorization: Option<&CirculantFactorization>,
) -> Result<()> {
    let n = gram.params.dim;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(n as u32).to_le_bytes())?;
    out.write_all(&(gram.n_angles() as u64).to_le_bytes())?;
    out.write_all(&(gram.n_mesh() as u64).to_le_bytes())?;
    out.write_all(&gram.params.gamma.to_le_bytes())?;
    out.write_all(&[match gram.layout() {
        Layout::Dense => 0u8,
        Layout::BlockCirculant => 1u8,
    }])?;
    out.write_all(&[kind_code(gram.angles.kind)])?;
    out.write_all(&gram.angles.seed.to_le_bytes())?;
    out.write_all(&gram.angles.lambda.unwrap_or(f64::NAN).to_le_bytes())?;
    out.write_all(&(config_hash.len() as u32).to_le_bytes())?;
    out.write_all(config_hash.as_bytes())?;
    if n == 2 {
        put_f64s(out, gram.angles.angles.iter().copied())?;
    } else {
        for o in gram.angles.orientations() {
            put_mat(out, &o.matrix())?;
        }
    }
    for p in gram.mesh.points() {
        put_f64s(out, p.iter().copied())?;
    }
    match &gram.data {
        GramData::Dense(w) => put_mat(out, w)?,
        GramData::Circulant(blocks) => {
            for b in blocks {
                put_mat(out, b)?;
            }
        }
    }
    if let Some(f) = factorization {
        out.write_all(FACT_MAGIC)?;
        out.write_all(&FACT_VERSION.to_le_bytes())?;
        out.write_all(&f.nu().to_le_bytes())?;
        for l in f.factors() {
            put_f64s(
                out,
                (0..l.nrows())
                    .flat_map(|i| (0..l.ncols()).flat_map(move |j| [l[(i, j)].re, l[(i, j)].im])),
            )?;
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const K: usize>(&mut self) -> Result<[u8; K]> {
        let mut b = [0u8; K];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("truncated Gram cache: {e}")))?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn mat(&mut self, r: usize, c: usize) -> Result<Mat<f64>> {
        let mut vals = Vec::with_capacity(r * c);
        for _ in 0..r * c {
            vals.push(self.f64()?);
        }
        Ok(Mat::from_fn(r, c, |i, j| vals[i * c + j]))
    }
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            k => filled += k,
        }
    }
    Ok(filled)
}

/// Reads a cache written by [`write_cache`].
pub fn read_cache(input: &mut impl Read) -> Result<GramCache> {
    let mut rd = Reader { inner: input };
    if &rd.bytes::<8>()? != MAGIC {
        return Err(Error::Format("not a Gram cache (bad magic)".into()));
    }
    let version = rd.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported Gram cache version {version}"
        )));
    }
    let n = rd.u32()? as usize;
    let n_angles = rd.u64()? as usize;
    let m = rd.u64()? as usize;
    let gamma = rd.f64()?;
    let [layout] = rd.bytes::<1>()?;
    let [kind] = rd.bytes::<1>()?;
    let kind = kind_from(kind)?;
    let seed = rd.u64()?;
    let lambda = Some(rd.f64()?).filter(|l| !l.is_nan());
    let hash_len = rd.u32()? as usize;
    if hash_len > 4096 || n < 2 || n > 64 {
        return Err(Error::Format("implausible Gram cache header".into()));
    }
    let mut hash = vec![0u8; hash_len];
    rd.inner
        .read_exact(&mut hash)
        .map_err(|e| Error::Format(format!("truncated Gram cache: {e}")))?;
    let config_hash =
        String::from_utf8(hash).map_err(|_| Error::Format("config hash is not UTF-8".into()))?;
    let params = GaussianKernelParams::new(gamma, n)?;
    let grid = if n == 2 {
        let mut angles = Vec::with_capacity(n_angles);
        for _ in 0..n_angles {
            angles.push(rd.f64()?);
        }
        AngleGrid::from_angles(angles, kind, lambda, seed)?
    } else {
        let mut orientations = Vec::with_capacity(n_angles);
        for _ in 0..n_angles {
            orientations.push(Orientation::from_matrix(rd.mat(n, n)?)?);
        }
        AngleGrid::from_orientations(orientations)?
    };
    let mut points = Vec::with_capacity(m);
    for _ in 0..m {
        let mut p = Vec::with_capacity(n - 1);
        for _ in 0..n - 1 {
            p.push(rd.f64()?);
        }
        points.push(p);
    }
    let mesh = DetectorMesh::new(points)?;
    let data = match layout {
        0 => GramData::Dense(rd.mat(n_angles * m, n_angles * m)?),
        1 => {
            let mut blocks = Vec::with_capacity(n_angles);
            for _ in 0..n_angles {
                blocks.push(rd.mat(m, m)?);
            }
            GramData::Circulant(blocks)
        }
        other => return Err(Error::Format(format!("unknown layout code {other}"))),
    };
    let gram = GramMatrix {
        data,
        params,
        angles: grid,
        mesh,
    };
    let mut tag = [0u8; 4];
    let got = read_up_to(&mut rd.inner, &mut tag)?;
    let factorization = match got {
        0 => None,
        _ => {
            if got < 4 || &tag != FACT_MAGIC {
                return Err(Error::Format(
                    "unexpected trailing data in Gram cache".into(),
                ));
            }
            let fv = rd.u32()?;
            if fv != FACT_VERSION {
                return Err(Error::Format(format!(
                    "unsupported factorization section version {fv}"
                )));
            }
            let nu = rd.f64()?;
            let mut factors = Vec::with_capacity(n_angles);
            for _ in 0..n_angles {
                let mut vals = Vec::with_capacity(m * m);
                for _ in 0..m * m {
                    let re = rd.f64()?;
                    let im = rd.f64()?;
                    vals.push(faer::c64::new(re, im));
                }
                factors.push(Mat::from_fn(m, m, |i, j| vals[i * m + j]));
            }
            Some(CirculantFactorization::from_parts(nu, m, factors)?)
        }
    };
    Ok(GramCache {
        gram,
        config_hash,
        factorization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::grids::{make_angle_grid, make_mesh};
    use crate::gram::{assemble_circulant, assemble_dense};

    #[test]
    fn dense_round_trip() {
        let p = GaussianKernelParams::new(6.0, 2).unwrap();
        let g = make_angle_grid(GridKind::Random, 4, None, 2).unwrap();
        let w = assemble_dense(&p, &g, &make_mesh(5).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_cache(&mut buf, &w, "deadbeef", None).unwrap();
        let back = read_cache(&mut buf.as_slice()).unwrap();
        assert_eq!(back.config_hash, "deadbeef");
        assert!(back.factorization.is_none());
        assert_eq!((back.gram.to_dense() - w.to_dense()).norm_max(), 0.0);
        assert_eq!(back.gram.angles, g);
    }

    #[test]
    fn circulant_round_trip_with_factors() {
        let p = GaussianKernelParams::new(6.0, 2).unwrap();
        let mesh = make_mesh(4).unwrap();
        let w = assemble_circulant(&p, 6, &mesh).unwrap();
        let f = CirculantFactorization::new(&w, 0.01).unwrap();
        let mut buf = Vec::new();
        write_cache(&mut buf, &w, "h", Some(&f)).unwrap();
        let back = read_cache(&mut buf.as_slice()).unwrap();
        assert_eq!(back.gram.layout(), Layout::BlockCirculant);
        let bf = back.factorization.unwrap();
        assert_eq!(bf.nu(), 0.01);
        let y: Vec<f64> = (0..24).map(|k| k as f64).collect();
        assert_eq!(bf.solve(&y).unwrap(), f.solve(&y).unwrap());
    }

    #[test]
    fn corrupt_files_rejected() {
        assert!(matches!(
            read_cache(&mut &b"NOTAGRAM"[..]),
            Err(Error::Format(_))
        ));
        let p = GaussianKernelParams::new(1.0, 2).unwrap();
        let w = assemble_circulant(&p, 2, &make_mesh(2).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_cache(&mut buf, &w, "", None).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            read_cache(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
    }
}
