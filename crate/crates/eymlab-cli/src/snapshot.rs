//! Binary snapshot of one configuration point.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field | encoding |
//! |---|---|
//! | magic | `b"EYMF"` |
//! | version | `u32` |
//! | n | `u32` |
//! | sizes | `n x u32` |
//! | lengths | `n x f64` |
//! | algebra name | `u32` byte count, UTF-8 bytes |
//! | d | `u32` |
//! | kappa | `f64` |
//! | data | `f64` blocks |
//!
//! The data blocks are, in order: one block of `num_sites` values per metric
//! component `g_ij` (`i <= j`, lexicographic), one block per potential
//! component `A_i^L` (axis major, algebra index fastest), then the
//! `C(n,2) * d` constant values of `F0` in the same `(I, L)` order. Sites run
//! row-major with the last axis fastest.

use std::io::{Read, Write};
use std::path::Path;

use eymlab::algebra::LieAlgebraData;
use eymlab::eym::Kappa;
use eymlab::fields::{FormField, MetricField, SymTensorField};
use eymlab::gauge::ConnectionField;
use eymlab::lattice::Grid;

use crate::error::CliError;

pub const MAGIC: &[u8; 4] = b"EYMF";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub g: MetricField,
    pub conn: ConnectionField,
    pub kappa: Kappa,
}

impl Snapshot {
    pub fn grid(&self) -> &Grid {
        self.g.grid()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CliError> {
        let grid = self.grid();
        let alg = self.conn.algebra();
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(grid.dim() as u32).to_le_bytes())?;
        for &s in grid.sizes() {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        for &l in grid.lengths() {
            w.write_all(&l.to_le_bytes())?;
        }
        let name = alg.name().as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(alg.dim() as u32).to_le_bytes())?;
        w.write_all(&self.kappa.value().to_le_bytes())?;
        let blocks = self.g.tensor().components().iter().chain(self.conn.potential().components());
        for block in blocks {
            for v in block {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for comp in self.conn.background().components() {
            w.write_all(&comp[0].to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CliError> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(CliError::invalid("not an EYMF snapshot"));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(CliError::invalid(format!("unsupported snapshot version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        if !(2..=4).contains(&n) {
            return Err(CliError::invalid(format!("snapshot dimension {n} not supported")));
        }
        let sizes = (0..n).map(|_| read_u32(&mut r).map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
        let lengths = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let grid = Grid::new(&sizes, &lengths)?;
        let name_len = read_u32(&mut r)? as usize;
        if name_len > 256 {
            return Err(CliError::invalid("snapshot algebra name too long"));
        }
        let mut name = vec![0u8; name_len];
        read_exact(&mut r, &mut name)?;
        let name = String::from_utf8(name).map_err(|_| CliError::invalid("snapshot algebra name is not UTF-8"))?;
        let algebra = LieAlgebraData::by_name(&name)?;
        let d = read_u32(&mut r)? as usize;
        if d != algebra.dim() {
            return Err(CliError::invalid(format!("algebra '{name}' has dimension {}, snapshot says {d}", algebra.dim())));
        }
        let kappa = Kappa::try_from(read_f64(&mut r)?)?;

        let sites = grid.num_sites();
        let mut block = |count: usize| -> Result<Vec<Vec<f64>>, CliError> {
            (0..count).map(|_| (0..sites).map(|_| read_f64(&mut r)).collect()).collect()
        };
        let g_comps = block(n * (n + 1) / 2)?;
        let a_comps = block(n * d)?;
        let m2 = n * (n - 1) / 2;
        let f0: Vec<Vec<f64>> =
            (0..m2 * d).map(|_| read_f64(&mut r).map(|v| vec![v; sites])).collect::<Result<_, _>>()?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(CliError::invalid(format!("{} trailing bytes after snapshot data", rest.len())));
        }
        let g = MetricField::new(SymTensorField::from_components(&grid, g_comps)?)?;
        let potential = FormField::from_components(&grid, 1, d, a_comps)?;
        let background = FormField::from_components(&grid, 2, d, f0)?;
        let conn = ConnectionField::new(potential, background, algebra)?;
        Ok(Snapshot { g, conn, kappa })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::invalid(format!("cannot open snapshot {}: {e}", path.display())))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), CliError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => CliError::invalid("snapshot is truncated"),
        _ => CliError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CliError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, CliError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}
