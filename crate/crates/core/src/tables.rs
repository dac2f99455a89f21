//! Voltage-indexed tables: eigendecompositions of the generator, the derived
//! per-timestep transition matrices, and raw transition rates.
//!
//! # Binary table format
//!
//! All fields little-endian:
//!
//! | field    | type     | notes                    |
//! |----------|----------|--------------------------|
//! | magic    | 4 bytes  | `MCXT`                   |
//! | version  | u32      | 1                        |
//! | vmin     | f64      | mV                       |
//! | dv       | f64      | mV                       |
//! | count    | u32      | number of grid voltages  |
//! | nstates  | u32      | 9                        |
//!
//! followed by `count` records, each holding the 9 eigenvalues as `(re, im)`
//! f64 pairs, then `S` as 81 `(re, im)` pairs in column-major order, then
//! `S⁻¹` likewise.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use num_complex::Complex;
use rayon::prelude::*;

use crate::eig::{decompose, exp_via_eig, CMatrix, EigError, EigenDecomposition};
use crate::model::{assemble_full, eval_rates_unchecked, Mat9, RateSet, NSTATES};
use crate::scalar::{precision_tol, Real};

pub const MAGIC: &[u8; 4] = b"MCXT";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 4 + 4;
pub const RECORD_LEN: usize = NSTATES * 16 + 2 * NSTATES * NSTATES * 16;

/// Reconstruction tolerance for tabulated decompositions, relative to
/// `max(1, ‖A‖_F)` (for `f64`).
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Allowed deviation of a transition-matrix column sum from one (for `f64`).
pub const COLUMN_SUM_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("invalid voltage grid: {0}")]
    InvalidGrid(String),
    #[error("eigendecomposition failed at Vm = {voltage} mV: {source}")]
    Eigen { voltage: f64, source: EigError },
    #[error("decomposition at Vm = {voltage} mV has residual {residual:e}")]
    Residual { voltage: f64, residual: f64 },
    #[error("transition matrix at Vm = {voltage} mV has column sum off by {deviation:e}")]
    ColumnSum { voltage: f64, deviation: f64 },
    #[error("invalid time step {0}")]
    InvalidStep(f64),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a table file (bad magic)")]
    BadMagic,
    #[error("unsupported table version {0}")]
    UnsupportedVersion(u32),
    #[error("table has {0} states, expected 9")]
    StateCount(u32),
    #[error("table file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("table file has {0} trailing bytes")]
    TrailingBytes(usize),
}

/// Uniform grid `vmin + j·dv`, `j = 0..count`. `vmax` is the last grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoltageGrid {
    vmin: f64,
    vmax: f64,
    dv: f64,
    count: usize,
}

impl VoltageGrid {
    pub const DEFAULT_VMIN: f64 = -100.0;
    pub const DEFAULT_VMAX: f64 = 70.0;
    pub const DEFAULT_DV: f64 = 0.01;

    /// Grid covering `[vmin, vmax]` with spacing `dv`; the upper end is
    /// truncated to the last whole step.
    pub fn new(vmin: f64, vmax: f64, dv: f64) -> Result<Self, TableError> {
        if !(vmin.is_finite() && vmax.is_finite() && dv.is_finite()) {
            return Err(TableError::InvalidGrid("bounds and step must be finite".into()));
        }
        if dv <= 0.0 {
            return Err(TableError::InvalidGrid(format!("step must be positive, got {dv}")));
        }
        if vmax < vmin {
            return Err(TableError::InvalidGrid(format!("vmax {vmax} < vmin {vmin}")));
        }
        // tolerate representation error in (vmax - vmin) / dv
        let steps = ((vmax - vmin) / dv + 1e-9).floor();
        if steps >= u32::MAX as f64 {
            return Err(TableError::InvalidGrid("too many grid points".into()));
        }
        Self::from_count(vmin, dv, steps as usize + 1)
    }

    pub fn from_count(vmin: f64, dv: f64, count: usize) -> Result<Self, TableError> {
        if count == 0 {
            return Err(TableError::InvalidGrid("empty grid".into()));
        }
        if !(dv > 0.0) || !vmin.is_finite() {
            return Err(TableError::InvalidGrid(format!("bad grid origin/step {vmin}/{dv}")));
        }
        Ok(VoltageGrid {
            vmin,
            vmax: vmin + (count - 1) as f64 * dv,
            dv,
            count,
        })
    }

    pub fn with_step(dv: f64) -> Result<Self, TableError> {
        Self::new(Self::DEFAULT_VMIN, Self::DEFAULT_VMAX, dv)
    }

    pub fn vmin(&self) -> f64 {
        self.vmin
    }
    pub fn vmax(&self) -> f64 {
        self.vmax
    }
    pub fn dv(&self) -> f64 {
        self.dv
    }
    pub fn len(&self) -> usize {
        self.count
    }
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn voltage(&self, j: usize) -> f64 {
        self.vmin + j as f64 * self.dv
    }

    /// Index of the nearest grid voltage, ties rounded away from zero and
    /// out-of-range potentials clamped to the end points.
    #[inline]
    pub fn lookup(&self, vm: f64) -> usize {
        let x = ((vm - self.vmin) / self.dv).round();
        if x < 0.0 {
            log::debug!("Vm = {vm} mV below table range, clamped");
            0
        } else if x > (self.count - 1) as f64 {
            log::debug!("Vm = {vm} mV above table range, clamped");
            self.count - 1
        } else {
            x as usize
        }
    }
}

impl Default for VoltageGrid {
    fn default() -> Self {
        Self::with_step(Self::DEFAULT_DV).expect("default grid is valid")
    }
}

/// Eigendecompositions of the full generator at every grid voltage.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenTable<T> {
    pub grid: VoltageGrid,
    pub entries: Vec<EigenDecomposition<T>>,
}

pub fn build_eigen_table<T: Real>(grid: VoltageGrid) -> Result<EigenTable<T>, TableError> {
    let tol = precision_tol::<T>(RESIDUAL_TOL);
    let entries = (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let voltage = grid.voltage(j);
            let a = assemble_full(&eval_rates_unchecked(T::lit(voltage)));
            let e = decompose(&a).map_err(|source| TableError::Eigen { voltage, source })?;
            let residual = e.residual(&a);
            if !(residual <= tol * a.frobenius().max(T::one())) {
                return Err(TableError::Residual {
                    voltage,
                    residual: residual.as_f64(),
                });
            }
            Ok(e)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EigenTable { grid, entries })
}

impl<T: Real> EigenTable<T> {
    /// Largest relative reconstruction residual over the grid, with the
    /// voltage where it occurs.
    pub fn worst_residual(&self) -> (f64, f64) {
        self.entries
            .par_iter()
            .enumerate()
            .map(|(j, e)| {
                let v = self.grid.voltage(j);
                let a = assemble_full(&eval_rates_unchecked(T::lit(v)));
                let r = e.residual(&a) / a.frobenius().max(T::one());
                (r.as_f64(), v)
            })
            .reduce(|| (0.0, f64::NAN), |a, b| if b.0 > a.0 { b } else { a })
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.entries.len() * RECORD_LEN
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut buf = Vec::with_capacity(self.encoded_len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.grid.vmin.to_le_bytes());
        buf.extend_from_slice(&self.grid.dv.to_le_bytes());
        buf.extend_from_slice(&(self.grid.count as u32).to_le_bytes());
        buf.extend_from_slice(&(NSTATES as u32).to_le_bytes());
        let mut put = |z: Complex<T>| {
            buf.extend_from_slice(&z.re.as_f64().to_le_bytes());
            buf.extend_from_slice(&z.im.as_f64().to_le_bytes());
        };
        for e in &self.entries {
            for &z in &e.values {
                put(z);
            }
            for m in [&e.vectors, &e.inverse] {
                for j in 0..NSTATES {
                    for i in 0..NSTATES {
                        put(m[(i, j)]);
                    }
                }
            }
        }
        w.write_all(&buf)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, TableError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::decode(&bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TableError> {
        if bytes.len() < HEADER_LEN {
            if bytes.len() >= 4 && &bytes[..4] != MAGIC {
                return Err(TableError::BadMagic);
            }
            return Err(TableError::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(TableError::BadMagic);
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(TableError::UnsupportedVersion(version));
        }
        let vmin = f64_at(8);
        let dv = f64_at(16);
        let count = u32_at(24) as usize;
        let nstates = u32_at(28);
        if nstates as usize != NSTATES {
            return Err(TableError::StateCount(nstates));
        }
        let expected = HEADER_LEN + count * RECORD_LEN;
        if bytes.len() < expected {
            return Err(TableError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(TableError::TrailingBytes(bytes.len() - expected));
        }
        let grid = VoltageGrid::from_count(vmin, dv, count)?;
        let mut off = HEADER_LEN;
        let mut next = || {
            let z = Complex::new(T::lit(f64_at(off)), T::lit(f64_at(off + 8)));
            off += 16;
            z
        };
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let values: [Complex<T>; NSTATES] = std::array::from_fn(|_| next());
            let mut mats = [CMatrix::<T, NSTATES>::zeros(); 2];
            for m in mats.iter_mut() {
                for j in 0..NSTATES {
                    for i in 0..NSTATES {
                        m[(i, j)] = next();
                    }
                }
            }
            entries.push(EigenDecomposition {
                values,
                vectors: mats[0],
                inverse: mats[1],
            });
        }
        Ok(EigenTable { grid, entries })
    }
}

/// Writes the table atomically: data goes to a sibling temporary file that is
/// renamed into place, so a failed write leaves no partial file at `path`.
pub fn save_table<T: Real>(table: &EigenTable<T>, path: &Path) -> Result<(), TableError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    let result = (|| {
        let f = fs::File::create(&tmp)?;
        let mut w = io::BufWriter::new(f);
        table.write_to(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn load_table<T: Real>(path: &Path) -> Result<EigenTable<T>, TableError> {
    let bytes = fs::read(path)?;
    EigenTable::decode(&bytes)
}

/// Transition matrices `T_j = S_j exp(D_j dt) S_j⁻¹` for one time step.
#[derive(Clone, Debug)]
pub struct StepperTable<T> {
    pub grid: VoltageGrid,
    pub dt: T,
    pub matrices: Vec<Mat9<T>>,
}

pub fn build_stepper<T: Real>(table: &EigenTable<T>, dt: T) -> Result<StepperTable<T>, TableError> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(TableError::InvalidStep(dt.as_f64()));
    }
    let tol = precision_tol::<T>(COLUMN_SUM_TOL);
    let grid = table.grid;
    let matrices = table
        .entries
        .par_iter()
        .enumerate()
        .map(|(j, e)| {
            let voltage = grid.voltage(j);
            let t = exp_via_eig(e, dt).map_err(|source| TableError::Eigen { voltage, source })?;
            let deviation = t
                .column_sums()
                .iter()
                .fold(T::zero(), |m, &s| m.max((s - T::one()).abs()));
            if !(deviation <= tol) {
                return Err(TableError::ColumnSum {
                    voltage,
                    deviation: deviation.as_f64(),
                });
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StepperTable { grid, dt, matrices })
}

impl<T: Real> StepperTable<T> {
    #[inline]
    pub fn lookup(&self, vm: T) -> &Mat9<T> {
        &self.matrices[self.grid.lookup(vm.as_f64())]
    }
}

/// Transition rates sampled on a voltage grid.
#[derive(Clone, Debug)]
pub struct RateTable<T> {
    pub grid: VoltageGrid,
    pub rates: Vec<RateSet<T>>,
}

impl<T: Real> RateTable<T> {
    pub fn build(grid: VoltageGrid) -> Self {
        let rates = (0..grid.len())
            .map(|j| eval_rates_unchecked(T::lit(grid.voltage(j))))
            .collect();
        RateTable { grid, rates }
    }

    #[inline]
    pub fn lookup(&self, vm: T) -> &RateSet<T> {
        &self.rates[self.grid.lookup(vm.as_f64())]
    }
}
