//! Little-endian binary persistence for offline artifacts.
//!
//! Every file starts with an 8-byte magic string, a format version, and a
//! kind tag, followed by a kind-specific payload. Integers are stored as
//! little-endian `u64`, floats as little-endian `f64` bit patterns, and
//! matrices column-major behind a `(rows, cols)` header — so round trips
//! are bitwise exact, including NaN columns of diverged trajectories.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dynsys::{Trajectory, TrajectoryStatus};
use crate::error::{Error, Result};
use crate::nn::{Activation, FeatureStats, NetworkModel};
use crate::pod::{ReducedBasis, SnapshotSet};

const MAGIC: &[u8; 8] = b"ROMKIT\0\0";
const FORMAT_VERSION: u64 = 1;

/// Payload tag stored in the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
enum Kind {
    Matrix = 1,
    Vector = 2,
    Trajectory = 3,
    Basis = 4,
    Snapshots = 5,
    Network = 6,
}

impl Kind {
    fn from_tag(tag: u64) -> Result<Kind> {
        Ok(match tag {
            1 => Kind::Matrix,
            2 => Kind::Vector,
            3 => Kind::Trajectory,
            4 => Kind::Basis,
            5 => Kind::Snapshots,
            6 => Kind::Network,
            other => return Err(Error::Format(format!("unknown payload kind {other}"))),
        })
    }
}

/// Guard against absurd dimensions from corrupt headers before allocating.
const MAX_ELEMENTS: u64 = 1 << 33;

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_len<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    let v = read_u64(r)?;
    if v > MAX_ELEMENTS {
        return Err(Error::Format(format!("unreasonable {what} ({v}) in header")));
    }
    Ok(v as usize)
}

fn write_header<W: Write>(w: &mut W, kind: Kind) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u64(w, FORMAT_VERSION)?;
    write_u64(w, kind as u64)?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R, expected: Kind) -> Result<()> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic bytes (not a romkit artifact)".into()));
    }
    let version = read_u64(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version} (this build reads {FORMAT_VERSION})"
        )));
    }
    let kind = Kind::from_tag(read_u64(r)?)?;
    if kind != expected {
        return Err(Error::Format(format!(
            "payload is {kind:?} but {expected:?} was expected"
        )));
    }
    Ok(())
}

fn write_matrix_body<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    write_u64(w, m.nrows() as u64)?;
    write_u64(w, m.ncols() as u64)?;
    for v in m.iter() {
        write_f64(w, *v)?;
    }
    Ok(())
}

fn read_matrix_body<R: Read>(r: &mut R) -> Result<DMatrix<f64>> {
    let rows = read_len(r, "row count")?;
    let cols = read_len(r, "column count")?;
    if (rows as u64).saturating_mul(cols as u64) > MAX_ELEMENTS {
        return Err(Error::Format(format!("unreasonable matrix size {rows} x {cols}")));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(read_f64(r)?);
    }
    Ok(DMatrix::from_vec(rows, cols, data))
}

fn write_vector_body<W: Write>(w: &mut W, v: &DVector<f64>) -> Result<()> {
    write_u64(w, v.len() as u64)?;
    for x in v.iter() {
        write_f64(w, *x)?;
    }
    Ok(())
}

fn read_vector_body<R: Read>(r: &mut R) -> Result<DVector<f64>> {
    let len = read_len(r, "vector length")?;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(read_f64(r)?);
    }
    Ok(DVector::from_vec(data))
}

// --- Stream-level writers/readers ----------------------------------------

pub fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    write_header(w, Kind::Matrix)?;
    write_matrix_body(w, m)
}

pub fn read_matrix<R: Read>(r: &mut R) -> Result<DMatrix<f64>> {
    read_header(r, Kind::Matrix)?;
    read_matrix_body(r)
}

pub fn write_vector<W: Write>(w: &mut W, v: &DVector<f64>) -> Result<()> {
    write_header(w, Kind::Vector)?;
    write_vector_body(w, v)
}

pub fn read_vector<R: Read>(r: &mut R) -> Result<DVector<f64>> {
    read_header(r, Kind::Vector)?;
    read_vector_body(r)
}

pub fn write_trajectory<W: Write>(w: &mut W, traj: &Trajectory) -> Result<()> {
    write_header(w, Kind::Trajectory)?;
    write_u64(w, traj.mu.len() as u64)?;
    for &m in &traj.mu {
        write_f64(w, m)?;
    }
    // 0 encodes a converged run; s > 0 divergence at step s.
    let status = match traj.status {
        TrajectoryStatus::Converged => 0,
        TrajectoryStatus::Diverged { step } => step as u64,
    };
    write_u64(w, status)?;
    write_matrix_body(w, &traj.states)
}

pub fn read_trajectory<R: Read>(r: &mut R) -> Result<Trajectory> {
    read_header(r, Kind::Trajectory)?;
    let n_mu = read_len(r, "parameter count")?;
    let mut mu = Vec::with_capacity(n_mu);
    for _ in 0..n_mu {
        mu.push(read_f64(r)?);
    }
    let status = match read_u64(r)? {
        0 => TrajectoryStatus::Converged,
        step => TrajectoryStatus::Diverged { step: step as usize },
    };
    let states = read_matrix_body(r)?;
    Ok(Trajectory { states, mu, status })
}

pub fn write_basis<W: Write>(w: &mut W, basis: &ReducedBasis) -> Result<()> {
    write_header(w, Kind::Basis)?;
    write_vector_body(w, &basis.offset)?;
    write_matrix_body(w, &basis.basis)?;
    write_vector_body(w, &basis.singular_values)
}

pub fn read_basis<R: Read>(r: &mut R) -> Result<ReducedBasis> {
    read_header(r, Kind::Basis)?;
    let offset = read_vector_body(r)?;
    let basis = read_matrix_body(r)?;
    let singular_values = read_vector_body(r)?;
    if basis.nrows() != offset.len() {
        return Err(Error::Format(format!(
            "basis has {} rows but the offset has length {}",
            basis.nrows(),
            offset.len()
        )));
    }
    Ok(ReducedBasis { offset, basis, singular_values })
}

pub fn write_snapshots<W: Write>(w: &mut W, snaps: &SnapshotSet) -> Result<()> {
    write_header(w, Kind::Snapshots)?;
    write_matrix_body(w, &snaps.states)?;
    write_matrix_body(w, &snaps.velocities)?;
    write_u64(w, snaps.times.len() as u64)?;
    for &t in &snaps.times {
        write_f64(w, t)?;
    }
    write_u64(w, snaps.params.len() as u64)?;
    for mu in &snaps.params {
        write_u64(w, mu.len() as u64)?;
        for &m in mu {
            write_f64(w, m)?;
        }
    }
    Ok(())
}

pub fn read_snapshots<R: Read>(r: &mut R) -> Result<SnapshotSet> {
    read_header(r, Kind::Snapshots)?;
    let states = read_matrix_body(r)?;
    let velocities = read_matrix_body(r)?;
    let n_times = read_len(r, "time count")?;
    let mut times = Vec::with_capacity(n_times);
    for _ in 0..n_times {
        times.push(read_f64(r)?);
    }
    let n_params = read_len(r, "parameter count")?;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let n_mu = read_len(r, "parameter length")?;
        let mut mu = Vec::with_capacity(n_mu);
        for _ in 0..n_mu {
            mu.push(read_f64(r)?);
        }
        params.push(mu);
    }
    if states.shape() != velocities.shape() || states.ncols() != n_times * n_params {
        return Err(Error::Format(format!(
            "inconsistent snapshot shapes: states {:?}, velocities {:?}, {} times x {} parameters",
            states.shape(),
            velocities.shape(),
            n_times,
            n_params
        )));
    }
    Ok(SnapshotSet { states, velocities, times, params })
}

pub fn write_network<W: Write>(w: &mut W, model: &NetworkModel) -> Result<()> {
    write_header(w, Kind::Network)?;
    write_u64(w, model.widths.len() as u64)?;
    for &width in &model.widths {
        write_u64(w, width as u64)?;
    }
    let activation = match model.activation {
        Activation::ReLU => 0,
        Activation::Identity => 1,
    };
    write_u64(w, activation)?;
    for weight in &model.weights {
        write_matrix_body(w, weight)?;
    }
    for bias in &model.biases {
        write_vector_body(w, bias)?;
    }
    write_vector_body(w, &model.input_stats.mean)?;
    write_vector_body(w, &model.input_stats.std)?;
    write_vector_body(w, &model.output_stats.mean)?;
    write_vector_body(w, &model.output_stats.std)
}

pub fn read_network<R: Read>(r: &mut R) -> Result<NetworkModel> {
    read_header(r, Kind::Network)?;
    let n_widths = read_len(r, "width count")?;
    let mut widths = Vec::with_capacity(n_widths);
    for _ in 0..n_widths {
        widths.push(read_len(r, "layer width")?);
    }
    if widths.len() < 2 {
        return Err(Error::Format("network needs at least two layer widths".into()));
    }
    let activation = match read_u64(r)? {
        0 => Activation::ReLU,
        1 => Activation::Identity,
        other => return Err(Error::Format(format!("unknown activation tag {other}"))),
    };
    let n_layers = widths.len() - 1;
    let mut weights = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let m = read_matrix_body(r)?;
        if m.shape() != (widths[l + 1], widths[l]) {
            return Err(Error::Format(format!(
                "layer {} weight is {:?}, expected ({}, {})",
                l,
                m.shape(),
                widths[l + 1],
                widths[l]
            )));
        }
        weights.push(m);
    }
    let mut biases = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let b = read_vector_body(r)?;
        if b.len() != widths[l + 1] {
            return Err(Error::Format(format!(
                "layer {} bias has length {}, expected {}",
                l,
                b.len(),
                widths[l + 1]
            )));
        }
        biases.push(b);
    }
    let input_stats = FeatureStats { mean: read_vector_body(r)?, std: read_vector_body(r)? };
    let output_stats = FeatureStats { mean: read_vector_body(r)?, std: read_vector_body(r)? };
    if input_stats.mean.len() != widths[0]
        || input_stats.std.len() != widths[0]
        || output_stats.mean.len() != *widths.last().unwrap()
        || output_stats.std.len() != *widths.last().unwrap()
    {
        return Err(Error::Format("standardization stats do not match layer widths".into()));
    }
    Ok(NetworkModel { widths, weights, biases, activation, input_stats, output_stats })
}

// --- Path-level helpers ----------------------------------------------------

macro_rules! file_api {
    ($save:ident, $load:ident, $write:ident, $read:ident, $ty:ty) => {
        pub fn $save(path: &Path, value: &$ty) -> Result<()> {
            let mut w = BufWriter::new(File::create(path)?);
            $write(&mut w, value)?;
            w.flush()?;
            Ok(())
        }

        pub fn $load(path: &Path) -> Result<$ty> {
            let mut r = BufReader::new(File::open(path)?);
            $read(&mut r)
        }
    };
}

file_api!(save_matrix, load_matrix, write_matrix, read_matrix, DMatrix<f64>);
file_api!(save_vector, load_vector, write_vector, read_vector, DVector<f64>);
file_api!(save_trajectory, load_trajectory, write_trajectory, read_trajectory, Trajectory);
file_api!(save_basis, load_basis, write_basis, read_basis, ReducedBasis);
file_api!(save_snapshots, load_snapshots, write_snapshots, read_snapshots, SnapshotSet);
file_api!(save_network, load_network, write_network, read_network, NetworkModel);
