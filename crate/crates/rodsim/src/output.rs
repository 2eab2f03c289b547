//! Result emission: CSV streams with deterministic formatting and a
//! versioned binary snapshot of the full ensemble state.
//!
//! Floats are written with Rust's shortest round-trip `Display`, which is
//! platform-independent — two runs that compute identical bits emit
//! byte-identical files. Snapshots store every state array as little-endian
//! `f64` bits, so a write/read cycle is exact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::frames::Frames;
use crate::rod::{MaterialProperties, MaterialScalars, Rod, RodState};

/// Why an output file could not be produced or consumed.
#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a snapshot file (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: snapshot version {found} not supported (expected {expected})")]
    Version {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated or corrupt snapshot")]
    Corrupt { path: PathBuf },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    U(u64),
    I(i64),
    F(f64),
    S(String),
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::U(v) => write!(f, "{v}"),
            Value::I(v) => write!(f, "{v}"),
            Value::F(v) => write!(f, "{v}"),
            Value::S(v) => {
                debug_assert!(
                    !v.contains(',') && !v.contains('\n'),
                    "CSV cells must not need quoting: {v:?}"
                );
                write!(f, "{v}")
            }
        }
    }
}

/// A CSV file under construction: fixed header, checked column counts,
/// buffered writes.
pub struct Csv {
    path: PathBuf,
    out: BufWriter<File>,
    columns: usize,
}

impl Csv {
    pub fn create(path: impl Into<PathBuf>, header: &[&str]) -> Result<Self, OutputError> {
        let path = path.into();
        assert!(!header.is_empty(), "CSV needs at least one column");
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", header.join(",")).map_err(io_err(&path))?;
        Ok(Self {
            path,
            out,
            columns: header.len(),
        })
    }

    pub fn row(&mut self, fields: &[Value]) -> Result<(), OutputError> {
        assert_eq!(
            fields.len(),
            self.columns,
            "row arity does not match the header"
        );
        for (i, field) in fields.iter().enumerate() {
            if i > 0 {
                self.out.write_all(b",").map_err(io_err(&self.path))?;
            }
            write!(self.out, "{field}").map_err(io_err(&self.path))?;
        }
        self.out.write_all(b"\n").map_err(io_err(&self.path))
    }

    /// Flushes and closes the file.
    pub fn finish(mut self) -> Result<(), OutputError> {
        self.out.flush().map_err(io_err(&self.path))
    }
}

const SNAPSHOT_MAGIC: [u8; 8] = *b"RODSNAP\0";
const SNAPSHOT_VERSION: u32 = 1;
const SNAPSHOT_END: u64 = 0x454E_445F_534E_4150; // "END_SNAP"

struct ByteWriter {
    bytes: Vec<u8>,
}

impl ByteWriter {
    fn u32(&mut self, v: u32) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }
    fn f64_slice(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }
    fn vec3_slice(&mut self, vs: &[[f64; 3]]) {
        for v in vs {
            self.f64_slice(v);
        }
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        if end > self.bytes.len() {
            return None;
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Some(out)
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_bits(self.u64()?))
    }
    /// Length-checked before any allocation, so corrupt counts cannot OOM.
    fn f64_vec(&mut self, n: usize) -> Option<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8)?)?;
        Some(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    }
    fn vec3_vec(&mut self, n: usize) -> Option<Vec<[f64; 3]>> {
        let flat = self.f64_vec(n.checked_mul(3)?)?;
        Some(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }
}

/// Writes the full ensemble state (and the material it was built from) at a
/// given step/time. The material's derived arrays are not stored; they are
/// recomputed on load from the same inputs, which reproduces them bitwise.
pub fn write_snapshot(
    path: &Path,
    step: u64,
    time: f64,
    rods: &[Rod],
) -> Result<(), OutputError> {
    let mut w = ByteWriter { bytes: Vec::new() };
    w.bytes.extend_from_slice(&SNAPSHOT_MAGIC);
    w.u32(SNAPSHOT_VERSION);
    w.u64(step);
    w.f64(time);
    w.u64(rods.len() as u64);
    for rod in rods {
        let n = rod.state.n_elements();
        w.u64(n as u64);
        let s = rod.material.scalars;
        w.f64_slice(&[
            s.density,
            s.youngs_modulus,
            s.shear_modulus,
            s.shear_correction,
        ]);
        w.f64_slice(&rod.material.radius);
        w.f64_slice(&rod.material.rest_length);
        w.vec3_slice(&rod.state.positions);
        w.vec3_slice(&rod.state.velocities);
        for p in 0..9 {
            w.f64_slice(rod.state.directors.plane(p));
        }
        w.vec3_slice(&rod.state.angular_velocities);
    }
    w.u64(SNAPSHOT_END);
    std::fs::write(path, &w.bytes).map_err(io_err(path))
}

/// Reads a snapshot back: `(step, time, rods)`.
pub fn read_snapshot(path: &Path) -> Result<(u64, f64, Vec<Rod>), OutputError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let corrupt = || OutputError::Corrupt {
        path: path.to_path_buf(),
    };
    let mut r = ByteReader {
        bytes: &bytes,
        pos: 0,
    };
    let magic = r.take(8).ok_or_else(|| OutputError::BadMagic {
        path: path.to_path_buf(),
    })?;
    if magic != SNAPSHOT_MAGIC {
        return Err(OutputError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let version = r.u32().ok_or_else(corrupt)?;
    if version != SNAPSHOT_VERSION {
        return Err(OutputError::Version {
            path: path.to_path_buf(),
            found: version,
            expected: SNAPSHOT_VERSION,
        });
    }
    let step = r.u64().ok_or_else(corrupt)?;
    let time = r.f64().ok_or_else(corrupt)?;
    let n_rods = r.u64().ok_or_else(corrupt)?;
    let mut rods = Vec::new();
    for _ in 0..n_rods {
        let n = usize::try_from(r.u64().ok_or_else(corrupt)?).map_err(|_| corrupt())?;
        if n == 0 {
            return Err(corrupt());
        }
        let s = r.f64_vec(4).ok_or_else(corrupt)?;
        let scalars = MaterialScalars {
            density: s[0],
            youngs_modulus: s[1],
            shear_modulus: s[2],
            shear_correction: s[3],
        };
        let radius = r.f64_vec(n).ok_or_else(corrupt)?;
        let rest_length = r.f64_vec(n).ok_or_else(corrupt)?;
        let positions = r.vec3_vec(n + 1).ok_or_else(corrupt)?;
        let velocities = r.vec3_vec(n + 1).ok_or_else(corrupt)?;
        let mut planes: [Vec<f64>; 9] = Default::default();
        for plane in planes.iter_mut() {
            *plane = r.f64_vec(n).ok_or_else(corrupt)?;
        }
        let angular_velocities = r.vec3_vec(n).ok_or_else(corrupt)?;
        rods.push(Rod {
            state: RodState {
                positions,
                velocities,
                directors: Frames::from_plane_vecs(planes),
                angular_velocities,
            },
            material: MaterialProperties::new(scalars, radius, rest_length),
        });
    }
    if r.u64() != Some(SNAPSHOT_END) || r.pos != bytes.len() {
        return Err(corrupt());
    }
    Ok((step, time, rods))
}
