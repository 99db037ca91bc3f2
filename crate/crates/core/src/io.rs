//! On-disk block systems: one Matrix Market file per block, a TOML
//! metadata file and three right-hand-side vectors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::block::{BlockVector, ThreeFieldSystem};
use crate::error::{Error, Result};
use crate::mm::{self, Symmetry};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockMetadata {
    pub gamma: f64,
    pub theta: f64,
    pub dt: f64,
    pub n_u: usize,
    pub n_q: usize,
    pub n_p: usize,
    /// t_c, when the system comes from a consolidation problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consolidation_time: Option<f64>,
}

/// Paths of the nine files that make up a stored system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSystemFiles {
    pub k: PathBuf,
    pub a: PathBuf,
    pub p: PathBuf,
    pub q: PathBuf,
    pub b: PathBuf,
    pub metadata: PathBuf,
    pub rhs_u: PathBuf,
    pub rhs_q: PathBuf,
    pub rhs_p: PathBuf,
}

impl BlockSystemFiles {
    /// Conventional names inside `dir`: `K.mtx`, …, `metadata.toml`, `rhs_u.mtx`, ….
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        Self {
            k: d.join("K.mtx"),
            a: d.join("A.mtx"),
            p: d.join("P.mtx"),
            q: d.join("Q.mtx"),
            b: d.join("B.mtx"),
            metadata: d.join("metadata.toml"),
            rhs_u: d.join("rhs_u.mtx"),
            rhs_q: d.join("rhs_q.mtx"),
            rhs_p: d.join("rhs_p.mtx"),
        }
    }

    fn blocks(&self) -> [(&'static str, &Path); 5] {
        [
            ("K", &self.k),
            ("A", &self.a),
            ("P", &self.p),
            ("Q", &self.q),
            ("B", &self.b),
        ]
    }
}

pub fn save_block_system(
    files: &BlockSystemFiles,
    sys: &ThreeFieldSystem,
    rhs: &BlockVector,
    consolidation_time: Option<f64>,
) -> Result<()> {
    if rhs.dims() != sys.dims() {
        return Err(Error::dims("save_block_system", sys.size(), rhs.len()));
    }
    let mats = [sys.k(), sys.a(), sys.p(), sys.q(), sys.b()];
    for ((name, path), m) in files.blocks().into_iter().zip(mats) {
        // Half storage only when it reproduces the matrix bit for bit.
        let sym = if m.is_square() && m.asymmetry() == 0.0 {
            Symmetry::Symmetric
        } else {
            Symmetry::General
        };
        mm::write_matrix(path, m, sym).map_err(|e| e.in_block(name))?;
    }
    for (path, v) in [
        (&files.rhs_u, &rhs.u),
        (&files.rhs_q, &rhs.q),
        (&files.rhs_p, &rhs.p),
    ] {
        mm::write_vector(path, v)?;
    }
    let (n_u, n_q, n_p) = sys.dims();
    let meta = BlockMetadata {
        gamma: sys.gamma(),
        theta: sys.theta(),
        dt: sys.dt(),
        n_u,
        n_q,
        n_p,
        consolidation_time,
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&files.metadata, text).map_err(|e| Error::io(&files.metadata, e))
}

pub fn read_metadata(path: impl AsRef<Path>) -> Result<BlockMetadata> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Reads and validates a stored system; the metadata must agree with the
/// block shapes and γ must equal θΔt.
pub fn load_block_system(
    files: &BlockSystemFiles,
) -> Result<(ThreeFieldSystem, BlockVector, BlockMetadata)> {
    let meta = read_metadata(&files.metadata)?;
    let mut mats: Vec<SparseMatrix> = Vec::with_capacity(5);
    for (name, path) in files.blocks() {
        mats.push(mm::read_matrix(path).map_err(|e| e.in_block(name))?);
    }
    let [k, a, p, q, b]: [SparseMatrix; 5] = mats.try_into().expect("five blocks");
    let checks = [
        ("K rows", k.n_rows(), meta.n_u),
        ("A rows", a.n_rows(), meta.n_q),
        ("P rows", p.n_rows(), meta.n_p),
    ];
    for (what, got, want) in checks {
        if got != want {
            return Err(Error::Invalid(format!(
                "{what}: metadata says {want}, file has {got}"
            )));
        }
    }
    if (meta.gamma - meta.theta * meta.dt).abs() > 1e-12 * meta.gamma.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Invalid(format!(
            "metadata gamma {} differs from theta * dt = {}",
            meta.gamma,
            meta.theta * meta.dt
        )));
    }
    let sys = ThreeFieldSystem::new(k, a, p, q, b, meta.theta, meta.dt)?;
    let rhs = BlockVector::from_parts(
        mm::read_vector(&files.rhs_u)?,
        mm::read_vector(&files.rhs_q)?,
        mm::read_vector(&files.rhs_p)?,
    );
    if rhs.dims() != sys.dims() {
        return Err(Error::Invalid(format!(
            "right-hand side sizes {:?} do not match blocks {:?}",
            rhs.dims(),
            sys.dims()
        )));
    }
    Ok((sys, rhs, meta))
}
