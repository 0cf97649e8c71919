use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::grid::{Aabb, Grid};
use crate::error::{Error, Result};
use crate::real::{Real, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum NodeKind {
    Free = 0,
    Boundary = 1,
    Hole = 2,
}

/// Per-node label. Every node on the grid boundary is [`NodeKind::Boundary`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMask<T> {
    grid: Grid<T>,
    kinds: Vec<NodeKind>,
}

impl<T: Real> NodeMask<T> {
    /// Plain Dirichlet box: boundary nodes fixed, everything else free.
    pub fn dirichlet_box(grid: &Grid<T>) -> Self {
        let [nx, ny, nz] = grid.counts();
        let mut kinds = Vec::with_capacity(grid.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    kinds.push(if grid.on_boundary(i, j, k) {
                        NodeKind::Boundary
                    } else {
                        NodeKind::Free
                    });
                }
            }
        }
        NodeMask {
            grid: grid.clone(),
            kinds,
        }
    }

    /// Labels from `kind(idx)`; box-boundary nodes stay boundary.
    pub fn from_fn(grid: &Grid<T>, mut kind: impl FnMut(usize) -> NodeKind) -> Self {
        let mut m = Self::dirichlet_box(grid);
        for (idx, k) in m.kinds.iter_mut().enumerate() {
            if *k == NodeKind::Free {
                *k = kind(idx);
            }
        }
        m
    }

    /// Every node is a hole, except the box boundary.
    pub fn all_holes(grid: &Grid<T>) -> Self {
        let mut m = Self::dirichlet_box(grid);
        for kind in m.kinds.iter_mut() {
            if *kind == NodeKind::Free {
                *kind = NodeKind::Hole;
            }
        }
        m
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    #[inline]
    pub fn kind(&self, idx: usize) -> NodeKind {
        self.kinds[idx]
    }

    #[inline]
    pub fn is_free(&self, idx: usize) -> bool {
        self.kinds[idx] == NodeKind::Free
    }

    /// Relabels a node. Box-boundary nodes cannot be relabelled.
    pub fn set(&mut self, idx: usize, kind: NodeKind) {
        if self.kinds[idx] != NodeKind::Boundary {
            self.kinds[idx] = kind;
        }
    }

    /// Marks as [`NodeKind::Hole`] every non-boundary node for which `inside`
    /// holds, scanning only the nodes inside `[lo, hi]`. Returns the number of
    /// nodes of the box (boundary included) satisfying `inside`.
    pub fn mark_holes_in(
        &mut self,
        lo: Vec3<T>,
        hi: Vec3<T>,
        mut inside: impl FnMut(Vec3<T>) -> bool,
    ) -> usize {
        let ri = self.grid.axis_range(0, lo[0], hi[0]);
        let rj = self.grid.axis_range(1, lo[1], hi[1]);
        let rk = self.grid.axis_range(2, lo[2], hi[2]);
        let mut hits = 0;
        for k in rk {
            for j in rj.clone() {
                for i in ri.clone() {
                    if inside(self.grid.node(i, j, k)) {
                        hits += 1;
                        let idx = self.grid.index(i, j, k);
                        self.set(idx, NodeKind::Hole);
                    }
                }
            }
        }
        hits
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }
}

/// Node values on a grid, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    grid: Grid<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![T::zero(); grid.len()],
        }
    }

    pub fn from_values(grid: &Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_fn(grid: &Grid<T>, f: impl Fn(Vec3<T>) -> T) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.node_at(idx))).collect();
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(ScalarField {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transfer {
    /// Zero extension from the free set to the whole grid.
    Extend,
    /// Restriction of a field on the grid to the free set.
    Restrict,
}

/// Zero extension and restriction between the perforated and full domains.
///
/// On a shared grid both directions keep the values at free nodes and zero
/// everything else; they differ only in which space the caller regards the
/// result as living in.
pub fn extend_restrict<T: Real>(
    field: &ScalarField<T>,
    mask: &NodeMask<T>,
    _direction: Transfer,
) -> Result<ScalarField<T>> {
    field.grid.check_same(&mask.grid)?;
    let values = field
        .values
        .iter()
        .zip(&mask.kinds)
        .map(|(&v, &k)| if k == NodeKind::Free { v } else { T::zero() })
        .collect();
    Ok(ScalarField {
        grid: field.grid.clone(),
        values,
    })
}

/// Sidecar describing a raw field dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub grid: GridHeader,
    pub order: String,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub struct GridHeader {
    #[serde(rename = "box")]
    pub bbox: Aabb<f64>,
    pub n: [usize; 3],
}

pub const FIELD_ORDER: &str = "x-fastest";
pub const FIELD_DTYPE: &str = "f64-le";

/// Writes `<base>.json` and `<base>.bin`. Returns both paths.
pub fn write_field<T: Real>(field: &ScalarField<T>, base: &Path) -> Result<(PathBuf, PathBuf)> {
    let bb = field.grid.bbox();
    let header = FieldHeader {
        grid: GridHeader {
            bbox: Aabb {
                min: bb.min.map(|v| v.to_f64_lossy()),
                max: bb.max.map(|v| v.to_f64_lossy()),
            },
            n: field.grid.counts(),
        },
        order: FIELD_ORDER.to_string(),
        dtype: FIELD_DTYPE.to_string(),
    };
    let json_path = base.with_extension("json");
    let bin_path = base.with_extension("bin");
    fs::write(&json_path, serde_json::to_string_pretty(&header)?)?;
    let mut bytes = Vec::with_capacity(field.values.len() * 8);
    for v in &field.values {
        bytes.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    let mut f = fs::File::create(&bin_path)?;
    f.write_all(&bytes)?;
    Ok((json_path, bin_path))
}

/// Reads a dump written by [`write_field`].
pub fn read_field(base: &Path) -> Result<ScalarField<f64>> {
    let header: FieldHeader =
        serde_json::from_str(&fs::read_to_string(base.with_extension("json"))?)?;
    if header.order != FIELD_ORDER || header.dtype != FIELD_DTYPE {
        return Err(Error::config(format!(
            "unsupported field layout {}/{}",
            header.order, header.dtype
        )));
    }
    let grid = Grid::with_counts(header.grid.bbox, header.grid.n)?;
    let bytes = fs::read(base.with_extension("bin"))?;
    if bytes.len() != grid.len() * 8 {
        return Err(Error::Shape(format!(
            "binary has {} bytes, expected {}",
            bytes.len(),
            grid.len() * 8
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    ScalarField::from_values(&grid, values)
}
