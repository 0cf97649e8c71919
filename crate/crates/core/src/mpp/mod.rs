//! Marked point processes: sampling, thinning, empirical averages, the
//! capacity-density estimator and the good/bad hole decomposition.

mod decomposition;
mod neighbors;
mod process;

pub use decomposition::{
    decomposition_diagnostics, good_bad_decompose, good_bad_decompose_modulated, DiagnosticsRow,
    GoodBadDecomposition, GoodHole, InvariantReport,
};
pub use neighbors::NeighborIndex;
pub use process::{
    close_flags, sample_process, sample_process_with, GeneratorSpec, MarkLaw, SampleOptions,
    WeightedShape,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::HoleShape;
use crate::numerics::Aabb;
use crate::real::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkedPoint {
    pub z: Vec3<f64>,
    pub shape: HoleShape<f64>,
    /// Circumradius of `shape`.
    pub rho: f64,
    pub cap: f64,
}

impl MarkedPoint {
    /// Point with `rho` and `cap` derived from the shape (`cap` via
    /// [`crate::capacity::mark_capacity`] at `n` nodes for non-balls).
    pub fn new(z: Vec3<f64>, shape: HoleShape<f64>, n: usize) -> Result<Self> {
        let cap = crate::capacity::mark_capacity(&shape, n)?.value;
        Ok(MarkedPoint {
            z,
            rho: shape.circumradius(),
            shape,
            cap,
        })
    }
}

/// A finite admissible marked point set in a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MppRealization {
    pub window: Aabb<f64>,
    /// `None` for hand-built realizations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    pub seed: u64,
    /// Grid resolution used for non-ball capacities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_resolution: Option<usize>,
    pub points: Vec<MarkedPoint>,
}

impl MppRealization {
    pub fn from_points(window: Aabb<f64>, points: Vec<MarkedPoint>) -> Result<Self> {
        let r = MppRealization {
            window,
            generator: None,
            seed: 0,
            cap_resolution: None,
            points,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn positions(&self) -> Vec<Vec3<f64>> {
        self.points.iter().map(|p| p.z).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks distinct positions, `rho = circumradius(shape)` and `cap >= 0`.
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        for (i, p) in self.points.iter().enumerate() {
            p.shape.validate()?;
            if p.rho != p.shape.circumradius() {
                return Err(Error::domain(format!(
                    "point {i}: rho {} differs from circumradius",
                    p.rho
                )));
            }
            if !(p.cap >= 0.0 && p.cap.is_finite()) {
                return Err(Error::domain(format!(
                    "point {i}: capacity {} is not a finite nonnegative value",
                    p.cap
                )));
            }
            if !p.z.iter().all(|c| c.is_finite()) {
                return Err(Error::domain(format!("point {i}: non-finite position")));
            }
        }
        let mut order: Vec<usize> = (0..self.points.len()).collect();
        order.sort_by(|&a, &b| {
            let (za, zb) = (self.points[a].z, self.points[b].z);
            za.partial_cmp(&zb).expect("finite")
        });
        for w in order.windows(2) {
            if self.points[w[0]].z == self.points[w[1]].z {
                return Err(Error::domain(format!(
                    "points {} and {} share a position",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    fn with_points(&self, points: Vec<MarkedPoint>) -> Self {
        MppRealization {
            window: self.window,
            generator: self.generator.clone(),
            seed: self.seed,
            cap_resolution: self.cap_resolution,
            points,
        }
    }

    /// Same points observed through another window; points outside it still
    /// count as neighbours for thinning and the decomposition.
    pub fn with_window(&self, window: Aabb<f64>) -> Self {
        MppRealization {
            window,
            ..self.clone()
        }
    }

    /// Points with `z` in `region` (half-open), same metadata.
    pub fn restrict(&self, region: &Aabb<f64>) -> Self {
        self.with_points(
            self.points
                .iter()
                .filter(|p| region.contains_half_open(p.z))
                .cloned()
                .collect(),
        )
    }
}

/// Splits a realization into `T_δ` (points with a distinct neighbour at
/// distance `< δ`) and `T^δ` (the rest). Order is preserved in both parts.
pub fn thin(real: &MppRealization, delta: f64) -> Result<(MppRealization, MppRealization)> {
    let (close, far) = thin_indices(real, delta)?;
    let pick =
        |idx: &[usize]| real.with_points(idx.iter().map(|&i| real.points[i].clone()).collect());
    Ok((pick(&close), pick(&far)))
}

/// Index form of [`thin`].
pub fn thin_indices(real: &MppRealization, delta: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!(
            "thinning distance must be positive, got {delta}"
        )));
    }
    let flags = close_flags(&real.positions(), delta);
    let (mut close, mut far) = (Vec::new(), Vec::new());
    for (i, c) in flags.into_iter().enumerate() {
        if c {
            close.push(i)
        } else {
            far.push(i)
        }
    }
    Ok((close, far))
}

/// `|A|⁻¹ Σ_{z ∈ A} weight(cap_z, ρ_z)` over points in the half-open box `A`.
pub fn empirical_average(
    real: &MppRealization,
    weight: impl Fn(f64, f64) -> f64,
    region: &Aabb<f64>,
) -> Result<f64> {
    let vol = region.volume();
    if !(vol > 0.0) {
        return Err(Error::domain(
            "empirical average over a region of zero volume",
        ));
    }
    let sum: f64 = real
        .points
        .iter()
        .filter(|p| region.contains_half_open(p.z))
        .map(|p| weight(p.cap, p.rho))
        .sum();
    Ok(sum / vol)
}

/// Capacity density `|W|⁻¹ Σ_{z ∈ W} cap_z` of the realization's window.
pub fn estimate_c0(real: &MppRealization) -> f64 {
    empirical_average(real, |k, _| k, &real.window).unwrap_or(0.0)
}

/// Seed of realization `i` in a study with base seed `base`: the SplitMix64
/// finaliser applied to `base + (i + 1)·0x9E3779B97F4A7C15` (wrapping).
pub fn mix64(base: u64, i: u64) -> u64 {
    let mut z = base.wrapping_add(i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
