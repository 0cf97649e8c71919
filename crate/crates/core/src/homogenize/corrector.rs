use rayon::prelude::*;

use super::{dirichlet_potential, PerforationSpec, SolveOptions};
use crate::error::{Error, Result};
use crate::geometry::{HoleShape, Placement};
use crate::mpp::GoodBadDecomposition;
use crate::numerics::{h1_seminorm, Grid, NodeKind, NodeMask, ScalarField};
use crate::real::{dist3, norm2_3, sub3, Vec3};
use crate::DIM;

/// Capacitary potential of `B_r` in `U_R` at distance `s` from the centre:
/// `(s^{2-d} - R^{2-d}) / (r^{2-d} - R^{2-d})`, clamped to `[0, 1]`.
pub fn radial_ball_potential(s: f64, r: f64, big_r: f64) -> f64 {
    if s <= r {
        return 1.0;
    }
    if s >= big_r {
        return 0.0;
    }
    let p = 2.0 - DIM as f64;
    ((s.powf(p) - big_r.powf(p)) / (r.powf(p) - big_r.powf(p))).clamp(0.0, 1.0)
}

/// The two pieces of the corrector, on the study grid.
#[derive(Debug, Clone)]
pub struct CorrectorParts {
    /// Sum of the per-hole potentials of good holes in `U_{d_z}(εz)`.
    pub good: ScalarField<f64>,
    /// Potential of the bad holes in `D_b ∩ D`.
    pub bad: ScalarField<f64>,
}

fn placement_of(
    spec: &PerforationSpec,
    decomp: &GoodBadDecomposition,
    index: usize,
) -> Result<Placement<f64>> {
    let p = &spec.realization.points[index];
    Placement::new(
        crate::real::scale3(p.z, spec.epsilon),
        decomp.placement_scale[index],
        p.shape.clone(),
    )
}

fn check_decomposition(spec: &PerforationSpec, decomp: &GoodBadDecomposition) -> Result<()> {
    if decomp.epsilon != spec.epsilon
        || decomp.placement_scale.len() != spec.realization.points.len()
    {
        return Err(Error::domain(
            "decomposition was computed for a different realization or epsilon",
        ));
    }
    Ok(())
}

/// Builds the good and bad corrector pieces separately.
pub fn corrector_parts(
    spec: &PerforationSpec,
    decomp: &GoodBadDecomposition,
    grid: &Grid<f64>,
    opts: &SolveOptions,
) -> Result<CorrectorParts> {
    check_decomposition(spec, decomp)?;
    let gb = grid.bbox();

    // good holes: disjoint supports, so contributions are written in place
    let mut good = vec![0.0; grid.len()];
    for g in &decomp.good {
        let place = placement_of(spec, decomp, g.index)?;
        let c = place.center;
        if gb.distance(c) >= g.d_z {
            continue;
        }
        let lo = [c[0] - g.d_z, c[1] - g.d_z, c[2] - g.d_z];
        let hi = [c[0] + g.d_z, c[1] + g.d_z, c[2] + g.d_z];
        match &place.shape {
            HoleShape::Ball { radius } => {
                let r = radius * place.scale_factor;
                for_nodes_in(grid, lo, hi, |idx, x| {
                    let s = dist3(x, c);
                    if s < g.d_z {
                        good[idx] = radial_ball_potential(s, r, g.d_z);
                    }
                });
            }
            _ => {
                let local = local_potential(grid, &place, g.d_z, spec.allow_underresolved, opts)?;
                if let Some((block, values)) = local {
                    for (li, &v) in values.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        if let Some(idx) = grid.translate_index(&block, block.ijk(li)) {
                            good[idx] = v;
                        }
                    }
                }
            }
        }
    }

    let bad = bad_potential(spec, decomp, grid, opts)?;
    Ok(CorrectorParts {
        good: ScalarField::from_values(grid, good)?,
        bad,
    })
}

fn for_nodes_in(
    grid: &Grid<f64>,
    lo: Vec3<f64>,
    hi: Vec3<f64>,
    mut visit: impl FnMut(usize, Vec3<f64>),
) {
    let ri = grid.axis_range(0, lo[0], hi[0]);
    let rj = grid.axis_range(1, lo[1], hi[1]);
    let rk = grid.axis_range(2, lo[2], hi[2]);
    for k in rk {
        for j in rj.clone() {
            for i in ri.clone() {
                visit(grid.index(i, j, k), grid.node(i, j, k));
            }
        }
    }
}

/// Capacitary potential of a placed non-ball hole in `U_{d}(centre)`, on a
/// block of the study lattice.
fn local_potential(
    grid: &Grid<f64>,
    place: &Placement<f64>,
    d: f64,
    allow_underresolved: bool,
    opts: &SolveOptions,
) -> Result<Option<(Grid<f64>, Vec<f64>)>> {
    let c = place.center;
    let block = grid.covering_block(
        [c[0] - d, c[1] - d, c[2] - d],
        [c[0] + d, c[1] + d, c[2] + d],
    )?;
    let d2 = d * d;
    let mut prescribed = vec![0.0; block.len()];
    let mut inside = 0;
    let mut mask = NodeMask::from_fn(&block, |idx| {
        let x = block.node_at(idx);
        if place.contains(x) {
            inside += 1;
            prescribed[idx] = 1.0;
            NodeKind::Hole
        } else if norm2_3(sub3(x, c)) >= d2 {
            NodeKind::Boundary
        } else {
            NodeKind::Free
        }
    });
    if inside == 0 {
        if !allow_underresolved {
            return Err(Error::Resolution(format!(
                "good hole at {c:?} contains no node of the corrector block"
            )));
        }
        let ijk = block.nearest_lattice_index(c);
        let idx = block.index(ijk[0] as usize, ijk[1] as usize, ijk[2] as usize);
        mask.set(idx, NodeKind::Hole);
        prescribed[idx] = 1.0;
    }
    let values = dirichlet_potential(&mask, &prescribed, opts)?;
    Ok(Some((block, values)))
}

/// Potential of `Ĥ_b` in `D_b ∩ D`: one on bad holes, zero outside `D_b`
/// and on `∂D`.
fn bad_potential(
    spec: &PerforationSpec,
    decomp: &GoodBadDecomposition,
    grid: &Grid<f64>,
    opts: &SolveOptions,
) -> Result<ScalarField<f64>> {
    let gb = grid.bbox();
    let mut bad = Vec::new();
    for &i in &decomp.i_b {
        let place = placement_of(spec, decomp, i)?;
        let reach = 2.0 * decomp.placed_radius[i];
        if gb.distance(place.center) < reach {
            bad.push((place, reach));
        }
    }
    if bad.is_empty() {
        return Ok(ScalarField::zeros(grid));
    }
    // 0 = outside D_b, 1 = in D_b, 2 = in a bad hole
    let mut label = vec![0u8; grid.len()];
    for (place, reach) in &bad {
        let c = place.center;
        let lo = [c[0] - reach, c[1] - reach, c[2] - reach];
        let hi = [c[0] + reach, c[1] + reach, c[2] + reach];
        for_nodes_in(grid, lo, hi, |idx, x| {
            if place.contains(x) {
                label[idx] = 2;
            } else if label[idx] == 0 && dist3(x, c) < *reach {
                label[idx] = 1;
            }
        });
    }
    let mask = NodeMask::from_fn(grid, |idx| {
        if label[idx] == 1 {
            NodeKind::Free
        } else {
            NodeKind::Hole
        }
    });
    let prescribed: Vec<f64> = label
        .iter()
        .zip(mask.kinds())
        .map(|(&l, &k)| {
            if l == 2 && k != NodeKind::Boundary {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    ScalarField::from_values(grid, dirichlet_potential(&mask, &prescribed, opts)?)
}

/// The corrector `ê = ê_g + ê_b`, clamped to `[0, 1]` and set to one on every
/// hole node of `perforation`.
pub fn assemble_corrector(
    spec: &PerforationSpec,
    decomp: &GoodBadDecomposition,
    perforation: &NodeMask<f64>,
    opts: &SolveOptions,
) -> Result<ScalarField<f64>> {
    let grid = perforation.grid();
    let parts = corrector_parts(spec, decomp, grid, opts)?;
    let values: Vec<f64> = parts
        .good
        .values()
        .par_iter()
        .zip(parts.bad.values())
        .zip(perforation.kinds())
        .map(|((&g, &b), &k)| {
            if k == NodeKind::Hole {
                1.0
            } else {
                (g + b).clamp(0.0, 1.0)
            }
        })
        .collect();
    ScalarField::from_values(grid, values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectorError {
    pub h1_plain: f64,
    pub h1_corr: f64,
    /// `h1_corr / h1_plain`, when `h1_plain > 0`.
    pub ratio: Option<f64>,
}

/// `|u_ε - u|_{H¹}` against `|u_ε - (1 - ê) u|_{H¹}`.
pub fn corrector_error(
    u_eps: &ScalarField<f64>,
    u_hom: &ScalarField<f64>,
    corrector: &ScalarField<f64>,
) -> Result<CorrectorError> {
    u_eps.grid().check_same(u_hom.grid())?;
    u_eps.grid().check_same(corrector.grid())?;
    let plain = u_eps.sub(u_hom)?;
    let corrected = ScalarField::from_values(
        u_eps.grid(),
        u_eps
            .values()
            .iter()
            .zip(u_hom.values())
            .zip(corrector.values())
            .map(|((&ue, &u), &e)| ue - (1.0 - e) * u)
            .collect(),
    )?;
    let h1_plain = h1_seminorm(&plain);
    let h1_corr = h1_seminorm(&corrected);
    Ok(CorrectorError {
        h1_plain,
        h1_corr,
        ratio: (h1_plain > 0.0).then(|| h1_corr / h1_plain),
    })
}
