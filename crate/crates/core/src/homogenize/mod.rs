//! Perforated and homogenized Dirichlet problems, the oscillating corrector
//! built from capacitary potentials, heat-semigroup comparison and the
//! ε-convergence study driver.

mod corrector;
mod heat;
mod study;

pub use corrector::{
    assemble_corrector, corrector_error, corrector_parts, radial_ball_potential, CorrectorError,
    CorrectorParts,
};
pub use heat::{heat_compare, heat_evolve, relative_heat_difference};
pub use study::{
    prepare_case, realization_at, run_study, run_study_with, sample_study_realizations,
    write_study_outputs, RowStatus, StudyAggregate, StudyCase, StudyReport, StudyRow, CSV_HEADER,
};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Placement;
use crate::mpp::MppRealization;
use crate::numerics::{
    cg, dirichlet_lift, extend_restrict, Aabb, CgOptions, Grid, MaskedLaplacian, NodeKind,
    NodeMask, ScalarField, Transfer,
};
use crate::real::{scale3, Vec3};
use crate::DIM;

/// Bounded positive field `V` rescaling the holes near `x` by `V(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Modulation {
    Constant {
        value: f64,
    },
    /// `V(x) = base + gradient · x`.
    Affine {
        base: f64,
        gradient: Vec3<f64>,
    },
}

impl Modulation {
    pub fn eval(&self, x: Vec3<f64>) -> f64 {
        match self {
            Modulation::Constant { value } => *value,
            Modulation::Affine { base, gradient } => {
                base + gradient[0] * x[0] + gradient[1] * x[1] + gradient[2] * x[2]
            }
        }
    }

    /// Checks `V > 0` and finite on `region` (an affine field attains its
    /// extremes at the corners).
    pub fn validate_on(&self, region: &Aabb<f64>) -> Result<()> {
        for c in 0..8 {
            let x = [0, 1, 2].map(|a| {
                if c >> a & 1 == 0 {
                    region.min[a]
                } else {
                    region.max[a]
                }
            });
            let v = self.eval(x);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!(
                    "modulation: must be positive on the window, got {v} at {x:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Right-hand side selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// `(λ₁ + c₀_nominal) φ₁` with `φ₁` the lowest Dirichlet mode of `D`.
    #[default]
    Manufactured,
    /// `f ≡ 1`.
    One,
}

/// Lowest Dirichlet eigenfunction `Π_a sin(π (x_a - min_a)/L_a)` of the box.
pub fn lowest_mode(grid: &Grid<f64>) -> ScalarField<f64> {
    let b = grid.bbox();
    ScalarField::from_fn(grid, |x| {
        (0..3)
            .map(|a| (PI * (x[a] - b.min[a]) / b.side(a)).sin())
            .product()
    })
}

/// Eigenvalue `π² Σ_a L_a⁻²` of [`lowest_mode`].
pub fn lowest_eigenvalue(domain: &Aabb<f64>) -> f64 {
    (0..3).map(|a| (PI / domain.side(a)).powi(2)).sum()
}

pub fn source_field(source: Source, grid: &Grid<f64>, c0_nominal: f64) -> ScalarField<f64> {
    match source {
        Source::Manufactured => {
            let lam = lowest_eigenvalue(&grid.bbox());
            lowest_mode(grid).map(|v| (lam + c0_nominal) * v)
        }
        Source::One => ScalarField::from_fn(grid, |_| 1.0),
    }
}

/// Perforation of `D` by the holes `εz + ε^{d/(d-2)} V(εz) K_z`, `εz ∈ W`,
/// with `W = ε · realization.window`.
#[derive(Debug, Clone)]
pub struct PerforationSpec<'a> {
    pub epsilon: f64,
    pub domain: Aabb<f64>,
    pub realization: &'a MppRealization,
    pub modulation: Option<Modulation>,
    /// Minimum number of grid cells per placed circumradius.
    pub resolve_factor: f64,
    pub allow_underresolved: bool,
}

impl<'a> PerforationSpec<'a> {
    pub fn new(epsilon: f64, domain: Aabb<f64>, realization: &'a MppRealization) -> Self {
        PerforationSpec {
            epsilon,
            domain,
            realization,
            modulation: None,
            resolve_factor: 2.0,
            allow_underresolved: false,
        }
    }

    pub fn window(&self) -> Aabb<f64> {
        self.realization.window.scaled(self.epsilon)
    }

    pub fn modulation_at(&self, x: Vec3<f64>) -> f64 {
        self.modulation.as_ref().map_or(1.0, |m| m.eval(x))
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::domain(format!(
                "epsilon must lie in ]0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.resolve_factor >= 2.0) {
            return Err(Error::domain(format!(
                "resolve factor must be >= 2, got {}",
                self.resolve_factor
            )));
        }
        self.domain.validate()?;
        if !self.window().contains_box(&self.domain) {
            return Err(Error::domain("the domain D must lie inside the window W"));
        }
        if let Some(m) = &self.modulation {
            m.validate_on(&self.window())?;
        }
        Ok(())
    }

    /// Placed holes with `εz ∈ W`, in point order, paired with point indices.
    pub fn placements(&self) -> Result<Vec<(usize, Placement<f64>)>> {
        let crit = DIM as f64 / (DIM as f64 - 2.0);
        let scale = self.epsilon.powf(crit);
        self.realization
            .points
            .iter()
            .enumerate()
            .filter(|(_, p)| self.realization.window.contains_half_open(p.z))
            .map(|(i, p)| {
                let c = scale3(p.z, self.epsilon);
                Ok((
                    i,
                    Placement::new(c, scale * self.modulation_at(c), p.shape.clone())?,
                ))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Perforation {
    pub mask: NodeMask<f64>,
    /// Holes meeting the grid box, as (point index, placement).
    pub holes: Vec<(usize, Placement<f64>)>,
    /// Holes that contained no node and had their nearest node pinned.
    pub pinned: usize,
    /// Set when resolution was not enforced and some hole is under-resolved.
    pub bias_warning: bool,
}

fn meets_box(p: &Placement<f64>, b: &Aabb<f64>) -> bool {
    b.distance(p.center) <= p.circumradius()
}

/// Node mask of `D^ε` on `grid` (which must span `spec.domain`).
pub fn build_perforation(spec: &PerforationSpec, grid: &Grid<f64>) -> Result<Perforation> {
    spec.validate()?;
    let gb = grid.bbox();
    let tol = 1e-12 * (0..3).map(|a| spec.domain.side(a)).fold(0.0, f64::max);
    if (0..3).any(|a| {
        (gb.min[a] - spec.domain.min[a]).abs() > tol || (gb.max[a] - spec.domain.max[a]).abs() > tol
    }) {
        return Err(Error::Shape(
            "perforation grid must span the domain D".into(),
        ));
    }
    let holes: Vec<(usize, Placement<f64>)> = spec
        .placements()?
        .into_iter()
        .filter(|(_, p)| meets_box(p, &gb))
        .collect();
    let h = grid.spacing().into_iter().fold(0.0, f64::max);
    let r_min = holes
        .iter()
        .map(|(_, p)| p.circumradius())
        .fold(f64::INFINITY, f64::min);
    let under = h * spec.resolve_factor > r_min;
    if under && !spec.allow_underresolved {
        let side = (0..3).map(|a| gb.side(a)).fold(0.0, f64::max);
        let need = (side * spec.resolve_factor / r_min).ceil() as usize + 1;
        return Err(Error::Resolution(format!(
            "grid spacing {h} exceeds smallest hole radius {r_min} / {}; need n >= {need} (or allow-underresolved)",
            spec.resolve_factor
        )));
    }
    let mut mask = NodeMask::dirichlet_box(grid);
    let mut pinned = 0;
    for (_, p) in &holes {
        let (lo, hi) = p.bounding_box();
        let hits = mask.mark_holes_in(lo, hi, |x| p.contains(x));
        if hits == 0 && gb.contains_closed(p.center) {
            if !spec.allow_underresolved {
                return Err(Error::Resolution(format!(
                    "hole at {:?} contains no grid node",
                    p.center
                )));
            }
            let ijk = grid.nearest_lattice_index(p.center);
            let [nx, ny, nz] = grid.counts();
            if ijk
                .iter()
                .zip([nx, ny, nz])
                .all(|(&i, n)| i >= 0 && (i as usize) < n)
            {
                mask.set(
                    grid.index(ijk[0] as usize, ijk[1] as usize, ijk[2] as usize),
                    NodeKind::Hole,
                );
                pinned += 1;
            }
        }
    }
    Ok(Perforation {
        mask,
        holes,
        pinned,
        bias_warning: under || pinned > 0,
    })
}

/// Solver settings shared by the Dirichlet solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub jacobi: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 20_000,
            jacobi: false,
        }
    }
}

impl SolveOptions {
    pub(crate) fn cg(&self) -> CgOptions<f64> {
        CgOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            jacobi: self.jacobi,
        }
    }
}

/// `-Δu = f` in the free nodes of `mask`, zero elsewhere.
pub fn solve_perforated(
    mask: &NodeMask<f64>,
    f: &ScalarField<f64>,
    opts: &SolveOptions,
) -> Result<ScalarField<f64>> {
    let rhs = extend_restrict(f, mask, Transfer::Restrict)?;
    let op = MaskedLaplacian::new(mask);
    let out = cg(&op, rhs.values(), &opts.cg())?;
    extend_restrict(
        &ScalarField::from_values(f.grid(), out.solution)?,
        mask,
        Transfer::Extend,
    )
}

/// `(-Δ + c₀ V^{d-2}) u = f` on the box of `f`'s grid with zero boundary
/// values.
pub fn solve_homogenized(
    f: &ScalarField<f64>,
    c0: f64,
    modulation: Option<&Modulation>,
    opts: &SolveOptions,
) -> Result<ScalarField<f64>> {
    if !(c0 >= 0.0 && c0.is_finite()) {
        return Err(Error::domain(format!(
            "c0 must be finite and >= 0, got {c0}"
        )));
    }
    let grid = f.grid();
    let mask = NodeMask::dirichlet_box(grid);
    let potential: Vec<f64> = (0..grid.len())
        .map(|i| {
            let v = modulation.map_or(1.0, |m| m.eval(grid.node_at(i)));
            c0 * v.powi(DIM as i32 - 2)
        })
        .collect();
    if potential.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::domain(
            "modulation must be nonnegative on the domain",
        ));
    }
    let rhs = extend_restrict(f, &mask, Transfer::Restrict)?;
    let op = MaskedLaplacian::new(&mask).with_potential(&potential);
    let out = cg(&op, rhs.values(), &opts.cg())?;
    extend_restrict(
        &ScalarField::from_values(grid, out.solution)?,
        &mask,
        Transfer::Extend,
    )
}

/// Discrete capacitary potential: one on nodes labelled by `value = Some(1)`,
/// zero on other non-free nodes, harmonic at free nodes.
pub(crate) fn dirichlet_potential(
    mask: &NodeMask<f64>,
    prescribed: &[f64],
    opts: &SolveOptions,
) -> Result<Vec<f64>> {
    let rhs = dirichlet_lift(mask, prescribed);
    let op = MaskedLaplacian::new(mask);
    let out = cg(&op, &rhs, &opts.cg())?;
    Ok(out
        .solution
        .into_iter()
        .zip(prescribed)
        .zip(mask.kinds())
        .map(|((w, &p), &k)| if k == NodeKind::Free { w } else { p })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HoleShape;
    use crate::mpp::MarkedPoint;
    use crate::numerics::{l2_norm, norms};

    fn unit_grid(n: usize) -> Grid<f64> {
        Grid::new(Aabb::cube(0.0, 1.0).unwrap(), n).unwrap()
    }

    fn one_hole(z: Vec3<f64>, shape: HoleShape<f64>, window: Aabb<f64>) -> MppRealization {
        MppRealization::from_points(window, vec![MarkedPoint::new(z, shape, 33).unwrap()]).unwrap()
    }

    #[test]
    fn empty_realization_gives_plain_box() {
        let g = unit_grid(17);
        let r = MppRealization::from_points(Aabb::cube(-2.0, 4.0).unwrap(), vec![]).unwrap();
        let p = build_perforation(
            &PerforationSpec::new(0.5, Aabb::cube(0.0, 1.0).unwrap(), &r),
            &g,
        )
        .unwrap();
        assert_eq!(p.mask, NodeMask::dirichlet_box(&g));
        assert!(!p.bias_warning);
    }

    #[test]
    fn central_ball_hole_matches_node_scan() {
        let g = unit_grid(81);
        // z = (1,1,1) so εz = (0.5,0.5,0.5); radius ε³ = 0.125
        let r = one_hole(
            [1.0; 3],
            HoleShape::ball(1.0).unwrap(),
            Aabb::cube(-2.0, 4.0).unwrap(),
        );
        let p = build_perforation(
            &PerforationSpec::new(0.5, Aabb::cube(0.0, 1.0).unwrap(), &r),
            &g,
        )
        .unwrap();
        let brute = (0..g.len())
            .filter(|&i| {
                let x = g.node_at(i);
                let d2: f64 = (0..3).map(|a| (x[a] - 0.5).powi(2)).sum();
                d2 <= 0.125 * 0.125
            })
            .count();
        assert!(brute > 0);
        assert_eq!(p.mask.count(NodeKind::Hole), brute);
    }

    #[test]
    fn constant_modulation_equals_scaled_marks() {
        let g = unit_grid(65);
        let w = Aabb::cube(-2.0, 4.0).unwrap();
        let r1 = one_hole([1.0; 3], HoleShape::ball(1.0).unwrap(), w);
        let r2 = one_hole([1.0; 3], HoleShape::ball(2.0).unwrap(), w);
        let mut s1 = PerforationSpec::new(0.5, Aabb::cube(0.0, 1.0).unwrap(), &r1);
        s1.modulation = Some(Modulation::Constant { value: 2.0 });
        let s2 = PerforationSpec::new(0.5, Aabb::cube(0.0, 1.0).unwrap(), &r2);
        assert_eq!(
            build_perforation(&s1, &g).unwrap().mask,
            build_perforation(&s2, &g).unwrap().mask
        );
    }

    #[test]
    fn under_resolution_is_reported_or_pinned() {
        let g = unit_grid(17);
        let r = one_hole(
            [2.1; 3],
            HoleShape::ball(0.01).unwrap(),
            Aabb::cube(-2.0, 4.0).unwrap(),
        );
        let mut spec = PerforationSpec::new(0.25, Aabb::cube(0.0, 1.0).unwrap(), &r);
        match build_perforation(&spec, &g) {
            Err(Error::Resolution(msg)) => assert!(msg.contains("need n >=")),
            other => panic!("expected resolution error, got {other:?}"),
        }
        spec.allow_underresolved = true;
        let p = build_perforation(&spec, &g).unwrap();
        assert!(p.bias_warning);
        assert_eq!(p.pinned, 1);
        assert_eq!(p.mask.count(NodeKind::Hole), 1);
    }

    #[test]
    fn domain_outside_window_is_rejected() {
        let g = unit_grid(17);
        let r = MppRealization::from_points(Aabb::cube(0.5, 4.0).unwrap(), vec![]).unwrap();
        assert!(build_perforation(
            &PerforationSpec::new(0.5, Aabb::cube(0.0, 1.0).unwrap(), &r),
            &g
        )
        .is_err());
    }

    #[test]
    fn manufactured_perforated_solve_is_second_order() {
        let opts = SolveOptions {
            tol: 1e-11,
            ..Default::default()
        };
        let err = |n: usize| {
            let g = unit_grid(n);
            let f = source_field(Source::Manufactured, &g, 0.0);
            let u = solve_perforated(&NodeMask::dirichlet_box(&g), &f, &opts).unwrap();
            l2_norm(&u.sub(&lowest_mode(&g)).unwrap())
        };
        let (e1, e2) = (err(17), err(33));
        assert!(e1 < 1e-2);
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn all_hole_mask_gives_zero() {
        let g = unit_grid(9);
        let f = ScalarField::from_fn(&g, |_| 1.0);
        let u = solve_perforated(&NodeMask::all_holes(&g), &f, &SolveOptions::default()).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn homogenized_manufactured_and_monotone() {
        let g = unit_grid(33);
        let opts = SolveOptions {
            tol: 1e-11,
            ..Default::default()
        };
        let c = 20.0;
        let f = source_field(Source::Manufactured, &g, c);
        let u = solve_homogenized(&f, c, None, &opts).unwrap();
        assert!(l2_norm(&u.sub(&lowest_mode(&g)).unwrap()) < 5e-3);

        let one = source_field(Source::One, &g, 0.0);
        let u0 = solve_homogenized(&one, 0.0, None, &opts).unwrap();
        let plain = solve_perforated(&NodeMask::dirichlet_box(&g), &one, &opts).unwrap();
        assert!(u0.sub(&plain).unwrap().max_abs() < 1e-9);
        let mut prev = u0;
        for c0 in [5.0, 20.0] {
            let u = solve_homogenized(&one, c0, None, &opts).unwrap();
            assert!(u
                .values()
                .iter()
                .zip(prev.values())
                .all(|(a, b)| *a <= *b + 1e-10));
            prev = u;
        }
        assert!(solve_homogenized(&one, -1.0, None, &opts).is_err());
    }

    #[test]
    fn hole_lowers_solution_and_energy_identity_holds() {
        let g = unit_grid(33);
        let w = Aabb::cube(-2.0, 4.0).unwrap();
        let r = one_hole([1.0; 3], HoleShape::ball(1.0).unwrap(), w);
        let p = build_perforation(
            &PerforationSpec::new(0.5, Aabb::cube(0.0, 1.0).unwrap(), &r),
            &g,
        )
        .unwrap();
        let opts = SolveOptions {
            tol: 1e-10,
            ..Default::default()
        };
        let f = source_field(Source::One, &g, 0.0);
        let holed = solve_perforated(&p.mask, &f, &opts).unwrap();
        let plain = solve_perforated(&NodeMask::dirichlet_box(&g), &f, &opts).unwrap();
        assert!(holed
            .values()
            .iter()
            .zip(plain.values())
            .all(|(a, b)| *a <= *b + 1e-10));
        for (i, &k) in p.mask.kinds().iter().enumerate() {
            if k != NodeKind::Free {
                assert_eq!(holed.values()[i], 0.0);
            }
        }
        let (_, h1) = norms(&holed);
        let fu = crate::numerics::l2_inner(&f, &holed);
        assert!(
            (h1 * h1 - fu).abs() <= 10.0 * opts.tol * fu,
            "{} vs {fu}",
            h1 * h1
        );
    }
}
