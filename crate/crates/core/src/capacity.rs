//! Newtonian capacity, analytic for balls and variational on grids.
//!
//! `Cap(F, U)` is the least Dirichlet energy `∫_U |∇u|²` over functions that
//! equal one on `F` and vanish on `∂U`; `Cap F` is the same with `U = ℝ^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::HoleShape;
use crate::numerics::{
    cg, dirichlet_lift, h1_seminorm_sq, Aabb, CgOptions, Grid, MaskedLaplacian, NodeKind, NodeMask,
    ScalarField,
};
use crate::real::{norm2_3, Real};
use crate::DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapacityMethod {
    Analytic,
    Grid,
    GridExtrapolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate<T> {
    pub value: T,
    pub method: CapacityMethod,
    pub resolution: Option<usize>,
    pub upper_bound: Option<T>,
    pub lower_bound: Option<T>,
    pub relative_error_indicator: T,
}

impl<T: Real> CapacityEstimate<T> {
    fn analytic(value: T) -> Self {
        CapacityEstimate {
            value,
            method: CapacityMethod::Analytic,
            resolution: None,
            upper_bound: None,
            lower_bound: None,
            relative_error_indicator: T::zero(),
        }
    }
}

fn check_dimension(d: usize) -> Result<()> {
    if d < 3 {
        return Err(Error::domain(format!(
            "dimension {d} < 3 has no Newtonian capacity"
        )));
    }
    Ok(())
}

/// Maz'ya's overhead factor `f_d(λ)`:
/// `(1 + 2 ln λ)/(λ - 1)` for `d = 3` and `2/((d - 3)(λ - 1))` for `d ≥ 4`.
///
/// For `F ⊆ B_r(0)` and `λ = R/r > 1`, `Cap(F, U_R) ≤ (1 + f_d(λ)) Cap F`.
pub fn mazya_factor<T: Real>(d: usize, lambda: T) -> Result<T> {
    check_dimension(d)?;
    if !(lambda > T::one()) {
        return Err(Error::domain(format!(
            "Maz'ya factor needs lambda > 1, got {lambda}"
        )));
    }
    let lm1 = lambda - T::one();
    Ok(if d == 3 {
        (T::one() + T::lit(2.0) * lambda.ln()) / lm1
    } else {
        T::lit(2.0) / (T::from_count(d - 3) * lm1)
    })
}

/// `Γ(d/2)` for integer `d ≥ 1`.
fn gamma_half<T: Real>(d: usize) -> T {
    let (mut g, mut m) = if d % 2 == 0 {
        (T::one(), T::one())
    } else {
        (T::PI().sqrt(), T::lit(0.5))
    };
    let target = T::lit(d as f64 / 2.0);
    while m < target {
        g *= m;
        m += T::one();
    }
    g
}

/// Surface measure of the unit sphere in `ℝ^d`.
pub fn unit_sphere_area<T: Real>(d: usize) -> T {
    match d {
        3 => return T::lit(4.0) * T::PI(),
        4 => return T::lit(2.0) * T::PI() * T::PI(),
        _ => {}
    }
    T::lit(2.0) * T::PI().powf(T::lit(d as f64 / 2.0)) / gamma_half::<T>(d)
}

/// Capacity of the ball `B_r` relative to `U_R` (or whole space if `outer` is
/// `None`): `(d - 2) ω_{d-1} / (r^{2-d} - R^{2-d})`.
pub fn cap_ball<T: Real>(r: T, outer: Option<T>, d: usize) -> Result<CapacityEstimate<T>> {
    check_dimension(d)?;
    if !(r > T::zero()) || !r.is_finite() {
        return Err(Error::domain(format!("ball radius {r} must be positive")));
    }
    let p = T::lit(2.0) - T::from_count(d);
    let inner = r.powf(p);
    let outer_term = match outer {
        None => T::zero(),
        Some(big_r) if big_r.is_infinite() && big_r > T::zero() => T::zero(),
        Some(big_r) => {
            if !(big_r > r) {
                return Err(Error::domain(format!(
                    "outer radius {big_r} must exceed ball radius {r}"
                )));
            }
            big_r.powf(p)
        }
    };
    let value = T::from_count(d - 2) * unit_sphere_area::<T>(d) / (inner - outer_term);
    Ok(CapacityEstimate::analytic(value))
}

/// Grid settings for variational capacities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCapacityOptions<T> {
    pub cg: CgOptions<T>,
    /// Richardson extrapolation between `n` and `2n - 1` nodes per axis.
    pub extrapolate: bool,
}

impl<T: Real> Default for GridCapacityOptions<T> {
    fn default() -> Self {
        GridCapacityOptions {
            cg: CgOptions::new(T::lit(1e-9), 50_000),
            extrapolate: false,
        }
    }
}

/// Discrete capacitary potential of `shape` in `U_R(0)` together with its
/// energy.
pub struct GridPotential<T> {
    pub potential: ScalarField<T>,
    pub energy: T,
    pub mask: NodeMask<T>,
}

/// Solves for the discrete capacitary potential of `shape` in the ball
/// `U_R(0)` on the box `[-R, R]³` with `n` nodes per axis.
///
/// Nodes inside the shape carry the value one, nodes with `|x| ≥ R` carry
/// zero, and the remaining nodes are harmonic for the 7-point stencil.
pub fn capacitary_potential_grid<T: Real>(
    shape: &HoleShape<T>,
    domain_radius: T,
    n: usize,
    cg_opts: &CgOptions<T>,
) -> Result<GridPotential<T>> {
    shape.validate()?;
    if !(shape.circumradius() < domain_radius) {
        return Err(Error::domain(format!(
            "domain radius {domain_radius} must exceed the circumradius {}",
            shape.circumradius()
        )));
    }
    if n < 3 {
        return Err(Error::domain("grid capacity needs n >= 3"));
    }
    let grid = Grid::new(Aabb::cube(-domain_radius, domain_radius)?, n)?;
    let mut mask = NodeMask::dirichlet_box(&grid);
    let r2 = domain_radius * domain_radius;
    let mut prescribed = vec![T::zero(); grid.len()];
    let mut inside = 0usize;
    for idx in 0..grid.len() {
        let x = grid.node_at(idx);
        if shape.contains(x) {
            inside += 1;
            mask.set(idx, NodeKind::Hole);
            prescribed[idx] = T::one();
        } else if norm2_3(x) >= r2 {
            mask.set(idx, NodeKind::Boundary);
        }
    }
    if inside == 0 {
        return Err(Error::Resolution(format!(
            "no node of the {n}^3 grid on [-{domain_radius}, {domain_radius}]^3 lies inside the shape"
        )));
    }
    let rhs = dirichlet_lift(&mask, &prescribed);
    let op = MaskedLaplacian::new(&mask);
    let out = cg(&op, &rhs, cg_opts)?;
    let values: Vec<T> = out
        .solution
        .into_iter()
        .zip(&prescribed)
        .zip(mask.kinds())
        .map(|((w, &p), &k)| if k == NodeKind::Free { w } else { p })
        .collect();
    let potential = ScalarField::from_values(&grid, values)?;
    let energy = h1_seminorm_sq(&potential);
    Ok(GridPotential {
        potential,
        energy,
        mask,
    })
}

/// `Cap(shape, U_R(0))` by minimising the discrete Dirichlet energy.
pub fn cap_relative_grid<T: Real>(
    shape: &HoleShape<T>,
    domain_radius: T,
    n: usize,
) -> Result<CapacityEstimate<T>> {
    cap_relative_grid_with(shape, domain_radius, n, &GridCapacityOptions::default())
}

pub fn cap_relative_grid_with<T: Real>(
    shape: &HoleShape<T>,
    domain_radius: T,
    n: usize,
    opts: &GridCapacityOptions<T>,
) -> Result<CapacityEstimate<T>> {
    let coarse = capacitary_potential_grid(shape, domain_radius, n, &opts.cg)?.energy;
    let h = T::lit(2.0) * domain_radius / T::from_count(n - 1);
    let staircase = h / shape.circumradius().max(h);
    if !opts.extrapolate {
        return Ok(CapacityEstimate {
            value: coarse,
            method: CapacityMethod::Grid,
            resolution: Some(n),
            upper_bound: None,
            lower_bound: None,
            relative_error_indicator: staircase,
        });
    }
    let fine_n = 2 * n - 1;
    let fine = capacitary_potential_grid(shape, domain_radius, fine_n, &opts.cg)?.energy;
    let value = (T::lit(4.0) * fine - coarse) / T::lit(3.0);
    Ok(CapacityEstimate {
        value,
        method: CapacityMethod::GridExtrapolated,
        resolution: Some(fine_n),
        upper_bound: None,
        lower_bound: None,
        relative_error_indicator: ((fine - coarse) / fine).abs(),
    })
}

/// Whole-space capacity from a schedule of truncation radii.
///
/// Each radius `R` gives `C_R = Cap(F, U_R)` on a grid. Monotonicity in the
/// domain gives `Cap F ≤ min_R C_R`; Maz'ya's inequality gives
/// `Cap F ≥ max_R C_R / (1 + f_d(R/ρ))` with `ρ` the circumradius. The value
/// removes the far-field monopole of the truncation at the smallest radius
/// (finest spacing relative to the shape),
/// `1/Cap F ≈ 1/C_R + R^{2-d}/((d-2) ω_{d-1})`, which is exact for balls.
pub fn cap_whole_space<T: Real>(
    shape: &HoleShape<T>,
    schedule: &[T],
    n: usize,
) -> Result<CapacityEstimate<T>> {
    cap_whole_space_with(shape, schedule, n, &GridCapacityOptions::default())
}

pub fn cap_whole_space_with<T: Real>(
    shape: &HoleShape<T>,
    schedule: &[T],
    n: usize,
    opts: &GridCapacityOptions<T>,
) -> Result<CapacityEstimate<T>> {
    if schedule.is_empty() {
        return Err(Error::domain("empty radius schedule"));
    }
    let rho = shape.circumradius();
    for w in schedule.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::domain("radius schedule must be strictly increasing"));
        }
    }
    if !(schedule[0] > rho) {
        return Err(Error::domain(format!(
            "schedule radius {} does not exceed circumradius {rho}",
            schedule[0]
        )));
    }
    let mut values = Vec::with_capacity(schedule.len());
    let mut indicator = T::zero();
    for &big_r in schedule {
        let est = cap_relative_grid_with(shape, big_r, n, opts)?;
        indicator = indicator.max(est.relative_error_indicator);
        values.push(est.value);
    }
    let mut upper = T::infinity();
    let mut lower = T::zero();
    for (&big_r, &c) in schedule.iter().zip(&values) {
        upper = upper.min(c);
        lower = lower.max(c / (T::one() + mazya_factor(DIM, big_r / rho)?));
    }
    // nonincreasing in R up to discretisation; record any violation
    for w in values.windows(2) {
        if w[1] > w[0] {
            indicator = indicator.max((w[1] - w[0]) / w[0]);
        }
    }
    let p = T::lit(2.0) - T::from_count(DIM);
    let monopole = schedule[0].powf(p) / (T::from_count(DIM - 2) * unit_sphere_area::<T>(DIM));
    let value = T::one() / (T::one() / values[0] + monopole);
    Ok(CapacityEstimate {
        value,
        method: if opts.extrapolate {
            CapacityMethod::GridExtrapolated
        } else {
            CapacityMethod::Grid
        },
        resolution: Some(n),
        upper_bound: Some(upper),
        lower_bound: Some(lower),
        relative_error_indicator: indicator,
    })
}

/// Whole-space capacity of a mark: analytic for balls, otherwise a grid
/// estimate on the schedule `(2ρ, 4ρ)` at `n` nodes per axis.
pub fn mark_capacity<T: Real>(shape: &HoleShape<T>, n: usize) -> Result<CapacityEstimate<T>> {
    mark_capacity_with(shape, n, &GridCapacityOptions::default())
}

pub fn mark_capacity_with<T: Real>(
    shape: &HoleShape<T>,
    n: usize,
    opts: &GridCapacityOptions<T>,
) -> Result<CapacityEstimate<T>> {
    match shape {
        HoleShape::Ball { radius } if *radius > T::zero() => cap_ball(*radius, None, DIM),
        HoleShape::Ball { .. } => Ok(CapacityEstimate::analytic(T::zero())),
        _ => {
            let rho = shape.circumradius();
            cap_whole_space_with(shape, &[T::lit(2.0) * rho, T::lit(4.0) * rho], n, opts)
        }
    }
}

/// `Cap K / (diam K)^{d-2}`, the scale-free size ratio of a mark.
pub fn alpha_ratio<T: Real>(shape: &HoleShape<T>, cap: &CapacityEstimate<T>) -> Result<T> {
    let diam = shape.diameter();
    if !(diam > T::zero()) {
        return Err(Error::domain("alpha ratio of a shape with zero diameter"));
    }
    Ok(cap.value / diam.powi((DIM - 2) as i32))
}
