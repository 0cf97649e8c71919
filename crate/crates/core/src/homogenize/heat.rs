use super::SolveOptions;
use crate::error::{Error, Result};
use crate::numerics::{
    cg, extend_restrict, l2_norm, MaskedLaplacian, NodeMask, ScalarField, Transfer,
};

fn step_count(t: f64, dt: f64) -> Result<usize> {
    if !(t > 0.0 && t.is_finite()) || !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::domain(format!(
            "heat evolution needs t > 0 and dt > 0, got t = {t}, dt = {dt}"
        )));
    }
    Ok(((t / dt).round() as usize).max(1))
}

/// Implicit Euler for `∂_t w = Δw` on the free nodes of `mask`, started from
/// the restriction of `u0`. The step is adjusted to `t / round(t/dt)`.
pub fn heat_evolve(
    mask: &NodeMask<f64>,
    u0: &ScalarField<f64>,
    t: f64,
    dt: f64,
    opts: &SolveOptions,
) -> Result<ScalarField<f64>> {
    let steps = step_count(t, dt)?;
    let tau = t / steps as f64;
    let op = MaskedLaplacian::new(mask).with_shift(1.0).with_scale(tau);
    let mut w = extend_restrict(u0, mask, Transfer::Restrict)?;
    for _ in 0..steps {
        let out = cg(&op, w.values(), &opts.cg())?;
        w = ScalarField::from_values(u0.grid(), out.solution)?;
    }
    Ok(w)
}

/// `‖w_ε - e^{-c₀t} w_D‖ / ‖w_D‖` for already evolved fields.
pub fn relative_heat_difference(
    perforated: &ScalarField<f64>,
    plain: &ScalarField<f64>,
    c0: f64,
    t: f64,
) -> Result<f64> {
    let damp = (-c0 * t).exp();
    let reference = plain.map(|v| damp * v);
    let denom = l2_norm(plain);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(l2_norm(&perforated.sub(&reference)?) / denom)
}

/// Compares the perforated heat flow of `u0` with the damped unperforated
/// flow `e^{-c₀t} e^{tΔ_D} u0` at time `t`, relative to `‖e^{tΔ_D} u0‖`.
pub fn heat_compare(
    mask: &NodeMask<f64>,
    c0: f64,
    u0: &ScalarField<f64>,
    t: f64,
    dt: f64,
    opts: &SolveOptions,
) -> Result<f64> {
    let perforated = heat_evolve(mask, u0, t, dt, opts)?;
    let plain = heat_evolve(&NodeMask::dirichlet_box(mask.grid()), u0, t, dt, opts)?;
    relative_heat_difference(&perforated, &plain, c0, t)
}
