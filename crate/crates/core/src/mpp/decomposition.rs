//! Classification of placed holes into a well-separated good family and a
//! sparse bad family, with the per-hole corrector radii `d_z`.

use serde::Serialize;

use super::neighbors::NeighborIndex;
use super::{close_flags, MppRealization};
use crate::error::{Error, Result};
use crate::numerics::Aabb;
use crate::real::{dist3, scale3, Vec3};
use crate::DIM;

/// Exponent `d/(d-2)` of the critical hole scaling.
pub(crate) fn critical_exponent() -> f64 {
    DIM as f64 / (DIM as f64 - 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoodHole {
    /// Index into the realization's points.
    pub index: usize,
    /// Corrector radius; the potential lives in `U_{d_z}(εz)`.
    pub d_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoodBadDecomposition {
    pub epsilon: f64,
    pub alpha: f64,
    pub m: f64,
    pub r_eps: f64,
    pub eta_eps: f64,
    /// Physical window `εW₀` where `W₀` is the realization window.
    pub window: Aabb<f64>,
    /// Indices of points with `εz ∈ W`, ascending.
    pub members: Vec<usize>,
    /// Placed circumradius `ε^{d/(d-2)} V(εz) ρ_z` per realization point
    /// (zero outside the window).
    pub placed_radius: Vec<f64>,
    /// Placement scale `ε^{d/(d-2)} V(εz)` per realization point.
    pub placement_scale: Vec<f64>,
    pub j_b: Vec<usize>,
    pub k_b: Vec<usize>,
    pub i_tilde_b: Vec<usize>,
    pub i_b: Vec<usize>,
    pub i_g: Vec<usize>,
    pub good: Vec<GoodHole>,
    pub i_gm: Vec<usize>,
}

/// Decomposition with unit modulation.
pub fn good_bad_decompose(
    real: &MppRealization,
    epsilon: f64,
    alpha: f64,
    m: f64,
) -> Result<GoodBadDecomposition> {
    good_bad_decompose_modulated(real, epsilon, alpha, m, &|_| 1.0)
}

/// Decomposition of the holes `εz + ε^{d/(d-2)} V(εz) K_z`; `modulation` is
/// evaluated at physical centres.
pub fn good_bad_decompose_modulated(
    real: &MppRealization,
    epsilon: f64,
    alpha: f64,
    m: f64,
    modulation: &dyn Fn(Vec3<f64>) -> f64,
) -> Result<GoodBadDecomposition> {
    let crit = critical_exponent();
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::domain(format!(
            "epsilon must lie in ]0, 1], got {epsilon}"
        )));
    }
    if !(alpha > 0.0 && alpha < crit) {
        return Err(Error::domain(format!(
            "alpha must lie in ]0, {crit}[, got {alpha}"
        )));
    }
    if !(m > 1.0 && m.is_finite()) {
        return Err(Error::domain(format!("M must exceed 1, got {m}")));
    }
    let n = real.points.len();
    let positions = real.positions();
    let phys: Vec<Vec3<f64>> = positions.iter().map(|&z| scale3(z, epsilon)).collect();
    let window = real.window.scaled(epsilon);
    let eps_crit = epsilon.powf(crit);

    let members: Vec<usize> = (0..n)
        .filter(|&i| real.window.contains_half_open(positions[i]))
        .collect();
    let mut placement_scale = vec![0.0; n];
    let mut placed_radius = vec![0.0; n];
    let mut rho_max = 0.0f64;
    for &i in &members {
        let v = modulation(phys[i]);
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::domain(format!(
                "modulation must be positive and finite, got {v} at point {i}"
            )));
        }
        placement_scale[i] = eps_crit * v;
        placed_radius[i] = placement_scale[i] * real.points[i].rho;
        rho_max = rho_max.max(v * real.points[i].rho);
    }

    let r_eps = (eps_crit * rho_max)
        .powf(1.0 / DIM as f64)
        .min(1.0)
        .max(epsilon.powf(alpha));
    let eta = epsilon * r_eps;

    let mut in_j = vec![false; n];
    let j_b: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&i| 2.0 * placed_radius[i] >= eta)
        .collect();
    for &i in &j_b {
        in_j[i] = true;
    }

    // T_{2r}(Φ) over the whole ground process
    let close = close_flags(&positions, 2.0 * r_eps);
    let mut in_k = vec![false; n];
    let k_b: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&i| !in_j[i] && close[i])
        .collect();
    for &i in &k_b {
        in_k[i] = true;
    }

    // B_η(εz) meets some B_{2s_j}(εz_j), j ∈ J_b
    let j_pos: Vec<Vec3<f64>> = j_b.iter().map(|&i| phys[i]).collect();
    let j_reach = j_b
        .iter()
        .map(|&i| 2.0 * placed_radius[i])
        .fold(0.0, f64::max);
    let j_index = NeighborIndex::new(&j_pos, (eta + j_reach).max(epsilon));
    let i_tilde_b: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&i| !in_j[i] && !in_k[i])
        .filter(|&i| {
            let mut hit = false;
            j_index.for_each_within(phys[i], eta + j_reach, |q, d| {
                if d <= eta + 2.0 * placed_radius[j_b[q]] {
                    hit = true;
                }
            });
            hit
        })
        .collect();

    let mut bad = vec![false; n];
    for &i in j_b.iter().chain(&k_b).chain(&i_tilde_b) {
        bad[i] = true;
    }
    let i_b: Vec<usize> = members.iter().copied().filter(|&i| bad[i]).collect();
    let i_g: Vec<usize> = members.iter().copied().filter(|&i| !bad[i]).collect();

    // d_z = min{ε, ½ NN distance, dist(εz, D_b)}
    let ground = NeighborIndex::new(&positions, 2.0);
    let b_pos: Vec<Vec3<f64>> = i_b.iter().map(|&i| phys[i]).collect();
    let b_reach = i_b
        .iter()
        .map(|&i| 2.0 * placed_radius[i])
        .fold(0.0, f64::max);
    let b_index = NeighborIndex::new(&b_pos, epsilon + b_reach);
    let good: Vec<GoodHole> = i_g
        .iter()
        .map(|&i| {
            let mut d = epsilon;
            // only neighbours with ½|εz - εz₁| < ε matter
            ground.for_each_within(positions[i], 2.0, |j, _| {
                if j != i && positions[j] != positions[i] {
                    d = d.min(0.5 * dist3(phys[i], phys[j]));
                }
            });
            b_index.for_each_within(phys[i], epsilon + b_reach, |q, dist| {
                let gap = (dist - 2.0 * placed_radius[i_b[q]]).max(0.0);
                d = d.min(gap);
            });
            GoodHole { index: i, d_z: d }
        })
        .collect();
    let i_gm: Vec<usize> = good
        .iter()
        .filter(|g| g.d_z >= epsilon / m)
        .map(|g| g.index)
        .collect();

    Ok(GoodBadDecomposition {
        epsilon,
        alpha,
        m,
        r_eps,
        eta_eps: eta,
        window,
        members,
        placed_radius,
        placement_scale,
        j_b,
        k_b,
        i_tilde_b,
        i_b,
        i_g,
        good,
        i_gm,
    })
}

/// Outcome of re-checking the hard invariants of a decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InvariantReport {
    pub partition: bool,
    pub good_disjoint: bool,
    pub separation: bool,
    pub d_z_bounds: bool,
}

impl InvariantReport {
    pub fn all(&self) -> bool {
        self.partition && self.good_disjoint && self.separation && self.d_z_bounds
    }
}

impl GoodBadDecomposition {
    /// Re-checks the invariants directly from the definitions (pairwise
    /// over candidate neighbours; no reuse of the classification logic).
    pub fn verify(&self, real: &MppRealization) -> InvariantReport {
        let n = real.points.len();
        let phys: Vec<Vec3<f64>> = real
            .points
            .iter()
            .map(|p| scale3(p.z, self.epsilon))
            .collect();

        let expected: Vec<usize> = (0..n)
            .filter(|&i| real.window.contains_half_open(real.points[i].z))
            .collect();
        let mut seen = vec![0u8; n];
        for &i in self.i_g.iter().chain(&self.i_b) {
            seen[i] += 1;
        }
        let partition = expected.iter().all(|&i| seen[i] == 1)
            && seen
                .iter()
                .enumerate()
                .all(|(i, &c)| c == 0 || expected.binary_search(&i).is_ok());

        let s = &self.placed_radius;
        let g_pos: Vec<Vec3<f64>> = self.i_g.iter().map(|&i| phys[i]).collect();
        let g_max = self.i_g.iter().map(|&i| s[i]).fold(0.0, f64::max);
        let g_index = NeighborIndex::new(&g_pos, (2.0 * g_max).max(self.eta_eps));
        let mut good_disjoint = true;
        for (a, &i) in self.i_g.iter().enumerate() {
            g_index.for_each_within(phys[i], s[i] + g_max, |b, d| {
                let j = self.i_g[b];
                if b != a && d <= s[i] + s[j] {
                    good_disjoint = false;
                }
            });
        }

        let b_pos: Vec<Vec3<f64>> = self.i_b.iter().map(|&i| phys[i]).collect();
        let b_max = self.i_b.iter().map(|&i| 2.0 * s[i]).fold(0.0, f64::max);
        let b_index = NeighborIndex::new(&b_pos, self.eta_eps.max(b_max));
        let half = 0.5 * self.eta_eps;
        let mut separation = true;
        for &i in &self.i_g {
            b_index.for_each_within(phys[i], half + s[i] + b_max, |b, d| {
                let j = self.i_b[b];
                if d - s[i] - 2.0 * s[j] < half {
                    separation = false;
                }
            });
        }

        let d_z_bounds = self
            .good
            .iter()
            .all(|g| 2.0 * s[g.index] <= g.d_z && g.d_z <= self.epsilon);
        InvariantReport {
            partition,
            good_disjoint,
            separation,
            d_z_bounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub epsilon: f64,
    pub r_eps: f64,
    /// `ε^d · #I_b`
    pub bad_density: f64,
    /// `ε^d · #(T^{2/M}(Φ) ∩ ε⁻¹W \ I_{g,M})`
    pub truncation_defect: f64,
    pub invariants: InvariantReport,
}

pub fn decomposition_diagnostics(
    real: &MppRealization,
    epsilons: &[f64],
    alpha: f64,
    m: f64,
) -> Result<Vec<DiagnosticsRow>> {
    for w in epsilons.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::domain("epsilons must be strictly decreasing"));
        }
    }
    let far: Vec<bool> = close_flags(&real.positions(), 2.0 / m)
        .into_iter()
        .map(|c| !c)
        .collect();
    epsilons
        .iter()
        .map(|&eps| {
            let dec = good_bad_decompose(real, eps, alpha, m)?;
            let ed = eps.powi(DIM as i32);
            let mut in_gm = vec![false; real.points.len()];
            for &i in &dec.i_gm {
                in_gm[i] = true;
            }
            let defect = dec.members.iter().filter(|&&i| far[i] && !in_gm[i]).count();
            Ok(DiagnosticsRow {
                epsilon: eps,
                r_eps: dec.r_eps,
                bad_density: ed * dec.i_b.len() as f64,
                truncation_defect: ed * defect as f64,
                invariants: dec.verify(real),
            })
        })
        .collect()
}
