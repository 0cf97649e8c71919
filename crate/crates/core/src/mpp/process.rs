//! Generator descriptors, mark laws and window sampling.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use super::neighbors::NeighborIndex;
use super::{MarkedPoint, MppRealization};
use crate::capacity::{mark_capacity_with, GridCapacityOptions};
use crate::error::{Error, Result};
use crate::geometry::HoleShape;
use crate::numerics::Aabb;
use crate::real::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedShape {
    pub weight: f64,
    pub shape: HoleShape<f64>,
}

/// Distribution of the hole shape attached to each point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarkLaw {
    Fixed {
        shape: HoleShape<f64>,
    },
    /// Finite mixture; weights need not be normalised.
    Finite {
        choices: Vec<WeightedShape>,
    },
}

impl MarkLaw {
    pub fn fixed(shape: HoleShape<f64>) -> Self {
        MarkLaw::Fixed { shape }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MarkLaw::Fixed { shape } => shape
                .validate()
                .map_err(|e| Error::config(format!("marks.shape: {e}"))),
            MarkLaw::Finite { choices } => {
                if choices.is_empty() {
                    return Err(Error::config(
                        "marks.choices: at least one shape is required",
                    ));
                }
                let mut total = 0.0;
                for (i, c) in choices.iter().enumerate() {
                    if !(c.weight.is_finite() && c.weight >= 0.0) {
                        return Err(Error::config(format!(
                            "marks.choices[{i}].weight: must be finite and >= 0"
                        )));
                    }
                    c.shape
                        .validate()
                        .map_err(|e| Error::config(format!("marks.choices[{i}].shape: {e}")))?;
                    total += c.weight;
                }
                if !(total > 0.0) {
                    return Err(Error::config("marks.choices: weights must not all be zero"));
                }
                Ok(())
            }
        }
    }

    pub fn shapes(&self) -> Vec<&HoleShape<f64>> {
        match self {
            MarkLaw::Fixed { shape } => vec![shape],
            MarkLaw::Finite { choices } => choices.iter().map(|c| &c.shape).collect(),
        }
    }

    /// Returns a copy with every shape multiplied by `t`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        Ok(match self {
            MarkLaw::Fixed { shape } => MarkLaw::Fixed {
                shape: shape.scale(t)?,
            },
            MarkLaw::Finite { choices } => MarkLaw::Finite {
                choices: choices
                    .iter()
                    .map(|c| {
                        Ok(WeightedShape {
                            weight: c.weight,
                            shape: c.shape.scale(t)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            },
        })
    }
}

/// Point-process descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Poisson {
        intensity: f64,
        marks: MarkLaw,
    },
    Lattice {
        spacing: f64,
        marks: MarkLaw,
    },
    PerturbedLattice {
        spacing: f64,
        jitter: f64,
        marks: MarkLaw,
    },
    MaternHardcore {
        intensity: f64,
        hardcore_radius: f64,
        marks: MarkLaw,
    },
    /// One Bernoulli(p) coin per realization picks `first` (probability p)
    /// or `second`.
    Mixture {
        first: Box<GeneratorSpec>,
        second: Box<GeneratorSpec>,
        p: f64,
    },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "{name}: must be finite and > 0, got {v}"
        )))
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            GeneratorSpec::Poisson { intensity, marks } => {
                positive("intensity", *intensity)?;
                marks.validate()
            }
            GeneratorSpec::Lattice { spacing, marks } => {
                positive("spacing", *spacing)?;
                marks.validate()
            }
            GeneratorSpec::PerturbedLattice {
                spacing,
                jitter,
                marks,
            } => {
                positive("spacing", *spacing)?;
                if !(jitter.is_finite() && *jitter >= 0.0) {
                    return Err(Error::config(format!(
                        "jitter: must be finite and >= 0, got {jitter}"
                    )));
                }
                marks.validate()
            }
            GeneratorSpec::MaternHardcore {
                intensity,
                hardcore_radius,
                marks,
            } => {
                positive("intensity", *intensity)?;
                positive("hardcore_radius", *hardcore_radius)?;
                marks.validate()
            }
            GeneratorSpec::Mixture { first, second, p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::config(format!("p: must lie in [0, 1], got {p}")));
                }
                first
                    .validate()
                    .map_err(|e| Error::config(format!("first.{}", strip(e))))?;
                second
                    .validate()
                    .map_err(|e| Error::config(format!("second.{}", strip(e))))
            }
        }
    }

    /// Every shape the generator can emit.
    pub fn shapes(&self) -> Vec<&HoleShape<f64>> {
        match self {
            GeneratorSpec::Poisson { marks, .. }
            | GeneratorSpec::Lattice { marks, .. }
            | GeneratorSpec::PerturbedLattice { marks, .. }
            | GeneratorSpec::MaternHardcore { marks, .. } => marks.shapes(),
            GeneratorSpec::Mixture { first, second, .. } => {
                let mut v = first.shapes();
                v.extend(second.shapes());
                v
            }
        }
    }

    /// Same generator with every mark shape multiplied by `t`.
    pub fn with_scaled_marks(&self, t: f64) -> Result<Self> {
        Ok(match self {
            GeneratorSpec::Poisson { intensity, marks } => GeneratorSpec::Poisson {
                intensity: *intensity,
                marks: marks.scaled(t)?,
            },
            GeneratorSpec::Lattice { spacing, marks } => GeneratorSpec::Lattice {
                spacing: *spacing,
                marks: marks.scaled(t)?,
            },
            GeneratorSpec::PerturbedLattice {
                spacing,
                jitter,
                marks,
            } => GeneratorSpec::PerturbedLattice {
                spacing: *spacing,
                jitter: *jitter,
                marks: marks.scaled(t)?,
            },
            GeneratorSpec::MaternHardcore {
                intensity,
                hardcore_radius,
                marks,
            } => GeneratorSpec::MaternHardcore {
                intensity: *intensity,
                hardcore_radius: *hardcore_radius,
                marks: marks.scaled(t)?,
            },
            GeneratorSpec::Mixture { first, second, p } => GeneratorSpec::Mixture {
                first: Box::new(first.with_scaled_marks(t)?),
                second: Box::new(second.with_scaled_marks(t)?),
                p: *p,
            },
        })
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    /// Grid nodes per axis for capacities of non-ball marks.
    pub cap_resolution: usize,
    /// Richardson-extrapolate those capacities.
    pub extrapolate: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            cap_resolution: 65,
            extrapolate: false,
        }
    }
}

/// Samples `spec` on `window` with marks and capacities attached.
pub fn sample_process(
    spec: &GeneratorSpec,
    window: &Aabb<f64>,
    seed: u64,
) -> Result<MppRealization> {
    sample_process_with(spec, window, seed, &SampleOptions::default())
}

pub fn sample_process_with(
    spec: &GeneratorSpec,
    window: &Aabb<f64>,
    seed: u64,
    opts: &SampleOptions,
) -> Result<MppRealization> {
    window
        .validate()
        .map_err(|e| Error::config(format!("window: {}", strip(e))))?;
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache: Vec<(HoleShape<f64>, f64)> = Vec::new();
    let points = sample_component(spec, window, &mut rng, opts, &mut cache)?;
    Ok(MppRealization {
        window: *window,
        generator: Some(spec.clone()),
        seed,
        cap_resolution: Some(opts.cap_resolution),
        points,
    })
}

fn sample_component(
    spec: &GeneratorSpec,
    window: &Aabb<f64>,
    rng: &mut ChaCha8Rng,
    opts: &SampleOptions,
    cache: &mut Vec<(HoleShape<f64>, f64)>,
) -> Result<Vec<MarkedPoint>> {
    let (positions, marks) = match spec {
        GeneratorSpec::Poisson { intensity, marks } => {
            (poisson_positions(*intensity, window, rng)?, marks)
        }
        GeneratorSpec::Lattice { spacing, marks } => {
            (lattice_positions(*spacing, 0.0, window, rng), marks)
        }
        GeneratorSpec::PerturbedLattice {
            spacing,
            jitter,
            marks,
        } => (lattice_positions(*spacing, *jitter, window, rng), marks),
        GeneratorSpec::MaternHardcore {
            intensity,
            hardcore_radius,
            marks,
        } => {
            let outer = window.expanded(*hardcore_radius);
            let all = poisson_positions(*intensity, &outer, rng)?;
            let close = close_flags(&all, *hardcore_radius);
            let kept = all
                .into_iter()
                .zip(close)
                .filter(|(z, c)| !c && window.contains_half_open(*z))
                .map(|(z, _)| z)
                .collect();
            (kept, marks)
        }
        GeneratorSpec::Mixture { first, second, p } => {
            let pick_first = rng.random_bool(*p);
            let chosen = if pick_first { first } else { second };
            return sample_component(chosen, window, rng, opts, cache);
        }
    };
    attach_marks(positions, marks, rng, opts, cache)
}

fn poisson_positions(
    intensity: f64,
    window: &Aabb<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec3<f64>>> {
    let mean = intensity * window.volume();
    let count = if mean > 0.0 {
        let law = Poisson::new(mean).map_err(|e| Error::config(format!("intensity: {e}")))?;
        law.sample(rng) as usize
    } else {
        0
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut z = [0.0; 3];
        for a in 0..3 {
            // rejection keeps the half-open convention exact under rounding
            loop {
                let u: f64 = rng.random();
                let x = window.min[a] + u * window.side(a);
                if x < window.max[a] {
                    z[a] = x;
                    break;
                }
            }
        }
        out.push(z);
    }
    Ok(out)
}

fn lattice_positions(
    spacing: f64,
    jitter: f64,
    window: &Aabb<f64>,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec3<f64>> {
    let range = |a: usize| {
        let lo = ((window.min[a] - jitter) / spacing).floor() as i64 - 1;
        let hi = ((window.max[a] + jitter) / spacing).ceil() as i64 + 1;
        lo..=hi
    };
    let mut out = Vec::new();
    for k in range(2) {
        for j in range(1) {
            for i in range(0) {
                let mut z = [i as f64 * spacing, j as f64 * spacing, k as f64 * spacing];
                if jitter > 0.0 {
                    for c in z.iter_mut() {
                        *c += rng.random_range(-jitter..=jitter);
                    }
                }
                if window.contains_half_open(z) {
                    out.push(z);
                }
            }
        }
    }
    out
}

fn attach_marks(
    positions: Vec<Vec3<f64>>,
    law: &MarkLaw,
    rng: &mut ChaCha8Rng,
    opts: &SampleOptions,
    cache: &mut Vec<(HoleShape<f64>, f64)>,
) -> Result<Vec<MarkedPoint>> {
    let shapes = law.shapes();
    let mut caps = Vec::with_capacity(shapes.len());
    for s in &shapes {
        caps.push(cached_capacity(s, opts, cache)?);
    }
    let picker = match law {
        MarkLaw::Fixed { .. } => None,
        MarkLaw::Finite { choices } => Some(
            WeightedIndex::new(choices.iter().map(|c| c.weight))
                .map_err(|e| Error::config(format!("marks.choices: {e}")))?,
        ),
    };
    Ok(positions
        .into_iter()
        .map(|z| {
            let i = picker.as_ref().map_or(0, |w| w.sample(rng));
            MarkedPoint {
                z,
                shape: shapes[i].clone(),
                rho: shapes[i].circumradius(),
                cap: caps[i],
            }
        })
        .collect())
}

fn cached_capacity(
    shape: &HoleShape<f64>,
    opts: &SampleOptions,
    cache: &mut Vec<(HoleShape<f64>, f64)>,
) -> Result<f64> {
    if let Some((_, c)) = cache.iter().find(|(s, _)| s == shape) {
        return Ok(*c);
    }
    let grid_opts = GridCapacityOptions {
        extrapolate: opts.extrapolate,
        ..Default::default()
    };
    let c = mark_capacity_with(shape, opts.cap_resolution, &grid_opts)?.value;
    cache.push((shape.clone(), c));
    Ok(c)
}

/// `flags[i]` is true when point `i` has a point at a different position
/// strictly closer than `delta`.
pub fn close_flags(positions: &[Vec3<f64>], delta: f64) -> Vec<bool> {
    let index = NeighborIndex::new(positions, delta);
    (0..positions.len())
        .map(|i| index.nearest_other(i, delta) < delta)
        .collect()
}
