//! Hole shapes (the mark space) and their placement in physical space.
//!
//! Every shape is described relative to the origin, which is the centre of
//! an enclosing ball. Three parametric families are supported, each with an
//! exact containment test and an exact circumradius.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{add3, dist3, norm3, scale3, sub3, Real, Vec3};

/// One component of a [`HoleShape::UnionOfBalls`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallComponent<T> {
    pub center: Vec3<T>,
    pub radius: T,
}

/// Compact hole shape positioned about the origin.
///
/// JSON form: `{"kind": "ball", "params": {"radius": 1.0}}`,
/// `{"kind": "axis_box", "params": {"half_widths": [1, 2, 3]}}` or
/// `{"kind": "union_of_balls", "params": {"balls": [{"center": [..], "radius": r}, ..]}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    content = "params",
    rename_all = "snake_case",
    deny_unknown_fields
)]
pub enum HoleShape<T> {
    Ball { radius: T },
    AxisBox { half_widths: Vec3<T> },
    UnionOfBalls { balls: Vec<BallComponent<T>> },
}

impl<T: Real> HoleShape<T> {
    pub fn ball(radius: T) -> Result<Self> {
        let s = HoleShape::Ball { radius };
        s.validate()?;
        Ok(s)
    }

    pub fn axis_box(half_widths: Vec3<T>) -> Result<Self> {
        let s = HoleShape::AxisBox { half_widths };
        s.validate()?;
        Ok(s)
    }

    pub fn union_of_balls(balls: Vec<BallComponent<T>>) -> Result<Self> {
        let s = HoleShape::UnionOfBalls { balls };
        s.validate()?;
        Ok(s)
    }

    /// Checks that all length parameters are finite and nonnegative and that
    /// the shape is nonempty.
    pub fn validate(&self) -> Result<()> {
        let ok = |v: T| v.is_finite() && v >= T::zero();
        match self {
            HoleShape::Ball { radius } => {
                if !ok(*radius) {
                    return Err(Error::domain(format!(
                        "ball radius {radius} must be finite and >= 0"
                    )));
                }
            }
            HoleShape::AxisBox { half_widths } => {
                if !half_widths.iter().all(|&w| ok(w)) {
                    return Err(Error::domain("box half widths must be finite and >= 0"));
                }
            }
            HoleShape::UnionOfBalls { balls } => {
                if balls.is_empty() {
                    return Err(Error::domain("union of balls needs at least one ball"));
                }
                for b in balls {
                    if !ok(b.radius) || !b.center.iter().all(|c| c.is_finite()) {
                        return Err(Error::domain(
                            "union component must have finite center and radius >= 0",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Closed-set containment: boundary points count as inside.
    pub fn contains(&self, x: Vec3<T>) -> bool {
        match self {
            HoleShape::Ball { radius } => norm3(x) <= *radius,
            HoleShape::AxisBox { half_widths } => (0..3).all(|a| x[a].abs() <= half_widths[a]),
            HoleShape::UnionOfBalls { balls } => {
                balls.iter().any(|b| dist3(x, b.center) <= b.radius)
            }
        }
    }

    pub fn diameter(&self) -> T {
        let two = T::lit(2.0);
        match self {
            HoleShape::Ball { radius } => two * *radius,
            HoleShape::AxisBox { half_widths } => two * norm3(*half_widths),
            HoleShape::UnionOfBalls { balls } => {
                let mut best = T::zero();
                for (i, a) in balls.iter().enumerate() {
                    for b in &balls[i..] {
                        let d = dist3(a.center, b.center) + a.radius + b.radius;
                        if d > best {
                            best = d;
                        }
                    }
                }
                best
            }
        }
    }

    /// Radius of the smallest origin-centred ball containing the shape.
    pub fn circumradius(&self) -> T {
        match self {
            HoleShape::Ball { radius } => *radius,
            HoleShape::AxisBox { half_widths } => norm3(*half_widths),
            HoleShape::UnionOfBalls { balls } => balls
                .iter()
                .map(|b| norm3(b.center) + b.radius)
                .fold(T::zero(), T::max),
        }
    }

    /// Radius of the largest origin-centred ball inside the shape, or zero if
    /// the origin is not covered.
    pub fn inradius(&self) -> T {
        match self {
            HoleShape::Ball { radius } => *radius,
            HoleShape::AxisBox { half_widths } => {
                half_widths.iter().copied().fold(T::infinity(), T::min)
            }
            HoleShape::UnionOfBalls { balls } => balls
                .iter()
                .map(|b| (b.radius - norm3(b.center)).max(T::zero()))
                .fold(T::zero(), T::max),
        }
    }

    pub fn scale(&self, t: T) -> Result<Self> {
        if !(t > T::zero()) || !t.is_finite() {
            return Err(Error::domain(format!("scale factor {t} must be positive")));
        }
        Ok(match self {
            HoleShape::Ball { radius } => HoleShape::Ball {
                radius: *radius * t,
            },
            HoleShape::AxisBox { half_widths } => HoleShape::AxisBox {
                half_widths: scale3(*half_widths, t),
            },
            HoleShape::UnionOfBalls { balls } => HoleShape::UnionOfBalls {
                balls: balls
                    .iter()
                    .map(|b| BallComponent {
                        center: scale3(b.center, t),
                        radius: b.radius * t,
                    })
                    .collect(),
            },
        })
    }

    pub fn is_ball(&self) -> bool {
        matches!(self, HoleShape::Ball { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            HoleShape::Ball { .. } => "ball",
            HoleShape::AxisBox { .. } => "axis_box",
            HoleShape::UnionOfBalls { .. } => "union_of_balls",
        }
    }
}

impl HoleShape<f64> {
    /// Parses either the JSON form or a shorthand: `ball:R`, `box:A,B,C`, or
    /// `union:X,Y,Z,R;X,Y,Z,R;...`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let shape = if text.starts_with('{') {
            serde_json::from_str::<HoleShape<f64>>(text)
                .map_err(|e| Error::config(format!("shape json: {e}")))?
        } else {
            let (kind, rest) = text
                .split_once(':')
                .ok_or_else(|| Error::config(format!("shape `{text}`: expected kind:params")))?;
            let nums = |s: &str| -> Result<Vec<f64>> {
                s.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::config(format!("shape `{text}`: {e}")))
                    })
                    .collect()
            };
            match kind.trim() {
                "ball" => {
                    let v = nums(rest)?;
                    if v.len() != 1 {
                        return Err(Error::config("ball shorthand takes one radius"));
                    }
                    HoleShape::Ball { radius: v[0] }
                }
                "box" | "axis_box" => {
                    let v = nums(rest)?;
                    match v.len() {
                        1 => HoleShape::AxisBox {
                            half_widths: [v[0]; 3],
                        },
                        3 => HoleShape::AxisBox {
                            half_widths: [v[0], v[1], v[2]],
                        },
                        _ => return Err(Error::config("box shorthand takes 1 or 3 half widths")),
                    }
                }
                "union" | "union_of_balls" => {
                    let mut balls = Vec::new();
                    for part in rest.split(';').filter(|p| !p.trim().is_empty()) {
                        let v = nums(part)?;
                        if v.len() != 4 {
                            return Err(Error::config("union component needs x,y,z,r"));
                        }
                        balls.push(BallComponent {
                            center: [v[0], v[1], v[2]],
                            radius: v[3],
                        });
                    }
                    HoleShape::UnionOfBalls { balls }
                }
                other => return Err(Error::config(format!("unknown shape kind `{other}`"))),
            }
        };
        shape.validate().map_err(|e| Error::config(e.to_string()))?;
        Ok(shape)
    }
}

/// A hole shape translated and scaled into physical space:
/// `center + scale_factor * shape`.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement<T> {
    pub center: Vec3<T>,
    pub scale_factor: T,
    pub shape: HoleShape<T>,
}

impl<T: Real> Placement<T> {
    pub fn new(center: Vec3<T>, scale_factor: T, shape: HoleShape<T>) -> Result<Self> {
        if !(scale_factor > T::zero()) || !scale_factor.is_finite() {
            return Err(Error::domain(format!(
                "placement scale {scale_factor} must be positive"
            )));
        }
        Ok(Placement {
            center,
            scale_factor,
            shape,
        })
    }

    pub fn contains(&self, x: Vec3<T>) -> bool {
        let local = scale3(sub3(x, self.center), T::one() / self.scale_factor);
        self.shape.contains(local)
    }

    pub fn circumradius(&self) -> T {
        self.scale_factor * self.shape.circumradius()
    }

    /// Axis-aligned bounding box of the enclosing ball.
    pub fn bounding_box(&self) -> (Vec3<T>, Vec3<T>) {
        let r = self.circumradius();
        (add3(self.center, [-r; 3]), add3(self.center, [r; 3]))
    }
}
