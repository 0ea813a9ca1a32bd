use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::operator::{ForwardOperator, GaussianBlur2d, Toeplitz};
use crate::error::{Result, VgaError};
use crate::linalg::LinearOperator;

/// Smallest accepted problem size.
pub const MIN_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemName {
    Phillips,
    Gravity,
    Heat,
    Foxgood,
    Blur2d,
}

impl std::str::FromStr for ProblemName {
    type Err = VgaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "phillips" => Ok(Self::Phillips),
            "gravity" => Ok(Self::Gravity),
            "heat" => Ok(Self::Heat),
            "foxgood" => Ok(Self::Foxgood),
            "blur2d" => Ok(Self::Blur2d),
            _ => Err(VgaError::UnknownProblem(s.to_string())),
        }
    }
}

impl std::fmt::Display for ProblemName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Phillips => "phillips",
            Self::Gravity => "gravity",
            Self::Heat => "heat",
            Self::Foxgood => "foxgood",
            Self::Blur2d => "blur2d",
        };
        f.write_str(s)
    }
}

/// Target interval for the Poisson rates `exp(Ax_true)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateScale {
    pub rate_min: f64,
    pub rate_max: f64,
}

impl Default for RateScale {
    fn default() -> Self {
        Self {
            rate_min: 0.5,
            rate_max: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemParams {
    /// Blur truncation width (2D problem only).
    pub blur_band: usize,
    /// Blur kernel variance (2D problem only).
    pub blur_variance: f64,
    /// `None` keeps the unscaled true solution.
    pub rate_scale: Option<RateScale>,
}

impl Default for ProblemParams {
    fn default() -> Self {
        Self {
            blur_band: 99,
            blur_variance: 1.5,
            rate_scale: Some(RateScale::default()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestProblem {
    pub name: ProblemName,
    pub operator: ForwardOperator,
    pub x_true: DVector<f64>,
}

/// Midpoints of `n` equal cells on `[lo, hi]`.
fn midpoints(lo: f64, hi: f64, n: usize) -> (f64, DVector<f64>) {
    let h = (hi - lo) / n as f64;
    (h, DVector::from_fn(n, |i, _| lo + (i as f64 + 0.5) * h))
}

fn phillips_phi(x: f64) -> f64 {
    if x.abs() < 3.0 {
        1.0 + (PI * x / 3.0).cos()
    } else {
        0.0
    }
}

/// Builds one of the classical first-kind Fredholm test problems by midpoint
/// quadrature, or the circular 2D Gaussian blur on a `size × size` image.
pub fn make_test_problem(
    name: ProblemName,
    size: usize,
    params: &ProblemParams,
) -> Result<TestProblem> {
    if size < MIN_SIZE {
        return Err(VgaError::InvalidConfig(format!(
            "problem size {size} is below the minimum {MIN_SIZE}"
        )));
    }
    let n = size;
    let (operator, x_true) = match name {
        ProblemName::Phillips => {
            let (h, t) = midpoints(-6.0, 6.0, n);
            let col = DVector::from_fn(n, |k, _| h * phillips_phi(k as f64 * h));
            let x = t.map(phillips_phi);
            (ForwardOperator::Toeplitz(Toeplitz::symmetric(col)), x)
        }
        ProblemName::Gravity => {
            let d = 0.25;
            let (h, t) = midpoints(0.0, 1.0, n);
            let col = DVector::from_fn(n, |k, _| {
                let s = k as f64 * h;
                h * d * (d * d + s * s).powf(-1.5)
            });
            let x = t.map(|t| (PI * t).sin() + 0.5 * (2.0 * PI * t).sin());
            (ForwardOperator::Toeplitz(Toeplitz::symmetric(col)), x)
        }
        ProblemName::Foxgood => {
            let (h, t) = midpoints(0.0, 1.0, n);
            let a = DMatrix::from_fn(n, n, |i, j| h * (t[i] * t[i] + t[j] * t[j]).sqrt());
            (ForwardOperator::Dense(a), t.clone())
        }
        ProblemName::Heat => {
            let kappa = 1.0;
            let h = 1.0 / n as f64;
            let c = h / (2.0 * kappa * PI.sqrt());
            let dd = 1.0 / (4.0 * kappa * kappa);
            let col = DVector::from_fn(n, |k, _| {
                let t = (k as f64 + 0.5) * h;
                c * t.powf(-1.5) * (-dd / t).exp()
            });
            let mut row = DVector::zeros(n);
            row[0] = col[0];
            let x = DVector::from_fn(n, |i, _| {
                if i >= n / 2 {
                    return 0.0;
                }
                let ti = (i + 1) as f64 * 20.0 / n as f64;
                if ti < 2.0 {
                    0.75 * ti * ti / 4.0
                } else if ti < 3.0 {
                    0.75 + (ti - 2.0) * (3.0 - ti)
                } else {
                    0.75 * (-(ti - 3.0) * 2.0).exp()
                }
            });
            (ForwardOperator::Toeplitz(Toeplitz::new(col, row)?), x)
        }
        ProblemName::Blur2d => {
            let blur = GaussianBlur2d::new(n, n, params.blur_band, params.blur_variance)?;
            (ForwardOperator::Blur2d(blur), two_blobs(n))
        }
    };
    let x_true = match params.rate_scale {
        Some(scale) => rate_scale(&operator, &x_true, scale)?,
        None => x_true,
    };
    Ok(TestProblem {
        name,
        operator,
        x_true,
    })
}

/// Two Gaussian blobs of different height and width on an `n × n` grid,
/// row-major, peak value 1.
pub fn two_blobs(n: usize) -> DVector<f64> {
    let nf = n as f64;
    let blob = |p: f64, q: f64, cp: f64, cq: f64, w: f64| {
        (-((p - cp).powi(2) + (q - cq).powi(2)) / (2.0 * w * w)).exp()
    };
    let img = DVector::from_fn(n * n, |k, _| {
        let (p, q) = ((k / n) as f64, (k % n) as f64);
        blob(p, q, 0.35 * nf, 0.35 * nf, 0.12 * nf)
            + 0.7 * blob(p, q, 0.68 * nf, 0.62 * nf, 0.08 * nf)
    });
    let peak = img.max();
    img / peak
}

/// Maps `x` affinely to `c x + t 1` so that `A(c x + t 1)` spans the log of
/// the target rate interval as closely as possible in least squares.
///
/// Each row is matched to the linear image of `Ax` onto
/// `[ln rate_min, ln rate_max]`. Falls back to `t = 0` when `A 1` is
/// proportional to `Ax`.
pub fn rate_scale(a: &ForwardOperator, x: &DVector<f64>, scale: RateScale) -> Result<DVector<f64>> {
    if !(scale.rate_min > 0.0 && scale.rate_max > scale.rate_min) {
        return Err(VgaError::InvalidConfig(format!(
            "rate interval [{}, {}] is not a positive nondegenerate interval",
            scale.rate_min, scale.rate_max
        )));
    }
    let ax = a.apply(x);
    let a1 = a.apply(&DVector::from_element(x.len(), 1.0));
    let (lo, hi) = (ax.min(), ax.max());
    if !(hi > lo) {
        return Err(VgaError::InvalidData(
            "A x_true is constant; cannot scale rates".into(),
        ));
    }
    let (tmin, tmax) = (scale.rate_min.ln(), scale.rate_max.ln());
    let target = ax.map(|v| tmin + (v - lo) / (hi - lo) * (tmax - tmin));

    let design = DMatrix::from_columns(&[ax.clone(), a1]);
    let normal = design.tr_mul(&design);
    let rhs = design.tr_mul(&target);
    let det = normal[(0, 0)] * normal[(1, 1)] - normal[(0, 1)] * normal[(1, 0)];
    let (c, t) = if det.abs() > 1e-10 * normal[(0, 0)] * normal[(1, 1)] {
        let sol = normal.lu().solve(&rhs).expect("nonsingular 2x2");
        (sol[0], sol[1])
    } else {
        ((tmax - tmin) / (hi - lo), 0.0)
    };
    Ok(x * c + DVector::from_element(x.len(), t))
}
