use nalgebra::DVector;

use crate::error::{Result, VgaError};

/// Stopping rule for [`pcg_solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgOptions {
    /// Relative residual target `‖Mx − b‖ ≤ tol·‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Re-orthogonalize each residual against all previous ones in the
    /// `P⁻¹` inner product. Keeps the finite-termination property of CG in
    /// floating point at the cost of storing `2 · iterations` vectors.
    pub reorthogonalize: bool,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 10,
            reorthogonalize: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PcgOutcome {
    pub solution: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for an SPD operator.
///
/// `precond_inverse` applies the inverse of the preconditioner, i.e. it maps
/// a residual `r` to `P⁻¹ r`. With the prior precision `C0⁻¹` as the
/// preconditioner that is simply a product with `C0`.
///
/// A nonpositive curvature `pᵗMp` or `rᵗP⁻¹r` means one of the operators is
/// not SPD and is reported as [`VgaError::PcgBreakdown`].
pub fn pcg_solve<M, P>(
    apply: M,
    rhs: &DVector<f64>,
    precond_inverse: P,
    initial: Option<&DVector<f64>>,
    opts: &PcgOptions,
) -> Result<PcgOutcome>
where
    M: Fn(&DVector<f64>) -> DVector<f64>,
    P: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = rhs.len();
    let mut x = match initial {
        Some(x0) => {
            if x0.len() != n {
                return Err(VgaError::DimensionMismatch {
                    context: "pcg_solve initial guess",
                    expected: n,
                    found: x0.len(),
                });
            }
            x0.clone()
        }
        None => DVector::zeros(n),
    };
    let bnorm = rhs.norm();
    if bnorm == 0.0 {
        return Ok(PcgOutcome {
            solution: DVector::zeros(n),
            iterations: 0,
            converged: true,
            relative_residual: 0.0,
        });
    }
    let mut r = if initial.is_some() {
        rhs - apply(&x)
    } else {
        rhs.clone()
    };
    let mut rel = r.norm() / bnorm;
    if rel <= opts.tol {
        return Ok(PcgOutcome {
            solution: x,
            iterations: 0,
            converged: true,
            relative_residual: rel,
        });
    }
    let mut z = precond_inverse(&r);
    let mut rz = r.dot(&z);
    if !(rz > 0.0) {
        return Err(VgaError::PcgBreakdown {
            iteration: 0,
            curvature: rz,
        });
    }
    let mut basis: Vec<(DVector<f64>, DVector<f64>, f64)> = Vec::new();
    if opts.reorthogonalize {
        basis.push((r.clone(), z.clone(), rz));
    }
    let mut p = z.clone();
    for it in 1..=opts.max_iter {
        let mp = apply(&p);
        let curvature = p.dot(&mp);
        if !(curvature > 0.0) {
            return Err(VgaError::PcgBreakdown {
                iteration: it,
                curvature,
            });
        }
        let step = rz / curvature;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &mp, 1.0);
        rel = r.norm() / bnorm;
        if rel <= opts.tol {
            return Ok(PcgOutcome {
                solution: x,
                iterations: it,
                converged: true,
                relative_residual: rel,
            });
        }
        z = precond_inverse(&r);
        for (rj, zj, rzj) in &basis {
            let c = r.dot(zj) / rzj;
            r.axpy(-c, rj, 1.0);
            z.axpy(-c, zj, 1.0);
        }
        let rz_next = r.dot(&z);
        if !(rz_next > 0.0) {
            return Err(VgaError::PcgBreakdown {
                iteration: it,
                curvature: rz_next,
            });
        }
        if opts.reorthogonalize {
            basis.push((r.clone(), z.clone(), rz_next));
        }
        let beta = rz_next / rz;
        rz = rz_next;
        p *= beta;
        p += &z;
    }
    Ok(PcgOutcome {
        solution: x,
        iterations: opts.max_iter,
        converged: false,
        relative_residual: rel,
    })
}
