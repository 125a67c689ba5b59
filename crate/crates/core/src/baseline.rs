//! Grid-based group-sparse recovery: a DFT basis or oversampled DFT frame
//! `F` and the equality-constrained program
//!
//! ```text
//! minimize  sum_i ||Θ_i||_2   subject to  F_Ω Θ = Z_Ω
//! ```
//!
//! solved by ADMM between row-wise group shrinkage and projection onto the
//! affine feasible set.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::linalg::{hermitian_eig, HermitianMatrix};
use crate::matrix::{ComplexMatrix, C64};
use crate::model::{atom, ObservationSet};

/// Eigenvalues of `F_Ω F_Ω^*` below this fraction of the largest are treated as zero.
const PINV_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DftFrame {
    n: usize,
    c: usize,
    columns: ComplexMatrix,
}

impl DftFrame {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn oversampling(&self) -> usize {
        self.c
    }

    /// Number of atoms `c * n`.
    pub fn d(&self) -> usize {
        self.c * self.n
    }

    pub fn columns(&self) -> &ComplexMatrix {
        &self.columns
    }

    /// Grid frequency of column `j`.
    pub fn frequency(&self, j: usize) -> f64 {
        j as f64 / self.d() as f64
    }
}

/// `n x (c n)` dictionary whose column `j` is the atom at `j / (c n)`.
pub fn dft_frame(n: usize, c: usize) -> Result<DftFrame> {
    if n == 0 || c == 0 {
        return Err(invalid("frame needs n >= 1 and c >= 1"));
    }
    let d = c * n;
    let cols: Vec<Vec<C64>> = (0..d)
        .map(|j| atom(j as f64 / d as f64, n))
        .collect::<Result<_>>()?;
    Ok(DftFrame {
        n,
        c,
        columns: ComplexMatrix::from_columns(&cols)?,
    })
}

/// `F Θ`.
pub fn reconstruct(frame: &DftFrame, theta: &ComplexMatrix) -> Result<ComplexMatrix> {
    if theta.rows() != frame.d() {
        return Err(mismatch(format!(
            "coefficients have {} rows but the frame has {} atoms",
            theta.rows(),
            frame.d()
        )));
    }
    frame.columns.matmul(theta)
}

/// Shrinks each row's Euclidean norm by `threshold`, zeroing rows that fall below it.
pub fn group_soft_threshold(m: &ComplexMatrix, threshold: f64) -> ComplexMatrix {
    let mut out = m.clone();
    for i in 0..m.rows() {
        let norm = m.row_norm(i);
        let keep = if norm > threshold {
            1.0 - threshold / norm
        } else {
            0.0
        };
        out.row_mut(i).iter_mut().for_each(|z| *z *= keep);
    }
    out
}

pub fn group_norm(theta: &ComplexMatrix) -> f64 {
    (0..theta.rows()).map(|i| theta.row_norm(i)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupLassoParams {
    /// Penalty for data normalized to unit Frobenius norm.
    pub rho: f64,
    pub max_iters: usize,
    /// Relative feasibility tolerance on `||F_Ω Θ - Z||_F / ||Z||_F`.
    pub feas_tol: f64,
    /// Relative tolerance on the change of `Θ` between iterations.
    pub step_tol: f64,
    pub adaptive_rho: bool,
    pub rho_mu: f64,
    pub rho_tau: f64,
    /// Over-relaxation weight in `(0, 2)`.
    pub relaxation: f64,
}

impl Default for GroupLassoParams {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iters: 50_000,
            feas_tol: 1e-9,
            step_tol: 1e-9,
            adaptive_rho: true,
            rho_mu: 3.0,
            rho_tau: 2.0,
            relaxation: 1.6,
        }
    }
}

impl GroupLassoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.feas_tol > 0.0 && self.step_tol > 0.0) {
            return Err(invalid("rho and tolerances must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be positive"));
        }
        if !(self.rho_mu > 1.0 && self.rho_tau > 1.0) {
            return Err(invalid("rho_mu and rho_tau must exceed 1"));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(invalid("relaxation must lie in (0, 2)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLassoSolution {
    pub theta: ComplexMatrix,
    pub x_hat: ComplexMatrix,
    pub group_norm: f64,
    /// Same value as `group_norm`, under the name shared with the SDP solution.
    pub objective: f64,
    /// `||F_Ω Θ - Z_Ω||_F`.
    pub feasibility_residual: f64,
    pub iters: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    /// Ratio of extreme nonzero singular values of `F_Ω`.
    pub condition_estimate: f64,
}

/// The sampled frame `F_Ω` applied through length-`d` FFTs.
struct SampledFrame {
    omega: Vec<usize>,
    d: usize,
    scale: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SampledFrame {
    fn new(frame: &DftFrame, omega: &[usize]) -> Self {
        let d = frame.d();
        let mut planner = FftPlanner::new();
        Self {
            omega: omega.to_vec(),
            d,
            scale: 1.0 / (frame.n() as f64).sqrt(),
            forward: planner.plan_fft_forward(d),
            inverse: planner.plan_fft_inverse(d),
        }
    }

    /// `F_Ω V` for `V` of size `d x L`.
    fn apply(&self, v: &ComplexMatrix, buf: &mut [C64]) -> ComplexMatrix {
        let l = v.cols();
        let mut out = ComplexMatrix::zeros(self.omega.len(), l);
        for j in 0..l {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = v[(i, j)];
            }
            self.inverse.process(buf);
            for (k, &row) in self.omega.iter().enumerate() {
                out[(k, j)] = buf[row] * self.scale;
            }
        }
        out
    }

    /// `F_Ω^* R` for `R` of size `m x L`.
    fn adjoint(&self, r: &ComplexMatrix, buf: &mut [C64]) -> ComplexMatrix {
        let l = r.cols();
        let mut out = ComplexMatrix::zeros(self.d, l);
        for j in 0..l {
            buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
            for (k, &row) in self.omega.iter().enumerate() {
                buf[row] = r[(k, j)];
            }
            self.forward.process(buf);
            for (i, b) in buf.iter().enumerate() {
                out[(i, j)] = b * self.scale;
            }
        }
        out
    }
}

/// Projection onto `{V : F_Ω V = Z}` through `F_Ω^* (F_Ω F_Ω^*)^+`.
struct AffineProjector {
    op: SampledFrame,
    gram_pinv: ComplexMatrix,
    condition: f64,
    buf: Vec<C64>,
}

impl AffineProjector {
    fn new(frame: &DftFrame, omega: &[usize]) -> Result<Self> {
        let rows = frame.columns.select_rows(omega)?;
        let gram = HermitianMatrix::new(rows.matmul(&rows.adjoint())?)?;
        let eig = hermitian_eig(&gram)?;
        let top = eig.values.last().copied().unwrap_or(0.0);
        let kept: Vec<f64> = eig
            .values
            .iter()
            .copied()
            .filter(|&v| v > PINV_RCOND * top)
            .collect();
        let condition = match kept.first() {
            Some(&lo) => (top / lo).sqrt(),
            None => f64::INFINITY,
        };
        let gram_pinv = eig.reconstruct_with(|v| if v > PINV_RCOND * top { 1.0 / v } else { 0.0 });
        Ok(Self {
            op: SampledFrame::new(frame, omega),
            gram_pinv,
            condition,
            buf: vec![C64::new(0.0, 0.0); frame.d()],
        })
    }

    /// `F_Ω^+ R` for an `m x L` right-hand side.
    fn min_norm(&mut self, r: &ComplexMatrix) -> Result<ComplexMatrix> {
        let g = self.gram_pinv.matmul(r)?;
        Ok(self.op.adjoint(&g, &mut self.buf))
    }

    fn residual(&mut self, v: &ComplexMatrix, z: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.op.apply(v, &mut self.buf).sub(z)
    }

    /// Nearest point of `{V : F_Ω V = Z}`.
    fn project(&mut self, v: &ComplexMatrix, z: &ComplexMatrix) -> Result<ComplexMatrix> {
        let r = self.residual(v, z)?;
        v.sub(&self.min_norm(&r)?)
    }
}

pub fn solve_group_mmv(
    frame: &DftFrame,
    obs: &ObservationSet,
    params: &GroupLassoParams,
) -> Result<GroupLassoSolution> {
    params.validate()?;
    if obs.n() != frame.n() {
        return Err(mismatch(format!(
            "observations have n = {} but the frame has n = {}",
            obs.n(),
            frame.n()
        )));
    }
    let d = frame.d();
    let l = obs.num_signals();
    let mut projector = AffineProjector::new(frame, obs.omega())?;

    let z_norm = obs.observed().frobenius_norm();
    if z_norm == 0.0 {
        let theta = ComplexMatrix::zeros(d, l);
        return Ok(GroupLassoSolution {
            x_hat: ComplexMatrix::zeros(frame.n(), l),
            theta,
            group_norm: 0.0,
            objective: 0.0,
            feasibility_residual: 0.0,
            iters: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            converged: true,
            condition_estimate: projector.condition,
        });
    }
    // The program is homogeneous in Z, so solve at unit scale.
    let z = obs.observed().scale_real(1.0 / z_norm);

    let phi0 = projector.min_norm(&z)?;
    let consistency = projector.residual(&phi0, &z)?.frobenius_norm();
    if consistency > 1e-8 {
        return Err(Error::Infeasible(format!(
            "observations are inconsistent with the sampled frame rows (residual {consistency:e})"
        )));
    }

    let mut rho = params.rho;
    let mut phi = phi0;
    let mut theta = ComplexMatrix::zeros(d, l);
    let mut dual = ComplexMatrix::zeros(d, l);
    let (mut primal_res, mut dual_res) = (f64::INFINITY, f64::INFINITY);
    let mut converged = false;
    let mut iters = 0;
    let alpha = params.relaxation;
    for iter in 1..=params.max_iters {
        iters = iter;
        let theta_prev = theta;
        theta = group_soft_threshold(&phi.sub(&dual)?, 1.0 / rho);
        let phi_prev = phi;
        let relaxed = theta
            .scale_real(alpha)
            .add(&phi_prev.scale_real(1.0 - alpha))?;
        phi = projector.project(&relaxed.add(&dual)?, &z)?;
        dual = dual.add(&relaxed.sub(&phi)?)?;

        primal_res = theta.sub(&phi)?.frobenius_norm();
        dual_res = rho * phi.sub(&phi_prev)?.frobenius_norm();
        let step = theta.sub(&theta_prev)?.frobenius_norm() / theta.frobenius_norm().max(1e-300);
        if step <= params.step_tol
            && projector.residual(&theta, &z)?.frobenius_norm() <= params.feas_tol
        {
            converged = true;
            break;
        }
        if params.adaptive_rho && iter % 10 == 0 {
            // Scaled multiplier: rescale when rho changes.
            if primal_res > params.rho_mu * dual_res {
                rho *= params.rho_tau;
                dual = dual.scale_real(1.0 / params.rho_tau);
            } else if dual_res > params.rho_mu * primal_res {
                rho /= params.rho_tau;
                dual = dual.scale_real(params.rho_tau);
            }
        }
    }

    let theta = theta.scale_real(z_norm);
    let x_hat = reconstruct(frame, &theta)?;
    let feasibility_residual = projector.residual(&theta, obs.observed())?.frobenius_norm();
    let gn = group_norm(&theta);
    Ok(GroupLassoSolution {
        theta,
        x_hat,
        group_norm: gn,
        objective: gn,
        feasibility_residual,
        iters,
        primal_residual: primal_res * z_norm,
        dual_residual: dual_res * z_norm,
        converged,
        condition_estimate: projector.condition,
    })
}
