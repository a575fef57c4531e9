//! Thin wrapper around Levenberg-Marquardt with a numerical Jacobian.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};

struct Problem<R> {
    p: DVector<f64>,
    residual: R,
}

impl<R> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<R>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
{
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = (self.residual)(&self.p);
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        Some(jacobian(&self.residual, &self.p))
    }
}

/// Central-difference Jacobian.
pub(crate) fn jacobian<R>(residual: &R, p: &DVector<f64>) -> DMatrix<f64>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
{
    let m = residual(p).len();
    let mut jac = DMatrix::zeros(m, p.len());
    let mut q = p.clone();
    for j in 0..p.len() {
        let h = 1e-6 * p[j].abs().max(1e-3);
        q[j] = p[j] + h;
        let up = residual(&q);
        q[j] = p[j] - h;
        let dn = residual(&q);
        q[j] = p[j];
        jac.set_column(j, &((up - dn) / (2.0 * h)));
    }
    jac
}

pub(crate) struct Solution {
    pub params: DVector<f64>,
    pub cost: f64,
    pub converged: bool,
}

/// Minimizes `½‖r(p)‖²` from `start`.
pub(crate) fn minimize<R>(start: DVector<f64>, residual: R) -> Solution
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
{
    let problem = Problem { p: start, residual };
    let (problem, report) = LevenbergMarquardt::new()
        .with_patience(200)
        .minimize(problem);
    let cost = (problem.residual)(&problem.p).norm_squared() / 2.0;
    Solution {
        params: problem.p,
        cost,
        converged: report.termination.was_successful() && cost.is_finite(),
    }
}
