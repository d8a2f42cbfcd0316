//! Damped Gauss–Newton (Levenberg–Marquardt) for small dense least-squares problems.

use nalgebra::{DMatrix, DVector};

pub trait LeastSquaresProblem {
    fn residuals(&self, p: &DVector<f64>) -> DVector<f64>;

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64>;

    /// Maps a trial point back into the feasible box.
    fn project(&self, _p: &mut DVector<f64>) {}
}

#[derive(Debug, Clone, Copy)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Relative parameter-step tolerance.
    pub xtol: f64,
    /// Relative cost-reduction tolerance.
    pub ftol: f64,
    pub initial_damping: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            xtol: 1e-10,
            ftol: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: DVector<f64>,
    /// `½ Σ r²` at `params`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

fn small_step(step: &DVector<f64>, p: &DVector<f64>, xtol: f64) -> bool {
    step.iter().zip(p.iter()).all(|(d, x)| d.abs() <= xtol * (x.abs() + xtol))
}

pub fn levenberg_marquardt<P: LeastSquaresProblem>(problem: &P, p0: DVector<f64>, cfg: &LmConfig) -> LmOutcome {
    let mut p = p0;
    problem.project(&mut p);
    let mut r = problem.residuals(&p);
    let mut c = cost(&r);
    let mut lambda = cfg.initial_damping;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        if !c.is_finite() {
            break;
        }
        if c == 0.0 {
            return LmOutcome {
                params: p,
                cost: c,
                iterations,
                converged: true,
            };
        }
        iterations += 1;
        let j = problem.jacobian(&p);
        let jt = j.transpose();
        let a = &jt * &j;
        let g = &jt * &r;
        let diag_floor = a.diagonal().max() * 1e-15 + f64::MIN_POSITIVE;

        loop {
            let mut damped = a.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * a[(i, i)].max(diag_floor);
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&(-&g))) else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    return LmOutcome {
                        params: p,
                        cost: c,
                        iterations,
                        converged: false,
                    };
                }
                continue;
            };
            let mut trial = &p + &step;
            problem.project(&mut trial);
            let taken = &trial - &p;
            let r_trial = problem.residuals(&trial);
            let c_trial = cost(&r_trial);
            if c_trial.is_finite() && c_trial < c {
                let reduction = (c - c_trial) / c;
                let tiny = small_step(&taken, &trial, cfg.xtol);
                // Gain ratio against the quadratic model; poor agreement keeps damping up.
                let predicted = -(g.dot(&taken) + 0.5 * taken.dot(&(&a * &taken)));
                let rho = if predicted > 0.0 { (c - c_trial) / predicted } else { 0.0 };
                p = trial;
                r = r_trial;
                c = c_trial;
                lambda = (lambda * (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0)).max(1e-12);
                if tiny || reduction <= cfg.ftol {
                    return LmOutcome {
                        params: p,
                        cost: c,
                        iterations,
                        converged: true,
                    };
                }
                break;
            }
            // No descent: either we sit at the minimum to working precision or damping must grow.
            if small_step(&taken, &p, cfg.xtol) {
                return LmOutcome {
                    params: p,
                    cost: c,
                    iterations,
                    converged: true,
                };
            }
            lambda *= 4.0;
            if lambda > 1e20 {
                return LmOutcome {
                    params: p,
                    cost: c,
                    iterations,
                    converged: true,
                };
            }
        }
    }
    LmOutcome {
        params: p,
        cost: c,
        iterations,
        converged: false,
    }
}
