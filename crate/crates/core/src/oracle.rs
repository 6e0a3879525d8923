//! Linear-Gaussian ground truth for the solvers.
//!
//! With isotropic Gaussian data `x0 ~ N(mu, s0^2 I)` the marginal at time `t`
//! is `N(alpha_t mu, (alpha_t^2 s0^2 + sigma_t^2) I)`, the optimal predictors
//! are affine in `x`, and the probability-flow map between two times is the
//! affine map that matches means and standard deviations. That gives closed
//! forms for everything the convergence tests need, plus an adaptive
//! Dormand-Prince reference integrator (in `lambda`) for arbitrary models.

use crate::error::{Error, Result};
use crate::models::{predict_data, Parameterization, PredictionModel};
use crate::quadrature;
use crate::schedule::NoiseSchedule;

/// Isotropic Gaussian data distribution `N(mu, s0^2 I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianOracle {
    pub mu: Vec<f64>,
    pub s0: f64,
}

impl GaussianOracle {
    pub fn new(mu: Vec<f64>, s0: f64) -> Result<Self> {
        if !(s0 > 0.0 && s0.is_finite()) {
            return Err(Error::Argument(format!("s0 must be positive, got {s0}")));
        }
        if mu.is_empty() {
            return Err(Error::Argument("mu must have at least one component".into()));
        }
        Ok(Self { mu, s0 })
    }

    /// `mu` repeated over `dim` components.
    pub fn isotropic(mu: f64, s0: f64, dim: usize) -> Result<Self> {
        Self::new(vec![mu; dim], s0)
    }

    /// Standard-normal data, for which the probability flow is the identity.
    pub fn standard_normal(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            s0: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Per-component marginal variance `alpha_t^2 s0^2 + sigma_t^2`.
    pub fn marginal_var(&self, schedule: &NoiseSchedule, t: f64) -> Result<f64> {
        let c = schedule.alpha_sigma_lambda(t)?;
        Ok(c.alpha * c.alpha * self.s0 * self.s0 + c.sigma * c.sigma)
    }

    pub fn marginal_mean(&self, schedule: &NoiseSchedule, t: f64) -> Result<Vec<f64>> {
        let a = schedule.alpha(t)?;
        Ok(self.mu.iter().map(|m| a * m).collect())
    }

    /// `log q_t(x)`.
    pub fn log_density(&self, schedule: &NoiseSchedule, x: &[f64], t: f64) -> Result<f64> {
        let v = self.marginal_var(schedule, t)?;
        let mean = self.marginal_mean(schedule, t)?;
        let ss: f64 = x.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(-0.5 * ss / v - 0.5 * x.len() as f64 * (2.0 * std::f64::consts::PI * v).ln())
    }

    /// Optimal noise predictor `sigma_t (x - alpha_t mu) / v_t`.
    pub fn eps(&self, schedule: &NoiseSchedule, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let c = schedule.alpha_sigma_lambda(t)?;
        let v = c.alpha * c.alpha * self.s0 * self.s0 + c.sigma * c.sigma;
        Ok(x.iter()
            .zip(&self.mu)
            .map(|(xi, m)| c.sigma * (xi - c.alpha * m) / v)
            .collect())
    }

    /// Optimal data predictor `(s0^2 alpha_t x + sigma_t^2 mu) / v_t`.
    pub fn x0(&self, schedule: &NoiseSchedule, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let c = schedule.alpha_sigma_lambda(t)?;
        let s2 = self.s0 * self.s0;
        let v = c.alpha * c.alpha * s2 + c.sigma * c.sigma;
        Ok(x.iter()
            .zip(&self.mu)
            .map(|(xi, m)| (s2 * c.alpha * xi + c.sigma * c.sigma * m) / v)
            .collect())
    }

    /// Exact probability-flow map from `t_from` to `t_to`:
    /// `m_to + sqrt(v_to / v_from) (x - m_from)`.
    pub fn exact_flow(&self, schedule: &NoiseSchedule, x: &[f64], t_from: f64, t_to: f64) -> Result<Vec<f64>> {
        let k = (self.marginal_var(schedule, t_to)? / self.marginal_var(schedule, t_from)?).sqrt();
        let a_from = schedule.alpha(t_from)?;
        let a_to = schedule.alpha(t_to)?;
        Ok(x.iter()
            .zip(&self.mu)
            .map(|(xi, m)| a_to * m + k * (xi - a_from * m))
            .collect())
    }

    /// The oracle as a model exposing the requested view.
    pub fn model(&self, schedule: &NoiseSchedule, parameterization: Parameterization) -> OracleModel {
        OracleModel {
            oracle: self.clone(),
            schedule: schedule.clone(),
            parameterization,
        }
    }
}

/// [`GaussianOracle`] bound to a schedule.
#[derive(Debug, Clone)]
pub struct OracleModel {
    oracle: GaussianOracle,
    schedule: NoiseSchedule,
    parameterization: Parameterization,
}

impl PredictionModel for OracleModel {
    fn parameterization(&self) -> Parameterization {
        self.parameterization
    }
    fn dim(&self) -> usize {
        self.oracle.dim()
    }
    fn eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        match self.parameterization {
            Parameterization::Noise => self.oracle.eps(&self.schedule, x, t),
            Parameterization::Data => self.oracle.x0(&self.schedule, x, t),
        }
    }
}

/// Probability-flow velocity `dx/dt` in the data parameterization:
/// `(f + g^2 / (2 sigma^2)) x - alpha g^2 / (2 sigma^2) x0`.
pub fn probability_flow_velocity(schedule: &NoiseSchedule, x: &[f64], x0: &[f64], t: f64) -> Result<Vec<f64>> {
    let c = schedule.alpha_sigma_lambda(t)?;
    let f = schedule.drift(t)?;
    let k = schedule.diffusion_sq(t)? / (2.0 * c.sigma * c.sigma);
    Ok(x.iter()
        .zip(x0)
        .map(|(xi, di)| (f + k) * xi - c.alpha * k * di)
        .collect())
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth minus fourth order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// continuous extension
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// One accepted step with its dense-output polynomial.
#[derive(Debug, Clone)]
struct DenseSegment {
    start: f64,
    h: f64,
    coeffs: [Vec<f64>; 5],
}

impl DenseSegment {
    fn eval(&self, lambda: f64) -> Vec<f64> {
        let th = (lambda - self.start) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        (0..r1.len())
            .map(|i| r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i]))))
            .collect()
    }
}

/// Dense solution of the data-prediction ODE in `lambda`.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    segments: Vec<DenseSegment>,
    pub x_end: Vec<f64>,
    pub evaluations: usize,
}

impl ReferenceTrajectory {
    /// `x` at `lambda`, interpolated inside the accepted step containing it.
    pub fn at(&self, lambda: f64) -> Vec<f64> {
        let idx = self
            .segments
            .partition_point(|s| s.start + s.h < lambda)
            .min(self.segments.len() - 1);
        self.segments[idx].eval(lambda)
    }

    pub fn steps(&self) -> usize {
        self.segments.len()
    }
}

/// `alpha` at log-SNR `lambda` for a VP schedule.
fn alpha_of_lambda(lambda: f64) -> f64 {
    // alpha^2 = sigmoid(2 lambda)
    (1.0 / (1.0 + (-2.0 * lambda).exp())).sqrt()
}

/// Integrates `dx/dlambda = -alpha^2 x + alpha x_theta(x, t(lambda))` from
/// `t_from` down to `t_to` with per-step error control `local_tol`.
pub fn integrate_lambda_ode<M: PredictionModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x_start: &[f64],
    t_from: f64,
    t_to: f64,
    local_tol: f64,
) -> Result<ReferenceTrajectory> {
    let l0 = schedule.lambda(t_from)?;
    let l1 = schedule.lambda(t_to)?;
    let (lo, hi) = schedule.lambda_range();
    let rhs = |lambda: f64, x: &[f64]| -> Result<Vec<f64>> {
        let lam = lambda.clamp(lo, hi);
        let t = schedule.inverse_lambda(lam)?;
        let x0 = predict_data(model, schedule, x, t)?;
        let a = alpha_of_lambda(lam);
        Ok(x.iter().zip(&x0).map(|(xi, di)| a * (di - a * xi)).collect())
    };
    let span = l1 - l0;
    let dim = x_start.len();
    let mut segments = Vec::new();
    let mut evaluations = 0;
    let mut x = x_start.to_vec();
    if span == 0.0 {
        return Ok(ReferenceTrajectory {
            segments: vec![DenseSegment {
                start: l0,
                h: 1.0,
                coeffs: [x.clone(), vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]],
            }],
            x_end: x,
            evaluations,
        });
    }
    let mut lambda = l0;
    let mut h = span.abs().min(0.05) * span.signum();
    let mut k1 = rhs(lambda, &x)?;
    evaluations += 1;
    let min_h = 1e-13 * span.abs().max(1.0);
    while (l1 - lambda) * span.signum() > 0.0 {
        if (lambda + h - l1) * span.signum() > 0.0 {
            h = l1 - lambda;
        }
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        k.push(k1.clone());
        for s in 1..7 {
            let xs: Vec<f64> = (0..dim)
                .map(|i| x[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>())
                .collect();
            k.push(rhs(lambda + C[s] * h, &xs)?);
        }
        evaluations += 6;
        // stage 7 is evaluated at the fifth-order solution (FSAL)
        let x_new: Vec<f64> = (0..dim)
            .map(|i| x[i] + h * (0..6).map(|j| A[6][j] * k[j][i]).sum::<f64>())
            .collect();
        let err = (0..dim)
            .map(|i| {
                let e = h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
                let scale = local_tol * (1.0 + x[i].abs().max(x_new[i].abs()));
                (e / scale).abs()
            })
            .fold(0.0f64, f64::max);
        if !err.is_finite() {
            return Err(Error::Stiffness(format!("non-finite error estimate at lambda = {lambda}")));
        }
        if err <= 1.0 {
            let ydiff: Vec<f64> = (0..dim).map(|i| x_new[i] - x[i]).collect();
            let bspl: Vec<f64> = (0..dim).map(|i| h * k[0][i] - ydiff[i]).collect();
            let r4: Vec<f64> = (0..dim).map(|i| ydiff[i] - h * k[6][i] - bspl[i]).collect();
            let r5: Vec<f64> = (0..dim)
                .map(|i| h * (0..7).map(|j| D[j] * k[j][i]).sum::<f64>())
                .collect();
            segments.push(DenseSegment {
                start: lambda,
                h,
                coeffs: [x.clone(), ydiff, bspl, r4, r5],
            });
            lambda += h;
            x = x_new;
            k1 = k.swap_remove(6);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h.abs() < min_h {
            return Err(Error::Stiffness(format!(
                "step size underflow ({h:e}) at lambda = {lambda}"
            )));
        }
    }
    Ok(ReferenceTrajectory {
        segments,
        x_end: x,
        evaluations,
    })
}

/// Endpoint of a reference solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x_end: Vec<f64>,
    /// Max-norm change of the endpoint when the tolerance was halved.
    pub tolerance: f64,
    pub evaluations: usize,
}

/// High-accuracy solution of the probability-flow ODE from `t_max` to `t_min`.
pub fn reference_solve<M: PredictionModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x_start: &[f64],
    tol: f64,
) -> Result<ReferenceSolution> {
    reference_solve_between(model, schedule, x_start, schedule.t_max(), schedule.t_min(), tol)
}

/// High-accuracy solution between two arbitrary times.
///
/// The run is repeated with half the step tolerance; the endpoint change must
/// stay below `tol`, otherwise both runs are tightened by a factor of ten (up
/// to four times).
pub fn reference_solve_between<M: PredictionModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x_start: &[f64],
    t_from: f64,
    t_to: f64,
    tol: f64,
) -> Result<ReferenceSolution> {
    if !(1e-12..=1e-4).contains(&tol) {
        return Err(Error::Argument(format!(
            "reference tolerance must lie in [1e-12, 1e-4], got {tol}"
        )));
    }
    let mut local = (0.01 * tol).max(5e-15);
    let mut evaluations = 0;
    for _ in 0..5 {
        let coarse = integrate_lambda_ode(model, schedule, x_start, t_from, t_to, local)?;
        let fine = integrate_lambda_ode(model, schedule, x_start, t_from, t_to, 0.5 * local)?;
        evaluations += coarse.evaluations + fine.evaluations;
        let change = coarse
            .x_end
            .iter()
            .zip(&fine.x_end)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change <= tol {
            return Ok(ReferenceSolution {
                x_end: fine.x_end,
                tolerance: change,
                evaluations,
            });
        }
        local = (0.1 * local).max(5e-15);
    }
    Err(Error::Stiffness(format!(
        "reference endpoint did not settle to {tol:e}"
    )))
}

/// Checks the variation-of-constants solution of the data-prediction ODE,
/// `x_t = sigma_t/sigma_s x_s + sigma_t int e^lambda x0(x_lambda, lambda) dlambda`,
/// against the reference integrator.
///
/// The integral is evaluated by adaptive quadrature along the dense reference
/// trajectory; the return value is the Euclidean distance between the
/// quadrature-based endpoint and the integrator's endpoint.
pub fn verify_exact_solution<M: PredictionModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x_s: &[f64],
    t_s: f64,
    t_t: f64,
    quad_tol: f64,
) -> Result<f64> {
    if !(t_t < t_s) {
        return Err(Error::Argument(format!("need t_t < t_s, got {t_s} -> {t_t}")));
    }
    let cs = schedule.alpha_sigma_lambda(t_s)?;
    let ct = schedule.alpha_sigma_lambda(t_t)?;
    let local = (1e-3 * quad_tol).max(1e-14);
    let path = integrate_lambda_ode(model, schedule, x_s, t_s, t_t, local)?;
    let (lo, hi) = schedule.lambda_range();
    let integral = quadrature::integrate(
        |lambda| {
            let lam = lambda.clamp(lo, hi);
            let t = schedule.inverse_lambda(lam)?;
            let x = path.at(lambda);
            let x0 = predict_data(model, schedule, &x, t)?;
            let w = lambda.exp();
            Ok(x0.iter().map(|v| w * v).collect())
        },
        cs.lambda,
        ct.lambda,
        0.1 * quad_tol / ct.sigma,
        0.0,
    )?;
    let ratio = ct.sigma / cs.sigma;
    let ss: f64 = x_s
        .iter()
        .zip(&integral.value)
        .zip(&path.x_end)
        .map(|((xs, int), xe)| {
            let d = ratio * xs + ct.sigma * int - xe;
            d * d
        })
        .sum();
    Ok(ss.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{eps_to_x0, FnModel};
    use approx::assert_relative_eq;

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::default_linear()
    }

    #[test]
    fn predictor_examples() {
        let s = schedule();
        let std = GaussianOracle::standard_normal(3);
        let x = [0.4, -1.0, 2.0];
        let sigma = s.sigma(0.3).unwrap();
        let alpha = s.alpha(0.3).unwrap();
        let e = std.eps(&s, &x, 0.3).unwrap();
        let d = std.x0(&s, &x, 0.3).unwrap();
        for i in 0..3 {
            assert_relative_eq!(e[i], sigma * x[i], epsilon = 1e-15);
            assert_relative_eq!(d[i], alpha * x[i], epsilon = 1e-15);
        }
        let g = GaussianOracle::isotropic(1.0, 0.5, 2).unwrap();
        let at_mean = g.marginal_mean(&s, 0.6).unwrap();
        assert!(g.eps(&s, &at_mean, 0.6).unwrap().iter().all(|v| v.abs() < 1e-15));
        let tiny = GaussianOracle::isotropic(0.7, 1e-9, 1).unwrap();
        assert_relative_eq!(tiny.x0(&s, &[3.0], 0.5).unwrap()[0], 0.7, epsilon = 1e-9);
    }

    #[test]
    fn reference_point_matches_score_of_log_density() {
        let s = schedule();
        let g = GaussianOracle::isotropic(1.0, 0.5, 1).unwrap();
        let (x, t) = (1.0, 0.5);
        let c = s.alpha_sigma_lambda(t).unwrap();
        let v = c.alpha * c.alpha * 0.25 + c.sigma * c.sigma;
        let want = c.sigma * (x - c.alpha) / v;
        let got = g.eps(&s, &[x], t).unwrap()[0];
        assert_relative_eq!(got, want, epsilon = 1e-15);
        let h = 1e-5;
        let fd = (g.log_density(&s, &[x + h], t).unwrap() - g.log_density(&s, &[x - h], t).unwrap()) / (2.0 * h);
        assert_relative_eq!(got, -c.sigma * fd, max_relative = 1e-8);
    }

    #[test]
    fn invalid_oracles() {
        assert!(GaussianOracle::new(vec![0.0], 0.0).is_err());
        assert!(GaussianOracle::new(vec![], 1.0).is_err());
    }

    #[test]
    fn data_predictor_equals_converted_noise_predictor() {
        let s = schedule();
        let g = GaussianOracle::new(vec![0.3, -1.0, 2.0, 0.5], 0.7).unwrap();
        for k in 0..20 {
            let t = 0.001 + 0.998 * (k as f64 + 0.5) / 20.0;
            let x: Vec<f64> = (0..4).map(|i| ((k * 4 + i) as f64).sin() * 2.0).collect();
            let c = s.alpha_sigma_lambda(t).unwrap();
            let via = eps_to_x0(&g.eps(&s, &x, t).unwrap(), &x, c.alpha, c.sigma).unwrap();
            let direct = g.x0(&s, &x, t).unwrap();
            for i in 0..4 {
                // relative to the magnitude of x / alpha, which the conversion divides through
                assert!((via[i] - direct[i]).abs() < 1e-12 * (1.0 + x[i].abs() / c.alpha));
            }
        }
    }

    #[test]
    fn identity_flow_velocity_vanishes() {
        for s in [schedule(), NoiseSchedule::cosine()] {
            let g = GaussianOracle::standard_normal(2);
            for k in 0..50 {
                let t = s.t_min() + (s.t_max() - s.t_min()) * (k as f64 + 0.3) / 50.0;
                let x = [(k as f64).cos() * 3.0, (k as f64 * 0.7).sin()];
                let x0 = g.x0(&s, &x, t).unwrap();
                let v = probability_flow_velocity(&s, &x, &x0, t).unwrap();
                assert!(v.iter().all(|u| u.abs() < 1e-10), "{v:?} at t = {t}");
            }
        }
    }

    #[test]
    fn reference_matches_closed_form_gaussian_flow() {
        let s = schedule();
        let g = GaussianOracle::isotropic(1.0, 0.5, 4).unwrap();
        let model = g.model(&s, Parameterization::Data);
        let x = [0.3, -1.2, 0.8, 2.1];
        let r = reference_solve(&model, &s, &x, 1e-10).unwrap();
        let exact = g.exact_flow(&s, &x, 1.0, 1e-3).unwrap();
        for i in 0..4 {
            assert!((r.x_end[i] - exact[i]).abs() < 1e-9, "{} vs {}", r.x_end[i], exact[i]);
        }
        assert!(r.tolerance <= 1e-10);
    }

    #[test]
    fn dense_output_tracks_the_exact_flow() {
        let s = schedule();
        let g = GaussianOracle::isotropic(1.0, 0.5, 2).unwrap();
        let model = g.model(&s, Parameterization::Noise);
        let x = [0.5, -0.5];
        let path = integrate_lambda_ode(&model, &s, &x, 1.0, 1e-3, 1e-12).unwrap();
        let (l0, l1) = (s.lambda(1.0).unwrap(), s.lambda(1e-3).unwrap());
        for k in 0..=40 {
            let l = l0 + (l1 - l0) * k as f64 / 40.0 * 0.999_9;
            let t = s.inverse_lambda(l).unwrap();
            let want = g.exact_flow(&s, &x, 1.0, t).unwrap();
            let got = path.at(l);
            for i in 0..2 {
                assert!((got[i] - want[i]).abs() < 1e-9, "lambda {l}: {} vs {}", got[i], want[i]);
            }
        }
    }

    #[test]
    fn reference_identity_flow_and_constant_model() {
        let s = schedule();
        let std = GaussianOracle::standard_normal(4).model(&s, Parameterization::Data);
        let x = [0.1, -0.4, 1.3, -2.2];
        let r = reference_solve(&std, &s, &x, 1e-10).unwrap();
        for i in 0..4 {
            assert!((r.x_end[i] - x[i]).abs() < 1e-10);
        }

        let c = 0.6;
        let constant = FnModel::new(Parameterization::Data, 1, move |_x: &[f64], _t| vec![c]);
        let r = reference_solve(&constant, &s, &[0.2], 1e-10).unwrap();
        let c0 = s.alpha_sigma_lambda(1.0).unwrap();
        let c1 = s.alpha_sigma_lambda(1e-3).unwrap();
        let want = c1.sigma / c0.sigma * 0.2 + c1.sigma * c * (c1.lambda.exp() - c0.lambda.exp());
        assert!((r.x_end[0] - want).abs() < 1e-10);
    }

    #[test]
    fn tolerance_ordering_and_validation() {
        let s = schedule();
        let g = GaussianOracle::isotropic(1.0, 0.5, 2).unwrap().model(&s, Parameterization::Data);
        let x = [1.0, -1.0];
        let a = reference_solve(&g, &s, &x, 1e-6).unwrap();
        let b = reference_solve(&g, &s, &x, 1e-9).unwrap();
        assert!(a.x_end.iter().zip(&b.x_end).all(|(u, v)| (u - v).abs() < 1e-6));
        assert!(matches!(reference_solve(&g, &s, &x, 1e-3), Err(Error::Argument(_))));
        assert!(matches!(reference_solve(&g, &s, &x, 1e-13), Err(Error::Argument(_))));
    }

    #[test]
    fn exact_solution_residuals() {
        let s = schedule();
        let c = [0.4, -0.9];
        let constant = FnModel::new(Parameterization::Data, 2, move |_x: &[f64], _t| c.to_vec());
        let r = verify_exact_solution(&constant, &s, &[0.3, 0.2], 1.0, 1e-3, 1e-13).unwrap();
        assert!(r < 1e-12, "constant residual {r}");

        let std = GaussianOracle::standard_normal(4).model(&s, Parameterization::Data);
        let r = verify_exact_solution(&std, &s, &[0.3, 0.2, -1.0, 0.7], 1.0, 1e-3, 1e-9).unwrap();
        assert!(r < 1e-8, "identity-flow residual {r}");
        assert!(verify_exact_solution(&std, &s, &[0.0; 4], 0.2, 0.3, 1e-9).is_err());
    }
}
