//! Diffusion-SDE samplers built on the variation-of-constants solution in
//! `lambda`.
//!
//! The deterministic parts follow the exponential-integrator pattern of
//! [`crate::ode`]; the stochastic part is the exact Ito integral of the linear
//! term, which is Gaussian with a closed-form variance, so one standard-normal
//! vector `z` per step is enough.
//!
//! Multistep convention: `r` is the point visited before `s` (larger `t`,
//! smaller `lambda`), hence `r1 = (lambda_r - lambda_s) / h < 0`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{predict_data, predict_noise, PredictionModel};
use crate::ode::Interval;
use crate::schedule::NoiseSchedule;

/// Reproducible per-trajectory source of standard-normal vectors.
///
/// Each `(seed, stream)` pair selects an independent ChaCha8 keystream, so
/// trajectory `k` of a study uses stream `k` and never depends on the others.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    dim: usize,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, dim }
    }

    pub fn next_normal(&mut self) -> Vec<f64> {
        (0..self.dim)
            .map(|_| StandardNormal.sample(&mut self.rng))
            .collect()
    }
}

/// Coefficient of the first-order correction in the 2M SDE solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SdeCoefficients {
    /// `(e^h - 1 - h)/h ~ (e^h - 1)/2` and its data-prediction analogue.
    #[default]
    Simplified,
    /// The exact integrals of the linear interpolant.
    Exact,
}

fn combine(terms: &[(f64, &[f64])]) -> Vec<f64> {
    let dim = terms[0].1.len();
    (0..dim)
        .map(|i| terms.iter().map(|(c, v)| c * v[i]).sum())
        .collect()
}

fn check_len(expected: usize, v: &[f64]) -> Result<()> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(Error::Dimension {
            expected,
            got: v.len(),
        })
    }
}

/// Standard deviation of the noise term of the noise-prediction solvers:
/// `sigma_t sqrt(e^{2h} - 1)`.
pub fn noise_std_eps(step: &Interval) -> f64 {
    step.to.sigma * (2.0 * step.h).exp_m1().max(0.0).sqrt()
}

/// Standard deviation of the noise term of the data-prediction solvers:
/// `sigma_t sqrt(1 - e^{-2h})`.
pub fn noise_std_data(step: &Interval) -> f64 {
    step.to.sigma * (-(-2.0 * step.h).exp_m1()).max(0.0).sqrt()
}

/// SDE-DPM-Solver-1 update from `eps = eps_theta(x_s, s)`.
pub fn sde_1_update(x_s: &[f64], eps: &[f64], step: &Interval, z: &[f64]) -> Result<Vec<f64>> {
    check_len(x_s.len(), z)?;
    if step.is_degenerate() {
        return Ok(x_s.to_vec());
    }
    Ok(combine(&[
        (step.to.alpha / step.from.alpha, x_s),
        (-2.0 * step.to.sigma * step.h.exp_m1(), eps),
        (noise_std_eps(step), z),
    ]))
}

/// SDE-DPM-Solver++1 update from `x0 = x_theta(x_s, s)`.
pub fn sde_pp_1_update(x_s: &[f64], x0: &[f64], step: &Interval, z: &[f64]) -> Result<Vec<f64>> {
    check_len(x_s.len(), z)?;
    if step.is_degenerate() {
        return Ok(x_s.to_vec());
    }
    let h = step.h;
    Ok(combine(&[
        (step.to.sigma / step.from.sigma * (-h).exp(), x_s),
        (-step.to.alpha * (-2.0 * h).exp_m1(), x0),
        (noise_std_data(step), z),
    ]))
}

fn ratio_r1(lambda_r: f64, step: &Interval) -> Result<f64> {
    let r1 = (lambda_r - step.from.lambda) / step.h;
    if r1 == 0.0 || !r1.is_finite() {
        return Err(Error::Grid(format!("r1 must be finite and non-zero, got {r1}")));
    }
    Ok(r1)
}

/// SDE-DPM-Solver-2M update. `prior` is `(lambda_r, eps_theta(x_r, r))` from
/// the previous step; without it the update is first order.
pub fn sde_2m_update(
    x_s: &[f64],
    eps: &[f64],
    prior: Option<(f64, &[f64])>,
    step: &Interval,
    z: &[f64],
    form: SdeCoefficients,
) -> Result<Vec<f64>> {
    let first = sde_1_update(x_s, eps, step, z)?;
    let Some((lambda_r, eps_r)) = prior else {
        return Ok(first);
    };
    if step.is_degenerate() {
        return Ok(first);
    }
    check_len(x_s.len(), eps_r)?;
    let r1 = ratio_r1(lambda_r, step)?;
    let h = step.h;
    let c = match form {
        SdeCoefficients::Simplified => h.exp_m1(),
        SdeCoefficients::Exact => 2.0 * (h.exp_m1() - h) / h,
    };
    let k = step.to.sigma * c / r1;
    Ok(first
        .iter()
        .zip(eps_r.iter().zip(eps))
        .map(|(f, (er, es))| f - k * (er - es))
        .collect())
}

/// SDE-DPM-Solver++(2M) update. `prior` is `(lambda_r, x_theta(x_r, r))`.
pub fn sde_pp_2m_update(
    x_s: &[f64],
    x0: &[f64],
    prior: Option<(f64, &[f64])>,
    step: &Interval,
    z: &[f64],
    form: SdeCoefficients,
) -> Result<Vec<f64>> {
    let first = sde_pp_1_update(x_s, x0, step, z)?;
    let Some((lambda_r, x0_r)) = prior else {
        return Ok(first);
    };
    if step.is_degenerate() {
        return Ok(first);
    }
    check_len(x_s.len(), x0_r)?;
    let r1 = ratio_r1(lambda_r, step)?;
    let h = step.h;
    let c = match form {
        SdeCoefficients::Simplified => -0.5 * (-2.0 * h).exp_m1(),
        SdeCoefficients::Exact => ((-2.0 * h).exp_m1() + 2.0 * h) / (2.0 * h),
    };
    let k = step.to.alpha * c / r1;
    Ok(first
        .iter()
        .zip(x0_r.iter().zip(x0))
        .map(|(f, (dr, ds))| f + k * (dr - ds))
        .collect())
}

/// One SDE-DPM-Solver-1 step from `t_s` to `t_t`.
pub fn sde_1_step<M: PredictionModel + ?Sized>(
    x_s: &[f64],
    model: &M,
    t_s: f64,
    t_t: f64,
    z: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    let step = Interval::new(schedule, t_s, t_t)?;
    if step.is_degenerate() {
        return Ok(x_s.to_vec());
    }
    let eps = predict_noise(model, schedule, x_s, t_s)?;
    sde_1_update(x_s, &eps, &step, z)
}

/// One SDE-DPM-Solver++1 step from `t_s` to `t_t`.
pub fn sde_pp_1_step<M: PredictionModel + ?Sized>(
    x_s: &[f64],
    model: &M,
    t_s: f64,
    t_t: f64,
    z: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    let step = Interval::new(schedule, t_s, t_t)?;
    if step.is_degenerate() {
        return Ok(x_s.to_vec());
    }
    let x0 = predict_data(model, schedule, x_s, t_s)?;
    sde_pp_1_update(x_s, &x0, &step, z)
}

fn prior_lambda(schedule: &NoiseSchedule, t_r: f64, t_s: f64) -> Result<f64> {
    if !(t_r > t_s) {
        return Err(Error::Grid(format!(
            "buffered point must precede s in sampling order (t_r > t_s), got {t_r} <= {t_s}"
        )));
    }
    schedule.lambda(t_r)
}

/// One SDE-DPM-Solver-2M step with the buffered `(t_r, eps_theta(x_r, r))`.
#[allow(clippy::too_many_arguments)]
pub fn sde_2m_step<M: PredictionModel + ?Sized>(
    x_s: &[f64],
    model: &M,
    buffered: (f64, &[f64]),
    t_s: f64,
    t_t: f64,
    z: &[f64],
    schedule: &NoiseSchedule,
    form: SdeCoefficients,
) -> Result<Vec<f64>> {
    let step = Interval::new(schedule, t_s, t_t)?;
    if step.is_degenerate() {
        return Ok(x_s.to_vec());
    }
    let lambda_r = prior_lambda(schedule, buffered.0, t_s)?;
    let eps = predict_noise(model, schedule, x_s, t_s)?;
    sde_2m_update(x_s, &eps, Some((lambda_r, buffered.1)), &step, z, form)
}

/// One SDE-DPM-Solver++(2M) step with the buffered `(t_r, x_theta(x_r, r))`.
#[allow(clippy::too_many_arguments)]
pub fn sde_pp_2m_step<M: PredictionModel + ?Sized>(
    x_s: &[f64],
    model: &M,
    buffered: (f64, &[f64]),
    t_s: f64,
    t_t: f64,
    z: &[f64],
    schedule: &NoiseSchedule,
    form: SdeCoefficients,
) -> Result<Vec<f64>> {
    let step = Interval::new(schedule, t_s, t_t)?;
    if step.is_degenerate() {
        return Ok(x_s.to_vec());
    }
    let lambda_r = prior_lambda(schedule, buffered.0, t_s)?;
    let x0 = predict_data(model, schedule, x_s, t_s)?;
    sde_pp_2m_update(x_s, &x0, Some((lambda_r, buffered.1)), &step, z, form)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{FnModel, Parameterization};
    use crate::ode::{ddim_eta_step, sde_matched_eta};
    use approx::assert_relative_eq;

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::default_linear()
    }

    #[test]
    fn noise_stream_is_reproducible_and_streams_differ() {
        let mut a = NoiseStream::new(7, 0, 3);
        let mut b = NoiseStream::new(7, 0, 3);
        let mut c = NoiseStream::new(7, 1, 3);
        let (va, vb, vc) = (a.next_normal(), b.next_normal(), c.next_normal());
        assert_eq!(va, vb);
        assert_ne!(va, vc);
        assert_ne!(a.next_normal(), va);
    }

    #[test]
    fn first_order_limits() {
        let s = schedule();
        let zero = FnModel::new(Parameterization::Noise, 2, |_x: &[f64], _t| vec![0.0, 0.0]);
        let x = [0.8, -0.2];
        let out = sde_1_step(&x, &zero, 0.6, 0.2, &[0.0, 0.0], &s).unwrap();
        let ratio = s.alpha(0.2).unwrap() / s.alpha(0.6).unwrap();
        assert_relative_eq!(out[0], ratio * 0.8, epsilon = 1e-15);
        assert_eq!(sde_1_step(&x, &zero, 0.6, 0.6, &[1.0, 1.0], &s).unwrap(), x.to_vec());
        assert_eq!(sde_pp_1_step(&x, &zero, 0.6, 0.6, &[1.0, 1.0], &s).unwrap(), x.to_vec());
    }

    #[test]
    fn large_h_drives_the_data_step_to_alpha_x0() {
        let s = schedule();
        let step = Interval::new(&s, 1.0, 1e-3).unwrap();
        assert!(step.h > 9.0);
        let out = sde_pp_1_update(&[1.0], &[0.0], &step, &[0.0]).unwrap();
        assert!(out[0].abs() < 1e-3);
        let out = sde_pp_1_update(&[0.0], &[1.0], &step, &[0.0]).unwrap();
        assert_relative_eq!(out[0], step.to.alpha, max_relative = 1e-7);
    }

    #[test]
    fn data_step_matches_stochastic_ddim() {
        let s = schedule();
        let model = FnModel::new(Parameterization::Data, 2, |x: &[f64], t| {
            vec![(x[0] * t).tanh(), 0.3 - x[1]]
        });
        let x = [0.5, 1.5];
        let z = [0.7, -1.2];
        let step = Interval::new(&s, 0.5, 0.3).unwrap();
        let eta = sde_matched_eta(&step);
        let a = sde_pp_1_step(&x, &model, 0.5, 0.3, &z, &s).unwrap();
        let b = ddim_eta_step(&x, &model, 0.5, 0.3, eta, Some(&z), &s).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn multistep_with_equal_outputs_is_first_order() {
        let s = schedule();
        let step = Interval::new(&s, 0.5, 0.4).unwrap();
        let lr = s.lambda(0.6).unwrap();
        let x = [0.2, 0.9];
        let out = [0.4, -0.3];
        let z = [0.1, 0.2];
        for form in [SdeCoefficients::Simplified, SdeCoefficients::Exact] {
            let a = sde_2m_update(&x, &out, Some((lr, &out)), &step, &z, form).unwrap();
            let b = sde_1_update(&x, &out, &step, &z).unwrap();
            assert_eq!(a, b);
            let a = sde_pp_2m_update(&x, &out, Some((lr, &out)), &step, &z, form).unwrap();
            let b = sde_pp_1_update(&x, &out, &step, &z).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn multistep_errors() {
        let s = schedule();
        let model = FnModel::new(Parameterization::Data, 1, |x: &[f64], _t| x.to_vec());
        let step = Interval::new(&s, 0.5, 0.4).unwrap();
        assert!(matches!(
            sde_pp_2m_update(&[1.0], &[1.0], Some((step.from.lambda, &[0.0])), &step, &[0.0], SdeCoefficients::Simplified),
            Err(Error::Grid(_))
        ));
        assert!(matches!(
            sde_pp_2m_step(&[1.0], &model, (0.45, &[0.0]), 0.5, 0.4, &[0.0], &s, SdeCoefficients::Simplified),
            Err(Error::Grid(_))
        ));
        assert!(sde_1_update(&[1.0], &[1.0], &step, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn exact_and_simplified_coefficients_differ_by_order_h_squared() {
        // (e^h-1-h)/h - (e^h-1)/2 = -h^2/12 + O(h^3)
        let s = schedule();
        let x = [0.3];
        let eps_s = [0.2];
        let eps_r = [0.9];
        let mut ratios = Vec::new();
        for h in [0.2, 0.1, 0.05] {
            let t_s = 0.4;
            let l_s = s.lambda(t_s).unwrap();
            let t_t = s.inverse_lambda(l_s + h).unwrap();
            let t_r = s.inverse_lambda(l_s - h).unwrap();
            let step = Interval::new(&s, t_s, t_t).unwrap();
            let lr = s.lambda(t_r).unwrap();
            let a = sde_2m_update(&x, &eps_s, Some((lr, &eps_r)), &step, &[0.0], SdeCoefficients::Exact).unwrap();
            let b = sde_2m_update(&x, &eps_s, Some((lr, &eps_r)), &step, &[0.0], SdeCoefficients::Simplified).unwrap();
            ratios.push((a[0] - b[0]).abs() / (h * h * (eps_r[0] - eps_s[0]).abs()));
        }
        // sigma_t * 2 * h^2/12 / |r1| with r1 ~ -1
        for r in &ratios {
            assert!(*r < 0.25 && *r > 0.05, "{ratios:?}");
        }
    }

    #[test]
    fn ito_std_formulas_agree_with_monte_carlo() {
        let s = schedule();
        let step = Interval::new(&s, 0.3, 0.2).unwrap();
        let mut noise = NoiseStream::new(11, 0, 1);
        let n = 100_000;
        let zero = [0.0];
        let (mut se, mut sd) = (0.0, 0.0);
        for _ in 0..n {
            let z = noise.next_normal();
            let a = sde_1_update(&zero, &zero, &step, &z).unwrap()[0];
            let b = sde_pp_1_update(&zero, &zero, &step, &z).unwrap()[0];
            se += a * a;
            sd += b * b;
        }
        let (se, sd) = ((se / n as f64).sqrt(), (sd / n as f64).sqrt());
        let want_e = step.to.sigma * ((2.0 * step.h).exp() - 1.0).sqrt();
        let want_d = step.to.sigma * (1.0 - (-2.0 * step.h).exp()).sqrt();
        assert!((se / want_e - 1.0).abs() < 0.01, "{se} vs {want_e}");
        assert!((sd / want_d - 1.0).abs() < 0.01, "{sd} vs {want_d}");
    }
}
