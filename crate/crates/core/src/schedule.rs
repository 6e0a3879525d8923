//! Variance-preserving noise schedules, the log-SNR change of variables and
//! time-step grids.
//!
//! Every schedule here satisfies `alpha_t^2 + sigma_t^2 = 1`. The schedule is
//! described by `log alpha_t`; `sigma_t` and `lambda_t = log(alpha_t / sigma_t)`
//! are derived from it with `expm1`/`ln` forms that stay accurate near both
//! ends of the interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower end of the sampling interval.
pub const DEFAULT_T_MIN: f64 = 1e-3;
/// Default upper end of the sampling interval.
pub const DEFAULT_T_MAX: f64 = 1.0;
/// Offset of the cosine schedule.
pub const COSINE_OFFSET: f64 = 0.008;
/// Upper end for the cosine schedule: `alpha_1` is exactly zero there, so the
/// interval stops short of it.
pub const COSINE_T_MAX: f64 = 0.9946;

const INVERSE_LAMBDA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScheduleKind {
    /// `beta(t) = beta_min + t (beta_max - beta_min)`.
    LinearBeta { beta_min: f64, beta_max: f64 },
    /// `alpha_bar(t) = cos^2(pi/2 (t+s)/(1+s)) / cos^2(pi/2 s/(1+s))`.
    Cosine { s: f64 },
    /// Piecewise-linear `log alpha` through the nodes `t_n = n/N`.
    DiscreteInterp {
        node_times: Vec<f64>,
        node_log_alpha: Vec<f64>,
    },
}

/// `(alpha_t, sigma_t, lambda_t)` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub alpha: f64,
    pub sigma: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    t_min: f64,
    t_max: f64,
}

fn sigma_from_log_alpha(log_alpha: f64) -> f64 {
    (-(2.0 * log_alpha).exp_m1()).sqrt()
}

fn lambda_from_log_alpha(log_alpha: f64) -> f64 {
    log_alpha - 0.5 * (-(2.0 * log_alpha).exp_m1()).ln()
}

/// `log alpha` as a function of `lambda`, valid for every VP schedule:
/// `alpha^2 = 1 / (1 + e^{-2 lambda})`.
fn log_alpha_from_lambda(lambda: f64) -> f64 {
    -0.5 * softplus(-2.0 * lambda)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl NoiseSchedule {
    /// Continuous-time linear-beta VP schedule on `[1e-3, 1]`.
    pub fn linear_beta(beta_min: f64, beta_max: f64) -> Result<Self> {
        if !(beta_min > 0.0 && beta_max > beta_min && beta_max.is_finite()) {
            return Err(Error::Construction(format!(
                "linear beta needs 0 < beta_min < beta_max, got ({beta_min}, {beta_max})"
            )));
        }
        Ok(Self {
            kind: ScheduleKind::LinearBeta { beta_min, beta_max },
            t_min: DEFAULT_T_MIN,
            t_max: DEFAULT_T_MAX,
        })
    }

    /// The usual `beta_min = 0.1`, `beta_max = 20` schedule.
    pub fn default_linear() -> Self {
        Self::linear_beta(0.1, 20.0).expect("valid default parameters")
    }

    /// Cosine schedule with offset 0.008 on `[1e-3, 0.9946]`.
    pub fn cosine() -> Self {
        Self {
            kind: ScheduleKind::Cosine { s: COSINE_OFFSET },
            t_min: DEFAULT_T_MIN,
            t_max: COSINE_T_MAX,
        }
    }

    /// Builds a continuous schedule from a discrete beta sequence.
    ///
    /// Node `n` (1-based) sits at `t_n = n / N` with
    /// `log alpha_{t_n} = 1/2 sum_{i<=n} log(1 - beta_i)` (so `alpha_n^2` is the
    /// cumulative product). `log alpha` is linearly interpolated in between, and
    /// the usable interval is `[1/N, 1]`.
    pub fn discrete_interpolation(betas: &[f64]) -> Result<Self> {
        let n = betas.len();
        if n < 2 {
            return Err(Error::Argument(format!(
                "discrete schedule needs at least 2 betas, got {n}"
            )));
        }
        if let Some((i, b)) = betas
            .iter()
            .enumerate()
            .find(|(_, &b)| !(b > 0.0 && b < 1.0))
        {
            return Err(Error::Argument(format!("beta[{i}] = {b} is outside (0, 1)")));
        }
        let mut node_log_alpha = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &b in betas {
            acc += (-b).ln_1p();
            node_log_alpha.push(0.5 * acc);
        }
        let node_times: Vec<f64> = (1..=n).map(|k| k as f64 / n as f64).collect();
        for (k, w) in node_log_alpha.windows(2).enumerate() {
            if lambda_from_log_alpha(w[1]) >= lambda_from_log_alpha(w[0]) {
                return Err(Error::Construction(format!(
                    "log-SNR is not strictly decreasing between nodes {} and {}",
                    k + 1,
                    k + 2
                )));
            }
        }
        Ok(Self {
            t_min: node_times[0],
            t_max: node_times[n - 1],
            kind: ScheduleKind::DiscreteInterp {
                node_times,
                node_log_alpha,
            },
        })
    }

    /// DDPM-style linear betas `beta_n = (beta_min + (beta_max - beta_min)(n-1)/(N-1)) / N`,
    /// the discrete counterpart of [`NoiseSchedule::linear_beta`].
    pub fn discrete_linear(n: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Argument(format!("need N >= 2, got {n}")));
        }
        let betas: Vec<f64> = (0..n)
            .map(|i| (beta_min + (beta_max - beta_min) * i as f64 / (n - 1) as f64) / n as f64)
            .collect();
        Self::discrete_interpolation(&betas)
    }

    /// Discrete schedule whose nodes `t_n = n / N` reproduce this continuous
    /// schedule exactly: `1 - beta_n = alpha_{t_n}^2 / alpha_{t_{n-1}}^2`.
    pub fn discretize(&self, n: usize) -> Result<Self> {
        if matches!(self.kind, ScheduleKind::DiscreteInterp { .. }) {
            return Err(Error::Argument("schedule is already discrete".into()));
        }
        if n < 2 {
            return Err(Error::Argument(format!("need N >= 2, got {n}")));
        }
        let betas: Vec<f64> = (1..=n)
            .map(|k| {
                let (a, b) = ((k - 1) as f64 / n as f64, k as f64 / n as f64);
                -(2.0 * (self.log_alpha_unchecked(b) - self.log_alpha_unchecked(a))).exp_m1()
            })
            .collect();
        Self::discrete_interpolation(&betas)
    }

    /// Looks up a schedule by its command-line name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "linear" | "vp_linear_beta" => Ok(Self::default_linear()),
            "cosine" | "vp_cosine" => Ok(Self::cosine()),
            "discrete" | "vp_discrete_interp" => Self::discrete_linear(1000, 0.1, 20.0),
            other => Err(Error::Spec(format!("unknown schedule '{other}'"))),
        }
    }

    /// Restricts (or widens, within the schedule's natural domain) the interval.
    pub fn with_interval(mut self, t_min: f64, t_max: f64) -> Result<Self> {
        if !(t_min < t_max) {
            return Err(Error::Argument(format!(
                "interval must satisfy t_min < t_max, got [{t_min}, {t_max}]"
            )));
        }
        let (lo, hi) = self.natural_domain();
        // continuous schedules exclude t = 0, where sigma vanishes
        let ok = match self.kind {
            ScheduleKind::DiscreteInterp { .. } => t_min >= lo && t_max <= hi,
            _ => t_min > lo && t_max <= hi,
        };
        if !ok {
            return Err(Error::Domain(format!(
                "[{t_min}, {t_max}] is outside the schedule domain [{lo}, {hi}]"
            )));
        }
        self.t_min = t_min;
        self.t_max = t_max;
        Ok(self)
    }

    fn natural_domain(&self) -> (f64, f64) {
        match &self.kind {
            ScheduleKind::LinearBeta { .. } => (0.0, f64::INFINITY),
            ScheduleKind::Cosine { .. } => (0.0, 1.0 - 1e-9),
            ScheduleKind::DiscreteInterp { node_times, .. } => {
                (node_times[0], node_times[node_times.len() - 1])
            }
        }
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ScheduleKind::LinearBeta { .. } => "vp_linear_beta",
            ScheduleKind::Cosine { .. } => "vp_cosine",
            ScheduleKind::DiscreteInterp { .. } => "vp_discrete_interp",
        }
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t >= self.t_min && t <= self.t_max {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "t = {t} is outside [{}, {}]",
                self.t_min, self.t_max
            )))
        }
    }

    /// `log alpha_t` without the interval check.
    fn log_alpha_unchecked(&self, t: f64) -> f64 {
        match &self.kind {
            ScheduleKind::LinearBeta { beta_min, beta_max } => {
                -0.25 * t * t * (beta_max - beta_min) - 0.5 * t * beta_min
            }
            ScheduleKind::Cosine { s } => {
                let f = |u: f64| (std::f64::consts::FRAC_PI_2 * (u + s) / (1.0 + s)).cos().ln();
                f(t) - f(0.0)
            }
            ScheduleKind::DiscreteInterp {
                node_times,
                node_log_alpha,
            } => {
                let k = segment_index(node_times, t);
                let (t0, t1) = (node_times[k], node_times[k + 1]);
                let (a0, a1) = (node_log_alpha[k], node_log_alpha[k + 1]);
                a0 + (a1 - a0) / (t1 - t0) * (t - t0)
            }
        }
    }

    pub fn log_alpha(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.log_alpha_unchecked(t))
    }

    /// Returns `(alpha_t, sigma_t, lambda_t)`.
    pub fn alpha_sigma_lambda(&self, t: f64) -> Result<Coefficients> {
        let la = self.log_alpha(t)?;
        Ok(Coefficients {
            alpha: la.exp(),
            sigma: sigma_from_log_alpha(la),
            lambda: lambda_from_log_alpha(la),
        })
    }

    pub fn alpha(&self, t: f64) -> Result<f64> {
        Ok(self.log_alpha(t)?.exp())
    }

    pub fn sigma(&self, t: f64) -> Result<f64> {
        Ok(sigma_from_log_alpha(self.log_alpha(t)?))
    }

    pub fn lambda(&self, t: f64) -> Result<f64> {
        Ok(lambda_from_log_alpha(self.log_alpha(t)?))
    }

    /// `(lambda(t_max), lambda(t_min))`, i.e. `(lowest, highest)`.
    pub fn lambda_range(&self) -> (f64, f64) {
        (
            lambda_from_log_alpha(self.log_alpha_unchecked(self.t_max)),
            lambda_from_log_alpha(self.log_alpha_unchecked(self.t_min)),
        )
    }

    /// Inverse of `lambda`: the unique `t` with `lambda_t = lambda`.
    ///
    /// Linear-beta and cosine schedules use their closed forms; the discrete
    /// schedule (and any closed form that lands outside the interval) falls back
    /// to bisection.
    pub fn inverse_lambda(&self, lambda: f64) -> Result<f64> {
        let (lo, hi) = self.lambda_range();
        if lambda == lo {
            return Ok(self.t_max);
        }
        if lambda == hi {
            return Ok(self.t_min);
        }
        if !(lambda > lo && lambda < hi) {
            return Err(Error::Domain(format!(
                "lambda = {lambda} is outside [{lo}, {hi}]"
            )));
        }
        let closed = match &self.kind {
            ScheduleKind::LinearBeta { beta_min, beta_max } => {
                // q(t) = -log alpha_t = a t^2 + b t
                let q = -log_alpha_from_lambda(lambda);
                let a = 0.25 * (beta_max - beta_min);
                let b = 0.5 * beta_min;
                Some(2.0 * q / (b + (b * b + 4.0 * a * q).sqrt()))
            }
            ScheduleKind::Cosine { s } => {
                let alpha = log_alpha_from_lambda(lambda).exp();
                let c0 = (std::f64::consts::FRAC_PI_2 * s / (1.0 + s)).cos();
                Some((alpha * c0).acos() * 2.0 / std::f64::consts::PI * (1.0 + s) - s)
            }
            ScheduleKind::DiscreteInterp { .. } => None,
        };
        match closed {
            Some(t) if t >= self.t_min && t <= self.t_max => Ok(t),
            _ => Ok(self.inverse_lambda_bisect(lambda)),
        }
    }

    /// Safeguarded bisection for `inverse_lambda`; `lambda` must already be in range.
    pub(crate) fn inverse_lambda_bisect(&self, lambda: f64) -> f64 {
        let (mut lo, mut hi) = (self.t_min, self.t_max);
        let lam = |t: f64| lambda_from_log_alpha(self.log_alpha_unchecked(t));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = lam(mid);
            if (v - lambda).abs() <= INVERSE_LAMBDA_TOL || hi - lo <= 4.0 * f64::EPSILON * hi {
                return mid;
            }
            // lambda is decreasing in t
            if v > lambda {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `f(t) = d log alpha_t / dt`.
    pub fn drift(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(match &self.kind {
            ScheduleKind::LinearBeta { beta_min, beta_max } => {
                -0.5 * (beta_min + t * (beta_max - beta_min))
            }
            ScheduleKind::Cosine { s } => {
                let k = std::f64::consts::FRAC_PI_2 / (1.0 + s);
                -k * (k * (t + s)).tan()
            }
            ScheduleKind::DiscreteInterp {
                node_times,
                node_log_alpha,
            } => {
                let k = segment_index(node_times, t);
                (node_log_alpha[k + 1] - node_log_alpha[k]) / (node_times[k + 1] - node_times[k])
            }
        })
    }

    /// `d lambda_t / dt = f(t) / sigma_t^2` for a VP schedule.
    pub fn d_lambda_dt(&self, t: f64) -> Result<f64> {
        let f = self.drift(t)?;
        let s = self.sigma(t)?;
        Ok(f / (s * s))
    }

    /// `g^2(t) = -2 sigma_t^2 d lambda_t / dt`.
    pub fn diffusion_sq(&self, t: f64) -> Result<f64> {
        let s = self.sigma(t)?;
        Ok(-2.0 * s * s * self.d_lambda_dt(t)?)
    }
}

/// Index `k` of the segment `[t_k, t_{k+1}]` containing `t`; the last segment is closed.
fn segment_index(nodes: &[f64], t: f64) -> usize {
    let n = nodes.len();
    match nodes.binary_search_by(|v| v.partial_cmp(&t).expect("finite node")) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    }
}

/// How the step times are spaced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridKind {
    UniformT,
    UniformLambda,
    /// `t_i = ((M-i)/M t_0^{1/k} + i/M t_M^{1/k})^k`.
    PowerKappa(f64),
}

/// Where the singlestep intermediate point `s_i` goes inside `[t_i, t_{i-1}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum IntermediatePlacement {
    #[default]
    TimeMidpoint,
    /// Midpoint in lambda, i.e. `r_i = 1/2`.
    LambdaMidpoint,
}

/// Decreasing step times `t_0 = t_max > ... > t_M = t_min`, with optional
/// interleaved intermediate times for singlestep solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    intermediates: Option<Vec<f64>>,
    kind: GridKind,
}

impl TimeGrid {
    /// Validates a hand-built grid.
    pub fn from_times(times: Vec<f64>, intermediates: Option<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Grid("a grid needs at least two times".into()));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[0] > w[1])) {
            return Err(Error::Grid(format!(
                "times must be strictly decreasing, found {} then {}",
                w[0], w[1]
            )));
        }
        if let Some(mid) = &intermediates {
            if mid.len() != times.len() - 1 {
                return Err(Error::Grid(format!(
                    "expected {} intermediate times, got {}",
                    times.len() - 1,
                    mid.len()
                )));
            }
            for (i, &s) in mid.iter().enumerate() {
                if !(times[i] > s && s > times[i + 1]) {
                    return Err(Error::Grid(format!(
                        "intermediate s_{} = {s} is not inside ({}, {})",
                        i + 1,
                        times[i + 1],
                        times[i]
                    )));
                }
            }
        }
        Ok(Self {
            times,
            intermediates,
            kind: GridKind::UniformT,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn intermediates(&self) -> Option<&[f64]> {
        self.intermediates.as_deref()
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    /// Number of intervals `M`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }
}

/// Builds an `M`-step grid over the schedule's interval.
pub fn make_time_grid(
    schedule: &NoiseSchedule,
    steps: usize,
    kind: GridKind,
    intermediates: Option<IntermediatePlacement>,
) -> Result<TimeGrid> {
    if steps == 0 {
        return Err(Error::Argument("step count M must be at least 1".into()));
    }
    let (t0, tm) = (schedule.t_max(), schedule.t_min());
    let m = steps as f64;
    let mut times: Vec<f64> = match kind {
        GridKind::UniformT => (0..=steps)
            .map(|i| (steps - i) as f64 / m * t0 + i as f64 / m * tm)
            .collect(),
        GridKind::PowerKappa(kappa) => {
            if !(kappa >= 1.0) {
                return Err(Error::Argument(format!("kappa must be >= 1, got {kappa}")));
            }
            let (a, b) = (t0.powf(1.0 / kappa), tm.powf(1.0 / kappa));
            (0..=steps)
                .map(|i| ((steps - i) as f64 / m * a + i as f64 / m * b).powf(kappa))
                .collect()
        }
        GridKind::UniformLambda => {
            let (l0, lm) = schedule.lambda_range();
            (0..=steps)
                .map(|i| {
                    let l = (steps - i) as f64 / m * l0 + i as f64 / m * lm;
                    schedule.inverse_lambda(l.clamp(l0, lm))
                })
                .collect::<Result<_>>()?
        }
    };
    times[0] = t0;
    times[steps] = tm;
    let mids = match intermediates {
        None => None,
        Some(IntermediatePlacement::TimeMidpoint) => {
            Some(times.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
        }
        Some(IntermediatePlacement::LambdaMidpoint) => Some(
            times
                .windows(2)
                .map(|w| {
                    let l = 0.5 * (schedule.lambda(w[0])? + schedule.lambda(w[1])?);
                    schedule.inverse_lambda(l)
                })
                .collect::<Result<Vec<f64>>>()?,
        ),
    };
    let mut grid = TimeGrid::from_times(times, mids)?;
    grid.kind = kind;
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn all_schedules() -> Vec<NoiseSchedule> {
        vec![
            NoiseSchedule::default_linear(),
            NoiseSchedule::cosine(),
            NoiseSchedule::discrete_linear(1000, 0.1, 20.0).unwrap(),
        ]
    }

    #[test]
    fn linear_beta_reference_point() {
        let s = NoiseSchedule::default_linear();
        let c = s.alpha_sigma_lambda(0.5).unwrap();
        assert_relative_eq!(s.log_alpha(0.5).unwrap(), -1.26875, epsilon = 1e-14);
        assert_relative_eq!(c.alpha, (-1.26875f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(c.alpha, 0.281_18, epsilon = 1e-5);
        assert_relative_eq!(c.sigma, 0.959_66, epsilon = 1e-5);
        assert_relative_eq!(c.lambda, c.alpha.ln() - c.sigma.ln(), epsilon = 1e-14);
        assert_relative_eq!(c.lambda, -1.227_57, epsilon = 1e-5);
    }

    #[test]
    fn log_alpha_matches_integrated_beta() {
        // -1/2 int_0^t beta(s) ds, midpoint rule with many panels
        let s = NoiseSchedule::default_linear();
        let t = 0.5;
        let n = 20_000;
        let h = t / n as f64;
        let integral: f64 = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) * h;
                (0.1 + u * 19.9) * h
            })
            .sum();
        assert_relative_eq!(s.log_alpha(t).unwrap(), -0.5 * integral, epsilon = 1e-9);
    }

    #[test]
    fn lambda_zero_where_alpha_equals_sigma() {
        for s in all_schedules() {
            let (lo, hi) = s.lambda_range();
            assert!(lo < 0.0 && hi > 0.0);
            let t = s.inverse_lambda(0.0).unwrap();
            let c = s.alpha_sigma_lambda(t).unwrap();
            assert!(c.lambda.abs() < 1e-9, "{}: {}", s.name(), c.lambda);
            assert_relative_eq!(c.alpha, c.sigma, epsilon = 1e-9);
        }
    }

    #[test]
    fn out_of_range_time_is_a_domain_error() {
        let s = NoiseSchedule::default_linear();
        assert!(matches!(s.alpha_sigma_lambda(0.0), Err(Error::Domain(_))));
        assert!(matches!(s.alpha_sigma_lambda(1.5), Err(Error::Domain(_))));
        let (lo, hi) = s.lambda_range();
        assert!(matches!(s.inverse_lambda(lo - 1.0), Err(Error::Domain(_))));
        assert!(matches!(s.inverse_lambda(hi + 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn inverse_lambda_endpoints_and_reference_point() {
        for s in all_schedules() {
            let (lo, hi) = s.lambda_range();
            assert_eq!(s.inverse_lambda(hi).unwrap(), s.t_min());
            assert_eq!(s.inverse_lambda(lo).unwrap(), s.t_max());
        }
        let s = NoiseSchedule::default_linear();
        assert_relative_eq!(s.inverse_lambda(-1.2277).unwrap(), 0.5, epsilon = 1e-4);
    }

    #[test]
    fn closed_form_inverse_agrees_with_bisection() {
        for s in [NoiseSchedule::default_linear(), NoiseSchedule::cosine()] {
            let (lo, hi) = s.lambda_range();
            for k in 1..50 {
                let l = lo + (hi - lo) * k as f64 / 50.0;
                let a = s.inverse_lambda(l).unwrap();
                let b = s.inverse_lambda_bisect(l);
                assert_relative_eq!(a, b, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn discrete_nodes_reproduce_cumulative_products() {
        let betas = [0.1, 0.2, 0.05, 0.3];
        let s = NoiseSchedule::discrete_interpolation(&betas).unwrap();
        let mut acc = 0.0;
        for (n, b) in betas.iter().enumerate() {
            acc += (1.0f64 - b).ln();
            let t = (n + 1) as f64 / 4.0;
            assert_relative_eq!(s.log_alpha(t).unwrap(), 0.5 * acc, epsilon = 1e-15);
        }
        let mid = s.log_alpha(0.375).unwrap();
        let want = 0.5 * (s.log_alpha(0.25).unwrap() + s.log_alpha(0.5).unwrap());
        assert_relative_eq!(mid, want, epsilon = 1e-15);
        assert!(matches!(s.log_alpha(0.2), Err(Error::Domain(_))));
    }

    #[test]
    fn discrete_construction_errors() {
        assert!(matches!(
            NoiseSchedule::discrete_interpolation(&[0.1]),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            NoiseSchedule::discrete_interpolation(&[0.1, 1.0]),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            NoiseSchedule::discrete_interpolation(&[0.1, 0.0]),
            Err(Error::Argument(_))
        ));
    }

    fn max_lambda_gap(d: &NoiseSchedule, c: &NoiseSchedule, from: f64) -> f64 {
        (0..=2000)
            .map(|k| from + (1.0 - from) * k as f64 / 2000.0)
            .map(|t| (d.lambda(t).unwrap() - c.lambda(t).unwrap()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn discretized_linear_tracks_continuous_linear() {
        let c = NoiseSchedule::default_linear();
        let d = c.discretize(1000).unwrap();
        assert!(max_lambda_gap(&d, &c, 1e-3) < 1e-2);
        // exact at the nodes
        for t in [1e-3, 0.25, 0.5, 1.0] {
            assert_relative_eq!(d.log_alpha(t).unwrap(), c.log_alpha(t).unwrap(), max_relative = 1e-10);
        }
        assert!(NoiseSchedule::cosine().discretize(1000).is_err());
    }

    #[test]
    fn ddpm_linspace_gap_is_first_order_in_beta() {
        // linspace(1e-4, 0.02) starts a half step early and drops the beta^2/2
        // term of log(1 - beta): ~0.047 at t = 1e-3 and ~0.034 at t = 1.
        let d = NoiseSchedule::discrete_linear(1000, 0.1, 20.0).unwrap();
        let c = NoiseSchedule::default_linear();
        let gap = max_lambda_gap(&d, &c, 1e-3);
        assert!(gap > 1e-2 && gap < 0.05, "max lambda gap {gap}");
        let t1 = (d.lambda(1.0).unwrap() - c.lambda(1.0).unwrap()).abs();
        assert!((t1 - 0.0339).abs() < 1e-3, "{t1}");
    }

    #[test]
    fn vp_constraint_and_monotone_lambda() {
        for s in all_schedules() {
            let ts: Vec<f64> = (0..1000)
                .map(|k| s.t_min() + (s.t_max() - s.t_min()) * k as f64 / 999.0)
                .collect();
            let mut prev = f64::INFINITY;
            for &t in &ts {
                let c = s.alpha_sigma_lambda(t).unwrap();
                assert!((c.alpha * c.alpha + c.sigma * c.sigma - 1.0).abs() < 1e-12);
                assert!(c.lambda < prev, "{} not decreasing at {t}", s.name());
                prev = c.lambda;
            }
        }
    }

    #[test]
    fn lambda_derivative_matches_finite_differences() {
        for s in all_schedules() {
            for k in 1..20 {
                let t = s.t_min() + (s.t_max() - s.t_min()) * (k as f64 + 0.37) / 20.0;
                let h = 1e-6;
                let fd = (s.lambda(t + h).unwrap() - s.lambda(t - h).unwrap()) / (2.0 * h);
                let la = |u| s.log_alpha(u).unwrap();
                let ls = |u| s.sigma(u).unwrap().ln();
                let split = (la(t + h) - la(t - h)) / (2.0 * h) - (ls(t + h) - ls(t - h)) / (2.0 * h);
                assert!((fd - split).abs() < 1e-5 * fd.abs().max(1.0));
                let analytic = s.d_lambda_dt(t).unwrap();
                assert!(
                    (fd - analytic).abs() < 1e-5 * fd.abs().max(1.0),
                    "{} t={t}: fd {fd} vs {analytic}",
                    s.name()
                );
            }
        }
    }

    #[test]
    fn power_grid_examples() {
        let s = NoiseSchedule::default_linear();
        let g = make_time_grid(&s, 2, GridKind::PowerKappa(1.0), None).unwrap();
        assert_eq!(g.times()[0], 1.0);
        assert_relative_eq!(g.times()[1], 0.5005, epsilon = 1e-15);
        assert_eq!(g.times()[2], 1e-3);
        let g = make_time_grid(&s, 2, GridKind::PowerKappa(2.0), None).unwrap();
        let want = (0.5 + 0.5 * 1e-3f64.sqrt()).powi(2);
        assert_relative_eq!(g.times()[1], want, epsilon = 1e-15);
        assert_relative_eq!(g.times()[1], 0.266_06, epsilon = 1e-5);
    }

    #[test]
    fn kappa_one_is_uniform_t() {
        let s = NoiseSchedule::cosine();
        for m in [1, 3, 10, 37] {
            let a = make_time_grid(&s, m, GridKind::PowerKappa(1.0), None).unwrap();
            let b = make_time_grid(&s, m, GridKind::UniformT, None).unwrap();
            assert_eq!(a.times(), b.times());
        }
    }

    #[test]
    fn uniform_lambda_single_step_is_the_endpoints() {
        for s in all_schedules() {
            let g = make_time_grid(&s, 1, GridKind::UniformLambda, None).unwrap();
            assert_eq!(g.times(), &[s.t_max(), s.t_min()]);
        }
    }

    #[test]
    fn uniform_lambda_is_evenly_spaced_in_lambda() {
        let s = NoiseSchedule::default_linear();
        let g = make_time_grid(&s, 8, GridKind::UniformLambda, None).unwrap();
        let l: Vec<f64> = g.times().iter().map(|&t| s.lambda(t).unwrap()).collect();
        let h0 = l[1] - l[0];
        for w in l.windows(2) {
            assert_relative_eq!(w[1] - w[0], h0, epsilon = 1e-9);
        }
    }

    #[test]
    fn intermediates_sit_strictly_inside_each_interval() {
        let s = NoiseSchedule::default_linear();
        for place in [IntermediatePlacement::TimeMidpoint, IntermediatePlacement::LambdaMidpoint] {
            let g = make_time_grid(&s, 7, GridKind::UniformT, Some(place)).unwrap();
            let mids = g.intermediates().unwrap();
            for (i, &m) in mids.iter().enumerate() {
                assert!(g.times()[i] > m && m > g.times()[i + 1]);
                if place == IntermediatePlacement::LambdaMidpoint {
                    let r = (s.lambda(m).unwrap() - s.lambda(g.times()[i]).unwrap())
                        / (s.lambda(g.times()[i + 1]).unwrap() - s.lambda(g.times()[i]).unwrap());
                    assert_relative_eq!(r, 0.5, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn grid_errors() {
        let s = NoiseSchedule::default_linear();
        assert!(matches!(
            make_time_grid(&s, 0, GridKind::UniformT, None),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            make_time_grid(&s, 3, GridKind::PowerKappa(0.5), None),
            Err(Error::Argument(_))
        ));
        assert!(TimeGrid::from_times(vec![1.0, 1.0], None).is_err());
        assert!(TimeGrid::from_times(vec![1.0, 0.5], Some(vec![0.2])).is_err());
    }
}
