//! Deterministic exponential-integrator samplers for the probability-flow ODE.
//!
//! Each stepper advances a sample from `t_s` down to `t_t < t_s`, integrating
//! the linear part of the ODE exactly and approximating the model term by a
//! low-order Taylor expansion in `lambda`. The data-prediction solvers use
//! `x_t = sigma_t/sigma_s x_s + sigma_t int e^lambda x0(lambda) dlambda`; the
//! noise-prediction baseline uses the mirrored `alpha`-form.
//!
//! All `e^{+-h} - 1` factors go through `expm1`. An interval with
//! `|h| < 1e-12` is a no-op.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{predict_data, predict_noise, x0_to_eps, PredictionModel};
use crate::schedule::{Coefficients, NoiseSchedule, TimeGrid};
use crate::sde::{self, NoiseStream, SdeCoefficients};
use crate::vecops::{lin2, lin3};

/// Intervals shorter than this (in lambda) are skipped.
pub const MIN_STEP: f64 = 1e-12;

/// Schedule values at both ends of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub from: Coefficients,
    pub to: Coefficients,
    /// `lambda_to - lambda_from`, non-negative when sampling.
    pub h: f64,
}

impl Interval {
    /// Geometry of a step from `t_s` to `t_t`; requires `t_t <= t_s`.
    pub fn new(schedule: &NoiseSchedule, t_s: f64, t_t: f64) -> Result<Self> {
        if t_t > t_s {
            return Err(Error::Argument(format!(
                "steps run backward in time, got t_s = {t_s} -> t_t = {t_t}"
            )));
        }
        let from = schedule.alpha_sigma_lambda(t_s)?;
        let to = schedule.alpha_sigma_lambda(t_t)?;
        Ok(Self {
            from,
            to,
            h: to.lambda - from.lambda,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.h.abs() < MIN_STEP
    }
}

/// Closed form of `int_{l_s}^{l_t} e^l (l - l_s)^n / n! dl` for `n` in `{0, 1}`.
pub fn taylor_coeff(n: u32, lambda_s: f64, lambda_t: f64) -> Result<f64> {
    if lambda_t < lambda_s {
        return Err(Error::Argument(format!(
            "expected lambda_t >= lambda_s, got {lambda_s} -> {lambda_t}"
        )));
    }
    let h = lambda_t - lambda_s;
    let base = lambda_s.exp();
    match n {
        0 => Ok(base * h.exp_m1()),
        // e^{l_t}(h - 1) + e^{l_s}
        1 => Ok(base * ((h - 1.0) * h.exp_m1() + h)),
        _ => Err(Error::Argument(format!(
            "taylor coefficients are implemented for n in {{0, 1}}, got {n}"
        ))),
    }
}

/// First-order data-prediction update from a precomputed `x0 = x_theta(x_s, s)`:
/// `sigma_t/sigma_s x_s - alpha_t (e^{-h} - 1) x0`.
pub fn first_order_data_update(x_s: &[f64], x0: &[f64], step: &Interval) -> Vec<f64> {
    if step.is_degenerate() {
        return x_s.to_vec();
    }
    lin2(
        step.to.sigma / step.from.sigma,
        x_s,
        -step.to.alpha * (-step.h).exp_m1(),
        x0,
    )
}

/// First-order noise-prediction update (DDIM with `eta = 0` in its `eps` form):
/// `alpha_t/alpha_s x_s - sigma_t (e^h - 1) eps`.
pub fn first_order_noise_update(x_s: &[f64], eps: &[f64], step: &Interval) -> Vec<f64> {
    if step.is_degenerate() {
        return x_s.to_vec();
    }
    lin2(
        step.to.alpha / step.from.alpha,
        x_s,
        -step.to.sigma * step.h.exp_m1(),
        eps,
    )
}

/// One first-order step of DPM-Solver++ (deterministic DDIM w.r.t. `x_theta`).
pub fn first_order_data_step<M: PredictionModel + ?Sized>(
    x_s: &[f64],
    model: &M,
    t_s: f64,
    t_t: f64,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    let step = Interval::new(schedule, t_s, t_t)?;
    if step.is_degenerate() {
        return Ok(x_s.to_vec());
    }
    let x0 = predict_data(model, schedule, x_s, t_s)?;
    Ok(first_order_data_update(x_s, &x0, &step))
}

/// One first-order step in the noise parameterization (DPM-Solver-1).
pub fn first_order_noise_step<M: PredictionModel + ?Sized>(
    x_s: &[f64],
    model: &M,
    t_s: f64,
    t_t: f64,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    let step = Interval::new(schedule, t_s, t_t)?;
    if step.is_degenerate() {
        return Ok(x_s.to_vec());
    }
    let eps = predict_noise(model, schedule, x_s, t_s)?;
    Ok(first_order_noise_update(x_s, &eps, &step))
}

/// Generalized DDIM update from precomputed predictions:
/// `alpha_t x0 + sqrt(sigma_t^2 - eta^2) eps + eta z`.
pub fn ddim_eta_update(
    x0: &[f64],
    eps: &[f64],
    step: &Interval,
    eta: f64,
    z: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if !(eta >= 0.0) {
        return Err(Error::Argument(format!("eta must be non-negative, got {eta}")));
    }
    let sigma_t = step.to.sigma;
    if eta > sigma_t {
        return Err(Error::Argument(format!(
            "eta = {eta} exceeds sigma_t = {sigma_t}"
        )));
    }
    let keep = ((sigma_t - eta) * (sigma_t + eta)).sqrt();
    if eta == 0.0 {
        return Ok(lin2(step.to.alpha, x0, keep, eps));
    }
    let z = z.ok_or_else(|| Error::Argument("eta > 0 needs a noise vector z".into()))?;
    Ok(lin3(step.to.alpha, x0, keep, eps, eta, z))
}

/// One generalized DDIM step. `x_theta` and `eps_theta` come from a single
/// model evaluation at `(x_s, t_s)` linked by the conversion identity.
pub fn ddim_eta_step<M: PredictionModel + ?Sized>(
    x_s: &[f64],
    model: &M,
    t_s: f64,
    t_t: f64,
    eta: f64,
    z: Option<&[f64]>,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    let step = Interval::new(schedule, t_s, t_t)?;
    let x0 = predict_data(model, schedule, x_s, t_s)?;
    let eps = x0_to_eps(&x0, x_s, step.from.alpha, step.from.sigma)?;
    ddim_eta_update(&x0, &eps, &step, eta, z)
}

/// `eta` that makes DDIM coincide with SDE-DPM-Solver++1:
/// `sigma_t sqrt(1 - e^{-2h})`.
pub fn sde_matched_eta(step: &Interval) -> f64 {
    step.to.sigma * (-(-2.0 * step.h).exp_m1()).max(0.0).sqrt()
}

fn singlestep_ratio(prev: &Coefficients, mid: &Coefficients, h: f64) -> Result<f64> {
    let r = (mid.lambda - prev.lambda) / h;
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Grid(format!(
            "intermediate point must satisfy 0 < r < 1, got r = {r}"
        )));
    }
    Ok(r)
}

fn check_singlestep_times(t_prev: f64, t_mid: f64, t_next: f64) -> Result<()> {
    if t_prev > t_mid && t_mid > t_next {
        Ok(())
    } else {
        Err(Error::Grid(format!(
            "need t_prev > s > t_next, got {t_prev}, {t_mid}, {t_next}"
        )))
    }
}

/// One step of DPM-Solver++(2S) from `t_prev` through `t_mid` to `t_next`.
///
/// Uses exactly two model evaluations, at `(x, t_prev)` and `(u, t_mid)`.
pub fn dpm_pp_2s_step<M: PredictionModel + ?Sized>(
    x_prev: &[f64],
    model: &M,
    t_prev: f64,
    t_mid: f64,
    t_next: f64,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    let step = Interval::new(schedule, t_prev, t_next)?;
    if step.is_degenerate() {
        return Ok(x_prev.to_vec());
    }
    check_singlestep_times(t_prev, t_mid, t_next)?;
    let mid = schedule.alpha_sigma_lambda(t_mid)?;
    let r = singlestep_ratio(&step.from, &mid, step.h)?;
    let x0_prev = predict_data(model, schedule, x_prev, t_prev)?;
    let u = lin2(
        mid.sigma / step.from.sigma,
        x_prev,
        -mid.alpha * (-r * step.h).exp_m1(),
        &x0_prev,
    );
    let x0_mid = predict_data(model, schedule, &u, t_mid)?;
    let w = 0.5 / r;
    let d = lin2(1.0 - w, &x0_prev, w, &x0_mid);
    Ok(first_order_data_update(x_prev, &d, &step))
}

/// Noise-parameterized singlestep second-order update shared by DPM-Solver-2
/// (`damping = false`) and the `eps`-rewrite of DPM-Solver++(2S)
/// (`damping = true`, which multiplies the correction by `e^{-r h}`).
fn noise_singlestep<M: PredictionModel + ?Sized>(
    x_prev: &[f64],
    model: &M,
    t_prev: f64,
    t_mid: f64,
    t_next: f64,
    schedule: &NoiseSchedule,
    damping: bool,
) -> Result<Vec<f64>> {
    let step = Interval::new(schedule, t_prev, t_next)?;
    if step.is_degenerate() {
        return Ok(x_prev.to_vec());
    }
    check_singlestep_times(t_prev, t_mid, t_next)?;
    let mid = schedule.alpha_sigma_lambda(t_mid)?;
    let h = step.h;
    let r = singlestep_ratio(&step.from, &mid, h)?;
    let eps_prev = predict_noise(model, schedule, x_prev, t_prev)?;
    let u = lin2(
        mid.alpha / step.from.alpha,
        x_prev,
        -mid.sigma * (r * h).exp_m1(),
        &eps_prev,
    );
    let eps_mid = predict_noise(model, schedule, &u, t_mid)?;
    let mut c = step.to.sigma / (2.0 * r) * h.exp_m1();
    if damping {
        c *= (-r * h).exp();
    }
    let base = first_order_noise_update(x_prev, &eps_prev, &step);
    Ok(base
        .iter()
        .zip(eps_mid.iter().zip(&eps_prev))
        .map(|(b, (em, ep))| b - c * (em - ep))
        .collect())
}

/// One step of the DPM-Solver-2 baseline (noise parameterization).
pub fn dpm_solver_2_step<M: PredictionModel + ?Sized>(
    x_prev: &[f64],
    model: &M,
    t_prev: f64,
    t_mid: f64,
    t_next: f64,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    noise_singlestep(x_prev, model, t_prev, t_mid, t_next, schedule, false)
}

/// DPM-Solver++(2S) rewritten in terms of `eps_theta`: identical to
/// [`dpm_solver_2_step`] except that the correction carries `e^{-r h}`.
/// Algebraically equal to [`dpm_pp_2s_step`].
pub fn dpm_pp_2s_step_noise_form<M: PredictionModel + ?Sized>(
    x_prev: &[f64],
    model: &M,
    t_prev: f64,
    t_mid: f64,
    t_next: f64,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    noise_singlestep(x_prev, model, t_prev, t_mid, t_next, schedule, true)
}

/// State carried between multistep iterations: the current point and up to
/// two buffered model outputs, oldest first. The newest entry is the output at
/// the current point.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub t: f64,
    pub x: Vec<f64>,
    buffer: Vec<(f64, Vec<f64>)>,
}

impl StepState {
    /// A state with an empty buffer.
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self {
            t,
            x,
            buffer: Vec::with_capacity(2),
        }
    }

    /// Starts a data-prediction multistep run: evaluates `x_theta(x_T, t_0)`
    /// and buffers it.
    pub fn start<M: PredictionModel + ?Sized>(
        model: &M,
        schedule: &NoiseSchedule,
        t0: f64,
        x_start: Vec<f64>,
    ) -> Result<Self> {
        let out = predict_data(model, schedule, &x_start, t0)?;
        let mut state = Self::new(t0, x_start);
        state.push(t0, out)?;
        Ok(state)
    }

    /// Buffers a model output; keeps the two most recent, which must have
    /// strictly decreasing times.
    pub fn push(&mut self, t: f64, output: Vec<f64>) -> Result<()> {
        if let Some((last, _)) = self.buffer.last() {
            if !(t < *last) {
                return Err(Error::State(format!(
                    "buffered times must decrease, got {t} after {last}"
                )));
            }
        }
        if self.buffer.len() == 2 {
            self.buffer.remove(0);
        }
        self.buffer.push((t, output));
        Ok(())
    }

    pub fn buffer(&self) -> &[(f64, Vec<f64>)] {
        &self.buffer
    }

    /// Output at the current point and, if present, the one before it.
    pub(crate) fn latest(&self) -> Result<(&[f64], Option<(f64, &[f64])>)> {
        let (t_last, out) = self
            .buffer
            .last()
            .ok_or_else(|| Error::State("empty multistep buffer".into()))?;
        if *t_last != self.t {
            return Err(Error::State(format!(
                "newest buffered output is at t = {t_last}, state is at t = {}",
                self.t
            )));
        }
        let prior = if self.buffer.len() == 2 {
            Some((self.buffer[0].0, self.buffer[0].1.as_slice()))
        } else {
            None
        };
        Ok((out.as_slice(), prior))
    }
}

/// One step of DPM-Solver++(2M) to `t_next`.
///
/// With a single buffered output this is the first-order step. When
/// `buffer_next` is set the model is evaluated once at the new point and the
/// result buffered; the final step of a run skips that evaluation.
pub fn dpm_pp_2m_step<M: PredictionModel + ?Sized>(
    state: StepState,
    model: &M,
    t_next: f64,
    schedule: &NoiseSchedule,
    buffer_next: bool,
) -> Result<StepState> {
    let step = Interval::new(schedule, state.t, t_next)?;
    let (x0_cur, prior) = state.latest()?;
    let d = match prior {
        Some((t_prior, x0_prior)) if !step.is_degenerate() => {
            let h_prev = step.from.lambda - schedule.lambda(t_prior)?;
            if h_prev.abs() < MIN_STEP {
                x0_cur.to_vec()
            } else {
                let w = 0.5 * step.h / h_prev;
                lin2(1.0 + w, x0_cur, -w, x0_prior)
            }
        }
        _ => x0_cur.to_vec(),
    };
    let x_next = first_order_data_update(&state.x, &d, &step);
    let mut next = StepState {
        t: t_next,
        x: x_next,
        buffer: state.buffer,
    };
    if buffer_next {
        let out = predict_data(model, schedule, &next.x, t_next)?;
        if next.buffer.last().map(|b| b.0) == Some(t_next) {
            next.buffer.pop();
        }
        next.push(t_next, out)?;
    }
    Ok(next)
}

/// Sampler selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Generalized DDIM with noise level `eta`.
    DdimEta,
    /// First-order DPM-Solver++ (DDIM with `eta = 0`).
    FirstOrderData,
    /// Singlestep second-order solver in the noise parameterization.
    DpmSolver2,
    DpmPp2s,
    DpmPp2m,
    Sde1,
    SdePp1,
    Sde2m,
    SdePp2m,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::DdimEta,
        Method::FirstOrderData,
        Method::DpmSolver2,
        Method::DpmPp2s,
        Method::DpmPp2m,
        Method::Sde1,
        Method::SdePp1,
        Method::Sde2m,
        Method::SdePp2m,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::DdimEta => "ddim_eta",
            Method::FirstOrderData => "first_order_data",
            Method::DpmSolver2 => "dpm_solver_2",
            Method::DpmPp2s => "dpm_pp_2s",
            Method::DpmPp2m => "dpm_pp_2m",
            Method::Sde1 => "sde_1",
            Method::SdePp1 => "sde_pp_1",
            Method::Sde2m => "sde_2m",
            Method::SdePp2m => "sde_pp_2m",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Spec(format!("unknown method '{name}'")))
    }

    /// Nominal convergence order.
    pub fn order(self) -> u32 {
        match self {
            Method::DpmSolver2 | Method::DpmPp2s | Method::DpmPp2m | Method::Sde2m | Method::SdePp2m => 2,
            _ => 1,
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            Method::Sde1 | Method::SdePp1 | Method::Sde2m | Method::SdePp2m
        )
    }

    /// Needs intermediate times in the grid.
    pub fn is_singlestep(self) -> bool {
        matches!(self, Method::DpmSolver2 | Method::DpmPp2s)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Noise level used by [`Method::DdimEta`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EtaRule {
    /// The same absolute `eta` on every step (must not exceed any `sigma_t`).
    Constant(f64),
    /// `eta_i = sigma_{t_i} sqrt(1 - e^{-2 h_i})`, the SDE-DPM-Solver++1 match.
    SdeMatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub method: Method,
    pub grid: TimeGrid,
    pub eta: EtaRule,
    pub seed: u64,
    /// Independent stream index under `seed`, one per trajectory.
    pub stream: u64,
    pub sde_coefficients: SdeCoefficients,
    /// Replace every noise draw by zero (deterministic skeleton).
    pub zero_noise: bool,
    pub record_trajectory: bool,
}

impl SolverSpec {
    pub fn new(method: Method, grid: TimeGrid) -> Self {
        Self {
            method,
            grid,
            eta: EtaRule::Constant(0.0),
            seed: 0,
            stream: 0,
            sde_coefficients: SdeCoefficients::Simplified,
            zero_noise: false,
            record_trajectory: false,
        }
    }

    pub fn with_eta(mut self, eta: EtaRule) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_seed(mut self, seed: u64, stream: u64) -> Self {
        self.seed = seed;
        self.stream = stream;
        self
    }

    pub fn with_trajectory(mut self) -> Self {
        self.record_trajectory = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.method.is_singlestep() && self.grid.intermediates().is_none() {
            return Err(Error::Spec(format!(
                "{} needs a grid with intermediate times",
                self.method
            )));
        }
        if let EtaRule::Constant(eta) = self.eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(Error::Spec(format!("eta must be a finite non-negative number, got {eta}")));
            }
        }
        Ok(())
    }
}

/// Result of a sampling run.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub x: Vec<f64>,
    /// Number of model evaluations.
    pub nfe: usize,
    /// `(t_i, x_{t_i})` for every grid time, when requested.
    pub trajectory: Option<Vec<(f64, Vec<f64>)>>,
}

struct Counted<'a, M: ?Sized> {
    model: &'a M,
    calls: std::cell::Cell<usize>,
}

impl<M: PredictionModel + ?Sized> PredictionModel for Counted<'_, M> {
    fn parameterization(&self) -> crate::models::Parameterization {
        self.model.parameterization()
    }
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.calls.set(self.calls.get() + 1);
        self.model.eval(x, t)
    }
}

/// Runs the selected sampler over `spec.grid` from `t_0` to `t_M`.
///
/// NFE: `2M` for the singlestep solvers, `M` for everything else.
pub fn sample<M: PredictionModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    spec: &SolverSpec,
    x_start: &[f64],
) -> Result<SampleOutput> {
    spec.validate()?;
    if x_start.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: x_start.len(),
        });
    }
    let model = Counted {
        model,
        calls: std::cell::Cell::new(0),
    };
    let times = spec.grid.times();
    let m = spec.grid.steps();
    let mut trajectory = spec
        .record_trajectory
        .then(|| vec![(times[0], x_start.to_vec())]);
    let mut record = |t: f64, x: &[f64]| {
        if let Some(tr) = trajectory.as_mut() {
            tr.push((t, x.to_vec()));
        }
    };
    let mut noise = NoiseStream::new(spec.seed, spec.stream, x_start.len());
    let draw = |noise: &mut NoiseStream| {
        if spec.zero_noise {
            vec![0.0; x_start.len()]
        } else {
            noise.next_normal()
        }
    };

    let mut x = x_start.to_vec();
    match spec.method {
        Method::FirstOrderData => {
            for i in 1..=m {
                x = first_order_data_step(&x, &model, times[i - 1], times[i], schedule)?;
                record(times[i], &x);
            }
        }
        Method::DdimEta => {
            for i in 1..=m {
                let step = Interval::new(schedule, times[i - 1], times[i])?;
                let eta = match spec.eta {
                    EtaRule::Constant(e) => e,
                    EtaRule::SdeMatched => sde_matched_eta(&step),
                };
                let z = (eta > 0.0).then(|| draw(&mut noise));
                x = ddim_eta_step(&x, &model, times[i - 1], times[i], eta, z.as_deref(), schedule)?;
                record(times[i], &x);
            }
        }
        Method::DpmPp2s | Method::DpmSolver2 => {
            let mids = spec.grid.intermediates().expect("validated");
            for i in 1..=m {
                x = if spec.method == Method::DpmPp2s {
                    dpm_pp_2s_step(&x, &model, times[i - 1], mids[i - 1], times[i], schedule)?
                } else {
                    dpm_solver_2_step(&x, &model, times[i - 1], mids[i - 1], times[i], schedule)?
                };
                record(times[i], &x);
            }
        }
        Method::DpmPp2m => {
            let mut state = StepState::start(&model, schedule, times[0], x)?;
            for i in 1..=m {
                state = dpm_pp_2m_step(state, &model, times[i], schedule, i < m)?;
                record(times[i], &state.x);
            }
            x = state.x;
        }
        Method::Sde1 | Method::SdePp1 => {
            for i in 1..=m {
                let z = draw(&mut noise);
                x = if spec.method == Method::Sde1 {
                    sde::sde_1_step(&x, &model, times[i - 1], times[i], &z, schedule)?
                } else {
                    sde::sde_pp_1_step(&x, &model, times[i - 1], times[i], &z, schedule)?
                };
                record(times[i], &x);
            }
        }
        Method::Sde2m | Method::SdePp2m => {
            let data = spec.method == Method::SdePp2m;
            let predict = |x: &[f64], t: f64| {
                if data {
                    predict_data(&model, schedule, x, t)
                } else {
                    predict_noise(&model, schedule, x, t)
                }
            };
            let mut prior: Option<(f64, Vec<f64>)> = None;
            let mut current = predict(&x, times[0])?;
            for i in 1..=m {
                let step = Interval::new(schedule, times[i - 1], times[i])?;
                let z = draw(&mut noise);
                let prev = prior
                    .as_ref()
                    .map(|(t, out)| Ok::<_, Error>((schedule.lambda(*t)?, out.as_slice())))
                    .transpose()?;
                x = if data {
                    sde::sde_pp_2m_update(&x, &current, prev, &step, &z, spec.sde_coefficients)?
                } else {
                    sde::sde_2m_update(&x, &current, prev, &step, &z, spec.sde_coefficients)?
                };
                record(times[i], &x);
                if i < m {
                    let next = predict(&x, times[i])?;
                    prior = Some((times[i - 1], std::mem::replace(&mut current, next)));
                }
            }
        }
    }
    Ok(SampleOutput {
        x,
        nfe: model.calls.get(),
        trajectory,
    })
}
