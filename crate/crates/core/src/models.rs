//! Prediction-model contract and the wrappers layered on top of it.
//!
//! A model predicts either the noise `eps` or the clean data `x0` from a noisy
//! input at time `t`. The two views are tied together by
//! `x0 = (x - sigma_t eps) / alpha_t`, so every solver can ask for whichever view
//! it needs through [`predict_data`] / [`predict_noise`].
//!
//! Guidance and thresholding are themselves [`PredictionModel`]s, so solvers
//! never need to know about them. Guidance composes before thresholding, and
//! thresholding always yields the data-prediction view.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parameterization {
    /// The model predicts the noise `eps`.
    Noise,
    /// The model predicts the clean sample `x0`.
    Data,
}

/// A (possibly wrapped) denoising model.
///
/// `eval` must be deterministic for a fixed `(x, t)` and return a vector of
/// length [`PredictionModel::dim`].
pub trait PredictionModel {
    fn parameterization(&self) -> Parameterization;
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>>;
}

impl<M: PredictionModel + ?Sized> PredictionModel for &M {
    fn parameterization(&self) -> Parameterization {
        (**self).parameterization()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        (**self).eval(x, t)
    }
}

impl<M: PredictionModel + ?Sized> PredictionModel for Box<M> {
    fn parameterization(&self) -> Parameterization {
        (**self).parameterization()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        (**self).eval(x, t)
    }
}

/// Adapts a closure `(x, t) -> output` into a model.
pub struct FnModel<F> {
    parameterization: Parameterization,
    dim: usize,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64], f64) -> Vec<f64>,
{
    pub fn new(parameterization: Parameterization, dim: usize, f: F) -> Self {
        Self {
            parameterization,
            dim,
            f,
        }
    }
}

impl<F> PredictionModel for FnModel<F>
where
    F: Fn(&[f64], f64) -> Vec<f64>,
{
    fn parameterization(&self) -> Parameterization {
        self.parameterization
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        debug_assert_eq!(x.len(), self.dim);
        let out = (self.f)(x, t);
        debug_assert_eq!(out.len(), self.dim);
        Ok(out)
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

/// `x0 = (x - sigma eps) / alpha`.
pub fn eps_to_x0(eps: &[f64], x: &[f64], alpha: f64, sigma: f64) -> Result<Vec<f64>> {
    check_dims(x.len(), eps.len())?;
    if alpha == 0.0 {
        return Err(Error::Singularity("alpha = 0 in eps -> x0".into()));
    }
    Ok(x.iter()
        .zip(eps)
        .map(|(xi, ei)| (xi - sigma * ei) / alpha)
        .collect())
}

/// `eps = (x - alpha x0) / sigma`.
pub fn x0_to_eps(x0: &[f64], x: &[f64], alpha: f64, sigma: f64) -> Result<Vec<f64>> {
    check_dims(x.len(), x0.len())?;
    if sigma == 0.0 {
        return Err(Error::Singularity("sigma = 0 in x0 -> eps".into()));
    }
    Ok(x.iter()
        .zip(x0)
        .map(|(xi, di)| (xi - alpha * di) / sigma)
        .collect())
}

/// Evaluates the model and returns its data-prediction view.
pub fn predict_data<M: PredictionModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    let out = model.eval(x, t)?;
    match model.parameterization() {
        Parameterization::Data => Ok(out),
        Parameterization::Noise => {
            let c = schedule.alpha_sigma_lambda(t)?;
            eps_to_x0(&out, x, c.alpha, c.sigma)
        }
    }
}

/// Evaluates the model and returns its noise-prediction view.
pub fn predict_noise<M: PredictionModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    let out = model.eval(x, t)?;
    match model.parameterization() {
        Parameterization::Noise => Ok(out),
        Parameterization::Data => {
            let c = schedule.alpha_sigma_lambda(t)?;
            x0_to_eps(&out, x, c.alpha, c.sigma)
        }
    }
}

/// Classifier-free combination `s * cond + (1 - s) * uncond`.
pub fn classifier_free_combine(cond: &[f64], uncond: &[f64], scale: f64) -> Result<Vec<f64>> {
    check_dims(cond.len(), uncond.len())?;
    Ok(cond
        .iter()
        .zip(uncond)
        .map(|(c, u)| scale * c + (1.0 - scale) * u)
        .collect())
}

/// Classifier guidance `eps - s * sigma * grad log p(c | x, t)`.
pub fn classifier_guide(eps: &[f64], grad_logp: &[f64], scale: f64, sigma: f64) -> Result<Vec<f64>> {
    check_dims(eps.len(), grad_logp.len())?;
    if !(sigma > 0.0) {
        return Err(Error::Argument(format!("sigma must be positive, got {sigma}")));
    }
    Ok(eps
        .iter()
        .zip(grad_logp)
        .map(|(e, g)| e - scale * sigma * g)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ThresholdMode {
    #[default]
    None,
    /// Elementwise clip to `[-bound, bound]`.
    Static,
    /// Clip to a per-sample percentile of `|x0|`, then rescale into `[-bound, bound]`.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub mode: ThresholdMode,
    pub bound: f64,
    /// Percentile in `(0, 1]`, dynamic mode only.
    pub percentile: f64,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        Self {
            mode: ThresholdMode::None,
            bound: 1.0,
            percentile: 0.995,
        }
    }
}

impl ThresholdSpec {
    pub fn fixed(bound: f64) -> Self {
        Self {
            mode: ThresholdMode::Static,
            bound,
            ..Self::default()
        }
    }

    pub fn dynamic(bound: f64, percentile: f64) -> Self {
        Self {
            mode: ThresholdMode::Dynamic,
            bound,
            percentile,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(Error::Argument(format!(
                "threshold bound must be positive, got {}",
                self.bound
            )));
        }
        if self.mode == ThresholdMode::Dynamic && !(self.percentile > 0.0 && self.percentile <= 1.0) {
            return Err(Error::Argument(format!(
                "percentile must lie in (0, 1], got {}",
                self.percentile
            )));
        }
        Ok(())
    }
}

/// Percentile with linear interpolation between order statistics
/// (position `p * (n - 1)` in the sorted sample).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    // keep the result between the two order statistics despite rounding
    (a + (b - a) * (pos - lo as f64)).clamp(a, b)
}

/// Applies static or dynamic thresholding to a data prediction.
pub fn threshold_x0(x0: &[f64], spec: &ThresholdSpec) -> Vec<f64> {
    let bound = spec.bound;
    match spec.mode {
        ThresholdMode::None => x0.to_vec(),
        ThresholdMode::Static => x0.iter().map(|v| v.clamp(-bound, bound)).collect(),
        ThresholdMode::Dynamic => {
            if x0.is_empty() {
                return Vec::new();
            }
            let abs: Vec<f64> = x0.iter().map(|v| v.abs()).collect();
            let level = percentile(&abs, spec.percentile).max(bound);
            if level == bound {
                return x0.iter().map(|v| v.clamp(-bound, bound)).collect();
            }
            let factor = level / bound;
            x0.iter()
                .map(|v| (v.clamp(-level, level) / factor).clamp(-bound, bound))
                .collect()
        }
    }
}

/// Classifier-free guided model: `s * cond + (1 - s) * uncond`.
///
/// Both models must share a parameterization; the combination is affine with
/// weights summing to one, so it commutes with the eps/x0 conversion.
pub struct ClassifierFree<C, U> {
    cond: C,
    uncond: U,
    scale: f64,
}

impl<C: PredictionModel, U: PredictionModel> ClassifierFree<C, U> {
    pub fn new(cond: C, uncond: U, scale: f64) -> Result<Self> {
        check_dims(cond.dim(), uncond.dim())?;
        if cond.parameterization() != uncond.parameterization() {
            return Err(Error::Argument(
                "conditional and unconditional models must share a parameterization".into(),
            ));
        }
        if !scale.is_finite() {
            return Err(Error::Argument(format!("guidance scale must be finite, got {scale}")));
        }
        Ok(Self {
            cond,
            uncond,
            scale,
        })
    }
}

impl<C: PredictionModel, U: PredictionModel> PredictionModel for ClassifierFree<C, U> {
    fn parameterization(&self) -> Parameterization {
        self.cond.parameterization()
    }
    fn dim(&self) -> usize {
        self.cond.dim()
    }
    fn eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let c = self.cond.eval(x, t)?;
        let u = self.uncond.eval(x, t)?;
        classifier_free_combine(&c, &u, self.scale)
    }
}

/// Classifier-guided noise model: `eps - s * sigma_t * grad log p(c | x, t)`.
///
/// The gradient is a user-supplied callable; the wrapper always exposes the
/// noise-prediction view.
pub struct ClassifierGuided<M, G> {
    model: M,
    grad_logp: G,
    scale: f64,
    schedule: NoiseSchedule,
}

impl<M, G> ClassifierGuided<M, G>
where
    M: PredictionModel,
    G: Fn(&[f64], f64) -> Vec<f64>,
{
    pub fn new(model: M, grad_logp: G, scale: f64, schedule: NoiseSchedule) -> Result<Self> {
        if !scale.is_finite() {
            return Err(Error::Argument(format!("guidance scale must be finite, got {scale}")));
        }
        Ok(Self {
            model,
            grad_logp,
            scale,
            schedule,
        })
    }
}

impl<M, G> PredictionModel for ClassifierGuided<M, G>
where
    M: PredictionModel,
    G: Fn(&[f64], f64) -> Vec<f64>,
{
    fn parameterization(&self) -> Parameterization {
        Parameterization::Noise
    }
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let eps = predict_noise(&self.model, &self.schedule, x, t)?;
        let grad = (self.grad_logp)(x, t);
        let sigma = self.schedule.sigma(t)?;
        classifier_guide(&eps, &grad, self.scale, sigma)
    }
}

/// Thresholds the data prediction of the wrapped model.
pub struct Thresholded<M> {
    model: M,
    spec: ThresholdSpec,
    schedule: NoiseSchedule,
}

impl<M: PredictionModel> Thresholded<M> {
    pub fn new(model: M, spec: ThresholdSpec, schedule: NoiseSchedule) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            model,
            spec,
            schedule,
        })
    }
}

impl<M: PredictionModel> PredictionModel for Thresholded<M> {
    fn parameterization(&self) -> Parameterization {
        Parameterization::Data
    }
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let x0 = predict_data(&self.model, &self.schedule, x, t)?;
        Ok(threshold_x0(&x0, &self.spec))
    }
}

/// Counts calls to the wrapped model.
pub struct CountingModel<M> {
    inner: M,
    calls: AtomicUsize,
}

impl<M: PredictionModel> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }
}

impl<M: PredictionModel> PredictionModel for CountingModel<M> {
    fn parameterization(&self) -> Parameterization {
        self.inner.parameterization()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.eval(x, t)
    }
}
