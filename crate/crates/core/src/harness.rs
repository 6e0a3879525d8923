//! Convergence, equivalence and SDE-moment studies on the Gaussian oracle.
//!
//! Each study returns plain records; [`write_records`] serializes them with the
//! fixed CSV header and [`SuiteResult`] renders the one-line summaries printed
//! by the `dpm-harness` binary.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{FnModel, Parameterization, PredictionModel};
use crate::ode::{
    ddim_eta_step, dpm_pp_2s_step, dpm_pp_2s_step_noise_form, first_order_data_step, sample, sde_matched_eta,
    Interval, Method, SolverSpec,
};
use crate::oracle::{reference_solve, GaussianOracle};
use crate::schedule::{make_time_grid, GridKind, IntermediatePlacement, NoiseSchedule};
use crate::sde::{sde_pp_1_step, NoiseStream};
use crate::vecops::{l2_per_dim, max_abs_diff};

/// Exact CSV header of every record file.
pub const CSV_HEADER: &str = "method,M,nfe,error_l2_per_dim,fitted_order,wall_ms,seed";

/// Number of fixed starting points per configuration.
pub const DEFAULT_DRAWS: usize = 20;

/// One `(method, M, seed)` run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub method: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub nfe: usize,
    pub error_l2_per_dim: f64,
    pub fitted_order: Option<f64>,
    pub wall_ms: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct StudySpec {
    pub oracle: GaussianOracle,
    pub schedule: NoiseSchedule,
    pub methods: Vec<Method>,
    pub steps: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Reference-integrator tolerance.
    pub tol: f64,
    pub grid: GridKind,
    pub intermediates: IntermediatePlacement,
    /// Starting points per configuration (convergence) or trajectories (SDE stats).
    pub draws: usize,
    /// Record wall time; disable for byte-reproducible CSV.
    pub timing: bool,
}

impl StudySpec {
    /// Gaussian oracle `mu = 1, s0 = 0.5, D = 4` on the default linear schedule,
    /// steps uniform in `lambda` (uniform `t` leaves a final interval with
    /// `h > 1` even at `M = 80`, so the fitted order is pre-asymptotic).
    pub fn new(methods: Vec<Method>, steps: Vec<usize>) -> Self {
        Self {
            oracle: GaussianOracle::isotropic(1.0, 0.5, 4).expect("valid oracle"),
            schedule: NoiseSchedule::default_linear(),
            methods,
            steps,
            seeds: vec![0],
            tol: 1e-10,
            grid: GridKind::UniformLambda,
            intermediates: IntermediatePlacement::TimeMidpoint,
            draws: DEFAULT_DRAWS,
            timing: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Spec("method list is empty".into()));
        }
        if self.steps.is_empty() {
            return Err(Error::Spec("step list is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Spec("seed list is empty".into()));
        }
        if let Some(&m) = self.steps.iter().find(|&&m| m == 0) {
            return Err(Error::Spec(format!("step counts must be positive, got {m}")));
        }
        if self.draws == 0 {
            return Err(Error::Spec("need at least one draw".into()));
        }
        Ok(())
    }

    fn grid_for(&self, method: Method, steps: usize) -> Result<crate::schedule::TimeGrid> {
        let mids = method.is_singlestep().then_some(self.intermediates);
        make_time_grid(&self.schedule, steps, self.grid, mids)
    }

    // the clock is only read when timing is on (there is none on wasm32)
    fn start_clock(&self) -> Option<Instant> {
        self.timing.then(Instant::now)
    }

    fn elapsed_ms(&self, start: Option<Instant>) -> f64 {
        start.map_or(0.0, |s| s.elapsed().as_micros() as f64 / 1e3)
    }
}

/// Least-squares order estimate: minus the slope of `log2 error` against `log2 M`.
pub fn fit_order(steps: &[usize], errors: &[f64]) -> Option<f64> {
    if steps.len() < 2 || steps.len() != errors.len() || errors.iter().any(|e| !(*e > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = steps.iter().map(|&m| (m as f64).log2()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}

/// Standard-normal starting points for one seed.
pub fn starting_points(seed: u64, draws: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut noise = NoiseStream::new(seed, u64::MAX, dim);
    (0..draws).map(|_| noise.next_normal()).collect()
}

fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| {
        (a.method.as_str(), a.m, a.seed).cmp(&(b.method.as_str(), b.m, b.seed))
    });
}

/// Endpoint error of every `(method, M, seed)` against the reference solution,
/// averaged over the fixed starting points, plus the fitted order per
/// `(method, seed)`.
pub fn run_convergence(study: &StudySpec) -> Result<Vec<RunRecord>> {
    study.validate()?;
    if let Some(m) = study.methods.iter().find(|m| m.is_stochastic()) {
        return Err(Error::Spec(format!(
            "{m} is stochastic; use the SDE statistics study instead"
        )));
    }
    let model = study.oracle.model(&study.schedule, Parameterization::Data);
    let mut records = Vec::new();
    for &seed in &study.seeds {
        let starts = starting_points(seed, study.draws, study.oracle.dim());
        let references = starts
            .iter()
            .map(|x| {
                reference_solve(&model, &study.schedule, x, study.tol).map(|r| r.x_end).map_err(|e| {
                    Error::Spec(format!("reference solve failed for seed {seed}: {e}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for &method in &study.methods {
            let mut group = Vec::with_capacity(study.steps.len());
            for &steps in &study.steps {
                let spec = SolverSpec::new(method, study.grid_for(method, steps)?);
                let start = study.start_clock();
                let mut total = 0.0;
                let mut nfe = 0;
                for (x, reference) in starts.iter().zip(&references) {
                    let out = sample(&model, &study.schedule, &spec, x)?;
                    nfe = out.nfe;
                    total += l2_per_dim(&out.x, reference);
                }
                group.push(RunRecord {
                    method: method.name().to_string(),
                    m: steps,
                    nfe,
                    error_l2_per_dim: total / starts.len() as f64,
                    fitted_order: None,
                    wall_ms: study.elapsed_ms(start),
                    seed,
                });
            }
            let errors: Vec<f64> = group.iter().map(|r| r.error_l2_per_dim).collect();
            let order = fit_order(&study.steps, &errors);
            for r in &mut group {
                r.fitted_order = order;
            }
            records.extend(group);
        }
    }
    sort_records(&mut records);
    Ok(records)
}

/// Writes records under [`CSV_HEADER`].
pub fn write_records<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_to_path(path: &Path, records: &[RunRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_records(std::io::BufWriter::new(file), records)
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: String,
    pub max_dev: f64,
    pub pass: bool,
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SUITE {} {} max_dev={:.3e}",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.max_dev
        )
    }
}

/// Acceptance band of the fitted order for a nominal order.
pub fn order_band(nominal: u32) -> (f64, f64) {
    match nominal {
        1 => (0.8, 1.2),
        _ => (1.7, 2.3),
    }
}

/// One order check per method: PASS when every seed's fitted order is inside
/// the band; `max_dev` is the largest distance from the nominal order.
pub fn order_suites(records: &[RunRecord]) -> Vec<SuiteResult> {
    let mut names: Vec<&str> = records.iter().map(|r| r.method.as_str()).collect();
    names.dedup();
    names
        .into_iter()
        .filter_map(|name| {
            let method = Method::from_name(name).ok()?;
            let nominal = method.order();
            let (lo, hi) = order_band(nominal);
            let fits: Vec<Option<f64>> = records
                .iter()
                .filter(|r| r.method == name)
                .map(|r| r.fitted_order)
                .collect();
            if fits.iter().all(Option::is_none) {
                return None;
            }
            let mut pass = true;
            let mut dev = 0.0f64;
            for fit in fits {
                match fit {
                    Some(p) => {
                        pass &= p >= lo && p <= hi;
                        dev = dev.max((p - nominal as f64).abs());
                    }
                    None => {
                        pass = false;
                        dev = f64::INFINITY;
                    }
                }
            }
            Some(SuiteResult {
                name: format!("order:{name}"),
                max_dev: dev,
                pass,
            })
        })
        .collect()
}

/// Configuration of the equivalence suites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceConfig {
    pub seed: u64,
    pub configurations: usize,
    /// Relative perturbation applied to the second route (negative control).
    pub perturbation: f64,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self {
            seed: 2022,
            configurations: 100,
            perturbation: 0.0,
        }
    }
}

pub const FIRST_ORDER_SUITE: &str = "first_order_vs_ddim";
pub const STOCHASTIC_SUITE: &str = "sde_pp_1_vs_stochastic_ddim";
pub const NOISE_FORM_SUITE: &str = "dpm_pp_2s_noise_form";

/// Random smooth test model: `out_i = a_i tanh(b_i x_i + c_i t) + d_i`.
fn random_model(rng: &mut ChaCha8Rng, dim: usize, kind: Parameterization) -> impl PredictionModel {
    let params: Vec<[f64; 4]> = (0..dim)
        .map(|_| {
            [
                rng.random_range(-1.5..1.5),
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.5..0.5),
            ]
        })
        .collect();
    FnModel::new(kind, dim, move |x: &[f64], t| {
        x.iter()
            .zip(&params)
            .map(|(xi, p)| p[0] * (p[1] * xi + p[2] * t).tanh() + p[3])
            .collect()
    })
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn perturbed(v: Vec<f64>, p: f64) -> Vec<f64> {
    v.into_iter().map(|x| x * (1.0 + p)).collect()
}

/// Runs the three algebraic-equivalence suites over randomized step
/// configurations and reports the maximum elementwise deviation of each.
pub fn run_equivalence(config: &EquivalenceConfig) -> Result<Vec<SuiteResult>> {
    let schedules = [NoiseSchedule::default_linear(), NoiseSchedule::cosine()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = 4;
    let p = config.perturbation;
    let mut dev = [0.0f64; 3];
    for k in 0..config.configurations {
        let schedule = &schedules[k % schedules.len()];
        let (lo, hi) = (schedule.t_min(), schedule.t_max());
        let t_s = rng.random_range(lo..hi);
        let t_t = rng.random_range(lo..t_s);
        let x = random_vector(&mut rng, dim);

        let data = random_model(&mut rng, dim, Parameterization::Data);
        let a = first_order_data_step(&x, &data, t_s, t_t, schedule)?;
        let b = perturbed(ddim_eta_step(&x, &data, t_s, t_t, 0.0, None, schedule)?, p);
        dev[0] = dev[0].max(max_abs_diff(&a, &b));

        let z = random_vector(&mut rng, dim);
        let eta = sde_matched_eta(&Interval::new(schedule, t_s, t_t)?);
        let a = sde_pp_1_step(&x, &data, t_s, t_t, &z, schedule)?;
        let b = perturbed(ddim_eta_step(&x, &data, t_s, t_t, eta, Some(&z), schedule)?, p);
        dev[1] = dev[1].max(max_abs_diff(&a, &b));

        let noise = random_model(&mut rng, dim, Parameterization::Noise);
        let (l_s, l_t) = (schedule.lambda(t_s)?, schedule.lambda(t_t)?);
        let r = rng.random_range(0.1..0.9);
        let t_mid = schedule.inverse_lambda(l_s + r * (l_t - l_s))?;
        if t_s > t_mid && t_mid > t_t {
            let a = dpm_pp_2s_step(&x, &noise, t_s, t_mid, t_t, schedule)?;
            let b = perturbed(dpm_pp_2s_step_noise_form(&x, &noise, t_s, t_mid, t_t, schedule)?, p);
            dev[2] = dev[2].max(max_abs_diff(&a, &b));
        }
    }
    let thresholds = [1e-12, 1e-12, 1e-10];
    let names = [FIRST_ORDER_SUITE, STOCHASTIC_SUITE, NOISE_FORM_SUITE];
    Ok((0..3)
        .map(|i| SuiteResult {
            name: names[i].to_string(),
            max_dev: dev[i],
            pass: dev[i] < thresholds[i],
        })
        .collect())
}

/// Sample moments at `t_min` against the analytic marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub method: Method,
    pub samples: usize,
    pub mean: f64,
    pub std: f64,
    pub target_mean: f64,
    pub target_std: f64,
    pub z_mean: f64,
    pub z_std: f64,
}

impl MomentReport {
    pub fn suites(&self) -> [SuiteResult; 2] {
        [
            SuiteResult {
                name: format!("sde_mean:{}", self.method),
                max_dev: self.z_mean.abs(),
                pass: self.z_mean.abs() < 3.0,
            },
            SuiteResult {
                name: format!("sde_std:{}", self.method),
                max_dev: self.z_std.abs(),
                pass: self.z_std.abs() < 3.0,
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeStudy {
    pub records: Vec<RunRecord>,
    pub moments: Vec<MomentReport>,
}

/// Options for [`run_sde_stats`] beyond the study spec.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SdeOptions {
    /// Force every noise draw to zero.
    pub zero_noise: bool,
}

/// Samples `study.draws` trajectories per `(method, M, seed)` starting from the
/// exact marginal at `t_max`, and compares pooled mean and standard deviation at
/// `t_min` with `N(alpha mu, alpha^2 s0^2 + sigma^2)`.
///
/// Standard errors: `sd / sqrt(n)` for the mean, `sd / sqrt(2 (n - 1))` for the
/// standard deviation, with `n` = trajectories times dimension (the oracle is
/// isotropic, so components are pooled).
pub fn run_sde_stats(study: &StudySpec, options: SdeOptions) -> Result<SdeStudy> {
    study.validate()?;
    let schedule = &study.schedule;
    let oracle = &study.oracle;
    let dim = oracle.dim();
    let (t0, t_end) = (schedule.t_max(), schedule.t_min());
    let start_mean = oracle.marginal_mean(schedule, t0)?;
    let start_sd = oracle.marginal_var(schedule, t0)?.sqrt();
    let target_mean = oracle.marginal_mean(schedule, t_end)?;
    let target_sd = oracle.marginal_var(schedule, t_end)?.sqrt();
    let target_mean_avg = target_mean.iter().sum::<f64>() / dim as f64;
    let model = oracle.model(schedule, Parameterization::Data);
    let mut records = Vec::new();
    let mut moments = Vec::new();
    for &method in &study.methods {
        if !method.is_stochastic() {
            return Err(Error::Spec(format!("{method} is not a stochastic method")));
        }
        for &steps in &study.steps {
            let grid = study.grid_for(method, steps)?;
            for &seed in &study.seeds {
                let start = study.start_clock();
                let mut sum = vec![0.0; dim];
                let mut finals = Vec::with_capacity(study.draws * dim);
                let mut nfe = 0;
                for k in 0..study.draws as u64 {
                    let z0 = NoiseStream::new(seed, 2 * k, dim).next_normal();
                    let x_start: Vec<f64> = z0
                        .iter()
                        .zip(&start_mean)
                        .map(|(z, m)| m + start_sd * z)
                        .collect();
                    let mut spec = SolverSpec::new(method, grid.clone()).with_seed(seed, 2 * k + 1);
                    spec.zero_noise = options.zero_noise;
                    let out = sample(&model, schedule, &spec, &x_start)?;
                    nfe = out.nfe;
                    for (s, v) in sum.iter_mut().zip(&out.x) {
                        *s += v;
                    }
                    finals.extend(out.x);
                }
                let n = finals.len() as f64;
                let mean_vec: Vec<f64> = sum.iter().map(|s| s / study.draws as f64).collect();
                let mean = finals.iter().sum::<f64>() / n;
                let var = finals
                    .iter()
                    .zip((0..dim).cycle())
                    .map(|(v, i)| (v - target_mean[i] - (mean - target_mean_avg)).powi(2))
                    .sum::<f64>()
                    / (n - 1.0);
                let std = var.sqrt();
                moments.push(MomentReport {
                    method,
                    samples: finals.len(),
                    mean,
                    std,
                    target_mean: target_mean_avg,
                    target_std: target_sd,
                    z_mean: (mean - target_mean_avg) / (target_sd / n.sqrt()),
                    z_std: (std - target_sd) / (target_sd / (2.0 * (n - 1.0)).sqrt()),
                });
                records.push(RunRecord {
                    method: method.name().to_string(),
                    m: steps,
                    nfe,
                    error_l2_per_dim: l2_per_dim(&mean_vec, &target_mean),
                    fitted_order: None,
                    wall_ms: study.elapsed_ms(start),
                    seed,
                });
            }
        }
    }
    sort_records(&mut records);
    Ok(SdeStudy { records, moments })
}

/// Parses `mu=<f>,s0=<f>` (optionally `dim=<n>`).
pub fn parse_oracle(text: &str, default_dim: usize) -> Result<GaussianOracle> {
    let (mut mu, mut s0, mut dim) = (None, None, default_dim);
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Spec(format!("expected key=value in oracle spec, got '{part}'")))?;
        let bad = |_| Error::Spec(format!("invalid value in '{part}'"));
        match key.trim() {
            "mu" => mu = Some(value.trim().parse::<f64>().map_err(bad)?),
            "s0" => s0 = Some(value.trim().parse::<f64>().map_err(bad)?),
            "dim" | "d" => dim = value.trim().parse::<usize>().map_err(|_| Error::Spec(format!("invalid value in '{part}'")))?,
            other => return Err(Error::Spec(format!("unknown oracle key '{other}'"))),
        }
    }
    let mu = mu.ok_or_else(|| Error::Spec("oracle spec needs mu".into()))?;
    let s0 = s0.ok_or_else(|| Error::Spec("oracle spec needs s0".into()))?;
    if dim == 0 {
        return Err(Error::Spec("oracle dimension must be positive".into()));
    }
    GaussianOracle::isotropic(mu, s0, dim)
}

/// Parses `uniform_t`, `uniform_lambda` or `kappa=<f>`.
pub fn parse_grid(text: &str) -> Result<GridKind> {
    match text {
        "uniform_t" => Ok(GridKind::UniformT),
        "uniform_lambda" => Ok(GridKind::UniformLambda),
        other => match other.strip_prefix("kappa=") {
            Some(k) => k
                .parse::<f64>()
                .map(GridKind::PowerKappa)
                .map_err(|_| Error::Spec(format!("invalid kappa in '{other}'"))),
            None => Err(Error::Spec(format!("unknown grid kind '{other}'"))),
        },
    }
}
