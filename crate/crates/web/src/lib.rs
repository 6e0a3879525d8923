//! Browser bindings for the interactive demo page in `www/`.
//!
//! Three operations, each returning a flat `Float64Array`:
//! schedule curves, sampled 1-D trajectories on the Gaussian oracle next to the
//! exact probability flow, and an endpoint-error convergence curve.
//! The plain functions in [`demo`] do the work and are tested natively.

use wasm_bindgen::prelude::*;

pub mod demo {
    use dpm_solver::harness::{run_convergence, StudySpec};
    use dpm_solver::ode::{sample, Method, SolverSpec};
    use dpm_solver::oracle::GaussianOracle;
    use dpm_solver::schedule::make_time_grid;
    use dpm_solver::sde::NoiseStream;
    use dpm_solver::{GridKind, IntermediatePlacement, NoiseSchedule, Parameterization};

    pub type Result<T> = std::result::Result<T, String>;

    fn err(e: dpm_solver::Error) -> String {
        e.to_string()
    }

    fn grid_kind(name: &str) -> Result<GridKind> {
        dpm_solver::harness::parse_grid(name).map_err(err)
    }

    /// `points` rows of `[t, alpha, sigma, lambda]` over the schedule interval.
    pub fn schedule_curves(schedule: &str, points: usize) -> Result<Vec<f64>> {
        let s = NoiseSchedule::from_name(schedule).map_err(err)?;
        if points < 2 {
            return Err("need at least two points".into());
        }
        let (lo, hi) = (s.t_min(), s.t_max());
        let mut out = Vec::with_capacity(4 * points);
        for k in 0..points {
            let t = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            let c = s.alpha_sigma_lambda(t).map_err(err)?;
            out.extend([t, c.alpha, c.sigma, c.lambda]);
        }
        Ok(out)
    }

    /// Trajectory request for [`trajectories`].
    #[derive(Debug, Clone, PartialEq)]
    pub struct TrajectoryQuery {
        pub method: String,
        pub schedule: String,
        pub grid: String,
        pub steps: usize,
        pub mu: f64,
        pub s0: f64,
        pub paths: usize,
        pub seed: u64,
    }

    /// Layout: `[steps + 1` grid times`]`, then for every path
    /// `[steps + 1` sampled values`]` followed by `[steps + 1` exact-flow values`]`
    /// (the exact flow from the same `x_T`; for SDE methods it is only a guide).
    pub fn trajectories(q: &TrajectoryQuery) -> Result<Vec<f64>> {
        let s = NoiseSchedule::from_name(&q.schedule).map_err(err)?;
        let method = Method::from_name(&q.method).map_err(err)?;
        let oracle = GaussianOracle::isotropic(q.mu, q.s0, 1).map_err(err)?;
        let model = oracle.model(&s, Parameterization::Data);
        let mids = method.is_singlestep().then_some(IntermediatePlacement::TimeMidpoint);
        let grid = make_time_grid(&s, q.steps, grid_kind(&q.grid)?, mids).map_err(err)?;
        let times = grid.times().to_vec();
        let start_mean = oracle.marginal_mean(&s, s.t_max()).map_err(err)?[0];
        let start_sd = oracle.marginal_var(&s, s.t_max()).map_err(err)?.sqrt();
        let mut starts = NoiseStream::new(q.seed, u64::MAX, 1);
        let mut out = times.clone();
        for k in 0..q.paths as u64 {
            let x_t = start_mean + start_sd * starts.next_normal()[0];
            let spec = SolverSpec::new(method, grid.clone()).with_seed(q.seed, k).with_trajectory();
            let run = sample(&model, &s, &spec, &[x_t]).map_err(err)?;
            out.extend(run.trajectory.expect("requested").iter().map(|(_, x)| x[0]));
            for &t in &times {
                out.push(oracle.exact_flow(&s, &[x_t], s.t_max(), t).map_err(err)?[0]);
            }
        }
        Ok(out)
    }

    /// Rows of `[M, error, nfe]` for each method in turn, followed by one fitted
    /// order per method.
    pub fn convergence(methods: &str, steps: &[u32], mu: f64, s0: f64, grid: &str) -> Result<Vec<f64>> {
        let methods = methods
            .split(',')
            .filter(|m| !m.trim().is_empty())
            .map(|m| Method::from_name(m.trim()))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(err)?;
        let mut study = StudySpec::new(methods.clone(), steps.iter().map(|&m| m as usize).collect());
        study.oracle = GaussianOracle::isotropic(mu, s0, 4).map_err(err)?;
        study.grid = grid_kind(grid)?;
        study.draws = 8;
        study.tol = 1e-9;
        study.timing = false;
        let records = run_convergence(&study).map_err(err)?;
        let mut out = Vec::new();
        let mut orders = Vec::new();
        for m in &methods {
            let mut rows: Vec<_> = records.iter().filter(|r| r.method == m.name()).collect();
            rows.sort_by_key(|r| steps.iter().position(|&s| s as usize == r.m));
            for r in &rows {
                out.extend([r.m as f64, r.error_l2_per_dim, r.nfe as f64]);
            }
            orders.push(rows.first().and_then(|r| r.fitted_order).unwrap_or(f64::NAN));
        }
        out.extend(orders);
        Ok(out)
    }
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// `[t, alpha, sigma, lambda]` rows.
#[wasm_bindgen(js_name = scheduleCurves)]
pub fn schedule_curves(schedule: &str, points: usize) -> Result<Vec<f64>, JsError> {
    demo::schedule_curves(schedule, points).map_err(js)
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn trajectories(
    method: &str,
    schedule: &str,
    grid: &str,
    steps: usize,
    mu: f64,
    s0: f64,
    paths: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    demo::trajectories(&demo::TrajectoryQuery {
        method: method.into(),
        schedule: schedule.into(),
        grid: grid.into(),
        steps,
        mu,
        s0,
        paths,
        seed: seed.into(),
    })
    .map_err(js)
}

#[wasm_bindgen]
pub fn convergence(methods: &str, steps: &[u32], mu: f64, s0: f64, grid: &str) -> Result<Vec<f64>, JsError> {
    demo::convergence(methods, steps, mu, s0, grid).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::demo::*;

    #[test]
    fn schedule_rows_are_variance_preserving() {
        let rows = schedule_curves("cosine", 50).unwrap();
        assert_eq!(rows.len(), 200);
        for r in rows.chunks(4) {
            assert!((r[1] * r[1] + r[2] * r[2] - 1.0).abs() < 1e-12);
            assert!((r[3] - (r[1] / r[2]).ln()).abs() < 1e-9);
        }
        assert!(schedule_curves("nope", 10).is_err());
        assert!(schedule_curves("linear", 1).is_err());
    }

    #[test]
    fn deterministic_trajectories_track_the_exact_flow() {
        let q = TrajectoryQuery {
            method: "dpm_pp_2m".into(),
            schedule: "linear".into(),
            grid: "uniform_lambda".into(),
            steps: 40,
            mu: 1.0,
            s0: 0.5,
            paths: 3,
            seed: 1,
        };
        let out = trajectories(&q).unwrap();
        let n = q.steps + 1;
        assert_eq!(out.len(), n + q.paths * 2 * n);
        for p in 0..q.paths {
            let base = n + p * 2 * n;
            let (sampled, exact) = (&out[base..base + n], &out[base + n..base + 2 * n]);
            assert_eq!(sampled[0], exact[0]);
            assert!((sampled[n - 1] - exact[n - 1]).abs() < 1e-2);
        }
    }

    #[test]
    fn stochastic_trajectories_depend_on_the_seed() {
        let mut q = TrajectoryQuery {
            method: "sde_pp_2m".into(),
            schedule: "linear".into(),
            grid: "uniform_t".into(),
            steps: 20,
            mu: 0.0,
            s0: 1.0,
            paths: 2,
            seed: 1,
        };
        let a = trajectories(&q).unwrap();
        q.seed = 2;
        assert_ne!(a, trajectories(&q).unwrap());
        q.method = "what".into();
        assert!(trajectories(&q).is_err());
    }

    #[test]
    fn convergence_rows_and_orders() {
        let out = convergence("first_order_data,dpm_pp_2m", &[10, 20, 40], 1.0, 0.5, "uniform_lambda").unwrap();
        assert_eq!(out.len(), 2 * 3 * 3 + 2);
        assert_eq!(&out[..3][..1], &[10.0]);
        let (p1, p2) = (out[18], out[19]);
        assert!((p1 - 1.0).abs() < 0.25, "{p1}");
        assert!(p2 > 1.5, "{p2}");
        assert!(convergence("", &[10], 1.0, 0.5, "uniform_t").is_err());
    }
}
