//! Weighted robustness/gain objectives and a multi-start quasi-Newton search
//! over the real coordinates of the parameter matrix.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::eigstructure::EigStructure;
use crate::error::{Error, Result};
use crate::linalg::ToleranceConfig;
use crate::metrics::Metrics;
use crate::placement::{ParameterMatrix, PlacementResult, Placer};
use crate::system::System;

/// Value reported for parameters whose `V_K` is singular.
pub const SINGULAR_SENTINEL: f64 = 1e300;

/// Draws per restart before giving up on finding a nonsingular start.
const MAX_INITIAL_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// `alpha (||V||^2 + ||V^-1||^2) + (1 - alpha) ||F||^2`
    Condition,
    /// `alpha delta(A + B F)^2 + (1 - alpha) ||F||^2`
    Normality,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Condition => "condition",
            Method::Normality => "normality",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "condition" => Ok(Method::Condition),
            "normality" => Ok(Method::Normality),
            other => Err(Error::Options(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSpec {
    pub method: Method,
    pub alpha: f64,
}

impl ObjectiveSpec {
    pub fn new(method: Method, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Options(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        Ok(Self { method, alpha })
    }
}

/// Objective value with a flag for parameters that yield a singular `V_K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub singular: bool,
}

impl Evaluation {
    pub fn ok(value: f64) -> Self {
        Self {
            value,
            singular: false,
        }
    }

    pub fn singular() -> Self {
        Self {
            value: SINGULAR_SENTINEL,
            singular: true,
        }
    }

    pub fn usable(&self) -> bool {
        !self.singular && self.value.is_finite()
    }
}

pub fn objective_f1(placement: &PlacementResult, alpha: f64) -> f64 {
    alpha * (placement.v.norm_squared() + placement.v_inv.norm_squared())
        + (1.0 - alpha) * placement.f.norm_squared()
}

/// `alpha delta^2 + (1 - alpha) ||F||^2` with `delta^2 = ||A + B F||_F^2 - sum |lambda|^2`
/// over the assigned spectrum. Equal to the Schur-based value for an exact
/// placement, and smooth in `K` where the Schur form of a defective closed
/// loop carries `eps^(1/p)` eigenvalue noise.
pub fn objective_f2(
    sys: &System,
    spec: &EigStructure,
    placement: &PlacementResult,
    alpha: f64,
) -> f64 {
    let delta_sq = if alpha > 0.0 {
        let assigned: f64 = spec.spectrum().iter().map(|z| z.norm_sqr()).sum();
        (sys.closed_loop(&placement.f).norm_squared() - assigned).max(0.0)
    } else {
        0.0
    };
    alpha * delta_sq + (1.0 - alpha) * placement.f.norm_squared()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
    /// Set when some coordinate fell back to a one-sided difference.
    pub one_sided: bool,
}

/// Central differences with step `rel_step * (1 + |x_i|)` per coordinate.
///
/// A probe that lands on a singular point falls back to the one-sided
/// difference on the other side; if both sides fail the component is zero.
pub fn central_difference<F>(f: F, x: &[f64], rel_step: f64) -> Gradient
where
    F: Fn(&[f64]) -> Evaluation,
{
    let centre = f(x);
    let mut probe = x.to_vec();
    let mut one_sided = false;
    let values = (0..x.len())
        .map(|i| {
            let h = rel_step * (1.0 + x[i].abs());
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            match (up.usable(), down.usable()) {
                (true, true) => (up.value - down.value) / (2.0 * h),
                (true, false) if centre.usable() => {
                    one_sided = true;
                    (up.value - centre.value) / h
                }
                (false, true) if centre.usable() => {
                    one_sided = true;
                    (centre.value - down.value) / h
                }
                _ => {
                    one_sided = true;
                    0.0
                }
            }
        })
        .collect();
    Gradient { values, one_sided }
}

/// A smooth function of a real vector.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, x: &[f64]) -> Evaluation;

    fn gradient(&self, x: &[f64], rel_step: f64) -> Gradient {
        central_difference(|y| self.evaluate(y), x, rel_step)
    }
}

/// `f1` or `f2` as a function of the free coordinates of `K`.
#[derive(Debug, Clone)]
pub struct PlacementObjective {
    placer: Placer,
    spec: ObjectiveSpec,
}

impl PlacementObjective {
    pub fn new(placer: Placer, spec: ObjectiveSpec) -> Self {
        Self { placer, spec }
    }

    pub fn placer(&self) -> &Placer {
        &self.placer
    }

    pub fn objective(&self) -> ObjectiveSpec {
        self.spec
    }

    pub fn parameters(&self, x: &[f64]) -> Result<ParameterMatrix> {
        ParameterMatrix::from_coords(self.placer.spec(), self.placer.system().m(), x)
    }

    pub fn value_of(&self, placement: &PlacementResult) -> f64 {
        match self.spec.method {
            Method::Condition => objective_f1(placement, self.spec.alpha),
            Method::Normality => objective_f2(
                self.placer.system(),
                self.placer.spec(),
                placement,
                self.spec.alpha,
            ),
        }
    }
}

impl Objective for PlacementObjective {
    fn dim(&self) -> usize {
        self.placer.dim()
    }

    fn evaluate(&self, x: &[f64]) -> Evaluation {
        let placed = self.parameters(x).and_then(|k| self.placer.place(&k));
        match placed {
            Ok(p) => Evaluation::ok(self.value_of(&p)),
            Err(_) => Evaluation::singular(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptOptions {
    pub restarts: usize,
    pub max_iters: usize,
    /// Relative finite-difference step.
    pub grad_step: f64,
    /// Stop once `max |g_i| <= tol_grad * (1 + |f|)`.
    pub tol_grad: f64,
    pub seed: u64,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iters: 500,
            grad_step: f64::EPSILON.cbrt(),
            tol_grad: 1e-6,
            seed: 0,
        }
    }
}

impl OptOptions {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iters == 0 {
            return Err(Error::Options(
                "restarts and max_iters must be positive".into(),
            ));
        }
        if !(self.grad_step > 0.0 && self.grad_step.is_finite())
            || !(self.tol_grad > 0.0 && self.tol_grad.is_finite())
        {
            return Err(Error::Options(
                "grad_step and tol_grad must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    Stalled,
    LineSearchFailed,
    MaxIterations,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::GradientTolerance => "gradient",
            StopReason::Stalled => "stalled",
            StopReason::LineSearchFailed => "line-search",
            StopReason::MaxIterations => "max-iters",
        })
    }
}

/// Objective values after the start and after every accepted step of one descent.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartTrace {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
    pub initial_draws: usize,
}

impl RestartTrace {
    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("trace holds the starting value")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub x: Vec<f64>,
    pub value: f64,
    pub trace: RestartTrace,
}

/// BFGS with Armijo backtracking from `x0`.
///
/// Singular probes count as infinitely bad, so the step just shrinks.
pub fn descend<O: Objective + ?Sized>(obj: &O, x0: Vec<f64>, opts: &OptOptions) -> Descent {
    const ARMIJO: f64 = 1e-4;
    const MAX_HALVINGS: usize = 60;
    const STALL_LIMIT: usize = 5;

    let n = x0.len();
    let mut x = DVector::from_vec(x0);
    let mut f = obj.evaluate(x.as_slice()).value;
    let mut g = DVector::from_vec(obj.gradient(x.as_slice(), opts.grad_step).values);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut first_update = true;
    let mut values = vec![f];
    let mut stalls = 0;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        if g.amax() <= opts.tol_grad * (1.0 + f.abs()) {
            stop = StopReason::GradientTolerance;
            break;
        }
        let mut d = -(&h_inv * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) || !slope.is_finite() {
            h_inv.fill_with_identity();
            first_update = true;
            d = -&g;
            slope = -g.norm_squared();
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let xt = &x + &d * t;
            let e = obj.evaluate(xt.as_slice());
            if e.usable() && e.value <= f + ARMIJO * t * slope {
                accepted = Some((xt, e.value));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        iterations += 1;

        let g_new = DVector::from_vec(obj.gradient(x_new.as_slice(), opts.grad_step).values);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first_update {
                h_inv *= sy / y.norm_squared();
                first_update = false;
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (H y s^T + s y^T H) + (rho^2 y^T H y + rho) s s^T
            h_inv -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }

        let decrease = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        values.push(f);

        if decrease <= 1e-14 * (1.0 + f.abs()) {
            stalls += 1;
            if stalls >= STALL_LIMIT {
                stop = StopReason::Stalled;
                break;
            }
        } else {
            stalls = 0;
        }
    }

    Descent {
        x: x.as_slice().to_vec(),
        value: f,
        trace: RestartTrace {
            values,
            iterations,
            stop,
            initial_draws: 0,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStart {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartTrace>,
}

/// Independent descents from standard normal starts, one RNG stream per restart.
pub fn multi_start<O: Objective>(obj: &O, opts: &OptOptions) -> Result<MultiStart> {
    opts.validate()?;
    let runs: Vec<Option<Descent>> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            for draw in 1..=MAX_INITIAL_DRAWS {
                let x0: Vec<f64> = (0..obj.dim()).map(|_| rng.sample(StandardNormal)).collect();
                if obj.evaluate(&x0).usable() {
                    let mut d = descend(obj, x0, opts);
                    d.trace.initial_draws = draw;
                    return Some(d);
                }
            }
            None
        })
        .collect();

    let mut best: Option<(usize, &Descent)> = None;
    for (i, run) in runs.iter().enumerate() {
        if let Some(d) = run {
            if best.is_none_or(|(_, b)| d.value < b.value) {
                best = Some((i, d));
            }
        }
    }
    let (best_restart, best_run) = best.ok_or(Error::NoInitialPoint {
        attempts: MAX_INITIAL_DRAWS * opts.restarts,
    })?;
    Ok(MultiStart {
        best_x: best_run.x.clone(),
        best_value: best_run.value,
        best_restart,
        restarts: runs
            .iter()
            .map(|r| match r {
                Some(d) => d.trace.clone(),
                None => RestartTrace {
                    values: vec![SINGULAR_SENTINEL],
                    iterations: 0,
                    stop: StopReason::LineSearchFailed,
                    initial_draws: MAX_INITIAL_DRAWS,
                },
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub objective: ObjectiveSpec,
    pub best_k: ParameterMatrix,
    pub best_coords: Vec<f64>,
    pub best_value: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartTrace>,
    pub placement: PlacementResult,
    pub metrics: Metrics,
}

/// Searches the parameter space of `(sys, spec)` for a minimizer of `objective`.
pub fn minimize(
    sys: &System,
    spec: &EigStructure,
    objective: ObjectiveSpec,
    opts: &OptOptions,
    tol: &ToleranceConfig,
) -> Result<OptResult> {
    let placer = Placer::new(sys, spec, tol)?;
    let obj = PlacementObjective::new(placer, objective);
    let ms = multi_start(&obj, opts)?;
    let best_k = obj.parameters(&ms.best_x)?;
    let placement = obj.placer().place(&best_k)?;
    let metrics = Metrics::of(sys, &placement, tol)?;
    Ok(OptResult {
        objective,
        best_k,
        best_coords: ms.best_x,
        best_value: ms.best_value,
        best_restart: ms.best_restart,
        restarts: ms.restarts,
        placement,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        centre: Vec<f64>,
        weights: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.centre.len()
        }

        fn evaluate(&self, x: &[f64]) -> Evaluation {
            let v = x
                .iter()
                .zip(&self.centre)
                .zip(&self.weights)
                .map(|((a, c), w)| w * (a - c) * (a - c))
                .sum();
            Evaluation::ok(v)
        }
    }

    fn quad() -> Quadratic {
        Quadratic {
            centre: vec![1.0, -2.0, 0.5],
            weights: vec![1.0, 10.0, 0.1],
        }
    }

    #[test]
    fn quadratic_gradient_is_exact() {
        let q = quad();
        let x = [0.3, 0.7, -1.1];
        // central differences carry no truncation error on a quadratic
        let g = q.gradient(&x, 1e-3);
        for (i, xi) in x.iter().enumerate() {
            let exact = 2.0 * q.weights[i] * (xi - q.centre[i]);
            assert!(
                (g.values[i] - exact).abs() < 1e-10,
                "{i}: {} vs {exact}",
                g.values[i]
            );
        }
        assert!(!g.one_sided);
    }

    #[test]
    fn one_sided_fallback_is_flagged() {
        let f = |x: &[f64]| {
            if x[0] > 1.0 {
                Evaluation::singular()
            } else {
                Evaluation::ok(3.0 * x[0])
            }
        };
        let g = central_difference(f, &[1.0], 1e-3);
        assert!(g.one_sided);
        assert!((g.values[0] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn bfgs_finds_quadratic_minimum() {
        let q = quad();
        let d = descend(&q, vec![5.0, 5.0, 5.0], &OptOptions::default());
        for i in 0..3 {
            assert!((d.x[i] - q.centre[i]).abs() < 1e-5);
        }
        assert!(d.trace.values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn multi_start_is_deterministic() {
        let q = quad();
        let opts = OptOptions {
            restarts: 4,
            seed: 9,
            ..Default::default()
        };
        let a = multi_start(&q, &opts).unwrap();
        let b = multi_start(&q, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.restarts.iter().all(|r| r.final_value() >= a.best_value));
    }

    #[test]
    fn options_and_alpha_validation() {
        assert!(ObjectiveSpec::new(Method::Condition, 1.5).is_err());
        assert!(OptOptions {
            restarts: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert_eq!("normality".parse::<Method>().unwrap(), Method::Normality);
        assert!("other".parse::<Method>().is_err());
    }
}
