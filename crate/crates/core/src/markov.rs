//! Markovian reference models and fits.
//!
//! * `p^h (1-p)^(n-h)`: one error probability per fundamental error.
//! * Trajectory model: independent emitter `X`, `Y`, `Z` errors at each step,
//!   mapped to photon patterns and summed over all histories.
//! * Closed-form `N` scaling of a single pattern probability and its bound.

use std::collections::BTreeMap;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::goldensectionsearch::GoldenSectionSearch;
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::h_of;
use crate::emission::{ErrorDistribution, ErrorPattern, DEFAULT_MAX_PHOTONS};
use crate::error::{Error, Result};

/// Patterns with exact probability below this are left out of log objectives.
pub const LOG_FLOOR: f64 = 1e-14;

/// Model probabilities are clamped here before taking logs.
const MODEL_FLOOR: f64 = 1e-300;

/// Largest `n` for the literal `4^n` trajectory enumeration.
pub const MAX_ENUMERATION_PHOTONS: usize = 10;

const MARKOV_INTERVAL: (f64, f64) = (1e-6, 0.5);
const GRID_STEP: f64 = 0.01;

pub fn markov_prob(p: f64, alpha: ErrorPattern) -> f64 {
    let h = h_of(alpha);
    p.powi(h as i32) * (1.0 - p).powi((alpha.len() - h) as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    LeastSquaresLog,
    Bounding,
}

/// A pattern or point where the model falls below the target.
#[derive(Clone, Debug, Serialize)]
pub struct BoundViolation {
    pub index: usize,
    pub model: f64,
    pub exact: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub parameters: BTreeMap<String, f64>,
    pub objective: f64,
    /// Model value for each input pattern or point.
    pub model: Vec<f64>,
    /// Per-entry residual in the fit's own metric; `None` where the entry is
    /// excluded from the objective.
    pub residuals: Vec<Option<f64>>,
    pub bound_violations: Vec<BoundViolation>,
    /// Only set by bounding fits.
    pub attainable: Option<bool>,
    pub note: Option<String>,
}

impl FitReport {
    pub fn param(&self, name: &str) -> f64 {
        self.parameters.get(name).copied().unwrap_or(f64::NAN)
    }
}

fn violations(model: &[f64], exact: &[f64]) -> Vec<BoundViolation> {
    model
        .iter()
        .zip(exact)
        .enumerate()
        .filter(|(_, (m, e))| m < e)
        .map(|(index, (&model, &exact))| BoundViolation { index, model, exact, gap: exact - model })
        .collect()
}

fn check_distribution(dist: &ErrorDistribution) -> Result<()> {
    if dist.probs.len() != 1 << dist.n {
        return Err(Error::DimensionMismatch { expected: 1 << dist.n, found: dist.probs.len() });
    }
    if let Some((i, &p)) = dist.probs.iter().enumerate().find(|(_, &p)| !(p >= 0.0)) {
        return Err(Error::NegativeProbability { pattern: i, value: p });
    }
    Ok(())
}

/// True when no pattern with `h ≥ 1` carries probability above the floor.
fn is_degenerate(dist: &ErrorDistribution) -> bool {
    ErrorPattern::all(dist.n).all(|a| h_of(a) == 0 || dist.prob(a) < LOG_FLOOR)
}

fn argmin_error(e: argmin::core::Error) -> Error {
    Error::Fit(e.to_string())
}

struct ScalarCost<F: Fn(f64) -> f64>(F);

impl<F: Fn(f64) -> f64> CostFunction for ScalarCost<F> {
    type Param = f64;
    type Output = f64;
    fn cost(&self, x: &f64) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.0)(*x))
    }
}

/// Golden-section minimum of `f` on `[lo, hi]` starting from `x0`.
fn golden<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, x0: f64) -> Result<f64> {
    let solver = GoldenSectionSearch::new(lo, hi).and_then(|s| s.with_tolerance(1e-12)).map_err(argmin_error)?;
    let res = Executor::new(ScalarCost(f), solver)
        .configure(|s| s.param(x0.clamp(lo, hi)).max_iters(500))
        .run()
        .map_err(argmin_error)?;
    res.state().get_best_param().copied().ok_or_else(|| Error::Fit("golden-section search produced no estimate".into()))
}

/// Grid scan followed by golden-section refinement in the bracketing cell.
fn scan_then_golden<F: Fn(f64) -> f64>(f: F, grid: &[f64]) -> Result<f64> {
    let costs: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let best = costs
        .iter()
        .enumerate()
        .fold(0, |b, (i, &c)| if c < costs[b] { i } else { b });
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    if hi <= lo {
        return Ok(grid[best]);
    }
    let x = golden(&f, lo, hi, grid[best])?;
    Ok(if f(x) <= costs[best] { x } else { grid[best] })
}

fn log_markov(p: f64, h: usize, n: usize) -> f64 {
    (h as f64) * p.ln() + ((n - h) as f64) * (1.0 - p).ln()
}

/// Fits `p` in `p^h (1-p)^(n-h)` to an exact distribution.
pub fn fit_markov(dist: &ErrorDistribution, mode: FitMode) -> Result<FitReport> {
    check_distribution(dist)?;
    let n = dist.n;
    let patterns: Vec<ErrorPattern> = ErrorPattern::all(n).collect();
    let hs: Vec<usize> = patterns.iter().map(|&a| h_of(a)).collect();

    let finish = |p: f64, objective: f64, residuals: Vec<Option<f64>>, attainable, note| {
        let model: Vec<f64> = patterns.iter().map(|&a| markov_prob(p, a)).collect();
        FitReport {
            parameters: BTreeMap::from([("p".to_string(), p)]),
            objective,
            bound_violations: violations(&model, &dist.probs),
            model,
            residuals,
            attainable,
            note,
        }
    };

    if is_degenerate(dist) {
        let residuals = vec![None; patterns.len()];
        return Ok(finish(0.0, 0.0, residuals, None, Some("only the h = 0 band is populated; p = 0".into())));
    }

    match mode {
        FitMode::LeastSquaresLog => {
            let used: Vec<(usize, f64)> = (0..patterns.len())
                .filter(|&i| dist.probs[i] >= LOG_FLOOR)
                .map(|i| (hs[i], dist.probs[i].ln()))
                .collect();
            let objective = |p: f64| used.iter().map(|&(h, lp)| (log_markov(p, h, n) - lp).powi(2)).sum::<f64>();
            let (lo, hi) = MARKOV_INTERVAL;
            let p = golden(objective, lo, hi, 0.5 * (lo + hi))?;
            let residuals = (0..patterns.len())
                .map(|i| (dist.probs[i] >= LOG_FLOOR).then(|| log_markov(p, hs[i], n) - dist.probs[i].ln()))
                .collect();
            Ok(finish(p, objective(p), residuals, None, None))
        }
        FitMode::Bounding => {
            // For h ≥ 1 the model rises on [0, h/n]; each pattern needs p at
            // least at the root of model = P on that branch.
            let mut p = 0.0f64;
            for (i, &h) in hs.iter().enumerate() {
                if h == 0 || dist.probs[i] == 0.0 {
                    continue;
                }
                let target = dist.probs[i].ln();
                let peak = h as f64 / n as f64;
                let f = |q: f64| log_markov(q, h, n) - target;
                if f(peak) < 0.0 {
                    p = p.max(peak);
                    continue;
                }
                let (mut a, mut b) = (0.0, peak);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if mid <= a || mid >= b {
                        break;
                    }
                    if f(mid) >= 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                p = p.max(b);
            }
            let model: Vec<f64> = patterns.iter().map(|&a| markov_prob(p, a)).collect();
            let attainable = model.iter().zip(&dist.probs).all(|(m, e)| m >= e);
            let residuals = (0..patterns.len()).map(|i| Some(model[i] - dist.probs[i])).collect();
            let note = (!attainable).then(|| "no p makes the model dominate every pattern".to_string());
            Ok(finish(p, 0.0, residuals, Some(attainable), note))
        }
    }
}

// ---------------------------------------------------------------------------
// Trajectory model

/// Emitter Pauli error at one emission step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fundamental {
    I,
    X,
    Y,
    Z,
}

impl Fundamental {
    /// Photon pattern bits produced by this error at step `i`: `X → {i}`,
    /// `Y → {i, i-1}`, `Z → {i-1}`, with photon 0 dropped.
    pub fn mask(self, i: usize) -> usize {
        let here = 1usize << (i - 1);
        let before = if i > 1 { 1usize << (i - 2) } else { 0 };
        match self {
            Fundamental::I => 0,
            Fundamental::X => here,
            Fundamental::Y => here | before,
            Fundamental::Z => before,
        }
    }
}

pub fn trajectory_pattern(errors: &[Fundamental]) -> Result<ErrorPattern> {
    let bits = errors.iter().enumerate().fold(0, |acc, (i, e)| acc ^ e.mask(i + 1));
    ErrorPattern::new(bits, errors.len())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryModel {
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
    pub n: usize,
}

impl TrajectoryModel {
    pub fn new(p_x: f64, p_y: f64, p_z: f64, n: usize) -> Result<Self> {
        let m = Self { p_x, p_y, p_z, n };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ps = [self.p_x, self.p_y, self.p_z];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) || ps.iter().sum::<f64>() > 1.0 + 1e-15 {
            return Err(Error::InvalidParameter(format!(
                "trajectory probabilities ({}, {}, {}) are not a point of the simplex",
                self.p_x, self.p_y, self.p_z
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("at least one step is required".into()));
        }
        if self.n > DEFAULT_MAX_PHOTONS {
            return Err(Error::TooLarge { what: "photons", value: self.n, limit: DEFAULT_MAX_PHOTONS });
        }
        Ok(())
    }

    fn step_weights(&self) -> [(Fundamental, f64); 4] {
        [
            (Fundamental::I, 1.0 - self.p_x - self.p_y - self.p_z),
            (Fundamental::X, self.p_x),
            (Fundamental::Y, self.p_y),
            (Fundamental::Z, self.p_z),
        ]
    }
}

fn trajectory_probs(m: &TrajectoryModel) -> Vec<f64> {
    let weights = m.step_weights();
    let mut probs = vec![0.0; 1 << m.n];
    probs[0] = 1.0;
    for i in 1..=m.n {
        let mut next = vec![0.0; probs.len()];
        for (e, w) in weights {
            if w == 0.0 {
                continue;
            }
            let mask = e.mask(i);
            for (a, &p) in probs.iter().enumerate() {
                next[a ^ mask] += w * p;
            }
        }
        probs = next;
    }
    probs
}

fn to_distribution(n: usize, probs: Vec<f64>) -> ErrorDistribution {
    ErrorDistribution { n, dot_probs: vec![0.0; probs.len()], probs, polarization: None }
}

/// Pattern distribution of the trajectory model. Steps are independent, so
/// the sum over all `4^n` histories is accumulated one step at a time.
pub fn trajectory_distribution(model: &TrajectoryModel) -> Result<ErrorDistribution> {
    model.validate()?;
    Ok(to_distribution(model.n, trajectory_probs(model)))
}

/// The same distribution by listing all `4^n` histories.
pub fn trajectory_distribution_enumerated(model: &TrajectoryModel) -> Result<ErrorDistribution> {
    model.validate()?;
    let n = model.n;
    if n > MAX_ENUMERATION_PHOTONS {
        return Err(Error::TooLarge { what: "photons for trajectory enumeration", value: n, limit: MAX_ENUMERATION_PHOTONS });
    }
    let weights = model.step_weights();
    let mut probs = vec![0.0; 1 << n];
    let mut history = vec![Fundamental::I; n];
    for t in 0..1usize << (2 * n) {
        let mut w = 1.0;
        for (i, slot) in history.iter_mut().enumerate() {
            let (e, p) = weights[(t >> (2 * i)) & 3];
            *slot = e;
            w *= p;
        }
        probs[trajectory_pattern(&history)?.index()] += w;
    }
    Ok(to_distribution(n, probs))
}

fn log_objective(model: &[f64], used: &[(usize, f64)]) -> f64 {
    used.iter().map(|&(i, lp)| (model[i].max(MODEL_FLOOR).ln() - lp).powi(2)).sum()
}

struct TrajectoryCost<'a> {
    n: usize,
    used: &'a [(usize, f64)],
}

impl TrajectoryCost<'_> {
    fn eval(&self, p: &[f64]) -> f64 {
        if p.iter().any(|&x| x < 0.0) || p.iter().sum::<f64>() > 1.0 {
            return 1e300;
        }
        let m = TrajectoryModel { p_x: p[0], p_y: p[1], p_z: p[2], n: self.n };
        log_objective(&trajectory_probs(&m), self.used)
    }
}

impl CostFunction for TrajectoryCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(p))
    }
}

/// Fits `(p_x, p_y, p_z)` by log-space least squares: a 0.01 grid over the
/// simplex, then Nelder–Mead from the best grid point.
pub fn fit_trajectory(dist: &ErrorDistribution) -> Result<FitReport> {
    check_distribution(dist)?;
    let n = dist.n;
    let finish = |p: [f64; 3], objective: f64, used: &[(usize, f64)], note| -> Result<FitReport> {
        let model = trajectory_distribution(&TrajectoryModel::new(p[0], p[1], p[2], n)?)?.probs;
        let mut residuals = vec![None; model.len()];
        for &(i, lp) in used {
            residuals[i] = Some(model[i].max(MODEL_FLOOR).ln() - lp);
        }
        Ok(FitReport {
            parameters: BTreeMap::from([("p_x".into(), p[0]), ("p_y".into(), p[1]), ("p_z".into(), p[2])]),
            objective,
            bound_violations: violations(&model, &dist.probs),
            model,
            residuals,
            attainable: None,
            note,
        })
    };
    if is_degenerate(dist) {
        return finish([0.0; 3], 0.0, &[], Some("only the h = 0 band is populated; all rates 0".into()));
    }
    let used: Vec<(usize, f64)> =
        dist.probs.iter().enumerate().filter(|(_, &p)| p >= LOG_FLOOR).map(|(i, &p)| (i, p.ln())).collect();
    let cost = TrajectoryCost { n, used: &used };

    let steps = (1.0 / GRID_STEP).round() as usize;
    let grid: Vec<[usize; 3]> = (0..=steps)
        .flat_map(|x| (0..=steps - x).flat_map(move |y| (0..=steps - x - y).map(move |z| [x, y, z])))
        .collect();
    let costs: Vec<f64> = grid
        .par_iter()
        .map(|g| cost.eval(&g.map(|k| k as f64 * GRID_STEP)))
        .collect();
    let best = costs.iter().enumerate().fold(0, |b, (i, &c)| if c < costs[b] { i } else { b });
    let start: Vec<f64> = grid[best].iter().map(|&k| k as f64 * GRID_STEP).collect();

    let simplex: Vec<Vec<f64>> = std::iter::once(start.clone())
        .chain((0..3).map(|k| {
            let mut v = start.clone();
            v[k] += 0.5 * GRID_STEP;
            v
        }))
        .collect();
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-15).map_err(argmin_error)?;
    let res = Executor::new(TrajectoryCost { n, used: &used }, solver)
        .configure(|s| s.max_iters(5000))
        .run()
        .map_err(argmin_error)?;
    let refined = res.state().get_best_param().cloned().unwrap_or_else(|| start.clone());
    let refined_cost = cost.eval(&refined);
    let (p, objective) = if refined_cost <= costs[best] {
        (refined, refined_cost)
    } else {
        (start, costs[best])
    };
    // Clear negative zeros and rounding dust at the simplex faces.
    let p = [p[0].max(0.0), p[1].max(0.0), p[2].max(0.0)];
    finish(p, objective, &used, None)
}

// ---------------------------------------------------------------------------
// N scaling

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingForm {
    /// `1 - (1 + |a| N^-2)^(-1/2)`
    ExactForm,
    /// `c - (1 - |a| N^-2)^(-1/2)`
    BoundForm,
}

fn exact_form(a: f64, n: f64) -> f64 {
    1.0 - (1.0 + a.abs() / (n * n)).powf(-0.5)
}

fn bound_shape(a: f64, n: f64) -> f64 {
    (1.0 - a.abs() / (n * n)).powf(-0.5)
}

/// `sqrt(mean(((model - y)/y)^2))` over points with `y ≠ 0`.
pub fn relative_rms(model: &[f64], y: &[f64]) -> f64 {
    let terms: Vec<f64> = model.iter().zip(y).filter(|(_, &v)| v != 0.0).map(|(m, v)| ((m - v) / v).powi(2)).collect();
    if terms.is_empty() {
        return 0.0;
    }
    (terms.iter().sum::<f64>() / terms.len() as f64).sqrt()
}

/// Fits a closed-form `N` dependence by least squares on relative
/// residuals, so the fit objective is the reported relative RMS (squared).
/// Points with `y = 0` are weighted as absolute residuals.
pub fn scaling_fit(points: &[(usize, f64)], form: ScalingForm) -> Result<FitReport> {
    let needed = match form {
        ScalingForm::ExactForm => 3,
        ScalingForm::BoundForm => 4,
    };
    if points.len() < needed {
        return Err(Error::Fit(format!("{form:?} needs at least {needed} points, got {}", points.len())));
    }
    let mut ns: Vec<usize> = points.iter().map(|p| p.0).collect();
    ns.sort_unstable();
    if ns.windows(2).any(|w| w[0] == w[1]) || ns[0] == 0 {
        return Err(Error::Fit("N values must be distinct and positive".into()));
    }
    if points.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::Fit("non-finite data".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let weights: Vec<f64> = ys.iter().map(|&y| if y != 0.0 { 1.0 / (y * y) } else { 1.0 }).collect();
    let sse = |model: &[f64]| -> f64 { model.iter().zip(&ys).zip(&weights).map(|((m, y), w)| w * (m - y).powi(2)).sum() };

    let (params, model) = match form {
        ScalingForm::ExactForm => {
            let eval = |a: f64| xs.iter().map(|&n| exact_form(a, n)).collect::<Vec<f64>>();
            let mut grid = vec![0.0];
            grid.extend((0..=1600).map(|k| 10f64.powf(-8.0 + k as f64 * 0.01)));
            let a = scan_then_golden(|a| sse(&eval(a)), &grid)?;
            (BTreeMap::from([("a".to_string(), a)]), eval(a))
        }
        ScalingForm::BoundForm => {
            let n_min = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let a_max = n_min * n_min * (1.0 - 1e-9);
            let wsum: f64 = weights.iter().sum();
            let solve = |a: f64| -> (f64, Vec<f64>) {
                let g: Vec<f64> = xs.iter().map(|&n| bound_shape(a, n)).collect();
                let c = g.iter().zip(&ys).zip(&weights).map(|((g, y), w)| w * (y + g)).sum::<f64>() / wsum;
                (c, g.iter().map(|g| c - g).collect())
            };
            let grid: Vec<f64> = (0..=4000).map(|k| a_max * k as f64 / 4000.0).collect();
            let a = scan_then_golden(|a| sse(&solve(a).1), &grid)?;
            let (c, model) = solve(a);
            (BTreeMap::from([("a".to_string(), a), ("c".to_string(), c)]), model)
        }
    };
    let objective = sse(&model);
    if !objective.is_finite() {
        return Err(Error::Fit("singular scaling fit".into()));
    }
    let residuals = model.iter().zip(&ys).map(|(m, y)| Some(if *y != 0.0 { (m - y) / y } else { m - y })).collect();
    let mut parameters = params;
    parameters.insert("relative_rms".into(), relative_rms(&model, &ys));
    Ok(FitReport {
        parameters,
        objective,
        bound_violations: violations(&model, &ys),
        model,
        residuals,
        attainable: None,
        note: None,
    })
}

/// Evaluates a scaling form at `N` with fitted parameters.
pub fn scaling_model(form: ScalingForm, a: f64, c: f64, n: f64) -> f64 {
    match form {
        ScalingForm::ExactForm => exact_form(a, n),
        ScalingForm::BoundForm => c - bound_shape(a, n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Fundamental::{I, X, Y, Z};

    fn synthetic_markov(p: f64, n: usize) -> ErrorDistribution {
        to_distribution(n, ErrorPattern::all(n).map(|a| markov_prob(p, a)).collect())
    }

    #[test]
    fn markov_examples() {
        assert_eq!(markov_prob(0.0, ErrorPattern::zero(4)), 1.0);
        for a in ErrorPattern::all(4) {
            assert_eq!(markov_prob(0.5, a), 0.0625);
        }
        let p = markov_prob(0.1, ErrorPattern::parse("010").unwrap());
        assert!((p - 0.009).abs() < 1e-15);
    }

    #[test]
    fn markov_fit_recovers_p() {
        let r = fit_markov(&synthetic_markov(0.1, 5), FitMode::LeastSquaresLog).unwrap();
        assert!((r.param("p") - 0.1).abs() < 1e-6, "{}", r.param("p"));
        let r = fit_markov(&synthetic_markov(0.1, 5), FitMode::Bounding).unwrap();
        assert!((r.param("p") - 0.1).abs() < 1e-9);
        assert_eq!(r.attainable, Some(true));
    }

    #[test]
    fn markov_fit_degenerate() {
        let mut probs = vec![0.0; 8];
        probs[0] = 1.0;
        let d = to_distribution(3, probs);
        for mode in [FitMode::LeastSquaresLog, FitMode::Bounding] {
            let r = fit_markov(&d, mode).unwrap();
            assert_eq!(r.param("p"), 0.0);
            assert!(r.note.is_some());
        }
    }

    #[test]
    fn markov_objective_is_unimodal_on_samples() {
        let mut d = synthetic_markov(0.07, 4);
        for (i, p) in d.probs.iter_mut().enumerate() {
            *p *= 1.0 + 0.3 * ((i * 7 % 5) as f64 - 2.0) / 2.0;
        }
        let used: Vec<(usize, f64)> = ErrorPattern::all(4).map(|a| (h_of(a), d.prob(a).ln())).collect();
        let f = |p: f64| used.iter().map(|&(h, lp)| (log_markov(p, h, 4) - lp).powi(2)).sum::<f64>();
        let xs: Vec<f64> = (0..=2000).map(|k| 1e-6 + (0.5 - 1e-6) * k as f64 / 2000.0).collect();
        let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let k = vals.iter().enumerate().fold(0, |b, (i, &v)| if v < vals[b] { i } else { b });
        assert!(vals[..=k].windows(2).all(|w| w[1] <= w[0]));
        assert!(vals[k..].windows(2).all(|w| w[1] >= w[0]));
        let fit = fit_markov(&d, FitMode::LeastSquaresLog).unwrap();
        assert!((fit.param("p") - xs[k]).abs() < 1e-3);
    }

    #[test]
    fn bounding_fit_dominates() {
        let mut d = synthetic_markov(0.05, 4);
        d.probs[0] *= 0.8;
        d.probs[3] *= 1.5;
        let r = fit_markov(&d, FitMode::Bounding).unwrap();
        assert!(r.param("p") > 0.05);
        assert_eq!(r.attainable, Some(true));
        assert!(r.bound_violations.is_empty());

        // Raising an h = 1 pattern without lowering P(0) cannot be dominated.
        let mut d = synthetic_markov(0.05, 4);
        d.probs[3] *= 3.0;
        let r = fit_markov(&d, FitMode::Bounding).unwrap();
        assert_eq!(r.attainable, Some(false));
        assert!(r.bound_violations.iter().any(|v| v.index == 0));
    }

    #[test]
    fn trajectory_pattern_examples() {
        assert_eq!(trajectory_pattern(&[I, I, I]).unwrap().index(), 0);
        assert_eq!(trajectory_pattern(&[I, I, Y]).unwrap().index(), 0b110);
        assert_eq!(trajectory_pattern(&[I, X, Z]).unwrap().index(), 0);
        assert_eq!(trajectory_pattern(&[Z, I]).unwrap().index(), 0);
        assert_eq!(trajectory_pattern(&[Y]).unwrap().index(), 1);
    }

    #[test]
    fn two_step_y_only_by_hand() {
        let p = 0.3;
        let d = trajectory_distribution_enumerated(&TrajectoryModel::new(0.0, p, 0.0, 2).unwrap()).unwrap();
        // Y1 → {1}, Y2 → {1,2}: YY → {2}
        assert!((d.probs[0b00] - (1.0 - p).powi(2)).abs() < 1e-15);
        assert!((d.probs[0b01] - p * (1.0 - p)).abs() < 1e-15);
        assert!((d.probs[0b11] - p * (1.0 - p)).abs() < 1e-15);
        assert!((d.probs[0b10] - p * p).abs() < 1e-15);
    }

    #[test]
    fn stepwise_sum_equals_enumeration() {
        let m = TrajectoryModel::new(0.03, 0.11, 0.07, 6).unwrap();
        let a = trajectory_distribution(&m).unwrap();
        let b = trajectory_distribution_enumerated(&m).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
        assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_limits() {
        assert!(TrajectoryModel::new(0.5, 0.5, 0.5, 3).is_err());
        assert!(TrajectoryModel::new(-0.1, 0.0, 0.0, 3).is_err());
        let m = TrajectoryModel::new(0.1, 0.0, 0.0, 11).unwrap();
        assert!(matches!(trajectory_distribution_enumerated(&m), Err(Error::TooLarge { .. })));
        assert!(trajectory_distribution(&m).is_ok());
    }

    #[test]
    fn trajectory_fit_recovers_rates() {
        let d = trajectory_distribution(&TrajectoryModel::new(0.02, 0.05, 0.01, 5).unwrap()).unwrap();
        let r = fit_trajectory(&d).unwrap();
        for (k, v) in [("p_x", 0.02), ("p_y", 0.05), ("p_z", 0.01)] {
            assert!((r.param(k) - v).abs() < 1e-3, "{k} = {}", r.param(k));
        }
    }

    #[test]
    fn trajectory_fit_off_grid() {
        let d = trajectory_distribution(&TrajectoryModel::new(0.013, 0.047, 0.0071, 5).unwrap()).unwrap();
        let r = fit_trajectory(&d).unwrap();
        for (k, v) in [("p_x", 0.013), ("p_y", 0.047), ("p_z", 0.0071)] {
            assert!((r.param(k) - v).abs() < 1e-4, "{k} = {}", r.param(k));
        }
    }

    #[test]
    fn scaling_self_fit() {
        let ns = [4usize, 6, 8, 10];
        let pts: Vec<(usize, f64)> = ns.iter().map(|&n| (n, exact_form(5.0, n as f64))).collect();
        let r = scaling_fit(&pts, ScalingForm::ExactForm).unwrap();
        assert!((r.param("a") - 5.0).abs() < 1e-6, "{}", r.param("a"));
        assert!(r.param("relative_rms") < 1e-9);

        let pts: Vec<(usize, f64)> = ns.iter().map(|&n| (n, 0.3 - bound_shape(7.0, n as f64))).collect();
        let r = scaling_fit(&pts, ScalingForm::BoundForm).unwrap();
        assert!((r.param("a") - 7.0).abs() < 1e-5, "{}", r.param("a"));
        assert!((r.param("c") - 0.3).abs() < 1e-6);
    }

    #[test]
    fn scaling_constant_data() {
        let pts: Vec<(usize, f64)> = [4usize, 6, 8, 10].iter().map(|&n| (n, 0.25)).collect();
        let r = scaling_fit(&pts, ScalingForm::BoundForm).unwrap();
        assert_eq!(r.param("a"), 0.0);
        assert!((r.param("c") - 1.25).abs() < 1e-12);
        let zeros: Vec<(usize, f64)> = [4usize, 6, 8].iter().map(|&n| (n, 0.0)).collect();
        assert_eq!(scaling_fit(&zeros, ScalingForm::ExactForm).unwrap().param("a"), 0.0);
    }

    #[test]
    fn scaling_input_checks() {
        assert!(scaling_fit(&[(4, 0.1), (6, 0.1)], ScalingForm::ExactForm).is_err());
        assert!(scaling_fit(&[(4, 0.1), (6, 0.1), (8, 0.1)], ScalingForm::BoundForm).is_err());
        assert!(scaling_fit(&[(4, 0.1), (4, 0.1), (8, 0.1)], ScalingForm::ExactForm).is_err());
    }
}
