//! Run pipeline: build the bath and Hamiltonians from a [`RunConfig`],
//! compute the distribution and requested extras, and render the CSV and
//! JSON outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::bounds::{self, Band, BoundReport};
use crate::config::{EnvConfig, HamiltonianKind, RunConfig, SCHEMA_VERSION};
use crate::emission::{self, ErrorDistribution, ErrorPattern, CONDITIONAL_FLOOR};
use crate::error::{Error, Result};
use crate::hamiltonian::{self, BathSpec, EnvState, HamiltonianSet};
use crate::markov::{self, FitMode, FitReport, ScalingForm};
use crate::oracle;
use crate::spin::OperatorMatrix;

/// Slack for probability-vs-bound comparisons.
pub const BOUND_SLACK: f64 = 1e-12;
/// Allowed `|Σ(P + P_dot) - 1|`.
pub const NORMALIZATION_TOL: f64 = 1e-10;
/// Allowed engine-vs-oracle deviation.
pub const ORACLE_TOL: f64 = 1e-10;

pub const CSV_HEADER: [&str; 10] = [
    "pattern_int",
    "bitstring",
    "h",
    "P_exact",
    "P_dot",
    "bound_eq5",
    "bound_eq6",
    "markov_fit",
    "trajectory_fit",
    "polarization",
];

/// `%.12e` as printed by C: twelve mantissa digits and a signed exponent of
/// at least two digits.
pub fn fmt_sci(x: f64) -> String {
    let s = format!("{x:.12e}");
    match s.split_once('e') {
        Some((mant, exp)) => {
            let e: i32 = exp.parse().expect("exponent");
            format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
        }
        None => s,
    }
}

/// [`fmt_sci`], or empty for missing and non-finite values.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.filter(|v| v.is_finite()).map(fmt_sci).unwrap_or_default()
}

/// Bath, initial state, Hamiltonians and step unitary for one run.
pub struct Prepared {
    pub spec: BathSpec,
    pub env: EnvState,
    pub set: HamiltonianSet,
    pub unitary: OperatorMatrix,
}

/// Builds the physics objects for `cfg` on a bath of `n_sites` sites.
pub fn prepare(cfg: &RunConfig, n_sites: usize, kind: HamiltonianKind) -> Result<Prepared> {
    let b = &cfg.bath;
    let env = cfg.env_state(n_sites)?;
    let mut spec = hamiltonian::gaussian_profiles(n_sites, b.a_over_omega, b.dipolar_ratio, b.omega_ratio, 1.0)?;
    let (mean, _) = hamiltonian::overhauser_stats(&spec, &env)?;
    spec.normalize_nuclear_zeeman(mean);
    let (set, h) = match kind {
        HamiltonianKind::Full => {
            let set = hamiltonian::build_hamiltonian_set(&spec, &env)?;
            let h = set.full.clone().expect("full Hamiltonian requested");
            (set, h)
        }
        HamiltonianKind::PureDephasing => {
            let set = hamiltonian::build_dephasing_pair(&spec, &env)?;
            let h = set.pure_dephasing_joint()?;
            (set, h)
        }
    };
    let unitary = emission::step_unitary(&h, set.omega_eff)?;
    Ok(Prepared { spec, env, set, unitary })
}

#[derive(Clone, Debug, Serialize)]
pub struct MarkovFits {
    pub least_squares_log: FitReport,
    pub bounding: FitReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingPoint {
    pub n_sites: usize,
    pub p_exact: f64,
    pub bound_eq6: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingOutput {
    pub pattern: String,
    pub h: usize,
    pub points: Vec<ScalingPoint>,
    pub exact_fit: Option<FitReport>,
    pub bound_fit: Option<FitReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Physics {
    pub omega: f64,
    pub a_total: f64,
    pub omega_eff: f64,
    pub delta: f64,
    pub overhauser_mean: f64,
    pub overhauser_fluct: f64,
}

pub struct RunOutput {
    pub config: RunConfig,
    pub physics: Physics,
    pub distribution: ErrorDistribution,
    pub bounds: Option<BoundReport>,
    pub markov: Option<MarkovFits>,
    pub trajectory: Option<FitReport>,
    pub bands: Vec<Band>,
    pub pure_dephasing_bands: Option<Vec<Band>>,
    pub scaling: Option<ScalingOutput>,
    pub invariant_failures: Vec<String>,
    pub timings: BTreeMap<String, f64>,
}

/// One CSV row.
#[derive(Clone, Debug)]
pub struct Row {
    pub pattern: ErrorPattern,
    pub h: usize,
    pub p_exact: f64,
    pub p_dot: f64,
    pub bound_eq5: Option<f64>,
    pub bound_eq6: Option<f64>,
    pub markov_fit: Option<f64>,
    pub trajectory_fit: Option<f64>,
    pub polarization: Option<f64>,
}

impl Row {
    fn fields(&self) -> [String; 10] {
        [
            self.pattern.index().to_string(),
            self.pattern.to_string(),
            self.h.to_string(),
            fmt_sci(self.p_exact),
            fmt_sci(self.p_dot),
            fmt_opt(self.bound_eq5),
            fmt_opt(self.bound_eq6),
            fmt_opt(self.markov_fit),
            fmt_opt(self.trajectory_fit),
            fmt_opt(self.polarization),
        ]
    }
}

fn write_csv<I: IntoIterator<Item = [String; N]>, const N: usize>(header: [&str; N], rows: I) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(to_io)?;
    for r in rows {
        w.write_record(&r).map_err(to_io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

impl RunOutput {
    /// Rows ordered by `(h, pattern_int)`.
    pub fn rows(&self) -> Vec<Row> {
        let d = &self.distribution;
        let want_pol = self.config.outputs.polarization;
        bounds::figure_order(d.n)
            .into_iter()
            .map(|i| {
                let pattern = ErrorPattern::new(i, d.n).expect("in range");
                let polarization = if want_pol && d.probs[i] > CONDITIONAL_FLOOR {
                    d.polarization.as_ref().map(|p| p[i])
                } else {
                    None
                };
                Row {
                    pattern,
                    h: bounds::h_of(pattern),
                    p_exact: d.probs[i],
                    p_dot: d.dot_probs[i],
                    bound_eq5: self.bounds.as_ref().map(|b| b.bound_eq5[i]),
                    bound_eq6: self.bounds.as_ref().map(|b| b.bound_eq6[i]),
                    markov_fit: self.markov.as_ref().map(|m| m.least_squares_log.model[i]),
                    trajectory_fit: self.trajectory.as_ref().map(|t| t.model[i]),
                    polarization,
                }
            })
            .collect()
    }

    pub fn csv(&self) -> Result<String> {
        write_csv(CSV_HEADER, self.rows().iter().map(Row::fields))
    }

    /// The same table with a leading figure position column.
    pub fn plot_csv(&self) -> Result<String> {
        let mut header = ["x"; 11];
        header[1..].copy_from_slice(&CSV_HEADER);
        write_csv(
            header,
            self.rows().iter().enumerate().map(|(x, r)| {
                let mut out: [String; 11] = Default::default();
                out[0] = x.to_string();
                out[1..].clone_from_slice(&r.fields());
                out
            }),
        )
    }

    pub fn scaling_csv(&self) -> Result<Option<String>> {
        let Some(s) = &self.scaling else { return Ok(None) };
        let eval = |fit: &Option<FitReport>, i: usize| fit.as_ref().map(|f| f.model[i]);
        let rows = s.points.iter().enumerate().map(|(i, p)| {
            [
                p.n_sites.to_string(),
                fmt_sci(p.p_exact),
                fmt_opt(p.bound_eq6),
                fmt_opt(eval(&s.exact_fit, i)),
                fmt_opt(eval(&s.bound_fit, i)),
            ]
        });
        write_csv(["N", "P_exact", "bound_eq6", "exact_form_fit", "bound_form_fit"], rows).map(Some)
    }

    pub fn summary(&self) -> Value {
        let d = &self.distribution;
        let sum_p: f64 = d.probs.iter().sum();
        let sum_dot: f64 = d.dot_probs.iter().sum();
        let mut v = json!({
            "schema_version": SCHEMA_VERSION,
            "fingerprint": self.config.fingerprint(),
            "config": self.config,
            "labels": self.config.labels,
            "physics": self.physics,
            "n_photons": d.n,
            "sum_p": sum_p,
            "sum_p_dot": sum_dot,
            "normalization_residual": d.normalization_residual(),
            "bands": self.bands,
            "invariant_failures": self.invariant_failures,
            "timings_s": self.timings,
        });
        let obj = v.as_object_mut().expect("object");
        if let Some(b) = &self.bounds {
            obj.insert(
                "bounds".into(),
                json!({
                    "p_plus": b.p_plus,
                    "p_minus": b.p_minus,
                    "sectors": b.sectors,
                    "weighted_over_sectors": b.weighted_over_sectors,
                    "cross_sector_coherence": b.cross_sector_coherence,
                    "note": b.weighted_over_sectors.then_some(
                        "environment spans several sectors: bound_eq6 is the sector-weighted average (extension)"),
                }),
            );
        }
        if let Some(m) = &self.markov {
            obj.insert(
                "markov_fit".into(),
                json!({
                    "least_squares_log": fit_summary(&m.least_squares_log),
                    "bounding": fit_summary(&m.bounding),
                }),
            );
        }
        if let Some(t) = &self.trajectory {
            obj.insert("trajectory_fit".into(), fit_summary(t));
        }
        if let Some(b) = &self.pure_dephasing_bands {
            obj.insert("pure_dephasing_bands".into(), json!(b));
        }
        if let Some(s) = &self.scaling {
            obj.insert(
                "scaling".into(),
                json!({
                    "pattern": s.pattern,
                    "h": s.h,
                    "points": s.points,
                    "exact_form": s.exact_fit.as_ref().map(fit_summary),
                    "bound_form": s.bound_fit.as_ref().map(fit_summary),
                }),
            );
        }
        v
    }
}

fn fit_summary(f: &FitReport) -> Value {
    json!({
        "parameters": f.parameters,
        "objective": f.objective,
        "attainable": f.attainable,
        "bound_violations": f.bound_violations.len(),
        "note": f.note,
    })
}

fn elapsed(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Full pipeline for one configuration.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let total = Instant::now();
    let mut timings = BTreeMap::new();
    let n = cfg.n_photons;
    let mut failures = Vec::new();

    let t = Instant::now();
    let prep = prepare(cfg, cfg.bath.n_sites, cfg.hamiltonian)?;
    timings.insert("build".to_string(), elapsed(t));

    let t = Instant::now();
    let dist = emission::distribution_with_limit(&prep.unitary, &prep.env, n, cfg.limits.max_photons)?;
    timings.insert("distribution".to_string(), elapsed(t));
    if dist.normalization_residual() > NORMALIZATION_TOL {
        failures.push(format!("normalization residual {:.3e}", dist.normalization_residual()));
    }

    let pure_dephasing = cfg.hamiltonian == HamiltonianKind::PureDephasing;
    let t = Instant::now();
    let bound_report = if cfg.outputs.bounds && pure_dephasing {
        let r = bounds::bound_report(&prep.set, &prep.env, n)?;
        check_bounds(&dist, &r, &mut failures);
        Some(r)
    } else {
        None
    };
    timings.insert("bounds".to_string(), elapsed(t));

    let t = Instant::now();
    let markov_fits = if cfg.outputs.markov_fit {
        Some(MarkovFits {
            least_squares_log: markov::fit_markov(&dist, FitMode::LeastSquaresLog)?,
            bounding: markov::fit_markov(&dist, FitMode::Bounding)?,
        })
    } else {
        None
    };
    let trajectory = if cfg.outputs.trajectory_fit { Some(markov::fit_trajectory(&dist)?) } else { None };
    timings.insert("fits".to_string(), elapsed(t));

    let pure_dephasing_bands = if cfg.outputs.compare_pure_dephasing && !pure_dephasing {
        let t = Instant::now();
        let pd = prepare(cfg, cfg.bath.n_sites, HamiltonianKind::PureDephasing)?;
        let pd_dist = emission::distribution_with_limit(&pd.unitary, &pd.env, n, cfg.limits.max_photons)?;
        timings.insert("pure_dephasing_comparison".to_string(), elapsed(t));
        Some(bounds::band_summary(&pd_dist))
    } else {
        None
    };

    let scaling = if cfg.outputs.scaling_sweep.is_empty() {
        None
    } else {
        let t = Instant::now();
        let s = scaling_sweep(cfg, &mut failures)?;
        timings.insert("scaling".to_string(), elapsed(t));
        Some(s)
    };

    timings.insert("total".to_string(), elapsed(total));
    Ok(RunOutput {
        config: cfg.clone(),
        physics: Physics {
            omega: prep.spec.omega,
            a_total: prep.spec.a_total,
            omega_eff: prep.set.omega_eff,
            delta: prep.set.delta,
            overhauser_mean: prep.set.overhauser_mean,
            overhauser_fluct: prep.set.overhauser_fluct,
        },
        bands: bounds::band_summary(&dist),
        distribution: dist,
        bounds: bound_report,
        markov: markov_fits,
        trajectory,
        pure_dephasing_bands,
        scaling,
        invariant_failures: failures,
        timings,
    })
}

fn check_bounds(dist: &ErrorDistribution, r: &BoundReport, failures: &mut Vec<String>) {
    for (i, &p) in dist.probs.iter().enumerate() {
        if p > r.bound_eq6[i] + BOUND_SLACK {
            failures.push(format!("pattern {i}: P = {p:.6e} exceeds bound_eq6 = {:.6e}", r.bound_eq6[i]));
        }
        if r.bound_eq6[i] > r.bound_eq5[i] + BOUND_SLACK {
            failures.push(format!("pattern {i}: bound_eq6 exceeds bound_eq5"));
        }
    }
    for (name, v) in [("p_plus", r.p_plus), ("p_minus", r.p_minus)] {
        if v > 1.0 + BOUND_SLACK {
            failures.push(format!("{name} = {v} exceeds 1"));
        }
    }
}

fn scaling_sweep(cfg: &RunConfig, failures: &mut Vec<String>) -> Result<ScalingOutput> {
    let pattern = cfg
        .scaling_pattern()?
        .ok_or_else(|| Error::Config("outputs.scaling_pattern is required for a scaling sweep".into()))?;
    let pure_dephasing = cfg.hamiltonian == HamiltonianKind::PureDephasing;
    let mut points = Vec::new();
    for &n_sites in &cfg.outputs.scaling_sweep {
        let prep = prepare(cfg, n_sites, cfg.hamiltonian)?;
        let dist = emission::distribution_with_limit(&prep.unitary, &prep.env, cfg.n_photons, cfg.limits.max_photons)?;
        if dist.normalization_residual() > NORMALIZATION_TOL {
            failures.push(format!("N = {n_sites}: normalization residual {:.3e}", dist.normalization_residual()));
        }
        let bound_eq6 = if pure_dephasing {
            let r = bounds::bound_report(&prep.set, &prep.env, cfg.n_photons)?;
            check_bounds(&dist, &r, failures);
            Some(r.bound_eq6[pattern.index()])
        } else {
            None
        };
        points.push(ScalingPoint { n_sites, p_exact: dist.prob(pattern), bound_eq6 });
    }
    let exact_pts: Vec<(usize, f64)> = points.iter().map(|p| (p.n_sites, p.p_exact)).collect();
    let exact_fit = (exact_pts.len() >= 3).then(|| markov::scaling_fit(&exact_pts, ScalingForm::ExactForm)).transpose()?;
    let bound_pts: Vec<(usize, f64)> = points.iter().filter_map(|p| p.bound_eq6.map(|b| (p.n_sites, b))).collect();
    let bound_fit = (bound_pts.len() >= 4).then(|| markov::scaling_fit(&bound_pts, ScalingForm::BoundForm)).transpose()?;
    Ok(ScalingOutput { pattern: pattern.to_string(), h: bounds::h_of(pattern), points, exact_fit, bound_fit })
}

/// Writes the run's files into `dir` and returns their paths.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, text)?;
        written.push(path);
        Ok(())
    };
    put("distribution.csv", out.csv()?)?;
    if out.config.outputs.plot_data {
        put("plot_data.csv", out.plot_csv()?)?;
    }
    if let Some(s) = out.scaling_csv()? {
        put("scaling.csv", s)?;
    }
    put("summary.json", serde_json::to_string_pretty(&out.summary())? + "\n")?;
    Ok(written)
}

/// Named configurations for the reference figures.
pub const RECIPES: [&str; 4] = ["fig2-upper", "fig2-lower", "fig2-scaling", "fig3"];

pub fn recipe(name: &str) -> Result<RunConfig> {
    let mut c = RunConfig::default();
    match name {
        "fig2-upper" => {
            c.bath.a_over_omega = 0.5;
            c.labels.push("a_over_omega = 0.5 is assumed for this panel".into());
        }
        "fig2-lower" => {}
        "fig2-scaling" => {
            c.outputs.markov_fit = false;
            c.outputs.scaling_sweep = vec![4, 6, 8, 10];
            c.outputs.scaling_pattern = Some("01100".into());
        }
        "fig3" => {
            c.n_photons = 8;
            c.bath.n_sites = 6;
            c.bath.a_over_omega = 4.0;
            c.hamiltonian = HamiltonianKind::Full;
            c.outputs.bounds = false;
            c.outputs.markov_fit = false;
            c.outputs.trajectory_fit = true;
            c.outputs.polarization = true;
            c.outputs.compare_pure_dephasing = true;
        }
        other => {
            return Err(Error::Config(format!("unknown recipe {other:?}; expected one of {}", RECIPES.join(", "))))
        }
    }
    c.labels.push(format!("recipe {name}"));
    Ok(c)
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub n_photons: usize,
    pub n_sites: usize,
    pub hamiltonian: HamiltonianKind,
    /// `max_α |P_engine - P_oracle|` over both `P` and `P_dot`.
    pub engine_deviation: f64,
    /// Same for the factorized pure-dephasing path, when applicable.
    pub factorized_deviation: Option<f64>,
    pub oracle_normalization_residual: f64,
    pub passed: bool,
}

/// Compares the engine (and the factorized path for pure dephasing) with
/// the brute-force oracle.
pub fn oracle_check(cfg: &RunConfig) -> Result<OracleReport> {
    cfg.validate()?;
    let n = cfg.n_photons;
    let n_sites = cfg.bath.n_sites;
    let qubits = n + 1 + n_sites;
    if qubits > cfg.limits.max_oracle_qubits {
        return Err(Error::TooLarge { what: "oracle qubits", value: qubits, limit: cfg.limits.max_oracle_qubits });
    }
    let prep = prepare(cfg, n_sites, cfg.hamiltonian)?;
    let engine = emission::distribution(&prep.unitary, &prep.env, n)?;
    let reference = oracle::brute_force_oracle_with_limit(&prep.unitary, &prep.env, n, cfg.limits.max_oracle_qubits)?;
    let engine_deviation = engine.max_abs_diff(&reference);
    let factorized_deviation = if cfg.hamiltonian == HamiltonianKind::PureDephasing {
        let (up, um) = bounds::pd_unitaries(&prep.set)?;
        let (mp, mm) = bounds::m_operators(&up, &um)?;
        let mut worst = 0.0f64;
        for a in ErrorPattern::all(n) {
            let o = bounds::pd_error_operator(a, &mp, &mm);
            let p = emission::expectation_probability(&o, &prep.env)?;
            worst = worst.max((p - reference.prob(a)).abs());
        }
        Some(worst)
    } else {
        None
    };
    let passed = engine_deviation <= ORACLE_TOL && factorized_deviation.is_none_or(|d| d <= ORACLE_TOL);
    Ok(OracleReport {
        n_photons: n,
        n_sites,
        hamiltonian: cfg.hamiltonian,
        engine_deviation,
        factorized_deviation,
        oracle_normalization_residual: reference.normalization_residual(),
        passed,
    })
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::InvalidEnvState(_)
        | Error::Json(_)
        | Error::SiteOutOfRange { .. }
        | Error::EmptyBath
        | Error::DimensionMismatch { .. } => 2,
        Error::InvariantViolation(_)
        | Error::NotHermitian { .. }
        | Error::NotUnitary { .. }
        | Error::NotPsd { .. }
        | Error::NegativeProbability { .. } => 3,
        Error::TooLarge { .. } => 4,
        Error::UndefinedConditional { .. } | Error::Fit(_) | Error::Io(_) => 1,
    }
}

/// Small configuration helper used by tests and the oracle subcommand.
pub fn small_config(n_photons: usize, n_sites: usize, kind: HamiltonianKind, env: EnvConfig) -> RunConfig {
    let mut c = RunConfig { n_photons, hamiltonian: kind, env_state: env, ..Default::default() };
    c.bath.n_sites = n_sites;
    c
}
