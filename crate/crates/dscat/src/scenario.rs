//! Scenario configs, the batch runner, JSON reports, and CSV curve export.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::evolution::{self, PropagationPlan, Propagator};
use crate::linalg::{self, CMat};
use crate::lindblad;
use crate::models::{
    self, BoundaryCondition, DissipativeSystem, RadialPotential, RadialProfile, RadialSystem,
};
use crate::projections;
use crate::resolvent::{self, SandwichTarget};
use crate::resonances;
use crate::scattering::{self, VerdictThresholds, WaveDirection};
use crate::spectra;

/// Dense complex matrix in column-major order with interleaved re/im parts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn from_cmat(m: &CMat) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(2 * rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(m[(i, j)].re);
                data.push(m[(i, j)].im);
            }
        }
        MatrixData { rows, cols, data }
    }

    pub fn to_cmat(&self) -> Result<CMat> {
        if self.data.len() != 2 * self.rows * self.cols {
            return Err(Error::Config(format!(
                "matrix data length {} does not match {}x{} complex entries",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        let mut m = CMat::zeros(self.rows, self.cols);
        let mut it = self.data.chunks_exact(2);
        for j in 0..self.cols {
            for i in 0..self.rows {
                let c = it.next().unwrap();
                m[(i, j)] = Complex64::new(c[0], c[1]);
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiscretizeConfig {
    pub n: usize,
    pub box_length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    Matrix {
        h0: MatrixData,
        v: MatrixData,
        c: MatrixData,
    },
    Lattice {
        n: usize,
        dx: f64,
        v: Vec<f64>,
        w: Vec<f64>,
    },
    Radial {
        v_profile: RadialProfile,
        w_profile: RadialProfile,
        support_radius: f64,
        grid_nodes: usize,
        #[serde(default)]
        discretize: Option<DiscretizeConfig>,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Spectra,
    Evolution,
    SingularityScan,
    Projections,
    Scattering,
    Resonances,
    Lindblad,
}

impl Analysis {
    pub fn name(&self) -> &'static str {
        match self {
            Analysis::Spectra => "spectra",
            Analysis::Evolution => "evolution",
            Analysis::SingularityScan => "singularity-scan",
            Analysis::Projections => "projections",
            Analysis::Scattering => "scattering",
            Analysis::Resonances => "resonances",
            Analysis::Lindblad => "lindblad",
        }
    }
}

fn default_write_csv() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OutputConfig {
    pub dir: String,
    #[serde(default = "default_write_csv")]
    pub write_csv: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AnalysisBlock {
    pub analysis: Analysis,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub data: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub toolkit_version: String,
    pub seed: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub scenario: ScenarioConfig,
    pub results: Vec<AnalysisBlock>,
    pub verdicts: BTreeMap<String, String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Success,
    /// Some analyses hit numerical-convergence failures; report is partial.
    PartialFailure,
}

// ---------------------------------------------------------------------------
// Model construction and validation.

enum BuiltModel {
    System(DissipativeSystem),
    Radial {
        radial: RadialSystem,
        discretized: Option<DissipativeSystem>,
    },
}

impl BuiltModel {
    fn system(&self) -> Option<&DissipativeSystem> {
        match self {
            BuiltModel::System(s) => Some(s),
            BuiltModel::Radial { discretized, .. } => discretized.as_ref(),
        }
    }
}

fn build_model(config: &ModelConfig) -> Result<BuiltModel> {
    match config {
        ModelConfig::Matrix { h0, v, c } => {
            let sys = models::build_matrix_system(&h0.to_cmat()?, &v.to_cmat()?, &c.to_cmat()?)?;
            Ok(BuiltModel::System(sys))
        }
        ModelConfig::Lattice { n, dx, v, w } => {
            let sys = models::build_lattice_system(*n, *dx, v, w, BoundaryCondition::Dirichlet)?;
            Ok(BuiltModel::System(sys))
        }
        ModelConfig::Radial {
            v_profile,
            w_profile,
            support_radius,
            grid_nodes,
            discretize,
        } => {
            let potential = RadialPotential {
                v_profile: v_profile.clone(),
                w_profile: w_profile.clone(),
                support_radius: *support_radius,
            };
            let radial = models::build_radial_model(&potential, *grid_nodes)?;
            let discretized = match discretize {
                Some(d) => Some(models::discretize_radial(&radial, d.n, d.box_length)?),
                None => None,
            };
            Ok(BuiltModel::Radial { radial, discretized })
        }
    }
}

pub fn validate_config(config: &ScenarioConfig) -> Result<()> {
    if config.analyses.is_empty() {
        return Err(Error::Config("no analyses requested".into()));
    }
    let is_radial = matches!(config.model, ModelConfig::Radial { .. });
    let has_discretize = matches!(
        &config.model,
        ModelConfig::Radial {
            discretize: Some(_),
            ..
        }
    );
    for a in &config.analyses {
        match a {
            Analysis::Resonances => {
                if !is_radial {
                    return Err(Error::Config(
                        "resonances analysis requires a radial model".into(),
                    ));
                }
            }
            Analysis::SingularityScan => {} // works on any model class
            _ => {
                if is_radial && !has_discretize {
                    return Err(Error::Config(format!(
                        "{} on a radial model requires discretize parameters",
                        a.name()
                    )));
                }
            }
        }
    }
    for (key, &val) in &config.tolerances {
        if !(val.is_finite() && val > 0.0 && val < 1.0) {
            return Err(Error::Config(format!(
                "tolerance override {key}={val} outside the safe range (0, 1)"
            )));
        }
    }
    Ok(())
}

fn require_system<'m>(model: &'m BuiltModel, what: &str) -> Result<&'m DissipativeSystem> {
    model.system().ok_or_else(|| {
        Error::Config(format!(
            "{what} needs a matrix-valued model (discretize the radial model)"
        ))
    })
}

// ---------------------------------------------------------------------------
// Analysis runners.

fn run_spectra(model: &BuiltModel) -> Result<Value> {
    let sys = require_system(model, "spectra")?;
    let sd = spectra::eigendecompose(sys)?;
    let hyp = models::check_hypotheses(sys);
    let classification = match spectra::classify_subspaces(sys, 1e-8) {
        Ok(d) => json!({
            "status": "ok",
            "dim_hb": d.basis_hb.ncols(),
            "dim_hp": d.basis_hp.ncols(),
            "real_eigenvalues": d.real_eigenvalues,
            "pi_pp_trace": [d.pi_pp.trace().re, d.pi_pp.trace().im],
            "pi_pp_idempotency_defect": d.pi_pp.idempotency_defect,
            "notes": d.notes,
        }),
        Err(e) => json!({ "status": "skipped", "reason": e.to_string() }),
    };
    Ok(json!({
        "eigenvalues": sd.eigenvalues.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        "condition_numbers": sd.condition_numbers,
        "h_norm": sd.h_norm,
        "hypotheses": {
            "w_nonneg": hyp.w_nonneg,
            "hv_eigs_below_zero": hyp.hv_eigs_below_zero,
            "hv_neg_count": hyp.hv_neg_count,
            "dissipativity_defect": hyp.dissipativity_defect,
            "notes": hyp.notes,
        },
        "classification": classification,
    }))
}

fn default_probe(sys: &DissipativeSystem) -> Result<nalgebra::DVector<Complex64>> {
    match scattering::gaussian_probes(sys, 1, probe_width(sys)) {
        Ok(p) => Ok(p.states[0].clone()),
        Err(_) => Ok(models::basis_vector(sys.dim, 0)),
    }
}

fn probe_width(sys: &DissipativeSystem) -> f64 {
    match sys.model_tag.dx() {
        Some(dx) => (sys.dim as f64 * dx / 24.0).max(2.0 * dx),
        None => 1.0,
    }
}

fn run_evolution(model: &BuiltModel) -> Result<Value> {
    let sys = require_system(model, "evolution")?;
    let u = default_probe(sys)?;
    let horizon = evolution::default_horizon(sys).min(400.0);
    let plan = PropagationPlan::new(horizon, horizon / 400.0)?;
    let prop = Propagator::new(sys);
    let samples = 160usize;
    let mut curve = Vec::with_capacity(samples + 1);
    for k in 0..=samples {
        let t = horizon * k as f64 / samples as f64;
        let ut = prop.apply(&u, t);
        curve.push(json!([t, ut.norm(), (&sys.c * &ut).norm_squared()]));
    }
    let decay = evolution::absorption_probability(sys, &u, &plan)?;
    let smoothing = evolution::smoothing_integral(sys, &u, horizon)?;
    let m_est = evolution::m_constant(sys, &u, horizon)?;
    Ok(json!({
        "horizon": horizon,
        "p_abs": decay.p_abs,
        "tail_fit": { "gamma": decay.tail_fit.0, "amplitude": decay.tail_fit.1 },
        "decay_converged": decay.converged,
        "smoothing_integral": smoothing,
        "m_constant": { "c_u": m_est.c_u, "linear_growth": m_est.linear_growth },
        "curve": curve,
    }))
}

fn scan_interval(sys: &DissipativeSystem) -> (f64, f64) {
    let top = linalg::op_norm(&sys.h);
    (0.05, (0.9 * top).max(0.5))
}

fn scan_eps() -> Vec<f64> {
    vec![0.1, 0.05, 0.025, 0.0125, 0.006, 0.003, 0.001]
}

fn run_singularity_scan(model: &BuiltModel) -> Result<Value> {
    let (target, interval) = match model {
        BuiltModel::System(sys) => (SandwichTarget::Matrix(sys), scan_interval(sys)),
        BuiltModel::Radial { radial, .. } => (SandwichTarget::Radial(radial), (0.05, 9.0)),
    };
    let scan = resolvent::singularity_scan(target, interval, &scan_eps(), 40)?;
    Ok(scan_to_json(&scan))
}

fn scan_to_json(scan: &resolvent::SingularityScan) -> Value {
    json!({
        "lambda_grid": scan.lambda_grid,
        "eps_schedule": scan.eps_schedule,
        "norms": scan.norms,
        "singularities": scan.singularities.iter().map(|s| json!({
            "lambda": s.lambda, "nu": s.nu, "fit_r2": s.fit_r2,
        })).collect::<Vec<_>>(),
        "unresolved": scan.unresolved,
        "sup_bound_tail": scan.sup_bound_tail,
    })
}

fn run_projections(model: &BuiltModel) -> Result<Value> {
    let sys = require_system(model, "projections")?;
    let sd = spectra::eigendecompose(sys)?;
    let mut re: Vec<f64> = sd.eigenvalues.iter().map(|z| z.re).filter(|&x| x > 0.0).collect();
    re.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if re.len() < 4 {
        return Err(Error::Config(
            "projections analysis needs at least four modes above 0".into(),
        ));
    }
    // an interval holding the second quartile of modes, endpoints mid-gap
    let lo_idx = re.len() / 4;
    let hi_idx = re.len() / 2;
    let a = 0.5 * (re[lo_idx - 1] + re[lo_idx]);
    let b = 0.5 * (re[hi_idx] + re[hi_idx + 1]);
    let e = projections::spectral_projection(sys, (a, b), &projections::default_eps_schedule())?;
    Ok(json!({
        "interval": [a, b],
        "trace": [e.matrix.trace().re, e.matrix.trace().im],
        "idempotency_defect": e.idempotency_defect,
        "adjoint_defect": e.adjoint_defect,
        "eps_trace": e.eps_trace,
    }))
}

fn run_scattering(model: &BuiltModel, tolerances: &BTreeMap<String, f64>) -> Result<Value> {
    let sys = require_system(model, "scattering")?;
    let probes = scattering::gaussian_probes(sys, 4, probe_width(sys))?;
    let t = 0.9 * probes.reflection_horizon.min(400.0);
    let wm = scattering::finite_time_wave(sys, &probes, t, WaveDirection::Minus)?;
    let wp = scattering::finite_time_wave(sys, &probes, t, WaveDirection::Plus)?;
    let s = scattering::scattering_operator(&wp, &wm)?;
    // radial models scan on the continuum target: a finite-box surrogate
    // cannot resolve a real singularity below ε ~ 1/box_length
    let (scan_target, scan_range) = match model {
        BuiltModel::Radial { radial, .. } => (SandwichTarget::Radial(radial), (0.05, 9.0)),
        _ => (SandwichTarget::Matrix(sys), scan_interval(sys)),
    };
    let scan = resolvent::singularity_scan(scan_target, scan_range, &scan_eps(), 24)?;
    let depth = tolerances.get("deep-mode-depth").copied().unwrap_or(0.25);
    let deep = spectra::point_projector(sys, |z: Complex64| z.im < -depth)?;
    let n = sys.dim;
    let perp = CMat::identity(n, n) - &deep.matrix;
    let decomp = spectra::SubspaceDecomposition {
        basis_hb: CMat::zeros(n, 0),
        basis_hp: CMat::zeros(n, 0),
        basis_hp_star: CMat::zeros(n, 0),
        pi_pp: deep,
        pi_pp_perp: spectra::Projector::new(perp, "Pi_pp_perp"),
        real_eigenvalues: vec![],
        notes: vec![],
    };
    let mut thresholds = VerdictThresholds::default();
    if let Some(&v) = tolerances.get("verdict-sigma-min") {
        thresholds.sigma_min = v;
    }
    if let Some(&v) = tolerances.get("verdict-max-angle") {
        thresholds.max_angle = v;
    }
    let verdict = scattering::completeness_verdict(sys, &decomp, &wm, &scan, &thresholds)?;
    let wave_trace: Vec<Value> = wm
        .horizons
        .iter()
        .skip(1)
        .zip(&wm.cauchy_defects)
        .map(|(t, d)| json!([t, d]))
        .collect();
    Ok(json!({
        "t_final": t,
        "reflection_horizon": probes.reflection_horizon,
        "w_minus_converged": wm.converged,
        "cauchy_defects": wm.cauchy_defects,
        "singular_values": s.singular_values,
        "verdict": format!("{:?}", verdict.verdict).to_lowercase(),
        "sigma_min_restricted": verdict.sigma_min_restricted,
        "principal_angles": verdict.principal_angles,
        "witness_exponent": verdict.witness.as_ref().map(|(p, _)| *p),
        "wave_trace": wave_trace,
    }))
}

fn run_resonances(model: &BuiltModel) -> Result<Value> {
    let (radial, discretized) = match model {
        BuiltModel::Radial {
            radial,
            discretized,
            ..
        } => (radial, discretized),
        BuiltModel::System(_) => {
            return Err(Error::Config("resonances analysis requires a radial model".into()))
        }
    };
    let region = (-5.0, 5.0, -4.0, -1e-3);
    let set = resonances::resonance_search(radial, region)?;
    let zeros: Vec<Value> = set
        .zeros
        .iter()
        .map(|(z, m, res)| json!({ "re": z.re, "im": z.im, "multiplicity": m, "residual": res }))
        .collect();
    let mut out = json!({
        "search_region": [region.0, region.1, region.2, region.3],
        "argument_principle_count": set.argument_principle_count,
        "zeros": zeros,
    });
    if discretized.is_some() {
        let scan = resolvent::singularity_scan(
            SandwichTarget::Radial(radial),
            (0.05, 9.0),
            &scan_eps(),
            60,
        )?;
        let corr = resonances::correspondence_report(radial, &set, &scan);
        out["correspondence"] = json!({
            "matches": corr.matches,
            "unmatched_resonances": corr.unmatched_resonances,
            "unmatched_singularities": corr.unmatched_singularities,
            "lambda_grid_step": corr.lambda_grid_step,
        });
        out["scan"] = scan_to_json(&scan);
    }
    Ok(out)
}

fn run_lindblad(model: &BuiltModel, tolerances: &BTreeMap<String, f64>) -> Result<Value> {
    let sys = require_system(model, "lindblad")?;
    let l = lindblad::build_lindbladian(&sys.h_v(), &lindblad::jumps_from_system(sys))?;
    let l0 = lindblad::build_lindbladian(&sys.h0, &[])?;
    let probes = scattering::gaussian_probes(sys, 2, probe_width(sys))?;
    let states: Vec<lindblad::DensityMatrix> = probes
        .states
        .iter()
        .map(lindblad::DensityMatrix::pure)
        .collect::<Result<_>>()?;
    let depth = tolerances.get("deep-mode-depth").copied().unwrap_or(0.25);
    let deep = spectra::point_projector(sys, |z: Complex64| z.im < -depth)?;
    let pi_perp = lindblad::orthogonal_pp_perp(&deep.matrix, 1e-6);
    let horizon = (0.8 * probes.reflection_horizon).min(200.0);
    let schedule = vec![horizon / 4.0, horizon / 2.0, horizon];
    let omega = lindblad::modified_wave(&l, &l0, &pi_perp, &states, &schedule)?;
    let prop = Propagator::new(sys);
    let escapes: Vec<Value> = states
        .iter()
        .enumerate()
        .map(|(j, rho)| -> Result<Value> {
            let (p, raw) = omega.escape_probability(rho)?;
            let survival = prop.apply(&probes.states[j], horizon).norm_squared();
            Ok(json!({
                "probe": j,
                "p_escape": p,
                "p_escape_raw": raw,
                "p_abs_cross_check": 1.0 - survival,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(json!({
        "trace_defect": l.trace_defect,
        "horizons": omega.horizons,
        "cauchy_defects": omega.cauchy_defects,
        "converged": omega.converged,
        "escape_probabilities": escapes,
    }))
}

// ---------------------------------------------------------------------------
// Runner and report I/O.

const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn run_scenario(
    config: &ScenarioConfig,
    seed_override: Option<u64>,
    threads: usize,
) -> Result<(Report, RunStatus, Vec<(String, f64)>)> {
    validate_config(config)?;
    linalg::set_threads(threads);
    let model = build_model(&config.model)?;
    let seed = seed_override.unwrap_or(config.seed);
    let mut results = Vec::new();
    let mut verdicts = BTreeMap::new();
    let mut runtimes = Vec::new();
    let mut any_failed = false;
    for &analysis in &config.analyses {
        let started = std::time::Instant::now();
        let out = match analysis {
            Analysis::Spectra => run_spectra(&model),
            Analysis::Evolution => run_evolution(&model),
            Analysis::SingularityScan => run_singularity_scan(&model),
            Analysis::Projections => run_projections(&model),
            Analysis::Scattering => run_scattering(&model, &config.tolerances),
            Analysis::Resonances => run_resonances(&model),
            Analysis::Lindblad => run_lindblad(&model, &config.tolerances),
        };
        runtimes.push((analysis.name().to_string(), started.elapsed().as_secs_f64()));
        match out {
            Ok(data) => {
                if analysis == Analysis::Scattering {
                    if let Some(v) = data.get("verdict").and_then(|v| v.as_str()) {
                        verdicts.insert("completeness".into(), v.to_string());
                    }
                }
                if analysis == Analysis::Resonances {
                    if let Some(c) = data.get("correspondence") {
                        let matched = c["matches"].as_array().map(|a| a.len()).unwrap_or(0);
                        let unmatched = c["unmatched_resonances"]
                            .as_array()
                            .map(|a| a.len())
                            .unwrap_or(0)
                            + c["unmatched_singularities"]
                                .as_array()
                                .map(|a| a.len())
                                .unwrap_or(0);
                        verdicts.insert(
                            "correspondence".into(),
                            if unmatched == 0 && matched > 0 {
                                "matched".into()
                            } else if matched == 0 && unmatched == 0 {
                                "empty".into()
                            } else {
                                "mismatched".into()
                            },
                        );
                    }
                }
                results.push(AnalysisBlock {
                    analysis,
                    status: "ok".into(),
                    error: None,
                    data,
                });
            }
            Err(e) => {
                any_failed = true;
                results.push(AnalysisBlock {
                    analysis,
                    status: "failed".into(),
                    error: Some(e.to_string()),
                    data: Value::Null,
                });
            }
        }
    }
    let report = Report {
        scenario: config.clone(),
        results,
        verdicts,
        provenance: Provenance {
            toolkit_version: TOOLKIT_VERSION.into(),
            seed,
            threads,
        },
    };
    let status = if any_failed {
        RunStatus::PartialFailure
    } else {
        RunStatus::Success
    };
    Ok((report, status, runtimes))
}

/// Atomic write: temp file in the destination directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out")
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_report(report: &Report, dir: &Path, runtimes: &[(String, f64)]) -> Result<PathBuf> {
    let path = dir.join("report.json");
    let body = serde_json::to_vec_pretty(report)?;
    write_atomic(&path, &body)?;
    // non-deterministic details live in a sidecar so reports stay byte-stable
    let sidecar = json!({
        "written_unix_ms": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0),
        "runtimes_s": runtimes.iter().map(|(k, v)| json!({"analysis": k, "seconds": v}))
            .collect::<Vec<_>>(),
    });
    write_atomic(
        &dir.join("report.meta.json"),
        &serde_json::to_vec_pretty(&sidecar)?,
    )?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// CSV curve export.

fn find_block<'r>(report: &'r Report, analysis: Analysis) -> Option<&'r AnalysisBlock> {
    report
        .results
        .iter()
        .find(|b| b.analysis == analysis && b.status == "ok")
}

/// Emit one curve family from a report. Selections: decay, scan, wave,
/// resonance.
pub fn emit_curves(report: &Report, selection: &str, dir: &Path) -> Result<PathBuf> {
    let mut csv = String::new();
    match selection {
        "decay" => {
            let block = find_block(report, Analysis::Evolution)
                .ok_or_else(|| Error::NoSuchCurve("decay (no evolution block)".into()))?;
            let curve = block.data["curve"]
                .as_array()
                .ok_or_else(|| Error::NoSuchCurve("decay".into()))?;
            csv.push_str("t,norm,c_integrand\n");
            for row in curve {
                let r = row.as_array().unwrap();
                csv.push_str(&format!("{},{},{}\n", r[0], r[1], r[2]));
            }
        }
        "scan" => {
            let block = find_block(report, Analysis::SingularityScan)
                .or_else(|| find_block(report, Analysis::Resonances))
                .ok_or_else(|| Error::NoSuchCurve("scan (no scan block)".into()))?;
            let data = if block.analysis == Analysis::SingularityScan {
                &block.data
            } else {
                block
                    .data
                    .get("scan")
                    .ok_or_else(|| Error::NoSuchCurve("scan".into()))?
            };
            let grid = data["lambda_grid"].as_array().ok_or_else(|| Error::NoSuchCurve("scan".into()))?;
            let eps = data["eps_schedule"].as_array().unwrap();
            let norms = data["norms"].as_array().unwrap();
            csv.push_str("lambda,eps,norm\n");
            for (i, lam) in grid.iter().enumerate() {
                for (j, e) in eps.iter().enumerate() {
                    csv.push_str(&format!("{},{},{}\n", lam, e, norms[i][j]));
                }
            }
        }
        "wave" => {
            let block = find_block(report, Analysis::Scattering)
                .ok_or_else(|| Error::NoSuchCurve("wave (no scattering block)".into()))?;
            let trace = block.data["wave_trace"]
                .as_array()
                .ok_or_else(|| Error::NoSuchCurve("wave".into()))?;
            csv.push_str("T,defect\n");
            for row in trace {
                let r = row.as_array().unwrap();
                csv.push_str(&format!("{},{}\n", r[0], r[1]));
            }
        }
        "resonance" => {
            let block = find_block(report, Analysis::Resonances)
                .ok_or_else(|| Error::NoSuchCurve("resonance (no resonances block)".into()))?;
            let zeros = block.data["zeros"]
                .as_array()
                .ok_or_else(|| Error::NoSuchCurve("resonance".into()))?;
            csv.push_str("re_z,im_z,mult\n");
            for z in zeros {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    z["re"], z["im"], z["multiplicity"]
                ));
            }
        }
        other => return Err(Error::NoSuchCurve(other.into())),
    }
    let path = dir.join(format!("{selection}.csv"));
    write_atomic(&path, csv.as_bytes())?;
    Ok(path)
}
