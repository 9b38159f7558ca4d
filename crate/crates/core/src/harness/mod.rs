//! Experiment plumbing behind the `gail-lqr` binary: configuration,
//! stepsize resolution, certified runs, diagnostics and output files.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::{
    auto_stepsizes, check_condition1, check_condition1_path, check_condition2, check_condition3,
    check_condition5, compute_constants, estimate_lipschitz, estimate_local_moduli,
    global_stepsizes, path_step_bound, path_stepsizes, upsilon_for, BoundCheck, ConditionVerdict,
    LipschitzEstimates, ProblemConstants, StepsizeChoice,
};
use crate::diagnostics::{
    decay_fit, iteration_bound_checks, local_rate, potential_trace, saddle_check,
    stability_envelope, step_lemma_checks, zeta, DecayFit, EnvelopeReport, IterationBoundCheck,
    LocalRateReport, PotentialReport, SaddleCheck, StepLemmaReport,
};
use crate::error::{GailError, Result};
use crate::estimators::EsOracle;
use crate::gail::{
    GailProblem, IterateTrace, QuadraticPenalty, SolveOutcome, SolveStatus, SolverConfig, ThetaBox,
};
use crate::lqr::{is_stabilizing, state_covariance, CostParam, Policy};
use crate::numerics::{max_eigenvalue_sym, min_eigenvalue_sym, spectral_norm, Mat};
use crate::random::{generate_instance, random_stabilizing_policy, stream_rng};
use crate::riccati::{check_condition4, expert_policy, solve_dare};

pub use config::{ExperimentConfig, InstanceFile, RegionKind, StepMode, StepSpec};
pub use output::{OutputFormat, Summary, TraceFile, TRACE_COLUMNS};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_MAX_ITER: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;

/// Pre-local phase boundary for the `O(1/N)` decay fit.
pub const EPS_PRE_LOCAL: f64 = 1e-8;

pub fn exit_code(status: &SolveStatus) -> i32 {
    match status {
        SolveStatus::Converged => EXIT_CONVERGED,
        SolveStatus::MaxIterations => EXIT_MAX_ITER,
        SolveStatus::Unstable { .. } => EXIT_UNSTABLE,
    }
}

pub fn error_exit_code(err: &GailError) -> i32 {
    match err {
        GailError::Unstable { .. } => EXIT_UNSTABLE,
        _ => EXIT_CONFIG,
    }
}

/// A configuration turned into a concrete problem with its constants.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub problem: GailProblem,
    pub theta_tilde: Option<CostParam>,
    pub k0: Policy,
    pub theta0: CostParam,
    pub constants: ProblemConstants,
    pub lipschitz: Option<LipschitzEstimates>,
}

fn cfg_err(msg: impl Into<String>) -> GailError {
    GailError::Config(msg.into())
}

impl Experiment {
    pub fn build(config: ExperimentConfig) -> Result<Self> {
        let inst = config.load_instance()?;
        let (d, k) = (inst.state_dim(), inst.input_dim());
        let (theta_tilde, k_e) = match (&config.expert.theta_tilde, &config.expert.k_e) {
            (Some(t), None) => (Some(t.clone()), expert_policy(&inst, t)?),
            (None, Some(m)) => (None, Policy::new(m.clone())),
            _ => return Err(cfg_err("[expert] needs exactly one of theta_tilde or k_e")),
        };
        let center = config
            .regularizer
            .center
            .clone()
            .or_else(|| theta_tilde.clone())
            .ok_or_else(|| {
                cfg_err("[regularizer] center is required when the expert is given as k_e")
            })?;
        let b = &config.theta_box;
        let bx = match (b.around, b.alpha_q, b.beta_q, b.alpha_r, b.beta_r) {
            (Some(w), None, None, None, None) => ThetaBox::around(&center, w)?,
            (None, Some(aq), Some(bq), Some(ar), Some(br)) => ThetaBox::new(aq, bq, ar, br)?,
            _ => {
                return Err(cfg_err(
                    "[box] needs either `around` or all of alpha_q, beta_q, alpha_r, beta_r",
                ))
            }
        };
        let reg = Arc::new(QuadraticPenalty::new(
            config.regularizer.gamma,
            center.clone(),
        )?);
        let problem = GailProblem::new(inst, k_e, bx, reg)?;
        let inst = problem.instance();
        let k0 = match &config.solver.k0 {
            Some(m) => Policy::new(m.clone()),
            None => {
                let zero = Policy::zeros(k, d);
                if is_stabilizing(inst, &zero)? {
                    zero
                } else {
                    let mut rng = stream_rng(config.seed, u64::MAX);
                    random_stabilizing_policy(&mut rng, inst, 0.99, 10_000)?.ok_or_else(|| {
                        cfg_err("could not draw a stabilizing k0; give one in [solver]")
                    })?
                }
            }
        };
        if !is_stabilizing(inst, &k0)? {
            return Err(cfg_err("[solver] k0 is not stabilizing"));
        }
        let theta0 = config.solver.theta0.clone().unwrap_or(center);
        let mut constants =
            compute_constants(inst, &k0, &bx, problem.regularizer(), problem.expert())?;
        let lip = &config.lipschitz;
        let lipschitz = match (lip.tau_v, lip.nu_v) {
            (Some(t), Some(n)) => {
                constants.tau_v = Some(t);
                constants.nu_v = Some(n);
                None
            }
            (None, None) if lip.enabled => {
                let s = region_bound(&problem, &k0, &constants, lip.region, lip.margin)?;
                let est = estimate_lipschitz(inst, &k0, s, lip.samples, config.seed)?;
                constants = constants.with_lipschitz(&est);
                Some(est)
            }
            (None, None) => None,
            _ => return Err(cfg_err("[lipschitz] give both tau_v and nu_v or neither")),
        };
        Ok(Experiment {
            config,
            problem,
            theta_tilde,
            k0,
            theta0,
            constants,
            lipschitz,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::build(ExperimentConfig::load(path)?)
    }

    pub fn step_mode(&self) -> Option<StepMode> {
        match self.config.solver.eta {
            StepSpec::Mode(m) => Some(m),
            StepSpec::Value(_) => None,
        }
    }

    /// Stepsizes before any path certification.
    pub fn initial_steps(&self) -> Result<StepsizeChoice> {
        let c = &self.constants;
        match self.config.solver.eta {
            StepSpec::Value(eta) => {
                let lambda =
                    self.config.solver.lambda.ok_or_else(|| {
                        cfg_err("[solver] lambda is required when eta is a number")
                    })?;
                Ok(StepsizeChoice { eta, lambda })
            }
            StepSpec::Mode(StepMode::Auto) => auto_stepsizes(c),
            StepSpec::Mode(StepMode::Path) => {
                path_stepsizes(self.problem.instance(), c, &self.k0, &self.theta0)
            }
            StepSpec::Mode(StepMode::Global) => {
                let cap = 0.5 * path_step_bound(self.problem.instance(), &self.theta0, &self.k0)?;
                global_stepsizes(c, cap)
            }
        }
    }

    pub fn solver_config(&self, steps: StepsizeChoice) -> Result<SolverConfig> {
        let mut s = SolverConfig::new(
            steps.eta,
            steps.lambda,
            self.config.solver.eps,
            self.config.solver.max_iter,
        )?;
        s.numerics = self.config.numerics;
        s.record_wall_time = self.config.solver.record_wall_time;
        Ok(s)
    }

    fn solve_once(&self, steps: StepsizeChoice) -> Result<SolveOutcome> {
        let cfg = self.solver_config(steps)?;
        if self.config.solver.model_free {
            let est = self.config.estimator.unwrap_or_default();
            let mut oracle = EsOracle::new(est)?;
            self.problem
                .solve_with_oracle(&self.k0, &self.theta0, &cfg, &mut oracle)
        } else {
            self.problem.solve(&self.k0, &self.theta0, &cfg)
        }
    }

    /// Runs the solver. In `path` and `global` modes both stepsizes are
    /// halved until the per-iterate decrement requirement holds along the
    /// whole trace.
    pub fn certified_solve(&self) -> Result<(StepsizeChoice, SolveOutcome, usize)> {
        let mut steps = self.initial_steps()?;
        let certify = matches!(self.step_mode(), Some(StepMode::Path | StepMode::Global));
        let attempts = if certify {
            self.config.solver.max_certify_attempts
        } else {
            0
        };
        let mut tries = 0;
        loop {
            tries += 1;
            let out = self.solve_once(steps)?;
            if !certify || tries > attempts {
                return Ok((steps, out, tries));
            }
            let v = check_condition1_path(
                self.problem.instance(),
                &self.constants,
                &out.trace,
                steps.eta,
                steps.lambda,
            )?;
            if v.passes {
                return Ok((steps, out, tries));
            }
            steps.eta /= 2.0;
            steps.lambda /= 2.0;
        }
    }

    /// The saddle used for `Z_i`: `(K_E, θ̃)` when the regularizer is
    /// centred at `θ̃` (then it is the exact saddle), otherwise the final
    /// iterate.
    pub fn saddle(&self, outcome: &SolveOutcome) -> (Policy, CostParam, bool) {
        let center = self.problem.regularizer().center();
        match &self.theta_tilde {
            Some(t) if t.distance(center) == 0.0 => {
                (self.problem.expert().clone(), t.clone(), true)
            }
            _ => (outcome.policy.clone(), outcome.theta.clone(), false),
        }
    }

    /// Closed-form and sampled-moduli verdicts that need no trace.
    pub fn static_verdicts(
        &self,
        steps: StepsizeChoice,
        theta_star: &CostParam,
    ) -> Result<Vec<ConditionVerdict>> {
        let c = &self.constants;
        let mut v = vec![check_condition1(c, steps.eta, steps.lambda)];
        if c.tau_v.is_some() {
            v.push(check_condition2(c)?);
            v.push(check_condition3(c, steps.eta, steps.lambda)?);
        }
        v.push(condition4_verdict(&self.problem, theta_star)?);
        if c.local.is_some() && c.tau_v.is_some() {
            v.push(check_condition5(c, steps.eta, steps.lambda)?);
        }
        Ok(v)
    }

    pub fn run(&self) -> Result<RunReport> {
        let (steps, mut outcome, attempts) = self.certified_solve()?;
        let (k_star, theta_star, exact_saddle) = self.saddle(&outcome);
        let mut constants = self.constants.clone();
        let converged = outcome.converged();
        if converged && self.config.local.enabled {
            let l = &self.config.local;
            match estimate_local_moduli(
                &self.problem,
                &k_star,
                &theta_star,
                l.radius,
                l.samples,
                self.config.seed,
            ) {
                Ok(m) => constants = constants.with_local(m),
                Err(GailError::InsufficientCoverage { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        let with_local = Experiment {
            constants: constants.clone(),
            ..self.clone()
        };
        let mut verdicts = with_local.static_verdicts(steps, &theta_star)?;
        if !outcome.trace.is_empty() {
            verdicts.insert(
                1,
                check_condition1_path(
                    self.problem.instance(),
                    &constants,
                    &outcome.trace,
                    steps.eta,
                    steps.lambda,
                )?,
            );
        }
        if let (Some(est), RegionKind::Path) = (&self.lipschitz, self.config.lipschitz.region) {
            let max_sigma = outcome
                .trace
                .records
                .iter()
                .map(|r| r.sigma_norm)
                .fold(0.0, f64::max);
            verdicts.push(region_verdict(max_sigma, est.region_bound));
        }
        let diag = diagnose(
            &self.problem,
            &constants,
            &outcome.trace,
            steps,
            self.config.solver.eps,
            (&k_star, &theta_star),
        )?;
        if let Some(p) = &diag.potential {
            for (r, v) in outcome.trace.records.iter_mut().zip(&p.p) {
                r.potential_p = Some(*v);
            }
        }
        if let Some(l) = &diag.local_rate {
            for (r, z) in outcome.trace.records.iter_mut().zip(&l.z) {
                r.z_local = Some(*z);
            }
        }
        let last = outcome.trace.last().expect("trace has the initial iterate");
        let upsilon_formula = if constants.local.is_some() && constants.tau_v.is_some() {
            Some(upsilon_for(&constants, steps.eta, steps.lambda)?.upsilon)
        } else {
            None
        };
        let summary = Summary {
            converged,
            gamma_eps_index: outcome.gamma_eps,
            final_prox_grad_norm: last.prox_grad_norm,
            final_k_error: outcome.policy.distance(self.problem.expert()),
            condition_verdicts: verdicts,
            upsilon_formula,
            upsilon_measured: diag.local_rate.as_ref().map(|l| l.upsilon_measured),
        };
        Ok(RunReport {
            steps,
            attempts,
            exit_code: exit_code(&outcome.status),
            outcome,
            constants,
            exact_saddle,
            diagnostics: diag,
            summary,
        })
    }
}

fn region_bound(
    problem: &GailProblem,
    k0: &Policy,
    consts: &ProblemConstants,
    kind: RegionKind,
    margin: f64,
) -> Result<f64> {
    Ok(match kind {
        RegionKind::Envelope => consts.default_region_bound(),
        RegionKind::Path => {
            let s0 = spectral_norm(&state_covariance(problem.instance(), k0)?);
            let se = spectral_norm(problem.expert_occupancy().0);
            margin * s0.max(se)
        }
    })
}

fn region_verdict(max_sigma: f64, bound: f64) -> ConditionVerdict {
    let holds = max_sigma <= bound;
    ConditionVerdict {
        condition: "lipschitz_region".into(),
        passes: holds,
        binding: "path_in_region".into(),
        checks: vec![BoundCheck {
            name: "path_in_region".into(),
            value: max_sigma,
            bound,
            strict: false,
            holds,
        }],
        upsilon: None,
        note: Some("every iterate lies where tau_V, nu_V were sampled".into()),
    }
}

fn condition4_verdict(problem: &GailProblem, theta: &CostParam) -> Result<ConditionVerdict> {
    let r = check_condition4(problem.instance(), theta)?;
    let gate = problem.numerics().condition4_rel_gate * r.sigma_max;
    Ok(ConditionVerdict {
        condition: "condition4".into(),
        passes: r.passes,
        binding: "jacobian_nonsingular".into(),
        checks: vec![BoundCheck {
            name: "jacobian_nonsingular".into(),
            value: gate,
            bound: r.sigma_min,
            strict: true,
            holds: r.passes,
        }],
        upsilon: None,
        note: Some(format!(
            "sigma_min(Y) = {:.6e}, sigma_max(Y) = {:.6e}",
            r.sigma_min, r.sigma_max
        )),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagReport {
    pub potential: Option<PotentialReport>,
    pub envelope: EnvelopeReport,
    pub step_lemmas: StepLemmaReport,
    pub local_rate: Option<LocalRateReport>,
    pub decay: Option<DecayFit>,
    pub iteration_bounds: Vec<IterationBoundCheck>,
    pub saddle_check: Option<SaddleCheck>,
    pub notes: Vec<String>,
}

/// Every trace monitor that applies; the ones whose inputs are missing are
/// skipped with a note.
pub fn diagnose(
    problem: &GailProblem,
    consts: &ProblemConstants,
    trace: &IterateTrace,
    steps: StepsizeChoice,
    eps: f64,
    saddle: (&Policy, &CostParam),
) -> Result<DiagReport> {
    let mut notes = Vec::new();
    let potential = match potential_trace(trace, consts, steps.eta, steps.lambda) {
        Ok(p) => Some(p),
        Err(e @ (GailError::Unsupported(_) | GailError::Contract(_))) => {
            notes.push(format!("potential skipped: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let iteration_bounds = match potential
        .as_ref()
        .and_then(|p| zeta(p, consts, steps.eta, steps.lambda))
    {
        Some(z) => iteration_bound_checks(trace, z, &[1e-2, 1e-3, 1e-4]),
        None => Vec::new(),
    };
    let local = match local_rate(problem, trace, saddle, consts, steps, eps) {
        Ok(l) => Some(l),
        Err(e @ (GailError::Unsupported(_) | GailError::Contract(_))) => {
            notes.push(format!("local rate skipped: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let saddle_check = match trace.last() {
        Some(r) if local.is_some() => {
            Some(saddle_check(problem, &Policy::new(r.k.clone()), &r.theta)?)
        }
        _ => None,
    };
    Ok(DiagReport {
        potential,
        envelope: stability_envelope(trace, consts),
        step_lemmas: step_lemma_checks(problem, trace, consts, steps.eta, steps.lambda)?,
        local_rate: local,
        decay: decay_fit(trace, EPS_PRE_LOCAL),
        iteration_bounds,
        saddle_check,
        notes,
    })
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub steps: StepsizeChoice,
    /// Solver runs used by path certification.
    pub attempts: usize,
    pub outcome: SolveOutcome,
    /// Constants including any local moduli estimated after convergence.
    pub constants: ProblemConstants,
    pub exact_saddle: bool,
    pub diagnostics: DiagReport,
    pub summary: Summary,
    pub exit_code: i32,
}

impl RunReport {
    pub fn trace_file(&self) -> TraceFile {
        TraceFile {
            eta: self.steps.eta,
            lambda: self.steps.lambda,
            status: self.outcome.status,
            trace: self.outcome.trace.clone(),
        }
    }
}

fn ensure_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

/// `gen`: writes `instance.json` into `out`.
pub fn cmd_gen(d: usize, k: usize, rho: f64, seed: u64, out: &Path) -> Result<PathBuf> {
    let inst = generate_instance(d, k, rho, seed)?;
    ensure_dir(out)?;
    let path = out.join("instance.json");
    output::write_json(&path, &InstanceFile::from_instance(&inst))?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertReport {
    #[serde(with = "crate::numerics::mat_rows")]
    pub k_e: Mat,
    #[serde(with = "crate::numerics::mat_rows")]
    pub p_star: Mat,
    pub riccati_residual: f64,
    pub spectral_radius: f64,
    pub condition4: ConditionVerdict,
}

/// `expert`: the Riccati solution for `θ̃` and Condition 4 there.
pub fn cmd_expert(cfg: &ExperimentConfig) -> Result<ExpertReport> {
    let inst = cfg.load_instance()?;
    let theta = cfg
        .expert
        .theta_tilde
        .as_ref()
        .ok_or_else(|| cfg_err("expert needs [expert] theta_tilde"))?;
    let sol = solve_dare(&inst, theta)?;
    let pol = sol.policy();
    let rho = crate::numerics::spectral_radius(&inst.closed_loop_matrix(&pol)?)?;
    let r = check_condition4(&inst, theta)?;
    Ok(ExpertReport {
        k_e: sol.k_star.clone(),
        p_star: sol.p_star.clone(),
        riccati_residual: sol.residual,
        spectral_radius: rho,
        condition4: ConditionVerdict {
            condition: "condition4".into(),
            passes: r.passes,
            binding: "jacobian_nonsingular".into(),
            checks: vec![],
            upsilon: None,
            note: Some(format!(
                "sigma_min(Y) = {:.6e}, sigma_max(Y) = {:.6e}",
                r.sigma_min, r.sigma_max
            )),
        },
    })
}

/// `solve`: runs the experiment and writes the trace and `summary.json`.
pub fn cmd_solve(exp: &Experiment, out: &Path, format: OutputFormat) -> Result<RunReport> {
    let report = exp.run()?;
    ensure_dir(out)?;
    match format {
        OutputFormat::Csv => {
            let f = std::fs::File::create(out.join("trace.csv"))?;
            output::write_trace_csv(&report.outcome.trace, std::io::BufWriter::new(f))?;
        }
        OutputFormat::Json => output::write_json(&out.join("trace.json"), &report.trace_file())?,
    }
    output::write_json(&out.join("summary.json"), &report.summary)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub eta: f64,
    pub lambda: f64,
    pub constants: ProblemConstants,
    pub lipschitz: Option<LipschitzEstimates>,
    pub verdicts: Vec<ConditionVerdict>,
}

impl CheckReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.passes)
    }
}

/// `check`: condition verdicts for the configured stepsizes. Path-certified
/// modes run the solver to certify the path.
pub fn cmd_check(exp: &Experiment) -> Result<CheckReport> {
    let (steps, verdicts) = match exp.step_mode() {
        Some(StepMode::Path | StepMode::Global) => {
            let r = exp.run()?;
            (r.steps, r.summary.condition_verdicts)
        }
        _ => {
            let steps = exp.initial_steps()?;
            let theta = exp.problem.regularizer().center().clone();
            (steps, exp.static_verdicts(steps, &theta)?)
        }
    };
    Ok(CheckReport {
        eta: steps.eta,
        lambda: steps.lambda,
        constants: exp.constants.clone(),
        lipschitz: exp.lipschitz,
        verdicts,
    })
}

/// `diag`: monitors for a saved trace. A JSON trace carries its iterates
/// and stepsizes; a CSV trace is regenerated from the config (runs are
/// deterministic) and must match the file.
pub fn cmd_diag(exp: &Experiment, trace_path: &Path) -> Result<DiagReport> {
    let is_json = trace_path.extension().is_some_and(|e| e == "json");
    let (steps, trace) = if is_json {
        let text = std::fs::read_to_string(trace_path)?;
        let f: TraceFile = serde_json::from_str(&text)
            .map_err(|e| cfg_err(format!("{}: {e}", trace_path.display())))?;
        (
            StepsizeChoice {
                eta: f.eta,
                lambda: f.lambda,
            },
            f.trace,
        )
    } else {
        let rows = output::read_trace_csv(trace_path)?;
        let r = exp.run()?;
        let matches = rows.len() == r.outcome.trace.len()
            && rows
                .iter()
                .zip(&r.outcome.trace.records)
                .all(|(row, rec)| row[1] == Some(rec.cost) && row[3] == Some(rec.prox_grad_norm));
        if !matches {
            return Err(cfg_err(format!(
                "{} does not match a replay of the config",
                trace_path.display()
            )));
        }
        (r.steps, r.outcome.trace)
    };
    let last = trace.last().ok_or_else(|| cfg_err("empty trace"))?;
    let pseudo = SolveOutcome {
        policy: Policy::new(last.k.clone()),
        theta: last.theta.clone(),
        trace: IterateTrace::default(),
        status: SolveStatus::MaxIterations,
        gamma_eps: None,
    };
    let (ks, ts, _) = exp.saddle(&pseudo);
    let mut consts = exp.constants.clone();
    if last.prox_grad_norm.powi(2) <= exp.config.solver.eps && exp.config.local.enabled {
        let l = &exp.config.local;
        if let Ok(m) =
            estimate_local_moduli(&exp.problem, &ks, &ts, l.radius, l.samples, exp.config.seed)
        {
            consts = consts.with_local(m);
        }
    }
    diagnose(
        &exp.problem,
        &consts,
        &trace,
        steps,
        exp.config.solver.eps,
        (&ks, &ts),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchEntry {
    pub config: PathBuf,
    pub exit_code: i32,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

/// `batch`: each config solved independently (in parallel) into
/// `out/<config stem>/`.
pub fn cmd_batch(
    configs: &[PathBuf],
    out: &Path,
    format: OutputFormat,
    seed: Option<u64>,
) -> Vec<BatchEntry> {
    configs
        .par_iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
            let res = ExperimentConfig::load(p).and_then(|mut c| {
                if let Some(s) = seed {
                    c.seed = s;
                }
                let exp = Experiment::build(c)?;
                cmd_solve(&exp, &out.join(&stem), format)
            });
            match res {
                Ok(r) => BatchEntry {
                    config: p.clone(),
                    exit_code: r.exit_code,
                    summary: Some(r.summary),
                    error: None,
                },
                Err(e) => BatchEntry {
                    config: p.clone(),
                    exit_code: error_exit_code(&e),
                    summary: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Spectral interval of a symmetric matrix, used when printing boxes.
pub fn eigen_range(m: &Mat) -> Result<(f64, f64)> {
    Ok((min_eigenvalue_sym(m)?, max_eigenvalue_sym(m)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_cfg(eta: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!(
            r#"
[instance]
a = [[1.0]]
b = [[1.0]]
sigma0 = [[1.0]]
[expert]
theta_tilde = {{ q = [[1.0]], r = [[1.0]] }}
[box]
around = 1e-3
[regularizer]
gamma = 100.0
[solver]
{eta}
k0 = [[1.0]]
max_iter = 200000
"#
        ))
        .unwrap()
    }

    #[test]
    fn max_iter_one_exits_two() {
        let mut c = scalar_cfg("eta = 0.05\nlambda = 0.02");
        c.solver.max_iter = 1;
        let r = Experiment::build(c).unwrap().run().unwrap();
        assert_eq!(r.exit_code, EXIT_MAX_ITER);
        assert_eq!(r.outcome.trace.len(), 2);
    }

    #[test]
    fn destabilizing_eta_exits_three() {
        let r = Experiment::build(scalar_cfg("eta = 0.95\nlambda = 0.02"))
            .unwrap()
            .run()
            .unwrap();
        assert_eq!(r.exit_code, EXIT_UNSTABLE);
        assert!(!r.outcome.trace.is_empty());
    }

    #[test]
    fn path_mode_recovers_expert() {
        let r = Experiment::build(scalar_cfg("eta = \"path\""))
            .unwrap()
            .run()
            .unwrap();
        assert_eq!(r.exit_code, EXIT_CONVERGED, "{:?}", r.summary);
        assert!(r.summary.final_k_error <= 1e-4);
        let path = r
            .summary
            .condition_verdicts
            .iter()
            .find(|v| v.condition == "condition1_path")
            .unwrap();
        assert!(path.passes);
        assert!(r.diagnostics.envelope.passes());
    }

    #[test]
    fn explicit_expert_needs_center() {
        let mut c = scalar_cfg("eta = 0.05\nlambda = 0.02");
        c.expert.theta_tilde = None;
        c.expert.k_e = Some(Mat::from_element(1, 1, 0.6));
        assert!(matches!(Experiment::build(c), Err(GailError::Config(_))));
    }
}
