//! Weighted multi-objective design of waveform families.
//!
//! For `P` members the scalarized objective is
//!
//! ```text
//! F = sum_p w_p ISR_p / ISR_p(0) + sum_{p<q} w_pq A_pq / A_pq(0)
//! ```
//!
//! minimized subject to `(1 - delta) B_p(0) <= B_p <= (1 + delta) B_p(0)` on
//! every member's mean-square bandwidth `B_p`.
//!
//! The solver is a projected quasi-Newton method. In the coordinates
//! `y_k = k index_k` the bandwidth is proportional to `|y|^2`, so the feasible
//! set of each member is a spherical shell and projection is a radial
//! rescale. Every iterate is therefore feasible and only steps that lower
//! `F` are accepted. Gradients are central finite differences in the
//! indices, evaluated in parallel with a fixed reduction order so the result
//! does not depend on the number of worker threads.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::correlation::{acf_numeric, ccf_numeric, delay_axis, Correlator};
use crate::analysis::metrics::{
    ccf_area, first_null_in, isr_with_null, metrics_report, power_db, rms_bandwidth_sq,
    split_areas, IsrReport, NullKind, DEFAULT_NULL_THRESHOLD_DB,
};
use crate::error::{Error, Result};
use crate::synthesis::{
    envelope_from_phase, frequency_extent, random_indices, scale_to_tbp, seeded_rng,
    unit_circle_table, InitWeighting,
};
use crate::waveform::{
    make_grid, MetricsReport, SampledWaveform, SamplingGrid, Symmetry, TaperSpec, WaveformParams,
};

/// Named weightings of the ISR and CCF-area objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightCase {
    /// Every objective weighted equally.
    Equal,
    /// CCF areas weighted 10x the ISRs.
    CcfHeavy,
    /// ISRs weighted 10x the CCF areas.
    AcfHeavy,
}

impl WeightCase {
    pub fn label(self) -> &'static str {
        match self {
            WeightCase::Equal => "equal",
            WeightCase::CcfHeavy => "ccf-heavy",
            WeightCase::AcfHeavy => "acf-heavy",
        }
    }
}

/// Objective weights, normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    /// One per member.
    pub isr: Vec<f64>,
    /// One per pair `(p, q)`, `p < q`, in lexicographic order.
    pub ccf: Vec<f64>,
}

impl Weights {
    /// Validate and normalize raw weights for a family of `members` waveforms.
    pub fn new(isr: Vec<f64>, ccf: Vec<f64>, members: usize) -> Result<Self> {
        let pairs = members * members.saturating_sub(1) / 2;
        if isr.len() != members || ccf.len() != pairs {
            return Err(Error::InvalidProblem(format!(
                "expected {members} ISR weights and {pairs} CCF weights, got {} and {}",
                isr.len(),
                ccf.len()
            )));
        }
        if isr.iter().chain(&ccf).any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidProblem("weights must be finite and nonnegative".into()));
        }
        let total: f64 = isr.iter().chain(&ccf).sum();
        if total <= 0.0 {
            return Err(Error::InvalidProblem("weights sum to zero".into()));
        }
        Ok(Weights {
            isr: isr.iter().map(|w| w / total).collect(),
            ccf: ccf.iter().map(|w| w / total).collect(),
        })
    }

    /// Raw `{1, 1}` / `{1, 10}` / `{10, 1}` (ISR, CCF) weights, normalized.
    pub fn for_case(case: WeightCase, members: usize) -> Result<Self> {
        let (wi, wc) = match case {
            WeightCase::Equal => (1.0, 1.0),
            WeightCase::CcfHeavy => (1.0, 10.0),
            WeightCase::AcfHeavy => (10.0, 1.0),
        };
        let pairs = members * members.saturating_sub(1) / 2;
        Weights::new(vec![wi; members], vec![wc; pairs], members)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    /// Stop once `F` improved by less than this fraction over
    /// `stall_iterations` accepted iterations.
    pub rel_tolerance: f64,
    pub stall_iterations: usize,
    /// Central-difference step on each modulation index.
    pub fd_step: f64,
    /// Number of starts; start 0 is the unperturbed initial point.
    pub restarts: usize,
    /// Relative size of the restart perturbations.
    pub restart_scale: f64,
    pub max_line_search: usize,
    /// Sampling oversample factor for the evaluation grid.
    pub oversample: f64,
    pub null_threshold_db: f64,
    /// Iterates must satisfy the bandwidth band within `tol * B(0)`.
    pub constraint_tolerance: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            max_iterations: 500,
            rel_tolerance: 1e-6,
            stall_iterations: 5,
            fd_step: 1e-4,
            restarts: 1,
            restart_scale: 0.05,
            max_line_search: 30,
            oversample: 16.0,
            null_threshold_db: DEFAULT_NULL_THRESHOLD_DB,
            constraint_tolerance: 1e-6,
        }
    }
}

/// Everything about a design problem except the initial members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub weights: Weights,
    pub delta: f64,
    pub taper: TaperSpec,
    pub seed: u64,
    pub settings: OptimizerSettings,
}

impl ProblemConfig {
    pub fn new(weights: Weights, delta: f64, seed: u64) -> Self {
        ProblemConfig {
            weights,
            delta,
            taper: TaperSpec::RECTANGULAR,
            seed,
            settings: OptimizerSettings::default(),
        }
    }
}

/// `members` seeded Gaussian index vectors, drawn sequentially from one
/// generator with [`InitWeighting::OneOverK`] and each scaled to
/// `target_tbp`.
pub fn init_members(
    members: usize,
    harmonics: usize,
    duration: f64,
    target_tbp: f64,
    seed: u64,
    symmetry: Symmetry,
) -> Result<Vec<WaveformParams>> {
    init_members_weighted(
        members,
        harmonics,
        duration,
        target_tbp,
        seed,
        symmetry,
        InitWeighting::OneOverK,
    )
}

/// [`init_members`] with an explicit draw weighting.
pub fn init_members_weighted(
    members: usize,
    harmonics: usize,
    duration: f64,
    target_tbp: f64,
    seed: u64,
    symmetry: Symmetry,
    weighting: InitWeighting,
) -> Result<Vec<WaveformParams>> {
    if members < 2 {
        return Err(Error::InvalidProblem(format!("need at least 2 members, got {members}")));
    }
    if harmonics == 0 {
        return Err(Error::InvalidProblem("need at least one harmonic".into()));
    }
    let mut rng = seeded_rng(seed);
    (0..members)
        .map(|_| {
            let idx = random_indices(&mut rng, harmonics, weighting);
            scale_to_tbp(&WaveformParams::new(duration, symmetry, idx)?, target_tbp)
        })
        .collect()
}

/// Seeded even-symmetry family with equal weights, `delta = 0.2` and a
/// rectangular taper.
pub fn init_family(
    members: usize,
    harmonics: usize,
    duration: f64,
    target_tbp: f64,
    seed: u64,
) -> Result<FamilyDesignProblem> {
    let list = init_members(members, harmonics, duration, target_tbp, seed, Symmetry::Even)?;
    let config = ProblemConfig::new(Weights::for_case(WeightCase::Equal, members)?, 0.2, seed);
    FamilyDesignProblem::new(list, config)
}

/// A family design problem with its normalization constants.
#[derive(Debug, Clone)]
pub struct FamilyDesignProblem {
    members: Vec<WaveformParams>,
    config: ProblemConfig,
    eval: Evaluator,
    beta0_sq: Vec<f64>,
}

/// Normalized objective values at one candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveBreakdown {
    pub f: f64,
    /// `ISR_p / ISR_p(0)`
    pub isr: Vec<f64>,
    /// `A_pq / A_pq(0)`
    pub ccf: Vec<f64>,
}

impl FamilyDesignProblem {
    pub fn new(members: Vec<WaveformParams>, config: ProblemConfig) -> Result<Self> {
        let p = members.len();
        if p < 2 {
            return Err(Error::InvalidProblem(format!("need at least 2 members, got {p}")));
        }
        let first = &members[0];
        for m in &members {
            if m.num_harmonics() != first.num_harmonics()
                || m.symmetry() != first.symmetry()
                || (m.duration() - first.duration()).abs() > 1e-12 * first.duration()
            {
                return Err(Error::InvalidProblem(
                    "members must share duration, harmonic count and symmetry".into(),
                ));
            }
            if m.a0() != 0.0 {
                return Err(Error::InvalidProblem("members must have a0 = 0".into()));
            }
        }
        if !(config.delta > 0.0 && config.delta <= 1.0) {
            return Err(Error::InvalidProblem(format!(
                "delta = {} outside (0, 1]",
                config.delta
            )));
        }
        let weights = Weights::new(config.weights.isr.clone(), config.weights.ccf.clone(), p)?;
        let s = &config.settings;
        if !(s.fd_step > 0.0 && s.oversample >= 1.0 && s.restarts >= 1 && s.stall_iterations >= 1) {
            return Err(Error::InvalidProblem("invalid optimizer settings".into()));
        }
        let members: Vec<WaveformParams> = members
            .into_iter()
            .map(|m| m.with_taper(config.taper))
            .collect::<Result<_>>()?;
        let beta0_sq = members
            .iter()
            .map(rms_bandwidth_sq)
            .collect::<Result<Vec<_>>>()?;
        if beta0_sq.iter().any(|b| *b <= 0.0) {
            return Err(Error::InvalidProblem("a member has zero bandwidth".into()));
        }
        let config = ProblemConfig { weights, ..config };
        let eval = Evaluator::new(&members, &config)?;
        Ok(FamilyDesignProblem {
            members,
            config,
            eval,
            beta0_sq,
        })
    }

    pub fn members(&self) -> &[WaveformParams] {
        &self.members
    }

    pub fn config(&self) -> &ProblemConfig {
        &self.config
    }

    pub fn weights(&self) -> &Weights {
        &self.config.weights
    }

    pub fn delta(&self) -> f64 {
        self.config.delta
    }

    pub fn grid(&self) -> &SamplingGrid {
        &self.eval.grid
    }

    /// Frozen mainlobe boundaries `tau_m` used inside the objective.
    pub fn frozen_nulls(&self) -> &[f64] {
        &self.eval.tau_m
    }

    pub fn initial_isr(&self) -> &[f64] {
        &self.eval.isr0
    }

    pub fn initial_areas(&self) -> &[f64] {
        &self.eval.area0
    }

    pub fn initial_bandwidth_sq(&self) -> &[f64] {
        &self.beta0_sq
    }

    /// Member index pairs `(p, q)`, `p < q`, in weight order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.eval.pairs
    }

    pub fn initial_indices(&self) -> Vec<Vec<f64>> {
        self.members.iter().map(|m| m.indices().to_vec()).collect()
    }

    fn check_candidate(&self, candidate: &[Vec<f64>]) -> Result<Vec<f64>> {
        let k = self.members[0].num_harmonics();
        if candidate.len() != self.members.len() || candidate.iter().any(|c| c.len() != k) {
            return Err(Error::InvalidProblem(format!(
                "candidate must hold {} vectors of {k} indices",
                self.members.len()
            )));
        }
        Ok(candidate.concat())
    }

    pub fn objective(&self, candidate: &[Vec<f64>]) -> Result<f64> {
        Ok(self.breakdown(candidate)?.f)
    }

    pub fn breakdown(&self, candidate: &[Vec<f64>]) -> Result<ObjectiveBreakdown> {
        let x = self.check_candidate(candidate)?;
        let (state, _) = self.eval.evaluate(&x);
        Ok(self.eval.breakdown(&state))
    }

    /// `[lower, upper]` residual per member; both `<= 0` means feasible.
    pub fn residuals(&self, candidate: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
        self.check_candidate(candidate)?;
        candidate
            .iter()
            .zip(&self.members)
            .zip(&self.beta0_sq)
            .map(|((idx, m), &b0)| {
                let b = rms_bandwidth_sq(&m.with_indices(idx.clone())?)?;
                let d = self.config.delta;
                Ok([(1.0 - d) * b0 - b, b - (1.0 + d) * b0])
            })
            .collect()
    }

    /// Central-difference gradient of `F` with respect to every index.
    pub fn gradient(&self, candidate: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let x = self.check_candidate(candidate)?;
        let (state, members) = self.eval.evaluate(&x);
        let g = self.eval.gradient(&x, &members, &state, self.config.settings.fd_step);
        let k = self.members[0].num_harmonics();
        Ok(g.chunks(k).map(|c| c.to_vec()).collect())
    }

    fn params_for(&self, candidate: &[Vec<f64>]) -> Result<Vec<WaveformParams>> {
        self.members
            .iter()
            .zip(candidate)
            .map(|(m, idx)| m.with_indices(idx.clone()))
            .collect()
    }

    /// Correlation metrics of a candidate on the problem grid, with each
    /// mainlobe null re-detected.
    pub fn summary(&self, candidate: &[Vec<f64>]) -> Result<FamilySummary> {
        let params = self.params_for(candidate)?;
        let grid = self.eval.grid;
        let waves = params
            .iter()
            .map(|p| crate::synthesis::synthesize(p, &grid))
            .collect::<Result<Vec<_>>>()?;
        let threshold = self.config.settings.null_threshold_db;
        let mut isr = Vec::with_capacity(waves.len());
        for (p, w) in waves.iter().enumerate() {
            let acf = acf_numeric(w);
            let rep = crate::analysis::metrics::isr_exact_with_threshold(&acf, threshold)?;
            let frozen = isr_with_null(&acf, self.eval.tau_m[p])?;
            isr.push(MemberSummary {
                isr: rep,
                isr_frozen_null: frozen.isr,
                rms_bandwidth_sq: rms_bandwidth_sq(&params[p])?,
            });
        }
        let pair_areas = self
            .eval
            .pairs
            .iter()
            .map(|&(a, b)| ccf_area(&ccf_numeric(&waves[a], &waves[b])?))
            .collect::<Result<Vec<_>>>()?;
        Ok(FamilySummary {
            members: isr,
            pair_areas,
        })
    }
}

/// Objective value at a candidate.
pub fn family_objective(problem: &FamilyDesignProblem, candidate: &[Vec<f64>]) -> Result<f64> {
    problem.objective(candidate)
}

/// Per-member `[lower, upper]` bandwidth constraint residuals.
pub fn constraint_residuals(
    problem: &FamilyDesignProblem,
    candidate: &[Vec<f64>],
) -> Result<Vec<[f64; 2]>> {
    problem.residuals(candidate)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberSummary {
    /// ISR with the null re-detected on this candidate.
    pub isr: IsrReport,
    /// ISR with the null frozen at its initial position.
    pub isr_frozen_null: f64,
    pub rms_bandwidth_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilySummary {
    pub members: Vec<MemberSummary>,
    /// CCF area per pair, in [`FamilyDesignProblem::pairs`] order.
    pub pair_areas: Vec<f64>,
}

/// One accepted iterate (iteration 0 is the starting point).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub restart: usize,
    pub iteration: usize,
    pub f: f64,
    pub isr_normalized: Vec<f64>,
    pub ccf_normalized: Vec<f64>,
    /// `[lower, upper]` per member.
    pub residuals: Vec<[f64; 2]>,
    /// Euclidean norm of the accepted step in index space.
    pub step_norm: f64,
    /// Objective values of every line-search trial, in order.
    pub trial_values: Vec<f64>,
    /// Objective evaluations spent on this iteration, gradient included.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// Start that produced the returned point.
    pub best_restart: usize,
    pub f_initial: f64,
    pub f_final: f64,
    pub initial_indices: Vec<Vec<f64>>,
    pub final_indices: Vec<Vec<f64>>,
    pub final_breakdown: ObjectiveBreakdown,
    pub final_residuals: Vec<[f64; 2]>,
    pub initial_summary: FamilySummary,
    pub final_summary: FamilySummary,
    pub initial_metrics: Vec<MetricsReport>,
    pub final_metrics: Vec<MetricsReport>,
    pub evaluations: usize,
}

impl OptimizationTrace {
    /// Final members with the problem's taper.
    pub fn final_members(&self, problem: &FamilyDesignProblem) -> Result<Vec<WaveformParams>> {
        problem.params_for(&self.final_indices)
    }

    /// `10 log10(A_final / A_initial)` per pair.
    pub fn pair_area_change_db(&self) -> Vec<f64> {
        self.final_summary
            .pair_areas
            .iter()
            .zip(&self.initial_summary.pair_areas)
            .map(|(f, i)| power_db(f / i))
            .collect()
    }
}

/// Run the projected quasi-Newton solver from every configured start and
/// return the best result.
///
/// `converged` is false when the best start hit the iteration cap.
pub fn optimize_family(problem: &FamilyDesignProblem) -> Result<OptimizationTrace> {
    let settings = &problem.config.settings;
    let x0 = problem.initial_indices().concat();
    let mut records = Vec::new();
    let mut best: Option<(RunResult, usize)> = None;
    let mut evaluations = 0;
    for restart in 0..settings.restarts {
        let start = if restart == 0 {
            x0.clone()
        } else {
            perturbed_start(problem, &x0, restart)
        };
        let run = run_from(problem, start, restart);
        evaluations += run.records.iter().map(|r| r.evaluations).sum::<usize>();
        records.extend(run.records.iter().cloned());
        let better = match &best {
            None => true,
            Some((b, _)) => run.f < b.f,
        };
        if better {
            best = Some((run, restart));
        }
    }
    let (run, best_restart) = best.expect("at least one start");
    let k = problem.members[0].num_harmonics();
    let final_indices: Vec<Vec<f64>> = run.x.chunks(k).map(|c| c.to_vec()).collect();
    let initial_indices = problem.initial_indices();

    let oversample = settings.oversample;
    let metrics = |cand: &[Vec<f64>]| -> Result<Vec<MetricsReport>> {
        problem
            .params_for(cand)?
            .iter()
            .map(|p| metrics_report(p, oversample))
            .collect()
    };
    Ok(OptimizationTrace {
        converged: run.converged,
        best_restart,
        f_initial: 1.0,
        f_final: run.f,
        final_breakdown: problem.breakdown(&final_indices)?,
        final_residuals: problem.residuals(&final_indices)?,
        initial_summary: problem.summary(&initial_indices)?,
        final_summary: problem.summary(&final_indices)?,
        initial_metrics: metrics(&initial_indices)?,
        final_metrics: metrics(&final_indices)?,
        initial_indices,
        final_indices,
        records,
        evaluations,
    })
}

fn perturbed_start(problem: &FamilyDesignProblem, x0: &[f64], restart: usize) -> Vec<f64> {
    let k = problem.members[0].num_harmonics();
    let mut rng = seeded_rng(problem.config.seed.wrapping_add(restart as u64));
    let scale = problem.config.settings.restart_scale;
    let mut y = to_y(x0, k);
    for member in y.chunks_mut(k) {
        let rms = (member.iter().map(|v| v * v).sum::<f64>() / k as f64).sqrt();
        for v in member.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += scale * rms * z;
        }
    }
    problem.eval.project(&mut y, &problem.beta0_sq, problem.config.delta);
    from_y(&y, k)
}

struct RunResult {
    x: Vec<f64>,
    f: f64,
    converged: bool,
    records: Vec<IterationRecord>,
}

fn to_y(x: &[f64], k: usize) -> Vec<f64> {
    x.iter().enumerate().map(|(i, v)| v * ((i % k) + 1) as f64).collect()
}

fn from_y(y: &[f64], k: usize) -> Vec<f64> {
    y.iter().enumerate().map(|(i, v)| v / ((i % k) + 1) as f64).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mat_vec(h: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| dot(&h[i * n..(i + 1) * n], v)).collect()
}

fn scaled_identity(n: usize, s: f64) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = s;
    }
    h
}

/// BFGS update of the inverse Hessian `h` with step `s` and gradient change `y`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64]) {
    let n = s.len();
    let sy = dot(s, y);
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    let rho = 1.0 / sy;
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

fn run_from(problem: &FamilyDesignProblem, x_start: Vec<f64>, restart: usize) -> RunResult {
    let eval = &problem.eval;
    let settings = &problem.config.settings;
    let k = problem.members[0].num_harmonics();
    let n = x_start.len();
    let grad_evals = 2 * n;

    let mut x = x_start;
    let (state, members) = eval.evaluate(&x);
    let mut f = state.f;
    // dF/dy_k = dF/dindex_k / k
    let mut gy = from_y(&eval.gradient(&x, &members, &state, settings.fd_step), k);
    let record = |x: &[f64], state: &EvalState, it, step, trials, evals| IterationRecord {
        restart,
        iteration: it,
        f: state.f,
        isr_normalized: eval.breakdown(state).isr,
        ccf_normalized: eval.breakdown(state).ccf,
        residuals: problem
            .residuals(&x.chunks(k).map(|c| c.to_vec()).collect::<Vec<_>>())
            .unwrap_or_default(),
        step_norm: step,
        trial_values: trials,
        evaluations: evals,
    };
    let mut records = vec![record(&x, &state, 0, 0.0, Vec::new(), 1 + grad_evals)];
    let mut history = vec![f];

    let initial_scale = |g: &[f64], y: &[f64]| 0.01 * norm(y) / norm(g).max(1e-300);
    let mut h = scaled_identity(n, initial_scale(&gy, &to_y(&x, k)));
    let mut fresh_h = true;
    let mut converged = false;

    for iteration in 1..=settings.max_iterations {
        let y = to_y(&x, k);
        let mut dir: Vec<f64> = mat_vec(&h, &gy).iter().map(|v| -v).collect();
        if dot(&dir, &gy) >= 0.0 {
            h = scaled_identity(n, initial_scale(&gy, &y));
            fresh_h = true;
            dir = mat_vec(&h, &gy).iter().map(|v| -v).collect();
        }

        let mut trials = Vec::new();
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..settings.max_line_search {
            let mut y_new: Vec<f64> = y.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            eval.project(&mut y_new, &problem.beta0_sq, problem.config.delta);
            let x_new = from_y(&y_new, k);
            let (st, mem) = eval.evaluate(&x_new);
            trials.push(st.f);
            let dy: Vec<f64> = y_new.iter().zip(&y).map(|(a, b)| a - b).collect();
            let slope = dot(&gy, &dy);
            let armijo = if slope < 0.0 { f + 1e-4 * slope } else { f };
            let feasible = eval.feasible(
                &y_new,
                &problem.beta0_sq,
                problem.config.delta,
                settings.constraint_tolerance,
            );
            if feasible && st.f.is_finite() && st.f < f && st.f <= armijo {
                accepted = Some((x_new, y_new, st, mem));
                break;
            }
            t *= 0.5;
        }

        let evals = trials.len();
        let Some((x_new, y_new, st, mem)) = accepted else {
            if fresh_h {
                // No descent even along the scaled gradient: stationary at
                // the resolution of the finite differences.
                converged = true;
                break;
            }
            h = scaled_identity(n, initial_scale(&gy, &y));
            fresh_h = true;
            continue;
        };

        let g_new_y = from_y(&eval.gradient(&x_new, &mem, &st, settings.fd_step), k);
        let s: Vec<f64> = y_new.iter().zip(&y).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new_y.iter().zip(&gy).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * norm(&s) * norm(&yv) {
            if fresh_h {
                h = scaled_identity(n, sy / dot(&yv, &yv));
            }
            bfgs_update(&mut h, &s, &yv);
            fresh_h = false;
        }

        let step: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        records.push(record(&x_new, &st, iteration, norm(&step), trials, evals + grad_evals));
        x = x_new;
        f = st.f;
        gy = g_new_y;
        history.push(f);

        let w = settings.stall_iterations;
        if history.len() > w {
            let old = history[history.len() - 1 - w];
            if (old - f) <= settings.rel_tolerance * f.abs() {
                converged = true;
                break;
            }
        }
    }
    RunResult {
        x,
        f,
        converged,
        records,
    }
}

/// Cached per-member data for one evaluation.
#[derive(Clone)]
struct MemberState {
    phase: Vec<f64>,
    end_phase: f64,
    wave: SampledWaveform,
    spec: Vec<Complex64>,
}

/// Raw objective values at one candidate.
#[derive(Debug, Clone)]
struct EvalState {
    f: f64,
    isr: Vec<f64>,
    area: Vec<f64>,
}

/// Numeric objective engine on a fixed grid.
#[derive(Debug, Clone)]
struct Evaluator {
    templates: Vec<WaveformParams>,
    grid: SamplingGrid,
    engine: Correlator,
    /// `basis[k - 1][n]`: phase contribution of a unit index at harmonic `k`.
    basis: Vec<Vec<f64>>,
    basis_end: Vec<f64>,
    positive_delays: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    weights: Weights,
    tau_m: Vec<f64>,
    isr0: Vec<f64>,
    area0: Vec<f64>,
    harmonics: usize,
}

impl Evaluator {
    fn new(members: &[WaveformParams], config: &ProblemConfig) -> Result<Self> {
        let oversample = config.settings.oversample;
        let first = &members[0];
        let duration = first.duration();
        let k = first.num_harmonics();
        // Size the grid for the widest member plus headroom for growth.
        let mut n = 0;
        for m in members {
            let plan = make_grid(m, oversample)?;
            let probe = plan.grid;
            let (lo, hi) = frequency_extent(m, &probe);
            let occupied = (hi - lo).max(2.0 * lo.abs().max(hi.abs()));
            let want = (1.25 * oversample * duration * occupied).ceil() as usize;
            n = n.max(want.next_power_of_two()).max(plan.grid.num_samples());
        }
        let grid = SamplingGrid::new(duration, n)?;

        let table = unit_circle_table(n);
        let symmetry = first.symmetry();
        let basis: Vec<Vec<f64>> = (1..=k)
            .map(|h| {
                let sign = if h % 2 == 0 { 1.0 } else { -1.0 };
                (0..n)
                    .map(|i| {
                        let (s, c) = table[(h * i) % n];
                        match symmetry {
                            Symmetry::Even => sign * s,
                            Symmetry::Odd => -sign * c,
                        }
                    })
                    .collect()
            })
            .collect();
        // sin(pi k) = 0; -cos(pi k) = -(-1)^k
        let basis_end = (1..=k)
            .map(|h| match symmetry {
                Symmetry::Even => 0.0,
                Symmetry::Odd => {
                    if h % 2 == 0 {
                        -1.0
                    } else {
                        1.0
                    }
                }
            })
            .collect();
        let positive_delays = delay_axis(&grid)[n..].to_vec();
        let p = members.len();
        let pairs = (0..p)
            .flat_map(|a| (a + 1..p).map(move |b| (a, b)))
            .collect();

        let mut eval = Evaluator {
            templates: members.to_vec(),
            grid,
            engine: Correlator::new(n),
            basis,
            basis_end,
            positive_delays,
            pairs,
            weights: config.weights.clone(),
            tau_m: Vec::new(),
            isr0: Vec::new(),
            area0: Vec::new(),
            harmonics: k,
        };

        let x0: Vec<f64> = members.iter().flat_map(|m| m.indices().to_vec()).collect();
        let states: Vec<MemberState> = (0..p)
            .map(|i| eval.member_state(i, &x0[i * k..(i + 1) * k]))
            .collect::<Result<_>>()?;
        for (i, st) in states.iter().enumerate() {
            let power = eval.acf_positive_power(st);
            let null = first_null_in(&eval.positive_delays, &power, config.settings.null_threshold_db);
            match null {
                Some(nl) if nl.kind == NullKind::Interior => eval.tau_m.push(nl.tau),
                _ => {
                    return Err(Error::InvalidProblem(format!(
                        "member {i} has no interior ACF null; its ISR cannot be normalized"
                    )))
                }
            }
            let isr = eval.isr_of(i, st);
            if !(isr > 0.0) {
                return Err(Error::InvalidProblem(format!("member {i} has zero initial ISR")));
            }
            eval.isr0.push(isr);
        }
        for &(a, b) in &eval.pairs.clone() {
            let area = eval.area_of(&states[a], &states[b]);
            if !(area > 0.0) {
                return Err(Error::InvalidProblem(format!(
                    "pair ({a}, {b}) has zero initial CCF area"
                )));
            }
            eval.area0.push(area);
        }
        Ok(eval)
    }

    fn member_state(&self, p: usize, indices: &[f64]) -> Result<MemberState> {
        let n = self.grid.num_samples();
        let mut phase = vec![0.0; n];
        let mut end_phase = 0.0;
        for (k, &a) in indices.iter().enumerate() {
            for (ph, b) in phase.iter_mut().zip(&self.basis[k]) {
                *ph += a * b;
            }
            end_phase += a * self.basis_end[k];
        }
        self.from_phase(p, phase, end_phase)
    }

    fn from_phase(&self, p: usize, phase: Vec<f64>, end_phase: f64) -> Result<MemberState> {
        let wave = envelope_from_phase(&self.templates[p], &self.grid, &phase, end_phase)?;
        let spec = self.engine.spectrum(&wave);
        Ok(MemberState {
            phase,
            end_phase,
            wave,
            spec,
        })
    }

    fn acf_positive_power(&self, st: &MemberState) -> Vec<f64> {
        let n = self.grid.num_samples();
        let r = self.engine.correlate(&st.wave, &st.spec, &st.wave, &st.spec);
        r[n..].iter().map(|v| v.norm_sqr()).collect()
    }

    fn isr_of(&self, p: usize, st: &MemberState) -> f64 {
        let power = self.acf_positive_power(st);
        let (main, side) = split_areas(
            &self.positive_delays,
            &power,
            self.tau_m[p],
            self.grid.duration(),
        );
        side / main
    }

    fn area_of(&self, a: &MemberState, b: &MemberState) -> f64 {
        let r = self.engine.correlate(&a.wave, &a.spec, &b.wave, &b.spec);
        let power: Vec<f64> = r.iter().map(|v| v.norm_sqr()).collect();
        simpson_uniform(&power, self.grid.dt())
    }

    fn combine(&self, isr: &[f64], area: &[f64]) -> f64 {
        let mut f = 0.0;
        for (i, v) in isr.iter().enumerate() {
            f += self.weights.isr[i] * v / self.isr0[i];
        }
        for (i, v) in area.iter().enumerate() {
            f += self.weights.ccf[i] * v / self.area0[i];
        }
        if f.is_finite() {
            f
        } else {
            f64::INFINITY
        }
    }

    fn breakdown(&self, st: &EvalState) -> ObjectiveBreakdown {
        ObjectiveBreakdown {
            f: st.f,
            isr: st.isr.iter().zip(&self.isr0).map(|(v, b)| v / b).collect(),
            ccf: st.area.iter().zip(&self.area0).map(|(v, b)| v / b).collect(),
        }
    }

    /// Objective at a flattened index vector, with the member caches.
    fn evaluate(&self, x: &[f64]) -> (EvalState, Vec<MemberState>) {
        let k = self.harmonics;
        let p = self.templates.len();
        let members: Vec<Option<MemberState>> = (0..p)
            .map(|i| self.member_state(i, &x[i * k..(i + 1) * k]).ok())
            .collect();
        if members.iter().any(|m| m.is_none()) {
            let st = EvalState {
                f: f64::INFINITY,
                isr: vec![f64::INFINITY; p],
                area: vec![f64::INFINITY; self.pairs.len()],
            };
            let fallback = (0..p)
                .map(|i| self.member_state(i, self.templates[i].indices()).expect("initial member is valid"))
                .collect();
            return (st, fallback);
        }
        let members: Vec<MemberState> = members.into_iter().map(|m| m.unwrap()).collect();
        let isr: Vec<f64> = (0..p).map(|i| self.isr_of(i, &members[i])).collect();
        let area: Vec<f64> = self
            .pairs
            .iter()
            .map(|&(a, b)| self.area_of(&members[a], &members[b]))
            .collect();
        let f = self.combine(&isr, &area);
        (EvalState { f, isr, area }, members)
    }

    /// Objective with member `p` replaced by `replaced`.
    fn evaluate_with(&self, base: &EvalState, members: &[MemberState], p: usize, replaced: &MemberState) -> f64 {
        let mut isr = base.isr.clone();
        isr[p] = self.isr_of(p, replaced);
        let mut area = base.area.clone();
        for (i, &(a, b)) in self.pairs.iter().enumerate() {
            if a == p {
                area[i] = self.area_of(replaced, &members[b]);
            } else if b == p {
                area[i] = self.area_of(&members[a], replaced);
            }
        }
        self.combine(&isr, &area)
    }

    fn gradient(&self, x: &[f64], members: &[MemberState], base: &EvalState, h: f64) -> Vec<f64> {
        let k = self.harmonics;
        let jobs: Vec<(usize, f64)> = (0..x.len()).flat_map(|i| [(i, h), (i, -h)]).collect();
        let values: Vec<f64> = jobs
            .par_iter()
            .map(|&(i, step)| {
                let (p, kk) = (i / k, i % k);
                let m = &members[p];
                let phase: Vec<f64> = m
                    .phase
                    .iter()
                    .zip(&self.basis[kk])
                    .map(|(a, b)| a + step * b)
                    .collect();
                let end = m.end_phase + step * self.basis_end[kk];
                match self.from_phase(p, phase, end) {
                    Ok(st) => self.evaluate_with(base, members, p, &st),
                    Err(_) => f64::NAN,
                }
            })
            .collect();
        values
            .chunks(2)
            .map(|pair| (pair[0] - pair[1]) / (2.0 * h))
            .collect()
    }

    fn feasible(&self, y: &[f64], beta0_sq: &[f64], delta: f64, tol: f64) -> bool {
        let c = 2.0 * std::f64::consts::PI.powi(2) / self.grid.duration().powi(2);
        y.chunks(self.harmonics).zip(beta0_sq).all(|(member, &b0)| {
            let b = c * member.iter().map(|v| v * v).sum::<f64>();
            b <= (1.0 + delta + tol) * b0 && b >= (1.0 - delta - tol) * b0
        })
    }

    /// Radially rescale each member in `y` coordinates onto the feasible
    /// bandwidth shell.
    fn project(&self, y: &mut [f64], beta0_sq: &[f64], delta: f64) {
        let k = self.harmonics;
        let duration = self.grid.duration();
        let c = 2.0 * std::f64::consts::PI.powi(2) / (duration * duration);
        for (member, &b0) in y.chunks_mut(k).zip(beta0_sq) {
            let b = c * member.iter().map(|v| v * v).sum::<f64>();
            let target = if b > (1.0 + delta) * b0 {
                (1.0 + delta) * b0
            } else if b < (1.0 - delta) * b0 {
                (1.0 - delta) * b0
            } else {
                continue;
            };
            if b > 0.0 {
                let s = (target / b).sqrt();
                member.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
}

fn simpson_uniform(y: &[f64], h: f64) -> f64 {
    let n = y.len() - 1;
    let mut acc = y[0] + y[n];
    for (i, v) in y.iter().enumerate().take(n).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}
