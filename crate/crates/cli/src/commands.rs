//! The three subcommands. Each resolves its members, computes, and writes
//! through an [`export::Writer`].

use mtsfm::analysis::ambiguity::ambiguity_numeric;
use mtsfm::analysis::correlation::max_abs_difference;
use mtsfm::analysis::metrics::{first_null, metrics_report, power_db, DEFAULT_NULL_THRESHOLD_DB};
use mtsfm::analysis::{
    acf_closed_form, acf_numeric, ccf_area, ccf_closed_form, ccf_numeric, CorrelationResult,
    NullKind,
};
use mtsfm::gbf::gbf;
use mtsfm::optimizer::{optimize_family, FamilyDesignProblem, ProblemConfig};
use mtsfm::synthesis::{modulation_function, spectrogram, spectrum_numeric, synthesize};
use mtsfm::{make_grid, MetricsReport, SampledWaveform, SamplingGrid, WaveformParams};
use serde::Serialize;

use crate::config::{ConfigError, ExportOptions, RunConfig};
use crate::export::{IoError, Writer};

#[derive(Debug)]
pub enum CommandError {
    Config(ConfigError),
    Io(IoError),
    Compute(mtsfm::Error),
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Config(e)
    }
}

impl From<IoError> for CommandError {
    fn from(e: IoError) -> Self {
        CommandError::Io(e)
    }
}

impl From<mtsfm::Error> for CommandError {
    fn from(e: mtsfm::Error) -> Self {
        CommandError::Compute(e)
    }
}

type CmdResult<T> = std::result::Result<T, CommandError>;

/// What a command reports back besides its files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub converged: bool,
}

const DONE: Outcome = Outcome { converged: true };

#[derive(Serialize)]
struct MemberMetrics {
    index: usize,
    params: WaveformParams,
    metrics: MetricsReport,
}

#[derive(Serialize)]
struct SynthReport {
    members: Vec<MemberMetrics>,
}

/// Samples, spectrogram, EDS, ACF and ambiguity surface per waveform, plus
/// one metrics report.
pub fn synth(cfg: &RunConfig, out: &mut Writer) -> CmdResult<Outcome> {
    let members = cfg.members()?;
    let mut report = Vec::new();
    for (i, p) in members.iter().enumerate() {
        let grid = make_grid(p, cfg.oversample)?.grid;
        let w = synthesize(p, &grid)?;
        write_samples(out, &format!("w{i}_samples.csv"), p, &w)?;

        let sg = spectrogram(&w, cfg.export.spectrogram_window);
        let power: Vec<Vec<f64>> = sg
            .power
            .iter()
            .map(|row| row.iter().map(|&v| out.db(v)).collect())
            .collect();
        out.matrix(
            &format!("w{i}_spectrogram.txt"),
            "spectrogram_db",
            ("freq_hz", &sg.freqs),
            ("time_s", &sg.times),
            &power,
        )?;

        let spec = spectrum_numeric(&w, cfg.export.eds_pad);
        let rows: Vec<Vec<f64>> = spec
            .freqs
            .iter()
            .zip(spec.eds())
            .map(|(&f, e)| vec![f, e, out.db(e)])
            .collect();
        out.csv(&format!("w{i}_eds.csv"), "eds", &["freq_hz", "eds", "eds_db"], &rows)?;

        let acf = acf_numeric(&w);
        write_correlation(out, &format!("w{i}_acf.csv"), "acf", &acf, None)?;
        if cfg.export.ambiguity {
            write_ambiguity(out, &format!("w{i}_af.txt"), &cfg.export, &w, &w)?;
        }
        report.push(MemberMetrics {
            index: i,
            params: p.clone(),
            metrics: metrics_report(p, cfg.oversample)?,
        });
    }
    out.json("metrics.json", &SynthReport { members: report })?;
    Ok(DONE)
}

#[derive(Serialize)]
struct AnalyzedMember {
    index: usize,
    params: WaveformParams,
    metrics: MetricsReport,
    null_kind: Option<NullKind>,
    /// Largest `|R_closed - R_numeric|` when the closed form applies.
    closed_form_max_diff: Option<f64>,
}

#[derive(Serialize)]
struct AnalyzedPair {
    first: usize,
    second: usize,
    ccf_area: f64,
    ccf_area_db: f64,
    peak_db: f64,
    closed_form_max_diff: Option<f64>,
}

#[derive(Serialize)]
struct AnalyzeReport {
    num_samples: usize,
    members: Vec<AnalyzedMember>,
    pairs: Vec<AnalyzedPair>,
}

/// ACF/CCF curves (numeric and, for rectangular tapers, closed form),
/// ambiguity surfaces and a metrics report. All members share one grid.
pub fn analyze(cfg: &RunConfig, out: &mut Writer) -> CmdResult<Outcome> {
    let members = cfg.members()?;
    let duration = members[0].duration();
    if members.iter().any(|p| p.duration() != duration) {
        return Err(ConfigError::new("waveforms", "analyzed waveforms must share one duration").into());
    }
    let mut n = 0;
    for p in &members {
        n = n.max(make_grid(p, cfg.oversample)?.grid.num_samples());
    }
    let grid = SamplingGrid::new(duration, n)?;
    let waves: Vec<SampledWaveform> = members
        .iter()
        .map(|p| synthesize(p, &grid))
        .collect::<mtsfm::Result<_>>()?;
    let closed = cfg.export.closed_form && members.iter().all(|p| p.is_rectangular());
    let coeffs = if closed {
        Some(members.iter().map(gbf).collect::<mtsfm::Result<Vec<_>>>()?)
    } else {
        None
    };

    let mut report = AnalyzeReport {
        num_samples: n,
        members: Vec::new(),
        pairs: Vec::new(),
    };
    for (i, (p, w)) in members.iter().zip(&waves).enumerate() {
        let num = acf_numeric(w);
        let cf = match &coeffs {
            Some(c) => Some(acf_closed_form(&c[i], p, &num.delays)?),
            None => None,
        };
        write_correlation(out, &format!("w{i}_acf.csv"), "acf", &num, cf.as_ref())?;
        if cfg.export.ambiguity {
            write_ambiguity(out, &format!("w{i}_af.txt"), &cfg.export, w, w)?;
        }
        report.members.push(AnalyzedMember {
            index: i,
            params: p.clone(),
            metrics: metrics_report(p, cfg.oversample)?,
            null_kind: first_null(&num, DEFAULT_NULL_THRESHOLD_DB)?.map(|z| z.kind),
            closed_form_max_diff: cf.as_ref().map(|c| max_abs_difference(&num, c)),
        });
    }
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            let num = ccf_numeric(&waves[i], &waves[j])?;
            let cf = match &coeffs {
                Some(c) => Some(ccf_closed_form(&c[i], &c[j], &members[i], &num.delays)?),
                None => None,
            };
            write_correlation(out, &format!("ccf_{i}_{j}.csv"), "ccf", &num, cf.as_ref())?;
            if cfg.export.ambiguity {
                write_ambiguity(out, &format!("caf_{i}_{j}.txt"), &cfg.export, &waves[i], &waves[j])?;
            }
            let area = ccf_area(&num)?;
            report.pairs.push(AnalyzedPair {
                first: i,
                second: j,
                ccf_area: area,
                ccf_area_db: power_db(area),
                peak_db: power_db(num.peak_power()),
                closed_form_max_diff: cf.as_ref().map(|c| max_abs_difference(&num, c)),
            });
        }
    }
    out.json("metrics.json", &report)?;
    Ok(DONE)
}

#[derive(Serialize)]
struct Coefficients<'a> {
    weight_case: &'a str,
    initial: &'a [WaveformParams],
    #[serde(rename = "final")]
    last: &'a [WaveformParams],
}

#[derive(Serialize)]
struct MemberChange {
    index: usize,
    isr_initial: f64,
    isr_final: f64,
    isr_initial_db: f64,
    isr_final_db: f64,
    /// ISR at the final point measured with the initial `tau_m`.
    isr_final_frozen_null_db: f64,
    tau_m_initial: f64,
    tau_m_final: f64,
    /// Null-to-null mainlobe width `2 tau_m`.
    mainlobe_width_initial: f64,
    mainlobe_width_final: f64,
    rms_bandwidth_sq_initial: f64,
    rms_bandwidth_sq_final: f64,
}

#[derive(Serialize)]
struct PairChange {
    first: usize,
    second: usize,
    area_initial: f64,
    area_final: f64,
    change_db: f64,
}

#[derive(Serialize)]
struct OptimizeSummary<'a> {
    weight_case: &'a str,
    converged: bool,
    iterations: usize,
    evaluations: usize,
    num_samples: usize,
    delta: f64,
    f_initial: f64,
    f_final: f64,
    isr_normalized: &'a [f64],
    ccf_normalized: &'a [f64],
    /// `[(1 - delta) B_p(0) - B_p, B_p - (1 + delta) B_p(0)]`, both `<= 0`
    /// when feasible.
    residuals: &'a [[f64; 2]],
    beta0_sq: &'a [f64],
    members: Vec<MemberChange>,
    pairs: Vec<PairChange>,
}

/// Family design run. Artifacts are written for the best iterate even
/// when the solver stops at its iteration cap.
pub fn optimize(cfg: &RunConfig, out: &mut Writer) -> CmdResult<Outcome> {
    let family = cfg
        .family
        .as_ref()
        .ok_or_else(|| ConfigError::new("family", "required for optimize-family"))?;
    let members = family.initial_members(cfg.seed)?;
    let problem_cfg = ProblemConfig {
        weights: family
            .weights
            .weights(family.members)
            .map_err(|e| ConfigError::new("family.weights", e))?,
        delta: family.delta,
        taper: family.taper,
        seed: cfg.seed,
        settings: family.settings.clone(),
    };
    let problem = FamilyDesignProblem::new(members, problem_cfg)?;
    let trace = optimize_family(&problem)?;
    let finals = trace.final_members(&problem)?;
    let label = family.weights.label();

    out.json(
        "coefficients.json",
        &Coefficients {
            weight_case: label,
            initial: problem.members(),
            last: &finals,
        },
    )?;
    write_trace_csv(out, &trace, problem.pairs())?;
    out.json("trace.json", &trace)?;

    let grid = problem.grid();
    let before: Vec<SampledWaveform> = problem
        .members()
        .iter()
        .map(|p| synthesize(p, grid))
        .collect::<mtsfm::Result<_>>()?;
    let after: Vec<SampledWaveform> = finals
        .iter()
        .map(|p| synthesize(p, grid))
        .collect::<mtsfm::Result<_>>()?;
    for i in 0..before.len() {
        let (a, b) = (acf_numeric(&before[i]), acf_numeric(&after[i]));
        write_before_after(out, &format!("w{i}_acf.csv"), "acf", &a, &b)?;
    }
    for &(i, j) in problem.pairs() {
        let a = ccf_numeric(&before[i], &before[j])?;
        let b = ccf_numeric(&after[i], &after[j])?;
        write_before_after(out, &format!("ccf_{i}_{j}.csv"), "ccf", &a, &b)?;
    }

    let init = &trace.initial_summary;
    let last = &trace.final_summary;
    let member_changes = init
        .members
        .iter()
        .zip(&last.members)
        .enumerate()
        .map(|(index, (a, b))| MemberChange {
            index,
            isr_initial: a.isr.isr,
            isr_final: b.isr.isr,
            isr_initial_db: a.isr.isr_db,
            isr_final_db: b.isr.isr_db,
            isr_final_frozen_null_db: power_db(b.isr_frozen_null),
            tau_m_initial: a.isr.tau_m,
            tau_m_final: b.isr.tau_m,
            mainlobe_width_initial: 2.0 * a.isr.tau_m,
            mainlobe_width_final: 2.0 * b.isr.tau_m,
            rms_bandwidth_sq_initial: a.rms_bandwidth_sq,
            rms_bandwidth_sq_final: b.rms_bandwidth_sq,
        })
        .collect();
    let pair_changes = problem
        .pairs()
        .iter()
        .zip(init.pair_areas.iter().zip(&last.pair_areas))
        .map(|(&(first, second), (&a, &b))| PairChange {
            first,
            second,
            area_initial: a,
            area_final: b,
            change_db: power_db(b / a),
        })
        .collect();
    let iterations = trace
        .records
        .iter()
        .filter(|r| r.restart == trace.best_restart)
        .map(|r| r.iteration)
        .max()
        .unwrap_or(0);
    out.json(
        "summary.json",
        &OptimizeSummary {
            weight_case: label,
            converged: trace.converged,
            iterations,
            evaluations: trace.evaluations,
            num_samples: grid.num_samples(),
            delta: problem.delta(),
            f_initial: trace.f_initial,
            f_final: trace.f_final,
            isr_normalized: &trace.final_breakdown.isr,
            ccf_normalized: &trace.final_breakdown.ccf,
            residuals: &trace.final_residuals,
            beta0_sq: problem.initial_bandwidth_sq(),
            members: member_changes,
            pairs: pair_changes,
        },
    )?;
    Ok(Outcome {
        converged: trace.converged,
    })
}

fn write_samples(out: &mut Writer, name: &str, p: &WaveformParams, w: &SampledWaveform) -> CmdResult<()> {
    let grid = w.grid();
    let rows = w
        .samples()
        .iter()
        .enumerate()
        .map(|(n, s)| {
            let t = grid.time(n);
            Ok(vec![t, s.re, s.im, modulation_function(p, t)?])
        })
        .collect::<mtsfm::Result<Vec<_>>>()?;
    out.csv(name, "samples", &["time_s", "re", "im", "inst_freq_hz"], &rows)?;
    Ok(())
}

fn write_correlation(
    out: &mut Writer,
    name: &str,
    kind: &str,
    num: &CorrelationResult,
    closed: Option<&CorrelationResult>,
) -> CmdResult<()> {
    let mut header = vec!["delay_s", "delay_over_t", "numeric_db"];
    if closed.is_some() {
        header.push("closed_form_db");
    }
    let rows = num
        .delays
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let mut row = vec![tau, tau / num.duration, out.db(num.values[k].norm_sqr())];
            if let Some(c) = closed {
                row.push(out.db(c.values[k].norm_sqr()));
            }
            row
        })
        .collect::<Vec<_>>();
    out.csv(name, kind, &header, &rows)?;
    Ok(())
}

fn write_before_after(
    out: &mut Writer,
    name: &str,
    kind: &str,
    before: &CorrelationResult,
    after: &CorrelationResult,
) -> CmdResult<()> {
    let rows = before
        .delays
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            vec![
                tau,
                tau / before.duration,
                out.db(before.values[k].norm_sqr()),
                out.db(after.values[k].norm_sqr()),
            ]
        })
        .collect::<Vec<_>>();
    out.csv(name, kind, &["delay_s", "delay_over_t", "initial_db", "final_db"], &rows)?;
    Ok(())
}

fn write_ambiguity(
    out: &mut Writer,
    name: &str,
    opts: &ExportOptions,
    w1: &SampledWaveform,
    w2: &SampledWaveform,
) -> CmdResult<()> {
    let dopplers = opts.dopplers(w1.grid().duration());
    let surf = ambiguity_numeric(w1, w2, opts.delay_stride, &dopplers)?;
    let db: Vec<Vec<f64>> = surf
        .values
        .iter()
        .map(|row| row.iter().map(|v| out.db(v.norm_sqr())).collect())
        .collect();
    out.matrix(
        name,
        "ambiguity_db",
        ("doppler_hz", &surf.dopplers),
        ("delay_s", &surf.delays),
        &db,
    )?;
    Ok(())
}

fn write_trace_csv(
    out: &mut Writer,
    trace: &mtsfm::optimizer::OptimizationTrace,
    pairs: &[(usize, usize)],
) -> CmdResult<()> {
    let members = trace.final_residuals.len();
    let mut header: Vec<String> = vec!["iteration".into(), "restart".into(), "f".into()];
    header.extend((0..members).map(|p| format!("isr_norm_{p}")));
    header.extend(pairs.iter().map(|(i, j)| format!("ccf_norm_{i}_{j}")));
    for p in 0..members {
        header.push(format!("residual_lower_{p}"));
        header.push(format!("residual_upper_{p}"));
    }
    header.push("step_norm".into());
    header.push("evaluations".into());
    let rows: Vec<Vec<f64>> = trace
        .records
        .iter()
        .map(|r| {
            let mut row = vec![r.iteration as f64, r.restart as f64, r.f];
            row.extend(&r.isr_normalized);
            row.extend(&r.ccf_normalized);
            for res in &r.residuals {
                row.extend(res);
            }
            row.push(r.step_norm);
            row.push(r.evaluations as f64);
            row
        })
        .collect();
    out.csv("trace.csv", "trace", &header, &rows)?;
    Ok(())
}
