//! Reproducible Monte Carlo experiments comparing the three-channel
//! pipeline against a full-rate baseline.
//!
//! Each trial draws component frequencies, amplitudes, and phases from a
//! generator seeded with `master_seed XOR trial_index`, synthesizes the
//! three sub-Nyquist channels plus one full-rate sequence over the same
//! sample count, and runs both estimators. Keeping the trial seed
//! independent of the SNR grid gives common random numbers across SNR
//! points, so accuracy curves move smoothly. Trials run in parallel;
//! results are collected in trial order, so every sweep is bit-reproducible
//! regardless of thread count.

use std::time::{Duration, Instant};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{synthesize, synthesize_multichannel, ChannelConfig, SignalSpec, Sinusoid};
use crate::output::{csv_row, format_sig9};
use crate::rng::range_f64;
use crate::screen::{run_pipeline, PipelineResult, SelectionMode};
use crate::subspace::{esprit, fold_to_hertz};
use crate::unfold::pairwise_coprime;

/// An estimate counts as a success when its error metric is below this many
/// hertz.
pub const SUCCESS_THRESHOLD_HZ: f64 = 0.05;

/// Largest window the default experiment geometry uses.
const DEFAULT_WINDOW_CAP: usize = 100;

/// Largest multiple of `factor` not exceeding `snapshots` or the default
/// window cap, whichever is smaller. The screening stages need the window to
/// be a multiple of the unfolding factor, so the default is quantized to the
/// smallest factor of the triple; keeping it at or below the snapshot count
/// keeps the sample covariance full rank, which pushes the unfolding noise
/// threshold well below the SNR range the stock experiments probe.
pub fn default_pipeline_window(factor: u32, snapshots: usize) -> usize {
    if factor == 0 {
        return 0;
    }
    let cap = snapshots.min(DEFAULT_WINDOW_CAP);
    cap / factor as usize * factor as usize
}

/// How each trial picks its tone parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum FreqGen {
    /// Every trial uses these exact components.
    Fixed(Vec<Sinusoid>),
    /// Frequencies uniform over `band` with pairwise spacing at least
    /// `min_sep_hz`; amplitudes uniform over `amp_range`; phases uniform
    /// over a full turn.
    Uniform {
        band: (f64, f64),
        min_sep_hz: f64,
        amp_range: (f64, f64),
    },
}

/// Full description of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub f_h: f64,
    pub factors: (u32, u32, u32),
    /// Model orders to sweep (success) or the single order to hold (MSE).
    pub k_values: Vec<usize>,
    pub freq_gen: FreqGen,
    pub num_trials: usize,
    /// Snapshot count `T`; every channel gets `T + window - 1` samples.
    pub snapshots: usize,
    /// Snapshot window; `None` picks the largest multiple of the smallest
    /// factor not exceeding the snapshot count (capped at 100).
    pub window: Option<usize>,
    /// SNR grid in dB. Empty means noiseless.
    pub snr_db: Vec<f64>,
    pub seed: u64,
    pub mode: SelectionMode,
    pub success_threshold_hz: f64,
}

impl ExperimentConfig {
    /// Geometry shared by the stock experiments: 100 Hz band undersampled
    /// by (7, 8, 9), 100 snapshots, tones drawn uniformly with 0.1 Hz
    /// minimum spacing and amplitudes in [0.1, 1].
    fn stock(k_values: Vec<usize>, snr_db: Vec<f64>) -> Self {
        Self {
            f_h: 100.0,
            factors: (7, 8, 9),
            k_values,
            freq_gen: FreqGen::Uniform {
                band: (0.0, 100.0),
                min_sep_hz: 0.1,
                amp_range: (0.1, 1.0),
            },
            num_trials: 100,
            snapshots: 100,
            window: None,
            snr_db,
            seed: 1,
            mode: SelectionMode::CombinedScore,
            success_threshold_hz: SUCCESS_THRESHOLD_HZ,
        }
    }

    /// Success-probability sweep over tone counts 1 ..= 8 at 20 dB.
    pub fn success_defaults() -> Self {
        Self::stock((1..=8).collect(), vec![20.0])
    }

    /// Accuracy sweep for three tones over 10 ..= 30 dB.
    pub fn mse_defaults() -> Self {
        Self::stock(vec![3], vec![10.0, 15.0, 20.0, 25.0, 30.0])
    }

    /// Smallest undersampling factor of the triple.
    pub fn min_factor(&self) -> u32 {
        self.factors.0.min(self.factors.1).min(self.factors.2)
    }

    /// Snapshot window actually used.
    pub fn window_len(&self) -> usize {
        self.window
            .unwrap_or_else(|| default_pipeline_window(self.min_factor(), self.snapshots))
    }

    /// Samples synthesized per channel.
    pub fn samples_per_channel(&self) -> usize {
        self.snapshots + self.window_len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_h.is_finite() && self.f_h > 0.0) {
            return Err(Error::Config(format!("band edge f_h = {} Hz", self.f_h)));
        }
        if !pairwise_coprime(self.factors) {
            let (a, b, c) = self.factors;
            return Err(Error::Config(format!(
                "factors ({a}, {b}, {c}) are not pairwise coprime"
            )));
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::Config("tone counts must be positive".into()));
        }
        if self.num_trials == 0 {
            return Err(Error::Config("at least one trial is required".into()));
        }
        if self.snapshots < 2 {
            return Err(Error::Config("at least two snapshots are required".into()));
        }
        let window = self.window_len();
        let k_max = *self.k_values.iter().max().unwrap();
        if !window.is_multiple_of(self.min_factor() as usize) {
            return Err(Error::InvalidWindow(format!(
                "window {window} is not a multiple of the smallest factor {}",
                self.min_factor()
            )));
        }
        if window <= k_max + 1 {
            return Err(Error::InvalidWindow(format!(
                "window {window} cannot resolve {k_max} tones"
            )));
        }
        for &snr in &self.snr_db {
            if !snr.is_finite() {
                return Err(Error::Config(format!("SNR {snr} dB")));
            }
        }
        if self.success_threshold_hz <= 0.0 || self.success_threshold_hz.is_nan() {
            return Err(Error::Config("success threshold must be positive".into()));
        }
        match &self.freq_gen {
            FreqGen::Fixed(components) => {
                SignalSpec::new(components.clone(), self.f_h, 0.0, 0)?;
                for &k in &self.k_values {
                    if k != components.len() {
                        return Err(Error::Config(format!(
                            "fixed generator provides {} tones but the sweep asks for {k}",
                            components.len()
                        )));
                    }
                }
            }
            FreqGen::Uniform {
                band,
                min_sep_hz,
                amp_range,
            } => {
                let (lo, hi) = *band;
                if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi && hi <= self.f_h) {
                    return Err(Error::Config(format!("band ({lo}, {hi}) Hz")));
                }
                if *min_sep_hz <= 0.0 || min_sep_hz.is_nan() {
                    return Err(Error::Config("minimum spacing must be positive".into()));
                }
                if (k_max as f64 - 1.0) * min_sep_hz > 0.5 * (hi - lo) {
                    return Err(Error::Config(format!(
                        "cannot space {k_max} tones {min_sep_hz} Hz apart in ({lo}, {hi}) Hz"
                    )));
                }
                let (alo, ahi) = *amp_range;
                if !(alo.is_finite() && ahi.is_finite() && 0.0 < alo && alo <= ahi) {
                    return Err(Error::Config(format!("amplitude range ({alo}, {ahi})")));
                }
            }
        }
        Ok(())
    }
}

/// One method's outcome on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub true_freqs: Vec<f64>,
    pub estimated_freqs: Vec<f64>,
    pub mse_hz: f64,
    pub success: bool,
    pub collision: bool,
    pub elapsed: Duration,
}

/// Both methods' outcomes on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub proposed: TrialRecord,
    pub baseline: TrialRecord,
}

/// Root error metric: `sqrt(sum of squared errors) / K` after sorting both
/// lists, in hertz.
pub fn mse_metric(estimated: &[f64], truth: &[f64]) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: estimated.len(),
            right: truth.len(),
        });
    }
    if estimated.is_empty() {
        return Err(Error::LengthMismatch { left: 0, right: 0 });
    }
    let mut est = estimated.to_vec();
    let mut tru = truth.to_vec();
    est.sort_by(|a, b| a.partial_cmp(b).unwrap());
    tru.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sum_sq: f64 = est.iter().zip(&tru).map(|(e, t)| (e - t) * (e - t)).sum();
    Ok(sum_sq.sqrt() / truth.len() as f64)
}

/// Draws trial components: frequencies by rejection until the spacing
/// constraint holds, then amplitudes, then phases, in that fixed order.
fn draw_components(rng: &mut ChaCha8Rng, k: usize, gen: &FreqGen) -> Result<Vec<Sinusoid>> {
    match gen {
        FreqGen::Fixed(components) => Ok(components.clone()),
        FreqGen::Uniform {
            band,
            min_sep_hz,
            amp_range,
        } => {
            let (lo, hi) = *band;
            let mut freqs: Option<Vec<f64>> = None;
            for _ in 0..10_000 {
                let draw: Vec<f64> = (0..k).map(|_| range_f64(rng, lo, hi)).collect();
                if draw.iter().any(|&f| f <= lo) {
                    continue;
                }
                let mut sorted = draw.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if sorted.windows(2).all(|w| w[1] - w[0] >= *min_sep_hz) {
                    freqs = Some(draw);
                    break;
                }
            }
            let freqs = freqs.ok_or_else(|| {
                Error::Config(format!("could not draw {k} tones {min_sep_hz} Hz apart"))
            })?;
            let amps: Vec<f64> = (0..k)
                .map(|_| range_f64(rng, amp_range.0, amp_range.1))
                .collect();
            let phases: Vec<f64> = (0..k)
                .map(|_| range_f64(rng, 0.0, std::f64::consts::TAU))
                .collect();
            Ok(freqs
                .into_iter()
                .zip(amps)
                .zip(phases)
                .map(|((f, a), p)| Sinusoid::new(f, a, p))
                .collect())
        }
    }
}

/// Full-rate reference: the same invariance estimator on a factor-1
/// sequence of identical length and window.
pub fn baseline_estimate(
    spec: &SignalSpec,
    snapshots: usize,
    window: usize,
    k: usize,
) -> Result<Vec<f64>> {
    let seq = synthesize(spec, ChannelConfig::new(1), snapshots + window - 1)?;
    let folded = esprit(&seq, k, window)?;
    let mut freqs = fold_to_hertz(&folded, spec.f_h, 1);
    freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(freqs)
}

/// Grades an estimate against the truth. A wrong-length estimate (possible
/// under fold collisions) counts as a gross failure at band scale so means
/// stay finite and comparable.
fn grade(
    estimated: Vec<f64>,
    truth: &[f64],
    f_h: f64,
    threshold: f64,
    collision: bool,
    elapsed: Duration,
) -> TrialRecord {
    let mse_hz = mse_metric(&estimated, truth).unwrap_or(f_h);
    TrialRecord {
        true_freqs: truth.to_vec(),
        estimated_freqs: estimated,
        mse_hz,
        success: mse_hz < threshold,
        collision,
        elapsed,
    }
}

fn run_trial(cfg: &ExperimentConfig, k: usize, snr_db: Option<f64>, trial: u64) -> Result<Trial> {
    let trial_seed = cfg.seed ^ trial;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let components = draw_components(&mut rng, k, &cfg.freq_gen)?;
    let mut spec = SignalSpec::new(components, cfg.f_h, 0.0, trial_seed)?;
    if let Some(snr) = snr_db {
        spec.noise_variance = spec.variance_for_snr(snr);
    }
    let truth = spec.frequencies();
    let window = cfg.window_len();
    let samples = cfg.samples_per_channel();
    let (a, b, c) = cfg.factors;

    let start = Instant::now();
    let channels = synthesize_multichannel(
        &spec,
        &[
            ChannelConfig::new(a),
            ChannelConfig::new(b),
            ChannelConfig::new(c),
        ],
        samples,
    )?;
    let channels: [_; 3] = channels.try_into().expect("three channels requested");
    let proposed = match run_pipeline(&channels, k, window, cfg.mode) {
        Ok(result) => grade(
            result.final_freqs.clone(),
            &truth,
            cfg.f_h,
            cfg.success_threshold_hz,
            result.collision_flag,
            start.elapsed(),
        ),
        // A trial the pipeline cannot grade at all is a gross failure, not
        // a reason to abort the sweep.
        Err(_) => grade(
            Vec::new(),
            &truth,
            cfg.f_h,
            cfg.success_threshold_hz,
            true,
            start.elapsed(),
        ),
    };

    let start = Instant::now();
    let baseline = match baseline_estimate(&spec, cfg.snapshots, window, k) {
        Ok(freqs) => grade(
            freqs,
            &truth,
            cfg.f_h,
            cfg.success_threshold_hz,
            false,
            start.elapsed(),
        ),
        Err(_) => grade(
            Vec::new(),
            &truth,
            cfg.f_h,
            cfg.success_threshold_hz,
            true,
            start.elapsed(),
        ),
    };

    Ok(Trial { proposed, baseline })
}

fn run_batch(cfg: &ExperimentConfig, k: usize, snr_db: Option<f64>) -> Result<Vec<Trial>> {
    (0..cfg.num_trials as u64)
        .into_par_iter()
        .map(|trial| run_trial(cfg, k, snr_db, trial))
        .collect()
}

/// One row of a success sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessRow {
    pub k: usize,
    pub trials: usize,
    pub success_proposed: f64,
    pub success_baseline: f64,
}

/// Success-probability sweep over tone counts.
#[derive(Debug, Clone)]
pub struct SuccessSweep {
    pub rows: Vec<SuccessRow>,
    /// Per-trial records aligned with `rows`.
    pub records: Vec<Vec<Trial>>,
}

impl SuccessSweep {
    /// CSV with header `K,trials,success_proposed,success_baseline`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("K,trials,success_proposed,success_baseline\n");
        for row in &self.rows {
            out.push_str(&csv_row(&[
                row.k.to_string(),
                row.trials.to_string(),
                format_sig9(row.success_proposed),
                format_sig9(row.success_baseline),
            ]));
            out.push('\n');
        }
        out
    }
}

/// Runs the success sweep: for each tone count, the fraction of trials in
/// which each method lands within the success threshold.
///
/// Uses the first SNR grid entry (noiseless when the grid is empty); a grid
/// with several entries is ambiguous here and rejected.
pub fn run_success_sweep(cfg: &ExperimentConfig) -> Result<SuccessSweep> {
    cfg.validate()?;
    if cfg.snr_db.len() > 1 {
        return Err(Error::Config(
            "success sweep expects at most one SNR point; sweep tone counts, not SNR".into(),
        ));
    }
    let snr = cfg.snr_db.first().copied();
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &k in &cfg.k_values {
        let trials = run_batch(cfg, k, snr)?;
        let n = trials.len() as f64;
        rows.push(SuccessRow {
            k,
            trials: trials.len(),
            success_proposed: trials.iter().filter(|t| t.proposed.success).count() as f64 / n,
            success_baseline: trials.iter().filter(|t| t.baseline.success).count() as f64 / n,
        });
        records.push(trials);
    }
    Ok(SuccessSweep { rows, records })
}

/// One row of an accuracy sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub snr_db: f64,
    pub mse_proposed: f64,
    pub mse_baseline: f64,
}

/// Accuracy sweep over the SNR grid at a fixed tone count.
#[derive(Debug, Clone)]
pub struct MseSweep {
    pub rows: Vec<MseRow>,
    /// Per-trial records aligned with `rows`.
    pub records: Vec<Vec<Trial>>,
}

impl MseSweep {
    /// CSV with header `snr_db,mse_proposed,mse_baseline`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("snr_db,mse_proposed,mse_baseline\n");
        for row in &self.rows {
            out.push_str(&csv_row(&[
                format_sig9(row.snr_db),
                format_sig9(row.mse_proposed),
                format_sig9(row.mse_baseline),
            ]));
            out.push('\n');
        }
        out
    }
}

/// Runs the accuracy sweep: mean error metric of both methods at every SNR
/// grid point, single tone count, common random numbers across the grid.
pub fn run_mse_sweep(cfg: &ExperimentConfig) -> Result<MseSweep> {
    cfg.validate()?;
    if cfg.k_values.len() != 1 {
        return Err(Error::Config(
            "accuracy sweep expects exactly one tone count; sweep SNR, not K".into(),
        ));
    }
    if cfg.snr_db.is_empty() {
        return Err(Error::Config("accuracy sweep needs an SNR grid".into()));
    }
    let k = cfg.k_values[0];
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &snr in &cfg.snr_db {
        let trials = run_batch(cfg, k, Some(snr))?;
        let n = trials.len() as f64;
        rows.push(MseRow {
            snr_db: snr,
            mse_proposed: trials.iter().map(|t| t.proposed.mse_hz).sum::<f64>() / n,
            mse_baseline: trials.iter().map(|t| t.baseline.mse_hz).sum::<f64>() / n,
        });
        records.push(trials);
    }
    Ok(MseSweep { rows, records })
}

/// A single fully specified signal to run once through the pipeline.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub spec: SignalSpec,
    pub factors: (u32, u32, u32),
    pub snapshots: usize,
    pub window: Option<usize>,
    pub mode: SelectionMode,
}

/// Pipeline output plus the per-candidate score table.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub pipeline: PipelineResult,
    pub true_freqs: Vec<f64>,
    pub mse_hz: f64,
}

impl ScenarioResult {
    /// CSV with header `candidate_hz,stage2_score,stage3_score,combined,selected`,
    /// rows ascending by candidate frequency, stage scores max-normalized.
    pub fn to_csv(&self) -> String {
        let eligible = &self.pipeline.diagnostics.eligible;
        let first = self.pipeline.stage_spectra[0].normalized();
        let second = self.pipeline.stage_spectra[1].normalized();
        let combined = &self.pipeline.diagnostics.combined;
        let selected = &self.pipeline.diagnostics.selected;

        let mut order: Vec<usize> = (0..eligible.len()).collect();
        let freqs = eligible.frequencies();
        order.sort_by(|&i, &j| freqs[i].partial_cmp(&freqs[j]).unwrap());

        let mut out = String::from("candidate_hz,stage2_score,stage3_score,combined,selected\n");
        for i in order {
            out.push_str(&csv_row(&[
                format_sig9(freqs[i]),
                format_sig9(first[i]),
                format_sig9(second[i]),
                format_sig9(combined[i]),
                if selected.contains(&i) {
                    "1".into()
                } else {
                    "0".into()
                },
            ]));
            out.push('\n');
        }
        out
    }
}

/// Synthesizes one signal and runs the pipeline once, returning the result
/// with its score table and error metric.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    cfg.spec.validate()?;
    if !pairwise_coprime(cfg.factors) {
        let (a, b, c) = cfg.factors;
        return Err(Error::Config(format!(
            "factors ({a}, {b}, {c}) are not pairwise coprime"
        )));
    }
    if cfg.snapshots < 2 {
        return Err(Error::Config("at least two snapshots are required".into()));
    }
    let (a, b, c) = cfg.factors;
    let min_factor = a.min(b).min(c);
    let window = cfg
        .window
        .unwrap_or_else(|| default_pipeline_window(min_factor, cfg.snapshots));
    let samples = cfg.snapshots + window - 1;
    let channels = synthesize_multichannel(
        &cfg.spec,
        &[
            ChannelConfig::new(a),
            ChannelConfig::new(b),
            ChannelConfig::new(c),
        ],
        samples,
    )?;
    let channels: [_; 3] = channels.try_into().expect("three channels requested");
    let pipeline = run_pipeline(&channels, cfg.spec.num_components(), window, cfg.mode)?;
    let true_freqs = cfg.spec.frequencies();
    let mse_hz = mse_metric(&pipeline.final_freqs, &true_freqs).unwrap_or(cfg.spec.f_h);
    Ok(ScenarioResult {
        pipeline,
        true_freqs,
        mse_hz,
    })
}
