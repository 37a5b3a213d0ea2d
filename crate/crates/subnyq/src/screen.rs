//! Candidate screening against the remaining channels, and the full
//! three-channel pipeline.
//!
//! Every unfolded candidate predicts exactly how a tone at that frequency
//! would phase-advance on another channel. Projecting that steering vector
//! onto the noise subspace of the other channel's covariance measures how
//! inconsistent the candidate is with what that channel recorded: true
//! frequencies leave almost no residual, false lifts leave a large one. The
//! reciprocal of the residual power is the familiar noise-subspace
//! pseudo-spectrum, evaluated only at the finite candidate list instead of a
//! frequency grid.
//!
//! With the window length a multiple of the unfolding factor, the steering
//! vectors of the `factor` lifts of one folded frequency are exactly
//! orthogonal on a coprime channel, which keeps the scores of distinct lifts
//! cleanly separated.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ChannelSequence;
use crate::subspace::{self, FoldedEstimate};
use crate::unfold::{self, EligibleSet};

/// Noiseless residual powers underflow to rounding noise, so the projection
/// power is floored at this value times the window length before inversion.
/// Candidates inside the signal subspace then share one finite ceiling
/// score instead of meaningless inverted rounding errors.
pub const PROJECTION_FLOOR: f64 = 1e-12;

/// Fraction of the window's frequency resolution below which two folded
/// estimates are treated as one tone.
const FOLD_MERGE_BINS: f64 = 0.25;

/// Collapses folded estimates too close for the window to tell apart.
///
/// When several tones share one folded frequency, the folded covariance is
/// effectively rank deficient, and the estimator pads its output with copies
/// split off the shared fold by far less than the window resolves. Each copy
/// unfolds to its own near-identical candidate list, and those duplicates
/// compete for selection slots that should go to distinct lifts of the
/// shared fold. Replacing such a cluster with its mean keeps one candidate
/// per lift. Folds wrap at the channel rate, so the lowest and highest
/// clusters may also merge across zero.
fn merge_indistinct_folds(folds: Vec<f64>, rate: f64, window_len: usize) -> (Vec<f64>, bool) {
    if folds.len() < 2 {
        return (folds, false);
    }
    let radius = rate * FOLD_MERGE_BINS / window_len as f64;
    let mut sorted = folds;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut groups: Vec<Vec<f64>> = vec![vec![sorted[0]]];
    for &fold in &sorted[1..] {
        let group = groups.last_mut().unwrap();
        if fold - *group.last().unwrap() < radius {
            group.push(fold);
        } else {
            groups.push(vec![fold]);
        }
    }
    if groups.len() > 1 {
        let gap_across_zero = groups[0][0] + rate - *groups.last().unwrap().last().unwrap();
        if gap_across_zero < radius {
            // Shift the top cluster down one period so the mean lands near
            // zero, then wrap it back into the band below.
            let top = groups.pop().unwrap();
            groups[0].extend(top.into_iter().map(|fold| fold - rate));
        }
    }
    let merged = groups.len() < sorted.len();
    let out = groups
        .iter()
        .map(|group| (group.iter().sum::<f64>() / group.len() as f64).rem_euclid(rate))
        .collect();
    (out, merged)
}

/// Phase pattern a candidate predicts on a screening channel.
#[derive(Debug, Clone)]
pub struct SteeringVector {
    entries: DVector<Complex64>,
    fraction: f64,
    alpha: u32,
}

impl SteeringVector {
    pub fn entries(&self) -> &DVector<Complex64> {
        &self.entries
    }

    /// Folded frequency as a fraction of the band, `[0, 1 / unfold_factor)`.
    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }
}

/// Builds the steering vector of the candidate `(g + alpha / a) * f_h` as
/// seen by a channel undersampling by `screen_factor`: entry `n - 1` is
/// `exp(j 2 pi screen_factor n (g + alpha / a))` for `n = 1 ..= window_len`.
pub fn steering(
    fraction: f64,
    alpha: u32,
    unfold_factor: u32,
    screen_factor: u32,
    window_len: usize,
) -> SteeringVector {
    debug_assert!(unfold_factor >= 1 && screen_factor >= 1 && window_len >= 1);
    debug_assert!((0.0..1.0 / unfold_factor as f64).contains(&fraction));
    debug_assert!(alpha < unfold_factor);
    let step = screen_factor as f64 * (fraction + alpha as f64 / unfold_factor as f64);
    let entries = DVector::from_fn(window_len, |i, _| {
        let turns = step * (i + 1) as f64;
        Complex64::from_polar(1.0, std::f64::consts::TAU * (turns - turns.floor()))
    });
    SteeringVector {
        entries,
        fraction,
        alpha,
    }
}

/// Score of one candidate frequency on one screening channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub freq_hz: f64,
    pub value: f64,
}

/// Pseudo-spectrum values over an eligible set, aligned index for index
/// with the set's candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSpectrum {
    scores: Vec<CandidateScore>,
    screen_factor: u32,
    window_len: usize,
}

impl PseudoSpectrum {
    pub fn scores(&self) -> &[CandidateScore] {
        &self.scores
    }

    pub fn screen_factor(&self) -> u32 {
        self.screen_factor
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Raw reciprocal residual powers.
    pub fn values(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.value).collect()
    }

    /// Values scaled so the largest is one.
    pub fn normalized(&self) -> Vec<f64> {
        let max = self.scores.iter().map(|s| s.value).fold(0.0f64, f64::max);
        if max <= 0.0 {
            return vec![0.0; self.scores.len()];
        }
        self.scores.iter().map(|s| s.value / max).collect()
    }

    /// Candidate indices by descending value; ties go to the lower frequency.
    pub fn ranking(&self) -> Vec<usize> {
        ranking_of(
            &self.values(),
            &self.scores.iter().map(|s| s.freq_hz).collect::<Vec<_>>(),
        )
    }
}

fn ranking_of(values: &[f64], freqs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| {
        values[j]
            .partial_cmp(&values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(
                freqs[i]
                    .partial_cmp(&freqs[j])
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
    });
    idx
}

/// Scores every candidate of `eligible` against a screening channel.
///
/// The window length must be a multiple of the eligible set's factor (that
/// is what makes distinct lifts orthogonal) and the screening factor must be
/// coprime to it. The model order `k` is the number of tones assumed when
/// splitting the screening channel's covariance.
pub fn pseudo_spectrum(
    eligible: &EligibleSet,
    screen_seq: &ChannelSequence,
    k: usize,
    window_len: usize,
) -> Result<PseudoSpectrum> {
    let unfold_factor = eligible.factor();
    let screen_factor = screen_seq.factor();
    if !unfold::coprime(unfold_factor, screen_factor) {
        return Err(Error::NotCoprime {
            a: unfold_factor,
            b: screen_factor,
        });
    }
    if eligible.band_edge_hz() != screen_seq.band_edge_hz() {
        return Err(Error::BandMismatch {
            expected: eligible.band_edge_hz(),
            got: screen_seq.band_edge_hz(),
        });
    }
    if window_len == 0 || !window_len.is_multiple_of(unfold_factor as usize) {
        return Err(Error::InvalidWindow(format!(
            "window of {window_len} samples is not a multiple of the unfolding factor {unfold_factor}"
        )));
    }

    let snapshots = subspace::build_snapshots(screen_seq, window_len)?;
    let cov = subspace::estimate_covariance(&snapshots);
    let split = subspace::eigen_split(&cov, k)?;
    let noise_basis = split.noise_basis();

    let floor = PROJECTION_FLOOR * window_len as f64;
    let scores = (0..eligible.len())
        .map(|i| {
            let (fraction, alpha) = eligible.fraction_of(i);
            let v = steering(fraction, alpha, unfold_factor, screen_factor, window_len);
            let residual = (noise_basis.adjoint() * v.entries()).norm_squared();
            CandidateScore {
                freq_hz: eligible.candidates()[i].freq_hz,
                value: 1.0 / residual.max(floor),
            }
        })
        .collect();
    Ok(PseudoSpectrum {
        scores,
        screen_factor,
        window_len,
    })
}

/// How the pipeline reduces two stage spectra to `K` survivors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionMode {
    /// Rank by the product of the max-normalized stage spectra.
    #[default]
    CombinedScore,
    /// Intersect the per-stage top `K` sets; fill any shortfall by combined
    /// rank.
    StageIntersection,
}

/// Everything the pipeline decided beyond the final list.
#[derive(Debug, Clone)]
pub struct PipelineDiagnostics {
    /// Factor of the channel the folded frequencies came from.
    pub esprit_factor: u32,
    /// Raw folded estimate of that channel.
    pub folded: FoldedEstimate,
    /// Candidate set the stages scored.
    pub eligible: EligibleSet,
    /// Product of the two max-normalized stage spectra, per candidate.
    pub combined: Vec<f64>,
    /// Selected candidate indices, ascending by frequency.
    pub selected: Vec<usize>,
    /// How many survivors intersection mode had to fill in by combined rank.
    pub intersection_shortfall: usize,
}

/// Output of the three-channel pipeline.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    /// The `K` estimated frequencies, ascending. Shorter only when a fold
    /// collision left fewer candidates than `K`.
    pub final_freqs: Vec<f64>,
    /// Stage spectra in screening order (ascending screen factor).
    pub stage_spectra: [PseudoSpectrum; 2],
    /// Raised when the folded covariance looked rank deficient, folded
    /// estimates sat too close to count as distinct tones, or the candidate
    /// list collapsed below `K`: results need a second look.
    pub collision_flag: bool,
    pub mode: SelectionMode,
    pub diagnostics: PipelineDiagnostics,
}

/// Runs the full pipeline, extracting folded frequencies from the channel
/// with the smallest factor and screening against the other two.
pub fn run_pipeline(
    sequences: &[ChannelSequence; 3],
    k: usize,
    window_len: usize,
    mode: SelectionMode,
) -> Result<PipelineResult> {
    let mut esprit_index = 0;
    for i in 1..3 {
        if sequences[i].factor() < sequences[esprit_index].factor() {
            esprit_index = i;
        }
    }
    run_pipeline_from(sequences, esprit_index, k, window_len, mode)
}

/// Same as [`run_pipeline`] with an explicit choice of the channel the
/// folded frequencies are extracted from.
pub fn run_pipeline_from(
    sequences: &[ChannelSequence; 3],
    esprit_index: usize,
    k: usize,
    window_len: usize,
    mode: SelectionMode,
) -> Result<PipelineResult> {
    if esprit_index >= 3 {
        return Err(Error::Config(format!(
            "channel index {esprit_index} out of range"
        )));
    }
    let factors = (
        sequences[0].factor(),
        sequences[1].factor(),
        sequences[2].factor(),
    );
    if !unfold::coprime(factors.0, factors.1) {
        return Err(Error::NotCoprime {
            a: factors.0,
            b: factors.1,
        });
    }
    if !unfold::coprime(factors.0, factors.2) {
        return Err(Error::NotCoprime {
            a: factors.0,
            b: factors.2,
        });
    }
    if !unfold::coprime(factors.1, factors.2) {
        return Err(Error::NotCoprime {
            a: factors.1,
            b: factors.2,
        });
    }
    let f_h = sequences[0].band_edge_hz();
    for seq in sequences.iter().skip(1) {
        if seq.band_edge_hz() != f_h {
            return Err(Error::BandMismatch {
                expected: f_h,
                got: seq.band_edge_hz(),
            });
        }
    }

    let source = &sequences[esprit_index];
    let folded = subspace::esprit(source, k, window_len)?;
    let folded_hz = subspace::fold_to_hertz(&folded, f_h, source.factor());
    let (folded_hz, folds_merged) =
        merge_indistinct_folds(folded_hz, source.sample_rate_hz(), window_len);
    let eligible = unfold::unfold(&folded_hz, source.factor(), f_h)?;

    let mut screen_order: Vec<usize> = (0..3).filter(|&i| i != esprit_index).collect();
    screen_order.sort_by_key(|&i| sequences[i].factor());
    let first = pseudo_spectrum(&eligible, &sequences[screen_order[0]], k, window_len)?;
    let second = pseudo_spectrum(&eligible, &sequences[screen_order[1]], k, window_len)?;

    let freqs = eligible.frequencies();
    let norm_first = first.normalized();
    let norm_second = second.normalized();
    let combined: Vec<f64> = norm_first
        .iter()
        .zip(&norm_second)
        .map(|(x, y)| x * y)
        .collect();
    let combined_rank = ranking_of(&combined, &freqs);
    let take = k.min(freqs.len());

    let (mut selected, shortfall) = match mode {
        SelectionMode::CombinedScore => (combined_rank[..take].to_vec(), 0),
        SelectionMode::StageIntersection => {
            let top_first = &ranking_of(&norm_first, &freqs)[..take];
            let top_second = &ranking_of(&norm_second, &freqs)[..take];
            let mut chosen: Vec<usize> = top_first
                .iter()
                .copied()
                .filter(|i| top_second.contains(i))
                .collect();
            let shortfall = take - chosen.len();
            for &i in &combined_rank {
                if chosen.len() == take {
                    break;
                }
                if !chosen.contains(&i) {
                    chosen.push(i);
                }
            }
            (chosen, shortfall)
        }
    };
    selected.sort_by(|&i, &j| freqs[i].partial_cmp(&freqs[j]).unwrap());
    let final_freqs: Vec<f64> = selected.iter().map(|&i| freqs[i]).collect();

    let collision_flag = folded.collision || folds_merged || eligible.len() < k;
    Ok(PipelineResult {
        final_freqs,
        stage_spectra: [first, second],
        collision_flag,
        mode,
        diagnostics: PipelineDiagnostics {
            esprit_factor: source.factor(),
            folded,
            eligible,
            combined,
            selected,
            intersection_shortfall: shortfall,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synthesize, ChannelConfig, ChannelSequence, SignalSpec, Sinusoid};
    use crate::unfold::unfold;

    fn tone_sequence(freqs: &[f64], f_h: f64, factor: u32, len: usize) -> ChannelSequence {
        let components = freqs
            .iter()
            .enumerate()
            .map(|(i, &f)| Sinusoid::new(f, 1.0, 0.9 * i as f64))
            .collect();
        let spec = SignalSpec::new(components, f_h, 0.0, 0).unwrap();
        synthesize(&spec, ChannelConfig::new(factor), len).unwrap()
    }

    fn three_channels(freqs: &[f64], f_h: f64, len: usize) -> [ChannelSequence; 3] {
        [
            tone_sequence(freqs, f_h, 3, len),
            tone_sequence(freqs, f_h, 4, len),
            tone_sequence(freqs, f_h, 5, len),
        ]
    }

    #[test]
    fn steering_at_zero_is_all_ones() {
        let v = steering(0.0, 0, 3, 4, 6);
        for e in v.entries().iter() {
            assert!((e - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn steering_first_entry_value() {
        // screen_factor * (g + alpha / a) = 4 * (1/12 + 1/3) = 5/3 turns,
        // so the first entry is exp(-j 2 pi / 3).
        let v = steering(1.0 / 12.0, 1, 3, 4, 1);
        let got = v.entries()[0];
        assert!((got.re + 0.5).abs() < 1e-12, "{got}");
        assert!((got.im + 0.75f64.sqrt()).abs() < 1e-12, "{got}");
    }

    #[test]
    fn lifts_are_orthogonal_when_window_divides() {
        let (a, b, n) = (3u32, 4u32, 12usize);
        let g = 0.05;
        for alpha in 0..a {
            for other in 0..a {
                if alpha == other {
                    continue;
                }
                let va = steering(g, alpha, a, b, n);
                let vb = steering(g, other, a, b, n);
                let dot: Complex64 = va
                    .entries()
                    .iter()
                    .zip(vb.entries().iter())
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                assert!(
                    dot.norm() < 1e-10 * n as f64,
                    "alpha {alpha} vs {other}: {dot}"
                );
            }
        }
    }

    #[test]
    fn screening_separates_true_lifts_from_false_ones() {
        let f_h = 60.0;
        let eligible = unfold(&[5.0, 10.0], 3, f_h).unwrap();
        let screen = tone_sequence(&[25.0, 50.0], f_h, 5, 147);
        let spectrum = pseudo_spectrum(&eligible, &screen, 2, 48).unwrap();
        let values = spectrum.values();
        let freqs = eligible.frequencies();
        let best_false = values
            .iter()
            .zip(&freqs)
            .filter(|(_, &f)| (f - 25.0).abs() > 1e-6 && (f - 50.0).abs() > 1e-6)
            .map(|(&v, _)| v)
            .fold(0.0f64, f64::max);
        for (i, &f) in freqs.iter().enumerate() {
            if (f - 25.0).abs() < 1e-6 || (f - 50.0).abs() < 1e-6 {
                assert!(
                    values[i] >= 10.0 * best_false,
                    "true candidate {f} Hz at {} vs false max {best_false}",
                    values[i]
                );
            }
        }
    }

    #[test]
    fn ambiguous_spacing_leaves_near_ties_on_one_stage() {
        // 25 Hz and 50 Hz differ by 5 * 60 / 12 Hz, so the factor-4 channel
        // alone cannot separate {5, 10} from {25, 50}: all four sit in its
        // signal subspace and share the ceiling score.
        let f_h = 60.0;
        let eligible = unfold(&[5.0, 10.0], 3, f_h).unwrap();
        let screen = tone_sequence(&[25.0, 50.0], f_h, 4, 147);
        let spectrum = pseudo_spectrum(&eligible, &screen, 2, 48).unwrap();
        let values = spectrum.values();
        let freqs = eligible.frequencies();
        let in_subspace = [5.0, 10.0, 25.0, 50.0];
        let ceiling = values.iter().cloned().fold(0.0f64, f64::max);
        for (i, &f) in freqs.iter().enumerate() {
            let expected_high = in_subspace.iter().any(|&t| (f - t).abs() < 1e-6);
            if expected_high {
                assert!(values[i] >= 0.9 * ceiling, "candidate {f} Hz should tie");
            } else {
                assert!(values[i] <= ceiling / 10.0, "candidate {f} Hz should lose");
            }
        }
    }

    #[test]
    fn scaling_the_screen_channel_preserves_the_scores() {
        // Residual powers come from projectors, which ignore any complex
        // gain on the channel, so the spectrum must not move. Mirror-image
        // false lifts tie exactly by construction, so compare values, not
        // tie order.
        let f_h = 60.0;
        let eligible = unfold(&[5.3, 7.9], 3, f_h).unwrap();
        let screen = tone_sequence(&[25.3, 47.9], f_h, 5, 147);
        let scaled = ChannelSequence::from_samples(
            screen.config(),
            f_h,
            screen
                .samples()
                .iter()
                .map(|s| s * Complex64::from_polar(3.0, 0.7))
                .collect(),
        )
        .unwrap();
        let plain = pseudo_spectrum(&eligible, &screen, 2, 48).unwrap();
        let boosted = pseudo_spectrum(&eligible, &scaled, 2, 48).unwrap();
        for (p, b) in plain.values().iter().zip(boosted.values()) {
            assert!((p - b).abs() <= 1e-9 * p.abs(), "score moved: {p} vs {b}");
        }
        assert_eq!(plain.ranking()[..2], boosted.ranking()[..2]);
    }

    #[test]
    fn pseudo_spectrum_rejects_bad_inputs() {
        let f_h = 60.0;
        let eligible = unfold(&[5.0], 3, f_h).unwrap();
        let screen = tone_sequence(&[25.0], f_h, 5, 147);
        assert!(matches!(
            pseudo_spectrum(&eligible, &screen, 1, 10),
            Err(Error::InvalidWindow(_))
        ));
        let not_coprime = tone_sequence(&[25.0], f_h, 6, 147);
        assert!(matches!(
            pseudo_spectrum(&eligible, &not_coprime, 1, 48),
            Err(Error::NotCoprime { .. })
        ));
        let other_band = tone_sequence(&[25.0], 50.0, 5, 147);
        assert!(matches!(
            pseudo_spectrum(&eligible, &other_band, 1, 48),
            Err(Error::BandMismatch { .. })
        ));
        assert!(pseudo_spectrum(&eligible, &screen, 48, 48).is_err());
    }

    #[test]
    fn pipeline_recovers_two_tones_in_both_modes() {
        let truth = [25.0, 50.0];
        let channels = three_channels(&truth, 60.0, 147);
        for mode in [
            SelectionMode::CombinedScore,
            SelectionMode::StageIntersection,
        ] {
            let result = run_pipeline(&channels, 2, 48, mode).unwrap();
            assert!(!result.collision_flag);
            assert_eq!(result.final_freqs.len(), 2);
            for (got, want) in result.final_freqs.iter().zip(&truth) {
                assert!((got - want).abs() < 1e-6, "mode {mode:?}: {got} vs {want}");
            }
            assert_eq!(result.diagnostics.esprit_factor, 3);
        }
    }

    #[test]
    fn pipeline_recovers_three_tones_in_both_modes() {
        let truth = [25.0, 33.0, 50.0];
        let channels = three_channels(&truth, 60.0, 147);
        for mode in [
            SelectionMode::CombinedScore,
            SelectionMode::StageIntersection,
        ] {
            let result = run_pipeline(&channels, 3, 48, mode).unwrap();
            assert!(!result.collision_flag);
            for (got, want) in result.final_freqs.iter().zip(&truth) {
                assert!((got - want).abs() < 1e-6, "mode {mode:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn pipeline_is_exact_for_a_single_tone() {
        let channels = three_channels(&[41.3], 60.0, 147);
        let result = run_pipeline(&channels, 1, 48, SelectionMode::CombinedScore).unwrap();
        assert_eq!(result.final_freqs.len(), 1);
        assert!((result.final_freqs[0] - 41.3).abs() < 1e-6);
    }

    #[test]
    fn colliding_folds_are_flagged_but_still_resolved() {
        // 25 Hz and 45 Hz share the fold 5 Hz under factor 3. The folded
        // covariance is rank one, which raises the flag, yet both tones are
        // lifts of the surviving fold and the screening channels pick them.
        let channels = three_channels(&[25.0, 45.0], 60.0, 147);
        let result = run_pipeline(&channels, 2, 48, SelectionMode::CombinedScore).unwrap();
        assert!(result.collision_flag);
        assert_eq!(result.final_freqs.len(), 2);
        assert!(
            (result.final_freqs[0] - 25.0).abs() < 1e-6,
            "{:?}",
            result.final_freqs
        );
        assert!(
            (result.final_freqs[1] - 45.0).abs() < 1e-6,
            "{:?}",
            result.final_freqs
        );
    }

    #[test]
    fn indistinct_folds_collapse_to_their_mean() {
        // Radius at rate 20, window 48 is 20 * 0.25 / 48, about 0.104 Hz.
        let (folds, merged) = merge_indistinct_folds(vec![5.03, 12.0, 4.97], 20.0, 48);
        assert!(merged);
        assert_eq!(folds.len(), 2);
        assert!((folds[0] - 5.0).abs() < 1e-12, "{folds:?}");
        assert!((folds[1] - 12.0).abs() < 1e-12, "{folds:?}");

        let (folds, merged) = merge_indistinct_folds(vec![5.0, 12.0, 4.8], 20.0, 48);
        assert!(!merged);
        assert_eq!(folds.len(), 3);
    }

    #[test]
    fn fold_merging_wraps_across_zero() {
        // 0.02 and 19.98 are 0.04 apart on the folded circle; their mean
        // sits at zero exactly.
        let (folds, merged) = merge_indistinct_folds(vec![0.02, 19.98, 10.0], 20.0, 48);
        assert!(merged);
        assert_eq!(folds.len(), 2);
        assert!(folds[0].abs() < 1e-12, "{folds:?}");
        assert!((folds[1] - 10.0).abs() < 1e-12, "{folds:?}");
    }

    #[test]
    fn sub_resolution_folds_merge_and_both_tones_come_back() {
        // 46.51 Hz and 75.07 Hz sit almost exactly two channel rates apart
        // under factor 7, so their folds land within 0.012 Hz of each other,
        // beneath what a 98-sample window resolves. The merge reports the
        // shared fold once at the cluster mean, raises the flag, and both
        // tones come back as distinct lifts of that fold.
        let f_h = 100.0;
        let truth = [26.7, 46.51, 75.07];
        let spec = SignalSpec::new(
            truth.iter().map(|&f| Sinusoid::new(f, 1.0, 0.0)).collect(),
            f_h,
            0.0,
            0,
        )
        .unwrap();
        let channels: [ChannelSequence; 3] =
            [7, 8, 9].map(|factor| synthesize(&spec, ChannelConfig::new(factor), 195).unwrap());
        let result = run_pipeline(&channels, 3, 98, SelectionMode::CombinedScore).unwrap();
        assert!(result.collision_flag);
        assert_eq!(result.final_freqs.len(), 3);
        let mut sorted_truth = truth;
        sorted_truth.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in result.final_freqs.iter().zip(&sorted_truth) {
            assert!((got - want).abs() < 0.02, "{:?}", result.final_freqs);
        }
    }

    #[test]
    fn pipeline_rejects_non_coprime_factors() {
        let f_h = 60.0;
        let channels = [
            tone_sequence(&[25.0], f_h, 3, 147),
            tone_sequence(&[25.0], f_h, 6, 147),
            tone_sequence(&[25.0], f_h, 5, 147),
        ];
        assert!(matches!(
            run_pipeline(&channels, 1, 48, SelectionMode::CombinedScore),
            Err(Error::NotCoprime { .. })
        ));
    }

    #[test]
    fn pipeline_rejects_mismatched_bands() {
        let channels = [
            tone_sequence(&[25.0], 60.0, 3, 147),
            tone_sequence(&[25.0], 50.0, 4, 147),
            tone_sequence(&[25.0], 60.0, 5, 147),
        ];
        assert!(matches!(
            run_pipeline(&channels, 1, 48, SelectionMode::CombinedScore),
            Err(Error::BandMismatch { .. })
        ));
    }
}
