//! Folded-frequency extraction from one channel.
//!
//! The channel samples are cut into maximally overlapping windows, the
//! sample covariance of those windows is eigendecomposed, and the invariance
//! between the first and last `N - 1` rows of the signal basis yields one
//! unit-circle eigenvalue per tone. The angle of each eigenvalue, as a
//! fraction of a full turn, is the tone's frequency in cycles per sample at
//! the channel rate; scaling by the rate gives the folded frequency in
//! hertz. Unfolding those values back to the full band is handled by
//! [`crate::unfold`] and [`crate::screen`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ChannelSequence;

/// Relative eigenvalue (and singular value) gap below which the covariance
/// is treated as rank deficient for the requested model order.
const RANK_GAP_RTOL: f64 = 1e-10;

/// Absolute cutoff for discarding singular values in the pseudo-inverse.
/// The operand has near-orthonormal columns, so its singular values are
/// order one and this only removes genuine rank loss.
const PINV_EPS: f64 = 1e-12;

/// Window matrix: column `t` holds samples `t .. t + N` of the sequence
/// (zero-based), so `T = len - N + 1` columns of length `N`.
#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    entries: DMatrix<Complex64>,
}

impl SnapshotMatrix {
    pub fn window_len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn num_snapshots(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }
}

/// Cuts a sequence into stride-1 windows of length `window_len`.
///
/// A sequence of exactly `window_len` samples yields a single column.
pub fn build_snapshots(seq: &ChannelSequence, window_len: usize) -> Result<SnapshotMatrix> {
    if window_len < 2 {
        return Err(Error::InvalidWindow(format!(
            "window of {window_len} samples cannot express a phase step"
        )));
    }
    if seq.len() < window_len {
        return Err(Error::SequenceTooShort {
            len: seq.len(),
            needed: window_len,
        });
    }
    let samples = seq.samples();
    let num_snapshots = seq.len() - window_len + 1;
    let entries = DMatrix::from_fn(window_len, num_snapshots, |r, t| samples[t + r]);
    Ok(SnapshotMatrix { entries })
}

/// Sample covariance of the snapshot columns, forced Hermitian.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    matrix: DMatrix<Complex64>,
    num_snapshots: usize,
}

impl CovarianceEstimate {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_snapshots(&self) -> usize {
        self.num_snapshots
    }
}

/// Averages the outer products of all snapshot columns.
///
/// The average is Hermitian up to rounding already; symmetrizing with its
/// adjoint makes it exactly Hermitian so the eigensolver sees a clean input.
pub fn estimate_covariance(snapshots: &SnapshotMatrix) -> CovarianceEstimate {
    let x = snapshots.entries();
    let t = snapshots.num_snapshots() as f64;
    let raw = x * x.adjoint() / Complex64::new(t, 0.0);
    let matrix = (&raw + raw.adjoint()) * Complex64::new(0.5, 0.0);
    CovarianceEstimate {
        matrix,
        num_snapshots: snapshots.num_snapshots(),
    }
}

/// Orthonormal eigenbasis of a covariance, split at model order `K`.
#[derive(Debug, Clone)]
pub struct SubspaceSplit {
    signal_basis: DMatrix<Complex64>,
    noise_basis: DMatrix<Complex64>,
    eigenvalues: Vec<f64>,
}

impl SubspaceSplit {
    /// `N x K` basis of the `K` largest eigenvalues.
    pub fn signal_basis(&self) -> &DMatrix<Complex64> {
        &self.signal_basis
    }

    /// `N x (N - K)` basis of the remaining eigenvalues.
    pub fn noise_basis(&self) -> &DMatrix<Complex64> {
        &self.noise_basis
    }

    /// All eigenvalues, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
}

/// Eigendecomposes a Hermitian covariance and splits the basis at order `k`.
pub fn eigen_split(cov: &CovarianceEstimate, k: usize) -> Result<SubspaceSplit> {
    let n = cov.dim();
    if k == 0 || k >= n {
        return Err(Error::ModelOrder { k, n });
    }
    let eig = cov
        .matrix
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigendecomposition("symmetric eigensolver stalled".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });

    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let signal_basis = DMatrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, order[c])]);
    let noise_basis = DMatrix::from_fn(n, n - k, |r, c| eig.eigenvectors[(r, order[k + c])]);
    Ok(SubspaceSplit {
        signal_basis,
        noise_basis,
        eigenvalues,
    })
}

/// Folded frequencies recovered from one channel, as fractions of the
/// channel rate, paired with the invariance eigenvalues they came from.
#[derive(Debug, Clone)]
pub struct FoldedEstimate {
    /// Cycles per sample in `[0, 1)`, ascending.
    pub fractions: Vec<f64>,
    /// Invariance eigenvalues, ideally on the unit circle, in the same
    /// order as `fractions`.
    pub eigenvalues: Vec<Complex64>,
    /// True when the covariance looked rank deficient for the requested
    /// order, which happens when two tones fold onto the same frequency.
    pub collision: bool,
}

/// Least-squares rotational-invariance estimate of `k` folded frequencies.
///
/// Requires `window_len > k + 1` so both row blocks of the signal basis have
/// more rows than columns, and at least `window_len + 1` samples so the
/// covariance averages two or more snapshots.
pub fn esprit(seq: &ChannelSequence, k: usize, window_len: usize) -> Result<FoldedEstimate> {
    if k == 0 {
        return Err(Error::ModelOrder { k, n: window_len });
    }
    if window_len <= k + 1 {
        return Err(Error::InvalidWindow(format!(
            "window of {window_len} samples cannot resolve {k} tones, need at least {}",
            k + 2
        )));
    }
    if seq.len() < window_len + 1 {
        return Err(Error::SequenceTooShort {
            len: seq.len(),
            needed: window_len + 1,
        });
    }

    let snapshots = build_snapshots(seq, window_len)?;
    let cov = estimate_covariance(&snapshots);
    let split = eigen_split(&cov, k)?;

    let lam = split.eigenvalues();
    if !(lam[0].is_finite() && lam[0] > 0.0) {
        return Err(Error::Eigendecomposition(
            "covariance has no positive eigenvalue".into(),
        ));
    }
    let mut collision = lam[k - 1] <= RANK_GAP_RTOL * lam[0];

    let basis = split.signal_basis();
    let upper = basis.rows(0, window_len - 1).into_owned();
    let lower = basis.rows(1, window_len - 1).into_owned();

    let svals = upper.clone().svd(false, false).singular_values;
    let smax = svals.iter().cloned().fold(0.0f64, f64::max);
    let smin = svals.iter().cloned().fold(f64::INFINITY, f64::min);
    if smax <= 0.0 {
        return Err(Error::Eigendecomposition("signal basis vanished".into()));
    }
    if smin <= RANK_GAP_RTOL * smax {
        collision = true;
    }

    let pinv = upper
        .pseudo_inverse(PINV_EPS)
        .map_err(|e| Error::Eigendecomposition(e.to_string()))?;
    let rotation = pinv * lower;
    let eigenvalues = invariance_eigenvalues(&rotation)?;

    let mut pairs: Vec<(f64, Complex64)> = eigenvalues
        .iter()
        .map(|&ev| {
            let mut fraction = (ev.arg() / std::f64::consts::TAU).rem_euclid(1.0);
            if fraction >= 1.0 {
                fraction = 0.0;
            }
            (fraction, ev)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

    Ok(FoldedEstimate {
        fractions: pairs.iter().map(|p| p.0).collect(),
        eigenvalues: pairs.iter().map(|p| p.1).collect(),
        collision,
    })
}

/// Eigenvalues of the small non-Hermitian invariance matrix, with a longer
/// Schur iteration as fallback before giving up.
fn invariance_eigenvalues(rotation: &DMatrix<Complex64>) -> Result<DVector<Complex64>> {
    if let Some(ev) = rotation.eigenvalues() {
        return Ok(ev);
    }
    nalgebra::linalg::Schur::try_new(rotation.clone(), f64::EPSILON, 100_000)
        .and_then(|schur| schur.eigenvalues())
        .ok_or_else(|| Error::Eigendecomposition("invariance eigenvalues did not converge".into()))
}

/// Converts fractional estimates to folded hertz on a channel that
/// undersamples `f_h` by `factor`: `f = fraction * f_h / factor`.
pub fn fold_to_hertz(est: &FoldedEstimate, f_h: f64, factor: u32) -> Vec<f64> {
    let rate = f_h / factor as f64;
    est.fractions.iter().map(|g| g * rate).collect()
}

/// Default snapshot window for a sequence of `len` samples: half the
/// sequence, capped at 50.
pub fn default_window_len(len: usize) -> usize {
    (len / 2).clamp(2, 50)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synthesize, ChannelConfig, SignalSpec, Sinusoid};

    fn tone_sequence(freqs: &[f64], f_h: f64, factor: u32, len: usize) -> ChannelSequence {
        let components = freqs
            .iter()
            .enumerate()
            .map(|(i, &f)| Sinusoid::new(f, 1.0, 0.9 * i as f64))
            .collect();
        let spec = SignalSpec::new(components, f_h, 0.0, 0).unwrap();
        synthesize(&spec, ChannelConfig::new(factor), len).unwrap()
    }

    fn ramp_sequence(len: usize) -> ChannelSequence {
        let samples = (0..len).map(|i| Complex64::new(i as f64, 0.0)).collect();
        ChannelSequence::from_samples(ChannelConfig::new(1), 60.0, samples).unwrap()
    }

    #[test]
    fn snapshot_counts() {
        let seq = ramp_sequence(100);
        let snap = build_snapshots(&seq, 50).unwrap();
        assert_eq!(snap.window_len(), 50);
        assert_eq!(snap.num_snapshots(), 51);

        let snap = build_snapshots(&ramp_sequence(101), 100).unwrap();
        assert_eq!(snap.num_snapshots(), 2);
    }

    #[test]
    fn degenerate_window_gives_single_column() {
        let seq = ramp_sequence(8);
        let snap = build_snapshots(&seq, 8).unwrap();
        assert_eq!(snap.num_snapshots(), 1);
        for (r, &s) in seq.samples().iter().enumerate() {
            assert_eq!(snap.entries()[(r, 0)], s);
        }
    }

    #[test]
    fn snapshot_rejects_bad_shapes() {
        let seq = ramp_sequence(8);
        assert!(matches!(
            build_snapshots(&seq, 1),
            Err(Error::InvalidWindow(_))
        ));
        assert!(matches!(
            build_snapshots(&seq, 9),
            Err(Error::SequenceTooShort { len: 8, needed: 9 })
        ));
    }

    #[test]
    fn covariance_of_constant_sequence() {
        let samples = vec![Complex64::new(1.0, 0.0); 2];
        let seq = ChannelSequence::from_samples(ChannelConfig::new(1), 60.0, samples).unwrap();
        let cov = estimate_covariance(&build_snapshots(&seq, 2).unwrap());
        assert_eq!(cov.num_snapshots(), 1);
        for r in 0..2 {
            for c in 0..2 {
                assert!((cov.matrix()[(r, c)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn covariance_is_hermitian_and_nonnegative() {
        let spec = SignalSpec::new(vec![Sinusoid::new(25.0, 1.0, 0.3)], 60.0, 2.0, 11).unwrap();
        let seq = synthesize(&spec, ChannelConfig::new(3), 200).unwrap();
        let cov = estimate_covariance(&build_snapshots(&seq, 16).unwrap());
        let m = cov.matrix();
        for r in 0..16 {
            for c in 0..16 {
                assert!((m[(r, c)] - m[(c, r)].conj()).norm() < 1e-14);
            }
        }
        let eig = m.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        for &l in eig.eigenvalues.iter() {
            assert!(l > -1e-12 * max, "negative eigenvalue {l}");
        }
    }

    #[test]
    fn single_tone_covariance_is_rank_one() {
        let seq = tone_sequence(&[25.0], 60.0, 3, 64);
        let cov = estimate_covariance(&build_snapshots(&seq, 8).unwrap());
        let split = eigen_split(&cov, 1).unwrap();
        let lam = split.eigenvalues();
        assert!(lam[1] <= 1e-10 * lam[0], "second eigenvalue {}", lam[1]);
    }

    #[test]
    fn eigen_split_recovers_diagonal_structure() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(4.0, 0.0),
            Complex64::new(1.0, 0.0),
        ]));
        let cov = CovarianceEstimate {
            matrix: m,
            num_snapshots: 1,
        };
        let split = eigen_split(&cov, 1).unwrap();
        assert!((split.eigenvalues()[0] - 4.0).abs() < 1e-12);
        assert!((split.eigenvalues()[1] - 1.0).abs() < 1e-12);
        assert!((split.signal_basis()[(0, 0)].norm() - 1.0).abs() < 1e-12);
        assert!(split.signal_basis()[(1, 0)].norm() < 1e-12);
        assert!((split.noise_basis()[(1, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_split_bases_are_orthonormal_and_reconstruct() {
        let seq = tone_sequence(&[25.0, 50.0], 60.0, 3, 120);
        let cov = estimate_covariance(&build_snapshots(&seq, 12).unwrap());
        let split = eigen_split(&cov, 2).unwrap();

        let full = DMatrix::from_fn(12, 12, |r, c| {
            if c < 2 {
                split.signal_basis()[(r, c)]
            } else {
                split.noise_basis()[(r, c - 2)]
            }
        });
        let gram = full.adjoint() * &full;
        for r in 0..12 {
            for c in 0..12 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((gram[(r, c)] - Complex64::new(want, 0.0)).norm() < 1e-10);
            }
        }

        let lam = DMatrix::from_fn(12, 12, |r, c| {
            if r == c {
                Complex64::new(split.eigenvalues()[r], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let rebuilt = &full * lam * full.adjoint();
        let err = (&rebuilt - cov.matrix()).norm() / cov.matrix().norm();
        assert!(err < 1e-10, "reconstruction error {err}");
    }

    #[test]
    fn eigen_split_rejects_bad_order() {
        let seq = tone_sequence(&[25.0], 60.0, 3, 64);
        let cov = estimate_covariance(&build_snapshots(&seq, 8).unwrap());
        assert!(matches!(
            eigen_split(&cov, 0),
            Err(Error::ModelOrder { .. })
        ));
        assert!(matches!(
            eigen_split(&cov, 8),
            Err(Error::ModelOrder { .. })
        ));
    }

    #[test]
    fn two_folded_tones_recovered_exactly() {
        // 25 Hz and 50 Hz under factor 3 of a 60 Hz band fold to 5 Hz and
        // 10 Hz, i.e. fractions 1/4 and 1/2 of the 20 Hz channel rate.
        let seq = tone_sequence(&[25.0, 50.0], 60.0, 3, 111);
        let est = esprit(&seq, 2, 12).unwrap();
        assert!(!est.collision);
        assert!(
            (est.fractions[0] - 0.25).abs() < 1e-9,
            "{:?}",
            est.fractions
        );
        assert!(
            (est.fractions[1] - 0.50).abs() < 1e-9,
            "{:?}",
            est.fractions
        );
        for ev in &est.eigenvalues {
            assert!((ev.norm() - 1.0).abs() < 1e-9);
        }
        let hz = fold_to_hertz(&est, 60.0, 3);
        assert!((hz[0] - 5.0).abs() < 1e-8);
        assert!((hz[1] - 10.0).abs() < 1e-8);
    }

    #[test]
    fn three_folded_tones_recovered_exactly() {
        // Folds of 25, 33, 50 Hz under factor 3: 5, 13, 10 Hz.
        let seq = tone_sequence(&[25.0, 33.0, 50.0], 60.0, 3, 111);
        let est = esprit(&seq, 3, 12).unwrap();
        let hz = fold_to_hertz(&est, 60.0, 3);
        let mut sorted = hz.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in sorted.iter().zip(&[5.0, 10.0, 13.0]) {
            assert!((got - want).abs() < 1e-8, "got {sorted:?}");
        }
    }

    #[test]
    fn full_rate_tone_recovered() {
        let seq = tone_sequence(&[17.3], 60.0, 1, 64);
        let est = esprit(&seq, 1, 8).unwrap();
        assert!((est.fractions[0] - 17.3 / 60.0).abs() < 1e-9);
        let hz = fold_to_hertz(&est, 60.0, 1);
        assert!((hz[0] - 17.3).abs() < 1e-8);
    }

    #[test]
    fn colliding_folds_raise_the_flag() {
        // 25 Hz and 45 Hz both fold to 5 Hz under factor 3; asking for two
        // tones leaves the covariance rank one.
        let seq = tone_sequence(&[25.0, 45.0], 60.0, 3, 111);
        let est = esprit(&seq, 2, 12).unwrap();
        assert!(est.collision);
    }

    #[test]
    fn distinct_folds_near_collision_still_resolve() {
        let seq = tone_sequence(&[25.0, 25.6], 60.0, 3, 400);
        let est = esprit(&seq, 2, 48).unwrap();
        assert!(!est.collision);
        let hz = fold_to_hertz(&est, 60.0, 3);
        assert!((hz[0] - 5.0).abs() < 1e-6, "{hz:?}");
        assert!((hz[1] - 5.6).abs() < 1e-6, "{hz:?}");
    }

    #[test]
    fn random_noiseless_instances_are_exact() {
        use rand_chacha::rand_core::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        let mut rng = ChaCha8Rng::seed_from_u64(0xE5);
        for trial in 0..30 {
            let k = 1 + (trial % 4);
            let factor = [3u32, 4, 5, 7][trial % 4];
            let f_h = 60.0;
            let rate = f_h / factor as f64;
            let mut freqs: Vec<f64> = Vec::new();
            while freqs.len() < k {
                let g = crate::rng::range_f64(&mut rng, 0.02, 0.98);
                let alpha = (crate::rng::unit_f64(&mut rng) * factor as f64).floor();
                let f = (g + alpha) * rate;
                if f <= 0.0 || f >= f_h {
                    continue;
                }
                if freqs
                    .iter()
                    .all(|&q| ((q / rate).fract() - (f / rate).fract()).abs() > 0.05)
                {
                    freqs.push(f);
                }
            }
            let seq = tone_sequence(&freqs, f_h, factor, 150);
            let est = esprit(&seq, k, 16).unwrap();
            let mut want: Vec<f64> = freqs.iter().map(|f| (f / rate).fract()).collect();
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (got, want) in est.fractions.iter().zip(&want) {
                assert!((got - want).abs() < 1e-9, "trial {trial}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn esprit_rejects_bad_shapes() {
        let seq = tone_sequence(&[25.0], 60.0, 3, 20);
        assert!(matches!(esprit(&seq, 0, 8), Err(Error::ModelOrder { .. })));
        assert!(matches!(esprit(&seq, 1, 2), Err(Error::InvalidWindow(_))));
        assert!(matches!(
            esprit(&seq, 1, 20),
            Err(Error::SequenceTooShort { .. })
        ));
    }

    #[test]
    fn fold_to_hertz_scales_by_channel_rate() {
        let est = FoldedEstimate {
            fractions: vec![0.0, 0.5],
            eigenvalues: vec![Complex64::new(1.0, 0.0); 2],
            collision: false,
        };
        let hz = fold_to_hertz(&est, 60.0, 4);
        assert_eq!(hz[0], 0.0);
        assert!((hz[1] - 7.5).abs() < 1e-12);
    }

    #[test]
    fn default_window_is_half_capped() {
        assert_eq!(default_window_len(30), 15);
        assert_eq!(default_window_len(500), 50);
        assert_eq!(default_window_len(3), 2);
    }
}
