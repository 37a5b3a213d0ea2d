//! From folded frequencies back to full-band candidates.
//!
//! A channel that undersamples by `factor` maps a tone at `f` to
//! `f mod (f_h / factor)`, so one folded estimate is consistent with exactly
//! `factor` frequencies inside `[0, f_h)`. [`unfold`] enumerates them.
//! [`bezout_match`] reconciles the folded views of two coprime channels by
//! solving the linear Diophantine consistency equation, and
//! [`audit_ambiguity`] reports which frequency pairs defeat which channel
//! pair: a pair whose spacing is an exact multiple of `f_h / (a * b)` looks
//! consistent on channels `a` and `b` even when the match is wrong. No
//! in-band pair can defeat all three channel pairs of a pairwise coprime
//! triple at once, which is why a third channel settles the ambiguity.

use crate::error::{Error, Result};

/// Default tolerance on the distance to the nearest integer when testing
/// the consistency equation against estimated (noisy) folded frequencies.
pub const DEFAULT_INTEGRALITY_TOL: f64 = 0.02;

/// Relative spacing (times `f_h`) below which two unfolded candidates are
/// treated as one.
pub const DUPLICATE_RTOL: f64 = 1e-6;

pub(crate) fn gcd_u64(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// True when the two factors share no divisor.
pub fn coprime(a: u32, b: u32) -> bool {
    a != 0 && b != 0 && gcd_u64(a as u64, b as u64) == 1
}

/// True when all three factors are pairwise coprime.
pub fn pairwise_coprime(factors: (u32, u32, u32)) -> bool {
    let (a, b, c) = factors;
    coprime(a, b) && coprime(a, c) && coprime(b, c)
}

/// Where a candidate came from: folded estimate `source` lifted by
/// `alpha` multiples of the channel rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Origin {
    pub source: usize,
    pub alpha: u32,
}

/// One candidate true frequency. Candidates that land within
/// [`DUPLICATE_RTOL`]` * f_h` of each other are merged and keep every
/// origin, so a fold collision stays visible.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub freq_hz: f64,
    pub origins: Vec<Origin>,
}

/// All full-band frequencies consistent with one channel's folded view.
#[derive(Debug, Clone, PartialEq)]
pub struct EligibleSet {
    folded_hz: Vec<f64>,
    factor: u32,
    f_h: f64,
    candidates: Vec<Candidate>,
}

impl EligibleSet {
    pub fn folded_hz(&self) -> &[f64] {
        &self.folded_hz
    }

    pub fn factor(&self) -> u32 {
        self.factor
    }

    pub fn band_edge_hz(&self) -> f64 {
        self.f_h
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Candidate frequencies in enumeration order.
    pub fn frequencies(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.freq_hz).collect()
    }

    /// Folded frequency of candidate `i` as a fraction of the band,
    /// `g = folded / f_h`, in `[0, 1 / factor)`, with its lift count.
    pub fn fraction_of(&self, i: usize) -> (f64, u32) {
        let origin = self.candidates[i].origins[0];
        (self.folded_hz[origin.source] / self.f_h, origin.alpha)
    }
}

/// Lifts every folded frequency to all `factor` candidates
/// `folded + alpha * f_h / factor`, `alpha = 0 .. factor`.
///
/// Candidates are enumerated per folded estimate with ascending `alpha`.
/// Near-coincident candidates merge (keeping all origins), so the result has
/// `folded_hz.len() * factor` entries unless folds collide.
pub fn unfold(folded_hz: &[f64], factor: u32, f_h: f64) -> Result<EligibleSet> {
    if factor == 0 {
        return Err(Error::InvalidChannel("factor must be at least 1".into()));
    }
    if !(f_h.is_finite() && f_h > 0.0) {
        return Err(Error::InvalidSignal(format!("band edge f_h = {f_h} Hz")));
    }
    if folded_hz.is_empty() {
        return Err(Error::InvalidSignal(
            "no folded frequencies to unfold".into(),
        ));
    }
    let rate = f_h / factor as f64;
    for &f in folded_hz {
        if !(f.is_finite() && (0.0..rate).contains(&f)) {
            return Err(Error::FoldedOutOfRange {
                value: f,
                limit: rate,
            });
        }
    }

    let mut candidates: Vec<Candidate> = Vec::with_capacity(folded_hz.len() * factor as usize);
    for (source, &folded) in folded_hz.iter().enumerate() {
        for alpha in 0..factor {
            candidates.push(Candidate {
                freq_hz: folded + alpha as f64 * rate,
                origins: vec![Origin { source, alpha }],
            });
        }
    }
    merge_duplicates(&mut candidates, DUPLICATE_RTOL * f_h);

    Ok(EligibleSet {
        folded_hz: folded_hz.to_vec(),
        factor,
        f_h,
        candidates,
    })
}

/// Merges chains of candidates whose neighbours are closer than `eps`.
/// The survivor is the member with the smallest `(source, alpha)`; it keeps
/// its exact frequency and absorbs the origins of the rest.
fn merge_duplicates(candidates: &mut Vec<Candidate>, eps: f64) {
    if candidates.len() < 2 {
        return;
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| {
        candidates[i]
            .freq_hz
            .partial_cmp(&candidates[j].freq_hz)
            .unwrap()
    });

    let mut groups: Vec<Vec<usize>> = Vec::new();
    for idx in order {
        match groups.last_mut() {
            Some(group)
                if candidates[idx].freq_hz - candidates[*group.last().unwrap()].freq_hz < eps =>
            {
                group.push(idx)
            }
            _ => groups.push(vec![idx]),
        }
    }

    let mut keep = vec![true; candidates.len()];
    for group in groups.iter().filter(|g| g.len() > 1) {
        let survivor = *group
            .iter()
            .min_by_key(|&&i| {
                (
                    candidates[i].origins[0].source,
                    candidates[i].origins[0].alpha,
                )
            })
            .unwrap();
        let mut origins: Vec<Origin> = group
            .iter()
            .flat_map(|&i| candidates[i].origins.iter().copied())
            .collect();
        origins.sort_by_key(|o| (o.source, o.alpha));
        candidates[survivor].origins = origins;
        for &i in group {
            if i != survivor {
                keep[i] = false;
            }
        }
    }
    let mut it = keep.iter();
    candidates.retain(|_| *it.next().unwrap());
}

/// One reconciled pair of folded estimates from two channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    /// Index into the first set's folded list.
    pub a_index: usize,
    /// Index into the second set's folded list.
    pub b_index: usize,
    /// Lift count on the first channel.
    pub alpha: u32,
    /// Lift count on the second channel.
    pub beta: u32,
    /// Reconciled frequency, expressed from the first channel's view.
    pub freq_hz: f64,
    /// Distance of the consistency ratio from the nearest integer.
    pub residual: f64,
}

/// Every folded pair that passed the integrality test.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    pub pairs: Vec<MatchedPair>,
    pub tol_int: f64,
}

impl MatchReport {
    /// Reconciled frequencies in report order.
    pub fn frequencies(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.freq_hz).collect()
    }
}

/// Modular inverse of `x` modulo `m` for coprime inputs, via the extended
/// Euclidean algorithm.
fn mod_inverse(x: i64, m: i64) -> i64 {
    let (mut r0, mut r1) = (m, x.rem_euclid(m));
    let (mut s0, mut s1) = (0i64, 1i64);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    debug_assert_eq!(r0, 1, "inputs must be coprime");
    s0.rem_euclid(m)
}

/// Reconciles two channels' folded views.
///
/// A true frequency seen as `fa` on the `a` channel and `fb` on the `b`
/// channel satisfies `fa + alpha * f_h / a = fb + beta * f_h / b`, i.e.
///
/// ```text
/// b * alpha - a * beta = round(a * b * (fb - fa) / f_h)
/// ```
///
/// with the right-hand side an integer. For every folded pair whose ratio is
/// within `tol_int` of an integer, the unique `(alpha, beta)` inside the
/// `[0, a) x [0, b)` grid is recovered in closed form. Pairs of estimates
/// that belong to different tones can also pass the test when the tone
/// spacing is a multiple of `f_h / (a * b)`; the report keeps them, and the
/// caller resolves survivors with a third channel.
pub fn bezout_match(
    first: &EligibleSet,
    second: &EligibleSet,
    tol_int: f64,
) -> Result<MatchReport> {
    let (a, b) = (first.factor(), second.factor());
    if !coprime(a, b) {
        return Err(Error::NotCoprime { a, b });
    }
    if first.band_edge_hz() != second.band_edge_hz() {
        return Err(Error::BandMismatch {
            expected: first.band_edge_hz(),
            got: second.band_edge_hz(),
        });
    }
    if !(tol_int > 0.0 && tol_int < 0.5) {
        return Err(Error::Config(format!(
            "integrality tolerance {tol_int} outside (0, 0.5)"
        )));
    }

    let f_h = first.band_edge_hz();
    let (ai, bi) = (a as i64, b as i64);
    let inv_b = mod_inverse(bi, ai);
    let mut pairs = Vec::new();
    for (m, &fa) in first.folded_hz().iter().enumerate() {
        for (l, &fb) in second.folded_hz().iter().enumerate() {
            let ratio = (a as f64) * (b as f64) * (fb - fa) / f_h;
            let nearest = ratio.round();
            let residual = (ratio - nearest).abs();
            if residual > tol_int {
                continue;
            }
            let rhs = nearest as i64;
            let alpha = (inv_b * rhs).rem_euclid(ai);
            let beta = (bi * alpha - rhs) / ai;
            debug_assert_eq!(bi * alpha - ai * beta, rhs);
            if !(0..bi).contains(&beta) {
                // Unreachable for in-range folded inputs; a lift that far
                // out would leave the band.
                continue;
            }
            pairs.push(MatchedPair {
                a_index: m,
                b_index: l,
                alpha: alpha as u32,
                beta: beta as u32,
                freq_hz: fa + alpha as f64 * f_h / a as f64,
                residual,
            });
        }
    }
    Ok(MatchReport { pairs, tol_int })
}

/// One frequency pair that a channel pair cannot tell apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conflict {
    /// Indices into the audited frequency list, first < second.
    pub pair: (usize, usize),
    /// The undersampling factors of the defeated channel pair.
    pub channel_pair: (u32, u32),
    /// The integer multiple of `f_h / (x * y)` separating the pair.
    pub multiple: i64,
}

/// Which frequency pairs are ambiguous on which channel pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityReport {
    pub conflicts: Vec<Conflict>,
}

impl AmbiguityReport {
    pub fn is_clean(&self) -> bool {
        self.conflicts.is_empty()
    }
}

/// Audits a frequency set against a factor triple.
///
/// For each pair of frequencies and each channel pair `(x, y)` of the
/// triple, a conflict is recorded when `(f_j - f_i) * x * y / f_h` is within
/// `tol_int` of an integer: those two tones can be confused when only
/// channels `x` and `y` vote. A pair that conflicts on all three channel
/// pairs would need a spacing of at least `f_h`, so that case is reported as
/// an internal-consistency error. Note that two nearly identical
/// frequencies trip that error by construction, since a spacing near zero is
/// within tolerance of the integer zero on every channel pair.
pub fn audit_ambiguity(
    freqs: &[f64],
    factors: (u32, u32, u32),
    f_h: f64,
    tol_int: f64,
) -> Result<AmbiguityReport> {
    if !pairwise_coprime(factors) {
        let (a, b, c) = factors;
        return Err(if !coprime(a, b) {
            Error::NotCoprime { a, b }
        } else if !coprime(a, c) {
            Error::NotCoprime { a, b: c }
        } else {
            Error::NotCoprime { a: b, b: c }
        });
    }
    if !(f_h.is_finite() && f_h > 0.0) {
        return Err(Error::InvalidSignal(format!("band edge f_h = {f_h} Hz")));
    }
    if !(tol_int > 0.0 && tol_int < 0.5) {
        return Err(Error::Config(format!(
            "integrality tolerance {tol_int} outside (0, 0.5)"
        )));
    }
    for (i, &f) in freqs.iter().enumerate() {
        if !(f.is_finite() && f > 0.0 && f < f_h) {
            return Err(Error::InvalidSignal(format!(
                "frequency {i} at {f} Hz outside (0, {f_h} Hz)"
            )));
        }
    }
    for i in 0..freqs.len() {
        for j in i + 1..freqs.len() {
            if freqs[i] == freqs[j] {
                return Err(Error::InvalidSignal(format!(
                    "frequencies {i} and {j} are both {} Hz",
                    freqs[i]
                )));
            }
        }
    }

    let (a, b, c) = factors;
    let channel_pairs = [(a, b), (a, c), (b, c)];
    let mut conflicts = Vec::new();
    for i in 0..freqs.len() {
        for j in i + 1..freqs.len() {
            let spacing = freqs[j] - freqs[i];
            let mut hits = 0;
            for &(x, y) in &channel_pairs {
                let ratio = spacing * (x as f64) * (y as f64) / f_h;
                let nearest = ratio.round();
                if (ratio - nearest).abs() <= tol_int {
                    hits += 1;
                    conflicts.push(Conflict {
                        pair: (i, j),
                        channel_pair: (x, y),
                        multiple: nearest as i64,
                    });
                }
            }
            if hits == 3 {
                return Err(Error::AmbiguityContradiction(i, j));
            }
        }
    }
    Ok(AmbiguityReport { conflicts })
}
