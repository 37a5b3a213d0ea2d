//! Signal model and channel synthesis.
//!
//! A test signal is a sum of `K` complex sinusoids in circular complex white
//! Gaussian noise. A channel observes that signal at the reduced rate
//! `f_h / factor`, so sample `n` is taken at time `n * factor / f_h`. Every
//! tone whose frequency exceeds the channel rate folds down; recovering the
//! original frequencies from several folded views is the job of the rest of
//! the crate, and this module is the ground-truth generator those stages and
//! the Monte Carlo harness run against.
//!
//! Noise is addressable: the value added to sample `n` of a channel depends
//! only on `(seed, factor, n)`. Two syntheses of overlapping sample ranges
//! therefore agree exactly on the overlap, and channels with different
//! factors draw independent streams.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::{unit_f64, unit_f64_open_low};

/// One complex sinusoid `s * exp(j 2 pi f t)` with `s = amplitude * exp(j phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    /// Frequency in hertz, strictly inside `(0, f_h)`.
    pub freq_hz: f64,
    /// Magnitude of the complex amplitude, strictly positive.
    pub amplitude: f64,
    /// Phase in radians, in `[0, 2 pi)`.
    pub phase: f64,
}

impl Sinusoid {
    /// Builds a component, reducing `phase` into `[0, 2 pi)`.
    pub fn new(freq_hz: f64, amplitude: f64, phase: f64) -> Self {
        let mut phase = phase.rem_euclid(TAU);
        if phase >= TAU {
            phase = 0.0;
        }
        Self {
            freq_hz,
            amplitude,
            phase,
        }
    }

    /// The complex amplitude `amplitude * exp(j phase)`.
    pub fn complex_amplitude(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase)
    }
}

/// Full description of a synthetic signal: components, band edge, noise
/// level, and the seed that keys the noise streams.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub components: Vec<Sinusoid>,
    /// Band edge in hertz; every component frequency lies in `(0, f_h)`.
    pub f_h: f64,
    /// Total variance of the complex noise added to every sample.
    pub noise_variance: f64,
    /// Seed for the noise streams of all channels synthesized from this spec.
    pub seed: u64,
}

impl SignalSpec {
    pub fn new(
        components: Vec<Sinusoid>,
        f_h: f64,
        noise_variance: f64,
        seed: u64,
    ) -> Result<Self> {
        let spec = Self {
            components,
            f_h,
            noise_variance,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Number of components.
    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    /// Component frequencies in the order given.
    pub fn frequencies(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.freq_hz).collect()
    }

    /// Sum of squared amplitudes, the signal power behind the SNR definition
    /// `SNR_dB = 10 log10(power / noise_variance)`.
    pub fn signal_power(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.amplitude * c.amplitude)
            .sum()
    }

    /// Noise variance that puts this spec at `snr_db`.
    pub fn variance_for_snr(&self, snr_db: f64) -> f64 {
        self.signal_power() * 10f64.powf(-snr_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidSignal("no components".into()));
        }
        if !(self.f_h.is_finite() && self.f_h > 0.0) {
            return Err(Error::InvalidSignal(format!(
                "band edge f_h = {} Hz",
                self.f_h
            )));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::InvalidSignal(format!(
                "noise variance {}",
                self.noise_variance
            )));
        }
        for (k, c) in self.components.iter().enumerate() {
            if !(c.freq_hz.is_finite() && c.freq_hz > 0.0 && c.freq_hz < self.f_h) {
                return Err(Error::InvalidSignal(format!(
                    "component {k} frequency {} Hz outside (0, {} Hz)",
                    c.freq_hz, self.f_h
                )));
            }
            if !(c.amplitude.is_finite() && c.amplitude > 0.0) {
                return Err(Error::InvalidSignal(format!(
                    "component {k} amplitude {}",
                    c.amplitude
                )));
            }
            if !(c.phase.is_finite() && (0.0..TAU).contains(&c.phase)) {
                return Err(Error::InvalidSignal(format!(
                    "component {k} phase {} outside [0, 2 pi)",
                    c.phase
                )));
            }
        }
        for i in 0..self.components.len() {
            for j in i + 1..self.components.len() {
                if self.components[i].freq_hz == self.components[j].freq_hz {
                    return Err(Error::InvalidSignal(format!(
                        "components {i} and {j} share frequency {} Hz",
                        self.components[i].freq_hz
                    )));
                }
            }
        }
        Ok(())
    }
}

/// How one channel observes the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelConfig {
    /// Undersampling factor; the channel rate is `f_h / factor`.
    pub factor: u32,
    /// Index of the first sample taken, counted from 1.
    pub start_index: u64,
}

impl ChannelConfig {
    pub fn new(factor: u32) -> Self {
        Self {
            factor,
            start_index: 1,
        }
    }

    pub fn with_start_index(factor: u32, start_index: u64) -> Self {
        Self {
            factor,
            start_index,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.factor == 0 {
            return Err(Error::InvalidChannel("factor must be at least 1".into()));
        }
        if self.start_index == 0 {
            return Err(Error::InvalidChannel(
                "start index must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Samples produced by one channel, together with how they were taken.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSequence {
    config: ChannelConfig,
    f_h: f64,
    samples: Vec<Complex64>,
}

impl ChannelSequence {
    /// Wraps externally produced samples. The synthesizer is the usual
    /// constructor; this exists for feeding recorded data into the pipeline.
    pub fn from_samples(config: ChannelConfig, f_h: f64, samples: Vec<Complex64>) -> Result<Self> {
        config.validate()?;
        if !(f_h.is_finite() && f_h > 0.0) {
            return Err(Error::InvalidChannel(format!("band edge f_h = {f_h} Hz")));
        }
        if samples.is_empty() {
            return Err(Error::InvalidChannel("empty sample list".into()));
        }
        Ok(Self {
            config,
            f_h,
            samples,
        })
    }

    pub fn config(&self) -> ChannelConfig {
        self.config
    }

    pub fn factor(&self) -> u32 {
        self.config.factor
    }

    /// Band edge of the signal this channel observes, in hertz.
    pub fn band_edge_hz(&self) -> f64 {
        self.f_h
    }

    /// Rate this channel samples at, `f_h / factor`.
    pub fn sample_rate_hz(&self) -> f64 {
        self.f_h / self.config.factor as f64
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// ChaCha stream keyed by `(seed, factor)`; sample `n` owns words
/// `4n .. 4n+4` of the stream, two `u64` draws.
fn noise_rng(seed: u64, factor: u32) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&factor.to_le_bytes());
    key[12..20].copy_from_slice(b"chan-wgn");
    ChaCha8Rng::from_seed(key)
}

/// Complex Gaussian noise value for sample `n`, total variance `variance`,
/// via a Box-Muller pair. Depends only on `(seed, factor, n)`.
pub(crate) fn noise_sample(rng: &mut ChaCha8Rng, n: u64, variance: f64) -> Complex64 {
    rng.set_word_pos(n as u128 * 4);
    let u1 = unit_f64_open_low(rng);
    let u2 = unit_f64(rng);
    let radius = (-2.0 * u1.ln()).sqrt() * (variance / 2.0).sqrt();
    let angle = TAU * u2;
    Complex64::new(radius * angle.cos(), radius * angle.sin())
}

#[cfg(test)]
pub(crate) fn noise_sample_at(seed: u64, factor: u32, n: u64, variance: f64) -> Complex64 {
    noise_sample(&mut noise_rng(seed, factor), n, variance)
}

/// Synthesizes `num_samples` samples of one channel.
///
/// Sample `i` (zero-based) of the output is taken at index
/// `n = start_index + i`, i.e. at time `n * factor / f_h`:
///
/// ```text
/// x(n) = sum_k s_k * exp(j 2 pi f_k n factor / f_h) + w(n)
/// ```
///
/// The phase argument is reduced modulo one cycle before evaluation, so a
/// tone at `f` and a tone at `f + m * f_h / factor` produce the same
/// noiseless samples up to rounding: folding is built into the model.
pub fn synthesize(
    spec: &SignalSpec,
    config: ChannelConfig,
    num_samples: usize,
) -> Result<ChannelSequence> {
    spec.validate()?;
    config.validate()?;
    if num_samples == 0 {
        return Err(Error::InvalidChannel("zero samples requested".into()));
    }

    // Cycles advanced per sample index by each component.
    let cycles: Vec<f64> = spec
        .components
        .iter()
        .map(|c| c.freq_hz * config.factor as f64 / spec.f_h)
        .collect();

    let mut rng = noise_rng(spec.seed, config.factor);
    let mut samples = Vec::with_capacity(num_samples);
    for i in 0..num_samples {
        let n = config.start_index + i as u64;
        let mut acc = Complex64::new(0.0, 0.0);
        for (c, cyc) in spec.components.iter().zip(&cycles) {
            let turns = cyc * n as f64;
            let angle = c.phase + TAU * (turns - turns.floor());
            acc += Complex64::from_polar(c.amplitude, angle);
        }
        if spec.noise_variance > 0.0 {
            acc += noise_sample(&mut rng, n, spec.noise_variance);
        }
        samples.push(acc);
    }
    ChannelSequence::from_samples(config, spec.f_h, samples)
}

/// Synthesizes one sequence per channel config from the same spec.
///
/// Noise streams are keyed by `(spec.seed, factor)`, so distinct factors
/// draw independent noise while repeated synthesis is bit-reproducible.
pub fn synthesize_multichannel(
    spec: &SignalSpec,
    configs: &[ChannelConfig],
    num_samples: usize,
) -> Result<Vec<ChannelSequence>> {
    if configs.is_empty() {
        return Err(Error::InvalidChannel("no channels requested".into()));
    }
    configs
        .iter()
        .map(|&c| synthesize(spec, c, num_samples))
        .collect()
}
