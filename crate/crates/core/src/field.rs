//! Sampled dual-polarization optical field and energy accounting.
//!
//! Envelopes are complex baseband samples relative to `carrier_frequency`,
//! in units of √W so that `|E|²` is instantaneous power in watts.

use num_complex::Complex;

use crate::{Error, Result, Scalar};

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Amplitude factor for a loss in dB.
#[inline]
pub fn db_to_amplitude<T: Scalar>(loss_db: T) -> T {
    T::of(10.0).powf(-loss_db / T::of(20.0))
}

/// Power factor for a loss in dB.
#[inline]
pub fn db_to_power<T: Scalar>(loss_db: T) -> T {
    T::of(10.0).powf(-loss_db / T::of(10.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalField<T> {
    sample_rate: T,
    carrier_frequency: T,
    t0: T,
    ex: Vec<Complex<T>>,
    ey: Vec<Complex<T>>,
}

impl<T: Scalar> OpticalField<T> {
    pub fn new(
        sample_rate: T,
        carrier_frequency: T,
        t0: T,
        ex: Vec<Complex<T>>,
        ey: Vec<Complex<T>>,
    ) -> Result<Self> {
        if ex.len() != ey.len() {
            return Err(Error::InvalidField(format!(
                "polarization lengths differ ({} vs {})",
                ex.len(),
                ey.len()
            )));
        }
        if ex.is_empty() {
            return Err(Error::InvalidField("field holds no samples".into()));
        }
        if !(sample_rate > T::zero()) || !sample_rate.is_finite() {
            return Err(Error::InvalidField(format!("sample_rate {sample_rate} must be > 0")));
        }
        if !(carrier_frequency > T::zero()) || !carrier_frequency.is_finite() {
            return Err(Error::InvalidField(format!(
                "carrier_frequency {carrier_frequency} must be > 0"
            )));
        }
        if let Some(k) = ex
            .iter()
            .zip(&ey)
            .position(|(x, y)| !(x.norm_sqr() + y.norm_sqr()).is_finite())
        {
            return Err(Error::InvalidField(format!("non-finite power at sample {k}")));
        }
        Ok(Self {
            sample_rate,
            carrier_frequency,
            t0,
            ex,
            ey,
        })
    }

    /// Field with all power on the x axis.
    pub fn x_polarized(sample_rate: T, carrier_frequency: T, t0: T, ex: Vec<Complex<T>>) -> Result<Self> {
        let ey = vec![Complex::new(T::zero(), T::zero()); ex.len()];
        Self::new(sample_rate, carrier_frequency, t0, ex, ey)
    }

    pub fn zeros(sample_rate: T, carrier_frequency: T, t0: T, len: usize) -> Result<Self> {
        let z = vec![Complex::new(T::zero(), T::zero()); len];
        Self::new(sample_rate, carrier_frequency, t0, z.clone(), z)
    }

    /// Same grid and carrier, new envelopes. Length may differ.
    pub fn with_envelopes(&self, ex: Vec<Complex<T>>, ey: Vec<Complex<T>>) -> Result<Self> {
        Self::new(self.sample_rate, self.carrier_frequency, self.t0, ex, ey)
    }

    pub(crate) fn from_parts_unchecked(
        sample_rate: T,
        carrier_frequency: T,
        t0: T,
        ex: Vec<Complex<T>>,
        ey: Vec<Complex<T>>,
    ) -> Self {
        debug_assert_eq!(ex.len(), ey.len());
        Self {
            sample_rate,
            carrier_frequency,
            t0,
            ex,
            ey,
        }
    }

    pub fn sample_rate(&self) -> T {
        self.sample_rate
    }

    pub fn carrier_frequency(&self) -> T {
        self.carrier_frequency
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn dt(&self) -> T {
        T::one() / self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.ex.len()
    }

    /// Always false for a constructed field; present for clippy's sake.
    pub fn is_empty(&self) -> bool {
        self.ex.is_empty()
    }

    pub fn ex(&self) -> &[Complex<T>] {
        &self.ex
    }

    pub fn ey(&self) -> &[Complex<T>] {
        &self.ey
    }

    pub fn ex_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.ex
    }

    pub fn ey_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.ey
    }

    pub fn envelopes_mut(&mut self) -> (&mut [Complex<T>], &mut [Complex<T>]) {
        (&mut self.ex, &mut self.ey)
    }

    pub fn into_envelopes(self) -> (Vec<Complex<T>>, Vec<Complex<T>>) {
        (self.ex, self.ey)
    }

    pub fn set_t0(&mut self, t0: T) {
        self.t0 = t0;
    }

    /// Instantaneous power `|ex|² + |ey|²` in watts.
    pub fn power_trace(&self) -> Vec<T> {
        self.ex
            .iter()
            .zip(&self.ey)
            .map(|(x, y)| x.norm_sqr() + y.norm_sqr())
            .collect()
    }

    /// Total energy of the block in joules.
    pub fn energy(&self) -> T {
        self.power_trace().into_iter().fold(T::zero(), |a, p| a + p) / self.sample_rate
    }

    pub fn mean_power(&self) -> T {
        self.power_trace().into_iter().fold(T::zero(), |a, p| a + p) / T::of_usize(self.len())
    }

    /// Energy of pulse window `n`, `Σ p[k] / sample_rate`.
    pub fn pulse_energy(&self, window: &PulseWindowing<T>, n: usize) -> Result<T> {
        let spp = window.samples_per_pulse();
        let available = self.len() / spp;
        if n >= available {
            return Err(Error::WindowOutOfRange { index: n, available });
        }
        let range = n * spp..(n + 1) * spp;
        let sum = self.ex[range.clone()]
            .iter()
            .zip(&self.ey[range])
            .fold(T::zero(), |a, (x, y)| a + x.norm_sqr() + y.norm_sqr());
        Ok(sum / self.sample_rate)
    }

    /// Energies of every complete pulse window in the block.
    pub fn pulse_energies(&self, window: &PulseWindowing<T>) -> Vec<T> {
        let spp = window.samples_per_pulse();
        self.ex
            .chunks_exact(spp)
            .zip(self.ey.chunks_exact(spp))
            .map(|(x, y)| {
                x.iter()
                    .zip(y)
                    .fold(T::zero(), |a, (x, y)| a + x.norm_sqr() + y.norm_sqr())
                    / self.sample_rate
            })
            .collect()
    }

    /// Scales both envelopes by a real amplitude factor.
    pub fn scale_amplitude(&mut self, factor: T) {
        for s in self.ex.iter_mut().chain(self.ey.iter_mut()) {
            *s = *s * factor;
        }
    }

    /// Insertion loss: amplitudes × 10^(−dB/20).
    pub fn attenuate(&self, loss_db: T) -> Result<Self> {
        if !(loss_db >= T::zero()) {
            return Err(Error::param("loss_db", format!("{loss_db} must be >= 0")));
        }
        let mut out = self.clone();
        out.scale_amplitude(db_to_amplitude(loss_db));
        Ok(out)
    }

    /// Concatenates `other` after `self`; grids must match.
    pub fn append(&mut self, other: &Self) -> Result<()> {
        if self.sample_rate != other.sample_rate || self.carrier_frequency != other.carrier_frequency {
            return Err(Error::GridMismatch("cannot append fields on different grids".into()));
        }
        self.ex.extend_from_slice(&other.ex);
        self.ey.extend_from_slice(&other.ey);
        Ok(())
    }
}

/// Mean photon number `μ = E / (h ν)`.
#[inline]
pub fn mean_photon_number<T: Scalar>(energy: T, carrier_frequency: T) -> T {
    energy / (T::of(PLANCK) * carrier_frequency)
}

/// Photon energy `h ν` in joules.
#[inline]
pub fn photon_energy<T: Scalar>(carrier_frequency: T) -> T {
    T::of(PLANCK) * carrier_frequency
}

/// Carrier frequency `c / λ`.
#[inline]
pub fn carrier_from_wavelength<T: Scalar>(wavelength: T) -> T {
    T::of(SPEED_OF_LIGHT) / wavelength
}

/// Pulse-slot bookkeeping: `samples_per_pulse × rep_rate = sample_rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseWindowing<T> {
    rep_rate: T,
    samples_per_pulse: usize,
}

impl<T: Scalar> PulseWindowing<T> {
    pub fn new(rep_rate: T, samples_per_pulse: usize) -> Result<Self> {
        if !(rep_rate > T::zero()) || !rep_rate.is_finite() {
            return Err(Error::param("run.rep_rate", "must be > 0"));
        }
        if samples_per_pulse == 0 {
            return Err(Error::param("run.samples_per_pulse", "must be >= 1"));
        }
        Ok(Self {
            rep_rate,
            samples_per_pulse,
        })
    }

    /// Builds a window from two rates, rejecting a non-integer ratio.
    pub fn from_rates(sample_rate: T, rep_rate: T) -> Result<Self> {
        let ratio = sample_rate / rep_rate;
        let spp = ratio.round();
        if !(spp >= T::one()) || ((ratio - spp) / spp).abs() > T::of(1e-9) {
            return Err(Error::param(
                "run.samples_per_pulse",
                format!("sample_rate/rep_rate = {ratio} is not a positive integer"),
            ));
        }
        Self::new(rep_rate, spp.to_usize().unwrap_or(0))
    }

    pub fn rep_rate(&self) -> T {
        self.rep_rate
    }

    pub fn pulse_period(&self) -> T {
        T::one() / self.rep_rate
    }

    pub fn samples_per_pulse(&self) -> usize {
        self.samples_per_pulse
    }

    pub fn sample_rate(&self) -> T {
        self.rep_rate * T::of_usize(self.samples_per_pulse)
    }

    /// Offset of the pulse-center sample inside a slot.
    pub fn center_offset(&self) -> usize {
        self.samples_per_pulse / 2
    }

    pub fn pulses_in(&self, samples: usize) -> usize {
        samples / self.samples_per_pulse
    }
}
