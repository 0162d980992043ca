//! Instruments: optical spectrum analyzer, interference visibility, the
//! visibility-limited QBER and a power / photon-number meter.

use std::io::Write;

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::field::{mean_photon_number, OpticalField, PulseWindowing};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowFn {
    Rectangular,
    #[default]
    Hann,
}

impl WindowFn {
    pub fn coefficients<T: Scalar>(self, n: usize) -> Vec<T> {
        match self {
            WindowFn::Rectangular => vec![T::one(); n],
            WindowFn::Hann => (0..n)
                .map(|k| {
                    let x = T::TAU() * T::of_usize(k) / T::of_usize(n);
                    T::of(0.5) * (T::one() - x.cos())
                })
                .collect(),
        }
    }
}

/// Power per frequency bin; bins sum to the mean power of the field.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    /// Offsets from the carrier, Hz, strictly increasing.
    pub frequencies: Vec<T>,
    /// W per bin.
    pub psd: Vec<T>,
    /// Hz
    pub resolution_bw: T,
}

impl<T: Scalar> Spectrum<T> {
    pub fn total_power(&self) -> T {
        self.psd.iter().fold(T::zero(), |a, &p| a + p)
    }

    /// Strongest bin within `tolerance` Hz of `frequency`.
    pub fn peak_near(&self, frequency: T, tolerance: T) -> Option<(T, T)> {
        self.frequencies
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| (**f - frequency).abs() <= tolerance)
            .map(|(&f, &p)| (f, p))
            .fold(None, |best: Option<(T, T)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            })
    }

    /// Strongest bin overall.
    pub fn peak(&self) -> Option<(T, T)> {
        self.peak_near(T::zero(), T::infinity())
    }

    /// Median bin value, a robust noise-floor estimate.
    pub fn median(&self) -> T {
        let mut v = self.psd.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        v.get(v.len() / 2).copied().unwrap_or_else(T::zero)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, header: &str) -> Result<()> {
        if !header.is_empty() {
            writeln!(w, "# {header}")?;
        }
        writeln!(
            w,
            "# psd is power per bin in W; bins sum to mean power; resolution_bw_hz={:e}",
            self.resolution_bw
        )?;
        writeln!(w, "frequency_offset_hz,psd")?;
        for (f, p) in self.frequencies.iter().zip(&self.psd) {
            writeln!(w, "{:e},{:e}", f, p)?;
        }
        Ok(())
    }
}

/// Welch-averaged periodogram with 50% segment overlap over both
/// polarizations.
pub fn spectrum<T: Scalar>(field: &OpticalField<T>, nfft: usize, window_fn: WindowFn) -> Result<Spectrum<T>> {
    if nfft < 2 {
        return Err(Error::param("analysis.nfft", "must be >= 2"));
    }
    if field.len() < nfft {
        return Err(Error::FieldTooShort {
            len: field.len(),
            needed: nfft,
        });
    }
    let w: Vec<T> = window_fn.coefficients(nfft);
    let wsum = w.iter().fold(T::zero(), |a, &x| a + x * x);
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let hop = (nfft / 2).max(1);
    let mut acc = vec![T::zero(); nfft];
    let mut segments = 0usize;
    let mut start = 0;
    let mut buf = vec![Complex::new(T::zero(), T::zero()); nfft];
    while start + nfft <= field.len() {
        for env in [field.ex(), field.ey()] {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = env[start + k] * w[k];
            }
            fft.process(&mut buf);
            acc.iter_mut().zip(&buf).for_each(|(a, x)| *a += x.norm_sqr());
        }
        segments += 1;
        start += hop;
    }
    let norm = T::one() / (T::of_usize(nfft) * wsum * T::of_usize(segments));
    let fs = field.sample_rate();
    let rbw = fs / T::of_usize(nfft);
    let half = nfft / 2;
    let mut frequencies = Vec::with_capacity(nfft);
    let mut psd = Vec::with_capacity(nfft);
    // fftshift: bins −N/2 … N/2−1
    for j in 0..nfft {
        let k = (j + nfft - half) % nfft;
        let signed = j as f64 - half as f64;
        frequencies.push(T::of(signed) * rbw);
        psd.push(acc[k] * norm);
    }
    Ok(Spectrum {
        frequencies,
        psd,
        resolution_bw: rbw,
    })
}

/// `V = (I_max − I_min)/(I_max + I_min)`.
pub fn visibility_from_intensities<T: Scalar>(i_max: T, i_min: T) -> Result<T> {
    let total = i_max + i_min;
    if !(total > T::zero()) {
        return Err(Error::ZeroPower);
    }
    Ok((i_max - i_min) / total)
}

/// Sum of pulse-center powers over every slot after the first.
fn center_sum<T: Scalar>(port_power: &[T], window: &PulseWindowing<T>) -> Result<T> {
    let spp = window.samples_per_pulse();
    let slots = port_power.len() / spp;
    if slots < 2 {
        return Err(Error::FieldTooShort {
            len: port_power.len(),
            needed: 2 * spp,
        });
    }
    let c = window.center_offset();
    Ok((1..slots).fold(T::zero(), |a, m| a + port_power[m * spp + c]))
}

/// Visibility from one DLI port observed under a constructive calibration
/// drive (equal neighbouring phases) and a destructive one (alternating
/// phases). The first slot, where the delay arm is still empty, is skipped.
/// The larger of the two readings is taken as `I_max`, so `V ∈ [0, 1]`.
pub fn visibility<T: Scalar>(constructive: &[T], destructive: &[T], window: &PulseWindowing<T>) -> Result<T> {
    let a = center_sum(constructive, window)?;
    let b = center_sum(destructive, window)?;
    visibility_from_intensities(a.max(b), a.min(b))
}

/// Visibility-limited error rate `(1 − V)/2`.
pub fn optical_qber_from_visibility<T: Scalar>(v: T) -> Result<T> {
    if !(v >= T::zero() && v <= T::one()) {
        return Err(Error::OutOfRange(format!("visibility {v} not in [0, 1]")));
    }
    Ok((T::one() - v) * T::of(0.5))
}

/// Running average power and photon number per pulse.
#[derive(Debug, Clone)]
pub struct PowerMeter<T> {
    energy: T,
    samples: usize,
    dt: T,
    spp: usize,
    carrier: T,
}

impl<T: Scalar> PowerMeter<T> {
    pub fn new(window: &PulseWindowing<T>) -> Self {
        Self {
            energy: T::zero(),
            samples: 0,
            dt: T::one() / window.sample_rate(),
            spp: window.samples_per_pulse(),
            carrier: T::zero(),
        }
    }

    pub fn observe(&mut self, field: &OpticalField<T>) {
        self.energy += field.energy();
        self.samples += field.len();
        self.carrier = field.carrier_frequency();
    }

    /// W
    pub fn average_power(&self) -> T {
        if self.samples == 0 {
            return T::zero();
        }
        self.energy / (T::of_usize(self.samples) * self.dt)
    }

    pub fn mean_photon_number(&self) -> T {
        if self.samples == 0 || self.carrier == T::zero() {
            return T::zero();
        }
        let pulses = T::of_usize(self.samples) / T::of_usize(self.spp);
        mean_photon_number(self.energy / pulses, self.carrier)
    }
}

/// Average power (W) and mean photon number per pulse of a field.
pub fn power_meter<T: Scalar>(field: &OpticalField<T>, window: &PulseWindowing<T>) -> (T, T) {
    let mut m = PowerMeter::new(window);
    m.observe(field);
    (m.average_power(), m.mean_photon_number())
}
