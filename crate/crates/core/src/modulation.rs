//! Alice's field conditioning: in-line polarizer, Mach-Zehnder intensity
//! modulator, phase modulator and variable optical attenuator.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::field::{db_to_amplitude, mean_photon_number, OpticalField, PulseWindowing};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PolarizerParams<T> {
    /// dB
    pub insertion_loss: T,
    /// Polarization extinction ratio, dB. `inf` blocks y entirely.
    pub per: T,
}

impl<T: Scalar> Default for PolarizerParams<T> {
    fn default() -> Self {
        Self {
            insertion_loss: T::of(0.5),
            per: T::of(30.0),
        }
    }
}

impl<T: Scalar> PolarizerParams<T> {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.insertion_loss >= T::zero()) || !self.insertion_loss.is_finite() {
            return Err(Error::param(format!("{prefix}.insertion_loss"), "must be finite and >= 0"));
        }
        if !(self.per >= T::zero()) {
            return Err(Error::param(format!("{prefix}.per"), "must be >= 0"));
        }
        Ok(())
    }
}

/// Diagonal Jones attenuation: the x axis passes with insertion loss, the y
/// axis is additionally suppressed by the extinction ratio.
pub fn polarize<T: Scalar>(field: &OpticalField<T>, params: &PolarizerParams<T>) -> OpticalField<T> {
    let pass = db_to_amplitude(params.insertion_loss);
    let block = pass * db_to_amplitude(params.per);
    let mut out = field.clone();
    let (ex, ey) = out.envelopes_mut();
    ex.iter_mut().for_each(|s| *s = *s * pass);
    ey.iter_mut().for_each(|s| *s = *s * block);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ImParams<T> {
    /// Voltage for a π phase shift, V.
    pub v_pi: T,
    /// DC bias, V. Sets the maximum-transmission operating point `V₁`.
    pub v_dc: T,
    /// dB
    pub insertion_loss: T,
    /// Desired power extinction ratio, dB.
    pub target_er: T,
    /// Optical pulse full width at half maximum, s.
    pub fwhm: T,
}

impl<T: Scalar> Default for ImParams<T> {
    fn default() -> Self {
        Self {
            v_pi: T::of(4.0),
            v_dc: T::zero(),
            insertion_loss: T::of(4.0),
            target_er: T::of(30.0),
            fwhm: T::of(250e-12),
        }
    }
}

impl<T: Scalar> ImParams<T> {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let p = |n: &str| format!("{prefix}.{n}");
        if !(self.v_pi > T::zero()) || !self.v_pi.is_finite() {
            return Err(Error::param(p("v_pi"), format!("{} must be > 0", self.v_pi)));
        }
        if !(self.v_dc >= T::zero() && self.v_dc < T::of(0.5) * self.v_pi) {
            return Err(Error::param(p("v_dc"), "must lie in [0, v_pi/2)"));
        }
        if !(self.insertion_loss >= T::zero()) || !self.insertion_loss.is_finite() {
            return Err(Error::param(p("insertion_loss"), "must be finite and >= 0"));
        }
        if !(self.target_er > T::zero()) {
            return Err(Error::param(p("target_er"), "must be > 0"));
        }
        if !(self.fwhm > T::zero()) || !self.fwhm.is_finite() {
            return Err(Error::param(p("fwhm"), "must be > 0"));
        }
        Ok(())
    }
}

/// Two-arm Mach-Zehnder: `E_o = ½ E_i (e^{iφ₁} + e^{iφ₂})`, then insertion loss.
pub fn im_general<T: Scalar>(
    field: &OpticalField<T>,
    phi1: &[T],
    phi2: &[T],
    insertion_loss: T,
) -> Result<OpticalField<T>> {
    if phi1.len() != field.len() || phi2.len() != field.len() {
        return Err(Error::GridMismatch(format!(
            "phase drives have {} and {} samples, field has {}",
            phi1.len(),
            phi2.len(),
            field.len()
        )));
    }
    let loss = db_to_amplitude(insertion_loss);
    let half = T::of(0.5);
    let mut out = field.clone();
    let (ex, ey) = out.envelopes_mut();
    for k in 0..phi1.len() {
        let h = (Complex::from_polar(T::one(), phi1[k]) + Complex::from_polar(T::one(), phi2[k])) * half;
        ex[k] = ex[k] * h * loss;
        ey[k] = ey[k] * h * loss;
    }
    Ok(out)
}

/// Push-pull intensity modulation, `E_o = E_i cos(π V / V_π)`.
pub fn im_pushpull<T: Scalar>(field: &OpticalField<T>, volts: &[T], params: &ImParams<T>) -> Result<OpticalField<T>> {
    let phi1: Vec<T> = volts.iter().map(|&v| T::PI() * v / params.v_pi).collect();
    let phi2: Vec<T> = phi1.iter().map(|&p| -p).collect();
    im_general(field, &phi1, &phi2, params.insertion_loss)
}

/// Periodic RF drive for pulse carving, one pulse period long.
///
/// The drive rests at `v_off` and rises to `v_on` through a raised-cosine
/// bump centered in the slot, `v(t) = v_off + (v_on − v_off)·½(1 + cos(π(t−t_c)/W))`
/// for `|t − t_c| < W`. `W` is solved so the transmitted optical pulse has
/// the requested FWHM.
#[derive(Debug, Clone, PartialEq)]
pub struct RfDrive<T> {
    /// Drive samples for one pulse period.
    pub period: Vec<T>,
    /// Maximum-transmission voltage `V₁`.
    pub v_on: T,
    /// Minimum-transmission voltage `V₀`.
    pub v_off: T,
    /// Half-support of the raised-cosine bump, s.
    pub half_width: T,
}

impl<T: Scalar> RfDrive<T> {
    /// Drive for `pulses` consecutive periods.
    pub fn tile(&self, pulses: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(self.period.len() * pulses);
        for _ in 0..pulses {
            out.extend_from_slice(&self.period);
        }
        out
    }

    /// Power transmission `cos²(πV/V_π)` at an operating point.
    pub fn transmission(v: T, v_pi: T) -> T {
        let c = (T::PI() * v / v_pi).cos();
        c * c
    }

    /// Designed extinction ratio in dB (infinite when `V₀` hits the null).
    pub fn extinction_db(&self, v_pi: T) -> T {
        let on = Self::transmission(self.v_on, v_pi);
        let off = Self::transmission(self.v_off, v_pi);
        T::of(10.0) * (on / off).log10()
    }
}

/// Solves the operating points and pulse width for the target extinction
/// ratio and FWHM, and samples one period of the drive.
pub fn synthesize_rf_drive<T: Scalar>(params: &ImParams<T>, window: &PulseWindowing<T>) -> Result<RfDrive<T>> {
    params.validate("im")?;
    let period = window.pulse_period();
    if !(params.fwhm < period) {
        return Err(Error::param("im.fwhm", "must be shorter than the pulse period"));
    }
    let target = params.target_er;
    if !target.is_finite() {
        return Err(Error::UnreachableExtinction {
            target_db: target.to_f64_lossy(),
            reason: "target must be finite".into(),
        });
    }
    let pi = T::PI();
    let v_on = params.v_dc;
    let cos_on = (pi * v_on / params.v_pi).cos().abs();
    if !(cos_on > T::epsilon()) {
        return Err(Error::UnreachableExtinction {
            target_db: target.to_f64_lossy(),
            reason: "bias sits on a transmission null".into(),
        });
    }
    // cos²(πV₀/V_π) = 10^(−ER/10) · cos²(πV₁/V_π) on the branch V₀ ∈ (V₁, V_π/2].
    let ratio = T::of(10.0).powf(-target / T::of(20.0));
    let v_off = params.v_pi / pi * (ratio * cos_on).acos();
    if !(v_off > v_on) {
        return Err(Error::UnreachableExtinction {
            target_db: target.to_f64_lossy(),
            reason: "extinction below numeric resolution of the drive".into(),
        });
    }

    // Drive fraction at half maximum of the optical pulse.
    let v_half = params.v_pi / pi * (T::of(0.5).sqrt() * cos_on).acos();
    let w_half = (v_half - v_off) / (v_on - v_off);
    if !(w_half > T::zero() && w_half < T::one()) {
        return Err(Error::UnreachableExtinction {
            target_db: target.to_f64_lossy(),
            reason: "extinction ratio too small to define a half-maximum".into(),
        });
    }
    let half_width = pi * params.fwhm / (T::of(2.0) * (T::of(2.0) * w_half - T::one()).acos());
    if !(T::of(2.0) * half_width <= period) {
        return Err(Error::param(
            "im.fwhm",
            format!("pulse support {} s exceeds the period {} s", T::of(2.0) * half_width, period),
        ));
    }

    let spp = window.samples_per_pulse();
    let dt = T::one() / window.sample_rate();
    let center = T::of(0.5) * period;
    let volts = (0..spp)
        .map(|j| {
            let t = T::of_usize(j) * dt - center;
            let w = if t.abs() < half_width {
                T::of(0.5) * (T::one() + (pi * t / half_width).cos())
            } else {
                T::zero()
            };
            v_off + (v_on - v_off) * w
        })
        .collect();
    let drive = RfDrive {
        period: volts,
        v_on,
        v_off,
        half_width,
    };
    if drive.extinction_db(params.v_pi) < target - T::of(0.5) {
        return Err(Error::UnreachableExtinction {
            target_db: target.to_f64_lossy(),
            reason: "solved bounds miss the target by more than 0.5 dB".into(),
        });
    }
    Ok(drive)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PmParams<T> {
    /// Voltage for a π phase shift, V.
    pub v_pi: T,
    /// Constant drift added to the drive, V.
    pub bias_drift: T,
    /// dB
    pub insertion_loss: T,
}

impl<T: Scalar> Default for PmParams<T> {
    fn default() -> Self {
        Self {
            v_pi: T::of(3.5),
            bias_drift: T::zero(),
            insertion_loss: T::of(3.0),
        }
    }
}

impl<T: Scalar> PmParams<T> {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.v_pi > T::zero()) || !self.v_pi.is_finite() {
            return Err(Error::param(format!("{prefix}.v_pi"), "must be > 0"));
        }
        if !self.bias_drift.is_finite() {
            return Err(Error::param(format!("{prefix}.bias_drift"), "must be finite"));
        }
        if !(self.insertion_loss >= T::zero()) || !self.insertion_loss.is_finite() {
            return Err(Error::param(format!("{prefix}.insertion_loss"), "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// `E_o = E_i e^{iπ(V + V_bias)/V_π}` with insertion loss.
pub fn phase_modulate<T: Scalar>(field: &OpticalField<T>, volts: &[T], params: &PmParams<T>) -> Result<OpticalField<T>> {
    if volts.len() != field.len() {
        return Err(Error::GridMismatch(format!(
            "phase drive has {} samples, field has {}",
            volts.len(),
            field.len()
        )));
    }
    let loss = db_to_amplitude(params.insertion_loss);
    let mut out = field.clone();
    let (ex, ey) = out.envelopes_mut();
    for (k, &v) in volts.iter().enumerate() {
        let rot = Complex::from_polar(loss, T::PI() * (v + params.bias_drift) / params.v_pi);
        ex[k] = ex[k] * rot;
        ey[k] = ey[k] * rot;
    }
    Ok(out)
}

/// NRZ phase drive: `bit · V_π` held over each pulse slot.
pub fn pm_drive<T: Scalar>(bits: &[u8], params: &PmParams<T>, window: &PulseWindowing<T>) -> Vec<T> {
    let spp = window.samples_per_pulse();
    let mut out = Vec::with_capacity(bits.len() * spp);
    for &b in bits {
        let v = if b != 0 { params.v_pi } else { T::zero() };
        out.extend(std::iter::repeat_n(v, spp));
    }
    out
}

/// A section that sets neither mode is rejected by validation; an absent
/// section means the default target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct VoaParams<T> {
    /// Fixed attenuation, dB. Exclusive with `target_mpn`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attenuation: Option<T>,
    /// Target mean photon number per pulse. Exclusive with `attenuation`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_mpn: Option<T>,
    /// Pulses measured before the set-point is frozen.
    #[serde(default = "default_calibration_pulses")]
    pub calibration_pulses: usize,
}

fn default_calibration_pulses() -> usize {
    1000
}

impl<T: Scalar> Default for VoaParams<T> {
    fn default() -> Self {
        Self {
            attenuation: None,
            target_mpn: Some(T::of(0.2)),
            calibration_pulses: 1000,
        }
    }
}

impl<T: Scalar> VoaParams<T> {
    pub fn fixed(attenuation_db: T) -> Self {
        Self {
            attenuation: Some(attenuation_db),
            target_mpn: None,
            calibration_pulses: 1000,
        }
    }

    pub fn target(mpn: T) -> Self {
        Self {
            attenuation: None,
            target_mpn: Some(mpn),
            calibration_pulses: 1000,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        match (self.attenuation, self.target_mpn) {
            (Some(a), None) => {
                if !(a >= T::zero()) || !a.is_finite() {
                    return Err(Error::param(format!("{prefix}.attenuation"), "must be finite and >= 0"));
                }
            }
            (None, Some(m)) => {
                if !(m > T::zero()) || !m.is_finite() {
                    return Err(Error::param(format!("{prefix}.target_mpn"), "must be > 0"));
                }
                if self.calibration_pulses == 0 {
                    return Err(Error::param(format!("{prefix}.calibration_pulses"), "must be >= 1"));
                }
            }
            _ => {
                return Err(Error::param(
                    prefix.to_string(),
                    "exactly one of `attenuation` or `target_mpn` must be set",
                ))
            }
        }
        Ok(())
    }
}

/// Attenuator that, in target mode, calibrates once on its first block and
/// then holds the set-point.
#[derive(Debug, Clone)]
pub struct Voa<T> {
    params: VoaParams<T>,
    applied_db: Option<T>,
}

impl<T: Scalar> Voa<T> {
    pub fn new(params: VoaParams<T>) -> Result<Self> {
        params.validate("voa")?;
        let applied_db = params.attenuation;
        Ok(Self { params, applied_db })
    }

    /// Attenuation in force, once known.
    pub fn applied_db(&self) -> Option<T> {
        self.applied_db
    }

    pub fn apply(&mut self, field: &OpticalField<T>, window: &PulseWindowing<T>) -> Result<OpticalField<T>> {
        let db = match self.applied_db {
            Some(db) => db,
            None => {
                let target = self.params.target_mpn.unwrap_or_else(T::one);
                let available = window.pulses_in(field.len());
                if available == 0 {
                    return Err(Error::FieldTooShort {
                        len: field.len(),
                        needed: window.samples_per_pulse(),
                    });
                }
                let n = available.min(self.params.calibration_pulses);
                let energies = field.pulse_energies(window);
                let mean_energy = energies[..n].iter().fold(T::zero(), |a, &e| a + e) / T::of_usize(n);
                let mu_in = mean_photon_number(mean_energy, field.carrier_frequency());
                if !(mu_in >= target) {
                    return Err(Error::CannotAmplify {
                        target: target.to_f64_lossy(),
                        input: mu_in.to_f64_lossy(),
                    });
                }
                let db = T::of(10.0) * (mu_in / target).log10();
                self.applied_db = Some(db);
                db
            }
        };
        field.attenuate(db)
    }
}

/// One-shot attenuator; returns the field and the attenuation applied.
pub fn voa_apply<T: Scalar>(
    field: &OpticalField<T>,
    params: &VoaParams<T>,
    window: &PulseWindowing<T>,
) -> Result<(OpticalField<T>, T)> {
    let mut voa = Voa::new(params.clone())?;
    let out = voa.apply(field, window)?;
    Ok((out, voa.applied_db().unwrap_or_else(T::zero)))
}
