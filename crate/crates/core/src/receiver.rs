//! Bob's measurement chain: beam splitters, the delay-line interferometer
//! and the single-photon avalanche diode model.

use std::collections::VecDeque;
use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::field::{db_to_amplitude, mean_photon_number, OpticalField, PulseWindowing};
use crate::{Error, RandomStream, Result, Scalar};

/// Lossless splitter: `out2 = t·in0 − i·r·in1`, `out3 = −i·r·in0 + t·in1`.
pub fn beam_splitter<T: Scalar>(
    in0: &OpticalField<T>,
    in1: &OpticalField<T>,
    t: T,
    r: T,
) -> Result<(OpticalField<T>, OpticalField<T>)> {
    if in0.len() != in1.len() || in0.sample_rate() != in1.sample_rate() {
        return Err(Error::GridMismatch(format!(
            "beam splitter inputs differ: {} vs {} samples",
            in0.len(),
            in1.len()
        )));
    }
    let tc = Complex::new(t, T::zero());
    let ir = Complex::new(T::zero(), -r);
    let mix = |a: &[Complex<T>], b: &[Complex<T>]| -> (Vec<Complex<T>>, Vec<Complex<T>>) {
        a.iter()
            .zip(b)
            .map(|(&x0, &x1)| (tc * x0 + ir * x1, ir * x0 + tc * x1))
            .unzip()
    };
    let (x2, x3) = mix(in0.ex(), in1.ex());
    let (y2, y3) = mix(in0.ey(), in1.ey());
    Ok((in0.with_envelopes(x2, y2)?, in0.with_envelopes(x3, y3)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct DliParams<T> {
    /// Arm delay, s. Defaults to one pulse period.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay: Option<T>,
    pub t_coef: T,
    pub r_coef: T,
    /// dB
    pub insertion_loss: T,
    /// Interferometer phase error, rad.
    pub phase_offset: T,
}

impl<T: Scalar> Default for DliParams<T> {
    fn default() -> Self {
        Self {
            delay: None,
            t_coef: T::FRAC_1_SQRT_2(),
            r_coef: T::FRAC_1_SQRT_2(),
            insertion_loss: T::of(1.0),
            phase_offset: T::zero(),
        }
    }
}

impl<T: Scalar> DliParams<T> {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let norm = self.t_coef * self.t_coef + self.r_coef * self.r_coef;
        let tol = T::of(1e-12).max(T::epsilon() * T::of(8.0));
        if !((norm - T::one()).abs() <= tol) {
            return Err(Error::param(
                format!("{prefix}.t_coef"),
                format!("|t|² + |r|² = {norm}, expected 1"),
            ));
        }
        if !(self.insertion_loss >= T::zero()) || !self.insertion_loss.is_finite() {
            return Err(Error::param(format!("{prefix}.insertion_loss"), "must be finite and >= 0"));
        }
        if !self.phase_offset.is_finite() {
            return Err(Error::param(format!("{prefix}.phase_offset"), "must be finite"));
        }
        if let Some(d) = self.delay {
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::param(format!("{prefix}.delay"), "must be > 0"));
            }
        }
        Ok(())
    }

    /// Arm delay in samples.
    pub fn delay_samples(&self, window: &PulseWindowing<T>) -> Result<usize> {
        let delay = self.delay.unwrap_or_else(|| window.pulse_period());
        let exact = delay * window.sample_rate();
        let rounded = exact.round();
        if !((exact - rounded).abs() <= T::of(1e-6)) || rounded < T::one() {
            return Err(Error::NonIntegerDelay {
                delay: delay.to_f64_lossy(),
                sample_rate: window.sample_rate().to_f64_lossy(),
            });
        }
        Ok(rounded.to_usize().unwrap_or(1))
    }
}

/// Streaming delay-line interferometer.
///
/// With `E_d` the input delayed by one arm and `E_n` the current input,
/// port A (`BS2` output 3) carries `−irt(e^{iφ}E_d + E_n)` and port B
/// (output 2) carries `t²e^{iφ}E_d − r²E_n`, both scaled by the insertion
/// loss. Equal-phase neighbours therefore exit at port A.
#[derive(Debug, Clone)]
pub struct Dli<T> {
    a_delayed: Complex<T>,
    a_now: Complex<T>,
    b_delayed: Complex<T>,
    b_now: Complex<T>,
    line_x: VecDeque<Complex<T>>,
    line_y: VecDeque<Complex<T>>,
}

impl<T: Scalar> Dli<T> {
    pub fn new(params: &DliParams<T>, window: &PulseWindowing<T>) -> Result<Self> {
        params.validate("dli")?;
        let delay = params.delay_samples(window)?;
        let loss = db_to_amplitude(params.insertion_loss);
        let t = params.t_coef;
        let r = params.r_coef;
        let rot = Complex::from_polar(T::one(), params.phase_offset);
        let ir = Complex::new(T::zero(), -r);
        let tc = Complex::new(t, T::zero());
        // Long arm: t·E delayed and phase shifted. Short arm: −ir·E.
        let long = tc * rot;
        let short = ir;
        let zero = Complex::new(T::zero(), T::zero());
        Ok(Self {
            a_delayed: ir * long * loss,
            a_now: tc * short * loss,
            b_delayed: tc * long * loss,
            b_now: ir * short * loss,
            line_x: std::iter::repeat_n(zero, delay).collect(),
            line_y: std::iter::repeat_n(zero, delay).collect(),
        })
    }

    /// Processes a chunk, returning `(port_a, port_b)` on the same grid.
    pub fn process(&mut self, field: &OpticalField<T>) -> Result<(OpticalField<T>, OpticalField<T>)> {
        let run = |line: &mut VecDeque<Complex<T>>, input: &[Complex<T>]| {
            let mut a = Vec::with_capacity(input.len());
            let mut b = Vec::with_capacity(input.len());
            for &e in input {
                line.push_back(e);
                let d = line.pop_front().unwrap_or(e);
                a.push(self.a_delayed * d + self.a_now * e);
                b.push(self.b_delayed * d + self.b_now * e);
            }
            (a, b)
        };
        let mut lx = std::mem::take(&mut self.line_x);
        let mut ly = std::mem::take(&mut self.line_y);
        let (ax, bx) = run(&mut lx, field.ex());
        let (ay, by) = run(&mut ly, field.ey());
        self.line_x = lx;
        self.line_y = ly;
        Ok((field.with_envelopes(ax, ay)?, field.with_envelopes(bx, by)?))
    }
}

/// One-shot interferometer over a block with an empty delay line.
pub fn dli_transform<T: Scalar>(
    field: &OpticalField<T>,
    params: &DliParams<T>,
    window: &PulseWindowing<T>,
) -> Result<(OpticalField<T>, OpticalField<T>)> {
    Dli::new(params, window)?.process(field)
}

/// Per-slot photon numbers accumulated across arbitrary chunk boundaries.
#[derive(Debug, Clone)]
pub struct SlotIntegrator<T> {
    spp: usize,
    partial: T,
    filled: usize,
}

impl<T: Scalar> SlotIntegrator<T> {
    pub fn new(window: &PulseWindowing<T>) -> Self {
        Self {
            spp: window.samples_per_pulse(),
            partial: T::zero(),
            filled: 0,
        }
    }

    /// Mean photon number of every slot completed by `port`.
    pub fn push(&mut self, port: &OpticalField<T>) -> Vec<f64> {
        let dt = port.dt();
        let nu = port.carrier_frequency();
        let mut out = Vec::with_capacity(port.len() / self.spp + 1);
        for (x, y) in port.ex().iter().zip(port.ey()) {
            self.partial += (x.norm_sqr() + y.norm_sqr()) * dt;
            self.filled += 1;
            if self.filled == self.spp {
                out.push(mean_photon_number(self.partial, nu).to_f64_lossy());
                self.partial = T::zero();
                self.filled = 0;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SpadParams<T> {
    /// Detection efficiency η.
    pub eta: T,
    /// Dark-count probability per slot.
    pub p_dark: T,
    /// Afterpulse prefactor.
    pub p0: T,
    /// Afterpulse decay per slot.
    pub a_coef: T,
    /// s
    pub deadtime: T,
    /// s
    pub jitter_sigma: T,
    /// Background photons per pulse.
    pub n_bg: T,
}

impl<T: Scalar> Default for SpadParams<T> {
    fn default() -> Self {
        Self {
            eta: T::of(0.1),
            p_dark: T::of(1e-6),
            p0: T::of(0.0317),
            a_coef: T::of(0.00115),
            deadtime: T::of(10e-6),
            jitter_sigma: T::of(50e-12),
            n_bg: T::zero(),
        }
    }
}

impl<T: Scalar> SpadParams<T> {
    /// Perfect detector apart from efficiency `eta`.
    pub fn ideal(eta: T) -> Self {
        Self {
            eta,
            p_dark: T::zero(),
            p0: T::zero(),
            a_coef: T::zero(),
            deadtime: T::zero(),
            jitter_sigma: T::zero(),
            n_bg: T::zero(),
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        let prob = |v: T, n: &str| {
            if v >= T::zero() && v <= T::one() {
                Ok(())
            } else {
                Err(Error::param(format!("{prefix}.{n}"), format!("{v} is not in [0, 1]")))
            }
        };
        prob(self.eta, "eta")?;
        prob(self.p_dark, "p_dark")?;
        prob(self.p0, "p0")?;
        let nonneg = |v: T, n: &str| {
            if v >= T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("{prefix}.{n}"), "must be finite and >= 0"))
            }
        };
        nonneg(self.a_coef, "a_coef")?;
        nonneg(self.deadtime, "deadtime")?;
        nonneg(self.jitter_sigma, "jitter_sigma")?;
        nonneg(self.n_bg, "n_bg")?;
        Ok(())
    }
}

/// Component probabilities of one detection gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickProbability {
    pub photon: f64,
    pub afterpulse: f64,
    pub dark: f64,
    pub total: f64,
}

/// Afterpulse probability `p₀·e^{−a·n}`; zero before any click.
pub fn afterpulse_probability<T: Scalar>(n_since_last: Option<u64>, params: &SpadParams<T>) -> f64 {
    match n_since_last {
        None => 0.0,
        Some(n) => params.p0.to_f64_lossy() * (-params.a_coef.to_f64_lossy() * n as f64).exp(),
    }
}

/// Click probability from photon, afterpulse and dark contributions by
/// inclusion–exclusion. `n_since_last` counts slots since the last click.
pub fn spad_click_probability<T: Scalar>(mu: f64, n_since_last: Option<u64>, params: &SpadParams<T>) -> ClickProbability {
    let mean = params.eta.to_f64_lossy() * mu.max(0.0) + params.n_bg.to_f64_lossy();
    let pp = -(-mean).exp_m1();
    let pap = afterpulse_probability(n_since_last, params);
    let pd = params.p_dark.to_f64_lossy();
    // Inclusion–exclusion over the three causes, in product form.
    let total = 1.0 - (1.0 - pp) * (1.0 - pap) * (1.0 - pd);
    ClickProbability {
        photon: pp,
        afterpulse: pap,
        dark: pd,
        total: total.clamp(0.0, 1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    D1,
    D2,
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Detector::D1 => "D1",
            Detector::D2 => "D2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cause {
    Photon,
    Dark,
    Afterpulse,
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cause::Photon => "photon",
            Cause::Dark => "dark",
            Cause::Afterpulse => "afterpulse",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEvent {
    /// Detector time slot. Slot `m` holds the interference of pulses `m − 1` and `m`.
    pub pulse_index: u64,
    pub detector: Detector,
    /// s
    pub timestamp: f64,
    pub cause: Cause,
}

/// Free-running detector with deadtime and afterpulse memory.
#[derive(Debug, Clone)]
pub struct Spad {
    params: SpadParams<f64>,
    detector: Detector,
    rng: RandomStream,
    dead_slots: u64,
    period: f64,
    last_click: Option<u64>,
    next_slot: u64,
}

impl Spad {
    pub fn new<T: Scalar>(
        params: &SpadParams<T>,
        detector: Detector,
        rep_rate: T,
        rng: RandomStream,
    ) -> Result<Self> {
        params.validate("spad")?;
        let p = SpadParams {
            eta: params.eta.to_f64_lossy(),
            p_dark: params.p_dark.to_f64_lossy(),
            p0: params.p0.to_f64_lossy(),
            a_coef: params.a_coef.to_f64_lossy(),
            deadtime: params.deadtime.to_f64_lossy(),
            jitter_sigma: params.jitter_sigma.to_f64_lossy(),
            n_bg: params.n_bg.to_f64_lossy(),
        };
        let slots = p.deadtime * rep_rate.to_f64_lossy();
        let dead_slots = if (slots - slots.round()).abs() < 1e-9 {
            slots.round()
        } else {
            slots.ceil()
        } as u64;
        Ok(Self {
            params: p,
            detector,
            rng,
            dead_slots,
            period: 1.0 / rep_rate.to_f64_lossy(),
            last_click: None,
            next_slot: 0,
        })
    }

    /// Deadtime in whole slots.
    pub fn dead_slots(&self) -> u64 {
        self.dead_slots
    }

    pub fn next_slot(&self) -> u64 {
        self.next_slot
    }

    /// Evaluates one slot given the mean photon number at the detector.
    pub fn detect_slot(&mut self, mu: f64) -> Option<DetectionEvent> {
        let m = self.next_slot;
        self.next_slot += 1;
        if let Some(last) = self.last_click {
            if m - last < self.dead_slots {
                return None;
            }
        }
        let n = self.last_click.map(|l| m - l - 1);
        let prob = spad_click_probability(mu, n, &self.params);
        if prob.total <= 0.0 || !self.rng.bernoulli(prob.total) {
            return None;
        }
        self.last_click = Some(m);
        let weight = prob.photon + prob.dark + prob.afterpulse;
        let u = self.rng.uniform() * weight;
        let cause = if u < prob.photon {
            Cause::Photon
        } else if u < prob.photon + prob.dark {
            Cause::Dark
        } else {
            Cause::Afterpulse
        };
        let jitter = self.jitter();
        Some(DetectionEvent {
            pulse_index: m,
            detector: self.detector,
            timestamp: (m as f64 + 0.5) * self.period + jitter,
            cause,
        })
    }

    /// Gaussian jitter truncated to half a slot by rejection.
    fn jitter(&mut self) -> f64 {
        let sigma = self.params.jitter_sigma;
        if sigma == 0.0 {
            return 0.0;
        }
        let bound = 0.5 * self.period;
        for _ in 0..64 {
            let j = sigma * self.rng.normal();
            if j.abs() < bound {
                return j;
            }
        }
        0.0
    }

    pub fn detect(&mut self, mus: &[f64]) -> Vec<DetectionEvent> {
        mus.iter().filter_map(|&mu| self.detect_slot(mu)).collect()
    }
}

/// Batch detection over a sequence of per-slot photon numbers.
pub fn spad_detect<T: Scalar>(
    mus: &[f64],
    params: &SpadParams<T>,
    detector: Detector,
    rng: RandomStream,
    window: &PulseWindowing<T>,
) -> Result<Vec<DetectionEvent>> {
    let mut spad = Spad::new(params, detector, window.rep_rate(), rng)?;
    Ok(spad.detect(mus))
}
