//! Single-mode fiber: symmetric split-step Fourier integration of the NLSE
//! with attenuation, second- and third-order dispersion, differential group
//! delay and self-phase modulation.
//!
//! Spectral convention: `X[k] = Σ x[n] e^{−iω_k t_n}` (the forward FFT), with
//! `ω_k` in standard FFT ordering relative to the carrier. Under this
//! convention the linear operator over a length `h` is
//! `exp(h(−α/2 + iβ₂ω²/2 − iβ₃ω³/6))`. The x axis leads by half the DGD and
//! the y axis lags by the same amount.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::field::OpticalField;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct FiberParams<T> {
    /// km
    pub length: T,
    /// dB/km
    pub alpha: T,
    /// s²/km
    pub beta2: T,
    /// s³/km
    pub beta3: T,
    /// Total differential group delay over `length`, s.
    pub dgd: T,
    /// 1/(W·km)
    pub gamma_nl: T,
    /// Step size, km. Defaults to `length/100` capped at 0.5 km.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dz: Option<T>,
    /// Frame size for streamed propagation; power of two.
    pub nfft: usize,
}

impl<T: Scalar> Default for FiberParams<T> {
    fn default() -> Self {
        Self {
            length: T::of(25.0),
            alpha: T::of(0.2),
            beta2: T::of(-2.17e-23),
            beta3: T::of(1.0e-37),
            dgd: T::of(0.5e-12),
            gamma_nl: T::of(1.3),
            dz: None,
            nfft: 32768,
        }
    }
}

impl<T: Scalar> FiberParams<T> {
    /// Lossless, dispersionless, zero-length fiber.
    pub fn transparent() -> Self {
        Self {
            length: T::zero(),
            alpha: T::zero(),
            beta2: T::zero(),
            beta3: T::zero(),
            dgd: T::zero(),
            gamma_nl: T::zero(),
            dz: None,
            nfft: 32768,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        let p = |n: &str| format!("{prefix}.{n}");
        let finite = |v: T, n: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(p(n), "must be finite"))
            }
        };
        finite(self.length, "length")?;
        finite(self.alpha, "alpha")?;
        finite(self.beta2, "beta2")?;
        finite(self.beta3, "beta3")?;
        finite(self.dgd, "dgd")?;
        finite(self.gamma_nl, "gamma_nl")?;
        if self.length < T::zero() {
            return Err(Error::param(p("length"), "must be >= 0"));
        }
        if self.alpha < T::zero() {
            return Err(Error::param(p("alpha"), "must be >= 0"));
        }
        if let Some(dz) = self.dz {
            if !(dz > T::zero()) || !dz.is_finite() {
                return Err(Error::param(p("dz"), "must be > 0"));
            }
        }
        if !self.nfft.is_power_of_two() || self.nfft < 2 {
            return Err(Error::param(p("nfft"), format!("{} is not a power of two", self.nfft)));
        }
        Ok(())
    }

    /// Attenuation in 1/km (natural-log convention).
    pub fn alpha_linear(&self) -> T {
        self.alpha * T::LN_10() / T::of(10.0)
    }

    pub fn step_size(&self) -> T {
        self.dz
            .unwrap_or_else(|| (self.length / T::of(100.0)).min(T::of(0.5)))
    }

    /// Segment lengths covering `length`; the last may be partial.
    pub fn segments(&self) -> Vec<T> {
        if !(self.length > T::zero()) {
            return Vec::new();
        }
        let dz = self.step_size();
        let count = (self.length / dz).ceil().to_usize().unwrap_or(1).max(1);
        let mut out = vec![dz; count - 1];
        let last = self.length - dz * T::of_usize(count - 1);
        out.push(if last > T::zero() { last } else { dz });
        out
    }

    /// Upper bound on the group-delay spread across the sampled band, s.
    fn max_group_delay(&self, sample_rate: T) -> T {
        let w = T::PI() * sample_rate;
        (self.beta2.abs() * w + self.beta3.abs() * w * w * T::of(0.5)) * self.length + self.dgd.abs() * T::of(0.5)
    }
}

/// Angular frequencies in FFT order, rad/s.
pub fn angular_frequencies<T: Scalar>(n: usize, sample_rate: T) -> Vec<T> {
    let scale = T::TAU() * sample_rate / T::of_usize(n);
    (0..n)
        .map(|k| {
            let signed = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
            T::of(signed) * scale
        })
        .collect()
}

/// Transfer functions for x and y over a length `h` km.
fn linear_operator<T: Scalar>(params: &FiberParams<T>, omega: &[T], h: T) -> (Vec<Complex<T>>, Vec<Complex<T>>) {
    let half = T::of(0.5);
    let sixth = T::one() / T::of(6.0);
    let amp = (-params.alpha_linear() * half * h).exp();
    let tau = if params.length > T::zero() {
        params.dgd * (h / params.length) * half
    } else {
        T::zero()
    };
    let mut hx = Vec::with_capacity(omega.len());
    let mut hy = Vec::with_capacity(omega.len());
    for &w in omega {
        let disp = (params.beta2 * half * w * w - params.beta3 * sixth * w * w * w) * h;
        hx.push(Complex::from_polar(amp, disp + w * tau));
        hy.push(Complex::from_polar(amp, disp - w * tau));
    }
    (hx, hy)
}

fn is_identity<T: Scalar>(op: &[Complex<T>]) -> bool {
    op.iter().all(|c| c.re == T::one() && c.im == T::zero())
}

struct LinearOp<T> {
    x: Option<Vec<Complex<T>>>,
    y: Option<Vec<Complex<T>>>,
}

enum Stage<T> {
    Linear(usize),
    Nonlinear { gamma_h: T, z: T },
}

/// Precomputed SSFM schedule for a fixed frame length.
struct SsfmPlan<T: Scalar> {
    n: usize,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
    ops: Vec<LinearOp<T>>,
    stages: Vec<Stage<T>>,
}

/// Per-segment snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentDiagnostic<T> {
    /// km
    pub z: T,
    /// W
    pub peak_power: T,
    /// Power-weighted RMS width, s.
    pub rms_width: T,
}

impl<T: Scalar> SsfmPlan<T> {
    fn new(params: &FiberParams<T>, n: usize, sample_rate: T) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let omega = angular_frequencies(n, sample_rate);
        let norm = T::one() / T::of_usize(n);
        let mut ops: Vec<(T, LinearOp<T>)> = Vec::new();
        let op_index = |h: T, ops: &mut Vec<(T, LinearOp<T>)>| -> usize {
            if let Some(i) = ops.iter().position(|(len, _)| *len == h) {
                return i;
            }
            let (hx, hy) = linear_operator(params, &omega, h);
            let prep = |op: Vec<Complex<T>>| {
                if is_identity(&op) {
                    None
                } else {
                    Some(op.into_iter().map(|c| c * norm).collect())
                }
            };
            ops.push((h, LinearOp { x: prep(hx), y: prep(hy) }));
            ops.len() - 1
        };

        let mut stages = Vec::new();
        let segments = params.segments();
        if params.gamma_nl == T::zero() {
            if !segments.is_empty() {
                stages.push(Stage::Linear(op_index(params.length, &mut ops)));
            }
        } else {
            let half = T::of(0.5);
            let mut z = T::zero();
            for (i, &h) in segments.iter().enumerate() {
                let lead = if i == 0 { h * half } else { (segments[i - 1] + h) * half };
                stages.push(Stage::Linear(op_index(lead, &mut ops)));
                z += h;
                stages.push(Stage::Nonlinear {
                    gamma_h: params.gamma_nl * h,
                    z,
                });
            }
            if let Some(&last) = segments.last() {
                stages.push(Stage::Linear(op_index(last * half, &mut ops)));
            }
        }
        Self {
            n,
            fwd,
            inv,
            ops: ops.into_iter().map(|(_, op)| op).collect(),
            stages,
        }
    }

    fn apply_linear(
        &self,
        op: &Option<Vec<Complex<T>>>,
        buf: &mut [Complex<T>],
        scratch: &mut [Complex<T>],
    ) {
        if let Some(h) = op {
            self.fwd.process_with_scratch(buf, scratch);
            buf.iter_mut().zip(h).for_each(|(b, h)| *b = *b * *h);
            self.inv.process_with_scratch(buf, scratch);
        }
    }

    fn run(
        &self,
        ex: &mut [Complex<T>],
        ey: &mut [Complex<T>],
        dt: T,
        mut diag: Option<&mut Vec<SegmentDiagnostic<T>>>,
    ) -> Result<()> {
        debug_assert_eq!(ex.len(), self.n);
        let scratch_len = self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len());
        let mut sx = vec![Complex::new(T::zero(), T::zero()); scratch_len];
        let mut sy = sx.clone();
        let mut y_nonzero = ey.iter().any(|c| c.re != T::zero() || c.im != T::zero());
        let mut segment = 0;
        for stage in &self.stages {
            match stage {
                Stage::Linear(i) => {
                    let op = &self.ops[*i];
                    if y_nonzero {
                        rayon::join(
                            || self.apply_linear(&op.x, ex, &mut sx),
                            || self.apply_linear(&op.y, ey, &mut sy),
                        );
                    } else {
                        self.apply_linear(&op.x, ex, &mut sx);
                    }
                }
                Stage::Nonlinear { gamma_h, z } => {
                    let mut total = T::zero();
                    for (a, b) in ex.iter_mut().zip(ey.iter_mut()) {
                        let p = a.norm_sqr() + b.norm_sqr();
                        total += p;
                        let rot = Complex::from_polar(T::one(), *gamma_h * p);
                        *a = *a * rot;
                        *b = *b * rot;
                    }
                    if !total.is_finite() {
                        return Err(Error::NonFiniteField { segment });
                    }
                    if let Some(d) = diag.as_deref_mut() {
                        d.push(snapshot(ex, ey, dt, *z));
                    }
                    segment += 1;
                }
            }
            y_nonzero = y_nonzero || ey.iter().any(|c| c.re != T::zero() || c.im != T::zero());
        }
        let finite = ex.iter().chain(ey.iter()).all(|c| c.re.is_finite() && c.im.is_finite());
        if !finite {
            return Err(Error::NonFiniteField { segment });
        }
        Ok(())
    }
}

fn snapshot<T: Scalar>(ex: &[Complex<T>], ey: &[Complex<T>], dt: T, z: T) -> SegmentDiagnostic<T> {
    let power: Vec<T> = ex.iter().zip(ey).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).collect();
    SegmentDiagnostic {
        z,
        peak_power: power.iter().cloned().fold(T::zero(), T::max),
        rms_width: rms_width(&power, dt),
    }
}

/// Power-weighted RMS width of a trace, s.
pub fn rms_width<T: Scalar>(power: &[T], dt: T) -> T {
    let total = power.iter().fold(T::zero(), |a, &p| a + p);
    if !(total > T::zero()) {
        return T::zero();
    }
    let mean = power
        .iter()
        .enumerate()
        .fold(T::zero(), |a, (k, &p)| a + T::of_usize(k) * p)
        / total;
    let var = power.iter().enumerate().fold(T::zero(), |a, (k, &p)| {
        let d = T::of_usize(k) - mean;
        a + d * d * p
    }) / total;
    var.sqrt() * dt
}

fn run_whole<T: Scalar>(
    field: &OpticalField<T>,
    params: &FiberParams<T>,
    diag: Option<&mut Vec<SegmentDiagnostic<T>>>,
) -> Result<OpticalField<T>> {
    params.validate("fiber")?;
    let plan = SsfmPlan::new(params, field.len(), field.sample_rate());
    let mut out = field.clone();
    let dt = field.dt();
    let (ex, ey) = out.envelopes_mut();
    plan.run(ex, ey, dt, diag)?;
    Ok(out)
}

/// One linear step of length `dz` km, treating the block as one period.
pub fn linear_step<T: Scalar>(field: &OpticalField<T>, params: &FiberParams<T>, dz: T) -> Result<OpticalField<T>> {
    let single = FiberParams {
        gamma_nl: T::zero(),
        dgd: if params.length > T::zero() {
            params.dgd * dz / params.length
        } else {
            T::zero()
        },
        length: dz,
        dz: Some(dz.max(T::min_positive_value())),
        ..params.clone()
    };
    run_whole(field, &single, None)
}

/// Kerr phase rotation `e^{iγ|A|²dz}` with `|A|²` the total power.
pub fn nonlinear_step<T: Scalar>(field: &OpticalField<T>, params: &FiberParams<T>, dz: T) -> OpticalField<T> {
    let gamma_h = params.gamma_nl * dz;
    let mut out = field.clone();
    if gamma_h == T::zero() {
        return out;
    }
    let (ex, ey) = out.envelopes_mut();
    for (a, b) in ex.iter_mut().zip(ey.iter_mut()) {
        let rot = Complex::from_polar(T::one(), gamma_h * (a.norm_sqr() + b.norm_sqr()));
        *a = *a * rot;
        *b = *b * rot;
    }
    out
}

/// Full-length propagation of one block, treated as a single periodic frame.
pub fn propagate<T: Scalar>(field: &OpticalField<T>, params: &FiberParams<T>) -> Result<OpticalField<T>> {
    run_whole(field, params, None)
}

/// As [`propagate`], also returning one snapshot per segment.
pub fn propagate_with_diagnostics<T: Scalar>(
    field: &OpticalField<T>,
    params: &FiberParams<T>,
) -> Result<(OpticalField<T>, Vec<SegmentDiagnostic<T>>)> {
    let mut diag = Vec::new();
    let out = run_whole(field, params, Some(&mut diag))?;
    Ok((out, diag))
}

pub fn write_diagnostics_csv<T: Scalar, W: Write>(mut w: W, diag: &[SegmentDiagnostic<T>]) -> Result<()> {
    writeln!(w, "z_km,peak_power_w,rms_width_s")?;
    for d in diag {
        writeln!(w, "{:e},{:e},{:e}", d.z, d.peak_power, d.rms_width)?;
    }
    Ok(())
}

/// Streamed propagation by overlap-save.
///
/// Each frame of `nfft` samples holds `guard` samples of history, `nfft −
/// 2·guard` new samples and `guard` samples of look-ahead; only the central
/// part is emitted. Output therefore lags input by up to one frame and
/// [`FiberStream::finish`] flushes the tail.
pub struct FiberStream<T: Scalar> {
    plan: Option<SsfmPlan<T>>,
    guard: usize,
    buf_x: Vec<Complex<T>>,
    buf_y: Vec<Complex<T>>,
    sample_rate: T,
    carrier: Option<T>,
    start_t0: Option<T>,
    pushed: usize,
    emitted: usize,
}

impl<T: Scalar> FiberStream<T> {
    pub fn new(params: &FiberParams<T>, sample_rate: T, samples_per_pulse: usize) -> Result<Self> {
        params.validate("fiber")?;
        let probe = SsfmPlan::new(params, 2, sample_rate);
        let trivial = probe.stages.iter().all(|s| match s {
            Stage::Linear(i) => probe.ops[*i].x.is_none() && probe.ops[*i].y.is_none(),
            Stage::Nonlinear { gamma_h, .. } => *gamma_h == T::zero(),
        });
        if trivial {
            return Ok(Self {
                plan: None,
                guard: 0,
                buf_x: Vec::new(),
                buf_y: Vec::new(),
                sample_rate,
                carrier: None,
                start_t0: None,
                pushed: 0,
                emitted: 0,
            });
        }
        let spread = (T::of(4.0) * params.max_group_delay(sample_rate) * sample_rate)
            .ceil()
            .to_usize()
            .unwrap_or(usize::MAX / 4);
        let spp = samples_per_pulse.max(1);
        let guard = (spread + 4 * spp).div_ceil(spp) * spp;
        if params.nfft < 2 * guard + spp {
            return Err(Error::param(
                "fiber.nfft",
                format!("{} too small for a guard of {guard} samples per side", params.nfft),
            ));
        }
        let zero = Complex::new(T::zero(), T::zero());
        Ok(Self {
            plan: Some(SsfmPlan::new(params, params.nfft, sample_rate)),
            guard,
            buf_x: vec![zero; guard],
            buf_y: vec![zero; guard],
            sample_rate,
            carrier: None,
            start_t0: None,
            pushed: 0,
            emitted: 0,
        })
    }

    pub fn guard(&self) -> usize {
        self.guard
    }

    /// Feeds a block; returns whatever output is complete.
    pub fn push(&mut self, field: &OpticalField<T>) -> Result<Option<OpticalField<T>>> {
        if field.sample_rate() != self.sample_rate {
            return Err(Error::GridMismatch("fiber stream sample rate changed".into()));
        }
        self.carrier.get_or_insert(field.carrier_frequency());
        self.start_t0.get_or_insert(field.t0());
        self.pushed += field.len();
        if self.plan.is_none() {
            self.emitted += field.len();
            return Ok(Some(field.clone()));
        }
        self.buf_x.extend_from_slice(field.ex());
        self.buf_y.extend_from_slice(field.ey());
        self.drain_frames()
    }

    /// Flushes the remaining samples.
    pub fn finish(&mut self) -> Result<Option<OpticalField<T>>> {
        if self.plan.is_none() {
            return Ok(None);
        }
        let remaining = self.pushed - self.emitted;
        if remaining == 0 {
            return Ok(None);
        }
        let n = self.plan.as_ref().map(|p| p.n).unwrap_or(0);
        let block = n - 2 * self.guard;
        let frames = remaining.div_ceil(block);
        let target = frames * block + 2 * self.guard;
        let zero = Complex::new(T::zero(), T::zero());
        self.buf_x.resize(target, zero);
        self.buf_y.resize(target, zero);
        let start = self.emitted;
        let out = self.drain_frames()?;
        self.emitted = self.pushed;
        Ok(out.map(|f| {
            let (mut ex, mut ey) = f.into_envelopes();
            ex.truncate(remaining);
            ey.truncate(remaining);
            self.make_field(ex, ey, start)
        }))
    }

    fn make_field(&self, ex: Vec<Complex<T>>, ey: Vec<Complex<T>>, offset: usize) -> OpticalField<T> {
        let t0 = self.start_t0.unwrap_or_else(T::zero) + T::of_usize(offset) / self.sample_rate;
        OpticalField::from_parts_unchecked(self.sample_rate, self.carrier.unwrap_or_else(T::zero), t0, ex, ey)
    }

    fn drain_frames(&mut self) -> Result<Option<OpticalField<T>>> {
        let plan = match &self.plan {
            Some(p) => p,
            None => return Ok(None),
        };
        let n = plan.n;
        let g = self.guard;
        let block = n - 2 * g;
        let dt = T::one() / self.sample_rate;
        let mut out_x = Vec::new();
        let mut out_y = Vec::new();
        while self.buf_x.len() >= n {
            let mut fx = self.buf_x[..n].to_vec();
            let mut fy = self.buf_y[..n].to_vec();
            plan.run(&mut fx, &mut fy, dt, None)?;
            out_x.extend_from_slice(&fx[g..g + block]);
            out_y.extend_from_slice(&fy[g..g + block]);
            self.buf_x.drain(..block);
            self.buf_y.drain(..block);
        }
        if out_x.is_empty() {
            return Ok(None);
        }
        let offset = self.emitted;
        let len = out_x.len();
        let f = self.make_field(out_x, out_y, offset);
        self.emitted += len.min(self.pushed - self.emitted);
        Ok(Some(f))
    }
}
