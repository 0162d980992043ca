//! DFB semiconductor laser: single-mode rate equations, output power and
//! the emitted field with intensity noise, phase noise and thermal detuning.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::field::{OpticalField, ELEMENTARY_CHARGE, PLANCK, SPEED_OF_LIGHT};
use crate::{Error, RandomStream, Result, Scalar};

/// Physical parameters of the DFB laser, SI units throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct LaserParams<T> {
    /// Optical confinement factor Γ.
    pub gamma: T,
    /// Gain coefficient, m³/s.
    pub g0: T,
    /// Carrier density at transparency, m⁻³.
    pub n0: T,
    /// Gain compression factor, m³.
    pub eps_c: T,
    /// Photon lifetime, s.
    pub tau_p: T,
    /// Spontaneous-emission coupling factor β.
    pub beta_sp: T,
    /// Carrier lifetime, s.
    pub tau_n: T,
    /// Active-region volume, m³.
    pub v_a: T,
    /// Differential quantum efficiency.
    pub eta0: T,
    /// Central wavelength at the reference temperature, m.
    pub lambda0: T,
    /// Lorentzian linewidth (FWHM), Hz.
    pub linewidth: T,
    /// Relative intensity noise, dB/Hz. `-inf` disables it.
    pub rin: T,
    /// Noise bandwidth used with `rin`, Hz.
    pub sys_bandwidth: T,
    /// Standard deviation of the injection current, A.
    pub sigma_i: T,
    /// Reference temperature for `lambda0`, K.
    pub t_ref: T,
    /// Laser set temperature, K.
    pub t_set: T,
    /// Wavelength temperature coefficient, m/K.
    pub dlambda_dt: T,
    /// Initial absolute optical phase, rad.
    pub phi0: T,
    /// Electronic charge, C.
    pub e_charge: T,
    /// Planck constant, J·s.
    pub planck: T,
    /// Constant injection current, A.
    pub current: T,
}

impl<T: Scalar> Default for LaserParams<T> {
    fn default() -> Self {
        Self {
            gamma: T::of(0.35),
            g0: T::of(3.0e-12),
            n0: T::of(1.0e24),
            eps_c: T::of(1.0e-23),
            tau_p: T::of(1.0e-12),
            beta_sp: T::of(1.0e-5),
            tau_n: T::of(3.0e-9),
            v_a: T::of(1.0e-16),
            eta0: T::of(0.2),
            lambda0: T::of(1550e-9),
            linewidth: T::of(1.0e6),
            rin: T::of(-150.0),
            sys_bandwidth: T::of(10e9),
            sigma_i: T::zero(),
            t_ref: T::of(298.15),
            t_set: T::of(298.15),
            dlambda_dt: T::of(0.1e-9),
            phi0: T::zero(),
            e_charge: T::of(ELEMENTARY_CHARGE),
            planck: T::of(PLANCK),
            current: T::of(30e-3),
        }
    }
}

impl<T: Scalar> LaserParams<T> {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let p = |name: &str| format!("{prefix}.{name}");
        let positive = [
            ("g0", self.g0),
            ("tau_p", self.tau_p),
            ("tau_n", self.tau_n),
            ("v_a", self.v_a),
            ("lambda0", self.lambda0),
            ("e_charge", self.e_charge),
            ("planck", self.planck),
            ("eta0", self.eta0),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::param(p(name), format!("{v} must be > 0")));
            }
        }
        if !(self.gamma > T::zero() && self.gamma <= T::one()) {
            return Err(Error::param(p("gamma"), "must lie in (0, 1]"));
        }
        if !(self.beta_sp >= T::zero() && self.beta_sp <= T::one()) {
            return Err(Error::param(p("beta_sp"), "must lie in [0, 1]"));
        }
        let non_negative = [
            ("n0", self.n0),
            ("eps_c", self.eps_c),
            ("linewidth", self.linewidth),
            ("sys_bandwidth", self.sys_bandwidth),
            ("sigma_i", self.sigma_i),
            ("current", self.current),
        ];
        for (name, v) in non_negative {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::param(p(name), format!("{v} must be finite and >= 0")));
            }
        }
        if self.rin.is_nan() || self.rin == T::infinity() {
            return Err(Error::param(p("rin"), "must be finite or -inf"));
        }
        if !(self.t_set > T::zero() && self.t_ref > T::zero()) {
            return Err(Error::param(p("t_set"), "temperatures must be > 0 K"));
        }
        if !(self.emission_wavelength() > T::zero()) {
            return Err(Error::param(p("dlambda_dt"), "thermal shift drives wavelength <= 0"));
        }
        Ok(())
    }

    /// Wavelength at the set temperature, `λ₀ + δλ·(T_L − T_ref)`.
    pub fn emission_wavelength(&self) -> T {
        self.lambda0 + self.dlambda_dt * (self.t_set - self.t_ref)
    }

    pub fn carrier_frequency(&self) -> T {
        T::of(SPEED_OF_LIGHT) / self.emission_wavelength()
    }

    /// Optical frequency at `λ₀`, used by the power relation.
    pub fn nominal_frequency(&self) -> T {
        T::of(SPEED_OF_LIGHT) / self.lambda0
    }

    /// Approximate threshold current `e·V_a·N_th/τ_n` with `N_th = N₀ + 1/(Γ g₀ τ_p)`.
    pub fn threshold_current(&self) -> T {
        let n_th = self.n0 + T::one() / (self.gamma * self.g0 * self.tau_p);
        self.e_charge * self.v_a * n_th / self.tau_n
    }
}

/// Carrier and photon densities, m⁻³.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LaserState<T> {
    pub n: T,
    pub s: T,
}

impl<T: Scalar> LaserState<T> {
    pub fn new(n: T, s: T) -> Self {
        Self { n, s }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }
}

/// Right-hand side of the coupled carrier/photon rate equations.
pub fn rate_derivatives<T: Scalar>(state: LaserState<T>, current: T, p: &LaserParams<T>) -> (T, T) {
    let LaserState { n, s } = state;
    let gain = p.g0 * (n - p.n0) / (T::one() + p.eps_c * s);
    let dn = current / (p.e_charge * p.v_a) - n / p.tau_n - gain * s;
    let ds = (p.gamma * gain - T::one() / p.tau_p) * s + p.beta_sp * p.gamma * n / p.tau_n;
    (dn, ds)
}

/// RK4 trajectory plus how often the non-negativity clamp fired.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    /// State after each step; `states[k]` follows `current[k]`.
    pub states: Vec<LaserState<T>>,
    pub clamp_events: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn last(&self) -> Option<LaserState<T>> {
        self.states.last().copied()
    }
}

/// Largest step accepted by [`integrate`].
pub fn max_step<T: Scalar>(p: &LaserParams<T>) -> T {
    p.tau_p / T::of(10.0)
}

#[inline]
fn rk4_step<T: Scalar>(x: LaserState<T>, current: T, dt: T, p: &LaserParams<T>) -> LaserState<T> {
    let half = T::of(0.5) * dt;
    let add = |a: LaserState<T>, (dn, ds): (T, T), h: T| LaserState::new(a.n + h * dn, a.s + h * ds);
    let k1 = rate_derivatives(x, current, p);
    let k2 = rate_derivatives(add(x, k1, half), current, p);
    let k3 = rate_derivatives(add(x, k2, half), current, p);
    let k4 = rate_derivatives(add(x, k3, dt), current, p);
    let sixth = dt / T::of(6.0);
    let two = T::of(2.0);
    LaserState::new(
        x.n + sixth * (k1.0 + two * k2.0 + two * k3.0 + k4.0),
        x.s + sixth * (k1.1 + two * k2.1 + two * k3.1 + k4.1),
    )
}

/// Advances one step, clamping negative densities to zero. Returns whether the clamp fired.
fn advance<T: Scalar>(
    x: &mut LaserState<T>,
    current: T,
    dt: T,
    p: &LaserParams<T>,
    step: usize,
) -> Result<bool> {
    let mut next = rk4_step(*x, current, dt, p);
    if !next.n.is_finite() || !next.s.is_finite() {
        return Err(Error::Diverged { step });
    }
    let mut clamped = false;
    if next.n < T::zero() {
        next.n = T::zero();
        clamped = true;
    }
    if next.s < T::zero() {
        next.s = T::zero();
        clamped = true;
    }
    *x = next;
    Ok(clamped)
}

/// Fixed-step RK4 integration of the rate equations over a current waveform.
pub fn integrate<T: Scalar>(
    params: &LaserParams<T>,
    current: &[T],
    dt: T,
    initial: LaserState<T>,
) -> Result<Trajectory<T>> {
    let bound = max_step(params);
    if !(dt > T::zero()) || dt > bound * (T::one() + T::epsilon()) {
        return Err(Error::StepTooLarge {
            dt: dt.to_f64_lossy(),
            bound: bound.to_f64_lossy(),
        });
    }
    let mut x = initial;
    let mut states = Vec::with_capacity(current.len());
    let mut clamp_events = 0;
    for (k, &i) in current.iter().enumerate() {
        if advance(&mut x, i, dt, params, k)? {
            clamp_events += 1;
        }
        states.push(x);
    }
    Ok(Trajectory { states, clamp_events })
}

fn residual_norm<T: Scalar>(x: LaserState<T>, current: T, p: &LaserParams<T>) -> T {
    let (dn, ds) = rate_derivatives(x, current, p);
    let pump = current / (p.e_charge * p.v_a);
    let scale_n = pump + x.n.abs() / p.tau_n;
    let scale_s = x.s.abs() / p.tau_p + p.beta_sp * p.gamma * x.n.abs() / p.tau_n;
    let rn = if scale_n > T::zero() { dn.abs() / scale_n } else { dn.abs() };
    let rs = if scale_s > T::zero() { ds.abs() / scale_s } else { ds.abs() };
    rn.max(rs)
}

/// Equilibrium `(N*, S*)` where both rate equations vanish.
///
/// Eliminating the gain term gives `N` as a linear function of `S`; the
/// remaining scalar equation is bracketed on `[0, Γ τ_p I/(eV_a)]` and
/// bisected, then polished with damped 2-D Newton steps.
pub fn steady_state<T: Scalar>(params: &LaserParams<T>, current: T) -> Result<LaserState<T>> {
    let p = params;
    if !(current >= T::zero()) {
        return Err(Error::param("laser.current", "must be >= 0"));
    }
    if current == T::zero() {
        return Ok(LaserState::zero());
    }
    let one = T::one();
    let pump = current / (p.e_charge * p.v_a);
    let tol = T::of(1e-10).max(T::of(64.0) * T::epsilon());

    let initial = if p.beta_sp == one {
        // dN/dt = 0 fixes S; dS/dt = 0 is then linear in N.
        let s = p.gamma * p.tau_p * pump;
        let damp = one + p.eps_c * s;
        let a = p.gamma * p.g0 * s / damp + p.gamma / p.tau_n;
        let b = p.gamma * p.g0 * p.n0 * s / damp + s / p.tau_p;
        LaserState::new(b / a, s)
    } else {
        let n_of_s = |s: T| (pump - s / (p.gamma * p.tau_p)) * p.tau_n / (one - p.beta_sp);
        let f = |s: T| {
            let n = n_of_s(s);
            (p.gamma * p.g0 * (n - p.n0) / (one + p.eps_c * s) - one / p.tau_p) * s
                + p.beta_sp * p.gamma * n / p.tau_n
        };
        let s_max = p.gamma * p.tau_p * pump;
        let mut lo = T::zero();
        if !(f(lo) > T::zero()) {
            // β = 0: S = 0 is a root; prefer the lasing root if the net gain is positive.
            let probe = s_max * T::of(1e-12);
            if f(probe) > T::zero() {
                lo = probe;
            } else {
                return polish(p, current, LaserState::new(n_of_s(T::zero()), T::zero()), tol);
            }
        }
        let mut hi = s_max;
        for _ in 0..400 {
            let mid = T::of(0.5) * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) > T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = T::of(0.5) * (lo + hi);
        LaserState::new(n_of_s(s), s)
    };
    polish(p, current, initial, tol)
}

fn polish<T: Scalar>(p: &LaserParams<T>, current: T, mut x: LaserState<T>, tol: T) -> Result<LaserState<T>> {
    let one = T::one();
    let max_iter = 50;
    let mut r = residual_norm(x, current, p);
    for _ in 0..max_iter {
        if r < tol * T::of(1e-3) {
            break;
        }
        let (dn, ds) = rate_derivatives(x, current, p);
        let damp = one + p.eps_c * x.s;
        let j11 = -one / p.tau_n - p.g0 * x.s / damp;
        let j12 = -p.g0 * (x.n - p.n0) / (damp * damp);
        let j21 = p.gamma * p.g0 * x.s / damp + p.beta_sp * p.gamma / p.tau_n;
        let j22 = p.gamma * p.g0 * (x.n - p.n0) / (damp * damp) - one / p.tau_p;
        let det = j11 * j22 - j12 * j21;
        if det == T::zero() || !det.is_finite() {
            break;
        }
        let step_n = (dn * j22 - ds * j12) / det;
        let step_s = (j11 * ds - j21 * dn) / det;
        let mut lambda = one;
        let mut improved = false;
        for _ in 0..30 {
            let trial = LaserState::new(
                (x.n - lambda * step_n).max(T::zero()),
                (x.s - lambda * step_s).max(T::zero()),
            );
            let rt = residual_norm(trial, current, p);
            if rt < r {
                x = trial;
                r = rt;
                improved = true;
                break;
            }
            lambda = lambda * T::of(0.5);
        }
        if !improved {
            break;
        }
    }
    if r < tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: r.to_f64_lossy(),
        })
    }
}

/// Output power `P = S V_a η₀ h ν / (2 Γ τ_p)` for one photon density.
#[inline]
pub fn photon_density_to_power<T: Scalar>(s: T, p: &LaserParams<T>) -> T {
    s * p.v_a * p.eta0 * p.planck * p.nominal_frequency() / (T::of(2.0) * p.gamma * p.tau_p)
}

pub fn power_from_photon_density<T: Scalar>(s: &[T], params: &LaserParams<T>) -> Vec<T> {
    s.iter().map(|&x| photon_density_to_power(x, params)).collect()
}

/// Noise state carried between blocks: optical phase and clamp diagnostics.
#[derive(Debug, Clone)]
struct NoiseSynth<T> {
    phase: T,
    rin_sigma_rel: T,
    phase_sigma: T,
    clamp_events: usize,
    samples: usize,
}

impl<T: Scalar> NoiseSynth<T> {
    fn new(params: &LaserParams<T>, sample_rate: T) -> Self {
        let dt = T::one() / sample_rate;
        let rin_sigma_rel = (T::of(10.0).powf(params.rin / T::of(10.0)) * params.sys_bandwidth).sqrt();
        let phase_sigma = (T::of(2.0) * T::PI() * params.linewidth * dt).sqrt();
        Self {
            phase: params.phi0,
            rin_sigma_rel,
            phase_sigma,
            clamp_events: 0,
            samples: 0,
        }
    }

    fn render(&mut self, power: &[T], rng: &mut RandomStream) -> Vec<Complex<T>> {
        let mut out = Vec::with_capacity(power.len());
        for &p in power {
            // Draw order is fixed (intensity, then phase); silent terms draw nothing.
            let dp = if self.rin_sigma_rel > T::zero() {
                self.rin_sigma_rel * p * rng.normal_as::<T>()
            } else {
                T::zero()
            };
            let mut inst = p + dp;
            if inst < T::zero() {
                inst = T::zero();
                self.clamp_events += 1;
            }
            out.push(Complex::from_polar(inst.sqrt(), self.phase));
            if self.phase_sigma > T::zero() {
                self.phase += self.phase_sigma * rng.normal_as::<T>();
            }
        }
        self.samples += power.len();
        out
    }
}

/// Renders a power waveform into an x-polarized field with RIN and
/// Wiener phase noise, starting at phase `φ₀` and time zero.
pub fn synthesize_field<T: Scalar>(
    power: &[T],
    params: &LaserParams<T>,
    rng: &mut RandomStream,
    sample_rate: T,
) -> Result<OpticalField<T>> {
    let mut synth = NoiseSynth::new(params, sample_rate);
    let ex = synth.render(power, rng);
    OpticalField::x_polarized(sample_rate, params.carrier_frequency(), T::zero(), ex)
}

/// Continuously running laser that emits consecutive field blocks.
#[derive(Debug, Clone)]
pub struct DfbLaser<T> {
    params: LaserParams<T>,
    sample_rate: T,
    state: LaserState<T>,
    steady_power: T,
    noise: NoiseSynth<T>,
    ode_clamp_events: usize,
    rng: RandomStream,
    emitted: usize,
}

impl<T: Scalar> DfbLaser<T> {
    /// Starts at the steady state of the configured bias current.
    pub fn new(params: LaserParams<T>, sample_rate: T, rng: RandomStream) -> Result<Self> {
        params.validate("laser")?;
        let state = steady_state(&params, params.current)?;
        let steady_power = photon_density_to_power(state.s, &params);
        let noise = NoiseSynth::new(&params, sample_rate);
        Ok(Self {
            params,
            sample_rate,
            state,
            steady_power,
            noise,
            ode_clamp_events: 0,
            rng,
            emitted: 0,
        })
    }

    pub fn params(&self) -> &LaserParams<T> {
        &self.params
    }

    pub fn steady_power(&self) -> T {
        self.steady_power
    }

    pub fn state(&self) -> LaserState<T> {
        self.state
    }

    /// Samples where RIN drove the instantaneous power negative.
    pub fn power_clamp_events(&self) -> usize {
        self.noise.clamp_events
    }

    pub fn ode_clamp_events(&self) -> usize {
        self.ode_clamp_events
    }

    pub fn emitted_samples(&self) -> usize {
        self.emitted
    }

    /// Emits the next `len` samples.
    ///
    /// With `sigma_i = 0` the bias is constant and the laser sits on its
    /// equilibrium, so the mean power is exactly the steady-state power.
    /// Otherwise each sample draws a jittered current and the rate equations
    /// are stepped at `τ_p/10` or finer across the sample.
    pub fn emit(&mut self, len: usize) -> Result<OpticalField<T>> {
        let power = if self.params.sigma_i == T::zero() {
            vec![self.steady_power; len]
        } else {
            let sample_dt = T::one() / self.sample_rate;
            let bound = max_step(&self.params);
            let substeps = (sample_dt / bound).ceil().to_usize().unwrap_or(1).max(1);
            let h = sample_dt / T::of_usize(substeps);
            let mut out = Vec::with_capacity(len);
            for k in 0..len {
                let i = (self.params.current + self.params.sigma_i * self.rng.normal_as::<T>()).max(T::zero());
                for _ in 0..substeps {
                    if advance(&mut self.state, i, h, &self.params, self.emitted + k)? {
                        self.ode_clamp_events += 1;
                    }
                }
                out.push(photon_density_to_power(self.state.s, &self.params));
            }
            out
        };
        let ex = self.noise.render(&power, &mut self.rng);
        let t0 = T::of_usize(self.emitted) / self.sample_rate;
        self.emitted += len;
        OpticalField::x_polarized(self.sample_rate, self.params.carrier_frequency(), t0, ex)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> LaserParams<f64> {
        LaserParams::default()
    }

    /// Second, independently written evaluator of the rate equations.
    fn rates_by_hand(n: f64, s: f64, i: f64, p: &LaserParams<f64>) -> (f64, f64) {
        let stim = p.g0 * (n - p.n0) * s / (1.0 + p.eps_c * s);
        let injection = i / p.e_charge / p.v_a;
        let recomb = n / p.tau_n;
        let spont = p.beta_sp * p.gamma * recomb;
        (injection - recomb - stim, p.gamma * stim - s / p.tau_p + spont)
    }

    #[test]
    fn derivative_examples() {
        let p = params();
        let (dn, ds) = rate_derivatives(LaserState::zero(), 0.0, &p);
        // N = 0 < N₀ yields a positive stimulated term times S = 0.
        assert_eq!((dn, ds), (0.0, 0.0));
        let (_, ds) = rate_derivatives(LaserState::new(1.5e24, 0.0), 0.0, &p);
        assert!(ds > 0.0);
        assert!((ds - p.beta_sp * p.gamma * 1.5e24 / p.tau_n).abs() < 1e-6 * ds);
        for &(n, s, i) in &[(1.2e24, 3e20, 0.02), (2.1e24, 1e19, 0.05), (5e23, 7e21, 0.001)] {
            let a = rate_derivatives(LaserState::new(n, s), i, &p);
            let b = rates_by_hand(n, s, i, &p);
            assert!((a.0 - b.0).abs() <= 1e-12 * a.0.abs().max(1.0));
            assert!((a.1 - b.1).abs() <= 1e-12 * a.1.abs().max(1.0));
        }
    }

    #[test]
    fn zero_current_stays_at_origin() {
        let p = params();
        let traj = integrate(&p, &vec![0.0; 1000], 1e-13, LaserState::zero()).unwrap();
        assert!(traj.states.iter().all(|x| x.n == 0.0 && x.s == 0.0));
        assert_eq!(traj.clamp_events, 0);
    }

    #[test]
    fn rejects_large_steps() {
        let p = params();
        assert!(matches!(
            integrate(&p, &[0.01], 1e-12, LaserState::zero()),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn steady_state_is_an_equilibrium() {
        let p = params();
        let ith = p.threshold_current();
        assert!((ith - 10.4e-3).abs() < 0.5e-3, "{ith}");
        for &i in &[0.0, 0.3 * ith, 0.9 * ith, 1.5 * ith, 30e-3, 100e-3] {
            let x = steady_state(&p, i).unwrap();
            assert!(residual_norm(x, i, &p) < 1e-10, "I={i} x={x:?}");
        }
        let x = steady_state(&p, 0.0).unwrap();
        assert_eq!((x.n, x.s), (0.0, 0.0));
    }

    #[test]
    fn below_threshold_net_gain_is_negative() {
        let p = params();
        let i = 0.5 * p.threshold_current();
        let x = steady_state(&p, i).unwrap();
        let net = p.gamma * p.g0 * (x.n - p.n0) / (1.0 + p.eps_c * x.s);
        assert!(net < 1.0 / p.tau_p);
        let above = steady_state(&p, 3.0 * p.threshold_current()).unwrap();
        assert!(x.s < 1e-3 * above.s);
    }

    #[test]
    fn steady_state_edge_betas() {
        let mut p = params();
        p.beta_sp = 0.0;
        let x = steady_state(&p, 30e-3).unwrap();
        assert!(x.s > 0.0);
        let x = steady_state(&p, 5e-3).unwrap();
        assert_eq!(x.s, 0.0);
        p.beta_sp = 1.0;
        let x = steady_state(&p, 30e-3).unwrap();
        assert!(residual_norm(x, 30e-3, &p) < 1e-10);
    }

    #[test]
    fn power_relation() {
        let p = params();
        assert_eq!(power_from_photon_density(&[0.0], &p), vec![0.0]);
        let s = [1e20, 2e20, 4.3e20];
        let a = power_from_photon_density(&s, &p);
        assert!((a[1] - 2.0 * a[0]).abs() < 1e-18);
        // Hand evaluation for S = 4.3e20: hν = 1.28158e-19 J.
        let hv = PLANCK * SPEED_OF_LIGHT / 1550e-9;
        let expected = 4.3e20 * 1e-16 * 0.2 * hv / (2.0 * 0.35 * 1e-12);
        assert!((a[2] - expected).abs() < 1e-12 * expected);
        assert!((a[2] - 1.5745e-3).abs() < 1e-6, "{}", a[2]);
    }

    #[test]
    fn noiseless_field_is_constant() {
        let mut p = params();
        p.rin = f64::NEG_INFINITY;
        p.linewidth = 0.0;
        p.phi0 = 0.7;
        let mut rng = RandomStream::new(3);
        let f = synthesize_field(&vec![2e-3; 256], &p, &mut rng, 16e9).unwrap();
        let a0 = f.ex()[0];
        assert!(f.ex().iter().all(|&e| e == a0));
        assert!((a0.norm() - 2e-3f64.sqrt()).abs() < 1e-15);
        assert!((a0.arg() - 0.7).abs() < 1e-15);
        assert!(f.ey().iter().all(|e| e.norm() == 0.0));
        assert_eq!(f.carrier_frequency(), SPEED_OF_LIGHT / 1550e-9);
    }

    #[test]
    fn temperature_shifts_carrier() {
        let mut p = params();
        p.t_set = p.t_ref + 10.0;
        let lambda = p.emission_wavelength();
        assert!((lambda - 1551e-9).abs() < 1e-18);
        assert!(p.carrier_frequency() < p.nominal_frequency());
    }

    #[test]
    fn default_rin_rarely_clamps() {
        let p = params();
        let mut laser = DfbLaser::new(p, 16e9, RandomStream::new(11)).unwrap();
        let f = laser.emit(100_000).unwrap();
        assert_eq!(f.len(), 100_000);
        assert!((laser.power_clamp_events() as f64) < 1e-3 * 100_000.0);
    }

    #[test]
    fn current_noise_path_runs() {
        let mut p = params();
        p.sigma_i = 1e-4;
        p.rin = f64::NEG_INFINITY;
        let mut laser = DfbLaser::new(p, 16e9, RandomStream::new(1)).unwrap();
        let f = laser.emit(32).unwrap();
        let mean = f.mean_power();
        assert!((mean - laser.steady_power()).abs() < 0.05 * laser.steady_power());
    }

    #[test]
    fn validation_names_fields() {
        let mut p = params();
        p.tau_p = -1.0;
        let err = p.validate("laser").unwrap_err().to_string();
        assert!(err.contains("laser.tau_p"), "{err}");
    }

    #[test]
    fn f32_steady_state() {
        let p = LaserParams::<f32>::default();
        let x = steady_state(&p, 30e-3).unwrap();
        let x64 = steady_state(&LaserParams::<f64>::default(), 30e-3).unwrap();
        assert!(((x.s as f64) - x64.s).abs() < 1e-4 * x64.s);
    }
}
