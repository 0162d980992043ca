//! End-to-end DPS protocol: Alice's phase encoding, transmission, Bob's
//! measurement, time-tag sifting, error estimation and leakage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::{optical_qber_from_visibility, spectrum, visibility, PowerMeter, Spectrum};
use crate::channel::FiberStream;
use crate::config::RunConfig;
use crate::field::{OpticalField, PulseWindowing};
use crate::modulation::{
    im_pushpull, phase_modulate, pm_drive, polarize, synthesize_rf_drive, ImParams, PmParams, PolarizerParams, Voa,
    VoaParams,
};
use crate::receiver::{Cause, DetectionEvent, Detector, Dli, SlotIntegrator, Spad};
use crate::source::{DfbLaser, LaserParams};
use crate::{Error, RandomStream, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingRecord {
    pub bits: Vec<u8>,
    /// `π·bit`
    pub phases: Vec<f64>,
    /// Common phase of the train. Never observable here.
    pub global_phase: f64,
    pub n_pulses: usize,
}

impl EncodingRecord {
    pub fn new(bits: Vec<u8>, global_phase: f64) -> Self {
        let phases = bits.iter().map(|&b| if b != 0 { std::f64::consts::PI } else { 0.0 }).collect();
        let n_pulses = bits.len();
        Self {
            bits,
            phases,
            global_phase,
            n_pulses,
        }
    }
}

/// Uniform random bits from a dedicated stream.
pub fn random_bits(n: usize, rng: &mut RandomStream) -> Vec<u8> {
    (0..n).map(|_| rng.bernoulli(0.5) as u8).collect()
}

/// `d[n] = 0` when pulses `n` and `n+1` share a phase (mod 2π), else 1.
pub fn differential_bits(record: &EncodingRecord) -> Result<Vec<u8>> {
    if record.phases.len() < 2 {
        return Err(Error::OutOfRange("differential bits need at least 2 pulses".into()));
    }
    let tau = std::f64::consts::TAU;
    Ok(record
        .phases
        .windows(2)
        .map(|w| {
            let d = (w[1] - w[0]).rem_euclid(tau);
            let near_zero = d < 1e-9 || tau - d < 1e-9;
            (!near_zero) as u8
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SiftedKey {
    pub alice_bits: Vec<u8>,
    pub bob_bits: Vec<u8>,
    /// Interference-slot indices `n` (pulses `n` and `n+1`).
    pub positions: Vec<u64>,
}

impl SiftedKey {
    pub fn len(&self) -> usize {
        self.alice_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alice_bits.is_empty()
    }

    pub fn errors(&self) -> usize {
        self.alice_bits.iter().zip(&self.bob_bits).filter(|(a, b)| a != b).count()
    }

    pub fn error_rate(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyKey);
        }
        Ok(self.errors() as f64 / self.len() as f64)
    }
}

/// Outcome of sifting, with the slots dropped for double clicks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SiftOutcome {
    pub key: SiftedKey,
    pub double_clicks: usize,
    /// Clicks in the first detector slot, which has no interfering partner.
    pub unpaired: usize,
}

/// Matches time-tagged clicks against Alice's record.
///
/// Detector slot `m` carries the interference of pulses `m − 1` and `m`,
/// i.e. interference slot `n = m − 1`. A D1 click reads bit 0 and a D2 click
/// bit 1. Slots where both detectors fire are discarded.
pub fn sift(record: &EncodingRecord, events: &[DetectionEvent]) -> Result<SiftOutcome> {
    let d = differential_bits(record)?;
    let mut by_slot: BTreeMap<u64, (bool, bool)> = BTreeMap::new();
    for e in events {
        if e.pulse_index >= record.n_pulses as u64 {
            return Err(Error::EventOutOfRange {
                slot: e.pulse_index,
                pulses: record.n_pulses,
            });
        }
        let entry = by_slot.entry(e.pulse_index).or_default();
        match e.detector {
            Detector::D1 => entry.0 = true,
            Detector::D2 => entry.1 = true,
        }
    }
    let mut out = SiftOutcome::default();
    for (m, (d1, d2)) in by_slot {
        if m == 0 {
            out.unpaired += 1;
            continue;
        }
        if d1 && d2 {
            out.double_clicks += 1;
            continue;
        }
        let n = m - 1;
        out.key.alice_bits.push(d[n as usize]);
        out.key.bob_bits.push(if d2 { 1 } else { 0 });
        out.key.positions.push(n);
    }
    Ok(out)
}

/// Discloses a uniformly sampled `sample_fraction` of the key, returning the
/// error rate on the disclosed bits and the undisclosed remainder.
pub fn estimate_qber(key: &SiftedKey, sample_fraction: f64, rng: &mut RandomStream) -> Result<(f64, SiftedKey)> {
    if key.is_empty() {
        return Err(Error::EmptyKey);
    }
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(Error::OutOfRange(format!("sample fraction {sample_fraction} not in (0, 1]")));
    }
    let n = key.len();
    let k = ((sample_fraction * n as f64).round() as usize).clamp(1, n);
    // Partial Fisher–Yates: the first k entries become the disclosed sample.
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.index(n - i);
        idx.swap(i, j);
    }
    let mut disclosed = vec![false; n];
    let mut errors = 0usize;
    for &i in &idx[..k] {
        disclosed[i] = true;
        if key.alice_bits[i] != key.bob_bits[i] {
            errors += 1;
        }
    }
    let mut rest = SiftedKey::default();
    for i in (0..n).filter(|&i| !disclosed[i]) {
        rest.alice_bits.push(key.alice_bits[i]);
        rest.bob_bits.push(key.bob_bits[i]);
        rest.positions.push(key.positions[i]);
    }
    Ok((errors as f64 / k as f64, rest))
}

/// `h(e) = −e·log₂e − (1−e)·log₂(1−e)`, with `h(0) = h(1) = 0`.
pub fn binary_entropy(e: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&e) {
        return Err(Error::OutOfRange(format!("error rate {e} not in [0, 1]")));
    }
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok(term(e) + term(1.0 - e))
}

/// `|#1 − #0| / length`
pub fn key_asymmetry(bits: &[u8]) -> f64 {
    if bits.is_empty() {
        return 0.0;
    }
    let ones = bits.iter().filter(|&&b| b != 0).count() as f64;
    let zeros = bits.len() as f64 - ones;
    (ones - zeros).abs() / bits.len() as f64
}

/// Alice's hardware parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AliceHardware<T> {
    pub laser: LaserParams<T>,
    pub polarizer: PolarizerParams<T>,
    pub im: ImParams<T>,
    pub pm: PmParams<T>,
    pub voa: VoaParams<T>,
}

impl AliceHardware<f64> {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            laser: cfg.laser.clone(),
            polarizer: cfg.polarizer.clone(),
            im: cfg.im.clone(),
            pm: cfg.pm.clone(),
            voa: cfg.voa.clone(),
        }
    }
}

/// Streaming transmitter: laser → polarizer → IM → PM → VOA.
pub struct Alice<T: Scalar> {
    hw: AliceHardware<T>,
    window: PulseWindowing<T>,
    laser: DfbLaser<T>,
    drive_period: Vec<T>,
    voa: Voa<T>,
}

impl<T: Scalar> Alice<T> {
    pub fn new(hw: AliceHardware<T>, window: PulseWindowing<T>, laser_rng: RandomStream) -> Result<Self> {
        hw.polarizer.validate("polarizer")?;
        hw.pm.validate("pm")?;
        let laser = DfbLaser::new(hw.laser.clone(), window.sample_rate(), laser_rng)?;
        let drive = synthesize_rf_drive(&hw.im, &window)?;
        let voa = Voa::new(hw.voa.clone())?;
        Ok(Self {
            hw,
            window,
            laser,
            drive_period: drive.period,
            voa,
        })
    }

    pub fn laser(&self) -> &DfbLaser<T> {
        &self.laser
    }

    pub fn voa_attenuation(&self) -> Option<T> {
        self.voa.applied_db()
    }

    /// Encodes one block of bits into the fiber-input field.
    pub fn prepare_block(&mut self, bits: &[u8]) -> Result<OpticalField<T>> {
        if bits.is_empty() {
            return Err(Error::OutOfRange("no bits to encode".into()));
        }
        let spp = self.window.samples_per_pulse();
        let cw = self.laser.emit(bits.len() * spp)?;
        let polarized = polarize(&cw, &self.hw.polarizer);
        let mut rf = Vec::with_capacity(bits.len() * spp);
        for _ in 0..bits.len() {
            rf.extend_from_slice(&self.drive_period);
        }
        let pulses = im_pushpull(&polarized, &rf, &self.hw.im)?;
        let encoded = phase_modulate(&pulses, &pm_drive(bits, &self.hw.pm, &self.window), &self.hw.pm)?;
        self.voa.apply(&encoded, &self.window)
    }
}

/// One-shot preparation of a whole train.
pub fn alice_prepare<T: Scalar>(
    bits: &[u8],
    hw: &AliceHardware<T>,
    window: &PulseWindowing<T>,
    rng: RandomStream,
) -> Result<(OpticalField<T>, EncodingRecord)> {
    let mut alice = Alice::new(hw.clone(), *window, rng)?;
    let field = alice.prepare_block(bits)?;
    Ok((field, EncodingRecord::new(bits.to_vec(), hw.laser.phi0.to_f64_lossy())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CauseCounts {
    pub photon: u64,
    pub dark: u64,
    pub afterpulse: u64,
}

impl CauseCounts {
    fn add(&mut self, cause: Cause) {
        match cause {
            Cause::Photon => self.photon += 1,
            Cause::Dark => self.dark += 1,
            Cause::Afterpulse => self.afterpulse += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.photon + self.dark + self.afterpulse
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMetrics {
    pub seed: u64,
    pub config_hash: String,
    pub n_pulses: u64,
    /// Error rate on the disclosed sample.
    pub qber: f64,
    /// Error rate over the whole sifted key.
    pub qber_sifted: f64,
    pub sifted_bits: u64,
    pub sifted_rate_per_pulse: f64,
    pub remaining_key_bits: u64,
    pub visibility: f64,
    pub optical_qber: f64,
    /// `h(qber)`, bits per key bit.
    pub leakage_bits_per_bit: f64,
    pub key_asymmetry: f64,
    pub double_clicks: u64,
    pub clicks_d1: CauseCounts,
    pub clicks_d2: CauseCounts,
    pub launch_power_w: f64,
    pub launch_mean_photon_number: f64,
    pub voa_attenuation_db: f64,
    pub rin_clamp_events: u64,
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: ProtocolMetrics,
    pub events_d1: Vec<DetectionEvent>,
    pub events_d2: Vec<DetectionEvent>,
    pub sifted: SiftedKey,
    /// Key left after disclosure.
    pub key: SiftedKey,
    pub spectrum: Option<Spectrum<f64>>,
}

/// Bob's chain, fed with whatever the fiber emits.
struct Bob {
    dli: Dli<f64>,
    int_a: SlotIntegrator<f64>,
    int_b: SlotIntegrator<f64>,
    d1: Spad,
    d2: Spad,
    events_d1: Vec<DetectionEvent>,
    events_d2: Vec<DetectionEvent>,
}

impl Bob {
    fn receive(&mut self, field: &OpticalField<f64>) -> Result<()> {
        let (a, b) = self.dli.process(field)?;
        let mu_a = self.int_a.push(&a);
        let mu_b = self.int_b.push(&b);
        self.events_d1.extend(self.d1.detect(&mu_a));
        self.events_d2.extend(self.d2.detect(&mu_b));
        Ok(())
    }
}

/// Visibility of port A under all-equal and alternating calibration
/// patterns, each sent through a fresh transmitter, fiber and interferometer.
pub fn measure_visibility(cfg: &RunConfig, rng: &RandomStream) -> Result<f64> {
    let window = cfg.window()?;
    let n = cfg.run.calibration_pulses;
    let port_a = |bits: Vec<u8>, label: &str| -> Result<Vec<f64>> {
        let mut alice = Alice::new(AliceHardware::from_config(cfg), window, rng.substream(label))?;
        let mut fiber = FiberStream::new(&cfg.fiber, window.sample_rate(), window.samples_per_pulse())?;
        let mut dli = Dli::new(&cfg.dli, &window)?;
        let mut power = Vec::with_capacity(n * window.samples_per_pulse());
        let block = cfg.run.block_pulses;
        let mut chunks = Vec::new();
        for chunk in bits.chunks(block) {
            let f = alice.prepare_block(chunk)?;
            if let Some(out) = fiber.push(&f)? {
                chunks.push(out);
            }
        }
        if let Some(out) = fiber.finish()? {
            chunks.push(out);
        }
        for c in &chunks {
            let (a, _) = dli.process(c)?;
            power.extend(a.power_trace());
        }
        Ok(power)
    };
    let constructive = port_a(vec![0; n], "constructive")?;
    let destructive = port_a((0..n).map(|k| (k % 2) as u8).collect(), "destructive")?;
    visibility(&constructive, &destructive, &window)
}

/// Runs the full protocol for `cfg` with `seed`.
pub fn run_protocol(cfg: &RunConfig, seed: u64) -> Result<RunOutput> {
    run_protocol_with(cfg, seed, false)
}

pub fn run_protocol_with(cfg: &RunConfig, seed: u64, capture_spectrum: bool) -> Result<RunOutput> {
    cfg.validate()?;
    let window = cfg.window()?;
    let root = RandomStream::new(seed);
    let n = cfg.run.n_pulses;
    let bits = random_bits(n, &mut root.substream("alice.bits"));
    let record = EncodingRecord::new(bits, cfg.laser.phi0);

    let mut alice = Alice::new(AliceHardware::from_config(cfg), window, root.substream("laser"))?;
    let mut fiber = FiberStream::new(&cfg.fiber, window.sample_rate(), window.samples_per_pulse())?;
    let mut bob = Bob {
        dli: Dli::new(&cfg.dli, &window)?,
        int_a: SlotIntegrator::new(&window),
        int_b: SlotIntegrator::new(&window),
        d1: Spad::new(&cfg.spad, Detector::D1, window.rep_rate(), root.substream("spad.d1"))?,
        d2: Spad::new(&cfg.spad, Detector::D2, window.rep_rate(), root.substream("spad.d2"))?,
        events_d1: Vec::new(),
        events_d2: Vec::new(),
    };
    let mut meter = PowerMeter::new(&window);
    let spectrum_samples = if capture_spectrum {
        cfg.analysis.spectrum_pulses * window.samples_per_pulse()
    } else {
        0
    };
    let mut captured: Option<OpticalField<f64>> = None;

    for (b, chunk) in record.bits.chunks(cfg.run.block_pulses).enumerate() {
        let mut step = || -> Result<()> {
            let field = alice.prepare_block(chunk)?;
            meter.observe(&field);
            if spectrum_samples > 0 {
                let have = captured.as_ref().map_or(0, |c| c.len());
                if have < spectrum_samples {
                    match captured.as_mut() {
                        Some(c) => c.append(&field)?,
                        None => captured = Some(field.clone()),
                    }
                }
            }
            if let Some(out) = fiber.push(&field)? {
                bob.receive(&out)?;
            }
            Ok(())
        };
        step().map_err(|e| e.in_block(b))?;
    }
    let blocks = n.div_ceil(cfg.run.block_pulses);
    if let Some(out) = fiber.finish().map_err(|e| e.in_block(blocks))? {
        bob.receive(&out).map_err(|e| e.in_block(blocks))?;
    }

    let mut events: Vec<DetectionEvent> = bob.events_d1.iter().chain(&bob.events_d2).copied().collect();
    events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let outcome = sift(&record, &events)?;
    let sifted = outcome.key;
    let (qber, key, qber_sifted) = if sifted.is_empty() {
        (0.0, SiftedKey::default(), 0.0)
    } else {
        let (q, rest) = estimate_qber(&sifted, cfg.run.qber_sample_fraction, &mut root.substream("qber.sample"))?;
        (q, rest, sifted.error_rate()?)
    };
    let v = measure_visibility(cfg, &root.substream("calibration"))?;

    let mut clicks_d1 = CauseCounts::default();
    let mut clicks_d2 = CauseCounts::default();
    bob.events_d1.iter().for_each(|e| clicks_d1.add(e.cause));
    bob.events_d2.iter().for_each(|e| clicks_d2.add(e.cause));

    let spectrum = match captured {
        Some(c) => {
            let take = c.len().min(spectrum_samples);
            let (ex, ey) = c.into_envelopes();
            let f = OpticalField::new(
                window.sample_rate(),
                cfg.laser.carrier_frequency(),
                0.0,
                ex[..take].to_vec(),
                ey[..take].to_vec(),
            )?;
            Some(spectrum(&f, cfg.analysis.spectrum_nfft, cfg.analysis.window)?)
        }
        None => None,
    };

    let metrics = ProtocolMetrics {
        seed,
        config_hash: cfg.hash(),
        n_pulses: n as u64,
        qber,
        qber_sifted,
        sifted_bits: sifted.len() as u64,
        sifted_rate_per_pulse: sifted.len() as f64 / n as f64,
        remaining_key_bits: key.len() as u64,
        visibility: v,
        optical_qber: optical_qber_from_visibility(v.clamp(0.0, 1.0))?,
        leakage_bits_per_bit: binary_entropy(qber)?,
        key_asymmetry: key_asymmetry(&sifted.bob_bits),
        double_clicks: outcome.double_clicks as u64,
        clicks_d1,
        clicks_d2,
        launch_power_w: meter.average_power(),
        launch_mean_photon_number: meter.mean_photon_number(),
        voa_attenuation_db: alice.voa_attenuation().unwrap_or(0.0),
        rin_clamp_events: alice.laser().power_clamp_events() as u64,
    };
    Ok(RunOutput {
        metrics,
        events_d1: bob.events_d1,
        events_d2: bob.events_d2,
        sifted,
        key,
        spectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn rec(bits: &[u8]) -> EncodingRecord {
        EncodingRecord::new(bits.to_vec(), 0.0)
    }

    #[test]
    fn differential_examples() {
        assert_eq!(differential_bits(&rec(&[0, 0])).unwrap(), vec![0]);
        assert_eq!(differential_bits(&rec(&[0, 1, 1, 0])).unwrap(), vec![1, 0, 1]);
        assert!(differential_bits(&rec(&[1])).is_err());
        let mut r = RandomStream::new(5);
        let bits = random_bits(1000, &mut r);
        let d = differential_bits(&rec(&bits)).unwrap();
        for n in 0..999 {
            assert_eq!(d[n], bits[n] ^ bits[n + 1]);
        }
        let raw = EncodingRecord {
            bits: vec![0, 0],
            phases: vec![0.1, 0.1 + 2.0 * PI],
            global_phase: 0.0,
            n_pulses: 2,
        };
        assert_eq!(differential_bits(&raw).unwrap(), vec![0]);
    }

    fn ev(slot: u64, detector: Detector) -> DetectionEvent {
        DetectionEvent {
            pulse_index: slot,
            detector,
            timestamp: slot as f64 * 1e-9,
            cause: Cause::Photon,
        }
    }

    #[test]
    fn sift_rules() {
        let r = rec(&[0, 0, 1, 1]);
        // d = [0, 1, 0]
        let out = sift(&r, &[ev(0, Detector::D1), ev(1, Detector::D1), ev(2, Detector::D2), ev(3, Detector::D1)]).unwrap();
        assert_eq!(out.unpaired, 1);
        assert_eq!(out.key.alice_bits, vec![0, 1, 0]);
        assert_eq!(out.key.bob_bits, vec![0, 1, 0]);
        assert_eq!(out.key.positions, vec![0, 1, 2]);

        let err = sift(&r, &[ev(1, Detector::D2)]).unwrap();
        assert_eq!(err.key.errors(), 1);

        let double = sift(&r, &[ev(2, Detector::D1), ev(2, Detector::D2)]).unwrap();
        assert!(double.key.is_empty());
        assert_eq!(double.double_clicks, 1);

        assert!(matches!(sift(&r, &[ev(4, Detector::D1)]), Err(Error::EventOutOfRange { .. })));
    }

    fn key(alice: Vec<u8>, bob: Vec<u8>) -> SiftedKey {
        let positions = (0..alice.len() as u64).collect();
        SiftedKey {
            alice_bits: alice,
            bob_bits: bob,
            positions,
        }
    }

    #[test]
    fn qber_estimation() {
        let mut rng = RandomStream::new(9);
        let same = key(vec![0, 1, 1, 0, 1], vec![0, 1, 1, 0, 1]);
        assert_eq!(estimate_qber(&same, 0.6, &mut rng).unwrap().0, 0.0);
        let comp = key(vec![0, 1, 1, 0], vec![1, 0, 0, 1]);
        assert_eq!(estimate_qber(&comp, 1.0, &mut rng).unwrap().0, 1.0);
        let n = 10_000;
        let alice = random_bits(n, &mut rng);
        let mut bob = alice.clone();
        for i in (0..n).step_by(20) {
            bob[i] ^= 1;
        }
        let planted = key(alice, bob);
        let (q, rest) = estimate_qber(&planted, 1.0, &mut rng).unwrap();
        assert_eq!(q, 0.05);
        assert!(rest.is_empty());
        let (_, rest) = estimate_qber(&planted, 0.25, &mut rng).unwrap();
        assert_eq!(rest.len(), 7500);
        assert!(rest.positions.windows(2).all(|w| w[1] > w[0]));
        assert!(matches!(estimate_qber(&SiftedKey::default(), 0.5, &mut rng), Err(Error::EmptyKey)));
        assert!(estimate_qber(&planted, 0.0, &mut rng).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        let h = binary_entropy(0.11).unwrap();
        let direct = -0.11 * 0.11f64.log2() - 0.89 * 0.89f64.log2();
        assert!((h - direct).abs() < 1e-15);
        assert!((h - 0.4999).abs() < 1e-4);
        assert!(binary_entropy(1.1).is_err());
    }

    #[test]
    fn asymmetry() {
        assert_eq!(key_asymmetry(&[0, 1, 0, 1]), 0.0);
        assert_eq!(key_asymmetry(&[1, 1, 1, 0]), 0.5);
        assert_eq!(key_asymmetry(&[]), 0.0);
    }

    fn small_ideal(n: usize) -> RunConfig {
        let mut c = RunConfig::ideal();
        c.run.n_pulses = n;
        c.run.block_pulses = 256;
        c.run.calibration_pulses = 64;
        c.fiber.nfft = 4096;
        c
    }

    #[test]
    fn alice_patterns_route_cleanly() {
        let cfg = small_ideal(64);
        let w = cfg.window().unwrap();
        let hw = AliceHardware::from_config(&cfg);
        for (bits, port_a_lit) in [(vec![0u8; 64], true), ((0..64).map(|k| (k % 2) as u8).collect(), false)] {
            let (f, _) = alice_prepare(&bits, &hw, &w, RandomStream::new(1)).unwrap();
            let (a, b) = crate::receiver::dli_transform(&f, &cfg.dli, &w).unwrap();
            let (pa, pb) = (a.energy(), b.energy());
            let first_slot = f.pulse_energy(&w, 0).unwrap();
            // Ignore the half-filled first slot.
            if port_a_lit {
                assert!(pb <= first_slot && pa > 10.0 * pb);
            } else {
                assert!(pa <= first_slot && pb > 10.0 * pa);
            }
        }
    }

    #[test]
    fn alice_meets_target_mpn() {
        let cfg = small_ideal(2000);
        let w = cfg.window().unwrap();
        let mut rng = RandomStream::new(4);
        let bits = random_bits(2000, &mut rng);
        let (f, record) = alice_prepare(&bits, &AliceHardware::from_config(&cfg), &w, rng.substream("laser")).unwrap();
        assert_eq!(record.phases.len(), 2000);
        let (_, mu) = crate::analysis::power_meter(&f, &w);
        assert!((mu - 0.2).abs() < 0.2 * 1e-3, "{mu}");
    }

    #[test]
    fn ideal_run_has_no_errors() {
        let cfg = small_ideal(20_000);
        let out = run_protocol(&cfg, 11).unwrap();
        assert_eq!(out.metrics.qber_sifted, 0.0);
        assert!(out.metrics.sifted_bits > 200);
        assert!((out.metrics.visibility - 1.0).abs() < 1e-9);
        let expect = 1.0 - (-0.1f64 * 0.2).exp();
        let sigma = (expect / 20_000.0).sqrt();
        assert!((out.metrics.sifted_rate_per_pulse - expect).abs() < 4.0 * sigma);
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = small_ideal(5000);
        let a = run_protocol(&cfg, 3).unwrap();
        let b = run_protocol(&cfg, 3).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.events_d1, b.events_d1);
        let c = run_protocol(&cfg, 4).unwrap();
        assert_ne!(a.events_d1, c.events_d1);
    }

    #[test]
    fn block_errors_carry_context() {
        let mut cfg = small_ideal(1000);
        cfg.voa = VoaParams::target(1e12);
        match run_protocol(&cfg, 1) {
            Err(Error::Block { block: 0, source }) => assert!(matches!(*source, Error::CannotAmplify { .. })),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn entropy_symmetric_and_bounded(e in 0.0f64..=1.0) {
            let h = binary_entropy(e).unwrap();
            prop_assert!((0.0..=1.0).contains(&h));
            prop_assert!((h - binary_entropy(1.0 - e).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn entropy_increasing_below_half(a in 0.0f64..0.5, b in 0.0f64..0.5) {
            prop_assume!(a < b);
            prop_assert!(binary_entropy(a).unwrap() < binary_entropy(b).unwrap());
        }
    }
}
