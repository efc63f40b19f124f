//! Spectral-encoding fiber system: sech pulse, programmable spectral mask,
//! split-step propagation and spectrum-analyser detection.
//!
//! Conventions:
//! * time in ps, power in W, energy in pJ (W·ps), frequency offsets in THz,
//!   angular frequency in rad/ps, wavelength in nm;
//! * `β₂` in ps²/km, `γ` in 1/(W·km), `α` in 1/km, fiber length in m;
//! * the envelope obeys `∂A/∂z = −(α/2)A − i(β₂/2)∂²A/∂t² + iγ|A|²A`, so
//!   negative `β₂` is anomalous dispersion and supports bright solitons;
//! * spectra use the forward transform `Ã_k = Σ_n A_n e^{−2πikn/N}`; FFT bin
//!   `k` with offset `f_k` sits at optical frequency `ν₀ − f_k`.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::par;
use crate::sampling::SampleMatrix;

/// Speed of light in nm·THz.
pub const SPEED_OF_LIGHT_NM_THZ: f64 = 299_792.458;

/// `τ_FWHM = SECH_FWHM_FACTOR · τ` for a sech² intensity profile.
pub const SECH_FWHM_FACTOR: f64 = 1.763;

/// Uniform time grid centred on `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n_points: usize,
    pub t_window_ps: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid {
            n_points: 1 << 14,
            t_window_ps: 256.0,
        }
    }
}

impl TimeGrid {
    pub fn dt(&self) -> f64 {
        self.t_window_ps / self.n_points as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        (i as f64 - (self.n_points / 2) as f64) * self.dt()
    }

    /// Frequency offset (THz) of FFT bin `k`.
    pub fn freq(&self, k: usize) -> f64 {
        let n = self.n_points;
        let kk = if k < n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        };
        kk / self.t_window_ps
    }

    /// Wavelength (nm) of FFT bin `k` around the carrier `lambda0`.
    pub fn wavelength(&self, k: usize, lambda0: f64) -> f64 {
        SPEED_OF_LIGHT_NM_THZ / (SPEED_OF_LIGHT_NM_THZ / lambda0 - self.freq(k))
    }

    /// Spectral sample spacing (nm) at the carrier.
    pub fn wavelength_spacing(&self, lambda0: f64) -> f64 {
        lambda0 * lambda0 / SPEED_OF_LIGHT_NM_THZ / self.t_window_ps
    }

    fn validate(&self) -> Result<()> {
        if !self.n_points.is_power_of_two() || self.n_points < 2 {
            return Err(Error::invalid(format!(
                "grid size {} must be a power of two",
                self.n_points
            )));
        }
        if !(self.t_window_ps > 0.0) {
            return Err(Error::invalid("time window must be positive"));
        }
        Ok(())
    }
}

/// Complex envelope on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseField {
    pub envelope: Vec<Complex64>,
    pub dt: f64,
    pub t_window: f64,
    pub center_wavelength: f64,
}

impl PulseField {
    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            n_points: self.envelope.len(),
            t_window_ps: self.t_window,
        }
    }

    /// `∫|A|² dt` in pJ.
    pub fn energy(&self) -> f64 {
        self.envelope.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.dt
    }

    pub fn peak_power(&self) -> f64 {
        self.envelope
            .iter()
            .map(|a| a.norm_sqr())
            .fold(0.0, f64::max)
    }

    /// Unnormalised forward transform of the envelope.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let ffts = FftPair::new(self.envelope.len());
        let mut s = self.envelope.clone();
        ffts.forward(&mut s);
        s
    }
}

/// Forward and inverse plans for one grid size.
#[derive(Clone)]
pub struct FftPair {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    n: usize,
}

impl FftPair {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftPair {
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            n,
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.fwd.process(data);
    }

    /// Inverse transform including the `1/N` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inv.process(data);
        let s = 1.0 / self.n as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }
}

/// `τ` from the intensity FWHM.
pub fn tau_from_fwhm(tau_fwhm_ps: f64) -> f64 {
    tau_fwhm_ps / SECH_FWHM_FACTOR
}

/// `A(t) = sqrt(P_peak) · sech(t/τ)` with `τ = τ_FWHM / 1.763`.
pub fn make_sech_pulse(
    p_peak: f64,
    tau_fwhm_ps: f64,
    grid: TimeGrid,
    center_wavelength_nm: f64,
) -> Result<PulseField> {
    grid.validate()?;
    if !(tau_fwhm_ps > 0.0) {
        return Err(Error::invalid("pulse FWHM must be positive"));
    }
    if !(p_peak >= 0.0) {
        return Err(Error::invalid("peak power must be non-negative"));
    }
    let tau = tau_from_fwhm(tau_fwhm_ps);
    if grid.t_window_ps < 20.0 * tau {
        return Err(Error::invalid(format!(
            "time window {} ps is smaller than 20·τ = {} ps",
            grid.t_window_ps,
            20.0 * tau
        )));
    }
    let amp = p_peak.sqrt();
    let envelope = (0..grid.n_points)
        .map(|i| Complex64::new(amp / (grid.time(i) / tau).cosh(), 0.0))
        .collect();
    Ok(PulseField {
        envelope,
        dt: grid.dt(),
        t_window: grid.t_window_ps,
        center_wavelength: center_wavelength_nm,
    })
}

/// Which input drives each spectral bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingScheme {
    /// Bins alternate between two inputs: `u1, u2, u1, u2, …`.
    Alternating2,
    /// Five inputs in consecutive bins, the pattern repeated: `u1 … u5, u1 … u5, …`.
    Sequential5x4,
    /// Explicit zero-based input index for every bin.
    Custom(Vec<usize>),
}

impl EncodingScheme {
    pub fn n_inputs(&self) -> usize {
        match self {
            EncodingScheme::Alternating2 => 2,
            EncodingScheme::Sequential5x4 => 5,
            EncodingScheme::Custom(map) => map.iter().max().map_or(0, |m| m + 1),
        }
    }

    pub fn input_of(&self, bin: usize) -> usize {
        match self {
            EncodingScheme::Alternating2 => bin % 2,
            EncodingScheme::Sequential5x4 => bin % 5,
            EncodingScheme::Custom(map) => map[bin],
        }
    }
}

/// Finite spectral response of the programmable filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentFilter {
    None,
    /// Box (flattop) kernel of the given full width in wavelength.
    Flattop {
        width_nm: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub span_nm: f64,
    pub n_bins: usize,
    pub scheme: EncodingScheme,
    pub instrument_filter: InstrumentFilter,
    pub phase_noise_std_rad: f64,
    /// Field transmission of the filter outside the encoded span.
    pub out_of_span_transmission: f64,
}

pub const DEFAULT_PHASE_NOISE_STD: f64 = 0.15e-2 * 2.0 * std::f64::consts::PI;
pub const DEFAULT_FILTER_WIDTH_NM: f64 = 0.08;

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            span_nm: 2.5,
            n_bins: 20,
            scheme: EncodingScheme::Alternating2,
            instrument_filter: InstrumentFilter::Flattop {
                width_nm: DEFAULT_FILTER_WIDTH_NM,
            },
            phase_noise_std_rad: DEFAULT_PHASE_NOISE_STD,
            out_of_span_transmission: 0.0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bins == 0 || !(self.span_nm > 0.0) {
            return Err(Error::invalid(
                "encoder needs a positive span and bin count",
            ));
        }
        let q = self.scheme.n_inputs();
        match &self.scheme {
            EncodingScheme::Custom(map) if map.len() != self.n_bins => {
                return Err(Error::invalid(format!(
                    "custom encoding lists {} bins, encoder has {}",
                    map.len(),
                    self.n_bins
                )))
            }
            EncodingScheme::Custom(_) => {}
            _ if !self.n_bins.is_multiple_of(q) => {
                return Err(Error::invalid(format!(
                    "{} bins cannot be shared evenly by {q} inputs",
                    self.n_bins
                )))
            }
            _ => {}
        }
        if let InstrumentFilter::Flattop { width_nm } = self.instrument_filter {
            if !(width_nm > 0.0) {
                return Err(Error::invalid("flattop filter width must be positive"));
            }
        }
        if !(self.phase_noise_std_rad >= 0.0) {
            return Err(Error::invalid("phase noise std must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.out_of_span_transmission) {
            return Err(Error::invalid(
                "out-of-span transmission must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiberConfig {
    pub beta2: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub length_m: f64,
    pub max_phase_per_step_rad: f64,
}

impl Default for FiberConfig {
    fn default() -> Self {
        FiberConfig {
            beta2: -23.0,
            gamma: 1.2,
            alpha: 0.0,
            length_m: 5.0,
            max_phase_per_step_rad: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub span_nm: f64,
    pub resolution_nm: f64,
    pub n_readouts: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            span_nm: 3.5,
            resolution_nm: 0.05,
            n_readouts: 71,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution_nm > 0.0) {
            return Err(Error::invalid("detector resolution must be positive"));
        }
        let expect = (self.span_nm / self.resolution_nm).round() as usize + 1;
        if self.n_readouts != expect {
            return Err(Error::invalid(format!(
                "detector with span {} nm and resolution {} nm has {expect} readouts, not {}",
                self.span_nm, self.resolution_nm, self.n_readouts
            )));
        }
        Ok(())
    }

    /// Wavelength of readout `j`.
    pub fn wavelength(&self, j: usize, lambda0: f64) -> f64 {
        lambda0 - self.span_nm / 2.0 + j as f64 * self.resolution_nm
    }
}

/// Per-bin spectral mask factors for one input vector.
fn bin_values(u: &[f64], cfg: &EncoderConfig, phase: Option<&[f64]>) -> Vec<Complex64> {
    (0..cfg.n_bins)
        .map(|b| {
            let v = u[cfg.scheme.input_of(b)];
            let amp = v.signum() * v.abs().sqrt();
            let amp = if v == 0.0 { 0.0 } else { amp };
            match phase {
                Some(p) => Complex64::from_polar(1.0, p[b]) * amp,
                None => Complex64::new(amp, 0.0),
            }
        })
        .collect()
}

/// `(fft_bin, [(encoder_bin, weight)], outside_weight)`.
type PlanEntry = (usize, Vec<(usize, f64)>, f64);

/// Precomputed weights from encoder bins to FFT bins.
#[derive(Debug, Clone)]
pub struct EncoderPlan {
    /// One entry for every FFT bin the encoded span can reach; all other bins
    /// get the out-of-span transmission.
    entries: Vec<PlanEntry>,
    cfg: EncoderConfig,
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

impl EncoderPlan {
    pub fn new(cfg: &EncoderConfig, grid: TimeGrid, lambda0: f64) -> Result<Self> {
        cfg.validate()?;
        grid.validate()?;
        let lo = lambda0 - cfg.span_nm / 2.0;
        let w = cfg.span_nm / cfg.n_bins as f64;
        let half = match cfg.instrument_filter {
            InstrumentFilter::None => 0.0,
            InstrumentFilter::Flattop { width_nm } => width_nm / 2.0,
        };
        let mut entries = Vec::new();
        for k in 0..grid.n_points {
            let lam = grid.wavelength(k, lambda0);
            if !lam.is_finite() || lam < lo - half || lam >= lo + cfg.span_nm + half {
                continue;
            }
            let weights: Vec<(usize, f64)> = if half == 0.0 {
                if lam < lo || lam >= lo + cfg.span_nm {
                    continue;
                }
                let b = (((lam - lo) / w).floor() as usize).min(cfg.n_bins - 1);
                vec![(b, 1.0)]
            } else {
                // Exact box convolution of the piecewise-constant bin mask.
                (0..cfg.n_bins)
                    .filter_map(|b| {
                        let b0 = lo + b as f64 * w;
                        let o = overlap(lam - half, lam + half, b0, b0 + w);
                        (o > 0.0).then_some((b, o / (2.0 * half)))
                    })
                    .collect()
            };
            let inside: f64 = weights.iter().map(|(_, w)| w).sum();
            entries.push((k, weights, (1.0 - inside).max(0.0)));
        }
        Ok(EncoderPlan {
            entries,
            cfg: cfg.clone(),
        })
    }

    /// Multiply `spectrum` by the encoded mask.
    pub fn apply(&self, spectrum: &mut [Complex64], u: &[f64], phase: Option<&[f64]>) {
        let vals = bin_values(u, &self.cfg, phase);
        let t = self.cfg.out_of_span_transmission;
        let mut out: Vec<Complex64> = spectrum.iter().map(|v| v * t).collect();
        for (k, weights, outside) in &self.entries {
            let m: Complex64 =
                weights.iter().map(|&(b, w)| vals[b] * w).sum::<Complex64>() + t * outside;
            out[*k] = spectrum[*k] * m;
        }
        spectrum.copy_from_slice(&out);
    }
}

/// Phase offsets for every encoder bin of sample `index`.
pub fn phase_noise(cfg: &EncoderConfig, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let normal = Normal::new(0.0, cfg.phase_noise_std_rad).expect("validated std");
    (0..cfg.n_bins).map(|_| normal.sample(&mut rng)).collect()
}

fn check_inputs(u: &[f64], cfg: &EncoderConfig) -> Result<()> {
    let q = cfg.scheme.n_inputs();
    if u.len() != q {
        return Err(Error::DimensionMismatch {
            context: "encoder inputs",
            expected: q,
            got: u.len(),
        });
    }
    if let Some(v) = u.iter().find(|v| !(v.abs() <= 1.0 + 1e-12)) {
        return Err(Error::invalid(format!("input {v} outside [-1, 1]")));
    }
    Ok(())
}

/// Encode `u` on the spectrum of `field`.
///
/// `noise` is `(seed, sample_index)`; when given and the configured phase noise
/// is non-zero, each encoder bin gets an independent Gaussian phase.
pub fn encode_inputs(
    field: &PulseField,
    u: &[f64],
    cfg: &EncoderConfig,
    noise: Option<(u64, u64)>,
) -> Result<PulseField> {
    check_inputs(u, cfg)?;
    let plan = EncoderPlan::new(cfg, field.grid(), field.center_wavelength)?;
    let ffts = FftPair::new(field.envelope.len());
    let mut spectrum = field.envelope.clone();
    ffts.forward(&mut spectrum);
    let phase = noise
        .filter(|_| cfg.phase_noise_std_rad > 0.0)
        .map(|(s, i)| phase_noise(cfg, s, i));
    plan.apply(&mut spectrum, u, phase.as_deref());
    ffts.inverse(&mut spectrum);
    Ok(PulseField {
        envelope: spectrum,
        ..field.clone()
    })
}

/// Number of split steps used for a fiber and launch peak power.
pub fn step_count(fiber: &FiberConfig, p_max: f64) -> usize {
    let l_km = fiber.length_m / 1000.0;
    let phi = fiber.gamma.abs() * p_max * l_km;
    ((phi / fiber.max_phase_per_step_rad).ceil() as usize).max(1)
}

fn validate_fiber(fiber: &FiberConfig) -> Result<()> {
    if !(fiber.length_m >= 0.0) {
        return Err(Error::invalid("fiber length must be non-negative"));
    }
    if !(fiber.max_phase_per_step_rad > 0.0) {
        return Err(Error::invalid("max phase per step must be positive"));
    }
    Ok(())
}

/// Symmetric split-step integration in place, starting and ending in the time domain.
fn propagate_in_place(
    a: &mut [Complex64],
    grid: TimeGrid,
    fiber: &FiberConfig,
    ffts: &FftPair,
) -> Result<()> {
    if fiber.length_m == 0.0 {
        return Ok(());
    }
    let p_max = a.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
    let steps = step_count(fiber, p_max);
    let dz = fiber.length_m / 1000.0 / steps as f64;
    let linear = |h: f64| -> Vec<Complex64> {
        (0..grid.n_points)
            .map(|k| {
                let w = 2.0 * std::f64::consts::PI * grid.freq(k);
                Complex64::new(-fiber.alpha / 2.0 * h, fiber.beta2 / 2.0 * w * w * h).exp()
            })
            .collect()
    };
    let half = linear(dz / 2.0);
    let full = linear(dz);
    ffts.forward(a);
    a.iter_mut().zip(&half).for_each(|(v, h)| *v *= h);
    ffts.inverse(a);
    for step in 0..steps {
        if fiber.gamma != 0.0 {
            for v in a.iter_mut() {
                *v *= Complex64::from_polar(1.0, fiber.gamma * v.norm_sqr() * dz);
            }
        }
        ffts.forward(a);
        let op = if step + 1 == steps { &half } else { &full };
        a.iter_mut().zip(op).for_each(|(v, h)| *v *= h);
        ffts.inverse(a);
    }
    if a.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Numerical(format!(
            "field became non-finite during propagation ({steps} steps of {dz} km)"
        )));
    }
    Ok(())
}

/// Propagate `field` through `fiber`.
pub fn propagate(field: &PulseField, fiber: &FiberConfig) -> Result<PulseField> {
    validate_fiber(fiber)?;
    let grid = field.grid();
    grid.validate()?;
    let ffts = FftPair::new(grid.n_points);
    let mut a = field.envelope.clone();
    propagate_in_place(&mut a, grid, fiber, &ffts)?;
    Ok(PulseField {
        envelope: a,
        ..field.clone()
    })
}

/// Energy per nm at each FFT bin, sorted by wavelength, restricted to a window.
fn spectral_density(
    spectrum: &[Complex64],
    grid: TimeGrid,
    lambda0: f64,
    lo: f64,
    hi: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n_points as f64;
    let dt = grid.dt();
    let df = 1.0 / grid.t_window_ps;
    let mut pts: Vec<(f64, f64)> = (0..grid.n_points)
        .filter_map(|k| {
            let lam = grid.wavelength(k, lambda0);
            if !(lam >= lo && lam <= hi) {
                return None;
            }
            let energy = spectrum[k].norm_sqr() * dt / n;
            let dlam = lam * lam * df / SPEED_OF_LIGHT_NM_THZ;
            Some((lam, energy / dlam))
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.into_iter().unzip()
}

/// Precomputed interpolation stencils for the detector wavelengths.
#[derive(Debug, Clone)]
pub struct DetectorPlan {
    /// `(k_left, k_right, t)`: readout is `(1 − t)·S[k_left] + t·S[k_right]`.
    stencils: Vec<(usize, usize, f64)>,
    resolution_nm: f64,
    dlam: Vec<f64>,
}

impl DetectorPlan {
    pub fn new(det: &DetectorConfig, grid: TimeGrid, lambda0: f64) -> Result<Self> {
        det.validate()?;
        grid.validate()?;
        let spacing = grid.wavelength_spacing(lambda0);
        if spacing >= det.resolution_nm {
            return Err(Error::invalid(format!(
                "grid spectral spacing {spacing:.4} nm is not finer than the detector resolution {} nm",
                det.resolution_nm
            )));
        }
        let mut order: Vec<(f64, usize)> = (0..grid.n_points)
            .map(|k| (grid.wavelength(k, lambda0), k))
            .filter(|(l, _)| l.is_finite() && *l > 0.0)
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut stencils = Vec::with_capacity(det.n_readouts);
        for j in 0..det.n_readouts {
            let lam = det.wavelength(j, lambda0);
            let pos = order.partition_point(|(l, _)| *l <= lam);
            if pos == 0 || pos == order.len() {
                return Err(Error::invalid(format!(
                    "detector wavelength {lam} nm lies outside the simulated band"
                )));
            }
            let (l0, k0) = order[pos - 1];
            let (l1, k1) = order[pos];
            stencils.push((k0, k1, (lam - l0) / (l1 - l0)));
        }
        let df = 1.0 / grid.t_window_ps;
        let dlam = (0..grid.n_points)
            .map(|k| {
                let l = grid.wavelength(k, lambda0);
                l * l * df / SPEED_OF_LIGHT_NM_THZ
            })
            .collect();
        Ok(DetectorPlan {
            stencils,
            resolution_nm: det.resolution_nm,
            dlam,
        })
    }

    /// Readouts from an (unnormalised) spectrum: interpolated energy density times the resolution.
    pub fn read(&self, spectrum: &[Complex64], dt: f64) -> Vec<f64> {
        let n = spectrum.len() as f64;
        let density = |k: usize| spectrum[k].norm_sqr() * dt / n / self.dlam[k];
        self.stencils
            .iter()
            .map(|&(k0, k1, t)| ((1.0 - t) * density(k0) + t * density(k1)) * self.resolution_nm)
            .collect()
    }
}

/// Readouts of the spectrum analyser: energy (pJ) in a resolution-wide band
/// around each detector wavelength, from linear interpolation of the spectral density.
pub fn detect(field: &PulseField, det: &DetectorConfig) -> Result<Vec<f64>> {
    let plan = DetectorPlan::new(det, field.grid(), field.center_wavelength)?;
    Ok(plan.read(&field.spectrum(), field.dt))
}

/// `(wavelength_nm, energy_density_pj_per_nm)` over the detector span.
pub fn spectrum_dump(field: &PulseField, det: &DetectorConfig) -> Vec<(f64, f64)> {
    let lo = field.center_wavelength - det.span_nm / 2.0;
    let hi = field.center_wavelength + det.span_nm / 2.0;
    let (l, s) = spectral_density(
        &field.spectrum(),
        field.grid(),
        field.center_wavelength,
        lo,
        hi,
    );
    l.into_iter().zip(s).collect()
}

pub fn write_spectrum_csv<W: Write>(w: W, rows: &[(f64, f64)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["wavelength_nm", "power"])?;
    for (l, p) in rows {
        wr.write_record([format!("{l:.6}"), format!("{p:.16e}")])?;
    }
    wr.flush()?;
    Ok(())
}

/// `φ_NL = γ · P_peak · L` with `L` converted from m to km.
pub fn nonlinear_phase(gamma: f64, p_peak: f64, length_m: f64) -> f64 {
    gamma * p_peak * length_m / 1000.0
}

/// Peak power that gives nonlinear phase `phi` over `length_m`.
pub fn peak_power_for_phase(gamma: f64, phi: f64, length_m: f64) -> f64 {
    phi / (gamma * length_m / 1000.0)
}

/// `P[W] = 10^(dBm/10) / 1000`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

/// Peak power of a sech pulse train with the given average power (W).
pub fn peak_from_average(p_avg_w: f64, tau_fwhm_ps: f64, rep_rate_mhz: f64) -> f64 {
    let energy_pj = p_avg_w / (rep_rate_mhz * 1e6) * 1e12;
    energy_pj / (2.0 * tau_from_fwhm(tau_fwhm_ps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseConfig {
    /// Average power; ignored when `peak_power_w` is set.
    pub power_dbm: f64,
    pub peak_power_w: Option<f64>,
    pub tau_fwhm_ps: f64,
    pub center_wavelength_nm: f64,
    pub rep_rate_mhz: f64,
    pub n_points: usize,
    pub t_window_ps: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        PulseConfig {
            power_dbm: 6.6,
            peak_power_w: None,
            tau_fwhm_ps: 4.2,
            center_wavelength_nm: 1550.0,
            rep_rate_mhz: 10.0,
            n_points: TimeGrid::default().n_points,
            t_window_ps: TimeGrid::default().t_window_ps,
        }
    }
}

impl PulseConfig {
    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            n_points: self.n_points,
            t_window_ps: self.t_window_ps,
        }
    }

    pub fn peak_power(&self) -> f64 {
        self.peak_power_w.unwrap_or_else(|| {
            peak_from_average(
                dbm_to_watts(self.power_dbm),
                self.tau_fwhm_ps,
                self.rep_rate_mhz,
            )
        })
    }
}

/// Complete simulation setup, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub seed: u64,
    pub pulse: PulseConfig,
    pub encoder: EncoderConfig,
    pub fiber: FiberConfig,
    pub detector: DetectorConfig,
}

impl Scenario {
    pub fn from_toml(s: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.detector.validate()?;
        validate_fiber(&self.fiber)?;
        self.pulse.grid().validate()
    }

    pub fn n_inputs(&self) -> usize {
        self.encoder.scheme.n_inputs()
    }

    pub fn nonlinear_phase(&self) -> f64 {
        nonlinear_phase(
            self.fiber.gamma,
            self.pulse.peak_power(),
            self.fiber.length_m,
        )
    }

    /// Set fiber length and peak power so that `φ_NL = phi`.
    pub fn with_nonlinear_phase(mut self, phi: f64, length_m: f64) -> Self {
        self.fiber.length_m = length_m;
        self.pulse.peak_power_w = Some(peak_power_for_phase(self.fiber.gamma, phi, length_m));
        self
    }
}

/// Run every sample through encode → propagate → detect.
pub fn simulate_dataset(samples: &SampleMatrix, scenario: &Scenario) -> Result<Dataset> {
    scenario.validate()?;
    let q = scenario.n_inputs();
    if samples.q() != q {
        return Err(Error::DimensionMismatch {
            context: "samples vs encoder inputs",
            expected: q,
            got: samples.q(),
        });
    }
    let pc = &scenario.pulse;
    let p_peak = pc.peak_power();
    let pulse = make_sech_pulse(p_peak, pc.tau_fwhm_ps, pc.grid(), pc.center_wavelength_nm)?;
    let grid = pulse.grid();
    let ffts = FftPair::new(grid.n_points);
    let mut base = pulse.envelope.clone();
    ffts.forward(&mut base);
    let enc = EncoderPlan::new(&scenario.encoder, grid, pc.center_wavelength_nm)?;
    let det = DetectorPlan::new(&scenario.detector, grid, pc.center_wavelength_nm)?;
    let noisy = scenario.encoder.phase_noise_std_rad > 0.0;

    let rows: Vec<Result<Vec<f64>>> = par::map_range(samples.n(), |i| {
        let u = samples.row(i);
        check_inputs(&u, &scenario.encoder)?;
        let phase = noisy.then(|| phase_noise(&scenario.encoder, scenario.seed, i as u64));
        let mut a = base.clone();
        enc.apply(&mut a, &u, phase.as_deref());
        ffts.inverse(&mut a);
        propagate_in_place(&mut a, grid, &scenario.fiber, &ffts)?;
        ffts.forward(&mut a);
        Ok(det.read(&a, grid.dt()))
    });
    let k = scenario.detector.n_readouts;
    let mut x = DMatrix::zeros(samples.n(), k);
    for (i, r) in rows.into_iter().enumerate() {
        for (j, v) in r?.into_iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    let filter = match scenario.encoder.instrument_filter {
        InstrumentFilter::None => "none".to_owned(),
        InstrumentFilter::Flattop { width_nm } => format!("flattop {width_nm} nm"),
    };
    Ok(Dataset::new(samples.clone(), x)?
        .with_meta("system", "photonic")
        .with_meta("seed", scenario.seed)
        .with_meta("peak_power_w", p_peak)
        .with_meta("nonlinear_phase_rad", scenario.nonlinear_phase())
        .with_meta("fiber_length_m", scenario.fiber.length_m)
        .with_meta("instrument_filter", filter)
        .with_meta(
            "grid",
            format!("{} points / {} ps", grid.n_points, grid.t_window_ps),
        ))
}
