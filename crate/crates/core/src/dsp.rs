//! Classical matched filtering: spectra, PSD estimation, template
//! normalisation and the SNR time series whose maximum defines the oracle.
//!
//! Conventions used throughout:
//!
//! * [`FrequencySeries`] bins hold the raw one-sided DFT,
//!   `X[k] = Σ_j x[j]·exp(−2πi·jk/M)` for `k = 0..=M/2`. The continuous
//!   transform is `Δt·X[k]`.
//! * [`Psd`] is one-sided: white noise of variance σ² has `S_n = 2σ²Δt`.
//!   A value of `+∞` removes a bin from every weighted sum (band masking).
//! * Normalised templates satisfy `Σ_k df·|Q[k]|²/S_n[k] = 1` over the
//!   analysis bins `k = 1..=(M−1)/2`, so that `ρ` of a noise-free template
//!   filtered against itself equals its optimal SNR and pure noise gives
//!   `E[ρ²] = 2`.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::bank::{waveform, ChirpParams};
use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan_forward(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

fn plan_inverse(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// Uniformly sampled real strain.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<f64>,
    dt: f64,
    t0: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, dt: f64, t0: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid(format!(
                "time series needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!(
                "sample spacing must be positive, got {dt}"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("epoch must be finite"));
        }
        if let Some(index) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { samples, dt, t0 })
    }

    pub fn from_rate(samples: Vec<f64>, fs: f64, t0: f64) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {fs}"
            )));
        }
        Self::new(samples, 1.0 / fs, t0)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn fs(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time stamp of sample `j`.
    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }
}

/// One-sided spectrum of a real series of length `m_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySeries {
    bins: Vec<Complex64>,
    df: f64,
    m_time: usize,
}

impl FrequencySeries {
    pub fn new(bins: Vec<Complex64>, df: f64, m_time: usize) -> Result<Self> {
        if m_time < 2 || bins.len() != m_time / 2 + 1 {
            return Err(Error::GridMismatch(format!(
                "{} bins cannot describe a series of {} samples",
                bins.len(),
                m_time
            )));
        }
        if !(df > 0.0 && df.is_finite()) {
            return Err(Error::invalid(format!(
                "bin spacing must be positive, got {df}"
            )));
        }
        if let Some(index) = bins
            .iter()
            .position(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { bins, df, m_time })
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn m_time(&self) -> usize {
        self.m_time
    }

    /// Sample spacing of the originating time series.
    pub fn dt(&self) -> f64 {
        1.0 / (self.m_time as f64 * self.df)
    }

    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.df
    }

    /// Multiply every bin by a real factor.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            bins: self.bins.iter().map(|z| z * factor).collect(),
            df: self.df,
            m_time: self.m_time,
        }
    }

    fn same_grid(&self, other: &FrequencySeries) -> bool {
        self.m_time == other.m_time && rel_close(self.df, other.df)
    }
}

/// One-sided noise power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    values: Vec<f64>,
    df: f64,
}

impl Psd {
    /// Values must be strictly positive; `+∞` marks a bin excluded from analysis.
    pub fn new(values: Vec<f64>, df: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty PSD"));
        }
        if !(df > 0.0 && df.is_finite()) {
            return Err(Error::invalid(format!(
                "bin spacing must be positive, got {df}"
            )));
        }
        if let Some(k) = values.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::Numeric(format!(
                "PSD must be positive, bin {k} holds {}",
                values[k]
            )));
        }
        Ok(Self { values, df })
    }

    /// Flat PSD at `level` on the one-sided grid of a series of `m_time` samples spaced `dt`.
    pub fn white(level: f64, dt: f64, m_time: usize) -> Result<Self> {
        let df = 1.0 / (m_time as f64 * dt);
        Self::new(vec![level; m_time / 2 + 1], df)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.df
    }

    /// Exclude every bin outside `[f_low, f_high]` from analysis.
    pub fn with_band(mut self, f_low: Option<f64>, f_high: Option<f64>) -> Self {
        for (k, v) in self.values.iter_mut().enumerate() {
            let f = k as f64 * self.df;
            let below = f_low.is_some_and(|lo| f < lo);
            let above = f_high.is_some_and(|hi| f > hi);
            if below || above {
                *v = f64::INFINITY;
            }
        }
        self
    }

    /// Linear interpolation onto a grid of `n_bins` bins spaced `df`;
    /// frequencies beyond the last stored bin hold the end value.
    pub fn resample(&self, df: f64, n_bins: usize) -> Result<Self> {
        let last = self.values.len() - 1;
        let values = (0..n_bins)
            .map(|k| {
                let x = k as f64 * df / self.df;
                let i = x.floor() as usize;
                if i >= last {
                    return self.values[last];
                }
                let w = x - i as f64;
                let (a, b) = (self.values[i], self.values[i + 1]);
                if w == 0.0 || a.is_infinite() || b.is_infinite() {
                    if w < 0.5 {
                        a
                    } else {
                        b
                    }
                } else {
                    a + w * (b - a)
                }
            })
            .collect();
        Self::new(values, df)
    }

    /// Resample onto the grid of `spectrum` unless it already matches.
    pub fn matched_to(&self, spectrum: &FrequencySeries) -> Result<Self> {
        if self.values.len() == spectrum.bins.len() && rel_close(self.df, spectrum.df) {
            Ok(self.clone())
        } else {
            self.resample(spectrum.df, spectrum.bins.len())
        }
    }
}

/// Modulus of the complex matched-filter output against time offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrSeries {
    pub rho: Vec<f64>,
    pub dt: f64,
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Last bin index included in the SNR sum; DC and Nyquist are excluded.
pub fn analysis_upper_bin(m_time: usize) -> usize {
    (m_time - 1) / 2
}

pub fn forward_fft(ts: &TimeSeries) -> FrequencySeries {
    let m = ts.len();
    let mut buf: Vec<Complex64> = ts.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    plan_forward(m).process(&mut buf);
    buf.truncate(m / 2 + 1);
    FrequencySeries {
        bins: buf,
        df: 1.0 / (m as f64 * ts.dt),
        m_time: m,
    }
}

/// Inverse of [`forward_fft`], rebuilding the Hermitian upper half.
pub fn inverse_fft(spec: &FrequencySeries, t0: f64) -> Result<TimeSeries> {
    let m = spec.m_time;
    let mut full = vec![Complex64::new(0.0, 0.0); m];
    full[..spec.bins.len()].copy_from_slice(&spec.bins);
    for k in 1..m.div_ceil(2) {
        full[m - k] = spec.bins[k].conj();
    }
    plan_inverse(m).process(&mut full);
    let scale = 1.0 / m as f64;
    TimeSeries::new(full.iter().map(|z| z.re * scale).collect(), spec.dt(), t0)
}

/// How Welch segment periodograms are combined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsdAverage {
    Mean,
    /// Split segments into `groups` contiguous groups, average within each
    /// group and take the per-bin median of the group means.
    MedianOfMeans {
        groups: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchConfig {
    pub seg_len: usize,
    pub overlap_frac: f64,
    pub average: PsdAverage,
}

impl WelchConfig {
    pub fn new(seg_len: usize, overlap_frac: f64) -> Self {
        Self {
            seg_len,
            overlap_frac,
            average: PsdAverage::Mean,
        }
    }
}

/// Periodic Hann window.
fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|j| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * j as f64 / len as f64).cos()))
        .collect()
}

/// Welch estimate with Hann windows and mean averaging.
pub fn estimate_psd(ts: &TimeSeries, seg_len: usize, overlap_frac: f64) -> Result<Psd> {
    estimate_psd_with(ts, &WelchConfig::new(seg_len, overlap_frac))
}

pub fn estimate_psd_with(ts: &TimeSeries, cfg: &WelchConfig) -> Result<Psd> {
    let m = ts.len();
    let seg_len = cfg.seg_len;
    if seg_len < 2 || seg_len > m {
        return Err(Error::invalid(format!(
            "segment length {seg_len} must lie in [2, {m}]"
        )));
    }
    if !(0.0..1.0).contains(&cfg.overlap_frac) {
        return Err(Error::invalid(format!(
            "overlap fraction {} must lie in [0, 1)",
            cfg.overlap_frac
        )));
    }
    let step = ((seg_len as f64 * (1.0 - cfg.overlap_frac)).round() as usize).max(1);
    let n_seg = (m - seg_len) / step + 1;
    if n_seg < 2 {
        return Err(Error::invalid(format!(
            "Welch averaging needs at least 2 segments, got {n_seg}"
        )));
    }

    let window = hann(seg_len);
    let w_power: f64 = window.iter().map(|w| w * w).sum();
    let n_bins = seg_len / 2 + 1;
    let fft = plan_forward(seg_len);
    let dt = ts.dt;

    let periodograms: Vec<Vec<f64>> = (0..n_seg)
        .map(|s| {
            let seg = &ts.samples[s * step..s * step + seg_len];
            let mut buf: Vec<Complex64> = seg
                .iter()
                .zip(&window)
                .map(|(x, w)| Complex64::new(x * w, 0.0))
                .collect();
            fft.process(&mut buf);
            (0..n_bins)
                .map(|k| {
                    let one_sided = if k == 0 || (seg_len % 2 == 0 && k == seg_len / 2) {
                        1.0
                    } else {
                        2.0
                    };
                    one_sided * dt * buf[k].norm_sqr() / w_power
                })
                .collect()
        })
        .collect();

    let values = match cfg.average {
        PsdAverage::Mean => mean_bins(&periodograms),
        PsdAverage::MedianOfMeans { groups } => {
            if groups == 0 || groups > n_seg {
                return Err(Error::invalid(format!(
                    "median-of-means needs 1..={n_seg} groups, got {groups}"
                )));
            }
            let group_means: Vec<Vec<f64>> = (0..groups)
                .map(|g| {
                    let lo = g * n_seg / groups;
                    let hi = (g + 1) * n_seg / groups;
                    mean_bins(&periodograms[lo..hi])
                })
                .collect();
            (0..n_bins)
                .map(|k| {
                    let mut col: Vec<f64> = group_means.iter().map(|g| g[k]).collect();
                    col.sort_by(f64::total_cmp);
                    let mid = col.len() / 2;
                    if col.len() % 2 == 1 {
                        col[mid]
                    } else {
                        0.5 * (col[mid - 1] + col[mid])
                    }
                })
                .collect()
        }
    };

    Psd::new(values, 1.0 / (seg_len as f64 * dt))
}

fn mean_bins(periodograms: &[Vec<f64>]) -> Vec<f64> {
    let n = periodograms.len() as f64;
    let mut acc = vec![0.0; periodograms[0].len()];
    for p in periodograms {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Noise-weighted template energy `Σ_k df·|s[k]|²/S_n[k]` over the analysis bins.
pub fn template_energy(s: &FrequencySeries, psd: &Psd) -> Result<f64> {
    if psd.values.len() != s.bins.len() || !rel_close(psd.df, s.df) {
        return Err(Error::GridMismatch(format!(
            "template has {} bins at df={}, PSD has {} at df={}",
            s.bins.len(),
            s.df,
            psd.values.len(),
            psd.df
        )));
    }
    let upper = analysis_upper_bin(s.m_time);
    Ok((1..=upper)
        .map(|k| s.bins[k].norm_sqr() / psd.values[k])
        .sum::<f64>()
        * s.df)
}

pub fn normalize_template(s: &FrequencySeries, psd: &Psd) -> Result<FrequencySeries> {
    let energy = template_energy(s, psd)?;
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(Error::ZeroEnergy);
    }
    Ok(s.scaled(energy.sqrt().recip()))
}

/// Analytic (positive-frequency) template `½(Q_φ − i·Q_{φ+π/2})` built from
/// the normalised quadrature pair at the template's reference phase.
///
/// Filtering data through it yields a complex output whose modulus does not
/// depend on the signal's phase.
pub fn complex_template(
    params: &ChirpParams,
    fs: f64,
    m: usize,
    psd: &Psd,
) -> Result<FrequencySeries> {
    let in_phase = normalized_chirp(params, fs, m, psd)?;
    let quadrature = normalized_chirp(
        &ChirpParams {
            phi0: params.phi0 + std::f64::consts::FRAC_PI_2,
            ..*params
        },
        fs,
        m,
        psd,
    )?;
    let i = Complex64::i();
    let bins = in_phase
        .bins
        .iter()
        .zip(&quadrature.bins)
        .map(|(a, b)| 0.5 * (a - i * b))
        .collect();
    FrequencySeries::new(bins, in_phase.df, m)
}

/// Normalised spectrum of a single real chirp template.
pub fn normalized_chirp(
    params: &ChirpParams,
    fs: f64,
    m: usize,
    psd: &Psd,
) -> Result<FrequencySeries> {
    let ts = waveform(params, fs, m)?;
    normalize_template(&forward_fft(&ts), psd)
}

/// `ρ(t_j) = 2/(MΔt)·|Σ_{k=1}^{(M−1)/2} Q*[k]·Δt·H[k]/S_n[k]·e^{2πijk/M}|`.
pub fn snr_series(data: &FrequencySeries, qc: &FrequencySeries, psd: &Psd) -> Result<SnrSeries> {
    if !data.same_grid(qc) {
        return Err(Error::GridMismatch(format!(
            "data grid (M={}, df={}) differs from template grid (M={}, df={})",
            data.m_time, data.df, qc.m_time, qc.df
        )));
    }
    if psd.values.len() != data.bins.len() || !rel_close(psd.df, data.df) {
        return Err(Error::GridMismatch(format!(
            "PSD has {} bins at df={}, data has {} at df={}",
            psd.values.len(),
            psd.df,
            data.bins.len(),
            data.df
        )));
    }
    let m = data.m_time;
    let dt = data.dt();
    let mut full = vec![Complex64::new(0.0, 0.0); m];
    let upper = analysis_upper_bin(m);
    let weighted = qc.bins.iter().zip(&data.bins).zip(&psd.values);
    for (slot, ((q, h), s)) in full.iter_mut().zip(weighted).take(upper + 1).skip(1) {
        *slot = q.conj() * h * (dt / s);
    }
    plan_inverse(m).process(&mut full);
    let scale = 2.0 / (m as f64 * dt);
    Ok(SnrSeries {
        rho: full.iter().map(|z| z.norm() * scale).collect(),
        dt,
    })
}

/// Maximum of the series and the first index attaining it.
pub fn max_snr(snr: &SnrSeries) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (j, &v) in snr.rho.iter().enumerate() {
        if v > best.0 {
            best = (v, j);
        }
    }
    best
}

/// `f(i)`: a template matches when its peak SNR reaches the threshold.
pub fn match_predicate(rho_max: f64, rho_thr: f64) -> bool {
    rho_max >= rho_thr
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn noise(m: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        (0..m).map(|_| normal.sample(&mut rng)).collect()
    }

    #[test]
    fn zero_series_transforms_to_zero() {
        let ts = TimeSeries::new(vec![0.0; 8], 0.1, 0.0).unwrap();
        assert!(forward_fft(&ts).bins().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn impulse_transforms_to_ones() {
        let ts = TimeSeries::new(vec![1.0, 0.0, 0.0, 0.0], 1.0, 0.0).unwrap();
        let spec = forward_fft(&ts);
        assert_eq!(spec.bins().len(), 3);
        for z in spec.bins() {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_finite_with_index() {
        let err = TimeSeries::new(vec![0.0, 1.0, f64::NAN, 2.0], 1.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 2 }));
        assert!(TimeSeries::new(vec![1.0], 1.0, 0.0).is_err());
        assert!(TimeSeries::new(vec![1.0, 2.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn round_trip_identity() {
        for &m in &[4usize, 64, 1024, 63] {
            let x = noise(m, 1.0, m as u64);
            let ts = TimeSeries::new(x.clone(), 0.01, 3.0).unwrap();
            let back = inverse_fft(&forward_fft(&ts), 3.0).unwrap();
            let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for (a, b) in x.iter().zip(back.samples()) {
                assert!((a - b).abs() <= 1e-12 * scale, "M={m}");
            }
        }
    }

    #[test]
    fn white_noise_psd_level() {
        let fs = 1024.0;
        let ts = TimeSeries::from_rate(noise(1 << 16, 1.0, 7), fs, 0.0).unwrap();
        let psd = estimate_psd(&ts, 2048, 0.5).unwrap();
        assert_eq!(psd.len(), 1025);
        let band = &psd.values()[1..1024];
        let mean = band.iter().sum::<f64>() / band.len() as f64;
        let expected = 2.0 / fs;
        assert!(
            (mean / expected - 1.0).abs() < 0.05,
            "mean {mean} vs {expected}"
        );
    }

    #[test]
    fn median_of_means_tracks_white_level() {
        let fs = 512.0;
        let ts = TimeSeries::from_rate(noise(1 << 15, 2.0, 8), fs, 0.0).unwrap();
        let cfg = WelchConfig {
            seg_len: 1024,
            overlap_frac: 0.5,
            average: PsdAverage::MedianOfMeans { groups: 7 },
        };
        let psd = estimate_psd_with(&ts, &cfg).unwrap();
        let band = &psd.values()[1..512];
        let mean = band.iter().sum::<f64>() / band.len() as f64;
        let expected = 2.0 * 4.0 / fs;
        assert!(
            (mean / expected - 1.0).abs() < 0.08,
            "mean {mean} vs {expected}"
        );
    }

    #[test]
    fn sinusoid_dominates_periodogram() {
        let fs = 1024.0;
        let seg = 1024;
        let k0 = 100;
        let f = k0 as f64 * fs / seg as f64;
        let x: Vec<f64> = (0..8 * seg)
            .map(|j| (2.0 * std::f64::consts::PI * f * j as f64 / fs).sin())
            .collect();
        let psd = estimate_psd(&TimeSeries::from_rate(x, fs, 0.0).unwrap(), seg, 0.5).unwrap();
        let mut sorted = psd.values().to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let peak = psd.values()[k0];
        assert_eq!(max_index(psd.values()), k0);
        assert!(peak > 10.0 * median);
    }

    fn max_index(v: &[f64]) -> usize {
        (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
    }

    #[test]
    fn psd_rejects_degenerate_input() {
        let ts = TimeSeries::new(vec![0.0; 4096], 1.0 / 1024.0, 0.0).unwrap();
        assert!(estimate_psd(&ts, 512, 0.5).is_err());
        let ts = TimeSeries::new(noise(1000, 1.0, 1), 1.0, 0.0).unwrap();
        assert!(estimate_psd(&ts, 2000, 0.5).is_err());
        assert!(estimate_psd(&ts, 1000, 0.5).is_err(), "single segment");
        assert!(estimate_psd(&ts, 100, 1.0).is_err());
    }

    #[test]
    fn band_mask_excludes_bins() {
        let psd = Psd::white(1.0, 1.0 / 64.0, 64)
            .unwrap()
            .with_band(Some(5.0), Some(20.0));
        assert!(psd.values()[4].is_infinite());
        assert_eq!(psd.values()[5], 1.0);
        assert_eq!(psd.values()[20], 1.0);
        assert!(psd.values()[21].is_infinite());
    }

    #[test]
    fn resample_is_linear() {
        let psd = Psd::new(vec![1.0, 3.0, 5.0], 2.0).unwrap();
        let fine = psd.resample(1.0, 6).unwrap();
        assert_eq!(fine.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 5.0]);
    }

    #[test]
    fn normalization_is_idempotent_and_scale_free() {
        let ts = TimeSeries::new(noise(128, 1.0, 3), 0.01, 0.0).unwrap();
        let s = forward_fft(&ts);
        let psd = Psd::white(0.3, 0.01, 128).unwrap();
        let q = normalize_template(&s, &psd).unwrap();
        let q2 = normalize_template(&q, &psd).unwrap();
        let q7 = normalize_template(&s.scaled(7.0), &psd).unwrap();
        for ((a, b), c) in q.bins().iter().zip(q2.bins()).zip(q7.bins()) {
            assert!((a - b).norm() <= 1e-12 * a.norm().max(1e-300));
            assert!((a - c).norm() <= 1e-12 * a.norm().max(1e-300));
        }
        assert!((template_energy(&q, &psd).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_template_is_rejected() {
        let s = FrequencySeries::new(vec![Complex64::new(0.0, 0.0); 33], 1.0, 64).unwrap();
        let psd = Psd::white(1.0, 1.0 / 64.0, 64).unwrap();
        assert!(matches!(
            normalize_template(&s, &psd),
            Err(Error::ZeroEnergy)
        ));
    }

    #[test]
    fn snr_of_zero_data_is_zero() {
        let m = 64;
        let zero = forward_fft(&TimeSeries::new(vec![0.0; m], 0.01, 0.0).unwrap());
        let q = forward_fft(&TimeSeries::new(noise(m, 1.0, 9), 0.01, 0.0).unwrap());
        let psd = Psd::white(1.0, 0.01, m).unwrap();
        let snr = snr_series(&zero, &q, &psd).unwrap();
        assert_eq!(snr.rho.len(), m);
        assert!(snr.rho.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn snr_rejects_grid_mismatch() {
        let a = forward_fft(&TimeSeries::new(vec![1.0; 64], 0.01, 0.0).unwrap());
        let b = forward_fft(&TimeSeries::new(vec![1.0; 32], 0.01, 0.0).unwrap());
        let psd = Psd::white(1.0, 0.01, 64).unwrap();
        assert!(matches!(
            snr_series(&a, &b, &psd),
            Err(Error::GridMismatch(_))
        ));
        let short = Psd::white(1.0, 0.01, 32).unwrap();
        assert!(matches!(
            snr_series(&a, &a, &short),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn max_snr_breaks_ties_low() {
        let s = SnrSeries {
            rho: vec![2.5; 10],
            dt: 1.0,
        };
        assert_eq!(max_snr(&s), (2.5, 0));
        let mut rho = vec![0.1; 40];
        rho[17] = 9.0;
        assert_eq!(max_snr(&SnrSeries { rho, dt: 1.0 }), (9.0, 17));
    }

    #[test]
    fn predicate_is_inclusive() {
        assert!(match_predicate(18.0, 18.0));
        assert!(!match_predicate(0.0, 8.0));
        assert!(match_predicate(19.05, 18.0));
        assert!(!match_predicate(17.999, 18.0));
    }
}
