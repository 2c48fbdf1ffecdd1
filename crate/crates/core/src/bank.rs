//! Template bank: a rectangular lattice of linear chirps addressed by a
//! single integer index.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dsp::TimeSeries;
use crate::error::{Error, Result};

/// Fraction of the active duration tapered at each end.
pub const TAPER_FRACTION: f64 = 0.05;

/// Linear chirp `sin(φ0 + 2π(f0·t + ½·f1·t²))` on `[0, dur)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpParams {
    /// Start frequency, Hz.
    pub f0: f64,
    /// Frequency drift, Hz/s.
    pub f1: f64,
    /// Active duration, s.
    pub dur: f64,
    pub phi0: f64,
}

impl ChirpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.f0 > 0.0) || !self.f0.is_finite() {
            return Err(Error::invalid(format!(
                "f0 must be positive, got {}",
                self.f0
            )));
        }
        if !(self.dur > 0.0) || !self.dur.is_finite() {
            return Err(Error::invalid(format!(
                "duration must be positive, got {}",
                self.dur
            )));
        }
        if !self.f1.is_finite() || !self.phi0.is_finite() {
            return Err(Error::invalid("chirp parameters must be finite"));
        }
        if !(self.f0 + self.f1 * self.dur > 0.0) {
            return Err(Error::invalid(format!(
                "frequency {} Hz at the end of the chirp is not positive",
                self.f0 + self.f1 * self.dur
            )));
        }
        Ok(())
    }

    pub fn phase(&self, t: f64) -> f64 {
        self.phi0 + 2.0 * PI * (self.f0 * t + 0.5 * self.f1 * t * t)
    }

    /// Instantaneous frequency `f0 + f1·t`.
    pub fn frequency_at(&self, t: f64) -> f64 {
        self.f0 + self.f1 * t
    }

    /// Highest instantaneous frequency reached on `[0, dur]`.
    pub fn peak_frequency(&self) -> f64 {
        self.f0.max(self.frequency_at(self.dur))
    }
}

/// Bank layout; field names double as the JSON config keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankSpec {
    pub f0_min: f64,
    pub f0_max: f64,
    pub n_f0: u64,
    pub f1_min: f64,
    pub f1_max: f64,
    pub n_f1: u64,
    pub fs_hz: f64,
    pub m_samples: usize,
    pub dur_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TemplateIndex(pub u64);

impl BankSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_f0 == 0 || self.n_f1 == 0 {
            return Err(Error::invalid("bank axes need at least one grid point"));
        }
        if self.n_f0.checked_mul(self.n_f1).is_none() {
            return Err(Error::invalid("bank size overflows"));
        }
        let finite = [
            self.f0_min,
            self.f0_max,
            self.f1_min,
            self.f1_max,
            self.fs_hz,
            self.dur_s,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("bank parameters must be finite"));
        }
        if self.n_f0 > 1 && !(self.f0_max > self.f0_min) {
            return Err(Error::invalid("f0 range is degenerate"));
        }
        if self.n_f1 > 1 && !(self.f1_max > self.f1_min) {
            return Err(Error::invalid("f1 range is degenerate"));
        }
        if !(self.fs_hz > 0.0) || !(self.dur_s > 0.0) {
            return Err(Error::invalid("sample rate and duration must be positive"));
        }
        if active_samples(self.dur_s, self.fs_hz) > self.m_samples {
            return Err(Error::invalid(format!(
                "{} s at {} Hz does not fit in {} samples",
                self.dur_s, self.fs_hz, self.m_samples
            )));
        }
        Ok(())
    }

    pub fn size(&self) -> u64 {
        self.n_f0 * self.n_f1
    }

    pub fn params(&self, idx: TemplateIndex) -> Result<ChirpParams> {
        index_to_params(self, idx)
    }

    pub fn waveform(&self, idx: TemplateIndex) -> Result<TimeSeries> {
        waveform(&self.params(idx)?, self.fs_hz, self.m_samples)
    }
}

pub fn bank_size(spec: &BankSpec) -> Result<u64> {
    spec.validate()?;
    Ok(spec.size())
}

fn axis_value(min: f64, max: f64, count: u64, at: u64) -> f64 {
    if count == 1 {
        min
    } else {
        min + (max - min) * at as f64 / (count - 1) as f64
    }
}

/// Row-major lattice lookup: `f0` varies fastest.
pub fn index_to_params(spec: &BankSpec, idx: TemplateIndex) -> Result<ChirpParams> {
    spec.validate()?;
    let n = spec.size();
    if idx.0 >= n {
        return Err(Error::invalid(format!(
            "template index {} outside [0, {n})",
            idx.0
        )));
    }
    let a = idx.0 % spec.n_f0;
    let b = idx.0 / spec.n_f0;
    Ok(ChirpParams {
        f0: axis_value(spec.f0_min, spec.f0_max, spec.n_f0, a),
        f1: axis_value(spec.f1_min, spec.f1_max, spec.n_f1, b),
        dur: spec.dur_s,
        phi0: 0.0,
    })
}

/// Number of samples with `t = j/fs < dur`.
fn active_samples(dur: f64, fs: f64) -> usize {
    let exact = dur * fs;
    let n = exact.ceil();
    // dur·fs landing a hair above an integer is rounding noise, not an extra sample.
    if n - exact > 1.0 - 1e-9 {
        (n - 1.0) as usize
    } else {
        n as usize
    }
}

/// Tukey-tapered chirp, zero-padded to `m` samples.
pub fn waveform(params: &ChirpParams, fs: f64, m: usize) -> Result<TimeSeries> {
    params.validate()?;
    if !(fs > 0.0) {
        return Err(Error::invalid(format!(
            "sample rate must be positive, got {fs}"
        )));
    }
    let n_active = active_samples(params.dur, fs);
    if n_active > m {
        return Err(Error::invalid(format!(
            "waveform needs {n_active} samples but only {m} are available"
        )));
    }
    let nyquist = fs / 2.0;
    if params.peak_frequency() > nyquist {
        return Err(Error::invalid(format!(
            "chirp reaches {} Hz, above the {nyquist} Hz Nyquist limit",
            params.peak_frequency()
        )));
    }

    let taper = (TAPER_FRACTION * n_active as f64).floor() as usize;
    let mut samples = vec![0.0; m];
    for (j, s) in samples.iter_mut().take(n_active).enumerate() {
        let t = j as f64 / fs;
        let edge = j.min(n_active - 1 - j);
        let w = if edge < taper {
            0.5 * (1.0 - (PI * edge as f64 / taper as f64).cos())
        } else {
            1.0
        };
        *s = w * params.phase(t).sin();
    }
    TimeSeries::from_rate(samples, fs, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n_f0: u64, n_f1: u64) -> BankSpec {
        BankSpec {
            f0_min: 40.0,
            f0_max: 80.0,
            n_f0,
            f1_min: 10.0,
            f1_max: 50.0,
            n_f1,
            fs_hz: 1024.0,
            m_samples: 2048,
            dur_s: 1.0,
        }
    }

    #[test]
    fn sizes() {
        assert_eq!(bank_size(&spec(1, 1)).unwrap(), 1);
        assert_eq!(bank_size(&spec(512, 256)).unwrap(), 131_072);
        assert_eq!(bank_size(&spec(8, 8)).unwrap(), 64);
        assert!(bank_size(&spec(0, 4)).is_err());
    }

    #[test]
    fn lattice_corners() {
        let s = spec(8, 8);
        let first = index_to_params(&s, TemplateIndex(0)).unwrap();
        assert_eq!((first.f0, first.f1), (40.0, 10.0));
        let last = index_to_params(&s, TemplateIndex(63)).unwrap();
        assert_eq!((last.f0, last.f1), (80.0, 50.0));
        let row = index_to_params(&s, TemplateIndex(8)).unwrap();
        assert_eq!(row.f0, 40.0);
        assert!((row.f1 - (10.0 + 40.0 / 7.0)).abs() < 1e-12);
        assert!(index_to_params(&s, TemplateIndex(64)).is_err());
    }

    #[test]
    fn single_count_axis_pins_to_min() {
        let p = index_to_params(&spec(1, 3), TemplateIndex(2)).unwrap();
        assert_eq!(p.f0, 40.0);
        assert_eq!(p.f1, 50.0);
    }

    #[test]
    fn degenerate_range_rejected() {
        let mut s = spec(4, 1);
        s.f0_max = s.f0_min;
        assert!(s.validate().is_err());
        s.n_f0 = 1;
        assert!(s.validate().is_ok());
        let mut s = spec(2, 2);
        s.dur_s = 3.0;
        assert!(s.validate().is_err(), "waveform longer than the buffer");
    }

    #[test]
    fn json_keys_round_trip() {
        let json = r#"{"f0_min":40,"f0_max":80,"n_f0":8,"f1_min":10,"f1_max":50,"n_f1":8,
                       "fs_hz":1024,"m_samples":2048,"dur_s":1.0}"#;
        let s: BankSpec = serde_json::from_str(json).unwrap();
        assert_eq!(s, spec(8, 8));
        let extra = json.replace("\"dur_s\"", "\"bogus\":1,\"dur_s\"");
        assert!(serde_json::from_str::<BankSpec>(&extra).is_err());
    }

    #[test]
    fn degenerate_chirp_is_cosine_inside_taper() {
        let p = ChirpParams {
            f0: 30.0,
            f1: 0.0,
            dur: 1.0,
            phi0: PI / 2.0,
        };
        let fs = 1024.0;
        let w = waveform(&p, fs, 2048).unwrap();
        let taper = (TAPER_FRACTION * 1024.0) as usize;
        for j in taper..1024 - taper {
            let expect = (2.0 * PI * 30.0 * j as f64 / fs).cos();
            assert!((w.samples()[j] - expect).abs() < 1e-12);
        }
        assert_eq!(w.samples()[0], 0.0);
        assert!(w.samples()[1024..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn instantaneous_frequency_matches_phase_derivative() {
        let p = ChirpParams {
            f0: 100.0,
            f1: 50.0,
            dur: 1.0,
            phi0: 0.0,
        };
        assert_eq!(p.frequency_at(1.0), 150.0);
        let h = 1e-6;
        let numeric = (p.phase(1.0 + h) - p.phase(1.0 - h)) / (2.0 * h) / (2.0 * PI);
        assert!((numeric - 150.0).abs() < 1e-5);
    }

    #[test]
    fn aliasing_guard() {
        let p = ChirpParams {
            f0: 400.0,
            f1: 300.0,
            dur: 1.0,
            phi0: 0.0,
        };
        assert!(waveform(&p, 1024.0, 1024).is_err());
        let down = ChirpParams {
            f0: 100.0,
            f1: -200.0,
            dur: 1.0,
            phi0: 0.0,
        };
        assert!(down.validate().is_err(), "frequency goes negative");
    }

    #[test]
    fn deterministic() {
        let p = ChirpParams {
            f0: 61.0,
            f1: 17.5,
            dur: 0.75,
            phi0: 0.3,
        };
        let a = waveform(&p, 512.0, 1024).unwrap();
        let b = waveform(&p, 512.0, 1024).unwrap();
        assert!(a
            .samples()
            .iter()
            .zip(b.samples())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
