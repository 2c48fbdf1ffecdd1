//! Template counts and quantum cost for all-sky continuous-wave searches.
//!
//! Counts are order-of-magnitude scalings carried as reals.

use serde::{Deserialize, Serialize};

use crate::amplify;
use crate::error::{Error, Result};

/// Gate overhead per Grover iteration relative to one classical template:
/// threefold for a reversible circuit, doubled for uncomputation.
pub const GATE_FACTOR: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CwSearchSpec {
    /// Signal frequency, kHz.
    pub f: f64,
    /// Observation time, years.
    pub t_obs: f64,
    /// Frequency band, Hz.
    pub delta_f: f64,
    /// Spin-down range, Hz/s.
    pub delta_f1: f64,
    /// Acceptable false-negative probability.
    pub delta_target: f64,
}

impl Default for CwSearchSpec {
    fn default() -> Self {
        Self {
            f: 1.0,
            t_obs: 1.0,
            delta_f: 1.0,
            delta_f1: 1e-9,
            delta_target: 1e-6,
        }
    }
}

impl CwSearchSpec {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("f", self.f),
            ("t_obs", self.t_obs),
            ("delta_f", self.delta_f),
            ("delta_f1", self.delta_f1),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.delta_target > 0.0 && self.delta_target < 1.0) {
            return Err(Error::invalid(format!(
                "delta_target must lie in (0, 1), got {}",
                self.delta_target
            )));
        }
        Ok(())
    }
}

/// Whole-sky template count including the frequency band.
pub fn n_total(spec: &CwSearchSpec) -> Result<f64> {
    spec.validate()?;
    Ok(2e28 * spec.f.powi(2) * spec.t_obs.powi(3) * spec.delta_f * (spec.delta_f1 / 1e-9))
}

/// Sky and spin-down templates; frequency is handled by an FFT.
pub fn n_sky_f1(spec: &CwSearchSpec) -> Result<f64> {
    spec.validate()?;
    Ok(1e20 * spec.f.powi(2) * spec.t_obs.powi(2) * (spec.delta_f1 / 1e-9))
}

pub fn n_f0(spec: &CwSearchSpec) -> Result<f64> {
    spec.validate()?;
    Ok(2e8 * spec.t_obs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CwCost {
    pub n_total: f64,
    pub n_sky_f1: f64,
    pub n_f0: f64,
    pub p: u32,
    pub ell: u32,
    pub iterations: f64,
    pub gate_factor: f64,
    /// In units of one classical template evaluation.
    pub classical_ops: f64,
    pub quantum_ops: f64,
    pub speedup: f64,
}

pub fn quantum_cost(spec: &CwSearchSpec) -> Result<CwCost> {
    let n = n_sky_f1(spec)?;
    let p = amplify::choose_p_for_size(n);
    let ell = amplify::repetitions_for(spec.delta_target)?;
    let iterations = ell as f64 * (2f64.powi(p as i32) - 1.0);
    let quantum_ops = GATE_FACTOR * iterations;
    Ok(CwCost {
        n_total: n_total(spec)?,
        n_sky_f1: n,
        n_f0: n_f0(spec)?,
        p,
        ell,
        iterations,
        gate_factor: GATE_FACTOR,
        classical_ops: n,
        quantum_ops,
        speedup: n / quantum_ops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with(f: impl FnOnce(&mut CwSearchSpec)) -> CwSearchSpec {
        let mut s = CwSearchSpec::default();
        f(&mut s);
        s
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs()
    }

    #[test]
    fn default_counts() {
        let s = CwSearchSpec::default();
        assert!(close(n_total(&s).unwrap(), 2e28));
        assert!(close(n_sky_f1(&s).unwrap(), 1e20));
        assert!(close(n_f0(&s).unwrap(), 2e8));
    }

    #[test]
    fn scaling_laws() {
        let base = CwSearchSpec::default();
        let ratio = |s: &CwSearchSpec, f: fn(&CwSearchSpec) -> Result<f64>| {
            f(s).unwrap() / f(&base).unwrap()
        };
        assert!(close(ratio(&with(|s| s.t_obs = 2.0), n_total), 8.0));
        assert!(close(ratio(&with(|s| s.f = 0.5), n_total), 0.25));
        assert!(close(ratio(&with(|s| s.delta_f = 2.0), n_total), 2.0));
        assert!(close(ratio(&with(|s| s.t_obs = 2.0), n_sky_f1), 4.0));
        assert!(close(ratio(&with(|s| s.delta_f1 = 2e-9), n_sky_f1), 2.0));
        assert!(close(n_f0(&with(|s| s.t_obs = 0.5)).unwrap(), 1e8));
        assert!(close(n_f0(&with(|s| s.t_obs = 10.0)).unwrap(), 2e9));
    }

    #[test]
    fn default_cost() {
        let c = quantum_cost(&CwSearchSpec::default()).unwrap();
        assert_eq!((c.p, c.ell), (35, 6));
        assert!(close(c.iterations, 6.0 * (2f64.powi(35) - 1.0)));
        assert!((c.iterations / 2e11 - 1.0).abs() < 0.1);
        assert!(c.speedup > 5e7 && c.speedup < 2e8);
    }

    #[test]
    fn loose_tolerance_needs_one_run() {
        let c = quantum_cost(&with(|s| s.delta_target = 0.09)).unwrap();
        assert_eq!(c.ell, 1);
        assert_eq!(
            quantum_cost(&with(|s| s.delta_target = 1e-9)).unwrap().ell,
            9
        );
    }

    #[test]
    fn speedup_floor() {
        // quantum_ops < 12πℓ√N because 2^p ≤ 2π√N, so speedup > √N/(12πℓ).
        for delta_f1 in [1e-23, 1e-21, 1e-19, 1e-15] {
            for delta_target in [1e-1, 1e-3, 1e-6, 1e-9] {
                let c = quantum_cost(&with(|s| {
                    s.delta_f1 = delta_f1;
                    s.delta_target = delta_target;
                }))
                .unwrap();
                let floor = c.n_sky_f1.sqrt() / (12.0 * std::f64::consts::PI * c.ell as f64);
                assert!(c.speedup > floor, "{c:?}");
                if c.n_sky_f1 >= 1e8 * (1.0 - 1e-9) {
                    assert!(c.speedup > 10.0, "{c:?}");
                }
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(n_total(&with(|s| s.t_obs = -1.0)).is_err());
        assert!(quantum_cost(&with(|s| s.delta_target = 1.5)).is_err());
        let parsed: CwSearchSpec = serde_json::from_str(r#"{"t_obs": 2}"#).unwrap();
        assert_eq!(parsed.f, 1.0);
        assert!(serde_json::from_str::<CwSearchSpec>(r#"{"T": 2}"#).is_err());
    }
}
