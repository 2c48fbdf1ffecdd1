//! Closed-form amplitude amplification and quantum counting.
//!
//! Everything here works from `(N, r, p)` alone, so bank sizes far beyond
//! state-vector reach (2^17 templates and up) are handled exactly.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Default ceiling on counting-register width for materialised distributions.
pub const MAX_COUNTING_QUBITS: u32 = 24;

/// Below this the phase-estimation denominator is treated as exactly aligned.
const ALIGNED_TOL: f64 = 1e-12;

/// Two-dimensional rotation picture of Grover search over `N` items with `r` marked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroverGeometry {
    pub n_total: u64,
    pub r_match: u64,
    pub theta: f64,
}

impl GroverGeometry {
    pub fn new(n_total: u64, r_match: u64) -> Result<Self> {
        Ok(Self {
            n_total,
            r_match,
            theta: theta_of(n_total, r_match)?,
        })
    }
}

/// `θ = arcsin √(r/N)`.
pub fn theta_of(n: u64, r: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    if r > n {
        return Err(Error::invalid(format!("r = {r} exceeds N = {n}")));
    }
    Ok((r as f64 / n as f64).sqrt().asin())
}

/// Amplitudes on the marked and unmarked superpositions after `k` Grover iterations.
pub fn amplitude_after(geom: &GroverGeometry, k: u64) -> (f64, f64) {
    let angle = (2 * k + 1) as f64 * geom.theta;
    (angle.sin(), angle.cos())
}

/// Probability that measuring after `k` iterations returns a marked item.
pub fn p_match(theta: f64, k: u64) -> f64 {
    ((2 * k + 1) as f64 * theta).sin().powi(2)
}

/// `round((π/4)·√(N/r) − ½)`, floored at zero.
pub fn optimal_k(n: u64, r: u64) -> Result<u64> {
    if r == 0 {
        return Err(Error::invalid("optimal_k needs at least one marked item"));
    }
    if r > n {
        return Err(Error::invalid(format!("r = {r} exceeds N = {n}")));
    }
    Ok(optimal_k_real(n as f64, r as f64))
}

fn optimal_k_real(n: f64, r: f64) -> u64 {
    let k = (FRAC_PI_4 * (n / r).sqrt() - 0.5).round();
    if k > 0.0 {
        k as u64
    } else {
        0
    }
}

/// Smallest `p` with `2^p > π√N`.
pub fn choose_p(n: u64) -> u32 {
    choose_p_for_size(n as f64)
}

/// [`choose_p`] for bank sizes beyond `u64`, carried as reals.
pub fn choose_p_for_size(n: f64) -> u32 {
    let target = PI * n.sqrt();
    let mut p = 1u32;
    while 2f64.powi(p as i32) <= target {
        p += 1;
    }
    p
}

/// Counting-register width together with the `c` of `2^p = c·√N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountingConfig {
    pub p: u32,
    pub n_total: u64,
    pub c: f64,
}

impl CountingConfig {
    pub fn new(n_total: u64, p: u32) -> Result<Self> {
        if p == 0 || p > 62 {
            return Err(Error::invalid(format!(
                "counting qubits must lie in 1..=62, got {p}"
            )));
        }
        if n_total == 0 {
            return Err(Error::invalid("N must be at least 1"));
        }
        Ok(Self {
            p,
            n_total,
            c: 2f64.powi(p as i32) / (n_total as f64).sqrt(),
        })
    }

    pub fn auto(n_total: u64) -> Result<Self> {
        Self::new(n_total, choose_p(n_total))
    }
}

/// Probability of each counting-register outcome for a given geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingDistribution {
    pub p: u32,
    pub theta: f64,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl CountingDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Outcome with the highest probability, lowest index on ties.
    pub fn mode(&self) -> u64 {
        let mut best = 0;
        for (b, &v) in self.probs.iter().enumerate() {
            if v > self.probs[best] {
                best = b;
            }
        }
        best as u64
    }

    fn from_probs(p: u32, theta: f64, probs: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        Self {
            p,
            theta,
            probs,
            cdf,
        }
    }
}

/// Single-eigenbranch outcome probability
/// `(1/2^{2p})·(sin(2^p·δ)/sin δ)²` with `δ = θ − πb/2^p`.
///
/// `sin²(2^p·θ) = sin²(2^p·δ)` because `πb` is a multiple of π; the shifted
/// form keeps precision near alignment.
pub fn branch_probability(theta: f64, b: u64, p: u32) -> f64 {
    let m = 2f64.powi(p as i32);
    let delta = theta - PI * b as f64 / m;
    let den = delta.sin();
    if den.abs() < ALIGNED_TOL {
        return 1.0;
    }
    let ratio = (m * delta).sin() / (m * den);
    ratio * ratio
}

pub fn counting_distribution(n: u64, r: u64, p: u32) -> Result<CountingDistribution> {
    counting_distribution_with_limit(n, r, p, MAX_COUNTING_QUBITS)
}

/// Full-register outcome distribution `½P₊(b) + ½P₊((2^p − b) mod 2^p)`.
pub fn counting_distribution_with_limit(
    n: u64,
    r: u64,
    p: u32,
    max_p: u32,
) -> Result<CountingDistribution> {
    let theta = theta_of(n, r)?;
    if p == 0 {
        return Err(Error::invalid("counting register needs at least one qubit"));
    }
    if p > max_p {
        return Err(Error::ResourceCap {
            what: "counting distribution outcomes",
            requested: 1usize.checked_shl(p).unwrap_or(usize::MAX),
            limit: 1usize << max_p,
        });
    }
    let m = 1u64 << p;
    if r == 0 {
        let mut probs = vec![0.0; m as usize];
        probs[0] = 1.0;
        return Ok(CountingDistribution::from_probs(p, theta, probs));
    }
    let plus: Vec<f64> = (0..m).map(|b| branch_probability(theta, b, p)).collect();
    let probs = (0..m as usize)
        .map(|b| {
            let mirror = (m as usize - b) % m as usize;
            0.5 * plus[b] + 0.5 * plus[mirror]
        })
        .collect();
    Ok(CountingDistribution::from_probs(p, theta, probs))
}

/// Inverse-CDF draw of one counting outcome.
pub fn sample_b<R: Rng + ?Sized>(dist: &CountingDistribution, rng: &mut R) -> u64 {
    let total = *dist.cdf.last().expect("distribution is never empty");
    let u: f64 = rng.random::<f64>() * total;
    let idx = dist.cdf.partition_point(|&c| c <= u);
    idx.min(dist.probs.len() - 1) as u64
}

/// Estimates read off a counting outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountEstimate {
    pub b: u64,
    pub theta_star: f64,
    pub r_star: u64,
    /// `None` for `b = 0`: no match, nothing to retrieve.
    pub k_star: Option<u64>,
}

impl CountEstimate {
    pub fn detected(&self) -> bool {
        self.b != 0
    }
}

pub fn estimate_from_b(b: u64, p: u32, n: u64) -> Result<CountEstimate> {
    if p == 0 || p > 62 {
        return Err(Error::invalid(format!(
            "counting qubits must lie in 1..=62, got {p}"
        )));
    }
    let m = 1u64 << p;
    if b >= m {
        return Err(Error::invalid(format!("outcome {b} outside [0, {m})")));
    }
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    let frac = PI * b as f64 / m as f64;
    let theta_star = if b <= m / 2 { frac } else { PI - frac };
    if b == 0 {
        return Ok(CountEstimate {
            b,
            theta_star,
            r_star: 0,
            k_star: None,
        });
    }
    let raw = (n as f64 * theta_star.sin().powi(2)).round();
    let r_star = (raw as u64).clamp(1, n);
    Ok(CountEstimate {
        b,
        theta_star,
        r_star,
        k_star: Some(optimal_k_real(n as f64, r_star as f64)),
    })
}

/// `P(b = 0)`, the chance that detection misses every match.
pub fn false_negative_prob(n: u64, r: u64, p: u32) -> Result<f64> {
    if r == 0 {
        return Err(Error::invalid("false-negative probability needs r ≥ 1"));
    }
    Ok(branch_probability(theta_of(n, r)?, 0, p))
}

/// Repetitions `ℓ` for which the compounded miss rate `π^{−2ℓ}` reaches
/// `delta_target` to the nearest power of `π²` (so `10^{-6}` maps to 6).
pub fn repetitions_for(delta_target: f64) -> Result<u32> {
    if !(delta_target > 0.0 && delta_target < 1.0) {
        return Err(Error::invalid(format!(
            "tolerance must lie in (0, 1), got {delta_target}"
        )));
    }
    let exact = (1.0 / delta_target).ln() / (2.0 * PI.ln());
    Ok((exact.round() as u32).max(1))
}

/// Total probability that one detection-then-retrieval pass returns no match.
/// Outcome `b = 0` counts as a failure because no retrieval is attempted.
pub fn p_fail_total(n: u64, r: u64, p: u32) -> Result<f64> {
    if r == 0 {
        return Err(Error::invalid("retrieval failure needs r ≥ 1"));
    }
    let dist = counting_distribution(n, r, p)?;
    let theta = dist.theta;
    let mut fail = dist.probs[0];
    for (b, &prob) in dist.probs.iter().enumerate().skip(1) {
        let k = estimate_from_b(b as u64, p, n)?
            .k_star
            .expect("b ≠ 0 always yields k*");
        fail += prob * (1.0 - p_match(theta, k));
    }
    Ok(fail)
}

fn sinc_pi(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Large-N upper bound on retrieval failure from the two outcomes bracketing
/// `b̃ = 2^{ε_p}·√r`.
pub fn fail_bound(r: u64, eps_p: f64) -> Result<f64> {
    if r == 0 {
        return Err(Error::invalid("failure bound needs r ≥ 1"));
    }
    if !(0.0..=1.0).contains(&eps_p) {
        return Err(Error::invalid(format!(
            "ε_p must lie in [0, 1], got {eps_p}"
        )));
    }
    let b_tilde = 2f64.powf(eps_p) * (r as f64).sqrt();
    let b_up = b_tilde.ceil();
    let eps = b_up - b_tilde;
    let b_down = b_up - 1.0;

    let upper = sinc_pi(eps).powi(2) * (eps / b_up * FRAC_PI_2).cos().powi(2);
    // b'' = 0 is the no-match outcome: nothing is retrieved from it.
    let lower = if b_down < 0.5 {
        0.0
    } else {
        sinc_pi(1.0 - eps).powi(2) * ((1.0 - eps) / b_down * FRAC_PI_2).cos().powi(2)
    };
    Ok(1.0 - upper - lower)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundOptimum {
    pub r: u64,
    pub eps_p_argmax: f64,
    pub max_bound: f64,
}

const BOUND_GRID: usize = 20_000;

/// Supremum of [`fail_bound`] over `ε_p ∈ (0, 1)`: dense grid, then
/// golden-section refinement around the best grid point.
pub fn max_fail_bound(r: u64) -> Result<BoundOptimum> {
    let f = |e: f64| fail_bound(r, e);
    let step = 1.0 / BOUND_GRID as f64;
    let mut best = (0.5 * step, f(0.5 * step)?);
    for i in 1..BOUND_GRID {
        let e = (i as f64 + 0.5) * step;
        let v = f(e)?;
        if v > best.1 {
            best = (e, v);
        }
    }

    let (mut lo, mut hi) = ((best.0 - step).max(1e-12), (best.0 + step).min(1.0 - 1e-12));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    for _ in 0..80 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2)?;
        }
    }
    for (e, v) in [(x1, f1), (x2, f2)] {
        if v > best.1 {
            best = (e, v);
        }
    }
    Ok(BoundOptimum {
        r,
        eps_p_argmax: best.0,
        max_bound: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn theta_values() {
        assert!((theta_of(4, 1).unwrap() - PI / 6.0).abs() < 1e-15);
        assert!((theta_of(64, 2).unwrap() - 0.177_710_600_845).abs() < 1e-11);
        assert!((theta_of(131_072, 9).unwrap() - 8.286_502_425e-3).abs() < 1e-11);
        assert!(theta_of(4, 5).is_err());
        assert_eq!(theta_of(8, 8).unwrap(), FRAC_PI_2);
    }

    #[test]
    fn amplitudes() {
        let g = GroverGeometry::new(64, 2).unwrap();
        let (w, perp) = amplitude_after(&g, 0);
        assert!((w - (2.0f64 / 64.0).sqrt()).abs() < 1e-15);
        assert!((perp - (62.0f64 / 64.0).sqrt()).abs() < 1e-15);
        let (w, _) = amplitude_after(&GroverGeometry::new(4, 1).unwrap(), 1);
        assert!((w - 1.0).abs() < 1e-15);
        let (w, _) = amplitude_after(&g, 4);
        assert!((w * w - 0.999_182_3).abs() < 1e-7);
    }

    #[test]
    fn optimal_iterations() {
        assert_eq!(optimal_k(64, 1).unwrap(), 6);
        assert_eq!(optimal_k(64, 2).unwrap(), 4);
        assert_eq!(optimal_k(32, 4).unwrap(), 2);
        assert_eq!(optimal_k(131_072, 9).unwrap(), 94);
        assert_eq!(optimal_k(10, 10).unwrap(), 0);
        assert!(optimal_k(10, 0).is_err());
    }

    #[test]
    fn counting_qubits() {
        assert_eq!(choose_p(1 << 17), 11);
        assert_eq!(choose_p(64), 5);
        assert_eq!(choose_p(1024), 7);
        assert_eq!(choose_p(10_000), 9);
        assert_eq!(choose_p_for_size(1e12), 22);
        let cfg = CountingConfig::auto(1 << 17).unwrap();
        assert!(cfg.c > PI && cfg.c / 2.0 <= PI);
    }

    #[test]
    fn no_match_is_point_mass() {
        let d = counting_distribution(64, 0, 5).unwrap();
        assert_eq!(d.probs()[0], 1.0);
        assert!(d.probs()[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_of_sixty_four_peaks() {
        let d = counting_distribution(64, 2, 5).unwrap();
        let mut order: Vec<usize> = (0..32).collect();
        order.sort_by(|&a, &b| d.probs()[b].total_cmp(&d.probs()[a]));
        let mut top = [order[0], order[1]];
        top.sort();
        assert_eq!(top, [2, 30]);
        assert_eq!(d.probs()[2], d.probs()[30]);
    }

    #[test]
    fn false_negative_example() {
        let d = counting_distribution(131_072, 9, 11).unwrap();
        let direct = false_negative_prob(131_072, 9, 11).unwrap();
        assert_eq!(d.probs()[0], direct);
        assert!((direct - 3.153_113e-3).abs() < 1e-8);
    }

    #[test]
    fn false_negative_vanishes_at_exact_rotation() {
        // N = 4, r = 2: θ = π/4, so 2^p·θ = π at p = 2.
        assert!(false_negative_prob(4, 2, 2).unwrap() < 1e-30);
    }

    #[test]
    fn over_budget_is_a_resource_error() {
        assert!(matches!(
            counting_distribution_with_limit(64, 2, 12, 10),
            Err(Error::ResourceCap { .. })
        ));
    }

    #[test]
    fn sampling_point_mass_and_determinism() {
        let d = counting_distribution(64, 0, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..1000).all(|_| sample_b(&d, &mut rng) == 0));

        let d = counting_distribution(64, 2, 5).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_b(&d, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn sampling_concentrates_near_peaks() {
        let d = counting_distribution(64, 2, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 100_000;
        let near = (0..draws)
            .map(|_| sample_b(&d, &mut rng) as i64)
            .filter(|&b| (b - 2).abs() <= 1 || (b - 30).abs() <= 1)
            .count() as f64
            / draws as f64;
        let bound = 8.0 / (PI * PI);
        let sigma = (bound * (1.0 - bound) / draws as f64).sqrt();
        assert!(near >= bound - 3.0 * sigma, "near-peak fraction {near}");
    }

    #[test]
    fn estimates_from_outcomes() {
        let e = estimate_from_b(30, 5, 64).unwrap();
        assert!((e.theta_star - PI / 16.0).abs() < 1e-15);
        assert_eq!((e.r_star, e.k_star), (2, Some(4)));
        let e = estimate_from_b(1, 5, 64).unwrap();
        assert_eq!((e.r_star, e.k_star), (1, Some(6)));
        let e = estimate_from_b(4, 5, 32).unwrap();
        assert!((e.theta_star - PI / 8.0).abs() < 1e-15);
        assert_eq!((e.r_star, e.k_star), (5, Some(1)));
        let e = estimate_from_b(0, 5, 64).unwrap();
        assert_eq!((e.r_star, e.k_star, e.detected()), (0, None, false));
        let e = estimate_from_b(16, 5, 64).unwrap();
        assert_eq!((e.r_star, e.k_star), (64, Some(0)));
        assert!(estimate_from_b(32, 5, 64).is_err());
    }

    #[test]
    fn tiny_estimate_is_raised_to_one() {
        // b = 1 with p = 11 and N = 64 gives N·sin²(π/2048) ≈ 1.5e-4.
        let e = estimate_from_b(1, 11, 64).unwrap();
        assert_eq!(e.r_star, 1);
    }

    #[test]
    fn repetitions() {
        assert_eq!(repetitions_for(1e-6).unwrap(), 6);
        assert_eq!(repetitions_for(1e-9).unwrap(), 9);
        assert_eq!(repetitions_for(0.5).unwrap(), 1);
        assert_eq!(repetitions_for(0.09).unwrap(), 1);
        assert!(repetitions_for(0.0).is_err());
        assert!(repetitions_for(1.0).is_err());
    }

    #[test]
    fn match_probabilities() {
        assert!((p_match(PI / 6.0, 1) - 1.0).abs() < 1e-15);
        let theta = theta_of(131_072, 9).unwrap();
        assert!((p_match(theta, 94) - 0.999_978_402).abs() < 1e-8);
        assert!((p_match(theta, 0) - 9.0 / 131_072.0).abs() < 1e-15);
    }

    #[test]
    fn retrieval_failure_below_half() {
        for &(n, r) in &[
            (1u64 << 17, 9u64),
            (1 << 20, 3),
            (1 << 14, 1),
            (1 << 12, 17),
        ] {
            let f = p_fail_total(n, r, choose_p(n)).unwrap();
            assert!(f < 0.5 && f > 0.0, "N={n} r={r}: {f}");
        }
    }

    #[test]
    fn retrieval_failure_reference_values() {
        let f = p_fail_total(131_072, 9, 11).unwrap();
        assert!((f - 0.072_295_103_8).abs() < 1e-9, "{f}");
        let f = p_fail_total(64, 2, 5).unwrap();
        assert!((f - 0.060_237_241_3).abs() < 1e-9, "{f}");
    }

    #[test]
    fn bound_examples() {
        let half = fail_bound(1, 1.5f64.log2()).unwrap();
        let four_over_pi2 = 4.0 / (PI * PI);
        let expect = 1.0
            - four_over_pi2 * (PI / 8.0).cos().powi(2)
            - four_over_pi2 * (PI / 4.0).cos().powi(2);
        assert!((half - expect).abs() < 1e-12);
        assert!((half - 0.4514).abs() < 1e-4);
        assert!(fail_bound(100, 0.5).unwrap() < 0.453);
        assert!(fail_bound(1, 1e-13).unwrap().is_finite());
        assert!(fail_bound(0, 0.5).is_err());
    }

    #[test]
    fn bound_optimum() {
        let one = max_fail_bound(1).unwrap();
        assert!((one.max_bound - 0.453).abs() < 0.002, "{one:?}");
        assert!(one.eps_p_argmax > 0.0 && one.eps_p_argmax < 1.0);
        let large = max_fail_bound(10_000).unwrap();
        assert!((large.max_bound - (1.0 - 8.0 / (PI * PI))).abs() < 0.02);
    }
}
