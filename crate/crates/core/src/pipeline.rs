//! Detection and retrieval at realistic bank sizes.
//!
//! The classical oracle is the real matched filter over a [`BankSpec`]. The
//! quantum measurements are emulated by sampling the closed-form outcome
//! distributions of [`crate::amplify`], with the true match count found once
//! by a classical sweep. Every oracle query the algorithms would make is
//! charged to an [`OracleCounter`]:
//!
//! * detection costs `2^p − 1` queries (the controlled-Grover ladder);
//! * a retrieval attempt costs `k* + 1` (the Grover iterations plus one
//!   classical check of the returned candidate).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplify::{self, CountingDistribution};
use crate::bank::{BankSpec, TemplateIndex};
use crate::dsp::{self, FrequencySeries, Psd, TimeSeries};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OracleCounter {
    evaluations: u64,
}

impl OracleCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, evals: u64) {
        self.evaluations = self.evaluations.saturating_add(evals);
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }
}

/// The oracle `f(i)`: filter the data with template `i` and threshold its peak SNR.
#[derive(Debug, Clone)]
pub struct MatchedFilterOracle {
    bank: BankSpec,
    data: FrequencySeries,
    psd: Psd,
    rho_thr: f64,
}

impl MatchedFilterOracle {
    pub fn new(bank: BankSpec, data: &TimeSeries, psd: &Psd, rho_thr: f64) -> Result<Self> {
        bank.validate()?;
        if data.len() != bank.m_samples {
            return Err(Error::GridMismatch(format!(
                "data has {} samples, bank expects {}",
                data.len(),
                bank.m_samples
            )));
        }
        if (data.fs() - bank.fs_hz).abs() > 1e-9 * bank.fs_hz {
            return Err(Error::GridMismatch(format!(
                "data sampled at {} Hz, bank at {} Hz",
                data.fs(),
                bank.fs_hz
            )));
        }
        if !rho_thr.is_finite() {
            return Err(Error::invalid("threshold must be finite"));
        }
        let data = dsp::forward_fft(data);
        let psd = psd.matched_to(&data)?;
        Ok(Self {
            bank,
            data,
            psd,
            rho_thr,
        })
    }

    pub fn bank(&self) -> &BankSpec {
        &self.bank
    }

    pub fn rho_thr(&self) -> f64 {
        self.rho_thr
    }

    pub fn size(&self) -> u64 {
        self.bank.size()
    }

    pub fn snr(&self, idx: TemplateIndex) -> Result<dsp::SnrSeries> {
        let params = self.bank.params(idx)?;
        let qc = dsp::complex_template(&params, self.bank.fs_hz, self.bank.m_samples, &self.psd)?;
        dsp::snr_series(&self.data, &qc, &self.psd)
    }

    /// Peak SNR and its sample index, uncharged.
    pub fn peak(&self, idx: TemplateIndex) -> Result<(f64, usize)> {
        Ok(dsp::max_snr(&self.snr(idx)?))
    }

    pub fn is_match(&self, idx: TemplateIndex) -> Result<bool> {
        Ok(dsp::match_predicate(self.peak(idx)?.0, self.rho_thr))
    }
}

/// Charged single evaluation of `f(i)`.
pub fn oracle_eval(
    oracle: &MatchedFilterOracle,
    idx: TemplateIndex,
    counter: &mut OracleCounter,
) -> Result<bool> {
    counter.charge(1);
    oracle.is_match(idx)
}

/// Exhaustive sweep: charges `N` evaluations, returns matches in index order.
pub fn classical_search(
    oracle: &MatchedFilterOracle,
    counter: &mut OracleCounter,
) -> Result<Vec<TemplateIndex>> {
    let n = oracle.size();
    counter.charge(n);
    let hits = (0..n)
        .into_par_iter()
        .map(|i| {
            oracle
                .is_match(TemplateIndex(i))
                .map(|m| m.then_some(TemplateIndex(i)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.into_iter().flatten().collect())
}

/// Classical check of a retrieved candidate.
pub trait Verifier: Sync {
    fn verify(&self, idx: TemplateIndex) -> Result<bool>;
}

impl Verifier for MatchedFilterOracle {
    fn verify(&self, idx: TemplateIndex) -> Result<bool> {
        self.is_match(idx)
    }
}

/// Verification by membership in a known, sorted match set.
#[derive(Debug, Clone, Copy)]
pub struct SetVerifier<'a>(pub &'a [TemplateIndex]);

impl Verifier for SetVerifier<'_> {
    fn verify(&self, idx: TemplateIndex) -> Result<bool> {
        Ok(self.0.binary_search(&idx).is_ok())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DetectionOutcome {
    pub b: u64,
    pub r_star: u64,
    pub k_star: Option<u64>,
    pub detected: bool,
}

/// Detection statistics for one scenario, with the outcome distribution cached.
#[derive(Debug, Clone)]
pub struct DetectionModel {
    n: u64,
    r_true: u64,
    p: u32,
    dist: CountingDistribution,
}

impl DetectionModel {
    pub fn new(n: u64, r_true: u64, p: u32) -> Result<Self> {
        let dist = amplify::counting_distribution(n, r_true, p)?;
        Ok(Self { n, r_true, p, dist })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn r_true(&self) -> u64 {
        self.r_true
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn theta(&self) -> f64 {
        self.dist.theta
    }

    pub fn ladder_cost(&self) -> u64 {
        (1u64 << self.p) - 1
    }

    pub fn detect<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        counter: &mut OracleCounter,
    ) -> Result<DetectionOutcome> {
        counter.charge(self.ladder_cost());
        let b = amplify::sample_b(&self.dist, rng);
        let est = amplify::estimate_from_b(b, self.p, self.n)?;
        Ok(DetectionOutcome {
            b,
            r_star: est.r_star,
            k_star: est.k_star,
            detected: est.detected(),
        })
    }
}

pub fn signal_detection<R: Rng + ?Sized>(
    n: u64,
    r_true: u64,
    p: u32,
    rng: &mut R,
    counter: &mut OracleCounter,
) -> Result<DetectionOutcome> {
    DetectionModel::new(n, r_true, p)?.detect(rng, counter)
}

fn draw_non_match<R: Rng + ?Sized>(
    n: u64,
    match_set: &[TemplateIndex],
    rng: &mut R,
) -> TemplateIndex {
    loop {
        let idx = TemplateIndex(rng.random_range(0..n));
        if match_set.binary_search(&idx).is_err() {
            return idx;
        }
    }
}

fn check_match_set(n: u64, match_set: &[TemplateIndex]) -> Result<()> {
    if match_set.is_empty() {
        return Err(Error::invalid(
            "retrieval needs at least one matching template",
        ));
    }
    if !match_set.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid(
            "match set must be sorted and free of duplicates",
        ));
    }
    if match_set.last().is_some_and(|m| m.0 >= n) {
        return Err(Error::invalid("match set holds an index outside the bank"));
    }
    Ok(())
}

/// One Grover search with `k_star` iterations followed by a classical check.
///
/// The measured template is a match with probability `sin²((2k*+1)θ)` and is
/// then uniform over `match_set`; otherwise it is uniform over the rest of
/// the bank. Only verified candidates are returned.
pub fn template_retrieval<R: Rng + ?Sized>(
    n: u64,
    k_star: u64,
    match_set: &[TemplateIndex],
    verifier: &dyn Verifier,
    rng: &mut R,
    counter: &mut OracleCounter,
) -> Result<Option<TemplateIndex>> {
    check_match_set(n, match_set)?;
    let theta = amplify::theta_of(n, match_set.len() as u64)?;
    counter.charge(k_star + 1);
    let hit = rng.random::<f64>() < amplify::p_match(theta, k_star);
    let candidate = if hit || match_set.len() as u64 == n {
        match_set[rng.random_range(0..match_set.len())]
    } else {
        draw_non_match(n, match_set, rng)
    };
    Ok(verifier.verify(candidate)?.then_some(candidate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RetrievalStrategy {
    /// Keep the first detected `k*` for every retry.
    ReuseK,
    /// Re-run detection before each retry.
    RecountEachTry,
}

impl fmt::Display for RetrievalStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RetrievalStrategy::ReuseK => "reuse-k",
            RetrievalStrategy::RecountEachTry => "recount-each-try",
        })
    }
}

impl FromStr for RetrievalStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "reusek" => Ok(RetrievalStrategy::ReuseK),
            "recounteachtry" => Ok(RetrievalStrategy::RecountEachTry),
            _ => Err(Error::invalid(format!("unknown retrieval strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialRecord {
    pub oracle_evals: u64,
    /// Retrieval attempts.
    pub attempts: u64,
    pub detections: u64,
    /// Grover iterations summed over all retrieval attempts.
    pub grover_iterations: u64,
    pub succeeded: bool,
    pub returned_index: Option<TemplateIndex>,
    /// Outcome of the most recent detection.
    pub last_detection: Option<DetectionOutcome>,
}

/// Retrieval state that survives across successive successes.
#[derive(Debug, Clone)]
pub struct RetrievalSession<'a> {
    strategy: RetrievalStrategy,
    model: &'a DetectionModel,
    match_set: &'a [TemplateIndex],
    verifier: &'a dyn Verifier,
    max_attempts: u64,
    k_star: Option<u64>,
    last: Option<DetectionOutcome>,
}

impl fmt::Debug for dyn Verifier + '_ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Verifier")
    }
}

impl<'a> RetrievalSession<'a> {
    pub fn new(
        strategy: RetrievalStrategy,
        model: &'a DetectionModel,
        match_set: &'a [TemplateIndex],
        verifier: &'a dyn Verifier,
        max_attempts: u64,
    ) -> Result<Self> {
        check_match_set(model.n, match_set)?;
        if match_set.len() as u64 != model.r_true {
            return Err(Error::invalid(format!(
                "match set has {} entries but the scenario has r = {}",
                match_set.len(),
                model.r_true
            )));
        }
        if max_attempts == 0 {
            return Err(Error::invalid("max_attempts must be at least 1"));
        }
        Ok(Self {
            strategy,
            model,
            match_set,
            verifier,
            max_attempts,
            k_star: None,
            last: None,
        })
    }

    pub fn last_detection(&self) -> Option<DetectionOutcome> {
        self.last
    }

    /// Detects until `b ≠ 0`, returning `k*`, or `None` when attempts run out.
    fn detect_until_hit<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        counter: &mut OracleCounter,
        record: &mut TrialRecord,
    ) -> Result<Option<u64>> {
        while record.detections < self.max_attempts {
            let outcome = self.model.detect(rng, counter)?;
            record.detections += 1;
            self.last = Some(outcome);
            if let Some(k) = outcome.k_star {
                return Ok(Some(k));
            }
        }
        Ok(None)
    }

    /// Runs attempts until one verified match is returned.
    pub fn next_success<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        counter: &mut OracleCounter,
    ) -> Result<TrialRecord> {
        let start = counter.evaluations();
        let mut record = TrialRecord {
            oracle_evals: 0,
            attempts: 0,
            detections: 0,
            grover_iterations: 0,
            succeeded: false,
            returned_index: None,
            last_detection: None,
        };
        while record.attempts < self.max_attempts {
            let k = match (self.strategy, self.k_star) {
                (RetrievalStrategy::ReuseK, Some(k)) => k,
                _ => match self.detect_until_hit(rng, counter, &mut record)? {
                    Some(k) => k,
                    None => break,
                },
            };
            self.k_star = Some(k);
            record.attempts += 1;
            record.grover_iterations += k;
            if let Some(idx) =
                template_retrieval(self.model.n, k, self.match_set, self.verifier, rng, counter)?
            {
                record.succeeded = true;
                record.returned_index = Some(idx);
                break;
            }
        }
        record.oracle_evals = counter.evaluations() - start;
        record.last_detection = self.last;
        Ok(record)
    }
}

pub fn retrieve_until_success<R: Rng + ?Sized>(
    strategy: RetrievalStrategy,
    model: &DetectionModel,
    match_set: &[TemplateIndex],
    verifier: &dyn Verifier,
    rng: &mut R,
    counter: &mut OracleCounter,
    max_attempts: u64,
) -> Result<TrialRecord> {
    RetrievalSession::new(strategy, model, match_set, verifier, max_attempts)?
        .next_success(rng, counter)
}

/// How many distinct matches [`collect_all_matches`] aims for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CollectTarget {
    /// `r*` from the first detection.
    Estimated,
    /// The true match count.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Collection {
    pub found: BTreeSet<TemplateIndex>,
    pub target: u64,
    pub complete: bool,
    pub successes: u64,
    pub oracle_evals: u64,
}

/// Repeated retrieval with deduplication until `target` distinct matches are
/// held or `budget` oracle evaluations have been spent.
#[allow(clippy::too_many_arguments)]
pub fn collect_all_matches<R: Rng + ?Sized>(
    strategy: RetrievalStrategy,
    model: &DetectionModel,
    match_set: &[TemplateIndex],
    verifier: &dyn Verifier,
    target: CollectTarget,
    budget: u64,
    rng: &mut R,
    counter: &mut OracleCounter,
) -> Result<Collection> {
    let start = counter.evaluations();
    let mut session =
        RetrievalSession::new(strategy, model, match_set, verifier, DEFAULT_MAX_ATTEMPTS)?;
    let mut found = BTreeSet::new();
    let mut successes = 0;
    let mut goal = match target {
        CollectTarget::Exact => Some(model.r_true),
        CollectTarget::Estimated => None,
    };
    loop {
        if goal.is_some_and(|g| found.len() as u64 >= g) {
            break;
        }
        if counter.evaluations() - start >= budget {
            break;
        }
        let record = session.next_success(rng, counter)?;
        if goal.is_none() {
            goal = session.last_detection().map(|d| d.r_star);
        }
        match record.returned_index {
            Some(idx) => {
                successes += 1;
                found.insert(idx);
            }
            None => break,
        }
    }
    let target = goal.unwrap_or(0);
    Ok(Collection {
        complete: found.len() as u64 >= target,
        found,
        target,
        successes,
        oracle_evals: counter.evaluations() - start,
    })
}

/// Monte Carlo scenario; also the JSON config format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n: u64,
    pub r: u64,
    #[serde(default)]
    pub p: Option<u32>,
    pub strategy: RetrievalStrategy,
    pub trials: u64,
    pub seed: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u64,
}

fn default_max_attempts() -> u64 {
    DEFAULT_MAX_ATTEMPTS
}

impl McConfig {
    pub fn resolved_p(&self) -> u32 {
        self.p.unwrap_or_else(|| amplify::choose_p(self.n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HistogramBin {
    pub evals: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub trials: u64,
    pub p: u32,
    pub mean: f64,
    pub median: f64,
    pub stddev: f64,
    pub min: u64,
    pub max: u64,
    pub success_rate: f64,
    pub classical_evals: u64,
    pub histogram: Vec<HistogramBin>,
}

/// `r` evenly spaced indices standing in for the matches of a synthetic scenario.
pub fn synthetic_match_set(n: u64, r: u64) -> Result<Vec<TemplateIndex>> {
    if r == 0 || r > n {
        return Err(Error::invalid(format!(
            "need 1 ≤ r ≤ N, got r = {r}, N = {n}"
        )));
    }
    let stride = n / r;
    Ok((0..r).map(|i| TemplateIndex(i * stride)).collect())
}

/// Per-trial generator: the seed's ChaCha stream number `trial`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

pub fn monte_carlo_records(cfg: &McConfig) -> Result<Vec<TrialRecord>> {
    if cfg.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let model = DetectionModel::new(cfg.n, cfg.r, cfg.resolved_p())?;
    let matches = synthetic_match_set(cfg.n, cfg.r)?;
    let verifier = SetVerifier(&matches);
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(cfg.seed, t);
            let mut counter = OracleCounter::new();
            retrieve_until_success(
                cfg.strategy,
                &model,
                &matches,
                &verifier,
                &mut rng,
                &mut counter,
                cfg.max_attempts,
            )
        })
        .collect()
}

pub fn summarize(records: &[TrialRecord], p: u32, classical_evals: u64) -> Result<McSummary> {
    if records.is_empty() {
        return Err(Error::invalid("no trial records to summarise"));
    }
    let mut evals: Vec<u64> = records.iter().map(|r| r.oracle_evals).collect();
    evals.sort_unstable();
    let n = evals.len();
    let mean = evals.iter().map(|&e| e as f64).sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        evals[n / 2] as f64
    } else {
        0.5 * (evals[n / 2 - 1] as f64 + evals[n / 2] as f64)
    };
    let stddev = if n > 1 {
        (evals
            .iter()
            .map(|&e| (e as f64 - mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64)
            .sqrt()
    } else {
        0.0
    };
    let mut histogram: Vec<HistogramBin> = Vec::new();
    for &e in &evals {
        match histogram.last_mut() {
            Some(bin) if bin.evals == e => bin.count += 1,
            _ => histogram.push(HistogramBin { evals: e, count: 1 }),
        }
    }
    Ok(McSummary {
        trials: n as u64,
        p,
        mean,
        median,
        stddev,
        min: evals[0],
        max: evals[n - 1],
        success_rate: records.iter().filter(|r| r.succeeded).count() as f64 / n as f64,
        classical_evals,
        histogram,
    })
}

/// Runs `cfg.trials` independent retrievals and summarises their oracle cost.
pub fn monte_carlo(cfg: &McConfig) -> Result<McSummary> {
    let records = monte_carlo_records(cfg)?;
    summarize(&records, cfg.resolved_p(), cfg.n)
}
