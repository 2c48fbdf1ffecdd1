use std::io::Write;
use std::path::{Path, PathBuf};

use qmf_core::amplify;
use qmf_core::bank::{BankSpec, TemplateIndex};
use qmf_core::cw::{self, CwSearchSpec};
use qmf_core::dsp::{self, Psd, TimeSeries};
use qmf_core::io::{self, fmt_f64, Provenance};
use qmf_core::pipeline::{
    self, DetectionModel, MatchedFilterOracle, McConfig, OracleCounter, RetrievalSession,
    RetrievalStrategy, DEFAULT_MAX_ATTEMPTS,
};
use qmf_core::qsim::{self, StringOracleSpec, DEFAULT_QUBIT_CAP};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::{
    BankArg, CliError, Command, CountDistArgs, CwCostArgs, FailBoundArgs, McBenchArgs, MfSnrArgs,
    QsimCountArgs, QsimSearchArgs, SearchArgs,
};

type Result<T> = std::result::Result<T, CliError>;

const DEFAULT_SHOTS: u64 = 2048;
const NORM_TOL: f64 = 1e-9;

pub(crate) fn run(command: Command, config: Option<&Path>) -> Result<()> {
    match command {
        Command::MfSnr(a) => mf_snr(resolve(&a, config)?),
        Command::CountDist(a) => count_dist(resolve(&a, config)?),
        Command::QsimCount(a) => qsim_count(resolve(&a, config)?),
        Command::QsimSearch(a) => qsim_search(resolve(&a, config)?),
        Command::McBench(a) => mc_bench(resolve(&a, config)?),
        Command::FailBound(a) => fail_bound(resolve(&a, config)?),
        Command::CwCost(a) => cw_cost(resolve(&a, config)?),
        Command::Detect(a) => detect(resolve(&a, config)?),
        Command::Retrieve(a) => retrieve(resolve(&a, config)?),
    }
}

/// Fills options not given on the command line from the config object.
fn resolve<T: Serialize + DeserializeOwned>(args: &T, config: Option<&Path>) -> Result<T> {
    let mut merged = serde_json::to_value(args).expect("argument structs serialise");
    if let Some(path) = config {
        let file: Value = io::read_json(path)?;
        let Value::Object(file) = file else {
            return Err(CliError::Input(format!(
                "{}: config must be a JSON object",
                path.display()
            )));
        };
        let slots = merged
            .as_object_mut()
            .expect("argument structs are objects");
        for (key, value) in file {
            match slots.get_mut(&key) {
                Some(slot) if slot.is_null() => *slot = value,
                Some(_) => {}
                None => {
                    return Err(CliError::Input(format!(
                        "{}: unknown config key {key:?}",
                        path.display()
                    )))
                }
            }
        }
    }
    serde_json::from_value(merged).map_err(|e| CliError::Input(format!("config: {e}")))
}

fn need<T: Clone>(value: &Option<T>, name: &str) -> Result<T> {
    value.clone().ok_or_else(|| {
        CliError::Input(format!(
            "missing required option --{}",
            name.replace('_', "-")
        ))
    })
}

fn echo<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).expect("argument structs serialise")
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => Ok(io::write_atomic(p, bytes)?),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Input(format!("stdout: {e}"))),
    }
}

fn check_mass(mass: f64, what: &str) -> Result<()> {
    if (mass - 1.0).abs() > NORM_TOL || !mass.is_finite() {
        return Err(CliError::Numeric(format!("{what} sums to {mass}, not 1")));
    }
    Ok(())
}

fn load_bank(bank: &BankArg) -> Result<BankSpec> {
    let spec = match bank {
        BankArg::Inline(spec) => *spec,
        BankArg::Path(path) => io::read_json(path)?,
    };
    spec.validate()?;
    Ok(spec)
}

/// PSD from a file, a Welch estimate, or flat unit-variance white noise.
fn load_psd(data: &TimeSeries, psd: &Option<PathBuf>, estimate: &Option<usize>) -> Result<Psd> {
    match (psd, estimate) {
        (Some(_), Some(_)) => Err(CliError::Input(
            "give at most one of --psd and --estimate-psd".into(),
        )),
        (Some(path), None) => Ok(io::read_psd_csv(path)?),
        (None, Some(seg)) => Ok(dsp::estimate_psd(data, *seg, 0.5)?),
        (None, None) => Ok(Psd::white(2.0 * data.dt(), data.dt(), data.len())?),
    }
}

fn mf_snr(a: MfSnrArgs) -> Result<()> {
    let data = io::read_strain(&need(&a.data, "data")?)?;
    let bank = load_bank(&need(&a.bank, "bank")?)?;
    let index = TemplateIndex(need(&a.index, "index")?);
    let psd = load_psd(&data, &a.psd, &a.estimate_psd)?;
    let oracle = MatchedFilterOracle::new(bank, &data, &psd, 0.0)?;
    let snr = oracle.snr(index)?;
    let (rho_max, j) = dsp::max_snr(&snr);
    let prov = Provenance::new("mf-snr", None, echo(&a));

    let csv = io::csv_bytes(&prov, &["t", "rho"], io::snr_rows(&snr, data.t0()))?;
    emit(a.out.as_deref(), &csv)?;

    let summary = json!({
        "index": index.0,
        "params": bank.params(index)?,
        "rho_max": rho_max,
        "t_max": data.time(j),
    });
    let bytes = io::json_bytes(&prov, &summary)?;
    match &a.summary {
        Some(path) => io::write_atomic(path, &bytes)?,
        None => {
            let _ = std::io::stderr().write_all(&bytes);
        }
    }
    Ok(())
}

fn count_dist(a: CountDistArgs) -> Result<()> {
    let n = need(&a.n, "n")?;
    let r = need(&a.r, "r")?;
    let p = a.p.unwrap_or_else(|| amplify::choose_p(n));
    let dist = amplify::counting_distribution(n, r, p)?;
    check_mass(dist.probs().iter().sum(), "counting distribution")?;
    let prov = Provenance::new(
        "count-dist",
        None,
        json!({"n": n, "r": r, "p": p, "out": a.out}),
    );
    let rows = dist
        .probs()
        .iter()
        .enumerate()
        .map(|(b, v)| [b.to_string(), fmt_f64(*v)]);
    emit(
        a.out.as_deref(),
        &io::csv_bytes(&prov, &["b", "probability"], rows)?,
    )
}

fn oracle_spec(
    data: &Option<String>,
    n: Option<usize>,
    q: Option<usize>,
) -> Result<StringOracleSpec> {
    let spec = StringOracleSpec::parse(&need(data, "data")?, q.unwrap_or(0))?;
    if let Some(n) = n {
        if n != spec.n() {
            return Err(CliError::Input(format!(
                "--n {n} disagrees with the {}-bit data string",
                spec.n()
            )));
        }
    }
    Ok(spec)
}

fn write_circuit_outputs(
    prov: &Provenance,
    run: &qsim::CircuitRun,
    out: Option<&Path>,
    marginal_out: Option<&Path>,
) -> Result<()> {
    check_mass(run.marginal.iter().sum(), "exact marginal")?;
    let rows = run.shots.counts.iter().map(|(&b, &c)| {
        [
            run.shots.bitstring(b),
            c.to_string(),
            fmt_f64(run.marginal[b as usize]),
        ]
    });
    emit(
        out,
        &io::csv_bytes(prov, &["outcome_bits", "count", "probability"], rows)?,
    )?;
    if let Some(path) = marginal_out {
        let rows = run
            .marginal
            .iter()
            .enumerate()
            .map(|(b, v)| [b.to_string(), fmt_f64(*v)]);
        io::write_csv(path, prov, &["outcome_int", "probability"], rows)?;
    }
    Ok(())
}

fn qsim_count(a: QsimCountArgs) -> Result<()> {
    let spec = oracle_spec(&a.data, a.n, a.q)?;
    let seed = need(&a.seed, "seed")?;
    let p = match a.p {
        Some(p) => p,
        None => amplify::choose_p(1u64.checked_shl(spec.n() as u32).unwrap_or(u64::MAX)) as usize,
    };
    let mut rng = pipeline::trial_rng(seed, 0);
    let run = qsim::run_counting_circuit_with_cap(
        &spec,
        p,
        a.shots.unwrap_or(DEFAULT_SHOTS),
        a.max_qubits.unwrap_or(DEFAULT_QUBIT_CAP),
        &mut rng,
    )?;
    let mut cfg = echo(&a);
    cfg["p"] = json!(p);
    let prov = Provenance::new("qsim-count", Some(seed), cfg);
    write_circuit_outputs(&prov, &run, a.out.as_deref(), a.marginal_out.as_deref())
}

fn qsim_search(a: QsimSearchArgs) -> Result<()> {
    let spec = oracle_spec(&a.data, a.n, a.q)?;
    let seed = need(&a.seed, "seed")?;
    let k = match a.k {
        Some(k) => k,
        None => amplify::optimal_k(1u64 << spec.n().min(63), spec.match_count())?,
    };
    let mut rng = pipeline::trial_rng(seed, 0);
    let run = qsim::run_search_circuit_with_cap(
        &spec,
        k,
        a.shots.unwrap_or(DEFAULT_SHOTS),
        a.max_qubits.unwrap_or(DEFAULT_QUBIT_CAP),
        &mut rng,
    )?;
    let mut cfg = echo(&a);
    cfg["k"] = json!(k);
    let prov = Provenance::new("qsim-search", Some(seed), cfg);
    write_circuit_outputs(&prov, &run, a.out.as_deref(), a.marginal_out.as_deref())
}

fn mc_bench(a: McBenchArgs) -> Result<()> {
    let cfg = McConfig {
        n: need(&a.n, "n")?,
        r: need(&a.r, "r")?,
        p: a.p,
        strategy: need(&a.strategy, "strategy")?,
        trials: need(&a.trials, "trials")?,
        seed: need(&a.seed, "seed")?,
        max_attempts: a.max_attempts.unwrap_or(DEFAULT_MAX_ATTEMPTS),
    };
    let summary = pipeline::monte_carlo(&cfg)?;
    let prov = Provenance::new("mc-bench", Some(cfg.seed), echo(&cfg));
    emit(a.out.as_deref(), &io::json_bytes(&prov, &summary)?)?;
    if let Some(path) = &a.histogram_out {
        let rows = summary
            .histogram
            .iter()
            .map(|b| [b.evals.to_string(), b.count.to_string()]);
        io::write_csv(path, &prov, &["evals", "count"], rows)?;
    }
    Ok(())
}

fn fail_bound(a: FailBoundArgs) -> Result<()> {
    let r_max = need(&a.r_max, "r_max")?;
    if r_max == 0 {
        return Err(CliError::Input("--r-max must be at least 1".into()));
    }
    let rows = (1..=r_max)
        .map(amplify::max_fail_bound)
        .collect::<qmf_core::Result<Vec<_>>>()?;
    let prov = Provenance::new("fail-bound", None, echo(&a));
    let rows = rows.iter().map(|o| {
        [
            o.r.to_string(),
            fmt_f64(o.max_bound),
            fmt_f64(o.eps_p_argmax),
        ]
    });
    emit(
        a.out.as_deref(),
        &io::csv_bytes(&prov, &["r", "max_fail_bound", "eps_p_argmax"], rows)?,
    )
}

fn cw_cost(a: CwCostArgs) -> Result<()> {
    let d = CwSearchSpec::default();
    let spec = CwSearchSpec {
        f: a.f.unwrap_or(d.f),
        t_obs: a.t_obs.unwrap_or(d.t_obs),
        delta_f: a.delta_f.unwrap_or(d.delta_f),
        delta_f1: a.delta_f1.unwrap_or(d.delta_f1),
        delta_target: a.delta_target.unwrap_or(d.delta_target),
    };
    let cost = cw::quantum_cost(&spec)?;
    let prov = Provenance::new("cw-cost", None, echo(&spec));
    emit(a.out.as_deref(), &io::json_bytes(&prov, &cost)?)
}

struct SearchSetup {
    oracle: MatchedFilterOracle,
    matches: Vec<TemplateIndex>,
    setup_evals: u64,
    model: DetectionModel,
    seed: u64,
}

fn search_setup(a: &SearchArgs) -> Result<SearchSetup> {
    let data = io::read_strain(&need(&a.data, "data")?)?;
    let bank = load_bank(&need(&a.bank, "bank")?)?;
    let psd = load_psd(&data, &a.psd, &a.estimate_psd)?;
    let seed = need(&a.seed, "seed")?;
    let oracle = MatchedFilterOracle::new(bank, &data, &psd, need(&a.rho_thr, "rho_thr")?)?;
    let mut setup = OracleCounter::new();
    let matches = pipeline::classical_search(&oracle, &mut setup)?;
    let n = bank.size();
    let p = a.p.unwrap_or_else(|| amplify::choose_p(n));
    let model = DetectionModel::new(n, matches.len() as u64, p)?;
    Ok(SearchSetup {
        oracle,
        matches,
        setup_evals: setup.evaluations(),
        model,
        seed,
    })
}

fn detect(a: SearchArgs) -> Result<()> {
    let s = search_setup(&a)?;
    let mut rng = pipeline::trial_rng(s.seed, 0);
    let mut counter = OracleCounter::new();
    let outcome = s.model.detect(&mut rng, &mut counter)?;
    let report = json!({
        "n": s.model.n(),
        "p": s.model.p(),
        "r_true": s.model.r_true(),
        "setup_evals": s.setup_evals,
        "b": outcome.b,
        "r_star": outcome.r_star,
        "k_star": outcome.k_star,
        "detected": outcome.detected,
        "oracle_evals": counter.evaluations(),
    });
    let prov = Provenance::new("detect", Some(s.seed), echo(&a));
    emit(a.out.as_deref(), &io::json_bytes(&prov, &report)?)
}

fn retrieve(a: SearchArgs) -> Result<()> {
    let s = search_setup(&a)?;
    let strategy = a.strategy.unwrap_or(RetrievalStrategy::ReuseK);
    let mut rng = pipeline::trial_rng(s.seed, 0);
    let mut counter = OracleCounter::new();
    let mut report = json!({
        "n": s.model.n(),
        "p": s.model.p(),
        "r_true": s.model.r_true(),
        "setup_evals": s.setup_evals,
        "strategy": strategy,
    });
    if s.matches.is_empty() {
        let outcome = s.model.detect(&mut rng, &mut counter)?;
        report["detection"] = json!(outcome);
        report["succeeded"] = json!(false);
        report["returned_index"] = Value::Null;
        report["oracle_evals"] = json!(counter.evaluations());
    } else {
        let mut session = RetrievalSession::new(
            strategy,
            &s.model,
            &s.matches,
            &s.oracle,
            a.max_attempts.unwrap_or(DEFAULT_MAX_ATTEMPTS),
        )?;
        let record = session.next_success(&mut rng, &mut counter)?;
        report["detection"] = json!(record.last_detection);
        report["succeeded"] = json!(record.succeeded);
        report["returned_index"] = json!(record.returned_index.map(|i| i.0));
        report["attempts"] = json!(record.attempts);
        report["detections"] = json!(record.detections);
        report["oracle_evals"] = json!(record.oracle_evals);
        if let Some(idx) = record.returned_index {
            let (rho, _) = s.oracle.peak(idx)?;
            report["params"] = json!(s.oracle.bank().params(idx)?);
            report["rho_max"] = json!(rho);
        }
    }
    let prov = Provenance::new("retrieve", Some(s.seed), echo(&a));
    emit(a.out.as_deref(), &io::json_bytes(&prov, &report)?)
}
