//! Dense state-vector simulator for the string-matching Grover circuit and
//! the quantum-counting circuit built on it.
//!
//! Qubit `k` is bit `k` of the amplitude index. A circuit over `n` template
//! qubits and `p` counting qubits uses the layout
//! `template = [0, n)`, `ancilla = n`, `counting = [n+1, n+1+p)`.
//!
//! The data register of the textbook oracle is not simulated. Data bits are
//! classical, so the data-controlled CNOT layer folds into X gates chosen
//! when the circuit is built; the unitary on template ⊗ ancilla is unchanged.

use std::collections::BTreeMap;
use std::ops::Range;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Default qubit ceiling: 2^26 amplitudes, 1 GiB.
pub const DEFAULT_QUBIT_CAP: usize = 26;

/// States smaller than this are updated on the calling thread.
const PAR_THRESHOLD: usize = 1 << 14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterLayout {
    pub template: Range<usize>,
    pub ancilla: usize,
    pub counting: Range<usize>,
}

impl RegisterLayout {
    pub fn new(n_template: usize, p_counting: usize) -> Self {
        Self {
            template: 0..n_template,
            ancilla: n_template,
            counting: n_template + 1..n_template + 1 + p_counting,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.counting.end
    }

    pub fn n_template(&self) -> usize {
        self.template.len()
    }

    pub fn p_counting(&self) -> usize {
        self.counting.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    Z(usize),
    /// `diag(1, e^{iφ})`.
    Phase(usize, f64),
    Cnot {
        control: usize,
        target: usize,
    },
    CPhase {
        control: usize,
        target: usize,
        angle: f64,
    },
    Swap(usize, usize),
    Mcx {
        controls: Vec<usize>,
        target: usize,
    },
    Mcz {
        controls: Vec<usize>,
        target: usize,
    },
    GlobalPhase(f64),
}

impl Gate {
    pub fn inverse(&self) -> Gate {
        match self {
            Gate::Phase(q, a) => Gate::Phase(*q, -a),
            Gate::CPhase {
                control,
                target,
                angle,
            } => Gate::CPhase {
                control: *control,
                target: *target,
                angle: -angle,
            },
            Gate::GlobalPhase(a) => Gate::GlobalPhase(-a),
            g => g.clone(),
        }
    }
}

fn bit(q: usize) -> usize {
    1usize << q
}

fn mask_of(qubits: &[usize]) -> usize {
    qubits.iter().fold(0, |m, &q| m | bit(q))
}

impl StateVector {
    /// `|0…0⟩` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::zero_with_cap(num_qubits, DEFAULT_QUBIT_CAP)
    }

    pub fn zero_with_cap(num_qubits: usize, cap: usize) -> Result<Self> {
        if num_qubits > cap || num_qubits >= usize::BITS as usize - 1 {
            return Err(Error::ResourceCap {
                what: "qubits",
                requested: num_qubits,
                limit: cap,
            });
        }
        let mut amps = vec![ZERO; 1 << num_qubits];
        amps[0] = ONE;
        Ok(Self { num_qubits, amps })
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 1 || !len.is_power_of_two() {
            return Err(Error::invalid(format!(
                "amplitude count {len} is not a power of two"
            )));
        }
        if let Some(index) = amps
            .iter()
            .position(|a| !a.re.is_finite() || !a.im.is_finite())
        {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            num_qubits: len.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        if self.amps.len() >= PAR_THRESHOLD {
            self.amps.par_iter().map(|a| a.norm_sqr()).sum()
        } else {
            self.amps.iter().map(|a| a.norm_sqr()).sum()
        }
    }

    pub fn probability(&self, index: usize) -> f64 {
        self.amps[index].norm_sqr()
    }

    fn check(&self, qubits: &[usize]) -> Result<()> {
        for (i, &q) in qubits.iter().enumerate() {
            if q >= self.num_qubits {
                return Err(Error::invalid(format!(
                    "qubit {q} outside a {}-qubit register",
                    self.num_qubits
                )));
            }
            if qubits[..i].contains(&q) {
                return Err(Error::invalid(format!("qubit {q} addressed twice")));
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        self.apply_controlled(gate, &[])
    }

    /// Applies `gate` conditioned on every qubit in `extra` being 1.
    pub fn apply_controlled(&mut self, gate: &Gate, extra: &[usize]) -> Result<()> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let hc = Complex64::new(h, 0.0);
        let ctrl = mask_of(extra);
        match gate {
            Gate::H(q) => {
                self.check(&[extra, &[*q]].concat())?;
                self.unitary_1q(*q, [[hc, hc], [hc, -hc]], ctrl);
            }
            Gate::X(q) => {
                self.check(&[extra, &[*q]].concat())?;
                self.unitary_1q(*q, [[ZERO, ONE], [ONE, ZERO]], ctrl);
            }
            Gate::Z(q) => {
                self.check(&[extra, &[*q]].concat())?;
                self.phase_on(ctrl | bit(*q), -ONE);
            }
            Gate::Phase(q, a) => {
                self.check(&[extra, &[*q]].concat())?;
                self.phase_on(ctrl | bit(*q), Complex64::from_polar(1.0, *a));
            }
            Gate::Cnot { control, target } => {
                self.check(&[extra, &[*control, *target]].concat())?;
                self.unitary_1q(*target, [[ZERO, ONE], [ONE, ZERO]], ctrl | bit(*control));
            }
            Gate::CPhase {
                control,
                target,
                angle,
            } => {
                self.check(&[extra, &[*control, *target]].concat())?;
                self.phase_on(
                    ctrl | bit(*control) | bit(*target),
                    Complex64::from_polar(1.0, *angle),
                );
            }
            Gate::Swap(a, b) => {
                self.check(&[extra, &[*a, *b]].concat())?;
                let x = [[ZERO, ONE], [ONE, ZERO]];
                self.unitary_1q(*b, x, ctrl | bit(*a));
                self.unitary_1q(*a, x, ctrl | bit(*b));
                self.unitary_1q(*b, x, ctrl | bit(*a));
            }
            Gate::Mcx { controls, target } => {
                self.check(&[extra, controls, &[*target]].concat())?;
                self.unitary_1q(
                    *target,
                    [[ZERO, ONE], [ONE, ZERO]],
                    ctrl | mask_of(controls),
                );
            }
            Gate::Mcz { controls, target } => {
                self.check(&[extra, controls, &[*target]].concat())?;
                self.phase_on(ctrl | mask_of(controls) | bit(*target), -ONE);
            }
            Gate::GlobalPhase(a) => {
                self.check(extra)?;
                self.phase_on(ctrl, Complex64::from_polar(1.0, *a));
            }
        }
        Ok(())
    }

    pub fn apply_all(&mut self, gates: &[Gate]) -> Result<()> {
        gates.iter().try_for_each(|g| self.apply(g))
    }

    /// Multiplies every amplitude whose index has all bits of `mask` set.
    fn phase_on(&mut self, mask: usize, phase: Complex64) {
        let kernel = |(i, a): (usize, &mut Complex64)| {
            if i & mask == mask {
                *a *= phase;
            }
        };
        if self.amps.len() >= PAR_THRESHOLD {
            self.amps.par_iter_mut().enumerate().for_each(kernel);
        } else {
            self.amps.iter_mut().enumerate().for_each(kernel);
        }
    }

    /// 2×2 unitary on qubit `q`, restricted to indices carrying every bit of `ctrl`.
    fn unitary_1q(&mut self, q: usize, u: [[Complex64; 2]; 2], ctrl: usize) {
        let half = bit(q);
        let block = half << 1;
        let pair = move |base: usize, lo: &mut [Complex64], hi: &mut [Complex64]| {
            for (off, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                if (base + off) & ctrl == ctrl {
                    let (x, y) = (*a, *b);
                    *a = u[0][0] * x + u[0][1] * y;
                    *b = u[1][0] * x + u[1][1] * y;
                }
            }
        };
        let len = self.amps.len();
        if len < PAR_THRESHOLD {
            for (c, chunk) in self.amps.chunks_mut(block).enumerate() {
                let (lo, hi) = chunk.split_at_mut(half);
                pair(c * block, lo, hi);
            }
        } else if len / block >= rayon::current_num_threads() * 4 {
            self.amps
                .par_chunks_mut(block)
                .enumerate()
                .for_each(|(c, chunk)| {
                    let (lo, hi) = chunk.split_at_mut(half);
                    pair(c * block, lo, hi);
                });
        } else {
            // Few wide blocks: split each block's halves across threads instead.
            const SUB: usize = 1 << 12;
            for (c, chunk) in self.amps.chunks_mut(block).enumerate() {
                let (lo, hi) = chunk.split_at_mut(half);
                lo.par_chunks_mut(SUB)
                    .zip(hi.par_chunks_mut(SUB))
                    .enumerate()
                    .for_each(|(s, (l, h))| pair(c * block + s * SUB, l, h));
            }
        }
    }

    /// Exact probabilities of the integer read from `range` (lowest qubit = bit 0).
    pub fn marginal(&self, range: Range<usize>) -> Result<Vec<f64>> {
        if range.end > self.num_qubits || range.start > range.end {
            return Err(Error::invalid(format!(
                "register {range:?} outside a {}-qubit state",
                self.num_qubits
            )));
        }
        let width = range.len();
        let field = (1usize << width) - 1;
        let shift = range.start;
        let fold = |mut acc: Vec<f64>, (i, a): (usize, &Complex64)| {
            acc[(i >> shift) & field] += a.norm_sqr();
            acc
        };
        if self.amps.len() >= PAR_THRESHOLD {
            Ok(self
                .amps
                .par_iter()
                .enumerate()
                .fold(|| vec![0.0; field + 1], fold)
                .reduce(
                    || vec![0.0; field + 1],
                    |mut a, b| {
                        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                        a
                    },
                ))
        } else {
            Ok(self
                .amps
                .iter()
                .enumerate()
                .fold(vec![0.0; field + 1], fold))
        }
    }
}

/// Measured outcome counts keyed by the register integer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ShotResult {
    pub width: usize,
    pub counts: BTreeMap<u64, u64>,
    pub shots: u64,
}

impl ShotResult {
    /// Outcome rendered MSB-first, `width` characters.
    pub fn bitstring(&self, outcome: u64) -> String {
        format!("{outcome:0w$b}", w = self.width)
    }

    pub fn count(&self, outcome: u64) -> u64 {
        self.counts.get(&outcome).copied().unwrap_or(0)
    }

    /// Outcome with the most hits, lowest integer on ties.
    pub fn mode(&self) -> Option<u64> {
        let mut best: Option<(u64, u64)> = None;
        for (&b, &c) in &self.counts {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((b, c));
            }
        }
        best.map(|(b, _)| b)
    }
}

/// Multinomial sample of `shots` outcomes from `probs` via sequential binomials.
pub fn sample_counts<R: Rng + ?Sized>(
    probs: &[f64],
    shots: u64,
    width: usize,
    rng: &mut R,
) -> Result<ShotResult> {
    if shots == 0 {
        return Err(Error::invalid("at least one shot is required"));
    }
    let mut remaining_mass: f64 = probs.iter().sum();
    if !(remaining_mass > 0.0) || !remaining_mass.is_finite() {
        return Err(Error::Numeric(format!(
            "marginal mass {remaining_mass} is not positive"
        )));
    }
    let mut left = shots;
    let mut counts = BTreeMap::new();
    for (b, &pb) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        let frac = if remaining_mass > 0.0 {
            (pb / remaining_mass).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let c = if frac >= 1.0 {
            left
        } else if frac <= 0.0 {
            0
        } else {
            Binomial::new(left, frac)
                .map_err(|e| Error::Numeric(e.to_string()))?
                .sample(rng)
        };
        if c > 0 {
            counts.insert(b as u64, c);
        }
        left -= c;
        remaining_mass -= pb;
    }
    if left > 0 {
        // Rounding residue in the running mass: attribute to the last outcome with weight.
        let last = probs.iter().rposition(|&x| x > 0.0).unwrap_or(0) as u64;
        *counts.entry(last).or_insert(0) += left;
    }
    Ok(ShotResult {
        width,
        counts,
        shots,
    })
}

pub fn measure<R: Rng + ?Sized>(
    state: &StateVector,
    range: Range<usize>,
    shots: u64,
    rng: &mut R,
) -> Result<ShotResult> {
    let width = range.len();
    sample_counts(&state.marginal(range)?, shots, width, rng)
}

/// Template-matching rule: the `n − q` high-order bits must equal the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StringOracleSpec {
    /// MSB-first: `data_bits[0]` is template qubit `n − 1`.
    pub data_bits: Vec<bool>,
    pub q_ignored: usize,
}

impl StringOracleSpec {
    pub fn new(data_bits: Vec<bool>, q_ignored: usize) -> Result<Self> {
        if data_bits.is_empty() {
            return Err(Error::invalid("data string is empty"));
        }
        if q_ignored > data_bits.len() {
            return Err(Error::invalid(format!(
                "cannot ignore {q_ignored} of {} bits",
                data_bits.len()
            )));
        }
        Ok(Self {
            data_bits,
            q_ignored,
        })
    }

    /// Parses a string of `0`/`1` characters, MSB first.
    pub fn parse(data: &str, q_ignored: usize) -> Result<Self> {
        let bits = data
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::invalid(format!("data bit {other:?} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(bits, q_ignored)
    }

    pub fn n(&self) -> usize {
        self.data_bits.len()
    }

    /// Data bit carried by template qubit `k`.
    pub fn bit_for_qubit(&self, k: usize) -> bool {
        self.data_bits[self.n() - 1 - k]
    }

    pub fn data_value(&self) -> u64 {
        self.data_bits.iter().fold(0, |v, &b| (v << 1) | b as u64)
    }

    pub fn is_match(&self, template: u64) -> bool {
        let q = self.q_ignored;
        (template >> q) == (self.data_value() >> q)
    }

    pub fn match_count(&self) -> u64 {
        1 << self.q_ignored
    }
}

/// Phase oracle gates, optionally conditioned on `extra` controls.
fn oracle_gates(layout: &RegisterLayout, spec: &StringOracleSpec) -> (Vec<Gate>, Gate) {
    let unignored: Vec<usize> = layout.template.clone().skip(spec.q_ignored).collect();
    // Data-1 X layer followed by the X sandwich leaves X exactly on unignored data-0 qubits.
    let flips: Vec<Gate> = unignored
        .iter()
        .filter(|&&k| !spec.bit_for_qubit(k - layout.template.start))
        .map(|&k| Gate::X(k))
        .collect();
    let mark = Gate::Mcx {
        controls: unignored,
        target: layout.ancilla,
    };
    (flips, mark)
}

fn check_layout(
    layout: &RegisterLayout,
    spec: &StringOracleSpec,
    state: &StateVector,
) -> Result<()> {
    if layout.n_template() != spec.n() {
        return Err(Error::invalid(format!(
            "template register has {} qubits but the data string has {}",
            layout.n_template(),
            spec.n()
        )));
    }
    if layout.num_qubits() > state.num_qubits() {
        return Err(Error::invalid("layout does not fit the state"));
    }
    Ok(())
}

fn apply_oracle(
    state: &mut StateVector,
    layout: &RegisterLayout,
    spec: &StringOracleSpec,
    extra: &[usize],
) -> Result<()> {
    let (flips, mark) = oracle_gates(layout, spec);
    state.apply_all(&flips)?;
    state.apply_controlled(&mark, extra)?;
    state.apply_all(&flips)
}

/// Phase-flips every template state matching `spec`, kicked back from the `|−⟩` ancilla.
pub fn string_oracle(
    state: &mut StateVector,
    layout: &RegisterLayout,
    spec: &StringOracleSpec,
) -> Result<()> {
    check_layout(layout, spec, state)?;
    apply_oracle(state, layout, spec, &[])
}

fn apply_diffusion(
    state: &mut StateVector,
    layout: &RegisterLayout,
    extra: &[usize],
) -> Result<()> {
    let qubits: Vec<usize> = layout.template.clone().collect();
    let Some((&top, rest)) = qubits.split_last() else {
        return Err(Error::invalid("template register is empty"));
    };
    for &k in &qubits {
        state.apply(&Gate::H(k))?;
        state.apply(&Gate::X(k))?;
    }
    state.apply_controlled(
        &Gate::Mcz {
            controls: rest.to_vec(),
            target: top,
        },
        extra,
    )?;
    for &k in &qubits {
        state.apply(&Gate::X(k))?;
        state.apply(&Gate::H(k))?;
    }
    // H X MCZ X H is −(2|s⟩⟨s| − I); the sign is global here but a Z on the
    // control once the block is conditioned.
    match extra {
        [] => state.apply(&Gate::GlobalPhase(std::f64::consts::PI)),
        [c, more @ ..] => state.apply_controlled(&Gate::Z(*c), more),
    }
}

/// Reflection `2|s⟩⟨s| − I` about the uniform template superposition.
pub fn diffusion(state: &mut StateVector, layout: &RegisterLayout) -> Result<()> {
    apply_diffusion(state, layout, &[])
}

/// One Grover iteration: oracle, then diffusion.
pub fn grover_iteration(
    state: &mut StateVector,
    layout: &RegisterLayout,
    spec: &StringOracleSpec,
) -> Result<()> {
    check_layout(layout, spec, state)?;
    apply_oracle(state, layout, spec, &[])?;
    apply_diffusion(state, layout, &[])
}

pub fn controlled_grover_iteration(
    state: &mut StateVector,
    layout: &RegisterLayout,
    spec: &StringOracleSpec,
    control: usize,
) -> Result<()> {
    check_layout(layout, spec, state)?;
    apply_oracle(state, layout, spec, &[control])?;
    apply_diffusion(state, layout, &[control])
}

/// Counting qubit `t` controls `G^{2^t}`; returns the number of controlled-G calls.
pub fn controlled_grover_powers(
    state: &mut StateVector,
    layout: &RegisterLayout,
    spec: &StringOracleSpec,
) -> Result<u64> {
    let mut calls = 0;
    for (t, c) in layout.counting.clone().enumerate() {
        for _ in 0..1u64 << t {
            controlled_grover_iteration(state, layout, spec, c)?;
            calls += 1;
        }
    }
    Ok(calls)
}

/// QFT gates with `QFT|j⟩ = 2^{-p/2} Σ_l e^{2πi·jl/2^p}|l⟩`, register bit 0 at `range.start`.
pub fn qft_gates(range: Range<usize>) -> Vec<Gate> {
    let qs: Vec<usize> = range.collect();
    let p = qs.len();
    let mut gates = Vec::new();
    for i in (0..p).rev() {
        gates.push(Gate::H(qs[i]));
        for m in (0..i).rev() {
            gates.push(Gate::CPhase {
                control: qs[m],
                target: qs[i],
                angle: std::f64::consts::PI / (1u64 << (i - m)) as f64,
            });
        }
    }
    for i in 0..p / 2 {
        gates.push(Gate::Swap(qs[i], qs[p - 1 - i]));
    }
    gates
}

pub fn qft(state: &mut StateVector, range: Range<usize>) -> Result<()> {
    state.apply_all(&qft_gates(range))
}

pub fn inverse_qft(state: &mut StateVector, range: Range<usize>) -> Result<()> {
    let gates: Vec<Gate> = qft_gates(range).iter().rev().map(Gate::inverse).collect();
    state.apply_all(&gates)
}

/// Uniform superposition on template and counting registers, ancilla in `|−⟩`.
pub fn init_state(layout: &RegisterLayout) -> Result<StateVector> {
    init_state_with_cap(layout, DEFAULT_QUBIT_CAP)
}

pub fn init_state_with_cap(layout: &RegisterLayout, cap: usize) -> Result<StateVector> {
    let mut state = StateVector::zero_with_cap(layout.num_qubits(), cap)?;
    for k in layout.template.clone().chain(layout.counting.clone()) {
        state.apply(&Gate::H(k))?;
    }
    state.apply(&Gate::X(layout.ancilla))?;
    state.apply(&Gate::H(layout.ancilla))?;
    Ok(state)
}

/// Exact marginal plus sampled shots of one circuit run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircuitRun {
    pub marginal: Vec<f64>,
    pub shots: ShotResult,
    /// Controlled or plain Grover iterations applied.
    pub grover_calls: u64,
}

pub fn run_counting_circuit<R: Rng + ?Sized>(
    spec: &StringOracleSpec,
    p: usize,
    shots: u64,
    rng: &mut R,
) -> Result<CircuitRun> {
    run_counting_circuit_with_cap(spec, p, shots, DEFAULT_QUBIT_CAP, rng)
}

pub fn run_counting_circuit_with_cap<R: Rng + ?Sized>(
    spec: &StringOracleSpec,
    p: usize,
    shots: u64,
    cap: usize,
    rng: &mut R,
) -> Result<CircuitRun> {
    if p == 0 {
        return Err(Error::invalid("counting register needs at least one qubit"));
    }
    let layout = RegisterLayout::new(spec.n(), p);
    let mut state = init_state_with_cap(&layout, cap)?;
    let grover_calls = controlled_grover_powers(&mut state, &layout, spec)?;
    inverse_qft(&mut state, layout.counting.clone())?;
    let marginal = state.marginal(layout.counting.clone())?;
    let shots = sample_counts(&marginal, shots, p, rng)?;
    Ok(CircuitRun {
        marginal,
        shots,
        grover_calls,
    })
}

pub fn run_search_circuit<R: Rng + ?Sized>(
    spec: &StringOracleSpec,
    k: u64,
    shots: u64,
    rng: &mut R,
) -> Result<CircuitRun> {
    run_search_circuit_with_cap(spec, k, shots, DEFAULT_QUBIT_CAP, rng)
}

pub fn run_search_circuit_with_cap<R: Rng + ?Sized>(
    spec: &StringOracleSpec,
    k: u64,
    shots: u64,
    cap: usize,
    rng: &mut R,
) -> Result<CircuitRun> {
    let layout = RegisterLayout::new(spec.n(), 0);
    let mut state = init_state_with_cap(&layout, cap)?;
    for _ in 0..k {
        grover_iteration(&mut state, &layout, spec)?;
    }
    let marginal = state.marginal(layout.template.clone())?;
    let shots = sample_counts(&marginal, shots, spec.n(), rng)?;
    Ok(CircuitRun {
        marginal,
        shots,
        grover_calls: k,
    })
}

/// Summed marginal probability of the templates `spec` marks.
pub fn success_probability(spec: &StringOracleSpec, marginal: &[f64]) -> f64 {
    marginal
        .iter()
        .enumerate()
        .filter(|(t, _)| spec.is_match(*t as u64))
        .map(|(_, p)| p)
        .sum()
}
