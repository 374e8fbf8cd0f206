//! Hidden Markov models driven by stacks of independent instructions.
//!
//! A model over states `0..S` and symbols `0..A` of length `n` is generated
//! by `S*(n-1) + 1` independent `(state, symbol)` draws:
//!
//! * entry `0` is distributed as `mu(s) * Q[s][x]` and fixes `(Z_1, X_1)`;
//! * the entry at index `(i-1)*S + s + 1` is distributed as
//!   `P[s][.] (x) Q[.][x]` and is consulted for `(Z_{i+1}, X_{i+1})` exactly
//!   when `Z_i = s` (steps `i` one-based, states zero-based).
//!
//! That layout fills indices `1..=S*(n-1)` bijectively, one slot per
//! (step, from-state) pair. Replaying the stack with [`reconstruct`] gives a
//! trajectory with the usual joint law; unused entries are retained because
//! perturbations may route the chain through them.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Stream;

/// Tolerance for probability-vector and row-sum validation.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Convergence tolerance of the stationary-distribution power iteration.
pub const STATIONARY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum HmmError {
    #[error("{matrix} row {row} sums to {sum}, not 1")]
    NonStochasticRow { matrix: &'static str, row: usize, sum: f64 },
    #[error("{matrix} row {row} has negative entry {value}")]
    NegativeEntry { matrix: &'static str, row: usize, value: f64 },
    #[error("bad dimensions: {0}")]
    BadDimensions(String),
    #[error("no K <= {k_max} makes every entry of P^K positive; chain is periodic or reducible")]
    NotMixing { k_max: usize },
    #[error("instruction stacks have different shapes ({left} vs {right} entries)")]
    LengthMismatch { left: usize, right: usize },
    #[error("perturbation index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
}

/// A hidden Markov model: initial law `mu`, transition matrix `P` over
/// `num_states` states and emission matrix `Q` over `num_symbols` symbols.
///
/// Matrices are stored row-major. Construction validates shapes and
/// stochasticity; irreducibility/aperiodicity is only established when
/// [`mixing_constants`] succeeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HmmSpecRepr", into = "HmmSpecRepr")]
pub struct HmmSpec {
    num_states: usize,
    num_symbols: usize,
    initial: Vec<f64>,
    transition: Vec<f64>,
    emission: Vec<f64>,
}

/// Serialized form: `{"states", "symbols", "mu", "P", "Q"}` with matrices as
/// row-major flat arrays.
#[derive(Serialize, Deserialize)]
struct HmmSpecRepr {
    states: usize,
    symbols: usize,
    mu: Vec<f64>,
    #[serde(rename = "P")]
    p: Vec<f64>,
    #[serde(rename = "Q")]
    q: Vec<f64>,
}

impl TryFrom<HmmSpecRepr> for HmmSpec {
    type Error = HmmError;
    fn try_from(r: HmmSpecRepr) -> Result<Self, HmmError> {
        HmmSpec::new(r.states, r.symbols, r.mu, r.p, r.q)
    }
}

impl From<HmmSpec> for HmmSpecRepr {
    fn from(s: HmmSpec) -> Self {
        HmmSpecRepr {
            states: s.num_states,
            symbols: s.num_symbols,
            mu: s.initial,
            p: s.transition,
            q: s.emission,
        }
    }
}

impl HmmSpec {
    /// Build and validate a model from row-major matrices.
    pub fn new(
        num_states: usize,
        num_symbols: usize,
        initial: Vec<f64>,
        transition: Vec<f64>,
        emission: Vec<f64>,
    ) -> Result<Self, HmmError> {
        let spec = HmmSpec { num_states, num_symbols, initial, transition, emission };
        validate_spec(&spec)?;
        Ok(spec)
    }

    /// Build a model started at the stationary distribution of `transition`.
    pub fn new_stationary(
        num_states: usize,
        num_symbols: usize,
        transition: Vec<f64>,
        emission: Vec<f64>,
    ) -> Result<Self, HmmError> {
        let uniform = vec![1.0 / num_states as f64; num_states];
        let mut spec = HmmSpec::new(num_states, num_symbols, uniform, transition, emission)?;
        spec.initial = spec.stationary_distribution()?;
        Ok(spec)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition_row(&self, state: usize) -> &[f64] {
        &self.transition[state * self.num_states..(state + 1) * self.num_states]
    }

    pub fn emission_row(&self, state: usize) -> &[f64] {
        &self.emission[state * self.num_symbols..(state + 1) * self.num_symbols]
    }

    /// Stationary vector of `P` by power iteration to `STATIONARY_TOLERANCE`.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>, HmmError> {
        let s = self.num_states;
        let mut pi = vec![1.0 / s as f64; s];
        let mut next = vec![0.0; s];
        for _ in 0..200_000 {
            next.iter_mut().for_each(|x| *x = 0.0);
            for (from, &p_from) in pi.iter().enumerate() {
                let row = self.transition_row(from);
                for to in 0..s {
                    next[to] += p_from * row[to];
                }
            }
            let delta =
                pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
            std::mem::swap(&mut pi, &mut next);
            if delta <= STATIONARY_TOLERANCE {
                return Ok(pi);
            }
        }
        Err(HmmError::NotMixing { k_max: 200_000 })
    }

    /// Number of instructions for a trajectory of length `n`.
    pub fn stack_len(&self, n: usize) -> usize {
        self.num_states * (n - 1) + 1
    }
}

/// Check every invariant of [`HmmSpec`] that does not involve mixing.
pub fn validate_spec(spec: &HmmSpec) -> Result<(), HmmError> {
    let s = spec.num_states;
    let a = spec.num_symbols;
    if s == 0 || a == 0 {
        return Err(HmmError::BadDimensions(format!("{s} states, {a} symbols")));
    }
    if spec.initial.len() != s {
        return Err(HmmError::BadDimensions(format!(
            "mu has {} entries, expected {s}",
            spec.initial.len()
        )));
    }
    if spec.transition.len() != s * s {
        return Err(HmmError::BadDimensions(format!(
            "P has {} entries, expected {}",
            spec.transition.len(),
            s * s
        )));
    }
    if spec.emission.len() != s * a {
        return Err(HmmError::BadDimensions(format!(
            "Q has {} entries, expected {}",
            spec.emission.len(),
            s * a
        )));
    }
    check_rows("mu", &spec.initial, s)?;
    check_rows("P", &spec.transition, s)?;
    check_rows("Q", &spec.emission, a)?;
    Ok(())
}

/// Neumaier-compensated sum; plain summation of a long uniform row (e.g.
/// 1e5 entries of 1/1e5) drifts past the 1e-12 validation tolerance.
fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for &v in values {
        let t = sum + v;
        compensation += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + compensation
}

fn check_rows(matrix: &'static str, data: &[f64], row_len: usize) -> Result<(), HmmError> {
    for (row, chunk) in data.chunks(row_len).enumerate() {
        if let Some(&value) = chunk.iter().find(|&&v| v < 0.0) {
            return Err(HmmError::NegativeEntry { matrix, row, value });
        }
        let sum = compensated_sum(chunk);
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(HmmError::NonStochasticRow { matrix, row, sum });
        }
    }
    Ok(())
}

/// Mixing constants `(K, epsilon)`: the smallest power of `P` with all
/// entries positive, and that minimum entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingConstants {
    pub k: usize,
    pub epsilon: f64,
}

/// Default power cap used when searching for mixing constants.
pub fn default_k_max(spec: &HmmSpec) -> usize {
    10 * spec.num_states * spec.num_states
}

/// Smallest `K <= k_max` with `min(P^K) > 0`, and `epsilon = min(P^K)`.
///
/// Fails with [`HmmError::NotMixing`] for periodic or reducible chains.
pub fn mixing_constants(spec: &HmmSpec, k_max: usize) -> Result<MixingConstants, HmmError> {
    let s = spec.num_states;
    let mut power = spec.transition.clone();
    for k in 1..=k_max {
        let min = power.iter().cloned().fold(f64::INFINITY, f64::min);
        if min > 0.0 {
            return Ok(MixingConstants { k, epsilon: min });
        }
        let mut next = vec![0.0; s * s];
        for i in 0..s {
            for mid in 0..s {
                let pim = power[i * s + mid];
                if pim == 0.0 {
                    continue;
                }
                let row = spec.transition_row(mid);
                for j in 0..s {
                    next[i * s + j] += pim * row[j];
                }
            }
        }
        power = next;
    }
    Err(HmmError::NotMixing { k_max })
}

/// One `(state, symbol)` instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instruction {
    pub state: u32,
    pub symbol: u32,
}

/// The vector of independent instructions for one trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionStack {
    num_states: usize,
    n: usize,
    entries: Vec<Instruction>,
}

impl InstructionStack {
    /// Build a stack from explicit entries (length must be `S*(n-1) + 1`).
    pub fn from_entries(num_states: usize, n: usize, entries: Vec<Instruction>) -> Self {
        assert_eq!(entries.len(), num_states * (n - 1) + 1, "stack length mismatch");
        assert!(
            entries.iter().all(|e| (e.state as usize) < num_states),
            "state index out of range"
        );
        InstructionStack { num_states, n, entries }
    }

    /// Single-state stack whose entries carry the given symbols.
    pub fn from_symbols(symbols: &[u32]) -> Self {
        assert!(!symbols.is_empty(), "trajectory length must be at least 1");
        let entries = symbols.iter().map(|&symbol| Instruction { state: 0, symbol }).collect();
        InstructionStack { num_states: 1, n: symbols.len(), entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Instruction] {
        &self.entries
    }

    /// Stack index consulted for the transition out of `state` at one-based
    /// step `step` (i.e. the entry determining `(Z_{step+1}, X_{step+1})`).
    pub fn index_of(&self, step: usize, state: u32) -> usize {
        (step - 1) * self.num_states + state as usize + 1
    }

    /// Replace entry `index` with the corresponding entry of `fresh`.
    pub fn splice_one(&self, index: usize, fresh: &InstructionStack) -> InstructionStack {
        self.with_entry(index, fresh.entries[index])
    }

    /// Replace entry `index` with the given instruction.
    pub fn with_entry(&self, index: usize, entry: Instruction) -> InstructionStack {
        let mut out = self.clone();
        out.entries[index] = entry;
        out
    }
}

/// A set of instruction indices to resample, kept strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PerturbationSet {
    indices: Vec<usize>,
}

impl PerturbationSet {
    /// Build from strictly increasing indices.
    pub fn new(indices: Vec<usize>) -> Self {
        assert!(
            indices.windows(2).all(|w| w[0] < w[1]),
            "perturbation indices must be strictly increasing"
        );
        PerturbationSet { indices }
    }

    /// Build from indices in any order, deduplicating.
    pub fn from_unsorted(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        PerturbationSet { indices }
    }

    pub fn empty() -> Self {
        PerturbationSet { indices: Vec::new() }
    }

    pub fn single(index: usize) -> Self {
        PerturbationSet { indices: vec![index] }
    }

    pub fn all(len: usize) -> Self {
        PerturbationSet { indices: (0..len).collect() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// This set with `index` added.
    pub fn with(&self, index: usize) -> Self {
        let mut indices = self.indices.clone();
        match indices.binary_search(&index) {
            Ok(_) => {}
            Err(pos) => indices.insert(pos, index),
        }
        PerturbationSet { indices }
    }
}

/// A reconstructed trajectory: hidden states and observed symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub hidden: Vec<u32>,
    pub observed: Vec<u32>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }
}

/// Samples one categorical row in O(1) via Walker's alias method.
///
/// Built once per row; construction is O(len). Exactness: the acceptance
/// threshold per cell is derived from the weights with one division, which
/// keeps cell probabilities within an ulp of `w_i / sum`.
#[derive(Debug, Clone)]
struct AliasRow {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasRow {
    fn new(weights: &[f64]) -> AliasRow {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        let scale = n as f64 / total;
        let mut prob: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let mut small: Vec<u32> = Vec::with_capacity(n);
        let mut large: Vec<u32> = Vec::with_capacity(n);
        for (i, &p) in prob.iter().enumerate() {
            if p < 1.0 {
                small.push(i as u32);
            } else {
                large.push(i as u32);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            alias[s as usize] = l;
            prob[l as usize] -= 1.0 - prob[s as usize];
            if prob[l as usize] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are within rounding of 1.
        for &i in small.iter().chain(large.iter()) {
            prob[i as usize] = 1.0;
        }
        AliasRow { prob, alias }
    }

    #[inline]
    fn sample(&self, rng: &mut Stream) -> u32 {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i as u32
        } else {
            self.alias[i]
        }
    }
}

/// Prepared sampler for instruction stacks of a fixed model.
///
/// Construction is O(S*A); sampling a stack is O(1) per entry, which matters
/// for large alphabets. The sampler is immutable and shared freely across
/// replicate workers.
#[derive(Debug, Clone)]
pub struct StackSampler {
    num_states: usize,
    initial: AliasRow,
    transitions: Vec<AliasRow>,
    emissions: Vec<AliasRow>,
}

impl StackSampler {
    pub fn new(spec: &HmmSpec) -> StackSampler {
        StackSampler {
            num_states: spec.num_states,
            initial: AliasRow::new(&spec.initial),
            transitions: (0..spec.num_states)
                .map(|s| AliasRow::new(spec.transition_row(s)))
                .collect(),
            emissions: (0..spec.num_states)
                .map(|s| AliasRow::new(spec.emission_row(s)))
                .collect(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Draw the instruction for stack index `index`: entry 0 from
    /// `mu (x) Q`, entry `(i-1)S + s' + 1` from `P[s'][.] (x) Q`.
    #[inline]
    pub fn sample_entry(&self, index: usize, rng: &mut Stream) -> Instruction {
        let state = if index == 0 {
            self.initial.sample(rng)
        } else {
            let from = (index - 1) % self.num_states;
            self.transitions[from].sample(rng)
        };
        let symbol = self.emissions[state as usize].sample(rng);
        Instruction { state, symbol }
    }

    /// Draw a full stack for a trajectory of length `n >= 1`.
    pub fn sample_stack(&self, n: usize, rng: &mut Stream) -> InstructionStack {
        assert!(n >= 1, "trajectory length must be at least 1");
        let len = self.num_states * (n - 1) + 1;
        let entries = (0..len).map(|i| self.sample_entry(i, rng)).collect();
        InstructionStack { num_states: self.num_states, n, entries }
    }

    /// Draw a symbol from the emission row of `state`.
    #[inline]
    pub fn sample_emission(&self, state: u32, rng: &mut Stream) -> u32 {
        self.emissions[state as usize].sample(rng)
    }
}

/// Sample an instruction stack for a length-`n` trajectory.
///
/// Convenience wrapper over [`StackSampler`]; build the sampler once when
/// drawing many stacks from the same model.
pub fn sample_instructions(spec: &HmmSpec, n: usize, rng: &mut Stream) -> InstructionStack {
    StackSampler::new(spec).sample_stack(n, rng)
}

/// Replay a stack into its trajectory.
///
/// `(Z_1, X_1)` is entry 0; thereafter the entry at `index_of(step, Z_step)`
/// is consulted. Exactly one entry is read per step.
pub fn reconstruct(stack: &InstructionStack) -> Trajectory {
    let n = stack.n;
    let mut hidden = Vec::with_capacity(n);
    let mut observed = Vec::with_capacity(n);
    let first = stack.entries[0];
    hidden.push(first.state);
    observed.push(first.symbol);
    for step in 1..n {
        let entry = stack.entries[stack.index_of(step, hidden[step - 1])];
        hidden.push(entry.state);
        observed.push(entry.symbol);
    }
    Trajectory { hidden, observed }
}

/// Replace the entries of `stack` indexed by `set` with those of `fresh`.
pub fn perturb(
    stack: &InstructionStack,
    set: &PerturbationSet,
    fresh: &InstructionStack,
) -> Result<InstructionStack, HmmError> {
    if stack.len() != fresh.len() || stack.num_states != fresh.num_states {
        return Err(HmmError::LengthMismatch { left: stack.len(), right: fresh.len() });
    }
    if let Some(&bad) = set.indices().iter().find(|&&i| i >= stack.len()) {
        return Err(HmmError::IndexOutOfRange { index: bad, len: stack.len() });
    }
    let mut out = stack.clone();
    for &i in set.indices() {
        out.entries[i] = fresh.entries[i];
    }
    Ok(out)
}

/// Steps until the original and singly-perturbed hidden chains re-meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingLength {
    /// Chains agree again `s` steps after the first affected step.
    Coupled(usize),
    /// Chains never re-met before the trajectory ended.
    NeverMet,
}

impl CouplingLength {
    /// Whether the coupling length is `>= t` (an unmet chain exceeds any t).
    pub fn at_least(&self, t: usize) -> bool {
        match *self {
            CouplingLength::Coupled(s) => s >= t,
            CouplingLength::NeverMet => true,
        }
    }
}

/// Coupling length for the single-entry perturbation at `index`.
///
/// Both stacks are replayed; if entry `index` is never consulted the
/// trajectories coincide and the answer is `Coupled(0)`. Otherwise, with `j`
/// the zero-based step that entry determines, the answer is the smallest
/// `s >= 0` with `Z_{j+s} = Z'_{j+s}`, or [`CouplingLength::NeverMet`] when
/// no such step exists before the trajectory ends. Once the hidden chains
/// agree at a step they consult identical entries forever after, so re-meet
/// means full coupling.
pub fn coupling_length(
    stack: &InstructionStack,
    index: usize,
    fresh: &InstructionStack,
) -> Result<CouplingLength, HmmError> {
    if index >= stack.len() {
        return Err(HmmError::IndexOutOfRange { index, len: stack.len() });
    }
    let perturbed = perturb(stack, &PerturbationSet::single(index), fresh)?;
    let original = reconstruct(stack);
    let changed = reconstruct(&perturbed);

    let consult_step = if index == 0 {
        Some(0)
    } else {
        let step = (index - 1) / stack.num_states + 1;
        let from_state = ((index - 1) % stack.num_states) as u32;
        (original.hidden[step - 1] == from_state).then_some(step)
    };
    let Some(j) = consult_step else {
        return Ok(CouplingLength::Coupled(0));
    };
    for s in 0..stack.n - j {
        if original.hidden[j + s] == changed.hidden[j + s] {
            return Ok(CouplingLength::Coupled(s));
        }
    }
    Ok(CouplingLength::NeverMet)
}
