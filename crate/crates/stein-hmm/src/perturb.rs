//! Difference operators and Monte Carlo estimators for normal-approximation
//! bounds of instruction-stack functionals.
//!
//! For `h = f . reconstruct` and an independent fresh stack, the first-order
//! difference at entry `i` is `h(R) - h(R^i)`. Aggregates of products of such
//! differences over subsets `A` with weights `k_{m,A} = 1 / (C(m,|A|)(m-|A|))`
//! control the distance of the standardized functional to the normal:
//!
//! ```text
//! wass <= sqrt(Var(E[T|R])) / s^2 + sum_i E|D_i h|^3 / (2 s^3)
//! kol  <= sqrt(Var(E[T|R])) / s^2 + sqrt(Var(E[T'|R])) / s^2
//!         + sum_i sqrt(E|D_i h|^6) / (4 s^3)
//!         + sqrt(2 pi) / 16 * sum_i E|D_i h|^3 / s^3
//! ```
//!
//! The subset sum over all `A` is intractable, but drawing `|A|` uniformly on
//! `{0..m-1}`, `A` uniformly among subsets of that size and `j` uniformly off
//! `A` reweights it exactly: `sum_A k_{m,A} sum_{j not in A} 1 = m`, so
//! `m * D_j h(R) * D_j h(R^A)` is an unbiased one-draw estimate of `T_m(h)`
//! conditionally on the stacks. [`sample_t_term`] implements that draw and
//! the enumeration tests pin its exactness for small `m`.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::hmm::{
    perturb, reconstruct, HmmSpec, InstructionStack, PerturbationSet, StackSampler,
};
use crate::rng::{self, Stream};
use crate::{exec, stats};

#[derive(Debug, Error, PartialEq)]
pub enum PerturbError {
    #[error("index {0} is in the perturbation set")]
    IndexInA(usize),
    #[error("need outer >= 2 and inner >= 2, got outer {outer}, inner {inner}")]
    InsufficientSamples { outer: usize, inner: usize },
    #[error("variance estimate {0} is not positive; functional is degenerate")]
    ZeroVariance(f64),
}

/// A real-valued function of an observed symbol sequence.
///
/// Implementations must be deterministic in the input sequence.
pub trait Functional: Sync {
    fn name(&self) -> &str;
    fn evaluate(&self, observed: &[u32]) -> f64;
    /// Hamming-Lipschitz constant, when one is known.
    fn lipschitz_constant(&self) -> Option<f64> {
        None
    }
}

/// `f(x) = sum_i values[x_i]`; the workhorse test functional.
#[derive(Debug, Clone)]
pub struct AdditiveFunctional {
    values: Vec<f64>,
    name: String,
}

impl AdditiveFunctional {
    pub fn new(values: Vec<f64>) -> Self {
        AdditiveFunctional { values, name: "additive".to_string() }
    }

    /// Symbol values -1, +1 for a two-symbol alphabet.
    pub fn plus_minus_one() -> Self {
        AdditiveFunctional { values: vec![-1.0, 1.0], name: "additive".to_string() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Functional for AdditiveFunctional {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, observed: &[u32]) -> f64 {
        observed.iter().map(|&x| self.values[x as usize]).sum()
    }

    fn lipschitz_constant(&self) -> Option<f64> {
        let mut c: f64 = 0.0;
        for &a in &self.values {
            for &b in &self.values {
                c = c.max((a - b).abs());
            }
        }
        Some(c)
    }
}

/// Constant functional; degenerate on purpose.
#[derive(Debug, Clone, Copy)]
pub struct ConstantFunctional(pub f64);

impl Functional for ConstantFunctional {
    fn name(&self) -> &str {
        "constant"
    }

    fn evaluate(&self, _observed: &[u32]) -> f64 {
        self.0
    }

    fn lipschitz_constant(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Evaluate `h = f . reconstruct` on a stack.
pub fn eval_h(f: &dyn Functional, stack: &InstructionStack) -> f64 {
    f.evaluate(&reconstruct(stack).observed)
}

/// First-order difference `h(R) - h(R^i)`, entry `i` resampled from `fresh`.
pub fn delta(f: &dyn Functional, stack: &InstructionStack, i: usize, fresh: &InstructionStack) -> f64 {
    eval_h(f, stack) - eval_h(f, &stack.splice_one(i, fresh))
}

/// Difference with a background perturbation: `h(R^A) - h(R^{A + {i}})`.
pub fn delta_a(
    f: &dyn Functional,
    stack: &InstructionStack,
    set: &PerturbationSet,
    i: usize,
    fresh: &InstructionStack,
) -> Result<f64, PerturbError> {
    if set.contains(i) {
        return Err(PerturbError::IndexInA(i));
    }
    let base = perturb(stack, set, fresh).expect("stacks of equal shape");
    let more = base.splice_one(i, fresh);
    Ok(eval_h(f, &base) - eval_h(f, &more))
}

/// Estimator kernel for one `(A, j)` atom:
/// `m * D_j h(R) * D_j h(R^A)`, with `|D_j h(R^A)|` when `absolute` is set.
pub fn t_term_value(
    f: &dyn Functional,
    stack: &InstructionStack,
    fresh: &InstructionStack,
    set: &PerturbationSet,
    j: usize,
    absolute: bool,
) -> Result<f64, PerturbError> {
    let m = stack.len() as f64;
    let d_plain = delta(f, stack, j, fresh);
    let d_shifted = delta_a(f, stack, set, j, fresh)?;
    let second = if absolute { d_shifted.abs() } else { d_shifted };
    Ok(m * d_plain * second)
}

/// One unbiased draw of `T_m(h)` (or `T'_m(h)` with `absolute`) conditional
/// on `(stack, fresh)`: draws `|A| ~ U{0..m-1}`, `A` uniform of that size,
/// `j` uniform off `A`.
pub fn sample_t_term(
    f: &dyn Functional,
    stack: &InstructionStack,
    fresh: &InstructionStack,
    rng: &mut Stream,
    absolute: bool,
) -> f64 {
    let m = stack.len();
    let a = rng.random_range(0..m);
    let mut indices: Vec<usize> = (0..m).collect();
    let (subset, rest) = indices.partial_shuffle(rng, a);
    let j = rest[rng.random_range(0..rest.len())];
    let set = PerturbationSet::from_unsorted(subset.to_vec());
    t_term_value(f, stack, fresh, &set, j, absolute).expect("j drawn off A")
}

/// Nested Monte Carlo estimate of `Var(E[T_m(h) | R])` (or the `T'` variant).
///
/// For each of `outer` stacks, two independent inner averages of
/// [`sample_t_term`] are drawn (`inner` draws each, fresh stack and `(A, j)`
/// redrawn every time). Conditionally on `R` the two averages are independent
/// with mean `E[T|R]`, so the empirical covariance
/// `mean(t1 * t2) - mean(t1) * mean(t2)` is an asymptotically unbiased
/// estimate of the conditional variance without inner-loop variance bias.
/// The standard error comes from a replicate bootstrap over the outer index.
pub fn estimate_var_conditional(
    spec: &HmmSpec,
    f: &dyn Functional,
    n: usize,
    outer: usize,
    inner: usize,
    rng: &mut Stream,
    absolute: bool,
) -> Result<(f64, f64), PerturbError> {
    if outer < 2 || inner < 2 {
        return Err(PerturbError::InsufficientSamples { outer, inner });
    }
    let sampler = StackSampler::new(spec);
    let streams = rng::substreams(rng, outer);
    let triples: Vec<(f64, f64, f64)> = exec::run_replicates(outer, |o| {
        let mut rng_o = streams[o].clone();
        let stack = sampler.sample_stack(n, &mut rng_o);
        let inner_mean = |rng_o: &mut Stream| {
            let mut sum = 0.0;
            for _ in 0..inner {
                let fresh = sampler.sample_stack(n, rng_o);
                sum += sample_t_term(f, &stack, &fresh, rng_o, absolute);
            }
            sum / inner as f64
        };
        let t1 = inner_mean(&mut rng_o);
        let t2 = inner_mean(&mut rng_o);
        (t1 * t2, t1, t2)
    });

    let statistic = |idx: &mut dyn Iterator<Item = usize>| -> f64 {
        let (mut sp, mut s1, mut s2, mut count) = (0.0, 0.0, 0.0, 0usize);
        for i in idx {
            sp += triples[i].0;
            s1 += triples[i].1;
            s2 += triples[i].2;
            count += 1;
        }
        let c = count as f64;
        sp / c - (s1 / c) * (s2 / c)
    };
    let estimate = statistic(&mut (0..outer));

    let mut boot_rng = rng::substream(rng, u64::MAX);
    let resamples = 200;
    let mut boot = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut draw = (0..outer).map(|_| boot_rng.random_range(0..outer));
        boot.push(statistic(&mut draw));
    }
    let boot_mean = stats::mean(&boot);
    let stderr = (boot.iter().map(|b| (b - boot_mean) * (b - boot_mean)).sum::<f64>()
        / resamples as f64)
        .sqrt();
    Ok((estimate, stderr))
}

/// Per-index estimates of `E |D_i h(R)|^r` with standard errors.
#[derive(Debug, Clone)]
pub struct DeltaMoments {
    pub order: f64,
    pub estimates: Vec<f64>,
    pub stderrs: Vec<f64>,
}

impl DeltaMoments {
    pub fn sum(&self) -> f64 {
        self.estimates.iter().sum()
    }

    /// Standard error of the sum; per-index draws are independent.
    pub fn sum_stderr(&self) -> f64 {
        self.stderrs.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    pub fn max(&self) -> f64 {
        self.estimates.iter().cloned().fold(0.0, f64::max)
    }
}

/// Monte Carlo estimate of `E |D_i h(R)|^r` for every instruction index.
///
/// Each index gets its own `samples` independent draws (stack and fresh
/// entry redrawn each time), so per-index errors are independent and the
/// error of the sum is the quadrature of the per-index errors.
pub fn estimate_delta_moments(
    spec: &HmmSpec,
    f: &dyn Functional,
    n: usize,
    r: f64,
    samples: usize,
    rng: &mut Stream,
) -> DeltaMoments {
    assert!(samples >= 2, "need at least 2 samples per index");
    let sampler = StackSampler::new(spec);
    let m = spec.stack_len(n);
    let streams = rng::substreams(rng, m);
    let per_index: Vec<(f64, f64)> = exec::run_replicates(m, |i| {
        let mut rng_i = streams[i].clone();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..samples {
            let stack = sampler.sample_stack(n, &mut rng_i);
            let fresh_entry = sampler.sample_entry(i, &mut rng_i);
            let perturbed = stack.with_entry(i, fresh_entry);
            let d = (eval_h(f, &stack) - eval_h(f, &perturbed)).abs().powf(r);
            sum += d;
            sum_sq += d * d;
        }
        let mean = sum / samples as f64;
        let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
        (mean, (var / samples as f64).sqrt())
    });
    DeltaMoments {
        order: r,
        estimates: per_index.iter().map(|p| p.0).collect(),
        stderrs: per_index.iter().map(|p| p.1).collect(),
    }
}

/// An estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueSe {
    pub value: f64,
    pub stderr: f64,
}

impl ValueSe {
    pub fn new(value: f64, stderr: f64) -> Self {
        ValueSe { value, stderr }
    }

    /// Exactly known value.
    pub fn exact(value: f64) -> Self {
        ValueSe { value, stderr: 0.0 }
    }

    /// `sqrt(max(value, 0))` with a first-order error that degrades
    /// gracefully when the value is within one standard error of zero.
    pub fn sqrt(self) -> ValueSe {
        let value = self.value.max(0.0);
        let root = value.sqrt();
        let stderr = if value > self.stderr {
            self.stderr / (2.0 * root)
        } else {
            (value + self.stderr).sqrt() - root
        };
        ValueSe { value: root, stderr }
    }
}

/// Estimated ingredients of the bounds.
#[derive(Debug, Clone, Copy)]
pub struct SteinComponents {
    /// Variance of the functional (empirically centered).
    pub sigma2: ValueSe,
    /// `Var(E[T_m(h) | R])`.
    pub var_t: ValueSe,
    /// `Var(E[T'_m(h) | R])`.
    pub var_tprime: ValueSe,
    /// `sum_i E |D_i h|^3`.
    pub sum_abs3: ValueSe,
    /// `sum_i sqrt(E |D_i h|^6)`.
    pub sum_sqrt6: ValueSe,
}

/// Assembled bound estimates for one functional at one size.
#[derive(Debug, Clone)]
pub struct SteinEstimate {
    pub name: String,
    pub n: usize,
    /// Number of instructions `m = |S|(n-1) + 1`.
    pub instruction_count: usize,
    pub sigma2: ValueSe,
    pub var_t: ValueSe,
    pub var_tprime: ValueSe,
    pub sum_abs3: ValueSe,
    pub sum_sqrt6: ValueSe,
    pub wass_bound: ValueSe,
    pub kol_bound: ValueSe,
}

/// Assemble the Wasserstein and Kolmogorov bound estimates from components.
///
/// Negative variance-term estimates (possible for a difference-of-means
/// estimator whose target is 0) are clamped to 0 before the square root.
pub fn assemble_bounds(
    name: &str,
    n: usize,
    instruction_count: usize,
    c: SteinComponents,
) -> Result<SteinEstimate, PerturbError> {
    if !c.sigma2.value.is_finite() || c.sigma2.value <= 0.0 {
        return Err(PerturbError::ZeroVariance(c.sigma2.value));
    }
    let sigma2 = c.sigma2.value;
    let sigma = sigma2.sqrt();
    let s3 = sigma2 * sigma;

    let root_t = c.var_t.sqrt();
    let root_tp = c.var_tprime.sqrt();
    let sqrt_2pi_over_16 = (2.0 * std::f64::consts::PI).sqrt() / 16.0;

    let wass = root_t.value / sigma2 + c.sum_abs3.value / (2.0 * s3);
    let kol = root_t.value / sigma2
        + root_tp.value / sigma2
        + c.sum_sqrt6.value / (4.0 * s3)
        + sqrt_2pi_over_16 * c.sum_abs3.value / s3;

    // First-order propagation; the sigma2 sensitivity covers both the s^-2
    // and s^-3 factors.
    let dwass_dsigma2 =
        root_t.value / (sigma2 * sigma2) + 1.5 * c.sum_abs3.value / (2.0 * s3 * sigma2);
    let wass_se = ((root_t.stderr / sigma2).powi(2)
        + (c.sum_abs3.stderr / (2.0 * s3)).powi(2)
        + (dwass_dsigma2 * c.sigma2.stderr).powi(2))
    .sqrt();

    let dkol_dsigma2 = (root_t.value + root_tp.value) / (sigma2 * sigma2)
        + 1.5 * (c.sum_sqrt6.value / 4.0 + sqrt_2pi_over_16 * c.sum_abs3.value) / (s3 * sigma2);
    let kol_se = ((root_t.stderr / sigma2).powi(2)
        + (root_tp.stderr / sigma2).powi(2)
        + (c.sum_sqrt6.stderr / (4.0 * s3)).powi(2)
        + (sqrt_2pi_over_16 * c.sum_abs3.stderr / s3).powi(2)
        + (dkol_dsigma2 * c.sigma2.stderr).powi(2))
    .sqrt();

    Ok(SteinEstimate {
        name: name.to_string(),
        n,
        instruction_count,
        sigma2: c.sigma2,
        var_t: ValueSe::new(c.var_t.value.max(0.0), c.var_t.stderr),
        var_tprime: ValueSe::new(c.var_tprime.value.max(0.0), c.var_tprime.stderr),
        sum_abs3: c.sum_abs3,
        sum_sqrt6: c.sum_sqrt6,
        wass_bound: ValueSe::new(wass, wass_se),
        kol_bound: ValueSe::new(kol, kol_se),
    })
}

/// A sampling model with per-coordinate conditional resampling, the input to
/// [`variance_lower_bound_model`]. Observations carry whatever hidden state
/// the resampling steps need.
pub trait CoordinateModel: Sync {
    type Obs: Clone + Send;
    fn sample(&self, rng: &mut Stream) -> Self::Obs;
    fn num_coordinates(&self, obs: &Self::Obs) -> usize;
    /// A copy of `obs` with every coordinate redrawn conditionally on the
    /// same hidden state.
    fn resample_all(&self, obs: &Self::Obs, rng: &mut Stream) -> Self::Obs;
    /// A copy of `target` with coordinate `i` taken from `donor`.
    fn transplant(&self, target: &Self::Obs, i: usize, donor: &Self::Obs) -> Self::Obs;
    /// Evaluate the functional; `rng` feeds functionals that are themselves
    /// Monte Carlo estimates, and every call must use independent noise.
    fn evaluate(&self, obs: &Self::Obs, rng: &mut Stream) -> f64;
}

/// Nested Monte Carlo estimate of the single-coordinate variance lower bound.
///
/// The estimand is `sum_i E[(E[f(X^{i<-x}) - f(X) | x, H])^2]` with `H` the
/// hidden chain and `x` a fresh coordinate value drawn given `H`: the inner
/// expectation fixes only the replaced coordinate and integrates out the
/// rest, making each term the variance of the projection of `f` onto the
/// `i`-th coordinate given `H`. Summed, that is at most `Var(f(X) | H)` on
/// average and hence at most `Var(f(X))`.
///
/// Per outer draw (one hidden chain, one donor coordinate vector), each
/// coordinate contributes the product of two independent inner averages of
/// `f(patched) - f(fresh)`, which removes the inner-loop variance bias
/// exactly as in [`estimate_var_conditional`].
pub fn variance_lower_bound_model<M: CoordinateModel>(
    model: &M,
    outer: usize,
    inner: usize,
    rng: &mut Stream,
) -> Result<(f64, f64), PerturbError> {
    if outer < 2 || inner < 2 {
        return Err(PerturbError::InsufficientSamples { outer, inner });
    }
    let streams = rng::substreams(rng, outer);
    let totals: Vec<f64> = exec::run_replicates(outer, |o| {
        let mut rng_o = streams[o].clone();
        let base = model.sample(&mut rng_o);
        let n = model.num_coordinates(&base);
        // Held-out replacement values, one per coordinate, drawn once.
        let donor = model.resample_all(&base, &mut rng_o);
        let mut sums = vec![[0.0f64; 2]; n];
        for b in 0..2 {
            for _ in 0..inner {
                let fresh = model.resample_all(&base, &mut rng_o);
                let f_fresh = model.evaluate(&fresh, &mut rng_o);
                for (i, slot) in sums.iter_mut().enumerate() {
                    let patched = model.transplant(&fresh, i, &donor);
                    slot[b] += model.evaluate(&patched, &mut rng_o) - f_fresh;
                }
            }
        }
        let scale = 1.0 / inner as f64;
        sums.iter().map(|s| s[0] * scale * (s[1] * scale)).sum()
    });
    let estimate = stats::mean(&totals);
    let stderr =
        (stats::unbiased_variance(&totals, estimate) / outer as f64).sqrt();
    Ok((estimate, stderr))
}

/// Symbol-sequence coordinate model: coordinates are the observed symbols,
/// resampled from the emission row of their hidden state.
pub struct SymbolModel<'a> {
    sampler: StackSampler,
    functional: &'a dyn Functional,
    n: usize,
}

impl<'a> SymbolModel<'a> {
    pub fn new(spec: &HmmSpec, functional: &'a dyn Functional, n: usize) -> Self {
        SymbolModel { sampler: StackSampler::new(spec), functional, n }
    }
}

impl CoordinateModel for SymbolModel<'_> {
    type Obs = crate::hmm::Trajectory;

    fn sample(&self, rng: &mut Stream) -> Self::Obs {
        reconstruct(&self.sampler.sample_stack(self.n, rng))
    }

    fn num_coordinates(&self, obs: &Self::Obs) -> usize {
        obs.len()
    }

    fn resample_all(&self, obs: &Self::Obs, rng: &mut Stream) -> Self::Obs {
        let mut out = obs.clone();
        for (x, &state) in out.observed.iter_mut().zip(&obs.hidden) {
            *x = self.sampler.sample_emission(state, rng);
        }
        out
    }

    fn transplant(&self, target: &Self::Obs, i: usize, donor: &Self::Obs) -> Self::Obs {
        let mut out = target.clone();
        out.observed[i] = donor.observed[i];
        out
    }

    fn evaluate(&self, obs: &Self::Obs, _rng: &mut Stream) -> f64 {
        self.functional.evaluate(&obs.observed)
    }
}

/// Variance lower bound for a symbol-sequence functional.
pub fn variance_lower_bound(
    spec: &HmmSpec,
    f: &dyn Functional,
    n: usize,
    outer: usize,
    inner: usize,
    rng: &mut Stream,
) -> Result<(f64, f64), PerturbError> {
    variance_lower_bound_model(&SymbolModel::new(spec, f, n), outer, inner, rng)
}
