//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Criteria are property- and oracle-based with pinned tolerances; run with
//! `cargo test -p stein-hmm-cli --test acceptance -- --nocapture` to see the
//! per-criterion lines.

use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;

use stein_hmm::germ_grain::{
    covered_volume, isolated_count, sample_germs_with, GermGrainConfig, GermGrainModel,
    GermGrainStatistic, RadiusSpec,
};
use stein_hmm::hmm::{
    coupling_length, mixing_constants, reconstruct, HmmSpec, Instruction, InstructionStack,
    PerturbationSet, StackSampler,
};
use stein_hmm::occupancy::{
    occupancy_count, EmissionFamily, OccupancyConfig, OccupancyModel,
};
use stein_hmm::perturb::{
    assemble_bounds, estimate_delta_moments, estimate_var_conditional, eval_h, t_term_value,
    variance_lower_bound, variance_lower_bound_model, AdditiveFunctional, CoordinateModel,
    Functional, SteinComponents, ValueSe,
};
use stein_hmm::spatial::{dist2, unit_ball_volume, PointSet};
use stein_hmm::stats::{self, CltPoint};
use stein_hmm::voronoi::{
    run_voronoi_clt, voronoi_volume_estimate, voronoi_volume_exact_1d,
    RegionPredicate, VoronoiConfig, VoronoiModel,
};
use stein_hmm::{exec, rng};

const MASTER_SEED: u64 = 20_260_810;
const CLT_GRID: [usize; 5] = [128, 256, 512, 1024, 2048];
const CLT_REPLICATES: usize = 4000;

/// Two-sided 95% Dvoretzky-Kiefer-Wolfowitz half-width at sample size `n`.
fn dkw_width(n: usize) -> f64 {
    ((2.0f64 / 0.05).ln() / (2.0 * n as f64)).sqrt()
}

fn report(criterion: &str, pass: bool, details: &str) {
    println!("{} criterion {criterion}: {details}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {details}");
}

/// The 2-state chain used across criteria, started at its stationary law.
fn two_state_spec() -> HmmSpec {
    HmmSpec::new_stationary(2, 2, vec![0.8, 0.2, 0.3, 0.7], vec![0.7, 0.3, 0.25, 0.75])
        .unwrap()
}

fn single_state_pm_one() -> HmmSpec {
    HmmSpec::new(1, 2, vec![1.0], vec![1.0], vec![0.5, 0.5]).unwrap()
}

// ---------------------------------------------------------------------------
// 1. Instruction-stack law
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_instruction_stack_law() {
    let started = Instant::now();
    let spec = two_state_spec();
    let sampler = StackSampler::new(&spec);
    let n = 3;
    let replicates = 1_000_000usize;
    let block = 10_000;
    let counts: Vec<[u64; 64]> = exec::run_replicates(replicates / block, |b| {
        let mut stream = rng::stream(MASTER_SEED, "acc1", b as u64);
        let mut local = [0u64; 64];
        for _ in 0..block {
            let t = reconstruct(&sampler.sample_stack(n, &mut stream));
            let mut key = 0usize;
            for i in 0..n {
                key = key * 4 + (t.hidden[i] as usize) * 2 + t.observed[i] as usize;
            }
            local[key] += 1;
        }
        local
    });
    let mut totals = [0u64; 64];
    for local in counts {
        for (t, l) in totals.iter_mut().zip(local) {
            *t += l;
        }
    }

    let mut worst = 0.0f64;
    for key in 0..64usize {
        let hidden: Vec<usize> = (0..n).map(|i| key >> (2 * (n - 1 - i) + 1) & 1).collect();
        let observed: Vec<usize> = (0..n).map(|i| key >> (2 * (n - 1 - i)) & 1).collect();
        let mut p = spec.initial()[hidden[0]] * spec.emission_row(hidden[0])[observed[0]];
        for i in 1..n {
            p *= spec.transition_row(hidden[i - 1])[hidden[i]]
                * spec.emission_row(hidden[i])[observed[i]];
        }
        let se = (p * (1.0 - p) / replicates as f64).sqrt();
        let observed_p = totals[key] as f64 / replicates as f64;
        worst = worst.max((observed_p - p).abs() / se);
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "1 (instruction-stack law)",
        worst <= 4.0 && elapsed < 60.0,
        &format!("max |observed - product| = {worst:.2} binomial SE over 64 paths, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------------------
// 2. Coupling tail
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_coupling_tail() {
    let spec = two_state_spec();
    let mc = mixing_constants(&spec, 50).unwrap();
    let sampler = StackSampler::new(&spec);
    let n = 100;
    let replicates = 100_000usize;
    let lengths = exec::run_replicates(replicates, |rep| {
        let mut stream = rng::stream(MASTER_SEED, "acc2", rep as u64);
        let stack = sampler.sample_stack(n, &mut stream);
        let fresh = sampler.sample_stack(n, &mut stream);
        coupling_length(&stack, 0, &fresh).unwrap()
    });
    let mut pass = true;
    let mut details = format!("K={}, eps={:.3};", mc.k, mc.epsilon);
    for t in 1..=8usize {
        let hits = lengths.iter().filter(|s| s.at_least(t * mc.k)).count() as f64;
        let p = hits / replicates as f64;
        let se = (p * (1.0 - p) / replicates as f64).sqrt();
        let envelope = (1.0 - mc.epsilon).powi(t as i32);
        if p > envelope + 3.0 * se {
            pass = false;
        }
        details.push_str(&format!(" t{t}: {p:.4}<={envelope:.4}"));
    }
    report("2 (coupling tail)", pass, &details);
}

// ---------------------------------------------------------------------------
// 3. T-estimator exactness
// ---------------------------------------------------------------------------

struct Poly;

impl Functional for Poly {
    fn name(&self) -> &str {
        "poly"
    }

    fn evaluate(&self, observed: &[u32]) -> f64 {
        let mut acc = 0.4f64;
        for (i, &x) in observed.iter().enumerate() {
            let v = x as f64 + 0.7;
            acc += v * v * (1.3 + i as f64) + (acc).cos() * v;
        }
        acc
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64)
}

/// Raw evaluation of `h` with subset `mask` spliced from `fresh`; built from
/// scratch so the oracle shares nothing with the estimator kernel.
fn raw_h(f: &dyn Functional, stack: &InstructionStack, fresh: &InstructionStack, mask: usize) -> f64 {
    let entries: Vec<Instruction> = stack
        .entries()
        .iter()
        .zip(fresh.entries())
        .enumerate()
        .map(|(i, (a, b))| if mask >> i & 1 == 1 { *b } else { *a })
        .collect();
    let spliced = InstructionStack::from_entries(stack.num_states(), stack.n(), entries);
    f.evaluate(&reconstruct(&spliced).observed)
}

#[test]
fn criterion_03_t_estimator_exactness() {
    let f = Poly;
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    let mut stream = rng::stream(MASTER_SEED, "acc3", 0);

    let check_pair = |stack: &InstructionStack, fresh: &InstructionStack, worst: &mut f64| {
        let m = stack.len();
        for absolute in [false, true] {
            // Oracle: the double sum over proper subsets.
            let h0 = raw_h(&f, stack, fresh, 0);
            let mut exact = 0.0;
            // Estimator: every (|A|, A, j) atom weighted by its probability.
            let mut atoms = 0.0;
            for mask in 0..(1usize << m) - 1 {
                let a = mask.count_ones() as usize;
                let k_weight = 1.0 / (binomial(m, a) * (m - a) as f64);
                let p_subset = 1.0 / (m as f64 * binomial(m, a));
                let h_mask = raw_h(&f, stack, fresh, mask);
                let set = PerturbationSet::from_unsorted(
                    (0..m).filter(|j| mask >> j & 1 == 1).collect(),
                );
                for j in 0..m {
                    if mask >> j & 1 == 1 {
                        continue;
                    }
                    let d_plain = h0 - raw_h(&f, stack, fresh, 1 << j);
                    let d_mask = h_mask - raw_h(&f, stack, fresh, mask | 1 << j);
                    exact += k_weight * d_plain * if absolute { d_mask.abs() } else { d_mask };
                    atoms += p_subset / (m - a) as f64
                        * t_term_value(&f, stack, fresh, &set, j, absolute).unwrap();
                }
            }
            *worst = worst.max((exact - atoms).abs() / exact.abs().max(1.0));
        }
    };

    let single = single_state_pm_one();
    let sampler = StackSampler::new(&single);
    for n in 1..=3usize {
        for _ in 0..6 {
            let stack = sampler.sample_stack(n, &mut stream);
            let fresh = sampler.sample_stack(n, &mut stream);
            check_pair(&stack, &fresh, &mut worst);
            cases += 2;
        }
    }
    let two = two_state_spec();
    let sampler = StackSampler::new(&two);
    for _ in 0..6 {
        let stack = sampler.sample_stack(2, &mut stream);
        let fresh = sampler.sample_stack(2, &mut stream);
        check_pair(&stack, &fresh, &mut worst);
        cases += 2;
    }
    report(
        "3 (T-estimator exactness)",
        worst <= 1e-12,
        &format!("max relative atom-vs-sum gap {worst:.2e} over {cases} cases, m <= 3"),
    );
}

// ---------------------------------------------------------------------------
// 4. Closed-form bound for the additive functional
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_closed_form_stein_bound() {
    let started = Instant::now();
    let n = 100usize;
    let spec = single_state_pm_one();
    let f = AdditiveFunctional::plus_minus_one();

    let sampler = StackSampler::new(&spec);
    let values = exec::run_replicates(4000, |rep| {
        let mut stream = rng::stream(MASTER_SEED, "acc4-sigma", rep as u64);
        eval_h(&f, &sampler.sample_stack(n, &mut stream))
    });
    let sigma2 = ValueSe::new(
        stats::unbiased_variance(&values, stats::mean(&values)),
        stats::variance_stderr(&values),
    );

    let mut stream = rng::stream(MASTER_SEED, "acc4-vart", 0);
    let (var_t, var_t_se) =
        estimate_var_conditional(&spec, &f, n, 256, 1024, &mut stream, false).unwrap();

    let mut stream = rng::stream(MASTER_SEED, "acc4-abs3", 0);
    let m3 = estimate_delta_moments(&spec, &f, n, 3.0, 800, &mut stream);

    let estimate = assemble_bounds(
        "additive",
        n,
        n,
        SteinComponents {
            sigma2,
            var_t: ValueSe::new(var_t, var_t_se),
            var_tprime: ValueSe::exact(0.0),
            sum_abs3: ValueSe::new(m3.sum(), m3.sum_stderr()),
            sum_sqrt6: ValueSe::exact(0.0),
        },
    )
    .unwrap();

    let var_t_ok = var_t.abs() <= 3.0 * var_t_se;
    let wass = estimate.wass_bound;
    let wass_ok = (wass.value - 0.2).abs() <= 3.0 * wass.stderr;
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "4 (closed-form bound)",
        var_t_ok && wass_ok && elapsed < 60.0,
        &format!(
            "var_T = {var_t:.3} +- {var_t_se:.3}, wass = {:.4} +- {:.4} vs 0.200, {elapsed:.1}s",
            wass.value, wass.stderr
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. Efron-Stein equality case
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_efron_stein_equality() {
    // f = sum X_i over {0,1} uniform symbols: Var f = n/4 and
    // (1/2) sum_i E[(D_i h)^2] = n/4.
    let n = 256usize;
    let spec = single_state_pm_one();
    let f = AdditiveFunctional::new(vec![0.0, 1.0]);

    let sampler = StackSampler::new(&spec);
    let values = exec::run_replicates(4000, |rep| {
        let mut stream = rng::stream(MASTER_SEED, "acc5-var", rep as u64);
        eval_h(&f, &sampler.sample_stack(n, &mut stream))
    });
    let variance = stats::unbiased_variance(&values, stats::mean(&values));
    let var_se = stats::variance_stderr(&values);

    let mut stream = rng::stream(MASTER_SEED, "acc5-delta", 0);
    let m2 = estimate_delta_moments(&spec, &f, n, 2.0, 2000, &mut stream);
    let half_sum = 0.5 * m2.sum();
    let half_sum_se = 0.5 * m2.sum_stderr();

    let target = n as f64 / 4.0;
    let var_ok = (variance - target).abs() <= 3.0 * var_se;
    let sum_ok = (half_sum - target).abs() <= 3.0 * half_sum_se;
    report(
        "5 (Efron-Stein equality)",
        var_ok && sum_ok,
        &format!(
            "Var = {variance:.2} +- {var_se:.2}, half-sum = {half_sum:.2} +- {half_sum_se:.2}, target {target}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. Occupancy variance constant
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_occupancy_variance_constant() {
    let started = Instant::now();
    let n = 100_000usize;
    let replicates = 40_000usize;
    let base = HmmSpec::new(1, 2, vec![1.0], vec![1.0], vec![0.5, 0.5]).unwrap();
    let config = OccupancyConfig::new(1.0, n, EmissionFamily::Uniform).unwrap();
    let spec = config.build_spec(&base).unwrap();
    let letters = config.letter_count();
    let sampler = StackSampler::new(&spec);
    let values = exec::run_replicates(replicates, |rep| {
        let mut stream = rng::stream(MASTER_SEED, "acc6", rep as u64);
        let t = reconstruct(&sampler.sample_stack(n, &mut stream));
        occupancy_count(&t.observed, letters).unwrap() as f64
    });
    let variance = stats::unbiased_variance(&values, stats::mean(&values));
    let ratio = variance / n as f64;
    let target = (-1.0f64).exp() - 2.0 * (-2.0f64).exp();
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "6 (occupancy variance constant)",
        (ratio - target).abs() <= 0.05 * target,
        &format!("Var(W)/n = {ratio:.5} vs e^-1 - 2e^-2 = {target:.5} (5% band), {elapsed:.0}s"),
    );
}

// ---------------------------------------------------------------------------
// 7. Voronoi d = 1 oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_voronoi_1d_oracle() {
    let region = RegionPredicate::interval(0.15, 0.55);
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut stream = rng::stream(MASTER_SEED, "acc7", seed);
        let n = 1 + (seed as usize * 7) % 80;
        let xs: Vec<f64> = (0..n).map(|_| stream.random::<f64>()).collect();
        let exact = voronoi_volume_exact_1d(&xs, &region).unwrap();
        let nuclei = PointSet::from_coords(1, xs);
        let (estimate, se) =
            voronoi_volume_estimate(&nuclei, &region, 20_000, &mut stream).unwrap();
        let gap = (estimate - exact).abs();
        worst = worst.max(if se > 0.0 { gap / se } else { gap / 1e-12 });
    }
    report(
        "7 (Voronoi 1d oracle)",
        worst <= 3.0,
        &format!("max |MC - exact| = {worst:.2} binomial SE over 100 seeded configurations"),
    );
}

// ---------------------------------------------------------------------------
// 8. Germ-grain oracles
// ---------------------------------------------------------------------------

/// Sampled-lens oracle: grain k is non-isolated iff some candidate lens
/// (pairwise ball intersection) contains a sampled point inside the window.
fn lens_oracle_isolated(sample: &stein_hmm::germ_grain::GermGrainSample, rng: &mut rng::Stream) -> Vec<bool> {
    let n = sample.germs.len();
    let mut isolated = vec![true; n];
    for k in 0..n {
        for j in 0..n {
            if j == k {
                continue;
            }
            let pk = sample.germs.point(k);
            let pj = sample.germs.point(j);
            let (rk, rj) = (sample.radii[k], sample.radii[j]);
            let sum = rk + rj;
            if dist2(pk, pj) > sum * sum {
                continue; // balls disjoint, no lens to test
            }
            // Rejection-sample up to 1000 lens points from the bounding box
            // of the intersection and check window membership.
            let dim = sample.dimension;
            let lo: Vec<f64> =
                (0..dim).map(|d| (pk[d] - rk).max(pj[d] - rj)).collect();
            let hi: Vec<f64> =
                (0..dim).map(|d| (pk[d] + rk).min(pj[d] + rj)).collect();
            let mut found_in_window = false;
            let mut accepted = 0usize;
            let mut point = vec![0.0; dim];
            for _ in 0..300_000 {
                for d in 0..dim {
                    point[d] = lo[d] + rng.random::<f64>() * (hi[d] - lo[d]);
                }
                if dist2(&point, pk) <= rk * rk && dist2(&point, pj) <= rj * rj {
                    accepted += 1;
                    if point.iter().all(|&x| (0.0..=sample.side).contains(&x)) {
                        found_in_window = true;
                        break;
                    }
                    if accepted >= 1000 {
                        break;
                    }
                }
            }
            if found_in_window {
                isolated[k] = false;
                break;
            }
        }
    }
    isolated
}

#[test]
fn criterion_08_germ_grain_oracles() {
    // Isolation via pairwise distances vs the sampled-lens oracle.
    let spec = two_state_spec();
    let sampler = StackSampler::new(&spec);
    let config = GermGrainConfig {
        dimension: 2,
        n: 40,
        state_weights: vec![1.2, 0.8],
        density_bounds: (0.8, 1.2),
        grain_volume_range: (0.4, 0.6),
        radii: RadiusSpec::MidpointVolume,
    };
    let mut disagreements = 0usize;
    for seed in 0..100u64 {
        let mut stream = rng::stream(MASTER_SEED, "acc8-lens", seed);
        let sample = sample_germs_with(&config, &sampler, 2, &mut stream).unwrap();
        let fast = isolated_count(&sample);
        let oracle = lens_oracle_isolated(&sample, &mut stream);
        let oracle_count = oracle.iter().filter(|&&b| b).count();
        if fast != oracle_count {
            disagreements += 1;
        }
    }

    // Single ball fully inside the window: f_V estimates its exact volume.
    let mut germs = PointSet::with_capacity(2, 1);
    germs.push(&[0.5, 0.5]);
    let single = stein_hmm::germ_grain::GermGrainSample {
        dimension: 2,
        side: 1.0,
        germs,
        radii: vec![0.25],
        hidden: vec![0],
    };
    let mut stream = rng::stream(MASTER_SEED, "acc8-ball", 0);
    let (estimate, se) = covered_volume(&single, 200_000, &mut stream);
    let exact = unit_ball_volume(2) * 0.25f64.powi(2);
    let ball_ok = (estimate - exact).abs() <= 3.0 * se;

    report(
        "8 (germ-grain oracles)",
        disagreements == 0 && ball_ok,
        &format!(
            "lens oracle agreed on 100/100 seeds ({disagreements} disagreements); \
             single-ball f_V = {estimate:.4} vs {exact:.4} +- {:.4}",
            3.0 * se
        ),
    );
}

// ---------------------------------------------------------------------------
// 9 & 10. CLT trend and occupancy variance growth
// ---------------------------------------------------------------------------

fn clt_check(name: &str, points: &[CltPoint]) -> (bool, String) {
    let width = dkw_width(CLT_REPLICATES);
    let dks: Vec<f64> = points
        .iter()
        .map(|p| p.summary.as_ref().expect("non-degenerate functional").d_kolmogorov)
        .collect();
    let mut pass = true;
    for pair in dks.windows(2) {
        if pair[1] > pair[0] + 2.0 * width {
            pass = false;
        }
    }
    let last = *dks.last().unwrap();
    if last >= 0.05 {
        pass = false;
    }
    let line = format!(
        "{name}: d_K = [{}] (allowance {:.3}, final < 0.05)",
        dks.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>().join(", "),
        2.0 * width
    );
    (pass, line)
}

fn occupancy_clt_points() -> &'static Vec<CltPoint> {
    static POINTS: OnceLock<Vec<CltPoint>> = OnceLock::new();
    POINTS.get_or_init(|| {
        let base = two_state_spec();
        stein_hmm::occupancy::run_occupancy_clt(
            1.0,
            EmissionFamily::Blocks { fraction: 0.75 },
            &base,
            &CLT_GRID,
            CLT_REPLICATES,
            rng::derive_master(MASTER_SEED, "acc9-occupancy"),
        )
        .unwrap()
        .into_iter()
        .map(|(_, p)| p)
        .collect()
    })
}

fn germ_clt_points() -> &'static (Vec<CltPoint>, Vec<CltPoint>) {
    static POINTS: OnceLock<(Vec<CltPoint>, Vec<CltPoint>)> = OnceLock::new();
    POINTS.get_or_init(|| {
        let spec = two_state_spec();
        let sampler = StackSampler::new(&spec);
        let master = rng::derive_master(MASTER_SEED, "acc9-germ");
        let mut fv_points = Vec::new();
        let mut fi_points = Vec::new();
        for &n in &CLT_GRID {
            let config = GermGrainConfig {
                dimension: 2,
                n,
                state_weights: vec![1.3, 0.7],
                density_bounds: (0.7, 1.3),
                grain_volume_range: (0.4, 0.6),
                radii: RadiusSpec::MidpointVolume,
            };
            let label = format!("n={n}");
            let pairs = exec::run_replicates(CLT_REPLICATES, |rep| {
                let mut stream = rng::stream(master, &label, rep as u64);
                let sample =
                    sample_germs_with(&config, &sampler, 2, &mut stream).unwrap();
                let fv = covered_volume(&sample, 8 * n, &mut stream).0;
                (fv, isolated_count(&sample) as f64)
            });
            fv_points.push(CltPoint::from_values(n, pairs.iter().map(|p| p.0).collect()));
            fi_points.push(CltPoint::from_values(n, pairs.iter().map(|p| p.1).collect()));
        }
        (fv_points, fi_points)
    })
}

fn voronoi_clt_points() -> &'static Vec<CltPoint> {
    static POINTS: OnceLock<Vec<CltPoint>> = OnceLock::new();
    POINTS.get_or_init(|| {
        let spec = two_state_spec();
        let region = RegionPredicate::ball(2, vec![0.5, 0.5], 0.25);
        run_voronoi_clt(
            |n| VoronoiConfig {
                dimension: 2,
                n,
                point_budget: 4096,
                state_weights: vec![1.3, 0.7],
                density_bounds: (0.7, 1.3),
            },
            &spec,
            &region,
            &CLT_GRID,
            CLT_REPLICATES,
            rng::derive_master(MASTER_SEED, "acc9-voronoi"),
        )
        .unwrap()
    })
}

#[test]
fn criterion_09_clt_trend_all_applications() {
    let started = Instant::now();
    let (fv, fi) = germ_clt_points();
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, points) in [
        ("f_V", fv),
        ("f_I", fi),
        ("phi", voronoi_clt_points()),
        ("W", occupancy_clt_points()),
    ] {
        let (ok, line) = clt_check(name, points);
        pass &= ok;
        lines.push(line);
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "9 (CLT trend)",
        pass,
        &format!("{} ({elapsed:.0}s)", lines.join("; ")),
    );
}

#[test]
fn criterion_10_occupancy_variance_growth() {
    let points = occupancy_clt_points();
    let fit_points: Vec<(f64, f64)> =
        points.iter().map(|p| (p.n as f64, p.variance())).collect();
    let fit = stats::fit_log_slope(&fit_points).unwrap();
    report(
        "10 (moment growth)",
        fit.slope <= 1.2,
        &format!("log Var(W) vs log n slope = {:.3} (<= 1.2)", fit.slope),
    );
}

// ---------------------------------------------------------------------------
// 11. Variance lower bound dominance for every shipped functional
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_variance_lower_bound_dominance() {
    let n = 48usize;
    let spec = two_state_spec();
    let outer = 48;
    let inner = 6;
    let replicates = 1500;
    let mut pass = true;
    let mut lines = Vec::new();

    let mut check = |name: &str, lower: f64, lower_se: f64, values: &[f64]| {
        let variance = stats::unbiased_variance(values, stats::mean(values));
        let var_se = stats::variance_stderr(values);
        let combined = (lower_se * lower_se + var_se * var_se).sqrt();
        let ok = lower <= variance + 3.0 * combined;
        lines.push(format!("{name}: {lower:.3} <= {variance:.3} + {:.3}", 3.0 * combined));
        ok
    };

    // additive over the 2-state chain's own alphabet
    {
        let f = AdditiveFunctional::plus_minus_one();
        let mut stream = rng::stream(MASTER_SEED, "acc11-additive", 0);
        let (lower, se) = variance_lower_bound(&spec, &f, n, outer, inner, &mut stream).unwrap();
        let sampler = StackSampler::new(&spec);
        let values = exec::run_replicates(replicates, |rep| {
            let mut stream = rng::stream(MASTER_SEED, "acc11-additive-var", rep as u64);
            eval_h(&f, &sampler.sample_stack(n, &mut stream))
        });
        pass &= check("additive", lower, se, &values);
    }

    // occupancy.W
    {
        let config =
            OccupancyConfig::new(1.0, n, EmissionFamily::Blocks { fraction: 0.75 }).unwrap();
        let model = OccupancyModel::new(&config, &spec).unwrap();
        let mut stream = rng::stream(MASTER_SEED, "acc11-occ", 0);
        let (lower, se) =
            variance_lower_bound_model(&model, outer, inner, &mut stream).unwrap();
        let values = model_values(&model, replicates, "acc11-occ-var");
        pass &= check("occupancy.W", lower, se, &values);
    }

    // germ_grain.f_V and f_I
    let germ_config = GermGrainConfig {
        dimension: 2,
        n,
        state_weights: vec![1.2, 0.8],
        density_bounds: (0.8, 1.2),
        grain_volume_range: (0.4, 0.6),
        radii: RadiusSpec::MidpointVolume,
    };
    {
        let model = GermGrainModel::new(
            germ_config.clone(),
            &spec,
            GermGrainStatistic::CoveredVolume { points: 8 * n },
        )
        .unwrap();
        let mut stream = rng::stream(MASTER_SEED, "acc11-fv", 0);
        let (lower, se) =
            variance_lower_bound_model(&model, outer, inner, &mut stream).unwrap();
        let values = model_values(&model, replicates, "acc11-fv-var");
        pass &= check("germ_grain.f_V", lower, se, &values);
    }
    {
        let model =
            GermGrainModel::new(germ_config, &spec, GermGrainStatistic::IsolatedCount).unwrap();
        let mut stream = rng::stream(MASTER_SEED, "acc11-fi", 0);
        let (lower, se) =
            variance_lower_bound_model(&model, outer, inner, &mut stream).unwrap();
        let values = model_values(&model, replicates, "acc11-fi-var");
        pass &= check("germ_grain.f_I", lower, se, &values);
    }

    // voronoi.phi
    {
        let config = VoronoiConfig {
            dimension: 2,
            n,
            point_budget: 1024,
            state_weights: vec![1.2, 0.8],
            density_bounds: (0.8, 1.2),
        };
        let region = RegionPredicate::ball(2, vec![0.5, 0.5], 0.25);
        let model = VoronoiModel::new(config, &spec, region).unwrap();
        let mut stream = rng::stream(MASTER_SEED, "acc11-phi", 0);
        let (lower, se) =
            variance_lower_bound_model(&model, outer, inner, &mut stream).unwrap();
        let values = model_values(&model, replicates, "acc11-phi-var");
        pass &= check("voronoi.phi", lower, se, &values);
    }

    report("11 (variance lower bound dominance)", pass, &lines.join("; "));
}

fn model_values<M: CoordinateModel>(model: &M, replicates: usize, label: &str) -> Vec<f64> {
    exec::run_replicates(replicates, |rep| {
        let mut stream = rng::stream(MASTER_SEED, label, rep as u64);
        let obs = model.sample(&mut stream);
        model.evaluate(&obs, &mut stream)
    })
}

// ---------------------------------------------------------------------------
// 12. Byte-identical reproducibility through the CLI
// ---------------------------------------------------------------------------

#[test]
fn criterion_12_reproducibility() {
    use std::fs;
    use std::process::Command;

    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("two_state.json"),
        r#"{"states":2,"symbols":2,"mu":[0.6,0.4],"P":[0.8,0.2,0.3,0.7],"Q":[0.7,0.3,0.25,0.75]}"#,
    )
    .unwrap();
    let config = dir.path().join("germ.json");
    fs::write(
        &config,
        r#"{
            "experiment": "clt",
            "id": "acc12",
            "spec": "two_state.json",
            "functional": "germ_grain.f_V",
            "grid": [32, 64],
            "replicates": 64,
            "seed": 12,
            "output": "out/germ"
        }"#,
    )
    .unwrap();

    let run = || {
        let out = Command::new(env!("CARGO_BIN_EXE_stein-hmm"))
            .arg("run")
            .arg(&config)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (
            fs::read(dir.path().join("out/germ.csv")).unwrap(),
            fs::read(dir.path().join("out/germ.samples.csv")).unwrap(),
        )
    };
    let first = run();
    let second = run();
    report(
        "12 (reproducibility)",
        first == second,
        "two concurrent-replicate CLI runs produced byte-identical CSV outputs",
    );
}
