//! Germ-grain coverage in a cube of volume `n`.
//!
//! `n` germs are placed in `E_n = [0, n^(1/d)]^d`, germ `i` drawn from the
//! two-cell measure of its hidden state. Grains are balls, so pairwise
//! intersection tests and single-ball volumes are exact. Two statistics:
//! the covered volume `f_V` (Monte Carlo point sampling with binomial error)
//! and the number of isolated grains `f_I` (exact).
//!
//! Grains are not clipped to the window for the isolation test: two germs
//! both lie in the convex window, so overlapping balls always overlap inside
//! it (the overlap contains a neighborhood of a point on the center segment),
//! and the clip never changes the answer. Point sampling for `f_V` is
//! naturally restricted to the window.

use rand::Rng;
use thiserror::Error;

use crate::hmm::{reconstruct, HmmSpec, StackSampler};
use crate::measure::{MeasureError, TwoCellMeasures};
use crate::perturb::CoordinateModel;
use crate::rng::Stream;
use crate::spatial::{dist2, unit_ball_volume, GridIndex, PointSet};

#[derive(Debug, Error, PartialEq)]
pub enum GermGrainError {
    #[error("model has {spec_states} states but config has {config_states} state measures")]
    StateMismatch { spec_states: usize, config_states: usize },
    #[error("grain volume {volume} outside ({low}, {high})")]
    GrainVolumeOutOfRange { volume: f64, low: f64, high: f64 },
    #[error("radius list has {got} entries, expected {expected}")]
    BadRadiusCount { got: usize, expected: usize },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// How per-germ ball radii are chosen within the volume range.
#[derive(Debug, Clone, PartialEq)]
pub enum RadiusSpec {
    /// All grains share the radius of the midpoint volume `(V1 + V2) / 2`.
    MidpointVolume,
    /// Explicit per-germ radii.
    PerGerm(Vec<f64>),
}

/// Parameters of the covering process.
#[derive(Debug, Clone)]
pub struct GermGrainConfig {
    pub dimension: usize,
    /// Germ count; the window `E_n` has volume `n`.
    pub n: usize,
    /// Per-state low-cell weights of the sampling measures.
    pub state_weights: Vec<f64>,
    /// Density sandwich `(c_m, c_M)` relative to uniform.
    pub density_bounds: (f64, f64),
    /// Open grain-volume range `(V1, V2)`.
    pub grain_volume_range: (f64, f64),
    pub radii: RadiusSpec,
}

impl GermGrainConfig {
    /// Side length of the window: `n^(1/d)`.
    pub fn side(&self) -> f64 {
        (self.n as f64).powf(1.0 / self.dimension as f64)
    }

    /// Radius whose ball volume is the midpoint of the volume range.
    pub fn midpoint_radius(&self) -> f64 {
        let (v1, v2) = self.grain_volume_range;
        let target = 0.5 * (v1 + v2);
        (target / unit_ball_volume(self.dimension)).powf(1.0 / self.dimension as f64)
    }

    /// Per-state sampling measures on the window.
    pub fn measures(&self) -> Result<TwoCellMeasures, GermGrainError> {
        Ok(TwoCellMeasures::new(
            self.dimension,
            self.side(),
            self.state_weights.clone(),
            self.density_bounds.0,
            self.density_bounds.1,
        )?)
    }

    /// Resolve per-germ radii, checking every grain volume is in range.
    pub fn resolve_radii(&self) -> Result<Vec<f64>, GermGrainError> {
        let kappa = unit_ball_volume(self.dimension);
        let (v1, v2) = self.grain_volume_range;
        let radii = match &self.radii {
            RadiusSpec::MidpointVolume => vec![self.midpoint_radius(); self.n],
            RadiusSpec::PerGerm(r) => {
                if r.len() != self.n {
                    return Err(GermGrainError::BadRadiusCount {
                        got: r.len(),
                        expected: self.n,
                    });
                }
                r.clone()
            }
        };
        for &r in &radii {
            let volume = kappa * r.powi(self.dimension as i32);
            if volume <= v1 || volume >= v2 {
                return Err(GermGrainError::GrainVolumeOutOfRange { volume, low: v1, high: v2 });
            }
        }
        Ok(radii)
    }
}

/// One realization of the covering process.
#[derive(Debug, Clone)]
pub struct GermGrainSample {
    pub dimension: usize,
    pub side: f64,
    pub germs: PointSet,
    pub radii: Vec<f64>,
    pub hidden: Vec<u32>,
}

/// Sample germs from the hidden chain's state measures.
///
/// The hidden chain comes from an instruction stack of `spec`; germ `i` is
/// then drawn from the two-cell measure of state `Z_i`.
pub fn sample_germs(
    config: &GermGrainConfig,
    spec: &HmmSpec,
    rng: &mut Stream,
) -> Result<GermGrainSample, GermGrainError> {
    let sampler = StackSampler::new(spec);
    sample_germs_with(config, &sampler, spec.num_states(), rng)
}

/// As [`sample_germs`], reusing a prepared stack sampler.
pub fn sample_germs_with(
    config: &GermGrainConfig,
    sampler: &StackSampler,
    spec_states: usize,
    rng: &mut Stream,
) -> Result<GermGrainSample, GermGrainError> {
    if spec_states != config.state_weights.len() {
        return Err(GermGrainError::StateMismatch {
            spec_states,
            config_states: config.state_weights.len(),
        });
    }
    let measures = config.measures()?;
    let radii = config.resolve_radii()?;
    let hidden = reconstruct(&sampler.sample_stack(config.n, rng)).hidden;
    let mut germs = PointSet::with_capacity(config.dimension, config.n);
    let mut point = vec![0.0; config.dimension];
    for &state in &hidden {
        measures.sample_into(state, rng, &mut point);
        germs.push(&point);
    }
    Ok(GermGrainSample { dimension: config.dimension, side: config.side(), germs, radii, hidden })
}

fn max_radius(sample: &GermGrainSample) -> f64 {
    sample.radii.iter().cloned().fold(0.0, f64::max)
}

/// Monte Carlo estimate of the covered volume `f_V` with its binomial
/// standard error: `Vol(E_n)` times the covered fraction of `points` uniform
/// draws in the window.
pub fn covered_volume(sample: &GermGrainSample, points: usize, rng: &mut Stream) -> (f64, f64) {
    assert!(points >= 1, "need at least one sample point");
    let grid = GridIndex::build(&sample.germs, sample.side, max_radius(sample).max(1e-9));
    let reach = (max_radius(sample) / grid.cell_size()).ceil() as usize;
    let volume = sample.side.powi(sample.dimension as i32);
    let mut covered = 0usize;
    let mut point = vec![0.0; sample.dimension];
    for _ in 0..points {
        for coord in point.iter_mut() {
            *coord = rng.random::<f64>() * sample.side;
        }
        let mut hit = false;
        grid.for_neighborhood(&point, reach, |idx| {
            if !hit {
                let r = sample.radii[idx as usize];
                if dist2(sample.germs.point(idx as usize), &point) <= r * r {
                    hit = true;
                }
            }
        });
        covered += hit as usize;
    }
    let p = covered as f64 / points as f64;
    (volume * p, volume * (p * (1.0 - p) / points as f64).sqrt())
}

/// Exact count of isolated grains: grain `k` is isolated iff
/// `|C_k - C_j| > r_k + r_j` for every `j != k`.
pub fn isolated_count(sample: &GermGrainSample) -> usize {
    let n = sample.germs.len();
    if n == 0 {
        return 0;
    }
    let r_max = max_radius(sample);
    let grid = GridIndex::build(&sample.germs, sample.side, (2.0 * r_max).max(1e-9));
    let reach = ((2.0 * r_max) / grid.cell_size()).ceil() as usize;
    let mut isolated = 0usize;
    for k in 0..n {
        let pk = sample.germs.point(k);
        let rk = sample.radii[k];
        let mut alone = true;
        grid.for_neighborhood(pk, reach, |j| {
            let j = j as usize;
            if alone && j != k {
                let sum = rk + sample.radii[j];
                if dist2(pk, sample.germs.point(j)) <= sum * sum {
                    alone = false;
                }
            }
        });
        isolated += alone as usize;
    }
    isolated
}

/// Which statistic a coordinate model evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GermGrainStatistic {
    /// Covered volume, Monte Carlo estimated with the given point budget.
    CoveredVolume { points: usize },
    /// Isolated-grain count (exact).
    IsolatedCount,
}

/// Coordinate model over germ positions: coordinate `i` is germ `i`,
/// resampled from the measure of its hidden state.
pub struct GermGrainModel {
    config: GermGrainConfig,
    sampler: StackSampler,
    spec_states: usize,
    measures: TwoCellMeasures,
    pub statistic: GermGrainStatistic,
}

impl GermGrainModel {
    pub fn new(
        config: GermGrainConfig,
        spec: &HmmSpec,
        statistic: GermGrainStatistic,
    ) -> Result<Self, GermGrainError> {
        let measures = config.measures()?;
        Ok(GermGrainModel {
            config,
            sampler: StackSampler::new(spec),
            spec_states: spec.num_states(),
            measures,
            statistic,
        })
    }

    pub fn evaluate_sample(&self, sample: &GermGrainSample, rng: &mut Stream) -> f64 {
        match self.statistic {
            GermGrainStatistic::CoveredVolume { points } => covered_volume(sample, points, rng).0,
            GermGrainStatistic::IsolatedCount => isolated_count(sample) as f64,
        }
    }
}

impl CoordinateModel for GermGrainModel {
    type Obs = GermGrainSample;

    fn sample(&self, rng: &mut Stream) -> Self::Obs {
        sample_germs_with(&self.config, &self.sampler, self.spec_states, rng)
            .expect("validated config")
    }

    fn num_coordinates(&self, obs: &Self::Obs) -> usize {
        obs.germs.len()
    }

    fn resample_all(&self, obs: &Self::Obs, rng: &mut Stream) -> Self::Obs {
        let mut out = obs.clone();
        let mut point = vec![0.0; obs.dimension];
        for (i, &state) in obs.hidden.iter().enumerate() {
            self.measures.sample_into(state, rng, &mut point);
            out.germs.set(i, &point);
        }
        out
    }

    fn transplant(&self, target: &Self::Obs, i: usize, donor: &Self::Obs) -> Self::Obs {
        let mut out = target.clone();
        out.germs.set(i, donor.germs.point(i));
        out
    }

    fn evaluate(&self, obs: &Self::Obs, rng: &mut Stream) -> f64 {
        self.evaluate_sample(obs, rng)
    }
}
