//! Voronoi volume approximation of a region `K` in the unit cube.
//!
//! Given nuclei `X` in `[0,1]^d`, the approximation of `K` is the set of
//! points whose nearest nucleus lies in `K`; its volume `phi(X)` is estimated
//! by classifying uniform sample points by nearest nucleus. Nearest-neighbor
//! queries run brute force for small nucleus sets and through a uniform-grid
//! index (identical output, including the smallest-index tie rule) for
//! larger ones. In `d = 1` the cell boundaries are midpoints of consecutive
//! sorted nuclei, so `phi` is also computed exactly as an oracle.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hmm::{reconstruct, HmmSpec, StackSampler};
use crate::measure::{MeasureError, TwoCellMeasures};
use crate::perturb::CoordinateModel;
use crate::rng::{self, Stream};
use crate::spatial::{dist2, unit_ball_volume, GridIndex, PointSet};
use crate::stats::CltPoint;
use crate::exec;

#[derive(Debug, Error, PartialEq)]
pub enum VoronoiError {
    #[error("nucleus set is empty")]
    EmptyNuclei,
    #[error("model has {spec_states} states but config has {config_states} state measures")]
    StateMismatch { spec_states: usize, config_states: usize },
    #[error("declared exact volume {declared} differs from descriptor volume {computed}")]
    VolumeMismatch { declared: f64, computed: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Shape of the region being approximated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum RegionShape {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    FullCube,
}

/// A region of `[0,1]^d` with exact membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPredicate {
    pub dimension: usize,
    #[serde(flatten)]
    pub shape: RegionShape,
    /// Optional declared volume, validated against the descriptor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_volume: Option<f64>,
}

impl RegionPredicate {
    pub fn ball(dimension: usize, center: Vec<f64>, radius: f64) -> Self {
        RegionPredicate { dimension, shape: RegionShape::Ball { center, radius }, exact_volume: None }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        RegionPredicate {
            dimension: 1,
            shape: RegionShape::Box { lo: vec![lo], hi: vec![hi] },
            exact_volume: None,
        }
    }

    pub fn full_cube(dimension: usize) -> Self {
        RegionPredicate { dimension, shape: RegionShape::FullCube, exact_volume: None }
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        match &self.shape {
            RegionShape::Ball { center, radius } => dist2(point, center) <= radius * radius,
            RegionShape::Box { lo, hi } => point
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(&x, (&l, &h))| (l..=h).contains(&x)),
            RegionShape::FullCube => true,
        }
    }

    /// Volume of the descriptor shape (unclipped for balls).
    pub fn descriptor_volume(&self) -> f64 {
        match &self.shape {
            RegionShape::Ball { radius, .. } => {
                unit_ball_volume(self.dimension) * radius.powi(self.dimension as i32)
            }
            RegionShape::Box { lo, hi } => {
                lo.iter().zip(hi).map(|(&l, &h)| (h - l).max(0.0)).product()
            }
            RegionShape::FullCube => 1.0,
        }
    }

    /// Check the declared volume against the descriptor, to 1e-12.
    pub fn validate(&self) -> Result<(), VoronoiError> {
        if let Some(declared) = self.exact_volume {
            let computed = self.descriptor_volume();
            if (declared - computed).abs() > 1e-12 {
                return Err(VoronoiError::VolumeMismatch { declared, computed });
            }
        }
        Ok(())
    }
}

/// Nuclei below this count are classified brute force; the grid index takes
/// over above it. Both paths give identical answers.
const GRID_THRESHOLD: usize = 48;

/// Index of the nucleus nearest to `y`; ties break to the smallest index.
pub fn nearest_nucleus(y: &[f64], nuclei: &PointSet) -> Result<usize, VoronoiError> {
    if nuclei.is_empty() {
        return Err(VoronoiError::EmptyNuclei);
    }
    let mut best = (f64::INFINITY, usize::MAX);
    for (i, p) in nuclei.iter().enumerate() {
        let d2 = dist2(p, y);
        if d2 < best.0 {
            best = (d2, i);
        }
    }
    Ok(best.1)
}

/// Reusable nearest-nucleus classifier with in-`K` labels.
pub struct NucleusClassifier<'a> {
    nuclei: &'a PointSet,
    in_region: Vec<bool>,
    grid: Option<GridIndex>,
}

impl<'a> NucleusClassifier<'a> {
    pub fn new(nuclei: &'a PointSet, region: &RegionPredicate) -> Result<Self, VoronoiError> {
        if nuclei.is_empty() {
            return Err(VoronoiError::EmptyNuclei);
        }
        let in_region = nuclei.iter().map(|p| region.contains(p)).collect();
        let grid = (nuclei.len() >= GRID_THRESHOLD).then(|| {
            let per_axis = (nuclei.len() as f64).powf(1.0 / nuclei.dimension() as f64);
            GridIndex::build(nuclei, 1.0, 1.0 / per_axis.max(1.0))
        });
        Ok(NucleusClassifier { nuclei, in_region, grid })
    }

    pub fn nearest(&self, y: &[f64]) -> usize {
        match &self.grid {
            Some(grid) => grid.nearest(self.nuclei, y).expect("non-empty nuclei"),
            None => nearest_nucleus(y, self.nuclei).expect("non-empty nuclei"),
        }
    }

    pub fn nearest_in_region(&self, y: &[f64]) -> bool {
        self.in_region[self.nearest(y)]
    }
}

/// Monte Carlo estimate of `phi(X) = Vol{ y : nearest nucleus of y is in K }`
/// with its binomial standard error.
pub fn voronoi_volume_estimate(
    nuclei: &PointSet,
    region: &RegionPredicate,
    points: usize,
    rng: &mut Stream,
) -> Result<(f64, f64), VoronoiError> {
    assert!(points >= 1, "need at least one sample point");
    let classifier = NucleusClassifier::new(nuclei, region)?;
    let mut hits = 0usize;
    let mut y = vec![0.0; nuclei.dimension()];
    for _ in 0..points {
        for coord in y.iter_mut() {
            *coord = rng.random::<f64>();
        }
        hits += classifier.nearest_in_region(&y) as usize;
    }
    let p = hits as f64 / points as f64;
    Ok((p, (p * (1.0 - p) / points as f64).sqrt()))
}

/// Exact `phi(X)` in dimension 1: the cell of sorted nucleus `x_i` is
/// `[m_{i-1}, m_i]` with midpoints between consecutive nuclei and endpoints
/// 0 and 1; cells whose nucleus lies in `K` contribute their length.
pub fn voronoi_volume_exact_1d(
    nuclei: &[f64],
    region: &RegionPredicate,
) -> Result<f64, VoronoiError> {
    if nuclei.is_empty() {
        return Err(VoronoiError::EmptyNuclei);
    }
    let mut sorted = nuclei.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite nuclei"));
    let mut total = 0.0;
    let mut left = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let right =
            if i + 1 < sorted.len() { 0.5 * (x + sorted[i + 1]) } else { 1.0 };
        if region.contains(&[x]) {
            total += right - left;
        }
        left = right;
    }
    Ok(total)
}

/// Voronoi experiment parameters.
#[derive(Debug, Clone)]
pub struct VoronoiConfig {
    pub dimension: usize,
    /// Nucleus count.
    pub n: usize,
    /// Uniform sample points per volume estimate.
    pub point_budget: usize,
    /// Per-state low-cell weights of the nucleus measures.
    pub state_weights: Vec<f64>,
    /// Density sandwich `(c_m, c_M)` relative to uniform.
    pub density_bounds: (f64, f64),
}

impl VoronoiConfig {
    pub fn measures(&self) -> Result<TwoCellMeasures, VoronoiError> {
        Ok(TwoCellMeasures::new(
            self.dimension,
            1.0,
            self.state_weights.clone(),
            self.density_bounds.0,
            self.density_bounds.1,
        )?)
    }
}

/// Sample nuclei from the hidden chain's state measures.
pub fn sample_nuclei(
    config: &VoronoiConfig,
    sampler: &StackSampler,
    measures: &TwoCellMeasures,
    rng: &mut Stream,
) -> (PointSet, Vec<u32>) {
    let hidden = reconstruct(&sampler.sample_stack(config.n, rng)).hidden;
    let mut nuclei = PointSet::with_capacity(config.dimension, config.n);
    let mut point = vec![0.0; config.dimension];
    for &state in &hidden {
        measures.sample_into(state, rng, &mut point);
        nuclei.push(&point);
    }
    (nuclei, hidden)
}

/// Replicated `phi` estimates across a grid of nucleus counts.
pub fn run_voronoi_clt(
    config_for: impl Fn(usize) -> VoronoiConfig,
    spec: &HmmSpec,
    region: &RegionPredicate,
    grid: &[usize],
    replicates: usize,
    master_seed: u64,
) -> Result<Vec<CltPoint>, VoronoiError> {
    assert!(grid.windows(2).all(|w| w[0] < w[1]), "grid must be increasing");
    region.validate()?;
    let sampler = StackSampler::new(spec);
    let mut out = Vec::with_capacity(grid.len());
    for &n in grid {
        let config = config_for(n);
        let measures = config.measures()?;
        let label = format!("voronoi-clt/n={n}");
        let values = exec::run_replicates(replicates, |rep| {
            let mut stream = rng::stream(master_seed, &label, rep as u64);
            let (nuclei, _) = sample_nuclei(&config, &sampler, &measures, &mut stream);
            voronoi_volume_estimate(&nuclei, region, config.point_budget, &mut stream)
                .expect("non-empty nuclei")
                .0
        });
        out.push(CltPoint::from_values(n, values));
    }
    Ok(out)
}

/// Coordinate model over nuclei for the variance lower bound.
pub struct VoronoiModel {
    config: VoronoiConfig,
    region: RegionPredicate,
    sampler: StackSampler,
    measures: TwoCellMeasures,
}

/// Observation of [`VoronoiModel`]: nuclei plus their hidden states.
#[derive(Debug, Clone)]
pub struct NucleiSample {
    pub nuclei: PointSet,
    pub hidden: Vec<u32>,
}

impl VoronoiModel {
    pub fn new(
        config: VoronoiConfig,
        spec: &HmmSpec,
        region: RegionPredicate,
    ) -> Result<Self, VoronoiError> {
        region.validate()?;
        let measures = config.measures()?;
        if spec.num_states() != config.state_weights.len() {
            return Err(VoronoiError::StateMismatch {
                spec_states: spec.num_states(),
                config_states: config.state_weights.len(),
            });
        }
        Ok(VoronoiModel { config, region, sampler: StackSampler::new(spec), measures })
    }
}

impl CoordinateModel for VoronoiModel {
    type Obs = NucleiSample;

    fn sample(&self, rng: &mut Stream) -> Self::Obs {
        let (nuclei, hidden) = sample_nuclei(&self.config, &self.sampler, &self.measures, rng);
        NucleiSample { nuclei, hidden }
    }

    fn num_coordinates(&self, obs: &Self::Obs) -> usize {
        obs.nuclei.len()
    }

    fn resample_all(&self, obs: &Self::Obs, rng: &mut Stream) -> Self::Obs {
        let mut out = obs.clone();
        let mut point = vec![0.0; self.config.dimension];
        for (i, &state) in obs.hidden.iter().enumerate() {
            self.measures.sample_into(state, rng, &mut point);
            out.nuclei.set(i, &point);
        }
        out
    }

    fn transplant(&self, target: &Self::Obs, i: usize, donor: &Self::Obs) -> Self::Obs {
        let mut out = target.clone();
        out.nuclei.set(i, donor.nuclei.point(i));
        out
    }

    fn evaluate(&self, obs: &Self::Obs, rng: &mut Stream) -> f64 {
        voronoi_volume_estimate(&obs.nuclei, &self.region, self.config.point_budget, rng)
            .expect("non-empty nuclei")
            .0
    }
}
