//! Occupancy counts: letters never emitted among `floor(alpha * n)`.
//!
//! The hidden chain switches between per-state letter distributions over a
//! common pool of `L = floor(alpha * n)` letters; the statistic is
//! `W = L - #{distinct letters observed}`. Changing one observation moves
//! `W` by at most 1, so `W` is 1-Lipschitz in the Hamming sense.

use thiserror::Error;

use crate::hmm::{reconstruct, HmmError, HmmSpec, StackSampler};
use crate::perturb::{CoordinateModel, Functional};
use crate::rng::{self, Stream};
use crate::stats::CltPoint;
use crate::{exec, hmm};

#[derive(Debug, Error, PartialEq)]
pub enum OccupancyError {
    #[error("symbol {symbol} out of range for {letters} letters")]
    SymbolOutOfRange { symbol: u32, letters: usize },
    #[error("alpha {alpha} with n {n} gives no letters")]
    NoLetters { alpha: f64, n: usize },
    #[error("emission blocks must cover every letter (fraction {0} too small)")]
    BlocksDoNotCover(f64),
    #[error(transparent)]
    Hmm(#[from] HmmError),
}

/// Per-state letter distribution family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmissionFamily {
    /// Every state draws uniformly from all `L` letters.
    Uniform,
    /// State `s` draws uniformly from a contiguous block of
    /// `ceil(fraction * L)` letters; block starts are spread evenly so that
    /// consecutive blocks overlap and their union covers all letters.
    Blocks { fraction: f64 },
}

/// Occupancy model parameters for a single trajectory length.
#[derive(Debug, Clone)]
pub struct OccupancyConfig {
    pub alpha: f64,
    pub n: usize,
    pub emissions: EmissionFamily,
}

impl OccupancyConfig {
    pub fn new(alpha: f64, n: usize, emissions: EmissionFamily) -> Result<Self, OccupancyError> {
        let config = OccupancyConfig { alpha, n, emissions };
        if config.letter_count() == 0 {
            return Err(OccupancyError::NoLetters { alpha, n });
        }
        Ok(config)
    }

    /// `L = floor(alpha * n)`.
    pub fn letter_count(&self) -> usize {
        (self.alpha * self.n as f64).floor() as usize
    }

    /// Contiguous letter block `[start, start + len)` for one state.
    pub fn block(&self, state: usize, num_states: usize) -> (usize, usize) {
        let l = self.letter_count();
        match self.emissions {
            EmissionFamily::Uniform => (0, l),
            EmissionFamily::Blocks { fraction } => {
                let len = ((fraction * l as f64).ceil() as usize).clamp(1, l);
                let start = if num_states <= 1 {
                    0
                } else {
                    // Evenly spread block starts from 0 to L - len.
                    state * (l - len) / (num_states - 1)
                };
                (start, len)
            }
        }
    }

    /// Build the hidden-chain spec of `base` with emission rows replaced by
    /// this config's letter blocks over `L` letters.
    pub fn build_spec(&self, base: &HmmSpec) -> Result<HmmSpec, OccupancyError> {
        let s = base.num_states();
        let l = self.letter_count();
        let mut emission = vec![0.0; s * l];
        let mut covered = vec![false; l];
        for state in 0..s {
            let (start, len) = self.block(state, s);
            let weight = 1.0 / len as f64;
            for letter in start..(start + len).min(l) {
                emission[state * l + letter] = weight;
                covered[letter] = true;
            }
        }
        if covered.iter().any(|&c| !c) {
            let fraction = match self.emissions {
                EmissionFamily::Blocks { fraction } => fraction,
                EmissionFamily::Uniform => 1.0,
            };
            return Err(OccupancyError::BlocksDoNotCover(fraction));
        }
        let transition: Vec<f64> =
            (0..s).flat_map(|row| base.transition_row(row).to_vec()).collect();
        Ok(HmmSpec::new(s, l, base.initial().to_vec(), transition, emission)?)
    }
}

/// `W = L - #{distinct symbols in x}`.
pub fn occupancy_count(x: &[u32], letters: usize) -> Result<u32, OccupancyError> {
    let mut seen = vec![false; letters];
    let mut distinct = 0u32;
    for &symbol in x {
        if symbol as usize >= letters {
            return Err(OccupancyError::SymbolOutOfRange { symbol, letters });
        }
        if !seen[symbol as usize] {
            seen[symbol as usize] = true;
            distinct += 1;
        }
    }
    Ok(letters as u32 - distinct)
}

/// [`Functional`] wrapper so occupancy plugs into the bound estimators.
#[derive(Debug, Clone, Copy)]
pub struct OccupancyFunctional {
    pub letters: usize,
}

impl Functional for OccupancyFunctional {
    fn name(&self) -> &str {
        "occupancy.W"
    }

    fn evaluate(&self, observed: &[u32]) -> f64 {
        occupancy_count(observed, self.letters).expect("symbols within alphabet") as f64
    }

    fn lipschitz_constant(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Replicated occupancy counts across a grid of `n`, with `L` recomputed per
/// grid point (`L = floor(alpha * n)`), so each `n` is its own model.
pub fn run_occupancy_clt(
    alpha: f64,
    emissions: EmissionFamily,
    base: &HmmSpec,
    grid: &[usize],
    replicates: usize,
    master_seed: u64,
) -> Result<Vec<(OccupancyConfig, CltPoint)>, OccupancyError> {
    assert!(grid.windows(2).all(|w| w[0] < w[1]), "grid must be increasing");
    let mut out = Vec::with_capacity(grid.len());
    for &n in grid {
        let config = OccupancyConfig::new(alpha, n, emissions)?;
        let spec = config.build_spec(base)?;
        let letters = config.letter_count();
        let sampler = StackSampler::new(&spec);
        let label = format!("occupancy-clt/n={n}");
        let values = exec::run_replicates(replicates, |rep| {
            let mut stream = rng::stream(master_seed, &label, rep as u64);
            let trajectory = reconstruct(&sampler.sample_stack(n, &mut stream));
            occupancy_count(&trajectory.observed, letters).expect("symbols in range") as f64
        });
        out.push((config, CltPoint::from_values(n, values)));
    }
    Ok(out)
}

/// Coordinate model for the variance lower bound: letters resampled from the
/// hidden state's block.
pub struct OccupancyModel {
    sampler: StackSampler,
    pub letters: usize,
    n: usize,
}

impl OccupancyModel {
    pub fn new(config: &OccupancyConfig, base: &HmmSpec) -> Result<Self, OccupancyError> {
        let spec = config.build_spec(base)?;
        Ok(OccupancyModel {
            sampler: StackSampler::new(&spec),
            letters: config.letter_count(),
            n: config.n,
        })
    }
}

impl CoordinateModel for OccupancyModel {
    type Obs = hmm::Trajectory;

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
        occupancy_count(&obs.observed, self.letters).expect("symbols in range") as f64
    }
}
