//! Reweight / resample / move steps on a weighted particle population.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::Points;

/// Floor applied to denominators of weight ratios.
pub const RATIO_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticlePopulation {
    points: Points,
    weights: Vec<f64>,
    pub stage: usize,
}

impl ParticlePopulation {
    /// Equally weighted population.
    pub fn uniform(points: Points, stage: usize) -> Result<Self> {
        let m = points.len();
        Self::weighted(points, vec![1.0 / m as f64; m], stage)
    }

    pub fn weighted(points: Points, weights: Vec<f64>, stage: usize) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("a population needs at least two particles"));
        }
        if weights.len() != points.len() {
            return Err(Error::invalid("one weight per particle is required"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(ParticlePopulation { points, weights, stage })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_points(self) -> Points {
        self.points
    }
}

/// Stage weights from excursion probabilities: `r_i = num_i / max(den_i, ε)`.
/// Returns the normalized weights and the stage factor `mean(r)`.
pub fn compute_weights(g_num: &[f64], g_den: &[f64]) -> Result<(Vec<f64>, f64)> {
    if g_num.len() != g_den.len() || g_num.is_empty() {
        return Err(Error::invalid("numerator and denominator must have the same nonzero length"));
    }
    let ratios: Vec<f64> = g_num
        .iter()
        .zip(g_den)
        .map(|(n, d)| if *n == 0.0 { 0.0 } else { n / d.max(RATIO_FLOOR) })
        .collect();
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::invalid("weight ratios must be finite and nonnegative"));
    }
    let total: f64 = ratios.iter().sum();
    if total == 0.0 {
        return Err(Error::DegeneratePopulation("every particle has zero weight".into()));
    }
    let factor = total / ratios.len() as f64;
    let weights = ratios.into_iter().map(|r| r / total).collect();
    Ok((weights, factor))
}

/// `count` indices drawn with replacement, index `i` with probability `weights[i]`.
pub fn multinomial_indices<R: Rng + ?Sized>(weights: &[f64], count: usize, rng: &mut R) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(weights).map_err(|e| Error::DegeneratePopulation(format!("resampling weights: {e}")))?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// Multinomial resampling to an equally weighted population of the same size.
pub fn multinomial_resample<R: Rng + ?Sized>(pop: &ParticlePopulation, rng: &mut R) -> Result<ParticlePopulation> {
    let idx = multinomial_indices(&pop.weights, pop.len(), rng)?;
    ParticlePopulation::uniform(pop.points.select(&idx), pop.stage)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveConfig {
    pub proposal_sds: Vec<f64>,
    /// Full fixed-scan passes over the coordinates per particle.
    pub sweeps: usize,
}

impl MoveConfig {
    pub fn new(proposal_sds: Vec<f64>, sweeps: usize) -> Result<Self> {
        if proposal_sds.is_empty() || proposal_sds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("proposal standard deviations must be finite and positive"));
        }
        if sweeps == 0 {
            return Err(Error::invalid("at least one sweep is required"));
        }
        Ok(MoveConfig { proposal_sds, sweeps })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposals: u64,
    pub accepted: u64,
}

fn check_dims(pop: &ParticlePopulation, config: &MoveConfig) -> Result<()> {
    if config.proposal_sds.len() != pop.points.dim() {
        return Err(Error::invalid("proposal scale dimension does not match the particles"));
    }
    Ok(())
}

/// Fixed-scan Metropolis-within-Gibbs with Gaussian random-walk proposals on
/// each coordinate in natural order. NaN target values reject the proposal.
pub fn mwg_move<R, F>(
    pop: &ParticlePopulation,
    mut log_target: F,
    config: &MoveConfig,
    rng: &mut R,
) -> Result<(ParticlePopulation, MoveStats)>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    check_dims(pop, config)?;
    let mut points = pop.points.clone();
    let mut stats = MoveStats::default();
    let mut proposal = vec![0.0; points.dim()];
    for i in 0..points.len() {
        let current = points.row_mut(i);
        let mut lp = log_target(current);
        if !(lp > f64::NEG_INFINITY) {
            return Err(Error::DegeneratePopulation(format!(
                "target log-density is {lp} at particle {i}"
            )));
        }
        for _ in 0..config.sweeps {
            for (j, sd) in config.proposal_sds.iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                let u: f64 = rng.random();
                proposal.copy_from_slice(current);
                proposal[j] += sd * z;
                let mut lp_new = log_target(&proposal);
                if lp_new.is_nan() {
                    lp_new = f64::NEG_INFINITY;
                }
                stats.proposals += 1;
                if u.ln() < lp_new - lp {
                    current[j] = proposal[j];
                    lp = lp_new;
                    stats.accepted += 1;
                }
            }
        }
    }
    Ok((ParticlePopulation::uniform(points, pop.stage)?, stats))
}

/// Metropolis-within-Gibbs on `p(x) 1{x ∈ A}` that only queries the (costly)
/// constraint when the prior ratio test passes. `constraint` returns
/// `Some(payload)` when the proposal lies in `A`; payloads travel with the
/// particles. Consumes random numbers exactly like [`mwg_move`], so with an
/// indicator target both produce the same chain.
pub fn constrained_mwg_move<R, P, C>(
    pop: &ParticlePopulation,
    payload: &[f64],
    mut log_prior: P,
    mut constraint: C,
    config: &MoveConfig,
    rng: &mut R,
) -> Result<(ParticlePopulation, Vec<f64>, MoveStats)>
where
    R: Rng + ?Sized,
    P: FnMut(&[f64]) -> f64,
    C: FnMut(&[f64]) -> Result<Option<f64>>,
{
    check_dims(pop, config)?;
    if payload.len() != pop.len() {
        return Err(Error::invalid("one payload value per particle is required"));
    }
    let mut points = pop.points.clone();
    let mut payload = payload.to_vec();
    let mut stats = MoveStats::default();
    let mut proposal = vec![0.0; points.dim()];
    for i in 0..points.len() {
        let current = points.row_mut(i);
        let mut lp = log_prior(current);
        for _ in 0..config.sweeps {
            for (j, sd) in config.proposal_sds.iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                let u: f64 = rng.random();
                proposal.copy_from_slice(current);
                proposal[j] += sd * z;
                let mut lp_new = log_prior(&proposal);
                if lp_new.is_nan() {
                    lp_new = f64::NEG_INFINITY;
                }
                stats.proposals += 1;
                if u.ln() < lp_new - lp {
                    if let Some(value) = constraint(&proposal)? {
                        current[j] = proposal[j];
                        lp = lp_new;
                        payload[i] = value;
                        stats.accepted += 1;
                    }
                }
            }
        }
    }
    Ok((ParticlePopulation::uniform(points, pop.stage)?, payload, stats))
}

/// Chain lengths that spread `total` states over `chains` chains, the first
/// `total % chains` chains being one state longer.
pub fn chain_lengths(total: usize, chains: usize) -> Result<Vec<usize>> {
    if chains == 0 || chains > total {
        return Err(Error::invalid(format!("cannot spread {total} states over {chains} chains")));
    }
    let (base, extra) = (total / chains, total % chains);
    Ok((0..chains).map(|k| base + usize::from(k < extra)).collect())
}

/// Transition kernel of the chains in [`metropolis_chains`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainKernel {
    /// Propose every coordinate against its marginal prior ratio, then query
    /// the constraint once on the candidate (unless nothing changed).
    #[default]
    Modified,
    /// Fixed-scan Metropolis-within-Gibbs: one prior ratio test and, when it
    /// passes, one constraint query per coordinate.
    FixedScan,
}

/// Metropolis chains on `p(x) 1{x ∈ A}` for a prior with independent
/// coordinates, `log_marginal(j, value)` giving the log-density of coordinate `j`.
///
/// Chain `k` starts at seed `k` (which must lie in `A`) and runs until it holds
/// `lengths[k]` states, the seed included. `constraint` returns `Some(payload)`
/// inside `A`. Returns the states chain by chain with their payloads.
#[allow(clippy::too_many_arguments)]
pub fn metropolis_chains<R, M, C>(
    seeds: &Points,
    payload: &[f64],
    lengths: &[usize],
    kernel: ChainKernel,
    mut log_marginal: M,
    mut constraint: C,
    proposal_sds: &[f64],
    rng: &mut R,
) -> Result<(Points, Vec<f64>, MoveStats)>
where
    R: Rng + ?Sized,
    M: FnMut(usize, f64) -> f64,
    C: FnMut(&[f64]) -> Result<Option<f64>>,
{
    if proposal_sds.len() != seeds.dim() {
        return Err(Error::invalid("proposal scale dimension does not match the seeds"));
    }
    if payload.len() != seeds.len() || lengths.len() != seeds.len() {
        return Err(Error::invalid("one payload value and one chain length per seed are required"));
    }
    if lengths.contains(&0) {
        return Err(Error::invalid("chains must hold at least their seed"));
    }
    let total = lengths.iter().sum();
    let mut states = Points::with_capacity(seeds.dim(), total);
    let mut values = Vec::with_capacity(total);
    let mut stats = MoveStats::default();
    let mut current = vec![0.0; seeds.dim()];
    let mut candidate = vec![0.0; seeds.dim()];
    for (k, &len) in lengths.iter().enumerate() {
        current.copy_from_slice(seeds.row(k));
        let mut value = payload[k];
        states.push(&current)?;
        values.push(value);
        for _ in 1..len {
            match kernel {
                ChainKernel::Modified => {
                    let mut changed = false;
                    for (j, sd) in proposal_sds.iter().enumerate() {
                        let z: f64 = rng.sample(StandardNormal);
                        let u: f64 = rng.random();
                        let proposed = current[j] + sd * z;
                        if u.ln() < log_marginal(j, proposed) - log_marginal(j, current[j]) {
                            candidate[j] = proposed;
                            changed = true;
                        } else {
                            candidate[j] = current[j];
                        }
                    }
                    if changed {
                        stats.proposals += 1;
                        if let Some(v) = constraint(&candidate)? {
                            current.copy_from_slice(&candidate);
                            value = v;
                            stats.accepted += 1;
                        }
                    }
                }
                ChainKernel::FixedScan => {
                    for (j, sd) in proposal_sds.iter().enumerate() {
                        let z: f64 = rng.sample(StandardNormal);
                        let u: f64 = rng.random();
                        let proposed = current[j] + sd * z;
                        stats.proposals += 1;
                        if u.ln() < log_marginal(j, proposed) - log_marginal(j, current[j]) {
                            candidate.copy_from_slice(&current);
                            candidate[j] = proposed;
                            if let Some(v) = constraint(&candidate)? {
                                current[j] = proposed;
                                value = v;
                                stats.accepted += 1;
                            }
                        }
                    }
                }
            }
            states.push(&current)?;
            values.push(value);
        }
    }
    Ok((states, values, stats))
}
