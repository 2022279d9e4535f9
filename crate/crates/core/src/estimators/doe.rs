use crate::error::{Error, Result};
use crate::gp::scaled_distance;
use crate::points::Points;

/// Greedy maximin selection of `n0` rows of `candidates`, in selection order.
///
/// Starts from the pair at maximum distance, then repeatedly adds the candidate
/// whose distance to the nearest selected point is largest. Distances are
/// Euclidean after dividing coordinate `j` by `scale[j]`; ties go to the lowest index.
pub fn maximin_design_indices(candidates: &Points, n0: usize, scale: &[f64]) -> Result<Vec<usize>> {
    let m = candidates.len();
    if n0 < 2 {
        return Err(Error::invalid("a maximin design needs at least two points"));
    }
    if m < n0 {
        return Err(Error::invalid(format!("{m} candidates cannot supply {n0} design points")));
    }
    if scale.len() != candidates.dim() {
        return Err(Error::invalid("scale dimension does not match the candidates"));
    }
    let dist = |i: usize, j: usize| scaled_distance(candidates.row(i), candidates.row(j), scale);

    let mut pair = (0, 1);
    let mut best = f64::NEG_INFINITY;
    for i in 0..m {
        for j in i + 1..m {
            let d = dist(i, j);
            if d > best {
                best = d;
                pair = (i, j);
            }
        }
    }
    let mut chosen = vec![pair.0, pair.1];
    let mut taken = vec![false; m];
    taken[pair.0] = true;
    taken[pair.1] = true;
    let mut nearest: Vec<f64> = (0..m).map(|k| dist(k, pair.0).min(dist(k, pair.1))).collect();

    while chosen.len() < n0 {
        let next = (0..m)
            .filter(|&k| !taken[k])
            .fold(None, |acc: Option<usize>, k| match acc {
                Some(b) if nearest[k] <= nearest[b] => Some(b),
                _ => Some(k),
            })
            .expect("m >= n0 leaves a free candidate");
        taken[next] = true;
        chosen.push(next);
        for k in 0..m {
            nearest[k] = nearest[k].min(dist(k, next));
        }
    }
    Ok(chosen)
}

pub fn maximin_doe(candidates: &Points, n0: usize, scale: &[f64]) -> Result<Points> {
    Ok(candidates.select(&maximin_design_indices(candidates, n0, scale)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ReliabilityProblem;
    use rand::seq::index::sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn min_pairwise(points: &Points, scale: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                best = best.min(scaled_distance(points.row(i), points.row(j), scale));
            }
        }
        best
    }

    #[test]
    fn two_candidates() {
        let c = Points::from_rows(&[[0.0], [3.0]]).unwrap();
        assert_eq!(maximin_design_indices(&c, 2, &[1.0]).unwrap(), vec![0, 1]);
    }

    #[test]
    fn collinear_selection_order() {
        let c = Points::from_rows(&[[0.0], [0.5], [1.0]]).unwrap();
        let d = maximin_doe(&c, 3, &[1.0]).unwrap();
        assert_eq!(d.as_flat(), &[0.0, 1.0, 0.5]);
    }

    #[test]
    fn too_few_candidates() {
        let c = Points::from_rows(&[[0.0], [0.5]]).unwrap();
        assert!(matches!(maximin_doe(&c, 3, &[1.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn beats_random_subsets_on_cantilever_cloud() {
        let p = ReliabilityProblem::cantilever();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cloud = p.input.sample(1000, &mut rng);
        let sds = p.input.sds();
        let design = maximin_doe(&cloud, 10, sds).unwrap();
        let ours = min_pairwise(&design, sds);
        let mut wins = 0;
        for _ in 0..100 {
            let idx = sample(&mut rng, 1000, 10).into_vec();
            if ours > min_pairwise(&cloud.select(&idx), sds) {
                wins += 1;
            }
        }
        assert!(wins >= 99, "maximin design beat only {wins}/100 random subsets");
    }
}
