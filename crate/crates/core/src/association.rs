//! Assignment of per-beam state estimates to the vehicle identities of the
//! previous epoch.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::array::NoiseModel;
use crate::ekf::{beta_of, StateVec, DIST, SPEED, THETA};
use crate::{Error, Result};

/// Largest problem solved by optimal assignment; larger ones use greedy
/// nearest-neighbour matching.
pub const OPTIMAL_LIMIT: usize = 16;

/// Margins below this are reported as ambiguous.
pub const AMBIGUITY_MARGIN: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Weighted distance over `(θ, d, v, |β|)`.
    #[default]
    Weighted,
    /// Plain Euclidean distance over the full real state vector.
    FullState,
}

/// Per-component weights of the `(θ, d, v, |β|)` distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationWeights(pub [f64; 4]);

impl AssociationWeights {
    /// Inverse state-noise standard deviations.
    pub fn from_noise(noise: &NoiseModel) -> Self {
        Self([
            noise.sigma_theta.recip(),
            noise.sigma_d.recip(),
            noise.sigma_v.recip(),
            noise.sigma_beta.recip(),
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationResult {
    /// `mapping[i]` is the vehicle assigned to beam estimate `i`.
    pub mapping: Vec<usize>,
    /// Smallest ratio, over beams, of the second-best to the best distance.
    pub min_margin: f64,
    /// Set when `min_margin` falls below [`AMBIGUITY_MARGIN`].
    pub ambiguous: bool,
}

pub fn distance(a: &StateVec, b: &StateVec, weights: &AssociationWeights, mode: DistanceMode) -> f64 {
    match mode {
        DistanceMode::FullState => (a - b).norm(),
        DistanceMode::Weighted => {
            let w = &weights.0;
            let diff = [
                a[THETA] - b[THETA],
                a[DIST] - b[DIST],
                a[SPEED] - b[SPEED],
                beta_of(a).norm() - beta_of(b).norm(),
            ];
            diff.iter().zip(w).map(|(d, w)| (d * w).powi(2)).sum::<f64>().sqrt()
        }
    }
}

/// Match each new estimate to one previous state, minimizing the total
/// distance.
pub fn associate(
    prev_states: &[StateVec],
    new_estimates: &[StateVec],
    weights: &AssociationWeights,
    mode: DistanceMode,
) -> Result<AssociationResult> {
    let k = prev_states.len();
    if k == 0 || new_estimates.len() != k {
        return Err(Error::usage(format!(
            "association needs equal nonempty lists, got {} previous and {} new",
            k,
            new_estimates.len()
        )));
    }
    let cost: Vec<Vec<f64>> = new_estimates
        .iter()
        .map(|x| prev_states.iter().map(|p| distance(x, p, weights, mode)).collect())
        .collect();

    let mapping = if k <= OPTIMAL_LIMIT {
        hungarian(&cost)
    } else {
        greedy(&cost)
    };

    let min_margin = cost.iter().map(|row| margin(row)).fold(f64::INFINITY, f64::min);
    let ambiguous = min_margin < AMBIGUITY_MARGIN;
    if ambiguous {
        debug!("ambiguous association: margin {min_margin:.3}");
    }
    Ok(AssociationResult {
        mapping,
        min_margin,
        ambiguous,
    })
}

fn margin(row: &[f64]) -> f64 {
    if row.len() < 2 {
        return f64::INFINITY;
    }
    let (mut best, mut second) = (f64::INFINITY, f64::INFINITY);
    for &c in row {
        if c < best {
            second = best;
            best = c;
        } else if c < second {
            second = c;
        }
    }
    if second == best {
        1.0
    } else {
        second / best
    }
}

/// Minimum-cost perfect matching of a square cost matrix (shortest
/// augmenting paths with potentials, `O(K³)`). Returns `row → column`.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut mapping = vec![0; n];
    for j in 1..=n {
        mapping[col_row[j] - 1] = j - 1;
    }
    mapping
}

/// Repeatedly take the globally cheapest remaining pair.
fn greedy(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut pairs: Vec<(f64, usize, usize)> = cost
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &c)| (c, i, j)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut mapping = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (_, i, j) in pairs {
        if mapping[i] == usize::MAX && !taken[j] {
            mapping[i] = j;
            taken[j] = true;
        }
    }
    mapping
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deg;
    use crate::ekf::state;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn weights() -> AssociationWeights {
        AssociationWeights::from_noise(&NoiseModel::reference())
    }

    fn is_permutation(m: &[usize]) -> bool {
        let mut seen = vec![false; m.len()];
        m.iter().all(|&j| j < m.len() && !std::mem::replace(&mut seen[j], true))
    }

    /// Exhaustive minimum-cost assignment.
    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == cost.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..cost.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row][j] + go(cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        go(cost, 0, &mut vec![false; cost.len()])
    }

    #[test]
    fn single_vehicle_is_identity() {
        let x = state(deg(30.0), 20.0, 10.0, Complex64::new(0.1, 0.0));
        let r = associate(&[x], &[x], &weights(), DistanceMode::Weighted).unwrap();
        assert_eq!(r.mapping, vec![0]);
        assert!(r.min_margin.is_infinite());
        assert!(!r.ambiguous);
    }

    #[test]
    fn identical_vehicles_are_flagged() {
        let x = state(deg(30.0), 20.0, 10.0, Complex64::new(0.1, 0.0));
        let r = associate(&[x, x], &[x, x], &weights(), DistanceMode::Weighted).unwrap();
        assert!(is_permutation(&r.mapping));
        assert_eq!(r.min_margin, 1.0);
        assert!(r.ambiguous);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let x = state(deg(30.0), 20.0, 10.0, Complex64::new(0.1, 0.0));
        assert!(matches!(
            associate(&[x], &[x, x], &weights(), DistanceMode::Weighted),
            Err(Error::Usage(_))
        ));
        assert!(associate(&[], &[], &weights(), DistanceMode::Weighted).is_err());
    }

    #[test]
    fn hungarian_resolves_conflicts() {
        // Both rows prefer column 0; the optimum gives it to row 1.
        let cost = vec![vec![1.0, 2.0], vec![0.5, 10.0]];
        assert_eq!(hungarian(&cost), vec![1, 0]);
        assert_eq!(greedy(&cost), vec![1, 0]);
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let m = hungarian(&cost);
        let total: f64 = m.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn recovers_shuffled_road_vehicles() {
        use crate::kinematics::{evolve_exact, VehicleTruth};
        let table = [
            (7.66, 30.0, 20.0, 2.0),
            (6.56, 35.0, 18.0, 1.0),
            (5.74, 40.0, 16.0, 0.5),
            (5.10, 45.0, 12.0, 0.3),
            (4.59, 50.0, 10.0, 0.2),
        ];
        let now: Vec<VehicleTruth> = table
            .iter()
            .map(|&(t, d, v, b)| VehicleTruth::from_initial(deg(t), d, v, Complex64::new(b, b)).unwrap())
            .collect();
        let as_state = |s: &VehicleTruth| state(s.theta, s.d, s.v, s.beta);
        let prev: Vec<StateVec> = now.iter().map(as_state).collect();
        let shuffle = [3, 0, 4, 1, 2];
        let next: Vec<StateVec> = shuffle
            .iter()
            .map(|&j| as_state(&evolve_exact(&now[j], 0.02).unwrap()))
            .collect();
        for mode in [DistanceMode::Weighted, DistanceMode::FullState] {
            let r = associate(&prev, &next, &weights(), mode).unwrap();
            assert_eq!(r.mapping, shuffle);
        }
        let r = associate(&prev, &next, &weights(), DistanceMode::Weighted).unwrap();
        assert!(!r.ambiguous);
    }

    proptest! {
        #[test]
        fn hungarian_is_optimal(k in 1usize..7, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cost: Vec<Vec<f64>> = (0..k).map(|_| (0..k).map(|_| rng.random::<f64>()).collect()).collect();
            let m = hungarian(&cost);
            prop_assert!(is_permutation(&m));
            let total: f64 = m.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            prop_assert!((total - brute_force(&cost)).abs() < 1e-12);
            prop_assert!(is_permutation(&greedy(&cost)));
        }

        #[test]
        fn mapping_is_scale_invariant(seed in any::<u64>(), scale in 0.01f64..100.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || state(rng.random_range(0.1..3.0), rng.random_range(5.0..80.0),
                rng.random_range(0.0..30.0), Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let prev: Vec<StateVec> = (0..5).map(|_| draw()).collect();
            let new: Vec<StateVec> = (0..5).map(|_| draw()).collect();
            for mode in [DistanceMode::Weighted, DistanceMode::FullState] {
                let a = associate(&prev, &new, &weights(), mode).unwrap();
                let ps: Vec<StateVec> = prev.iter().map(|x| x * scale).collect();
                let ns: Vec<StateVec> = new.iter().map(|x| x * scale).collect();
                let b = associate(&ps, &ns, &weights(), mode).unwrap();
                prop_assert_eq!(a.mapping, b.mapping);
            }
        }
    }
}
