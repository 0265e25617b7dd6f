use dfrc_beamtrack::association::{associate, AssociationWeights, DistanceMode};
use dfrc_beamtrack::ekf::{state, StateVec};
use dfrc_beamtrack::harness::config::{Allocator, ScenarioConfig};
use dfrc_beamtrack::harness::sim::run_scenario;
use dfrc_beamtrack::array::NoiseModel;
use dfrc_beamtrack::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn near_noiseless_pass_is_tracked_within_a_tenth_of_a_degree() {
    let mut cfg = ScenarioConfig::single_vehicle();
    cfg.snr_db = 80.0;
    cfg.monte_carlo = 1;
    let trace = run_scenario(&cfg).unwrap();
    let worst = trace.trials[0]
        .iter()
        .map(|e| (e.vehicles[0].theta_est - e.vehicles[0].theta_true).abs())
        .fold(0.0, f64::max);
    assert!(worst.to_degrees() < 0.1, "worst angle error {} deg", worst.to_degrees());
}

#[test]
fn tracking_error_is_small_before_the_crossing() {
    let mut cfg = ScenarioConfig::single_vehicle();
    cfg.n_slots = 40;
    cfg.monte_carlo = 10;
    let trace = run_scenario(&cfg).unwrap();
    for trial in &trace.trials {
        for e in trial {
            let v = &e.vehicles[0];
            assert!((v.theta_est - v.theta_true).abs().to_degrees() < 0.1);
            assert!((v.d_est - v.d_true).abs() < 2.0);
        }
    }
}

#[test]
fn every_allocator_keeps_five_vehicles_apart_at_high_snr() {
    for allocator in [Allocator::Uniform, Allocator::WaterFill, Allocator::PcrbMin] {
        let mut cfg = ScenarioConfig::multi_vehicle(20.0, allocator);
        cfg.n_slots = 300;
        cfg.monte_carlo = 2;
        let trace = run_scenario(&cfg).unwrap();
        for e in trace.trials.iter().flatten() {
            assert!(e.association_correct, "{allocator:?} epoch {}", e.epoch);
            for v in &e.vehicles {
                assert!((v.theta_est - v.theta_true).abs().to_degrees() < 1.0);
            }
        }
    }
}

/// Vehicles far apart relative to their per-slot motion are always matched
/// to their own previous states.
#[test]
fn separated_vehicles_are_associated_correctly() {
    let weights = AssociationWeights::from_noise(&NoiseModel::reference());
    let scale = weights.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let k = rng.random_range(1..=8);
        let prev: Vec<StateVec> = (0..k)
            .map(|_| {
                state(
                    rng.random_range(0.1..3.0),
                    rng.random_range(5.0..200.0),
                    rng.random_range(0.0..30.0),
                    Complex64::from_polar(rng.random_range(0.1..3.0), rng.random_range(0.0..std::f64::consts::TAU)),
                )
            })
            .collect();
        let weighted = |a: &StateVec, b: &StateVec| {
            let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2], Complex64::new(a[3], a[4]).norm() - Complex64::new(b[3], b[4]).norm()];
            d.iter().zip(&scale).map(|(x, w)| (x * w).powi(2)).sum::<f64>().sqrt()
        };
        let mut min_cross = f64::INFINITY;
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    min_cross = min_cross.min(weighted(&prev[i], &prev[j]));
                }
            }
        }
        // Displace each state by less than a third of the closest pair.
        let reach = if k == 1 { 1.0 } else { min_cross / 3.0 * 0.99 };
        let moved: Vec<StateVec> = prev
            .iter()
            .map(|x| {
                let dir: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-12);
                let r = reach * rng.random_range(0.0..1.0);
                let mut y = *x;
                y[0] += r * dir[0] / norm / scale[0];
                y[1] += r * dir[1] / norm / scale[1];
                y[2] += r * dir[2] / norm / scale[2];
                let b = Complex64::new(x[3], x[4]);
                let mag = (b.norm() + r * dir[3] / norm / scale[3]).max(0.0);
                let b = Complex64::from_polar(mag, b.arg());
                y[3] = b.re;
                y[4] = b.im;
                y
            })
            .collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut rng);
        let shuffled: Vec<StateVec> = order.iter().map(|&i| moved[i]).collect();
        let result = associate(&prev, &shuffled, &weights, DistanceMode::Weighted).unwrap();
        assert_eq!(result.mapping, order);
    }
}
