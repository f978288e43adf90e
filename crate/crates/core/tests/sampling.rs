use privreg_core::data_gen::{sample_theta, sample_unit_ball, sample_world, CostSpec, NoiseSpec, PriorSpec};
use privreg_core::linalg::{dot, norm2};
use privreg_core::random::seeded;
use privreg_core::stats::mean_stderr;
use proptest::prelude::*;

fn covariance_within(d: usize, seed: u64, n: usize) {
    let x = sample_unit_ball(n, d, &mut seeded(seed)).unwrap();
    let target = 1.0 / (d as f64 + 2.0);
    for i in 0..d {
        for j in 0..d {
            let prods: Vec<f64> = x.iter_rows().map(|r| r[i] * r[j]).collect();
            let m = mean_stderr(&prods);
            let want = if i == j { target } else { 0.0 };
            assert!(
                (m.mean - want).abs() <= 5.0 * m.std_err,
                "({i},{j}): {} vs {want}",
                m.mean
            );
            assert!((m.mean - want).abs() <= 0.01);
        }
    }
}

#[test]
fn unit_ball_covariance_d2() {
    covariance_within(2, 21, 100_000);
}

#[test]
fn unit_ball_covariance_d5() {
    covariance_within(5, 22, 100_000);
}

#[test]
fn unit_ball_squared_norm_d3() {
    let x = sample_unit_ball(100_000, 3, &mut seeded(23)).unwrap();
    let sq: Vec<f64> = x.iter_rows().map(|r| dot(r, r)).collect();
    let m = mean_stderr(&sq);
    assert!((m.mean - 0.6).abs() < 0.01);
    assert!(sq.iter().all(|s| *s <= 1.0));
}

#[test]
fn noise_draws_are_bounded_and_centred() {
    let mut rng = seeded(24);
    for noise in [
        NoiseSpec::Uniform { half_width: 0.7 },
        NoiseSpec::TruncatedGaussian { half_width: 1.5 },
        NoiseSpec::SymmetricDiscrete { half_width: 1.0 },
    ] {
        let z: Vec<f64> = (0..200_000).map(|_| noise.sample(&mut rng)).collect();
        assert!(z.iter().all(|v| v.abs() <= noise.half_width()));
        let m = mean_stderr(&z);
        assert!(m.mean.abs() <= 5.0 * m.std_err);
        let v = noise.variance();
        assert!(v > 0.0 && v <= noise.half_width() * noise.half_width());
    }
}

#[test]
fn pareto_tail_dominates() {
    let cost = CostSpec::pareto(2.0);
    let mut rng = seeded(25);
    let n = 100_000;
    let c: Vec<f64> = (0..n).map(|_| cost.sample(&mut rng)).collect();
    let below_ten = c.iter().filter(|v| **v <= 10.0).count() as f64 / n as f64;
    // the Pareto(2) CDF at 10 is exactly 0.99, so the check needs sampling slack
    assert!(below_ten >= 0.99 - 3.0 * (0.99f64 * 0.01 / n as f64).sqrt());
    for tau in [1.0, 1.5, 2.0, 3.0, 5.0, 10.0, 30.0] {
        let target: f64 = 1.0 - f64::powf(tau, -2.0);
        let emp = c.iter().filter(|v| **v <= tau).count() as f64 / n as f64;
        let se = (target * (1.0 - target) / n as f64).sqrt();
        assert!(emp >= target - 3.0 * se, "tau {tau}: {emp} < {target}");
    }
}

#[test]
fn world_boundedness_chain() {
    let prior = PriorSpec::truncated_gaussian(vec![0.2, -0.1, 0.0], 0.6, 1.0, 1.0).unwrap();
    let noise = NoiseSpec::Uniform { half_width: 1.0 };
    let mut rng = seeded(26);
    for _ in 0..50 {
        let w = sample_world(&prior, &noise, &CostSpec::pareto(3.0), 200, 3, &mut rng).unwrap();
        for i in 0..w.n() {
            let row = w.features.row(i);
            assert!(norm2(row) <= 1.0);
            assert!(dot(&w.theta, row).abs() <= prior.bound);
            assert!(w.responses[i].abs() <= prior.bound + noise.half_width());
            assert!(w.costs[i] >= 0.0);
        }
    }
}

#[test]
fn world_dimension_must_match_prior() {
    let prior = PriorSpec::point_mass(vec![0.5, 0.5]);
    let noise = NoiseSpec::Uniform { half_width: 1.0 };
    assert!(sample_world(&prior, &noise, &CostSpec::pareto(2.0), 10, 3, &mut seeded(0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discrete_draws_respect_bound(
        pts in prop::collection::vec(prop::collection::vec(-0.7f64..0.7, 2), 1..6),
        seed in any::<u64>(),
    ) {
        let prior = PriorSpec::uniform_discrete(pts, 1.0).unwrap();
        let mut rng = seeded(seed);
        for _ in 0..20 {
            let t = sample_theta(&prior, &mut rng).unwrap();
            prop_assert!(dot(&t, &t) <= prior.bound);
        }
    }

    #[test]
    fn ball_rows_stay_inside(n in 1usize..200, d in 1usize..8, seed in any::<u64>()) {
        let x = sample_unit_ball(n, d, &mut seeded(seed)).unwrap();
        prop_assert_eq!(x.rows(), n);
        prop_assert!(x.iter_rows().all(|r| norm2(r) <= 1.0));
    }
}
