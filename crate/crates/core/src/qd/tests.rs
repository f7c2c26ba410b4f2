use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::lang::parse_generator;

fn sphere(x: &DVector<f64>) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn rosenbrock(x: &DVector<f64>) -> f64 {
    (0..x.len() - 1)
        .map(|i| 100.0 * (x[i + 1] - x[i] * x[i]).powi(2) + (1.0 - x[i]).powi(2))
        .sum()
}

fn is_spd(s: &CmaState) -> bool {
    let c = &s.covariance;
    (c - c.transpose()).amax() <= 1e-12 * c.amax().max(1.0) && s.eigenvalues()[0] > 0.0
}

/// Runs until `f` drops below `target`; returns the generation count used.
fn minimize(
    f: fn(&DVector<f64>) -> f64,
    start: DVector<f64>,
    sigma: f64,
    max_gen: usize,
    target: f64,
    seed: u64,
) -> Option<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = CmaState::new(start, sigma);
    for g in 1..=max_gen {
        let (next, pop) = cma_step(&s, &mut rng, f);
        assert!(is_spd(&next), "generation {g}");
        s = next;
        if pop.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min) < target {
            return Some(g);
        }
    }
    None
}

#[test]
fn population_size_formula() {
    // 4 + floor(3 ln n)
    assert_eq!(population_size(1), 4);
    assert_eq!(population_size(2), 6);
    assert_eq!(population_size(5), 8);
    assert_eq!(population_size(10), 10);
    assert_eq!(population_size(100), 17);
}

#[test]
fn default_strategy_parameters() {
    let s = CmaState::new(DVector::zeros(5), 1.0);
    assert_eq!(s.weights.len(), 4);
    assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert!(s.weights.windows(2).all(|w| w[0] > w[1]));
    // mu_eff for lambda = 8 from the raw weights ln(4.5) - ln(i)
    let raw: Vec<f64> = (1..=4).map(|i| 4.5f64.ln() - (i as f64).ln()).collect();
    let sum: f64 = raw.iter().sum();
    let sq: f64 = raw.iter().map(|w| w * w).sum();
    assert!((s.mu_eff - sum * sum / sq).abs() < 1e-12);
}

#[test]
fn sphere_converges() {
    let g = minimize(sphere, DVector::from_element(5, 1.0), 0.5, 200, 1e-8, 1)
        .expect("sphere within 200 generations");
    assert!(g <= 200);
}

#[test]
fn rosenbrock_converges() {
    minimize(rosenbrock, DVector::zeros(5), 0.5, 2000, 1e-4, 3)
        .expect("rosenbrock within 2000 generations");
}

#[test]
fn constant_objective_stays_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = CmaState::new(DVector::from_element(4, 2.0), 0.3);
    for _ in 0..50 {
        s = cma_step(&s, &mut rng, |_| 1.0).0;
        assert!(is_spd(&s));
    }
    assert!(s.sigma.is_finite() && s.sigma < 0.3 * 100.0);
    assert!((&s.mean - DVector::from_element(4, 2.0)).norm() < 100.0);
}

#[test]
fn seeded_runs_repeat() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut s = CmaState::new(DVector::from_element(3, 1.0), 0.5);
        let mut trace = Vec::new();
        for _ in 0..30 {
            s = cma_step(&s, &mut rng, rosenbrock).0;
            trace.push((s.mean.clone(), s.sigma));
        }
        trace
    };
    assert_eq!(run(), run());
}

#[test]
fn covariance_stays_spd_under_random_objectives() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut noise = ChaCha8Rng::seed_from_u64(10);
    let mut s = CmaState::new(DVector::zeros(6), 1.0);
    for _ in 0..1000 {
        let xs = s.ask(&mut rng);
        let fs: Vec<f64> = xs.iter().map(|_| noise.gen()).collect();
        s.tell(&xs, &fs);
        assert!(is_spd(&s));
        assert!(s.sigma > 0.0 && s.sigma.is_finite());
    }
}

#[test]
fn non_finite_covariance_resets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut s = CmaState::new(DVector::zeros(3), 1.0);
    let xs = s.ask(&mut rng);
    let mut bad = xs.clone();
    bad[0][0] = f64::NAN;
    s.tell(&bad, &[0.0; 7][..xs.len()].to_vec());
    assert_eq!(s.resets, 1);
    assert_eq!(s.covariance, nalgebra::DMatrix::identity(3, 3));
}

const BOX: &str = "param a: length = 100
param b: length = 100
param c: length = 100
wp1 = workplane(\"XY\")
wp2 = box(wp1, a, b, c)
result = wp2";

const CYL: &str = "param r: length = 40
param h: length = 90
wp1 = workplane(\"XY\")
wp2 = cylinder(wp1, h, r)
result = wp2";

fn generator(src: &str) -> Generator {
    parse_generator(src).unwrap()
}

#[test]
fn penalty_examples() {
    let g = generator(BOX);
    let cfg = PenaltyConfig::default();
    let empty = Archive::new(cfg.epsilon);
    assert_eq!(penalty(&g, &[120.0, 80.0, 60.0], &empty, &cfg), 0.0);
    // L = 250: size overshoot 50, cube overshoot 2 x 25 on x
    let p = penalty(&g, &[250.0, 80.0, 60.0], &empty, &cfg);
    assert!(p >= 50.0, "{p}");
    assert!((p - 100.0).abs() < 1e-9, "{p}");
    assert_eq!(penalty(&g, &[-5.0, 80.0, 60.0], &empty, &cfg), 1e6);
    // too small
    assert!((penalty(&g, &[40.0, 30.0, 20.0], &empty, &cfg) - 20.0).abs() < 1e-9);
}

#[test]
fn novelty_term() {
    let g = generator(BOX);
    let cfg = PenaltyConfig::default();
    let a = assess(&g, &[100.0, 100.0, 100.0], &cfg).unwrap();
    let mut archive = Archive::new(cfg.epsilon);
    assert!(archive.try_insert(Sample {
        z: vec![100.0; 3],
        descriptor: a.descriptor.clone(),
        script: String::new(),
        longest_side: 100.0,
        penalty: 0.0
    }));
    // identical shape: d_min = 0, full novelty penalty
    assert!((soft_penalty(&a, &archive, &cfg) - 1.0).abs() < 1e-12);
    assert!(!archive.try_insert(archive.accepted[0].clone()));
    let far = assess(&g, &[180.0, 70.0, 150.0], &cfg).unwrap();
    assert_eq!(soft_penalty(&far, &archive, &cfg), 0.0);
}

#[test]
fn descriptor_shape() {
    let cfg = PenaltyConfig::default();
    let a = assess(&generator(CYL), &[40.0, 90.0], &cfg).unwrap();
    let d = &a.descriptor.0;
    assert_eq!(d.len(), DESCRIPTOR_LEN);
    assert!(d.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)));
    // 80 x 80 x 90 cylinder: extents 0.4, 0.4, 0.45 within a voxel
    let s = 220.0 / 64.0 / 200.0;
    for (got, want) in d[..3].iter().zip([0.4, 0.4, 0.45]) {
        assert!((got - want).abs() <= 2.0 * s, "{got} vs {want}");
    }
    // fill fraction near pi/4
    assert!(
        (d[3] - std::f64::consts::FRAC_PI_4).abs() < 0.05,
        "{}",
        d[3]
    );
    assert_eq!(d[69], 1.0 / 8.0);
}

fn check_archive(out: &SampleOutcome, cfg: &PenaltyConfig) {
    let acc = &out.archive.accepted;
    for (i, a) in acc.iter().enumerate() {
        assert_eq!(a.penalty, 0.0);
        assert!(
            (cfg.size_range[0]..=cfg.size_range[1]).contains(&a.longest_side),
            "{}",
            a.longest_side
        );
        for b in &acc[..i] {
            assert!(a.descriptor.distance(&b.descriptor) >= cfg.epsilon);
        }
    }
}

#[test]
fn box_generator_fills_the_archive() {
    let cfg = PenaltyConfig::default();
    let g = generator(BOX);
    let out = sample_generator(&g, 15, &cfg, 5000, 7);
    assert!(!out.zero_accepted);
    assert_eq!(
        out.archive.len(),
        15,
        "after {} evaluations",
        out.evaluations
    );
    assert!(out.evaluations <= 5000);
    check_archive(&out, &cfg);
    // the defaults are the first sample
    assert_eq!(out.archive.accepted[0].z, vec![100.0; 3]);
    let again = sample_generator(&g, 15, &cfg, 5000, 7);
    assert_eq!(again.archive, out.archive);
}

#[test]
fn zero_budget_and_invalid_defaults() {
    let cfg = PenaltyConfig::default();
    let out = sample_generator(&generator(BOX), 15, &cfg, 0, 1);
    assert_eq!(out.archive.len(), 1);
    assert_eq!(out.evaluations, 0);
    let bad = generator(&BOX.replace("= 100\nparam b", "= -100\nparam b"));
    let out = sample_generator(&bad, 15, &cfg, 100, 1);
    assert!(out.zero_accepted);
    assert!(out.archive.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn penalty_is_zero_exactly_when_acceptable(a in -20.0f64..260.0, b in 20.0f64..220.0, c in 20.0f64..220.0, dx in -40.0f64..40.0) {
        let src = BOX.replace("wp1 = workplane(\"XY\")", &format!("wp1 = workplane(\"XY\", {dx}, 0, 0)"));
        let g = generator(&src);
        let cfg = PenaltyConfig::default();
        let p = penalty(&g, &[a, b, c], &Archive::new(cfg.epsilon), &cfg);
        prop_assert!(p >= 0.0);
        match assess(&g, &[a, b, c], &cfg) {
            None => prop_assert_eq!(p, cfg.invalid_penalty),
            Some(s) => {
                let l = s.longest_side();
                let inside = (0..3).all(|k| s.aabb.min[k] >= -100.0 && s.aabb.max[k] <= 100.0);
                prop_assert_eq!(p == 0.0, (60.0..=200.0).contains(&l) && inside);
                prop_assert!(p < cfg.invalid_penalty);
            }
        }
    }
}
