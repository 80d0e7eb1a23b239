use airborne::dynamics::Variant;
use airborne::sensitivity::{default_ranges, lhs_sample, prcc, rank, ParamRange, Scale, SensParam};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(range: &ParamRange, x: f64) -> f64 {
    match range.scale {
        Scale::Linear => (x - range.low) / (range.high - range.low),
        Scale::Log => (x / range.low).ln() / (range.high / range.low).ln(),
    }
}

fn ks_uniform(mut u: Vec<f64>) -> f64 {
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn lhs_marginals_pass_kolmogorov_smirnov() {
    let ranges = default_ranges(Variant::Multiscale);
    let n = 1000;
    let limit = 1.36 / (n as f64).sqrt();
    let mut good = 0;
    for seed in 0..100 {
        let sample = lhs_sample(&ranges, n, seed).unwrap();
        let ok = ranges.iter().enumerate().all(|(j, r)| {
            let u: Vec<f64> = sample.iter().map(|row| unit(r, row[j])).collect();
            ks_uniform(u) < limit
        });
        good += ok as usize;
    }
    assert!(good >= 95, "{good}");
}

#[test]
fn every_stratum_is_hit_once() {
    let ranges = default_ranges(Variant::Tcl);
    let n = 1000;
    let sample = lhs_sample(&ranges, n, 5).unwrap();
    for (j, r) in ranges.iter().enumerate() {
        let mut counts = vec![0; n];
        for row in &sample {
            counts[((unit(r, row[j]) * n as f64) as usize).min(n - 1)] += 1;
        }
        assert!(counts.iter().all(|&c| c == 1), "{:?}", r.name);
    }
}

#[test]
fn prcc_sign_convention() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.random(), rng.random()]).collect();
    let up: Vec<f64> = x.iter().map(|r| r[0].powi(3)).collect();
    let down: Vec<f64> = x.iter().map(|r| -r[0]).collect();
    let a = prcc(&x, &up).unwrap();
    let b = prcc(&x, &down).unwrap();
    assert!(*a[0].as_ref().unwrap() > 0.99);
    assert!(a[1].as_ref().unwrap().abs() < 0.1);
    assert!(*b[0].as_ref().unwrap() < -0.99);
}

proptest! {
    #[test]
    fn prcc_ignores_monotone_transforms(seed in any::<u64>(), column in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..120).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] - 2.0 * r[1] + rng.random::<f64>()).collect();
        let mut xt = x.clone();
        for row in &mut xt {
            row[column] = (3.0 * row[column]).exp();
        }
        let yt: Vec<f64> = y.iter().map(|v| v.powi(3)).collect();
        let a = prcc(&x, &y).unwrap();
        let b = prcc(&xt, &yt).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p.as_ref().unwrap() - q.as_ref().unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn prcc_stays_in_unit_interval(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..40).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        for v in prcc(&x, &y).unwrap() {
            let v = v.unwrap();
            prop_assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn ranks_are_a_permutation_without_ties(seed in any::<u64>(), n in 2usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut r = rank(&v);
        r.sort_by(f64::total_cmp);
        for (i, x) in r.iter().enumerate() {
            prop_assert_eq!(*x, (i + 1) as f64);
        }
    }

    #[test]
    fn lhs_respects_bounds(seed in any::<u64>(), n in 2usize..300) {
        let ranges = [
            ParamRange::new(SensParam::P, 1e8, 1e12, Scale::Log),
            ParamRange::new(SensParam::K, 0.1, 0.9, Scale::Linear),
        ];
        for row in lhs_sample(&ranges, n, seed).unwrap() {
            for (x, r) in row.iter().zip(&ranges) {
                prop_assert!(*x >= r.low && *x <= r.high * (1.0 + 1e-15));
            }
        }
    }
}
