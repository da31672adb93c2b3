//! Generator-parameter and distributional oracles for beliefs and EM.

use nalgebra::Matrix3;
use pkpiece::physics::Pose;
use pkpiece::uncertainty::{fit_gmm_em, GaussianBelief, MixtureBelief, PoseBelief};
use pkpiece::RngStream;
use statrs::distribution::{ContinuousCDF, Normal};

fn two_blobs(rng: &mut RngStream, n: usize) -> Vec<Pose> {
    let a = GaussianBelief::new(
        Pose::new(0.0, 0.0, 0.0),
        Matrix3::new(1.0, 0.3, 0.0, 0.3, 0.8, 0.0, 0.0, 0.0, 0.01),
    )
    .unwrap();
    let b = GaussianBelief::new(
        Pose::new(5.0, 5.0, 0.0),
        Matrix3::new(0.7, -0.2, 0.0, -0.2, 1.2, 0.0, 0.0, 0.0, 0.02),
    )
    .unwrap();
    (0..n)
        .map(|i| {
            if i % 2 == 0 {
                a.sample(rng)
            } else {
                b.sample(rng)
            }
        })
        .collect()
}

#[test]
fn em_recovers_two_components() {
    let truth = [(0.0, 0.0), (5.0, 5.0)];
    let mut recovered = 0;
    for seed in 0..30u64 {
        let mut rng = RngStream::from_seed(1000 + seed);
        let samples = two_blobs(&mut rng, 2000);
        let fit = fit_gmm_em(&samples, 2, &mut rng).unwrap();

        assert!(!fit.log_likelihood.is_empty());
        for w in fit.log_likelihood.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-9 * w[0].abs(),
                "seed {seed}: log-likelihood {} -> {}",
                w[0],
                w[1]
            );
        }
        assert!(fit.responsibility_error < 1e-9);
        let total: f64 = fit.mixture.weights().sum();
        assert!((total - 1.0).abs() < 1e-9);

        let comps = fit.mixture.components();
        let close = |(w, g): &(f64, GaussianBelief), t: (f64, f64)| {
            let m = g.mean();
            (m.x - t.0).abs() <= 0.2
                && (m.y - t.1).abs() <= 0.2
                && m.theta.abs() <= 0.2
                && (w - 0.5).abs() <= 0.05
        };
        let ok = comps.len() == 2
            && ((close(&comps[0], truth[0]) && close(&comps[1], truth[1]))
                || (close(&comps[0], truth[1]) && close(&comps[1], truth[0])));
        recovered += usize::from(ok);
    }
    println!("two-component recovery in {recovered}/30 trials");
    assert!(recovered >= 28, "recovered {recovered}/30");
}

#[test]
fn refitting_mixture_draws_recovers_means() {
    let mut rng = RngStream::from_seed(77);
    let comps = vec![
        (
            0.3,
            GaussianBelief::diagonal(Pose::new(-2.0, 1.0, 0.2), [0.3, 0.3, 0.01]).unwrap(),
        ),
        (
            0.7,
            GaussianBelief::diagonal(Pose::new(2.0, -1.0, -0.3), [0.2, 0.4, 0.02]).unwrap(),
        ),
    ];
    let mix = MixtureBelief::new(comps.clone()).unwrap();
    let belief = PoseBelief::Mixture(mix);
    let draws: Vec<Pose> = (0..10_000).map(|_| belief.sample(&mut rng)).collect();
    let fit = fit_gmm_em(&draws, 2, &mut rng).unwrap();
    for (_, g) in &comps {
        let t = g.mean();
        let best = fit
            .mixture
            .components()
            .iter()
            .map(|(_, f)| {
                let m = f.mean();
                (m.x - t.x)
                    .abs()
                    .max((m.y - t.y).abs())
                    .max((m.theta - t.theta).abs())
            })
            .fold(f64::INFINITY, f64::min);
        assert!(best <= 0.2, "mean {t:?} missed by {best}");
    }
}

#[test]
fn balanced_mixture_splits_draws_evenly() {
    let mut rng = RngStream::from_seed(5);
    let mix = MixtureBelief::new(vec![
        (
            0.5,
            GaussianBelief::diagonal(Pose::new(-5.0, 0.0, 0.0), [1.0, 1.0, 0.1]).unwrap(),
        ),
        (
            0.5,
            GaussianBelief::diagonal(Pose::new(5.0, 0.0, 0.0), [1.0, 1.0, 0.1]).unwrap(),
        ),
    ])
    .unwrap();
    let n = 10_000;
    let left = (0..n).filter(|_| mix.sample(&mut rng).x < 0.0).count();
    let frac = left as f64 / n as f64;
    assert!((0.47..=0.53).contains(&frac), "fraction {frac}");
}

/// Kolmogorov-Smirnov statistic of `xs` against a normal distribution.
fn ks(mut xs: Vec<f64>, dist: &Normal) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let c = dist.cdf(*x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn single_component_mixture_is_the_gaussian() {
    let g = GaussianBelief::diagonal(Pose::new(0.3, -0.1, 0.0), [0.04, 0.01, 0.0]).unwrap();
    let mix = MixtureBelief::new(vec![(1.0, g.clone())]).unwrap();
    let mut rng = RngStream::from_seed(9);
    let n = 4000;
    let xs: Vec<f64> = (0..n).map(|_| mix.sample(&mut rng).x).collect();
    let ys: Vec<f64> = (0..n).map(|_| mix.sample(&mut rng).y).collect();
    // 1% critical value of the one-sample KS statistic.
    let crit = 1.628 / (n as f64).sqrt();
    assert!(ks(xs, &Normal::new(0.3, 0.2).unwrap()) < crit);
    assert!(ks(ys, &Normal::new(-0.1, 0.1).unwrap()) < crit);
}
