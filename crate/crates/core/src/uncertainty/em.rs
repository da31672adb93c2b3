//! Expectation–maximization for full-covariance Gaussian mixtures over poses.

use nalgebra::{Cholesky, Matrix3, SymmetricEigen, Vector3};

use super::gaussian::{pose_vec, vec_pose, GaussianBelief, MixtureBelief};
use crate::physics::{wrap_angle, Pose};
use crate::{Error, Result, RngStream};

/// Smallest eigenvalue allowed in any fitted covariance.
pub const COVARIANCE_FLOOR: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 200;
/// Convergence threshold on the mean per-sample log-likelihood gain.
pub const TOLERANCE: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Result of an EM fit with the diagnostics the tests rely on.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub mixture: MixtureBelief,
    /// Total log-likelihood evaluated at every E-step, in order.
    pub log_likelihood: Vec<f64>,
    /// Largest `|sum_j r_ij - 1|` seen over all samples and E-steps.
    pub responsibility_error: f64,
}

#[derive(Clone)]
struct Component {
    weight: f64,
    mean: Vector3<f64>,
    cov: Matrix3<f64>,
}

/// Projects a symmetric matrix onto `{C : C >= floor * I}`.
fn floor_covariance(c: Matrix3<f64>) -> Matrix3<f64> {
    let sym = (c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|l| l.max(COVARIANCE_FLOOR));
    let out = eig.eigenvectors * Matrix3::from_diagonal(&vals) * eig.eigenvectors.transpose();
    (out + out.transpose()) * 0.5
}

struct LogDensity {
    chol_inv: Matrix3<f64>,
    log_norm: f64,
}

impl LogDensity {
    fn new(cov: &Matrix3<f64>) -> Self {
        let chol = Cholesky::new(*cov)
            .or_else(|| Cholesky::new(cov + Matrix3::identity() * COVARIANCE_FLOOR))
            .expect("floored covariance is positive definite");
        let l = chol.l();
        let log_det = 2.0 * (0..3).map(|i| l[(i, i)].ln()).sum::<f64>();
        let chol_inv = l.try_inverse().expect("triangular factor is invertible");
        Self {
            chol_inv,
            log_norm: -0.5 * (3.0 * LN_2PI + log_det),
        }
    }

    fn eval(&self, x: &Vector3<f64>, mean: &Vector3<f64>) -> f64 {
        let z = self.chol_inv * (x - mean);
        self.log_norm - 0.5 * z.norm_squared()
    }
}

/// Rewrites angles onto the branch nearest their circular mean.
fn unwrap_angles(samples: &[Pose]) -> Vec<Vector3<f64>> {
    let (s, c) = samples.iter().fold((0.0, 0.0), |(s, c), p| {
        (s + p.theta.sin(), c + p.theta.cos())
    });
    let center = s.atan2(c);
    samples
        .iter()
        .map(|p| Vector3::new(p.x, p.y, center + wrap_angle(p.theta - center)))
        .collect()
}

fn kmeans_pp_seeds(data: &[Vector3<f64>], n: usize, rng: &mut RngStream) -> Vec<Vector3<f64>> {
    let mut centers = vec![data[rng.index(data.len())]];
    let mut d2: Vec<f64> = data
        .iter()
        .map(|x| (x - centers[0]).norm_squared())
        .collect();
    while centers.len() < n {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.uniform() * total;
            let mut acc = 0.0;
            let mut idx = data.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if u < acc {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.index(data.len())
        };
        let c = data[pick];
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min((x - c).norm_squared());
        }
        centers.push(c);
    }
    centers
}

/// Fits an `n`-component mixture to `samples` by EM.
///
/// Seeding is k-means++ over the raw coordinates; every component starts
/// from the global sample covariance with equal weight. Covariances are
/// constrained to eigenvalues `>= COVARIANCE_FLOOR`, which keeps each M-step
/// an exact maximizer over the constrained set, so the log-likelihood is
/// non-decreasing.
pub fn fit_gmm_em(samples: &[Pose], n: usize, rng: &mut RngStream) -> Result<GmmFit> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "component count must be >= 1".into(),
        ));
    }
    if samples.len() < n {
        return Err(Error::InvalidArgument(format!(
            "{} samples cannot support {n} components",
            samples.len()
        )));
    }
    if !samples.iter().all(Pose::is_finite) {
        return Err(Error::InvalidArgument("non-finite sample".into()));
    }
    let data = unwrap_angles(samples);
    let count = data.len() as f64;

    let global_mean = data.iter().fold(Vector3::zeros(), |a, x| a + x) / count;
    let global_cov = data.iter().fold(Matrix3::zeros(), |a, x| {
        let d = x - global_mean;
        a + d * d.transpose()
    }) / count;
    let init_cov = floor_covariance(global_cov);

    let mut comps: Vec<Component> = kmeans_pp_seeds(&data, n, rng)
        .into_iter()
        .map(|mean| Component {
            weight: 1.0 / n as f64,
            mean,
            cov: init_cov,
        })
        .collect();

    let mut resp = vec![0.0; data.len() * n];
    let mut history = Vec::new();
    let mut resp_err = 0.0f64;

    for iter in 0..=MAX_ITERATIONS {
        // E-step
        let dens: Vec<LogDensity> = comps.iter().map(|c| LogDensity::new(&c.cov)).collect();
        let mut ll = 0.0;
        let mut logp = vec![0.0; n];
        for (i, x) in data.iter().enumerate() {
            for j in 0..n {
                logp[j] = if comps[j].weight > 0.0 {
                    comps[j].weight.ln() + dens[j].eval(x, &comps[j].mean)
                } else {
                    f64::NEG_INFINITY
                };
            }
            let m = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + logp.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
            ll += lse;
            let mut sum = 0.0;
            for j in 0..n {
                let r = (logp[j] - lse).exp();
                resp[i * n + j] = r;
                sum += r;
            }
            resp_err = resp_err.max((sum - 1.0).abs());
        }
        let converged = history
            .last()
            .map_or(false, |prev: &f64| (ll - prev) / count < TOLERANCE);
        history.push(ll);
        if converged || iter == MAX_ITERATIONS {
            break;
        }

        // M-step
        for (j, comp) in comps.iter_mut().enumerate() {
            let nj: f64 = (0..data.len()).map(|i| resp[i * n + j]).sum();
            if nj <= 0.0 {
                comp.weight = 0.0;
                continue;
            }
            let mean = data
                .iter()
                .enumerate()
                .fold(Vector3::zeros(), |a, (i, x)| a + x * resp[i * n + j])
                / nj;
            let cov = data.iter().enumerate().fold(Matrix3::zeros(), |a, (i, x)| {
                let d = x - mean;
                a + d * d.transpose() * resp[i * n + j]
            }) / nj;
            comp.weight = nj / count;
            comp.mean = mean;
            comp.cov = floor_covariance(cov);
        }
        let total: f64 = comps.iter().map(|c| c.weight).sum();
        for c in &mut comps {
            c.weight /= total;
        }
    }

    let components = comps
        .into_iter()
        .map(|c| Ok((c.weight, GaussianBelief::new(vec_pose(&c.mean), c.cov)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(GmmFit {
        mixture: MixtureBelief::new(components)?,
        log_likelihood: history,
        responsibility_error: resp_err,
    })
}

/// Number of bitwise-distinct poses in `samples`.
pub fn distinct_count(samples: &[Pose]) -> usize {
    let mut keys: Vec<[u64; 3]> = samples
        .iter()
        .map(|p| pose_vec(p).map(f64::to_bits).into())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draw(rng: &mut RngStream, mean: (f64, f64, f64), sd: f64) -> Pose {
        Pose::new(
            mean.0 + sd * rng.standard_normal(),
            mean.1 + sd * rng.standard_normal(),
            mean.2 + 0.1 * sd * rng.standard_normal(),
        )
    }

    #[test]
    fn rejects_too_few_samples() {
        let mut rng = RngStream::from_seed(0);
        let s = vec![Pose::default(); 2];
        assert!(matches!(
            fit_gmm_em(&s, 3, &mut rng),
            Err(Error::InvalidArgument(_))
        ));
        assert!(fit_gmm_em(&s, 0, &mut rng).is_err());
    }

    #[test]
    fn single_component_is_the_closed_form() {
        let mut rng = RngStream::from_seed(11);
        let samples: Vec<Pose> = (0..500)
            .map(|_| draw(&mut rng, (1.0, -2.0, 0.3), 0.5))
            .collect();
        let fit = fit_gmm_em(&samples, 1, &mut rng).unwrap();
        let (w, g) = &fit.mixture.components()[0];
        assert_eq!(*w, 1.0);
        let n = samples.len() as f64;
        let mean = samples
            .iter()
            .map(pose_vec)
            .fold(Vector3::zeros(), |a, x| a + x)
            / n;
        let cov = samples.iter().map(pose_vec).fold(Matrix3::zeros(), |a, x| {
            let d = x - mean;
            a + d * d.transpose()
        }) / n;
        assert!((pose_vec(&g.mean()) - mean).amax() < 1e-12);
        assert!((g.covariance() - cov).amax() < 1e-12);
    }

    #[test]
    fn identical_samples_hit_the_floor() {
        let mut rng = RngStream::from_seed(1);
        let s = vec![Pose::new(0.2, 0.1, 0.0); 5];
        let fit = fit_gmm_em(&s, 1, &mut rng).unwrap();
        let g = &fit.mixture.components()[0].1;
        assert_eq!(g.mean(), Pose::new(0.2, 0.1, 0.0));
        let eig = SymmetricEigen::new(*g.covariance());
        assert!(eig
            .eigenvalues
            .iter()
            .all(|l| (*l - COVARIANCE_FLOOR).abs() < 1e-15));
    }

    #[test]
    fn angles_near_the_cut_are_unwrapped() {
        let mut rng = RngStream::from_seed(5);
        let pi = std::f64::consts::PI;
        let s: Vec<Pose> = (0..200)
            .map(|i| {
                Pose::new(
                    0.0,
                    0.0,
                    wrap_angle(pi + if i % 2 == 0 { 0.05 } else { -0.05 }),
                )
            })
            .collect();
        let fit = fit_gmm_em(&s, 1, &mut rng).unwrap();
        let g = &fit.mixture.components()[0].1;
        assert!(wrap_angle(g.mean().theta - pi).abs() < 1e-9);
        assert!((g.covariance()[(2, 2)] - 0.0025).abs() < 1e-9);
    }

    #[test]
    fn log_likelihood_monotone_and_responsibilities_normalized() {
        let mut rng = RngStream::from_seed(21);
        let mut s: Vec<Pose> = (0..300)
            .map(|_| draw(&mut rng, (0.0, 0.0, 0.0), 1.0))
            .collect();
        s.extend((0..200).map(|_| draw(&mut rng, (3.0, 1.0, 0.0), 0.7)));
        let fit = fit_gmm_em(&s, 3, &mut rng).unwrap();
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
        assert!(fit.responsibility_error < 1e-9);
        let total: f64 = fit.mixture.weights().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distinct_counts_bitwise() {
        let a = Pose::new(0.1, 0.2, 0.0);
        let b = Pose::new(0.1, 0.2, 1e-300);
        assert_eq!(distinct_count(&[a, a, b]), 2);
    }
}
