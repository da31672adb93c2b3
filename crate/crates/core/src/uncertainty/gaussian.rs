use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::physics::{wrap_angle, Pose};
use crate::{Error, Result, RngStream};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-12;

pub(crate) fn pose_vec(p: &Pose) -> Vector3<f64> {
    Vector3::new(p.x, p.y, p.theta)
}

pub(crate) fn vec_pose(v: &Vector3<f64>) -> Pose {
    Pose::new(v.x, v.y, wrap_angle(v.z))
}

/// Multivariate normal over `(x, y, theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    mean: Pose,
    covariance: Matrix3<f64>,
    /// `A` with `A A^T = covariance`, from the eigendecomposition.
    factor: Matrix3<f64>,
}

impl GaussianBelief {
    pub fn new(mean: Pose, covariance: Matrix3<f64>) -> Result<Self> {
        if !covariance.iter().all(|v| v.is_finite()) || !mean.is_finite() {
            return Err(Error::InvalidArgument("non-finite gaussian".into()));
        }
        if (covariance - covariance.transpose()).amax() > SYMMETRY_TOL {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(covariance);
        if eig.eigenvalues.iter().any(|l| *l < -PSD_TOL) {
            return Err(Error::InvalidArgument(format!(
                "covariance is not positive semidefinite (eigenvalues {:?})",
                eig.eigenvalues.as_slice()
            )));
        }
        let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = eig.eigenvectors * Matrix3::from_diagonal(&sqrt);
        Ok(Self {
            mean,
            covariance,
            factor,
        })
    }

    pub fn diagonal(mean: Pose, variances: [f64; 3]) -> Result<Self> {
        if variances.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument("negative variance".into()));
        }
        Self::new(mean, Matrix3::from_diagonal(&Vector3::from(variances)))
    }

    pub fn mean(&self) -> Pose {
        self.mean
    }

    pub fn covariance(&self) -> &Matrix3<f64> {
        &self.covariance
    }

    /// One draw; always consumes exactly three standard normals.
    pub fn sample(&self, rng: &mut RngStream) -> Pose {
        let z = Vector3::new(
            rng.standard_normal(),
            rng.standard_normal(),
            rng.standard_normal(),
        );
        let d = self.factor * z;
        Pose::new(
            self.mean.x + d.x,
            self.mean.y + d.y,
            wrap_angle(self.mean.theta + d.z),
        )
    }
}

/// Weighted sum of Gaussians over `(x, y, theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureBelief {
    components: Vec<(f64, GaussianBelief)>,
}

impl MixtureBelief {
    pub fn new(components: Vec<(f64, GaussianBelief)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "mixture needs at least one component".into(),
            ));
        }
        if components
            .iter()
            .any(|(w, _)| !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::InvalidArgument(
                "mixture weights must be >= 0".into(),
            ));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {total}"
            )));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[(f64, GaussianBelief)] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(|(w, _)| *w)
    }

    /// Picks component `j` with probability equal to its weight, then draws from it.
    pub fn sample(&self, rng: &mut RngStream) -> Pose {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut chosen = None;
        for (j, (w, _)) in self.components.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            acc += w;
            chosen = Some(j);
            if u < acc {
                break;
            }
        }
        let j = chosen.expect("weights sum to one");
        self.components[j].1.sample(rng)
    }

    /// Mixture mean; the angle is the weighted circular mean.
    pub fn mean(&self) -> Pose {
        let (mut x, mut y, mut s, mut c) = (0.0, 0.0, 0.0, 0.0);
        for (w, g) in &self.components {
            let m = g.mean();
            x += w * m.x;
            y += w * m.y;
            s += w * m.theta.sin();
            c += w * m.theta.cos();
        }
        Pose::new(x, y, s.atan2(c))
    }
}

/// Pose uncertainty of one object: the initial Gaussian, or a mixture once
/// the object has been moved by interactions.
#[derive(Debug, Clone, PartialEq)]
pub enum PoseBelief {
    Gaussian(GaussianBelief),
    Mixture(MixtureBelief),
}

impl PoseBelief {
    pub fn mean(&self) -> Pose {
        match self {
            PoseBelief::Gaussian(g) => g.mean(),
            PoseBelief::Mixture(m) => m.mean(),
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Pose {
        match self {
            PoseBelief::Gaussian(g) => g.sample(rng),
            PoseBelief::Mixture(m) => m.sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let mut m = Matrix3::identity();
        m[(0, 1)] = 0.1;
        assert!(GaussianBelief::new(Pose::default(), m).is_err());
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, -0.1, 1.0));
        assert!(GaussianBelief::new(Pose::default(), m).is_err());
    }

    #[test]
    fn zero_covariance_returns_mean_exactly() {
        let mean = Pose::new(0.123, -0.456, 0.789);
        let g = GaussianBelief::diagonal(mean, [0.0; 3]).unwrap();
        let mut rng = RngStream::from_seed(9);
        for _ in 0..50 {
            assert_eq!(g.sample(&mut rng), mean);
        }
    }

    #[test]
    fn mixture_weights_must_sum_to_one() {
        let g = GaussianBelief::diagonal(Pose::default(), [1.0; 3]).unwrap();
        assert!(MixtureBelief::new(vec![(0.5, g.clone()), (0.4, g.clone())]).is_err());
        assert!(MixtureBelief::new(vec![(0.5, g.clone()), (0.5, g)]).is_ok());
    }

    #[test]
    fn zero_weight_component_is_never_drawn() {
        let a = GaussianBelief::diagonal(Pose::new(0.0, 0.0, 0.0), [0.01; 3]).unwrap();
        let b = GaussianBelief::diagonal(Pose::new(100.0, 0.0, 0.0), [0.01; 3]).unwrap();
        let m = MixtureBelief::new(vec![(1.0, a), (0.0, b)]).unwrap();
        let mut rng = RngStream::from_seed(2);
        assert!((0..2000).all(|_| m.sample(&mut rng).x < 50.0));
    }
}
