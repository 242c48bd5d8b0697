//! Filter-style stereo VO estimator: motion prediction followed by an
//! iterated Gauss-Newton update on SE(3) with the prediction as prior.
//!
//! Covariances live in the left-perturbation tangent space, `(rho, omega)`.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraRig, Matrix3x6, StereoObservation};
use crate::error::{Result, SivoError};
use crate::geometry::{left_jacobian_inverse_se3, Pose3, Twist6};

const SYMMETRY_TOL: f64 = 1e-9;

/// Camera-from-world pose with a 6x6 covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseBelief {
    pub pose: Pose3,
    pub covariance: Matrix6<f64>,
}

impl PoseBelief {
    pub fn new(pose: Pose3, covariance: Matrix6<f64>) -> Result<Self> {
        check_spd6(&covariance)?;
        Ok(PoseBelief { pose, covariance })
    }

    /// Differential entropy of the pose covariance, in bits.
    pub fn entropy_bits(&self) -> Result<f64> {
        crate::infotheory::gaussian_entropy_of(&nalgebra::DMatrix::from_column_slice(
            6,
            6,
            self.covariance.as_slice(),
        ))
    }
}

pub(crate) fn check_spd6(m: &Matrix6<f64>) -> Result<()> {
    let scale = m.amax().max(1e-300);
    if !m.iter().all(|v| v.is_finite()) || (m - m.transpose()).amax() > SYMMETRY_TOL * scale.max(1.0) {
        return Err(SivoError::NotPositiveDefinite(
            "pose covariance must be symmetric".into(),
        ));
    }
    if m.cholesky().is_none() {
        return Err(SivoError::NotPositiveDefinite(
            "pose covariance has a non-positive eigenvalue".into(),
        ));
    }
    Ok(())
}

fn symmetrize(m: &Matrix6<f64>) -> Matrix6<f64> {
    (m + m.transpose()) * 0.5
}

fn spd_inverse6(m: &Matrix6<f64>) -> Result<Matrix6<f64>> {
    m.cholesky()
        .map(|c| symmetrize(&c.inverse()))
        .ok_or_else(|| SivoError::NotPositiveDefinite("information matrix".into()))
}

fn spd_inverse3(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    m.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| SivoError::NotPositiveDefinite("measurement noise".into()))
}

/// Relative motion applied on the left of a camera-from-world pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionPrior {
    pub increment: Pose3,
    pub noise: Matrix6<f64>,
}

impl MotionPrior {
    pub fn new(increment: Pose3, noise: Matrix6<f64>) -> Result<Self> {
        // Zero noise is allowed (deterministic motion), so only PSD is checked.
        if (noise - noise.transpose()).amax() > SYMMETRY_TOL
            || noise.symmetric_eigenvalues().min() < -SYMMETRY_TOL
        {
            return Err(SivoError::NotPositiveDefinite(
                "process noise must be symmetric positive semi-definite".into(),
            ));
        }
        Ok(MotionPrior { increment, noise })
    }
}

/// `T' = increment * T`, `S' = Ad S Ad^T + Q`.
pub fn predict(belief: &PoseBelief, prior: &MotionPrior) -> PoseBelief {
    let ad = prior.increment.adjoint();
    let covariance = symmetrize(&(ad * belief.covariance * ad.transpose() + prior.noise));
    PoseBelief {
        pose: prior.increment.compose(&belief.pose),
        covariance,
    }
}

/// A measurement whose prediction depends only on the pose.
pub trait PoseMeasurement {
    fn observed(&self) -> Vector3<f64>;
    fn noise(&self) -> Matrix3<f64>;
    /// Predicted measurement and its Jacobian w.r.t. a left pose perturbation.
    fn linearize(&self, pose: &Pose3) -> Result<(Vector3<f64>, Matrix3x6)>;
}

/// A stereo observation of a landmark with known world position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StereoMeasurement {
    pub rig: CameraRig,
    pub landmark: Vector3<f64>,
    pub observation: StereoObservation,
}

impl PoseMeasurement for StereoMeasurement {
    fn observed(&self) -> Vector3<f64> {
        self.observation.pixels
    }

    fn noise(&self) -> Matrix3<f64> {
        self.observation.noise
    }

    fn linearize(&self, pose: &Pose3) -> Result<(Vector3<f64>, Matrix3x6)> {
        self.rig.linearize(pose, &self.landmark)
    }
}

impl<M: PoseMeasurement + ?Sized> PoseMeasurement for &M {
    fn observed(&self) -> Vector3<f64> {
        (**self).observed()
    }
    fn noise(&self) -> Matrix3<f64> {
        (**self).noise()
    }
    fn linearize(&self, pose: &Pose3) -> Result<(Vector3<f64>, Matrix3x6)> {
        (**self).linearize(pose)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    /// Consecutive cost increases tolerated before giving up.
    pub divergence_patience: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            max_iterations: 10,
            step_tolerance: 1e-8,
            divergence_patience: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateOutcome {
    pub belief: PoseBelief,
    pub iterations: usize,
    pub converged: bool,
}

struct Linearized {
    info: Matrix6<f64>,
    gradient: Vector6<f64>,
    cost: f64,
}

fn linearize_all<M: PoseMeasurement>(
    pose: &Pose3,
    prior: &PoseBelief,
    prior_info: &Matrix6<f64>,
    measurements: &[M],
    noise_inv: &[Matrix3<f64>],
) -> Result<Linearized> {
    let prior_err = pose.compose(&prior.pose.inverse()).log();
    let j_prior = left_jacobian_inverse_se3(&prior_err);
    let jt_p = j_prior.transpose() * prior_info;
    let mut info = jt_p * j_prior;
    let mut gradient = -(jt_p * prior_err.0);
    let mut cost = prior_err.0.dot(&(prior_info * prior_err.0));
    for (m, q_inv) in measurements.iter().zip(noise_inv) {
        let (predicted, j) = m.linearize(pose)?;
        let r = m.observed() - predicted;
        let jt_qinv = j.transpose() * q_inv;
        info += jt_qinv * j;
        gradient += jt_qinv * r;
        cost += r.dot(&(q_inv * r));
    }
    Ok(Linearized {
        info,
        gradient,
        cost,
    })
}

fn cost_at<M: PoseMeasurement>(
    pose: &Pose3,
    prior: &PoseBelief,
    prior_info: &Matrix6<f64>,
    measurements: &[M],
    noise_inv: &[Matrix3<f64>],
) -> Option<f64> {
    let prior_err = pose.compose(&prior.pose.inverse()).log().0;
    let mut cost = prior_err.dot(&(prior_info * prior_err));
    for (m, q_inv) in measurements.iter().zip(noise_inv) {
        let (predicted, _) = m.linearize(pose).ok()?;
        let r = m.observed() - predicted;
        cost += r.dot(&(q_inv * r));
    }
    Some(cost)
}

const COST_ROUNDING: f64 = 1e-12;

/// Iterated Gauss-Newton fusion of `measurements` into `belief`. The
/// posterior covariance is the inverse of the Gauss-Newton information
/// matrix at the final linearization point.
pub fn update_detailed<M: PoseMeasurement>(
    belief: &PoseBelief,
    measurements: &[M],
    config: &EstimatorConfig,
) -> Result<UpdateOutcome> {
    if measurements.is_empty() {
        return Ok(UpdateOutcome {
            belief: *belief,
            iterations: 0,
            converged: true,
        });
    }
    let prior_info = spd_inverse6(&belief.covariance)?;
    let noise_inv = measurements
        .iter()
        .map(|m| spd_inverse3(&m.noise()))
        .collect::<Result<Vec<_>>>()?;

    let mut pose = belief.pose;
    let mut lin = linearize_all(&pose, belief, &prior_info, measurements, &noise_inv)?;
    let mut step_scale = 1.0;
    let mut increases = 0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iterations {
        iterations += 1;
        let chol = lin
            .info
            .cholesky()
            .ok_or_else(|| SivoError::NotPositiveDefinite("information matrix".into()))?;
        let full_step = chol.solve(&lin.gradient);
        if full_step.norm() < config.step_tolerance {
            converged = true;
            break;
        }
        let step = full_step * step_scale;
        let candidate = Pose3::exp(&Twist6(step)).compose(&pose);
        // Near the optimum the cost can rise by rounding alone.
        let slack = COST_ROUNDING * lin.cost.abs().max(1.0);
        match cost_at(&candidate, belief, &prior_info, measurements, &noise_inv) {
            Some(cost) if cost <= lin.cost + slack => {
                pose = candidate;
                lin = linearize_all(&pose, belief, &prior_info, measurements, &noise_inv)?;
                increases = 0;
                step_scale = 1.0;
                if step.norm() < config.step_tolerance {
                    converged = true;
                    break;
                }
            }
            _ => {
                increases += 1;
                if increases >= config.divergence_patience {
                    return Err(SivoError::DivergedUpdate { iterations });
                }
                step_scale *= 0.5;
            }
        }
    }

    let covariance = spd_inverse6(&lin.info)?;
    Ok(UpdateOutcome {
        belief: PoseBelief { pose, covariance },
        iterations,
        converged,
    })
}

pub fn update<M: PoseMeasurement>(
    belief: &PoseBelief,
    measurements: &[M],
    config: &EstimatorConfig,
) -> Result<PoseBelief> {
    update_detailed(belief, measurements, config).map(|o| o.belief)
}

/// The single-measurement updater used by greedy selection.
pub fn update_single<M: PoseMeasurement>(
    belief: &PoseBelief,
    measurement: &M,
    config: &EstimatorConfig,
) -> Result<PoseBelief> {
    update(belief, std::slice::from_ref(measurement), config)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::hat;

    /// Measures `A * t` where `t` is the pose translation.
    pub(crate) struct TranslationSensor {
        pub gain: Matrix3<f64>,
        pub value: Vector3<f64>,
        pub noise: Matrix3<f64>,
    }

    impl PoseMeasurement for TranslationSensor {
        fn observed(&self) -> Vector3<f64> {
            self.value
        }
        fn noise(&self) -> Matrix3<f64> {
            self.noise
        }
        fn linearize(&self, pose: &Pose3) -> Result<(Vector3<f64>, Matrix3x6)> {
            let t = pose.translation;
            let mut dt = Matrix3x6::zeros();
            dt.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
            dt.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-hat(&t)));
            Ok((self.gain * t, self.gain * dt))
        }
    }

    fn belief(cov: Matrix6<f64>) -> PoseBelief {
        PoseBelief::new(Pose3::identity(), cov).unwrap()
    }

    #[test]
    fn predict_identity_without_noise_is_noop() {
        let b = belief(Matrix6::identity() * 0.3);
        let prior = MotionPrior::new(Pose3::identity(), Matrix6::zeros()).unwrap();
        let p = predict(&b, &prior);
        assert_eq!(p.pose, b.pose);
        assert!((p.covariance - b.covariance).amax() < 1e-15);
    }

    #[test]
    fn predict_identity_adds_process_noise() {
        let b = belief(Matrix6::identity() * 0.3);
        let q = Matrix6::from_diagonal(&Vector6::new(0.1, 0.2, 0.3, 0.01, 0.02, 0.03));
        let p = predict(&b, &MotionPrior::new(Pose3::identity(), q).unwrap());
        assert!((p.covariance - (b.covariance + q)).amax() < 1e-15);
    }

    #[test]
    fn predict_grows_entropy() {
        let b = belief(Matrix6::identity() * 0.01);
        let inc = Pose3::exp(&Twist6(Vector6::new(0.5, 0.0, 1.0, 0.0, 0.1, 0.0)));
        let a = nalgebra::Matrix6::from_fn(|i, j| ((i * 7 + j * 3) % 5) as f64 * 0.01);
        let q = a * a.transpose() + Matrix6::identity() * 1e-4;
        let p = predict(&b, &MotionPrior::new(inc, q).unwrap());
        assert!(p.entropy_bits().unwrap() > b.entropy_bits().unwrap());
        assert!(p.pose.max_abs_diff(&inc) < 1e-15);
    }

    #[test]
    fn zero_information_measurement_leaves_belief() {
        let b = belief(Matrix6::identity() * 0.5);
        let m = TranslationSensor {
            gain: Matrix3::zeros(),
            value: Vector3::zeros(),
            noise: Matrix3::identity(),
        };
        let post = update_single(&b, &m, &EstimatorConfig::default()).unwrap();
        assert_eq!(post.pose, b.pose);
        assert!((post.covariance - b.covariance).amax() < 1e-14);
    }

    #[test]
    fn scalar_bayes_fusion() {
        let b = belief(Matrix6::identity());
        let mut gain = Matrix3::zeros();
        gain[(0, 0)] = 1.0;
        let m = TranslationSensor {
            gain,
            value: Vector3::zeros(),
            noise: Matrix3::identity(),
        };
        let post = update(&b, &[m], &EstimatorConfig::default()).unwrap();
        assert!((post.covariance[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((post.covariance[(1, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_update_matches_batch_of_one() {
        let b = belief(Matrix6::identity() * 0.2);
        let m = TranslationSensor {
            gain: Matrix3::identity(),
            value: Vector3::new(0.1, -0.05, 0.02),
            noise: Matrix3::identity() * 0.5,
        };
        let cfg = EstimatorConfig::default();
        let a = update_single(&b, &m, &cfg).unwrap();
        let c = update(&b, std::slice::from_ref(&m), &cfg).unwrap();
        assert_eq!(a, c);
        // Linear problem: the posterior mean is the Kalman estimate.
        let expected = Vector3::new(0.1, -0.05, 0.02) * (0.2 / 0.7);
        assert!((a.pose.translation - expected).amax() < 1e-9);
    }

    #[test]
    fn empty_update_is_identity() {
        let b = belief(Matrix6::identity());
        let post = update::<TranslationSensor>(&b, &[], &EstimatorConfig::default()).unwrap();
        assert_eq!(post, b);
    }

    #[test]
    fn covariance_validation() {
        let mut bad = Matrix6::identity();
        bad[(0, 1)] = 0.5;
        assert!(PoseBelief::new(Pose3::identity(), bad).is_err());
        assert!(PoseBelief::new(Pose3::identity(), -Matrix6::identity()).is_err());
        assert!(MotionPrior::new(Pose3::identity(), -Matrix6::identity()).is_err());
    }

    #[test]
    fn diverging_measurement_is_reported() {
        struct Adversarial;
        impl PoseMeasurement for Adversarial {
            fn observed(&self) -> Vector3<f64> {
                Vector3::new(1.0, 0.0, 0.0)
            }
            fn noise(&self) -> Matrix3<f64> {
                Matrix3::identity()
            }
            // Jacobian points the wrong way, so every step increases the cost.
            fn linearize(&self, pose: &Pose3) -> Result<(Vector3<f64>, Matrix3x6)> {
                let mut j = Matrix3x6::zeros();
                j[(0, 0)] = -1.0;
                Ok((Vector3::new(pose.translation.x, 0.0, 0.0), j))
            }
        }
        let b = belief(Matrix6::identity());
        let err = update(&b, &[Adversarial], &EstimatorConfig::default());
        assert!(matches!(err, Err(SivoError::DivergedUpdate { .. })));
    }
}
