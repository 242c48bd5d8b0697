//! Deterministic synthetic world: semantic landmark fields, ground-truth
//! trajectories, noisy stereo measurements and simulated MC-dropout samples,
//! plus the closed-loop sequence runner.
//!
//! Every random draw comes from a generator keyed by `(seed, stream, frame,
//! landmark)`, so results never depend on iteration order.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::camera::CameraRig;
use crate::error::{Result, SivoError};
use crate::estimator::{
    predict, update_detailed, update_single, EstimatorConfig, MotionPrior, PoseBelief,
};
use crate::geometry::{Pose3, Rotation3, Twist6};
use crate::infotheory::DiscreteDistribution;
use crate::selection::{
    select_batch, select_greedy, CandidateFeature, CandidateScore, SelectionConfig, Strategy,
};
use crate::semantics::{aggregate_mc, Mobility, SemanticBelief, Taxonomy};

#[derive(Clone, Copy, Debug)]
#[repr(u64)]
enum Stream {
    World = 1,
    PixelNoise = 2,
    Semantics = 3,
    Odometry = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn keyed_rng(seed: u64, stream: Stream, frame: u64, item: u64) -> ChaCha8Rng {
    let mut k = splitmix64(seed);
    k = splitmix64(k ^ stream as u64);
    k = splitmix64(k ^ frame);
    k = splitmix64(k ^ item);
    ChaCha8Rng::seed_from_u64(k)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmark {
    pub id: u64,
    pub position: Vector3<f64>,
    /// Ground-truth semantic class.
    pub class_id: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub landmarks: Vec<Landmark>,
    pub taxonomy: Taxonomy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub landmark_count: usize,
    /// Axis-aligned box `[min, max]` in world metres.
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
    /// One weight per taxonomy class, summing to one.
    #[serde(default = "WorldConfig::default_weights")]
    pub class_weights: Vec<f64>,
    /// When set, static and dynamic weights are rescaled so the dynamic
    /// classes carry exactly this share.
    #[serde(default)]
    pub dynamic_fraction: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl WorldConfig {
    /// Class mix loosely following street scenes: mostly buildings and
    /// vegetation, with parked cars as the dominant dynamic class.
    pub fn default_weights() -> Vec<f64> {
        vec![
            0.06, // road
            0.06, // sidewalk
            0.26, // building
            0.08, // wall/fence
            0.04, // pole
            0.01, // traffic light
            0.02, // traffic sign
            0.14, // vegetation
            0.03, // terrain
            0.02, // sky
            0.03, // person/rider
            0.20, // car
            0.03, // truck/bus
            0.01, // motorcycle/bicycle
            0.01, // void
        ]
    }

    fn effective_weights(&self, taxonomy: &Taxonomy) -> Result<Vec<f64>> {
        if self.class_weights.len() != taxonomy.len() {
            return Err(SivoError::InvalidConfig(format!(
                "{} class weights for a {}-class taxonomy",
                self.class_weights.len(),
                taxonomy.len()
            )));
        }
        if self.class_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SivoError::InvalidConfig("class weights must be non-negative".into()));
        }
        let total: f64 = self.class_weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SivoError::InvalidConfig(format!("class weights sum to {total}")));
        }
        let Some(fraction) = self.dynamic_fraction else {
            return Ok(self.class_weights.clone());
        };
        if !(0.0..=1.0).contains(&fraction) {
            return Err(SivoError::InvalidConfig("dynamic_fraction must lie in [0, 1]".into()));
        }
        let mut weights = self.class_weights.clone();
        for (mobility, share) in [(Mobility::Static, 1.0 - fraction), (Mobility::Dynamic, fraction)] {
            let ids: Vec<usize> = (0..weights.len())
                .filter(|&i| taxonomy.mobility(i) == Some(mobility))
                .collect();
            let group: f64 = ids.iter().map(|&i| weights[i]).sum();
            for &i in &ids {
                weights[i] = if group > 0.0 {
                    weights[i] / group * share
                } else {
                    share / ids.len() as f64
                };
            }
        }
        Ok(weights)
    }
}

pub fn generate_world(cfg: &WorldConfig, taxonomy: &Taxonomy) -> Result<World> {
    if cfg.landmark_count == 0 {
        return Err(SivoError::InvalidConfig("landmark_count must be at least 1".into()));
    }
    if (0..3).any(|i| cfg.bounds_min[i].partial_cmp(&cfg.bounds_max[i]) != Some(std::cmp::Ordering::Less)) {
        return Err(SivoError::InvalidConfig("bounds_min must be below bounds_max".into()));
    }
    let weights = cfg.effective_weights(taxonomy)?;
    let classes = WeightedIndex::new(&weights)
        .map_err(|e| SivoError::InvalidConfig(format!("class weights: {e}")))?;
    let mut rng = keyed_rng(cfg.seed, Stream::World, 0, 0);
    let landmarks = (0..cfg.landmark_count as u64)
        .map(|id| {
            let position = Vector3::from_fn(|i, _| {
                rng.random_range(cfg.bounds_min[i]..cfg.bounds_max[i])
            });
            Landmark {
                id,
                position,
                class_id: classes.sample(&mut rng),
            }
        })
        .collect();
    Ok(World {
        landmarks,
        taxonomy: taxonomy.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryShape {
    StraightLine,
    /// A single circle, turning right from the start heading.
    Loop,
    /// Two tangent circles, right then left.
    Figure8,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SpeedProfile {
    Constant,
    /// Speed oscillates once over the run; `amplitude` in `[0, 1)` is the
    /// relative swing.
    Sinusoidal { amplitude: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub shape: TrajectoryShape,
    /// Path length, metres.
    pub length: f64,
    pub frames: usize,
    #[serde(default = "default_speed")]
    pub speed: SpeedProfile,
}

fn default_speed() -> SpeedProfile {
    SpeedProfile::Constant
}

/// Ground-truth camera-from-world poses. The camera starts at the world
/// origin looking along +z with +y pointing down.
pub fn generate_trajectory(cfg: &TrajectoryConfig) -> Result<Vec<Pose3>> {
    if cfg.frames < 2 {
        return Err(SivoError::InvalidConfig("a trajectory needs at least 2 frames".into()));
    }
    if !(cfg.length.is_finite() && cfg.length > 0.0) {
        return Err(SivoError::InvalidConfig("trajectory length must be positive".into()));
    }
    let amplitude = match cfg.speed {
        SpeedProfile::Constant => 0.0,
        SpeedProfile::Sinusoidal { amplitude } => amplitude,
    };
    if !(0.0..1.0).contains(&amplitude) {
        return Err(SivoError::InvalidConfig("speed amplitude must lie in [0, 1)".into()));
    }
    let tau = std::f64::consts::TAU;
    Ok((0..cfg.frames)
        .map(|k| {
            let u = k as f64 / (cfg.frames - 1) as f64;
            let s = cfg.length * (u - amplitude * (tau * u).sin() / tau);
            let (position, heading) = path_point(cfg.shape, cfg.length, s);
            camera_from_world(&position, &heading)
        })
        .collect())
}

fn path_point(shape: TrajectoryShape, length: f64, s: f64) -> (Vector3<f64>, Vector3<f64>) {
    let tau = std::f64::consts::TAU;
    match shape {
        TrajectoryShape::StraightLine => (Vector3::new(0.0, 0.0, s), Vector3::z()),
        TrajectoryShape::Loop => {
            let r = length / tau;
            let th = s / r;
            (
                Vector3::new(r - r * th.cos(), 0.0, r * th.sin()),
                Vector3::new(th.sin(), 0.0, th.cos()),
            )
        }
        TrajectoryShape::Figure8 => {
            let r = length / (2.0 * tau);
            let half = tau * r;
            if s <= half {
                let th = s / r;
                (
                    Vector3::new(r - r * th.cos(), 0.0, r * th.sin()),
                    Vector3::new(th.sin(), 0.0, th.cos()),
                )
            } else {
                let th = (s - half) / r;
                (
                    Vector3::new(-r + r * th.cos(), 0.0, r * th.sin()),
                    Vector3::new(-th.sin(), 0.0, th.cos()),
                )
            }
        }
    }
}

fn camera_from_world(position: &Vector3<f64>, forward: &Vector3<f64>) -> Pose3 {
    let z = forward.normalize();
    let y = Vector3::y();
    let x = y.cross(&z).normalize();
    let y = z.cross(&x);
    let r_wc = Matrix3::from_columns(&[x, y, z]);
    Pose3::new(Rotation3::orthonormalize(&r_wc), *position).inverse()
}

/// A noisy stereo measurement of one landmark.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimObservation {
    pub landmark: Landmark,
    pub pixels: Vector3<f64>,
}

/// Symmetric square root of a PSD matrix; zero maps to zero.
fn psd_sqrt3(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    if (m - m.transpose()).amax() > 1e-9 {
        return Err(SivoError::NotPositiveDefinite("pixel noise is not symmetric".into()));
    }
    let eig = m.symmetric_eigen();
    if eig.eigenvalues.min() < -1e-12 {
        return Err(SivoError::NotPositiveDefinite("pixel noise has a negative eigenvalue".into()));
    }
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(eig.eigenvectors * Matrix3::from_diagonal(&sqrt) * eig.eigenvectors.transpose())
}

/// Measures every landmark that projects into both images with positive
/// disparity, adding zero-mean Gaussian pixel noise with covariance `noise`.
/// `noise` may be zero, in which case measurements are exact.
pub fn observe_frame(
    world: &World,
    rig: &CameraRig,
    true_pose: &Pose3,
    noise: &Matrix3<f64>,
    seed: u64,
    frame: u64,
) -> Result<Vec<SimObservation>> {
    let exact = noise.iter().all(|v| *v == 0.0);
    let sqrt = psd_sqrt3(noise)?;
    let mut out = Vec::new();
    for lm in &world.landmarks {
        let Ok(z) = rig.project_stereo(true_pose, &lm.position) else {
            continue;
        };
        if !rig.in_image(&z) || z.x - z.z <= rig.disparity_min {
            continue;
        }
        let pixels = if exact {
            z
        } else {
            let mut rng = keyed_rng(seed, Stream::PixelNoise, frame, lm.id);
            let n = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            z + sqrt * n
        };
        out.push(SimObservation {
            landmark: *lm,
            pixels,
        });
    }
    Ok(out)
}

/// Stand-in for a Bayesian segmentation network.
///
/// The draws depend on the landmark and seed only: a scene point looks
/// equally ambiguous to the network every time it is seen.
///
/// Each pass draws a class distribution from a Dirichlet whose mean favours
/// the perceived class. `concentration` is the Dirichlet precision: every
/// other class gets weight 1 and the perceived class `max(1, k - (C - 1))`,
/// so `k <= C` is maximally uncertain and large `k` approaches certainty.
/// Each landmark may scale `k` by a log-normal factor of its own.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutSimConfig {
    pub concentration_static: f64,
    pub concentration_dynamic: f64,
    /// Probability that a landmark is perceived as a uniformly chosen wrong class.
    #[serde(default)]
    pub mislabel_rate: f64,
    /// Standard deviation of `ln k` across landmarks. Zero gives every
    /// landmark of a mobility group the same concentration.
    #[serde(default)]
    pub concentration_log_sd: f64,
}

impl Default for DropoutSimConfig {
    fn default() -> Self {
        DropoutSimConfig {
            concentration_static: 100.0,
            concentration_dynamic: 100.0,
            mislabel_rate: 0.0,
            concentration_log_sd: 0.0,
        }
    }
}

impl DropoutSimConfig {
    pub fn validate(&self) -> Result<()> {
        for k in [self.concentration_static, self.concentration_dynamic] {
            if !(k.is_finite() && k > 0.0) {
                return Err(SivoError::InvalidConfig("concentration must be finite and positive".into()));
            }
        }
        if !(0.0..1.0).contains(&self.mislabel_rate) {
            return Err(SivoError::InvalidConfig("mislabel_rate must lie in [0, 1)".into()));
        }
        if !(self.concentration_log_sd.is_finite() && self.concentration_log_sd >= 0.0) {
            return Err(SivoError::InvalidConfig("concentration_log_sd must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn simulate_mc_samples(
    landmark: &Landmark,
    cfg: &DropoutSimConfig,
    taxonomy: &Taxonomy,
    samples: usize,
    seed: u64,
) -> Result<SemanticBelief> {
    cfg.validate()?;
    if samples == 0 {
        return Err(SivoError::EmptySampleSet);
    }
    let classes = taxonomy.len();
    let mobility = taxonomy.mobility(landmark.class_id).ok_or_else(|| {
        SivoError::InvalidConfig(format!("landmark class {} not in taxonomy", landmark.class_id))
    })?;
    let kappa = match mobility {
        Mobility::Static => cfg.concentration_static,
        Mobility::Dynamic => cfg.concentration_dynamic,
    };
    let mut rng = keyed_rng(seed, Stream::Semantics, 0, landmark.id);
    let kappa = kappa * (cfg.concentration_log_sd * rng.sample::<f64, _>(StandardNormal)).exp();
    let mut perceived = landmark.class_id;
    if classes > 1 && rng.random_bool(cfg.mislabel_rate) {
        let other = rng.random_range(0..classes - 1);
        perceived = if other >= landmark.class_id { other + 1 } else { other };
    }
    let peak = (kappa - (classes as f64 - 1.0)).max(1.0);
    let base = Gamma::new(1.0, 1.0).expect("unit gamma");
    let favoured = Gamma::new(peak, 1.0)
        .map_err(|e| SivoError::InvalidConfig(format!("concentration: {e}")))?;

    let draws = (0..samples)
        .map(|_| {
            let mut g: Vec<f64> = (0..classes)
                .map(|c| {
                    let d = if c == perceived { &favoured } else { &base };
                    d.sample(&mut rng)
                })
                .collect();
            let total: f64 = g.iter().sum();
            g.iter_mut().for_each(|v| *v /= total);
            DiscreteDistribution::new(g)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_mc(draws)
}

/// Noise statistics used by both the simulator (true values) and the
/// estimator (assumed values). Standard deviations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Pixels, applied independently to `u_l`, `v`, `u_r`.
    pub pixel_sigma: f64,
    /// Metres per frame.
    pub odometry_sigma_translation: f64,
    /// Radians per frame.
    pub odometry_sigma_rotation: f64,
}

impl NoiseConfig {
    pub fn pixel_covariance(&self) -> Matrix3<f64> {
        Matrix3::identity() * (self.pixel_sigma * self.pixel_sigma)
    }

    pub fn odometry_covariance(&self) -> Matrix6<f64> {
        diag6(self.odometry_sigma_translation, self.odometry_sigma_rotation)
    }

    fn validate(&self) -> Result<()> {
        let all = [self.pixel_sigma, self.odometry_sigma_translation, self.odometry_sigma_rotation];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SivoError::InvalidConfig("noise sigmas must be non-negative".into()));
        }
        Ok(())
    }
}

fn diag6(translation: f64, rotation: f64) -> Matrix6<f64> {
    let (t, r) = (translation * translation, rotation * rotation);
    Matrix6::from_diagonal(&Vector6::new(t, t, t, r, r, r))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    pub initial_sigma_translation: f64,
    pub initial_sigma_rotation: f64,
    pub process_sigma_translation: f64,
    pub process_sigma_rotation: f64,
    /// Assumed measurement noise, pixels. Must be positive.
    pub measurement_sigma_px: f64,
    #[serde(default)]
    pub gauss_newton: EstimatorConfig,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings {
            initial_sigma_translation: 0.01,
            initial_sigma_rotation: 0.001,
            process_sigma_translation: 0.05,
            process_sigma_rotation: 0.005,
            measurement_sigma_px: 1.0,
            gauss_newton: EstimatorConfig::default(),
        }
    }
}

impl EstimatorSettings {
    fn validate(&self) -> Result<()> {
        let all = [
            self.initial_sigma_translation,
            self.initial_sigma_rotation,
            self.process_sigma_translation,
            self.process_sigma_rotation,
            self.measurement_sigma_px,
        ];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(SivoError::InvalidConfig("estimator sigmas must be positive".into()));
        }
        Ok(())
    }

    pub fn measurement_covariance(&self) -> Matrix3<f64> {
        Matrix3::identity() * (self.measurement_sigma_px * self.measurement_sigma_px)
    }
}

/// Everything the simulated sensors need besides the world and trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorSimConfig {
    pub noise: NoiseConfig,
    pub dropout: DropoutSimConfig,
}

/// A landmark that entered the map, with the class it was selected under.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapPoint {
    pub first_frame: usize,
    pub argmax_class: usize,
    pub true_class: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameReport {
    pub frame: usize,
    pub scores: Vec<CandidateScore>,
    /// Argmax class per candidate, parallel to `scores`.
    pub argmax_classes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceResult {
    pub label: String,
    /// Camera-from-world.
    pub ground_truth: Vec<Pose3>,
    pub beliefs: Vec<PoseBelief>,
    pub reports: Vec<FrameReport>,
    pub registry: BTreeMap<u64, MapPoint>,
    /// Frames whose Gauss-Newton update met the step tolerance.
    pub converged_frames: usize,
    pub updated_frames: usize,
}

impl SequenceResult {
    pub fn estimated(&self) -> Vec<Pose3> {
        self.beliefs.iter().map(|b| b.pose).collect()
    }

    pub fn map_points(&self) -> usize {
        self.registry.len()
    }

    /// Distance between the final estimated and true camera centres, metres.
    pub fn final_position_error(&self) -> f64 {
        let (Some(est), Some(gt)) = (self.beliefs.last(), self.ground_truth.last()) else {
            return 0.0;
        };
        (est.pose.inverse().translation - gt.inverse().translation).norm()
    }
}

/// Predict, observe, select, update for every frame of `trajectory`.
///
/// Frame 0 starts from the true pose. Each later frame predicts with the
/// true increment corrupted by odometry noise, then fuses whichever
/// candidates the configured strategy keeps. Landmark positions are known.
pub fn run_sequence(
    world: &World,
    trajectory: &[Pose3],
    rig: &CameraRig,
    selection: &SelectionConfig,
    estimator: &EstimatorSettings,
    sensors: &SensorSimConfig,
    seed: u64,
) -> Result<SequenceResult> {
    selection.validate()?;
    estimator.validate()?;
    sensors.noise.validate()?;
    sensors.dropout.validate()?;
    rig.validate()?;
    let Some(first) = trajectory.first() else {
        return Err(SivoError::InvalidConfig("empty trajectory".into()));
    };

    let pixel_noise = sensors.noise.pixel_covariance();
    let odometry_sqrt = sensors.noise.odometry_covariance().map(f64::sqrt);
    let assumed_q = estimator.measurement_covariance();
    let process = diag6(estimator.process_sigma_translation, estimator.process_sigma_rotation);
    let gn = estimator.gauss_newton;

    let mut belief = PoseBelief::new(
        *first,
        diag6(estimator.initial_sigma_translation, estimator.initial_sigma_rotation),
    )?;
    let mut result = SequenceResult {
        label: selection.label(),
        ground_truth: trajectory.to_vec(),
        beliefs: Vec::with_capacity(trajectory.len()),
        reports: Vec::with_capacity(trajectory.len()),
        registry: BTreeMap::new(),
        converged_frames: 0,
        updated_frames: 0,
    };

    for (k, truth) in trajectory.iter().enumerate() {
        let frame = k as u64;
        let predicted = if k == 0 {
            belief
        } else {
            let true_increment = truth.compose(&trajectory[k - 1].inverse());
            let mut rng = keyed_rng(seed, Stream::Odometry, frame, 0);
            let n = Vector6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let increment = Pose3::exp(&Twist6(odometry_sqrt * n)).compose(&true_increment);
            predict(&belief, &MotionPrior::new(increment, process)?)
        };

        let observations = observe_frame(world, rig, truth, &pixel_noise, seed, frame)?;
        let candidates = observations
            .iter()
            .map(|o| {
                let semantics = simulate_mc_samples(
                    &o.landmark,
                    &sensors.dropout,
                    &world.taxonomy,
                    selection.mc_samples,
                    seed,
                )?;
                CandidateFeature::from_stereo(
                    rig,
                    &predicted.pose,
                    o.landmark.id,
                    o.landmark.position,
                    o.pixels,
                    assumed_q,
                    semantics,
                )
            })
            .collect::<Result<Vec<_>>>()?;

        let diverged = |e: SivoError| SivoError::EstimatorDiverged {
            frame: k,
            source: Box::new(e),
        };
        let scores = match selection.strategy {
            Strategy::DavisonGreedy => {
                let out = select_greedy(&predicted, &candidates, selection, &world.taxonomy, |b, c| {
                    update_single(b, &c.stereo_measurement(rig), &gn)
                })
                .map_err(diverged)?;
                if !out.order.is_empty() {
                    result.updated_frames += 1;
                    result.converged_frames += 1;
                }
                belief = out.belief;
                out.scores
            }
            _ => {
                let scores = select_batch(&predicted, &candidates, selection, &world.taxonomy)?;
                let measurements: Vec<_> = candidates
                    .iter()
                    .zip(&scores)
                    .filter(|(_, s)| s.selected)
                    .map(|(c, _)| c.stereo_measurement(rig))
                    .collect();
                if measurements.is_empty() {
                    belief = predicted;
                } else {
                    let outcome = update_detailed(&predicted, &measurements, &gn).map_err(diverged)?;
                    result.updated_frames += 1;
                    if outcome.converged {
                        result.converged_frames += 1;
                    }
                    belief = outcome.belief;
                }
                scores
            }
        };

        let argmax_classes: Vec<usize> = candidates.iter().map(|c| c.semantics.argmax_class()).collect();
        for ((score, obs), &argmax) in scores.iter().zip(&observations).zip(&argmax_classes) {
            if score.selected {
                result.registry.entry(score.landmark_id).or_insert(MapPoint {
                    first_frame: k,
                    argmax_class: argmax,
                    true_class: obs.landmark.class_id,
                });
            }
        }
        result.beliefs.push(belief);
        result.reports.push(FrameReport {
            frame: k,
            scores,
            argmax_classes,
        });
    }
    Ok(result)
}
