//! Information-theoretic feature selection with classification uncertainty.
//!
//! Each candidate measurement `z_i` is scored by the mutual information it
//! shares with the pose, `I(x; z_i)`, computed from the joint covariance of
//! the pose and the linearized measurement. The semantic score subtracts the
//! entropy of the MC-dropout class distribution:
//!
//! ```text
//! dH_i = I(x; z_i) - H(c_i | I, D)
//! ```
//!
//! A feature is kept when its most likely class is static and `dH_i` clears
//! the configured threshold (bits). With zero classification entropy the rule
//! collapses to plain mutual-information thresholding.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3, Matrix6, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{check_spd3, CameraRig, Matrix3x6, StereoObservation};
use crate::error::{Result, SivoError};
use crate::estimator::{check_spd6, PoseBelief, StereoMeasurement};
use crate::geometry::Pose3;
use crate::infotheory::gaussian_mutual_information_split;
use crate::semantics::{SemanticBelief, Taxonomy};

pub type Matrix9 = SMatrix<f64, 9, 9>;

/// Prediction and pose Jacobian of one candidate at the current estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linearization {
    pub predicted: Vector3<f64>,
    pub jacobian: Matrix3x6,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateFeature {
    pub landmark_id: u64,
    pub landmark_position: Vector3<f64>,
    /// Err when the landmark could not be projected at the current estimate.
    pub projection: Result<Linearization>,
    /// The measured `(u_l, v, u_r)`.
    pub observed: Vector3<f64>,
    pub noise: Matrix3<f64>,
    pub semantics: SemanticBelief,
}

impl CandidateFeature {
    /// Linearizes a stereo landmark observation at `pose`.
    pub fn from_stereo(
        rig: &CameraRig,
        pose: &Pose3,
        landmark_id: u64,
        landmark_position: Vector3<f64>,
        observed: Vector3<f64>,
        noise: Matrix3<f64>,
        semantics: SemanticBelief,
    ) -> Result<Self> {
        check_spd3(&noise)?;
        let projection = rig
            .linearize(pose, &landmark_position)
            .map(|(predicted, jacobian)| Linearization {
                predicted,
                jacobian,
            });
        Ok(CandidateFeature {
            landmark_id,
            landmark_position,
            projection,
            observed,
            noise,
            semantics,
        })
    }

    /// A candidate with an explicit Jacobian, independent of any camera.
    pub fn from_jacobian(
        landmark_id: u64,
        jacobian: Matrix3x6,
        noise: Matrix3<f64>,
        semantics: SemanticBelief,
    ) -> Result<Self> {
        check_spd3(&noise)?;
        if !jacobian.iter().all(|v| v.is_finite()) {
            return Err(SivoError::InvalidConfig("Jacobian has non-finite entries".into()));
        }
        Ok(CandidateFeature {
            landmark_id,
            landmark_position: Vector3::zeros(),
            projection: Ok(Linearization {
                predicted: Vector3::zeros(),
                jacobian,
            }),
            observed: Vector3::zeros(),
            noise,
            semantics,
        })
    }

    pub fn linearization(&self) -> Result<&Linearization> {
        self.projection.as_ref().map_err(Clone::clone)
    }

    pub fn is_visible(&self) -> bool {
        self.projection.is_ok()
    }

    pub fn stereo_measurement(&self, rig: &CameraRig) -> StereoMeasurement {
        StereoMeasurement {
            rig: *rig,
            landmark: self.landmark_position,
            observation: StereoObservation {
                pixels: self.observed,
                noise: self.noise,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectionReason {
    None,
    DynamicClass,
    BelowThreshold,
    BehindCamera,
    /// Passed the threshold but fell outside `max_selected`.
    CapReached,
}

impl RejectionReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectionReason::None => "none",
            RejectionReason::DynamicClass => "dynamic_class",
            RejectionReason::BelowThreshold => "below_threshold",
            RejectionReason::BehindCamera => "behind_camera",
            RejectionReason::CapReached => "cap_reached",
        }
    }
}

impl FromStr for RejectionReason {
    type Err = SivoError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => RejectionReason::None,
            "dynamic_class" => RejectionReason::DynamicClass,
            "below_threshold" => RejectionReason::BelowThreshold,
            "behind_camera" => RejectionReason::BehindCamera,
            "cap_reached" => RejectionReason::CapReached,
            other => return Err(SivoError::InvalidConfig(format!("unknown reason {other:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateScore {
    pub landmark_id: u64,
    pub mutual_information_bits: f64,
    pub classification_entropy_bits: f64,
    /// Always `mutual_information_bits - classification_entropy_bits`; may be negative.
    pub delta_h_bits: f64,
    pub selected: bool,
    pub rejection_reason: RejectionReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Keep every visible feature (the unfiltered baseline).
    #[serde(rename = "all")]
    AllFeatures,
    /// Threshold on mutual information alone, ignoring semantics.
    #[serde(rename = "mi")]
    MiOnly,
    /// Semantic criterion, one pass, update afterwards.
    #[serde(rename = "sivo-batch", alias = "sivo")]
    KaessBatch,
    /// Semantic criterion, pick-update-rescore loop.
    #[serde(rename = "sivo-greedy")]
    DavisonGreedy,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::AllFeatures => "all",
            Strategy::MiOnly => "mi",
            Strategy::KaessBatch => "sivo-batch",
            Strategy::DavisonGreedy => "sivo-greedy",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = SivoError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Strategy::AllFeatures),
            "mi" => Ok(Strategy::MiOnly),
            "sivo" | "sivo-batch" => Ok(Strategy::KaessBatch),
            "sivo-greedy" => Ok(Strategy::DavisonGreedy),
            other => Err(SivoError::InvalidConfig(format!(
                "unknown strategy {other:?} (expected all, mi, sivo-batch or sivo-greedy)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    pub threshold_bits: f64,
    pub strategy: Strategy,
    pub mc_samples: usize,
    #[serde(default)]
    pub max_selected: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            threshold_bits: 2.0,
            strategy: Strategy::KaessBatch,
            mc_samples: 6,
            max_selected: None,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.threshold_bits.is_finite() {
            return Err(SivoError::InvalidConfig("threshold_bits must be finite".into()));
        }
        if self.mc_samples == 0 {
            return Err(SivoError::InvalidConfig("mc_samples must be at least 1".into()));
        }
        Ok(())
    }

    /// Run label: `BS{N}E{dH}` for the semantic strategies.
    pub fn label(&self) -> String {
        let bits = format_bits(self.threshold_bits);
        match self.strategy {
            Strategy::AllFeatures => "ALL".to_string(),
            Strategy::MiOnly => format!("MIE{bits}"),
            Strategy::KaessBatch => format!("BS{}E{}", self.mc_samples, bits),
            Strategy::DavisonGreedy => format!("BS{}E{}-greedy", self.mc_samples, bits),
        }
    }
}

fn format_bits(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Joint covariance of the pose and every candidate measurement under the
/// linearized model, `(6 + 3n) x (6 + 3n)`.
pub fn lifted_covariance(
    pose_cov: &Matrix6<f64>,
    candidates: &[CandidateFeature],
) -> Result<DMatrix<f64>> {
    check_spd6(pose_cov)?;
    let jacobians = candidates
        .iter()
        .map(|c| c.linearization().map(|l| l.jacobian))
        .collect::<Result<Vec<_>>>()?;
    let n = 6 + 3 * candidates.len();
    let mut lifted = DMatrix::zeros(n, n);
    lifted.view_mut((0, 0), (6, 6)).copy_from(pose_cov);
    for (i, (ji, ci)) in jacobians.iter().zip(candidates).enumerate() {
        let row = 6 + 3 * i;
        let cross = ji * pose_cov;
        lifted.view_mut((row, 0), (3, 6)).copy_from(&cross);
        lifted.view_mut((0, row), (6, 3)).copy_from(&cross.transpose());
        for (j, jj) in jacobians.iter().enumerate() {
            let col = 6 + 3 * j;
            let mut block = cross * jj.transpose();
            if i == j {
                block += ci.noise;
            }
            lifted.view_mut((row, col), (3, 3)).copy_from(&block);
        }
    }
    Ok((&lifted + lifted.transpose()) * 0.5)
}

/// `[[S, S J^T], [J S, J S J^T + Q]]` for one candidate.
pub fn marginal_covariance(pose_cov: &Matrix6<f64>, candidate: &CandidateFeature) -> Result<Matrix9> {
    check_spd6(pose_cov)?;
    let j = candidate.linearization()?.jacobian;
    Ok(marginal_unchecked(pose_cov, &j, &candidate.noise))
}

fn marginal_unchecked(pose_cov: &Matrix6<f64>, j: &Matrix3x6, noise: &Matrix3<f64>) -> Matrix9 {
    let cross = j * pose_cov;
    let mut m = Matrix9::zeros();
    m.fixed_view_mut::<6, 6>(0, 0).copy_from(pose_cov);
    m.fixed_view_mut::<3, 6>(6, 0).copy_from(&cross);
    m.fixed_view_mut::<6, 3>(0, 6).copy_from(&cross.transpose());
    let zz = cross * j.transpose() + noise;
    m.fixed_view_mut::<3, 3>(6, 6)
        .copy_from(&((zz + zz.transpose()) * 0.5));
    m
}

/// `I(x; z_i)` in bits from the candidate's marginal covariance.
pub fn mutual_information_score(pose_cov: &Matrix6<f64>, candidate: &CandidateFeature) -> Result<f64> {
    let m = marginal_covariance(pose_cov, candidate)?;
    mi_of_marginal(&m)
}

fn mi_of_marginal(m: &Matrix9) -> Result<f64> {
    let d = DMatrix::from_column_slice(9, 9, m.as_slice());
    gaussian_mutual_information_split(&d, 6)
}

/// Computes the score components and the verdict for `strategy`. Ties on the
/// threshold (`value == threshold`) are selected.
fn score_with(
    pose_cov: &Matrix6<f64>,
    candidate: &CandidateFeature,
    strategy: Strategy,
    threshold_bits: f64,
    taxonomy: &Taxonomy,
) -> Result<CandidateScore> {
    let entropy = candidate.semantics.entropy_bits();
    let mut score = CandidateScore {
        landmark_id: candidate.landmark_id,
        mutual_information_bits: 0.0,
        classification_entropy_bits: entropy,
        delta_h_bits: -entropy,
        selected: false,
        rejection_reason: RejectionReason::BehindCamera,
    };
    let Ok(lin) = &candidate.projection else {
        return Ok(score);
    };
    let mi = mi_of_marginal(&marginal_unchecked(pose_cov, &lin.jacobian, &candidate.noise))?;
    score.mutual_information_bits = mi;
    score.delta_h_bits = mi - entropy;

    let (passes, reason) = match strategy {
        Strategy::AllFeatures => (true, RejectionReason::None),
        Strategy::MiOnly => (mi >= threshold_bits, RejectionReason::BelowThreshold),
        Strategy::KaessBatch | Strategy::DavisonGreedy => {
            if !taxonomy.is_admissible(&candidate.semantics) {
                (false, RejectionReason::DynamicClass)
            } else {
                (score.delta_h_bits >= threshold_bits, RejectionReason::BelowThreshold)
            }
        }
    };
    score.selected = passes;
    score.rejection_reason = if passes { RejectionReason::None } else { reason };
    Ok(score)
}

/// The semantic score for one candidate against the configured threshold.
pub fn sivo_score(
    pose_cov: &Matrix6<f64>,
    candidate: &CandidateFeature,
    threshold_bits: f64,
    taxonomy: &Taxonomy,
) -> Result<CandidateScore> {
    check_spd6(pose_cov)?;
    score_with(pose_cov, candidate, Strategy::KaessBatch, threshold_bits, taxonomy)
}

/// Value ranked by the cap: mutual information for the semantics-blind
/// strategies, `dH` otherwise.
fn ranking_value(score: &CandidateScore, strategy: Strategy) -> f64 {
    match strategy {
        Strategy::AllFeatures | Strategy::MiOnly => score.mutual_information_bits,
        Strategy::KaessBatch | Strategy::DavisonGreedy => score.delta_h_bits,
    }
}

/// One pass over all candidates against the same covariance. Output order
/// follows input order. `DavisonGreedy` is scored here as its batch
/// counterpart; use [`select_greedy`] for the sequential variant.
pub fn select_batch(
    belief: &PoseBelief,
    candidates: &[CandidateFeature],
    config: &SelectionConfig,
    taxonomy: &Taxonomy,
) -> Result<Vec<CandidateScore>> {
    config.validate()?;
    check_spd6(&belief.covariance)?;
    let mut scores = candidates
        .iter()
        .map(|c| score_with(&belief.covariance, c, config.strategy, config.threshold_bits, taxonomy))
        .collect::<Result<Vec<_>>>()?;

    if let Some(cap) = config.max_selected {
        let mut survivors: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].selected).collect();
        if survivors.len() > cap {
            // Stable sort keeps input order among equal values.
            survivors.sort_by(|&a, &b| {
                ranking_value(&scores[b], config.strategy)
                    .total_cmp(&ranking_value(&scores[a], config.strategy))
            });
            for &i in &survivors[cap..] {
                scores[i].selected = false;
                scores[i].rejection_reason = RejectionReason::CapReached;
            }
        }
    }
    Ok(scores)
}

/// Result of the sequential selector: scores in input order and the belief
/// after all single-measurement updates.
#[derive(Clone, Debug, PartialEq)]
pub struct GreedySelection {
    pub scores: Vec<CandidateScore>,
    pub belief: PoseBelief,
    /// Indices into the candidate list, in the order they were picked.
    pub order: Vec<usize>,
}

/// Picks the best remaining candidate, applies `updater`, re-scores the rest
/// against the reduced covariance and repeats until the best `dH` falls below
/// the threshold or the cap is reached. Jacobians stay at their original
/// linearization point; only the covariance changes between rounds.
pub fn select_greedy<F>(
    belief: &PoseBelief,
    candidates: &[CandidateFeature],
    config: &SelectionConfig,
    taxonomy: &Taxonomy,
    mut updater: F,
) -> Result<GreedySelection>
where
    F: FnMut(&PoseBelief, &CandidateFeature) -> Result<PoseBelief>,
{
    config.validate()?;
    check_spd6(&belief.covariance)?;
    let threshold = config.threshold_bits;
    let score = |cov: &Matrix6<f64>, c: &CandidateFeature| {
        score_with(cov, c, Strategy::DavisonGreedy, threshold, taxonomy)
    };

    let mut current = *belief;
    let mut scores = candidates
        .iter()
        .map(|c| score(&current.covariance, c))
        .collect::<Result<Vec<_>>>()?;
    let mut open: Vec<usize> = (0..candidates.len())
        .filter(|&i| {
            !matches!(
                scores[i].rejection_reason,
                RejectionReason::BehindCamera | RejectionReason::DynamicClass
            )
        })
        .collect();
    let mut order = Vec::new();
    let cap = config.max_selected.unwrap_or(usize::MAX);

    loop {
        // Argmax dH; ties resolve to the lowest candidate index.
        let best = open.iter().copied().fold(None, |best: Option<usize>, i| match best {
            Some(b) if scores[b].delta_h_bits >= scores[i].delta_h_bits => Some(b),
            _ => Some(i),
        });
        let Some(best) = best else { break };
        if scores[best].delta_h_bits < threshold {
            break;
        }
        if order.len() >= cap {
            for &i in &open {
                if scores[i].delta_h_bits >= threshold {
                    scores[i].rejection_reason = RejectionReason::CapReached;
                }
            }
            break;
        }
        current = updater(&current, &candidates[best])?;
        check_spd6(&current.covariance)?;
        scores[best].selected = true;
        scores[best].rejection_reason = RejectionReason::None;
        order.push(best);
        open.retain(|&i| i != best);
        for &i in &open {
            scores[i] = score(&current.covariance, &candidates[i])?;
        }
    }

    for &i in &open {
        scores[i].selected = false;
        if scores[i].rejection_reason == RejectionReason::None {
            scores[i].rejection_reason = RejectionReason::BelowThreshold;
        }
    }
    Ok(GreedySelection {
        scores,
        belief: current,
        order,
    })
}
