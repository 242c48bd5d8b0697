//! KITTI pose files, per-feature semantics CSV, selection reports and the
//! odometry error metrics.
//!
//! All writers use `\n` line endings and Rust's shortest round-trip float
//! formatting, which is locale independent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::Matrix3x4;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SivoError};
use crate::geometry::{orthonormality_drift, Pose3, Rotation3};
use crate::infotheory::DiscreteDistribution;
use crate::selection::{CandidateScore, RejectionReason};
use crate::semantics::{aggregate_mc, SemanticBelief};
use crate::sim::FrameReport;

/// Beyond this the rotation block is projected back onto SO(3) and flagged.
pub const REORTHONORMALIZE_DRIFT: f64 = 1e-6;
/// Beyond this the file is rejected.
pub const MAX_ROTATION_DRIFT: f64 = 1e-3;

/// Subsequence lengths of the KITTI odometry benchmark, metres.
pub const SUBSEQUENCE_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

/// World-from-camera poses indexed by frame.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub frames: Vec<(usize, Pose3)>,
    /// Frames whose rotation drifted past [`REORTHONORMALIZE_DRIFT`] and were repaired.
    pub reorthonormalized: Vec<usize>,
}

impl TrajectoryRecord {
    /// Builds a record from consecutive world-from-camera poses starting at frame 0.
    pub fn from_poses(poses: impl IntoIterator<Item = Pose3>) -> Self {
        TrajectoryRecord {
            frames: poses.into_iter().enumerate().collect(),
            reorthonormalized: Vec::new(),
        }
    }

    /// The simulator stores camera-from-world; KITTI files hold the inverse.
    pub fn from_camera_from_world(poses: &[Pose3]) -> Self {
        Self::from_poses(poses.iter().map(Pose3::inverse))
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn parse_kitti_poses(text: &str) -> Result<TrajectoryRecord> {
    let mut record = TrajectoryRecord::default();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let malformed = |reason: String| SivoError::MalformedLine {
            line: line_no,
            reason,
        };
        let values = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| malformed(format!("{tok:?} is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != 12 {
            return Err(malformed(format!("expected 12 numbers, found {}", values.len())));
        }
        let m = Matrix3x4::from_row_slice(&values);
        let r = m.fixed_view::<3, 3>(0, 0).into_owned();
        let t = m.fixed_view::<3, 1>(0, 3).into_owned();
        let drift = orthonormality_drift(&r);
        if drift > MAX_ROTATION_DRIFT || r.determinant() <= 0.0 {
            return Err(SivoError::NonRigidRotation { line: line_no, drift });
        }
        let rotation = match Rotation3::from_matrix(r) {
            Ok(rot) => rot,
            Err(_) => Rotation3::orthonormalize(&r),
        };
        if drift > REORTHONORMALIZE_DRIFT {
            record.reorthonormalized.push(k);
        }
        record.frames.push((k, Pose3::new(rotation, t)));
    }
    Ok(record)
}

/// One line per pose, in record order. Frame indices are implicit.
pub fn write_kitti_poses(record: &TrajectoryRecord) -> String {
    let mut out = String::new();
    for (_, pose) in &record.frames {
        let m = pose.to_matrix3x4();
        let mut first = true;
        for r in 0..3 {
            for c in 0..4 {
                if !first {
                    out.push(' ');
                }
                first = false;
                write!(out, "{}", m[(r, c)]).expect("write to string");
            }
        }
        out.push('\n');
    }
    out
}

/// Semantic beliefs keyed by `(frame, feature id)`.
pub type SemanticsTable = BTreeMap<(u64, u64), SemanticBelief>;

/// Reads `frame,feature,sample,p_0,...,p_{C-1}` rows and groups them into
/// MC beliefs. Sample indices only label rows; gaps and order are ignored.
pub fn parse_semantics_csv(text: &str) -> Result<SemanticsTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| SivoError::InvalidSemanticsRow { row: 0, reason: e.to_string() })?
        .clone();
    let classes = header.len().saturating_sub(3);
    let header_ok = header.len() > 3
        && header.get(0) == Some("frame")
        && header.get(1) == Some("feature")
        && header.get(2) == Some("sample")
        && (0..classes).all(|c| header.get(3 + c) == Some(format!("p_{c}").as_str()));
    if !header_ok {
        return Err(SivoError::InvalidSemanticsRow {
            row: 0,
            reason: "header must be frame,feature,sample,p_0,...,p_{C-1}".into(),
        });
    }

    let mut grouped: BTreeMap<(u64, u64), Vec<DiscreteDistribution>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let bad = |reason: String| SivoError::InvalidSemanticsRow { row, reason };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != header.len() {
            return Err(SivoError::InconsistentC {
                expected: classes,
                found: rec.len().saturating_sub(3),
            });
        }
        let int = |j: usize| {
            rec[j]
                .parse::<u64>()
                .map_err(|_| bad(format!("{:?} is not a non-negative integer", &rec[j])))
        };
        let key = (int(0)?, int(1)?);
        int(2)?;
        let probs = (3..rec.len())
            .map(|j| rec[j].parse::<f64>().map_err(|_| bad(format!("{:?} is not a number", &rec[j]))))
            .collect::<Result<Vec<f64>>>()?;
        let dist = DiscreteDistribution::new(probs).map_err(|e| bad(e.to_string()))?;
        grouped.entry(key).or_default().push(dist);
    }
    grouped
        .into_iter()
        .map(|(key, samples)| Ok((key, aggregate_mc(samples)?)))
        .collect()
}

pub fn write_semantics_csv(table: &SemanticsTable) -> Result<String> {
    let classes = table.values().next().map_or(0, SemanticBelief::class_count);
    let mut out = String::from("frame,feature,sample");
    for c in 0..classes {
        write!(out, ",p_{c}").expect("write to string");
    }
    out.push('\n');
    for (&(frame, feature), belief) in table {
        if belief.class_count() != classes {
            return Err(SivoError::InconsistentC {
                expected: classes,
                found: belief.class_count(),
            });
        }
        for (s, sample) in belief.samples().iter().enumerate() {
            write!(out, "{frame},{feature},{s}").expect("write to string");
            for p in sample.probabilities() {
                write!(out, ",{p}").expect("write to string");
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// One row of the per-frame selection report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportRow {
    pub frame: usize,
    pub score: CandidateScore,
    pub argmax_class: usize,
}

pub const REPORT_HEADER: &str = "frame,landmark_id,argmax_class,mutual_information_bits,classification_entropy_bits,delta_h_bits,selected,rejection_reason";

pub fn write_selection_report(frames: &[FrameReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for f in frames {
        for (s, class) in f.scores.iter().zip(&f.argmax_classes) {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                f.frame,
                s.landmark_id,
                class,
                s.mutual_information_bits,
                s.classification_entropy_bits,
                s.delta_h_bits,
                u8::from(s.selected),
                s.rejection_reason.as_str()
            )
            .expect("write to string");
        }
    }
    out
}

pub fn parse_selection_report(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == REPORT_HEADER => {}
        _ => {
            return Err(SivoError::MalformedLine {
                line: 1,
                reason: "missing selection report header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, line)| {
            let bad = |reason: &str| SivoError::MalformedLine {
                line: k + 1,
                reason: reason.to_string(),
            };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 8 {
                return Err(bad("expected 8 fields"));
            }
            let float = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
            let selected = match f[6] {
                "1" | "true" => true,
                "0" | "false" => false,
                _ => return Err(bad("selected must be 0 or 1")),
            };
            Ok(ReportRow {
                frame: f[0].parse().map_err(|_| bad("bad frame"))?,
                argmax_class: f[2].parse().map_err(|_| bad("bad class"))?,
                score: CandidateScore {
                    landmark_id: f[1].parse().map_err(|_| bad("bad landmark id"))?,
                    mutual_information_bits: float(f[3])?,
                    classification_entropy_bits: float(f[4])?,
                    delta_h_bits: float(f[5])?,
                    selected,
                    rejection_reason: f[7]
                        .parse::<RejectionReason>()
                        .map_err(|_| bad("unknown rejection reason"))?,
                },
            })
        })
        .collect()
}

/// Unique landmarks ever selected.
pub fn count_map_points(rows: &[ReportRow]) -> usize {
    rows.iter()
        .filter(|r| r.score.selected)
        .map(|r| r.score.landmark_id)
        .collect::<BTreeSet<_>>()
        .len()
}

pub fn map_reduction(baseline: usize, test: usize) -> Result<f64> {
    if baseline == 0 {
        return Err(SivoError::ZeroBaseline);
    }
    Ok(100.0 * (1.0 - test as f64 / baseline as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthError {
    pub length_m: f64,
    pub translation_error_percent: f64,
    pub rotation_error_deg_per_m: f64,
    pub subsequences: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `None` when no subsequence of any length fits in the trajectory.
    pub translation_error_percent: Option<f64>,
    pub rotation_error_deg_per_m: Option<f64>,
    pub per_length: Vec<LengthError>,
    /// Lengths dropped because the trajectory is too short for them.
    pub missing_lengths_m: Vec<f64>,
    pub map_points_baseline: Option<usize>,
    pub map_points_test: Option<usize>,
    pub map_reduction_percent: Option<f64>,
}

impl ErrorReport {
    pub fn with_map_points(mut self, baseline: usize, test: usize) -> Result<Self> {
        self.map_reduction_percent = Some(map_reduction(baseline, test)?);
        self.map_points_baseline = Some(baseline);
        self.map_points_test = Some(test);
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Relative-pose errors over 100..800 m subsequences, starting every
/// `stride` frames. Only frames present in both records are used.
pub fn kitti_errors(gt: &TrajectoryRecord, est: &TrajectoryRecord, stride: usize) -> Result<ErrorReport> {
    let stride = stride.max(1);
    let est_by_frame: BTreeMap<usize, &Pose3> = est.frames.iter().map(|(k, p)| (*k, p)).collect();
    let pairs: Vec<(&Pose3, &Pose3)> = gt
        .frames
        .iter()
        .filter_map(|(k, g)| est_by_frame.get(k).map(|e| (g, *e)))
        .collect();
    if pairs.is_empty() {
        return Err(SivoError::NoOverlap);
    }

    let mut dist = Vec::with_capacity(pairs.len());
    let mut acc = 0.0;
    for (i, (g, _)) in pairs.iter().enumerate() {
        if i > 0 {
            acc += (g.translation - pairs[i - 1].0.translation).norm();
        }
        dist.push(acc);
    }

    let mut per_length = Vec::new();
    let mut missing = Vec::new();
    for &length in &SUBSEQUENCE_LENGTHS {
        let (mut t_sum, mut r_sum, mut n) = (0.0, 0.0, 0usize);
        for first in (0..pairs.len()).step_by(stride) {
            let Some(last) = (first..pairs.len()).find(|&j| dist[j] - dist[first] >= length) else {
                break;
            };
            let (g0, e0) = pairs[first];
            let (g1, e1) = pairs[last];
            let gt_rel = g0.inverse().compose(g1);
            let est_rel = e0.inverse().compose(e1);
            let err = gt_rel.inverse().compose(&est_rel);
            t_sum += err.translation.norm() / length;
            r_sum += rotation_distance(&gt_rel.rotation, &est_rel.rotation) / length;
            n += 1;
        }
        if n == 0 {
            missing.push(length);
        } else {
            per_length.push(LengthError {
                length_m: length,
                translation_error_percent: 100.0 * t_sum / n as f64,
                rotation_error_deg_per_m: (r_sum / n as f64).to_degrees(),
                subsequences: n,
            });
        }
    }

    let mean = |f: fn(&LengthError) -> f64| {
        (!per_length.is_empty()).then(|| per_length.iter().map(f).sum::<f64>() / per_length.len() as f64)
    };
    Ok(ErrorReport {
        translation_error_percent: mean(|l| l.translation_error_percent),
        rotation_error_deg_per_m: mean(|l| l.rotation_error_deg_per_m),
        per_length,
        missing_lengths_m: missing,
        map_points_baseline: None,
        map_points_test: None,
        map_reduction_percent: None,
    })
}

/// Angle of `a^T b` from the chordal distance `|a - b|_F = 2 sqrt(2) sin(theta / 2)`.
/// Unlike the arccos of the trace this is exactly zero for equal rotations
/// and keeps full precision for small angles.
fn rotation_distance(a: &Rotation3, b: &Rotation3) -> f64 {
    let chord = (a.matrix() - b.matrix()).norm() / (2.0 * std::f64::consts::SQRT_2);
    2.0 * chord.clamp(0.0, 1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Twist6;
    use nalgebra::{Vector3, Vector6};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose3 {
        let v = Vector6::from_fn(|i, _| {
            if i < 3 {
                rng.random_range(-100.0..100.0)
            } else {
                rng.random_range(-3.0..3.0)
            }
        });
        Pose3::exp(&Twist6(v))
    }

    #[test]
    fn chordal_angle_matches_axis_angle() {
        for theta in [1e-7, 0.3, 2.0, 3.1] {
            let r = Rotation3::exp(&(Vector3::new(1.0, -2.0, 0.5).normalize() * theta));
            let d = rotation_distance(&Rotation3::identity(), &r);
            assert!((d - theta).abs() < 1e-12 * theta.max(1.0) + 1e-15, "{theta} {d}");
        }
    }

    #[test]
    fn identity_line() {
        let rec = parse_kitti_poses("1 0 0 0 0 1 0 0 0 0 1 0").unwrap();
        assert_eq!(rec.len(), 1);
        assert_eq!(rec.frames[0].0, 0);
        assert_eq!(rec.frames[0].1.max_abs_diff(&Pose3::identity()), 0.0);
        assert!(rec.reorthonormalized.is_empty());
    }

    #[test]
    fn short_line_is_malformed() {
        let err = parse_kitti_poses("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1").unwrap_err();
        assert!(matches!(err, SivoError::MalformedLine { line: 2, .. }));
        assert!(matches!(
            parse_kitti_poses("1 0 0 0 0 1 0 0 0 0 1 nan").unwrap_err(),
            SivoError::MalformedLine { line: 1, .. }
        ));
    }

    #[test]
    fn drift_thresholds() {
        let slightly = "1.00001 0 0 0 0 1 0 0 0 0 1 0";
        let rec = parse_kitti_poses(slightly).unwrap();
        assert_eq!(rec.reorthonormalized, vec![0]);
        assert!(orthonormality_drift(rec.frames[0].1.rotation.matrix()) < 1e-12);
        assert!(matches!(
            parse_kitti_poses("1.01 0 0 0 0 1 0 0 0 0 1 0").unwrap_err(),
            SivoError::NonRigidRotation { line: 1, .. }
        ));
        assert!(matches!(
            parse_kitti_poses("-1 0 0 0 0 1 0 0 0 0 1 0").unwrap_err(),
            SivoError::NonRigidRotation { .. }
        ));
    }

    #[test]
    fn pose_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rec = TrajectoryRecord::from_poses((0..200).map(|_| random_pose(&mut rng)));
        let text = write_kitti_poses(&rec);
        assert!(text.ends_with('\n') && !text.contains('\r'));
        let back = parse_kitti_poses(&text).unwrap();
        assert_eq!(back.len(), rec.len());
        for ((ka, a), (kb, b)) in rec.frames.iter().zip(&back.frames) {
            assert_eq!(ka, kb);
            assert!(a.max_abs_diff(b) <= 1e-9);
        }
    }

    #[test]
    fn one_hot_disagreement_is_one_bit() {
        let t = parse_semantics_csv("frame,feature,sample,p_0,p_1\n0,7,0,1,0\n0,7,1,0,1\n").unwrap();
        let b = &t[&(0, 7)];
        assert_eq!(b.sample_count(), 2);
        assert!((b.entropy_bits() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sample_gaps_and_grouping() {
        let text = "frame,feature,sample,p_0,p_1\n0,1,0,1,0\n0,2,5,0.5,0.5\n0,1,9,1,0\n1,1,3,0,1\n";
        let t = parse_semantics_csv(text).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[&(0, 1)].sample_count(), 2);
        assert_eq!(t[&(0, 2)].sample_count(), 1);
    }

    #[test]
    fn six_rows_make_six_samples() {
        let mut text = String::from("frame,feature,sample,p_0,p_1,p_2\n");
        for s in 0..6 {
            text += &format!("3,4,{s},0.7,0.2,0.1\n");
        }
        assert_eq!(parse_semantics_csv(&text).unwrap()[&(3, 4)].sample_count(), 6);
    }

    #[test]
    fn semantics_errors() {
        assert!(matches!(
            parse_semantics_csv("frame,feature,sample,p_0,p_1\n0,1,0,0.7,0.7\n").unwrap_err(),
            SivoError::InvalidSemanticsRow { row: 1, .. }
        ));
        assert!(matches!(
            parse_semantics_csv("frame,feature,sample,p_0,p_1\n0,1,0,1,0\n0,1,1,1,0,0\n").unwrap_err(),
            SivoError::InconsistentC { expected: 2, found: 3 }
        ));
        assert!(parse_semantics_csv("f,feature,sample,p_0\n").is_err());
    }

    proptest! {
        #[test]
        fn semantics_round_trip(raw in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 1..8)) {
            let samples: Vec<_> = raw
                .iter()
                .map(|v| {
                    let s: f64 = v.iter().sum();
                    let mut p: Vec<f64> = v.iter().map(|x| x / s).collect();
                    let head: f64 = p[..3].iter().sum();
                    p[3] = 1.0 - head;
                    DiscreteDistribution::new(p).unwrap()
                })
                .collect();
            let mut table = SemanticsTable::new();
            table.insert((2, 9), aggregate_mc(samples).unwrap());
            let back = parse_semantics_csv(&write_semantics_csv(&table).unwrap()).unwrap();
            let (a, b) = (&table[&(2, 9)], &back[&(2, 9)]);
            for (sa, sb) in a.samples().iter().zip(b.samples()) {
                for (x, y) in sa.probabilities().iter().zip(sb.probabilities()) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn map_reduction_values() {
        assert!((map_reduction(138153, 45875).unwrap() - 66.79).abs() < 0.01);
        assert!((map_reduction(64442, 18893).unwrap() - 70.68).abs() < 0.01);
        assert_eq!(map_reduction(10, 10).unwrap(), 0.0);
        assert_eq!(map_reduction(0, 3).unwrap_err(), SivoError::ZeroBaseline);
    }

    fn wiggly_path(frames: usize, step: f64) -> TrajectoryRecord {
        TrajectoryRecord::from_poses((0..frames).map(|k| {
            let s = k as f64 * step;
            Pose3::new(
                Rotation3::exp(&Vector3::new(0.0, 0.2 * (s / 40.0).sin(), 0.0)),
                Vector3::new(3.0 * (s / 50.0).sin(), 0.0, s),
            )
        }))
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let gt = wiggly_path(500, 2.0);
        let r = kitti_errors(&gt, &gt, 1).unwrap();
        assert_eq!(r.translation_error_percent, Some(0.0));
        assert_eq!(r.rotation_error_deg_per_m, Some(0.0));
        assert_eq!(r.per_length.len(), 8);
    }

    #[test]
    fn global_offset_is_invisible() {
        let gt = wiggly_path(500, 2.0);
        let shift = Pose3::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let est = TrajectoryRecord::from_poses(gt.frames.iter().map(|(_, p)| shift.compose(p)));
        let r = kitti_errors(&gt, &est, 1).unwrap();
        assert!(r.translation_error_percent.unwrap() < 1e-9);
        assert!(r.rotation_error_deg_per_m.unwrap() < 1e-9);
    }

    #[test]
    fn scale_inflation_shows_as_one_percent() {
        let gt = TrajectoryRecord::from_poses(
            (0..900).map(|k| Pose3::from_translation(Vector3::new(0.0, 0.0, k as f64))),
        );
        let est = TrajectoryRecord::from_poses(
            gt.frames.iter().map(|(_, p)| Pose3::new(p.rotation, p.translation * 1.01)),
        );
        let r = kitti_errors(&gt, &est, 1).unwrap();
        assert!((r.translation_error_percent.unwrap() - 1.0).abs() <= 0.05);
        assert_eq!(r.rotation_error_deg_per_m.unwrap(), 0.0);
    }

    #[test]
    fn short_and_disjoint_trajectories() {
        let gt = wiggly_path(30, 1.0);
        let r = kitti_errors(&gt, &gt, 1).unwrap();
        assert_eq!(r.translation_error_percent, None);
        assert_eq!(r.missing_lengths_m.len(), 8);
        let mut shifted = gt.clone();
        shifted.frames.iter_mut().for_each(|f| f.0 += 1000);
        assert_eq!(kitti_errors(&gt, &shifted, 1).unwrap_err(), SivoError::NoOverlap);
    }

    #[test]
    fn stride_subsamples_starts() {
        let gt = wiggly_path(400, 2.0);
        let a = kitti_errors(&gt, &gt, 1).unwrap();
        let b = kitti_errors(&gt, &gt, 10).unwrap();
        assert!(b.per_length[0].subsequences * 9 < a.per_length[0].subsequences);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn rigid_invariance(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gt = wiggly_path(300, 2.0);
            let est = TrajectoryRecord::from_poses(gt.frames.iter().enumerate().map(|(k, (_, p))| {
                let n = Vector6::from_fn(|i, _| if i < 3 { 0.02 } else { 0.001 } * (k as f64 * 0.1 + i as f64).sin());
                p.compose(&Pose3::exp(&Twist6(n)))
            }));
            let base = kitti_errors(&gt, &est, 1).unwrap();
            let g = random_pose(&mut rng);
            let moved = |r: &TrajectoryRecord| TrajectoryRecord::from_poses(r.frames.iter().map(|(_, p)| g.compose(p)));
            let both = kitti_errors(&moved(&gt), &moved(&est), 1).unwrap();
            let one = kitti_errors(&gt, &moved(&est), 1).unwrap();
            for r in [&both, &one] {
                prop_assert!((r.translation_error_percent.unwrap() - base.translation_error_percent.unwrap()).abs() < 1e-6);
                prop_assert!((r.rotation_error_deg_per_m.unwrap() - base.rotation_error_deg_per_m.unwrap()).abs() < 1e-6);
            }
            let swapped = kitti_errors(&est, &gt, 1).unwrap();
            let (a, b) = (base.translation_error_percent.unwrap(), swapped.translation_error_percent.unwrap());
            prop_assert!((a - b).abs() < 0.1 * a.max(b));
        }
    }

    #[test]
    fn selection_report_round_trip() {
        let frames = vec![FrameReport {
            frame: 3,
            scores: vec![
                CandidateScore {
                    landmark_id: 11,
                    mutual_information_bits: 3.25,
                    classification_entropy_bits: 0.5,
                    delta_h_bits: 2.75,
                    selected: true,
                    rejection_reason: RejectionReason::None,
                },
                CandidateScore {
                    landmark_id: 12,
                    mutual_information_bits: 1.0,
                    classification_entropy_bits: 2.0,
                    delta_h_bits: -1.0,
                    selected: false,
                    rejection_reason: RejectionReason::DynamicClass,
                },
            ],
            argmax_classes: vec![2, 11],
        }];
        let rows = parse_selection_report(&write_selection_report(&frames)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].score, frames[0].scores[0]);
        assert_eq!(rows[1].argmax_class, 11);
        assert_eq!(count_map_points(&rows), 1);
    }

    #[test]
    fn report_json_keeps_reduction_invariant() {
        let gt = wiggly_path(100, 2.0);
        let r = kitti_errors(&gt, &gt, 1).unwrap().with_map_points(202293, 58894).unwrap();
        assert!((r.map_reduction_percent.unwrap() - 70.89).abs() < 0.01);
        let back: ErrorReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
