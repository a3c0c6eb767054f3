//! Trajectory accuracy: association, rigid alignment, absolute and
//! relative pose errors.

use nalgebra::SVD;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::geometry::{Mat3, Pose, Rotation, Vec3};
use crate::trajectory::Trajectory;

pub const DEFAULT_RPE_LENGTHS: [f64; 4] = [10.0, 20.0, 50.0, 100.0];
pub const DEFAULT_MAX_DT: f64 = 0.02;

/// One-to-one pairs of estimated and reference poses.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPoses {
    pairs: Vec<(Pose, Pose)>,
}

impl MatchedPoses {
    pub fn new(pairs: Vec<(Pose, Pose)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::NoOverlap("no matched poses".into()));
        }
        Ok(MatchedPoses { pairs })
    }

    pub fn pairs(&self) -> &[(Pose, Pose)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn associate(est: &Trajectory, reference: &Trajectory, max_dt: f64) -> Result<MatchedPoses> {
    associate_with_offset(est, reference, 0.0, max_dt)
}

/// Greedy nearest-timestamp matching in increasing estimate time with
/// `offset` added to estimate stamps. Each reference pose is used once.
pub fn associate_with_offset(
    est: &Trajectory,
    reference: &Trajectory,
    offset: f64,
    max_dt: f64,
) -> Result<MatchedPoses> {
    if !(max_dt > 0.0) {
        return Err(invalid(format!("max_dt must be positive, got {max_dt}")));
    }
    let refs = reference.poses();
    let mut used = vec![false; refs.len()];
    let mut pairs = Vec::new();
    for pe in est.poses() {
        let t = pe.t.secs() + offset;
        let upper = refs.partition_point(|p| p.t.secs() < t);
        let mut best: Option<(usize, f64)> = None;
        // Nearest unused candidates on either side.
        let mut lo = upper;
        while lo > 0 {
            lo -= 1;
            let d = t - refs[lo].t.secs();
            if d > max_dt {
                break;
            }
            if !used[lo] {
                best = Some((lo, d));
                break;
            }
        }
        for (hi, p) in refs.iter().enumerate().skip(upper) {
            let d = p.t.secs() - t;
            if d > max_dt {
                break;
            }
            if !used[hi] {
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((hi, d));
                }
                break;
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
            pairs.push((*pe, refs[j]));
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoOverlap(format!(
            "no estimate pose within {max_dt} s of a reference pose"
        )));
    }
    Ok(MatchedPoses { pairs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Maps estimate positions into the reference frame.
    pub transform: Pose,
    pub scale: f64,
    pub warnings: Vec<String>,
}

impl Alignment {
    pub fn identity() -> Self {
        Alignment {
            transform: Pose::transform(Rotation::identity(), Vec3::zeros()),
            scale: 1.0,
            warnings: Vec::new(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.transform.rotation.rotate(p) * self.scale + self.transform.translation
    }

    /// Aligned estimate pose; scale affects the position only.
    pub fn apply_pose(&self, pose: &Pose) -> Pose {
        Pose::new(
            pose.t,
            self.transform.rotation.compose(&pose.rotation),
            self.apply(&pose.translation),
        )
    }
}

/// Closed-form least-squares fit of `p_ref ≈ s·R·p_est + t` over matched
/// positions; `s = 1` unless `with_scale`.
pub fn umeyama_align(matched: &MatchedPoses, with_scale: bool) -> Result<Alignment> {
    let n = matched.len();
    if n < 3 {
        return Err(Error::InsufficientData {
            what: "alignment",
            needed: 3,
            got: n,
        });
    }
    let nf = n as f64;
    let mu_e = matched.pairs.iter().map(|(e, _)| e.translation).sum::<Vec3>() / nf;
    let mu_r = matched.pairs.iter().map(|(_, r)| r.translation).sum::<Vec3>() / nf;
    let mut cov = Mat3::zeros();
    let mut var_e = 0.0;
    for (e, r) in &matched.pairs {
        let de = e.translation - mu_e;
        cov += (r.translation - mu_r) * de.transpose();
        var_e += de.norm_squared();
    }
    cov /= nf;
    var_e /= nf;

    let mut warnings = Vec::new();
    let svd = SVD::new(cov, true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut sv = svd.singular_values;
    // Sort descending so the smallest singular value is last.
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| sv[*b].total_cmp(&sv[*a]));
    let pick = |m: &Mat3, cols: bool| {
        let mut out = Mat3::zeros();
        for (k, &o) in order.iter().enumerate() {
            if cols {
                out.set_column(k, &m.column(o));
            } else {
                out.set_row(k, &m.row(o));
            }
        }
        out
    };
    let (u, v_t) = (pick(&u, true), pick(&v_t, false));
    sv = nalgebra::Vector3::new(sv[order[0]], sv[order[1]], sv[order[2]]);
    if sv[0] <= 1e-12 * var_e.max(f64::MIN_POSITIVE) || var_e == 0.0 {
        warnings.push("estimate positions are coincident; rotation unconstrained".to_string());
    } else if sv[1] <= 1e-9 * sv[0] {
        warnings.push("estimate positions are collinear; rotation about the line unconstrained".to_string());
    }
    let mut d = Mat3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * v_t;
    let scale = if with_scale && var_e > 0.0 {
        (sv[0] * d[(0, 0)] + sv[1] * d[(1, 1)] + sv[2] * d[(2, 2)]) / var_e
    } else {
        1.0
    };
    let rotation = Rotation::from_matrix(&r);
    let fitted = Alignment {
        transform: Pose::transform(rotation, mu_r - rotation.rotate(&mu_e) * scale),
        scale,
        warnings,
    };
    // The pure translation is exact when no rotation is present, where the
    // decomposition leaves rounding residue.
    let shift_scale = if with_scale && var_e > 0.0 { cov.trace() / var_e } else { 1.0 };
    let shifted = Alignment {
        transform: Pose::transform(Rotation::identity(), mu_r - mu_e * shift_scale),
        scale: shift_scale,
        warnings: fitted.warnings.clone(),
    };
    Ok(if alignment_cost(matched, &shifted) <= alignment_cost(matched, &fitted) {
        shifted
    } else {
        fitted
    })
}

fn alignment_cost(matched: &MatchedPoses, a: &Alignment) -> f64 {
    matched
        .pairs
        .iter()
        .map(|(e, r)| (r.translation - a.apply(&e.translation)).norm_squared())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    pub translation: f64,
    /// Degrees.
    pub rotation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AteResult {
    pub rmse_translation: f64,
    /// Degrees.
    pub rmse_rotation: f64,
    pub per_pose: Vec<PoseError>,
}

/// Per-pose translation and geodesic rotation error after alignment, as RMSE.
pub fn ate(matched: &MatchedPoses, alignment: &Alignment) -> Result<AteResult> {
    if matched.is_empty() {
        return Err(Error::NoOverlap("no matched poses".into()));
    }
    let per_pose: Vec<PoseError> = matched
        .pairs
        .iter()
        .map(|(e, r)| {
            let aligned = alignment.apply_pose(e);
            PoseError {
                translation: (r.translation - aligned.translation).norm(),
                rotation: r.rotation.angle_to(&aligned.rotation).to_degrees(),
            }
        })
        .collect();
    let n = per_pose.len() as f64;
    let rms = |f: fn(&PoseError) -> f64| (per_pose.iter().map(|e| f(e).powi(2)).sum::<f64>() / n).sqrt();
    Ok(AteResult {
        rmse_translation: rms(|e| e.translation),
        rmse_rotation: rms(|e| e.rotation),
        per_pose,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpeSample {
    /// Percent of the segment length.
    pub translation_percent: f64,
    pub rotation_deg_per_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpeLength {
    pub length: f64,
    pub samples: Vec<RpeSample>,
}

impl RpeLength {
    pub fn mean(&self) -> RpeSample {
        mean_sample(&self.samples)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpeResult {
    /// Mean over every sample of every length.
    pub translation_percent: f64,
    pub rotation_deg_per_m: f64,
    /// Lengths the path could support, with their samples.
    pub per_length: Vec<RpeLength>,
    /// Requested lengths longer than the reference path.
    pub skipped_lengths: Vec<f64>,
}

impl RpeResult {
    pub fn sample_count(&self) -> usize {
        self.per_length.iter().map(|l| l.samples.len()).sum()
    }

    fn from_lengths(per_length: Vec<RpeLength>, skipped_lengths: Vec<f64>) -> Self {
        let all: Vec<RpeSample> = per_length.iter().flat_map(|l| l.samples.iter().copied()).collect();
        let m = mean_sample(&all);
        RpeResult {
            translation_percent: m.translation_percent,
            rotation_deg_per_m: m.rotation_deg_per_m,
            per_length,
            skipped_lengths,
        }
    }
}

fn mean_sample(samples: &[RpeSample]) -> RpeSample {
    let n = samples.len().max(1) as f64;
    RpeSample {
        translation_percent: samples.iter().map(|s| s.translation_percent).sum::<f64>() / n,
        rotation_deg_per_m: samples.iter().map(|s| s.rotation_deg_per_m).sum::<f64>() / n,
    }
}

/// Relative pose error over sub-trajectories of fixed reference arc
/// length, one starting at every matched pose.
pub fn rpe(est: &Trajectory, reference: &Trajectory, lengths: &[f64], max_dt: f64) -> Result<RpeResult> {
    if lengths.is_empty() || lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(invalid(format!("segment lengths must be positive, got {lengths:?}")));
    }
    let matched = associate(est, reference, max_dt)?;
    let pairs = matched.pairs();
    let mut arc = Vec::with_capacity(pairs.len());
    let mut acc = 0.0;
    for (i, (_, r)) in pairs.iter().enumerate() {
        if i > 0 {
            acc += (r.translation - pairs[i - 1].1.translation).norm();
        }
        arc.push(acc);
    }
    let total = acc;
    let (usable, skipped): (Vec<f64>, Vec<f64>) = lengths.iter().partition(|l| **l <= total);
    if usable.is_empty() {
        return Err(Error::InsufficientPath(format!(
            "reference path is {total:.3} m, shorter than every segment length {lengths:?}"
        )));
    }
    let per_length: Vec<RpeLength> = usable
        .par_iter()
        .map(|&length| {
            let mut samples = Vec::new();
            // Arc lengths within rounding of `length` count as reaching it.
            let reach = length * (1.0 - 1e-9);
            let mut j = 0;
            for i in 0..pairs.len() {
                j = j.max(i);
                while j < pairs.len() && arc[j] - arc[i] < reach {
                    j += 1;
                }
                if j == pairs.len() {
                    break;
                }
                let ref_rel = pairs[i].1.between(&pairs[j].1);
                let est_rel = pairs[i].0.between(&pairs[j].0);
                // Components of ref_rel⁻¹ · est_rel.
                let dt = ref_rel.rotation.inverse().rotate(&(est_rel.translation - ref_rel.translation));
                let angle = ref_rel.rotation.angle_to(&est_rel.rotation);
                samples.push(RpeSample {
                    translation_percent: 100.0 * dt.norm() / length,
                    rotation_deg_per_m: angle.to_degrees() / length,
                });
            }
            RpeLength { length, samples }
        })
        .collect();
    if per_length.iter().all(|l| l.samples.is_empty()) {
        return Err(Error::InsufficientPath("no sub-trajectory of the requested lengths".into()));
    }
    Ok(RpeResult::from_lengths(per_length, skipped))
}

/// Concatenates the samples of several sequences, length by length.
pub fn pool_rpe(results: &[RpeResult]) -> Option<RpeResult> {
    let mut lengths: Vec<RpeLength> = Vec::new();
    for r in results {
        for l in &r.per_length {
            match lengths.iter_mut().find(|x| x.length == l.length) {
                Some(x) => x.samples.extend_from_slice(&l.samples),
                None => lengths.push(l.clone()),
            }
        }
    }
    if lengths.is_empty() {
        return None;
    }
    lengths.sort_by(|a, b| a.length.total_cmp(&b.length));
    Some(RpeResult::from_lengths(lengths, Vec::new()))
}
