use std::sync::OnceLock;

use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use rayon::prelude::*;

use super::distance::{nn_cell, PlaneIndex};
use super::{GridIndex, PointCloud};
use crate::error::{invalid, Error, Result};
use crate::geometry::{so3_exp, Pose, Rotation, Vec3};

/// Minimum fraction of compared points that must start within the
/// correspondence distance.
pub const MIN_OVERLAP_FRACTION: f64 = 0.2;
/// Hessian eigenvalues below this fraction of the largest are gauge freedoms.
const NULL_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop when the update `|(ω, v)|` falls below this.
    pub tolerance: f64,
    pub max_correspondence_distance: f64,
    /// Neighborhood radius for reference normals, m.
    pub normal_radius: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iterations: 50,
            tolerance: 1e-6,
            max_correspondence_distance: 0.7,
            normal_radius: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcpStop {
    Converged,
    /// The next step would have increased the residual.
    StepRejected,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps compared points onto the reference.
    pub transform: Pose,
    pub iterations: usize,
    pub stop: IcpStop,
    /// Mean point-to-plane residual before the first and after each accepted step.
    pub residuals: Vec<f64>,
    /// Null-space directions `(ω, v)` of the last linearization.
    pub unconstrained: Vec<[f64; 6]>,
    /// Fraction of compared points with a correspondence at the start.
    pub initial_overlap: f64,
}

impl IcpResult {
    pub fn converged(&self) -> bool {
        self.stop != IcpStop::IterationLimit
    }
}

/// Reference normals, fitted on first use.
struct Normals<'a> {
    planes: &'a PlaneIndex,
    refs: &'a [Vec3],
    cache: Vec<OnceLock<Option<Vec3>>>,
}

impl Normals<'_> {
    fn get(&self, i: usize) -> Option<Vec3> {
        *self.cache[i].get_or_init(|| self.planes.plane_at(&self.refs[i]).map(|p| p.normal))
    }
}

struct Linearization {
    hessian: Matrix6<f64>,
    gradient: Vector6<f64>,
    mean_residual: f64,
    matches: usize,
}

fn linearize(
    compared: &[Vec3],
    transform: &Pose,
    index: &GridIndex,
    reference: &[Vec3],
    normals: &Normals,
    max_dist: f64,
) -> Linearization {
    let terms: Vec<Option<(Vector6<f64>, f64)>> = compared
        .par_iter()
        .map(|p| {
            let q = transform.transform_point(p);
            let (nn, _) = index.nearest(&q, max_dist)?;
            let n = normals.get(nn)?;
            let r = (q - reference[nn]).dot(&n);
            let c = q.cross(&n);
            Some((Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z), r))
        })
        .collect();
    let mut lin = Linearization {
        hessian: Matrix6::zeros(),
        gradient: Vector6::zeros(),
        mean_residual: 0.0,
        matches: 0,
    };
    for (j, r) in terms.iter().flatten() {
        lin.hessian += j * j.transpose();
        lin.gradient += j * *r;
        lin.mean_residual += r.abs();
        lin.matches += 1;
    }
    if lin.matches > 0 {
        lin.mean_residual /= lin.matches as f64;
    }
    lin
}

/// Pseudo-inverse Gauss-Newton step and the null-space directions.
fn solve(lin: &Linearization) -> (Vector6<f64>, Vec<[f64; 6]>) {
    let eig = SymmetricEigen::new(lin.hessian);
    let largest = eig.eigenvalues.amax();
    let mut step = Vector6::zeros();
    let mut free = Vec::new();
    for k in 0..6 {
        let v = eig.eigenvectors.column(k);
        let lambda = eig.eigenvalues[k];
        if largest > 0.0 && lambda > NULL_RATIO * largest {
            step -= v * (v.dot(&lin.gradient) / lambda);
        } else {
            let mut d = [0.0; 6];
            d.copy_from_slice(v.as_slice());
            free.push(d);
        }
    }
    (step, free)
}

/// Point-to-plane ICP from the identity. Each step is a linearized
/// least-squares solve over nearest-neighbor correspondences, applied on
/// the left; it is kept only if the mean residual does not increase.
pub fn icp_refine(compared: &PointCloud, reference: &PointCloud, params: &IcpParams) -> Result<IcpResult> {
    if compared.is_empty() || reference.is_empty() {
        return Err(invalid("icp needs two nonempty clouds"));
    }
    if !(params.max_correspondence_distance > 0.0 && params.normal_radius > 0.0 && params.tolerance >= 0.0) {
        return Err(invalid("icp distances must be positive and tolerance nonnegative"));
    }
    compared.validate()?;
    reference.validate()?;
    let refs = reference.positions();
    let max_dist = params.max_correspondence_distance;
    let index = GridIndex::new(refs, nn_cell(params.normal_radius, max_dist));
    let planes = PlaneIndex::new(refs, params.normal_radius);
    let normals = Normals {
        planes: &planes,
        refs,
        cache: (0..refs.len()).map(|_| OnceLock::new()).collect(),
    };
    let points = compared.positions();
    let initial_overlap = points
        .par_iter()
        .filter(|p| index.nearest(p, max_dist).is_some())
        .count() as f64
        / points.len() as f64;
    if initial_overlap < MIN_OVERLAP_FRACTION {
        return Err(Error::NoOverlap(format!(
            "insufficient overlap: {:.1}% of compared points within {max_dist} m, need {:.0}%",
            100.0 * initial_overlap,
            100.0 * MIN_OVERLAP_FRACTION
        )));
    }

    let mut transform = Pose::transform(Rotation::identity(), Vec3::zeros());
    let mut lin = linearize(points, &transform, &index, refs, &normals, max_dist);
    if lin.matches == 0 {
        return Err(Error::NoOverlap("no reference normals near the compared cloud".into()));
    }
    let mut residuals = vec![lin.mean_residual];
    let mut unconstrained = Vec::new();
    let mut stop = IcpStop::IterationLimit;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let (step, free) = solve(&lin);
        unconstrained = free;
        let delta = Pose::transform(
            so3_exp(&Vec3::new(step[0], step[1], step[2])),
            Vec3::new(step[3], step[4], step[5]),
        );
        let candidate = delta.compose(&transform);
        let next = linearize(points, &candidate, &index, refs, &normals, max_dist);
        if next.matches == 0 || next.mean_residual > lin.mean_residual {
            stop = IcpStop::StepRejected;
            break;
        }
        transform = candidate;
        lin = next;
        residuals.push(lin.mean_residual);
        if step.norm() < params.tolerance {
            stop = IcpStop::Converged;
            break;
        }
    }
    Ok(IcpResult {
        transform,
        iterations,
        stop,
        residuals,
        unconstrained,
        initial_overlap,
    })
}
