//! The pose block: P3P minimal hypotheses inside RANSAC, followed by a
//! Levenberg-Marquardt refit of the reprojection error on the inliers.

use nalgebra::{Complex, Matrix2x3, Matrix3, Matrix6, UnitQuaternion, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correspond::Correspondence2D3D;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidPose, MIN_DEPTH};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Euclidean pixel distance below which a correspondence is an inlier.
    pub reproj_threshold: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 150,
            reproj_threshold: 1.0,
            min_inliers: 6,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || !(self.reproj_threshold > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "RANSAC needs iterations >= 1 and threshold > 0: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnPResult {
    pub pose: RigidPose,
    /// Indices into the input correspondences, ascending.
    pub inlier_indices: Vec<usize>,
    /// Inlier proportion `|inliers| / |correspondences|`.
    pub confidence: f64,
    /// Mean reprojection error of the refit pose over the inliers, pixels.
    pub mean_reproj_error: f64,
}

/// Compact JSON form of a [`PnPResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnPRecord {
    pub pose: RigidPose,
    pub confidence: f64,
    pub inliers: usize,
    pub mean_err_px: f64,
}

impl From<&PnPResult> for PnPRecord {
    fn from(r: &PnPResult) -> Self {
        Self {
            pose: r.pose,
            confidence: r.confidence,
            inliers: r.inlier_indices.len(),
            mean_err_px: r.mean_reproj_error,
        }
    }
}

/// Euclidean reprojection error; infinite when the point is behind the camera.
pub fn reprojection_error(c: &Correspondence2D3D, rot: &Matrix3<f64>, t: &Vector3<f64>, k: &CameraIntrinsics) -> f64 {
    let pc = rot * c.point + t;
    if pc.z <= MIN_DEPTH {
        return f64::INFINITY;
    }
    let dx = k.fx * pc.x / pc.z + k.cx - c.pixel.x;
    let dy = k.fy * pc.y / pc.z + k.cy - c.pixel.y;
    (dx * dx + dy * dy).sqrt()
}

/// Mean reprojection error of `pose` over `corrs`.
pub fn mean_reprojection_error(corrs: &[Correspondence2D3D], pose: &RigidPose, k: &CameraIntrinsics) -> f64 {
    if corrs.is_empty() {
        return 0.0;
    }
    let rot = pose.rotation_matrix();
    corrs
        .iter()
        .map(|c| reprojection_error(c, &rot, pose.translation(), k))
        .sum::<f64>()
        / corrs.len() as f64
}

// Polynomials in ascending coefficient order.
fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_axpy(acc: &mut Vec<f64>, s: f64, p: &[f64]) {
    if acc.len() < p.len() {
        acc.resize(p.len(), 0.0);
    }
    for (a, x) in acc.iter_mut().zip(p) {
        *a += s * x;
    }
}

fn poly_eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn poly_deriv(p: &[f64]) -> Vec<f64> {
    p.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect()
}

/// All complex roots by simultaneous Aberth iteration.
fn aberth(p: &[f64]) -> Vec<Complex<f64>> {
    let deg = p.len() - 1;
    let lead = p[deg];
    let monic: Vec<Complex<f64>> = p.iter().map(|c| Complex::new(c / lead, 0.0)).collect();
    let eval = |z: Complex<f64>, q: &[Complex<f64>]| q.iter().rev().fold(Complex::new(0.0, 0.0), |acc, c| acc * z + c);
    let dmonic: Vec<Complex<f64>> = (1..=deg).map(|i| monic[i] * i as f64).collect();
    let radius = 1.0 + monic[..deg].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut z: Vec<Complex<f64>> = (0..deg)
        .map(|i| Complex::from_polar(radius, 0.4 + std::f64::consts::TAU * i as f64 / deg as f64))
        .collect();
    for _ in 0..200 {
        let mut moved = 0.0f64;
        for i in 0..deg {
            let ratio = eval(z[i], &monic) / eval(z[i], &dmonic);
            let repel: Complex<f64> = (0..deg).filter(|&j| j != i).map(|j| (z[i] - z[j]).inv()).sum();
            let step = ratio / (Complex::new(1.0, 0.0) - ratio * repel);
            if step.is_finite() {
                z[i] -= step;
                moved = moved.max(step.norm());
            }
        }
        if moved <= 1e-15 * radius {
            break;
        }
    }
    z
}

/// Real roots of a polynomial of degree ≤ 4 (ascending coefficients).
///
/// Roots come from the companion-matrix eigenvalues and are polished with
/// Newton steps on the original polynomial.
pub fn real_roots(p: &[f64]) -> Vec<f64> {
    let scale = p.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let mut deg = p.len() - 1;
    while deg > 0 && p[deg].abs() <= 1e-14 * scale {
        deg -= 1;
    }
    let p = &p[..=deg];
    let mut roots = match deg {
        0 => Vec::new(),
        1 => vec![-p[0] / p[1]],
        2 => {
            let (a, b, c) = (p[2], p[1], p[0]);
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                if disc > -1e-12 * b * b {
                    vec![-b / (2.0 * a)]
                } else {
                    Vec::new()
                }
            } else {
                let q = -0.5 * (b + b.signum() * disc.sqrt());
                if q == 0.0 {
                    vec![0.0]
                } else {
                    vec![q / a, c / q]
                }
            }
        }
        _ => {
            let mut comp = nalgebra::DMatrix::<f64>::zeros(deg, deg);
            for j in 0..deg {
                comp[(0, j)] = -p[deg - 1 - j] / p[deg];
            }
            for i in 1..deg {
                comp[(i, i - 1)] = 1.0;
            }
            let eig: Vec<Complex<f64>> = match nalgebra::Schur::try_new(comp, f64::EPSILON, 500) {
                Some(schur) => schur.complex_eigenvalues().iter().copied().collect(),
                None => aberth(p),
            };
            eig.iter()
                .filter(|z| z.im.abs() <= 1e-5 * (1.0 + z.re.abs()))
                .map(|z| z.re)
                .collect()
        }
    };
    let dp = poly_deriv(p);
    for r in &mut roots {
        for _ in 0..8 {
            let d = poly_eval(&dp, *r);
            if d == 0.0 {
                break;
            }
            let step = poly_eval(p, *r) / d;
            *r -= step;
            if step.abs() <= 1e-15 * (1.0 + r.abs()) {
                break;
            }
        }
    }
    let coeff_scale: f64 = p.iter().map(|c| c.abs()).sum();
    roots.retain(|r| {
        let mag: f64 = p.iter().enumerate().map(|(i, c)| (c * r.powi(i as i32)).abs()).sum();
        r.is_finite() && poly_eval(p, *r).abs() <= 1e-8 * mag.max(coeff_scale)
    });
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-10 * (1.0 + b.abs()));
    roots
}

/// Least-squares rigid transform mapping `src` onto `dst` (Kabsch).
fn absolute_orientation(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Option<RigidPose> {
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vector3<f64>>() / n;
    let cd = dst.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (d - cd) * (s - cs).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut rot = u * v_t;
    if rot.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        rot = u * v_t;
    }
    let q = UnitQuaternion::from_matrix(&rot);
    let t = cd - q * cs;
    Some(RigidPose::new(q, t))
}

/// Newton iterations on the three law-of-cosines constraints
/// `s_i² + s_k² − 2 s_i s_k cos θ_ik = d_ik²`.
fn polish_depths(mut s: Vector3<f64>, [cos_a, cos_b, cos_g]: [f64; 3], [a2, b2, c2]: [f64; 3]) -> Vector3<f64> {
    // pairs (0,1) ↔ c, (0,2) ↔ b, (1,2) ↔ a
    let pairs = [(0, 1, cos_g, c2), (0, 2, cos_b, b2), (1, 2, cos_a, a2)];
    for _ in 0..5 {
        let mut f = Vector3::zeros();
        let mut jac = Matrix3::zeros();
        for (r, &(i, k, c, d2)) in pairs.iter().enumerate() {
            f[r] = s[i] * s[i] + s[k] * s[k] - 2.0 * s[i] * s[k] * c - d2;
            jac[(r, i)] = 2.0 * s[i] - 2.0 * s[k] * c;
            jac[(r, k)] = 2.0 * s[k] - 2.0 * s[i] * c;
        }
        let Some(step) = jac.lu().solve(&f) else {
            break;
        };
        let next = s - step;
        if !next.iter().all(|x| x.is_finite() && *x > 0.0) {
            break;
        }
        s = next;
        if step.norm() <= 1e-15 * s.norm() {
            break;
        }
    }
    s
}

/// P3P on the first three correspondences, disambiguated by the fourth.
///
/// Uses Grunert's formulation: with depth ratios `u = s2/s1`, `v = s3/s1`,
/// eliminating `u` from the law-of-cosines system leaves a quartic in `v`.
/// Candidates are returned best-first by the reprojection error of the
/// fourth point.
pub fn pnp_minimal(corrs: &[Correspondence2D3D], k: &CameraIntrinsics) -> Result<Vec<RigidPose>> {
    if corrs.len() != 4 {
        return Err(Error::InvalidParameter(format!(
            "minimal solver takes exactly 4 correspondences, got {}",
            corrs.len()
        )));
    }
    let w: [Vector3<f64>; 3] = std::array::from_fn(|i| corrs[i].point);
    let e1 = w[1] - w[0];
    let e2 = w[2] - w[0];
    if e1.cross(&e2).norm() <= 1e-10 * e1.norm() * e2.norm() {
        return Err(Error::DegenerateConfiguration("first three 3D points are collinear"));
    }
    let j: [Vector3<f64>; 3] = std::array::from_fn(|i| k.bearing(&corrs[i].pixel));

    let a2 = (w[1] - w[2]).norm_squared();
    let b2 = (w[0] - w[2]).norm_squared();
    let c2 = (w[0] - w[1]).norm_squared();
    let cos_a = j[1].dot(&j[2]);
    let cos_b = j[0].dot(&j[2]);
    let cos_g = j[0].dot(&j[1]);

    // u = num(v) / den(v)
    let kk = (a2 - c2) / b2;
    let num = [1.0 + kk, -2.0 * kk * cos_b, kk - 1.0];
    let den = [2.0 * cos_g, -2.0 * cos_a];
    // b²(num² − 2·num·den·cosγ + den²) − c²·den²·(1 + v² − 2v·cosβ) = 0
    let num2 = poly_mul(&num, &num);
    let den2 = poly_mul(&den, &den);
    let num_den = poly_mul(&num, &den);
    let mut quartic = Vec::new();
    poly_axpy(&mut quartic, b2, &num2);
    poly_axpy(&mut quartic, -2.0 * b2 * cos_g, &num_den);
    poly_axpy(&mut quartic, b2, &den2);
    poly_axpy(&mut quartic, -c2, &poly_mul(&den2, &[1.0, -2.0 * cos_b, 1.0]));

    let mut candidates = Vec::new();
    for v in real_roots(&quartic) {
        if v <= 0.0 {
            continue;
        }
        let d = poly_eval(&den, v);
        if d.abs() < 1e-12 {
            continue;
        }
        let u = poly_eval(&num, v) / d;
        let q = 1.0 + v * v - 2.0 * v * cos_b;
        if u <= 0.0 || q <= 0.0 {
            continue;
        }
        let s1 = (b2 / q).sqrt();
        let s = polish_depths(Vector3::new(s1, u * s1, v * s1), [cos_a, cos_b, cos_g], [a2, b2, c2]);
        let cam = [j[0] * s.x, j[1] * s.y, j[2] * s.z];
        if let Some(pose) = absolute_orientation(&w, &cam) {
            candidates.push(pose);
        }
    }
    if candidates.is_empty() {
        return Err(Error::DegenerateConfiguration("no real P3P solution"));
    }
    let mut scored: Vec<(f64, RigidPose)> = candidates
        .into_iter()
        .map(|p| {
            let e = reprojection_error(&corrs[3], &p.rotation_matrix(), p.translation(), k);
            (e, p)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(scored.into_iter().map(|(_, p)| p).collect())
}

/// Outcome of a Levenberg-Marquardt run.
#[derive(Debug, Clone)]
pub struct LmReport {
    pub pose: RigidPose,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Cost after each accepted step.
    pub accepted_costs: Vec<f64>,
}

fn sq_cost(corrs: &[Correspondence2D3D], pose: &RigidPose, k: &CameraIntrinsics) -> Option<f64> {
    let rot = pose.rotation_matrix();
    let t = pose.translation();
    let mut sum = 0.0;
    for c in corrs {
        let pc = rot * c.point + t;
        if pc.z <= MIN_DEPTH {
            return None;
        }
        let dx = k.fx * pc.x / pc.z + k.cx - c.pixel.x;
        let dy = k.fy * pc.y / pc.z + k.cy - c.pixel.y;
        sum += dx * dx + dy * dy;
    }
    Some(sum)
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Refines a pose by minimizing the summed squared reprojection error.
pub fn pnp_refine_lm(
    corrs: &[Correspondence2D3D],
    k: &CameraIntrinsics,
    init: &RigidPose,
    max_iters: usize,
    tol: f64,
) -> Result<RigidPose> {
    pnp_refine_lm_report(corrs, k, init, max_iters, tol).map(|r| r.pose)
}

/// [`pnp_refine_lm`] with the cost history.
///
/// Parameters are a camera-frame axis-angle increment `ω` applied as
/// `R ← exp(ω)·R` and a translation increment. Steps that raise the cost or
/// push a point behind the camera are rejected and the damping is raised.
pub fn pnp_refine_lm_report(
    corrs: &[Correspondence2D3D],
    k: &CameraIntrinsics,
    init: &RigidPose,
    max_iters: usize,
    tol: f64,
) -> Result<LmReport> {
    if corrs.len() < 4 {
        return Err(Error::InsufficientCorrespondences(corrs.len()));
    }
    let Some(initial_cost) = sq_cost(corrs, init, k) else {
        let worst = corrs
            .iter()
            .map(|c| init.transform_point(&c.point).z)
            .fold(f64::INFINITY, f64::min);
        return Err(Error::NonPositiveDepth(worst));
    };

    let mut pose = *init;
    let mut cost = initial_cost;
    let mut accepted_costs = Vec::new();
    let mut lambda = -1.0;

    'outer: for _ in 0..max_iters {
        if cost == 0.0 {
            break;
        }
        let rot = pose.rotation_matrix();
        let t = *pose.translation();
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for c in corrs {
            let rx = rot * c.point;
            let pc = rx + t;
            let iz = 1.0 / pc.z;
            let r = nalgebra::Vector2::new(
                k.fx * pc.x * iz + k.cx - c.pixel.x,
                k.fy * pc.y * iz + k.cy - c.pixel.y,
            );
            let dproj = Matrix2x3::new(
                k.fx * iz,
                0.0,
                -k.fx * pc.x * iz * iz,
                0.0,
                k.fy * iz,
                -k.fy * pc.y * iz * iz,
            );
            let jr = dproj * (-skew(&rx));
            let mut jac = nalgebra::Matrix2x6::zeros();
            jac.fixed_view_mut::<2, 3>(0, 0).copy_from(&jr);
            jac.fixed_view_mut::<2, 3>(0, 3).copy_from(&dproj);
            h += jac.transpose() * jac;
            g += jac.transpose() * r;
        }
        let max_diag = (0..6).map(|i| h[(i, i)]).fold(0.0, f64::max);
        if max_diag == 0.0 {
            break;
        }
        if lambda < 0.0 {
            lambda = 1e-3;
        }
        let damp = Matrix6::from_diagonal(&Vector6::from_fn(|i, _| h[(i, i)].max(1e-9 * max_diag)));

        loop {
            let a = h + damp * lambda;
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    break 'outer;
                }
                continue;
            };
            let delta = -chol.solve(&g);
            let omega = Vector3::new(delta[0], delta[1], delta[2]);
            let dt = Vector3::new(delta[3], delta[4], delta[5]);
            let cand = RigidPose::new(UnitQuaternion::from_scaled_axis(omega) * pose.rotation(), t + dt);
            match sq_cost(corrs, &cand, k) {
                Some(c) if c < cost => {
                    let converged = cost - c <= tol * cost || delta.norm() <= tol;
                    pose = cand;
                    cost = c;
                    accepted_costs.push(c);
                    lambda = (lambda * 0.1).max(1e-12);
                    if converged {
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok(LmReport {
        pose,
        initial_cost,
        final_cost: cost,
        accepted_costs,
    })
}

struct Hypothesis {
    iteration: usize,
    pose: RigidPose,
    inliers: usize,
    mean_err: f64,
}

fn score_hypothesis(
    corrs: &[Correspondence2D3D],
    k: &CameraIntrinsics,
    sample: &[usize; 4],
    threshold: f64,
    iteration: usize,
) -> Option<Hypothesis> {
    let minimal = sample.map(|i| corrs[i]);
    let pose = *pnp_minimal(&minimal, k).ok()?.first()?;
    let rot = pose.rotation_matrix();
    let t = *pose.translation();
    let (mut n, mut sum) = (0usize, 0.0);
    for c in corrs {
        let e = reprojection_error(c, &rot, &t, k);
        if e < threshold {
            n += 1;
            sum += e;
        }
    }
    Some(Hypothesis {
        iteration,
        pose,
        inliers: n,
        mean_err: if n > 0 { sum / n as f64 } else { f64::INFINITY },
    })
}

/// Draws `iterations` index quadruples up front so hypothesis evaluation
/// order cannot influence the result.
pub fn ransac_samples(n: usize, iterations: usize, seed: u64) -> Vec<[usize; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..iterations)
        .map(|_| {
            let idx = rand::seq::index::sample(&mut rng, n, 4);
            [idx.index(0), idx.index(1), idx.index(2), idx.index(3)]
        })
        .collect()
}

/// Robust PnP: seeded 4-point RANSAC, then an LM refit on the best inlier set.
pub fn ransac_pnp(corrs: &[Correspondence2D3D], k: &CameraIntrinsics, cfg: &RansacConfig) -> Result<PnPResult> {
    cfg.validate()?;
    if corrs.len() < 4 {
        return Err(Error::InsufficientCorrespondences(corrs.len()));
    }
    let samples = ransac_samples(corrs.len(), cfg.iterations, cfg.seed);
    let hypotheses: Vec<Option<Hypothesis>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| score_hypothesis(corrs, k, s, cfg.reproj_threshold, i))
        .collect();

    // more inliers, then lower mean error, then earlier iteration
    let best = hypotheses.into_iter().flatten().reduce(|a, b| {
        let better = b.inliers > a.inliers || (b.inliers == a.inliers && b.mean_err < a.mean_err);
        if better {
            b
        } else {
            a
        }
    });
    let best = match best {
        Some(h) if h.inliers >= cfg.min_inliers.max(4) => h,
        other => {
            return Err(Error::NoValidHypothesis {
                best: other.map_or(0, |h| h.inliers),
            })
        }
    };
    debug_assert!(best.iteration < cfg.iterations);

    let rot = best.pose.rotation_matrix();
    let t = *best.pose.translation();
    let inlier_indices: Vec<usize> = corrs
        .iter()
        .enumerate()
        .filter(|(_, c)| reprojection_error(c, &rot, &t, k) < cfg.reproj_threshold)
        .map(|(i, _)| i)
        .collect();
    let inliers: Vec<Correspondence2D3D> = inlier_indices.iter().map(|&i| corrs[i]).collect();
    let pose = pnp_refine_lm(&inliers, k, &best.pose, 50, 1e-10)?;
    let mean_reproj_error = mean_reprojection_error(&inliers, &pose, k);

    Ok(PnPResult {
        pose,
        confidence: inlier_indices.len() as f64 / corrs.len() as f64,
        inlier_indices,
        mean_reproj_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, rotation_angle_deg};
    use nalgebra::Vector2;
    use rand::Rng;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::linemod()
    }

    fn gt_pose() -> RigidPose {
        RigidPose::new(UnitQuaternion::from_euler_angles(0.4, -0.6, 2.0), Vector3::new(0.03, -0.02, 0.7))
    }

    /// Points on a 0.1 m-radius blob projected exactly under `pose`.
    fn synth(n: usize, pose: &RigidPose, seed: u64) -> Vec<Correspondence2D3D> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let p = Vector3::new(
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                );
                Correspondence2D3D::new(project(&p, pose, &k()).unwrap(), p)
            })
            .collect()
    }

    #[test]
    fn quartic_roots() {
        // (x-1)(x-2)(x+3)(x-0.5) = x^4 - 0.5x^3 - 7x^2 + 9.5x - 3
        let r = real_roots(&[-3.0, 9.5, -7.0, -0.5, 1.0]);
        let want = [-3.0, 0.5, 1.0, 2.0];
        assert_eq!(r.len(), 4);
        for (a, b) in r.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{r:?}");
        }
        // x^4 + 1 has no real roots
        assert!(real_roots(&[1.0, 0.0, 0.0, 0.0, 1.0]).is_empty());
        // leading zero drops to the cubic (x-1)(x-2)(x-3)
        let r = real_roots(&[-6.0, 11.0, -6.0, 1.0, 0.0]);
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn minimal_solver_recovers_exact_pose() {
        let gt = gt_pose();
        for seed in 0..50 {
            let corrs = synth(4, &gt, seed);
            let cands = pnp_minimal(&corrs, &k()).unwrap();
            let best = cands[0];
            let ang = rotation_angle_deg(&best, &gt).to_radians();
            let dt = (best.translation() - gt.translation()).norm();
            assert!(ang < 1e-6 && dt < 1e-8, "seed {seed}: {ang} rad, {dt} m, {} cands", cands.len());
        }
    }

    #[test]
    fn minimal_solver_is_deterministic() {
        let corrs = synth(4, &gt_pose(), 11);
        assert_eq!(pnp_minimal(&corrs, &k()).unwrap(), pnp_minimal(&corrs, &k()).unwrap());
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let gt = gt_pose();
        let corrs: Vec<Correspondence2D3D> = (0..4)
            .map(|i| {
                let p = Vector3::new(0.02 * i as f64, 0.01 * i as f64, -0.03 * i as f64);
                Correspondence2D3D::new(project(&p, &gt, &k()).unwrap(), p)
            })
            .collect();
        assert!(matches!(pnp_minimal(&corrs, &k()), Err(Error::DegenerateConfiguration(_))));
    }

    #[test]
    fn lm_fixed_point_at_ground_truth() {
        let gt = gt_pose();
        let corrs = synth(60, &gt, 1);
        let out = pnp_refine_lm(&corrs, &k(), &gt, 50, 1e-10).unwrap();
        assert!(rotation_angle_deg(&out, &gt) < 1e-9);
        assert!((out.translation() - gt.translation()).norm() < 1e-12);
    }

    #[test]
    fn lm_recovers_from_perturbation() {
        let gt = gt_pose();
        let corrs = synth(100, &gt, 2);
        // 5 degrees and 2% of a 0.35 m diameter
        let delta = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 5f64.to_radians());
        let init = RigidPose::new(delta * gt.rotation(), gt.translation() + Vector3::new(0.007, 0.0, 0.0));
        let rep = pnp_refine_lm_report(&corrs, &k(), &init, 50, 1e-10).unwrap();
        assert!(rotation_angle_deg(&rep.pose, &gt) < 0.01);
        assert!((rep.pose.translation() - gt.translation()).norm() < 1e-5);
        assert!(rep.final_cost <= rep.initial_cost);
        let mut prev = rep.initial_cost;
        for c in &rep.accepted_costs {
            assert!(*c < prev);
            prev = *c;
        }
    }

    #[test]
    fn lm_rejects_init_behind_camera() {
        let gt = gt_pose();
        let corrs = synth(10, &gt, 3);
        let bad = RigidPose::from_translation(Vector3::new(0.0, 0.0, -1.0));
        assert!(matches!(
            pnp_refine_lm(&corrs, &k(), &bad, 50, 1e-10),
            Err(Error::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn ransac_clean_data() {
        let gt = gt_pose();
        let corrs = synth(200, &gt, 4);
        let r = ransac_pnp(&corrs, &k(), &RansacConfig::default()).unwrap();
        assert!(rotation_angle_deg(&r.pose, &gt) < 0.1);
        // diameter of the point cloud is at most 0.2·√3
        assert!((r.pose.translation() - gt.translation()).norm() < 0.001 * 0.2 * 3f64.sqrt());
        assert!(r.confidence >= 0.99);
        assert_eq!(r.confidence, r.inlier_indices.len() as f64 / 200.0);
        assert!(r.inlier_indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn ransac_with_forty_percent_outliers() {
        let gt = gt_pose();
        let k = k();
        let mut confs = Vec::new();
        for seed in 0..100u64 {
            let mut corrs = synth(200, &gt, 1000 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for c in corrs.iter_mut().take(80) {
                c.pixel = Vector2::new(
                    rng.random_range(0.0..k.width as f64),
                    rng.random_range(0.0..k.height as f64),
                );
            }
            let cfg = RansacConfig { seed, ..Default::default() };
            let r = ransac_pnp(&corrs, &k, &cfg).unwrap();
            assert!(rotation_angle_deg(&r.pose, &gt) < 0.1, "seed {seed}");
            assert!((r.pose.translation() - gt.translation()).norm() < 0.001 * 0.2 * 3f64.sqrt());
            confs.push(r.confidence);
        }
        let mean = confs.iter().sum::<f64>() / confs.len() as f64;
        assert!((mean - 0.6).abs() <= 0.05, "{mean}");
        assert!(confs.iter().all(|c| (c - 0.6).abs() <= 0.05));
    }

    #[test]
    fn ransac_needs_four() {
        let corrs = synth(3, &gt_pose(), 5);
        assert!(matches!(
            ransac_pnp(&corrs, &k(), &RansacConfig::default()),
            Err(Error::InsufficientCorrespondences(3))
        ));
    }

    #[test]
    fn ransac_all_outliers_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let corrs: Vec<Correspondence2D3D> = (0..50)
            .map(|_| {
                Correspondence2D3D::new(
                    Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
                    Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)),
                )
            })
            .collect();
        let cfg = RansacConfig { iterations: 20, ..Default::default() };
        assert!(matches!(ransac_pnp(&corrs, &k(), &cfg), Err(Error::NoValidHypothesis { .. })));
    }

    #[test]
    fn ransac_is_deterministic_across_thread_counts() {
        let gt = gt_pose();
        let mut corrs = synth(300, &gt, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for c in corrs.iter_mut().step_by(3) {
            c.pixel += Vector2::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
        }
        let cfg = RansacConfig { seed: 77, ..Default::default() };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| ransac_pnp(&corrs, &k(), &cfg)).unwrap();
        let b = four.install(|| ransac_pnp(&corrs, &k(), &cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn record_json_fields() {
        let r = PnPResult {
            pose: RigidPose::identity(),
            inlier_indices: vec![0, 2, 3],
            confidence: 0.75,
            mean_reproj_error: 0.25,
        };
        let v: serde_json::Value = serde_json::to_value(PnPRecord::from(&r)).unwrap();
        assert_eq!(v["inliers"], 3);
        assert_eq!(v["confidence"], 0.75);
        assert_eq!(v["mean_err_px"], 0.25);
        assert!(v["pose"]["q"].is_array());
    }

    #[test]
    fn samples_are_distinct_quadruples() {
        for s in ransac_samples(10, 200, 3) {
            let mut v = s.to_vec();
            v.sort();
            v.dedup();
            assert_eq!(v.len(), 4);
            assert!(v.iter().all(|&i| i < 10));
        }
        assert_eq!(ransac_samples(10, 5, 3), ransac_samples(10, 5, 3));
    }
}
