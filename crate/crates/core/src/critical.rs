//! Critical points of f on M: location by multistart Newton on the Lagrange
//! system, nondegeneracy certification, Morse indices, eigenframes, and
//! orientation choices for unstable manifolds.

use crate::geometry::{GeometryError, ManifoldSpec};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

pub const GRADIENT_TOL: f64 = 1e-9;
pub const DEGENERACY_TOL: f64 = 1e-7;
pub const DEDUP_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CriticalError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("degenerate critical point at {location:?}: eigenvalue {eigenvalue:.3e} within tolerance of zero (function is not Morse as presented)")]
    Degenerate { location: Vec<f64>, eigenvalue: f64 },
    #[error("point is not critical: |grad| = {0:.3e}")]
    NotCritical(f64),
    #[error("no critical points found")]
    NoneFound,
}

/// Nondegenerate critical point with its spectral data.
#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub id: usize,
    pub location: DVector<f64>,
    pub value: f64,
    /// Morse index: number of negative Hessian eigenvalues.
    pub index: usize,
    /// All n eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// N×k matrix: orthonormal eigenvectors of the negative eigenvalues,
    /// ordered ascending by eigenvalue.
    pub unstable_frame: DMatrix<f64>,
    /// N×(n−k) matrix: eigenvectors of the positive eigenvalues, ascending.
    pub stable_frame: DMatrix<f64>,
    /// True when this location is the canonical representative of its σ-orbit.
    pub quotient_rep: bool,
}

/// Chosen ordered bases of the unstable eigenspaces, one per critical point
/// of index ≥ 1 (index-0 points carry the empty positive orientation).
#[derive(Debug, Clone)]
pub struct OrientationAssignment {
    pub seed: u64,
    frames: BTreeMap<usize, DMatrix<f64>>,
}

impl OrientationAssignment {
    /// Oriented basis of E^u for the given critical point (N×k, k ≥ 0).
    pub fn frame(&self, id: usize) -> &DMatrix<f64> {
        &self.frames[&id]
    }

    /// Flip the orientation of one critical point (negate the first basis
    /// vector); used by covariance tests.
    pub fn flipped(&self, id: usize) -> OrientationAssignment {
        let mut out = self.clone();
        let m = out.frames.get_mut(&id).expect("unknown id");
        if m.ncols() > 0 {
            let c = -m.column(0).into_owned();
            m.column_mut(0).copy_from(&c);
        }
        out
    }

    /// Replace the frame of one critical point outright.
    pub fn with_frame(&self, id: usize, frame: DMatrix<f64>) -> OrientationAssignment {
        let mut out = self.clone();
        out.frames.insert(id, frame);
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    pub seed_count: usize,
    pub newton_tol: f64,
    pub dedup_tol: f64,
}

impl SearchConfig {
    pub fn for_dimension(n: usize) -> Self {
        SearchConfig {
            seed_count: if n >= 3 { 20000 } else { 2000 },
            newton_tol: 1e-12,
            dedup_tol: DEDUP_TOL,
        }
    }
}

fn halton(index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// One Newton run on the Lagrange system ∇f = Jᵀλ, Φ = 0 from a retracted
/// seed. Returns the converged on-manifold point or None.
fn newton_from_seed(spec: &ManifoldSpec, seed_pt: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    let n = spec.ambient_dim;
    let m = spec.constraints.len();
    let mut p = seed_pt.clone();
    let mut lambda = spec.multipliers(&p).ok()?;
    for _ in 0..100 {
        let grad_f = spec.f.jet1(&p).ok()?.grad;
        let j = spec.constraint_jacobian(&p).ok()?;
        let phi = spec.constraint_values(&p).ok()?;
        let res_top = &grad_f - j.transpose() * &lambda;
        let res = res_top.norm().max(phi.amax());
        if res < tol {
            let q = spec.retract(&p).ok()?;
            let g = spec.riemannian_gradient(&q).ok()?;
            if g.norm() < GRADIENT_TOL {
                return Some(q);
            }
            return None;
        }
        // KKT matrix [H  -Jᵀ; J  0] with H = ∇²f − Σλ_a∇²Φ_a at current λ.
        let mut h = spec.f.jet2(&p).ok()?.hess;
        for (a, c) in spec.constraints.iter().enumerate() {
            let jc = c.eval_jet2(&p).ok()?;
            h -= lambda[a] * jc.hess;
        }
        let mut kkt = DMatrix::zeros(n + m, n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        kkt.view_mut((0, n), (n, m)).copy_from(&(-j.transpose()));
        kkt.view_mut((n, 0), (m, n)).copy_from(&j);
        let mut rhs = DVector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(&(-&res_top));
        rhs.rows_mut(n, m).copy_from(&(-&phi));
        let step = kkt.lu().solve(&rhs)?;
        let mut dp = DVector::zeros(n);
        dp.copy_from(&step.rows(0, n));
        // Damp huge steps instead of discarding the seed.
        let max_step = spec.bounding_radius;
        if dp.norm() > max_step {
            dp *= max_step / dp.norm();
        }
        p += dp;
        for a in 0..m {
            lambda[a] += step[n + a];
        }
        if p.norm() > 10.0 * spec.bounding_radius {
            return None;
        }
    }
    None
}

/// Spectral classification of a point already known to be critical.
pub fn classify_critical_point(
    spec: &ManifoldSpec,
    p: &DVector<f64>,
) -> Result<CriticalPoint, CriticalError> {
    let g = spec.riemannian_gradient(p)?;
    if g.norm() >= GRADIENT_TOL {
        return Err(CriticalError::NotCritical(g.norm()));
    }
    let frame = spec.tangent_basis(p)?;
    let h = spec.hessian_in_frame(p, &frame)?;
    let eig = nalgebra::SymmetricEigen::new(h);
    let n = spec.dimension;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut eigenvalues = Vec::with_capacity(n);
    let mut vectors: Vec<DVector<f64>> = Vec::with_capacity(n);
    for &i in &order {
        let lam = eig.eigenvalues[i];
        if lam.abs() < DEGENERACY_TOL {
            return Err(CriticalError::Degenerate {
                location: p.iter().copied().collect(),
                eigenvalue: lam,
            });
        }
        eigenvalues.push(lam);
        // Ambient eigenvector, sign-canonicalized: first sizable ambient
        // component positive, so frames are deterministic.
        let mut v = &frame.vectors * eig.eigenvectors.column(i);
        if let Some(c) = v.iter().find(|c| c.abs() > 1e-6) {
            if *c < 0.0 {
                v = -v;
            }
        }
        vectors.push(v);
    }
    let k = eigenvalues.iter().filter(|&&l| l < 0.0).count();
    let big_n = spec.ambient_dim;
    let mut unstable = DMatrix::zeros(big_n, k);
    for i in 0..k {
        unstable.column_mut(i).copy_from(&vectors[i]);
    }
    let mut stable = DMatrix::zeros(big_n, n - k);
    for i in k..n {
        stable.column_mut(i - k).copy_from(&vectors[i]);
    }
    let quotient_rep = match &spec.involution {
        Some(_) => {
            let rep = spec.canonical_representative(p)?;
            (rep - p).norm() < 1e-9
        }
        None => false,
    };
    Ok(CriticalPoint {
        id: 0,
        location: p.clone(),
        value: spec.f.value(p).map_err(GeometryError::from)?,
        index: k,
        eigenvalues,
        unstable_frame: unstable,
        stable_frame: stable,
        quotient_rep,
    })
}

/// Multistart search over low-discrepancy seeds; deduplicates, keeps only
/// canonical representatives on quotient specs, sorts by descending f value
/// (ties lexicographic) and assigns ids in that order.
pub fn find_critical_points(
    spec: &ManifoldSpec,
    cfg: &SearchConfig,
) -> Result<Vec<CriticalPoint>, CriticalError> {
    let n = spec.ambient_dim;
    let r = spec.bounding_radius;
    let seeds: Vec<DVector<f64>> = (0..cfg.seed_count)
        .filter_map(|i| {
            let p = DVector::from_fn(n, |d, _| (2.0 * halton(i + 1, PRIMES[d]) - 1.0) * r);
            spec.retract(&p).ok()
        })
        .collect();
    let found: Vec<DVector<f64>> = seeds
        .par_iter()
        .filter_map(|s| newton_from_seed(spec, s, cfg.newton_tol))
        .collect();
    let mut unique: Vec<DVector<f64>> = Vec::new();
    for p in found {
        let q = if spec.involution.is_some() {
            spec.canonical_representative(&p)?
        } else {
            p
        };
        if !unique.iter().any(|u| (u - &q).norm() < cfg.dedup_tol) {
            unique.push(q);
        }
    }
    if unique.is_empty() {
        return Err(CriticalError::NoneFound);
    }
    let mut crits: Vec<CriticalPoint> = unique
        .iter()
        .map(|p| classify_critical_point(spec, p))
        .collect::<Result<_, _>>()?;
    crits.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .unwrap()
            .then_with(|| {
                for i in 0..a.location.len() {
                    match a.location[i].partial_cmp(&b.location[i]).unwrap() {
                        std::cmp::Ordering::Equal => continue,
                        o => return o,
                    }
                }
                std::cmp::Ordering::Equal
            })
    });
    for (i, c) in crits.iter_mut().enumerate() {
        c.id = i;
    }
    Ok(crits)
}

/// Deterministic orientation choice: the unstable eigenframe ordered by
/// ascending eigenvalue, first vector's sign flipped by a seeded coin per
/// critical point.
pub fn assign_orientations(crits: &[CriticalPoint], seed: u64) -> OrientationAssignment {
    let mut frames = BTreeMap::new();
    for c in crits {
        let mut frame = c.unstable_frame.clone();
        if c.index >= 1 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c.id as u64).wrapping_mul(0x9E3779B97F4A7C15));
            if rng.gen::<bool>() {
                let col = -frame.column(0).into_owned();
                frame.column_mut(0).copy_from(&col);
            }
        }
        frames.insert(c.id, frame);
    }
    OrientationAssignment { seed, frames }
}

/// Frame of E^u at the non-representative lift σx, defined as the
/// dσ-pushforward of the representative's oriented frame.
pub fn pushforward_frame(spec: &ManifoldSpec, frame: &DMatrix<f64>) -> DMatrix<f64> {
    spec.involution.as_ref().expect("no involution") * frame
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolics::parse_expression;
    use std::sync::Arc;

    fn v(coords: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(coords)
    }

    fn sphere(f_text: &str, sigma: Option<DMatrix<f64>>) -> ManifoldSpec {
        let c = parse_expression("x1^2+x2^2+x3^2-1", 3).unwrap();
        let f = parse_expression(f_text, 3).unwrap();
        ManifoldSpec::new(3, vec![c], Arc::new(f), sigma, "sphere", 1.5).unwrap()
    }

    #[test]
    fn quadratic_sphere_six_points() {
        let s = sphere("3*x1^2+2*x2^2+x3^2", None);
        let crits = find_critical_points(&s, &SearchConfig::for_dimension(2)).unwrap();
        assert_eq!(crits.len(), 6);
        let indices: Vec<usize> = crits.iter().map(|c| c.index).collect();
        assert_eq!(indices, vec![2, 2, 1, 1, 0, 0]);
        // ±e1 maxima, ±e2 saddles, ±e3 minima
        for c in &crits {
            let axis = c
                .location
                .iter()
                .position(|x| x.abs() > 0.9)
                .unwrap();
            match c.index {
                2 => assert_eq!(axis, 0),
                1 => assert_eq!(axis, 1),
                _ => assert_eq!(axis, 2),
            }
        }
    }

    #[test]
    fn two_peaks_sphere_four_points() {
        let s = sphere("x3+2*x1^2", None);
        let crits = find_critical_points(&s, &SearchConfig::for_dimension(2)).unwrap();
        assert_eq!(crits.len(), 4);
        let indices: Vec<usize> = crits.iter().map(|c| c.index).collect();
        assert_eq!(indices, vec![2, 2, 1, 0]);
        let m = (15.0f64).sqrt() / 4.0;
        assert!((crits[0].location[0].abs() - m).abs() < 1e-8);
        assert!((crits[0].location[2] - 0.25).abs() < 1e-8);
        assert!((crits[2].location.clone() - v(&[0.0, 0.0, 1.0])).norm() < 1e-8);
        assert!((crits[3].location.clone() - v(&[0.0, 0.0, -1.0])).norm() < 1e-8);
    }

    #[test]
    fn quotient_three_representatives() {
        let sigma = -DMatrix::<f64>::identity(3, 3);
        let s = sphere("3*x1^2+2*x2^2+x3^2", Some(sigma));
        let crits = find_critical_points(&s, &SearchConfig::for_dimension(2)).unwrap();
        assert_eq!(crits.len(), 3);
        let indices: Vec<usize> = crits.iter().map(|c| c.index).collect();
        assert_eq!(indices, vec![2, 1, 0]);
        assert!(crits.iter().all(|c| c.quotient_rep));
    }

    #[test]
    fn height_poles_classification() {
        let s = sphere("x3", None);
        let north = classify_critical_point(&s, &v(&[0.0, 0.0, 1.0])).unwrap();
        assert_eq!(north.index, 2);
        assert!(north.eigenvalues.iter().all(|&l| (l + 1.0).abs() < 1e-9));
        let south = classify_critical_point(&s, &v(&[0.0, 0.0, -1.0])).unwrap();
        assert_eq!(south.index, 0);
        assert_eq!(south.unstable_frame.ncols(), 0);
        assert_eq!(south.stable_frame.ncols(), 2);
    }

    #[test]
    fn frames_are_eigenframes() {
        let s = sphere("3*x1^2+2*x2^2+x3^2", None);
        let crits = find_critical_points(&s, &SearchConfig::for_dimension(2)).unwrap();
        for c in &crits {
            let a = s.corrected_hessian(&c.location).unwrap();
            for (i, lam) in c.eigenvalues.iter().enumerate() {
                let v = if i < c.index {
                    c.unstable_frame.column(i).into_owned()
                } else {
                    c.stable_frame.column(i - c.index).into_owned()
                };
                let proj = s.tangent_projector(&c.location).unwrap();
                let hv = &proj * (&a * &v);
                assert!((hv - *lam * &v).norm() < 1e-7, "not an eigenvector");
                assert!(*lam != 0.0 && lam.abs() >= 1e-7);
            }
        }
    }

    #[test]
    fn orientation_determinism_and_flip() {
        let s = sphere("x3+2*x1^2", None);
        let crits = find_critical_points(&s, &SearchConfig::for_dimension(2)).unwrap();
        let a = assign_orientations(&crits, 5);
        let b = assign_orientations(&crits, 5);
        for c in &crits {
            assert_eq!(a.frame(c.id), b.frame(c.id));
            if c.index == 0 {
                assert_eq!(a.frame(c.id).ncols(), 0);
            }
        }
        let saddle = crits.iter().find(|c| c.index == 1).unwrap();
        let fl = a.flipped(saddle.id);
        assert_eq!(
            fl.frame(saddle.id).column(0),
            -a.frame(saddle.id).column(0)
        );
    }

    #[test]
    fn seed_count_stability() {
        let s = sphere("x3+2*x1^2", None);
        let mut cfg = SearchConfig::for_dimension(2);
        cfg.seed_count = 500;
        let small = find_critical_points(&s, &cfg).unwrap();
        cfg.seed_count = 2000;
        let large = find_critical_points(&s, &cfg).unwrap();
        assert_eq!(small.len(), large.len());
        for (a, b) in small.iter().zip(&large) {
            assert!((a.location.clone() - b.location.clone()).norm() < 1e-6);
        }
    }

    #[test]
    fn euler_characteristic_sphere() {
        let s = sphere("3*x1^2+2*x2^2+x3^2", None);
        let crits = find_critical_points(&s, &SearchConfig::for_dimension(2)).unwrap();
        let chi: i64 = crits
            .iter()
            .map(|c| if c.index % 2 == 0 { 1i64 } else { -1 })
            .sum();
        assert_eq!(chi, 2);
    }
}
