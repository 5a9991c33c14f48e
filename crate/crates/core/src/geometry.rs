//! Level-set presentation of a closed manifold M = {Φ=0} ⊂ ℝ^N with the
//! induced metric: retraction, tangent projection, Riemannian gradient and
//! Hessian, free-involution quotients, and the product-with-circle build.

use crate::symbolics::{EvalError, Expr, ScalarField};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

pub const CONSTRAINT_TOL: f64 = 1e-12;
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("retraction did not converge after {iterations} iterations (residual {residual:.3e})")]
    RetractionFailed { iterations: usize, residual: f64 },
    #[error("constraint Jacobian rank-deficient at {point:?} (smallest singular value {sigma:.3e})")]
    DegeneratePresentation { point: Vec<f64>, sigma: f64 },
    #[error("involution has a near fixed point at {point:?}")]
    InvolutionFixedPoint { point: Vec<f64> },
    #[error("invalid manifold presentation: {0}")]
    InvalidSpec(String),
}

/// Negation wrapper: the field −f, used for duality checks.
#[derive(Debug, Clone)]
pub struct NegField(pub Arc<dyn ScalarField>);

impl ScalarField for NegField {
    fn value(&self, p: &DVector<f64>) -> Result<f64, EvalError> {
        Ok(-self.0.value(p)?)
    }
    fn jet1(&self, p: &DVector<f64>) -> Result<crate::symbolics::Jet1, EvalError> {
        let j = self.0.jet1(p)?;
        Ok(crate::symbolics::Jet1 {
            value: -j.value,
            grad: -j.grad,
        })
    }
    fn jet2(&self, p: &DVector<f64>) -> Result<crate::symbolics::Jet2, EvalError> {
        Ok(self.0.jet2(p)?.neg())
    }
}

/// Closed manifold {Φ=0} ⊂ ℝ^N together with the function under study and an
/// optional free involution (for quotients computed on the double cover).
#[derive(Debug, Clone)]
pub struct ManifoldSpec {
    pub ambient_dim: usize,
    pub constraints: Vec<Expr>,
    pub f: Arc<dyn ScalarField>,
    pub dimension: usize,
    /// Linear involution σ with σ² = id, no fixed points on the manifold.
    pub involution: Option<DMatrix<f64>>,
    pub label: String,
    /// Half-width of the ambient box that contains the manifold; used for
    /// sampling seeds.
    pub bounding_radius: f64,
}

/// Ordered orthonormal basis of T_pM, stored as matrix columns.
#[derive(Debug, Clone)]
pub struct TangentFrame {
    pub base: DVector<f64>,
    /// N×m matrix, m ≤ n, orthonormal columns in ker J(base).
    pub vectors: DMatrix<f64>,
}

impl ManifoldSpec {
    pub fn new(
        ambient_dim: usize,
        constraints: Vec<Expr>,
        f: Arc<dyn ScalarField>,
        involution: Option<DMatrix<f64>>,
        label: impl Into<String>,
        bounding_radius: f64,
    ) -> Result<Self, GeometryError> {
        let codim = constraints.len();
        if codim == 0 || codim >= ambient_dim {
            return Err(GeometryError::InvalidSpec(format!(
                "need 1..{} constraints, got {}",
                ambient_dim, codim
            )));
        }
        if let Some(s) = &involution {
            if s.nrows() != ambient_dim || s.ncols() != ambient_dim {
                return Err(GeometryError::InvalidSpec(
                    "involution matrix has wrong shape".into(),
                ));
            }
            let id = DMatrix::identity(ambient_dim, ambient_dim);
            if (s * s - &id).amax() > 1e-12 {
                return Err(GeometryError::InvalidSpec(
                    "involution is not an exact involution".into(),
                ));
            }
        }
        Ok(ManifoldSpec {
            ambient_dim,
            dimension: ambient_dim - codim,
            constraints,
            f,
            involution,
            label: label.into(),
            bounding_radius,
        })
    }

    pub fn constraint_values(&self, p: &DVector<f64>) -> Result<DVector<f64>, EvalError> {
        let mut v = DVector::zeros(self.constraints.len());
        for (a, c) in self.constraints.iter().enumerate() {
            v[a] = c.value(p)?;
        }
        Ok(v)
    }

    pub fn on_manifold(&self, p: &DVector<f64>) -> bool {
        self.constraint_values(p)
            .map(|v| v.amax() < CONSTRAINT_TOL)
            .unwrap_or(false)
    }

    /// Constraint Jacobian J(p), rows = gradients of the Φ_a.
    pub fn constraint_jacobian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>, EvalError> {
        let m = self.constraints.len();
        let mut j = DMatrix::zeros(m, self.ambient_dim);
        for (a, c) in self.constraints.iter().enumerate() {
            let g = c.jet1(p)?;
            j.row_mut(a).copy_from(&g.grad.transpose());
        }
        Ok(j)
    }

    /// Gauss-Newton projection onto {Φ=0}; each step moves in the row space
    /// of the current Jacobian, i.e. normally to the manifold.
    pub fn retract(&self, p: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        let mut q = p.clone();
        for _ in 0..50 {
            let phi = self.constraint_values(&q)?;
            if phi.amax() < CONSTRAINT_TOL {
                return Ok(q);
            }
            let j = self.constraint_jacobian(&q)?;
            let jjt = &j * j.transpose();
            let sol = jjt
                .clone()
                .lu()
                .solve(&phi)
                .ok_or_else(|| GeometryError::DegeneratePresentation {
                    point: q.iter().copied().collect(),
                    sigma: 0.0,
                })?;
            q -= j.transpose() * sol;
        }
        let residual = self.constraint_values(&q)?.amax();
        if residual < CONSTRAINT_TOL {
            Ok(q)
        } else {
            Err(GeometryError::RetractionFailed {
                iterations: 50,
                residual,
            })
        }
    }

    /// P = I − Jᵀ(JJᵀ)⁻¹J, the orthogonal projector onto T_pM.
    pub fn tangent_projector(&self, p: &DVector<f64>) -> Result<DMatrix<f64>, GeometryError> {
        let j = self.constraint_jacobian(p)?;
        let svd = j.clone().svd(false, false);
        let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if smin < RANK_TOL {
            return Err(GeometryError::DegeneratePresentation {
                point: p.iter().copied().collect(),
                sigma: smin,
            });
        }
        let jjt = &j * j.transpose();
        let inv = jjt.try_inverse().ok_or(GeometryError::DegeneratePresentation {
            point: p.iter().copied().collect(),
            sigma: smin,
        })?;
        Ok(DMatrix::identity(self.ambient_dim, self.ambient_dim) - j.transpose() * inv * j)
    }

    /// Orthonormal basis of ker J(p) from the spectral decomposition of the
    /// tangent projector (eigenvalues cluster at 0 and 1).
    pub fn tangent_basis(&self, p: &DVector<f64>) -> Result<TangentFrame, GeometryError> {
        let proj = self.tangent_projector(p)?;
        let eig = nalgebra::SymmetricEigen::new(proj);
        let mut cols: Vec<DVector<f64>> = Vec::new();
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > 0.5 {
                cols.push(eig.eigenvectors.column(i).into_owned());
            }
        }
        if cols.len() != self.dimension {
            return Err(GeometryError::DegeneratePresentation {
                point: p.iter().copied().collect(),
                sigma: 0.0,
            });
        }
        let mut m = DMatrix::zeros(self.ambient_dim, self.dimension);
        for (i, c) in cols.iter().enumerate() {
            m.column_mut(i).copy_from(c);
        }
        Ok(TangentFrame {
            base: p.clone(),
            vectors: m,
        })
    }

    /// ∇^M f(p) = P · (ambient gradient).
    pub fn riemannian_gradient(&self, p: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        let g = self.f.jet1(p)?;
        let proj = self.tangent_projector(p)?;
        Ok(proj * g.grad)
    }

    /// Lagrange multipliers λ with Jᵀλ ≈ ∇f (least squares).
    pub fn multipliers(&self, p: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        let g = self.f.jet1(p)?;
        let j = self.constraint_jacobian(p)?;
        let jjt = &j * j.transpose();
        let rhs = &j * g.grad;
        jjt.lu()
            .solve(&rhs)
            .ok_or(GeometryError::DegeneratePresentation {
                point: p.iter().copied().collect(),
                sigma: 0.0,
            })
    }

    /// Ambient N×N matrix ∇²f − Σ_a λ_a ∇²Φ_a with least-squares λ.
    /// Restricted to the tangent space at a critical point this is the
    /// Riemannian Hessian; sandwiched between projectors it drives the
    /// variational equation of the projected gradient flow.
    pub fn corrected_hessian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>, GeometryError> {
        let jf = self.f.jet2(p)?;
        let lambda = self.multipliers(p)?;
        let mut h = jf.hess;
        for (a, c) in self.constraints.iter().enumerate() {
            let jc = c.eval_jet2(p)?;
            h -= lambda[a] * jc.hess;
        }
        Ok(h)
    }

    /// Matrix of the Riemannian Hessian in the given orthonormal tangent
    /// frame; only meaningful when p is critical.
    pub fn hessian_in_frame(
        &self,
        p: &DVector<f64>,
        frame: &TangentFrame,
    ) -> Result<DMatrix<f64>, GeometryError> {
        let a = self.corrected_hessian(p)?;
        let m = frame.vectors.ncols();
        let raw = frame.vectors.transpose() * a * &frame.vectors;
        let mut h = DMatrix::zeros(m, m);
        for jcol in 0..m {
            for i in 0..=jcol {
                let v = 0.5 * (raw[(i, jcol)] + raw[(jcol, i)]);
                h[(i, jcol)] = v;
                h[(jcol, i)] = v;
            }
        }
        Ok(h)
    }

    /// Deterministic representative of the σ-orbit {p, σp}: whichever is
    /// lexicographically larger at the first coordinate differing by > 1e−9.
    pub fn canonical_representative(
        &self,
        p: &DVector<f64>,
    ) -> Result<DVector<f64>, GeometryError> {
        let sigma = self
            .involution
            .as_ref()
            .ok_or_else(|| GeometryError::InvalidSpec("no involution in spec".into()))?;
        let sp = sigma * p;
        for i in 0..self.ambient_dim {
            let d = p[i] - sp[i];
            if d.abs() > 1e-9 {
                return Ok(if d > 0.0 { p.clone() } else { sp });
            }
        }
        Err(GeometryError::InvolutionFixedPoint {
            point: p.iter().copied().collect(),
        })
    }

    pub fn apply_involution(&self, p: &DVector<f64>) -> DVector<f64> {
        self.involution.as_ref().expect("no involution") * p
    }

    /// M×S¹ ⊂ ℝ^{N+2} with circle constraint on the two appended coordinates;
    /// the product function must be supplied by the caller.
    pub fn product_with_circle(
        &self,
        f: Arc<dyn ScalarField>,
        label: impl Into<String>,
    ) -> Result<ManifoldSpec, GeometryError> {
        let big_n = self.ambient_dim + 2;
        let mut constraints = self.constraints.clone();
        let circle = Expr::parse(
            &format!("x{}^2+x{}^2-1", self.ambient_dim + 1, self.ambient_dim + 2),
            big_n,
        )
        .expect("circle constraint");
        constraints.push(circle);
        ManifoldSpec::new(
            big_n,
            constraints,
            f,
            None,
            label,
            self.bounding_radius.max(1.0),
        )
    }

    /// Circle coordinate s ∈ [−1,1] of a point on a product spec.
    pub fn circle_coordinate(&self, p: &DVector<f64>) -> f64 {
        let s1 = p[self.ambient_dim - 2];
        let s2 = p[self.ambient_dim - 1];
        s2.atan2(s1) / std::f64::consts::PI
    }

    /// Pseudorandom on-manifold points, reproducible from the seed.
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = self.bounding_radius;
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0;
        while out.len() < count && attempts < count * 200 {
            attempts += 1;
            let p = DVector::from_fn(self.ambient_dim, |_, _| rng.gen_range(-r..r));
            if let Ok(q) = self.retract(&p) {
                out.push(q);
            }
        }
        out
    }

    /// Validates rank and involution compatibility on sampled points.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let samples = self.sample_points(50, 0xD1CE);
        if samples.len() < 10 {
            return Err(GeometryError::InvalidSpec(
                "could not sample the manifold (empty or ill-posed constraint set?)".into(),
            ));
        }
        for p in &samples {
            let j = self.constraint_jacobian(p)?;
            let svd = j.svd(false, false);
            let smin = svd
                .singular_values
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if smin < RANK_TOL {
                return Err(GeometryError::DegeneratePresentation {
                    point: p.iter().copied().collect(),
                    sigma: smin,
                });
            }
            if let Some(sigma) = &self.involution {
                let sp = sigma * p;
                if self.constraint_values(&sp)?.amax() > 1e-10 {
                    return Err(GeometryError::InvalidSpec(
                        "involution does not preserve the constraint set".into(),
                    ));
                }
                let df = (self.f.value(&sp)? - self.f.value(p)?).abs();
                if df > 1e-10 {
                    return Err(GeometryError::InvalidSpec(
                        "function is not involution-invariant".into(),
                    ));
                }
                if (sp - p).norm() < 0.1 {
                    return Err(GeometryError::InvolutionFixedPoint {
                        point: p.iter().copied().collect(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Project `vectors` (columns) to T_pM and orthonormalize in order by
/// modified Gram-Schmidt. The orientation of the result agrees with the
/// orientation of the projected set by construction (positive diagonal).
pub fn project_frame(
    spec: &ManifoldSpec,
    p: &DVector<f64>,
    vectors: &DMatrix<f64>,
) -> Result<TangentFrame, GeometryError> {
    let proj = spec.tangent_projector(p)?;
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(vectors.ncols());
    for i in 0..vectors.ncols() {
        let mut v = &proj * vectors.column(i);
        for u in &cols {
            let c = u.dot(&v);
            v -= c * u;
        }
        let nrm = v.norm();
        if nrm < 1e-10 {
            return Err(GeometryError::InvalidSpec(
                "frame collapsed under tangent projection".into(),
            ));
        }
        cols.push(v / nrm);
    }
    let mut m = DMatrix::zeros(p.len(), cols.len());
    for (i, c) in cols.iter().enumerate() {
        m.column_mut(i).copy_from(c);
    }
    Ok(TangentFrame {
        base: p.clone(),
        vectors: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolics::parse_expression;
    use approx::assert_abs_diff_eq;

    fn v(coords: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(coords)
    }

    fn sphere(f_text: &str) -> ManifoldSpec {
        let c = parse_expression("x1^2+x2^2+x3^2-1", 3).unwrap();
        let f = parse_expression(f_text, 3).unwrap();
        ManifoldSpec::new(3, vec![c], Arc::new(f), None, "sphere", 1.5).unwrap()
    }

    fn torus_flat(f_text: &str) -> ManifoldSpec {
        let c = parse_expression("(sqrt(x1^2+x2^2)-2)^2+x3^2-1", 3).unwrap();
        let f = parse_expression(f_text, 3).unwrap();
        ManifoldSpec::new(3, vec![c], Arc::new(f), None, "torus", 3.5).unwrap()
    }

    #[test]
    fn sphere_retraction_radial() {
        let s = sphere("x3");
        let q = s.retract(&v(&[1.0000001, 0.0, 0.0])).unwrap();
        assert!((q - v(&[1.0, 0.0, 0.0])).norm() < 1e-10);

        let p = v(&[0.6, 0.8, 0.001]);
        let q = s.retract(&p).unwrap();
        let oracle = &p / p.norm();
        assert!((q - oracle).norm() < 1e-6);
        assert!(s.on_manifold(&s.retract(&p).unwrap()));
    }

    #[test]
    fn torus_retraction_axis_plane() {
        let t = torus_flat("x3");
        let q = t.retract(&v(&[3.001, 0.0, 0.0])).unwrap();
        assert!((q - v(&[3.0, 0.0, 0.0])).norm() < 1e-6);
    }

    #[test]
    fn projector_at_poles() {
        let s = sphere("x3");
        let p = s.tangent_projector(&v(&[0.0, 0.0, 1.0])).unwrap();
        let expected = DMatrix::from_diagonal(&v(&[1.0, 1.0, 0.0]));
        assert!((p - expected).amax() < 1e-12);
        let p = s.tangent_projector(&v(&[1.0, 0.0, 0.0])).unwrap();
        let expected = DMatrix::from_diagonal(&v(&[0.0, 1.0, 1.0]));
        assert!((p - expected).amax() < 1e-12);
    }

    #[test]
    fn gradient_on_sphere() {
        let s = sphere("x3");
        assert!(s.riemannian_gradient(&v(&[0.0, 0.0, 1.0])).unwrap().norm() < 1e-12);
        let g = s.riemannian_gradient(&v(&[1.0, 0.0, 0.0])).unwrap();
        assert!((g - v(&[0.0, 0.0, 1.0])).norm() < 1e-12);

        let q = sphere("3*x1^2+2*x2^2+x3^2");
        assert!(q.riemannian_gradient(&v(&[0.0, 1.0, 0.0])).unwrap().norm() < 1e-12);
    }

    #[test]
    fn quadratic_hessians() {
        let s = sphere("3*x1^2+2*x2^2+x3^2");
        // min at ±e3: eigenvalues (4,2)
        let p = v(&[0.0, 0.0, 1.0]);
        let fr = s.tangent_basis(&p).unwrap();
        let h = s.hessian_in_frame(&p, &fr).unwrap();
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(h).eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(ev[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ev[1], 4.0, epsilon = 1e-9);
        // max at ±e1: eigenvalues (−4,−2)
        let p = v(&[1.0, 0.0, 0.0]);
        let fr = s.tangent_basis(&p).unwrap();
        let h = s.hessian_in_frame(&p, &fr).unwrap();
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(h).eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(ev[0], -4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ev[1], -2.0, epsilon = 1e-9);
        // saddle at ±e2: eigenvalues (−2,2)
        let p = v(&[0.0, 1.0, 0.0]);
        let fr = s.tangent_basis(&p).unwrap();
        let h = s.hessian_in_frame(&p, &fr).unwrap();
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(h).eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(ev[0], -2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ev[1], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn height_hessian_at_poles() {
        let s = sphere("x3");
        let north = v(&[0.0, 0.0, 1.0]);
        let fr = s.tangent_basis(&north).unwrap();
        let h = s.hessian_in_frame(&north, &fr).unwrap();
        let ev = nalgebra::SymmetricEigen::new(h).eigenvalues;
        for lam in ev.iter() {
            assert_abs_diff_eq!(*lam, -1.0, epsilon = 1e-9);
        }
        let south = v(&[0.0, 0.0, -1.0]);
        let fr = s.tangent_basis(&south).unwrap();
        let h = s.hessian_in_frame(&south, &fr).unwrap();
        let ev = nalgebra::SymmetricEigen::new(h).eigenvalues;
        for lam in ev.iter() {
            assert_abs_diff_eq!(*lam, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn representative_rule() {
        let c = parse_expression("x1^2+x2^2+x3^2-1", 3).unwrap();
        let f = parse_expression("3*x1^2+2*x2^2+x3^2", 3).unwrap();
        let sigma = -DMatrix::<f64>::identity(3, 3);
        let s = ManifoldSpec::new(3, vec![c], Arc::new(f), Some(sigma), "rp2", 1.5).unwrap();
        assert_eq!(
            s.canonical_representative(&v(&[0.0, 0.0, -1.0])).unwrap(),
            v(&[0.0, 0.0, 1.0])
        );
        assert_eq!(
            s.canonical_representative(&v(&[0.0, 0.0, 1.0])).unwrap(),
            v(&[0.0, 0.0, 1.0])
        );
        assert_eq!(
            s.canonical_representative(&v(&[-0.6, 0.8, 0.0])).unwrap(),
            v(&[0.6, -0.8, 0.0])
        );
    }

    #[test]
    fn product_dimensions_and_angle() {
        let s = sphere("x3");
        let f2 = parse_expression("x3", 5).unwrap();
        let prod = s.product_with_circle(Arc::new(f2), "sphere*circle").unwrap();
        assert_eq!(prod.ambient_dim, 5);
        assert_eq!(prod.constraints.len(), 2);
        assert_eq!(prod.dimension, 3);
        assert_abs_diff_eq!(
            prod.circle_coordinate(&v(&[1.0, 0.0, 0.0, 1.0, 0.0])),
            0.0
        );
        assert_abs_diff_eq!(
            prod.circle_coordinate(&v(&[1.0, 0.0, 0.0, -1.0, 0.0])),
            1.0
        );
    }

    #[test]
    fn projector_identities_on_samples() {
        for spec in [sphere("x3"), torus_flat("x3")] {
            for p in spec.sample_points(100, 7) {
                let proj = spec.tangent_projector(&p).unwrap();
                assert!((&proj * &proj - &proj).amax() < 1e-10);
                let j = spec.constraint_jacobian(&p).unwrap();
                assert!((&proj * j.transpose()).amax() < 1e-10);
                let g = spec.riemannian_gradient(&p).unwrap();
                assert!((&j * g).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn frame_eigenvalue_rotation_invariance() {
        use rand::Rng;
        let s = sphere("3*x1^2+2*x2^2+x3^2");
        let p = v(&[0.0, 1.0, 0.0]);
        let fr = s.tangent_basis(&p).unwrap();
        let h = s.hessian_in_frame(&p, &fr).unwrap();
        let mut ev1: Vec<f64> = nalgebra::SymmetricEigen::new(h).eigenvalues.iter().cloned().collect();
        ev1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let theta: f64 = rng.gen_range(0.0..6.28);
        let rot =
            DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        let fr2 = TangentFrame {
            base: fr.base.clone(),
            vectors: &fr.vectors * rot,
        };
        let h2 = s.hessian_in_frame(&p, &fr2).unwrap();
        let mut ev2: Vec<f64> = nalgebra::SymmetricEigen::new(h2).eigenvalues.iter().cloned().collect();
        ev2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in ev1.iter().zip(&ev2) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn validation_passes_builtin_shapes() {
        sphere("x3").validate().unwrap();
        torus_flat("x3").validate().unwrap();
    }
}
