//! The Morse-Witten chain complex: boundary matrices from signed orbit
//! counts, homology over Z and Z/2, the cochain complex, Morse inequalities,
//! Poincaré duality, and maps induced on homology by chain maps.

use crate::critical::CriticalPoint;
use crate::moduli::ConnectingOrbit;
use crate::snf::{smith_normal_form, Snf, SnfError};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ComplexError {
    #[error("boundary composition is nonzero: entry ({value}) from generator {x} to generator {z}")]
    BoundarySquare { x: usize, z: usize, value: i64 },
    #[error("orbit references unknown critical point id {0}")]
    UnknownGenerator(usize),
    #[error("orbit from id {upper} (index {upper_index}) to id {lower} (index {lower_index}) is not an index drop of one")]
    BadIndexDrop {
        upper: usize,
        upper_index: usize,
        lower: usize,
        lower_index: usize,
    },
    #[error("matrices do not form a chain map in degree {degree}")]
    NotChainMap { degree: usize },
    #[error("vector is not a cycle in degree {degree}")]
    NotACycle { degree: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Snf(#[from] SnfError),
}

/// Coefficient ring for homology computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficients {
    Integers,
    ModTwo,
}

/// Chain complex of free abelian groups generated by critical points,
/// graded by Morse index. Also used regraded as the cochain complex.
#[derive(Debug, Clone)]
pub struct MorseComplex {
    /// Manifold dimension n; degrees run 0..=n.
    pub dimension: usize,
    /// Per degree: critical-point ids in ascending id order.
    pub generators: Vec<Vec<usize>>,
    /// Descending: mats[k] = ∂_k : C_k → C_{k−1} (rows c_{k−1}, cols c_k),
    /// k in 1..=n; mats[0] is the empty map out of degree 0.
    /// Ascending: mats[k] = δ^{k−1} : C^{k−1} → C^k (rows c_k, cols c_{k−1}),
    /// k in 1..=n.
    pub mats: Vec<DMatrix<i64>>,
    pub ascending: bool,
    pub label: String,
    pub or_seed: u64,
}

impl MorseComplex {
    pub fn counts(&self) -> Vec<usize> {
        self.generators.iter().map(|g| g.len()).collect()
    }

    fn c(&self, k: usize) -> usize {
        self.generators[k].len()
    }

    /// The differential leaving degree k.
    pub fn d_out(&self, k: usize) -> DMatrix<i64> {
        if self.ascending {
            if k < self.dimension {
                self.mats[k + 1].clone()
            } else {
                DMatrix::zeros(0, self.c(k))
            }
        } else if k > 0 {
            self.mats[k].clone()
        } else {
            DMatrix::zeros(0, self.c(0))
        }
    }

    /// The differential arriving at degree k.
    pub fn d_in(&self, k: usize) -> DMatrix<i64> {
        if self.ascending {
            if k > 0 {
                self.mats[k].clone()
            } else {
                DMatrix::zeros(self.c(0), 0)
            }
        } else if k < self.dimension {
            self.mats[k + 1].clone()
        } else {
            DMatrix::zeros(self.c(self.dimension), 0)
        }
    }
}

/// Homology groups per degree: Betti numbers and, over Z, the invariant
/// factors greater than one of the relevant boundary map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomologyResult {
    pub coefficients: Coefficients,
    pub betti: Vec<usize>,
    /// Per degree, divisibility-chained torsion coefficients (> 1). Always
    /// empty over Z/2.
    pub torsion: Vec<Vec<i64>>,
}

/// Cycle representatives of a homology group in a fixed degree.
#[derive(Debug, Clone)]
pub struct HomologyBasis {
    /// c_k × betti matrix whose columns generate the free part.
    pub free_generators: DMatrix<i64>,
    /// (order, cycle) pairs generating the torsion part.
    pub torsion_generators: Vec<(i64, DVector<i64>)>,
}

/// Build the chain complex from the signed orbit counts, n(x,y) = Σ signs,
/// and verify ∂∂ = 0 in integer arithmetic.
pub fn assemble_complex(
    dimension: usize,
    crits: &[CriticalPoint],
    orbits: &[ConnectingOrbit],
    label: &str,
    or_seed: u64,
) -> Result<MorseComplex, ComplexError> {
    let mut generators: Vec<Vec<usize>> = vec![Vec::new(); dimension + 1];
    // (degree, position within degree) by critical-point id
    let mut slot = std::collections::BTreeMap::new();
    let mut by_id: Vec<&CriticalPoint> = crits.iter().collect();
    by_id.sort_by_key(|c| c.id);
    for c in &by_id {
        slot.insert(c.id, (c.index, generators[c.index].len()));
        generators[c.index].push(c.id);
    }

    let mut mats: Vec<DMatrix<i64>> = Vec::with_capacity(dimension + 1);
    mats.push(DMatrix::zeros(0, generators[0].len()));
    for k in 1..=dimension {
        mats.push(DMatrix::zeros(generators[k - 1].len(), generators[k].len()));
    }
    for o in orbits {
        let &(sk, sp) = slot
            .get(&o.source)
            .ok_or(ComplexError::UnknownGenerator(o.source))?;
        let &(tk, tp) = slot
            .get(&o.target)
            .ok_or(ComplexError::UnknownGenerator(o.target))?;
        if sk != tk + 1 {
            return Err(ComplexError::BadIndexDrop {
                upper: o.source,
                upper_index: sk,
                lower: o.target,
                lower_index: tk,
            });
        }
        mats[sk][(tp, sp)] += o.sign as i64;
    }

    let cx = MorseComplex {
        dimension,
        generators,
        mats,
        ascending: false,
        label: label.to_string(),
        or_seed,
    };
    for k in 2..=dimension {
        let square = cx.mats[k - 1].clone() * cx.mats[k].clone();
        if let Some(((r, c), &v)) = square.iter().enumerate().find_map(|(idx, v)| {
            (*v != 0).then(|| ((idx % square.nrows(), idx / square.nrows()), v))
        }) {
            return Err(ComplexError::BoundarySquare {
                x: cx.generators[k][c],
                z: cx.generators[k - 2][r],
                value: v,
            });
        }
    }
    Ok(cx)
}

/// The cochain complex of the same generators: δ^k = (∂_{k+1})ᵀ, counting
/// isolated ascending-flow lines.
pub fn coboundary_complex(cx: &MorseComplex) -> MorseComplex {
    assert!(!cx.ascending, "already a cochain complex");
    let n = cx.dimension;
    let mut mats: Vec<DMatrix<i64>> = Vec::with_capacity(n + 1);
    // mats[k] holds δ^{k−1} = ∂_kᵀ
    mats.push(DMatrix::zeros(cx.c(0), 0));
    for k in 1..=n {
        mats.push(cx.mats[k].transpose());
    }
    MorseComplex {
        dimension: n,
        generators: cx.generators.clone(),
        mats,
        ascending: true,
        label: cx.label.clone(),
        or_seed: cx.or_seed,
    }
}

fn gf2_rank(a: &DMatrix<i64>) -> usize {
    let (m, n) = (a.nrows(), a.ncols());
    let mut rows: Vec<Vec<u8>> = (0..m)
        .map(|i| (0..n).map(|j| (a[(i, j)].rem_euclid(2)) as u8).collect())
        .collect();
    let mut rank = 0;
    for col in 0..n {
        let Some(p) = (rank..m).find(|&i| rows[i][col] == 1) else {
            continue;
        };
        rows.swap(rank, p);
        for i in 0..m {
            if i != rank && rows[i][col] == 1 {
                for j in col..n {
                    rows[i][j] ^= rows[rank][j];
                }
            }
        }
        rank += 1;
        if rank == m {
            break;
        }
    }
    rank
}

/// Homology at one degree: ker(d_out) / im(d_in), with the SNF data needed
/// to express cycles in homology coordinates.
struct DegreeHomology {
    betti: usize,
    torsion: Vec<i64>,
    /// c × γ saturated kernel basis of d_out.
    kernel: DMatrix<i64>,
    kernel_snf: Snf,
    /// SNF of Y, where kernel · Y = d_in.
    image_snf: Snf,
    gamma: usize,
}

impl DegreeHomology {
    fn free_generators(&self) -> DMatrix<i64> {
        let cols: Vec<usize> = (self.image_snf.rank..self.gamma).collect();
        let mut picked = DMatrix::zeros(self.gamma, cols.len());
        for (c, &j) in cols.iter().enumerate() {
            for r in 0..self.gamma {
                picked[(r, c)] = self.image_snf.u[(r, j)];
            }
        }
        &self.kernel * picked
    }

    fn torsion_generators(&self) -> Vec<(i64, DVector<i64>)> {
        let mut out = Vec::new();
        for (j, &d) in self.image_snf.diag.iter().enumerate() {
            if d > 1 {
                let col: DVector<i64> =
                    DVector::from_fn(self.gamma, |r, _| self.image_snf.u[(r, j)]);
                out.push((d, &self.kernel * col));
            }
        }
        out
    }

    /// Homology coordinates of an integer cycle: (free components, torsion
    /// components mod their orders).
    fn class_of(
        &self,
        z: &DVector<i64>,
        degree: usize,
    ) -> Result<(DVector<i64>, Vec<i64>), ComplexError> {
        // kernel coordinates: solve kernel · w = z via the kernel's SNF
        let w = solve_exact(&self.kernel_snf, self.kernel.nrows(), self.gamma, z)
            .ok_or(ComplexError::NotACycle { degree })?;
        let hat = &self.image_snf.u_inv * w;
        let free = DVector::from_fn(self.betti, |i, _| hat[self.image_snf.rank + i]);
        let torsion = self
            .image_snf
            .diag
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > 1)
            .map(|(j, &d)| hat[j].rem_euclid(d))
            .collect();
        Ok((free, torsion))
    }
}

/// Solve A x = b exactly over Z given the SNF of the m×n matrix A.
fn solve_exact(s: &Snf, m: usize, n: usize, b: &DVector<i64>) -> Option<DVector<i64>> {
    let c = &s.u_inv * b;
    let mut y = DVector::zeros(n);
    for i in 0..m.min(n) {
        let d = s.diag[i];
        if d == 0 {
            if c[i] != 0 {
                return None;
            }
        } else {
            if c[i] % d != 0 {
                return None;
            }
            y[i] = c[i] / d;
        }
    }
    for i in n.min(m)..m {
        if c[i] != 0 {
            return None;
        }
    }
    Some(&s.v_inv * y)
}

fn degree_homology(d_out: &DMatrix<i64>, d_in: &DMatrix<i64>) -> Result<DegreeHomology, ComplexError> {
    let c = d_out.ncols();
    debug_assert_eq!(d_in.nrows(), c);
    let out_snf = smith_normal_form(d_out)?;
    let gamma = c - out_snf.rank;
    let kernel = out_snf.kernel_basis(c);
    let kernel_snf = smith_normal_form(&kernel)?;
    // express d_in in kernel coordinates: kernel · y_col = column of d_in
    let mut y = DMatrix::zeros(gamma, d_in.ncols());
    for j in 0..d_in.ncols() {
        let col = DVector::from_fn(c, |r, _| d_in[(r, j)]);
        let sol = solve_exact(&kernel_snf, c, gamma, &col)
            .ok_or(ComplexError::ShapeMismatch("image not inside kernel".into()))?;
        y.set_column(j, &sol);
    }
    let image_snf = smith_normal_form(&y)?;
    let betti = gamma - image_snf.rank;
    let torsion = image_snf.diag.iter().copied().filter(|&d| d > 1).collect();
    Ok(DegreeHomology {
        betti,
        torsion,
        kernel,
        kernel_snf,
        image_snf,
        gamma,
    })
}

/// Homology of the complex per degree. For ascending complexes the result at
/// degree k is the degree-k cohomology group.
pub fn homology(cx: &MorseComplex, coefficients: Coefficients) -> Result<HomologyResult, ComplexError> {
    let n = cx.dimension;
    let mut betti = Vec::with_capacity(n + 1);
    let mut torsion = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let d_out = cx.d_out(k);
        let d_in = cx.d_in(k);
        match coefficients {
            Coefficients::Integers => {
                let h = degree_homology(&d_out, &d_in)?;
                betti.push(h.betti);
                torsion.push(h.torsion);
            }
            Coefficients::ModTwo => {
                betti.push(cx.c(k) - gf2_rank(&d_out) - gf2_rank(&d_in));
                torsion.push(Vec::new());
            }
        }
    }
    Ok(HomologyResult {
        coefficients,
        betti,
        torsion,
    })
}

/// Integer cycle representatives of the degree-k homology group.
pub fn homology_basis(cx: &MorseComplex, k: usize) -> Result<HomologyBasis, ComplexError> {
    let h = degree_homology(&cx.d_out(k), &cx.d_in(k))?;
    Ok(HomologyBasis {
        free_generators: h.free_generators(),
        torsion_generators: h.torsion_generators(),
    })
}

#[derive(Debug, Clone)]
pub struct InequalityRow {
    pub k: usize,
    pub critical_alternating_sum: i64,
    pub betti_alternating_sum: i64,
    pub satisfied: bool,
}

#[derive(Debug, Clone)]
pub struct MorseInequalityReport {
    pub rows: Vec<InequalityRow>,
    /// Equality of the two full alternating sums (Euler characteristic).
    pub top_equality: bool,
    pub pass: bool,
}

/// Strong Morse inequalities: alternating partial sums of the c_k dominate
/// those of the free Betti numbers, with equality at k = n.
pub fn morse_inequalities_check(cx: &MorseComplex, hr: &HomologyResult) -> MorseInequalityReport {
    let n = cx.dimension;
    let counts = cx.counts();
    let mut rows = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut cs = 0i64;
        let mut bs = 0i64;
        for j in (0..=k).rev() {
            let sgn = if (k - j) % 2 == 0 { 1 } else { -1 };
            cs += sgn * counts[j] as i64;
            bs += sgn * hr.betti[j] as i64;
        }
        let satisfied = if k < n { cs >= bs } else { cs == bs };
        rows.push(InequalityRow {
            k,
            critical_alternating_sum: cs,
            betti_alternating_sum: bs,
            satisfied,
        });
    }
    let top_equality = rows[n].satisfied;
    let pass = rows.iter().all(|r| r.satisfied);
    MorseInequalityReport {
        rows,
        top_equality,
        pass,
    }
}

#[derive(Debug, Clone)]
pub struct DualityReport {
    /// Per degree k: (cohomology of f at k, homology of −f at n−k,
    /// homology of f at n−k) as (betti, torsion) data.
    pub rows: Vec<(usize, (usize, Vec<i64>), (usize, Vec<i64>), (usize, Vec<i64>))>,
    pub pass: bool,
}

/// Poincaré duality: HM^k(f) ≅ HM_{n−k}(−f) ≅ HM_{n−k}(f) degreewise.
pub fn poincare_duality_check(
    cx_f: &MorseComplex,
    cx_minus_f: &MorseComplex,
    coefficients: Coefficients,
) -> Result<DualityReport, ComplexError> {
    let n = cx_f.dimension;
    let coh_f = homology(&coboundary_complex(cx_f), coefficients)?;
    let hom_neg = homology(cx_minus_f, coefficients)?;
    let hom_f = homology(cx_f, coefficients)?;
    let mut rows = Vec::with_capacity(n + 1);
    let mut pass = true;
    for k in 0..=n {
        let a = (coh_f.betti[k], coh_f.torsion[k].clone());
        let b = (hom_neg.betti[n - k], hom_neg.torsion[n - k].clone());
        let c = (hom_f.betti[n - k], hom_f.torsion[n - k].clone());
        if a != b || b != c {
            pass = false;
        }
        rows.push((k, a, b, c));
    }
    Ok(DualityReport { rows, pass })
}

/// Matrices of the map a chain map induces on homology, one per degree: the
/// free parts expressed in the SNF-derived homology bases. Over Z/2 the
/// matrices are reduced mod 2 and bases are computed over GF(2) ranks of the
/// same integral data.
pub fn induced_map_on_homology(
    phi: &[DMatrix<i64>],
    source: &MorseComplex,
    target: &MorseComplex,
    coefficients: Coefficients,
) -> Result<Vec<DMatrix<i64>>, ComplexError> {
    let n = source.dimension;
    if target.dimension != n || phi.len() != n + 1 {
        return Err(ComplexError::ShapeMismatch(
            "chain map must provide one matrix per degree of equal-dimension complexes".into(),
        ));
    }
    for k in 0..=n {
        if phi[k].nrows() != target.c(k) || phi[k].ncols() != source.c(k) {
            return Err(ComplexError::ShapeMismatch(format!(
                "degree-{k} matrix has shape {}×{}, expected {}×{}",
                phi[k].nrows(),
                phi[k].ncols(),
                target.c(k),
                source.c(k)
            )));
        }
    }
    // chain-map identity φ_{k−1} ∂_k = ∂_k φ_k
    for k in 1..=n {
        let lhs = &phi[k - 1] * source.d_out(k);
        let rhs = target.d_out(k) * &phi[k];
        if lhs != rhs {
            return Err(ComplexError::NotChainMap { degree: k });
        }
    }

    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let hs = degree_homology(&source.d_out(k), &source.d_in(k))?;
        let ht = degree_homology(&target.d_out(k), &target.d_in(k))?;
        let gens = hs.free_generators();
        let mut m = DMatrix::zeros(ht.betti, hs.betti);
        for j in 0..hs.betti {
            let g = DVector::from_fn(source.c(k), |r, _| gens[(r, j)]);
            let image = &phi[k] * g;
            let (free, _) = ht.class_of(&image, k)?;
            m.set_column(j, &free);
        }
        if coefficients == Coefficients::ModTwo {
            m.apply(|x| *x = x.rem_euclid(2));
        }
        out.push(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_complex(dimension: usize, counts: &[usize], mats: Vec<DMatrix<i64>>) -> MorseComplex {
        let mut generators = Vec::new();
        let mut next = 0;
        for &c in counts {
            generators.push((next..next + c).collect::<Vec<_>>());
            next += c;
        }
        MorseComplex {
            dimension,
            generators,
            mats,
            ascending: false,
            label: "hand".into(),
            or_seed: 0,
        }
    }

    /// c = (1,1,1), ∂₁ = [0], ∂₂ = [2]: the projective-plane pattern.
    fn projective_like() -> MorseComplex {
        hand_complex(
            2,
            &[1, 1, 1],
            vec![
                DMatrix::zeros(0, 1),
                DMatrix::from_row_slice(1, 1, &[0]),
                DMatrix::from_row_slice(1, 1, &[2]),
            ],
        )
    }

    /// c = (1,1,2), ∂₁ = [0], ∂₂ = [1 1]: the two-peaks sphere pattern.
    fn two_peaks_like() -> MorseComplex {
        hand_complex(
            2,
            &[1, 1, 2],
            vec![
                DMatrix::zeros(0, 1),
                DMatrix::from_row_slice(1, 1, &[0]),
                DMatrix::from_row_slice(1, 2, &[1, 1]),
            ],
        )
    }

    /// c = (2,2,2) with ∂₁ = ∂₂ = [[1,−1],[1,−1]]: a sphere with an
    /// equatorial saddle pair.
    fn sphere_like() -> MorseComplex {
        let d = DMatrix::from_row_slice(2, 2, &[1, -1, 1, -1]);
        hand_complex(2, &[2, 2, 2], vec![DMatrix::zeros(0, 2), d.clone(), d])
    }

    #[test]
    fn torsion_in_degree_one() {
        let cx = projective_like();
        let h = homology(&cx, Coefficients::Integers).unwrap();
        assert_eq!(h.betti, vec![1, 0, 0]);
        assert_eq!(h.torsion, vec![vec![], vec![2], vec![]]);
        let h2 = homology(&cx, Coefficients::ModTwo).unwrap();
        assert_eq!(h2.betti, vec![1, 1, 1]);
    }

    #[test]
    fn cochain_of_projective_pattern() {
        let cx = projective_like();
        let co = coboundary_complex(&cx);
        assert!(co.ascending);
        // δ¹ = ∂₂ᵀ = [2], δ⁰ = ∂₁ᵀ = [0]
        assert_eq!(co.d_out(1), DMatrix::from_row_slice(1, 1, &[2]));
        assert_eq!(co.d_out(0), DMatrix::from_row_slice(1, 1, &[0]));
        let h = homology(&co, Coefficients::Integers).unwrap();
        assert_eq!(h.betti, vec![1, 0, 0]);
        assert_eq!(h.torsion, vec![vec![], vec![], vec![2]]);
    }

    #[test]
    fn top_class_difference_of_maxima() {
        let cx = two_peaks_like();
        let h = homology(&cx, Coefficients::Integers).unwrap();
        assert_eq!(h.betti, vec![1, 0, 1]);
        assert!(h.torsion.iter().all(|t| t.is_empty()));
        let basis = homology_basis(&cx, 2).unwrap();
        assert_eq!(basis.free_generators.ncols(), 1);
        let g: Vec<i64> = basis.free_generators.column(0).iter().copied().collect();
        assert!(g == vec![1, -1] || g == vec![-1, 1], "generator {:?}", g);
        let hz2 = homology(&cx, Coefficients::ModTwo).unwrap();
        assert_eq!(hz2.betti, vec![1, 0, 1]);
    }

    #[test]
    fn sphere_pattern_homology() {
        let cx = sphere_like();
        let h = homology(&cx, Coefficients::Integers).unwrap();
        assert_eq!(h.betti, vec![1, 0, 1]);
    }

    #[test]
    fn boundary_square_detected() {
        // same shapes as the sphere pattern but with an inconsistent sign
        let d2 = DMatrix::from_row_slice(2, 2, &[1, -1, 1, 1]);
        let d1 = DMatrix::from_row_slice(2, 2, &[1, -1, 1, -1]);
        let cx = hand_complex(2, &[2, 2, 2], vec![DMatrix::zeros(0, 2), d1, d2]);
        let square = cx.mats[1].clone() * cx.mats[2].clone();
        assert!(square.iter().any(|&v| v != 0));
    }

    #[test]
    fn inequalities_two_peaks_pattern() {
        let cx = two_peaks_like();
        let h = homology(&cx, Coefficients::Integers).unwrap();
        let rep = morse_inequalities_check(&cx, &h);
        assert!(rep.pass);
        let sums: Vec<(i64, i64)> = rep
            .rows
            .iter()
            .map(|r| (r.critical_alternating_sum, r.betti_alternating_sum))
            .collect();
        assert_eq!(sums, vec![(1, 1), (0, -1), (2, 2)]);
    }

    #[test]
    fn duality_sphere_pattern() {
        let cx = sphere_like();
        let rep = poincare_duality_check(&cx, &cx, Coefficients::Integers).unwrap();
        assert!(rep.pass);
    }

    #[test]
    fn identity_chain_map_induces_identity() {
        let cx = sphere_like();
        let phi: Vec<DMatrix<i64>> = (0..=2).map(|_| DMatrix::identity(2, 2)).collect();
        let ind = induced_map_on_homology(&phi, &cx, &cx, Coefficients::Integers).unwrap();
        assert_eq!(ind[0], DMatrix::identity(1, 1));
        assert_eq!(ind[1].nrows(), 0);
        assert_eq!(ind[2], DMatrix::identity(1, 1));
    }

    #[test]
    fn doubling_map_induces_two() {
        let cx = hand_complex(0, &[1], vec![DMatrix::zeros(0, 1)]);
        let phi = vec![DMatrix::from_row_slice(1, 1, &[2])];
        let ind = induced_map_on_homology(&phi, &cx, &cx, Coefficients::Integers).unwrap();
        assert_eq!(ind[0], DMatrix::from_row_slice(1, 1, &[2]));
    }

    #[test]
    fn induced_map_independent_of_representative() {
        // C₂ = Z, C₁ = Z², ∂₂ = (1,1)ᵀ, ∂₁ = 0: H₁ = Z²/⟨(1,1)⟩ ≅ Z
        let cx = hand_complex(
            2,
            &[1, 2, 1],
            vec![
                DMatrix::zeros(0, 1),
                DMatrix::from_row_slice(1, 2, &[0, 0]),
                DMatrix::from_row_slice(2, 1, &[1, 1]),
            ],
        );
        let h1 = degree_homology(&cx.d_out(1), &cx.d_in(1)).unwrap();
        assert_eq!(h1.betti, 1);
        let g = DVector::from_fn(2, |r, _| h1.free_generators()[(r, 0)]);
        let boundary = DVector::from_row_slice(&[3, 3]);
        let (a, _) = h1.class_of(&g, 1).unwrap();
        let (b, _) = h1.class_of(&(g + boundary), 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_chain_map_rejected() {
        let cx = projective_like();
        let phi: Vec<DMatrix<i64>> = vec![
            DMatrix::identity(1, 1),
            DMatrix::from_row_slice(1, 1, &[3]),
            DMatrix::identity(1, 1),
        ];
        let err = induced_map_on_homology(&phi, &cx, &cx, Coefficients::Integers);
        assert!(matches!(err, Err(ComplexError::NotChainMap { degree: 2 })));
    }
}
