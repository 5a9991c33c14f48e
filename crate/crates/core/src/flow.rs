//! Negative gradient flow on the constraint manifold: adaptive integration
//! with limit capture, frame transport along trajectories by the variational
//! equation, linearized flow at critical points, and local stable-manifold
//! graphs by the contraction iteration.

use crate::critical::CriticalPoint;
use crate::geometry::{GeometryError, ManifoldSpec};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const CAPTURE_RADIUS: f64 = 1e-3;
pub const FINAL_RADIUS: f64 = 1e-4;
pub const LOCAL_ERROR_TOL: f64 = 1e-10;
/// Stable component must dominate the unstable one by this factor before a
/// capture is accepted (rejects close passes by saddles).
pub const DOMINANCE: f64 = 100.0;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("trajectory did not resolve its limit within time {max_time}")]
    UnresolvedLimit { max_time: f64 },
    #[error("transported frame became ill-conditioned (cond {0:.3e})")]
    TransportFailure(f64),
    #[error("stable-graph iteration is not contracting; reduce the radius")]
    RadiusTooLarge,
    #[error("step size collapsed below 1e-14 at time {0}")]
    StepCollapse(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Flow of −∇f (f decreasing).
    Forward,
    /// Flow of +∇f.
    Backward,
}

#[derive(Debug, Clone)]
pub struct StopConfig {
    pub max_time: f64,
    pub capture_radius: f64,
    pub level_crossings: Vec<f64>,
}

/// Process-wide default integration time budget, as f64 bits.
static DEFAULT_MAX_TIME: std::sync::atomic::AtomicU64 =
    std::sync::atomic::AtomicU64::new(0x407F_4000_0000_0000); // 500.0

/// Override the time budget used by `StopConfig::default`. Intended for a
/// one-time call at program start.
pub fn set_default_max_time(t: f64) {
    DEFAULT_MAX_TIME.store(t.to_bits(), std::sync::atomic::Ordering::Relaxed);
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig {
            max_time: f64::from_bits(
                DEFAULT_MAX_TIME.load(std::sync::atomic::Ordering::Relaxed),
            ),
            capture_radius: CAPTURE_RADIUS,
            level_crossings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// (integration time, on-manifold point), in integration order.
    pub samples: Vec<(f64, DVector<f64>)>,
    pub direction: Direction,
    /// Critical point reached as t → +∞ of the −∇f flow.
    pub omega_limit: Option<usize>,
    /// Critical point reached as t → −∞ of the −∇f flow.
    pub alpha_limit: Option<usize>,
    /// (level value a, crossing point on f⁻¹(a)).
    pub crossing_events: Vec<(f64, DVector<f64>)>,
}

impl Trajectory {
    pub fn start(&self) -> &DVector<f64> {
        &self.samples[0].1
    }

    pub fn end(&self) -> &DVector<f64> {
        &self.samples.last().unwrap().1
    }

    /// The same curve reparametrized in forward flow order. For a backward
    /// trajectory this reverses the sample list; limits swap accordingly.
    pub fn reversed_to_forward(&self) -> Trajectory {
        match self.direction {
            Direction::Forward => self.clone(),
            Direction::Backward => {
                let t_end = self.samples.last().unwrap().0;
                let samples = self
                    .samples
                    .iter()
                    .rev()
                    .map(|(t, p)| (t_end - t, p.clone()))
                    .collect();
                Trajectory {
                    samples,
                    direction: Direction::Forward,
                    omega_limit: self.alpha_limit,
                    alpha_limit: self.omega_limit,
                    crossing_events: self.crossing_events.clone(),
                }
            }
        }
    }
}

fn gradient_field(
    spec: &ManifoldSpec,
    p: &DVector<f64>,
    direction: Direction,
) -> Result<DVector<f64>, GeometryError> {
    let g = spec.riemannian_gradient(p)?;
    Ok(match direction {
        Direction::Forward => -g,
        Direction::Backward => g,
    })
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 4th-order weights (with the FSAL 7th stage).
const E1: f64 = 5179.0 / 57600.0;
const E3: f64 = 7571.0 / 16695.0;
const E4: f64 = 393.0 / 640.0;
const E5: f64 = -92097.0 / 339200.0;
const E6: f64 = 187.0 / 2100.0;
const E7: f64 = 1.0 / 40.0;

/// One embedded Dormand-Prince step; returns (5th-order result, error norm).
fn dopri5_step(
    spec: &ManifoldSpec,
    p: &DVector<f64>,
    h: f64,
    dir: Direction,
) -> Result<(DVector<f64>, f64), GeometryError> {
    let k1 = gradient_field(spec, p, dir)?;
    let k2 = gradient_field(spec, &(p + h * A21 * &k1), dir)?;
    let k3 = gradient_field(spec, &(p + h * (A31 * &k1 + A32 * &k2)), dir)?;
    let k4 = gradient_field(spec, &(p + h * (A41 * &k1 + A42 * &k2 + A43 * &k3)), dir)?;
    let k5 = gradient_field(
        spec,
        &(p + h * (A51 * &k1 + A52 * &k2 + A53 * &k3 + A54 * &k4)),
        dir,
    )?;
    let k6 = gradient_field(
        spec,
        &(p + h * (A61 * &k1 + A62 * &k2 + A63 * &k3 + A64 * &k4 + A65 * &k5)),
        dir,
    )?;
    let y5 = p + h * (B1 * &k1 + B3 * &k3 + B4 * &k4 + B5 * &k5 + B6 * &k6);
    let k7 = gradient_field(spec, &y5, dir)?;
    let y4 = p + h * (E1 * &k1 + E3 * &k3 + E4 * &k4 + E5 * &k5 + E6 * &k6 + E7 * &k7);
    let err = (&y5 - y4).norm();
    Ok((y5, err))
}

/// Distance split of p − x into stable/unstable eigenspace components of the
/// critical point, in the sense relevant for capture in the given direction.
fn capture_ok(crit: &CriticalPoint, p: &DVector<f64>, dir: Direction) -> bool {
    let d = p - &crit.location;
    let us = (crit.unstable_frame.transpose() * &d).norm();
    let ss = (crit.stable_frame.transpose() * &d).norm();
    match dir {
        // Approaching along W^s: stable component must dominate.
        Direction::Forward => crit.index == crit.eigenvalues.len() || ss >= DOMINANCE * us || us < 1e-12,
        // Backward flow approaches along W^u.
        Direction::Backward => crit.index == 0 || us >= DOMINANCE * ss || ss < 1e-12,
    }
}

/// Integrate the projected gradient flow from p0, capturing the limit among
/// the supplied critical points, recording requested level crossings.
pub fn integrate_trajectory(
    spec: &ManifoldSpec,
    crits: &[CriticalPoint],
    p0: &DVector<f64>,
    direction: Direction,
    cfg: &StopConfig,
) -> Result<Trajectory, FlowError> {
    let p0 = spec.retract(p0)?;
    // Singular orbit: already at a critical point.
    if let Some(c) = crits.iter().find(|c| (&c.location - &p0).norm() < FINAL_RADIUS) {
        if spec.riemannian_gradient(&p0)?.norm() < 1e-6 {
            return Ok(Trajectory {
                samples: vec![(0.0, c.location.clone())],
                direction,
                omega_limit: Some(c.id),
                alpha_limit: Some(c.id),
                crossing_events: Vec::new(),
            });
        }
    }
    let mut t = 0.0;
    let mut p = p0;
    let mut h: f64 = 1e-3;
    let mut samples = vec![(t, p.clone())];
    let mut crossings: Vec<(f64, DVector<f64>)> = Vec::new();
    let mut limit: Option<usize> = None;
    while t < cfg.max_time {
        h = h.min(cfg.max_time - t).min(1.0);
        let (q_raw, err) = dopri5_step(spec, &p, h, direction)?;
        if err > LOCAL_ERROR_TOL {
            h *= (0.9 * (LOCAL_ERROR_TOL / err).powf(0.2)).max(0.2);
            if h < 1e-14 {
                return Err(FlowError::StepCollapse(t));
            }
            continue;
        }
        let q = spec.retract(&q_raw)?;
        let f_old = spec.f.value(&p).map_err(GeometryError::from)?;
        let f_new = spec.f.value(&q).map_err(GeometryError::from)?;
        for &a in &cfg.level_crossings {
            let (lo, hi) = if f_new < f_old { (f_new, f_old) } else { (f_old, f_new) };
            if lo < a && a <= hi {
                let cp = refine_crossing(spec, &p, h, direction, a)?;
                crossings.push((a, cp));
            }
        }
        t += h;
        p = q;
        samples.push((t, p.clone()));
        if err > 0.0 {
            h *= (0.9 * (LOCAL_ERROR_TOL / err).powf(0.2)).clamp(0.2, 5.0);
        } else {
            h *= 5.0;
        }
        // Capture test against the nearest critical point.
        if let Some(c) = crits
            .iter()
            .min_by(|a, b| {
                let da = (&a.location - &p).norm();
                let db = (&b.location - &p).norm();
                da.partial_cmp(&db).unwrap()
            })
        {
            let d = (&c.location - &p).norm();
            if d < FINAL_RADIUS && capture_ok(c, &p, direction) {
                limit = Some(c.id);
                break;
            }
        }
    }
    let limit = match limit {
        Some(l) => l,
        None => {
            return Err(FlowError::UnresolvedLimit {
                max_time: cfg.max_time,
            })
        }
    };
    let (omega, alpha) = match direction {
        Direction::Forward => (Some(limit), None),
        Direction::Backward => (None, Some(limit)),
    };
    Ok(Trajectory {
        samples,
        direction,
        omega_limit: omega,
        alpha_limit: alpha,
        crossing_events: crossings,
    })
}

/// Secant refinement in integration time for the crossing of f = a inside
/// one accepted step starting at p; returns the crossing point on M.
fn refine_crossing(
    spec: &ManifoldSpec,
    p: &DVector<f64>,
    h: f64,
    dir: Direction,
    a: f64,
) -> Result<DVector<f64>, FlowError> {
    let f_at = |tau: f64| -> Result<(f64, DVector<f64>), FlowError> {
        // Fixed substeps keep the evaluation smooth in tau.
        let steps = 8;
        let mut q = p.clone();
        let dt = tau / steps as f64;
        for _ in 0..steps {
            let (qn, _) = dopri5_step(spec, &q, dt, dir)?;
            q = spec.retract(&qn)?;
        }
        let f = spec.f.value(&q).map_err(GeometryError::from)?;
        Ok((f, q))
    };
    let (mut t0, mut t1) = (0.0_f64, h);
    let (mut f0, _) = f_at(t0)?;
    let (mut f1, mut q1) = f_at(t1)?;
    for _ in 0..60 {
        if (f1 - a).abs() < 1e-10 {
            return Ok(q1);
        }
        if (f1 - f0).abs() < 1e-16 {
            break;
        }
        let tm = t1 - (f1 - a) * (t1 - t0) / (f1 - f0);
        let tm = tm.clamp(0.0, h);
        let (fm, qm) = f_at(tm)?;
        t0 = t1;
        f0 = f1;
        t1 = tm;
        f1 = fm;
        q1 = qm;
    }
    Ok(q1)
}

/// Frame carried along a trajectory together with the orientation sign
/// accumulated through re-orthonormalizations.
#[derive(Debug, Clone)]
pub struct TransportedFrame {
    pub vectors: DMatrix<f64>,
    pub sign: i32,
}

/// QR re-orthonormalization that preserves orientation: diag(R) is forced
/// positive, so the returned Q spans and orients like the input columns.
fn reorthonormalize(m: &DMatrix<f64>) -> Result<DMatrix<f64>, FlowError> {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 0.0 || smax / smin > 1e8 {
        return Err(FlowError::TransportFailure(smax / smin));
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for i in 0..r.nrows().min(r.ncols()) {
        if r[(i, i)] < 0.0 {
            let c = -q.column(i).into_owned();
            q.column_mut(i).copy_from(&c);
        }
    }
    Ok(q)
}

/// Transport a tangent frame along a trajectory by the variational equation
/// ξ̇ = −P(∇²f − Σλ_a∇²Φ_a)Pξ (sign per the trajectory's direction), with
/// tangent re-projection each step and orientation-preserving QR every 10.
pub fn variational_transport(
    spec: &ManifoldSpec,
    traj: &Trajectory,
    frame: &DMatrix<f64>,
) -> Result<TransportedFrame, FlowError> {
    if traj.samples.len() < 2 {
        return Ok(TransportedFrame {
            vectors: frame.clone(),
            sign: 1,
        });
    }
    let sgn = match traj.direction {
        Direction::Forward => -1.0,
        Direction::Backward => 1.0,
    };
    let coeff = |p: &DVector<f64>| -> Result<DMatrix<f64>, FlowError> {
        let proj = spec.tangent_projector(p)?;
        let a = spec.corrected_hessian(p)?;
        Ok(sgn * (&proj * a * &proj))
    };
    let mut xi = frame.clone();
    let mut steps_since_qr = 0;
    for w in traj.samples.windows(2) {
        let (t0, ref p0) = w[0];
        let (t1, ref p1) = w[1];
        let h = t1 - t0;
        if h == 0.0 {
            continue;
        }
        // Midpoint of the curve segment, re-retracted: accurate enough for
        // the RK4 stages of the linear equation.
        let pm = spec.retract(&((p0 + p1) * 0.5))?;
        let m0 = coeff(p0)?;
        let mm = coeff(&pm)?;
        let m1 = coeff(p1)?;
        let k1 = &m0 * &xi;
        let k2 = &mm * (&xi + (h / 2.0) * &k1);
        let k3 = &mm * (&xi + (h / 2.0) * &k2);
        let k4 = &m1 * (&xi + h * &k3);
        xi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let proj = spec.tangent_projector(p1)?;
        xi = &proj * xi;
        steps_since_qr += 1;
        if steps_since_qr == 10 {
            xi = reorthonormalize(&xi)?;
            steps_since_qr = 0;
        }
    }
    let q = reorthonormalize(&xi)?;
    Ok(TransportedFrame { vectors: q, sign: 1 })
}

/// dφ_t at a critical point, expressed in its eigenframe (unstable columns
/// first, each block ascending by eigenvalue); equals exp(−tH).
pub fn linearized_flow_at_critical(
    spec: &ManifoldSpec,
    x: &CriticalPoint,
    t: f64,
) -> Result<DMatrix<f64>, FlowError> {
    let n = spec.dimension;
    let big_n = spec.ambient_dim;
    let mut frame = DMatrix::zeros(big_n, n);
    for i in 0..x.index {
        frame.column_mut(i).copy_from(&x.unstable_frame.column(i));
    }
    for i in 0..n - x.index {
        frame
            .column_mut(x.index + i)
            .copy_from(&x.stable_frame.column(i));
    }
    let proj = spec.tangent_projector(&x.location)?;
    let a = spec.corrected_hessian(&x.location)?;
    let m = -(&proj * a * &proj);
    // Fixed-step RK4 on the matrix equation Ξ̇ = MΞ sitting at x.
    let steps = ((t / 1e-3).ceil() as usize).max(1);
    let h = t / steps as f64;
    let mut xi = frame.clone();
    for _ in 0..steps {
        let k1 = &m * &xi;
        let k2 = &m * (&xi + (h / 2.0) * &k1);
        let k3 = &m * (&xi + (h / 2.0) * &k2);
        let k4 = &m * (&xi + h * &k3);
        xi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Ok(frame.transpose() * xi)
}

/// Sampled graph of the local stable manifold at x over an E^s-ball: pairs
/// (stable coordinates, unstable-offset coordinates).
#[derive(Debug, Clone)]
pub struct StableGraph {
    pub points: Vec<(DVector<f64>, DVector<f64>)>,
    pub radius: f64,
}

impl StableGraph {
    /// Ambient location of a graph point through the eigenframe chart.
    pub fn ambient_point(
        &self,
        spec: &ManifoldSpec,
        x: &CriticalPoint,
        idx: usize,
    ) -> Result<DVector<f64>, GeometryError> {
        let (s, u) = &self.points[idx];
        let mut p = x.location.clone();
        for i in 0..s.len() {
            p += s[i] * x.stable_frame.column(i);
        }
        for i in 0..u.len() {
            p += u[i] * x.unstable_frame.column(i);
        }
        spec.retract(&p)
    }
}

/// Contraction iteration for the stable-manifold graph E^s → E^u at x.
///
/// Works in the eigenframe chart y ↦ retract(x + V y) with V = [V^u | V^s];
/// the flow there is ẏ = −Λy + h(y) with Λ = diag(eigenvalues reordered to
/// the frame) and h the pulled-back remainder.
pub fn local_stable_graph(
    spec: &ManifoldSpec,
    x: &CriticalPoint,
    radius: f64,
    grid: usize,
) -> Result<StableGraph, FlowError> {
    let n = spec.dimension;
    let k = x.index;
    let s_dim = n - k;
    if k == n || s_dim == 0 {
        // E^s = {0}: the graph degenerates to the point x itself.
        return Ok(StableGraph {
            points: vec![(DVector::zeros(0), DVector::zeros(0))],
            radius,
        });
    }
    let big_n = spec.ambient_dim;
    let mut frame = DMatrix::zeros(big_n, n);
    for i in 0..k {
        frame.column_mut(i).copy_from(&x.unstable_frame.column(i));
    }
    for i in 0..s_dim {
        frame.column_mut(k + i).copy_from(&x.stable_frame.column(i));
    }
    // Eigenvalues in frame order: unstable block then stable block.
    let lambda: Vec<f64> = x.eigenvalues.clone();
    let lam_min = lambda.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    let horizon = 20.0 / lam_min;
    let m_steps = 400usize;
    let dt = horizon / m_steps as f64;
    // Pulled-back remainder h(y) = g(y) + Λy with g the chart field.
    let chart_h = |y: &DVector<f64>| -> Result<DVector<f64>, FlowError> {
        let mut p = x.location.clone();
        for i in 0..n {
            p += y[i] * frame.column(i);
        }
        let q = spec.retract(&p)?;
        let g_ambient = -spec.riemannian_gradient(&q)?;
        let g = frame.transpose() * g_ambient;
        let mut hh = g;
        for i in 0..n {
            hh[i] += lambda[i] * y[i];
        }
        Ok(hh)
    };
    // Stable-ball sample coordinates.
    let mut stable_seeds: Vec<DVector<f64>> = Vec::new();
    if s_dim == 1 {
        for i in 0..grid {
            let c = if grid == 1 {
                0.0
            } else {
                -radius + 2.0 * radius * i as f64 / (grid - 1) as f64
            };
            stable_seeds.push(DVector::from_row_slice(&[c]));
        }
    } else {
        for i in 0..grid {
            for j in 0..grid {
                let a = -radius + 2.0 * radius * i as f64 / (grid.max(2) - 1) as f64;
                let b = -radius + 2.0 * radius * j as f64 / (grid.max(2) - 1) as f64;
                if a * a + b * b <= radius * radius {
                    let mut y = DVector::zeros(s_dim);
                    y[0] = a;
                    y[1] = b;
                    stable_seeds.push(y);
                }
            }
        }
    }
    let mut points = Vec::with_capacity(stable_seeds.len());
    for y0s in &stable_seeds {
        // Iterate F on the discretized curve gamma: [0,T] -> R^n.
        let mut gamma: Vec<DVector<f64>> = (0..=m_steps)
            .map(|i| {
                let t = i as f64 * dt;
                let mut y = DVector::zeros(n);
                for j in 0..s_dim {
                    y[k + j] = y0s[j] * (-lambda[k + j] * t).exp();
                }
                y
            })
            .collect();
        let mut last_diff = f64::INFINITY;
        let mut growing = 0;
        let mut converged = false;
        for _ in 0..200 {
            let hv: Vec<DVector<f64>> = gamma
                .iter()
                .map(|y| chart_h(y))
                .collect::<Result<_, _>>()?;
            let mut next: Vec<DVector<f64>> = Vec::with_capacity(gamma.len());
            // Stable components: e^{-tΛs} y0s + ∫_0^t e^{-(t-τ)Λs} Ps h dτ.
            // Unstable: −∫_t^T e^{-(t-τ)Λu} Pu h dτ (tail beyond T negligible).
            for i in 0..=m_steps {
                let t = i as f64 * dt;
                let mut y = DVector::zeros(n);
                for j in 0..s_dim {
                    let lam = lambda[k + j];
                    let mut acc = y0s[j] * (-lam * t).exp();
                    // trapezoid over [0, t]
                    for q in 0..i {
                        let tau0 = q as f64 * dt;
                        let tau1 = (q + 1) as f64 * dt;
                        let w0 = (-(t - tau0) * lam).exp() * hv[q][k + j];
                        let w1 = (-(t - tau1) * lam).exp() * hv[q + 1][k + j];
                        acc += 0.5 * dt * (w0 + w1);
                    }
                    y[k + j] = acc;
                }
                for j in 0..k {
                    let lam = lambda[j]; // negative
                    let mut acc = 0.0;
                    // trapezoid over [t, T]
                    for q in i..m_steps {
                        let tau0 = q as f64 * dt;
                        let tau1 = (q + 1) as f64 * dt;
                        let w0 = (-(t - tau0) * lam).exp() * hv[q][j];
                        let w1 = (-(t - tau1) * lam).exp() * hv[q + 1][j];
                        acc += 0.5 * dt * (w0 + w1);
                    }
                    y[j] = -acc;
                }
                next.push(y);
            }
            let diff = gamma
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0_f64, f64::max);
            gamma = next;
            if diff < 1e-10 {
                converged = true;
                break;
            }
            if diff > last_diff {
                growing += 1;
                if growing >= 5 {
                    return Err(FlowError::RadiusTooLarge);
                }
            } else {
                growing = 0;
            }
            last_diff = diff;
        }
        if !converged {
            return Err(FlowError::RadiusTooLarge);
        }
        let mut offset = DVector::zeros(k);
        for j in 0..k {
            offset[j] = gamma[0][j];
        }
        points.push((y0s.clone(), offset));
    }
    Ok(StableGraph { points, radius })
}
