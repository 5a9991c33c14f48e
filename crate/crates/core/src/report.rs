//! Run reports: structure, deterministic JSON emission, plain-text
//! rendering, and the flow-line CSV dump.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::geometry::ManifoldSpec;
use crate::moduli::ConnectingOrbit;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioEcho {
    pub name: String,
    pub ambient_dim: usize,
    pub dimension: usize,
    pub constraints: Vec<String>,
    pub f: String,
    pub involution: Option<Vec<Vec<f64>>>,
    pub bounding_radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalPointRow {
    pub id: usize,
    pub index: usize,
    pub value: f64,
    pub location: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitRow {
    pub orbit_id: usize,
    pub source: usize,
    pub target: usize,
    pub sign: i32,
    /// Regular level with the orbit's unique crossing point of f⁻¹(a).
    pub level: f64,
    pub level_point: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HomologySection {
    pub betti: Vec<usize>,
    /// Torsion invariant factors per degree (empty over Z/2).
    pub torsion: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityRowOut {
    pub k: usize,
    pub critical_alternating_sum: i64,
    pub betti_alternating_sum: i64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalitiesSection {
    pub rows: Vec<InequalityRowOut>,
    pub euler_characteristic: i64,
    pub top_equality: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityRowOut {
    pub k: usize,
    /// (betti, torsion) of H^k(f), H_{n-k}(-f), H_{n-k}(f).
    pub cohomology_f: (usize, Vec<i64>),
    pub homology_minus_f: (usize, Vec<i64>),
    pub homology_f: (usize, Vec<i64>),
}

#[derive(Debug, Clone, Serialize)]
pub struct DualitySection {
    pub coefficients: String,
    pub rows: Vec<DualityRowOut>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairingRow {
    pub upper: usize,
    pub lower: usize,
    pub level: f64,
    pub broken_orbits: usize,
    pub arc_open_ends: usize,
    pub closed_arcs: usize,
    pub bijection_ok: bool,
    pub cancellation_ok: bool,
    /// Per open arc: the sign products n_u·n_v at its two ends.
    pub arc_products: Vec<(i64, i64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationSection {
    pub target: String,
    pub kappa: f64,
    pub delta: f64,
    /// Per degree: crossing-counted chain map matrix (rows index target
    /// generators).
    pub psi: BTreeMap<String, Vec<Vec<i64>>>,
    /// Same pairs counted without the crossing condition.
    pub all_counts: BTreeMap<String, Vec<Vec<i64>>>,
    /// Induced maps on free integral homology.
    pub induced: BTreeMap<String, Vec<Vec<i64>>>,
    pub all_lines_zero: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub pass: bool,
    pub details: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: ScenarioEcho,
    pub or_seed: u64,
    pub critical_points: Vec<CriticalPointRow>,
    pub orbits: Option<Vec<OrbitRow>>,
    /// "d1".."dn" as row-major integer matrices; dk maps degree k to k−1.
    pub boundary_matrices: Option<BTreeMap<String, Vec<Vec<i64>>>>,
    /// Keyed by coefficient ring: "z" and/or "z2".
    pub homology: BTreeMap<String, HomologySection>,
    pub cohomology: BTreeMap<String, HomologySection>,
    /// Integral free generator columns per degree, in critical-point
    /// coordinates of that degree.
    pub homology_generators: Option<BTreeMap<String, Vec<Vec<i64>>>>,
    pub inequalities: Option<InequalitiesSection>,
    pub duality: Option<DualitySection>,
    pub pairing: Option<Vec<PairingRow>>,
    pub continuation: Option<ContinuationSection>,
    pub checks: BTreeMap<String, CheckEntry>,
}

pub fn matrix_rows(m: &DMatrix<i64>) -> Vec<Vec<i64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Round to 12 significant decimal digits, so that reruns emit
/// byte-identical reports even when low-order bits wiggle.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{:.*e}", 11, x).parse().unwrap()
}

fn round_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.as_i64().is_none() && n.as_u64().is_none() {
                    if let Some(r) = serde_json::Number::from_f64(round_sig(f)) {
                        *v = serde_json::Value::Number(r);
                    }
                }
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_json),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Deterministic JSON: keys sorted, floats rounded to 12 significant
/// digits, trailing newline.
pub fn report_json(report: &RunReport) -> String {
    let mut v = serde_json::to_value(report).expect("report serialization");
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("json rendering");
    s.push('\n');
    s
}

fn fmt_vec(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{:+.6}", x)).collect();
    format!("({})", parts.join(", "))
}

fn fmt_int_matrix(rows: &[Vec<i64>]) -> String {
    if rows.is_empty() || rows[0].is_empty() {
        return "  (empty)\n".into();
    }
    let mut out = String::new();
    for r in rows {
        out.push_str("  [");
        out.push_str(
            &r.iter()
                .map(|v| format!("{v:3}"))
                .collect::<Vec<_>>()
                .join(" "),
        );
        out.push_str(" ]\n");
    }
    out
}

fn fmt_homology(name: &str, sec: &HomologySection, ring: &str) -> String {
    let mut out = format!("{name} ({ring}):\n");
    for (k, &b) in sec.betti.iter().enumerate() {
        let tors = &sec.torsion[k];
        let mut parts: Vec<String> = Vec::new();
        if ring == "z" {
            for _ in 0..b {
                parts.push("Z".into());
            }
            for t in tors {
                parts.push(format!("Z/{t}"));
            }
        } else {
            for _ in 0..b {
                parts.push("Z/2".into());
            }
        }
        let desc = if parts.is_empty() { "0".into() } else { parts.join(" + ") };
        out.push_str(&format!("  degree {k}: {desc}\n"));
    }
    out
}

/// Human-readable rendering of the same report.
pub fn report_text(report: &RunReport) -> String {
    let mut out = String::new();
    let sc = &report.scenario;
    out.push_str(&format!(
        "scenario {} (dimension {}, ambient R^{})\n",
        sc.name, sc.dimension, sc.ambient_dim
    ));
    out.push_str(&format!("  f = {}\n", sc.f));
    for c in &sc.constraints {
        out.push_str(&format!("  constraint: {c} = 0\n"));
    }
    if sc.involution.is_some() {
        out.push_str("  quotient by a free involution\n");
    }
    out.push_str(&format!("  orientation seed {}\n\n", report.or_seed));

    out.push_str(&format!("critical points ({}):\n", report.critical_points.len()));
    for c in &report.critical_points {
        out.push_str(&format!(
            "  #{:<2} index {}  f = {:>12.8}  at {}\n",
            c.id,
            c.index,
            c.value,
            fmt_vec(&c.location)
        ));
    }
    out.push('\n');

    if let Some(orbits) = &report.orbits {
        out.push_str(&format!("connecting orbits ({}):\n", orbits.len()));
        for o in orbits {
            out.push_str(&format!(
                "  #{:<2} {} -> {}  sign {:+}  through {} at level {:.6}\n",
                o.orbit_id,
                o.source,
                o.target,
                o.sign,
                fmt_vec(&o.level_point),
                o.level
            ));
        }
        out.push('\n');
    }

    if let Some(mats) = &report.boundary_matrices {
        for (name, rows) in mats {
            out.push_str(&format!("boundary {name}:\n{}", fmt_int_matrix(rows)));
        }
        out.push('\n');
    }

    for (ring, sec) in &report.homology {
        out.push_str(&fmt_homology("homology", sec, ring));
    }
    for (ring, sec) in &report.cohomology {
        out.push_str(&fmt_homology("cohomology", sec, ring));
    }
    if let Some(gens) = &report.homology_generators {
        out.push_str("integral homology generators (critical-point coordinates):\n");
        for (deg, cols) in gens {
            for col in cols {
                out.push_str(&format!("  degree {deg}: {col:?}\n"));
            }
        }
    }
    out.push('\n');

    if let Some(ineq) = &report.inequalities {
        out.push_str("Morse inequalities:\n");
        for r in &ineq.rows {
            out.push_str(&format!(
                "  k={}: sum (-1)^i c_i = {:>3}  >=  sum (-1)^i b_i = {:>3}  [{}]\n",
                r.k,
                r.critical_alternating_sum,
                r.betti_alternating_sum,
                if r.satisfied { "ok" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "  Euler characteristic {} (top equality {})\n\n",
            ineq.euler_characteristic,
            if ineq.top_equality { "ok" } else { "FAIL" }
        ));
    }

    if let Some(d) = &report.duality {
        out.push_str(&format!("Poincare duality ({}):\n", d.coefficients));
        for r in &d.rows {
            out.push_str(&format!(
                "  H^{}(f) ~ H_{}(-f) ~ H_{}(f): betti {} / {} / {}\n",
                r.k,
                report.scenario.dimension - r.k,
                report.scenario.dimension - r.k,
                r.cohomology_f.0,
                r.homology_minus_f.0,
                r.homology_f.0
            ));
        }
        out.push('\n');
    }

    if let Some(pairs) = &report.pairing {
        out.push_str("broken-orbit pairing:\n");
        for p in pairs {
            out.push_str(&format!(
                "  {} => {}: {} broken orbits, {} arc ends, {} closed arcs, bijection {}, cancellation {}\n",
                p.upper,
                p.lower,
                p.broken_orbits,
                p.arc_open_ends,
                p.closed_arcs,
                if p.bijection_ok { "ok" } else { "FAIL" },
                if p.cancellation_ok { "ok" } else { "FAIL" }
            ));
        }
        out.push('\n');
    }

    if let Some(c) = &report.continuation {
        out.push_str(&format!(
            "continuation to {} (kappa {:.4}, delta {}):\n",
            c.target, c.kappa, c.delta
        ));
        for (deg, rows) in &c.psi {
            out.push_str(&format!("  psi degree {deg}:\n{}", fmt_int_matrix(rows)));
        }
        for (deg, rows) in &c.induced {
            out.push_str(&format!("  induced on H_{deg}:\n{}", fmt_int_matrix(rows)));
        }
        out.push_str(&format!(
            "  unrestricted count is zero: {}\n\n",
            if c.all_lines_zero { "ok" } else { "FAIL" }
        ));
    }

    out.push_str("checks:\n");
    for (name, e) in &report.checks {
        out.push_str(&format!(
            "  {:<22} {}{}\n",
            name,
            if e.pass { "pass" } else { "FAIL" },
            if e.details.is_empty() {
                String::new()
            } else {
                format!("  ({})", e.details)
            }
        ));
    }
    out
}

/// Write every orbit's sampled trajectory as CSV: one row per sample with
/// the integration time, ambient coordinates, and function value.
pub fn dump_flowlines(
    path: &Path,
    spec: &ManifoldSpec,
    orbits: &[ConnectingOrbit],
) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(w, "orbit_id,source_id,target_id,sign,t")?;
    for i in 1..=spec.ambient_dim {
        write!(w, ",p{i}")?;
    }
    writeln!(w, ",f")?;
    for (oid, o) in orbits.iter().enumerate() {
        for (t, p) in &o.trajectory.samples {
            let fv = spec.f.value(p).map(round_sig).unwrap_or(f64::NAN);
            write!(w, "{},{},{},{},{}", oid, o.source, o.target, o.sign, round_sig(*t))?;
            for x in p.iter() {
                write!(w, ",{}", round_sig(*x))?;
            }
            writeln!(w, ",{fv}")?;
        }
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_truncates_to_twelve_digits() {
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_sig(0.0), 0.0);
        assert_eq!(round_sig(-2.5e-13), -2.5e-13);
        assert_eq!(round_sig(123456789012345.0), 123456789012000.0);
    }

    #[test]
    fn json_floats_are_rounded_and_keys_sorted() {
        let mut v = serde_json::json!({"b": 1.0f64/3.0, "a": [2.0f64/3.0]});
        round_json(&mut v);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, "{\"a\":[0.666666666667],\"b\":0.333333333333}");
    }
}
