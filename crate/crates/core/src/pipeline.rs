//! End-to-end scenario runs: critical points, the Morse-Smale test, orbit
//! counting, homology over both rings, the verification checks, and the
//! optional continuation map to a second scenario.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::complex::{
    assemble_complex, coboundary_complex, homology, homology_basis, induced_map_on_homology,
    morse_inequalities_check, poincare_duality_check, Coefficients, ComplexError, MorseComplex,
};
use crate::continuation::{analyze_base, continuation_map, ContinuationError};
use crate::critical::{
    assign_orientations, find_critical_points, CriticalError, CriticalPoint, SearchConfig,
};
use crate::flow::set_default_max_time;
use crate::geometry::{GeometryError, ManifoldSpec, NegField};
use crate::moduli::{
    check_morse_smale, classify_level, cover_critical_points, find_connecting_orbits,
    moduli_arcs_from, pair_broken_orbits, regular_level_between, ConnectingOrbit,
    LevelClassification, ModuliError,
};
use crate::report::{
    matrix_rows, CheckEntry, ContinuationSection, CriticalPointRow, DualityRowOut, DualitySection,
    HomologySection, InequalitiesSection, InequalityRowOut, OrbitRow, PairingRow, RunReport,
    ScenarioEcho, SCHEMA_VERSION,
};
use crate::scenario::{Scenario, ScenarioError};

const MODULI_RESOLUTION: usize = 2000;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Critical(#[from] CriticalError),
    #[error(transparent)]
    Moduli(#[from] ModuliError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Continuation(#[from] ContinuationError),
}

impl PipelineError {
    /// 3 for configuration problems, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Scenario(_) => 3,
            _ => 4,
        }
    }
}

/// A finished run: the serializable report plus the orbit trajectories for
/// the flow-line dump. On quotient scenarios the trajectories live on the
/// double cover.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub orbits: Vec<ConnectingOrbit>,
}

impl RunOutcome {
    /// True when every recorded check passed.
    pub fn all_checks_pass(&self) -> bool {
        self.report.checks.values().all(|c| c.pass)
    }
}

fn echo(sc: &Scenario) -> ScenarioEcho {
    ScenarioEcho {
        name: sc.name.clone(),
        ambient_dim: sc.spec.ambient_dim,
        dimension: sc.spec.dimension,
        constraints: sc.constraints_src.clone(),
        f: sc.f_src.clone(),
        involution: sc.involution_src.clone(),
        bounding_radius: sc.bounding_radius,
    }
}

fn crit_rows(crits: &[CriticalPoint]) -> Vec<CriticalPointRow> {
    crits
        .iter()
        .map(|c| CriticalPointRow {
            id: c.id,
            index: c.index,
            value: c.value,
            location: c.location.iter().copied().collect(),
            eigenvalues: c.eigenvalues.clone(),
        })
        .collect()
}

fn ring_key(c: Coefficients) -> &'static str {
    match c {
        Coefficients::Integers => "z",
        Coefficients::ModTwo => "z2",
    }
}

fn homology_section(cx: &MorseComplex, c: Coefficients) -> Result<HomologySection, ComplexError> {
    let hr = homology(cx, c)?;
    Ok(HomologySection {
        betti: hr.betti,
        torsion: hr.torsion,
    })
}

fn enumerate_orbits(
    spec: &ManifoldSpec,
    crits: &[CriticalPoint],
    or: &crate::critical::OrientationAssignment,
) -> Result<Vec<ConnectingOrbit>, ModuliError> {
    let mut orbits = Vec::new();
    for x in crits {
        for y in crits {
            if x.index == y.index + 1 && x.value > y.value {
                orbits.extend(find_connecting_orbits(spec, crits, or, x.id, y.id)?);
            }
        }
    }
    Ok(orbits)
}

/// The broken-orbit/arc pairing for every index-gap-2 pair. On quotient
/// scenarios the compactness structure is examined on the double cover,
/// where the moduli arcs are embedded curves.
fn pairing_rows(sc: &Scenario, crits: &[CriticalPoint]) -> Result<Vec<PairingRow>, PipelineError> {
    let (pspec, pcrits) = if sc.spec.involution.is_some() {
        let cover = ManifoldSpec::new(
            sc.spec.ambient_dim,
            sc.spec.constraints.clone(),
            sc.spec.f.clone(),
            None,
            format!("{}-cover", sc.spec.label),
            sc.spec.bounding_radius,
        )?;
        let pcrits = cover_critical_points(&sc.spec, crits);
        (cover, pcrits)
    } else {
        (sc.spec.clone(), crits.to_vec())
    };
    let por = assign_orientations(&pcrits, sc.or_seed);
    // Pairs whose value gaps produce the same regular level share the
    // classified level curve; classification is the dominant cost.
    let mut classified: BTreeMap<u64, LevelClassification> = BTreeMap::new();
    let mut rows = Vec::new();
    for x in &pcrits {
        for z in &pcrits {
            if x.index != z.index + 2 || x.value <= z.value {
                continue;
            }
            let a = match sc.level {
                Some(a) if z.value < a && a < x.value => a,
                _ => regular_level_between(&pcrits, z.value, x.value)?,
            };
            let classification = match classified.entry(a.to_bits()) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(classify_level(&pspec, &pcrits, a, MODULI_RESOLUTION)?)
                }
            };
            let arcs = moduli_arcs_from(&pspec, &pcrits, classification, x.id, z.id)?;
            let mut upper = Vec::new();
            let mut lower = Vec::new();
            for y in &pcrits {
                if y.index + 1 == x.index {
                    if x.value > y.value {
                        upper.extend(find_connecting_orbits(&pspec, &pcrits, &por, x.id, y.id)?);
                    }
                    if y.value > z.value {
                        lower.extend(find_connecting_orbits(&pspec, &pcrits, &por, y.id, z.id)?);
                    }
                }
            }
            let rep = pair_broken_orbits(&pspec, &pcrits, &upper, &lower, &arcs)?;
            rows.push(PairingRow {
                upper: x.id,
                lower: z.id,
                level: a,
                broken_orbits: rep.broken.len(),
                arc_open_ends: rep.arc_matches.len(),
                closed_arcs: arcs.iter().filter(|a| a.ends.is_none()).count(),
                bijection_ok: rep.bijection_ok,
                cancellation_ok: rep.cancellation_ok,
                arc_products: rep.arc_products.clone(),
            });
        }
    }
    Ok(rows)
}

fn continuation_section(
    sc: &Scenario,
    target: &Scenario,
) -> Result<(ContinuationSection, bool), ContinuationError> {
    let a = analyze_base(&sc.spec, sc.or_seed)?;
    let b = analyze_base(&target.spec, sc.or_seed)?;
    let cm = continuation_map(&sc.spec, &a, &b, target.spec.f.clone(), 0.25, sc.or_seed)?;
    let induced = induced_map_on_homology(&cm.psi, &a.complex, &b.complex, Coefficients::Integers)?;
    let all_lines_zero = cm.all_counts.iter().all(|m| m.iter().all(|&v| v == 0));
    let to_map = |ms: &[nalgebra::DMatrix<i64>]| {
        ms.iter()
            .enumerate()
            .map(|(k, m)| (k.to_string(), matrix_rows(m)))
            .collect::<BTreeMap<_, _>>()
    };
    Ok((
        ContinuationSection {
            target: target.name.clone(),
            kappa: cm.kappa,
            delta: cm.delta,
            psi: to_map(&cm.psi),
            all_counts: to_map(&cm.all_counts),
            induced: to_map(&induced),
            all_lines_zero,
        },
        all_lines_zero,
    ))
}

/// Run one scenario end to end. `continue_to`, when present, must live on
/// the same manifold. Checks that fail are recorded in the report; only
/// configuration or numerical trouble aborts with an error.
pub fn run_scenario(
    sc: &Scenario,
    coefficients: &[Coefficients],
    continue_to: Option<&Scenario>,
) -> Result<RunOutcome, PipelineError> {
    if let Some(mt) = sc.max_time {
        set_default_max_time(mt);
    }
    let mut checks: BTreeMap<String, CheckEntry> = BTreeMap::new();
    let mut report = RunReport {
        schema_version: SCHEMA_VERSION,
        scenario: echo(sc),
        or_seed: sc.or_seed,
        critical_points: Vec::new(),
        orbits: None,
        boundary_matrices: None,
        homology: BTreeMap::new(),
        cohomology: BTreeMap::new(),
        homology_generators: None,
        inequalities: None,
        duality: None,
        pairing: None,
        continuation: None,
        checks: BTreeMap::new(),
    };

    let spec = &sc.spec;
    let crits = find_critical_points(spec, &SearchConfig::for_dimension(spec.dimension))?;
    report.critical_points = crit_rows(&crits);

    let ms = check_morse_smale(spec, &crits)?;
    if !ms.pass {
        let pairs: Vec<String> = ms
            .violations
            .iter()
            .map(|(a, b)| format!("#{a} -> #{b}"))
            .collect();
        checks.insert(
            "morse_smale".into(),
            CheckEntry {
                pass: false,
                details: format!(
                    "saddle-saddle connection between same-index critical points: {}",
                    pairs.join(", ")
                ),
            },
        );
        report.checks = checks;
        return Ok(RunOutcome {
            report,
            orbits: Vec::new(),
        });
    }
    checks.insert(
        "morse_smale".into(),
        CheckEntry {
            pass: true,
            details: "no connections between critical points of equal index".into(),
        },
    );

    let orientations = assign_orientations(&crits, sc.or_seed);
    let orbits = enumerate_orbits(spec, &crits, &orientations)?;
    report.orbits = Some(
        orbits
            .iter()
            .enumerate()
            .map(|(i, o)| OrbitRow {
                orbit_id: i,
                source: o.source,
                target: o.target,
                sign: o.sign,
                level: o.level,
                level_point: o.level_point.iter().copied().collect(),
            })
            .collect(),
    );

    let cx = match assemble_complex(spec.dimension, &crits, &orbits, &spec.label, sc.or_seed) {
        Ok(cx) => cx,
        Err(ComplexError::BoundarySquare { x, z, value }) => {
            checks.insert(
                "d_squared".into(),
                CheckEntry {
                    pass: false,
                    details: format!("(d.d)(#{x}) has coefficient {value} at #{z}"),
                },
            );
            report.checks = checks;
            return Ok(RunOutcome { report, orbits });
        }
        Err(e) => return Err(e.into()),
    };
    checks.insert(
        "d_squared".into(),
        CheckEntry {
            pass: true,
            details: "boundary composes to zero over the integers".into(),
        },
    );

    let mut mats = BTreeMap::new();
    for k in 1..=spec.dimension {
        mats.insert(format!("d{k}"), matrix_rows(&cx.mats[k]));
    }
    report.boundary_matrices = Some(mats);

    let cocx = coboundary_complex(&cx);
    for &c in coefficients {
        report
            .homology
            .insert(ring_key(c).into(), homology_section(&cx, c)?);
        report
            .cohomology
            .insert(ring_key(c).into(), homology_section(&cocx, c)?);
    }
    if coefficients.contains(&Coefficients::Integers) {
        let mut gens = BTreeMap::new();
        for k in 0..=spec.dimension {
            let basis = homology_basis(&cx, k)?;
            let cols: Vec<Vec<i64>> = (0..basis.free_generators.ncols())
                .map(|j| basis.free_generators.column(j).iter().copied().collect())
                .collect();
            if !cols.is_empty() {
                gens.insert(k.to_string(), cols);
            }
        }
        report.homology_generators = Some(gens);
    }

    // Morse inequalities are stated against the integral Betti numbers.
    let hr_z = homology(&cx, Coefficients::Integers)?;
    let ineq = morse_inequalities_check(&cx, &hr_z);
    let euler: i64 = hr_z
        .betti
        .iter()
        .enumerate()
        .map(|(k, &b)| if k % 2 == 0 { b as i64 } else { -(b as i64) })
        .sum();
    checks.insert(
        "morse_inequalities".into(),
        CheckEntry {
            pass: ineq.pass,
            details: format!("Euler characteristic {euler}"),
        },
    );
    report.inequalities = Some(InequalitiesSection {
        rows: ineq
            .rows
            .iter()
            .map(|r| InequalityRowOut {
                k: r.k,
                critical_alternating_sum: r.critical_alternating_sum,
                betti_alternating_sum: r.betti_alternating_sum,
                satisfied: r.satisfied,
            })
            .collect(),
        euler_characteristic: euler,
        top_equality: ineq.top_equality,
        pass: ineq.pass,
    });

    // Duality: compare with the reverse flow. Reversing the gradient flow
    // preserves the Morse-Smale property, so the scan is not repeated.
    let neg_spec = ManifoldSpec::new(
        spec.ambient_dim,
        spec.constraints.clone(),
        Arc::new(NegField(spec.f.clone())),
        spec.involution.clone(),
        format!("{}-reversed", spec.label),
        spec.bounding_radius,
    )?;
    let neg_crits = find_critical_points(&neg_spec, &SearchConfig::for_dimension(spec.dimension))?;
    let neg_or = assign_orientations(&neg_crits, sc.or_seed);
    let neg_orbits = enumerate_orbits(&neg_spec, &neg_crits, &neg_or)?;
    let neg_cx = assemble_complex(
        spec.dimension,
        &neg_crits,
        &neg_orbits,
        &neg_spec.label,
        sc.or_seed,
    )?;
    // Orientable scenarios satisfy duality integrally; quotients by the
    // antipodal involution only with Z/2 coefficients.
    let dual_ring = if spec.involution.is_some() {
        Coefficients::ModTwo
    } else {
        Coefficients::Integers
    };
    let dr = poincare_duality_check(&cx, &neg_cx, dual_ring)?;
    checks.insert(
        "poincare_duality".into(),
        CheckEntry {
            pass: dr.pass,
            details: format!("coefficients {}", ring_key(dual_ring)),
        },
    );
    report.duality = Some(DualitySection {
        coefficients: ring_key(dual_ring).into(),
        rows: dr
            .rows
            .iter()
            .map(|(k, a, b, c)| DualityRowOut {
                k: *k,
                cohomology_f: a.clone(),
                homology_minus_f: b.clone(),
                homology_f: c.clone(),
            })
            .collect(),
        pass: dr.pass,
    });

    let pairs = pairing_rows(sc, &crits)?;
    let pairing_pass = pairs.iter().all(|p| p.bijection_ok && p.cancellation_ok);
    checks.insert(
        "broken_orbit_pairing".into(),
        CheckEntry {
            pass: pairing_pass,
            details: format!("{} index-gap-2 pairs with moduli arcs", pairs.len()),
        },
    );
    report.pairing = Some(pairs);

    if let Some(target) = continue_to {
        match continuation_section(sc, target) {
            Ok((section, all_zero)) => {
                checks.insert(
                    "continuation".into(),
                    CheckEntry {
                        pass: all_zero,
                        details: format!("chain map to {} verified", target.name),
                    },
                );
                report.continuation = Some(section);
            }
            Err(e) => {
                checks.insert(
                    "continuation".into(),
                    CheckEntry {
                        pass: false,
                        details: e.to_string(),
                    },
                );
            }
        }
    }

    report.checks = checks;
    Ok(RunOutcome { report, orbits })
}
