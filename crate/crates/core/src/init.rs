//! Initial maps for the minimizer.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{normalized, MapField};
use crate::kahler::{AmbientPoint, ChartKind, LagrangianChart};
use crate::linalg::{align_phase, cis, cnorm, hdot, CVec, C64};
use crate::mesh::{marked_angle, DiscMesh};
use crate::solver::Problem;
use crate::sparse::EnvelopeCholesky;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Initializer {
    Constant(ConstantParams),
    Explicit(ExplicitParams),
    GeodesicLune(LuneParams),
    Harmonic(HarmonicParams),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantParams {
    /// Defaults to y.
    pub point: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitParams {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LuneParams {
    /// Phases of the two boundary arcs; derived from the Lagrangians if absent.
    pub phases: Option<[f64; 2]>,
    /// Amplitude of an interior bump orthogonal to the lune.
    pub perturbation: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarmonicParams {
    /// CSV with boundary node values; piecewise geodesic between the marked
    /// points if absent.
    pub trace: Option<PathBuf>,
}

impl Initializer {
    /// Builds the initial field; relative paths are resolved against `base`.
    pub fn build(&self, problem: &Problem, mesh: Arc<DiscMesh>, base: &Path) -> Result<MapField> {
        let model = problem.model.clone();
        match self {
            Initializer::Constant(p) => {
                let point = match &p.point {
                    Some(pairs) => AmbientPoint::from_pairs(pairs),
                    None => problem.y.clone(),
                };
                model.check_point(&point).map_err(|e| Error::Inadmissible(e.to_string()))?;
                MapField::constant(mesh, model, &point)
            }
            Initializer::Explicit(p) => {
                let file = std::fs::File::open(base.join(&p.path))?;
                MapField::read_csv(mesh, model, file)
            }
            Initializer::GeodesicLune(p) => geodesic_lune(problem, mesh, p),
            Initializer::Harmonic(p) => {
                let trace = match &p.trace {
                    Some(path) => read_trace(&mesh, problem, &std::fs::read_to_string(base.join(path))?)?,
                    None => geodesic_trace(problem, &mesh)?,
                };
                harmonic_extension(problem, mesh, trace)
            }
        }
    }
}

/// Phase `φ` such that `cos θ·y + sin θ·e^{iφ}·x` traces a great circle of
/// the Lagrangian, defined modulo π.
fn arc_phase(chart: &LagrangianChart, y: &CVec, x: &CVec) -> Result<f64> {
    match &chart.kind {
        ChartKind::RealProjective { unitary } => {
            let (_, a) = LagrangianChart::real_representative(unitary, y);
            let (_, b) = LagrangianChart::real_representative(unitary, x);
            Ok((a.arg() - b.arg()).rem_euclid(PI))
        }
        ChartKind::LinearPlane { .. } => Err(Error::Inadmissible("the lune initializer needs a projective model".into())),
    }
}

fn geodesic_lune(problem: &Problem, mesh: Arc<DiscMesh>, params: &LuneParams) -> Result<MapField> {
    let model = problem.model.clone();
    if !model.is_projective() || problem.n() != 2 {
        return Err(Error::Inadmissible("the lune initializer needs a projective model and two arcs".into()));
    }
    let y = problem.y.0.clone();
    let x = &problem.x[0].0;
    let overlap = hdot(&y, x);
    let rho = overlap.norm().min(1.0).acos();
    if rho < 1e-8 {
        return Err(Error::Inadmissible("the two marked points coincide".into()));
    }
    let xo = x - &y * overlap;
    let xo = &xo / C64::new(cnorm(&xo), 0.0);
    let phases = match params.phases {
        Some(p) => p,
        None => {
            let p1 = arc_phase(&problem.lagrangians[0], &y, &xo)?;
            let p2 = arc_phase(&problem.lagrangians[1], &y, &xo)?;
            [p1, p1 + (p2 - p1).rem_euclid(PI)]
        }
    };
    let bump = if params.perturbation != 0.0 {
        let dim = model.ambient_dim();
        let mut best = CVec::zeros(dim);
        for j in 0..dim {
            let mut e = CVec::zeros(dim);
            e[j] = C64::new(1.0, 0.0);
            let r = &e - &y * hdot(&y, &e) - &xo * hdot(&xo, &e);
            if cnorm(&r) > cnorm(&best) {
                best = r;
            }
        }
        if cnorm(&best) < 1e-8 {
            return Err(Error::Inadmissible("no direction orthogonal to the lune for the perturbation".into()));
        }
        Some(&best / C64::new(cnorm(&best), 0.0))
    } else {
        None
    };
    MapField::from_fn(mesh, model, |[s, t]| {
        let s = s.clamp(-1.0, 1.0);
        let theta = rho * s.acos() / PI;
        let w = (1.0 - s * s).max(0.0).sqrt();
        let ratio = if w > 1e-12 { (t / w).clamp(-1.0, 1.0) } else { 0.0 };
        let phi = phases[0] + (phases[1] - phases[0]) * (1.0 - ratio) / 2.0;
        let mut v = &y * C64::new(theta.cos(), 0.0) + &xo * (cis(phi) * theta.sin());
        if let Some(b) = &bump {
            v += b * C64::new(params.perturbation * (1.0 - s * s - t * t).max(0.0), 0.0);
        }
        v
    })
}

/// Point at fraction `tau` along the geodesic of `chart` from `a` to `b`.
fn chart_geodesic(problem: &Problem, chart: &LagrangianChart, a: &CVec, b: &CVec, tau: f64) -> Result<CVec> {
    match &chart.kind {
        ChartKind::LinearPlane { .. } => Ok(a * C64::new(1.0 - tau, 0.0) + b * C64::new(tau, 0.0)),
        ChartKind::RealProjective { unitary } => {
            let (ra, _) = LagrangianChart::real_representative(unitary, a);
            let (mut rb, _) = LagrangianChart::real_representative(unitary, b);
            let mut dot = ra.dot(&rb);
            if dot.abs() < 1e-6 {
                return Err(Error::Inadmissible(format!(
                    "the geodesic of L_{} between consecutive marked points is not unique",
                    chart.label
                )));
            }
            if dot < 0.0 {
                rb = -rb;
                dot = -dot;
            }
            let psi = dot.min(1.0).acos();
            let r = if psi < 1e-12 {
                ra.clone()
            } else {
                (&ra * ((1.0 - tau) * psi).sin() + &rb * (tau * psi).sin()) / psi.sin()
            };
            let v = unitary * r.map(|x| C64::new(x, 0.0));
            Ok(normalized(&problem.model, v))
        }
    }
}

fn geodesic_trace(problem: &Problem, mesh: &DiscMesh) -> Result<Vec<CVec>> {
    let n = problem.n();
    let mut out = Vec::with_capacity(mesh.boundary.len());
    for (i, &v) in mesh.boundary.iter().enumerate() {
        if mesh.is_marked(v) {
            out.push(problem.marked_point(mesh.marked_k[v] as usize).0.clone());
            continue;
        }
        let k = mesh.arc_label[v];
        let start = marked_angle(n, k - 1);
        let tau = (mesh.boundary_angle[i] - start) / (marked_angle(n, 1));
        let a = &problem.marked_point(k - 1).0;
        let b = &problem.marked_point(k % n).0;
        out.push(chart_geodesic(problem, &problem.lagrangians[k - 1], a, b, tau)?);
    }
    Ok(out)
}

fn read_trace(mesh: &DiscMesh, problem: &Problem, text: &str) -> Result<Vec<CVec>> {
    let d = problem.model.ambient_dim();
    let mut values: Vec<Option<CVec>> = vec![None; mesh.num_nodes()];
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    for rec in rd.records() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Validation(format!("bad or missing number in column {k}")))
        };
        let id = num(0)? as usize;
        if id >= mesh.num_nodes() {
            return Err(Error::Validation(format!("node id {id} out of range")));
        }
        let v = CVec::from_iterator(d, (0..d).map(|j| C64::new(num(1 + 2 * j).unwrap_or(f64::NAN), num(2 + 2 * j).unwrap_or(f64::NAN))));
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Validation(format!("incomplete coordinates for node {id}")));
        }
        values[id] = Some(v);
    }
    mesh.boundary
        .iter()
        .map(|&v| values[v].clone().ok_or_else(|| Error::Validation(format!("trace has no value for boundary node {v}"))))
        .collect()
}

/// Continuous gauge along the boundary cycle, closing up by a linear phase
/// correction.
fn smooth_gauge(trace: &mut [CVec]) {
    let nb = trace.len();
    for i in 1..nb {
        trace[i] = align_phase(&trace[i - 1], &trace[i]);
    }
    let closing = align_phase(&trace[nb - 1], &trace[0]);
    let gamma = hdot(&trace[0], &closing).arg();
    for (i, v) in trace.iter_mut().enumerate() {
        *v *= cis(-gamma * i as f64 / nb as f64);
    }
}

fn harmonic_extension(problem: &Problem, mesh: Arc<DiscMesh>, mut trace: Vec<CVec>) -> Result<MapField> {
    let model = problem.model.clone();
    if model.is_projective() {
        smooth_gauge(&mut trace);
    }
    let nn = mesh.num_nodes();
    let d = model.ambient_dim();
    let mut fixed = vec![false; nn];
    let mut bvals = vec![CVec::zeros(d); nn];
    for (i, &v) in mesh.boundary.iter().enumerate() {
        fixed[v] = true;
        bvals[v] = trace[i].clone();
    }
    let chol = EnvelopeCholesky::factor(&mesh.stiffness.with_dirichlet(&fixed))?;
    let mut values = vec![C64::new(0.0, 0.0); nn * d];
    let mut col = vec![0.0; nn];
    for k in 0..d {
        for part in 0..2 {
            let pick = |z: C64| if part == 0 { z.re } else { z.im };
            for i in 0..nn {
                col[i] = if fixed[i] {
                    pick(bvals[i][k])
                } else {
                    -mesh.stiffness.row(i).filter(|&(j, _)| fixed[j]).map(|(j, a)| a * pick(bvals[j][k])).sum::<f64>()
                };
            }
            chol.solve_in_place(&mut col);
            for i in 0..nn {
                if part == 0 {
                    values[i * d + k].re = col[i];
                } else {
                    values[i * d + k].im = col[i];
                }
            }
        }
    }
    if model.is_projective() {
        for i in 0..nn {
            let v = CVec::from_column_slice(&values[i * d..(i + 1) * d]);
            let norm = cnorm(&v);
            if norm < 1e-3 {
                return Err(Error::Inadmissible(format!("harmonic extension vanishes at node {i}")));
            }
            values[i * d..(i + 1) * d].copy_from_slice((v / C64::new(norm, 0.0)).as_slice());
        }
    }
    MapField::new(mesh, model, values)
}
