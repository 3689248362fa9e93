//! Projected descent for the Dirichlet energy over discs with mixed
//! Lagrangian boundary conditions.
//!
//! Each step solves `K W = −P ∇E / c` with the P1 stiffness `K` (marked nodes
//! held fixed), projects `W` node-wise onto the admissible tangent spaces and
//! backtracks along the retraction until the Armijo condition holds. Interior
//! nodes retract by normalization, arc nodes by projection onto their
//! Lagrangian, and marked nodes never change.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::{self, EnergyReport};
use crate::error::{Error, Result};
use crate::field::{normalized, MapField};
use crate::kahler::{AmbientPoint, KahlerModel, LagrangianChart};
use crate::linalg::{align_phase, cnorm, hdot, CVec, C64};
use crate::mesh::DiscMesh;
use crate::sparse::EnvelopeCholesky;

/// Geometric data of a disc problem: `lagrangians[k - 1]` is `L_k`,
/// `x[k - 1]` is `x_k ∈ L_k ∩ L_{k+1}` and `y ∈ L_n ∩ L_1`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: KahlerModel,
    pub lagrangians: Vec<LagrangianChart>,
    pub x: Vec<AmbientPoint>,
    pub y: AmbientPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Interior,
    /// Boundary node constrained to `L_k`.
    Arc(usize),
    /// Arc node of `L_k` additionally held equidistant from the two ends of
    /// its arc. Used at the midpoint of arc 1 when `n = 2` to remove the
    /// disc automorphisms fixing both marked points.
    Balanced(usize),
    /// Marked node `k` (0 for y).
    Pinned(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub max_iter: usize,
    /// Relative tolerance on the preconditioned gradient norm.
    pub tol: f64,
    pub armijo: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings { max_iter: 2000, tol: 1e-6, armijo: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub max_constraint_violation: f64,
}

#[derive(Debug, Clone)]
pub struct Minimized {
    pub field: MapField,
    pub report: EnergyReport,
    pub trace: Vec<TraceRow>,
}

impl Problem {
    pub fn n(&self) -> usize {
        self.lagrangians.len()
    }

    /// Prescribed image of marked point `k` (0 for y).
    pub fn marked_point(&self, k: usize) -> &AmbientPoint {
        if k == 0 { &self.y } else { &self.x[k - 1] }
    }

    pub fn constraint_tolerance(&self) -> f64 {
        if self.model.is_projective() { 1e-8 } else { 1e-10 }
    }

    /// Checks that every marked image is a transversal intersection of its
    /// two adjacent Lagrangians.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n < 2 {
            return Err(Error::Validation("at least two Lagrangians are required".into()));
        }
        if self.x.len() != n - 1 {
            return Err(Error::Validation(format!("expected {} points x_k, got {}", n - 1, self.x.len())));
        }
        for p in self.x.iter().chain(std::iter::once(&self.y)) {
            self.model.check_point(p).map_err(|e| Error::Validation(e.to_string()))?;
        }
        for k in 0..n {
            let (name, a, b) = if k == 0 { ("y".to_string(), n, 1) } else { (format!("x_{k}"), k, k + 1) };
            let p = self.marked_point(k);
            let la = &self.lagrangians[a - 1];
            let lb = &self.lagrangians[b - 1];
            let pts = la.transversal_intersections(lb, &self.model).map_err(|e| {
                Error::Validation(format!("{name}: L_{a} and L_{b} do not intersect transversally ({e})"))
            })?;
            let hit = pts.iter().find(|q| self.model.same_point(&q.point, p, 1e-9));
            match hit {
                Some(q) if q.transversal => {}
                Some(_) => {
                    return Err(Error::Validation(format!("{name} is a degenerate intersection of L_{a} and L_{b}")))
                }
                None => {
                    return Err(Error::Validation(format!("{name} is not an intersection point of L_{a} and L_{b}")))
                }
            }
        }
        Ok(())
    }

    pub fn roles(&self, mesh: &DiscMesh) -> Vec<NodeRole> {
        let mut roles: Vec<NodeRole> = (0..mesh.num_nodes())
            .map(|v| {
                if mesh.is_marked(v) {
                    NodeRole::Pinned(mesh.marked_k[v] as usize)
                } else if mesh.is_boundary(v) {
                    NodeRole::Arc(mesh.arc_label[v])
                } else {
                    NodeRole::Interior
                }
            })
            .collect();
        if self.n() == 2 && !self.model.same_point(&self.y, &self.x[0], 1e-8) {
            let target = std::f64::consts::FRAC_PI_2;
            let mid = (0..mesh.boundary.len())
                .min_by(|&i, &j| {
                    let di = (mesh.boundary_angle[i] - target).abs();
                    let dj = (mesh.boundary_angle[j] - target).abs();
                    di.partial_cmp(&dj).unwrap()
                })
                .map(|i| mesh.boundary[i]);
            if let Some(v) = mid {
                if roles[v] == NodeRole::Arc(1) {
                    roles[v] = NodeRole::Balanced(1);
                }
            }
        }
        roles
    }

    /// `|⟨a, q⟩|² − |⟨b, q⟩|²` for the end points `a`, `b` of arc `k`, and
    /// its ambient gradient.
    fn balance(&self, k: usize, q: &CVec) -> (f64, CVec) {
        let a = &self.marked_point(k - 1).0;
        let b = &self.marked_point(k % self.n()).0;
        let (za, zb) = (hdot(a, q), hdot(b, q));
        let f = za.norm_sqr() - zb.norm_sqr();
        let grad = (a * za - b * zb) * C64::new(2.0, 0.0);
        (f, grad)
    }

    fn frame_projection(&self, k: usize, p: &CVec, v: &CVec) -> CVec {
        let c = self.model.normalization;
        let mut out = CVec::zeros(v.len());
        for e in self.lagrangians[k - 1].frame_unchecked(&self.model, p) {
            let w = c * hdot(&e, v).re;
            out += e * C64::new(w, 0.0);
        }
        out
    }

    /// Newton projection of a point of `L_k` onto the balance slice.
    fn project_balanced(&self, k: usize, q: CVec) -> Result<CVec> {
        let mut q = q;
        for _ in 0..30 {
            let (f, grad) = self.balance(k, &q);
            if f.abs() < 1e-14 {
                return Ok(q);
            }
            let g = self.frame_projection(k, &q, &grad);
            let gg = cnorm(&g).powi(2);
            if gg < 1e-24 {
                break;
            }
            let next = normalized(&self.model, &q - &g * C64::new(f / gg, 0.0));
            q = self.project_to(k, &next)?;
        }
        Err(Error::Inadmissible(format!("cannot balance the midpoint of arc {k} between its end points")))
    }

    /// Phase-preserving projection onto `L_k`.
    pub fn project_to(&self, k: usize, p: &CVec) -> Result<CVec> {
        let q = self.lagrangians[k - 1].project(&self.model, &AmbientPoint(p.clone()))?;
        Ok(if self.model.is_projective() { align_phase(p, &q.0) } else { q.0 })
    }

    /// Largest distance of an arc node from its Lagrangian.
    pub fn max_violation(&self, u: &MapField) -> Result<f64> {
        let mut worst = 0.0f64;
        for (v, role) in self.roles(&u.mesh).into_iter().enumerate() {
            if let NodeRole::Arc(k) | NodeRole::Balanced(k) = role {
                worst = worst.max(self.lagrangians[k - 1].distance_to(&self.model, &u.point(v))?);
            }
        }
        Ok(worst)
    }

    /// Pins the marked nodes and projects arc nodes, failing if the field is
    /// further than `slack` from admissible.
    pub fn make_admissible(&self, u: &mut MapField, slack: f64) -> Result<()> {
        for (v, role) in self.roles(&u.mesh).into_iter().enumerate() {
            match role {
                NodeRole::Interior => {}
                NodeRole::Arc(k) | NodeRole::Balanced(k) => {
                    let p = u.node_vec(v);
                    let q = self.project_to(k, &p).map_err(|e| {
                        Error::Inadmissible(format!("boundary node {v} cannot be projected onto L_{k}: {e}"))
                    })?;
                    let d = self.model.distance(&AmbientPoint(p), &AmbientPoint(q.clone()));
                    if d > slack {
                        return Err(Error::Inadmissible(format!("boundary node {v} is {d:.3e} away from L_{k}")));
                    }
                    let q = if role == NodeRole::Balanced(k) { self.project_balanced(k, q)? } else { q };
                    u.set_node(v, &q);
                }
                NodeRole::Pinned(k) => {
                    let target = self.marked_point(k);
                    if !self.model.same_point(&u.point(v), target, slack.max(1e-10)) {
                        return Err(Error::Inadmissible(format!("marked node {k} does not carry its prescribed point")));
                    }
                    u.set_node(v, &target.0);
                }
            }
        }
        Ok(())
    }

    fn tangent_projection(&self, role: NodeRole, p: &CVec, v: &CVec) -> CVec {
        match role {
            NodeRole::Interior => self.model.horizontal(p, v),
            NodeRole::Pinned(_) => CVec::zeros(v.len()),
            NodeRole::Arc(k) => self.frame_projection(k, p, v),
            NodeRole::Balanced(k) => {
                let base = self.frame_projection(k, p, v);
                let n = self.frame_projection(k, p, &self.balance(k, p).1);
                let nn = cnorm(&n).powi(2);
                if nn < 1e-24 {
                    return base;
                }
                let w = hdot(&n, &base).re / nn;
                base - n * C64::new(w, 0.0)
            }
        }
    }

    fn retract(&self, u: &MapField, roles: &[NodeRole], dir: &[C64], t: f64) -> Result<MapField> {
        let d = u.dim();
        let mut out = u.clone();
        for (v, role) in roles.iter().enumerate() {
            let p = u.node_vec(v);
            let step = CVec::from_column_slice(&dir[v * d..(v + 1) * d]) * C64::new(t, 0.0);
            match role {
                NodeRole::Pinned(_) => {}
                NodeRole::Interior => out.set_node(v, &normalized(&self.model, p + step)),
                NodeRole::Arc(k) => {
                    let q = normalized(&self.model, p + step);
                    out.set_node(v, &self.project_to(*k, &q)?);
                }
                NodeRole::Balanced(k) => {
                    let q = self.project_to(*k, &normalized(&self.model, p + step))?;
                    out.set_node(v, &self.project_balanced(*k, q)?);
                }
            }
        }
        Ok(out)
    }
}

/// Preconditioned projected descent from an admissible initial field.
pub fn minimize(problem: &Problem, init: MapField, settings: &OptimizerSettings) -> Result<Minimized> {
    let mesh: Arc<DiscMesh> = init.mesh.clone();
    if mesh.n != problem.n() {
        return Err(Error::Domain(format!("mesh has {} marked points, problem has {}", mesh.n, problem.n())));
    }
    let mut u = init;
    problem.make_admissible(&mut u, 1e-6)?;
    let roles = problem.roles(&mesh);
    let fixed: Vec<bool> = roles.iter().map(|r| matches!(r, NodeRole::Pinned(_))).collect();
    let chol = EnvelopeCholesky::factor(&mesh.stiffness.with_dirichlet(&fixed))?;
    let c = problem.model.normalization;
    let d = u.dim();
    let nn = mesh.num_nodes();

    let mut energy = energy::dirichlet_energy(&u);
    let e0 = energy;
    let threshold = settings.tol * (1.0 + e0);
    let mut trace = Vec::new();
    let mut step = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    let mut previous: Option<(Vec<C64>, f64, Vec<C64>)> = None;

    loop {
        let grad = energy::euclidean_gradient(&u);
        let mut rhs = vec![C64::new(0.0, 0.0); nn * d];
        for v in 0..nn {
            let g = CVec::from_column_slice(&grad[v * d..(v + 1) * d]);
            let pg = problem.tangent_projection(roles[v], &u.node_vec(v), &g);
            for k in 0..d {
                rhs[v * d + k] = -pg[k] / c;
            }
        }
        let mut w = vec![C64::new(0.0, 0.0); nn * d];
        let mut col = vec![0.0; nn];
        for k in 0..d {
            for part in 0..2 {
                for v in 0..nn {
                    col[v] = if part == 0 { rhs[v * d + k].re } else { rhs[v * d + k].im };
                }
                chol.solve_in_place(&mut col);
                for v in 0..nn {
                    if part == 0 {
                        w[v * d + k].re = col[v];
                    } else {
                        w[v * d + k].im = col[v];
                    }
                }
            }
        }
        let mut dir = vec![C64::new(0.0, 0.0); nn * d];
        for v in 0..nn {
            let wv = CVec::from_column_slice(&w[v * d..(v + 1) * d]);
            let pw = problem.tangent_projection(roles[v], &u.node_vec(v), &wv);
            dir[v * d..(v + 1) * d].copy_from_slice(pw.as_slice());
        }
        let pg: Vec<C64> = rhs.iter().map(|z| -z * c).collect();
        let slope: f64 = dot(&pg, &dir);
        let grad_norm = (-slope).max(0.0).sqrt();
        trace.push(TraceRow { iter: iterations, energy, grad_norm, max_constraint_violation: problem.max_violation(&u)? });
        if grad_norm < threshold {
            converged = true;
            break;
        }
        if iterations >= settings.max_iter {
            break;
        }
        // Polak–Ribière+ with transport by tangent projection.
        let mut search = dir.clone();
        let mut search_slope = slope;
        if let Some((prev_dir, prev_norm2, prev_search)) = &previous {
            let beta = ((-slope + dot(&pg, prev_dir)) / prev_norm2).max(0.0);
            if beta > 0.0 {
                let mut candidate = dir.clone();
                for v in 0..nn {
                    let q = CVec::from_column_slice(&prev_search[v * d..(v + 1) * d]);
                    let tq = problem.tangent_projection(roles[v], &u.node_vec(v), &q);
                    for k in 0..d {
                        candidate[v * d + k] += tq[k] * beta;
                    }
                }
                let cs = dot(&pg, &candidate);
                if cs < 0.5 * slope {
                    search = candidate;
                    search_slope = cs;
                }
            }
        }
        let mut t = (2.0 * step).min(16.0);
        let mut accepted = None;
        while t > 1e-12 {
            let mut next = 0.5 * t;
            if let Ok(trial) = problem.retract(&u, &roles, &search, t) {
                let e = energy::dirichlet_energy(&trial);
                if e <= energy + settings.armijo * t * search_slope {
                    accepted = Some((trial, e));
                    break;
                }
                let curvature = e - energy - search_slope * t;
                if curvature > 0.0 {
                    next = (-0.5 * search_slope * t * t / curvature).clamp(0.1 * t, 0.5 * t);
                }
            }
            t = next;
        }
        match accepted {
            Some((trial, e)) => {
                previous = Some((dir, -slope, search));
                u = trial;
                energy = e;
                step = t;
                iterations += 1;
            }
            None => break,
        }
    }

    let mut report = energy::evaluate(&u, &problem.lagrangians)?;
    report.iterations = iterations;
    report.converged = converged;
    Ok(Minimized { field: u, report, trace })
}

fn dot(x: &[C64], y: &[C64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a.conj() * b).re).sum()
}

pub fn write_trace_csv<W: Write>(trace: &[TraceRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["iter", "energy", "grad_norm", "max_constraint_violation"])?;
    for r in trace {
        wr.write_record(&[
            r.iter.to_string(),
            format!("{:.16e}", r.energy),
            format!("{:.16e}", r.grad_norm),
            format!("{:.16e}", r.max_constraint_violation),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{ConstantParams, HarmonicParams, Initializer, LuneParams};
    use crate::mesh::build_mesh;
    use std::f64::consts::PI;
    use std::path::Path;

    fn flat_point(z: C64) -> AmbientPoint {
        AmbientPoint(CVec::from_vec(vec![z]))
    }

    fn line(angle: f64, offset: C64, label: usize) -> LagrangianChart {
        LagrangianChart::linear_plane_with_phases(&[angle], Some(CVec::from_vec(vec![offset])), label).unwrap()
    }

    /// Triangle with vertices 0, 1, i traversed counterclockwise.
    fn flat_triangle() -> Problem {
        let o = C64::new(0.0, 0.0);
        Problem {
            model: KahlerModel::flat(1),
            lagrangians: vec![line(0.0, o, 1), line(0.75 * PI, C64::new(1.0, 0.0), 2), line(0.5 * PI, o, 3)],
            x: vec![flat_point(C64::new(1.0, 0.0)), flat_point(C64::new(0.0, 1.0))],
            y: flat_point(o),
        }
    }

    fn lune() -> Problem {
        let model = KahlerModel::projective(1);
        let s = 0.5f64.sqrt();
        let u = crate::linalg::CMat::from_row_slice(
            2,
            2,
            &[C64::new(s, 0.0), C64::new(0.0, -s), C64::new(0.0, -s), C64::new(s, 0.0)],
        );
        Problem {
            lagrangians: vec![
                LagrangianChart::standard_real_projective(1, 1),
                LagrangianChart::real_projective(u, 2).unwrap(),
            ],
            x: vec![model.point(CVec::from_vec(vec![C64::new(s, 0.0), C64::new(-s, 0.0)]))],
            y: model.point(CVec::from_vec(vec![C64::new(s, 0.0), C64::new(s, 0.0)])),
            model,
        }
    }

    fn run(problem: &Problem, init: Initializer, h: f64) -> Minimized {
        let mesh = Arc::new(build_mesh(problem.n(), h, 2.0).unwrap());
        let u = init.build(problem, mesh, Path::new(".")).unwrap();
        minimize(problem, u, &OptimizerSettings::default()).unwrap()
    }

    #[test]
    fn degenerate_scenario_stops_immediately() {
        let o = C64::new(0.0, 0.0);
        let problem = Problem {
            model: KahlerModel::flat(1),
            lagrangians: vec![line(0.0, o, 1), line(0.5 * PI, o, 2)],
            x: vec![flat_point(o)],
            y: flat_point(o),
        };
        problem.validate().unwrap();
        let out = run(&problem, Initializer::Constant(ConstantParams::default()), 0.3);
        assert_eq!(out.report.dirichlet, 0.0);
        assert_eq!(out.report.iterations, 0);
        assert!(out.report.converged);
        assert_eq!(out.trace.len(), 1);
    }

    #[test]
    fn flat_triangle_descends_monotonically_to_its_area() {
        let problem = flat_triangle();
        problem.validate().unwrap();
        let mesh = Arc::new(build_mesh(3, 0.1, 2.0).unwrap());
        let init = Initializer::Harmonic(HarmonicParams::default()).build(&problem, mesh.clone(), Path::new(".")).unwrap();
        let pinned: Vec<Vec<C64>> = mesh.marked.iter().map(|&v| init.node(v).to_vec()).collect();
        let out = minimize(&problem, init, &OptimizerSettings::default()).unwrap();
        assert!(out.report.converged);
        for w in out.trace.windows(2) {
            assert!(w[1].energy <= w[0].energy);
        }
        for (k, &v) in mesh.marked.iter().enumerate() {
            let expected = &problem.marked_point(k).0;
            assert_eq!(out.field.node(v), expected.as_slice());
            assert_eq!(out.field.node(v), pinned[k].as_slice());
        }
        assert!((out.report.dirichlet - 0.5).abs() < 0.03, "{}", out.report.dirichlet);
        assert!(out.report.area <= out.report.dirichlet);
        assert!(problem.max_violation(&out.field).unwrap() < problem.constraint_tolerance());
    }

    #[test]
    fn lune_energy_approaches_pi() {
        let problem = lune();
        problem.validate().unwrap();
        let out = run(&problem, Initializer::GeodesicLune(LuneParams::default()), 0.1);
        assert!(out.report.converged);
        assert!((out.report.dirichlet - PI).abs() < 0.02 * PI, "{}", out.report.dirichlet);
        assert!(problem.max_violation(&out.field).unwrap() < problem.constraint_tolerance());
        let roles = problem.roles(&out.field.mesh);
        let v = roles.iter().position(|r| matches!(r, NodeRole::Balanced(_))).unwrap();
        let (f, _) = problem.balance(1, &out.field.node_vec(v));
        assert!(f.abs() < 1e-12);
    }

    #[test]
    fn validation_names_the_offending_point() {
        let mut problem = flat_triangle();
        problem.x[1] = flat_point(C64::new(0.0, 2.0));
        let err = problem.validate().unwrap_err().to_string();
        assert!(err.contains("x_2") && err.contains("L_2") && err.contains("L_3"), "{err}");
        let mut problem = flat_triangle();
        problem.y = flat_point(C64::new(0.5, 0.0));
        assert!(problem.validate().unwrap_err().to_string().contains("y"));
    }

    #[test]
    fn inadmissible_initializer_is_an_error() {
        let problem = flat_triangle();
        let mesh = Arc::new(build_mesh(3, 0.3, 1.0).unwrap());
        let u = Initializer::Constant(ConstantParams::default()).build(&problem, mesh, Path::new(".")).unwrap();
        let err = minimize(&problem, u, &OptimizerSettings::default()).unwrap_err();
        assert!(matches!(err, Error::Inadmissible(_)), "{err}");
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let problem = flat_triangle();
        let mesh = Arc::new(build_mesh(3, 0.2, 1.0).unwrap());
        let u = Initializer::Harmonic(HarmonicParams::default()).build(&problem, mesh, Path::new(".")).unwrap();
        let out = minimize(&problem, u, &OptimizerSettings { max_iter: 1, ..Default::default() }).unwrap();
        assert!(!out.report.converged);
        assert_eq!(out.report.iterations, 1);
    }

    #[test]
    fn trace_csv_has_expected_columns() {
        let rows = [TraceRow { iter: 0, energy: 1.0, grad_norm: 0.5, max_constraint_violation: 0.0 }];
        let mut buf = Vec::new();
        write_trace_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,energy,grad_norm,max_constraint_violation\n0,1.0000000000000000e0,"));
    }
}
