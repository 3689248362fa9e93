//! Loops of Lagrangian planes along the boundary of a disc and their Maslov
//! index.
//!
//! The pullback bundle is trivialized by parallel transport along the images
//! of the rays from the centre of the disc. Boundary planes are the tangent
//! spaces of the Lagrangians written in that frame; at every marked point the
//! incoming and outgoing planes are joined by the short path that turns each
//! principal direction clockwise.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{normalized, MapField};
use crate::kahler::AmbientPoint;
use crate::linalg::{
    align_phase, complex_complement_basis, diag_phases, hdot, identity, real_orthogonal_diagonalization,
    real_to_complex, unitarity_defect, winding_of_samples, wrap_angle, CMat, CVec, C64,
};
use crate::mesh::{marked_angle, Locator};
use crate::solver::Problem;

/// Largest principal angle allowed between consecutive samples.
pub const DELTA_GAP: f64 = PI / 8.0;

/// Largest phase step of `det²` accepted during unwrapping.
const MAX_UNWRAP_STEP: f64 = PI / 2.0;

/// A Lagrangian subspace `Q·ℝᵐ` of `ℂᵐ` with `Q` unitary.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianPlane {
    q: CMat,
}

impl LagrangianPlane {
    pub fn new(q: CMat) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(Error::Domain("plane representative must be square".into()));
        }
        let defect = unitarity_defect(&q);
        if defect > 1e-10 {
            return Err(Error::Domain(format!("plane representative is not unitary (defect {defect:.3e})")));
        }
        Ok(LagrangianPlane { q })
    }

    /// Unitary factor of the polar decomposition of `a`.
    pub fn from_nearly_unitary(a: CMat) -> Result<Self> {
        let svd = a.svd(true, true);
        if svd.singular_values.iter().any(|&s| s < 1e-8) {
            return Err(Error::Domain("plane representative is singular".into()));
        }
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        LagrangianPlane::new(u * vt)
    }

    /// `ℝᵐ`.
    pub fn real(m: usize) -> Self {
        LagrangianPlane { q: identity(m) }
    }

    /// `diag(e^{iθ₁},…,e^{iθₘ})·ℝᵐ`.
    pub fn diagonal(angles: &[f64]) -> Self {
        LagrangianPlane { q: diag_phases(angles) }
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn rep(&self) -> &CMat {
        &self.q
    }

    pub fn det_squared(&self) -> C64 {
        let d = self.q.determinant();
        d * d
    }

    /// `Q·Qᵀ`, which does not depend on the representative.
    pub fn symbol(&self) -> CMat {
        &self.q * self.q.transpose()
    }

    /// The same plane written with the representative `Q·O`.
    pub fn regauged(&self, o: &DMatrix<f64>) -> Result<Self> {
        LagrangianPlane::new(&self.q * real_to_complex(o))
    }

    pub fn left_multiplied(&self, u: &CMat) -> Result<Self> {
        LagrangianPlane::new(u * &self.q)
    }

    /// Principal angles in `[0, π/2]` between the two planes.
    pub fn principal_angles(&self, other: &LagrangianPlane) -> Result<Vec<f64>> {
        let w = self.q.adjoint() * &other.q;
        if w.nrows() == 1 {
            return Ok(vec![wrap_angle(2.0 * w[(0, 0)].arg()).abs() / 2.0]);
        }
        let (_, vals) = real_orthogonal_diagonalization(&(&w * w.transpose()))?;
        Ok(vals.iter().map(|z| wrap_angle(z.arg()).abs() / 2.0).collect())
    }

    pub fn distance(&self, other: &LagrangianPlane) -> Result<f64> {
        Ok(self.principal_angles(other)?.into_iter().fold(0.0, f64::max))
    }

    /// True when `other⁻¹·self` is real orthogonal up to `tol`.
    pub fn same_plane(&self, other: &LagrangianPlane, tol: f64) -> bool {
        let w = other.q.adjoint() * &self.q;
        w.iter().all(|z| z.im.abs() <= tol)
    }
}

/// `e^{−πit/2}·ℝᵐ`, starting from a plane that must be `ℝᵐ`.
pub fn canonical_short_path(from: &LagrangianPlane, t: f64) -> Result<LagrangianPlane> {
    let m = from.dim();
    if !from.same_plane(&LagrangianPlane::real(m), 1e-8) {
        return Err(Error::CornerNormalization {
            corner: 0,
            reason: "the starting plane of the canonical short path must be ℝᵐ".into(),
        });
    }
    Ok(LagrangianPlane::diagonal(&vec![-PI * t / 2.0; m]))
}

/// Short path at a marked point from the tangent plane of the incoming
/// Lagrangian to that of the outgoing one.
///
/// With `W = Q_in†Q_out` and `W·Wᵀ = O·diag(e^{iφⱼ})·Oᵀ`, the outgoing plane is
/// `Q_in·O·diag(e^{iφⱼ/2})·ℝᵐ`. In a symplectic frame sending the incoming
/// plane to `ℝᵐ` and the outgoing one to `iℝᵐ`, the path `e^{−πit/2}ℝᵐ` turns
/// each direction clockwise, by `ψⱼ = φⱼ/2 − π` here. The counterclockwise
/// path turns by `φⱼ/2`.
#[derive(Debug, Clone)]
pub struct CornerPath {
    base: CMat,
    psi: Vec<f64>,
}

impl CornerPath {
    pub fn new(incoming: &LagrangianPlane, outgoing: &LagrangianPlane, corner: usize, turn: Turn) -> Result<Self> {
        let w = incoming.q.adjoint() * &outgoing.q;
        let (o, vals) = real_orthogonal_diagonalization(&(&w * w.transpose()))
            .map_err(|e| Error::CornerNormalization { corner, reason: e.to_string() })?;
        let mut psi = Vec::with_capacity(vals.len());
        for z in vals {
            let phi = z.arg().rem_euclid(TAU);
            if phi < 1e-8 || TAU - phi < 1e-8 {
                return Err(Error::CornerNormalization {
                    corner,
                    reason: "the tangent planes of the two Lagrangians are not transverse".into(),
                });
            }
            psi.push(match turn {
                Turn::Clockwise => phi / 2.0 - PI,
                Turn::Counterclockwise => phi / 2.0,
            });
        }
        Ok(CornerPath { base: &incoming.q * real_to_complex(&o), psi })
    }

    /// Signed turning angles of the principal directions.
    pub fn turning_angles(&self) -> &[f64] {
        &self.psi
    }

    pub fn plane_at(&self, t: f64) -> LagrangianPlane {
        let d: Vec<f64> = self.psi.iter().map(|p| p * t).collect();
        LagrangianPlane { q: &self.base * diag_phases(&d) }
    }

    /// Unitary `R(t)` with `R(0) = I` and `R(t)·Q_in·ℝᵐ = plane_at(t)`.
    pub fn rotation_at(&self, t: f64) -> CMat {
        let d: Vec<f64> = self.psi.iter().map(|p| p * t).collect();
        &self.base * diag_phases(&d) * self.base.adjoint()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Turn {
    Clockwise,
    Counterclockwise,
}

/// Direction of the short path at each marked point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CornerConvention {
    /// Clockwise at every `x_k`, counterclockwise at the output point `y`.
    #[default]
    OutputReversed,
    /// Clockwise at every marked point.
    Uniform,
}

impl CornerConvention {
    /// Turn at marked point `corner` (0 for y).
    pub fn turn(self, corner: usize) -> Turn {
        match (self, corner) {
            (CornerConvention::OutputReversed, 0) => Turn::Counterclockwise,
            _ => Turn::Clockwise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum SegmentKind {
    /// Tangent planes of `L_k` along the arc `I_k`.
    Arc(usize),
    /// Short path at the marked point with this index (0 for y).
    ShortPath(usize),
    /// Arc `I_k` with the short path at its end folded in.
    CorrectedArc(usize),
}

impl std::fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SegmentKind::Arc(k) => write!(f, "arc_{k}"),
            SegmentKind::ShortPath(0) => write!(f, "short_path_y"),
            SegmentKind::ShortPath(k) => write!(f, "short_path_x{k}"),
            SegmentKind::CorrectedArc(k) => write!(f, "corrected_arc_{k}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoopSample {
    pub angle: f64,
    pub plane: LagrangianPlane,
    pub kind: SegmentKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopStyle {
    /// Arcs followed by explicit short paths.
    ShortPaths,
    /// Each arc multiplied by the progressive corner rotation.
    #[default]
    Corrected,
}

/// Closed loop in the Lagrangian Grassmannian sampled at increasing angles.
#[derive(Debug, Clone)]
pub struct GrassmannianLoop {
    pub samples: Vec<LoopSample>,
    pub closed: bool,
}

impl GrassmannianLoop {
    pub fn new(samples: Vec<LoopSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("a loop needs at least one sample".into()));
        }
        let m = samples[0].plane.dim();
        for (i, s) in samples.iter().enumerate() {
            if s.plane.dim() != m {
                return Err(Error::Domain("loop samples have different dimensions".into()));
            }
            if !(0.0..TAU).contains(&s.angle) || (i > 0 && s.angle <= samples[i - 1].angle) {
                return Err(Error::Domain(format!("loop angles must increase strictly in [0, 2π) (sample {i})")));
            }
        }
        let closed = samples[samples.len() - 1].plane.distance(&samples[0].plane)? < DELTA_GAP;
        Ok(GrassmannianLoop { samples, closed })
    }

    /// Samples `q` at `count` equally spaced angles.
    pub fn from_fn<F: Fn(f64) -> CMat>(count: usize, kind: SegmentKind, q: F) -> Result<Self> {
        let samples = (0..count)
            .map(|j| {
                let angle = TAU * j as f64 / count as f64;
                Ok(LoopSample { angle, plane: LagrangianPlane::new(q(angle))?, kind })
            })
            .collect::<Result<Vec<_>>>()?;
        GrassmannianLoop::new(samples)
    }

    pub fn dim(&self) -> usize {
        self.samples[0].plane.dim()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Largest principal angle between consecutive samples, including the
    /// closing step.
    pub fn max_gap(&self) -> Result<f64> {
        let n = self.samples.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            worst = worst.max(self.samples[i].plane.distance(&self.samples[(i + 1) % n].plane)?);
        }
        Ok(worst)
    }

    pub fn check_density(&self) -> Result<()> {
        let gap = self.max_gap()?;
        if gap >= DELTA_GAP {
            return Err(Error::SamplingDensity(format!(
                "consecutive planes differ by a principal angle of {gap:.3} rad (limit {DELTA_GAP:.3})"
            )));
        }
        Ok(())
    }

    /// The loop traversed in the opposite direction.
    pub fn reversed(&self) -> Result<Self> {
        let mut samples: Vec<LoopSample> = self
            .samples
            .iter()
            .map(|s| LoopSample { angle: (TAU - s.angle) % TAU, plane: s.plane.clone(), kind: s.kind })
            .collect();
        samples.sort_by(|a, b| a.angle.total_cmp(&b.angle));
        GrassmannianLoop::new(samples)
    }

    /// `self` followed by `other`, each compressed to half the circle.
    pub fn concatenate(&self, other: &GrassmannianLoop) -> Result<Self> {
        if !self.samples[0].plane.same_plane(&other.samples[0].plane, 1e-8) {
            return Err(Error::Domain("loops do not share a base plane".into()));
        }
        let half = |s: &LoopSample, offset: f64| LoopSample { angle: offset + s.angle / 2.0, plane: s.plane.clone(), kind: s.kind };
        let samples = self.samples.iter().map(|s| half(s, 0.0)).chain(other.samples.iter().map(|s| half(s, PI))).collect();
        GrassmannianLoop::new(samples)
    }

    /// Values of `det(Q)²` at the samples.
    pub fn det_squared(&self) -> Vec<C64> {
        self.samples.iter().map(|s| s.plane.det_squared()).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let m = self.dim();
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["theta".to_string(), "segment".to_string()];
        for r in 0..m {
            for c in 0..m {
                header.push(format!("q{r}{c}_re"));
                header.push(format!("q{r}{c}_im"));
            }
        }
        wr.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![format!("{:.17e}", s.angle), s.kind.to_string()];
            for r in 0..m {
                for c in 0..m {
                    let z = s.plane.rep()[(r, c)];
                    row.push(format!("{:.17e}", z.re));
                    row.push(format!("{:.17e}", z.im));
                }
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Winding number of `det²` along a closed loop.
pub fn maslov_index(lp: &GrassmannianLoop) -> Result<i64> {
    lp.check_density()?;
    if !lp.closed {
        return Err(Error::Closure { winding: f64::NAN });
    }
    let winding = winding_of_samples(&lp.det_squared(), MAX_UNWRAP_STEP)?;
    let rounded = winding.round();
    if (winding - rounded).abs() > 0.1 {
        return Err(Error::Closure { winding });
    }
    Ok(rounded as i64)
}

/// Tangent planes of one boundary arc in the radial trivialization.
#[derive(Debug, Clone)]
pub struct ArcFrames {
    pub arc: usize,
    pub angles: Vec<f64>,
    pub planes: Vec<LagrangianPlane>,
    /// Tangent plane of `L_k` at the marked point where the arc starts.
    pub start: LagrangianPlane,
    /// Tangent plane of `L_k` at the marked point where the arc ends.
    pub end: LagrangianPlane,
}

/// Unitary frame of the pullback bundle obtained by parallel transport along
/// the images of rays from the centre.
struct Trivialization<'a> {
    u: &'a MapField,
    locator: Locator<'a>,
    center: CVec,
    frame: CMat,
    steps: usize,
}

impl<'a> Trivialization<'a> {
    fn new(u: &'a MapField) -> Result<Self> {
        let locator = u.mesh.locator();
        let (t, b) = locator.locate([0.0, 0.0]).ok_or_else(|| Error::Domain("the centre is not in the mesh".into()))?;
        let center = u.eval_barycentric(t, &b);
        let m = u.model.m;
        let frame = if u.model.is_projective() {
            let basis = complex_complement_basis(&center);
            CMat::from_fn(center.len(), m, |i, j| basis[j][i])
        } else {
            identity(m)
        };
        let steps = ((2.0 / u.mesh.target_h).ceil() as usize).max(16);
        Ok(Trivialization { u, locator, center, frame, steps })
    }

    /// Representative of `end` reached by transport and the transported frame
    /// there (columns horizontal at that representative).
    fn transport(&self, angle: f64, end: &CVec) -> (CVec, CMat) {
        if !self.u.model.is_projective() {
            return (end.clone(), self.frame.clone());
        }
        let mut p = self.center.clone();
        let mut f = self.frame.clone();
        let dir = [angle.cos(), angle.sin()];
        // Transvection along the geodesic from p to q; frame columns are
        // horizontal at p, so only the (p + q) component changes.
        let step = |q: CVec, p: &mut CVec, f: &mut CMat| {
            let q = align_phase(p, &q);
            let c = hdot(p, &q).re;
            let coeff = q.adjoint() * &*f;
            *f -= (&*p + &q) * coeff / C64::new(1.0 + c, 0.0);
            *p = q;
        };
        for j in 1..self.steps {
            let r = j as f64 / self.steps as f64;
            if let Some((t, b)) = self.locator.locate([r * dir[0], r * dir[1]]) {
                let q = self.u.eval_barycentric(t, &b);
                step(q, &mut p, &mut f);
            }
        }
        step(end.clone(), &mut p, &mut f);
        (p, f)
    }
}

/// Boundary value at `angle`, interpolated along the boundary edge.
fn boundary_value(u: &MapField, angle: f64) -> CVec {
    let mesh = &u.mesh;
    let nb = mesh.boundary.len();
    let i = mesh.boundary_angle.partition_point(|&a| a <= angle).saturating_sub(1);
    let j = (i + 1) % nb;
    let a0 = mesh.boundary_angle[i];
    let a1 = if j == 0 { TAU } else { mesh.boundary_angle[j] };
    let s = ((angle - a0) / (a1 - a0)).clamp(0.0, 1.0);
    let p = u.node_vec(mesh.boundary[i]);
    let q = u.node_vec(mesh.boundary[j]);
    let q = if u.model.is_projective() { align_phase(&p, &q) } else { q };
    normalized(&u.model, p * C64::new(1.0 - s, 0.0) + q * C64::new(s, 0.0))
}

fn plane_at(problem: &Problem, triv: &Trivialization, k: usize, angle: f64, point: &CVec) -> Result<LagrangianPlane> {
    let model = &problem.model;
    let (rep, frame) = triv.transport(angle, point);
    let tangent = problem.lagrangians[k - 1].tangent_frame(model, &AmbientPoint(rep))?;
    let scale = C64::new(model.normalization.sqrt(), 0.0);
    let t = CMat::from_fn(frame.nrows(), tangent.len(), |i, j| tangent[j][i] * scale);
    LagrangianPlane::from_nearly_unitary(frame.adjoint() * t)
}

/// Tangent planes along every arc, sampled at the midpoints of
/// `samples_per_arc` equal sub-intervals.
pub fn boundary_frames(problem: &Problem, u: &MapField, samples_per_arc: usize) -> Result<Vec<ArcFrames>> {
    if samples_per_arc == 0 {
        return Err(Error::SamplingDensity("samples_per_arc must be positive".into()));
    }
    let n = problem.n();
    let triv = Trivialization::new(u)?;
    let width = TAU / n as f64;
    (1..=n)
        .map(|k| {
            let start_angle = marked_angle(n, k - 1);
            let angles: Vec<f64> = (0..samples_per_arc)
                .map(|j| start_angle + width * (j as f64 + 0.5) / samples_per_arc as f64)
                .collect();
            let planes = angles
                .par_iter()
                .map(|&a| {
                    let point = problem.lagrangians[k - 1].project(&problem.model, &AmbientPoint(boundary_value(u, a)))?;
                    plane_at(problem, &triv, k, a, &point.0)
                })
                .collect::<Result<Vec<_>>>()?;
            let corner = |idx: usize, angle: f64| plane_at(problem, &triv, k, angle, &problem.marked_point(idx % n).0);
            let start = corner(k - 1, start_angle)?;
            let end = corner(k, marked_angle(n, k))?;
            Ok(ArcFrames { arc: k, angles, planes, start, end })
        })
        .collect()
}

fn assemble_once(
    problem: &Problem,
    u: &MapField,
    samples_per_arc: usize,
    style: LoopStyle,
    convention: CornerConvention,
) -> Result<GrassmannianLoop> {
    let n = problem.n();
    let arcs = boundary_frames(problem, u, samples_per_arc)?;
    let corners = (1..=n)
        .map(|k| CornerPath::new(&arcs[k - 1].end, &arcs[k % n].start, k % n, convention.turn(k % n)))
        .collect::<Result<Vec<_>>>()?;
    let width = TAU / n as f64;
    let mut samples = Vec::new();
    match style {
        LoopStyle::Corrected => {
            for (arc, corner) in arcs.iter().zip(&corners) {
                let start_angle = marked_angle(n, arc.arc - 1);
                for (a, p) in arc.angles.iter().zip(&arc.planes) {
                    let s = (a - start_angle) / width;
                    let plane = p.left_multiplied(&corner.rotation_at(s))?;
                    samples.push(LoopSample { angle: *a, plane, kind: SegmentKind::CorrectedArc(arc.arc) });
                }
            }
        }
        LoopStyle::ShortPaths => {
            let per_corner = (samples_per_arc / 4).max(4);
            let total = n * (samples_per_arc + per_corner);
            let step = TAU / total as f64;
            let mut idx = 0usize;
            for (arc, corner) in arcs.iter().zip(&corners) {
                for p in &arc.planes {
                    samples.push(LoopSample { angle: step * idx as f64, plane: p.clone(), kind: SegmentKind::Arc(arc.arc) });
                    idx += 1;
                }
                for j in 0..per_corner {
                    let t = (j as f64 + 0.5) / per_corner as f64;
                    let kind = SegmentKind::ShortPath(arc.arc % n);
                    samples.push(LoopSample { angle: step * idx as f64, plane: corner.plane_at(t), kind });
                    idx += 1;
                }
            }
        }
    }
    let lp = GrassmannianLoop::new(samples)?;
    lp.check_density()?;
    Ok(lp)
}

/// Closed loop of the boundary planes with the corner short paths inserted.
/// An undersampled loop is retried once at four times the density.
pub fn assemble_loop(
    problem: &Problem,
    u: &MapField,
    samples_per_arc: usize,
    style: LoopStyle,
    convention: CornerConvention,
) -> Result<GrassmannianLoop> {
    match assemble_once(problem, u, samples_per_arc, style, convention) {
        Err(Error::SamplingDensity(_)) => assemble_once(problem, u, 4 * samples_per_arc, style, convention),
        other => other,
    }
}

/// Maslov index of the boundary loop of `u`, with the one-shot resampling
/// applied to phase unwrapping as well.
pub fn maslov_index_of(
    problem: &Problem,
    u: &MapField,
    samples_per_arc: usize,
    convention: CornerConvention,
) -> Result<(GrassmannianLoop, i64)> {
    let lp = assemble_loop(problem, u, samples_per_arc, LoopStyle::Corrected, convention)?;
    match maslov_index(&lp) {
        Ok(mu) => Ok((lp, mu)),
        Err(Error::SamplingDensity(_)) => {
            let lp = assemble_loop(problem, u, 4 * samples_per_arc, LoopStyle::Corrected, convention)?;
            let mu = maslov_index(&lp)?;
            Ok((lp, mu))
        }
        Err(e) => Err(e),
    }
}

/// Rotation `e^{iθ}` applied to every plane, used for synthetic loops.
pub fn phase_loop(m: usize, count: usize, rates: &[f64]) -> Result<GrassmannianLoop> {
    let rates = rates.to_vec();
    GrassmannianLoop::from_fn(count, SegmentKind::Arc(1), move |theta| {
        let d: Vec<f64> = (0..m).map(|i| rates[i] * theta / 2.0).collect();
        diag_phases(&d)
    })
}
