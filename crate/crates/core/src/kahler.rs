//! Concrete Kähler ambient geometries and their Lagrangian submanifolds.
//!
//! Two models are supported: flat `ℂᵐ` with the Euclidean metric, and `ℂPᵐ`
//! with the Fubini–Study metric. Points of `ℂPᵐ` are unit homogeneous vectors
//! in `ℂᵐ⁺¹`; tangent vectors are horizontal lifts (Hermitian-orthogonal to the
//! representative), so the complex structure acts as multiplication by `i` and
//! the metric is `c · Re⟨v, w⟩` with `c` the normalization constant. The
//! default `c = 4` gives the chart metric `4|dz|²/(1+|z|²)²` on `ℂP¹`, the round
//! sphere of radius one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{
    align_phase, cnorm, hdot, real_complement_basis, real_orthogonal_diagonalization, real_to_complex,
    unitarity_defect, CMat, CVec, C64, I,
};

/// Fubini–Study normalization giving the round unit sphere on `ℂP¹`.
pub const DEFAULT_FS_NORMALIZATION: f64 = 4.0;

/// Largest FS distance from a Lagrangian at which projection is attempted.
pub const PROJECTION_RADIUS: f64 = PI / 4.0;

const TANGENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    FlatCm,
    ProjectiveFs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KahlerModel {
    pub kind: ModelKind,
    /// Complex dimension `m`.
    pub m: usize,
    /// Metric scale `c` in `g = c · Re⟨v, w⟩` (1 for flat space).
    pub normalization: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbientPoint(pub CVec);

impl AmbientPoint {
    pub fn coords(&self) -> &CVec {
        &self.0
    }

    pub fn from_pairs(pairs: &[[f64; 2]]) -> Self {
        AmbientPoint(CVec::from_iterator(pairs.len(), pairs.iter().map(|p| C64::new(p[0], p[1]))))
    }

    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.0.iter().map(|z| [z.re, z.im]).collect()
    }
}

impl KahlerModel {
    pub fn flat(m: usize) -> Self {
        KahlerModel { kind: ModelKind::FlatCm, m, normalization: 1.0 }
    }

    pub fn projective(m: usize) -> Self {
        KahlerModel { kind: ModelKind::ProjectiveFs, m, normalization: DEFAULT_FS_NORMALIZATION }
    }

    pub fn with_normalization(mut self, c: f64) -> Self {
        self.normalization = c;
        self
    }

    pub fn is_projective(&self) -> bool {
        self.kind == ModelKind::ProjectiveFs
    }

    /// Length of the coordinate vector of a point.
    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ModelKind::FlatCm => self.m,
            ModelKind::ProjectiveFs => self.m + 1,
        }
    }

    pub fn check_point(&self, p: &AmbientPoint) -> Result<()> {
        if p.0.len() != self.ambient_dim() {
            return Err(Error::Domain(format!(
                "point has {} coordinates, model expects {}",
                p.0.len(),
                self.ambient_dim()
            )));
        }
        if self.is_projective() && (cnorm(&p.0) - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "homogeneous vector has norm {:.15}, expected 1",
                cnorm(&p.0)
            )));
        }
        Ok(())
    }

    /// Normalizes a coordinate vector into a model point (unit norm and
    /// canonical phase gauge for `ℂPᵐ`).
    pub fn point(&self, v: CVec) -> AmbientPoint {
        match self.kind {
            ModelKind::FlatCm => AmbientPoint(v),
            ModelKind::ProjectiveFs => {
                let n = cnorm(&v);
                AmbientPoint(canonical_gauge(v / C64::new(n, 0.0)))
            }
        }
    }

    /// Affine chart point `[1 : z₁ : … : z_m]` (or `z` itself for flat space).
    pub fn chart_point(&self, z: &[C64]) -> AmbientPoint {
        match self.kind {
            ModelKind::FlatCm => AmbientPoint(CVec::from_column_slice(z)),
            ModelKind::ProjectiveFs => {
                let mut v = CVec::zeros(self.m + 1);
                v[0] = C64::new(1.0, 0.0);
                for (i, zi) in z.iter().enumerate() {
                    v[i + 1] = *zi;
                }
                self.point(v)
            }
        }
    }

    /// Tangent vector at `chart_point(z)` induced by the chart direction `dz`.
    pub fn chart_tangent(&self, z: &[C64], dz: &[C64]) -> CVec {
        match self.kind {
            ModelKind::FlatCm => CVec::from_column_slice(dz),
            ModelKind::ProjectiveFs => {
                let mut w = CVec::zeros(self.m + 1);
                let mut dw = CVec::zeros(self.m + 1);
                w[0] = C64::new(1.0, 0.0);
                for i in 0..self.m {
                    w[i + 1] = z[i];
                    dw[i + 1] = dz[i];
                }
                let n = cnorm(&w);
                let p = &w / C64::new(n, 0.0);
                let dp = &dw / C64::new(n, 0.0) - &w * C64::new(hdot(&w, &dw).re / (n * n * n), 0.0);
                // lift at the canonical representative of the chart point
                let pc = self.chart_point(z).0;
                let phase = hdot(&p, &pc);
                let dp = dp * phase;
                self.horizontal(&pc, &dp)
            }
        }
    }

    /// Orthogonal projection onto the tangent (horizontal) space at `p`.
    pub fn horizontal(&self, p: &CVec, v: &CVec) -> CVec {
        match self.kind {
            ModelKind::FlatCm => v.clone(),
            ModelKind::ProjectiveFs => v - p * hdot(p, v),
        }
    }

    pub fn check_tangent(&self, p: &AmbientPoint, v: &CVec) -> Result<()> {
        if v.len() != self.ambient_dim() {
            return Err(Error::Domain("tangent vector has wrong dimension".into()));
        }
        if self.is_projective() {
            let z = hdot(&p.0, v);
            let scale = cnorm(v).max(1.0);
            if z.re.abs() > TANGENT_TOL * scale {
                return Err(Error::Domain(format!(
                    "vector is not orthogonal to the base point p (Re⟨p,v⟩ = {:.3e})",
                    z.re
                )));
            }
            if z.im.abs() > TANGENT_TOL * scale {
                return Err(Error::Domain(format!(
                    "vector is not orthogonal to i·p (Im⟨p,v⟩ = {:.3e})",
                    z.im
                )));
            }
        }
        Ok(())
    }

    /// Riemannian metric `g_p(v, w) = ω(v, Jw)`.
    pub fn metric_eval(&self, p: &AmbientPoint, v: &CVec, w: &CVec) -> Result<f64> {
        self.check_tangent(p, v)?;
        self.check_tangent(p, w)?;
        Ok(self.normalization * hdot(v, w).re)
    }

    /// Symplectic form `ω(v, w) = g(Jv, w)`.
    pub fn omega(&self, p: &AmbientPoint, v: &CVec, w: &CVec) -> Result<f64> {
        self.check_tangent(p, v)?;
        self.check_tangent(p, w)?;
        Ok(self.normalization * hdot(v, w).im)
    }

    pub fn complex_structure(&self, v: &CVec) -> CVec {
        v * I
    }

    /// Geodesic distance.
    pub fn distance(&self, p: &AmbientPoint, q: &AmbientPoint) -> f64 {
        match self.kind {
            ModelKind::FlatCm => cnorm(&(&p.0 - &q.0)),
            ModelKind::ProjectiveFs => {
                let overlap = hdot(&p.0, &q.0);
                let perp = cnorm(&(&q.0 - &p.0 * overlap));
                self.normalization.sqrt() * perp.atan2(overlap.norm())
            }
        }
    }

    pub fn same_point(&self, p: &AmbientPoint, q: &AmbientPoint, tol: f64) -> bool {
        match self.kind {
            ModelKind::FlatCm => cnorm(&(&p.0 - &q.0)) <= tol,
            ModelKind::ProjectiveFs => (1.0 - hdot(&p.0, &q.0).norm()).abs() <= tol,
        }
    }

    /// Moves `p` along the tangent vector `v` and returns to the model.
    pub fn retract(&self, p: &AmbientPoint, v: &CVec) -> AmbientPoint {
        self.point(&p.0 + v)
    }
}

/// Rotates a unit homogeneous vector so its first non-negligible coordinate is
/// real and positive.
pub fn canonical_gauge(v: CVec) -> CVec {
    let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return v;
    }
    for z in v.iter() {
        if z.norm() > 1e-8 * scale {
            let ph = z.conj() / z.norm();
            return v * ph;
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChartKind {
    /// `offset + Q·ℝᵐ` in `ℂᵐ` with `Q` unitary.
    LinearPlane { basis: CMat, offset: CVec },
    /// `U·ℝPᵐ` in `ℂPᵐ` with `U` unitary.
    RealProjective { unitary: CMat },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianChart {
    pub kind: ChartKind,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub point: AmbientPoint,
    pub transversal: bool,
}

impl LagrangianChart {
    pub fn linear_plane(basis: CMat, offset: CVec, label: usize) -> Result<Self> {
        if basis.nrows() != basis.ncols() || basis.nrows() != offset.len() {
            return Err(Error::Domain("linear plane basis must be m×m with an m-vector offset".into()));
        }
        if unitarity_defect(&basis) > 1e-10 {
            return Err(Error::Domain("linear plane basis is not unitary".into()));
        }
        Ok(LagrangianChart { kind: ChartKind::LinearPlane { basis, offset }, label })
    }

    /// `offset + diag(e^{iθ₁},…,e^{iθ_m})·ℝᵐ`.
    pub fn linear_plane_with_phases(phases: &[f64], offset: Option<CVec>, label: usize) -> Result<Self> {
        let m = phases.len();
        let basis = crate::linalg::diag_phases(phases);
        Self::linear_plane(basis, offset.unwrap_or_else(|| CVec::zeros(m)), label)
    }

    pub fn real_projective(unitary: CMat, label: usize) -> Result<Self> {
        if unitary.nrows() != unitary.ncols() {
            return Err(Error::Domain("real projective chart needs a square unitary".into()));
        }
        if unitarity_defect(&unitary) > 1e-10 {
            return Err(Error::Domain("real projective chart matrix is not unitary".into()));
        }
        Ok(LagrangianChart { kind: ChartKind::RealProjective { unitary }, label })
    }

    /// Image of `ℝPᵐ` under `exp(-i·angle/2·H)` for a real symmetric generator `H`.
    /// With `H = σ_x` on `ℂP¹` this is the rotation of the sphere by `angle`
    /// about the real axis through `[1:±1]`.
    pub fn real_projective_rotation(generator: &DMatrix<f64>, angle: f64, label: usize) -> Result<Self> {
        if (generator - generator.transpose()).norm() > 1e-12 {
            return Err(Error::Domain("rotation generator must be real symmetric".into()));
        }
        let eig = SymmetricEigen::new(generator.clone());
        let v = real_to_complex(&eig.eigenvectors);
        let n = generator.nrows();
        let d = CMat::from_fn(n, n, |i, j| {
            if i == j { C64::from_polar(1.0, -0.5 * angle * eig.eigenvalues[i]) } else { C64::new(0.0, 0.0) }
        });
        let u = &v * d * v.transpose();
        Self::real_projective(u, label)
    }

    pub fn standard_real_projective(m: usize, label: usize) -> Self {
        LagrangianChart { kind: ChartKind::RealProjective { unitary: CMat::identity(m + 1, m + 1) }, label }
    }

    fn check_model(&self, model: &KahlerModel) -> Result<()> {
        let ok = match &self.kind {
            ChartKind::LinearPlane { basis, .. } => model.kind == ModelKind::FlatCm && basis.nrows() == model.m,
            ChartKind::RealProjective { unitary } => {
                model.kind == ModelKind::ProjectiveFs && unitary.nrows() == model.m + 1
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("Lagrangian {} does not belong to this model", self.label)))
        }
    }

    /// Real representative `r` and phase `α` with `p = e^{iα}·U·r`.
    pub(crate) fn real_representative(unitary: &CMat, p: &CVec) -> (DVector<f64>, C64) {
        let q = unitary.adjoint() * p;
        let s: C64 = q.iter().map(|z| z * z).sum();
        let phase = if s.norm() > 1e-300 { C64::from_polar(1.0, 0.5 * s.arg()) } else { C64::new(1.0, 0.0) };
        let r = (q * phase.conj()).map(|z| z.re);
        let n = r.norm();
        (r / n, phase)
    }

    /// Nearest point of the Lagrangian.
    pub fn project(&self, model: &KahlerModel, p: &AmbientPoint) -> Result<AmbientPoint> {
        self.check_model(model)?;
        match &self.kind {
            ChartKind::LinearPlane { basis, offset } => {
                let x = (basis.adjoint() * (&p.0 - offset)).map(|z| C64::new(z.re, 0.0));
                Ok(AmbientPoint(offset + basis * x))
            }
            ChartKind::RealProjective { unitary } => {
                let q = unitary.adjoint() * &p.0;
                let a = q.map(|z| z.re);
                let b = q.map(|z| z.im);
                let mat = &a * a.transpose() + &b * b.transpose();
                let eig = SymmetricEigen::new(mat);
                let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
                idx.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
                let top = eig.eigenvalues[idx[0]];
                let second = if idx.len() > 1 { eig.eigenvalues[idx[1]] } else { 0.0 };
                let margin = top - second;
                let r = eig.eigenvectors.column(idx[0]).into_owned();
                let candidate = model.point(unitary * real_to_complex(&DMatrix::from_column_slice(r.len(), 1, r.as_slice())).column(0));
                let distance = model.distance(p, &candidate);
                if distance > PROJECTION_RADIUS || margin < 1e-9 {
                    return Err(Error::ProjectionIllPosed { label: self.label, distance, margin });
                }
                Ok(candidate)
            }
        }
    }

    pub fn distance_to(&self, model: &KahlerModel, p: &AmbientPoint) -> Result<f64> {
        let q = self.project(model, p)?;
        Ok(model.distance(p, &q))
    }

    pub fn contains(&self, model: &KahlerModel, p: &AmbientPoint, tol: f64) -> bool {
        matches!(self.distance_to(model, p), Ok(d) if d <= tol)
    }

    /// g-orthonormal basis of the tangent space at `p`, expressed as lifts at
    /// the given representative of `p`.
    pub fn tangent_frame(&self, model: &KahlerModel, p: &AmbientPoint) -> Result<Vec<CVec>> {
        self.check_model(model)?;
        let d = self.distance_to(model, p)?;
        if d > 1e-7 {
            return Err(Error::NotOnLagrangian { label: self.label, distance: d });
        }
        Ok(self.frame_unchecked(model, &p.0))
    }

    pub(crate) fn frame_unchecked(&self, model: &KahlerModel, p: &CVec) -> Vec<CVec> {
        match &self.kind {
            ChartKind::LinearPlane { basis, .. } => (0..basis.ncols()).map(|j| basis.column(j).into_owned()).collect(),
            ChartKind::RealProjective { unitary } => {
                let (r, phase) = Self::real_representative(unitary, p);
                let scale = C64::new(1.0 / model.normalization.sqrt(), 0.0);
                real_complement_basis(&r)
                    .into_iter()
                    .map(|e| unitary * e.map(|x| C64::new(x, 0.0)) * phase * scale)
                    .collect()
            }
        }
    }

    /// All intersection points with another chart of the same model.
    pub fn transversal_intersections(&self, other: &LagrangianChart, model: &KahlerModel) -> Result<Vec<Intersection>> {
        self.check_model(model)?;
        other.check_model(model)?;
        match (&self.kind, &other.kind) {
            (ChartKind::LinearPlane { basis: qa, offset: oa }, ChartKind::LinearPlane { basis: qb, offset: ob }) => {
                let m = model.m;
                let mut sys = DMatrix::<f64>::zeros(2 * m, 2 * m);
                for i in 0..m {
                    for j in 0..m {
                        sys[(i, j)] = qa[(i, j)].re;
                        sys[(i + m, j)] = qa[(i, j)].im;
                        sys[(i, j + m)] = -qb[(i, j)].re;
                        sys[(i + m, j + m)] = -qb[(i, j)].im;
                    }
                }
                let sv = sys.clone().svd(true, true);
                let smin = sv.singular_values.min();
                if smin < 1e-10 {
                    return Err(Error::NonTransverse(format!(
                        "Lagrangians {} and {} do not meet in isolated points",
                        self.label, other.label
                    )));
                }
                let rhs_c = ob - oa;
                let mut rhs = DVector::<f64>::zeros(2 * m);
                for i in 0..m {
                    rhs[i] = rhs_c[i].re;
                    rhs[i + m] = rhs_c[i].im;
                }
                let sol = sv.solve(&rhs, 1e-14).map_err(|e| Error::Domain(e.to_string()))?;
                let x = CVec::from_iterator(m, (0..m).map(|j| C64::new(sol[j], 0.0)));
                let point = AmbientPoint(oa + qa * x);
                Ok(vec![Intersection { point, transversal: true }])
            }
            (ChartKind::RealProjective { unitary: ua }, ChartKind::RealProjective { unitary: ub }) => {
                let w = ub.adjoint() * ua;
                let s = w.transpose() * &w;
                let (o, vals) = real_orthogonal_diagonalization(&s)?;
                for i in 0..vals.len() {
                    for j in i + 1..vals.len() {
                        if (vals[i] - vals[j]).norm() < 1e-8 {
                            return Err(Error::NonTransverse(format!(
                                "Lagrangians {} and {} share a positive-dimensional intersection",
                                self.label, other.label
                            )));
                        }
                    }
                }
                let mut out = Vec::with_capacity(vals.len());
                for j in 0..vals.len() {
                    let r = o.column(j).map(|x| C64::new(x, 0.0));
                    let point = model.point(ua * r);
                    let transversal = self.tangent_rank_full(other, model, &point);
                    out.push(Intersection { point, transversal });
                }
                Ok(out)
            }
            _ => Err(Error::Domain("unsupported Lagrangian pair".into())),
        }
    }

    fn tangent_rank_full(&self, other: &LagrangianChart, model: &KahlerModel, p: &AmbientPoint) -> bool {
        let fa = self.frame_unchecked(model, &p.0);
        let fb = other.frame_unchecked(model, &p.0);
        let dim = model.ambient_dim();
        let cols: Vec<&CVec> = fa.iter().chain(fb.iter()).collect();
        let mut mat = DMatrix::<f64>::zeros(2 * dim, cols.len());
        for (j, v) in cols.iter().enumerate() {
            for i in 0..dim {
                mat[(i, j)] = v[i].re;
                mat[(i + dim, j)] = v[i].im;
            }
        }
        let sv = mat.singular_values();
        let smax = sv.max();
        sv.min() > 1e-8 * smax.max(1e-300)
    }
}

/// Phase-aligned copy of `q` relative to `p`, as an ambient point.
pub fn aligned(p: &AmbientPoint, q: &AmbientPoint) -> AmbientPoint {
    AmbientPoint(align_phase(&p.0, &q.0))
}
