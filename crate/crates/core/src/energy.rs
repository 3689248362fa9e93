//! Dirichlet energy, area and first-order diagnostics of piecewise-linear maps.
//!
//! On `ℂPᵐ` the map is discretized through its projector `P = p p†`, which
//! makes every quantity gauge invariant. With `s_ab = 1 − |⟨p_a, p_b⟩|²` the
//! per-triangle first fundamental form reads
//! `E = −c Σ_{a<b} ∂_sφ_a ∂_sφ_b s_ab` (and likewise for `G`, `F`), so that the
//! Dirichlet energy is `(c/4) Σ_ab K_ab |⟨p_a, p_b⟩|²` with `K` the P1 stiffness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::MapField;
use crate::kahler::{AmbientPoint, LagrangianChart};
use crate::linalg::{align_phase, cnorm, CVec, C64, I};

/// `(E, G, F)` of the pulled-back metric on each triangle.
pub type FirstForm = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub dirichlet: f64,
    pub area: f64,
    pub conformality_defect: f64,
    pub dbar_residual: f64,
    pub perpendicularity_defect: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `1 − |⟨a, b⟩|²` for unit vectors, evaluated without cancellation.
fn separation(a: &[C64], b: &[C64]) -> f64 {
    let z = sdot(a, b);
    a.iter().zip(b).map(|(x, y)| (y - x * z).norm_sqr()).sum()
}

pub fn dirichlet_density(m: &FirstForm) -> f64 {
    0.5 * (m[0] + m[1])
}

/// `√(EG − F²)`, written so that it never exceeds the Dirichlet density.
pub fn area_density(m: &FirstForm) -> f64 {
    let d = 0.5 * (m[0] + m[1]);
    if d <= 0.0 {
        return 0.0;
    }
    let h2 = (0.5 * (m[0] - m[1])).powi(2) + m[2] * m[2];
    d * (1.0 - h2 / (d * d)).max(0.0).sqrt()
}

fn triangle_form(u: &MapField, t: usize) -> FirstForm {
    let mesh = &u.mesh;
    let tri = mesh.triangles[t];
    let g = &mesh.grads[t];
    let c = u.model.normalization;
    if u.model.is_projective() {
        let mut out = [0.0; 3];
        for i in 0..3 {
            for j in i + 1..3 {
                let s = separation(u.node(tri[i]), u.node(tri[j]));
                out[0] -= c * g[i][0] * g[j][0] * s;
                out[1] -= c * g[i][1] * g[j][1] * s;
                out[2] -= 0.5 * c * (g[i][0] * g[j][1] + g[i][1] * g[j][0]) * s;
            }
        }
        out
    } else {
        let (us, ut) = flat_derivatives(u, t);
        [
            c * us.iter().map(|z| z.norm_sqr()).sum::<f64>(),
            c * ut.iter().map(|z| z.norm_sqr()).sum::<f64>(),
            c * us.iter().zip(&ut).map(|(a, b)| (a.conj() * b).re).sum::<f64>(),
        ]
    }
}

fn flat_derivatives(u: &MapField, t: usize) -> (Vec<C64>, Vec<C64>) {
    let tri = u.mesh.triangles[t];
    let g = &u.mesh.grads[t];
    let d = u.dim();
    let mut us = vec![C64::new(0.0, 0.0); d];
    let mut ut = vec![C64::new(0.0, 0.0); d];
    let base = u.node(tri[0]);
    for i in 1..3 {
        for (k, z) in u.node(tri[i]).iter().enumerate() {
            let dz = z - base[k];
            us[k] += dz * g[i][0];
            ut[k] += dz * g[i][1];
        }
    }
    (us, ut)
}

/// `(P_s x, P_t x)` for the interpolated projector on triangle `t`.
fn projector_derivatives(u: &MapField, t: usize, x: &CVec) -> (CVec, CVec) {
    let tri = u.mesh.triangles[t];
    let g = &u.mesh.grads[t];
    let mut ps = CVec::zeros(u.dim());
    let mut pt = CVec::zeros(u.dim());
    for i in 0..3 {
        let p = u.node_vec(tri[i]);
        let w = crate::linalg::hdot(&p, x);
        ps += &p * (w * g[i][0]);
        pt += &p * (w * g[i][1]);
    }
    (ps, pt)
}

/// Horizontal derivatives `(u_s, u_t)` on triangle `t` at the representative
/// `p` (flat: the constant P1 gradient).
pub(crate) fn tangent_derivatives(u: &MapField, t: usize, p: &CVec) -> (CVec, CVec) {
    if u.model.is_projective() {
        let (ps, pt) = projector_derivatives(u, t, p);
        (u.model.horizontal(p, &ps), u.model.horizontal(p, &pt))
    } else {
        let (us, ut) = flat_derivatives(u, t);
        (CVec::from_vec(us), CVec::from_vec(ut))
    }
}

fn centroid_value(u: &MapField, t: usize) -> CVec {
    u.eval_barycentric(t, &[1.0 / 3.0; 3])
}

pub fn first_forms(u: &MapField) -> Vec<FirstForm> {
    (0..u.mesh.triangles.len()).into_par_iter().map(|t| triangle_form(u, t)).collect()
}

fn weighted_sum(u: &MapField, per_triangle: &[f64]) -> f64 {
    per_triangle.iter().zip(&u.mesh.areas).map(|(v, a)| v * a).sum()
}

/// `½ ∫ g(u_s, u_s) + g(u_t, u_t)`.
pub fn dirichlet_energy(u: &MapField) -> f64 {
    let dens: Vec<f64> = first_forms(u).iter().map(dirichlet_density).collect();
    weighted_sum(u, &dens)
}

/// `∫ √det(Du^T Du)`.
pub fn area(u: &MapField) -> f64 {
    let dens: Vec<f64> = first_forms(u).iter().map(area_density).collect();
    weighted_sum(u, &dens)
}

/// L² norm of the Hopf density `(E − G, 2F)`.
pub fn conformality_defect(u: &MapField) -> f64 {
    let dens: Vec<f64> = first_forms(u).iter().map(|m| (m[0] - m[1]).powi(2) + 4.0 * m[2] * m[2]).collect();
    weighted_sum(u, &dens).sqrt()
}

/// L² norm of `½(u_s + J u_t)`.
pub fn dbar_residual(u: &MapField) -> f64 {
    let c = u.model.normalization;
    let dens: Vec<f64> = (0..u.mesh.triangles.len())
        .into_par_iter()
        .map(|t| {
            let p = centroid_value(u, t);
            let (vs, vt) = tangent_derivatives(u, t, &p);
            let w = (vs + vt * I) * C64::new(0.5, 0.0);
            c * cnorm(&w).powi(2)
        })
        .collect();
    weighted_sum(u, &dens).sqrt()
}

/// Gradient of the Dirichlet energy in the ambient real inner product
/// `Re⟨·,·⟩`, one block per node.
pub fn euclidean_gradient(u: &MapField) -> Vec<C64> {
    let d = u.dim();
    let k = &u.mesh.stiffness;
    let c = u.model.normalization;
    let projective = u.model.is_projective();
    let rows: Vec<Vec<C64>> = (0..k.n)
        .into_par_iter()
        .map(|a| {
            let pa = u.node(a);
            let mut g = vec![C64::new(0.0, 0.0); d];
            for (b, kab) in k.row(a) {
                let pb = u.node(b);
                if projective {
                    let w = sdot(pb, pa) * c * kab;
                    for (gi, z) in g.iter_mut().zip(pb) {
                        *gi += z * w;
                    }
                } else {
                    for ((gi, z), za) in g.iter_mut().zip(pb).zip(pa) {
                        *gi += (z - za) * (c * kab);
                    }
                }
            }
            g
        })
        .collect();
    rows.concat()
}

/// Riemannian gradient with respect to the lumped nodal metric
/// `Σ_a m_a g(v_a, w_a)`.
pub fn energy_gradient(u: &MapField) -> Vec<C64> {
    let d = u.dim();
    let c = u.model.normalization;
    let mut g = euclidean_gradient(u);
    for a in 0..u.mesh.num_nodes() {
        let block = CVec::from_column_slice(&g[a * d..(a + 1) * d]);
        let h = u.model.horizontal(&u.node_vec(a), &block) / C64::new(c * u.mesh.lumped_mass[a], 0.0);
        g[a * d..(a + 1) * d].copy_from_slice(h.as_slice());
    }
    g
}

/// `dE(V) = Σ_a Re⟨∇E_a, V_a⟩` for a nodal ambient perturbation `V`.
pub fn directional_derivative(u: &MapField, v: &[C64]) -> f64 {
    euclidean_gradient(u).iter().zip(v).map(|(g, x)| (g.conj() * x).re).sum()
}

/// Maximum of `|g(∂_ν u, e)|` over boundary Gauss points farther than
/// `2·target_h` from every marked point and over the Lagrangian frame `e`
/// at the image point. `lagrangians[k - 1]` constrains arc `k`.
pub fn perpendicularity_defect(u: &MapField, lagrangians: &[LagrangianChart]) -> Result<f64> {
    let radius = 2.0 * u.mesh.target_h;
    Ok(normal_samples(u, lagrangians)?.iter().filter(|p| p.0 >= radius).fold(0.0, |a, p| a.max(p.1)))
}

/// `(distance to the nearest marked point, max_e |g(∂_ν u, e)|)` at every
/// boundary Gauss point.
fn normal_samples(u: &MapField, lagrangians: &[LagrangianChart]) -> Result<Vec<(f64, f64)>> {
    let mesh = &u.mesh;
    let model = &u.model;
    let c = model.normalization;
    let rule = crate::mesh::QuadratureRule::default();
    let corners: Vec<[f64; 2]> = mesh.marked.iter().map(|&v| mesh.nodes[v]).collect();
    let nb = mesh.boundary.len();
    let per_edge: Vec<Result<Vec<(f64, f64)>>> = (0..nb)
        .into_par_iter()
        .map(|i| {
            let (a, b) = (mesh.boundary[i], mesh.boundary[(i + 1) % nb]);
            let (xa, xb) = (mesh.nodes[a], mesh.nodes[b]);
            let lag = &lagrangians[mesh.boundary_edge_arc(i) - 1];
            let t = mesh.boundary_edge_triangle[i];
            let mut samples = Vec::with_capacity(rule.edge_points.len());
            for &s in &rule.edge_points {
                let x = [xa[0] + s * (xb[0] - xa[0]), xa[1] + s * (xb[1] - xa[1])];
                let dc = corners.iter().map(|q| (x[0] - q[0]).hypot(x[1] - q[1])).fold(f64::INFINITY, f64::min);
                let pa = u.node_vec(a);
                let pb = u.node_vec(b);
                let pb = if model.is_projective() { align_phase(&pa, &pb) } else { pb };
                let raw = crate::field::normalized(model, pa * C64::new(1.0 - s, 0.0) + pb * C64::new(s, 0.0));
                let proj = lag.project(model, &AmbientPoint(raw.clone()))?;
                let p = if model.is_projective() { align_phase(&raw, &proj.0) } else { proj.0 };
                let (vs, vt) = tangent_derivatives(u, t, &p);
                let r = x[0].hypot(x[1]);
                let nu = (vs * C64::new(x[0] / r, 0.0)) + (vt * C64::new(x[1] / r, 0.0));
                let mut w = 0.0f64;
                for e in lag.frame_unchecked(model, &p) {
                    w = w.max((c * crate::linalg::hdot(&nu, &e).re).abs());
                }
                samples.push((dc, w));
            }
            Ok(samples)
        })
        .collect();
    let mut out = Vec::with_capacity(2 * nb);
    for v in per_edge {
        out.extend(v?);
    }
    Ok(out)
}

/// All diagnostics of a field; solver bookkeeping is left at its defaults.
pub fn evaluate(u: &MapField, lagrangians: &[LagrangianChart]) -> Result<EnergyReport> {
    let forms = first_forms(u);
    let dir: Vec<f64> = forms.iter().map(dirichlet_density).collect();
    let ar: Vec<f64> = forms.iter().map(area_density).collect();
    Ok(EnergyReport {
        dirichlet: weighted_sum(u, &dir),
        area: weighted_sum(u, &ar),
        conformality_defect: conformality_defect(u),
        dbar_residual: dbar_residual(u),
        perpendicularity_defect: perpendicularity_defect(u, lagrangians)?,
        iterations: 0,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kahler::KahlerModel;
    use crate::mesh::build_mesh;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn flat_field(h: f64, f: impl Fn(C64) -> C64) -> MapField {
        let mesh = Arc::new(build_mesh(3, h, 1.0).unwrap());
        MapField::from_fn(mesh, KahlerModel::flat(1), |x| CVec::from_vec(vec![f(C64::new(x[0], x[1]))])).unwrap()
    }

    #[test]
    fn constant_map_has_zero_energy_and_gradient() {
        let u = flat_field(0.2, |_| C64::new(0.3, -1.0));
        assert_eq!(dirichlet_energy(&u), 0.0);
        assert_eq!(area(&u), 0.0);
        assert!(energy_gradient(&u).iter().all(|z| z.norm() < 1e-12));
        let mesh = Arc::new(build_mesh(2, 0.3, 2.0).unwrap());
        let model = KahlerModel::projective(1);
        let p = model.point(CVec::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]));
        let u = MapField::constant(mesh, model, &p).unwrap();
        assert!(dirichlet_energy(&u).abs() < 1e-15);
        assert!(energy_gradient(&u).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn identity_map_energy_area_and_defects() {
        let u = flat_field(0.1, |z| z);
        let d = dirichlet_energy(&u);
        assert!((d - PI).abs() < 2e-2, "{d}");
        assert!((area(&u) - PI).abs() < 2e-2);
        assert!(conformality_defect(&u) < 1e-12);
        assert!(dbar_residual(&u) < 1e-12);
    }

    #[test]
    fn stretched_map_energy_area_and_hopf_density() {
        let u = flat_field(0.1, |z| C64::new(2.0 * z.re, z.im));
        let d = dirichlet_energy(&u);
        let a = area(&u);
        assert!((d - 2.5 * PI).abs() < 5e-2, "{d}");
        assert!((a - 2.0 * PI).abs() < 4e-2, "{a}");
        assert!(a < d);
        for m in first_forms(&u) {
            assert!((m[0] - m[1] - 3.0).abs() < 1e-12 && m[2].abs() < 1e-12);
        }
        assert!((conformality_defect(&u) - 3.0 * PI.sqrt()).abs() < 0.01 * 3.0 * PI.sqrt());
    }

    #[test]
    fn antiholomorphic_map_has_unit_dbar_density() {
        let u = flat_field(0.1, |z| z.conj());
        let r = dbar_residual(&u);
        assert!((r - PI.sqrt()).abs() < 0.01 * PI.sqrt(), "{r}");
    }

    #[test]
    fn linear_map_is_discretely_harmonic() {
        let u = flat_field(0.1, |z| z);
        let g = energy_gradient(&u);
        for v in 0..u.mesh.num_nodes() {
            if !u.mesh.is_boundary(v) {
                assert!(g[v].norm() < 1e-8, "node {v}: {}", g[v]);
            }
        }
    }

    #[test]
    fn fs_energy_matches_stiffness_form() {
        let mesh = Arc::new(build_mesh(3, 0.25, 2.0).unwrap());
        let model = KahlerModel::projective(2);
        let u = MapField::from_fn(mesh.clone(), model.clone(), |x| {
            CVec::from_vec(vec![
                C64::new(1.0, 0.2 * x[1]),
                C64::new(x[0], 0.5 * x[0] * x[1]),
                C64::new(0.3 - x[1], x[0] * x[0]),
            ])
        })
        .unwrap();
        let c = model.normalization;
        let mut oracle = 0.0;
        for a in 0..mesh.num_nodes() {
            for (b, kab) in mesh.stiffness.row(a) {
                oracle += 0.25 * c * kab * sdot(u.node(a), u.node(b)).norm_sqr();
            }
        }
        let d = dirichlet_energy(&u);
        assert!((d - oracle).abs() < 1e-10 * d, "{d} vs {oracle}");
    }

    fn random_field(seed: u64, model: KahlerModel, h: f64) -> MapField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mesh = Arc::new(build_mesh(3, h, 1.0).unwrap());
        let d = model.ambient_dim();
        let values: Vec<C64> = (0..mesh.num_nodes() * d)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut u = MapField::new(mesh, model.clone(), vec![C64::new(0.0, 0.0); values.len()]).unwrap();
        for a in 0..u.mesh.num_nodes() {
            let v = CVec::from_column_slice(&values[a * d..(a + 1) * d]);
            u.set_node(a, &crate::field::normalized(&model, v));
        }
        u
    }

    /// Largest relative deviation between the lumped Riemannian gradient and
    /// central differences along a real orthonormal basis of each tangent space.
    fn gradient_error(u: &MapField, step: f64) -> f64 {
        let model = &u.model;
        let d = u.dim();
        let c = model.normalization;
        let grad = energy_gradient(u);
        let mut diff = 0.0;
        let mut norm = 0.0;
        for a in 0..u.mesh.num_nodes() {
            let p = u.node_vec(a);
            let basis: Vec<CVec> = if model.is_projective() {
                crate::linalg::complex_complement_basis(&p)
            } else {
                (0..d).map(|k| CVec::from_fn(d, |i, _| if i == k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })).collect()
            };
            let g = CVec::from_column_slice(&grad[a * d..(a + 1) * d]);
            for e in basis.iter().flat_map(|e| [e.clone(), e * I]) {
                let shifted = |t: f64| {
                    let mut w = u.clone();
                    w.set_node(a, &crate::field::normalized(model, &p + &e * C64::new(t, 0.0)));
                    dirichlet_energy(&w)
                };
                let fd = (shifted(step) - shifted(-step)) / (2.0 * step);
                let an = c * u.mesh.lumped_mass[a] * crate::linalg::hdot(&e, &g).re;
                diff += (fd - an).powi(2);
                norm += an * an;
            }
        }
        (diff / norm).sqrt()
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..4 {
            for model in [KahlerModel::flat(2), KahlerModel::projective(2)] {
                let u = random_field(seed, model, 0.6);
                let err = gradient_error(&u, 1e-5);
                assert!(err < 1e-5, "seed {seed}: {err:e}");
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn area_never_exceeds_energy_per_triangle(seed in 0u64..1_000_000, projective in proptest::bool::ANY) {
            let model = if projective { KahlerModel::projective(2) } else { KahlerModel::flat(2) };
            let u = random_field(seed, model, 0.5);
            for m in first_forms(&u) {
                proptest::prop_assert!(area_density(&m) <= dirichlet_density(&m));
            }
        }
    }
}
