#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use holodisc::energy::{dirichlet_energy, energy_gradient};
use holodisc::field::{normalized, MapField};
use holodisc::kahler::KahlerModel;
use holodisc::linalg::{complex_complement_basis, hdot, CMat, CVec, C64};
use holodisc::loops::{GrassmannianLoop, LagrangianPlane, LoopSample, SegmentKind};
use holodisc::mesh::build_mesh;
use holodisc::scenario::Scenario;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

pub fn scenario(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).unwrap()
}

pub fn random_field(rng: &mut ChaCha8Rng, model: &KahlerModel, h: f64) -> MapField {
    let mesh = Arc::new(build_mesh(3, h, 1.0).unwrap());
    let d = model.ambient_dim();
    let mut values = Vec::with_capacity(mesh.num_nodes() * d);
    for _ in 0..mesh.num_nodes() {
        let v = CVec::from_fn(d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        values.extend(normalized(model, v).iter());
    }
    MapField::new(mesh, model.clone(), values).unwrap()
}

/// Relative deviation of the lumped Riemannian gradient from central
/// differences of the energy along a real orthonormal basis of every
/// tangent space.
pub fn gradient_error(u: &MapField, step: f64) -> f64 {
    let model = &u.model;
    let d = u.dim();
    let grad = energy_gradient(u);
    let (mut diff, mut norm) = (0.0, 0.0);
    for a in 0..u.mesh.num_nodes() {
        let p = u.node_vec(a);
        let basis: Vec<CVec> = if model.is_projective() {
            complex_complement_basis(&p)
        } else {
            (0..d).map(|k| CVec::from_fn(d, |i, _| C64::new(if i == k { 1.0 } else { 0.0 }, 0.0))).collect()
        };
        let g = CVec::from_column_slice(&grad[a * d..(a + 1) * d]);
        for e in basis.iter().flat_map(|e| [e.clone(), e * C64::i()]) {
            let at = |t: f64| {
                let mut w = u.clone();
                w.set_node(a, &normalized(model, &p + &e * C64::new(t, 0.0)));
                dirichlet_energy(&w)
            };
            let fd = (at(step) - at(-step)) / (2.0 * step);
            let an = model.normalization * u.mesh.lumped_mass[a] * hdot(&e, &g).re;
            diff += (fd - an).powi(2);
            norm += an * an;
        }
    }
    (diff / norm).sqrt()
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, m: usize) -> CMat {
    let a = CMat::from_fn(m, m, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// `exp(i(A cos θ + B sin 2θ))·diag(e^{ikθ/2})·ℝᵐ`, whose index is `Σk`.
pub fn random_loop(seed: u64, k: &[i64], count: usize) -> GrassmannianLoop {
    let m = k.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_hermitian(&mut rng, m);
    let b = random_hermitian(&mut rng, m);
    let k = k.to_vec();
    GrassmannianLoop::from_fn(count, SegmentKind::Arc(1), move |t| {
        let h = &a * C64::new(0.0, t.cos()) + &b * C64::new(0.0, (2.0 * t).sin());
        let d = CMat::from_fn(m, m, |i, j| if i == j { C64::from_polar(1.0, k[i] as f64 * t / 2.0) } else { C64::new(0.0, 0.0) });
        h.exp() * d
    })
    .unwrap()
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    a.qr().q()
}

/// Each sample re-expressed in its own random real orthonormal basis.
pub fn regauged(lp: &GrassmannianLoop, rng: &mut ChaCha8Rng) -> GrassmannianLoop {
    let samples = lp
        .samples
        .iter()
        .map(|s| LoopSample { angle: s.angle, plane: s.plane.regauged(&random_orthogonal(rng, lp.dim())).unwrap(), kind: s.kind })
        .collect();
    GrassmannianLoop::new(samples).unwrap()
}

/// `other` moved by a constant unitary so that it starts on the base plane of `lp`.
pub fn rebased(other: &GrassmannianLoop, lp: &GrassmannianLoop) -> GrassmannianLoop {
    let shift = lp.samples[0].plane.rep() * other.samples[0].plane.rep().adjoint();
    let samples = other
        .samples
        .iter()
        .map(|s| LoopSample { angle: s.angle, plane: s.plane.left_multiplied(&shift).unwrap(), kind: s.kind })
        .collect();
    GrassmannianLoop::new(samples).unwrap()
}

pub fn same_plane_count(a: &GrassmannianLoop, b: &GrassmannianLoop) -> usize {
    a.samples.iter().zip(&b.samples).filter(|(x, y)| x.plane.same_plane(&y.plane, 1e-10)).count()
}

pub fn real_plane(m: usize) -> LagrangianPlane {
    LagrangianPlane::real(m)
}

/// Winding of `det G` by unwrapping its phase on a fine grid.
pub fn det_winding_oracle(g: impl Fn(C64) -> CMat, samples: usize) -> i64 {
    let mut total = 0.0;
    let mut prev = g(C64::new(1.0, 0.0)).determinant();
    for j in 1..=samples {
        let z = C64::from_polar(1.0, std::f64::consts::TAU * j as f64 / samples as f64);
        let cur = g(z).determinant();
        total += (cur / prev).arg();
        prev = cur;
    }
    (total / std::f64::consts::TAU).round() as i64
}

/// Fubini–Study distance from `p` to the projective line through `a` and `b`.
pub fn distance_to_line(model: &KahlerModel, a: &CVec, b: &CVec, p: &CVec) -> f64 {
    let e1 = a / C64::new(a.norm(), 0.0);
    let w = b - &e1 * hdot(&e1, b);
    let e2 = &w / C64::new(w.norm(), 0.0);
    let p = p / C64::new(p.norm(), 0.0);
    let inside = (hdot(&e1, &p).norm_sqr() + hdot(&e2, &p).norm_sqr()).sqrt().min(1.0);
    let outside = (1.0 - inside * inside).max(0.0).sqrt();
    model.normalization.sqrt() * outside.atan2(inside)
}
