//! Small dense complex linear-algebra helpers shared by the geometry modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CVec = DVector<C64>;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Hermitian inner product, conjugate-linear in the first slot.
pub fn hdot(a: &CVec, b: &CVec) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn cnorm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

/// Maps an angle to (-π, π].
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x % (2.0 * PI);
    if y <= -PI {
        y += 2.0 * PI;
    } else if y > PI {
        y -= 2.0 * PI;
    }
    y
}

pub fn identity(m: usize) -> CMat {
    CMat::identity(m, m)
}

pub fn diag_phases(angles: &[f64]) -> CMat {
    let m = angles.len();
    CMat::from_fn(m, m, |i, j| if i == j { cis(angles[i]) } else { C64::new(0.0, 0.0) })
}

pub fn real_to_complex(a: &DMatrix<f64>) -> CMat {
    a.map(|x| C64::new(x, 0.0))
}

pub fn unitarity_defect(q: &CMat) -> f64 {
    let m = q.ncols();
    (q.adjoint() * q - identity(m)).norm()
}

/// Real orthogonal diagonalization of a complex symmetric matrix whose real
/// and imaginary parts commute (for example a symmetric unitary matrix).
///
/// Returns `(O, eigenvalues)` with `Oᵀ S O = diag(eigenvalues)`.
pub fn real_orthogonal_diagonalization(s: &CMat) -> Result<(DMatrix<f64>, Vec<C64>)> {
    let n = s.nrows();
    let x = s.map(|z| z.re);
    let y = s.map(|z| z.im);
    let scale = s.norm().max(1e-300);
    for alpha in [0.577_215_664_901_532_9, 1.324_717_957_244_746, -0.286_504_796_860_190_1, 2.502_907_875_095_892_6] {
        let mixed = &x + &y * alpha;
        let mixed = (&mixed + mixed.transpose()) * 0.5;
        let eig = SymmetricEigen::new(mixed);
        let o = eig.eigenvectors;
        let oc = real_to_complex(&o);
        let d = oc.transpose() * s * &oc;
        let mut off = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off = off.max(d[(i, j)].norm());
                }
            }
        }
        if off <= 1e-9 * scale {
            let vals = (0..n).map(|i| d[(i, i)]).collect();
            return Ok((o, vals));
        }
    }
    Err(Error::Domain(
        "matrix is not diagonalizable by a real orthogonal change of basis".into(),
    ))
}

/// Orthonormal basis of the real orthogonal complement of `r` (unit) in ℝⁿ,
/// built by Gram–Schmidt over the standard basis in index order, skipping the
/// coordinate where `r` is largest.
pub fn real_complement_basis(r: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = r.len();
    let skip = r.iamax();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    for i in 0..n {
        if i == skip {
            continue;
        }
        let mut v = DVector::<f64>::zeros(n);
        v[i] = 1.0;
        v -= r * r.dot(&v);
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        let nv = v.norm();
        basis.push(v / nv);
    }
    basis
}

/// Orthonormal basis of the Hermitian complement of the unit vector `p`.
pub fn complex_complement_basis(p: &CVec) -> Vec<CVec> {
    let n = p.len();
    let skip = p.iter().enumerate().fold((0, -1.0), |acc, (i, z)| {
        if z.norm() > acc.1 { (i, z.norm()) } else { acc }
    }).0;
    let mut basis: Vec<CVec> = Vec::with_capacity(n - 1);
    for i in 0..n {
        if i == skip {
            continue;
        }
        let mut v = CVec::zeros(n);
        v[i] = C64::new(1.0, 0.0);
        let c = hdot(p, &v);
        v -= p * c;
        for b in &basis {
            let c = hdot(b, &v);
            v -= b * c;
        }
        let nv = cnorm(&v);
        basis.push(v / C64::new(nv, 0.0));
    }
    basis
}

/// Phase factor that rotates `q` so that `⟨p, q⟩` becomes real and nonnegative.
pub fn align_phase(p: &CVec, q: &CVec) -> CVec {
    let z = hdot(p, q);
    if z.norm() < 1e-300 {
        return q.clone();
    }
    q * (z.conj() / z.norm())
}

/// Total winding (in turns) of a closed sequence of nonzero complex samples,
/// obtained by summing wrapped phase increments. The sequence is closed by
/// the increment from the last sample back to the first.
pub fn winding_of_samples(values: &[C64], max_step: f64) -> Result<f64> {
    if values.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for k in 0..values.len() {
        let a = values[k];
        let b = values[(k + 1) % values.len()];
        if a.norm() < 1e-300 || b.norm() < 1e-300 {
            return Err(Error::SamplingDensity("zero sample in phase unwrapping".into()));
        }
        let step = wrap_angle(b.arg() - a.arg());
        if step.abs() > max_step {
            return Err(Error::SamplingDensity(format!(
                "phase jump {step:.3} rad between samples {k} and {}",
                (k + 1) % values.len()
            )));
        }
        total += step;
    }
    Ok(total / (2.0 * PI))
}
