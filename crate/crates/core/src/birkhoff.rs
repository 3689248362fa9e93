//! Partial indices of matrix symbols on the unit circle and the verdicts
//! derived from them.
//!
//! For `G = Θ·diag(ζ^κ)·conj(Θ)⁻¹` the transposed symbol has the right
//! factorization `Gᵀ = G₋·diag(ζ^κ)·G₊`, so the Toeplitz operator of
//! `ζ^{−s}Gᵀ` on `H²` has kernel dimension `d(s) = Σᵢ max(s − κᵢ, 0)`. The
//! multiplicity of each index is the second difference of `d`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis, winding_of_samples, CMat, C64};
use crate::loops::GrassmannianLoop;

/// Fraction of Fourier energy that defines the empirical bandwidth.
const BANDWIDTH_ENERGY: f64 = 1.0 - 1e-8;
const MAX_TAIL: f64 = 1e-6;
const INVERTIBILITY_GRID: usize = 256;
const MAX_CONDITION: f64 = 1e8;
const RANK_THRESHOLD: f64 = 1e-8;
const RANK_GAP: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolSource {
    Explicit,
    FromLoop,
}

/// Truncated Fourier series `G(ζ) = Σ_{|f| ≤ N} G_f ζ^f` of an `m×m` symbol.
#[derive(Debug, Clone)]
pub struct MatrixSymbol {
    pub m: usize,
    pub order: usize,
    /// Coefficient of `ζ^f` at index `f + order`.
    pub coeffs: Vec<CMat>,
    pub source: SymbolSource,
    /// Smallest `B` with `Σ_{|f| ≤ B} ‖G_f‖² ≥ (1 − 1e−8)·Σ ‖G_f‖²`.
    pub bandwidth: usize,
}

fn energy(c: &CMat) -> f64 {
    c.iter().map(|z| z.norm_sqr()).sum()
}

fn bandwidth_of(energies: &BTreeMap<i64, f64>) -> usize {
    let total: f64 = energies.values().sum();
    let max_f = energies.keys().map(|f| f.unsigned_abs() as usize).max().unwrap_or(0);
    let mut acc = 0.0;
    for b in 0..=max_f {
        acc += energies.get(&(b as i64)).copied().unwrap_or(0.0);
        if b > 0 {
            acc += energies.get(&-(b as i64)).copied().unwrap_or(0.0);
        }
        if acc >= BANDWIDTH_ENERGY * total {
            return b;
        }
    }
    max_f
}

impl MatrixSymbol {
    pub fn from_coefficients(map: &BTreeMap<i64, CMat>, source: SymbolSource) -> Result<Self> {
        let m = map.values().next().map(|c| c.nrows()).ok_or_else(|| Error::Domain("symbol has no coefficients".into()))?;
        if map.values().any(|c| c.nrows() != m || c.ncols() != m) {
            return Err(Error::Domain("symbol coefficients must all be m×m".into()));
        }
        let order = map.keys().map(|f| f.unsigned_abs() as usize).max().unwrap_or(0);
        let mut coeffs = vec![CMat::zeros(m, m); 2 * order + 1];
        for (f, c) in map {
            coeffs[(f + order as i64) as usize] = c.clone();
        }
        let energies = map.iter().map(|(f, c)| (*f, energy(c))).collect();
        let sym = MatrixSymbol { m, order, coeffs, source, bandwidth: bandwidth_of(&energies) };
        sym.check_invertible()?;
        Ok(sym)
    }

    /// Trapezoidal Fourier transform of samples at `θⱼ = 2πj/M`. Without an
    /// explicit order, `N` is four times the empirical bandwidth, capped by
    /// the Nyquist limit.
    pub fn from_samples(values: &[CMat], order: Option<usize>, source: SymbolSource) -> Result<Self> {
        let count = values.len();
        if count == 0 {
            return Err(Error::Domain("symbol needs samples".into()));
        }
        let m = values[0].nrows();
        let half = (count as i64 - 1) / 2;
        let freqs: Vec<i64> = (-half..=half).collect();
        let all: Vec<CMat> = freqs
            .par_iter()
            .map(|&f| {
                let mut c = CMat::zeros(m, m);
                for (j, v) in values.iter().enumerate() {
                    c += v * cis(-TAU * (f * j as i64).rem_euclid(count as i64) as f64 / count as f64);
                }
                c / C64::new(count as f64, 0.0)
            })
            .collect();
        let energies: BTreeMap<i64, f64> = freqs.iter().zip(&all).map(|(&f, c)| (f, energy(c))).collect();
        let total: f64 = energies.values().sum();
        let bandwidth = bandwidth_of(&energies);
        let order = order.unwrap_or(4 * bandwidth.max(1)).min(half as usize);
        let kept: f64 = energies.iter().filter(|(f, _)| f.unsigned_abs() as usize <= order).map(|(_, e)| e).sum();
        let tail = if total > 0.0 { 1.0 - kept / total } else { 0.0 };
        if tail > MAX_TAIL {
            return Err(Error::Truncation { tail, order });
        }
        let offset = (half as usize) - order;
        let coeffs = all[offset..offset + 2 * order + 1].to_vec();
        let sym = MatrixSymbol { m, order, coeffs, source, bandwidth };
        sym.check_invertible()?;
        Ok(sym)
    }

    pub fn coefficient(&self, f: i64) -> CMat {
        if f.unsigned_abs() as usize > self.order {
            CMat::zeros(self.m, self.m)
        } else {
            self.coeffs[(f + self.order as i64) as usize].clone()
        }
    }

    pub fn eval(&self, zeta: C64) -> CMat {
        let mut acc = CMat::zeros(self.m, self.m);
        let mut power = zeta.powi(-(self.order as i32));
        for c in &self.coeffs {
            acc += c * power;
            power *= zeta;
        }
        acc
    }

    pub fn check_invertible(&self) -> Result<()> {
        for j in 0..INVERTIBILITY_GRID {
            let g = self.eval(cis(TAU * j as f64 / INVERTIBILITY_GRID as f64));
            let sv = g.singular_values();
            let (hi, lo) = (sv.max(), sv.min());
            if !(lo > 0.0) || hi / lo >= MAX_CONDITION {
                return Err(Error::SingularSymbol(format!(
                    "condition number {:.3e} at grid point {j}",
                    if lo > 0.0 { hi / lo } else { f64::INFINITY }
                )));
            }
        }
        Ok(())
    }

    /// Winding number of `det G` around the circle.
    pub fn det_winding(&self) -> Result<i64> {
        let mut count = (8 * self.order).max(INVERTIBILITY_GRID);
        loop {
            let dets: Vec<C64> = (0..count).map(|j| self.eval(cis(TAU * j as f64 / count as f64)).determinant()).collect();
            match winding_of_samples(&dets, std::f64::consts::FRAC_PI_2) {
                Ok(w) => return Ok(w.round() as i64),
                Err(e) if count > 64 * INVERTIBILITY_GRID.max(self.order) => return Err(e),
                Err(_) => count *= 4,
            }
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["frequency", "row", "col", "re", "im"])?;
        for (i, c) in self.coeffs.iter().enumerate() {
            let f = i as i64 - self.order as i64;
            for r in 0..self.m {
                for k in 0..self.m {
                    let z = c[(r, k)];
                    wr.write_record(&[f.to_string(), r.to_string(), k.to_string(), format!("{:.17e}", z.re), format!("{:.17e}", z.im)])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rows: Vec<(i64, usize, usize, C64)> = Vec::new();
        let mut rd = csv::Reader::from_reader(r);
        for rec in rd.records() {
            let rec = rec?;
            let field = |k: usize| rec.get(k).map(str::trim).ok_or_else(|| Error::Validation(format!("missing column {k}")));
            let int = |k: usize| -> Result<i64> {
                field(k)?.parse().map_err(|_| Error::Validation(format!("bad integer in column {k}")))
            };
            let real = |k: usize| -> Result<f64> {
                field(k)?.parse().map_err(|_| Error::Validation(format!("bad number in column {k}")))
            };
            let (row, col) = (int(1)?, int(2)?);
            if row < 0 || col < 0 {
                return Err(Error::Validation("negative matrix index".into()));
            }
            rows.push((int(0)?, row as usize, col as usize, C64::new(real(3)?, real(4)?)));
        }
        let m = rows.iter().map(|r| r.1.max(r.2) + 1).max().ok_or_else(|| Error::Validation("empty symbol file".into()))?;
        let mut map: BTreeMap<i64, CMat> = BTreeMap::new();
        for (f, r, k, z) in rows {
            map.entry(f).or_insert_with(|| CMat::zeros(m, m))[(r, k)] = z;
        }
        MatrixSymbol::from_coefficients(&map, SymbolSource::Explicit)
    }
}

/// `G(ζ) = Q(ζ)·Q(ζ)ᵀ` sampled on the loop, which must be equally spaced.
pub fn symbol_from_loop(lp: &GrassmannianLoop, order: Option<usize>) -> Result<MatrixSymbol> {
    let count = lp.len();
    for (j, s) in lp.samples.iter().enumerate() {
        let expected = lp.samples[0].angle + TAU * j as f64 / count as f64;
        if (s.angle - expected).abs() > 1e-9 {
            return Err(Error::SamplingDensity("symbol extraction needs equally spaced loop samples".into()));
        }
    }
    // Rotate so that sample j sits at 2πj/M.
    let shift = cis(-lp.samples[0].angle);
    let values: Vec<CMat> = lp.samples.iter().map(|s| s.plane.symbol()).collect();
    let mut sym = MatrixSymbol::from_samples(&values, order, SymbolSource::FromLoop)?;
    if lp.samples[0].angle != 0.0 {
        for (i, c) in sym.coeffs.iter_mut().enumerate() {
            let f = i as i32 - sym.order as i32;
            *c *= shift.powi(f);
        }
    }
    Ok(sym)
}

/// Kernel dimension of the Toeplitz operator of `ζ^{−s}Gᵀ` restricted to
/// vector polynomials of degree at most `degree`.
pub fn kernel_dimension(g: &MatrixSymbol, shift: i64, degree: usize) -> Result<usize> {
    let m = g.m;
    let n = g.order as i64;
    let cols = (degree + 1) * m;
    let max_row = degree as i64 + n - shift;
    if max_row < 0 {
        return Ok(cols);
    }
    let rows = (max_row as usize + 1) * m;
    let mut a = CMat::zeros(rows, cols);
    for r in 0..=max_row {
        for j in 0..=degree as i64 {
            let f = r - j + shift;
            if f.abs() > n {
                continue;
            }
            let c = &g.coeffs[(f + n) as usize];
            for ia in 0..m {
                for ib in 0..m {
                    a[(r as usize * m + ia, j as usize * m + ib)] = c[(ib, ia)];
                }
            }
        }
    }
    let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(cols);
    }
    let threshold = RANK_THRESHOLD * top;
    let rank = sv.iter().filter(|&&s| s > threshold).count();
    let smallest_kept = sv[rank - 1];
    let largest_dropped = sv.get(rank).copied().unwrap_or(0.0);
    if smallest_kept < 10.0 * threshold || (largest_dropped > 0.0 && smallest_kept < RANK_GAP * largest_dropped) {
        return Err(Error::IndeterminateRank {
            shift,
            detail: format!(
                "singular values {smallest_kept:.3e} and {largest_dropped:.3e} straddle the threshold {threshold:.3e}"
            ),
        });
    }
    Ok(cols - rank)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExistenceVerdict {
    AllAtLeastOne,
    AllAtMostMinusOne,
    Inconclusive,
}

impl std::fmt::Display for ExistenceVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExistenceVerdict::AllAtLeastOne => "AllAtLeastOne",
            ExistenceVerdict::AllAtMostMinusOne => "AllAtMostMinusOne",
            ExistenceVerdict::Inconclusive => "Inconclusive",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialIndexResult {
    /// Nonincreasing.
    pub kappas: Vec<i64>,
    pub mu: i64,
    /// Degrees of the line bundles in the splitting of the doubled bundle.
    pub doubled_degrees: Vec<i64>,
    pub griffiths_positive: bool,
    pub existence_verdict: ExistenceVerdict,
    /// `n − 3 + μ`, once the number of marked points is known.
    pub virtual_dimension: Option<i64>,
}

impl PartialIndexResult {
    pub fn from_kappas(mut kappas: Vec<i64>) -> Self {
        kappas.sort_by(|a, b| b.cmp(a));
        let mu = kappas.iter().sum();
        PartialIndexResult {
            doubled_degrees: kappas.clone(),
            griffiths_positive: griffiths_positive(&kappas),
            existence_verdict: existence_verdict(&kappas),
            kappas,
            mu,
            virtual_dimension: None,
        }
    }

    pub fn with_marked_points(mut self, n: usize) -> Self {
        self.virtual_dimension = Some(virtual_dimension(n, self.mu));
        self
    }
}

/// All partial indices strictly positive.
pub fn griffiths_positive(kappas: &[i64]) -> bool {
    kappas.iter().all(|&k| k > 0)
}

pub fn griffiths_verdict(r: &PartialIndexResult) -> bool {
    griffiths_positive(&r.kappas)
}

pub fn existence_verdict(kappas: &[i64]) -> ExistenceVerdict {
    if kappas.iter().all(|&k| k >= 1) {
        ExistenceVerdict::AllAtLeastOne
    } else if kappas.iter().all(|&k| k <= -1) {
        ExistenceVerdict::AllAtMostMinusOne
    } else {
        ExistenceVerdict::Inconclusive
    }
}

pub fn virtual_dimension(n: usize, mu: i64) -> i64 {
    n as i64 - 3 + mu
}

/// Partial indices by the Toeplitz kernel staircase. Scalar symbols are
/// read off the winding number directly.
pub fn partial_indices(g: &MatrixSymbol) -> Result<PartialIndexResult> {
    if g.m == 1 {
        return Ok(PartialIndexResult::from_kappas(vec![g.det_winding()?]));
    }
    toeplitz_partial_indices(g)
}

pub fn toeplitz_partial_indices(g: &MatrixSymbol) -> Result<PartialIndexResult> {
    let mu = g.det_winding()?;
    let m = g.m as i64;
    let base = 2 * g.bandwidth + 16;
    let limit = 2 * g.order as i64 + 2 * m + 8;

    let mut s_lo = mu.div_euclid(m);
    let mut steps = 0;
    while kernel_dimension(g, s_lo, base)? > 0 {
        s_lo -= 1;
        steps += 1;
        if steps > limit {
            return Err(Error::Consistency("kernel dimensions never vanish".into()));
        }
    }

    // d[i] = d(s_lo + i); d(s_lo) = 0.
    let mut d: Vec<usize> = vec![0];
    loop {
        let s = s_lo + d.len() as i64;
        let dim = kernel_dimension(g, s, base + (s - s_lo) as usize)?;
        let prev = *d.last().unwrap();
        if dim < prev || dim - prev > g.m {
            return Err(Error::Consistency(format!("kernel dimensions {prev} → {dim} at shift {s} are not a staircase")));
        }
        d.push(dim);
        if dim - prev == g.m {
            break;
        }
        if d.len() as i64 > limit {
            return Err(Error::Consistency("kernel dimensions never reach full growth".into()));
        }
    }

    let mut kappas = Vec::with_capacity(g.m);
    let mut below = 0usize; // #{κ ≤ t − 1}
    for t in 0..d.len() - 1 {
        let at_most = d[t + 1] - d[t];
        if at_most < below {
            return Err(Error::Consistency("kernel dimensions are not convex".into()));
        }
        for _ in 0..at_most - below {
            kappas.push(s_lo + t as i64);
        }
        below = at_most;
    }
    let result = PartialIndexResult::from_kappas(kappas);
    if result.kappas.len() != g.m || result.mu != mu {
        return Err(Error::Consistency(format!(
            "partial indices {:?} do not sum to the determinant winding {mu}",
            result.kappas
        )));
    }
    Ok(result)
}

/// Random matrix polynomial `C·(I + ζB₁ + ζ²B₂)` with `‖B₁‖ + ‖B₂‖ ≤ spread`,
/// invertible on the closed disc when `spread < 1`.
pub fn random_theta<R: Rng>(rng: &mut R, m: usize, spread: f64) -> Vec<CMat> {
    let gauss = |rng: &mut R| CMat::from_fn(m, m, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let qr = gauss(rng).qr();
    let scales: Vec<f64> = (0..m).map(|_| rng.gen_range(1.0..2.0)).collect();
    let c = qr.q() * CMat::from_fn(m, m, |i, j| if i == j { C64::new(scales[i], 0.0) } else { C64::new(0.0, 0.0) });
    let b1 = gauss(rng);
    let b2 = gauss(rng);
    let split: f64 = rng.gen_range(0.2..0.8);
    let b1 = &b1 * C64::new(spread * split / b1.norm(), 0.0);
    let b2 = &b2 * C64::new(spread * (1.0 - split) / b2.norm(), 0.0);
    vec![c.clone(), &c * b1, &c * b2]
}

fn poly_eval(coeffs: &[CMat], zeta: C64) -> CMat {
    let mut acc = CMat::zeros(coeffs[0].nrows(), coeffs[0].ncols());
    let mut power = C64::new(1.0, 0.0);
    for c in coeffs {
        acc += c * power;
        power *= zeta;
    }
    acc
}

/// Samples of `Θ(ζ)·diag(ζ^κ)·conj(Θ(ζ))⁻¹` at `count` equally spaced points.
pub fn factored_samples(theta: &[CMat], kappas: &[i64], count: usize) -> Result<Vec<CMat>> {
    let m = kappas.len();
    (0..count)
        .map(|j| {
            let zeta = cis(TAU * j as f64 / count as f64);
            let t = poly_eval(theta, zeta);
            let lam = CMat::from_fn(m, m, |a, b| if a == b { zeta.powi(kappas[a] as i32) } else { C64::new(0.0, 0.0) });
            let inv = t.map(|z| z.conj()).try_inverse().ok_or_else(|| Error::SingularSymbol("Θ is singular on the circle".into()))?;
            Ok(t * lam * inv)
        })
        .collect()
}

/// Symbol with prescribed partial indices and a random holomorphic factor.
pub fn random_symbol<R: Rng>(rng: &mut R, kappas: &[i64]) -> Result<MatrixSymbol> {
    let theta = random_theta(rng, kappas.len(), 0.3);
    MatrixSymbol::from_samples(&factored_samples(&theta, kappas, 256)?, None, SymbolSource::Explicit)
}

/// Diagonal symbol `diag(ζ^{κ₁}, …)`.
pub fn diagonal_symbol(kappas: &[i64]) -> Result<MatrixSymbol> {
    let m = kappas.len();
    let mut map: BTreeMap<i64, CMat> = BTreeMap::new();
    for (i, &k) in kappas.iter().enumerate() {
        map.entry(k).or_insert_with(|| CMat::zeros(m, m))[(i, i)] = C64::new(1.0, 0.0);
    }
    map.entry(0).or_insert_with(|| CMat::zeros(m, m));
    MatrixSymbol::from_coefficients(&map, SymbolSource::Explicit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag_phases, identity};
    use crate::loops::{phase_loop, GrassmannianLoop, LoopSample, SegmentKind};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_kappas(rng: &mut ChaCha8Rng, m: usize) -> Vec<i64> {
        (0..m).map(|_| rng.gen_range(-3..=3)).collect()
    }

    fn sorted_desc(mut k: Vec<i64>) -> Vec<i64> {
        k.sort_by(|a, b| b.cmp(a));
        k
    }

    #[test]
    fn diagonal_symbols_return_sorted_exponents() {
        let r = partial_indices(&diagonal_symbol(&[2, -1]).unwrap()).unwrap();
        assert_eq!(r.kappas, vec![2, -1]);
        assert_eq!(r.mu, 1);
        let r = partial_indices(&diagonal_symbol(&[-1, 3, 0]).unwrap()).unwrap();
        assert_eq!(r.kappas, vec![3, 0, -1]);
        let r = partial_indices(&diagonal_symbol(&[0, 0]).unwrap()).unwrap();
        assert_eq!(r.kappas, vec![0, 0]);
        assert_eq!(toeplitz_partial_indices(&diagonal_symbol(&[-2]).unwrap()).unwrap().kappas, vec![-2]);
    }

    #[test]
    fn constant_loop_gives_identity_symbol() {
        let lp = GrassmannianLoop::from_fn(32, SegmentKind::Arc(1), |_| identity(2)).unwrap();
        let g = symbol_from_loop(&lp, None).unwrap();
        for f in -(g.order as i64)..=g.order as i64 {
            let expected = if f == 0 { identity(2) } else { CMat::zeros(2, 2) };
            assert!((g.coefficient(f) - expected).norm() < 1e-12);
        }
        assert_eq!(partial_indices(&g).unwrap().kappas, vec![0, 0]);
    }

    #[test]
    fn half_turn_loop_gives_zeta() {
        let g = symbol_from_loop(&phase_loop(1, 64, &[1.0]).unwrap(), None).unwrap();
        assert!((g.coefficient(1)[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-12);
        let rest: f64 = (-(g.order as i64)..=g.order as i64).filter(|&f| f != 1).map(|f| g.coefficient(f).norm()).sum();
        assert!(rest < 1e-12);
        assert_eq!(partial_indices(&g).unwrap().kappas, vec![1]);
    }

    #[test]
    fn loop_symbol_ignores_orthogonal_gauge() {
        let lp = phase_loop(2, 64, &[2.0, -1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::<f64>::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let skew = &a - a.transpose();
        let gauged = GrassmannianLoop::new(
            lp.samples
                .iter()
                .map(|s| LoopSample { angle: s.angle, plane: s.plane.regauged(&(&skew * s.angle.cos()).exp()).unwrap(), kind: s.kind })
                .collect(),
        )
        .unwrap();
        let (g1, g2) = (symbol_from_loop(&lp, Some(8)).unwrap(), symbol_from_loop(&gauged, Some(8)).unwrap());
        for (a, b) in g1.coeffs.iter().zip(&g2.coeffs) {
            assert!((a - b).norm() < 1e-10);
        }
        assert_eq!(partial_indices(&g1).unwrap().kappas, vec![2, -1]);
    }

    #[test]
    fn random_factored_symbols_recover_their_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in 1..=3 {
            for _ in 0..3 {
                let k = random_kappas(&mut rng, m);
                let g = random_symbol(&mut rng, &k).unwrap();
                let r = toeplitz_partial_indices(&g).unwrap();
                assert_eq!(r.kappas, sorted_desc(k.clone()), "m = {m}");
                assert_eq!(r.mu, g.det_winding().unwrap());
            }
        }
    }

    #[test]
    fn conjugation_by_a_holomorphic_factor_preserves_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = vec![2, 0, -1];
        let theta = random_theta(&mut rng, 3, 0.3);
        let outer = random_theta(&mut rng, 3, 0.3);
        let inner = factored_samples(&theta, &k, 256).unwrap();
        let conj = factored_samples(&outer, &[0, 0, 0], 256).unwrap();
        // Θ'·G·conj(Θ')⁻¹ = (Θ'·Θ'ᵀ…) is built from the identity symbol Θ'·conj(Θ')⁻¹.
        let samples: Vec<CMat> = (0..256)
            .map(|j| {
                let zeta = cis(TAU * j as f64 / 256.0);
                let t = poly_eval(&outer, zeta);
                let inv = t.map(|z| z.conj()).try_inverse().unwrap();
                &t * &inner[j] * inv
            })
            .collect();
        let before = toeplitz_partial_indices(&MatrixSymbol::from_samples(&inner, None, SymbolSource::Explicit).unwrap()).unwrap();
        let after = toeplitz_partial_indices(&MatrixSymbol::from_samples(&samples, None, SymbolSource::Explicit).unwrap()).unwrap();
        assert_eq!(before.kappas, vec![2, 0, -1]);
        assert_eq!(after.kappas, before.kappas);
        let trivial = toeplitz_partial_indices(&MatrixSymbol::from_samples(&conj, None, SymbolSource::Explicit).unwrap()).unwrap();
        assert_eq!(trivial.kappas, vec![0, 0, 0]);
    }

    #[test]
    fn result_is_independent_of_the_truncation_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let samples = factored_samples(&random_theta(&mut rng, 2, 0.3), &[1, -2], 256).unwrap();
        let a = MatrixSymbol::from_samples(&samples, None, SymbolSource::Explicit).unwrap();
        let b = MatrixSymbol::from_samples(&samples, Some(a.order + 10), SymbolSource::Explicit).unwrap();
        assert_eq!(toeplitz_partial_indices(&a).unwrap(), toeplitz_partial_indices(&b).unwrap());
        assert_eq!(toeplitz_partial_indices(&a).unwrap(), toeplitz_partial_indices(&a).unwrap());
    }

    #[test]
    fn low_order_truncation_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples = factored_samples(&random_theta(&mut rng, 2, 0.6), &[1, 0], 256).unwrap();
        assert!(matches!(MatrixSymbol::from_samples(&samples, Some(1), SymbolSource::Explicit), Err(Error::Truncation { .. })));
    }

    #[test]
    fn singular_symbol_is_rejected() {
        let mut map = BTreeMap::new();
        map.insert(0, identity(2));
        let mut c = CMat::zeros(2, 2);
        c[(0, 0)] = C64::new(1.0, 0.0);
        map.insert(1, c);
        assert!(matches!(MatrixSymbol::from_coefficients(&map, SymbolSource::Explicit), Err(Error::SingularSymbol(_))));
    }

    #[test]
    fn csv_round_trip() {
        let g = MatrixSymbol::from_samples(
            &(0..64).map(|j| diag_phases(&[TAU * j as f64 / 64.0, -TAU * j as f64 / 32.0])).collect::<Vec<_>>(),
            None,
            SymbolSource::Explicit,
        )
        .unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let h = MatrixSymbol::read_csv(buf.as_slice()).unwrap();
        for f in -(g.order as i64)..=g.order as i64 {
            assert_eq!(g.coefficient(f), h.coefficient(f));
        }
        assert_eq!(partial_indices(&h).unwrap().kappas, vec![1, -2]);
    }

    #[test]
    fn verdict_examples() {
        assert!(griffiths_positive(&[2, 1]));
        assert!(!griffiths_positive(&[1, 0]));
        assert!(!griffiths_positive(&[3, -1]));
        assert_eq!(existence_verdict(&[1, 1, 2]), ExistenceVerdict::AllAtLeastOne);
        assert_eq!(existence_verdict(&[-1, -3]), ExistenceVerdict::AllAtMostMinusOne);
        assert_eq!(existence_verdict(&[1, 0]), ExistenceVerdict::Inconclusive);
        assert_eq!(virtual_dimension(3, 0), 0);
        assert_eq!(virtual_dimension(2, 1), 0);
        assert_eq!(virtual_dimension(5, -2), 0);
        let r = PartialIndexResult::from_kappas(vec![-1, 2]).with_marked_points(4);
        assert_eq!((r.kappas.clone(), r.mu, r.virtual_dimension), (vec![2, -1], 1, Some(2)));
        assert_eq!(r.doubled_degrees.iter().sum::<i64>(), r.mu);
    }
}
