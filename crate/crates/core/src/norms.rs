//! Mixed Lebesgue norms, Besov and Schatten norms, finite-rank density
//! matrices and their spatial densities, the periodized power-law potential,
//! trace pairings, and the rank-reduced singular values of sandwiched
//! extension operators.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::extension::{free_propagate, ExtensionOperator};
use crate::spectral::{
    apply_multiplier_coeffs, apply_multiplier_grid, pairwise_sum, pairwise_sum_f64,
    spacetime_coefficients, synthesize_space, CoefficientVector, FrequencyLattice, GridFunction,
    MultiplierSymbol, TorusGrid,
};

const TAU: f64 = std::f64::consts::TAU;

// ---------------------------------------------------------------------------
// Mixed Lebesgue norms

/// Exponent pair for `L^p_t L^q_x` with an optional half-open time window
/// `[start, start + length)` on the time torus; the default window is the
/// whole circle. The window integral keeps the global `dt` weight, so a
/// window of length `1/2` halves the `p = 1` norm of a constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedNormSpec {
    p: f64,
    q: f64,
    start: f64,
    length: f64,
}

impl MixedNormSpec {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        MixedNormSpec::with_window(p, q, 0.0, 1.0)
    }

    pub fn with_window(p: f64, q: f64, start: f64, length: f64) -> Result<Self> {
        if !(p >= 1.0) || !(q >= 1.0) {
            return Err(Error::InvalidParameter(
                "mixed-norm exponents must satisfy p, q >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&start) || !(length > 0.0 && length <= 1.0) {
            return Err(Error::InvalidParameter(
                "window needs start in [0,1) and length in (0,1]".into(),
            ));
        }
        Ok(MixedNormSpec { p, q, start, length })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn contains(&self, t: f64) -> bool {
        (t - self.start).rem_euclid(1.0) < self.length
    }
}

/// Space `L^q` norm of one time slice under unit measure.
fn slice_lq(vals: &[Complex64], q: f64) -> f64 {
    if q.is_infinite() {
        vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    } else {
        let powers: Vec<f64> = vals.iter().map(|v| v.norm().powf(q)).collect();
        (pairwise_sum_f64(&powers) / vals.len() as f64).powf(1.0 / q)
    }
}

/// Discrete `( int_window ( int |F|^q dx )^{p/q} dt )^{1/p}` with the grid
/// maximum at infinite exponents.
pub fn mixed_norm(f: &GridFunction, spec: &MixedNormSpec) -> Result<f64> {
    let grid = f.grid();
    let sc = grid.space_cells();
    let selected: Vec<usize> = (0..grid.gt())
        .filter(|&k| spec.contains(grid.time_at(k)))
        .collect();
    if selected.is_empty() {
        return Err(Error::InvalidParameter(
            "time window contains no grid slice".into(),
        ));
    }
    let slice_norms: Vec<f64> = selected
        .par_iter()
        .map(|&k| slice_lq(&f.values()[k * sc..(k + 1) * sc], spec.q))
        .collect();
    if spec.p.is_infinite() {
        Ok(slice_norms.into_iter().fold(0.0, f64::max))
    } else {
        let powers: Vec<f64> = slice_norms.iter().map(|s| s.powf(spec.p)).collect();
        Ok((pairwise_sum_f64(&powers) / grid.gt() as f64).powf(1.0 / spec.p))
    }
}

// ---------------------------------------------------------------------------
// Besov norms

/// One Besov evaluation: the norm, the block index achieving it (ties go to
/// the smaller index), and all block values `2^{ks} ||P_k f||_{L^p}`.
#[derive(Debug, Clone)]
pub struct BesovReport {
    pub norm: f64,
    pub argmax_k: u32,
    pub blocks: Vec<f64>,
}

/// `max_{0 <= k <= kmax} 2^{ks} ||P_k f||_{L^p}` on a space grid. `kmax`
/// defaults to the largest block the grid resolves without aliasing
/// (`2^{kmax+2} < Gx`).
pub fn besov_norm(f: &GridFunction, s: f64, p: f64, kmax: Option<u32>) -> Result<BesovReport> {
    let grid = f.grid();
    if grid.gt() != 1 {
        return Err(Error::InvalidParameter(
            "Besov norm expects a space-only grid".into(),
        ));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter("exponent must satisfy p >= 1".into()));
    }
    let kmax = match kmax {
        Some(k) => k,
        None => {
            let mut k = 0u32;
            while (1usize << (k + 3)) < grid.gx() {
                k += 1;
            }
            if (1usize << 2) >= grid.gx() {
                return Err(Error::UnderResolved(
                    "grid cannot hold even the lowest dyadic block".into(),
                ));
            }
            k
        }
    };
    if (1u64 << (kmax + 2)) >= grid.gx() as u64 {
        return Err(Error::UnderResolved(format!(
            "block {} needs Gx > {}",
            kmax,
            1u64 << (kmax + 2)
        )));
    }
    let mut blocks = Vec::with_capacity(kmax as usize + 1);
    for k in 0..=kmax {
        let pk = apply_multiplier_grid(MultiplierSymbol::dyadic(k), f)?;
        blocks.push(2f64.powf(k as f64 * s) * slice_lq(pk.values(), p));
    }
    let mut norm = 0.0;
    let mut argmax_k = 0u32;
    for (k, &b) in blocks.iter().enumerate() {
        if b > norm {
            norm = b;
            argmax_k = k as u32;
        }
    }
    Ok(BesovReport { norm, argmax_k, blocks })
}

// ---------------------------------------------------------------------------
// Periodized power potential

const GL8_X: [f64; 4] = [
    0.1834346424956498,
    0.525532409916329,
    0.7966664774136267,
    0.9602898564975362,
];
const GL8_W: [f64; 4] = [
    0.362683783378362,
    0.31370664587788729,
    0.22238103445337447,
    0.10122853629037626,
];

fn gl8_real(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..4 {
        acc += GL8_W[i] * (f(mid + half * GL8_X[i]) + f(mid - half * GL8_X[i]));
    }
    acc * half
}

fn gl8_complex(f: impl Fn(f64) -> Complex64, a: f64, b: f64) -> Complex64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = Complex64::default();
    for i in 0..4 {
        acc += (f(mid + half * GL8_X[i]) + f(mid - half * GL8_X[i])) * GL8_W[i];
    }
    acc * half
}

/// Composite quadrature with enough panels to resolve `cycles` oscillations.
fn oscillatory_real(f: &impl Fn(f64) -> f64, a: f64, b: f64, cycles: f64) -> f64 {
    let panels = 1.max((3.0 * cycles).ceil() as usize);
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for i in 0..panels {
        acc += gl8_real(f, a + i as f64 * h, a + (i + 1) as f64 * h);
    }
    acc
}

fn oscillatory_complex(f: &impl Fn(f64) -> Complex64, a: f64, b: f64, cycles: f64) -> Complex64 {
    let panels = 1.max((3.0 * cycles).ceil() as usize);
    let h = (b - a) / panels as f64;
    let mut acc = Complex64::default();
    for i in 0..panels {
        acc += gl8_complex(f, a + i as f64 * h, a + (i + 1) as f64 * h);
    }
    acc
}

const RADIAL_CELLS: usize = 512;
const R_MIN: f64 = 1e-12;

fn wa_coefficient_1d(a: f64, n: i64) -> f64 {
    let n = n.unsigned_abs() as f64;
    // even integrand: w_hat(n) = 2 int_0^{1/2} x^{-a} cos(2 pi n x) dx
    let f = |x: f64| 2.0 * x.powf(-a) * (TAU * n * x).cos();
    // analytic core where cos == 1 to machine precision
    let mut acc = 2.0 * R_MIN.powf(1.0 - a) / (1.0 - a);
    // geometric grading from the singularity out to 1/4
    let ratio = (0.25 / R_MIN).powf(1.0 / RADIAL_CELLS as f64);
    let mut lo = R_MIN;
    for _ in 0..RADIAL_CELLS {
        let hi = (lo * ratio).min(0.25);
        acc += oscillatory_real(&f, lo, hi, n * (hi - lo));
        lo = hi;
    }
    // smooth outer shell
    acc + oscillatory_real(&f, 0.25, 0.5, (n * 0.25).max(4.0))
}

fn wa_coefficient_2d(a: f64, n: &[i64]) -> f64 {
    let (n1, n2) = (n[0] as f64, n[1] as f64);
    let nn = (n1 * n1 + n2 * n2).sqrt();
    // angular average over the circle of radius r; trapezoid is spectrally
    // accurate for this periodic analytic integrand
    let m_theta = 64.max(6 * (nn.ceil() as usize + 1));
    let angular = |r: f64| -> f64 {
        let mut acc = 0.0;
        for j in 0..m_theta {
            let th = TAU * j as f64 / m_theta as f64;
            acc += (TAU * r * (n1 * th.cos() + n2 * th.sin())).cos();
        }
        acc * TAU / m_theta as f64
    };
    // ball of radius 1/4 in polar coordinates
    let radial = |r: f64| r.powf(1.0 - a) * angular(r);
    let mut acc = TAU * R_MIN.powf(2.0 - a) / (2.0 - a);
    let ratio = (0.25 / R_MIN).powf(1.0 / RADIAL_CELLS as f64);
    let mut lo = R_MIN;
    for _ in 0..RADIAL_CELLS {
        let hi = (lo * ratio).min(0.25);
        acc += oscillatory_real(&radial, lo, hi, nn * (hi - lo));
        lo = hi;
    }
    // remainder of the square: eight wedges on which the outer radius
    // R(theta) = 1/(2 max(|cos|,|sin|)) is smooth
    let quarter_pi = std::f64::consts::FRAC_PI_4;
    let mut annulus = Complex64::default();
    for wedge in 0..8 {
        let th0 = quarter_pi * wedge as f64;
        let th1 = quarter_pi * (wedge + 1) as f64;
        let slice = |th: f64| -> Complex64 {
            let r_out = 0.5 / th.cos().abs().max(th.sin().abs());
            let dir = n1 * th.cos() + n2 * th.sin();
            let g = |r: f64| Complex64::from_polar(r.powf(1.0 - a), -TAU * r * dir);
            oscillatory_complex(&g, 0.25, r_out, nn * (r_out - 0.25))
        };
        annulus += oscillatory_complex(&slice, th0, th1, nn * 0.125 + 1.0);
    }
    acc + annulus.re
}

/// Fourier coefficient of the periodization of `|x|^{-a}` at `mode`,
/// i.e. the single-cell integral over `[-1/2,1/2]^d` of `|x|^{-a}
/// e^{-2 pi i n.x}`; real and even in `n`. Supports `d <= 2`.
pub fn power_potential_coefficient(a: f64, mode: &[i64]) -> Result<f64> {
    let d = mode.len();
    if d == 0 || d > 2 {
        return Err(Error::InvalidParameter(
            "power potential implemented for d in {1, 2}".into(),
        ));
    }
    if !(a > 0.0 && a < d as f64) {
        return Err(Error::InvalidParameter(format!(
            "power must lie in (0, {d}), got {a}"
        )));
    }
    Ok(match d {
        1 => wa_coefficient_1d(a, mode[0]),
        _ => wa_coefficient_2d(a, mode),
    })
}

/// All coefficients of the periodized potential on a lattice, cached over
/// the symmetry classes (the coefficient depends only on the multiset of
/// coordinate magnitudes).
pub fn periodized_power_potential(a: f64, lattice: &FrequencyLattice) -> Result<CoefficientVector> {
    let mut cache: HashMap<Vec<i64>, f64> = HashMap::new();
    let mut coeffs = Vec::with_capacity(lattice.len());
    for mode in lattice.iter_modes() {
        let mut key: Vec<i64> = mode.iter().map(|c| c.abs()).collect();
        key.sort_unstable();
        let val = match cache.get(&key) {
            Some(&v) => v,
            None => {
                let v = power_potential_coefficient(a, &key)?;
                cache.insert(key, v);
                v
            }
        };
        coeffs.push(Complex64::new(val, 0.0));
    }
    CoefficientVector::new(lattice.clone(), coeffs)
}

// ---------------------------------------------------------------------------
// Density matrices

/// Finite-rank self-adjoint operator `sum_j w_j |f_j><f_j|` with real
/// weights and orbitals sharing one lattice.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    weights: Vec<f64>,
    orbitals: Vec<CoefficientVector>,
    orthonormal: bool,
}

impl DensityMatrix {
    /// With `orthonormal` set, the orbital Gram matrix must equal the
    /// identity to `1e-10` in the entrywise maximum.
    pub fn new(
        weights: Vec<f64>,
        orbitals: Vec<CoefficientVector>,
        orthonormal: bool,
    ) -> Result<Self> {
        if orbitals.is_empty() || weights.len() != orbitals.len() {
            return Err(Error::DimensionMismatch(
                "need one weight per orbital, at least one orbital".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("weights must be finite".into()));
        }
        let lat = orbitals[0].lattice().clone();
        if orbitals.iter().any(|f| f.lattice() != &lat) {
            return Err(Error::DimensionMismatch(
                "orbitals indexed by different lattices".into(),
            ));
        }
        let dm = DensityMatrix {
            weights,
            orbitals,
            orthonormal,
        };
        if orthonormal {
            let dev = dm.gram_deviation();
            if dev > 1e-10 {
                return Err(Error::InvalidParameter(format!(
                    "orbitals claimed orthonormal but Gram deviates by {dev:.2e}"
                )));
            }
        }
        Ok(dm)
    }

    pub fn rank(&self) -> usize {
        self.orbitals.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn orbitals(&self) -> &[CoefficientVector] {
        &self.orbitals
    }

    pub fn lattice(&self) -> &FrequencyLattice {
        self.orbitals[0].lattice()
    }

    pub fn orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// `sum_j w_j` (the trace when the orbitals are orthonormal).
    pub fn trace(&self) -> f64 {
        pairwise_sum_f64(&self.weights)
    }

    /// `max_{i,j} |<f_i, f_j> - delta_ij|`.
    pub fn gram_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.orbitals.len() {
            for j in i..self.orbitals.len() {
                let g = self.orbitals[i].inner(&self.orbitals[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((g - Complex64::new(target, 0.0)).norm());
            }
        }
        dev
    }
}

/// `rho(x) = sum_j w_j |f_j(x)|^2` on a space grid, with the orbitals
/// freely propagated to time `t` first when given. Real-valued.
pub fn density(gamma: &DensityMatrix, grid: TorusGrid, t: Option<f64>) -> Result<GridFunction> {
    if grid.gt() != 1 {
        return Err(Error::InvalidParameter(
            "density expects a space-only grid; see density_spacetime".into(),
        ));
    }
    let mut acc = vec![0.0f64; grid.cells()];
    for (w, f) in gamma.weights.iter().zip(&gamma.orbitals) {
        let moved = match t {
            Some(tau) => free_propagate(f, tau),
            None => f.clone(),
        };
        let g = synthesize_space(&moved, grid)?;
        for (slot, v) in acc.iter_mut().zip(g.values()) {
            *slot += w * v.norm_sqr();
        }
    }
    GridFunction::from_values(grid, acc.into_iter().map(|r| Complex64::new(r, 0.0)).collect())
}

/// `rho(x, t) = sum_j w_j |(E f_j)(x, t)|^2` on the operator's grid.
pub fn density_spacetime(gamma: &DensityMatrix, op: &ExtensionOperator) -> Result<GridFunction> {
    if gamma.lattice() != op.lattice() {
        return Err(Error::DimensionMismatch(
            "density matrix and operator use different lattices".into(),
        ));
    }
    let mut acc = vec![0.0f64; op.grid().cells()];
    for (w, f) in gamma.weights.iter().zip(&gamma.orbitals) {
        let ext = op.extend(f)?;
        for (slot, v) in acc.iter_mut().zip(ext.values()) {
            *slot += w * v.norm_sqr();
        }
    }
    GridFunction::from_values(
        op.grid(),
        acc.into_iter().map(|r| Complex64::new(r, 0.0)).collect(),
    )
}

// ---------------------------------------------------------------------------
// Trace pairing

/// Both sides of the duality between the time-integrated density pairing
/// and the trace against the induced potential operator.
#[derive(Debug, Clone, Copy)]
pub struct TracePairing {
    /// `int rho_{gamma(t)}(x) V(x,t) dx dt` with
    /// `gamma(t) = e^{itD} <D>^{-s} gamma_0 <D>^{-s} e^{-itD}`.
    pub left: Complex64,
    /// `Tr( gamma_0 int e^{-itD} <D>^{-s} V(t) <D>^{-s} e^{itD} dt )`.
    pub right: Complex64,
    pub difference: Complex64,
}

/// Evaluates both sides on the grid carrying `v`. The two routes rearrange
/// the same quadrature sum, so the difference is pure roundoff whenever the
/// grid satisfies the extension resolution requirements.
pub fn trace_pairing(gamma: &DensityMatrix, v: &GridFunction, s: f64) -> Result<TracePairing> {
    let op = ExtensionOperator::new(gamma.lattice().clone(), v.grid())?;
    let lower = MultiplierSymbol::bessel(-s)?;
    let dressed: Vec<CoefficientVector> = gamma
        .orbitals
        .iter()
        .map(|f| apply_multiplier_coeffs(lower, f))
        .collect();
    let smoothed = DensityMatrix::new(gamma.weights.clone(), dressed.clone(), false)?;

    let rho = density_spacetime(&smoothed, &op)?;
    let prods: Vec<Complex64> = rho
        .values()
        .iter()
        .zip(v.values())
        .map(|(r, z)| r * z)
        .collect();
    let left = pairwise_sum(&prods) / v.grid().cells() as f64;

    let vhat = spacetime_coefficients(v);
    let lat = gamma.lattice();
    let grid = v.grid();
    let mut terms = Vec::with_capacity(gamma.rank() * lat.len() * lat.len());
    let mut diff = vec![0i64; lat.d()];
    for (w, g) in gamma.weights.iter().zip(&dressed) {
        for i in 0..lat.len() {
            for j in 0..lat.len() {
                for (slot, (a, b)) in diff.iter_mut().zip(lat.mode(i).iter().zip(lat.mode(j))) {
                    *slot = a - b;
                }
                let dt = lat.norm_sq(i) - lat.norm_sq(j);
                let vk = vhat[grid.bin(&diff, dt)];
                terms.push(g.coeffs()[i].conj() * vk * g.coeffs()[j] * *w);
            }
        }
    }
    let right = pairwise_sum(&terms);
    Ok(TracePairing {
        left,
        right,
        difference: left - right,
    })
}

// ---------------------------------------------------------------------------
// Schatten norms

/// Schatten exponent `alpha in [1, inf]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchattenSpec {
    alpha: f64,
}

impl SchattenSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 1.0) {
            return Err(Error::InvalidParameter(
                "Schatten exponent must satisfy alpha >= 1".into(),
            ));
        }
        Ok(SchattenSpec { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Dual exponent: `1/alpha + 1/alpha' = 1`.
    pub fn conjugate(&self) -> SchattenSpec {
        if self.alpha.is_infinite() {
            SchattenSpec { alpha: 1.0 }
        } else if self.alpha == 1.0 {
            SchattenSpec { alpha: f64::INFINITY }
        } else {
            SchattenSpec {
                alpha: self.alpha / (self.alpha - 1.0),
            }
        }
    }
}

/// `(sum_i sv_i^alpha)^{1/alpha}`, the largest value at `alpha = inf`.
pub fn schatten_norm(sv: &[f64], spec: SchattenSpec) -> Result<f64> {
    if sv.iter().any(|&s| s < 0.0 || !s.is_finite()) {
        return Err(Error::InvalidParameter(
            "singular values must be finite and nonnegative".into(),
        ));
    }
    if spec.alpha.is_infinite() {
        Ok(sv.iter().copied().fold(0.0, f64::max))
    } else {
        let powers: Vec<f64> = sv.iter().map(|s| s.powf(spec.alpha)).collect();
        Ok(pairwise_sum_f64(&powers).powf(1.0 / spec.alpha))
    }
}

// ---------------------------------------------------------------------------
// Sandwiched extension operator

pub(crate) fn hermitize(m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let adj = m.adjoint();
    (m + adj) * Complex64::new(0.5, 0.0)
}

pub(crate) fn hermitian_eigen(
    m: DMatrix<Complex64>,
) -> Result<(DVector<f64>, DMatrix<Complex64>)> {
    let eig = m
        .try_symmetric_eigen(1e-13, 10_000)
        .ok_or_else(|| Error::EigenFailure("Hermitian eigensolver stalled".into()))?;
    Ok((eig.eigenvalues, eig.eigenvectors))
}

/// Square root of a PSD Hermitian matrix; eigenvalues below
/// `max(eig) * 1e-14` are treated as exact zeros so roundoff-negative
/// values cannot poison the root.
pub(crate) fn psd_sqrt(m: DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let (vals, q) = hermitian_eigen(m)?;
    let top = vals.iter().copied().fold(0.0, f64::max);
    let floor = top * 1e-14;
    let roots = DVector::from_iterator(
        vals.len(),
        vals.iter()
            .map(|&l| Complex64::new(if l <= floor { 0.0 } else { l.sqrt() }, 0.0)),
    );
    Ok(&q * DMatrix::from_diagonal(&roots) * q.adjoint())
}

/// Mode-space Gram `M[n, m] = <E e_n, |W|^2 E e_m>`, read off the
/// space-time coefficients of `|W|^2` at `(n - m, |n|^2 - |m|^2)`.
pub fn mode_gram(op: &ExtensionOperator, w: &GridFunction) -> Result<DMatrix<Complex64>> {
    if w.grid() != op.grid() {
        return Err(Error::DimensionMismatch(
            "weight lives on a different grid".into(),
        ));
    }
    let psi_hat = spacetime_coefficients(&w.abs_squared());
    let lat = op.lattice();
    let grid = op.grid();
    let len = lat.len();
    let mut diff = vec![0i64; lat.d()];
    let m = DMatrix::from_fn(len, len, |i, j| {
        for (slot, (a, b)) in diff.iter_mut().zip(lat.mode(i).iter().zip(lat.mode(j))) {
            *slot = a - b;
        }
        psi_hat[grid.bin(&diff, lat.norm_sq(i) - lat.norm_sq(j))]
    });
    Ok(hermitize(m))
}

/// Singular values of `F -> W1 . (E E*) (W2 . F)` on the grid, computed in
/// the `(2N+1)^d`-dimensional mode space: with `M_i = E* |W_i|^2 E`, the
/// squared singular values are the eigenvalues of `M1^{1/2} M2 M1^{1/2}`.
/// Returns `(2N+1)^d` values sorted descending (zeros included).
pub fn sandwich_singular_values(
    w1: &GridFunction,
    w2: &GridFunction,
    op: &ExtensionOperator,
) -> Result<Vec<f64>> {
    let m1 = mode_gram(op, w1)?;
    let m2 = mode_gram(op, w2)?;
    let s1 = psd_sqrt(m1)?;
    let core = hermitize(&s1 * m2 * &s1);
    let (vals, _) = hermitian_eigen(core)?;
    let mut sv: Vec<f64> = vals.iter().map(|&l| l.max(0.0).sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    Ok(sv)
}

/// Schatten norm of `<D>^s gamma <D>^s` for a finite-rank `gamma`: the
/// nonzero eigenvalues are those of `G^{1/2} diag(w) G^{1/2}` with `G` the
/// Gram matrix of the dressed orbitals.
pub fn sobolev_schatten_norm(
    gamma: &DensityMatrix,
    s: f64,
    spec: SchattenSpec,
) -> Result<f64> {
    let up = MultiplierSymbol::bessel(s)?;
    let dressed: Vec<CoefficientVector> = gamma
        .orbitals
        .iter()
        .map(|f| apply_multiplier_coeffs(up, f))
        .collect();
    let r = dressed.len();
    let gram = hermitize(DMatrix::from_fn(r, r, |i, j| dressed[i].inner(&dressed[j])));
    let root = psd_sqrt(gram)?;
    let lam = DMatrix::from_diagonal(&DVector::from_iterator(
        r,
        gamma.weights.iter().map(|&w| Complex64::new(w, 0.0)),
    ));
    let core = hermitize(&root * lam * &root);
    let (vals, _) = hermitian_eigen(core)?;
    let sv: Vec<f64> = vals.iter().map(|l| l.abs()).collect();
    schatten_norm(&sv, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_lattice, quadrature_integral};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_grid_fn(grid: TorusGrid, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = (0..grid.cells())
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        GridFunction::from_values(grid, vals).unwrap()
    }

    fn random_coeffs(lat: &FrequencyLattice, rng: &mut ChaCha8Rng) -> CoefficientVector {
        let a = (0..lat.len())
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        CoefficientVector::new(lat.clone(), a).unwrap()
    }

    #[test]
    fn mixed_norm_of_constant_is_modulus() {
        let grid = TorusGrid::new(1, 6, 8).unwrap();
        let f = GridFunction::constant(grid, c(-3.0, 4.0));
        for (p, q) in [
            (1.0, 1.0),
            (4.0, 2.0),
            (3.0, 3.0),
            (f64::INFINITY, 2.0),
            (2.0, f64::INFINITY),
            (f64::INFINITY, f64::INFINITY),
        ] {
            let spec = MixedNormSpec::new(p, q).unwrap();
            assert!((mixed_norm(&f, &spec).unwrap() - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_norm_diagonal_matches_single_sum() {
        let grid = TorusGrid::new(1, 7, 5).unwrap();
        let f = random_grid_fn(grid, 9);
        for p in [1.0, 2.0, 3.5] {
            let spec = MixedNormSpec::new(p, p).unwrap();
            let via_mixed = mixed_norm(&f, &spec).unwrap();
            let direct = (f
                .values()
                .iter()
                .map(|v| v.norm().powf(p))
                .sum::<f64>()
                / grid.cells() as f64)
                .powf(1.0 / p);
            assert!((via_mixed - direct).abs() <= 1e-12 * (1.0 + direct));
        }
    }

    #[test]
    fn mixed_norm_window_scales_constant() {
        let grid = TorusGrid::new(1, 4, 10).unwrap();
        let f = GridFunction::constant(grid, c(2.0, 0.0));
        let spec = MixedNormSpec::with_window(1.0, 3.0, 0.0, 0.5).unwrap();
        // five of ten slices, each weighted 1/10
        assert!((mixed_norm(&f, &spec).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn mixed_norm_wrapping_window() {
        let grid = TorusGrid::new(1, 4, 10).unwrap();
        let mut vals = vec![c(0.0, 0.0); grid.cells()];
        // put mass only on the slice at t = 0.9
        for v in &mut vals[9 * 4..] {
            *v = c(1.0, 0.0);
        }
        let f = GridFunction::from_values(grid, vals).unwrap();
        let spec = MixedNormSpec::with_window(1.0, 1.0, 0.85, 0.3).unwrap();
        assert!((mixed_norm(&f, &spec).unwrap() - 0.1).abs() < 1e-13);
    }

    #[test]
    fn mixed_norm_rejects_bad_exponents() {
        assert!(MixedNormSpec::new(0.5, 2.0).is_err());
        assert!(MixedNormSpec::new(2.0, 0.0).is_err());
        assert!(MixedNormSpec::with_window(2.0, 2.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn besov_single_mode_hits_one_block() {
        let grid = TorusGrid::space_only(1, 80).unwrap();
        let k0 = 3u32;
        let n0 = 1i64 << k0;
        let f = GridFunction::from_fn(grid, |x, _| Complex64::from_polar(1.0, TAU * n0 as f64 * x[0]));
        let s = 0.7;
        let rep = besov_norm(&f, s, 2.0, Some(4)).unwrap();
        assert_eq!(rep.argmax_k, k0);
        assert!((rep.norm - 2f64.powf(k0 as f64 * s)).abs() < 1e-10);
        for (k, &b) in rep.blocks.iter().enumerate() {
            if k as u32 != k0 {
                assert!(b < 1e-12);
            }
        }
    }

    #[test]
    fn besov_zero_function() {
        let grid = TorusGrid::space_only(1, 64).unwrap();
        let f = GridFunction::constant(grid, c(0.0, 0.0));
        let rep = besov_norm(&f, 1.0, 2.0, None).unwrap();
        assert_eq!(rep.norm, 0.0);
        assert_eq!(rep.argmax_k, 0);
    }

    #[test]
    fn besov_rejects_under_resolved() {
        let grid = TorusGrid::space_only(1, 16).unwrap();
        let f = GridFunction::constant(grid, c(1.0, 0.0));
        assert!(besov_norm(&f, 0.0, 2.0, Some(3)).is_err());
    }

    #[test]
    fn power_potential_zero_mode_closed_form_1d() {
        // int_{-1/2}^{1/2} |x|^{-a} dx = 2 (1/2)^{1-a} / (1-a)
        for a in [0.3, 0.5, 0.8] {
            let got = power_potential_coefficient(a, &[0]).unwrap();
            let want = 2.0 * 0.5f64.powf(1.0 - a) / (1.0 - a);
            assert!(
                (got - want).abs() <= 1e-10 * want,
                "a = {a}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn power_potential_matches_substitution_oracle_1d() {
        // x = u^{1/(1-a)} turns int_0^{1/2} x^{-a} cos(2 pi n x) dx into a
        // smooth integral handled by plain Simpson
        let a = 0.5;
        for n in [1i64, 3, 8, 16] {
            let got = power_potential_coefficient(a, &[n]).unwrap();
            let beta = 1.0 / (1.0 - a);
            let upper = 0.5f64.powf(1.0 - a);
            let m = 40_000usize;
            let h = upper / m as f64;
            let g = |u: f64| beta * (TAU * n as f64 * u.powf(beta)).cos();
            let mut acc = g(0.0) + g(upper);
            for i in 1..m {
                acc += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let want = 2.0 * acc * h / 3.0;
            assert!(
                (got - want).abs() <= 1e-8 * (1.0 + want.abs()),
                "n = {n}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn power_potential_positive_decreasing_1d() {
        let lat = build_lattice(1, 16).unwrap();
        let w = periodized_power_potential(0.5, &lat).unwrap();
        for n in 0..=16i64 {
            let v = w.coeffs()[lat.index_of(&[n]).unwrap()].re;
            let v_neg = w.coeffs()[lat.index_of(&[-n]).unwrap()];
            assert!(v > 0.0);
            assert!((v_neg.re - v).abs() < 1e-12 && v_neg.im == 0.0);
            if n > 0 {
                let prev = w.coeffs()[lat.index_of(&[n - 1]).unwrap()].re;
                assert!(v < prev, "not decreasing at n = {n}");
            }
        }
    }

    #[test]
    fn power_potential_zero_mode_oracle_2d() {
        // polar closed form: 8/(2-a) int_0^{pi/4} (2 cos t)^{a-2} dt
        for a in [0.7, 1.3] {
            let got = power_potential_coefficient(a, &[0, 0]).unwrap();
            let m = 20_000usize;
            let h = std::f64::consts::FRAC_PI_4 / m as f64;
            let g = |t: f64| (2.0 * t.cos()).powf(a - 2.0);
            let mut acc = g(0.0) + g(std::f64::consts::FRAC_PI_4);
            for i in 1..m {
                acc += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let want = 8.0 / (2.0 - a) * acc * h / 3.0;
            assert!(
                (got - want).abs() <= 1e-8 * want,
                "a = {a}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn power_potential_symmetry_2d() {
        let a = 0.9;
        let base = power_potential_coefficient(a, &[2, 1]).unwrap();
        for mode in [[1i64, 2], [-2, 1], [2, -1], [-1, -2]] {
            let v = power_potential_coefficient(a, &mode).unwrap();
            assert!((v - base).abs() <= 1e-10 * (1.0 + base.abs()));
        }
    }

    #[test]
    fn power_potential_rejects_out_of_range() {
        assert!(power_potential_coefficient(0.0, &[0]).is_err());
        assert!(power_potential_coefficient(1.0, &[0]).is_err());
        assert!(power_potential_coefficient(2.0, &[0, 0]).is_err());
        assert!(power_potential_coefficient(0.5, &[0, 0, 0]).is_err());
    }

    fn orthonormal_pair(lat: &FrequencyLattice) -> Vec<CoefficientVector> {
        let i0 = lat.index_of(&vec![0; lat.d()]).unwrap();
        let mut e1 = vec![0i64; lat.d()];
        e1[lat.d() - 1] = 1;
        let i1 = lat.index_of(&e1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut u = CoefficientVector::zeros(lat.clone());
        u.coeffs_mut()[i0] = c(s, 0.0);
        u.coeffs_mut()[i1] = c(s, 0.0);
        let mut v = CoefficientVector::zeros(lat.clone());
        v.coeffs_mut()[i0] = c(s, 0.0);
        v.coeffs_mut()[i1] = c(-s, 0.0);
        vec![u, v]
    }

    #[test]
    fn density_of_zero_mode_is_one() {
        let lat = build_lattice(1, 2).unwrap();
        let f = CoefficientVector::basis(lat.clone(), lat.index_of(&[0]).unwrap());
        let gamma = DensityMatrix::new(vec![1.0], vec![f], true).unwrap();
        let grid = TorusGrid::space_only(1, 8).unwrap();
        let rho = density(&gamma, grid, None).unwrap();
        for v in rho.values() {
            assert!((v - c(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn density_trace_identity_and_positivity() {
        let lat = build_lattice(1, 3).unwrap();
        let orbs = orthonormal_pair(&lat);
        let gamma = DensityMatrix::new(vec![0.7, 0.3], orbs, true).unwrap();
        let grid = TorusGrid::space_only(1, 16).unwrap();
        for t in [None, Some(0.37)] {
            let rho = density(&gamma, grid, t).unwrap();
            let total = quadrature_integral(&rho);
            assert!((total.re - gamma.trace()).abs() < 1e-12 && total.im.abs() < 1e-14);
            for v in rho.values() {
                assert!(v.re >= -1e-12);
            }
        }
    }

    #[test]
    fn density_matrix_rejects_false_orthonormal_claim() {
        let lat = build_lattice(1, 2).unwrap();
        let f = CoefficientVector::basis(lat.clone(), 0);
        let g = f.clone();
        assert!(DensityMatrix::new(vec![1.0, 1.0], vec![f, g], true).is_err());
    }

    #[test]
    fn trace_pairing_constant_potential() {
        let lat = build_lattice(1, 2).unwrap();
        let orbs = orthonormal_pair(&lat);
        let gamma = DensityMatrix::new(vec![0.4, 0.6], orbs, true).unwrap();
        let grid = TorusGrid::conforming(1, 2).unwrap();
        let v = GridFunction::constant(grid, c(1.0, 0.0));
        let pairing = trace_pairing(&gamma, &v, 0.0).unwrap();
        assert!((pairing.left - c(1.0, 0.0)).norm() < 1e-12);
        assert!((pairing.right - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn trace_pairing_zero_operator() {
        let lat = build_lattice(1, 2).unwrap();
        let f = CoefficientVector::basis(lat.clone(), 0);
        let gamma = DensityMatrix::new(vec![0.0], vec![f], false).unwrap();
        let grid = TorusGrid::conforming(1, 2).unwrap();
        let v = random_grid_fn(grid, 5);
        let pairing = trace_pairing(&gamma, &v, 1.0).unwrap();
        assert!(pairing.left.norm() < 1e-14 && pairing.right.norm() < 1e-14);
    }

    #[test]
    fn trace_pairing_two_routes_agree() {
        let lat = build_lattice(1, 4).unwrap();
        let grid = TorusGrid::conforming(1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let orbs: Vec<CoefficientVector> =
                (0..3).map(|_| random_coeffs(&lat, &mut rng)).collect();
            let weights = vec![
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
            ];
            let gamma = DensityMatrix::new(weights, orbs, false).unwrap();
            let v = random_grid_fn(grid, rng.gen());
            let pairing = trace_pairing(&gamma, &v, 1.0).unwrap();
            assert!(
                pairing.difference.norm() <= 1e-10 * (1.0 + pairing.left.norm()),
                "residual {}",
                pairing.difference.norm()
            );
        }
    }

    #[test]
    fn schatten_small_examples() {
        let sv = [3.0, 4.0];
        assert!((schatten_norm(&sv, SchattenSpec::new(2.0).unwrap()).unwrap() - 5.0).abs() < 1e-14);
        assert!((schatten_norm(&sv, SchattenSpec::new(1.0).unwrap()).unwrap() - 7.0).abs() < 1e-14);
        let inf = SchattenSpec::new(f64::INFINITY).unwrap();
        assert!((schatten_norm(&sv, inf).unwrap() - 4.0).abs() < 1e-15);
        assert!(schatten_norm(&[1.0, -0.1], inf).is_err());
    }

    #[test]
    fn schatten_monotone_in_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sv: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..3.0)).collect();
        let alphas = [1.0, 1.5, 2.0, 3.0, 7.0, f64::INFINITY];
        for w in alphas.windows(2) {
            let lo = schatten_norm(&sv, SchattenSpec::new(w[0]).unwrap()).unwrap();
            let hi = schatten_norm(&sv, SchattenSpec::new(w[1]).unwrap()).unwrap();
            assert!(lo >= hi - 1e-12);
        }
    }

    #[test]
    fn schatten_conjugate_pairs() {
        let a = SchattenSpec::new(4.0).unwrap();
        assert!((a.conjugate().alpha() - 4.0 / 3.0).abs() < 1e-15);
        assert!(SchattenSpec::new(1.0).unwrap().conjugate().alpha().is_infinite());
        assert_eq!(SchattenSpec::new(f64::INFINITY).unwrap().conjugate().alpha(), 1.0);
    }

    #[test]
    fn sandwich_with_unit_weights_is_identity_spectrum() {
        let op = ExtensionOperator::standard(1, 2).unwrap();
        let one = GridFunction::constant(op.grid(), c(1.0, 0.0));
        let sv = sandwich_singular_values(&one, &one, &op).unwrap();
        assert_eq!(sv.len(), 5);
        for s in sv {
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    /// Dense oracle: the grid operator `F -> W1 K * (W2 F)` as a matrix on
    /// grid samples (quadrature-weighted), then a full SVD.
    fn dense_singular_values(
        w1: &GridFunction,
        w2: &GridFunction,
        op: &ExtensionOperator,
    ) -> Vec<f64> {
        let grid = op.grid();
        let g = grid.cells();
        let sc = grid.space_cells();
        let k = op.kernel();
        let m = DMatrix::from_fn(g, g, |z, zp| {
            let (tz, xz) = (z / sc, z % sc);
            let (tzp, xzp) = (zp / sc, zp % sc);
            // conforming grids are one-dimensional in space here
            let dx = (xz + grid.gx() - xzp) % grid.gx();
            let dt = (tz + grid.gt() - tzp) % grid.gt();
            w1.values()[z] * k.values()[dt * sc + dx] * w2.values()[zp] / g as f64
        });
        let mut sv: Vec<f64> = m.svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sv
    }

    #[test]
    fn sandwich_matches_dense_svd() {
        let op = ExtensionOperator::standard(1, 1).unwrap();
        for seed in 0..3u64 {
            let w1 = random_grid_fn(op.grid(), seed);
            let w2 = random_grid_fn(op.grid(), 50 + seed);
            let reduced = sandwich_singular_values(&w1, &w2, &op).unwrap();
            let dense = dense_singular_values(&w1, &w2, &op);
            let top = reduced[0].max(1e-30);
            for (i, r) in reduced.iter().enumerate() {
                assert!(
                    (r - dense[i]).abs() <= 1e-8 * top,
                    "sv {i}: {r} vs {}",
                    dense[i]
                );
            }
            // beyond the mode count the dense operator has rank zero
            for extra in dense.iter().skip(reduced.len()) {
                assert!(extra.abs() <= 1e-8 * top);
            }
        }
    }

    #[test]
    fn sandwich_frobenius_matches_double_integral() {
        let op = ExtensionOperator::standard(1, 2).unwrap();
        let grid = op.grid();
        let w1 = random_grid_fn(grid, 3);
        let w2 = random_grid_fn(grid, 4);
        let sv = sandwich_singular_values(&w1, &w2, &op).unwrap();
        let fro_sq: f64 = sv.iter().map(|s| s * s).sum();
        // direct double quadrature of |W1(z) K(z - z') W2(z')|^2
        let k = op.kernel();
        let g = grid.cells();
        let sc = grid.space_cells();
        let mut acc = 0.0;
        for z in 0..g {
            for zp in 0..g {
                let dx = (z % sc + grid.gx() - zp % sc) % grid.gx();
                let dt = (z / sc + grid.gt() - zp / sc) % grid.gt();
                acc += (w1.values()[z] * k.values()[dt * sc + dx] * w2.values()[zp]).norm_sqr();
            }
        }
        acc /= (g * g) as f64;
        assert!(
            (fro_sq - acc).abs() <= 1e-8 * (1.0 + acc),
            "{fro_sq} vs {acc}"
        );
    }

    #[test]
    fn sandwich_swap_symmetry() {
        let op = ExtensionOperator::standard(1, 2).unwrap();
        let w1 = random_grid_fn(op.grid(), 11);
        let w2 = random_grid_fn(op.grid(), 12);
        let fwd = sandwich_singular_values(&w1, &w2, &op).unwrap();
        let conj1 = GridFunction::from_values(
            op.grid(),
            w2.values().iter().map(|v| v.conj()).collect(),
        )
        .unwrap();
        let conj2 = GridFunction::from_values(
            op.grid(),
            w1.values().iter().map(|v| v.conj()).collect(),
        )
        .unwrap();
        let swapped = sandwich_singular_values(&conj1, &conj2, &op).unwrap();
        let top = fwd[0].max(1e-30);
        for (a, b) in fwd.iter().zip(&swapped) {
            assert!((a - b).abs() <= 1e-9 * top);
        }
    }

    #[test]
    fn sobolev_schatten_reduces_to_weights() {
        let lat = build_lattice(1, 3).unwrap();
        let orbs = orthonormal_pair(&lat);
        let gamma = DensityMatrix::new(vec![0.9, -0.2], orbs, true).unwrap();
        let spec = SchattenSpec::new(3.0).unwrap();
        let got = sobolev_schatten_norm(&gamma, 0.0, spec).unwrap();
        let want = schatten_norm(&[0.9, 0.2], spec).unwrap();
        assert!((got - want).abs() < 1e-12);
    }
}
