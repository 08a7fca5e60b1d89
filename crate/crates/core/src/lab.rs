//! Experiment drivers: extremal orthonormal families, exponent sweeps,
//! duality checks between the orthonormal and operator formulations, the
//! one-dimensional endpoint decomposition, and dyadic-in-time Schatten
//! profiles of the windowed kernel.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::extension::ExtensionOperator;
use crate::norms::{
    density_spacetime, hermitize, mixed_norm, mode_gram, psd_sqrt, sandwich_singular_values,
    schatten_norm, DensityMatrix, MixedNormSpec, SchattenSpec,
};
use crate::spectral::{
    build_lattice, pairwise_sum, pairwise_sum_f64, spacetime_coefficients, spacetime_synthesis,
    CoefficientVector, FrequencyLattice, GridFunction, TorusGrid,
};

use crate::norms::hermitian_eigen;

// ---------------------------------------------------------------------------
// Families and fits

/// Finite family of lattice vectors whose Gram matrix is the identity to
/// `1e-10`.
#[derive(Debug, Clone)]
pub struct OrthonormalFamily {
    vectors: Vec<CoefficientVector>,
}

impl OrthonormalFamily {
    pub fn new(vectors: Vec<CoefficientVector>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::InvalidParameter("family needs at least one vector".into()));
        }
        let lat = vectors[0].lattice().clone();
        if vectors.iter().any(|v| v.lattice() != &lat) {
            return Err(Error::DimensionMismatch(
                "family vectors use different lattices".into(),
            ));
        }
        let fam = OrthonormalFamily { vectors };
        let dev = fam.gram_deviation();
        if dev > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "family is not orthonormal: Gram deviation {dev:.2e}"
            )));
        }
        Ok(fam)
    }

    pub fn vectors(&self) -> &[CoefficientVector] {
        &self.vectors
    }

    pub fn lattice(&self) -> &FrequencyLattice {
        self.vectors[0].lattice()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn gram_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.vectors.len() {
            for j in i..self.vectors.len() {
                let g = self.vectors[i].inner(&self.vectors[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((g - Complex64::new(target, 0.0)).norm());
            }
        }
        dev
    }
}

/// Ordinary least squares on `(x, y)` points: `(slope, intercept,
/// max |residual|)`. Needs two points with distinct abscissae.
pub fn ols_fit(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter("fit needs at least two points".into()));
    }
    let n = points.len() as f64;
    let xbar = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ybar = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - xbar) * (p.0 - xbar)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidParameter("fit abscissae are all equal".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let max_residual = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).abs())
        .fold(0.0, f64::max);
    if !max_residual.is_finite() {
        return Err(Error::NonFinite("fit residuals are not finite".into()));
    }
    Ok((slope, intercept, max_residual))
}

/// Log-log fit of a sweep over cutoffs.
#[derive(Debug, Clone)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    pub ns: Vec<i64>,
    /// The fitted ordinate per cutoff (the ratio whose growth is measured).
    pub ratios: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Extremal families and the orthonormal-side functional

/// The saturating family: one indicator vector per lattice mode, all
/// weights `1`. Its Gram matrix is the identity exactly.
pub fn extremal_instance(d: usize, n: i64) -> Result<(Vec<f64>, OrthonormalFamily)> {
    let lat = build_lattice(d, n)?;
    let vectors: Vec<CoefficientVector> = (0..lat.len())
        .map(|j| CoefficientVector::basis(lat.clone(), j))
        .collect();
    Ok((vec![1.0; vectors.len()], OrthonormalFamily::new(vectors)?))
}

/// `|| sum_j w_j |E a_j|^2 ||_{L^p_t L^q_x}` on the operator's grid.
pub fn lhs_functional(
    weights: &[f64],
    family: &OrthonormalFamily,
    spec: &MixedNormSpec,
    op: &ExtensionOperator,
) -> Result<f64> {
    let gamma = DensityMatrix::new(weights.to_vec(), family.vectors().to_vec(), false)?;
    let rho = density_spacetime(&gamma, op)?;
    mixed_norm(&rho, spec)
}

/// `l^alpha` norm of the weight sequence.
pub fn weight_l_alpha(weights: &[f64], alpha: SchattenSpec) -> Result<f64> {
    let abs: Vec<f64> = weights.iter().map(|w| w.abs()).collect();
    schatten_norm(&abs, alpha)
}

/// Sweeps the cutoff and fits `log(lhs / ||w||_{l^alpha})` against `log N`.
/// The slope is the empirical growth exponent of the instance family, a
/// lower bound for the best exponent in the inequality.
pub fn exponent_sweep(
    d: usize,
    spec: &MixedNormSpec,
    alpha: SchattenSpec,
    ns: &[i64],
    mut maker: impl FnMut(i64) -> Result<(Vec<f64>, OrthonormalFamily)>,
) -> Result<ExponentFit> {
    if ns.len() < 3 {
        return Err(Error::InvalidParameter("sweep needs at least three cutoffs".into()));
    }
    let mut points = Vec::with_capacity(ns.len());
    let mut ratios = Vec::with_capacity(ns.len());
    for &n in ns {
        let op = ExtensionOperator::standard(d, n)?;
        let (weights, family) = maker(n)?;
        let lhs = lhs_functional(&weights, &family, spec, &op)?;
        let scale = weight_l_alpha(&weights, alpha)?;
        if !(scale > 0.0) {
            return Err(Error::InvalidParameter("weight sequence has zero l^alpha norm".into()));
        }
        let ratio = lhs / scale;
        ratios.push(ratio);
        points.push(((n as f64).ln(), ratio.ln()));
    }
    let (slope, intercept, max_residual) = ols_fit(&points)?;
    Ok(ExponentFit {
        slope,
        intercept,
        max_residual,
        ns: ns.to_vec(),
        ratios,
    })
}

// ---------------------------------------------------------------------------
// Duality between the orthonormal and operator formulations

/// The two normalized sides of the duality, plus the residual of the
/// exchange identity `< sum_j w_j |E a_j|^2, |W|^2 > = Tr(Gamma E* |W|^2 E)`
/// with `Gamma = sum_j w_j a_j a_j^H`, evaluated through independent
/// pipelines (grid quadrature vs. mode-space Gram).
#[derive(Debug, Clone, Copy)]
pub struct DualityReport {
    pub orthonormal_side: f64,
    pub operator_side: f64,
    pub pairing_residual: f64,
}

fn holder_conjugate(e: f64) -> f64 {
    if e.is_infinite() {
        1.0
    } else if e == 1.0 {
        f64::INFINITY
    } else {
        e / (e - 1.0)
    }
}

pub fn duality_check(
    weights: &[f64],
    family: &OrthonormalFamily,
    w: &GridFunction,
    spec: &MixedNormSpec,
    alpha: SchattenSpec,
    op: &ExtensionOperator,
) -> Result<DualityReport> {
    let scale = weight_l_alpha(weights, alpha)?;
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter("weights have zero l^alpha norm".into()));
    }
    let gamma = DensityMatrix::new(weights.to_vec(), family.vectors().to_vec(), false)?;
    let rho = density_spacetime(&gamma, op)?;
    let orthonormal_side = mixed_norm(&rho, spec)? / scale;

    let dual = alpha.conjugate();
    let wspec = MixedNormSpec::new(
        2.0 * holder_conjugate(spec.p()),
        2.0 * holder_conjugate(spec.q()),
    )?;
    let wnorm = mixed_norm(w, &wspec)?;
    if !(wnorm > 0.0) {
        return Err(Error::InvalidParameter("weight function vanishes".into()));
    }
    let sv = sandwich_singular_values(w, w, op)?;
    let operator_side = schatten_norm(&sv, dual)? / (wnorm * wnorm);

    // pairing, route 1: grid quadrature of the density against |W|^2
    let psi = w.abs_squared();
    let prods: Vec<Complex64> = rho
        .values()
        .iter()
        .zip(psi.values())
        .map(|(r, s)| r * s)
        .collect();
    let lhs = pairwise_sum(&prods) / op.grid().cells() as f64;
    // pairing, route 2: trace against the mode-space Gram of |W|^2
    let m = mode_gram(op, w)?;
    let terms: Vec<Complex64> = weights
        .iter()
        .zip(family.vectors())
        .map(|(&wj, a)| {
            let v = DVector::from_iterator(a.coeffs().len(), a.coeffs().iter().copied());
            (v.adjoint() * &m * v)[(0, 0)] * wj
        })
        .collect();
    let rhs = pairwise_sum(&terms);
    Ok(DualityReport {
        orthonormal_side,
        operator_side,
        pairing_residual: (lhs - rhs).norm(),
    })
}

// ---------------------------------------------------------------------------
// Endpoint decomposition (d = 1)

/// Does the pair `(n1, n2)`, `n1 != n2`, with `n1 - n2 = m1` and
/// `n1^2 - n2^2 = m2` exist inside `[-N, N]`? At most one such pair exists:
/// it requires `m1 | m2` and `m1 + m2/m1` even, and then
/// `n1 = (m1 + m2/m1)/2`, `n2 = (m2/m1 - m1)/2`.
pub fn pair_count(m1: i64, m2: i64, n: i64) -> Result<u8> {
    if m1 == 0 {
        return Err(Error::InvalidParameter("pair condition needs m1 != 0".into()));
    }
    if m2.rem_euclid(m1.abs()) != 0 {
        return Ok(0);
    }
    let q = m2 / m1;
    if (m1 + q).rem_euclid(2) != 0 {
        return Ok(0);
    }
    let n1 = (m1 + q) / 2;
    let n2 = (q - m1) / 2;
    Ok(if n1.abs() <= n && n2.abs() <= n { 1 } else { 0 })
}

/// Exact splitting of the squared Frobenius norm of `W1 E E* W2` in one
/// dimension into a diagonal and an off-diagonal part, with the reference
/// upper bound `6N ||W1||^2_{L^4_t L^2_x} ||W2||^2_{L^4_t L^2_x}`.
#[derive(Debug, Clone, Copy)]
pub struct EndpointReport {
    /// Squared Frobenius norm via singular values (independent route).
    pub total: f64,
    /// `(2N+1) * int psi_1 * int psi_2` with `psi_i = |W_i|^2`.
    pub term_i: f64,
    /// Off-diagonal sum over resonant frequency pairs.
    pub term_ii: f64,
    pub bound: f64,
}

pub fn endpoint_decomposition(
    w1: &GridFunction,
    w2: &GridFunction,
    op: &ExtensionOperator,
) -> Result<EndpointReport> {
    if op.lattice().d() != 1 {
        return Err(Error::InvalidParameter(
            "endpoint decomposition is specific to d = 1".into(),
        ));
    }
    let n = op.lattice().cutoff();
    let grid = op.grid();
    let psi1_hat = spacetime_coefficients(&w1.abs_squared());
    let psi2_hat = spacetime_coefficients(&w2.abs_squared());

    let zero = grid.bin(&[0], 0);
    let term_i = (2 * n + 1) as f64 * (psi1_hat[zero] * psi2_hat[zero]).re;

    let mut terms = Vec::new();
    for m1 in -2 * n..=2 * n {
        if m1 == 0 {
            continue;
        }
        for m2 in -n * n..=n * n {
            if pair_count(m1, m2, n)? == 1 {
                let b = grid.bin(&[m1], m2);
                terms.push(psi1_hat[b].conj() * psi2_hat[b]);
            }
        }
    }
    let term_ii = pairwise_sum(&terms).re;

    let sv = sandwich_singular_values(w1, w2, op)?;
    let squares: Vec<f64> = sv.iter().map(|s| s * s).collect();
    let total = pairwise_sum_f64(&squares);

    let l4l2 = MixedNormSpec::new(4.0, 2.0)?;
    let n1 = mixed_norm(w1, &l4l2)?;
    let n2 = mixed_norm(w2, &l4l2)?;
    let bound = 6.0 * n as f64 * n1 * n1 * n2 * n2;

    Ok(EndpointReport {
        total,
        term_i,
        term_ii,
        bound,
    })
}

// ---------------------------------------------------------------------------
// Dyadic-in-time profile

/// Time-slice indices of each dyadic shell `2^{j-1} <= |t| < 2^j`
/// intersected with `0 < |t| < 1/N`; the top shell is clipped at `1/N`.
/// `|t|` is the distance to zero on the time circle. Returned ascending in
/// `j`; shells without grid points are omitted.
pub fn dyadic_shells(n: i64, grid: TorusGrid) -> Result<Vec<(i32, Vec<usize>)>> {
    if n < 1 {
        return Err(Error::InvalidParameter("cutoff must be >= 1".into()));
    }
    let gt = grid.gt() as i64;
    // smallest j with 2^j >= 1/N
    let j_top = -(n.ilog2() as i32);
    let mut shells: std::collections::BTreeMap<i32, Vec<usize>> = std::collections::BTreeMap::new();
    for k in 1..grid.gt() {
        let m = (k as i64).min(gt - k as i64);
        if m * n >= gt {
            continue; // |t| >= 1/N
        }
        // find j with 2^{j-1} <= m/Gt, scanning down from the clipped top
        let mut j = j_top;
        loop {
            let shift = (1 - j) as u32;
            if shift >= 63 || (m << shift) >= gt {
                break;
            }
            j -= 1;
        }
        shells.entry(j).or_default().push(k);
    }
    if shells.is_empty() {
        return Err(Error::InvalidParameter(
            "no grid times fall in 0 < |t| < 1/N".into(),
        ));
    }
    Ok(shells.into_iter().collect())
}

/// One dyadic shell of the profile.
#[derive(Debug, Clone, Copy)]
pub struct DyadicRow {
    pub j: i32,
    /// `2^j`, the outer time scale of the shell.
    pub scale: f64,
    /// Number of time slices in the shell.
    pub slices: usize,
    pub norm: f64,
}

#[derive(Debug, Clone)]
pub struct DyadicProfile {
    pub rows: Vec<DyadicRow>,
    /// Fitted slope of `log norm` against `log 2^j` over rows with
    /// positive norm, when at least two such rows exist.
    pub growth_slope: Option<f64>,
    pub growth_max_residual: Option<f64>,
}

fn time_mask(grid: TorusGrid, keep: impl Fn(usize) -> bool, f: &GridFunction) -> GridFunction {
    let sc = grid.space_cells();
    let mut vals = f.values().to_vec();
    for k in 0..grid.gt() {
        if !keep(k) {
            for v in &mut vals[k * sc..(k + 1) * sc] {
                *v = Complex64::default();
            }
        }
    }
    GridFunction::from_values(grid, vals).expect("mask keeps finiteness")
}

/// `|W|^2` restricted to the closed window `|t| <= 1/N`.
fn windowed_abs_squared(w: &GridFunction, n: i64) -> GridFunction {
    let grid = w.grid();
    let gt = grid.gt() as i64;
    time_mask(
        grid,
        |k| (k as i64).min(gt - k as i64) * n <= gt,
        &w.abs_squared(),
    )
}

/// Schatten norm of `F -> W1^N (K_j * (W2^N F))` per dyadic shell `j`,
/// where `W^N = 1_{|t| <= 1/N} W` and `K_j` is the kernel restricted to the
/// shell. `alpha = 2` goes through quadrature and FFT convolution at any
/// size; other exponents materialize the operator on its frequency support
/// of dimension `(2N+1)^d * Gt`, which is kept small.
pub fn dyadic_schatten_profile(
    w1: &GridFunction,
    w2: &GridFunction,
    alpha: SchattenSpec,
    op: &ExtensionOperator,
) -> Result<DyadicProfile> {
    let grid = op.grid();
    if w1.grid() != grid || w2.grid() != grid {
        return Err(Error::DimensionMismatch("weights live on a different grid".into()));
    }
    let n = op.lattice().cutoff();
    let shells = dyadic_shells(n, grid)?;
    let kernel = op.kernel();
    let psi1 = windowed_abs_squared(w1, n);
    let psi2 = windowed_abs_squared(w2, n);

    let frobenius_route = alpha.alpha() == 2.0;
    let rank = op.lattice().len() * grid.gt();
    if !frobenius_route && rank > 2000 {
        return Err(Error::InvalidParameter(format!(
            "Schatten-{} dyadic profile needs frequency rank <= 2000, got {rank}",
            alpha.alpha()
        )));
    }

    let mut rows = Vec::with_capacity(shells.len());
    for (j, slices) in &shells {
        let in_shell: std::collections::HashSet<usize> = slices.iter().copied().collect();
        let kj = time_mask(grid, |k| in_shell.contains(&k), &kernel);
        let norm = if frobenius_route {
            // ||T_j||_F^2 = < psi1^N, |K_j|^2 * psi2^N >
            let kj_sq = kj.abs_squared();
            let prod: Vec<Complex64> = spacetime_coefficients(&kj_sq)
                .iter()
                .zip(spacetime_coefficients(&psi2))
                .map(|(a, b)| a * b)
                .collect();
            let conv = spacetime_synthesis(grid, prod)?;
            let integrand: Vec<Complex64> = psi1
                .values()
                .iter()
                .zip(conv.values())
                .map(|(a, b)| a * b)
                .collect();
            let fro_sq = (pairwise_sum(&integrand) / grid.cells() as f64).re;
            fro_sq.max(0.0).sqrt()
        } else {
            let sv = shell_singular_values(&psi1, &psi2, &kj, op)?;
            schatten_norm(&sv, alpha)?
        };
        rows.push(DyadicRow {
            j: *j,
            scale: 2f64.powi(*j),
            slices: slices.len(),
            norm,
        });
    }

    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.norm > 0.0)
        .map(|r| (r.scale.ln(), r.norm.ln()))
        .collect();
    let (growth_slope, growth_max_residual) = if points.len() >= 2 {
        let (s, _, r) = ols_fit(&points)?;
        (Some(s), Some(r))
    } else {
        (None, None)
    };
    Ok(DyadicProfile {
        rows,
        growth_slope,
        growth_max_residual,
    })
}

/// Singular values of `F -> psi-weighted (K_j * .)` through the operator's
/// frequency support: the shell kernel only occupies bins `(n, kappa)` with
/// `n` on the lattice, so with `Lambda` those kernel coefficients and
/// `Psi_i` the coefficient-space forms of multiplication by `psi_i`, the
/// squared singular values are the eigenvalues of
/// `Psi_1^{1/2} Lambda Psi_2 Lambda^H Psi_1^{1/2}`.
fn shell_singular_values(
    psi1: &GridFunction,
    psi2: &GridFunction,
    kj: &GridFunction,
    op: &ExtensionOperator,
) -> Result<Vec<f64>> {
    let grid = op.grid();
    let lat = op.lattice();
    let gt = grid.gt();
    let rank = lat.len() * gt;
    let k_hat = spacetime_coefficients(kj);
    let p1_hat = spacetime_coefficients(psi1);
    let p2_hat = spacetime_coefficients(psi2);

    // bin of each selected frequency (n on the lattice, kappa arbitrary)
    let space_bins: Vec<usize> = lat.iter_modes().map(|m| grid.space_bin(m)).collect();
    let sc = grid.space_cells();
    let bin_of = |r: usize| -> usize {
        let (ni, kappa) = (r / gt, r % gt);
        kappa * sc + space_bins[ni]
    };
    let lambda: Vec<Complex64> = (0..rank).map(|r| k_hat[bin_of(r)]).collect();

    // Psi[r, r'] = psi_hat(freq_r - freq_r'), read at the wrapped bin
    let gx = grid.gx() as i64;
    let psi_entry = |hat: &[Complex64], r: usize, rp: usize| -> Complex64 {
        let (ni, ka) = (r / gt, r % gt);
        let (nj, kb) = (rp / gt, rp % gt);
        let mut sbin = 0usize;
        for (a, b) in lat.mode(ni).iter().zip(lat.mode(nj)) {
            sbin = sbin * grid.gx() + (a - b).rem_euclid(gx) as usize;
        }
        let tbin = (ka as i64 - kb as i64).rem_euclid(gt as i64) as usize;
        hat[tbin * sc + sbin]
    };
    let psi1_m = hermitize(DMatrix::from_fn(rank, rank, |r, rp| psi_entry(&p1_hat, r, rp)));
    let psi2_m = hermitize(DMatrix::from_fn(rank, rank, |r, rp| psi_entry(&p2_hat, r, rp)));

    let s1 = psd_sqrt(psi1_m)?;
    let dl = DMatrix::from_diagonal(&DVector::from_iterator(rank, lambda.iter().copied()));
    let mid = &dl * psi2_m * dl.adjoint();
    let core = hermitize(&s1 * mid * &s1);
    let (vals, _) = hermitian_eigen(core)?;
    let mut sv: Vec<f64> = vals.iter().map(|&l| l.max(0.0).sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    Ok(sv)
}

// ---------------------------------------------------------------------------
// Reproducible random weights

/// Complex Gaussian weight: independent standard-normal real and imaginary
/// parts on space frequencies `|n|_inf <= (Gx-2)/4` and time frequencies
/// `|kappa| <= (Gt-2)/4`, drawn in a fixed lexicographic order, then
/// synthesized on the grid. Band-limitation keeps all downstream
/// quadratures exact on conforming grids.
pub fn random_weight(grid: TorusGrid, seed: u64) -> GridFunction {
    let bx = ((grid.gx() - 2) / 4) as i64;
    let bt = ((grid.gt().max(2) - 2) / 4) as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bins = vec![Complex64::default(); grid.cells()];
    let side = (2 * bx + 1) as usize;
    let sc = grid.space_cells();
    let mut mode = vec![-bx; grid.d()];
    for _ in 0..side.pow(grid.d() as u32) {
        let sbin = grid.space_bin(&mode);
        for kappa in -bt..=bt {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            let tbin = kappa.rem_euclid(grid.gt() as i64) as usize;
            bins[tbin * sc + sbin] = Complex64::new(re, im);
        }
        // lexicographic increment
        for axis in (0..grid.d()).rev() {
            if mode[axis] < bx {
                mode[axis] += 1;
                for m in mode.iter_mut().skip(axis + 1) {
                    *m = -bx;
                }
                break;
            }
        }
    }
    spacetime_synthesis(grid, bins).expect("bins match the grid")
}

/// Deterministic random orthonormal family: Gram-Schmidt applied to `rank`
/// complex Gaussian coefficient vectors drawn from a ChaCha8 stream.
pub fn random_family(
    lattice: &FrequencyLattice,
    rank: usize,
    seed: u64,
) -> Result<OrthonormalFamily> {
    if rank == 0 || rank > lattice.len() {
        return Err(Error::InvalidParameter(format!(
            "family rank must lie in 1..={}, got {rank}",
            lattice.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vecs: Vec<CoefficientVector> = Vec::new();
    while vecs.len() < rank {
        let mut cand = CoefficientVector::zeros(lattice.clone());
        for slot in cand.coeffs_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *slot = Complex64::new(re, im);
        }
        for prev in &vecs {
            let overlap = prev.inner(&cand);
            let coeffs: Vec<Complex64> = cand
                .coeffs()
                .iter()
                .zip(prev.coeffs())
                .map(|(x, y)| x - overlap * y)
                .collect();
            cand = CoefficientVector::new(lattice.clone(), coeffs)?;
        }
        let nrm = cand.norm_sq().sqrt();
        if nrm > 1e-8 {
            let coeffs: Vec<Complex64> = cand.coeffs().iter().map(|x| x / nrm).collect();
            vecs.push(CoefficientVector::new(lattice.clone(), coeffs)?);
        }
    }
    OrthonormalFamily::new(vecs)
}
