//! Frequency lattices, torus grids, quadrature, FFT plumbing and Fourier
//! multipliers (sharp cutoffs, dyadic blocks, Bessel potentials).
//!
//! Conventions used throughout the crate:
//! * the torus is `[0,1)^{d+1}` with unit measure; quadrature weight is
//!   `1/(Gx^d * Gt)`;
//! * grid values are stored time-major: `idx = t_idx * Gx^d + x_flat` with
//!   `x_flat` lexicographic in the spatial coordinates;
//! * Fourier coefficients use the analysis sign `e^{-2pi i k.z}` and the
//!   synthesis sign `e^{+2pi i k.z}`, with the `1/cells` factor on analysis.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Truncated frequency lattice `Z^d ∩ [-N, N]^d` in lexicographic order.
///
/// Mode storage is a flat stride-`d` array behind an `Arc`, so clones are
/// cheap and the enumeration order is fixed once at construction.
#[derive(Debug, Clone)]
pub struct FrequencyLattice {
    d: usize,
    cutoff: i64,
    modes: Arc<[i64]>,
}

impl PartialEq for FrequencyLattice {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.cutoff == other.cutoff
    }
}
impl Eq for FrequencyLattice {}

/// Enumerates `Z^d ∩ [-N,N]^d` lexicographically; `(2N+1)^d` modes.
pub fn build_lattice(d: usize, cutoff: i64) -> Result<FrequencyLattice> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    if cutoff < 1 {
        return Err(Error::InvalidParameter("cutoff must be >= 1".into()));
    }
    let side = (2 * cutoff + 1) as usize;
    let len = side.pow(d as u32);
    let mut modes = Vec::with_capacity(len * d);
    let mut current = vec![-cutoff; d];
    loop {
        modes.extend_from_slice(&current);
        // lexicographic increment, last coordinate fastest
        let mut axis = d;
        loop {
            if axis == 0 {
                return Ok(FrequencyLattice {
                    d,
                    cutoff,
                    modes: modes.into(),
                });
            }
            axis -= 1;
            if current[axis] < cutoff {
                current[axis] += 1;
                for c in current.iter_mut().skip(axis + 1) {
                    *c = -cutoff;
                }
                break;
            }
        }
    }
}

impl FrequencyLattice {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn cutoff(&self) -> i64 {
        self.cutoff
    }

    /// Number of modes, `(2N+1)^d`.
    pub fn len(&self) -> usize {
        self.modes.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mode(&self, idx: usize) -> &[i64] {
        &self.modes[idx * self.d..(idx + 1) * self.d]
    }

    pub fn iter_modes(&self) -> impl Iterator<Item = &[i64]> {
        self.modes.chunks_exact(self.d)
    }

    /// `|n|^2` of mode `idx`.
    pub fn norm_sq(&self, idx: usize) -> i64 {
        self.mode(idx).iter().map(|c| c * c).sum()
    }

    /// Position of `mode` in the enumeration, if it lies in the lattice.
    pub fn index_of(&self, mode: &[i64]) -> Option<usize> {
        if mode.len() != self.d {
            return None;
        }
        let side = (2 * self.cutoff + 1) as usize;
        let mut idx = 0usize;
        for &c in mode {
            if c.abs() > self.cutoff {
                return None;
            }
            idx = idx * side + (c + self.cutoff) as usize;
        }
        Some(idx)
    }
}

/// Uniform grid on the space-time torus; `gt = 1` denotes a space-only grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    d: usize,
    gx: usize,
    gt: usize,
}

impl TorusGrid {
    pub fn new(d: usize, gx: usize, gt: usize) -> Result<Self> {
        if d == 0 || gx == 0 || gt == 0 {
            return Err(Error::InvalidParameter(
                "grid dimensions must be positive".into(),
            ));
        }
        Ok(TorusGrid { d, gx, gt })
    }

    pub fn space_only(d: usize, gx: usize) -> Result<Self> {
        TorusGrid::new(d, gx, 1)
    }

    /// Smallest grid on which every pairing of two products of cutoff-`N`
    /// extensions integrates exactly: `Gx = 4N+2`, `Gt = 4dN^2+2`.
    /// Space frequencies of `|E_N a|^2` reach `2N` per axis and time
    /// frequencies reach `2dN^2`; doubling both leaves room for one extra
    /// band-limited factor of the same width.
    pub fn conforming(d: usize, cutoff: i64) -> Result<Self> {
        if cutoff < 1 {
            return Err(Error::InvalidParameter("cutoff must be >= 1".into()));
        }
        let n = cutoff as usize;
        TorusGrid::new(d, 4 * n + 2, 4 * d * n * n + 2)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn gx(&self) -> usize {
        self.gx
    }

    pub fn gt(&self) -> usize {
        self.gt
    }

    /// Points per time slice, `Gx^d`.
    pub fn space_cells(&self) -> usize {
        self.gx.pow(self.d as u32)
    }

    /// Total number of grid points, `Gx^d * Gt`.
    pub fn cells(&self) -> usize {
        self.space_cells() * self.gt
    }

    pub fn time_at(&self, t_idx: usize) -> f64 {
        t_idx as f64 / self.gt as f64
    }

    /// Axis sizes as `[Gt, Gx, ..., Gx]`, matching the value layout.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.d + 1);
        dims.push(self.gt);
        dims.extend(std::iter::repeat_n(self.gx, self.d));
        dims
    }

    /// Flat spatial index of the bin holding spatial frequency `n` (one
    /// coordinate per axis, reduced modulo `Gx`).
    pub fn space_bin(&self, n: &[i64]) -> usize {
        let g = self.gx as i64;
        let mut idx = 0usize;
        for &c in n {
            idx = idx * self.gx + c.rem_euclid(g) as usize;
        }
        idx
    }

    /// Flat space-time index of the bin for frequency `(n, nt)`.
    pub fn bin(&self, n: &[i64], nt: i64) -> usize {
        let kt = nt.rem_euclid(self.gt as i64) as usize;
        kt * self.space_cells() + self.space_bin(n)
    }
}

/// Signed representative of FFT bin `b` on an axis of length `g`:
/// the frequency in `(-g/2, g/2]`.
pub fn freq_of_bin(b: usize, g: usize) -> i64 {
    if b <= g / 2 {
        b as i64
    } else {
        b as i64 - g as i64
    }
}

/// Complex samples on a [`TorusGrid`].
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: TorusGrid,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn from_values(grid: TorusGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values, got {}",
                grid.cells(),
                values.len()
            )));
        }
        let f = GridFunction { grid, values };
        f.check_finite()?;
        Ok(f)
    }

    pub fn constant(grid: TorusGrid, c: Complex64) -> Self {
        GridFunction {
            grid,
            values: vec![c; grid.cells()],
        }
    }

    /// Samples `f(x, t)` with `x` in `[0,1)^d`, `t` in `[0,1)`.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64], f64) -> Complex64 + Sync) -> Self {
        let sc = grid.space_cells();
        let gx = grid.gx;
        let d = grid.d;
        let values: Vec<Complex64> = (0..grid.cells())
            .into_par_iter()
            .map(|idx| {
                let t = grid.time_at(idx / sc);
                let mut xflat = idx % sc;
                let mut x = vec![0.0; d];
                for axis in (0..d).rev() {
                    x[axis] = (xflat % gx) as f64 / gx as f64;
                    xflat /= gx;
                }
                f(&x, t)
            })
            .collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("grid function contains NaN/Inf".into()))
        }
    }

    /// Pointwise `|f|^2` as a new grid function (real-valued).
    pub fn abs_squared(&self) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|v| Complex64::new(v.norm_sqr(), 0.0)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Coefficients aligned with a [`FrequencyLattice`] enumeration.
#[derive(Debug, Clone)]
pub struct CoefficientVector {
    lattice: FrequencyLattice,
    a: Vec<Complex64>,
}

impl CoefficientVector {
    pub fn new(lattice: FrequencyLattice, a: Vec<Complex64>) -> Result<Self> {
        if a.len() != lattice.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coefficients, got {}",
                lattice.len(),
                a.len()
            )));
        }
        Ok(CoefficientVector { lattice, a })
    }

    pub fn zeros(lattice: FrequencyLattice) -> Self {
        let n = lattice.len();
        CoefficientVector {
            lattice,
            a: vec![Complex64::default(); n],
        }
    }

    /// Indicator of a single mode.
    pub fn basis(lattice: FrequencyLattice, mode_idx: usize) -> Self {
        let mut cv = CoefficientVector::zeros(lattice);
        cv.a[mode_idx] = Complex64::new(1.0, 0.0);
        cv
    }

    pub fn lattice(&self) -> &FrequencyLattice {
        &self.lattice
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.a
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.a
    }

    /// `sum_n |a_n|^2` with a fixed pairwise reduction.
    pub fn norm_sq(&self) -> f64 {
        let sq: Vec<f64> = self.a.iter().map(|c| c.norm_sqr()).collect();
        pairwise_sum_f64(&sq)
    }

    /// `<self, other>` = `sum_n conj(self_n) other_n`.
    pub fn inner(&self, other: &CoefficientVector) -> Complex64 {
        let prod: Vec<Complex64> = self
            .a
            .iter()
            .zip(&other.a)
            .map(|(x, y)| x.conj() * y)
            .collect();
        pairwise_sum(&prod)
    }
}

const PAIRWISE_BASE: usize = 64;

/// Sum with a fixed pairwise tree; the result is independent of thread count
/// because the tree shape depends only on the slice length.
pub fn pairwise_sum(xs: &[Complex64]) -> Complex64 {
    if xs.len() <= PAIRWISE_BASE {
        let mut acc = Complex64::default();
        for x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    if xs.len() >= 1 << 16 {
        let (a, b) = rayon::join(|| pairwise_sum(&xs[..mid]), || pairwise_sum(&xs[mid..]));
        a + b
    } else {
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Real-valued pairwise tree sum; same tree shape as [`pairwise_sum`].
pub fn pairwise_sum_f64(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BASE {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    if xs.len() >= 1 << 16 {
        let (a, b) = rayon::join(|| pairwise_sum_f64(&xs[..mid]), || pairwise_sum_f64(&xs[mid..]));
        a + b
    } else {
        pairwise_sum_f64(&xs[..mid]) + pairwise_sum_f64(&xs[mid..])
    }
}

/// `(1/(Gx^d Gt)) sum F`; exact on trigonometric polynomials whose
/// frequencies avoid nonzero multiples of the grid sizes.
pub fn quadrature_integral(f: &GridFunction) -> Complex64 {
    pairwise_sum(f.values()) / f.grid().cells() as f64
}

// ---------------------------------------------------------------------------
// FFT plumbing

/// In-place multi-dimensional FFT over `values` with axis sizes `dims`
/// (slowest axis first). `inverse = false` applies `e^{-2pi i}` sums,
/// `inverse = true` applies `e^{+2pi i}` sums; neither normalizes.
pub fn fft_nd(values: &mut [Complex64], dims: &[usize], inverse: bool) {
    let total: usize = dims.iter().product();
    assert_eq!(values.len(), total);
    let mut planner = FftPlanner::new();
    for (axis, &len) in dims.iter().enumerate() {
        if len == 1 {
            continue;
        }
        let fft = if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        };
        // stride of consecutive entries along `axis`, and number of lines
        let inner: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let block = len * inner;
        values
            .par_chunks_mut(block)
            .with_max_len(1)
            .for_each(|chunk| {
                let mut line = vec![Complex64::default(); len];
                let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
                for j in 0..inner {
                    for k in 0..len {
                        line[k] = chunk[k * inner + j];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for k in 0..len {
                        chunk[k * inner + j] = line[k];
                    }
                }
            });
        debug_assert_eq!(outer * block, total);
    }
}

/// Space-time Fourier coefficients by bin, normalized so that bin `k` holds
/// the quadrature of `F e^{-2pi i k.z}` (time axis slowest, then x axes).
pub fn spacetime_coefficients(f: &GridFunction) -> Vec<Complex64> {
    let mut vals = f.values().to_vec();
    fft_nd(&mut vals, &f.grid().dims(), false);
    let scale = 1.0 / f.grid().cells() as f64;
    for v in &mut vals {
        *v *= scale;
    }
    vals
}

/// Synthesis `F(z) = sum_k c_k e^{+2pi i k.z}` from coefficients by bin.
pub fn spacetime_synthesis(grid: TorusGrid, mut coeffs: Vec<Complex64>) -> Result<GridFunction> {
    if coeffs.len() != grid.cells() {
        return Err(Error::DimensionMismatch(
            "coefficient array does not match grid".into(),
        ));
    }
    fft_nd(&mut coeffs, &grid.dims(), true);
    GridFunction::from_values(grid, coeffs)
}

/// Space-only synthesis of a lattice coefficient vector on one time slice
/// baked at `t = 0`: `f(x) = sum_n a_n e^{2pi i x.n}`.
pub fn synthesize_space(cv: &CoefficientVector, grid: TorusGrid) -> Result<GridFunction> {
    if grid.d() != cv.lattice().d() {
        return Err(Error::DimensionMismatch("lattice/grid dimension".into()));
    }
    if grid.gt() != 1 {
        return Err(Error::InvalidParameter("expected a space-only grid".into()));
    }
    if grid.gx() as i64 <= 2 * cv.lattice().cutoff() {
        return Err(Error::UnderResolved(format!(
            "Gx = {} cannot hold band {}",
            grid.gx(),
            cv.lattice().cutoff()
        )));
    }
    let mut bins = vec![Complex64::default(); grid.cells()];
    for (i, n) in cv.lattice().iter_modes().enumerate() {
        bins[grid.space_bin(n)] += cv.coeffs()[i];
    }
    spacetime_synthesis(grid, bins)
}

/// Space-only analysis: reads the lattice band back off a space grid by FFT.
/// Each returned coefficient is the exact quadrature of `f e^{-2pi i x.n}`.
pub fn analyze_space(f: &GridFunction, lattice: &FrequencyLattice) -> Result<CoefficientVector> {
    if f.grid().gt() != 1 {
        return Err(Error::InvalidParameter("expected a space-only grid".into()));
    }
    if f.grid().d() != lattice.d() {
        return Err(Error::DimensionMismatch("lattice/grid dimension".into()));
    }
    if f.grid().gx() as i64 <= 2 * lattice.cutoff() {
        return Err(Error::UnderResolved("grid narrower than lattice band".into()));
    }
    let coeffs = spacetime_coefficients(f);
    let grid = f.grid();
    let a = lattice
        .iter_modes()
        .map(|n| coeffs[grid.space_bin(n)])
        .collect();
    CoefficientVector::new(lattice.clone(), a)
}

// ---------------------------------------------------------------------------
// Multipliers

/// Fourier multiplier symbols; all three kinds are real-valued.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MultiplierSymbol {
    /// `1` on `||n||_inf <= N`, else `0`.
    Cutoff { n: i64 },
    /// Littlewood-Paley block `phi_k`; see [`dyadic_symbol`].
    Dyadic { k: u32 },
    /// `(1 + |n|^2)^{s/2}`.
    Bessel { s: f64 },
}

fn bump_g(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

/// Smooth bump `eta`: `1` on `r <= 1`, `0` on `r >= 2`, strictly between
/// otherwise; built from `g(u) = exp(-1/u)`.
pub fn eta(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let a = bump_g(2.0 - r);
        let b = bump_g(r - 1.0);
        a / (a + b)
    }
}

/// `phi_0(r) = eta(r)`, `phi_k(r) = eta(r/2^k) - eta(r/2^{k-1})` for `k >= 1`.
/// Supported in `[2^{k-1}, 2^{k+1}]`, telescoping to `sum_k phi_k = 1`.
pub fn dyadic_symbol(k: u32, r: f64) -> f64 {
    if k == 0 {
        eta(r)
    } else {
        let scale = (1u64 << k) as f64;
        eta(r / scale) - eta(r / (scale / 2.0))
    }
}

impl MultiplierSymbol {
    pub fn cutoff(n: i64) -> Self {
        MultiplierSymbol::Cutoff { n }
    }

    pub fn dyadic(k: u32) -> Self {
        MultiplierSymbol::Dyadic { k }
    }

    pub fn bessel(s: f64) -> Result<Self> {
        if !s.is_finite() {
            return Err(Error::InvalidParameter("bessel order must be finite".into()));
        }
        Ok(MultiplierSymbol::Bessel { s })
    }

    /// Symbol value at an integer frequency.
    pub fn eval(&self, mode: &[i64]) -> f64 {
        match *self {
            MultiplierSymbol::Cutoff { n } => {
                if mode.iter().all(|c| c.abs() <= n) {
                    1.0
                } else {
                    0.0
                }
            }
            MultiplierSymbol::Dyadic { k } => {
                let r = (mode.iter().map(|c| (c * c) as f64).sum::<f64>()).sqrt();
                dyadic_symbol(k, r)
            }
            MultiplierSymbol::Bessel { s } => {
                let n2: i64 = mode.iter().map(|c| c * c).sum();
                (1.0 + n2 as f64).powf(s / 2.0)
            }
        }
    }

    /// Largest per-axis frequency the symbol's support can reach, if the
    /// support is bounded (used to validate grid resolution).
    fn support_radius(&self) -> Option<i64> {
        match *self {
            MultiplierSymbol::Cutoff { n } => Some(n),
            MultiplierSymbol::Dyadic { k } => Some(1i64 << (k + 1)),
            MultiplierSymbol::Bessel { .. } => None,
        }
    }
}

/// Coefficientwise product `a_n -> m(n) a_n` on a lattice vector.
pub fn apply_multiplier_coeffs(sym: MultiplierSymbol, cv: &CoefficientVector) -> CoefficientVector {
    let a = cv
        .lattice()
        .iter_modes()
        .zip(cv.coeffs())
        .map(|(n, &c)| c * sym.eval(n))
        .collect();
    CoefficientVector {
        lattice: cv.lattice().clone(),
        a,
    }
}

/// Spatial multiplier action on a grid function: FFT in the space axes,
/// multiply each bin by the symbol at its representative frequency, inverse
/// FFT. Time slices are treated independently.
///
/// Bounded symbols whose support exceeds the representable band are
/// rejected, since the grid cannot distinguish their action from aliasing.
pub fn apply_multiplier_grid(sym: MultiplierSymbol, f: &GridFunction) -> Result<GridFunction> {
    let grid = f.grid();
    if let Some(r) = sym.support_radius() {
        if 2 * r >= grid.gx() as i64 {
            return Err(Error::UnderResolved(format!(
                "symbol support radius {} not resolved by Gx = {}",
                r,
                grid.gx()
            )));
        }
    }
    let mut vals = f.values().to_vec();
    let sc = grid.space_cells();
    let space_dims = vec![grid.gx(); grid.d()];
    vals.par_chunks_mut(sc).for_each(|slice| {
        fft_nd(slice, &space_dims, false);
        let scale = 1.0 / sc as f64;
        for (flat, v) in slice.iter_mut().enumerate() {
            let mut rem = flat;
            let mut freq = vec![0i64; grid.d()];
            for axis in (0..grid.d()).rev() {
                freq[axis] = freq_of_bin(rem % grid.gx(), grid.gx());
                rem /= grid.gx();
            }
            *v *= sym.eval(&freq) * scale;
        }
        fft_nd(slice, &space_dims, true);
    });
    GridFunction::from_values(grid, vals)
}
