//! Band-limited extension/restriction pair, the associated kernel, free
//! propagation and the dispersive kernel ratio.
//!
//! `extend` maps lattice coefficients to samples of
//! `sum_n a_n e^{2pi i (x.n + t|n|^2)}`; `restrict` is its quadrature
//! adjoint. On any common grid the two are exactly adjoint as finite sums,
//! and with the resolution invariant below `restrict . extend` is the
//! identity up to rounding.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::{
    build_lattice, fft_nd, spacetime_coefficients, CoefficientVector, FrequencyLattice,
    GridFunction, TorusGrid,
};

const TAU: f64 = std::f64::consts::TAU;

/// Extension operator for one lattice on one space-time grid.
#[derive(Debug, Clone)]
pub struct ExtensionOperator {
    lattice: FrequencyLattice,
    grid: TorusGrid,
}

impl ExtensionOperator {
    /// Requires the grid to resolve every character the lattice produces:
    /// `Gx > 2N` per space axis and `Gt > 2 d N^2` in time (the largest
    /// `|n|^2` on the lattice is `d N^2`).
    pub fn new(lattice: FrequencyLattice, grid: TorusGrid) -> Result<Self> {
        if lattice.d() != grid.d() {
            return Err(Error::DimensionMismatch(
                "lattice and grid dimension differ".into(),
            ));
        }
        let n = lattice.cutoff();
        if grid.gx() as i64 <= 2 * n {
            return Err(Error::UnderResolved(format!(
                "Gx = {} does not resolve band {}",
                grid.gx(),
                n
            )));
        }
        if grid.gt() as i64 <= 2 * lattice.d() as i64 * n * n {
            return Err(Error::UnderResolved(format!(
                "Gt = {} does not resolve time band {}",
                grid.gt(),
                lattice.d() as i64 * n * n
            )));
        }
        Ok(ExtensionOperator { lattice, grid })
    }

    /// Lattice of cutoff `n` on its conforming grid.
    pub fn standard(d: usize, n: i64) -> Result<Self> {
        ExtensionOperator::new(build_lattice(d, n)?, TorusGrid::conforming(d, n)?)
    }

    pub fn lattice(&self) -> &FrequencyLattice {
        &self.lattice
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    /// Samples `sum_n a_n e^{2pi i (x.n + t|n|^2)}` on the grid.
    ///
    /// Per time slice the modes are phased by `e^{2pi i t|n|^2}` with the
    /// angle reduced in integer arithmetic (`t |n|^2 mod 1` is rational on
    /// the grid), then synthesized by a spatial inverse FFT.
    pub fn extend(&self, a: &CoefficientVector) -> Result<GridFunction> {
        if a.lattice() != &self.lattice {
            return Err(Error::DimensionMismatch(
                "coefficients indexed by a different lattice".into(),
            ));
        }
        let grid = self.grid;
        let sc = grid.space_cells();
        let gt = grid.gt() as i64;
        let space_dims = vec![grid.gx(); grid.d()];
        let bins: Vec<usize> = self
            .lattice
            .iter_modes()
            .map(|m| grid.space_bin(m))
            .collect();
        let norms: Vec<i64> = (0..self.lattice.len())
            .map(|i| self.lattice.norm_sq(i))
            .collect();
        let mut values = vec![Complex64::default(); grid.cells()];
        values
            .par_chunks_mut(sc)
            .enumerate()
            .for_each(|(t_idx, slice)| {
                for ((&bin, &nsq), &coeff) in bins.iter().zip(&norms).zip(a.coeffs()) {
                    let phase_num = (t_idx as i64 * nsq).rem_euclid(gt);
                    let phase = Complex64::from_polar(1.0, TAU * phase_num as f64 / gt as f64);
                    slice[bin] += coeff * phase;
                }
                fft_nd(slice, &space_dims, true);
            });
        GridFunction::from_values(grid, values)
    }

    /// Quadrature of `F` against the conjugate characters: coefficient `n`
    /// is read from space-time FFT bin `(n mod Gx, |n|^2 mod Gt)`.
    pub fn restrict(&self, f: &GridFunction) -> Result<CoefficientVector> {
        if f.grid() != self.grid {
            return Err(Error::DimensionMismatch(
                "grid function lives on a different grid".into(),
            ));
        }
        let coeffs = spacetime_coefficients(f);
        let a = (0..self.lattice.len())
            .map(|i| coeffs[self.grid.bin(self.lattice.mode(i), self.lattice.norm_sq(i))])
            .collect();
        CoefficientVector::new(self.lattice.clone(), a)
    }

    /// Kernel `K_N = sum_n e^{2pi i (x.n + t|n|^2)}`, the extension of the
    /// all-ones coefficient vector.
    pub fn kernel(&self) -> GridFunction {
        let ones = CoefficientVector::new(
            self.lattice.clone(),
            vec![Complex64::new(1.0, 0.0); self.lattice.len()],
        )
        .expect("length matches by construction");
        self.extend(&ones).expect("lattice matches by construction")
    }
}

/// `a_n -> a_n e^{2pi i t |n|^2}`; unitary for every real `t`.
pub fn free_propagate(a: &CoefficientVector, t: f64) -> CoefficientVector {
    let phased = (0..a.lattice().len())
        .map(|i| {
            let nsq = a.lattice().norm_sq(i) as f64;
            a.coeffs()[i] * Complex64::from_polar(1.0, TAU * (t * nsq).fract())
        })
        .collect();
    CoefficientVector::new(a.lattice().clone(), phased).expect("same length")
}

/// `sup |t|^{d/2} |K_N(x,t)|` over grid points with `0 < |t| <= 1/N`, where
/// `|t|` is the distance to `0` on the time torus.
///
/// The kernel factors over space axes, so each time slice needs only the
/// one-dimensional profile; the slice maximum is its maximum to the power
/// `d`. Requires at least 32 time samples in range.
pub fn dispersive_ratio(d: usize, cutoff: i64, grid: TorusGrid) -> Result<f64> {
    if grid.d() != d {
        return Err(Error::DimensionMismatch("grid dimension".into()));
    }
    if cutoff < 1 {
        return Err(Error::InvalidParameter("cutoff must be >= 1".into()));
    }
    let gx = grid.gx();
    if gx as i64 <= 2 * cutoff {
        return Err(Error::UnderResolved("Gx does not resolve the band".into()));
    }
    let gt = grid.gt();
    // integer test: min(k, gt-k)/gt <= 1/N  <=>  N*min(k, gt-k) <= gt
    let slices: Vec<usize> = (1..gt)
        .filter(|&k| cutoff * (k.min(gt - k)) as i64 <= gt as i64)
        .collect();
    if slices.len() < 32 {
        return Err(Error::InvalidParameter(format!(
            "only {} time samples with 0 < |t| <= 1/N; need 32",
            slices.len()
        )));
    }
    let sup = slices
        .par_iter()
        .map(|&k| {
            let mut bins = vec![Complex64::default(); gx];
            for m in -cutoff..=cutoff {
                let phase_num = (k as i64 * m * m).rem_euclid(gt as i64);
                bins[m.rem_euclid(gx as i64) as usize] +=
                    Complex64::from_polar(1.0, TAU * phase_num as f64 / gt as f64);
            }
            fft_nd(&mut bins, &[gx], true);
            let max1d = bins.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let td = k.min(gt - k) as f64 / gt as f64;
            td.powf(d as f64 / 2.0) * max1d.powi(d as i32)
        })
        .reduce(|| 0.0, f64::max);
    Ok(sup)
}
