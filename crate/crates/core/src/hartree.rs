//! Mean-field dynamics for finite-rank density matrices on the torus: a
//! Strang splitting integrator that preserves orbital orthonormality, a
//! Duhamel fixed-point iterator over dense mode matrices, and
//! conserved-quantity monitors (mass, Gram matrix, trace, energy).
//!
//! The interaction is convolution with the periodized power potential
//! `w_a`; its Fourier coefficients come from `norms`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::collections::HashMap;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::extension::free_propagate;
use crate::norms::{hermitian_eigen, hermitize, power_potential_coefficient, DensityMatrix};
use crate::spectral::{
    analyze_space, build_lattice, freq_of_bin, pairwise_sum_f64, synthesize_space,
    CoefficientVector, FrequencyLattice, GridFunction, TorusGrid,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Strang,
    Picard,
}

/// Run parameters. `dt` must be nonzero; a negative step runs the same
/// splitting backward, which is how the reversibility checks drive the
/// integrator.
#[derive(Debug, Clone)]
pub struct HartreeConfig {
    pub d: usize,
    pub n: i64,
    pub a: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub t_final: f64,
    pub monitor_every: usize,
    /// Space grid override; defaults to `4N + 2`, the smallest grid that
    /// resolves products of two densities exactly.
    pub gx: Option<usize>,
    /// Fixed-point iterations used when `scheme` is `Picard`.
    pub picard_iters: usize,
}

impl HartreeConfig {
    pub fn new(d: usize, n: i64, a: f64, dt: f64, t_final: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParameter("cutoff must be >= 1".into()));
        }
        if !(a > 0.0 && a < d as f64) {
            return Err(Error::InvalidParameter(format!(
                "interaction power must lie in (0, {d}), got {a}"
            )));
        }
        if !dt.is_finite() || dt == 0.0 {
            return Err(Error::InvalidParameter("time step must be finite and nonzero".into()));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidParameter("final time must be positive".into()));
        }
        Ok(HartreeConfig {
            d,
            n,
            a,
            dt,
            scheme: Scheme::Strang,
            t_final,
            monitor_every: 10,
            gx: None,
            picard_iters: 8,
        })
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_monitor_every(mut self, every: usize) -> Self {
        self.monitor_every = every.max(1);
        self
    }

    pub fn with_space_grid(mut self, gx: usize) -> Self {
        self.gx = Some(gx);
        self
    }

    pub fn with_picard_iters(mut self, iters: usize) -> Self {
        self.picard_iters = iters.max(1);
        self
    }

    fn space_grid(&self) -> Result<TorusGrid> {
        let gx = self.gx.unwrap_or((4 * self.n + 2) as usize);
        if (gx as i64) < 4 * self.n + 2 {
            return Err(Error::UnderResolved(format!(
                "space grid {gx} cannot resolve density products at cutoff {}",
                self.n
            )));
        }
        TorusGrid::space_only(self.d, gx)
    }

    fn step_count(&self) -> Result<usize> {
        let raw = self.t_final / self.dt.abs();
        let steps = raw.round();
        if steps < 1.0 || (raw - steps).abs() > 1e-9 * raw.max(1.0) {
            return Err(Error::InvalidParameter(
                "final time must be a whole number of steps".into(),
            ));
        }
        Ok(steps as usize)
    }
}

/// A point on a trajectory. Orbitals must stay orthonormal to `1e-8`.
#[derive(Debug, Clone)]
pub struct HartreeState {
    time: f64,
    gamma: DensityMatrix,
}

impl HartreeState {
    pub fn new(time: f64, gamma: DensityMatrix) -> Result<Self> {
        let dev = gamma.gram_deviation();
        if dev > 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "orbital Gram matrix deviates from the identity by {dev:.2e}"
            )));
        }
        Ok(HartreeState { time, gamma })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn gamma(&self) -> &DensityMatrix {
        &self.gamma
    }
}

/// One monitored instant. `masses` are raw per-orbital squared norms;
/// `cumulative_truncation` is the mass each orbital has lost to band
/// truncation so far (zero entries under the Picard scheme, which carries
/// its compression residue in the report instead).
#[derive(Debug, Clone)]
pub struct MonitorRecord {
    pub time: f64,
    pub masses: Vec<f64>,
    pub gram_deviation: f64,
    pub energy: f64,
    pub trace: f64,
    pub cumulative_truncation: Vec<f64>,
}

/// Worst-case drifts over a run. `mass_drift` accounts for reported
/// truncation: it is `max_t |mass_j(t) + lost_j(t) - mass_j(0)|`.
#[derive(Debug, Clone)]
pub struct ConservationReport {
    pub dt: f64,
    pub max_gram_deviation: f64,
    pub mass_drift: Vec<f64>,
    pub energy_drift: f64,
    pub trace_drift: f64,
    pub truncation_loss: f64,
}

#[derive(Debug, Clone)]
pub struct EvolveOutcome {
    pub records: Vec<MonitorRecord>,
    pub final_state: HartreeState,
    pub report: ConservationReport,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: HartreeState,
    /// Mass shed by each orbital when the potential substep was projected
    /// back to the cutoff band.
    pub truncation_loss: Vec<f64>,
}

// ---------------------------------------------------------------------------
// The interaction potential as a multiplier table

/// Coefficient of `w_a` at each space-grid frequency bin, with the
/// symmetry class cache shared across bins.
fn potential_bin_table(a: f64, grid: TorusGrid) -> Result<Vec<f64>> {
    let mut cache: HashMap<Vec<i64>, f64> = HashMap::new();
    let gx = grid.gx();
    let mut table = vec![0.0; grid.space_cells()];
    for (bin, slot) in table.iter_mut().enumerate() {
        let mut rem = bin;
        let mut mode = vec![0i64; grid.d()];
        for axis in (0..grid.d()).rev() {
            mode[axis] = freq_of_bin(rem % gx, gx);
            rem /= gx;
        }
        let mut key: Vec<i64> = mode.iter().map(|m| m.abs()).collect();
        key.sort_unstable();
        let w = match cache.get(&key) {
            Some(&w) => w,
            None => {
                let w = power_potential_coefficient(a, &mode)?;
                cache.insert(key, w);
                w
            }
        };
        *slot = w;
    }
    Ok(table)
}

/// `w_a * rho` on the grid of `rho`, computed as a Fourier multiplier.
pub fn hartree_potential(rho: &GridFunction, a: f64) -> Result<GridFunction> {
    let grid = rho.grid();
    if grid.gt() != 1 {
        return Err(Error::InvalidParameter("expected a space-only density".into()));
    }
    let table = potential_bin_table(a, grid)?;
    Ok(apply_bin_table(rho, &table))
}

fn apply_bin_table(rho: &GridFunction, table: &[f64]) -> GridFunction {
    let grid = rho.grid();
    let mut vals = rho.values().to_vec();
    crate::spectral::fft_nd(&mut vals, &grid.dims(), false);
    for (v, w) in vals.iter_mut().zip(table) {
        *v *= w / grid.cells() as f64;
    }
    crate::spectral::fft_nd(&mut vals, &grid.dims(), true);
    GridFunction::from_values(grid, vals).expect("multiplier keeps finiteness")
}

// ---------------------------------------------------------------------------
// Strang splitting

struct Stepper {
    grid: TorusGrid,
    weights: Vec<f64>,
    table: Vec<f64>,
}

impl Stepper {
    /// Density values of the weighted orbitals on the space grid.
    fn density_values(&self, orbitals: &[CoefficientVector]) -> Result<Vec<f64>> {
        let mut rho = vec![0.0; self.grid.cells()];
        for (w, orb) in self.weights.iter().zip(orbitals) {
            let g = synthesize_space(orb, self.grid)?;
            for (r, v) in rho.iter_mut().zip(g.values()) {
                *r += w * v.norm_sqr();
            }
        }
        Ok(rho)
    }

    fn potential_values(&self, rho: &[f64]) -> Vec<f64> {
        let vals: Vec<Complex64> = rho.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        let f = GridFunction::from_values(self.grid, vals).expect("density is finite");
        apply_bin_table(&f, &self.table)
            .values()
            .iter()
            .map(|v| v.re)
            .collect()
    }

    /// Half kinetic, frozen-potential phase with band re-projection, half
    /// kinetic. Returns the mass lost per orbital in the projection.
    fn step(&self, orbitals: &mut [CoefficientVector], dt: f64) -> Result<Vec<f64>> {
        for orb in orbitals.iter_mut() {
            *orb = free_propagate(orb, dt / 2.0);
        }
        let rho = self.density_values(orbitals)?;
        let v = self.potential_values(&rho);
        let phase: Vec<Complex64> = v
            .iter()
            .map(|&v| Complex64::from_polar(1.0, -dt * v))
            .collect();
        let mut losses = Vec::with_capacity(orbitals.len());
        for orb in orbitals.iter_mut() {
            let before = orb.norm_sq();
            let mut g = synthesize_space(orb, self.grid)?;
            for (gv, p) in g.values_mut().iter_mut().zip(&phase) {
                *gv *= p;
            }
            let truncated = analyze_space(&g, orb.lattice())?;
            losses.push(before - truncated.norm_sq());
            *orb = truncated;
        }
        for orb in orbitals.iter_mut() {
            *orb = free_propagate(orb, dt / 2.0);
        }
        Ok(losses)
    }

    fn energy(&self, orbitals: &[CoefficientVector]) -> Result<f64> {
        let mut kinetic = 0.0;
        for (w, orb) in self.weights.iter().zip(orbitals) {
            let terms: Vec<f64> = orb
                .coeffs()
                .iter()
                .enumerate()
                .map(|(i, c)| orb.lattice().norm_sq(i) as f64 * c.norm_sqr())
                .collect();
            kinetic += w * pairwise_sum_f64(&terms);
        }
        let rho = self.density_values(orbitals)?;
        let v = self.potential_values(&rho);
        let prods: Vec<f64> = v.iter().zip(&rho).map(|(a, b)| a * b).collect();
        let potential = 0.5 * pairwise_sum_f64(&prods) / self.grid.cells() as f64;
        Ok(-TAU * kinetic + potential)
    }
}

pub fn step_strang(state: &HartreeState, dt: f64, a: f64) -> Result<StepOutcome> {
    let gamma = state.gamma();
    let lat = gamma.lattice();
    let grid = TorusGrid::space_only(lat.d(), (4 * lat.cutoff() + 2) as usize)?;
    let stepper = Stepper {
        grid,
        weights: gamma.weights().to_vec(),
        table: potential_bin_table(a, grid)?,
    };
    let mut orbitals = gamma.orbitals().to_vec();
    let losses = stepper.step(&mut orbitals, dt)?;
    let next = DensityMatrix::new(gamma.weights().to_vec(), orbitals, false)?;
    Ok(StepOutcome {
        state: HartreeState::new(state.time() + dt, next)?,
        truncation_loss: losses,
    })
}

// ---------------------------------------------------------------------------
// Full runs with monitors

pub fn evolve(config: &HartreeConfig, gamma0: &DensityMatrix) -> Result<EvolveOutcome> {
    let lat = gamma0.lattice();
    if lat.d() != config.d || lat.cutoff() != config.n {
        return Err(Error::DimensionMismatch(
            "initial data does not match the configured lattice".into(),
        ));
    }
    let grid = config.space_grid()?;
    let table = potential_bin_table(config.a, grid)?;
    match config.scheme {
        Scheme::Strang => evolve_strang(config, gamma0, grid, table),
        Scheme::Picard => evolve_picard(config, gamma0, grid, table),
    }
}

fn evolve_strang(
    config: &HartreeConfig,
    gamma0: &DensityMatrix,
    grid: TorusGrid,
    table: Vec<f64>,
) -> Result<EvolveOutcome> {
    let steps = config.step_count()?;
    let stepper = Stepper {
        grid,
        weights: gamma0.weights().to_vec(),
        table,
    };
    let mut orbitals = gamma0.orbitals().to_vec();
    let mut lost = vec![0.0; orbitals.len()];
    let mut records = Vec::new();
    let snapshot = |orbitals: &[CoefficientVector], lost: &[f64], time: f64| -> Result<MonitorRecord> {
        let gamma = DensityMatrix::new(stepper.weights.clone(), orbitals.to_vec(), false)?;
        let masses: Vec<f64> = orbitals.iter().map(|o| o.norm_sq()).collect();
        let trace = stepper
            .weights
            .iter()
            .zip(&masses)
            .map(|(w, m)| w * m)
            .sum();
        Ok(MonitorRecord {
            time,
            masses,
            gram_deviation: gamma.gram_deviation(),
            energy: stepper.energy(orbitals)?,
            trace,
            cumulative_truncation: lost.to_vec(),
        })
    };
    records.push(snapshot(&orbitals, &lost, 0.0)?);
    for k in 1..=steps {
        let losses = stepper.step(&mut orbitals, config.dt)?;
        for (acc, l) in lost.iter_mut().zip(losses) {
            *acc += l;
        }
        for orb in &orbitals {
            let mass = orb.norm_sq();
            if !mass.is_finite() {
                return Err(Error::NonFinite("orbital mass is not finite".into()));
            }
            if mass > 100.0 {
                return Err(Error::BlowUp(format!(
                    "orbital norm exceeded 10 at step {k}"
                )));
            }
        }
        if k % config.monitor_every == 0 || k == steps {
            records.push(snapshot(&orbitals, &lost, k as f64 * config.dt)?);
        }
    }
    let report = summarize(config.dt, &records);
    let final_gamma = DensityMatrix::new(stepper.weights.clone(), orbitals, false)?;
    Ok(EvolveOutcome {
        final_state: HartreeState::new(steps as f64 * config.dt, final_gamma)?,
        records,
        report,
    })
}

fn summarize(dt: f64, records: &[MonitorRecord]) -> ConservationReport {
    let first = &records[0];
    let rank = first.masses.len();
    let mut mass_drift = vec![0.0f64; rank];
    let mut max_gram: f64 = 0.0;
    let mut energy_drift: f64 = 0.0;
    let mut trace_drift: f64 = 0.0;
    for rec in records {
        max_gram = max_gram.max(rec.gram_deviation);
        energy_drift = energy_drift.max((rec.energy - first.energy).abs());
        trace_drift = trace_drift.max((rec.trace - first.trace).abs());
        for (j, drift) in mass_drift.iter_mut().enumerate().take(rec.masses.len()) {
            let accounted = rec.masses[j] + rec.cumulative_truncation[j] - first.masses[j];
            *drift = drift.max(accounted.abs());
        }
    }
    let last = records.last().expect("at least the initial record");
    ConservationReport {
        dt,
        max_gram_deviation: max_gram,
        mass_drift,
        energy_drift,
        trace_drift,
        truncation_loss: last.cumulative_truncation.iter().map(|l| l.abs()).sum(),
    }
}

// ---------------------------------------------------------------------------
// Duhamel fixed point on dense mode matrices

/// Conjugation by the free flow: entry `(r, c)` picks up the phase
/// `e^{2 pi i t (|n_r|^2 - |n_c|^2)}`.
fn free_conjugate(g: &DMatrix<Complex64>, nsq: &[i64], t: f64) -> DMatrix<Complex64> {
    DMatrix::from_fn(g.nrows(), g.ncols(), |r, c| {
        let phase = TAU * (t * (nsq[r] - nsq[c]) as f64).fract();
        g[(r, c)] * Complex64::from_polar(1.0, phase)
    })
}

struct ModeTables {
    lattice: FrequencyLattice,
    /// Lattice of mode differences (cutoff `2N`).
    diff: FrequencyLattice,
    /// `w_a` coefficient per difference mode; zeroed for free-flow tests.
    what: Vec<f64>,
    /// Index into `diff` for each ordered mode pair.
    diff_index: Vec<usize>,
    nsq: Vec<i64>,
}

impl ModeTables {
    fn build(lattice: &FrequencyLattice, a: f64) -> Result<Self> {
        let diff = build_lattice(lattice.d(), 2 * lattice.cutoff())?;
        let mut cache: HashMap<Vec<i64>, f64> = HashMap::new();
        let mut what = Vec::with_capacity(diff.len());
        for mode in diff.iter_modes() {
            let mut key: Vec<i64> = mode.iter().map(|m| m.abs()).collect();
            key.sort_unstable();
            let w = match cache.get(&key) {
                Some(&w) => w,
                None => {
                    let w = power_potential_coefficient(a, mode)?;
                    cache.insert(key, w);
                    w
                }
            };
            what.push(w);
        }
        Ok(ModeTables::with_potential(lattice, diff, what))
    }

    fn with_potential(lattice: &FrequencyLattice, diff: FrequencyLattice, what: Vec<f64>) -> Self {
        let l = lattice.len();
        let mut diff_index = vec![0usize; l * l];
        for r in 0..l {
            for c in 0..l {
                let delta: Vec<i64> = lattice
                    .mode(r)
                    .iter()
                    .zip(lattice.mode(c))
                    .map(|(a, b)| a - b)
                    .collect();
                diff_index[r * l + c] = diff.index_of(&delta).expect("difference stays in band");
            }
        }
        let nsq = (0..l).map(|i| lattice.norm_sq(i)).collect();
        ModeTables {
            lattice: lattice.clone(),
            diff,
            what,
            diff_index,
            nsq,
        }
    }

    fn rho_hat(&self, g: &DMatrix<Complex64>) -> Vec<Complex64> {
        let l = self.lattice.len();
        let mut rho = vec![Complex64::default(); self.diff.len()];
        for r in 0..l {
            for c in 0..l {
                rho[self.diff_index[r * l + c]] += g[(r, c)];
            }
        }
        rho
    }

    /// Mode-space matrix of multiplication by `w_a * rho`.
    fn v_matrix(&self, rho_hat: &[Complex64]) -> DMatrix<Complex64> {
        let l = self.lattice.len();
        DMatrix::from_fn(l, l, |r, c| {
            let k = self.diff_index[r * l + c];
            rho_hat[k] * self.what[k]
        })
    }

    fn energy(&self, g: &DMatrix<Complex64>) -> f64 {
        let kinetic: f64 = (0..self.lattice.len())
            .map(|r| self.nsq[r] as f64 * g[(r, r)].re)
            .sum();
        let rho = self.rho_hat(g);
        let potential: f64 = rho
            .iter()
            .zip(&self.what)
            .map(|(r, w)| w * r.norm_sqr())
            .sum();
        -TAU * kinetic + 0.5 * potential
    }
}

/// Hermitian projection with eigenvalues below `1e-12` of the top one
/// zeroed out; returns the matrix and the total discarded weight.
fn compress_dense(g: &DMatrix<Complex64>) -> Result<(DMatrix<Complex64>, f64)> {
    let (vals, vecs) = hermitian_eigen(hermitize(g.clone()))?;
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * top;
    let mut discarded = 0.0;
    let kept = DMatrix::from_fn(vals.len(), 1, |r, _| {
        if vals[r].abs() > tol {
            Complex64::new(vals[r], 0.0)
        } else {
            discarded += vals[r].abs();
            Complex64::default()
        }
    });
    let mut out = DMatrix::zeros(g.nrows(), g.ncols());
    for (i, k) in kept.iter().enumerate() {
        if k.re != 0.0 {
            let col = vecs.column(i);
            for r in 0..g.nrows() {
                for c in 0..g.ncols() {
                    out[(r, c)] += *k * col[r] * col[c].conj();
                }
            }
        }
    }
    Ok((out, discarded))
}

fn gamma_dense(gamma: &DensityMatrix) -> DMatrix<Complex64> {
    let l = gamma.lattice().len();
    let mut g = DMatrix::zeros(l, l);
    for (w, orb) in gamma.weights().iter().zip(gamma.orbitals()) {
        for r in 0..l {
            for c in 0..l {
                g[(r, c)] += *w * orb.coeffs()[r] * orb.coeffs()[c].conj();
            }
        }
    }
    g
}

fn dense_to_density(g: &DMatrix<Complex64>, lattice: &FrequencyLattice) -> Result<DensityMatrix> {
    let (vals, vecs) = hermitian_eigen(hermitize(g.clone()))?;
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| vals[j].abs().partial_cmp(&vals[i].abs()).expect("finite"));
    let mut weights = Vec::new();
    let mut orbitals = Vec::new();
    for &i in &order {
        if vals[i].abs() > 1e-12 * top {
            weights.push(vals[i]);
            let col: Vec<Complex64> = vecs.column(i).iter().copied().collect();
            orbitals.push(CoefficientVector::new(lattice.clone(), col)?);
        }
    }
    if weights.is_empty() {
        weights.push(0.0);
        orbitals.push(CoefficientVector::basis(lattice.clone(), 0));
    }
    DensityMatrix::new(weights, orbitals, true)
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub gamma: DensityMatrix,
    /// Sup over grid times of the Frobenius distance between successive
    /// iterates.
    pub iterate_distances: Vec<f64>,
}

struct PicardRun {
    trajectory: Vec<DMatrix<Complex64>>,
    distances: Vec<f64>,
    compression_residue: f64,
}

fn picard_run(
    gamma0: &DMatrix<Complex64>,
    tables: &ModeTables,
    t_final: f64,
    dt: f64,
    iters: usize,
) -> Result<PicardRun> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("fixed-point runs step forward only".into()));
    }
    if t_final > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter("fixed-point horizon is limited to T <= 1".into()));
    }
    let raw = t_final / dt;
    let m = raw.round();
    if m < 1.0 || (raw - m).abs() > 1e-9 * raw.max(1.0) {
        return Err(Error::InvalidParameter(
            "final time must be a whole number of steps".into(),
        ));
    }
    let m = m as usize;
    let free: Vec<DMatrix<Complex64>> = (0..=m)
        .map(|k| free_conjugate(gamma0, &tables.nsq, k as f64 * dt))
        .collect();
    let mut current = free.clone();
    let mut distances = Vec::with_capacity(iters);
    let mut growths = 0usize;
    let mut residue = 0.0f64;
    for _ in 0..iters {
        // D(t') = U(-t') [-i V(t'), gamma(t')]-commutator U(t'); prefix
        // trapezoid sums of D give the Duhamel integral at every grid time
        let l = tables.lattice.len();
        let mut next = Vec::with_capacity(m + 1);
        let mut prefix: DMatrix<Complex64> = DMatrix::zeros(l, l);
        let mut prev_d: Option<DMatrix<Complex64>> = None;
        for (k, g) in current.iter().enumerate() {
            let t = k as f64 * dt;
            let v = tables.v_matrix(&tables.rho_hat(g));
            let comm = (&v * g - g * &v) * Complex64::new(0.0, -1.0);
            let d = free_conjugate(&comm, &tables.nsq, -t);
            if let Some(p) = prev_d.take() {
                prefix += (p + &d) * Complex64::new(dt / 2.0, 0.0);
            }
            prev_d = Some(d);
            let integral = free_conjugate(&prefix, &tables.nsq, t);
            next.push(&free[k] + integral);
        }
        let mut dist = 0.0f64;
        for k in 0..=m {
            let (clean, dropped) = compress_dense(&next[k])?;
            residue = residue.max(dropped);
            dist = dist.max((&clean - &current[k]).norm());
            next[k] = clean;
        }
        if let Some(&last) = distances.last() {
            if dist > last {
                growths += 1;
                if growths >= 2 {
                    return Err(Error::Divergence(format!(
                        "iterate distances grew twice in a row (last {dist:.3e})"
                    )));
                }
            } else {
                growths = 0;
            }
        }
        distances.push(dist);
        current = next;
    }
    Ok(PicardRun {
        trajectory: current,
        distances,
        compression_residue: residue,
    })
}

/// Runs the Duhamel fixed-point iteration to time `t_final` on the `dt`
/// grid and returns the compressed final iterate.
pub fn picard_iterate(
    gamma0: &DensityMatrix,
    t_final: f64,
    a: f64,
    iters: usize,
    dt: f64,
) -> Result<PicardOutcome> {
    let tables = ModeTables::build(gamma0.lattice(), a)?;
    let run = picard_run(&gamma_dense(gamma0), &tables, t_final, dt, iters)?;
    Ok(PicardOutcome {
        gamma: dense_to_density(run.trajectory.last().expect("nonempty"), gamma0.lattice())?,
        iterate_distances: run.distances,
    })
}

fn evolve_picard(
    config: &HartreeConfig,
    gamma0: &DensityMatrix,
    _grid: TorusGrid,
    _table: Vec<f64>,
) -> Result<EvolveOutcome> {
    let tables = ModeTables::build(gamma0.lattice(), config.a)?;
    let run = picard_run(
        &gamma_dense(gamma0),
        &tables,
        config.t_final,
        config.dt,
        config.picard_iters,
    )?;
    let steps = run.trajectory.len() - 1;
    let mut records = Vec::new();
    for (k, g) in run.trajectory.iter().enumerate() {
        if k % config.monitor_every != 0 && k != steps {
            continue;
        }
        let gamma = dense_to_density(g, gamma0.lattice())?;
        let masses: Vec<f64> = gamma.orbitals().iter().map(|o| o.norm_sq()).collect();
        let trace = gamma
            .weights()
            .iter()
            .zip(&masses)
            .map(|(w, m)| w * m)
            .sum();
        records.push(MonitorRecord {
            time: k as f64 * config.dt,
            gram_deviation: gamma.gram_deviation(),
            energy: tables.energy(g),
            trace,
            cumulative_truncation: vec![0.0; masses.len()],
            masses,
        });
    }
    let mut report = summarize(config.dt, &records);
    report.truncation_loss = run.compression_residue;
    let final_gamma = dense_to_density(run.trajectory.last().expect("nonempty"), gamma0.lattice())?;
    Ok(EvolveOutcome {
        final_state: HartreeState::new(config.t_final, final_gamma)?,
        records,
        report,
    })
}

// ---------------------------------------------------------------------------
// Reference data

/// Rank-2 initial state used across the convergence studies: weights
/// `0.1` and `0.05` on `(e_0 + e_1)/sqrt(2)` and `(e_0 - e_1)/sqrt(2)`,
/// where `e_1` is the unit mode along the last axis.
pub fn reference_rank2(d: usize, n: i64) -> Result<DensityMatrix> {
    let lat = build_lattice(d, n)?;
    let zero = vec![0i64; d];
    let mut one = vec![0i64; d];
    one[d - 1] = 1;
    let i0 = lat.index_of(&zero).expect("zero mode");
    let i1 = lat.index_of(&one).expect("unit mode");
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut plus = CoefficientVector::zeros(lat.clone());
    plus.coeffs_mut()[i0] = Complex64::new(s, 0.0);
    plus.coeffs_mut()[i1] = Complex64::new(s, 0.0);
    let mut minus = CoefficientVector::zeros(lat.clone());
    minus.coeffs_mut()[i0] = Complex64::new(s, 0.0);
    minus.coeffs_mut()[i1] = Complex64::new(-s, 0.0);
    DensityMatrix::new(vec![0.1, 0.05], vec![plus, minus], true)
}

/// Conserved functional of the splitting flow: kinetic part with the
/// `-2 pi |n|^2` symbol matching the `e^{+2 pi i t |n|^2}` free phase,
/// plus half the self-interaction of the density.
pub fn energy(state: &HartreeState, a: f64) -> Result<f64> {
    let gamma = state.gamma();
    let lat = gamma.lattice();
    let grid = TorusGrid::space_only(lat.d(), (4 * lat.cutoff() + 2) as usize)?;
    let stepper = Stepper {
        grid,
        weights: gamma.weights().to_vec(),
        table: potential_bin_table(a, grid)?,
    };
    stepper.energy(gamma.orbitals())
}
