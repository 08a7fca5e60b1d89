//! Experiment drivers. Every run follows the same three phases: validate
//! the config and construct all cell inputs (schema errors abort before
//! any output exists), evaluate cells while collecting numerical guard
//! trips, then render one CSV plus a JSON sidecar with the resolved
//! config, the toolkit version, and any per-cell failures.

use serde_json::{json, Map, Value};

use strichartz_torus::extension::{dispersive_ratio, ExtensionOperator};
use strichartz_torus::hartree::{evolve, reference_rank2, HartreeConfig, Scheme};
use strichartz_torus::lab::{
    duality_check, dyadic_schatten_profile, endpoint_decomposition, extremal_instance,
    lhs_functional, ols_fit, random_family, random_weight, weight_l_alpha,
};
use strichartz_torus::norms::{MixedNormSpec, SchattenSpec};
use strichartz_torus::spectral::TorusGrid;
use strichartz_torus::Error as CoreError;

use crate::config::Config;
use crate::CliError;

pub struct Outcome {
    pub csv: String,
    pub sidecar: Value,
    pub failed_cells: usize,
}

/// Numerical guard trips are collected per cell; anything else means the
/// config asked for an invalid computation and aborts the whole run.
struct Failures(Vec<(String, String)>);

impl Failures {
    fn new() -> Self {
        Failures(Vec::new())
    }

    fn admit(&mut self, cell: String, err: CoreError) -> Result<(), CliError> {
        if err.is_numerical() {
            self.0.push((cell, err.to_string()));
            Ok(())
        } else {
            Err(CliError::Schema(format!("cell {cell}: {err}")))
        }
    }
}

fn schema(err: CoreError) -> CliError {
    CliError::Schema(err.to_string())
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

fn finish(
    experiment: &str,
    cfg: &Config,
    columns: &[&str],
    rows: Vec<String>,
    failures: Failures,
    report: Option<Value>,
) -> Outcome {
    let csv = rows.join("\n") + "\n";
    let mut top = Map::new();
    top.insert("columns".into(), json!(columns));
    top.insert("config".into(), json!(cfg.resolved()));
    top.insert("experiment".into(), json!(experiment));
    top.insert(
        "failures".into(),
        Value::Array(
            failures
                .0
                .iter()
                .map(|(cell, message)| json!({"cell": cell, "error": message}))
                .collect(),
        ),
    );
    if let Some(r) = report {
        top.insert("report".into(), r);
    }
    top.insert("toolkit_version".into(), json!(strichartz_torus::VERSION));
    Outcome {
        csv,
        sidecar: Value::Object(top),
        failed_cells: failures.0.len(),
    }
}

const SWEEP_HEADER: &str = "N (lattice cutoff; dimensionless),\
lhs (mixed norm of the weighted density; dimensionless),\
l_alpha (l^alpha norm of the weights; dimensionless),\
ratio (lhs / l_alpha; dimensionless; final slope row fits log ratio vs log N)";

pub fn sweep(cfg: &mut Config) -> Result<Outcome, CliError> {
    let d = cfg.require_usize("d")?;
    let alpha = cfg.require_f64("alpha")?;
    let p = cfg.require_f64("p")?;
    let q = cfg.require_f64("q")?;
    let ns = cfg.require_i64_list("Ns")?;
    cfg.finish()?;
    if ns.len() < 3 {
        return Err(CliError::Schema(
            "sweep needs at least three cutoffs in Ns".into(),
        ));
    }
    let spec = MixedNormSpec::new(p, q).map_err(schema)?;
    let alpha = SchattenSpec::new(alpha).map_err(schema)?;
    let mut cells = Vec::new();
    for &n in &ns {
        let op = ExtensionOperator::standard(d, n).map_err(schema)?;
        let (weights, family) = extremal_instance(d, n).map_err(schema)?;
        cells.push((n, op, weights, family));
    }

    let mut failures = Failures::new();
    let mut rows = vec![SWEEP_HEADER.to_string()];
    let mut points = Vec::new();
    for (n, op, weights, family) in &cells {
        let lhs = match lhs_functional(weights, family, &spec, op) {
            Ok(v) => v,
            Err(e) => {
                failures.admit(format!("N={n}"), e)?;
                continue;
            }
        };
        let la = match weight_l_alpha(weights, alpha) {
            Ok(v) => v,
            Err(e) => {
                failures.admit(format!("N={n}"), e)?;
                continue;
            }
        };
        let ratio = lhs / la;
        points.push(((*n as f64).ln(), ratio.ln()));
        rows.push(format!("{n},{},{},{}", sci(lhs), sci(la), sci(ratio)));
    }
    if points.len() >= 3 {
        match ols_fit(&points) {
            Ok((slope, _, _)) => rows.push(format!("slope,,,{}", sci(slope))),
            Err(e) => failures.admit("fit".into(), e)?,
        }
    }
    Ok(finish(
        "sweep",
        cfg,
        &["N", "lhs", "l_alpha", "ratio"],
        rows,
        failures,
        None,
    ))
}

const ENDPOINT_HEADER: &str = "seed (RNG stream; dimensionless),\
total (squared Frobenius norm of the sandwiched operator; dimensionless),\
I (diagonal term; dimensionless),\
II (off-diagonal resonant term; dimensionless),\
bound (6N times the squared L4-in-time L2-in-space weight norms; dimensionless),\
residual (|total - (I + II)|; dimensionless)";

pub fn endpoint(cfg: &mut Config, default_seed: u64) -> Result<Outcome, CliError> {
    let d = cfg.require_usize("d")?;
    let n = cfg.require_i64("N")?;
    let seed = cfg.u64_or("seed", default_seed)?;
    let trials = cfg.usize_or("trials", 1)?;
    cfg.finish()?;
    if d != 1 {
        return Err(CliError::Schema(
            "the endpoint decomposition is specific to d = 1".into(),
        ));
    }
    if trials == 0 {
        return Err(CliError::Schema("trials must be at least 1".into()));
    }
    let op = ExtensionOperator::standard(1, n).map_err(schema)?;

    let mut failures = Failures::new();
    let mut rows = vec![ENDPOINT_HEADER.to_string()];
    for t in 0..trials {
        let s = seed.wrapping_add(t as u64);
        let w1 = random_weight(op.grid(), s.wrapping_mul(2));
        let w2 = random_weight(op.grid(), s.wrapping_mul(2).wrapping_add(1));
        match endpoint_decomposition(&w1, &w2, &op) {
            Ok(rep) => {
                let residual = (rep.total - (rep.term_i + rep.term_ii)).abs();
                rows.push(format!(
                    "{s},{},{},{},{},{}",
                    sci(rep.total),
                    sci(rep.term_i),
                    sci(rep.term_ii),
                    sci(rep.bound),
                    sci(residual)
                ));
            }
            Err(e) => failures.admit(format!("seed={s}"), e)?,
        }
    }
    Ok(finish(
        "endpoint",
        cfg,
        &["seed", "total", "I", "II", "bound", "residual"],
        rows,
        failures,
        None,
    ))
}

const DISPERSIVE_HEADER: &str = "N (lattice cutoff; dimensionless),\
ratio (sup of |t|^(d/2) |K_N| over 0 < |t| <= 1/N; dimensionless; \
final spread row is (max - min) / min)";

pub fn dispersive(cfg: &mut Config) -> Result<Outcome, CliError> {
    let d = cfg.require_usize("d")?;
    let ns = cfg.require_i64_list("Ns")?;
    cfg.finish()?;
    if ns.is_empty() {
        return Err(CliError::Schema("Ns must be non-empty".into()));
    }
    let mut cells = Vec::new();
    for &n in &ns {
        cells.push((n, TorusGrid::conforming(d, n).map_err(schema)?));
    }

    let mut failures = Failures::new();
    let mut rows = vec![DISPERSIVE_HEADER.to_string()];
    let mut ratios = Vec::new();
    for (n, grid) in cells {
        match dispersive_ratio(d, n, grid) {
            Ok(r) => {
                ratios.push(r);
                rows.push(format!("{n},{}", sci(r)));
            }
            Err(e) => failures.admit(format!("N={n}"), e)?,
        }
    }
    if ratios.len() >= 2 {
        let max = ratios.iter().copied().fold(f64::MIN, f64::max);
        let min = ratios.iter().copied().fold(f64::MAX, f64::min);
        rows.push(format!("spread,{}", sci((max - min) / min)));
    }
    Ok(finish(
        "dispersive",
        cfg,
        &["N", "ratio"],
        rows,
        failures,
        None,
    ))
}

const DUALITY_HEADER: &str = "seed (RNG stream; dimensionless),\
orthonormal_side (density mixed norm over the weight sequence norm; dimensionless),\
operator_side (dual Schatten norm over the squared weight-function norm; dimensionless),\
pairing_residual (grid quadrature vs mode-space trace; dimensionless)";

pub fn duality(cfg: &mut Config, default_seed: u64) -> Result<Outcome, CliError> {
    let d = cfg.require_usize("d")?;
    let n = cfg.require_i64("N")?;
    let p = cfg.require_f64("p")?;
    let q = cfg.require_f64("q")?;
    let alpha = cfg.require_f64("alpha")?;
    let rank = cfg.usize_or("rank", 3)?;
    let seed = cfg.u64_or("seed", default_seed)?;
    let trials = cfg.usize_or("trials", 1)?;
    cfg.finish()?;
    if trials == 0 {
        return Err(CliError::Schema("trials must be at least 1".into()));
    }
    let spec = MixedNormSpec::new(p, q).map_err(schema)?;
    let alpha = SchattenSpec::new(alpha).map_err(schema)?;
    let op = ExtensionOperator::standard(d, n).map_err(schema)?;
    // deterministic decreasing weight ladder; randomness lives in the
    // family and the weight function
    let weights: Vec<f64> = (0..rank).map(|j| 1.0 / (j + 1) as f64).collect();

    let mut failures = Failures::new();
    let mut rows = vec![DUALITY_HEADER.to_string()];
    for t in 0..trials {
        let s = seed.wrapping_add(t as u64);
        let cell = (|| {
            let family = random_family(op.lattice(), rank, s)?;
            let w = random_weight(op.grid(), s ^ 0x9e37_79b9_7f4a_7c15);
            duality_check(&weights, &family, &w, &spec, alpha, &op)
        })();
        match cell {
            Ok(rep) => rows.push(format!(
                "{s},{},{},{}",
                sci(rep.orthonormal_side),
                sci(rep.operator_side),
                sci(rep.pairing_residual)
            )),
            Err(e) => failures.admit(format!("seed={s}"), e)?,
        }
    }
    Ok(finish(
        "duality",
        cfg,
        &["seed", "orthonormal_side", "operator_side", "pairing_residual"],
        rows,
        failures,
        None,
    ))
}

const DYADIC_HEADER: &str = "j (shell index; outer time scale 2^j),\
scale (outer shell time; torus periods),\
slices (grid time slices in the shell; count),\
norm (Schatten norm of the windowed shell operator; dimensionless; \
final slope row fits log norm vs log scale)";

pub fn dyadic(cfg: &mut Config, default_seed: u64) -> Result<Outcome, CliError> {
    let d = cfg.require_usize("d")?;
    let n = cfg.require_i64("N")?;
    let alpha = cfg.f64_or("alpha", 2.0)?;
    let seed = cfg.u64_or("seed", default_seed)?;
    cfg.finish()?;
    let alpha = SchattenSpec::new(alpha).map_err(schema)?;
    let op = ExtensionOperator::standard(d, n).map_err(schema)?;
    let w1 = random_weight(op.grid(), seed.wrapping_mul(2));
    let w2 = random_weight(op.grid(), seed.wrapping_mul(2).wrapping_add(1));

    let mut failures = Failures::new();
    let mut rows = vec![DYADIC_HEADER.to_string()];
    match dyadic_schatten_profile(&w1, &w2, alpha, &op) {
        Ok(profile) => {
            for row in &profile.rows {
                rows.push(format!(
                    "{},{},{},{}",
                    row.j,
                    sci(row.scale),
                    row.slices,
                    sci(row.norm)
                ));
            }
            if let Some(slope) = profile.growth_slope {
                rows.push(format!("slope,,,{}", sci(slope)));
            }
        }
        Err(e) => failures.admit("profile".into(), e)?,
    }
    Ok(finish(
        "dyadic",
        cfg,
        &["j", "scale", "slices", "norm"],
        rows,
        failures,
        None,
    ))
}

fn hartree_header(rank: usize) -> String {
    let mut parts = vec!["time (torus periods)".to_string()];
    for j in 1..=rank {
        parts.push(format!("mass_{j} (orbital squared L2 norm; dimensionless)"));
    }
    parts.push("gram_deviation (max |Gram - Id| entry; dimensionless)".to_string());
    parts.push("energy (conserved functional; dimensionless)".to_string());
    parts.push("trace (weighted total mass; dimensionless)".to_string());
    for j in 1..=rank {
        parts.push(format!(
            "truncation_{j} (cumulative mass shed by band truncation; dimensionless)"
        ));
    }
    parts.join(",")
}

pub fn hartree(cfg: &mut Config) -> Result<Outcome, CliError> {
    let d = cfg.require_usize("d")?;
    let n = cfg.require_i64("N")?;
    let a = cfg.require_f64("a")?;
    let dt = cfg.require_f64("dt")?;
    let t_final = cfg.require_f64("T")?;
    let scheme = cfg.str_or("scheme", "strang");
    let monitor = cfg.usize_or("monitor", 10)?;
    let iters = cfg.usize_or("picard_iters", 8)?;
    let gx = cfg.opt_usize("gx")?;
    cfg.finish()?;
    let scheme = match scheme.as_str() {
        "strang" => Scheme::Strang,
        "picard" => Scheme::Picard,
        other => {
            return Err(CliError::Schema(format!(
                "scheme must be 'strang' or 'picard', got '{other}'"
            )))
        }
    };
    if monitor == 0 {
        return Err(CliError::Schema("monitor must be at least 1".into()));
    }
    let mut config = HartreeConfig::new(d, n, a, dt, t_final)
        .map_err(schema)?
        .with_scheme(scheme)
        .with_monitor_every(monitor)
        .with_picard_iters(iters);
    if let Some(g) = gx {
        config = config.with_space_grid(g);
    }
    let gamma0 = reference_rank2(d, n).map_err(schema)?;
    let rank = gamma0.rank();

    let mut columns = vec!["time".to_string()];
    columns.extend((1..=rank).map(|j| format!("mass_{j}")));
    columns.extend(["gram_deviation", "energy", "trace"].map(String::from));
    columns.extend((1..=rank).map(|j| format!("truncation_{j}")));
    let column_refs: Vec<&str> = columns.iter().map(|c| c.as_str()).collect();

    let mut failures = Failures::new();
    let mut rows = vec![hartree_header(rank)];
    let mut report = None;
    match evolve(&config, &gamma0) {
        Ok(out) => {
            for rec in &out.records {
                let mut fields = vec![sci(rec.time)];
                fields.extend(rec.masses.iter().map(|&m| sci(m)));
                fields.push(sci(rec.gram_deviation));
                fields.push(sci(rec.energy));
                fields.push(sci(rec.trace));
                fields.extend(rec.cumulative_truncation.iter().map(|&l| sci(l)));
                rows.push(fields.join(","));
            }
            report = Some(json!({
                "dt": out.report.dt,
                "energy_drift": out.report.energy_drift,
                "mass_drift": out.report.mass_drift,
                "max_gram_deviation": out.report.max_gram_deviation,
                "trace_drift": out.report.trace_drift,
                "truncation_loss": out.report.truncation_loss,
            }))
        }
        Err(e) => failures.admit("evolve".into(), e)?,
    }
    Ok(finish("hartree", cfg, &column_refs, rows, failures, report))
}
