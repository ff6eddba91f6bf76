use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use equilibrium_core::oracle::{
    closed_form_trajectory, gateaux_broker, gateaux_informed, picard_solve, random_directions,
    EquilibriumEnsemble, VerificationEntry,
};
use equilibrium_core::sim::{path_rng, simulate_equilibrium, PathBundle, SimContext};
use equilibrium_core::{
    assemble_matrices, build_fundamental_solution, ell_quadrature, existence_bound,
    residual_profile, solve_offset_odes, solve_riccati, solve_riccati_direct,
    solve_riccati_linearized, validate_params, verify_freiling_conditions, ModelParams, OffsetGrid,
    RiccatiGrid, SystemMatrices, TimeGrid, ValidationReport,
};
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, GateauxCheck, PicardCheck};
use crate::CliError;

/// Tolerances of the `verify` checks.
pub const CROSS_METHOD_TOL: f64 = 1e-6;
pub const RESIDUAL_EXCESS_TOL: f64 = 1e-8;
pub const QUADRATURE_TOL: f64 = 1e-5;
pub const THIRD_COLUMN_TOL: f64 = 1e-10;
const QUADRATURE_SAMPLES: usize = 20;

/// Largest tolerated share of non-finite paths.
pub const NON_FINITE_SHARE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
}

struct Solved {
    mat: SystemMatrices,
    grid: TimeGrid,
    riccati: RiccatiGrid,
    offset: OffsetGrid,
    validation: ValidationReport,
}

fn validated(p: &ModelParams) -> Result<ValidationReport, CliError> {
    let report = validate_params(p);
    for c in report.concavity_failures() {
        eprintln!("warning: {}", c.message);
    }
    Ok(report.clone().into_result().map(|_| report)?)
}

fn solve_all(params: &ModelParams, n_steps: usize) -> Result<Solved, CliError> {
    let validation = validated(params)?;
    let mat = assemble_matrices(params)?;
    let grid = TimeGrid::new(params.horizon, n_steps)?;
    let riccati = solve_riccati(params, &grid)?;
    let offset = solve_offset_odes(&riccati, params, &mat, &grid)?;
    Ok(Solved {
        mat,
        grid,
        riccati,
        offset,
        validation,
    })
}

fn preamble(cfg: &ExperimentConfig) -> Vec<String> {
    vec![
        format!("config: {}", cfg.to_json_line()),
        format!("seed: {}", cfg.run.seed),
    ]
}

/// `{"config": …, "seed": …}` followed by the fields of `payload`.
fn document(cfg: &ExperimentConfig, payload: impl Serialize) -> Value {
    let mut doc = serde_json::Map::new();
    doc.insert("config".into(), cfg.to_value());
    doc.insert("seed".into(), json!(cfg.run.seed));
    match serde_json::to_value(payload).expect("payload serializes") {
        Value::Object(m) => doc.extend(m),
        other => {
            doc.insert("value".into(), other);
        }
    }
    Value::Object(doc)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn write_json(dir: &Path, name: &str, doc: &Value) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(doc).expect("document serializes");
    text.push('\n');
    write_file(dir, name, &text)
}

fn write_solve_artifacts(
    cfg: &ExperimentConfig,
    solved: &Solved,
    dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let pre = preamble(cfg);
    let bound = existence_bound(&cfg.params)?;
    let warnings: Vec<&str> = solved
        .validation
        .concavity_failures()
        .map(|c| c.message.as_str())
        .collect();
    Ok(vec![
        write_file(dir, "riccati.csv", &solved.riccati.to_csv(&pre))?,
        write_file(dir, "offset.csv", &solved.offset.to_csv(&pre))?,
        write_json(
            dir,
            "bound_report.json",
            &document(
                cfg,
                json!({ "bound": bound, "validation": solved.validation, "warnings": warnings }),
            ),
        )?,
        write_json(
            dir,
            "conditions.json",
            &document(cfg, verify_freiling_conditions(&solved.mat)),
        )?,
    ])
}

/// Solve the Riccati and offset equations and write `riccati.csv`,
/// `offset.csv`, `bound_report.json` and `conditions.json`.
pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let solved = solve_all(&cfg.params, cfg.run.n_steps)?;
    let files = write_solve_artifacts(cfg, &solved, &cfg.run.outputs)?;
    Ok(Outcome {
        exit_code: 0,
        files,
    })
}

fn paths_csv(cfg: &ExperimentConfig, samples: &[PathBundle]) -> String {
    let mut out = String::new();
    for line in preamble(cfg) {
        out.push_str("# ");
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str(&PathBundle::csv_header(true));
    out.push('\n');
    for (i, pb) in samples.iter().enumerate() {
        pb.write_csv_rows(&mut out, Some(i as u64));
    }
    out
}

struct Simulated {
    files: Vec<PathBuf>,
    band_width_mid: BTreeMap<String, f64>,
    n_non_finite: usize,
}

fn simulate_into(cfg: &ExperimentConfig, dir: &Path) -> Result<Simulated, CliError> {
    let solved = solve_all(&cfg.params, cfg.run.n_steps)?;
    let mut files = write_solve_artifacts(cfg, &solved, dir)?;
    let ctx = SimContext::new(&cfg.params, &solved.riccati, &solved.offset, cfg.run.seed)?;
    let out = simulate_equilibrium(&ctx, &cfg.sim_options())?;
    let report = &out.report;
    files.push(write_json(dir, "report.json", &document(cfg, report))?);
    files.push(write_file(
        dir,
        "quantile_bands.csv",
        &report.bands_csv(&preamble(cfg)),
    )?);
    if !out.samples.is_empty() {
        files.push(write_file(dir, "paths.csv", &paths_csv(cfg, &out.samples))?);
    }
    if report.n_non_finite as f64 > NON_FINITE_SHARE * report.n_paths as f64 {
        return Err(CliError::Numerical(format!(
            "{} of {} paths produced non-finite values",
            report.n_non_finite, report.n_paths
        )));
    }
    let mid = 0.5 * cfg.params.horizon;
    let band_width_mid = report
        .bands
        .iter()
        .map(|b| (b.process.clone(), b.width_at(mid)))
        .collect();
    debug_assert_eq!(solved.grid.n_steps(), report.n_steps);
    Ok(Simulated {
        files,
        band_width_mid,
        n_non_finite: report.n_non_finite,
    })
}

/// Solve, simulate the equilibrium and write `report.json`,
/// `quantile_bands.csv` and, when sample paths are requested, `paths.csv`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let sim = simulate_into(cfg, &cfg.run.outputs)?;
    Ok(Outcome {
        exit_code: 0,
        files: sim.files,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub directory: PathBuf,
    pub ok: bool,
    pub error: Option<String>,
    pub n_non_finite: usize,
    /// 5–95% band width of each logged process at half the horizon.
    pub band_width_mid: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub parameter: String,
    pub points: Vec<SweepPoint>,
}

/// Run `simulate` once per sweep value, each into its own subdirectory, and
/// write `sweep_summary.json`. Failing points are recorded and the sweep
/// continues.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepSummary, CliError> {
    let sweep = cfg
        .run
        .sweep
        .clone()
        .ok_or_else(|| CliError::Config("`sweep` is not set in the config".into()))?;
    let mut points = Vec::with_capacity(sweep.values.len());
    for &value in &sweep.values {
        let mut point_cfg = cfg.clone();
        point_cfg.params.set(&sweep.parameter, value)?;
        point_cfg.run.sweep = None;
        let dir = cfg
            .run
            .outputs
            .join(format!("{}_{}", sweep.parameter, value));
        point_cfg.run.outputs = dir.clone();
        let point = match simulate_into(&point_cfg, &dir) {
            Ok(sim) => SweepPoint {
                value,
                directory: dir,
                ok: true,
                error: None,
                n_non_finite: sim.n_non_finite,
                band_width_mid: sim.band_width_mid,
            },
            Err(e @ CliError::Numerical(_)) => {
                eprintln!("{} = {value}: {e}", sweep.parameter);
                SweepPoint {
                    value,
                    directory: dir,
                    ok: false,
                    error: Some(e.to_string()),
                    n_non_finite: 0,
                    band_width_mid: BTreeMap::new(),
                }
            }
            Err(e) => return Err(e),
        };
        points.push(point);
    }
    let summary = SweepSummary {
        parameter: sweep.parameter,
        points,
    };
    write_json(
        &cfg.run.outputs,
        "sweep_summary.json",
        &document(cfg, &summary),
    )?;
    Ok(summary)
}

/// [`run_sweep`]; exit code 3 when any point failed numerically.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let summary = run_sweep(cfg)?;
    let mut files = vec![cfg.run.outputs.join("sweep_summary.json")];
    files.extend(summary.points.iter().map(|p| p.directory.clone()));
    let failed = summary.points.iter().any(|p| !p.ok);
    Ok(Outcome {
        exit_code: if failed { 3 } else { 0 },
        files,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<VerificationEntry>,
    pub all_pass: bool,
}

fn entry(check: &str, statistic: f64, pass: bool) -> VerificationEntry {
    VerificationEntry {
        check: check.to_string(),
        statistic,
        standard_error: None,
        pass,
    }
}

fn max_entry_gap(x: &RiccatiGrid, y: &RiccatiGrid) -> f64 {
    x.matrices()
        .iter()
        .zip(y.matrices())
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max)
}

fn riccati_checks(
    cfg: &ExperimentConfig,
    solved: &Solved,
    out: &mut Vec<VerificationEntry>,
) -> Result<(), CliError> {
    let (mat, grid, rg) = (&solved.mat, &solved.grid, &solved.riccati);
    let terminal = (rg.p(grid.n_steps()) - mat.g).amax();
    out.push(entry(
        "riccati_terminal_condition",
        terminal,
        terminal == 0.0,
    ));

    let cross = match (
        solve_riccati_direct(mat, grid),
        solve_riccati_linearized(mat, grid),
    ) {
        (Ok(d), Ok((l, _))) => max_entry_gap(&d, &l),
        (d, l) => {
            if let Err(e) = d {
                eprintln!("direct Riccati solver: {e}");
            }
            if let Err(e) = l {
                eprintln!("linearized Riccati solver: {e}");
            }
            f64::INFINITY
        }
    };
    out.push(entry(
        "riccati_cross_method",
        cross,
        cross <= CROSS_METHOD_TOL,
    ));

    // Residual of the stored solution against a fresh solve on the same grid.
    let stored = cfg.run.outputs.join("riccati.csv");
    let excess = if stored.exists() {
        let text = std::fs::read_to_string(&stored)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", stored.display())))?;
        match RiccatiGrid::from_csv(&text, mat) {
            Ok(loaded) => {
                let fresh = solve_riccati(&cfg.params, loaded.grid())?;
                residual_profile(&loaded, mat)
                    .iter()
                    .zip(residual_profile(&fresh, mat))
                    .map(|(l, f)| l - f)
                    .fold(0.0, f64::max)
            }
            Err(e) => {
                eprintln!("{}: {e}", stored.display());
                f64::INFINITY
            }
        }
    } else {
        0.0
    };
    out.push(entry(
        "riccati_residual_excess",
        excess,
        excess <= RESIDUAL_EXCESS_TOL,
    ));

    if cfg.params.decay_p == 0.0 {
        let col = rg
            .matrices()
            .iter()
            .map(|p| p.column(2).amax())
            .fold(0.0, f64::max);
        out.push(entry(
            "riccati_third_column_zero",
            col,
            col <= THIRD_COLUMN_TOL,
        ));
    }
    Ok(())
}

fn offset_checks(
    cfg: &ExperimentConfig,
    solved: &Solved,
    out: &mut Vec<VerificationEntry>,
) -> Result<(), CliError> {
    let grid = &solved.grid;
    let n = grid.n_steps();
    let terminal = solved.offset.coefficients(n).amax();
    out.push(entry("offset_terminal_zero", terminal, terminal == 0.0));

    let fs = build_fundamental_solution(&solved.riccati, &solved.mat);
    let mut rng = path_rng(cfg.run.seed, u64::MAX);
    let mut worst: f64 = 0.0;
    for _ in 0..QUADRATURE_SAMPLES {
        let k = rng.random_range(0..n);
        let alpha = rng.random_range(-1.0..1.0);
        let xi = rng.random_range(-50.0..50.0);
        let ode = solved.offset.ell(k, alpha, xi);
        let quad = ell_quadrature(&fs, grid.node(k), alpha, xi, &cfg.params)?;
        worst = worst.max((ode - quad).amax() / (1.0 + ode.amax()));
    }
    out.push(entry("offset_quadrature", worst, worst <= QUADRATURE_TOL));
    Ok(())
}

fn picard_checks(check: &PicardCheck, out: &mut Vec<VerificationEntry>) -> Result<(), CliError> {
    let p = &check.params;
    validated(p)?;
    let mat = assemble_matrices(p)?;
    let bound = existence_bound(p)?;
    let res = match picard_solve(&mat, p, &check.solver) {
        Ok(r) => r,
        Err(e @ equilibrium_core::Error::NoConvergence { .. }) => {
            eprintln!("picard: {e}");
            out.push(entry("picard_converged", f64::INFINITY, false));
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    out.push(entry("picard_converged", res.final_gap, true));
    // Contraction is only guaranteed inside the existence bound.
    out.push(entry(
        "picard_contraction",
        res.contraction_estimate,
        !bound.satisfied || res.contraction_estimate < 1.0,
    ));
    let cf = closed_form_trajectory(p, check.solver.n_steps)?;
    let worst = (0..cf.grid.len())
        .map(|k| {
            (cf.x[k] - res.x_path[k])
                .amax()
                .max((cf.y[k] - res.y_path[k]).amax())
        })
        .fold(0.0, f64::max);
    out.push(entry(
        "picard_vs_closed_form",
        worst,
        worst <= check.tolerance,
    ));
    Ok(())
}

/// Gâteaux checks for both players on `check.n_steps` steps, extrapolated
/// against a companion grid with half as many steps.
pub fn gateaux_entries(
    params: &ModelParams,
    check: &GateauxCheck,
    seed: u64,
) -> Result<Vec<VerificationEntry>, CliError> {
    let fine = TimeGrid::new(params.horizon, check.n_steps)?;
    let coarse = TimeGrid::new(params.horizon, check.n_steps / 2)?;
    let mat = assemble_matrices(params)?;
    let rg_f = solve_riccati(params, &fine)?;
    let off_f = solve_offset_odes(&rg_f, params, &mat, &fine)?;
    let rg_c = solve_riccati(params, &coarse)?;
    let off_c = solve_offset_odes(&rg_c, params, &mat, &coarse)?;
    let ens = EquilibriumEnsemble {
        ctx: SimContext::new(params, &rg_f, &off_f, seed)?,
        n_paths: check.n_paths,
        coarse: Some(SimContext::new(params, &rg_c, &off_c, seed)?),
    };
    let dirs = random_directions(check.n_directions, check.seed);
    let oracle = check.oracle_config();
    let mut out = Vec::new();
    for (reports, _) in [
        (gateaux_informed(&ens, &dirs, params, &oracle)?, "informed"),
        (gateaux_broker(&ens, &dirs, params, &oracle)?, "broker"),
    ] {
        for (i, r) in reports.iter().enumerate() {
            out.extend(r.entries(&format!("direction_{i}")));
        }
    }
    Ok(out)
}

/// Run every configured check and write `verify_report.json`.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<VerifyReport, CliError> {
    let solved = solve_all(&cfg.params, cfg.run.n_steps)?;
    let mut checks = Vec::new();
    riccati_checks(cfg, &solved, &mut checks)?;
    offset_checks(cfg, &solved, &mut checks)?;
    if let Some(p) = &cfg.run.picard {
        picard_checks(p, &mut checks)?;
    }
    if let Some(g) = &cfg.run.gateaux {
        checks.extend(gateaux_entries(&cfg.params, g, cfg.run.seed)?);
    }
    let all_pass = checks.iter().all(|c| c.pass);
    let report = VerifyReport { checks, all_pass };
    write_json(
        &cfg.run.outputs,
        "verify_report.json",
        &document(cfg, &report),
    )?;
    Ok(report)
}

/// [`run_verify`]; exit code 1 when any check fails.
pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let report = run_verify(cfg)?;
    for c in report.checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {} (statistic {:e})", c.check, c.statistic);
    }
    Ok(Outcome {
        exit_code: if report.all_pass { 0 } else { 1 },
        files: vec![cfg.run.outputs.join("verify_report.json")],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.run.n_steps = 200;
        cfg.run.n_paths = 40;
        cfg.run.n_sample_paths = 2;
        cfg.run.gateaux = None;
        cfg.run.outputs = dir.to_path_buf();
        cfg
    }

    #[test]
    fn solve_writes_self_describing_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let out = cmd_solve(&cfg).unwrap();
        assert_eq!(out.exit_code, 0);
        for f in &out.files {
            let text = std::fs::read_to_string(f).unwrap();
            assert!(text.contains("\"seed\""), "{}", f.display());
        }
        let bound: Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("bound_report.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(bound["bound"]["satisfied"], json!(false));
        assert!((bound["bound"]["norm_B"].as_f64().unwrap() - 1.618).abs() < 1e-3);
        assert_eq!(bound["config"], cfg.to_value());
        let csv = std::fs::read_to_string(dir.path().join("riccati.csv")).unwrap();
        assert!(csv.starts_with("# config: {"));
    }

    #[test]
    fn zero_noise_simulation_gives_zero_paths() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.params = cfg.params.without_noise();
        cmd_simulate(&cfg).unwrap();
        let text = std::fs::read_to_string(dir.path().join("paths.csv")).unwrap();
        let mut rows = 0;
        for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
            let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            // path id, t, alpha, xi, S, then the rest
            assert_eq!(vals[4], cfg.params.s0);
            for (j, v) in vals.iter().enumerate() {
                if j != 0 && j != 1 && j != 4 {
                    assert_eq!(*v, 0.0, "column {j}: {line}");
                }
            }
            rows += 1;
        }
        assert_eq!(rows, 2 * 201);
    }

    #[test]
    fn invalid_cost_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.params.a = 0.0;
        let err = cmd_solve(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("`a`"), "{err}");
    }

    #[test]
    fn sweep_writes_one_directory_per_value() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.run.sweep = Some(crate::Sweep {
            parameter: "decay_p".into(),
            values: vec![0.0, 4.0],
        });
        let out = cmd_sweep(&cfg).unwrap();
        assert_eq!(out.exit_code, 0);
        for sub in ["decay_p_0", "decay_p_4"] {
            assert!(dir.path().join(sub).join("quantile_bands.csv").exists());
        }
        assert!(dir.path().join("sweep_summary.json").exists());
    }
}
