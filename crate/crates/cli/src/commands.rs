//! Subcommand implementations. Every run writes a manifest listing the
//! config hash, seed, per-check outcomes and output files; a run repeated
//! with the same config and seed reproduces all numeric outputs byte for
//! byte (manifests carry no timestamps).

use std::path::{Path, PathBuf};

use afmech_core::affinity::{
    condition_operator, AffinityMap, CounterexampleAffinity, OmegaAffinity, RowLinearAffinity,
};
use afmech_core::integrate::{integrate_first_order, jacobi_reparametrize, Trajectory};
use afmech_core::io;
use afmech_core::labeling::{
    extract_labels, mane_analysis, objective_j, sflow_init, LabelingProblem,
};
use afmech_core::manifold::AssignmentMatrix;
use afmech_core::mechanics::{energy, euler_lagrange_residual, flow_field, potential, LagrangianState};
use afmech_core::verify;
use ndarray::Array2;
use rand::SeedableRng;
use serde::Serialize;

use crate::config::{AffinityConfig, CliError, Config, LoadedConfig, StartConfig};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct ManifestCheck {
    id: String,
    pass: bool,
    observed: String,
}

#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    config_hash: String,
    seed: u64,
    checks: Vec<ManifestCheck>,
    outputs: Vec<String>,
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<PathBuf, CliError> {
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| CliError::Run(e.to_string()))?;
    io::write_text(&path, &(text + "\n")).map_err(|e| CliError::Run(e.to_string()))?;
    Ok(path)
}

fn ensure_out(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))
}

/// The averaging matrix: loaded from file when configured, otherwise built
/// from the grid. A declared symmetry is verified either way.
fn build_averaging(cfg: &Config) -> Result<OmegaAffinity, CliError> {
    let declared = cfg.problem.omega_symmetric == Some(true);
    if let Some(file) = &cfg.omega_file {
        let path = Path::new(file);
        let mat = if path.extension().is_some_and(|e| e == "afm") {
            io::read_matrix_afm1(path)
        } else {
            io::read_matrix_csv(path)
        }
        .map_err(|e| CliError::Config(format!("{file}: {e}")))?;
        if mat.nrows() != cfg.problem.grid.node_count() {
            return Err(CliError::Config(format!(
                "averaging matrix from {file} has {} rows, grid has {} nodes",
                mat.nrows(),
                cfg.problem.grid.node_count()
            )));
        }
        OmegaAffinity::new_declared(mat, declared).map_err(|e| CliError::Config(e.to_string()))
    } else {
        let omega = afmech_core::labeling::build_omega(&cfg.problem.grid, &cfg.problem.weights)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if declared && !omega.is_symmetric() {
            return Err(CliError::Config(
                "declared symmetric but the built averaging matrix is not".into(),
            ));
        }
        Ok(omega)
    }
}

fn build_problem(cfg: &Config, omega: OmegaAffinity) -> Result<(LabelingProblem, Vec<usize>), CliError> {
    let dataset = afmech_core::labeling::synth_dataset(&afmech_core::labeling::DatasetSpec {
        height: cfg.problem.grid.height,
        width: cfg.problem.grid.width,
        labels: cfg.problem.labels,
        noise_sigma: cfg.problem.noise_sigma,
        seed: cfg.problem.seed,
    })
    .map_err(|e| CliError::Config(e.to_string()))?;
    Ok((
        LabelingProblem { graph: cfg.problem.grid.clone(), omega, data: dataset.data },
        dataset.ground_truth,
    ))
}

fn build_affinity(cfg: &Config, omega: &OmegaAffinity) -> Result<Box<dyn AffinityMap>, CliError> {
    match &cfg.affinity {
        AffinityConfig::Omega => Ok(Box::new(omega.clone())),
        AffinityConfig::Counterexample => CounterexampleAffinity::new(cfg.problem.labels)
            .map(|f| Box::new(f) as Box<dyn AffinityMap>)
            .map_err(|e| CliError::Config(e.to_string())),
        AffinityConfig::RowLinear(rows) => {
            let n = cfg.problem.labels;
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(CliError::Config(format!(
                    "row-linear affinity must be {n} x {n} to match the label count"
                )));
            }
            let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
            let mat = Array2::from_shape_vec((n, n), flat).expect("checked shape");
            RowLinearAffinity::new(mat)
                .map(|f| Box::new(f) as Box<dyn AffinityMap>)
                .map_err(|e| CliError::Config(e.to_string()))
        }
    }
}

fn resolve_start(
    cfg: &Config,
    omega: &OmegaAffinity,
    problem: &LabelingProblem,
) -> Result<AssignmentMatrix, CliError> {
    match &cfg.start {
        StartConfig::SflowInit => sflow_init(omega, &problem.data)
            .map(|st| st.s)
            .map_err(|e| CliError::Config(e.to_string())),
        StartConfig::Barycenter => Ok(AssignmentMatrix::barycenter(
            cfg.problem.grid.node_count(),
            cfg.problem.labels,
        )),
        StartConfig::Rows(rows) => {
            let m = cfg.problem.grid.node_count();
            let n = cfg.problem.labels;
            if rows.len() != m || rows.iter().any(|r| r.len() != n) {
                return Err(CliError::Config(format!("start rows must form an {m} x {n} matrix")));
            }
            let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
            AssignmentMatrix::new(Array2::from_shape_vec((m, n), flat).expect("checked shape"))
                .map_err(|e| CliError::Config(e.to_string()))
        }
    }
}

fn uniform_prefix_len(times: &[f64]) -> usize {
    if times.len() < 2 {
        return times.len();
    }
    let h = times[1] - times[0];
    let mut len = 2;
    while len < times.len() {
        let d = times[len] - times[len - 1];
        if (d - h).abs() > 1e-9 * h.max(1.0) {
            break;
        }
        len += 1;
    }
    len
}

/// Per-sample diagnostics CSV: time, energy, potential, objective, metric
/// speed, Euler-Lagrange residual, condition norm and Jacobi speed. Residuals
/// need a uniform sampling grid, so they cover the uniform prefix of the
/// recording and are blank (NaN) past it; the Jacobi column is NaN whenever
/// the trajectory touches the critical set.
fn write_diagnostics(
    path: &Path,
    f: &dyn AffinityMap,
    omega_for_objective: Option<&Array2<f64>>,
    traj: &Trajectory,
) -> Result<(), CliError> {
    let run = |msg: afmech_core::AfError| CliError::Run(msg.to_string());
    let k = traj.states.len();
    let prefix = uniform_prefix_len(&traj.times);
    let residuals = if prefix >= 3 {
        let h = traj.times[1] - traj.times[0];
        Some(euler_lagrange_residual(f, &traj.states[..prefix], h).map_err(run)?)
    } else {
        None
    };
    let speeds = if prefix >= 3 {
        let sub = Trajectory {
            times: traj.times[..prefix].to_vec(),
            states: traj.states[..prefix].to_vec(),
            velocities: None,
            converged: traj.converged,
            floor_activations: traj.floor_activations,
        };
        jacobi_reparametrize(f, &sub).ok().map(|j| j.h0_speeds)
    } else {
        None
    };

    let mut text =
        String::from("t,energy,g_potential,j_objective,wdot_g_norm,el_residual,condition_norm,h0_speed\n");
    for i in 0..k {
        let w = &traj.states[i];
        let v = flow_field(f, w).map_err(run)?;
        let state = LagrangianState::new(w.clone(), v.clone()).map_err(run)?;
        let e = energy(f, &state).map_err(run)?;
        let g = potential(f, w).value;
        let j = omega_for_objective
            .map(|om| objective_j(om, w.as_array()).value)
            .unwrap_or(f64::NAN);
        let speed_sq = afmech_core::manifold::fisher_rao_norm_sq(w, &v).map_err(run)?;
        let el = residuals
            .as_ref()
            .and_then(|r| r.get(i))
            .map(|s| s.residual)
            .unwrap_or(f64::NAN);
        let cond = condition_operator(f, w).map_err(run)?.norm_frobenius();
        let h0 = speeds.as_ref().and_then(|s| s.get(i)).cloned().unwrap_or(f64::NAN);
        let fields = [traj.times[i], e, g, j, speed_sq.sqrt(), el, cond, h0];
        let line: Vec<String> = fields.iter().map(|&x| io::fmt_f64(x)).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    io::write_text(path, &text).map_err(|e| CliError::Run(e.to_string()))
}

pub fn cmd_label(loaded: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let cfg = &loaded.config;
    if !matches!(cfg.affinity, AffinityConfig::Omega) {
        return Err(CliError::Config(
            "the labeling pipeline runs on the averaging affinity; use `trace` for other flows".into(),
        ));
    }
    let omega = build_averaging(cfg)?;
    let (problem, ground_truth) = build_problem(cfg, omega)?;
    let init = sflow_init(&problem.omega, &problem.data)
        .map_err(|e| CliError::Config(e.to_string()))?;
    ensure_out(out)?;
    let traj = afmech_core::labeling::sflow_run(&init, &problem.omega, &cfg.problem.integrator)
        .map_err(|e| CliError::Run(e.to_string()))?;
    let final_state = traj.final_state();
    let labeling = extract_labels(&final_state.w, cfg.problem.integrator.eps_conv);
    let correct = labeling
        .labels
        .iter()
        .zip(ground_truth.iter())
        .filter(|(a, b)| a == b)
        .count();
    let accuracy = correct as f64 / ground_truth.len() as f64;

    let run = |e: afmech_core::AfError| CliError::Run(e.to_string());
    io::write_pgm(
        &out.join("labels.pgm"),
        &labeling.labels,
        problem.graph.width,
        problem.graph.height,
        cfg.problem.labels - 1,
    )
    .map_err(run)?;
    io::write_matrix_afm1(&out.join("assignments_s.afm"), final_state.s.as_array()).map_err(run)?;
    io::write_matrix_afm1(&out.join("assignments_w.afm"), final_state.w.as_array()).map_err(run)?;
    write_diagnostics(
        &out.join("diagnostics.csv"),
        &problem.omega,
        Some(problem.omega.omega()),
        &traj.s_trajectory(),
    )?;

    let manifest = RunManifest {
        tool: "afmech",
        version: VERSION,
        command: "label".into(),
        config_hash: loaded.hash.clone(),
        seed: cfg.problem.seed,
        checks: vec![
            ManifestCheck {
                id: "converged".into(),
                pass: traj.converged,
                observed: format!(
                    "{} samples to t = {:.6}, confidence {:.6}",
                    traj.times.len(),
                    traj.times.last().unwrap(),
                    labeling.confidence
                ),
            },
            ManifestCheck {
                id: "ground-truth-accuracy".into(),
                pass: accuracy == 1.0,
                observed: format!("{accuracy:.6}"),
            },
        ],
        outputs: vec![
            "labels.pgm".into(),
            "assignments_s.afm".into(),
            "assignments_w.afm".into(),
            "diagnostics.csv".into(),
            "manifest.json".into(),
        ],
    };
    write_manifest(out, &manifest)?;
    println!(
        "label: accuracy {accuracy:.4}, converged {}, outputs in {}",
        traj.converged,
        out.display()
    );
    Ok(())
}

pub fn cmd_trace(loaded: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let omega = build_averaging(cfg)?;
    let (problem, _) = build_problem(cfg, omega)?;
    let affinity = build_affinity(cfg, &problem.omega)?;
    let start = resolve_start(cfg, &problem.omega, &problem)?;
    ensure_out(out)?;
    let traj = integrate_first_order(affinity.as_ref(), &start, &cfg.problem.integrator)
        .map_err(|e| CliError::Run(e.to_string()))?;
    let objective_omega = matches!(cfg.affinity, AffinityConfig::Omega)
        .then(|| problem.omega.omega().clone());
    write_diagnostics(
        &out.join("trace.csv"),
        affinity.as_ref(),
        objective_omega.as_ref(),
        &traj,
    )?;
    let run = |e: afmech_core::AfError| CliError::Run(e.to_string());
    io::write_trajectory_csv(&out.join("trajectory.csv"), &traj.times, &traj.states)
        .map_err(run)?;
    io::write_trajectory_afm1(&out.join("states"), &traj.states).map_err(run)?;
    let manifest = RunManifest {
        tool: "afmech",
        version: VERSION,
        command: "trace".into(),
        config_hash: loaded.hash.clone(),
        seed: cfg.problem.seed,
        checks: vec![ManifestCheck {
            id: "converged".into(),
            pass: traj.converged,
            observed: format!("{} samples, {} floored entries", traj.times.len(), traj.floor_activations),
        }],
        outputs: vec![
            "trace.csv".into(),
            "trajectory.csv".into(),
            format!("states/ ({} samples)", traj.states.len()),
            "manifest.json".into(),
        ],
    };
    write_manifest(out, &manifest)?;
    println!("trace: {} samples written to {}", traj.times.len(), out.display());
    Ok(())
}

pub fn cmd_mane(loaded: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let omega = build_averaging(cfg)?;
    let (problem, _) = build_problem(cfg, omega)?;
    let query = resolve_start(cfg, &problem.omega, &problem)?;
    ensure_out(out)?;
    let report = mane_analysis(problem.omega.omega(), cfg.problem.labels, Some(&query))
        .map_err(|e| CliError::Run(e.to_string()))?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Run(e.to_string()))?;
    io::write_text(&out.join("mane.json"), &(text + "\n"))
        .map_err(|e| CliError::Run(e.to_string()))?;
    let mut outputs = vec!["mane.json".to_string(), "manifest.json".to_string()];

    // For a non-averaging affinity the rank of the projected differential may
    // vary with the state; report it sampled at the query and a few random
    // states (constancy cannot be certified numerically).
    if !matches!(cfg.affinity, AffinityConfig::Omega) {
        let affinity = build_affinity(cfg, &problem.omega)?;
        let mut samples = vec![query.clone()];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.problem.seed ^ 0x7a);
        for _ in 0..4 {
            samples.push(verify::random_state(
                &mut rng,
                cfg.problem.grid.node_count(),
                cfg.problem.labels,
            ));
        }
        let ranks: Vec<usize> = samples
            .iter()
            .map(|w| afmech_core::labeling::projected_differential_rank(affinity.as_ref(), w))
            .collect::<afmech_core::Result<_>>()
            .map_err(|e| CliError::Run(e.to_string()))?;
        let text = serde_json::to_string_pretty(&serde_json::json!({
            "sampled_ranks": ranks,
            "note": "ranks of the projected affinity differential at the query state \
                     and 4 random states; constancy is not certified",
        }))
        .map_err(|e| CliError::Run(e.to_string()))?;
        io::write_text(&out.join("affinity_ranks.json"), &(text + "\n"))
            .map_err(|e| CliError::Run(e.to_string()))?;
        outputs.insert(1, "affinity_ranks.json".into());
    }

    let manifest = RunManifest {
        tool: "afmech",
        version: VERSION,
        command: "mane".into(),
        config_hash: loaded.hash.clone(),
        seed: cfg.problem.seed,
        checks: vec![ManifestCheck {
            id: "kernel-dims-consistent".into(),
            pass: report.dim_sigma_brute == report.dim_sigma_formula,
            observed: format!(
                "dim ker = {}, slice dim = {}, rank = {}",
                report.dim_ker_omega, report.dim_sigma_brute, report.differential_rank
            ),
        }],
        outputs,
    };
    write_manifest(out, &manifest)?;
    println!(
        "mane: kernel dim {}, slice dim {}, report in {}",
        report.dim_ker_omega,
        report.dim_sigma_brute,
        out.display()
    );
    Ok(())
}

pub fn cmd_verify(
    suite_name: &str,
    seed: u64,
    threads: Option<usize>,
    out: Option<&Path>,
    config_hash: Option<String>,
) -> Result<(), CliError> {
    let checks = verify::suite_checks(suite_name).ok_or_else(|| {
        CliError::Config(format!(
            "unknown suite {suite_name:?}; expected one of {:?}",
            verify::SUITE_NAMES
        ))
    })?;
    let results: Vec<verify::CheckResult> = if let Some(n) = threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?;
        pool.install(|| {
            use rayon::prelude::*;
            checks.par_iter().map(|f| f(seed)).collect()
        })
    } else {
        checks.iter().map(|f| f(seed)).collect()
    };

    for r in &results {
        println!(
            "{} {:28} {} ({:.2}s)",
            if r.pass { "PASS" } else { "FAIL" },
            r.id,
            r.observed,
            r.runtime_s
        );
    }
    let failed: Vec<&verify::CheckResult> = results.iter().filter(|r| !r.pass).collect();
    println!("{}/{} checks passed", results.len() - failed.len(), results.len());

    if let Some(out) = out {
        ensure_out(out)?;
        let text =
            serde_json::to_string_pretty(&results).map_err(|e| CliError::Run(e.to_string()))?;
        io::write_text(&out.join("verify_report.json"), &(text + "\n"))
            .map_err(|e| CliError::Run(e.to_string()))?;
        let manifest = RunManifest {
            tool: "afmech",
            version: VERSION,
            command: format!("verify {suite_name}"),
            config_hash: config_hash.unwrap_or_default(),
            seed,
            checks: results
                .iter()
                .map(|r| ManifestCheck {
                    id: r.id.clone(),
                    pass: r.pass,
                    observed: r.observed.clone(),
                })
                .collect(),
            outputs: vec!["verify_report.json".into(), "manifest.json".into()],
        };
        write_manifest(out, &manifest)?;
    }

    if failed.is_empty() {
        Ok(())
    } else {
        for r in &failed {
            eprintln!("failed: {}: {}", r.id, r.observed);
        }
        Err(CliError::ChecksFailed(failed.len()))
    }
}
