use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ddsim::analysis::{fit_decay, sweep_csv, sweep_t2_vs_tauc, DecayCurve, DecayModel, SweepConfig};
use ddsim::ensemble::{result_json, simulate, trajectory_csv};
use ddsim::hamiltonian::{find_critical_point, grid_minimum};
use ddsim::tomography::{ptm_csv, run_process_tomography, tomography_json, tomography_series};
use nalgebra::Vector3;
use serde_json::{json, Value};

use crate::config::{self, Loaded, Need, SequenceConfig};
use crate::CliError;

pub const SUMMARY_HEADER: &str = "n_cycles,duration_s,process_fidelity,average_gate_fidelity,ptm_xx,ptm_yy,ptm_zz";

/// Options shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub validate_only: bool,
}

/// Writes `contents` to `dir/name` through a temporary file in `dir`.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let fail = |e: std::io::Error| CliError::Run(format!("writing {}: {e}", dir.join(name).display()));
    std::fs::create_dir_all(dir).map_err(fail)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents.as_bytes()).map_err(fail)?;
    tmp.flush().map_err(fail)?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| fail(e.error))?;
    Ok(path)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn run_err(e: ddsim::Error) -> CliError {
    CliError::Run(e.to_string())
}

fn load(path: &Path, common: &Common, needs: &[Need]) -> Result<Option<Loaded>, CliError> {
    let loaded = config::load(path, common.seed, needs)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    if common.validate_only {
        println!("{}: ok", path.display());
        return Ok(None);
    }
    Ok(Some(loaded))
}

pub fn cmd_validate(path: &Path, common: &Common) -> Result<(), CliError> {
    let common = Common {
        validate_only: true,
        ..common.clone()
    };
    load(path, &common, &[]).map(|_| ())
}

pub fn cmd_simulate(path: &Path, common: &Common) -> Result<(), CliError> {
    let Some(l) = load(path, common, &[Need::Sequence, Need::Ensemble])? else {
        return Ok(());
    };
    let cfg = &l.config;
    let program = cfg.program().map_err(|e| CliError::config(format!("sequence: {e}")))?;
    let result = simulate(&program, &cfg.context(), cfg.initial()).map_err(run_err)?;
    write_atomic(&common.out_dir, "trajectory.csv", &trajectory_csv(&result))?;
    write_atomic(&common.out_dir, "result.json", &pretty(&result_json(&result, &l.raw)))?;
    println!("duration_s: {:.6}", result.duration);
    println!("members: {}", result.members);
    for (label, e) in result.acquire_table() {
        println!("acquire {label}: magnitude {:.6} phase_rad {:.6}", e.magnitude, e.phase);
    }
    if result.acquisitions.is_empty() {
        let m = result.final_mean;
        println!("final mean: ({:.6}, {:.6}, {:.6})", m.x, m.y, m.z);
    }
    Ok(())
}

pub fn cmd_tomography(path: &Path, n_list: Option<&str>, common: &Common) -> Result<(), CliError> {
    let n_override = n_list.map(config::parse_n_list).transpose()?;
    let Some(l) = load(path, common, &[Need::Sequence, Need::Ensemble])? else {
        return Ok(());
    };
    let cfg = &l.config;
    let ctx = cfg.context();
    let meta = |n: Option<u32>, duration: f64| json!({"n_cycles": n, "duration_s": duration, "config": l.raw});
    let params = match &cfg.sequence {
        Some(SequenceConfig::Bangbang(p)) => *p,
        _ => {
            if n_override.is_some() || cfg.tomography.is_some() {
                return Err(CliError::config("tomography: a cycle list needs a bangbang sequence".into()));
            }
            let program = cfg.program().map_err(run_err)?;
            let r = run_process_tomography(&program, &ctx).map_err(run_err)?;
            let duration = program.strip_preparation().duration();
            write_atomic(&common.out_dir, "tomography.json", &pretty(&tomography_json(&r, meta(None, duration))))?;
            write_atomic(&common.out_dir, "tomography.csv", &ptm_csv(&r.ptm))?;
            println!("process_fidelity: {:.6}", r.fidelity);
            return Ok(());
        }
    };
    let n_list = n_override
        .or_else(|| cfg.tomography.as_ref().map(|t| t.n_cycles.clone()))
        .unwrap_or_else(|| vec![params.n_cycles]);
    let series = tomography_series(&params, cfg.pulses, &n_list, &ctx).map_err(run_err)?;
    let mut summary = format!("{SUMMARY_HEADER}\n");
    println!("{:>8} {:>12} {:>10} {:>10} {:>10} {:>10}", "n_cycles", "duration_s", "fidelity", "ptm_xx", "ptm_yy", "ptm_zz");
    for p in &series {
        let r = &p.result;
        let doc = tomography_json(r, meta(Some(p.n_cycles), p.duration));
        write_atomic(&common.out_dir, &format!("tomography_n{}.json", p.n_cycles), &pretty(&doc))?;
        write_atomic(&common.out_dir, &format!("tomography_n{}.csv", p.n_cycles), &ptm_csv(&r.ptm))?;
        let _ = writeln!(
            summary,
            "{},{:?},{:?},{:?},{:?},{:?},{:?}",
            p.n_cycles,
            p.duration,
            r.fidelity,
            r.average_gate_fidelity,
            r.ptm.xx(),
            r.ptm.yy(),
            r.ptm.zz()
        );
        println!(
            "{:>8} {:>12.6} {:>10.3} {:>10.4} {:>10.4} {:>10.4}",
            p.n_cycles,
            p.duration,
            r.fidelity,
            r.ptm.xx(),
            r.ptm.yy(),
            r.ptm.zz()
        );
    }
    write_atomic(&common.out_dir, "tomography_summary.csv", &summary)?;
    Ok(())
}

pub fn cmd_sweep(path: &Path, common: &Common) -> Result<(), CliError> {
    let Some(l) = load(path, common, &[Need::Ensemble, Need::Sweep])? else {
        return Ok(());
    };
    let cfg = &l.config;
    let s = cfg.sweep.as_ref().expect("validated sweep");
    let sweep_cfg = SweepConfig {
        tau1: s.tau1,
        total_time: s.total_time,
        pulses: cfg.pulses,
        simulation: cfg.context(),
    };
    let rows = sweep_t2_vs_tauc(&s.tau_c_list, &sweep_cfg).map_err(run_err)?;
    write_atomic(&common.out_dir, "sweep.csv", &sweep_csv(&rows))?;
    let doc = json!({"schema_version": 1, "config": l.raw, "rows": rows});
    write_atomic(&common.out_dir, "sweep.json", &pretty(&doc))?;
    for r in &rows {
        let t2 = match r.t2 {
            Some(t) if t.is_infinite() => "inf".to_string(),
            Some(t) => format!("{t:.4}"),
            None => "-".to_string(),
        };
        println!("tau_c_s {:<10} t2_s {:<12} {:?} {}", r.tau_c, t2, r.status, r.message);
    }
    Ok(())
}

fn fmt_vec(v: &Vector3<f64>) -> String {
    format!("[{:.4}, {:.4}, {:.4}]", v.x, v.y, v.z)
}

pub fn cmd_critical_point(path: &Path, common: &Common) -> Result<(), CliError> {
    let Some(l) = load(path, common, &[Need::CriticalPoint])? else {
        return Ok(());
    };
    let cp_cfg = l.config.critical_point.as_ref().expect("validated section");
    let [i, j] = cp_cfg.transition;
    let b_init = Vector3::from(cp_cfg.b_init);
    let cp = find_critical_point(&cp_cfg.system, &b_init, i, j, &cp_cfg.options).map_err(run_err)?;
    let b = Vector3::from(cp.b_cp);
    println!("b_cp_g: {}", fmt_vec(&b));
    println!("frequency_hz: {:.3}", cp.frequency);
    println!(
        "residual_gradient_norm_hz_per_g: {:.3e} (tolerance {:.3e}, converged {})",
        cp.residual_gradient_norm, cp.tolerance, cp.converged
    );
    let mut doc = json!({"schema_version": 1, "config": l.raw, "critical_point": cp});
    if let Some(g) = &cp_cfg.grid_check {
        let center = g.center.map(Vector3::from).unwrap_or(b_init);
        let (gb, gnorm) = grid_minimum(&cp_cfg.system, &center, g.half_width, g.step, i, j).map_err(run_err)?;
        let distance = (gb - b).norm();
        println!("grid_minimum_g: {} (|grad| {:.3e} Hz/G)", fmt_vec(&gb), gnorm);
        println!("distance_to_grid_minimum_g: {distance:.4}");
        doc["grid_check"] = json!({
            "grid_minimum_g": [gb.x, gb.y, gb.z],
            "grid_gradient_norm_hz_per_g": gnorm,
            "distance_g": distance,
        });
    }
    write_atomic(&common.out_dir, "critical_point.json", &pretty(&doc))?;
    if !cp.converged {
        return Err(CliError::Run(format!(
            "no start reached the tolerance; best residual {:.3e} Hz/G",
            cp.residual_gradient_norm
        )));
    }
    Ok(())
}

pub fn cmd_fit(data: &Path, model: &str, common: &Common) -> Result<(), CliError> {
    let model: DecayModel = model.parse().map_err(|e: ddsim::Error| CliError::config(e.to_string()))?;
    let curve = DecayCurve::read_csv(data).map_err(|e| CliError::config(e.to_string()))?;
    if common.validate_only {
        println!("{}: ok ({} points)", data.display(), curve.len());
        return Ok(());
    }
    let fit = fit_decay(&curve, model).map_err(run_err)?;
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    for p in &fit.parameters {
        println!("{}={:.6} ± {:.3e}", p.name, p.value, p.sigma);
    }
    println!("residual_norm={:.3e}", fit.residual_norm);
    if let Some(t) = fit.one_over_e {
        println!("one_over_e_s={t:.6}");
    }
    let doc = json!({"schema_version": 1, "data": data.display().to_string(), "fit": fit});
    write_atomic(&common.out_dir, "fit.json", &pretty(&doc))?;
    Ok(())
}
