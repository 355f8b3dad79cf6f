//! Experiment runner: TOML specs in, CSV/JSON artifacts plus a hashed
//! manifest out. Identical spec + seed produces bit-identical CSV output.

pub mod manifest;
pub mod spec;

use anyhow::{bail, Context, Result};
use nssteer_core::control::{run_staircase, SteeringProblem};
use nssteer_core::flow::{integrate_flow_path_threaded, stability_probe, FlowMap};
use nssteer_core::fourier::{sobolev_norm, to_snapshot_json, TrigField};
use nssteer_core::isotopy::build_isotopy;
use nssteer_core::lattice::{
    grow_ladder, integer_span_membership, is_generator, parity_witness, LatticeSet,
};
use nssteer_core::nse::{lipschitz_probe, solve, PerturbSlot};
use nssteer_core::rng::Rng;
use nssteer_core::saturation::{builtin_certificate, ladder, verify_certificate, SaturationCertificate};
use nssteer_core::signal::ControlSignal;
use nssteer_core::space::ModeSpace;
use spec::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Process exit status of an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    /// All artifacts written, budgets met.
    Ok,
    /// Partial result: the error budget was not met at the configured caps.
    BudgetFailure,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::BudgetFailure => 2,
        }
    }
}

fn log_enabled(level: &str) -> bool {
    match std::env::var("NS_STEER_LOG") {
        Ok(v) => match v.as_str() {
            "debug" => true,
            "info" => level == "info",
            _ => false,
        },
        Err(_) => false,
    }
}

pub fn log_info(msg: impl AsRef<str>) {
    if log_enabled("info") {
        eprintln!("[nssteer] {}", msg.as_ref());
    }
}

/// Dispatches a parsed experiment spec. Artifacts land in `out_dir`; the
/// manifest lists each with its content hash.
pub fn run_spec(
    spec: &ExperimentSpec,
    out_dir: &Path,
    spec_source: &str,
    seed_override: Option<u64>,
    threads: usize,
) -> Result<RunStatus> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let seed = seed_override.unwrap_or(spec.seed());
    let started = std::time::Instant::now();
    let mut writer = manifest::ArtifactWriter::new(out_dir.to_path_buf());
    let status = match spec {
        ExperimentSpec::Saturate(s) => run_saturate(s, &mut writer)?,
        ExperimentSpec::VerifyCertificate(s) => run_verify(s, &mut writer)?,
        ExperimentSpec::Simulate(s) => run_simulate(s, seed, &mut writer)?,
        ExperimentSpec::Flow(s) => run_flow(s, seed, threads, &mut writer)?,
        ExperimentSpec::Steer(s) => run_steer(s, seed, &mut writer)?,
        ExperimentSpec::StabilityProbe(s) => run_stability(s, seed, &mut writer)?,
        ExperimentSpec::LipschitzProbe(s) => run_lipschitz(s, seed, &mut writer)?,
    };
    writer.finish(spec.kind_name(), spec_source, seed, threads, started.elapsed())?;
    Ok(status)
}

fn resolve_space(space: &SpaceSpec) -> Result<ModeSpace> {
    Ok(match space {
        SpaceSpec::Named(name) => match name.as_str() {
            "e12" => ModeSpace::from_lattice(&LatticeSet::standard_basis()),
            "lavt8" => ModeSpace::two_component_eight_dim(),
            "lsdfavt6" => ModeSpace::six_dim_projected(),
            "lsdfavt6-raw" => ModeSpace::six_dim_raw(),
            other => bail!("unknown space name {other:?}; expected e12, lavt8, lsdfavt6, or lsdfavt6-raw"),
        },
        SpaceSpec::Lattice { vectors } => {
            ModeSpace::from_lattice(&LatticeSet::new(vectors.iter().copied()))
        }
    })
}

fn resolve_field(field: &FieldSpec, rng: &mut Rng, space: Option<&ModeSpace>) -> Result<TrigField> {
    Ok(match field {
        FieldSpec::Zero => TrigField::zero(),
        FieldSpec::Random { radius, amplitude, sobolev_norm: target } => {
            let mut f = nssteer_core::sample::random_divfree(rng, *radius, *amplitude);
            if let Some((k, norm)) = target {
                let cur = sobolev_norm(&f, *k);
                if cur > 0.0 {
                    f = f.scaled(norm / cur);
                }
            }
            f
        }
        FieldSpec::RandomInSpan { amplitude, sobolev_norm: target } => {
            let space = space.context("random-in-span field needs a control space")?;
            let mut f = nssteer_core::sample::random_in_span(rng, space, *amplitude);
            if let Some((k, norm)) = target {
                let cur = sobolev_norm(&f, *k);
                if cur > 0.0 {
                    f = f.scaled(norm / cur);
                }
            }
            f
        }
        FieldSpec::Snapshot { path } => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading field snapshot {path}"))?;
            nssteer_core::fourier::from_snapshot_json(&text)?
        }
        FieldSpec::Basis { mode, kind } => match kind.as_str() {
            "cos" => TrigField::c_basis(*mode),
            "sin" => TrigField::s_basis(*mode),
            other => bail!("basis kind must be cos or sin, got {other:?}"),
        },
    })
}

// ---------------------------------------------------------------------------
// lattice subcommand (direct arguments, no spec file)
// ---------------------------------------------------------------------------

pub fn lattice_set_from_json(text: &str) -> Result<LatticeSet> {
    let vecs: Vec<[i64; 3]> = serde_json::from_str(text)
        .context("lattice sets are JSON arrays of integer triples, e.g. [[1,0,0],[0,1,0]]")?;
    Ok(LatticeSet::new(vecs))
}

pub fn lattice_is_generator(set_json: &str) -> Result<String> {
    let set = lattice_set_from_json(set_json)?;
    Ok(format!("{}", is_generator(&set)))
}

pub fn lattice_ladder(set_json: &str, depth: usize) -> Result<String> {
    let set = lattice_set_from_json(set_json)?;
    let grown = grow_ladder(&set, depth);
    Ok(serde_json::to_string(&grown)?)
}

pub fn lattice_member(set_json: &str, vector_json: &str) -> Result<String> {
    let set = lattice_set_from_json(set_json)?;
    let v: [i64; 3] = serde_json::from_str(vector_json).context("vector is a JSON integer triple")?;
    let member = integer_span_membership(&set, v);
    let mut out = format!("{member}");
    if !member {
        if let Some(w) = parity_witness(&set, v) {
            let _ = write!(
                out,
                "  (witness: <{:?}, k> = 0 mod {} for all k in the set, but not for {:?})",
                w.c, w.modulus, v
            );
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

fn run_saturate(s: &SaturateSpec, w: &mut manifest::ArtifactWriter) -> Result<RunStatus> {
    let space = resolve_space(&s.space)?;
    let lad = ladder(&space, s.depth, s.radius);
    let mut csv = String::from("depth,mx,my,mz,plane,reached_dim\n");
    for (depth, level) in lad.levels.iter().enumerate() {
        for mx in -s.radius..=s.radius {
            for my in -s.radius..=s.radius {
                for mz in -s.radius..=s.radius {
                    let m = [mx, my, mz];
                    if m == [0, 0, 0] || !nssteer_core::fourier::is_canonical(m) {
                        continue;
                    }
                    for (kind, label) in [
                        (nssteer_core::fourier::TrigKind::Cos, "cos"),
                        (nssteer_core::fourier::TrigKind::Sin, "sin"),
                    ] {
                        let dim = level.reached_dim(m, kind);
                        csv.push_str(&format!("{depth},{mx},{my},{mz},{label},{dim}\n"));
                    }
                }
            }
        }
    }
    w.write("saturate.csv", csv.as_bytes())?;
    let summary = serde_json::json!({
        "levels": lad.levels.iter().map(|l| l.dim()).collect::<Vec<_>>(),
        "stabilized_at": lad.stabilized_at,
        "covers_truncation": lad.top().covers_truncation(s.radius),
        "witnesses_per_step": lad.witnesses.iter().map(|x| x.len()).collect::<Vec<_>>(),
    });
    w.write("summary.json", serde_json::to_string_pretty(&summary)?.as_bytes())?;
    log_info(format!(
        "saturate: dims {:?}, covers radius-{} truncation: {}",
        lad.levels.iter().map(|l| l.dim()).collect::<Vec<_>>(),
        s.radius,
        lad.top().covers_truncation(s.radius)
    ));
    Ok(RunStatus::Ok)
}

fn run_verify(s: &VerifyCertificateSpec, w: &mut manifest::ArtifactWriter) -> Result<RunStatus> {
    let cert: SaturationCertificate = match (&s.builtin, &s.path) {
        (Some(name), None) => builtin_certificate(name)
            .with_context(|| format!("no builtin certificate named {name:?} (e12, lavt, lsdfavt)"))?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading certificate {path}"))?;
            serde_json::from_str(&text).context("parsing certificate JSON")?
        }
        _ => bail!("verify-certificate needs exactly one of `builtin` or `path`"),
    };
    let report = verify_certificate(&cert);
    w.write(
        "certificate-report.json",
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    let mut csv = String::from("step,residual,span_ok,pass,note\n");
    for step in &report.steps {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            step.index, step.residual, step.span_ok, step.pass, step.note
        ));
    }
    w.write("certificate-report.csv", csv.as_bytes())?;
    for step in &report.steps {
        log_info(format!(
            "step {}: residual {:.3e} span_ok {} -> {}",
            step.index,
            step.residual,
            step.span_ok,
            if step.pass { "pass" } else { "FAIL" }
        ));
    }
    if report.all_pass {
        Ok(RunStatus::Ok)
    } else {
        bail!("certificate {:?} failed verification", report.name)
    }
}

fn run_simulate(s: &SimulateSpec, seed: u64, w: &mut manifest::ArtifactWriter) -> Result<RunStatus> {
    s.config.validate()?;
    let mut rng = Rng::seed_from(seed);
    let u0 = resolve_field(&s.initial, &mut rng, None)?;
    let horizon = s.config.horizon;
    let h = match &s.fixed_force {
        Some(f) => ControlSignal::constant(horizon, resolve_field(f, &mut rng, None)?),
        None => ControlSignal::zero(horizon),
    };
    let eta = match &s.control {
        Some(f) => ControlSignal::constant(horizon, resolve_field(f, &mut rng, None)?),
        None => ControlSignal::zero(horizon),
    };
    let traj = solve(&u0, &h, &eta, None, &s.config)?;
    w.write("trajectory.csv", traj.to_csv_string().as_bytes())?;
    for (i, t) in s.checkpoints.iter().enumerate() {
        let idx = traj
            .times
            .iter()
            .position(|x| x >= t)
            .unwrap_or(traj.times.len() - 1);
        w.write(
            &format!("state-{i}.json"),
            to_snapshot_json(&traj.states[idx]).as_bytes(),
        )?;
    }
    let summary = serde_json::json!({
        "sup_hk": traj.sup_hk,
        "xk_norm": traj.xk_norm,
        "empirical_bilinear_c": traj.empirical_bilinear_c,
        "final_energy": traj.energy.last(),
    });
    w.write("summary.json", serde_json::to_string_pretty(&summary)?.as_bytes())?;
    Ok(RunStatus::Ok)
}

fn flow_csv(map: &FlowMap) -> String {
    let mut csv = String::from(
        "seed,px,py,pz,j11,j12,j13,j21,j22,j23,j31,j32,j33,det\n",
    );
    for (i, (p, j)) in map.positions.iter().zip(&map.jacobians).enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            p[0], p[1], p[2], j[0][0], j[0][1], j[0][2], j[1][0], j[1][1], j[1][2], j[2][0],
            j[2][1], j[2][2], nssteer_core::vec3::det3(j)
        ));
    }
    csv
}

fn run_flow(s: &FlowSpec, seed: u64, threads: usize, w: &mut manifest::ArtifactWriter) -> Result<RunStatus> {
    let mut rng = Rng::seed_from(seed);
    let iso = build_isotopy(s.target.clone())?;
    let field = match iso.as_trig_field() {
        Some(f) if s.advect_with_field.is_none() => f,
        _ => match &s.advect_with_field {
            Some(spec) => resolve_field(spec, &mut rng, None)?,
            None => bail!("multi-shear targets need the projection path; supply advect_with_field"),
        },
    };
    let record = if s.record_times.is_empty() {
        vec![s.horizon]
    } else {
        s.record_times.clone()
    };
    let maps = integrate_flow_path_threaded(&field, s.grid_res, &record, s.dt, threads);
    for (t, map) in &maps {
        w.write(&format!("flow-t{t}.csv"), flow_csv(map).as_bytes())?;
    }
    let final_map = &maps.last().unwrap().1;
    let summary = serde_json::json!({
        "max_det_deviation": final_map.max_det_deviation(),
        "target_reproduction_error": iso.verify_flow_reproduces_target(s.grid_res.min(4), s.dt),
    });
    w.write("summary.json", serde_json::to_string_pretty(&summary)?.as_bytes())?;
    Ok(RunStatus::Ok)
}

fn run_steer(s: &SteerSpec, seed: u64, w: &mut manifest::ArtifactWriter) -> Result<RunStatus> {
    s.config.validate()?;
    let space = resolve_space(&s.space)?;
    let mut rng = Rng::seed_from(seed);
    let u0 = resolve_field(&s.u0, &mut rng, Some(&space))?;
    let u1 = resolve_field(&s.u1, &mut rng, Some(&space))?;
    let h = match &s.fixed_force {
        Some(f) => ControlSignal::constant(s.config.horizon, resolve_field(f, &mut rng, Some(&space))?),
        None => ControlSignal::zero(s.config.horizon),
    };
    let problem = SteeringProblem {
        u0,
        u1,
        target: s.target.clone(),
        h,
        space,
        epsilon: s.epsilon,
        cfg: s.config.clone(),
        caps: s.caps.clone(),
        seed,
    };
    log_info(format!(
        "steer: eps = {}, space dim = {}, radius = {}",
        s.epsilon,
        problem.space.dim(),
        s.config.galerkin_radius
    ));
    let out = run_staircase(&problem)?;
    let trace = &out.trace;

    let mut csv = String::from("level,n,endpoint_error,relaxation_error,flow_error,xk_norm\n");
    for l in &trace.levels {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            l.level, l.n, l.endpoint_error, l.relaxation_error, l.flow_error, l.xk_norm
        ));
    }
    w.write("trace.csv", csv.as_bytes())?;
    w.write("summary.json", serde_json::to_string_pretty(trace)?.as_bytes())?;
    w.write(
        "control.json",
        serde_json::to_string_pretty(&out.control)?.as_bytes(),
    )?;
    log_info(format!(
        "steer: total error {:.4} vs eps {} -> budget_met = {}",
        trace.total_error, trace.epsilon, trace.budget_met
    ));
    if trace.budget_met {
        Ok(RunStatus::Ok)
    } else {
        Ok(RunStatus::BudgetFailure)
    }
}

fn run_stability(s: &StabilityProbeSpec, seed: u64, w: &mut manifest::ArtifactWriter) -> Result<RunStatus> {
    let mut rng = Rng::seed_from(seed);
    let base = resolve_field(&s.base, &mut rng, None)?;
    let bump = resolve_field(&s.bump, &mut rng, None)?;
    let report = stability_probe(
        &base,
        &bump,
        s.horizon,
        &s.oscillation_indices,
        s.lambda,
        s.grid_res,
        s.dt,
        s.sobolev_k,
    );
    let mut csv = String::from("n,relax_norm_diff,flow_c1_distance,sup_field_diff\n");
    for r in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.n, r.relax_norm_diff, r.flow_c1_distance, r.sup_field_diff
        ));
    }
    w.write("stability.csv", csv.as_bytes())?;
    w.write("summary.json", serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(RunStatus::Ok)
}

fn run_lipschitz(s: &LipschitzProbeSpec, seed: u64, w: &mut manifest::ArtifactWriter) -> Result<RunStatus> {
    s.config.validate()?;
    let mut rng = Rng::seed_from(seed);
    let u0 = resolve_field(&s.initial, &mut rng, None)?;
    let dir = resolve_field(&s.direction, &mut rng, None)?;
    let zero = ControlSignal::zero(s.config.horizon);
    let slot = match s.slot.as_str() {
        "initial-state" => PerturbSlot::InitialState,
        "control" => PerturbSlot::Control,
        other => bail!("perturbation slot must be initial-state or control, got {other:?}"),
    };
    let rows = lipschitz_probe(&u0, &zero, &zero, &s.config, &dir, slot, &s.sizes)?;
    let mut csv = String::from("size,input_dist,traj_dist,ratio\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.size, r.input_dist, r.traj_dist, r.ratio
        ));
    }
    w.write("lipschitz.csv", csv.as_bytes())?;
    Ok(RunStatus::Ok)
}

/// Loads a spec from a TOML file, reporting schema violations with field paths.
pub fn load_spec(path: &Path) -> Result<(ExperimentSpec, String)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading spec {}", path.display()))?;
    let spec: ExperimentSpec = toml::from_str(&text)
        .with_context(|| format!("parsing spec {}", path.display()))?;
    Ok((spec, text))
}

/// The demo specs shipped with the repository.
pub fn builtin_demo(name: &str) -> Option<&'static str> {
    match name {
        "steer-e12" => Some(include_str!("../configs/steer-e12.toml")),
        "steer-lavt8" => Some(include_str!("../configs/steer-lavt8.toml")),
        "steer-lsdfavt6" => Some(include_str!("../configs/steer-lsdfavt6.toml")),
        _ => None,
    }
}

pub fn default_out_dir(kind: &str) -> PathBuf {
    PathBuf::from(format!("out-{kind}"))
}
