//! Lagrangian flow-map integration with Jacobian transport, the C^1 grid
//! distance, the relaxation norm, and relaxation-stability probes.
//!
//! Positions are advanced unwrapped in R^3 (fields are 2π-periodic, so no
//! wrapping is needed during integration); comparisons wrap displacements back
//! into [-π, π) per component. Jacobians solve the variational equation
//! `D' = (∇u ∘ φ) D` jointly with the positions under RK4.

use crate::error::CoreError;
use crate::fourier::{sobolev_norm, TrigField};
use crate::nse::{ModeTable, Packed, Trajectory};
use crate::vec3::{self, det3, frobenius_dist, Mat3, Vec3, IDENTITY3};
use serde::Serialize;

/// A velocity field with its spatial gradient, possibly time-dependent.
pub trait VelocityField {
    /// Velocity and Jacobian `(∇u)_{ij} = ∂_j u_i` at (t, x).
    fn at(&self, t: f64, x: Vec3) -> (Vec3, Mat3);
}

impl VelocityField for TrigField {
    fn at(&self, _t: f64, x: Vec3) -> (Vec3, Mat3) {
        (self.eval(x), self.gradient(x))
    }
}

/// Linear interpolation between sampled fields.
#[derive(Clone, Debug)]
pub struct SampledPath {
    pub times: Vec<f64>,
    pub states: Vec<TrigField>,
}

impl SampledPath {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        SampledPath {
            times: traj.times.clone(),
            states: traj.states.clone(),
        }
    }

    fn segment(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        let i = match self
            .times
            .binary_search_by(|x| x.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let theta = ((t - self.times[i]) / (self.times[i + 1] - self.times[i])).clamp(0.0, 1.0);
        (i, theta)
    }
}

impl VelocityField for SampledPath {
    fn at(&self, t: f64, x: Vec3) -> (Vec3, Mat3) {
        let (i, theta) = self.segment(t);
        let (v0, g0) = self.states[i].at(t, x);
        let (v1, g1) = self.states[i + 1].at(t, x);
        let mut g = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                g[r][c] = (1.0 - theta) * g0[r][c] + theta * g1[r][c];
            }
        }
        (
            vec3::add(vec3::scale(v0, 1.0 - theta), vec3::scale(v1, theta)),
            g,
        )
    }
}

/// `base + sin(omega t) * bump`: the fast-oscillation perturbation family of
/// the relaxation-stability probe.
pub struct OscillatedField<'a> {
    pub base: &'a TrigField,
    pub bump: &'a TrigField,
    pub omega: f64,
}

impl VelocityField for OscillatedField<'_> {
    fn at(&self, t: f64, x: Vec3) -> (Vec3, Mat3) {
        let s = (self.omega * t).sin();
        let (v0, g0) = self.base.at(t, x);
        let (v1, g1) = self.bump.at(t, x);
        let mut g = g0;
        vec3::mat_add_scaled(&mut g, s, &g1);
        (vec3::axpy(v0, s, v1), g)
    }
}

/// Particle positions and Jacobians on a regular seed grid.
#[derive(Clone, Debug, Serialize)]
pub struct FlowMap {
    pub grid_res: usize,
    /// Unwrapped positions, seed-major with z fastest.
    pub positions: Vec<Vec3>,
    pub jacobians: Vec<Mat3>,
}

impl FlowMap {
    pub fn identity(grid_res: usize) -> Self {
        assert!(grid_res >= 2, "need at least 2 seeds per axis");
        let step = std::f64::consts::TAU / grid_res as f64;
        let mut positions = Vec::with_capacity(grid_res.pow(3));
        for i in 0..grid_res {
            for j in 0..grid_res {
                for k in 0..grid_res {
                    positions.push([i as f64 * step, j as f64 * step, k as f64 * step]);
                }
            }
        }
        FlowMap {
            grid_res,
            jacobians: vec![IDENTITY3; positions.len()],
            positions,
        }
    }

    pub fn seeds(grid_res: usize) -> Vec<Vec3> {
        Self::identity(grid_res).positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Largest |det D - 1| over the seeds.
    pub fn max_det_deviation(&self) -> f64 {
        self.jacobians
            .iter()
            .map(|j| (det3(j) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// One RK4 advance (with sub-steps capped at `flow_dt`) given the packed
    /// field at the step start, midpoint, and end; used as a solver observer.
    pub(crate) fn rk4_step_packed(
        &mut self,
        table: &ModeTable,
        u0: &Packed,
        u_mid: &Packed,
        u1: &Packed,
        dt: f64,
        flow_dt: f64,
    ) {
        let nsub = (dt / flow_dt).ceil().max(1.0) as usize;
        let h = dt / nsub as f64;
        let field = |tau: f64, x: Vec3| -> (Vec3, Mat3) {
            // Piecewise-linear in time through the three snapshots.
            let (a, b, theta) = if tau <= 0.5 * dt {
                (u0, u_mid, tau / (0.5 * dt))
            } else {
                (u_mid, u1, (tau - 0.5 * dt) / (0.5 * dt))
            };
            let (va, ga) = table.eval_packed(a, x);
            let (vb, gb) = table.eval_packed(b, x);
            let mut g = ga;
            for r in 0..3 {
                for c in 0..3 {
                    g[r][c] += theta * (gb[r][c] - ga[r][c]);
                }
            }
            (vec3::add(vec3::scale(va, 1.0 - theta), vec3::scale(vb, theta)), g)
        };
        for s in 0..nsub {
            let tau = s as f64 * h;
            for idx in 0..self.positions.len() {
                let (x, d) = rk4_stage(&field, tau, h, self.positions[idx], self.jacobians[idx]);
                self.positions[idx] = x;
                self.jacobians[idx] = d;
            }
        }
    }
}

fn rk4_stage(
    field: &impl Fn(f64, Vec3) -> (Vec3, Mat3),
    t: f64,
    h: f64,
    x: Vec3,
    d: Mat3,
) -> (Vec3, Mat3) {
    let (k1, g1) = field(t, x);
    let dk1 = vec3::mat_mul(&g1, &d);
    let (k2, g2) = field(t + 0.5 * h, vec3::axpy(x, 0.5 * h, k1));
    let mut d2 = d;
    vec3::mat_add_scaled(&mut d2, 0.5 * h, &dk1);
    let dk2 = vec3::mat_mul(&g2, &d2);
    let (k3, g3) = field(t + 0.5 * h, vec3::axpy(x, 0.5 * h, k2));
    let mut d3 = d;
    vec3::mat_add_scaled(&mut d3, 0.5 * h, &dk2);
    let dk3 = vec3::mat_mul(&g3, &d3);
    let (k4, g4) = field(t + h, vec3::axpy(x, h, k3));
    let mut d4 = d;
    vec3::mat_add_scaled(&mut d4, h, &dk3);
    let dk4 = vec3::mat_mul(&g4, &d4);

    let mut xn = x;
    for i in 0..3 {
        xn[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let mut dn = d;
    for r in 0..3 {
        for c in 0..3 {
            dn[r][c] += h / 6.0 * (dk1[r][c] + 2.0 * dk2[r][c] + 2.0 * dk3[r][c] + dk4[r][c]);
        }
    }
    (xn, dn)
}

/// RK4 advection of a seed grid (positions and Jacobians) from `t0` to `t1`.
pub fn integrate_flow<V: VelocityField>(
    field: &V,
    grid_res: usize,
    t0: f64,
    t1: f64,
    dt: f64,
) -> FlowMap {
    integrate_flow_from(field, FlowMap::identity(grid_res), t0, t1, dt)
}

pub fn integrate_flow_from<V: VelocityField>(
    field: &V,
    mut map: FlowMap,
    t0: f64,
    t1: f64,
    dt: f64,
) -> FlowMap {
    assert!(t1 >= t0 && dt > 0.0);
    let nsteps = ((t1 - t0) / dt).ceil().max(1.0) as usize;
    let h = (t1 - t0) / nsteps as f64;
    if t1 == t0 {
        return map;
    }
    let f = |t: f64, x: Vec3| field.at(t, x);
    for s in 0..nsteps {
        let t = t0 + s as f64 * h;
        for idx in 0..map.positions.len() {
            let (x, d) = rk4_stage(&f, t, h, map.positions[idx], map.jacobians[idx]);
            map.positions[idx] = x;
            map.jacobians[idx] = d;
        }
    }
    map
}

/// Flow maps recorded at each requested time (times must be increasing).
pub fn integrate_flow_path<V: VelocityField>(
    field: &V,
    grid_res: usize,
    record_times: &[f64],
    dt: f64,
) -> Vec<(f64, FlowMap)> {
    let mut out = Vec::with_capacity(record_times.len());
    let mut map = FlowMap::identity(grid_res);
    let mut t = 0.0;
    for &rt in record_times {
        assert!(rt >= t);
        map = integrate_flow_from(field, map, t, rt, dt);
        t = rt;
        out.push((t, map.clone()));
    }
    out
}

/// Like [`integrate_flow_path`], splitting the seed grid over worker threads.
/// Seeds integrate independently, so the result is identical to the
/// sequential one.
pub fn integrate_flow_path_threaded<V: VelocityField + Sync>(
    field: &V,
    grid_res: usize,
    record_times: &[f64],
    dt: f64,
    threads: usize,
) -> Vec<(f64, FlowMap)> {
    if threads <= 1 {
        return integrate_flow_path(field, grid_res, record_times, dt);
    }
    let full = FlowMap::identity(grid_res);
    let total = full.len();
    let chunk = total.div_ceil(threads);
    let pieces: Vec<(usize, Vec<(f64, FlowMap)>)> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (w, start) in (0..total).step_by(chunk).enumerate() {
            let end = (start + chunk).min(total);
            let sub = FlowMap {
                grid_res,
                positions: full.positions[start..end].to_vec(),
                jacobians: full.jacobians[start..end].to_vec(),
            };
            let field_ref = &field;
            handles.push(scope.spawn(move || {
                let mut map = sub;
                let mut t = 0.0;
                let mut rec = Vec::new();
                for &rt in record_times {
                    map = integrate_flow_from(*field_ref, map, t, rt, dt);
                    t = rt;
                    rec.push((t, map.clone()));
                }
                (w, rec)
            }));
        }
        handles.into_iter().map(|h| h.join().expect("flow worker")).collect()
    });
    // Stitch chunks back in order.
    let mut out: Vec<(f64, FlowMap)> = record_times
        .iter()
        .map(|&t| {
            (
                t,
                FlowMap {
                    grid_res,
                    positions: Vec::with_capacity(total),
                    jacobians: Vec::with_capacity(total),
                },
            )
        })
        .collect();
    let mut ordered = pieces;
    ordered.sort_by_key(|(w, _)| *w);
    for (_, rec) in ordered {
        for (slot, (_, map)) in out.iter_mut().zip(rec) {
            slot.1.positions.extend(map.positions);
            slot.1.jacobians.extend(map.jacobians);
        }
    }
    out
}

/// Componentwise wrap of a displacement into [-π, π).
fn wrap_displacement(d: Vec3) -> Vec3 {
    let tau = std::f64::consts::TAU;
    let mut out = d;
    for c in &mut out {
        *c -= tau * (*c / tau).round();
    }
    out
}

/// Torus distance between two points given by unwrapped coordinates.
pub fn torus_dist(a: Vec3, b: Vec3) -> f64 {
    vec3::norm(wrap_displacement(vec3::sub(a, b)))
}

/// Grid surrogate of the C^1 distance: max over seeds of torus displacement
/// plus Frobenius distance of the Jacobians.
pub fn c1_distance(a: &FlowMap, b: &FlowMap) -> Result<f64, CoreError> {
    if a.grid_res != b.grid_res {
        return Err(CoreError::ResolutionMismatch(a.grid_res, b.grid_res));
    }
    let mut worst = 0.0f64;
    for i in 0..a.positions.len() {
        let d = torus_dist(a.positions[i], b.positions[i])
            + frobenius_dist(&a.jacobians[i], &b.jacobians[i]);
        worst = worst.max(d);
    }
    Ok(worst)
}

/// `sup_t || ∫_0^t u(s) ds ||_{H^k}` over the sample times (trapezoid rule).
pub fn relaxation_norm(samples: &[(f64, TrigField)], k: f64) -> f64 {
    let mut acc = TrigField::zero();
    let mut sup = 0.0f64;
    for w in samples.windows(2) {
        let dt = w[1].0 - w[0].0;
        acc = acc
            .add_scaled(&w[0].1, 0.5 * dt)
            .add_scaled(&w[1].1, 0.5 * dt);
        sup = sup.max(sobolev_norm(&acc, k));
    }
    sup
}

/// One row of the relaxation-stability sweep.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityRow {
    pub n: u32,
    pub relax_norm_diff: f64,
    pub flow_c1_distance: f64,
    pub sup_field_diff: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    /// Fitted slope of log(flow distance) against log(relaxation norm).
    pub fitted_exponent: f64,
    pub lambda_half: f64,
}

/// Relaxation-stability probe: perturbs the base field by
/// `bump * sin(2π n t / T)` for each n, integrates both flows, and fits the
/// decay exponent of the C^1 flow distance against the relaxation norm of the
/// field difference. The fitted exponent is reported next to λ/2.
pub fn stability_probe(
    base: &TrigField,
    bump: &TrigField,
    horizon: f64,
    ns: &[u32],
    lambda: f64,
    grid_res: usize,
    flow_dt: f64,
    k: f64,
) -> StabilityReport {
    let record: Vec<f64> = (1..=8).map(|i| horizon * i as f64 / 8.0).collect();
    let base_maps = integrate_flow_path(base, grid_res, &record, flow_dt);
    let mut rows = Vec::new();
    for &n in ns {
        let omega = std::f64::consts::TAU * n as f64 / horizon;
        let pert = OscillatedField {
            base,
            bump,
            omega,
        };
        let pert_maps = integrate_flow_path(&pert, grid_res, &record, flow_dt);
        let mut lhs = 0.0f64;
        for (bm, pm) in base_maps.iter().zip(&pert_maps) {
            lhs = lhs.max(c1_distance(&bm.1, &pm.1).expect("same grid"));
        }
        // Closed form: sup_t || ∫ bump sin(ω s) ds ||_k = (T/(π n)) ||bump||_k.
        let relax = horizon / (std::f64::consts::PI * n as f64) * sobolev_norm(bump, k);
        rows.push(StabilityRow {
            n,
            relax_norm_diff: relax,
            flow_c1_distance: lhs,
            sup_field_diff: sobolev_norm(bump, k),
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.flow_c1_distance > 0.0 && r.relax_norm_diff > 0.0)
        .map(|r| (r.relax_norm_diff.ln(), r.flow_c1_distance.ln()))
        .collect();
    let fitted_exponent = fit_slope(&pts);
    StabilityReport {
        rows,
        fitted_exponent,
        lambda_half: 0.5 * lambda,
    }
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
