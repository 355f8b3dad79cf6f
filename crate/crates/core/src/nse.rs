//! Spectral Galerkin solver for the controlled system
//! `u' + nu L u + B(u) = h(t) + eta(t)` and its two-control variant
//! `u' + nu L (u + zeta) + B(u + zeta) = h + eta` on a max-norm mode truncation.
//!
//! Time stepping is first order: the diagonal Stokes half advances by its
//! exact propagator `exp(-nu |l|^2 dt)` per mode, the transport term and the
//! forces explicitly through the phi-1 weight. Single eigenmodes therefore
//! decay exactly (the transport term annihilates them), and the step grid is
//! aligned with every control breakpoint.
//!
//! The two-control variant integrates the shifted variable `w = u + zeta`
//! (an exact change of variables for divergence-free zeta, with `w` driven by
//! `h + eta + zeta'` and piecewise-constant zeta entering as state jumps), so
//! the shift identity relating the two systems holds at machine precision.

use crate::error::CoreError;
use crate::flow::FlowMap;
use crate::fourier::{
    canonicalize, is_canonical, mode_f64, mode_max_norm, mode_norm_sq, mode_weight, Mode,
    TrigField, TrigKind,
};
use crate::signal::{ControlSignal, TimeField};
use crate::vec3::{self, Mat3, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Solver configuration. Read from TOML; unknown fields are rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Kinematic viscosity, > 0.
    pub nu: f64,
    /// Max-norm mode truncation radius.
    pub galerkin_radius: i64,
    /// Nominal time step (steps never exceed it; breakpoints shorten them).
    pub dt: f64,
    /// Horizon T.
    pub horizon: f64,
    /// Sobolev order of the diagnostic norms.
    #[serde(default = "default_sobolev_k")]
    pub sobolev_k: f64,
    /// Abort threshold for the H^k diagnostic.
    #[serde(default = "default_blowup_ceiling")]
    pub blowup_ceiling: f64,
    /// Cap on recorded trajectory samples.
    #[serde(default = "default_max_samples")]
    pub max_samples: usize,
}

fn default_sobolev_k() -> f64 {
    3.0
}

fn default_blowup_ceiling() -> f64 {
    1e6
}

fn default_max_samples() -> usize {
    1025
}

impl SimConfig {
    pub fn new(nu: f64, galerkin_radius: i64, dt: f64, horizon: f64) -> Result<Self, CoreError> {
        let cfg = SimConfig {
            nu,
            galerkin_radius,
            dt,
            horizon,
            sobolev_k: default_sobolev_k(),
            blowup_ceiling: default_blowup_ceiling(),
            max_samples: default_max_samples(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.nu > 0.0) {
            return Err(CoreError::Config("nu must be positive".into()));
        }
        if self.galerkin_radius < 1 {
            return Err(CoreError::Config("galerkin_radius must be at least 1".into()));
        }
        if !(self.dt > 0.0) || self.dt >= self.horizon {
            return Err(CoreError::Config("need 0 < dt < horizon".into()));
        }
        let bound = 0.5 / (self.nu * 3.0 * (self.galerkin_radius * self.galerkin_radius) as f64);
        if self.dt > bound {
            return Err(CoreError::Config(format!(
                "dt = {} exceeds the stability bound {bound} for radius {} and nu {}",
                self.dt, self.galerkin_radius, self.nu
            )));
        }
        if self.sobolev_k < 0.0 {
            return Err(CoreError::Config("sobolev_k must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, CoreError> {
        let cfg: SimConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

// ---------------------------------------------------------------------------
// Packed fields and the interaction plan
// ---------------------------------------------------------------------------

/// Coefficients per table mode: [cos_x, cos_y, cos_z, sin_x, sin_y, sin_z].
pub type Packed = Vec<[f64; 6]>;

/// Canonical mode table of a truncation radius, with packed-field kernels.
pub struct ModeTable {
    pub modes: Vec<Mode>,
    index: BTreeMap<Mode, usize>,
    /// Unit mode direction divided by |l| (for in-place Leray projection).
    unit: Vec<Vec3>,
    /// |l|^2 per mode.
    pub lam: Vec<f64>,
    plan: Vec<PlanEntry>,
}

struct PlanEntry {
    i: u32,
    j: u32,
    /// Advected mode as floats.
    nf: Vec3,
    sum: i32,
    sum_flip: f64,
    dif: i32,
    dif_flip: f64,
}

impl ModeTable {
    pub fn new(radius: i64) -> Self {
        let mut modes = Vec::new();
        for x in -radius..=radius {
            for y in -radius..=radius {
                for z in -radius..=radius {
                    let m: Mode = [x, y, z];
                    if m != [0, 0, 0] && is_canonical(m) {
                        modes.push(m);
                    }
                }
            }
        }
        modes.sort();
        let index: BTreeMap<Mode, usize> = modes.iter().enumerate().map(|(i, m)| (*m, i)).collect();
        let unit = modes
            .iter()
            .map(|m| {
                let f = mode_f64(*m);
                vec3::scale(f, 1.0 / vec3::norm(f))
            })
            .collect();
        let lam = modes.iter().map(|m| mode_norm_sq(*m)).collect();
        let mut plan = Vec::new();
        for (i, m) in modes.iter().enumerate() {
            for (j, n) in modes.iter().enumerate() {
                if i == j {
                    // Both inputs are divergence-free: the self pair vanishes.
                    continue;
                }
                let lookup = |raw: Mode| -> (i32, f64) {
                    if raw == [0, 0, 0] || mode_max_norm(raw) > radius {
                        return (-1, 1.0);
                    }
                    let (canon, flip) = canonicalize(raw);
                    match index.get(&canon) {
                        Some(&k) => (k as i32, if flip { -1.0 } else { 1.0 }),
                        None => (-1, 1.0),
                    }
                };
                let (sum, sum_flip) = lookup([m[0] + n[0], m[1] + n[1], m[2] + n[2]]);
                let (dif, dif_flip) = lookup([m[0] - n[0], m[1] - n[1], m[2] - n[2]]);
                if sum < 0 && dif < 0 {
                    continue;
                }
                plan.push(PlanEntry {
                    i: i as u32,
                    j: j as u32,
                    nf: mode_f64(*n),
                    sum,
                    sum_flip,
                    dif,
                    dif_flip,
                });
            }
        }
        ModeTable {
            modes,
            index,
            unit,
            lam,
            plan,
        }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn zero(&self) -> Packed {
        vec![[0.0; 6]; self.modes.len()]
    }

    /// Packs a field, silently dropping terms beyond the truncation.
    pub fn pack(&self, u: &TrigField) -> Packed {
        let mut out = self.zero();
        for (m, c) in u.terms() {
            if let Some(&k) = self.index.get(m) {
                out[k] = [c.cos[0], c.cos[1], c.cos[2], c.sin[0], c.sin[1], c.sin[2]];
            }
        }
        out
    }

    pub fn unpack(&self, p: &Packed) -> TrigField {
        let mut raw = crate::fourier::RawField::new();
        for (k, c) in p.iter().enumerate() {
            let m = self.modes[k];
            raw.add_term(m, TrigKind::Cos, [c[0], c[1], c[2]]);
            raw.add_term(m, TrigKind::Sin, [c[3], c[4], c[5]]);
        }
        crate::fourier::leray_project(&raw)
    }

    /// `out = B(a, b)` in packed form (inputs divergence-free).
    pub fn bilinear_packed(&self, a: &Packed, b: &Packed, out: &mut Packed) {
        for c in out.iter_mut() {
            *c = [0.0; 6];
        }
        for e in &self.plan {
            let ai = &a[e.i as usize];
            let ac_n = ai[0] * e.nf[0] + ai[1] * e.nf[1] + ai[2] * e.nf[2];
            let as_n = ai[3] * e.nf[0] + ai[4] * e.nf[1] + ai[5] * e.nf[2];
            if ac_n == 0.0 && as_n == 0.0 {
                continue;
            }
            let bj = &b[e.j as usize];
            if e.sum >= 0 {
                let o = &mut out[e.sum as usize];
                let fs = e.sum_flip;
                for d in 0..3 {
                    // cos: ½(<Ac,n> Bs + <As,n> Bc); sin: ½(<As,n> Bs − <Ac,n> Bc)
                    o[d] += 0.5 * (ac_n * bj[3 + d] + as_n * bj[d]);
                    o[3 + d] += fs * 0.5 * (as_n * bj[3 + d] - ac_n * bj[d]);
                }
            }
            if e.dif >= 0 {
                let o = &mut out[e.dif as usize];
                let fd = e.dif_flip;
                for d in 0..3 {
                    // cos: ½(<Ac,n> Bs − <As,n> Bc); sin: ½(<Ac,n> Bc + <As,n> Bs)
                    o[d] += 0.5 * (ac_n * bj[3 + d] - as_n * bj[d]);
                    o[3 + d] += fd * 0.5 * (ac_n * bj[d] + as_n * bj[3 + d]);
                }
            }
        }
        // Leray projection, mode by mode.
        for (k, c) in out.iter_mut().enumerate() {
            let u = self.unit[k];
            let pc = c[0] * u[0] + c[1] * u[1] + c[2] * u[2];
            let ps = c[3] * u[0] + c[4] * u[1] + c[5] * u[2];
            for d in 0..3 {
                c[d] -= pc * u[d];
                c[3 + d] -= ps * u[d];
            }
        }
    }

    pub fn sobolev_norm_packed(&self, p: &Packed, k: f64) -> f64 {
        let mut s = 0.0;
        for (i, c) in p.iter().enumerate() {
            let w = mode_weight(self.modes[i], k);
            s += w * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2] + c[3] * c[3] + c[4] * c[4] + c[5] * c[5]);
        }
        s.sqrt()
    }

    /// Velocity and Jacobian of the packed field at a point.
    pub fn eval_packed(&self, p: &Packed, x: Vec3) -> (Vec3, Mat3) {
        let mut vel = [0.0; 3];
        let mut jac = [[0.0; 3]; 3];
        for (k, c) in p.iter().enumerate() {
            if c.iter().all(|&v| v == 0.0) {
                continue;
            }
            let l = mode_f64(self.modes[k]);
            let theta = l[0] * x[0] + l[1] * x[1] + l[2] * x[2];
            let (s, co) = theta.sin_cos();
            for i in 0..3 {
                vel[i] += c[i] * co + c[3 + i] * s;
                let w = -c[i] * s + c[3 + i] * co;
                for j in 0..3 {
                    jac[i][j] += w * l[j];
                }
            }
        }
        (vel, jac)
    }
}

fn packed_axpy(y: &mut Packed, s: f64, x: &Packed) {
    for (yi, xi) in y.iter_mut().zip(x) {
        for d in 0..6 {
            yi[d] += s * xi[d];
        }
    }
}

fn packed_linear(out: &mut Packed, a: &Packed, ca: f64, b: &Packed, cb: f64) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        for d in 0..6 {
            o[d] = ca * x[d] + cb * y[d];
        }
    }
}

#[inline]
fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0))
    } else {
        (z.exp() - 1.0) / z
    }
}

// ---------------------------------------------------------------------------
// Packed signal evaluation
// ---------------------------------------------------------------------------

/// Pre-packed evaluator for a control signal (values packed once; per-step
/// evaluation is a scalar-weighted combination).
enum PackedSig {
    Zero,
    Pc {
        bp: Vec<f64>,
        vals: Vec<Packed>,
    },
    Ramp {
        bp: Vec<f64>,
        vals: Vec<Packed>,
        rho: f64,
        from_zero: bool,
        to_zero: bool,
        deriv: bool,
    },
    Sampled {
        times: Vec<f64>,
        vals: Vec<Packed>,
    },
    Sum(Vec<PackedSig>),
}

impl PackedSig {
    fn build(table: &ModeTable, sig: &ControlSignal) -> PackedSig {
        match sig {
            ControlSignal::Zero { .. } => PackedSig::Zero,
            ControlSignal::PiecewiseConstant(p) => PackedSig::Pc {
                bp: p.breakpoints.clone(),
                vals: p.values.iter().map(|v| table.pack(v)).collect(),
            },
            ControlSignal::Ramped(r) => PackedSig::Ramp {
                bp: r.base.breakpoints.clone(),
                vals: r.base.values.iter().map(|v| table.pack(v)).collect(),
                rho: r.rho,
                from_zero: r.from_zero,
                to_zero: r.to_zero,
                deriv: false,
            },
            ControlSignal::RampDeriv(r) => PackedSig::Ramp {
                bp: r.base.breakpoints.clone(),
                vals: r.base.values.iter().map(|v| table.pack(v)).collect(),
                rho: r.rho,
                from_zero: r.from_zero,
                to_zero: r.to_zero,
                deriv: true,
            },
            ControlSignal::Sampled(s) => PackedSig::Sampled {
                times: s.times.clone(),
                vals: s.values.iter().map(|v| table.pack(v)).collect(),
            },
            ControlSignal::Sum(parts) => {
                PackedSig::Sum(parts.iter().map(|p| PackedSig::build(table, p)).collect())
            }
        }
    }

    fn build_deriv(table: &ModeTable, sig: &ControlSignal) -> Option<PackedSig> {
        sig.derivative().map(|d| PackedSig::build(table, &d))
    }

    /// Adds `scale * value(t)` into `out`.
    fn add_value(&self, t: f64, scale: f64, out: &mut Packed) {
        self.add_value_sided(t, scale, out, false)
    }

    /// Left-limit variant: at an exact breakpoint of a piecewise-constant
    /// part, reads the preceding piece. The solver state `w` carries a
    /// pc-zeta's old piece until the jump is applied at the next interval, so
    /// reconstructing `u = w - zeta` at an interval end needs `zeta(t^-)`.
    fn add_value_left(&self, t: f64, scale: f64, out: &mut Packed) {
        self.add_value_sided(t, scale, out, true)
    }

    fn add_value_sided(&self, t: f64, scale: f64, out: &mut Packed, left: bool) {
        match self {
            PackedSig::Zero => {}
            PackedSig::Pc { bp, vals } => {
                let i = if left {
                    piece_index_left(bp, t, vals.len())
                } else {
                    piece_index(bp, t, vals.len())
                };
                packed_axpy(out, scale, &vals[i]);
            }
            PackedSig::Sampled { times, vals } => {
                let n = times.len();
                let i = piece_index(times, t, n - 1);
                let theta = ((t - times[i]) / (times[i + 1] - times[i])).clamp(0.0, 1.0);
                packed_axpy(out, scale * (1.0 - theta), &vals[i]);
                packed_axpy(out, scale * theta, &vals[i + 1]);
            }
            PackedSig::Ramp {
                bp,
                vals,
                rho,
                from_zero,
                to_zero,
                deriv,
            } => {
                let n = vals.len();
                let i = piece_index(bp, t, n);
                let lo = bp[i];
                let width = rho * (bp[i + 1] - lo);
                let theta = (t - lo) / width;
                let s = ss(theta);
                let (mut c_prev, mut c_cur);
                if *deriv {
                    let dsw = ssd(theta) / width;
                    c_prev = -dsw;
                    c_cur = dsw;
                } else {
                    c_prev = 1.0 - s;
                    c_cur = s;
                }
                if *to_zero {
                    let hi = bp[n];
                    let twidth = rho * (hi - bp[n - 1]);
                    let start = hi - twidth;
                    if t >= start {
                        let tt = (t - start) / twidth;
                        let st = ss(tt);
                        if *deriv {
                            let dst = ssd(tt) / twidth;
                            let v_prev = 1.0 - s;
                            let v_cur = s;
                            c_prev = c_prev * (1.0 - st) - v_prev * dst;
                            c_cur = c_cur * (1.0 - st) - v_cur * dst;
                        } else {
                            c_prev *= 1.0 - st;
                            c_cur *= 1.0 - st;
                        }
                    }
                }
                if i == 0 {
                    if !*from_zero {
                        packed_axpy(out, scale * (c_prev + c_cur), &vals[0]);
                    } else {
                        packed_axpy(out, scale * c_cur, &vals[0]);
                    }
                } else {
                    packed_axpy(out, scale * c_prev, &vals[i - 1]);
                    packed_axpy(out, scale * c_cur, &vals[i]);
                }
            }
            PackedSig::Sum(parts) => {
                for p in parts {
                    p.add_value_sided(t, scale, out, left);
                }
            }
        }
    }
}

fn ss(theta: f64) -> f64 {
    let t = theta.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

fn ssd(theta: f64) -> f64 {
    if !(0.0..=1.0).contains(&theta) {
        return 0.0;
    }
    30.0 * theta * theta * (1.0 - theta) * (1.0 - theta)
}

fn piece_index(bp: &[f64], t: f64, npieces: usize) -> usize {
    match bp.binary_search_by(|b| b.partial_cmp(&t).unwrap()) {
        Ok(i) => i.min(npieces - 1),
        Err(i) => i.saturating_sub(1).min(npieces - 1),
    }
}

/// Like [`piece_index`] but resolving an exact breakpoint to the piece on its
/// left (the value of the left limit).
fn piece_index_left(bp: &[f64], t: f64, npieces: usize) -> usize {
    match bp.binary_search_by(|b| b.partial_cmp(&t).unwrap()) {
        Ok(i) => i.saturating_sub(1).min(npieces - 1),
        Err(i) => i.saturating_sub(1).min(npieces - 1),
    }
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// Sampled solver output with per-time and summary diagnostics.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<TrigField>,
    pub energy: Vec<f64>,
    pub hk_norm: Vec<f64>,
    /// H^k norm of the running time-integral of the state, per sample.
    pub running_integral_hk: Vec<f64>,
    pub sobolev_k: f64,
    /// sup_t ||u||_k over all steps (not just samples).
    pub sup_hk: f64,
    /// sup_t ||u||_k + (∫ ||u||_{k+1}^2 dt)^{1/2}.
    pub xk_norm: f64,
    /// Largest observed ||B(w)||_k / (||w||_k ||w||_{k+1}) along the advected state.
    pub empirical_bilinear_c: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &TrigField {
        self.states.last().expect("trajectory has samples")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has samples")
    }

    /// CSV with header `time,energy,hk_norm,relax_hk`.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("time,energy,hk_norm,relax_hk\n");
        for i in 0..self.times.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.times[i], self.energy[i], self.hk_norm[i], self.running_integral_hk[i]
            ));
        }
        s
    }

    /// X_{T,k}-style distance between two trajectories sampled on a common grid.
    pub fn xk_distance(&self, other: &Trajectory, k: f64) -> f64 {
        assert_eq!(self.times.len(), other.times.len(), "common sample grid required");
        let mut sup = 0.0f64;
        let mut l2 = 0.0;
        for i in 0..self.times.len() {
            let d = self.states[i].sub(&other.states[i]);
            sup = sup.max(crate::fourier::sobolev_norm(&d, k));
            let nk1 = crate::fourier::sobolev_norm(&d, k + 1.0);
            if i + 1 < self.times.len() {
                let dt = self.times[i + 1] - self.times[i];
                let dnext = self.states[i + 1].sub(&other.states[i + 1]);
                let n2 = crate::fourier::sobolev_norm(&dnext, k + 1.0);
                l2 += 0.5 * dt * (nk1 * nk1 + n2 * n2);
            }
        }
        sup + l2.sqrt()
    }
}

// ---------------------------------------------------------------------------
// The solver
// ---------------------------------------------------------------------------

/// Optional per-solve instrumentation.
pub struct SolveOptions<'a> {
    /// Track sup_t || ∫ (u - companion) ||_k against a closed-form path.
    pub companion: Option<&'a dyn TimeField>,
    /// Advect a seed grid of this resolution along the solution.
    pub flow_grid: Option<usize>,
    /// RK4 flow sub-step cap (flow steps never exceed the solver step).
    pub flow_dt: f64,
}

impl Default for SolveOptions<'_> {
    fn default() -> Self {
        SolveOptions {
            companion: None,
            flow_grid: None,
            flow_dt: 5e-3,
        }
    }
}

pub struct SolveOutput {
    pub trajectory: Trajectory,
    /// Final flow map when a flow grid was requested.
    pub flow: Option<FlowMap>,
    /// sup_t || ∫ (u - companion) ||_k when a companion was given.
    pub relax_vs_companion: Option<f64>,
}

/// Advances the truncated system and returns the sampled trajectory.
///
/// With `zeta` present this resolves the two-control system; the returned
/// states are `u = w - zeta`. The blow-up guard aborts when the H^k diagnostic
/// exceeds the configured ceiling.
pub fn solve(
    u0: &TrigField,
    h: &ControlSignal,
    eta: &ControlSignal,
    zeta: Option<&ControlSignal>,
    cfg: &SimConfig,
) -> Result<Trajectory, CoreError> {
    Ok(solve_detailed(u0, h, eta, zeta, cfg, &SolveOptions::default())?.trajectory)
}

pub fn solve_detailed(
    u0: &TrigField,
    h: &ControlSignal,
    eta: &ControlSignal,
    zeta: Option<&ControlSignal>,
    cfg: &SimConfig,
    opts: &SolveOptions,
) -> Result<SolveOutput, CoreError> {
    cfg.validate()?;
    let horizon = cfg.horizon;
    for (name, sig) in [("h", Some(h)), ("eta", Some(eta)), ("zeta", zeta)] {
        if let Some(s) = sig {
            if (s.horizon() - horizon).abs() > 1e-9 * horizon.max(1.0) {
                return Err(CoreError::Config(format!(
                    "signal {name} horizon {} does not match the configured horizon {horizon}",
                    s.horizon()
                )));
            }
        }
    }
    let table = ModeTable::new(cfg.galerkin_radius);
    let k = cfg.sobolev_k;

    // Step grid: union of the uniform grid and every signal breakpoint.
    let mut cuts = vec![0.0, horizon];
    h.breakpoints(&mut cuts);
    eta.breakpoints(&mut cuts);
    if let Some(z) = zeta {
        z.breakpoints(&mut cuts);
    }
    cuts.retain(|t| (0.0..=horizon).contains(t));
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-13 * horizon.max(1.0));

    let ph = PackedSig::build(&table, h);
    let pe = PackedSig::build(&table, eta);
    let pz = zeta.map(|z| PackedSig::build(&table, z));
    let pzd = match zeta {
        Some(z) => Some(PackedSig::build_deriv(&table, z).ok_or_else(|| {
            CoreError::Config("zeta signal has no derivative; absorbed-shift stepping needs one".into())
        })?),
        None => None,
    };

    // Shifted state w = u + zeta.
    let mut w = table.pack(u0);
    if let Some(pz) = &pz {
        pz.add_value(0.0, 1.0, &mut w);
    }

    let total_steps: usize = cuts
        .windows(2)
        .map(|iv| ((iv[1] - iv[0]) / cfg.dt).ceil().max(1.0) as usize)
        .sum();
    let stride = total_steps.div_ceil(cfg.max_samples.max(2) - 1).max(1);

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        energy: Vec::new(),
        hk_norm: Vec::new(),
        running_integral_hk: Vec::new(),
        sobolev_k: k,
        sup_hk: 0.0,
        xk_norm: 0.0,
        empirical_bilinear_c: 0.0,
    };

    let mut u = table.zero();
    let mut u_prev = table.zero();
    let mut rhs = table.zero();
    let mut bterm = table.zero();
    let mut run_int = table.zero(); // ∫ u
    let mut comp_int = table.zero(); // ∫ (u - companion)
    let mut relax_companion: f64 = 0.0;
    let mut l2k1_acc = 0.0;
    let mut flow = opts.flow_grid.map(FlowMap::identity);

    // The shifted state carries a pc-zeta's old piece until the jump at the
    // next interval start, so u reconstructs with the left limit of zeta.
    let current_u = |w: &Packed, pz: &Option<PackedSig>, t: f64, out: &mut Packed| {
        out.copy_from_slice(w);
        if let Some(pz) = pz {
            pz.add_value_left(t, -1.0, out);
        }
    };

    current_u(&w, &pz, 0.0, &mut u);
    let record = |traj: &mut Trajectory, t: f64, u: &Packed, run_int: &Packed| {
        traj.times.push(t);
        traj.states.push(table.unpack(u));
        let e = table.sobolev_norm_packed(u, 0.0);
        traj.energy.push(e * e);
        traj.hk_norm.push(table.sobolev_norm_packed(u, k));
        traj.running_integral_hk
            .push(table.sobolev_norm_packed(run_int, k));
    };
    record(&mut traj, 0.0, &u, &run_int);
    traj.sup_hk = traj.hk_norm[0];
    let mut nk1_prev = table.sobolev_norm_packed(&u, k + 1.0);

    let mut comp_prev = table.zero();
    if let Some(c) = opts.companion {
        let cp = table.pack(&c.value(0.0));
        packed_linear(&mut comp_prev, &u, 1.0, &cp, -1.0);
    }

    let mut step_counter = 0usize;
    for iv in cuts.windows(2) {
        // Piecewise-constant zeta jumps move the shifted state.
        if let (Some(z), Some(_)) = (zeta, &pz) {
            let jump = z.jump_at(iv[0]);
            if !jump.is_empty() {
                let jp = table.pack(&jump);
                packed_axpy(&mut w, 1.0, &jp);
            }
        }
        let nsub = ((iv[1] - iv[0]) / cfg.dt).ceil().max(1.0) as usize;
        let dt = (iv[1] - iv[0]) / nsub as f64;
        for s in 0..nsub {
            let t = iv[0] + dt * s as f64;
            let t_next = if s + 1 == nsub { iv[1] } else { t + dt };

            // G(t, w) = h + eta + zeta' - B(w); the transport term is explicit
            // at the step start, the known forces are read at the midpoint
            // (second-order forcing quadrature at no extra cost).
            table.bilinear_packed(&w, &w, &mut bterm);
            for (r, b) in rhs.iter_mut().zip(&bterm) {
                for d in 0..6 {
                    r[d] = -b[d];
                }
            }
            let t_force = 0.5 * (t + t_next);
            ph.add_value(t_force, 1.0, &mut rhs);
            pe.add_value(t_force, 1.0, &mut rhs);
            if let Some(pzd) = &pzd {
                pzd.add_value(t_force, 1.0, &mut rhs);
            }

            // Bilinear-bound monitor on the advected state.
            let wk = table.sobolev_norm_packed(&w, k);
            let wk1 = table.sobolev_norm_packed(&w, k + 1.0);
            if wk > 1e-12 && wk1 > 1e-12 {
                let bk = table.sobolev_norm_packed(&bterm, k);
                traj.empirical_bilinear_c = traj.empirical_bilinear_c.max(bk / (wk * wk1));
            }

            // Exponential step per mode.
            for (m, lam) in table.lam.iter().enumerate() {
                let z = -cfg.nu * lam * dt;
                let e = z.exp();
                let p = dt * phi1(z);
                for d in 0..6 {
                    w[m][d] = e * w[m][d] + p * rhs[m][d];
                }
            }

            u_prev.copy_from_slice(&u);
            current_u(&w, &pz, t_next, &mut u);

            // Trapezoid accumulators.
            for m in 0..table.len() {
                for d in 0..6 {
                    run_int[m][d] += 0.5 * dt * (u_prev[m][d] + u[m][d]);
                }
            }
            let nk = table.sobolev_norm_packed(&u, k);
            let nk1 = table.sobolev_norm_packed(&u, k + 1.0);
            traj.sup_hk = traj.sup_hk.max(nk);
            l2k1_acc += 0.5 * dt * (nk1_prev * nk1_prev + nk1 * nk1);
            nk1_prev = nk1;
            if nk > cfg.blowup_ceiling {
                return Err(CoreError::Blowup {
                    t: t_next,
                    norm: nk,
                    ceiling: cfg.blowup_ceiling,
                });
            }

            if let Some(c) = opts.companion {
                let cp = table.pack(&c.value(t_next));
                let mut diff = table.zero();
                packed_linear(&mut diff, &u, 1.0, &cp, -1.0);
                for m in 0..table.len() {
                    for d in 0..6 {
                        comp_int[m][d] += 0.5 * dt * (comp_prev[m][d] + diff[m][d]);
                    }
                }
                comp_prev.copy_from_slice(&diff);
                relax_companion = relax_companion.max(table.sobolev_norm_packed(&comp_int, k));
            }

            if let Some(f) = &mut flow {
                let mut u_mid = table.zero();
                packed_linear(&mut u_mid, &u_prev, 0.5, &u, 0.5);
                if let Some(pz) = &pz {
                    // u_prev/u already have zeta removed at their own times
                    // (left limits); correct the midpoint with the exact
                    // mid-interval zeta value.
                    let mut fix = table.zero();
                    pz.add_value_left(t, 0.5, &mut fix);
                    pz.add_value_left(t_next, 0.5, &mut fix);
                    pz.add_value(0.5 * (t + t_next), -1.0, &mut fix);
                    packed_axpy(&mut u_mid, 1.0, &fix);
                }
                f.rk4_step_packed(&table, &u_prev, &u_mid, &u, dt, opts.flow_dt);
            }

            step_counter += 1;
            let is_last = step_counter == total_steps;
            if step_counter % stride == 0 && !is_last {
                record(&mut traj, t_next, &u, &run_int);
            }
            if is_last {
                record(&mut traj, horizon, &u, &run_int);
            }
        }
    }

    traj.xk_norm = traj.sup_hk + l2k1_acc.sqrt();
    Ok(SolveOutput {
        trajectory: traj,
        flow,
        relax_vs_companion: opts.companion.map(|_| relax_companion),
    })
}

// ---------------------------------------------------------------------------
// Lipschitz probe
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbSlot {
    InitialState,
    Control,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeRow {
    pub size: f64,
    pub input_dist: f64,
    pub traj_dist: f64,
    pub ratio: f64,
}

/// Empirical Lipschitz table for the data-to-solution map: perturbs the chosen
/// input slot along `dir` by each size and reports the X_{T,k} trajectory
/// distance against the input distance.
pub fn lipschitz_probe(
    u0: &TrigField,
    h: &ControlSignal,
    eta: &ControlSignal,
    cfg: &SimConfig,
    dir: &TrigField,
    slot: PerturbSlot,
    sizes: &[f64],
) -> Result<Vec<ProbeRow>, CoreError> {
    let base = solve(u0, h, eta, None, cfg)?;
    let k = cfg.sobolev_k;
    let mut rows = Vec::new();
    for &size in sizes {
        let (traj, input_dist) = match slot {
            PerturbSlot::InitialState => {
                let u0p = u0.add_scaled(dir, size);
                (
                    solve(&u0p, h, eta, None, cfg)?,
                    size.abs() * crate::fourier::sobolev_norm(dir, k),
                )
            }
            PerturbSlot::Control => {
                let bump = ControlSignal::constant(cfg.horizon, dir.scaled(size));
                let etap = ControlSignal::Sum(vec![eta.clone(), bump]);
                (
                    solve(u0, h, &etap, None, cfg)?,
                    size.abs()
                        * cfg.horizon.sqrt()
                        * crate::fourier::sobolev_norm(dir, k - 1.0),
                )
            }
        };
        let traj_dist = traj.xk_distance(&base, k);
        rows.push(ProbeRow {
            size,
            input_dist,
            traj_dist,
            ratio: if input_dist > 0.0 {
                traj_dist / input_dist
            } else {
                0.0
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{bilinear_self, sobolev_norm};
    use crate::rng::Rng;
    use crate::sample::random_divfree;

    fn cfg(dt: f64) -> SimConfig {
        SimConfig::new(1.0, 2, dt, 1.0).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(1.0, 2, 1e-3, 1.0).is_ok());
        assert!(SimConfig::new(0.0, 2, 1e-3, 1.0).is_err());
        assert!(SimConfig::new(1.0, 2, 0.1, 1.0).is_err()); // above stability bound
        assert!(SimConfig::new(1.0, 2, 2.0, 1.0).is_err()); // dt >= horizon
    }

    #[test]
    fn packed_bilinear_matches_sparse() {
        let table = ModeTable::new(2);
        let mut rng = Rng::seed_from(77);
        for _ in 0..10 {
            let a = random_divfree(&mut rng, 2, 0.8);
            let b = random_divfree(&mut rng, 2, 0.8);
            let pa = table.pack(&a);
            let pb = table.pack(&b);
            let mut out = table.zero();
            table.bilinear_packed(&pa, &pb, &mut out);
            let packed_result = table.unpack(&out);
            let sparse = crate::fourier::bilinear_tf(&a, &b).truncated(2);
            assert!(
                packed_result.sub(&sparse).l2_norm() < 1e-12 * (1.0 + sparse.l2_norm()),
                "packed and sparse bilinear disagree"
            );
        }
    }

    #[test]
    fn eigenmode_decay_is_exact() {
        let c = cfg(1e-3);
        let u0 = TrigField::c_basis([1, 0, 0]);
        let traj = solve(
            &u0,
            &ControlSignal::zero(1.0),
            &ControlSignal::zero(1.0),
            None,
            &c,
        )
        .unwrap();
        let expected = u0.scaled((-1.0f64).exp());
        let err = traj.final_state().sub(&expected).l2_norm();
        assert!(err < 1e-8, "decay error {err}");
    }

    #[test]
    fn zero_stays_zero() {
        let c = cfg(1e-3);
        let traj = solve(
            &TrigField::zero(),
            &ControlSignal::zero(1.0),
            &ControlSignal::zero(1.0),
            None,
            &c,
        )
        .unwrap();
        assert!(traj.final_state().is_empty());
        assert_eq!(traj.times[0], 0.0);
    }

    #[test]
    fn unforced_energy_strictly_decreases() {
        let c = cfg(2e-3);
        let mut rng = Rng::seed_from(41);
        for _ in 0..5 {
            let u0 = random_divfree(&mut rng, 2, 0.3);
            let traj = solve(
                &u0,
                &ControlSignal::zero(1.0),
                &ControlSignal::zero(1.0),
                None,
                &c,
            )
            .unwrap();
            for w in traj.energy.windows(2) {
                assert!(w[1] < w[0], "energy not strictly decreasing: {w:?}");
            }
        }
    }

    #[test]
    fn invariant_subspace_is_preserved() {
        // Fields supported on the z = 0 mode plane stay there.
        let c = cfg(1e-3);
        let mut rng = Rng::seed_from(43);
        let full = random_divfree(&mut rng, 2, 0.4);
        let u0 = TrigField::try_from({
            let mut raw = crate::fourier::RawField::new();
            for (m, co) in full.terms() {
                if m[2] == 0 {
                    raw.add_term(*m, TrigKind::Cos, co.cos);
                    raw.add_term(*m, TrigKind::Sin, co.sin);
                }
            }
            raw
        })
        .unwrap();
        let traj = solve(
            &u0,
            &ControlSignal::zero(1.0),
            &ControlSignal::zero(1.0),
            None,
            &c,
        )
        .unwrap();
        for state in &traj.states {
            for (m, co) in state.terms() {
                if m[2] != 0 {
                    let sz = vec3::norm(co.cos) + vec3::norm(co.sin);
                    assert!(sz < 1e-12, "leaked into mode {m:?}: {sz}");
                }
            }
        }
    }

    #[test]
    fn first_order_convergence() {
        let mut rng = Rng::seed_from(47);
        let u0 = random_divfree(&mut rng, 1, 0.3);
        let force = random_divfree(&mut rng, 1, 0.2);
        let ends: Vec<TrigField> = [4e-3, 2e-3, 1e-3, 5e-4]
            .iter()
            .map(|&dt| {
                let c = cfg(dt);
                let eta = ControlSignal::constant(1.0, force.clone());
                solve(&u0, &ControlSignal::zero(1.0), &eta, None, &c)
                    .unwrap()
                    .final_state()
                    .clone()
            })
            .collect();
        let d0 = ends[0].sub(&ends[1]).l2_norm();
        let d1 = ends[1].sub(&ends[2]).l2_norm();
        let d2 = ends[2].sub(&ends[3]).l2_norm();
        for ratio in [d0 / d1, d1 / d2] {
            assert!((1.7..=2.3).contains(&ratio), "convergence ratio {ratio}");
        }
    }

    #[test]
    fn shift_identity_holds_at_machine_precision() {
        let c = cfg(1e-3);
        let mut rng = Rng::seed_from(53);
        let u0 = random_divfree(&mut rng, 2, 0.2);
        let eta_field = random_divfree(&mut rng, 2, 0.1);
        let eta = ControlSignal::constant(1.0, eta_field);
        // Smooth zeta with vanishing endpoints.
        let pc = crate::signal::PcSignal::new(
            vec![0.0, 0.3, 0.7, 1.0],
            vec![
                random_divfree(&mut rng, 2, 0.2),
                random_divfree(&mut rng, 2, 0.2),
                random_divfree(&mut rng, 2, 0.2),
            ],
        );
        let zeta = ControlSignal::Ramped(crate::signal::RampedSignal::new(pc, 0.2, true, true));
        let route1 = solve(&u0, &ControlSignal::zero(1.0), &eta, Some(&zeta), &c).unwrap();
        let eta_hat = ControlSignal::Sum(vec![eta.clone(), zeta.derivative().unwrap()]);
        let route2 = solve(&u0, &ControlSignal::zero(1.0), &eta_hat, None, &c).unwrap();
        assert_eq!(route1.times, route2.times);
        for i in 0..route1.times.len() {
            let lhs = route1.states[i].add(&zeta.eval(route1.times[i]));
            let err = lhs.sub(&route2.states[i]).l2_norm();
            assert!(err < 1e-12, "shift identity residual {err} at t = {}", route1.times[i]);
        }
    }

    #[test]
    fn blowup_guard_reports_time() {
        let mut c = cfg(1e-3);
        c.blowup_ceiling = 1e-3;
        let u0 = TrigField::c_basis([1, 0, 0]);
        let err = solve(
            &u0,
            &ControlSignal::zero(1.0),
            &ControlSignal::zero(1.0),
            None,
            &c,
        )
        .unwrap_err();
        match err {
            CoreError::Blowup { t, .. } => assert!(t > 0.0),
            other => panic!("expected blow-up, got {other}"),
        }
    }

    #[test]
    fn lipschitz_probe_behaviour() {
        let c = cfg(2e-3);
        let mut rng = Rng::seed_from(59);
        let u0 = random_divfree(&mut rng, 1, 0.2);
        let dir = random_divfree(&mut rng, 1, 1.0);
        let zero = ControlSignal::zero(1.0);
        let rows = lipschitz_probe(
            &u0,
            &zero,
            &zero,
            &c,
            &dir,
            PerturbSlot::InitialState,
            &[0.0, 1e-2, 1e-3, 1e-4],
        )
        .unwrap();
        assert!(rows[0].traj_dist == 0.0);
        let ratios: Vec<f64> = rows[1..].iter().map(|r| r.ratio).collect();
        let rmax = ratios.iter().cloned().fold(0.0, f64::max);
        let rmin = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(rmax / rmin < 1.5, "ratios not approximately constant: {ratios:?}");

        let rows = lipschitz_probe(
            &u0,
            &zero,
            &zero,
            &c,
            &dir,
            PerturbSlot::Control,
            &[1e-2, 1e-3],
        )
        .unwrap();
        let rmax = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
        let rmin = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        assert!(rmax / rmin < 1.5);
    }

    #[test]
    fn bilinear_monitor_is_finite_and_positive() {
        let c = cfg(2e-3);
        let mut rng = Rng::seed_from(61);
        let u0 = random_divfree(&mut rng, 2, 0.3);
        let traj = solve(
            &u0,
            &ControlSignal::zero(1.0),
            &ControlSignal::zero(1.0),
            None,
            &c,
        )
        .unwrap();
        assert!(traj.empirical_bilinear_c.is_finite());
        assert!(traj.empirical_bilinear_c > 0.0);
        // Sanity anchor: the bound constant for radius-2 fields is modest.
        let b = bilinear_self(&u0);
        let c_emp = sobolev_norm(&b, 3.0)
            / (sobolev_norm(&u0, 3.0) * sobolev_norm(&u0, 4.0));
        assert!(c_emp < 10.0);
    }
}
