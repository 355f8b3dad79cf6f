//! The control-synthesis staircase: exact reference control from an isotopy,
//! finite-dimensional projection, per-level fast-oscillation convexification,
//! and absorption of the shift control into the additive one.
//!
//! A descent from level j replaces a control valued in the j-th ladder space
//! by a fast-oscillating shift ζ_n plus a residual control, both valued one
//! level down. The cycle ζ^1..ζ^{2p} with ζ^{i+p} = -ζ^i built from scaled
//! witness pairs makes the averaged identity
//! `(1/m) Σ_j (B(u + ζ^j) + ν L ζ^j) - η = B(u) - η₁` exact in coefficient
//! arithmetic for every u, which is verified on random samples at every
//! emitted level. The absorbed control η̂ = η + ∂_t ζ̂ uses the closed-form
//! smoothing of the oscillation so the two-control and single-control systems
//! coincide at machine precision.

use crate::error::CoreError;
use crate::flow::{c1_distance, integrate_flow, SampledPath};
use crate::fourier::{
    bilinear, bilinear_self, sobolev_norm, stokes_apply, RawField, TrigField,
};
use crate::isotopy::{build_isotopy, IsotopyTarget};
use crate::nse::{solve, solve_detailed, SimConfig, SolveOptions};
use crate::rng::Rng;
use crate::saturation::{ladder, Ladder, Witness};
use crate::signal::{ControlSignal, PcSignal, RampedSignal, TimeField};
use crate::space::ModeSpace;
use serde::{Deserialize, Serialize};

/// Tuning knobs of the staircase. There is no a-priori rate for the
/// oscillation index or the ladder depth, so both are explicit configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaircaseCaps {
    /// Coarse piecewise-constant pieces for the projected control.
    pub pieces: usize,
    /// Starting oscillation index per level.
    pub n_start: u32,
    /// Oscillation index cap per level.
    pub n_cap: u32,
    /// Hard cap on total signal pieces (deep descents multiply scales).
    pub piece_cap: usize,
    /// Ramp fraction of each piece used by the smoothing.
    pub ramp_rho: f64,
    /// Seed grid for the final flow-error measurement.
    pub flow_grid: usize,
    /// Seed grid for per-level flow diagnostics.
    pub level_flow_grid: usize,
    /// RK4 sub-step cap for flow observers.
    pub flow_dt: f64,
    /// Saturation ladder depth cap.
    pub ladder_depth: usize,
    /// Random u samples for the per-level averaged-identity check.
    pub isver_samples: usize,
    /// Endpoint-ramp fraction of the reference path.
    pub ramp_frac: f64,
}

impl Default for StaircaseCaps {
    fn default() -> Self {
        StaircaseCaps {
            pieces: 16,
            n_start: 4,
            n_cap: 256,
            piece_cap: 200_000,
            ramp_rho: 0.1,
            flow_grid: 4,
            level_flow_grid: 2,
            flow_dt: 5e-3,
            ladder_depth: 12,
            isver_samples: 20,
            ramp_frac: 0.1,
        }
    }
}

/// A steering task: drive the velocity from u0 to u1 while the flow map tracks
/// the isotopy target, using controls valued in the given space.
#[derive(Clone, Debug)]
pub struct SteeringProblem {
    pub u0: TrigField,
    pub u1: TrigField,
    pub target: IsotopyTarget,
    pub h: ControlSignal,
    pub space: ModeSpace,
    pub epsilon: f64,
    pub cfg: SimConfig,
    pub caps: StaircaseCaps,
    pub seed: u64,
}

// ---------------------------------------------------------------------------
// Reference trajectory
// ---------------------------------------------------------------------------

/// Closed-form reference path: the isotopy's generating field with smooth
/// endpoint ramps pinning u(0) = u0 and u(T) = u1, and the exact control
/// η₀ = u' + ν L u + B(u) - h that reproduces it in the truncated system.
///
/// The base field is carried with the time-rescaled amplitude
/// γ(t) = (1 - A - B) / (1 - τ), which keeps ∫ γ = T exactly: for a steady
/// base the time-1 flow of the path's base part equals the target map, so
/// with zero endpoints the reference flow reproduces ψ up to integrator
/// tolerance.
#[derive(Clone)]
pub struct ReferencePath {
    pub horizon: f64,
    nu: f64,
    radius: i64,
    base: TrigField,
    u0: TrigField,
    u1: TrigField,
    ramp_frac: f64,
    h: ControlSignal,
    /// Relaxation-norm budget spent by the endpoint ramps.
    pub ramp_relax_budget: f64,
    /// Residual of the generating field's truncation/projection, when any.
    pub base_residual: f64,
}

fn smoothstep(theta: f64) -> f64 {
    let t = theta.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

fn smoothstep_deriv(theta: f64) -> f64 {
    if !(0.0..=1.0).contains(&theta) {
        return 0.0;
    }
    30.0 * theta * theta * (1.0 - theta) * (1.0 - theta)
}

impl ReferencePath {
    fn ramps(&self, t: f64) -> (f64, f64, f64, f64) {
        let tau = self.ramp_frac * self.horizon;
        let a = 1.0 - smoothstep(t / tau);
        let da = -smoothstep_deriv(t / tau) / tau;
        let b = smoothstep((t - (self.horizon - tau)) / tau);
        let db = smoothstep_deriv((t - (self.horizon - tau)) / tau) / tau;
        (a, da, b, db)
    }

    /// Amplitude rescaling that keeps the time integral of the base part at 1:
    /// the path traverses the whole isotopy (whose target is the time-1 map)
    /// over the horizon, whatever the horizon is.
    fn gamma_scale(&self) -> f64 {
        1.0 / ((1.0 - self.ramp_frac) * self.horizon)
    }

    /// u(t) = γ(t) base + A(t) u0 + B(t) u1.
    pub fn field(&self, t: f64) -> TrigField {
        let (a, _, b, _) = self.ramps(t);
        let gamma = self.gamma_scale() * (1.0 - a - b);
        self.base
            .scaled(gamma)
            .add_scaled(&self.u0, a)
            .add_scaled(&self.u1, b)
    }

    /// u'(t).
    pub fn deriv(&self, t: f64) -> TrigField {
        let (_, da, _, db) = self.ramps(t);
        let dgamma = self.gamma_scale() * (-da - db);
        self.base
            .scaled(dgamma)
            .add_scaled(&self.u0, da)
            .add_scaled(&self.u1, db)
    }

    /// The exact control of the truncated system along the path.
    pub fn eta0(&self, t: f64) -> TrigField {
        let u = self.field(t);
        self.deriv(t)
            .add_scaled(&stokes_apply(&u), self.nu)
            .add(&bilinear_self(&u).truncated(self.radius))
            .sub(&self.h.eval(t))
    }

    /// Dense samples for flow integration and companion evaluation.
    pub fn sampled(&self, samples: usize) -> SampledPath {
        let times: Vec<f64> = (0..=samples)
            .map(|i| self.horizon * i as f64 / samples as f64)
            .collect();
        let states = times.iter().map(|&t| self.field(t)).collect();
        SampledPath { times, states }
    }
}

impl TimeField for ReferencePath {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn value(&self, t: f64) -> TrigField {
        self.field(t)
    }
}

/// Builds the reference path for a steering problem. The endpoints are pinned
/// exactly; the path stays within the relaxation budget of the isotopy field.
pub fn reference_trajectory(problem: &SteeringProblem) -> Result<ReferencePath, CoreError> {
    let radius = problem.cfg.galerkin_radius;
    let iso = build_isotopy(problem.target.clone())?;
    let (base, base_residual) = match iso.as_trig_field() {
        Some(w) => {
            let t = w.truncated(radius);
            let res = w.sub(&t).l2_norm();
            (t, res)
        }
        None => {
            // Time-dependent generating field (multi-shear chain): use its
            // time-0 projection as a steady surrogate and report the residual.
            iso.project_to_modes(0.0, radius, 16)
        }
    };
    for (name, f) in [("u0", &problem.u0), ("u1", &problem.u1)] {
        if f.max_mode_norm() > radius {
            return Err(CoreError::Config(format!(
                "{name} has modes beyond the Galerkin radius {radius}"
            )));
        }
    }
    let horizon = problem.cfg.horizon;
    let tau = problem.caps.ramp_frac * horizon;
    let gamma_excess = problem.caps.ramp_frac / (1.0 - problem.caps.ramp_frac);
    let ramp_relax_budget = tau * (problem.u0.l2_norm() + problem.u1.l2_norm())
        + gamma_excess * tau * base.l2_norm();
    Ok(ReferencePath {
        horizon,
        nu: problem.cfg.nu,
        radius,
        base,
        u0: problem.u0.clone(),
        u1: problem.u1.clone(),
        ramp_frac: problem.caps.ramp_frac,
        h: problem.h.clone(),
        ramp_relax_budget,
        base_residual,
    })
}

// ---------------------------------------------------------------------------
// Projection and decomposition
// ---------------------------------------------------------------------------

/// Orthogonal projection of each piece value onto the space; returns the
/// projected signal and the largest projection residual.
pub fn project_control(eta: &PcSignal, space: &ModeSpace) -> (PcSignal, f64) {
    let mut residual = 0.0f64;
    let mut values = Vec::with_capacity(eta.values.len());
    for v in &eta.values {
        let p = space.project(v);
        residual = residual.max(v.sub(&p).l2_norm());
        values.push(p);
    }
    (PcSignal::new(eta.breakpoints.clone(), values), residual)
}

/// Per-level decomposition machinery shared across pieces: witness outputs
/// with their components orthogonal to the lower space, and the factored Gram
/// matrix of the least-squares fit.
struct LevelDecomposer<'a> {
    prev: &'a ModeSpace,
    witnesses: Vec<&'a Witness>,
    outputs: Vec<TrigField>,
    outputs_perp: Vec<TrigField>,
    gram_lu: Vec<Vec<f64>>,
    pivots: Vec<usize>,
}

const DECOMP_TOL: f64 = 1e-9;

impl<'a> LevelDecomposer<'a> {
    fn new(prev: &'a ModeSpace, witnesses: &'a [Witness]) -> Self {
        let mut kept = Vec::new();
        let mut outputs = Vec::new();
        let mut outputs_perp = Vec::new();
        for w in witnesses {
            let out = w.output_field();
            let perp = out.sub(&prev.project(&out));
            if perp.l2_norm() > 1e-12 {
                kept.push(w);
                outputs.push(out);
                outputs_perp.push(perp);
            }
        }
        let n = kept.len();
        let mut gram = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                gram[i][j] = outputs_perp[i].inner(&outputs_perp[j]);
            }
        }
        let (gram_lu, pivots) = lu_factor(gram);
        LevelDecomposer {
            prev,
            witnesses: kept,
            outputs,
            outputs_perp,
            gram_lu,
            pivots,
        }
    }

    /// Splits `v` into a lower-space part and witness coefficients such that
    /// `v = eta + Σ c_i output_i` with `eta` in the lower space.
    fn decompose(&self, v: &TrigField) -> Result<(TrigField, Vec<f64>), CoreError> {
        let r = v.sub(&self.prev.project(v));
        let rnorm = r.l2_norm();
        if self.witnesses.is_empty() {
            if rnorm > DECOMP_TOL * v.l2_norm().max(1.0) {
                return Err(missing_witness_error(&r, rnorm));
            }
            return Ok((self.prev.project(v), Vec::new()));
        }
        let rhs: Vec<f64> = self.outputs_perp.iter().map(|w| w.inner(&r)).collect();
        let coeffs = lu_solve(&self.gram_lu, &self.pivots, &rhs);
        let mut fit = TrigField::zero();
        for (c, w) in coeffs.iter().zip(&self.outputs_perp) {
            fit = fit.add_scaled(w, *c);
        }
        let fit_res = fit.sub(&r).l2_norm();
        if fit_res > DECOMP_TOL * rnorm.max(1.0) {
            return Err(missing_witness_error(&fit.sub(&r), fit_res));
        }
        let mut eta = v.clone();
        for (c, w) in coeffs.iter().zip(&self.outputs) {
            eta = eta.add_scaled(w, -c);
        }
        Ok((eta, coeffs))
    }

    /// The ζ-cycle fields for one piece: pairs realizing `-c_i * output_i`,
    /// scaled by sqrt(p) and followed by their negations.
    fn zeta_cycle(&self, coeffs: &[f64]) -> Result<Vec<TrigField>, CoreError> {
        let mut xis: Vec<RawField> = Vec::new();
        for (c, w) in coeffs.iter().zip(&self.witnesses) {
            if c.abs() < 1e-13 {
                continue;
            }
            let (z1, z2) = w.zeta_pair(-c);
            xis.push(z1);
            xis.push(z2);
        }
        let p = xis.len();
        if p == 0 {
            return Ok(Vec::new());
        }
        let root_p = (p as f64).sqrt();
        let mut cycle = Vec::with_capacity(2 * p);
        for xi in &xis {
            cycle.push(raw_to_div_free(&xi.scaled(root_p))?);
        }
        for xi in &xis {
            cycle.push(raw_to_div_free(&xi.scaled(-root_p))?);
        }
        Ok(cycle)
    }
}

fn raw_to_div_free(raw: &RawField) -> Result<TrigField, CoreError> {
    TrigField::try_from(raw.clone()).map_err(|_| {
        CoreError::Config(
            "witness fields are not divergence-free; steer with the projected variant of the space"
                .into(),
        )
    })
}

fn missing_witness_error(residual: &TrigField, norm: f64) -> CoreError {
    let (mode, kind, dir) = residual
        .terms()
        .max_by(|a, b| {
            let na = crate::vec3::norm(a.1.cos) + crate::vec3::norm(a.1.sin);
            let nb = crate::vec3::norm(b.1.cos) + crate::vec3::norm(b.1.sin);
            na.partial_cmp(&nb).unwrap()
        })
        .map(|(m, c)| {
            if crate::vec3::norm(c.cos) >= crate::vec3::norm(c.sin) {
                (*m, "cos", c.cos)
            } else {
                (*m, "sin", c.sin)
            }
        })
        .unwrap_or(([0, 0, 0], "cos", [0.0; 3]));
    CoreError::MissingWitness {
        mode,
        kind,
        dir,
        residual: norm,
    }
}

fn lu_factor(mut a: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = a.len();
    let mut piv: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut best = col;
        for row in (col + 1)..n {
            if a[row][col].abs() > a[best][col].abs() {
                best = row;
            }
        }
        a.swap(col, best);
        piv.swap(col, best);
        let d = a[col][col];
        if d.abs() < 1e-300 {
            continue;
        }
        for row in (col + 1)..n {
            let f = a[row][col] / d;
            a[row][col] = f;
            for k in (col + 1)..n {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    (a, piv)
}

fn lu_solve(lu: &[Vec<f64>], piv: &[usize], rhs: &[f64]) -> Vec<f64> {
    let n = lu.len();
    let mut y: Vec<f64> = piv.iter().map(|&p| rhs[p]).collect();
    for i in 0..n {
        for j in 0..i {
            let yj = y[j];
            y[i] -= lu[i][j] * yj;
        }
    }
    for i in (0..n).rev() {
        for j in (i + 1)..n {
            let yj = y[j];
            y[i] -= lu[i][j] * yj;
        }
        let d = lu[i][i];
        y[i] = if d.abs() < 1e-300 { 0.0 } else { y[i] / d };
    }
    y
}

// ---------------------------------------------------------------------------
// Convexification and absorption
// ---------------------------------------------------------------------------

/// Output of one level's convexification at a fixed oscillation index.
pub struct ConvexifiedLevel {
    pub zeta_n: PcSignal,
    pub eta: PcSignal,
    /// Largest relative residual of the averaged identity over the samples.
    pub isver_residual: f64,
    /// Largest cycle length 2p over the pieces.
    pub max_m: usize,
    /// Total ζ pieces.
    pub pieces: usize,
}

/// Replaces a piecewise-constant control `eta1` (valued one ladder level up)
/// by a fast-oscillating shift `zeta_n` plus a residual control, both valued
/// in `prev`. The averaged identity is verified on `isver_samples` random
/// fields per piece (relative residual returned).
pub fn convexify_level(
    eta1: &PcSignal,
    prev: &ModeSpace,
    witnesses: &[Witness],
    n: u32,
    nu: f64,
    radius: i64,
    isver_samples: usize,
    rng: &mut Rng,
) -> Result<ConvexifiedLevel, CoreError> {
    let decomp = LevelDecomposer::new(prev, witnesses);
    let mut eta_values = Vec::with_capacity(eta1.values.len());
    let mut zeta_bp = vec![eta1.breakpoints[0]];
    let mut zeta_values = Vec::new();
    let mut isver_residual = 0.0f64;
    let mut max_m = 0usize;

    for (k, v) in eta1.values.iter().enumerate() {
        let (eta_piece, coeffs) = decomp.decompose(v)?;
        let cycle = decomp.zeta_cycle(&coeffs)?;
        let m = cycle.len();
        max_m = max_m.max(m);
        let lo = eta1.breakpoints[k];
        let hi = eta1.breakpoints[k + 1];
        if m == 0 {
            zeta_bp.push(hi);
            zeta_values.push(TrigField::zero());
        } else {
            // n periods of the m-cycle on this piece.
            let total = n as usize * m;
            let dt = (hi - lo) / total as f64;
            for s in 0..total {
                zeta_bp.push(if s + 1 == total {
                    hi
                } else {
                    lo + dt * (s + 1) as f64
                });
                zeta_values.push(cycle[s % m].clone());
            }
            // Averaged identity check on random fields.
            isver_residual = isver_residual.max(isver_check(
                v,
                &eta_piece,
                &cycle,
                nu,
                radius,
                isver_samples,
                rng,
            ));
        }
        eta_values.push(eta_piece);
    }
    let pieces = zeta_values.len();
    Ok(ConvexifiedLevel {
        zeta_n: PcSignal::new(zeta_bp, zeta_values),
        eta: PcSignal::new(eta1.breakpoints.clone(), eta_values),
        isver_residual,
        max_m,
        pieces,
    })
}

/// `(1/m) Σ_j (B(u + ζ^j) + ν L ζ^j) - η  ==  B(u) - η₁`, as coefficients.
fn isver_check(
    eta1: &TrigField,
    eta: &TrigField,
    cycle: &[TrigField],
    nu: f64,
    radius: i64,
    samples: usize,
    rng: &mut Rng,
) -> f64 {
    let m = cycle.len();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let u = crate::sample::random_divfree(rng, radius.min(1), 1.0);
        let mut avg = TrigField::zero();
        for z in cycle {
            let uz = u.add(z);
            let raw: RawField = (&uz).into();
            avg = avg.add(&bilinear(&raw, &raw));
            avg = avg.add_scaled(&stokes_apply(z), nu);
        }
        let lhs = avg.scaled(1.0 / m as f64).sub(eta);
        let rhs = bilinear_self(&u).sub(eta1);
        let scale = rhs.l2_norm().max(1.0);
        worst = worst.max(lhs.sub(&rhs).l2_norm() / scale);
    }
    worst
}

/// Diagnostics of the absorption step.
#[derive(Clone, Debug, Serialize)]
pub struct AbsorbReport {
    /// sup_t || ∫ ζ̂ ||_k — must shrink as the oscillation index grows.
    pub relax_zhat: f64,
    /// L^4-in-time surrogate of the smoothing deficiency ||ζ - ζ̂||.
    pub l4_deficiency: f64,
}

/// Replaces the piecewise-constant shift by its smooth ramped surrogate and
/// absorbs it into the additive control: η̂ = η + ∂_t ζ̂.
pub fn absorb_zeta(
    zeta_n: &PcSignal,
    eta: ControlSignal,
    rho: f64,
    k: f64,
) -> (ControlSignal, RampedSignal, AbsorbReport) {
    let zhat = RampedSignal::new(zeta_n.clone(), rho, true, true);
    let deriv = ControlSignal::RampDeriv(zhat.clone());
    let eta_hat = ControlSignal::Sum(vec![eta, deriv]);

    // Relaxation norm of ζ̂ evaluated at piece boundaries and midpoints.
    let zsig = ControlSignal::Ramped(zhat.clone());
    let mut acc = TrigField::zero();
    let mut relax = 0.0f64;
    for w in zeta_n.breakpoints.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        acc = acc.add(&zsig.integral(w[0], mid));
        relax = relax.max(sobolev_norm(&acc, k));
        acc = acc.add(&zsig.integral(mid, w[1]));
        relax = relax.max(sobolev_norm(&acc, k));
    }

    // || ζ - ζ̂ ||_{L^4}: the deficiency lives on the ramps; per ramp of width
    // w and jump J the contribution is ||J||^4 w ∫ (1 - s)^4.
    const C4: f64 = 0.4063492063492063; // ∫_0^1 (1 - smoothstep)^4 dθ
    let mut l4 = 0.0;
    let nv = zeta_n.values.len();
    for i in 0..nv {
        let prev = if i == 0 {
            TrigField::zero()
        } else {
            zeta_n.values[i - 1].clone()
        };
        let jump = zeta_n.values[i].sub(&prev).l2_norm();
        let width = rho * (zeta_n.breakpoints[i + 1] - zeta_n.breakpoints[i]);
        l4 += jump.powi(4) * width * C4;
    }
    // Tail ramp to zero.
    let jump = zeta_n.values[nv - 1].l2_norm();
    let width = rho * (zeta_n.breakpoints[nv] - zeta_n.breakpoints[nv - 1]);
    l4 += jump.powi(4) * width * C4;

    (
        eta_hat,
        zhat,
        AbsorbReport {
            relax_zhat: relax,
            l4_deficiency: l4.powf(0.25),
        },
    )
}

// ---------------------------------------------------------------------------
// The staircase driver
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct LevelRecord {
    pub level: usize,
    pub skipped: bool,
    pub n: u32,
    /// Norm of the depth-j content removed at this level.
    pub residual_norm: f64,
    pub endpoint_error: f64,
    pub relaxation_error: f64,
    pub flow_error: f64,
    pub xk_norm: f64,
    pub isver_residual: f64,
    pub relax_zhat: f64,
    pub l4_deficiency: f64,
    pub pieces: usize,
    pub budget: f64,
    pub met_budget: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct StaircaseTrace {
    pub levels: Vec<LevelRecord>,
    pub ladder_depth: usize,
    pub saturates_truncation: bool,
    /// Set when the space does not saturate the truncation and steering is
    /// restricted to the reachable invariant subspace.
    pub restricted_to_reachable: bool,
    pub projection_residual: f64,
    pub reference_xk: f64,
    pub final_endpoint_error: f64,
    pub final_relax_error: f64,
    pub final_flow_error: f64,
    pub total_error: f64,
    pub epsilon: f64,
    pub budget_met: bool,
    pub uniform_bound_ok: bool,
    pub control_span_residual: f64,
}

pub struct StaircaseOutcome {
    pub control: ControlSignal,
    pub trace: StaircaseTrace,
}

/// Runs the full synthesis staircase. A missed budget is reported in the
/// trace (`budget_met = false`), never silently.
pub fn run_staircase(problem: &SteeringProblem) -> Result<StaircaseOutcome, CoreError> {
    problem.cfg.validate()?;
    let cfg = &problem.cfg;
    let caps = &problem.caps;
    let radius = cfg.galerkin_radius;
    let k = cfg.sobolev_k;
    let horizon = cfg.horizon;
    let mut rng = Rng::seed_from(problem.seed);

    let reference = reference_trajectory(problem)?;
    let lad: Ladder = ladder(&problem.space, caps.ladder_depth, radius);
    let saturates = lad.top().covers_truncation(radius);
    let depth = lad.witnesses.iter().filter(|w| !w.is_empty()).count();

    // Piecewise-constant approximation of the exact control, then projection
    // onto the top ladder space.
    let grid: Vec<f64> = (0..=caps.pieces)
        .map(|i| horizon * i as f64 / caps.pieces as f64)
        .collect();
    let eta0_pc = pc_average_path(|t| reference.eta0(t), &grid);
    let (mut current_pc, projection_residual) = project_control(&eta0_pc, lad.top());
    let restricted = !saturates && projection_residual > 1e-9;

    // Count the levels carrying content (budget shares need it up front).
    let mut effective_levels = 0usize;
    {
        let mut probe = current_pc.values.clone();
        for j in (1..=depth).rev() {
            let dec = LevelDecomposer::new(&lad.levels[j - 1], &lad.witnesses[j - 1]);
            let mut any = false;
            let mut next = Vec::with_capacity(probe.len());
            for v in &probe {
                let (eta_piece, coeffs) = dec.decompose(v)?;
                any |= coeffs.iter().any(|c| c.abs() > 1e-11);
                next.push(eta_piece);
            }
            if any {
                effective_levels += 1;
            }
            probe = next;
        }
    }
    let budget = problem.epsilon / (effective_levels as f64 + 2.0);

    let ref_path_sampled = reference.sampled(1024);
    let ref_flow_small = integrate_flow(
        &ref_path_sampled,
        caps.level_flow_grid,
        0.0,
        horizon,
        caps.flow_dt,
    );
    let ref_flow_final = integrate_flow(
        &ref_path_sampled,
        caps.flow_grid,
        0.0,
        horizon,
        caps.flow_dt,
    );
    let ref_traj = solve(&problem.u0, &problem.h, &ControlSignal::PiecewiseConstant(current_pc.clone()), None, cfg)?;
    let reference_xk = ref_traj.xk_norm;

    let mut levels = Vec::new();
    let mut current: ControlSignal = ControlSignal::PiecewiseConstant(current_pc.clone());
    let mut budget_met = true;
    let mut uniform_bound_ok = true;

    for j in (1..=depth).rev() {
        let prev_space = &lad.levels[j - 1];
        let wits = &lad.witnesses[j - 1];

        // Re-approximate the incoming control as piecewise constant on a grid
        // refined by its own breakpoints (exact averaging).
        let mut bp = Vec::new();
        current.breakpoints(&mut bp);
        bp.extend_from_slice(&grid);
        bp.retain(|t| (0.0..=horizon).contains(t));
        bp.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bp.dedup_by(|a, b| (*a - *b).abs() < 1e-13 * horizon.max(1.0));
        if bp.len() - 1 > caps.piece_cap {
            return Err(CoreError::PieceCountExceeded {
                pieces: bp.len() - 1,
                cap: caps.piece_cap,
            });
        }
        current_pc = current.pc_average(&bp);

        // Residual content at this level.
        let dec = LevelDecomposer::new(prev_space, wits);
        let mut residual_norm = 0.0f64;
        for v in &current_pc.values {
            let r = v.sub(&prev_space.project(v));
            residual_norm = residual_norm.max(r.l2_norm());
        }
        if residual_norm <= 1e-11 {
            levels.push(LevelRecord {
                level: j,
                skipped: true,
                n: 0,
                residual_norm,
                endpoint_error: 0.0,
                relaxation_error: 0.0,
                flow_error: 0.0,
                xk_norm: 0.0,
                isver_residual: 0.0,
                relax_zhat: 0.0,
                l4_deficiency: 0.0,
                pieces: 0,
                budget,
                met_budget: true,
            });
            // Project pieces down exactly so later levels see clean values.
            current = ControlSignal::PiecewiseConstant(current_pc.map_values(|v| {
                let (eta, _) = dec.decompose(v).expect("residual below tolerance");
                eta
            }));
            continue;
        }

        // Level target: the trajectory the incoming control produces.
        let target = solve(&problem.u0, &problem.h, &current, None, cfg)?;

        let mut n = caps.n_start;
        let mut chosen: Option<(ConvexifiedLevel, f64, f64)> = None;
        loop {
            let conv = convexify_level(
                &current_pc,
                prev_space,
                wits,
                n,
                cfg.nu,
                radius,
                caps.isver_samples,
                &mut rng,
            )?;
            if conv.pieces > caps.piece_cap {
                budget_met = false;
                if chosen.is_none() {
                    chosen = Some((conv, f64::INFINITY, f64::NAN));
                }
                break;
            }
            let eta_sig = ControlSignal::PiecewiseConstant(conv.eta.clone());
            let zeta_sig = ControlSignal::PiecewiseConstant(conv.zeta_n.clone());
            let test = solve(&problem.u0, &problem.h, &eta_sig, Some(&zeta_sig), cfg)?;
            let err = sobolev_norm(&test.final_state().sub(target.final_state()), k);
            let bound_ok = test.xk_norm <= 3.0 * reference_xk.max(1e-9);
            // Rank candidates: a bound-respecting one beats any violator,
            // then smaller endpoint error wins.
            let better = match &chosen {
                Some((_, best_err, best_xk)) => {
                    let best_bound = *best_xk <= 3.0 * reference_xk.max(1e-9);
                    (bound_ok && !best_bound) || (bound_ok == best_bound && err < *best_err)
                }
                None => true,
            };
            if better {
                chosen = Some((conv, err, test.xk_norm));
            }
            // Accept once both the error budget and the uniform bound on the
            // auxiliary trajectory hold; otherwise oscillate faster.
            if (err <= budget && bound_ok) || n >= caps.n_cap {
                if err > budget {
                    budget_met = false;
                }
                break;
            }
            n *= 2;
        }
        let (conv, _, aux_xk) = chosen.expect("at least one oscillation index was tried");

        // Absorb the shift into the additive control.
        let eta_sig = ControlSignal::PiecewiseConstant(conv.eta.clone());
        let (eta_hat, _zhat, absorb) = absorb_zeta(&conv.zeta_n, eta_sig, caps.ramp_rho, k);

        // Measure the absorbed level against the level target and reference.
        let opts = SolveOptions {
            companion: Some(&reference),
            flow_grid: Some(caps.level_flow_grid),
            flow_dt: caps.flow_dt,
        };
        let out = solve_detailed(&problem.u0, &problem.h, &eta_hat, None, cfg, &opts)?;
        let endpoint_error =
            sobolev_norm(&out.trajectory.final_state().sub(target.final_state()), k);
        let flow_error = out
            .flow
            .as_ref()
            .map(|f| c1_distance(f, &ref_flow_small))
            .transpose()?
            .unwrap_or(f64::NAN);
        // Uniform boundedness applies to the auxiliary-system trajectory; the
        // absorbed state is the auxiliary one shifted by the oscillation.
        if aux_xk > 3.0 * reference_xk.max(1e-9) {
            uniform_bound_ok = false;
        }
        let met = endpoint_error <= budget;
        budget_met &= met;
        levels.push(LevelRecord {
            level: j,
            skipped: false,
            n,
            residual_norm,
            endpoint_error,
            relaxation_error: out.relax_vs_companion.unwrap_or(f64::NAN),
            flow_error,
            xk_norm: aux_xk,
            isver_residual: conv.isver_residual,
            relax_zhat: absorb.relax_zhat,
            l4_deficiency: absorb.l4_deficiency,
            pieces: conv.pieces,
            budget,
            met_budget: met,
        });
        current = eta_hat;
    }

    // Smooth the remaining piecewise-constant component and measure the final
    // closed-loop errors.
    let final_control = smooth_pc_component(current, caps.ramp_rho);
    let control_span_residual = final_control.max_span_residual(&problem.space);

    let opts = SolveOptions {
        companion: Some(&reference),
        flow_grid: Some(caps.flow_grid),
        flow_dt: caps.flow_dt,
    };
    let out = solve_detailed(&problem.u0, &problem.h, &final_control, None, cfg, &opts)?;
    let final_endpoint_error = sobolev_norm(&out.trajectory.final_state().sub(&problem.u1), k);
    let final_relax_error = out.relax_vs_companion.unwrap_or(f64::NAN);
    let final_flow_error = out
        .flow
        .as_ref()
        .map(|f| c1_distance(f, &ref_flow_final))
        .transpose()?
        .unwrap_or(f64::NAN);
    let total_error = final_endpoint_error + final_relax_error + final_flow_error;
    budget_met &= total_error < problem.epsilon;

    Ok(StaircaseOutcome {
        control: final_control,
        trace: StaircaseTrace {
            levels,
            ladder_depth: depth,
            saturates_truncation: saturates,
            restricted_to_reachable: restricted,
            projection_residual,
            reference_xk,
            final_endpoint_error,
            final_relax_error,
            final_flow_error,
            total_error,
            epsilon: problem.epsilon,
            budget_met,
            uniform_bound_ok,
            control_span_residual,
        },
    })
}

/// Exact per-piece averages of a smooth path (composite Simpson, 33 nodes).
fn pc_average_path(f: impl Fn(f64) -> TrigField, grid: &[f64]) -> PcSignal {
    let mut values = Vec::with_capacity(grid.len() - 1);
    for w in grid.windows(2) {
        let nodes = 32;
        let h = (w[1] - w[0]) / nodes as f64;
        let mut acc = TrigField::zero();
        for i in 0..=nodes {
            let weight = if i == 0 || i == nodes {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc = acc.add_scaled(&f(w[0] + h * i as f64), weight);
        }
        values.push(acc.scaled(h / 3.0 / (w[1] - w[0])));
    }
    PcSignal::new(grid.to_vec(), values)
}

/// Replaces raw piecewise-constant components of a synthesized control by
/// their ramped smoothing (the final control must be smooth).
fn smooth_pc_component(sig: ControlSignal, rho: f64) -> ControlSignal {
    match sig {
        ControlSignal::PiecewiseConstant(pc) => {
            ControlSignal::Ramped(RampedSignal::new(pc, rho, false, false))
        }
        ControlSignal::Sum(parts) => {
            ControlSignal::Sum(parts.into_iter().map(|p| smooth_pc_component(p, rho)).collect())
        }
        other => other,
    }
}
