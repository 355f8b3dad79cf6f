//! Exact coefficient-level calculus for finite trigonometric vector fields on
//! the 3-torus: basis frames, Leray projection, Stokes operator, the bilinear
//! transport term, Sobolev norms, and pointwise evaluation.
//!
//! Fields are stored per canonical wavevector (the lexicographically larger of
//! {l, -l}) as a cosine and a sine coefficient 3-vector. Under the convention
//! that `{c_l, s_l}` is orthonormal, the inner product of two fields is the
//! plain dot product of their coefficient tables; the H^k norm weights mode l
//! by `|l|^{2k}`.

use crate::error::CoreError;
use crate::lattice::{IVec3, LatticeMode};
use crate::vec3::{self, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Integer wavevector (canonical representative when used as a field key).
pub type Mode = IVec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrigKind {
    Cos,
    Sin,
}

impl TrigKind {
    pub fn label(self) -> &'static str {
        match self {
            TrigKind::Cos => "cos",
            TrigKind::Sin => "sin",
        }
    }
}

/// True when `ell` is its own canonical representative: the first nonzero
/// component is positive. The zero vector is canonical.
pub fn is_canonical(ell: Mode) -> bool {
    for c in ell {
        if c > 0 {
            return true;
        }
        if c < 0 {
            return false;
        }
    }
    true
}

/// Canonical representative of {ell, -ell} and whether the sign was flipped
/// (a flip negates sine coefficients: sin<-l,x> = -sin<l,x>).
pub fn canonicalize(ell: Mode) -> (Mode, bool) {
    if is_canonical(ell) {
        (ell, false)
    } else {
        ([-ell[0], -ell[1], -ell[2]], true)
    }
}

pub fn mode_f64(ell: Mode) -> Vec3 {
    [ell[0] as f64, ell[1] as f64, ell[2] as f64]
}

pub fn mode_norm_sq(ell: Mode) -> f64 {
    (ell[0] * ell[0] + ell[1] * ell[1] + ell[2] * ell[2]) as f64
}

pub fn mode_max_norm(ell: Mode) -> i64 {
    ell.iter().map(|c| c.abs()).max().unwrap_or(0)
}

/// Per-mode coefficient pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Coeffs {
    pub cos: Vec3,
    pub sin: Vec3,
}

impl Coeffs {
    fn is_zero(&self) -> bool {
        self.cos == [0.0; 3] && self.sin == [0.0; 3]
    }
}

/// A finite trigonometric vector field with no divergence constraint.
///
/// Canonicalization is still applied (terms at -l fold into l), and the zero
/// mode is kept if present. Raw fields are the input type of the Leray
/// projection and the argument type of the bilinear term; certificate ζ's may
/// legitimately carry coefficients that are not orthogonal to their mode.
///
/// Serializes as `{ "modes": [ { "ell": [i,j,k], "cos": [..], "sin": [..] } ] }`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "Snapshot", from = "Snapshot")]
pub struct RawField {
    terms: BTreeMap<Mode, Coeffs>,
}

/// A finite divergence-free, mean-zero trigonometric vector field.
///
/// Invariants: every coefficient vector is orthogonal to its mode (tolerance
/// 1e-12 at construction, exact under the crate's own operations), there is no
/// zero-mode term, and keys are canonical representatives.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawField", into = "RawField")]
pub struct TrigField {
    terms: BTreeMap<Mode, Coeffs>,
}

pub const DIV_FREE_TOL: f64 = 1e-12;

impl RawField {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `amp * trig<ell, x>` to the field, folding into the canonical mode.
    pub fn add_term(&mut self, ell: Mode, kind: TrigKind, amp: Vec3) {
        let (key, flipped) = canonicalize(ell);
        let entry = self.terms.entry(key).or_default();
        let sign = if flipped && kind == TrigKind::Sin {
            -1.0
        } else {
            1.0
        };
        match kind {
            TrigKind::Cos => entry.cos = vec3::axpy(entry.cos, sign, amp),
            TrigKind::Sin => entry.sin = vec3::axpy(entry.sin, sign, amp),
        }
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn single(ell: Mode, kind: TrigKind, amp: Vec3) -> Self {
        let mut f = Self::new();
        f.add_term(ell, kind, amp);
        f
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mode, &Coeffs)> {
        self.terms.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            c.cos = vec3::scale(c.cos, s);
            c.sin = vec3::scale(c.sin, s);
        }
        out.prune();
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(*m, TrigKind::Cos, c.cos);
            out.add_term(*m, TrigKind::Sin, c.sin);
        }
        out
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| !c.is_zero());
    }

    /// Pointwise value at `x`.
    pub fn eval(&self, x: Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for (m, c) in &self.terms {
            let theta = vec3::dot(mode_f64(*m), x);
            let (s, co) = theta.sin_cos();
            out = vec3::axpy(out, co, c.cos);
            out = vec3::axpy(out, s, c.sin);
        }
        out
    }

    /// Pointwise Jacobian: `grad[i][j] = d u_i / d x_j`.
    pub fn gradient(&self, x: Vec3) -> vec3::Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (m, c) in &self.terms {
            let l = mode_f64(*m);
            let theta = vec3::dot(l, x);
            let (s, co) = theta.sin_cos();
            for i in 0..3 {
                let w = -c.cos[i] * s + c.sin[i] * co;
                for j in 0..3 {
                    out[i][j] += w * l[j];
                }
            }
        }
        out
    }

    /// L2-convention norm: plain Euclidean norm of the coefficient table.
    pub fn l2_norm(&self) -> f64 {
        let mut s = 0.0;
        for c in self.terms.values() {
            s += vec3::dot(c.cos, c.cos) + vec3::dot(c.sin, c.sin);
        }
        s.sqrt()
    }
}

impl From<TrigField> for RawField {
    fn from(f: TrigField) -> RawField {
        RawField { terms: f.terms }
    }
}

impl From<&TrigField> for RawField {
    fn from(f: &TrigField) -> RawField {
        RawField {
            terms: f.terms.clone(),
        }
    }
}

impl TryFrom<RawField> for TrigField {
    type Error = CoreError;

    fn try_from(raw: RawField) -> Result<TrigField, CoreError> {
        for (m, c) in raw.terms() {
            if *m == [0, 0, 0] {
                return Err(CoreError::Config(
                    "divergence-free field carries a zero-mode (mean) term".into(),
                ));
            }
            let l = mode_f64(*m);
            let scale = (vec3::norm(c.cos) + vec3::norm(c.sin)).max(1.0);
            if vec3::dot(c.cos, l).abs() > DIV_FREE_TOL * scale * vec3::norm(l)
                || vec3::dot(c.sin, l).abs() > DIV_FREE_TOL * scale * vec3::norm(l)
            {
                return Err(CoreError::Config(format!(
                    "coefficient at mode {m:?} is not orthogonal to it"
                )));
            }
        }
        Ok(TrigField { terms: raw.terms })
    }
}

impl TrigField {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Single-term divergence-free field; panics if `amp` is not orthogonal to `ell`.
    pub fn single(ell: Mode, kind: TrigKind, amp: Vec3) -> Self {
        TrigField::try_from(RawField::single(ell, kind, amp)).expect("amplitude not in ell-perp")
    }

    /// The basis field `c_l` (first frame vector at the given mode, cosine).
    pub fn c_basis(ell: Mode) -> Self {
        let frame = LatticeMode::new(ell).expect("nonzero mode").frame;
        Self::single(ell, TrigKind::Cos, frame.0)
    }

    /// The basis field `s_l`.
    pub fn s_basis(ell: Mode) -> Self {
        let frame = LatticeMode::new(ell).expect("nonzero mode").frame;
        Self::single(ell, TrigKind::Sin, frame.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mode, &Coeffs)> {
        self.terms.iter()
    }

    pub fn coeffs_at(&self, ell: &Mode) -> Option<&Coeffs> {
        self.terms.get(ell)
    }

    pub fn modes(&self) -> impl Iterator<Item = &Mode> {
        self.terms.keys()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_modes(&self) -> usize {
        self.terms.len()
    }

    pub fn max_mode_norm(&self) -> i64 {
        self.terms.keys().map(|m| mode_max_norm(*m)).max().unwrap_or(0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero();
        }
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            c.cos = vec3::scale(c.cos, s);
            c.sin = vec3::scale(c.sin, s);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.add_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(other, -1.0)
    }

    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            let e = terms.entry(*m).or_default();
            e.cos = vec3::axpy(e.cos, s, c.cos);
            e.sin = vec3::axpy(e.sin, s, c.sin);
            if e.is_zero() {
                terms.remove(m);
            }
        }
        TrigField { terms }
    }

    /// Drops all terms beyond the max-norm radius.
    pub fn truncated(&self, radius: i64) -> Self {
        TrigField {
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| mode_max_norm(**m) <= radius)
                .map(|(m, c)| (*m, *c))
                .collect(),
        }
    }

    /// Inner product in the convention where `{c_l, s_l}` is orthonormal.
    pub fn inner(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        // Iterate the smaller table.
        let (a, b) = if self.terms.len() <= other.terms.len() {
            (&self.terms, &other.terms)
        } else {
            (&other.terms, &self.terms)
        };
        for (m, ca) in a {
            if let Some(cb) = b.get(m) {
                s += vec3::dot(ca.cos, cb.cos) + vec3::dot(ca.sin, cb.sin);
            }
        }
        s
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn eval(&self, x: Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for (m, c) in &self.terms {
            let theta = vec3::dot(mode_f64(*m), x);
            let (s, co) = theta.sin_cos();
            out = vec3::axpy(out, co, c.cos);
            out = vec3::axpy(out, s, c.sin);
        }
        out
    }

    pub fn gradient(&self, x: Vec3) -> vec3::Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (m, c) in &self.terms {
            let l = mode_f64(*m);
            let theta = vec3::dot(l, x);
            let (s, co) = theta.sin_cos();
            for i in 0..3 {
                let w = -c.cos[i] * s + c.sin[i] * co;
                for j in 0..3 {
                    out[i][j] += w * l[j];
                }
            }
        }
        out
    }

    /// Largest divergence residual `|<coeff, l>| / (|coeff| |l|)` over all terms.
    pub fn divergence_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, c) in &self.terms {
            let l = mode_f64(*m);
            let nl = vec3::norm(l);
            for v in [c.cos, c.sin] {
                let nv = vec3::norm(v);
                if nv > 0.0 {
                    worst = worst.max(vec3::dot(v, l).abs() / (nv * nl));
                }
            }
        }
        worst
    }
}

/// Leray projection: each coefficient `a` at mode `l` maps to
/// `a - <a,l> l / |l|^2`; the zero mode is dropped.
pub fn leray_project(raw: &RawField) -> TrigField {
    let mut terms = BTreeMap::new();
    for (m, c) in raw.terms() {
        if *m == [0, 0, 0] {
            continue;
        }
        let l = mode_f64(*m);
        let p = Coeffs {
            cos: vec3::project_perp(c.cos, l),
            sin: vec3::project_perp(c.sin, l),
        };
        if !p.is_zero() {
            terms.insert(*m, p);
        }
    }
    TrigField { terms }
}

/// Stokes operator: scales the mode-`l` coefficients by `|l|^2`.
pub fn stokes_apply(u: &TrigField) -> TrigField {
    let mut out = u.clone();
    for (m, c) in out.terms.iter_mut() {
        let w = mode_norm_sq(*m);
        c.cos = vec3::scale(c.cos, w);
        c.sin = vec3::scale(c.sin, w);
    }
    out
}

/// Stokes operator on a raw field (used by certificate replays).
pub fn stokes_apply_raw(u: &RawField) -> RawField {
    let mut out = u.clone();
    for (m, c) in out.terms.iter_mut() {
        let w = mode_norm_sq(*m);
        c.cos = vec3::scale(c.cos, w);
        c.sin = vec3::scale(c.sin, w);
    }
    out
}

/// Homogeneous Sobolev norm of order `k`: `(sum |l|^{2k} (|cos|^2 + |sin|^2))^{1/2}`.
pub fn sobolev_norm(u: &TrigField, k: f64) -> f64 {
    let mut s = 0.0;
    for (m, c) in u.terms() {
        let w = mode_weight(*m, k);
        s += w * (vec3::dot(c.cos, c.cos) + vec3::dot(c.sin, c.sin));
    }
    s.sqrt()
}

#[inline]
pub fn mode_weight(m: Mode, k: f64) -> f64 {
    let n2 = mode_norm_sq(m);
    if k == 0.0 {
        1.0
    } else if k == 1.0 {
        n2
    } else if k == 2.0 {
        n2 * n2
    } else if k == 3.0 {
        n2 * n2 * n2
    } else {
        n2.powf(k)
    }
}

/// The bilinear transport term `B(a, b) = Π (<a, ∇> b)` in exact coefficient
/// arithmetic. The mode support of the output is contained in `{m ± n}` over
/// pairs of input modes; the mean part is dropped by the projection.
pub fn bilinear(a: &RawField, b: &RawField) -> TrigField {
    let mut raw = RawField::new();
    for (m, ca) in a.terms() {
        for (n, cb) in b.terms() {
            let nf = mode_f64(*n);
            // Advector a at mode m with coefficients (Ac, As); advected b at
            // mode n with (Bc, Bs). Products of trig factors split into modes
            // m+n and m-n with weight 1/2.
            let ac_n = vec3::dot(ca.cos, nf);
            let as_n = vec3::dot(ca.sin, nf);
            let sum = [m[0] + n[0], m[1] + n[1], m[2] + n[2]];
            let dif = [m[0] - n[0], m[1] - n[1], m[2] - n[2]];
            // mode m+n: cos ½(⟨Ac,n⟩Bs + ⟨As,n⟩Bc), sin ½(⟨As,n⟩Bs − ⟨Ac,n⟩Bc)
            raw.add_term(
                sum,
                TrigKind::Cos,
                vec3::axpy(vec3::scale(cb.sin, 0.5 * ac_n), 0.5 * as_n, cb.cos),
            );
            raw.add_term(
                sum,
                TrigKind::Sin,
                vec3::axpy(vec3::scale(cb.sin, 0.5 * as_n), -0.5 * ac_n, cb.cos),
            );
            // mode m−n: cos ½(⟨Ac,n⟩Bs − ⟨As,n⟩Bc), sin ½(⟨Ac,n⟩Bc + ⟨As,n⟩Bs)
            raw.add_term(
                dif,
                TrigKind::Cos,
                vec3::axpy(vec3::scale(cb.sin, 0.5 * ac_n), -0.5 * as_n, cb.cos),
            );
            raw.add_term(
                dif,
                TrigKind::Sin,
                vec3::axpy(vec3::scale(cb.cos, 0.5 * ac_n), 0.5 * as_n, cb.sin),
            );
        }
    }
    leray_project(&raw)
}

/// `B(u) = B(u, u)` on divergence-free fields.
pub fn bilinear_self(u: &TrigField) -> TrigField {
    let raw: RawField = u.into();
    bilinear(&raw, &raw)
}

/// `B(a, b)` on divergence-free fields.
pub fn bilinear_tf(a: &TrigField, b: &TrigField) -> TrigField {
    bilinear(&a.into(), &b.into())
}

// ---------------------------------------------------------------------------
// Snapshot format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SnapshotTerm {
    ell: Mode,
    cos: Vec3,
    sin: Vec3,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    modes: Vec<SnapshotTerm>,
}

impl From<RawField> for Snapshot {
    fn from(f: RawField) -> Snapshot {
        Snapshot {
            modes: f
                .terms
                .into_iter()
                .map(|(m, c)| SnapshotTerm {
                    ell: m,
                    cos: c.cos,
                    sin: c.sin,
                })
                .collect(),
        }
    }
}

impl From<Snapshot> for RawField {
    fn from(s: Snapshot) -> RawField {
        let mut raw = RawField::new();
        for t in s.modes {
            raw.add_term(t.ell, TrigKind::Cos, t.cos);
            raw.add_term(t.ell, TrigKind::Sin, t.sin);
        }
        raw
    }
}

/// Serializes a field in the snapshot format
/// `{ "modes": [ { "ell": [i,j,k], "cos": [x,y,z], "sin": [x,y,z] } ] }`.
/// Round-trips bit-exactly.
pub fn to_snapshot_json(u: &TrigField) -> String {
    serde_json::to_string_pretty(u).expect("snapshot serialization cannot fail")
}

pub fn from_snapshot_json(s: &str) -> Result<TrigField, CoreError> {
    let raw: RawField = serde_json::from_str(s)?;
    TrigField::try_from(raw)
}
