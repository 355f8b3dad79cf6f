//! Finite-dimensional control subspaces: single-mode generators, per-mode
//! coefficient planes, and the orthonormalized projected basis of the span.
//!
//! Generators carry *raw* direction vectors (not necessarily orthogonal to the
//! mode): the pair-construction search of the extension operator uses those
//! raw vectors, while the actual control subspace of H is the Leray projection
//! of the span. For spaces of the form `E(K)` or the two-vanishing-components
//! space the two coincide; for the printed 6-dimensional example they differ.

use crate::fourier::{
    canonicalize, leray_project, Mode, RawField, TrigField, TrigKind,
};
use crate::lattice::{LatticeMode, LatticeSet};
use crate::vec3::{self, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const SPAN_TOL: f64 = 1e-10;

/// A single-mode, single-kind generator with a raw direction vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub mode: Mode,
    pub kind: TrigKind,
    pub dir: Vec3,
}

impl Generator {
    pub fn raw_field(&self) -> RawField {
        RawField::single(self.mode, self.kind, self.dir)
    }
}

/// Raw direction spans of the cosine and sine planes at one mode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlanePair {
    pub cos: Vec<Vec3>,
    pub sin: Vec<Vec3>,
}

impl PlanePair {
    pub fn plane(&self, kind: TrigKind) -> &[Vec3] {
        match kind {
            TrigKind::Cos => &self.cos,
            TrigKind::Sin => &self.sin,
        }
    }

    fn plane_mut(&mut self, kind: TrigKind) -> &mut Vec<Vec3> {
        match kind {
            TrigKind::Cos => &mut self.cos,
            TrigKind::Sin => &mut self.sin,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ModeSpace {
    generators: Vec<Generator>,
    planes: BTreeMap<Mode, PlanePair>,
    /// Orthonormal basis (H inner product) of the Leray projection of the span.
    basis: Vec<TrigField>,
}

impl ModeSpace {
    pub fn from_generators(gens: impl IntoIterator<Item = Generator>) -> Self {
        let mut space = ModeSpace::default();
        for g in gens {
            space.insert_generator(g);
        }
        space
    }

    /// `E(K)`: full cosine and sine planes (the frame of the mode's orthogonal
    /// plane) at every nonzero mode of `K`. The zero mode contributes nothing.
    pub fn from_lattice(k: &LatticeSet) -> Self {
        let mut gens = Vec::new();
        for ell in k.iter() {
            let Some(mode) = LatticeMode::new(*ell) else {
                continue;
            };
            let (canon, _) = canonicalize(*ell);
            let frame = LatticeMode::new(canon).unwrap_or(mode).frame;
            for kind in [TrigKind::Cos, TrigKind::Sin] {
                for dir in [frame.0, frame.1] {
                    gens.push(Generator {
                        mode: canon,
                        kind,
                        dir,
                    });
                }
            }
        }
        Self::from_generators(gens)
    }

    /// The 8-dimensional two-vanishing-components space: directions
    /// `P_m e` (e = third axis) at the four modes of the defining set.
    pub fn two_component_eight_dim() -> Self {
        let e = [0.0, 0.0, 1.0];
        let modes: [Mode; 4] = [[1, 0, 0], [0, 1, 0], [1, 0, 1], [0, 1, 1]];
        let mut gens = Vec::new();
        for m in modes {
            let dir = vec3::project_perp(e, [m[0] as f64, m[1] as f64, m[2] as f64]);
            for kind in [TrigKind::Cos, TrigKind::Sin] {
                gens.push(Generator { mode: m, kind, dir });
            }
        }
        Self::from_generators(gens)
    }

    /// The printed 6-dimensional space with raw (unprojected) direction
    /// vectors a = (1,1,1), e = (0,0,1), b = (1,0,0).
    pub fn six_dim_raw() -> Self {
        let entries: [(Mode, Vec3); 3] = [
            ([1, 0, 1], [1.0, 1.0, 1.0]),
            ([0, 1, 1], [0.0, 0.0, 1.0]),
            ([0, 0, 1], [1.0, 0.0, 0.0]),
        ];
        let mut gens = Vec::new();
        for (m, dir) in entries {
            for kind in [TrigKind::Cos, TrigKind::Sin] {
                gens.push(Generator { mode: m, kind, dir });
            }
        }
        Self::from_generators(gens)
    }

    /// Leray projection of the printed 6-dimensional space (divergence-free
    /// realization used by the steering staircase).
    pub fn six_dim_projected() -> Self {
        let raw = Self::six_dim_raw();
        let gens = raw
            .generators
            .iter()
            .map(|g| {
                let m = [g.mode[0] as f64, g.mode[1] as f64, g.mode[2] as f64];
                Generator {
                    mode: g.mode,
                    kind: g.kind,
                    dir: vec3::project_perp(g.dir, m),
                }
            })
            .collect::<Vec<_>>();
        Self::from_generators(gens)
    }

    /// The full divergence-free truncation: both frame directions, both kinds,
    /// at every canonical mode with max-norm <= radius.
    pub fn full_truncation(radius: i64) -> Self {
        let mut set = Vec::new();
        for x in -radius..=radius {
            for y in -radius..=radius {
                for z in -radius..=radius {
                    if [x, y, z] != [0, 0, 0] {
                        set.push([x, y, z]);
                    }
                }
            }
        }
        Self::from_lattice(&LatticeSet::new(set))
    }

    fn insert_generator(&mut self, g: Generator) {
        let (canon, flip) = canonicalize(g.mode);
        let dir = if flip && g.kind == TrigKind::Sin {
            vec3::scale(g.dir, -1.0)
        } else {
            g.dir
        };
        if vec3::norm(dir) == 0.0 || canon == [0, 0, 0] {
            return;
        }
        let plane = self.planes.entry(canon).or_default().plane_mut(g.kind);
        if let Some(unit) = vec3::orthonormal_residual(plane, dir, SPAN_TOL) {
            plane.push(unit);
            let g = Generator {
                mode: canon,
                kind: g.kind,
                dir,
            };
            let projected = leray_project(&g.raw_field());
            self.generators.push(g);
            if let Some(b) = orthonormalize_against(&self.basis, &projected) {
                self.basis.push(b);
            }
        }
    }

    /// Extends the space by a generator, returning true when the direction was
    /// new (not already in the raw plane span at its mode).
    pub fn extend_with(&mut self, g: Generator) -> bool {
        let before = self.generators.len();
        self.insert_generator(g);
        self.generators.len() > before
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn basis(&self) -> &[TrigField] {
        &self.basis
    }

    /// Dimension of the projected span.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn planes(&self) -> &BTreeMap<Mode, PlanePair> {
        &self.planes
    }

    pub fn plane(&self, mode: Mode, kind: TrigKind) -> &[Vec3] {
        static EMPTY: [Vec3; 0] = [];
        self.planes
            .get(&mode)
            .map(|p| p.plane(kind))
            .unwrap_or(&EMPTY)
    }

    pub fn mode_support(&self) -> Vec<Mode> {
        self.planes.keys().copied().collect()
    }

    /// Orthogonal projection (H inner product) onto the projected span.
    pub fn project(&self, u: &TrigField) -> TrigField {
        let mut out = TrigField::zero();
        for b in &self.basis {
            out = out.add_scaled(b, u.inner(b));
        }
        out
    }

    /// Norm of `u - P_E u`, the span-membership residual.
    pub fn span_residual(&self, u: &TrigField) -> f64 {
        u.sub(&self.project(u)).l2_norm()
    }

    pub fn contains(&self, u: &TrigField, tol: f64) -> bool {
        self.span_residual(u) <= tol * u.l2_norm().max(1.0)
    }

    /// True when every cosine and sine plane at every canonical mode with
    /// max-norm <= radius has the full two dimensions.
    pub fn covers_truncation(&self, radius: i64) -> bool {
        self.missing_planes(radius).is_empty()
    }

    /// Planes (mode, kind) with max-norm <= radius not yet fully reached.
    pub fn missing_planes(&self, radius: i64) -> Vec<(Mode, TrigKind)> {
        let mut missing = Vec::new();
        for x in -radius..=radius {
            for y in -radius..=radius {
                for z in -radius..=radius {
                    let m: Mode = [x, y, z];
                    if m == [0, 0, 0] || !crate::fourier::is_canonical(m) {
                        continue;
                    }
                    for kind in [TrigKind::Cos, TrigKind::Sin] {
                        if self.reached_dim(m, kind) < 2 {
                            missing.push((m, kind));
                        }
                    }
                }
            }
        }
        missing
    }

    /// Dimension of the divergence-free part of the raw plane at (mode, kind):
    /// the projection of the raw span onto the mode's orthogonal plane.
    pub fn reached_dim(&self, mode: Mode, kind: TrigKind) -> usize {
        let raw = self.plane(mode, kind);
        let mf = [mode[0] as f64, mode[1] as f64, mode[2] as f64];
        let mut basis: Vec<Vec3> = Vec::new();
        for d in raw {
            let p = vec3::project_perp(*d, mf);
            if let Some(u) = vec3::orthonormal_residual(&basis, p, SPAN_TOL) {
                basis.push(u);
            }
        }
        basis.len()
    }
}

fn orthonormalize_against(basis: &[TrigField], v: &TrigField) -> Option<TrigField> {
    let scale_ref = v.l2_norm().max(1.0);
    let mut r = v.clone();
    for _ in 0..2 {
        for b in basis {
            let c = r.inner(b);
            r = r.add_scaled(b, -c);
        }
    }
    let n = r.l2_norm();
    if n <= SPAN_TOL * scale_ref {
        None
    } else {
        Some(r.scaled(1.0 / n))
    }
}
