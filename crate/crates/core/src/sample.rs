//! Seeded random fields and signals for property sweeps and experiments.

use crate::fourier::{is_canonical, leray_project, Mode, RawField, TrigField, TrigKind};
use crate::rng::Rng;
use crate::space::ModeSpace;

/// Random divergence-free field supported on all canonical modes with
/// max-norm <= `radius`, coefficients uniform in [-amplitude, amplitude]
/// before projection.
pub fn random_divfree(rng: &mut Rng, radius: i64, amplitude: f64) -> TrigField {
    let mut raw = RawField::new();
    for x in -radius..=radius {
        for y in -radius..=radius {
            for z in -radius..=radius {
                let m: Mode = [x, y, z];
                if m == [0, 0, 0] || !is_canonical(m) {
                    continue;
                }
                raw.add_term(m, TrigKind::Cos, random_vec(rng, amplitude));
                raw.add_term(m, TrigKind::Sin, random_vec(rng, amplitude));
            }
        }
    }
    leray_project(&raw)
}

/// Random field in the span of a mode space's basis, coefficients uniform in
/// [-amplitude, amplitude].
pub fn random_in_span(rng: &mut Rng, space: &ModeSpace, amplitude: f64) -> TrigField {
    let mut out = TrigField::zero();
    for b in space.basis() {
        out = out.add_scaled(b, rng.range(-amplitude, amplitude));
    }
    out
}

/// Random field with a prescribed Sobolev-k norm.
pub fn random_with_norm(rng: &mut Rng, radius: i64, k: f64, target_norm: f64) -> TrigField {
    let u = random_divfree(rng, radius, 1.0);
    let n = crate::fourier::sobolev_norm(&u, k);
    if n == 0.0 {
        return u;
    }
    u.scaled(target_norm / n)
}

pub fn random_vec(rng: &mut Rng, amplitude: f64) -> [f64; 3] {
    [
        rng.range(-amplitude, amplitude),
        rng.range(-amplitude, amplitude),
        rng.range(-amplitude, amplitude),
    ]
}
