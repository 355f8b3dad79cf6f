//! Test fixtures: the pseudo-spectral oracle for the bilinear term.
//!
//! The oracle evaluates `<a, ∇> b` pointwise on a uniform grid, recovers the
//! trigonometric coefficients by discrete Fourier sums, and applies the Leray
//! projection — a route fully independent of the coefficient-level
//! convolution it checks. For inputs supported on |l|_inf <= 2 the product is
//! band-limited by 4 < N/2, so a 16-per-axis grid makes the transform exact
//! up to roundoff.

use nssteer_core::fourier::{is_canonical, leray_project, Mode, RawField, TrigField, TrigKind};
use nssteer_core::vec3::{self, Vec3};

pub fn pseudo_spectral_bilinear(
    a: &TrigField,
    b: &TrigField,
    grid_n: usize,
    out_radius: i64,
) -> TrigField {
    let tau = std::f64::consts::TAU;
    let step = tau / grid_n as f64;
    let npts = grid_n.pow(3);
    let mut points: Vec<Vec3> = Vec::with_capacity(npts);
    let mut values: Vec<Vec3> = Vec::with_capacity(npts);
    for i in 0..grid_n {
        for j in 0..grid_n {
            for k in 0..grid_n {
                let x = [i as f64 * step, j as f64 * step, k as f64 * step];
                let adv = a.eval(x);
                let grad_b = b.gradient(x);
                points.push(x);
                values.push(vec3::mat_vec(&grad_b, adv));
            }
        }
    }
    let mut raw = RawField::new();
    for mx in -out_radius..=out_radius {
        for my in -out_radius..=out_radius {
            for mz in -out_radius..=out_radius {
                let m: Mode = [mx, my, mz];
                if m == [0, 0, 0] || !is_canonical(m) {
                    continue;
                }
                let mf = [m[0] as f64, m[1] as f64, m[2] as f64];
                let mut cc = [0.0; 3];
                let mut sc = [0.0; 3];
                for (x, v) in points.iter().zip(&values) {
                    let theta = vec3::dot(mf, *x);
                    let (s, co) = theta.sin_cos();
                    cc = vec3::axpy(cc, co, *v);
                    sc = vec3::axpy(sc, s, *v);
                }
                let w = 2.0 / npts as f64;
                raw.add_term(m, TrigKind::Cos, vec3::scale(cc, w));
                raw.add_term(m, TrigKind::Sin, vec3::scale(sc, w));
            }
        }
    }
    leray_project(&raw)
}
