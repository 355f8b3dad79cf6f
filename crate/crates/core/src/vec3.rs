//! Minimal fixed-size real linear algebra: 3-vectors and 3x3 matrices.

/// Real 3-vector. Plain `[f64; 3]` with the handful of operations the crate needs.
pub type Vec3 = [f64; 3];

/// Real 3x3 matrix, row-major: `m[i][j]` is row `i`, column `j`.
pub type Mat3 = [[f64; 3]; 3];

pub const ZERO3: Vec3 = [0.0; 3];

pub const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn axpy(y: Vec3, s: f64, x: Vec3) -> Vec3 {
    [y[0] + s * x[0], y[1] + s * x[1], y[2] + s * x[2]]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Orthogonal projection of `a` onto the plane orthogonal to `l` (`l` nonzero).
#[inline]
pub fn project_perp(a: Vec3, l: Vec3) -> Vec3 {
    let s = dot(a, l) / dot(l, l);
    sub(a, scale(l, s))
}

#[inline]
pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

#[inline]
pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

#[inline]
pub fn mat_add_scaled(m: &mut Mat3, s: f64, x: &Mat3) {
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] += s * x[i][j];
        }
    }
}

#[inline]
pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Frobenius norm of the difference of two matrices.
#[inline]
pub fn frobenius_dist(a: &Mat3, b: &Mat3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let d = a[i][j] - b[i][j];
            s += d * d;
        }
    }
    s.sqrt()
}

/// Gram-Schmidt a vector against an orthonormal list; returns the normalized
/// residual if it is independent at tolerance `tol` (relative to the input norm).
pub fn orthonormal_residual(basis: &[Vec3], v: Vec3, tol: f64) -> Option<Vec3> {
    let scale_ref = norm(v).max(1.0);
    let mut r = v;
    for _ in 0..2 {
        for b in basis {
            let c = dot(r, *b);
            r = axpy(r, -c, *b);
        }
    }
    let n = norm(r);
    if n <= tol * scale_ref {
        None
    } else {
        Some(scale(r, 1.0 / n))
    }
}

/// Basis of the intersection of two subspaces of R^3, each given by an
/// orthonormal spanning list.
pub fn intersect_spans(a: &[Vec3], b: &[Vec3], tol: f64) -> Vec<Vec3> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    // v in span(a) is in span(b) iff (I - P_b) v = 0. Diagonalize the quadratic
    // form of (I - P_b) restricted to span(a); null directions are the intersection.
    let pb = |v: Vec3| -> Vec3 {
        let mut out = ZERO3;
        for x in b {
            out = axpy(out, dot(v, *x), *x);
        }
        out
    };
    let k = a.len();
    let mut gram = [[0.0; 3]; 3];
    for i in 0..k {
        for j in 0..k {
            let ri = sub(a[i], pb(a[i]));
            gram[i][j] = dot(ri, sub(a[j], pb(a[j])));
        }
    }
    let mut out = Vec::new();
    match k {
        1 => {
            if gram[0][0] <= tol {
                out.push(a[0]);
            }
        }
        _ => {
            // k = 2 (subspaces of a plane never exceed 2 here; k = 3 reduces to
            // span(b) and is handled by the same 2x2 logic applied pairwise).
            for idx in 0..k {
                // Deflate previously found directions to keep the basis orthonormal.
                let mut v = a[idx];
                for w in &out {
                    v = axpy(v, -dot(v, *w), *w);
                }
                let n = norm(v);
                if n < 1e-14 {
                    continue;
                }
                v = scale(v, 1.0 / n);
                let rv = sub(v, pb(v));
                if dot(rv, rv) <= tol {
                    out.push(v);
                    continue;
                }
                // Mix with the remaining directions to find a null combination.
                for jdx in (idx + 1)..k {
                    let mut w = a[jdx];
                    for q in &out {
                        w = axpy(w, -dot(w, *q), *q);
                    }
                    let nw = norm(w);
                    if nw < 1e-14 {
                        continue;
                    }
                    w = scale(w, 1.0 / nw);
                    let rw = sub(w, pb(w));
                    // Solve the 2x2 eigenproblem of the form restricted to {v, w}.
                    let aa = dot(rv, rv);
                    let bb = dot(rv, rw);
                    let cc = dot(rw, rw);
                    let tr = aa + cc;
                    let disc = ((aa - cc) * (aa - cc) + 4.0 * bb * bb).sqrt();
                    let lam_min = 0.5 * (tr - disc);
                    if lam_min <= tol {
                        // Eigenvector for lam_min.
                        let (x, y) = if bb.abs() > 1e-15 {
                            (lam_min - cc, bb)
                        } else if aa <= cc {
                            (1.0, 0.0)
                        } else {
                            (0.0, 1.0)
                        };
                        let cand = add(scale(v, x), scale(w, y));
                        let n = norm(cand);
                        if n > 1e-14 {
                            out.push(scale(cand, 1.0 / n));
                        }
                    }
                }
            }
        }
    }
    out
}
