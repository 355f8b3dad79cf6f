//! Integer-lattice algebra on Z^3: generator testing, span membership, and the
//! mode-set ladder `K_j`.

use crate::vec3::{cross, norm, project_perp, scale, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Integer wavevector.
pub type IVec3 = [i64; 3];

/// A nonzero integer mode together with a deterministic orthonormal frame of
/// the plane orthogonal to it.
///
/// The frame is built from the coordinate axis least aligned with `ell`
/// (smallest absolute component, lowest index on ties), Gram-Schmidted against
/// `ell`; the second frame vector is the cross product of the unit mode with
/// the first. The same `ell` therefore always yields bitwise-identical frames.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeMode {
    pub ell: IVec3,
    pub frame: (Vec3, Vec3),
}

impl LatticeMode {
    pub fn new(ell: IVec3) -> Option<Self> {
        if ell == [0, 0, 0] {
            return None;
        }
        let l = [ell[0] as f64, ell[1] as f64, ell[2] as f64];
        let axis = least_aligned_axis(ell);
        let mut e = [0.0; 3];
        e[axis] = 1.0;
        let p = project_perp(e, l);
        let p = scale(p, 1.0 / norm(p));
        let q = cross(scale(l, 1.0 / norm(l)), p);
        Some(LatticeMode { ell, frame: (p, q) })
    }
}

fn least_aligned_axis(ell: IVec3) -> usize {
    let mut axis = 0;
    let mut best = ell[0].abs();
    for i in 1..3 {
        if ell[i].abs() < best {
            best = ell[i].abs();
            axis = i;
        }
    }
    axis
}

/// A finite, deduplicated set of integer vectors with lexicographic iteration order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticeSet {
    modes: BTreeSet<IVec3>,
}

impl LatticeSet {
    pub fn new(modes: impl IntoIterator<Item = IVec3>) -> Self {
        LatticeSet {
            modes: modes.into_iter().collect(),
        }
    }

    pub fn standard_basis() -> Self {
        Self::new([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    }

    pub fn iter(&self) -> impl Iterator<Item = &IVec3> {
        self.modes.iter()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn contains(&self, v: &IVec3) -> bool {
        self.modes.contains(v)
    }

    pub fn to_vec(&self) -> Vec<IVec3> {
        self.modes.iter().copied().collect()
    }
}

impl FromIterator<IVec3> for LatticeSet {
    fn from_iter<T: IntoIterator<Item = IVec3>>(iter: T) -> Self {
        Self::new(iter)
    }
}

fn det3i(a: IVec3, b: IVec3, c: IVec3) -> i128 {
    let a = [a[0] as i128, a[1] as i128, a[2] as i128];
    let b = [b[0] as i128, b[1] as i128, b[2] as i128];
    let c = [c[0] as i128, c[1] as i128, c[2] as i128];
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// True iff `K` generates Z^3, i.e. gcd{ |det(a,b,c)| : a,b,c in K } = 1.
///
/// The gcd of the empty (or all-singular) determinant set is 0, so sets with
/// fewer than three members are never generators.
pub fn is_generator(k: &LatticeSet) -> bool {
    let v = k.to_vec();
    let n = v.len();
    let mut g: i128 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            for l in (j + 1)..n {
                g = gcd(g, det3i(v[i], v[j], v[l]));
                if g == 1 {
                    return true;
                }
            }
        }
    }
    g == 1
}

/// Hermite-style row echelon form of the integer row span of `rows`.
///
/// Returns pivot rows in column order; the row lattice is preserved exactly.
fn hermite_rows(rows: &[IVec3]) -> Vec<[i128; 3]> {
    let mut work: Vec<[i128; 3]> = rows
        .iter()
        .map(|r| [r[0] as i128, r[1] as i128, r[2] as i128])
        .filter(|r| *r != [0, 0, 0])
        .collect();
    let mut pivots: Vec<[i128; 3]> = Vec::new();
    for col in 0..3 {
        // Reduce all rows against each other in this column with the gcd.
        loop {
            work.retain(|r| *r != [0, 0, 0]);
            let mut nonzero: Vec<usize> = (0..work.len()).filter(|&i| work[i][col] != 0).collect();
            if nonzero.len() <= 1 {
                break;
            }
            nonzero.sort_by_key(|&i| work[i][col].abs());
            let (a, b) = (nonzero[0], nonzero[1]);
            let q = work[b][col] / work[a][col];
            for c in 0..3 {
                work[b][c] -= q * work[a][c];
            }
        }
        if let Some(i) = (0..work.len()).find(|&i| work[i][col] != 0) {
            let mut p = work.remove(i);
            if p[col] < 0 {
                for c in 0..3 {
                    p[c] = -p[c];
                }
            }
            pivots.push(p);
        }
    }
    pivots
}

/// True iff `a` is an integer linear combination of the elements of `K`.
///
/// Computed by reducing `a` against the Hermite form of the row lattice of `K`;
/// membership holds iff the reduction terminates at zero with exact divisions.
pub fn integer_span_membership(k: &LatticeSet, a: IVec3) -> bool {
    let pivots = hermite_rows(&k.to_vec());
    let mut r = [a[0] as i128, a[1] as i128, a[2] as i128];
    for p in &pivots {
        let col = (0..3).find(|&c| p[c] != 0).expect("pivot row is nonzero");
        if r[col] % p[col] != 0 {
            return false;
        }
        let q = r[col] / p[col];
        for c in 0..3 {
            r[c] -= q * p[c];
        }
    }
    r == [0, 0, 0]
}

fn parallel(m: IVec3, n: IVec3) -> bool {
    let c = [
        m[1] * n[2] - m[2] * n[1],
        m[2] * n[0] - m[0] * n[2],
        m[0] * n[1] - m[1] * n[0],
    ];
    c == [0, 0, 0]
}

/// One growth step: `K ∪ { m ± n : m, n ∈ K, m ∦ n }`, zero vectors discarded.
pub fn grow_step(k: &LatticeSet) -> LatticeSet {
    let v = k.to_vec();
    let mut out: BTreeSet<IVec3> = v.iter().copied().collect();
    for (i, m) in v.iter().enumerate() {
        for n in v.iter().skip(i + 1) {
            if parallel(*m, *n) {
                continue;
            }
            for cand in [
                [m[0] + n[0], m[1] + n[1], m[2] + n[2]],
                [m[0] - n[0], m[1] - n[1], m[2] - n[2]],
                [n[0] - m[0], n[1] - m[1], n[2] - m[2]],
            ] {
                if cand != [0, 0, 0] {
                    out.insert(cand);
                }
            }
        }
    }
    LatticeSet { modes: out }
}

/// The ladder `K_j`: `K_0 = K`, `K_j = K_{j-1} ∪ {m ± n : m, n ∈ K_{j-1}, m ∦ n}`.
pub fn grow_ladder(k: &LatticeSet, j: usize) -> LatticeSet {
    let mut cur = k.clone();
    for _ in 0..j {
        let next = grow_step(&cur);
        if next.len() == cur.len() {
            return next;
        }
        cur = next;
    }
    cur
}

/// Like [`grow_ladder`] but discarding vectors with max-norm beyond `radius`
/// at every step. Used for bounded reachability scans.
pub fn grow_ladder_truncated(k: &LatticeSet, j: usize, radius: i64) -> LatticeSet {
    let mut cur = LatticeSet::new(
        k.iter()
            .copied()
            .filter(|m| m.iter().all(|c| c.abs() <= radius)),
    );
    for _ in 0..j {
        let next = LatticeSet::new(
            grow_step(&cur)
                .iter()
                .copied()
                .filter(|m| m.iter().all(|c| c.abs() <= radius)),
        );
        if next.len() == cur.len() {
            return next;
        }
        cur = next;
    }
    cur
}

/// A small modular certificate that `target` lies outside the integer span of `K`:
/// a vector `c` and modulus `q >= 2` with `<c, k> ≡ 0 (mod q)` for all `k` in `K`
/// while `<c, target>` is not.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParityWitness {
    pub c: IVec3,
    pub modulus: i64,
}

/// Searches small moduli for a [`ParityWitness`]. Returns `None` when `target`
/// is in the span (no witness exists) or when no witness with modulus <= 16 and
/// coefficients < modulus exists.
pub fn parity_witness(k: &LatticeSet, target: IVec3) -> Option<ParityWitness> {
    if integer_span_membership(k, target) {
        return None;
    }
    for q in 2..=16i64 {
        for c0 in 0..q {
            for c1 in 0..q {
                for c2 in 0..q {
                    let c = [c0, c1, c2];
                    if c == [0, 0, 0] {
                        continue;
                    }
                    let dot = |v: IVec3| v[0] * c[0] + v[1] * c[1] + v[2] * c[2];
                    if k.iter().all(|m| dot(*m).rem_euclid(q) == 0)
                        && dot(target).rem_euclid(q) != 0
                    {
                        return Some(ParityWitness { c, modulus: q });
                    }
                }
            }
        }
    }
    None
}
