//! Property tests for the structural invariants of the coefficient calculus
//! and the lattice ladder.

use nssteer_core::fourier::{
    bilinear_tf, from_snapshot_json, leray_project, sobolev_norm, to_snapshot_json, RawField,
    TrigField, TrigKind,
};
use nssteer_core::lattice::{grow_ladder, LatticeSet};
use nssteer_core::rng::Rng;
use proptest::prelude::*;

fn small_mode() -> impl Strategy<Value = [i64; 3]> {
    ([-2i64..=2, -2i64..=2, -2i64..=2]).prop_filter("nonzero", |m| *m != [0, 0, 0])
}

fn coeff() -> impl Strategy<Value = [f64; 3]> {
    [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0]
}

fn div_free_field(seed: u64) -> TrigField {
    let mut rng = Rng::seed_from(seed);
    nssteer_core::sample::random_divfree(&mut rng, 2, 0.7)
}

proptest! {
    /// The Leray projection is idempotent and kills divergence exactly.
    #[test]
    fn leray_idempotent(m in small_mode(), c in coeff(), s in coeff()) {
        let mut raw = RawField::new();
        raw.add_term(m, TrigKind::Cos, c);
        raw.add_term(m, TrigKind::Sin, s);
        let p = leray_project(&raw);
        prop_assert!(p.divergence_residual() < 1e-13);
        let pp = leray_project(&(&p).into());
        prop_assert!(pp.sub(&p).l2_norm() < 1e-14);
    }

    /// Transport is energy-orthogonal and divergence-free for seeded fields.
    #[test]
    fn transport_invariants(seed_a in 0u64..1_000, seed_b in 0u64..1_000) {
        let a = div_free_field(seed_a);
        let b = div_free_field(seed_b.wrapping_add(7_777));
        let t = bilinear_tf(&a, &b);
        prop_assert!(t.divergence_residual() < 1e-12);
        let scale = 1.0 + t.l2_norm() * b.l2_norm();
        prop_assert!(t.inner(&b).abs() < 1e-11 * scale);
    }

    /// Snapshot serialization round-trips bit-exactly.
    #[test]
    fn snapshot_round_trip(seed in 0u64..1_000) {
        let u = div_free_field(seed.wrapping_add(31));
        let json = to_snapshot_json(&u);
        let back = from_snapshot_json(&json).unwrap();
        prop_assert_eq!(&u, &back);
        prop_assert_eq!(json, to_snapshot_json(&back));
    }

    /// Sobolev norms are monotone in the order for mean-zero fields with
    /// integer modes (|l| >= 1 implies the weights grow with k).
    #[test]
    fn sobolev_monotone_in_order(seed in 0u64..1_000) {
        let u = div_free_field(seed.wrapping_add(63));
        let n0 = sobolev_norm(&u, 0.0);
        let n1 = sobolev_norm(&u, 1.0);
        let n3 = sobolev_norm(&u, 3.0);
        prop_assert!(n0 <= n1 + 1e-12 && n1 <= n3 + 1e-12);
    }

    /// The lattice ladder is monotone in depth and stays inside the integer
    /// span of the seed set.
    #[test]
    fn ladder_monotone_and_in_span(
        vecs in proptest::collection::vec([-2i64..=2, -2i64..=2, -2i64..=2], 1..4),
        j in 1usize..3,
    ) {
        let k = LatticeSet::new(vecs.into_iter().filter(|v| *v != [0, 0, 0]));
        let prev = grow_ladder(&k, j - 1);
        let next = grow_ladder(&k, j);
        for v in prev.iter() {
            prop_assert!(next.contains(v));
        }
        for v in next.iter() {
            prop_assert!(nssteer_core::lattice::integer_span_membership(&k, *v));
        }
    }
}
