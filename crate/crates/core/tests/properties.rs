use std::f64::consts::PI;

use proptest::prelude::*;

use leggett_ineq::inequality::{discrete_average, l_n, nlv_bound, u_coefficient};
use leggett_ineq::leggett::{admissible_c_range, leggett_outcomes};
use leggett_ineq::quantum::{CorrelationSource, TwoQubitState};
use leggett_ineq::simulate::{estimate_c, CountQuad};
use leggett_ineq::sphere::{
    analyzer_angles, analyzer_stokes, build_schedule, default_frames, rotate, PlaneFrame, UnitVector,
};

fn unit() -> impl Strategy<Value = UnitVector> {
    (-1.0f64..=1.0, 0.0f64..(2.0 * PI)).prop_map(|(z, phi)| {
        let r = (1.0 - z * z).max(0.0).sqrt();
        UnitVector::normalized(r * phi.cos(), r * phi.sin(), z).unwrap()
    })
}

fn frame() -> impl Strategy<Value = PlaneFrame> {
    (unit(), unit())
        .prop_filter("non-parallel", |(n, s)| n.dot(s).abs() < 0.99)
        .prop_map(|(n, s)| {
            let [x, y, z] = n.cross(&s);
            PlaneFrame::new(n, UnitVector::normalized(x, y, z).unwrap()).unwrap()
        })
}

fn quad(counts: [u64; 4]) -> CountQuad {
    CountQuad {
        n_ab: counts[0],
        n_nanb: counts[1],
        n_nab: counts[2],
        n_anb: counts[3],
        a: UnitVector::S1,
        b: UnitVector::S1,
        duration: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn rotation_preserves_norm(v in unit(), axis in unit(), angle in -10.0f64..10.0) {
        let r = rotate(&v, &axis, angle);
        prop_assert!((r.norm() - 1.0).abs() <= 1e-12);
        prop_assert!((r.dot(&axis) - v.dot(&axis)).abs() <= 1e-12);
    }

    #[test]
    fn n_half_turns_negate_in_plane_vectors(f in frame(), n in 1usize..=12) {
        let mut v = f.seed();
        for _ in 0..n {
            v = rotate(&v, &f.normal(), PI / n as f64);
        }
        let s = f.seed();
        prop_assert!((v.x() + s.x()).abs() < 1e-9 && (v.y() + s.y()).abs() < 1e-9 && (v.z() + s.z()).abs() < 1e-9);
    }

    #[test]
    fn schedule_steps_are_single_rotations(f in frame(), n in 1usize..=8, phi in 0.0f64..PI) {
        let s = build_schedule(&f, 1, n, phi).unwrap();
        prop_assert_eq!(s.entries.len(), n);
        for pair in s.entries.windows(2) {
            let next = rotate(&pair[0].alice, &f.normal(), PI / n as f64);
            prop_assert_eq!(next, pair[1].alice);
        }
        for e in &s.entries {
            prop_assert_eq!(e.bob0, e.alice);
            prop_assert!((e.alice.dot(&e.bobphi) - phi.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn analyzer_round_trip(v in unit()) {
        let (q, p) = analyzer_angles(&v);
        prop_assert!((0.0..180.0).contains(&q) && (0.0..180.0).contains(&p));
        let back = analyzer_stokes(q, p);
        prop_assert!(1.0 - back.dot(&v) < 1e-9);
    }

    #[test]
    fn lemma_holds(w in unit(), c in unit(), n in 1usize..=16) {
        let d = discrete_average(&w, &c, n).unwrap();
        let u = u_coefficient(n).unwrap();
        prop_assert!(d.value >= u - 1e-12);
        let identity = (d.xi.sin() + n as f64 * u * d.xi.cos()) / n as f64;
        prop_assert!((d.value - identity).abs() < 1e-12);
    }

    #[test]
    fn admissible_range_is_tight(u in unit(), v in unit(), a in unit(), b in unit()) {
        let (lo, hi) = admissible_c_range(&u, &v, &a, &b);
        prop_assert!(lo <= hi + 1e-15);
        prop_assert!(leggett_outcomes(&u, &v, &a, &b, lo).is_ok());
        prop_assert!(leggett_outcomes(&u, &v, &a, &b, hi).is_ok());
        prop_assert!(leggett_outcomes(&u, &v, &a, &b, lo - 1e-9).is_err());
        prop_assert!(leggett_outcomes(&u, &v, &a, &b, hi + 1e-9).is_err());
    }

    #[test]
    fn estimator_is_antisymmetric(counts in prop::array::uniform4(0u64..100_000)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let e = estimate_c(&quad(counts)).unwrap();
        let swapped = estimate_c(&quad([counts[2], counts[3], counts[0], counts[1]])).unwrap();
        prop_assert!((e.c_hat + swapped.c_hat).abs() < 1e-12);
        prop_assert!((e.sigma - swapped.sigma).abs() < 1e-12);
        prop_assert!(e.c_hat.abs() <= 1.0);
    }

    #[test]
    fn singlet_correlation_is_minus_dot(a in unit(), b in unit()) {
        let c = TwoQubitState::singlet().correlation(&a, &b).unwrap();
        prop_assert!((c + a.dot(&b)).abs() < 1e-12);
    }

    #[test]
    fn singlet_l_is_frame_independent(phi in 0.0f64..PI, n in 1usize..=6, turn in 0.0f64..(2.0 * PI)) {
        let frames = default_frames();
        let rotated = (frames.0.with_seed_rotated(turn), frames.1);
        let l = l_n(&TwoQubitState::singlet(), &rotated, n, phi).unwrap();
        prop_assert!((l.l_value - 2.0 * (1.0 + phi.cos())).abs() < 1e-12);
        prop_assert_eq!(l.bound, nlv_bound(n, phi).unwrap());
    }
}
