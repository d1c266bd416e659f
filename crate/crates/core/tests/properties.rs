use proptest::prelude::*;

use svfractal::func_expr::{BinOp, Func};
use svfractal::invariant_measure::assignment;
use svfractal::{CompactSet, Expr, Interval};

fn interval() -> impl Strategy<Value = Interval> {
    (-10.0..10.0f64, 0.0..3.0f64).prop_map(|(lo, w)| Interval::new(lo, lo + w))
}

fn compact_set() -> impl Strategy<Value = CompactSet> {
    prop::collection::vec(interval(), 1..5)
        .prop_map(|parts| CompactSet::from_intervals(parts).unwrap())
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        Just(Expr::Var),
        (0.0..100.0f64).prop_map(Expr::Num),
        (0u32..50).prop_map(|k| Expr::Num(k as f64)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        let op = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Pow),
        ];
        let func = prop_oneof![
            Just(Func::Sin),
            Just(Func::Cos),
            Just(Func::Exp),
            Just(Func::Abs),
            Just(Func::Sqrt),
        ];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::Binary(
                op,
                Box::new(a),
                Box::new(b)
            )),
            (func, inner).prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
        ]
    })
}

proptest! {
    #[test]
    fn hausdorff_is_a_metric(a in compact_set(), b in compact_set(), c in compact_set()) {
        prop_assert_eq!(a.hausdorff_distance(&a), 0.0);
        let ab = a.hausdorff_distance(&b);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, b.hausdorff_distance(&a));
        prop_assert!(a.hausdorff_distance(&c) <= ab + b.hausdorff_distance(&c) + 1e-12);
        if a != b {
            prop_assert!(ab > 0.0);
        }
    }

    #[test]
    fn hausdorff_scales_with_factor(a in compact_set(), b in compact_set(), k in -4.0..4.0f64) {
        let lhs = a.scale(k).hausdorff_distance(&b.scale(k));
        prop_assert!((lhs - k.abs() * a.hausdorff_distance(&b)).abs() <= 1e-12);
    }

    #[test]
    fn minkowski_sum_is_subadditive(
        a in compact_set(), b in compact_set(), c in compact_set(), d in compact_set()
    ) {
        let lhs = a.minkowski_sum(&c).hausdorff_distance(&b.minkowski_sum(&d));
        prop_assert!(lhs <= a.hausdorff_distance(&b) + c.hausdorff_distance(&d) + 1e-12);
    }

    #[test]
    fn minkowski_sum_commutes_and_associates(a in compact_set(), b in compact_set(), c in compact_set()) {
        prop_assert_eq!(a.minkowski_sum(&b), b.minkowski_sum(&a));
        let left = a.minkowski_sum(&b).minkowski_sum(&c);
        let right = a.minkowski_sum(&b.minkowski_sum(&c));
        prop_assert!(left.hausdorff_distance(&right) <= 1e-12);
    }

    #[test]
    fn translation_is_an_isometry(a in compact_set(), b in compact_set(), x in -5.0..5.0f64) {
        let moved = a.translate(x).hausdorff_distance(&b.translate(x));
        prop_assert!((moved - a.hausdorff_distance(&b)).abs() <= 1e-12);
        prop_assert!((a.translate(x).hausdorff_distance(&a) - x.abs()).abs() <= 1e-12);
    }

    #[test]
    fn point_distance_matches_sampling(a in compact_set(), x in -15.0..15.0f64) {
        let brute = a
            .parts()
            .iter()
            .map(|p| if p.contains(x) { 0.0 } else { (p.lo - x).abs().min((p.hi - x).abs()) })
            .fold(f64::INFINITY, f64::min);
        prop_assert_eq!(a.distance_to_point(x), brute);
    }

    #[test]
    fn expression_display_round_trips(e in expr(), t in -2.0..2.0f64) {
        let printed = e.to_string();
        let back = Expr::parse(&printed).unwrap();
        prop_assert_eq!(&back, &e);
        match (e.eval(t), back.eval(t)) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
            (Err(_), Err(_)) => {}
            (x, y) => prop_assert!(false, "{:?} vs {:?}", x, y),
        }
    }

    #[test]
    fn assignment_beats_every_swap(cost in prop::collection::vec(prop::collection::vec(0.0..10.0f64, 6), 6)) {
        let perm = assignment(&cost);
        let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>();
        let best = total(&perm);
        for i in 0..6 {
            for j in i + 1..6 {
                let mut q = perm.clone();
                q.swap(i, j);
                prop_assert!(best <= total(&q) + 1e-9);
            }
        }
    }
}
