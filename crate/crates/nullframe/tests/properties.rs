//! Property tests: automatic differentiation against finite differences,
//! parser round-trips, and basis-independence of the kernel computation.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use nullframe::exprdsl::{eval_jet2, parse_expression, BinOp, ExprAst, UnaryOp};
use nullframe::semilinalg::{nullspace, subspace_distance};

const PARAMS: usize = 3;

/// Random expression trees over three parameters, bounded depth, avoiding
/// division (pole-free domains are hard to guarantee) and sqrt of possibly
/// negative arguments.
fn arb_expr(depth: u32) -> impl Strategy<Value = ExprAst> {
    let leaf = prop_oneof![
        (-3.0..3.0f64).prop_map(|v| ExprAst::Num((v * 64.0).round() / 64.0)),
        Just(ExprAst::Pi),
        Just(ExprAst::Sigma),
        (0..PARAMS).prop_map(ExprAst::Param),
    ];
    leaf.prop_recursive(depth, 64, 2, |inner| {
        prop_oneof![
            (inner.clone(), prop_oneof![
                Just(UnaryOp::Neg),
                Just(UnaryOp::Sin),
                Just(UnaryOp::Cos),
                Just(UnaryOp::Sinh),
                Just(UnaryOp::Cosh),
            ])
                .prop_map(|(a, op)| ExprAst::Unary(op, Box::new(a))),
            (
                inner.clone(),
                inner,
                prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul)],
            )
                .prop_map(|(a, b, op)| ExprAst::Binary(op, Box::new(a), Box::new(b))),
        ]
    })
}

fn fd_gradient(ast: &ExprAst, t: &[f64], h: f64) -> Option<DVector<f64>> {
    let m = t.len();
    let mut g = DVector::zeros(m);
    for a in 0..m {
        let eval = |s: f64| {
            let mut tt = t.to_vec();
            tt[a] += s;
            eval_jet2(ast, &tt).ok().map(|j| j.value)
        };
        let (p, mm, hp, hm) = (eval(h)?, eval(-h)?, eval(h / 2.0)?, eval(-h / 2.0)?);
        let d_h = (p - mm) / (2.0 * h);
        let d_h2 = (hp - hm) / h;
        g[a] = (4.0 * d_h2 - d_h) / 3.0;
    }
    Some(g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Jet gradients match a Richardson-extrapolated central difference.
    #[test]
    fn jet_gradient_matches_finite_differences(
        ast in arb_expr(6),
        t in prop::collection::vec(-1.0..1.0f64, PARAMS),
    ) {
        let jet = match eval_jet2(&ast, &t) {
            Ok(j) => j,
            Err(_) => return Ok(()), // non-finite tree; nothing to compare
        };
        // Skip trees whose values explode: FD comparison is meaningless
        // once catastrophic cancellation dominates.
        let scale = jet.value.abs() + jet.grad.norm() + 1.0;
        prop_assume!(scale < 1e6);
        let fd = match fd_gradient(&ast, &t, 1e-5) {
            Some(g) if g.iter().all(|x| x.is_finite()) => g,
            _ => return Ok(()),
        };
        // Only compare where the finite difference is self-consistent:
        // wildly oscillating compositions make any stencil meaningless.
        let fd_coarse = match fd_gradient(&ast, &t, 4e-5) {
            Some(g) if g.iter().all(|x| x.is_finite()) => g,
            _ => return Ok(()),
        };
        prop_assume!((&fd - &fd_coarse).norm() <= 1e-8 * scale);
        let err = (&jet.grad - &fd).norm() / scale;
        prop_assert!(err < 1e-6, "gradient mismatch: {err:e}");
    }

    /// Printing always parses back, one round trip reaches the parser's
    /// canonical tree (negative literals become explicit negations), and
    /// values are preserved.
    #[test]
    fn display_round_trips(
        ast in arb_expr(6),
        t in prop::collection::vec(-1.0..1.0f64, PARAMS),
    ) {
        let once = parse_expression(&ast.to_string(), PARAMS).expect("printed form parses");
        let twice = parse_expression(&once.to_string(), PARAMS).expect("reprinted form parses");
        prop_assert_eq!(&once, &twice);
        match (eval_jet2(&ast, &t), eval_jet2(&once, &t)) {
            (Ok(a), Ok(b)) => prop_assert!(
                (a.value - b.value).abs() <= 1e-12 * (1.0 + a.value.abs())
            ),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "eval disagreement: {a:?} vs {b:?}"),
        }
    }
}

#[test]
fn kernel_is_invariant_under_row_operations() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let (rows, cols) = (rng.gen_range(2..7), rng.gen_range(2..7));
        let rank_cap = rows.min(cols) - 1;
        // Random rank-deficient matrix: product of thin factors.
        let a = DMatrix::from_fn(rows, rank_cap.max(1), |_, _| rng.gen_range(-2.0..2.0));
        let b = DMatrix::from_fn(rank_cap.max(1), cols, |_, _| rng.gen_range(-2.0..2.0));
        let m = &a * &b;
        // Random well-conditioned row mixing.
        let mut r = DMatrix::from_fn(rows, rows, |_, _| rng.gen_range(-1.0..1.0));
        for i in 0..rows {
            r[(i, i)] += 3.0;
        }
        let k1 = nullspace(&m);
        let k2 = nullspace(&(&r * &m));
        assert_eq!(k1.ncols(), k2.ncols(), "trial {trial}: kernel dims differ");
        let cols1: Vec<DVector<f64>> = k1.column_iter().map(|c| c.into_owned()).collect();
        let cols2: Vec<DVector<f64>> = k2.column_iter().map(|c| c.into_owned()).collect();
        let d = subspace_distance(&cols1, &cols2, cols);
        assert!(d < 1e-8, "trial {trial}: kernel subspace moved by {d:e}");
    }
}
