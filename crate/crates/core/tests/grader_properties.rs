use dars_core::grader::{
    judge_equivalence, parse_str, AnswerValue, Decimal, Expr, Interval, Matrix, Tolerance,
    VerdictKind,
};
use num_bigint::BigInt;
use proptest::prelude::*;

fn expr_strategy() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-20i64..20).prop_map(Expr::int),
        prop_oneof![Just("x"), Just("y"), Just("n")].prop_map(|v| Expr::Var(v.to_string())),
        Just(Expr::Const(dars_core::grader::Constant::Pi)),
        Just(Expr::Const(dars_core::grader::Constant::E)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
            (inner.clone(), 0i64..4).prop_map(|(a, k)| Expr::Pow(Box::new(a), Box::new(Expr::int(k)))),
            inner.clone().prop_map(|a| Expr::Sqrt(Box::new(a))),
            inner.prop_map(|a| Expr::Neg(Box::new(a))),
        ]
    })
}

fn scalar_strategy() -> impl Strategy<Value = AnswerValue> {
    prop_oneof![
        (-1000i64..1000).prop_map(|n| AnswerValue::Integer(BigInt::from(n))),
        (-1000i64..1000, 1i64..50).prop_map(|(n, d)| {
            AnswerValue::from_fraction(BigInt::from(n), BigInt::from(d)).unwrap()
        }),
        (-100_000i64..100_000, -4i32..1).prop_map(|(s, e)| {
            AnswerValue::Decimal(Decimal::new(BigInt::from(s), e))
        }),
        expr_strategy().prop_map(AnswerValue::Symbolic),
        any::<bool>().prop_map(AnswerValue::Boolean),
        "[a-z]{3,8}".prop_map(AnswerValue::Text),
    ]
}

fn value_strategy() -> impl Strategy<Value = AnswerValue> {
    scalar_strategy().prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(AnswerValue::Tuple),
            prop::collection::vec(inner.clone(), 0..4).prop_map(AnswerValue::SetValue),
            (inner.clone(), inner.clone(), any::<bool>(), any::<bool>()).prop_map(
                |(lo, hi, lo_closed, hi_closed)| {
                    AnswerValue::Interval(Box::new(Interval { lo, hi, lo_closed, hi_closed }))
                }
            ),
            (1usize..3, 1usize..3)
                .prop_flat_map(move |(r, c)| {
                    prop::collection::vec(prop::collection::vec(inner.clone(), c), r)
                })
                .prop_map(|rows| AnswerValue::Matrix(Matrix::from_rows(rows).unwrap())),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn judge_is_reflexive(v in value_strategy()) {
        let tol = Tolerance::default();
        prop_assert_eq!(judge_equivalence(&v, &v.clone(), &tol).kind, VerdictKind::Equivalent);
    }

    #[test]
    fn judge_is_symmetric(a in value_strategy(), b in value_strategy()) {
        let tol = Tolerance::default();
        prop_assert_eq!(judge_equivalence(&a, &b, &tol).kind, judge_equivalence(&b, &a, &tol).kind);
    }

    #[test]
    fn judge_is_symmetric_on_close_values(n in -1000i64..1000, d in 1i64..50, s in -4i32..0) {
        // near-miss pairs exercise the tolerance branches
        let tol = Tolerance::default();
        let q = AnswerValue::from_fraction(BigInt::from(n), BigInt::from(d)).unwrap();
        let approx = parse_str(&format!("{:.*}", s.unsigned_abs() as usize, n as f64 / d as f64));
        prop_assert_eq!(judge_equivalence(&q, &approx, &tol).kind, judge_equivalence(&approx, &q, &tol).kind);
    }

    #[test]
    fn rendered_numbers_reparse_equivalent(v in prop_oneof![
        (-1000i64..1000).prop_map(|n| AnswerValue::Integer(BigInt::from(n))),
        (-1000i64..1000, 1i64..50).prop_map(|(n, d)| AnswerValue::from_fraction(BigInt::from(n), BigInt::from(d)).unwrap()),
        (-100_000i64..100_000, -4i32..1).prop_map(|(s, e)| AnswerValue::Decimal(Decimal::new(BigInt::from(s), e))),
        expr_strategy().prop_map(AnswerValue::Symbolic),
    ]) {
        let reparsed = parse_str(&v.to_string());
        let verdict = judge_equivalence(&v, &reparsed, &Tolerance::default());
        prop_assert_ne!(verdict.kind, VerdictKind::NotEquivalent, "{} -> {:?}: {}", v, reparsed, verdict.reason);
    }

    #[test]
    fn parse_never_panics_on_arbitrary_text(s in "\\PC{0,64}") {
        let _ = parse_str(&s);
    }

    #[test]
    fn parse_never_panics_on_latex_soup(parts in prop::collection::vec(prop_oneof![
        Just("\\frac"), Just("\\sqrt"), Just("{"), Just("}"), Just("("), Just(")"), Just("["), Just("]"),
        Just("\\{"), Just("\\}"), Just(","), Just("^"), Just("_"), Just("\\pm"), Just("\\cup"), Just("&"),
        Just("\\\\"), Just("\\begin{pmatrix}"), Just("\\end{pmatrix}"), Just("x"), Just("e"), Just("1"),
        Just("0.5"), Just("-"), Just("+"), Just("/"), Just("\\pi"), Just("\\infty"), Just("="), Just("\\text{"),
        Just("\\left("), Just("\\right)"), Just(" "), Just("$"), Just("%"), Just("^\\circ"), Just("."),
    ], 0..24)) {
        let s: String = parts.concat();
        let _ = parse_str(&s);
    }

    #[test]
    fn probe_verdict_is_independent_of_variable_order(a in -5i64..5, b in -5i64..5) {
        let tol = Tolerance::default();
        let lhs = parse_str(&format!("{a}x + {b}y"));
        let rhs = parse_str(&format!("{b}y + {a}x"));
        prop_assert_eq!(judge_equivalence(&lhs, &rhs, &tol).kind, VerdictKind::Equivalent);
        let v1 = judge_equivalence(&lhs, &parse_str("x*y"), &tol);
        let v2 = judge_equivalence(&lhs, &parse_str("y*x"), &tol);
        prop_assert_eq!(v1.kind, v2.kind);
    }
}
