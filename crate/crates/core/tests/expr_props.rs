use phi_sasaki::expr::{parse, parse_with, ScalarField, Variables};
use proptest::prelude::*;

/// Reference tree, rendered fully parenthesized so the parser's precedence rules are not assumed.
#[derive(Debug, Clone)]
enum Ref {
    Num(f64),
    Var(usize),
    Neg(Box<Ref>),
    Add(Box<Ref>, Box<Ref>),
    Sub(Box<Ref>, Box<Ref>),
    Mul(Box<Ref>, Box<Ref>),
    Div(Box<Ref>, Box<Ref>),
    Pow(Box<Ref>, i32),
    Exp(Box<Ref>),
    Sin(Box<Ref>),
    Cos(Box<Ref>),
    /// `ln(1 + e^2)` keeps the argument positive.
    LnSafe(Box<Ref>),
    /// `sqrt(1 + e^2)`.
    SqrtSafe(Box<Ref>),
}

impl Ref {
    fn render(&self) -> String {
        match self {
            Ref::Num(v) => format!("{v:?}"),
            Ref::Var(i) => format!("x{}", i + 1),
            Ref::Neg(a) => format!("(-{})", a.render()),
            Ref::Add(a, b) => format!("({} + {})", a.render(), b.render()),
            Ref::Sub(a, b) => format!("({} - {})", a.render(), b.render()),
            Ref::Mul(a, b) => format!("({} * {})", a.render(), b.render()),
            Ref::Div(a, b) => format!("({} / (2 + sin({})))", a.render(), b.render()),
            Ref::Pow(a, n) => format!("({})^{n}", a.render()),
            Ref::Exp(a) => format!("exp(sin({}))", a.render()),
            Ref::Sin(a) => format!("sin({})", a.render()),
            Ref::Cos(a) => format!("cos({})", a.render()),
            Ref::LnSafe(a) => format!("ln(1 + ({})^2)", a.render()),
            Ref::SqrtSafe(a) => format!("sqrt(1 + ({})^2)", a.render()),
        }
    }

    fn eval(&self, p: &[f64]) -> f64 {
        match self {
            Ref::Num(v) => *v,
            Ref::Var(i) => p[*i],
            Ref::Neg(a) => -a.eval(p),
            Ref::Add(a, b) => a.eval(p) + b.eval(p),
            Ref::Sub(a, b) => a.eval(p) - b.eval(p),
            Ref::Mul(a, b) => a.eval(p) * b.eval(p),
            Ref::Div(a, b) => a.eval(p) / (2.0 + b.eval(p).sin()),
            Ref::Pow(a, n) => a.eval(p).powi(*n),
            Ref::Exp(a) => a.eval(p).sin().exp(),
            Ref::Sin(a) => a.eval(p).sin(),
            Ref::Cos(a) => a.eval(p).cos(),
            Ref::LnSafe(a) => (1.0 + a.eval(p).powi(2)).ln(),
            Ref::SqrtSafe(a) => (1.0 + a.eval(p).powi(2)).sqrt(),
        }
    }
}

const DIM: usize = 3;

fn leaf() -> impl Strategy<Value = Ref> {
    prop_oneof![(-4.0f64..4.0).prop_map(Ref::Num), (0..DIM).prop_map(Ref::Var)]
}

fn tree() -> impl Strategy<Value = Ref> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        let b = || inner.clone().prop_map(Box::new);
        prop_oneof![
            b().prop_map(Ref::Neg),
            (b(), b()).prop_map(|(x, y)| Ref::Add(x, y)),
            (b(), b()).prop_map(|(x, y)| Ref::Sub(x, y)),
            (b(), b()).prop_map(|(x, y)| Ref::Mul(x, y)),
            (b(), b()).prop_map(|(x, y)| Ref::Div(x, y)),
            (b(), 0i32..4).prop_map(|(x, n)| Ref::Pow(x, n)),
            b().prop_map(Ref::Exp),
            b().prop_map(Ref::Sin),
            b().prop_map(Ref::Cos),
            b().prop_map(Ref::LnSafe),
            b().prop_map(Ref::SqrtSafe),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0f64..2.0, DIM)
}

proptest! {
    #[test]
    fn parse_matches_reference_evaluator(t in tree(), p in point()) {
        let src = t.render();
        let f = ScalarField::parse(&src, DIM).unwrap();
        let got = f.eval(&p).unwrap();
        let want = t.eval(&p);
        prop_assume!(want.is_finite() && want.abs() < 1e12);
        prop_assert!((got - want).abs() <= 1e-15 * want.abs().max(1.0), "{src}: {got} vs {want}");
    }

    #[test]
    fn printing_is_a_fixed_point(t in tree()) {
        let vars = Variables::Chart(DIM);
        let first = parse_with(&t.render(), vars).unwrap();
        let printed = first.display_with(vars);
        let second = parse_with(&printed, vars).unwrap();
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(printed, second.display_with(vars));
    }

    #[test]
    fn time_fields_evaluate_in_t(a in -3.0f64..3.0, t in -0.9f64..0.9) {
        let f = ScalarField::parse_time(&format!("{a:?}*t^2 + 1/(t+1)")).unwrap();
        let want = a * t * t + 1.0 / (t + 1.0);
        prop_assert!((f.eval_at(t).unwrap() - want).abs() <= 1e-15 * want.abs().max(1.0) * 4.0);
    }
}

#[test]
fn two_dimensional_aliases() {
    let f = ScalarField::parse("exp(2*x) + y", 2).unwrap();
    assert_eq!(f.eval(&[0.0, 3.0]).unwrap(), 4.0);
    assert!(parse("z", 2).is_err());
    assert!(parse("x3", 2).is_err());
}

#[test]
fn parse_errors_carry_offsets() {
    let err = parse("1 + * 2", 2).unwrap_err();
    assert_eq!(err.offset(), Some(4));
    assert!(parse("sin(x", 2).is_err());
    assert!(parse("", 2).is_err());
}

#[test]
fn domain_errors_are_reported() {
    let f = ScalarField::parse("ln(x) + 1/y", 2).unwrap();
    assert!(f.eval(&[-1.0, 1.0]).is_err());
    assert!(f.eval(&[1.0, 0.0]).is_err());
    assert!(f.eval(&[1.0]).is_err());
}
