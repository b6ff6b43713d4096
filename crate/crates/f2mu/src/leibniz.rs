//! The Leibniz representation of a rewrite system: each rule `l -> r`
//! named `kappa` becomes the axiom
//!
//! ```text
//! kappa : forall p : * => * . forall x̄ : * . p r => p l
//! ```
//!
//! with `x̄` the free variables of `l` in first-occurrence order, and each
//! n-ary symbol `F` the kind `*^n => *`. A closed inhabitant of `p t`
//! under these axioms certifies a reduction out of `t`; the quantification
//! over term contexts `p` is what lets a single axiom apply at any depth.

use crate::dynamics::{FirstOrderTerm, RewriteSystem};
use crate::kernel::{kind_check, Kind, KindEnv, Type, TypeEnv};

pub use crate::dynamics::RewriteSystemError;

/// The type of the axiom for `l -> r` (no term-context argument applied):
/// `forall p. forall x̄. p r => p l`.
pub fn rule_axiom_type(lhs: &FirstOrderTerm, rhs: &FirstOrderTerm, vars: &[String]) -> Type {
    let p = Type::var("p");
    let body = Type::imply(
        Type::app(p.clone(), rhs.to_type()),
        Type::app(p, lhs.to_type()),
    );
    let quantified = vars
        .iter()
        .rev()
        .fold(body, |b, x| Type::forall(x.clone(), Kind::Star, b));
    Type::forall("p", Kind::term_kind(1), quantified)
}

/// Translates a rewrite system into its axiom environment and symbol
/// signature.
pub fn leibniz_translate(r: &RewriteSystem) -> (KindEnv, TypeEnv) {
    let mut delta = KindEnv::new();
    for (sym, arity) in &r.arities {
        delta.insert(sym.clone(), Kind::term_kind(*arity));
    }
    let mut gamma = TypeEnv::new();
    for rule in &r.rules {
        let ty = rule_axiom_type(&rule.lhs, &rule.rhs, &rule.vars);
        debug_assert_eq!(
            kind_check(&delta, &ty),
            Ok(Kind::Formula),
            "Leibniz axiom for {} does not kind-check",
            rule.name
        );
        gamma.insert(rule.name.clone(), ty);
    }
    (delta, gamma)
}

/// Recognizes an explicit axiom `forall p. forall x̄. p r => p l` as a
/// rewrite rule `l -> r` (so Leibniz-shaped axioms drive the rewriting
/// oracle exactly like `<=` declarations do).
pub fn axiom_as_rule(ty: &Type) -> Option<(FirstOrderTerm, FirstOrderTerm)> {
    let Type::Forall(p, k, body) = ty else {
        return None;
    };
    if *k != Kind::term_kind(1) {
        return None;
    }
    let mut cur = body.as_ref();
    while let Type::Forall(_, k, b) = cur {
        if *k != Kind::Star {
            return None;
        }
        cur = b;
    }
    let Type::Imply(prem, concl) = cur else {
        return None;
    };
    let (Type::App(ph1, r), Type::App(ph2, l)) = (prem.as_ref(), concl.as_ref()) else {
        return None;
    };
    match (ph1.as_ref(), ph2.as_ref()) {
        (Type::Var(a), Type::Var(b)) if a == p && b == p => {}
        _ => return None,
    }
    let l = FirstOrderTerm::from_type(l).ok()?;
    let r = FirstOrderTerm::from_type(r).ok()?;
    if matches!(l, FirstOrderTerm::Var(_)) {
        return None;
    }
    Some((l, r))
}
