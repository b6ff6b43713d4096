//! The independent proof checker for fully annotated evidence, plus
//! erasure, the θ collapse onto λ-Y, and a minimal λ-Y type checker.
//!
//! Resolution is a heuristic and can emit evidence that does not type; the
//! pipeline therefore re-checks every lemma here, through a code path that
//! shares nothing with resolution beyond the kernel. The λ-Y projection is
//! a second, coarser check: a well-typed evidence term must stay typable
//! after collapsing every term and context type to the base type.

use crate::dynamics::{FirstOrderTerm, RewriteSystem, TermContext};
use crate::kernel::{
    evidence_to_type, free_evidence_vars, free_type_vars, free_type_vars_in_evidence, kind_check,
    normalize_type, subst_evidence, subst_type, subst_type_in_evidence, types_convertible,
    Evidence, Kind, KindEnv, Name, Substitution, Type, TypeEnv,
};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("type error at {path}: {message}")]
pub struct TypeError {
    /// Slash-separated path from the root of the evidence to the offender.
    pub path: String,
    pub message: String,
}

struct Ctx {
    delta: KindEnv,
    gamma: TypeEnv,
    path: Vec<&'static str>,
    /// Bound on nested fixed-point type inference (fixed points appear in
    /// synthesis position in head-reduced evidence).
    mu_fuel: usize,
    /// Recursive names whose types are currently being inferred; goals
    /// headed by one of them are deferred to the confirming check.
    deferred: Vec<Name>,
}

impl Ctx {
    fn err(&self, message: impl Into<String>) -> TypeError {
        TypeError {
            path: if self.path.is_empty() {
                "root".into()
            } else {
                self.path.join("/")
            },
            message: message.into(),
        }
    }
}

/// Checks `Γ ⊢ e : T` for fully annotated `e`.
///
/// Binders and fixed points are handled in checking mode; applications and
/// instantiations synthesize. Conversion is applied implicitly at every
/// junction by comparing normal forms. A plain (unannotated) lambda binder
/// in checking position against a `forall` is read as a type abstraction —
/// printed lemmas do not mark the difference syntactically.
pub fn proof_check(
    delta: &KindEnv,
    gamma: &TypeEnv,
    e: &Evidence,
    ty: &Type,
) -> Result<(), TypeError> {
    canonical_evidence(delta, gamma, e, ty).map(|_| ())
}

/// Checks `Γ ⊢ e : T` and returns the evidence with every judgement made
/// explicit: unannotated type binders become type abstractions, type
/// arguments written as applications become instantiations, and every
/// evidence binder carries its premise type. The result erases and
/// head-reduces faithfully even when `e` was read back from a report,
/// where the distinction is not marked syntactically.
pub fn canonical_evidence(
    delta: &KindEnv,
    gamma: &TypeEnv,
    e: &Evidence,
    ty: &Type,
) -> Result<Evidence, TypeError> {
    let mut ctx = Ctx {
        delta: delta.clone(),
        gamma: gamma.clone(),
        path: Vec::new(),
        mu_fuel: 64,
        deferred: Vec::new(),
    };
    check(&mut ctx, e, &normalize_type(ty))
}

fn check(ctx: &mut Ctx, e: &Evidence, ty: &Type) -> Result<Evidence, TypeError> {
    match (e, ty) {
        (Evidence::Mu(a, body), _) => {
            let saved = ctx.gamma.clone();
            ctx.gamma.insert(a.clone(), ty.clone());
            ctx.path.push("mu");
            let r = check(ctx, body, ty);
            ctx.path.pop();
            ctx.gamma = saved;
            Ok(Evidence::mu(a.clone(), r?))
        }
        (Evidence::TyLam(x, body), Type::Forall(y, k, t2)) => {
            let (x2, b) = check_type_binder(ctx, x, k, body, y, t2)?;
            Ok(Evidence::ty_lam(x2, b))
        }
        (Evidence::ELam(x, None, body), Type::Forall(y, k, t2)) => {
            // An unannotated binder under a forall goal is a type binder.
            let (x2, b) = check_type_binder(ctx, x, k, body, y, t2)?;
            Ok(Evidence::ty_lam(x2, b))
        }
        (Evidence::ELam(x, ann, body), Type::Imply(t1, t2)) => {
            if let Some(a) = ann {
                if !types_convertible(a, t1) {
                    return Err(ctx.err(format!(
                        "binder {} annotated with a type not convertible to the expected premise",
                        x
                    )));
                }
            }
            let t1 = normalize_type(t1);
            let saved = ctx.gamma.clone();
            ctx.gamma.insert(x.clone(), t1.clone());
            ctx.path.push("lam");
            let r = check(ctx, body, &normalize_type(t2));
            ctx.path.pop();
            ctx.gamma = saved;
            Ok(Evidence::elam(x.clone(), Some(t1), r?))
        }
        (Evidence::ELam(..), _) | (Evidence::TyLam(..), _) => Err(ctx.err(format!(
            "abstraction cannot have type {}",
            crate::surface::print_type(ty)
        ))),
        _ => {
            if let Evidence::EVar(x) = spine_head(e) {
                if ctx.deferred.iter().any(|d| d == x) {
                    // A use of the recursive name whose type is still being
                    // inferred; the confirming check revisits this goal.
                    return Ok(e.clone());
                }
            }
            let (found, e2) = synth(ctx, e)?;
            if types_convertible(&found, ty) {
                Ok(e2)
            } else {
                Err(ctx.err(format!(
                    "expected {}, found {}",
                    crate::surface::print_type(ty),
                    crate::surface::print_type(&found)
                )))
            }
        }
    }
}

fn spine_head(e: &Evidence) -> &Evidence {
    match e {
        Evidence::EApp(f, _) | Evidence::TyApp(f, _) => spine_head(f),
        other => other,
    }
}

fn check_type_binder(
    ctx: &mut Ctx,
    x: &str,
    k: &Kind,
    body: &Evidence,
    bound: &str,
    t2: &Type,
) -> Result<(Name, Evidence), TypeError> {
    // Abs side condition: the eigenvariable is not free in Γ. Head
    // reduction can duplicate binders (unfolding a fixed point inlines its
    // own body), so a clashing binder is alpha-renamed rather than
    // rejected.
    let (x, body) = if ctx.gamma.free_type_vars().contains(x) {
        let taken: BTreeSet<Name> = ctx
            .gamma
            .free_type_vars()
            .into_iter()
            .chain(free_type_vars_in_evidence(body))
            .chain(free_evidence_vars(body))
            .chain(free_type_vars(t2))
            .collect();
        let mut n = 0usize;
        let fresh = loop {
            let cand = format!("{}r{}'", x.trim_end_matches('\''), n);
            if !taken.contains(cand.as_str()) {
                break cand;
            }
            n += 1;
        };
        let renamed = subst_evidence(
            &subst_type_in_evidence(
                body,
                &Substitution::singleton(x.to_string(), Type::var(fresh.clone())),
            ),
            x,
            &Evidence::EVar(fresh.clone()),
        );
        (fresh, renamed)
    } else {
        (x.to_string(), body.clone())
    };
    let saved = ctx.delta.clone();
    ctx.delta.insert(x.clone(), k.clone());
    let opened = normalize_type(&subst_type(
        &Substitution::singleton(bound.to_string(), Type::var(x.clone())),
        t2,
    ));
    ctx.path.push("tylam");
    let r = check(ctx, &body, &opened);
    ctx.path.pop();
    ctx.delta = saved;
    Ok((x, r?))
}

fn synth(ctx: &mut Ctx, e: &Evidence) -> Result<(Type, Evidence), TypeError> {
    match e {
        Evidence::EVar(x) | Evidence::EConst(x) => {
            if ctx.deferred.iter().any(|d| d == x) {
                return Err(ctx.err(format!(
                    "recursive reference {} needs a checking context",
                    x
                )));
            }
            ctx.gamma
                .lookup(x)
                .cloned()
                .map(|t| (t, e.clone()))
                .ok_or_else(|| ctx.err(format!("unbound evidence name {}", x)))
        }
        Evidence::TyApp(f, arg) => {
            // Head-reduced evidence can expose a fixed point or binder in
            // application position; contract the redex and synthesize the
            // reduct (subject reduction depends on this).
            let f = contract_head(ctx, f)?;
            if let Evidence::TyLam(x, body) | Evidence::ELam(x, None, body) = &f {
                if let Err(e) = kind_check(&ctx.delta, arg) {
                    return Err(ctx.err(format!(
                        "type argument {} is not kindable: {}",
                        crate::surface::print_type(arg),
                        e.reason
                    )));
                }
                let contractum =
                    subst_type_in_evidence(body, &Substitution::singleton(x.clone(), arg.clone()));
                return synth(ctx, &contractum);
            }
            ctx.path.push("tyapp");
            let fr = synth(ctx, &f).map(|(t, f2)| (normalize_type(&t), f2));
            ctx.path.pop();
            let (fty, f2) = fr?;
            let t = instantiate(ctx, &fty, arg)?;
            Ok((t, Evidence::ty_app(f2, arg.clone())))
        }
        Evidence::EApp(f, a) => {
            let f = contract_head(ctx, f)?;
            if let Evidence::TyLam(x, body) | Evidence::ELam(x, None, body) = &f {
                let Some(t) = evidence_to_type(a) else {
                    return Err(ctx.err(
                        "argument to a type binder must be a term or context".to_string(),
                    ));
                };
                if let Err(e) = kind_check(&ctx.delta, &t) {
                    return Err(ctx.err(format!(
                        "type argument {} is not kindable: {}",
                        crate::surface::print_type(&t),
                        e.reason
                    )));
                }
                let contractum =
                    subst_type_in_evidence(body, &Substitution::singleton(x.clone(), t));
                return synth(ctx, &contractum);
            }
            ctx.path.push("fun");
            let fr = synth(ctx, &f).map(|(t, f2)| (normalize_type(&t), f2));
            ctx.path.pop();
            let (fty, f2) = fr?;
            match fty {
                Type::Imply(t1, t2) => {
                    ctx.path.push("arg");
                    let r = check(ctx, a, &normalize_type(&t1));
                    ctx.path.pop();
                    Ok((normalize_type(&t2), Evidence::app(f2, r?)))
                }
                fty @ Type::Forall(..) => {
                    // Type arguments applied without explicit marking.
                    let Some(t) = evidence_to_type(a) else {
                        return Err(ctx.err(
                            "argument to a quantified type must be a term or context".to_string(),
                        ));
                    };
                    let result = instantiate(ctx, &fty, &t)?;
                    Ok((result, Evidence::ty_app(f2, t)))
                }
                other => Err(ctx.err(format!(
                    "application head has non-function type {}",
                    crate::surface::print_type(&other)
                ))),
            }
        }
        Evidence::ELam(x, Some(t1), body) => {
            match kind_check(&ctx.delta, t1) {
                Ok(Kind::Formula) | Ok(Kind::Star) => {}
                Ok(k) => {
                    return Err(ctx.err(format!("binder annotation has kind {}", k)));
                }
                Err(e) => return Err(ctx.err(format!("binder annotation: {}", e))),
            }
            let t1 = normalize_type(t1);
            let saved = ctx.gamma.clone();
            ctx.gamma.insert(x.clone(), t1.clone());
            ctx.path.push("lam");
            let r = synth(ctx, body);
            ctx.path.pop();
            ctx.gamma = saved;
            let (t2, b2) = r?;
            Ok((
                Type::imply(t1.clone(), t2),
                Evidence::elam(x.clone(), Some(t1), b2),
            ))
        }
        Evidence::Mu(a, body) => synth_mu(ctx, a, body, e),
        Evidence::ELam(_, None, _) | Evidence::TyLam(..) => Err(ctx.err(
            "cannot synthesize a type for an unannotated binder".to_string(),
        )),
    }
}

/// Synthesizes a type for a fixed point met in application position (as
/// head reduction produces): read the quantifier prefix off the leading
/// type binders, infer each binder's kind from how it is applied inside
/// the embedded types, synthesize the body's type with goals headed by
/// the recursive name deferred, and confirm the resulting candidate with
/// the ordinary checking rule — the inference is a guess, the confirming
/// check is what makes the answer sound.
fn synth_mu(
    ctx: &mut Ctx,
    h: &Name,
    body: &Evidence,
    whole: &Evidence,
) -> Result<(Type, Evidence), TypeError> {
    if ctx.mu_fuel == 0 {
        return Err(ctx.err("fixed point nesting exceeds the inference bound".to_string()));
    }
    ctx.mu_fuel -= 1;
    let mut binders: Vec<Name> = Vec::new();
    let mut core = body;
    loop {
        match core {
            Evidence::TyLam(x, b) | Evidence::ELam(x, None, b) => {
                binders.push(x.clone());
                core = b;
            }
            _ => break,
        }
    }
    let kinds: Vec<Kind> = binders
        .iter()
        .map(|x| Kind::term_kind(embedded_arity(x, core).unwrap_or(0)))
        .collect();
    let mut scratch = Ctx {
        delta: ctx.delta.clone(),
        gamma: ctx.gamma.clone(),
        path: ctx.path.clone(),
        mu_fuel: ctx.mu_fuel,
        deferred: ctx.deferred.clone(),
    };
    scratch.deferred.push(h.clone());
    for (x, k) in binders.iter().zip(&kinds) {
        scratch.delta.insert(x.clone(), k.clone());
    }
    let (result, _) = synth(&mut scratch, core)?;
    let candidate = normalize_type(&binders.iter().zip(&kinds).rev().fold(
        result,
        |t, (x, k)| Type::forall(x.clone(), k.clone(), t),
    ));
    let whole2 = check(ctx, whole, &candidate)?;
    Ok((candidate, whole2))
}

/// The largest number of arguments `v` is applied to inside the types
/// embedded in `e` (binder annotations and type arguments); `None` when
/// `v` does not occur in any of them.
fn embedded_arity(v: &str, e: &Evidence) -> Option<usize> {
    match e {
        Evidence::EVar(_) | Evidence::EConst(_) => None,
        Evidence::ELam(_, ann, b) => ann
            .as_ref()
            .and_then(|t| arity_in_type(v, t))
            .into_iter()
            .chain(embedded_arity(v, b))
            .max(),
        Evidence::TyLam(_, b) | Evidence::Mu(_, b) => embedded_arity(v, b),
        Evidence::EApp(f, a) => embedded_arity(v, f)
            .into_iter()
            .chain(embedded_arity(v, a))
            .max(),
        Evidence::TyApp(f, t) => embedded_arity(v, f)
            .into_iter()
            .chain(arity_in_type(v, t))
            .max(),
    }
}

fn arity_in_type(v: &str, ty: &Type) -> Option<usize> {
    match ty {
        Type::Var(x) => (x == v).then_some(0),
        Type::Const(_) => None,
        Type::Lam(x, b) => (x != v).then(|| arity_in_type(v, b)).flatten(),
        Type::Forall(x, _, b) => (x != v).then(|| arity_in_type(v, b)).flatten(),
        Type::Imply(a, b) => arity_in_type(v, a).into_iter().chain(arity_in_type(v, b)).max(),
        Type::App(..) => {
            let (head, args) = ty.spine();
            let from_args = args.iter().filter_map(|a| arity_in_type(v, a)).max();
            let from_head = match head {
                Type::Var(x) if x == v => Some(args.len()),
                other => arity_in_type(v, other),
            };
            from_args.into_iter().chain(from_head).max()
        }
    }
}

/// Contracts beta redexes on type binders at the head of an application
/// until a non-redex head appears. Fixed points are left in place — their
/// types are synthesized, not unfolded.
fn contract_head(ctx: &mut Ctx, f: &Evidence) -> Result<Evidence, TypeError> {
    let mut cur = f.clone();
    loop {
        match cur {
            Evidence::TyApp(g, t) => {
                let g = contract_head(ctx, &g)?;
                match g {
                    Evidence::TyLam(x, body) | Evidence::ELam(x, None, body) => {
                        cur = subst_type_in_evidence(&body, &Substitution::singleton(x, t));
                    }
                    g => return Ok(Evidence::TyApp(Box::new(g), t)),
                }
            }
            Evidence::EApp(g, a) => {
                let g = contract_head(ctx, &g)?;
                match (g, evidence_to_type(&a)) {
                    (Evidence::TyLam(x, body), Some(t))
                    | (Evidence::ELam(x, None, body), Some(t)) => {
                        cur = subst_type_in_evidence(&body, &Substitution::singleton(x, t));
                    }
                    (g, _) => return Ok(Evidence::EApp(Box::new(g), a)),
                }
            }
            other => return Ok(other),
        }
    }
}

fn instantiate(ctx: &mut Ctx, fty: &Type, arg: &Type) -> Result<Type, TypeError> {
    let Type::Forall(y, k, t2) = fty else {
        return Err(ctx.err(format!(
            "type instantiation of non-quantified type {}",
            crate::surface::print_type(fty)
        )));
    };
    match kind_check(&ctx.delta, arg) {
        Ok(found) if found == *k => {}
        Ok(found) => {
            return Err(ctx.err(format!(
                "type argument {} has kind {}, binder expects {}",
                crate::surface::print_type(arg),
                found,
                k
            )))
        }
        Err(e) => {
            return Err(ctx.err(format!(
                "type argument {} is not kindable: {}",
                crate::surface::print_type(arg),
                e.reason
            )))
        }
    }
    Ok(normalize_type(&subst_type(
        &Substitution::singleton(y.clone(), arg.clone()),
        t2,
    )))
}

/// Erasure to Curry-style evidence: type binders, type arguments, and
/// annotations disappear.
pub fn erase(e: &Evidence) -> Evidence {
    match e {
        Evidence::EVar(_) | Evidence::EConst(_) => e.clone(),
        Evidence::ELam(x, _, b) => Evidence::elam(x.clone(), None, erase(b)),
        Evidence::Mu(x, b) => Evidence::mu(x.clone(), erase(b)),
        Evidence::TyLam(_, b) => erase(b),
        Evidence::EApp(f, a) => Evidence::app(erase(f), erase(a)),
        Evidence::TyApp(f, _) => erase(f),
    }
}

// ---------------------------------------------------------------------------
// λ-Y

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LambdaYType {
    Base,
    Arrow(Box<LambdaYType>, Box<LambdaYType>),
}

impl LambdaYType {
    pub fn arrow(a: LambdaYType, b: LambdaYType) -> LambdaYType {
        LambdaYType::Arrow(Box::new(a), Box::new(b))
    }
}

impl std::fmt::Display for LambdaYType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LambdaYType::Base => write!(f, "B"),
            LambdaYType::Arrow(a, b) => match a.as_ref() {
                LambdaYType::Base => write!(f, "B => {}", b),
                _ => write!(f, "({}) => {}", a, b),
            },
        }
    }
}

/// θ: every term and context type collapses to the base type; only the
/// implication structure survives.
pub fn theta_type(t: &Type) -> LambdaYType {
    match t {
        Type::Var(_) | Type::Const(_) => LambdaYType::Base,
        Type::Lam(_, b) | Type::Forall(_, _, b) => theta_type(b),
        Type::App(f, _) => theta_type(f),
        Type::Imply(a, b) => LambdaYType::arrow(theta_type(a), theta_type(b)),
    }
}

pub fn theta_env(gamma: &TypeEnv) -> Vec<(Name, LambdaYType)> {
    gamma
        .iter()
        .map(|(n, t)| (n.clone(), theta_type(t)))
        .collect()
}

/// Simply typed checking with the fixed-point rule; `e` must be erased.
pub fn lambda_y_check(
    gamma: &[(Name, LambdaYType)],
    e: &Evidence,
    ty: &LambdaYType,
) -> Result<(), TypeError> {
    fn lookup<'a>(env: &'a [(Name, LambdaYType)], x: &str) -> Option<&'a LambdaYType> {
        env.iter().rev().find(|(n, _)| n == x).map(|(_, t)| t)
    }
    fn go(
        env: &mut Vec<(Name, LambdaYType)>,
        e: &Evidence,
        ty: &LambdaYType,
        depth: usize,
    ) -> Result<(), TypeError> {
        let err = |m: String| TypeError {
            path: format!("depth {}", depth),
            message: m,
        };
        match e {
            Evidence::ELam(x, _, b) => match ty {
                LambdaYType::Arrow(a, t2) => {
                    env.push((x.clone(), a.as_ref().clone()));
                    let r = go(env, b, t2, depth + 1);
                    env.pop();
                    r
                }
                LambdaYType::Base => Err(err("lambda checked against base type".into())),
            },
            Evidence::Mu(x, b) => {
                env.push((x.clone(), ty.clone()));
                let r = go(env, b, ty, depth + 1);
                env.pop();
                r
            }
            _ => {
                let found = synth_y(env, e, depth)?;
                if found == *ty {
                    Ok(())
                } else {
                    Err(err(format!("expected {}, found {}", ty, found)))
                }
            }
        }
    }
    fn synth_y(
        env: &mut Vec<(Name, LambdaYType)>,
        e: &Evidence,
        depth: usize,
    ) -> Result<LambdaYType, TypeError> {
        let err = |m: String| TypeError {
            path: format!("depth {}", depth),
            message: m,
        };
        match e {
            Evidence::EVar(x) | Evidence::EConst(x) => lookup(env, x)
                .cloned()
                .ok_or_else(|| err(format!("unbound name {}", x))),
            Evidence::EApp(f, a) => match synth_y(env, f, depth + 1)? {
                LambdaYType::Arrow(t1, t2) => {
                    go(env, a, &t1, depth + 1)?;
                    Ok(*t2)
                }
                LambdaYType::Base => Err(err("application of a base-typed term".into())),
            },
            _ => Err(err("not Curry-style evidence".into())),
        }
    }
    let mut env = gamma.to_vec();
    go(&mut env, e, ty, 0)
}

// ---------------------------------------------------------------------------
// Finite reductions as evidence

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("step {index} does not rewrite: {reason}")]
pub struct InvalidStep {
    pub index: usize,
    pub reason: String,
}

/// One step of a finite reduction: the rule applied, the surrounding
/// context, and the instantiation of the rule's variables.
pub type ReductionStep = (Name, TermContext, BTreeMap<Name, FirstOrderTerm>);

/// Builds evidence for a finite reduction `t1 -> ... -> t(n+1)`:
/// each step contributes `kappa (\y. C[y]) t̄`, composed as
/// `\a. e1 (e2 (... (en a)))` of type `t(n+1) => t1`.
pub fn represent_finite_reduction(
    r: &RewriteSystem,
    t0: &FirstOrderTerm,
    steps: &[ReductionStep],
) -> Result<(Evidence, Type), InvalidStep> {
    let mut pieces = Vec::new();
    let mut cur = t0.clone();
    for (index, (rule_name, context, sigma)) in steps.iter().enumerate() {
        let rule = r.rule(rule_name).ok_or_else(|| InvalidStep {
            index,
            reason: format!("unknown rule {}", rule_name),
        })?;
        let redex = crate::dynamics::apply_fo_subst(sigma, &rule.lhs);
        if context.fill(&redex) != cur {
            return Err(InvalidStep {
                index,
                reason: format!("context filled with the redex is not {}", cur),
            });
        }
        let mut piece = Evidence::ty_app(
            Evidence::EConst(rule_name.clone()),
            context.to_context_type("y"),
        );
        for v in &rule.vars {
            let t = sigma.get(v).ok_or_else(|| InvalidStep {
                index,
                reason: format!("substitution misses variable {}", v),
            })?;
            piece = Evidence::ty_app(piece, t.to_type());
        }
        pieces.push(piece);
        cur = context.fill(&crate::dynamics::apply_fo_subst(sigma, &rule.rhs));
    }
    let body = pieces
        .into_iter()
        .rev()
        .fold(Evidence::EVar("a".into()), |acc, piece| {
            Evidence::app(piece, acc)
        });
    let end_ty = cur.to_type();
    let evidence = Evidence::elam("a", Some(end_ty.clone()), body);
    Ok((evidence, Type::imply(end_ty, t0.to_type())))
}
