//! Decidable second-order matching, after Dowek's presentation of Huet's
//! algorithm: the four transformation rules (failure, decomposition,
//! projection, imitation) applied top-down, exploring projections before
//! imitations, with the resulting matchers filtered by kindability.
//!
//! Patterns may contain free match variables; every other name (constants,
//! eigenvariables, goal-level free variables) is rigid. Targets never
//! contain match variables — this is matching, not unification.

use crate::kernel::{
    alpha_eq, free_type_vars, is_second_order, normalize_type, Name, Substitution, Type,
};
use std::collections::BTreeSet;

/// The complete set of second-order matchers taking `pattern` to `target`,
/// in deterministic derivation order.
///
/// Free variables of `pattern` not in `frozen` are the match variables.
/// Both sides must be beta-normal; matching descends congruently through
/// `=>`, `forall`, and `\`-binders (identifying binders positionally,
/// with no binding allowed to capture them). Every returned
/// substitution is idempotent, kind-respecting (each binding is a
/// second-order context using all of its binders), and satisfies
/// `normalize(sigma pattern) = target` up to alpha.
pub fn match_types(pattern: &Type, target: &Type, frozen: &BTreeSet<Name>) -> Vec<Substitution> {
    let flex: BTreeSet<Name> = free_type_vars(pattern)
        .into_iter()
        .filter(|v| !frozen.contains(v))
        .collect();
    let mut results = Vec::new();
    let mut state = State {
        problems: vec![(pattern.clone(), target.clone())],
        bindings: Vec::new(),
        flex: flex.clone(),
        fresh: 0,
    };
    solve(&mut state, &mut results);

    let mut out: Vec<Substitution> = Vec::new();
    'candidates: for bindings in results {
        let sigma = compose_bindings(&bindings, &flex);
        // Kind filter: a binding whose normal form drops a binder (or is
        // not a flat context at all) cannot be kinded, because lambda
        // kinding is relevant.
        for (_, t) in sigma.iter() {
            if !is_second_order(t) {
                continue 'candidates;
            }
            // A binding may not capture a variable bound inside the
            // pattern (the shared names introduced for binder congruence).
            if free_type_vars(t).iter().any(|v| v.starts_with("?b")) {
                continue 'candidates;
            }
        }
        debug_assert!(
            alpha_eq(&normalize_type(&crate::kernel::subst_type(&sigma, pattern)), target),
            "unsound matcher {:?} for {:?} -> {:?}",
            sigma,
            pattern,
            target
        );
        // Deduplicate derivations that reach the same matcher.
        if !out.iter().any(|s| subst_alpha_eq(s, &sigma)) {
            out.push(sigma);
        }
    }
    out
}

fn subst_alpha_eq(a: &Substitution, b: &Substitution) -> bool {
    a.len() == b.len()
        && a.iter().all(|(k, v)| match b.get(k) {
            Some(w) => alpha_eq(v, w),
            None => false,
        })
}

struct State {
    /// Remaining problems, processed front-first (left to right).
    problems: Vec<(Type, Type)>,
    /// Bindings in the order they were made; later bindings may bind
    /// imitation variables occurring in earlier codomains.
    bindings: Vec<(Name, Type)>,
    flex: BTreeSet<Name>,
    fresh: usize,
}

/// Resolves the binding chain into one idempotent substitution over the
/// original match variables.
fn compose_bindings(bindings: &[(Name, Type)], original: &BTreeSet<Name>) -> Substitution {
    let mut resolved: Vec<(Name, Type)> = Vec::new();
    for (y, t) in bindings.iter().rev() {
        let s = Substitution::from_pairs(resolved.iter().cloned());
        resolved.push((y.clone(), normalize_type(&crate::kernel::subst_type(&s, t))));
    }
    Substitution::from_pairs(
        resolved
            .into_iter()
            .filter(|(y, _)| original.contains(y)),
    )
}

fn solve(state: &mut State, results: &mut Vec<Vec<(Name, Type)>>) {
    let Some((pattern, target)) = state.problems.pop_front_pair() else {
        results.push(state.bindings.clone());
        return;
    };
    let (phead, pargs) = spine_owned(&pattern);
    let flex_head = match &phead {
        Type::Var(y) if state.flex.contains(y) => Some(y.clone()),
        _ => None,
    };
    match flex_head {
        None => {
            // Rigid head: congruence on the connective, spine
            // decomposition, or failure on a clash.
            let saved = state.problems.clone();
            match (&pattern, &target) {
                (Type::Imply(pa, pb), Type::Imply(ta, tb)) => {
                    state.problems.insert(0, ((**pb).clone(), (**tb).clone()));
                    state.problems.insert(0, ((**pa).clone(), (**ta).clone()));
                    solve(state, results);
                }
                (Type::Forall(x1, k1, b1), Type::Forall(x2, k2, b2)) if k1 == k2 => {
                    // Identify the two binders under a shared rigid name;
                    // matchers that let it escape are filtered at the end.
                    let v = format!("?b{}", state.fresh);
                    state.fresh += 1;
                    state.problems.insert(0, (rename(x1, &v, b1), rename(x2, &v, b2)));
                    solve(state, results);
                }
                (Type::Lam(x1, b1), Type::Lam(x2, b2)) => {
                    let v = format!("?b{}", state.fresh);
                    state.fresh += 1;
                    state.problems.insert(0, (rename(x1, &v, b1), rename(x2, &v, b2)));
                    solve(state, results);
                }
                _ => {
                    let (thead, targs) = spine_owned(&target);
                    if heads_equal(&phead, &thead) && pargs.len() == targs.len() {
                        for (a, b) in pargs.iter().zip(&targs).rev() {
                            state.problems.insert(0, (a.clone(), b.clone()));
                        }
                        solve(state, results);
                    }
                }
            }
            state.problems = saved;
            state.problems.insert(0, (pattern, target));
        }
        Some(y) => {
            let n = pargs.len();
            if n == 0 {
                // A zero-argument match variable is bound outright; this is
                // imitation followed by full decomposition, without the
                // detour through vacuous fresh variables.
                try_binding(state, results, &y, target.clone(), &pattern, &target);
                state.problems.insert(0, (pattern, target));
                return;
            }
            let (thead, targs) = spine_owned(&target);
            // Proj, ascending argument index.
            for i in 1..=n {
                let binders: Vec<Name> = (1..=n).map(|k| format!("x{}'", k)).collect();
                let body = Type::var(binders[i - 1].clone());
                let proj = binders
                    .iter()
                    .rev()
                    .fold(body, |b, x| Type::lam(x.clone(), b));
                try_binding(state, results, &y, proj, &pattern, &target);
            }
            // Imi: copy the rigid head, one fresh variable per argument.
            if !matches!(thead, Type::Var(ref v) if state.flex.contains(v)) {
                let head_name = match &thead {
                    Type::Var(v) => Some(v.clone()),
                    Type::Const(c) => Some(c.clone()),
                    _ => None,
                };
                if let Some(head_name) = head_name {
                    let binders: Vec<Name> = (1..=n)
                        .map(|k| {
                            let mut b = format!("m{}'", k);
                            while b == head_name {
                                b.push('\'');
                            }
                            b
                        })
                        .collect();
                    let mut fresh_vars = Vec::new();
                    for _ in 0..targs.len() {
                        fresh_vars.push(format!("?im{}", state.fresh));
                        state.fresh += 1;
                    }
                    let mut body = thead.clone();
                    for fv in &fresh_vars {
                        let applied = binders
                            .iter()
                            .fold(Type::var(fv.clone()), |f, b| {
                                Type::app(f, Type::var(b.clone()))
                            });
                        body = Type::app(body, applied);
                    }
                    let imi = binders
                        .iter()
                        .rev()
                        .fold(body, |b, x| Type::lam(x.clone(), b));
                    for fv in &fresh_vars {
                        state.flex.insert(fv.clone());
                    }
                    try_binding(state, results, &y, imi, &pattern, &target);
                    for fv in &fresh_vars {
                        state.flex.remove(fv);
                    }
                }
            }
            state.problems.insert(0, (pattern, target));
        }
    }
}

/// Binds `y`, rewrites all pending problems, and recurses; restores the
/// state afterwards so sibling branches see the original problems.
fn try_binding(
    state: &mut State,
    results: &mut Vec<Vec<(Name, Type)>>,
    y: &str,
    binding: Type,
    current_pattern: &Type,
    current_target: &Type,
) {
    let s = Substitution::singleton(y.to_string(), binding.clone());
    let saved = state.problems.clone();
    let mut new_problems = vec![(current_pattern.clone(), current_target.clone())];
    new_problems.extend(saved.iter().cloned());
    state.problems = new_problems
        .into_iter()
        .map(|(p, t)| (normalize_type(&crate::kernel::subst_type(&s, &p)), t))
        .collect();
    state.bindings.push((y.to_string(), binding));
    solve(state, results);
    state.bindings.pop();
    state.problems = saved;
}

fn rename(x: &str, v: &str, body: &Type) -> Type {
    crate::kernel::subst_type(
        &Substitution::singleton(x.to_string(), Type::var(v.to_string())),
        body,
    )
}

fn heads_equal(a: &Type, b: &Type) -> bool {
    match (a, b) {
        (Type::Var(x), Type::Var(y)) => x == y,
        (Type::Const(x), Type::Const(y)) => x == y,
        _ => false,
    }
}

fn spine_owned(t: &Type) -> (Type, Vec<Type>) {
    let (h, args) = t.spine();
    (h.clone(), args.into_iter().cloned().collect())
}

trait PopFront {
    fn pop_front_pair(&mut self) -> Option<(Type, Type)>;
}

impl PopFront for Vec<(Type, Type)> {
    fn pop_front_pair(&mut self) -> Option<(Type, Type)> {
        if self.is_empty() {
            None
        } else {
            Some(self.remove(0))
        }
    }
}
