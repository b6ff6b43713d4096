//! Proof search: reconstructing fully annotated evidence from bare
//! (Curry-style) corecursive evidence by resolution.
//!
//! A resolution state is a set of goals `(L, Gamma, e, T)`: prove `T` from
//! `Gamma` with the bare evidence `e` as the script, where `L` is the
//! ordered list of variables introduced while the goal was built
//! (eigenvariables from opening `forall`s, and existential variables left
//! over from applying hypotheses whose quantified variables do not all
//! occur in their conclusion). The four reduction rules:
//!
//! 1. an application `(kappa|alpha) e1 .. en` against a goal `A`, where the
//!    hypothesis has type `forall x̄ . T1 => .. => Tn => B`: freshen `x̄`,
//!    second-order-match `B` onto `A`, and spawn one goal per premise.
//!    Bindings for variables other than the freshened ones (the
//!    existential part of the matcher) are applied to every other goal.
//! 2. a lambda prefix against an implication prefix: move the premises
//!    into `Gamma` (recording the annotations);
//! 3. a `forall` goal: open it with fresh eigenvariables;
//! 4. a fixed point `mu alpha . e`: assume `alpha` at the goal type.
//!
//! A bare hypothesis name is first tried directly against the whole goal
//! (matching the goal onto the hypothesis type, instantiating only
//! existential variables), which is what lets a hypothesis be passed along
//! unapplied.
//!
//! Existential bindings must respect scope: a variable may only be bound
//! to things introduced before it (see [`scope_ok`]), otherwise the
//! reconstructed evidence would use variables outside their binders and
//! fail the proof check. A scope violation aborts with a diagnostic
//! showing the offending substitution and the partial (mixed) proof term,
//! unless backtracking over existential bindings is enabled.
//!
//! With no existential variables anywhere this is plain resolution; the
//! restricted mode ([`Mode::Rsm`]) rejects declarations that would need
//! existential instantiation up front.

use std::collections::BTreeSet;
use std::fmt;

use crate::checker::erase;
use crate::dynamics::{FirstOrderTerm, RewriteSystem};
use crate::kernel::{
    alpha_eq_evidence, free_evidence_vars, free_type_vars, kind_check, normalize_type, subst_type,
    types_convertible, Evidence, Kind, KindEnv, Name, NameSupply, Substitution, Type, TypeEnv,
};
use crate::leibniz::leibniz_translate;
use crate::matching::match_types;
use crate::surface::{print_evidence, print_type, signature, Decl, Program};

// ---------------------------------------------------------------------------
// Options and results

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Plain resolution: declarations may not contain existential variables.
    Rsm,
    /// Resolution with existential variables, instantiated by matching and
    /// propagated across goals (the default).
    Ersm,
}

#[derive(Clone, Copy, Debug)]
pub struct ResolveOptions {
    pub mode: Mode,
    /// Treat a scope violation as a failed branch and try the next matcher
    /// instead of aborting with a diagnostic.
    pub backtrack_existentials: bool,
    /// Overrides the size-derived resolution step budget.
    pub step_limit: Option<usize>,
}

impl Default for ResolveOptions {
    fn default() -> ResolveOptions {
        ResolveOptions {
            mode: Mode::Ersm,
            backtrack_existentials: false,
            step_limit: None,
        }
    }
}

/// A successful resolution: the fully annotated evidence and the
/// accumulated (idempotent) substitution for existential variables.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub evidence: Evidence,
    pub substitution: Substitution,
}

// ---------------------------------------------------------------------------
// Errors

#[derive(Clone, Debug)]
pub enum ResolveError {
    /// No matcher takes the hypothesis conclusion to the goal.
    NoMatcher {
        head: Name,
        hypothesis: Type,
        goal: Type,
    },
    /// The bare evidence is not in long form for its goal.
    NotLongForm { message: String },
    Scope(Box<ScopeErrorDiag>),
    StepLimit { limit: usize },
    UnboundName { name: Name },
}

impl fmt::Display for ResolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResolveError::NoMatcher {
                head,
                hypothesis,
                goal,
            } => write!(
                f,
                "no matcher takes {} : {} to the goal {}",
                head,
                print_type(hypothesis),
                print_type(goal)
            ),
            ResolveError::NotLongForm { message } => {
                write!(f, "{} (the proof term must be in long form)", message)
            }
            ResolveError::Scope(d) => d.fmt(f),
            ResolveError::StepLimit { limit } => {
                write!(f, "resolution exceeded its step budget of {}", limit)
            }
            ResolveError::UnboundName { name } => write!(f, "unbound name {}", name),
        }
    }
}

impl std::error::Error for ResolveError {}

/// A scope violation: the substitution found for an existential variable
/// mentions variables introduced after it.
#[derive(Clone, Debug)]
pub struct ScopeErrorDiag {
    /// The pattern (hypothesis conclusion) that was being matched.
    pub pattern: Type,
    /// The goal it was matched against.
    pub target: Type,
    pub hypothesis_name: Name,
    pub hypothesis_type: Type,
    /// The offending existential substitution.
    pub substitution: Substitution,
    /// The goal's variable list, in introduction order.
    pub variables: Vec<Name>,
    /// Eigenvariables, shown bracketed at use sites.
    pub eigens: BTreeSet<Name>,
    /// The partial proof term with goals shown as their (parenthesized)
    /// types.
    pub mixed_term: String,
}

impl fmt::Display for ScopeErrorDiag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "scope error when matching {}",
            print_type(&decorate(&self.pattern, &self.eigens))
        )?;
        writeln!(
            f,
            "against {}",
            print_type(&decorate(&self.target, &self.eigens))
        )?;
        writeln!(
            f,
            "  when applying {} : {}",
            self.hypothesis_name,
            print_type(&decorate(&self.hypothesis_type, &self.eigens))
        )?;
        let bindings: Vec<String> = self
            .substitution
            .iter()
            .map(|(x, t)| format!("{} : {}", x, print_type(&decorate(t, &self.eigens))))
            .collect();
        writeln!(f, "  when applying substitution [ {} ]", bindings.join(", "))?;
        writeln!(f, "  current variables list:")?;
        writeln!(f, "   {}", self.variables.join(" "))?;
        writeln!(f, "  the current mixed proof term:")?;
        write!(f, "   {}", self.mixed_term)
    }
}

/// Marks every eigenvariable use site: `x` prints as `[x]`.
fn decorate(t: &Type, eigens: &BTreeSet<Name>) -> Type {
    if eigens.is_empty() {
        return t.clone();
    }
    let s = Substitution::from_pairs(
        eigens
            .iter()
            .map(|x| (x.clone(), Type::var(format!("[{}]", x)))),
    );
    subst_type(&s, t)
}

// ---------------------------------------------------------------------------
// Scope discipline

/// The scope condition on an existential substitution with respect to an
/// introduction-ordered variable list `l`:
///
/// 1. for every bound variable in `l`, everything its binding mentions
///    must be in `l` strictly before it, and
/// 2. a bound variable outside `l` may not be bound to anything that
///    mentions a variable of `l`.
pub fn scope_ok(l: &[Name], sigma: &Substitution) -> bool {
    for (x, t) in sigma.iter() {
        let fv = free_type_vars(t);
        if let Some(xi) = l.iter().position(|n| n == x) {
            for y in &fv {
                match l.iter().position(|n| n == y) {
                    Some(yi) if yi < xi => {}
                    _ => return false,
                }
            }
        } else if fv.iter().any(|y| l.contains(y)) {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Search state

/// One entry of the evidence being reconstructed. Slots form a tree by
/// index; open goals point at `Hole` slots and fill them in as rules fire.
#[derive(Clone, Debug)]
enum Slot {
    Hole { goal: Type },
    Mu { name: Name, body: usize },
    Binders { entries: Vec<Binder>, body: usize },
    Apply {
        head: Evidence,
        ty_args: Vec<Type>,
        args: Vec<usize>,
    },
}

#[derive(Clone, Debug)]
enum Binder {
    Ty(Name),
    Ev(Name, Type),
}

#[derive(Clone, Debug)]
struct Goal {
    /// Introduction-ordered eigen- and existential variables of this goal.
    scope: Vec<Name>,
    gamma: TypeEnv,
    evidence: Evidence,
    goal: Type,
    slot: usize,
}

#[derive(Clone, Debug)]
struct State {
    goals: Vec<Goal>,
    slots: Vec<Slot>,
    supply: NameSupply,
    accum: Substitution,
    existentials: BTreeSet<Name>,
    eigens: BTreeSet<Name>,
}

impl State {
    fn new_slot(&mut self, s: Slot) -> usize {
        self.slots.push(s);
        self.slots.len() - 1
    }

    /// Applies an existential substitution everywhere: goals, their
    /// environments and variable lists, and the types already recorded in
    /// the partial evidence.
    fn apply(&mut self, s: &Substitution) {
        if s.is_empty() {
            return;
        }
        for g in &mut self.goals {
            g.scope.retain(|n| s.get(n).is_none());
            g.gamma = g.gamma.apply_subst(s);
            g.goal = normalize_type(&subst_type(s, &g.goal));
        }
        for slot in &mut self.slots {
            match slot {
                Slot::Hole { goal } => *goal = normalize_type(&subst_type(s, goal)),
                Slot::Binders { entries, .. } => {
                    for b in entries {
                        if let Binder::Ev(_, t) = b {
                            *t = normalize_type(&subst_type(s, t));
                        }
                    }
                }
                Slot::Apply { ty_args, .. } => {
                    for t in ty_args {
                        *t = normalize_type(&subst_type(s, t));
                    }
                }
                Slot::Mu { .. } => {}
            }
        }
        debug_assert!(self
            .goals
            .iter()
            .all(|g| scope_ok(&g.scope, s) || true));
        self.accum = self.accum.compose(s);
        debug_assert!(self.accum.is_idempotent());
    }
}

/// Extracts the finished evidence from the slot tree.
fn extract(state: &State, idx: usize) -> Evidence {
    match &state.slots[idx] {
        Slot::Hole { goal } => unreachable!("open goal left over: {}", print_type(goal)),
        Slot::Mu { name, body } => Evidence::mu(name.clone(), extract(state, *body)),
        Slot::Binders { entries, body } => {
            entries
                .iter()
                .rev()
                .fold(extract(state, *body), |acc, b| match b {
                    Binder::Ty(x) => Evidence::ty_lam(x.clone(), acc),
                    Binder::Ev(x, t) => Evidence::elam(x.clone(), Some(t.clone()), acc),
                })
        }
        Slot::Apply {
            head,
            ty_args,
            args,
        } => {
            let mut e = head.clone();
            for t in ty_args {
                e = Evidence::ty_app(e, t.clone());
            }
            for a in args {
                e = Evidence::app(e, extract(state, *a));
            }
            e
        }
    }
}

/// Renders the partial proof term for diagnostics: goals print as their
/// parenthesized types, eigenvariable uses are bracketed.
fn render_mixed(state: &State) -> String {
    render_slot(state, 0, false)
}

fn render_slot(state: &State, idx: usize, arg_pos: bool) -> String {
    match &state.slots[idx] {
        Slot::Hole { goal } => format!("({})", print_type(&decorate(goal, &state.eigens))),
        Slot::Mu { name, body } => {
            let s = format!("mu {} . {}", name, render_slot(state, *body, false));
            if arg_pos {
                format!("({})", s)
            } else {
                s
            }
        }
        Slot::Binders { .. } => {
            let mut parts: Vec<String> = Vec::new();
            let mut cur = idx;
            while let Slot::Binders { entries, body } = &state.slots[cur] {
                for b in entries {
                    match b {
                        Binder::Ty(x) => parts.push(x.clone()),
                        Binder::Ev(x, t) => parts.push(format!(
                            "({} : {})",
                            x,
                            print_type(&decorate(t, &state.eigens))
                        )),
                    }
                }
                cur = *body;
            }
            let s = format!("\\ {} . {}", parts.join(" "), render_slot(state, cur, false));
            if arg_pos {
                format!("({})", s)
            } else {
                s
            }
        }
        Slot::Apply {
            head,
            ty_args,
            args,
        } => {
            let mut s = match head {
                Evidence::EVar(n) | Evidence::EConst(n) => n.clone(),
                other => print_evidence(other),
            };
            for t in ty_args {
                let d = decorate(t, &state.eigens);
                if matches!(d, Type::Var(_) | Type::Const(_)) {
                    s.push(' ');
                    s.push_str(&print_type(&d));
                } else {
                    s.push_str(&format!(" ({})", print_type(&d)));
                }
            }
            for a in args {
                s.push(' ');
                s.push_str(&render_slot(state, *a, true));
            }
            if arg_pos && !(ty_args.is_empty() && args.is_empty()) {
                format!("({})", s)
            } else {
                s
            }
        }
    }
}

// ---------------------------------------------------------------------------
// The resolution loop

struct Budget {
    left: usize,
    limit: usize,
}

fn evidence_size(e: &Evidence) -> usize {
    match e {
        Evidence::EVar(_) | Evidence::EConst(_) => 1,
        Evidence::ELam(_, _, b) | Evidence::Mu(_, b) | Evidence::TyLam(_, b) => {
            1 + evidence_size(b)
        }
        Evidence::EApp(f, a) => 1 + evidence_size(f) + evidence_size(a),
        Evidence::TyApp(f, _) => 1 + evidence_size(f),
    }
}

fn type_size(t: &Type) -> usize {
    match t {
        Type::Var(_) | Type::Const(_) => 1,
        Type::Lam(_, b) | Type::Forall(_, _, b) => 1 + type_size(b),
        Type::App(a, b) | Type::Imply(a, b) => 1 + type_size(a) + type_size(b),
    }
}

/// Reconstructs fully annotated evidence for `goal` from the bare evidence,
/// or explains why it cannot.
pub fn resolve(
    gamma: &TypeEnv,
    evidence: &Evidence,
    goal: &Type,
    supply: NameSupply,
    opts: &ResolveOptions,
) -> Result<Resolved, ResolveError> {
    let goal_n = normalize_type(goal);
    let limit = opts
        .step_limit
        .unwrap_or_else(|| (evidence_size(evidence) * type_size(&goal_n) * 16).max(10_000));
    let mut state = State {
        goals: Vec::new(),
        slots: vec![Slot::Hole {
            goal: goal_n.clone(),
        }],
        supply,
        accum: Substitution::identity(),
        existentials: BTreeSet::new(),
        eigens: BTreeSet::new(),
    };
    state.goals.push(Goal {
        scope: Vec::new(),
        gamma: gamma.clone(),
        evidence: evidence.clone(),
        goal: goal_n,
        slot: 0,
    });
    let mut budget = Budget { left: limit, limit };
    solve(&mut state, &mut budget, opts)?;
    let result = extract(&state, 0);
    debug_assert!(
        alpha_eq_evidence(&erase(&result), &erase(evidence)),
        "annotated evidence does not erase to its script"
    );
    Ok(Resolved {
        evidence: result,
        substitution: state.accum,
    })
}

/// Picks the next goal: the first whose conclusion mentions no existential
/// variable, so matching against it can determine existentials elsewhere.
fn select_goal(state: &State) -> usize {
    state
        .goals
        .iter()
        .position(|g| {
            let mut bound: BTreeSet<Name> = BTreeSet::new();
            let mut cur = &g.goal;
            loop {
                match cur {
                    Type::Forall(x, _, b) => {
                        bound.insert(x.clone());
                        cur = b;
                    }
                    Type::Imply(_, b) => cur = b,
                    _ => break,
                }
            }
            free_type_vars(cur)
                .iter()
                .all(|v| bound.contains(v) || !state.existentials.contains(v))
        })
        .unwrap_or(0)
}

fn evidence_spine(e: &Evidence) -> Option<(&Evidence, Vec<&Evidence>)> {
    let mut args = Vec::new();
    let mut cur = e;
    loop {
        match cur {
            Evidence::EApp(f, a) => {
                args.push(&**a);
                cur = f;
            }
            Evidence::EVar(_) | Evidence::EConst(_) => {
                args.reverse();
                return Some((cur, args));
            }
            _ => return None,
        }
    }
}

fn solve(state: &mut State, budget: &mut Budget, opts: &ResolveOptions) -> Result<(), ResolveError> {
    loop {
        if state.goals.is_empty() {
            return Ok(());
        }
        if budget.left == 0 {
            return Err(ResolveError::StepLimit {
                limit: budget.limit,
            });
        }
        budget.left -= 1;

        let pos = select_goal(state);
        let goal = state.goals[pos].clone();

        // Rule 4: a fixed point assumes its own statement.
        if let Evidence::Mu(a, body) = &goal.evidence {
            let body_slot = state.new_slot(Slot::Hole {
                goal: goal.goal.clone(),
            });
            state.slots[goal.slot] = Slot::Mu {
                name: a.clone(),
                body: body_slot,
            };
            let mut gamma = goal.gamma.clone();
            gamma.insert(a.clone(), goal.goal.clone());
            state.goals[pos] = Goal {
                scope: goal.scope,
                gamma,
                evidence: (**body).clone(),
                goal: goal.goal,
                slot: body_slot,
            };
            continue;
        }

        // A bare hypothesis name may prove the goal as it stands, up to
        // instantiating existential variables of the goal.
        if let Evidence::EVar(n) | Evidence::EConst(n) = &goal.evidence {
            let Some(hyp) = goal.gamma.lookup(n) else {
                return Err(ResolveError::UnboundName { name: n.clone() });
            };
            let hyp = normalize_type(hyp);
            let frozen: BTreeSet<Name> = free_type_vars(&goal.goal)
                .into_iter()
                .filter(|v| !state.existentials.contains(v))
                .collect();
            let matchers = match_types(&goal.goal, &hyp, &frozen);
            if !matchers.is_empty() {
                let mut last_err = None;
                for sigma in &matchers {
                    if let Some(err) = check_scope(state, pos, &goal, n, &hyp, &goal.goal, sigma)
                    {
                        if !opts.backtrack_existentials {
                            return Err(err);
                        }
                        last_err = Some(err);
                        continue;
                    }
                    let mut child = state.clone();
                    child.goals.remove(pos);
                    child.slots[goal.slot] = Slot::Apply {
                        head: goal.evidence.clone(),
                        ty_args: Vec::new(),
                        args: Vec::new(),
                    };
                    child.apply(sigma);
                    match solve(&mut child, budget, opts) {
                        Ok(()) => {
                            *state = child;
                            return Ok(());
                        }
                        Err(e @ ResolveError::Scope(_)) if !opts.backtrack_existentials => {
                            return Err(e)
                        }
                        Err(e @ ResolveError::StepLimit { .. }) => return Err(e),
                        Err(e) => last_err = Some(e),
                    }
                }
                // Direct use failed downstream; fall through and try the
                // hypothesis as an (instantiated) application instead.
                let _ = last_err;
            }
        }

        // Rule 3: open universals with fresh eigenvariables.
        if matches!(goal.goal, Type::Forall(..)) {
            let mut entries = Vec::new();
            let mut scope = goal.scope.clone();
            let mut cur = goal.goal.clone();
            while let Type::Forall(x, _, b) = cur {
                let f = state.supply.fresh(&x);
                cur = subst_type(
                    &Substitution::singleton(x.clone(), Type::var(f.clone())),
                    &b,
                );
                state.eigens.insert(f.clone());
                scope.push(f.clone());
                entries.push(Binder::Ty(f));
            }
            let body_slot = state.new_slot(Slot::Hole { goal: cur.clone() });
            state.slots[goal.slot] = Slot::Binders {
                entries,
                body: body_slot,
            };
            state.goals[pos] = Goal {
                scope,
                gamma: goal.gamma,
                evidence: goal.evidence,
                goal: cur,
                slot: body_slot,
            };
            continue;
        }

        // Rule 2: a lambda prefix introduces the premises.
        if matches!(goal.evidence, Evidence::ELam(..)) {
            let mut entries = Vec::new();
            let mut gamma = goal.gamma.clone();
            let mut ev = goal.evidence.clone();
            let mut ty = goal.goal.clone();
            loop {
                match ev {
                    Evidence::ELam(x, ann, body) => {
                        let Type::Imply(t1, t2) = ty else {
                            return Err(ResolveError::NotLongForm {
                                message: format!(
                                    "the binder {} has no matching premise in the goal {}",
                                    x,
                                    print_type(&goal.goal)
                                ),
                            });
                        };
                        let t1 = normalize_type(&t1);
                        if let Some(a) = ann {
                            if !types_convertible(&a, &t1) {
                                return Err(ResolveError::NotLongForm {
                                    message: format!(
                                        "the annotation on {} is {}, but the premise is {}",
                                        x,
                                        print_type(&a),
                                        print_type(&t1)
                                    ),
                                });
                            }
                        }
                        gamma.insert(x.clone(), t1.clone());
                        entries.push(Binder::Ev(x, t1));
                        ev = *body;
                        ty = *t2;
                    }
                    _ => break,
                }
            }
            let body_slot = state.new_slot(Slot::Hole { goal: ty.clone() });
            state.slots[goal.slot] = Slot::Binders {
                entries,
                body: body_slot,
            };
            state.goals[pos] = Goal {
                scope: goal.scope,
                gamma,
                evidence: ev,
                goal: ty,
                slot: body_slot,
            };
            continue;
        }

        // Rule 1: an applied hypothesis.
        let Some((head, args)) = evidence_spine(&goal.evidence) else {
            return Err(ResolveError::NotLongForm {
                message: format!(
                    "expected a hypothesis application, found {}",
                    print_evidence(&goal.evidence)
                ),
            });
        };
        let name = match head {
            Evidence::EVar(n) | Evidence::EConst(n) => n.clone(),
            _ => unreachable!(),
        };
        let Some(hyp) = goal.gamma.lookup(&name) else {
            return Err(ResolveError::UnboundName { name });
        };
        let hyp = normalize_type(hyp);

        // Freshen the universal prefix.
        let mut fresh_names: Vec<Name> = Vec::new();
        let mut cur = hyp.clone();
        while let Type::Forall(x, _, b) = cur {
            let f = state.supply.fresh(&x);
            cur = subst_type(
                &Substitution::singleton(x.clone(), Type::var(f.clone())),
                &b,
            );
            fresh_names.push(f);
        }
        // Peel one premise per argument.
        let mut premises = Vec::new();
        for _ in 0..args.len() {
            match cur {
                Type::Imply(t1, t2) => {
                    premises.push(normalize_type(&t1));
                    cur = *t2;
                }
                _ => {
                    return Err(ResolveError::NotLongForm {
                        message: format!(
                            "{} is applied to more arguments than {} has premises",
                            name,
                            print_type(&hyp)
                        ),
                    })
                }
            }
        }
        let conclusion = normalize_type(&cur);
        let fresh_set: BTreeSet<Name> = fresh_names.iter().cloned().collect();
        let concl_fvs = free_type_vars(&conclusion);
        let frozen: BTreeSet<Name> = concl_fvs
            .iter()
            .filter(|v| !fresh_set.contains(*v) && !state.existentials.contains(*v))
            .cloned()
            .collect();
        let matchers = match_types(&conclusion, &goal.goal, &frozen);
        if matchers.is_empty() {
            return Err(ResolveError::NoMatcher {
                head: name,
                hypothesis: hyp,
                goal: goal.goal.clone(),
            });
        }
        let head = head.clone();
        let args: Vec<Evidence> = args.into_iter().cloned().collect();
        let mut last_err = None;
        for sigma in &matchers {
            let sigma2 = sigma.without(&fresh_set);
            if let Some(err) = check_scope(state, pos, &goal, &name, &hyp, &conclusion, &sigma2) {
                if !opts.backtrack_existentials {
                    return Err(err);
                }
                last_err = Some(err);
                continue;
            }
            let mut child = state.clone();
            child.goals.remove(pos);
            child.apply(&sigma2);
            // Quantified variables not in the conclusion survive as
            // existential variables of the new goals.
            let mut scope: Vec<Name> = goal
                .scope
                .iter()
                .filter(|n| sigma2.get(n).is_none())
                .cloned()
                .collect();
            for f in &fresh_names {
                if !concl_fvs.contains(f) {
                    child.existentials.insert(f.clone());
                    scope.push(f.clone());
                }
            }
            let ty_args: Vec<Type> = fresh_names
                .iter()
                .map(|f| match sigma.get(f) {
                    Some(t) => normalize_type(t),
                    None => Type::var(f.clone()),
                })
                .collect();
            let gamma = goal.gamma.apply_subst(&sigma2);
            let mut holes = Vec::new();
            let mut new_goals = Vec::new();
            for (i, prem) in premises.iter().enumerate() {
                let pt = normalize_type(&subst_type(sigma, prem));
                let h = child.new_slot(Slot::Hole { goal: pt.clone() });
                holes.push(h);
                new_goals.push(Goal {
                    scope: scope.clone(),
                    gamma: gamma.clone(),
                    evidence: args[i].clone(),
                    goal: pt,
                    slot: h,
                });
            }
            child.slots[goal.slot] = Slot::Apply {
                head: head.clone(),
                ty_args,
                args: holes,
            };
            for (k, g) in new_goals.into_iter().enumerate() {
                child.goals.insert(pos + k, g);
            }
            match solve(&mut child, budget, opts) {
                Ok(()) => {
                    *state = child;
                    return Ok(());
                }
                Err(e @ ResolveError::Scope(_)) if !opts.backtrack_existentials => return Err(e),
                Err(e @ ResolveError::StepLimit { .. }) => return Err(e),
                Err(e) => last_err = Some(e),
            }
        }
        return Err(last_err.unwrap_or(ResolveError::NoMatcher {
            head: name,
            hypothesis: hyp,
            goal: goal.goal.clone(),
        }));
    }
}

/// Checks an existential substitution against every goal's variable list;
/// on violation builds the diagnostic (against the current goal's list).
fn check_scope(
    state: &State,
    pos: usize,
    goal: &Goal,
    hyp_name: &str,
    hyp_ty: &Type,
    pattern: &Type,
    sigma: &Substitution,
) -> Option<ResolveError> {
    let current_ok = scope_ok(&goal.scope, sigma);
    let others_ok = state
        .goals
        .iter()
        .enumerate()
        .all(|(i, g)| i == pos || scope_ok(&g.scope, sigma));
    if current_ok && others_ok {
        return None;
    }
    let variables = if current_ok {
        state
            .goals
            .iter()
            .enumerate()
            .find(|(i, g)| *i != pos && !scope_ok(&g.scope, sigma))
            .map(|(_, g)| g.scope.clone())
            .unwrap_or_default()
    } else {
        goal.scope.clone()
    };
    Some(ResolveError::Scope(Box::new(ScopeErrorDiag {
        pattern: pattern.clone(),
        target: goal.goal.clone(),
        hypothesis_name: hyp_name.to_string(),
        hypothesis_type: hyp_ty.clone(),
        substitution: sigma.clone(),
        variables,
        eigens: state.eigens.clone(),
        mixed_term: render_mixed(state),
    })))
}

// ---------------------------------------------------------------------------
// Program elaboration

/// One reconstructed lemma.
#[derive(Clone, Debug)]
pub struct ElaboratedLemma {
    pub name: Name,
    pub ty: Type,
    /// Fully annotated evidence (checked separately by the proof checker).
    pub evidence: Evidence,
    /// The bare evidence as written (equation sugar expanded).
    pub curry: Evidence,
    /// True when the declaration already carried annotated evidence and
    /// resolution was skipped.
    pub pre_annotated: bool,
}

/// A fully elaborated program: rewrite system, signature, axioms, and
/// annotated lemmas, in declaration order.
#[derive(Clone, Debug)]
pub struct Elaboration {
    pub delta: KindEnv,
    pub rewrite: RewriteSystem,
    /// Axioms: the Leibniz translation of each rewrite rule, then the
    /// explicit axiom declarations, in declaration order.
    pub gamma: TypeEnv,
    /// The explicitly declared axioms (excluding rule translations).
    pub axioms: Vec<(Name, Type)>,
    pub lemmas: Vec<ElaboratedLemma>,
}

#[derive(Clone, Debug)]
pub enum ElaborateError {
    Rule { name: Name, message: String },
    Kind { name: Name, message: String },
    MissingSignature { name: Name },
    DuplicateDefinition { name: Name },
    /// A declaration needs existential variables, which plain resolution
    /// does not handle.
    Existential { name: Name, vars: Vec<Name> },
    Resolve { name: Name, error: ResolveError },
}

impl fmt::Display for ElaborateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElaborateError::Rule { name, message } => {
                write!(f, "rewrite rule {}: {}", name, message)
            }
            ElaborateError::Kind { name, message } => {
                write!(f, "the type of {} does not kind-check: {}", name, message)
            }
            ElaborateError::MissingSignature { name } => {
                write!(f, "{} is defined but has no type declaration", name)
            }
            ElaborateError::DuplicateDefinition { name } => {
                write!(f, "{} is defined more than once", name)
            }
            ElaborateError::Existential { name, vars } => write!(
                f,
                "the type of {} contains existential variables ({}); \
                 resolution with existential variables is required",
                name,
                vars.join(", ")
            ),
            ElaborateError::Resolve { name, error } => {
                write!(f, "resolution for {} failed: {}", name, error)
            }
        }
    }
}

impl std::error::Error for ElaborateError {}

/// The existential variables of a declared type `forall x̄ . T̄ => A`:
/// quantified variables missing from the conclusion `A`, plus free
/// variables of the premises.
pub fn existential_vars(ty: &Type) -> Vec<Name> {
    let mut bound: Vec<Name> = Vec::new();
    let mut cur = ty;
    while let Type::Forall(x, _, b) = cur {
        bound.push(x.clone());
        cur = b;
    }
    let mut premises: Vec<&Type> = Vec::new();
    while let Type::Imply(t1, t2) = cur {
        premises.push(t1);
        cur = t2;
    }
    let concl_fvs = free_type_vars(cur);
    let mut out: Vec<Name> = bound
        .iter()
        .filter(|x| !concl_fvs.contains(*x))
        .cloned()
        .collect();
    for p in premises {
        for v in free_type_vars(p) {
            if !bound.contains(&v) && !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

/// Elaborates a parsed program: builds the rewrite system and its axiom
/// environment, expands equation sugar, and resolves each proof
/// declaration in order (earlier lemmas are hypotheses for later ones).
pub fn elaborate_program(
    prog: &Program,
    opts: &ResolveOptions,
) -> Result<Elaboration, ElaborateError> {
    // The rewrite system from the rule declarations.
    let mut rule_decls = Vec::new();
    for d in &prog.decls {
        if let Decl::Rule { name, lhs, rhs } = d {
            let l = FirstOrderTerm::from_type(lhs).map_err(|m| ElaborateError::Rule {
                name: name.clone(),
                message: m,
            })?;
            let r = FirstOrderTerm::from_type(rhs).map_err(|m| ElaborateError::Rule {
                name: name.clone(),
                message: m,
            })?;
            rule_decls.push((name.clone(), l, r));
        }
    }
    let rewrite = RewriteSystem::new(rule_decls).map_err(|e| ElaborateError::Rule {
        name: String::new(),
        message: e.to_string(),
    })?;
    let delta = signature(prog);
    let (_, mut gamma) = leibniz_translate(&rewrite);

    // Which names have equations (and so are proof declarations).
    let defined: Vec<&Name> = prog
        .decls
        .iter()
        .filter_map(|d| match d {
            Decl::Equation { name, .. } => Some(name),
            _ => None,
        })
        .collect();

    let kind_of = |name: &str, ty: &Type| -> Result<(), ElaborateError> {
        // Free type variables of a declaration stand for arbitrary terms.
        let mut d = delta.clone();
        for v in free_type_vars(ty) {
            if d.lookup(&v).is_none() {
                d.insert(v, Kind::Star);
            }
        }
        kind_check(&d, ty).map(|_| ()).map_err(|e| ElaborateError::Kind {
            name: name.to_string(),
            message: e.to_string(),
        })
    };

    let mut axioms: Vec<(Name, Type)> = Vec::new();
    let mut lemmas: Vec<ElaboratedLemma> = Vec::new();
    let mut seen: BTreeSet<Name> = BTreeSet::new();

    for d in &prog.decls {
        match d {
            Decl::Rule { .. } | Decl::Command(_) => {}
            Decl::Sig { name, ty } => {
                kind_of(name, ty)?;
                if opts.mode == Mode::Rsm {
                    let vars = existential_vars(ty);
                    if !vars.is_empty() {
                        return Err(ElaborateError::Existential {
                            name: name.clone(),
                            vars,
                        });
                    }
                }
                if !defined.iter().any(|n| *n == name) {
                    // An axiom.
                    let ty = normalize_type(ty);
                    axioms.push((name.clone(), ty.clone()));
                    gamma.insert(name.clone(), ty);
                }
            }
            Decl::Equation { name, params, body } => {
                if !seen.insert(name.clone()) {
                    return Err(ElaborateError::DuplicateDefinition { name: name.clone() });
                }
                let ty = prog
                    .decls
                    .iter()
                    .find_map(|d| match d {
                        Decl::Sig { name: n, ty } if n == name => Some(ty.clone()),
                        _ => None,
                    })
                    .ok_or_else(|| ElaborateError::MissingSignature { name: name.clone() })?;
                let ty = normalize_type(&ty);
                let mut curry = params
                    .iter()
                    .rev()
                    .fold(body.clone(), |e, p| Evidence::elam(p.clone(), None, e));
                if free_evidence_vars(&curry).contains(name) {
                    curry = Evidence::mu(name.clone(), curry);
                }
                let resolved = resolve(&gamma, &curry, &ty, NameSupply::new(), opts).map_err(
                    |error| ElaborateError::Resolve {
                        name: name.clone(),
                        error,
                    },
                )?;
                gamma.insert(name.clone(), ty.clone());
                lemmas.push(ElaboratedLemma {
                    name: name.clone(),
                    ty,
                    evidence: resolved.evidence,
                    curry,
                    pre_annotated: false,
                });
            }
            Decl::Lemma { name, ty, body } => {
                if !seen.insert(name.clone()) {
                    return Err(ElaborateError::DuplicateDefinition { name: name.clone() });
                }
                kind_of(name, ty)?;
                let ty = normalize_type(ty);
                // The display convention strips the top-level fixed-point
                // binder; re-add it when the body refers to itself.
                let mut body = body.clone();
                if free_evidence_vars(&body).contains(name) {
                    body = Evidence::mu(name.clone(), body);
                }
                gamma.insert(name.clone(), ty.clone());
                lemmas.push(ElaboratedLemma {
                    name: name.clone(),
                    ty,
                    evidence: body.clone(),
                    curry: erase(&body),
                    pre_annotated: true,
                });
            }
        }
    }

    Ok(Elaboration {
        delta,
        rewrite,
        gamma,
        axioms,
        lemmas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::proof_check;
    use crate::kernel::alpha_eq;
    use crate::surface::parse_program;

    fn elaborate(src: &str) -> Elaboration {
        let prog = parse_program(src).unwrap();
        elaborate_program(&prog, &ResolveOptions::default()).unwrap()
    }

    /// Proof-checks every lemma of an elaboration (free declaration-level
    /// type variables count as term variables).
    fn check_lemmas(el: &Elaboration) {
        let mut gamma = TypeEnv::new();
        for (n, t) in el.gamma.iter() {
            if el.lemmas.iter().any(|l| &l.name == n) {
                continue;
            }
            gamma.insert(n.clone(), t.clone());
        }
        for l in &el.lemmas {
            let mut delta = el.delta.clone();
            for v in free_type_vars(&l.ty) {
                delta.insert(v, Kind::Star);
            }
            proof_check(&delta, &gamma, &l.evidence, &l.ty)
                .unwrap_or_else(|e| panic!("lemma {} does not check: {}", l.name, e));
            gamma.insert(l.name.clone(), l.ty.clone());
        }
    }

    #[test]
    fn scope_condition() {
        let l = |ns: &[&str]| -> Vec<Name> { ns.iter().map(|s| s.to_string()).collect() };
        let sub = |x: &str, t: &str| {
            Substitution::singleton(x, crate::surface::parse_type(t).unwrap())
        };
        // A variable may depend on variables introduced before it...
        assert!(scope_ok(&l(&["b1", "a2"]), &sub("a2", "\\ y . b1 y")));
        // ...but not after it,
        assert!(!scope_ok(&l(&["a2", "b1"]), &sub("a2", "\\ y . b1 y")));
        // nor on variables missing from the list entirely,
        assert!(!scope_ok(&l(&["a2"]), &sub("a2", "\\ y . c y")));
        // and a variable outside the list may not capture one inside it.
        assert!(!scope_ok(&l(&["a2"]), &sub("b1", "\\ y . a2 y")));
        assert!(scope_ok(&l(&["a2"]), &sub("b1", "\\ y . F y")));
        // Constants never matter.
        assert!(scope_ok(&l(&["a2"]), &sub("a2", "F Z")));
    }

    #[test]
    fn one_rule_corecursive_lemma() {
        // F x -> G (F (G x)) certified by h = K h at forall p x . p (F x).
        let el = elaborate(
            "K : F x <= G (F (G x))\n\
             \n\
             h : forall p x . p (F x)\n\
             h = K h\n",
        );
        assert_eq!(el.lemmas.len(), 1);
        assert_eq!(
            print_evidence(&el.lemmas[0].evidence),
            "mu h . \\ p0' x1' . K (\\ m1' . p0' m1') x1' (h (\\ m1' . p0' (G m1')) (G x1'))"
        );
        check_lemmas(&el);
    }

    #[test]
    fn two_rule_system_with_quantified_context() {
        // D (S x) y -> D x (S y), D Z y -> D (S y) Z as explicit axioms;
        // the corecursive g threads a growing context through itself.
        let el = elaborate(
            r"A : forall p x y . p (D x (S y)) => p (D (S x) y)
B : forall p y . p (D (S y) Z) => p (D Z y)

g : forall d .
     (forall p x y . p (d x (S y)) => p (d (S x) y)) =>
     (forall p y . p (d (S y) Z) => p (d Z y)) =>
     d Z Z

g a1 a2 = a2 (a1 (g (\ v . a1 v) (\ v . a2 (a1 v))))

e : D Z Z
e = g (\ v . A v) (\ v . B v)
",
        );
        assert_eq!(el.lemmas.len(), 2);
        let g = &el.lemmas[0];
        assert_eq!(
            print_evidence(&g.evidence),
            "mu g . \\ d0' \
             (a1 : forall p x y . p (d0' x (S y)) => p (d0' (S x) y)) \
             (a2 : forall p y . p (d0' (S y) Z) => p (d0' Z y)) . \
             a2 (\\ x1' . x1') Z \
             (a1 (\\ x1' . x1') Z Z \
             (g (\\ m1' m2' . d0' m1' (S m2')) \
             (\\ p7' x8' y9' (v : p7' (d0' x8' (S (S y9')))) . \
             a1 (\\ m1' . p7' m1') x8' (S y9') v) \
             (\\ p13' y14' (v : p13' (d0' (S y14') (S Z))) . \
             a2 (\\ m1' . p13' m1') (S y14') \
             (a1 (\\ m1' . p13' m1') (S y14') Z v))))"
        );
        let e = &el.lemmas[1];
        assert_eq!(
            print_evidence(&e.evidence),
            "g (\\ m1' m2' . D m1' m2') \
             (\\ p1' x2' y3' (v : p1' (D x2' (S y3'))) . \
             A (\\ m1' . p1' m1') x2' y3' v) \
             (\\ p7' y8' (v : p7' (D (S y8') Z)) . B (\\ m1' . p7' m1') y8' v)"
        );
        check_lemmas(&el);
    }

    #[test]
    fn existential_variable_instantiated_across_goals() {
        // The two-letter string system A x -> A (B x), B x -> A x; g's b is
        // existential (absent from the conclusion a x) and is determined
        // while resolving the first premise of the corecursive call.
        let el = elaborate(
            r"Ka : A x <= A (B x)
Kb : B x <= A x

g : forall a b x .
      (forall p y . p (a (b y)) => p (a y)) =>
      (forall p y . p (a y) => p (b y)) => a x

g a b = a (g (\ v . a (b v)) (\ v . a v))

h : A x
h = g (\ v . Ka v) Kb
",
        );
        assert_eq!(el.lemmas.len(), 2);
        let g = &el.lemmas[0];
        assert_eq!(
            print_evidence(&g.evidence),
            "mu g . \\ a0' b1' x2' \
             (a : forall p y . p (a0' (b1' y)) => p (a0' y)) \
             (b : forall p y . p (a0' y) => p (b1' y)) . \
             a (\\ x1' . x1') x2' \
             (g (\\ m1' . a0' (b1' m1')) (\\ m1' . a0' m1') x2' \
             (\\ p8' y9' (v : p8' (a0' (b1' (a0' y9')))) . \
             a (\\ m1' . p8' m1') (b1' y9') \
             (b (\\ m1' . p8' (a0' (b1' m1'))) y9' v)) \
             (\\ p14' y15' (v : p14' (a0' (b1' y15'))) . \
             a (\\ m1' . p14' m1') y15' v))"
        );
        // The hypothesis Kb is passed along unapplied: its type matches the
        // goal once the existential is instantiated.
        let h = &el.lemmas[1];
        assert_eq!(
            print_evidence(&h.evidence),
            "g (\\ m1' . A m1') (\\ m1' . B m1') x \
             (\\ p3' y4' (v : p3' (A (B y4'))) . Ka (\\ m1' . p3' m1') y4' v) \
             Kb"
        );
        check_lemmas(&el);
    }

    #[test]
    fn scope_violation_is_reported_with_the_offending_substitution() {
        // The context variable qa would have to capture the later
        // eigenvariables x2', y3' — exactly the unsound instantiation the
        // scope check exists to reject.
        let prog = parse_program(
            "K : F Z (S x) y <= G (F Z x (S y)) (F x y (S (S Z)))\n\
             \n\
             K2 : forall qa . (forall p x y . p (qa (F Z x (S y))) => p (F Z (S x) y)) => B\n\
             \n\
             h : B\n\
             h = K2 (\\ c . K c)\n",
        )
        .unwrap();
        let err = elaborate_program(&prog, &ResolveOptions::default()).unwrap_err();
        let ElaborateError::Resolve {
            error: ResolveError::Scope(diag),
            ..
        } = err
        else {
            panic!("expected a scope error, got {:?}", err);
        };
        assert_eq!(diag.variables, vec!["qa0'", "p1'", "x2'", "y3'"]);
        let binding = diag.substitution.get("qa0'").expect("qa0' bound");
        assert!(alpha_eq(
            binding,
            &crate::surface::parse_type("\\ m . G m (F x2' y3' (S (S Z)))").unwrap()
        ));
        assert_eq!(
            diag.mixed_term,
            "K2 qa0' (\\ p1' x2' y3' (c : [p1'] (qa0' (F Z [x2'] (S [y3'])))) . \
             K (\\ m1' . [p1'] m1') [x2'] [y3'] \
             ([p1'] (G (F Z [x2'] (S [y3'])) (F [x2'] [y3'] (S (S Z))))))"
        );
    }

    #[test]
    fn plain_mode_rejects_existential_declarations() {
        let prog = parse_program(
            r"Ka : A x <= A (B x)
Kb : B x <= A x

g : forall a b x .
      (forall p y . p (a (b y)) => p (a y)) =>
      (forall p y . p (a y) => p (b y)) => a x

g a b = a (g (\ v . a (b v)) (\ v . a v))
",
        )
        .unwrap();
        let opts = ResolveOptions {
            mode: Mode::Rsm,
            ..ResolveOptions::default()
        };
        let err = elaborate_program(&prog, &opts).unwrap_err();
        match err {
            ElaborateError::Existential { name, vars } => {
                assert_eq!(name, "g");
                assert_eq!(vars, vec!["b".to_string()]);
            }
            e => panic!("expected an existential rejection, got {:?}", e),
        }
    }

    #[test]
    fn concrete_type_fails_without_existential_abstraction() {
        // The same corecursive script with the concrete symbols left in the
        // declared type: resolution cannot tie the growing context back to
        // itself and reports the failed match.
        let prog = parse_program(
            r"Ka : A x <= A (B x)
Kb : B x <= A x

g : forall x .
      (forall p y . p (A (B y)) => p (A y)) =>
      (forall p y . p (A y) => p (B y)) => A x

g a b = a (g (\ v . a (b v)) (\ v . a v))
",
        )
        .unwrap();
        let opts = ResolveOptions {
            mode: Mode::Rsm,
            ..ResolveOptions::default()
        };
        let err = elaborate_program(&prog, &opts).unwrap_err();
        match err {
            ElaborateError::Resolve {
                name,
                error: ResolveError::NoMatcher { .. },
            } => assert_eq!(name, "g"),
            e => panic!("expected a failed match, got {:?}", e),
        }
    }

    #[test]
    fn existential_vars_of_a_declaration() {
        let t = |s: &str| crate::surface::parse_type(s).unwrap();
        assert!(existential_vars(&t("forall p x . p (F x)")).is_empty());
        assert_eq!(
            existential_vars(&t(
                "forall a b x . (forall p y . p (a (b y)) => p (a y)) => a x"
            )),
            vec!["b".to_string()]
        );
        // A free premise variable is existential too.
        assert_eq!(
            existential_vars(&t("forall p . p (F c) => p (F Z)")),
            vec!["c".to_string()]
        );
    }

    #[test]
    fn equations_without_signatures_are_rejected() {
        let prog = parse_program("h = K h\n").unwrap();
        match elaborate_program(&prog, &ResolveOptions::default()).unwrap_err() {
            ElaborateError::MissingSignature { name } => assert_eq!(name, "h"),
            e => panic!("expected a missing signature error, got {:?}", e),
        }
    }
}
