//! Dynamics: the first-order rewriting oracle (single steps, reduction
//! trees, innermost traces) and the evidence side (head reduction, traces,
//! actions, faithful unfolding, bounded productivity).
//!
//! The rewriting oracle is deliberately independent of the type system: it
//! implements plain first-order matching and replacement, and `step_unfold`
//! replays every evidence-derived step against it. Agreement of the two is
//! the executable form of the faithfulness theorem.

use crate::kernel::{
    alpha_eq_evidence, normalize_type, subst_evidence, subst_type_in_evidence, Evidence, Name,
    Substitution, Type,
};
use std::collections::BTreeMap;
use std::fmt;

/// A first-order term: a variable or a fully applied function symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FirstOrderTerm {
    Var(Name),
    App(Name, Vec<FirstOrderTerm>),
}

impl FirstOrderTerm {
    /// Reads a flat type back as a first-order term.
    pub fn from_type(t: &Type) -> Result<FirstOrderTerm, String> {
        match t {
            Type::Var(x) => Ok(FirstOrderTerm::Var(x.clone())),
            _ => {
                let (head, args) = t.spine();
                let Type::Const(c) = head else {
                    return Err(format!("not a first-order term: {:?}", t));
                };
                let args = args
                    .into_iter()
                    .map(FirstOrderTerm::from_type)
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(FirstOrderTerm::App(c.clone(), args))
            }
        }
    }

    pub fn to_type(&self) -> Type {
        match self {
            FirstOrderTerm::Var(x) => Type::var(x.clone()),
            FirstOrderTerm::App(c, args) => Type::from_spine(
                Type::cnst(c.clone()),
                args.iter().map(|a| a.to_type()).collect(),
            ),
        }
    }

    fn is_atom(&self) -> bool {
        match self {
            FirstOrderTerm::Var(_) => true,
            FirstOrderTerm::App(_, args) => args.is_empty(),
        }
    }
}

impl fmt::Display for FirstOrderTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FirstOrderTerm::Var(x) => write!(f, "{}", x),
            FirstOrderTerm::App(c, args) => {
                write!(f, "{}", c)?;
                for a in args {
                    if a.is_atom() {
                        write!(f, " {}", a)?;
                    } else {
                        write!(f, " ({})", a)?;
                    }
                }
                Ok(())
            }
        }
    }
}

/// A term context: a first-order term with holes, filled left-to-right.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TermContext {
    Hole,
    Var(Name),
    App(Name, Vec<TermContext>),
}

impl TermContext {
    /// Reads `\y. C[y]` (a second-order type in normal form) as a context;
    /// every occurrence of the bound variable becomes a hole. A bare
    /// projection `\y. y` is the empty context.
    pub fn from_context_type(t: &Type) -> Result<TermContext, String> {
        let Type::Lam(x, body) = t else {
            return Err(format!("not a one-argument context: {:?}", t));
        };
        fn go(t: &Type, x: &str) -> Result<TermContext, String> {
            match t {
                Type::Var(v) if v == x => Ok(TermContext::Hole),
                Type::Var(v) => Ok(TermContext::Var(v.clone())),
                _ => {
                    let (head, args) = t.spine();
                    let Type::Const(c) = head else {
                        return Err(format!("context body is not flat: {:?}", t));
                    };
                    let args = args
                        .into_iter()
                        .map(|a| go(a, x))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(TermContext::App(c.clone(), args))
                }
            }
        }
        go(body, x)
    }

    pub fn hole_count(&self) -> usize {
        match self {
            TermContext::Hole => 1,
            TermContext::Var(_) => 0,
            TermContext::App(_, args) => args.iter().map(|a| a.hole_count()).sum(),
        }
    }

    /// Fills every hole with the same term.
    pub fn fill(&self, t: &FirstOrderTerm) -> FirstOrderTerm {
        match self {
            TermContext::Hole => t.clone(),
            TermContext::Var(x) => FirstOrderTerm::Var(x.clone()),
            TermContext::App(c, args) => {
                FirstOrderTerm::App(c.clone(), args.iter().map(|a| a.fill(t)).collect())
            }
        }
    }

    /// The context as a type `\binder. C[binder]`.
    pub fn to_context_type(&self, binder: &str) -> Type {
        fn go(c: &TermContext, binder: &str) -> Type {
            match c {
                TermContext::Hole => Type::var(binder),
                TermContext::Var(x) => Type::var(x.clone()),
                TermContext::App(f, args) => Type::from_spine(
                    Type::cnst(f.clone()),
                    args.iter().map(|a| go(a, binder)).collect(),
                ),
            }
        }
        Type::lam(binder, go(self, binder))
    }

    /// Positions of the holes, left to right.
    pub fn hole_positions(&self) -> Vec<Position> {
        fn go(c: &TermContext, here: &mut Vec<usize>, out: &mut Vec<Position>) {
            match c {
                TermContext::Hole => out.push(here.clone()),
                TermContext::Var(_) => {}
                TermContext::App(_, args) => {
                    for (i, a) in args.iter().enumerate() {
                        here.push(i);
                        go(a, here, out);
                        here.pop();
                    }
                }
            }
        }
        let mut out = Vec::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }
}

/// A rewrite rule `lhs -> rhs` with the lhs variables in first-occurrence
/// order (the order the Leibniz axiom quantifies them in).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleDecl {
    pub name: Name,
    pub lhs: FirstOrderTerm,
    pub rhs: FirstOrderTerm,
    pub vars: Vec<Name>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RewriteSystemError {
    #[error("rule {0}: left-hand side is a variable")]
    VariableLhs(Name),
    #[error("rule {0}: right-hand side variable {1} does not occur on the left")]
    ExtraRhsVar(Name, Name),
    #[error("symbol {0} used at arities {1} and {2}")]
    ArityConflict(Name, usize, usize),
}

fn fo_vars(t: &FirstOrderTerm, acc: &mut Vec<Name>) {
    match t {
        FirstOrderTerm::Var(x) => {
            if !acc.iter().any(|a| a == x) {
                acc.push(x.clone());
            }
        }
        FirstOrderTerm::App(_, args) => {
            for a in args {
                fo_vars(a, acc);
            }
        }
    }
}

fn fo_arities(
    t: &FirstOrderTerm,
    acc: &mut BTreeMap<Name, usize>,
) -> Result<(), RewriteSystemError> {
    if let FirstOrderTerm::App(c, args) = t {
        if let Some(&old) = acc.get(c) {
            if old != args.len() {
                return Err(RewriteSystemError::ArityConflict(c.clone(), old, args.len()));
            }
        } else {
            acc.insert(c.clone(), args.len());
        }
        for a in args {
            fo_arities(a, acc)?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RewriteSystem {
    pub rules: Vec<RuleDecl>,
    pub arities: BTreeMap<Name, usize>,
}

impl RewriteSystem {
    pub fn new(
        rules: Vec<(Name, FirstOrderTerm, FirstOrderTerm)>,
    ) -> Result<RewriteSystem, RewriteSystemError> {
        let mut arities = BTreeMap::new();
        let mut out = Vec::new();
        for (name, lhs, rhs) in rules {
            if matches!(lhs, FirstOrderTerm::Var(_)) {
                return Err(RewriteSystemError::VariableLhs(name));
            }
            let mut lvars = Vec::new();
            fo_vars(&lhs, &mut lvars);
            let mut rvars = Vec::new();
            fo_vars(&rhs, &mut rvars);
            if let Some(extra) = rvars.iter().find(|v| !lvars.contains(v)) {
                return Err(RewriteSystemError::ExtraRhsVar(name, extra.clone()));
            }
            fo_arities(&lhs, &mut arities)?;
            fo_arities(&rhs, &mut arities)?;
            out.push(RuleDecl {
                name,
                lhs,
                rhs,
                vars: lvars,
            });
        }
        Ok(RewriteSystem {
            rules: out,
            arities,
        })
    }

    pub fn rule(&self, name: &str) -> Option<&RuleDecl> {
        self.rules.iter().find(|r| r.name == name)
    }
}

/// A position in a term: the path of argument indices from the root.
pub type Position = Vec<usize>;

fn format_position(p: &Position) -> String {
    let inner: Vec<String> = p.iter().map(|i| i.to_string()).collect();
    format!("[{}]", inner.join(","))
}

/// Syntactic first-order matching of `pattern` against `target`.
pub fn match_first_order(
    pattern: &FirstOrderTerm,
    target: &FirstOrderTerm,
) -> Option<BTreeMap<Name, FirstOrderTerm>> {
    fn go(
        p: &FirstOrderTerm,
        t: &FirstOrderTerm,
        acc: &mut BTreeMap<Name, FirstOrderTerm>,
    ) -> bool {
        match p {
            FirstOrderTerm::Var(x) => match acc.get(x) {
                Some(prev) => prev == t,
                None => {
                    acc.insert(x.clone(), t.clone());
                    true
                }
            },
            FirstOrderTerm::App(c, args) => match t {
                FirstOrderTerm::App(d, targs) if c == d && args.len() == targs.len() => {
                    args.iter().zip(targs).all(|(a, b)| go(a, b, acc))
                }
                _ => false,
            },
        }
    }
    let mut acc = BTreeMap::new();
    go(pattern, target, &mut acc).then_some(acc)
}

pub fn apply_fo_subst(s: &BTreeMap<Name, FirstOrderTerm>, t: &FirstOrderTerm) -> FirstOrderTerm {
    match t {
        FirstOrderTerm::Var(x) => s.get(x).cloned().unwrap_or_else(|| t.clone()),
        FirstOrderTerm::App(c, args) => FirstOrderTerm::App(
            c.clone(),
            args.iter().map(|a| apply_fo_subst(s, a)).collect(),
        ),
    }
}

fn subterm_at<'a>(t: &'a FirstOrderTerm, pos: &[usize]) -> Option<&'a FirstOrderTerm> {
    match pos.split_first() {
        None => Some(t),
        Some((&i, rest)) => match t {
            FirstOrderTerm::App(_, args) => subterm_at(args.get(i)?, rest),
            FirstOrderTerm::Var(_) => None,
        },
    }
}

fn replace_at(t: &FirstOrderTerm, pos: &[usize], new: &FirstOrderTerm) -> FirstOrderTerm {
    match pos.split_first() {
        None => new.clone(),
        Some((&i, rest)) => match t {
            FirstOrderTerm::App(c, args) => {
                let mut args = args.clone();
                args[i] = replace_at(&args[i], rest, new);
                FirstOrderTerm::App(c.clone(), args)
            }
            FirstOrderTerm::Var(_) => t.clone(),
        },
    }
}

/// All single steps from `t`: `(redex position, rule name, result)`,
/// positions in pre-order (leftmost-outermost first), rules in declaration
/// order at each position.
pub fn trs_one_step(r: &RewriteSystem, t: &FirstOrderTerm) -> Vec<(Position, Name, FirstOrderTerm)> {
    let mut out = Vec::new();
    fn positions(t: &FirstOrderTerm, here: &mut Vec<usize>, out: &mut Vec<Position>) {
        out.push(here.clone());
        if let FirstOrderTerm::App(_, args) = t {
            for (i, a) in args.iter().enumerate() {
                here.push(i);
                positions(a, here, out);
                here.pop();
            }
        }
    }
    let mut poss = Vec::new();
    positions(t, &mut Vec::new(), &mut poss);
    for pos in poss {
        let sub = subterm_at(t, &pos).unwrap();
        for rule in &r.rules {
            if let Some(s) = match_first_order(&rule.lhs, sub) {
                let contractum = apply_fo_subst(&s, &rule.rhs);
                out.push((pos.clone(), rule.name.clone(), replace_at(t, &pos, &contractum)));
            }
        }
    }
    out
}

/// `n` leftmost-innermost steps; returns the intermediate `(rule, term)`
/// pairs (may be shorter if a normal form is reached).
pub fn trs_innermost_steps(
    r: &RewriteSystem,
    t: &FirstOrderTerm,
    n: usize,
) -> Vec<(Name, FirstOrderTerm)> {
    fn innermost_redex(
        r: &RewriteSystem,
        t: &FirstOrderTerm,
        here: &mut Vec<usize>,
    ) -> Option<(Position, Name, FirstOrderTerm)> {
        if let FirstOrderTerm::App(_, args) = t {
            for (i, a) in args.iter().enumerate() {
                here.push(i);
                let found = innermost_redex(r, a, here);
                here.pop();
                if let Some((pos, rule, contractum)) = found {
                    return Some((pos, rule, contractum));
                }
            }
        }
        for rule in &r.rules {
            if let Some(s) = match_first_order(&rule.lhs, t) {
                return Some((here.clone(), rule.name.clone(), apply_fo_subst(&s, &rule.rhs)));
            }
        }
        None
    }
    let mut cur = t.clone();
    let mut out = Vec::new();
    for _ in 0..n {
        match innermost_redex(r, &cur, &mut Vec::new()) {
            Some((pos, rule, contractum)) => {
                cur = replace_at(&cur, &pos, &contractum);
                out.push((rule, cur.clone()));
            }
            None => break,
        }
    }
    out
}

/// A node of the reduction tree: the redex position in the parent, the rule
/// applied (`_` at the root), and the resulting term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub position: Position,
    pub rule: Name,
    pub term: FirstOrderTerm,
    pub children: Vec<TreeNode>,
}

/// The full reduction tree of `t` to the given depth. Children are ordered
/// by redex position; at a shared position, rules appear in reverse
/// declaration order (matching the prototype's printed trees).
pub fn reduction_tree(r: &RewriteSystem, t: &FirstOrderTerm, depth: usize) -> TreeNode {
    fn expand(r: &RewriteSystem, t: &FirstOrderTerm, remaining: usize) -> Vec<TreeNode> {
        if remaining == 0 {
            return Vec::new();
        }
        let mut steps = trs_one_step(r, t);
        // Stable-sort by position only, reversing declaration order within
        // each position group.
        let mut grouped: Vec<(Position, Vec<(Name, FirstOrderTerm)>)> = Vec::new();
        for (pos, rule, res) in steps.drain(..) {
            match grouped.last_mut() {
                Some((p, items)) if *p == pos => items.push((rule, res)),
                _ => grouped.push((pos, vec![(rule, res)])),
            }
        }
        let mut out = Vec::new();
        for (pos, mut items) in grouped {
            items.reverse();
            for (rule, res) in items {
                let children = expand(r, &res, remaining - 1);
                out.push(TreeNode {
                    position: pos.clone(),
                    rule,
                    term: res,
                    children,
                });
            }
        }
        out
    }
    TreeNode {
        position: Vec::new(),
        rule: "_".into(),
        term: t.clone(),
        children: expand(r, t, depth),
    }
}

/// Renders a reduction tree in the prototype's ASCII format.
pub fn render_tree(root: &TreeNode) -> String {
    fn node_text(n: &TreeNode) -> String {
        format!("{}, {}, {}", format_position(&n.position), n.rule, n.term)
    }
    fn children(out: &mut String, n: &TreeNode, prefix: &str) {
        for (i, c) in n.children.iter().enumerate() {
            let last = i + 1 == n.children.len();
            out.push_str(prefix);
            out.push_str("|\n");
            out.push_str(prefix);
            out.push_str(if last { "`- " } else { "+- " });
            out.push_str(&node_text(c));
            out.push('\n');
            let next = format!("{}{}", prefix, if last { "   " } else { "|  " });
            children(out, c, &next);
        }
    }
    let mut out = format!(" {}\n", node_text(root));
    children(&mut out, root, "");
    out
}

// ---------------------------------------------------------------------------
// Evidence head reduction

/// One head-reduction step (mu-unfolding, beta, or type-beta inside a head
/// context `H ::= hole | H e | H T | \a.H | \x.H`).
pub fn head_step(e: &Evidence) -> Option<Evidence> {
    match e {
        Evidence::Mu(a, body) => Some(subst_evidence(body, a, e)),
        Evidence::EApp(f, arg) => match f.as_ref() {
            Evidence::ELam(x, _, body) => Some(subst_evidence(body, x, arg)),
            // A type argument applied Curry-style to a type abstraction.
            Evidence::TyLam(x, body) => crate::kernel::evidence_to_type(arg).map(|t| {
                subst_type_in_evidence(body, &Substitution::singleton(x.clone(), t))
            }),
            _ => head_step(f).map(|f2| Evidence::app(f2, arg.as_ref().clone())),
        },
        Evidence::TyApp(f, t) => match f.as_ref() {
            Evidence::TyLam(x, body) => Some(subst_type_in_evidence(
                body,
                &Substitution::singleton(x.clone(), t.clone()),
            )),
            _ => head_step(f).map(|f2| Evidence::ty_app(f2, t.clone())),
        },
        Evidence::ELam(x, ann, body) => {
            head_step(body).map(|b| Evidence::elam(x.clone(), ann.clone(), b))
        }
        Evidence::TyLam(x, body) => head_step(body).map(|b| Evidence::ty_lam(x.clone(), b)),
        Evidence::EVar(_) | Evidence::EConst(_) => None,
    }
}

/// The outcome of bounded head reduction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HeadResult {
    /// `kappa T1 ... Tn e1 ... em` — a constant head with its normalized
    /// type arguments and remaining evidence arguments.
    HeadNormal {
        rule: Name,
        type_args: Vec<Type>,
        rest: Vec<Evidence>,
    },
    /// Unreducible but not of the constant-headed shape.
    StuckNormal(Evidence),
    Exhausted(Evidence),
}

/// Head-reduces until the term is `kappa T̄ ē`, is otherwise normal, or the
/// fuel runs out.
pub fn head_reduce(e: &Evidence, fuel: usize) -> HeadResult {
    let mut cur = e.clone();
    for _ in 0..=fuel {
        if let Some(hn) = constant_head_form(&cur) {
            return hn;
        }
        match head_step(&cur) {
            Some(next) => cur = next,
            None => return HeadResult::StuckNormal(cur),
        }
    }
    HeadResult::Exhausted(cur)
}

/// Recognizes `kappa T1 .. Tn e1 .. em` (type arguments first).
fn constant_head_form(e: &Evidence) -> Option<HeadResult> {
    enum Arg<'a> {
        T(&'a Type),
        E(&'a Evidence),
    }
    let mut args = Vec::new();
    let mut cur = e;
    loop {
        match cur {
            Evidence::EApp(f, a) => {
                args.push(Arg::E(a));
                cur = f;
            }
            Evidence::TyApp(f, t) => {
                args.push(Arg::T(t));
                cur = f;
            }
            Evidence::EConst(c) => {
                args.reverse();
                let mut type_args = Vec::new();
                let mut rest = Vec::new();
                for a in args {
                    match a {
                        Arg::T(t) => {
                            if !rest.is_empty() {
                                return None;
                            }
                            type_args.push(normalize_type(t));
                        }
                        Arg::E(ev) => rest.push(ev.clone()),
                    }
                }
                return Some(HeadResult::HeadNormal {
                    rule: c.clone(),
                    type_args,
                    rest,
                });
            }
            _ => return None,
        }
    }
}

/// One element of an evidence trace: the rule, the context from the first
/// type argument, and the instantiation of the rule's lhs variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceElement {
    pub rule: Name,
    pub context: TermContext,
    pub instantiation: Vec<FirstOrderTerm>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceEnd {
    /// Requested length reached; the trace continues past it.
    Truncated,
    /// The evidence is finite: head reduction reached a non-rule form.
    Finite,
    /// Head reduction ran out of fuel — the trace is undefined from here.
    Undefined,
}

/// Reads up to `length` trace elements off `e`, recursing into the final
/// evidence argument after each rule application.
pub fn evidence_trace(
    r: &RewriteSystem,
    e: &Evidence,
    length: usize,
    fuel_per_step: usize,
) -> (Vec<TraceElement>, TraceEnd) {
    let mut out = Vec::new();
    let mut cur = e.clone();
    for _ in 0..length {
        match next_trace_element(r, &cur, fuel_per_step) {
            Ok(Some((elem, next))) => {
                out.push(elem);
                cur = next;
            }
            Ok(None) => return (out, TraceEnd::Finite),
            Err(()) => return (out, TraceEnd::Undefined),
        }
    }
    (out, TraceEnd::Truncated)
}

/// Head-reduces once to `kappa C t̄ e'`; `Ok(None)` when the evidence ends.
fn next_trace_element(
    r: &RewriteSystem,
    e: &Evidence,
    fuel: usize,
) -> Result<Option<(TraceElement, Evidence)>, ()> {
    match head_reduce(e, fuel) {
        HeadResult::HeadNormal {
            rule,
            type_args,
            rest,
        } => {
            let Some(decl) = r.rule(&rule) else {
                return Ok(None);
            };
            // kappa : forall p x1..xn . p r => p l applied to the context,
            // the n variable instances, and the premise evidence.
            if type_args.len() != decl.vars.len() + 1 || rest.len() != 1 {
                return Ok(None);
            }
            let context = TermContext::from_context_type(&type_args[0]).map_err(|_| ())?;
            let instantiation = type_args[1..]
                .iter()
                .map(FirstOrderTerm::from_type)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| ())?;
            Ok(Some((
                TraceElement {
                    rule,
                    context,
                    instantiation,
                },
                rest[0].clone(),
            )))
        }
        HeadResult::StuckNormal(_) => Ok(None),
        HeadResult::Exhausted(_) => Err(()),
    }
}

/// The action of a trace element on a term: checks `t = C[σl, ..., σl]` and
/// yields `C[σr, ..., σr]`; `None` when the shapes disagree.
pub fn act(elem: &TraceElement, r: &RewriteSystem, t: &FirstOrderTerm) -> Option<FirstOrderTerm> {
    let rule = r.rule(&elem.rule)?;
    if elem.instantiation.len() != rule.vars.len() {
        return None;
    }
    let sigma: BTreeMap<Name, FirstOrderTerm> = rule
        .vars
        .iter()
        .cloned()
        .zip(elem.instantiation.iter().cloned())
        .collect();
    let redex = apply_fo_subst(&sigma, &rule.lhs);
    if elem.context.fill(&redex) != *t {
        return None;
    }
    Some(elem.context.fill(&apply_fo_subst(&sigma, &rule.rhs)))
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unfolding failed at step {step}: {reason}")]
pub struct UnfoldError {
    pub step: usize,
    pub reason: String,
}

/// Replays one trace element through the rewriting oracle only: each hole
/// position must be a genuine redex of the element's rule, contracted
/// left-to-right.
fn oracle_replay(
    r: &RewriteSystem,
    t: &FirstOrderTerm,
    elem: &TraceElement,
) -> Result<FirstOrderTerm, String> {
    let rule = r
        .rule(&elem.rule)
        .ok_or_else(|| format!("unknown rule {}", elem.rule))?;
    let mut cur = t.clone();
    for pos in elem.context.hole_positions() {
        let sub = subterm_at(&cur, &pos).ok_or("hole position outside term")?;
        let s = match_first_order(&rule.lhs, sub)
            .ok_or_else(|| format!("no {}-redex at {}", elem.rule, format_position(&pos)))?;
        cur = replace_at(&cur, &pos, &apply_fo_subst(&s, &rule.rhs));
    }
    Ok(cur)
}

/// Applies the first `n` trace elements of `e` to `t0`, cross-checking
/// every step against the rewriting oracle.
pub fn step_unfold(
    r: &RewriteSystem,
    e: &Evidence,
    t0: &FirstOrderTerm,
    n: usize,
    fuel_per_step: usize,
) -> Result<FirstOrderTerm, UnfoldError> {
    let mut cur_e = e.clone();
    let mut cur_t = t0.clone();
    for step in 1..=n {
        let (elem, next) = match next_trace_element(r, &cur_e, fuel_per_step) {
            Ok(Some(x)) => x,
            Ok(None) => {
                return Err(UnfoldError {
                    step,
                    reason: "evidence trace ended early".into(),
                })
            }
            Err(()) => {
                return Err(UnfoldError {
                    step,
                    reason: "head reduction fuel exhausted".into(),
                })
            }
        };
        let acted = act(&elem, r, &cur_t).ok_or_else(|| UnfoldError {
            step,
            reason: format!("action of rule {} undefined on {}", elem.rule, cur_t),
        })?;
        let oracled = oracle_replay(r, &cur_t, &elem).map_err(|reason| UnfoldError {
            step,
            reason,
        })?;
        if acted != oracled {
            return Err(UnfoldError {
                step,
                reason: format!("action {} disagrees with rewriting oracle {}", acted, oracled),
            });
        }
        cur_t = acted;
        cur_e = next;
    }
    Ok(cur_t)
}

// ---------------------------------------------------------------------------
// Bounded productivity

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Productivity {
    ProductiveTo(usize),
    /// A head-reduction state repeated (up to alpha); the witness is the
    /// recurring evidence.
    NotProductive(Evidence),
    Unknown,
}

/// Head-normalizes under beta/mu only (for erased, Curry-style evidence),
/// detecting cycles of alpha-equivalent states.
fn head_normalize_bm(e: &Evidence, fuel: usize) -> Result<Evidence, Productivity> {
    let mut seen: Vec<Evidence> = vec![e.clone()];
    let mut cur = e.clone();
    for _ in 0..fuel {
        match head_step(&cur) {
            None => return Ok(cur),
            Some(next) => {
                if seen.iter().any(|s| alpha_eq_evidence(s, &next)) {
                    return Err(Productivity::NotProductive(next));
                }
                seen.push(next.clone());
                cur = next;
            }
        }
    }
    Err(Productivity::Unknown)
}

/// Checks hereditary head normalization to the given depth: the evidence
/// head-normalizes to `\ā. h e1 .. em` with a variable or constant head,
/// and each argument is itself productive to depth - 1.
pub fn bounded_hhn(e: &Evidence, depth: usize, fuel: usize) -> Productivity {
    if depth == 0 {
        return Productivity::ProductiveTo(0);
    }
    let normal = match head_normalize_bm(e, fuel) {
        Ok(n) => n,
        Err(v) => return v,
    };
    // Strip the lambda prefix, then the application spine.
    let mut cur = &normal;
    loop {
        match cur {
            Evidence::ELam(_, _, b) | Evidence::TyLam(_, b) => cur = b,
            _ => break,
        }
    }
    let mut args = Vec::new();
    loop {
        match cur {
            Evidence::EApp(f, a) => {
                args.push(a.as_ref());
                cur = f;
            }
            Evidence::TyApp(f, _) => cur = f,
            _ => break,
        }
    }
    if !matches!(cur, Evidence::EVar(_) | Evidence::EConst(_)) {
        // A mu survived in argument position without being forced; we
        // cannot certify either way at this fuel.
        return Productivity::Unknown;
    }
    let mut depth_reached = depth;
    for a in args {
        match bounded_hhn(a, depth - 1, fuel) {
            Productivity::ProductiveTo(d) => depth_reached = depth_reached.min(d + 1),
            other => return other,
        }
    }
    Productivity::ProductiveTo(depth_reached)
}
