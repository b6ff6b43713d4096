//! Core syntax: kinds, types, evidence, environments, substitution and
//! type-level normalization.
//!
//! Types double as first-order terms and term contexts (a context with one
//! hole is a `\x. C[x]` of kind `* => *`), so everything downstream — the
//! rewrite-system translation, matching, resolution and the proof checker —
//! is built on the operations in this module.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub type Name = String;

/// Kinds `k ::= o | K` with term kinds `K ::= * | * => K`.
///
/// The arrow domain is always `*`, so we only store the codomain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Kind {
    /// `o`, the kind of formulas (implications and quantified types).
    Formula,
    /// `*`, the kind of first-order terms.
    Star,
    /// `* => K`.
    Arrow(Box<Kind>),
}

impl Kind {
    /// `*^n => *`.
    pub fn term_kind(arity: usize) -> Kind {
        let mut k = Kind::Star;
        for _ in 0..arity {
            k = Kind::Arrow(Box::new(k));
        }
        k
    }

    /// Number of `*` arguments a term kind takes; `None` for `o`.
    pub fn arity(&self) -> Option<usize> {
        match self {
            Kind::Formula => None,
            Kind::Star => Some(0),
            Kind::Arrow(k) => k.arity().map(|n| n + 1),
        }
    }

    pub fn is_term_kind(&self) -> bool {
        !matches!(self, Kind::Formula)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::Formula => write!(f, "o"),
            Kind::Star => write!(f, "*"),
            Kind::Arrow(k) => write!(f, "* => {}", k),
        }
    }
}

/// The type language.
///
/// Constants and variables are distinguished lexically (capitalized vs
/// lowercase identifiers); the constructors keep them apart so nothing
/// downstream ever has to re-inspect the spelling.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Type {
    Var(Name),
    Const(Name),
    /// `\x. T` — a term context; kinding is relevant (`x` must occur in `T`).
    Lam(Name, Box<Type>),
    /// `forall x : K . T`. The binder kind is inferred from arities at the
    /// surface level and carried here.
    Forall(Name, Kind, Box<Type>),
    App(Box<Type>, Box<Type>),
    /// `T => T'`.
    Imply(Box<Type>, Box<Type>),
}

impl Type {
    pub fn app(fun: Type, arg: Type) -> Type {
        Type::App(Box::new(fun), Box::new(arg))
    }

    pub fn imply(t: Type, t2: Type) -> Type {
        Type::Imply(Box::new(t), Box::new(t2))
    }

    pub fn lam(x: impl Into<Name>, body: Type) -> Type {
        Type::Lam(x.into(), Box::new(body))
    }

    pub fn forall(x: impl Into<Name>, k: Kind, body: Type) -> Type {
        Type::Forall(x.into(), k, Box::new(body))
    }

    pub fn var(x: impl Into<Name>) -> Type {
        Type::Var(x.into())
    }

    pub fn cnst(x: impl Into<Name>) -> Type {
        Type::Const(x.into())
    }

    /// Splits `h A1 ... An` into the head and the argument list.
    pub fn spine(&self) -> (&Type, Vec<&Type>) {
        let mut args = Vec::new();
        let mut cur = self;
        while let Type::App(f, a) = cur {
            args.push(a.as_ref());
            cur = f;
        }
        args.reverse();
        (cur, args)
    }

    /// Rebuilds an application spine.
    pub fn from_spine(head: Type, args: Vec<Type>) -> Type {
        args.into_iter().fold(head, Type::app)
    }
}

/// Evidence (proof terms), both Curry-style and fully annotated.
///
/// Curry-style evidence has no `TyLam`/`TyApp` and no `ELam` annotations;
/// the elaborator produces the annotated form, which the proof checker
/// consumes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Evidence {
    EVar(Name),
    EConst(Name),
    /// `\a. e`, optionally annotated with the type of `a`.
    ELam(Name, Option<Type>, Box<Evidence>),
    EApp(Box<Evidence>, Box<Evidence>),
    /// `mu a. e` — the fixed point.
    Mu(Name, Box<Evidence>),
    /// `\x. e` — type abstraction.
    TyLam(Name, Box<Evidence>),
    /// `e T` — type instantiation.
    TyApp(Box<Evidence>, Type),
}

impl Evidence {
    pub fn app(f: Evidence, a: Evidence) -> Evidence {
        Evidence::EApp(Box::new(f), Box::new(a))
    }

    pub fn ty_app(f: Evidence, t: Type) -> Evidence {
        Evidence::TyApp(Box::new(f), t)
    }

    pub fn elam(x: impl Into<Name>, ann: Option<Type>, body: Evidence) -> Evidence {
        Evidence::ELam(x.into(), ann, Box::new(body))
    }

    pub fn ty_lam(x: impl Into<Name>, body: Evidence) -> Evidence {
        Evidence::TyLam(x.into(), Box::new(body))
    }

    pub fn mu(x: impl Into<Name>, body: Evidence) -> Evidence {
        Evidence::Mu(x.into(), Box::new(body))
    }
}

/// Ordered map from type variables/constants to kinds.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KindEnv {
    entries: Vec<(Name, Kind)>,
}

impl KindEnv {
    pub fn new() -> KindEnv {
        KindEnv::default()
    }

    pub fn lookup(&self, x: &str) -> Option<&Kind> {
        // Later bindings shadow earlier ones (locally bound variables over
        // the ambient signature).
        self.entries.iter().rev().find(|(n, _)| n == x).map(|(_, k)| k)
    }

    pub fn insert(&mut self, x: impl Into<Name>, k: Kind) {
        self.entries.push((x.into(), k));
    }

    /// Inserts, refusing duplicates — used for top-level signatures where a
    /// symbol must have a single kind.
    pub fn declare(&mut self, x: impl Into<Name>, k: Kind) -> Result<(), KindError> {
        let x = x.into();
        if let Some(old) = self.lookup(&x) {
            if *old != k {
                return Err(KindError {
                    reason: format!("symbol {} used at two kinds: {} and {}", x, old, k),
                    subterm: Type::cnst(x),
                });
            }
            return Ok(());
        }
        self.insert(x, k);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Name, Kind)> {
        self.entries.iter()
    }
}

/// Ordered map from evidence variables/constants to types.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeEnv {
    entries: Vec<(Name, Type)>,
}

impl TypeEnv {
    pub fn new() -> TypeEnv {
        TypeEnv::default()
    }

    pub fn lookup(&self, x: &str) -> Option<&Type> {
        self.entries.iter().rev().find(|(n, _)| n == x).map(|(_, t)| t)
    }

    pub fn insert(&mut self, x: impl Into<Name>, t: Type) {
        self.entries.push((x.into(), t));
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Name, Type)> {
        self.entries.iter()
    }

    /// Free type variables of all stored types.
    pub fn free_type_vars(&self) -> BTreeSet<Name> {
        let mut s = BTreeSet::new();
        for (_, t) in &self.entries {
            s.extend(free_type_vars(t));
        }
        s
    }

    /// Applies a substitution to every stored type.
    pub fn apply_subst(&self, s: &Substitution) -> TypeEnv {
        TypeEnv {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), normalize_type(&subst_type(s, t))))
                .collect(),
        }
    }
}

/// Idempotent finite map from type variables to types.
///
/// Idempotence (`dom ∩ FV(codom) = ∅`) is checked at construction; it is
/// what lets accumulated resolution substitutions be applied once, at the
/// end, instead of to a fixpoint.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Substitution {
    map: BTreeMap<Name, Type>,
}

impl Substitution {
    pub fn identity() -> Substitution {
        Substitution::default()
    }

    /// A one-variable substitution. No idempotence requirement: beta
    /// contraction routinely substitutes `G x` for a bound `x`.
    pub fn singleton(x: impl Into<Name>, t: Type) -> Substitution {
        let mut map = BTreeMap::new();
        map.insert(x.into(), t);
        Substitution { map }
    }

    /// A resolution substitution; these must be idempotent so that the
    /// accumulated composition can be applied once at the end.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Name, Type)>) -> Substitution {
        let s = Substitution {
            map: pairs.into_iter().collect(),
        };
        debug_assert!(s.is_idempotent(), "non-idempotent substitution: {:?}", s);
        s
    }

    pub fn is_idempotent(&self) -> bool {
        self.map
            .values()
            .flat_map(free_type_vars)
            .all(|v| !self.map.contains_key(&v))
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, x: &str) -> Option<&Type> {
        self.map.get(x)
    }

    pub fn domain(&self) -> impl Iterator<Item = &Name> {
        self.map.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Type)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    /// Restriction of the domain to variables *not* in `excluded`
    /// (the `σ/S` notation).
    pub fn without(&self, excluded: &BTreeSet<Name>) -> Substitution {
        Substitution {
            map: self
                .map
                .iter()
                .filter(|(k, _)| !excluded.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Composition `later ∘ self`: apply `later` to our codomain, then add
    /// `later`'s own bindings. Domains must be disjoint (they are, by the
    /// freshness discipline of resolution).
    pub fn compose(&self, later: &Substitution) -> Substitution {
        let mut map = BTreeMap::new();
        for (k, v) in &self.map {
            debug_assert!(!later.map.contains_key(k), "overlapping substitution domains");
            map.insert(k.clone(), normalize_type(&subst_type(later, v)));
        }
        for (k, v) in &later.map {
            map.insert(k.clone(), v.clone());
        }
        let s = Substitution { map };
        debug_assert!(s.is_idempotent(), "composition lost idempotence: {:?}", s);
        s
    }
}

/// Free type variables, respecting `Lam` and `Forall` binders.
pub fn free_type_vars(t: &Type) -> BTreeSet<Name> {
    fn go(t: &Type, bound: &mut Vec<Name>, acc: &mut BTreeSet<Name>) {
        match t {
            Type::Var(x) => {
                if !bound.iter().any(|b| b == x) {
                    acc.insert(x.clone());
                }
            }
            Type::Const(_) => {}
            Type::Lam(x, body) => {
                bound.push(x.clone());
                go(body, bound, acc);
                bound.pop();
            }
            Type::Forall(x, _, body) => {
                bound.push(x.clone());
                go(body, bound, acc);
                bound.pop();
            }
            Type::App(a, b) | Type::Imply(a, b) => {
                go(a, bound, acc);
                go(b, bound, acc);
            }
        }
    }
    let mut acc = BTreeSet::new();
    go(t, &mut Vec::new(), &mut acc);
    acc
}

/// Free variables of a type in first-occurrence (left-to-right) order.
///
/// The Leibniz translation quantifies the free variables of a rule's
/// left-hand side in this order, and trace decoding depends on it.
pub fn free_type_vars_ordered(t: &Type) -> Vec<Name> {
    fn go(t: &Type, bound: &mut Vec<Name>, acc: &mut Vec<Name>) {
        match t {
            Type::Var(x) => {
                if !bound.iter().any(|b| b == x) && !acc.iter().any(|a| a == x) {
                    acc.push(x.clone());
                }
            }
            Type::Const(_) => {}
            Type::Lam(x, body) | Type::Forall(x, _, body) => {
                bound.push(x.clone());
                go(body, bound, acc);
                bound.pop();
            }
            Type::App(a, b) | Type::Imply(a, b) => {
                go(a, bound, acc);
                go(b, bound, acc);
            }
        }
    }
    let mut acc = Vec::new();
    go(t, &mut Vec::new(), &mut acc);
    acc
}

fn fresh_variant(base: &str, avoid: &BTreeSet<Name>) -> Name {
    let mut candidate = format!("{}'", base);
    while avoid.contains(&candidate) {
        candidate.push('\'');
    }
    candidate
}

/// Capture-avoiding simultaneous substitution.
pub fn subst_type(s: &Substitution, t: &Type) -> Type {
    if s.is_empty() {
        return t.clone();
    }
    // Variables that could be captured by a binder we pass under.
    let codom_fvs: BTreeSet<Name> = s.map.values().flat_map(free_type_vars).collect();
    fn rename_binder(
        x: &Name,
        body: &Type,
        s: &Substitution,
        codom_fvs: &BTreeSet<Name>,
    ) -> (Name, Type) {
        if codom_fvs.contains(x) && free_type_vars(body).iter().any(|v| s.map.contains_key(v)) {
            let mut avoid = codom_fvs.clone();
            avoid.extend(free_type_vars(body));
            let fresh = fresh_variant(x, &avoid);
            let renamed = subst_type(&Substitution::singleton(x.clone(), Type::var(fresh.clone())), body);
            (fresh, renamed)
        } else {
            (x.clone(), body.clone())
        }
    }
    fn go(t: &Type, s: &Substitution, codom_fvs: &BTreeSet<Name>) -> Type {
        match t {
            Type::Var(x) => s.get(x).cloned().unwrap_or_else(|| t.clone()),
            Type::Const(_) => t.clone(),
            Type::Lam(x, body) => {
                let inner = s.without(&BTreeSet::from([x.clone()]));
                if inner.is_empty() {
                    return t.clone();
                }
                let (x2, body2) = rename_binder(x, body, &inner, codom_fvs);
                Type::lam(x2, go(&body2, &inner, codom_fvs))
            }
            Type::Forall(x, k, body) => {
                let inner = s.without(&BTreeSet::from([x.clone()]));
                if inner.is_empty() {
                    return t.clone();
                }
                let (x2, body2) = rename_binder(x, body, &inner, codom_fvs);
                Type::forall(x2, k.clone(), go(&body2, &inner, codom_fvs))
            }
            Type::App(a, b) => Type::app(go(a, s, codom_fvs), go(b, s, codom_fvs)),
            Type::Imply(a, b) => Type::imply(go(a, s, codom_fvs), go(b, s, codom_fvs)),
        }
    }
    go(t, s, &codom_fvs)
}

/// Fuel for type normalization. Kindable types are strongly normalizing, so
/// running out of fuel signals a kinding bug upstream — we treat it as an
/// internal error rather than a user-facing condition.
const NORMALIZE_FUEL: usize = 10_000;

/// The unique `->o`-normal form (leftmost-outermost beta).
pub fn normalize_type(t: &Type) -> Type {
    let mut cur = t.clone();
    for _ in 0..NORMALIZE_FUEL {
        match step_o(&cur) {
            Some(next) => cur = next,
            None => return cur,
        }
    }
    panic!("type normalization ran out of fuel (kinding bug?): {:?}", t);
}

/// One leftmost-outermost `->o` step, or `None` on a normal form.
pub fn step_o(t: &Type) -> Option<Type> {
    match t {
        Type::Var(_) | Type::Const(_) => None,
        Type::Lam(x, body) => step_o(body).map(|b| Type::lam(x.clone(), b)),
        Type::Forall(x, k, body) => step_o(body).map(|b| Type::forall(x.clone(), k.clone(), b)),
        Type::App(f, a) => {
            if let Type::Lam(x, body) = f.as_ref() {
                return Some(subst_type(
                    &Substitution::singleton(x.clone(), a.as_ref().clone()),
                    body,
                ));
            }
            if let Some(f2) = step_o(f) {
                return Some(Type::app(f2, a.as_ref().clone()));
            }
            step_o(a).map(|a2| Type::app(f.as_ref().clone(), a2))
        }
        Type::Imply(a, b) => {
            if let Some(a2) = step_o(a) {
                return Some(Type::imply(a2, b.as_ref().clone()));
            }
            step_o(b).map(|b2| Type::imply(a.as_ref().clone(), b2))
        }
    }
}

/// Alpha-equivalence of types.
pub fn alpha_eq(a: &Type, b: &Type) -> bool {
    fn go(a: &Type, b: &Type, env: &mut Vec<(Name, Name)>) -> bool {
        match (a, b) {
            (Type::Var(x), Type::Var(y)) => {
                for (l, r) in env.iter().rev() {
                    if l == x || r == y {
                        return l == x && r == y;
                    }
                }
                x == y
            }
            (Type::Const(x), Type::Const(y)) => x == y,
            (Type::Lam(x, bx), Type::Lam(y, by)) => {
                env.push((x.clone(), y.clone()));
                let r = go(bx, by, env);
                env.pop();
                r
            }
            (Type::Forall(x, kx, bx), Type::Forall(y, ky, by)) => {
                if kx != ky {
                    return false;
                }
                env.push((x.clone(), y.clone()));
                let r = go(bx, by, env);
                env.pop();
                r
            }
            (Type::App(f, u), Type::App(g, v)) | (Type::Imply(f, u), Type::Imply(g, v)) => {
                go(f, g, env) && go(u, v, env)
            }
            _ => false,
        }
    }
    go(a, b, &mut Vec::new())
}

/// `T <->*o T'` — decided by normalizing both sides (justified by
/// confluence and strong normalization of `->o`).
pub fn types_convertible(a: &Type, b: &Type) -> bool {
    alpha_eq(&normalize_type(a), &normalize_type(b))
}

/// A kinding failure, carrying the offending subterm.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("kind error: {reason}")]
pub struct KindError {
    pub reason: String,
    pub subterm: Type,
}

impl KindError {
    fn new(reason: impl Into<String>, subterm: &Type) -> KindError {
        KindError {
            reason: reason.into(),
            subterm: subterm.clone(),
        }
    }
}

/// Kind checking. The `Lam` rule is relevant: the bound variable must occur
/// in the body. `Forall`/`Imply` premises accept kind `o` or `*`.
pub fn kind_check(delta: &KindEnv, t: &Type) -> Result<Kind, KindError> {
    match t {
        Type::Var(x) | Type::Const(x) => delta
            .lookup(x)
            .cloned()
            .ok_or_else(|| KindError::new(format!("unbound type symbol {}", x), t)),
        Type::App(f, a) => {
            let ka = kind_check(delta, a)?;
            if ka != Kind::Star {
                return Err(KindError::new(
                    format!("application argument has kind {}, expected *", ka),
                    a,
                ));
            }
            match kind_check(delta, f)? {
                Kind::Arrow(k) => Ok(*k),
                other => Err(KindError::new(
                    format!("application head has kind {}, expected * => K", other),
                    f,
                )),
            }
        }
        Type::Lam(x, body) => {
            if !free_type_vars(body).contains(x) {
                return Err(KindError::new(
                    format!("lambda-bound variable {} is unused (relevance)", x),
                    t,
                ));
            }
            let mut inner = delta.clone();
            inner.insert(x.clone(), Kind::Star);
            match kind_check(&inner, body)? {
                Kind::Formula => Err(KindError::new(
                    "lambda body has kind o; only term kinds may be abstracted",
                    body,
                )),
                k => Ok(Kind::Arrow(Box::new(k))),
            }
        }
        Type::Forall(x, k, body) => {
            let mut inner = delta.clone();
            inner.insert(x.clone(), k.clone());
            match kind_check(&inner, body)? {
                Kind::Formula | Kind::Star => Ok(Kind::Formula),
                other => Err(KindError::new(
                    format!("forall body has kind {}, expected o or *", other),
                    body,
                )),
            }
        }
        Type::Imply(a, b) => {
            for side in [a, b] {
                match kind_check(delta, side)? {
                    Kind::Formula | Kind::Star => {}
                    other => {
                        return Err(KindError::new(
                            format!("=> operand has kind {}, expected o or *", other),
                            side,
                        ))
                    }
                }
            }
            Ok(Kind::Formula)
        }
    }
}

/// Is the (normal-form) type flat: a variable, a constant, or an
/// application of flats?
pub fn is_flat(t: &Type) -> bool {
    match t {
        Type::Var(_) | Type::Const(_) => true,
        Type::App(a, b) => is_flat(a) && is_flat(b),
        _ => false,
    }
}

/// Second-order types: flat, or a lambda prefix over a flat body that uses
/// every bound variable. Expects the argument in `->o`-normal form.
pub fn is_second_order(t: &Type) -> bool {
    let mut binders = Vec::new();
    let mut cur = t;
    while let Type::Lam(x, body) = cur {
        binders.push(x.clone());
        cur = body;
    }
    if !is_flat(cur) {
        return false;
    }
    let fvs = free_type_vars(cur);
    binders.iter().all(|x| fvs.contains(x))
}

// ---------------------------------------------------------------------------
// Evidence-level substitution (the engine behind head reduction).

/// Free evidence variables.
pub fn free_evidence_vars(e: &Evidence) -> BTreeSet<Name> {
    fn go(e: &Evidence, bound: &mut Vec<Name>, acc: &mut BTreeSet<Name>) {
        match e {
            Evidence::EVar(x) => {
                if !bound.iter().any(|b| b == x) {
                    acc.insert(x.clone());
                }
            }
            Evidence::EConst(_) => {}
            Evidence::ELam(x, _, body) | Evidence::Mu(x, body) => {
                bound.push(x.clone());
                go(body, bound, acc);
                bound.pop();
            }
            Evidence::TyLam(_, body) => go(body, bound, acc),
            Evidence::EApp(f, a) => {
                go(f, bound, acc);
                go(a, bound, acc);
            }
            Evidence::TyApp(f, _) => go(f, bound, acc),
        }
    }
    let mut acc = BTreeSet::new();
    go(e, &mut Vec::new(), &mut acc);
    acc
}

/// Capture-avoiding `[v/x]e` on evidence.
pub fn subst_evidence(e: &Evidence, x: &str, v: &Evidence) -> Evidence {
    let v_fvs = free_evidence_vars(v);
    fn go(e: &Evidence, x: &str, v: &Evidence, v_fvs: &BTreeSet<Name>) -> Evidence {
        match e {
            Evidence::EVar(y) => {
                if y == x {
                    v.clone()
                } else {
                    e.clone()
                }
            }
            Evidence::EConst(_) => e.clone(),
            Evidence::ELam(y, ann, body) => {
                if y == x {
                    return e.clone();
                }
                let (y2, body2) = freshen_evar(y, body, x, v_fvs);
                Evidence::elam(y2, ann.clone(), go(&body2, x, v, v_fvs))
            }
            Evidence::Mu(y, body) => {
                if y == x {
                    return e.clone();
                }
                let (y2, body2) = freshen_evar(y, body, x, v_fvs);
                Evidence::mu(y2, go(&body2, x, v, v_fvs))
            }
            Evidence::TyLam(y, body) => Evidence::ty_lam(y.clone(), go(body, x, v, v_fvs)),
            Evidence::EApp(f, a) => Evidence::app(go(f, x, v, v_fvs), go(a, x, v, v_fvs)),
            Evidence::TyApp(f, t) => Evidence::ty_app(go(f, x, v, v_fvs), t.clone()),
        }
    }
    fn freshen_evar(y: &Name, body: &Evidence, x: &str, v_fvs: &BTreeSet<Name>) -> (Name, Evidence) {
        if v_fvs.contains(y) && free_evidence_vars(body).contains(x) {
            let mut avoid = v_fvs.clone();
            avoid.extend(free_evidence_vars(body));
            let fresh = fresh_variant(y, &avoid);
            let renamed = subst_evidence(body, y, &Evidence::EVar(fresh.clone()));
            (fresh, renamed)
        } else {
            (y.clone(), body.clone())
        }
    }
    go(e, x, v, &v_fvs)
}

/// Capture-avoiding type substitution inside evidence (annotations, type
/// arguments, and type-binder scoping).
pub fn subst_type_in_evidence(e: &Evidence, s: &Substitution) -> Evidence {
    if s.is_empty() {
        return e.clone();
    }
    match e {
        Evidence::EVar(_) | Evidence::EConst(_) => e.clone(),
        Evidence::ELam(x, ann, body) => Evidence::elam(
            x.clone(),
            ann.as_ref().map(|t| subst_type(s, t)),
            subst_type_in_evidence(body, s),
        ),
        Evidence::Mu(x, body) => Evidence::mu(x.clone(), subst_type_in_evidence(body, s)),
        Evidence::TyLam(x, body) => {
            let inner = s.without(&BTreeSet::from([x.clone()]));
            if inner.is_empty() {
                return e.clone();
            }
            let codom_fvs: BTreeSet<Name> =
                inner.map.values().flat_map(free_type_vars).collect();
            if codom_fvs.contains(x) {
                let mut avoid = codom_fvs;
                avoid.extend(free_type_vars_in_evidence(body));
                let fresh = fresh_variant(x, &avoid);
                let renamed = subst_type_in_evidence(
                    body,
                    &Substitution::singleton(x.clone(), Type::var(fresh.clone())),
                );
                Evidence::ty_lam(fresh, subst_type_in_evidence(&renamed, &inner))
            } else {
                Evidence::ty_lam(x.clone(), subst_type_in_evidence(body, &inner))
            }
        }
        Evidence::EApp(f, a) => {
            Evidence::app(subst_type_in_evidence(f, s), subst_type_in_evidence(a, s))
        }
        Evidence::TyApp(f, t) => Evidence::ty_app(subst_type_in_evidence(f, s), subst_type(s, t)),
    }
}

/// Free type variables occurring anywhere in an evidence term.
pub fn free_type_vars_in_evidence(e: &Evidence) -> BTreeSet<Name> {
    fn go(e: &Evidence, bound: &mut Vec<Name>, acc: &mut BTreeSet<Name>) {
        match e {
            Evidence::EVar(_) | Evidence::EConst(_) => {}
            Evidence::ELam(_, ann, body) => {
                if let Some(t) = ann {
                    for v in free_type_vars(t) {
                        if !bound.iter().any(|b| *b == v) {
                            acc.insert(v);
                        }
                    }
                }
                go(body, bound, acc);
            }
            Evidence::Mu(_, body) => go(body, bound, acc),
            Evidence::TyLam(x, body) => {
                bound.push(x.clone());
                go(body, bound, acc);
                bound.pop();
            }
            Evidence::EApp(f, a) => {
                go(f, bound, acc);
                go(a, bound, acc);
            }
            Evidence::TyApp(f, t) => {
                go(f, bound, acc);
                for v in free_type_vars(t) {
                    if !bound.iter().any(|b| *b == v) {
                        acc.insert(v);
                    }
                }
            }
        }
    }
    let mut acc = BTreeSet::new();
    go(e, &mut Vec::new(), &mut acc);
    acc
}

/// Alpha-equivalence of evidence (both evidence and type binders).
pub fn alpha_eq_evidence(a: &Evidence, b: &Evidence) -> bool {
    fn tgo(a: &Type, b: &Type, tenv: &mut Vec<(Name, Name)>) -> bool {
        match (a, b) {
            (Type::Var(x), Type::Var(y)) => {
                for (l, r) in tenv.iter().rev() {
                    if l == x || r == y {
                        return l == x && r == y;
                    }
                }
                x == y
            }
            (Type::Const(x), Type::Const(y)) => x == y,
            (Type::Lam(x, bx), Type::Lam(y, by)) => {
                tenv.push((x.clone(), y.clone()));
                let r = tgo(bx, by, tenv);
                tenv.pop();
                r
            }
            (Type::Forall(x, kx, bx), Type::Forall(y, ky, by)) => {
                if kx != ky {
                    return false;
                }
                tenv.push((x.clone(), y.clone()));
                let r = tgo(bx, by, tenv);
                tenv.pop();
                r
            }
            (Type::App(f, u), Type::App(g, v)) | (Type::Imply(f, u), Type::Imply(g, v)) => {
                tgo(f, g, tenv) && tgo(u, v, tenv)
            }
            _ => false,
        }
    }
    fn go(
        a: &Evidence,
        b: &Evidence,
        eenv: &mut Vec<(Name, Name)>,
        tenv: &mut Vec<(Name, Name)>,
    ) -> bool {
        match (a, b) {
            (Evidence::EVar(x), Evidence::EVar(y)) => {
                for (l, r) in eenv.iter().rev() {
                    if l == x || r == y {
                        return l == x && r == y;
                    }
                }
                x == y
            }
            (Evidence::EConst(x), Evidence::EConst(y)) => x == y,
            (Evidence::ELam(x, ax, bx), Evidence::ELam(y, ay, by)) => {
                let anns = match (ax, ay) {
                    (None, None) => true,
                    (Some(tx), Some(ty)) => tgo(tx, ty, tenv),
                    _ => false,
                };
                if !anns {
                    return false;
                }
                eenv.push((x.clone(), y.clone()));
                let r = go(bx, by, eenv, tenv);
                eenv.pop();
                r
            }
            (Evidence::Mu(x, bx), Evidence::Mu(y, by)) => {
                eenv.push((x.clone(), y.clone()));
                let r = go(bx, by, eenv, tenv);
                eenv.pop();
                r
            }
            (Evidence::TyLam(x, bx), Evidence::TyLam(y, by)) => {
                tenv.push((x.clone(), y.clone()));
                let r = go(bx, by, eenv, tenv);
                tenv.pop();
                r
            }
            (Evidence::EApp(f, u), Evidence::EApp(g, v)) => {
                go(f, g, eenv, tenv) && go(u, v, eenv, tenv)
            }
            (Evidence::TyApp(f, u), Evidence::TyApp(g, v)) => {
                go(f, g, eenv, tenv) && tgo(u, v, tenv)
            }
            _ => false,
        }
    }
    go(a, b, &mut Vec::new(), &mut Vec::new())
}

/// Reads an evidence term back as a type, when it happens to be one.
///
/// Printed lemmas do not syntactically distinguish type arguments from
/// evidence arguments, so the parser produces evidence and the proof
/// checker coerces at `Forall` junctions via this function.
pub fn evidence_to_type(e: &Evidence) -> Option<Type> {
    match e {
        Evidence::EVar(x) => Some(Type::var(x.clone())),
        Evidence::EConst(x) => Some(Type::cnst(x.clone())),
        Evidence::ELam(x, None, body) => Some(Type::lam(x.clone(), evidence_to_type(body)?)),
        Evidence::EApp(f, a) => Some(Type::app(evidence_to_type(f)?, evidence_to_type(a)?)),
        _ => None,
    }
}

/// A supply of generated names, prototype style: base + counter + `'`.
#[derive(Clone, Debug, Default)]
pub struct NameSupply {
    counter: usize,
}

impl NameSupply {
    pub fn new() -> NameSupply {
        NameSupply::default()
    }

    /// `fresh("p") -> p0', p1', ...` — the counter is global to the supply,
    /// not per base name, which reproduces the prototype's numbering.
    pub fn fresh(&mut self, base: &str) -> Name {
        let base = base.trim_end_matches('\'');
        let base = base.trim_end_matches(|c: char| c.is_ascii_digit());
        let n = self.counter;
        self.counter += 1;
        format!("{}{}'", base, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig() -> KindEnv {
        // F, G : * => *;  D, Pair : * => * => *;  S : * => *;  Z : *
        let mut d = KindEnv::new();
        d.insert("F", Kind::term_kind(1));
        d.insert("G", Kind::term_kind(1));
        d.insert("S", Kind::term_kind(1));
        d.insert("Z", Kind::term_kind(0));
        d.insert("D", Kind::term_kind(2));
        d
    }

    // (\y. p (G y)) (F (G x))
    fn redex() -> Type {
        Type::app(
            Type::lam("y", Type::app(Type::var("p"), Type::app(Type::cnst("G"), Type::var("y")))),
            Type::app(Type::cnst("F"), Type::app(Type::cnst("G"), Type::var("x"))),
        )
    }

    #[test]
    fn free_vars_skip_binders_and_constants() {
        let fvs = free_type_vars(&redex());
        assert_eq!(fvs, BTreeSet::from(["p".to_string(), "x".to_string()]));
    }

    #[test]
    fn free_vars_in_first_occurrence_order() {
        // D y (D x y): y before x
        let t = Type::from_spine(
            Type::cnst("D"),
            vec![
                Type::var("y"),
                Type::app(Type::app(Type::cnst("D"), Type::var("x")), Type::var("y")),
            ],
        );
        assert_eq!(free_type_vars_ordered(&t), vec!["y".to_string(), "x".to_string()]);
    }

    #[test]
    fn beta_normalization() {
        // (\y. p (G y)) (F (G x))  ->o  p (G (F (G x)))
        let expected = Type::app(
            Type::var("p"),
            Type::app(
                Type::cnst("G"),
                Type::app(Type::cnst("F"), Type::app(Type::cnst("G"), Type::var("x"))),
            ),
        );
        assert_eq!(normalize_type(&redex()), expected);
    }

    #[test]
    fn substitution_avoids_capture() {
        // [y/x] (\y. D x y)  must rename the binder
        let t = Type::lam(
            "y",
            Type::app(Type::app(Type::cnst("D"), Type::var("x")), Type::var("y")),
        );
        let s = Substitution::singleton("x", Type::var("y"));
        let r = subst_type(&s, &t);
        let expected = Type::lam(
            "y'",
            Type::app(Type::app(Type::cnst("D"), Type::var("y")), Type::var("y'")),
        );
        assert!(alpha_eq(&r, &expected), "got {:?}", r);
        // and the outer y stayed free
        assert!(free_type_vars(&r).contains("y"));
    }

    #[test]
    fn substitution_composition_is_application_order() {
        // ([G y/p] . [Z/y]) x-free sanity: compose then apply once
        let s1 = Substitution::singleton("p", Type::app(Type::cnst("G"), Type::var("y")));
        let s2 = Substitution::singleton("y", Type::cnst("Z"));
        let s = s1.compose(&s2);
        let t = Type::app(Type::var("p"), Type::var("y"));
        let direct = normalize_type(&subst_type(&s2, &subst_type(&s1, &t)));
        assert!(alpha_eq(&normalize_type(&subst_type(&s, &t)), &direct));
    }

    #[test]
    #[should_panic(expected = "non-idempotent")]
    #[cfg(debug_assertions)]
    fn non_idempotent_substitution_rejected() {
        let _ = Substitution::from_pairs([(
            "x".to_string(),
            Type::app(Type::cnst("S"), Type::var("x")),
        )]);
    }

    #[test]
    fn kind_of_leibniz_axiom_type() {
        // forall p : *=>*. forall x : *. p (G (F (G x))) => p (F x)  :  o
        let body = Type::imply(
            Type::app(
                Type::var("p"),
                Type::app(
                    Type::cnst("G"),
                    Type::app(Type::cnst("F"), Type::app(Type::cnst("G"), Type::var("x"))),
                ),
            ),
            Type::app(Type::var("p"), Type::app(Type::cnst("F"), Type::var("x"))),
        );
        let t = Type::forall(
            "p",
            Kind::term_kind(1),
            Type::forall("x", Kind::Star, body),
        );
        assert_eq!(kind_check(&sig(), &t), Ok(Kind::Formula));
    }

    #[test]
    fn kinding_rejects_formula_under_lambda() {
        // \x. \y. F x => F y : the inner body has kind o
        let t = Type::lam(
            "x",
            Type::lam(
                "y",
                Type::imply(
                    Type::app(Type::cnst("F"), Type::var("x")),
                    Type::app(Type::cnst("F"), Type::var("y")),
                ),
            ),
        );
        assert!(kind_check(&sig(), &t).is_err());
    }

    #[test]
    fn kinding_is_relevant() {
        // \x. \y. D Z (S Z): neither variable occurs
        let t = Type::lam(
            "x",
            Type::lam(
                "y",
                Type::app(
                    Type::app(Type::cnst("D"), Type::cnst("Z")),
                    Type::app(Type::cnst("S"), Type::cnst("Z")),
                ),
            ),
        );
        let err = kind_check(&sig(), &t).unwrap_err();
        assert!(err.reason.contains("unused"), "{}", err.reason);
    }

    #[test]
    fn kinding_rejects_overapplication() {
        // S Z Z: S : * => * applied twice
        let t = Type::app(Type::app(Type::cnst("S"), Type::cnst("Z")), Type::cnst("Z"));
        assert!(kind_check(&sig(), &t).is_err());
    }

    #[test]
    fn kinding_rejects_unbound_symbols() {
        assert!(kind_check(&sig(), &Type::var("nowhere")).is_err());
        assert!(kind_check(&sig(), &Type::cnst("Nowhere")).is_err());
    }

    #[test]
    fn second_order_recognizer() {
        // \x. G (D x x) is second order
        let good = Type::lam(
            "x",
            Type::app(
                Type::cnst("G"),
                Type::app(Type::app(Type::cnst("D"), Type::var("x")), Type::var("x")),
            ),
        );
        assert!(is_second_order(&good));
        // identity projection too
        assert!(is_second_order(&Type::lam("x", Type::var("x"))));
        // an implication under a lambda is not flat
        let bad = Type::lam(
            "x",
            Type::imply(Type::var("x"), Type::app(Type::cnst("F"), Type::var("x"))),
        );
        assert!(!is_second_order(&bad));
        // a forall is not flat either
        assert!(!is_second_order(&Type::forall(
            "x",
            Kind::Star,
            Type::app(Type::cnst("F"), Type::var("x"))
        )));
    }

    #[test]
    fn convertibility_ignores_reduction_and_names() {
        let a = redex();
        let b = Type::app(
            Type::var("p"),
            Type::app(
                Type::cnst("G"),
                Type::app(Type::cnst("F"), Type::app(Type::cnst("G"), Type::var("x"))),
            ),
        );
        assert!(types_convertible(&a, &b));
        assert!(!types_convertible(&a, &Type::var("p")));
        // alpha: \x. F x ~ \y. F y
        assert!(alpha_eq(
            &Type::lam("x", Type::app(Type::cnst("F"), Type::var("x"))),
            &Type::lam("y", Type::app(Type::cnst("F"), Type::var("y"))),
        ));
    }

    #[test]
    fn evidence_substitution_and_alpha() {
        // [k/a] (\b. a b) keeps b; [b/a] (\b. a b) renames
        let e = Evidence::elam(
            "b",
            None,
            Evidence::app(Evidence::EVar("a".into()), Evidence::EVar("b".into())),
        );
        let r1 = subst_evidence(&e, "a", &Evidence::EConst("K".into()));
        assert_eq!(
            r1,
            Evidence::elam(
                "b",
                None,
                Evidence::app(Evidence::EConst("K".into()), Evidence::EVar("b".into()))
            )
        );
        let r2 = subst_evidence(&e, "a", &Evidence::EVar("b".into()));
        assert!(free_evidence_vars(&r2).contains("b"));
        assert!(alpha_eq_evidence(
            &r2,
            &Evidence::elam(
                "c",
                None,
                Evidence::app(Evidence::EVar("b".into()), Evidence::EVar("c".into()))
            )
        ));
    }

    #[test]
    fn evidence_reads_back_as_type() {
        // \m1'. p (G m1')  is a context, so it coerces
        let e = Evidence::elam(
            "m1'",
            None,
            Evidence::app(
                Evidence::EVar("p".into()),
                Evidence::app(Evidence::EConst("G".into()), Evidence::EVar("m1'".into())),
            ),
        );
        let t = evidence_to_type(&e).unwrap();
        assert!(alpha_eq(
            &t,
            &Type::lam(
                "m",
                Type::app(Type::var("p"), Type::app(Type::cnst("G"), Type::var("m")))
            )
        ));
        // a mu can never be a type
        assert!(evidence_to_type(&Evidence::mu("a", Evidence::EVar("a".into()))).is_none());
    }

    #[test]
    fn name_supply_numbering() {
        let mut ns = NameSupply::new();
        assert_eq!(ns.fresh("p"), "p0'");
        assert_eq!(ns.fresh("x"), "x1'");
        assert_eq!(ns.fresh("y"), "y2'");
        // freshening an already generated name reuses the base letter
        assert_eq!(ns.fresh("p0'"), "p3'");
    }

    #[test]
    fn kind_display_and_arity() {
        assert_eq!(Kind::term_kind(2).to_string(), "* => * => *");
        assert_eq!(Kind::term_kind(2).arity(), Some(2));
        assert_eq!(Kind::Formula.arity(), None);
    }
}
