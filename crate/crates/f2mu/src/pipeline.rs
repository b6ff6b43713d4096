//! The end-to-end driver: parse a program, infer its constant signature,
//! translate rewrite rules to their context axioms, reconstruct annotated
//! evidence for every proof declaration, re-check that evidence with the
//! independent proof checker, collapse it into the simply-typed fixed-point
//! calculus, and finally execute the file's commands — producing one
//! deterministic textual report.
//!
//! Reconstructed evidence is never trusted: a lemma only reaches the report
//! (and a `step` command only runs) after the separate proof check passes.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;

use crate::checker::{canonical_evidence, erase, lambda_y_check, theta_env, theta_type};
use crate::dynamics::{
    act, bounded_hhn, evidence_trace, reduction_tree, render_tree, step_unfold,
    trs_innermost_steps, FirstOrderTerm, Productivity, RewriteSystem,
};
use crate::kernel::{free_type_vars, subst_evidence, Evidence, Kind, Name, TypeEnv};
use crate::leibniz::{axiom_as_rule, rule_axiom_type};
use crate::resolution::{elaborate_program, ElaborateError, Elaboration, Mode, ResolveOptions};
use crate::surface::{
    parse_program, parse_type, print_evidence, print_term, print_type, Command, Decl, ParseError,
    Program,
};

/// Options shared by the `check` and `run` entry points.
#[derive(Clone, Debug)]
pub struct PipelineOptions {
    /// Head-reduction fuel per unfolding step (and for productivity).
    pub fuel: usize,
    /// When nonzero, emit a diagnostic trace of the first N terms of every
    /// lemma whose declared type is a first-order term.
    pub trace_steps: usize,
    /// Depth bound for the hereditary head-normalization verdicts.
    pub productivity_depth: usize,
    /// Verify that every printed lemma re-parses and re-prints to the same
    /// bytes (printer/parser coherence for golden comparisons).
    pub strict_names: bool,
    /// Skip reconstruction: only proof-check declarations that already carry
    /// annotated evidence (equations and their signatures are ignored).
    pub check_only: bool,
    /// Treat scope-check failures as backtrackable instead of fatal.
    pub backtrack_existentials: bool,
    /// Execute the file's commands (`run`) or only echo them (`check`).
    pub run_commands: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            fuel: 100_000,
            trace_steps: 0,
            productivity_depth: 10,
            strict_names: false,
            check_only: false,
            backtrack_existentials: false,
            run_commands: true,
        }
    }
}

/// A successful run: the report (stdout) and informational diagnostics
/// (stderr): productivity verdicts and optional traces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: String,
    pub diagnostics: Vec<String>,
}

/// Any pipeline failure, carrying its stage for the exit code.
#[derive(Debug)]
pub enum PipelineError {
    Parse(ParseError),
    Elaborate(ElaborateError),
    /// The independent proof check rejected reconstructed evidence — the
    /// reconstruction produced something unsound and must not be trusted.
    ProofCheck { name: Name, message: String },
    /// The evidence does not collapse into the simply-typed fixed-point
    /// calculus.
    Collapse { name: Name, message: String },
    /// A command failed: unknown name, non-first-order start term, or an
    /// unfolding step disagreeing with the rewriting oracle.
    Command { message: String },
}

impl PipelineError {
    /// Process exit code: 1 parse/structure, 2 kinds, 3 resolution (and
    /// scope), 4 proof check of reconstructed evidence, 5 unfolding or
    /// faithfulness.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Parse(_) => 1,
            PipelineError::Elaborate(e) => match e {
                ElaborateError::Rule { .. }
                | ElaborateError::MissingSignature { .. }
                | ElaborateError::DuplicateDefinition { .. } => 1,
                ElaborateError::Kind { .. } => 2,
                ElaborateError::Existential { .. } | ElaborateError::Resolve { .. } => 3,
            },
            PipelineError::ProofCheck { .. } => 4,
            PipelineError::Collapse { .. } | PipelineError::Command { .. } => 5,
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Parse(e) => write!(f, "{}", e),
            PipelineError::Elaborate(e) => write!(f, "{}", e),
            PipelineError::ProofCheck { name, message } => write!(
                f,
                "the reconstructed evidence for {} does not proof-check: {}",
                name, message
            ),
            PipelineError::Collapse { name, message } => write!(
                f,
                "the evidence for {} does not collapse to a simply typed term: {}",
                name, message
            ),
            PipelineError::Command { message } => write!(f, "{}", message),
        }
    }
}

impl std::error::Error for PipelineError {}

/// A failed run still carries the report produced so far (the error text is
/// appended to it, so scope errors appear in the report itself).
#[derive(Debug)]
pub struct PipelineFailure {
    pub report: String,
    pub error: PipelineError,
}

fn fail(error: PipelineError) -> PipelineFailure {
    PipelineFailure {
        report: format!("{}\n", error),
        error,
    }
}

/// The rewrite system driving the dynamics: `<=` rule declarations plus
/// every explicit axiom of context-axiom shape.
pub fn rules_of_program(prog: &Program) -> Result<RewriteSystem, PipelineError> {
    let defined: BTreeSet<&Name> = prog
        .decls
        .iter()
        .filter_map(|d| match d {
            Decl::Equation { name, .. } => Some(name),
            _ => None,
        })
        .collect();
    let mut decls = Vec::new();
    for d in &prog.decls {
        match d {
            Decl::Rule { name, lhs, rhs } => {
                let as_term = |t, side| {
                    FirstOrderTerm::from_type(t).map_err(|m| {
                        PipelineError::Elaborate(ElaborateError::Rule {
                            name: name.clone(),
                            message: format!("{} is not a first-order term: {}", side, m),
                        })
                    })
                };
                decls.push((name.clone(), as_term(lhs, "left side")?, as_term(rhs, "right side")?));
            }
            Decl::Sig { name, ty } if !defined.contains(name) => {
                if let Some((l, r)) = axiom_as_rule(ty) {
                    decls.push((name.clone(), l, r));
                }
            }
            _ => {}
        }
    }
    RewriteSystem::new(decls).map_err(|e| {
        PipelineError::Elaborate(ElaborateError::Rule {
            name: String::new(),
            message: e.to_string(),
        })
    })
}

/// Drops equations (and their signatures) so only pre-annotated
/// declarations remain to be checked.
fn without_equations(prog: &Program) -> Program {
    let defined: BTreeSet<Name> = prog
        .decls
        .iter()
        .filter_map(|d| match d {
            Decl::Equation { name, .. } => Some(name.clone()),
            _ => None,
        })
        .collect();
    Program {
        decls: prog
            .decls
            .iter()
            .filter(|d| match d {
                Decl::Equation { .. } => false,
                Decl::Sig { name, .. } => !defined.contains(name),
                _ => true,
            })
            .cloned()
            .collect(),
    }
}

fn strip_mu<'a>(name: &str, e: &'a Evidence) -> &'a Evidence {
    match e {
        Evidence::Mu(x, b) if x == name => b,
        _ => e,
    }
}

fn echo_command(c: &Command) -> String {
    match c {
        Command::Step { name, count } => format!("step {} {}", name, count),
        Command::FullTree { depth, term } => format!(":full {} ({})", depth, print_term(term)),
        Command::InnerSteps { count, term } => format!(":inner {} ({})", count, print_term(term)),
    }
}

/// Runs the whole pipeline on program text.
pub fn run_source(src: &str, opts: &PipelineOptions) -> Result<RunOutput, PipelineFailure> {
    let prog = parse_program(src).map_err(|e| fail(PipelineError::Parse(e)))?;
    let prog = if opts.check_only {
        without_equations(&prog)
    } else {
        prog
    };
    let ropts = ResolveOptions {
        mode: Mode::Ersm,
        backtrack_existentials: opts.backtrack_existentials,
        step_limit: None,
    };
    let el = elaborate_program(&prog, &ropts)
        .map_err(|e| fail(PipelineError::Elaborate(e)))?;
    let rules = rules_of_program(&prog).map_err(fail)?;

    let mut diagnostics = Vec::new();
    let canonical = check_lemmas(&el).map_err(fail)?;

    let closed = close_lemmas(&el, &canonical);

    for (i, l) in el.lemmas.iter().enumerate() {
        let verdict = bounded_hhn(&erase(&closed[i]), opts.productivity_depth, opts.fuel);
        diagnostics.push(match verdict {
            Productivity::ProductiveTo(d) => {
                format!("productivity: {} is productive to depth {}", l.name, d)
            }
            Productivity::NotProductive(w) => format!(
                "productivity: {} is not productive (recurring evidence {})",
                l.name,
                print_evidence(&w)
            ),
            Productivity::Unknown => format!(
                "productivity: {} is unknown to depth {} (fuel exhausted)",
                l.name, opts.productivity_depth
            ),
        });
    }

    if opts.trace_steps > 0 {
        for (i, l) in el.lemmas.iter().enumerate() {
            let Ok(t0) = FirstOrderTerm::from_type(&l.ty) else {
                continue;
            };
            let (elems, _) = evidence_trace(&rules, &closed[i], opts.trace_steps, opts.fuel);
            let mut terms = vec![t0.to_string()];
            let mut cur = t0;
            for elem in &elems {
                match act(elem, &rules, &cur) {
                    Some(next) => {
                        terms.push(next.to_string());
                        cur = next;
                    }
                    None => break,
                }
            }
            diagnostics.push(format!("trace {}: {}", l.name, terms.join(" -> ")));
        }
    }

    if opts.strict_names {
        round_trip_check(&el).map_err(fail)?;
    }

    let commands: Vec<&Command> = prog
        .decls
        .iter()
        .filter_map(|d| match d {
            Decl::Command(c) => Some(c),
            _ => None,
        })
        .collect();

    let mut report = render_sections(&prog, &el);
    for c in &commands {
        let _ = writeln!(report, "{}", echo_command(c));
    }
    report.push_str("automated proof reconstruction success!\n");

    if opts.run_commands && !commands.is_empty() {
        let mut results = String::new();
        for c in &commands {
            match run_command(c, &el, &closed, &rules, opts) {
                Ok(fragment) => results.push_str(&fragment),
                Err(error) => {
                    let _ = writeln!(report, "{}", error);
                    return Err(PipelineFailure { report, error });
                }
            }
        }
        report.push_str("steps results\n");
        report.push_str(&results);
    }

    Ok(RunOutput {
        report,
        diagnostics,
    })
}

/// Closes each lemma's evidence over the lemmas declared before it, so the
/// dynamics can unfold references to earlier declarations.
pub fn close_lemmas(el: &Elaboration, canonical: &[Evidence]) -> Vec<Evidence> {
    let mut closed: Vec<Evidence> = Vec::new();
    for (i, l) in canonical.iter().enumerate() {
        let mut e = l.clone();
        for (j, c) in closed.iter().enumerate().take(i) {
            e = subst_evidence(&e, &el.lemmas[j].name, c);
        }
        closed.push(e);
    }
    closed
}

/// Proof-checks every lemma against the axioms and the lemmas before it,
/// then checks the simply-typed collapse of its erasure. Returns each
/// lemma's canonical evidence (type abstractions and instantiations made
/// explicit), which the dynamics rely on.
pub fn check_lemmas(el: &Elaboration) -> Result<Vec<Evidence>, PipelineError> {
    let mut gamma = TypeEnv::new();
    for (n, t) in el.gamma.iter() {
        if el.lemmas.iter().any(|l| &l.name == n) {
            continue;
        }
        gamma.insert(n.clone(), t.clone());
    }
    let mut canonical = Vec::new();
    for l in &el.lemmas {
        // Free type variables of the declared types stand for arbitrary
        // closed terms.
        let mut delta = el.delta.clone();
        for v in free_type_vars(&l.ty) {
            if delta.lookup(&v).is_none() {
                delta.insert(v, Kind::Star);
            }
        }
        for (_, t) in gamma.iter() {
            for v in free_type_vars(t) {
                if delta.lookup(&v).is_none() {
                    delta.insert(v, Kind::Star);
                }
            }
        }
        let canon = canonical_evidence(&delta, &gamma, &l.evidence, &l.ty).map_err(|e| {
            PipelineError::ProofCheck {
                name: l.name.clone(),
                message: e.to_string(),
            }
        })?;
        lambda_y_check(&theta_env(&gamma), &erase(&canon), &theta_type(&l.ty)).map_err(
            |e| PipelineError::Collapse {
                name: l.name.clone(),
                message: e.to_string(),
            },
        )?;
        gamma.insert(l.name.clone(), l.ty.clone());
        canonical.push(canon);
    }
    Ok(canonical)
}

/// Printer/parser coherence: every printed lemma type and body must
/// re-parse and re-print to the same bytes.
fn round_trip_check(el: &Elaboration) -> Result<(), PipelineError> {
    for l in &el.lemmas {
        let printed_ty = print_type(&l.ty);
        let again = parse_type(&printed_ty)
            .map(|t| print_type(&t))
            .map_err(|e| PipelineError::Command {
                message: format!("printed type of {} does not re-parse: {}", l.name, e),
            })?;
        if again != printed_ty {
            return Err(PipelineError::Command {
                message: format!(
                    "printed type of {} does not round-trip: {} vs {}",
                    l.name, printed_ty, again
                ),
            });
        }
        let printed = print_evidence(strip_mu(&l.name, &l.evidence));
        let again = crate::surface::parse_evidence(&printed)
            .map(|e| print_evidence(&e))
            .map_err(|e| PipelineError::Command {
                message: format!("printed evidence of {} does not re-parse: {}", l.name, e),
            })?;
        if again != printed {
            return Err(PipelineError::Command {
                message: format!(
                    "printed evidence of {} does not round-trip: {} vs {}",
                    l.name, printed, again
                ),
            });
        }
    }
    Ok(())
}

/// All report sections before `steps`.
fn render_sections(prog: &Program, el: &Elaboration) -> String {
    let mut out = String::new();
    out.push_str("rewrite rules\n");
    for d in &prog.decls {
        if let Decl::Rule { name, lhs, rhs } = d {
            let _ = writeln!(out, "{} : {} <= {}", name, print_term(lhs), print_term(rhs));
        }
    }
    out.push_str("kinds\n");
    for (c, k) in crate::surface::constant_kinds(prog) {
        let _ = writeln!(out, "{} : {}", c, k);
    }
    out.push_str("axioms\n");
    for rule in &el.rewrite.rules {
        let ty = rule_axiom_type(&rule.lhs, &rule.rhs, &rule.vars);
        let _ = writeln!(out, "{} : {}", rule.name, print_type(&ty));
    }
    for (n, t) in &el.axioms {
        let _ = writeln!(out, "{} : {}", n, print_type(t));
    }
    out.push_str("proof declarations\n");
    for l in &el.lemmas {
        if l.pre_annotated {
            continue;
        }
        let _ = writeln!(out, "{} : {} =", l.name, print_type(&l.ty));
        let _ = writeln!(out, "{}", print_evidence(strip_mu(&l.name, &l.curry)));
    }
    out.push_str("lemmas\n");
    for l in el.lemmas.iter().rev() {
        let _ = writeln!(out, "{} : {} =", l.name, print_type(&l.ty));
        let _ = writeln!(out, "  {}", print_evidence(strip_mu(&l.name, &l.evidence)));
    }
    out.push_str("steps\n");
    out
}

/// Executes one command against the checked lemmas, returning its report
/// fragment.
fn run_command(
    c: &Command,
    el: &Elaboration,
    closed: &[Evidence],
    rules: &RewriteSystem,
    opts: &PipelineOptions,
) -> Result<String, PipelineError> {
    let as_term = |t| {
        FirstOrderTerm::from_type(t).map_err(|m| PipelineError::Command {
            message: format!("the command term is not first-order: {}", m),
        })
    };
    match c {
        Command::Step { name, count } => {
            let idx = el
                .lemmas
                .iter()
                .position(|l| &l.name == name)
                .ok_or_else(|| PipelineError::Command {
                    message: format!("step {}: no such proof declaration", name),
                })?;
            let t0 = FirstOrderTerm::from_type(&el.lemmas[idx].ty).map_err(|m| {
                PipelineError::Command {
                    message: format!(
                        "step {}: the declared type is not a first-order term: {}",
                        name, m
                    ),
                }
            })?;
            // The declared term counts as term 1.
            let t = step_unfold(rules, &closed[idx], &t0, count.saturating_sub(1), opts.fuel)
                .map_err(|e| PipelineError::Command {
                    message: format!("step {}: {}", name, e),
                })?;
            Ok(format!("{}\n", t))
        }
        Command::FullTree { depth, term } => {
            let t = as_term(term)?;
            Ok(render_tree(&reduction_tree(rules, &t, *depth)))
        }
        Command::InnerSteps { count, term } => {
            let t = as_term(term)?;
            let steps = trs_innermost_steps(rules, &t, *count);
            let mut out = String::from("the execution trace is:\n");
            let _ = writeln!(out, " {}", t);
            for (rule, next) in &steps {
                let _ = writeln!(out, "-{}-> {}", rule, next);
            }
            Ok(out)
        }
    }
}

/// `tree` subcommand: the bounded reduction tree of a term under the
/// file's rules, without elaborating the file.
pub fn run_tree(src: &str, depth: usize, term_src: &str) -> Result<String, PipelineError> {
    let prog = parse_program(src).map_err(PipelineError::Parse)?;
    let rules = rules_of_program(&prog)?;
    let t = parse_term(term_src)?;
    Ok(render_tree(&reduction_tree(&rules, &t, depth)))
}

/// `inner` subcommand: leftmost-innermost steps of a term under the file's
/// rules.
pub fn run_inner(src: &str, count: usize, term_src: &str) -> Result<String, PipelineError> {
    let prog = parse_program(src).map_err(PipelineError::Parse)?;
    let rules = rules_of_program(&prog)?;
    let t = parse_term(term_src)?;
    let steps = trs_innermost_steps(&rules, &t, count);
    let mut out = String::from("the execution trace is:\n");
    let _ = writeln!(out, " {}", t);
    for (rule, next) in &steps {
        let _ = writeln!(out, "-{}-> {}", rule, next);
    }
    Ok(out)
}

fn parse_term(src: &str) -> Result<FirstOrderTerm, PipelineError> {
    let ty = parse_type(src).map_err(PipelineError::Parse)?;
    FirstOrderTerm::from_type(&ty).map_err(|m| PipelineError::Command {
        message: format!("the command term is not first-order: {}", m),
    })
}
