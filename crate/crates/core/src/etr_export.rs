//! Constraint system over the reals characterizing constrained stationary
//! equilibria for a fixed support, with emission to SMT-LIB2 (QF_NRA) for
//! external solvers and exact evaluation of candidate assignments.
//!
//! Variables: `p.v.w` per edge, `r.i.v` per player and vertex, `g.v.w` per
//! support edge; every polynomial has degree at most 2.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::evaluate::{expected_payoffs, EvalError};
use crate::model::{Game, Owner, PlayerId, ProfileError, StationaryProfile, VertexId};
use crate::rational::Rat;

#[derive(Debug, Error)]
pub enum EtrError {
    #[error("support misses controlled vertex `{0}`")]
    MissingSupportRow(String),
    #[error("support row at `{vertex}` uses `{to}`, which is not an out-edge")]
    SupportNotAnEdge { vertex: String, to: String },
    #[error("support names unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("support row at `{0}` is empty")]
    EmptySupportRow(String),
    #[error("missing threshold for player `{0}`")]
    MissingThreshold(String),
    #[error("assignment misses variable `{0}`")]
    MissingVariable(String),
    #[error("cannot parse SMT-LIB input: {0}")]
    Parse(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A system variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Var {
    /// Edge probability p.v.w
    P(VertexId, VertexId),
    /// Player value r.i.v
    R(PlayerId, VertexId),
    /// Patience witness g.v.w = 1/p.v.w
    G(VertexId, VertexId),
}

impl Var {
    /// Canonical variable name used in emitted files and assignments.
    pub fn name(&self) -> String {
        match self {
            Var::P(v, w) => format!("p.{v}.{w}"),
            Var::R(i, v) => format!("r.{i}.{v}"),
            Var::G(v, w) => format!("g.{v}.{w}"),
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// coeff * product(vars), degree at most 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub coeff: Rat,
    pub vars: Vec<Var>,
}

/// Sum of terms plus a constant.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Poly {
    pub terms: Vec<Term>,
    pub constant: Rat,
}

impl Poly {
    fn linear(coeff: Rat, var: Var) -> Poly {
        Poly {
            terms: vec![Term {
                coeff,
                vars: vec![var],
            }],
            constant: Rat::zero(),
        }
    }

    fn push(&mut self, coeff: Rat, vars: Vec<Var>) {
        self.terms.push(Term { coeff, vars });
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.vars.len()).max().unwrap_or(0)
    }

    /// Exact evaluation under a name-keyed assignment.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<Rat>) -> Result<Rat, EtrError> {
        let mut acc = self.constant.clone();
        for t in &self.terms {
            let mut prod = t.coeff.clone();
            for v in &t.vars {
                let name = v.name();
                let val = lookup(&name).ok_or(EtrError::MissingVariable(name))?;
                prod *= val;
            }
            acc += prod;
        }
        Ok(acc)
    }
}

/// Relation of a constraint polynomial to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    /// poly = 0
    Zero,
    /// poly > 0
    Positive,
    /// poly >= 0
    NonNegative,
}

impl Rel {
    pub fn holds(&self, value: &Rat) -> bool {
        match self {
            Rel::Zero => value.is_zero(),
            Rel::Positive => value.is_positive(),
            Rel::NonNegative => !value.is_negative(),
        }
    }
}

/// Which clause of the system a constraint instantiates.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConstraintTag {
    /// Clauses 1..=10 of the support-fixed system.
    Numbered(u8),
    LowerThreshold(PlayerId),
    UpperThreshold(PlayerId),
}

impl fmt::Display for ConstraintTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintTag::Numbered(k) => write!(f, "constraint {k}"),
            ConstraintTag::LowerThreshold(p) => write!(f, "lower threshold ({p})"),
            ConstraintTag::UpperThreshold(p) => write!(f, "upper threshold ({p})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EtrConstraint {
    pub tag: ConstraintTag,
    /// Instantiation site, e.g. `p[c1->d1]` or `diamond@c1->g1`.
    pub detail: String,
    pub rel: Rel,
    pub poly: Poly,
}

/// Identifier of a (violated) constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintRef {
    pub tag: ConstraintTag,
    pub detail: String,
}

impl fmt::Display for ConstraintRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]", self.tag, self.detail)
    }
}

/// The full system for one support choice.
#[derive(Debug, Clone)]
pub struct EtrSystem {
    pub variables: Vec<Var>,
    pub constraints: Vec<EtrConstraint>,
}

impl EtrSystem {
    pub fn variable_count(&self) -> usize {
        self.variables.len()
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    pub fn max_degree(&self) -> usize {
        self.constraints
            .iter()
            .map(|c| c.poly.degree())
            .max()
            .unwrap_or(0)
    }
}

/// Support choice: per controlled vertex, the successors allowed positive
/// probability.
pub type Support = BTreeMap<VertexId, BTreeSet<VertexId>>;

struct Edges {
    /// All edges in declaration order, as (from, to) indices.
    all: Vec<(usize, usize)>,
    /// Support edges: controlled support plus positive chance edges.
    in_support: BTreeSet<(usize, usize)>,
}

fn collect_edges(g: &Game, support: &Support) -> Result<Edges, EtrError> {
    let mut all = Vec::new();
    let mut in_support = BTreeSet::new();
    for (vid, row) in support {
        let v = g
            .vertex_index(vid)
            .ok_or_else(|| EtrError::UnknownVertex(vid.as_str().to_string()))?;
        if !matches!(g.owner(v), Owner::Player(_)) {
            return Err(EtrError::SupportNotAnEdge {
                vertex: vid.as_str().to_string(),
                to: "-".into(),
            });
        }
        if row.is_empty() {
            return Err(EtrError::EmptySupportRow(vid.as_str().to_string()));
        }
        for wid in row {
            let w = g
                .vertex_index(wid)
                .filter(|w| g.successors(v).contains(w))
                .ok_or_else(|| EtrError::SupportNotAnEdge {
                    vertex: vid.as_str().to_string(),
                    to: wid.as_str().to_string(),
                })?;
            in_support.insert((v, w));
        }
    }
    for v in 0..g.vertex_count() {
        match g.owner(v) {
            Owner::Player(_) => {
                if !support.contains_key(g.vertex_id(v)) {
                    return Err(EtrError::MissingSupportRow(
                        g.vertex_id(v).as_str().to_string(),
                    ));
                }
            }
            Owner::Chance => {
                let row = g.chance_row(v).unwrap_or(&[]);
                for (pos, &w) in g.successors(v).iter().enumerate() {
                    if row.get(pos).map(|p| p.is_positive()).unwrap_or(false) {
                        in_support.insert((v, w));
                    }
                }
            }
            Owner::Terminal => {}
        }
        for &w in g.successors(v) {
            all.push((v, w));
        }
    }
    Ok(Edges { all, in_support })
}

/// Vertices from which a terminal is reachable through support edges.
fn support_reach(g: &Game, edges: &Edges) -> Vec<bool> {
    let n = g.vertex_count();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(v, w) in &edges.in_support {
        preds[w].push(v);
    }
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for t in g.terminals() {
        seen[t] = true;
        queue.push_back(t);
    }
    while let Some(v) = queue.pop_front() {
        for &u in &preds[v] {
            if !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    seen
}

fn edge_detail(g: &Game, v: usize, w: usize) -> String {
    format!("p[{}->{}]", g.vertex_id(v), g.vertex_id(w))
}

/// Builds the degree-2 system for the chosen support and payoff thresholds:
/// clause groups 1..10 in order, then the per-player threshold bounds on the
/// value at the initial vertex.
pub fn build_etr(
    g: &Game,
    lower: &BTreeMap<PlayerId, Rat>,
    upper: &BTreeMap<PlayerId, Rat>,
    support: &Support,
) -> Result<EtrSystem, EtrError> {
    for p in g.players() {
        if !lower.contains_key(p) || !upper.contains_key(p) {
            return Err(EtrError::MissingThreshold(p.as_str().to_string()));
        }
    }
    let edges = collect_edges(g, support)?;
    let reach = support_reach(g, &edges);
    let pvar = |v: usize, w: usize| Var::P(g.vertex_id(v).clone(), g.vertex_id(w).clone());
    let rvar = |i: &PlayerId, v: usize| Var::R(i.clone(), g.vertex_id(v).clone());
    let gvar = |v: usize, w: usize| Var::G(g.vertex_id(v).clone(), g.vertex_id(w).clone());

    let mut variables: Vec<Var> = Vec::new();
    for &(v, w) in &edges.all {
        variables.push(pvar(v, w));
    }
    for i in g.players() {
        for v in 0..g.vertex_count() {
            variables.push(rvar(i, v));
        }
    }
    for &(v, w) in &edges.in_support {
        variables.push(gvar(v, w));
    }

    let mut constraints = Vec::new();
    // 1 and 2: support probabilities are positive and at most one.
    for &(v, w) in &edges.in_support {
        constraints.push(EtrConstraint {
            tag: ConstraintTag::Numbered(1),
            detail: edge_detail(g, v, w),
            rel: Rel::Positive,
            poly: Poly::linear(Rat::one(), pvar(v, w)),
        });
    }
    for &(v, w) in &edges.in_support {
        constraints.push(EtrConstraint {
            tag: ConstraintTag::Numbered(2),
            detail: edge_detail(g, v, w),
            rel: Rel::NonNegative,
            poly: Poly {
                terms: vec![Term {
                    coeff: -Rat::one(),
                    vars: vec![pvar(v, w)],
                }],
                constant: Rat::one(),
            },
        });
    }
    // 3: everything off the support is zero.
    for &(v, w) in &edges.all {
        if !edges.in_support.contains(&(v, w)) {
            constraints.push(EtrConstraint {
                tag: ConstraintTag::Numbered(3),
                detail: edge_detail(g, v, w),
                rel: Rel::Zero,
                poly: Poly::linear(Rat::one(), pvar(v, w)),
            });
        }
    }
    // 4: controlled rows are distributions.
    for v in 0..g.vertex_count() {
        if matches!(g.owner(v), Owner::Player(_)) {
            let mut poly = Poly {
                terms: Vec::new(),
                constant: -Rat::one(),
            };
            for &w in g.successors(v) {
                poly.push(Rat::one(), vec![pvar(v, w)]);
            }
            constraints.push(EtrConstraint {
                tag: ConstraintTag::Numbered(4),
                detail: g.vertex_id(v).as_str().to_string(),
                rel: Rel::Zero,
                poly,
            });
        }
    }
    // 5: chance rows are pinned to the game.
    for v in 0..g.vertex_count() {
        if g.is_chance(v) {
            for &w in g.successors(v) {
                let prob = g.chance_prob(v, w).cloned().unwrap_or_else(Rat::zero);
                constraints.push(EtrConstraint {
                    tag: ConstraintTag::Numbered(5),
                    detail: edge_detail(g, v, w),
                    rel: Rel::Zero,
                    poly: Poly {
                        terms: vec![Term {
                            coeff: Rat::one(),
                            vars: vec![pvar(v, w)],
                        }],
                        constant: -prob,
                    },
                });
            }
        }
    }
    // 6: terminal values are the rewards.
    for i in g.players() {
        let pi = g.player_index(i).unwrap();
        for t in g.terminals() {
            constraints.push(EtrConstraint {
                tag: ConstraintTag::Numbered(6),
                detail: format!("{i}@{}", g.vertex_id(t)),
                rel: Rel::Zero,
                poly: Poly {
                    terms: vec![Term {
                        coeff: Rat::one(),
                        vars: vec![rvar(i, t)],
                    }],
                    constant: -g.reward(t, pi),
                },
            });
        }
    }
    // 7: values vanish where no terminal is reachable through the support.
    for i in g.players() {
        for v in 0..g.vertex_count() {
            if !reach[v] {
                constraints.push(EtrConstraint {
                    tag: ConstraintTag::Numbered(7),
                    detail: format!("{i}@{}", g.vertex_id(v)),
                    rel: Rel::Zero,
                    poly: Poly::linear(Rat::one(), rvar(i, v)),
                });
            }
        }
    }
    // 8: one-step value recurrence inside the reachable support.
    for i in g.players() {
        for v in 0..g.vertex_count() {
            if reach[v] && !g.is_terminal(v) {
                let mut poly = Poly::linear(Rat::one(), rvar(i, v));
                for &w in g.successors(v) {
                    poly.push(-Rat::one(), vec![pvar(v, w), rvar(i, w)]);
                }
                constraints.push(EtrConstraint {
                    tag: ConstraintTag::Numbered(8),
                    detail: format!("{i}@{}", g.vertex_id(v)),
                    rel: Rel::Zero,
                    poly,
                });
            }
        }
    }
    // 9: owners cannot improve along any out-edge.
    for v in 0..g.vertex_count() {
        if let Owner::Player(i) = g.owner(v) {
            for &w in g.successors(v) {
                let mut poly = Poly::linear(Rat::one(), rvar(i, v));
                poly.push(-Rat::one(), vec![rvar(i, w)]);
                constraints.push(EtrConstraint {
                    tag: ConstraintTag::Numbered(9),
                    detail: format!("{i}@{}->{}", g.vertex_id(v), g.vertex_id(w)),
                    rel: Rel::NonNegative,
                    poly,
                });
            }
        }
    }
    // 10: patience witnesses g = 1/p.
    for &(v, w) in &edges.in_support {
        constraints.push(EtrConstraint {
            tag: ConstraintTag::Numbered(10),
            detail: edge_detail(g, v, w),
            rel: Rel::Zero,
            poly: Poly {
                terms: vec![Term {
                    coeff: Rat::one(),
                    vars: vec![gvar(v, w), pvar(v, w)],
                }],
                constant: -Rat::one(),
            },
        });
    }
    // Threshold bounds on the value at the initial vertex.
    let v0 = g.initial();
    for i in g.players() {
        constraints.push(EtrConstraint {
            tag: ConstraintTag::LowerThreshold(i.clone()),
            detail: i.as_str().to_string(),
            rel: Rel::NonNegative,
            poly: Poly {
                terms: vec![Term {
                    coeff: Rat::one(),
                    vars: vec![rvar(i, v0)],
                }],
                constant: -lower[i].clone(),
            },
        });
        constraints.push(EtrConstraint {
            tag: ConstraintTag::UpperThreshold(i.clone()),
            detail: i.as_str().to_string(),
            rel: Rel::NonNegative,
            poly: Poly {
                terms: vec![Term {
                    coeff: -Rat::one(),
                    vars: vec![rvar(i, v0)],
                }],
                constant: upper[i].clone(),
            },
        });
    }
    Ok(EtrSystem {
        variables,
        constraints,
    })
}

/// Exact check of a total assignment; returns the violated constraints.
pub fn check_assignment(
    sys: &EtrSystem,
    assignment: &BTreeMap<String, Rat>,
) -> Result<Vec<ConstraintRef>, EtrError> {
    for v in &sys.variables {
        if !assignment.contains_key(&v.name()) {
            return Err(EtrError::MissingVariable(v.name()));
        }
    }
    let lookup = |name: &str| assignment.get(name).cloned();
    let mut out = Vec::new();
    for c in &sys.constraints {
        let value = c.poly.eval(&lookup)?;
        if !c.rel.holds(&value) {
            out.push(ConstraintRef {
                tag: c.tag.clone(),
                detail: c.detail.clone(),
            });
        }
    }
    Ok(out)
}

/// The assignment a full profile induces: p from the rows (chance from the
/// game), r from the exact value tables, g as the reciprocal of the support
/// probabilities.
pub fn induced_assignment(
    g: &Game,
    profile: &StationaryProfile,
) -> Result<BTreeMap<String, Rat>, EtrError> {
    let compiled = profile.compile(g, true)?;
    let values = expected_payoffs(g, profile)?;
    let mut out = BTreeMap::new();
    for v in 0..g.vertex_count() {
        let row: BTreeMap<usize, Rat> = match g.owner(v) {
            Owner::Terminal => BTreeMap::new(),
            Owner::Chance => g
                .successors(v)
                .iter()
                .enumerate()
                .map(|(pos, &w)| (w, g.chance_row(v).unwrap()[pos].clone()))
                .collect(),
            Owner::Player(_) => compiled.row(v).unwrap_or(&[]).iter().cloned().collect(),
        };
        for &w in g.successors(v) {
            let p = row.get(&w).cloned().unwrap_or_else(Rat::zero);
            if p.is_positive() {
                out.insert(
                    Var::G(g.vertex_id(v).clone(), g.vertex_id(w).clone()).name(),
                    Rat::one() / p.clone(),
                );
            }
            out.insert(
                Var::P(g.vertex_id(v).clone(), g.vertex_id(w).clone()).name(),
                p,
            );
        }
    }
    for (i, table) in &values.tables {
        for (vid, r) in table {
            out.insert(Var::R(i.clone(), vid.clone()).name(), r.clone());
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// SMT-LIB2 emission
// ---------------------------------------------------------------------------

fn smt_symbol(name: &str) -> String {
    format!("|{name}|")
}

fn smt_rational(x: &Rat) -> String {
    let body = if x.denom().is_one() {
        x.numer().magnitude().to_string()
    } else {
        format!("(/ {} {})", x.numer().magnitude(), x.denom())
    };
    if x.is_negative() {
        format!("(- {body})")
    } else {
        body
    }
}

fn smt_term(t: &Term) -> String {
    let mut parts = Vec::new();
    if !t.coeff.is_one() || t.vars.is_empty() {
        parts.push(smt_rational(&t.coeff));
    }
    for v in &t.vars {
        parts.push(smt_symbol(&v.name()));
    }
    if parts.len() == 1 {
        parts.pop().unwrap()
    } else {
        format!("(* {})", parts.join(" "))
    }
}

fn smt_poly(p: &Poly) -> String {
    let mut parts: Vec<String> = p.terms.iter().map(smt_term).collect();
    if !p.constant.is_zero() || parts.is_empty() {
        parts.push(smt_rational(&p.constant));
    }
    if parts.len() == 1 {
        parts.pop().unwrap()
    } else {
        format!("(+ {})", parts.join(" "))
    }
}

/// Deterministic SMT-LIB2 rendering: one real per variable, assertions in
/// clause order, each preceded by its tag comment, `(check-sat)` last.
pub fn emit_smtlib(sys: &EtrSystem) -> String {
    let mut out = String::new();
    out.push_str("(set-logic QF_NRA)\n");
    for v in &sys.variables {
        out.push_str(&format!("(declare-const {} Real)\n", smt_symbol(&v.name())));
    }
    for c in &sys.constraints {
        match &c.tag {
            ConstraintTag::Numbered(k) => {
                out.push_str(&format!("; paper-constraint {k} {}\n", c.detail));
            }
            ConstraintTag::LowerThreshold(p) => {
                out.push_str(&format!("; threshold lower {p}\n"));
            }
            ConstraintTag::UpperThreshold(p) => {
                out.push_str(&format!("; threshold upper {p}\n"));
            }
        }
        let op = match c.rel {
            Rel::Zero => "=",
            Rel::Positive => ">",
            Rel::NonNegative => ">=",
        };
        out.push_str(&format!("(assert ({op} {} 0))\n", smt_poly(&c.poly)));
    }
    out.push_str("(check-sat)\n");
    out
}

// ---------------------------------------------------------------------------
// SMT-LIB2 reading (the emitted subset)
// ---------------------------------------------------------------------------

/// Polynomial over opaque variable names, produced by the reader.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedPoly {
    /// coefficient * product of named variables
    pub terms: Vec<(Rat, Vec<String>)>,
    pub constant: Rat,
}

impl ParsedPoly {
    fn constant(c: Rat) -> Self {
        ParsedPoly {
            terms: Vec::new(),
            constant: c,
        }
    }

    fn var(name: String) -> Self {
        ParsedPoly {
            terms: vec![(Rat::one(), vec![name])],
            constant: Rat::zero(),
        }
    }

    fn add(mut self, other: ParsedPoly) -> Self {
        self.terms.extend(other.terms);
        self.constant += other.constant;
        self
    }

    fn negate(mut self) -> Self {
        for (c, _) in self.terms.iter_mut() {
            *c = -c.clone();
        }
        self.constant = -self.constant.clone();
        self
    }

    fn mul(self, other: &ParsedPoly) -> Self {
        let mut out = ParsedPoly::constant(&self.constant * &other.constant);
        for (c, vs) in &self.terms {
            out.terms.push((c * &other.constant, vs.clone()));
        }
        for (c, vs) in &other.terms {
            out.terms.push((c * &self.constant, vs.clone()));
        }
        for (c1, v1) in &self.terms {
            for (c2, v2) in &other.terms {
                let mut vars = v1.clone();
                vars.extend(v2.iter().cloned());
                out.terms.push((c1 * c2, vars));
            }
        }
        out
    }

    pub fn eval(&self, assignment: &BTreeMap<String, Rat>) -> Result<Rat, EtrError> {
        let mut acc = self.constant.clone();
        for (c, vars) in &self.terms {
            let mut prod = c.clone();
            for v in vars {
                prod *= assignment
                    .get(v)
                    .cloned()
                    .ok_or_else(|| EtrError::MissingVariable(v.clone()))?;
            }
            acc += prod;
        }
        Ok(acc)
    }
}

/// An assertion read back from an emitted document.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAssert {
    pub rel: Rel,
    pub poly: ParsedPoly,
}

/// The subset of SMT-LIB the emitter produces, read back in.
#[derive(Debug, Clone, Default)]
pub struct ParsedSystem {
    pub variables: Vec<String>,
    pub asserts: Vec<ParsedAssert>,
}

impl ParsedSystem {
    /// Indices of asserts violated by an assignment.
    pub fn violated(&self, assignment: &BTreeMap<String, Rat>) -> Result<Vec<usize>, EtrError> {
        let mut out = Vec::new();
        for (i, a) in self.asserts.iter().enumerate() {
            if !a.rel.holds(&a.poly.eval(assignment)?) {
                out.push(i);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SExpr {
    Atom(String),
    List(Vec<SExpr>),
}

fn tokenize(text: &str) -> Result<Vec<String>, EtrError> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            ';' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '(' => tokens.push("(".to_string()),
            ')' => tokens.push(")".to_string()),
            '|' => {
                let mut sym = String::from("|");
                let mut closed = false;
                for c in chars.by_ref() {
                    sym.push(c);
                    if c == '|' {
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    return Err(EtrError::Parse("unterminated quoted symbol".into()));
                }
                tokens.push(sym);
            }
            c if c.is_whitespace() => {}
            c => {
                let mut atom = String::new();
                atom.push(c);
                while let Some(&next) = chars.peek() {
                    if next.is_whitespace() || next == '(' || next == ')' || next == ';' {
                        break;
                    }
                    atom.push(next);
                    chars.next();
                }
                tokens.push(atom);
            }
        }
    }
    Ok(tokens)
}

fn parse_sexprs(tokens: &[String]) -> Result<Vec<SExpr>, EtrError> {
    let mut stack: Vec<Vec<SExpr>> = vec![Vec::new()];
    for t in tokens {
        match t.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                let done = stack
                    .pop()
                    .ok_or_else(|| EtrError::Parse("unbalanced parentheses".into()))?;
                stack
                    .last_mut()
                    .ok_or_else(|| EtrError::Parse("unbalanced parentheses".into()))?
                    .push(SExpr::List(done));
            }
            atom => stack
                .last_mut()
                .ok_or_else(|| EtrError::Parse("unbalanced parentheses".into()))?
                .push(SExpr::Atom(atom.to_string())),
        }
    }
    if stack.len() != 1 {
        return Err(EtrError::Parse("unbalanced parentheses".into()));
    }
    Ok(stack.pop().unwrap())
}

fn unquote(sym: &str) -> String {
    sym.trim_matches('|').to_string()
}

fn expr_to_poly(e: &SExpr) -> Result<ParsedPoly, EtrError> {
    match e {
        SExpr::Atom(a) => {
            if let Ok(n) = a.parse::<num_bigint::BigInt>() {
                Ok(ParsedPoly::constant(Rat::from_integer(n)))
            } else {
                Ok(ParsedPoly::var(unquote(a)))
            }
        }
        SExpr::List(items) => {
            let head = match items.first() {
                Some(SExpr::Atom(op)) => op.as_str(),
                _ => return Err(EtrError::Parse("expected operator".into())),
            };
            let args: Vec<ParsedPoly> = items[1..]
                .iter()
                .map(expr_to_poly)
                .collect::<Result<_, _>>()?;
            match head {
                "+" => Ok(args
                    .into_iter()
                    .fold(ParsedPoly::default(), |a, b| a.add(b))),
                "-" => {
                    let mut it = args.into_iter();
                    let first = it
                        .next()
                        .ok_or_else(|| EtrError::Parse("empty subtraction".into()))?;
                    let rest: Vec<ParsedPoly> = it.collect();
                    if rest.is_empty() {
                        Ok(first.negate())
                    } else {
                        Ok(rest.into_iter().fold(first, |a, b| a.add(b.negate())))
                    }
                }
                "*" => {
                    let mut it = args.into_iter();
                    let first = it
                        .next()
                        .ok_or_else(|| EtrError::Parse("empty product".into()))?;
                    Ok(it.fold(first, |a, b| a.mul(&b)))
                }
                "/" => {
                    // Only numeral division appears in emitted documents.
                    if args.len() != 2 || !args[0].terms.is_empty() || !args[1].terms.is_empty() {
                        return Err(EtrError::Parse("unsupported division".into()));
                    }
                    if args[1].constant.is_zero() {
                        return Err(EtrError::Parse("division by zero".into()));
                    }
                    Ok(ParsedPoly::constant(&args[0].constant / &args[1].constant))
                }
                other => Err(EtrError::Parse(format!("unsupported operator `{other}`"))),
            }
        }
    }
}

/// Reads back documents produced by [`emit_smtlib`].
pub fn parse_smtlib(text: &str) -> Result<ParsedSystem, EtrError> {
    let tokens = tokenize(text)?;
    let exprs = parse_sexprs(&tokens)?;
    let mut sys = ParsedSystem::default();
    for e in exprs {
        let SExpr::List(items) = e else {
            return Err(EtrError::Parse("expected a command list".into()));
        };
        let head = match items.first() {
            Some(SExpr::Atom(h)) => h.as_str(),
            _ => return Err(EtrError::Parse("expected a command".into())),
        };
        match head {
            "set-logic" | "check-sat" | "set-info" => {}
            "declare-const" => {
                let SExpr::Atom(name) = &items[1] else {
                    return Err(EtrError::Parse("expected a symbol".into()));
                };
                sys.variables.push(unquote(name));
            }
            "assert" => {
                let SExpr::List(body) = &items[1] else {
                    return Err(EtrError::Parse("expected a relation".into()));
                };
                let SExpr::Atom(op) = &body[0] else {
                    return Err(EtrError::Parse("expected an operator".into()));
                };
                let rel = match op.as_str() {
                    "=" => Rel::Zero,
                    ">" => Rel::Positive,
                    ">=" => Rel::NonNegative,
                    other => {
                        return Err(EtrError::Parse(format!("unsupported relation `{other}`")))
                    }
                };
                if body.len() != 3 {
                    return Err(EtrError::Parse("expected binary relation".into()));
                }
                let lhs = expr_to_poly(&body[1])?;
                let rhs = expr_to_poly(&body[2])?;
                sys.asserts.push(ParsedAssert {
                    rel,
                    poly: lhs.add(rhs.negate()),
                });
            }
            other => return Err(EtrError::Parse(format!("unsupported command `{other}`"))),
        }
    }
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::expected_payoffs;
    use crate::generators::{build_gn, gn_exact_ne};
    use crate::rational::{rat, rint};

    fn gn1_setup() -> (
        Game,
        StationaryProfile,
        BTreeMap<PlayerId, Rat>,
        BTreeMap<PlayerId, Rat>,
        Support,
    ) {
        let g = build_gn(1).unwrap();
        let sigma = gn_exact_ne(1).unwrap();
        let payoffs = expected_payoffs(&g, &sigma).unwrap().payoffs;
        let lower: BTreeMap<PlayerId, Rat> = payoffs.clone().into_iter().collect();
        let upper = lower.clone();
        let support = sigma.support(&g).unwrap();
        (g, sigma, lower, upper, support)
    }

    #[test]
    fn known_equilibrium_satisfies_the_system() {
        let (g, sigma, lower, upper, support) = gn1_setup();
        let sys = build_etr(&g, &lower, &upper, &support).unwrap();
        assert_eq!(sys.max_degree(), 2);
        let assignment = induced_assignment(&g, &sigma).unwrap();
        assert!(check_assignment(&sys, &assignment).unwrap().is_empty());
        // alpha_1 = 1/4 sits in the assignment.
        assert_eq!(assignment["p.r1.t1"], rat(1, 4));
        assert_eq!(assignment["g.r1.t1"], rint(4));
    }

    #[test]
    fn census_matches_independent_count() {
        let g = build_gn(2).unwrap();
        let sigma = gn_exact_ne(2).unwrap();
        let support = sigma.support(&g).unwrap();
        let zeros: BTreeMap<PlayerId, Rat> =
            g.players().iter().map(|p| (p.clone(), rint(0))).collect();
        let sys = build_etr(&g, &zeros, &zeros, &support).unwrap();
        // p per edge, r per player and vertex, g per support edge (controlled
        // support plus positive chance edges).
        let m = g.edge_count();
        let n = g.vertex_count();
        let players = g.players().len();
        let support_edges: usize = support.values().map(|s| s.len()).sum::<usize>()
            + (0..n)
                .filter(|&v| g.is_chance(v))
                .map(|v| {
                    g.chance_row(v)
                        .unwrap()
                        .iter()
                        .filter(|p| num_traits::Signed::is_positive(*p))
                        .count()
                })
                .sum::<usize>();
        assert_eq!(sys.variable_count(), m + n * players + support_edges);
        // Constraint census: 1,2,10 per support edge; 3 per non-support
        // edge; 4 per controlled vertex; 5 per chance edge; 6 per player and
        // terminal; 7/8 partition players x vertices by reachability (all
        // reachable here); 9 per controlled edge and owner; 2 thresholds per
        // player.
        let controlled = g.controlled_vertices();
        let chance_edges: usize = (0..n)
            .filter(|&v| g.is_chance(v))
            .map(|v| g.successors(v).len())
            .sum();
        let controlled_edges: usize = controlled.iter().map(|&v| g.successors(v).len()).sum();
        let terminals = g.terminals().len();
        let expected = 3 * support_edges
            + (m - support_edges)
            + controlled.len()
            + chance_edges
            + players * terminals
            + players * (n - terminals)
            + controlled_edges
            + 2 * players;
        assert_eq!(sys.constraint_count(), expected);
    }

    #[test]
    fn contradictory_thresholds_reject_everything() {
        let (g, sigma, lower, _, support) = gn1_setup();
        let mut bad_upper = lower.clone();
        for v in bad_upper.values_mut() {
            *v -= rint(1);
        }
        let sys = build_etr(&g, &lower, &bad_upper, &support).unwrap();
        let assignment = induced_assignment(&g, &sigma).unwrap();
        let violated = check_assignment(&sys, &assignment).unwrap();
        assert!(violated
            .iter()
            .any(|c| matches!(c.tag, ConstraintTag::UpperThreshold(_))));
    }

    #[test]
    fn corrupted_assignments_hit_the_right_clauses() {
        let (g, sigma, lower, upper, support) = gn1_setup();
        let sys = build_etr(&g, &lower, &upper, &support).unwrap();
        let clean = induced_assignment(&g, &sigma).unwrap();

        // Zeroing a support probability violates clause 1 (and friends).
        let mut zeroed = clean.clone();
        zeroed.insert("p.r1.t1".into(), rint(0));
        let violated = check_assignment(&sys, &zeroed).unwrap();
        assert!(violated
            .iter()
            .any(|c| matches!(c.tag, ConstraintTag::Numbered(1)) && c.detail.contains("r1")));

        // Breaking g * p = 1 violates clause 10.
        let mut broken = clean.clone();
        broken.insert("g.r1.t1".into(), rint(5));
        let violated = check_assignment(&sys, &broken).unwrap();
        assert_eq!(violated.len(), 1);
        assert!(matches!(violated[0].tag, ConstraintTag::Numbered(10)));

        // Missing variables are an error, not a violation.
        let mut partial = clean;
        partial.remove("p.r1.t1");
        assert!(matches!(
            check_assignment(&sys, &partial),
            Err(EtrError::MissingVariable(_))
        ));
    }

    #[test]
    fn emitted_document_round_trips() {
        let (g, sigma, lower, upper, support) = gn1_setup();
        let sys = build_etr(&g, &lower, &upper, &support).unwrap();
        let text = emit_smtlib(&sys);
        assert!(text.starts_with("(set-logic QF_NRA)\n"));
        assert!(text.trim_end().ends_with("(check-sat)"));
        assert!(text.contains("; paper-constraint 8"));
        let parsed = parse_smtlib(&text).unwrap();
        assert_eq!(parsed.variables.len(), sys.variable_count());
        assert_eq!(parsed.asserts.len(), sys.constraint_count());

        // The parsed system agrees with the in-memory one, assignment by
        // assignment: satisfied stays satisfied, violations land on the
        // same constraint indices.
        let clean = induced_assignment(&g, &sigma).unwrap();
        assert!(parsed.violated(&clean).unwrap().is_empty());
        let mut broken = clean.clone();
        broken.insert("g.r1.t1".into(), rint(5));
        let mem_violated = check_assignment(&sys, &broken).unwrap();
        let parsed_violated = parsed.violated(&broken).unwrap();
        assert_eq!(mem_violated.len(), parsed_violated.len());
        for ix in parsed_violated {
            let c = &sys.constraints[ix];
            assert!(matches!(c.tag, ConstraintTag::Numbered(10)));
        }
    }

    #[test]
    fn empty_system_emits_a_bare_document() {
        let sys = EtrSystem {
            variables: vec![Var::P(VertexId::from("a"), VertexId::from("b"))],
            constraints: Vec::new(),
        };
        let text = emit_smtlib(&sys);
        assert_eq!(
            text,
            "(set-logic QF_NRA)\n(declare-const |p.a.b| Real)\n(check-sat)\n"
        );
    }

    #[test]
    fn emission_is_deterministic() {
        let (g, _, lower, upper, support) = gn1_setup();
        let a = emit_smtlib(&build_etr(&g, &lower, &upper, &support).unwrap());
        let b = emit_smtlib(&build_etr(&g, &lower, &upper, &support).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn support_validation_errors() {
        let (g, _, lower, upper, mut support) = gn1_setup();
        let full = support.clone();
        support.remove(&VertexId::from("c1"));
        assert!(matches!(
            build_etr(&g, &lower, &upper, &support),
            Err(EtrError::MissingSupportRow(_))
        ));
        let mut bad = full;
        bad.get_mut(&VertexId::from("c1"))
            .unwrap()
            .insert(VertexId::from("t0"));
        assert!(matches!(
            build_etr(&g, &lower, &upper, &bad),
            Err(EtrError::SupportNotAnEdge { .. })
        ));
    }
}
