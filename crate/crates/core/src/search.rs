//! Desk-scale search for constrained epsilon-equilibria: every candidate a
//! source produces is re-verified exactly before it is ever returned, so
//! the numerics can be as heuristic as they like without risking a false
//! positive.
//!
//! Sources: externally supplied candidate profiles, exhaustive enumeration
//! of pure profiles, per-support damped Newton on the indifference system,
//! and seeded random restarts.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::evaluate::{expected_payoffs, EvalError};
use crate::linalg::solve_dense;
use crate::model::{Game, Owner, PlayerId, ProfileError, StationaryProfile, VertexId};
use crate::rational::{rat, round_down_dyadic, Rat};
use crate::verify::{verify_constrained, VerificationReport, VerifyError};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("epsilon must be positive")]
    BadEpsilon,
    #[error("support misses controlled vertex `{0}`")]
    MissingSupportRow(String),
    #[error("support row at `{vertex}` uses `{to}`, which is not an out-edge")]
    SupportNotAnEdge { vertex: String, to: String },
    #[error("Jacobian singular at the starting point")]
    SingularJacobian,
}

/// Candidate source.
#[derive(Debug, Clone)]
pub enum SearchMode {
    /// Verify externally supplied profiles in order.
    Candidates(Vec<StationaryProfile>),
    /// All pure profiles: controlled vertices in id order, successors in id
    /// order, last vertex varying fastest.
    PureEnumeration,
    /// Supports by increasing total size (lexicographic within a size),
    /// solved by damped Newton on the indifference system.
    SupportNewton,
    /// Seeded random full-support rows with small dyadic weights.
    RandomRestart,
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub mode: SearchMode,
    /// Maximum number of candidates to try.
    pub budget: u64,
    pub epsilon: Rat,
    pub seed: u64,
}

#[derive(Debug)]
pub enum SearchOutcome {
    Found {
        candidates_tried: u64,
        profile: StationaryProfile,
        report: VerificationReport,
    },
    Exhausted {
        candidates_tried: u64,
        /// Smallest maximum deviation margin seen across fully verified
        /// candidates; None only when nothing was tried.
        best_margin: Option<Rat>,
    },
}

#[derive(Debug)]
pub enum NewtonOutcome {
    /// Converged and passed exact re-verification at the tolerance.
    Converged {
        profile: StationaryProfile,
        report: VerificationReport,
    },
    /// Did not converge, left the domain, or failed re-verification.
    NoConvergence,
}

/// Searches for a profile accepted by `verify_constrained` at
/// `cfg.epsilon`. Deterministic for fixed inputs and seed.
pub fn search_constrained_ne(
    g: &Game,
    lower: &BTreeMap<PlayerId, Rat>,
    upper: &BTreeMap<PlayerId, Rat>,
    cfg: &SearchConfig,
) -> Result<SearchOutcome, SearchError> {
    if cfg.budget == 0 {
        return Err(SearchError::ZeroBudget);
    }
    if !cfg.epsilon.is_positive() {
        return Err(SearchError::BadEpsilon);
    }
    let mut driver = Driver {
        g,
        lower,
        upper,
        epsilon: cfg.epsilon.clone(),
        budget: cfg.budget,
        tried: 0,
        best_margin: None,
        first_candidate: None,
        found: None,
    };
    match &cfg.mode {
        SearchMode::Candidates(list) => {
            for profile in list {
                if driver.offer(profile.clone())? {
                    break;
                }
            }
        }
        SearchMode::PureEnumeration => {
            let choices = pure_choice_lists(g);
            let mut odometer = vec![0usize; choices.len()];
            loop {
                let mut profile = StationaryProfile::new();
                for ((vid, succ), &ix) in choices.iter().zip(odometer.iter()) {
                    profile.set_pure(vid.clone(), succ[ix].clone());
                }
                if driver.offer(profile)? {
                    break;
                }
                if !advance(&mut odometer, &choices) {
                    break;
                }
            }
        }
        SearchMode::SupportNewton => {
            // Internal target: eps/8-quality candidates, final acceptance at eps.
            let tol = cfg.epsilon.clone() / rat(8, 1);
            let supports = SupportIter::new(g);
            for support in supports {
                if driver.done() {
                    break;
                }
                match support_newton(g, lower, upper, &support, &tol, 60) {
                    Ok(NewtonOutcome::Converged { profile, .. }) => {
                        if driver.offer(profile)? {
                            break;
                        }
                    }
                    Ok(NewtonOutcome::NoConvergence) => {
                        driver.tried += 1;
                        if driver.done() {
                            break;
                        }
                    }
                    Err(SearchError::SingularJacobian) => {
                        driver.tried += 1;
                        if driver.done() {
                            break;
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        SearchMode::RandomRestart => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let choices = pure_choice_lists(g);
            loop {
                let mut profile = StationaryProfile::new();
                for (vid, succ) in &choices {
                    let weights: Vec<Rat> = succ
                        .iter()
                        .map(|_| Rat::from_integer(((rng.next_u64() % 255) + 1).into()))
                        .collect();
                    let total: Rat = weights.iter().cloned().sum();
                    profile.set_exact_row(
                        vid.clone(),
                        succ.iter()
                            .zip(weights)
                            .map(|(w, p)| (w.clone(), p / total.clone()))
                            .collect(),
                    );
                }
                if driver.offer(profile)? {
                    break;
                }
                if driver.done() {
                    break;
                }
            }
        }
    }
    driver.finish()
}

struct Driver<'a> {
    g: &'a Game,
    lower: &'a BTreeMap<PlayerId, Rat>,
    upper: &'a BTreeMap<PlayerId, Rat>,
    epsilon: Rat,
    budget: u64,
    tried: u64,
    best_margin: Option<Rat>,
    first_candidate: Option<StationaryProfile>,
    found: Option<(StationaryProfile, VerificationReport)>,
}

impl Driver<'_> {
    fn done(&self) -> bool {
        self.tried >= self.budget
    }

    /// Feeds one candidate; returns true when the search should stop.
    fn offer(&mut self, profile: StationaryProfile) -> Result<bool, SearchError> {
        if self.done() {
            return Ok(true);
        }
        self.tried += 1;
        if self.first_candidate.is_none() {
            self.first_candidate = Some(profile.clone());
        }
        // Cheap payoff filter before the per-player best responses.
        let payoffs = expected_payoffs(self.g, &profile)?;
        let within = self.g.players().iter().all(|p| {
            let v = &payoffs.payoffs[p];
            self.lower[p].clone() - self.epsilon.clone() <= *v
                && *v <= self.upper[p].clone() + self.epsilon.clone()
        });
        if !within {
            return Ok(self.done());
        }
        let report = verify_constrained(self.g, &profile, self.lower, self.upper, &self.epsilon)?;
        let margin = report.max_margin();
        if self
            .best_margin
            .as_ref()
            .map(|b| margin < *b)
            .unwrap_or(true)
        {
            self.best_margin = Some(margin);
        }
        if report.accepted {
            self.found = Some((profile, report));
            return Ok(true);
        }
        Ok(self.done())
    }

    fn finish(mut self) -> Result<SearchOutcome, SearchError> {
        if let Some((profile, report)) = self.found {
            return Ok(SearchOutcome::Found {
                candidates_tried: self.tried,
                profile,
                report,
            });
        }
        if self.best_margin.is_none() {
            // Every candidate fell to the payoff filter; verify the first
            // one fully so the exhaustion report still carries a margin.
            if let Some(profile) = self.first_candidate.take() {
                let report =
                    verify_constrained(self.g, &profile, self.lower, self.upper, &self.epsilon)?;
                self.best_margin = Some(report.max_margin());
            }
        }
        Ok(SearchOutcome::Exhausted {
            candidates_tried: self.tried,
            best_margin: self.best_margin,
        })
    }
}

/// Controlled vertices with successors, both in id order.
fn pure_choice_lists(g: &Game) -> Vec<(VertexId, Vec<VertexId>)> {
    let mut out: Vec<(VertexId, Vec<VertexId>)> = g
        .controlled_vertices()
        .into_iter()
        .map(|v| {
            let mut succ: Vec<VertexId> = g
                .successors(v)
                .iter()
                .map(|&w| g.vertex_id(w).clone())
                .collect();
            succ.sort();
            (g.vertex_id(v).clone(), succ)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Odometer advance, last position fastest; false when wrapped around.
fn advance(odometer: &mut [usize], choices: &[(VertexId, Vec<VertexId>)]) -> bool {
    for pos in (0..odometer.len()).rev() {
        odometer[pos] += 1;
        if odometer[pos] < choices[pos].1.len() {
            return true;
        }
        odometer[pos] = 0;
    }
    false
}

/// Support map used by the Newton solver.
pub type Support = BTreeMap<VertexId, std::collections::BTreeSet<VertexId>>;

/// Supports of a game in the canonical search order: increasing total
/// size, then lexicographically by vertex and by successor combination.
pub fn supports_in_order(g: &Game) -> impl Iterator<Item = Support> {
    SupportIter::new(g)
}

/// Enumerates supports by increasing total size, then lexicographically by
/// vertex and by successor combination.
struct SupportIter {
    choices: Vec<(VertexId, Vec<VertexId>)>,
    total: usize,
    max_total: usize,
    queue: Vec<Support>,
}

impl SupportIter {
    fn new(g: &Game) -> Self {
        let choices = pure_choice_lists(g);
        let total = choices.len();
        let max_total = choices.iter().map(|(_, s)| s.len()).sum();
        SupportIter {
            choices,
            total,
            max_total,
            queue: Vec::new(),
        }
    }

    fn fill(&mut self) {
        while self.queue.is_empty() && self.total <= self.max_total {
            let mut acc: Vec<Support> = Vec::new();
            let mut current = Support::new();
            Self::assign(&self.choices, 0, self.total, &mut current, &mut acc);
            acc.reverse();
            self.queue = acc;
            self.total += 1;
        }
    }

    fn assign(
        choices: &[(VertexId, Vec<VertexId>)],
        pos: usize,
        remaining: usize,
        current: &mut Support,
        acc: &mut Vec<Support>,
    ) {
        if pos == choices.len() {
            if remaining == 0 {
                acc.push(current.clone());
            }
            return;
        }
        let (vid, succ) = &choices[pos];
        let left_min = choices.len() - pos - 1;
        let left_max: usize = choices[pos + 1..].iter().map(|(_, s)| s.len()).sum();
        for size in 1..=succ.len() {
            if size > remaining || remaining - size > left_max || remaining - size < left_min {
                continue;
            }
            for combo in combinations(succ.len(), size) {
                let set: std::collections::BTreeSet<VertexId> =
                    combo.iter().map(|&i| succ[i].clone()).collect();
                current.insert(vid.clone(), set);
                Self::assign(choices, pos + 1, remaining - size, current, acc);
            }
            current.remove(vid);
        }
    }
}

impl Iterator for SupportIter {
    type Item = Support;

    fn next(&mut self) -> Option<Support> {
        self.fill();
        self.queue.pop()
    }
}

/// All k-of-n index combinations in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(combo.clone());
        // Advance the rightmost index that can still move.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if combo[i] < n - (k - i) {
                combo[i] += 1;
                for j in i + 1..k {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Newton on the indifference system
// ---------------------------------------------------------------------------

/// Unknowns of the indifference system: support probabilities plus player
/// values on the reachable part.
struct IndifferenceSystem<'g> {
    g: &'g Game,
    /// (vertex, owner index, support successors in id order)
    rows: Vec<(usize, usize, Vec<usize>)>,
    /// Reachable through support and positive chance edges.
    reach: Vec<bool>,
    /// Unknown index per support edge.
    p_ix: BTreeMap<(usize, usize), usize>,
    /// Unknown index per (player, vertex) value on reach minus terminals.
    r_ix: BTreeMap<(usize, usize), usize>,
    size: usize,
    /// Active-set owner equalities (player, vertex, successor) demanding
    /// r[player, vertex] = r[player, successor] beyond the support rows.
    active: Vec<(usize, usize, usize)>,
}

enum RRef {
    Const(Rat),
    Unknown(usize),
}

impl<'g> IndifferenceSystem<'g> {
    fn new(g: &'g Game, support: &Support) -> Result<Self, SearchError> {
        let mut rows = Vec::new();
        let mut support_edges: Vec<(usize, usize)> = Vec::new();
        for v in g.controlled_vertices() {
            let vid = g.vertex_id(v);
            let row = support
                .get(vid)
                .ok_or_else(|| SearchError::MissingSupportRow(vid.as_str().to_string()))?;
            let mut succ: Vec<usize> = Vec::new();
            for wid in row {
                let w = g
                    .vertex_index(wid)
                    .filter(|w| g.successors(v).contains(w))
                    .ok_or_else(|| SearchError::SupportNotAnEdge {
                        vertex: vid.as_str().to_string(),
                        to: wid.as_str().to_string(),
                    })?;
                succ.push(w);
            }
            succ.sort_by(|a, b| g.vertex_id(*a).cmp(g.vertex_id(*b)));
            let owner = match g.owner(v) {
                Owner::Player(p) => g.player_index(p).unwrap(),
                _ => unreachable!("controlled_vertices yields player vertices"),
            };
            for &w in &succ {
                support_edges.push((v, w));
            }
            rows.push((v, owner, succ));
        }
        // Reachability over support plus positive chance edges.
        let n = g.vertex_count();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(v, w) in &support_edges {
            preds[w].push(v);
        }
        for v in 0..n {
            if g.is_chance(v) {
                let row = g.chance_row(v).unwrap_or(&[]);
                for (pos, &w) in g.successors(v).iter().enumerate() {
                    if row.get(pos).map(|p| p.is_positive()).unwrap_or(false) {
                        preds[w].push(v);
                    }
                }
            }
        }
        let mut reach = vec![false; n];
        let mut stack: Vec<usize> = g.terminals();
        for &t in &stack {
            reach[t] = true;
        }
        while let Some(v) = stack.pop() {
            for &u in &preds[v] {
                if !reach[u] {
                    reach[u] = true;
                    stack.push(u);
                }
            }
        }
        let mut size = 0;
        let mut p_ix = BTreeMap::new();
        for (v, _, succ) in &rows {
            for &w in succ {
                p_ix.insert((*v, w), size);
                size += 1;
            }
        }
        let mut r_ix = BTreeMap::new();
        for pi in 0..g.players().len() {
            for v in 0..n {
                if reach[v] && !g.is_terminal(v) {
                    r_ix.insert((pi, v), size);
                    size += 1;
                }
            }
        }
        Ok(IndifferenceSystem {
            g,
            rows,
            reach,
            p_ix,
            r_ix,
            size,
            active: Vec::new(),
        })
    }

    fn r_ref(&self, pi: usize, v: usize) -> RRef {
        if self.g.is_terminal(v) {
            RRef::Const(self.g.reward(v, pi))
        } else if !self.reach[v] {
            RRef::Const(Rat::zero())
        } else {
            RRef::Unknown(self.r_ix[&(pi, v)])
        }
    }

    fn r_val(&self, u: &[Rat], pi: usize, v: usize) -> Rat {
        match self.r_ref(pi, v) {
            RRef::Const(c) => c,
            RRef::Unknown(ix) => u[ix].clone(),
        }
    }

    /// Residual F(u) and Jacobian dF/du, assembled together.
    fn residual_jacobian(&self, u: &[Rat]) -> (Vec<Rat>, Vec<Vec<Rat>>) {
        let g = self.g;
        let players = g.players().len();
        let mut f: Vec<Rat> = Vec::with_capacity(self.size);
        let mut jac: Vec<Vec<Rat>> = Vec::with_capacity(self.size);
        let mut push = |val: Rat, grad: Vec<(usize, Rat)>| {
            let mut row = vec![Rat::zero(); self.size];
            for (ix, gval) in grad {
                row[ix] += gval;
            }
            f.push(val);
            jac.push(row);
        };
        // Rows sum to one.
        for (v, _, succ) in &self.rows {
            let mut val = -Rat::one();
            let mut grad = Vec::new();
            for &w in succ {
                let ix = self.p_ix[&(*v, w)];
                val += u[ix].clone();
                grad.push((ix, Rat::one()));
            }
            push(val, grad);
        }
        // Value recurrences on the reachable part.
        for pi in 0..players {
            for v in 0..g.vertex_count() {
                if !self.reach[v] || g.is_terminal(v) {
                    continue;
                }
                let mut val = self.r_val(u, pi, v);
                let mut grad = vec![(self.r_ix[&(pi, v)], Rat::one())];
                match g.owner(v) {
                    Owner::Terminal => unreachable!(),
                    Owner::Chance => {
                        let row = g.chance_row(v).unwrap();
                        for (pos, &w) in g.successors(v).iter().enumerate() {
                            let p = &row[pos];
                            if !p.is_positive() {
                                continue;
                            }
                            match self.r_ref(pi, w) {
                                RRef::Const(c) => val -= p * &c,
                                RRef::Unknown(ix) => {
                                    val -= p * &u[ix];
                                    grad.push((ix, -p.clone()));
                                }
                            }
                        }
                    }
                    Owner::Player(_) => {
                        let succ = &self
                            .rows
                            .iter()
                            .find(|(rv, _, _)| rv == &v)
                            .expect("controlled vertex has a support row")
                            .2;
                        for &w in succ {
                            let pix = self.p_ix[&(v, w)];
                            let p = u[pix].clone();
                            match self.r_ref(pi, w) {
                                RRef::Const(c) => {
                                    val -= &p * &c;
                                    grad.push((pix, -c.clone()));
                                }
                                RRef::Unknown(ix) => {
                                    val -= &p * &u[ix];
                                    grad.push((pix, -u[ix].clone()));
                                    grad.push((ix, -p.clone()));
                                }
                            }
                        }
                    }
                }
                push(val, grad);
            }
        }
        // Owner indifference across consecutive support successors.
        for (v, owner, succ) in &self.rows {
            let _ = v;
            for pair in succ.windows(2) {
                let (w1, w2) = (pair[0], pair[1]);
                let mut val = Rat::zero();
                let mut grad = Vec::new();
                match self.r_ref(*owner, w1) {
                    RRef::Const(c) => val += c,
                    RRef::Unknown(ix) => {
                        val += u[ix].clone();
                        grad.push((ix, Rat::one()));
                    }
                }
                match self.r_ref(*owner, w2) {
                    RRef::Const(c) => val -= c,
                    RRef::Unknown(ix) => {
                        val -= u[ix].clone();
                        grad.push((ix, -Rat::one()));
                    }
                }
                push(val, grad);
            }
        }
        // Active-set equalities pinning the owner's value to an off-support
        // successor (binding optimality constraints discovered on the way).
        for (pi, v, w) in &self.active {
            let mut val = Rat::zero();
            let mut grad = Vec::new();
            match self.r_ref(*pi, *v) {
                RRef::Const(c) => val += c,
                RRef::Unknown(ix) => {
                    val += u[ix].clone();
                    grad.push((ix, Rat::one()));
                }
            }
            match self.r_ref(*pi, *w) {
                RRef::Const(c) => val -= c,
                RRef::Unknown(ix) => {
                    val -= u[ix].clone();
                    grad.push((ix, -Rat::one()));
                }
            }
            push(val, grad);
        }
        (f, jac)
    }

    /// Uniform support rows plus their exact evaluation as the start point.
    fn initial_point(&self) -> Result<Vec<Rat>, SearchError> {
        let g = self.g;
        let mut profile = StationaryProfile::new();
        for (v, _, succ) in &self.rows {
            let share = Rat::one() / Rat::from_integer(succ.len().into());
            profile.set_exact_row(
                g.vertex_id(*v).clone(),
                succ.iter()
                    .map(|&w| (g.vertex_id(w).clone(), share.clone()))
                    .collect(),
            );
        }
        let values = expected_payoffs(g, &profile)?;
        let mut u = vec![Rat::zero(); self.size];
        for ((v, w), ix) in &self.p_ix {
            let succ = &self.rows.iter().find(|(rv, _, _)| rv == v).unwrap().2;
            let _ = w;
            u[*ix] = Rat::one() / Rat::from_integer(succ.len().into());
        }
        for ((pi, v), ix) in &self.r_ix {
            let table = &values.tables[&g.players()[*pi]];
            u[*ix] = table[g.vertex_id(*v)].clone();
        }
        Ok(u)
    }

    /// Rebuilds a profile from the p part of a solution, repairing each row
    /// so it sums to one exactly. None when a repaired entry leaves (0, 1].
    fn profile_from(&self, u: &[Rat]) -> Option<StationaryProfile> {
        let g = self.g;
        let mut profile = StationaryProfile::new();
        for (v, _, succ) in &self.rows {
            let mut entries: Vec<(VertexId, Rat)> = Vec::new();
            let mut acc = Rat::zero();
            for (k, &w) in succ.iter().enumerate() {
                let p = if k + 1 == succ.len() {
                    Rat::one() - acc.clone()
                } else {
                    u[self.p_ix[&(*v, w)]].clone()
                };
                if !p.is_positive() || p > Rat::one() {
                    return None;
                }
                acc += p.clone();
                entries.push((g.vertex_id(w).clone(), p));
            }
            profile.set_exact_row(g.vertex_id(*v).clone(), entries);
        }
        Some(profile)
    }
}

fn max_abs(values: &[Rat]) -> Rat {
    values
        .iter()
        .map(|v| v.abs())
        .fold(Rat::zero(), |a, b| if b > a { b } else { a })
}

/// One damped Newton run: returns the converged iterate, or None when no
/// step shrinks the residual or the iteration budget runs out.
fn newton_run(
    sys: &IndifferenceSystem,
    start: Vec<Rat>,
    tol: &Rat,
    iters: u32,
) -> Result<Option<Vec<Rat>>, SearchError> {
    let mut u = start;
    let (mut f, mut jac) = sys.residual_jacobian(&u);
    let mut res = max_abs(&f);
    for round in 0..iters {
        if res <= *tol {
            return Ok(Some(u));
        }
        // Square fast path; rank-deficient and rectangular systems go
        // through least squares with free directions frozen.
        let delta: Vec<Rat> = if jac.len() == u.len() {
            let rhs: Vec<Vec<Rat>> = f.iter().map(|x| vec![-x.clone()]).collect();
            match solve_dense(jac.clone(), rhs) {
                Some(cols) => cols.into_iter().map(|mut c| c.pop().unwrap()).collect(),
                None => match crate::linalg::solve_least_squares(&jac, &f) {
                    Some(d) => d,
                    None if round == 0 => return Err(SearchError::SingularJacobian),
                    None => return Ok(None),
                },
            }
        } else {
            match crate::linalg::solve_least_squares(&jac, &f) {
                Some(d) => d,
                None if round == 0 => return Err(SearchError::SingularJacobian),
                None => return Ok(None),
            }
        };
        // Damping: halve until the residual actually shrinks.
        let mut step = Rat::one();
        let mut accepted = false;
        for _ in 0..32 {
            let trial: Vec<Rat> = u
                .iter()
                .zip(delta.iter())
                .map(|(x, d)| round_down_dyadic(&(x.clone() + step.clone() * d), 128))
                .collect();
            let (tf, tjac) = sys.residual_jacobian(&trial);
            let tres = max_abs(&tf);
            if tres < res {
                u = trial;
                f = tf;
                jac = tjac;
                res = tres;
                accepted = true;
                break;
            }
            step /= rat(2, 1);
        }
        if !accepted {
            return Ok(None);
        }
    }
    Ok((res <= *tol).then_some(u))
}

/// Damped Newton iteration on the system {support rows sum to 1, value
/// recurrences, owner indifference on support edges}, with iterates rounded
/// to 128-bit dyadics.
///
/// When a converged point fails exact verification, the owner optimality
/// constraints it violates are added as equalities (an active set) and the
/// iteration restarts, which resolves supports whose equilibrium is pinned
/// by binding off-support deviations rather than by on-support indifference.
/// A candidate is returned only when it passes exact constrained
/// verification at epsilon = `tol`; there are no false positives.
pub fn support_newton(
    g: &Game,
    lower: &BTreeMap<PlayerId, Rat>,
    upper: &BTreeMap<PlayerId, Rat>,
    support: &Support,
    tol: &Rat,
    iters: u32,
) -> Result<NewtonOutcome, SearchError> {
    let mut sys = IndifferenceSystem::new(g, support)?;
    let start = sys.initial_point()?;
    for _ in 0..16 {
        let Some(u) = newton_run(&sys, start.clone(), tol, iters)? else {
            return Ok(NewtonOutcome::NoConvergence);
        };
        let Some(profile) = sys.profile_from(&u) else {
            return Ok(NewtonOutcome::NoConvergence);
        };
        let report = verify_constrained(g, &profile, lower, upper, tol)?;
        if report.accepted {
            return Ok(NewtonOutcome::Converged { profile, report });
        }
        // Collect owner optimality violations r[i, v] < r[i, w] (beyond the
        // tolerance) at the converged point as new equality pins.
        let values = expected_payoffs(g, &profile)?;
        let mut added = false;
        for (v, owner, succ) in &sys.rows {
            let player = &g.players()[*owner];
            let table = &values.tables[player];
            let rv = table[g.vertex_id(*v)].clone();
            for &w in g.successors(*v) {
                if succ.contains(&w) {
                    continue;
                }
                if rv.clone() + tol.clone() < table[g.vertex_id(w)]
                    && !sys.active.contains(&(*owner, *v, w))
                {
                    sys.active.push((*owner, *v, w));
                    added = true;
                }
            }
        }
        if !added {
            return Ok(NewtonOutcome::NoConvergence);
        }
    }
    Ok(NewtonOutcome::NoConvergence)
}
