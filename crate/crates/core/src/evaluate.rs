//! Exact payoff evaluation of the Markov chain induced by a full profile,
//! best-response values in the single-player decision process obtained by
//! fixing everyone else, and the approximate threshold decision built on
//! top of them.
//!
//! Values are defined per vertex: terminals carry their reward, vertices
//! from which no terminal is reachable with positive probability carry 0
//! (infinite plays pay nothing), and the rest solve the linear system
//! `r_v = sum_w p_vw r_w` exactly over the rationals.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::model::{
    CompiledProfile, Game, Owner, PlayerId, ProfileError, StationaryProfile, VertexId,
};
use crate::rational::Rat;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("unknown player `{0}`")]
    UnknownPlayer(String),
    #[error("internal error: singular linear system on the reachable support")]
    SingularSystem,
    #[error("chance vertex `{0}` has an invalid probability row")]
    BadChanceRow(String),
    #[error("epsilon must be a positive dyadic rational 2^-k")]
    NonDyadicEpsilon,
    #[error("tolerance must be positive")]
    NonPositiveTolerance,
    #[error("policy space too large for guess-and-check mode ({0} policies)")]
    TooManyPolicies(String),
    #[error("internal error: policy iteration failed to terminate")]
    PolicyIterationDiverged,
}

/// Per-player expected payoffs at the initial vertex plus the per-vertex
/// value tables behind them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueVector {
    pub payoffs: BTreeMap<PlayerId, Rat>,
    pub tables: BTreeMap<PlayerId, BTreeMap<VertexId, Rat>>,
}

impl ValueVector {
    pub fn payoff(&self, p: &PlayerId) -> Option<&Rat> {
        self.payoffs.get(p)
    }
}

/// A certified-optimal pure stationary strategy for one player.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BestResponse {
    pub player: PlayerId,
    pub value: Rat,
    /// Deterministic choice per controlled vertex.
    pub strategy: BTreeMap<VertexId, VertexId>,
    /// Value table of the induced chain under the best response.
    pub table: BTreeMap<VertexId, Rat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Yes,
    No,
}

/// How `approx_mdp_decision` evaluates candidate strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecisionMode {
    /// Exact best response; answers are always on the true side.
    #[default]
    Exact,
    /// Enumerates pure strategies and scores each with the iterative
    /// evaluator at accuracy eps/2, mirroring the guess-and-check shape.
    GuessCheck,
}

// ---------------------------------------------------------------------------
// Induced chains
// ---------------------------------------------------------------------------

/// One state of an induced chain: absorbing, or a positive-probability row.
#[derive(Debug, Clone)]
enum ChainRow {
    Absorbing,
    Moves(Vec<(usize, Rat)>),
}

#[derive(Debug, Clone)]
pub(crate) struct Chain {
    rows: Vec<ChainRow>,
}

impl Chain {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn is_absorbing(&self, v: usize) -> bool {
        matches!(self.rows[v], ChainRow::Absorbing)
    }

    /// States from which an absorbing state is reached with positive
    /// probability: backward closure over the positive rows.
    fn support(&self) -> Vec<bool> {
        let n = self.len();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (v, row) in self.rows.iter().enumerate() {
            if let ChainRow::Moves(entries) = row {
                for (w, _) in entries {
                    preds[*w].push(v);
                }
            }
        }
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = (0..n).filter(|&v| self.is_absorbing(v)).collect();
        for &v in &stack {
            seen[v] = true;
        }
        while let Some(v) = stack.pop() {
            for &u in &preds[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen
    }

    /// Exact absorption values for several reward vectors at once. Rewards
    /// are read at absorbing states only; every non-support state gets 0.
    fn values_multi(&self, rewards: &[&[Rat]]) -> Result<Vec<Vec<Rat>>, EvalError> {
        let n = self.len();
        let in_support = self.support();
        let unknowns: Vec<usize> = (0..n)
            .filter(|&v| in_support[v] && !self.is_absorbing(v))
            .collect();
        let pos_of: BTreeMap<usize, usize> =
            unknowns.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let k = unknowns.len();
        let m = rewards.len();
        let mut out = vec![vec![Rat::zero(); n]; m];
        for (j, rw) in rewards.iter().enumerate() {
            for v in 0..n {
                if self.is_absorbing(v) {
                    out[j][v] = rw[v].clone();
                }
            }
        }
        if k == 0 {
            return Ok(out);
        }
        // Right-hand side per unknown per reward vector: absorbing hits.
        let mut rhs = vec![vec![Rat::zero(); m]; k];
        for (i, &v) in unknowns.iter().enumerate() {
            if let ChainRow::Moves(entries) = &self.rows[v] {
                for (w, p) in entries {
                    if self.is_absorbing(*w) {
                        for (j, rw) in rewards.iter().enumerate() {
                            rhs[i][j] += p * &rw[*w];
                        }
                    }
                }
            }
        }
        let solved = if let Some(order) = self.topo_order(&unknowns, &pos_of) {
            self.solve_dag(&unknowns, &pos_of, &order, rhs, m)
        } else {
            self.solve_elimination(&unknowns, &pos_of, rhs)?
        };
        for (i, &v) in unknowns.iter().enumerate() {
            for j in 0..m {
                out[j][v] = solved[i][j].clone();
            }
        }
        Ok(out)
    }

    /// Kahn topological order of the unknown-to-unknown subgraph, if acyclic.
    fn topo_order(
        &self,
        unknowns: &[usize],
        pos_of: &BTreeMap<usize, usize>,
    ) -> Option<Vec<usize>> {
        let k = unknowns.len();
        let mut indeg = vec![0usize; k];
        for &v in unknowns {
            if let ChainRow::Moves(entries) = &self.rows[v] {
                for (w, _) in entries {
                    if let Some(&j) = pos_of.get(w) {
                        indeg[j] += 1;
                    }
                }
            }
        }
        let mut queue: Vec<usize> = (0..k).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(k);
        while let Some(i) = queue.pop() {
            order.push(i);
            if let ChainRow::Moves(entries) = &self.rows[unknowns[i]] {
                for (w, _) in entries {
                    if let Some(&j) = pos_of.get(w) {
                        indeg[j] -= 1;
                        if indeg[j] == 0 {
                            queue.push(j);
                        }
                    }
                }
            }
        }
        (order.len() == k).then_some(order)
    }

    /// Back-substitution along a reversed topological order.
    fn solve_dag(
        &self,
        unknowns: &[usize],
        pos_of: &BTreeMap<usize, usize>,
        order: &[usize],
        mut rhs: Vec<Vec<Rat>>,
        m: usize,
    ) -> Vec<Vec<Rat>> {
        let mut values = vec![vec![Rat::zero(); m]; unknowns.len()];
        for &i in order.iter().rev() {
            let v = unknowns[i];
            let mut acc = std::mem::take(&mut rhs[i]);
            if let ChainRow::Moves(entries) = &self.rows[v] {
                for (w, p) in entries {
                    if let Some(&j) = pos_of.get(w) {
                        for (jj, a) in acc.iter_mut().enumerate() {
                            *a += p * &values[j][jj];
                        }
                    }
                }
            }
            values[i] = acc;
        }
        values
    }

    /// Dense rational Gaussian elimination on (I - P) x = rhs.
    fn solve_elimination(
        &self,
        unknowns: &[usize],
        pos_of: &BTreeMap<usize, usize>,
        rhs: Vec<Vec<Rat>>,
    ) -> Result<Vec<Vec<Rat>>, EvalError> {
        let k = unknowns.len();
        let mut a = vec![vec![Rat::zero(); k]; k];
        for (i, &v) in unknowns.iter().enumerate() {
            a[i][i] = Rat::one();
            if let ChainRow::Moves(entries) = &self.rows[v] {
                for (w, p) in entries {
                    if let Some(&j) = pos_of.get(w) {
                        a[i][j] -= p;
                    }
                }
            }
        }
        crate::linalg::solve_dense(a, rhs).ok_or(EvalError::SingularSystem)
    }

    /// Value iteration with a rigorous stopping rule: after each sweep the
    /// not-yet-absorbed mass `q` bounds the remaining error by `q * rmax`.
    fn iterative_values(&self, rewards: &[Rat], tol: &Rat) -> Result<Vec<Rat>, EvalError> {
        if !tol.is_positive() {
            return Err(EvalError::NonPositiveTolerance);
        }
        let n = self.len();
        let in_support = self.support();
        let unknowns: Vec<usize> = (0..n)
            .filter(|&v| in_support[v] && !self.is_absorbing(v))
            .collect();
        let pos_of: BTreeMap<usize, usize> =
            unknowns.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut out = vec![Rat::zero(); n];
        let mut rmax = Rat::zero();
        for v in 0..n {
            if self.is_absorbing(v) {
                out[v] = rewards[v].clone();
                if rewards[v].abs() > rmax {
                    rmax = rewards[v].abs();
                }
            }
        }
        let k = unknowns.len();
        if k == 0 || rmax.is_zero() {
            return Ok(out);
        }
        let mut x = vec![Rat::zero(); k];
        let mut q = vec![Rat::one(); k];
        loop {
            let mut nx = vec![Rat::zero(); k];
            let mut nq = vec![Rat::zero(); k];
            for (i, &v) in unknowns.iter().enumerate() {
                if let ChainRow::Moves(entries) = &self.rows[v] {
                    for (w, p) in entries {
                        if let Some(&j) = pos_of.get(w) {
                            nx[i] += p * &x[j];
                            nq[i] += p * &q[j];
                        } else if self.is_absorbing(*w) {
                            nx[i] += p * &rewards[*w];
                        }
                    }
                }
            }
            x = nx;
            q = nq;
            let worst = q
                .iter()
                .cloned()
                .fold(Rat::zero(), |a, b| if b > a { b } else { a });
            if worst * rmax.clone() <= *tol {
                break;
            }
        }
        for (i, &v) in unknowns.iter().enumerate() {
            out[v] = x[i].clone();
        }
        Ok(out)
    }
}

/// Chain induced by a full profile.
pub(crate) fn induced_chain(g: &Game, compiled: &CompiledProfile) -> Result<Chain, EvalError> {
    let n = g.vertex_count();
    let mut rows = Vec::with_capacity(n);
    for v in 0..n {
        let row = match g.owner(v) {
            Owner::Terminal => ChainRow::Absorbing,
            Owner::Chance => ChainRow::Moves(chance_moves(g, v)?),
            Owner::Player(_) => {
                let entries = compiled
                    .row(v)
                    .ok_or_else(|| ProfileError::MissingRow(g.vertex_id(v).as_str().to_string()))?;
                ChainRow::Moves(entries.to_vec())
            }
        };
        rows.push(row);
    }
    Ok(Chain { rows })
}

fn chance_moves(g: &Game, v: usize) -> Result<Vec<(usize, Rat)>, EvalError> {
    let row = g
        .chance_row(v)
        .ok_or_else(|| EvalError::BadChanceRow(g.vertex_id(v).as_str().to_string()))?;
    if row.len() != g.successors(v).len() {
        return Err(EvalError::BadChanceRow(g.vertex_id(v).as_str().to_string()));
    }
    Ok(g.successors(v)
        .iter()
        .zip(row.iter())
        .filter(|(_, p)| p.is_positive())
        .map(|(&w, p)| (w, p.clone()))
        .collect())
}

fn reward_vector(g: &Game, player: usize) -> Vec<Rat> {
    (0..g.vertex_count()).map(|v| g.reward(v, player)).collect()
}

fn table_from(g: &Game, values: &[Rat]) -> BTreeMap<VertexId, Rat> {
    values
        .iter()
        .enumerate()
        .map(|(v, r)| (g.vertex_id(v).clone(), r.clone()))
        .collect()
}

// ---------------------------------------------------------------------------
// Public evaluation entry points
// ---------------------------------------------------------------------------

/// Expected payoff of one player under a full profile, with the per-vertex
/// value table.
pub fn mc_value(
    g: &Game,
    profile: &StationaryProfile,
    player: &PlayerId,
) -> Result<ValueVector, EvalError> {
    let pi = g
        .player_index(player)
        .ok_or_else(|| EvalError::UnknownPlayer(player.as_str().to_string()))?;
    let compiled = profile.compile(g, true)?;
    let chain = induced_chain(g, &compiled)?;
    let rewards = reward_vector(g, pi);
    let values = chain.values_multi(&[&rewards])?.pop().unwrap();
    let mut payoffs = BTreeMap::new();
    let mut tables = BTreeMap::new();
    payoffs.insert(player.clone(), values[g.initial()].clone());
    tables.insert(player.clone(), table_from(g, &values));
    Ok(ValueVector { payoffs, tables })
}

/// Expected payoffs of every player, sharing one reachable-support analysis
/// and one factorization across players.
pub fn expected_payoffs(g: &Game, profile: &StationaryProfile) -> Result<ValueVector, EvalError> {
    let compiled = profile.compile(g, true)?;
    let chain = induced_chain(g, &compiled)?;
    let reward_vecs: Vec<Vec<Rat>> = (0..g.players().len())
        .map(|pi| reward_vector(g, pi))
        .collect();
    let refs: Vec<&[Rat]> = reward_vecs.iter().map(|v| v.as_slice()).collect();
    let all = chain.values_multi(&refs)?;
    let mut payoffs = BTreeMap::new();
    let mut tables = BTreeMap::new();
    for (pi, values) in all.into_iter().enumerate() {
        let p = g.players()[pi].clone();
        payoffs.insert(p.clone(), values[g.initial()].clone());
        tables.insert(p, table_from(g, &values));
    }
    Ok(ValueVector { payoffs, tables })
}

/// Probability of ending in each terminal, from the initial vertex.
pub fn absorption_probabilities(
    g: &Game,
    profile: &StationaryProfile,
) -> Result<BTreeMap<VertexId, Rat>, EvalError> {
    let compiled = profile.compile(g, true)?;
    let chain = induced_chain(g, &compiled)?;
    let terminals = g.terminals();
    let reward_vecs: Vec<Vec<Rat>> = terminals
        .iter()
        .map(|&t| {
            let mut rw = vec![Rat::zero(); g.vertex_count()];
            rw[t] = Rat::one();
            rw
        })
        .collect();
    let refs: Vec<&[Rat]> = reward_vecs.iter().map(|v| v.as_slice()).collect();
    let all = chain.values_multi(&refs)?;
    Ok(terminals
        .iter()
        .zip(all.iter())
        .map(|(&t, values)| (g.vertex_id(t).clone(), values[g.initial()].clone()))
        .collect())
}

// ---------------------------------------------------------------------------
// Best response
// ---------------------------------------------------------------------------

/// Internal view of the one-player decision process left after fixing the
/// other players.
struct Mdp<'g> {
    g: &'g Game,
    /// Fixed positive rows for chance and other-player vertices.
    fixed: BTreeMap<usize, Vec<(usize, Rat)>>,
    /// The optimizing player's vertices with successors sorted by vertex id.
    choices: Vec<(usize, Vec<usize>)>,
    rewards: Vec<Rat>,
    /// Vertices from which the player can force the play to avoid every
    /// terminal with probability one.
    avoid: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Choice {
    Real(usize),
    /// Stationary commitment to a terminal-avoiding region, worth exactly 0.
    Quit,
}

impl<'g> Mdp<'g> {
    fn build(
        g: &'g Game,
        others: &StationaryProfile,
        player: &PlayerId,
    ) -> Result<Self, EvalError> {
        let pidx = g
            .player_index(player)
            .ok_or_else(|| EvalError::UnknownPlayer(player.as_str().to_string()))?;
        // Rows of the optimizing player inside `others` are ignored.
        let mut trimmed = others.clone();
        trimmed.rows.retain(|vid, _| {
            g.vertex_index(vid)
                .map(|v| !matches!(g.owner(v), Owner::Player(p) if p == player))
                .unwrap_or(true)
        });
        let compiled = trimmed.compile(g, false)?;
        let mut fixed = BTreeMap::new();
        let mut choices = Vec::new();
        for v in 0..g.vertex_count() {
            match g.owner(v) {
                Owner::Terminal => {}
                Owner::Chance => {
                    fixed.insert(v, chance_moves(g, v)?);
                }
                Owner::Player(p) if p == player => {
                    let mut succ: Vec<usize> = g.successors(v).to_vec();
                    succ.sort_by(|a, b| g.vertex_id(*a).cmp(g.vertex_id(*b)));
                    choices.push((v, succ));
                }
                Owner::Player(_) => {
                    let entries = compiled.row(v).ok_or_else(|| {
                        ProfileError::MissingRow(g.vertex_id(v).as_str().to_string())
                    })?;
                    fixed.insert(v, entries.to_vec());
                }
            }
        }
        let rewards = reward_vector(g, pidx);
        let mut mdp = Mdp {
            g,
            fixed,
            choices,
            rewards,
            avoid: Vec::new(),
        };
        mdp.avoid = mdp.avoidance_set();
        Ok(mdp)
    }

    /// Greatest set U of non-terminals where the player has a successor in U
    /// and fixed vertices keep all positive mass inside U.
    fn avoidance_set(&self) -> Vec<bool> {
        let n = self.g.vertex_count();
        let mut in_u: Vec<bool> = (0..n).map(|v| !self.g.is_terminal(v)).collect();
        loop {
            let mut changed = false;
            for v in 0..n {
                if !in_u[v] {
                    continue;
                }
                let ok = if let Some(row) = self.fixed.get(&v) {
                    row.iter().all(|(w, _)| in_u[*w])
                } else {
                    self.g.successors(v).iter().any(|&w| in_u[w])
                };
                if !ok {
                    in_u[v] = false;
                    changed = true;
                }
            }
            if !changed {
                return in_u;
            }
        }
    }

    /// Chain of a pure policy, with one extra absorbing state for `Quit`.
    fn policy_chain(&self, policy: &BTreeMap<usize, Choice>) -> Chain {
        let n = self.g.vertex_count();
        let quit = n;
        let mut rows = Vec::with_capacity(n + 1);
        for v in 0..n {
            let row = if self.g.is_terminal(v) {
                ChainRow::Absorbing
            } else if let Some(entries) = self.fixed.get(&v) {
                ChainRow::Moves(entries.clone())
            } else {
                match policy[&v] {
                    Choice::Real(w) => ChainRow::Moves(vec![(w, Rat::one())]),
                    Choice::Quit => ChainRow::Moves(vec![(quit, Rat::one())]),
                }
            };
            rows.push(row);
        }
        rows.push(ChainRow::Absorbing);
        Chain { rows }
    }

    fn extended_rewards(&self) -> Vec<Rat> {
        let mut rw = self.rewards.clone();
        rw.push(Rat::zero());
        rw
    }

    fn evaluate(&self, policy: &BTreeMap<usize, Choice>) -> Result<Vec<Rat>, EvalError> {
        let chain = self.policy_chain(policy);
        let rw = self.extended_rewards();
        Ok(chain.values_multi(&[&rw])?.pop().unwrap())
    }
}

/// Optimal pure stationary strategy for `player` against the fixed rows of
/// everyone else, with its exact value from the initial vertex.
///
/// Policy iteration: every improving switch is taken against exactly
/// evaluated values, and vertices where the player can force the play away
/// from all terminals also offer a zero-value stop so that no negative
/// outcome has to be accepted when cycling is available. The result is
/// certified: no single-vertex switch improves it.
pub fn mdp_best_response(
    g: &Game,
    others: &StationaryProfile,
    player: &PlayerId,
) -> Result<BestResponse, EvalError> {
    let mdp = Mdp::build(g, others, player)?;
    let mut policy: BTreeMap<usize, Choice> = mdp
        .choices
        .iter()
        .map(|(v, succ)| (*v, Choice::Real(succ[0])))
        .collect();
    let mut values = mdp.evaluate(&policy)?;
    // Finite policy space plus strict pointwise improvement means this
    // terminates; the cap only guards an internal invariant break.
    let mut rounds = 0usize;
    loop {
        rounds += 1;
        if rounds > 100_000 {
            return Err(EvalError::PolicyIterationDiverged);
        }
        let mut improved = false;
        for (v, succ) in &mdp.choices {
            let current = values[*v].clone();
            let mut best_val = current.clone();
            let mut best_choice: Option<Choice> = None;
            for &w in succ {
                if values[w] > best_val {
                    best_val = values[w].clone();
                    best_choice = Some(Choice::Real(w));
                }
            }
            if mdp.avoid[*v] && Rat::zero() > best_val {
                best_val = Rat::zero();
                best_choice = Some(Choice::Quit);
            }
            if let Some(c) = best_choice {
                policy.insert(*v, c);
                improved = true;
            }
        }
        if !improved {
            break;
        }
        values = mdp.evaluate(&policy)?;
    }
    // Replace stop decisions by real successors of equal (zero) value.
    let resolved: BTreeMap<usize, usize> = mdp
        .choices
        .iter()
        .map(|(v, succ)| {
            let target = match policy[v] {
                Choice::Real(w) => w,
                Choice::Quit => succ
                    .iter()
                    .copied()
                    .find(|&w| values[w].is_zero())
                    .expect("stop decision always has a zero-valued successor"),
            };
            (*v, target)
        })
        .collect();
    let final_policy: BTreeMap<usize, Choice> = resolved
        .iter()
        .map(|(&v, &w)| (v, Choice::Real(w)))
        .collect();
    let final_values = mdp.evaluate(&final_policy)?;
    debug_assert_eq!(final_values[g.initial()], values[g.initial()]);
    let strategy = resolved
        .iter()
        .map(|(&v, &w)| (g.vertex_id(v).clone(), g.vertex_id(w).clone()))
        .collect();
    Ok(BestResponse {
        player: player.clone(),
        value: final_values[g.initial()].clone(),
        strategy,
        table: table_from(g, &final_values[..g.vertex_count()]),
    })
}

fn is_dyadic_unit_fraction(x: &Rat) -> bool {
    x.is_positive() && x.numer().is_one() && x.denom().magnitude().count_ones() == 1
}

/// Promise decision: `No` is guaranteed when `alpha <= val - eps`, `Yes`
/// when `alpha >= val + eps`; anything inside the band may answer either
/// way.
pub fn approx_mdp_decision(
    g: &Game,
    others: &StationaryProfile,
    player: &PlayerId,
    alpha: &Rat,
    eps: &Rat,
    mode: DecisionMode,
) -> Result<Decision, EvalError> {
    if !is_dyadic_unit_fraction(eps) {
        return Err(EvalError::NonDyadicEpsilon);
    }
    match mode {
        DecisionMode::Exact => {
            let br = mdp_best_response(g, others, player)?;
            Ok(if *alpha < br.value {
                Decision::No
            } else {
                Decision::Yes
            })
        }
        DecisionMode::GuessCheck => {
            let mdp = Mdp::build(g, others, player)?;
            let mut count = Rat::one();
            for (_, succ) in &mdp.choices {
                count *= Rat::from_integer(succ.len().into());
            }
            if count > Rat::from_integer(1_000_000.into()) {
                return Err(EvalError::TooManyPolicies(count.to_string()));
            }
            let tol = eps / Rat::from_integer(2.into());
            let rw = mdp.extended_rewards();
            // Odometer over pure strategies; emptiness means a single chain.
            let mut indices = vec![0usize; mdp.choices.len()];
            loop {
                let policy: BTreeMap<usize, Choice> = mdp
                    .choices
                    .iter()
                    .zip(indices.iter())
                    .map(|((v, succ), &i)| (*v, Choice::Real(succ[i])))
                    .collect();
                let chain = mdp.policy_chain(&policy);
                let approx = chain.iterative_values(&rw, &tol)?;
                if *alpha <= approx[g.initial()] {
                    return Ok(Decision::No);
                }
                // Advance the odometer.
                let mut pos = 0;
                loop {
                    if pos == indices.len() {
                        return Ok(Decision::Yes);
                    }
                    indices[pos] += 1;
                    if indices[pos] < mdp.choices[pos].1.len() {
                        break;
                    }
                    indices[pos] = 0;
                    pos += 1;
                }
            }
        }
    }
}

/// Payoff of one player evaluated iteratively to within `tol`, mirroring the
/// approximate evaluation pipeline. Exact evaluation remains the default
/// everywhere; this is the flag-selectable alternative.
pub fn approx_mc_value(
    g: &Game,
    profile: &StationaryProfile,
    player: &PlayerId,
    tol: &Rat,
) -> Result<Rat, EvalError> {
    let pi = g
        .player_index(player)
        .ok_or_else(|| EvalError::UnknownPlayer(player.as_str().to_string()))?;
    let compiled = profile.compile(g, true)?;
    let chain = induced_chain(g, &compiled)?;
    let rewards = reward_vector(g, pi);
    let values = chain.iterative_values(&rewards, tol)?;
    Ok(values[g.initial()].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{
        build_gn, build_sat_game, gn_exact_ne, sat_ne_from_valuation, CnfFormula, Literal,
    };
    use crate::model::{parse_game, EdgeSpec};
    use crate::rational::{rat, rint};
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lit(v: i64) -> Literal {
        Literal {
            var: v.unsigned_abs() as usize,
            positive: v > 0,
        }
    }

    fn one_clause_formula() -> CnfFormula {
        CnfFormula::new(3, vec![[lit(1), lit(2), lit(-3)]]).unwrap()
    }

    #[test]
    fn direct_chain_value() {
        let text = r#"{
            "players": ["alice"],
            "vertices": [
                {"id": "a", "owner": "alice"},
                {"id": "t", "owner": "terminal"}
            ],
            "edges": [{"from": "a", "to": "t"}],
            "rewards": {"t": {"alice": "1"}},
            "initial": "a"
        }"#;
        let g = parse_game(text).unwrap();
        let mut sigma = StationaryProfile::new();
        sigma.set_pure("a".into(), "t".into());
        let v = mc_value(&g, &sigma, &g.players()[0].clone()).unwrap();
        assert_eq!(v.payoffs[&g.players()[0]], rint(1));
    }

    #[test]
    fn sat_fragment_loop_value() {
        // Solver sits on the positive literal x1; the induced chain solves
        // p = 1/2 + 1/4 p, so t_x1 is reached with probability 2/3 and
        // player x1 keeps payoff 1/3.
        let formula = one_clause_formula();
        let g = build_sat_game(&formula).unwrap();
        let sigma = sat_ne_from_valuation(&formula, &[true, false, false]).unwrap();
        let values = expected_payoffs(&g, &sigma).unwrap();
        let p = |name: &str| values.payoffs[&PlayerId::new(name).unwrap()].clone();
        assert_eq!(p("Solver"), rint(1));
        assert_eq!(p("x1"), rat(1, 3));
        assert_eq!(p("x2"), rint(1));
        assert_eq!(p("x3"), rint(1));
        let absorb = absorption_probabilities(&g, &sigma).unwrap();
        assert_eq!(absorb[&VertexId::from("tx1")], rat(2, 3));
        assert_eq!(absorb[&VertexId::from("t")], rat(1, 3));
    }

    #[test]
    fn circle_payoff_is_one_under_exact_ne() {
        for n in 1..=2 {
            let g = build_gn(n).unwrap();
            let sigma = gn_exact_ne(n).unwrap();
            let circle = PlayerId::new(crate::generators::CIRCLE).unwrap();
            let v = mc_value(&g, &sigma, &circle).unwrap();
            assert_eq!(v.payoffs[&circle], rint(1), "n={n}");
        }
    }

    #[test]
    fn dead_profile_pays_zero() {
        let text = r#"{
            "players": ["alice"],
            "vertices": [
                {"id": "u", "owner": "alice"},
                {"id": "v", "owner": "alice"},
                {"id": "t", "owner": "terminal"}
            ],
            "edges": [
                {"from": "u", "to": "v"},
                {"from": "v", "to": "u"},
                {"from": "v", "to": "t"}
            ],
            "rewards": {"t": {"alice": "1"}},
            "initial": "u"
        }"#;
        let g = parse_game(text).unwrap();
        let mut sigma = StationaryProfile::new();
        sigma.set_pure("u".into(), "v".into());
        sigma.set_pure("v".into(), "u".into());
        let values = expected_payoffs(&g, &sigma).unwrap();
        assert_eq!(values.payoffs[&g.players()[0]], rint(0));
    }

    #[test]
    fn value_is_linear_in_rewards() {
        // Evaluating a*mu + b*mu' equals a*val(mu) + b*val(mu').
        let base = r#"{
            "players": ["alice"],
            "vertices": [
                {"id": "c", "owner": "chance"},
                {"id": "t1", "owner": "terminal"},
                {"id": "t2", "owner": "terminal"}
            ],
            "edges": [
                {"from": "c", "to": "t1", "prob": "1/3"},
                {"from": "c", "to": "t2", "prob": "2/3"}
            ],
            "rewards": {"t1": {"alice": "RW1"}, "t2": {"alice": "RW2"}},
            "initial": "c"
        }"#;
        let eval = |r1: &str, r2: &str| {
            let g = parse_game(&base.replace("RW1", r1).replace("RW2", r2)).unwrap();
            let sigma = StationaryProfile::new();
            expected_payoffs(&g, &sigma).unwrap().payoffs[&g.players()[0]].clone()
        };
        let v_mu = eval("1", "0");
        let v_nu = eval("0", "1");
        let v_mix = eval("5", "7"); // 5*mu + 7*nu
        assert_eq!(v_mix, rint(5) * v_mu + rint(7) * v_nu);
    }

    #[test]
    fn best_response_picks_better_terminal() {
        let text = r#"{
            "players": ["alice"],
            "vertices": [
                {"id": "a", "owner": "alice"},
                {"id": "t0", "owner": "terminal"},
                {"id": "t1", "owner": "terminal"}
            ],
            "edges": [
                {"from": "a", "to": "t0"},
                {"from": "a", "to": "t1"}
            ],
            "rewards": {"t1": {"alice": "1"}},
            "initial": "a"
        }"#;
        let g = parse_game(text).unwrap();
        let alice = g.players()[0].clone();
        let br = mdp_best_response(&g, &StationaryProfile::new(), &alice).unwrap();
        assert_eq!(br.value, rint(1));
        assert_eq!(br.strategy[&VertexId::from("a")], VertexId::from("t1"));
    }

    #[test]
    fn best_response_prefers_cycling_over_negative_reward() {
        // Only path to a terminal pays -1; staying on the self-loop pays 0.
        let text = r#"{
            "players": ["alice"],
            "vertices": [
                {"id": "v", "owner": "alice"},
                {"id": "t", "owner": "terminal"}
            ],
            "edges": [
                {"from": "v", "to": "v"},
                {"from": "v", "to": "t"}
            ],
            "rewards": {"t": {"alice": "-1"}},
            "initial": "v"
        }"#;
        let g = parse_game(text).unwrap();
        let alice = g.players()[0].clone();
        let br = mdp_best_response(&g, &StationaryProfile::new(), &alice).unwrap();
        assert_eq!(br.value, rint(0));
        assert_eq!(br.strategy[&VertexId::from("v")], VertexId::from("v"));
    }

    #[test]
    fn best_response_escapes_two_vertex_trap() {
        // u and v can only reach a -1 terminal or cycle together; the
        // optimum is the cycle, which needs both vertices to cooperate.
        let text = r#"{
            "players": ["alice"],
            "vertices": [
                {"id": "u", "owner": "alice"},
                {"id": "v", "owner": "alice"},
                {"id": "t", "owner": "terminal"}
            ],
            "edges": [
                {"from": "u", "to": "v"},
                {"from": "u", "to": "t"},
                {"from": "v", "to": "u"},
                {"from": "v", "to": "t"}
            ],
            "rewards": {"t": {"alice": "-1"}},
            "initial": "u"
        }"#;
        let g = parse_game(text).unwrap();
        let alice = g.players()[0].clone();
        let br = mdp_best_response(&g, &StationaryProfile::new(), &alice).unwrap();
        assert_eq!(br.value, rint(0));
    }

    // Exhaustive oracle over pure policies, used to certify policy iteration.
    fn enumerate_best_value(g: &Game, others: &StationaryProfile, player: &PlayerId) -> Rat {
        let controlled: Vec<usize> = g
            .controlled_vertices()
            .into_iter()
            .filter(|&v| matches!(g.owner(v), Owner::Player(p) if p == player))
            .collect();
        let mut best: Option<Rat> = None;
        let mut indices = vec![0usize; controlled.len()];
        loop {
            let mut profile = others.clone();
            for (&v, &ix) in controlled.iter().zip(indices.iter()) {
                let w = g.successors(v)[ix];
                profile.set_pure(g.vertex_id(v).clone(), g.vertex_id(w).clone());
            }
            let value = mc_value(g, &profile, player).unwrap().payoffs[player].clone();
            best = Some(match best {
                None => value,
                Some(b) => {
                    if value > b {
                        value
                    } else {
                        b
                    }
                }
            });
            let mut pos = 0;
            loop {
                if pos == indices.len() {
                    return best.unwrap();
                }
                indices[pos] += 1;
                if indices[pos] < g.successors(controlled[pos]).len() {
                    break;
                }
                indices[pos] = 0;
                pos += 1;
            }
        }
    }

    pub(crate) fn random_mdp(rng: &mut ChaCha8Rng, negative_rewards: bool) -> (Game, PlayerId) {
        let player = PlayerId::new("solo").unwrap();
        let controlled = (rng.next_u64() % 4 + 2) as usize;
        let chance = (rng.next_u64() % 3) as usize;
        let terminals = (rng.next_u64() % 3 + 2) as usize;
        let n = controlled + chance + terminals;
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        let mut rewards: BTreeMap<VertexId, BTreeMap<PlayerId, Rat>> = BTreeMap::new();
        let name = |i: usize| VertexId::new(format!("v{i}"));
        for i in 0..n {
            let owner = if i < controlled {
                Owner::Player(player.clone())
            } else if i < controlled + chance {
                Owner::Chance
            } else {
                Owner::Terminal
            };
            vertices.push((name(i), owner));
        }
        for i in 0..controlled + chance {
            let deg = (rng.next_u64() % 3 + 1) as usize;
            let mut targets = Vec::new();
            while targets.len() < deg {
                let t = (rng.next_u64() % n as u64) as usize;
                if t != i && !targets.contains(&t) {
                    targets.push(t);
                }
            }
            let is_chance = i >= controlled;
            // Dyadic chance rows summing to one.
            let mut remaining = rint(1);
            for (k, &t) in targets.iter().enumerate() {
                let prob = if !is_chance {
                    None
                } else if k + 1 == targets.len() {
                    Some(remaining.clone())
                } else {
                    let p = rat(1, 1 << (k + 1));
                    remaining -= p.clone();
                    Some(p)
                };
                edges.push(EdgeSpec {
                    from: name(i),
                    to: name(t),
                    prob,
                });
            }
        }
        for i in controlled + chance..n {
            let num = (rng.next_u64() % 5) as i64;
            let num = if negative_rewards { num - 2 } else { num };
            rewards.insert(name(i), BTreeMap::from([(player.clone(), rat(num, 4))]));
        }
        let g = Game::from_parts(vec![player.clone()], vertices, edges, rewards, name(0)).unwrap();
        (g, player)
    }

    #[test]
    fn policy_iteration_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for case in 0..60 {
            let (g, player) = random_mdp(&mut rng, case % 2 == 0);
            let br = mdp_best_response(&g, &StationaryProfile::new(), &player).unwrap();
            let oracle = enumerate_best_value(&g, &StationaryProfile::new(), &player);
            assert_eq!(br.value, oracle, "case {case}");
        }
    }

    #[test]
    fn approx_decision_promise() {
        let formula = one_clause_formula();
        let g = build_sat_game(&formula).unwrap();
        let sigma = sat_ne_from_valuation(&formula, &[true, false, false]).unwrap();
        let x1 = PlayerId::new("x1").unwrap();
        // x1 owns nothing here; its best-response value is its payoff 1/3.
        let eps = rat(1, 4);
        for mode in [DecisionMode::Exact, DecisionMode::GuessCheck] {
            assert_eq!(
                approx_mdp_decision(&g, &sigma, &x1, &rint(0), &eps, mode).unwrap(),
                Decision::No
            );
            assert_eq!(
                approx_mdp_decision(&g, &sigma, &x1, &rint(1), &eps, mode).unwrap(),
                Decision::Yes
            );
        }
        assert!(matches!(
            approx_mdp_decision(&g, &sigma, &x1, &rint(0), &rat(1, 3), DecisionMode::Exact),
            Err(EvalError::NonDyadicEpsilon)
        ));
    }

    #[test]
    fn iterative_evaluator_stays_within_tolerance() {
        let formula = one_clause_formula();
        let g = build_sat_game(&formula).unwrap();
        let sigma = sat_ne_from_valuation(&formula, &[true, false, false]).unwrap();
        let x1 = PlayerId::new("x1").unwrap();
        for k in [3i64, 8, 16] {
            let tol = crate::rational::pow2(-k);
            let approx = approx_mc_value(&g, &sigma, &x1, &tol).unwrap();
            let exact = rat(1, 3);
            let diff = if approx > exact {
                approx - exact
            } else {
                exact - approx.clone()
            };
            assert!(diff <= tol);
        }
    }
}
