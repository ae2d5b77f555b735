//! Equilibrium verification: exact deviation margins per player, constrained
//! acceptance against per-player payoff intervals, direct evaluation of the
//! support constraint clauses on a candidate profile, and the promise-style
//! decision pipeline built from approximate evaluations.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::etr_export::{ConstraintRef, ConstraintTag};
use crate::evaluate::{
    approx_mc_value, approx_mdp_decision, expected_payoffs, mdp_best_response, Decision,
    DecisionMode, EvalError,
};
use crate::model::{Game, Owner, PlayerId, ProfileError, StationaryProfile, VertexId};
use crate::rational::{rat, Rat};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("epsilon must be non-negative")]
    NegativeEpsilon,
    #[error("missing threshold for player `{0}`")]
    MissingThreshold(String),
}

/// Verification outcome for one player.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayerVerification {
    pub payoff: Rat,
    pub best_response_value: Rat,
    /// best_response_value - payoff; never negative.
    pub deviation_margin: Rat,
    /// Payoff lies within the (epsilon-slackened) thresholds; true when the
    /// player is unconstrained.
    pub constraint_ok: bool,
    /// A pure strategy achieving the best-response value.
    pub best_response: BTreeMap<VertexId, VertexId>,
}

/// Full verification report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationReport {
    pub epsilon: Rat,
    pub players: BTreeMap<PlayerId, PlayerVerification>,
    /// Every deviation margin is at most epsilon.
    pub is_ne: bool,
    /// is_ne and every constraint holds.
    pub accepted: bool,
}

impl VerificationReport {
    pub fn max_margin(&self) -> Rat {
        self.players
            .values()
            .map(|p| p.deviation_margin.clone())
            .fold(Rat::zero(), |a, b| if b > a { b } else { a })
    }
}

fn verify_inner(
    g: &Game,
    profile: &StationaryProfile,
    thresholds: Option<(&BTreeMap<PlayerId, Rat>, &BTreeMap<PlayerId, Rat>)>,
    epsilon: &Rat,
) -> Result<VerificationReport, VerifyError> {
    if epsilon.is_negative() {
        return Err(VerifyError::NegativeEpsilon);
    }
    if let Some((lower, upper)) = thresholds {
        for p in g.players() {
            if !lower.contains_key(p) || !upper.contains_key(p) {
                return Err(VerifyError::MissingThreshold(p.as_str().to_string()));
            }
        }
    }
    let values = expected_payoffs(g, profile)?;
    let mut players = BTreeMap::new();
    let mut is_ne = true;
    let mut all_constraints = true;
    for p in g.players() {
        let payoff = values.payoffs[p].clone();
        let br = mdp_best_response(g, profile, p)?;
        let margin = br.value.clone() - payoff.clone();
        debug_assert!(!margin.is_negative(), "best response must dominate");
        if margin > *epsilon {
            is_ne = false;
        }
        let constraint_ok = match thresholds {
            None => true,
            Some((lower, upper)) => {
                lower[p].clone() - epsilon.clone() <= payoff
                    && payoff <= upper[p].clone() + epsilon.clone()
            }
        };
        all_constraints &= constraint_ok;
        players.insert(
            p.clone(),
            PlayerVerification {
                payoff,
                best_response_value: br.value,
                deviation_margin: margin,
                constraint_ok,
                best_response: br.strategy,
            },
        );
    }
    Ok(VerificationReport {
        epsilon: epsilon.clone(),
        players,
        is_ne,
        accepted: is_ne && all_constraints,
    })
}

/// Is the profile an epsilon-equilibrium? epsilon = 0 checks exactness.
pub fn verify_epsilon_ne(
    g: &Game,
    profile: &StationaryProfile,
    epsilon: &Rat,
) -> Result<VerificationReport, VerifyError> {
    verify_inner(g, profile, None, epsilon)
}

/// Epsilon-equilibrium verification plus per-player payoff constraints,
/// satisfied up to an epsilon additive slack.
pub fn verify_constrained(
    g: &Game,
    profile: &StationaryProfile,
    lower: &BTreeMap<PlayerId, Rat>,
    upper: &BTreeMap<PlayerId, Rat>,
    epsilon: &Rat,
) -> Result<VerificationReport, VerifyError> {
    verify_inner(g, profile, Some((lower, upper)), epsilon)
}

// ---------------------------------------------------------------------------
// Direct constraint evaluation
// ---------------------------------------------------------------------------

/// Evaluates the support constraint clauses 1-9 directly on a candidate
/// profile (values instantiated from the exact evaluation, probabilities
/// from the rows), plus the payoff thresholds when given. The profile may
/// carry rows for chance vertices; those claim `p` values that clause 5
/// compares against the game.
///
/// An empty answer on a full profile is equivalent to it being an exact
/// equilibrium with that support.
pub fn check_etr_constraints(
    g: &Game,
    profile: &StationaryProfile,
    thresholds: Option<(&BTreeMap<PlayerId, Rat>, &BTreeMap<PlayerId, Rat>)>,
) -> Result<Vec<ConstraintRef>, VerifyError> {
    // Split off claimed chance rows before compiling the controlled part.
    let mut controlled = profile.clone();
    let mut chance_claims: BTreeMap<usize, BTreeMap<usize, Rat>> = BTreeMap::new();
    for (vid, row) in &profile.rows {
        if let Some(v) = g.vertex_index(vid) {
            if g.is_chance(v) {
                controlled.rows.remove(vid);
                let mut claims = BTreeMap::new();
                for (wid, prob) in row {
                    if let Some(w) = g.vertex_index(wid) {
                        claims.insert(w, prob.exact());
                    }
                }
                chance_claims.insert(v, claims);
            }
        }
    }
    let compiled = controlled.compile(g, true)?;

    // The p assignment: controlled rows from the profile, chance rows from
    // the claims when present, from the game otherwise.
    let n = g.vertex_count();
    let mut p_assign: Vec<BTreeMap<usize, Rat>> = vec![BTreeMap::new(); n];
    for v in 0..n {
        match g.owner(v) {
            Owner::Terminal => {}
            Owner::Player(_) => {
                for (w, p) in compiled.row(v).unwrap_or(&[]) {
                    p_assign[v].insert(*w, p.clone());
                }
            }
            Owner::Chance => {
                if let Some(claims) = chance_claims.get(&v) {
                    p_assign[v] = claims.clone();
                } else {
                    for (pos, &w) in g.successors(v).iter().enumerate() {
                        p_assign[v].insert(w, g.chance_row(v).unwrap()[pos].clone());
                    }
                }
            }
        }
    }

    // Values are taken from the exact evaluation of the profile itself
    // (game chance rows; claimed rows only feed clause 5).
    let values = expected_payoffs(g, &controlled)?;

    let mut out = Vec::new();
    let mut push = |k: u8, detail: String| {
        out.push(ConstraintRef {
            tag: ConstraintTag::Numbered(k),
            detail,
        })
    };
    let edge_detail = |v: usize, w: usize| format!("p[{}->{}]", g.vertex_id(v), g.vertex_id(w));

    for v in 0..n {
        if g.is_terminal(v) {
            continue;
        }
        let mut sum = Rat::zero();
        for &w in g.successors(v) {
            let p = p_assign[v].get(&w).cloned().unwrap_or_else(Rat::zero);
            // 1: support entries positive (support is the positive part, so
            // only explicit non-positive entries can fail) and 2: p <= 1.
            if p.is_negative() {
                push(1, edge_detail(v, w));
            }
            if p > Rat::one() {
                push(2, edge_detail(v, w));
            }
            sum += p.clone();
            // 5: chance rows must match the game.
            if g.is_chance(v) {
                let game_p = g.chance_prob(v, w).cloned().unwrap_or_else(Rat::zero);
                if p != game_p {
                    push(5, edge_detail(v, w));
                }
            }
        }
        // 4: controlled rows are distributions.
        if matches!(g.owner(v), Owner::Player(_)) && !sum.is_one() {
            push(4, g.vertex_id(v).as_str().to_string());
        }
    }

    // Clauses 6-8 hold by construction of the exact evaluation; clause 9 is
    // the substantive equilibrium test.
    for (i, table) in &values.tables {
        for t in g.terminals() {
            let pi = g.player_index(i).unwrap();
            if table[g.vertex_id(t)] != g.reward(t, pi) {
                push(6, format!("{i}@{}", g.vertex_id(t)));
            }
        }
    }
    for v in 0..n {
        if let Owner::Player(i) = g.owner(v) {
            let table = &values.tables[i];
            let rv = &table[g.vertex_id(v)];
            for &w in g.successors(v) {
                if *rv < table[g.vertex_id(w)] {
                    push(9, format!("{i}@{}->{}", g.vertex_id(v), g.vertex_id(w)));
                }
            }
        }
    }

    if let Some((lower, upper)) = thresholds {
        let v0 = g.vertex_id(g.initial());
        for i in g.players() {
            let lo = lower
                .get(i)
                .ok_or_else(|| VerifyError::MissingThreshold(i.as_str().to_string()))?;
            let hi = upper
                .get(i)
                .ok_or_else(|| VerifyError::MissingThreshold(i.as_str().to_string()))?;
            let payoff = &values.tables[i][v0];
            if payoff < lo {
                out.push(ConstraintRef {
                    tag: ConstraintTag::LowerThreshold(i.clone()),
                    detail: i.as_str().to_string(),
                });
            }
            if payoff > hi {
                out.push(ConstraintRef {
                    tag: ConstraintTag::UpperThreshold(i.clone()),
                    detail: i.as_str().to_string(),
                });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Promise-pipeline decision
// ---------------------------------------------------------------------------

/// The guess-and-check acceptance path: payoffs evaluated to within eps/8,
/// deviations tested against `payoff + 3eps/4` with tolerance eps/8, and
/// thresholds checked with eps/4 slack. Accepts every eps/8-constrained
/// equilibrium and rejects every profile with an eps-profitable deviation.
///
/// `epsilon` must be a dyadic 2^-k so the tolerances stay dyadic.
pub fn theorem1_accepts(
    g: &Game,
    profile: &StationaryProfile,
    lower: &BTreeMap<PlayerId, Rat>,
    upper: &BTreeMap<PlayerId, Rat>,
    epsilon: &Rat,
    mode: DecisionMode,
) -> Result<bool, VerifyError> {
    for p in g.players() {
        if !lower.contains_key(p) || !upper.contains_key(p) {
            return Err(VerifyError::MissingThreshold(p.as_str().to_string()));
        }
    }
    let eighth = epsilon.clone() / rat(8, 1);
    let quarter = epsilon.clone() / rat(4, 1);
    let three_quarters = epsilon.clone() * rat(3, 4);
    for i in g.players() {
        let approx_payoff = approx_mc_value(g, profile, i, &eighth)?;
        // No eps-unilateral deviation: the deviation value must not clear
        // payoff + 3eps/4 by more than the promise tolerance.
        let alpha = approx_payoff.clone() + three_quarters.clone();
        let decision = approx_mdp_decision(g, profile, i, &alpha, &eighth, mode)?;
        if decision == Decision::No {
            return Ok(false);
        }
        if approx_payoff < lower[i].clone() - quarter.clone()
            || approx_payoff > upper[i].clone() + quarter.clone()
        {
            return Ok(false);
        }
    }
    Ok(true)
}
