//! Constructors for the two explicit game families and their reference
//! strategy profiles: the five-player chain-of-multipliers family `G^n`,
//! whose unique constrained equilibria need probabilities of the order
//! 2^(-2^n), and the 3SAT reduction game with its equilibrium built from a
//! satisfying valuation.

use std::collections::BTreeMap;

use num_traits::One;
use thiserror::Error;

use crate::model::{EdgeSpec, Game, Owner, PlayerId, StationaryProfile, VertexId};
use crate::rational::{pow2, rat, rint, Rat};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("n must be at least 1")]
    BadSize,
    #[error("epsilon must be positive")]
    BadEpsilon,
    #[error("formula must have at least one clause")]
    EmptyFormula,
    #[error("clause {clause} has {len} literals, expected exactly 3")]
    ClauseArity { clause: usize, len: usize },
    #[error("clause {clause} uses variable {var}, outside the declared range 1..={max}")]
    VariableRange {
        clause: usize,
        var: usize,
        max: usize,
    },
    #[error("valuation does not satisfy clause {0}")]
    UnsatisfiedClause(usize),
    #[error("dimacs: {0}")]
    Dimacs(String),
    #[error("internal: {0}")]
    Internal(String),
}

pub const CIRCLE: &str = "circle";
pub const SQUARE: &str = "square";
pub const TRIANGLE: &str = "triangle";
pub const DIAMOND: &str = "diamond";
pub const PENTAGON: &str = "pentagon";
pub const SOLVER: &str = "Solver";

fn player(name: &str) -> PlayerId {
    PlayerId::new(name).expect("generator player names are valid")
}

fn vid(s: String) -> VertexId {
    VertexId::new(s)
}

// ---------------------------------------------------------------------------
// The G^n family
// ---------------------------------------------------------------------------

/// Vertex names of `G^n`, kept in one place so profiles and tests agree.
pub mod gn_names {
    pub fn s0() -> String {
        "s0".into()
    }
    pub fn def_entry(i: usize) -> String {
        format!("r{i}")
    }
    pub fn def_left(i: usize) -> String {
        format!("t{i}")
    }
    pub fn def_right(i: usize) -> String {
        format!("t{i}p")
    }
    pub fn mul(letter: char, i: usize) -> String {
        format!("{letter}{i}")
    }
    pub fn mul_terminal(i: usize, j: usize) -> String {
        format!("t{i}_{j}")
    }
}

/// Builds `G^n`: an initial coin over n multiplier gadgets, sharing a chain
/// of randomization gadgets def_0..def_n. Rewards follow the published
/// tables; everything omitted is 0. Rewards range up to n and one entry is
/// negative (the triangle reward n-i-1 at i = n), so no [0,1] clamping is
/// applied.
pub fn build_gn(n: usize) -> Result<Game, GeneratorError> {
    if n < 1 {
        return Err(GeneratorError::BadSize);
    }
    use gn_names::*;
    let players: Vec<PlayerId> = [CIRCLE, SQUARE, TRIANGLE, DIAMOND, PENTAGON]
        .iter()
        .map(|p| player(p))
        .collect();
    let circle = player(CIRCLE);
    let square = player(SQUARE);
    let triangle = player(TRIANGLE);
    let diamond = player(DIAMOND);
    let pentagon = player(PENTAGON);

    let mut vertices: Vec<(VertexId, Owner)> = Vec::new();
    let mut edges: Vec<EdgeSpec> = Vec::new();
    let mut rewards: BTreeMap<VertexId, BTreeMap<PlayerId, Rat>> = BTreeMap::new();

    let ni = |i: usize| rint(n as i64 - i as i64);

    // Initial coin.
    vertices.push((vid(s0()), Owner::Chance));
    for i in 1..=n {
        edges.push(EdgeSpec {
            from: vid(s0()),
            to: vid(mul('a', i)),
            prob: Some(rat(1, n as i64)),
        });
    }

    // def gadgets: def_0 is a fixed coin, def_i (i >= 1) is a circle choice.
    for i in 0..=n {
        let entry = vid(def_entry(i));
        let left = vid(def_left(i));
        let right = vid(def_right(i));
        if i == 0 {
            vertices.push((entry.clone(), Owner::Chance));
        } else {
            vertices.push((entry.clone(), Owner::Player(circle.clone())));
        }
        vertices.push((left.clone(), Owner::Terminal));
        vertices.push((right.clone(), Owner::Terminal));
        let coin = (i == 0).then(|| rat(1, 2));
        edges.push(EdgeSpec {
            from: entry.clone(),
            to: left.clone(),
            prob: coin.clone(),
        });
        edges.push(EdgeSpec {
            from: entry,
            to: right.clone(),
            prob: coin,
        });
        // t_i: square 1, triangle n-i-1, diamond 1.
        rewards.insert(
            left,
            BTreeMap::from([
                (square.clone(), rint(1)),
                (triangle.clone(), ni(i) - rint(1)),
                (diamond.clone(), rint(1)),
            ]),
        );
        // t_i': triangle n-i, pentagon 1.
        rewards.insert(
            right,
            BTreeMap::from([(triangle.clone(), ni(i)), (pentagon.clone(), rint(1))]),
        );
    }

    // mul gadgets.
    for i in 1..=n {
        let owner_of = |letter: char| match letter {
            'a' | 'e' | 'h' => Owner::Player(triangle.clone()),
            'b' | 'l' => Owner::Player(pentagon.clone()),
            'c' | 'k' => Owner::Player(diamond.clone()),
            'd' | 'g' => Owner::Player(square.clone()),
            'f' | 'j' | 'm' => Owner::Player(circle.clone()),
            _ => unreachable!(),
        };
        for letter in ['a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'j', 'k', 'l', 'm'] {
            vertices.push((vid(mul(letter, i)), owner_of(letter)));
        }
        for j in 0..=6 {
            vertices.push((vid(mul_terminal(i, j)), Owner::Terminal));
        }
        let mut edge = |from: String, to: String| {
            edges.push(EdgeSpec {
                from: vid(from),
                to: vid(to),
                prob: None,
            })
        };
        edge(mul('a', i), mul('b', i));
        edge(mul('a', i), mul_terminal(i, 0));
        edge(mul('b', i), mul('c', i));
        edge(mul('b', i), mul_terminal(i, 1));
        edge(mul('c', i), mul('d', i));
        edge(mul('c', i), mul('g', i));
        edge(mul('d', i), def_entry(i));
        edge(mul('d', i), mul('e', i));
        edge(mul('e', i), def_entry(i));
        edge(mul('e', i), mul('f', i));
        edge(mul('f', i), mul_terminal(i, 2));
        edge(mul('f', i), mul_terminal(i, 3));
        edge(mul('g', i), mul('h', i));
        edge(mul('g', i), def_entry(i - 1));
        edge(mul('h', i), mul('j', i));
        edge(mul('h', i), def_entry(i - 1));
        edge(mul('j', i), mul('k', i));
        edge(mul('j', i), mul_terminal(i, 6));
        edge(mul('k', i), mul('l', i));
        edge(mul('k', i), def_entry(i - 1));
        edge(mul('l', i), mul('m', i));
        edge(mul('l', i), def_entry(i - 1));
        edge(mul('m', i), mul_terminal(i, 4));
        edge(mul('m', i), mul_terminal(i, 5));

        // Terminal rewards of the gadget.
        rewards.insert(
            vid(mul_terminal(i, 0)),
            BTreeMap::from([(triangle.clone(), ni(i) + rat(1, 8))]),
        );
        rewards.insert(
            vid(mul_terminal(i, 1)),
            BTreeMap::from([(pentagon.clone(), rat(11, 8))]),
        );
        rewards.insert(
            vid(mul_terminal(i, 2)),
            BTreeMap::from([
                (circle.clone(), rint(1)),
                (square.clone(), rint(1)),
                (triangle.clone(), ni(i) - rint(1)),
                (diamond.clone(), rint(1)),
                (pentagon.clone(), rint(2)),
            ]),
        );
        rewards.insert(
            vid(mul_terminal(i, 3)),
            BTreeMap::from([
                (circle.clone(), rint(1)),
                (triangle.clone(), ni(i)),
                (pentagon.clone(), rint(2)),
            ]),
        );
        rewards.insert(
            vid(mul_terminal(i, 4)),
            BTreeMap::from([
                (circle.clone(), rint(1)),
                (square.clone(), rint(1)),
                (triangle.clone(), ni(i)),
                (diamond.clone(), rint(1)),
            ]),
        );
        rewards.insert(
            vid(mul_terminal(i, 5)),
            BTreeMap::from([
                (circle.clone(), rint(1)),
                (square.clone(), rint(1)),
                (triangle.clone(), ni(i)),
                (pentagon.clone(), rint(1)),
            ]),
        );
        rewards.insert(
            vid(mul_terminal(i, 6)),
            BTreeMap::from([
                (circle.clone(), rint(1)),
                (triangle.clone(), ni(i) + rint(1)),
                (pentagon.clone(), rint(1)),
            ]),
        );
    }

    Game::from_parts(players, vertices, edges, rewards, vid(s0()))
        .map_err(|e| GeneratorError::Internal(e.to_string()))
}

/// alpha_i = 1/2^(2^i).
fn alpha(i: usize) -> Rat {
    pow2(-(1i64 << i))
}

/// The exact equilibrium of `G^n`: circle randomizes alpha_i : 1-alpha_i in
/// each def gadget, diamond flips a fair coin at c_i, and the remaining
/// probabilities alpha_i, alpha_{i-1} sit on the circle vertices f, j, m;
/// everything else moves deterministically along the gadget spine.
pub fn gn_exact_ne(n: usize) -> Result<StationaryProfile, GeneratorError> {
    if n < 1 {
        return Err(GeneratorError::BadSize);
    }
    gn_profile(n, &|i| Some(alpha(i)))
}

/// Cutoff index: the smallest I with 1/(2^(2^I + 1) n) <= epsilon.
pub fn gn_epsilon_cutoff(n: usize, epsilon: &Rat) -> usize {
    let n_rat = rint(n as i64);
    let mut i = 0usize;
    loop {
        let margin = pow2(-((1i64 << i) + 1)) / n_rat.clone();
        if margin <= *epsilon {
            return i;
        }
        i += 1;
    }
}

/// The epsilon-equilibrium of `G^n`: same shape as the exact profile but
/// with theta_i = alpha_i below the cutoff index and theta_i = 0 from the
/// cutoff on, and a uniform coin for diamond at every c_i. The cutoff is
/// the proof-consistent one (theta zero at the cutoff itself), which makes
/// the one remaining profitable deviation worth exactly
/// 1/(2^(2^I + 1) n) when the cutoff falls inside 1..=n.
pub fn gn_epsilon_ne(n: usize, epsilon: &Rat) -> Result<StationaryProfile, GeneratorError> {
    if n < 1 {
        return Err(GeneratorError::BadSize);
    }
    if !num_traits::Signed::is_positive(epsilon) {
        return Err(GeneratorError::BadEpsilon);
    }
    let cutoff = gn_epsilon_cutoff(n, epsilon);
    gn_profile(n, &|i| (i < cutoff).then(|| alpha(i)))
}

/// Shared profile skeleton: `theta(i)` gives the randomization weight used
/// at def entry r_i, at f_i (index i), and at j_i / m_i (index i-1); `None`
/// means weight zero (the row degenerates to the complementary edge).
fn gn_profile(
    n: usize,
    theta: &dyn Fn(usize) -> Option<Rat>,
) -> Result<StationaryProfile, GeneratorError> {
    use gn_names::*;
    let mut profile = StationaryProfile::new();
    let mut weighted_row = |from: String, heavy: String, light: String, w: Option<Rat>| match w {
        Some(w) if w.is_one() => profile.set_pure(vid(from), vid(heavy)),
        Some(w) => profile.set_exact_row(
            vid(from),
            vec![(vid(heavy), w.clone()), (vid(light), Rat::one() - w)],
        ),
        None => profile.set_pure(vid(from), vid(light)),
    };
    for i in 1..=n {
        weighted_row(def_entry(i), def_left(i), def_right(i), theta(i));
        weighted_row(
            mul('f', i),
            mul_terminal(i, 2),
            mul_terminal(i, 3),
            theta(i),
        );
        weighted_row(mul('j', i), mul('k', i), mul_terminal(i, 6), theta(i - 1));
        weighted_row(
            mul('m', i),
            mul_terminal(i, 4),
            mul_terminal(i, 5),
            theta(i - 1),
        );
    }
    for i in 1..=n {
        profile.set_exact_row(
            vid(mul('c', i)),
            vec![(vid(mul('d', i)), rat(1, 2)), (vid(mul('g', i)), rat(1, 2))],
        );
        profile.set_pure(vid(mul('a', i)), vid(mul('b', i)));
        profile.set_pure(vid(mul('b', i)), vid(mul('c', i)));
        profile.set_pure(vid(mul('d', i)), vid(mul('e', i)));
        profile.set_pure(vid(mul('e', i)), vid(mul('f', i)));
        profile.set_pure(vid(mul('g', i)), vid(mul('h', i)));
        profile.set_pure(vid(mul('h', i)), vid(mul('j', i)));
        profile.set_pure(vid(mul('k', i)), vid(mul('l', i)));
        profile.set_pure(vid(mul('l', i)), vid(mul('m', i)));
    }
    Ok(profile)
}

// ---------------------------------------------------------------------------
// 3SAT reduction game
// ---------------------------------------------------------------------------

/// A literal: 1-based variable index plus polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Literal {
    pub var: usize,
    pub positive: bool,
}

impl Literal {
    pub fn satisfied_by(&self, value: bool) -> bool {
        self.positive == value
    }
}

/// A 3-CNF formula: every clause has exactly three positional literals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnfFormula {
    pub var_count: usize,
    pub clauses: Vec<[Literal; 3]>,
}

impl CnfFormula {
    pub fn new(var_count: usize, clauses: Vec<[Literal; 3]>) -> Result<Self, GeneratorError> {
        for (ci, clause) in clauses.iter().enumerate() {
            for lit in clause {
                if lit.var == 0 || lit.var > var_count {
                    return Err(GeneratorError::VariableRange {
                        clause: ci + 1,
                        var: lit.var,
                        max: var_count,
                    });
                }
            }
        }
        Ok(CnfFormula { var_count, clauses })
    }

    pub fn clause_count(&self) -> usize {
        self.clauses.len()
    }

    pub fn satisfied_by(&self, valuation: &[bool]) -> bool {
        self.clauses.iter().all(|clause| {
            clause
                .iter()
                .any(|lit| lit.satisfied_by(valuation[lit.var - 1]))
        })
    }
}

/// Vertex names of the reduction game.
pub mod sat_names {
    pub fn clause(i: usize) -> String {
        format!("C{i}")
    }
    pub fn literal(i: usize, j: usize) -> String {
        format!("C{i}_{j}")
    }
    pub fn recycler() -> String {
        "s".into()
    }
    pub fn var_terminal(v: usize) -> String {
        format!("tx{v}")
    }
    pub fn solver_terminal() -> String {
        "tS".into()
    }
    pub fn all_one_terminal() -> String {
        "t".into()
    }
}

/// Builds the reduction game: Solver picks a literal per clause; positive
/// literal vertices are fair coins between the variable's punishment
/// terminal and the next clause; negative literal vertices let the variable
/// player exit to Solver's punishment terminal; after the last clause a fair
/// coin either restarts from the first clause or stops with reward 1 for
/// everyone.
pub fn build_sat_game(formula: &CnfFormula) -> Result<Game, GeneratorError> {
    use sat_names::*;
    let m = formula.clause_count();
    if m == 0 {
        return Err(GeneratorError::EmptyFormula);
    }
    let solver = player(SOLVER);
    let var_player = |v: usize| player(&format!("x{v}"));

    let mut players = vec![solver.clone()];
    for v in 1..=formula.var_count {
        players.push(var_player(v));
    }

    let mut vertices: Vec<(VertexId, Owner)> = Vec::new();
    let mut edges: Vec<EdgeSpec> = Vec::new();
    let mut rewards: BTreeMap<VertexId, BTreeMap<PlayerId, Rat>> = BTreeMap::new();

    let everyone_except = |skip: Option<&PlayerId>| -> BTreeMap<PlayerId, Rat> {
        players
            .iter()
            .map(|p| {
                let val = if Some(p) == skip { rint(0) } else { rint(1) };
                (p.clone(), val)
            })
            .collect()
    };

    let next_of = |i: usize| {
        if i == m {
            recycler()
        } else {
            clause(i + 1)
        }
    };

    for i in 1..=m {
        vertices.push((vid(clause(i)), Owner::Player(solver.clone())));
    }
    let mut var_terminal_made = vec![false; formula.var_count + 1];
    for (ci, cl) in formula.clauses.iter().enumerate() {
        let i = ci + 1;
        for (li, lit) in cl.iter().enumerate() {
            let j = li + 1;
            let lv = vid(literal(i, j));
            edges.push(EdgeSpec {
                from: vid(clause(i)),
                to: lv.clone(),
                prob: None,
            });
            if lit.positive {
                vertices.push((lv.clone(), Owner::Chance));
                if !var_terminal_made[lit.var] {
                    var_terminal_made[lit.var] = true;
                    vertices.push((vid(var_terminal(lit.var)), Owner::Terminal));
                    rewards.insert(
                        vid(var_terminal(lit.var)),
                        everyone_except(Some(&var_player(lit.var))),
                    );
                }
                edges.push(EdgeSpec {
                    from: lv.clone(),
                    to: vid(var_terminal(lit.var)),
                    prob: Some(rat(1, 2)),
                });
                edges.push(EdgeSpec {
                    from: lv,
                    to: vid(next_of(i)),
                    prob: Some(rat(1, 2)),
                });
            } else {
                vertices.push((lv.clone(), Owner::Player(var_player(lit.var))));
                edges.push(EdgeSpec {
                    from: lv.clone(),
                    to: vid(solver_terminal()),
                    prob: None,
                });
                edges.push(EdgeSpec {
                    from: lv,
                    to: vid(next_of(i)),
                    prob: None,
                });
            }
        }
    }
    vertices.push((vid(recycler()), Owner::Chance));
    edges.push(EdgeSpec {
        from: vid(recycler()),
        to: vid(clause(1)),
        prob: Some(rat(1, 2)),
    });
    edges.push(EdgeSpec {
        from: vid(recycler()),
        to: vid(all_one_terminal()),
        prob: Some(rat(1, 2)),
    });
    vertices.push((vid(solver_terminal()), Owner::Terminal));
    rewards.insert(vid(solver_terminal()), everyone_except(Some(&solver)));
    vertices.push((vid(all_one_terminal()), Owner::Terminal));
    rewards.insert(vid(all_one_terminal()), everyone_except(None));

    Game::from_parts(players, vertices, edges, rewards, vid(clause(1)))
        .map_err(|e| GeneratorError::Internal(e.to_string()))
}

/// The pure equilibrium induced by a satisfying valuation: Solver moves to
/// the lowest satisfied literal position in each clause, and every variable
/// player always continues to the next clause.
pub fn sat_ne_from_valuation(
    formula: &CnfFormula,
    valuation: &[bool],
) -> Result<StationaryProfile, GeneratorError> {
    use sat_names::*;
    let m = formula.clause_count();
    if m == 0 {
        return Err(GeneratorError::EmptyFormula);
    }
    debug_assert_eq!(valuation.len(), formula.var_count);
    let mut profile = StationaryProfile::new();
    for (ci, cl) in formula.clauses.iter().enumerate() {
        let i = ci + 1;
        let j = cl
            .iter()
            .position(|lit| lit.satisfied_by(valuation[lit.var - 1]))
            .ok_or(GeneratorError::UnsatisfiedClause(i))?;
        profile.set_pure(vid(clause(i)), vid(literal(i, j + 1)));
        let next = if i == m { recycler() } else { clause(i + 1) };
        for (li, lit) in cl.iter().enumerate() {
            if !lit.positive {
                profile.set_pure(vid(literal(i, li + 1)), vid(next.clone()));
            }
        }
    }
    Ok(profile)
}

/// The deviation threshold of the reduction: 2^(-3m).
pub fn sat_epsilon(formula: &CnfFormula) -> Rat {
    pow2(-(3 * formula.clause_count() as i64))
}

// ---------------------------------------------------------------------------
// DIMACS
// ---------------------------------------------------------------------------

/// Parses DIMACS CNF restricted to exactly-3-literal clauses. Comment lines
/// start with `c`; the header `p cnf <vars> <clauses>` must match the body.
pub fn parse_dimacs(text: &str) -> Result<CnfFormula, GeneratorError> {
    let mut declared: Option<(usize, usize)> = None;
    let mut literals: Vec<i64> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("p ") {
            if declared.is_some() {
                return Err(GeneratorError::Dimacs(format!(
                    "line {}: duplicate header",
                    lineno + 1
                )));
            }
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "cnf" {
                return Err(GeneratorError::Dimacs(format!(
                    "line {}: malformed header `{line}`",
                    lineno + 1
                )));
            }
            let vars = parts[1].parse::<usize>().map_err(|_| {
                GeneratorError::Dimacs(format!("line {}: bad variable count", lineno + 1))
            })?;
            let clauses = parts[2].parse::<usize>().map_err(|_| {
                GeneratorError::Dimacs(format!("line {}: bad clause count", lineno + 1))
            })?;
            declared = Some((vars, clauses));
            continue;
        }
        for tok in line.split_whitespace() {
            let lit = tok.parse::<i64>().map_err(|_| {
                GeneratorError::Dimacs(format!("line {}: bad literal `{tok}`", lineno + 1))
            })?;
            literals.push(lit);
        }
    }
    let (vars, clause_count) =
        declared.ok_or_else(|| GeneratorError::Dimacs("missing `p cnf` header".into()))?;
    let mut clauses: Vec<[Literal; 3]> = Vec::new();
    let mut current: Vec<Literal> = Vec::new();
    for lit in literals {
        if lit == 0 {
            if current.len() != 3 {
                return Err(GeneratorError::ClauseArity {
                    clause: clauses.len() + 1,
                    len: current.len(),
                });
            }
            clauses.push([current[0], current[1], current[2]]);
            current.clear();
        } else {
            current.push(Literal {
                var: lit.unsigned_abs() as usize,
                positive: lit > 0,
            });
        }
    }
    if !current.is_empty() {
        return Err(GeneratorError::Dimacs(format!(
            "clause {} is not terminated by 0",
            clauses.len() + 1
        )));
    }
    if clauses.len() != clause_count {
        return Err(GeneratorError::Dimacs(format!(
            "header declares {clause_count} clauses but clause list ends after clause {}",
            clauses.len()
        )));
    }
    CnfFormula::new(vars, clauses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{expected_payoffs, mdp_best_response};
    use crate::model::{validate_game, Owner, Prob, VertexId};
    use crate::rational::pow2;
    use crate::verify::verify_epsilon_ne;
    use num_traits::{Signed, Zero};

    fn lit(v: i64) -> Literal {
        Literal {
            var: v.unsigned_abs() as usize,
            positive: v > 0,
        }
    }

    #[test]
    fn gn_vertex_census() {
        // 1 coin + (n+1) def entries + 2(n+1) def terminals + 12n gadget
        // vertices + 7n gadget terminals.
        for n in 1..=3 {
            let g = build_gn(n).unwrap();
            assert_eq!(g.vertex_count(), 22 * n + 4, "n={n}");
            assert!(validate_game(&g).is_empty());
        }
        assert_eq!(build_gn(1).unwrap().vertex_count(), 26);
        assert!(build_gn(0).is_err());
    }

    #[test]
    fn gn_def_gadgets_are_shared() {
        let g = build_gn(2).unwrap();
        // Both d_i/e_i (into def_i) and the lower row (into def_{i-1})
        // target the single entry vertex r_i.
        let d1 = g.vertex_index(&VertexId::from("d1")).unwrap();
        let r1 = g.vertex_index(&VertexId::from("r1")).unwrap();
        assert!(g.successors(d1).contains(&r1));
        let g2 = g.vertex_index(&VertexId::from("g2")).unwrap();
        assert!(g.successors(g2).contains(&r1));
        let k2 = g.vertex_index(&VertexId::from("k2")).unwrap();
        assert!(g.successors(k2).contains(&r1));
    }

    #[test]
    fn gn_max_reward_scan() {
        // The largest reward is n for n >= 2 (triangle at t_{i6} with i = 1
        // and at t_0'); pentagon's fixed reward 2 caps the scan at n = 1.
        for n in 1..=3 {
            let g = build_gn(n).unwrap();
            let mut best = Rat::zero();
            for v in g.terminals() {
                for r in g.reward_entries(v).values() {
                    if *r > best {
                        best = r.clone();
                    }
                }
            }
            assert_eq!(best, rint((n as i64).max(2)), "n={n}");
        }
    }

    #[test]
    fn gn_has_one_negative_reward_at_the_last_gadget() {
        let g = build_gn(2).unwrap();
        let triangle = g.player_index(&PlayerId::new(TRIANGLE).unwrap()).unwrap();
        let t2 = g.vertex_index(&VertexId::from("t2")).unwrap();
        assert_eq!(g.reward(t2, triangle), rint(-1));
    }

    #[test]
    fn exact_ne_probabilities() {
        let p1 = gn_exact_ne(1).unwrap();
        let Prob::Exact(a1) = &p1.rows[&VertexId::from("r1")][&VertexId::from("t1")] else {
            panic!()
        };
        assert_eq!(*a1, rat(1, 4));

        let p4 = gn_exact_ne(4).unwrap();
        let Prob::Exact(a4) = &p4.rows[&VertexId::from("r4")][&VertexId::from("t4")] else {
            panic!()
        };
        assert_eq!(*a4, rat(1, 65536));
        assert_eq!(*a4, pow2(-16));

        let Prob::Exact(beta) = &p1.rows[&VertexId::from("c1")][&VertexId::from("d1")] else {
            panic!()
        };
        assert_eq!(*beta, rat(1, 2));
    }

    #[test]
    fn exact_ne_verifies_for_small_n() {
        for n in 1..=2 {
            let g = build_gn(n).unwrap();
            let sigma = gn_exact_ne(n).unwrap();
            assert!(verify_epsilon_ne(&g, &sigma, &Rat::zero()).unwrap().is_ne);
        }
    }

    #[test]
    fn multiplication_gadget_identity() {
        // Diamond's continuation value from d_i is alpha_i, from g_i it is
        // alpha_{i-1}^2, and the two agree.
        let n = 3;
        let g = build_gn(n).unwrap();
        let sigma = gn_exact_ne(n).unwrap();
        let diamond = PlayerId::new(DIAMOND).unwrap();
        let values = expected_payoffs(&g, &sigma).unwrap();
        let table = &values.tables[&diamond];
        for i in 1..=n {
            let from_d = table[&VertexId::new(format!("d{i}"))].clone();
            let from_g = table[&VertexId::new(format!("g{i}"))].clone();
            assert_eq!(from_d, alpha(i), "i={i}");
            assert_eq!(from_g, alpha(i - 1) * alpha(i - 1), "i={i}");
            assert_eq!(from_d, from_g, "i={i}");
        }
    }

    #[test]
    fn deviation_guards_hold_as_identities() {
        // Triangle's value at a_i is n-i+1/2-alpha_i/2-alpha_{i-1}/2 and is
        // at least the exit reward n-i+1/8; pentagon's value at b_i is
        // 3/2 - alpha_{i-1}^2/2 and is at least 11/8.
        let n = 3;
        let g = build_gn(n).unwrap();
        let sigma = gn_exact_ne(n).unwrap();
        let values = expected_payoffs(&g, &sigma).unwrap();
        let triangle = &values.tables[&PlayerId::new(TRIANGLE).unwrap()];
        let pentagon = &values.tables[&PlayerId::new(PENTAGON).unwrap()];
        for i in 1..=n {
            let ni = rint(n as i64 - i as i64);
            let at_a = triangle[&VertexId::new(format!("a{i}"))].clone();
            let expected = ni.clone() + rat(1, 2) - rat(1, 2) * alpha(i) - rat(1, 2) * alpha(i - 1);
            assert_eq!(at_a, expected, "i={i}");
            assert!(at_a >= ni + rat(1, 8), "i={i}");
            let at_b = pentagon[&VertexId::new(format!("b{i}"))].clone();
            let expected = rat(3, 2) - rat(1, 2) * alpha(i - 1) * alpha(i - 1);
            assert_eq!(at_b, expected, "i={i}");
            assert!(at_b >= rat(11, 8), "i={i}");
        }
    }

    #[test]
    fn epsilon_profile_cutoff_and_margin() {
        // n=2, eps=1/16: cutoff 1, so theta_0 = 1/2 and everything above is
        // zero; the only profitable deviation is diamond's at c_1, worth
        // theta_0^2 / (2n) = 1/16 exactly.
        let eps = rat(1, 16);
        assert_eq!(gn_epsilon_cutoff(2, &eps), 1);
        let g = build_gn(2).unwrap();
        let tau = gn_epsilon_ne(2, &eps).unwrap();
        let r1 = &tau.rows[&VertexId::from("r1")];
        assert_eq!(r1.len(), 1);
        assert!(r1.contains_key(&VertexId::from("t1p")));
        let j1 = &tau.rows[&VertexId::from("j1")];
        assert_eq!(j1[&VertexId::from("k1")], Prob::Exact(rat(1, 2)));
        let diamond = PlayerId::new(DIAMOND).unwrap();
        let payoff = expected_payoffs(&g, &tau).unwrap().payoffs[&diamond].clone();
        let br = mdp_best_response(&g, &tau, &diamond).unwrap();
        assert_eq!(br.value - payoff, rat(1, 16));
        assert_eq!(
            rat(1, 16),
            pow2(-(2i64.pow(1) + 1)) / rint(2),
            "margin closed form 1/(2^(2^I+1) n)"
        );
    }

    #[test]
    fn epsilon_profile_bit_sizes_are_polynomial() {
        use crate::rational::{bit_int, bit_rat};
        use num_bigint::BigInt;
        for (n, exp) in [(2usize, 4i64), (3, 10), (4, 20)] {
            let eps = pow2(-exp);
            let g = build_gn(n).unwrap();
            let tau = gn_epsilon_ne(n, &eps).unwrap();
            let cutoff = gn_epsilon_cutoff(n, &eps);
            let bound = bit_int(&BigInt::from(n)) + (1u64 << cutoff) + 2;
            let max_bits = tau.max_entry_bit_size(&g).unwrap();
            assert!(
                max_bits <= bound,
                "n={n} eps=2^-{exp}: {max_bits} > {bound}"
            );
            let _ = bit_rat(&eps);
        }
    }

    #[test]
    fn sat_game_matches_figure() {
        let formula = CnfFormula::new(3, vec![[lit(1), lit(2), lit(-3)]]).unwrap();
        let g = build_sat_game(&formula).unwrap();
        // m + 3m + 1 + positive-occurrence terminals + tS + t.
        assert_eq!(g.vertex_count(), 1 + 3 + 1 + 2 + 2);
        assert!(validate_game(&g).is_empty());
        let c1 = g.vertex_index(&VertexId::from("C1")).unwrap();
        assert_eq!(g.successors(c1).len(), 3);
        let l1 = g.vertex_index(&VertexId::from("C1_1")).unwrap();
        assert!(g.is_chance(l1));
        assert_eq!(
            g.chance_prob(l1, g.vertex_index(&VertexId::from("tx1")).unwrap()),
            Some(&rat(1, 2))
        );
        let l3 = g.vertex_index(&VertexId::from("C1_3")).unwrap();
        assert!(matches!(g.owner(l3), Owner::Player(p) if p.as_str() == "x3"));
        // With one clause, continuing leads to the recycling coin.
        let s = g.vertex_index(&VertexId::from("s")).unwrap();
        assert!(g.successors(l1).contains(&s));
        assert!(g.successors(l3).contains(&s));
    }

    #[test]
    fn duplicate_literals_make_distinct_vertices() {
        let formula = CnfFormula::new(2, vec![[lit(1), lit(1), lit(2)]]).unwrap();
        let g = build_sat_game(&formula).unwrap();
        assert!(g.vertex_index(&VertexId::from("C1_1")).is_some());
        assert!(g.vertex_index(&VertexId::from("C1_2")).is_some());
        // Both share the variable terminal tx1.
        assert_eq!(g.vertex_count(), 1 + 3 + 1 + 2 + 2);
    }

    #[test]
    fn sat_profile_is_an_equilibrium() {
        let formula = CnfFormula::new(3, vec![[lit(1), lit(2), lit(-3)]]).unwrap();
        let g = build_sat_game(&formula).unwrap();
        let sigma = sat_ne_from_valuation(&formula, &[true, false, false]).unwrap();
        let report = verify_epsilon_ne(&g, &sigma, &Rat::zero()).unwrap();
        assert!(report.is_ne);
        assert_eq!(
            report.players[&PlayerId::new(SOLVER).unwrap()].payoff,
            rint(1)
        );
        assert!(matches!(
            sat_ne_from_valuation(&formula, &[false, false, true]),
            Err(GeneratorError::UnsatisfiedClause(1))
        ));
    }

    #[test]
    fn sat_epsilon_values() {
        let f1 = CnfFormula::new(3, vec![[lit(1), lit(2), lit(-3)]]).unwrap();
        assert_eq!(sat_epsilon(&f1), rat(1, 8));
        let f3 = CnfFormula::new(
            3,
            vec![
                [lit(1), lit(2), lit(-3)],
                [lit(-1), lit(2), lit(3)],
                [lit(1), lit(-2), lit(3)],
            ],
        )
        .unwrap();
        assert_eq!(sat_epsilon(&f3), rat(1, 512));
        let empty = CnfFormula::new(0, Vec::new()).unwrap();
        assert_eq!(sat_epsilon(&empty), rint(1));
    }

    #[test]
    fn dimacs_parsing() {
        let f = parse_dimacs("c a comment\np cnf 3 1\n1 2 -3 0\n").unwrap();
        assert_eq!(f.var_count, 3);
        assert_eq!(f.clause_count(), 1);
        assert_eq!(f.clauses[0][2].var, 3);
        assert!(!f.clauses[0][2].positive);

        assert!(matches!(
            parse_dimacs("p cnf 2 1\n1 2 0\n"),
            Err(GeneratorError::ClauseArity { clause: 1, len: 2 })
        ));
        let err = parse_dimacs("p cnf 3 2\n1 2 -3 0\n").unwrap_err();
        assert!(err.to_string().contains("clause 1"), "got: {err}");
        assert!(matches!(
            parse_dimacs("p cnf 2 1\n1 2 -3 0\n"),
            Err(GeneratorError::VariableRange { var: 3, .. })
        ));
        assert!(parse_dimacs("1 2 3 0\n").is_err());
    }

    #[test]
    fn epsilon_profile_probabilities_positive() {
        // Every stored row entry is a probability in (0, 1].
        let eps = pow2(-10);
        let g = build_gn(3).unwrap();
        let tau = gn_epsilon_ne(3, &eps).unwrap();
        for row in tau.rows.values() {
            for p in row.values() {
                let v = p.exact();
                assert!(v.is_positive() && v <= rint(1));
            }
        }
        assert!(crate::model::reachable_support(&g, &tau).is_ok());
    }
}

#[cfg(test)]
mod cutoff_zero_tests {
    use super::*;
    use crate::evaluate::mdp_best_response;
    use crate::model::PlayerId;
    use crate::verify::verify_epsilon_ne;

    /// With epsilon at least 1/(4n) the cutoff index is 0 and every
    /// randomization weight collapses to zero. The profile stays an
    /// epsilon-equilibrium, but the one profitable deviation moves to
    /// square, who can now reach the def_0 coin worth 1/2 from g_1: gain
    /// (1/n) * (1/2) * (1/2) = 1/(4n) exactly.
    #[test]
    fn cutoff_zero_profile_is_still_an_epsilon_equilibrium() {
        let n = 2;
        let eps = rat(1, 8);
        assert_eq!(gn_epsilon_cutoff(n, &eps), 0);
        let g = build_gn(n).unwrap();
        let tau = gn_epsilon_ne(n, &eps).unwrap();
        let report = verify_epsilon_ne(&g, &tau, &eps).unwrap();
        assert!(report.is_ne);
        let square = PlayerId::new(SQUARE).unwrap();
        let payoff = report.players[&square].payoff.clone();
        let br = mdp_best_response(&g, &tau, &square).unwrap();
        assert_eq!(br.value - payoff, rat(1, 8));
        assert_eq!(report.max_margin(), rat(1, 8));
    }
}
