//! Core game-arena data model: players, vertices, edges, chance rows,
//! terminal rewards, stationary profiles, plus parsing, validation, and the
//! structural queries the rest of the crate is built on.
//!
//! A game is a directed arena whose vertices are owned by a player, by
//! chance, or are terminal sinks. Chance rows carry exact rational
//! probabilities; terminal vertices carry one exact rational reward per
//! player (zero when omitted). Everything is immutable after construction.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fpnum::FloatL;
use crate::rational::{bit_rat, format_rat, parse_rat, Rat, RatParseError};

pub const CHANCE_TAG: &str = "chance";
pub const TERMINAL_TAG: &str = "terminal";

/// Player identifier: a non-empty name distinct from the reserved owner tags.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(String);

impl PlayerId {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ModelError::EmptyPlayerName);
        }
        if name == CHANCE_TAG || name == TERMINAL_TAG {
            return Err(ModelError::ReservedPlayerName(name));
        }
        Ok(PlayerId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Vertex identifier within a game.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(String);

impl VertexId {
    pub fn new(name: impl Into<String>) -> Self {
        VertexId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VertexId {
    fn from(s: &str) -> Self {
        VertexId(s.to_string())
    }
}

/// Who moves at a vertex.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Owner {
    Player(PlayerId),
    Chance,
    Terminal,
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Player(p) => f.write_str(p.as_str()),
            Owner::Chance => f.write_str(CHANCE_TAG),
            Owner::Terminal => f.write_str(TERMINAL_TAG),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("syntax error in game file: {0}")]
    Syntax(String),
    #[error("player name must be non-empty")]
    EmptyPlayerName,
    #[error("player name `{0}` collides with a reserved owner tag")]
    ReservedPlayerName(String),
    #[error("duplicate player `{0}`")]
    DuplicatePlayer(String),
    #[error("duplicate vertex id `{0}`")]
    DuplicateVertex(String),
    #[error("unknown vertex `{vertex}` referenced by {context}")]
    UnknownVertex { vertex: String, context: String },
    #[error("unknown player `{player}` referenced by {context}")]
    UnknownPlayer { player: String, context: String },
    #[error("duplicate edge {from} -> {to}")]
    DuplicateEdge { from: String, to: String },
    #[error("edge {from} -> {to}: {reason}")]
    BadEdgeProbability {
        from: String,
        to: String,
        reason: String,
    },
    #[error("field {field}: {source}")]
    BadRational {
        field: String,
        source: RatParseError,
    },
    #[error("game fails validation: {0}")]
    Invalid(ViolationList),
}

/// A single invariant violation, reported as data rather than a failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub vertex: Option<VertexId>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.vertex {
            Some(v) => write!(f, "{v}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ViolationList(pub Vec<Violation>);

impl fmt::Display for ViolationList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

#[derive(Debug, Clone)]
struct Vertex {
    id: VertexId,
    owner: Owner,
}

/// Immutable turn-based game arena with exact rational chance and rewards.
#[derive(Debug, Clone)]
pub struct Game {
    players: Vec<PlayerId>,
    vertices: Vec<Vertex>,
    /// Successor indices per vertex, in declaration order.
    succ: Vec<Vec<usize>>,
    /// Chance probabilities aligned with `succ`, present exactly on chance vertices.
    chance: Vec<Option<Vec<Rat>>>,
    /// Terminal rewards: player index -> reward, sparse (omitted = 0).
    rewards: Vec<BTreeMap<usize, Rat>>,
    initial: usize,
    vindex: BTreeMap<VertexId, usize>,
    pindex: BTreeMap<PlayerId, usize>,
}

/// Plain edge description used when assembling games programmatically.
#[derive(Debug, Clone)]
pub struct EdgeSpec {
    pub from: VertexId,
    pub to: VertexId,
    pub prob: Option<Rat>,
}

impl Game {
    /// Structural assembly: resolves names, rejects duplicates and dangling
    /// references. Semantic invariants are left to [`validate_game`].
    pub fn from_parts(
        players: Vec<PlayerId>,
        vertices: Vec<(VertexId, Owner)>,
        edges: Vec<EdgeSpec>,
        rewards: BTreeMap<VertexId, BTreeMap<PlayerId, Rat>>,
        initial: VertexId,
    ) -> Result<Game, ModelError> {
        let mut pindex = BTreeMap::new();
        for (i, p) in players.iter().enumerate() {
            if pindex.insert(p.clone(), i).is_some() {
                return Err(ModelError::DuplicatePlayer(p.as_str().to_string()));
            }
        }
        let mut vindex = BTreeMap::new();
        let mut vs = Vec::with_capacity(vertices.len());
        for (i, (id, owner)) in vertices.into_iter().enumerate() {
            if let Owner::Player(p) = &owner {
                if !pindex.contains_key(p) {
                    return Err(ModelError::UnknownPlayer {
                        player: p.as_str().to_string(),
                        context: format!("owner of vertex `{id}`"),
                    });
                }
            }
            if vindex.insert(id.clone(), i).is_some() {
                return Err(ModelError::DuplicateVertex(id.as_str().to_string()));
            }
            vs.push(Vertex { id, owner });
        }
        let resolve = |id: &VertexId, context: String| -> Result<usize, ModelError> {
            vindex.get(id).copied().ok_or(ModelError::UnknownVertex {
                vertex: id.as_str().to_string(),
                context,
            })
        };
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); vs.len()];
        let mut chance: Vec<Option<Vec<Rat>>> = vec![None; vs.len()];
        for e in &edges {
            let from = resolve(&e.from, format!("edge to `{}`", e.to))?;
            let to = resolve(&e.to, format!("edge from `{}`", e.from))?;
            if succ[from].contains(&to) {
                return Err(ModelError::DuplicateEdge {
                    from: e.from.as_str().to_string(),
                    to: e.to.as_str().to_string(),
                });
            }
            let is_chance = matches!(vs[from].owner, Owner::Chance);
            match (&e.prob, is_chance) {
                (Some(p), true) => {
                    chance[from].get_or_insert_with(Vec::new).push(p.clone());
                }
                (None, false) => {}
                (Some(_), false) => {
                    return Err(ModelError::BadEdgeProbability {
                        from: e.from.as_str().to_string(),
                        to: e.to.as_str().to_string(),
                        reason: "probability given on a non-chance edge".into(),
                    })
                }
                (None, true) => {
                    return Err(ModelError::BadEdgeProbability {
                        from: e.from.as_str().to_string(),
                        to: e.to.as_str().to_string(),
                        reason: "chance edge is missing its probability".into(),
                    })
                }
            }
            succ[from].push(to);
        }
        let mut rw: Vec<BTreeMap<usize, Rat>> = vec![BTreeMap::new(); vs.len()];
        for (vid, per_player) in rewards {
            let v = resolve(&vid, "reward table".into())?;
            for (p, r) in per_player {
                let pi = *pindex.get(&p).ok_or(ModelError::UnknownPlayer {
                    player: p.as_str().to_string(),
                    context: format!("reward at `{vid}`"),
                })?;
                rw[v].insert(pi, r);
            }
        }
        let initial = resolve(&initial, "initial vertex".into())?;
        Ok(Game {
            players,
            vertices: vs,
            succ,
            chance,
            rewards: rw,
            initial,
            vindex,
            pindex,
        })
    }

    pub fn players(&self) -> &[PlayerId] {
        &self.players
    }

    pub fn player_index(&self, p: &PlayerId) -> Option<usize> {
        self.pindex.get(p).copied()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(|s| s.len()).sum()
    }

    pub fn vertex_id(&self, v: usize) -> &VertexId {
        &self.vertices[v].id
    }

    pub fn vertex_index(&self, id: &VertexId) -> Option<usize> {
        self.vindex.get(id).copied()
    }

    pub fn owner(&self, v: usize) -> &Owner {
        &self.vertices[v].owner
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.succ[v]
    }

    pub fn is_terminal(&self, v: usize) -> bool {
        matches!(self.vertices[v].owner, Owner::Terminal)
    }

    pub fn is_chance(&self, v: usize) -> bool {
        matches!(self.vertices[v].owner, Owner::Chance)
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    /// Vertices controlled by some player, ascending index order.
    pub fn controlled_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| matches!(self.vertices[v].owner, Owner::Player(_)))
            .collect()
    }

    pub fn terminals(&self) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| self.is_terminal(v))
            .collect()
    }

    /// Chance probability of the edge `v -> w`; None when `v` is not a chance
    /// vertex or the edge does not exist.
    pub fn chance_prob(&self, v: usize, w: usize) -> Option<&Rat> {
        let row = self.chance[v].as_ref()?;
        let pos = self.succ[v].iter().position(|&s| s == w)?;
        row.get(pos)
    }

    /// Chance row aligned with `successors(v)`.
    pub fn chance_row(&self, v: usize) -> Option<&[Rat]> {
        self.chance[v].as_deref()
    }

    /// Reward of `player` at vertex `v` (0 when omitted).
    pub fn reward(&self, v: usize, player: usize) -> Rat {
        self.rewards[v]
            .get(&player)
            .cloned()
            .unwrap_or_else(Rat::zero)
    }

    pub fn reward_entries(&self, v: usize) -> &BTreeMap<usize, Rat> {
        &self.rewards[v]
    }

    /// Total bits used by the chance probabilities, the game's size measure
    /// for probability encodings.
    pub fn bit_size(&self) -> u64 {
        self.chance
            .iter()
            .flatten()
            .flat_map(|row| row.iter())
            .map(bit_rat)
            .sum()
    }

    /// Largest absolute terminal reward over all players (0 for reward-free games).
    pub fn max_abs_reward(&self) -> Rat {
        let mut best = Rat::zero();
        for per in &self.rewards {
            for r in per.values() {
                if r.abs() > best {
                    best = r.abs();
                }
            }
        }
        best
    }

    /// Same arena with every reward divided by the largest absolute reward,
    /// mapping payoffs into [-1, 1]. Pure scaling, so equilibria and margins
    /// scale with it; off by default everywhere else in the crate.
    pub fn normalize_rewards(&self) -> Game {
        let scale = self.max_abs_reward();
        if scale.is_zero() {
            return self.clone();
        }
        let mut g = self.clone();
        for per in &mut g.rewards {
            for r in per.values_mut() {
                *r /= scale.clone();
            }
        }
        g
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Reports every semantic invariant violation; an empty list means valid.
pub fn validate_game(g: &Game) -> Vec<Violation> {
    let mut out = Vec::new();
    for v in 0..g.vertex_count() {
        let id = g.vertex_id(v).clone();
        let deg = g.successors(v).len();
        match g.owner(v) {
            Owner::Terminal => {
                if deg > 0 {
                    out.push(Violation {
                        vertex: Some(id.clone()),
                        message: format!("terminal has out-degree {deg}"),
                    });
                }
            }
            owner => {
                if deg == 0 {
                    out.push(Violation {
                        vertex: Some(id.clone()),
                        message: "non-terminal has out-degree 0".into(),
                    });
                    out.push(Violation {
                        vertex: Some(id.clone()),
                        message: format!("sink vertex owned by `{owner}` is not tagged terminal"),
                    });
                }
                if !g.rewards[v].is_empty() {
                    out.push(Violation {
                        vertex: Some(id.clone()),
                        message: "reward entry on a non-terminal vertex".into(),
                    });
                }
            }
        }
        if let Some(row) = g.chance_row(v) {
            let mut sum = Rat::zero();
            for p in row {
                if p.is_negative() {
                    out.push(Violation {
                        vertex: Some(id.clone()),
                        message: format!("negative chance probability {}", format_rat(p)),
                    });
                }
                sum += p.clone();
            }
            if !sum.is_one() {
                out.push(Violation {
                    vertex: Some(id.clone()),
                    message: format!("chance row sums to {}", format_rat(&sum)),
                });
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Stationary profiles
// ---------------------------------------------------------------------------

/// One row entry: an exact rational probability, or an l-bit float weight to
/// be normalized against the other weights of its row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prob {
    Exact(Rat),
    Float(FloatL),
}

impl Prob {
    pub fn exact(&self) -> Rat {
        match self {
            Prob::Exact(r) => r.clone(),
            Prob::Float(f) => f.value(),
        }
    }
}

/// Stationary strategy data for one or more players: per controlled vertex,
/// a distribution over successors. A profile may be partial (e.g. when it
/// fixes everyone except one player).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StationaryProfile {
    pub rows: BTreeMap<VertexId, BTreeMap<VertexId, Prob>>,
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile row at unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("profile row at `{0}`, which is not a controlled vertex")]
    NotControlled(String),
    #[error("row at `{vertex}` uses `{to}`, which is not an out-edge")]
    NotAnEdge { vertex: String, to: String },
    #[error("row at `{vertex}` sums to {sum}, expected 1")]
    RowSum { vertex: String, sum: String },
    #[error("row at `{vertex}` has a negative entry")]
    Negative { vertex: String },
    #[error("float row at `{vertex}` mixes precisions")]
    MixedPrecision { vertex: String },
    #[error("float row at `{vertex}` is not a member of D(l)")]
    NotDlMember { vertex: String },
    #[error("profile has no row for controlled vertex `{0}`")]
    MissingRow(String),
    #[error("syntax error in profile file: {0}")]
    Syntax(String),
    #[error("field {field}: {source}")]
    BadRational {
        field: String,
        source: RatParseError,
    },
}

impl StationaryProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_row(&mut self, vertex: VertexId, row: BTreeMap<VertexId, Prob>) {
        self.rows.insert(vertex, row);
    }

    /// Convenience: an exact-rational row.
    pub fn set_exact_row(&mut self, vertex: VertexId, entries: Vec<(VertexId, Rat)>) {
        let row = entries
            .into_iter()
            .map(|(w, p)| (w, Prob::Exact(p)))
            .collect();
        self.rows.insert(vertex, row);
    }

    /// Deterministic choice row.
    pub fn set_pure(&mut self, vertex: VertexId, to: VertexId) {
        self.set_exact_row(vertex, vec![(to, Rat::one())]);
    }

    /// Resolves the profile against a game, checking row invariants.
    /// `require_full` additionally demands a row for every controlled vertex.
    pub fn compile(&self, g: &Game, require_full: bool) -> Result<CompiledProfile, ProfileError> {
        let mut rows: BTreeMap<usize, Vec<(usize, Rat)>> = BTreeMap::new();
        for (vid, row) in &self.rows {
            let v = g
                .vertex_index(vid)
                .ok_or_else(|| ProfileError::UnknownVertex(vid.as_str().to_string()))?;
            if !matches!(g.owner(v), Owner::Player(_)) {
                return Err(ProfileError::NotControlled(vid.as_str().to_string()));
            }
            let mut entries: Vec<(usize, Rat)> = Vec::new();
            let mut float_ell: Option<u32> = None;
            let mut float_weights: Vec<FloatL> = Vec::new();
            let mut any_float = false;
            for (wid, p) in row {
                let w = g
                    .vertex_index(wid)
                    .filter(|w| g.successors(v).contains(w))
                    .ok_or_else(|| ProfileError::NotAnEdge {
                        vertex: vid.as_str().to_string(),
                        to: wid.as_str().to_string(),
                    })?;
                if let Prob::Float(f) = p {
                    any_float = true;
                    match float_ell {
                        None => float_ell = Some(f.precision()),
                        Some(l) if l == f.precision() => {}
                        Some(_) => {
                            return Err(ProfileError::MixedPrecision {
                                vertex: vid.as_str().to_string(),
                            })
                        }
                    }
                    float_weights.push(f.clone());
                }
                entries.push((w, p.exact()));
            }
            if entries.iter().any(|(_, p)| p.is_negative()) {
                return Err(ProfileError::Negative {
                    vertex: vid.as_str().to_string(),
                });
            }
            let sum: Rat = entries.iter().map(|(_, p)| p.clone()).sum();
            if any_float {
                if row.values().any(|p| matches!(p, Prob::Exact(_))) {
                    return Err(ProfileError::MixedPrecision {
                        vertex: vid.as_str().to_string(),
                    });
                }
                // Float rows are D(l) weight vectors; probabilities are the
                // normalized weights.
                let dist = crate::fpnum::FloatDist::new(float_weights).map_err(|_| {
                    ProfileError::NotDlMember {
                        vertex: vid.as_str().to_string(),
                    }
                })?;
                if !dist.is_dl_member() {
                    return Err(ProfileError::NotDlMember {
                        vertex: vid.as_str().to_string(),
                    });
                }
                if sum.is_zero() {
                    return Err(ProfileError::RowSum {
                        vertex: vid.as_str().to_string(),
                        sum: "0/1".into(),
                    });
                }
                for (_, p) in entries.iter_mut() {
                    *p /= sum.clone();
                }
            } else if !sum.is_one() {
                return Err(ProfileError::RowSum {
                    vertex: vid.as_str().to_string(),
                    sum: format_rat(&sum),
                });
            }
            // Keep positive entries only; zeros are allowed in input rows but
            // carry no support.
            entries.retain(|(_, p)| p.is_positive());
            rows.insert(v, entries);
        }
        if require_full {
            for v in g.controlled_vertices() {
                if !rows.contains_key(&v) {
                    return Err(ProfileError::MissingRow(
                        g.vertex_id(v).as_str().to_string(),
                    ));
                }
            }
        }
        Ok(CompiledProfile { rows })
    }

    /// Support map: per row, the successors with positive probability.
    pub fn support(
        &self,
        g: &Game,
    ) -> Result<BTreeMap<VertexId, BTreeSet<VertexId>>, ProfileError> {
        let compiled = self.compile(g, false)?;
        let mut out = BTreeMap::new();
        for (v, entries) in &compiled.rows {
            out.insert(
                g.vertex_id(*v).clone(),
                entries
                    .iter()
                    .map(|(w, _)| g.vertex_id(*w).clone())
                    .collect(),
            );
        }
        Ok(out)
    }

    /// Largest `bit(p/q)` over all row entries (exact values of float
    /// entries are measured via their normalized probabilities).
    pub fn max_entry_bit_size(&self, g: &Game) -> Result<u64, ProfileError> {
        let compiled = self.compile(g, false)?;
        let mut best = 0;
        for entries in compiled.rows.values() {
            for (_, p) in entries {
                best = best.max(bit_rat(p));
            }
        }
        Ok(best)
    }
}

/// A profile resolved against a specific game: vertex indices and exact
/// positive probabilities, rows summing to one.
#[derive(Debug, Clone)]
pub struct CompiledProfile {
    pub rows: BTreeMap<usize, Vec<(usize, Rat)>>,
}

impl CompiledProfile {
    pub fn row(&self, v: usize) -> Option<&[(usize, Rat)]> {
        self.rows.get(&v).map(|r| r.as_slice())
    }
}

// ---------------------------------------------------------------------------
// Reachable support
// ---------------------------------------------------------------------------

/// V_S: vertices from which some terminal is reached with positive
/// probability under the profile (backward closure from the terminals over
/// positive-probability edges).
pub fn reachable_support(
    g: &Game,
    profile: &StationaryProfile,
) -> Result<BTreeSet<VertexId>, ProfileError> {
    let compiled = profile.compile(g, true)?;
    let idx = reachable_support_indices(g, &compiled);
    Ok(idx.iter().map(|&v| g.vertex_id(v).clone()).collect())
}

pub(crate) fn reachable_support_indices(g: &Game, compiled: &CompiledProfile) -> BTreeSet<usize> {
    // Positive-probability predecessor lists.
    let n = g.vertex_count();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 0..n {
        match g.owner(v) {
            Owner::Terminal => {}
            Owner::Chance => {
                let row = g.chance_row(v).unwrap_or(&[]);
                for (pos, &w) in g.successors(v).iter().enumerate() {
                    if row.get(pos).map(|p| p.is_positive()).unwrap_or(false) {
                        preds[w].push(v);
                    }
                }
            }
            Owner::Player(_) => {
                if let Some(entries) = compiled.row(v) {
                    for (w, _) in entries {
                        preds[*w].push(v);
                    }
                }
            }
        }
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
    (0..n).filter(|&v| seen[v]).collect()
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct VertexFile {
    id: String,
    owner: String,
}

#[derive(Serialize, Deserialize)]
struct EdgeFile {
    from: String,
    to: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    prob: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct GameFile {
    players: Vec<String>,
    vertices: Vec<VertexFile>,
    edges: Vec<EdgeFile>,
    #[serde(default)]
    rewards: BTreeMap<String, BTreeMap<String, String>>,
    initial: String,
}

/// Parses the UTF-8 JSON game format and validates the result.
pub fn parse_game(text: &str) -> Result<Game, ModelError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: GameFile =
        serde_path_to_error::deserialize(de).map_err(|e| ModelError::Syntax(e.to_string()))?;
    let mut players = Vec::new();
    for name in file.players {
        players.push(PlayerId::new(name)?);
    }
    let mut vertices = Vec::new();
    for v in file.vertices {
        let owner = match v.owner.as_str() {
            CHANCE_TAG => Owner::Chance,
            TERMINAL_TAG => Owner::Terminal,
            name => Owner::Player(
                players
                    .iter()
                    .find(|p| p.as_str() == name)
                    .cloned()
                    .ok_or_else(|| ModelError::UnknownPlayer {
                        player: name.to_string(),
                        context: format!("owner of vertex `{}`", v.id),
                    })?,
            ),
        };
        vertices.push((VertexId::new(v.id), owner));
    }
    let mut edges = Vec::new();
    for e in file.edges {
        let prob = match e.prob {
            None => None,
            Some(s) => Some(parse_rat(&s).map_err(|source| ModelError::BadRational {
                field: format!("edges[{} -> {}].prob", e.from, e.to),
                source,
            })?),
        };
        edges.push(EdgeSpec {
            from: VertexId::new(e.from),
            to: VertexId::new(e.to),
            prob,
        });
    }
    let mut rewards = BTreeMap::new();
    for (vid, per) in file.rewards {
        let mut m = BTreeMap::new();
        for (p, r) in per {
            let val = parse_rat(&r).map_err(|source| ModelError::BadRational {
                field: format!("rewards.{vid}.{p}"),
                source,
            })?;
            m.insert(PlayerId::new(p)?, val);
        }
        rewards.insert(VertexId::new(vid), m);
    }
    let game = Game::from_parts(
        players,
        vertices,
        edges,
        rewards,
        VertexId::new(file.initial),
    )?;
    let violations = validate_game(&game);
    if violations.is_empty() {
        Ok(game)
    } else {
        Err(ModelError::Invalid(ViolationList(violations)))
    }
}

/// Serializes a game back into the file format, bit-exact rationals.
pub fn serialize_game(g: &Game) -> String {
    let file = GameFile {
        players: g.players.iter().map(|p| p.as_str().to_string()).collect(),
        vertices: g
            .vertices
            .iter()
            .map(|v| VertexFile {
                id: v.id.as_str().to_string(),
                owner: v.owner.to_string(),
            })
            .collect(),
        edges: (0..g.vertex_count())
            .flat_map(|v| {
                g.successors(v)
                    .iter()
                    .enumerate()
                    .map(move |(pos, &w)| EdgeFile {
                        from: g.vertex_id(v).as_str().to_string(),
                        to: g.vertex_id(w).as_str().to_string(),
                        prob: g.chance_row(v).map(|row| format_rat(&row[pos])),
                    })
            })
            .collect(),
        rewards: g
            .rewards
            .iter()
            .enumerate()
            .filter(|(_, per)| !per.is_empty())
            .map(|(v, per)| {
                (
                    g.vertex_id(v).as_str().to_string(),
                    per.iter()
                        .map(|(p, r)| (g.players[*p].as_str().to_string(), format_rat(r)))
                        .collect(),
                )
            })
            .collect(),
        initial: g.vertex_id(g.initial).as_str().to_string(),
    };
    serde_json::to_string_pretty(&file).expect("game serialization cannot fail")
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ProbFile {
    Exact(String),
    Float { m: String, e: String, ell: u32 },
}

#[derive(Serialize, Deserialize)]
struct ProfileFile {
    rows: BTreeMap<String, BTreeMap<String, ProbFile>>,
}

/// Parses the profile JSON format (exact `p/q` strings or float triples).
pub fn parse_profile(text: &str) -> Result<StationaryProfile, ProfileError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ProfileFile =
        serde_path_to_error::deserialize(de).map_err(|e| ProfileError::Syntax(e.to_string()))?;
    let mut profile = StationaryProfile::new();
    for (vid, row) in file.rows {
        let mut entries = BTreeMap::new();
        for (wid, p) in row {
            let prob =
                match p {
                    ProbFile::Exact(s) => {
                        Prob::Exact(parse_rat(&s).map_err(|source| ProfileError::BadRational {
                            field: format!("rows.{vid}.{wid}"),
                            source,
                        })?)
                    }
                    ProbFile::Float { m, e, ell } => {
                        let mant = m.parse().map_err(|_| ProfileError::BadRational {
                            field: format!("rows.{vid}.{wid}.m"),
                            source: RatParseError::BadInteger(m.clone()),
                        })?;
                        let exp = e.parse().map_err(|_| ProfileError::BadRational {
                            field: format!("rows.{vid}.{wid}.e"),
                            source: RatParseError::BadInteger(e.clone()),
                        })?;
                        Prob::Float(FloatL::from_parts(mant, exp, ell).map_err(|err| {
                            ProfileError::Syntax(format!("rows.{vid}.{wid}: {err}"))
                        })?)
                    }
                };
            entries.insert(VertexId::new(wid), prob);
        }
        profile.rows.insert(VertexId::new(vid), entries);
    }
    Ok(profile)
}

/// Serializes a profile into the file format.
pub fn serialize_profile(p: &StationaryProfile) -> String {
    let file = ProfileFile {
        rows: p
            .rows
            .iter()
            .map(|(v, row)| {
                (
                    v.as_str().to_string(),
                    row.iter()
                        .map(|(w, prob)| {
                            let pf = match prob {
                                Prob::Exact(r) => ProbFile::Exact(format_rat(r)),
                                Prob::Float(f) => ProbFile::Float {
                                    m: f.mantissa().to_string(),
                                    e: f.exponent().to_string(),
                                    ell: f.precision(),
                                },
                            };
                            (w.as_str().to_string(), pf)
                        })
                        .collect(),
                )
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("profile serialization cannot fail")
}


#[cfg(test)]
mod support_monotonicity_tests {
    use super::*;
    use crate::rational::rat;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Enlarging any row's support never shrinks the reachable support.
    #[test]
    fn reachable_support_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let player = PlayerId::new("solo").unwrap();
        for _ in 0..80 {
            let interior = (rng.next_u64() % 5 + 2) as usize;
            let n = interior + 2;
            let name = |i: usize| VertexId::new(format!("v{i}"));
            let mut vertices = Vec::new();
            let mut edges = Vec::new();
            for i in 0..n {
                let owner = if i < interior {
                    Owner::Player(player.clone())
                } else {
                    Owner::Terminal
                };
                vertices.push((name(i), owner));
            }
            for i in 0..interior {
                let deg = ((rng.next_u64() % 3 + 1) as usize).min(n - 1);
                let mut targets = Vec::new();
                while targets.len() < deg {
                    let t = (rng.next_u64() % n as u64) as usize;
                    if t != i && !targets.contains(&t) {
                        targets.push(t);
                    }
                }
                for t in targets {
                    edges.push(EdgeSpec {
                        from: name(i),
                        to: name(t),
                        prob: None,
                    });
                }
            }
            let g = Game::from_parts(
                vec![player.clone()],
                vertices,
                edges,
                BTreeMap::new(),
                name(0),
            )
            .unwrap();
            // A pure profile, then a widened copy mixing over one extra edge.
            let mut narrow = StationaryProfile::new();
            for v in g.controlled_vertices() {
                let succ = g.successors(v);
                let pick = succ[(rng.next_u64() % succ.len() as u64) as usize];
                narrow.set_pure(g.vertex_id(v).clone(), g.vertex_id(pick).clone());
            }
            let mut wide = narrow.clone();
            let widen_at = g.controlled_vertices()
                [(rng.next_u64() % g.controlled_vertices().len() as u64) as usize];
            let succ = g.successors(widen_at);
            if succ.len() > 1 {
                let share = rat(1, succ.len() as i64);
                // Uniform over every edge: a superset of any pure support.
                wide.set_exact_row(
                    g.vertex_id(widen_at).clone(),
                    succ.iter()
                        .map(|&w| (g.vertex_id(w).clone(), share.clone()))
                        .collect(),
                );
            }
            let vs_narrow = reachable_support(&g, &narrow).unwrap();
            let vs_wide = reachable_support(&g, &wide).unwrap();
            assert!(
                vs_narrow.is_subset(&vs_wide),
                "widening removed reachable-support vertices"
            );
        }
    }
}
