//! Shared generators and oracles for the acceptance suite: random games,
//! random profiles, and the exhaustive best-response oracle that certifies
//! policy iteration.

use std::collections::BTreeMap;

use nashgames::model::{EdgeSpec, Game, Owner, PlayerId, StationaryProfile, VertexId};
use nashgames::rational::{rat, rint, Rat};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vname(i: usize) -> VertexId {
    VertexId::new(format!("v{i}"))
}

/// A dyadic row of `deg` positive probabilities summing to one.
pub fn dyadic_row(rng: &mut ChaCha8Rng, deg: usize) -> Vec<Rat> {
    let mut remaining = rint(1);
    let mut out = Vec::with_capacity(deg);
    for k in 0..deg {
        if k + 1 == deg {
            out.push(remaining.clone());
        } else {
            let shift = (rng.next_u64() % 3 + 1) as i64;
            let p = remaining.clone() / rint(1 << shift);
            remaining -= p.clone();
            out.push(p);
        }
    }
    out
}

pub struct RandomGameSpec {
    pub max_vertices: usize,
    pub max_players: usize,
    pub max_degree: usize,
}

/// A connected-ish random arena: controlled and chance interior vertices,
/// at least two terminals, rewards in [0, 1].
pub fn random_game(rng: &mut ChaCha8Rng, spec: &RandomGameSpec) -> Game {
    let players: Vec<PlayerId> = (0..(rng.next_u64() % spec.max_players as u64 + 1) as usize)
        .map(|i| PlayerId::new(format!("p{i}")).unwrap())
        .collect();
    let terminals = (rng.next_u64() % 2 + 2) as usize;
    let interior_max = spec.max_vertices.saturating_sub(terminals).max(2);
    let interior = (rng.next_u64() % (interior_max as u64 - 1) + 2) as usize;
    let n = interior + terminals;
    let mut vertices = Vec::new();
    let mut edges = Vec::new();
    let mut rewards: BTreeMap<VertexId, BTreeMap<PlayerId, Rat>> = BTreeMap::new();
    for i in 0..n {
        let owner = if i >= interior {
            Owner::Terminal
        } else if rng.next_u64().is_multiple_of(3) {
            Owner::Chance
        } else {
            Owner::Player(players[(rng.next_u64() % players.len() as u64) as usize].clone())
        };
        vertices.push((vname(i), owner.clone()));
        if i >= interior {
            let mut per = BTreeMap::new();
            for p in &players {
                per.insert(p.clone(), rat((rng.next_u64() % 5) as i64, 4));
            }
            rewards.insert(vname(i), per);
        }
    }
    for i in 0..interior {
        let deg = (rng.next_u64() % spec.max_degree as u64 + 1) as usize;
        let mut targets: Vec<usize> = Vec::new();
        while targets.len() < deg {
            // Bias towards later vertices so terminals stay reachable.
            let t =
                ((rng.next_u64() % n as u64) as usize).max((rng.next_u64() % n as u64) as usize);
            if t != i && !targets.contains(&t) {
                targets.push(t);
            }
        }
        let is_chance = matches!(vertices[i].1, Owner::Chance);
        let row = dyadic_row(rng, targets.len());
        for (k, &t) in targets.iter().enumerate() {
            edges.push(EdgeSpec {
                from: vname(i),
                to: vname(t),
                prob: is_chance.then(|| row[k].clone()),
            });
        }
    }
    Game::from_parts(players, vertices, edges, rewards, vname(0)).unwrap()
}

/// A random full profile with positive dyadic rows.
pub fn random_full_profile(rng: &mut ChaCha8Rng, g: &Game) -> StationaryProfile {
    let mut profile = StationaryProfile::new();
    for v in g.controlled_vertices() {
        let succ = g.successors(v);
        let row = dyadic_row(rng, succ.len());
        profile.set_exact_row(
            g.vertex_id(v).clone(),
            succ.iter()
                .zip(row)
                .map(|(&w, p)| (g.vertex_id(w).clone(), p))
                .collect(),
        );
    }
    profile
}

/// Exhaustive pure-profile oracle for one player's best-response value.
pub fn enumeration_best_value(g: &Game, others: &StationaryProfile, player: &PlayerId) -> Rat {
    use nashgames::evaluate::mc_value;
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
