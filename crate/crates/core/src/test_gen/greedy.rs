use std::collections::{BTreeSet, HashMap, VecDeque};

use super::engine::{Cube, Engine, Move, Node, NODE_BUDGET};
use super::GenError;

#[derive(Debug, Clone)]
pub(crate) struct Walk {
    pub moves: Vec<Move>,
}

impl Walk {
    pub fn end(&self, start: Node) -> Node {
        self.moves.last().map_or(start, |m| (m.state, m.cube))
    }

    pub fn cube(&self, start: Cube) -> Cube {
        self.moves.last().map_or(start, |m| m.cube)
    }
}

/// Breadth-first search from `sources` for the nearest move covering an
/// element of `uncovered`. Moves are expanded in transition-id order.
fn nearest(
    engine: &Engine,
    sources: &[(Vec<usize>, Node)],
    uncovered: &BTreeSet<String>,
) -> Result<Option<(usize, Vec<Move>)>, GenError> {
    let mut parent: HashMap<Node, (Option<Node>, Option<Move>, usize)> = HashMap::new();
    let mut queue = VecDeque::new();
    for (i, (_, n)) in sources.iter().enumerate() {
        if !parent.contains_key(n) {
            parent.insert(*n, (None, None, i));
            queue.push_back(*n);
        }
    }
    while let Some(n) = queue.pop_front() {
        for m in engine.moves(n)? {
            let next = (m.state, m.cube);
            let hit = uncovered.contains(engine.coverage_id(m.transition));
            if hit {
                let mut path = vec![m];
                let mut cur = n;
                let source = loop {
                    let (prev, mv, src) = parent[&cur].clone();
                    match (prev, mv) {
                        (Some(p), Some(mv)) => {
                            path.push(mv);
                            cur = p;
                        }
                        _ => break src,
                    }
                };
                path.reverse();
                return Ok(Some((source, path)));
            }
            if !parent.contains_key(&next) {
                if parent.len() >= NODE_BUDGET {
                    return Err(GenError::BudgetExceeded(NODE_BUDGET));
                }
                let src = parent[&n].2;
                parent.insert(next, (Some(n), Some(m), src));
                queue.push_back(next);
            }
        }
    }
    Ok(None)
}

/// Cover `targets` by repeatedly walking to the nearest uncovered target,
/// starting a new walk from the initial state when none is reachable.
pub(crate) fn greedy(engine: &Engine, targets: &BTreeSet<String>) -> Result<Vec<Walk>, GenError> {
    let starts = engine.start_nodes()?;
    let mut uncovered = targets.clone();
    let mut walks = Vec::new();
    while !uncovered.is_empty() {
        let Some((src, first)) = nearest(engine, &starts, &uncovered)? else {
            return Err(GenError::UncoverableTransitions(uncovered.into_iter().collect()));
        };
        let mut walk = Walk { moves: Vec::new() };
        let mut at = starts[src].1;
        let mut segment = first;
        loop {
            for m in &segment {
                uncovered.remove(engine.coverage_id(m.transition));
            }
            walk.moves.extend(segment);
            at = walk.end(at);
            if uncovered.is_empty() {
                break;
            }
            match nearest(engine, &[(vec![], at)], &uncovered)? {
                Some((_, next)) => segment = next,
                None => break,
            }
        }
        walks.push(walk);
    }
    Ok(walks)
}
