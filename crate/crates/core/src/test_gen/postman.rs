//! Single-walk covering routes under one total assignment.
//!
//! With every relevant variable fixed the machine becomes an ordinary
//! directed graph. One edge per coverage target is required; degree
//! imbalances are repaired by duplicating shortest paths chosen through a
//! minimum-cost assignment, separate components are joined by round trips
//! from the start, and the resulting Euler circuit is cut after the last
//! step that covers something new.

use std::collections::{BTreeSet, VecDeque};

use super::engine::{Cube, Engine, Move};
use super::greedy::Walk;
use super::GenError;

struct Graph {
    /// (from, to, move)
    edges: Vec<(usize, usize, Move)>,
    out: Vec<Vec<usize>>,
}

impl Graph {
    fn build(engine: &Engine, start: usize, cube: Cube) -> Result<Graph, GenError> {
        let n = engine.states.len();
        let mut g = Graph {
            edges: Vec::new(),
            out: vec![Vec::new(); n],
        };
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            for m in engine.moves((s, cube))? {
                let to = m.state;
                g.out[s].push(g.edges.len());
                g.edges.push((s, to, m));
                if !seen[to] {
                    seen[to] = true;
                    queue.push_back(to);
                }
            }
        }
        Ok(g)
    }

    /// Shortest-path tree from `from`: distance and incoming edge per node.
    fn bfs(&self, from: usize) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
        let n = self.out.len();
        let mut dist = vec![None; n];
        let mut via = vec![None; n];
        dist[from] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(s) = queue.pop_front() {
            for &e in &self.out[s] {
                let to = self.edges[e].1;
                if dist[to].is_none() {
                    dist[to] = Some(dist[s].unwrap() + 1);
                    via[to] = Some(e);
                    queue.push_back(to);
                }
            }
        }
        (dist, via)
    }
}

fn path(via: &[Option<usize>], edges: &[(usize, usize, Move)], from: usize, to: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut cur = to;
    while cur != from {
        let e = via[cur].expect("target reachable");
        out.push(e);
        cur = edges[e].0;
    }
    out.reverse();
    out
}

/// A covering walk for `targets` from the single start node under the total
/// assignment `cube`, or `None` when the graph does not admit one.
pub(crate) fn route(
    engine: &Engine,
    cube: Cube,
    targets: &BTreeSet<String>,
) -> Result<Option<Walk>, GenError> {
    let starts = engine.start_nodes()?;
    let [(_, (start, _))] = starts.as_slice() else {
        return Ok(None);
    };
    let start = *start;
    let g = Graph::build(engine, start, cube)?;
    let n = g.out.len();
    let trees: Vec<_> = (0..n).map(|s| g.bfs(s)).collect();
    let dist = |a: usize, b: usize| trees[a].0[b];

    let mut required = Vec::new();
    for target in targets {
        let best = g
            .edges
            .iter()
            .enumerate()
            .filter(|(_, (_, _, m))| engine.coverage_id(m.transition) == target)
            .min_by_key(|(i, (from, _, _))| (dist(start, *from), *i));
        match best {
            Some((i, _)) => required.push(i),
            None => return Ok(None),
        }
    }
    required.sort_unstable();

    let mut multi: Vec<usize> = required.clone();
    let mut balance = vec![0i64; n];
    for &e in &required {
        balance[g.edges[e].0] += 1;
        balance[g.edges[e].1] -= 1;
    }
    // Nodes entered more often than left must start extra paths.
    let sources: Vec<usize> = (0..n)
        .flat_map(|v| std::iter::repeat_n(v, (-balance[v]).max(0) as usize))
        .collect();
    let sinks: Vec<usize> = (0..n)
        .flat_map(|v| std::iter::repeat_n(v, balance[v].max(0) as usize))
        .collect();
    if !sources.is_empty() {
        const INF: i64 = 1 << 40;
        let cost: Vec<Vec<i64>> = sources
            .iter()
            .map(|&a| {
                sinks
                    .iter()
                    .map(|&b| dist(a, b).map_or(INF, |d| d as i64))
                    .collect()
            })
            .collect();
        let assignment = hungarian(&cost);
        for (i, &j) in assignment.iter().enumerate() {
            if cost[i][j] >= INF {
                return Ok(None);
            }
            multi.extend(path(&trees[sources[i]].1, &g.edges, sources[i], sinks[j]));
        }
    }

    // Join every component to the start with a round trip.
    let mut comp = vec![usize::MAX; n];
    let mut adj = vec![Vec::new(); n];
    for &e in &multi {
        let (a, b, _) = g.edges[e];
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut c = 0;
    let mut reps = Vec::new();
    for v in std::iter::once(start).chain(0..n) {
        if comp[v] != usize::MAX || (v != start && adj[v].is_empty()) {
            continue;
        }
        reps.push(v);
        let mut stack = vec![v];
        comp[v] = c;
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if comp[y] == usize::MAX {
                    comp[y] = c;
                    stack.push(y);
                }
            }
        }
        c += 1;
    }
    for &r in reps.iter().skip(1) {
        if dist(start, r).is_none() || dist(r, start).is_none() {
            return Ok(None);
        }
        multi.extend(path(&trees[start].1, &g.edges, start, r));
        multi.extend(path(&trees[r].1, &g.edges, r, start));
    }

    let circuit = hierholzer(&g.edges, &multi, start, n);
    if circuit.len() != multi.len() {
        return Ok(None);
    }
    let mut seen = BTreeSet::new();
    let mut last = 0;
    for (i, &e) in circuit.iter().enumerate() {
        if seen.insert(engine.coverage_id(g.edges[e].2.transition)) {
            last = i + 1;
        }
    }
    Ok(Some(Walk {
        moves: circuit[..last].iter().map(|&e| g.edges[e].2.clone()).collect(),
    }))
}

/// Euler circuit over the multiset `edges` (indices into `all`) from `start`.
fn hierholzer(all: &[(usize, usize, Move)], edges: &[usize], start: usize, n: usize) -> Vec<usize> {
    let mut sorted = edges.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<VecDeque<usize>> = vec![VecDeque::new(); n];
    for e in sorted {
        out[all[e].0].push_back(e);
    }
    let mut stack: Vec<(usize, Option<usize>)> = vec![(start, None)];
    let mut circuit = Vec::new();
    while let Some(&(v, via)) = stack.last() {
        match out[v].pop_front() {
            Some(e) => stack.push((all[e].1, Some(e))),
            None => {
                stack.pop();
                if let Some(e) = via {
                    circuit.push(e);
                }
            }
        }
    }
    circuit.reverse();
    circuit
}

/// Minimum-cost perfect assignment for a square cost matrix; returns the
/// column chosen for every row.
fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row = vec![0; n];
    for j in 1..=n {
        if p[j] != 0 {
            row[p[j] - 1] = j - 1;
        }
    }
    row
}
