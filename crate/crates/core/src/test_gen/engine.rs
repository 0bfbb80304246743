//! Symbolic exploration of a flat machine under a static, partially known
//! variable assignment.
//!
//! A node is a leaf state together with a cube: the variables bound so far.
//! A move fires one triggered transition and then every completion
//! transition that follows. A move is only available when some minimal
//! extension of the cube makes the chosen transition definitely enabled and
//! each competitor on the same trigger definitely disabled, so that a replay
//! under any completion of the cube takes exactly the same steps.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use super::{AssignmentMode, GenError};
use crate::expr::{Assignment, Expr};
use crate::state_machine::StateMachine;

/// Largest number of variables a machine may declare.
pub(crate) const MAX_VARIABLES: usize = 64;
/// Largest number of constraint variables whose admissible vectors are
/// enumerated.
const MAX_CONSTRAINT_VARIABLES: usize = 24;
/// Largest number of unbound variables considered when extending a cube for
/// one step.
const MAX_LOCAL_VARIABLES: usize = 12;
/// Upper bound on explored nodes per search.
pub(crate) const NODE_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub(crate) struct Cube {
    pub mask: u64,
    pub val: u64,
}

impl Cube {
    fn get(self, i: usize) -> Option<bool> {
        (self.mask >> i & 1 == 1).then_some(self.val >> i & 1 == 1)
    }

    fn bind(self, i: usize, b: bool) -> Cube {
        Cube {
            mask: self.mask | 1 << i,
            val: if b { self.val | 1 << i } else { self.val & !(1 << i) },
        }
    }

    fn extends(self, other: Cube) -> bool {
        self.mask & other.mask == other.mask && self.val & other.mask == other.val
    }
}

#[derive(Debug, Clone)]
enum CExpr {
    Const(bool),
    Var(usize),
    Not(Box<CExpr>),
    And(Vec<CExpr>),
    Or(Vec<CExpr>),
    Implies(Box<CExpr>, Box<CExpr>),
}

impl CExpr {
    fn compile(e: &Expr, index: &HashMap<String, usize>) -> CExpr {
        match e {
            Expr::Const(b) => CExpr::Const(*b),
            Expr::Var(v) => CExpr::Var(index[v]),
            Expr::Not(x) => CExpr::Not(Box::new(CExpr::compile(x, index))),
            Expr::And(xs) => CExpr::And(xs.iter().map(|x| CExpr::compile(x, index)).collect()),
            Expr::Or(xs) => CExpr::Or(xs.iter().map(|x| CExpr::compile(x, index)).collect()),
            Expr::Implies(a, b) => CExpr::Implies(
                Box::new(CExpr::compile(a, index)),
                Box::new(CExpr::compile(b, index)),
            ),
        }
    }

    fn eval(&self, c: Cube) -> Option<bool> {
        match self {
            CExpr::Const(b) => Some(*b),
            CExpr::Var(i) => c.get(*i),
            CExpr::Not(x) => x.eval(c).map(|b| !b),
            CExpr::And(xs) => {
                let mut unknown = false;
                for x in xs {
                    match x.eval(c) {
                        Some(false) => return Some(false),
                        None => unknown = true,
                        Some(true) => {}
                    }
                }
                (!unknown).then_some(true)
            }
            CExpr::Or(xs) => {
                let mut unknown = false;
                for x in xs {
                    match x.eval(c) {
                        Some(true) => return Some(true),
                        None => unknown = true,
                        Some(false) => {}
                    }
                }
                (!unknown).then_some(false)
            }
            CExpr::Implies(a, b) => match (a.eval(c), b.eval(c)) {
                (Some(false), _) | (_, Some(true)) => Some(true),
                (Some(true), Some(false)) => Some(false),
                _ => None,
            },
        }
    }

    fn vars(&self, out: &mut u64) {
        match self {
            CExpr::Const(_) => {}
            CExpr::Var(i) => *out |= 1 << i,
            CExpr::Not(x) => x.vars(out),
            CExpr::And(xs) | CExpr::Or(xs) => xs.iter().for_each(|x| x.vars(out)),
            CExpr::Implies(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }
}

/// Result of firing a triggered transition from a node.
#[derive(Debug, Clone)]
pub(crate) struct Move {
    pub transition: usize,
    pub state: usize,
    pub cube: Cube,
}

pub(crate) type Node = (usize, Cube);

pub(crate) struct Engine<'a> {
    pub sm: &'a StateMachine,
    pub vars: Vec<String>,
    pub states: Vec<&'a str>,
    state_index: HashMap<&'a str, usize>,
    guards: Vec<Option<CExpr>>,
    /// Triggered transitions per state, sorted by transition id.
    triggered: Vec<Vec<usize>>,
    completions: Vec<Vec<usize>>,
    targets: Vec<usize>,
    /// Competitors of each triggered transition: same source and trigger.
    competitors: Vec<Vec<usize>>,
    constraint_mask: u64,
    admissible: Option<Vec<u64>>,
    admissible_cache: RefCell<HashMap<Cube, bool>>,
    extend: bool,
    pub start: Cube,
    pub guard_mask: u64,
}

impl<'a> Engine<'a> {
    pub fn new(sm: &'a StateMachine, mode: &AssignmentMode) -> Result<Engine<'a>, GenError> {
        if !sm.is_flat() {
            return Err(GenError::NotFlat);
        }
        let mut names: BTreeSet<String> = sm.variables().iter().map(|v| v.name.clone()).collect();
        names.extend(sm.guard_variables());
        if let Some(c) = sm.constraint() {
            c.collect_vars(&mut names);
        }
        if let AssignmentMode::Fixed(a) = mode {
            names.extend(a.iter().map(|(k, _)| k.to_string()));
        }
        if names.len() > MAX_VARIABLES {
            return Err(GenError::TooManyVariables {
                count: names.len(),
                limit: MAX_VARIABLES,
            });
        }
        let vars: Vec<String> = names.into_iter().collect();
        let index: HashMap<String, usize> =
            vars.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();

        let states: Vec<&str> = sm.leaf_states();
        let state_index: HashMap<&str, usize> =
            states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let ts = sm.transitions();
        let guards: Vec<Option<CExpr>> = ts
            .iter()
            .map(|t| t.guard.as_ref().map(|g| CExpr::compile(g, &index)))
            .collect();
        let mut guard_mask = 0;
        for g in guards.iter().flatten() {
            g.vars(&mut guard_mask);
        }
        let mut triggered = vec![Vec::new(); states.len()];
        let mut completions = vec![Vec::new(); states.len()];
        let mut order: Vec<usize> = (0..ts.len()).collect();
        order.sort_by(|&a, &b| ts[a].id.cmp(&ts[b].id));
        for &i in &order {
            let s = state_index[ts[i].source.as_str()];
            if ts[i].is_triggered() {
                triggered[s].push(i);
            } else {
                completions[s].push(i);
            }
        }
        let competitors = (0..ts.len())
            .map(|i| {
                let s = state_index[ts[i].source.as_str()];
                if ts[i].is_triggered() {
                    triggered[s]
                        .iter()
                        .copied()
                        .filter(|&j| ts[j].trigger == ts[i].trigger)
                        .collect()
                } else {
                    completions[s].clone()
                }
            })
            .collect();
        let targets = ts.iter().map(|t| state_index[t.target.as_str()]).collect();

        let mut start = Cube::default();
        for (k, v) in sm.initial_values().iter() {
            start = start.bind(index[k], v);
        }
        let extend = match mode {
            AssignmentMode::Free => true,
            AssignmentMode::Fixed(a) => {
                for (k, v) in a.iter() {
                    start = start.bind(index[k], v);
                }
                false
            }
        };

        let (constraint_mask, admissible) = match sm.constraint() {
            None => (0, None),
            Some(c) => {
                let cvars: Vec<usize> = c.vars().iter().map(|v| index[v]).collect();
                if cvars.len() > MAX_CONSTRAINT_VARIABLES {
                    return Err(GenError::TooManyVariables {
                        count: cvars.len(),
                        limit: MAX_CONSTRAINT_VARIABLES,
                    });
                }
                let compiled = CExpr::compile(c, &index);
                let mask = cvars.iter().fold(0u64, |m, &i| m | 1 << i);
                let mut vectors = Vec::new();
                for bits in 0u64..1 << cvars.len() {
                    let mut cube = Cube { mask, val: 0 };
                    for (k, &i) in cvars.iter().enumerate() {
                        if bits >> k & 1 == 1 {
                            cube.val |= 1 << i;
                        }
                    }
                    if compiled.eval(cube) == Some(true) {
                        vectors.push(cube.val);
                    }
                }
                (mask, Some(vectors))
            }
        };

        let engine = Engine {
            sm,
            vars,
            states,
            state_index,
            guards,
            triggered,
            completions,
            targets,
            competitors,
            constraint_mask,
            admissible,
            admissible_cache: RefCell::new(HashMap::new()),
            extend,
            start,
            guard_mask,
        };
        if !engine.is_admissible(engine.start) {
            return Err(GenError::InadmissibleAssignment);
        }
        Ok(engine)
    }

    /// Variables that matter for admissibility or guards.
    pub fn relevant_mask(&self) -> u64 {
        self.constraint_mask | self.guard_mask
    }

    pub fn is_admissible(&self, cube: Cube) -> bool {
        let Some(vectors) = &self.admissible else {
            return true;
        };
        let key = Cube {
            mask: cube.mask & self.constraint_mask,
            val: cube.val & cube.mask & self.constraint_mask,
        };
        if let Some(&b) = self.admissible_cache.borrow().get(&key) {
            return b;
        }
        let b = vectors.iter().any(|&v| v & key.mask == key.val);
        self.admissible_cache.borrow_mut().insert(key, b);
        b
    }

    /// Minimal extensions of `cube` under which exactly `want` (or nothing,
    /// when `None`) is definitely enabled among `group`.
    fn extensions(&self, cube: Cube, want: Option<usize>, group: &[usize]) -> Result<Vec<Cube>, GenError> {
        let decided = |c: Cube| {
            group.iter().all(|&g| {
                let v = self.guards[g].as_ref().map_or(Some(true), |e| e.eval(c));
                v == Some(Some(g) == want)
            })
        };
        if decided(cube) {
            return Ok(vec![cube]);
        }
        if !self.extend {
            return Ok(vec![]);
        }
        let mut local = 0u64;
        for &g in group {
            if let Some(e) = &self.guards[g] {
                e.vars(&mut local);
            }
        }
        local &= !cube.mask;
        let locals: Vec<usize> = (0..64).filter(|i| local >> i & 1 == 1).collect();
        if locals.len() > MAX_LOCAL_VARIABLES {
            return Err(GenError::GuardTooWide {
                transition: self.sm.transitions()[group[0]].id.clone(),
                variables: locals.len(),
            });
        }
        let mut found: Vec<Cube> = Vec::new();
        for size in 1..=locals.len() {
            for combo in combinations(locals.len(), size) {
                for bits in 0u64..1 << size {
                    let mut c = cube;
                    for (k, &j) in combo.iter().enumerate() {
                        c = c.bind(locals[j], bits >> k & 1 == 1);
                    }
                    if found.iter().any(|f| c.extends(*f)) {
                        continue;
                    }
                    if decided(c) {
                        found.push(c);
                    }
                }
            }
        }
        Ok(found)
    }

    /// Fire completion transitions from `state` until none is enabled.
    fn closure(
        &self,
        state: usize,
        cube: Cube,
        depth: usize,
        fired: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, usize, Cube)>,
    ) -> Result<(), GenError> {
        let comps = &self.completions[state];
        if comps.is_empty() {
            out.push((fired.clone(), state, cube));
            return Ok(());
        }
        if depth > self.states.len() {
            return Ok(());
        }
        for ext in self.extensions(cube, None, comps)? {
            if self.is_admissible(ext) {
                out.push((fired.clone(), state, ext));
            }
        }
        for &t in comps {
            for ext in self.extensions(cube, Some(t), comps)? {
                if self.is_admissible(ext) {
                    fired.push(t);
                    self.closure(self.targets[t], ext, depth + 1, fired, out)?;
                    fired.pop();
                }
            }
        }
        Ok(())
    }

    /// Nodes a test case may begin in, with the completion transitions
    /// fired on the way.
    pub fn start_nodes(&self) -> Result<Vec<(Vec<usize>, Node)>, GenError> {
        let mut out = Vec::new();
        let init = self.state_index[self.sm.initial()];
        self.closure(init, self.start, 0, &mut Vec::new(), &mut out)?;
        Ok(out.into_iter().map(|(f, s, c)| (f, (s, c))).collect())
    }

    pub fn moves(&self, (state, cube): Node) -> Result<Vec<Move>, GenError> {
        let mut out = Vec::new();
        for &t in &self.triggered[state] {
            for ext in self.extensions(cube, Some(t), &self.competitors[t])? {
                if !self.is_admissible(ext) {
                    continue;
                }
                let mut ends = Vec::new();
                self.closure(self.targets[t], ext, 0, &mut Vec::new(), &mut ends)?;
                for (_, s, c) in ends {
                    out.push(Move {
                        transition: t,
                        state: s,
                        cube: c,
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn coverage_id(&self, t: usize) -> &str {
        self.sm.transitions()[t].coverage_id()
    }

    pub fn event(&self, t: usize) -> &str {
        self.sm.transitions()[t].trigger.as_deref().unwrap_or_default()
    }

    pub fn assignment(&self, cube: Cube, keep: u64) -> Assignment {
        self.vars
            .iter()
            .enumerate()
            .filter(|(i, _)| (cube.mask & keep) >> i & 1 == 1)
            .map(|(i, v)| (v.clone(), cube.val >> i & 1 == 1))
            .collect()
    }

    /// Coverage identities of triggered transitions reachable from the start.
    pub fn coverable(&self) -> Result<BTreeSet<String>, GenError> {
        let mut seen: HashSet<Node> = HashSet::new();
        let mut queue = VecDeque::new();
        for (_, n) in self.start_nodes()? {
            if seen.insert(n) {
                queue.push_back(n);
            }
        }
        let mut covered = BTreeSet::new();
        while let Some(n) = queue.pop_front() {
            for m in self.moves(n)? {
                covered.insert(self.coverage_id(m.transition).to_string());
                let next = (m.state, m.cube);
                if seen.insert(next) {
                    if seen.len() > NODE_BUDGET {
                        return Err(GenError::BudgetExceeded(NODE_BUDGET));
                    }
                    queue.push_back(next);
                }
            }
        }
        Ok(covered)
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

#[cfg(test)]
impl Engine<'_> {
    fn assignment_cube(&self, a: &Assignment) -> Cube {
        let mut c = Cube::default();
        for (k, v) in a.iter() {
            let i = self.vars.iter().position(|x| x == k).unwrap();
            c = c.bind(i, v);
        }
        c
    }
}
