#![allow(dead_code)]

use std::collections::BTreeSet;

use pltgen_core::feature_model::{ChildKind, GroupKind};
use pltgen_core::mapping::MappingEntry;
use pltgen_core::{
    Assignment, Configuration, Expr, FeatureModel, FeatureModelBuilder, GuardVariable, MappingModel, State,
    StateMachine, TestSuite, Transition,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FM: &str = include_str!("../../fixtures/online_shop/feature_model.json");
pub const SM: &str = include_str!("../../fixtures/online_shop/state_machine.json");
pub const MAP: &str = include_str!("../../fixtures/online_shop/mapping.json");
pub const REFERENCE_I: &str = include_str!("../../fixtures/online_shop/reference/variant_i.json");
pub const REFERENCE_II: &str = include_str!("../../fixtures/online_shop/reference/variant_ii.json");
pub const REFERENCE_TOP_DOWN: &str = include_str!("../../fixtures/online_shop/reference/top_down.json");
pub const REFERENCE_BOTTOM_UP: &str = include_str!("../../fixtures/online_shop/reference/bottom_up.json");

pub fn shop() -> (FeatureModel, StateMachine, MappingModel) {
    let fm = FeatureModel::from_json(FM).unwrap();
    let sm = StateMachine::from_json(SM).unwrap();
    let map = MappingModel::from_json(MAP, &fm, &sm).unwrap();
    (fm, sm, map)
}

pub fn suite(text: &str) -> TestSuite {
    TestSuite::from_json(text).unwrap()
}

pub fn config(ids: &[&str]) -> Configuration {
    ids.iter().map(|s| s.to_string()).collect()
}

pub fn variant_i() -> Configuration {
    config(&["OnlineShop", "Catalog", "Payment", "Security", "CreditCard", "High"])
}

pub fn variant_ii() -> Configuration {
    config(&[
        "OnlineShop",
        "Catalog",
        "Payment",
        "Security",
        "BankAccount",
        "ECoins",
        "Low",
        "Search",
    ])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random feature tree with up to `max_features` features and a few
/// requires/excludes constraints. May be unsatisfiable.
pub fn random_feature_model(rng: &mut impl Rng, max_features: usize) -> FeatureModel {
    let n = rng.gen_range(1..=max_features);
    let mut b = FeatureModelBuilder::new("random", "F0");
    let mut placed = 1;
    while placed < n {
        let parent = format!("F{}", rng.gen_range(0..placed));
        let room = n - placed;
        if room >= 2 && rng.gen_bool(0.35) {
            let size = rng.gen_range(2..=room.min(3));
            let ids: Vec<String> = (placed..placed + size).map(|i| format!("F{i}")).collect();
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            if rng.gen_bool(0.5) {
                b.or_group(&parent, &refs).unwrap();
            } else {
                b.alternative(&parent, &refs).unwrap();
            }
            placed += size;
        } else {
            let id = format!("F{placed}");
            if rng.gen_bool(0.3) {
                b.mandatory(&parent, &id).unwrap();
            } else {
                b.optional(&parent, &id).unwrap();
            }
            placed += 1;
        }
    }
    if n > 2 {
        for _ in 0..rng.gen_range(0..=2) {
            let a = rng.gen_range(1..n);
            let c = rng.gen_range(1..n);
            if a == c {
                continue;
            }
            let (a, c) = (format!("F{a}"), format!("F{c}"));
            b.constraint(if rng.gen_bool(0.5) {
                Expr::requires(a, c)
            } else {
                Expr::excludes(a, c)
            });
        }
    }
    b.build().unwrap()
}

pub fn random_subset(rng: &mut impl Rng, fm: &FeatureModel) -> Configuration {
    fm.feature_ids()
        .filter(|_| rng.gen_bool(0.5))
        .map(str::to_string)
        .collect()
}

/// Validity evaluated directly from the tree and constraint rules.
pub fn brute_force_valid(fm: &FeatureModel, cfg: &Configuration) -> bool {
    let feats = fm.features();
    let on = |i: usize| cfg.contains(&feats[i].id);
    if cfg.iter().any(|id| !fm.contains(id)) || !on(0) {
        return false;
    }
    for (i, f) in feats.iter().enumerate() {
        if let Some(p) = f.parent {
            if on(i) && !on(p) {
                return false;
            }
            if f.kind == Some(ChildKind::Mandatory) && on(p) && !on(i) {
                return false;
            }
        }
    }
    for g in fm.groups() {
        if !on(g.parent) {
            continue;
        }
        let n = g.members.iter().filter(|&&m| on(m)).count();
        let ok = match g.kind {
            GroupKind::Or => n >= 1,
            GroupKind::Alternative => n == 1,
        };
        if !ok {
            return false;
        }
    }
    fm.constraints().iter().all(|c| c.eval(&|v| cfg.contains(v)))
}

/// Every subset of the features that passes [`brute_force_valid`].
pub fn brute_force_configurations(fm: &FeatureModel) -> BTreeSet<Configuration> {
    let ids: Vec<&str> = fm.feature_ids().collect();
    (0u64..1 << ids.len())
        .map(|bits| {
            ids.iter()
                .enumerate()
                .filter(|(i, _)| bits >> i & 1 == 1)
                .map(|(_, id)| id.to_string())
                .collect::<Configuration>()
        })
        .filter(|c| brute_force_valid(fm, c))
        .collect()
}

pub struct MachineShape {
    pub max_states: usize,
    pub variables: Vec<String>,
    pub guard_probability: f64,
    /// Triggers are unique along every containment chain, which rules out
    /// both shadowing and nondeterminism.
    pub distinct_triggers: bool,
}

struct Node {
    id: String,
    children: Vec<usize>,
    parent: Option<usize>,
}

fn random_guard(rng: &mut impl Rng, vars: &[String]) -> Expr {
    let lit = |rng: &mut dyn rand::RngCore| {
        let v = Expr::var(vars.choose(rng).unwrap().clone());
        if rng.gen_bool(0.5) {
            Expr::not(v)
        } else {
            v
        }
    };
    if vars.len() > 1 && rng.gen_bool(0.3) {
        let (a, b) = (lit(rng), lit(rng));
        if rng.gen_bool(0.5) {
            Expr::And(vec![a, b])
        } else {
            Expr::Or(vec![a, b])
        }
    } else {
        lit(rng)
    }
}

/// A random hierarchical machine in which every state is reachable from the
/// initial state `S0` through its own unguarded spine transition. Returns the
/// machine and the ids of the spine transitions.
pub fn random_machine(rng: &mut impl Rng, shape: &MachineShape) -> (StateMachine, Vec<String>) {
    let total = rng.gen_range(2..=shape.max_states);
    let mut nodes: Vec<Node> = Vec::new();
    // Pre-order list of (node, depth) while budgeting composite states.
    let mut stack: Vec<(Option<usize>, usize)> = vec![(None, 0)];
    while nodes.len() < total {
        let (parent, depth) = *stack.last().unwrap();
        let idx = nodes.len();
        nodes.push(Node {
            id: format!("S{idx}"),
            children: vec![],
            parent,
        });
        if let Some(p) = parent {
            nodes[p].children.push(idx);
        }
        let left = total - nodes.len();
        if depth < 2 && left >= 2 && rng.gen_bool(0.25) {
            stack.push((Some(idx), depth + 1));
        } else if stack.len() > 1 && parent.is_some_and(|p| nodes[p].children.len() >= 2) && rng.gen_bool(0.4) {
            stack.pop();
        }
    }
    // A composite needs at least one child; demote childless ones.
    fn build(nodes: &[Node], i: usize) -> State {
        let n = &nodes[i];
        if n.children.is_empty() {
            State::simple(n.id.clone())
        } else {
            let subs = n.children.iter().map(|&c| build(nodes, c)).collect();
            State::composite(n.id.clone(), nodes[n.children[0]].id.clone(), subs)
        }
    }
    let roots: Vec<State> = (0..nodes.len())
        .filter(|&i| nodes[i].parent.is_none())
        .map(|i| build(&nodes, i))
        .collect();

    let chain = |i: usize| -> Vec<usize> {
        let mut out = vec![i];
        let mut cur = nodes[i].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = nodes[p].parent;
        }
        out
    };
    let related = |a: usize, b: usize| chain(a).contains(&b) || chain(b).contains(&a);
    let events: Vec<String> = (0..6).map(|i| format!("e{i}")).collect();
    let mut used: Vec<(usize, String)> = Vec::new();
    let mut transitions = Vec::new();
    let mut spine = Vec::new();
    let pick_trigger = |rng: &mut dyn rand::RngCore, source: usize, used: &mut Vec<(usize, String)>| {
        let free: Vec<&String> = events
            .iter()
            .filter(|e| {
                !used
                    .iter()
                    .any(|(s, u)| u == *e && (*s == source || (shape.distinct_triggers && related(*s, source))))
            })
            .collect();
        let e = (*free.choose(rng)?).clone();
        used.push((source, e.clone()));
        Some(e)
    };
    for (i, node) in nodes.iter().enumerate().skip(1) {
        let id = format!("t{}", transitions.len());
        spine.push(id.clone());
        transitions.push(Transition::new(id, "S0", node.id.clone(), format!("go{i}")));
    }
    let extra = rng.gen_range(1..=nodes.len() + 2);
    for _ in 0..extra {
        let s = rng.gen_range(0..nodes.len());
        let t = rng.gen_range(0..nodes.len());
        let Some(e) = pick_trigger(rng, s, &mut used) else { continue };
        let mut tr = Transition::new(format!("t{}", transitions.len()), nodes[s].id.clone(), nodes[t].id.clone(), e);
        if !shape.variables.is_empty() && rng.gen_bool(shape.guard_probability) {
            tr = tr.guarded(random_guard(rng, &shape.variables));
        }
        transitions.push(tr);
    }
    let variables = shape.variables.iter().map(GuardVariable::new).collect();
    let sm = StateMachine::new("random", "S0", roots, transitions, variables, None).unwrap();
    (sm, spine)
}

pub struct ProductLine {
    pub fm: FeatureModel,
    pub sm: StateMachine,
    pub map: MappingModel,
}

/// A satisfiable feature model with at most 10 features, a machine with at
/// most 12 states, and a mapping over leaf states and transitions off the
/// spine. Every transition is present in some valid configuration and every
/// valid configuration prunes to a well-formed 100% model.
pub fn random_product_line(rng: &mut impl Rng) -> ProductLine {
    let fm = loop {
        let fm = random_feature_model(rng, 10);
        if fm.is_satisfiable().unwrap() {
            break fm;
        }
    };
    let configs = fm.enumerate_configurations(usize::MAX).unwrap();
    let (sm, spine) = random_machine(
        rng,
        &MachineShape {
            max_states: 12,
            variables: vec![],
            guard_probability: 0.0,
            distinct_triggers: true,
        },
    );
    let ids: Vec<&str> = fm.feature_ids().collect();
    let holds = |e: &[&Expr]| configs.iter().any(|c| e.iter().all(|e| e.eval(&|v| c.contains(v))));
    let mut candidates: Vec<String> = sm
        .leaf_states()
        .into_iter()
        .filter(|s| sm.parent(s).map_or(*s != sm.initial(), |p| sm.initial_substate(p) != Some(*s)))
        .map(str::to_string)
        .collect();
    candidates.extend(
        sm.transitions()
            .iter()
            .filter(|t| !spine.contains(&t.id))
            .map(|t| t.id.clone()),
    );
    let map = loop {
        let mut entries = Vec::new();
        for el in &candidates {
            if !rng.gen_bool(0.4) {
                continue;
            }
            let f = *ids.choose(rng).unwrap();
            let presence = if rng.gen_bool(0.6) {
                Expr::var(f)
            } else {
                Expr::not(Expr::var(f))
            };
            entries.push(MappingEntry {
                presence,
                elements: vec![el.clone()],
            });
        }
        let pres = |el: &str| {
            entries
                .iter()
                .find(|e| e.elements.iter().any(|x| x == el))
                .map_or(Expr::Const(true), |e| e.presence.clone())
        };
        let coverable = sm.transitions().iter().all(|t| {
            let conds: Vec<Expr> = [t.id.as_str()]
                .into_iter()
                .chain(sm.leaves_under(&t.source))
                .map(pres)
                .chain(std::iter::once(pres(sm.entry_leaf(&t.target))))
                .collect();
            holds(&conds.iter().collect::<Vec<_>>())
        });
        if !coverable {
            continue;
        }
        let map = MappingModel::new(entries, &fm, &sm).unwrap();
        if configs.iter().all(|c| map.prune(&sm, c).is_ok()) {
            break map;
        }
    };
    ProductLine { fm, sm, map }
}

/// Reference semantics on the hierarchy: the innermost state with an
/// enabled transition for the event decides; two enabled there is an error.
pub fn hierarchical_run(sm: &StateMachine, events: &[String], values: &Assignment) -> Result<Vec<(String, String)>, Option<usize>> {
    let mut at = sm.entry_leaf(sm.initial()).to_string();
    let mut out = Vec::new();
    for (step, e) in events.iter().enumerate() {
        let mut chain = vec![at.clone()];
        chain.extend(sm.ancestors(&at).into_iter().map(str::to_string));
        let mut fired = None;
        for s in &chain {
            let enabled: Vec<_> = sm
                .transitions()
                .iter()
                .filter(|t| &t.source == s && t.trigger.as_deref() == Some(e.as_str()))
                .filter(|t| t.guard.as_ref().is_none_or(|g| g.eval(&|v| values.get(v).unwrap())))
                .collect();
            match enabled.len() {
                0 => continue,
                1 => {
                    fired = Some(enabled[0]);
                    break;
                }
                _ => return Err(Some(step)),
            }
        }
        let t = fired.ok_or(Some(step))?;
        at = sm.entry_leaf(&t.target).to_string();
        out.push((t.id.clone(), at.clone()));
    }
    Ok(out)
}

/// Coverage ids that some walk can fire under some total assignment of
/// `vars`, taking only transitions that are the unique enabled choice for
/// their trigger. `flat` must be flat and without completion transitions.
pub fn brute_force_coverable(flat: &StateMachine, vars: &[String]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for bits in 0u64..1 << vars.len() {
        let values: Assignment = vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), bits >> i & 1 == 1))
            .collect();
        let on = |t: &Transition| t.guard.as_ref().is_none_or(|g| g.eval(&|v| values.get(v).unwrap()));
        let mut seen = BTreeSet::from([flat.initial().to_string()]);
        let mut todo = vec![flat.initial().to_string()];
        while let Some(s) = todo.pop() {
            let enabled: Vec<&Transition> = flat.transitions().iter().filter(|t| t.source == s && on(t)).collect();
            for t in &enabled {
                if enabled.iter().filter(|u| u.trigger == t.trigger).count() > 1 {
                    continue;
                }
                out.insert(t.coverage_id().to_string());
                if seen.insert(t.target.clone()) {
                    todo.push(t.target.clone());
                }
            }
        }
    }
    out
}
