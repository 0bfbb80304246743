//! Enumeration, counting and coverage-driven variant derivation.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ChildKind, Configuration, FeatureModel, FeatureModelError, GroupKind};

/// Feature-model coverage criteria used to pick representative variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageCriterion {
    /// Every feature is selected in at least one variant.
    #[serde(rename = "all-selected")]
    AllFeaturesSelected,
    /// Every deselectable feature is left out of at least one variant.
    #[serde(rename = "all-unselected")]
    AllFeaturesUnselected,
}

impl fmt::Display for CoverageCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoverageCriterion::AllFeaturesSelected => "all-selected",
            CoverageCriterion::AllFeaturesUnselected => "all-unselected",
        })
    }
}

impl FromStr for CoverageCriterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all-selected" => Ok(CoverageCriterion::AllFeaturesSelected),
            "all-unselected" => Ok(CoverageCriterion::AllFeaturesUnselected),
            other => Err(format!("unknown criterion `{other}`")),
        }
    }
}

/// One coverage requirement: `feature` must appear with the given selection
/// state in some variant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Obligation {
    pub feature: String,
    pub selected: bool,
}

impl fmt::Display for Obligation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.selected {
            write!(f, "{} selected", self.feature)
        } else {
            write!(f, "{} unselected", self.feature)
        }
    }
}

/// Search-node budget for the exact minimum-cover search before falling
/// back to the greedy answer.
const EXACT_SEARCH_BUDGET: usize = 200_000;

enum Unit {
    Mandatory(usize),
    Optional(usize),
    Group(GroupKind, Vec<usize>),
}

impl FeatureModel {
    /// Number of selections that satisfy the tree rules alone, saturating.
    pub fn tree_candidate_count(&self) -> u128 {
        self.subtree_count(0)
    }

    fn subtree_count(&self, f: usize) -> u128 {
        let mut total: u128 = 1;
        for unit in self.units(f) {
            let n = match unit {
                Unit::Mandatory(c) => self.subtree_count(c),
                Unit::Optional(c) => self.subtree_count(c).saturating_add(1),
                Unit::Group(GroupKind::Or, ms) => ms
                    .iter()
                    .fold(1u128, |acc, &m| acc.saturating_mul(self.subtree_count(m).saturating_add(1)))
                    .saturating_sub(1),
                Unit::Group(GroupKind::Alternative, ms) => ms
                    .iter()
                    .fold(0u128, |acc, &m| acc.saturating_add(self.subtree_count(m))),
            };
            total = total.saturating_mul(n);
        }
        total
    }

    fn units(&self, f: usize) -> Vec<Unit> {
        let mut units = Vec::new();
        let mut seen_groups = BTreeSet::new();
        for &c in &self.features[f].children {
            match self.features[c].kind {
                Some(ChildKind::Mandatory) => units.push(Unit::Mandatory(c)),
                Some(ChildKind::Optional) => units.push(Unit::Optional(c)),
                Some(ChildKind::Or { group }) | Some(ChildKind::Alternative { group })
                    if seen_groups.insert(group) =>
                {
                    let g = &self.groups[group];
                    units.push(Unit::Group(g.kind, g.members.clone()));
                }
                _ => {}
            }
        }
        units
    }

    /// Visit every valid configuration as a selection mask, in no
    /// particular order. Stops early when `visit` breaks.
    pub(crate) fn for_each_valid(
        &self,
        visit: &mut dyn FnMut(&[bool]) -> ControlFlow<()>,
    ) -> Result<(), FeatureModelError> {
        let candidates = self.tree_candidate_count();
        if candidates > u128::from(self.candidate_limit) {
            return Err(FeatureModelError::BoundExceeded {
                candidates,
                limit: self.candidate_limit,
            });
        }
        let mut sel = vec![false; self.features.len()];
        sel[0] = true;
        let mut pending = vec![0];
        let mut filtered = |s: &[bool]| {
            if self.constraints_hold(s) {
                visit(s)
            } else {
                ControlFlow::Continue(())
            }
        };
        let _ = self.expand(&mut pending, &mut sel, &mut filtered);
        Ok(())
    }

    fn expand(
        &self,
        pending: &mut Vec<usize>,
        sel: &mut [bool],
        visit: &mut dyn FnMut(&[bool]) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        let Some(f) = pending.pop() else {
            return visit(sel);
        };
        let units = self.units(f);
        let r = self.expand_units(&units, 0, pending, sel, visit);
        pending.push(f);
        r
    }

    fn expand_units(
        &self,
        units: &[Unit],
        at: usize,
        pending: &mut Vec<usize>,
        sel: &mut [bool],
        visit: &mut dyn FnMut(&[bool]) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        let Some(unit) = units.get(at) else {
            return self.expand(pending, sel, visit);
        };
        let with = |chosen: &[usize],
                        pending: &mut Vec<usize>,
                        sel: &mut [bool],
                        visit: &mut dyn FnMut(&[bool]) -> ControlFlow<()>| {
            for &c in chosen {
                sel[c] = true;
                pending.push(c);
            }
            let r = self.expand_units(units, at + 1, pending, sel, visit);
            for &c in chosen {
                sel[c] = false;
                pending.pop();
            }
            r
        };
        match unit {
            Unit::Mandatory(c) => with(&[*c], pending, sel, visit),
            Unit::Optional(c) => {
                with(&[], pending, sel, visit)?;
                with(&[*c], pending, sel, visit)
            }
            Unit::Group(GroupKind::Alternative, ms) => {
                for &m in ms {
                    with(&[m], pending, sel, visit)?;
                }
                ControlFlow::Continue(())
            }
            Unit::Group(GroupKind::Or, ms) => {
                for bits in 1u64..(1u64 << ms.len()) {
                    let chosen: Vec<usize> = ms
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| bits >> i & 1 == 1)
                        .map(|(_, &m)| m)
                        .collect();
                    with(&chosen, pending, sel, visit)?;
                }
                ControlFlow::Continue(())
            }
        }
    }

    /// All valid configurations in lexicographic order of their sorted id
    /// lists. Fails when more than `cap` exist.
    pub fn enumerate_configurations(
        &self,
        cap: usize,
    ) -> Result<Vec<Configuration>, FeatureModelError> {
        let mut out = Vec::new();
        let mut overflow = false;
        self.for_each_valid(&mut |s| {
            if out.len() == cap {
                overflow = true;
                return ControlFlow::Break(());
            }
            out.push(self.config_of(s));
            ControlFlow::Continue(())
        })?;
        if overflow {
            return Err(FeatureModelError::CapExceeded { cap });
        }
        out.sort();
        Ok(out)
    }

    pub fn count_configurations(&self) -> Result<u64, FeatureModelError> {
        let mut n = 0u64;
        self.for_each_valid(&mut |_| {
            n += 1;
            ControlFlow::Continue(())
        })?;
        Ok(n)
    }

    pub fn is_satisfiable(&self) -> Result<bool, FeatureModelError> {
        let mut found = false;
        self.for_each_valid(&mut |_| {
            found = true;
            ControlFlow::Break(())
        })?;
        Ok(found)
    }

    /// Features whose absence occurs in at least one valid configuration.
    pub fn deselectable_features(&self) -> Result<BTreeSet<String>, FeatureModelError> {
        let (_, off) = self.selection_spectrum()?;
        Ok(off)
    }

    /// Features that occur selected in at least one valid configuration.
    pub fn live_features(&self) -> Result<BTreeSet<String>, FeatureModelError> {
        let (on, _) = self.selection_spectrum()?;
        Ok(on)
    }

    fn selection_spectrum(&self) -> Result<(BTreeSet<String>, BTreeSet<String>), FeatureModelError> {
        let n = self.features.len();
        let mut on = vec![false; n];
        let mut off = vec![false; n];
        self.for_each_valid(&mut |s| {
            for i in 0..n {
                if s[i] {
                    on[i] = true;
                } else {
                    off[i] = true;
                }
            }
            if on.iter().zip(&off).all(|(a, b)| *a && *b) {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })?;
        let pick = |flags: &[bool]| {
            self.features
                .iter()
                .zip(flags)
                .filter(|(_, &b)| b)
                .map(|(f, _)| f.id.clone())
                .collect()
        };
        Ok((pick(&on), pick(&off)))
    }

    /// The coverage obligations the given criteria impose on this model.
    /// Features that can never be selected (or never be left out) carry no
    /// obligation.
    pub fn obligations(
        &self,
        criteria: &[CoverageCriterion],
    ) -> Result<Vec<Obligation>, FeatureModelError> {
        let (on, off) = self.selection_spectrum()?;
        let mut out = Vec::new();
        if criteria.contains(&CoverageCriterion::AllFeaturesSelected) {
            for f in &self.features {
                if on.contains(&f.id) {
                    out.push(Obligation {
                        feature: f.id.clone(),
                        selected: true,
                    });
                }
            }
        }
        if criteria.contains(&CoverageCriterion::AllFeaturesUnselected) {
            for f in &self.features {
                if off.contains(&f.id) {
                    out.push(Obligation {
                        feature: f.id.clone(),
                        selected: false,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Obligations left unmet by `configs`. Empty means the criteria hold.
    pub fn coverage_gaps(
        &self,
        configs: &[Configuration],
        criteria: &[CoverageCriterion],
    ) -> Result<Vec<Obligation>, FeatureModelError> {
        Ok(self
            .obligations(criteria)?
            .into_iter()
            .filter(|o| !configs.iter().any(|c| c.contains(&o.feature) == o.selected))
            .collect())
    }

    /// Pick a small set of valid configurations that jointly satisfy the
    /// criteria. An exact minimum cover is searched first (iterative
    /// deepening with a node budget); the greedy cover with redundant picks
    /// dropped is the fallback. Output is sorted.
    pub fn derive_variants(
        &self,
        criteria: &[CoverageCriterion],
    ) -> Result<Vec<Configuration>, FeatureModelError> {
        let configs = self.enumerate_configurations(usize::MAX)?;
        if configs.is_empty() {
            return Err(FeatureModelError::Unsatisfiable);
        }
        let obligations = self.obligations(criteria)?;
        let covers: Vec<Vec<usize>> = configs
            .iter()
            .map(|c| {
                obligations
                    .iter()
                    .enumerate()
                    .filter(|(_, o)| c.contains(&o.feature) == o.selected)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        let greedy = greedy_cover(obligations.len(), &covers);
        let chosen = exact_cover(obligations.len(), &covers, greedy.len()).unwrap_or(greedy);
        let mut out: Vec<Configuration> = chosen.into_iter().map(|i| configs[i].clone()).collect();
        out.sort();
        Ok(out)
    }
}

fn greedy_cover(n_obligations: usize, covers: &[Vec<usize>]) -> Vec<usize> {
    let mut unmet = vec![true; n_obligations];
    let mut left = n_obligations;
    let mut picks = Vec::new();
    while left > 0 {
        let (best, gain) = covers
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.iter().filter(|&&o| unmet[o]).count()))
            .fold((0, 0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if gain == 0 {
            break;
        }
        for &o in &covers[best] {
            if unmet[o] {
                unmet[o] = false;
                left -= 1;
            }
        }
        picks.push(best);
    }
    if picks.is_empty() {
        // Still need one variant even with no obligations.
        picks.push(0);
    }
    // Drop picks whose obligations are all covered by the remaining ones.
    let mut i = 0;
    while i < picks.len() && picks.len() > 1 {
        let others: Vec<usize> = picks
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &p)| p)
            .collect();
        let redundant = covers[picks[i]]
            .iter()
            .all(|o| others.iter().any(|&p| covers[p].contains(o)));
        if redundant {
            picks.remove(i);
        } else {
            i += 1;
        }
    }
    picks
}

/// Smallest cover strictly below `upper` picks, if one is found within the
/// search budget.
fn exact_cover(n_obligations: usize, covers: &[Vec<usize>], upper: usize) -> Option<Vec<usize>> {
    if n_obligations == 0 {
        return None;
    }
    let mut by_obligation = vec![Vec::new(); n_obligations];
    for (i, c) in covers.iter().enumerate() {
        for &o in c {
            by_obligation[o].push(i);
        }
    }
    let mut budget = EXACT_SEARCH_BUDGET;
    for depth in 1..upper {
        let mut hits = vec![0usize; n_obligations];
        let mut chosen = Vec::new();
        match search(depth, &by_obligation, covers, &mut hits, &mut chosen, &mut budget) {
            Some(true) => return Some(chosen),
            Some(false) => {}
            None => return None,
        }
    }
    None
}

/// Depth-limited search; `None` when the budget runs out.
fn search(
    depth: usize,
    by_obligation: &[Vec<usize>],
    covers: &[Vec<usize>],
    hits: &mut [usize],
    chosen: &mut Vec<usize>,
    budget: &mut usize,
) -> Option<bool> {
    if *budget == 0 {
        return None;
    }
    *budget -= 1;
    let branch = (0..hits.len())
        .filter(|&o| hits[o] == 0)
        .min_by_key(|&o| by_obligation[o].len());
    let Some(o) = branch else {
        return Some(true);
    };
    if depth == 0 {
        return Some(false);
    }
    for &c in &by_obligation[o] {
        for &x in &covers[c] {
            hits[x] += 1;
        }
        chosen.push(c);
        match search(depth - 1, by_obligation, covers, hits, chosen, budget) {
            Some(true) => return Some(true),
            Some(false) => {}
            None => return None,
        }
        chosen.pop();
        for &x in &covers[c] {
            hits[x] -= 1;
        }
    }
    Some(false)
}
