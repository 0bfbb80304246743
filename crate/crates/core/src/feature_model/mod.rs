//! Feature models: a tree of features with mandatory/optional children,
//! or-groups and alternative groups, plus propositional cross-tree
//! constraints.
//!
//! Features are stored in an arena in insertion order; index 0 is the root.

mod analysis;
mod format;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;

pub use analysis::{CoverageCriterion, Obligation};

/// Default bound on the number of tree-valid candidate selections explored
/// by enumeration.
pub const DEFAULT_CANDIDATE_LIMIT: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureModelError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("{location}: duplicate feature id `{id}`")]
    DuplicateFeature { id: String, location: String },
    #[error("{location}: feature `{id}` appears as its own descendant")]
    Cycle { id: String, location: String },
    #[error("{location}: unknown feature `{id}`")]
    UnknownFeature { id: String, location: String },
    #[error("{location}: group has {size} member(s), at least 2 are required")]
    GroupTooSmall { size: usize, location: String },
    #[error("{location}: {message}")]
    Invalid { message: String, location: String },
    #[error("configuration refers to unknown feature `{0}`")]
    UnknownConfigurationFeature(String),
    #[error("{candidates} candidate configurations exceed the enumeration bound of {limit}")]
    BoundExceeded { candidates: u128, limit: u64 },
    #[error("more than {cap} valid configurations")]
    CapExceeded { cap: usize },
    #[error("feature model is unsatisfiable")]
    Unsatisfiable,
}

impl From<serde_json::Error> for FeatureModelError {
    fn from(e: serde_json::Error) -> Self {
        FeatureModelError::Syntax(e.to_string())
    }
}

/// How a feature hangs off its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChildKind {
    Mandatory,
    Optional,
    /// Member of the or-group with this index in [`FeatureModel::groups`].
    Or { group: usize },
    /// Member of the alternative group with this index.
    Alternative { group: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupKind {
    Or,
    Alternative,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub parent: usize,
    pub kind: GroupKind,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feature {
    pub id: String,
    pub parent: Option<usize>,
    pub kind: Option<ChildKind>,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FeatureModel {
    name: String,
    features: Vec<Feature>,
    groups: Vec<Group>,
    constraints: Vec<Expr>,
    index: HashMap<String, usize>,
    candidate_limit: u64,
}

/// A set of selected feature ids. Ordering is lexicographic over the sorted
/// id list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(BTreeSet<String>);

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.contains(id)
    }

    pub fn insert(&mut self, id: impl Into<String>) {
        self.0.insert(id.into());
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Configuration {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Configuration(iter.into_iter().map(Into::into).collect())
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, id) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{id}")?;
        }
        write!(f, "}}")
    }
}

/// Guard-variable name used for a feature: the id with its first character
/// lower-cased (`CreditCard` becomes `creditCard`).
pub fn feature_variable(id: &str) -> String {
    let mut chars = id.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

impl FeatureModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn root(&self) -> &str {
        &self.features[0].id
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn constraints(&self) -> &[Expr] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn feature(&self, id: &str) -> Option<&Feature> {
        self.index_of(id).map(|i| &self.features[i])
    }

    pub fn feature_ids(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.id.as_str())
    }

    pub fn candidate_limit(&self) -> u64 {
        self.candidate_limit
    }

    /// Change the bound on explored candidate selections.
    pub fn set_candidate_limit(&mut self, limit: u64) {
        self.candidate_limit = limit;
    }

    /// Check a configuration against the tree rules and every cross-tree
    /// constraint. Unknown ids are an error rather than `false`.
    pub fn is_valid(&self, cfg: &Configuration) -> Result<bool, FeatureModelError> {
        let mask = self.mask_of(cfg)?;
        Ok(self.is_valid_mask(&mask))
    }

    pub(crate) fn mask_of(&self, cfg: &Configuration) -> Result<Vec<bool>, FeatureModelError> {
        let mut mask = vec![false; self.features.len()];
        for id in cfg.iter() {
            let i = self
                .index_of(id)
                .ok_or_else(|| FeatureModelError::UnknownConfigurationFeature(id.to_string()))?;
            mask[i] = true;
        }
        Ok(mask)
    }

    pub(crate) fn config_of(&self, mask: &[bool]) -> Configuration {
        self.features
            .iter()
            .zip(mask)
            .filter(|(_, &on)| on)
            .map(|(f, _)| f.id.clone())
            .collect()
    }

    pub(crate) fn is_valid_mask(&self, sel: &[bool]) -> bool {
        if !sel[0] {
            return false;
        }
        for (i, f) in self.features.iter().enumerate() {
            if let Some(p) = f.parent {
                if sel[i] && !sel[p] {
                    return false;
                }
                if f.kind == Some(ChildKind::Mandatory) && sel[p] && !sel[i] {
                    return false;
                }
            }
        }
        for g in &self.groups {
            if !sel[g.parent] {
                continue;
            }
            let on = g.members.iter().filter(|&&m| sel[m]).count();
            let ok = match g.kind {
                GroupKind::Or => on >= 1,
                GroupKind::Alternative => on == 1,
            };
            if !ok {
                return false;
            }
        }
        self.constraints_hold(sel)
    }

    pub(crate) fn constraints_hold(&self, sel: &[bool]) -> bool {
        let lookup = |id: &str| self.index.get(id).is_some_and(|&i| sel[i]);
        self.constraints.iter().all(|c| c.eval(&lookup))
    }

    /// The whole validity predicate as one expression, with every feature id
    /// passed through `atom`.
    pub fn validity_expr(&self, atom: &impl Fn(&str) -> String) -> Expr {
        let var = |i: usize| Expr::Var(atom(&self.features[i].id));
        let mut parts = vec![var(0)];
        for (i, f) in self.features.iter().enumerate() {
            if let Some(p) = f.parent {
                parts.push(Expr::implies(var(i), var(p)));
                if f.kind == Some(ChildKind::Mandatory) {
                    parts.push(Expr::implies(var(p), var(i)));
                }
            }
        }
        for g in &self.groups {
            let members: Vec<Expr> = g.members.iter().map(|&m| var(m)).collect();
            parts.push(Expr::implies(var(g.parent), Expr::Or(members)));
            if g.kind == GroupKind::Alternative {
                for (k, &a) in g.members.iter().enumerate() {
                    for &b in &g.members[k + 1..] {
                        parts.push(Expr::not(Expr::And(vec![var(a), var(b)])));
                    }
                }
            }
        }
        for c in &self.constraints {
            parts.push(c.rename(atom));
        }
        Expr::And(parts)
    }

    /// Map from guard-variable name to feature id. Fails if two features
    /// collapse onto the same variable name.
    pub fn variable_map(&self) -> Result<HashMap<String, String>, FeatureModelError> {
        let mut out = HashMap::new();
        for f in &self.features {
            let v = feature_variable(&f.id);
            if let Some(prev) = out.insert(v.clone(), f.id.clone()) {
                return Err(FeatureModelError::Invalid {
                    message: format!(
                        "features `{prev}` and `{}` share the variable name `{v}`",
                        f.id
                    ),
                    location: "features".into(),
                });
            }
        }
        Ok(out)
    }
}

/// Incremental construction of a [`FeatureModel`] with invariant checks.
#[derive(Debug, Clone)]
pub struct FeatureModelBuilder {
    model: FeatureModel,
}

impl FeatureModelBuilder {
    pub fn new(name: impl Into<String>, root: impl Into<String>) -> Self {
        let root = root.into();
        let mut index = HashMap::new();
        index.insert(root.clone(), 0);
        FeatureModelBuilder {
            model: FeatureModel {
                name: name.into(),
                features: vec![Feature {
                    id: root,
                    parent: None,
                    kind: None,
                    children: vec![],
                }],
                groups: vec![],
                constraints: vec![],
                index,
                candidate_limit: DEFAULT_CANDIDATE_LIMIT,
            },
        }
    }

    fn parent_index(&self, parent: &str, location: &str) -> Result<usize, FeatureModelError> {
        self.model
            .index_of(parent)
            .ok_or_else(|| FeatureModelError::UnknownFeature {
                id: parent.to_string(),
                location: location.to_string(),
            })
    }

    fn push(
        &mut self,
        parent: usize,
        id: &str,
        kind: ChildKind,
        location: &str,
    ) -> Result<usize, FeatureModelError> {
        if let Some(&existing) = self.model.index.get(id) {
            // An id that is already on the parent's ancestor chain would close a cycle.
            let mut cur = Some(parent);
            while let Some(c) = cur {
                if c == existing {
                    return Err(FeatureModelError::Cycle {
                        id: id.to_string(),
                        location: location.to_string(),
                    });
                }
                cur = self.model.features[c].parent;
            }
            return Err(FeatureModelError::DuplicateFeature {
                id: id.to_string(),
                location: location.to_string(),
            });
        }
        if id.is_empty() {
            return Err(FeatureModelError::Invalid {
                message: "feature id must not be empty".into(),
                location: location.to_string(),
            });
        }
        let idx = self.model.features.len();
        self.model.features.push(Feature {
            id: id.to_string(),
            parent: Some(parent),
            kind: Some(kind),
            children: vec![],
        });
        self.model.features[parent].children.push(idx);
        self.model.index.insert(id.to_string(), idx);
        Ok(idx)
    }

    pub(crate) fn child_at(
        &mut self,
        parent: &str,
        id: &str,
        mandatory: bool,
        location: &str,
    ) -> Result<&mut Self, FeatureModelError> {
        let p = self.parent_index(parent, location)?;
        let kind = if mandatory {
            ChildKind::Mandatory
        } else {
            ChildKind::Optional
        };
        self.push(p, id, kind, location)?;
        Ok(self)
    }

    pub(crate) fn group_at(
        &mut self,
        parent: &str,
        kind: GroupKind,
        members: &[&str],
        location: &str,
    ) -> Result<&mut Self, FeatureModelError> {
        let p = self.parent_index(parent, location)?;
        if members.len() < 2 {
            return Err(FeatureModelError::GroupTooSmall {
                size: members.len(),
                location: location.to_string(),
            });
        }
        let group = self.model.groups.len();
        let child_kind = match kind {
            GroupKind::Or => ChildKind::Or { group },
            GroupKind::Alternative => ChildKind::Alternative { group },
        };
        let mut idxs = Vec::with_capacity(members.len());
        for m in members {
            idxs.push(self.push(p, m, child_kind, location)?);
        }
        self.model.groups.push(Group {
            parent: p,
            kind,
            members: idxs,
        });
        Ok(self)
    }

    pub fn mandatory(&mut self, parent: &str, id: &str) -> Result<&mut Self, FeatureModelError> {
        self.child_at(parent, id, true, &format!("feature `{parent}`"))
    }

    pub fn optional(&mut self, parent: &str, id: &str) -> Result<&mut Self, FeatureModelError> {
        self.child_at(parent, id, false, &format!("feature `{parent}`"))
    }

    pub fn or_group(&mut self, parent: &str, members: &[&str]) -> Result<&mut Self, FeatureModelError> {
        self.group_at(parent, GroupKind::Or, members, &format!("feature `{parent}`"))
    }

    pub fn alternative(
        &mut self,
        parent: &str,
        members: &[&str],
    ) -> Result<&mut Self, FeatureModelError> {
        self.group_at(
            parent,
            GroupKind::Alternative,
            members,
            &format!("feature `{parent}`"),
        )
    }

    pub fn constraint(&mut self, e: Expr) -> &mut Self {
        self.model.constraints.push(e);
        self
    }

    /// Finish construction; every constraint atom must name a feature.
    pub fn build(&self) -> Result<FeatureModel, FeatureModelError> {
        for (i, c) in self.model.constraints.iter().enumerate() {
            if let Some(id) = c.vars().into_iter().find(|v| !self.model.contains(v)) {
                return Err(FeatureModelError::UnknownFeature {
                    id,
                    location: format!("constraints[{i}]"),
                });
            }
        }
        Ok(self.model.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn online_shop() -> FeatureModel {
        let mut b = FeatureModelBuilder::new("online-shop", "OnlineShop");
        b.mandatory("OnlineShop", "Catalog").unwrap();
        b.mandatory("OnlineShop", "Payment").unwrap();
        b.mandatory("OnlineShop", "Security").unwrap();
        b.optional("OnlineShop", "Search").unwrap();
        b.or_group("Payment", &["BankAccount", "ECoins", "CreditCard"])
            .unwrap();
        b.alternative("Security", &["High", "Low"]).unwrap();
        b.constraint(Expr::requires("CreditCard", "High"));
        b.build().unwrap()
    }

    fn cfg(ids: &[&str]) -> Configuration {
        ids.iter().copied().collect()
    }

    #[test]
    fn variant_one_is_valid() {
        let fm = online_shop();
        let c = cfg(&["OnlineShop", "Catalog", "Payment", "CreditCard", "Security", "High"]);
        assert!(fm.is_valid(&c).unwrap());
    }

    #[test]
    fn credit_card_with_low_security_is_invalid() {
        let fm = online_shop();
        let c = cfg(&["OnlineShop", "Catalog", "Payment", "CreditCard", "Security", "Low"]);
        assert!(!fm.is_valid(&c).unwrap());
    }

    #[test]
    fn group_rules() {
        let fm = online_shop();
        let base = ["OnlineShop", "Catalog", "Payment", "Security"];
        let with = |extra: &[&str]| {
            let mut v: Vec<&str> = base.to_vec();
            v.extend_from_slice(extra);
            fm.is_valid(&cfg(&v)).unwrap()
        };
        assert!(!with(&["High"]), "or-group needs a member");
        assert!(!with(&["BankAccount"]), "alternative group needs a member");
        assert!(!with(&["BankAccount", "High", "Low"]), "alternative allows one");
        assert!(with(&["BankAccount", "ECoins", "Low"]));
        assert!(with(&["BankAccount", "Low"]));
    }

    #[test]
    fn unknown_feature_is_an_error() {
        let fm = online_shop();
        let err = fm.is_valid(&cfg(&["OnlineShop", "Paypal"])).unwrap_err();
        assert!(matches!(err, FeatureModelError::UnknownConfigurationFeature(id) if id == "Paypal"));
    }

    #[test]
    fn single_feature_model() {
        let fm = FeatureModelBuilder::new("solo", "Root").build().unwrap();
        assert!(fm.is_valid(&cfg(&["Root"])).unwrap());
        assert!(!fm.is_valid(&cfg(&[])).unwrap());
    }

    #[test]
    fn builder_rejects_bad_structure() {
        let mut b = FeatureModelBuilder::new("m", "R");
        b.optional("R", "A").unwrap();
        assert!(matches!(
            b.optional("R", "A"),
            Err(FeatureModelError::DuplicateFeature { .. })
        ));
        assert!(matches!(
            b.optional("A", "R"),
            Err(FeatureModelError::Cycle { .. })
        ));
        assert!(matches!(
            b.or_group("R", &["X"]),
            Err(FeatureModelError::GroupTooSmall { size: 1, .. })
        ));
        b.constraint(Expr::requires("A", "Paypal"));
        assert!(matches!(
            b.build(),
            Err(FeatureModelError::UnknownFeature { id, .. }) if id == "Paypal"
        ));
    }

    #[test]
    fn validity_expr_matches_is_valid() {
        let fm = online_shop();
        let e = fm.validity_expr(&|id| id.to_string());
        let n = fm.len();
        for bits in 0u32..(1 << n) {
            let sel: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            let lookup = |id: &str| sel[fm.index_of(id).unwrap()];
            assert_eq!(e.eval(&lookup), fm.is_valid_mask(&sel), "bits {bits:b}");
        }
    }

    #[test]
    fn variable_names() {
        assert_eq!(feature_variable("CreditCard"), "creditCard");
        assert_eq!(feature_variable("ECoins"), "eCoins");
        let mut b = FeatureModelBuilder::new("m", "R");
        b.optional("R", "Ab").unwrap().optional("R", "ab").unwrap();
        assert!(b.build().unwrap().variable_map().is_err());
    }
}
