//! JSON document format for feature models.
//!
//! ```json
//! {
//!   "name": "online-shop",
//!   "root": {
//!     "id": "OnlineShop",
//!     "children": [{ "id": "Catalog", "kind": "mandatory" }],
//!     "orGroups": [["BankAccount", "ECoins", { "id": "CreditCard" }]],
//!     "altGroups": []
//!   },
//!   "constraints": [{ "op": "requires", "args": [...] }]
//! }
//! ```
//!
//! Group members are either bare ids (leaf features) or nested nodes.

use serde::{Deserialize, Serialize};

use super::{ChildKind, FeatureModel, FeatureModelBuilder, FeatureModelError, GroupKind};
use crate::expr::Expr;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureModelDoc {
    name: String,
    root: NodeDoc,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    constraints: Vec<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindDoc {
    Mandatory,
    Optional,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct NodeDoc {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<KindDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<NodeDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    or_groups: Vec<Vec<MemberDoc>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    alt_groups: Vec<Vec<MemberDoc>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum MemberDoc {
    Id(String),
    Node(NodeDoc),
}

impl MemberDoc {
    fn id(&self) -> &str {
        match self {
            MemberDoc::Id(id) => id,
            MemberDoc::Node(n) => &n.id,
        }
    }
}

impl FeatureModel {
    /// Parse the JSON feature-model document.
    pub fn from_json(text: &str) -> Result<FeatureModel, FeatureModelError> {
        let doc: FeatureModelDoc = serde_json::from_str(text)?;
        if doc.root.kind.is_some() {
            return Err(FeatureModelError::Invalid {
                message: "the root feature takes no `kind`".into(),
                location: "root".into(),
            });
        }
        let mut b = FeatureModelBuilder::new(doc.name, doc.root.id.clone());
        add_subtree(&mut b, &doc.root, "root")?;
        for c in doc.constraints {
            b.constraint(c);
        }
        b.build()
    }

    pub fn to_json(&self) -> String {
        let doc = FeatureModelDoc {
            name: self.name.clone(),
            root: self.node_doc(0),
            constraints: self.constraints.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("feature model serializes")
    }

    fn node_doc(&self, f: usize) -> NodeDoc {
        let mut node = NodeDoc {
            id: self.features[f].id.clone(),
            kind: None,
            children: vec![],
            or_groups: vec![],
            alt_groups: vec![],
        };
        let mut emitted = Vec::new();
        for &c in &self.features[f].children {
            match self.features[c].kind {
                Some(ChildKind::Mandatory) | Some(ChildKind::Optional) => {
                    let mut child = self.node_doc(c);
                    child.kind = Some(if self.features[c].kind == Some(ChildKind::Mandatory) {
                        KindDoc::Mandatory
                    } else {
                        KindDoc::Optional
                    });
                    node.children.push(child);
                }
                Some(ChildKind::Or { group }) | Some(ChildKind::Alternative { group }) => {
                    if emitted.contains(&group) {
                        continue;
                    }
                    emitted.push(group);
                    let g = &self.groups[group];
                    let members = g
                        .members
                        .iter()
                        .map(|&m| {
                            let n = self.node_doc(m);
                            if n.children.is_empty() && n.or_groups.is_empty() && n.alt_groups.is_empty() {
                                MemberDoc::Id(n.id)
                            } else {
                                MemberDoc::Node(n)
                            }
                        })
                        .collect();
                    match g.kind {
                        GroupKind::Or => node.or_groups.push(members),
                        GroupKind::Alternative => node.alt_groups.push(members),
                    }
                }
                None => {}
            }
        }
        node
    }
}

fn add_subtree(
    b: &mut FeatureModelBuilder,
    node: &NodeDoc,
    location: &str,
) -> Result<(), FeatureModelError> {
    for (i, child) in node.children.iter().enumerate() {
        let loc = format!("{location}.children[{i}]");
        let kind = child.kind.ok_or_else(|| FeatureModelError::Invalid {
            message: format!("child `{}` needs a `kind` of mandatory or optional", child.id),
            location: loc.clone(),
        })?;
        b.child_at(&node.id, &child.id, kind == KindDoc::Mandatory, &loc)?;
        add_subtree(b, child, &loc)?;
    }
    let groups = node
        .or_groups
        .iter()
        .map(|g| (GroupKind::Or, g, "orGroups"))
        .chain(node.alt_groups.iter().map(|g| (GroupKind::Alternative, g, "altGroups")));
    let mut counters = [0usize; 2];
    for (kind, members, field) in groups {
        let k = usize::from(kind == GroupKind::Alternative);
        let loc = format!("{location}.{field}[{}]", counters[k]);
        counters[k] += 1;
        for m in members.iter() {
            if let MemberDoc::Node(n) = m {
                if n.kind.is_some() {
                    return Err(FeatureModelError::Invalid {
                        message: format!("group member `{}` must not carry a `kind`", n.id),
                        location: loc,
                    });
                }
            }
        }
        let ids: Vec<&str> = members.iter().map(MemberDoc::id).collect();
        b.group_at(&node.id, kind, &ids, &loc)?;
        for (j, m) in members.iter().enumerate() {
            if let MemberDoc::Node(n) = m {
                add_subtree(b, n, &format!("{loc}[{j}]"))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHOP: &str = include_str!("../../fixtures/online_shop/feature_model.json");

    #[test]
    fn parses_the_online_shop() {
        let fm = FeatureModel::from_json(SHOP).unwrap();
        assert_eq!(fm.root(), "OnlineShop");
        assert_eq!(fm.len(), 10);
        let kind = |id: &str| fm.feature(id).unwrap().kind;
        assert_eq!(kind("Catalog"), Some(ChildKind::Mandatory));
        assert_eq!(kind("Payment"), Some(ChildKind::Mandatory));
        assert_eq!(kind("Security"), Some(ChildKind::Mandatory));
        assert_eq!(kind("Search"), Some(ChildKind::Optional));
        assert!(matches!(kind("ECoins"), Some(ChildKind::Or { .. })));
        assert!(matches!(kind("Low"), Some(ChildKind::Alternative { .. })));
        assert_eq!(fm.constraints(), &[Expr::requires("CreditCard", "High")]);
    }

    #[test]
    fn round_trips_through_json() {
        let fm = FeatureModel::from_json(SHOP).unwrap();
        let again = FeatureModel::from_json(&fm.to_json()).unwrap();
        assert_eq!(again.features(), fm.features());
        assert_eq!(again.groups(), fm.groups());
        assert_eq!(again.constraints(), fm.constraints());
    }

    #[test]
    fn single_root_document() {
        let fm = FeatureModel::from_json(r#"{"name":"solo","root":{"id":"Solo"}}"#).unwrap();
        assert_eq!(fm.len(), 1);
    }

    #[test]
    fn undeclared_constraint_atom_is_reported() {
        let doc = r#"{"name":"m","root":{"id":"R","children":[{"id":"A","kind":"optional"}]},
            "constraints":[{"op":"requires","args":[{"op":"var","name":"A"},{"op":"var","name":"Paypal"}]}]}"#;
        let err = FeatureModel::from_json(doc).unwrap_err();
        assert!(err.to_string().contains("Paypal"), "{err}");
        assert!(err.to_string().contains("constraints[0]"), "{err}");
    }

    #[test]
    fn errors_carry_locations() {
        let dup = r#"{"name":"m","root":{"id":"R","children":[
            {"id":"A","kind":"optional"},{"id":"B","kind":"optional","orGroups":[["A","C"]]}]}}"#;
        let err = FeatureModel::from_json(dup).unwrap_err();
        assert!(matches!(err, FeatureModelError::DuplicateFeature { ref location, .. }
            if location == "root.children[1].orGroups[0]"), "{err}");

        let small = r#"{"name":"m","root":{"id":"R","altGroups":[["A"]]}}"#;
        assert!(matches!(
            FeatureModel::from_json(small).unwrap_err(),
            FeatureModelError::GroupTooSmall { size: 1, .. }
        ));

        let cyc = r#"{"name":"m","root":{"id":"R","children":[{"id":"R","kind":"optional"}]}}"#;
        assert!(matches!(
            FeatureModel::from_json(cyc).unwrap_err(),
            FeatureModelError::Cycle { .. }
        ));

        let missing_kind = r#"{"name":"m","root":{"id":"R","children":[{"id":"A"}]}}"#;
        assert!(FeatureModel::from_json(missing_kind).is_err());

        let syntax = FeatureModel::from_json("{\"name\": ").unwrap_err();
        assert!(syntax.to_string().contains("line 1"), "{syntax}");
    }
}
