use super::{State, StateMachine, StateMachineError, Transition};
use crate::expr::Expr;

impl StateMachine {
    /// Replace the hierarchy by its leaf states.
    ///
    /// A transition leaving a composite state is replicated from every leaf
    /// inside it as `<id>@<leaf>`; replicas keep the original id as their
    /// coverage identity. Transitions declared on states nested deeper take
    /// priority, so a replica's guard is conjoined with the negated guards of
    /// same-trigger transitions between the leaf and the composite. Targets
    /// that are composite resolve to their initial leaf.
    pub fn flatten(&self) -> Result<StateMachine, StateMachineError> {
        if self.is_flat() {
            return Ok(self.clone());
        }
        let mut transitions = Vec::new();
        for t in self.transitions() {
            let target = self.entry_leaf(&t.target).to_string();
            if !self.is_composite(&t.source) {
                transitions.push(Transition {
                    target,
                    ..t.clone()
                });
                continue;
            }
            for leaf in self.leaves_under(&t.source) {
                let mut parts: Vec<Expr> = t.guard.iter().cloned().collect();
                let mut shadowed = false;
                let mut chain = vec![leaf];
                chain.extend(
                    self.ancestors(leaf)
                        .into_iter()
                        .take_while(|a| *a != t.source),
                );
                for inner in self.transitions() {
                    if inner.trigger != t.trigger || !chain.contains(&inner.source.as_str()) {
                        continue;
                    }
                    match &inner.guard {
                        None => shadowed = true,
                        Some(g) => parts.push(Expr::not(g.clone())),
                    }
                }
                if shadowed {
                    continue;
                }
                let guard = if parts.is_empty() {
                    None
                } else {
                    match Expr::all(parts).simplify() {
                        Expr::Const(false) => continue,
                        Expr::Const(true) => None,
                        g => Some(g),
                    }
                };
                transitions.push(Transition {
                    id: format!("{}@{}", t.id, leaf),
                    source: leaf.to_string(),
                    target: target.clone(),
                    trigger: t.trigger.clone(),
                    guard,
                    tags: t.tags.clone(),
                    origin: Some(t.coverage_id().to_string()),
                });
            }
        }
        let states: Vec<State> = self
            .leaf_states()
            .into_iter()
            .map(|id| State {
                id: id.to_string(),
                kind: super::StateKind::Simple,
                is_final: self.is_final(id),
            })
            .collect();
        StateMachine::new(
            self.name(),
            self.entry_leaf(self.initial()),
            states,
            transitions,
            self.variables().to_vec(),
            self.constraint().cloned(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Assignment;
    use crate::state_machine::tests::two_state;
    use crate::state_machine::GuardVariable;

    fn with_composite() -> StateMachine {
        StateMachine::new(
            "h",
            "C",
            vec![
                State::composite("C", "c1", vec![State::simple("c1"), State::simple("c2")]),
                State::simple("D"),
            ],
            vec![
                Transition::new("next", "c1", "c2", "next"),
                Transition::new("quit", "C", "D", "quit"),
                Transition::new("back", "D", "C", "back"),
            ],
            vec![],
            None,
        )
        .unwrap()
    }

    #[test]
    fn boundary_exit_is_replicated() {
        let flat = with_composite().flatten().unwrap();
        assert!(flat.is_flat());
        assert_eq!(flat.initial(), "c1");
        let quits: Vec<(&str, &str)> = flat
            .transitions()
            .iter()
            .filter(|t| t.coverage_id() == "quit")
            .map(|t| (t.source.as_str(), t.target.as_str()))
            .collect();
        assert_eq!(quits, vec![("c1", "D"), ("c2", "D")]);
        let back = flat.transition("back").unwrap();
        assert_eq!(back.target, "c1");
        assert_eq!(flat.coverage_targets().len(), 3);
    }

    #[test]
    fn replays_agree_on_a_small_example() {
        let flat = with_composite().flatten().unwrap();
        let t = flat
            .replay(&["next", "quit", "back", "quit"], &Assignment::new())
            .unwrap();
        let origins: Vec<&str> = t.covered().collect();
        assert_eq!(origins, vec!["next", "quit", "back", "quit"]);
        assert_eq!(t.final_state("c1"), "D");
    }

    #[test]
    fn flat_machine_is_unchanged() {
        let sm = two_state();
        assert_eq!(sm.flatten().unwrap(), sm);
    }

    #[test]
    fn inner_transitions_take_priority() {
        let sm = StateMachine::new(
            "p",
            "C",
            vec![
                State::composite("C", "c1", vec![State::simple("c1"), State::simple("c2")]),
                State::simple("D"),
            ],
            vec![
                Transition::new("inner", "c1", "c2", "e").guarded(Expr::var("x")),
                Transition::new("outer", "C", "D", "e"),
                Transition::new("blocked", "c2", "c1", "f"),
                Transition::new("outer_f", "C", "D", "f"),
            ],
            vec![GuardVariable::new("x")],
            None,
        )
        .unwrap();
        let flat = sm.flatten().unwrap();
        let replica = flat.transition("outer@c1").unwrap();
        assert_eq!(replica.guard, Some(Expr::not(Expr::var("x"))));
        assert!(flat.transition("outer_f@c2").is_none(), "shadowed by an unguarded inner transition");
        assert!(flat.transition("outer_f@c1").is_some());
        let on = flat.replay(&["e"], &Assignment::new().with("x", true)).unwrap();
        assert_eq!(on.final_state("c1"), "c2");
        let off = flat.replay(&["e"], &Assignment::new().with("x", false)).unwrap();
        assert_eq!(off.final_state("c1"), "D");
    }
}
