//! The evolutionary tree: a DAG of trained species with per-terrain scores,
//! plus the heuristic that picks the next reproduction.
//!
//! Nodes with no parents are root specialists trained by pure RL; nodes with
//! one or two parents inherited behavior from them via distillation. The
//! selection heuristic greedily pairs the best specialists of two distinct
//! terrains whose pairing has no child yet, ties broken by lexicographic
//! node id, so scheduling is deterministic without an outer learned policy.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, stream};
use crate::schedule::TransitionSchedule;
use crate::{NodeId, TerrainId};

#[derive(Debug, Error, PartialEq)]
pub enum PhyloError {
    #[error("unknown parent `{0}`")]
    UnknownParent(NodeId),
    #[error("parent `{0}` is not done (status {1:?})")]
    ParentNotDone(NodeId, SpeciesStatus),
    #[error("a species takes at most 2 parents, got {0}")]
    TooManyParents(usize),
    #[error("duplicate parent `{0}`")]
    DuplicateParent(NodeId),
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeciesStatus {
    Pending,
    Training,
    Done,
    Failed,
}

/// One policy in the tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeciesNode {
    pub id: NodeId,
    pub parent_ids: Vec<NodeId>,
    pub terrain_set: BTreeSet<TerrainId>,
    /// Terrain id → saturated treat radius, meters.
    pub scores: BTreeMap<TerrainId, f64>,
    pub checkpoint_ref: Option<String>,
    /// Unix epoch milliseconds; rendered as RFC 3339 in tree documents.
    pub created_at_ms: u64,
    pub status: SpeciesStatus,
}

impl SpeciesNode {
    pub fn union_score(&self) -> f64 {
        self.scores.values().sum()
    }
}

/// A chosen reproduction: which parents, which niches, how to train.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproductionPlan {
    /// 1–2 parent node ids, lexicographically ordered.
    pub parent_ids: Vec<NodeId>,
    /// Union of the parents' terrain sets.
    pub target_terrains: BTreeSet<TerrainId>,
    pub schedule: TransitionSchedule,
    pub seed: u64,
    pub iteration_budget: u32,
}

/// Violations reported by [`EvolutionState::validate_dag`]. Violations are
/// data, not failures: hand-edited or deserialized states get inspected
/// rather than rejected outright.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum DagViolation {
    DanglingParent { node: NodeId, parent: NodeId },
    SelfParent { node: NodeId },
    Cycle { node: NodeId },
}

/// Parameters of the reproduction heuristic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub schedule: TransitionSchedule,
    pub iteration_budget: u32,
    pub base_seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            schedule: TransitionSchedule::Geometric { lambda: 0.97 },
            iteration_budget: 1000,
            base_seed: 0,
        }
    }
}

/// The full evolutionary tree; edges are implied by `parent_ids`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionState {
    pub nodes: BTreeMap<NodeId, SpeciesNode>,
    /// Monotone insertion counter; feeds generated node ids.
    pub generation_counter: u64,
}

impl EvolutionState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a new pending species. Parents must exist and be done; at
    /// most two. Returns the fresh id, shaped
    /// `{generation}-{counter}-{8 hex}` for readable lineage.
    pub fn add_species<R: RngCore>(
        &mut self,
        parents: &[NodeId],
        terrain_set: BTreeSet<TerrainId>,
        checkpoint_ref: Option<String>,
        created_at_ms: u64,
        rng: &mut R,
    ) -> Result<NodeId, PhyloError> {
        if parents.len() > 2 {
            return Err(PhyloError::TooManyParents(parents.len()));
        }
        if parents.len() == 2 && parents[0] == parents[1] {
            return Err(PhyloError::DuplicateParent(parents[0].clone()));
        }
        for p in parents {
            let node = self
                .nodes
                .get(p)
                .ok_or_else(|| PhyloError::UnknownParent(p.clone()))?;
            if node.status != SpeciesStatus::Done {
                return Err(PhyloError::ParentNotDone(p.clone(), node.status));
            }
        }
        // Roots are generation 0; children sit one past their deepest parent.
        let generation = parents
            .iter()
            .map(|p| id_generation(p))
            .max()
            .map_or(0, |g| g + 1);
        let counter = self.generation_counter;
        self.generation_counter += 1;
        let id = format!("{}-{}-{:08x}", generation, counter, rng.next_u32());
        debug_assert!(!self.nodes.contains_key(&id));
        self.nodes.insert(
            id.clone(),
            SpeciesNode {
                id: id.clone(),
                parent_ids: parents.to_vec(),
                terrain_set,
                scores: BTreeMap::new(),
                checkpoint_ref,
                created_at_ms,
                status: SpeciesStatus::Pending,
            },
        );
        // New nodes have no children, so no cycle can form; assert anyway.
        debug_assert!(self.validate_dag().is_empty());
        Ok(id)
    }

    pub fn set_status(&mut self, id: &str, status: SpeciesStatus) -> Result<(), PhyloError> {
        self.nodes
            .get_mut(id)
            .ok_or_else(|| PhyloError::UnknownNode(id.into()))?
            .status = status;
        Ok(())
    }

    /// Marks a species done with its scores and checkpoint.
    pub fn complete_species(
        &mut self,
        id: &str,
        scores: BTreeMap<TerrainId, f64>,
        checkpoint_ref: String,
    ) -> Result<(), PhyloError> {
        let node = self
            .nodes
            .get_mut(id)
            .ok_or_else(|| PhyloError::UnknownNode(id.into()))?;
        node.scores = scores;
        node.checkpoint_ref = Some(checkpoint_ref);
        node.status = SpeciesStatus::Done;
        Ok(())
    }

    /// Every dangling parent reference, self-parent, and cycle, in
    /// deterministic order. An empty list means the DAG is valid.
    pub fn validate_dag(&self) -> Vec<DagViolation> {
        let mut violations = Vec::new();
        for (id, node) in &self.nodes {
            for p in &node.parent_ids {
                if p == id {
                    violations.push(DagViolation::SelfParent { node: id.clone() });
                } else if !self.nodes.contains_key(p) {
                    violations.push(DagViolation::DanglingParent {
                        node: id.clone(),
                        parent: p.clone(),
                    });
                }
            }
        }
        // Depth-first search over parent edges with tri-color marking.
        #[derive(Clone, Copy, PartialEq)]
        enum Color {
            White,
            Gray,
            Black,
        }
        let mut color: BTreeMap<&NodeId, Color> =
            self.nodes.keys().map(|k| (k, Color::White)).collect();
        let mut in_cycle: BTreeSet<NodeId> = BTreeSet::new();

        fn visit<'a>(
            nodes: &'a BTreeMap<NodeId, SpeciesNode>,
            id: &'a NodeId,
            color: &mut BTreeMap<&'a NodeId, Color>,
            in_cycle: &mut BTreeSet<NodeId>,
        ) {
            color.insert(id, Color::Gray);
            for p in &nodes[id].parent_ids {
                if p == id || !nodes.contains_key(p) {
                    continue;
                }
                // Keys borrowed from the map keep their lifetime.
                let (p_key, _) = nodes.get_key_value(p).expect("checked");
                match color[p_key] {
                    Color::White => visit(nodes, p_key, color, in_cycle),
                    Color::Gray => {
                        in_cycle.insert(p.clone());
                    }
                    Color::Black => {}
                }
            }
            color.insert(id, Color::Black);
        }

        for id in self.nodes.keys() {
            if color[id] == Color::White {
                visit(&self.nodes, id, &mut color, &mut in_cycle);
            }
        }
        for node in in_cycle {
            violations.push(DagViolation::Cycle { node });
        }
        violations
    }

    /// Per terrain: the best score among done nodes and who holds it. Ties
    /// keep the lexicographically smaller node id.
    pub fn frontier_scores(&self) -> BTreeMap<TerrainId, (f64, NodeId)> {
        let mut frontier: BTreeMap<TerrainId, (f64, NodeId)> = BTreeMap::new();
        for (id, node) in &self.nodes {
            if node.status != SpeciesStatus::Done {
                continue;
            }
            for (terrain, &score) in &node.scores {
                match frontier.get(terrain) {
                    Some((best, _)) if *best >= score => {}
                    _ => {
                        frontier.insert(terrain.clone(), (score, id.clone()));
                    }
                }
            }
        }
        frontier
    }

    /// Greedy reproduction choice: over all pairs of distinct terrains, take
    /// the frontier specialists (distinct nodes) with the highest combined
    /// score whose exact parent pair has no child yet, in any status — an
    /// in-flight or failed pairing is not retried. Returns `None` when no
    /// such pair exists.
    pub fn select_reproduction(&self, cfg: &SelectionConfig) -> Option<ReproductionPlan> {
        let frontier = self.frontier_scores();
        let existing_pairs: BTreeSet<Vec<&NodeId>> = self
            .nodes
            .values()
            .filter(|n| n.parent_ids.len() == 2)
            .map(|n| {
                let mut pair: Vec<&NodeId> = n.parent_ids.iter().collect();
                pair.sort();
                pair
            })
            .collect();

        let terrains: Vec<&TerrainId> = frontier.keys().collect();
        let mut best: Option<(f64, [&NodeId; 2])> = None;
        for i in 0..terrains.len() {
            for j in i + 1..terrains.len() {
                let (score_a, node_a) = &frontier[terrains[i]];
                let (score_b, node_b) = &frontier[terrains[j]];
                if node_a == node_b {
                    continue;
                }
                let mut pair = [node_a, node_b];
                pair.sort();
                if existing_pairs.contains(pair.as_slice()) {
                    continue;
                }
                let combined = score_a + score_b;
                let better = match &best {
                    None => true,
                    Some((s, p)) => {
                        combined > *s || (combined == *s && pair.as_slice() < p.as_slice())
                    }
                };
                if better {
                    best = Some((combined, pair));
                }
            }
        }
        let (_, pair) = best?;
        let target_terrains: BTreeSet<TerrainId> = pair
            .iter()
            .flat_map(|id| self.nodes[*id].terrain_set.iter().cloned())
            .collect();
        Some(ReproductionPlan {
            parent_ids: pair.iter().map(|id| (*id).clone()).collect(),
            target_terrains,
            schedule: cfg.schedule.clone(),
            seed: rng::derive_seed(cfg.base_seed, &[stream::PLAN, self.generation_counter]),
            iteration_budget: cfg.iteration_budget,
        })
    }
}

/// Leading generation number of a generated id; 0 when unparseable (ids from
/// hand-written documents).
fn id_generation(id: &str) -> u64 {
    id.split('-').next().and_then(|g| g.parse().ok()).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    fn set(ts: &[&str]) -> BTreeSet<TerrainId> {
        ts.iter().map(|t| t.to_string()).collect()
    }

    fn add_done(
        state: &mut EvolutionState,
        terrain: &str,
        score: f64,
        rng: &mut ChaCha8Rng,
    ) -> NodeId {
        let id = state
            .add_species(&[], set(&[terrain]), None, 0, rng)
            .unwrap();
        state
            .complete_species(&id, BTreeMap::from([(terrain.to_string(), score)]), "ref".into())
            .unwrap();
        id
    }

    #[test]
    fn add_root_to_empty_state() {
        let mut state = EvolutionState::new();
        let id = state
            .add_species(&[], set(&["flat"]), None, 123, &mut rng())
            .unwrap();
        let node = &state.nodes[&id];
        assert!(node.parent_ids.is_empty());
        assert_eq!(node.status, SpeciesStatus::Pending);
        assert!(id.starts_with("0-0-"));
        assert_eq!(node.created_at_ms, 123);
    }

    #[test]
    fn add_child_of_two_done_parents() {
        let mut state = EvolutionState::new();
        let mut r = rng();
        let a = add_done(&mut state, "flat", 2.0, &mut r);
        let b = add_done(&mut state, "ice", 3.0, &mut r);
        let c = state
            .add_species(&[a.clone(), b.clone()], set(&["flat", "ice"]), None, 5, &mut r)
            .unwrap();
        assert_eq!(state.nodes[&c].parent_ids, vec![a, b]);
        assert!(c.starts_with("1-2-"), "child id {c}");
        assert!(state.validate_dag().is_empty());
    }

    #[test]
    fn unknown_parent_is_rejected() {
        let mut state = EvolutionState::new();
        let err = state
            .add_species(&["ghost".into()], set(&["flat"]), None, 0, &mut rng())
            .unwrap_err();
        assert_eq!(err, PhyloError::UnknownParent("ghost".into()));
    }

    #[test]
    fn pending_parent_is_rejected() {
        let mut state = EvolutionState::new();
        let mut r = rng();
        let a = state.add_species(&[], set(&["flat"]), None, 0, &mut r).unwrap();
        let err = state
            .add_species(&[a.clone()], set(&["flat"]), None, 0, &mut r)
            .unwrap_err();
        assert_eq!(err, PhyloError::ParentNotDone(a, SpeciesStatus::Pending));
    }

    #[test]
    fn three_parents_and_duplicates_are_rejected() {
        let mut state = EvolutionState::new();
        let mut r = rng();
        let a = add_done(&mut state, "flat", 1.0, &mut r);
        let b = add_done(&mut state, "ice", 1.0, &mut r);
        let c = add_done(&mut state, "mud", 1.0, &mut r);
        assert_eq!(
            state
                .add_species(&[a.clone(), b, c], set(&["flat"]), None, 0, &mut r)
                .unwrap_err(),
            PhyloError::TooManyParents(3)
        );
        assert_eq!(
            state
                .add_species(&[a.clone(), a.clone()], set(&["flat"]), None, 0, &mut r)
                .unwrap_err(),
            PhyloError::DuplicateParent(a)
        );
    }

    #[test]
    fn validate_dag_flags_cycles_and_dangles() {
        // Hand-constructed (as if deserialized) broken state.
        let mk = |id: &str, parents: &[&str]| SpeciesNode {
            id: id.into(),
            parent_ids: parents.iter().map(|p| p.to_string()).collect(),
            terrain_set: set(&["flat"]),
            scores: BTreeMap::new(),
            checkpoint_ref: None,
            created_at_ms: 0,
            status: SpeciesStatus::Done,
        };
        let mut state = EvolutionState::new();
        state.nodes.insert("A".into(), mk("A", &["B"]));
        state.nodes.insert("B".into(), mk("B", &["A"]));
        state.nodes.insert("C".into(), mk("C", &["ghost"]));
        state.nodes.insert("D".into(), mk("D", &["D"]));
        let violations = state.validate_dag();
        assert!(violations
            .iter()
            .any(|v| matches!(v, DagViolation::DanglingParent { node, parent } if node == "C" && parent == "ghost")));
        assert!(violations
            .iter()
            .any(|v| matches!(v, DagViolation::SelfParent { node } if node == "D")));
        assert!(violations
            .iter()
            .any(|v| matches!(v, DagViolation::Cycle { .. })));

        assert!(EvolutionState::new().validate_dag().is_empty());
    }

    #[test]
    fn frontier_takes_best_per_terrain() {
        let mut state = EvolutionState::new();
        assert!(state.frontier_scores().is_empty());
        let mut r = rng();
        let a = add_done(&mut state, "flat", 3.5, &mut r);
        let frontier = state.frontier_scores();
        assert_eq!(frontier["flat"], (3.5, a));
        let b = add_done(&mut state, "flat", 4.0, &mut r);
        let frontier = state.frontier_scores();
        assert_eq!(frontier["flat"], (4.0, b));
    }

    #[test]
    fn select_pairs_best_specialists() {
        let mut state = EvolutionState::new();
        let mut r = rng();
        let a = add_done(&mut state, "flat", 2.0, &mut r);
        let b = add_done(&mut state, "ice", 3.0, &mut r);
        let plan = state.select_reproduction(&SelectionConfig::default()).unwrap();
        let mut expect = vec![a, b];
        expect.sort();
        assert_eq!(plan.parent_ids, expect);
        assert_eq!(plan.target_terrains, set(&["flat", "ice"]));
        assert!(plan.iteration_budget > 0);
    }

    #[test]
    fn select_skips_pairs_with_existing_child() {
        let mut state = EvolutionState::new();
        let mut r = rng();
        let a = add_done(&mut state, "flat", 2.0, &mut r);
        let b = add_done(&mut state, "ice", 3.0, &mut r);
        let child = state
            .add_species(&[a, b], set(&["flat", "ice"]), None, 0, &mut r)
            .unwrap();
        // Child exists (pending): the pair is burned even before completion.
        assert_eq!(state.select_reproduction(&SelectionConfig::default()), None);
        state
            .complete_species(
                &child,
                BTreeMap::from([("flat".to_string(), 4.0), ("ice".to_string(), 4.0)]),
                "ref".into(),
            )
            .unwrap();
        // Now the child is the frontier holder of both terrains: a pair
        // needs two distinct nodes, so still nothing to do.
        assert_eq!(state.select_reproduction(&SelectionConfig::default()), None);
    }

    #[test]
    fn select_needs_two_specialists() {
        let mut state = EvolutionState::new();
        let mut r = rng();
        add_done(&mut state, "flat", 2.0, &mut r);
        assert_eq!(state.select_reproduction(&SelectionConfig::default()), None);
    }

    #[test]
    fn select_prefers_highest_combined_score() {
        let mut state = EvolutionState::new();
        let mut r = rng();
        add_done(&mut state, "flat", 1.0, &mut r);
        let strong_flat = add_done(&mut state, "flat", 5.0, &mut r);
        let ice = add_done(&mut state, "ice", 2.0, &mut r);
        let mud = add_done(&mut state, "mud", 1.5, &mut r);
        let plan = state.select_reproduction(&SelectionConfig::default()).unwrap();
        let mut expect = vec![strong_flat.clone(), ice.clone()];
        expect.sort();
        assert_eq!(plan.parent_ids, expect);

        // Burn that pair; next best is flat+mud.
        state
            .add_species(&[strong_flat.clone(), ice], set(&["flat", "ice"]), None, 0, &mut r)
            .unwrap();
        let plan = state.select_reproduction(&SelectionConfig::default()).unwrap();
        let mut expect = vec![strong_flat, mud];
        expect.sort();
        assert_eq!(plan.parent_ids, expect);
    }
}
