use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::access::Role;
use crate::model::{Edge, InfrastructureNetwork, Node, Point2D};

pub const LEDGER_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    DuplicateNodes,
    SymbolCircle,
    DanglingEnd,
    ValveDegree,
    OpenBoundary,
    InferredEdge,
    Manual,
}

impl Rule {
    pub const ALL: [Rule; 7] = [
        Rule::DuplicateNodes,
        Rule::SymbolCircle,
        Rule::DanglingEnd,
        Rule::ValveDegree,
        Rule::OpenBoundary,
        Rule::InferredEdge,
        Rule::Manual,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Rule::DuplicateNodes => "duplicate_nodes",
            Rule::SymbolCircle => "symbol_circle",
            Rule::DanglingEnd => "dangling_end",
            Rule::ValveDegree => "valve_degree",
            Rule::OpenBoundary => "open_boundary",
            Rule::InferredEdge => "inferred_edge",
            Rule::Manual => "manual",
        }
    }
}

impl std::str::FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rule::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown rule `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagStatus {
    Open,
    Accepted,
    Rejected,
}

impl std::str::FromStr for FlagStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(FlagStatus::Open),
            "accepted" => Ok(FlagStatus::Accepted),
            "rejected" => Ok(FlagStatus::Rejected),
            _ => Err(format!("unknown flag status `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum FlagTarget {
    Node(String),
    Edge(String),
}

impl FlagTarget {
    pub fn id(&self) -> &str {
        match self {
            FlagTarget::Node(id) | FlagTarget::Edge(id) => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub actor: Role,
    pub decision: Verdict,
    pub at: DateTime<Utc>,
    /// Network revision after the resolution took effect.
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub id: String,
    pub layer_id: String,
    pub target: FlagTarget,
    /// Other entities involved (the partner of a duplicate pair, the
    /// nodes of a symbol cycle).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub related: Vec<String>,
    pub rule: Rule,
    pub status: FlagStatus,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion_id: Option<String>,
    pub created_rev: u64,
    /// Identity of the finding; a key seen once is never flagged again.
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Resolution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum SuggestionAction {
    /// Merge into the first (smallest) id.
    MergeNodes { nodes: Vec<String> },
    ReplaceSymbol {
        nodes: Vec<String>,
        edges: Vec<String>,
        centroid: Point2D,
        radius: f64,
        /// Off-cycle nodes joined to the cycle by an edge.
        attachments: Vec<String>,
        /// Loose pipe ends close to the symbol that get connected to the
        /// new center node.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        nearby_ends: Vec<String>,
    },
    AddEdge {
        from: String,
        to: String,
        geometry: Vec<Point2D>,
    },
    ConnectBoundary {
        from: String,
        to: String,
        geometry: Vec<Point2D>,
    },
}

impl SuggestionAction {
    pub fn name(&self) -> &'static str {
        match self {
            SuggestionAction::MergeNodes { .. } => "merge_nodes",
            SuggestionAction::ReplaceSymbol { .. } => "replace_symbol",
            SuggestionAction::AddEdge { .. } => "add_edge",
            SuggestionAction::ConnectBoundary { .. } => "connect_boundary",
        }
    }
}

/// Exact before/after state of every entity an applied suggestion touched;
/// `None` means absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityState {
    pub nodes: BTreeMap<String, Option<Node>>,
    pub edges: BTreeMap<String, Option<Edge>>,
}

impl EntityState {
    pub fn capture<'a>(
        net: &InfrastructureNetwork,
        nodes: impl IntoIterator<Item = &'a String>,
        edges: impl IntoIterator<Item = &'a String>,
    ) -> Self {
        EntityState {
            nodes: nodes
                .into_iter()
                .map(|id| (id.clone(), net.node(id).cloned()))
                .collect(),
            edges: edges
                .into_iter()
                .map(|id| (id.clone(), net.edge(id).cloned()))
                .collect(),
        }
    }

    /// True when the network still holds exactly this state.
    pub fn matches(&self, net: &InfrastructureNetwork) -> bool {
        self.nodes.iter().all(|(id, n)| net.node(id) == n.as_ref())
            && self.edges.iter().all(|(id, e)| net.edge(id) == e.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedEdit {
    pub revision: u64,
    pub before: EntityState,
    pub after: EntityState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub id: String,
    pub rule: Rule,
    pub layer_id: String,
    #[serde(flatten)]
    pub action: SuggestionAction,
    /// Layers consulted when producing the suggestion.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context_layers: Vec<String>,
    pub created_rev: u64,
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applied: Option<AppliedEdit>,
}

/// Flags and suggestions of one dataset, persisted as JSON next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagLedger {
    pub ledger_version: u32,
    pub flags: Vec<Flag>,
    pub suggestions: Vec<Suggestion>,
    #[serde(default)]
    next_flag: u64,
    #[serde(default)]
    next_suggestion: u64,
}

impl Default for FlagLedger {
    fn default() -> Self {
        Self::new()
    }
}

impl FlagLedger {
    pub fn new() -> Self {
        Self {
            ledger_version: LEDGER_VERSION,
            flags: Vec::new(),
            suggestions: Vec::new(),
            next_flag: 0,
            next_suggestion: 0,
        }
    }

    pub fn flag(&self, id: &str) -> Option<&Flag> {
        self.flags.iter().find(|f| f.id == id)
    }

    pub(crate) fn flag_mut(&mut self, id: &str) -> Option<&mut Flag> {
        self.flags.iter_mut().find(|f| f.id == id)
    }

    pub fn suggestion(&self, id: &str) -> Option<&Suggestion> {
        self.suggestions.iter().find(|s| s.id == id)
    }

    pub(crate) fn suggestion_mut(&mut self, id: &str) -> Option<&mut Suggestion> {
        self.suggestions.iter_mut().find(|s| s.id == id)
    }

    pub fn has_flag_key(&self, rule: Rule, key: &str) -> bool {
        self.flags.iter().any(|f| f.rule == rule && f.key == key)
    }

    pub fn has_suggestion_key(&self, key: &str) -> bool {
        self.suggestions.iter().any(|s| s.key == key)
    }

    /// Flags pointing at a suggestion.
    pub fn flags_of(&self, suggestion_id: &str) -> Vec<&Flag> {
        self.flags
            .iter()
            .filter(|f| f.suggestion_id.as_deref() == Some(suggestion_id))
            .collect()
    }

    pub fn open_flags(&self, rule: Rule) -> impl Iterator<Item = &Flag> {
        self.flags
            .iter()
            .filter(move |f| f.rule == rule && f.status == FlagStatus::Open)
    }

    pub fn count(&self, rule: Rule) -> usize {
        self.flags.iter().filter(|f| f.rule == rule).count()
    }

    /// Record a new flag unless its key was already seen for this rule.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn push_flag(
        &mut self,
        rule: Rule,
        layer_id: &str,
        target: FlagTarget,
        related: Vec<String>,
        key: String,
        detail: String,
        revision: u64,
    ) -> Option<String> {
        if self.has_flag_key(rule, &key) {
            return None;
        }
        self.next_flag += 1;
        let id = format!("f{}", self.next_flag);
        self.flags.push(Flag {
            id: id.clone(),
            layer_id: layer_id.to_string(),
            target,
            related,
            rule,
            status: FlagStatus::Open,
            detail,
            suggestion_id: None,
            created_rev: revision,
            key,
            resolution: None,
        });
        Some(id)
    }

    pub(crate) fn push_suggestion(
        &mut self,
        rule: Rule,
        layer_id: &str,
        action: SuggestionAction,
        context_layers: Vec<String>,
        key: String,
        revision: u64,
    ) -> String {
        self.next_suggestion += 1;
        let id = format!("s{}", self.next_suggestion);
        self.suggestions.push(Suggestion {
            id: id.clone(),
            rule,
            layer_id: layer_id.to_string(),
            action,
            context_layers,
            created_rev: revision,
            key,
            applied: None,
        });
        id
    }

    pub(crate) fn link(&mut self, flag_id: &str, suggestion_id: &str) {
        if let Some(f) = self.flag_mut(flag_id) {
            f.suggestion_id = Some(suggestion_id.to_string());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_not_reflagged() {
        let mut ledger = FlagLedger::new();
        let t = FlagTarget::Node("a".into());
        let first = ledger.push_flag(Rule::DanglingEnd, "p", t.clone(), vec![], "k".into(), String::new(), 0);
        let again = ledger.push_flag(Rule::DanglingEnd, "p", t, vec![], "k".into(), String::new(), 3);
        assert_eq!(first.as_deref(), Some("f1"));
        assert!(again.is_none());
    }

    #[test]
    fn ledger_round_trips() {
        let mut ledger = FlagLedger::new();
        let f = ledger
            .push_flag(Rule::DuplicateNodes, "p", FlagTarget::Node("a".into()), vec!["b".into()], "dup:a|b".into(), "x".into(), 1)
            .unwrap();
        let s = ledger.push_suggestion(
            Rule::DuplicateNodes,
            "p",
            SuggestionAction::MergeNodes { nodes: vec!["a".into(), "b".into()] },
            vec![],
            "merge:a|b".into(),
            1,
        );
        ledger.link(&f, &s);
        let text = serde_json::to_string(&ledger).unwrap();
        assert!(text.contains("\"ledger_version\":1"));
        assert!(text.contains("\"action\":\"merge_nodes\""));
        let back: FlagLedger = serde_json::from_str(&text).unwrap();
        assert_eq!(back, ledger);
    }
}
