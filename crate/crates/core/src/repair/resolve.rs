use std::collections::BTreeMap;

use chrono::{DateTime, Utc};

use super::fix::{apply_suggestion, revert_suggestion};
use super::ledger::{FlagLedger, FlagStatus, FlagTarget, Resolution, Rule, Verdict};
use super::RepairError;
use crate::access::{AccessPolicy, Capability, Decision, Role};
use crate::model::{EditBatch, InfrastructureNetwork};

/// Validate a flag. Accepting applies its suggestion (if not applied yet);
/// rejecting reverts it (if applied). Flags sharing the suggestion are
/// resolved together. Returns the ids of all flags resolved.
#[allow(clippy::too_many_arguments)]
pub fn resolve_flag(
    net: &mut InfrastructureNetwork,
    ledger: &mut FlagLedger,
    policy: &AccessPolicy,
    flag_id: &str,
    verdict: Verdict,
    actor: Role,
    at: DateTime<Utc>,
) -> Result<Vec<String>, RepairError> {
    let flag = ledger
        .flag(flag_id)
        .ok_or_else(|| RepairError::UnknownFlag(flag_id.to_string()))?
        .clone();
    if let Decision::Deny(reason) = policy.authorize(actor, Capability::ResolveFlags, net.layer(&flag.layer_id)?) {
        return Err(RepairError::Unauthorized { role: actor, reason });
    }
    if flag.status != FlagStatus::Open {
        return Err(RepairError::Conflict(format!(
            "flag `{flag_id}` is already {}",
            match flag.status {
                FlagStatus::Accepted => "accepted",
                _ => "rejected",
            }
        )));
    }
    let group: Vec<String> = match &flag.suggestion_id {
        Some(sid) => {
            match verdict {
                Verdict::Accepted => apply_suggestion(net, ledger, sid)?,
                Verdict::Rejected => revert_suggestion(net, ledger, sid)?,
            };
            ledger
                .flags_of(sid)
                .into_iter()
                .filter(|f| f.status == FlagStatus::Open)
                .map(|f| f.id.clone())
                .collect()
        }
        None => vec![flag.id.clone()],
    };
    let status = match verdict {
        Verdict::Accepted => FlagStatus::Accepted,
        Verdict::Rejected => FlagStatus::Rejected,
    };
    let revision = net.revision();
    for id in &group {
        if let Some(f) = ledger.flag_mut(id) {
            f.status = status;
            f.resolution = Some(Resolution {
                actor,
                decision: verdict,
                at,
                revision,
            });
        }
    }
    Ok(group)
}

/// Record a hand edit (already applied at `revision`) as an accepted
/// `manual` flag.
pub fn record_manual_edit(
    ledger: &mut FlagLedger,
    layer_id: &str,
    batch: &EditBatch,
    actor: Role,
    at: DateTime<Utc>,
    revision: u64,
) -> Option<String> {
    let (nodes, edges) = batch.touched();
    let target = edges
        .iter()
        .next()
        .map(|e| FlagTarget::Edge(e.clone()))
        .or_else(|| nodes.iter().next().map(|n| FlagTarget::Node(n.clone())))?;
    let related: Vec<String> = nodes.iter().chain(edges.iter()).filter(|id| *id != target.id()).cloned().collect();
    let detail = format!("{} action(s) by {actor}", batch.actions.len());
    let id = ledger.push_flag(Rule::Manual, layer_id, target, related, format!("manual:{revision}"), detail, revision)?;
    let flag = ledger.flag_mut(&id).expect("just pushed");
    flag.status = FlagStatus::Accepted;
    flag.resolution = Some(Resolution {
        actor,
        decision: Verdict::Accepted,
        at,
        revision,
    });
    Some(id)
}

/// Entities that differ between `original` and `current` without being
/// covered by an applied, flagged suggestion. Empty means every automated
/// change is accounted for.
pub fn audit_unflagged(
    original: &InfrastructureNetwork,
    current: &InfrastructureNetwork,
    ledger: &FlagLedger,
) -> Vec<String> {
    let mut covered: BTreeMap<String, usize> = BTreeMap::new();
    for s in &ledger.suggestions {
        let Some(applied) = &s.applied else { continue };
        if ledger.flags_of(&s.id).is_empty() {
            continue;
        }
        for id in applied.after.nodes.keys() {
            *covered.entry(format!("node:{id}")).or_default() += 1;
        }
        for id in applied.after.edges.keys() {
            *covered.entry(format!("edge:{id}")).or_default() += 1;
        }
    }
    let manual = ledger.flags.iter().filter(|f| f.rule == Rule::Manual);
    for f in manual {
        let kind = match f.target {
            FlagTarget::Node(_) => "node",
            FlagTarget::Edge(_) => "edge",
        };
        *covered.entry(format!("{kind}:{}", f.target.id())).or_default() += 1;
    }

    let mut changed = Vec::new();
    let node_ids = original.nodes().map(|n| &n.id).chain(current.nodes().map(|n| &n.id));
    for id in node_ids.collect::<std::collections::BTreeSet<_>>() {
        if original.node(id) != current.node(id) {
            changed.push(format!("node:{id}"));
        }
    }
    let edge_ids = original.edges().map(|e| &e.id).chain(current.edges().map(|e| &e.id));
    for id in edge_ids.collect::<std::collections::BTreeSet<_>>() {
        if original.edge(id) != current.edge(id) {
            changed.push(format!("edge:{id}"));
        }
    }
    changed.retain(|k| !covered.contains_key(k));
    changed
}
