use std::collections::{BTreeMap, BTreeSet};

use super::ledger::{AppliedEdit, EntityState, FlagLedger, SuggestionAction};
use super::RepairError;
use crate::model::{
    Attributes, Edge, EditAction, EditBatch, IdAllocator, InfrastructureNetwork, Node, Point2D,
    Scalar,
};

fn stale(what: impl Into<String>) -> RepairError {
    RepairError::Conflict(format!("suggestion is stale: {}", what.into()))
}

fn repoint(edge: &Edge, from: &BTreeSet<String>, to: &str, pos: Point2D) -> (String, String, Option<Vec<Point2D>>) {
    let a = if from.contains(&edge.endpoint_a) { to.to_string() } else { edge.endpoint_a.clone() };
    let b = if from.contains(&edge.endpoint_b) { to.to_string() } else { edge.endpoint_b.clone() };
    let polyline = (!edge.polyline.is_empty()).then(|| {
        let mut line = edge.polyline.clone();
        let n = line.len();
        if from.contains(&edge.endpoint_a) {
            line[0] = pos;
        }
        if from.contains(&edge.endpoint_b) {
            line[n - 1] = pos;
        }
        line
    });
    (a, b, polyline)
}

/// Re-point every edge incident to `absorbed` onto `target`, dropping
/// resulting self-loops and collapsing re-pointed parallels. Edges listed
/// in `skip` are left alone (the caller removes them).
fn reattach(
    net: &InfrastructureNetwork,
    batch: &mut EditBatch,
    absorbed: &BTreeSet<String>,
    target: &str,
    target_pos: Point2D,
    skip: &BTreeSet<String>,
    notes: &mut Vec<String>,
) {
    let mut moved: BTreeMap<String, (String, String, Option<Vec<Point2D>>)> = BTreeMap::new();
    for n in absorbed {
        for e in net.incident_edges(n) {
            if !skip.contains(&e.id) && !moved.contains_key(&e.id) {
                moved.insert(e.id.clone(), repoint(e, absorbed, target, target_pos));
            }
        }
    }
    // edges already at the target (not re-pointed), keyed by far end
    let mut kept: BTreeMap<String, String> = BTreeMap::new();
    for e in net.incident_edges(target) {
        if moved.contains_key(&e.id) || skip.contains(&e.id) {
            continue;
        }
        if let Some(other) = e.other_end(target) {
            kept.entry(other.to_string()).or_insert_with(|| e.id.clone());
        }
    }
    let mut removals = Vec::new();
    for (id, (a, b, polyline)) in moved {
        if a == b {
            notes.push(format!("edge `{id}` became a self-loop and was dropped"));
            removals.push(id);
            continue;
        }
        let far = if a == target { b.clone() } else { a.clone() };
        if a == target || b == target {
            if let Some(keeper) = kept.get(&far) {
                notes.push(format!("edge `{id}` duplicated `{keeper}` and was dropped"));
                removals.push(id);
                continue;
            }
            kept.insert(far, id.clone());
        }
        batch.push(EditAction::ModifyEdge {
            id,
            endpoints: Some((a, b)),
            polyline,
            set_attributes: Attributes::new(),
            unset_attributes: Vec::new(),
            add_flags: Vec::new(),
        });
    }
    for id in removals {
        batch.push(EditAction::RemoveEdge { id });
    }
}

/// Edit batch merging co-located nodes into the smallest id. Returns the
/// batch and notes on attribute conflicts and collapsed edges.
pub fn merge_duplicate_nodes(
    net: &InfrastructureNetwork,
    nodes: &[String],
    flag_ids: &[String],
) -> Result<(EditBatch, Vec<String>), RepairError> {
    let mut sorted: Vec<String> = nodes.to_vec();
    sorted.sort();
    sorted.dedup();
    let Some((survivor_id, rest)) = sorted.split_first() else {
        return Err(RepairError::InvalidArgument("merge needs at least one node".into()));
    };
    let survivor = net.node(survivor_id).ok_or_else(|| stale(format!("node `{survivor_id}` is gone")))?;
    let mut notes = Vec::new();
    let mut set_attributes = Attributes::new();
    let absorbed: BTreeSet<String> = rest.iter().cloned().collect();
    for id in &absorbed {
        let node = net.node(id).ok_or_else(|| stale(format!("node `{id}` is gone")))?;
        for (k, v) in &node.attributes {
            let kept = survivor.attributes.get(k).or_else(|| set_attributes.get(k));
            match kept {
                None => {
                    set_attributes.insert(k.clone(), v.clone());
                }
                Some(kv) if kv != v => notes.push(format!(
                    "attribute `{k}`: kept {kv} from `{survivor_id}`, dropped {v} from `{id}`"
                )),
                Some(_) => {}
            }
        }
    }
    let mut batch = EditBatch::new();
    reattach(net, &mut batch, &absorbed, survivor_id, survivor.position, &BTreeSet::new(), &mut notes);
    for id in &absorbed {
        batch.push(EditAction::RemoveNode { id: id.clone() });
    }
    batch.push(EditAction::ModifyNode {
        id: survivor_id.clone(),
        position: None,
        set_attributes,
        unset_attributes: Vec::new(),
        add_flags: flag_ids.to_vec(),
    });
    Ok((batch, notes))
}

/// Edit batch replacing a symbol cycle with one node (`Is_manhole = 1`) at
/// its centroid; attached edges move to the new node.
pub fn replace_symbol(
    net: &InfrastructureNetwork,
    action: &SuggestionAction,
    layer_id: &str,
    flag_ids: &[String],
    alloc: &mut IdAllocator,
) -> Result<(EditBatch, Vec<String>), RepairError> {
    let SuggestionAction::ReplaceSymbol {
        nodes,
        edges,
        centroid,
        nearby_ends,
        ..
    } = action
    else {
        return Err(RepairError::InvalidArgument("not a replace_symbol suggestion".into()));
    };
    let cycle: BTreeSet<String> = nodes.iter().cloned().collect();
    for id in nodes {
        if net.node(id).is_none() {
            return Err(stale(format!("cycle node `{id}` is gone")));
        }
    }
    for id in edges {
        match net.edge(id) {
            Some(e) if cycle.contains(&e.endpoint_a) && cycle.contains(&e.endpoint_b) => {}
            _ => return Err(stale(format!("cycle edge `{id}` changed"))),
        }
    }
    let center_id = alloc.node();
    let mut center = Node::new(center_id.clone(), layer_id, *centroid);
    center.attributes.insert("Is_manhole".into(), Scalar::Int(1));
    center.flag_ids = flag_ids.to_vec();

    let mut notes = Vec::new();
    let mut batch = EditBatch::new();
    batch.push(EditAction::AddNode { node: center });
    // chords between cycle nodes disappear with the cycle
    let mut inner: BTreeSet<String> = edges.iter().cloned().collect();
    for n in nodes {
        for e in net.incident_edges(n) {
            if cycle.contains(&e.endpoint_a) && cycle.contains(&e.endpoint_b) {
                inner.insert(e.id.clone());
            }
        }
    }
    let pre = batch.actions.len();
    reattach(net, &mut batch, &cycle, &center_id, *centroid, &inner, &mut notes);
    let reattached = batch.actions.len() - pre;
    for id in &inner {
        batch.push(EditAction::RemoveEdge { id: id.clone() });
    }
    for id in nodes {
        batch.push(EditAction::RemoveNode { id: id.clone() });
    }
    for end in nearby_ends {
        let Some(node) = net.node(end) else { continue };
        if net.node_degree(end).unwrap_or(0) > 1 {
            continue;
        }
        let mut edge = Edge::new(alloc.edge(), layer_id, center_id.clone(), end.clone());
        edge.flag_ids = flag_ids.to_vec();
        notes.push(format!("loose end `{}` connected to `{center_id}`", node.id));
        batch.push(EditAction::AddEdge { edge });
    }
    notes.push(format!("{reattached} attachment edge(s) moved to `{center_id}`"));
    Ok((batch, notes))
}

fn add_edge_batch(
    net: &InfrastructureNetwork,
    layer_id: &str,
    from: &str,
    to: &str,
    flag_ids: &[String],
    alloc: &mut IdAllocator,
) -> Result<EditBatch, RepairError> {
    for id in [from, to] {
        if net.node(id).is_none() {
            return Err(stale(format!("node `{id}` is gone")));
        }
    }
    let mut edge = Edge::new(alloc.edge(), layer_id, from, to);
    edge.flag_ids = flag_ids.to_vec();
    let mut batch = EditBatch::new();
    batch.push(EditAction::AddEdge { edge });
    Ok(batch)
}

/// Apply a suggestion's edit through the single edit path and remember the
/// exact before/after state so it can be reverted. Already-applied
/// suggestions are left as they are.
pub fn apply_suggestion(
    net: &mut InfrastructureNetwork,
    ledger: &mut FlagLedger,
    suggestion_id: &str,
) -> Result<bool, RepairError> {
    let suggestion = ledger
        .suggestion(suggestion_id)
        .ok_or_else(|| RepairError::UnknownSuggestion(suggestion_id.to_string()))?
        .clone();
    if suggestion.applied.is_some() {
        return Ok(false);
    }
    let flag_ids: Vec<String> = ledger.flags_of(suggestion_id).iter().map(|f| f.id.clone()).collect();
    let mut alloc = net.allocator();
    let layer = suggestion.layer_id.as_str();
    let (batch, notes) = match &suggestion.action {
        SuggestionAction::MergeNodes { nodes } => merge_duplicate_nodes(net, nodes, &flag_ids)?,
        action @ SuggestionAction::ReplaceSymbol { .. } => {
            replace_symbol(net, action, layer, &flag_ids, &mut alloc)?
        }
        SuggestionAction::AddEdge { from, to, .. } | SuggestionAction::ConnectBoundary { from, to, .. } => {
            (add_edge_batch(net, layer, from, to, &flag_ids, &mut alloc)?, Vec::new())
        }
    };
    let (nodes, edges) = batch.touched();
    let before = EntityState::capture(net, &nodes, &edges);
    let revision = net.apply_edit(&batch)?;
    let after = EntityState::capture(net, &nodes, &edges);
    if let Some(s) = ledger.suggestion_mut(suggestion_id) {
        s.applied = Some(AppliedEdit {
            revision,
            before,
            after,
        });
    }
    if !notes.is_empty() {
        let extra = notes.join("; ");
        for id in &flag_ids {
            if let Some(f) = ledger.flag_mut(id) {
                f.detail = format!("{}; {extra}", f.detail);
            }
        }
    }
    Ok(true)
}

/// Undo an applied suggestion, restoring the exact prior entities. Fails
/// with a conflict when later edits changed any of them.
pub fn revert_suggestion(
    net: &mut InfrastructureNetwork,
    ledger: &mut FlagLedger,
    suggestion_id: &str,
) -> Result<bool, RepairError> {
    let suggestion = ledger
        .suggestion(suggestion_id)
        .ok_or_else(|| RepairError::UnknownSuggestion(suggestion_id.to_string()))?;
    let Some(applied) = suggestion.applied.clone() else {
        return Ok(false);
    };
    if !applied.after.matches(net) {
        return Err(RepairError::Conflict(format!(
            "entities changed by suggestion `{suggestion_id}` were edited later"
        )));
    }
    let mut batch = EditBatch::new();
    for (id, e) in &applied.after.edges {
        if e.is_some() {
            batch.push(EditAction::RemoveEdge { id: id.clone() });
        }
    }
    for (id, n) in &applied.after.nodes {
        if n.is_some() {
            batch.push(EditAction::RemoveNode { id: id.clone() });
        }
    }
    for node in applied.before.nodes.values().flatten() {
        batch.push(EditAction::AddNode { node: node.clone() });
    }
    for edge in applied.before.edges.values().flatten() {
        batch.push(EditAction::AddEdge { edge: edge.clone() });
    }
    net.apply_edit(&batch)?;
    if let Some(s) = ledger.suggestion_mut(suggestion_id) {
        s.applied = None;
    }
    Ok(true)
}
