use std::collections::{BTreeMap, HashMap};

use super::{BBox, GeometryError};
use crate::model::{InfrastructureNetwork, Point2D};

// entries covering more cells than this are kept in a side list
const MAX_CELLS_PER_ENTRY: i64 = 4096;

/// Uniform grid over entry bounding boxes. Cell size defaults to twice the
/// median bbox diagonal; point-only data falls back to the mean spacing.
#[derive(Debug, Clone)]
pub struct GridIndex<K> {
    cell: f64,
    entries: Vec<(K, BBox)>,
    cells: HashMap<(i64, i64), Vec<usize>>,
    oversized: Vec<usize>,
    bounds: BBox,
}

impl<K: Clone + Ord> GridIndex<K> {
    pub fn build(entries: Vec<(K, BBox)>) -> Self {
        let cell = default_cell_size(&entries);
        Self::with_cell_size(entries, cell)
    }

    pub fn with_cell_size(entries: Vec<(K, BBox)>, cell: f64) -> Self {
        let cell = if cell.is_finite() && cell > 0.0 { cell } else { 1.0 };
        let mut index = Self {
            cell,
            entries: Vec::with_capacity(entries.len()),
            cells: HashMap::new(),
            oversized: Vec::new(),
            bounds: BBox::EMPTY,
        };
        for (key, bbox) in entries {
            index.insert(key, bbox);
        }
        index
    }

    fn insert(&mut self, key: K, bbox: BBox) {
        let slot = self.entries.len();
        self.bounds = self.bounds.union(bbox);
        let (x0, y0) = self.cell_of(bbox.min_x, bbox.min_y);
        let (x1, y1) = self.cell_of(bbox.max_x, bbox.max_y);
        if (x1 - x0 + 1).saturating_mul(y1 - y0 + 1) > MAX_CELLS_PER_ENTRY {
            self.oversized.push(slot);
        } else {
            for cx in x0..=x1 {
                for cy in y0..=y1 {
                    self.cells.entry((cx, cy)).or_default().push(slot);
                }
            }
        }
        self.entries.push((key, bbox));
    }

    fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keys whose bbox intersects `query`, sorted.
    pub fn query_bbox(&self, query: &BBox) -> Vec<&K> {
        let mut slots: Vec<usize> = self.oversized.clone();
        if !query.is_empty() && query.intersects(&self.bounds) {
            let clipped = BBox::new(
                query.min_x.max(self.bounds.min_x),
                query.min_y.max(self.bounds.min_y),
                query.max_x.min(self.bounds.max_x),
                query.max_y.min(self.bounds.max_y),
            );
            let (x0, y0) = self.cell_of(clipped.min_x, clipped.min_y);
            let (x1, y1) = self.cell_of(clipped.max_x, clipped.max_y);
            for cx in x0..=x1 {
                for cy in y0..=y1 {
                    if let Some(bucket) = self.cells.get(&(cx, cy)) {
                        slots.extend(bucket);
                    }
                }
            }
        }
        slots.sort_unstable();
        slots.dedup();
        let mut keys: Vec<&K> = slots
            .into_iter()
            .filter(|&s| self.entries[s].1.intersects(query))
            .map(|s| &self.entries[s].0)
            .collect();
        keys.sort();
        keys
    }

    /// Entry minimizing the bbox distance to `p` among those accepted by
    /// `keep`, ties broken by the smaller key. `None` when nothing lies
    /// within `max_radius`.
    pub fn nearest<F>(&self, p: Point2D, max_radius: f64, mut keep: F) -> Option<(&K, f64)>
    where
        F: FnMut(&K) -> bool,
    {
        let entries = &self.entries;
        let mut best: Option<(f64, usize)> = None;
        let mut consider = |slot: usize, best: &mut Option<(f64, usize)>| {
            let (key, bbox) = &entries[slot];
            let d = bbox.distance_to(p);
            if d > max_radius {
                return;
            }
            let better = match *best {
                None => true,
                Some((bd, bs)) => d < bd || (d == bd && *key < entries[bs].0),
            };
            if better && keep(key) {
                *best = Some((d, slot));
            }
        };
        for &slot in &self.oversized {
            consider(slot, &mut best);
        }
        if self.bounds.is_empty() {
            return best.map(|(d, s)| (&self.entries[s].0, d));
        }
        let (qx, qy) = self.cell_of(p.x, p.y);
        let (bx0, by0) = self.cell_of(self.bounds.min_x, self.bounds.min_y);
        let (bx1, by1) = self.cell_of(self.bounds.max_x, self.bounds.max_y);
        // rings beyond this cannot contain any cell of the data extent
        let max_ring = [qx - bx0, bx1 - qx, qy - by0, by1 - qy]
            .into_iter()
            .map(i64::abs)
            .max()
            .unwrap_or(0);
        let mut ring: i64 = 0;
        loop {
            for (cx, cy) in ring_cells(qx, qy, ring) {
                if let Some(bucket) = self.cells.get(&(cx, cy)) {
                    for &slot in bucket {
                        consider(slot, &mut best);
                    }
                }
            }
            // anything in ring k+1 is at least k cells away
            let reach = ring as f64 * self.cell;
            if best.is_some_and(|(d, _)| d <= reach) || reach > max_radius || ring >= max_ring {
                break;
            }
            ring += 1;
        }
        best.map(|(d, s)| (&self.entries[s].0, d))
    }
}

fn ring_cells(cx: i64, cy: i64, ring: i64) -> Vec<(i64, i64)> {
    if ring == 0 {
        return vec![(cx, cy)];
    }
    let mut out = Vec::with_capacity((8 * ring) as usize);
    for dx in -ring..=ring {
        out.push((cx + dx, cy - ring));
        out.push((cx + dx, cy + ring));
    }
    for dy in (-ring + 1)..ring {
        out.push((cx - ring, cy + dy));
        out.push((cx + ring, cy + dy));
    }
    out
}

fn default_cell_size<K>(entries: &[(K, BBox)]) -> f64 {
    if entries.is_empty() {
        return 1.0;
    }
    let mut diagonals: Vec<f64> = entries.iter().map(|(_, b)| b.diagonal()).collect();
    diagonals.sort_by(f64::total_cmp);
    let median = diagonals[diagonals.len() / 2];
    if median > 0.0 {
        return 2.0 * median;
    }
    let bounds = entries.iter().fold(BBox::EMPTY, |acc, (_, b)| acc.union(*b));
    let spacing = (bounds.area() / entries.len() as f64).sqrt();
    if spacing > 0.0 {
        spacing
    } else {
        bounds.width().max(bounds.height()).max(1.0)
    }
}

/// Per-layer grid of node positions, tied to the revision it was built at.
#[derive(Debug, Clone)]
pub struct NodeIndex {
    revision: u64,
    layers: BTreeMap<String, GridIndex<String>>,
}

impl NodeIndex {
    pub fn build(net: &InfrastructureNetwork) -> Self {
        let mut per_layer: BTreeMap<String, Vec<(String, BBox)>> = net
            .layers()
            .map(|l| (l.id.clone(), Vec::new()))
            .collect();
        for node in net.nodes() {
            per_layer
                .entry(node.layer_id.clone())
                .or_default()
                .push((node.id.clone(), BBox::of_point(node.position)));
        }
        Self {
            revision: net.revision(),
            layers: per_layer
                .into_iter()
                .map(|(id, entries)| (id, GridIndex::build(entries)))
                .collect(),
        }
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn ensure_current(&self, net: &InfrastructureNetwork) -> Result<(), GeometryError> {
        if self.revision != net.revision() {
            return Err(GeometryError::StaleIndex {
                index: self.revision,
                network: net.revision(),
            });
        }
        Ok(())
    }

    pub fn layer(&self, layer_id: &str) -> Result<&GridIndex<String>, GeometryError> {
        self.layers
            .get(layer_id)
            .ok_or_else(|| GeometryError::UnknownLayer(layer_id.to_string()))
    }

    /// Node ids of a layer within `radius` of `p`, sorted by (distance, id).
    pub fn within_radius(
        &self,
        net: &InfrastructureNetwork,
        layer_id: &str,
        p: Point2D,
        radius: f64,
    ) -> Result<Vec<(String, f64)>, GeometryError> {
        let grid = self.layer(layer_id)?;
        let mut hits: Vec<(String, f64)> = grid
            .query_bbox(&BBox::of_point(p).expanded(radius))
            .into_iter()
            .filter_map(|id| net.node(id).map(|n| (id.clone(), n.position.distance(&p))))
            .filter(|(_, d)| *d <= radius)
            .collect();
        hits.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        Ok(hits)
    }
}

/// Nearest node of `layer_id` to `p` within `max_radius`; ties go to the
/// smaller id.
pub fn nearest_node(
    index: &NodeIndex,
    p: Point2D,
    layer_id: &str,
    max_radius: f64,
) -> Result<Option<(String, f64)>, GeometryError> {
    if max_radius.is_nan() || max_radius < 0.0 {
        return Err(GeometryError::NegativeRadius(max_radius));
    }
    Ok(index
        .layer(layer_id)?
        .nearest(p, max_radius, |_| true)
        .map(|(id, d)| (id.clone(), d)))
}
