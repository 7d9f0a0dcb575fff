use std::collections::BTreeSet;
use std::io::Read;

use super::IngestError;
use crate::model::{Attributes, Edge, InfrastructureNetwork, Layer, Node, Point2D, Scalar};

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(name: &'static str, input: impl Read) -> Result<Table, IngestError> {
    let wrap = |source| IngestError::Csv { table: name, source };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(wrap)?.iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()
        .map_err(wrap)?;
    Ok(Table { headers, rows })
}

fn column(table: &Table, name: &'static str, column: &'static str) -> Result<usize, IngestError> {
    table
        .headers
        .iter()
        .position(|h| h == column)
        .ok_or(IngestError::MissingColumn { table: name, column })
}

fn check_unique(name: &'static str, ids: &[&str]) -> Result<(), IngestError> {
    let mut seen = BTreeSet::new();
    let dups: BTreeSet<&str> = ids.iter().copied().filter(|id| !seen.insert(*id)).collect();
    if dups.is_empty() {
        Ok(())
    } else {
        Err(IngestError::DuplicateIds {
            table: name,
            ids: dups.into_iter().map(str::to_string).collect(),
        })
    }
}

fn attributes(headers: &[String], row: &[String], reserved: &[usize]) -> Attributes {
    headers
        .iter()
        .zip(row)
        .enumerate()
        .filter(|(i, (_, cell))| !reserved.contains(i) && !cell.is_empty())
        .map(|(_, (h, cell))| (h.clone(), Scalar::from_cell(cell)))
        .collect()
}

fn coordinate(row: &[String], col: usize, line: usize, name: &str) -> Result<f64, IngestError> {
    row[col]
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| IngestError::BadRow {
            table: "nodes",
            row: line,
            message: format!("`{name}` is not a finite number: `{}`", row[col]),
        })
}

/// Load a node table `(id, x, y, ...)` and an edge table
/// `(id, node_a, node_b, ...)` into a fresh network holding one layer.
/// Extra columns become attributes; empty cells are omitted.
pub fn load_tables(
    nodes_csv: impl Read,
    edges_csv: impl Read,
    layer: &Layer,
    epsilon: f64,
) -> Result<InfrastructureNetwork, IngestError> {
    let nodes = read_table("nodes", nodes_csv)?;
    let edges = read_table("edges", edges_csv)?;
    let (nid, nx, ny) = (
        column(&nodes, "nodes", "id")?,
        column(&nodes, "nodes", "x")?,
        column(&nodes, "nodes", "y")?,
    );
    let (eid, ea, eb) = (
        column(&edges, "edges", "id")?,
        column(&edges, "edges", "node_a")?,
        column(&edges, "edges", "node_b")?,
    );
    check_unique("nodes", &nodes.rows.iter().map(|r| r[nid].as_str()).collect::<Vec<_>>())?;
    check_unique("edges", &edges.rows.iter().map(|r| r[eid].as_str()).collect::<Vec<_>>())?;

    let known: BTreeSet<&str> = nodes.rows.iter().map(|r| r[nid].as_str()).collect();
    let dangling: BTreeSet<&str> = edges
        .rows
        .iter()
        .flat_map(|r| [r[ea].as_str(), r[eb].as_str()])
        .filter(|id| !known.contains(id))
        .collect();
    if !dangling.is_empty() {
        return Err(IngestError::DanglingReferences {
            ids: dangling.into_iter().map(str::to_string).collect(),
        });
    }

    let mut net = InfrastructureNetwork::new(epsilon)?;
    net.add_layer(layer.clone())?;
    for (i, row) in nodes.rows.iter().enumerate() {
        // header is line 1
        let line = i + 2;
        let p = Point2D::new(coordinate(row, nx, line, "x")?, coordinate(row, ny, line, "y")?);
        let mut node = Node::new(row[nid].clone(), layer.id.clone(), p);
        node.attributes = attributes(&nodes.headers, row, &[nid, nx, ny]);
        net.insert_node(node)?;
    }
    for row in &edges.rows {
        let mut edge = Edge::new(row[eid].clone(), layer.id.clone(), row[ea].clone(), row[eb].clone());
        edge.attributes = attributes(&edges.headers, row, &[eid, ea, eb]);
        net.insert_edge(edge)?;
    }
    Ok(net)
}
