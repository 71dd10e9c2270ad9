use std::collections::HashMap;
use std::path::Path;

use crate::error::{read_text, Error, Result};
use crate::graph::{DistanceGraph, Edge};

/// Parse a `from,to,cost` edge list. Node ids are mapped through `ids`
/// (the dataset's node id list) when given, and otherwise used directly as
/// indices into `0..nodes`.
pub fn parse_distances(text: &str, path: &Path, nodes: usize, ids: Option<&[i64]>) -> Result<DistanceGraph> {
    let err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let index: Option<HashMap<i64, usize>> =
        ids.map(|ids| ids.iter().enumerate().map(|(i, &id)| (id, i)).collect());
    let lookup = |raw: &str, line: u64| -> Result<usize> {
        let id: i64 = raw
            .trim()
            .parse()
            .map_err(|_| err(line, format!("node id `{raw}` is not an integer")))?;
        let idx = match &index {
            Some(map) => map.get(&id).copied(),
            None => usize::try_from(id).ok().filter(|&i| i < nodes),
        };
        idx.ok_or_else(|| err(line, format!("unknown node id {id}")))
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| err(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header != ["from", "to", "cost"] {
        return Err(err(1, format!("expected header `from,to,cost`, found `{}`", header.join(","))));
    }
    let mut edges = Vec::new();
    let mut seen = HashMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let from = lookup(&rec[0], line)?;
        let to = lookup(&rec[1], line)?;
        let distance: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| err(line, format!("cost `{}` is not a number", &rec[2])))?;
        if !distance.is_finite() || distance < 0.0 {
            return Err(err(line, format!("cost {distance} must be finite and non-negative")));
        }
        if let Some(prev) = seen.insert((from, to), line) {
            return Err(err(line, format!("duplicate edge {}->{} (first on line {prev})", &rec[0], &rec[1])));
        }
        edges.push(Edge { from, to, distance });
    }
    DistanceGraph::new(nodes, edges).map_err(|e| err(0, e.to_string()))
}

pub fn load_distances(path: &Path, nodes: usize, ids: Option<&[i64]>) -> Result<DistanceGraph> {
    parse_distances(&read_text(path)?, path, nodes, ids)
}

pub fn distances_to_csv(graph: &DistanceGraph, ids: Option<&[i64]>) -> String {
    let id = |i: usize| ids.map_or(i as i64, |ids| ids[i]);
    let mut s = String::from("from,to,cost\n");
    for e in graph.edges() {
        s.push_str(&format!("{},{},{}\n", id(e.from), id(e.to), e.distance));
    }
    s
}
