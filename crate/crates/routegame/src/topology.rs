//! Interdomain graph: operator nodes with economic parameters, undirected
//! delay-weighted links, and one destination that exports transit capacity.
//!
//! The file format is line-oriented:
//!
//! ```text
//! # comment
//! node <id> cap=<int> margin=<num> demand=<int> value=<num>
//! dest <id> export=<int> price=<num>
//! edge <id> <id> delay=<num>
//! ```
//!
//! Every node, including the destination, is declared with a `node` line;
//! the single `dest` line marks one of them as the exporter.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::Path;

use thiserror::Error;

/// Identifier of a node. Restricted to `[A-Za-z0-9_.-]+` so ids can be
/// embedded in file names and CSV cells without quoting.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn is_valid(id: &str) -> bool {
        !id.is_empty()
            && id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(id: &str) -> Self {
        NodeId::new(id)
    }
}

/// Economic parameters of an operator node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeParams {
    /// Upper bound on any capacity interval the node may request.
    pub total_capacity: u32,
    /// Per-unit markup added when reselling acquired capacity.
    pub margin: f64,
    /// Units of the node's own traffic toward the destination.
    pub own_demand: u32,
    /// Money earned per unit of own demand actually delivered.
    pub demand_value: f64,
}

/// Export parameters of the destination node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DestParams {
    /// Capacity the destination puts on the market each step.
    pub export_capacity: u32,
    /// Per-unit price the destination charges its direct neighbors.
    pub base_price: f64,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown destination id {0}")]
    UnknownDestination(NodeId),
    #[error("no destination declared")]
    MissingDestination,
}

fn parse_err(line: usize, message: impl Into<String>) -> TopologyError {
    TopologyError::Parse {
        line,
        message: message.into(),
    }
}

/// The static market graph. Immutable once parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    params: BTreeMap<NodeId, NodeParams>,
    adjacency: BTreeMap<NodeId, BTreeMap<NodeId, f64>>,
    destination: NodeId,
    dest_params: DestParams,
}

impl Topology {
    /// Parses the line-oriented topology format. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let mut params: BTreeMap<NodeId, NodeParams> = BTreeMap::new();
        let mut edges: Vec<(usize, NodeId, NodeId, f64)> = Vec::new();
        let mut dest: Option<(usize, NodeId, DestParams)> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = body.split_whitespace().collect();
            if tokens.is_empty() {
                continue;
            }
            match tokens[0] {
                "node" => {
                    let (id, fields) = split_decl(&tokens, line)?;
                    let node = parse_id(id, line)?;
                    let p = NodeParams {
                        total_capacity: field(&fields, "cap", line)?,
                        margin: nonneg(field(&fields, "margin", line)?, "margin", line)?,
                        own_demand: field(&fields, "demand", line)?,
                        demand_value: nonneg(field(&fields, "value", line)?, "value", line)?,
                    };
                    if p.total_capacity == 0 {
                        return Err(parse_err(line, format!("non-positive capacity for {node}")));
                    }
                    if params.insert(node.clone(), p).is_some() {
                        return Err(parse_err(line, format!("duplicate node id {node}")));
                    }
                }
                "dest" => {
                    let (id, fields) = split_decl(&tokens, line)?;
                    let node = parse_id(id, line)?;
                    let d = DestParams {
                        export_capacity: field(&fields, "export", line)?,
                        base_price: nonneg(field(&fields, "price", line)?, "price", line)?,
                    };
                    if d.export_capacity == 0 {
                        return Err(parse_err(line, "non-positive export capacity"));
                    }
                    if dest.is_some() {
                        return Err(parse_err(line, "duplicate destination declaration"));
                    }
                    dest = Some((line, node, d));
                }
                "edge" => {
                    if tokens.len() != 4 {
                        return Err(parse_err(line, "edge expects two node ids and delay=<num>"));
                    }
                    let a = parse_id(tokens[1], line)?;
                    let b = parse_id(tokens[2], line)?;
                    let fields = parse_fields(&tokens[3..], line)?;
                    let delay: f64 = nonneg(field(&fields, "delay", line)?, "delay", line)?;
                    if a == b {
                        return Err(parse_err(line, format!("self-loop edge on {a}")));
                    }
                    edges.push((line, a, b, delay));
                }
                other => {
                    return Err(parse_err(line, format!("unknown directive `{other}`")));
                }
            }
        }

        let (dest_line, destination, dest_params) = dest.ok_or(TopologyError::MissingDestination)?;
        if !params.contains_key(&destination) {
            let _ = dest_line;
            return Err(TopologyError::UnknownDestination(destination));
        }

        let mut adjacency: BTreeMap<NodeId, BTreeMap<NodeId, f64>> =
            params.keys().map(|id| (id.clone(), BTreeMap::new())).collect();
        for (line, a, b, delay) in edges {
            for end in [&a, &b] {
                if !params.contains_key(end) {
                    return Err(parse_err(line, format!("unknown node id {end} in edge")));
                }
            }
            if adjacency[&a].contains_key(&b) {
                return Err(parse_err(line, format!("duplicate edge {a} {b}")));
            }
            adjacency.get_mut(&a).unwrap().insert(b.clone(), delay);
            adjacency.get_mut(&b).unwrap().insert(a.clone(), delay);
        }

        Ok(Topology {
            params,
            adjacency,
            destination,
            dest_params,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TopologyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn destination(&self) -> &NodeId {
        &self.destination
    }

    pub fn dest_params(&self) -> DestParams {
        self.dest_params
    }

    pub fn node_params(&self, id: &NodeId) -> Option<&NodeParams> {
        self.params.get(id)
    }

    pub fn node_count(&self) -> usize {
        self.params.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeMap::len).sum::<usize>() / 2
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.params.keys()
    }

    /// Neighbors of `id` with link delays, in id order.
    pub fn neighbors(&self, id: &NodeId) -> impl Iterator<Item = (&NodeId, f64)> {
        self.adjacency
            .get(id)
            .into_iter()
            .flat_map(|m| m.iter().map(|(n, &d)| (n, d)))
    }

    pub fn link_delay(&self, a: &NodeId, b: &NodeId) -> Option<f64> {
        self.adjacency.get(a).and_then(|m| m.get(b)).copied()
    }

    /// BFS hop distance from the destination for every reachable node.
    /// Nodes with no path to the destination are left out (they can never
    /// trade) and a warning is logged for each.
    pub fn cascade_levels(&self) -> BTreeMap<NodeId, u32> {
        let levels = self.levels();
        for id in self.params.keys() {
            if !levels.contains_key(id) {
                log::warn!(
                    "node {id} has no path to destination {}; it is excluded from the game",
                    self.destination
                );
            }
        }
        levels
    }

    pub(crate) fn levels(&self) -> BTreeMap<NodeId, u32> {
        let mut levels = BTreeMap::new();
        let mut queue = VecDeque::new();
        levels.insert(self.destination.clone(), 0u32);
        queue.push_back(self.destination.clone());
        while let Some(node) = queue.pop_front() {
            let next = levels[&node] + 1;
            for (neighbor, _) in self.neighbors(&node) {
                if !levels.contains_key(neighbor) {
                    levels.insert(neighbor.clone(), next);
                    queue.push_back(neighbor.clone());
                }
            }
        }
        levels
    }

    /// All nodes that take part in the game: reachable from the destination,
    /// destination excluded. Sorted by id.
    pub fn players(&self) -> Vec<NodeId> {
        self.levels()
            .into_keys()
            .filter(|id| *id != self.destination)
            .collect()
    }

    /// Renders the topology back into its file format; parsing the result
    /// reproduces an equal topology.
    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut text = String::new();
        for (id, p) in &self.params {
            let _ = writeln!(
                text,
                "node {id} cap={} margin={} demand={} value={}",
                p.total_capacity, p.margin, p.own_demand, p.demand_value
            );
        }
        let _ = writeln!(
            text,
            "dest {} export={} price={}",
            self.destination, self.dest_params.export_capacity, self.dest_params.base_price
        );
        for (a, neighbors) in &self.adjacency {
            for (b, delay) in neighbors {
                if a < b {
                    let _ = writeln!(text, "edge {a} {b} delay={delay}");
                }
            }
        }
        text
    }
}

fn split_decl<'a>(
    tokens: &[&'a str],
    line: usize,
) -> Result<(&'a str, BTreeMap<&'a str, &'a str>), TopologyError> {
    if tokens.len() < 2 {
        return Err(parse_err(line, format!("{} expects a node id", tokens[0])));
    }
    Ok((tokens[1], parse_fields(&tokens[2..], line)?))
}

fn parse_fields<'a>(
    tokens: &[&'a str],
    line: usize,
) -> Result<BTreeMap<&'a str, &'a str>, TopologyError> {
    let mut fields = BTreeMap::new();
    for token in tokens {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("expected key=value, got `{token}`")))?;
        if fields.insert(key, value).is_some() {
            return Err(parse_err(line, format!("duplicate field `{key}`")));
        }
    }
    Ok(fields)
}

fn parse_id(id: &str, line: usize) -> Result<NodeId, TopologyError> {
    if NodeId::is_valid(id) {
        Ok(NodeId::new(id))
    } else {
        Err(parse_err(line, format!("invalid node id `{id}`")))
    }
}

fn field<T: std::str::FromStr>(
    fields: &BTreeMap<&str, &str>,
    key: &str,
    line: usize,
) -> Result<T, TopologyError> {
    let raw = fields
        .get(key)
        .ok_or_else(|| parse_err(line, format!("missing field `{key}`")))?;
    raw.parse()
        .map_err(|_| parse_err(line, format!("invalid value `{raw}` for `{key}`")))
}

fn nonneg(value: f64, key: &str, line: usize) -> Result<f64, TopologyError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(parse_err(line, format!("negative or non-finite `{key}`")))
    }
}
