use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::CausalError;

/// Weighted DAG over the features plus the label.
///
/// `weights[j][i]` is the structural coefficient of the edge `i -> j`; zero
/// means no edge. The label node never has outgoing edges.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalGraph {
    nodes: Vec<String>,
    label: usize,
    weights: Vec<Vec<f64>>,
    topo_order: Vec<usize>,
    edge_threshold: f64,
}

impl CausalGraph {
    pub fn new(
        nodes: Vec<String>,
        label: usize,
        weights: Vec<Vec<f64>>,
        edge_threshold: f64,
    ) -> Result<Self, CausalError> {
        let n = nodes.len();
        if label >= n {
            return Err(CausalError::UnknownNode(format!("label index {label}")));
        }
        if weights.len() != n || weights.iter().any(|r| r.len() != n) {
            return Err(CausalError::Malformed(format!("weight matrix must be {n} x {n}")));
        }
        if (0..n).any(|j| weights[j][label] != 0.0) {
            return Err(CausalError::LabelNotSink);
        }
        if (0..n).any(|i| weights[i][i] != 0.0) {
            return Err(CausalError::Cyclic);
        }
        let topo_order = topological_order(&weights).ok_or(CausalError::Cyclic)?;
        Ok(CausalGraph {
            nodes,
            label,
            weights,
            topo_order,
            edge_threshold,
        })
    }

    /// Builds a graph from `(source, target, weight)` triples.
    pub fn from_edges(
        nodes: Vec<String>,
        label: usize,
        edges: &[(usize, usize, f64)],
        edge_threshold: f64,
    ) -> Result<Self, CausalError> {
        let n = nodes.len();
        let mut w = vec![vec![0.0; n]; n];
        for &(src, dst, weight) in edges {
            if src >= n || dst >= n {
                return Err(CausalError::UnknownNode(format!("edge {src} -> {dst}")));
            }
            w[dst][src] = weight;
        }
        Self::new(nodes, label, w, edge_threshold)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn edge_threshold(&self) -> f64 {
        self.edge_threshold
    }

    pub fn index_of(&self, name: &str) -> Result<usize, CausalError> {
        self.nodes
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CausalError::UnknownNode(name.to_string()))
    }

    /// Coefficient of `src -> dst`.
    pub fn coefficient(&self, src: usize, dst: usize) -> f64 {
        self.weights[dst][src]
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.weights[dst][src] != 0.0
    }

    pub fn children(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nodes()).filter(move |&j| self.has_edge(node, j))
    }

    pub fn parents(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nodes()).filter(move |&i| self.has_edge(i, node))
    }

    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for &src in &self.topo_order {
            for dst in self.children(src) {
                out.push((src, dst, self.weights[dst][src]));
            }
        }
        out
    }

    pub fn n_edges(&self) -> usize {
        self.weights.iter().flatten().filter(|w| **w != 0.0).count()
    }

    /// Nodes reachable from `from` along directed edges, excluding `from`.
    pub fn descendants(&self, from: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(u) = stack.pop() {
            for v in self.children(u) {
                if seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        seen
    }

    pub fn reaches(&self, from: usize, to: usize) -> bool {
        from == to || self.descendants(from).contains(&to)
    }

    /// Binarised adjacency, row-major `[src][dst]`.
    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let n = self.n_nodes();
        (0..n).map(|i| (0..n).map(|j| self.has_edge(i, j)).collect()).collect()
    }

    /// Text export: comment lines naming the nodes, label and threshold,
    /// then a `src,dst,weight` header and one edge per line.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# nodes: {}", self.nodes.join(","));
        let _ = writeln!(s, "# label: {}", self.nodes[self.label]);
        let _ = writeln!(s, "# threshold: {}", self.edge_threshold);
        s.push_str("src,dst,weight\n");
        for (src, dst, w) in self.edges() {
            let _ = writeln!(s, "{},{},{}", self.nodes[src], self.nodes[dst], w);
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Self, CausalError> {
        let mut nodes: Option<Vec<String>> = None;
        let mut label: Option<String> = None;
        let mut threshold = 0.0;
        let mut edges = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix("# nodes:") {
                nodes = Some(rest.trim().split(',').map(|s| s.trim().to_string()).collect());
            } else if let Some(rest) = line.strip_prefix("# label:") {
                label = Some(rest.trim().to_string());
            } else if let Some(rest) = line.strip_prefix("# threshold:") {
                threshold = rest
                    .trim()
                    .parse()
                    .map_err(|_| CausalError::Malformed(format!("bad threshold {rest:?}")))?;
            } else if line.starts_with('#') || line == "src,dst,weight" {
                continue;
            } else {
                let parts: Vec<&str> = line.split(',').collect();
                if parts.len() != 3 {
                    return Err(CausalError::Malformed(format!("bad edge line {line:?}")));
                }
                let w: f64 = parts[2]
                    .trim()
                    .parse()
                    .map_err(|_| CausalError::Malformed(format!("bad weight in {line:?}")))?;
                edges.push((parts[0].trim().to_string(), parts[1].trim().to_string(), w));
            }
        }
        let nodes = nodes.ok_or_else(|| CausalError::Malformed("missing '# nodes:' line".into()))?;
        let label = label.ok_or_else(|| CausalError::Malformed("missing '# label:' line".into()))?;
        let find = |n: &str| {
            nodes
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| CausalError::UnknownNode(n.to_string()))
        };
        let label = find(&label)?;
        let edges = edges
            .iter()
            .map(|(a, b, w)| Ok((find(a)?, find(b)?, *w)))
            .collect::<Result<Vec<_>, CausalError>>()?;
        Self::from_edges(nodes, label, &edges, threshold)
    }
}

/// Kahn's algorithm, smallest index first among ready nodes. `None` if the
/// nonzero pattern has a cycle.
pub fn topological_order(weights: &[Vec<f64>]) -> Option<Vec<usize>> {
    let n = weights.len();
    let mut indegree: Vec<usize> = (0..n)
        .map(|j| (0..n).filter(|&i| weights[j][i] != 0.0).count())
        .collect();
    let mut ready: BTreeSet<usize> = (0..n).filter(|&j| indegree[j] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(u) = ready.pop_first() {
        order.push(u);
        for v in 0..n {
            if weights[v][u] != 0.0 {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    ready.insert(v);
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Non-sensitive children of `sensitive` that lie on a directed path to the
/// label. Returned in node-index order.
pub fn direct_features(graph: &CausalGraph, sensitive: &str) -> Result<Vec<String>, CausalError> {
    let s = graph.index_of(sensitive)?;
    Ok(direct_feature_indices(graph, s)
        .into_iter()
        .map(|i| graph.nodes()[i].clone())
        .collect())
}

pub fn direct_feature_indices(graph: &CausalGraph, sensitive: usize) -> Vec<usize> {
    let label = graph.label();
    graph
        .children(sensitive)
        .filter(|&c| c != label && c != sensitive && graph.reaches(c, label))
        .collect()
}

/// Mean pairwise Hamming distance between the binarised adjacency matrices.
pub fn graph_stability(graphs: &[CausalGraph]) -> Result<f64, CausalError> {
    if graphs.len() < 2 {
        return Err(CausalError::TooFewGraphs(graphs.len()));
    }
    let nodes = graphs[0].nodes();
    if graphs.iter().any(|g| g.nodes() != nodes) {
        return Err(CausalError::NodeSetMismatch);
    }
    let adj: Vec<Vec<Vec<bool>>> = graphs.iter().map(CausalGraph::adjacency).collect();
    let mut total = 0usize;
    let mut pairs = 0usize;
    for a in 0..adj.len() {
        for b in a + 1..adj.len() {
            total += adj[a]
                .iter()
                .flatten()
                .zip(adj[b].iter().flatten())
                .filter(|(x, y)| x != y)
                .count();
            pairs += 1;
        }
    }
    Ok(total as f64 / pairs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn adult_fig() -> CausalGraph {
        // age -> marital -> gender -> y, marital -> y, education isolated
        let nodes = names(&["age", "marital", "gender", "education", "y"]);
        CausalGraph::from_edges(nodes, 4, &[(0, 1, 0.4), (1, 2, 0.3), (2, 4, 0.2), (1, 4, -0.5)], 0.05).unwrap()
    }

    #[test]
    fn direct_feature_excludes_indirect() {
        let g = adult_fig();
        assert_eq!(direct_features(&g, "age").unwrap(), vec!["marital"]);
        assert!(matches!(direct_features(&g, "zip"), Err(CausalError::UnknownNode(_))));
    }

    #[test]
    fn no_path_to_label_means_empty() {
        let g = CausalGraph::from_edges(names(&["s", "a", "y"]), 2, &[(0, 1, 1.0)], 0.0).unwrap();
        assert!(direct_features(&g, "s").unwrap().is_empty());
    }

    #[test]
    fn chain_keeps_first_hop_only() {
        let g = CausalGraph::from_edges(
            names(&["s", "a", "b", "y"]),
            3,
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)],
            0.0,
        )
        .unwrap();
        assert_eq!(direct_features(&g, "s").unwrap(), vec!["a"]);
    }

    #[test]
    fn rejects_cycles_and_label_sources() {
        let n = names(&["a", "b", "y"]);
        assert!(matches!(
            CausalGraph::from_edges(n.clone(), 2, &[(0, 1, 1.0), (1, 0, 1.0)], 0.0),
            Err(CausalError::Cyclic)
        ));
        assert!(matches!(
            CausalGraph::from_edges(n, 2, &[(2, 0, 1.0)], 0.0),
            Err(CausalError::LabelNotSink)
        ));
    }

    #[test]
    fn topo_order_respects_edges() {
        let g = adult_fig();
        let pos = |n: usize| g.topo_order().iter().position(|&x| x == n).unwrap();
        for (s, d, _) in g.edges() {
            assert!(pos(s) < pos(d));
        }
    }

    #[test]
    fn edge_list_round_trip() {
        let g = adult_fig();
        let text = g.to_edge_list();
        assert!(text.contains("age,marital,0.4"));
        assert_eq!(CausalGraph::from_edge_list(&text).unwrap(), g);
    }

    #[test]
    fn stability_cases() {
        let g = adult_fig();
        assert_eq!(graph_stability(&[g.clone(), g.clone()]).unwrap(), 0.0);
        let nodes = g.nodes().to_vec();
        let h = CausalGraph::from_edges(nodes.clone(), 4, &[(0, 1, 0.4), (1, 2, 0.3), (2, 4, 0.2)], 0.05).unwrap();
        assert_eq!(graph_stability(&[g.clone(), h.clone()]).unwrap(), 1.0);
        // pairs: (g,g)=0, (g,h)=1, (g,h)=1 -> 2/3
        assert!((graph_stability(&[g.clone(), g.clone(), h]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let other = CausalGraph::from_edges(names(&["a", "y"]), 1, &[], 0.0).unwrap();
        assert!(matches!(
            graph_stability(&[g.clone(), other]),
            Err(CausalError::NodeSetMismatch)
        ));
        assert!(matches!(graph_stability(&[g]), Err(CausalError::TooFewGraphs(1))));
    }
}
