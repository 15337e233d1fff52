use std::collections::VecDeque;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Undirected, connected graph with a dense symmetric weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    weights: Vec<f64>,
}

impl WeightedGraph {
    /// Validates a dense row-major weight matrix.
    pub fn new(n: usize, weights: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Graph(format!("need at least 2 nodes, got {n}")));
        }
        if weights.len() != n * n {
            return Err(Error::Graph(format!(
                "weight matrix has {} entries, expected {}",
                weights.len(),
                n * n
            )));
        }
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(Error::Graph(format!("self loop at node {i}")));
            }
            for j in 0..n {
                let w = weights[i * n + j];
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::Graph(format!("invalid weight {w} on ({i}, {j})")));
                }
                if w != weights[j * n + i] {
                    return Err(Error::Graph(format!("asymmetric weight on ({i}, {j})")));
                }
            }
        }
        let g = Self { n, weights };
        if !g.is_connected() {
            return Err(Error::Graph("graph is not connected".into()));
        }
        Ok(g)
    }

    /// Builds a graph from undirected `(u, v, w)` edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut weights = vec![0.0; n * n];
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::Graph(format!("edge ({u}, {v}) out of range for {n} nodes")));
            }
            if u == v {
                return Err(Error::Graph(format!("self loop at node {u}")));
            }
            weights[u * n + v] = w;
            weights[v * n + u] = w;
        }
        Self::new(n, weights)
    }

    /// 4-neighbourhood grid with unit weights; node `(i, j)` is `i * cols + j`.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols < 2 {
            return Err(Error::Graph(format!("grid {rows}x{cols} has fewer than 2 nodes")));
        }
        let mut edges = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                let u = i * cols + j;
                if j + 1 < cols {
                    edges.push((u, u + 1, 1.0));
                }
                if i + 1 < rows {
                    edges.push((u, u + cols, 1.0));
                }
            }
        }
        Self::from_edges(rows * cols, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.weights[i * self.n..(i + 1) * self.n].iter().sum()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.weight(i, j) > 0.0)
    }

    /// Edges with `u < v`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for u in 0..self.n {
            for v in u + 1..self.n {
                let w = self.weight(u, v);
                if w > 0.0 {
                    out.push((u, v, w));
                }
            }
        }
        out
    }

    /// Hop distances from `src` (`usize::MAX` when unreachable).
    pub fn hop_distances(&self, src: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n];
        let mut queue = VecDeque::from([src]);
        dist[src] = 0;
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn is_connected(&self) -> bool {
        self.hop_distances(0).iter().all(|&d| d != usize::MAX)
    }

    /// Writes one `u v w` line per edge, 0-based.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (u, v, w) in self.edges() {
            writeln!(out, "{u} {v} {w}")?;
        }
        Ok(())
    }

    /// Reads an edge list; the node count is one past the largest index
    /// unless `n` is given.
    pub fn read_edge_list<R: BufRead>(input: R, n: Option<usize>) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_err = || Error::Format(format!("edge list line {}: {line:?}", lineno + 1));
            if fields.len() != 3 {
                return Err(parse_err());
            }
            let u: usize = fields[0].parse().map_err(|_| parse_err())?;
            let v: usize = fields[1].parse().map_err(|_| parse_err())?;
            let w: f64 = fields[2].parse().map_err(|_| parse_err())?;
            edges.push((u, v, w));
        }
        let n = n.unwrap_or_else(|| edges.iter().map(|&(u, v, _)| u.max(v) + 1).max().unwrap_or(0));
        Self::from_edges(n, &edges)
    }
}
