//! Undirected simple graphs and their plain-text edge-list format.
//!
//! The text format is a header line `n m` followed by `m` lines `u v` with
//! 0-based vertex indices; self-loops and duplicate edges are rejected.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adjacency: Vec<bool>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adjacency: vec![false; n * n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for u in 0..n {
            for v in u + 1..n {
                g.set_edge(u, v);
            }
        }
        g
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u * self.n + v]
    }

    pub(crate) fn set_edge(&mut self, u: usize, v: usize) {
        self.adjacency[u * self.n + v] = true;
        self.adjacency[v * self.n + u] = true;
    }

    /// Insert edge `{u, v}`; rejects self-loops, duplicates and bad indices.
    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<()> {
        if u >= self.n || v >= self.n {
            return Err(Error::InvalidArgument(format!(
                "edge ({u}, {v}) out of range for n={}",
                self.n
            )));
        }
        if u == v {
            return Err(Error::InvalidArgument(format!("self-loop at vertex {u}")));
        }
        if self.has_edge(u, v) {
            return Err(Error::InvalidArgument(format!("duplicate edge ({u}, {v})")));
        }
        self.set_edge(u, v);
        Ok(())
    }

    /// Edges `(u, v)` with `u < v` in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in 0..self.n {
            for v in u + 1..self.n {
                if self.has_edge(u, v) {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&e| e).count() / 2
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let edges = self.edges();
        writeln!(out, "{} {}", self.n, edges.len())?;
        for (u, v) in edges {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (no, line) in input.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let nums: Vec<usize> = t
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: no + 1,
                    msg: format!("{e}"),
                })?;
            if nums.len() != 2 {
                return Err(Error::Parse {
                    line: no + 1,
                    msg: format!("expected two integers, found {}", nums.len()),
                });
            }
            rows.push((no + 1, nums[0], nums[1]));
        }
        let Some(&(_, n, m)) = rows.first() else {
            return Err(Error::Parse {
                line: 1,
                msg: "missing header `n m`".into(),
            });
        };
        if rows.len() - 1 != m {
            return Err(Error::Parse {
                line: rows.last().map(|r| r.0).unwrap_or(1),
                msg: format!("header declares {m} edges, found {}", rows.len() - 1),
            });
        }
        let mut g = Self::empty(n);
        for &(line, u, v) in &rows[1..] {
            g.add_edge(u, v).map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let g = Graph::from_edges(5, &[(0, 1), (3, 1), (2, 4)]).unwrap();
        let mut buf = Vec::new();
        g.write_text(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "5 3\n0 1\n1 3\n2 4\n");
        assert_eq!(Graph::read_text(&buf[..]).unwrap(), g);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Graph::read_text("3 1\n1 1\n".as_bytes()).is_err());
        assert!(Graph::read_text("3 2\n0 1\n1 0\n".as_bytes()).is_err());
        assert!(Graph::read_text("3 1\n0 3\n".as_bytes()).is_err());
        assert!(Graph::read_text("3 2\n0 1\n".as_bytes()).is_err());
        assert!(Graph::read_text("".as_bytes()).is_err());
    }

    #[test]
    fn complete_graph_counts() {
        let g = Graph::complete(6);
        assert_eq!(g.edge_count(), 15);
        assert_eq!(g.edges().len(), 15);
        assert!(!g.has_edge(2, 2));
    }
}
