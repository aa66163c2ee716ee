//! Match graph construction, connected components and timeline recovery.
//!
//! Vertices are database samples in insertion order. An undirected edge
//! `{a, b}` (with `a < b`) exists when either sample lists the other among
//! its accepted matches. The edge carries `offset = position(b) -
//! position(a)` in frames and the landmark evidence `l`.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::filtering::MatchingList;

/// Directional offsets may disagree by this many frames before a warning.
pub const OFFSET_TOLERANCE_FRAMES: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// `position(b) - position(a)` in frames.
    pub offset_frames: i64,
    pub l: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchGraph {
    pub vertices: Vec<String>,
    pub frame_duration_s: f64,
    edges: BTreeMap<(usize, usize), Edge>,
    pub warnings: Vec<String>,
}

impl MatchGraph {
    pub fn new(vertices: Vec<String>, frame_duration_s: f64) -> Self {
        Self {
            vertices,
            frame_duration_s,
            edges: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    /// Insert or replace the edge between `a` and `b`. `offset_frames` is
    /// `position(b) - position(a)`; it is re-oriented when `a > b`.
    pub fn set_edge(&mut self, a: usize, b: usize, offset_frames: i64, l: u32) {
        assert!(a != b, "self edge on vertex {a}");
        assert!(
            a < self.vertices.len() && b < self.vertices.len(),
            "edge to unknown vertex"
        );
        let (lo, hi, off) = if a < b {
            (a, b, offset_frames)
        } else {
            (b, a, -offset_frames)
        };
        self.edges.insert(
            (lo, hi),
            Edge {
                a: lo,
                b: hi,
                offset_frames: off,
                l,
            },
        );
    }

    /// Edges sorted by `(a, b)`.
    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<&Edge> {
        self.edges.get(&(a.min(b), a.max(b)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.values().filter(|e| e.a == v || e.b == v).count()
    }

    /// Neighbours of every vertex with the connecting edge, ordered by
    /// neighbour index.
    pub fn adjacency(&self) -> Vec<Vec<(usize, Edge)>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for e in self.edges.values() {
            adj[e.a].push((e.b, *e));
            adj[e.b].push((e.a, *e));
        }
        for list in &mut adj {
            list.sort_by_key(|&(n, _)| n);
        }
        adj
    }

    pub fn offset_seconds(&self, e: &Edge) -> f64 {
        e.offset_frames as f64 * self.frame_duration_s
    }

    /// `a,b,offset_s,l_ab` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("a,b,offset_s,l_ab\n");
        for e in self.edges.values() {
            out.push_str(&format!(
                "{},{},{:.6},{}\n",
                self.vertices[e.a],
                self.vertices[e.b],
                self.offset_seconds(e),
                e.l
            ));
        }
        out
    }
}

#[derive(Clone, Copy)]
struct Directional {
    offset: i64,
    l: u32,
}

/// Union of accepted matches over all queries.
///
/// When both directions of a pair are present, the edge takes the larger
/// `l` and that direction's offset (ties go to the lower-index query).
/// Directions that disagree by more than [`OFFSET_TOLERANCE_FRAMES`] are
/// kept but recorded in `warnings`.
pub fn build_graph(vertices: Vec<String>, lists: &[MatchingList], frame_duration_s: f64) -> MatchGraph {
    let index: BTreeMap<&str, usize> = vertices.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
    // (lo, hi) -> [from lo's list, from hi's list], offsets in canonical orientation
    let mut pairs: BTreeMap<(usize, usize), [Option<Directional>; 2]> = BTreeMap::new();
    let mut warnings = Vec::new();
    for list in lists {
        let Some(&q) = index.get(list.query_id.as_str()) else {
            warnings.push(format!("matching list for unknown sample {}", list.query_id));
            continue;
        };
        for c in &list.candidates {
            let Some(&b) = index.get(c.candidate_id.as_str()) else {
                warnings.push(format!(
                    "unknown candidate {} in list of {}",
                    c.candidate_id, list.query_id
                ));
                continue;
            };
            if b == q {
                continue;
            }
            // offset_frames = position(candidate) - position(query)
            let (key, slot, offset) = if q < b {
                ((q, b), 0, c.offset_frames)
            } else {
                ((b, q), 1, -c.offset_frames)
            };
            let entry = &mut pairs.entry(key).or_default()[slot];
            if entry.is_none_or(|d| c.l > d.l) {
                *entry = Some(Directional { offset, l: c.l });
            }
        }
    }

    let mut g = MatchGraph::new(vertices, frame_duration_s);
    for ((a, b), dirs) in pairs {
        let chosen = match dirs {
            [Some(x), Some(y)] => {
                if (x.offset - y.offset).abs() > OFFSET_TOLERANCE_FRAMES {
                    let msg = format!(
                        "inconsistent offsets between {} and {}: {} vs {} frames",
                        g.vertices[a], g.vertices[b], x.offset, y.offset
                    );
                    warn!("{msg}");
                    warnings.push(msg);
                }
                if y.l > x.l {
                    y
                } else {
                    x
                }
            }
            [Some(x), None] | [None, Some(x)] => x,
            [None, None] => continue,
        };
        g.set_edge(a, b, chosen.offset, chosen.l);
    }
    g.warnings = warnings;
    g
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSet {
    /// Components with ≥ 2 members, each sorted, ordered by smallest member.
    pub clusters: Vec<Vec<usize>>,
    pub unmatched: Vec<usize>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn connected_components(g: &MatchGraph) -> ClusterSet {
    let n = g.vertices.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for e in g.edges() {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in 0..n {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().push(v);
    }
    let mut clusters = Vec::new();
    let mut unmatched = Vec::new();
    for (_, members) in groups {
        if members.len() == 1 {
            unmatched.push(members[0]);
        } else {
            clusters.push(members);
        }
    }
    clusters.sort_by_key(|c| c[0]);
    ClusterSet { clusters, unmatched }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    /// `(vertex, position in frames)`, in cluster member order; the
    /// earliest member sits at 0.
    pub positions: Vec<(usize, i64)>,
    /// Tree edges used, as `(parent, child)`.
    pub tree: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

impl Timeline {
    pub fn position(&self, v: usize) -> Option<i64> {
        self.positions.iter().find(|(u, _)| *u == v).map(|&(_, p)| p)
    }
}

/// Place a connected cluster on a common timeline by accumulating edge
/// offsets along a maximum-evidence spanning tree (Prim from the first
/// member). Non-tree edges that disagree with the tree by more than
/// [`OFFSET_TOLERANCE_FRAMES`] produce warnings.
pub fn propagate_offsets(cluster: &[usize], g: &MatchGraph) -> Timeline {
    let members: BTreeSet<usize> = cluster.iter().copied().collect();
    let mut pos: BTreeMap<usize, i64> = BTreeMap::new();
    let mut tree = Vec::new();
    let mut warnings = Vec::new();
    let Some(&root) = cluster.first() else {
        return Timeline {
            positions: Vec::new(),
            tree,
            warnings,
        };
    };
    pos.insert(root, 0);
    let adj = g.adjacency();
    loop {
        // best frontier edge: max l, then smallest (parent, child)
        let mut best: Option<(u32, usize, usize, i64)> = None;
        for (&u, &pu) in &pos {
            for &(v, e) in &adj[u] {
                if pos.contains_key(&v) || !members.contains(&v) {
                    continue;
                }
                let delta = if e.a == u { e.offset_frames } else { -e.offset_frames };
                let better = match best {
                    None => true,
                    Some((l, bu, bv, _)) => e.l > l || (e.l == l && (u, v) < (bu, bv)),
                };
                if better {
                    best = Some((e.l, u, v, pu + delta));
                }
            }
        }
        let Some((_, u, v, p)) = best else { break };
        pos.insert(v, p);
        tree.push((u, v));
    }
    if pos.len() < members.len() {
        warnings.push(format!(
            "cluster is not connected: placed {} of {}",
            pos.len(),
            members.len()
        ));
    }

    let tree_set: BTreeSet<(usize, usize)> = tree.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
    for e in g.edges() {
        if tree_set.contains(&(e.a, e.b)) {
            continue;
        }
        if let (Some(&pa), Some(&pb)) = (pos.get(&e.a), pos.get(&e.b)) {
            let disagreement = (pb - pa) - e.offset_frames;
            if disagreement.abs() > OFFSET_TOLERANCE_FRAMES {
                let msg = format!(
                    "cycle inconsistency on {}–{}: {} frames",
                    g.vertices[e.a], g.vertices[e.b], disagreement
                );
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let min = pos.values().copied().min().unwrap_or(0);
    let positions = cluster
        .iter()
        .filter_map(|v| pos.get(v).map(|&p| (*v, p - min)))
        .collect();
    Timeline {
        positions,
        tree,
        warnings,
    }
}
