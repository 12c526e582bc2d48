//! Path enumeration over the substrate: Dijkstra, Yen's k-shortest simple
//! paths, exhaustive simple paths, and a precomputed all-pairs catalog.
//!
//! Candidates are ordered by (delay, hop count, link ids), which is total.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::model::{LinkId, ServerId, SubstrateNetwork};

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub links: Vec<LinkId>,
    pub delay: f64,
}

impl Path {
    fn empty() -> Self {
        Self {
            links: Vec::new(),
            delay: 0.0,
        }
    }

    pub fn hops(&self) -> usize {
        self.links.len()
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.delay
            .total_cmp(&other.delay)
            .then(self.links.len().cmp(&other.links.len()))
            .then_with(|| self.links.cmp(&other.links))
    }
}

/// No directed link repeats and no link appears together with its reverse.
pub fn is_loop_free(links: &[LinkId]) -> bool {
    // both conditions say no undirected edge `l >> 1` occurs twice
    if links.len() <= 24 {
        return links
            .iter()
            .enumerate()
            .all(|(i, &a)| links[i + 1..].iter().all(|&b| a >> 1 != b >> 1));
    }
    let mut edges: Vec<LinkId> = links.iter().map(|&l| l >> 1).collect();
    edges.sort_unstable();
    edges.windows(2).all(|w| w[0] != w[1])
}

#[derive(PartialEq)]
struct Frontier {
    delay: f64,
    hops: usize,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap
        other
            .delay
            .total_cmp(&self.delay)
            .then(other.hops.cmp(&self.hops))
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra on (delay, hops) lexicographic cost, with banned links and nodes.
fn dijkstra(
    net: &SubstrateNetwork,
    from: usize,
    to: usize,
    banned_links: &HashSet<LinkId>,
    banned_nodes: &[bool],
) -> Option<Path> {
    let n = net.servers().len();
    let mut best: Vec<Option<(f64, usize)>> = vec![None; n];
    let mut pred: Vec<Option<LinkId>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    best[from] = Some((0.0, 0));
    heap.push(Frontier {
        delay: 0.0,
        hops: 0,
        node: from,
    });
    while let Some(Frontier { delay, hops, node }) = heap.pop() {
        if best[node] != Some((delay, hops)) {
            continue;
        }
        if node == to {
            break;
        }
        let id = net.servers()[node].id;
        for &l in net.out_links(id) {
            if banned_links.contains(&l) {
                continue;
            }
            let link = &net.links()[l];
            let v = net.slot(link.head).expect("link head exists");
            if banned_nodes[v] {
                continue;
            }
            let cand = (delay + link.delay, hops + 1);
            let better = match best[v] {
                None => true,
                Some(cur) => cand.0.total_cmp(&cur.0).then(cand.1.cmp(&cur.1)) == Ordering::Less,
            };
            if better {
                best[v] = Some(cand);
                pred[v] = Some(l);
                heap.push(Frontier {
                    delay: cand.0,
                    hops: cand.1,
                    node: v,
                });
            }
        }
    }
    let (delay, _) = best[to]?;
    let mut links = Vec::new();
    let mut at = to;
    while at != from {
        let l = pred[at]?;
        links.push(l);
        at = net.slot(net.links()[l].tail).expect("link tail exists");
    }
    links.reverse();
    Some(Path { links, delay })
}

pub fn shortest_path(net: &SubstrateNetwork, from: ServerId, to: ServerId) -> Option<Path> {
    let (u, v) = (net.slot(from)?, net.slot(to)?);
    dijkstra(
        net,
        u,
        v,
        &HashSet::new(),
        &vec![false; net.servers().len()],
    )
}

/// Yen's algorithm. Returns up to `k` simple paths in canonical order.
pub fn k_shortest_paths(
    net: &SubstrateNetwork,
    from: ServerId,
    to: ServerId,
    k: usize,
) -> Vec<Path> {
    let (Some(u), Some(v)) = (net.slot(from), net.slot(to)) else {
        return Vec::new();
    };
    if k == 0 {
        return Vec::new();
    }
    if u == v {
        return vec![Path::empty()];
    }
    let n = net.servers().len();
    let Some(first) = dijkstra(net, u, v, &HashSet::new(), &vec![false; n]) else {
        return Vec::new();
    };
    let mut accepted = vec![first];
    let mut candidates: Vec<Path> = Vec::new();
    while accepted.len() < k {
        let last = accepted.last().unwrap().clone();
        let nodes: Vec<usize> = net
            .node_sequence(from, &last.links)
            .expect("accepted paths are walks")
            .into_iter()
            .map(|s| net.slot(s).unwrap())
            .collect();
        for i in 0..last.links.len() {
            let root = &last.links[..i];
            let mut banned_links = HashSet::new();
            for p in &accepted {
                if p.links.len() > i && p.links[..i] == *root {
                    banned_links.insert(p.links[i]);
                }
            }
            let mut banned_nodes = vec![false; n];
            for &node in &nodes[..i] {
                banned_nodes[node] = true;
            }
            if let Some(spur) = dijkstra(net, nodes[i], v, &banned_links, &banned_nodes) {
                let mut links = root.to_vec();
                links.extend_from_slice(&spur.links);
                let path = Path {
                    delay: net.path_delay(&links),
                    links,
                };
                if !candidates.contains(&path) && !accepted.contains(&path) {
                    candidates.push(path);
                }
            }
        }
        let Some(best) = candidates
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.canonical_cmp(b.1))
            .map(|(i, _)| i)
        else {
            break;
        };
        accepted.push(candidates.swap_remove(best));
    }
    accepted.sort_by(Path::canonical_cmp);
    accepted
}

/// Every simple path between two servers, in canonical order. Exponential;
/// intended for small graphs.
pub fn all_simple_paths(net: &SubstrateNetwork, from: ServerId, to: ServerId) -> Vec<Path> {
    let (Some(u), Some(v)) = (net.slot(from), net.slot(to)) else {
        return Vec::new();
    };
    if u == v {
        return vec![Path::empty()];
    }
    let mut out = Vec::new();
    let mut visited = vec![false; net.servers().len()];
    let mut stack = Vec::new();
    visited[u] = true;
    dfs(net, u, v, &mut visited, &mut stack, &mut out);
    out.sort_by(Path::canonical_cmp);
    out
}

fn dfs(
    net: &SubstrateNetwork,
    at: usize,
    to: usize,
    visited: &mut [bool],
    stack: &mut Vec<LinkId>,
    out: &mut Vec<Path>,
) {
    for &l in net.out_links(net.servers()[at].id) {
        let w = net.slot(net.links()[l].head).unwrap();
        if visited[w] {
            continue;
        }
        stack.push(l);
        if w == to {
            out.push(Path {
                links: stack.clone(),
                delay: net.path_delay(stack),
            });
        } else {
            visited[w] = true;
            dfs(net, w, to, visited, stack, out);
            visited[w] = false;
        }
        stack.pop();
    }
}

/// All-pairs candidate paths plus hop-count and minimum-delay matrices.
#[derive(Debug, Clone)]
pub struct PathCatalog {
    n: usize,
    ids: Vec<ServerId>,
    paths: Vec<Vec<Path>>,
    hops: Vec<Option<usize>>,
    min_delay: Vec<Option<f64>>,
}

impl PathCatalog {
    /// `k = None` enumerates every simple path.
    pub fn new(net: &SubstrateNetwork, k: Option<usize>) -> Self {
        let ids: Vec<ServerId> = net.servers().iter().map(|s| s.id).collect();
        let n = ids.len();
        let mut paths = Vec::with_capacity(n * n);
        for &a in &ids {
            for &b in &ids {
                paths.push(match k {
                    Some(k) => k_shortest_paths(net, a, b, k),
                    None => all_simple_paths(net, a, b),
                });
            }
        }
        let mut hops = vec![None; n * n];
        for s in 0..n {
            hops[s * n + s] = Some(0);
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(x) = queue.pop_front() {
                let d = hops[s * n + x].unwrap();
                for &l in net.out_links(ids[x]) {
                    let y = net.slot(net.links()[l].head).unwrap();
                    if hops[s * n + y].is_none() {
                        hops[s * n + y] = Some(d + 1);
                        queue.push_back(y);
                    }
                }
            }
        }
        let min_delay = (0..n * n)
            .map(|i| shortest_path(net, ids[i / n], ids[i % n]).map(|p| p.delay))
            .collect();
        Self {
            n,
            ids,
            paths,
            hops,
            min_delay,
        }
    }

    fn idx(&self, from: ServerId, to: ServerId) -> Option<usize> {
        let a = self.ids.binary_search(&from).ok()?;
        let b = self.ids.binary_search(&to).ok()?;
        Some(a * self.n + b)
    }

    pub fn paths(&self, from: ServerId, to: ServerId) -> &[Path] {
        self.idx(from, to).map_or(&[], |i| &self.paths[i])
    }

    pub fn hops(&self, from: ServerId, to: ServerId) -> Option<usize> {
        self.idx(from, to).and_then(|i| self.hops[i])
    }

    pub fn min_delay(&self, from: ServerId, to: ServerId) -> Option<f64> {
        self.idx(from, to).and_then(|i| self.min_delay[i])
    }

    /// Candidate detours `prev -> via -> next` built from catalog paths.
    pub fn detours(&self, prev: ServerId, via: ServerId, next: ServerId) -> Vec<Path> {
        compose_detours(self.paths(prev, via), self.paths(via, next))
    }
}

/// Concatenations `a ++ b` that are non-empty and loop-free, in canonical
/// order without duplicates.
pub fn compose_detours(first: &[Path], second: &[Path]) -> Vec<Path> {
    let mut out = Vec::new();
    for a in first {
        for b in second {
            if a.links.is_empty() && b.links.is_empty() {
                continue;
            }
            let mut links = a.links.clone();
            links.extend_from_slice(&b.links);
            if is_loop_free(&links) {
                out.push(Path {
                    links,
                    delay: a.delay + b.delay,
                });
            }
        }
    }
    out.sort_by(Path::canonical_cmp);
    out.dedup();
    out
}
