//! Skeleton graph: junction clustering, loop breaking, spur pruning and
//! breadth-first orientation from a root.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::Skeleton;
use crate::error::{Error, Result};
use crate::morph::{neighbor, OFFSETS_26};
use crate::par;
use crate::volume::Geometry;

/// Terminal branches with fewer interior voxels (tip and junction not
/// counted) than this are removed as spurs.
pub const SPUR_MIN_VOXELS: usize = 3;
/// When the skeleton carries radii, terminal branches shorter than this many
/// local radii at their junction are also spurs (surface bumps).
pub const SPUR_RADIUS_FACTOR: f64 = 2.0;
/// The root hint must lie within this many voxels of the skeleton.
pub const ROOT_HINT_RADIUS: f64 = 5.0;
/// Chord sampling interval for branch lengths, in polyline voxels.
pub const CHORD_STEP: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Root,
    Junction,
    Endpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub position: [usize; 3],
    /// Skeleton voxels merged into this node (a junction may span several).
    pub voxels: Vec<usize>,
    pub kind: NodeKind,
    pub degree: usize,
    pub component: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub parent_node: usize,
    pub child_node: usize,
    /// Voxels strictly between the two nodes, ordered away from the root.
    pub voxels: Vec<usize>,
    pub generation: u32,
    pub parent: Option<usize>,
    pub component: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselTree {
    pub geom: Geometry,
    pub nodes: Vec<TreeNode>,
    pub branches: Vec<Branch>,
    /// Root node per connected component; the first is the hinted root.
    pub roots: Vec<usize>,
    /// Skeleton voxels dropped as spurs or to break cycles.
    pub pruned: Vec<usize>,
    /// More than one component was found.
    pub forest: bool,
}

impl VesselTree {
    pub fn empty(geom: Geometry) -> Self {
        VesselTree { geom, nodes: vec![], branches: vec![], roots: vec![], pruned: vec![], forest: false }
    }

    pub fn junction_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.degree >= 3).count()
    }

    pub fn endpoint_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.degree == 1).count()
    }

    /// Node positions and interior voxels of a branch as one polyline.
    pub fn polyline(&self, b: usize) -> Vec<[usize; 3]> {
        let br = &self.branches[b];
        let mut pts = vec![self.nodes[br.parent_node].position];
        pts.extend(br.voxels.iter().map(|&v| self.geom.coords(v)));
        pts.push(self.nodes[br.child_node].position);
        pts
    }

    /// Physical length of a branch polyline in mm.
    pub fn branch_length_mm(&self, b: usize) -> f64 {
        let pts = self.polyline(b);
        pts.windows(2).map(|w| step_mm(&self.geom, w[0], w[1])).sum()
    }

    /// Length of a branch polyline measured along chords between every
    /// [`CHORD_STEP`]-th voxel, in mm. Digital zigzag does not add length.
    pub fn branch_chord_length_mm(&self, b: usize) -> f64 {
        let pts = self.polyline(b);
        let mut idx: Vec<usize> = (0..pts.len()).step_by(CHORD_STEP).collect();
        if idx.last() != Some(&(pts.len() - 1)) {
            idx.push(pts.len() - 1);
        }
        idx.windows(2).map(|w| step_mm(&self.geom, pts[w[0]], pts[w[1]])).sum()
    }

    /// Mean step length over all branch polylines, in mm, from chord
    /// lengths. Zero for trees without branches.
    pub fn mean_step_mm(&self) -> f64 {
        let steps: usize = self.branches.iter().map(|b| b.voxels.len() + 1).sum();
        if steps == 0 {
            return 0.0;
        }
        (0..self.branches.len()).map(|b| self.branch_chord_length_mm(b)).sum::<f64>() / steps as f64
    }

    /// Skeleton voxels kept in the tree: nodes plus branch interiors.
    pub fn voxel_count(&self) -> usize {
        self.nodes.iter().map(|n| n.voxels.len()).sum::<usize>()
            + self.branches.iter().map(|b| b.voxels.len()).sum::<usize>()
    }

    /// Kept voxel count times the mean step, in mm.
    pub fn skeleton_length_mm(&self) -> f64 {
        self.voxel_count() as f64 * self.mean_step_mm()
    }

    /// Voxel at the middle of a branch polyline.
    pub fn midpoint(&self, b: usize) -> [usize; 3] {
        let pts = self.polyline(b);
        pts[pts.len() / 2]
    }
}

fn step_mm(geom: &Geometry, a: [usize; 3], b: [usize; 3]) -> f64 {
    (0..3).map(|k| ((a[k] as f64 - b[k] as f64) * geom.spacing[k]).powi(2)).sum::<f64>().sqrt()
}

/// A junction with `k >= 3` incident branches counts as `k - 2`.
pub fn count_bifurcations(tree: &VesselTree) -> usize {
    tree.nodes.iter().filter(|n| n.degree >= 3).map(|n| n.degree - 2).sum()
}

struct Edge {
    a: usize,
    b: usize,
    path: Vec<usize>,
}

struct Graph {
    nodes: Vec<Option<Vec<usize>>>,
    edges: Vec<Option<Edge>>,
}

impl Graph {
    fn incident(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            if let Some(e) = e {
                inc[e.a].push(i);
                if e.b != e.a {
                    inc[e.b].push(i);
                }
            }
        }
        inc
    }

    fn add_node(&mut self, voxels: Vec<usize>) -> usize {
        self.nodes.push(Some(voxels));
        self.nodes.len() - 1
    }

    /// Replaces degree-2 nodes other than `keep` by a single edge.
    fn merge_chains(&mut self, keep: Option<usize>) {
        loop {
            let inc = self.incident();
            let Some(k) =
                (0..self.nodes.len()).find(|&k| self.nodes[k].is_some() && inc[k].len() == 2 && Some(k) != keep)
            else {
                return;
            };
            let (e1, e2) = (self.edges[inc[k][0]].take().unwrap(), self.edges[inc[k][1]].take().unwrap());
            let (x, mut path) = if e1.b == k { (e1.a, e1.path) } else { (e1.b, e1.path.into_iter().rev().collect()) };
            let (y, tail) =
                if e2.a == k { (e2.b, e2.path) } else { (e2.a, e2.path.into_iter().rev().collect::<Vec<_>>()) };
            path.extend(self.nodes[k].take().unwrap());
            path.extend(tail);
            self.edges.push(Some(Edge { a: x, b: y, path }));
        }
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// True when the terminal branch `path` (ending at node voxels `tip`) is
/// shorter than [`SPUR_RADIUS_FACTOR`] local radii at its junction `base`.
fn spur_by_radius(skel: &Skeleton, path: &[usize], base: &[usize], tip: &[usize]) -> bool {
    if skel.radius_mm.is_empty() {
        return false;
    }
    let geom = &skel.geom;
    let radius = |v: usize| skel.voxels.binary_search(&v).map_or(0.0, |k| skel.radius_mm[k]);
    let r = base.iter().map(|&v| radius(v)).fold(0.0, f64::max);
    let dist = |a: usize, b: usize| step_mm(geom, geom.coords(a), geom.coords(b));
    let nearest = |from: usize, set: &[usize]| set.iter().map(|&v| dist(from, v)).fold(f64::INFINITY, f64::min);
    let length = match (path.first(), path.last()) {
        (Some(&first), Some(&last)) => {
            let inner: f64 = path.windows(2).map(|w| dist(w[0], w[1])).sum();
            let ends = (nearest(first, base) + nearest(last, tip)).min(nearest(last, base) + nearest(first, tip));
            inner + ends
        }
        _ => tip.iter().map(|&t| nearest(t, base)).fold(f64::INFINITY, f64::min),
    };
    length < SPUR_RADIUS_FACTOR * r
}

/// Builds the oriented vessel tree. Junctions are clusters of adjacent
/// skeleton voxels with three or more neighbours. Cycles are broken by a
/// minimum spanning forest on branch voxel counts, which drops the longest
/// branch of each cycle. Spurs are pruned: terminal branches with fewer than
/// [`SPUR_MIN_VOXELS`] interior voxels, or shorter than [`SPUR_RADIUS_FACTOR`]
/// local radii when the skeleton carries radii.
pub fn build_tree(skel: &Skeleton, root_hint: [usize; 3]) -> Result<VesselTree> {
    let geom = skel.geom;
    let vox = &skel.voxels;
    if vox.is_empty() {
        return Ok(VesselTree::empty(geom));
    }
    let n = vox.len();
    let nbrs: Vec<Vec<usize>> = par::map_indices(n, |i| {
        OFFSETS_26
            .iter()
            .filter_map(|&o| neighbor(&geom, vox[i], o))
            .filter_map(|v| vox.binary_search(&v).ok())
            .collect()
    });

    const NONE: usize = usize::MAX;
    let mut g = Graph { nodes: Vec::new(), edges: Vec::new() };
    let mut node_of = vec![NONE; n];
    for i in 0..n {
        if node_of[i] != NONE || nbrs[i].len() == 2 {
            continue;
        }
        if nbrs[i].len() < 3 {
            node_of[i] = g.add_node(vec![vox[i]]);
            continue;
        }
        let id = g.nodes.len();
        let mut members = vec![i];
        node_of[i] = id;
        let mut k = 0;
        while k < members.len() {
            for &j in &nbrs[members[k]] {
                if node_of[j] == NONE && nbrs[j].len() >= 3 {
                    node_of[j] = id;
                    members.push(j);
                }
            }
            k += 1;
        }
        members.sort_unstable();
        g.add_node(members.iter().map(|&m| vox[m]).collect());
    }

    let mut visited = vec![false; n];
    let mut node_pairs = BTreeSet::new();
    let mut trace_from = |g: &mut Graph, node_of: &mut Vec<usize>, visited: &mut Vec<bool>, u: usize| {
        for &v in &nbrs[u] {
            if node_of[v] != NONE {
                let (a, b) = (node_of[u], node_of[v]);
                if a != b && node_pairs.insert((a.min(b), a.max(b))) {
                    g.edges.push(Some(Edge { a: a.min(b), b: a.max(b), path: vec![] }));
                }
                continue;
            }
            if visited[v] {
                continue;
            }
            let (mut prev, mut cur) = (u, v);
            let mut path = vec![vox[v]];
            visited[v] = true;
            let end = loop {
                let next = *nbrs[cur].iter().find(|&&x| x != prev).unwrap();
                if node_of[next] != NONE {
                    break next;
                }
                visited[next] = true;
                path.push(vox[next]);
                prev = cur;
                cur = next;
            };
            let (a, b) = (node_of[u], node_of[end]);
            if a == b && path.len() <= 2 {
                let nv = g.nodes[a].as_mut().unwrap();
                nv.extend(path);
                nv.sort_unstable();
            } else {
                g.edges.push(Some(Edge { a, b, path }));
            }
        }
    };
    for u in 0..n {
        if node_of[u] != NONE {
            trace_from(&mut g, &mut node_of, &mut visited, u);
        }
    }
    // Closed loops without any junction or endpoint.
    for u in 0..n {
        if node_of[u] == NONE && !visited[u] {
            visited[u] = true;
            node_of[u] = g.add_node(vec![vox[u]]);
            trace_from(&mut g, &mut node_of, &mut visited, u);
        }
    }

    let mut pruned = Vec::new();

    // Minimum spanning forest by voxel count.
    let mut order: Vec<usize> = (0..g.edges.len()).collect();
    order.sort_by_key(|&e| g.edges[e].as_ref().unwrap().path.len());
    let mut uf = UnionFind::new(g.nodes.len());
    for e in order {
        let (a, b) = {
            let ed = g.edges[e].as_ref().unwrap();
            (ed.a, ed.b)
        };
        if !uf.union(a, b) {
            pruned.extend(g.edges[e].take().unwrap().path);
        }
    }

    g.merge_chains(None);
    loop {
        let mut degree: Vec<usize> = g.incident().iter().map(Vec::len).collect();
        let mut removed = false;
        for e in 0..g.edges.len() {
            let Some(ed) = g.edges[e].as_ref() else { continue };
            let (tip, base) = if degree[ed.a] == 1 { (ed.a, ed.b) } else { (ed.b, ed.a) };
            if degree[tip] != 1 || degree[base] < 3 {
                continue;
            }
            let short = || {
                let (Some(bv), Some(tv)) = (g.nodes[base].as_ref(), g.nodes[tip].as_ref()) else { return false };
                spur_by_radius(skel, &ed.path, bv, tv)
            };
            if ed.path.len() < SPUR_MIN_VOXELS || short() {
                let ed = g.edges[e].take().unwrap();
                pruned.extend(ed.path);
                pruned.extend(g.nodes[tip].take().unwrap());
                degree[tip] = 0;
                degree[base] -= 1;
                removed = true;
            }
        }
        if !removed {
            break;
        }
        g.merge_chains(None);
    }

    // Root: the remaining skeleton voxel nearest the hint.
    let hint = root_hint.map(|c| c as f64);
    let d2 = |v: usize| {
        let c = geom.coords(v);
        (0..3).map(|k| (c[k] as f64 - hint[k]).powi(2)).sum::<f64>()
    };
    let mut best: Option<(f64, usize, Option<(usize, usize)>, usize)> = None;
    let mut consider = |d: f64, v: usize, on_edge: Option<(usize, usize)>, node: usize| {
        if best.is_none_or(|(bd, bv, _, _)| d < bd || (d == bd && v < bv)) {
            best = Some((d, v, on_edge, node));
        }
    };
    for (k, nv) in g.nodes.iter().enumerate() {
        for &v in nv.iter().flatten() {
            consider(d2(v), v, None, k);
        }
    }
    for (e, ed) in g.edges.iter().enumerate() {
        for (p, &v) in ed.iter().flat_map(|ed| ed.path.iter().enumerate()) {
            consider(d2(v), v, Some((e, p)), NONE);
        }
    }
    let (_, _, on_edge, node) = best.expect("skeleton has voxels");
    // The hint is checked against the skeleton before pruning, so a hint on
    // a pruned spur still attaches to the nearest remaining voxel.
    let bd = vox.iter().map(|&v| d2(v)).fold(f64::INFINITY, f64::min);
    if bd.sqrt() > ROOT_HINT_RADIUS {
        return Err(Error::invalid(format!(
            "root hint {root_hint:?} is {:.2} voxels from the nearest skeleton voxel (limit {ROOT_HINT_RADIUS})",
            bd.sqrt()
        )));
    }
    let root = match on_edge {
        None => node,
        Some((e, p)) => {
            let ed = g.edges[e].take().unwrap();
            let r = g.add_node(vec![ed.path[p]]);
            g.edges.push(Some(Edge { a: ed.a, b: r, path: ed.path[..p].to_vec() }));
            g.edges.push(Some(Edge { a: r, b: ed.b, path: ed.path[p + 1..].to_vec() }));
            r
        }
    };

    orient(geom, g, root, hint, pruned)
}

fn orient(geom: Geometry, g: Graph, root: usize, hint: [f64; 3], mut pruned: Vec<usize>) -> Result<VesselTree> {
    let inc = g.incident();
    let live: Vec<usize> = (0..g.nodes.len()).filter(|&k| g.nodes[k].is_some()).collect();
    let mut uf = UnionFind::new(g.nodes.len());
    for ed in g.edges.iter().flatten() {
        uf.union(ed.a, ed.b);
    }
    let first_voxel = |k: usize| g.nodes[k].as_ref().unwrap()[0];
    let d2 = |k: usize| {
        let c = geom.coords(first_voxel(k));
        (0..3).map(|a| (c[a] as f64 - hint[a]).powi(2)).sum::<f64>()
    };

    // Component roots: the hinted root first, then other components ordered
    // by their smallest voxel, each rooted at its endpoint nearest the hint.
    let root_comp = uf.find(root);
    let is_tip = |k: usize| inc[k].len() <= 1;
    let prefer = |a: usize, b: usize| {
        (!is_tip(a), d2(a), first_voxel(a)).partial_cmp(&(!is_tip(b), d2(b), first_voxel(b)))
            == Some(std::cmp::Ordering::Less)
    };
    let mut comps: Vec<(usize, usize)> = Vec::new();
    for &k in &live {
        let c = uf.find(k);
        if c == root_comp {
            continue;
        }
        match comps.iter_mut().find(|(cc, _)| *cc == c) {
            Some(entry) => {
                if prefer(k, entry.1) {
                    entry.1 = k;
                }
            }
            None => comps.push((c, k)),
        }
    }
    comps.sort_by_key(|&(c, _)| live.iter().filter(|&&k| uf.find(k) == c).map(|&k| first_voxel(k)).min().unwrap());
    let mut root_list = vec![root];
    root_list.extend(comps.iter().map(|&(_, k)| k));

    let mut new_id = vec![usize::MAX; g.nodes.len()];
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut branches: Vec<Branch> = Vec::new();
    let mut roots = Vec::new();
    for (comp, &r) in root_list.iter().enumerate() {
        let mut queue = VecDeque::new();
        new_id[r] = nodes.len();
        roots.push(nodes.len());
        nodes.push(make_node(&geom, g.nodes[r].as_ref().unwrap(), NodeKind::Root, inc[r].len(), comp));
        queue.push_back((r, None::<usize>, 0u32));
        while let Some((k, incoming, gen)) = queue.pop_front() {
            let mut out: Vec<usize> = inc[k].iter().copied().filter(|&e| Some(e) != incoming).collect();
            out.sort_by_key(|&e| {
                let ed = g.edges[e].as_ref().unwrap();
                let other = if ed.a == k { ed.b } else { ed.a };
                ed.path.first().copied().unwrap_or_else(|| first_voxel(other))
            });
            for e in out {
                let ed = g.edges[e].as_ref().unwrap();
                let (child, path) =
                    if ed.a == k { (ed.b, ed.path.clone()) } else { (ed.a, ed.path.iter().rev().copied().collect()) };
                if new_id[child] != usize::MAX {
                    continue;
                }
                let kind = if inc[child].len() >= 3 { NodeKind::Junction } else { NodeKind::Endpoint };
                new_id[child] = nodes.len();
                nodes.push(make_node(&geom, g.nodes[child].as_ref().unwrap(), kind, inc[child].len(), comp));
                branches.push(Branch {
                    parent_node: new_id[k],
                    child_node: new_id[child],
                    voxels: path,
                    generation: gen,
                    parent: None,
                    component: comp,
                });
                queue.push_back((child, Some(e), gen + 1));
            }
        }
    }
    // Parent branch of each branch: the branch ending at its parent node.
    let mut ending_at = vec![None; nodes.len()];
    for (b, br) in branches.iter().enumerate() {
        ending_at[br.child_node] = Some(b);
    }
    for br in branches.iter_mut() {
        br.parent = ending_at[br.parent_node];
    }
    pruned.sort_unstable();
    let forest = roots.len() > 1;
    Ok(VesselTree { geom, nodes, branches, roots, pruned, forest })
}

fn make_node(geom: &Geometry, voxels: &[usize], kind: NodeKind, degree: usize, component: usize) -> TreeNode {
    let pts: Vec<[usize; 3]> = voxels.iter().map(|&v| geom.coords(v)).collect();
    let centroid: [f64; 3] = std::array::from_fn(|a| pts.iter().map(|p| p[a] as f64).sum::<f64>() / pts.len() as f64);
    let position = *pts
        .iter()
        .min_by(|p, q| {
            let d = |c: &[usize; 3]| (0..3).map(|a| (c[a] as f64 - centroid[a]).powi(2)).sum::<f64>();
            d(p).total_cmp(&d(q))
        })
        .unwrap();
    TreeNode { position, voxels: voxels.to_vec(), kind, degree, component }
}
