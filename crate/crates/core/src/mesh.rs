//! Triangulations of the closed unit disc with marked boundary points at the
//! n-th roots of unity.
//!
//! Meshes are generated from a fan by longest-edge (Rivara) bisection driven by
//! a size function graded toward the marked points. Boundary midpoints are
//! placed on the circle at the mid-angle, so every boundary node lies exactly
//! on the unit circle and carries its polar angle.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::io::Write;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Marker for boundary nodes that are not marked points.
pub const UNMARKED: i64 = -1;

#[derive(Debug, Clone)]
pub struct DiscMesh {
    pub n: usize,
    pub target_h: f64,
    pub grading_exponent: f64,
    pub nodes: Vec<[f64; 2]>,
    /// Positively oriented index triples.
    pub triangles: Vec<[usize; 3]>,
    /// Counterclockwise boundary cycle starting at the node at 1.
    pub boundary: Vec<usize>,
    /// Polar angle in `[0, 2π)` of each entry of `boundary`.
    pub boundary_angle: Vec<f64>,
    /// `marked[0]` is the node at 1 (carrying y), `marked[k]` the node at `e^{2πik/n}`.
    pub marked: Vec<usize>,
    /// Boundary positions of the marked nodes.
    pub marked_position: Vec<usize>,
    /// Arc label per node: 0 in the interior, otherwise `1..=n`. A marked node
    /// carries the label of the arc that ends at it.
    pub arc_label: Vec<usize>,
    /// Marked index per node, `UNMARKED` for all others.
    pub marked_k: Vec<i64>,
    pub areas: Vec<f64>,
    /// Gradients of the three barycentric basis functions per triangle.
    pub grads: Vec<[[f64; 2]; 3]>,
    /// Owning triangle and local edge index of boundary edge `i`
    /// (from `boundary[i]` to `boundary[i + 1]`).
    pub boundary_edge_triangle: Vec<usize>,
    pub stiffness: CsrMatrix,
    pub lumped_mass: Vec<f64>,
}

/// Degree-2 exact triangle rule (edge midpoints) and two-point Gauss rule on
/// boundary edges. Weights are relative to triangle area / edge length.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub triangle_points: Vec<[f64; 3]>,
    pub triangle_weights: Vec<f64>,
    pub edge_points: Vec<f64>,
    pub edge_weights: Vec<f64>,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        let g = 0.5 / 3f64.sqrt();
        QuadratureRule {
            triangle_points: vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
            triangle_weights: vec![1.0 / 3.0; 3],
            edge_points: vec![0.5 - g, 0.5 + g],
            edge_weights: vec![0.5, 0.5],
        }
    }
}

impl QuadratureRule {
    pub fn integrate<F: Fn([f64; 2]) -> f64>(&self, mesh: &DiscMesh, f: F) -> f64 {
        let mut total = 0.0;
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let mut s = 0.0;
            for (b, w) in self.triangle_points.iter().zip(&self.triangle_weights) {
                let x = mesh.barycentric_point(tri, b);
                s += w * f(x);
            }
            total += s * mesh.areas[t];
        }
        total
    }

    pub fn integrate_boundary<F: Fn([f64; 2]) -> f64>(&self, mesh: &DiscMesh, f: F) -> f64 {
        let nb = mesh.boundary.len();
        let mut total = 0.0;
        for i in 0..nb {
            let a = mesh.nodes[mesh.boundary[i]];
            let b = mesh.nodes[mesh.boundary[(i + 1) % nb]];
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            for (x, w) in self.edge_points.iter().zip(&self.edge_weights) {
                total += w * len * f([a[0] + x * (b[0] - a[0]), a[1] + x * (b[1] - a[1])]);
            }
        }
        total
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b { (a, b) } else { (b, a) }
}

fn unit(theta: f64) -> [f64; 2] {
    [theta.cos(), theta.sin()]
}

/// Angle of the marked point `k` (0 for y).
pub fn marked_angle(n: usize, k: usize) -> f64 {
    TAU * (k as f64 / n as f64)
}

/// Arc containing the open boundary angle `theta`.
pub fn arc_of_angle(n: usize, theta: f64) -> usize {
    let k = (theta / TAU * n as f64).floor() as usize + 1;
    k.clamp(1, n)
}

/// Working triangulation used during bisection.
struct Builder {
    nodes: Vec<[f64; 2]>,
    node_angle: Vec<Option<f64>>,
    tris: Vec<[usize; 3]>,
    edges: HashMap<(usize, usize), [usize; 2]>,
}

const NONE: usize = usize::MAX;

impl Builder {
    fn new(nodes: Vec<[f64; 2]>, node_angle: Vec<Option<f64>>, tris: Vec<[usize; 3]>) -> Self {
        let mut b = Builder { nodes, node_angle, tris: Vec::new(), edges: HashMap::new() };
        for t in tris {
            b.push_triangle(t);
        }
        b
    }

    fn push_triangle(&mut self, t: [usize; 3]) -> usize {
        let id = self.tris.len();
        self.tris.push(t);
        for e in 0..3 {
            self.attach(edge_key(t[e], t[(e + 1) % 3]), id);
        }
        id
    }

    fn attach(&mut self, key: (usize, usize), id: usize) {
        let slot = self.edges.entry(key).or_insert([NONE, NONE]);
        if slot[0] == NONE {
            slot[0] = id;
        } else {
            slot[1] = id;
        }
    }

    fn detach(&mut self, key: (usize, usize), id: usize) {
        if let Some(slot) = self.edges.get_mut(&key) {
            if slot[0] == id {
                slot[0] = slot[1];
                slot[1] = NONE;
            } else if slot[1] == id {
                slot[1] = NONE;
            }
            if slot[0] == NONE {
                self.edges.remove(&key);
            }
        }
    }

    fn neighbor(&self, t: usize, key: (usize, usize)) -> Option<usize> {
        let slot = self.edges[&key];
        let other = if slot[0] == t { slot[1] } else { slot[0] };
        (other != NONE).then_some(other)
    }

    /// Longest edge with ties broken by the smaller sorted vertex pair.
    fn longest(&self, t: usize) -> (usize, usize) {
        let tri = self.tris[t];
        let mut best: Option<(f64, (usize, usize))> = None;
        for e in 0..3 {
            let key = edge_key(tri[e], tri[(e + 1) % 3]);
            let len = dist(self.nodes[key.0], self.nodes[key.1]);
            best = match best {
                None => Some((len, key)),
                Some((bl, bk)) if len > bl || (len == bl && key < bk) => Some((len, key)),
                keep => keep,
            };
        }
        best.unwrap().1
    }

    fn midpoint(&mut self, key: (usize, usize)) -> usize {
        let boundary = self.edges[&key][1] == NONE;
        let id = self.nodes.len();
        match (boundary, self.node_angle[key.0], self.node_angle[key.1]) {
            (true, Some(a), Some(b)) => {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let mid = if hi - lo > std::f64::consts::PI { (lo + TAU + hi) * 0.5 } else { (lo + hi) * 0.5 };
                let mid = if mid >= TAU { mid - TAU } else { mid };
                self.nodes.push(unit(mid));
                self.node_angle.push(Some(mid));
            }
            _ => {
                let (a, b) = (self.nodes[key.0], self.nodes[key.1]);
                self.nodes.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                self.node_angle.push(None);
            }
        }
        id
    }

    fn bisect_edge(&mut self, key: (usize, usize)) {
        let owners: Vec<usize> = self.edges[&key].iter().copied().filter(|&t| t != NONE).collect();
        let m = self.midpoint(key);
        for t in owners {
            let tri = self.tris[t];
            let e = (0..3).find(|&e| edge_key(tri[e], tri[(e + 1) % 3]) == key).unwrap();
            let (a, b, c) = (tri[e], tri[(e + 1) % 3], tri[(e + 2) % 3]);
            self.detach(key, t);
            self.detach(edge_key(b, c), t);
            self.detach(edge_key(c, a), t);
            self.tris[t] = [a, m, c];
            for k in [edge_key(a, m), edge_key(m, c), edge_key(c, a)] {
                self.attach(k, t);
            }
            self.push_triangle([m, b, c]);
        }
    }

    /// One bisection at the end of the longest-edge propagation path of `t`.
    fn lepp_step(&mut self, t: usize) {
        let mut cur = t;
        loop {
            let e = self.longest(cur);
            match self.neighbor(cur, e) {
                Some(nb) if self.longest(nb) != e => cur = nb,
                _ => {
                    self.bisect_edge(e);
                    return;
                }
            }
        }
    }
}

fn size_at(x: [f64; 2], corners: &[[f64; 2]], h: f64, gamma: f64) -> f64 {
    let d = corners.iter().map(|c| dist(x, *c)).fold(f64::INFINITY, f64::min);
    h * d.max(h.powf(gamma)).powf(1.0 - 1.0 / gamma).min(1.0)
}

/// Graded triangulation of the disc with `n` marked boundary points.
pub fn build_mesh(n: usize, target_h: f64, grading_exponent: f64) -> Result<DiscMesh> {
    if n < 2 {
        return Err(Error::InfeasibleMesh(format!("need at least 2 marked points, got {n}")));
    }
    if !(target_h > 0.0 && target_h < 1.0) {
        return Err(Error::InfeasibleMesh(format!("target_h must lie in (0, 1), got {target_h}")));
    }
    if !(grading_exponent >= 1.0) {
        return Err(Error::InfeasibleMesh(format!("grading exponent must be at least 1, got {grading_exponent}")));
    }
    let chord = 2.0 * (std::f64::consts::PI / n as f64).sin();
    if target_h >= chord {
        return Err(Error::InfeasibleMesh(format!(
            "target_h = {target_h} cannot resolve {n} arcs (marked points are {chord:.4} apart)"
        )));
    }
    let per_arc = 2usize.max(8usize.div_ceil(n));
    let k_total = n * per_arc;
    let mut nodes = vec![[0.0, 0.0]];
    let mut angles = vec![None];
    for j in 0..k_total {
        let theta = TAU * (j as f64 / k_total as f64);
        nodes.push(unit(theta));
        angles.push(Some(theta));
    }
    let tris = (0..k_total).map(|j| [0, 1 + j, 1 + (j + 1) % k_total]).collect();
    let mut b = Builder::new(nodes, angles, tris);
    let corners: Vec<[f64; 2]> = (0..n).map(|k| unit(marked_angle(n, k))).collect();
    let is_corner = |_: &Builder, v: usize| v <= k_total && v >= 1 && (v - 1).is_multiple_of(per_arc);

    let needs = |b: &Builder, t: usize| -> bool {
        let tri = b.tris[t];
        (0..3).any(|e| {
            let (p, q) = (tri[e], tri[(e + 1) % 3]);
            let (x, y) = (b.nodes[p], b.nodes[q]);
            let mid = [0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1])];
            dist(x, y) > size_at(mid, &corners, target_h, grading_exponent)
                || (is_corner(b, p) && is_corner(b, q) && b.edges[&edge_key(p, q)][1] == NONE)
        })
    };
    let mut changed = true;
    while changed {
        changed = false;
        let mut t = 0;
        while t < b.tris.len() {
            while needs(&b, t) {
                b.lepp_step(t);
                changed = true;
            }
            t += 1;
        }
    }
    let marked_nodes: Vec<usize> = (0..n).map(|k| 1 + k * per_arc).collect();
    DiscMesh::assemble(n, target_h, grading_exponent, b.nodes, b.node_angle, b.tris, marked_nodes)
}

impl DiscMesh {
    fn assemble(
        n: usize,
        target_h: f64,
        grading_exponent: f64,
        nodes: Vec<[f64; 2]>,
        node_angle: Vec<Option<f64>>,
        triangles: Vec<[usize; 3]>,
        marked: Vec<usize>,
    ) -> Result<Self> {
        let mut boundary: Vec<(f64, usize)> =
            node_angle.iter().enumerate().filter_map(|(i, a)| a.map(|a| (a, i))).collect();
        boundary.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let boundary_angle: Vec<f64> = boundary.iter().map(|x| x.0).collect();
        let boundary: Vec<usize> = boundary.iter().map(|x| x.1).collect();
        let nv = nodes.len();
        let mut arc_label = vec![0usize; nv];
        let mut marked_k = vec![UNMARKED; nv];
        for (pos, &v) in boundary.iter().enumerate() {
            arc_label[v] = arc_of_angle(n, boundary_angle[pos]);
        }
        for (k, &v) in marked.iter().enumerate() {
            marked_k[v] = k as i64;
            arc_label[v] = if k == 0 { n } else { k };
        }
        let mut position = vec![usize::MAX; nv];
        for (pos, &v) in boundary.iter().enumerate() {
            position[v] = pos;
        }
        let marked_position = marked.iter().map(|&v| position[v]).collect();

        let mut areas = Vec::with_capacity(triangles.len());
        let mut grads = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let [a, b, c] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
            let area = signed_area(a, b, c);
            let inv = 0.5 / area;
            let g = [
                [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv],
                [(c[1] - a[1]) * inv, (a[0] - c[0]) * inv],
                [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
            ];
            areas.push(area);
            grads.push(g);
        }

        let nb = boundary.len();
        let mut edge_owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for e in 0..3 {
                edge_owner.insert((tri[e], tri[(e + 1) % 3]), t);
            }
        }
        let mut boundary_edge_triangle = Vec::with_capacity(nb);
        for i in 0..nb {
            let key = (boundary[i], boundary[(i + 1) % nb]);
            let t = edge_owner.get(&key).copied().ok_or_else(|| {
                Error::InfeasibleMesh(format!("boundary edge {key:?} has no positively oriented owner"))
            })?;
            boundary_edge_triangle.push(t);
        }

        let mut triplets = Vec::with_capacity(9 * triangles.len());
        let mut lumped_mass = vec![0.0; nv];
        for (t, tri) in triangles.iter().enumerate() {
            let g = &grads[t];
            for i in 0..3 {
                lumped_mass[tri[i]] += areas[t] / 3.0;
                for j in 0..3 {
                    triplets.push((tri[i], tri[j], areas[t] * (g[i][0] * g[j][0] + g[i][1] * g[j][1])));
                }
            }
        }
        let stiffness = CsrMatrix::from_triplets(nv, &triplets);

        let mesh = DiscMesh {
            n,
            target_h,
            grading_exponent,
            nodes,
            triangles,
            boundary,
            boundary_angle,
            marked,
            marked_position,
            arc_label,
            marked_k,
            areas,
            grads,
            boundary_edge_triangle,
            stiffness,
            lumped_mass,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        let mut set = std::collections::HashSet::new();
        for tri in &self.triangles {
            for e in 0..3 {
                set.insert(edge_key(tri[e], tri[(e + 1) % 3]));
            }
        }
        set.len()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.arc_label[v] != 0
    }

    pub fn is_marked(&self, v: usize) -> bool {
        self.marked_k[v] != UNMARKED
    }

    pub fn max_edge_length(&self) -> f64 {
        let mut h = 0.0f64;
        for tri in &self.triangles {
            for e in 0..3 {
                h = h.max(dist(self.nodes[tri[e]], self.nodes[tri[(e + 1) % 3]]));
            }
        }
        h
    }

    pub fn polygon_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn barycentric_point(&self, tri: &[usize; 3], b: &[f64; 3]) -> [f64; 2] {
        let mut x = [0.0; 2];
        for i in 0..3 {
            x[0] += b[i] * self.nodes[tri[i]][0];
            x[1] += b[i] * self.nodes[tri[i]][1];
        }
        x
    }

    /// Arc label of the boundary edge starting at boundary position `i`.
    pub fn boundary_edge_arc(&self, i: usize) -> usize {
        let nb = self.boundary.len();
        let a = self.boundary_angle[i];
        let b = if i + 1 == nb { TAU } else { self.boundary_angle[i + 1] };
        arc_of_angle(self.n, 0.5 * (a + b))
    }

    /// Structural checks: orientation, Euler characteristic, label partition
    /// and exact marked positions.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InfeasibleMesh(msg));
        for (t, a) in self.areas.iter().enumerate() {
            if !(*a > 0.0) {
                return bad(format!("triangle {t} has non-positive area {a:e}"));
            }
        }
        let v = self.nodes.len() as i64;
        let e = self.num_edges() as i64;
        let f = self.triangles.len() as i64;
        if v - e + f != 1 {
            return bad(format!("Euler characteristic V - E + F = {} (expected 1)", v - e + f));
        }
        for (k, &node) in self.marked.iter().enumerate() {
            let theta = marked_angle(self.n, k);
            if self.nodes[node] != unit(theta) {
                return bad(format!("marked node {k} is not at e^(2πi{k}/{})", self.n));
            }
        }
        let nb = self.boundary.len();
        let mut last = 0;
        for i in 0..nb {
            let label = self.boundary_edge_arc(i);
            if label < last {
                return bad("arc labels are not ordered counterclockwise".into());
            }
            last = label;
            let next = self.boundary[(i + 1) % nb];
            if !self.is_marked(next) && self.arc_label[next] != label {
                return bad(format!("boundary node {next} does not carry the label of its edges"));
            }
        }
        Ok(())
    }

    /// Splits every triangle into four through its edge midpoints; boundary
    /// midpoints move onto the circle.
    pub fn refine(&self) -> Result<DiscMesh> {
        let mut nodes = self.nodes.clone();
        let mut angle: Vec<Option<f64>> = vec![None; nodes.len()];
        for (pos, &v) in self.boundary.iter().enumerate() {
            angle[v] = Some(self.boundary_angle[pos]);
        }
        let nb = self.boundary.len();
        let mut boundary_mid = HashMap::new();
        for i in 0..nb {
            let a = self.boundary_angle[i];
            let b = if i + 1 == nb { TAU } else { self.boundary_angle[i + 1] };
            boundary_mid.insert(edge_key(self.boundary[i], self.boundary[(i + 1) % nb]), 0.5 * (a + b));
        }
        let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid_of = |a: usize, b: usize, nodes: &mut Vec<[f64; 2]>, angle: &mut Vec<Option<f64>>| -> usize {
            let key = edge_key(a, b);
            *mids.entry(key).or_insert_with(|| {
                let id = nodes.len();
                if let Some(&th) = boundary_mid.get(&key) {
                    nodes.push(unit(th));
                    angle.push(Some(th));
                } else {
                    let (x, y) = (nodes[a], nodes[b]);
                    nodes.push([0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1])]);
                    angle.push(None);
                }
                id
            })
        };
        let mut tris = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = mid_of(a, b, &mut nodes, &mut angle);
            let bc = mid_of(b, c, &mut nodes, &mut angle);
            let ca = mid_of(c, a, &mut nodes, &mut angle);
            tris.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        DiscMesh::assemble(
            self.n,
            0.5 * self.target_h,
            self.grading_exponent,
            nodes,
            angle,
            tris,
            self.marked.clone(),
        )
    }

    pub fn write_nodes_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["id", "s", "t", "arc_label", "marked_k"])?;
        for (i, x) in self.nodes.iter().enumerate() {
            wr.write_record(&[
                i.to_string(),
                format!("{:.17e}", x[0]),
                format!("{:.17e}", x[1]),
                self.arc_label[i].to_string(),
                self.marked_k[i].to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_triangles_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["a", "b", "c"])?;
        for t in &self.triangles {
            wr.write_record(&[t[0].to_string(), t[1].to_string(), t[2].to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Bucket grid for point location.
    pub fn locator(&self) -> Locator<'_> {
        Locator::new(self)
    }
}

pub struct Locator<'a> {
    mesh: &'a DiscMesh,
    cells: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> Locator<'a> {
    fn new(mesh: &'a DiscMesh) -> Self {
        let cells = ((mesh.triangles.len() as f64).sqrt().ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); cells * cells];
        let cell = |x: f64| (((x + 1.0) * 0.5 * cells as f64).floor().max(0.0) as usize).min(cells - 1);
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let xs = tri.map(|v| mesh.nodes[v][0]);
            let ys = tri.map(|v| mesh.nodes[v][1]);
            let (x0, x1) = (cell(xs.iter().cloned().fold(f64::MAX, f64::min)), cell(xs.iter().cloned().fold(f64::MIN, f64::max)));
            let (y0, y1) = (cell(ys.iter().cloned().fold(f64::MAX, f64::min)), cell(ys.iter().cloned().fold(f64::MIN, f64::max)));
            for i in x0..=x1 {
                for j in y0..=y1 {
                    buckets[j * cells + i].push(t);
                }
            }
        }
        Locator { mesh, cells, buckets }
    }

    /// Triangle containing `x` and barycentric coordinates; points slightly
    /// outside the mesh snap to the best candidate in their bucket.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let cell = |v: f64| (((v + 1.0) * 0.5 * self.cells as f64).floor().max(0.0) as usize).min(self.cells - 1);
        let bucket = &self.buckets[cell(x[1]) * self.cells + cell(x[0])];
        let mut best: Option<(f64, usize, [f64; 3])> = None;
        for &t in bucket {
            let tri = self.mesh.triangles[t];
            let [a, b, c] = tri.map(|v| self.mesh.nodes[v]);
            let area = self.mesh.areas[t];
            let l = [signed_area(x, b, c) / area, signed_area(a, x, c) / area, signed_area(a, b, x) / area];
            let worst = l.iter().cloned().fold(f64::MAX, f64::min);
            if best.as_ref().is_none_or(|bst| worst > bst.0) {
                best = Some((worst, t, l));
            }
        }
        match best {
            Some((w, t, l)) if w > -1e-6 => {
                let clipped = l.map(|v| v.max(0.0));
                let s: f64 = clipped.iter().sum();
                Some((t, clipped.map(|v| v / s)))
            }
            _ => None,
        }
    }
}
