//! Rectangular uniform grids in one or two dimensions, grid functions with
//! Dirichlet traces, cell-centered gradients, multilinear interpolation,
//! midpoint quadrature and ball masks.
//!
//! Nodes are stored row-major (`idx = j * nodes_x + i`); cells are indexed the
//! same way over the `(nodes_x - 1) x (nodes_y - 1)` cell lattice. Gradients
//! live at cell centers and come from the multilinear element on the cell, so
//! they are exact for affine nodal data.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{self, Vec2};

/// Uniform rectangular discrete domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub origin: Vec2,
    pub extent: Vec2,
    /// Node counts per axis; `nodes[1] == 1` in 1-D.
    pub nodes: [usize; 2],
    /// Uniform spacing, identical on both axes.
    pub h: f64,
}

impl Grid {
    /// Builds a uniform grid. Requires at least 3 nodes per active axis and a
    /// positive extent; both axes must produce the same spacing.
    pub fn build(dim: usize, origin: Vec2, extent: Vec2, nodes: [usize; 2]) -> Result<Arc<Grid>> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        let mut nodes = nodes;
        let mut extent = extent;
        if dim == 1 {
            nodes[1] = 1;
            extent[1] = 0.0;
        }
        for ax in 0..dim {
            if nodes[ax] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {ax} needs at least 3 nodes, got {}",
                    nodes[ax]
                )));
            }
            if !(extent[ax] > 0.0) || !extent[ax].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "axis {ax} extent must be positive and finite, got {}",
                    extent[ax]
                )));
            }
        }
        if !geom::is_finite(origin) {
            return Err(Error::NonFinite("grid origin"));
        }
        let h = extent[0] / (nodes[0] - 1) as f64;
        if dim == 2 {
            let hy = extent[1] / (nodes[1] - 1) as f64;
            if (hy - h).abs() > 1e-9 * h.max(hy) {
                return Err(Error::InvalidGrid(format!(
                    "spacing must be uniform across axes (hx = {h}, hy = {hy})"
                )));
            }
        }
        Ok(Arc::new(Grid { dim, origin, extent, nodes, h }))
    }

    /// Unit-square (or unit-interval) helper used pervasively in tests.
    pub fn unit(dim: usize, nodes_per_axis: usize) -> Result<Arc<Grid>> {
        Grid::build(dim, [0.0, 0.0], [1.0, 1.0], [nodes_per_axis, nodes_per_axis])
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes[0] * self.nodes[1]
    }

    pub fn cells_per_axis(&self) -> [usize; 2] {
        [self.nodes[0] - 1, if self.dim == 2 { self.nodes[1] - 1 } else { 1 }]
    }

    pub fn num_cells(&self) -> usize {
        let c = self.cells_per_axis();
        c[0] * c[1]
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.nodes[0] + i
    }

    pub fn node_coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nodes[0], idx / self.nodes[0])
    }

    pub fn node_point(&self, idx: usize) -> Vec2 {
        let (i, j) = self.node_coords(idx);
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    pub fn cell_index(&self, ci: usize, cj: usize) -> usize {
        cj * self.cells_per_axis()[0] + ci
    }

    pub fn cell_coords(&self, cell: usize) -> (usize, usize) {
        let cx = self.cells_per_axis()[0];
        (cell % cx, cell / cx)
    }

    pub fn cell_center(&self, cell: usize) -> Vec2 {
        let (ci, cj) = self.cell_coords(cell);
        let x = self.origin[0] + (ci as f64 + 0.5) * self.h;
        let y = if self.dim == 2 { self.origin[1] + (cj as f64 + 0.5) * self.h } else { 0.0 };
        [x, y]
    }

    /// Corner node indices of a cell: `[sw, se]` in 1-D, `[sw, se, nw, ne]` in 2-D.
    pub fn cell_corners(&self, cell: usize) -> ([usize; 4], usize) {
        let (ci, cj) = self.cell_coords(cell);
        if self.dim == 1 {
            ([self.node_index(ci, 0), self.node_index(ci + 1, 0), 0, 0], 2)
        } else {
            (
                [
                    self.node_index(ci, cj),
                    self.node_index(ci + 1, cj),
                    self.node_index(ci, cj + 1),
                    self.node_index(ci + 1, cj + 1),
                ],
                4,
            )
        }
    }

    pub fn is_boundary_node(&self, idx: usize) -> bool {
        let (i, j) = self.node_coords(idx);
        if self.dim == 1 {
            i == 0 || i == self.nodes[0] - 1
        } else {
            i == 0 || j == 0 || i == self.nodes[0] - 1 || j == self.nodes[1] - 1
        }
    }

    /// Flags per node marking exactly the outermost layer.
    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.num_nodes()).map(|k| self.is_boundary_node(k)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&k| !self.is_boundary_node(k)).collect()
    }

    /// True when `x` lies inside (or on) the convex hull of the nodes, with a
    /// small tolerance against roundoff.
    pub fn contains(&self, x: Vec2) -> bool {
        let tol = 1e-9 * self.h;
        let mut ok = x[0] >= self.origin[0] - tol && x[0] <= self.origin[0] + self.extent[0] + tol;
        if self.dim == 2 {
            ok = ok
                && x[1] >= self.origin[1] - tol
                && x[1] <= self.origin[1] + self.extent[1] + tol;
        }
        ok
    }

    /// Distance from `x` to the domain boundary (hull faces).
    pub fn distance_to_hull(&self, x: Vec2) -> f64 {
        let dx = (x[0] - self.origin[0]).min(self.origin[0] + self.extent[0] - x[0]);
        if self.dim == 1 {
            dx
        } else {
            dx.min((x[1] - self.origin[1]).min(self.origin[1] + self.extent[1] - x[1]))
        }
    }

    fn describe(&self) -> String {
        format!(
            "dim={} origin=({}, {}) extent=({}, {}) nodes=({}, {}) h={}",
            self.dim,
            self.origin[0],
            self.origin[1],
            self.extent[0],
            self.extent[1],
            self.nodes[0],
            self.nodes[1],
            self.h
        )
    }
}

/// Public description string used in solution metadata.
pub fn grid_description(grid: &Grid) -> String {
    grid.describe()
}

/// Builds a uniform grid; see [`Grid::build`].
pub fn build_grid(dim: usize, origin: Vec2, extent: Vec2, nodes: [usize; 2]) -> Result<Arc<Grid>> {
    Grid::build(dim, origin, extent, nodes)
}

/// Nodal real values over a grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.num_nodes();
        GridFunction { grid, values: vec![0.0; n] }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(Vec2) -> f64) -> Self {
        let values = (0..grid.num_nodes()).map(|k| f(grid.node_point(k))).collect();
        GridFunction { grid, values }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    fn check_same_grid(&self, other: &Grid) -> Result<()> {
        if *self.grid != *other {
            return Err(Error::GridMismatch("grid functions live on different grids".into()));
        }
        Ok(())
    }
}

/// Gradient of the multilinear element at the center of `cell`; exact for
/// affine nodal data. Second component is zero in 1-D.
pub fn cell_gradient(u: &GridFunction, cell: usize) -> Result<Vec2> {
    let g = &u.grid;
    if cell >= g.num_cells() {
        return Err(Error::IndexOutOfRange(cell, format!("{} cells", g.num_cells())));
    }
    Ok(cell_gradient_unchecked(g, &u.values, cell))
}

#[inline]
pub(crate) fn cell_gradient_unchecked(g: &Grid, values: &[f64], cell: usize) -> Vec2 {
    let (corners, n) = g.cell_corners(cell);
    if n == 2 {
        [(values[corners[1]] - values[corners[0]]) / g.h, 0.0]
    } else {
        let sw = values[corners[0]];
        let se = values[corners[1]];
        let nw = values[corners[2]];
        let ne = values[corners[3]];
        [(se - sw + ne - nw) / (2.0 * g.h), (nw - sw + ne - se) / (2.0 * g.h)]
    }
}

/// Mean of the cell corner values; this is the multilinear interpolant at the
/// cell center and the midpoint-quadrature sample used everywhere.
#[inline]
pub(crate) fn cell_mean(g: &Grid, values: &[f64], cell: usize) -> f64 {
    let (corners, n) = g.cell_corners(cell);
    let mut s = 0.0;
    for c in corners.iter().take(n) {
        s += values[*c];
    }
    s / n as f64
}

/// Multilinear interpolation of `u` at `x`; rejects points outside the hull.
pub fn interpolate(u: &GridFunction, x: Vec2) -> Result<f64> {
    let g = &u.grid;
    if !geom::is_finite(x) {
        return Err(Error::NonFinite("interpolation point"));
    }
    if !g.contains(x) {
        return Err(Error::OutsideHull(x[0], x[1]));
    }
    let cx = g.cells_per_axis();
    let tx = (x[0] - g.origin[0]) / g.h;
    let i = (tx.floor() as isize).clamp(0, cx[0] as isize - 1) as usize;
    let fx = (tx - i as f64).clamp(0.0, 1.0);
    if g.dim == 1 {
        let a = u.values[g.node_index(i, 0)];
        let b = u.values[g.node_index(i + 1, 0)];
        return Ok(a + (b - a) * fx);
    }
    let ty = (x[1] - g.origin[1]) / g.h;
    let j = (ty.floor() as isize).clamp(0, cx[1] as isize - 1) as usize;
    let fy = (ty - j as f64).clamp(0.0, 1.0);
    let sw = u.values[g.node_index(i, j)];
    let se = u.values[g.node_index(i + 1, j)];
    let nw = u.values[g.node_index(i, j + 1)];
    let ne = u.values[g.node_index(i + 1, j + 1)];
    Ok(sw * (1.0 - fx) * (1.0 - fy) + se * fx * (1.0 - fy) + nw * (1.0 - fx) * fy + ne * fx * fy)
}

/// Cell mask over a grid, with the counting-measure volume `count * h^n`.
#[derive(Debug, Clone)]
pub struct CellMask {
    pub grid: Arc<Grid>,
    pub bits: Vec<bool>,
}

impl CellMask {
    pub fn all(grid: Arc<Grid>) -> Self {
        let n = grid.num_cells();
        CellMask { grid, bits: vec![true; n] }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.grid.h.powi(self.grid.dim as i32)
    }
}

/// Mask of cells whose centers lie within distance `r` of `center`.
/// Radii below `2h` are refused as unresolvable.
pub fn ball_mask(grid: &Arc<Grid>, center: Vec2, r: f64) -> Result<CellMask> {
    if !(r.is_finite() && geom::is_finite(center)) {
        return Err(Error::NonFinite("ball_mask arguments"));
    }
    if r < 2.0 * grid.h {
        return Err(Error::BallTooSmall { r, floor: 2.0 * grid.h });
    }
    let bits = (0..grid.num_cells())
        .map(|c| geom::dist(grid.cell_center(c), center) <= r)
        .collect();
    Ok(CellMask { grid: grid.clone(), bits })
}

/// Midpoint-rule integral of `u` over the masked cells.
pub fn integrate(u: &GridFunction, mask: &CellMask) -> Result<f64> {
    u.check_same_grid(&mask.grid)?;
    let g = &u.grid;
    let hn = g.h.powi(g.dim as i32);
    let mut s = 0.0;
    for (c, on) in mask.bits.iter().enumerate() {
        if *on {
            s += cell_mean(g, &u.values, c);
        }
    }
    Ok(s * hn)
}

/// Node mask used to carve out subdomains for the analysis operations.
#[derive(Debug, Clone)]
pub struct NodeMask {
    pub grid: Arc<Grid>,
    pub bits: Vec<bool>,
}

impl NodeMask {
    pub fn all(grid: Arc<Grid>) -> Self {
        let n = grid.num_nodes();
        NodeMask { grid, bits: vec![true; n] }
    }

    /// Nodes at distance at least `margin` from the hull.
    pub fn interior_margin(grid: Arc<Grid>, margin: f64) -> Self {
        let bits = (0..grid.num_nodes())
            .map(|k| grid.distance_to_hull(grid.node_point(k)) >= margin - 1e-12 * grid.h)
            .collect();
        NodeMask { grid, bits }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// A cell belongs to the node mask when all of its corners do.
    pub fn cell_inside(&self, cell: usize) -> bool {
        let (corners, n) = self.grid.cell_corners(cell);
        corners.iter().take(n).all(|c| self.bits[*c])
    }
}

/// Dirichlet trace; meaningful only on boundary nodes.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub grid: Arc<Grid>,
    /// Full-length nodal vector; entries at interior nodes are ignored.
    pub phi: Vec<f64>,
}

impl BoundaryData {
    /// Samples `f` on boundary nodes. The trace must be nonnegative, finite
    /// and bounded, matching the standing assumptions on the Dirichlet data.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(Vec2) -> f64) -> Result<Self> {
        let mut phi = vec![0.0; grid.num_nodes()];
        for k in 0..grid.num_nodes() {
            if grid.is_boundary_node(k) {
                let v = f(grid.node_point(k));
                if !v.is_finite() {
                    return Err(Error::InvalidBoundary(format!(
                        "trace is not finite at node {k}"
                    )));
                }
                if v < 0.0 {
                    return Err(Error::InvalidBoundary(format!(
                        "trace must be nonnegative, got {v} at node {k}"
                    )));
                }
                phi[k] = v;
            }
        }
        Ok(BoundaryData { grid, phi })
    }

    pub fn sup(&self) -> f64 {
        let mut m = 0.0f64;
        for k in 0..self.grid.num_nodes() {
            if self.grid.is_boundary_node(k) {
                m = m.max(self.phi[k]);
            }
        }
        m
    }
}
