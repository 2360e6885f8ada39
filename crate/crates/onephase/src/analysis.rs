//! Quantitative geometry of computed minimizers: free boundary extraction,
//! gradient and growth bounds, density / perimeter / nondegeneracy profiles,
//! the interface measure, blow-up rescalings and the slope condition.
//!
//! Everything here reads a [`Solution`] without mutating it. Distances to the
//! free boundary are measured against the extracted sub-cell polyline, not
//! the node phase mask.

use crate::error::{Error, Result};
use crate::exec;
use crate::geom::{self, Vec2};
use crate::grid::{
    cell_gradient_unchecked, cell_mean, interpolate, Grid, GridFunction, NodeMask,
};
use crate::kernel::{fbc_slope_alpha, energy_balance_slope, grad_of_form, Kernel};
use crate::minimizer::Solution;
use crate::report::Report;

/// Interface between the positive and zero phases: sub-cell points on
/// phase-changing edges, unit normals oriented into `{u > 0}`, and marching
/// squares connectivity (2-D).
#[derive(Debug, Clone, Default)]
pub struct FreeBoundary {
    pub points: Vec<Vec2>,
    pub normals: Vec<Vec2>,
    pub segments: Vec<[usize; 2]>,
}

impl FreeBoundary {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance from `x` to the interface polyline (to the points when no
    /// segments exist).
    pub fn distance_to(&self, x: Vec2) -> f64 {
        if self.points.is_empty() {
            return f64::INFINITY;
        }
        if self.segments.is_empty() {
            return self
                .points
                .iter()
                .map(|p| geom::dist(*p, x))
                .fold(f64::INFINITY, f64::min);
        }
        let mut d = f64::INFINITY;
        for seg in &self.segments {
            d = d.min(point_segment_distance(x, self.points[seg[0]], self.points[seg[1]]));
        }
        d
    }

    pub fn nearest_point(&self, x: Vec2) -> Option<usize> {
        let mut best = None;
        let mut bd = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = geom::dist(*p, x);
            if d < bd {
                bd = d;
                best = Some(i);
            }
        }
        best
    }

    /// Total polyline length inside the ball `B_r(z)`.
    pub fn length_in_ball(&self, z: Vec2, r: f64) -> f64 {
        let mut total = 0.0;
        for seg in &self.segments {
            total += segment_length_in_ball(self.points[seg[0]], self.points[seg[1]], z, r);
        }
        total
    }
}

fn point_segment_distance(x: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = geom::sub(b, a);
    let len2 = geom::dot(ab, ab);
    if len2 == 0.0 {
        return geom::dist(x, a);
    }
    let t = (geom::dot(geom::sub(x, a), ab) / len2).clamp(0.0, 1.0);
    geom::dist(x, geom::add(a, geom::scale(ab, t)))
}

fn segment_length_in_ball(a: Vec2, b: Vec2, z: Vec2, r: f64) -> f64 {
    let d = geom::sub(b, a);
    let len = geom::norm(d);
    if len == 0.0 {
        return 0.0;
    }
    // |a + t d - z|^2 = r^2 over t in [0, 1]
    let f = geom::sub(a, z);
    let qa = geom::dot(d, d);
    let qb = 2.0 * geom::dot(f, d);
    let qc = geom::dot(f, f) - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc <= 0.0 {
        return if qc <= 0.0 { len } else { 0.0 };
    }
    let sq = disc.sqrt();
    let t1 = ((-qb - sq) / (2.0 * qa)).max(0.0);
    let t2 = ((-qb + sq) / (2.0 * qa)).min(1.0);
    if t2 <= t1 {
        0.0
    } else {
        (t2 - t1) * len
    }
}

/// Radius-indexed measurements around a center.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub center: Vec2,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

/// Euler-Lagrange residual, defined only away from the free boundary.
#[derive(Debug, Clone)]
pub struct ResidualField {
    pub residual: GridFunction,
    pub applicable: Vec<bool>,
}

impl ResidualField {
    pub fn sup_applicable(&self) -> f64 {
        self.residual
            .values
            .iter()
            .zip(&self.applicable)
            .filter(|(_, a)| **a)
            .map(|(v, _)| v.abs())
            .fold(0.0, f64::max)
    }

    pub fn count_applicable(&self) -> usize {
        self.applicable.iter().filter(|a| **a).count()
    }
}

/// Sub-cell interface point on the edge between a positive node and a zero
/// node: linear extrapolation of u from the positive side to its zero, with
/// nodal-interpolation fallback. Returns the offset from the zero node along
/// the edge, in [0, h]. (u at the zero node is exactly 0, so the fallback
/// places the crossing at the zero node itself.)
fn edge_crossing_offset(u: &[f64], h: f64, pos: usize, beyond: Option<usize>) -> f64 {
    let up = u[pos];
    if let Some(b) = beyond {
        let slope = (u[b] - up) / h;
        if slope > 1e-12 {
            return (h - up / slope).clamp(0.0, h);
        }
    }
    0.0
}

/// Marching squares interface of the phase field with sub-cell positions and
/// least-squares normals. Returns the empty boundary when either phase is
/// missing among interior nodes.
pub fn extract_free_boundary(sol: &Solution) -> FreeBoundary {
    let g = &sol.u.grid;
    let u = &sol.u.values;
    let phase = &sol.phase;
    let mut has_pos = false;
    let mut has_zero = false;
    for k in 0..g.num_nodes() {
        if !g.is_boundary_node(k) {
            if phase[k] {
                has_pos = true;
            } else {
                has_zero = true;
            }
        }
    }
    if !has_pos || !has_zero {
        return FreeBoundary::default();
    }
    if g.dim == 1 {
        return extract_free_boundary_1d(g, u, phase);
    }

    let nx = g.nodes[0];
    let ny = g.nodes[1];
    let h = g.h;
    let mut points = Vec::new();
    let mut edge_dirs: Vec<Vec2> = Vec::new();
    // edge key -> point index; horizontal edges then vertical edges
    let mut hpoint = vec![usize::MAX; (nx - 1) * ny];
    let mut vpoint = vec![usize::MAX; nx * (ny - 1)];

    let mut add_edge_point = |a: usize, b: usize, horizontal: bool, slot: usize,
                              points: &mut Vec<Vec2>,
                              edge_dirs: &mut Vec<Vec2>|
     -> usize {
        // a is the lower-index node of the edge
        let (zero, pos) = if phase[a] { (b, a) } else { (a, b) };
        let pa = g.node_point(zero);
        let dir = geom::normalize(geom::sub(g.node_point(pos), pa));
        // the node one step beyond `pos`, away from `zero`
        let (pi, pj) = g.node_coords(pos);
        let (zi, zj) = g.node_coords(zero);
        let bi = pi as isize + (pi as isize - zi as isize);
        let bj = pj as isize + (pj as isize - zj as isize);
        let beyond = if bi >= 0 && bj >= 0 && (bi as usize) < nx && (bj as usize) < ny {
            Some(g.node_index(bi as usize, bj as usize))
        } else {
            None
        };
        let t = edge_crossing_offset(u, h, pos, beyond);
        let pt = geom::add(pa, geom::scale(dir, t));
        points.push(pt);
        edge_dirs.push(dir);
        let idx = points.len() - 1;
        if horizontal {
            hpoint[slot] = idx;
        } else {
            vpoint[slot] = idx;
        }
        idx
    };

    for j in 0..ny {
        for i in 0..nx - 1 {
            let a = g.node_index(i, j);
            let b = g.node_index(i + 1, j);
            if phase[a] != phase[b] {
                add_edge_point(a, b, true, j * (nx - 1) + i, &mut points, &mut edge_dirs);
            }
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let a = g.node_index(i, j);
            let b = g.node_index(i, j + 1);
            if phase[a] != phase[b] {
                add_edge_point(a, b, false, j * nx + i, &mut points, &mut edge_dirs);
            }
        }
    }

    // per-cell connectivity
    let mut segments = Vec::new();
    for cj in 0..ny - 1 {
        for ci in 0..nx - 1 {
            let bottom = hpoint[cj * (nx - 1) + ci];
            let top = hpoint[(cj + 1) * (nx - 1) + ci];
            let left = vpoint[cj * nx + ci];
            let right = vpoint[cj * nx + ci + 1];
            let crossed = [bottom, right, top, left];
            let n_crossed = crossed.iter().filter(|p| **p != usize::MAX).count();
            match n_crossed {
                2 => {
                    let mut it = crossed.iter().filter(|p| **p != usize::MAX);
                    let a = *it.next().unwrap();
                    let b = *it.next().unwrap();
                    segments.push([a, b]);
                }
                4 => {
                    // saddle: resolve by the cell-center phase
                    let c = g.cell_index(ci, cj);
                    let center_positive = cell_mean(g, u, c) > 0.0;
                    let sw_positive = phase[g.node_index(ci, cj)];
                    // pair edges so the region matching the center phase
                    // stays connected across the cell
                    if center_positive == sw_positive {
                        segments.push([crossed[0], crossed[1]]);
                        segments.push([crossed[2], crossed[3]]);
                    } else {
                        segments.push([crossed[0], crossed[3]]);
                        segments.push([crossed[1], crossed[2]]);
                    }
                }
                _ => {}
            }
        }
    }

    // least-squares normals over 3h neighborhoods, oriented into {u > 0}
    let radius = 3.0 * h;
    let normals: Vec<Vec2> = exec::map_indices(points.len(), |i| {
        let pi = points[i];
        let mut nbr = Vec::new();
        for (k, pk) in points.iter().enumerate() {
            if geom::dist(*pk, pi) <= radius {
                nbr.push(k);
            }
        }
        if nbr.len() < 3 {
            return edge_dirs[i];
        }
        let mut mx = 0.0;
        let mut my = 0.0;
        for &k in &nbr {
            mx += points[k][0];
            my += points[k][1];
        }
        mx /= nbr.len() as f64;
        my /= nbr.len() as f64;
        let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
        for &k in &nbr {
            let dx = points[k][0] - mx;
            let dy = points[k][1] - my;
            cxx += dx * dx;
            cxy += dx * dy;
            cyy += dy * dy;
        }
        // principal direction of the covariance = local tangent
        let tr = cxx + cyy;
        let det = cxx * cyy - cxy * cxy;
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        let l1 = tr / 2.0 + disc;
        let tangent = if cxy.abs() > 1e-30 {
            geom::normalize([l1 - cyy, cxy])
        } else if cxx >= cyy {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        };
        let mut normal = geom::perp(tangent);
        if geom::dot(normal, edge_dirs[i]) < 0.0 {
            normal = geom::scale(normal, -1.0);
        }
        geom::normalize(normal)
    });

    FreeBoundary { points, normals, segments }
}

fn extract_free_boundary_1d(g: &Grid, u: &[f64], phase: &[bool]) -> FreeBoundary {
    let nx = g.nodes[0];
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for i in 0..nx - 1 {
        let a = g.node_index(i, 0);
        let b = g.node_index(i + 1, 0);
        if phase[a] != phase[b] {
            let (zero, pos) = if phase[a] { (b, a) } else { (a, b) };
            let sign = if phase[b] { 1.0 } else { -1.0 };
            let (pi, _) = g.node_coords(pos);
            let (zi, _) = g.node_coords(zero);
            let bi = pi as isize + (pi as isize - zi as isize);
            let beyond = if bi >= 0 && (bi as usize) < nx { Some(bi as usize) } else { None };
            let t = edge_crossing_offset(u, g.h, pos, beyond);
            let pz = g.node_point(zero);
            points.push([pz[0] + sign * t * (pi as f64 - zi as f64).signum(), 0.0]);
            normals.push([sign, 0.0]);
        }
    }
    FreeBoundary { points, normals, segments: Vec::new() }
}

/// Sup norms of u and of the cell gradients over a subdomain, plus the
/// gradient sup over cells within 4h of the free boundary.
pub fn norm_report(sol: &Solution, subdomain: &NodeMask) -> Result<Report> {
    let g = &sol.u.grid;
    if *subdomain.grid != **g {
        return Err(Error::GridMismatch("subdomain mask grid differs".into()));
    }
    if subdomain.count() == 0 {
        return Err(Error::Empty("norm_report subdomain"));
    }
    for k in 0..g.num_nodes() {
        if subdomain.bits[k] && g.distance_to_hull(g.node_point(k)) < 2.0 * g.h * (1.0 - 1e-9) {
            return Err(Error::Degenerate(
                "norm_report subdomain must keep a 2h margin from the hull".into(),
            ));
        }
    }
    let fb = extract_free_boundary(sol);
    let mut sup_u = 0.0f64;
    for k in 0..g.num_nodes() {
        if subdomain.bits[k] {
            sup_u = sup_u.max(sol.u.values[k]);
        }
    }
    let mut sup_grad = 0.0f64;
    let mut sup_grad_near_fb = 0.0f64;
    for c in 0..g.num_cells() {
        if !subdomain.cell_inside(c) {
            continue;
        }
        let gr = geom::norm(cell_gradient_unchecked(g, &sol.u.values, c));
        sup_grad = sup_grad.max(gr);
        if !fb.is_empty() && fb.distance_to(g.cell_center(c)) <= 4.0 * g.h {
            sup_grad_near_fb = sup_grad_near_fb.max(gr);
        }
    }
    let mut rep = Report::new();
    rep.push_scalar("sup_u", sup_u);
    rep.push_scalar("sup_grad", sup_grad);
    rep.push_scalar("sup_grad_near_fb", sup_grad_near_fb);
    rep.push_flag("fb_empty", fb.is_empty());
    Ok(rep)
}

/// Discrete divergence of A(X, grad_h u) minus `m f u^(m-1)`, defined at
/// interior nodes whose full stencil is positive-phase and farther than 2h
/// from the free boundary; elsewhere marked not applicable.
pub fn euler_lagrange_residual(sol: &Solution, kernel: &Kernel) -> Result<ResidualField> {
    let g = &sol.u.grid;
    let u = &sol.u.values;
    let fb = extract_free_boundary(sol);
    let p = kernel.params.p;
    let m = kernel.params.m;
    let n = g.num_nodes();
    let mut residual = vec![0.0; n];
    let mut applicable = vec![false; n];

    // cell fluxes A(X_c, grad_h u)
    let mut flux = Vec::with_capacity(g.num_cells());
    for c in 0..g.num_cells() {
        let a = kernel.eval_a(g.cell_center(c))?;
        flux.push(grad_of_form(kernel.form, p, &a, cell_gradient_unchecked(g, u, c)));
    }

    for k in 0..n {
        if g.is_boundary_node(k) {
            continue;
        }
        let (i, j) = g.node_coords(k);
        // full stencil positive-phase
        let mut all_pos = true;
        if g.dim == 1 {
            for di in -1i64..=1 {
                let ii = (i as i64 + di) as usize;
                if !sol.phase[g.node_index(ii, 0)] {
                    all_pos = false;
                }
            }
        } else {
            'outer: for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let ii = (i as i64 + di) as usize;
                    let jj = (j as i64 + dj) as usize;
                    if !sol.phase[g.node_index(ii, jj)] {
                        all_pos = false;
                        break 'outer;
                    }
                }
            }
        }
        if !all_pos {
            continue;
        }
        let pt = g.node_point(k);
        if !fb.is_empty() && fb.distance_to(pt) <= 2.0 * g.h {
            continue;
        }
        let div = if g.dim == 1 {
            let cl = i - 1;
            let cr = i;
            (flux[cr][0] - flux[cl][0]) / g.h
        } else {
            let c_sw = g.cell_index(i - 1, j - 1);
            let c_se = g.cell_index(i, j - 1);
            let c_nw = g.cell_index(i - 1, j);
            let c_ne = g.cell_index(i, j);
            let right = 0.5 * (flux[c_se][0] + flux[c_ne][0]);
            let left = 0.5 * (flux[c_sw][0] + flux[c_nw][0]);
            let top = 0.5 * (flux[c_nw][1] + flux[c_ne][1]);
            let bottom = 0.5 * (flux[c_sw][1] + flux[c_se][1]);
            (right - left) / g.h + (top - bottom) / g.h
        };
        let f = kernel.eval_f(pt)?;
        residual[k] = div - m * f * u[k].powf(m - 1.0);
        applicable[k] = true;
    }
    Ok(ResidualField {
        residual: GridFunction { grid: g.clone(), values: residual },
        applicable,
    })
}

/// Min over positive-phase nodes within distance `d0` of the free boundary
/// of `u(X) / dist(X, FB)`.
pub fn linear_growth_constant(sol: &Solution, subdomain: &NodeMask, d0: f64) -> Result<f64> {
    let g = &sol.u.grid;
    if d0 < 4.0 * g.h {
        return Err(Error::Degenerate(format!("d0 = {d0} must be at least 4h = {}", 4.0 * g.h)));
    }
    let fb = extract_free_boundary(sol);
    if fb.is_empty() {
        return Err(Error::Empty("free boundary"));
    }
    let mut best = f64::INFINITY;
    let mut seen = false;
    for k in 0..g.num_nodes() {
        if !subdomain.bits[k] || !sol.phase[k] {
            continue;
        }
        let d = fb.distance_to(g.node_point(k));
        if d > 0.0 && d <= d0 {
            seen = true;
            best = best.min(sol.u.values[k] / d);
        }
    }
    if !seen {
        return Err(Error::Empty("no positive nodes within d0 of the free boundary"));
    }
    Ok(best)
}

fn check_radii(g: &Grid, z: Vec2, radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::Empty("radii"));
    }
    let dist = g.distance_to_hull(z);
    for w in radii.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Degenerate("radii must be strictly increasing".into()));
        }
    }
    for &r in radii {
        if r < 4.0 * g.h {
            return Err(Error::BallTooSmall { r, floor: 4.0 * g.h });
        }
        if r >= dist {
            return Err(Error::BallNearBoundary { x: z[0], y: z[1], r });
        }
    }
    Ok(())
}

/// `sup_{B_r(Z)} u / r` over the given radii.
pub fn nondegeneracy_profile(sol: &Solution, z: Vec2, radii: &[f64]) -> Result<RadialProfile> {
    let g = &sol.u.grid;
    check_radii(g, z, radii)?;
    let values = radii
        .iter()
        .map(|&r| {
            let mut sup = 0.0f64;
            for k in 0..g.num_nodes() {
                if geom::dist(g.node_point(k), z) <= r {
                    sup = sup.max(sol.u.values[k]);
                }
            }
            sup / r
        })
        .collect();
    Ok(RadialProfile { center: z, radii: radii.to_vec(), values })
}

/// Volume fraction of the positive phase in `B_r(Z)`, in [0, 1].
pub fn density_profile(sol: &Solution, z: Vec2, radii: &[f64]) -> Result<RadialProfile> {
    let g = &sol.u.grid;
    check_radii(g, z, radii)?;
    let omega_n = if g.dim == 2 { std::f64::consts::PI } else { 2.0 };
    let hn = g.h.powi(g.dim as i32);
    let values = radii
        .iter()
        .map(|&r| {
            let mut count = 0usize;
            for c in 0..g.num_cells() {
                if geom::dist(g.cell_center(c), z) <= r && cell_mean(g, &sol.u.values, c) > 0.0 {
                    count += 1;
                }
            }
            (count as f64 * hn) / (omega_n * r.powi(g.dim as i32))
        })
        .collect();
    Ok(RadialProfile { center: z, radii: radii.to_vec(), values })
}

/// The interface measure tested against a mollified ball indicator:
/// `Lambda(zeta) = -int A(X, grad_h u) . grad_h zeta
///                 - int m f u^(m-1) chi_{u>0} zeta`,
/// with `zeta` a multilinear ramp of width 2h supported on `B_r(center)`.
pub fn lambda_measure(sol: &Solution, kernel: &Kernel, center: Vec2, r: f64) -> Result<f64> {
    let g = &sol.u.grid;
    if r < 2.0 * g.h {
        return Err(Error::BallTooSmall { r, floor: 2.0 * g.h });
    }
    if g.distance_to_hull(center) < r + 4.0 * g.h {
        return Err(Error::BallNearBoundary { x: center[0], y: center[1], r });
    }
    let zeta = GridFunction::from_fn(g.clone(), |x| {
        ((r - geom::dist(x, center)) / (2.0 * g.h)).clamp(0.0, 1.0)
    });
    let p = kernel.params.p;
    let m = kernel.params.m;
    let hn = g.h.powi(g.dim as i32);
    let mut total = 0.0;
    for c in 0..g.num_cells() {
        let xc = g.cell_center(c);
        let zmean = cell_mean(g, &zeta.values, c);
        let zgrad = cell_gradient_unchecked(g, &zeta.values, c);
        if zmean == 0.0 && zgrad == [0.0, 0.0] {
            continue;
        }
        let a = kernel.eval_a(xc)?;
        let flux = grad_of_form(kernel.form, p, &a, cell_gradient_unchecked(g, &sol.u.values, c));
        let mut cell = -geom::dot(flux, zgrad);
        let umean = cell_mean(g, &sol.u.values, c);
        if umean > 0.0 {
            let f = kernel.eval_f(xc)?;
            if f != 0.0 {
                cell -= m * f * umean.powf(m - 1.0) * zmean;
            }
        }
        total += cell * hn;
    }
    Ok(total)
}

/// Free boundary length inside `B_r(Z)` scaled by `r^(n-1)`.
pub fn perimeter_profile(sol: &Solution, z: Vec2, radii: &[f64]) -> Result<RadialProfile> {
    let g = &sol.u.grid;
    check_radii(g, z, radii)?;
    let fb = extract_free_boundary(sol);
    let values = radii
        .iter()
        .map(|&r| {
            let len = if g.dim == 2 {
                fb.length_in_ball(z, r)
            } else {
                fb.points.iter().filter(|p| geom::dist(**p, z) <= r).count() as f64
            };
            len / r.powi(g.dim as i32 - 1)
        })
        .collect();
    Ok(RadialProfile { center: z, radii: radii.to_vec(), values })
}

/// Number of reference nodes per axis in blow-up rescalings.
pub const BLOW_UP_NODES: usize = 64;

/// Rescaled restriction `v(X) = u(Z + r X) / r` resampled onto the fixed
/// reference grid over `[-1, 1]^n`.
pub fn blow_up(sol: &Solution, z: Vec2, r: f64) -> Result<GridFunction> {
    let g = &sol.u.grid;
    if g.distance_to_hull(z) < r {
        return Err(Error::BallNearBoundary { x: z[0], y: z[1], r });
    }
    let reference = Grid::build(
        g.dim,
        [-1.0, if g.dim == 2 { -1.0 } else { 0.0 }],
        [2.0, if g.dim == 2 { 2.0 } else { 0.0 }],
        [BLOW_UP_NODES, if g.dim == 2 { BLOW_UP_NODES } else { 1 }],
    )?;
    let mut vals = vec![0.0; reference.num_nodes()];
    for k in 0..reference.num_nodes() {
        let xr = reference.node_point(k);
        let world = geom::add(z, geom::scale(xr, r));
        vals[k] = interpolate(&sol.u, world)? / r;
    }
    Ok(GridFunction { grid: reference, values: vals })
}

/// Directional difference quotient of u along `nu` over the span [2h, 6h]
/// from `x0`; the measured free boundary slope.
pub fn measured_slope(u: &GridFunction, x0: Vec2, nu: Vec2) -> Result<f64> {
    let h = u.grid.h;
    let near = interpolate(u, geom::add(x0, geom::scale(nu, 2.0 * h)))?;
    let far = interpolate(u, geom::add(x0, geom::scale(nu, 6.0 * h)))?;
    Ok((far - near) / (4.0 * h))
}

/// Per-point comparison of the measured free boundary slope against the
/// reduced-boundary formula and the energy-balance normalization, with the
/// best-fit constant kappa in `<A(X, grad u), grad u> = kappa Q`.
pub fn fbc_check(sol: &Solution, kernel: &Kernel) -> Result<Report> {
    let fb = extract_free_boundary(sol);
    if fb.is_empty() {
        return Err(Error::Empty("free boundary"));
    }
    let p = kernel.params.p;
    let stride = fb.points.len().div_ceil(200);
    let mut rows = Vec::new();
    let mut sum_measured = 0.0;
    let mut sum_ratio_formula = 0.0;
    let mut sum_ratio_oracle = 0.0;
    let mut sum_kappa = 0.0;
    for i in (0..fb.points.len()).step_by(stride) {
        let x0 = fb.points[i];
        let nu = fb.normals[i];
        let (Ok(slope), Ok(alpha), Ok(oracle)) = (
            measured_slope(&sol.u, x0, nu),
            fbc_slope_alpha(kernel, x0, nu),
            energy_balance_slope(kernel, x0, nu),
        ) else {
            continue;
        };
        if slope <= 0.0 {
            continue;
        }
        let gq = crate::kernel::eval_kernel_g(kernel, x0, nu)?;
        let q = kernel.eval_q(x0)?;
        let kappa = p * gq * slope.powf(p) / q;
        rows.push(vec![x0[0], x0[1], nu[0], nu[1], slope, alpha, oracle, kappa]);
        sum_measured += slope;
        sum_ratio_formula += slope / alpha;
        sum_ratio_oracle += slope / oracle;
        sum_kappa += kappa;
    }
    if rows.is_empty() {
        return Err(Error::Empty("no measurable free boundary points"));
    }
    let n = rows.len() as f64;
    let mut rep = Report::new();
    rep.push_scalar("points_measured", n);
    rep.push_scalar("slope_measured_mean", sum_measured / n);
    rep.push_scalar("ratio_to_formula_mean", sum_ratio_formula / n);
    rep.push_scalar("ratio_to_oracle_mean", sum_ratio_oracle / n);
    rep.push_scalar("kappa_best_fit", sum_kappa / n);
    rep.push_table(
        "per_point",
        vec![
            "x".into(),
            "y".into(),
            "nx".into(),
            "ny".into(),
            "slope_measured".into(),
            "alpha_formula".into(),
            "slope_oracle".into(),
            "kappa".into(),
        ],
        rows,
    );
    Ok(rep)
}
