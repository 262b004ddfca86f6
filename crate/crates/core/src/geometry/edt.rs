//! Exact squared Euclidean distance transform on index lattices.

use super::grid::Grid;
use super::raster::CellMask;

/// Squared distance, in index units, from every site to the nearest seed.
/// Sites with no seed anywhere get `f64::INFINITY`.
pub fn edt_squared(dims: [usize; 3], seeds: &[bool]) -> Vec<f64> {
    let n = dims[0] * dims[1] * dims[2];
    assert_eq!(seeds.len(), n);
    let mut f: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let strides = [1, dims[0], dims[0] * dims[1]];
    let maxlen = *dims.iter().max().unwrap();
    let mut line = vec![0.0; maxlen];
    let mut out = vec![0.0; maxlen];
    let mut v = vec![0usize; maxlen];
    let mut z = vec![0.0; maxlen + 1];
    for axis in 0..3 {
        let len = dims[axis];
        if len == 1 {
            continue;
        }
        let stride = strides[axis];
        for start in 0..n {
            if (start / stride) % len != 0 {
                continue;
            }
            for k in 0..len {
                line[k] = f[start + k * stride];
            }
            lower_envelope(&line[..len], &mut out[..len], &mut v, &mut z);
            for k in 0..len {
                f[start + k * stride] = out[k];
            }
        }
    }
    f
}

// One dimensional squared distance transform of a sampled function.
fn lower_envelope(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    let mut first = None;
    for q in 0..n {
        if f[q].is_finite() {
            first = Some(q);
            break;
        }
    }
    let Some(q0) = first else {
        d.iter_mut().for_each(|x| *x = f64::INFINITY);
        return;
    };
    v[0] = q0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in q0 + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * (qf - p));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        d[q] = dq * dq + f[v[k]];
    }
}

/// Largest distance from a cell center of `omega` to the nearest false cell
/// center or to the grid box boundary. Zero for an empty mask.
pub fn geometric_inradius(omega: &CellMask) -> f64 {
    let g = &omega.grid;
    let seeds: Vec<bool> = omega.bits.iter().map(|b| !b).collect();
    let d2 = edt_squared(g.cells, &seeds);
    let mut best = 0.0f64;
    for (i, &inside) in omega.bits.iter().enumerate() {
        if !inside {
            continue;
        }
        let c = g.cell_coords(i);
        let mut wall = f64::INFINITY;
        for d in 0..g.dim {
            wall = wall.min(c[d] as f64 + 0.5).min(g.cells[d] as f64 - c[d] as f64 - 0.5);
        }
        best = best.max(d2[i].sqrt().min(wall));
    }
    best * g.h
}

/// Squared index distance from each node to the nearest node that is a corner
/// of a cell outside `omega`. Nodes on the grid box boundary count as such.
pub fn node_distance_to_complement(omega: &CellMask) -> Vec<f64> {
    let g: &Grid = &omega.grid;
    let mut seeds = vec![false; g.n_nodes()];
    for (node, s) in seeds.iter_mut().enumerate() {
        if g.is_boundary_node(node) {
            *s = true;
        }
    }
    let corners = corner_offsets(g);
    for (cell, &b) in omega.bits.iter().enumerate() {
        if !b {
            let base = g.cell_base_node(cell);
            for &o in &corners {
                seeds[base + o] = true;
            }
        }
    }
    edt_squared(g.node_dims(), &seeds)
}

/// Node index offsets of the corners of a cell, relative to its base node.
/// Corner `k` has bit `d` of `k` set when it is on the upper side of axis `d`.
pub fn corner_offsets(g: &Grid) -> Vec<usize> {
    let n = g.node_dims();
    let strides = [1, n[0], n[0] * n[1]];
    (0..1usize << g.dim)
        .map(|k| (0..g.dim).filter(|d| k >> d & 1 == 1).map(|d| strides[d]).sum())
        .collect()
}
