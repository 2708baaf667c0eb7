//! Uniform grids and a zero-set scan for scalar functions on a box.
//!
//! The scan collects points near `f = 0` from three sources: grid nodes
//! where `|f|` is below the threshold, bisection on grid edges where `f`
//! changes sign, and Gauss–Newton refinement started from small local
//! minima of `|f|` (which catches zeros of even order that never change
//! sign). It also records which grid cells touch the zero set.

use crate::expr::Interval;

/// Node counts per axis over a box, axis 0 varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    bounds: Vec<Interval>,
    counts: Vec<usize>,
}

/// Expands a one-entry count list to every axis.
pub fn expand_counts(requested: &[usize], dim: usize) -> Vec<usize> {
    match requested {
        [n] => vec![*n; dim],
        _ => requested.to_vec(),
    }
}

impl Grid {
    /// `n` nodes on every axis.
    pub fn new(bounds: &[Interval], n: usize) -> Self {
        Self::with_counts(bounds, &vec![n; bounds.len()])
    }

    pub fn with_counts(bounds: &[Interval], counts: &[usize]) -> Self {
        assert!(!bounds.is_empty());
        assert_eq!(bounds.len(), counts.len(), "one node count per axis");
        assert!(counts.iter().all(|&n| n >= 2), "a grid needs at least two nodes per axis");
        Grid { bounds: bounds.to_vec(), counts: counts.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn node_count(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn cells_on_axis(&self, axis: usize) -> usize {
        self.counts[axis] - 1
    }

    pub fn cell_count(&self) -> usize {
        self.counts.iter().map(|n| n - 1).product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.bounds[axis].width() / (self.counts[axis] - 1) as f64
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let iv = self.bounds[axis];
        let n = self.counts[axis];
        if i + 1 == n {
            iv.hi
        } else {
            iv.lo + iv.width() * i as f64 / (n - 1) as f64
        }
    }

    pub fn node(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().enumerate().map(|(a, &i)| self.coord(a, i)).collect()
    }

    /// Flat node index (axis 0 fastest) to per-axis indices.
    pub fn node_multi(&self, mut flat: usize) -> Vec<usize> {
        self.counts
            .iter()
            .map(|&n| {
                let i = flat % n;
                flat /= n;
                i
            })
            .collect()
    }

    /// Flat cell index from per-axis cell indices.
    pub fn cell_flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).rev().fold(0, |acc, (&i, &n)| acc * (n - 1) + i)
    }

    pub fn cell_multi(&self, mut flat: usize) -> Vec<usize> {
        self.counts
            .iter()
            .map(|&n| {
                let i = flat % (n - 1);
                flat /= n - 1;
                i
            })
            .collect()
    }

    /// Cell containing `point` (clamped to the box).
    pub fn cell_of(&self, point: &[f64]) -> usize {
        let idx: Vec<usize> = point
            .iter()
            .enumerate()
            .map(|(a, &x)| {
                let t = (x - self.bounds[a].lo) / self.spacing(a);
                (t.floor().max(0.0) as usize).min(self.cells_on_axis(a) - 1)
            })
            .collect();
        self.cell_flat(&idx)
    }

    /// Lower corner of a cell.
    pub fn cell_corner(&self, flat: usize) -> Vec<f64> {
        self.node(&self.cell_multi(flat))
    }

    /// Steps a per-axis node index to the next node; wraps to all zeros.
    pub fn advance(&self, idx: &mut [usize]) {
        for (i, &n) in idx.iter_mut().zip(&self.counts) {
            *i += 1;
            if *i < n {
                return;
            }
            *i = 0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    /// Node is near zero when `|f| <= near_zero_rel * (1 + max|f|)`.
    pub near_zero_rel: f64,
    /// Replaces the relative rule with a fixed cutoff when set.
    pub abs_threshold: Option<f64>,
    /// Bisection stops at this coordinate width.
    pub bisect_width: f64,
    /// Local minima above this fraction of `max|f|` are not refined.
    pub local_min_frac: f64,
    pub refine_iters: usize,
    pub max_refine: usize,
    pub max_points: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            near_zero_rel: 1e-9,
            abs_threshold: None,
            bisect_width: 1e-12,
            local_min_frac: 0.05,
            refine_iters: 60,
            max_refine: 20_000,
            max_points: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroScan {
    pub grid: Grid,
    pub max_abs: f64,
    pub threshold: f64,
    pub undefined_nodes: usize,
    pub near_zero_nodes: usize,
    pub sign_change_edges: usize,
    pub refined_minima: usize,
    /// Points on or near the zero set, in discovery order.
    pub points: Vec<Vec<f64>>,
    /// Sorted cells touching the zero set.
    pub zero_cells: Vec<usize>,
    /// Sorted cells whose corners are all near zero.
    pub flat_cells: Vec<usize>,
    /// Set when `points` or the refinement budget hit their caps.
    pub truncated: bool,
}

impl ZeroScan {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.zero_cells.is_empty()
    }
}

struct Scanner<'a> {
    grid: &'a Grid,
    f: &'a dyn Fn(&[f64]) -> Option<f64>,
    cfg: &'a ScanConfig,
    strides: Vec<usize>,
}

/// Scans `f` over every node of `grid`. Undefined values are skipped.
pub fn scan_zero_set(grid: &Grid, f: &dyn Fn(&[f64]) -> Option<f64>, cfg: &ScanConfig) -> ZeroScan {
    let d = grid.dim();
    let counts = grid.counts();
    let strides: Vec<usize> = (0..d).map(|a| counts[..a].iter().product()).collect();
    let sc = Scanner { grid, f, cfg, strides };

    let total = grid.node_count();
    let mut values = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    let mut point = grid.node(&idx);
    let mut max_abs: f64 = 0.0;
    let mut undefined_nodes = 0;
    for _ in 0..total {
        let v = match f(&point) {
            Some(v) if v.is_finite() => v,
            _ => {
                undefined_nodes += 1;
                f64::NAN
            }
        };
        max_abs = max_abs.max(v.abs());
        values.push(v);
        sc.advance(&mut idx, &mut point);
    }
    let threshold = cfg.abs_threshold.unwrap_or(cfg.near_zero_rel * (1.0 + max_abs));
    let near: Vec<bool> = values.iter().map(|v| v.abs() <= threshold).collect();

    let mut out = ZeroScan {
        grid: grid.clone(),
        max_abs,
        threshold,
        undefined_nodes,
        near_zero_nodes: 0,
        sign_change_edges: 0,
        refined_minima: 0,
        points: Vec::new(),
        zero_cells: Vec::new(),
        flat_cells: Vec::new(),
        truncated: false,
    };

    let min_cap = cfg.local_min_frac * max_abs;
    let mut minima = Vec::new();
    idx.iter_mut().for_each(|i| *i = 0);
    for k in 0..total {
        let v = values[k];
        if near[k] {
            out.near_zero_nodes += 1;
            out.push_point(grid.node(&idx), cfg.max_points);
            sc.mark_around_node(&idx, None, &mut out.zero_cells);
            if sc.corners_all(&idx, &near) {
                out.flat_cells.push(grid.cell_flat(&idx));
            }
        } else if v.is_finite() {
            let mut is_min = v.abs() <= min_cap;
            for a in 0..d {
                if idx[a] + 1 < counts[a] {
                    let w = values[k + sc.strides[a]];
                    if !near[k + sc.strides[a]] && w.is_finite() && v * w < 0.0 {
                        out.sign_change_edges += 1;
                        if let Some(p) = sc.bisect(&idx, a, v) {
                            out.push_point(p, cfg.max_points);
                        }
                        sc.mark_around_node(&idx, Some(a), &mut out.zero_cells);
                    }
                }
                if is_min {
                    // Minima next to a sign change are already covered by bisection.
                    // NaN neighbours also disqualify.
                    let beaten = |w: f64| w.abs().partial_cmp(&v.abs()).is_none_or(|o| o.is_lt()) || v * w < 0.0;
                    let lower = idx[a] > 0 && beaten(values[k - sc.strides[a]]);
                    let upper = idx[a] + 1 < counts[a] && beaten(values[k + sc.strides[a]]);
                    is_min = !(lower || upper);
                }
            }
            if is_min {
                minima.push(k);
            }
        }
        grid.advance(&mut idx);
    }
    drop(values);

    if minima.len() > cfg.max_refine {
        out.truncated = true;
        minima.truncate(cfg.max_refine);
    }
    let mut refined_cells = std::collections::BTreeSet::new();
    for k in minima {
        let idx = grid.node_multi(k);
        if let Some(p) = sc.refine(grid.node(&idx), threshold) {
            if refined_cells.insert(grid.cell_of(&p)) {
                out.refined_minima += 1;
                out.push_point(p, cfg.max_points);
            }
        }
    }
    out.zero_cells.extend(refined_cells);
    out.zero_cells.sort_unstable();
    out.zero_cells.dedup();
    out.flat_cells.sort_unstable();
    out
}

impl ZeroScan {
    fn push_point(&mut self, p: Vec<f64>, cap: usize) {
        if self.points.len() < cap {
            self.points.push(p);
        } else {
            self.truncated = true;
        }
    }
}

impl Scanner<'_> {
    fn advance(&self, idx: &mut [usize], point: &mut [f64]) {
        let counts = self.grid.counts();
        for (a, i) in idx.iter_mut().enumerate() {
            *i += 1;
            if *i < counts[a] {
                point[a] = self.grid.coord(a, *i);
                return;
            }
            *i = 0;
            point[a] = self.grid.coord(a, 0);
        }
    }

    /// Marks cells having node `idx` as a corner; with `edge = Some(a)`,
    /// only those containing the edge from `idx` along axis `a`.
    fn mark_around_node(&self, idx: &[usize], edge: Option<usize>, cells: &mut Vec<usize>) {
        let d = idx.len();
        let mut cell = vec![0usize; d];
        'combo: for mask in 0..(1usize << d) {
            for a in 0..d {
                let low = mask & (1 << a) != 0;
                if edge == Some(a) {
                    if low {
                        continue 'combo;
                    }
                    cell[a] = idx[a];
                    continue;
                }
                if low {
                    if idx[a] == 0 {
                        continue 'combo;
                    }
                    cell[a] = idx[a] - 1;
                } else {
                    if idx[a] >= self.grid.cells_on_axis(a) {
                        continue 'combo;
                    }
                    cell[a] = idx[a];
                }
            }
            cells.push(self.grid.cell_flat(&cell));
        }
    }

    /// Whether the cell with lower corner `idx` exists and has every corner
    /// near zero.
    fn corners_all(&self, idx: &[usize], near: &[bool]) -> bool {
        if idx.iter().enumerate().any(|(a, &i)| i >= self.grid.cells_on_axis(a)) {
            return false;
        }
        let base: usize = idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum();
        (0..(1usize << idx.len())).all(|mask| {
            let off: usize =
                self.strides.iter().enumerate().filter(|(a, _)| mask & (1 << a) != 0).map(|(_, s)| s).sum();
            near[base + off]
        })
    }

    fn bisect(&self, idx: &[usize], axis: usize, v_lo: f64) -> Option<Vec<f64>> {
        let mut p = self.grid.node(idx);
        let mut lo = p[axis];
        let mut hi = self.grid.coord(axis, idx[axis] + 1);
        let sign_lo = v_lo.signum();
        while hi - lo > self.cfg.bisect_width {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            p[axis] = mid;
            let v = (self.f)(&p)?;
            if v == 0.0 {
                return Some(p);
            }
            if v.signum() == sign_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        p[axis] = 0.5 * (lo + hi);
        Some(p)
    }

    /// Gauss–Newton on `f` from `x`; returns the end point if `|f|` fell
    /// below `threshold`.
    fn refine(&self, mut x: Vec<f64>, threshold: f64) -> Option<Vec<f64>> {
        let d = x.len();
        let mut grad = vec![0.0; d];
        for _ in 0..self.cfg.refine_iters {
            let v = (self.f)(&x)?;
            if v.abs() <= threshold {
                return Some(x);
            }
            let mut g2 = 0.0;
            for a in 0..d {
                let h = 1e-7 * self.grid.bounds[a].width();
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[a] += h;
                xm[a] -= h;
                grad[a] = ((self.f)(&xp)? - (self.f)(&xm)?) / (2.0 * h);
                g2 += grad[a] * grad[a];
            }
            if g2 == 0.0 || !g2.is_finite() {
                return None;
            }
            for a in 0..d {
                x[a] = self.grid.bounds[a].clamp(x[a] - v * grad[a] / g2);
            }
        }
        match (self.f)(&x) {
            Some(v) if v.abs() <= threshold => Some(x),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(lo: f64, hi: f64, d: usize) -> Vec<Interval> {
        vec![Interval::new(lo, hi); d]
    }

    #[test]
    fn cell_indexing_round_trips() {
        let g = Grid::with_counts(&square(-1.0, 1.0, 3), &[5, 3, 4]);
        assert_eq!(g.node_count(), 60);
        assert_eq!(g.cell_count(), 24);
        for flat in [0, 7, 23] {
            assert_eq!(g.cell_flat(&g.cell_multi(flat)), flat);
        }
        assert_eq!(g.cell_of(&[-1.0, -1.0, -1.0]), 0);
        assert_eq!(g.cell_of(&[1.0, 1.0, 1.0]), 23);
        assert_eq!(g.coord(0, 4), 1.0);
        assert_eq!(g.coord(1, 1), 0.0);
        let mut idx = vec![4, 2, 0];
        g.advance(&mut idx);
        assert_eq!(idx, vec![0, 0, 1]);
        assert_eq!(g.node_multi(5 * 3), vec![0, 0, 1]);
    }

    #[test]
    fn sign_change_line_is_bisected() {
        // Even node count: no node sits on x = 0.1.
        let g = Grid::new(&square(-1.0, 1.0, 2), 20);
        let s = scan_zero_set(&g, &|p| Some(p[0] - 0.1), &ScanConfig::default());
        assert_eq!(s.near_zero_nodes, 0);
        assert_eq!(s.sign_change_edges, 20);
        assert!(s.points.iter().all(|p| (p[0] - 0.1).abs() < 1e-11));
        // One column of cells.
        assert_eq!(s.zero_cells.len(), 19);
    }

    #[test]
    fn even_order_zero_found_by_refinement() {
        let g = Grid::new(&square(-1.0, 1.0, 2), 20);
        let s = scan_zero_set(&g, &|p| Some((p[0] - 0.3).powi(2) + (p[1] + 0.2).powi(2)), &ScanConfig::default());
        assert_eq!(s.sign_change_edges, 0);
        assert!(s.refined_minima >= 1);
        let p = &s.points[0];
        assert!((p[0] - 0.3).abs() < 1e-4 && (p[1] + 0.2).abs() < 1e-4, "{p:?}");
    }

    #[test]
    fn identically_zero_is_flat_everywhere() {
        let g = Grid::new(&square(0.0, 1.0, 2), 6);
        let s = scan_zero_set(&g, &|_| Some(0.0), &ScanConfig::default());
        assert_eq!(s.flat_cells.len(), g.cell_count());
        assert_eq!(s.zero_cells.len(), g.cell_count());
    }

    #[test]
    fn anisotropic_grid() {
        let g = Grid::with_counts(&square(-1.0, 1.0, 2), &[20, 7]);
        let s = scan_zero_set(&g, &|p| Some(p[0] - 0.1), &ScanConfig::default());
        assert_eq!(s.sign_change_edges, 7);
        assert_eq!(s.zero_cells.len(), 6);
    }

    #[test]
    fn nowhere_zero() {
        let g = Grid::new(&square(-1.0, 1.0, 2), 9);
        let s = scan_zero_set(&g, &|p| Some(2.0 + p[0]), &ScanConfig::default());
        assert!(s.is_empty());
    }

    #[test]
    fn undefined_nodes_are_skipped() {
        let g = Grid::new(&square(-1.0, 1.0, 1), 11);
        let s = scan_zero_set(&g, &|p| if p[0] < 0.0 { None } else { Some(p[0] - 0.55) }, &ScanConfig::default());
        assert_eq!(s.undefined_nodes, 5);
        assert_eq!(s.points.len(), 1);
    }
}
