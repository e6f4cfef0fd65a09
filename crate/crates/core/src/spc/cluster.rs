use crate::raster::CtrlMap;

use super::ControllerState;

/// Obstacle pixels per image column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnProfile {
    pub values: Vec<u32>,
}

impl ColumnProfile {
    pub fn width(&self) -> usize {
        self.values.len()
    }
}

/// Obstacle pixels per image row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowProfile {
    pub values: Vec<u32>,
}

pub fn row_profile(map: &CtrlMap) -> RowProfile {
    let m = map.map();
    let values = (0..m.height()).map(|r| m.row(r).iter().map(|&c| c as u32).sum()).collect();
    RowProfile { values }
}

/// Clears every row whose obstacle count is below `noise_frac` times the
/// busiest row. Grass speckle near the top and bottom of the frame rarely
/// survives; the canopy band does.
pub fn noise_reduction(map: &CtrlMap, noise_frac: f64) -> CtrlMap {
    let rows = row_profile(map);
    let max = rows.values.iter().copied().max().unwrap_or(0);
    let threshold = noise_frac * max as f64;
    let mut out = map.clone();
    let m = out.map_mut();
    for (r, &sum) in rows.values.iter().enumerate() {
        if (sum as f64) < threshold {
            for c in 0..m.width() {
                m.set(r, c, false);
            }
        }
    }
    out
}

pub fn column_histogram(map: &CtrlMap) -> ColumnProfile {
    let m = map.map();
    let mut values = vec![0u32; m.width()];
    for r in 0..m.height() {
        for (acc, &c) in values.iter_mut().zip(m.row(r)) {
            *acc += c as u32;
        }
    }
    ColumnProfile { values }
}

/// A maximal run of obstacle-free columns, `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroCluster {
    pub start: usize,
    pub end: usize,
    pub length: usize,
    /// Midpoint of the first and last column index.
    pub center: f64,
}

impl ZeroCluster {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end, length: end - start + 1, center: (start + end) as f64 / 2.0 }
    }

    /// Steering abscissa on the continuous pixel axis, where column `j`
    /// covers `[j, j + 1)`: the midpoint of `[start, end + 1)`. Mirroring
    /// the frame maps it to `width - abscissa`.
    pub fn abscissa(&self) -> f64 {
        (self.start + self.end + 1) as f64 / 2.0
    }

    pub fn touches_side(&self, width: usize) -> bool {
        self.start == 0 || self.end + 1 == width
    }

    /// Distance from `x` to the cluster span on the continuous axis; zero
    /// when `x` lies inside.
    pub fn edge_distance(&self, x: f64) -> f64 {
        let lo = self.start as f64;
        let hi = (self.end + 1) as f64;
        (lo - x).max(x - hi).max(0.0)
    }
}

/// Maximal zero runs of `profile`, left to right, dropping runs shorter
/// than `min_len`.
pub fn find_zero_clusters(profile: &ColumnProfile, min_len: usize) -> Vec<ZeroCluster> {
    let mut clusters = Vec::new();
    let mut run_start = None;
    for (j, &v) in profile.values.iter().enumerate() {
        match (v == 0, run_start) {
            (true, None) => run_start = Some(j),
            (false, Some(s)) => {
                clusters.push(ZeroCluster::new(s, j - 1));
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        clusters.push(ZeroCluster::new(s, profile.values.len() - 1));
    }
    clusters.retain(|c| c.length >= min_len);
    clusters
}

/// Picks the corridor to steer into. `None` means the frame is discarded.
pub fn select_cluster(
    clusters: &[ZeroCluster],
    state: &ControllerState,
    width: usize,
    pcc_near_tol: usize,
) -> Option<ZeroCluster> {
    match clusters {
        [] => None,
        [only] => Some(*only),
        _ if state.initial => {
            let mid = width as f64 / 2.0;
            // Longest first, then closest to the frame center, then leftmost.
            clusters
                .iter()
                .filter(|c| !c.touches_side(width))
                .min_by(|a, b| {
                    b.length
                        .cmp(&a.length)
                        .then_with(|| (a.abscissa() - mid).abs().total_cmp(&(b.abscissa() - mid).abs()))
                        .then_with(|| a.start.cmp(&b.start))
                })
                .copied()
        }
        _ => {
            let pcc = state.previous_cluster_center?;
            clusters
                .iter()
                .map(|c| (c, c.edge_distance(pcc)))
                .filter(|(_, dist)| *dist <= pcc_near_tol as f64)
                .min_by(|(a, da), (b, db)| {
                    da.total_cmp(db).then_with(|| b.length.cmp(&a.length)).then_with(|| a.start.cmp(&b.start))
                })
                .map(|(c, _)| *c)
        }
    }
}
