//! Hierarchical hash-grid broad phase.
//!
//! Each element's capsule is wrapped in an axis-aligned bounding box and
//! registered at exactly one grid level: the smallest whose cell size covers
//! the box's largest extent. Cell size doubles per level, so a proxy overlaps
//! at most eight cells at its own level, and a query walks the proxy's own
//! and all coarser levels. Candidates are filtered by an exact AABB test and
//! by the same-rod stencil exclusion, so the returned pair set equals the
//! exhaustive-search set (verified against an O(N^2) oracle).

use crate::math::Vec3;

/// One rod element as a broad-phase primitive: a segment inflated by its
/// radius plus the contact margin.
#[derive(Debug, Clone, Copy)]
pub struct SegmentProxy {
    pub rod: u32,
    pub element: u32,
    pub p0: Vec3,
    pub p1: Vec3,
    pub radius: f64,
    pub aabb_min: Vec3,
    pub aabb_max: Vec3,
}

impl SegmentProxy {
    /// Wraps a capsule (segment inflated by `radius`) expanded by `margin`.
    pub fn new(rod: u32, element: u32, p0: Vec3, p1: Vec3, radius: f64, margin: f64) -> Self {
        let inflate = radius + margin;
        let mut aabb_min = [0.0; 3];
        let mut aabb_max = [0.0; 3];
        for c in 0..3 {
            aabb_min[c] = p0[c].min(p1[c]) - inflate;
            aabb_max[c] = p0[c].max(p1[c]) + inflate;
        }
        Self {
            rod,
            element,
            p0,
            p1,
            radius,
            aabb_min,
            aabb_max,
        }
    }

    /// Largest edge length of the AABB.
    pub fn extent(&self) -> f64 {
        (0..3)
            .map(|c| self.aabb_max[c] - self.aabb_min[c])
            .fold(0.0, f64::max)
    }

    /// Endpoints and the derived AABB are all finite. The endpoints must be
    /// checked directly: `min`/`max` return the other operand for a NaN
    /// input, so a NaN endpoint can still produce a finite (garbage) box.
    pub fn is_finite(&self) -> bool {
        self.p0
            .iter()
            .chain(self.p1.iter())
            .chain(self.aabb_min.iter())
            .chain(self.aabb_max.iter())
            .all(|v| v.is_finite())
    }

    pub fn aabb_overlaps(&self, other: &SegmentProxy) -> bool {
        (0..3).all(|c| {
            self.aabb_min[c] <= other.aabb_max[c] && other.aabb_min[c] <= self.aabb_max[c]
        })
    }
}

/// Why a grid could not be built.
#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("proxy {index} has non-finite geometry")]
    NonFinite { index: usize },
}

/// Same-rod element pairs closer than this along the rod are never contact
/// candidates (they are coupled through the elastic stencil instead);
/// self-contact at larger separations is allowed.
pub const STENCIL_EXCLUSION: u32 = 2;

/// Open-addressed (linear probing) map from integer cell coordinates to a
/// chain of proxy entries.
struct CellTable {
    /// Slot = (cell coords, head entry index); head == EMPTY marks a free slot.
    slots: Vec<([i32; 3], u32)>,
    /// Chain storage: (proxy id, next entry index).
    entries: Vec<(u32, u32)>,
    mask: usize,
}

const EMPTY: u32 = u32::MAX;

fn hash_cell(key: [i32; 3]) -> u64 {
    // Classic spatial-hash mix of three large primes.
    let x = (key[0] as i64 as u64).wrapping_mul(0x8da6b343);
    let y = (key[1] as i64 as u64).wrapping_mul(0xd8163841);
    let z = (key[2] as i64 as u64).wrapping_mul(0xcb1ab31f);
    let mut h = x ^ y ^ z;
    // Final avalanche so masking to small tables still spreads well.
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51afd7ed558ccd);
    h ^= h >> 33;
    h
}

impl CellTable {
    /// Sized for `expected` insertions at 50% maximum load.
    fn with_capacity(expected: usize) -> Self {
        let slots = (2 * expected.max(1)).next_power_of_two().max(16);
        Self {
            slots: vec![([0; 3], EMPTY); slots],
            entries: Vec::with_capacity(expected),
            mask: slots - 1,
        }
    }

    fn insert(&mut self, key: [i32; 3], proxy: u32) {
        let mut slot = (hash_cell(key) as usize) & self.mask;
        loop {
            let (k, head) = self.slots[slot];
            if head == EMPTY {
                self.entries.push((proxy, EMPTY));
                self.slots[slot] = (key, (self.entries.len() - 1) as u32);
                return;
            }
            if k == key {
                self.entries.push((proxy, head));
                self.slots[slot].1 = (self.entries.len() - 1) as u32;
                return;
            }
            slot = (slot + 1) & self.mask;
        }
    }

    /// Visits every proxy registered in `key`'s cell.
    fn for_each_in_cell(&self, key: [i32; 3], mut visit: impl FnMut(u32)) {
        let mut slot = (hash_cell(key) as usize) & self.mask;
        loop {
            let (k, head) = self.slots[slot];
            if head == EMPTY {
                return;
            }
            if k == key {
                let mut entry = head;
                while entry != EMPTY {
                    let (proxy, next) = self.entries[entry as usize];
                    visit(proxy);
                    entry = next;
                }
                return;
            }
            slot = (slot + 1) & self.mask;
        }
    }
}

/// Multi-resolution spatial hash over segment proxies.
pub struct HierarchicalHashGrid {
    levels: Vec<CellTable>,
    cell_sizes: Vec<f64>,
    proxy_level: Vec<u8>,
}

pub const MAX_LEVELS: usize = 8;

fn cell_range(lo: f64, hi: f64, cell: f64) -> std::ops::RangeInclusive<i32> {
    let a = (lo / cell).floor() as i32;
    let b = (hi / cell).floor() as i32;
    a..=b
}

impl HierarchicalHashGrid {
    /// Rebuilds from scratch (no incremental update): assigns each proxy the
    /// smallest level whose cell covers its AABB, then registers it in every
    /// cell the AABB overlaps at that level. The per-proxy binning is a pure
    /// map; the table merge below is the intentionally serial section.
    pub fn build(proxies: &[SegmentProxy]) -> Result<Self, GridError> {
        for (index, p) in proxies.iter().enumerate() {
            if !p.is_finite() {
                return Err(GridError::NonFinite { index });
            }
        }
        if proxies.is_empty() {
            return Ok(Self {
                levels: Vec::new(),
                cell_sizes: Vec::new(),
                proxy_level: Vec::new(),
            });
        }

        // Base cell: twice the median AABB extent, so the median proxy sits
        // at level 0 with room to spare.
        let mut extents: Vec<f64> = proxies.iter().map(SegmentProxy::extent).collect();
        extents.sort_by(|a, b| a.total_cmp(b));
        let median = extents[extents.len() / 2];
        let max_extent = extents[extents.len() - 1];
        // Degenerate point-like inputs fall back to a unit cell rather than a
        // denormal one (which would explode the covered-cell ranges).
        let base = if median > 0.0 {
            2.0 * median
        } else if max_extent > 0.0 {
            max_extent
        } else {
            1.0
        };
        let mut n_levels = 1;
        while n_levels < MAX_LEVELS && base * ((1u64 << (n_levels - 1)) as f64) < max_extent {
            n_levels += 1;
        }
        let cell_sizes: Vec<f64> = (0..n_levels).map(|k| base * (1u64 << k) as f64).collect();

        // Binning pass: independent per proxy.
        let proxy_level: Vec<u8> = proxies
            .iter()
            .map(|p| {
                let e = p.extent();
                cell_sizes
                    .iter()
                    .position(|&c| c >= e)
                    .unwrap_or(n_levels - 1) as u8
            })
            .collect();

        // Serial merge into the per-level tables (the documented sequential
        // section of the broad phase).
        let mut counts = vec![0usize; n_levels];
        for (p, &lvl) in proxies.iter().zip(&proxy_level) {
            let cell = cell_sizes[lvl as usize];
            let mut cells = 1usize;
            for c in 0..3 {
                cells *= cell_range(p.aabb_min[c], p.aabb_max[c], cell).count();
            }
            counts[lvl as usize] += cells;
        }
        let mut levels: Vec<CellTable> = counts.iter().map(|&c| CellTable::with_capacity(c)).collect();
        for (i, (p, &lvl)) in proxies.iter().zip(&proxy_level).enumerate() {
            let cell = cell_sizes[lvl as usize];
            for ix in cell_range(p.aabb_min[0], p.aabb_max[0], cell) {
                for iy in cell_range(p.aabb_min[1], p.aabb_max[1], cell) {
                    for iz in cell_range(p.aabb_min[2], p.aabb_max[2], cell) {
                        levels[lvl as usize].insert([ix, iy, iz], i as u32);
                    }
                }
            }
        }

        Ok(Self {
            levels,
            cell_sizes,
            proxy_level,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// All AABB-overlapping proxy pairs, excluding same-rod pairs within
    /// [`STENCIL_EXCLUSION`] elements of each other. Each pair appears once,
    /// ordered (small id, large id), and the whole list is sorted — identical
    /// output for any execution order.
    ///
    /// `proxies` must be the slice the grid was built from.
    pub fn candidate_pairs(&self, proxies: &[SegmentProxy]) -> Vec<(u32, u32)> {
        assert_eq!(proxies.len(), self.proxy_level.len(), "grid/proxy mismatch");
        let mut pairs = Vec::new();
        for i in 0..proxies.len() {
            self.candidates_of(proxies, i, |j| {
                let (a, b) = if (i as u32) < j { (i as u32, j) } else { (j, i as u32) };
                pairs.push((a, b));
            });
        }
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    /// Visits every accepted partner of proxy `i` found in `i`'s own level
    /// (ids above `i` only, so same-level pairs emerge once) and in all
    /// coarser levels (any id; coarser proxies never look down). Callers may
    /// still see one partner several times via shared cells.
    fn candidates_of(&self, proxies: &[SegmentProxy], i: usize, mut accept: impl FnMut(u32)) {
        let p = &proxies[i];
        let own = self.proxy_level[i] as usize;
        for lvl in own..self.levels.len() {
            let cell = self.cell_sizes[lvl];
            for ix in cell_range(p.aabb_min[0], p.aabb_max[0], cell) {
                for iy in cell_range(p.aabb_min[1], p.aabb_max[1], cell) {
                    for iz in cell_range(p.aabb_min[2], p.aabb_max[2], cell) {
                        self.levels[lvl].for_each_in_cell([ix, iy, iz], |j| {
                            if lvl == own && j <= i as u32 {
                                return;
                            }
                            let q = &proxies[j as usize];
                            if excluded(p, q) || !p.aabb_overlaps(q) {
                                return;
                            }
                            accept(j);
                        });
                    }
                }
            }
        }
    }
}

/// Same-rod stencil-neighbor exclusion.
pub fn excluded(a: &SegmentProxy, b: &SegmentProxy) -> bool {
    a.rod == b.rod && a.element.abs_diff(b.element) <= STENCIL_EXCLUSION
}

/// Exhaustive O(N^2) reference: every non-excluded AABB-overlapping pair.
pub fn exhaustive_pairs(proxies: &[SegmentProxy]) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for i in 0..proxies.len() {
        for j in i + 1..proxies.len() {
            if !excluded(&proxies[i], &proxies[j]) && proxies[i].aabb_overlaps(&proxies[j]) {
                pairs.push((i as u32, j as u32));
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_proxies(rng: &mut ChaCha8Rng, n: usize, box_side: f64, max_len: f64) -> Vec<SegmentProxy> {
        (0..n)
            .map(|i| {
                let p0 = [
                    rng.gen_range(0.0..box_side),
                    rng.gen_range(0.0..box_side),
                    rng.gen_range(0.0..box_side),
                ];
                let d = [
                    rng.gen_range(-max_len..max_len),
                    rng.gen_range(-max_len..max_len),
                    rng.gen_range(-max_len..max_len),
                ];
                let p1 = [p0[0] + d[0], p0[1] + d[1], p0[2] + d[2]];
                let r = rng.gen_range(0.002..0.02);
                // Unique rod per proxy: no exclusions in the random suites.
                SegmentProxy::new(i as u32, 0, p0, p1, r, 0.01 * r)
            })
            .collect()
    }

    /// Empty input: empty grid, zero candidates.
    #[test]
    fn empty_set() {
        let grid = HierarchicalHashGrid::build(&[]).unwrap();
        assert_eq!(grid.n_levels(), 0);
        assert!(grid.candidate_pairs(&[]).is_empty());
    }

    /// Two proxies far apart produce no candidates.
    #[test]
    fn distant_proxies_no_pairs() {
        let a = SegmentProxy::new(0, 0, [0.0; 3], [1.0, 0.0, 0.0], 0.01, 0.0001);
        let b = SegmentProxy::new(1, 0, [100.0, 0.0, 0.0], [101.0, 0.0, 0.0], 0.01, 0.0001);
        let proxies = [a, b];
        let grid = HierarchicalHashGrid::build(&proxies).unwrap();
        assert!(grid.candidate_pairs(&proxies).is_empty());
    }

    /// Non-finite geometry is rejected at build, whether it enters through an
    /// endpoint (NaN or infinite) or through the inflation radius.
    #[test]
    fn non_finite_rejected() {
        let good = SegmentProxy::new(7, 0, [0.0; 3], [1.0, 0.0, 0.0], 0.01, 0.0);
        let bad = [
            SegmentProxy::new(0, 0, [f64::NAN; 3], [1.0, 0.0, 0.0], 0.01, 0.0),
            SegmentProxy::new(0, 0, [0.0; 3], [f64::INFINITY, 0.0, 0.0], 0.01, 0.0),
            SegmentProxy::new(0, 0, [0.0; 3], [1.0, 0.0, 0.0], f64::NAN, 0.0),
        ];
        for b in bad {
            assert!(matches!(
                HierarchicalHashGrid::build(&[good, b]),
                Err(GridError::NonFinite { index: 1 })
            ));
        }
    }

    /// A small segment overlapping a much larger one is found through the
    /// cross-level query (the two live at different levels).
    #[test]
    fn cross_level_pair_found() {
        let small = SegmentProxy::new(0, 0, [5.0, 5.0, 5.0], [5.02, 5.0, 5.0], 0.005, 0.0);
        let large = SegmentProxy::new(1, 0, [0.0, 5.0, 5.0], [10.0, 5.0, 5.0], 0.01, 0.0);
        // Put plenty of median-size segments around so the base cell is
        // small and the two really land on different levels.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut proxies = random_proxies(&mut rng, 60, 100.0, 0.05);
        for (i, p) in proxies.iter_mut().enumerate() {
            p.rod = 2 + i as u32;
        }
        proxies.push(small);
        proxies.push(large);
        let grid = HierarchicalHashGrid::build(&proxies).unwrap();
        let small_id = (proxies.len() - 2) as u32;
        let large_id = (proxies.len() - 1) as u32;
        assert_ne!(
            grid.proxy_level[small_id as usize], grid.proxy_level[large_id as usize],
            "test setup should place the two proxies at different levels"
        );
        let pairs = grid.candidate_pairs(&proxies);
        assert!(pairs.contains(&(small_id, large_id)));
    }

    /// A straight chain of one rod's own elements yields zero pairs: every
    /// overlapping pair is adjacent, and adjacency is excluded.
    #[test]
    fn own_chain_excluded() {
        let proxies: Vec<SegmentProxy> = (0..20)
            .map(|k| {
                let p0 = [k as f64 * 0.1, 0.0, 0.0];
                let p1 = [(k + 1) as f64 * 0.1, 0.0, 0.0];
                SegmentProxy::new(0, k as u32, p0, p1, 0.01, 0.001)
            })
            .collect();
        let grid = HierarchicalHashGrid::build(&proxies).unwrap();
        assert!(grid.candidate_pairs(&proxies).is_empty());
        // ... but a hairpin bringing element 0 near element 10 is allowed.
        let mut bent = proxies;
        let far = bent[10];
        bent[0] = SegmentProxy::new(0, 0, far.p0, far.p1, 0.01, 0.001);
        let grid = HierarchicalHashGrid::build(&bent).unwrap();
        assert!(grid.candidate_pairs(&bent).contains(&(0, 10)));
    }

    /// 256 uniform random segments: grid pair set equals the exhaustive
    /// oracle exactly (superset by construction, equality via the AABB filter).
    #[test]
    fn random_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let n = 64 + 32 * trial;
            let proxies = random_proxies(&mut rng, n.min(256), 1.0, 0.2);
            let grid = HierarchicalHashGrid::build(&proxies).unwrap();
            assert_eq!(
                grid.candidate_pairs(&proxies),
                exhaustive_pairs(&proxies),
                "trial {trial}"
            );
        }
    }

    /// Strongly heterogeneous sizes (three decades) still match the oracle:
    /// exercises every level and the cross-level walk.
    #[test]
    fn heterogeneous_sizes_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut proxies = Vec::new();
        for i in 0..192u32 {
            let scale = 10f64.powf(rng.gen_range(-2.0..1.0));
            let p0 = [
                rng.gen_range(0.0..4.0),
                rng.gen_range(0.0..4.0),
                rng.gen_range(0.0..4.0),
            ];
            let p1 = [
                p0[0] + rng.gen_range(-scale..scale),
                p0[1] + rng.gen_range(-scale..scale),
                p0[2] + rng.gen_range(-scale..scale),
            ];
            proxies.push(SegmentProxy::new(i, 0, p0, p1, 0.01 * scale, 0.0));
        }
        let grid = HierarchicalHashGrid::build(&proxies).unwrap();
        assert!(grid.n_levels() > 1, "setup should span multiple levels");
        assert_eq!(grid.candidate_pairs(&proxies), exhaustive_pairs(&proxies));
    }

    /// 512 random segments across densities: exact set equality again, and
    /// deterministic output on rebuild.
    #[test]
    fn dense_512_exact_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let proxies = random_proxies(&mut rng, 512, 1.2, 0.15);
        let grid = HierarchicalHashGrid::build(&proxies).unwrap();
        let pairs = grid.candidate_pairs(&proxies);
        assert_eq!(pairs, exhaustive_pairs(&proxies));
        let grid2 = HierarchicalHashGrid::build(&proxies).unwrap();
        assert_eq!(grid2.candidate_pairs(&proxies), pairs);
        assert!(!pairs.is_empty(), "dense test should actually overlap");
    }
}
