//! Static 2-d tree for nearest-neighbour queries.
//!
//! The tree is an index permutation over the caller's point slice: each
//! subrange stores its median (by the split axis) in the middle slot and
//! recurses left/right. Queries are defined to return results identical to
//! a brute-force scan, including how distance ties are broken, so callers
//! can switch between the tree and an exhaustive scan freely.

/// Squared Euclidean distance. Both the tree and every brute-force oracle in
/// this crate must use this exact expression so results compare bit-for-bit.
#[inline]
pub fn dist_sq(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

pub struct KdTree {
    points: Vec<[f64; 2]>,
    /// Permutation of point indices arranged as a median-split tree.
    order: Vec<u32>,
}

impl KdTree {
    pub fn build(points: &[[f64; 2]]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        build_range(points, &mut order, 0);
        KdTree {
            points: points.to_vec(),
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point to `query`, skipping the point at index `exclude`
    /// (pass `u32::MAX` to consider every point). Returns `(dist_sq, index)`.
    pub fn nearest_excluding(&self, query: [f64; 2], exclude: u32) -> Option<(f64, u32)> {
        let mut best: Option<(f64, u32)> = None;
        // Ties keep the incumbent, matching a strict `<` brute-force scan.
        self.search(query, 0, self.order.len(), 0, &mut best, &|cand| cand != exclude, &|_, _| {
            false
        });
        best
    }

    /// Nearest point to `query` where exact distance ties go to the candidate
    /// for which `prefer(candidate, incumbent)` is true.
    pub fn nearest_tiebreak(
        &self,
        query: [f64; 2],
        prefer: &dyn Fn(u32, u32) -> bool,
    ) -> Option<(f64, u32)> {
        let mut best: Option<(f64, u32)> = None;
        self.search(query, 0, self.order.len(), 0, &mut best, &|_| true, prefer);
        best
    }

    /// `eligible` filters candidates outright; `prefer(candidate, incumbent)`
    /// breaks exact distance ties.
    fn search(
        &self,
        query: [f64; 2],
        lo: usize,
        hi: usize,
        axis: usize,
        best: &mut Option<(f64, u32)>,
        eligible: &dyn Fn(u32) -> bool,
        prefer: &dyn Fn(u32, u32) -> bool,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let node = self.order[mid];
        let d = dist_sq(self.points[node as usize], query);
        let replace = eligible(node)
            && match *best {
                None => true,
                Some((bd, bi)) => d < bd || (d == bd && prefer(node, bi)),
            };
        if replace {
            *best = Some((d, node));
        }

        let split = self.points[node as usize][axis];
        let delta = query[axis] - split;
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(query, near.0, near.1, axis ^ 1, best, eligible, prefer);
        // The far half-plane can still hold an equal-distance candidate that
        // wins the tie, so prune with <= rather than <.
        let within = match *best {
            None => true,
            Some((bd, _)) => delta * delta <= bd,
        };
        if within {
            self.search(query, far.0, far.1, axis ^ 1, best, eligible, prefer);
        }
    }
}

fn build_range(points: &[[f64; 2]], order: &mut [u32], axis: usize) {
    if order.len() <= 1 {
        return;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .partial_cmp(&points[b as usize][axis])
            .expect("finite coordinates")
            .then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build_range(points, left, axis ^ 1);
    build_range(points, &mut right[1..], axis ^ 1);
}
