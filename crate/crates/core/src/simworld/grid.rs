use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

pub type Cell = (i64, i64);

/// Inclusive axis-aligned rectangle of grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: Cell,
    pub hi: Cell,
}

impl Rect {
    pub fn new(a: Cell, b: Cell) -> Self {
        Rect { lo: (a.0.min(b.0), a.1.min(b.1)), hi: (a.0.max(b.0), a.1.max(b.1)) }
    }

    pub fn contains(&self, c: Cell) -> bool {
        self.lo.0 <= c.0 && c.0 <= self.hi.0 && self.lo.1 <= c.1 && c.1 <= self.hi.1
    }

    /// Cells in row-major order (y outer, x inner).
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in self.lo.1..=self.hi.1 {
            for x in self.lo.0..=self.hi.0 {
                out.push((x, y));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub width: i64,
    pub height: i64,
}

impl Grid {
    pub fn contains(&self, c: Cell) -> bool {
        c.0 >= 0 && c.1 >= 0 && c.0 < self.width && c.1 < self.height
    }

    pub fn contains_rect(&self, r: &Rect) -> bool {
        self.contains(r.lo) && self.contains(r.hi)
    }

    /// Breadth-first shortest path from `from` to `to`, both included.
    /// Neighbours are expanded right, left, down, up, so ties resolve the
    /// same way on every platform. Returns an empty path when `to` is
    /// unreachable or blocked; `from` itself is never treated as blocked.
    pub fn shortest_path(&self, from: Cell, to: Cell, blocked: &BTreeSet<Cell>) -> Vec<Cell> {
        if !self.contains(from) || !self.contains(to) || blocked.contains(&to) {
            return Vec::new();
        }
        if from == to {
            return vec![from];
        }
        let w = self.width as usize;
        let idx = |c: Cell| c.1 as usize * w + c.0 as usize;
        let mut parent: Vec<Option<Cell>> = vec![None; (self.width * self.height) as usize];
        let mut seen = vec![false; parent.len()];
        seen[idx(from)] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(c) = queue.pop_front() {
            for d in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let n = (c.0 + d.0, c.1 + d.1);
                if !self.contains(n) || seen[idx(n)] || blocked.contains(&n) {
                    continue;
                }
                seen[idx(n)] = true;
                parent[idx(n)] = Some(c);
                if n == to {
                    let mut path = vec![to];
                    let mut cur = to;
                    while let Some(p) = parent[idx(cur)] {
                        path.push(p);
                        cur = p;
                    }
                    path.reverse();
                    return path;
                }
                queue.push_back(n);
            }
        }
        Vec::new()
    }
}

pub fn adjacent(a: Cell, b: Cell) -> bool {
    (a.0 - b.0).abs() + (a.1 - b.1).abs() == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_cells_are_inclusive() {
        let r = Rect::new((9, 6), (8, 5));
        assert_eq!(r.cells(), vec![(8, 5), (9, 5), (8, 6), (9, 6)]);
        assert!(r.contains((9, 6)));
        assert!(!r.contains((10, 6)));
    }

    #[test]
    fn bfs_prefers_right_then_down() {
        let g = Grid { width: 12, height: 12 };
        let path = g.shortest_path((6, 6), (9, 7), &BTreeSet::new());
        assert_eq!(path, vec![(6, 6), (7, 6), (8, 6), (9, 6), (9, 7)]);
    }

    #[test]
    fn bfs_avoids_blocked_cells() {
        let g = Grid { width: 12, height: 12 };
        let blocked: BTreeSet<Cell> = Rect::new((8, 5), (9, 6)).cells().into_iter().collect();
        let path = g.shortest_path((6, 6), (9, 7), &blocked);
        assert_eq!(path.len(), 5);
        assert!(path.iter().all(|c| !blocked.contains(c)));
        assert!(path.windows(2).all(|w| adjacent(w[0], w[1])));
    }

    #[test]
    fn unreachable_target_gives_empty_path() {
        let g = Grid { width: 3, height: 3 };
        let blocked: BTreeSet<Cell> = [(1, 0), (1, 1), (1, 2)].into();
        assert!(g.shortest_path((0, 0), (2, 2), &blocked).is_empty());
        assert!(g.shortest_path((0, 0), (1, 1), &blocked).is_empty());
        assert!(g.shortest_path((0, 0), (5, 5), &BTreeSet::new()).is_empty());
    }
}
