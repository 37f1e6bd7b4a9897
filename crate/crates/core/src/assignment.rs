//! Optimal linear assignment with gated entries.
//!
//! Entries above `max_cost` (and non-finite entries) are forbidden. Leaving a
//! row and a column unmatched costs `max_cost`, so the solver minimises
//!
//! ```text
//! sum over matches (cost - max_cost)
//! ```
//!
//! i.e. every allowed match is worth taking unless it blocks a better one.
//! With `max_cost = inf` this becomes the classic rectangular problem: a
//! maximum-cardinality matching of minimum total cost.
//!
//! The allowed bipartite graph is split into connected components and each is
//! solved as a square problem extended with one dummy partner per row and per
//! column. Ties between optimal matchings are broken lexicographically by row:
//! the first row whose partner differs decides, a smaller column beats a larger
//! one, and any column beats staying unmatched.

use crate::error::{Error, Result};

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!("cost data length {} != {rows}x{cols}", data.len())));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        CostMatrix { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("ragged cost matrix".into()));
        }
        Ok(CostMatrix { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
}

/// Rows are tracks, columns are detections.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssignmentResult {
    /// `(row, col)` pairs sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

impl AssignmentResult {
    pub fn total_cost(&self, cost: &CostMatrix) -> f64 {
        self.matches.iter().map(|&(r, c)| cost.get(r, c)).sum()
    }
}

/// Solves the gated assignment problem. See the module docs for the objective.
pub fn linear_assignment(cost: &CostMatrix, max_cost: f64) -> AssignmentResult {
    let (nr, nc) = (cost.rows, cost.cols);
    let allowed = |r: usize, c: usize| {
        let v = cost.get(r, c);
        v.is_finite() && v <= max_cost
    };

    let unmatch_cost = effective_limit(cost, max_cost, &allowed);

    // Union-find over rows [0, nr) and columns [nr, nr + nc).
    let mut dsu = Dsu::new(nr + nc);
    let mut any_edge = vec![false; nr + nc];
    for r in 0..nr {
        for c in 0..nc {
            if allowed(r, c) {
                dsu.union(r, nr + c);
                any_edge[r] = true;
                any_edge[nr + c] = true;
            }
        }
    }

    let mut comp_rows: Vec<Vec<usize>> = vec![Vec::new(); nr + nc];
    let mut comp_cols: Vec<Vec<usize>> = vec![Vec::new(); nr + nc];
    for r in (0..nr).filter(|&r| any_edge[r]) {
        comp_rows[dsu.find(r)].push(r);
    }
    for c in (0..nc).filter(|&c| any_edge[nr + c]) {
        comp_cols[dsu.find(nr + c)].push(c);
    }

    let mut row_match: Vec<Option<usize>> = vec![None; nr];
    for root in 0..nr + nc {
        let (rs, cs) = (&comp_rows[root], &comp_cols[root]);
        if rs.is_empty() {
            continue;
        }
        for (i, j) in solve_component(cost, rs, cs, unmatch_cost, &allowed) {
            row_match[rs[i]] = Some(cs[j]);
        }
    }

    let mut out = AssignmentResult::default();
    let mut col_used = vec![false; nc];
    for (r, m) in row_match.iter().enumerate() {
        match m {
            Some(c) => {
                out.matches.push((r, *c));
                col_used[*c] = true;
            }
            None => out.unmatched_tracks.push(r),
        }
    }
    out.unmatched_detections = (0..nc).filter(|&c| !col_used[c]).collect();
    out
}

/// Cost of leaving one row and one column unmatched. For an infinite gate this
/// is chosen large enough that an extra match always beats any re-arrangement
/// of the others.
fn effective_limit(cost: &CostMatrix, max_cost: f64, allowed: &impl Fn(usize, usize) -> bool) -> f64 {
    if max_cost.is_finite() {
        return max_cost;
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in 0..cost.rows {
        for c in 0..cost.cols {
            if allowed(r, c) {
                let v = cost.get(r, c);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if lo > hi {
        return 0.0;
    }
    let k = cost.rows.min(cost.cols) as f64;
    (hi - lo + 1.0) * (k + 1.0) + hi.abs()
}

/// Returns local `(row, col)` pairs of real matches within one component.
fn solve_component(
    cost: &CostMatrix,
    rs: &[usize],
    cs: &[usize],
    limit: f64,
    allowed: &impl Fn(usize, usize) -> bool,
) -> Vec<(usize, usize)> {
    let (r, c) = (rs.len(), cs.len());
    let n = r + c;
    let half = limit / 2.0;

    // Local rows: [0, r) real, [r, n) the dummy row of column i - r.
    // Local cols: [0, c) real, [c, n) the dummy column of row j - c.
    let mut dense: Vec<Option<f64>> = vec![None; n * n];
    for i in 0..n {
        for j in 0..n {
            dense[i * n + j] = match (i < r, j < c) {
                (true, true) => allowed(rs[i], cs[j]).then(|| cost.get(rs[i], cs[j])),
                (true, false) => (j - c == i).then_some(half),
                (false, true) => (i - r == j).then_some(half),
                (false, false) => Some(0.0),
            };
        }
    }
    let entry = |i: usize, j: usize| dense[i * n + j];

    let mut sol = hungarian(n, &entry);
    lexicographic_refine(&mut sol, r, c, &entry);

    (0..r)
        .filter_map(|i| {
            let j = sol.col_of_row[i];
            (j < c).then_some((i, j))
        })
        .collect()
}

struct Solution {
    col_of_row: Vec<usize>,
    row_of_col: Vec<usize>,
    /// Dual potentials: `cost - u[i] - v[j] >= 0`, zero on matched pairs.
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Shortest augmenting path Hungarian method on an `n x n` matrix with
/// forbidden (`None`) entries. A perfect matching must exist.
fn hungarian(n: usize, entry: &impl Fn(usize, usize) -> Option<f64>) -> Solution {
    let inf = f64::INFINITY;
    // 1-based with a virtual column 0, as in the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.fill(inf);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                if let Some(cv) = entry(i0 - 1, j - 1) {
                    let cur = cv - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            assert!(j1 != 0, "assignment problem has no perfect matching");
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of_row = vec![0usize; n];
    let mut row_of_col = vec![0usize; n];
    for j in 1..=n {
        col_of_row[p[j] - 1] = j - 1;
        row_of_col[j - 1] = p[j] - 1;
    }
    Solution { col_of_row, row_of_col, u: u[1..].to_vec(), v: v[1..].to_vec() }
}

/// Moves to the lexicographically smallest optimal matching over real rows.
///
/// Every optimal matching lives on the tight edges of an optimal dual, so the
/// search walks real rows in order and, for each, tries the smallest tight
/// column (real columns before the row's dummy) that can be reached by
/// re-routing the not-yet-fixed rows along an alternating cycle.
fn lexicographic_refine(
    sol: &mut Solution,
    r: usize,
    c: usize,
    entry: &impl Fn(usize, usize) -> Option<f64>,
) {
    let n = r + c;
    let mut scale: f64 = 1.0;
    for i in 0..n {
        for j in 0..n {
            if let Some(x) = entry(i, j) {
                scale = scale.max(x.abs());
            }
        }
    }
    let tol = 1e-12 * scale;
    let (u, v) = (sol.u.clone(), sol.v.clone());
    let tight = |i: usize, j: usize| entry(i, j).is_some_and(|x| (x - u[i] - v[j]).abs() <= tol);

    let mut fixed = vec![false; n];
    let mut parent_row = vec![usize::MAX; n];
    let mut via_col = vec![usize::MAX; n];
    for i in 0..r {
        let current = sol.col_of_row[i];
        let prefs = (0..c).chain(std::iter::once(c + i));
        for j in prefs {
            if j == current {
                break;
            }
            if !tight(i, j) || fixed[sol.row_of_col[j]] {
                continue;
            }
            if reroute(sol, &fixed, &tight, i, j, &mut parent_row, &mut via_col) {
                break;
            }
        }
        fixed[i] = true;
    }
}

/// Tries to give column `j` to row `i`, pushing its owner along an alternating
/// path of tight edges that ends at the column `i` releases.
fn reroute(
    sol: &mut Solution,
    fixed: &[bool],
    tight: &impl Fn(usize, usize) -> bool,
    i: usize,
    j: usize,
    parent_row: &mut [usize],
    via_col: &mut [usize],
) -> bool {
    let n = sol.col_of_row.len();
    let freed = sol.col_of_row[i];
    let start = sol.row_of_col[j];

    let mut seen = vec![false; n];
    seen[start] = true;
    seen[i] = true;
    parent_row[start] = usize::MAX;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(x) = queue.pop_front() {
        for y in 0..n {
            if y == j || !tight(x, y) {
                continue;
            }
            if y == freed {
                // Unwind: x takes y, each parent takes the column its child held.
                let (mut row, mut col) = (x, y);
                loop {
                    let prev_col = sol.col_of_row[row];
                    sol.col_of_row[row] = col;
                    sol.row_of_col[col] = row;
                    if row == start {
                        break;
                    }
                    col = prev_col;
                    row = parent_row[row];
                    debug_assert_eq!(via_col[sol.row_of_col[col]], col);
                }
                sol.col_of_row[i] = j;
                sol.row_of_col[j] = i;
                return true;
            }
            let z = sol.row_of_col[y];
            if seen[z] || fixed[z] {
                continue;
            }
            seen[z] = true;
            parent_row[z] = x;
            via_col[z] = y;
            queue.push_back(z);
        }
    }
    false
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    /// Every partial matching over allowed entries, as sorted pair lists.
    fn all_matchings(cost: &CostMatrix, max_cost: f64) -> Vec<Vec<(usize, usize)>> {
        fn rec(
            cost: &CostMatrix,
            max_cost: f64,
            row: usize,
            used: &mut Vec<bool>,
            cur: &mut Vec<(usize, usize)>,
            out: &mut Vec<Vec<(usize, usize)>>,
        ) {
            if row == cost.rows() {
                out.push(cur.clone());
                return;
            }
            for c in 0..cost.cols() {
                let v = cost.get(row, c);
                if !used[c] && v.is_finite() && v <= max_cost {
                    used[c] = true;
                    cur.push((row, c));
                    rec(cost, max_cost, row + 1, used, cur, out);
                    cur.pop();
                    used[c] = false;
                }
            }
            rec(cost, max_cost, row + 1, used, cur, out);
        }
        let mut out = Vec::new();
        rec(cost, max_cost, 0, &mut vec![false; cost.cols()], &mut Vec::new(), &mut out);
        out
    }

    fn objective(cost: &CostMatrix, max_cost: f64, ms: &[(usize, usize)]) -> f64 {
        ms.iter().map(|&(r, c)| cost.get(r, c) - max_cost).sum()
    }

    #[test]
    fn small_cases() {
        let r = linear_assignment(&m(&[&[0.2]]), 0.9);
        assert_eq!(r.matches, vec![(0, 0)]);

        let c = m(&[&[1.0, 2.0], &[2.0, 1.0]]);
        let r = linear_assignment(&c, f64::INFINITY);
        assert_eq!(r.matches, vec![(0, 0), (1, 1)]);
        assert_eq!(r.total_cost(&c), 2.0);

        let r = linear_assignment(&m(&[&[0.95, 0.99]]), 0.9);
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_tracks, vec![0]);
        assert_eq!(r.unmatched_detections, vec![0, 1]);

        let empty = CostMatrix::filled(0, 3, 0.0);
        let r = linear_assignment(&empty, 1.0);
        assert_eq!(r.unmatched_detections, vec![0, 1, 2]);
    }

    #[test]
    fn gating_prefers_two_matches_when_worth_it() {
        // Row 0 could take col 0 alone (0.1) but 0.4 + 0.4 beats 0.1 + two unmatched.
        let c = m(&[&[0.1, 0.4], &[0.4, 2.0]]);
        let r = linear_assignment(&c, 1.0);
        assert_eq!(r.matches, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let c = m(&[&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]]);
        let r = linear_assignment(&c, f64::INFINITY);
        assert_eq!(r.matches, vec![(0, 0), (1, 1)]);
        assert_eq!(r.unmatched_detections, vec![2]);

        // Matching row 0 at the gate is a tie with leaving it; prefer the match.
        let c = m(&[&[1.0]]);
        assert_eq!(linear_assignment(&c, 1.0).matches, vec![(0, 0)]);
    }

    #[test]
    fn matches_brute_force_objective_and_tie_break() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..400 {
            let rows = rng.random_range(1..=5);
            let cols = rng.random_range(1..=5);
            // Small integer costs force plenty of exact ties.
            let data = (0..rows * cols).map(|_| rng.random_range(0..6) as f64).collect();
            let cost = CostMatrix::new(rows, cols, data).unwrap();
            let gate = [3.0, 4.0, 5.0, f64::INFINITY][rng.random_range(0..4)];

            let got = linear_assignment(&cost, gate);
            let all = all_matchings(&cost, gate);
            let eff = if gate.is_finite() { gate } else { 1000.0 };
            let best = all.iter().map(|ms| objective(&cost, eff, ms)).fold(f64::INFINITY, f64::min);
            let row_key = |ms: &Vec<(usize, usize)>| {
                let mut key = vec![usize::MAX; rows];
                for &(r, c) in ms {
                    key[r] = c;
                }
                key
            };
            let mut optimal: Vec<_> =
                all.into_iter().filter(|ms| objective(&cost, eff, ms) == best).collect();
            optimal.sort_by_key(row_key);
            assert_eq!(objective(&cost, eff, &got.matches), best, "{cost:?} gate {gate}");
            assert_eq!(got.matches, optimal[0], "{cost:?} gate {gate}");
        }
    }

    #[test]
    fn partitions_are_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let rows = rng.random_range(0..9);
            let cols = rng.random_range(0..9);
            let data = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
            let cost = CostMatrix::new(rows, cols, data).unwrap();
            let r = linear_assignment(&cost, 0.5);
            let mut rs: Vec<usize> =
                r.matches.iter().map(|m| m.0).chain(r.unmatched_tracks.clone()).collect();
            let mut cs: Vec<usize> =
                r.matches.iter().map(|m| m.1).chain(r.unmatched_detections.clone()).collect();
            rs.sort();
            cs.sort();
            assert_eq!(rs, (0..rows).collect::<Vec<_>>());
            assert_eq!(cs, (0..cols).collect::<Vec<_>>());
            assert!(r.matches.iter().all(|&(a, b)| cost.get(a, b) <= 0.5));
        }
    }

    #[test]
    fn non_finite_entries_are_forbidden() {
        let c = m(&[&[f64::NAN, 0.3], &[f64::INFINITY, f64::NEG_INFINITY]]);
        let r = linear_assignment(&c, 1.0);
        assert_eq!(r.matches, vec![(0, 1)]);
    }
}
