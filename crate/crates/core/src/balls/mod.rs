//! Growth-and-merge ball covers of a point cloud and the conditions checked on them.

mod checks;
mod io;

pub use checks::{check_cond1, check_cond2, lower_bound_check, LowerBound};
pub use io::{parse_balls_json, parse_points};

use serde::{Deserialize, Serialize};

use crate::dynamics::min_distance;
use crate::error::{Error, Result};
use crate::kernel::{dist2, Point};

/// Relative slack used for tangency ties and the disjointness check.
pub const TIE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub r: f64,
}

impl Ball {
    pub fn contains(&self, x: Point) -> bool {
        dist2(x, self.center) <= self.r * self.r
    }

    /// Distance from x to the sphere bounding the ball (positive inside).
    pub fn depth(&self, x: Point) -> f64 {
        self.r - dist2(x, self.center).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    /// Common growth factor at which the merge happened.
    pub factor: f64,
    pub parents: Vec<usize>,
    pub child: usize,
    pub center: Point,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallCollection {
    pub d: usize,
    pub balls: Vec<Ball>,
    /// Point indices covered by each ball.
    pub members: Vec<Vec<usize>>,
    pub total_radius: f64,
    pub r0: f64,
    pub merges: Vec<MergeEvent>,
}

impl BallCollection {
    /// Index of the ball containing point `x`.
    pub fn locate(&self, x: Point) -> Option<usize> {
        self.balls.iter().position(|b| b.contains(x))
    }

    /// Checks disjointness, coverage and the total radius; returns a description of the first failure.
    pub fn verify(&self, points: &[Point]) -> std::result::Result<(), String> {
        for (i, a) in self.balls.iter().enumerate() {
            for b in &self.balls[i + 1..] {
                let gap = dist2(a.center, b.center).sqrt() - (a.r + b.r);
                if gap < -TIE_SLACK * (a.r + b.r) {
                    return Err(format!("balls {a:?} and {b:?} overlap by {}", -gap));
                }
            }
        }
        for (k, members) in self.members.iter().enumerate() {
            for &i in members {
                let b = self.balls[k];
                if dist2(points[i], b.center).sqrt() > b.r * (1.0 + TIE_SLACK) {
                    return Err(format!("point {i} lies outside its ball {b:?}"));
                }
            }
        }
        let covered: usize = self.members.iter().map(|m| m.len()).sum();
        if covered != points.len() {
            return Err(format!("{covered} of {} points covered", points.len()));
        }
        let sum: f64 = self.balls.iter().map(|b| b.r).sum();
        if (sum - self.total_radius).abs() > 1e-12 * self.total_radius {
            return Err(format!("radii sum to {sum}, total is {}", self.total_radius));
        }
        Ok(())
    }
}

impl BallCollection {
    /// Replays the merge log from balls of radius `r0` at the points and checks that every
    /// child is the radius-weighted center of its parents with the summed radius.
    pub fn check_merges(&self, points: &[Point]) -> std::result::Result<(), String> {
        let mut live: std::collections::HashMap<usize, (Point, f64)> =
            points.iter().enumerate().map(|(i, p)| (i, (*p, self.r0))).collect();
        for (k, m) in self.merges.iter().enumerate() {
            let mut total = 0.0;
            let mut weighted = [0.0; 2];
            for id in &m.parents {
                let (c, base) = live.remove(id).ok_or(format!("merge {k} uses a dead ball {id}"))?;
                let r = m.factor * base;
                total += r;
                weighted[0] += r * c[0];
                weighted[1] += r * c[1];
            }
            let center = [weighted[0] / total, weighted[1] / total];
            let scale = total.max(1.0);
            if (total - m.r).abs() > 1e-12 * total || dist2(center, m.center).sqrt() > 1e-12 * scale {
                return Err(format!("merge {k} breaks the merge rule"));
            }
            live.insert(m.child, (m.center, m.r / m.factor));
        }
        if live.len() != self.balls.len() {
            return Err(format!("{} balls remain after the log, {} reported", live.len(), self.balls.len()));
        }
        Ok(())
    }
}

/// Default initial radius: min(eta_N / 4, R / (2N)).
pub fn default_r0(eta_n: f64, r_target: f64, n: usize) -> f64 {
    (0.25 * eta_n).min(r_target / (2.0 * n as f64))
}

struct Node {
    center: Point,
    // radius at unit growth factor
    base: f64,
    id: usize,
    members: Vec<usize>,
    // earliest tangency with another live node: (factor, index)
    best: (f64, usize),
}

fn contact(a: &Node, b: &Node) -> f64 {
    dist2(a.center, b.center).sqrt() / (a.base + b.base)
}

fn refresh(nodes: &[Option<Node>], i: usize) -> (f64, usize) {
    let a = nodes[i].as_ref().expect("live node");
    let mut best = (f64::INFINITY, usize::MAX);
    for (j, b) in nodes.iter().enumerate() {
        if let (true, Some(b)) = (j != i, b) {
            let t = contact(a, b);
            if t < best.0 {
                best = (t, j);
            }
        }
    }
    best
}

/// Grows balls of radius `r0` around the points by a common factor, merging tangent
/// balls into B(sum a_i r_i / sum r_i, sum r_i), until the radii sum to `r_target`.
/// Pass `r0 = None` for [`default_r0`].
pub fn grow_and_merge(points: &[Point], d: usize, r_target: f64, r0: Option<f64>) -> Result<BallCollection> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no points".into()));
    }
    if !(d == 1 || d == 2) || points.iter().any(|p| !(p[0].is_finite() && p[1].is_finite()) || (d == 1 && p[1] != 0.0)) {
        return Err(Error::InvalidArgument("points must be finite and match the dimension".into()));
    }
    let eta_n = if n > 1 { min_distance(points) } else { f64::INFINITY };
    if eta_n == 0.0 {
        return Err(Error::InvalidArgument("points must be distinct".into()));
    }
    if !(r_target > 0.0 && r_target.is_finite()) {
        return Err(Error::InvalidArgument(format!("target radius must be positive, got {r_target}")));
    }
    let r0 = r0.unwrap_or_else(|| default_r0(eta_n, r_target, n));
    if !(r0 > 0.0 && r0 < 0.5 * eta_n) {
        return Err(Error::InvalidArgument(format!("initial radius {r0} must lie in (0, eta_N / 2 = {})", 0.5 * eta_n)));
    }
    if r_target < n as f64 * r0 * (1.0 - TIE_SLACK) {
        return Err(Error::InvalidArgument(format!("target radius {r_target} below N r0 = {}", n as f64 * r0)));
    }
    let final_factor = (r_target / (n as f64 * r0)).max(1.0);
    let mut nodes: Vec<Option<Node>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| Some(Node { center: *p, base: r0, id: i, members: vec![i], best: (f64::INFINITY, usize::MAX) }))
        .collect();
    for i in 0..n {
        let b = refresh(&nodes, i);
        nodes[i].as_mut().expect("live").best = b;
    }
    let mut next_id = n;
    let mut merges = Vec::new();
    // growth factor reached so far; a merged ball may already overlap its neighbours
    let mut current: f64 = 1.0;
    while let Some((i, (t, j))) = nodes
        .iter()
        .enumerate()
        .filter_map(|(i, nd)| nd.as_ref().map(|nd| (i, nd.best)))
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
    {
        if t.is_nan() || t > final_factor * (1.0 + TIE_SLACK) {
            break;
        }
        current = current.max(t).min(final_factor);
        let factor = current;
        let a = nodes[i].take().expect("live");
        let b = nodes[j].take().expect("live");
        let base = a.base + b.base;
        let center = [
            (a.center[0] * a.base + b.center[0] * b.base) / base,
            (a.center[1] * a.base + b.center[1] * b.base) / base,
        ];
        let mut members = a.members;
        members.extend(b.members);
        members.sort_unstable();
        merges.push(MergeEvent { factor, parents: vec![a.id, b.id], child: next_id, center, r: factor * base });
        nodes[i] = Some(Node { center, base, id: next_id, members, best: (f64::INFINITY, usize::MAX) });
        next_id += 1;
        // the merged node may now be the earliest contact of others
        let nb = refresh(&nodes, i);
        nodes[i].as_mut().expect("live").best = nb;
        for k in 0..nodes.len() {
            if k == i || nodes[k].is_none() {
                continue;
            }
            let stale = {
                let nk = nodes[k].as_ref().expect("live");
                nk.best.1 == i || nk.best.1 == j
            };
            if stale {
                let b = refresh(&nodes, k);
                nodes[k].as_mut().expect("live").best = b;
            } else {
                let t = contact(nodes[k].as_ref().expect("live"), nodes[i].as_ref().expect("live"));
                let nk = nodes[k].as_mut().expect("live");
                if t < nk.best.0 {
                    nk.best = (t, i);
                }
            }
        }
    }
    let mut balls = Vec::new();
    let mut members = Vec::new();
    let mut live: Vec<Node> = nodes.into_iter().flatten().collect();
    // deterministic order: by smallest member index
    live.sort_by_key(|nd| nd.members[0]);
    for nd in live {
        balls.push(Ball { center: nd.center, r: final_factor * nd.base });
        members.push(nd.members);
    }
    let total_radius = balls.iter().map(|b| b.r).sum();
    Ok(BallCollection { d, balls, members, total_radius, r0, merges })
}

/// Target total radius N^(-(1-s)/(2s)) for s > 0 and N^(-1/2) for s = 0.
pub fn radius_schedule(n: usize, s: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::InvalidArgument(format!("radius schedule needs 0 <= s < 1, got {s}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("N must be positive".into()));
    }
    let n = n as f64;
    Ok(if s == 0.0 { n.powf(-0.5) } else { n.powf(-(1.0 - s) / (2.0 * s)) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_points_on_a_line() {
        let pts = [[0.0, 0.0], [3.0, 0.0], [10.0, 0.0]];
        let c = grow_and_merge(&pts, 1, 4.5, None).unwrap();
        assert_eq!(c.balls, vec![Ball { center: [1.5, 0.0], r: 3.0 }, Ball { center: [10.0, 0.0], r: 1.5 }]);
        assert_eq!(c.members, vec![vec![0, 1], vec![2]]);
        assert_eq!(c.total_radius, 4.5);
        c.verify(&pts).unwrap();
    }

    #[test]
    fn single_point_gets_the_whole_radius() {
        let c = grow_and_merge(&[[0.3, -0.2]], 2, 0.7, None).unwrap();
        assert_eq!(c.balls, vec![Ball { center: [0.3, -0.2], r: 0.7 }]);
    }

    #[test]
    fn schedule_values() {
        assert!((radius_schedule(10_000, 0.5).unwrap() - 1e-2).abs() < 1e-15);
        assert!((radius_schedule(10_000, 0.0).unwrap() - 1e-2).abs() < 1e-15);
        assert!(radius_schedule(10, 1.0).is_err());
    }

    #[test]
    fn rejects_small_target() {
        assert!(grow_and_merge(&[[0.0, 0.0], [1.0, 0.0]], 1, 0.1, Some(0.2)).is_err());
    }
}
