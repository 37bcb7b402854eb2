use serde::{Deserialize, Serialize};

use super::{Ball, BallCollection, MergeEvent};
use crate::error::{Error, Result};
use crate::kernel::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BallJson {
    center: Vec<f64>,
    r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MergeJson {
    factor: f64,
    parents: Vec<usize>,
    child: usize,
    center: Vec<f64>,
    r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CollectionJson {
    #[serde(rename = "R")]
    total_radius: f64,
    balls: Vec<BallJson>,
    #[serde(default)]
    merges: Vec<MergeJson>,
}

fn coords(p: Point, d: usize) -> Vec<f64> {
    p[..d].to_vec()
}

fn point(v: &[f64], d: usize) -> Result<Point> {
    if v.len() != d || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parse(format!("expected {d} finite coordinates, got {v:?}")));
    }
    Ok(if d == 1 { [v[0], 0.0] } else { [v[0], v[1]] })
}

impl BallCollection {
    /// `{R, balls: [{center, r}], merges: [...]}`
    pub fn to_json(&self) -> Result<String> {
        let doc = CollectionJson {
            total_radius: self.total_radius,
            balls: self.balls.iter().map(|b| BallJson { center: coords(b.center, self.d), r: b.r }).collect(),
            merges: self
                .merges
                .iter()
                .map(|m| MergeJson {
                    factor: m.factor,
                    parents: m.parents.clone(),
                    child: m.child,
                    center: coords(m.center, self.d),
                    r: m.r,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// Reads a ball collection written by [`BallCollection::to_json`]. Point membership is not
/// stored in the file, so `members` comes back empty.
pub fn parse_balls_json(text: &str) -> Result<BallCollection> {
    let doc: CollectionJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let d = doc.balls.first().map_or(2, |b| b.center.len());
    if !(d == 1 || d == 2) {
        return Err(Error::Parse(format!("centers must have 1 or 2 coordinates, got {d}")));
    }
    let balls = doc
        .balls
        .iter()
        .map(|b| {
            if !(b.r > 0.0 && b.r.is_finite()) {
                return Err(Error::Parse(format!("radius must be positive, got {}", b.r)));
            }
            Ok(Ball { center: point(&b.center, d)?, r: b.r })
        })
        .collect::<Result<Vec<_>>>()?;
    let merges = doc
        .merges
        .iter()
        .map(|m| {
            Ok(MergeEvent { factor: m.factor, parents: m.parents.clone(), child: m.child, center: point(&m.center, d)?, r: m.r })
        })
        .collect::<Result<Vec<_>>>()?;
    if !doc.total_radius.is_finite() {
        return Err(Error::Parse("total radius must be finite".into()));
    }
    let sum: f64 = balls.iter().map(|b| b.r).sum();
    if (sum - doc.total_radius).abs() > 1e-9 * sum.max(1.0) {
        return Err(Error::Parse(format!("radii sum to {sum} but R = {}", doc.total_radius)));
    }
    Ok(BallCollection { d, balls, members: Vec::new(), total_radius: doc.total_radius, r0: f64::NAN, merges })
}

/// One point per line, coordinates separated by whitespace or commas; `#` starts a comment.
/// Every point must have exactly `d` coordinates.
pub fn parse_points(text: &str, d: usize) -> Result<Vec<Point>> {
    if !(d == 1 || d == 2) {
        return Err(Error::Parse(format!("dimension must be 1 or 2, got {d}")));
    }
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let vals = body
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1))))
            .collect::<Result<Vec<f64>>>()?;
        out.push(point(&vals, d).map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?);
    }
    Ok(out)
}
