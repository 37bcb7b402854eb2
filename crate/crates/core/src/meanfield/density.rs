use serde::{Deserialize, Serialize};

use super::{disc_overlap, Grid, GridField};
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, Point};
use crate::quadrature::{cached_rule, fixed_legendre};

/// Initial densities, all centered at the origin (up to `offset` for the two-bump case).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Density {
    /// Uniform on the disc (interval when d = 1) of the given radius.
    Disc { radius: f64 },
    /// Smooth compactly supported bump exp(-1/(1 - |x|^2/R^2)).
    Bump { radius: f64 },
    /// Two bumps of radius `radius` centered at (+-offset, 0).
    TwoBump { radius: f64, offset: f64 },
}

fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

impl Density {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Density::Disc { radius } | Density::Bump { radius } => radius > 0.0,
            Density::TwoBump { radius, offset } => radius > 0.0 && offset.is_finite() && offset >= 0.0,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("bad density parameters {self:?}")));
        }
        Ok(())
    }

    /// Unnormalized density at x.
    pub fn pdf(&self, x: Point) -> f64 {
        match *self {
            Density::Disc { radius } => {
                if x[0] * x[0] + x[1] * x[1] <= radius * radius {
                    1.0
                } else {
                    0.0
                }
            }
            Density::Bump { radius } => bump((x[0] * x[0] + x[1] * x[1]) / (radius * radius)),
            Density::TwoBump { radius, offset } => {
                let a = ((x[0] - offset).powi(2) + x[1] * x[1]) / (radius * radius);
                let b = ((x[0] + offset).powi(2) + x[1] * x[1]) / (radius * radius);
                bump(a) + bump(b)
            }
        }
    }

    /// Upper bound of `pdf`.
    pub fn pdf_max(&self) -> f64 {
        match self {
            Density::Disc { .. } => 1.0,
            // the two bumps may overlap
            Density::Bump { .. } => (-1.0f64).exp(),
            Density::TwoBump { .. } => 2.0 * (-1.0f64).exp(),
        }
    }

    /// Half-width of a box containing the support.
    pub fn extent(&self) -> f64 {
        match *self {
            Density::Disc { radius } | Density::Bump { radius } => radius,
            Density::TwoBump { radius, offset } => radius + offset,
        }
    }

    /// Extent in the second coordinate (2D only).
    pub fn extent_y(&self) -> f64 {
        match *self {
            Density::Disc { radius } | Density::Bump { radius } | Density::TwoBump { radius, .. } => radius,
        }
    }

    /// Cell averages on the grid, normalized to unit mass.
    pub fn rasterize(&self, spec: KernelSpec, grid: Grid) -> Result<GridField> {
        self.validate()?;
        let values = match *self {
            Density::Disc { radius } => disc_overlap(&grid, radius),
            _ => {
                let rule = cached_rule(6, 0.0, 0.0)?;
                let h = grid.h();
                (0..grid.cells())
                    .map(|k| {
                        let c = grid.center(k);
                        let (x0, x1) = (c[0] - 0.5 * h, c[0] + 0.5 * h);
                        if grid.d == 1 {
                            fixed_legendre(&rule, x0, x1, |x| self.pdf([x, 0.0])) / h
                        } else {
                            let (y0, y1) = (c[1] - 0.5 * h, c[1] + 0.5 * h);
                            fixed_legendre(&rule, x0, x1, |x| fixed_legendre(&rule, y0, y1, |y| self.pdf([x, y])))
                                / (h * h)
                        }
                    })
                    .collect()
            }
        };
        GridField::probability(spec, grid, values, 0.0)
    }
}
