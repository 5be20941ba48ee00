//! Straight triple-clique neighborhood systems.
//!
//! A family is one orientation class of cliques `(p - o, p, p + o)` for an
//! integer offset `o`. Offsets are pushed out to the perimeter of a
//! `(2d+1) x (2d+1)` box, one representative per orientation modulo pi.
//! Each family carries the angular share `dtheta` it covers and the weight
//! `4 dtheta / |o|^3` that turns fired-clique counts into squared curvature.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NeighborhoodMode {
    /// Every orientation reachable on the box perimeter.
    FullBox,
    /// Horizontal and vertical cliques only (the "2x2" system).
    AxisOnly,
}

impl fmt::Display for NeighborhoodMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NeighborhoodMode::FullBox => "full",
            NeighborhoodMode::AxisOnly => "axis",
        })
    }
}

impl FromStr for NeighborhoodMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "full_box" => Ok(NeighborhoodMode::FullBox),
            "axis" | "axis_only" => Ok(NeighborhoodMode::AxisOnly),
            other => Err(Error::InvalidArgument(format!(
                "unknown neighborhood mode '{other}' (expected full or axis)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliqueFamily {
    pub index: usize,
    pub dx: i64,
    pub dy: i64,
    /// Euclidean length of the offset, in pixels.
    pub length: f64,
    /// Orientation in `[0, pi)`.
    pub theta: f64,
    pub delta_theta: f64,
    pub weight: f64,
}

impl CliqueFamily {
    fn new(index: usize, dx: i64, dy: i64, theta: f64, delta_theta: f64) -> Self {
        let length = ((dx * dx + dy * dy) as f64).sqrt();
        CliqueFamily {
            index,
            dx,
            dy,
            length,
            theta,
            delta_theta,
            weight: clique_weight(delta_theta, length),
        }
    }
}

/// `w = 4 dtheta / d^3`.
pub fn clique_weight(delta_theta: f64, length: f64) -> f64 {
    4.0 * delta_theta / (length * length * length)
}

/// Orientation of an offset reduced into `[0, pi)`.
pub fn orientation(dx: i64, dy: i64) -> f64 {
    let t = (dy as f64).atan2(dx as f64);
    let t = t.rem_euclid(PI);
    // rem_euclid can round up to exactly pi for tiny negative angles
    if t >= PI {
        0.0
    } else {
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodSystem {
    radius: usize,
    mode: NeighborhoodMode,
    families: Vec<CliqueFamily>,
}

impl NeighborhoodSystem {
    pub fn build(radius: usize, mode: NeighborhoodMode) -> Result<Self> {
        if radius < 1 {
            return Err(Error::InvalidArgument(format!(
                "clique radius must be >= 1, got {radius}"
            )));
        }
        let offsets: Vec<(i64, i64)> = match mode {
            NeighborhoodMode::AxisOnly => {
                if radius != 1 {
                    return Err(Error::InvalidArgument(format!(
                        "axis-only neighborhood requires radius 1, got {radius}"
                    )));
                }
                vec![(1, 0), (0, 1)]
            }
            NeighborhoodMode::FullBox => perimeter_representatives(radius as i64),
        };
        Ok(Self::from_offsets(radius, mode, &offsets))
    }

    /// Builds families from arbitrary distinct-orientation offsets. Angular
    /// increments are forward differences of the sorted orientations, with
    /// the last one wrapping through pi.
    fn from_offsets(radius: usize, mode: NeighborhoodMode, offsets: &[(i64, i64)]) -> Self {
        let mut oriented: Vec<(f64, i64, i64)> = offsets
            .iter()
            .map(|&(dx, dy)| (orientation(dx, dy), dx, dy))
            .collect();
        oriented.sort_by(|a, b| a.0.total_cmp(&b.0));
        let m = oriented.len();
        let families = oriented
            .iter()
            .enumerate()
            .map(|(i, &(theta, dx, dy))| {
                let next = if i + 1 < m {
                    oriented[i + 1].0
                } else {
                    oriented[0].0 + PI
                };
                CliqueFamily::new(i, dx, dy, theta, next - theta)
            })
            .collect();
        NeighborhoodSystem {
            radius,
            mode,
            families,
        }
    }

    /// Same orientations and angular increments with every offset
    /// multiplied by `factor`.
    pub fn scaled(&self, factor: i64) -> Result<Self> {
        if factor < 1 {
            return Err(Error::InvalidArgument(format!(
                "offset scale must be >= 1, got {factor}"
            )));
        }
        let families = self
            .families
            .iter()
            .map(|f| {
                CliqueFamily::new(
                    f.index,
                    f.dx * factor,
                    f.dy * factor,
                    f.theta,
                    f.delta_theta,
                )
            })
            .collect();
        Ok(NeighborhoodSystem {
            radius: self.radius * factor as usize,
            mode: self.mode,
            families,
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn mode(&self) -> NeighborhoodMode {
        self.mode
    }

    pub fn families(&self) -> &[CliqueFamily] {
        &self.families
    }

    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }

    /// Largest absolute coordinate over all offsets.
    pub fn reach(&self) -> usize {
        self.families
            .iter()
            .map(|f| f.dx.unsigned_abs().max(f.dy.unsigned_abs()) as usize)
            .max()
            .unwrap_or(0)
    }

    /// Every clique of the system fully inside a `width x height` grid, as
    /// linear pixel indices. Cliques with an endpoint outside are skipped.
    pub fn cliques(&self, width: usize, height: usize) -> Cliques<'_> {
        Cliques {
            families: &self.families,
            width,
            height,
            family: 0,
            x: 0,
            y: 0,
        }
    }

    /// CSV rows `i,dx,dy,d_i,theta_i,dtheta_i,w_i` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,dx,dy,d_i,theta_i,dtheta_i,w_i\n");
        for f in &self.families {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                f.index, f.dx, f.dy, f.length, f.theta, f.delta_theta, f.weight
            ));
        }
        out
    }
}

/// Integer points with `max(|dx|, |dy|) = d`, keeping the representative
/// with `dx > 0` (or `dx = 0, dy > 0`) of each `{o, -o}` pair.
fn perimeter_representatives(d: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::with_capacity(4 * d as usize);
    for dx in 0..=d {
        for dy in -d..=d {
            if dx.abs().max(dy.abs()) != d {
                continue;
            }
            if dx > 0 || dy > 0 {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// One triple clique `(p - o, p, p + o)` as linear pixel indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Clique {
    pub family: usize,
    pub minus: usize,
    pub center: usize,
    pub plus: usize,
}

pub struct Cliques<'a> {
    families: &'a [CliqueFamily],
    width: usize,
    height: usize,
    family: usize,
    x: usize,
    y: usize,
}

impl Iterator for Cliques<'_> {
    type Item = Clique;

    fn next(&mut self) -> Option<Clique> {
        loop {
            let fam = self.families.get(self.family)?;
            let (ax, ay) = (
                fam.dx.unsigned_abs() as usize,
                fam.dy.unsigned_abs() as usize,
            );
            if 2 * ax >= self.width || 2 * ay >= self.height {
                self.next_family();
                continue;
            }
            // valid centers form the box [ax, w - ax) x [ay, h - ay)
            if self.y < ay {
                self.y = ay;
            }
            if self.x < ax {
                self.x = ax;
            }
            if self.x >= self.width - ax {
                self.x = ax;
                self.y += 1;
            }
            if self.y >= self.height - ay {
                self.next_family();
                continue;
            }
            let (x, y) = (self.x as i64, self.y as i64);
            let w = self.width as i64;
            let lin = |px: i64, py: i64| (py * w + px) as usize;
            let clique = Clique {
                family: fam.index,
                minus: lin(x - fam.dx, y - fam.dy),
                center: lin(x, y),
                plus: lin(x + fam.dx, y + fam.dy),
            };
            self.x += 1;
            return Some(clique);
        }
    }
}

impl Cliques<'_> {
    fn next_family(&mut self) {
        self.family += 1;
        self.x = 0;
        self.y = 0;
    }
}
