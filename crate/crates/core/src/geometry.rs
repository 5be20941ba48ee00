//! Integral geometry behind the clique weights.
//!
//! For a contour point with curvature `kappa` and tangent `u`, the set of
//! pixels `p` inside the osculating disk whose clique `(p - d u, p, p + d u)`
//! fires has area `A(kappa, d) = kappa d^3 / 4 + O(d^4)`. This module has
//! the closed forms, an independent rasterization count of the same set,
//! and the rasterized-circle accuracy experiment.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::energy::curvature_energy;
use crate::error::{Error, Result};
use crate::grid::GridLabeling;
use crate::neighborhood::NeighborhoodSystem;

fn check_chord(kappa: f64, d: f64) -> Result<()> {
    if kappa <= 0.0 || d <= 0.0 || !kappa.is_finite() || !d.is_finite() {
        return Err(Error::Domain(format!(
            "curvature and half-chord must be positive, got kappa={kappa}, d={d}"
        )));
    }
    if kappa * d >= 1.0 {
        return Err(Error::Domain(format!(
            "half-chord {d} does not fit in a circle of radius {}",
            1.0 / kappa
        )));
    }
    Ok(())
}

/// Area of the circle of curvature `kappa` on one side of a half chord of
/// length `d`: `gamma / (2 kappa^2) - (d / 2) sqrt(1/kappa^2 - d^2)` with
/// `gamma = asin(kappa d)`.
pub fn cap_area_g(kappa: f64, d: f64) -> Result<f64> {
    check_chord(kappa, d)?;
    Ok(cap_area_unchecked(kappa, d))
}

fn cap_area_unchecked(kappa: f64, d: f64) -> f64 {
    let r2 = 1.0 / (kappa * kappa);
    0.5 * r2 * (kappa * d).asin() - 0.5 * d * (r2 - d * d).sqrt()
}

/// Closed-form fired area.
pub fn fired_area_a(kappa: f64, d: f64) -> Result<f64> {
    check_chord(kappa, d)?;
    let r2 = 1.0 / (kappa * kappa);
    Ok(
        -r2 * (kappa * d).asin() + 2.0 * r2 * (0.5 * kappa * d).asin() - d * (r2 - d * d).sqrt()
            + d * (r2 - 0.25 * d * d).sqrt(),
    )
}

/// Fired area assembled from cap areas: the cap beyond half chord `d`,
/// minus twice the band between the half chords `d/2` and `d` that lies
/// outside the fired set. `g` is the height of that band.
pub fn fired_area_from_caps(kappa: f64, d: f64) -> Result<f64> {
    check_chord(kappa, d)?;
    let r2 = 1.0 / (kappa * kappa);
    let g = (r2 - 0.25 * d * d).sqrt() - (r2 - d * d).sqrt();
    let full = cap_area_unchecked(kappa, d);
    let half = cap_area_unchecked(kappa, 0.5 * d);
    let band = full - half - 0.5 * g * d;
    Ok(2.0 * (full - 2.0 * band))
}

/// Leading-order fired area `d^3 kappa / 4`.
pub fn taylor_area(kappa: f64, d: f64) -> f64 {
    d * d * d * kappa / 4.0
}

/// Counts grid cells of side `subpixel` whose centers `p` satisfy: `p` in
/// the disk `B` of radius `r` centered at the origin, `|p - n| <= r` for
/// the tangency point `n` with tangent `(cos theta, sin theta)`, and
/// `p +- d u` both outside `B`. Returns count times cell area. The cell
/// lattice is anchored at the disk center.
pub fn rasterization_oracle(r: f64, d: f64, theta: f64, subpixel: f64) -> Result<f64> {
    Ok(raster_count(r, d, theta, subpixel)? as f64 * subpixel * subpixel)
}

fn raster_count(r: f64, d: f64, theta: f64, subpixel: f64) -> Result<u64> {
    if r <= 0.0 || d <= 0.0 || !r.is_finite() || !d.is_finite() {
        return Err(Error::Domain(format!(
            "radius and clique length must be positive, got r={r}, d={d}"
        )));
    }
    if d >= r {
        return Err(Error::Domain(format!(
            "clique length {d} must be below the radius {r}"
        )));
    }
    if subpixel <= 0.0 || !subpixel.is_finite() {
        return Err(Error::Domain(format!(
            "subpixel must be positive, got {subpixel}"
        )));
    }
    let (ux, uy) = (theta.cos(), theta.sin());
    // outward normal at the tangency point, rotated +90 degrees from u
    let (nx, ny) = (-uy * r, ux * r);
    let r2 = r * r;

    // the set lies in the local box |t| <= d, 0 <= depth <= sagitta
    let depth = r - (r2 - d * d).sqrt();
    let corners = [(-d, 0.0), (d, 0.0), (-d, depth), (d, depth)];
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (t, h) in corners {
        // depth runs from n toward the disk center
        let px = nx + t * ux - h * nx / r;
        let py = ny + t * uy - h * ny / r;
        x0 = x0.min(px);
        x1 = x1.max(px);
        y0 = y0.min(py);
        y1 = y1.max(py);
    }
    let i0 = (x0 / subpixel).floor() as i64 - 1;
    let i1 = (x1 / subpixel).ceil() as i64 + 1;
    let j0 = (y0 / subpixel).floor() as i64 - 1;
    let j1 = (y1 / subpixel).ceil() as i64 + 1;

    let inside = |x: f64, y: f64| x * x + y * y <= r2;
    let count = (j0..j1)
        .into_par_iter()
        .map(|j| {
            let py = (j as f64 + 0.5) * subpixel;
            let mut row = 0u64;
            for i in i0..i1 {
                let px = (i as f64 + 0.5) * subpixel;
                if !inside(px, py) {
                    continue;
                }
                let (ex, ey) = (px - nx, py - ny);
                if ex * ex + ey * ey > r2 {
                    continue;
                }
                if !inside(px + d * ux, py + d * uy) && !inside(px - d * ux, py - d * uy) {
                    row += 1;
                }
            }
            row
        })
        .sum();
    Ok(count)
}

/// Result of [`refined_rasterization`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterEstimate {
    pub area: f64,
    pub subpixel: f64,
    pub cells: u64,
    pub halvings: usize,
    pub converged: bool,
}

/// Halves the cell size from `subpixel` until two consecutive counts agree
/// within `rel_tol` and both contain at least `min_cells` cells.
pub fn refined_rasterization(
    r: f64,
    d: f64,
    theta: f64,
    subpixel: f64,
    rel_tol: f64,
    min_cells: u64,
    max_halvings: usize,
) -> Result<RasterEstimate> {
    let mut s = subpixel;
    let mut prev_cells = raster_count(r, d, theta, s)?;
    let mut prev = prev_cells as f64 * s * s;
    for halvings in 1..=max_halvings {
        s *= 0.5;
        let cells = raster_count(r, d, theta, s)?;
        let area = cells as f64 * s * s;
        let stable = (area - prev).abs() <= rel_tol * area.abs();
        if stable && cells >= min_cells && prev_cells >= min_cells {
            return Ok(RasterEstimate {
                area,
                subpixel: s,
                cells,
                halvings,
                converged: true,
            });
        }
        prev = area;
        prev_cells = cells;
    }
    Ok(RasterEstimate {
        area: prev,
        subpixel: s,
        cells: prev_cells,
        halvings: max_halvings,
        converged: false,
    })
}

/// Default refinement: 0.5% agreement between halvings, 1000 cells.
pub fn raster_area(r: f64, d: f64, theta: f64, subpixel: f64) -> Result<RasterEstimate> {
    refined_rasterization(r, d, theta, subpixel, 0.005, 1000, 14)
}

/// Curvature energy of a disk predicted from the closed-form fired area:
/// each family fires on two tangency regions of area `A(1/r, d_i)`.
pub fn integral_disk_energy(r: f64, ns: &NeighborhoodSystem) -> Result<f64> {
    let kappa = 1.0 / r;
    ns.families()
        .iter()
        .map(|f| fired_area_a(kappa, f.length).map(|a| 2.0 * f.weight * a))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleConfig {
    /// Disk centers per axis; the experiment averages `k x k` stratified
    /// sub-pixel center positions. With 1 the disk is centered on a pixel.
    pub center_samples: usize,
    pub seed: u64,
    /// Side of the square grid; `None` picks the smallest safe size.
    pub grid_size: Option<usize>,
}

impl Default for CircleConfig {
    fn default() -> Self {
        CircleConfig {
            center_samples: 16,
            seed: 0,
            grid_size: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleRow {
    pub r: f64,
    pub kappa: f64,
    pub d: usize,
    pub measured: f64,
    pub target: f64,
    pub rel_error: f64,
}

/// Minimum grid side for a disk of radius `r` and cliques reaching `reach`.
pub fn min_circle_grid(r: f64, reach: usize) -> usize {
    (2.0 * (r + reach as f64)).ceil() as usize + 3
}

/// Rasterizes disks of the given radii and compares their curvature energy
/// with the exact squared-curvature integral `2 pi / r`.
pub fn circle_experiment(
    radii: &[f64],
    ns: &NeighborhoodSystem,
    cfg: &CircleConfig,
) -> Result<Vec<CircleRow>> {
    if cfg.center_samples == 0 {
        return Err(Error::InvalidArgument("center_samples must be >= 1".into()));
    }
    let k = cfg.center_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        if r <= 0.0 || !r.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "radius must be positive, got {r}"
            )));
        }
        let needed = min_circle_grid(r, ns.reach());
        let n = match cfg.grid_size {
            Some(n) if n < needed => {
                return Err(Error::InvalidArgument(format!(
                    "grid side {n} too small for radius {r}, need at least {needed}"
                )))
            }
            Some(n) => n,
            // jittered centers move up to half a pixel
            None => needed + if k > 1 { 2 } else { 0 },
        };
        let c = (n - 1) as f64 / 2.0;
        let offsets: Vec<(f64, f64)> = if k == 1 {
            vec![(0.0, 0.0)]
        } else {
            let mut v = Vec::with_capacity(k * k);
            for i in 0..k {
                for j in 0..k {
                    let (a, b): (f64, f64) = (rng.gen(), rng.gen());
                    v.push((
                        (i as f64 + a) / k as f64 - 0.5,
                        (j as f64 + b) / k as f64 - 0.5,
                    ));
                }
            }
            v
        };
        let energies: Vec<f64> = offsets
            .par_iter()
            .map(|&(ox, oy)| {
                GridLabeling::disk(n, n, c + ox, c + oy, r).map(|disk| curvature_energy(&disk, ns))
            })
            .collect::<Result<_>>()?;
        let measured = energies.iter().sum::<f64>() / energies.len() as f64;
        let target = 2.0 * PI / r;
        rows.push(CircleRow {
            r,
            kappa: 1.0 / r,
            d: ns.radius(),
            measured,
            target,
            rel_error: (measured - target) / target,
        });
    }
    Ok(rows)
}

pub fn circle_csv(rows: &[CircleRow]) -> String {
    let mut out = String::from("r,kappa,d,measured,target,rel_error\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.r, row.kappa, row.d, row.measured, row.target, row.rel_error
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighborhood::NeighborhoodMode;
    use rand::Rng;

    /// Midpoint-rule area of the half cap: points with `|x| in [0, d]` and
    /// `y > sqrt(r^2 - d^2)` inside the circle, one side of the axis.
    fn cap_by_quadrature(kappa: f64, d: f64) -> f64 {
        let r = 1.0 / kappa;
        let n = 200_000;
        let h = d / n as f64;
        let base = (r * r - d * d).sqrt();
        (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) * h;
                ((r * r - x * x).sqrt() - base) * h
            })
            .sum()
    }

    #[test]
    fn cap_area_values() {
        let g = cap_area_g(1.0, 0.5).unwrap();
        let direct = 0.5 * 0.5f64.asin() - 0.25 * 0.75f64.sqrt();
        assert!((g - direct).abs() < 1e-15);
        assert!((g - 0.04528).abs() < 1e-4);
        assert!((g - cap_by_quadrature(1.0, 0.5)).abs() < 1e-9);

        let kappa = 0.3;
        let near = cap_area_g(kappa, (1.0 - 1e-9) / kappa).unwrap();
        let quarter = PI / (4.0 * kappa * kappa);
        assert!((near - quarter).abs() / quarter < 1e-3);

        let mut prev = 0.0;
        for i in 1..100 {
            let g = cap_area_g(0.5, i as f64 * 0.0199).unwrap();
            assert!(g > prev);
            prev = g;
        }
    }

    #[test]
    fn domain_errors() {
        assert!(cap_area_g(1.0, 1.0).is_err());
        assert!(cap_area_g(0.0, 0.5).is_err());
        assert!(cap_area_g(1.0, -0.5).is_err());
        assert!(fired_area_a(0.5, 2.0).is_err());
        assert!(rasterization_oracle(2.0, 2.0, 0.0, 0.05).is_err());
        assert!(rasterization_oracle(2.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn taylor_values() {
        assert_eq!(taylor_area(0.25, 2.0), 0.5);
        assert_eq!(taylor_area(0.0, 3.0), 0.0);
    }

    #[test]
    fn fired_area_leading_order() {
        for kd in [0.2, 0.1, 0.05] {
            for kappa in [0.1, 0.5, 1.0] {
                let d = kd / kappa;
                let ratio = fired_area_a(kappa, d).unwrap() / taylor_area(kappa, d);
                assert!((ratio - 1.0).abs() <= kd, "kd={kd}: ratio {ratio}");
            }
        }
    }

    #[test]
    fn fired_area_scaling_law() {
        for (kappa, d) in [(0.1, 2.0), (0.5, 1.0), (0.05, 7.0)] {
            let a = fired_area_a(kappa, d).unwrap();
            let scaled = fired_area_a(kappa / 2.0, 2.0 * d).unwrap();
            assert!((scaled - 4.0 * a).abs() <= 1e-9 * scaled);
        }
    }

    #[test]
    fn composed_and_closed_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let kappa: f64 = rng.gen_range(0.01..2.0);
            let d = rng.gen_range(0.01..0.99) / kappa;
            let a = fired_area_a(kappa, d).unwrap();
            let b = fired_area_from_caps(kappa, d).unwrap();
            assert!(
                (a - b).abs() <= 1e-9 * a.abs(),
                "kappa={kappa} d={d}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn oracle_near_degenerate_chord_is_finite() {
        let r = 3.0;
        let a = rasterization_oracle(r, r * (1.0 - 1e-6), 0.3, 0.05).unwrap();
        assert!(a.is_finite() && a > 0.0 && a <= PI * r * r);
    }

    #[test]
    fn oracle_example_at_r20_d2() {
        let closed = fired_area_a(1.0 / 20.0, 2.0).unwrap();
        let est = raster_area(20.0, 2.0, 0.0, 0.05).unwrap();
        assert!(est.converged);
        assert!((est.area - closed).abs() / closed < 0.02);
        for theta in [PI / 8.0, PI / 4.0] {
            let other = raster_area(20.0, 2.0, theta, 0.05).unwrap();
            assert!((other.area - est.area).abs() / est.area < 0.03);
        }
    }

    #[test]
    fn circle_experiment_rejects_small_grid() {
        let ns = NeighborhoodSystem::build(2, NeighborhoodMode::FullBox).unwrap();
        let cfg = CircleConfig {
            grid_size: Some(10),
            ..Default::default()
        };
        assert!(circle_experiment(&[8.0], &ns, &cfg).is_err());
        assert!(circle_experiment(&[-1.0], &ns, &CircleConfig::default()).is_err());
    }

    #[test]
    fn integral_energy_tracks_target() {
        let ns = NeighborhoodSystem::build(2, NeighborhoodMode::FullBox).unwrap();
        for r in [8.0, 16.0, 32.0] {
            let e = integral_disk_energy(r, &ns).unwrap();
            let target = 2.0 * PI / r;
            assert!((e - target).abs() / target < 0.05, "r={r}: {e} vs {target}");
        }
    }
}
