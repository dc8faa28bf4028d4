//! Weighted point clouds in ℂ² and their comparison.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::henon::{FiltrationGeometry, MapSpec, Point};
use crate::saddle::{periodic_points, SeedSpec};

/// Coordinates this close to a bin edge, in bin units, are moved onto it.
const EDGE_SNAP: f64 = 1e-9;

/// Probability measure supported on finitely many points.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Normalizes nonnegative weights to total mass one.
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidInput("points and weights differ in length"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if points.is_empty() || total <= 0.0 {
            return Err(Error::EmptyMeasure);
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(EmpiricalMeasure { points, weights })
    }

    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::new(points, w)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Mass per z-plane box over `[-radius, radius]²`, row-major with the
    /// real part along rows; the final entry collects mass outside the square.
    /// Bins are half-open `[lo, hi)` except the last, which also holds `radius`.
    pub fn z_histogram(&self, boxes: usize, radius: f64) -> Vec<f64> {
        let mut h = vec![0.0; boxes * boxes + 1];
        let bin = |x: f64| -> Option<usize> {
            if !(x >= -radius && x <= radius) {
                return None;
            }
            let mut u = (x + radius) / (2.0 * radius) * boxes as f64;
            if (u - u.round()).abs() < EDGE_SNAP {
                u = u.round();
            }
            Some((u.floor() as usize).min(boxes - 1))
        };
        for (p, w) in self.points.iter().zip(&self.weights) {
            match (bin(p.z.re), bin(p.z.im)) {
                (Some(i), Some(j)) => h[j * boxes + i] += w,
                _ => h[boxes * boxes] += w,
            }
        }
        h
    }
}

/// Total-variation distance between the z-plane box histograms of two
/// measures over `[-radius, radius]²` with `boxes²` half-open bins.
pub fn compare_measures(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    boxes: usize,
    radius: f64,
) -> Result<f64> {
    if boxes == 0 || !(radius > 0.0) {
        return Err(Error::InvalidInput("histogram needs boxes ≥ 1 and a positive radius"));
    }
    let (ha, hb) = (a.z_histogram(boxes, radius), b.z_histogram(boxes, radius));
    let tv = 0.5 * ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum::<f64>();
    Ok(tv.clamp(0.0, 1.0))
}

/// Equal weights on every point of every saddle orbit of period `1..=nmax`.
pub fn mu_samples_periodic(
    f: &MapSpec,
    geom: &FiltrationGeometry,
    nmax: usize,
    seeds: &SeedSpec,
) -> Result<EmpiricalMeasure> {
    if nmax == 0 {
        return Err(Error::InvalidInput("nmax must be at least 1"));
    }
    let mut pts = Vec::new();
    for n in 1..=nmax {
        for o in periodic_points(f, geom, n, seeds).orbits {
            if o.is_saddle() {
                pts.extend(o.points);
            }
        }
    }
    if pts.is_empty() {
        return Err(Error::EmptySet);
    }
    EmpiricalMeasure::uniform(pts)
}
