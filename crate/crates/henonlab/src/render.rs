use henonlab_core::contour::Rect;
use henonlab_core::potential::PotentialEvaluator;
use henonlab_core::{c, Error, Point, C};
use rayon::prelude::*;

use crate::formats::pgm;

/// Grayscale picture of `G⁺` on the horizontal slice `w = w0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenImage {
    /// PGM file contents.
    pub bytes: Vec<u8>,
    pub g_max: f64,
    /// Pixels whose potential could not be resolved; drawn as 0.
    pub unresolved: usize,
}

/// Pixel value `clamp(255·G⁺/G_max)` over a square `resolution²` raster of
/// `window` in the z-plane; the top image row has the largest `Im z`.
pub fn render_green(
    ev: &PotentialEvaluator,
    window: Rect,
    w0: C,
    resolution: usize,
) -> henonlab_core::Result<GreenImage> {
    let r = ev.geom.radius;
    let inside = |z: C| z.re >= -r && z.re <= r && z.im >= -r && z.im <= r;
    if resolution == 0 || !(window.lo.re < window.hi.re && window.lo.im < window.hi.im) {
        return Err(Error::InvalidInput("window must be a nonempty rectangle"));
    }
    if !inside(window.lo) || !inside(window.hi) {
        return Err(Error::InvalidInput("window must lie within [-R, R]²"));
    }
    let n = resolution;
    let (hx, hy) = (window.width() / n as f64, (window.hi.im - window.lo.im) / n as f64);
    let values: Vec<Option<f64>> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, row) = (k % n, k / n);
            let j = n - 1 - row;
            let z = c(window.lo.re + (i as f64 + 0.5) * hx, window.lo.im + (j as f64 + 0.5) * hy);
            ev.green_plus(Point::new(z, w0)).ok()
        })
        .collect();
    let g_max = values.iter().flatten().fold(0.0f64, |m, &g| m.max(g));
    let unresolved = values.iter().filter(|v| v.is_none()).count();
    let pixels: Vec<u8> = values
        .iter()
        .map(|v| match v {
            Some(g) if g_max > 0.0 => (255.0 * g / g_max).round().clamp(0.0, 255.0) as u8,
            _ => 0,
        })
        .collect();
    Ok(GreenImage {
        bytes: pgm(n, n, &pixels),
        g_max,
        unresolved,
    })
}
