//! Binary PGM/PPM rasters and CSV tables.

use std::io::Read;
use std::path::Path;

use henonlab_core::family::Outcome;
use henonlab_core::potential::PotentialEvaluator;
use henonlab_core::slice::SliceGrid;
use henonlab_core::{c, Point, Side, Verdict};

use crate::error::{CliError, CliResult};
use crate::json::verdict_name;

/// Floating-point text with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Binary grayscale image; `pixels` are row-major, top row first.
pub fn pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel buffer does not match the image size");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Binary RGB image; `pixels` are row-major, top row first.
pub fn ppm(width: usize, height: usize, pixels: &[[u8; 3]]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel buffer does not match the image size");
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().flatten());
    out
}

/// Parsed header and payload of a binary PGM or PPM file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub magic: [u8; 2],
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// Reads back the files produced by [`pgm`] and [`ppm`].
pub fn parse_raster(bytes: &[u8]) -> Option<Raster> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    let magic: [u8; 2] = fields[0].as_bytes().try_into().ok()?;
    let channels = match &magic {
        b"P5" => 1,
        b"P6" => 3,
        _ => return None,
    };
    let (width, height): (usize, usize) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    if fields[3] != "255" {
        return None;
    }
    let data = bytes.get(pos + 1..)?.to_vec();
    (data.len() == width * height * channels).then_some(Raster { magic, width, height, data })
}

pub fn verdict_gray(v: Verdict) -> u8 {
    match v {
        Verdict::Inside => 0,
        Verdict::Unresolved => 128,
        Verdict::Escaped => 255,
    }
}

pub fn outcome_rgb(o: Outcome) -> [u8; 3] {
    match o {
        Outcome::Connected => [0, 0, 255],
        Outcome::Disconnected => [255, 0, 0],
        Outcome::Unresolved => [128, 128, 128],
    }
}

/// Gray raster of a tri-state grid stored row-major from the bottom row up;
/// the image shows the top row first.
pub fn tri_state_pgm(n: usize, cells: &[Verdict]) -> Vec<u8> {
    let pixels: Vec<u8> = (0..n)
        .rev()
        .flat_map(|j| (0..n).map(move |i| verdict_gray(cells[j * n + i])))
        .collect();
    pgm(n, n, &pixels)
}

pub fn slice_pgm(grid: &SliceGrid) -> Vec<u8> {
    tri_state_pgm(grid.resolution, &grid.cells)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Reads points from CSV with columns `re(z), im(z), re(w), im(w)`; a header
/// row and extra trailing columns are allowed.
pub fn read_points_csv<R: Read>(reader: R, path: &Path) -> CliResult<Vec<Point>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let malformed = |message: String| CliError::Parse { path: path.to_path_buf(), message };
    let mut pts = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| malformed(e.to_string()))?;
        if rec.iter().all(|s| s.is_empty()) {
            continue;
        }
        let vals: Result<Vec<f64>, _> = rec.iter().take(4).map(str::parse::<f64>).collect();
        match vals {
            Ok(v) if v.len() == 4 => pts.push(Point::new(c(v[0], v[1]), c(v[2], v[3]))),
            Err(_) if k == 0 => continue,
            _ => return Err(malformed(format!("row {} needs four numeric columns", k + 1))),
        }
    }
    Ok(pts)
}

/// Evaluates the potential of `side` and membership at every point and emits
/// CSV with columns `re_z, im_z, re_w, im_w, value, verdict`. A value is empty
/// when the potential could not be resolved.
pub fn potential_csv(ev: &PotentialEvaluator, points: &[Point], side: Side) -> String {
    use rayon::prelude::*;
    let rows: Vec<String> = points
        .par_iter()
        .map(|p| {
            let value = match side {
                Side::Forward => ev.green_plus(*p),
                Side::Backward => ev.green_minus(*p),
            };
            let value = value.map(fmt_f64).unwrap_or_default();
            let verdict = verdict_name(ev.k_membership(*p, side));
            format!(
                "{},{},{},{},{},{}\n",
                fmt_f64(p.z.re),
                fmt_f64(p.z.im),
                fmt_f64(p.w.re),
                fmt_f64(p.w.im),
                value,
                verdict
            )
        })
        .collect();
    let mut out = String::from("re_z,im_z,re_w,im_w,value,verdict\n");
    out.extend(rows);
    out
}

/// CSV of a weighted point cloud.
pub fn cloud_csv(points: &[Point], weights: &[f64]) -> String {
    let mut out = String::from("re_z,im_z,re_w,im_w,weight\n");
    for (p, w) in points.iter().zip(weights) {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(p.z.re),
            fmt_f64(p.z.im),
            fmt_f64(p.w.re),
            fmt_f64(p.w.im),
            fmt_f64(*w)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use henonlab_core::henon::choose_radius;
    use henonlab_core::MapSpec;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
            let digits = s.split('e').next().unwrap().chars().filter(char::is_ascii_digit).count();
            assert_eq!(digits, 17, "{s}");
        }
    }

    #[test]
    fn raster_headers() {
        let img = pgm(2, 1, &[0, 255]);
        assert_eq!(&img[..11], b"P5\n2 1\n255\n");
        let r = parse_raster(&img).unwrap();
        assert_eq!((r.width, r.height, r.data), (2, 1, vec![0, 255]));
        let img = ppm(1, 2, &[outcome_rgb(Outcome::Connected), outcome_rgb(Outcome::Unresolved)]);
        let r = parse_raster(&img).unwrap();
        assert_eq!(&r.magic, b"P6");
        assert_eq!(r.data, vec![0, 0, 255, 128, 128, 128]);
        assert!(parse_raster(b"P5\n2 2\n255\n\x00").is_none());
    }

    #[test]
    fn tri_state_rows_are_flipped() {
        let cells = [Verdict::Inside, Verdict::Escaped, Verdict::Unresolved, Verdict::Inside];
        let r = parse_raster(&tri_state_pgm(2, &cells)).unwrap();
        assert_eq!(r.data, vec![128, 0, 0, 255]);
    }

    #[test]
    fn points_csv_and_potential_batch() {
        let text = "re_z,im_z,re_w,im_w\n1e6,0,0,0\n0.5, 0, 0, 0, extra\n";
        let pts = read_points_csv(text.as_bytes(), Path::new("pts.csv")).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(read_points_csv("1,2,3\n".as_bytes(), Path::new("bad.csv")).is_err());

        let f = MapSpec::quadratic_real(0.0, 0.05).unwrap();
        let ev = PotentialEvaluator::new(f.clone(), choose_radius(&f, 1.25).unwrap());
        let out = potential_csv(&ev, &pts, Side::Forward);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "re_z,im_z,re_w,im_w,value,verdict");
        let big: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(big[5], "escaped");
        assert!((big[4].parse::<f64>().unwrap() - 1e6f64.ln()).abs() < 1e-3);
        assert!(lines[2].ends_with(",inside"));
    }
}
