//! Boundary tracing and polygon rasterization on binary images.

use super::{expect_binary, ImagingError};
use crate::raster::{Channels, Raster};

/// An ordered list of boundary pixels. Closed contours (the only kind the
/// tracer produces) always carry at least three points; tiny one- or
/// two-pixel components are padded by repeating their last point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    points: Vec<(u32, u32)>,
    closed: bool,
}

impl Contour {
    /// Builds a contour, enforcing that it is non-empty and that closed
    /// contours have at least three points.
    pub fn new(points: Vec<(u32, u32)>, closed: bool) -> Result<Self, ImagingError> {
        if points.is_empty() {
            return Err(ImagingError::InvalidContour { reason: "empty" });
        }
        if closed && points.len() < 3 {
            return Err(ImagingError::InvalidContour {
                reason: "closed with fewer than 3 points",
            });
        }
        Ok(Self { points, closed })
    }

    #[must_use]
    pub fn points(&self) -> &[(u32, u32)] {
        &self.points
    }

    #[must_use]
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Shoelace area of the polygon through the pixel centers.
    #[must_use]
    pub fn area(&self) -> f64 {
        shoelace(&self.points)
    }
}

fn shoelace(points: &[(u32, u32)]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let mut sum: i64 = 0;
    for i in 0..points.len() {
        let (x1, y1) = points[i];
        let (x2, y2) = points[(i + 1) % points.len()];
        sum += i64::from(x1) * i64::from(y2) - i64::from(x2) * i64::from(y1);
    }
    (sum.abs() as f64) / 2.0
}

/// Clockwise 8-neighborhood starting west (image coordinates, y down).
const NEIGHBORS: [(i64, i64); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

/// Traces the outer boundary of the 8-connected foreground component with
/// the largest enclosed (shoelace) area. Area ties are broken in favor of
/// the component whose first pixel comes earliest in row-major order.
///
/// Errors with [`ImagingError::NoForeground`] when the image has no
/// foreground pixel; the input must be binary (0/255).
pub fn largest_contour(img: &Raster) -> Result<Contour, ImagingError> {
    expect_binary(img)?;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let fg = |x: i64, y: i64| -> bool {
        x >= 0 && y >= 0 && x < w && y < h && img.gray(x as u32, y as u32) == 255
    };

    let mut visited = vec![false; (w * h) as usize];
    let mut best: Option<(f64, Vec<(u32, u32)>)> = None;

    for sy in 0..h {
        for sx in 0..w {
            if !fg(sx, sy) || visited[(sy * w + sx) as usize] {
                continue;
            }
            // Flood-fill to mark the component visited (8-connected).
            let mut stack = vec![(sx, sy)];
            visited[(sy * w + sx) as usize] = true;
            while let Some((x, y)) = stack.pop() {
                for (dx, dy) in NEIGHBORS {
                    let (nx, ny) = (x + dx, y + dy);
                    if fg(nx, ny) && !visited[(ny * w + nx) as usize] {
                        visited[(ny * w + nx) as usize] = true;
                        stack.push((nx, ny));
                    }
                }
            }
            // A boundary trace enters each pixel at most once per direction,
            // so 4x the pixel count bounds any well-formed walk.
            let trace = trace_boundary(&fg, (sx, sy), 4 * (w * h) as usize + 8);
            let area = shoelace(&trace);
            if best.as_ref().is_none_or(|(a, _)| area > *a) {
                best = Some((area, trace));
            }
        }
    }

    let (_, mut points) = best.ok_or(ImagingError::NoForeground)?;
    while points.len() < 3 {
        let last = *points.last().expect("trace is never empty");
        points.push(last);
    }
    Contour::new(points, true)
}

/// Moore-neighbor boundary trace with Jacob's stopping criterion, starting at
/// the component's row-major-first pixel (whose west neighbor is background).
fn trace_boundary(
    fg: &dyn Fn(i64, i64) -> bool,
    start: (i64, i64),
    max_steps: usize,
) -> Vec<(u32, u32)> {
    let mut points = vec![(start.0 as u32, start.1 as u32)];
    let mut p = start;
    // Backtrack: the background cell we entered the current pixel from.
    let start_back = (start.0 - 1, start.1);
    let mut back = start_back;

    loop {
        let b_idx = NEIGHBORS
            .iter()
            .position(|&(dx, dy)| (p.0 + dx, p.1 + dy) == back)
            .expect("backtrack is always 8-adjacent");
        let mut next = None;
        for k in 1..=8 {
            let idx = (b_idx + k) % 8;
            let cand = (p.0 + NEIGHBORS[idx].0, p.1 + NEIGHBORS[idx].1);
            if fg(cand.0, cand.1) {
                let prev_idx = (b_idx + k - 1) % 8;
                next = Some((cand, (p.0 + NEIGHBORS[prev_idx].0, p.1 + NEIGHBORS[prev_idx].1)));
                break;
            }
        }
        let Some((n, new_back)) = next else {
            return points; // isolated pixel
        };
        p = n;
        back = new_back;
        if p == start && back == start_back {
            return points;
        }
        points.push((p.0 as u32, p.1 as u32));
        if points.len() > max_steps {
            debug_assert!(false, "boundary trace exceeded step bound");
            return points;
        }
    }
}

/// Rasterizes a closed contour into a `width` x `height` binary mask: the
/// polygon interior (even-odd rule over pixel centers) plus every boundary
/// pixel becomes 255.
///
/// Errors on open contours and on points outside the target bounds.
pub fn fill_contour(contour: &Contour, width: u32, height: u32) -> Result<Raster, ImagingError> {
    if !contour.is_closed() {
        return Err(ImagingError::InvalidContour { reason: "open" });
    }
    if width == 0 || height == 0 {
        return Err(ImagingError::InvalidParameter(format!(
            "fill target must be at least 1x1, got {width}x{height}"
        )));
    }
    let pts = contour.points();
    if let Some(&(x, y)) = pts.iter().find(|&&(x, y)| x >= width || y >= height) {
        return Err(ImagingError::InvalidParameter(format!(
            "contour point ({x}, {y}) outside {width}x{height}"
        )));
    }

    let mut out = Raster::filled(width, height, Channels::Gray, 0);

    // Interior: even-odd scanline fill over pixel centers. The half-open
    // vertical rule ([min(y), max(y)) per edge) counts each vertex once.
    let mut crossings: Vec<f64> = Vec::new();
    for y in 0..height {
        crossings.clear();
        let fy = f64::from(y);
        for i in 0..pts.len() {
            let (x1, y1) = pts[i];
            let (x2, y2) = pts[(i + 1) % pts.len()];
            if y1 == y2 {
                continue;
            }
            let (ylo, yhi) = (y1.min(y2), y1.max(y2));
            if y < ylo || y >= yhi {
                continue;
            }
            let t = (fy - f64::from(y1)) / (f64::from(y2) - f64::from(y1));
            crossings.push(f64::from(x1) + t * (f64::from(x2) - f64::from(x1)));
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).expect("finite crossings"));
        for pair in crossings.chunks_exact(2) {
            let lo = (pair[0] - 1e-9).ceil().max(0.0) as u32;
            let hi = ((pair[1] + 1e-9).floor().min(f64::from(width - 1))) as i64;
            for x in lo as i64..=hi {
                out.set_pixel(x as u32, y, &[255]);
            }
        }
    }

    // Boundary: stamp every edge, including the closing segment.
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        for (x, y) in bresenham(a, b) {
            out.set_pixel(x, y, &[255]);
        }
    }
    Ok(out)
}

fn bresenham(a: (u32, u32), b: (u32, u32)) -> Vec<(u32, u32)> {
    let (mut x0, mut y0) = (a.0 as i64, a.1 as i64);
    let (x1, y1) = (b.0 as i64, b.1 as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut pts = Vec::new();
    loop {
        pts.push((x0 as u32, y0 as u32));
        if x0 == x1 && y0 == y1 {
            return pts;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}
