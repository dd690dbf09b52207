//! Z-buffered triangle rasterizer with Gouraud colour interpolation.
//!
//! Pixel `(x, y)` samples the point `(x + 0.5, y + 0.5)`. Barycentric
//! weights are screen-space; a fragment wins when its depth is strictly
//! smaller than the stored one, so ties keep the earlier triangle.

use crate::geometry::Point2;

/// Rendered colour image with depth and coverage buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB, three values per pixel, in [0, 1].
    pub pixels: Vec<f64>,
    /// Camera-space depth in mm, `+inf` where nothing was drawn.
    pub depth: Vec<f64>,
    /// Source triangle per pixel.
    pub coverage: Vec<Option<u32>>,
}

impl RenderedImage {
    /// Black image with empty depth and coverage.
    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; 3 * width * height],
            depth: vec![f64::INFINITY; width * height],
            coverage: vec![None; width * height],
        }
    }

    /// Image without depth or coverage information (e.g. loaded from disk).
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), 3 * width * height);
        Self {
            pixels,
            ..Self::blank(width, height)
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn covered_count(&self) -> usize {
        self.coverage.iter().filter(|c| c.is_some()).count()
    }

    /// Bounding box `(x0, y0, x1, y1)` of covered pixels, inclusive.
    pub fn coverage_bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut out: Option<(usize, usize, usize, usize)> = None;
        for (i, c) in self.coverage.iter().enumerate() {
            if c.is_some() {
                let (x, y) = (i % self.width, i / self.width);
                out = Some(match out {
                    None => (x, y, x, y),
                    Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
                });
            }
        }
        out
    }
}

pub(crate) fn edge(a: &Point2, b: &Point2, p: &Point2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Screen-space barycentric weights of `p` in triangle `(a, b, c)`.
pub(crate) fn barycentric(a: &Point2, b: &Point2, c: &Point2, p: &Point2) -> Option<[f64; 3]> {
    let area = edge(a, b, c);
    if area == 0.0 || !area.is_finite() {
        return None;
    }
    Some([edge(b, c, p) / area, edge(c, a, p) / area, edge(a, b, p) / area])
}

/// Projected vertex: pixel position and camera depth (`None` if behind camera).
pub(crate) type ScreenVertex = Option<(Point2, f64)>;

/// Rasterizes triangles with per-vertex colours into a fresh image.
///
/// Triangles with any vertex behind the camera are skipped.
pub(crate) fn rasterize(
    width: usize,
    height: usize,
    screen: &[ScreenVertex],
    triangles: &[[usize; 3]],
    colors: &[[f64; 3]],
) -> RenderedImage {
    let mut img = RenderedImage::blank(width, height);
    for (t, tri) in triangles.iter().enumerate() {
        let (Some(a), Some(b), Some(c)) = (screen[tri[0]], screen[tri[1]], screen[tri[2]]) else {
            continue;
        };
        let xs = [a.0.x, b.0.x, c.0.x];
        let ys = [a.0.y, b.0.y, c.0.y];
        let lo_x = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi_x = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo_y = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi_y = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi_x < 0.0 || hi_y < 0.0 || lo_x > width as f64 || lo_y > height as f64 {
            continue;
        }
        let x0 = (lo_x - 0.5).ceil().max(0.0) as usize;
        let y0 = (lo_y - 0.5).ceil().max(0.0) as usize;
        let x1 = ((hi_x - 0.5).floor() as i64).min(width as i64 - 1);
        let y1 = ((hi_y - 0.5).floor() as i64).min(height as i64 - 1);
        if x1 < x0 as i64 || y1 < y0 as i64 {
            continue;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let p = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
                let Some(w) = barycentric(&a.0, &b.0, &c.0, &p) else { continue };
                if w.iter().any(|v| *v < 0.0) {
                    continue;
                }
                let z = w[0] * a.1 + w[1] * b.1 + w[2] * c.1;
                let i = y * width + x;
                if z < img.depth[i] {
                    img.depth[i] = z;
                    img.coverage[i] = Some(t as u32);
                    for ch in 0..3 {
                        let v = w[0] * colors[tri[0]][ch] + w[1] * colors[tri[1]][ch] + w[2] * colors[tri[2]][ch];
                        img.pixels[3 * i + ch] = v.clamp(0.0, 1.0);
                    }
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearer_triangle_wins() {
        let screen: Vec<ScreenVertex> = vec![
            Some((Point2::new(0.0, 0.0), 5.0)),
            Some((Point2::new(8.0, 0.0), 5.0)),
            Some((Point2::new(0.0, 8.0), 5.0)),
            Some((Point2::new(0.0, 0.0), 2.0)),
            Some((Point2::new(8.0, 0.0), 2.0)),
            Some((Point2::new(0.0, 8.0), 2.0)),
        ];
        let tris = [[0, 1, 2], [3, 4, 5]];
        let colors = [[1.0, 0.0, 0.0]; 3].iter().chain(&[[0.0, 1.0, 0.0]; 3]).copied().collect::<Vec<_>>();
        let img = rasterize(8, 8, &screen, &tris, &colors);
        assert_eq!(img.coverage[0], Some(1));
        assert_eq!(img.pixel(0, 0), [0.0, 1.0, 0.0]);
        assert_eq!(img.depth[0], 2.0);
        // pixel centres strictly outside the hypotenuse stay empty
        assert_eq!(img.coverage[7 * 8 + 7], None);
        assert!(img.depth[7 * 8 + 7].is_infinite());
    }

    #[test]
    fn interpolates_vertex_colours() {
        let screen: Vec<ScreenVertex> = vec![
            Some((Point2::new(0.0, 0.0), 1.0)),
            Some((Point2::new(4.0, 0.0), 1.0)),
            Some((Point2::new(0.0, 4.0), 1.0)),
        ];
        let colors = [[0.0; 3], [1.0, 1.0, 1.0], [0.0; 3]];
        let img = rasterize(4, 4, &screen, &[[0, 1, 2]], &colors);
        // centre (1.5, 0.5) has weight 1.5/4 on vertex 1
        assert!((img.pixel(1, 0)[0] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn behind_camera_triangles_skipped() {
        let screen: Vec<ScreenVertex> = vec![Some((Point2::new(0.0, 0.0), 1.0)), None, Some((Point2::new(0.0, 4.0), 1.0))];
        let img = rasterize(4, 4, &screen, &[[0, 1, 2]], &[[1.0; 3]; 3]);
        assert_eq!(img.covered_count(), 0);
    }
}
