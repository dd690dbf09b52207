//! 2D Delaunay triangulation of landmark sets.
//!
//! Bowyer-Watson insertion inside a super-triangle, followed by hull
//! completion and a Lawson flip pass. Cocircular quadrilaterals take the
//! diagonal incident to the lowest vertex index among their four corners,
//! which makes the output independent of floating-point insertion order.

use std::collections::HashMap;

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Point2 = Vector2<f64>;

/// Triangulated landmark set. `edges` are `(i, j)` with `i < j`, sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkGraph {
    pub points: Vec<Point2>,
    pub edges: Vec<(usize, usize)>,
    pub triangles: Vec<[usize; 3]>,
}

impl LandmarkGraph {
    /// Same connectivity over a different point set of equal size.
    pub fn transfer(&self, points: Vec<Point2>) -> Result<LandmarkGraph> {
        if points.len() != self.points.len() {
            return Err(Error::LengthMismatch {
                block: "landmark points",
                expected: self.points.len(),
                got: points.len(),
            });
        }
        Ok(LandmarkGraph {
            points,
            edges: self.edges.clone(),
            triangles: self.triangles.clone(),
        })
    }

    pub fn edge_lengths(&self) -> Vec<f64> {
        self.edges
            .iter()
            .map(|&(i, j)| (self.points[i] - self.points[j]).norm())
            .collect()
    }
}

fn orient(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Positive when `d` lies inside the circumcircle of the CCW triangle `abc`.
pub fn incircle(a: &Point2, b: &Point2, c: &Point2, d: &Point2) -> f64 {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

struct Tolerances {
    orient: f64,
    incircle: f64,
}

fn validate(points: &[Point2]) -> Result<Tolerances> {
    let n = points.len();
    if n < 3 {
        return Err(Error::TooFewPoints(n));
    }
    if let Some(bad) = points.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::InvalidInput(format!("point {bad} is not finite")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        (points[i].x, points[i].y, i)
            .partial_cmp(&(points[j].x, points[j].y, j))
            .expect("finite")
    });
    let mut dup: Option<(usize, usize)> = None;
    for w in order.windows(2) {
        if points[w[0]] == points[w[1]] {
            let pair = (w[0].min(w[1]), w[0].max(w[1]));
            dup = Some(dup.map_or(pair, |d: (usize, usize)| d.min(pair)));
        }
    }
    if let Some((first, second)) = dup {
        return Err(Error::DuplicatePoints { first, second });
    }

    let (lo, hi) = points.iter().fold(
        (points[0], points[0]),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let span = (hi - lo).amax();
    let tol = Tolerances {
        orient: 1e-12 * span * span,
        incircle: 1e-12 * span.powi(4),
    };
    // collinear iff every point is (numerically) on the line through the
    // two points farthest apart along the dominant axis
    let axis = if hi.x - lo.x >= hi.y - lo.y { 0 } else { 1 };
    let a = order_by_axis(points, axis, true);
    let b = order_by_axis(points, axis, false);
    if points
        .iter()
        .all(|p| orient(&points[a], &points[b], p).abs() <= tol.orient)
    {
        return Err(Error::Collinear(n));
    }
    Ok(tol)
}

fn order_by_axis(points: &[Point2], axis: usize, min: bool) -> usize {
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        let better = if min { p[axis] < points[best][axis] } else { p[axis] > points[best][axis] };
        if better {
            best = i;
        }
    }
    best
}

/// Delaunay triangulation of `points`.
///
/// Errors on fewer than three points, duplicated points (naming the lowest
/// offending index pair) and (near-)collinear input.
pub fn delaunay(points: &[Point2]) -> Result<LandmarkGraph> {
    let tol = validate(points)?;
    let n = points.len();

    let (lo, hi) = points.iter().fold(
        (points[0], points[0]),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let center = (lo + hi) * 0.5;
    let span = (hi - lo).amax().max(1e-300);
    let big = 64.0 * span;
    let mut pts: Vec<Point2> = points.to_vec();
    pts.push(center + Point2::new(-2.0 * big, -big));
    pts.push(center + Point2::new(2.0 * big, -big));
    pts.push(center + Point2::new(0.0, 2.0 * big));

    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
    for p in 0..n {
        let cavity = cavity(&pts, &tris, p, tol.orient);
        // cavity boundary: directed edges of cavity triangles whose twin is not in it
        let mut directed: HashMap<(usize, usize), ()> = HashMap::new();
        for &t in &cavity {
            let t = tris[t];
            for k in 0..3 {
                directed.insert((t[k], t[(k + 1) % 3]), ());
            }
        }
        let mut boundary: Vec<(usize, usize)> = directed
            .keys()
            .filter(|&&(a, b)| !directed.contains_key(&(b, a)))
            .copied()
            .collect();
        boundary.sort_unstable();
        let mut keep: Vec<[usize; 3]> = Vec::with_capacity(tris.len() + 2);
        let mut in_cavity = vec![false; tris.len()];
        for &t in &cavity {
            in_cavity[t] = true;
        }
        for (t, tri) in tris.iter().enumerate() {
            if !in_cavity[t] {
                keep.push(*tri);
            }
        }
        for (a, b) in boundary {
            keep.push([a, b, p]);
        }
        tris = keep;
    }
    tris.retain(|t| t.iter().all(|&v| v < n));
    pts.truncate(n);

    complete_hull(&pts, &mut tris, &tol);
    lawson_flips(&pts, &mut tris, &tol);

    let mut edges: Vec<(usize, usize)> = tris
        .iter()
        .flat_map(|t| {
            (0..3).map(move |k| {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                (a.min(b), a.max(b))
            })
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    for t in tris.iter_mut() {
        canonical_rotation(t);
    }
    tris.sort_unstable();
    Ok(LandmarkGraph {
        points: points.to_vec(),
        edges,
        triangles: tris,
    })
}

/// Triangles replaced when inserting `p`: grown from the triangle containing
/// `p` across edges whose far triangle has `p` inside its circumcircle, then
/// widened until every boundary edge sees `p` strictly on its inner side so
/// the re-triangulated cavity has no inverted or flat triangles.
fn cavity(pts: &[Point2], tris: &[[usize; 3]], p: usize, tol: f64) -> Vec<usize> {
    let q = &pts[p];
    let mut owner: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * tris.len());
    for (i, t) in tris.iter().enumerate() {
        for k in 0..3 {
            owner.insert((t[k], t[(k + 1) % 3]), i);
        }
    }
    let min_orient = |t: &[usize; 3]| {
        (0..3)
            .map(|k| orient(&pts[t[k]], &pts[t[(k + 1) % 3]], q))
            .fold(f64::INFINITY, f64::min)
    };
    let seed = (0..tris.len())
        .max_by(|&a, &b| min_orient(&tris[a]).total_cmp(&min_orient(&tris[b])).then(b.cmp(&a)))
        .expect("triangulation is never empty");
    let mut inside = vec![false; tris.len()];
    inside[seed] = true;
    let mut stack = vec![seed];
    while let Some(t) = stack.pop() {
        let tri = tris[t];
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let Some(&u) = owner.get(&(b, a)) else { continue };
            if inside[u] {
                continue;
            }
            let o = tris[u];
            if incircle(&pts[o[0]], &pts[o[1]], &pts[o[2]], q) > 0.0 {
                inside[u] = true;
                stack.push(u);
            }
        }
    }
    loop {
        let mut grew = false;
        for t in 0..tris.len() {
            if !inside[t] {
                continue;
            }
            let tri = tris[t];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let Some(&u) = owner.get(&(b, a)) else { continue };
                if !inside[u] && orient(&pts[a], &pts[b], q) <= tol {
                    inside[u] = true;
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    (0..tris.len()).filter(|&t| inside[t]).collect()
}

fn canonical_rotation(t: &mut [usize; 3]) {
    let k = (0..3).min_by_key(|&k| t[k]).unwrap_or(0);
    t.rotate_left(k);
}

/// Fills reflex notches left on the boundary after removing the
/// super-triangle so the triangulation covers the convex hull.
fn complete_hull(pts: &[Point2], tris: &mut Vec<[usize; 3]>, tol: &Tolerances) {
    loop {
        let mut directed: HashMap<(usize, usize), ()> = HashMap::new();
        for t in tris.iter() {
            for k in 0..3 {
                directed.insert((t[k], t[(k + 1) % 3]), ());
            }
        }
        // boundary edges (a, b) traversed with the interior on the left
        let mut next: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) {
                next.insert(a, b);
            }
        }
        let mut best: Option<(f64, [usize; 3])> = None;
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        for a in starts {
            let b = next[&a];
            let Some(&c) = next.get(&b) else { continue };
            if c == a {
                continue;
            }
            let o = orient(&pts[a], &pts[b], &pts[c]);
            if o >= -tol.orient {
                continue;
            }
            // the notch triangle (a, c, b) must not swallow other points
            let empty = (0..pts.len()).all(|q| {
                q == a
                    || q == b
                    || q == c
                    || orient(&pts[a], &pts[c], &pts[q]) < 0.0
                    || orient(&pts[c], &pts[b], &pts[q]) < 0.0
                    || orient(&pts[b], &pts[a], &pts[q]) < 0.0
            });
            if empty && best.is_none_or(|(bo, _)| o < bo) {
                best = Some((o, [a, c, b]));
            }
        }
        match best {
            Some((_, t)) => tris.push(t),
            None => return,
        }
    }
}

fn lawson_flips(pts: &[Point2], tris: &mut [[usize; 3]], tol: &Tolerances) {
    let max_rounds = 16 * tris.len() * tris.len() + 64;
    for _ in 0..max_rounds {
        let mut edge_owner: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (ti, t) in tris.iter().enumerate() {
            for k in 0..3 {
                edge_owner.insert((t[k], t[(k + 1) % 3]), (ti, (k + 2) % 3));
            }
        }
        let mut keys: Vec<(usize, usize)> = edge_owner.keys().copied().collect();
        keys.sort_unstable();
        let mut flipped = false;
        for (a, b) in keys {
            if a > b {
                continue;
            }
            let (Some(&(t1, k1)), Some(&(t2, k2))) = (edge_owner.get(&(a, b)), edge_owner.get(&(b, a)))
            else {
                continue;
            };
            let c = tris[t1][k1]; // t1 = (a, b, c) up to rotation
            let d = tris[t2][k2]; // t2 = (b, a, d)
            // flipping to (c, d) needs a strictly convex quad
            if orient(&pts[c], &pts[d], &pts[a]) * orient(&pts[c], &pts[d], &pts[b]) >= 0.0 {
                continue;
            }
            if orient(&pts[a], &pts[d], &pts[c]).abs() <= tol.orient
                || orient(&pts[b], &pts[c], &pts[d]).abs() <= tol.orient
            {
                continue;
            }
            let ic = incircle(&pts[a], &pts[b], &pts[c], &pts[d]);
            let should_flip = if ic > tol.incircle {
                true
            } else if ic >= -tol.incircle {
                let lowest = a.min(b).min(c).min(d);
                lowest == c || lowest == d
            } else {
                false
            };
            if should_flip {
                tris[t1] = [c, a, d];
                tris[t2] = [d, b, c];
                if orient(&pts[c], &pts[a], &pts[d]) < 0.0 {
                    tris[t1] = [c, d, a];
                }
                if orient(&pts[d], &pts[b], &pts[c]) < 0.0 {
                    tris[t2] = [d, c, b];
                }
                flipped = true;
                break;
            }
        }
        if !flipped {
            return;
        }
    }
}

/// Reads landmark lines `id x y`; blank lines and `#` comments are skipped.
pub fn parse_landmarks_2d(text: &str, path: &std::path::Path) -> Result<Vec<(u32, Point2)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, lineno + 1, "expected `id x y`"));
        }
        let id = fields[0]
            .parse::<u32>()
            .map_err(|e| Error::parse(path, lineno + 1, format!("id: {e}")))?;
        let x = fields[1]
            .parse::<f64>()
            .map_err(|e| Error::parse(path, lineno + 1, format!("x: {e}")))?;
        let y = fields[2]
            .parse::<f64>()
            .map_err(|e| Error::parse(path, lineno + 1, format!("y: {e}")))?;
        out.push((id, Point2::new(x, y)));
    }
    Ok(out)
}

pub fn format_landmarks_2d(points: &[(u32, Point2)]) -> String {
    points
        .iter()
        .map(|(id, p)| format!("{id} {:.17e} {:.17e}\n", p.x, p.y))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(n t) check: no input point strictly inside any triangle's circumcircle.
    fn brute_force_empty_circumcircle(g: &LandmarkGraph) -> bool {
        g.triangles.iter().all(|t| {
            let (a, b, c) = (g.points[t[0]], g.points[t[1]], g.points[t[2]]);
            let (a, b) = if orient(&a, &b, &c) < 0.0 { (b, a) } else { (a, b) };
            g.points
                .iter()
                .enumerate()
                .filter(|(i, _)| !t.contains(i))
                .all(|(_, p)| incircle(&a, &b, &c, p) <= 1e-9)
        })
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point2> {
        (0..n)
            .map(|_| Point2::new(rng.gen::<f64>() * 240.0, rng.gen::<f64>() * 240.0))
            .collect()
    }

    #[test]
    fn single_triangle() {
        let g = delaunay(&[Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)]).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(g.triangles.len(), 1);
    }

    #[test]
    fn unit_square_takes_lowest_index_diagonal() {
        let sq = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let g = delaunay(&sq).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (0, 2), (0, 3), (1, 2), (2, 3)]);
        // relabelled so vertex 1 is the lowest index on the other diagonal
        let sq2 = [sq[1], sq[0], sq[3], sq[2]];
        let g2 = delaunay(&sq2).unwrap();
        assert!(g2.edges.contains(&(0, 2)));
        assert!(!g2.edges.contains(&(1, 3)));
    }

    #[test]
    fn regular_polygon_fans_from_lowest_index() {
        let pts: Vec<Point2> = (0..8)
            .map(|k| {
                let a = k as f64 * std::f64::consts::TAU / 8.0;
                Point2::new(a.cos(), a.sin())
            })
            .collect();
        let g = delaunay(&pts).unwrap();
        assert_eq!(g.triangles.len(), 6);
        assert!(g.triangles.iter().all(|t| t.contains(&0)));
    }

    #[test]
    fn error_paths() {
        assert!(matches!(delaunay(&[Point2::zeros(), Point2::x()]), Err(Error::TooFewPoints(2))));
        let line: Vec<Point2> = (0..5).map(|i| Point2::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(delaunay(&line), Err(Error::Collinear(5))));
        let dup = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0), Point2::new(1.0, 0.0)];
        assert!(matches!(
            delaunay(&dup),
            Err(Error::DuplicatePoints { first: 1, second: 3 })
        ));
    }

    #[test]
    fn random_sets_pass_brute_force_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..20 {
            let pts = random_points(&mut rng, 30);
            let g = delaunay(&pts).unwrap();
            assert!(brute_force_empty_circumcircle(&g));
            // Euler: t = 2n - 2 - h for a full triangulation of the hull
            let e = g.edges.len();
            let t = g.triangles.len();
            assert_eq!(30 + t + 1, e + 2, "Euler characteristic");
        }
    }

    #[test]
    fn landmark_file_round_trip_and_errors() {
        let pts = vec![(3, Point2::new(1.5, 2.25)), (7, Point2::new(-1.0, 0.0))];
        let text = format_landmarks_2d(&pts);
        assert_eq!(parse_landmarks_2d(&text, std::path::Path::new("x")).unwrap(), pts);
        let err = parse_landmarks_2d("1 2 3\n2 oops 1\n", std::path::Path::new("lm.txt")).unwrap_err();
        assert!(err.to_string().contains("lm.txt:2"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn permutation_invariant(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_points(&mut rng, 20);
            let mut perm: Vec<usize> = (0..20).collect();
            for i in (1..20).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            let shuffled: Vec<Point2> = perm.iter().map(|&i| pts[i]).collect();
            let g = delaunay(&pts).unwrap();
            let h = delaunay(&shuffled).unwrap();
            let mut remapped: Vec<(usize, usize)> = h
                .edges
                .iter()
                .map(|&(a, b)| (perm[a].min(perm[b]), perm[a].max(perm[b])))
                .collect();
            remapped.sort_unstable();
            prop_assert_eq!(remapped, g.edges);
        }
    }
}
