//! Inpainting problems on disk.
//!
//! A bundle directory holds `y.ppm`, `mask.pgm`, `constraints.txt` (rows
//! `id x y z`, or `v:<vertex> x y z`) and `settings.txt` (`key=value`).
//! A definite surface adds `definite_skull.obj` and the settings keys
//! `definite.offset` and `definite.vertices` (comma-separated).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::loss::{Constraint, DefiniteSurface};
use super::mask::MaskImage;
use super::solve::{InpaintProblem, InpaintSettings};
use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::render::io::{read_ppm, write_ppm};
use crate::render::RenderedImage;

const SKULL_FILE: &str = "definite_skull.obj";

pub fn constraints_to_text(constraints: &[Constraint]) -> String {
    let mut out = String::from("# id x y z\n");
    for c in constraints {
        let [x, y, z] = c.point;
        let _ = writeln!(out, "{} {x:.12} {y:.12} {z:.12}", c.target);
    }
    out
}

pub fn parse_constraints(text: &str, path: &Path) -> Result<Vec<Constraint>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(Error::parse(path, k + 1, format!("expected `id x y z`, got {} fields", f.len())));
        }
        let target = f[0].parse().map_err(|e: String| Error::parse(path, k + 1, e))?;
        let mut point = [0.0; 3];
        for (slot, tok) in point.iter_mut().zip(&f[1..]) {
            *slot = tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, k + 1, format!("bad coordinate {tok:?}")))?;
        }
        out.push(Constraint { target, point });
    }
    Ok(out)
}

/// `key=value` lines; `#` starts a comment. Values keep their line number.
pub fn parse_key_values(text: &str, path: &Path) -> Result<BTreeMap<String, (usize, String)>> {
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, k + 1, format!("expected key=value, got {line:?}")))?;
        if out.insert(key.trim().to_string(), (k + 1, value.trim().to_string())).is_some() {
            return Err(Error::parse(path, k + 1, format!("duplicate key {:?}", key.trim())));
        }
    }
    Ok(out)
}

/// Parses the value of `key` if present.
pub fn take_value<T: std::str::FromStr>(
    map: &mut BTreeMap<String, (usize, String)>,
    key: &str,
    path: &Path,
) -> Result<Option<T>> {
    match map.remove(key) {
        None => Ok(None),
        Some((line, v)) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::parse(path, line, format!("bad value {v:?} for {key}"))),
    }
}

impl InpaintSettings {
    pub fn to_text(&self) -> String {
        format!(
            "lambda_p={}\nlambda_2={}\nwindow={}\nmax_iters={}\ntolerance={}\nmax_step={}\nseed={}\n",
            self.lambda_p, self.lambda_2, self.window, self.max_iters, self.tolerance, self.max_step, self.seed
        )
    }

    /// Reads the known keys out of `map`, leaving the others.
    pub fn take_from(map: &mut BTreeMap<String, (usize, String)>, prefix: &str, path: &Path) -> Result<Self> {
        let mut s = Self::default();
        let k = |name: &str| format!("{prefix}{name}");
        if let Some(v) = take_value(map, &k("lambda_p"), path)? {
            s.lambda_p = v;
        }
        if let Some(v) = take_value(map, &k("lambda_2"), path)? {
            s.lambda_2 = v;
        }
        if let Some(v) = take_value(map, &k("window"), path)? {
            s.window = v;
        }
        if let Some(v) = take_value(map, &k("max_iters"), path)? {
            s.max_iters = v;
        }
        if let Some(v) = take_value(map, &k("tolerance"), path)? {
            s.tolerance = v;
        }
        if let Some(v) = take_value(map, &k("max_step"), path)? {
            s.max_step = v;
        }
        if let Some(v) = take_value(map, &k("seed"), path)? {
            s.seed = v;
        }
        Ok(s)
    }
}

pub fn write_bundle(dir: &Path, problem: &InpaintProblem) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_ppm(&dir.join("y.ppm"), problem.y.width, problem.y.height, &problem.y.pixels)?;
    problem.mask.write(&dir.join("mask.pgm"))?;
    std::fs::write(dir.join("constraints.txt"), constraints_to_text(&problem.constraints))?;
    let mut settings = problem.settings.to_text();
    if let Some(d) = &problem.definite {
        d.surface.base().write_obj(&dir.join(SKULL_FILE))?;
        let verts: Vec<String> = d.vertices.iter().map(usize::to_string).collect();
        let _ = writeln!(settings, "definite.offset={}", d.surface.offset());
        let _ = writeln!(settings, "definite.vertices={}", verts.join(","));
    }
    std::fs::write(dir.join("settings.txt"), settings)?;
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<InpaintProblem> {
    let (w, h, pixels) = read_ppm(&dir.join("y.ppm"))?;
    let y = RenderedImage::from_pixels(w, h, pixels);
    let mask = MaskImage::read(&dir.join("mask.pgm"))?;
    mask.check_pairs_with(&y)?;
    let cpath = dir.join("constraints.txt");
    let constraints = parse_constraints(&std::fs::read_to_string(&cpath)?, &cpath)?;
    let spath = dir.join("settings.txt");
    let mut map = parse_key_values(&std::fs::read_to_string(&spath)?, &spath)?;
    let settings = InpaintSettings::take_from(&mut map, "", &spath)?;
    let offset: Option<f64> = take_value(&mut map, "definite.offset", &spath)?;
    let verts = map.remove("definite.vertices");
    if let Some((key, (line, _))) = map.into_iter().next() {
        return Err(Error::parse(&spath, line, format!("unknown key {key:?}")));
    }
    let definite = match (offset, verts) {
        (None, None) => None,
        (Some(offset), Some((line, list))) => {
            let vertices = list
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse().map_err(|_| Error::parse(&spath, line, format!("bad vertex {s:?}"))))
                .collect::<Result<Vec<usize>>>()?;
            let skull_path = dir.join(SKULL_FILE);
            let text = std::fs::read_to_string(&skull_path)?;
            let topology = Mesh::obj_topology_hint(&text).unwrap_or("skull").to_string();
            let skull = Mesh::parse_obj(&text, &skull_path, &topology)?;
            Some(DefiniteSurface::new(&skull, offset, vertices)?)
        }
        _ => {
            return Err(Error::parse(
                &spath,
                0,
                "definite.offset and definite.vertices must be given together",
            ))
        }
    };
    settings.validate()?;
    Ok(InpaintProblem {
        y,
        mask,
        constraints,
        definite,
        settings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::octasphere;
    use crate::inpaint::loss::ConstraintTarget;

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut y = RenderedImage::blank(8, 4);
        for (i, p) in y.pixels.iter_mut().enumerate() {
            *p = (i % 256) as f64 / 255.0;
        }
        let mut mask = MaskImage::all_known(8, 4);
        mask.known[5] = false;
        let problem = InpaintProblem {
            y: y.clone(),
            mask: mask.clone(),
            constraints: vec![
                Constraint {
                    target: ConstraintTarget::Landmark(3),
                    point: [1.5, -2.25, 3.0],
                },
                Constraint {
                    target: ConstraintTarget::Vertex(17),
                    point: [0.1, 0.2, 0.3],
                },
            ],
            definite: Some(DefiniteSurface::new(&octasphere(1, 40.0), 4.5, vec![1, 2, 9]).unwrap()),
            settings: InpaintSettings {
                lambda_2: 2.0,
                seed: 9,
                ..InpaintSettings::default()
            },
        };
        write_bundle(dir.path(), &problem).unwrap();
        let back = read_bundle(dir.path()).unwrap();
        assert_eq!(back.y.pixels, y.pixels);
        assert_eq!(back.mask, mask);
        assert_eq!(back.constraints, problem.constraints);
        assert_eq!(back.settings, problem.settings);
        let d = back.definite.unwrap();
        assert_eq!(d.vertices, vec![1, 2, 9]);
        assert_eq!(d.surface.offset(), 4.5);
        assert_eq!(d.surface.base().vertices.len(), octasphere(1, 40.0).vertices.len());
    }

    #[test]
    fn malformed_files_cite_lines() {
        let p = Path::new("c.txt");
        match parse_constraints("1 0 0 0\n2 0 x 0\n", p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_key_values("a=1\nnonsense\n", p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
