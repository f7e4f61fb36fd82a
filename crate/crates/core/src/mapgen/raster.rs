use std::io::{BufRead, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::TraceSet;

/// A grid of non-negative intensities anchored in world coordinates.
/// Cell `(cx, cy)` covers `origin + [cx, cx+1) * cell_size` horizontally and
/// likewise vertically; storage is row-major with `cy = 0` at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin: (f64, f64),
    pub data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, cell_size: f64, origin: (f64, f64)) -> Self {
        assert!(width >= 1 && height >= 1 && cell_size > 0.0);
        Raster {
            width,
            height,
            cell_size,
            origin,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn idx(&self, cx: usize, cy: usize) -> usize {
        cy * self.width + cx
    }

    #[inline]
    pub fn get(&self, cx: usize, cy: usize) -> f64 {
        self.data[self.idx(cx, cy)]
    }

    #[inline]
    pub fn get_mut(&mut self, cx: usize, cy: usize) -> &mut f64 {
        let i = self.idx(cx, cy);
        &mut self.data[i]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Continuous cell coordinates of a world point.
    pub fn to_cell(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin.0) / self.cell_size,
            (y - self.origin.1) / self.cell_size,
        )
    }

    /// World coordinates of a cell centre.
    pub fn cell_center(&self, cx: f64, cy: f64) -> (f64, f64) {
        (
            self.origin.0 + (cx + 0.5) * self.cell_size,
            self.origin.1 + (cy + 0.5) * self.cell_size,
        )
    }

    fn clamp_cell(&self, c: (f64, f64)) -> (i64, i64) {
        (
            (c.0.floor() as i64).clamp(0, self.width as i64 - 1),
            (c.1.floor() as i64).clamp(0, self.height as i64 - 1),
        )
    }

    /// Intensities rounded to the 256 levels a PGM round trip keeps.
    pub fn quantized(&self) -> Raster {
        let max = self.max();
        let mut r = self.clone();
        if max > 0.0 {
            for v in &mut r.data {
                *v = (*v / max * 255.0).round() / 255.0 * max;
            }
        }
        r
    }

    /// Writes an 8-bit binary PGM (north up) and a `.meta` sidecar.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let max = self.max();
        let mut buf = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        for cy in (0..self.height).rev() {
            for cx in 0..self.width {
                let v = if max > 0.0 {
                    (self.get(cx, cy) / max * 255.0).round()
                } else {
                    0.0
                };
                buf.push(v as u8);
            }
        }
        std::fs::write(path, buf)?;
        let meta = format!(
            "cell_size {}\norigin {} {}\nwidth {}\nheight {}\nmax {}\n",
            self.cell_size, self.origin.0, self.origin.1, self.width, self.height, max
        );
        std::fs::write(meta_path(path), meta)?;
        Ok(())
    }

    /// Reads a PGM written by [`Raster::write_pgm`]; intensities come back
    /// quantized to 256 levels of the stored maximum.
    pub fn read_pgm(path: &Path) -> Result<Raster> {
        let meta_file = meta_path(path);
        let meta = std::fs::read_to_string(&meta_file)?;
        let mut cell_size = None;
        let mut origin = None;
        let mut max = None;
        for line in meta.lines() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<f64> {
                parts
                    .get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::format(&meta_file, format!("bad line `{line}`")))
            };
            match parts.first() {
                Some(&"cell_size") => cell_size = Some(num(1)?),
                Some(&"origin") => origin = Some((num(1)?, num(2)?)),
                Some(&"max") => max = Some(num(1)?),
                _ => {}
            }
        }
        let (cell_size, origin, max) = match (cell_size, origin, max) {
            (Some(c), Some(o), Some(m)) if c > 0.0 => (c, o, m),
            _ => {
                return Err(Error::format(
                    &meta_file,
                    "missing cell_size, origin or max",
                ))
            }
        };

        let mut reader = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut tokens = Vec::new();
        while tokens.len() < 4 {
            let mut line = String::new();
            if reader.read_line(&mut line)? == 0 {
                return Err(Error::format(path, "truncated PGM header"));
            }
            let line = line.split('#').next().unwrap_or("");
            tokens.extend(line.split_whitespace().map(str::to_string));
        }
        let bad = || Error::format(path, "not an 8-bit P5 PGM");
        if tokens[0] != "P5" || tokens[3] != "255" {
            return Err(bad());
        }
        let width: usize = tokens[1].parse().map_err(|_| bad())?;
        let height: usize = tokens[2].parse().map_err(|_| bad())?;
        let mut pixels = vec![0u8; width * height];
        reader.read_exact(&mut pixels)?;
        let mut r = Raster::new(width, height, cell_size, origin);
        for (row, chunk) in pixels.chunks(width).enumerate() {
            let cy = height - 1 - row;
            for (cx, &v) in chunk.iter().enumerate() {
                *r.get_mut(cx, cy) = v as f64 / 255.0 * max;
            }
        }
        Ok(r)
    }
}

pub(crate) fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    p.into()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapParams {
    /// World units per cell; `None` maps the longest extent to `resolution` cells.
    pub cell_size: Option<f64>,
    pub resolution: usize,
    /// Weight added to each cell crossed by an interpolation segment.
    pub delta: f64,
    /// Contrast boost; 0 leaves intensities unchanged.
    pub boost: f64,
    /// Segments spanning a longer gap are not interpolated (seconds).
    pub max_gap: i64,
    /// Segments longer than this are not interpolated (world units).
    pub max_jump: f64,
}

impl Default for HeatmapParams {
    fn default() -> Self {
        HeatmapParams {
            cell_size: None,
            resolution: 1024,
            delta: 0.1,
            boost: 0.0,
            max_gap: 300,
            max_jump: 5000.0,
        }
    }
}

/// Counts measurements per cell, adds `delta` along interpolated segments and
/// applies the power-law contrast boost.
pub fn rasterize_heatmap(ts: &TraceSet, p: &HeatmapParams) -> Result<Raster> {
    if !(p.delta >= 0.0 && p.boost >= 0.0) {
        return Err(Error::invalid("delta and boost must be non-negative"));
    }
    let mut it = ts.fixes();
    let first = it
        .next()
        .ok_or_else(|| Error::Empty("no measurements to rasterize".into()))?;
    let (mut x0, mut x1, mut y0, mut y1) = (first.x, first.x, first.y, first.y);
    for f in it {
        x0 = x0.min(f.x);
        x1 = x1.max(f.x);
        y0 = y0.min(f.y);
        y1 = y1.max(f.y);
    }
    let extent = (x1 - x0).max(y1 - y0);
    let cell = match p.cell_size {
        Some(c) if c > 0.0 => c,
        Some(_) => return Err(Error::invalid("cell_size must be positive")),
        None if extent > 0.0 => extent / p.resolution.max(1) as f64,
        None => 1.0,
    };
    let width = ((x1 - x0) / cell).floor() as usize + 1;
    let height = ((y1 - y0) / cell).floor() as usize + 1;
    let mut r = Raster::new(width, height, cell, (x0, y0));

    for v in ts.vehicles.values() {
        for f in v {
            let (cx, cy) = r.clamp_cell(r.to_cell(f.x, f.y));
            *r.get_mut(cx as usize, cy as usize) += 1.0;
        }
        if p.delta == 0.0 {
            continue;
        }
        for w in v.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.t - a.t > p.max_gap || a.dist(b) > p.max_jump {
                continue;
            }
            let ca = r.to_cell(a.x, a.y);
            let cb = r.to_cell(b.x, b.y);
            let (sa, sb) = (r.clamp_cell(ca), r.clamp_cell(cb));
            supercover(ca, cb, |cx, cy| {
                let inside = cx >= 0 && cy >= 0 && (cx as usize) < width && (cy as usize) < height;
                if (cx, cy) != sa && (cx, cy) != sb && inside {
                    *r.get_mut(cx as usize, cy as usize) += p.delta;
                }
            });
        }
    }

    if p.boost > 0.0 {
        let max = r.max();
        if max > 0.0 {
            let e = 1.0 / (1.0 + p.boost);
            for v in &mut r.data {
                *v = (*v / max).powf(e) * max;
            }
        }
    }
    Ok(r)
}

/// Visits every cell the segment touches, including both cells at an exact
/// corner crossing. Coordinates are continuous cell units.
pub(crate) fn supercover(a: (f64, f64), b: (f64, f64), mut visit: impl FnMut(i64, i64)) {
    let (mut cx, mut cy) = (a.0.floor() as i64, a.1.floor() as i64);
    let (ex, ey) = (b.0.floor() as i64, b.1.floor() as i64);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let sx = if dx > 0.0 { 1 } else { -1 };
    let sy = if dy > 0.0 { 1 } else { -1 };
    let t_delta_x = if dx != 0.0 {
        1.0 / dx.abs()
    } else {
        f64::INFINITY
    };
    let t_delta_y = if dy != 0.0 {
        1.0 / dy.abs()
    } else {
        f64::INFINITY
    };
    let mut t_max_x = if dx > 0.0 {
        (cx as f64 + 1.0 - a.0) / dx
    } else if dx < 0.0 {
        (a.0 - cx as f64) / -dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy > 0.0 {
        (cy as f64 + 1.0 - a.1) / dy
    } else if dy < 0.0 {
        (a.1 - cy as f64) / -dy
    } else {
        f64::INFINITY
    };
    visit(cx, cy);
    let budget = (ex - cx).abs() + (ey - cy).abs();
    let mut steps = 0;
    const EPS: f64 = 1e-12;
    while (cx, cy) != (ex, ey) && steps < budget {
        if (t_max_x - t_max_y).abs() <= EPS {
            visit(cx + sx, cy);
            visit(cx, cy + sy);
            cx += sx;
            cy += sy;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
            steps += 2;
        } else if t_max_x < t_max_y {
            cx += sx;
            t_max_x += t_delta_x;
            steps += 1;
        } else {
            cy += sy;
            t_max_y += t_delta_y;
            steps += 1;
        }
        visit(cx, cy);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{AvlRecord, TraceSet};

    fn traces(points: &[(f64, f64, i64)]) -> TraceSet {
        TraceSet::from_records(points.iter().map(|&(x, y, t)| AvlRecord {
            vehicle_id: "v".into(),
            x,
            y,
            t,
        }))
        .0
    }

    #[test]
    fn stationary_vehicle_counts() {
        let pts: Vec<_> = (0..10).map(|t| (5.0, 5.0, t)).collect();
        let mut ts = traces(&pts);
        ts.vehicles.insert(
            "w".into(),
            vec![crate::Fix::new(0.0, 0.0, 0), crate::Fix::new(9.5, 9.5, 1)],
        );
        let p = HeatmapParams {
            cell_size: Some(1.0),
            delta: 0.0,
            ..Default::default()
        };
        let r = rasterize_heatmap(&ts, &p).unwrap();
        let (cx, cy) = r.clamp_cell(r.to_cell(5.0, 5.0));
        assert_eq!(r.get(cx as usize, cy as usize), 10.0);
        let total: f64 = r.sum();
        assert_eq!(total, 12.0);
    }

    #[test]
    fn delta_on_intermediate_cells() {
        let ts = traces(&[(0.5, 0.5, 0), (5.5, 0.5, 10)]);
        let p = HeatmapParams {
            cell_size: Some(1.0),
            delta: 0.5,
            ..Default::default()
        };
        let r = rasterize_heatmap(&ts, &p).unwrap();
        assert_eq!(r.width, 6);
        assert_eq!(r.data, vec![1.0, 0.5, 0.5, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn delta_zero_leaves_gaps() {
        let ts = traces(&[(0.5, 0.5, 0), (5.5, 0.5, 10)]);
        let p = HeatmapParams {
            cell_size: Some(1.0),
            delta: 0.0,
            ..Default::default()
        };
        let r = rasterize_heatmap(&ts, &p).unwrap();
        assert_eq!(&r.data[1..5], &[0.0; 4]);
    }

    #[test]
    fn long_gaps_not_interpolated() {
        let ts = traces(&[(0.5, 0.5, 0), (5.5, 0.5, 301)]);
        let p = HeatmapParams {
            cell_size: Some(1.0),
            delta: 1.0,
            ..Default::default()
        };
        let r = rasterize_heatmap(&ts, &p).unwrap();
        assert_eq!(r.sum(), 2.0);
    }

    #[test]
    fn boost_is_power_law() {
        let ts = traces(&[
            (0.5, 0.5, 0),
            (0.5, 0.5, 1),
            (0.5, 0.5, 2),
            (0.5, 0.5, 3),
            (1.5, 0.5, 4),
        ]);
        let p = HeatmapParams {
            cell_size: Some(1.0),
            delta: 0.0,
            boost: 1.0,
            ..Default::default()
        };
        let r = rasterize_heatmap(&ts, &p).unwrap();
        assert_eq!(r.data[0], 4.0);
        assert!((r.data[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn supercover_diagonal_visits_corner_neighbours() {
        let mut cells = Vec::new();
        supercover((0.5, 0.5), (2.5, 2.5), |x, y| cells.push((x, y)));
        assert_eq!(
            cells,
            vec![(0, 0), (1, 0), (0, 1), (1, 1), (2, 1), (1, 2), (2, 2)]
        );
    }

    #[test]
    fn supercover_is_connected() {
        let mut cells = Vec::new();
        supercover((0.3, 7.9), (11.2, 0.1), |x, y| cells.push((x, y)));
        assert_eq!(cells.first(), Some(&(0, 7)));
        assert_eq!(cells.last(), Some(&(11, 0)));
        for w in cells.windows(2) {
            assert!((w[0].0 - w[1].0).abs() + (w[0].1 - w[1].1).abs() <= 2);
        }
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Raster::new(3, 2, 2.5, (10.0, -4.0));
        r.data = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.1];
        let path = dir.path().join("r.pgm");
        r.write_pgm(&path).unwrap();
        let back = Raster::read_pgm(&path).unwrap();
        assert_eq!(
            (back.width, back.height, back.cell_size, back.origin),
            (3, 2, 2.5, (10.0, -4.0))
        );
        for (a, b) in r.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 5.1 / 255.0);
        }
    }
}
