use std::path::Path;

use super::raster::Raster;
use crate::error::{Error, Result};

/// Binary mask on the same grid as the raster it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonMask {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin: (f64, f64),
    pub bits: Vec<bool>,
}

// Neighbour offsets counter-clockwise from east: E, NE, N, NW, W, SW, S, SE.
const RING: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

impl SkeletonMask {
    pub fn empty_like(r: &Raster) -> Self {
        SkeletonMask {
            width: r.width,
            height: r.height,
            cell_size: r.cell_size,
            origin: r.origin,
            bits: vec![false; r.width * r.height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: &[(usize, usize)]) -> Self {
        let mut m = SkeletonMask {
            width,
            height,
            cell_size: 1.0,
            origin: (0.0, 0.0),
            bits: vec![false; width * height],
        };
        for &(x, y) in pixels {
            m.set(x, y, true);
        }
        m
    }

    #[inline]
    pub fn get(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i % self.width, i / self.width))
    }

    pub fn neighbours(&self, x: usize, y: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        RING.iter().filter_map(move |&(dx, dy)| {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            self.get(nx, ny).then_some((nx as usize, ny as usize))
        })
    }

    /// Centre of a pixel in world coordinates.
    pub fn world(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.origin.0 + (x + 0.5) * self.cell_size,
            self.origin.1 + (y + 0.5) * self.cell_size,
        )
    }

    pub fn to_raster(&self) -> Raster {
        let mut r = Raster::new(self.width, self.height, self.cell_size, self.origin);
        for (v, &b) in r.data.iter_mut().zip(&self.bits) {
            *v = if b { 1.0 } else { 0.0 };
        }
        r
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        self.to_raster().write_pgm(path)
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let r = Raster::read_pgm(path)?;
        let max = r.max();
        Ok(SkeletonMask {
            width: r.width,
            height: r.height,
            cell_size: r.cell_size,
            origin: r.origin,
            bits: r.data.iter().map(|&v| v > 0.5 * max && max > 0.0).collect(),
        })
    }
}

pub fn neighbour_count(m: &SkeletonMask, x: usize, y: usize) -> usize {
    m.neighbours(x, y).count()
}

/// Yokoi's 8-connectivity number equals 1: removing the pixel changes
/// neither the number of foreground components nor of background holes.
pub fn is_simple(m: &SkeletonMask, x: usize, y: usize) -> bool {
    let mut nb = [false; 9];
    for (k, &(dx, dy)) in RING.iter().enumerate() {
        nb[k] = !m.get(x as i64 + dx, y as i64 + dy);
    }
    nb[8] = nb[0];
    let xb = |k: usize| nb[k % 8] as i32;
    let n: i32 = [0, 2, 4, 6]
        .iter()
        .map(|&k| xb(k) - xb(k) * xb(k + 1) * xb(k + 2))
        .sum();
    n == 1
}

fn is_boundary(m: &SkeletonMask, x: usize, y: usize) -> bool {
    [(1, 0), (-1, 0), (0, 1), (0, -1)]
        .iter()
        .any(|&(dx, dy)| !m.get(x as i64 + dx, y as i64 + dy))
}

fn is_end(m: &SkeletonMask, x: usize, y: usize) -> bool {
    neighbour_count(m, x, y) == 1
}

/// Thresholds at `tau`, then erodes boundary intensity by `eta` per pass and
/// deletes pixels that reach zero while they are simple. Stops once no
/// simple non-end pixel is left, which leaves a one-pixel-wide,
/// 8-connected centreline.
pub fn skeletonize(r: &Raster, tau: f64, eta: f64) -> Result<SkeletonMask> {
    if !(eta > 0.0) {
        return Err(Error::invalid("eta must be positive"));
    }
    let mut level: Vec<f64> = r
        .data
        .iter()
        .map(|&v| if v < tau { 0.0 } else { v })
        .collect();
    let mut m = SkeletonMask::empty_like(r);
    for (b, &v) in m.bits.iter_mut().zip(&level) {
        *b = v > 0.0;
    }
    let mut active: Vec<usize> = (0..m.bits.len()).filter(|&i| m.bits[i]).collect();
    if active.is_empty() {
        return Err(Error::Empty("no pixel at or above the threshold".into()));
    }
    let w = m.width;
    let max_level = level.iter().copied().fold(0.0, f64::max);
    let max_passes = ((max_level / eta).ceil() as usize + 1) * (active.len() + 1);

    for _ in 0..max_passes {
        active.retain(|&i| m.bits[i]);
        let removable = active
            .iter()
            .any(|&i| is_simple(&m, i % w, i / w) && !is_end(&m, i % w, i / w));
        if !removable {
            break;
        }
        let boundary: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&i| is_boundary(&m, i % w, i / w))
            .collect();
        for &i in &boundary {
            level[i] -= eta;
        }
        loop {
            let mut changed = false;
            for &i in &boundary {
                if m.bits[i] && level[i] <= 0.0 && is_simple(&m, i % w, i / w) {
                    m.bits[i] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster_from(mask: &[&str], value: f64) -> Raster {
        let h = mask.len();
        let w = mask[0].len();
        let mut r = Raster::new(w, h, 1.0, (0.0, 0.0));
        for (y, row) in mask.iter().enumerate() {
            for (x, c) in row.chars().enumerate() {
                if c == '#' {
                    *r.get_mut(x, y) = value;
                }
            }
        }
        r
    }

    #[test]
    fn simple_point_cases() {
        let m = SkeletonMask::from_pixels(3, 3, &[(0, 1), (1, 1), (2, 1)]);
        assert!(!is_simple(&m, 1, 1));
        assert!(is_simple(&m, 0, 1));
        let lone = SkeletonMask::from_pixels(3, 3, &[(1, 1)]);
        assert!(!is_simple(&lone, 1, 1));
        let corner = SkeletonMask::from_pixels(3, 3, &[(0, 1), (1, 1), (1, 0)]);
        assert!(is_simple(&corner, 1, 1));
    }

    #[test]
    fn thin_line_is_fixed_point() {
        let r = raster_from(&["........", ".######.", "........"], 1.0);
        let m = skeletonize(&r, 0.5, 0.1).unwrap();
        assert_eq!(m.count(), 6);
        let expected: Vec<bool> = r.data.iter().map(|&v| v > 0.0).collect();
        assert_eq!(m.bits, expected);
    }

    #[test]
    fn thresholding_first() {
        let mut r = raster_from(&[".....", ".###.", "....."], 1.0);
        *r.get_mut(2, 1) = 0.2;
        let m = skeletonize(&r, 0.5, 0.1).unwrap();
        assert!(!m.get(2, 1));
        assert!(skeletonize(&r, 2.0, 0.1).is_err());
    }

    #[test]
    fn faint_hair_is_eaten() {
        let mut rows = vec!["..............................".to_string(); 3];
        for _ in 0..7 {
            rows.push(".############################.".to_string());
        }
        rows.push("..............................".to_string());
        let grid: Vec<&str> = rows.iter().map(String::as_str).collect();
        let mut r = raster_from(&grid, 1.0);
        // A three-pixel hair hanging under the bar, faint but above tau.
        for y in 0..3 {
            *r.get_mut(14, y) = 0.3;
        }
        let m = skeletonize(&r, 0.25, 0.1).unwrap();
        for y in 0..3 {
            assert!(!m.get(14, y), "hair pixel {y} survived");
        }
        assert!(m.count() > 15);
        // One pixel wide: no pixel is simple and not an end.
        for (x, y) in m.pixels() {
            assert!(!is_simple(&m, x, y) || neighbour_count(&m, x, y) == 1);
        }
    }
}
