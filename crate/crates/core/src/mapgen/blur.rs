use super::Raster;

fn kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with `sigma` in cells. The kernel is cut at
/// `ceil(3 sigma)` and renormalized; cells outside the raster count as zero.
pub fn gaussian_blur(r: &Raster, sigma: f64) -> Raster {
    if !(sigma > 0.0) {
        return r.clone();
    }
    let k = kernel(sigma);
    let rad = (k.len() / 2) as i64;
    let (w, h) = (r.width as i64, r.height as i64);

    let mut tmp = r.clone();
    for cy in 0..h {
        for cx in 0..w {
            let mut acc = 0.0;
            for (o, kv) in k.iter().enumerate() {
                let x = cx + o as i64 - rad;
                if (0..w).contains(&x) {
                    acc += kv * r.get(x as usize, cy as usize);
                }
            }
            *tmp.get_mut(cx as usize, cy as usize) = acc;
        }
    }
    let mut out = tmp.clone();
    for cy in 0..h {
        for cx in 0..w {
            let mut acc = 0.0;
            for (o, kv) in k.iter().enumerate() {
                let y = cy + o as i64 - rad;
                if (0..h).contains(&y) {
                    acc += kv * tmp.get(cx as usize, y as usize);
                }
            }
            *out.get_mut(cx as usize, cy as usize) = acc.max(0.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_identity() {
        let mut r = Raster::new(4, 3, 1.0, (0.0, 0.0));
        r.data[5] = 3.0;
        assert_eq!(gaussian_blur(&r, 0.0), r);
    }

    #[test]
    fn impulse_gives_normalized_gaussian() {
        let mut r = Raster::new(21, 21, 1.0, (0.0, 0.0));
        *r.get_mut(10, 10) = 1.0;
        let b = gaussian_blur(&r, 1.0);
        assert!((b.sum() - 1.0).abs() < 1e-12);
        // Separable: centre value is the square of the 1-D centre weight.
        let k = kernel(1.0);
        assert!((b.get(10, 10) - k[3] * k[3]).abs() < 1e-15);
        assert!((b.get(11, 10) - b.get(10, 9)).abs() < 1e-15);
        assert_eq!(b.get(14, 10), 0.0);
    }

    #[test]
    fn interior_mass_conserved() {
        let mut r = Raster::new(40, 30, 1.0, (0.0, 0.0));
        for (i, v) in r.data.iter_mut().enumerate() {
            let (x, y) = (i % 40, i / 40);
            if (12..28).contains(&x) && (10..20).contains(&y) {
                *v = ((x * 7 + y * 3) % 11) as f64;
            }
        }
        let b = gaussian_blur(&r, 2.5);
        assert!((b.sum() - r.sum()).abs() / r.sum() < 1e-9);
    }
}
