//! RGB float rasters and lat-long environment maps.

use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3, PI};

/// Row-major RGB image, row 0 at the top.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f32; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![[0.0; 3]; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let c = f(x, y);
                data.push([c[0] as f32, c[1] as f32, c[2] as f32]);
            }
        }
        RgbImage {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let p = self.data[y * self.width + x];
        Rgb::new(p[0] as f64, p[1] as f64, p[2] as f64)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        self.data[y * self.width + x] = [c[0] as f32, c[1] as f32, c[2] as f32];
    }

    pub fn same_size(&self, other: &RgbImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_size(&self, other: &RgbImage) -> Result<()> {
        if self.same_size(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// Channel values as one flat f64 vector.
    pub fn channel_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().flat_map(|p| p.iter().map(|&v| v as f64))
    }
}

/// Equirectangular environment map. Pixel `(x, y)` covers the direction with
/// azimuth `φ = 2π (x + 0.5) / W` and polar angle `θ = π (y + 0.5) / H`
/// as parameterized by [`Vec3::from_spherical`].
#[derive(Clone, Debug, PartialEq)]
pub struct EnvMap {
    pub image: RgbImage,
}

impl EnvMap {
    pub fn new(image: RgbImage) -> Self {
        EnvMap { image }
    }

    pub fn constant(width: usize, height: usize, value: Rgb) -> Self {
        EnvMap::new(RgbImage::from_fn(width, height, |_, _| value))
    }

    pub fn width(&self) -> usize {
        self.image.width
    }

    pub fn height(&self) -> usize {
        self.image.height
    }

    pub fn direction(&self, x: usize, y: usize) -> Vec3 {
        let phi = 2.0 * PI * (x as f64 + 0.5) / self.width() as f64;
        let theta = PI * (y as f64 + 0.5) / self.height() as f64;
        Vec3::from_spherical(theta, phi)
    }

    /// Exact solid angle covered by any pixel of row `y`.
    pub fn pixel_solid_angle(&self, y: usize) -> f64 {
        let h = self.height() as f64;
        let t0 = PI * y as f64 / h;
        let t1 = PI * (y as f64 + 1.0) / h;
        2.0 * PI / self.width() as f64 * (t0.cos() - t1.cos())
    }

    /// Nearest-pixel lookup.
    pub fn lookup(&self, dir: Vec3) -> Rgb {
        let (theta, phi) = dir.to_spherical();
        let x = ((phi / (2.0 * PI)) * self.width() as f64).floor() as isize;
        let y = ((theta / PI) * self.height() as f64).floor() as isize;
        let x = x.rem_euclid(self.width() as isize) as usize;
        let y = y.clamp(0, self.height() as isize - 1) as usize;
        self.image.get(x, y)
    }

    /// Solid-angle weighted integral of the map, per channel.
    pub fn total_energy(&self) -> Rgb {
        let mut sum = Rgb::BLACK;
        for y in 0..self.height() {
            let da = self.pixel_solid_angle(y);
            for x in 0..self.width() {
                sum += self.image.get(x, y) * da;
            }
        }
        sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solid_angles_cover_sphere() {
        let env = EnvMap::constant(64, 32, Rgb::WHITE);
        let total: f64 = (0..32).map(|y| env.pixel_solid_angle(y) * 64.0).sum();
        assert!((total - 4.0 * PI).abs() < 1e-12);
        let e = env.total_energy();
        assert!((e[0] - 4.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn lookup_hits_own_pixel() {
        let env = EnvMap::new(RgbImage::from_fn(16, 8, |x, y| {
            Rgb::new(x as f64, y as f64, 0.0)
        }));
        for y in 0..8 {
            for x in 0..16 {
                assert_eq!(env.lookup(env.direction(x, y)), Rgb::new(x as f64, y as f64, 0.0));
            }
        }
    }
}
