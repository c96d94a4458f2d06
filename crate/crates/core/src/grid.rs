//! Plane-major pixel/feature grids: `channels x height x width` arrays of
//! `f64`, the plain-array currency shared by the augmentation pipeline,
//! the convolution kernels and the synthetic trainer.

/// A dense `channels x height x width` grid, plane-major: the value at
/// `(c, y, x)` lives at `c * height * width + y * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneGrid {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl PlaneGrid {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut g = Self::zeros(channels, height, width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    g.data[(c * height + y) * width + x] = f(c, y, x);
                }
            }
        }
        g
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        debug_assert!(c < self.channels && y < self.height && x < self.width);
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    /// Bilinear sample of channel `c` at continuous coordinates `(y, x)`,
    /// where integer coordinates address pixel centers. Samples outside
    /// `[0, h-1] x [0, w-1]` read 0, corner by corner.
    pub fn bilinear(&self, c: usize, y: f64, x: f64) -> f64 {
        let y0 = y.floor();
        let x0 = x.floor();
        let fy = y - y0;
        let fx = x - x0;
        let mut acc = 0.0;
        for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
            if wy == 0.0 {
                continue;
            }
            let yy = y0 as i64 + dy;
            if yy < 0 || yy >= self.height as i64 {
                continue;
            }
            for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                if wx == 0.0 {
                    continue;
                }
                let xx = x0 as i64 + dx;
                if xx < 0 || xx >= self.width as i64 {
                    continue;
                }
                acc += wy * wx * self.get(c, yy as usize, xx as usize);
            }
        }
        acc
    }
}
