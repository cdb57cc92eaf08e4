//! Square image rasters inscribing the unit disk, with PGM and CSV export.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};

/// Geometry of a `side × side` raster over `[-1, 1]²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RasterSpec {
    pub side: usize,
}

impl RasterSpec {
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(invalid("raster side must be positive"));
        }
        Ok(RasterSpec { side })
    }

    /// Centre of pixel `(row, col)`; row 0 is the top (`z₂` near 1).
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        let p = self.side as f64;
        [
            -1.0 + (2 * col + 1) as f64 / p,
            1.0 - (2 * row + 1) as f64 / p,
        ]
    }

    /// Pixel centres strictly inside the unit disk are unmasked.
    pub fn in_mask(&self, row: usize, col: usize) -> bool {
        let [a, b] = self.pixel_center(row, col);
        a * a + b * b < 1.0
    }

    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        self.side == 0
    }

    /// Samples `f` at every unmasked pixel centre; masked pixels are 0.
    pub fn sample(&self, mut f: impl FnMut([f64; 2]) -> f64) -> ImageRaster {
        let mut values = vec![0.0; self.len()];
        let mut mask = vec![false; self.len()];
        for row in 0..self.side {
            for col in 0..self.side {
                if self.in_mask(row, col) {
                    let k = row * self.side + col;
                    mask[k] = true;
                    values[k] = f(self.pixel_center(row, col));
                }
            }
        }
        ImageRaster {
            side: self.side,
            values,
            mask,
        }
    }
}

/// Row-major image samples with the unit-disk mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRaster {
    pub side: usize,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ImageRaster {
    pub fn zeros(spec: RasterSpec) -> Self {
        let mask = (0..spec.len())
            .map(|k| spec.in_mask(k / spec.side, k % spec.side))
            .collect();
        ImageRaster {
            side: spec.side,
            values: vec![0.0; spec.len()],
            mask,
        }
    }

    pub fn spec(&self) -> RasterSpec {
        RasterSpec { side: self.side }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.side + col]
    }

    /// Pixel-wise `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &ImageRaster, b: f64) -> Result<ImageRaster> {
        self.check_same(other)?;
        Ok(ImageRaster {
            side: self.side,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            mask: self.mask.clone(),
        })
    }

    pub fn scaled(&self, s: f64) -> ImageRaster {
        ImageRaster {
            side: self.side,
            values: self.values.iter().map(|v| v * s).collect(),
            mask: self.mask.clone(),
        }
    }

    pub(crate) fn check_same(&self, other: &ImageRaster) -> Result<()> {
        if self.side != other.side {
            return Err(Error::Dimension {
                expected: self.side,
                got: other.side,
            });
        }
        if self.mask != other.mask {
            return Err(invalid("rasters have different masks"));
        }
        Ok(())
    }

    /// Min and max over unmasked pixels (0, 0 if everything is masked).
    pub fn range(&self) -> (f64, f64) {
        let mut it = self
            .values
            .iter()
            .zip(&self.mask)
            .filter(|(_, m)| **m)
            .map(|(v, _)| *v);
        let Some(first) = it.next() else {
            return (0.0, 0.0);
        };
        it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    /// Binary PGM (P5, 8-bit). Unmasked pixels are min–max scaled; the
    /// scale and `comments` go into header comment lines.
    pub fn to_pgm(&self, comments: &[String]) -> Vec<u8> {
        let (lo, hi) = self.range();
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut header = String::from("P5\n");
        for c in comments {
            let _ = writeln!(header, "# {c}");
        }
        let _ = writeln!(header, "# scale: min={lo:e} max={hi:e}");
        let _ = write!(header, "{} {}\n255\n", self.side, self.side);
        let mut out = header.into_bytes();
        out.extend(self.values.iter().zip(&self.mask).map(|(v, m)| {
            if *m {
                (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        }));
        out
    }

    /// Lossless CSV: `# key: value` comment lines, then `side` rows of
    /// comma-separated values in shortest round-trip form.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            let _ = writeln!(s, "# {c}");
        }
        let _ = writeln!(s, "# side: {}", self.side);
        for row in self.values.chunks(self.side) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<ImageRaster> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Format(format!("bad raster value '{v}': {e}")))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let side = rows.len();
        if side == 0 || rows.iter().any(|r| r.len() != side) {
            return Err(Error::Format(
                "raster CSV must be a non-empty square table".into(),
            ));
        }
        let spec = RasterSpec { side };
        let mut img = ImageRaster::zeros(spec);
        img.values = rows.into_iter().flatten().collect();
        Ok(img)
    }
}
