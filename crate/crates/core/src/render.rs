//! Binary PGM (`P5`) rendering of sample grids and 2D scatter histograms.

use crate::data::SampleBatch;
use crate::error::{Error, FormatError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub cell: usize,
}

impl GridSpec {
    /// Grid whose cell side is inferred from a square sample length.
    pub fn for_dim(rows: usize, cols: usize, dim: usize) -> Result<Self> {
        let cell = (dim as f64).sqrt().round() as usize;
        if cell == 0 || cell * cell != dim {
            return Err(Error::usage(format!("sample length {dim} is not a square")));
        }
        Ok(Self { rows, cols, cell })
    }

    pub fn width(&self) -> usize {
        self.cols * self.cell + self.cols.saturating_sub(1)
    }

    pub fn height(&self) -> usize {
        self.rows * self.cell + self.rows.saturating_sub(1)
    }
}

/// Grayscale image, one byte per pixel, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gray {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Gray {
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| -> Error { FormatError::Invalid(format!("pgm: {m}")).into() };
        // header: magic, width, height, maxval separated by single whitespace runs
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?.to_string());
        }
        pos += 1;
        if fields[0] != "P5" || fields[3] != "255" {
            return Err(bad("expected P5 with maxval 255"));
        }
        let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
        let pixels = bytes.get(pos..).ok_or_else(|| bad("missing raster"))?.to_vec();
        if pixels.len() != width * height {
            return Err(bad("raster size"));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// `(v + 1) / 2 * 255`, rounded half-up and saturated to `0..=255`.
pub fn quantize(v: f64) -> u8 {
    let scaled = (v.clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0;
    (scaled + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn grid_image(batch: &SampleBatch, spec: &GridSpec) -> Result<Gray> {
    let dim = batch.dim();
    if spec.cell * spec.cell != dim {
        return Err(Error::usage(format!(
            "sample length {dim} does not fill a {0}x{0} cell",
            spec.cell
        )));
    }
    if spec.rows == 0 || spec.cols == 0 {
        return Err(Error::usage("grid needs at least one row and column"));
    }
    if spec.rows * spec.cols > batch.len() {
        return Err(Error::usage(format!(
            "{}x{} grid needs {} samples, batch has {}",
            spec.rows,
            spec.cols,
            spec.rows * spec.cols,
            batch.len()
        )));
    }
    let (w, h) = (spec.width(), spec.height());
    let mut pixels = vec![0u8; w * h];
    for gr in 0..spec.rows {
        for gc in 0..spec.cols {
            let sample = batch.data.row(gr * spec.cols + gc);
            let (ox, oy) = (gc * (spec.cell + 1), gr * (spec.cell + 1));
            for y in 0..spec.cell {
                for x in 0..spec.cell {
                    pixels[(oy + y) * w + ox + x] = quantize(sample[y * spec.cell + x]);
                }
            }
        }
    }
    Ok(Gray { width: w, height: h, pixels })
}

/// Tiles the first `rows * cols` samples row-major with 1-pixel black
/// separators.
pub fn render_grid(batch: &SampleBatch, spec: &GridSpec) -> Result<Vec<u8>> {
    Ok(grid_image(batch, spec)?.to_pgm())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self { x_min: -3.0, x_max: 3.0, y_min: -3.0, y_max: 3.0 }
    }
}

pub fn scatter_image(batch: &SampleBatch, bounds: &Bounds, side: usize) -> Result<Gray> {
    let Bounds { x_min, x_max, y_min, y_max } = *bounds;
    let finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
    if !finite || !(x_max > x_min) || !(y_max > y_min) || side == 0 {
        return Err(Error::usage("degenerate scatter bounds"));
    }
    if !batch.is_empty() && batch.dim() != 2 {
        return Err(Error::usage("scatter needs two-dimensional samples"));
    }
    let mut counts = vec![0u32; side * side];
    for p in batch.data.iter_rows() {
        let fx = (p[0] - x_min) / (x_max - x_min);
        let fy = (p[1] - y_min) / (y_max - y_min);
        if !(0.0..1.0).contains(&fx) || !(0.0..1.0).contains(&fy) {
            continue;
        }
        let col = (fx * side as f64) as usize;
        let row = side - 1 - (fy * side as f64) as usize;
        counts[row * side + col] += 1;
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    let denom = (1.0 + max as f64).ln();
    let pixels = counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0
            } else {
                ((1.0 + c as f64).ln() / denom * 255.0 + 0.5).floor().clamp(1.0, 255.0) as u8
            }
        })
        .collect();
    Ok(Gray { width: side, height: side, pixels })
}

/// Log-scaled 2D histogram over `bounds`; points outside are dropped.
pub fn render_scatter(batch: &SampleBatch, bounds: &Bounds, side: usize) -> Result<Vec<u8>> {
    Ok(scatter_image(batch, bounds, side)?.to_pgm())
}

/// 4-connected components of pixels strictly brighter than `threshold`.
pub fn bright_components(img: &Gray, threshold: u8) -> usize {
    let mut seen = vec![false; img.pixels.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..img.pixels.len() {
        if seen[start] || img.pixels[start] <= threshold {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % img.width, i / img.width);
            let mut visit = |j: usize| {
                if !seen[j] && img.pixels[j] > threshold {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < img.width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - img.width);
            }
            if y + 1 < img.height {
                visit(i + img.width);
            }
        }
    }
    count
}
