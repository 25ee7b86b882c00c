//! Image value types shared by every stage.
//!
//! Pixels are stored as `f32` in `[-1, 1]`, channel-planar (CHW). PNG
//! exchange maps that range linearly onto 8-bit samples.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::error::{input, Error, Result};

/// Value used for "no edge" in edge maps and sketches (white paper).
pub const NO_EDGE: f32 = 1.0;
/// Value used for a drawn stroke (black ink).
pub const INK: f32 = -1.0;

fn check_range(pixels: &[f32]) -> Result<()> {
    if let Some(v) = pixels.iter().find(|v| !v.is_finite() || v.abs() > 1.0 + 1e-6) {
        return input(format!("pixel value {v} outside [-1, 1]"));
    }
    Ok(())
}

pub fn to_u8(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

pub fn from_u8(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

/// Axis-aligned box with half-open pixel extents `[x1, x2) × [y1, y2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x1: usize,
    pub y1: usize,
    pub x2: usize,
    pub y2: usize,
}

impl BBox {
    pub fn new(x1: usize, y1: usize, x2: usize, y2: usize) -> Result<Self> {
        if x1 >= x2 || y1 >= y2 {
            return input(format!("degenerate bbox ({x1}, {y1}, {x2}, {y2})"));
        }
        Ok(BBox { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> usize {
        self.x2 - self.x1
    }

    pub fn height(&self) -> usize {
        self.y2 - self.y1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2 && self.x2 <= width && self.y2 <= height
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.x1 < other.x2 && other.x1 < self.x2 && self.y1 < other.y2 && other.y1 < self.y2
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x1 && x < self.x2 && y >= self.y1 && y < self.y2
    }

    pub fn center(&self) -> (f32, f32) {
        (
            (self.x1 + self.x2) as f32 / 2.0,
            (self.y1 + self.y2) as f32 / 2.0,
        )
    }
}

/// Single-channel square image in `[-1, 1]`; ink is `-1`, paper is `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeImage {
    size: usize,
    pixels: Vec<f32>,
}

impl EdgeImage {
    pub fn new(size: usize, pixels: Vec<f32>) -> Result<Self> {
        if size == 0 || pixels.len() != size * size {
            return input(format!(
                "edge image needs {size}x{size} pixels, got {}",
                pixels.len()
            ));
        }
        check_range(&pixels)?;
        Ok(EdgeImage { size, pixels })
    }

    pub fn blank(size: usize) -> Self {
        EdgeImage {
            size,
            pixels: vec![NO_EDGE; size * size],
        }
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut pixels = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                pixels.push(f(x, y).clamp(-1.0, 1.0));
            }
        }
        EdgeImage { size, pixels }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.size + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.pixels[y * self.size + x] = v.clamp(-1.0, 1.0);
    }

    /// Stroke strength in `[0, 1]` (0 = paper, 1 = full ink).
    pub fn ink(&self, x: usize, y: usize) -> f32 {
        (NO_EDGE - self.get(x, y)) / 2.0
    }

    pub fn is_blank(&self) -> bool {
        self.pixels.iter().all(|&v| v >= NO_EDGE - 1e-6)
    }

    pub fn resize(&self, size: usize) -> EdgeImage {
        if size == self.size {
            return self.clone();
        }
        EdgeImage {
            size,
            pixels: resize_plane(&self.pixels, self.size, self.size, size, size),
        }
    }

    pub fn crop(&self, bbox: &BBox) -> Result<EdgeImage> {
        if !bbox.fits(self.size, self.size) {
            return input(format!("crop {bbox:?} outside {0}x{0} edge image", self.size));
        }
        // Non-square crops are padded with paper to the longer side.
        let side = bbox.width().max(bbox.height());
        let ox = (side - bbox.width()) / 2;
        let oy = (side - bbox.height()) / 2;
        let mut out = EdgeImage::blank(side);
        for y in 0..bbox.height() {
            for x in 0..bbox.width() {
                out.set(x + ox, y + oy, self.get(bbox.x1 + x, bbox.y1 + y));
            }
        }
        Ok(out)
    }

    pub fn to_color(&self) -> ColorImage {
        let mut pixels = Vec::with_capacity(3 * self.pixels.len());
        for _ in 0..3 {
            pixels.extend_from_slice(&self.pixels);
        }
        ColorImage {
            height: self.size,
            width: self.size,
            pixels,
        }
    }

    /// `[1, 1, H, W]` float tensor.
    pub fn to_tensor(&self) -> Tensor {
        let s = self.size as i64;
        Tensor::from_slice(&self.pixels).view([1, 1, s, s])
    }

    /// Accepts `[1, H, W]` or `[1, 1, H, W]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let dims = t.size();
        let (h, w) = match dims.as_slice() {
            [1, h, w] | [1, 1, h, w] => (*h as usize, *w as usize),
            _ => return input(format!("edge tensor has shape {dims:?}")),
        };
        if h != w {
            return input(format!("edge tensor is {h}x{w}, must be square"));
        }
        let pixels = tensor_to_vec(t)?;
        EdgeImage::new(h, pixels)
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let s = self.size as u32;
        let img = GrayImage::from_raw(s, s, self.pixels.iter().map(|&v| to_u8(v)).collect())
            .expect("buffer length matches dimensions");
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    /// Decodes any PNG as luminance; non-square inputs are padded with paper.
    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let side = w.max(h);
        let mut out = EdgeImage::blank(side);
        let (ox, oy) = ((side - w) / 2, (side - h) / 2);
        for (x, y, p) in img.enumerate_pixels() {
            out.set(x as usize + ox, y as usize + oy, from_u8(p.0[0]));
        }
        Ok(out)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_png_bytes()?)
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        EdgeImage::from_png_bytes(&bytes)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

/// Three-channel image in `[-1, 1]`, channel-planar.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl ColorImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != 3 * height * width {
            return input(format!(
                "color image needs 3x{height}x{width} values, got {}",
                pixels.len()
            ));
        }
        check_range(&pixels)?;
        Ok(ColorImage {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let mut pixels = Vec::with_capacity(3 * height * width);
        for c in rgb {
            pixels.extend(std::iter::repeat_n(c.clamp(-1.0, 1.0), height * width));
        }
        ColorImage {
            height,
            width,
            pixels,
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut img = ColorImage::filled(height, width, [0.0; 3]);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.pixels[c * n..(c + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let n = self.height * self.width;
        let i = y * self.width + x;
        [self.pixels[i], self.pixels[n + i], self.pixels[2 * n + i]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let n = self.height * self.width;
        let i = y * self.width + x;
        for (c, v) in rgb.into_iter().enumerate() {
            self.pixels[c * n + i] = v.clamp(-1.0, 1.0);
        }
    }

    /// Rec. 601 luma in `[-1, 1]`, row-major.
    pub fn luma(&self) -> Vec<f32> {
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        r.iter()
            .zip(g)
            .zip(b)
            .map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect()
    }

    pub fn resize(&self, height: usize, width: usize) -> ColorImage {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut pixels = Vec::with_capacity(3 * height * width);
        for c in 0..3 {
            pixels.extend(resize_plane(self.plane(c), self.width, self.height, width, height));
        }
        ColorImage {
            height,
            width,
            pixels,
        }
    }

    pub fn crop(&self, bbox: &BBox) -> Result<ColorImage> {
        if !bbox.fits(self.width, self.height) {
            return input(format!(
                "crop {bbox:?} outside {}x{} image",
                self.width, self.height
            ));
        }
        Ok(ColorImage::from_fn(bbox.height(), bbox.width(), |x, y| {
            self.get(bbox.x1 + x, bbox.y1 + y)
        }))
    }

    /// `[1, 3, H, W]` float tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_slice(&self.pixels).view([1, 3, self.height as i64, self.width as i64])
    }

    /// Accepts `[3, H, W]` or `[1, 3, H, W]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let dims = t.size();
        let (h, w) = match dims.as_slice() {
            [3, h, w] | [1, 3, h, w] => (*h as usize, *w as usize),
            _ => return input(format!("color tensor has shape {dims:?}")),
        };
        ColorImage::new(h, w, tensor_to_vec(t)?)
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut raw = Vec::with_capacity(self.pixels.len());
        for y in 0..self.height {
            for x in 0..self.width {
                raw.extend(self.get(x, y).map(to_u8));
            }
        }
        let img = RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions");
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8();
        let mut out = ColorImage::filled(img.height() as usize, img.width() as usize, [0.0; 3]);
        for (x, y, p) in img.enumerate_pixels() {
            out.set(x as usize, y as usize, p.0.map(from_u8));
        }
        Ok(out)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_png_bytes()?)
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        ColorImage::from_png_bytes(&bytes)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

/// Edge map and image placed side by side, the joint critic's input.
#[derive(Debug, Clone)]
pub struct JointPair {
    pub edge: EdgeImage,
    pub image: ColorImage,
    pub joined: ColorImage,
}

impl JointPair {
    pub fn new(edge: EdgeImage, image: ColorImage) -> Result<Self> {
        if image.height() != edge.size() || image.width() != edge.size() {
            return input(format!(
                "joint pair needs matching sizes, edge {} vs image {}x{}",
                edge.size(),
                image.height(),
                image.width()
            ));
        }
        let s = edge.size();
        let rgb_edge = edge.to_color();
        let joined = ColorImage::from_fn(s, 2 * s, |x, y| {
            if x < s {
                rgb_edge.get(x, y)
            } else {
                image.get(x - s, y)
            }
        });
        Ok(JointPair {
            edge,
            image,
            joined,
        })
    }
}

/// Batched joint composite: `[N,1,H,W]` edges and `[N,3,H,W]` images to `[N,3,H,2W]`.
pub fn join_width(edges: &Tensor, images: &Tensor) -> Tensor {
    Tensor::cat(&[edges.expand_as(images), images.shallow_clone()], 3)
}

pub(crate) fn tensor_to_vec(t: &Tensor) -> Result<Vec<f32>> {
    let flat = t.to_kind(Kind::Float).contiguous().view([-1]);
    Ok(Vec::<f32>::try_from(&flat)?)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a square single-channel label map (0 = unlabeled).
pub fn save_label_png(path: &Path, size: usize, labels: &[u8]) -> Result<()> {
    if labels.len() != size * size {
        return input(format!("label map has {} pixels, expected {}", labels.len(), size * size));
    }
    let img = GrayImage::from_raw(size as u32, size as u32, labels.to_vec()).expect("length checked");
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    write_bytes(path, &buf.into_inner())
}

/// Reads a label map written by [`save_label_png`]; returns `(size, labels)`.
pub fn load_label_png(path: &Path) -> Result<(usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .to_luma8();
    if img.width() != img.height() {
        return Err(Error::Data(format!("{}: label map is not square", path.display())));
    }
    Ok((img.width() as usize, img.into_raw()))
}

/// Bilinear resampling with half-pixel centers.
pub fn resize_plane(src: &[f32], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(dw * dh);
    let sx = sw as f32 / dw as f32;
    let sy = sh as f32 / dh as f32;
    for y in 0..dh {
        let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f32);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let ty = fy - y0 as f32;
        for x in 0..dw {
            let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f32);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let tx = fx - x0 as f32;
            let top = src[y0 * sw + x0] * (1.0 - tx) + src[y0 * sw + x1] * tx;
            let bot = src[y1 * sw + x0] * (1.0 - tx) + src[y1 * sw + x1] * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

/// Pixels whose centers lie within `radius` of the polyline through `points`
/// (pixel coordinates). Row-major `width * height`.
pub fn stroke_mask(width: usize, height: usize, points: &[(f32, f32)], radius: f32) -> Vec<bool> {
    let mut mask = vec![false; width * height];
    let segments: Vec<((f32, f32), (f32, f32))> = match points {
        [] => return mask,
        [p] => vec![(*p, *p)],
        _ => points.windows(2).map(|w| (w[0], w[1])).collect(),
    };
    for (a, b) in segments {
        let x_lo = (a.0.min(b.0) - radius).floor().max(0.0) as usize;
        let y_lo = (a.1.min(b.1) - radius).floor().max(0.0) as usize;
        let x_hi = ((a.0.max(b.0) + radius).ceil().max(0.0) as usize).min(width);
        let y_hi = ((a.1.max(b.1) + radius).ceil().max(0.0) as usize).min(height);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
                let t = if len2 > 0.0 {
                    (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (qx, qy) = (a.0 + t * dx - px, a.1 + t * dy - py);
                if qx * qx + qy * qy <= radius * radius {
                    mask[y * width + x] = true;
                }
            }
        }
    }
    mask
}

impl EdgeImage {
    /// Inks the polyline through `points` (pixel coordinates).
    pub fn draw_polyline(&mut self, points: &[(f32, f32)], radius: f32) {
        let mask = stroke_mask(self.size, self.size, points, radius);
        for (p, m) in self.pixels.iter_mut().zip(mask) {
            if m {
                *p = INK;
            }
        }
    }

    /// Pixelwise darker of the two (ink wins).
    pub fn overlay(&mut self, other: &EdgeImage, x0: isize, y0: isize) {
        for y in 0..other.size {
            for x in 0..other.size {
                let (tx, ty) = (x0 + x as isize, y0 + y as isize);
                if tx < 0 || ty < 0 || tx >= self.size as isize || ty >= self.size as isize {
                    continue;
                }
                let i = ty as usize * self.size + tx as usize;
                self.pixels[i] = self.pixels[i].min(other.get(x, y));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_pair_width_is_sum() {
        let pair = JointPair::new(EdgeImage::blank(8), ColorImage::filled(8, 8, [0.5; 3])).unwrap();
        assert_eq!(pair.joined.width(), 16);
        assert_eq!(pair.joined.height(), 8);
        assert_eq!(pair.joined.get(3, 3), [1.0; 3]);
        assert_eq!(pair.joined.get(12, 3), [0.5; 3]);
    }

    #[test]
    fn out_of_range_pixels_rejected() {
        assert!(EdgeImage::new(2, vec![0.0, 0.0, 1.5, 0.0]).is_err());
        assert!(ColorImage::new(1, 1, vec![0.0, f32::NAN, 0.0]).is_err());
        assert!(EdgeImage::new(2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn png_round_trip_is_exact_on_u8_grid() {
        let img = ColorImage::from_fn(5, 7, |x, y| {
            [from_u8((x * 30) as u8), from_u8((y * 40) as u8), from_u8(17)]
        });
        let back = ColorImage::from_png_bytes(&img.to_png_bytes().unwrap()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn resize_identity_and_constant() {
        let plane = vec![0.25; 16];
        assert_eq!(resize_plane(&plane, 4, 4, 9, 3), vec![0.25; 27]);
        let e = EdgeImage::from_fn(4, |x, y| (x + y) as f32 / 8.0);
        assert_eq!(e.resize(4), e);
    }

    #[test]
    fn tensor_round_trip() {
        let img = ColorImage::from_fn(4, 6, |x, y| [x as f32 / 6.0, y as f32 / 4.0, -0.5]);
        assert_eq!(ColorImage::from_tensor(&img.to_tensor()).unwrap(), img);
    }

    #[test]
    fn bbox_rules() {
        assert!(BBox::new(3, 0, 3, 4).is_err());
        let a = BBox::new(0, 0, 4, 4).unwrap();
        let b = BBox::new(4, 0, 8, 4).unwrap();
        assert!(!a.intersects(&b));
        assert_eq!(a.union(&b), BBox::new(0, 0, 8, 4).unwrap());
        assert!(a.fits(4, 4) && !b.fits(4, 4));
    }
}
