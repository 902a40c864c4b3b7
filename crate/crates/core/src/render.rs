//! Visual panels: coloured digit exemplars, randomly scaled and placed on a
//! 128x128 black canvas, plus a white hint glyph.

use std::io::Cursor;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{HintSymbol, PanelDescription, Slot};

pub const PANEL_SIZE: usize = 128;
pub const DIGIT_SIZE: usize = 28;
pub const HINT_SIZE: usize = 20;
const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;
/// Every sixth exemplar of a single source goes to the held-out pool.
const HELDOUT_EVERY: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pool {
    Train,
    Heldout,
}

/// A 28x28 grayscale exemplar, row-major, values in [0,1].
pub type Exemplar = Vec<f32>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DigitBank {
    /// Indexed by digit - 1.
    pub train: [Vec<Exemplar>; 9],
    pub heldout: [Vec<Exemplar>; 9],
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::parse(offset, "file truncated inside the header"))
}

/// Parses an IDX image container into (rows, cols, images).
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::parse(0, format!("image magic {magic}, expected {IMAGE_MAGIC}")));
    }
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let need = 16 + n * size;
    if bytes.len() < need {
        let whole = (bytes.len().saturating_sub(16)) / size.max(1);
        return Err(Error::parse(16 + whole * size, format!("file holds {whole} of {n} images")));
    }
    let images = (0..n).map(|i| bytes[16 + i * size..16 + (i + 1) * size].to_vec()).collect();
    Ok((rows, cols, images))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::parse(0, format!("label magic {magic}, expected {LABEL_MAGIC}")));
    }
    let n = read_u32(bytes, 4)? as usize;
    if bytes.len() < 8 + n {
        return Err(Error::parse(bytes.len(), format!("file holds {} of {n} labels", bytes.len() - 8)));
    }
    Ok(bytes[8..8 + n].to_vec())
}

/// Pairs images with labels, dropping label 0. Returns per-class exemplars
/// in file order.
pub fn classes_from_idx(images: &[u8], labels: &[u8]) -> Result<[Vec<Exemplar>; 9]> {
    let (rows, cols, imgs) = parse_idx_images(images)?;
    if (rows, cols) != (DIGIT_SIZE, DIGIT_SIZE) {
        return Err(Error::parse(8, format!("images are {rows}x{cols}, expected 28x28")));
    }
    let labels = parse_idx_labels(labels)?;
    if labels.len() != imgs.len() {
        return Err(Error::parse(4, format!("{} labels for {} images", labels.len(), imgs.len())));
    }
    let mut classes: [Vec<Exemplar>; 9] = Default::default();
    for (i, (img, l)) in imgs.iter().zip(&labels).enumerate() {
        match l {
            0 => {}
            1..=9 => classes[*l as usize - 1].push(img.iter().map(|p| *p as f32 / 255.0).collect()),
            _ => return Err(Error::parse(8 + i, format!("label {l} is not a digit"))),
        }
    }
    Ok(classes)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads one image/label file pair and splits each class into pools.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<DigitBank> {
    let classes = classes_from_idx(&read_file(images_path)?, &read_file(labels_path)?)?;
    let bank = DigitBank::split(classes);
    bank.check()?;
    Ok(bank)
}

impl DigitBank {
    /// Splits each class: every sixth exemplar is held out.
    pub fn split(classes: [Vec<Exemplar>; 9]) -> DigitBank {
        let mut bank = DigitBank::default();
        for (c, list) in classes.into_iter().enumerate() {
            for (i, e) in list.into_iter().enumerate() {
                if i % HELDOUT_EVERY == HELDOUT_EVERY - 1 {
                    bank.heldout[c].push(e);
                } else {
                    bank.train[c].push(e);
                }
            }
        }
        bank
    }

    /// Loads an MNIST directory: training files feed the train pool and the
    /// `t10k` files the held-out pool. Without the `t10k` files the training
    /// files are split.
    pub fn load_dir(dir: &Path) -> Result<DigitBank> {
        let train_images = dir.join("train-images-idx3-ubyte");
        let train_labels = dir.join("train-labels-idx1-ubyte");
        let test_images = dir.join("t10k-images-idx3-ubyte");
        let test_labels = dir.join("t10k-labels-idx1-ubyte");
        if !test_images.exists() || !test_labels.exists() {
            return load_idx(&train_images, &train_labels);
        }
        let bank = DigitBank {
            train: classes_from_idx(&read_file(&train_images)?, &read_file(&train_labels)?)?,
            heldout: classes_from_idx(&read_file(&test_images)?, &read_file(&test_labels)?)?,
        };
        bank.check()?;
        Ok(bank)
    }

    /// Procedural seven-segment digits with varied geometry and intensity.
    /// Every glyph is one 8-connected stroke.
    pub fn synthetic(per_class: usize, seed: u64) -> DigitBank {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut classes: [Vec<Exemplar>; 9] = Default::default();
        for (c, list) in classes.iter_mut().enumerate() {
            for _ in 0..per_class.max(HELDOUT_EVERY) {
                list.push(seven_segment(c as u8 + 1, &mut rng));
            }
        }
        DigitBank::split(classes)
    }

    pub fn pool(&self, pool: Pool) -> &[Vec<Exemplar>; 9] {
        match pool {
            Pool::Train => &self.train,
            Pool::Heldout => &self.heldout,
        }
    }

    pub fn check(&self) -> Result<()> {
        for pool in [Pool::Train, Pool::Heldout] {
            for (c, list) in self.pool(pool).iter().enumerate() {
                if list.is_empty() {
                    return Err(Error::Domain(format!("no {pool:?} exemplar for digit {}", c + 1)));
                }
                if list.iter().any(|e| e.len() != DIGIT_SIZE * DIGIT_SIZE) {
                    return Err(Error::Domain(format!("digit {} exemplar is not 28x28", c + 1)));
                }
            }
        }
        Ok(())
    }
}

fn seven_segment<R: Rng + ?Sized>(digit: u8, rng: &mut R) -> Exemplar {
    let th = rng.random_range(3..=4);
    let x0 = rng.random_range(6..=9);
    let w = rng.random_range(10..=13);
    let y0 = rng.random_range(3..=5);
    let h = rng.random_range(18..=20);
    let ink = rng.random_range(0.6f32..=1.0);
    let mid = y0 + h / 2 - th / 2;
    let (x1, y1) = (x0 + w, y0 + h);
    // (x range, y range) per segment a..g
    let seg = |s: char| -> (usize, usize, usize, usize) {
        match s {
            'a' => (x0, x1, y0, y0 + th),
            'b' => (x1 - th, x1, y0, mid + th),
            'c' => (x1 - th, x1, mid, y1),
            'd' => (x0, x1, y1 - th, y1),
            'e' => (x0, x0 + th, mid, y1),
            'f' => (x0, x0 + th, y0, mid + th),
            _ => (x0, x1, mid, mid + th),
        }
    };
    let segments = match digit {
        1 => "bc",
        2 => "abged",
        3 => "abgcd",
        4 => "fgbc",
        5 => "afgcd",
        6 => "afgedc",
        7 => "abc",
        8 => "abcdefg",
        _ => "abfgcd",
    };
    let mut img = vec![0.0; DIGIT_SIZE * DIGIT_SIZE];
    for s in segments.chars() {
        let (xa, xb, ya, yb) = seg(s);
        for y in ya..yb.min(DIGIT_SIZE) {
            for x in xa..xb.min(DIGIT_SIZE) {
                img[y * DIGIT_SIZE + x] = ink;
            }
        }
    }
    img
}

/// A 128x128 RGB panel, row-major with interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelImage {
    pub data: Vec<f32>,
}

impl Default for PanelImage {
    fn default() -> Self {
        PanelImage { data: vec![0.0; PANEL_SIZE * PANEL_SIZE * 3] }
    }
}

impl PanelImage {
    pub fn shape(&self) -> (usize, usize, usize) {
        (PANEL_SIZE, PANEL_SIZE, 3)
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * PANEL_SIZE + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * PANEL_SIZE + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn is_black(&self, x: usize, y: usize) -> bool {
        self.pixel(x, y).iter().all(|v| *v == 0.0)
    }

    /// Raw little-endian f32 values.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let bytes: Vec<u8> = self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        let img = image::RgbImage::from_raw(PANEL_SIZE as u32, PANEL_SIZE as u32, bytes)
            .ok_or_else(|| Error::Encoding("panel buffer has the wrong size".into()))?;
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png).map_err(|e| Error::Encoding(format!("png: {e}")))?;
        Ok(out.into_inner())
    }

    /// Count of 8-connected non-black regions.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; PANEL_SIZE * PANEL_SIZE];
        let mut count = 0;
        for start in 0..PANEL_SIZE * PANEL_SIZE {
            if seen[start] || self.is_black(start % PANEL_SIZE, start / PANEL_SIZE) {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % PANEL_SIZE) as i32, (i / PANEL_SIZE) as i32);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= PANEL_SIZE as i32 || ny >= PANEL_SIZE as i32 {
                            continue;
                        }
                        let j = ny as usize * PANEL_SIZE + nx as usize;
                        if !seen[j] && !self.is_black(nx as usize, ny as usize) {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        count
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOptions {
    pub scale_min: f64,
    pub scale_max: f64,
    pub placement_attempts: usize,
    /// Whole layouts tried per scale draw.
    pub layout_restarts: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { scale_min: 0.75, scale_max: 1.5, placement_attempts: 100, layout_restarts: 20 }
    }
}

/// Where one item of a panel landed.
#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    /// `None` for the hint glyph.
    pub slot: Option<Slot>,
    pub digit: u8,
    pub exemplar: usize,
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

fn disjoint(a: (usize, usize, usize), b: (usize, usize, usize)) -> bool {
    // one pixel of gap so 8-connected regions never merge
    a.0 + a.2 < b.0 || b.0 + b.2 < a.0 || a.1 + a.2 < b.1 || b.1 + b.2 < a.1
}

fn place_boxes<R: Rng + ?Sized>(
    sizes: &[usize],
    attempts: usize,
    restarts: usize,
    rng: &mut R,
) -> Option<Vec<(usize, usize)>> {
    (0..restarts.max(1)).find_map(|_| place_once(sizes, attempts, rng))
}

fn place_once<R: Rng + ?Sized>(sizes: &[usize], attempts: usize, rng: &mut R) -> Option<Vec<(usize, usize)>> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|i| std::cmp::Reverse(sizes[*i]));
    let mut placed: Vec<(usize, usize, usize)> = Vec::new();
    let mut pos = vec![(0, 0); sizes.len()];
    for i in order {
        let s = sizes[i];
        let free =
            |x: usize, y: usize, placed: &[(usize, usize, usize)]| placed.iter().all(|b| disjoint((x, y, s), *b));
        let span = PANEL_SIZE - s;
        let mut spot = None;
        for _ in 0..attempts {
            let (x, y) = (rng.random_range(0..=span), rng.random_range(0..=span));
            if free(x, y, &placed) {
                spot = Some((x, y));
                break;
            }
        }
        if spot.is_none() {
            let all: Vec<(usize, usize)> = (0..=span)
                .flat_map(|y| (0..=span).map(move |x| (x, y)))
                .filter(|(x, y)| free(*x, *y, &placed))
                .collect();
            if !all.is_empty() {
                spot = Some(all[rng.random_range(0..all.len())]);
            }
        }
        let (x, y) = spot?;
        placed.push((x, y, s));
        pos[i] = (x, y);
    }
    Some(pos)
}

/// One box per grid cell, in shuffled cells, jittered inside the cell.
fn grid_layout<R: Rng + ?Sized>(sizes: &[usize], cols: usize, rng: &mut R) -> Option<Vec<(usize, usize)>> {
    let cell = PANEL_SIZE / cols;
    if sizes.len() > cols * cols || sizes.iter().any(|s| *s >= cell) {
        return None;
    }
    let mut cells: Vec<usize> = (0..cols * cols).collect();
    cells.shuffle(rng);
    Some(
        sizes
            .iter()
            .zip(cells)
            .map(|(s, k)| {
                let (cx, cy) = (k % cols * cell, k / cols * cell);
                (cx + rng.random_range(0..cell - s), cy + rng.random_range(0..cell - s))
            })
            .collect(),
    )
}

/// Renders a panel with default options.
pub fn render_panel<R: Rng + ?Sized>(
    desc: &PanelDescription,
    bank: &DigitBank,
    pool: Pool,
    rng: &mut R,
) -> Result<PanelImage> {
    render_panel_with(desc, bank, pool, &RenderOptions::default(), rng).map(|(img, _)| img)
}

pub fn render_panel_with<R: Rng + ?Sized>(
    desc: &PanelDescription,
    bank: &DigitBank,
    pool: Pool,
    opts: &RenderOptions,
    rng: &mut R,
) -> Result<(PanelImage, Vec<Placement>)> {
    let entries = desc.entries();
    let exemplars = bank.pool(pool);
    let mut items: Vec<Placement> = Vec::with_capacity(entries.len() + 1);
    for (slot, v) in &entries {
        let list = &exemplars[*v as usize - 1];
        if list.is_empty() {
            return Err(Error::Domain(format!("no exemplar for digit {v}")));
        }
        items.push(Placement {
            slot: Some(*slot),
            digit: *v,
            exemplar: rng.random_range(0..list.len()),
            x: 0,
            y: 0,
            size: 0,
        });
    }
    if desc.hint.is_some() {
        items.push(Placement { slot: None, digit: 0, exemplar: 0, x: 0, y: 0, size: HINT_SIZE });
    }
    let draw = |max: f64, rng: &mut R| {
        let scale = if max > opts.scale_min { rng.random_range(opts.scale_min..=max) } else { opts.scale_min };
        ((DIGIT_SIZE as f64 * scale).round() as usize).clamp(1, PANEL_SIZE)
    };
    for it in items.iter_mut().filter(|it| it.slot.is_some()) {
        it.size = draw(opts.scale_max, rng);
    }
    let sizes: Vec<usize> = items.iter().map(|it| it.size).collect();
    let mut positions = place_boxes(&sizes, opts.placement_attempts, opts.layout_restarts, rng);
    if positions.is_none() {
        // second draw: scales capped so that a jittered grid always has room
        let cols = (1..).find(|c| c * c >= items.len()).unwrap_or(1);
        let cell = PANEL_SIZE / cols;
        let cap = (cell - 1) as f64 / DIGIT_SIZE as f64;
        for it in items.iter_mut().filter(|it| it.slot.is_some()) {
            it.size = draw(opts.scale_max.min(cap), rng);
        }
        let sizes: Vec<usize> = items.iter().map(|it| it.size).collect();
        positions = place_boxes(&sizes, opts.placement_attempts, opts.layout_restarts, rng)
            .or_else(|| grid_layout(&sizes, cols, rng));
    }
    let positions =
        positions.ok_or_else(|| Error::Placement(format!("could not place {} items without overlap", items.len())))?;

    let mut img = PanelImage::default();
    for (it, (x, y)) in items.iter_mut().zip(positions) {
        it.x = x;
        it.y = y;
        match it.slot {
            Some(slot) => {
                let src = &exemplars[it.digit as usize - 1][it.exemplar];
                let rgb = slot.color().rgb();
                for j in 0..it.size {
                    for i in 0..it.size {
                        let sx = i * DIGIT_SIZE / it.size;
                        let sy = j * DIGIT_SIZE / it.size;
                        let v = src[sy * DIGIT_SIZE + sx].clamp(0.0, 1.0);
                        if v > 0.0 {
                            img.set(x + i, y + j, [v * rgb[0], v * rgb[1], v * rgb[2]]);
                        }
                    }
                }
            }
            None => {
                let mask = hint_mask(desc.hint.expect("hint item implies a hint"));
                for j in 0..HINT_SIZE {
                    for i in 0..HINT_SIZE {
                        if mask[j * HINT_SIZE + i] {
                            img.set(x + i, y + j, [1.0; 3]);
                        }
                    }
                }
            }
        }
    }
    Ok((img, items))
}

fn inside_polygon(px: f64, py: f64, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Filled glyph on a 20x20 grid, sampled at pixel centres.
pub fn hint_mask(h: HintSymbol) -> Vec<bool> {
    let n = HINT_SIZE as f64;
    let c = n / 2.0;
    let poly: Vec<(f64, f64)> = match h {
        HintSymbol::Circle => Vec::new(),
        HintSymbol::Triangle => vec![(1.0, 1.0), (n - 1.0, c), (1.0, n - 1.0)],
        HintSymbol::Square => vec![(2.0, 2.0), (n - 2.0, 2.0), (n - 2.0, n - 2.0), (2.0, n - 2.0)],
        HintSymbol::Pentagon => (0..5)
            .map(|k| {
                let a = -std::f64::consts::FRAC_PI_2 + k as f64 * 2.0 * std::f64::consts::PI / 5.0;
                (c + (c - 0.5) * a.cos(), c + (c - 0.5) * a.sin())
            })
            .collect(),
    };
    let mut out = vec![false; HINT_SIZE * HINT_SIZE];
    for y in 0..HINT_SIZE {
        for x in 0..HINT_SIZE {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            out[y * HINT_SIZE + x] = match h {
                HintSymbol::Circle => (px - c).powi(2) + (py - c).powi(2) <= (c - 0.5).powi(2),
                _ => inside_polygon(px, py, &poly),
            };
        }
    }
    out
}
