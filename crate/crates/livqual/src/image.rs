//! Grayscale raster, block grid and foreground mask primitives.
//!
//! Images are 8-bit row-major rasters with an informational dpi tag. The
//! canonical on-disk format is binary PGM (P5, maxval 255); 8-bit
//! single-channel PNG is accepted as well. All types are immutable after
//! construction and safe to share across threads.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

/// Minimum image side length: one block at the default block size.
pub const MIN_SIDE: usize = 32;

/// Default resolution tag when the source file carries none.
pub const DEFAULT_DPI: u32 = 500;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    Unsupported(String),
    #[error("malformed image file: {0}")]
    Malformed(String),
    #[error("image {width}x{height} is below the {MIN_SIDE}x{MIN_SIDE} minimum")]
    TooSmall { width: usize, height: usize },
    #[error("pixel buffer has {got} bytes, expected {expected}")]
    PixelCount { got: usize, expected: usize },
    #[error("block size {block_size} out of range for {width}x{height} image (min 8, max min(width, height))")]
    BadBlockSize {
        block_size: usize,
        width: usize,
        height: usize,
    },
}

/// 8-bit grayscale raster with resolution metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    dpi: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    /// Builds an image from row-major pixels, enforcing the size invariants.
    pub fn new(width: usize, height: usize, dpi: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(ImageError::TooSmall { width, height });
        }
        let expected = width * height;
        if pixels.len() != expected {
            return Err(ImageError::PixelCount {
                got: pixels.len(),
                expected,
            });
        }
        Ok(Self {
            width,
            height,
            dpi,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dpi(&self) -> u32 {
        self.dpi
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Pixel lookup with coordinates clamped to the image bounds.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[y * self.width + x]
    }
}

/// Non-overlapping square block partition anchored at the top-left corner.
/// Partial blocks at the right/bottom edges are discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    block_size: usize,
    cols: usize,
    rows: usize,
}

impl BlockGrid {
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Top-left pixel of block (row, col).
    pub fn block_origin(&self, row: usize, col: usize) -> (usize, usize) {
        (col * self.block_size, row * self.block_size)
    }

    /// Center of block (row, col) in pixel coordinates.
    pub fn block_center(&self, row: usize, col: usize) -> (f64, f64) {
        let (x0, y0) = self.block_origin(row, col);
        let half = (self.block_size as f64 - 1.0) / 2.0;
        (x0 as f64 + half, y0 as f64 + half)
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }
}

/// Partitions an image into non-overlapping `block_size` squares.
pub fn block_partition(image: &GrayImage, block_size: usize) -> Result<BlockGrid, ImageError> {
    if block_size < 8 || block_size > image.width().min(image.height()) {
        return Err(ImageError::BadBlockSize {
            block_size,
            width: image.width(),
            height: image.height(),
        });
    }
    Ok(BlockGrid {
        block_size,
        cols: image.width() / block_size,
        rows: image.height() / block_size,
    })
}

/// Foreground mask: per-pixel flags plus per-block flags derived with the
/// 50% rule (a block is foreground iff at least half of its pixels are).
#[derive(Debug, Clone)]
pub struct Mask {
    width: usize,
    height: usize,
    grid: BlockGrid,
    pixel_flags: Vec<bool>,
    block_flags: Vec<bool>,
    centroid: Option<(f64, f64)>,
}

impl Mask {
    /// Derives block flags and the foreground centroid from pixel flags.
    pub fn from_pixel_flags(
        width: usize,
        height: usize,
        grid: BlockGrid,
        pixel_flags: Vec<bool>,
    ) -> Result<Self, ImageError> {
        if pixel_flags.len() != width * height {
            return Err(ImageError::PixelCount {
                got: pixel_flags.len(),
                expected: width * height,
            });
        }
        let bs = grid.block_size();
        let mut block_flags = vec![false; grid.len()];
        for row in 0..grid.rows() {
            for col in 0..grid.cols() {
                let (x0, y0) = grid.block_origin(row, col);
                let mut fg = 0usize;
                for y in y0..y0 + bs {
                    for x in x0..x0 + bs {
                        if pixel_flags[y * width + x] {
                            fg += 1;
                        }
                    }
                }
                block_flags[grid.index(row, col)] = 2 * fg >= bs * bs;
            }
        }
        let centroid = centroid_of(&pixel_flags, width);
        Ok(Self {
            width,
            height,
            grid,
            pixel_flags,
            block_flags,
            centroid,
        })
    }

    /// Mask marking every pixel as foreground (used to force extraction on
    /// images that would not segment, e.g. noise fixtures).
    pub fn all_foreground(image: &GrayImage, grid: BlockGrid) -> Self {
        let n = image.width() * image.height();
        Self::from_pixel_flags(image.width(), image.height(), grid, vec![true; n])
            .expect("flag buffer sized from the image")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn grid(&self) -> &BlockGrid {
        &self.grid
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> bool {
        self.pixel_flags[y * self.width + x]
    }

    #[inline]
    pub fn block(&self, row: usize, col: usize) -> bool {
        self.block_flags[self.grid.index(row, col)]
    }

    pub fn block_flags(&self) -> &[bool] {
        &self.block_flags
    }

    /// Centroid of the foreground pixels, if any exist.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        self.centroid
    }

    pub fn foreground_pixel_count(&self) -> usize {
        self.pixel_flags.iter().filter(|&&f| f).count()
    }

    pub fn foreground_block_count(&self) -> usize {
        self.block_flags.iter().filter(|&&f| f).count()
    }

    pub fn is_empty(&self) -> bool {
        self.centroid.is_none()
    }

    /// Inclusive bounding box (x0, y0, x1, y1) of the foreground pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.pixel_flags[y * self.width + x] {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then_some((x0, y0, x1, y1))
    }

    /// Foreground mask rendered as a black/white image for debug dumps.
    pub fn to_debug_image(&self) -> Vec<u8> {
        self.pixel_flags
            .iter()
            .map(|&f| if f { 255 } else { 0 })
            .collect()
    }
}

fn centroid_of(pixel_flags: &[bool], width: usize) -> Option<(f64, f64)> {
    let mut n = 0usize;
    let mut sx = 0.0f64;
    let mut sy = 0.0f64;
    for (i, &f) in pixel_flags.iter().enumerate() {
        if f {
            n += 1;
            sx += (i % width) as f64;
            sy += (i / width) as f64;
        }
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

/// File format dispatch by extension and magic bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Pgm,
    Png,
}

fn sniff_format(path: &Path, head: &[u8]) -> Result<Format, ImageError> {
    if head.starts_with(b"P5") {
        return Ok(Format::Pgm);
    }
    if head.starts_with(&[0x89, b'P', b'N', b'G']) {
        return Ok(Format::Png);
    }
    Err(ImageError::Unsupported(format!(
        "{}: not a binary PGM (P5) or PNG file",
        path.display()
    )))
}

/// Loads an 8-bit grayscale image from PGM (binary P5) or PNG.
///
/// The dpi tag is taken from file metadata (a `# dpi N` comment in PGM, the
/// pHYs chunk in PNG) and defaults to 500 when absent.
pub fn load_image<P: AsRef<Path>>(path: P) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let io_err = |source| ImageError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut data = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(io_err)?;
    match sniff_format(path, &data)? {
        Format::Pgm => decode_pgm(&data),
        Format::Png => decode_png(&data),
    }
}

/// Writes an image as binary PGM or 8-bit grayscale PNG, chosen by the
/// output extension (`.png` for PNG, anything else is PGM).
pub fn save_image<P: AsRef<Path>>(image: &GrayImage, path: P) -> Result<(), ImageError> {
    let path = path.as_ref();
    let io_err = |source| ImageError::Io {
        path: path.display().to_string(),
        source,
    };
    let is_png = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("png"))
        .unwrap_or(false);
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    if is_png {
        encode_png(image, &mut out)
    } else {
        out.write_all(&encode_pgm(image)).map_err(io_err)
    }
}

/// Serializes an image as binary PGM (P5, maxval 255) with a dpi comment.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let header = format!(
        "P5\n# dpi {}\n{} {}\n255\n",
        image.dpi(),
        image.width(),
        image.height()
    );
    let mut out = Vec::with_capacity(header.len() + image.pixels().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(image.pixels());
    out
}

/// Parses a binary PGM (P5) byte stream.
pub fn decode_pgm(data: &[u8]) -> Result<GrayImage, ImageError> {
    let mut cursor = 0usize;
    let mut dpi = DEFAULT_DPI;

    let magic = read_token(data, &mut cursor, &mut dpi)
        .ok_or_else(|| ImageError::Malformed("missing PGM magic".into()))?;
    if magic != "P5" {
        return Err(ImageError::Unsupported(format!(
            "PGM magic {magic:?}, only binary P5 is supported"
        )));
    }
    let width: usize = parse_pgm_int(data, &mut cursor, &mut dpi, "width")?;
    let height: usize = parse_pgm_int(data, &mut cursor, &mut dpi, "height")?;
    let maxval: usize = parse_pgm_int(data, &mut cursor, &mut dpi, "maxval")?;
    if maxval != 255 {
        return Err(ImageError::Unsupported(format!(
            "PGM maxval {maxval}, only 8-bit (255) is supported"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if cursor >= data.len() {
        return Err(ImageError::Malformed("truncated PGM header".into()));
    }
    cursor += 1;
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| ImageError::Malformed("PGM dimensions overflow".into()))?;
    let raster = data
        .get(cursor..cursor + expected)
        .ok_or_else(|| ImageError::Malformed("PGM raster shorter than header promises".into()))?;
    GrayImage::new(width, height, dpi, raster.to_vec())
}

/// Reads one whitespace-delimited header token, skipping `#` comments and
/// harvesting a `# dpi N` comment when present.
fn read_token(data: &[u8], cursor: &mut usize, dpi: &mut u32) -> Option<String> {
    loop {
        while *cursor < data.len() && data[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < data.len() && data[*cursor] == b'#' {
            let start = *cursor;
            while *cursor < data.len() && data[*cursor] != b'\n' {
                *cursor += 1;
            }
            let comment = String::from_utf8_lossy(&data[start..*cursor]);
            let mut words = comment.trim_start_matches('#').split_whitespace();
            if words.next() == Some("dpi") {
                if let Some(Ok(v)) = words.next().map(str::parse) {
                    *dpi = v;
                }
            }
            continue;
        }
        break;
    }
    let start = *cursor;
    while *cursor < data.len() && !data[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    (*cursor > start).then(|| String::from_utf8_lossy(&data[start..*cursor]).into_owned())
}

fn parse_pgm_int(
    data: &[u8],
    cursor: &mut usize,
    dpi: &mut u32,
    what: &str,
) -> Result<usize, ImageError> {
    read_token(data, cursor, dpi)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| ImageError::Malformed(format!("bad PGM {what}")))
}

const METERS_PER_INCH: f64 = 0.0254;

fn decode_png(data: &[u8]) -> Result<GrayImage, ImageError> {
    let decoder = png::Decoder::new(std::io::Cursor::new(data));
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageError::Malformed(format!("PNG: {e}")))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageError::Malformed(format!("PNG: {e}")))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(ImageError::Unsupported(format!(
            "PNG {:?}/{:?}, only 8-bit grayscale is supported",
            info.color_type, info.bit_depth
        )));
    }
    let dpi = reader
        .info()
        .pixel_dims
        .filter(|d| d.unit == png::Unit::Meter)
        .map(|d| (d.xppu as f64 * METERS_PER_INCH).round() as u32)
        .unwrap_or(DEFAULT_DPI);
    buf.truncate(info.buffer_size());
    GrayImage::new(info.width as usize, info.height as usize, dpi, buf)
}

fn encode_png<W: Write>(image: &GrayImage, out: W) -> Result<(), ImageError> {
    let mut encoder = png::Encoder::new(out, image.width() as u32, image.height() as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let ppu = (image.dpi() as f64 / METERS_PER_INCH).round() as u32;
    encoder.set_pixel_dims(Some(png::PixelDimensions {
        xppu: ppu,
        yppu: ppu,
        unit: png::Unit::Meter,
    }));
    let mut writer = encoder
        .write_header()
        .map_err(|e| ImageError::Malformed(format!("PNG: {e}")))?;
    writer
        .write_image_data(image.pixels())
        .map_err(|e| ImageError::Malformed(format!("PNG: {e}")))
}

impl fmt::Display for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}@{}dpi", self.width, self.height, self.dpi)
    }
}
