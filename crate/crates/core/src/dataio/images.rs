use std::collections::BTreeMap;
use std::path::Path;

use image::imageops::FilterType;
use image::RgbImage;

use super::ImageId;
use crate::error::{Error, Result};

/// 8-bit RGB pixels in row-major, channel-interleaved order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageData {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResizeFilter {
    /// Synthetic scenes.
    Nearest,
    /// Photographs.
    Bilinear,
}

impl ImageData {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; (width * height * 3) as usize],
        }
    }

    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let at = ((y * self.width + x) * 3) as usize;
        self.pixels[at..at + 3].copy_from_slice(&rgb);
    }

    /// Channels-first values scaled into `[0, 1]`.
    pub fn to_chw(&self) -> Vec<f32> {
        let plane = (self.width * self.height) as usize;
        let mut out = vec![0f32; plane * 3];
        for (i, px) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + i] = f32::from(px[c]) / 255.0;
            }
        }
        out
    }

    pub fn resized(&self, width: u32, height: u32, filter: ResizeFilter) -> ImageData {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let img = RgbImage::from_raw(self.width, self.height, self.pixels.clone()).expect("buffer matches dimensions");
        let filter = match filter {
            ResizeFilter::Nearest => FilterType::Nearest,
            ResizeFilter::Bilinear => FilterType::Triangle,
        };
        let out = image::imageops::resize(&img, width, height, filter);
        ImageData {
            width,
            height,
            pixels: out.into_raw(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let img = RgbImage::from_raw(self.width, self.height, self.pixels.clone()).expect("buffer matches dimensions");
        img.save(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))
    }
}

/// Decodes an image file, optionally resizing it at load time.
pub fn load_image_file(path: &Path, resize_to: Option<(u32, u32)>, filter: ResizeFilter) -> Result<ImageData> {
    let img = image::open(path)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let data = ImageData {
        width: img.width(),
        height: img.height(),
        pixels: img.into_raw(),
    };
    Ok(match resize_to {
        Some((w, h)) => data.resized(w, h, filter),
        None => data,
    })
}

/// In-memory images keyed by image id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImageStore {
    images: BTreeMap<ImageId, ImageData>,
}

impl ImageStore {
    pub fn insert(&mut self, id: ImageId, image: ImageData) {
        self.images.insert(id, image);
    }

    pub fn get(&self, id: ImageId) -> Option<&ImageData> {
        self.images.get(&id)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ImageId, &ImageData)> {
        self.images.iter()
    }

    /// Writes `<dir>/<file_name>` for every image, using names from `file_names`.
    pub fn save_all(&self, dir: &Path, file_names: &BTreeMap<ImageId, String>) -> Result<()> {
        for (id, img) in &self.images {
            let name = file_names
                .get(id)
                .ok_or_else(|| Error::Validation(format!("no file name for image {id}")))?;
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            img.save(&path)?;
        }
        Ok(())
    }
}
