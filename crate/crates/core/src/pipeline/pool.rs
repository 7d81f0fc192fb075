use rand::Rng;

/// History buffer of generated images for discriminator updates.
///
/// Below capacity every image is stored and returned. At capacity an image
/// is returned unchanged with probability one half; otherwise a uniformly
/// chosen stored image is returned and replaced by the new one.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePool {
    capacity: usize,
    images: Vec<Vec<f32>>,
}

impl ImagePool {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            images: Vec::with_capacity(capacity),
        }
    }

    pub fn from_images(capacity: usize, mut images: Vec<Vec<f32>>) -> Self {
        images.truncate(capacity);
        Self { capacity, images }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Vec<f32>] {
        &self.images
    }

    pub fn push_pop<R: Rng + ?Sized>(&mut self, image: Vec<f32>, rng: &mut R) -> Vec<f32> {
        if self.capacity == 0 {
            return image;
        }
        if self.images.len() < self.capacity {
            self.images.push(image.clone());
            return image;
        }
        if rng.random_bool(0.5) {
            let i = rng.random_range(0..self.images.len());
            std::mem::replace(&mut self.images[i], image)
        } else {
            image
        }
    }
}
