use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Interleaved `height × width × channels` float image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer<S> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> ImageBuffer<S> {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, S::zero())
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: S) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{}x{}x{} image needs {} values, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> S {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: S) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn ensure_same_dims(&self, other: &Self) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "image dims differ: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.ensure_same_dims(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Elementwise maximum.
    pub fn max_with(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a.max(b))
    }

    /// Replicates a single-channel image to three channels.
    pub fn to_rgb(&self) -> Self {
        if self.channels == 3 {
            return self.clone();
        }
        let mut out = Self::new(self.width, self.height, 3);
        for p in 0..self.width * self.height {
            let v = self.data[p * self.channels];
            out.data[p * 3..p * 3 + 3].fill(v);
        }
        out
    }

    pub fn mean(&self) -> S {
        if self.data.is_empty() {
            return S::zero();
        }
        self.data.iter().copied().sum::<S>() / S::from_usize(self.data.len()).unwrap()
    }

    pub fn cast<T: Scalar>(&self) -> ImageBuffer<T> {
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| T::lit(v.as_f64())).collect(),
        }
    }

    /// Rounds to `levels`-step quantisation (`levels = 255` for 8-bit).
    pub fn quantized(&self, levels: u32) -> Self {
        let l = levels as f64;
        self.map(|v| S::lit((v.as_f64().clamp(0.0, 1.0) * l + 0.5).floor() / l))
    }
}
