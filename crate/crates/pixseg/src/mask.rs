use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A binary H x W ground-truth or predicted mask. `true` = foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Mask {
        assert_eq!(data.len(), height * width);
        Mask {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Mask {
        Mask::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn background_count(&self) -> usize {
        self.data.len() - self.foreground_count()
    }

    /// Constant 0/1 tensor of shape [H,W], outside the gradient graph.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            vec![self.height, self.width],
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    /// Build from a 0/1-valued tensor; anything but exactly 0 or 1 is an error.
    pub fn from_tensor(t: &Tensor) -> Result<Mask> {
        let shape = t.shape();
        if shape.len() != 2 {
            return Err(Error::invalid(format!("mask must be [H,W], got {shape:?}")));
        }
        let mut data = Vec::with_capacity(t.numel());
        for &v in t.data() {
            if v == 0.0 {
                data.push(false);
            } else if v == 1.0 {
                data.push(true);
            } else {
                return Err(Error::invalid(format!("mask value {v} is not binary")));
            }
        }
        Ok(Mask::new(shape[0], shape[1], data))
    }
}
