use crate::error::{Error, Result};

/// `K x K x C` input window kept as `K` columns behind a rotation table, so a
/// horizontal step replaces a single column.
#[derive(Debug, Clone)]
pub struct WindowBuffer {
    k: usize,
    channels: usize,
    cols: Vec<Vec<i32>>,
    order: Vec<usize>,
}

impl WindowBuffer {
    pub fn new(k: usize, channels: usize) -> Self {
        Self { k, channels, cols: vec![vec![0; k * channels]; k], order: (0..k).collect() }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Words of storage, `K * K * channels`.
    pub fn capacity(&self) -> usize {
        self.k * self.k * self.channels
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Drops the leftmost column and appends `new_col` (`K * channels` words,
    /// window rows top to bottom) on the right.
    pub fn shift_column(&mut self, new_col: &[i32]) -> Result<()> {
        if new_col.len() != self.k * self.channels {
            return Err(Error::LengthMismatch { expected: self.k * self.channels, got: new_col.len() });
        }
        let oldest = self.order[0];
        self.cols[oldest].copy_from_slice(new_col);
        self.order.rotate_left(1);
        Ok(())
    }

    /// Logical column `kw`, left to right.
    pub fn column(&self, kw: usize) -> &[i32] {
        &self.cols[self.order[kw]]
    }

    /// Channels at window position `(kh, kw)`.
    #[inline]
    pub fn tap(&self, kh: usize, kw: usize) -> &[i32] {
        let col = &self.cols[self.order[kw]];
        &col[kh * self.channels..(kh + 1) * self.channels]
    }
}
