use crate::error::{Error, Result};

/// `K` input lines addressed through a rotation table.
///
/// `rotation()[j]` is the physical line holding window row `j` (top to
/// bottom). Shifting the set down the feature map only rotates the table;
/// the line that falls off the top becomes the bottom row and is the only
/// line that accepts writes.
#[derive(Debug, Clone)]
pub struct LineBufferSet {
    width: usize,
    channels: usize,
    lines: Vec<Vec<i32>>,
    rot: Vec<usize>,
    writes: Vec<u64>,
}

impl LineBufferSet {
    pub fn new(k: usize, width: usize, channels: usize) -> Self {
        assert!(k > 0, "line buffer set needs at least one line");
        Self {
            width,
            channels,
            lines: vec![vec![0; width * channels]; k],
            rot: (0..k).collect(),
            writes: vec![0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.lines.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Words of storage, `K * width * channels`.
    pub fn capacity(&self) -> usize {
        self.lines.len() * self.width * self.channels
    }

    pub fn rotation(&self) -> &[usize] {
        &self.rot
    }

    /// Physical index of the line currently accepting writes.
    pub fn write_target(&self) -> usize {
        self.rot[self.rot.len() - 1]
    }

    pub fn shift(&mut self) {
        self.rot.rotate_left(1);
    }

    fn slot(&self, x: usize) -> Result<std::ops::Range<usize>> {
        if x >= self.width {
            return Err(Error::ColumnOutOfRange { col: x, width: self.width });
        }
        Ok(x * self.channels..(x + 1) * self.channels)
    }

    /// Stores one pixel at column `x` of the write-target line.
    pub fn write_pixel(&mut self, x: usize, pixel: &[i32]) -> Result<()> {
        if pixel.len() != self.channels {
            return Err(Error::LengthMismatch { expected: self.channels, got: pixel.len() });
        }
        let range = self.slot(x)?;
        let target = self.write_target();
        self.lines[target][range].copy_from_slice(pixel);
        self.writes[target] += 1;
        Ok(())
    }

    /// Stores an all-zero pixel at column `x` of the write-target line.
    pub fn write_zero_pixel(&mut self, x: usize) -> Result<()> {
        let range = self.slot(x)?;
        let target = self.write_target();
        self.lines[target][range].fill(0);
        self.writes[target] += 1;
        Ok(())
    }

    /// Channels at window row `row` (after rotation), column `x`.
    pub fn read(&self, row: usize, x: usize) -> Result<&[i32]> {
        let range = self.slot(x)?;
        let line = *self.rot.get(row).ok_or(Error::ColumnOutOfRange { col: row, width: self.k() })?;
        Ok(&self.lines[line][range])
    }

    /// Gathers column `x` of every window row, top to bottom, into `out`
    /// (`K * channels` words).
    pub fn read_column(&self, x: usize, out: &mut [i32]) -> Result<()> {
        let range = self.slot(x)?;
        if out.len() != self.k() * self.channels {
            return Err(Error::LengthMismatch { expected: self.k() * self.channels, got: out.len() });
        }
        for (dst, &line) in out.chunks_exact_mut(self.channels).zip(&self.rot) {
            dst.copy_from_slice(&self.lines[line][range.clone()]);
        }
        Ok(())
    }

    /// Pixel writes received by each physical line.
    pub fn line_writes(&self) -> &[u64] {
        &self.writes
    }

    /// Raw contents of a physical line.
    pub fn line(&self, physical: usize) -> &[i32] {
        &self.lines[physical]
    }
}
