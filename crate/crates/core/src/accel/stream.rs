//! Pixel FIFOs between off-chip memory and the engines.
//!
//! A pixel is every channel at one `(y, x)` location; pixels travel in raster
//! order. Sources and sinks count traffic so tests can check that each input
//! pixel is consumed exactly once.

use std::sync::mpsc::{self, Receiver, SyncSender};

use crate::error::{Error, Result};
use crate::fxp::FixedFormat;
use crate::tensor::{Dims, FmapTensor};

pub trait PixelSource {
    fn channels(&self) -> usize;
    fn format(&self) -> FixedFormat;
    /// Fills `out` with the next pixel; `Ok(false)` at end of stream.
    fn read_pixel(&mut self, out: &mut [i32]) -> Result<bool>;
}

pub trait PixelSink {
    fn write_pixel(&mut self, pixel: &[i32]) -> Result<()>;
}

/// Streams a fixed-point tensor in raster order.
#[derive(Debug)]
pub struct TensorSource<'a> {
    raw: &'a [i32],
    fmt: FixedFormat,
    channels: usize,
    next: usize,
    reads: u64,
}

impl<'a> TensorSource<'a> {
    pub fn new(t: &'a FmapTensor) -> Result<Self> {
        let (fmt, raw) = t.expect_fixed("pixel stream")?;
        Ok(Self { raw, fmt, channels: t.dims().c, next: 0, reads: 0 })
    }

    pub fn reads(&self) -> u64 {
        self.reads
    }

    pub fn remaining(&self) -> usize {
        (self.raw.len() - self.next) / self.channels.max(1)
    }
}

impl PixelSource for TensorSource<'_> {
    fn channels(&self) -> usize {
        self.channels
    }

    fn format(&self) -> FixedFormat {
        self.fmt
    }

    fn read_pixel(&mut self, out: &mut [i32]) -> Result<bool> {
        if out.len() != self.channels {
            return Err(Error::LengthMismatch { expected: self.channels, got: out.len() });
        }
        if self.next + self.channels > self.raw.len() {
            return Ok(false);
        }
        out.copy_from_slice(&self.raw[self.next..self.next + self.channels]);
        self.next += self.channels;
        self.reads += 1;
        Ok(true)
    }
}

/// Collects emitted pixels into a tensor of known dims.
#[derive(Debug)]
pub struct TensorSink {
    dims: Dims,
    fmt: FixedFormat,
    raw: Vec<i32>,
    writes: u64,
}

impl TensorSink {
    pub fn new(dims: Dims, fmt: FixedFormat) -> Self {
        Self { dims, fmt, raw: Vec::with_capacity(dims.len()), writes: 0 }
    }

    pub fn writes(&self) -> u64 {
        self.writes
    }

    pub fn into_tensor(self) -> Result<FmapTensor> {
        if self.raw.len() != self.dims.len() {
            return Err(Error::LengthMismatch { expected: self.dims.len(), got: self.raw.len() });
        }
        FmapTensor::new_fixed(self.dims, self.fmt, self.raw)
    }
}

impl PixelSink for TensorSink {
    fn write_pixel(&mut self, pixel: &[i32]) -> Result<()> {
        if pixel.len() != self.dims.c {
            return Err(Error::LengthMismatch { expected: self.dims.c, got: pixel.len() });
        }
        if self.raw.len() + pixel.len() > self.dims.len() {
            return Err(Error::LengthMismatch { expected: self.dims.pixels(), got: self.dims.pixels() + 1 });
        }
        self.raw.extend_from_slice(pixel);
        self.writes += 1;
        Ok(())
    }
}

/// Bounded FIFO connecting a producer layer to a consumer layer on another
/// thread. `depth` is the number of pixels in flight; 0 makes every write
/// rendezvous with a read.
pub fn pixel_channel(channels: usize, fmt: FixedFormat, depth: usize) -> (ChannelSink, ChannelSource) {
    let (tx, rx) = mpsc::sync_channel(depth);
    (ChannelSink { tx, channels, writes: 0 }, ChannelSource { rx, channels, fmt, reads: 0 })
}

#[derive(Debug)]
pub struct ChannelSink {
    tx: SyncSender<Vec<i32>>,
    channels: usize,
    writes: u64,
}

impl ChannelSink {
    pub fn writes(&self) -> u64 {
        self.writes
    }
}

impl PixelSink for ChannelSink {
    fn write_pixel(&mut self, pixel: &[i32]) -> Result<()> {
        if pixel.len() != self.channels {
            return Err(Error::LengthMismatch { expected: self.channels, got: pixel.len() });
        }
        self.tx.send(pixel.to_vec()).map_err(|_| Error::StreamClosed)?;
        self.writes += 1;
        Ok(())
    }
}

#[derive(Debug)]
pub struct ChannelSource {
    rx: Receiver<Vec<i32>>,
    channels: usize,
    fmt: FixedFormat,
    reads: u64,
}

impl ChannelSource {
    pub fn reads(&self) -> u64 {
        self.reads
    }
}

impl PixelSource for ChannelSource {
    fn channels(&self) -> usize {
        self.channels
    }

    fn format(&self) -> FixedFormat {
        self.fmt
    }

    fn read_pixel(&mut self, out: &mut [i32]) -> Result<bool> {
        match self.rx.recv() {
            Ok(px) => {
                if px.len() != out.len() {
                    return Err(Error::LengthMismatch { expected: out.len(), got: px.len() });
                }
                out.copy_from_slice(&px);
                self.reads += 1;
                Ok(true)
            }
            // producer finished and dropped its end
            Err(_) => Ok(false),
        }
    }
}
