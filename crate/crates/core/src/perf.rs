//! First-order cycle and on-chip memory model.
//!
//! Each MAC group is treated as a fully pipelined unit retiring one
//! `ci_min`-wide dot product per cycle. Overheads are additive and default to
//! zero, so the default estimate is the dataflow's compute floor including
//! ceiling losses from channel blocking and weight-group splitting.

use std::fmt;

use crate::accel::{output_dims, LayerParams};
use crate::error::{Error, Result};
use crate::net::NetworkSpec;

/// BRAM of an XC7Z020 (140 blocks of 36 Kbit).
pub const XC7Z020_BRAM_BITS: u64 = 140 * 36 * 1024;

/// Reference conv latency per image at 100 MHz, printed for comparison only.
pub const REFERENCE_LATENCY_MS: f64 = 175.0;
/// Reference throughput, printed for comparison only.
pub const REFERENCE_GOPS: f64 = 4.43;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HwConfig {
    pub ci_min: usize,
    /// Number of MAC groups; a power of two.
    pub units: usize,
    pub clock_mhz: f64,
    /// Cycles charged once per layer.
    pub pipeline_fill: u64,
    pub row_overhead: u64,
    pub per_pixel_overhead: u64,
    pub bram_bits: u64,
}

impl Default for HwConfig {
    fn default() -> Self {
        Self {
            ci_min: 16,
            units: 8,
            clock_mhz: 100.0,
            pipeline_fill: 0,
            row_overhead: 0,
            per_pixel_overhead: 0,
            bram_bits: XC7Z020_BRAM_BITS,
        }
    }
}

impl HwConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.units.is_power_of_two() {
            return Err(Error::Precondition(format!("units must be a power of two, got {}", self.units)));
        }
        if self.ci_min == 0 {
            return Err(Error::Precondition("ci_min must be at least 1".into()));
        }
        if !(self.clock_mhz.is_finite() && self.clock_mhz > 0.0) {
            return Err(Error::Precondition(format!("clock must be positive, got {} MHz", self.clock_mhz)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerEstimate {
    pub cycles: u64,
    /// `ceil(MACs / (units * ci_min))`.
    pub ideal_cycles: u64,
    pub macs: u64,
}

pub fn estimate_layer(p: &LayerParams, cfg: &HwConfig) -> Result<LayerEstimate> {
    cfg.validate()?;
    let (y_out, x_out) = output_dims(p)?;
    let groups = p.c_out.div_ceil(cfg.units) as u64;
    let blocks = p.c_in.div_ceil(cfg.ci_min) as u64;
    let k2 = (p.kernel * p.kernel) as u64;
    let per_pixel = cfg.per_pixel_overhead + groups * k2 * blocks;
    let cycles = cfg.pipeline_fill + y_out as u64 * (cfg.row_overhead + x_out as u64 * per_pixel);
    let macs = p.macs()?;
    let ideal_cycles = macs.div_ceil((cfg.units * cfg.ci_min) as u64);
    Ok(LayerEstimate { cycles, ideal_cycles, macs })
}

/// On-chip buffer sizes in bits for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Footprint {
    pub itb: u64,
    pub itwb_per_unit: u64,
    pub weights: u64,
    pub weights_per_unit: u64,
    pub bias: u64,
    pub out_pixel: u64,
    /// ITB + all ITWBs + weights + bias + output pixel.
    pub total: u64,
    pub exceeds_bram: bool,
}

/// Biases are stored in the weight format.
pub fn footprint(p: &LayerParams, cfg: &HwConfig, act_bits: u32, w_bits: u32) -> Footprint {
    let (a, w) = (act_bits as u64, w_bits as u64);
    let k = p.kernel as u64;
    let (x_in, c_in, c_out) = (p.x_in as u64, p.c_in as u64, p.c_out as u64);
    let units = cfg.units.max(1) as u64;
    let itb = k * x_in * c_in * a;
    let itwb_per_unit = k * k * c_in * a;
    let weights = c_out * k * k * c_in * w;
    let weights_per_unit = c_out.div_ceil(units) * k * k * c_in * w;
    let bias = c_out * w;
    let out_pixel = c_out * a;
    let total = itb + units * itwb_per_unit + weights + bias + out_pixel;
    Footprint {
        itb,
        itwb_per_unit,
        weights,
        weights_per_unit,
        bias,
        out_pixel,
        total,
        exceeds_bram: total > cfg.bram_bits,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerPerf {
    pub slot: usize,
    pub params: LayerParams,
    pub estimate: LayerEstimate,
    pub footprint: Footprint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerfReport {
    pub config: HwConfig,
    pub layers: Vec<LayerPerf>,
    pub total_cycles: u64,
    pub ideal_cycles: u64,
    pub total_macs: u64,
    pub total_ms: f64,
    pub ideal_ms: f64,
    /// Conv ops (two per MAC) over the modeled latency.
    pub gops: f64,
    /// Largest per-layer value of each buffer class.
    pub peak: Footprint,
}

impl PerfReport {
    pub fn ops(&self) -> u64 {
        2 * self.total_macs
    }
}

pub fn network_report(net: &NetworkSpec, cfg: &HwConfig, act_bits: u32, w_bits: u32) -> Result<PerfReport> {
    cfg.validate()?;
    net.validate()?;
    let mut layers = Vec::new();
    let mut peak = Footprint {
        itb: 0,
        itwb_per_unit: 0,
        weights: 0,
        weights_per_unit: 0,
        bias: 0,
        out_pixel: 0,
        total: 0,
        exceeds_bram: false,
    };
    for (slot, params) in net.conv_layers().into_iter().enumerate() {
        let estimate = estimate_layer(&params, cfg)?;
        let f = footprint(&params, cfg, act_bits, w_bits);
        peak.itb = peak.itb.max(f.itb);
        peak.itwb_per_unit = peak.itwb_per_unit.max(f.itwb_per_unit);
        peak.weights = peak.weights.max(f.weights);
        peak.weights_per_unit = peak.weights_per_unit.max(f.weights_per_unit);
        peak.bias = peak.bias.max(f.bias);
        peak.out_pixel = peak.out_pixel.max(f.out_pixel);
        peak.total = peak.total.max(f.total);
        peak.exceeds_bram |= f.exceeds_bram;
        layers.push(LayerPerf { slot, params, estimate, footprint: f });
    }
    let total_cycles: u64 = layers.iter().map(|l| l.estimate.cycles).sum();
    let ideal_cycles: u64 = layers.iter().map(|l| l.estimate.ideal_cycles).sum();
    let total_macs: u64 = layers.iter().map(|l| l.estimate.macs).sum();
    let ms = |cycles: u64| cycles as f64 / (cfg.clock_mhz * 1e3);
    let total_ms = ms(total_cycles);
    let gops = if total_ms > 0.0 { 2.0 * total_macs as f64 / (total_ms * 1e6) } else { 0.0 };
    Ok(PerfReport {
        config: *cfg,
        layers,
        total_cycles,
        ideal_cycles,
        total_macs,
        total_ms,
        ideal_ms: ms(ideal_cycles),
        gops,
        peak,
    })
}

impl fmt::Display for PerfReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(f, "config: units={} ci_min={} clock={} MHz bram={} bits", c.units, c.ci_min, c.clock_mhz, c.bram_bits)?;
        writeln!(
            f,
            "{:>4} {:>13} {:>5} {:>3} {:>12} {:>12} {:>12} {:>9} {:>8} {:>10} {:>5}",
            "slot", "input", "c_out", "k/s", "macs", "cycles", "ideal", "itb", "itwb", "weights", "bram"
        )?;
        for l in &self.layers {
            let p = &l.params;
            writeln!(
                f,
                "{:>4} {:>13} {:>5} {:>3} {:>12} {:>12} {:>12} {:>9} {:>8} {:>10} {:>5}",
                l.slot,
                p.input_dims().to_string(),
                p.c_out,
                format!("{}/{}", p.kernel, p.stride),
                l.estimate.macs,
                l.estimate.cycles,
                l.estimate.ideal_cycles,
                l.footprint.itb,
                l.footprint.itwb_per_unit,
                l.footprint.weights,
                if l.footprint.exceeds_bram { "OVER" } else { "ok" }
            )?;
        }
        writeln!(f, "total ops: {} ({:.4} GOPs, MAC = 2 ops)", self.ops(), self.ops() as f64 / 1e9)?;
        writeln!(f, "modeled: {} cycles, {:.3} ms, {:.2} GOPs", self.total_cycles, self.total_ms, self.gops)?;
        writeln!(f, "ideal bound: {} cycles, {:.3} ms", self.ideal_cycles, self.ideal_ms)?;
        writeln!(
            f,
            "peak buffers: itb={} itwb/unit={} weights={} bias={} out_pixel={}",
            self.peak.itb, self.peak.itwb_per_unit, self.peak.weights, self.peak.bias, self.peak.out_pixel
        )?;
        writeln!(f, "reference (not asserted): {REFERENCE_LATENCY_MS} ms, {REFERENCE_GOPS} GOPs")
    }
}
