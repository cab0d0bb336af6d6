use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Hardware parameters of the computing engine. Defaults are the reference
/// design point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub n_pe: usize,
    /// Multipliers per PE.
    pub n_mul: usize,
    /// Accumulators per PE.
    pub n_acc: usize,
    pub weight_sub_banks: usize,
    pub weight_bank_width: u32,
    pub weight_bank_depth: usize,
    pub perm_sram_width: u32,
    pub perm_sram_depth: usize,
    /// Activation SRAM banks.
    pub n_actmb: usize,
    /// Activation bank width in bits.
    pub w_actm: u32,
    pub act_bank_depth: usize,
    pub act_bits: u32,
    pub fifo_depth: usize,
    pub fifo_width: u32,
    pub pipeline_stages: usize,
    pub clock_hz: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            n_pe: 32,
            n_mul: 8,
            n_acc: 128,
            weight_sub_banks: 16,
            weight_bank_width: 32,
            weight_bank_depth: 2048,
            perm_sram_width: 48,
            perm_sram_depth: 2048,
            n_actmb: 8,
            w_actm: 64,
            act_bank_depth: 2048,
            act_bits: 16,
            fifo_depth: 32,
            fifo_width: 32,
            pipeline_stages: 5,
            clock_hz: 1.2e9,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::Config(m));
        for (name, v) in [
            ("n_pe", self.n_pe),
            ("n_mul", self.n_mul),
            ("n_acc", self.n_acc),
            ("weight_sub_banks", self.weight_sub_banks),
            ("weight_bank_depth", self.weight_bank_depth),
            ("perm_sram_depth", self.perm_sram_depth),
            ("n_actmb", self.n_actmb),
            ("act_bank_depth", self.act_bank_depth),
            ("fifo_depth", self.fifo_depth),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !self.n_acc.is_multiple_of(self.n_mul) {
            return bad(format!(
                "n_acc ({}) must be a multiple of n_mul ({})",
                self.n_acc, self.n_mul
            ));
        }
        if self.act_bits == 0 || !self.w_actm.is_multiple_of(self.act_bits) {
            return bad(format!(
                "activation bank width {} is not a multiple of the activation width {}",
                self.w_actm, self.act_bits
            ));
        }
        if self.weight_bank_width == 0 || !self.weight_bank_width.is_multiple_of(16) || self.weight_bank_width > 64
        {
            return bad(format!(
                "weight bank width {} must be a multiple of 16 no wider than 64",
                self.weight_bank_width
            ));
        }
        if self.perm_sram_width == 0 || self.perm_sram_width > 64 {
            return bad(format!("permutation SRAM width {} outside 1..=64", self.perm_sram_width));
        }
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return bad(format!("clock {} Hz is not a positive frequency", self.clock_hz));
        }
        Ok(())
    }

    /// Activations read from (or written to) the activation banks per cycle.
    pub fn activations_per_cycle(&self) -> usize {
        self.n_actmb * (self.w_actm / self.act_bits) as usize
    }

    pub fn activation_capacity(&self) -> usize {
        self.activations_per_cycle() * self.act_bank_depth
    }

    pub fn weight_words_per_pe(&self) -> usize {
        self.weight_sub_banks * self.weight_bank_depth
    }
}
