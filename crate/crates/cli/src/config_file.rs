//! Plain-text engine configuration: `key = value` lines, `#` comments.
//! Keys follow the design-parameter table.

use permdnn_sim::EngineConfig;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{value}` is not a valid value for `{key}`")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("line {line}: {key} = {value} is not supported by this model (only {supported})")]
    Unsupported {
        line: usize,
        key: String,
        value: String,
        supported: String,
    },
    #[error("line {line}: `{key}` given twice")]
    Duplicate { line: usize, key: String },
}

/// Engine parameters plus the weight-sharing tag width.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub engine: EngineConfig,
    pub tag_bits: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            engine: EngineConfig::default(),
            tag_bits: 4,
        }
    }
}

pub const KEYS: [&str; 19] = [
    "multiplier_amount",
    "multiplier_width",
    "accumulator_amount",
    "accumulator_width",
    "weight_sram_subbank_amount",
    "weight_sram_subbank_width",
    "weight_sram_subbank_depth",
    "permutation_sram_width",
    "permutation_sram_depth",
    "pe_amount",
    "quantization_scheme",
    "weight_sharing_strategy",
    "pipeline_stages",
    "activation_sram_bank_amount",
    "activation_sram_bank_width",
    "activation_sram_bank_depth",
    "activation_fifo_width",
    "activation_fifo_depth",
    "clock_hz",
];

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
        let (key, value) = (key.trim(), value.trim());
        let Some(&key) = KEYS.iter().find(|k| **k == key) else {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        };
        if seen.contains(&key) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
        seen.push(key);
        let bad = || ConfigError::BadValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
        };
        if key == "clock_hz" {
            cfg.engine.clock_hz = value.parse().map_err(|_| bad())?;
            continue;
        }
        let n: usize = value.parse().map_err(|_| bad())?;
        let fixed = |want: usize| {
            if n == want {
                Ok(())
            } else {
                Err(ConfigError::Unsupported {
                    line,
                    key: key.to_string(),
                    value: value.to_string(),
                    supported: want.to_string(),
                })
            }
        };
        let bits = || u32::try_from(n).map_err(|_| bad());
        let e = &mut cfg.engine;
        match key {
            "multiplier_amount" => e.n_mul = n,
            "multiplier_width" => fixed(16)?,
            "accumulator_amount" => e.n_acc = n,
            "accumulator_width" => fixed(permdnn_core::quant::ACCUMULATOR_BITS as usize)?,
            "weight_sram_subbank_amount" => e.weight_sub_banks = n,
            "weight_sram_subbank_width" => e.weight_bank_width = bits()?,
            "weight_sram_subbank_depth" => e.weight_bank_depth = n,
            "permutation_sram_width" => e.perm_sram_width = bits()?,
            "permutation_sram_depth" => e.perm_sram_depth = n,
            "pe_amount" => e.n_pe = n,
            "quantization_scheme" => fixed(16)?,
            "weight_sharing_strategy" => {
                if !(1..=8).contains(&n) {
                    return Err(bad());
                }
                cfg.tag_bits = n as u32;
            }
            "pipeline_stages" => e.pipeline_stages = n,
            "activation_sram_bank_amount" => e.n_actmb = n,
            "activation_sram_bank_width" => e.w_actm = bits()?,
            "activation_sram_bank_depth" => e.act_bank_depth = n,
            "activation_fifo_width" => e.fifo_width = bits()?,
            "activation_fifo_depth" => e.fifo_depth = n,
            _ => unreachable!("key list and match arms agree"),
        }
    }
    Ok(cfg)
}

/// Canonical text for `cfg`; parsing it yields `cfg` again.
pub fn render_config(cfg: &RunConfig) -> String {
    let e = &cfg.engine;
    let values: [String; 19] = [
        e.n_mul.to_string(),
        "16".into(),
        e.n_acc.to_string(),
        permdnn_core::quant::ACCUMULATOR_BITS.to_string(),
        e.weight_sub_banks.to_string(),
        e.weight_bank_width.to_string(),
        e.weight_bank_depth.to_string(),
        e.perm_sram_width.to_string(),
        e.perm_sram_depth.to_string(),
        e.n_pe.to_string(),
        "16".into(),
        cfg.tag_bits.to_string(),
        e.pipeline_stages.to_string(),
        e.n_actmb.to_string(),
        e.w_actm.to_string(),
        e.act_bank_depth.to_string(),
        e.fifo_width.to_string(),
        e.fifo_depth.to_string(),
        format!("{:?}", e.clock_hz),
    ];
    KEYS.iter()
        .zip(values)
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

/// Short stable fingerprint of a configuration.
pub fn config_digest(cfg: &RunConfig) -> String {
    format!("{:08x}", crc32fast::hash(render_config(cfg).as_bytes()))
}
