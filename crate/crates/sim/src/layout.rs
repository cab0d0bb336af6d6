//! Weight and permutation SRAM images.
//!
//! Each PE stores, for every input column, the nonzeros of its owned block
//! rows as one contiguous segment (the transpose-like layout), packed into
//! weight words filled sequentially through the sub-banks. The permutation
//! SRAM holds `(p - k) mod p` per owned block, so the accumulation selector
//! only needs an add and a modulo.

use permdnn_core::{BpdMatrix, Codebook, FixedPointSpec};
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Result, SimError};
use crate::schedule::{select_schedule, Schedule};

/// Weight source handed to the planner.
#[derive(Debug, Clone, Copy)]
pub enum WeightPayload<'a> {
    /// The matrix values rounded to IEEE single precision.
    Real32,
    /// The matrix values quantized with `spec`.
    Fixed(FixedPointSpec),
    /// Tags from `codebook`, decoded through its centroids quantized with
    /// `spec`. Tags are aligned with the matrix's packed slots.
    Tagged(&'a Codebook, FixedPointSpec),
}

/// How stored entries are interpreted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightEncoding {
    Real32,
    Fixed(FixedPointSpec),
    Tagged {
        spec: FixedPointSpec,
        tag_bits: u32,
        lut: Vec<i32>,
    },
}

impl WeightEncoding {
    pub fn entry_bits(&self) -> u32 {
        match self {
            WeightEncoding::Real32 => 32,
            WeightEncoding::Fixed(s) => s.total_bits,
            WeightEncoding::Tagged { tag_bits, .. } => *tag_bits,
        }
    }

    pub fn spec(&self) -> Option<FixedPointSpec> {
        match self {
            WeightEncoding::Real32 => None,
            WeightEncoding::Fixed(s) | WeightEncoding::Tagged { spec: s, .. } => Some(*s),
        }
    }
}

/// Decoded weight entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Real(f64),
    Code(i32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SramImage {
    pub rows: usize,
    pub cols: usize,
    pub block: usize,
    pub n_pe: usize,
    pub n_mul: usize,
    pub n_acc: usize,
    pub schedule: Schedule,
    pub encoding: WeightEncoding,
    pub words_per_column: usize,
    pub perm_bits: u32,
    pub perm_rows_per_block_col: usize,
    /// `[pe][sub_bank][row]`; only rows that were written are present.
    pub weight_sram: Vec<Vec<Vec<u64>>>,
    /// `[pe][row]`.
    pub perm_sram: Vec<Vec<u64>>,
    bank_width: u32,
    bank_depth: usize,
    perm_width: u32,
}

fn bits_for(p: usize) -> u32 {
    (usize::BITS - (p - 1).leading_zeros()).max(1)
}

/// Weight words a PE needs for a layer under `schedule`.
pub fn weight_words_per_pe(cols: usize, block: usize, blocks_per_pe: usize, entry_bits: u32, cfg: &EngineConfig) -> usize {
    let per_word = (cfg.weight_bank_width / entry_bits) as usize;
    cols.div_ceil(block) * block * blocks_per_pe.div_ceil(per_word)
}

/// Checks that a `rows x cols` layer with block `p` fits the engine's
/// SRAMs without building an image.
pub fn check_capacity(cfg: &EngineConfig, rows: usize, cols: usize, p: usize, entry_bits: u32) -> Result<Schedule> {
    let schedule = select_schedule(cfg, rows, cols, p)?;
    check_schedule_capacity(cfg, &schedule, rows, cols, p, entry_bits)?;
    Ok(schedule)
}

fn check_schedule_capacity(
    cfg: &EngineConfig,
    schedule: &Schedule,
    rows: usize,
    cols: usize,
    p: usize,
    entry_bits: u32,
) -> Result<()> {
    if entry_bits == 0 || entry_bits > cfg.weight_bank_width {
        return Err(SimError::Config(format!(
            "{entry_bits}-bit weights do not fit {}-bit SRAM words",
            cfg.weight_bank_width
        )));
    }
    let act_cap = cfg.activation_capacity();
    let act_need = rows.div_ceil(p).max(cols.div_ceil(p)) * p;
    if act_need > act_cap {
        return Err(SimError::ActivationCapacity {
            needed: act_need,
            capacity: act_cap,
        });
    }
    let need = weight_words_per_pe(cols, p, schedule.blocks_per_pe, entry_bits, cfg);
    let cap = cfg.weight_words_per_pe();
    if need > cap {
        return Err(SimError::WeightCapacity {
            pe: 0,
            sub_bank: cfg.weight_sub_banks - 1,
            needed_words: need,
            capacity_words: cap,
        });
    }
    let perm_bits = bits_for(p);
    let per_row = (cfg.perm_sram_width / perm_bits) as usize;
    if per_row == 0 {
        return Err(SimError::Config(format!(
            "{}-bit permutation rows cannot hold a {perm_bits}-bit value",
            cfg.perm_sram_width
        )));
    }
    let perm_rows = cols.div_ceil(p) * schedule.blocks_per_pe.div_ceil(per_row);
    if perm_rows > cfg.perm_sram_depth {
        return Err(SimError::PermCapacity {
            pe: 0,
            needed_rows: perm_rows,
            capacity_rows: cfg.perm_sram_depth,
        });
    }
    Ok(())
}

fn pack(words: &mut [u64], entry: usize, bits: u32, per_word: usize, raw: u64) {
    let shift = (entry % per_word) as u32 * bits;
    words[entry / per_word] |= (raw & ((1u64 << bits) - 1)) << shift;
}

fn unpack(word: u64, entry: usize, bits: u32, per_word: usize) -> u64 {
    (word >> ((entry % per_word) as u32 * bits)) & ((1u64 << bits) - 1)
}

/// Distributes `w` over the PE array described by `cfg`.
pub fn plan_layout(w: &BpdMatrix<f64>, payload: WeightPayload<'_>, cfg: &EngineConfig) -> Result<SramImage> {
    let (rows, cols, p) = (w.rows(), w.cols(), w.block());
    let encoding = match payload {
        WeightPayload::Real32 => WeightEncoding::Real32,
        WeightPayload::Fixed(spec) => WeightEncoding::Fixed(spec),
        WeightPayload::Tagged(book, spec) => {
            if book.tags.len() != w.slot_count() {
                return Err(SimError::Inconsistent(format!(
                    "codebook has {} tags for {} slots",
                    book.tags.len(),
                    w.slot_count()
                )));
            }
            WeightEncoding::Tagged {
                spec,
                tag_bits: book.tag_bits,
                lut: book.lut_codes(&spec),
            }
        }
    };
    let entry_bits = encoding.entry_bits();
    let schedule = select_schedule(cfg, rows, cols, p)?;
    check_schedule_capacity(cfg, &schedule, rows, cols, p, entry_bits)?;

    let raw_entry = |slot: Option<usize>| -> u64 {
        match (&payload, slot) {
            (WeightPayload::Real32, Some(s)) => (w.values()[s] as f32).to_bits() as u64,
            (WeightPayload::Fixed(spec), Some(s)) => spec.quantize(w.values()[s]) as u64,
            (WeightPayload::Tagged(book, _), Some(s)) => book.tags[s] as u64,
            (_, None) => 0,
        }
    };

    let per_word = (cfg.weight_bank_width / entry_bits) as usize;
    let wpc = schedule.blocks_per_pe.div_ceil(per_word);
    let perm_bits = bits_for(p);
    let perm_per_row = (cfg.perm_sram_width / perm_bits) as usize;
    let perm_rpg = schedule.blocks_per_pe.div_ceil(perm_per_row);
    let (nbr, nbc) = (w.block_rows(), w.block_cols());
    let q = schedule.pes_per_group;

    // PEs with the same index inside their group hold identical contents.
    let mut per_local = Vec::with_capacity(q);
    for u in 0..q {
        let mut flat = vec![0u64; nbc * p * wpc];
        let mut perm = vec![0u64; nbc * perm_rpg];
        for g in 0..nbc {
            for b in 0..schedule.blocks_per_pe {
                let br = u + b * q;
                let k = if br < nbr { w.perms()[br * nbc + g] } else { 0 };
                pack(
                    &mut perm[g * perm_rpg..],
                    b,
                    perm_bits,
                    perm_per_row,
                    ((p - k) % p) as u64,
                );
                for d in 0..p {
                    let j = g * p + d;
                    let slot = (br < nbr).then(|| (br * nbc + g) * p + (d + p - k) % p);
                    pack(
                        &mut flat[j * wpc..(j + 1) * wpc],
                        b,
                        entry_bits,
                        per_word,
                        raw_entry(slot),
                    );
                }
            }
        }
        let banks: Vec<Vec<u64>> = flat
            .chunks(cfg.weight_bank_depth)
            .map(|c| c.to_vec())
            .collect();
        per_local.push((banks, perm));
    }
    let (weight_sram, perm_sram) = (0..cfg.n_pe)
        .map(|t| per_local[t % q].clone())
        .unzip();

    Ok(SramImage {
        rows,
        cols,
        block: p,
        n_pe: cfg.n_pe,
        n_mul: cfg.n_mul,
        n_acc: cfg.n_acc,
        schedule,
        encoding,
        words_per_column: wpc,
        perm_bits,
        perm_rows_per_block_col: perm_rpg,
        weight_sram,
        perm_sram,
        bank_width: cfg.weight_bank_width,
        bank_depth: cfg.weight_bank_depth,
        perm_width: cfg.perm_sram_width,
    })
}

impl SramImage {
    pub fn block_rows(&self) -> usize {
        self.rows.div_ceil(self.block)
    }

    pub fn cols_pad(&self) -> usize {
        self.cols.div_ceil(self.block) * self.block
    }

    /// Local index of `pe` within its group.
    pub fn local_index(&self, pe: usize) -> usize {
        pe % self.schedule.pes_per_group
    }

    pub fn group_of(&self, pe: usize) -> usize {
        pe / self.schedule.pes_per_group
    }

    /// Global block row held as local block `b` by `pe`.
    pub fn block_row(&self, pe: usize, b: usize) -> usize {
        self.local_index(pe) + b * self.schedule.pes_per_group
    }

    /// Stored `(p - k) mod p` for local block `b` of `pe` in block column `g`.
    pub fn perm_entry(&self, pe: usize, g: usize, b: usize) -> usize {
        let per_row = (self.perm_width / self.perm_bits) as usize;
        let row = g * self.perm_rows_per_block_col + b / per_row;
        unpack(self.perm_sram[pe][row], b, self.perm_bits, per_row) as usize
    }

    /// Weight stored for local block `b` of `pe` in input column `j`.
    pub fn weight_entry(&self, pe: usize, j: usize, b: usize) -> Weight {
        let bits = self.encoding.entry_bits();
        let per_word = (self.bank_width / bits) as usize;
        let addr = j * self.words_per_column + b / per_word;
        let word = self.weight_sram[pe][addr / self.bank_depth][addr % self.bank_depth];
        let raw = unpack(word, b, bits, per_word);
        match &self.encoding {
            WeightEncoding::Real32 => Weight::Real(f32::from_bits(raw as u32) as f64),
            WeightEncoding::Fixed(_) => {
                let shift = 64 - bits;
                Weight::Code((((raw << shift) as i64) >> shift) as i32)
            }
            WeightEncoding::Tagged { lut, .. } => Weight::Code(lut[raw as usize]),
        }
    }

    /// Sub-banks holding data in `pe`.
    pub fn sub_banks_used(&self, pe: usize) -> usize {
        self.weight_sram[pe].len()
    }

    /// Weight words written per PE.
    pub fn words_used(&self) -> usize {
        self.cols_pad() * self.words_per_column
    }
}

/// Routing logic that steers a product to its accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccumulationSelector {
    pub block: usize,
}

impl AccumulationSelector {
    /// Row within the block for stored permutation entry `perm_entry` and
    /// column offset `offset`.
    pub fn route(&self, perm_entry: usize, offset: usize) -> usize {
        (perm_entry + offset) % self.block
    }
}
