use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchMode {
    BaselineSequential,
    FuseMultitasking,
}

impl ArchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ArchMode::BaselineSequential => "baseline_sequential",
            ArchMode::FuseMultitasking => "fuse_multitasking",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferSizes {
    pub input_words: u64,
    pub weight_words: u64,
    pub output_words: u64,
}

/// Accelerator geometry and rates.
///
/// In `fuse_multitasking` mode the PE array is split in half along its
/// columns; each half has its own DRAM port at `dram_bandwidth_words_per_cycle`
/// and its own inbound fuseLink buffer of `fuselink_buffer_words`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub mode: ArchMode,
    pub pe_rows: u64,
    pub pe_cols: u64,
    pub macs_per_pe_per_cycle: u64,
    pub frequency_mhz: f64,
    pub dram_bandwidth_words_per_cycle: f64,
    pub fuselink_bandwidth_words_per_cycle: f64,
    pub fuselink_buffer_words: u64,
    pub task_setup_cycles: u64,
    pub dsp_per_pe: u64,
    pub word_bytes: u64,
    pub baseline_buffers: BufferSizes,
    pub half_buffers: BufferSizes,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            mode: ArchMode::FuseMultitasking,
            pe_rows: 16,
            pe_cols: 16,
            macs_per_pe_per_cycle: 1,
            frequency_mhz: 80.0,
            // 256-bit DRAM port, 1024-bit on-chip fuseLink path
            dram_bandwidth_words_per_cycle: 8.0,
            fuselink_bandwidth_words_per_cycle: 32.0,
            fuselink_buffer_words: 1 << 20,
            task_setup_cycles: 64,
            dsp_per_pe: 5,
            word_bytes: 4,
            baseline_buffers: BufferSizes {
                input_words: 1 << 20,
                weight_words: 1 << 19,
                output_words: 1 << 20,
            },
            half_buffers: BufferSizes {
                input_words: 1 << 19,
                weight_words: 1 << 18,
                output_words: 1 << 19,
            },
        }
    }
}

impl ArchConfig {
    pub fn with_mode(&self, mode: ArchMode) -> Self {
        ArchConfig {
            mode,
            ..self.clone()
        }
    }

    pub fn total_pes(&self) -> u64 {
        self.pe_rows * self.pe_cols
    }

    /// PEs available to one task: the whole array, or one half of it.
    pub fn pes_per_array(&self) -> u64 {
        match self.mode {
            ArchMode::BaselineSequential => self.total_pes(),
            ArchMode::FuseMultitasking => self.total_pes() / 2,
        }
    }

    pub fn dsp_blocks(&self) -> u64 {
        self.total_pes() * self.dsp_per_pe
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if self.pe_rows == 0 || self.pe_cols == 0 {
            return bad("PE array dimensions must be positive".into());
        }
        if self.mode == ArchMode::FuseMultitasking && !self.pe_cols.is_multiple_of(2) {
            return bad(format!("pe_cols = {} cannot be split in half", self.pe_cols));
        }
        if self.macs_per_pe_per_cycle != 1 {
            return bad("macs_per_pe_per_cycle is fixed at 1".into());
        }
        if self.word_bytes != 4 {
            return bad("word_bytes is fixed at 4".into());
        }
        for (name, rate) in [
            ("frequency_mhz", self.frequency_mhz),
            ("dram_bandwidth_words_per_cycle", self.dram_bandwidth_words_per_cycle),
            ("fuselink_bandwidth_words_per_cycle", self.fuselink_bandwidth_words_per_cycle),
        ] {
            if !(rate.is_finite() && rate > 0.0) {
                return bad(format!("{name} must be a positive finite number, got {rate}"));
            }
        }
        Ok(())
    }
}
