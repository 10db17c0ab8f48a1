//! Matrix array layout and multiplexer structure.
//!
//! The probe is a 32-column grid with 35 physical rows, three of which carry
//! wiring and no elements. The remaining 32 active rows are split into four
//! banks of 8 rows; a 4-to-1 multiplexer connects each system channel to one
//! element per bank, always the element at the same (column, row-in-bank)
//! position.
//!
//! Two coordinate frames are kept per element. `position` is the physical
//! location (blank rows leave a one-pitch gap) and is what the acoustic code
//! uses. `design` is the location on the gap-free 32×32 active grid; aperture
//! radii are laid out in this frame, so `radial_distance` is measured there.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayConfig {
    pub pitch: f64,
    pub n_cols: usize,
    pub n_rows_physical: usize,
    /// 1-based physical row indices that carry no elements.
    pub blank_rows: Vec<usize>,
    pub bank_height: usize,
    pub center_frequency: f64,
    pub fractional_bandwidth: f64,
    pub sound_speed: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            pitch: 300e-6,
            n_cols: 32,
            n_rows_physical: 35,
            blank_rows: alloc::vec![9, 17, 25],
            bank_height: 8,
            center_frequency: 3.5e6,
            fractional_bandwidth: 0.70,
            sound_speed: crate::DEFAULT_SOUND_SPEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: usize,
    pub col: usize,
    pub active_row: usize,
    /// 0-based row on the 35-row physical grid.
    pub physical_row: usize,
    pub position: Vec3,
    /// (x, y) on the gap-free active grid, metres.
    pub design: (f64, f64),
    pub bank: usize,
    pub channel: usize,
    /// Distance from the aperture centre in the design frame.
    pub radial_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    config: ArrayConfig,
    elements: Vec<Element>,
    n_active_rows: usize,
}

/// A channel driven by more than one element of a candidate set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelConflict {
    pub channel: usize,
    pub elements: Vec<usize>,
}

impl ArrayGeometry {
    /// The default 1024-element probe.
    pub fn matrix_1024() -> Self {
        Self::build(&ArrayConfig::default()).expect("default array configuration is valid")
    }

    /// Builds the element table. Elements are ordered row-major over active
    /// rows with the column index fastest.
    pub fn build(config: &ArrayConfig) -> Result<Self> {
        if !(config.pitch > 0.0) || !config.pitch.is_finite() {
            return Err(Error::InvalidParameter {
                name: "pitch",
                value: config.pitch,
            });
        }
        if config.n_cols == 0 || config.bank_height == 0 {
            return Err(Error::BankPartition {
                active_rows: 0,
                bank_height: config.bank_height,
            });
        }
        let mut blank = alloc::vec![false; config.n_rows_physical];
        for &row in &config.blank_rows {
            if row == 0 || row > config.n_rows_physical {
                return Err(Error::InvalidBlankRow {
                    row,
                    reason: "is outside the physical row range",
                });
            }
            if blank[row - 1] {
                return Err(Error::InvalidBlankRow {
                    row,
                    reason: "is listed twice",
                });
            }
            blank[row - 1] = true;
        }
        let active_rows = config.n_rows_physical - config.blank_rows.len();
        if active_rows == 0 || !active_rows.is_multiple_of(config.bank_height) {
            return Err(Error::BankPartition {
                active_rows,
                bank_height: config.bank_height,
            });
        }

        let p = config.pitch;
        let x_mid = (config.n_cols as f64 - 1.0) / 2.0;
        let phys_mid = (config.n_rows_physical as f64 - 1.0) / 2.0;
        let design_mid = (active_rows as f64 - 1.0) / 2.0;

        let physical_rows = (0..config.n_rows_physical).filter(|&r| !blank[r]);
        let mut elements = Vec::with_capacity(active_rows * config.n_cols);
        for (active_row, physical_row) in physical_rows.enumerate() {
            for col in 0..config.n_cols {
                let x = (col as f64 - x_mid) * p;
                let y = (physical_row as f64 - phys_mid) * p;
                let dy = (active_row as f64 - design_mid) * p;
                elements.push(Element {
                    id: elements.len(),
                    col,
                    active_row,
                    physical_row,
                    position: Vec3::new(x, y, 0.0),
                    design: (x, dy),
                    bank: active_row / config.bank_height,
                    channel: col * config.bank_height + active_row % config.bank_height,
                    radial_distance: libm::hypot(x, dy),
                });
            }
        }
        Ok(ArrayGeometry {
            config: config.clone(),
            elements,
            n_active_rows: active_rows,
        })
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }

    pub fn pitch(&self) -> f64 {
        self.config.pitch
    }

    pub fn sound_speed(&self) -> f64 {
        self.config.sound_speed
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, id: usize) -> Result<&Element> {
        self.elements.get(id).ok_or(Error::ElementOutOfRange(id))
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn n_cols(&self) -> usize {
        self.config.n_cols
    }

    pub fn n_active_rows(&self) -> usize {
        self.n_active_rows
    }

    pub fn n_banks(&self) -> usize {
        self.n_active_rows / self.config.bank_height
    }

    pub fn n_channels(&self) -> usize {
        self.config.n_cols * self.config.bank_height
    }

    /// Element ids belonging to one bank.
    pub fn bank_elements(&self, bank: usize) -> Vec<usize> {
        self.elements
            .iter()
            .filter(|e| e.bank == bank)
            .map(|e| e.id)
            .collect()
    }

    /// Element at (col, active_row), if any.
    pub fn element_at(&self, col: usize, active_row: usize) -> Option<&Element> {
        if col >= self.config.n_cols || active_row >= self.n_active_rows {
            return None;
        }
        self.elements.get(active_row * self.config.n_cols + col)
    }

    /// Every channel claimed by two or more of `ids`, ordered by channel.
    /// An empty result means the set can be driven in one TX/RX event.
    pub fn channel_conflicts(&self, ids: &[usize]) -> Result<Vec<ChannelConflict>> {
        let mut by_channel: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &id in ids {
            let e = self.element(id)?;
            by_channel.entry(e.channel).or_default().push(id);
        }
        Ok(by_channel
            .into_iter()
            .filter(|(_, v)| v.len() > 1)
            .map(|(channel, mut elements)| {
                elements.sort_unstable();
                elements.dedup();
                ChannelConflict { channel, elements }
            })
            .filter(|c| c.elements.len() > 1)
            .collect())
    }
}
