//! Experiment configuration: presets, TOML files and command-line overrides.
//!
//! All lengths are in metres, times in seconds and frequencies in hertz.

use std::path::{Path, PathBuf};

use nsi3d_core::aperture::ApertureKind;
use nsi3d_core::beamform::{Compounding, VoxelGrid};
use nsi3d_core::sequence::{DEFAULT_STANDOFF, DEFAULT_TILT_DEG};
use nsi3d_core::signal::Pulse;
use nsi3d_core::Vec3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ApertureChoice {
    Circular,
    Spiral,
    SpiralNoReuse,
    Rectangular,
    /// Circular, spiral and spiral no-reuse.
    All,
}

impl ApertureChoice {
    pub fn kinds(self) -> Vec<ApertureKind> {
        match self {
            ApertureChoice::Circular => vec![ApertureKind::Circular],
            ApertureChoice::Spiral => vec![ApertureKind::Spiral],
            ApertureChoice::SpiralNoReuse => vec![ApertureKind::SpiralNoReuse],
            ApertureChoice::Rectangular => vec![ApertureKind::Rectangular],
            ApertureChoice::All => vec![ApertureKind::Circular, ApertureKind::Spiral, ApertureKind::SpiralNoReuse],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CompoundChoice {
    Coherent,
    Incoherent,
}

impl From<CompoundChoice> for Compounding {
    fn from(c: CompoundChoice) -> Self {
        match c {
            CompoundChoice::Coherent => Compounding::Coherent,
            CompoundChoice::Incoherent => Compounding::Incoherent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub standoff: f64,
    pub tilt_deg: f64,
    /// Imaging depth used for volume-rate accounting.
    pub depth: f64,
    pub sound_speed: f64,
    pub bytes_per_sample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub center_frequency: f64,
    pub fractional_bandwidth: f64,
    pub sampling_rate: f64,
    /// Band-limited upsampling of the channel data before beamforming.
    pub upsample: usize,
}

/// Voxel grid sampled over `[lo, hi)` on each axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
    pub dims: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub point_depths: Vec<f64>,
    pub cyst_center: [f64; 3],
    pub cyst_diameter: f64,
    pub box_center: [f64; 3],
    pub box_size: [f64; 3],
    pub scatterers_per_cell: f64,
    pub inside_amp_ratio: f64,
    /// Standard deviation of additive channel noise (0 disables).
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeampatternConfig {
    pub depth: f64,
    pub sweep_deg: f64,
    /// Samples per axis of the lateral render.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub aperture: ApertureChoice,
    pub dc: f64,
    pub seed: u64,
    pub compounding: CompoundChoice,
    pub dynamic_range_db: f64,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub sequence: SequenceConfig,
    pub pulse: PulseConfig,
    pub grid: GridConfig,
    pub phantom: PhantomConfig,
    pub beampattern: BeampatternConfig,
}

const MM: f64 = 1e-3;

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let pulse = Pulse::simulation_default();
        let sequence = SequenceConfig {
            standoff: DEFAULT_STANDOFF,
            tilt_deg: DEFAULT_TILT_DEG,
            depth: 70.0 * MM,
            sound_speed: nsi3d_core::DEFAULT_SOUND_SPEED,
            bytes_per_sample: 2,
        };
        let pulse = PulseConfig {
            center_frequency: pulse.center_frequency,
            fractional_bandwidth: pulse.fractional_bandwidth,
            sampling_rate: pulse.sampling_rate,
            upsample: 4,
        };
        let beampattern = BeampatternConfig {
            depth: 40.0 * MM,
            sweep_deg: 20.0,
            samples: 121,
        };
        let (grid, phantom) = match preset {
            Preset::Desk => (
                GridConfig {
                    x: [-12.0 * MM, 12.0 * MM],
                    y: [-12.0 * MM, 12.0 * MM],
                    z: [25.0 * MM, 55.0 * MM],
                    dims: [64, 64, 96],
                },
                PhantomConfig {
                    point_depths: vec![40.0 * MM],
                    cyst_center: [0.0, 0.0, 40.0 * MM],
                    cyst_diameter: 10.0 * MM,
                    box_center: [0.0, 0.0, 40.0 * MM],
                    box_size: [24.0 * MM, 24.0 * MM, 20.0 * MM],
                    scatterers_per_cell: 20.0,
                    inside_amp_ratio: 0.2,
                    noise_std: 0.0,
                },
            ),
            Preset::Full => (
                // λ/2 voxels at 3 MHz
                GridConfig {
                    x: [-20.0 * MM, 20.0 * MM],
                    y: [-20.0 * MM, 20.0 * MM],
                    z: [15.0 * MM, 65.0 * MM],
                    dims: [156, 156, 195],
                },
                PhantomConfig {
                    point_depths: vec![20.0 * MM, 30.0 * MM, 40.0 * MM, 50.0 * MM, 60.0 * MM],
                    cyst_center: [0.0, 0.0, 40.0 * MM],
                    cyst_diameter: 10.0 * MM,
                    box_center: [0.0, 0.0, 40.0 * MM],
                    box_size: [40.0 * MM, 40.0 * MM, 30.0 * MM],
                    scatterers_per_cell: 20.0,
                    inside_amp_ratio: 0.2,
                    noise_std: 0.0,
                },
            ),
        };
        ExperimentConfig {
            preset,
            aperture: ApertureChoice::Circular,
            dc: 1.0,
            seed: 1,
            compounding: CompoundChoice::Coherent,
            dynamic_range_db: 50.0,
            output_dir: PathBuf::from("out"),
            threads: None,
            sequence,
            pulse,
            grid,
            phantom,
            beampattern,
        }
    }

    /// Parses a TOML document layered over the preset it names (desk when
    /// absent). Unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self, AppError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| AppError::Config(e.to_string()))?;
        let preset = match table.get("preset") {
            Some(v) => Preset::deserialize(v.clone()).map_err(|e| AppError::Config(e.to_string()))?,
            None => Preset::Desk,
        };
        let base = toml::Table::try_from(Self::preset(preset)).map_err(|e| AppError::Config(e.to_string()))?;
        let merged = merge(base, table);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| AppError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let bad = |what: &str| Err(AppError::Config(what.to_string()));
        if !(self.dc > 0.0) {
            return bad("dc must be positive");
        }
        if !(self.dynamic_range_db > 0.0) {
            return bad("dynamic_range_db must be positive");
        }
        for (name, r) in [("grid.x", self.grid.x), ("grid.y", self.grid.y), ("grid.z", self.grid.z)] {
            if !(r[1] > r[0]) {
                return bad(&format!("{name} must be an increasing range"));
            }
        }
        if self.grid.z[0] <= 0.0 {
            return bad("grid.z must lie in front of the array (z > 0)");
        }
        if self.grid.dims.iter().any(|&d| d < 2) {
            return bad("grid.dims must all be at least 2");
        }
        if self.pulse.upsample == 0 || !self.pulse.upsample.is_power_of_two() {
            return bad("pulse.upsample must be a power of two");
        }
        if self.phantom.point_depths.iter().any(|&d| !(d > 0.0)) {
            return bad("phantom.point_depths must be positive");
        }
        if !(self.phantom.scatterers_per_cell > 0.0) {
            return bad("phantom.scatterers_per_cell must be positive");
        }
        if !(self.phantom.noise_std >= 0.0) {
            return bad("phantom.noise_std must be non-negative");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        if self.beampattern.samples < 3 || !(self.beampattern.depth > 0.0) {
            return bad("beampattern needs depth > 0 and at least 3 samples");
        }
        Ok(())
    }

    /// Digest of everything that affects results (not the output location
    /// or thread count).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.threads = None;
        let digest = Sha256::digest(c.to_toml_string().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn voxel_grid(&self) -> Result<VoxelGrid, AppError> {
        let g = &self.grid;
        Ok(VoxelGrid::half_open(
            (g.x[0], g.x[1]),
            (g.y[0], g.y[1]),
            (g.z[0], g.z[1]),
            g.dims,
        )?)
    }

    pub fn pulse(&self) -> Result<Pulse, AppError> {
        let p = &self.pulse;
        Ok(Pulse::new(p.center_frequency, p.fractional_bandwidth, p.sampling_rate)?)
    }

    pub fn cyst_center(&self) -> Vec3 {
        let c = self.phantom.cyst_center;
        Vec3::new(c[0], c[1], c[2])
    }
}

fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                let merged = merge(std::mem::take(b), o);
                *b = merged;
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

/// Command-line values that take precedence over the file and preset.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub aperture: Option<ApertureChoice>,
    pub dc: Option<f64>,
    pub seed: Option<u64>,
    pub compounding: Option<CompoundChoice>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub noise_std: Option<f64>,
    pub depth: Option<f64>,
}

/// Preset (or file), then overrides. A preset given on the command line
/// replaces the file's preset defaults but keeps the file's explicit keys.
pub fn resolve(file: Option<&Path>, o: &Overrides) -> Result<ExperimentConfig, AppError> {
    let mut cfg = match (file, o.preset) {
        (Some(path), None) => ExperimentConfig::load(path)?,
        (Some(path), Some(p)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
            let mut table: toml::Table =
                text.parse().map_err(|e: toml::de::Error| AppError::Config(e.to_string()))?;
            table.insert("preset".into(), toml::Value::try_from(p).expect("preset serialises"));
            ExperimentConfig::from_toml_str(&toml::to_string(&table).expect("table serialises"))?
        }
        (None, p) => ExperimentConfig::preset(p.unwrap_or(Preset::Desk)),
    };
    if let Some(v) = o.aperture {
        cfg.aperture = v;
    }
    if let Some(v) = o.dc {
        cfg.dc = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.compounding {
        cfg.compounding = v;
    }
    if let Some(v) = &o.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = o.threads {
        cfg.threads = Some(v);
    }
    if let Some(v) = o.noise_std {
        cfg.phantom.noise_std = v;
    }
    if let Some(v) = o.depth {
        cfg.sequence.depth = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for p in [Preset::Desk, Preset::Full] {
            let c = ExperimentConfig::preset(p);
            let text = c.to_toml_string();
            let back = ExperimentConfig::from_toml_str(&text).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.to_toml_string(), text);
        }
    }

    #[test]
    fn partial_file_layers_over_named_preset() {
        let c = ExperimentConfig::from_toml_str("preset = \"full\"\ndc = 2.0\n[grid]\ndims = [8, 8, 8]\n").unwrap();
        assert_eq!(c.preset, Preset::Full);
        assert_eq!(c.dc, 2.0);
        assert_eq!(c.grid.dims, [8, 8, 8]);
        assert_eq!(c.grid.x, ExperimentConfig::preset(Preset::Full).grid.x);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("colour = 3\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[grid]\nspacing = 1.0\n").is_err());
        assert!(ExperimentConfig::from_toml_str("aperture = \"hexagonal\"\n").is_err());
        assert!(ExperimentConfig::from_toml_str("dc = -1.0\n").is_err());
    }

    #[test]
    fn hash_ignores_location_and_threads() {
        let a = ExperimentConfig::preset(Preset::Desk);
        let mut b = a.clone();
        b.output_dir = PathBuf::from("/elsewhere");
        b.threads = Some(3);
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn desk_grid_samples_the_target() {
        let g = ExperimentConfig::preset(Preset::Desk).voxel_grid().unwrap();
        assert_eq!(g.dims, [64, 64, 96]);
        assert_eq!(g.position(32, 32, 48), Vec3::new(0.0, 0.0, 40e-3));
    }

    #[test]
    fn overrides_win() {
        let o = Overrides {
            aperture: Some(ApertureChoice::SpiralNoReuse),
            seed: Some(9),
            ..Default::default()
        };
        let c = resolve(None, &o).unwrap();
        assert_eq!(c.aperture, ApertureChoice::SpiralNoReuse);
        assert_eq!(c.seed, 9);
        assert!(resolve(None, &Overrides { dc: Some(0.0), ..Default::default() }).is_err());
    }
}
