use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("geometry: blank row {row} {reason}")]
    InvalidBlankRow { row: usize, reason: &'static str },

    #[error("geometry: {active_rows} active rows cannot be split into banks of {bank_height}")]
    BankPartition { active_rows: usize, bank_height: usize },

    #[error("geometry: element index {0} out of range")]
    ElementOutOfRange(usize),

    #[error("invalid parameter `{name}` = {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("aperture: mask is empty")]
    EmptyMask,

    #[error("aperture: {0}")]
    InvalidAperture(String),

    #[error("aperture cannot form zero-mean window ({n_inner} inner, {n_outer} outer)")]
    OneSidedAperture { n_inner: usize, n_outer: usize },

    #[error("aperture: inner/outer imbalance {imbalance:.3} exceeds {limit} ({n_inner} inner, {n_outer} outer)")]
    UnbalancedAperture {
        n_inner: usize,
        n_outer: usize,
        imbalance: f64,
        limit: f64,
    },

    #[error("sequence: channel {channel} is claimed by {count} elements in a single event")]
    ChannelConflict { channel: usize, count: usize },

    #[error("sim: scatterer {index} lies at z = {z} m, on or behind the array")]
    ScattererBehindArray { index: usize, z: f64 },

    #[error("beamform: voxel grid reaches z = {z} m, on or behind the array")]
    VoxelBehindArray { z: f64 },

    #[error("beamform: no weight for receive element {0}")]
    MissingWeight(usize),

    #[error("beamform: envelope volumes are on different grids")]
    GridMismatch,

    #[error("{0}: input has no positive value")]
    ZeroInput(&'static str),

    #[error("metrics: unresolved lobe, no {level_db} dB crossing on the {side} side")]
    UnresolvedLobe { side: &'static str, level_db: f64 },

    #[error("metrics: main-lobe integral is zero")]
    DegenerateProfile,

    #[error("metrics: region `{name}` has {count} voxels, need at least {min}")]
    RegionTooSmall {
        name: &'static str,
        count: usize,
        min: usize,
    },

    #[error("metrics: inside and outside regions overlap")]
    OverlappingRegions,
}
