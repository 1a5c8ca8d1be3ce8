//! Training-free, prompt-guided object segmentation driven by generative
//! contrast.
//!
//! A mask is refined by alternating two steps. The inpainting step erases
//! the current foreground from a frame and keeps the pixels whose content
//! changes most; the outpainting step repaints the surroundings and adds
//! back the pixels that move least relative to the object. Painting and
//! feature projection are pluggable through [`Painter`] and [`Projector`].

pub mod amcp;
pub mod clustering;
pub mod color_model;
pub mod error;
pub mod eval;
pub mod io;
pub mod metrics;
pub mod morphology;
pub mod painter;
pub mod par;
pub mod potential;
pub mod projector;
pub mod protocol;
pub mod raster;
pub mod scene;

mod http;

pub use error::{Error, Result};
pub use painter::{
    MeanFillPainter, OraclePainter, PaintMode, PaintRequest, PaintResult, Painter, RemotePainter,
};
pub use projector::{
    FeatureMap, IdentityProjector, PatchStatsProjector, Projector, RemoteProjector,
};
pub use raster::{bbox_of, BitMask, ImageBuf, Rect, SoftMask};
