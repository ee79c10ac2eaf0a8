//! Quantification of time-dependent protein accumulation at laser-induced
//! DNA lesions in fluorescence time-lapse stacks.
//!
//! The pipeline stages are:
//!
//! 1. **stack_io** – multi-page TIFF / raw stack loading, frame-role
//!    tagging, CSV and PNG output.
//! 2. **imageops** – shared primitives: median and Gaussian filtering, Otsu
//!    thresholding, projections, bilinear sampling, masking.
//! 3. **segmentation** – nucleus-of-interest masking via a polar-image
//!    contour around the candidate centroid.
//! 4. **registration** – rigid alignment of every frame onto the
//!    pre-irradiation reference so the irradiated stripe stays put.
//! 5. **roi** – stripe detection on the avg-t projection: column profile,
//!    three-score peak ranking, fixed-size box placement.
//! 6. **measurement** – background-corrected I_ROI / I_NOI curves,
//!    normalized to the pre-irradiation frame, and cross-stack aggregation.
//! 7. **phantom** – synthetic stacks with exact ground truth for
//!    verification.
//!
//! [`pipeline::analyze_stack`] ties stages 2-6 together for one stack.

pub mod error;
pub mod frame;
pub mod imageops;
pub mod measurement;
pub mod phantom;
pub mod pipeline;
pub mod registration;
pub mod roi;
pub mod segmentation;
pub mod stack_io;

pub use error::{Error, Result};
pub use frame::{BinaryMask, Frame, FrameRole, ImageStack, IntensityProfile};
pub use pipeline::{analyze_stack, PipelineParams, StackAnalysis};
pub use registration::RigidTransform;
pub use roi::Roi;
