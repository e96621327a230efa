//! Single-view indoor scene geometry: camera calibration from vanishing
//! points, room layout fitting, support inference, single-view metrology and
//! silhouette-driven object placement.

pub mod categories;
pub mod geom;
pub mod io;
pub mod layout;
pub mod metrology;
pub mod pipeline;
pub mod placement;
pub mod priors;
pub mod retrieval;
pub mod support;
pub mod synth;
pub mod vanishing;

pub use geom::{CameraModel, GeomError, HPoint2, ImageDims, LineSeg2, Mask, Pixel, Point3, TriMesh};
pub use layout::{EdgeMap, LayoutProposal, RoomLayout};
pub use placement::{ModelEntry, PlacedObject, SupportSurfaceFrame};
pub use priors::{PriorTables, SupportType};
pub use retrieval::ViewDescriptorSet;
pub use support::{SupportEdge, SupportGraph, SupportParent};
pub use vanishing::{CalibrationError, CalibrationResult, VpCluster};
