//! Neural radiance field: encoding, network, rendering and sampling.

pub mod checkpoint;
pub mod encoding;
pub mod geometry;
pub mod mlp;
pub mod render;
pub mod sampling;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use encoding::{positional_encode, EncodingConfig};
pub use geometry::{generate_ray, Camera, Pose, Ray, Vec3};
pub use mlp::{field_backward, field_forward, FieldArch, RadianceFieldParams};
pub use render::{volume_render, volume_render_backward, Sample};
