//! Synthetic GPR B-scans of reinforced-concrete elements.

pub mod io;
pub mod physics;
pub mod render;
pub mod scene;

pub use io::{read_manifest, read_pgm, write_manifest, write_pgm, ImageManifest};
pub use physics::{ricker, travel_time};
pub use render::{apexes, render_bscan, render_clean, Apex, BScan};
pub use scene::{default_time_step, preset_scene, ElementKind, Rebar, SceneSpec, DEFAULT_NOISE};
