//! Water renderer: projected grid, shading, image-based reflections and
//! compositing over the source photograph.

pub mod camera;
pub mod frame;
pub mod params;
pub mod shade;
pub mod sphere;
pub mod trace;
pub mod walls;

pub use camera::{project_grid, CameraError, CameraModel, ProjectedGrid};
pub use frame::{insert_sphere, render_frame, Fragment, GBuffer, RenderConfig, RenderError, Renderer};
pub use params::{ParamError, ParamSpec, WaterParams, DIM, PARAM_SPECS};
pub use shade::{schlick, sh_irradiance, shade_fragment};
pub use sphere::{ray_sphere, Sphere};
pub use trace::{trace_reflection, CollisionAtlas, TraceKind, TraceResult, TraceScene};
pub use walls::{build_walls, WallPoint, WallProxyMap};
