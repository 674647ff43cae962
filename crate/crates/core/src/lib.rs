//! Single-photo water animation: segmentation, reflection textures, spectral
//! waves, image-based reflections and cuckoo-search parameter estimation.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar for the common cases.

pub mod cuckoo;
pub mod fft;
pub mod geom;
pub mod metrics;
pub mod ocean;
pub mod pipeline;
pub mod raster;
pub mod real;
pub mod reflect;
pub mod render;
pub mod scene;
pub mod seg;

pub use real::Real;

pub type Image = raster::ImageBuffer<f64>;
pub type Mask = raster::WaterMask<f64>;
pub type Params = render::WaterParams<f64>;
pub type Texture = reflect::ReflectionTexture<f64>;
pub type Field = ocean::DisplacementField<f64>;
pub type Spectrum = ocean::SpectrumGrid<f64>;
pub type Camera = render::CameraModel<f64>;
pub type Atlas = render::CollisionAtlas<f64>;
pub type Population = cuckoo::NestPopulation<f64>;
pub type Trace = cuckoo::EnergyTrace<f64>;

pub type ImageF32 = raster::ImageBuffer<f32>;
pub type MaskF32 = raster::WaterMask<f32>;
pub type ParamsF32 = render::WaterParams<f32>;
pub type TextureF32 = reflect::ReflectionTexture<f32>;
pub type FieldF32 = ocean::DisplacementField<f32>;
