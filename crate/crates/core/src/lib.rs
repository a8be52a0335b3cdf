//! Metamorphic robustness testing for text-to-image models.
//!
//! Logically equivalent prompt pairs are rendered from templates, both
//! prompts are sent to a generator, and the two resulting images are
//! compared through object detection. Any difference in detected entities
//! or in their relative placement is a misalignment: no reference image
//! is needed because each image is the oracle for the other.

pub mod backends;
pub mod classifier;
pub mod comparator;
pub mod config;
pub mod inflect;
pub mod logic;
pub mod pipeline;
pub mod report;
pub mod suite;
pub mod templates;
