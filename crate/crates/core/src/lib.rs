pub mod datasets;
pub mod encoding;
pub mod knowledge;
pub mod evaluation;
pub mod model;
pub mod training;
pub mod experiments;
