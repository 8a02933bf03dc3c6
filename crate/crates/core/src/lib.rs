pub mod clock;
pub mod eval;
pub mod exploration;
pub mod geo;
pub mod preview;
pub mod prompt;
pub mod providers;
pub mod text;
