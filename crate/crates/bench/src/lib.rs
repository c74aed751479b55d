pub use funcssl::*;
