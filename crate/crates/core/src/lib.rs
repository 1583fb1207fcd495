pub mod gcl;
pub mod scl;
pub mod pa;
pub mod pipeline;
pub mod analysis;
pub mod encode;
pub mod semantics;
pub mod testkit;
