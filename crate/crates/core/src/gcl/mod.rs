pub mod ast;
pub mod compose;
pub mod emit;
pub mod parser;

pub use ast::*;
pub use compose::{compose_commands, compose_modules, flatten, lift_module, FlatBranch, FlatCommand, FlatModule};
pub use emit::{emit_command, emit_expr, emit_model, fmt_prob};
pub use parser::{parse_expr, parse_model, validate, GclError, Pos};
