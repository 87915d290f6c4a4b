//! Binary timed session types with timeouts and safe mixed-choice: the
//! constraint algebra, type well-formedness, asynchronous timed semantics,
//! a timed process calculus, and a type checker with a subject-reduction
//! harness.

pub mod calculus;
pub mod semantics;
pub mod surface;
pub mod timelogic;
pub mod typecheck;
pub mod typesys;
pub mod wellformed;
