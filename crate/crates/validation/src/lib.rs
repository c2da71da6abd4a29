//! Acceptance checks for the simulator; see `tests/acceptance.rs`.
