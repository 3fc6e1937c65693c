//! Test-only package; see `tests/acceptance.rs`.
