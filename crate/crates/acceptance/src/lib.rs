//! Test-only package. The checks live in `tests/acceptance.rs`; run them with
//! `cargo test -p treecut-acceptance --release`.
