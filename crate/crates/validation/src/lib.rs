//! Holds the `acceptance` test target, which checks the numbered acceptance
//! criteria end to end and prints one PASS/FAIL line for each.
//!
//! Run with `cargo test -p cthermo-validation --test acceptance`.
