//! Library side of the benchmark harness: grid definitions, the runner,
//! result rows and emitters. The `parablock` binary is a thin wrapper.

pub mod bench;
