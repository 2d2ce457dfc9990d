//! Library side of the `radcool` command-line tool: scenario files, table
//! I/O, run records and the command implementations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod csvio;
pub mod record;
