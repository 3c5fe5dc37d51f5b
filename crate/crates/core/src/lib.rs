//! Conditional text embeddings read from a causal language model's last
//! prompt token, with C-STS and clustering evaluation on top.
//!
//! A one-word conditional prompt such as
//! `Express this text "{text}" in one word in terms of {condition}: "` makes
//! the final hidden state summarise the text along the given aspect.

pub mod backend;
pub mod cli;
pub mod clustering;
pub mod harness;
pub mod metrics;
pub mod projection;
pub mod prompting;
