//! Batch-mode ridesharing dispatch guided by the shareability graph of
//! pending requests.
//!
//! The pipeline per batch: maintain the shareability graph of live requests
//! ([`shareability`]), let requests propose to candidate vehicles worst-first
//! and let each vehicle accept the group of proposers with the smallest
//! shareability loss ([`dispatch`]). Groups are enumerated level by level
//! with clique and subset pruning ([`grouping`]), and every group keeps one
//! schedule built by linear insertion ([`insertion`]).

pub mod dispatch;
pub mod grouping;
pub mod insertion;
pub mod model;
pub mod roadnet;
pub mod shareability;
pub mod spatial;
