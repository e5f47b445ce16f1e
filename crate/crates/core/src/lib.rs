//! Stabilization toolkit for hand-held optical media.
//!
//! Disk images are classified by carrier variant ([`classify`]), processed
//! through a per-variant plan ([`pipeline`]), fixed with SHA-256 manifests
//! ([`fixity`]) and recorded in an append-only provenance ledger
//! ([`ledger`]). [`forge`] generates synthetic carriers with known ground
//! truth for testing every stage.

pub mod classify;
pub mod detect;
pub mod fixity;
pub mod forge;
pub mod iso;
pub mod ledger;
pub mod pipeline;
pub mod sector;
pub mod text;
