//! Discrete-event simulator for underwater optical links that carry both
//! power and data to self-powered sensor nodes.
//!
//! The building blocks are usable on their own: [`channel`] for link
//! budgets, [`harvester`] for the solar-cell receiver, [`energy_store`] for
//! batteries and supercapacitors, [`node`] for the wake/sense/command
//! protocol and [`policy`] for the resource-sharing schemes. [`engine`]
//! ties them together over a [`scenario`].

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x >= 0.0)` also rejects NaN

pub mod channel;
pub mod cli;
pub mod energy_store;
pub mod engine;
pub mod harvester;
pub mod node;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod trace;
pub mod units;
