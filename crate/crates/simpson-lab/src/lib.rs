//! Desk-scale laboratory for the local p-adic Simpson correspondence over
//! small semi-stable chart rings.
//!
//! The crate links three layers:
//!
//! - exact arithmetic in finite cyclotomic chain rings with per-element
//!   precision floors (`ring`), and matrices/normal forms over them
//!   (`matrix`, `howell`);
//! - the semi-stable chart ring with its log differentials and Galois
//!   action (`chart`), the divided-power period algebra (`pd`), and the
//!   Faltings extension with its derived splitting data (`extension`);
//! - the correspondence itself: twisted Higgs modules, Galois
//!   representations, the functors between them (`higgs`), and the group /
//!   Higgs cohomology comparison with the decalage functor (`cohomology`).
//!
//! Randomized verification suites and the JSON instance format live in
//! `instance` and `suites`; the `simpson-lab` binary exposes them on the
//! command line.

pub mod chart;
pub mod cohomology;
pub mod error;
pub mod extension;
pub mod higgs;
pub mod howell;
pub mod instance;
pub mod matrix;
pub mod pd;
pub mod ring;
pub mod suites;

pub use error::{Error, Result};
