//! Aspect-opinion pair extraction over character-level text.
//!
//! The model casts pair extraction as grid tagging: every character pair
//! (i, j) of a sentence gets one of four labels — `N` (none), `A` (inside an
//! aspect term), `O` (inside an opinion term), `P` (the two characters link a
//! paired aspect and opinion). A syntax-aware graph convolution fuses
//! dependency and POS evidence into the character encodings, unit and image
//! convolutions build grid features, and an iterative inference loop refines
//! the per-cell label distributions before spans and pairs are decoded.
//!
//! Everything is self-contained: [`numkit`] provides the tensors, the
//! reverse-mode gradient tape, and the optimizer; no external numeric or
//! pre-trained-model dependency is involved anywhere.

pub mod corpus;
pub mod decode;
pub mod eval;
pub mod io;
pub mod model;
pub mod numkit;
pub mod train;
