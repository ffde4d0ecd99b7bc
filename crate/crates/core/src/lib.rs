//! Emergency repair of scheduling logic held in an editable library of
//! atomic functions.

pub mod afdsl;
pub mod decision;
pub mod harness;
pub mod jsonl;
pub mod library;
pub mod perception;
pub mod remote;
pub mod sfl;
pub mod simworld;
