//! Quality-control kernel for crowdsourced free-text responses.

pub mod evalharness;
pub mod io;
pub mod postqc;
pub mod prequal;
pub mod realtime;
pub mod search;
pub mod text;
