//! Oracles (under construction).
