//! Training loop (under construction).
