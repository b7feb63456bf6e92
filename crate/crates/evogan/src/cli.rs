//! Command-line entry points (under construction).
