//! Plot rendering (under construction).
