//! Bootstrapping loop (placeholder while lower modules build).
