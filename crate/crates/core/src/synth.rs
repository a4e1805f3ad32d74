//! Synthetic corpus generation (placeholder while lower modules build).
