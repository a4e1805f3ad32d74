//! Narrative cloze evaluation (placeholder while lower modules build).
