//! Losses, optimizer, training loop.
