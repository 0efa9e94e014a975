use crate::error::{Error, Result};

/// Constant `base_lr` for the first half of training, then linear decay that
/// would reach zero at `epoch == epochs`.
pub fn lr_schedule(epoch: usize, epochs: usize, base_lr: f64) -> Result<f64> {
    if epoch >= epochs {
        return Err(Error::Argument(format!("epoch {epoch} outside 0..{epochs}")));
    }
    let half = epochs as f64 / 2.0;
    let e = epoch as f64;
    if e <= half {
        Ok(base_lr)
    } else {
        Ok(base_lr * (1.0 - (e - half) / half))
    }
}
