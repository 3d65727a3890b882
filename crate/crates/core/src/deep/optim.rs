use serde::{Deserialize, Serialize};

use crate::error::{FcpError, Result};

/// Full-batch gradient descent with momentum. A step that would raise the
/// loss is rejected: the rate is halved and the velocity cleared. Accepted
/// steps grow the rate by `growth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub growth: f64,
    pub max_halvings: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            learning_rate: 1.0,
            momentum: 0.9,
            growth: 1.05,
            max_halvings: 40,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.momentum)
            && self.growth >= 1.0
            && self.growth.is_finite();
        if !ok {
            return Err(FcpError::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DescentTrace {
    /// Loss at the start and after every accepted epoch.
    pub losses: Vec<f64>,
    pub rejected_steps: usize,
    /// Set when the rate collapsed before the epoch budget ran out.
    pub stalled_at: Option<usize>,
}

/// Minimizes `f` (returning loss and gradient) from `theta` for `epochs`
/// accepted steps.
pub fn descend<F>(theta: &mut Vec<f64>, epochs: usize, cfg: &GdConfig, mut f: F) -> Result<DescentTrace>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    cfg.validate()?;
    let mut trace = DescentTrace::default();
    if epochs == 0 {
        return Ok(trace);
    }
    let (mut loss, mut grad) = f(theta);
    if !loss.is_finite() {
        return Err(FcpError::NonFiniteLoss { epoch: 0 });
    }
    trace.losses.push(loss);
    let mut velocity = vec![0.0; theta.len()];
    let mut rate = cfg.learning_rate;
    let mut cand = vec![0.0; theta.len()];
    for epoch in 1..=epochs {
        let mut halvings = 0;
        loop {
            for i in 0..theta.len() {
                cand[i] = theta[i] + cfg.momentum * velocity[i] - rate * grad[i];
            }
            let (cl, cg) = f(&cand);
            if cl.is_finite() && cl <= loss {
                for i in 0..theta.len() {
                    velocity[i] = cand[i] - theta[i];
                }
                std::mem::swap(theta, &mut cand);
                loss = cl;
                grad = cg;
                rate *= cfg.growth;
                trace.losses.push(loss);
                break;
            }
            trace.rejected_steps += 1;
            halvings += 1;
            rate *= 0.5;
            velocity.iter_mut().for_each(|v| *v = 0.0);
            if halvings > cfg.max_halvings {
                if !cl.is_finite() {
                    return Err(FcpError::NonFiniteLoss { epoch });
                }
                log::debug!("descent stalled at epoch {epoch}, loss {loss:e}");
                trace.stalled_at = Some(epoch);
                return Ok(trace);
            }
        }
    }
    Ok(trace)
}
