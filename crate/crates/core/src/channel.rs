//! Channel universality: any output channel whose log-likelihood is smooth
//! at y = 0 behaves like an AWGN channel whose variance is the inverse
//! Fisher information at y = 0,
//! Delta^-1 = int dw P_out(w|0) (d/dy log P_out(w|y)|_0)^2.
//!
//! Built-ins cover the worked examples: plain AWGN, the graph-edge
//! (community detection) channel, and a Gaussian dropout channel.

use thiserror::Error;

use crate::quadrature::gauss_hermite;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ChannelError {
    #[error("parameter {name} = {value} outside its valid range")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("log-likelihood not differentiable at y = 0")]
    NotDifferentiable,
}

/// Output channels P_out(w | y) observing the rescaled rank-one entries y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputChannel {
    /// w = y + sqrt(Delta) z
    Awgn { delta: f64 },
    /// Bernoulli edge observation: P(w=1|y) = p + mu y, two-point output.
    GraphEdge { p: f64, mu: f64 },
    /// With probability p the signal passes (w = y + noise), otherwise pure
    /// noise: P_out(w|y) = p N(w; y, Delta) + (1-p) N(w; 0, Delta).
    GaussianDropout { p: f64, delta: f64 },
}

impl OutputChannel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        match *self {
            OutputChannel::Awgn { delta } => {
                if !(delta > 0.0) || !delta.is_finite() {
                    return Err(ChannelError::InvalidParameter {
                        name: "delta",
                        value: delta,
                    });
                }
            }
            OutputChannel::GraphEdge { p, mu } => {
                if !(0.0 < p && p < 1.0) {
                    return Err(ChannelError::InvalidParameter { name: "p", value: p });
                }
                if !(mu != 0.0) || !mu.is_finite() {
                    return Err(ChannelError::InvalidParameter { name: "mu", value: mu });
                }
            }
            OutputChannel::GaussianDropout { p, delta } => {
                if !(0.0 < p && p <= 1.0) {
                    return Err(ChannelError::InvalidParameter { name: "p", value: p });
                }
                if !(delta > 0.0) || !delta.is_finite() {
                    return Err(ChannelError::InvalidParameter {
                        name: "delta",
                        value: delta,
                    });
                }
            }
        }
        Ok(())
    }

    /// Effective AWGN variance in closed form.
    pub fn effective_delta(&self) -> Result<f64, ChannelError> {
        self.validate()?;
        Ok(match *self {
            OutputChannel::Awgn { delta } => delta,
            // Fisher at y=0: mu^2/p + mu^2/(1-p) = mu^2/(p(1-p))
            OutputChannel::GraphEdge { p, mu } => p * (1.0 - p) / (mu * mu),
            // score = p w / Delta under the y=0 mixture, Fisher = p^2/Delta
            OutputChannel::GaussianDropout { p, delta } => delta / (p * p),
        })
    }

    /// log P_out(w | y)
    fn log_likelihood(&self, w: f64, y: f64) -> f64 {
        match *self {
            OutputChannel::Awgn { delta } => {
                let d = w - y;
                -0.5 * d * d / delta - 0.5 * (2.0 * std::f64::consts::PI * delta).ln()
            }
            OutputChannel::GraphEdge { p, mu } => {
                let edge = (p + mu * y).clamp(f64::MIN_POSITIVE, 1.0);
                if w > 0.5 {
                    edge.ln()
                } else {
                    (1.0 - edge).max(f64::MIN_POSITIVE).ln()
                }
            }
            OutputChannel::GaussianDropout { p, delta } => {
                let norm = -0.5 * (2.0 * std::f64::consts::PI * delta).ln();
                let a = (p).ln() + norm - 0.5 * (w - y) * (w - y) / delta;
                let b = (1.0 - p).max(f64::MIN_POSITIVE).ln() + norm - 0.5 * w * w / delta;
                let m = a.max(b);
                m + ((a - m).exp() + (b - m).exp()).ln()
            }
        }
    }

    /// Effective variance by numeric Fisher information: central difference
    /// of the log-likelihood in y (step 1e-5), integrated over P_out(w|0)
    /// (atom sum for discrete outputs, Gauss-Hermite for Gaussian ones).
    pub fn effective_delta_numeric(&self) -> Result<f64, ChannelError> {
        self.validate()?;
        const STEP: f64 = 1e-5;
        let score = |w: f64| {
            (self.log_likelihood(w, STEP) - self.log_likelihood(w, -STEP)) / (2.0 * STEP)
        };
        let fisher = match *self {
            OutputChannel::GraphEdge { p, .. } => {
                let s1 = score(1.0);
                let s0 = score(0.0);
                p * s1 * s1 + (1.0 - p) * s0 * s0
            }
            OutputChannel::Awgn { delta } | OutputChannel::GaussianDropout { delta, .. } => {
                // P_out(w|0) = N(0, Delta) for both Gaussian channels
                let rule = gauss_hermite(255);
                let sd = delta.sqrt();
                rule.expect(|z| {
                    let s = score(sd * z);
                    s * s
                })
            }
        };
        if !fisher.is_finite() || fisher <= 0.0 {
            return Err(ChannelError::NotDifferentiable);
        }
        Ok(1.0 / fisher)
    }
}
