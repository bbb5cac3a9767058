//! Network, node and coordinator delays.

use serde::{Deserialize, Serialize};

use crate::engine::RngStream;
use crate::error::{Result, SimError};
use crate::scalar::Scalar;

/// Every stochastic or formulaic delay of the simulated system, in milliseconds.
///
/// Network and node-processing delays are Gaussian draws resampled until
/// positive. The coordinator of the central-server algorithm spends a fixed
/// `server_coeff * exp(n / server_divisor)` on every request and release.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayModel<T> {
    pub net_mean: T,
    pub net_std: T,
    pub proc_mean: T,
    pub proc_std: T,
    pub server_coeff: T,
    pub server_divisor: T,
    pub n: usize,
}

impl<T: Scalar> Default for DelayModel<T> {
    fn default() -> Self {
        Self {
            net_mean: T::lit(30.0),
            net_std: T::lit(5.0),
            proc_mean: T::lit(15.0),
            proc_std: T::lit(2.0),
            server_coeff: T::lit(40.0),
            server_divisor: T::lit(10.0),
            n: 100,
        }
    }
}

impl<T: Scalar> DelayModel<T> {
    /// Default parameters for `n` nodes.
    pub fn with_nodes(n: usize) -> Self {
        Self {
            n,
            ..Self::default()
        }
    }

    /// All Gaussian spreads set to zero; every sample equals its mean.
    pub fn deterministic(mut self) -> Self {
        self.net_std = T::zero();
        self.proc_std = T::zero();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("net_mean", self.net_mean),
            ("net_std", self.net_std),
            ("proc_mean", self.proc_mean),
            ("proc_std", self.proc_std),
            ("server_coeff", self.server_coeff),
        ];
        for (name, value) in named {
            if !value.is_finite() || value < T::zero() {
                return Err(SimError::Config(format!(
                    "{name} must be a finite non-negative number, got {value}"
                )));
            }
        }
        if !self.server_divisor.is_finite() || self.server_divisor <= T::zero() {
            return Err(SimError::Config(format!(
                "server_divisor must be positive, got {}",
                self.server_divisor
            )));
        }
        if self.n < 2 {
            return Err(SimError::Config(format!(
                "at least 2 nodes are required, got {}",
                self.n
            )));
        }
        Ok(())
    }

    /// One-way network delay of a single message.
    pub fn network_delay(&self, stream: &mut RngStream) -> T {
        stream.gaussian(self.net_mean, self.net_std)
    }

    /// Time a ring or tree node spends handling one received message.
    pub fn node_processing_delay(&self, stream: &mut RngStream) -> T {
        stream.gaussian(self.proc_mean, self.proc_std)
    }

    /// Coordinator handling time for one request or release message.
    pub fn server_processing_delay(&self) -> T {
        server_delay_for(self.server_coeff, self.server_divisor, self.n)
    }
}

pub(crate) fn server_delay_for<T: Scalar>(coeff: T, divisor: T, n: usize) -> T {
    let n = T::from_usize(n).expect("node count representable in scalar type");
    coeff * (n / divisor).exp()
}
