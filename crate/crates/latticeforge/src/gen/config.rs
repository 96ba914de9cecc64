use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, Result};

/// Dimension of the conditioning property vector
/// (E_x, E_y, E_z, G_yz, G_xz, G_xy, nu_yz, nu_xz, nu_xy).
pub const PROP_DIM: usize = 9;

/// Generator architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Maximum token (vertex) count per cell.
    pub n_max: usize,
    /// Transformer token width.
    pub token_dim: usize,
    pub heads: usize,
    pub blocks: usize,
    /// Edge-encoder hidden width.
    pub edge_hidden: usize,
    pub learning_rate: f64,
    /// 0 means full-batch steps.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_max: 32,
            token_dim: 64,
            heads: 4,
            blocks: 4,
            edge_hidden: 32,
            learning_rate: 3e-3,
            batch_size: 0,
            epochs: 200,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 || self.token_dim == 0 || self.heads == 0 || self.blocks == 0 {
            return Err(LatticeError::InvalidConfig(
                "generator dimensions must be positive".into(),
            ));
        }
        if self.token_dim % self.heads != 0 {
            return Err(LatticeError::InvalidConfig(format!(
                "token_dim {} must be divisible by heads {}",
                self.token_dim, self.heads
            )));
        }
        if self.edge_hidden == 0 {
            return Err(LatticeError::InvalidConfig("edge_hidden must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(LatticeError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.token_dim / self.heads
    }
}
