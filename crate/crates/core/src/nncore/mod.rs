//! Dense and recurrent layers with hand-written backward passes, the Huber
//! loss, Adam, and finite-difference gradient checking.

mod attention;
mod dense;
pub mod gradcheck;
mod loss;
mod lstm;
mod norm;
mod optim;
mod params;
mod tensor;

pub use attention::{luong_attention, Attention, AttentionCache};
pub use dense::{dense_forward, Dense};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use loss::{huber_loss, LossConfig};
pub use lstm::{bilstm_forward, lstm_cell_forward, BiLstm, BiLstmCache, LstmCell, LstmStepCache};
pub use norm::{dropout_mask, dropout_mask_from, layer_norm, LayerNorm, LayerNormCache};
pub use optim::{adam_step, lr_at_step, AdamConfig, LrSchedule, OptimizerState};
pub use params::{uniform_init, uniform_vec, Parameterized};
pub use tensor::Tensor2;

pub(crate) use tensor::dot;
