//! The summarization network.

mod cells;
mod config;
mod network;
mod params;

pub use cells::{attention_context, gate_score, gru_cell, lstm_cell, AttentionMemory};
pub use config::{CellKind, ModelConfig};
pub use network::{
    decode_teacher_forced, decoder_step, encode, initial_decoder_state, loss_and_gradients,
    loss_value, srb_loss, CellState, DecoderOutput, EncoderOutput, LossNodes, LossValues,
    StepOutput,
};
pub use params::{
    check_params, init_params, param_shapes, AttentionWeights, BoundParams, CellWeights,
    GateWeights, Gradients, ModelParams, NamedTensors, ParamTensor, INIT_RANGE,
};
