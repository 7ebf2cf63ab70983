//! The CNN+Transformer video defogger: per-frame encoders, temporal
//! attention over frame triplets, a skip-connected decoder, the combined
//! SSIM+L1 loss, training and inference.

mod checkpoint;
mod config;
mod forward;
mod infer;
mod loss;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::TcvdConfig;
pub use forward::{
    decode, encode, forward_graph, frame_to_tensor, tensor_to_frame, tpformer_block, ForwardPass,
    StageFeatures, LAYER_NORM_EPS,
};
pub use infer::infer_video;
pub use loss::{ssim_node, tcvd_loss};
pub use model::{Param, ParamSet, TcvdModel};
pub use train::{train, TrainLog, TrainLogEntry, TrainOptions, TrainSample};
