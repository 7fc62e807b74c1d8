//! Minimal tensor engine for the heatmap U-Net: layers with exact backward
//! passes, MSE loss, Adam and the checkpoint format.

mod adam;
mod checkpoint;
mod layers;
mod loss;
mod tensor;
mod unet;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, ModelMeta, CHECKPOINT_VERSION};
pub use layers::{
    concat_backward, concat_forward, dropout_backward, dropout_forward, maxpool2_backward,
    maxpool2_forward, sigmoid, upsample2_backward, upsample2_forward, Activation, BatchNorm,
    BatchNormCache, BatchNormGrads, Conv2d, ConvGrads,
};
pub use loss::mse_loss;
pub use tensor::{Real, Shape, Tensor};
pub use unet::{ConvUnit, DecoderLevel, Mode, Trace, UNet, UNetConfig, UNetParams};
