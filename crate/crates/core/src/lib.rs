//! Temporal attention reweighting for video diffusion, multi-prompt embedding
//! blending, and a numerical check of the inconsistency reduction bound.

pub mod attention;
pub mod cli_io;
pub mod consistency;
pub mod error;
pub mod promptblend;
pub mod spectral;
pub mod verifier;

pub use attention::{
    motion_intensity, softmax_rows, tiara, tiara_slice, AttentionLogits, AttentionMap,
    FrequencyBand, MotionProfile, ReweightMatrix, TiaraParams, TiaraSlice, VideoLatentSlice,
};
pub use consistency::{inconsistency_error, InconsistencyReport};
pub use error::{Error, Result};
pub use promptblend::{align, conditioning, AlignedPromptSet, BlendSchedule, OrganizedPrompt};
pub use spectral::{dft, dstft, make_window, Signal, Window, WindowKind};
pub use verifier::{alpha_from_closed_form, verify_theorem, TheoremInstance, TheoremReport};
