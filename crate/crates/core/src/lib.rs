//! Attention-guided multi-resolution image transmission over a rate-limited
//! channel.
//!
//! A sender turns a per-patch attention grid and a block byte budget into a
//! [`ResolutionMap`], encodes each patch at its level with a budget-exact
//! codec, and packs everything into a self-describing frame. The receiver
//! parses the frame, decodes the patches it carries and fills the rest.

pub mod allocator;
pub mod attn;
pub mod channel;
pub mod codec;
pub mod frame;
pub mod pipeline;

pub use allocator::{
    brute_force_reference, select_resolutions, AllocError, Budget, RateTable, ResolutionMap,
};
pub use attn::{
    aggregate, read_attn_file, synth_attention, write_attn_file, AttentionGrid, AttnError,
    HeadAttentionRows, SynthKind,
};
pub use channel::{
    generate_trace, read_trace_file, write_trace_file, ChannelError, ChannelKind, ChannelModel,
    RateTrace,
};
pub use codec::{
    decode_patch, encode_patch, CodecError, DctCodec, EncodedPatch, Patch, PatchCodec,
};
pub use frame::{build_frame, parse_frame, Frame, FrameError};
pub use pipeline::{
    receive, run_block, run_experiment, transmit, weighted_mse, ImageTensor, PipelineConfig,
    PipelineError, TransmissionReport,
};
