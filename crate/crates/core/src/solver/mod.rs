//! Mean-field best response by backward dynamic programming, forward
//! particle push and the damped fixed-point loop.

mod forward;
mod hjb;
mod policy;

pub use forward::{
    damp, estimate_mfg_cost, initial_flow, picard_iterate, push_forward, push_forward_strategy, read_flow_binary,
    write_flow_binary, write_flow_summary, FixedPointReport, PicardConfig, MIN_PARTICLES, PICARD_CONTEXT,
    RESIDUAL_CONTEXT,
};
pub use hjb::{solve_hjb, HjbSolution, DIFFUSION_CFL, JUMP_PROBABILITY_CAP};
pub use policy::{enforce_lipschitz_cap, lipschitz_estimate, FeedbackPolicy, PolicyVariant, SpaceGrid, ValueGrid};
