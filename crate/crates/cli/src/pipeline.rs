//! Shared path from a dubbing instance to its flow condition streams.

use flowdub::alignment::{lip_attention, mas, similarity};
use flowdub::conditioning::{phoneme_semantic, CrossModalStack, Fusion, StackConfig};
use flowdub::datagen::DubInstance;
use flowdub::guidance::{ConditionBundle, StyleHead};
use flowdub::numkernel::Rng;

use crate::error::{CliError, CliResult};

/// Stack dimensions for an instance: width from the instance, depth and
/// heads from the run configuration.
pub fn stack_for(inst: &DubInstance, stack: StackConfig) -> CliResult<StackConfig> {
    let s = StackConfig {
        d: inst.z_p.cols(),
        ..stack
    };
    s.validate()
        .map_err(|e| CliError::usage(format!("instance width {}: {e}", s.d)))?;
    Ok(s)
}

/// Aligns the lip stream by MAS, builds `C_lip` and `LLM_p`, and fuses
/// conditional and unconditional priors with the instance style applied.
pub fn condition(
    inst: &DubInstance,
    stack_cfg: &StackConfig,
    stack_seed: u64,
    alpha: f64,
) -> CliResult<ConditionBundle> {
    let stack = CrossModalStack::init(stack_cfg, &mut Rng::new(stack_seed))?;
    let sim = similarity(&inst.z_m, &inst.z_p)?;
    let tab = mas(&sim)?.tab;
    let c_lip = lip_attention(&inst.z_m, &inst.z_p, &sim)?;
    let llm_p = phoneme_semantic(&inst.z_p, &inst.s_llm, &stack)?;
    let d = stack_cfg.d;
    let style = StyleHead::identity(inst.style.len(), d).affine(&inst.style)?;
    Ok(ConditionBundle::from_streams(
        &Fusion::identity(d),
        &style,
        &c_lip,
        &llm_p,
        &inst.z_p,
        &tab,
        inst.n,
        alpha,
    )?)
}
