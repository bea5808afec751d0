"""Python bindings for the linear self-attention post-training simulator."""

from ._core import (
    ConfigError,
    DivergenceError,
    DomainError,
    Error,
    NumericalError,
    PromptBatch,
    SingularityError,
    experiment_names,
    gamma0_inverse,
    gen_prompt_batch,
    gen_prompt_signals,
    os_gd,
    os_grad,
    os_hessian_bound,
    os_loss,
    pinv,
    posttest_covariance,
    posttest_error_exact,
    posttest_error_mc,
    posttrain_covariance,
    pretrain_covariance,
    run_experiment,
    schema,
    sft_closed_form,
    sft_first_order,
    sft_minimizer,
    sft_population_limit,
    solve_q,
    spectral_radius,
    theory_components,
    theory_endpoints,
)

__all__ = [name for name in dir() if not name.startswith("_")]
