"""Kalman filtering engine, prompt-matrix tape machine, and evaluation
harness for randomly sampled linear dynamical systems."""

from .baselines import RegressionProblem, ols_estimate, ridge_estimate, sgd_estimate
from .codec import (
    ContextMatrix,
    DecodedContext,
    SCHEMES,
    decode,
    encode,
    mask_context,
    read_dataset,
    read_predictions,
    write_dataset,
    write_predictions,
)
from .errors import (
    AlignmentError,
    ConfigurationError,
    NumericalError,
    ProgramError,
    SchemaError,
    TapeRuntimeError,
)
from .filters import (
    DualFilterState,
    FilterOutput,
    FilterState,
    dual_kf_run,
    dual_kf_step,
    kf_predict,
    kf_run,
    kf_update,
    kf_update_scalar,
    kf_update_sequential,
    predict_observation,
)
from .sampler import (
    CurriculumSchedule,
    SamplerConfig,
    default_schedule,
    sample_batch,
    sample_example,
    sample_orthonormal,
)
from .ssm import SystemParams, Trajectory, simulate
from .tape import (
    Instruction,
    Operand,
    Program,
    Tape,
    build_tape,
    compile_dual_kf_program,
    compile_kf_program,
    parse_assembly,
    run_program,
    run_steps,
    to_assembly,
)

__version__ = "0.1.0"
