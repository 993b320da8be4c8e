"""Rank-adaptive explicit and implicit step-truncation integrators in TT format."""

from .dense import SvdResult, dense_rk4_adaptive, matrix_exp, qr_factor, truncated_svd
from .integrators import (ExplicitStepper, ImplicitStepper, RunRecord, SplittingStepper, StepReport,
                          SubFlow, ThresholdSchedule, compression_step, integrate, splitting_step,
                          step_explicit_st, step_implicit_st)
from .linop import DiagTerm, KronTerm, TtLinOp, apply_linop
from .solvers import GmresConfig, NewtonConfig, SolveReport, gmres_solve, newton_solve
from .tt import (RoundingSpec, TtTensor, mode_apply, tt_axpy, tt_from_dense, tt_hadamard, tt_inner,
                 tt_norm, tt_round, tt_to_dense)

__version__ = "0.1.0"
