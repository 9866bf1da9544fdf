"""Constrained optimization: dense QP, SQP and the wing-design driver."""

from .qp import QPInfeasibleError, QPResult, solve_qp
from .sqp import (CONVERGED, EVALUATOR_FAILURE, MAX_ITERATIONS, EvaluatorError, RestorationError,
                  SqpResult, SqpSettings, minimize)
from .driver import (HISTORY_COLUMNS, RIGID_SCALE, ComparisonRow, DesignEvaluation,
                     DesignEvaluator, DriverSettings, FdCheck, OptimizationError,
                     OptimizationOutcome, OptimizationProblem, compare_flying_shapes,
                     comparison_rows, evaluate_design, format_comparison, format_history,
                     format_report, optimize, parse_history, spot_check)
