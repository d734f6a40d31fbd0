"""Symbolic-numeric phase-space reduction for perturbed semi-Markov hitting times."""

from .asymptotics import (ComparableFn, ExtendedLimit, FamilyMixError, Monomial,
                          NonpositiveValueError, cf_add, cf_div, cf_eval,
                          cf_leading, cf_limit, cf_mul, mono, parse_monomial)
from .hitting import (HittingEntry, HittingResult, InteriorWeights,
                      MissingInteriorDataError, expectation_summary,
                      extend_to_interior, hitting_probabilities, hitting_summary)
from .laplace import (Convolution, DiracAt, ExponentialLimit,
                      ExponentialWithMean, GeometricCompound, LaplaceExpr,
                      MissingMeanError, Mixture, Scale, UniformOn, canonical,
                      lt_eval, lt_mass, lt_mean, lt_remove_virtual, pretty)
from .model import (ConditionReport, SchemaError, SemiMarkovModel,
                    TransitionTimeSpec, model_to_json, parse_model,
                    serialize_model, validate_model)
from .oracle import (ConvergenceReport, FixedEpsModel, SingularSystemError,
                     StepBudgetExceeded, convergence_check, exact_expectation,
                     exact_laplace, fix_model, fixed_reduction_sequence,
                     simulate_hitting)
from .reduction import (DegenerateRowError, PreconditionError, ReductionError,
                        ReductionTrace, StepState, exclude_state, initial_state,
                        reduce, remove_virtual, select_least_absorbing)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
