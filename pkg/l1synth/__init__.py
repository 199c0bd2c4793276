"""
l1synth: l1-synthesis sparse recovery under heavy-tailed measurements

Recovers z0 = D x0 from y = Phi z0 + e by solving
    min ||x||_1  s.t.  ||Phi D x - y||_2 <= eps
and runs the experiments around it: phase transitions over random ensembles, robustness
sweeps, null space property certification and Monte Carlo checks of the small-ball and width
estimates behind the sample complexity.

Quick Start:
    from l1synth import EntryLaw, EnsembleSpec, make_identity, make_problem, sample_matrix
    from l1synth import synthesize

    phi = sample_matrix(EnsembleSpec.measurement(EntryLaw.gaussian(), 40, 80), seed=1)
    x0 = np.zeros(80); x0[:5] = 1.0
    report = synthesize(make_problem(phi, make_identity(80), x0))
    print(report.err_x)
"""

__version__ = "1.0.0"
__license__ = "MIT"

from .base import (
    ConeSpec,
    EnsembleSpec,
    EntryLaw,
    LawKind,
    MomentProfile,
    NspReport,
    NspStatus,
    SolveReport,
    SolverConfig,
)
from .dictionary import Dictionary, full_spark, load_dictionary, make_identity, make_random_dict
from .ensembles import derive_seed, moment_profile, sample_matrix, trial_seed
from .exceptions import (
    ConfigError,
    InfeasibleAtSizeError,
    L1SynthError,
    LPError,
    NumericalAbortError,
    ValidationError,
)
from .harness import ExperimentConfig, ExperimentResult, run_experiment
from .nsp import certify_nsp, certify_synthesis_nsp, estimate_robust_tau
from .solver import Problem, make_problem, solve_qcbp, synthesize

__all__ = [
    "ConeSpec",
    "EnsembleSpec",
    "EntryLaw",
    "LawKind",
    "MomentProfile",
    "NspReport",
    "NspStatus",
    "SolveReport",
    "SolverConfig",
    "Dictionary",
    "full_spark",
    "load_dictionary",
    "make_identity",
    "make_random_dict",
    "derive_seed",
    "moment_profile",
    "sample_matrix",
    "trial_seed",
    "ConfigError",
    "InfeasibleAtSizeError",
    "L1SynthError",
    "LPError",
    "NumericalAbortError",
    "ValidationError",
    "ExperimentConfig",
    "ExperimentResult",
    "run_experiment",
    "certify_nsp",
    "certify_synthesis_nsp",
    "estimate_robust_tau",
    "Problem",
    "make_problem",
    "solve_qcbp",
    "synthesize",
    "__version__",
    "__license__",
]
