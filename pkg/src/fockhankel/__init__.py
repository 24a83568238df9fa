"""Vector-valued Fock-type spaces: kernels, Bloch/BMO symbols and Hankel operators."""
__version__ = "0.1.0"

from .weights import (BUILTIN_WEIGHTS, EXP, GAUSSIAN, POWER2, InadmissibleWeightError, WeightModel,
                      class_s_diagnostic, make_weight)
from .moments import compute_moments
from .kernel import (KernelRangeError, bergman_data, bergman_distance, eval_F, eval_kernel,
                     make_kernel, radial_profile)
from .symbols import (OperatorSymbol, SymbolError, bloch_norm, bloch_seminorm, parse_polynomial,
                      q_matrix, symbol_from_literal)
from .hankel import (ConsistencyError, assemble_hankel, operator_norm, schatten_norm,
                     singular_values)
from .berezin import berezin_transform, bmo_norm, mo_squared

__all__ = [
    "BUILTIN_WEIGHTS", "EXP", "GAUSSIAN", "POWER2", "InadmissibleWeightError", "WeightModel",
    "class_s_diagnostic", "make_weight", "compute_moments", "KernelRangeError", "bergman_data",
    "bergman_distance", "eval_F", "eval_kernel", "make_kernel", "radial_profile", "OperatorSymbol",
    "SymbolError", "bloch_norm", "bloch_seminorm", "parse_polynomial", "q_matrix", "symbol_from_literal",
    "ConsistencyError", "assemble_hankel", "operator_norm", "schatten_norm", "singular_values",
    "berezin_transform", "bmo_norm", "mo_squared",
]
