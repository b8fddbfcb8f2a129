"""Non-local magic of bipartite pure qudit states."""
from .closed_form import NlmResult, f_closed, f_oracle, nlm_linear, nlm_schmidt, nlm_value
from .invariants import (SpectrumInvariants, anti_flatness, cyclic_sum, det_invariant,
                         monomial_sym, power_sum)
from .lu_opt import (LocalUnitaryParams, OptimizerConfig, OptResult, gradient, minimize,
                     objective, su_from_params)
from .qudit import (PureBipartiteState, SchmidtSpectrum, apply_local_unitaries, m2_pure,
                    pauli_coefficient, pauli_tensor, qubit_r_tensor, reduced_density,
                    schmidt_decompose, state_from_spectrum)

__version__ = "0.1.0"
