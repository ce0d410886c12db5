"""Numerical laboratory for transition-density estimates of stable-driven
SDEs with distributional (Besov) drifts.

Modules: params (index bookkeeping), density (stable kernels and the
comparator), besov (thermic norms), drift (synthetic rough drifts and
mollification), sim (sampling and Euler paths), parametrix (Duhamel
density solver), verify (measured-constant reports), cli (batch runner).
"""

__version__ = "0.1.0"

from .params import (Admissibility, BesovIndices, DomainError,
                     ParameterError, StableParams, check_gr, eval_L,
                     l_integral_diverges, rho_range, serrin_exponent)
from .density import (ComparatorKernel, ExactKernel, KernelTable, c_alpha,
                      comparability_constant, gradient_bound_constant,
                      kernel_table)
from .besov import (SampledField, ThermicConfig, estimate_regularity,
                    thermic_norm, validate_duality, validate_product_rule)
from .drift import (DriftField, MollifiedDrift, eval_B, load_drift,
                    make_drift, mollify, save_drift)
from .sim import (MarginalEstimate, StableSampler, estimate_marginal,
                  euler_paths, load_samples, save_samples,
                  silverman_bandwidth)
from .parametrix import (DensityGrid, NonContractionError, SolverConfig,
                         chain_solve, diagnostics, duhamel_solve,
                         duhamel_solve_grad)
from .verify import (BoundReport, check_heat_kernel_bounds, cross_validate,
                     m_stabilization, validate_besov_kernel_lemma,
                     validate_besov_kernel_lemma_difference)
