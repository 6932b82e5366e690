"""Transfer operators, correlations and resonances of suspension semiflows
over piecewise expanding interval maps."""

__version__ = "0.1.0"

from .errors import (BudgetError, DivergentTailsError, InsidePoleRegionError,
                     NoConvergenceError, NonExpandingBranchError, NonUniqueAcimWarning,
                     OrbitSingularError, OutsideDomainError, OutsideImageError,
                     ParameterError, ResolutionError, SemiflowError)
from .interval_maps import (Branch, Interval, PiecewiseMap, TailDescriptor, branch_contraction,
                            evaluate_map, inverse_branch, make_doubling_map, make_explicit_map,
                            make_lorenz_map, make_lueroth_map, make_tent_map, map_from_config,
                            refine_partition)
from .return_time import ReturnTime
from .gbv_norm import GbvParams, GridFunction, gbv_norm, osc, seminorm
from .transfer_operator import (LyReport, OperatorMatrix, Weight, apply_transfer,
                                invariant_density, lambda_bound, spectrum_topk, ulam_matrix,
                                verify_ly)
from .hypothesis import HypothesisReport, check_conditions, exp_tails, lorenz_params
from .suspension import (FlowPoint, Observable, SuspensionSemiflow, b_term_decay, birkhoff_tau,
                         correlation, flow, hat_transform, mu_integrate)
from .laplace_resonances import (ResonanceScan, StripGrid, resonance_scan, rho_hat_quadrature,
                                 rho_hat_series)
