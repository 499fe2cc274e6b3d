"""The two shipped test problems: a linear-Gaussian line fit and an SEIR epidemic."""
from .linear import (analytic_map_functions, linear_analytic_hs_maps, linear_analytic_posterior,
                     linear_box, linear_problem, load_linear_data, simulate_linear_data)
from .seir import (ODEIntegratorConfig, integrate_seir, load_seir_data, r0_qoi, seir_box,
                   seir_problem, simulate_seir_data)
