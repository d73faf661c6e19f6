"""Big-M SAA reformulations of joint chance-constrained LPs, with tightening, screening and envelope cuts."""
from .bnb import MipResult, MipStatus, lr_gap, pwl_objective, solve_milp
from .core import (BigMTable, JccInstance, MilpModel, Polyhedron, QuadraticObjective, ScenarioRow,
                   build_saa_milp, count_constraints, violation_budget)
from .cuts import CutSet, generate_cut_set, generate_cuts, verify_row_equivalence, z_bounds
from .envelope import EnvelopeChain, LineSet, k_upper_envelope, lower_hull, weighted_k_envelope
from .lp import LpProblem, LpResult, linear_extreme, solve_lp
from .strengthen import SolverConfig, accelerate_screen, run_pipeline, tighten

__version__ = "0.1.0"
