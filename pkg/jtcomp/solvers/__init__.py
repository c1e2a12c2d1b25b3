from jtcomp.solvers.baselines import PsoOptions, pso_solve, zf_precoder
from jtcomp.solvers.bnb import BnbBox, BnbOptions, BnbResult, Feasibility, FeasibilityResult, bisection_tighten, \
    box_bounds, branch_and_bound, feasibility_check, initial_box
from jtcomp.solvers.conic import Affine, ComplexAffine, ConicProgram, ConicSolution, ConicStatus, CvxpyBackend, \
    complex_to_real_embedding, dump_triplets, geo_mean_epigraph, get_default_backend, max_violation, \
    set_default_backend, solve
from jtcomp.solvers.ssocp import SolveTrace, SsocpOptions, init_precoder, interference_soc, linearize_signal, \
    ssocp_iteration, ssocp_solve
from jtcomp.solvers.wmmse import WmmseOptions, receiver_update, wmmse_solve, wmmse_subproblem
