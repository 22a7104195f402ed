"""Numerical concentration-compactness toolkit on dyadic lattices."""
from .lattice import (GridFunction, EnergySpec, MassSpec, PowerSumFunctional, LatticeError, eval_F,
                      eval_G, gauge_norm, bl_defect, target_norm, refine, restrict, coarsen_exact, trim)
from .group import (Dislocation, DislocationSequence, apply, compose, invert,
                    group_distance, diverges, shift, dilation)
from .weak import (TestFunctionalFamily, FunctionSequence, NotConvergent, pairing,
                   d_weak_defect, estimate_weak_limit, cocompactness_check)
from .decomposition import DecompositionOptions, DecompositionResult, decompose, verify_all
from .variational import (IsoperimetricProblem, PerturbationPair, SolverOptions, SolverError,
                          minimize_isoperimetric, minimize_penalized, subadditivity_table,
                          coercivity_probe, classify_minimizing_sequence)
from .symmetry import (SymmetrySpec, LatticeDomain, project_symmetric, flask_check,
                       conjugation_divergence_check, symmetric_compactness_test,
                       novanish_compactness_test)
from .axioms import verify_axioms

__version__ = "0.1.0"
