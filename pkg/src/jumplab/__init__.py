"""Lattice approximations, path simulation and spectral calculus for
symmetric pure-jump Markov processes with stable-like kernels."""

__version__ = "0.1.0"

from .chain import (ConductanceMatrix, GeneratorMatrix, Lattice, assemble_generator,
                    build_conductances, build_lattice, chain_from_rates, dirichlet_form,
                    export_triples)
from .convergence import (KernelSequenceSpec, constant_sequence, oscillatory_sequence,
                          resolvent_convergence, semigroup_convergence, verify_uic,
                          weak_convergence_probe)
from .estimators import ExitTimeMonteCarlo, HeatSemigroup, HolderExponent, LatticeChain, Resolvent
from .exceptions import (CapabilityError, ConfigurationError, DivergentEntryError, DomainError,
                         DominatingRateError, InsufficientDataError, JumpLabError, NumericError,
                         QuadratureError)
from .functionals import (L_lower_bound, compute_L, compute_L1, compute_L2, doubling_exponent,
                          order_comparability)
from .kernels import (KernelBounds, KernelSpec, ModulatedKernel, OrderField,
                      OscillatoryModulation, SamplingPlan, StableKernel, TabulatedKernel,
                      VariableOrderKernel, eval_kernel, tail_mass, verify_bounds)
from .operators import (HeatKernelMatrix, SpectralDecomp, heat_kernel, holder_fit, resolvent,
                        semigroup_apply, solve_harmonic, spectral_decompose,
                        verify_resolvent_identity)
from .pathsim import (ExitEstimate, MeyerChain, PathSample, estimate_exit_prob,
                      estimate_mean_exit, exit_times, jump_counts, levy_system_check,
                      occupation_fractions, simulate_meyer, simulate_path, stopped_values)
