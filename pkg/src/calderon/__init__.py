"""Numerical laboratory for the inverse conductivity problem: forward DtN
synthesis, Faddeev-type Fourier operators, complex geometrical optics
solutions, boundary-integral reconstruction of the potential, recovery of
the conductivity, and empirical stability probes."""

__version__ = "0.1.0"

from .grid import ComplexFrequency, Grid, ScalarField
from .domain import BoundaryFunction, Domain, ball_domain, boundary_pairing, trace
from .forward import (DirichletSolution, DtnMap, alessandrini_pairing,
                      assemble_dtn, conductivity_to_potential,
                      solve_conductivity_dirichlet, solve_schrodinger_dirichlet)
from .faddeev import (SymbolGrid, WeightedNormReport, gzeta_apply, k0_apply,
                      kzeta_apply, rzeta_apply, szeta_apply, weighted_norm)
from .cgo import CgoSolution, cgo_trace, solve_cgo
from .recon import (ScatteringSamples, ZetaPair, bie_solve, lowpass_invert,
                    make_zeta_pair, recover_gamma, scattering_grid,
                    scattering_sample)
from .stability import StabilityCurve, dtn_distance, perturb_dtn, stability_sweep

__all__ = [
    "__version__",
    "Grid", "ScalarField", "ComplexFrequency",
    "Domain", "BoundaryFunction", "ball_domain", "boundary_pairing", "trace",
    "DirichletSolution", "DtnMap", "alessandrini_pairing", "assemble_dtn",
    "conductivity_to_potential", "solve_conductivity_dirichlet",
    "solve_schrodinger_dirichlet",
    "SymbolGrid", "WeightedNormReport", "gzeta_apply", "k0_apply",
    "kzeta_apply", "rzeta_apply", "szeta_apply", "weighted_norm",
    "CgoSolution", "cgo_trace", "solve_cgo",
    "ScatteringSamples", "ZetaPair", "bie_solve", "lowpass_invert",
    "make_zeta_pair", "recover_gamma", "scattering_grid", "scattering_sample",
    "StabilityCurve", "dtn_distance", "perturb_dtn", "stability_sweep",
]
