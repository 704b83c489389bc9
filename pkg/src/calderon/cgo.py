"""Complex geometrical optics solutions by fixed-point iteration.

Solves (I - m_q G_zeta) s = q on the lattice and sets r = G_zeta s, so that
u = e^{x.zeta} (1 + r) solves the Schrodinger equation globally.  Iteration
runs in the plain discrete L2 metric; the paper-style weighted norms are
reported as diagnostics.  The lattice is zero padded (factor 2) to suppress
periodization wrap.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .domain import BoundaryFunction, Domain
from .errors import MaxIterExceeded, NoContraction
from .faddeev import (EPS_SYM_DEFAULT, KL_GUARD, ZetaOperator,
                      check_compact_support, embed, modulation, restrict,
                      weighted_norm)
from .grid import ComplexFrequency, ScalarField, conjugated_laplacian

TOL_DEFAULT = 1e-8
MAX_ITER_DEFAULT = 200
K_MIN_DEFAULT = 4.0


@dataclasses.dataclass(frozen=True)
class CgoSolution:
    zeta: ComplexFrequency
    r: ScalarField                 # remainder on the base grid
    iterations: int
    contraction_estimate: float
    residual: float                # |(-Delta_zeta + q) r + q| / |q|, interior
    diagnostics: dict

    def __post_init__(self):
        if self.contraction_estimate >= 1.0:
            raise NoContraction("converged solution must report contraction < 1",
                                ratio=self.contraction_estimate)


def solve_cgo(q: ScalarField, zeta: ComplexFrequency,
              tol: float = TOL_DEFAULT, max_iter: int = MAX_ITER_DEFAULT,
              delta: float = 0.25, pad_factor: int = 2,
              eps_sym: float = EPS_SYM_DEFAULT) -> CgoSolution:
    """Iterate s <- q + q * (G_zeta s) from s0 = q until the update stalls.

    Raises NoContraction when the measured update ratio stays >= 1 for three
    consecutive iterations, MaxIterExceeded past ``max_iter``.
    """
    check_compact_support(q, shell_fraction=0.3, rtol=1e-10)
    op = ZetaOperator(q.grid, zeta, pad_factor, eps_sym)
    pgrid = op.pgrid
    qv = embed(q.values, q.grid, pgrid) if pgrid is not q.grid \
        else q.values.astype(np.complex128)

    s = qv.copy()
    q_norm = np.linalg.norm(qv)
    if q_norm == 0.0:
        r = ScalarField.zeros(q.grid)
        return CgoSolution(zeta, r, 1, 0.0, 0.0,
                           {"update_ratios": [], "k": zeta.k})

    update_norms = []
    ratios = []
    bad_streak = 0
    iterations = 0
    prev_update = None
    for it in range(1, max_iter + 1):
        iterations = it
        s_next = qv + qv * op.apply_padded(s)
        upd = float(np.linalg.norm(s_next - s))
        update_norms.append(upd)
        if prev_update is not None and prev_update > 0:
            ratio = upd / prev_update
            ratios.append(ratio)
            if ratio >= 1.0:
                bad_streak += 1
                if bad_streak >= 3:
                    raise NoContraction(
                        f"update ratio {ratio:.3f} >= 1 for three consecutive "
                        f"iterations at k = {zeta.k:.3g}", ratio=ratio)
            else:
                bad_streak = 0
        prev_update = upd
        s = s_next
        if upd <= tol * max(float(np.linalg.norm(s)), 1e-300):
            break
    else:
        raise MaxIterExceeded(f"no convergence in {max_iter} iterations")

    r_pad = op.apply_padded(s)

    # independent residual through the stencil operator, interior nodes only
    r_field_pad = ScalarField(pgrid, r_pad)
    lap = conjugated_laplacian(r_field_pad, zeta).values
    resid_interior = (-lap + qv * r_pad + qv)[pgrid.interior_mask]
    residual = float(np.linalg.norm(resid_interior)
                     / np.linalg.norm(qv[pgrid.interior_mask]))

    contraction = float(np.median(ratios)) if ratios else 0.0
    r_base = restrict(r_pad, q.grid, pgrid) if pgrid is not q.grid else r_pad
    r = ScalarField(q.grid, r_base, kind="cgo_remainder")

    wn = weighted_norm(r, delta, max(zeta.k, 1.0), order=1, weight_sign=-1)
    diagnostics = {
        "k": zeta.k,
        "update_ratios": ratios,
        "update_norms": update_norms,
        "l2_minus_delta": wn.l2_delta,
        "h1k_minus_delta": wn.h1k_delta,
    }
    return CgoSolution(zeta, r, iterations, contraction, residual, diagnostics)


def solve_cgo_with_retry(q: ScalarField, make_zeta, k_start: float,
                         **kwargs) -> CgoSolution:
    """Double k on NoContraction until the modulation guard stops us.

    ``make_zeta(k)`` must return a ComplexFrequency of that magnitude.
    """
    k = max(k_start, K_MIN_DEFAULT)
    L = q.grid.box_halfwidth
    while True:
        try:
            return solve_cgo(q, make_zeta(k), **kwargs)
        except NoContraction:
            if 2.0 * k * L > KL_GUARD:
                raise
            k = 2.0 * k


def cgo_trace(sol: CgoSolution, domain: Domain) -> BoundaryFunction:
    """Boundary values of e^{x.zeta} (1 + r_zeta)."""
    mod = modulation(domain.grid, sol.zeta, +1)
    vals = mod * (1.0 + sol.r.values)
    return BoundaryFunction(domain, vals.ravel()[domain.boundary_flat])


def full_solution_residual(sol: CgoSolution, q: ScalarField) -> float:
    """|(-lap + q) u| / |e^{x.zeta} q| for u = e^{x.zeta}(1+r), evaluated in
    the conjugated frame where the identity e^{-x.zeta}(-lap+q)u =
    (-lap_zeta + q)(1 + r) holds exactly on the lattice."""
    zeta = sol.zeta
    grid = q.grid
    one_plus_r = sol.r.with_values(1.0 + sol.r.values)
    lap = conjugated_laplacian(one_plus_r, zeta).values
    resid = (-lap + q.values * (1.0 + sol.r.values))
    interior = grid.interior_mask
    denom = np.linalg.norm(q.values[interior])
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(resid[interior]) / denom)
