"""Dirichlet solvers, discrete DtN maps, and the Schrodinger reduction.

The conductivity operator is the symmetric flux form with geometric-mean face
coefficients sqrt(gamma_i * gamma_j).  With q = (lap sqrt(gamma)) / sqrt(gamma)
built from the same 7-point Laplacian, the substitution w = sqrt(gamma) u is
an exact identity of the assembled matrices, so the discrete maps satisfy
Lambda_gamma = Lambda_q to solver precision, mirroring the continuum reduction.

DtN maps are assembled from the boundary rows of the discrete energy (a Schur
complement), which realizes the weak definition
    <Lambda f, g> = int gamma grad(u_f) . grad(v_g)
and is symmetric with respect to the boundary quadrature by construction.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import BoundaryFunction, Domain, check_same_domain, trace
from .errors import (CollarViolation, NearSingular, SolverFailure,
                     ValidationError)
from .grid import ScalarField, laplacian, validate_conductivity

_SINGULAR_RTOL = 1e-8
_RESIDUAL_RTOL = 1e-10


def conductivity_to_potential(gamma: ScalarField, domain: Domain,
                              ellipticity_c: float = 0.2) -> ScalarField:
    """q = lap(sqrt(gamma)) / sqrt(gamma), exactly zero off supp(gamma - 1).

    Requires gamma == 1 on the collar so that q is compactly supported
    strictly inside Omega.
    """
    g = validate_conductivity(gamma, ellipticity_c)
    b = np.sqrt(g)
    q = laplacian(ScalarField(gamma.grid, b)).values.real / b

    bumped = np.abs(g - 1.0) > 1e-13
    support = bumped.copy()
    support[1:, :, :] |= bumped[:-1, :, :]
    support[:-1, :, :] |= bumped[1:, :, :]
    support[:, 1:, :] |= bumped[:, :-1, :]
    support[:, :-1, :] |= bumped[:, 1:, :]
    support[:, :, 1:] |= bumped[:, :, :-1]
    support[:, :, :-1] |= bumped[:, :, 1:]
    q = np.where(support, q, 0.0)

    # gamma itself must equal 1 on the collar; q then spills at most one
    # stencil node past supp(gamma - 1), which stays strictly inside Omega
    if bumped.any():
        r_gamma = float(np.max(gamma.grid.radius[bumped]))
        if r_gamma > domain.radius - domain.collar_width + 1e-12:
            raise CollarViolation(
                f"gamma deviates from 1 at radius {r_gamma:.4g}, inside the "
                f"collar [{domain.radius - domain.collar_width:.4g}, "
                f"{domain.radius:.4g}]")
    return ScalarField(gamma.grid, q, kind="potential")


class InteriorOperator:
    """Assembled discrete operator on Omega with a reusable factorization."""

    def __init__(self, domain: Domain, face_coef: np.ndarray, node_coef: np.ndarray):
        self.domain = domain
        grid = domain.grid
        n_i, n_b = domain.n_interior, domain.n_boundary

        order = np.concatenate([domain.interior_flat, domain.boundary_flat])
        loc = np.full(grid.node_count, -1, dtype=np.int64)
        loc[order] = np.arange(len(order))

        h = grid.spacing
        omega = domain.omega
        idx = np.arange(grid.node_count).reshape(grid.shape)

        rows, cols, vals = [], [], []
        diag = np.zeros(len(order))
        for axis in range(3):
            sl_lo = [slice(None)] * 3
            sl_hi = [slice(None)] * 3
            sl_lo[axis] = slice(None, -1)
            sl_hi[axis] = slice(1, None)
            pair = omega[tuple(sl_lo)] & omega[tuple(sl_hi)]
            p = loc[idx[tuple(sl_lo)][pair]]
            q = loc[idx[tuple(sl_hi)][pair]]
            c = (face_coef[tuple(sl_lo)][pair] * face_coef[tuple(sl_hi)][pair]) * h
            rows.append(p)
            cols.append(q)
            vals.append(-c)
            rows.append(q)
            cols.append(p)
            vals.append(-c)
            np.add.at(diag, p, c)
            np.add.at(diag, q, c)

        diag += node_coef.ravel()[order] * grid.cell_volume
        rows.append(np.arange(len(order)))
        cols.append(np.arange(len(order)))
        vals.append(diag)

        A = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(len(order), len(order))).tocsr()
        self.A = A
        self.A_II = A[:n_i, :n_i].tocsc()
        self.A_IB = A[:n_i, n_i:].tocsr()
        self.A_BI = A[n_i:, :n_i].tocsr()
        self.A_BB = A[n_i:, n_i:].tocsr()
        self.n_interior = n_i
        self.n_boundary = n_b
        self._lu = None
        self.operator_norm_est = float(np.max(np.abs(A).sum(axis=1)))

    @property
    def lu(self):
        if self._lu is None:
            self._lu = spla.splu(self.A_II)
        return self._lu

    def _solve_interior(self, b: np.ndarray) -> np.ndarray:
        if np.iscomplexobj(b):
            return self.lu.solve(np.ascontiguousarray(b.real)) \
                + 1j * self.lu.solve(np.ascontiguousarray(b.imag))
        return self.lu.solve(b)

    def sigma_min_estimate(self, iters: int = 30) -> float:
        """Smallest-singular-value estimate by inverse power iteration."""
        rng = np.random.default_rng(12345)
        v = rng.standard_normal(self.n_interior)
        v /= np.linalg.norm(v)
        lam = np.inf
        for _ in range(iters):
            w = self._solve_interior(v)
            nw = np.linalg.norm(w)
            if nw == 0:
                return np.inf
            lam = 1.0 / nw
            v = w / nw
        return float(lam)

    def check_not_singular(self):
        s = self.sigma_min_estimate()
        if s <= _SINGULAR_RTOL * self.operator_norm_est:
            raise NearSingular(
                "0 is numerically a Dirichlet eigenvalue "
                f"(sigma_min ~ {s:.3e} vs scale {self.operator_norm_est:.3e})",
                sigma_min=s)

    def dirichlet_solve(self, f: np.ndarray, rhs: np.ndarray = None):
        """Solve with trace f; returns (u over [interior; boundary], residual)."""
        b = -(self.A_IB @ f)
        if rhs is not None:
            b = b + rhs * self.domain.grid.cell_volume
        u_i = self._solve_interior(b)
        bn = np.linalg.norm(b)
        res = float(np.linalg.norm(self.A_II @ u_i - b) / bn) if bn > 0 else 0.0
        return np.concatenate([u_i, f.astype(u_i.dtype, copy=False)]), res

    def boundary_flux(self, u: np.ndarray) -> np.ndarray:
        """Weak outward flux at boundary nodes (the rule used in DtN assembly)."""
        return (self.A_BI @ u[:self.n_interior]
                + self.A_BB @ u[self.n_interior:]) / self.domain.weights


def conductivity_operator(domain: Domain, gamma: ScalarField,
                          ellipticity_c: float = 0.2) -> InteriorOperator:
    g = validate_conductivity(gamma, ellipticity_c)
    return InteriorOperator(domain, np.sqrt(g), np.zeros(domain.grid.shape))


def schrodinger_operator(domain: Domain, q: ScalarField = None) -> InteriorOperator:
    grid = domain.grid
    if q is None:
        qv = np.zeros(grid.shape)
    else:
        qv = q.values.real if np.iscomplexobj(q.values) else q.values
        if np.iscomplexobj(q.values) and \
                np.max(np.abs(q.values.imag)) > 1e-12 * max(1.0, np.max(np.abs(qv))):
            raise ValidationError("potential must be real valued")
    return InteriorOperator(domain, np.ones(grid.shape), qv)


@dataclasses.dataclass(frozen=True)
class DirichletSolution:
    field: ScalarField              # solution on Omega nodes, zero outside
    trace: BoundaryFunction
    neumann: BoundaryFunction       # weak outward flux, same rule as DtN assembly
    residual: float
    potential: ScalarField = None   # q for Schrodinger solves
    conductivity: ScalarField = None

    @property
    def domain(self) -> Domain:
        return self.trace.domain


def _pack_solution(op: InteriorOperator, u: np.ndarray, res: float,
                   potential=None, conductivity=None) -> DirichletSolution:
    domain = op.domain
    full = np.zeros(domain.grid.node_count, dtype=u.dtype)
    full[domain.interior_flat] = u[:op.n_interior]
    full[domain.boundary_flat] = u[op.n_interior:]
    field = ScalarField(domain.grid, full.reshape(domain.grid.shape), "solution")
    if res > _RESIDUAL_RTOL:
        raise SolverFailure(f"linear solve residual {res:.3e} above "
                            f"{_RESIDUAL_RTOL:.0e}", residual=res)
    return DirichletSolution(
        field=field,
        trace=BoundaryFunction(domain, u[op.n_interior:]),
        neumann=BoundaryFunction(domain, op.boundary_flux(u)),
        residual=res,
        potential=potential,
        conductivity=conductivity)


def solve_conductivity_dirichlet(gamma: ScalarField, f: BoundaryFunction,
                                 ellipticity_c: float = 0.2,
                                 operator: InteriorOperator = None) -> DirichletSolution:
    """Solve -div(gamma grad u) = 0 in Omega with u = f on the boundary."""
    op = operator or conductivity_operator(f.domain, gamma, ellipticity_c)
    u, res = op.dirichlet_solve(f.values)
    return _pack_solution(op, u, res, conductivity=gamma)


def solve_schrodinger_dirichlet(q: ScalarField, f: BoundaryFunction,
                                rhs: ScalarField = None,
                                operator: InteriorOperator = None,
                                check_singular: bool = True) -> DirichletSolution:
    """Solve (-lap + q) u = rhs in Omega with u = f on the boundary."""
    op = operator or schrodinger_operator(f.domain, q)
    if check_singular:
        op.check_not_singular()
    rhs_i = None
    if rhs is not None:
        rhs_i = rhs.values.ravel()[f.domain.interior_flat]
    u, res = op.dirichlet_solve(f.values, rhs_i)
    return _pack_solution(op, u, res, potential=q)


@dataclasses.dataclass(frozen=True)
class DtnMap:
    """Dense boundary voltage-to-current matrix in the nodal basis.

    ``matrix`` acts on trace vectors; it is self-adjoint for the
    quadrature-weighted pairing (W Lambda symmetric).
    """

    domain: Domain
    matrix: np.ndarray
    label: str
    asymmetry: float = 0.0
    sigma_min: float = np.inf

    def apply(self, f: BoundaryFunction) -> BoundaryFunction:
        check_same_domain(self, f)
        return BoundaryFunction(self.domain, self.matrix @ f.values)

    def pair(self, f: BoundaryFunction, g: BoundaryFunction) -> complex:
        """<Lambda f, g> with the bilinear surface pairing."""
        check_same_domain(self, f)
        return complex(np.sum((self.matrix @ f.values) * g.values
                              * self.domain.weights))


def zero_dtn_like(dtn: DtnMap) -> DtnMap:
    return DtnMap(dtn.domain, np.zeros_like(dtn.matrix), "zero")


_ASYM_TOL = 1e-6


def assemble_dtn(field: ScalarField, label: str, domain: Domain,
                 ellipticity_c: float = 0.2, check_singular: bool = True,
                 chunk: int = 512, operator: InteriorOperator = None) -> DtnMap:
    """Assemble the DtN matrix column by column against nodal basis traces.

    label "gamma" expects a conductivity, "q" a potential, "zero" the free
    Laplacian (field ignored).
    """
    if operator is not None:
        op = operator
    elif label == "gamma":
        op = conductivity_operator(domain, field, ellipticity_c)
    elif label == "q":
        op = schrodinger_operator(domain, field)
    elif label == "zero":
        op = schrodinger_operator(domain, None)
    else:
        raise ValidationError(f"unknown DtN label {label!r}")

    sigma = np.inf
    if check_singular:
        sigma = op.sigma_min_estimate()
        if sigma <= _SINGULAR_RTOL * op.operator_norm_est:
            raise NearSingular(
                f"cannot assemble Lambda_{label}: interior operator near singular",
                sigma_min=sigma)

    n_b = op.n_boundary
    A_IB = op.A_IB.toarray()
    S = np.empty((n_b, n_b))
    for start in range(0, n_b, chunk):
        cols = slice(start, min(start + chunk, n_b))
        u = op.lu.solve(A_IB[:, cols])
        S[:, cols] = op.A_BB[:, cols].toarray() - op.A_BI @ u

    asym = float(np.linalg.norm(S - S.T) / max(np.linalg.norm(S), 1e-300))
    S = 0.5 * (S + S.T)
    if asym > _ASYM_TOL:
        raise SolverFailure(
            f"DtN asymmetry {asym:.3e} above {_ASYM_TOL:.0e} before averaging")
    matrix = S / domain.weights[:, None]
    return DtnMap(domain, matrix, label, asymmetry=asym, sigma_min=sigma)


def dtn_operator_norm(dtn: DtnMap) -> float:
    """Spectral norm of the map in the weighted-L2 boundary geometry."""
    w = np.sqrt(dtn.domain.weights)
    return float(np.linalg.norm(w[:, None] * dtn.matrix / w[None, :], 2))


def alessandrini_pairing(L1: DtnMap, L2: DtnMap,
                         u1: DirichletSolution, u2: DirichletSolution):
    """Both sides of the integral identity for two Schrodinger pairs.

    Returns (boundary_side, volume_side):
      boundary: <(Lambda_1 - Lambda_2) u1|_b, u2|_b>
      volume:   int (q1 - q2) u1 u2 dx
    """
    check_same_domain(L1, L2)
    check_same_domain(L1, u1.trace)
    check_same_domain(L1, u2.trace)
    if u1.potential is None or u2.potential is None:
        raise ValidationError("alessandrini_pairing needs Schrodinger solutions "
                              "carrying their potentials")
    f1, f2 = u1.trace.values, u2.trace.values
    w = L1.domain.weights
    boundary = complex(np.sum(((L1.matrix - L2.matrix) @ f1) * f2 * w))
    dq = u1.potential.values - u2.potential.values
    omega = L1.domain.omega
    vol = complex(np.sum(dq[omega] * u1.field.values[omega] * u2.field.values[omega])
                  * L1.domain.grid.cell_volume)
    return boundary, vol
