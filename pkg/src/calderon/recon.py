"""Reconstruction pipeline: zeta pairs, the boundary integral equation,
scattering samples of the Fourier transform of q, low-pass inversion, and
recovery of the conductivity.

The boundary integral equation (Id + tr S_zeta (Lambda_q - Lambda_0)) f =
e^{x.zeta} is solved in the modulated unknown phi = e^{-x.zeta} f.  In that
frame every intermediate quantity stays O(1) (the exponentials appear only
inside the data matrix products), which keeps the solve usable at large k
where the raw kernel matrix would span an e^{k L}-sized dynamic range.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy.sparse.linalg as spla

from .domain import BoundaryFunction, Domain, check_same_domain
from .errors import (IllConditioned, KTooSmall, NearSingular, ValidationError,
                     ZeroXi)
from .faddeev import KL_GUARD, ZetaOperator, embed_offset, guard_modulation, padded_grid
from .forward import DtnMap, solve_schrodinger_dirichlet
from .grid import ComplexFrequency, Grid, ScalarField

K_MIN_DEFAULT = 4.0
RHO_DEFAULT_FACTOR = 4.0 * np.pi  # rho = 4 pi / L
_REALITY_MARGIN = 1e-6
_PAIR_TOL = 1e-12


# ---------------------------------------------------------------------------
# zeta pairs


@dataclasses.dataclass(frozen=True)
class ZetaPair:
    xi: np.ndarray
    k: float
    zeta1: ComplexFrequency
    zeta2: ComplexFrequency
    alpha: np.ndarray
    beta: np.ndarray


def frame_vectors(xi: np.ndarray, tol: float = 1e-8):
    """Deterministic alpha, beta completing xi/|xi| to an orthonormal triple.

    alpha = normalized(xi x e) with e the first standard basis vector not
    parallel to xi; beta = (xi/|xi|) x alpha.
    """
    xi = np.asarray(xi, dtype=float)
    nxi = np.linalg.norm(xi)
    if nxi == 0:
        raise ZeroXi("xi must be nonzero")
    xhat = xi / nxi
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        cross = np.cross(xi, e)
        if np.linalg.norm(cross) > tol * nxi:
            alpha = cross / np.linalg.norm(cross)
            beta = np.cross(xhat, alpha)
            return alpha, beta
    raise ZeroXi("could not build a frame for xi")  # unreachable for xi != 0


def zeta_from_frame(xi, k: float, alpha, beta):
    """The two complex frequencies of the pairing construction."""
    xi = np.asarray(xi, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    nxi2 = float(np.dot(xi, xi))
    if k * k < 0.5 * nxi2 * (1.0 + _REALITY_MARGIN):
        raise KTooSmall(f"k = {k:.4g} below the reality bound |xi|/sqrt(2) "
                        f"for |xi| = {np.sqrt(nxi2):.4g}")
    c = np.sqrt(k * k / 2.0 - nxi2 / 4.0)
    ka = k / np.sqrt(2.0) * alpha
    z1 = ka + 1j * (-xi / 2.0 + c * beta)
    z2 = -ka + 1j * (-xi / 2.0 - c * beta)
    return ComplexFrequency(z1), ComplexFrequency(z2)


def make_zeta_pair(xi, k: float) -> ZetaPair:
    """Construct the pair with the deterministic frame and verify its algebra."""
    xi = np.asarray(xi, dtype=float)
    alpha, beta = frame_vectors(xi)
    z1, z2 = zeta_from_frame(xi, k, alpha, beta)

    xhat = xi / np.linalg.norm(xi)
    gram = np.abs([np.dot(xhat, alpha), np.dot(xhat, beta), np.dot(alpha, beta),
                   np.dot(alpha, alpha) - 1, np.dot(beta, beta) - 1])
    if np.max(gram) > _PAIR_TOL * 10:
        raise ValidationError("frame vectors lost orthonormality")
    closure = np.max(np.abs(z1.zeta + z2.zeta + 1j * xi))
    if closure > _PAIR_TOL * max(k, 1.0):
        raise ValidationError(f"zeta1 + zeta2 + i xi = {closure:.3e}")
    return ZetaPair(xi, float(k), z1, z2, alpha, beta)


def default_k_schedule(k_min: float = K_MIN_DEFAULT, factor: float = 2.0,
                       box_halfwidth: float = 1.0):
    """k(|xi|) = max(k_min, factor |xi|), capped by the modulation guard."""
    cap = KL_GUARD / box_halfwidth

    def schedule(xi_norm: float) -> float:
        k = max(k_min, factor * xi_norm, xi_norm / np.sqrt(2.0) * (1 + 1e-3))
        return min(k, cap)

    return schedule


# ---------------------------------------------------------------------------
# boundary integral equation


class BieOperator:
    """The modulated operator phi -> phi + G_zeta-layer((dLambda) e-framed phi)."""

    def __init__(self, Lq: DtnMap, L0: DtnMap, zeta: ComplexFrequency,
                 pad_factor: int = 2):
        check_same_domain(Lq, L0)
        domain = Lq.domain
        guard_modulation(zeta, domain.grid)
        self.domain = domain
        self.zeta = zeta
        self.dlambda = Lq.matrix - L0.matrix
        self.op = ZetaOperator(domain.grid, zeta, pad_factor)
        pts = domain.boundary_points
        z = zeta.zeta
        self.emod = np.exp(pts[:, 0] * z[0] + pts[:, 1] * z[1] + pts[:, 2] * z[2])
        o = embed_offset(domain.grid, self.op.pgrid)
        ii = np.unravel_index(domain.boundary_flat, domain.grid.shape)
        self.pidx = (ii[0] + o, ii[1] + o, ii[2] + o)
        self.scale = domain.weights / domain.grid.cell_volume

    @property
    def n(self) -> int:
        return self.domain.n_boundary

    def perturbation(self, phi: np.ndarray) -> np.ndarray:
        v = self.emod * phi
        flux = self.dlambda @ v
        density = np.zeros(self.op.pgrid.shape, dtype=np.complex128)
        density[self.pidx] = (flux / self.emod) * self.scale
        pot = self.op.apply_padded(density)
        return pot[self.pidx]

    def matvec(self, phi: np.ndarray) -> np.ndarray:
        return phi + self.perturbation(phi)

    def norm_estimate(self, iters: int = 6) -> float:
        """Crude spectral-norm estimate of Id + perturbation by power iteration
        on the normal operator with a fixed seed."""
        rng = np.random.default_rng(7)
        x = rng.standard_normal(self.n) + 1j * rng.standard_normal(self.n)
        x /= np.linalg.norm(x)
        s = 1.0
        for _ in range(iters):
            y = self.matvec(x)
            # adjoint-free two-sided estimate: ||A|| >= ||A x||
            s = np.linalg.norm(y)
            x = y / s
        return float(s)


@dataclasses.dataclass(frozen=True)
class BieSolution:
    trace: BoundaryFunction
    residual: float
    iterations: int
    condition_estimate: float


_COND_LIMIT = 1e10


def bie_solve(Lq: DtnMap, L0: DtnMap, zeta: ComplexFrequency,
              rtol: float = 1e-12, maxiter: int = 400,
              pad_factor: int = 2) -> BieSolution:
    """Solve (Id + tr S_zeta (Lambda_q - Lambda_0)) f = e^{x.zeta} on the
    boundary, returning the trace f with solve diagnostics."""
    bie = BieOperator(Lq, L0, zeta, pad_factor)
    n = bie.n
    rhs = np.ones(n, dtype=np.complex128)

    count = {"it": 0}

    def mv(x):
        count["it"] += 1
        return bie.matvec(x)

    A = spla.LinearOperator((n, n), matvec=mv, dtype=np.complex128)
    phi, info = spla.gmres(A, rhs, rtol=rtol, atol=0.0, restart=60,
                           maxiter=maxiter)
    res = float(np.linalg.norm(bie.matvec(phi) - rhs) / np.linalg.norm(rhs))
    if info != 0 and res > 1e-8:
        raise IllConditioned(
            f"BIE solve stalled (info={info}, residual={res:.3e})", cond=np.inf)

    norm_up = bie.norm_estimate()
    cond = norm_up * float(np.linalg.norm(phi) / np.linalg.norm(rhs))
    if cond > _COND_LIMIT:
        raise IllConditioned(f"BIE condition estimate {cond:.3e} above "
                             f"{_COND_LIMIT:.0e}", cond=cond)

    f = BoundaryFunction(bie.domain, bie.emod * phi)
    return BieSolution(f, res, count["it"], cond)


def bie_perturbation_dense(Lq: DtnMap, L0: DtnMap, zeta: ComplexFrequency,
                           pad_factor: int = 2) -> np.ndarray:
    """Assemble tr S_zeta (Lambda_q - Lambda_0) as a dense matrix.

    Used for spectrum diagnostics (compactness shows up as fast singular
    value decay).  Stable only for moderate k L, where the modulation range
    fits comfortably in double precision.
    """
    check_same_domain(Lq, L0)
    domain = Lq.domain
    grid = domain.grid
    guard_modulation(zeta, grid)
    op = ZetaOperator(grid, zeta, pad_factor)
    pgrid = op.pgrid
    n2 = pgrid.n_per_axis

    ph = op.symbols.shift_phases(+1)
    g_d = np.fft.ifftn(op.inv_sym)
    g_d *= ph[:, None, None]
    g_d *= ph[None, :, None]
    g_d *= ph[None, None, :]

    ii = np.unravel_index(domain.boundary_flat, grid.shape)
    idx = np.stack(ii, axis=1)
    pts = domain.boundary_points
    z = zeta.zeta
    row_mod = np.exp(pts[:, 0] * z[0] + pts[:, 1] * z[1] + pts[:, 2] * z[2])

    m = domain.n_boundary
    kernel = np.empty((m, m), dtype=np.complex128)
    for start in range(0, m, 256):
        sl = slice(start, min(start + 256, m))
        dz = idx[sl, None, :] - idx[None, :, :]
        kernel[sl] = g_d[dz[..., 0] % n2, dz[..., 1] % n2, dz[..., 2] % n2]
    kernel *= row_mod[:, None]
    kernel *= (1.0 / row_mod)[None, :]
    kernel *= (domain.weights / grid.cell_volume)[None, :]
    return kernel @ (Lq.matrix - L0.matrix)


# ---------------------------------------------------------------------------
# scattering transform


def scattering_sample(Lq: DtnMap, L0: DtnMap, pair: ZetaPair,
                      f1: BoundaryFunction) -> complex:
    """<(Lambda_q - Lambda_0) f1, e^{x.zeta2}> over the boundary quadrature."""
    check_same_domain(Lq, f1)
    domain = Lq.domain
    pts = domain.boundary_points
    z2 = pair.zeta2.zeta
    e2 = np.exp(pts[:, 0] * z2[0] + pts[:, 1] * z2[1] + pts[:, 2] * z2[2])
    flux = (Lq.matrix - L0.matrix) @ f1.values
    return complex(np.sum(flux * e2 * domain.weights))


@dataclasses.dataclass(frozen=True)
class ScatteringSamples:
    m_index: np.ndarray      # (M, 3) integer dual-lattice offsets
    xi: np.ndarray           # (M, 3) frequencies
    values: np.ndarray       # (M,) complex samples of q-hat
    k_used: np.ndarray       # (M,)
    residuals: np.ndarray    # (M,) BIE residuals
    rho: float
    failures: tuple = ()

    @property
    def count(self) -> int:
        return len(self.values)


def dual_lattice_points(grid: Grid, rho: float):
    """Integer offsets and frequencies with 0 < |xi| <= rho."""
    n, h = grid.n_per_axis, grid.spacing
    freqs = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
    offsets = np.rint(np.fft.fftfreq(n) * n).astype(int)
    mm = np.stack(np.meshgrid(offsets, offsets, offsets, indexing="ij"),
                  axis=-1).reshape(-1, 3)
    xx = np.stack(np.meshgrid(freqs, freqs, freqs, indexing="ij"),
                  axis=-1).reshape(-1, 3)
    norms = np.linalg.norm(xx, axis=1)
    keep = (norms > 0) & (norms <= rho * (1 + 1e-12))
    order = np.lexsort((mm[keep, 2], mm[keep, 1], mm[keep, 0]))
    return mm[keep][order], xx[keep][order]


_WORK = {}


def _pool_init(state):
    _WORK.update(state)


def _xi_task(i):
    xi = _WORK["xi"][i]
    k = _WORK["schedule"](float(np.linalg.norm(xi)))
    try:
        pair = make_zeta_pair(xi, k)
        sol = bie_solve(_WORK["Lq"], _WORK["L0"], pair.zeta1,
                        pad_factor=_WORK["pad"])
        val = scattering_sample(_WORK["Lq"], _WORK["L0"], pair, sol.trace)
        return i, val, k, sol.residual, None
    except Exception as exc:  # recorded, not fatal for the grid
        return i, np.nan + 0j, k, np.nan, f"{type(exc).__name__}: {exc}"


def scattering_grid(Lq: DtnMap, L0: DtnMap, rho: float = None,
                    k_schedule=None, workers: int = 1,
                    pad_factor: int = 2) -> ScatteringSamples:
    """Sample q-hat on the dual lattice ball plus the zero mode.

    Per-frequency failures are recorded in ``failures`` and the sample is
    marked NaN; the zero mode is filled with the mean over the innermost
    sampled shell (the continuity rule).
    """
    check_same_domain(Lq, L0)
    grid = Lq.domain.grid
    if rho is None:
        rho = RHO_DEFAULT_FACTOR / grid.box_halfwidth
    if k_schedule is None:
        k_schedule = default_k_schedule(box_halfwidth=grid.box_halfwidth)

    mm, xx = dual_lattice_points(grid, rho)
    state = {"Lq": Lq, "L0": L0, "xi": xx, "schedule": k_schedule,
             "pad": pad_factor}

    results = [None] * len(xx)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_pool_init,
                                 initargs=(state,)) as pool:
            for out in pool.map(_xi_task, range(len(xx)), chunksize=4):
                results[out[0]] = out
    else:
        _pool_init(state)
        try:
            for i in range(len(xx)):
                results[i] = _xi_task(i)
        finally:
            _WORK.clear()

    values = np.array([r[1] for r in results], dtype=np.complex128)
    ks = np.array([r[2] for r in results])
    residuals = np.array([r[3] for r in results])
    failures = tuple((tuple(mm[r[0]]), r[4]) for r in results if r[4] is not None)

    norms = np.linalg.norm(xx, axis=1)
    ok = ~np.isnan(values)
    shell = np.abs(norms - norms[ok].min()) < 1e-9 * norms[ok].min() if ok.any() else []
    zero_val = complex(np.mean(values[ok & shell])) if ok.any() else 0j

    mm = np.vstack([[[0, 0, 0]], mm])
    xx = np.vstack([[[0.0, 0.0, 0.0]], xx])
    values = np.concatenate([[zero_val], values])
    ks = np.concatenate([[np.nan], ks])
    residuals = np.concatenate([[np.nan], residuals])
    return ScatteringSamples(mm, xx, values, ks, residuals, float(rho), failures)


# ---------------------------------------------------------------------------
# Fourier bookkeeping on the unshifted dual lattice


def _lattice_phase(grid: Grid) -> np.ndarray:
    """Per-axis phase e^{i xi L} aligning the DFT with the continuum
    transform of samples at x_j = -L + j h."""
    freqs = 2.0 * np.pi * np.fft.fftfreq(grid.n_per_axis, d=grid.spacing)
    return np.exp(1j * freqs * grid.box_halfwidth)


def fourier_coeffs(field: ScalarField) -> np.ndarray:
    """C[m] = h^3 sum_j f(x_j) e^{-i xi_m . x_j}, the trapezoid approximation
    of the continuum Fourier transform at the dual lattice point xi_m."""
    grid = field.grid
    ph = _lattice_phase(grid)
    c = np.fft.fftn(field.values.astype(np.complex128)) * grid.cell_volume
    c *= ph[:, None, None]
    c *= ph[None, :, None]
    c *= ph[None, None, :]
    return c


def fourier_synthesis(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse of fourier_coeffs (exact round trip)."""
    ph = _lattice_phase(grid)
    c = coeffs / grid.cell_volume
    c = c / ph[:, None, None]
    c = c / ph[None, :, None]
    c = c / ph[None, None, :]
    return np.fft.ifftn(c)


def lowpass_field(field: ScalarField, rho: float) -> ScalarField:
    """Ideal low-pass of a grid field over the ball |xi| <= rho."""
    grid = field.grid
    freqs = 2.0 * np.pi * np.fft.fftfreq(grid.n_per_axis, d=grid.spacing)
    nn = (freqs ** 2)[:, None, None] + (freqs ** 2)[None, :, None] \
        + (freqs ** 2)[None, None, :]
    mask = nn <= rho * rho * (1 + 1e-12)
    c = fourier_coeffs(field)
    out = fourier_synthesis(np.where(mask, c, 0.0), grid)
    return field.with_values(out.real)


def direct_transform(field: ScalarField, xi) -> np.ndarray:
    """h^3 sum q(x) e^{-i x . xi} for arbitrary frequency rows (oracle-grade
    direct quadrature, no FFT)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    ax = field.grid.axis
    out = np.empty(len(xi), dtype=np.complex128)
    for i, x in enumerate(xi):
        px = np.exp(-1j * ax * x[0])
        py = np.exp(-1j * ax * x[1])
        pz = np.exp(-1j * ax * x[2])
        out[i] = np.einsum("ijk,i,j,k->", field.values, px, py, pz)
    return out * field.grid.cell_volume


def lowpass_invert(samples: ScatteringSamples, grid: Grid):
    """Place the samples on the dual lattice, zero everything outside the
    sampled ball, and invert.  Returns (real field, imag residue)."""
    coeffs = np.zeros(grid.shape, dtype=np.complex128)
    n = grid.n_per_axis
    filled = np.isfinite(samples.values)
    mi = samples.m_index[filled] % n
    coeffs[mi[:, 0], mi[:, 1], mi[:, 2]] = samples.values[filled]
    out = fourier_synthesis(coeffs, grid)
    scale = float(np.linalg.norm(out.real))
    residue = float(np.linalg.norm(out.imag) / scale) if scale > 0 else 0.0
    return ScalarField(grid, out.real, kind="potential"), residue


def recover_gamma(q_rec: ScalarField, domain: Domain,
                  ellipticity_c: float = 0.2):
    """gamma = u^2 for the solution of (-lap + q) u = 0, u = 1 on the
    boundary; clamped into the ellipticity window with clamps counted."""
    ones = BoundaryFunction(domain, np.ones(domain.n_boundary))
    sol = solve_schrodinger_dirichlet(q_rec, ones)
    u = sol.field.values.real
    gamma = np.ones(domain.grid.shape)
    gamma[domain.omega] = u[domain.omega] ** 2
    lo, hi = ellipticity_c, 1.0 / ellipticity_c
    clamped = int(np.sum((gamma < lo) | (gamma > hi)))
    gamma = np.clip(gamma, lo, hi)
    return ScalarField(domain.grid, gamma, kind="conductivity"), clamped
