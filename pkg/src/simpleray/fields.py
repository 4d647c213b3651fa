"""Coefficient fields on the extended disk.

The objects here represent the data of a wave operator

    P = -(1/sqrt(det g)) (-d_j + i b_j) g^{ij} sqrt(det g) (-d_i + i b_i) + q

on the closed unit disk Omega, extended analytically to a slightly larger
disk Omega_1.  All fields are real valued and evaluate on arrays of points
of shape (..., 2); derivatives follow the index conventions

    metric.eval  -> (..., i, j)         g_ij
    metric.grad  -> (..., k, i, j)      d_k g_ij
    metric.hess  -> (..., k, l, i, j)   d_k d_l g_ij
    covector.eval -> (..., j)           b_j
    covector.jac  -> (..., k, j)        d_k b_j
    scalar.grad   -> (..., j)
    scalar.hess   -> (..., i, j)

Field objects are immutable after construction and safe to evaluate
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

__all__ = [
    "Domain",
    "MetricField",
    "ConstantMetric",
    "ConformalMetric",
    "TrigPerturbMetric",
    "GridMetricField",
    "CovectorField",
    "ScalarField",
    "CoefficientTriple",
    "CartesianGrid",
    "metric_from_spec",
    "covector_from_spec",
    "scalar_from_spec",
    "triple_from_specs",
    "laplace_beltrami",
    "derived_BQ",
    "apply_P",
]


# ---------------------------------------------------------------------------
# domain

@dataclass(frozen=True)
class Domain:
    """Unit disk Omega with analytic extension disk Omega_1.

    The boundary is parametrized by the Euclidean angle alpha; this fixed
    parametrization also serves as the global boundary coordinate for all
    probes and charts.
    """

    boundary_radius: float = 1.0
    extended_radius: float = 1.15

    def __post_init__(self):
        if not self.extended_radius > self.boundary_radius:
            raise ValueError("extended_radius must exceed boundary_radius")

    def boundary_point(self, alpha, radius=None):
        r = self.boundary_radius if radius is None else radius
        alpha = np.asarray(alpha, dtype=float)
        return np.stack([r * np.cos(alpha), r * np.sin(alpha)], axis=-1)

    def boundary_tangent(self, alpha, radius=None):
        """d(boundary_point)/d(alpha), not normalized."""
        r = self.boundary_radius if radius is None else radius
        alpha = np.asarray(alpha, dtype=float)
        return np.stack([-r * np.sin(alpha), r * np.cos(alpha)], axis=-1)

    def contains(self, pts, extended=True):
        r = self.extended_radius if extended else self.boundary_radius
        pts = np.asarray(pts, dtype=float)
        return np.hypot(pts[..., 0], pts[..., 1]) <= r + 1e-12

    def conormal(self, g, alpha, radius=None):
        """Outward unit conormal covector nu at boundary_point(alpha).

        Normalized so that g^{ij} nu_i nu_j = 1.  For the circle the radial
        direction dr is already conormal in any metric whose boundary is the
        circle; unit-normalizing it in g^{-1} gives nu.
        """
        p = self.boundary_point(alpha, radius)
        raw = p / np.linalg.norm(p, axis=-1, keepdims=True)  # dr direction
        gi = g.inv(p)
        nrm = np.sqrt(np.einsum("...ij,...i,...j->...", gi, raw, raw))
        return raw / nrm[..., None]


# ---------------------------------------------------------------------------
# metric fields

class MetricField:
    """Symmetric positive-definite 2x2 tensor field with two derivatives."""

    #: metadata: declared smoothness order and C^k bound (informational)
    smoothness_order = 8
    bound_A = None
    registry_id = "custom"

    def eval(self, pts):
        raise NotImplementedError

    def grad(self, pts):
        raise NotImplementedError

    def hess(self, pts):
        raise NotImplementedError

    # derived quantities -----------------------------------------------------

    def det(self, pts):
        G = self.eval(pts)
        return G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]

    def sqrt_det(self, pts):
        return np.sqrt(self.det(pts))

    def inv(self, pts):
        G = self.eval(pts)
        det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
        Gi = np.empty_like(G)
        Gi[..., 0, 0] = G[..., 1, 1]
        Gi[..., 1, 1] = G[..., 0, 0]
        Gi[..., 0, 1] = -G[..., 0, 1]
        Gi[..., 1, 0] = -G[..., 1, 0]
        return Gi / det[..., None, None]

    def inv_grad(self, pts):
        """d_k g^{ij} = -g^{ia} (d_k g_ab) g^{bj}."""
        Gi = self.inv(pts)
        dG = self.grad(pts)
        return -np.matmul(np.matmul(Gi[..., None, :, :], dG), Gi[..., None, :, :])

    def inv_hess(self, pts):
        """d_k d_l g^{ij} from grad and hess of g."""
        Gi = self.inv(pts)
        dG = self.grad(pts)
        d2G = self.hess(pts)
        dGi = -np.matmul(np.matmul(Gi[..., None, :, :], dG), Gi[..., None, :, :])
        GiN = Gi[..., None, None, :, :]
        t1 = np.matmul(np.matmul(dGi[..., :, None, :, :], dG[..., None, :, :, :]), GiN)
        t2 = np.matmul(np.matmul(GiN, d2G), GiN)
        t3 = np.matmul(dG[..., None, :, :, :],
                       np.matmul(GiN, dGi[..., :, None, :, :]))
        return -(t1 + t2 + t3)

    def flow_data(self, pts, need_hess=False):
        """(g^{-1}, d g^{-1}, optionally d^2 g^{-1}) for the Hamiltonian flow."""
        return (self.inv(pts), self.inv_grad(pts),
                self.inv_hess(pts) if need_hess else None)

    def dlog_sqrt_det(self, pts):
        """d_k log sqrt(det g) = (1/2) tr(g^{-1} d_k g)."""
        Gi = self.inv(pts)
        dG = self.grad(pts)
        return 0.5 * np.einsum("...ij,...kji->...k", Gi, dG)

    def christoffel(self, pts):
        """Gamma^k_{ij}, shape (..., k, i, j)."""
        Gi = self.inv(pts)
        dG = self.grad(pts)
        # dG[..., p, i, j] = d_p g_ij
        sym = (np.einsum("...ilj->...lij", dG)
               + np.einsum("...jli->...lij", dG)
               - np.einsum("...lij->...lij", dG))
        return 0.5 * np.einsum("...kl,...lij->...kij", Gi, sym)

    def norm_cov(self, pts, w):
        """|w|_g for covectors w of shape (..., 2)."""
        Gi = self.inv(pts)
        return np.sqrt(np.einsum("...ij,...i,...j->...", Gi, w, w))

    def norm_vec(self, pts, v):
        G = self.eval(pts)
        return np.sqrt(np.einsum("...ij,...i,...j->...", G, v, v))

    def min_eigenvalue(self, pts):
        G = self.eval(pts)
        tr = G[..., 0, 0] + G[..., 1, 1]
        det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] ** 2
        disc = np.sqrt(np.maximum(tr * tr / 4 - det, 0.0))
        return tr / 2 - disc


class ConstantMetric(MetricField):
    """g_ij constant; "euclid" is the identity."""

    def __init__(self, matrix=None, registry_id="euclid"):
        self.matrix = np.eye(2) if matrix is None else np.asarray(matrix, float)
        self.registry_id = registry_id

    def eval(self, pts):
        pts = np.asarray(pts, float)
        return np.broadcast_to(self.matrix, pts.shape[:-1] + (2, 2)).copy()

    def grad(self, pts):
        pts = np.asarray(pts, float)
        return np.zeros(pts.shape[:-1] + (2, 2, 2))

    def hess(self, pts):
        pts = np.asarray(pts, float)
        return np.zeros(pts.shape[:-1] + (2, 2, 2, 2))


class ConformalMetric(MetricField):
    """g = c(x)^2 delta_ij with c(x) = base + amp * exp(-|x|^2 / width).

    amp = 0 gives a constant conformal metric c^2 * I.  The registry ids
    "gauss1" (amp 0.3, width 0.2) and "trap" (amp 0.9, width 0.2) are
    instances; the latter has conjugate points inside the unit disk.
    """

    def __init__(self, base=1.0, amp=0.0, width=0.2, registry_id=None):
        self.base = float(base)
        self.amp = float(amp)
        self.width = float(width)
        if registry_id is None:
            registry_id = f"bump:{amp},{width}" if amp else f"conformal:{base}"
        self.registry_id = registry_id

    def _c(self, pts):
        pts = np.asarray(pts, float)
        r2 = pts[..., 0] ** 2 + pts[..., 1] ** 2
        e = np.exp(-r2 / self.width)
        c = self.base + self.amp * e
        dc = (-2.0 / self.width) * self.amp * e  # dc/dx_k = dc * x_k
        # d^2 c / dx_k dx_l = h2 * x_k x_l + dc * delta_kl
        h2 = (4.0 / self.width**2) * self.amp * e
        return c, dc, h2

    def conformal_factor(self, pts):
        return self._c(pts)[0]

    def eval(self, pts):
        pts = np.asarray(pts, float)
        c, _, _ = self._c(pts)
        out = np.zeros(pts.shape[:-1] + (2, 2))
        out[..., 0, 0] = c * c
        out[..., 1, 1] = c * c
        return out

    def grad(self, pts):
        pts = np.asarray(pts, float)
        c, dc, _ = self._c(pts)
        dck = dc[..., None] * pts  # (..., k)
        out = np.zeros(pts.shape[:-1] + (2, 2, 2))
        d = 2 * c[..., None] * dck  # d_k (c^2)
        out[..., :, 0, 0] = d
        out[..., :, 1, 1] = d
        return out

    def hess(self, pts):
        pts = np.asarray(pts, float)
        c, dc, h2 = self._c(pts)
        dck = dc[..., None] * pts
        eye = np.eye(2)
        d2c = (h2[..., None, None] * pts[..., :, None] * pts[..., None, :]
               + dc[..., None, None] * eye)
        # d_k d_l c^2 = 2 (dc_k dc_l + c d2c_kl)
        d2 = 2 * (dck[..., :, None] * dck[..., None, :]
                  + c[..., None, None] * d2c)
        out = np.zeros(pts.shape[:-1] + (2, 2, 2, 2))
        out[..., :, :, 0, 0] = d2
        out[..., :, :, 1, 1] = d2
        return out

    def inv(self, pts):
        pts = np.asarray(pts, float)
        c, _, _ = self._c(pts)
        out = np.zeros(pts.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0 / (c * c)
        out[..., 1, 1] = 1.0 / (c * c)
        return out


class TrigPerturbMetric(MetricField):
    """euclid + eps * (smooth random trigonometric symmetric tensor).

    Deterministic in (seed, eps); the perturbation is a fixed sum of low
    wavenumber trig modes with coefficients drawn once at construction and
    normalized so the C^0 size of the perturbation is about eps.
    """

    n_modes = 6

    def __init__(self, seed=0, eps=0.01):
        self.seed = int(seed)
        self.eps = float(eps)
        self.registry_id = f"perturb:{seed},{eps}"
        rng = np.random.default_rng(self.seed)
        self.wavevecs = rng.integers(-2, 3, size=(self.n_modes, 2)).astype(float)
        self.wavevecs[np.all(self.wavevecs == 0, axis=1)] = [1.0, 1.0]
        self.phases = rng.uniform(0, 2 * np.pi, size=self.n_modes)
        coef = rng.normal(size=(self.n_modes, 2, 2))
        coef = 0.5 * (coef + np.swapaxes(coef, -1, -2))
        self.coef = coef / self.n_modes

    def _modes(self, pts, order):
        pts = np.asarray(pts, float)
        ph = np.einsum("mk,...k->...m", self.wavevecs, pts) + self.phases
        if order == 0:
            return np.sin(ph)
        if order == 1:
            return np.cos(ph)[..., None] * self.wavevecs  # (..., m, k)
        cs = -np.sin(ph)
        return (cs[..., None, None]
                * self.wavevecs[:, :, None] * self.wavevecs[:, None, :])

    def eval(self, pts):
        s = self._modes(pts, 0)
        pert = np.einsum("...m,mij->...ij", s, self.coef)
        return np.eye(2) + self.eps * pert

    def grad(self, pts):
        d = self._modes(pts, 1)
        return self.eps * np.einsum("...mk,mij->...kij", d, self.coef)

    def hess(self, pts):
        d2 = self._modes(pts, 2)
        return self.eps * np.einsum("...mkl,mij->...klij", d2, self.coef)


class GridMetricField(MetricField):
    """Metric sampled on a uniform grid, bicubic spline interpolated."""

    def __init__(self, xs, ys, comps, registry_id="grid"):
        # comps: array (3, nx, ny) with g11, g12, g22 sampled at xs x ys
        self.xs = np.asarray(xs, float)
        self.ys = np.asarray(ys, float)
        self.comps = np.asarray(comps, float)
        self.registry_id = registry_id
        self._spl = [RectBivariateSpline(self.xs, self.ys, c, kx=3, ky=3)
                     for c in self.comps]

    def _stack(self, pts, dx, dy):
        pts = np.asarray(pts, float)
        x = pts[..., 0].ravel()
        y = pts[..., 1].ravel()
        vals = [s(x, y, dx=dx, dy=dy, grid=False) for s in self._spl]
        out = np.empty(pts.shape[:-1] + (2, 2))
        v11, v12, v22 = [v.reshape(pts.shape[:-1]) for v in vals]
        out[..., 0, 0] = v11
        out[..., 0, 1] = v12
        out[..., 1, 0] = v12
        out[..., 1, 1] = v22
        return out

    def eval(self, pts):
        return self._stack(pts, 0, 0)

    def grad(self, pts):
        pts = np.asarray(pts, float)
        out = np.empty(pts.shape[:-1] + (2, 2, 2))
        out[..., 0, :, :] = self._stack(pts, 1, 0)
        out[..., 1, :, :] = self._stack(pts, 0, 1)
        return out

    def hess(self, pts):
        pts = np.asarray(pts, float)
        out = np.empty(pts.shape[:-1] + (2, 2, 2, 2))
        out[..., 0, 0, :, :] = self._stack(pts, 2, 0)
        out[..., 0, 1, :, :] = self._stack(pts, 1, 1)
        out[..., 1, 0, :, :] = out[..., 0, 1, :, :]
        out[..., 1, 1, :, :] = self._stack(pts, 0, 2)
        return out

    @classmethod
    def from_metric(cls, g, bbox=(-1.2, 1.2, -1.2, 1.2), n=257):
        xs = np.linspace(bbox[0], bbox[1], n)
        ys = np.linspace(bbox[2], bbox[3], n)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([X, Y], axis=-1)
        G = g.eval(pts)
        comps = np.stack([G[..., 0, 0], G[..., 0, 1], G[..., 1, 1]])
        return cls(xs, ys, comps, registry_id=f"grid({g.registry_id})")


# ---------------------------------------------------------------------------
# covector and scalar fields

class CovectorField:
    registry_id = "custom"

    def eval(self, pts):
        raise NotImplementedError

    def jac(self, pts):
        raise NotImplementedError

    def sharp(self, g, pts):
        """(b^#)^j = g^{ij} b_i."""
        return np.einsum("...ij,...i->...j", g.inv(pts), self.eval(pts))

    def norm_g(self, g, pts):
        b = self.eval(pts)
        return np.sqrt(np.einsum("...ij,...i,...j->...", g.inv(pts), b, b))


class ZeroCovector(CovectorField):
    registry_id = "zero"

    def eval(self, pts):
        pts = np.asarray(pts, float)
        return np.zeros(pts.shape)

    def jac(self, pts):
        pts = np.asarray(pts, float)
        return np.zeros(pts.shape[:-1] + (2, 2))


class ConstantCovector(CovectorField):
    def __init__(self, comps, registry_id=None):
        self.comps = np.asarray(comps, float)
        self.registry_id = registry_id or f"const:{comps[0]},{comps[1]}"

    def eval(self, pts):
        pts = np.asarray(pts, float)
        return np.broadcast_to(self.comps, pts.shape).copy()

    def jac(self, pts):
        pts = np.asarray(pts, float)
        return np.zeros(pts.shape[:-1] + (2, 2))


class XYCovector(CovectorField):
    """b = (x*y, 0), the analytic example field for divergence checks."""

    registry_id = "xy"

    def eval(self, pts):
        pts = np.asarray(pts, float)
        out = np.zeros(pts.shape)
        out[..., 0] = pts[..., 0] * pts[..., 1]
        return out

    def jac(self, pts):
        pts = np.asarray(pts, float)
        out = np.zeros(pts.shape[:-1] + (2, 2))
        out[..., 0, 0] = pts[..., 1]   # d_x b_1
        out[..., 1, 0] = pts[..., 0]   # d_y b_1
        return out


class GaussCovector(CovectorField):
    """b_j = a_j * exp(-|x - x0|^2 / (2 sigma^2))."""

    def __init__(self, center, sigma, comps, registry_id=None):
        self.center = np.asarray(center, float)
        self.sigma = float(sigma)
        self.comps = np.asarray(comps, float)
        self.registry_id = registry_id or (
            f"gbump:{center[0]},{center[1]},{sigma},{comps[0]},{comps[1]}")

    def _env(self, pts):
        pts = np.asarray(pts, float)
        d = pts - self.center
        r2 = d[..., 0] ** 2 + d[..., 1] ** 2
        e = np.exp(-r2 / (2 * self.sigma**2))
        return e, d

    def eval(self, pts):
        e, _ = self._env(pts)
        return e[..., None] * self.comps

    def jac(self, pts):
        e, d = self._env(pts)
        de = -(d / self.sigma**2) * e[..., None]      # (..., k)
        return de[..., :, None] * self.comps          # (..., k, j)


class PolyBumpCovector(CovectorField):
    """Compactly supported bump, b = a * (1 - rho^2/R^2)^4 inside rho < R.

    C^3 across the support edge and exactly zero outside, which makes it a
    legitimate test field "vanishing on the boundary" for ray quadratures.
    """

    def __init__(self, center, radius, comps, registry_id=None):
        self.center = np.asarray(center, float)
        self.radius = float(radius)
        self.comps = np.asarray(comps, float)
        self.registry_id = registry_id or (
            f"pbump:{center[0]},{center[1]},{radius},{comps[0]},{comps[1]}")

    def _env(self, pts):
        pts = np.asarray(pts, float)
        d = pts - self.center
        t = (d[..., 0] ** 2 + d[..., 1] ** 2) / self.radius**2
        inside = t < 1.0
        s = np.where(inside, 1.0 - t, 0.0)
        env = s**4
        denv_dt = np.where(inside, -4.0 * s**3, 0.0)
        return env, denv_dt, d

    def eval(self, pts):
        env, _, _ = self._env(pts)
        return env[..., None] * self.comps

    def jac(self, pts):
        _, denv_dt, d = self._env(pts)
        dt = 2.0 * d / self.radius**2
        de = denv_dt[..., None] * dt
        return de[..., :, None] * self.comps


class ExactDifferential(CovectorField):
    """b = d(theta) for a scalar field theta; a gauge-kernel element."""

    def __init__(self, theta, registry_id=None):
        self.theta = theta
        self.registry_id = registry_id or f"d({theta.registry_id})"

    def eval(self, pts):
        return self.theta.grad(pts)

    def jac(self, pts):
        return self.theta.hess(pts)


class GridCovectorField(CovectorField):
    def __init__(self, xs, ys, comps, registry_id="grid"):
        self.xs = np.asarray(xs, float)
        self.ys = np.asarray(ys, float)
        self.comps = np.asarray(comps, float)
        self.registry_id = registry_id
        self._spl = [RectBivariateSpline(self.xs, self.ys, c, kx=3, ky=3)
                     for c in self.comps]

    def _comp(self, pts, dx, dy):
        pts = np.asarray(pts, float)
        x = pts[..., 0].ravel()
        y = pts[..., 1].ravel()
        vals = [s(x, y, dx=dx, dy=dy, grid=False).reshape(pts.shape[:-1])
                for s in self._spl]
        return np.stack(vals, axis=-1)

    def eval(self, pts):
        return self._comp(pts, 0, 0)

    def jac(self, pts):
        pts = np.asarray(pts, float)
        out = np.empty(pts.shape[:-1] + (2, 2))
        out[..., 0, :] = self._comp(pts, 1, 0)
        out[..., 1, :] = self._comp(pts, 0, 1)
        return out


class ScalarField:
    registry_id = "custom"

    def eval(self, pts):
        raise NotImplementedError

    def grad(self, pts):
        raise NotImplementedError

    def hess(self, pts):
        pts = np.asarray(pts, float)
        h = 1e-5
        out = np.empty(pts.shape[:-1] + (2, 2))
        for k in range(2):
            dp = np.zeros(2)
            dp[k] = h
            out[..., k, :] = (self.grad(pts + dp) - self.grad(pts - dp)) / (2 * h)
        return out


class ZeroScalar(ScalarField):
    registry_id = "zero"

    def eval(self, pts):
        pts = np.asarray(pts, float)
        return np.zeros(pts.shape[:-1])

    def grad(self, pts):
        pts = np.asarray(pts, float)
        return np.zeros(pts.shape)

    def hess(self, pts):
        pts = np.asarray(pts, float)
        return np.zeros(pts.shape[:-1] + (2, 2))


class ConstantScalar(ScalarField):
    def __init__(self, value, registry_id=None):
        self.value = float(value)
        self.registry_id = registry_id or f"const:{value}"

    def eval(self, pts):
        pts = np.asarray(pts, float)
        return np.full(pts.shape[:-1], self.value)

    def grad(self, pts):
        pts = np.asarray(pts, float)
        return np.zeros(pts.shape)

    def hess(self, pts):
        pts = np.asarray(pts, float)
        return np.zeros(pts.shape[:-1] + (2, 2))


class QuadraticScalar(ScalarField):
    """u = sum_ij A_ij x_i x_j + c.  Exact test function for Laplacians."""

    def __init__(self, A, c=0.0, registry_id="quad"):
        self.A = np.asarray(A, float)
        self.c = float(c)
        self.registry_id = registry_id

    def eval(self, pts):
        pts = np.asarray(pts, float)
        return np.einsum("ij,...i,...j->...", self.A, pts, pts) + self.c

    def grad(self, pts):
        pts = np.asarray(pts, float)
        return 2 * np.einsum("ij,...j->...i", self.A, pts)

    def hess(self, pts):
        pts = np.asarray(pts, float)
        return np.broadcast_to(2 * self.A, pts.shape[:-1] + (2, 2)).copy()


class LinearScalar(ScalarField):
    """u = a . x + c."""

    def __init__(self, a, c=0.0, registry_id="lin"):
        self.a = np.asarray(a, float)
        self.c = float(c)
        self.registry_id = registry_id

    def eval(self, pts):
        pts = np.asarray(pts, float)
        return pts @ self.a + self.c

    def grad(self, pts):
        pts = np.asarray(pts, float)
        return np.broadcast_to(self.a, pts.shape).copy()

    def hess(self, pts):
        pts = np.asarray(pts, float)
        return np.zeros(pts.shape[:-1] + (2, 2))


class GaussScalar(ScalarField):
    def __init__(self, center, sigma, amp, registry_id=None):
        self.center = np.asarray(center, float)
        self.sigma = float(sigma)
        self.amp = float(amp)
        self.registry_id = registry_id or (
            f"gbump:{center[0]},{center[1]},{sigma},{amp}")

    def eval(self, pts):
        pts = np.asarray(pts, float)
        d = pts - self.center
        r2 = d[..., 0] ** 2 + d[..., 1] ** 2
        return self.amp * np.exp(-r2 / (2 * self.sigma**2))

    def grad(self, pts):
        pts = np.asarray(pts, float)
        d = pts - self.center
        return -(d / self.sigma**2) * self.eval(pts)[..., None]

    def hess(self, pts):
        pts = np.asarray(pts, float)
        d = pts - self.center
        e = self.eval(pts)
        outer = d[..., :, None] * d[..., None, :] / self.sigma**4
        return e[..., None, None] * (outer - np.eye(2) / self.sigma**2)


class PolyBumpScalar(ScalarField):
    """amp * (1 - rho^2/R^2)^4 inside rho < R, zero outside."""

    def __init__(self, center, radius, amp, registry_id=None):
        self.center = np.asarray(center, float)
        self.radius = float(radius)
        self.amp = float(amp)
        self.registry_id = registry_id or (
            f"pbump:{center[0]},{center[1]},{radius},{amp}")

    def eval(self, pts):
        pts = np.asarray(pts, float)
        d = pts - self.center
        t = (d[..., 0] ** 2 + d[..., 1] ** 2) / self.radius**2
        s = np.where(t < 1.0, 1.0 - t, 0.0)
        return self.amp * s**4

    def grad(self, pts):
        pts = np.asarray(pts, float)
        d = pts - self.center
        t = (d[..., 0] ** 2 + d[..., 1] ** 2) / self.radius**2
        s = np.where(t < 1.0, 1.0 - t, 0.0)
        fac = self.amp * (-4.0) * s**3 * (2.0 / self.radius**2)
        return fac[..., None] * d

    def hess(self, pts):
        pts = np.asarray(pts, float)
        d = pts - self.center
        t = (d[..., 0] ** 2 + d[..., 1] ** 2) / self.radius**2
        s = np.where(t < 1.0, 1.0 - t, 0.0)
        c2 = 2.0 / self.radius**2
        outer = d[..., :, None] * d[..., None, :]
        h = (12.0 * s**2)[..., None, None] * (c2**2) * outer \
            + (-4.0 * s**3 * c2)[..., None, None] * np.eye(2)
        return self.amp * h


class GridScalarField(ScalarField):
    def __init__(self, xs, ys, vals, registry_id="grid"):
        self.xs = np.asarray(xs, float)
        self.ys = np.asarray(ys, float)
        self.vals = np.asarray(vals, float)
        self.registry_id = registry_id
        self._spl = RectBivariateSpline(self.xs, self.ys, self.vals, kx=3, ky=3)

    def _ev(self, pts, dx, dy):
        pts = np.asarray(pts, float)
        return self._spl(pts[..., 0].ravel(), pts[..., 1].ravel(),
                         dx=dx, dy=dy, grid=False).reshape(pts.shape[:-1])

    def eval(self, pts):
        return self._ev(pts, 0, 0)

    def grad(self, pts):
        pts = np.asarray(pts, float)
        return np.stack([self._ev(pts, 1, 0), self._ev(pts, 0, 1)], axis=-1)

    def hess(self, pts):
        pts = np.asarray(pts, float)
        out = np.empty(pts.shape[:-1] + (2, 2))
        out[..., 0, 0] = self._ev(pts, 2, 0)
        out[..., 0, 1] = self._ev(pts, 1, 1)
        out[..., 1, 0] = out[..., 0, 1]
        out[..., 1, 1] = self._ev(pts, 0, 2)
        return out


# ---------------------------------------------------------------------------
# coefficient triple

@dataclass(frozen=True)
class CoefficientTriple:
    g: MetricField
    b: CovectorField
    q: ScalarField
    domain: Domain = field(default_factory=Domain)
    meta: dict = field(default_factory=dict)

    @property
    def ids(self):
        return (self.g.registry_id, self.b.registry_id, self.q.registry_id)

    def validate(self, n_sample=800, seed=0):
        """Check SPD of g and finiteness of b, q over Omega_1 samples."""
        rng = np.random.default_rng(seed)
        r = self.domain.extended_radius * np.sqrt(rng.uniform(0, 1, n_sample))
        th = rng.uniform(0, 2 * np.pi, n_sample)
        pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
        lam = self.g.min_eigenvalue(pts)
        G = self.g.eval(pts)
        Gi = self.g.inv(pts)
        resid = np.einsum("...ij,...jk->...ik", Gi, G) - np.eye(2)
        ok = (lam.min() > 0
              and np.max(np.abs(resid)) < 1e-12
              and np.all(np.isfinite(self.b.eval(pts)))
              and np.all(np.isfinite(self.q.eval(pts))))
        return bool(ok), {"min_eig": float(lam.min()),
                          "inv_resid": float(np.max(np.abs(resid)))}


# ---------------------------------------------------------------------------
# registry parsing

def _args(spec):
    if ":" not in spec:
        return spec, []
    name, rest = spec.split(":", 1)
    return name, [float(tok) for tok in rest.split(",") if tok]


def metric_from_spec(spec, loader=None):
    """Build a metric from a registry id such as "gauss1" or "perturb:7,0.01".

    A spec of the form "grid:<path>" defers to ``loader`` (see simpleray.io).
    """
    name, args = _args(spec)
    if name == "euclid":
        return ConstantMetric()
    if name == "conformal":
        c = args[0] if args else 1.0
        return ConformalMetric(base=c, amp=0.0, registry_id=spec)
    if name == "gauss1":
        return ConformalMetric(base=1.0, amp=0.3, width=0.2, registry_id="gauss1")
    if name == "trap":
        amp = args[0] if args else 0.9
        return ConformalMetric(base=1.0, amp=amp, width=0.2, registry_id=spec)
    if name == "bump":
        amp, width = (args + [0.2])[:2]
        return ConformalMetric(base=1.0, amp=amp, width=width, registry_id=spec)
    if name == "perturb":
        seed, eps = (args + [0.01])[:2]
        return TrigPerturbMetric(seed=int(seed), eps=eps)
    if name == "grid":
        if loader is None:
            raise ValueError("grid metric spec needs a loader")
        return loader(spec.split(":", 1)[1], kind="metric")
    raise ValueError(f"unknown metric registry id: {spec}")


def covector_from_spec(spec, loader=None):
    name, args = _args(spec)
    if name == "zero":
        return ZeroCovector()
    if name == "const":
        return ConstantCovector(args[:2], registry_id=spec)
    if name == "xy":
        return XYCovector()
    if name == "gbump":
        cx, cy, sig, a1, a2 = (args + [0.0] * 5)[:5]
        return GaussCovector((cx, cy), sig, (a1, a2), registry_id=spec)
    if name == "pbump":
        cx, cy, rad, a1, a2 = (args + [0.0] * 5)[:5]
        return PolyBumpCovector((cx, cy), rad, (a1, a2), registry_id=spec)
    if name == "dbump":
        cx, cy, rad, amp = (args + [0.0] * 4)[:4]
        return ExactDifferential(PolyBumpScalar((cx, cy), rad, amp),
                                 registry_id=spec)
    if name == "grid":
        if loader is None:
            raise ValueError("grid covector spec needs a loader")
        return loader(spec.split(":", 1)[1], kind="covector")
    raise ValueError(f"unknown covector registry id: {spec}")


def scalar_from_spec(spec, loader=None):
    name, args = _args(spec)
    if name == "zero":
        return ZeroScalar()
    if name == "const":
        return ConstantScalar(args[0], registry_id=spec)
    if name == "gbump":
        cx, cy, sig, amp = (args + [0.0] * 4)[:4]
        return GaussScalar((cx, cy), sig, amp, registry_id=spec)
    if name == "pbump":
        cx, cy, rad, amp = (args + [0.0] * 4)[:4]
        return PolyBumpScalar((cx, cy), rad, amp, registry_id=spec)
    if name == "grid":
        if loader is None:
            raise ValueError("grid scalar spec needs a loader")
        return loader(spec.split(":", 1)[1], kind="scalar")
    raise ValueError(f"unknown scalar registry id: {spec}")


def triple_from_specs(metric="euclid", covector="zero", potential="zero",
                      domain=None, loader=None):
    return CoefficientTriple(
        g=metric_from_spec(metric, loader),
        b=covector_from_spec(covector, loader),
        q=scalar_from_spec(potential, loader),
        domain=domain or Domain(),
    )


# ---------------------------------------------------------------------------
# pointwise operators

def laplace_beltrami(g, u, x, domain=None):
    """Laplace-Beltrami of a scalar field at points x.

    Delta_g u = g^{jk} d_j d_k u + [d_j g^{jk} + g^{jk} d_j log sqrt(det g)] d_k u
    """
    x = np.asarray(x, float)
    if domain is not None and not np.all(domain.contains(x)):
        raise ValueError("point outside the extended domain")
    Gi = g.inv(x)
    dGi = g.inv_grad(x)
    dls = g.dlog_sqrt_det(x)
    grad_u = u.grad(x)
    hess_u = u.hess(x)
    term2 = np.einsum("...jk,...jk->...", Gi, hess_u)
    drift = np.einsum("...jjk->...k", dGi) + np.einsum("...jk,...j->...k", Gi, dls)
    return term2 + np.einsum("...k,...k->...", drift, grad_u)


def riemannian_divergence(g, vec_sharp, dvec_sharp, x):
    """Div V = (1/sqrt(det g)) d_j (sqrt(det g) V^j) for vector components V^j.

    dvec_sharp[..., k, j] = d_k V^j.
    """
    dls = g.dlog_sqrt_det(x)
    return (np.einsum("...jj->...", dvec_sharp)
            + np.einsum("...j,...j->...", dls, vec_sharp))


def covector_sharp_jac(g, b, x):
    """d_k (b^#)^j for a covector field b."""
    Gi = g.inv(x)
    dGi = g.inv_grad(x)
    bv = b.eval(x)
    db = b.jac(x)
    return (np.einsum("...kij,...i->...kj", dGi, bv)
            + np.einsum("...ij,...ki->...kj", Gi, db))


def derived_BQ(triple, x):
    """First-order form coefficients: P = -Delta_g + B + Q.

    Returns (two_b_sharp, Q_re, Q_im) where B = i * two_b_sharp (so the
    vector returned is the imaginary part 2 b^#), Q_re = q + |b|_g^2 and
    Q_im = Div b^#.
    """
    x = np.asarray(x, float)
    g, b, q = triple.g, triple.b, triple.q
    bs = b.sharp(g, x)
    dbs = covector_sharp_jac(g, b, x)
    div = riemannian_divergence(g, bs, dbs, x)
    bb = np.einsum("...ij,...i,...j->...", g.inv(x), b.eval(x), b.eval(x))
    return 2.0 * bs, q.eval(x) + bb, div


# ---------------------------------------------------------------------------
# Cartesian grid operator

@dataclass(frozen=True)
class CartesianGrid:
    """Uniform Cartesian grid with two ghost layers on each side.

    Interior nodes are ``nx`` x ``ny`` over the bbox; arrays passed to
    apply_P have shape (nx + 4, ny + 4).
    """

    nx: int
    ny: int
    bbox: tuple = (-1.15, 1.15, -1.15, 1.15)

    @property
    def hx(self):
        return (self.bbox[1] - self.bbox[0]) / (self.nx - 1)

    @property
    def hy(self):
        return (self.bbox[3] - self.bbox[2]) / (self.ny - 1)

    def axes(self, ghost=False):
        pad = 2 if ghost else 0
        xs = self.bbox[0] + self.hx * np.arange(-pad, self.nx + pad)
        ys = self.bbox[2] + self.hy * np.arange(-pad, self.ny + pad)
        return xs, ys

    def points(self, ghost=False):
        xs, ys = self.axes(ghost)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def pad(self, u):
        """Embed an interior array into a ghosted array (ghosts zero)."""
        out = np.zeros((self.nx + 4, self.ny + 4), dtype=np.result_type(u, 0.0))
        out[2:-2, 2:-2] = u
        return out

    def sample(self, fieldfunc, ghost=True):
        return fieldfunc(self.points(ghost))

    def disk_mask(self, radius, ghost=False):
        p = self.points(ghost)
        return np.hypot(p[..., 0], p[..., 1]) < radius


def apply_P(triple, u, grid):
    """Apply the second-order discretization of P(x,D) to a ghosted grid field.

    u has shape (nx+4, ny+4); the result is on the interior (nx, ny).  The
    scheme is the conservative flux form for the principal part with
    centered first-order terms, second-order accurate for smooth data.
    """
    u = np.asarray(u)
    if u.shape != (grid.nx + 4, grid.ny + 4):
        raise ValueError("u must include two ghost layers")
    g, b, q = triple.g, triple.b, triple.q
    pts = grid.points(ghost=True)
    hx, hy = grid.hx, grid.hy

    Gi = g.inv(pts)
    w = g.sqrt_det(pts)
    A11 = w * Gi[..., 0, 0]
    A12 = w * Gi[..., 0, 1]
    A22 = w * Gi[..., 1, 1]

    # diffusion: (1/w) [ Dx(A11 Dx u) + Dx(A12 Dy u) + Dy(A12 Dx u) + Dy(A22 Dy u) ]
    dxu = (u[2:, :] - u[:-2, :]) / (2 * hx)          # centered, at (1:-1, :)
    dyu = (u[:, 2:] - u[:, :-2]) / (2 * hy)

    # axis fluxes at half points
    f1 = 0.5 * (A11[1:, :] + A11[:-1, :]) * (u[1:, :] - u[:-1, :]) / hx
    t_xx = (f1[1:, :] - f1[:-1, :]) / hx             # at (1:-1, :)
    f2 = 0.5 * (A22[:, 1:] + A22[:, :-1]) * (u[:, 1:] - u[:, :-1]) / hy
    t_yy = (f2[:, 1:] - f2[:, :-1]) / hy             # at (:, 1:-1)

    # mixed terms, centered outer derivative of centered inner derivative
    m1 = A12[:, 1:-1] * dyu
    t_xy = (m1[2:, :] - m1[:-2, :]) / (2 * hx)       # at (1:-1 in x, 1:-1 in y)
    m2 = A12[1:-1, :] * dxu
    t_yx = (m2[:, 2:] - m2[:, :-2]) / (2 * hy)

    lap = (t_xx[:, 1:-1] + t_yy[1:-1, :] + t_xy + t_yx) / w[1:-1, 1:-1]

    bv = b.eval(pts)
    bs = np.einsum("...ij,...i->...j", Gi, bv)       # (b^#)^j
    bb = np.einsum("...ij,...i,...j->...", Gi, bv, bv)
    zo = (bb + q.eval(pts))[1:-1, 1:-1]

    Pu = -lap + zo * u[1:-1, 1:-1]
    if np.any(bs):
        ws = w * bs[..., 0]
        wt = w * bs[..., 1]
        term_div = ((ws[2:, 1:-1] * u[2:, 1:-1] - ws[:-2, 1:-1] * u[:-2, 1:-1])
                    / (2 * hx)
                    + (wt[1:-1, 2:] * u[1:-1, 2:] - wt[1:-1, :-2] * u[1:-1, :-2])
                    / (2 * hy)) / w[1:-1, 1:-1]
        term_adv = (bs[1:-1, 1:-1, 0] * dxu[:, 1:-1]
                    + bs[1:-1, 1:-1, 1] * dyu[1:-1, :])
        Pu = Pu + 1j * (term_div + term_adv)
    return Pu[1:-1, 1:-1]
