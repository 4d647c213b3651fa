"""Hamiltonian geodesic flow, exit data, inflow grid and simplicity checks.

Bicharacteristics of H_g(x, xi) = g^{ij} xi_i xi_j / 2 on the level H = 1/2
are integrated with a fixed-step RK4 scheme, batched over many rays at once.
The integration parameter coincides with g-arclength on that level.  Exit
through the circle of the requested radius is located by bisection on the
final step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import Domain, MetricField

__all__ = [
    "Geodesic",
    "RayBundle",
    "InflowGrid",
    "SimplicityReport",
    "trace_rays",
    "shoot",
    "boundary_distance",
    "simplicity_check",
    "flow_continuity_gap",
    "make_inflow_grid",
    "inflow_covector",
]

DEFAULT_STEP_FACTOR = 1e-3  # step = factor * domain diameter
ENERGY_TOL = 1e-9


def _rhs(g, x, xi):
    """Hamiltonian vector field: dx = g^{-1} xi, dxi = -1/2 d(g^{ij}) xi xi."""
    Gi = g.inv(x)
    dGi = g.inv_grad(x)
    dx = np.einsum("...ij,...j->...i", Gi, xi)
    dxi = -0.5 * np.einsum("...kij,...i,...j->...k", dGi, xi, xi)
    return dx, dxi


def _rhs_var(g, x, xi, vx, vxi):
    """Linearized flow along (x, xi) applied to variations (vx, vxi)."""
    Gi = g.inv(x)
    dGi = g.inv_grad(x)
    d2Gi = g.inv_hess(x)
    dvx = (np.einsum("...lij,...j,...l->...i", dGi, xi, vx)
           + np.einsum("...il,...l->...i", Gi, vxi))
    dvxi = (-0.5 * np.einsum("...lkij,...i,...j,...l->...k", d2Gi, xi, xi, vx)
            - np.einsum("...kil,...i,...l->...k", dGi, xi, vxi))
    return dvx, dvxi


def _rk4_step(g, x, xi, h, vx=None, vxi=None):
    """One RK4 step of the (optionally augmented) bicharacteristic system."""
    hh = h if np.ndim(h) == 0 else h[..., None]
    if vx is None:
        k1 = _rhs(g, x, xi)
        k2 = _rhs(g, x + 0.5 * hh * k1[0], xi + 0.5 * hh * k1[1])
        k3 = _rhs(g, x + 0.5 * hh * k2[0], xi + 0.5 * hh * k2[1])
        k4 = _rhs(g, x + hh * k3[0], xi + hh * k3[1])
        xn = x + hh / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        xin = xi + hh / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        return xn, xin, None, None

    def full_rhs(x_, xi_, vx_, vxi_):
        dx, dxi = _rhs(g, x_, xi_)
        dvx, dvxi = _rhs_var(g, x_, xi_, vx_, vxi_)
        return dx, dxi, dvx, dvxi

    k1 = full_rhs(x, xi, vx, vxi)
    k2 = full_rhs(x + 0.5 * hh * k1[0], xi + 0.5 * hh * k1[1],
                  vx + 0.5 * hh * k1[2], vxi + 0.5 * hh * k1[3])
    k3 = full_rhs(x + 0.5 * hh * k2[0], xi + 0.5 * hh * k2[1],
                  vx + 0.5 * hh * k2[2], vxi + 0.5 * hh * k2[3])
    k4 = full_rhs(x + hh * k3[0], xi + hh * k3[1],
                  vx + hh * k3[2], vxi + hh * k3[3])
    xn = x + hh / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    xin = xi + hh / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    vxn = vx + hh / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    vxin = vxi + hh / 6 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
    return xn, xin, vxn, vxin


@dataclass
class RayBundle:
    """Batched integration result for a family of rays."""

    exit_x: np.ndarray          # (R, 2)
    exit_xi: np.ndarray         # (R, 2)
    exit_t: np.ndarray          # (R,)
    converged: np.ndarray       # (R,) bool
    energy_drift: np.ndarray    # (R,) max |H - 1/2|
    integrals: np.ndarray = None        # (R, C) if an integrand was given
    exit_vx: np.ndarray = None          # variational state at exit
    exit_vxi: np.ndarray = None
    min_perp_jacobi: np.ndarray = None  # (R,) min over t > t_min of |J_perp|_g
    samples_t: np.ndarray = None        # (R, S) padded, NaN beyond exit
    samples_x: np.ndarray = None        # (R, S, 2)
    samples_xi: np.ndarray = None
    samples_vx: np.ndarray = None
    n_samples: np.ndarray = None        # (R,) valid sample count incl exit


@dataclass
class Geodesic:
    """A single sampled bicharacteristic with entry/exit data."""

    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    entry: tuple
    exit_point: np.ndarray
    exit_time: float
    converged: bool
    energy_drift: float

    def energy(self, g):
        Gi = g.inv(self.x)
        return 0.5 * np.einsum("...ij,...i,...j->...", Gi, self.xi, self.xi)


def trace_rays(g, x0, xi0, radius, h=None, max_steps=None,
               integrand=None, n_comp=1, variational=False, vx0=None, vxi0=None,
               record=False, jacobi_tmin=0.05, exit_tol=1e-12, domain=None):
    """Integrate a batch of rays until they exit the circle of given radius.

    integrand(x, xi) may return (R,) or (R, C) values; they are accumulated
    with composite Simpson weights on the integrator's own samples (trapezoid
    closure on the final partial interval).
    """
    x = np.atleast_2d(np.asarray(x0, float)).copy()
    xi = np.atleast_2d(np.asarray(xi0, float)).copy()
    R = x.shape[0]
    dom = domain or Domain()
    if h is None:
        h = DEFAULT_STEP_FACTOR * 2 * dom.extended_radius
    if max_steps is None:
        max_steps = int(np.ceil(4.0 * 2 * radius / h)) + 16

    want_var = variational or (vx0 is not None)
    if want_var:
        vx = np.zeros_like(x) if vx0 is None else np.atleast_2d(np.asarray(vx0, float)).copy()
        vxi = np.zeros_like(xi) if vxi0 is None else np.atleast_2d(np.asarray(vxi0, float)).copy()
    else:
        vx = vxi = None

    active = np.ones(R, dtype=bool)
    t = np.zeros(R)
    exit_x = x.copy()
    exit_xi = xi.copy()
    exit_t = np.zeros(R)
    converged = np.zeros(R, dtype=bool)
    drift = np.zeros(R)
    minJ = np.full(R, np.inf)
    evx = np.zeros_like(x) if want_var else None
    evxi = np.zeros_like(x) if want_var else None

    vals = None
    if integrand is not None:
        f0 = np.atleast_1d(integrand(x, xi))
        if f0.ndim == 1:
            f0 = f0[:, None]
        n_comp = f0.shape[1]
        vals = np.zeros((R, max_steps + 2, n_comp))
        vals[:, 0] = f0
    if record:
        rec_t = np.full((R, max_steps + 2), np.nan)
        rec_x = np.full((R, max_steps + 2, 2), np.nan)
        rec_xi = np.full((R, max_steps + 2, 2), np.nan)
        rec_vx = np.full((R, max_steps + 2, 2), np.nan) if want_var else None
        rec_t[:, 0] = 0.0
        rec_x[:, 0] = x
        rec_xi[:, 0] = xi
        if want_var:
            rec_vx[:, 0] = vx
    n_samp = np.ones(R, dtype=int)

    H0 = 0.5 * np.einsum("...ij,...i,...j->...", g.inv(x), xi, xi)

    step = 0
    while np.any(active) and step < max_steps:
        idx = np.nonzero(active)[0]
        xa, xia = x[idx], xi[idx]
        if want_var:
            vxa, vxia = vx[idx], vxi[idx]
        else:
            vxa = vxia = None
        xn, xin, vxn, vxin = _rk4_step(g, xa, xia, h, vxa, vxia)
        rn = np.hypot(xn[:, 0], xn[:, 1])
        crossed = (rn > radius) & (t[idx] + h > 1.5 * h)

        if np.any(crossed):
            ci = idx[crossed]
            # bisection on the step fraction, re-stepping from the old state
            lo = np.zeros(len(ci))
            hi = np.ones(len(ci))
            xb0, xib0 = x[ci], xi[ci]
            vb0 = vx[ci] if want_var else None
            vib0 = vxi[ci] if want_var else None
            for _ in range(48):
                mid = 0.5 * (lo + hi)
                xm, _, _, _ = _rk4_step(g, xb0, xib0, mid * h)
                inside = np.hypot(xm[:, 0], xm[:, 1]) <= radius
                lo = np.where(inside, mid, lo)
                hi = np.where(inside, hi, mid)
                if np.all((hi - lo) * h < exit_tol):
                    break
            frac = 0.5 * (lo + hi)
            xe, xie, vxe, vxie = _rk4_step(g, xb0, xib0, frac * h, vb0, vib0)
            exit_x[ci] = xe
            exit_xi[ci] = xie
            exit_t[ci] = t[ci] + frac * h
            converged[ci] = True
            if want_var:
                evx[ci] = vxe
                evxi[ci] = vxie
            if integrand is not None:
                fe = np.atleast_1d(integrand(xe, xie))
                if fe.ndim == 1:
                    fe = fe[:, None]
                vals[ci, n_samp[ci]] = fe
            if record:
                rec_t[ci, n_samp[ci]] = exit_t[ci]
                rec_x[ci, n_samp[ci]] = xe
                rec_xi[ci, n_samp[ci]] = xie
                if want_var:
                    rec_vx[ci, n_samp[ci]] = vxe
            # store the final fractional step length for quadrature closure
            n_samp[ci] += 1
            active[ci] = False

        going = ~crossed
        gi = idx[going]
        if len(gi):
            x[gi] = xn[going]
            xi[gi] = xin[going]
            if want_var:
                vx[gi] = vxn[going]
                vxi[gi] = vxin[going]
            t[gi] += h
            Hn = 0.5 * np.einsum("...ij,...i,...j->...",
                                 g.inv(x[gi]), xi[gi], xi[gi])
            drift[gi] = np.maximum(drift[gi], np.abs(Hn - H0[gi]))
            if want_var:
                dxg, _ = _rhs(g, x[gi], xi[gi])
                J = _transverse_signed(g, x[gi], dxg, vx[gi])
                past = t[gi] > jacobi_tmin
                minJ[gi] = np.where(past, np.minimum(minJ[gi], J), minJ[gi])
            if integrand is not None:
                fg = np.atleast_1d(integrand(x[gi], xi[gi]))
                if fg.ndim == 1:
                    fg = fg[:, None]
                vals[gi, n_samp[gi]] = fg
            if record:
                rec_t[gi, n_samp[gi]] = t[gi]
                rec_x[gi, n_samp[gi]] = x[gi]
                rec_xi[gi, n_samp[gi]] = xi[gi]
                if want_var:
                    rec_vx[gi, n_samp[gi]] = vx[gi]
            n_samp[gi] += 1
        step += 1

    integrals = None
    if integrand is not None:
        integrals = _simpson_rows(vals, n_samp, h, exit_t)

    bundle = RayBundle(
        exit_x=exit_x, exit_xi=exit_xi, exit_t=exit_t,
        converged=converged, energy_drift=drift,
        integrals=integrals,
        exit_vx=evx, exit_vxi=evxi,
        min_perp_jacobi=(minJ if want_var else None),
    )
    if record:
        S = int(n_samp.max())
        bundle.samples_t = rec_t[:, :S]
        bundle.samples_x = rec_x[:, :S]
        bundle.samples_xi = rec_xi[:, :S]
        if want_var:
            bundle.samples_vx = rec_vx[:, :S]
        bundle.n_samples = n_samp
    return bundle


def _perp_norm(g, x, tangent, v):
    """|v_perp|_g where v_perp is v minus its g-projection on the tangent."""
    G = g.eval(x)
    tt = np.einsum("...ij,...i,...j->...", G, tangent, tangent)
    tv = np.einsum("...ij,...i,...j->...", G, tangent, v)
    vp = v - (tv / tt)[..., None] * tangent
    return np.sqrt(np.einsum("...ij,...i,...j->...", G, vp, vp))


def _transverse_signed(g, x, tangent, v):
    """Signed g-transverse component of v along the ray.

    In 2D this is sqrt(det g) (tangent x v) / |tangent|_g; a sign change
    marks a conjugate point even when samples straddle the zero.
    """
    w = g.sqrt_det(x)
    cross = tangent[..., 0] * v[..., 1] - tangent[..., 1] * v[..., 0]
    return w * cross / g.norm_vec(x, tangent)


def _simpson_rows(vals, n_samp, h, exit_t):
    """Composite Simpson over uniformly spaced samples per row.

    The last node sits at the bisected exit time; that partial interval is
    closed with a trapezoid.  Rows with an odd number of full intervals use
    a trapezoid on the final full interval as well.
    """
    R, S, C = vals.shape
    out = np.zeros((R, C))
    for r in range(R):
        n = n_samp[r]
        if n < 2:
            continue
        nfull = n - 2  # index of last uniform node
        tail = exit_t[r] - nfull * h
        body = 0.0
        m = nfull  # number of full intervals
        if m >= 2:
            use = m if m % 2 == 0 else m - 1
            w = np.ones(use + 1)
            w[1:-1:2] = 4.0
            w[2:-1:2] = 2.0
            body = (h / 3) * (w @ vals[r, :use + 1])
            if use < m:
                body = body + 0.5 * h * (vals[r, m - 1] + vals[r, m])
        elif m == 1:
            body = 0.5 * h * (vals[r, 0] + vals[r, 1])
        out[r] = body + 0.5 * tail * (vals[r, nfull] + vals[r, n - 1])
    return out


def shoot(g, z, omega, domain=None, radius=None, h=None, record=True,
          variational=False):
    """Shoot a single geodesic from boundary data (z, omega) in Gamma_-.

    z is a boundary point of the circle of the given radius; omega is
    normalized to |omega|_g = 1 so the integration parameter is arclength.
    """
    dom = domain or Domain()
    z = np.asarray(z, float)
    omega = np.asarray(omega, float)
    if radius is None:
        radius = float(np.hypot(*z))
    omega = omega / g.norm_cov(z[None, :], omega[None, :])[0]
    bundle = trace_rays(g, z[None, :], omega[None, :],
                        radius=radius, h=h, record=record,
                        variational=variational, domain=dom)
    if record:
        n = bundle.n_samples[0]
        geo = Geodesic(
            t=bundle.samples_t[0, :n].copy(),
            x=bundle.samples_x[0, :n].copy(),
            xi=bundle.samples_xi[0, :n].copy(),
            entry=(np.asarray(z, float), np.asarray(omega, float)),
            exit_point=bundle.exit_x[0],
            exit_time=float(bundle.exit_t[0]),
            converged=bool(bundle.converged[0]),
            energy_drift=float(bundle.energy_drift[0]),
        )
        return geo
    return bundle


# ---------------------------------------------------------------------------
# inflow parametrization of Gamma_-

def inflow_covector(g, dom, alpha, beta, radius=None):
    """Unit covector at boundary angle alpha, at angle beta from the inward
    conormal direction (beta = 0 is normal incidence)."""
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    z = dom.boundary_point(alpha, radius)
    nu = dom.conormal(g, alpha, radius)           # outward unit conormal
    tang = dom.boundary_tangent(alpha, radius)
    Gi = g.inv(z)
    tau = _gram_schmidt_cov(Gi, nu, tang)
    omega = (-np.cos(beta)[..., None] * nu
             + np.sin(beta)[..., None] * tau)
    return z, omega


def _gram_schmidt_cov(Gi, nu, tangent_vec):
    """Unit covector g-orthogonal to nu, oriented along the boundary tangent."""
    G_flat = np.linalg.inv(Gi)
    cand = np.einsum("...ij,...j->...i", G_flat, tangent_vec)  # lower index
    ip = np.einsum("...ij,...i,...j->...", Gi, cand, nu)
    cand = cand - ip[..., None] * nu
    nrm = np.sqrt(np.einsum("...ij,...i,...j->...", Gi, cand, cand))
    return cand / nrm[..., None]


@dataclass
class InflowGrid:
    """Grid over Gamma_- parametrized by (boundary angle, inflow angle)."""

    alphas: np.ndarray
    betas: np.ndarray
    z: np.ndarray          # (na, nb, 2)
    omega: np.ndarray      # (na, nb, 2)
    weights: np.ndarray    # (na, nb), d(mu) quadrature weights
    radius: float
    delta_beta: float
    metric_id: str = ""

    @property
    def shape(self):
        return (len(self.alphas), len(self.betas))

    def flat(self):
        return (self.z.reshape(-1, 2), self.omega.reshape(-1, 2),
                self.weights.reshape(-1))


def make_inflow_grid(g, domain=None, n_alpha=96, n_beta=96, delta_beta=0.02,
                     radius=None, extended=True):
    """Inflow grid with measure weights |<omega, nu>|_g dS_z dS_omega.

    Near-tangential directions are excised by clipping beta to
    (-pi/2 + delta_beta, pi/2 - delta_beta); nodes sit at cell centers so no
    node is exactly tangential.
    """
    dom = domain or Domain()
    if radius is None:
        radius = dom.extended_radius if extended else dom.boundary_radius
    alphas = (np.arange(n_alpha) + 0.5) * 2 * np.pi / n_alpha
    bmax = np.pi / 2 - delta_beta
    d_beta = 2 * bmax / n_beta
    betas = -bmax + (np.arange(n_beta) + 0.5) * d_beta
    A, B = np.meshgrid(alphas, betas, indexing="ij")
    z, omega = inflow_covector(g, dom, A, B, radius)
    tang = dom.boundary_tangent(A, radius)
    speed = g.norm_vec(z, tang)                   # dS_z = |gamma'|_g d(alpha)
    d_alpha = 2 * np.pi / n_alpha
    weights = np.cos(B) * speed * d_alpha * d_beta
    return InflowGrid(alphas=alphas, betas=betas, z=z, omega=omega,
                      weights=weights, radius=radius, delta_beta=delta_beta,
                      metric_id=g.registry_id)


# ---------------------------------------------------------------------------
# boundary distance

def boundary_distance(g, alpha_x, alpha_y, domain=None, h=None, tol=1e-10,
                      n_scan=64, max_newton=30, return_details=False):
    """Geodesic distance between boundary points of the unit circle.

    The exit mismatch is minimized over the inflow angle with Newton steps
    using the variational flow, falling back to golden-section search when
    Newton stalls.  Symmetric in its arguments to the shooting tolerance.
    """
    dom = domain or Domain()
    radius = dom.boundary_radius
    target = np.mod(alpha_y, 2 * np.pi)

    def exit_angle_batch(betas):
        z, om = inflow_covector(g, dom, np.full(len(betas), alpha_x), betas,
                                radius)
        bnd = trace_rays(g, z, om, radius=radius, h=h, variational=True,
                         vx0=np.zeros((len(betas), 2)),
                         vxi0=_dbeta_covector(g, dom, alpha_x, betas, radius),
                         domain=dom)
        ang = np.arctan2(bnd.exit_x[:, 1], bnd.exit_x[:, 0])
        return np.mod(ang, 2 * np.pi), bnd

    def mismatch(ang):
        d = ang - target
        return np.mod(d + np.pi, 2 * np.pi) - np.pi

    bmax = np.pi / 2 - 1e-3
    scan = np.linspace(-bmax, bmax, n_scan)
    ang, bnd = exit_angle_batch(scan)
    mm = mismatch(ang)
    ok = bnd.converged
    mm_ok = np.where(ok, np.abs(mm), np.inf)
    i0 = int(np.argmin(mm_ok))
    beta = scan[i0]

    best = (np.inf, None)
    for _ in range(max_newton):
        ang, bnd = exit_angle_batch(np.array([beta]))
        m = mismatch(ang)[0]
        if abs(m) < best[0]:
            best = (abs(m), (beta, bnd))
        if abs(m) < tol:
            break
        dadb = _exit_angle_derivative(g, bnd)
        if not np.isfinite(dadb) or abs(dadb) < 1e-10:
            break
        step = -m / dadb
        step = np.clip(step, -0.2, 0.2)
        beta = np.clip(beta + step, -bmax, bmax)

    if best[0] > 1e-8:
        # golden-section fallback on |mismatch| around the best scan bracket
        lo = scan[max(i0 - 1, 0)]
        hi = scan[min(i0 + 1, n_scan - 1)]
        gr = (np.sqrt(5) - 1) / 2
        a, bb = lo, hi
        c = bb - gr * (bb - a)
        d = a + gr * (bb - a)
        fc = abs(mismatch(exit_angle_batch(np.array([c]))[0])[0])
        fd = abs(mismatch(exit_angle_batch(np.array([d]))[0])[0])
        for _ in range(60):
            if fc < fd:
                bb, d, fd = d, c, fc
                c = bb - gr * (bb - a)
                fc = abs(mismatch(exit_angle_batch(np.array([c]))[0])[0])
            else:
                a, c, fc = c, d, fd
                d = a + gr * (bb - a)
                fd = abs(mismatch(exit_angle_batch(np.array([d]))[0])[0])
            if bb - a < 1e-12:
                break
        beta = 0.5 * (a + bb)
        ang, bnd = exit_angle_batch(np.array([beta]))
        m = mismatch(ang)[0]
        if abs(m) < best[0]:
            best = (abs(m), (beta, bnd))

    resid, packed = best
    if packed is None or not packed[1].converged[0]:
        raise RuntimeError(f"boundary_distance shooting failed, residual {resid:.3e}")
    beta, bnd = packed
    dist = float(bnd.exit_t[0])
    if return_details:
        return dist, {"beta": beta, "residual": float(resid)}
    return dist


def _dbeta_covector(g, dom, alpha, betas, radius):
    """d(omega)/d(beta) at fixed boundary point."""
    z = dom.boundary_point(np.full(len(betas), alpha), radius)
    nu = dom.conormal(g, np.full(len(betas), alpha), radius)
    tang = dom.boundary_tangent(np.full(len(betas), alpha), radius)
    tau = _gram_schmidt_cov(g.inv(z), nu, tang)
    return (np.sin(betas)[..., None] * nu + np.cos(betas)[..., None] * tau)


def _exit_angle_derivative(g, bnd):
    """d(exit angle)/d(beta) from the variational state at exit."""
    xe = bnd.exit_x[0]
    ve = bnd.exit_vx[0]
    dxe, _ = _rhs(g, xe[None, :], bnd.exit_xi[0][None, :])
    dxe = dxe[0]
    r2 = xe @ xe
    # correct the variation for the induced change of exit time
    er = xe / np.sqrt(r2)
    denom = er @ dxe
    if abs(denom) < 1e-14:
        return np.nan
    v_corr = ve - (er @ ve) / denom * dxe
    # angular component
    return float((-xe[1] * v_corr[0] + xe[0] * v_corr[1]) / r2)


# ---------------------------------------------------------------------------
# simplicity diagnostics

@dataclass
class SimplicityReport:
    boundary_convexity_min: float
    min_jacobi: float
    is_simple: bool
    convexity_threshold: float
    jacobi_threshold: float
    n_rays: int


def boundary_geodesic_curvature(g, domain=None, n=256, radius=None):
    """Geodesic curvature of the boundary circle w.r.t. g (inward positive)."""
    dom = domain or Domain()
    r = dom.boundary_radius if radius is None else radius
    alphas = np.linspace(0, 2 * np.pi, n, endpoint=False)
    z = dom.boundary_point(alphas, r)
    tang = dom.boundary_tangent(alphas, r)
    speed = g.norm_vec(z, tang)
    T = tang / speed[:, None]
    # dT/ds along the curve: FD in alpha divided by ds/dalpha = speed
    Tp = (np.roll(T, -1, axis=0) - np.roll(T, 1, axis=0)) / (
        2 * 2 * np.pi / n) / speed[:, None]
    Gam = g.christoffel(z)
    acc = Tp + np.einsum("...kij,...i,...j->...k", Gam, T, T)
    nu = dom.conormal(g, alphas, r)
    n_in = -np.einsum("...ij,...j->...i", g.inv(z), nu)  # inward unit normal
    G = g.eval(z)
    return np.einsum("...ij,...i,...j->...", G, acc, n_in)


def simplicity_check(g, domain=None, n_alpha=48, n_beta=24,
                     convexity_threshold=1e-3, jacobi_threshold=1e-3,
                     h=None, radius=None, jacobi_tmin=None):
    """Convexity of the boundary plus a conjugate-point scan over a ray fan.

    A metric is flagged simple when the boundary circle is strictly convex
    and no normalized Jacobi field J (J(0)=0, J'(0)=1) drops below the
    threshold past the initial linear regime.
    """
    dom = domain or Domain()
    r = radius if radius is not None else dom.extended_radius
    kmin = float(np.min(boundary_geodesic_curvature(g, dom, radius=r)))

    grid = make_inflow_grid(g, dom, n_alpha=n_alpha, n_beta=n_beta,
                            delta_beta=0.05, radius=r)
    z, om, _ = grid.flat()
    vxi0 = _dbeta_covector_grid(g, dom, grid)
    if h is None:
        h = 2.5 * DEFAULT_STEP_FACTOR * 2 * dom.extended_radius
    tmin = jacobi_tmin if jacobi_tmin is not None else 0.1
    bnd = trace_rays(g, z, om, radius=r, h=h, variational=True,
                     vx0=np.zeros_like(z), vxi0=vxi0, domain=dom,
                     jacobi_tmin=tmin)
    conv = bnd.converged
    minJ = float(np.min(bnd.min_perp_jacobi[conv])) if np.any(conv) else 0.0
    if not np.all(conv):
        minJ = 0.0  # non-exiting rays signal trapping
    simple = (kmin > convexity_threshold) and (minJ > jacobi_threshold)
    return SimplicityReport(
        boundary_convexity_min=kmin, min_jacobi=minJ, is_simple=bool(simple),
        convexity_threshold=convexity_threshold,
        jacobi_threshold=jacobi_threshold, n_rays=int(conv.size))


def _dbeta_covector_grid(g, dom, grid):
    A, B = np.meshgrid(grid.alphas, grid.betas, indexing="ij")
    z = grid.z.reshape(-1, 2)
    nu = dom.conormal(g, A.ravel(), grid.radius)
    tang = dom.boundary_tangent(A.ravel(), grid.radius)
    tau = _gram_schmidt_cov(g.inv(z), nu, tang)
    b = B.ravel()[:, None]
    return np.sin(b) * nu + np.cos(b) * tau


# ---------------------------------------------------------------------------
# flow continuity (ODE stability check)

def flow_continuity_gap(g, g_tilde, z, omega, radius=None, h=None, T=None,
                        domain=None):
    """sup_t |x - x_tilde| + |xi - xi_tilde| for a shared-entry ray pair."""
    dom = domain or Domain()
    if radius is None:
        radius = float(np.hypot(*np.asarray(z, float)))
    if h is None:
        h = DEFAULT_STEP_FACTOR * 2 * dom.extended_radius
    b1 = trace_rays(g, np.asarray(z)[None], np.asarray(omega)[None],
                    radius=radius, h=h, record=True, domain=dom)
    b2 = trace_rays(g_tilde, np.asarray(z)[None], np.asarray(omega)[None],
                    radius=radius, h=h, record=True, domain=dom)
    if not (b1.converged[0] and b2.converged[0]):
        raise RuntimeError("flow_continuity_gap: a ray failed to exit")
    n = min(b1.n_samples[0], b2.n_samples[0]) - 1  # drop bisected tails
    if T is not None:
        n = min(n, int(T / h))
    dx = np.linalg.norm(b1.samples_x[0, :n] - b2.samples_x[0, :n], axis=-1)
    dxi = np.linalg.norm(b1.samples_xi[0, :n] - b2.samples_xi[0, :n], axis=-1)
    return float(np.max(dx + dxi))
