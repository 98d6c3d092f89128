"""Dispersion integral, dielectric functions, Nyquist stability and the
Fourier-Laplace fundamental solution of the linearized Vlasov medium.

Conventions.  For a direction theta and Radon slice H(s) = H(s; theta),

    Psi(zeta; theta) = i int H'(s) / (zeta + i s) ds = int H'(s) / (s - q) ds,   q = i zeta,

which is analytic for Re zeta > 0 and continued to Re zeta <= 0 by shifting
the s-contour below the pole.  For a Gaussian slice with weight n, mean m and
standard deviation sd the integral is closed:

    Psi = -(n / sd^2) (1 + xi Z(xi)),   xi = (q - m) / (sqrt(2) sd),

with Z the plasma dispersion function, Z(xi) = i sqrt(pi) w(xi), w the
Faddeeva function.  Z(xi) is entire, so the continuation is exact.

The dielectric function is Delta(k, z) = 1 - c Phi_hat(k') Psi(z/|k|; k/|k|)
with (c, k') = (sigma (2 pi)^{3/2}, k) for the sigma model and
(2 (2 pi)^{3/2} / L^2, k / L) for the epsilon model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .distributions import Maxwellian, MaxwellianMixture, Tabulated, VelocityDistribution, _unit
from .errors import (AtDielectricZero, AtPole, GridTooCoarse, InversionNotConverged, OutsideAnalyticStrip,
                     UnstableMedium, ValidationError)
from .potentials import FOURIER_NORM, RadialPotential
from .quadrature import gauss_legendre

SQRT_PI = np.sqrt(np.pi)
SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------- components

def gaussian_components(g: VelocityDistribution):
    """(density, mean vector, std) triples when g is a sum of isotropic Gaussians, else None."""
    if isinstance(g, Maxwellian):
        return [(g.n, g.u, np.sqrt(g.temperature))]
    if isinstance(g, MaxwellianMixture):
        return [(c.n, c.u, np.sqrt(c.temperature)) for c in g.components]
    return None


def strip_halfwidth(g: VelocityDistribution) -> float:
    """delta_0: 4 sqrt(T_min) for Gaussian kinds, 0 (no continuation) otherwise."""
    comps = gaussian_components(g)
    if comps is None:
        return 0.0
    return 4.0 * min(sd for _, _, sd in comps)


def _Z(xi):
    return 1j * SQRT_PI * special.wofz(xi)


def _upper_F(comps_1d, q):
    """int H'(s)/(s - q) ds for the analytic branch continued from Im q > 0."""
    q = np.asarray(q, dtype=complex)
    out = np.zeros(np.broadcast(q, *[np.asarray(m) for _, m, _ in comps_1d]).shape, dtype=complex)
    for n, m, sd in comps_1d:
        xi = (q - m) / (SQRT2 * sd)
        out = out - (n / sd**2) * (1.0 + xi * _Z(xi))
    return out


def _slice_comps(comps, theta):
    theta = np.asarray(theta, dtype=float)
    return [(n, np.tensordot(theta, u, axes=([-1], [0])) if theta.ndim > 1 else float(theta @ u), sd)
            for n, u, sd in comps]


# ---------------------------------------------------------------- psi

def _psi_quad_line(dH, support, q):
    """int dH(s)/(s - q) ds along the real line, Im q > 0."""
    lo, hi = support
    lo, hi = min(lo, q.real - 1.0), max(hi, q.real + 1.0)

    def re(s):
        return (dH(s) / (s - q)).real

    def im(s):
        return (dH(s) / (s - q)).imag

    kw = dict(points=[q.real], limit=400, epsabs=1e-14, epsrel=1e-12)
    return complex(integrate.quad(re, lo, hi, **kw)[0], integrate.quad(im, lo, hi, **kw)[0])


def _psi_plemelj(dH, support, x):
    lo, hi = support
    lo, hi = min(lo, x - 1.0), max(hi, x + 1.0)
    pv = integrate.quad(dH, lo, hi, weight="cauchy", wvar=x, limit=400, epsabs=1e-14, epsrel=1e-12)[0]
    return complex(pv, np.pi * float(dH(np.array([x]))[0]))


# below this height the pole is treated as on the axis; the error is O(Im q)
_PLEMELJ_HEIGHT = 1e-4


def _psi_line(dH, support, q):
    if q.imag < _PLEMELJ_HEIGHT:
        return _psi_plemelj(dH, support, q.real)
    return _psi_quad_line(dH, support, q)


def _complex_dH(comps_1d, s):
    out = np.zeros_like(s, dtype=complex)
    for n, m, sd in comps_1d:
        out += -n * (s - m) / sd**2 * np.exp(-0.5 * ((s - m) / sd) ** 2) / (np.sqrt(2 * np.pi) * sd)
    return out


def _psi_contour(comps_1d, q, shift):
    """Integrate along Im s = -shift, below the pole; valid while Im q > -shift."""
    lo = min(m - 14 * sd for _, m, sd in comps_1d)
    hi = max(m + 14 * sd for _, m, sd in comps_1d)
    lo, hi = min(lo, q.real - 1.0), max(hi, q.real + 1.0)

    def f(t, part):
        s = t - 1j * shift
        v = _complex_dH(comps_1d, np.asarray(s)) / (s - q)
        return v.real if part == 0 else v.imag

    kw = dict(limit=400, epsabs=1e-14, epsrel=1e-12, points=[q.real])
    return complex(integrate.quad(f, lo, hi, args=(0,), **kw)[0], integrate.quad(f, lo, hi, args=(1,), **kw)[0])


def psi(g: VelocityDistribution, zeta, theta, method: str = "auto"):
    """Psi(zeta; theta).  ``method``: auto | closed | quad | contour.

    ``quad`` integrates H' along the real line (Re zeta > 0) or takes the
    Plemelj boundary value (Re zeta = 0); ``contour`` shifts the line to
    Im s = -3 delta_0 / 4.  Both serve as oracles for the closed form.
    """
    theta = _unit(theta, "psi")
    zeta = np.asarray(zeta, dtype=complex)
    d0 = strip_halfwidth(g)
    comps = gaussian_components(g)
    if d0 > 0:
        if np.any(zeta.real <= -d0 / 2):
            raise OutsideAnalyticStrip(f"Re(zeta) must exceed {-d0 / 2:.6g}", op="psi")
    elif np.any(zeta.real < 0):
        raise OutsideAnalyticStrip("tabulated g: only Re(zeta) >= 0 is available", op="psi")
    q = 1j * zeta
    if method == "auto":
        method = "closed" if comps is not None else "quad"
    if method == "closed":
        if comps is None:
            raise ValidationError("closed form needs a Gaussian-mixture g", op="psi")
        return _upper_F(_slice_comps(comps, theta), q)
    sl = g.radon(theta)
    flat = np.atleast_1d(q).ravel()
    out = np.empty(flat.shape, dtype=complex)
    for i, qi in enumerate(flat):
        if method == "contour":
            if comps is None:
                raise ValidationError("contour shifting is disabled for tabulated g", op="psi")
            out[i] = _psi_contour(_slice_comps(comps, theta), qi, 0.75 * d0)
        elif qi.imag >= 0:
            out[i] = _psi_line(sl.dH, sl.support, qi)
        else:
            raise OutsideAnalyticStrip("real-line quadrature needs Re(zeta) >= 0", op="psi")
    return out.reshape(zeta.shape) if zeta.ndim else complex(out[0])


# ---------------------------------------------------------------- Delta

@dataclass(frozen=True)
class DielectricFunction:
    g: VelocityDistribution
    potential: RadialPotential
    model: str = "sigma"
    sigma: float = 0.0
    L: float = 1.0

    def __post_init__(self):
        if self.model not in ("sigma", "epsilon"):
            raise ValidationError(f"unknown dielectric model {self.model!r}", op="delta")
        if self.model == "epsilon" and not self.L > 0:
            raise ValidationError("L must be positive", op="delta")

    def coupling(self, kmod):
        """c * Phi_hat(k') as a function of |k|."""
        kmod = np.asarray(kmod, dtype=float)
        if self.model == "sigma":
            if self.sigma == 0:
                return np.zeros_like(kmod)
            return self.sigma * FOURIER_NORM * self.potential.fourier(kmod)
        return 2.0 * FOURIER_NORM / self.L**2 * self.potential.fourier(kmod / self.L)

    @property
    def off(self) -> bool:
        return self.model == "sigma" and self.sigma == 0


def _psi_many(g, zeta, theta):
    """Psi for arrays of zeta (...) and unit vectors theta (..., 3) broadcast together."""
    comps = gaussian_components(g)
    if comps is not None:
        d0 = strip_halfwidth(g)
        if np.any(np.real(zeta) <= -d0 / 2):
            raise OutsideAnalyticStrip(f"Re(zeta) must exceed {-d0 / 2:.6g}", op="psi")
        return _upper_F(_slice_comps(comps, theta), 1j * zeta)
    zeta, theta = np.broadcast_arrays(np.asarray(zeta, dtype=complex)[..., None], theta)
    zeta = zeta[..., 0]
    out = np.empty(zeta.shape, dtype=complex)
    for idx in np.ndindex(zeta.shape):
        out[idx] = psi(g, zeta[idx], theta[idx] / np.linalg.norm(theta[idx]))
    return out


def delta(model: DielectricFunction, k, z):
    """Delta(k, z) for wavevectors k (..., 3) and complex z broadcastable to k[..., 0]."""
    k = np.asarray(k, dtype=float)
    z = np.asarray(z, dtype=complex)
    kmod = np.linalg.norm(k, axis=-1)
    shape = np.broadcast(kmod, z).shape
    if model.off:
        return np.ones(shape, dtype=complex) if shape else complex(1.0)
    safe = np.where(kmod > 0, kmod, 1.0)
    theta = k / safe[..., None]
    theta = np.where((kmod > 0)[..., None], theta, np.array([1.0, 0.0, 0.0]))
    val = 1.0 - model.coupling(safe) * _psi_many(model.g, z / safe, theta)
    val = np.where(np.broadcast_to(kmod > 0, shape), val, 1.0 + 0j)
    return val if val.ndim else complex(val)


# ---------------------------------------------------------------- stability

@dataclass
class StabilityReport:
    k: list
    winding: list
    marginal_omegas: list
    residual: list = field(default_factory=list)

    @property
    def stable(self) -> bool:
        return all(w == 0 for w in self.winding) and not any(self.marginal_omegas)

    @property
    def verdict(self) -> str:
        return "stable" if self.stable else "unstable"

    def to_json(self) -> str:
        rows = [{"k": list(map(float, k)), "winding": int(w), "marginal_omegas": list(map(float, m))}
                for k, w, m in zip(self.k, self.winding, self.marginal_omegas)]
        return json.dumps({"verdict": self.verdict, "entries": rows}, sort_keys=True)


def _speed_scale(g: VelocityDistribution) -> float:
    comps = gaussian_components(g)
    if comps is None:
        return float(np.linalg.norm(g.mean())) + g.v_cut()
    return max(float(np.linalg.norm(u)) for _, u, _ in comps) + 12.0 * max(sd for _, _, sd in comps)


def _segment_angle(model, k, w0, w1, d0, d1, depth, max_depth):
    """Phase swept by Delta(k, i omega) for omega in [w0, w1], by local bisection.

    A jump above pi/2 is accepted once the midpoint confirms that the chord
    is a faithful piece of the curve, measured against its distance from 0.
    """
    ang = float(np.angle(d1 / d0))
    if abs(ang) <= np.pi / 2:
        return ang
    wm = 0.5 * (w0 + w1)
    dm = complex(delta(model, k, 1j * wm))
    chord = d1 - d0
    dist = abs((np.conj(d0) * d1).imag) / max(abs(chord), 1e-300)
    if abs(dm - 0.5 * (d0 + d1)) < 0.25 * dist and abs(np.angle(dm / d0)) < abs(ang):
        return ang
    if depth >= max_depth:
        raise GridTooCoarse(f"phase jump {ang:.3g} unresolved near omega={wm:.6g}", op="penrose_check")
    return (_segment_angle(model, k, w0, wm, d0, dm, depth + 1, max_depth)
            + _segment_angle(model, k, wm, w1, dm, d1, depth + 1, max_depth))


def winding_number(model: DielectricFunction, k, n_omega: int = 2001, max_depth: int = 40,
                   marginal_tol: float = 1e-8):
    """Zeros of Delta(k, .) in Re z > 0 from the phase change along the imaginary axis.

    Returns (count, marginal omegas, distance of the raw count from an integer).
    """
    k = np.asarray(k, dtype=float)
    kmod = float(np.linalg.norm(k))
    if kmod == 0 or model.off:
        return 0, [], 0.0
    Om = kmod * _speed_scale(model.g)
    om = np.linspace(-Om, Om, n_omega)
    d = delta(model, k, 1j * om)
    small = np.abs(d) < marginal_tol
    if small.any():
        return 0, list(om[small]), 0.0
    jumps = np.angle(d[1:] / d[:-1])
    for i in np.nonzero(np.abs(jumps) > np.pi / 2)[0]:
        jumps[i] = _segment_angle(model, k, om[i], om[i + 1], d[i], d[i + 1], 0, max_depth)
    # clockwise around the right half plane: up the axis, back along the arc at infinity
    total = jumps.sum() + np.angle(d[0] / d[-1])
    raw = -total / (2 * np.pi)
    count = int(round(raw))
    return count, [], float(abs(raw - count))


def penrose_check(model: DielectricFunction, k_grid, n_omega: int = 2001, max_depth: int = 40) -> StabilityReport:
    k_grid = np.atleast_2d(np.asarray(k_grid, dtype=float))
    if k_grid.size == 0:
        raise ValidationError("k_grid is empty", op="penrose_check")
    ks, ws, ms, rs = [], [], [], []
    for k in k_grid:
        w, m, r = winding_number(model, k, n_omega, max_depth)
        ks.append(k)
        ws.append(w)
        ms.append(m)
        rs.append(r)
    return StabilityReport(ks, ws, ms, rs)


def find_zeros(model: DielectricFunction, k, re_max: float = 3.0, n_seed: int = 12, tol: float = 1e-12):
    """Zeros of Delta(k, .) with Re z > 0 by complex Newton from a grid of seeds."""
    k = np.asarray(k, dtype=float)
    kmod = float(np.linalg.norm(k))
    Om = kmod * _speed_scale(model.g)
    roots: list[complex] = []
    d0 = strip_halfwidth(model.g)
    floor = -0.45 * d0 * kmod if d0 > 0 else 0.0
    for x in np.linspace(0.05, re_max, n_seed):
        for y in np.linspace(-Om, Om, 2 * n_seed + 1):
            z = complex(x, y)
            for _ in range(80):
                f = delta(model, k, z)
                h = 1e-6 * max(1.0, abs(z))
                fp = (delta(model, k, z + h) - delta(model, k, z - h)) / (2 * h)
                if fp == 0:
                    break
                step = f / fp
                z = z - step
                if z.real < floor or abs(z) > 10 * (Om + re_max):
                    break
                if abs(step) < tol * max(1.0, abs(z)):
                    break
            if z.real > 1e-6 and abs(delta(model, k, z)) < 1e-9 and abs(z) <= 10 * (Om + re_max):
                if all(abs(z - r) > 1e-6 * max(1.0, abs(r)) for r in roots):
                    roots.append(z)
    return sorted(roots, key=lambda r: (r.imag, r.real))


# ---------------------------------------------------------------- fundamental solution

def xi_fundamental(model: DielectricFunction, k, w0, z, tol: float = 1e-12) -> complex:
    k = np.asarray(k, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    z = complex(z)
    pole = z + 1j * float(k @ w0)
    if abs(pole) < tol:
        raise AtPole("z is at the free-streaming pole -i k.w0", op="xi_fundamental")
    d = delta(model, k, z)
    if abs(d) < tol:
        raise AtDielectricZero("Delta(k, z) vanishes", op="xi_fundamental")
    return FOURIER_NORM**-1 / (pole * d)


@dataclass
class FundamentalSolutionGrid:
    """Xi(s e, w0, t) on points s e along e = w0/|w0| (e1 when w0 = 0), Gaussian-filtered at width h.

    values = free + induced; the induced part splits into the dressing that
    travels with the source and a transient, which is what decays in a
    stable medium.
    """

    x: np.ndarray
    w0: np.ndarray
    t: np.ndarray
    free: np.ndarray
    induced: np.ndarray
    transient: np.ndarray
    h: float
    a: float
    mass: np.ndarray
    a_check: float | None = None
    a_gap: float = 0.0

    @property
    def values(self) -> np.ndarray:
        return self.free + self.induced

    @property
    def dressing(self) -> np.ndarray:
        """Induced profile carried along with the source, 1/Delta(k, -i k.w0) - 1 in Fourier."""
        return self.induced - self.transient

    def envelope(self) -> np.ndarray:
        return np.max(np.abs(self.transient), axis=1)

    def envelope_rate(self, t_min: float = 5.0) -> float:
        """kappa from a least-squares fit of log sup_x |transient| against t for t >= t_min."""
        sel = self.t >= t_min
        env = self.envelope()[sel]
        if sel.sum() < 2 or np.any(env <= 0):
            return float("nan")
        slope = np.polyfit(self.t[sel], np.log(env), 1)[0]
        return float(-slope)

    def to_csv_rows(self):
        for i, t in enumerate(self.t):
            for j, x in enumerate(self.x):
                yield (float(x), float(t), float(self.values[i, j]))


def _isotropic_maxwellian(g):
    if not isinstance(g, Maxwellian) or np.any(g.u != 0):
        raise ValidationError("xi_time needs a centered Maxwellian g", op="xi_time")


def _tail_inverse(b, c, t):
    """Inverse Laplace transform of 1 / ((z + b)^2 (z + i c)) at times t."""
    d = b - 1j * c
    C = 1.0 / d**2
    B = -1.0 / d
    return -C * np.exp(-b * t) + B * t * np.exp(-b * t) + C * np.exp(-1j * c * t)


def _induced_hat(model, kap, mu, w0mod, t, a, omega_max, d_omega, tail_b=1.0):
    """Xi_hat_induced(kappa, mu, t) by trapezoid on Re z = a, with the z^-3 tail subtracted."""
    comps = gaussian_components(model.g)
    n_dens = sum(c[0] for c in comps)
    n_om = int(np.ceil(omega_max / d_omega))
    om = d_omega * np.arange(-n_om, n_om + 1)
    z = a + 1j * om
    E = np.exp(np.outer(z, t)) * d_omega / (2 * np.pi)
    out = np.empty((len(kap), len(mu), len(t)), dtype=complex)
    norm = FOURIER_NORM**-1
    for i, kk in enumerate(kap):
        P = norm * float(model.coupling(kk))
        d = delta(model, np.array([kk, 0.0, 0.0]), z)
        inv = 1.0 / d - 1.0
        c = kk * mu * w0mod
        # leading behaviour of (1/Delta - 1) is -P' n k^2 / z^2 with P' = coupling
        lead = -P * n_dens * kk**2
        F = norm * inv[None, :] / (z[None, :] + 1j * c[:, None])
        S = lead / ((z[None, :] + tail_b) ** 2 * (z[None, :] + 1j * c[:, None]))
        out[i] = (F - S) @ E + lead * _tail_inverse(tail_b, c[:, None], t[None, :])
    return out


def xi_time(model: DielectricFunction, x_grid, w0, t_grid, a: float = 0.5, a_check: float | None = 1.0,
            h: float | None = None, n_k: int = 96, n_mu: int = 24, omega_max: float | None = None,
            check_tol: float = 0.05, k_max: float | None = None) -> FundamentalSolutionGrid:
    """Numerical inverse Fourier-Laplace transform of Xi.

    The free-streaming part delta(x - w0 t) is exact; after Gaussian filtering
    at width h it is evaluated in closed form.  The induced part
    (1/Delta - 1)/(z + i k.w0) is inverted on the Bromwich line Re z = a,
    then integrated over k in spherical coordinates about w0.
    """
    x = np.asarray(x_grid, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise ValidationError("x_grid must be a 1D array with at least two points", op="xi_time")
    if h is None:
        h = 2.0 * float(np.min(np.diff(np.sort(x))))
    w0mod = float(np.linalg.norm(w0))
    e = w0 / w0mod if w0mod > 0 else np.array([1.0, 0.0, 0.0])
    pts = x[None, :, None] * e
    cen = t[:, None, None] * w0
    free = (2 * np.pi * h**2) ** -1.5 * np.exp(-0.5 * np.sum((pts - cen) ** 2, axis=-1) / h**2)
    induced = np.zeros_like(free)
    transient = np.zeros_like(free)
    gap = 0.0
    if not model.off:
        _isotropic_maxwellian(model.g)
        if k_max is None:
            k_max = 8.0 / h
        kprobe = np.linspace(k_max / 64, k_max, 64)[:, None] * np.array([1.0, 0.0, 0.0])
        rep = penrose_check(model, kprobe)
        if not rep.stable:
            raise UnstableMedium("Delta has zeros in Re z > 0 on the k range used", op="xi_time")
        kap, wk = gauss_legendre(n_k, 0.0, k_max)
        if w0mod > 0:
            mu, wm = gauss_legendre(n_mu, -1.0, 1.0)
        else:
            mu, wm = np.array([0.0]), np.array([2.0])
        T = model.g.temperature
        if omega_max is None:
            omega_max = 300.0 + 2.0 * k_max * w0mod
        d_omega = 2 * np.pi / (4 * max(t.max(), 1.0) + 40.0)

        # co-moving dressed profile: residue at the free-streaming pole z = -i k.w0
        dres = np.empty((n_k, len(mu)), dtype=complex)
        for i, kk in enumerate(kap):
            dres[i] = 1.0 / delta(model, np.array([kk, 0.0, 0.0]), -1j * kk * mu * w0mod) - 1.0
        dres_t = FOURIER_NORM**-1 * dres[:, :, None] * np.exp(-1j * np.multiply.outer(np.outer(kap, mu) * w0mod, t))
        filt = np.exp(-0.5 * (kap * h) ** 2) * kap**2 * wk
        if w0mod > 0:
            ph = np.exp(1j * np.multiply.outer(np.multiply.outer(kap, mu), x)) * wm[None, :, None]
        else:
            # int_{-1}^{1} exp(i k mu s) dmu = 2 sinc(k s)
            ph = 2.0 * np.sinc(np.outer(kap, x) / np.pi)[:, None, :]

        def to_x(hat):
            # azimuthal integral on the axis gives 2 pi
            return (2 * np.pi) ** -1.5 * 2 * np.pi * np.einsum("kmt,kmx,k->tx", hat, ph, filt).real

        Xh = _induced_hat(model, kap, mu, w0mod, t, a, omega_max, d_omega)
        induced = to_x(Xh)
        transient = to_x(Xh - dres_t)
        if a_check is not None:
            other = to_x(_induced_hat(model, kap, mu, w0mod, t, a_check, omega_max, d_omega))
            scale = max(np.max(np.abs(induced)), 1e-300)
            gap = float(np.max(np.abs(other - induced)) / scale)
            if gap > check_tol:
                raise InversionNotConverged(f"Bromwich results differ by {gap:.3g} between a={a} and a={a_check}",
                                            op="xi_time")
    vals = free + induced
    if w0mod == 0 and x[0] <= 0 + 1e-12:
        mass = np.array([integrate.simpson(4 * np.pi * x**2 * v, x=x) for v in vals])
    else:
        mass = np.full(len(t), np.nan)
    return FundamentalSolutionGrid(x, w0, t, free, induced, transient, h, a, mass, a_check, gap)


# ---------------------------------------------------------------- Appendix tensor

def dielectric_tensor(model: DielectricFunction, k, omega: float, damping: float = 1e-6) -> np.ndarray:
    """eps(k, omega) = I + ((2 pi)^{3/2} sigma / Delta(k, i omega)) Phi_hat(k) int k (x) grad g / (omega + k.w + i0) dw.

    For isotropic Gaussian components the vector integral is theta F / |k| * |k|
    with F = int H'(s) / (s - q) ds, q = -(omega + i damping) / |k|.
    """
    k = np.asarray(k, dtype=float)
    kmod = float(np.linalg.norm(k))
    if kmod == 0:
        raise ValidationError("k must be nonzero", op="dielectric_tensor")
    if model.off:
        return np.eye(3, dtype=complex)
    theta = k / kmod
    d = delta(model, k, 1j * omega + damping)
    if abs(d) < 1e-12:
        raise AtDielectricZero("Delta(k, i omega) vanishes", op="dielectric_tensor")
    q = -(omega + 1j * damping) / kmod
    comps = gaussian_components(model.g)
    if comps is not None:
        F = np.conj(_upper_F(_slice_comps(comps, theta), np.conj(q)))
        vec = theta * complex(F) / kmod
    else:
        sl = model.g.radon(theta)
        F = np.conj(_psi_line(sl.dH, sl.support, np.conj(q)))
        vec = theta * F / kmod
    return np.eye(3) + (model.coupling(kmod) / d) * np.outer(k, vec)
