"""Langevin surrogate dynamics, Fokker-Planck moments and a direct Rayleigh-gas N-body run.

The surrogate is the Ito SDE

    dw = (-Lambda(w) + 1/2 div D(w)) dt + S(w) dW,    S S^T = D,

whose Fokker-Planck equation is d_t f = div_w (1/2 D grad_w f + Lambda f).
The divergence term vanishes for state-independent D and can be switched off.

``D`` here is the noise strength, the coefficient of the delta correlation of
the fluctuating force, which equals the two-sided lag integral of the force
autocorrelation.  The coefficients module reports the Fourier form, which is
the one-sided integral; ``isotropic_pair`` and ``landau_maxwellian_pair``
apply the factor 2.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline

from . import rng as krng
from .distributions import Maxwellian, VelocityDistribution
from .errors import (BudgetExceeded, ClosureBreakdown, EnergyDriftExceeded, NonPSDDiffusion,
                     ValidationError)
from .parallel import ordered_map
from .potentials import RadialPotential, ScaledPotential
from .quadrature import gauss_hermite_3d

PSD_TOL = 1e-8
MAX_PARTICLES = 1e7


# ---------------------------------------------------------------- coefficient pairs


def _rosenbluth_derivs(x):
    """F'(x)/x and F''(x) for F(x) = (x + 1/(2x)) erf(x) + exp(-x^2)/sqrt(pi)."""
    x = np.asarray(x, dtype=float)
    c = 2.0 / np.sqrt(np.pi)
    small = x < 0.05
    xs = np.where(small, 1.0, x)
    e = np.exp(-xs**2)
    erf = special.erf(xs)
    d1 = ((1 - 0.5 / xs**2) * erf + e / (xs * np.sqrt(np.pi))) / xs
    d2 = erf / xs**3 - c * e / xs**2
    x2 = x**2
    d1 = np.where(small, c * (2 / 3 - 2 * x2 / 15 + x2**2 / 35), d1)
    d2 = np.where(small, c * (2 / 3 - 0.4 * x2 + x2**2 / 7), d2)
    return d1, d2


def landau_tensor_maxwellian(g: Maxwellian, v) -> np.ndarray:
    """M(v) = int g(w) (I - uu)/|v - w| dw in closed form, u the unit vector of v - w.

    M is the Hessian of the Rosenbluth potential int g(w)|v - w| dw, which
    for a Maxwellian is n a F(|v - u|/a) with a = sqrt(2T).
    """
    v = np.asarray(v, dtype=float)
    d = v - g.u
    r = np.linalg.norm(d, axis=-1)
    a = np.sqrt(2 * g.temperature)
    d1, d2 = _rosenbluth_derivs(r / a)
    with np.errstate(invalid="ignore", divide="ignore"):
        e = np.where(r[..., None] > 0, d / np.where(r > 0, r, 1.0)[..., None], 0.0)
    P = e[..., :, None] * e[..., None, :]
    I = np.broadcast_to(np.eye(3), P.shape)
    return (g.n / a) * (d2[..., None, None] * P + d1[..., None, None] * (I - P))


def landau_maxwellian_pair(g: Maxwellian, A: float = 1.0):
    """Noise strength and friction of the screened-Coulomb (Landau) operator for a Maxwellian.

    D_noise = 2 (pi A^2 / 2) M and Lambda = (pi A^2 / 2) M (v - u) / T, which
    leave the Maxwellian stationary.
    """
    c = 0.5 * np.pi * A**2

    def D(w):
        return 2 * c * landau_tensor_maxwellian(g, w)

    def Lam(w):
        w = np.asarray(w, dtype=float)
        return c * np.einsum("...ab,...b->...a", landau_tensor_maxwellian(g, w), w - g.u) / g.temperature

    return D, Lam


def ou_pair(gamma: float, temperature: float, u=(0.0, 0.0, 0.0)):
    """Constant noise 2 gamma T I with friction gamma (w - u): the Ornstein-Uhlenbeck pair."""
    u = np.asarray(u, dtype=float)

    def D(w):
        w = np.asarray(w, dtype=float)
        return np.broadcast_to(2 * gamma * temperature * np.eye(3), w.shape[:-1] + (3, 3)).copy()

    def Lam(w):
        return gamma * (np.asarray(w, dtype=float) - u)

    return D, Lam


@dataclass(frozen=True)
class IsotropicTable:
    """Coefficients of an isotropic background tabulated against the relative speed |w - u|."""

    speeds: np.ndarray
    d_par: np.ndarray
    d_perp: np.ndarray
    lam: np.ndarray
    u: np.ndarray
    scale: float = 1.0

    def _splines(self):
        return (CubicSpline(self.speeds, self.d_par), CubicSpline(self.speeds, self.d_perp),
                CubicSpline(self.speeds, self.lam))

    def pair(self):
        """(D_noise, Lambda) callables; D_noise is twice the tabulated Fourier-form D."""
        sp, sq, sl = self._splines()
        top = self.speeds[-1]
        u, s = self.u, self.scale

        def parts(w):
            d = np.asarray(w, dtype=float) - u
            r = np.linalg.norm(d, axis=-1)
            rc = np.minimum(r, top)
            e = np.where(r[..., None] > 0, d / np.where(r > 0, r, 1.0)[..., None], 0.0)
            return e, rc

        def D(w):
            e, rc = parts(w)
            P = e[..., :, None] * e[..., None, :]
            I = np.eye(3)
            iso = (rc == 0)[..., None, None]
            par = sp(rc)[..., None, None]
            perp = sq(rc)[..., None, None]
            out = np.where(iso, perp * I, par * P + perp * (I - P))
            return 2 * s * out

        def Lam(w):
            e, rc = parts(w)
            return s * sl(rc)[..., None] * e

        return D, Lam


def isotropic_table(regime, potential: RadialPotential, g: Maxwellian, speeds, scale: float = 1.0,
                    options=None) -> IsotropicTable:
    """Tabulate D_par, D_perp and |Lambda| of ``coefficients`` at v = u + s e_z."""
    from .coefficients import coefficients

    speeds = np.asarray(speeds, dtype=float)
    if speeds[0] != 0 or np.any(np.diff(speeds) <= 0):
        raise ValidationError("speeds must start at 0 and increase", op="isotropic_table")
    dp, dq, lm = [], [], []
    ez = np.array([0.0, 0.0, 1.0])
    for s in speeds:
        res = coefficients(regime, g.u + s * ez, potential, g, options)
        dp.append(res.D[2, 2])
        dq.append(0.5 * (res.D[0, 0] + res.D[1, 1]))
        lm.append(res.Lambda[2])
    return IsotropicTable(speeds, np.array(dp), np.array(dq), np.array(lm), g.u.copy(), float(scale))


# ---------------------------------------------------------------- Langevin integrator


@dataclass(frozen=True)
class LangevinParams:
    """D maps (..., 3) -> (..., 3, 3) noise strengths, Lam maps (..., 3) -> (..., 3).

    ``div_D`` may supply the divergence analytically; otherwise central
    differences with step ``fd_step`` are used when ``ito_correction`` is on.
    ``frozen`` evaluates both coefficients at the initial velocity throughout.
    """

    D: Callable
    Lam: Callable
    dt: float
    n_paths: int = 1000
    ito_correction: bool = True
    div_D: Callable | None = None
    frozen: bool = False
    fd_step: float = 1e-4

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt must be positive", op="integrate_langevin")
        if self.n_paths < 1:
            raise ValidationError("n_paths must be at least 1", op="integrate_langevin")


def divergence(D: Callable, w, h: float = 1e-4) -> np.ndarray:
    """(div D)_i = sum_j d_j D_ij by central differences."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        out += (D(w + e)[..., :, j] - D(w - e)[..., :, j]) / (2 * h)
    return out


def _drift(params: LangevinParams, w):
    b = -np.asarray(params.Lam(w), dtype=float)
    if params.ito_correction:
        dv = params.div_D(w) if params.div_D is not None else divergence(params.D, w, params.fd_step)
        b = b + 0.5 * dv
    return b


def sqrt_psd(D) -> np.ndarray:
    """Symmetric square roots of a stack of 3x3 matrices; small negative eigenvalues are clipped."""
    D = np.asarray(D, dtype=float)
    S = 0.5 * (D + np.swapaxes(D, -1, -2))
    lam, Q = np.linalg.eigh(S)
    scale = np.maximum(np.abs(lam).max(axis=-1, keepdims=True), 1e-300)
    if np.any(lam < -PSD_TOL * scale):
        raise NonPSDDiffusion(f"diffusion matrix has eigenvalue {lam.min():.3g}", op="integrate_langevin")
    root = np.sqrt(np.clip(lam, 0, None))
    return np.einsum("...ab,...b,...cb->...ac", Q, root, Q)


@dataclass
class LangevinEnsemble:
    t: np.ndarray
    w: np.ndarray  # (n_t, n_paths, 3)
    x: np.ndarray  # (n_t, n_paths, 3)

    def mean(self) -> np.ndarray:
        return self.w.mean(axis=1)

    def covariance(self) -> np.ndarray:
        d = self.w - self.w.mean(axis=1, keepdims=True)
        return np.einsum("tpa,tpb->tab", d, d) / max(self.w.shape[1] - 1, 1)

    def to_csv_rows(self, path_index: int = 0):
        for k, t in enumerate(self.t):
            yield [t, *self.w[k, path_index]]


def integrate_langevin(params: LangevinParams, v0, T: float, seed: int, x0=None,
                       record_every: int = 1, chunk: int = 128) -> LangevinEnsemble:
    """Euler-Maruyama for all paths at once; path i draws from its own substream (seed, 7, i)."""
    v0 = np.asarray(v0, dtype=float)
    n_steps = int(round(T / params.dt))
    if n_steps < 1:
        raise ValidationError("horizon shorter than one step", op="integrate_langevin")
    lam0 = np.linalg.norm(params.Lam(v0))
    v_typ = max(np.linalg.norm(v0), np.sqrt(max(np.trace(np.asarray(params.D(v0))), 0.0) * params.dt), 1e-12)
    if params.dt * lam0 / v_typ >= 0.1:
        raise ValidationError("dt |Lambda| / |v| must stay below 0.1", op="integrate_langevin")
    m = params.n_paths
    gens = [krng.substream(seed, 7, i) for i in range(m)]
    w = np.tile(v0, (m, 1))
    x = np.zeros((m, 3)) if x0 is None else np.tile(np.asarray(x0, dtype=float), (m, 1))
    ts, ws, xs = [0.0], [w.copy()], [x.copy()]
    sdt = np.sqrt(params.dt)
    if params.frozen:
        S0 = sqrt_psd(params.D(v0))
        b0 = _drift(params, v0)
    step = 0
    while step < n_steps:
        n = min(chunk, n_steps - step)
        xi = np.stack([gk.standard_normal((n, 3)) for gk in gens], axis=1)
        for k in range(n):
            if params.frozen:
                S, b = S0, b0
            else:
                S = sqrt_psd(params.D(w))
                b = _drift(params, w)
            x = x + w * params.dt
            w = w + b * params.dt + sdt * np.einsum("...ab,...b->...a", S, xi[k])
            step += 1
            if step % record_every == 0 or step == n_steps:
                ts.append(step * params.dt)
                ws.append(w.copy())
                xs.append(x.copy())
    return LangevinEnsemble(np.array(ts), np.array(ws), np.array(xs))


# ---------------------------------------------------------------- moment closure


@dataclass
class MomentCurves:
    t: np.ndarray
    mean: np.ndarray  # (n_t, 3)
    second: np.ndarray  # (n_t, 3, 3), <w w>

    @property
    def covariance(self) -> np.ndarray:
        return self.second - self.mean[:, :, None] * self.mean[:, None, :]


def _closure_nodes(mean, second, z):
    cov = second - np.outer(mean, mean)
    cov = 0.5 * (cov + cov.T)
    lam, Q = np.linalg.eigh(cov)
    scale = max(abs(lam).max(), 1e-300)
    if lam.min() < -PSD_TOL * scale:
        raise ClosureBreakdown(f"covariance eigenvalue {lam.min():.3g} < 0", op="fokker_planck_moments")
    root = Q * np.sqrt(np.clip(lam, 0, None))
    return mean + z @ root.T


def _moment_rhs(params: LangevinParams, mean, second, z, wz):
    w = _closure_nodes(mean, second, z)
    D = np.asarray(params.D(w))
    Lam = np.asarray(params.Lam(w))
    if params.ito_correction:
        dv = params.div_D(w) if params.div_D is not None else divergence(params.D, w, params.fd_step)
    else:
        dv = np.zeros_like(w)
    dm = wz @ (0.5 * dv - Lam)
    wd = np.einsum("j,ja,jb->ab", wz, w, 0.5 * dv - Lam)
    ds = np.einsum("j,jab->ab", wz, D) + wd + wd.T
    return dm, ds


def fokker_planck_moments(params: LangevinParams, f0: VelocityDistribution, T: float, dt: float | None = None,
                          n_gh: int = 15, n_init: int = 8) -> MomentCurves:
    """RK4 for d<w>/dt and d<ww>/dt under a Gaussian-moment closure (approximate when D, Lambda are nonlinear).

    d<w>/dt    = <1/2 div D - Lambda>
    d<ww>/dt   = <D> + <w (1/2 div D - Lambda)^T> + transpose
    """
    dt = dt or params.dt
    n_steps = max(1, int(round(T / dt)))
    z, wz = gauss_hermite_3d(n_gh)
    # initial moments from f0 by the same Gaussian quadrature centered on its mean
    zi, wi = gauss_hermite_3d(n_init)
    if isinstance(f0, Maxwellian):
        mean = f0.u.copy()
        second = f0.temperature * np.eye(3) + np.outer(mean, mean)
    else:
        s = 1.5 * f0.v_cut()
        x = s * zi / 4
        wts = f0.pdf(f0.mean() + x) * wi / np.exp(-0.5 * np.sum(zi**2, 1)) * (2 * np.pi) ** 1.5 * (s / 4) ** 3
        nrm = wts.sum()
        pts = f0.mean() + x
        mean = wts @ pts / nrm
        second = np.einsum("j,ja,jb->ab", wts, pts, pts) / nrm
    ts, ms, ss = [0.0], [mean.copy()], [second.copy()]
    for k in range(n_steps):
        k1 = _moment_rhs(params, mean, second, z, wz)
        k2 = _moment_rhs(params, mean + 0.5 * dt * k1[0], second + 0.5 * dt * k1[1], z, wz)
        k3 = _moment_rhs(params, mean + 0.5 * dt * k2[0], second + 0.5 * dt * k2[1], z, wz)
        k4 = _moment_rhs(params, mean + dt * k3[0], second + dt * k3[1], z, wz)
        mean = mean + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        second = second + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        second = 0.5 * (second + second.T)
        ts.append((k + 1) * dt)
        ms.append(mean.copy())
        ss.append(second.copy())
    _closure_nodes(mean, second, z[:1])
    return MomentCurves(np.array(ts), np.array(ms), np.array(ss))


# ---------------------------------------------------------------- Rayleigh N-body


@dataclass(frozen=True)
class NBodySetup:
    """Tagged particle among non-interacting scatterers in a periodic box.

    The pair potential is ``eps * base(r / L)``; scatterer density and
    velocities come from ``g``.  ``skin`` pads the neighbor list.  With
    ``table`` > 0 the radial force is interpolated from that many nodes
    (faster for expensive profiles; the dynamics stay exactly reversible).
    """

    box: float
    base: RadialPotential
    g: VelocityDistribution
    V0: tuple = (0.0, 0.0, 0.0)
    X0: tuple = (0.0, 0.0, 0.0)
    eps: float = 1.0
    L: float = 1.0
    dt: float = 0.05
    horizon: float = 10.0
    record_every: int = 10
    mass_tagged: float = 1.0
    mass_scatterer: float = 1.0
    skin: float | None = None
    drift_tol: float = 1e-4
    range_tol: float = 1e-8
    table: int = 0

    def __post_init__(self):
        rng_ = self.range
        if self.box < 4 * rng_:
            raise ValidationError(f"box {self.box:g} is below 4 x range {rng_:g}", op="nbody_rayleigh")
        vmax = np.linalg.norm(self.V0) + self.g.v_cut()
        if self.eps != 0 and self.dt > rng_ / (20 * vmax):
            raise ValidationError(f"dt {self.dt:g} exceeds range/(20 v_max) = {rng_ / (20 * vmax):.3g}",
                                  op="nbody_rayleigh")

    @property
    def potential(self) -> ScaledPotential:
        return ScaledPotential(self.base, "landau", self.eps, max(self.L, 1.0))

    @property
    def range(self) -> float:
        return self.L * self.base.range(self.range_tol)

    @property
    def expected_count(self) -> float:
        return self.g.density() * self.box**3


@dataclass
class NBodyTrajectory:
    t: np.ndarray
    V: np.ndarray
    X: np.ndarray
    energy_drift: float
    n_scatterers: int
    n_rebuilds: int
    momentum: np.ndarray | None = None
    state: dict = field(default_factory=dict)


class _ForceTable:
    """Phi'(r)/r of the scaled pair potential, linearly interpolated on a fine uniform r-grid."""

    def __init__(self, p: ScaledPotential, r_max: float, n: int):
        self.r = np.linspace(0.0, r_max, n)
        with np.errstate(invalid="ignore", divide="ignore"):
            f = p.radial_deriv(self.r) / self.r
        f[0] = f[1]
        self.f = f

    def __call__(self, r):
        return np.interp(r, self.r, self.f, right=0.0)


def _pair_force(fac_of, d):
    """Force on the tagged particle from scatterers at separation d = X - x_s, and Phi'(r)/r."""
    r = np.sqrt(np.einsum("ia,ia->i", d, d))
    fac = fac_of(r)
    return -(fac @ d), fac


def _min_image(d, box):
    return d - box * np.rint(d / box)


def nbody_rayleigh(setup: NBodySetup, seed: int, scatterers=None) -> NBodyTrajectory:
    """Velocity Verlet for the tagged particle and the scatterers within its reach.

    Scatterers feel only the tagged particle.  Those farther than range + skin
    move ballistically and are advanced lazily; the neighbor list is rebuilt
    before any of them could reach the interaction range, so the force is
    identical to the all-pairs sum.  ``scatterers`` = (x, v) overrides sampling.
    """
    if setup.expected_count > MAX_PARTICLES:
        raise BudgetExceeded(f"expected {setup.expected_count:.3g} scatterers", op="nbody_rayleigh")
    box, dt = setup.box, setup.dt
    # eps = 0 leaves everything ballistic and never touches the potential
    p = setup.potential if setup.eps != 0 else None
    rc = setup.range
    skin = setup.skin if setup.skin is not None else max(0.1 * rc, 1e-9)
    if p is None:
        fac_of = None
    elif setup.table > 0:
        fac_of = _ForceTable(p, rc * 1.0001, setup.table)
    else:
        def fac_of(r):
            with np.errstate(invalid="ignore", divide="ignore"):
                return np.where(r > 0, p.radial_deriv(r) / r, 0.0)
    mt, ms = setup.mass_tagged, setup.mass_scatterer
    if scatterers is None:
        gen = krng.substream(seed, 8)
        n = gen.poisson(setup.expected_count)
        xs = gen.random((n, 3)) * box - 0.5 * box
        vs = setup.g.sample(gen, n) if n else np.zeros((0, 3))
    else:
        xs, vs = (np.array(a, dtype=float).reshape(-1, 3) for a in scatterers)
    X = np.array(setup.X0, dtype=float)
    V = np.array(setup.V0, dtype=float)
    n_steps = int(round(setup.horizon / dt))
    t_ref = 0.0
    interacting = setup.eps != 0 and len(xs) > 0

    def rebuild(t):
        nonlocal xs
        xs = _min_image(xs + vs * (t - t_ref) - X, box) + X
        d = _min_image(X - xs, box)
        idx = np.nonzero(np.linalg.norm(d, axis=1) < rc + skin)[0]
        others = np.ones(len(xs), dtype=bool)
        others[idx] = False
        vfar = float(np.linalg.norm(vs[others], axis=1).max()) if others.any() else 0.0
        return idx, vfar

    def energy(X, V, nx, nv):
        e = 0.5 * mt * V @ V + 0.5 * ms * np.sum(vs**2)
        if interacting and len(nx):
            e += 0.5 * ms * (np.sum(nv**2) - np.sum(vs[idx] ** 2))
            e += float(np.sum(p.radial(np.linalg.norm(_min_image(X - nx, box), axis=1))))
        return e

    if interacting:
        idx, vfar = rebuild(0.0)
        X_reb = X.copy()
        nx, nv = xs[idx].copy(), vs[idx].copy()
        F, fac = _pair_force(fac_of, _min_image(X - nx, box))
    else:
        idx = np.zeros(0, dtype=int)
        nx = nv = np.zeros((0, 3))
        F = np.zeros(3)
        fac = np.zeros(0)
        vfar = 0.0
        X_reb = X.copy()
    E0 = energy(X, V, nx, nv)
    n_reb = 1 if interacting else 0
    ts, Vs, Xs = [0.0], [V.copy()], [X.copy()]
    P0 = mt * V + ms * vs.sum(axis=0)
    for k in range(1, n_steps + 1):
        if interacting:
            d = _min_image(X - nx, box)
            fs = fac[:, None] * d / ms  # acceleration of each scatterer
            V = V + 0.5 * dt * F / mt
            nv = nv + 0.5 * dt * fs
            X = X + dt * V
            nx = nx + dt * nv
            F, fac = _pair_force(fac_of, _min_image(X - nx, box))
            V = V + 0.5 * dt * F / mt
            nv = nv + 0.5 * dt * fac[:, None] * _min_image(X - nx, box) / ms
            t = k * dt
            if np.linalg.norm(X - X_reb) + vfar * (t - t_ref) >= skin:
                vs[idx] = nv
                xs[idx] = nx - vs[idx] * (t - t_ref)  # back-date so the lazy update is exact
                idx, vfar = rebuild(t)
                t_ref = t
                X_reb = X.copy()
                nx, nv = xs[idx].copy(), vs[idx].copy()
                F, fac = _pair_force(fac_of, _min_image(X - nx, box))
                n_reb += 1
        else:
            X = X + dt * V
        if k % setup.record_every == 0 or k == n_steps:
            ts.append(k * dt)
            Vs.append(V.copy())
            Xs.append(X.copy())
    if interacting:
        vs[idx] = nv
        xs[idx] = nx - vs[idx] * (n_steps * dt - t_ref)
    E1 = energy(X, V, nx, nv)
    drift = abs(E1 - E0) / max(abs(E0), 1e-300)
    if drift > setup.drift_tol:
        raise EnergyDriftExceeded(f"relative energy drift {drift:.3g}", op="nbody_rayleigh")
    P1 = mt * V + ms * vs.sum(axis=0)
    xs_now = _min_image(xs + vs * (n_steps * dt - t_ref), box)
    return NBodyTrajectory(np.array(ts), np.array(Vs), np.array(Xs), float(drift), len(xs), n_reb,
                           P1 - P0, {"x": xs_now, "v": vs.copy(), "X": X, "V": V})


# ---------------------------------------------------------------- comparison


@dataclass
class ComparisonReport:
    t: np.ndarray
    langevin: np.ndarray  # trace of the velocity covariance
    nbody: np.ndarray
    nbody_se: np.ndarray
    langevin_se: np.ndarray
    T_kinetic: float
    window: tuple
    max_rel_gap: float
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"t": self.t.tolist(), "langevin": self.langevin.tolist(), "nbody": self.nbody.tolist(),
                "nbody_se": self.nbody_se.tolist(), "langevin_se": self.langevin_se.tolist(),
                "T_kinetic": self.T_kinetic, "window": list(self.window), "max_rel_gap": self.max_rel_gap,
                "meta": self.meta}


def _trace_cov(V):
    """Trace of the sample covariance over axis 0 and its delta-method standard error."""
    d = V - V.mean(axis=0, keepdims=True)
    q = np.sum(d**2, axis=-1)
    n = V.shape[0]
    return q.sum(axis=0) / max(n - 1, 1), q.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else 0 * q[0]


def _nbody_job(args):
    setup, s = args
    return nbody_rayleigh(setup, s).V


def compare_variance_growth(regime, potential: RadialPotential, g: Maxwellian, eps: float, T_macro: float = 0.5,
                            L: float = 6.0, v0=(1.0, 0.0, 0.0), n_seeds: int = 500, seed: int = 0,
                            dt: float | None = None, n_paths: int = 4000, n_times: int = 20,
                            cutoff: float | None = None, workers: int | None = 1, window=(0.1, 0.5),
                            speeds=None, options=None) -> ComparisonReport:
    """Tagged velocity covariance from the Rayleigh N-body ensemble against the Langevin surrogate.

    The base profile is truncated smoothly at ``cutoff`` (base units, default
    the 1e-3 range) so the box stays finite; the surrogate coefficients are
    computed for the same truncated profile and scaled by eps^2 L^2.
    T_kinetic = 3 T / tr D_noise(v0) is the time for the velocity variance to
    reach the thermal one; the horizon is ``T_macro`` T_kinetic.
    """
    from .potentials import Truncated

    v0 = np.asarray(v0, dtype=float)
    base = potential if cutoff == 0 else Truncated(potential, 0.5 * (cutoff or potential.range(1e-3)))
    scale = eps**2 * L**2
    zero = eps == 0 or np.all(base.value(np.linspace(0, base.range(), 64)) == 0)
    if zero:
        tab_pair = (lambda w: np.zeros(np.shape(w)[:-1] + (3, 3)), lambda w: np.zeros(np.shape(w)))
        T_kin = 1.0
    else:
        if speeds is None:
            top = np.linalg.norm(v0 - g.u) + g.v_cut()
            speeds = np.concatenate([[0.0], np.geomspace(0.05, top, 23)])
        table = isotropic_table(regime, base, g, speeds, scale, options)
        tab_pair = table.pair()
        T_kin = 3 * g.temperature / np.trace(tab_pair[0](v0))
    horizon = T_macro * T_kin
    box = 4 * L * base.range() * 1.0001
    if g.density() * box**3 > MAX_PARTICLES:
        raise BudgetExceeded(f"expected {g.density() * box**3:.3g} scatterers", op="compare_variance_growth")
    vmax = np.linalg.norm(v0) + g.v_cut()
    dt_nb = dt or min(L * base.range() / (20 * vmax), 0.1 * L)
    n_steps = int(np.ceil(horizon / dt_nb))
    rec = max(1, n_steps // n_times)
    dt_nb = horizon / (rec * n_times)
    setup = NBodySetup(box, base, g, tuple(v0), eps=eps, L=L, dt=dt_nb, horizon=horizon, record_every=rec,
                       table=8192)
    seeds = [int(krng.substream(seed, 9, i).integers(2**62)) for i in range(n_seeds)]
    t0 = _time.time()
    Vs = ordered_map(_nbody_job, [(setup, s) for s in seeds], workers)
    Vs = np.array(Vs)  # (seeds, n_t, 3)
    t_nb = _time.time() - t0
    t = horizon * np.arange(n_times + 1) / n_times
    nb, nb_se = _trace_cov(Vs)
    D, Lam = tab_pair
    lp = LangevinParams(D, Lam, dt=horizon / (n_times * 10), n_paths=n_paths)
    ens = integrate_langevin(lp, v0, horizon, seed, record_every=10)
    lv, lv_se = _trace_cov(np.swapaxes(ens.w, 0, 1))
    lo, hi = window[0] * T_kin, window[1] * T_kin
    sel = (t >= lo - 1e-9) & (t <= hi + 1e-9)
    with np.errstate(invalid="ignore", divide="ignore"):
        gap = float(np.max(np.abs(nb[sel] - lv[sel]) / np.abs(lv[sel]))) if not zero else 0.0
    meta = {"box": box, "dt": dt_nb, "n_scatterers_mean": float(g.density() * box**3), "nbody_seconds": t_nb,
            "eps": eps, "L": L, "v0": v0.tolist(), "cutoff": base.range()}
    return ComparisonReport(t, lv, nb, nb_se, lv_se, float(T_kin), (lo, hi), gap, meta)
