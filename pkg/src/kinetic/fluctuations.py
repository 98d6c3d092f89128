"""Discretized Gaussian fluctuation fields and the correlation identities they obey.

The white noise N(y, w) with covariance g(w) delta(y - y') delta(w - w') is
realized on a periodic y-lattice (spacing h_y, n_y cells per side) times a
uniform velocity lattice (spacing h_w), one independent centered Gaussian per
cell with variance g(w) / (h_y^3 h_w^3).  Free transport is a nearest-cell
backtrace per velocity cell, which keeps the law of each slice exact.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import partial

import numpy as np
from scipy import integrate

from . import rng as krng
from .dielectric import DielectricFunction, delta, penrose_check
from .distributions import Maxwellian, VelocityDistribution
from .errors import UnstableMedium, ValidationError
from .parallel import ordered_map
from .potentials import RadialPotential
from .quadrature import gauss_legendre


@dataclass(frozen=True)
class GaussianFieldSpec:
    g: VelocityDistribution
    h_y: float = 0.5
    n_y: int = 12
    h_w: float = 0.5
    w_max: float = 2.5

    def __post_init__(self):
        if not (self.h_y > 0 and self.h_w > 0 and self.w_max > 0):
            raise ValidationError("grid spacings must be positive", op="sample_N")
        if self.n_y < 2:
            raise ValidationError("n_y must be at least 2", op="sample_N")

    @property
    def w_axis(self) -> np.ndarray:
        m = int(np.floor(self.w_max / self.h_w + 1e-9))
        return self.h_w * np.arange(-m, m + 1)

    @property
    def w_nodes(self) -> np.ndarray:
        a = self.w_axis
        W = np.stack(np.meshgrid(a, a, a, indexing="ij"), -1)
        return W.reshape(-1, 3) + self.g.mean()

    @property
    def cell_volume(self) -> float:
        return self.h_y**3 * self.h_w**3

    def variances(self) -> np.ndarray:
        return self.g.pdf(self.w_nodes) / self.cell_volume

    @property
    def box(self) -> float:
        return self.n_y * self.h_y


@dataclass(frozen=True)
class FluctuationField:
    """Values on (y cells) x (velocity nodes); ``w_weights`` integrate over w."""

    values: np.ndarray
    w_nodes: np.ndarray
    w_weights: np.ndarray
    h_y: float
    time: float
    provenance: str

    def density(self) -> np.ndarray:
        return self.values @ self.w_weights

    def __add__(self, other: "FluctuationField") -> "FluctuationField":
        prov = self.provenance if self.provenance == other.provenance else "sum"
        return replace(self, values=self.values + other.values, provenance=prov)

    def scale(self, a: float) -> "FluctuationField":
        return replace(self, values=a * self.values)


def sample_N(spec: GaussianFieldSpec, seed: int, dtype=np.float64) -> FluctuationField:
    g = krng.substream(seed, 6)
    nw = len(spec.w_nodes)
    sd = np.sqrt(spec.variances()).astype(dtype)
    z = g.standard_normal((spec.n_y, spec.n_y, spec.n_y, nw), dtype=dtype)
    return FluctuationField(z * sd, spec.w_nodes, np.full(nw, spec.h_w**3), spec.h_y, 0.0, "zeta1")


def cell_shifts(w_nodes, t: float, h_y: float) -> np.ndarray:
    return np.rint(np.asarray(w_nodes) * t / h_y).astype(int)


def evolve_zeta1(field: FluctuationField, t: float) -> FluctuationField:
    """zeta1(y, w, t) = N(y - w t, w), nearest cell, periodic in y."""
    if field.provenance != "zeta1":
        raise ValidationError("evolve_zeta1 needs a zeta1 field", op="evolve_zeta1")
    if t == 0:
        return field
    out = np.empty_like(field.values)
    for j, s in enumerate(cell_shifts(field.w_nodes, t, field.h_y)):
        out[..., j] = np.roll(field.values[..., j], shift=tuple(s), axis=(0, 1, 2))
    return replace(field, values=out, time=field.time + t)


def _dc_sample(sd, n, i1, i2, shifted, seed, i):
    g = krng.substream(seed, 6, i)
    slab = g.standard_normal((len(sd), n**3)) * sd[:, None]
    r1 = np.take_along_axis(slab, i1, axis=1).sum(axis=0)
    r2 = np.take_along_axis(slab, i2, axis=1).sum(axis=0)
    return np.array([np.mean(r1[idx] * r2) for idx in shifted])


def density_correlation(spec: GaussianFieldSpec, t1: float, t2: float, offsets, n_samples: int, seed: int,
                        workers: int | None = 1):
    """E[rho1(y + d, t1) rho1(y, t2)] for cell offsets d, averaged over y and samples.

    Returns (mean, std_error) arrays over offsets.  Sample i draws the white
    noise from substream (seed, 6, i); only the two densities are formed.
    """
    offsets = np.atleast_2d(np.asarray(offsets, dtype=int))
    sd = np.sqrt(spec.variances()) * spec.h_w**3
    live = sd > 0
    sd = sd[live]
    n = spec.n_y
    cells = np.stack(np.meshgrid(*(np.arange(n),) * 3, indexing="ij"), -1).reshape(-1, 3)

    def gather(t):
        # flat index of the source cell y - s_j for every (slice j, cell y)
        src = (cells[None, :, :] - cell_shifts(spec.w_nodes[live], t, spec.h_y)[:, None, :]) % n
        return np.ravel_multi_index(tuple(np.moveaxis(src, -1, 0)), (n, n, n))

    shifted = [np.ravel_multi_index(tuple(np.moveaxis((cells + d) % n, -1, 0)), (n, n, n)) for d in offsets]
    job = partial(_dc_sample, sd, n, gather(t1), gather(t2), shifted, seed)
    vals = np.array(ordered_map(job, range(n_samples), workers))
    return vals.mean(axis=0), vals.std(axis=0, ddof=1) / np.sqrt(n_samples)


def density_correlation_limit(g: VelocityDistribution, dy, dt: float) -> np.ndarray:
    """(dt)^-3 g(dy / dt) for dt > 0."""
    if dt <= 0:
        raise ValidationError("the lag must be positive", op="density_correlation")
    return g.pdf(np.atleast_2d(dy) / dt) / dt**3


# ---------------------------------------------------------------- zeta2


@dataclass(frozen=True)
class ResponseGrid:
    """y-lattice centered on the tagged particle (a ball of radius ``half_width``).

    ``w_nodes``/``w_weights`` override the default ray rule about V0.
    """

    h_y: float = 0.5
    half_width: float = 5.0
    w_nodes: np.ndarray | None = None
    w_weights: np.ndarray | None = None

    def y_points(self) -> np.ndarray:
        m = int(round(self.half_width / self.h_y))
        a = self.h_y * np.arange(-m, m + 1)
        y = np.stack(np.meshgrid(a, a, a, indexing="ij"), -1).reshape(-1, 3)
        return y[np.linalg.norm(y, axis=1) <= self.half_width + 1e-12]


def _ray_parts(g: VelocityDistribution, center, n_r: int, n_mu: int, n_phi: int):
    center = np.asarray(center, dtype=float)
    r_max = np.linalg.norm(center - g.mean()) + g.v_cut()
    r, wr = gauss_legendre(n_r, 0.0, r_max)
    mu, wmu = gauss_legendre(n_mu, -1.0, 1.0)
    phi = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    s = np.sqrt(1 - mu**2)
    dirs = np.stack([np.outer(s, np.cos(phi)), np.outer(s, np.sin(phi)), np.outer(mu, np.ones(n_phi))], -1)
    wd = np.outer(wmu, np.full(n_phi, 2 * np.pi / n_phi)).ravel()
    return r, wr, dirs.reshape(-1, 3), wd


def ray_velocity_rule(g: VelocityDistribution, center, n_r: int = 16, n_mu: int = 8, n_phi: int = 8):
    """Nodes w = center - r n with dw weights r^2 dr dn; suited to integrands singular at w = center.

    Nodes are ordered radius-major: index = i_r * n_dirs + i_dir.
    """
    r, wr, dirs, wd = _ray_parts(g, center, n_r, n_mu, n_phi)
    nodes = np.asarray(center, dtype=float)[None, None, :] - r[:, None, None] * dirs[None, :, :]
    weights = (wr * r**2)[:, None] * wd[None, :]
    return nodes.reshape(-1, 3), weights.ravel()


def _grad_phi(potential: RadialPotential, x):
    r = np.linalg.norm(x, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(r > 0, potential.deriv(r) / r, 0.0)
    return f[..., None] * x


def _line_integrals(potential, y, n, targets, s_cap, piece=0.5, n_gl=6):
    """int_0^S grad Phi(y + n s) ds for each S in ``targets`` (clipped to s_cap)."""
    S = np.minimum(targets, s_cap)
    bps = np.unique(np.concatenate([np.arange(0.0, s_cap, piece), [s_cap], S]))
    x, wx = gauss_legendre(n_gl, 0.0, 1.0)
    a, b = bps[:-1], bps[1:]
    nodes = a[:, None] + (b - a)[:, None] * x[None, :]
    wts = (b - a)[:, None] * wx[None, :]
    f = _grad_phi(potential, y[:, None, None, :] + nodes[None, :, :, None] * n)
    pieces = np.einsum("ypka,pk->ypa", f, wts)
    cum = np.concatenate([np.zeros((len(y), 1, 3)), np.cumsum(pieces, axis=1)], axis=1)
    return cum[:, np.searchsorted(bps, S), :]


def zeta2_response(grid: ResponseGrid, g: VelocityDistribution, potential: RadialPotential, V0, t: float,
                   theta: float = 1.0, n_s: int = 401, n_r: int = 16, n_mu: int = 8,
                   n_phi: int = 8) -> FluctuationField:
    """zeta2 in the frame of the tagged particle, y' = y - V0 t:

        zeta2(y', w, t) = theta grad g(w) . int_0^t grad Phi(y' + (V0 - w) tau) d tau,

    which is the stated formula after the substitution tau = t - s.

    With the default ray rule (w = V0 - r n) the tau-integral becomes a line
    integral, (1/r) int_0^{r t} grad Phi(y' + n s) ds, accumulated once per
    direction for every radius.  Custom velocity nodes fall back to composite
    Simpson in tau with ``n_s`` nodes.
    """
    V0 = np.asarray(V0, dtype=float)
    y = grid.y_points()
    if grid.w_nodes is None:
        r, wr, dirs, wd = _ray_parts(g, V0, n_r, n_mu, n_phi)
        w = (V0[None, None, :] - r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
        ww = ((wr * r**2)[:, None] * wd[None, :]).ravel()
        vals = np.zeros((len(y), len(r), len(dirs)))
        if t > 0 and theta != 0:
            gw = g.grad(w).reshape(len(r), len(dirs), 3)
            s_cap = grid.half_width + potential.range(1e-10)
            for j, n in enumerate(dirs):
                G = _line_integrals(potential, y, n, r * t, s_cap)
                vals[:, :, j] = theta * np.einsum("yra,ra->yr", G, gw[:, j, :]) / r[None, :]
        return FluctuationField(vals.reshape(len(y), -1), w, ww, grid.h_y, float(t), "zeta2")
    w, ww = np.asarray(grid.w_nodes), np.asarray(grid.w_weights)
    vals = np.zeros((len(y), len(w)))
    if t > 0 and theta != 0:
        if n_s % 2 == 0:
            n_s += 1
        tau = np.linspace(0.0, t, n_s)
        ws = np.full(n_s, 2.0)
        ws[1::2] = 4.0
        ws[0] = ws[-1] = 1.0
        ws *= (tau[1] - tau[0]) / 3.0
        gw = g.grad(w)
        u = V0 - w
        for tk, wk in zip(tau, ws):
            vals += wk * np.einsum("ywa,wa->yw", _grad_phi(potential, y[:, None, :] + tk * u[None, :, :]), gw)
        vals *= theta
    return FluctuationField(vals, w, ww, grid.h_y, float(t), "zeta2")


def response_force(field: FluctuationField, potential: RadialPotential, grid: ResponseGrid) -> np.ndarray:
    """F = int grad Phi(y') rho2(y') dy' on the co-moving lattice."""
    y = grid.y_points()
    rho = field.density()
    return grid.h_y**3 * np.einsum("ya,y->a", _grad_phi(potential, y), rho)


# ---------------------------------------------------------------- force correlation


def _require_centered(model: DielectricFunction):
    g = model.g
    if not isinstance(g, Maxwellian) or np.any(g.u != 0):
        raise ValidationError("force_correlation_fourier needs a centered Maxwellian g", op="force_correlation_fourier")


def _fc_setup(model, n_k, n_mu, n_s, s_max):
    from .coefficients import radial_rule
    _require_centered(model)
    if not model.off:
        kp = np.geomspace(1e-2, 10, 12)[:, None] * np.array([1.0, 0.0, 0.0])
        if not penrose_check(model, kp).stable:
            raise UnstableMedium("Delta has zeros in Re z > 0", op="force_correlation_fourier")
    kap, wk = radial_rule(model.potential, n_k)
    mu, wmu = gauss_legendre(n_mu, -1.0, 1.0)
    T = model.g.temperature
    s = np.linspace(-s_max, s_max, n_s) * np.sqrt(T)
    ws = np.full(n_s, s[1] - s[0])
    ws[0] = ws[-1] = 0.5 * (s[1] - s[0])
    H = model.g.n * np.exp(-0.5 * s**2 / T) / np.sqrt(2 * np.pi * T)
    if model.off:
        inv = np.ones((n_k, n_s))
    else:
        kv = kap[:, None, None] * np.array([1.0, 0.0, 0.0])
        inv = 1.0 / np.abs(delta(model, np.broadcast_to(kv, (n_k, n_s, 3)), -1j * kap[:, None] * s[None, :])) ** 2
    base = wk * kap**4 * np.abs(model.potential.fourier(kap)) ** 2
    return kap, base, mu, wmu, s, ws * H, inv


def _assemble(v, mu, scal_par, scal_perp):
    """Axisymmetric tensor a_par e e + a_perp (I - e e) with e = v/|v|."""
    vn = np.linalg.norm(v)
    e = v / vn if vn > 0 else np.array([0.0, 0.0, 1.0])
    P = np.outer(e, e)
    return scal_par * P + scal_perp * (np.eye(3) - P)


def force_correlation_fourier(model: DielectricFunction, v, lags, n_k: int = 64, n_mu: int = 48,
                              n_s: int = 1601, s_max: float = 8.0) -> np.ndarray:
    """E[F (x) F](lag) = int g(w0) dw0 int (k (x) k) |Phi_hat|^2 e^{i k.(w0 - v) lag} / |Delta(k, -i k.w0)|^2 dk.

    With k = kappa khat and s = khat.w0, the w0-integral reduces to the
    Radon slice H(s) (independent of khat for a centered Maxwellian), and the
    azimuth about v averages khat khat to mu^2 e e + (1 - mu^2)/2 (I - e e).
    """
    v = np.asarray(v, dtype=float)
    kap, base, mu, wmu, s, wsH, inv = _fc_setup(model, n_k, n_mu, n_s, s_max)
    vn = np.linalg.norm(v)
    out = []
    for lag in np.atleast_1d(lags):
        # phase kappa (s - mu |v|) lag; the odd part cancels between +-mu
        ph = np.cos(np.multiply.outer(kap, np.subtract.outer(s, mu * vn)) * lag)  # (k, s, mu)
        core = np.einsum("k,ks,s,ksm->m", base, inv, wsH, ph)
        par = 2 * np.pi * np.sum(wmu * core * mu**2)
        perp = 2 * np.pi * np.sum(wmu * core * 0.5 * (1 - mu**2))
        out.append(_assemble(v, mu, par, perp))
    return np.array(out)


def force_correlation_integral(model: DielectricFunction, v, L: float, n_k: int = 64, n_mu: int = 48,
                               n_s: int = 4001, s_max: float = 8.0) -> np.ndarray:
    """int_0^L E[F (x) F](lag) d lag, the lag integral done in closed form: sin(a L)/a."""
    v = np.asarray(v, dtype=float)
    kap, base, mu, wmu, s, wsH, inv = _fc_setup(model, n_k, n_mu, n_s, s_max)
    vn = np.linalg.norm(v)
    a = np.multiply.outer(kap, np.subtract.outer(s, mu * vn))
    with np.errstate(divide="ignore", invalid="ignore"):
        ker = np.where(np.abs(a) > 1e-14, np.sin(a * L) / a, L)
    core = np.einsum("k,ks,s,ksm->m", base, inv, wsH, ker)
    par = 2 * np.pi * np.sum(wmu * core * mu**2)
    perp = 2 * np.pi * np.sum(wmu * core * 0.5 * (1 - mu**2))
    return _assemble(v, mu, par, perp)
