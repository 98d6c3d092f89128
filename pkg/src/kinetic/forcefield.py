"""Random force fields on Poisson configurations and tagged-particle deflections.

Two ways of measuring the deflection d(T) = int_0^T F(V t, t) dt of a tagged
particle moving on a straight line are provided:

* ``method="direct"`` samples a full Poisson ball, evaluates the field on a
  time grid and integrates with Simpson's rule.  Small cases only.
* ``method="tube"`` samples only scatterers whose relative path passes
  within ``r_out`` of the tagged particle, organised in tube shells around
  the relative segment, and integrates each pair interaction in closed form
  (or by Gauss-Legendre quadrature in a hyperbolic variable).  Optional
  thinning keeps at most ``m_target`` particles per shell and rescales the
  retained charges by 1/sqrt(p), which leaves the mean (zero by
  electroneutrality) and the covariance of d(T) unbiased.

The time-domain correlation kernel K(V; tau) and its integrals are computed
from the autocorrelation A = Phi * Phi, built in real space from 1D radial
integrals, independently of any Fourier transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache, partial

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from . import rng as krng
from .distributions import Maxwellian, MaxwellianMixture, SpeciesSet, Tabulated, VelocityDistribution
from .errors import NonIntegrableKernel, ParticleOverlap, StepTooCoarse, ValidationError
from .parallel import ordered_map
from .pointprocess import ParticleConfiguration, sample_poisson
from .potentials import CoulombReg, Gaussian, RadialPotential, ScaledPotential
from .quadrature import gauss_hermite_3d, gauss_legendre, psd_clip, sphere_rule


# ---------------------------------------------------------------- force sums


@dataclass(frozen=True)
class ForceSample:
    value: np.ndarray
    truncation_radius: float
    n_particles_used: int


def _pair_gradients(p, x, xs, vs, tau):
    rel = x[None, :] - xs - vs * tau
    if p.singular:
        d = np.linalg.norm(rel, axis=1)
        if d.size and d.min() < 1e-9 * p.amp_length[1]:
            raise ParticleOverlap("tagged point coincides with a scatterer", op="force_at")
    return p.gradient(rel)


def force_at(config: ParticleConfiguration, p: ScaledPotential, charges, x, tau: float = 0.0,
             R_trunc: float | None = None) -> ForceSample:
    """-sum_l sum_{|x_k| <= R_trunc} Q_l grad Phi_eps(x - x_k - v_k tau), exact pairwise sum."""
    x = np.asarray(x, dtype=float)
    R = config.R if R_trunc is None else float(R_trunc)
    total = np.zeros(3)
    used = 0
    for Q, xs, vs in zip(charges, config.x, config.v):
        sel = np.linalg.norm(xs, axis=1) <= R
        if not sel.any():
            continue
        grads = _pair_gradients(p, x, xs[sel], vs[sel], tau)
        total -= Q * grads.sum(axis=0)
        used += int(sel.sum())
    return ForceSample(total, R, used)


@dataclass(frozen=True)
class ShellStats:
    index: int
    samples: np.ndarray
    second_moment: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.second_moment))


def dyadic_shells(config: ParticleConfiguration, p: ScaledPotential, charges, x, tau: float,
                  N_max: int) -> list[np.ndarray]:
    """Force contributions f_j from particles with 2^(j-1) < |x_k| <= 2^j (j=0 is |x_k| <= 1)."""
    if 2.0**N_max > config.R * (1 + 1e-12):
        raise ValidationError("2^N_max exceeds the sampling radius", op="dyadic_shells")
    x = np.asarray(x, dtype=float)
    out = [np.zeros(3) for _ in range(N_max + 1)]
    for Q, xs, vs in zip(charges, config.x, config.v):
        r = np.linalg.norm(xs, axis=1)
        j = np.where(r <= 1.0, 0, np.ceil(np.log2(np.maximum(r, 1e-300))).astype(int))
        keep = r <= 2.0**N_max
        if not keep.any():
            continue
        grads = -Q * _pair_gradients(p, x, xs[keep], vs[keep], tau)
        jj = j[keep]
        for s in range(N_max + 1):
            m = jj == s
            if m.any():
                out[s] = out[s] + grads[m].sum(axis=0)
    return out


def shell_ensemble(species: SpeciesSet, p: ScaledPotential, x, tau: float, N_max: int,
                   n_seeds: int, seed: int) -> list[ShellStats]:
    charges = [s.charge for s in species]
    R = 2.0**N_max
    samples = np.zeros((N_max + 1, n_seeds, 3))
    for i in range(n_seeds):
        cfg = sample_poisson(species, R, _sample_seed(seed, i))
        for j, f in enumerate(dyadic_shells(cfg, p, charges, x, tau, N_max)):
            samples[j, i] = f
    return [ShellStats(j, samples[j], samples[j].T @ samples[j] / n_seeds) for j in range(N_max + 1)]


def _sample_seed(seed: int, i: int) -> int:
    return int(krng.substream(seed, 3, i).integers(2**63))


# ---------------------------------------------------------------- velocity rules


def velocity_rule(g: VelocityDistribution, n: int = 20):
    """Nodes v (m, 3) and weights with sum_j w_j f(v_j) ~ int g(v) f(v) dv."""
    if isinstance(g, Maxwellian):
        z, w = gauss_hermite_3d(n)
        return g.u + np.sqrt(g.temperature) * z, g.n * w
    if isinstance(g, MaxwellianMixture):
        parts = [velocity_rule(c, n) for c in g.components]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
    if isinstance(g, Tabulated):
        mesh = g._mesh().reshape(-1, 3)
        vals = g.values.ravel() * np.prod(g.h)
        keep = vals > 0
        return mesh[keep], vals[keep]
    raise ValidationError("no quadrature rule for this distribution", op="velocity_rule")


def mean_relative_speed(g: VelocityDistribution, V) -> float:
    """E_g |V - v| per unit density (closed form for Gaussian kinds)."""
    V = np.asarray(V, dtype=float)
    comps = None
    if isinstance(g, Maxwellian):
        comps = [g]
    elif isinstance(g, MaxwellianMixture):
        comps = list(g.components)
    if comps is not None:
        tot = 0.0
        for c in comps:
            sd = np.sqrt(c.temperature)
            lam = np.linalg.norm(V - c.u) / sd
            if lam < 1e-6:
                m = 2 * np.sqrt(2 / np.pi)
            else:
                m = np.sqrt(2 / np.pi) * np.exp(-0.5 * lam**2) + (lam + 1 / lam) * special.erf(lam / np.sqrt(2))
            tot += c.n * sd * m
        return tot / g.density()
    v, w = velocity_rule(g)
    return float(np.sum(w * np.linalg.norm(V - v, axis=1)) / np.sum(w))


# ---------------------------------------------------------------- line integrals


def perp_line_integral(base: RadialPotential, b, speed, t0, t1, panels: int = 24, nodes: int = 8):
    """int_{t0}^{t1} Phi'(rho)/rho dt with rho = sqrt(b^2 + speed^2 t^2), vectorized.

    Closed forms for the Gaussian and regularized Coulomb profiles; otherwise
    composite Gauss-Legendre in sigma with t = (b/speed) sinh(sigma).
    """
    b, speed, t0, t1 = (np.asarray(a, dtype=float) for a in (b, speed, t0, t1))
    if isinstance(base, Gaussian):
        A, w = base.amplitude, base.width
        e = special.erf(speed * t1 / (np.sqrt(2) * w)) - special.erf(speed * t0 / (np.sqrt(2) * w))
        return -(A / w) * np.sqrt(np.pi / 2) / speed * np.exp(-0.5 * (b / w) ** 2) * e
    if isinstance(base, CoulombReg):
        c2 = b**2 + base.core**2

        def prim(t):
            return t / (c2 * np.sqrt(speed**2 * t**2 + c2))

        return -base.A * (prim(t1) - prim(t0))
    return perp_line_integral_numeric(base, b, speed, t0, t1, panels, nodes)


def perp_line_integral_numeric(base: RadialPotential, b, speed, t0, t1, panels: int = 24, nodes: int = 8):
    b, speed, t0, t1 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (b, speed, t0, t1)))
    bb = np.maximum(b, 1e-12)
    s0 = np.arcsinh(speed * t0 / bb)
    s1 = np.arcsinh(speed * t1 / bb)
    x, w = gauss_legendre(nodes)
    edges = np.linspace(0.0, 1.0, panels + 1)
    total = np.zeros(b.shape)
    for a, c in zip(edges[:-1], edges[1:]):
        lo = s0 + a * (s1 - s0)
        hi = s0 + c * (s1 - s0)
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        sig = mid[..., None] + half[..., None] * x
        total += half * np.sum(w * base.deriv(bb[..., None] * np.cosh(sig)), axis=-1)
    # dt = (b/speed) cosh(sigma) dsigma and rho = b cosh(sigma)
    return total / speed


def pair_deflections(p: ScaledPotential, x, u, T: float) -> np.ndarray:
    """int_0^T grad Phi_eps(u t - x) dt for each scatterer (rows of x, u)."""
    x = np.atleast_2d(x)
    u = np.atleast_2d(u)
    amp, l = p.amp_length
    sp = np.linalg.norm(u, axis=1)
    sp = np.maximum(sp, 1e-300)
    ts = np.sum(x * u, axis=1) / sp**2
    rperp = u * ts[:, None] - x
    b = np.linalg.norm(rperp, axis=1)
    r0 = np.linalg.norm(x, axis=1)
    r1 = np.linalg.norm(u * T - x, axis=1)
    base = p.base
    par = amp * (base.value(r1 / l) - base.value(r0 / l)) / sp**2
    # rescale to base units: lengths by l, times by l
    perp = (amp / l) * perp_line_integral(base, b / l, sp, -ts / l, (T - ts) / l)
    return par[:, None] * u + perp[:, None] * rperp


# ---------------------------------------------------------------- deflection ensembles


@dataclass(frozen=True)
class DeflectionEnsemble:
    T: float
    samples: np.ndarray
    covariance: np.ndarray
    std_error: np.ndarray
    mean: np.ndarray
    mean_std_error: np.ndarray
    clipped: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def trace(self) -> float:
        return float(np.trace(self.covariance))

    @property
    def trace_std_error(self) -> float:
        d2 = np.sum((self.samples - self.mean) ** 2, axis=1)
        return float(d2.std(ddof=1) / np.sqrt(len(d2)))


def _ensemble(T, samples, meta) -> DeflectionEnsemble:
    n = len(samples)
    mean = samples.mean(axis=0)
    c = samples - mean
    cov = c.T @ c / (n - 1)
    outer = c[:, :, None] * c[:, None, :]
    se = outer.reshape(n, 9).std(axis=0, ddof=1).reshape(3, 3) / np.sqrt(n)
    cov, clipped = psd_clip(cov)
    return DeflectionEnsemble(T, samples, cov, se, mean, samples.std(axis=0, ddof=1) / np.sqrt(n), clipped, meta)


def tube_volume(r, length):
    r = np.asarray(r, dtype=float)
    return np.pi * r**2 * length + 4.0 / 3.0 * np.pi * r**3


def sample_in_tube(g: np.random.Generator, r: float, ends: np.ndarray) -> np.ndarray:
    """Uniform points within distance r of the segments [0, ends_i] (one point per row)."""
    m = len(ends)
    length = np.linalg.norm(ends, axis=1)
    d = ends / np.maximum(length, 1e-300)[:, None]
    p_cyl = np.pi * r**2 * length / tube_volume(r, length)
    cyl = g.random(m) < p_cyl
    out = np.empty((m, 3))
    # cylinder part
    t = g.random(m) * length
    rho = r * np.sqrt(g.random(m))
    ang = 2 * np.pi * g.random(m)
    tmp = np.where(np.abs(d[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = np.cross(d, tmp)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(d, e1)
    pc = t[:, None] * d + rho[:, None] * (np.cos(ang)[:, None] * e1 + np.sin(ang)[:, None] * e2)
    # end caps: a ball split into the two half-balls at the ends
    z = g.standard_normal((m, 3))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    pb = z * (r * g.random(m) ** (1 / 3))[:, None]
    fwd = np.sum(pb * d, axis=1) > 0
    pb = pb + np.where(fwd[:, None], ends, 0.0)
    out[cyl] = pc[cyl]
    out[~cyl] = pb[~cyl]
    return out


def segment_distance(x, ends):
    length2 = np.maximum(np.sum(ends**2, axis=1), 1e-300)
    t = np.clip(np.sum(x * ends, axis=1) / length2, 0.0, 1.0)
    return np.linalg.norm(x - t[:, None] * ends, axis=1)


def _size_biased_velocities(g: np.random.Generator, dist: VelocityDistribution, V, n: int,
                            lin: float, const: float) -> np.ndarray:
    """Draw v with density proportional to g(v) (lin |V - v| + const)."""
    if n == 0:
        return np.zeros((0, 3))
    Ebar = mean_relative_speed(dist, V)
    p_lin = lin * Ebar / (lin * Ebar + const)
    n_lin = g.binomial(n, p_lin)
    plain = dist.sample(g, n - n_lin)
    bound = np.linalg.norm(V - dist.mean()) + 2.0 * dist.v_cut()
    got = []
    need = n_lin
    while need > 0:
        cand = dist.sample(g, max(16, int(need * bound / max(Ebar, 1e-12) * 1.3) + 16))
        acc = g.random(len(cand)) * bound < np.linalg.norm(V - cand, axis=1)
        take = cand[acc][:need]
        got.append(take)
        need -= len(take)
    out = np.concatenate([plain] + got) if got else plain
    return out[g.permutation(len(out))]


def tube_shell_radii(r_in: float, r_out: float, ratio: float = 2.0) -> np.ndarray:
    n = max(1, int(np.ceil(np.log(r_out / r_in) / np.log(ratio))))
    return r_in * ratio ** np.arange(n + 1) if n else np.array([r_out])


def _tube_sample(species: SpeciesSet, p: ScaledPotential, V, T, radii, m_target, seed, index,
                 shell_out: bool = False):
    """One realization of d(T) from tube shells; returns d (and per-shell parts if requested)."""
    V = np.asarray(V, dtype=float)
    d = np.zeros(3)
    parts = np.zeros((len(radii), 3))
    for si, sp in enumerate(species):
        dist = sp.dist
        n0 = dist.density()
        if n0 == 0:
            continue
        Ebar = mean_relative_speed(dist, V)
        for j, r in enumerate(radii):
            r_prev = radii[j - 1] if j else 0.0
            lin = np.pi * (r**2 - r_prev**2) * T
            const = 4.0 / 3.0 * np.pi * (r**3 - r_prev**3)
            mean_count = n0 * (lin * Ebar + const)
            keep_p = min(1.0, m_target / mean_count) if np.isfinite(m_target) else 1.0
            g = krng.substream(seed, 4, index, si, j)
            count = g.poisson(mean_count * keep_p)
            if count == 0:
                continue
            v = _size_biased_velocities(g, dist, V, count, lin, const)
            u = V - v
            ends = u * T
            x = np.empty((count, 3))
            todo = np.arange(count)
            while todo.size:
                cand = sample_in_tube(g, r, ends[todo])
                ok = segment_distance(cand, ends[todo]) > r_prev
                x[todo[ok]] = cand[ok]
                todo = todo[~ok]
            contrib = -sp.charge / np.sqrt(keep_p) * pair_deflections(p, x, u, T).sum(axis=0)
            d += contrib
            parts[j] += contrib
    return (d, parts) if shell_out else d


def _direct_sample(species: SpeciesSet, p: ScaledPotential, V, T, R, dt, seed, index):
    cfg = sample_poisson(species, R, _sample_seed(seed, index))
    n_steps = int(np.ceil(T / dt))
    n_steps += n_steps % 2
    t = np.linspace(0.0, T, n_steps + 1)
    charges = [s.charge for s in species]
    F = np.array([force_at(cfg, p, charges, np.asarray(V) * ti, ti).value for ti in t])
    return integrate.simpson(F, x=t, axis=0)


def interaction_length(p: ScaledPotential) -> float:
    base = p.base
    for attr in ("core", "width", "radius", "length"):
        val = getattr(base, attr, None)
        if val:
            return p.amp_length[1] * float(val)
    return p.amp_length[1]


def deflection_mc(species: SpeciesSet, p: ScaledPotential, V, T: float, n_samples: int, seed: int,
                  method: str = "tube", r_out: float | None = None, r_in: float | None = None,
                  m_target: float = np.inf, R: float | None = None, dt: float | None = None,
                  shells: bool = False, workers: int | None = 1) -> DeflectionEnsemble:
    """Ensemble of frozen-trajectory deflections d(T) = int_0^T F(V t, t) dt."""
    V = np.asarray(V, dtype=float)
    if n_samples < 2:
        raise ValidationError("need at least two samples", op="deflection_mc")
    meta = {"method": method, "n_samples": n_samples}
    if method == "direct":
        ell = interaction_length(p)
        v_typ = np.linalg.norm(V) + max(sp.dist.v_cut() for sp in species)
        dt_max = ell / v_typ / 20.0
        if dt is None:
            dt = dt_max
        elif dt > dt_max * (1 + 1e-12):
            raise StepTooCoarse(f"dt={dt:g} exceeds {dt_max:g}", op="deflection_mc")
        if R is None:
            R = np.linalg.norm(V) * T + p.range(1e-8) + max(sp.dist.v_cut() for sp in species) * T
        job = partial(_direct_sample, species, p, V, T, R, dt, seed)
        samples = np.array(ordered_map(job, range(n_samples), workers))
        meta.update(R=float(R), dt=float(dt))
        return _ensemble(T, samples, meta)
    if method != "tube":
        raise ValidationError(f"unknown method {method!r}", op="deflection_mc")
    if r_out is None:
        if p.base.decay.kind != "fast":
            raise ValidationError("r_out is required for slowly decaying potentials", op="deflection_mc")
        r_out = p.range(1e-10)
    if r_in is None:
        r_in = r_out
    radii = tube_shell_radii(r_in, r_out)
    job = partial(_tube_sample, species, p, V, T, radii, m_target, seed, shell_out=shells)
    out = ordered_map(job, range(n_samples), workers)
    meta.update(r_out=float(r_out), r_in=float(r_in), m_target=float(m_target), n_shells=len(radii))
    if shells:
        samples = np.array([o[0] for o in out])
        parts = np.array([o[1] for o in out])
        meta["shell_radii"] = radii.tolist()
        meta["shell_second_moments"] = [float(np.mean(np.sum(parts[:, j] ** 2, axis=1))) for j in range(len(radii))]
    else:
        samples = np.array(out)
    return _ensemble(T, samples, meta)


# ---------------------------------------------------------------- correlation kernel


class Autocorrelation:
    """Radial autocorrelation A = Phi * Phi of a profile, through its derivatives.

    L = Laplacian(A) is obtained from B = r A via
        B''(r) = 2 pi int_0^inf s Phi(s) [q'(r+s) - q'(|r-s|)] ds,  q'(t) = Phi(t) + t Phi'(t),
    which converges for coulomb-like tails where A itself does not.  Then
    A'(r) = r^-2 int_0^r rho^2 L(rho) d rho and A'' = L - 2 A'/r.  The force
    autocorrelation is C(b) = int grad Phi(xi + b) (x) grad Phi(xi) d xi
    = -[A'' bb + (A'/r)(I - bb)].
    """

    def __init__(self, base: RadialPotential, n_grid: int = 300, r_max: float | None = None):
        self.base = base
        self.coulomb = base.decay.kind != "fast"
        if base.decay.kind == "intermediate":
            raise NonIntegrableKernel("intermediate decay: K is not integrable in time", op="kernel_K")
        if getattr(base, "singular", False):
            raise NonIntegrableKernel("singular profile: grad Phi is not square integrable", op="kernel_K")
        core = base.core_cutoff or getattr(base, "width", None) or getattr(base, "radius", None) or 1.0
        scale = base.range(1e-14) if not self.coulomb else 50.0 * core
        self.s_cut = scale
        self.r_max = r_max or (2.0 * scale if not self.coulomb else 1e5)
        r = np.concatenate([[0.0], np.geomspace(1e-3 * core, self.r_max, n_grid)])
        self.r = r
        L = np.array([self._laplacian(ri) for ri in r])
        self.L = L
        Ls = CubicSpline(r, L)
        # a1 = A'(r)/r = r^-3 int_0^r rho^2 L(rho) d rho, accumulated panel by panel
        x, w = gauss_legendre(16, 0.0, 1.0)
        lo, hi = r[:-1], r[1:]
        pts = lo[:, None] + (hi - lo)[:, None] * x
        panel = (hi - lo) * np.sum(w * pts**2 * Ls(pts), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(panel)])
        with np.errstate(divide="ignore", invalid="ignore"):
            a1 = np.where(r > 0, cum / r**3, L[0] / 3.0)
        self.a1 = a1  # A'(r)/r
        self.a2 = L - 2 * a1  # A''(r)
        self._a1 = CubicSpline(r, a1)
        self._a2 = CubicSpline(r, self.a2)
        self._tail_dA = a1[-1] * r[-1]

    def _laplacian(self, r: float) -> float:
        base = self.base
        if r == 0.0:
            f = lambda s: s * s * base.deriv(s) ** 2
            val, _ = integrate.quad(f, 0, self.s_cut if not self.coulomb else np.inf, limit=400,
                                    epsabs=1e-14, epsrel=1e-12)
            return -4 * np.pi * val

        def qp(t):
            return base.value(t) + t * base.deriv(t)

        def f(s):
            return s * base.value(s) * (qp(r + s) - qp(abs(r - s)))

        upper = self.s_cut + r if not self.coulomb else np.inf
        pts = [r] if r < upper else None
        if np.isfinite(upper):
            val, _ = integrate.quad(f, 0, upper, points=pts, limit=500, epsabs=1e-14, epsrel=1e-12)
        else:
            v1, _ = integrate.quad(f, 0, 2 * r + self.s_cut, points=[r], limit=500, epsabs=1e-14, epsrel=1e-12)
            v2, _ = integrate.quad(f, 2 * r + self.s_cut, np.inf, limit=500, epsabs=1e-14, epsrel=1e-12)
            val = v1 + v2
        return 2 * np.pi * val / r

    def dA_over_r(self, r):
        r = np.asarray(r, dtype=float)
        inside = r <= self.r[-1]
        out = np.where(inside, self._a1(np.minimum(r, self.r[-1])), 0.0)
        if self.coulomb:
            out = np.where(inside, out, self._tail_dA / np.maximum(r, 1e-300))
        return out

    def d2A(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.r[-1], self._a2(np.minimum(r, self.r[-1])), 0.0)

    def C(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        r = np.linalg.norm(b, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            bh = np.where(r[..., None] > 0, b / r[..., None], 0.0)
        a1 = self.dA_over_r(r)
        a2 = self.d2A(r)
        P = bh[..., :, None] * bh[..., None, :]
        eye = np.eye(3)
        return -(a2[..., None, None] * P + a1[..., None, None] * (eye - P))

    def line_integral(self) -> float:
        """J = -int_0^inf A'(s)/s ds, so that int_R C(u s) ds = 2 J (I - uu)."""
        if self.coulomb:
            raise NonIntegrableKernel("coulomb-like: the lag integral diverges logarithmically", op="kernel_integral")
        return -float(self._a1.integrate(0.0, self.r[-1]))


@lru_cache(maxsize=32)
def autocorrelation(base: RadialPotential) -> Autocorrelation:
    return Autocorrelation(base)


def _grad_weights(g: VelocityDistribution, v, w):
    """Turn a rule for int g f into one for int grad g f: weights w_j grad g / g at the nodes."""
    dens = g.pdf(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dens[:, None] > 0, g.grad(v) / dens[:, None], 0.0)
    return w[:, None] * ratio


def kernel_K(p_base: RadialPotential, g: VelocityDistribution, V, tau: float, n_gh: int = 24,
             form: str = "auto", tau_switch: float = 1.0, weight: str = "g") -> np.ndarray:
    """K(V; tau) = int dxi int g(dv) grad Phi(xi + (V - v) tau) (x) grad Phi(xi).

    ``weight="grad"`` replaces g by grad g and returns the vector
    int C((V - v) tau) grad g(v) dv instead.
    """
    ac = autocorrelation(p_base)
    V = np.asarray(V, dtype=float)
    tau = float(tau)
    if form == "auto":
        form = "v" if (abs(tau) <= tau_switch or ac.coulomb) else "b"
    if form == "v":
        v, w = velocity_rule(g, n_gh)
        if weight == "grad":
            return np.einsum("jb,jab->a", _grad_weights(g, v, w), ac.C((V - v) * tau))
        return np.einsum("j,jab->ab", w, ac.C((V - v) * tau))
    t = abs(tau)
    b_max = ac.r[-1]
    rr, wr = gauss_legendre(160, 0.0, b_max)
    dirs, wd = sphere_rule(32, 64)
    total = np.zeros(3) if weight == "grad" else np.zeros((3, 3))
    for ri, wi in zip(rr, wr):
        b = ri * dirs
        Cb = ac.C(b)
        if weight == "grad":
            gv = g.grad(V - b / t)
            total += wi * ri**2 * np.einsum("j,jb,jab->a", wd, gv, Cb)
        else:
            gv = g.pdf(V - b / t)
            total += wi * ri**2 * np.einsum("j,j,jab->ab", wd, gv, Cb)
    return total / t**3


def kernel_integral(p_base: RadialPotential, g: VelocityDistribution, V, n_gh: int = 24,
                    tau_switch: float = 1.0, epsrel: float = 1e-7):
    """Two-sided lag integral int_R K(V; tau) d tau (K is even in tau).

    Returns (matrix, error estimate).
    """
    ac = autocorrelation(p_base)
    if ac.coulomb:
        raise NonIntegrableKernel("coulomb-like kernel decays like 1/tau", op="kernel_diffusion")
    f1 = lambda t: kernel_K(p_base, g, V, t, n_gh, form="v")
    f2 = lambda t: kernel_K(p_base, g, V, t, n_gh, form="b")
    i1, e1 = integrate.quad_vec(f1, 0.0, tau_switch, epsrel=epsrel, epsabs=1e-12)
    i2, e2 = integrate.quad_vec(f2, tau_switch, np.inf, epsrel=epsrel, epsabs=1e-12)
    return 2.0 * (i1 + i2), 2.0 * (e1 + e2)


def kernel_diffusion(p_base: RadialPotential, g: VelocityDistribution, V, n_gh: int = 24,
                     tau_switch: float = 1.0):
    """One-sided lag integral int_0^inf K d tau, symmetrized and PSD-repaired.

    This is half the two-sided integral; it is the normalization under which
    the time-domain and Fourier-domain coefficient formulas coincide.
    Returns (matrix, clipped eigenvalue mass, error estimate).
    """
    M, err = kernel_integral(p_base, g, V, n_gh, tau_switch)
    D, clipped = psd_clip(0.5 * M)
    return D, clipped, 0.5 * err


def kernel_friction(p_base: RadialPotential, g: VelocityDistribution, V, n_gh: int = 24,
                    tau_switch: float = 1.0, epsrel: float = 1e-7):
    """-int_0^inf int C((V - v) s) grad g(v) dv ds, the friction partner of kernel_diffusion.

    Returns (vector, error estimate).
    """
    ac = autocorrelation(p_base)
    if ac.coulomb:
        raise NonIntegrableKernel("coulomb-like kernel decays like 1/tau", op="kernel_friction")
    f1 = lambda t: kernel_K(p_base, g, V, t, n_gh, form="v", weight="grad")
    f2 = lambda t: kernel_K(p_base, g, V, t, n_gh, form="b", weight="grad")
    i1, e1 = integrate.quad_vec(f1, 0.0, tau_switch, epsrel=epsrel, epsabs=1e-12)
    i2, e2 = integrate.quad_vec(f2, tau_switch, np.inf, epsrel=epsrel, epsabs=1e-12)
    return -(i1 + i2), e1 + e2


def kernel_plateau(p_base: RadialPotential, g: VelocityDistribution, V, taus, n_gh: int = 32) -> np.ndarray:
    """s K(V; s) at the given lags; tends to Gamma(V) for coulomb-like profiles."""
    return np.array([t * kernel_K(p_base, g, V, t, n_gh, form="v") for t in taus])


# ---------------------------------------------------------------- Boltzmann-Grad time


def estimate_T_BG(lam: float) -> float:
    if lam <= 0:
        raise ValidationError("collision length must be positive", op="estimate_T_BG")
    return lam**-2


def tube_hit_probability(dist: VelocityDistribution, V, lam: float, tau: float, n_seeds: int, seed: int,
                         margin: float = 2.0):
    """Monte Carlo probability that a scatterer comes within lam of the tagged path before tau.

    Each seed realizes the Poisson scatterers inside the enlarged region of
    relative paths passing within margin * lam of the origin (velocities
    size-biased by the region volume) and records whether any of them passes
    within lam.  Scatterers outside the region cannot hit.
    """
    V = np.asarray(V, dtype=float)
    r = margin * lam
    Ebar = mean_relative_speed(dist, V)
    lin, const = np.pi * r**2 * tau, 4.0 / 3.0 * np.pi * r**3
    hits = 0
    for i in range(n_seeds):
        g = krng.substream(seed, 5, i)
        n = g.poisson(dist.density() * (lin * Ebar + const))
        if n == 0:
            continue
        v = _size_biased_velocities(g, dist, V, n, lin, const)
        ends = (V - v) * tau
        x = sample_in_tube(g, r, ends)
        hits += bool(np.any(segment_distance(x, ends) <= lam))
    p = hits / n_seeds
    return p, float(np.sqrt(max(p * (1 - p), 1e-12) / n_seeds))


def tube_hit_probability_exact(dist: VelocityDistribution, V, lam: float, tau: float) -> float:
    """1 - exp(-n E[vol(lam, |V - v| tau)])."""
    Ebar = mean_relative_speed(dist, V)
    return float(1 - np.exp(-dist.density() * (np.pi * lam**2 * Ebar * tau + 4 / 3 * np.pi * lam**3)))
