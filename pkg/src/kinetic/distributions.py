"""Velocity distributions g(dv), species sets and Radon slices.

Three kinds are supported: an isotropic Maxwellian, a finite mixture of
Maxwellians (used for two-stream media), and a density tabulated on a
uniform Cartesian grid with trilinear interpolation.  All of them expose the
same small interface used by the other modules: ``pdf``, ``grad``,
``density``, ``radon``, ``sample`` and ``ray_moments``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from .errors import DegenerateDirection, NonFiniteDensity, OutOfGrid, ValidationError

UNIT_TOL = 1e-12
V_CUT_QUANTILE = 0.99999


def _unit(theta, op: str) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (3,) or abs(np.linalg.norm(theta) - 1.0) > UNIT_TOL:
        raise DegenerateDirection(f"|theta| must be 1 within {UNIT_TOL}", op=op)
    return theta


@dataclass(frozen=True)
class RadonSlice:
    """H(s; theta), the integral of g over the plane theta.w = s.

    ``gaussians`` holds (weight, mean, std) triples when H is an exact
    Gaussian mixture; the dispersion integral then has a closed form.
    """

    theta: np.ndarray
    H: Callable[[np.ndarray], np.ndarray]
    dH: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float]
    gaussians: tuple[tuple[float, float, float], ...] | None = None

    def __call__(self, s):
        return self.H(np.asarray(s, dtype=float))

    def total(self) -> float:
        if self.gaussians is not None:
            return float(sum(c[0] for c in self.gaussians))
        s = np.linspace(*self.support, 4001)
        return float(trapezoid(self.H(s), s))


class VelocityDistribution:
    """Common interface; concrete kinds below."""

    kappa: float = 1.0

    def density(self) -> float:
        raise NotImplementedError

    def pdf(self, w) -> np.ndarray:
        raise NotImplementedError

    def grad(self, w) -> np.ndarray:
        raise NotImplementedError

    def radon(self, theta) -> RadonSlice:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def v_cut(self) -> float:
        """Speed below which a fraction V_CUT_QUANTILE of the mass lies (upper bound)."""
        raise NotImplementedError

    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError

    def ray_moments(self, v, n, r_max: float | None = None, order: int = 200):
        """Return (G, G1) with G = int_0^inf r g(v - r n) dr and G1 = int_0^inf r grad g(v - r n) dr.

        ``n`` has shape (m, 3); G has shape (m,), G1 shape (m, 3).  Generic
        Gauss-Legendre version; Gaussian kinds override with closed forms.
        """
        v = np.asarray(v, dtype=float)
        n = np.atleast_2d(np.asarray(n, dtype=float))
        if r_max is None:
            r_max = np.linalg.norm(v - self.mean()) + 2.0 * self.v_cut()
        x, wts = np.polynomial.legendre.leggauss(order)
        r = 0.5 * r_max * (x + 1.0)
        wts = 0.5 * r_max * wts
        pts = v[None, None, :] - r[None, :, None] * n[:, None, :]
        g = self.pdf(pts)
        dg = self.grad(pts)
        G = np.einsum("j,mj->m", wts * r, g)
        G1 = np.einsum("j,mjk->mk", wts * r, dg)
        return G, G1


@dataclass(frozen=True)
class Maxwellian(VelocityDistribution):
    mean_velocity: tuple = (0.0, 0.0, 0.0)
    temperature: float = 1.0
    n: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        u = tuple(float(x) for x in np.asarray(self.mean_velocity, dtype=float).reshape(3))
        object.__setattr__(self, "mean_velocity", u)
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise ValidationError("temperature must be positive", op="maxwellian")
        if not (np.isfinite(self.n) and self.n >= 0):
            raise ValidationError("density must be non-negative", op="maxwellian")

    @property
    def u(self) -> np.ndarray:
        return np.array(self.mean_velocity)

    def density(self) -> float:
        return float(self.n)

    def mean(self) -> np.ndarray:
        return self.u

    def pdf(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        d2 = np.sum((w - self.u) ** 2, axis=-1)
        T = self.temperature
        return self.n * (2 * np.pi * T) ** -1.5 * np.exp(-0.5 * d2 / T)

    def grad(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return -(w - self.u) / self.temperature * self.pdf(w)[..., None]

    def radon(self, theta) -> RadonSlice:
        theta = _unit(theta, "radon_transform")
        comps = ((self.n, float(theta @ self.u), float(np.sqrt(self.temperature))),)
        return _gaussian_slice(theta, comps)

    def sample(self, rng, n: int) -> np.ndarray:
        return self.u + np.sqrt(self.temperature) * rng.standard_normal((n, 3))

    def v_cut(self) -> float:
        return float(np.linalg.norm(self.u) + np.sqrt(self.temperature) * stats.chi.ppf(V_CUT_QUANTILE, 3))

    def ray_moments(self, v, n, r_max=None, order=200):
        return _gaussian_ray_moments([(self.n, self.u, self.temperature)], v, n)

    def to_config(self) -> dict:
        return {"kind": "maxwellian", "mean": list(self.mean_velocity),
                "temperature": self.temperature, "density": self.n}


@dataclass(frozen=True)
class MaxwellianMixture(VelocityDistribution):
    """Finite sum of Maxwellians, e.g. a symmetric two-stream medium."""

    components: tuple[Maxwellian, ...] = field(default_factory=tuple)
    kappa: float = 1.0

    def __post_init__(self):
        if len(self.components) == 0:
            raise ValidationError("mixture needs at least one component", op="mixture")
        object.__setattr__(self, "components", tuple(self.components))

    @classmethod
    def two_stream(cls, speed: float, temperature: float, density: float = 1.0, axis=(1.0, 0.0, 0.0)):
        a = np.asarray(axis, dtype=float)
        return cls((Maxwellian(speed * a, temperature, 0.5 * density),
                    Maxwellian(-speed * a, temperature, 0.5 * density)))

    def density(self) -> float:
        return float(sum(c.n for c in self.components))

    def mean(self) -> np.ndarray:
        m = sum(c.n * c.u for c in self.components)
        return m / max(self.density(), 1e-300)

    def pdf(self, w):
        return sum(c.pdf(w) for c in self.components)

    def grad(self, w):
        return sum(c.grad(w) for c in self.components)

    def radon(self, theta) -> RadonSlice:
        theta = _unit(theta, "radon_transform")
        comps = tuple((c.n, float(theta @ c.u), float(np.sqrt(c.temperature))) for c in self.components)
        return _gaussian_slice(theta, comps)

    def sample(self, rng, n: int) -> np.ndarray:
        p = np.array([c.n for c in self.components]) / self.density()
        idx = rng.choice(len(p), size=n, p=p)
        z = rng.standard_normal((n, 3))
        u = np.array([c.u for c in self.components])[idx]
        s = np.sqrt(np.array([c.temperature for c in self.components]))[idx]
        return u + s[:, None] * z

    def v_cut(self) -> float:
        return max(c.v_cut() for c in self.components)

    def ray_moments(self, v, n, r_max=None, order=200):
        return _gaussian_ray_moments([(c.n, c.u, c.temperature) for c in self.components], v, n)

    def to_config(self) -> dict:
        return {"kind": "mixture", "components": [c.to_config() for c in self.components]}


class Tabulated(VelocityDistribution):
    """Density on a uniform Cartesian grid, trilinear in between.

    ``bounds`` is (lo_x, hi_x, lo_y, hi_y, lo_z, hi_z); ``values`` has shape
    (nx, ny, nz) and must be non-negative.  Gradients come from second-order
    central differences on the grid, interpolated trilinearly.
    """

    def __init__(self, bounds: Sequence[float], values, kappa: float = 1.0, check_moment: bool = True):
        values = np.asarray(values, dtype=float)
        if values.ndim != 3 or min(values.shape) < 2:
            raise ValidationError("tabulated values must be a 3D grid with >= 2 points per axis", op="tabulated")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValidationError("tabulated values must be finite and >= 0", op="tabulated")
        self.bounds = tuple(float(b) for b in bounds)
        self.values = values
        self.kappa = kappa
        self.axes = [np.linspace(self.bounds[2 * i], self.bounds[2 * i + 1], values.shape[i]) for i in range(3)]
        self.h = np.array([a[1] - a[0] for a in self.axes])
        self._interp = RegularGridInterpolator(self.axes, values, bounds_error=False, fill_value=0.0)
        grads = np.gradient(values, *self.axes, edge_order=2)
        self._ginterp = [RegularGridInterpolator(self.axes, gi, bounds_error=False, fill_value=0.0) for gi in grads]
        if check_moment:
            self.moment_check()

    def _mesh(self):
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def density(self) -> float:
        val = trapezoid(trapezoid(trapezoid(self.values, self.axes[2]), self.axes[1]), self.axes[0])
        if not np.isfinite(val):
            raise NonFiniteDensity("grid integral is not finite", op="density")
        return float(val)

    def moment_check(self) -> float:
        w = self._mesh()
        m = np.sum(np.linalg.norm(w, axis=-1) ** (6 + self.kappa) * self.values) * np.prod(self.h)
        if m > 1e12:
            warnings.warn(f"|v|^(6+kappa) moment on grid is {m:.3g} > 1e12", stacklevel=2)
        return float(m)

    def mean(self) -> np.ndarray:
        w = self._mesh()
        mass = np.sum(self.values)
        return np.einsum("ijk,ijkl->l", self.values, w) / max(mass, 1e-300)

    def _inside(self, w) -> np.ndarray:
        lo = np.array(self.bounds[0::2])
        hi = np.array(self.bounds[1::2])
        return np.all((w >= lo) & (w <= hi), axis=-1)

    def pdf(self, w):
        w = np.asarray(w, dtype=float)
        return self._interp(w.reshape(-1, 3)).reshape(w.shape[:-1])

    def grad(self, w, strict: bool = False):
        w = np.asarray(w, dtype=float)
        if strict and not np.all(self._inside(w)):
            raise OutOfGrid("velocity outside the tabulated grid", op="grad")
        flat = w.reshape(-1, 3)
        out = np.stack([gi(flat) for gi in self._ginterp], axis=-1)
        return out.reshape(w.shape)

    def radon(self, theta, n_s: int = 241, n_plane: int = 161) -> RadonSlice:
        theta = _unit(theta, "radon_transform")
        lo = np.array(self.bounds[0::2])
        hi = np.array(self.bounds[1::2])
        centre = 0.5 * (lo + hi)
        rad = 0.5 * np.linalg.norm(hi - lo)
        a = np.cross(theta, [1.0, 0.0, 0.0] if abs(theta[0]) < 0.9 else [0.0, 1.0, 0.0])
        a /= np.linalg.norm(a)
        b = np.cross(theta, a)
        c0 = theta @ centre
        s = np.linspace(c0 - rad, c0 + rad, n_s)
        t = np.linspace(-rad, rad, n_plane)
        P, Q = np.meshgrid(t, t, indexing="ij")
        base = centre - c0 * theta + P[..., None] * a + Q[..., None] * b
        H = np.empty_like(s)
        for i, si in enumerate(s):
            vals = self.pdf(base + si * theta)
            H[i] = trapezoid(trapezoid(vals, t), t)
        spline = CubicSpline(s, H, extrapolate=False)
        d = spline.derivative()
        return RadonSlice(theta, lambda x: np.nan_to_num(spline(x)), lambda x: np.nan_to_num(d(x)), (s[0], s[-1]))

    def sample(self, rng, n: int) -> np.ndarray:
        p = self.values.ravel() / self.values.sum()
        idx = rng.choice(p.size, size=n, p=p)
        ijk = np.stack(np.unravel_index(idx, self.values.shape), axis=-1)
        lo = np.array(self.bounds[0::2])
        jitter = rng.uniform(-0.5, 0.5, (n, 3))
        w = lo + (ijk + jitter) * self.h
        return np.clip(w, lo, np.array(self.bounds[1::2]))

    def v_cut(self) -> float:
        w = self._mesh()
        return float(np.max(np.linalg.norm(w, axis=-1)[self.values > 0], initial=0.0))

    def to_config(self) -> dict:
        return {"kind": "tabulated", "bounds": list(self.bounds), "shape": list(self.values.shape)}

    def save(self, path) -> None:
        header = np.array(list(self.values.shape) + list(self.bounds), dtype="<f8")
        with open(path, "wb") as fh:
            fh.write(header.tobytes())
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path, **kw) -> "Tabulated":
        raw = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
        dims = tuple(int(x) for x in raw[:3])
        bounds = raw[3:9]
        values = raw[9:].reshape(dims)
        return cls(bounds, values, **kw)


def _gaussian_slice(theta, comps) -> RadonSlice:
    def H(s):
        s = np.asarray(s, dtype=float)
        return sum(w * stats.norm.pdf(s, m, sd) for w, m, sd in comps)

    def dH(s):
        s = np.asarray(s, dtype=float)
        return sum(-w * (s - m) / sd**2 * stats.norm.pdf(s, m, sd) for w, m, sd in comps)

    lo = min(m - 12 * sd for _, m, sd in comps)
    hi = max(m + 12 * sd for _, m, sd in comps)
    return RadonSlice(theta, H, dH, (lo, hi), comps)


def _gaussian_ray_moments(comps, v, n):
    """Closed-form ray integrals for sums of isotropic Gaussians."""
    v = np.asarray(v, dtype=float)
    n = np.atleast_2d(np.asarray(n, dtype=float))
    G = np.zeros(len(n))
    G1 = np.zeros((len(n), 3))
    for dens, u, T in comps:
        p = v - u
        m = n @ p
        sd = np.sqrt(T)
        pref = dens * (2 * np.pi * T) ** -1.5 * np.exp(-0.5 * (p @ p - m**2) / T)
        # int_0^inf r^j exp(-(r-m)^2/2T) dr for j = 1, 2
        gauss_tail = np.exp(-0.5 * m**2 / T)
        cdf = special.ndtr(m / sd)
        root = np.sqrt(2 * np.pi * T)
        i0 = root * cdf
        i1 = T * gauss_tail + m * i0
        i2 = m * i1 + T * i0
        G += pref * i1
        # grad g(w) = -(w-u)/T g, with w - u = p - r n
        G1 += -(pref / T)[:, None] * (p[None, :] * i1[:, None] - n * i2[:, None])
    return G, G1


def distribution_from_config(cfg: dict, base_dir: str | Path | None = None) -> VelocityDistribution:
    kind = cfg.get("kind")
    if kind == "maxwellian":
        return Maxwellian(cfg.get("mean", [0.0, 0.0, 0.0]), float(cfg.get("temperature", 1.0)),
                          float(cfg.get("density", 1.0)))
    if kind == "mixture":
        return MaxwellianMixture(tuple(distribution_from_config(c) for c in cfg["components"]))
    if kind == "two_stream":
        return MaxwellianMixture.two_stream(float(cfg["speed"]), float(cfg.get("temperature", 1.0)),
                                            float(cfg.get("density", 1.0)))
    if kind == "tabulated":
        path = Path(cfg["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return Tabulated.load(path)
    raise ValidationError(f"unknown distribution kind {kind!r}", op="distribution")


@dataclass(frozen=True)
class Species:
    charge: float
    dist: VelocityDistribution


@dataclass(frozen=True)
class SpeciesSet:
    species: tuple[Species, ...]

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        if len(self.species) == 0:
            raise ValidationError("species list is empty", op="species")
        if any(s.charge == 0 for s in self.species):
            raise ValidationError("charges must be nonzero", op="species")

    @classmethod
    def single(cls, dist: VelocityDistribution, charge: float = 1.0) -> "SpeciesSet":
        return cls((Species(charge, dist),))

    @classmethod
    def neutral_pair(cls, dist: VelocityDistribution) -> "SpeciesSet":
        return cls((Species(1.0, dist), Species(-1.0, dist)))

    def __len__(self) -> int:
        return len(self.species)

    def __iter__(self):
        return iter(self.species)


def density(g: VelocityDistribution) -> float:
    return g.density()


def radon_transform(g: VelocityDistribution, theta) -> RadonSlice:
    return g.radon(theta)


def grad(g: VelocityDistribution, w) -> np.ndarray:
    if isinstance(g, Tabulated):
        return g.grad(w, strict=True)
    return g.grad(w)


def electroneutral(species: SpeciesSet, tol: float = 1e-10) -> bool:
    net = sum(s.charge * s.dist.density() for s in species)
    scale = sum(abs(s.charge) * s.dist.density() for s in species)
    if scale == 0:
        return True
    return abs(net) <= tol * scale
