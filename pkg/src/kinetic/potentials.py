"""Radial interaction potentials, scaling families and the short/long range split.

A ``RadialPotential`` is a profile Phi(s) of the radius with its first
derivative, decay-class metadata and a radial Fourier transform in the
unitary convention

    Phi_hat(k) = (2 pi)^(-3/2) int Phi(|x|) exp(-i k.x) dx
               = sqrt(2/pi) (1/k) int_0^inf s Phi(s) sin(k s) ds .

``ScaledPotential`` applies one of the scaling families (boltzmann, landau,
grazing, coulomb) and ``split_boltzmann_landau`` cuts a scaled potential
into a short-range and a long-range part with a smoothstep cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from .errors import DivergentTransform, SingularOrigin, ValidationError

SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
# single Fourier convention constant shared by every module
FOURIER_NORM = (2.0 * np.pi) ** 1.5


@dataclass(frozen=True)
class DecayClass:
    """Large-|x| behaviour: fast (exponent > 2), intermediate (1 < s < 2) or coulomb_like."""

    kind: str = "fast"
    A: float = 0.0
    C: float = 1.0
    exponent: float = 3.0
    delta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fast", "intermediate", "coulomb_like"):
            raise ValidationError(f"unknown decay class {self.kind!r}", op="decay")
        if self.kind == "fast" and self.exponent <= 2:
            raise ValidationError("fast decay needs exponent > 2", op="decay")
        if self.kind == "intermediate" and not 1 < self.exponent < 2:
            raise ValidationError("intermediate decay needs exponent in (1, 2)", op="decay")


class RadialPotential:
    """Profile Phi(s) with derivative and transform; subclasses fill in the formulas."""

    name = "radial"
    decay = DecayClass()
    core_cutoff: float | None = None
    singular = False

    def value(self, s) -> np.ndarray:
        raise NotImplementedError

    def deriv(self, s) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def key(self) -> tuple:
        return (self.name,) + tuple(sorted(self.params().items()))

    def fourier(self, k) -> np.ndarray:
        """Phi_hat(|k|); analytic when a subclass knows it, otherwise numeric."""
        return fourier_numeric(self, k)

    def range(self, tol: float = 1e-8) -> float:
        """Radius beyond which |Phi'| stays below tol * max|Phi'| (scanned on a log grid)."""
        s = np.logspace(-3, 4, 3000)
        d = np.abs(self.deriv(s))
        big = d > tol * d.max()
        return float(s[np.nonzero(big)[0][-1]]) if big.any() else 1.0

    def check_decay(self) -> bool:
        """For coulomb_like profiles, s Phi(s) approaches A at s = 1e2, 1e3 within 10 C / s."""
        if self.decay.kind != "coulomb_like":
            return True
        s = np.array([1e2, 1e3])
        return bool(np.all(np.abs(s * self.value(s) - self.decay.A) <= 10 * self.decay.C / s))

    def __call__(self, s):
        return self.value(s)


@dataclass(frozen=True)
class Gaussian(RadialPotential):
    amplitude: float = 1.0
    width: float = 1.0
    name = "gaussian"
    decay = DecayClass("fast", exponent=np.inf)

    def value(self, s):
        s = np.asarray(s, dtype=float)
        return self.amplitude * np.exp(-0.5 * (s / self.width) ** 2)

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        return -s / self.width**2 * self.value(s)

    def fourier(self, k):
        k = np.asarray(k, dtype=float)
        return self.amplitude * self.width**3 * np.exp(-0.5 * (k * self.width) ** 2)

    def params(self):
        return {"amplitude": self.amplitude, "width": self.width}


@dataclass(frozen=True)
class Yukawa(RadialPotential):
    """A exp(-s/length)/s, optionally with a core: A (exp(-s/length) - exp(-s/core))/s.

    The cored form is bounded at the origin and its force is square
    integrable, which the pure form is not.
    """

    amplitude: float = 1.0
    length: float = 1.0
    core: float | None = None
    name = "yukawa"
    decay = DecayClass("fast", exponent=np.inf)

    def __post_init__(self):
        if self.core is not None and not 0 < self.core < self.length:
            raise ValidationError("yukawa core must lie in (0, length)", op="yukawa")

    @property
    def singular(self):
        return self.core is None

    @property
    def core_cutoff(self):
        return self.core

    def _h(self, s):
        # h(s) = (1 - exp(-c s))/s and h'(s), series near 0
        c = 1.0 / self.core - 1.0 / self.length
        x = c * s
        small = x < 1e-2
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(small, c * (1 - x / 2 + x**2 / 6 - x**3 / 24), -np.expm1(-x) / s)
            hp = np.where(small, c**2 * (-0.5 + x / 3 - x**2 / 8 + x**3 / 30),
                          (x * np.exp(-x) + np.expm1(-x)) / s**2)
        return h, hp

    def value(self, s):
        s = np.asarray(s, dtype=float)
        A, lam = self.amplitude, self.length
        if self.core is None:
            with np.errstate(divide="ignore"):
                return A * np.exp(-s / lam) / s
        h, _ = self._h(s)
        return A * np.exp(-s / lam) * h

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        A, lam = self.amplitude, self.length
        if self.core is None:
            with np.errstate(divide="ignore"):
                return -A * np.exp(-s / lam) * (1 / (lam * s) + 1 / s**2)
        h, hp = self._h(s)
        return A * np.exp(-s / lam) * (hp - h / lam)

    def fourier(self, k):
        k = np.asarray(k, dtype=float)
        out = 1.0 / (self.length**-2 + k**2)
        if self.core is not None:
            out = out - 1.0 / (self.core**-2 + k**2)
        return SQRT_2_OVER_PI * self.amplitude * out

    def params(self):
        return {"amplitude": self.amplitude, "length": self.length, "core": self.core}


@dataclass(frozen=True)
class CoulombReg(RadialPotential):
    """A / sqrt(s^2 + a^2): Coulomb tail with a smooth core of radius a."""

    A: float = 1.0
    core: float = 1.0
    name = "coulomb_reg"

    @property
    def decay(self):
        # |Phi - A/s| + s|Phi' + A/s^2| <= 2 A a^2 / s^3 for s >= a
        return DecayClass("coulomb_like", A=self.A, C=2.0 * abs(self.A) * self.core**2, delta=1.0)

    @property
    def core_cutoff(self):
        return self.core

    def value(self, s):
        s = np.asarray(s, dtype=float)
        return self.A / np.sqrt(s**2 + self.core**2)

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        return -self.A * s / (s**2 + self.core**2) ** 1.5

    def fourier(self, k):
        k = np.asarray(k, dtype=float)
        if np.any(k == 0):
            raise DivergentTransform("coulomb-like transform diverges at k=0", op="fourier_transform")
        a = self.core
        return SQRT_2_OVER_PI * self.A * a * special.k1(k * a) / k

    def params(self):
        return {"A": self.A, "core": self.core}


@dataclass(frozen=True)
class PowerLaw(RadialPotential):
    """A / (s^2 + a^2)^(p/2), 1 < p < 2: the intermediate decay class."""

    A: float = 1.0
    exponent: float = 1.5
    core: float = 1.0
    name = "power"

    @property
    def decay(self):
        return DecayClass("intermediate", A=self.A, C=abs(self.A) * self.exponent * self.core**2,
                          exponent=self.exponent)

    @property
    def core_cutoff(self):
        return self.core

    def value(self, s):
        s = np.asarray(s, dtype=float)
        return self.A * (s**2 + self.core**2) ** (-0.5 * self.exponent)

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        return -self.A * self.exponent * s * (s**2 + self.core**2) ** (-0.5 * self.exponent - 1)

    def params(self):
        return {"A": self.A, "exponent": self.exponent, "core": self.core}


@dataclass(frozen=True)
class Bump(RadialPotential):
    """Compactly supported A (1 - (s/radius)^2)^4 on s < radius."""

    amplitude: float = 1.0
    radius: float = 1.0
    name = "bump"
    decay = DecayClass("fast", exponent=np.inf)

    def value(self, s):
        s = np.asarray(s, dtype=float)
        t = np.clip(1 - (s / self.radius) ** 2, 0, None)
        return self.amplitude * t**4

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        t = np.clip(1 - (s / self.radius) ** 2, 0, None)
        return -8 * self.amplitude * s / self.radius**2 * t**3

    def range(self, tol=1e-8):
        return self.radius

    def params(self):
        return {"amplitude": self.amplitude, "radius": self.radius}


class TabulatedPotential(RadialPotential):
    """Profile given on an increasing s-grid, cubic spline, zero beyond the last node."""

    name = "tabulated"

    def __init__(self, s, values, decay: DecayClass | None = None):
        s = np.asarray(s, dtype=float)
        values = np.asarray(values, dtype=float)
        if s.ndim != 1 or s.size < 4 or np.any(np.diff(s) <= 0):
            raise ValidationError("tabulated potential needs an increasing grid", op="tabulated")
        self.s = s
        self.values = values
        self.spline = CubicSpline(s, values)
        self.dspline = self.spline.derivative()
        self.decay = decay or DecayClass("fast", exponent=np.inf)

    def value(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= self.s[-1], self.spline(np.clip(s, self.s[0], self.s[-1])), 0.0)

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= self.s[-1], self.dspline(np.clip(s, self.s[0], self.s[-1])), 0.0)

    def range(self, tol=1e-8):
        return float(self.s[-1])

    def params(self):
        return {"n_nodes": int(self.s.size), "checksum": float(np.sum(self.values * self.s))}


@dataclass(frozen=True)
class Truncated(RadialPotential):
    """base(s) * eta(s / radius): unchanged on s <= radius, zero from 2 radius on."""

    base: RadialPotential
    radius: float = 3.0
    name = "truncated"
    decay = DecayClass("fast", exponent=np.inf)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValidationError("truncation radius must be positive", op="truncated")
        if self.base.decay.kind == "coulomb_like":
            raise ValidationError("truncate the screened field, not the coulomb profile", op="truncated")

    @property
    def singular(self):
        return self.base.singular

    @property
    def core_cutoff(self):
        return self.base.core_cutoff

    def value(self, s):
        s = np.asarray(s, dtype=float)
        e = eta(s / self.radius)
        with np.errstate(invalid="ignore"):
            return np.where(e > 0, self.base.value(s) * e, 0.0)

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        e, de = eta(s / self.radius), eta_deriv(s / self.radius) / self.radius
        with np.errstate(invalid="ignore"):
            return np.where(e > 0, self.base.deriv(s) * e + self.base.value(s) * de, 0.0)

    def range(self, tol=1e-8):
        return 2.0 * self.radius

    def params(self):
        return {"base": self.base.key(), "radius": self.radius}


def _fourier_single(p: RadialPotential, k: float) -> float:
    A = p.decay.A if p.decay.kind == "coulomb_like" else 0.0
    if k == 0.0:
        if p.decay.kind != "fast":
            raise DivergentTransform(f"{p.decay.kind} transform diverges at k=0", op="fourier_transform")
        val, _ = integrate.quad(lambda s: s * s * p.value(s), 0, np.inf, limit=400)
        return SQRT_2_OVER_PI * val
    rng = p.range(1e-14) if p.decay.kind == "fast" else np.inf

    def f(s):
        s = max(s, 1e-300)
        return s * p.value(s) - A

    if np.isfinite(rng):
        val, _ = integrate.quad(f, 0, rng, weight="sin", wvar=k, limit=400)
        # range() is relative to the peak force, which can be steep near the origin
        tail, _ = integrate.quad(f, rng, 4.0 * rng, weight="sin", wvar=k, limit=400)
        val += tail
    else:
        # split: near part by QAWO, oscillatory tail by QAWF
        cut = 50.0 * max(p.core_cutoff or 1.0, 1.0)
        v1, _ = integrate.quad(f, 0, cut, weight="sin", wvar=k, limit=400)
        v2, _ = integrate.quad(f, cut, np.inf, weight="sin", wvar=k, limlst=200)
        val = v1 + v2
    # int_0^inf A sin(ks) ds = A/k in the Abel sense
    return SQRT_2_OVER_PI * (val + A / k) / k


@lru_cache(maxsize=4096)
def _fourier_cached(key, p, k):
    return _fourier_single(p, k)


def fourier_numeric(p: RadialPotential, k) -> np.ndarray:
    """Sine-weighted adaptive quadrature of the radial transform (no closed forms used)."""
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise ValidationError("wavenumber must be >= 0", op="fourier_transform")
    flat = [_fourier_cached(p.key(), p, float(x)) if _hashable(p) else _fourier_single(p, float(x))
            for x in k.ravel()]
    return np.array(flat).reshape(k.shape)


def _hashable(p) -> bool:
    try:
        hash(p)
        return True
    except TypeError:
        return False


def fourier_transform(p: RadialPotential, k) -> np.ndarray:
    return p.fourier(k)


# ---------------------------------------------------------------- scaled family


FAMILIES = ("boltzmann", "landau", "grazing", "coulomb_short", "coulomb_weak", "identity")


class RadialField:
    """Mixin: value and gradient at 3D positions from a radial f(r), f'(r)."""

    singular = False

    def radial(self, r) -> np.ndarray:
        raise NotImplementedError

    def radial_deriv(self, r) -> np.ndarray:
        raise NotImplementedError

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        if self.singular and np.any(r == 0):
            raise SingularOrigin("potential is singular at the origin", op="evaluate")
        return self.radial(r)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        if self.singular and np.any(r == 0):
            raise SingularOrigin("potential is singular at the origin", op="evaluate")
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(r > 0, self.radial_deriv(r) / r, 0.0)
        return fac[..., None] * x

    def evaluate(self, x):
        return self.value(x), self.gradient(x)


@dataclass(frozen=True)
class ScaledPotential(RadialField):
    """Phi_eps(x) = amp * Phi(|x| / length) with (amp, length) set by the family.

    boltzmann: Phi(|x|/eps); landau: eps Phi(|x|/L); grazing: eps Phi(|x|/ell);
    coulomb_short: Phi(|x|/eps); coulomb_weak: eps Phi(|x|).
    """

    base: RadialPotential
    family: str = "identity"
    epsilon: float = 1.0
    L: float = 1.0
    ell: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown family {self.family!r}", op="scaled_potential")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive", op="scaled_potential")
        if self.family == "landau" and self.L < 1:
            raise ValidationError("landau family needs L >= 1", op="scaled_potential")
        if not self.ell > 0:
            raise ValidationError("ell must be positive", op="scaled_potential")

    @property
    def amp_length(self) -> tuple[float, float]:
        f, e = self.family, self.epsilon
        if f in ("boltzmann", "coulomb_short"):
            return 1.0, e
        if f == "landau":
            return e, self.L
        if f == "grazing":
            return e, self.ell
        if f == "coulomb_weak":
            return e, 1.0
        return 1.0, 1.0

    @property
    def singular(self):
        return bool(getattr(self.base, "singular", False))

    def radial(self, r):
        a, l = self.amp_length
        return a * self.base.value(np.asarray(r) / l)

    def radial_deriv(self, r):
        a, l = self.amp_length
        return (a / l) * self.base.deriv(np.asarray(r) / l)

    def fourier(self, k):
        a, l = self.amp_length
        return a * l**3 * self.base.fourier(np.asarray(k, dtype=float) * l)

    def range(self, tol=1e-8) -> float:
        return self.amp_length[1] * self.base.range(tol)


def evaluate(p: ScaledPotential, x):
    return p.evaluate(x)


def smoothstep7(x):
    """Degree-7 smoothstep on [0, 1] (three vanishing derivatives at both ends)."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x**4 * (35 - 84 * x + 70 * x**2 - 20 * x**3)


def smoothstep7_deriv(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    return np.where(inside, 140 * x**3 * (1 - x) ** 3, 0.0)


def eta(t):
    """Cutoff equal to 1 on [0, 1], 0 on [2, inf), monotone in between."""
    return 1.0 - smoothstep7(np.asarray(t, dtype=float) - 1.0)


def eta_deriv(t):
    return -smoothstep7_deriv(np.asarray(t, dtype=float) - 1.0)


@dataclass(frozen=True)
class CutPart(RadialField):
    parent: RadialField
    radius: float
    inner: bool

    @property
    def singular(self):
        return self.parent.singular and self.inner

    def _w(self, r):
        t = np.asarray(r, dtype=float) / self.radius
        e, de = eta(t), eta_deriv(t) / self.radius
        return (e, de) if self.inner else (1.0 - e, -de)

    def radial(self, r):
        w, _ = self._w(r)
        with np.errstate(invalid="ignore"):
            out = self.parent.radial(r) * w
        return np.where(w == 0, 0.0, out)

    def radial_deriv(self, r):
        w, dw = self._w(r)
        with np.errstate(invalid="ignore"):
            out = self.parent.radial_deriv(r) * w + self.parent.radial(r) * dw
        return np.where((w == 0) & (dw == 0), 0.0, out)


@dataclass(frozen=True)
class SplitPotential:
    boltzmann_part: CutPart
    landau_part: CutPart
    M: float
    lam: float


def split_boltzmann_landau(p: RadialField, M: float = 4.0, lam: float = 1.0) -> SplitPotential:
    if M < 1 or lam <= 0:
        raise ValidationError("split needs M >= 1 and lambda > 0", op="split_boltzmann_landau")
    R = M * lam
    return SplitPotential(CutPart(p, R, True), CutPart(p, R, False), M, lam)


def potential_from_config(cfg: dict) -> RadialPotential:
    prof = cfg.get("profile")
    if prof == "gaussian":
        return Gaussian(float(cfg.get("amplitude", 1.0)), float(cfg.get("width", 1.0)))
    if prof == "yukawa":
        core = cfg.get("core")
        return Yukawa(float(cfg.get("amplitude", 1.0)), float(cfg.get("length", 1.0)),
                      None if core is None else float(core))
    if prof == "coulomb_reg":
        return CoulombReg(float(cfg.get("A", 1.0)), float(cfg.get("core", 1.0)))
    if prof == "power":
        return PowerLaw(float(cfg.get("A", 1.0)), float(cfg.get("exponent", 1.5)), float(cfg.get("core", 1.0)))
    if prof == "bump":
        return Bump(float(cfg.get("amplitude", 1.0)), float(cfg.get("radius", 1.0)))
    if prof == "tabulated":
        return TabulatedPotential(cfg["s"], cfg["values"])
    if prof == "truncated":
        return Truncated(potential_from_config(cfg["base"]), float(cfg.get("radius", 3.0)))
    if prof == "zero":
        return Gaussian(0.0, 1.0)
    raise ValidationError(f"unknown potential profile {prof!r}", op="potential")


def scaled_from_config(base: RadialPotential, cfg: dict | None) -> ScaledPotential:
    cfg = cfg or {}
    fam = cfg.get("family", "identity")
    if fam == "coulomb":
        fam = "coulomb_" + cfg.get("variant", "weak")
    return ScaledPotential(base, fam, float(cfg.get("epsilon", 1.0)), float(cfg.get("L", 1.0)),
                           float(cfg.get("ell", 1.0)))
