"""Poisson phase-space configurations, free flow and empirical-measure moments.

Sampling is split into fixed-size blocks of expected particles; each block
draws from its own counter-based substream keyed by (seed, species, block),
so a configuration is bit-identical however the blocks are distributed over
workers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import rng as krng
from .distributions import SpeciesSet
from .errors import OverflowingCount, SupportEscapesBall, ValidationError

MAX_EXPECTED = 1e9


@dataclass(frozen=True)
class ParticleConfiguration:
    x: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    R: float
    seed: int
    time: float = 0.0

    @property
    def stale(self) -> bool:
        return self.time != 0.0

    @property
    def counts(self) -> list[int]:
        return [len(a) for a in self.x]

    def dump(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<q", len(self.x)))
            fh.write(struct.pack(f"<{len(self.x)}q", *self.counts))
            fh.write(struct.pack("<ddq", self.R, self.time, self.seed))
            for xs, vs in zip(self.x, self.v):
                fh.write(np.ascontiguousarray(np.hstack([xs, vs]), dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ParticleConfiguration":
        raw = open(path, "rb").read()
        (ns,) = struct.unpack_from("<q", raw, 0)
        counts = struct.unpack_from(f"<{ns}q", raw, 8)
        off = 8 + 8 * ns
        R, t, seed = struct.unpack_from("<ddq", raw, off)
        off += 24
        xs, vs = [], []
        for c in counts:
            a = np.frombuffer(raw, dtype="<f8", count=6 * c, offset=off).reshape(c, 6)
            off += 48 * c
            xs.append(a[:, :3].copy())
            vs.append(a[:, 3:].copy())
        return cls(tuple(xs), tuple(vs), R, seed, t)


def uniform_ball(rng: np.random.Generator, n: int, R: float) -> np.ndarray:
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = R * rng.random(n) ** (1.0 / 3.0)
    return d * r[:, None]


def _sample_species(dist, R: float, seed: int, index: int):
    mean = dist.density() * 4.0 / 3.0 * np.pi * R**3
    if mean > MAX_EXPECTED:
        raise OverflowingCount(f"expected count {mean:.3g} exceeds {MAX_EXPECTED:g}", op="sample_poisson")
    n_blocks = max(1, int(np.ceil(mean / krng.BLOCK)))
    xs, vs = [], []
    for b in range(n_blocks):
        g = krng.substream(seed, 1, index, b)
        n = g.poisson(mean / n_blocks) if mean > 0 else 0
        xs.append(uniform_ball(g, n, R))
        vs.append(dist.sample(g, n) if n else np.zeros((0, 3)))
    return np.concatenate(xs), np.concatenate(vs)


def sample_poisson(species: SpeciesSet, R: float, seed: int) -> ParticleConfiguration:
    if not R > 0:
        raise ValidationError("R must be positive", op="sample_poisson")
    xs, vs = [], []
    for i, sp in enumerate(species):
        x, v = _sample_species(sp.dist, R, seed, i)
        xs.append(x)
        vs.append(v)
    return ParticleConfiguration(tuple(xs), tuple(vs), float(R), int(seed))


def free_flow(config: ParticleConfiguration, tau: float) -> ParticleConfiguration:
    xs = tuple(x + tau * v for x, v in zip(config.x, config.v))
    return replace(config, x=xs, time=config.time + tau)


def box_counts(config: ParticleConfiguration, lo, hi, species: int = 0) -> int:
    x = config.x[species]
    return int(np.sum(np.all((x >= lo) & (x < hi), axis=1)))


@dataclass(frozen=True)
class EmpiricalMoment:
    first: float
    second: float
    n_samples: int
    std_error: float
    first_std_error: float = 0.0
    variance: float = 0.0
    variance_std_error: float = 0.0


@dataclass(frozen=True)
class PhaseBox:
    """Indicator of a box in rescaled phase space (y, w): a test function with known support."""

    y_lo: tuple
    y_hi: tuple
    w_lo: tuple
    w_hi: tuple
    height: float = 1.0

    def __call__(self, y, w):
        inside = (np.all((y >= self.y_lo) & (y < self.y_hi), axis=-1)
                  & np.all((w >= self.w_lo) & (w < self.w_hi), axis=-1))
        return self.height * inside

    def support_radius(self) -> float:
        c = np.maximum(np.abs(self.y_lo), np.abs(self.y_hi))
        return float(np.linalg.norm(c))


def empirical_pair_moment(species: SpeciesSet, L: float, phi: Callable, support_radius: float,
                          n_samples: int, seed: int, R: float | None = None) -> EmpiricalMoment:
    """Moments of <f_eps, phi> with f_eps = L^-3 sum delta(y - x_k/L) delta(w - v_k).

    ``support_radius`` bounds |y| on the support of phi; the sampled ball must
    contain L * support_radius.
    """
    if L < 1:
        raise ValidationError("L must be >= 1", op="empirical_pair_moment")
    if R is None:
        R = 1.05 * L * support_radius
    if L * support_radius > R:
        raise SupportEscapesBall("support of phi leaves the sampled ball", op="empirical_pair_moment")
    vals = np.empty(n_samples)
    for i in range(n_samples):
        cfg = sample_poisson(species, R, krng.substream(seed, 2, i).integers(2**63))
        tot = 0.0
        for x, v in zip(cfg.x, cfg.v):
            if len(x):
                tot += float(np.sum(phi(x / L, v)))
        vals[i] = tot / L**3
    m1 = vals.mean()
    m2 = np.mean(vals**2)
    se2 = vals.std(ddof=1) ** 2 if n_samples > 1 else 0.0
    sq = vals**2
    var = vals.var(ddof=1) if n_samples > 1 else 0.0
    # delta-method error for the sample variance
    var_se = np.sqrt(max(np.mean((vals - m1) ** 4) - var**2, 0.0) / n_samples)
    return EmpiricalMoment(float(m1), float(m2), n_samples,
                           float(sq.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0,
                           float(np.sqrt(se2 / n_samples)), float(var), float(var_se))
