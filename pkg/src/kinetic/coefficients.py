"""Diffusion matrices D_g(v) and friction vectors Lambda_g(v).

Finite-range formulas are evaluated on the Fourier side.  Writing
w = v - r n with n on the unit sphere, the constraint delta(k.(v - w)) becomes
delta(k.n)/r and k.w = k.v on the plane k perp n, so

    D(v)      =  pi int_{S^2} G(n)  P(n) dn,       G(n)  = int_0^inf r g(v - r n) dr,
    Lambda(v) = -pi int_{S^2} P(n) G1(n) dn,       G1(n) = int_0^inf r grad g(v - r n) dr,
    P(n)      = int_{k perp n} (k (x) k) |Phi_hat(k)|^2 / |Delta(k, -i k.v)|^2 d^2k.

P(n) is a polar quadrature on the plane; G and G1 are the ray moments of g.
Both D and Lambda share P, which makes the Maxwellian relation
Lambda = D (v - u) / T exact on the discrete level.

The Coulomb formulas use M(v) = int g(w) (I - uu)/|u| dw with u = (v - w)/|v - w|
and its grad g partner, on the same sphere rule.  The grazing formulas are
lag integrals of the force autocorrelation (see forcefield.kernel_diffusion).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import forcefield
from .dielectric import DielectricFunction, delta, gaussian_components, penrose_check
from .distributions import Maxwellian, VelocityDistribution
from .errors import UnstableMedium, ValidationError
from .potentials import RadialPotential
from .quadrature import gauss_legendre, psd_clip, rotation_to

TAGS = ("finite_range", "coulomb", "grazing")
MODELS = ("rayleigh", "interacting")


@dataclass(frozen=True)
class Regime:
    tag: str
    model: str = "rayleigh"
    sigma: float | None = None
    L: float | None = None
    A: float | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValidationError(f"unknown regime tag {self.tag!r}", op="regime")
        if self.model not in MODELS:
            raise ValidationError(f"unknown model {self.model!r}", op="regime")
        if self.tag == "finite_range" and self.model == "interacting":
            if self.sigma is None and self.L is None:
                raise ValidationError("finite_range/interacting needs sigma (or L)", op="regime")
        if self.tag == "coulomb" and self.model == "interacting" and self.A is None:
            raise ValidationError("coulomb/interacting needs A", op="regime")

    def dielectric(self, g: VelocityDistribution, potential: RadialPotential) -> DielectricFunction | None:
        if self.tag != "finite_range" or self.model != "interacting":
            return None
        if self.sigma is not None:
            return DielectricFunction(g, potential, "sigma", sigma=float(self.sigma))
        return DielectricFunction(g, potential, "epsilon", L=float(self.L))

    def to_dict(self) -> dict:
        return {"tag": self.tag, "model": self.model, "sigma": self.sigma, "L": self.L, "A": self.A}


@dataclass(frozen=True)
class Options:
    """Quadrature orders: radial x angular nodes on the k-plane, mu x phi on the sphere of rays."""

    n_radial: int = 64
    n_angle: int = 64
    n_mu: int = 48
    n_phi: int = 32
    n_gh: int = 24
    stability_k: int = 16


@dataclass
class CoefficientResult:
    D: np.ndarray
    Lambda: np.ndarray
    quad_error: np.ndarray
    regime: Regime
    v: np.ndarray
    clipped: float = 0.0
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"regime": self.regime.to_dict(), "v": self.v.tolist(), "D": self.D.tolist(),
                "Lambda": self.Lambda.tolist(), "quad_error": self.quad_error.tolist(),
                "clipped": self.clipped, "meta": self.meta}


# ---------------------------------------------------------------- quadrature pieces


def _ray_axis(g: VelocityDistribution, v) -> np.ndarray:
    d = np.asarray(v, dtype=float) - g.mean()
    nd = np.linalg.norm(d)
    return d / nd if nd > 1e-12 else np.array([0.0, 0.0, 1.0])


def ray_sphere(g: VelocityDistribution, v, n_mu: int, n_phi: int):
    """Directions n and weights (sum 4 pi), polar axis along v - mean(g)."""
    mu, wmu = gauss_legendre(n_mu, -1.0, 1.0)
    phi = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    s = np.sqrt(1 - mu**2)
    local = np.stack([np.outer(s, np.cos(phi)), np.outer(s, np.sin(phi)), np.outer(mu, np.ones(n_phi))], -1)
    R = rotation_to(_ray_axis(g, v))
    dirs = local.reshape(-1, 3) @ R.T
    w = np.outer(wmu, np.full(n_phi, 2 * np.pi / n_phi)).ravel()
    return dirs, w


def _k_scale(potential: RadialPotential) -> float:
    """Wavenumber where k^3 |Phi_hat|^2 peaks, located on a log grid."""
    k = np.geomspace(1e-3, 1e3, 601)
    f = k**3 * np.abs(potential.fourier(k)) ** 2
    return float(k[np.argmax(f)])


def radial_rule(potential: RadialPotential, n: int, scale: float = 1.0):
    """Nodes on [0, inf) by k = c x/(1 - x) over Gauss-Legendre x in (0, 1)."""
    c = _k_scale(potential) * scale
    x, w = gauss_legendre(n, 0.0, 1.0)
    return c * x / (1 - x), w * c / (1 - x) ** 2


def plane_tensor(dirs, potential, kr, wr, n_angle, model: DielectricFunction | None, v):
    """P(n) for each direction n (m, 3) -> (m, 3, 3)."""
    alpha = 2 * np.pi * np.arange(n_angle) / n_angle
    wa = 2 * np.pi / n_angle
    phi2 = np.abs(potential.fourier(kr)) ** 2
    out = np.empty((len(dirs), 3, 3))
    for i, n in enumerate(dirs):
        R = rotation_to(n)
        e1, e2 = R[:, 0], R[:, 1]
        khat = np.outer(np.cos(alpha), e1) + np.outer(np.sin(alpha), e2)
        if model is None or model.off:
            out[i] = np.pi * np.sum(wr * kr**3 * phi2) * (np.eye(3) - np.outer(n, n))
            continue
        kv = kr[:, None, None] * khat[None, :, :]
        z = -1j * (kv @ np.asarray(v, dtype=float))
        d2 = np.abs(delta(model, kv, z)) ** 2
        wk = (wr * kr**3 * phi2)[:, None] / d2 * wa
        out[i] = np.einsum("ra,ab,ac->bc", wk, khat, khat)
    return out


def _stability_guard(model: DielectricFunction, potential: RadialPotential, n: int):
    ks = np.geomspace(1e-2, 10.0, n) * _k_scale(potential)
    grid = np.concatenate([ks[:, None] * e for e in np.eye(3)])
    if gaussian_components(model.g) is not None and len(gaussian_components(model.g)) == 1:
        grid = ks[:, None] * np.array([1.0, 0.0, 0.0])
    rep = penrose_check(model, grid)
    if not rep.stable:
        raise UnstableMedium("Delta has zeros in Re z > 0", op="diffusion")


def _fourier_coefficients(regime, v, potential, g, opt: Options):
    model = regime.dielectric(g, potential)
    if model is not None and not model.off:
        _stability_guard(model, potential, opt.stability_k)
    scale = 1.0 if model is None or model.model == "sigma" else 1.0 / model.L

    def run(n_rad, n_ang, n_mu, n_phi):
        dirs, wd = ray_sphere(g, v, n_mu, n_phi)
        kr, wr = radial_rule(potential, n_rad, scale)
        P = plane_tensor(dirs, potential, kr, wr, n_ang, model, v)
        G, G1 = g.ray_moments(v, dirs)
        D = np.pi * np.einsum("j,j,jab->ab", wd, G, P)
        Lam = -np.pi * np.einsum("j,jab,jb->a", wd, P, G1)
        return D, Lam

    D, Lam = run(opt.n_radial, opt.n_angle, opt.n_mu, opt.n_phi)
    D2, Lam2 = run(opt.n_radial // 2, opt.n_angle // 2, opt.n_mu // 2, opt.n_phi // 2)
    return D, Lam, np.abs(D - D2), np.abs(Lam - Lam2)


def landau_moments(g: VelocityDistribution, v, n_mu: int = 48, n_phi: int = 32):
    """M = int g (I - uu)/|v - w| dw and M_grad = int (I - uu) grad g /|v - w| dw."""
    dirs, wd = ray_sphere(g, v, n_mu, n_phi)
    G, G1 = g.ray_moments(v, dirs)
    proj = np.eye(3)[None] - dirs[:, :, None] * dirs[:, None, :]
    M = np.einsum("j,j,jab->ab", wd, G, proj)
    Mg = np.einsum("j,jab,jb->a", wd, proj, G1)
    return M, Mg


def _coulomb_amplitude(regime: Regime, potential: RadialPotential) -> float:
    if regime.A is not None:
        return float(regime.A)
    if potential is not None and potential.decay.kind == "coulomb_like":
        return float(potential.decay.A)
    raise ValidationError("coulomb regime needs A", op="diffusion")


def _coulomb_coefficients(regime, v, potential, g, opt: Options):
    A = _coulomb_amplitude(regime, potential)
    M, Mg = landau_moments(g, v, opt.n_mu, opt.n_phi)
    M2, Mg2 = landau_moments(g, v, opt.n_mu // 2, opt.n_phi // 2)
    if regime.model == "interacting":
        c = np.pi * A**2 / 2
    else:
        # per unit logarithm of the lag cutoff: the asymptotic plateau of s K(v; s)
        c = 2 * np.pi * A**2
    return c * M, -c * Mg, c * np.abs(M - M2), c * np.abs(Mg - Mg2)


def _grazing_coefficients(regime, v, potential, g, opt: Options):
    D, _, errD = forcefield.kernel_diffusion(potential, g, v, opt.n_gh)
    Lam, errL = forcefield.kernel_friction(potential, g, v, opt.n_gh)
    return D, Lam, np.broadcast_to(errD, (3, 3)).copy(), np.broadcast_to(errL, (3,)).copy()


def coefficients(regime: Regime, v, potential: RadialPotential | None, g: VelocityDistribution,
                 options: Options | None = None) -> CoefficientResult:
    """D_g(v) and Lambda_g(v) for the regime; both parts share one quadrature."""
    opt = options or Options()
    v = np.asarray(v, dtype=float)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValidationError("v must be a finite 3-vector", op="diffusion")
    if regime.tag == "finite_range":
        if potential is None:
            raise ValidationError("finite_range needs a potential", op="diffusion")
        D, Lam, eD, eL = _fourier_coefficients(regime, v, potential, g, opt)
    elif regime.tag == "coulomb":
        D, Lam, eD, eL = _coulomb_coefficients(regime, v, potential, g, opt)
    else:
        if potential is None:
            raise ValidationError("grazing needs a potential", op="diffusion")
        D, Lam, eD, eL = _grazing_coefficients(regime, v, potential, g, opt)
    D, clipped = psd_clip(D)
    err = np.concatenate([np.asarray(eD).ravel(), np.asarray(eL).ravel()])
    return CoefficientResult(D, np.asarray(Lam, dtype=float), err, regime, v, clipped)


def diffusion(regime: Regime, v, potential, g, options: Options | None = None) -> CoefficientResult:
    return coefficients(regime, v, potential, g, options)


def friction(regime: Regime, v, potential, g, options: Options | None = None) -> CoefficientResult:
    return coefficients(regime, v, potential, g, options)


def coulomb_rayleigh_lag_integral(potential: RadialPotential, g: VelocityDistribution, v, s_max: float,
                                  n_gh: int = 32) -> np.ndarray:
    """The raw lag integral int_0^{s_max} K(v; s) ds for a coulomb-like profile.

    It grows like Gamma log s_max with Gamma = 2 pi A^2 M(v).
    """
    from scipy import integrate
    f = lambda s: forcefield.kernel_K(potential, g, v, s, n_gh, form="v")
    parts = np.concatenate([[0.0], np.geomspace(1e-2, s_max, 12)])
    tot = np.zeros((3, 3))
    for a, b in zip(parts[:-1], parts[1:]):
        tot += integrate.quad_vec(f, a, b, epsrel=1e-8, epsabs=1e-12)[0]
    return tot


# ---------------------------------------------------------------- consistency


@dataclass
class EinsteinReport:
    residual: float
    exact: bool
    Lambda: np.ndarray
    predicted: np.ndarray
    note: str = ""


def einstein_consistency(regime: Regime, v, potential, g: Maxwellian, options: Options | None = None) -> EinsteinReport:
    """Residual of Lambda(v) = D(v) (v - u) / T for a Maxwellian g.

    Exact for kernel-sharing pairs: finite_range (both models), coulomb/interacting
    and grazing.  For coulomb/rayleigh D is a per-logarithm coefficient and the
    comparison is reported but flagged as not exact.
    """
    if not isinstance(g, Maxwellian):
        raise ValidationError("einstein_consistency needs a Maxwellian g", op="einstein_consistency")
    res = coefficients(regime, v, potential, g, options)
    pred = res.D @ (np.asarray(v, dtype=float) - g.u) / g.temperature
    scale = max(np.linalg.norm(res.Lambda), np.linalg.norm(pred))
    # both sides vanish at v = u up to roundoff
    floor = 1e-12 * np.trace(res.D) / np.sqrt(g.temperature)
    r = 0.0 if scale <= floor else float(np.linalg.norm(res.Lambda - pred) / scale)
    exact = not (regime.tag == "coulomb" and regime.model == "rayleigh")
    note = "" if exact else "D is per unit log of the lag cutoff; identity holds for the per-log pair only"
    return EinsteinReport(r, exact, res.Lambda, pred, note)


def coulomb_log_prefactor(eps: float, beta: float = 0.5) -> dict:
    """T_eps = 1/(2 eps^2 log(1/eps)) and log L_eps = beta log(1/eps)."""
    if not 0 < eps < 1:
        raise ValidationError("eps must lie in (0, 1)", op="coulomb_log_prefactor")
    lg = np.log(1 / eps)
    if eps > 0.5:
        warnings.warn("eps close to 1: outside the asymptotic range", RuntimeWarning, stacklevel=2)
    return {"T_eps": 1.0 / (2 * eps**2 * lg), "log_L": beta * lg, "c_factor": 1.0 / np.sqrt(2 * np.pi)}
