from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from kinetic.errors import DivergentTransform, SingularOrigin, ValidationError
from kinetic.potentials import (
    Bump,
    CoulombReg,
    Gaussian,
    PowerLaw,
    ScaledPotential,
    Truncated,
    Yukawa,
    eta,
    evaluate,
    fourier_numeric,
    fourier_transform,
    potential_from_config,
    scaled_from_config,
    split_boltzmann_landau,
)


class Exponential(Gaussian):
    """e^{-s}, transform left to the numeric path."""

    name = "exponential"

    def value(self, s):
        return np.exp(-np.asarray(s, dtype=float))

    def deriv(self, s):
        return -np.exp(-np.asarray(s, dtype=float))

    def fourier(self, k):
        return fourier_numeric(self, k)


def fd_gradient(p, x, h=1e-5):
    out = np.empty(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        out[i] = (p.value(x + e) - p.value(x - e)) / (2 * h)
    return out


class TestEvaluate:
    def test_landau_substitution(self):
        p = ScaledPotential(Exponential(), "landau", 0.1, L=10.0)
        val, _ = evaluate(p, np.array([10.0, 0, 0]))
        assert val == pytest.approx(0.1 * np.exp(-1.0), rel=1e-15)

    def test_boltzmann_support(self):
        p = ScaledPotential(Bump(1.0, 1.0), "boltzmann", 0.01)
        val, grad = evaluate(p, np.array([0.05, 0, 0]))
        assert val == 0.0 and np.all(grad == 0.0)
        val, _ = evaluate(p, np.array([0.005, 0, 0]))
        assert val == pytest.approx(Bump().value(0.5))

    def test_singular_origin(self):
        p = ScaledPotential(Yukawa(), "landau", 0.1, L=2.0)
        with pytest.raises(SingularOrigin):
            evaluate(p, np.zeros(3))
        cored = ScaledPotential(Yukawa(1.0, 1.0, 0.5), "landau", 0.1, L=2.0)
        val, grad = evaluate(cored, np.zeros(3))
        assert np.isfinite(val) and np.all(grad == 0)

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(0)
        cases = [ScaledPotential(Yukawa(1.0, 1.0, 0.5), "landau", 0.2, L=3.0),
                 ScaledPotential(CoulombReg(1.0, 1.0), "coulomb_weak", 0.1),
                 ScaledPotential(Gaussian(2.0, 0.7), "grazing", 0.3, ell=0.5)]
        for p in cases:
            pts = rng.normal(scale=2.0, size=(100, 3))
            for x in pts:
                _, g = evaluate(p, x)
                ref = fd_gradient(p, x)
                assert np.linalg.norm(g - ref) < 1e-6 * max(np.linalg.norm(ref), 1e-3)

    def test_family_validation(self):
        with pytest.raises(ValidationError):
            ScaledPotential(Gaussian(), "landau", 0.1, L=0.5)
        with pytest.raises(ValidationError):
            ScaledPotential(Gaussian(), "boltzmann", -1.0)
        with pytest.raises(ValidationError):
            ScaledPotential(Gaussian(), "unknown")

    def test_config(self):
        base = potential_from_config({"profile": "yukawa", "amplitude": 2.0, "length": 1.0, "core": 0.5})
        assert base == Yukawa(2.0, 1.0, 0.5)
        p = scaled_from_config(base, {"family": "coulomb", "variant": "short", "epsilon": 0.1})
        assert p.family == "coulomb_short" and p.amp_length == (1.0, 0.1)
        t = potential_from_config({"profile": "truncated", "base": {"profile": "gaussian"}, "radius": 2.0})
        assert isinstance(t, Truncated) and t.range() == 4.0
        with pytest.raises(ValidationError):
            potential_from_config({"profile": "nope"})


class TestSplit:
    p = ScaledPotential(CoulombReg(1.0, 0.2), "coulomb_weak", 0.05)

    def test_partition_of_unity(self):
        sp = split_boltzmann_landau(self.p, M=4.0, lam=0.3)
        r = np.logspace(-3, 2, 10_000)
        total = sp.boltzmann_part.radial(r) + sp.landau_part.radial(r)
        assert np.max(np.abs(total - self.p.radial(r))) < 1e-12

    def test_supports(self):
        sp = split_boltzmann_landau(self.p, M=4.0, lam=0.3)
        inner = np.linspace(1e-3, 1.2, 500)
        outer = np.linspace(2.4, 50, 500)
        assert np.all(sp.landau_part.radial(inner) == 0)
        assert np.all(sp.boltzmann_part.radial(outer) == 0)

    def test_split_gradients(self):
        sp = split_boltzmann_landau(self.p, M=2.0, lam=0.5)
        rng = np.random.default_rng(1)
        for part in (sp.boltzmann_part, sp.landau_part):
            for x in rng.normal(scale=1.2, size=(50, 3)):
                ref = fd_gradient(part, x)
                assert np.linalg.norm(part.gradient(x) - ref) < 1e-6 * max(np.linalg.norm(ref), 1e-2)

    def test_bad_args(self):
        with pytest.raises(ValidationError):
            split_boltzmann_landau(self.p, M=0.5)

    @settings(max_examples=50, deadline=None)
    @given(t=st.floats(0, 3))
    def test_eta_monotone(self, t):
        assert 0.0 <= eta(t) <= 1.0
        assert eta(t + 1e-3) <= eta(t) + 1e-15


class TestFourier:
    def test_gaussian_self_dual(self):
        k = np.linspace(0, 5, 11)
        np.testing.assert_allclose(fourier_numeric(Gaussian(), k), np.exp(-k**2 / 2), atol=1e-10)

    def test_yukawa_closed_form(self):
        k = np.array([0.1, 0.5, 1.0, 3.0, 10.0])
        ref = np.sqrt(2 / np.pi) / (1 + k**2)
        np.testing.assert_allclose(fourier_transform(Yukawa(), k), ref, rtol=1e-14)
        np.testing.assert_allclose(fourier_numeric(Yukawa(), k), ref, rtol=1e-6)

    def test_cored_yukawa_numeric(self):
        p = Yukawa(1.0, 1.0, 0.5)
        k = np.array([0.0, 0.3, 2.0, 7.0])
        np.testing.assert_allclose(fourier_numeric(p, k), fourier_transform(p, k), rtol=1e-7, atol=1e-12)

    def test_coulomb_limit(self):
        p = CoulombReg(1.0, 1.0)
        vals = [k**2 * fourier_numeric(p, np.array([k]))[0] for k in (1e-2, 1e-3)]
        # k^2 Phi_hat = sqrt(2/pi) (1 - O(k^2 log k)); Richardson on the two nodes
        rich = vals[1] + (vals[1] - vals[0]) / 99.0
        assert abs(rich - np.sqrt(2 / np.pi)) < 1e-4
        k = np.array([0.05, 0.5, 2.0])
        np.testing.assert_allclose(fourier_numeric(p, k), fourier_transform(p, k), rtol=1e-6)

    def test_coulomb_diverges_at_zero(self):
        with pytest.raises(DivergentTransform):
            fourier_numeric(CoulombReg(), np.array([0.0]))
        with pytest.raises(DivergentTransform):
            fourier_numeric(PowerLaw(), np.array([0.0]))

    def test_positive_at_origin(self):
        for p in (Gaussian(), Yukawa(1.0, 1.0, 0.5), Bump(), Exponential()):
            val = fourier_numeric(p, np.array([1e-6]))[0]
            assert np.isreal(val) and val > 0

    def test_plancherel(self):
        for p in (Exponential(), Yukawa(1.0, 1.0, 0.5), Bump(1.0, 1.5)):
            lhs, _ = integrate.quad(lambda r: 4 * np.pi * r**2 * p.deriv(r) ** 2, 0, 60, limit=400, points=[1.5])
            k = np.linspace(0, 200, 8001)
            fk = fourier_transform(p, k)
            rhs = integrate.simpson(4 * np.pi * k**4 * fk**2, x=k)
            assert abs(lhs - rhs) < 1e-4 * lhs, (p, lhs, rhs)

    def test_scaled_transform(self):
        p = ScaledPotential(Gaussian(), "landau", 0.3, L=2.0)
        k = np.array([0.2, 1.0])
        np.testing.assert_allclose(p.fourier(k), 0.3 * 8 * np.exp(-0.5 * (2 * k) ** 2), rtol=1e-14)


class TestDecay:
    def test_coulomb_tail(self):
        p = CoulombReg(2.0, 1.0)
        for s in (1e2, 1e3):
            assert abs(s * p.value(s) - 2.0) < 10 * p.decay.C / s

    def test_truncated_rejects_coulomb(self):
        with pytest.raises(ValidationError):
            Truncated(CoulombReg())

    def test_truncated_matches_inside(self):
        base = Yukawa(1.0, 1.0, 0.5)
        t = Truncated(base, 2.0)
        s = np.linspace(0.01, 2.0, 50)
        np.testing.assert_array_equal(t.value(s), base.value(s))
        assert np.all(t.value(np.linspace(4.0, 9.0, 20)) == 0)
