from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinetic.distributions import (
    Maxwellian,
    MaxwellianMixture,
    Species,
    SpeciesSet,
    Tabulated,
    density,
    distribution_from_config,
    electroneutral,
    grad,
    radon_transform,
)
from kinetic.errors import DegenerateDirection, OutOfGrid, ValidationError


def gaussian_grid(lo, hi, n):
    axes = [np.linspace(lo[i], hi[i], n[i]) for i in range(3)]
    W = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = (2 * np.pi) ** -1.5 * np.exp(-0.5 * np.sum(W**2, axis=-1))
    bounds = [b for pair in zip(lo, hi) for b in pair]
    return Tabulated(bounds, vals)


def random_unit(rng):
    d = rng.standard_normal(3)
    return d / np.linalg.norm(d)


class TestDensity:
    def test_maxwellian_unit(self):
        assert density(Maxwellian((0, 0, 0), 1.0, 1.0)) == 1.0

    def test_maxwellian_shifted(self):
        assert density(Maxwellian((3, 0, 0), 2.0, 0.5)) == 0.5

    def test_tabulated_gaussian(self):
        g = gaussian_grid((-6, -6, -6), (6, 6, 6), (64, 64, 64))
        assert abs(density(g) - 1.0) < 1e-4

    def test_tabulated_rejects_negative(self):
        with pytest.raises(ValidationError):
            Tabulated([0, 1, 0, 1, 0, 1], -np.ones((2, 2, 2)))

    def test_maxwellian_rejects_bad_temperature(self):
        with pytest.raises(ValidationError):
            Maxwellian((0, 0, 0), -1.0, 1.0)

    def test_tabulated_roundtrip(self, tmp_path):
        g = gaussian_grid((-4, -4, -4), (4, 4, 4), (9, 10, 11))
        path = tmp_path / "g.bin"
        g.save(path)
        h = distribution_from_config({"kind": "tabulated", "path": "g.bin"}, base_dir=tmp_path)
        assert h.values.shape == (9, 10, 11)
        np.testing.assert_array_equal(h.values, g.values)
        assert h.bounds == g.bounds


class TestRadon:
    def test_standard_marginal(self):
        H = radon_transform(Maxwellian((0, 0, 0), 1.0, 1.0), [1.0, 0, 0])
        s = np.linspace(-5, 5, 41)
        np.testing.assert_allclose(H(s), np.exp(-s**2 / 2) / np.sqrt(2 * np.pi), rtol=1e-13)

    def test_shifted_marginal(self):
        H = radon_transform(Maxwellian((2, 0, 0), 1.0, 1.0), [1.0, 0, 0])
        s = np.linspace(-3, 7, 41)
        np.testing.assert_allclose(H(s), np.exp(-(s - 2) ** 2 / 2) / np.sqrt(2 * np.pi), rtol=1e-13)

    def test_two_stream_bimodal(self):
        g = MaxwellianMixture.two_stream(3.0, 1.0)
        H = radon_transform(g, [1.0, 0, 0])
        s = np.linspace(-6, 6, 1201)
        h = H(s)
        # analytic mixture marginal
        ref = 0.5 * (np.exp(-(s - 3) ** 2 / 2) + np.exp(-(s + 3) ** 2 / 2)) / np.sqrt(2 * np.pi)
        np.testing.assert_allclose(h, ref, rtol=1e-12)
        mid = np.argmin(np.abs(s))
        inner = slice(np.argmin(np.abs(s + 3)), np.argmin(np.abs(s - 3)) + 1)
        assert np.argmin(h[inner]) + inner.start == mid
        assert h[mid] < 0.1 * h.max()

    def test_degenerate_direction(self):
        with pytest.raises(DegenerateDirection):
            radon_transform(Maxwellian(), [1.0, 1e-5, 0])

    def test_isotropy(self):
        g = Maxwellian((0, 0, 0), 1.3, 0.7)
        rng = np.random.default_rng(5)
        s = np.linspace(-4, 4, 81)
        ref = radon_transform(g, [0, 0, 1.0])(s)
        for _ in range(20):
            h = radon_transform(g, random_unit(rng))(s)
            assert np.max(np.abs(h - ref) / ref) < 1e-8

    def test_tabulated_slice(self):
        g = gaussian_grid((-6, -6, -6), (6, 6, 6), (49, 49, 49))
        H = radon_transform(g, [0.6, 0.8, 0.0])
        s = np.linspace(-2, 2, 9)
        np.testing.assert_allclose(H(s), np.exp(-s**2 / 2) / np.sqrt(2 * np.pi), atol=5e-3)
        assert abs(H.total() - 1.0) < 5e-3

    @settings(max_examples=25, deadline=None)
    @given(
        ux=st.floats(-3, 3), T=st.floats(0.2, 4), n=st.floats(0.01, 5),
        a=st.floats(-1, 1), b=st.floats(-1, 1), c=st.floats(0.1, 1),
    )
    def test_slice_mass_equals_density(self, ux, T, n, a, b, c):
        th = np.array([a, b, c])
        th /= np.linalg.norm(th)
        g = Maxwellian((ux, 0.5, 0), T, n)
        H = radon_transform(g, th)
        lo = th @ g.u - 12 * np.sqrt(T)
        s = np.linspace(lo, lo + 24 * np.sqrt(T), 4001)
        hs = H(s)
        assert np.all(hs >= 0)
        assert abs(np.trapezoid(hs, s) - n) < 1e-6 * n


class TestElectroneutral:
    def sset(self, *pairs):
        return SpeciesSet(tuple(Species(q, Maxwellian((0, 0, 0), 1.0, n)) for q, n in pairs))

    def test_balanced(self):
        assert electroneutral(self.sset((1, 1), (-1, 1)))

    def test_net_charge(self):
        assert not electroneutral(self.sset((1, 1), (-1, 0.5)))

    def test_multiply_charged(self):
        assert electroneutral(self.sset((2, 1), (-1, 2)))

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            SpeciesSet(())

    def test_zero_charge_rejected(self):
        with pytest.raises(ValidationError):
            self.sset((0, 1))


class TestGrad:
    def test_zero_at_mean(self):
        np.testing.assert_array_equal(grad(Maxwellian(), np.zeros(3)), np.zeros(3))

    def test_analytic(self):
        g = Maxwellian()
        w = np.array([1.0, 0, 0])
        np.testing.assert_allclose(grad(g, w), -w * g.pdf(w), rtol=1e-14)

    def test_tabulated_fine_grid(self):
        g = gaussian_grid((0.45, -0.05, -0.05), (0.55, 0.05, 0.05), (101, 101, 101))
        w = np.array([0.5, 0.0, 0.0])
        ref = -w * np.exp(-0.125) * (2 * np.pi) ** -1.5
        assert np.max(np.abs(grad(g, w) - ref)) < 1e-6

    def test_tabulated_outside(self):
        g = gaussian_grid((-1, -1, -1), (1, 1, 1), (5, 5, 5))
        with pytest.raises(OutOfGrid):
            grad(g, np.array([2.0, 0, 0]))

    @settings(max_examples=30, deadline=None)
    @given(x=st.floats(-4, 4), y=st.floats(-4, 4), z=st.floats(-4, 4))
    def test_isotropic_gradient_antiparallel(self, x, y, z):
        w = np.array([x, y, z])
        gr = grad(Maxwellian((0, 0, 0), 1.5, 2.0), w)
        assert np.linalg.norm(np.cross(gr, w)) <= 1e-12 * (1 + np.linalg.norm(w))
        assert gr @ w <= 0


class TestSampling:
    def test_moments(self):
        g = Maxwellian((1, -2, 0.5), 2.0, 1.0)
        w = g.sample(np.random.default_rng(0), 200_000)
        np.testing.assert_allclose(w.mean(axis=0), g.u, atol=0.02)
        np.testing.assert_allclose(np.cov(w.T), 2.0 * np.eye(3), atol=0.03)
