from __future__ import annotations

import numpy as np
import pytest
from scipy import integrate

from kinetic import forcefield as F
from kinetic.distributions import Maxwellian, SpeciesSet
from kinetic.errors import NonIntegrableKernel, ParticleOverlap, StepTooCoarse, ValidationError
from kinetic.pointprocess import ParticleConfiguration, sample_poisson
from kinetic.potentials import Bump, CoulombReg, Gaussian, ScaledPotential, Yukawa

G = Maxwellian((0, 0, 0), 1.0, 1.0)


def one_particle(x, v=(0.0, 0.0, 0.0)):
    return ParticleConfiguration((np.array([x], dtype=float),), (np.array([v], dtype=float),), 10.0, 0)


class TestForceAt:
    def test_empty(self):
        cfg = ParticleConfiguration((np.zeros((0, 3)),), (np.zeros((0, 3)),), 5.0, 0)
        f = F.force_at(cfg, ScaledPotential(Gaussian()), [1.0], np.zeros(3))
        assert np.all(f.value == 0) and f.n_particles_used == 0

    def test_single_yukawa(self):
        eps, L = 0.2, 3.0
        p = ScaledPotential(Yukawa(), "landau", eps, L=L)
        x = np.array([0.5, 0.2, -0.1])
        cfg = one_particle(x - np.array([1.0, 0, 0]) - 0.5 * np.array([0.0, 1.0, 0.0]), (0.0, 1.0, 0.0))
        f = F.force_at(cfg, p, [1.0], x, tau=0.5)
        s = 1.0 / L
        dphi = -np.exp(-s) * (1 / s + 1 / s**2)
        np.testing.assert_allclose(f.value, [-(eps / L) * dphi, 0, 0], rtol=1e-13)

    def test_charge_sign(self):
        p = ScaledPotential(Gaussian())
        cfg = one_particle((1.0, 0, 0))
        a = F.force_at(cfg, p, [1.0], np.zeros(3)).value
        b = F.force_at(cfg, p, [-2.0], np.zeros(3)).value
        np.testing.assert_allclose(b, -2 * a)

    def test_overlap(self):
        p = ScaledPotential(Yukawa())
        with pytest.raises(ParticleOverlap):
            F.force_at(one_particle((0.0, 0, 0)), p, [1.0], np.zeros(3))

    def test_truncation(self):
        cfg = one_particle((3.0, 0, 0))
        f = F.force_at(cfg, ScaledPotential(Gaussian()), [1.0], np.zeros(3), R_trunc=2.0)
        assert f.n_particles_used == 0

    def test_neutral_coulomb_mean_zero(self):
        sp = SpeciesSet.neutral_pair(G)
        p = ScaledPotential(CoulombReg(1.0, 1.0), "coulomb_weak", 1.0)
        vals = np.array([F.force_at(sample_poisson(sp, 6.0, s), p, [1.0, -1.0], np.zeros(3)).value
                         for s in range(500)])
        se = vals.std(axis=0, ddof=1) / np.sqrt(500)
        assert np.all(np.abs(vals.mean(axis=0)) < 3 * se)


class TestShells:
    def test_sum_equals_force(self):
        sp = SpeciesSet.neutral_pair(G)
        p = ScaledPotential(CoulombReg(1.0, 0.5), "coulomb_weak", 1.0)
        cfg = sample_poisson(sp, 16.0, 3)
        x = np.array([0.3, -0.2, 0.1])
        parts = F.dyadic_shells(cfg, p, [1.0, -1.0], x, 0.0, 4)
        ref = F.force_at(cfg, p, [1.0, -1.0], x, R_trunc=16.0).value
        assert np.max(np.abs(np.sum(parts, axis=0) - ref)) < 1e-12 * max(1.0, np.abs(ref).max())

    def test_too_many_shells(self):
        cfg = sample_poisson(SpeciesSet.single(G), 4.0, 0)
        with pytest.raises(ValidationError):
            F.dyadic_shells(cfg, ScaledPotential(Gaussian()), [1.0], np.zeros(3), 0.0, 3)

    def test_fast_decay_geometric(self):
        stats = F.shell_ensemble(SpeciesSet.single(G), ScaledPotential(Gaussian()), np.zeros(3), 0.0, 3, 200, 7)
        tr = np.array([s.trace for s in stats[1:]])
        slope = np.polyfit(np.arange(len(tr)), np.log(tr), 1)[0]
        assert slope < 0
        for s in stats:
            assert np.allclose(s.second_moment, s.second_moment.T)
            assert np.linalg.eigvalsh(s.second_moment).min() >= -1e-12

    def test_coulomb_deflection_shells_flat(self):
        # per-shell deflection variance from impact-parameter shells 2^j < b <= 2^(j+1)
        sp = SpeciesSet.neutral_pair(G)
        p = ScaledPotential(CoulombReg(1.0, 1.0), "coulomb_weak", 0.1)
        ens = F.deflection_mc(sp, p, [1.0, 0, 0], 2000.0, 60, 4, r_in=2.0, r_out=64.0, m_target=500, shells=True)
        m = np.array(ens.meta["shell_second_moments"][1:])
        assert m.max() / m.min() < 3.0


class TestDeflection:
    def test_zero_potential(self):
        sp = SpeciesSet.single(G)
        ens = F.deflection_mc(sp, ScaledPotential(Gaussian(0.0, 1.0)), [1.0, 0, 0], 5.0, 10, 0, r_out=3.0)
        assert np.all(ens.samples == 0)

    def test_step_guard(self):
        sp = SpeciesSet.single(G)
        with pytest.raises(StepTooCoarse):
            F.deflection_mc(sp, ScaledPotential(Gaussian()), [1.0, 0, 0], 2.0, 4, 0, method="direct", dt=1.0)

    def test_pair_deflection_quadrature(self):
        # closed-form line integrals against direct quadrature of the gradient
        rng = np.random.default_rng(2)
        for base in (Gaussian(1.5, 0.8), CoulombReg(1.0, 0.7), Yukawa(1.0, 1.0, 0.5)):
            p = ScaledPotential(base, "landau", 0.3, L=2.0)
            x = rng.normal(size=(5, 3)) * 2
            u = rng.normal(size=(5, 3))
            got = F.pair_deflections(p, x, u, 4.0)
            for i in range(5):
                ref, _ = integrate.quad_vec(lambda t: p.gradient(u[i] * t - x[i]), 0, 4.0, epsabs=1e-13)
                np.testing.assert_allclose(got[i], ref, rtol=1e-7, atol=1e-11)

    def test_tube_vs_direct(self):
        # a cold medium keeps the direct ball small
        sp = SpeciesSet.single(Maxwellian((0, 0, 0), 0.1, 2.0))
        p = ScaledPotential(Bump(1.0, 1.0), "landau", 0.5, L=1.0)
        V = [1.0, 0, 0]
        tube = F.deflection_mc(sp, p, V, 1.5, 600, 1)
        direct = F.deflection_mc(sp, p, V, 1.5, 300, 2, method="direct")
        se = np.hypot(tube.trace_std_error, direct.trace_std_error)
        assert abs(tube.trace - direct.trace) < 4 * se
        assert np.all(np.abs(tube.mean) < 4 * tube.mean_std_error)

    def test_tube_sampler_inside(self):
        g = np.random.default_rng(0)
        ends = g.normal(size=(4000, 3)) * 3
        x = F.sample_in_tube(g, 0.7, ends)
        assert np.all(F.segment_distance(x, ends) <= 0.7 + 1e-12)
        # the cylinder share matches its volume fraction
        length = np.linalg.norm(ends, axis=1)
        t = np.sum(x * ends, axis=1) / length**2
        inside = (t > 0) & (t < 1)
        expect = np.mean(np.pi * 0.49 * length / F.tube_volume(0.7, length))
        assert abs(inside.mean() - expect) < 4 * np.sqrt(expect * (1 - expect) / 4000)

    def test_workers_identical(self):
        sp = SpeciesSet.single(G)
        p = ScaledPotential(Gaussian(), "landau", 0.2, L=2.0)
        a = F.deflection_mc(sp, p, [1.0, 0, 0], 10.0, 8, 3, workers=1)
        b = F.deflection_mc(sp, p, [1.0, 0, 0], 10.0, 8, 3, workers=2)
        np.testing.assert_array_equal(a.samples, b.samples)


class TestKernel:
    def test_zero_lag(self):
        base = Gaussian()
        K0 = F.kernel_K(base, G, [1.0, 0, 0], 0.0)
        # int |grad Phi|^2 = 4 pi int r^4 e^{-r^2} dr = 3 pi^{3/2} / 2
        grad2 = 1.5 * np.pi**1.5
        np.testing.assert_allclose(K0, grad2 / 3 * np.eye(3), atol=1e-10)

    def test_decay(self):
        base = Gaussian()
        tr = [np.trace(F.kernel_K(base, G, [1.0, 0, 0], t)) for t in (0.0, 0.5, 1.0, 2.0, 4.0)]
        assert all(a > b for a, b in zip(tr, tr[1:]))

    def test_coulomb_non_integrable(self):
        with pytest.raises(NonIntegrableKernel):
            F.kernel_diffusion(CoulombReg(), G, [1.0, 0, 0])

    def test_coulomb_plateau(self):
        vals = F.kernel_plateau(CoulombReg(1.0, 1.0), G, [1.0, 0, 0], [100.0, 300.0, 1000.0])
        tr = np.trace(vals, axis1=1, axis2=2)
        assert abs(tr[2] - tr[1]) < 0.05 * abs(tr[2])

    def test_isotropic_diagonal(self):
        D, clipped, _ = F.kernel_diffusion(Gaussian(), G, [1.0, 0, 0], n_gh=16)
        off = D - np.diag(np.diag(D))
        assert np.abs(off).max() < 1e-9 * np.trace(D)
        assert D[1, 1] == pytest.approx(D[2, 2], rel=1e-9)
        assert clipped < 1e-8 * np.trace(D)

    def test_rest_frame_isotropic(self):
        D, _, _ = F.kernel_diffusion(Gaussian(), G, [0.0, 0, 0], n_gh=16)
        ev = np.linalg.eigvalsh(D)
        assert ev.max() - ev.min() < 1e-6 * ev.max()

    def test_friction_einstein(self):
        # with grad g = -(w - u) g / T the friction is D (V - u) / T
        V = np.array([0.7, 0, 0])
        D, _, _ = F.kernel_diffusion(Gaussian(), G, V, n_gh=16)
        lam, _ = F.kernel_friction(Gaussian(), G, V, n_gh=16)
        np.testing.assert_allclose(lam, D @ V, rtol=1e-6, atol=1e-12)


class TestBoltzmannGrad:
    def test_scaling_law(self):
        assert F.estimate_T_BG(0.1) == pytest.approx(100.0)
        assert F.estimate_T_BG(0.01) == pytest.approx(1e4)
        with pytest.raises(ValidationError):
            F.estimate_T_BG(0.0)

    def test_tube_hit(self):
        lam = 0.05
        tau = F.estimate_T_BG(lam)
        # the law fixes only the scaling; n = 0.1 puts n pi E|V - v| at about 0.58
        dilute = Maxwellian((0, 0, 0), 1.0, 0.1)
        p, se = F.tube_hit_probability(dilute, [1.0, 0, 0], lam, tau, 500, 0)
        assert 0.2 <= p <= 0.8
        exact = F.tube_hit_probability_exact(dilute, [1.0, 0, 0], lam, tau)
        assert abs(p - exact) < 4 * se
