"""Groupoid arithmetic: axioms, closed-form identities, the Q bound."""

import numpy as np
import pytest

from bruhatlab import groupoid as gpd
from bruhatlab.errors import CompositionMismatch, NotOnSphere


def elt(a, b, w):
    return gpd.canonicalize(a, b, w)


def close(g, h, tol=1e-10):
    return gpd.element_distance(g, h) < tol


class TestCanonicalize:
    def test_phase_removal_at_beta_zero(self):
        w = 0.4 - 1.1j
        g = elt(np.exp(1j * np.pi / 3), 0.0, w)
        assert g.alpha == 1.0 and g.beta == 0.0
        assert abs(g.w - np.exp(-2j * np.pi / 3) * w) < 1e-14

    def test_common_phase_i(self):
        a, b, w = 0.6, 0.8, 1.5 + 0.5j
        g = elt(1j * a, 1j * b, w)
        assert abs(g.alpha - a) < 1e-14
        assert abs(g.beta - b) < 1e-14
        assert abs(g.w + w) < 1e-14

    def test_translate_invariance(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            g = gpd.random_elements(rng, 1)[0]
            th = rng.uniform(0, 2 * np.pi)
            ph = np.exp(1j * th)
            h = elt(ph * g.alpha, ph * g.beta, ph ** 2 * g.w)
            assert close(g, h, 1e-12)

    def test_idempotent_bit_exact(self):
        rng = np.random.default_rng(3)
        for g in gpd.random_elements(rng, 100):
            g2 = gpd.canonicalize(g.alpha, g.beta, g.w)
            assert g2.alpha == g.alpha and g2.beta == g.beta and g2.w == g.w

    def test_rejects_origin(self):
        with pytest.raises(NotOnSphere):
            gpd.canonicalize(0.0, 0.0, 1.0)

    def test_unit_norm_invariant(self):
        g = elt(3.0, 4.0j, 0.2)
        assert abs(abs(g.alpha) ** 2 + abs(g.beta) ** 2 - 1) < 1e-12


class TestIwasawa:
    def test_w_zero_is_identity(self):
        k = gpd.unit_point(0.3 + 0.4j, 0.5 - 0.2j)
        fac = gpd.iwasawa_nk(0.0, k)
        assert abs(fac.kprime[0] - k.alpha) < 1e-14
        assert abs(fac.kprime[1] - k.beta) < 1e-14
        assert abs(fac.aprime - 1.0) < 1e-14
        assert abs(fac.nprime) < 1e-14

    def test_identity_k(self):
        fac = gpd.iwasawa_nk(1.0, gpd.unit_point(1.0, 0.0))
        assert abs(fac.kprime[0] - 1.0) < 1e-14
        assert abs(fac.aprime - 1.0) < 1e-14
        assert abs(fac.nprime - 1.0) < 1e-14

    def test_reconstruction(self):
        rng = np.random.default_rng(11)
        for g in gpd.random_elements(rng, 200):
            k = gpd.UnitPoint(g.alpha, g.beta)
            fac = gpd.iwasawa_nk(g.w, k)
            kp = gpd._kmat(*fac.kprime)
            rec = kp @ np.diag([fac.aprime, 1 / fac.aprime]) @ gpd._nmat(fac.nprime)
            lhs = gpd._nmat(g.w) @ gpd._kmat(g.alpha, g.beta)
            assert np.abs(rec - lhs).max() < 1e-12

    def test_swapped_k(self):
        # k = (0, 1): first column of n k is (-w, -1)... target moves
        fac = gpd.iwasawa_nk(1.0, gpd.unit_point(0.0, 1.0))
        q = abs(fac.kprime[1]) ** 2 + abs(fac.kprime[0]) ** 2
        assert abs(q - 1.0) < 1e-14
        assert fac.aprime > 0


class TestClosedFormIdentities:
    def test_inverse_of_singular_fiber(self):
        w = 1.7 - 0.3j
        assert close(gpd.inverse(elt(1, 0, w)), elt(1, 0, -w), 1e-14)

    def test_chart_inverse(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            z = rng.normal() + 1j * rng.normal()
            w = rng.normal() + 1j * rng.normal()
            lhs = gpd.inverse(gpd.chart_x(z, w))
            rhs = gpd.chart_x(z + np.conj(w), -w)
            assert close(lhs, rhs, 1e-10)

    def test_chart_overlap(self):
        rng = np.random.default_rng(9)
        count = 0
        while count < 1000:
            z = rng.normal() + 1j * rng.normal()
            if abs(z) < 1e-3:
                continue
            w = rng.normal() + 1j * rng.normal()
            lhs = gpd.chart_x(z, w)
            rhs = gpd.chart_xdot(1 / z, z ** 2 * w / abs(z) ** 2)
            assert close(lhs, rhs, 1e-10)
            count += 1

    def test_chart_x_source(self):
        z, w = 1.2 - 0.8j, 0.3 + 2.0j
        src = gpd.source_target(gpd.chart_x(z, w))[0]
        expect = gpd.unit_point(z, 1.0)
        assert abs(src.alpha - expect.alpha) < 1e-12
        assert abs(src.beta - expect.beta) < 1e-12

    def test_chart_x_zero_is_unit(self):
        g = gpd.chart_x(0.0, 0.0)
        s, t = gpd.source_target(g)
        assert g.w == 0.0
        assert abs(s.alpha - t.alpha) < 1e-14

    def test_chart_xdot_at_origin_is_singular_fiber(self):
        # substituting zd = 0 in the trivialization lands on the fiber over
        # [1,0] with N-coordinate -conj(w) (see the decisions note on the
        # thesis's chart display)
        w = 0.8 + 0.1j
        g = gpd.chart_xdot(0.0, w)
        assert close(g, elt(1, 0, -np.conj(w)), 1e-14)

    def test_singular_fiber_multiplication(self):
        w1, w2 = 0.3 + 1j, -2.0 + 0.25j
        p = gpd.multiply(elt(1, 0, w1), elt(1, 0, w2))
        assert close(p, elt(1, 0, w1 + w2), 1e-14)

    def test_target_formula(self):
        # canonical gauge: target = [alpha - w beta, beta] normalized
        rng = np.random.default_rng(13)
        for g in gpd.random_elements(rng, 200):
            t = gpd.source_target(g)[1]
            expect = gpd.unit_point(g.alpha - g.w * np.conj(g.beta), g.beta)
            assert abs(t.alpha - expect.alpha) < 1e-10
            assert abs(t.beta - expect.beta) < 1e-10


class TestAxioms:
    N = 10_000

    def test_axioms_bulk(self):
        rng = np.random.default_rng(2024)
        for _ in range(self.N // 10):
            g = gpd.random_elements(rng, 1)[0]
            gi = gpd.inverse(g)
            s, t = gpd.source_target(g)
            si, ti = gpd.source_target(gi)
            assert s.chordal_distance(ti) < 1e-10
            assert t.chordal_distance(si) < 1e-10
            assert close(gpd.inverse(gi), g)
            u = gpd.multiply(g, gi)
            assert close(u, gpd.unit(t))
            # right unit law
            assert close(gpd.multiply(g, gpd.unit(s)), g)

    def test_endpoint_laws(self):
        rng = np.random.default_rng(77)
        for _ in range(1000):
            g1, g2 = gpd.random_composable_pair(rng)
            p = gpd.multiply(g1, g2)
            s1, t1 = gpd.source_target(g1)
            s2, t2 = gpd.source_target(g2)
            sp, tp = gpd.source_target(p)
            assert sp.chordal_distance(s2) < 1e-10
            assert tp.chordal_distance(t1) < 1e-10

    def test_associativity(self):
        rng = np.random.default_rng(121)
        for _ in range(1000):
            g1, g2 = gpd.random_composable_pair(rng)
            w = rng.normal() + 1j * rng.normal()
            g3 = gpd.inverse(gpd.canonicalize(g2.alpha, g2.beta, w))
            lhs = gpd.multiply(gpd.multiply(g1, g2), g3)
            rhs = gpd.multiply(g1, gpd.multiply(g2, g3))
            assert close(lhs, rhs, 1e-10)

    def test_composition_mismatch(self):
        g1 = elt(1, 0, 1.0)
        g2 = gpd.chart_x(5.0, 0.0)
        with pytest.raises(CompositionMismatch):
            gpd.multiply(g1, g2)


class TestDifferentialBound:
    def test_beta_zero(self):
        q, ok = gpd.mult_differential_bound(1.0, 0.0, 3.0 + 1j)
        assert abs(q - 1.0) < 1e-12 and ok

    def test_random_bound(self):
        rng = np.random.default_rng(31)
        for _ in range(20_000):
            v = rng.normal(size=4)
            a, b = v[0] + 1j * v[1], v[2] + 1j * v[3]
            n = np.hypot(abs(a), abs(b))
            mag = rng.uniform(1.0 + 1e-9, 1e3)
            ang = rng.uniform(0, 2 * np.pi)
            w = mag * np.exp(1j * ang)
            q, ok = gpd.mult_differential_bound(a / n, b / n, w)
            assert ok, f"bound violated: Q={q}, w={w}"

    def test_brute_force_minimum(self):
        # minimize Q over the sphere for fixed w by grid search
        w = 4.0 - 2.0j
        best = np.inf
        for th in np.linspace(0, np.pi / 2, 120):
            for ph in np.linspace(0, 2 * np.pi, 240, endpoint=False):
                a = np.cos(th)
                b = np.sin(th) * np.exp(1j * ph)
                q, _ = gpd.mult_differential_bound(a, b, w)
                best = min(best, q)
        assert best >= 1.0 / (4 * abs(w) ** 2)
