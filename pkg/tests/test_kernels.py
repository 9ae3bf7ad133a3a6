"""Convolution calculus: identities, decay estimation, norms, snapshots."""

import numpy as np
import pytest

from bruhatlab import kernels as ker
from bruhatlab.errors import GridMismatch, InsufficientExtent, NonIntegrable


@pytest.fixture(scope="module")
def grid():
    return ker.make_grid(8.0, 0.0625)


def test_grid_axis_symmetric(grid):
    ax = grid.axis
    assert ax[grid.half_n] == 0.0
    assert abs(ax[0] + grid.extent) < 1e-14


def test_delta_is_identity(grid):
    g = ker.gaussian_kernel(grid, 0.7)
    d = ker.delta_kernel(grid)
    out = ker.convolve(d, g)
    assert np.abs(out.samples - g.samples).max() < 1e-10


def test_gaussian_semigroup(grid):
    s1, s2 = 0.5, 0.8
    a = ker.gaussian_kernel(grid, s1)
    b = ker.gaussian_kernel(grid, s2)
    c = ker.convolve(a, b)
    expect = ker.gaussian_kernel(grid, np.hypot(s1, s2))
    assert np.abs(c.samples - expect.samples).max() < 1e-8


def test_grid_mismatch(grid):
    other = ker.make_grid(8.0, 0.125)
    with pytest.raises(GridMismatch):
        ker.convolve(ker.delta_kernel(grid), ker.delta_kernel(other))


def test_nonintegrable():
    g = ker.make_grid(4.0, 0.25)
    flat = ker.FiberKernel("invariant", np.ones((g.n, g.n), dtype=complex), g)
    with pytest.raises(NonIntegrable):
        ker.convolve(flat, flat)


def test_decay_composition_min_law():
    g = ker.make_grid(10.0, 0.1)
    f1 = ker.exp_kernel(g, 2.0)
    f2 = ker.exp_kernel(g, 1.0)
    out = ker.convolve(f1, f2)
    est = ker.decay_rate(out)
    assert est.eps >= 0.95
    assert out.decay_class is not None
    assert out.decay_class >= 1.0 - 2 * ker.DECAY_FIT_SLACK - 1e-12


def test_min_decay_law_random_pairs():
    rng = np.random.default_rng(42)
    g = ker.make_grid(10.0, 0.125)
    for _ in range(50):
        e1, e2 = rng.uniform(0.8, 3.0, size=2)
        f1 = ker.exp_kernel(g, e1)
        f2 = ker.exp_kernel(g, e2)
        est = ker.decay_rate(ker.convolve(f1, f2))
        assert est.eps >= min(e1, e2) - 0.05


def test_convolution_associativity():
    g = ker.make_grid(6.0, 0.125)
    rng = np.random.default_rng(0)

    def bump(center, width):
        r = np.abs(g.points() - center)
        s = np.where(r < width, np.exp(-r ** 2 / width ** 2), 0.0)
        return ker.FiberKernel("invariant", s.astype(complex), g)

    a = bump(0.5 + 0.2j, 1.0)
    b = bump(-0.3 + 0.4j, 0.8)
    c = bump(0.1 - 0.6j, 1.2)
    lhs = ker.convolve(ker.convolve(a, b), c).samples
    rhs = ker.convolve(a, ker.convolve(b, c)).samples
    scale = np.abs(lhs).max()
    assert np.abs(lhs - rhs).max() < 1e-6 * scale


def test_one_norm(grid):
    d = ker.delta_kernel(grid)
    assert abs(ker.one_norm(d) - 1.0) < 1e-12
    gsc = ker.gaussian_kernel(grid, 0.6)
    assert abs(ker.one_norm(gsc) - 1.0) < 1e-6
    # symmetric kernel: both integrals coincide
    e = ker.exp_kernel(grid, 1.5)
    h = grid.spacing
    fwd = np.abs(e.samples).sum() * h ** 2
    rev = np.abs(e.samples[::-1, ::-1]).sum() * h ** 2
    assert abs(fwd - rev) < 1e-12


def test_one_norm_submultiplicative():
    g = ker.make_grid(10.0, 0.1)
    rng = np.random.default_rng(5)
    for _ in range(10):
        e1, e2 = rng.uniform(0.9, 2.5, size=2)
        f1 = ker.exp_kernel(g, e1)
        f2 = ker.exp_kernel(g, e2)
        prod = ker.convolve(f1, f2)
        assert ker.one_norm(prod) <= ker.one_norm(f1) * ker.one_norm(f2) * (1 + 1e-3)


def test_apply_operator_identity(grid):
    vals = np.exp(-grid.radius() ** 2).astype(complex)
    u = ker.SectionOnG(vals, grid)
    out = ker.apply_operator(ker.delta_kernel(grid), u)
    assert np.abs(out.values - vals).max() < 1e-10


def test_apply_operator_constant(grid):
    kappa = ker.gaussian_kernel(grid, 0.5, mass=2.0)
    u = ker.SectionOnG(np.ones((grid.n, grid.n), dtype=complex), grid)
    out = ker.apply_operator(kappa, u)
    center = out.values[grid.half_n, grid.half_n]
    assert abs(center - 2.0) < 1e-6


def test_apply_right_invariance(grid):
    # translate-then-apply = apply-then-translate for invariant kernels
    kappa = ker.gaussian_kernel(grid, 0.5)
    r = grid.radius()
    vals = np.exp(-(r - 1.0) ** 2).astype(complex)
    shift = 8  # grid nodes
    u = ker.SectionOnG(vals, grid)
    out1 = np.roll(ker.apply_operator(kappa, u).values, shift, axis=1)
    u2 = ker.SectionOnG(np.roll(vals, shift, axis=1), grid)
    out2 = ker.apply_operator(kappa, u2).values
    interior = (slice(16, -16), slice(16, -16))
    assert np.abs(out1 - out2)[interior].max() < 1e-6


def test_vector_rep_identity_and_mass(grid):
    f = lambda z: np.exp(-np.abs(z) ** 2)
    d = ker.delta_kernel(grid)
    out = ker.vector_rep(d, f, grid)
    assert np.abs(out - f(grid.points())).max() < 1e-10
    m = 1.7
    gk = ker.gaussian_kernel(grid, 0.5, mass=m)
    const = ker.vector_rep(gk, lambda z: np.ones_like(z, dtype=complex), grid)
    assert abs(const[grid.half_n, grid.half_n] - m) < 1e-6


def test_vector_rep_multiplicative(grid):
    k1 = ker.gaussian_kernel(grid, 0.4)
    k2 = ker.gaussian_kernel(grid, 0.6)
    f = lambda z: np.exp(-np.abs(z - 0.5) ** 2)
    lhs = ker.vector_rep(ker.convolve(k1, k2), f, grid)
    inner = ker.vector_rep(k2, f, grid)
    # compose: nu(k1) applied to the sampled inner function
    rhs = ker._fft_conv(k1.samples, inner, grid.spacing)
    interior = (slice(16, -16), slice(16, -16))
    err = np.abs(lhs - rhs)[interior].max()
    assert err < 1e-6


def test_decay_rate_exact_exponential():
    g = ker.make_grid(10.0, 0.1)
    est = ker.decay_rate(ker.exp_kernel(g, 2.0))
    assert abs(est.eps - 2.0) < 0.02
    assert not est.super_exponential


def test_decay_rate_gaussian_flags_super_exponential():
    g = ker.make_grid(10.0, 0.1)
    est = ker.decay_rate(ker.gaussian_kernel(g, 1.0))
    assert est.super_exponential


def test_decay_rate_insufficient_extent():
    g = ker.make_grid(2.0, 0.1)
    slow = ker.exp_kernel(g, 0.3)
    with pytest.raises(InsufficientExtent):
        ker.decay_rate(slow)


def test_decay_certificate(grid):
    e = ker.exp_kernel(grid, 1.0)
    assert ker.check_decay_certificate(e)


def test_family_separable_convolution(grid):
    # weight(x) * base(p) against an invariant kernel at a specified unit
    base = ker.gaussian_kernel(grid, 0.5).samples
    weight = lambda z: 1.0 / (1.0 + np.abs(z) ** 2)
    fam = ker.FiberKernel("family", base, grid, unit_weight=weight)
    ginv = ker.gaussian_kernel(grid, 0.4)
    out = ker.convolve(fam, ginv)
    assert out.kind == "family"
    slice0 = out.slice_at(0.0)
    pts = grid.points()
    direct = ker._fft_conv(base, weight(0.0 + pts) * ginv.samples, grid.spacing)
    assert np.abs(slice0 - direct).max() < 1e-12


def test_snapshot_roundtrip(tmp_path, grid):
    k = ker.exp_kernel(grid, 1.3)
    path = tmp_path / "kern.blk"
    ker.save_snapshot(k, str(path))
    back = ker.load_snapshot(str(path))
    assert back.grid.same_as(k.grid)
    assert np.array_equal(back.samples, k.samples)
    assert abs(back.decay_class - k.decay_class) < 1e-15


def test_csv_export(tmp_path, grid):
    k = ker.gaussian_kernel(ker.make_grid(1.0, 0.5), 0.5)
    path = tmp_path / "kern.csv"
    ker.export_csv(k, str(path))
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "p_re,p_im,value_re,value_im"
    assert len(lines) == 1 + k.grid.n ** 2
