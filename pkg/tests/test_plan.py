import numpy as np
import pytest

from pencilfft import oracle
from pencilfft.decomp import DecompositionError, GlobalGrid, ProcGrid
from pencilfft.plan import Plan, create, backward_global, extract, forward_global
from pencilfft.procgroup import Harness


def relerr(a, b):
    return np.abs(a - b).max() / np.abs(b).max()


def sine_field(shape):
    x, y, z = np.meshgrid(*(np.arange(n) for n in shape), indexing="ij")
    nx, ny, nz = shape
    return np.sin(2 * np.pi * x / nx) * np.sin(2 * np.pi * y / ny) * np.sin(2 * np.pi * z / nz)


def plans_for(grid, pg, **flags):
    return Harness(pg.size).run(lambda w: create(grid, pg, w, **flags))


def test_create_layouts():
    grid, pg = GlobalGrid(30, 16, 8), ProcGrid(4, 2)
    for p in plans_for(grid, pg):
        assert p.input_layout.shape == (30, 4, 4) and p.input_layout.order == "XYZ"
        assert p.output_layout.shape == (4, 8, 8) and p.output_layout.order == "XYZ"
    for p in plans_for(grid, pg, stride1=True):
        assert p.output_layout.shape == (8, 8, 4) and p.output_layout.order == "ZYX"


def test_create_defaults():
    p = create(GlobalGrid(8, 8, 8), ProcGrid(1, 1))
    assert (p.flags.stride1, p.flags.useeven, p.flags.third) == (False, False, "fft")
    assert p.inout_mode == "out-of-place"


def test_create_rejects_infeasible_procgrid():
    with pytest.raises(DecompositionError):
        Harness(8).run(lambda w: create(GlobalGrid(8, 8, 8), ProcGrid(8, 1), w))
    with pytest.raises(DecompositionError):
        create(GlobalGrid(8, 8, 8), ProcGrid(2, 1))


def test_create_is_pure():
    grid, pg = GlobalGrid(12, 10, 8), ProcGrid(2, 2)
    a = plans_for(grid, pg, stride1=True)
    b = plans_for(grid, pg, stride1=True)
    assert [p.structure() for p in a] == [p.structure() for p in b]


@pytest.mark.parametrize("mm", [(1, 1), (2, 2), (1, 4), (4, 2)])
def test_constant_field(mm):
    F = forward_global(np.ones((8, 8, 8)), ProcGrid(*mm))
    assert abs(F[0, 0, 0] - 512) < 1e-12
    F[0, 0, 0] = 0
    assert np.abs(F).max() < 1e-12


def test_sine_field_four_modes():
    f = sine_field((16, 16, 16))
    F = forward_global(f, ProcGrid(2, 2), stride1=True)
    ref = oracle.forward3d(f)
    assert relerr(F, ref) < 1e-10
    big = np.argwhere(np.abs(F) > 1e-9 * 512)
    assert sorted(map(tuple, big)) == [(1, 1, 1), (1, 1, 15), (1, 15, 1), (1, 15, 15)]
    # sin -> -i n/2 at k=1 and +i n/2 at k=n-1 per dimension
    s = {1: -8j, 15: 8j}
    for kx, ky, kz in big:
        assert abs(F[kx, ky, kz] - s[kx] * s[ky] * s[kz]) < 1e-10


def test_parallel_bit_identical_to_serial():
    f = np.random.default_rng(0).standard_normal((12, 10, 8))
    serial = forward_global(f, ProcGrid(1, 1))
    assert np.array_equal(forward_global(f, ProcGrid(2, 2)), serial)
    assert relerr(serial, oracle.forward3d(f)) < 1e-10


def test_roundtrip_scale_16():
    f = np.random.default_rng(1).standard_normal((16, 16, 16))
    grid, pg = GlobalGrid(16, 16, 16), ProcGrid(2, 4)
    back = backward_global(forward_global(f, pg), grid, pg)
    assert np.abs(back - 4096 * f).max() < 1e-10 * 4096 * np.abs(f).max()


def test_zero_field():
    grid, pg = GlobalGrid(8, 8, 8), ProcGrid(2, 2)
    assert not np.any(forward_global(np.zeros(grid.shape), pg))
    assert not np.any(backward_global(np.zeros(grid.spectral_shape, complex), grid, pg))


def test_backward_hermitian_spectrum_bit_exact():
    grid = GlobalGrid(12, 12, 10)
    rng = np.random.default_rng(2)
    spec = np.fft.fftn(rng.standard_normal(grid.shape))[:grid.nc]
    serial = backward_global(spec, grid, ProcGrid(1, 1))
    assert np.array_equal(backward_global(spec, grid, ProcGrid(3, 2)), serial)
    assert relerr(serial, oracle.backward3d(spec, grid.nx)) < 1e-10


def test_backward_rejects_non_hermitian():
    grid = GlobalGrid(8, 8, 8)
    spec = np.zeros(grid.spectral_shape, complex)
    spec[0, 1, 0] = 1.0  # partner (0, 7, 0) left empty
    with pytest.raises(ValueError, match="conjugate-symmetric"):
        backward_global(spec, grid, ProcGrid(2, 2))


def test_forward_input_checks():
    p = create(GlobalGrid(8, 8, 8), ProcGrid(1, 1))
    with pytest.raises(ValueError):
        p.forward(np.zeros((8, 8, 4)))
    bad = p.input_layout.empty()
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        p.forward(bad)
    with pytest.raises(ValueError):
        p.backward(np.zeros((8, 8, 8), complex))


def test_inplace_matches_out_of_place():
    grid, pg = GlobalGrid(16, 16, 16), ProcGrid(2, 2)
    f = np.random.default_rng(3).standard_normal(grid.shape)

    def main(world):
        op = create(grid, pg, world)
        ip = create(grid, pg, world, inplace=True)
        local = extract(f, op.input_layout)
        spec = op.forward(local)
        back = op.backward(spec)
        buf = ip.allocate_input()
        ip.input_view(buf)[...] = local
        spec_ip = ip.forward(buf).copy()
        back_ip = ip.backward(buf)
        assert np.shares_memory(back_ip, buf)
        return (np.array_equal(spec, spec_ip), np.array_equal(back, back_ip), ip.inout_mode)

    for same_spec, same_back, mode in Harness(4).run(main):
        assert same_spec and same_back and mode == "in-place"


def test_inplace_undersized_buffer():
    p = create(GlobalGrid(16, 16, 16), ProcGrid(1, 1), inplace=True)
    with pytest.raises(ValueError, match="needs"):
        p.forward(np.zeros(p.inplace_nbytes // 8 - 1))


def test_out_of_place_aliasing():
    p = create(GlobalGrid(8, 8, 8), ProcGrid(1, 1))
    buf = np.zeros(p.output_layout.size, complex)
    out = buf.reshape(p.output_layout.shape, order="F")
    x = buf.view(np.float64)[:p.input_layout.size].reshape(p.input_layout.shape, order="F")
    with pytest.raises(ValueError, match="overlap"):
        p.forward(x, out=out)
    # a separate output buffer is fine
    good = p.allocate_output()
    assert p.forward(np.ones(p.input_layout.shape), out=good) is good


def test_chebyshev_third():
    shape = (16, 8, 9)
    nx, ny, nz = shape
    x, y, k = np.meshgrid(*(np.arange(n) for n in shape), indexing="ij")
    z = np.cos(np.pi * k / (nz - 1))
    f = np.sin(2 * np.pi * x / nx) * np.sin(2 * np.pi * y / ny) * (2 * z ** 2 - 1)
    F = forward_global(f, ProcGrid(2, 3), third="cheb")
    assert relerr(F, oracle.forward3d(f, "cheb")) < 1e-10
    support = {tuple(i) for i in np.argwhere(np.abs(F) > 1e-9 * np.abs(F).max())}
    assert support and all(kz == 2 for _, _, kz in support)
    back = backward_global(F, GlobalGrid(*shape), ProcGrid(2, 3), third="cheb")
    assert np.abs(back - nx * ny * f).max() < 1e-10 * nx * ny


@pytest.mark.parametrize("nz", [8, 16])
def test_empty_third(nz):
    grid = GlobalGrid(12, 10, nz)
    f = np.random.default_rng(4).standard_normal(grid.shape)
    pg = ProcGrid(2, 2)
    F = forward_global(f, pg, third="empty", stride1=True)
    assert relerr(F, oracle.forward3d(f, "empty")) < 1e-10
    back = backward_global(F, grid, pg, third="empty", stride1=True)
    assert np.abs(back - 120 * f).max() < 1e-10 * 120 * np.abs(f).max()


def test_parseval_and_linearity():
    grid, pg = GlobalGrid(12, 10, 8), ProcGrid(3, 2)
    rng = np.random.default_rng(5)
    f, g = rng.standard_normal(grid.shape), rng.standard_normal(grid.shape)
    F, G = forward_global(f, pg), forward_global(g, pg)
    w = np.full(grid.nc, 2.0)
    w[0] = w[-1] = 1.0
    energy = np.sum(w[:, None, None] * np.abs(F) ** 2)
    assert abs(energy - f.size * np.sum(f ** 2)) < 1e-9 * energy
    H = forward_global(2.0 * f - 0.5 * g, pg)
    assert relerr(H, 2.0 * F - 0.5 * G) < 1e-12


def test_timers_count_exchanges():
    p = create(GlobalGrid(8, 8, 8), ProcGrid(1, 1))
    p.backward(p.forward(np.ones(p.input_layout.shape)))
    assert p.timers.exchanges == 4 and p.timers.comm >= 0


def test_plan_reusable():
    grid = GlobalGrid(8, 8, 8)
    p = create(grid, ProcGrid(1, 1))
    f = np.random.default_rng(6).standard_normal(grid.shape)
    a = p.forward(np.asfortranarray(f))
    b = p.forward(np.asfortranarray(f))
    assert isinstance(p, Plan) and np.array_equal(a, b)
