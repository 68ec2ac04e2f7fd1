import math

import numpy as np
import pytest

from helmlayer import (DtnSpec, InvalidExtent, LayerSpec, NodeClass,
                       ParticleConfiguration, ParticleOutOfDomain, build_grid,
                       choose_n_modes, classify_nodes, dtn_apply, quasi_mode)


def test_build_grid_interface_on_line():
    grid = build_grid(10.0, 8.0, 0.1, interface_heights=(5.0,))
    snap = grid.snaps[0]
    assert snap.snapped == pytest.approx(5.0)
    assert snap.distance == pytest.approx(0.0, abs=1e-12)
    assert grid.j_of_height(snap.snapped) == snap.j_index
    assert snap.j_index * grid.dy == pytest.approx(5.0)


def test_build_grid_snaps_offset_interface():
    grid = build_grid(10.0, 8.0, 0.1, interface_heights=(5.03,))
    snap = grid.snaps[0]
    assert snap.snapped == pytest.approx(5.0)
    assert snap.distance == pytest.approx(0.03)
    assert snap.distance < grid.dy / 2.0


def test_build_grid_two_interfaces():
    grid = build_grid(10.0, 8.0, 0.1, interface_heights=(6.0, 8.0))
    assert [s.snapped for s in grid.snaps] == [pytest.approx(6.0), pytest.approx(8.0)]


def test_grid_aspect_guard():
    from helmlayer import Grid

    with pytest.raises(InvalidExtent):
        Grid(width=10.0, top=8.0, nx=10, ny=81, dx=1.0, dy=0.1)


def test_classify_no_particles():
    grid = build_grid(10.0, 8.0, 0.2)
    tags = classify_nodes(grid, None)
    assert (tags[0] == NodeClass.BOTTOM_BOUNDARY).all()
    assert (tags[-1] == NodeClass.TOP_DTN).all()
    assert (tags[1:-1] == NodeClass.INTERIOR).all()


def test_classify_disk_area_count():
    layer = LayerSpec(h=8.0, delta=0.05, width=10.0)
    config = ParticleConfiguration(np.array([[0.0, 4.0]]), layer, seed=0)
    grid = build_grid(10.0, 8.0, 0.1)
    tags = classify_nodes(grid, config, scale=1.0)
    count = int((tags == NodeClass.PARTICLE_DIRICHLET).sum())
    expected = math.pi / (grid.dx * grid.dy)
    assert abs(count - expected) <= 0.05 * expected


def test_classify_seam_disk_matches_bruteforce():
    # centre chosen off the lattice so no node sits exactly on the circle
    cx, cy = -4.97, 4.03
    layer = LayerSpec(h=8.0, delta=0.05, width=10.0)
    config = ParticleConfiguration(np.array([[cx, cy]]), layer, seed=0)
    grid = build_grid(10.0, 8.0, 0.1)
    tags = classify_nodes(grid, config, scale=1.0)
    xs, ys = grid.x_nodes(), grid.y_nodes()
    for j in range(grid.ny):
        for i in range(grid.nx):
            dx = xs[i] - cx
            dx -= grid.width * round(dx / grid.width)
            inside = dx * dx + (ys[j] - cy) ** 2 < 1.0
            assert (tags[j, i] == NodeClass.PARTICLE_DIRICHLET) == inside
    left = (tags[:, :10] == NodeClass.PARTICLE_DIRICHLET).sum()
    right = (tags[:, -10:] == NodeClass.PARTICLE_DIRICHLET).sum()
    assert left > 0 and right > 0


def test_classify_rejects_disk_outside_vertical_extent():
    layer = LayerSpec(h=8.0, delta=0.05, width=10.0)
    config = ParticleConfiguration(np.array([[0.0, 4.0]]), layer, seed=0)
    grid = build_grid(10.0, 3.0, 0.1)
    with pytest.raises(ParticleOutOfDomain):
        classify_nodes(grid, config, scale=1.0)


def test_choose_n_modes_laplace_closed_form():
    assert choose_n_modes("laplace_periodic", 0.0, 0.0, 10.0, 2.0, 1e-6) == 11
    assert choose_n_modes("laplace_periodic", 0.0, 0.0, 10.0, 2.0, 1.0) == 0


def test_choose_n_modes_helmholtz_scan():
    k1 = math.sin(math.pi / 4.0)
    assert choose_n_modes("helmholtz_quasiperiodic", 1.0, k1, 100.0, 1.0, 1e-6) == 210


def test_dtn_spectral_action_laplace():
    width, nx = 10.0, 64
    spec = DtnSpec(kind="laplace_periodic", n_modes=8)
    for m in (0, 1, 2):
        phi = quasi_mode(width, nx, m)
        lam = 2.0 * abs(m) * math.pi / width
        err = np.abs(dtn_apply(spec, width, phi) - lam * phi).max()
        assert err < 1e-10


def test_dtn_spectral_action_helmholtz():
    # width chosen so m = 0, 1, 2 are all propagating
    width, nx, k, k1 = 20.0, 64, 1.0, 0.3
    spec = DtnSpec(kind="helmholtz_quasiperiodic", n_modes=8, k=k, k1=k1)
    for m in (0, 1, 2):
        phi = quasi_mode(width, nx, m, k1=k1)
        zeta = 2.0 * math.pi * m / width + k1
        beta = math.sqrt(k * k - zeta * zeta)
        err = np.abs(dtn_apply(spec, width, phi) - (-1j * beta) * phi).max()
        assert err < 1e-10


def test_dtn_evanescent_modes_decay():
    # beyond the propagating band the multiplier must be negative real
    width, nx, k, k1 = 20.0, 64, 1.0, 0.3
    spec = DtnSpec(kind="helmholtz_quasiperiodic", n_modes=8, k=k, k1=k1)
    m = 6
    zeta = 2.0 * math.pi * m / width + k1
    assert zeta > k
    phi = quasi_mode(width, nx, m, k1=k1)
    out = dtn_apply(spec, width, phi)
    sigma = out[0] / phi[0]
    assert sigma.real == pytest.approx(-math.sqrt(zeta * zeta - k * k), rel=1e-12)
    assert abs(sigma.imag) < 1e-12


def test_dtn_truncation_zeroes_high_modes():
    width, nx = 10.0, 64
    spec = DtnSpec(kind="laplace_periodic", n_modes=3)
    phi = quasi_mode(width, nx, 5)
    assert np.abs(dtn_apply(spec, width, phi)).max() < 1e-12
