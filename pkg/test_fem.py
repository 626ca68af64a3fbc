import numpy as np
import pytest

from Components.FiniteElements import (FEFunction, apply_dirichlet, assemble, build_forms, build_space,
                                       coupling_matrix, dirichlet_dofs, divergence_matrix, inf_sup_constant,
                                       interpolate, l2_project, load_vector, mass_matrix, mean_vector,
                                       squared_norm, stiffness_matrix)
from Components.Quadrature import ERROR_RULE, physical_points
from conftest import unit_square


def quadratic_field(points):
    x, y = points[..., 0], points[..., 1]
    return np.stack([x ** 2 + y, x * y - 0.5 * y ** 2], axis=-1)


def test_space_dimensions(square4):
    assert build_space(square4, "P2-scalar").dim == 25 + 56
    assert build_space(square4, "P2-vector").dim == 2 * 81
    assert build_space(square4, "P1-scalar").dim == 25
    assert build_space(square4, "P0-vector").dim == 2 * 32


def test_control_space_lives_on_its_cells(multidomain8):
    cells = multidomain8.cells_in(["O1"])
    p1 = build_space(multidomain8, "P1-vector", cells)
    p0 = build_space(multidomain8, "P0-vector", cells)
    assert p1.dim == 2 * 81
    assert p0.dim == 2 * 128
    with pytest.raises(ValueError, match="not defined"):
        p1.local_dofs(multidomain8.cells_in(["Omega1"]))


def test_bad_families_and_empty_cells(square2):
    with pytest.raises(ValueError, match="unknown element family"):
        build_space(square2, "P3-scalar")
    with pytest.raises(ValueError, match="empty cell set"):
        build_space(square2, "P1-vector", np.array([], dtype=int))


def test_mass_matrix_integrates_constants(square4):
    M = mass_matrix(build_space(square4, "P2-scalar"))
    assert M.sum() == pytest.approx(1.0, abs=1e-13)
    assert abs(M - M.T).max() < 1e-15
    assert mass_matrix(build_space(square4, "P2-vector")).sum() == pytest.approx(2.0, abs=1e-13)


def test_stiffness_matrix_energy(square4):
    space = build_space(square4, "P2-scalar")
    K = stiffness_matrix(space)
    np.testing.assert_allclose(K @ np.ones(space.dim), 0.0, atol=1e-12)
    u = interpolate(lambda p: p[:, 0] ** 2 + p[:, 1], space)
    assert u @ (K @ u) == pytest.approx(7.0 / 3.0, rel=1e-12)


def test_divergence_of_linear_field(square4):
    V = build_space(square4, "P2-vector")
    Q = build_space(square4, "P1-scalar")
    u = interpolate(lambda p: np.stack([p[:, 0], np.zeros(len(p))], axis=-1), V)
    np.testing.assert_allclose(divergence_matrix(V, Q) @ u, -mean_vector(Q), atol=1e-14)
    assert mean_vector(Q).sum() == pytest.approx(1.0, abs=1e-14)


def test_divergence_free_field_is_in_kernel(square4):
    V = build_space(square4, "P2-vector")
    Q = build_space(square4, "P1-scalar")
    u = interpolate(lambda p: np.stack([p[:, 1] ** 2, p[:, 0] ** 2], axis=-1), V)
    np.testing.assert_allclose(divergence_matrix(V, Q) @ u, 0.0, atol=1e-14)


def test_coupling_matrix_area(multidomain8):
    V = build_space(multidomain8, "P2-vector")
    control = build_space(multidomain8, "P1-vector", multidomain8.cells_in(["O1"]))
    C = coupling_matrix(V, control)
    assert C.shape == (V.dim, control.dim)
    assert C.sum() == pytest.approx(2.0, abs=1e-12)


def test_interpolation_reproduces_quadratics(square4):
    V = build_space(square4, "P2-vector")
    y = FEFunction(V, interpolate(quadratic_field, V))
    cells = np.arange(square4.n_triangles)
    exact = quadratic_field(physical_points(square4.corners, ERROR_RULE))
    np.testing.assert_allclose(y.sample(cells, ERROR_RULE), exact, atol=1e-13)
    grad = y.sample_gradient(cells, ERROR_RULE)
    x = physical_points(square4.corners, ERROR_RULE)[..., 0]
    np.testing.assert_allclose(grad[..., 0, 0], 2.0 * x, atol=1e-12)


def test_l2_projection_is_exact_on_the_space(square4):
    P1 = build_space(square4, "P1-vector")
    linear = lambda p: np.stack([1.0 + p[..., 0], 2.0 * p[..., 1]], axis=-1)
    np.testing.assert_allclose(l2_project(linear, P1), interpolate(linear, P1), atol=1e-12)


def test_squared_norm_of_constant(square4):
    assert squared_norm(lambda p: np.stack([np.ones(p.shape[:-1]), 2.0 * np.ones(p.shape[:-1])], axis=-1),
                        square4) == pytest.approx(5.0, rel=1e-14)
    assert squared_norm(None, square4) == 0.0


def test_sample_is_zero_outside_the_space(multidomain8):
    space = build_space(multidomain8, "P1-vector", multidomain8.cells_in(["O1"]))
    u = FEFunction(space, np.ones(space.dim))
    outside = multidomain8.cells_in(["Omega1"])
    assert np.all(u.sample(outside, ERROR_RULE) == 0.0)
    inside = multidomain8.cells_in(["O1"])
    np.testing.assert_allclose(u.sample(inside, ERROR_RULE), 1.0, atol=1e-14)


def test_vertex_values_of_piecewise_constant(multidomain8):
    space = build_space(multidomain8, "P0-vector", multidomain8.cells_in(["O2"]))
    values = FEFunction(space, np.full(space.dim, 3.0)).vertex_values()
    _, _, used = multidomain8.submesh(["O2"])
    np.testing.assert_allclose(values[used], 3.0)
    assert np.count_nonzero(values[:, 0]) == len(used)


def test_load_vector_rejects_wrong_components(square4):
    V = build_space(square4, "P2-vector")
    with pytest.raises(ValueError, match="components"):
        load_vector(V, lambda p: p[..., 0])


def test_dirichlet_dofs(square4):
    V = build_space(square4, "P2-vector")
    fixed = dirichlet_dofs(V)
    assert len(fixed) == 2 * (16 + 16)
    with pytest.raises(ValueError):
        dirichlet_dofs(build_space(square4, "P1-vector"))


def test_assemble_validates_inputs(square2):
    V = build_space(square2, "P2-vector")
    Q = build_space(square2, "P1-scalar")
    with pytest.raises(ValueError, match="viscosity"):
        assemble(V, Q, [build_space(square2, "P1-vector")], nu=0.0)
    with pytest.raises(ValueError, match="Taylor-Hood"):
        assemble(build_space(square2, "P1-vector"), Q, [], nu=1.0)
    with pytest.raises(ValueError, match="vector valued"):
        assemble(V, Q, [build_space(square2, "P1-scalar")], nu=1.0)


def test_forms_scale_with_viscosity(square4):
    cells = [np.arange(square4.n_triangles)] * 2
    unit = build_forms(square4, 1.0, cells)
    slow = build_forms(square4, 0.01, cells)
    assert abs(slow.A - 0.01 * unit.A).max() < 1e-14
    view = apply_dirichlet(unit)
    assert view.n_free == unit.velocity.dim - 64
    assert len(unit.C) == 2 and unit.C[0].shape == (unit.velocity.dim, unit.controls[0].dim)


@pytest.mark.parametrize("n", [2, 4, 8])
def test_inf_sup_constant_is_positive(n, square2, square4, square8):
    mesh = {2: square2, 4: square4, 8: square8}[n]
    beta = inf_sup_constant(build_forms(mesh, 1.0, [np.arange(mesh.n_triangles)] * 2))
    assert beta > 0.05


def test_inf_sup_constant_is_mesh_independent(square2, square4, square8):
    betas = [inf_sup_constant(build_forms(mesh, 1.0, [np.arange(mesh.n_triangles)] * 2))
             for mesh in (square2, square4, square8)]
    for coarse, fine in zip(betas, betas[1:]):
        assert fine >= 0.9 * coarse, betas


def test_inf_sup_constant_ignores_viscosity(square4):
    cells = [np.arange(square4.n_triangles)] * 2
    assert inf_sup_constant(build_forms(square4, 0.01, cells)) == pytest.approx(
        inf_sup_constant(build_forms(square4, 1.0, cells)), rel=1e-8)


def test_viscous_form_is_coercive_on_constrained_vectors(square4, rng):
    nu = 0.5
    view = apply_dirichlet(build_forms(square4, nu, [np.arange(square4.n_triangles)] * 2))
    assert abs(view.A_ff - view.A_ff.T).max() < 1e-12
    for _ in range(20):
        v = rng.standard_normal(view.n_free)
        # Poincare on the unit square: |v|_0^2 <= |v|_1^2 / (2 pi^2)
        assert v @ (view.A_ff @ v) >= nu * 2.0 * np.pi ** 2 * (v @ (view.M_ff @ v)) * (1.0 - 1e-12)


def test_l2_projection_does_not_increase_the_norm(square4):
    wave = lambda p: np.stack([np.sin(3.0 * p[..., 0]) * np.exp(p[..., 1]), np.cos(5.0 * p[..., 1])], axis=-1)
    for family in ("P1-vector", "P0-vector"):
        space = build_space(square4, family)
        c = l2_project(wave, space)
        assert c @ (mass_matrix(space) @ c) <= squared_norm(wave, square4) * (1.0 + 1e-12)


def test_p0_projection_gives_cell_averages(square2):
    P0 = build_space(square2, "P0-vector")
    cells = np.arange(square2.n_triangles)
    constant = lambda p: np.stack([np.ones(p.shape[:-1]), 2.0 * np.ones(p.shape[:-1])], axis=-1)
    u = FEFunction(P0, l2_project(constant, P0))
    sampled = u.sample(cells, ERROR_RULE)
    np.testing.assert_allclose(sampled, np.broadcast_to([1.0, 2.0], sampled.shape), atol=1e-13)

    mesh = unit_square(1)
    P0 = build_space(mesh, "P0-vector")
    cells = np.arange(mesh.n_triangles)
    u = FEFunction(P0, l2_project(lambda p: np.stack([p[..., 0] ** 2, np.zeros(p.shape[:-1])], axis=-1), P0))
    x = mesh.corners[..., 0]
    averages = (np.sum(x ** 2, axis=1) + x[:, 0] * x[:, 1] + x[:, 1] * x[:, 2] + x[:, 0] * x[:, 2]) / 6.0
    sampled = u.sample(cells, ERROR_RULE)
    np.testing.assert_allclose(sampled[..., 0], np.broadcast_to(averages[:, None], sampled.shape[:-1]), atol=1e-14)
    np.testing.assert_allclose(sampled[..., 1], 0.0, atol=1e-15)
