import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochch.exceptions import NotMeanZero
from stochch.spectral import (
    Field,
    frac_laplacian,
    inner,
    inv_laplacian,
    laplacian,
    make_grid,
    norm,
    read_schf,
    write_field_csv,
    write_schf,
)

from oracles import cosine_matrix, laplacian_dense

seeds = st.integers(0, 2**31 - 1)


def rand_field(grid, seed, meanzero=False):
    v = np.random.default_rng(seed).standard_normal(grid.shape)
    if meanzero:
        v -= v.mean()
    return Field(grid, v)


def cos1(grid, k=1):
    return Field.from_function(grid, lambda x, *rest: np.cos(np.pi * k * x))


# -- grid --------------------------------------------------------------------


def test_make_grid_sizes():
    g = make_grid(2, 64)
    assert g.size == 4096 and g.spacing == 1 / 64
    assert make_grid(3, 16).size == 4096


@pytest.mark.parametrize("d,n", [(1, 64), (4, 8), (2, 3)])
def test_make_grid_rejects(d, n):
    with pytest.raises(ValueError):
        make_grid(d, n)


def test_coordinates_cell_centred():
    g = make_grid(2, 8)
    assert np.allclose(g.coords, (np.arange(8) + 0.5) / 8)
    assert g.coords.min() > 0 and g.coords.max() < 1


@pytest.mark.parametrize("variant", ["exact", "discrete"])
def test_eigenvalue_table(variant):
    g = make_grid(2, 16, variant)
    assert g.eigenvalues[0, 0] == 0.0
    k = np.arange(16)
    one = (np.pi * k) ** 2 if variant == "exact" else (32 * np.sin(np.pi * k / 32)) ** 2
    assert np.allclose(g.eigenvalues, one[:, None] + one[None, :])


def test_transform_matches_dense_matrix():
    g = make_grid(2, 8)
    v = np.random.default_rng(0).standard_normal(g.shape)
    C = cosine_matrix(8)
    assert np.allclose(g.forward(v), C @ v @ C.T, atol=1e-13)


# -- field -------------------------------------------------------------------


@given(seeds)
def test_round_trip(seed):
    g = make_grid(2, 16)
    f = rand_field(g, seed)
    back = g.inverse(f.coeffs)
    assert np.max(np.abs(back - f.values)) <= 1e-12 * np.max(np.abs(f.values))


@given(seeds)
def test_mean_is_zero_mode(seed):
    g = make_grid(3, 8)
    f = rand_field(g, seed)
    assert abs(f.mean - f.coeffs[0, 0, 0] / np.sqrt(g.size)) <= 1e-12


def test_field_is_immutable():
    g = make_grid(2, 8)
    f = Field(g, np.zeros(g.shape))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


# -- laplacian -----------------------------------------------------------------


def test_laplacian_of_constant_is_zero():
    g = make_grid(2, 16)
    out = laplacian(Field(g, np.full(g.shape, 3.7)))
    assert np.max(np.abs(out.values)) < 1e-12


def test_laplacian_eigenfunction():
    g = make_grid(2, 32)
    out = laplacian(cos1(g))
    assert np.allclose(out.values, -np.pi**2 * cos1(g).values, atol=1e-10)


@pytest.mark.parametrize("variant", ["exact", "discrete"])
def test_laplacian_matches_dense_oracle(variant):
    g = make_grid(2, 8, variant)
    v = np.random.default_rng(1).standard_normal(g.shape)
    assert np.allclose(g.laplacian(v), laplacian_dense(v, variant), atol=1e-10)


def test_discrete_variant_is_five_point_stencil():
    g = make_grid(2, 16, "discrete")
    v = np.random.default_rng(2).standard_normal(g.shape)
    p = np.pad(v, 1, mode="edge")
    stencil = (p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2] - 4 * v) * 16**2
    assert np.allclose(g.laplacian(v), stencil, atol=1e-9)


@given(seeds, st.floats(-3, 3), st.floats(-3, 3))
def test_laplacian_linear(seed, a, b):
    g = make_grid(2, 16)
    u, v = rand_field(g, seed), rand_field(g, seed + 1)
    lhs = laplacian(a * u + b * v).values
    rhs = a * laplacian(u).values + b * laplacian(v).values
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_laplacian_output_mean_zero():
    g = make_grid(2, 16)
    assert abs(laplacian(rand_field(g, 3)).mean) < 1e-12


# -- inverse and fractional powers ------------------------------------------------


def test_inv_laplacian_eigenfunction():
    g = make_grid(2, 32)
    assert np.allclose(inv_laplacian(cos1(g)).values, cos1(g).values / np.pi**2, atol=1e-13)


def test_inv_laplacian_rejects_mean():
    g = make_grid(2, 16)
    with pytest.raises(NotMeanZero):
        inv_laplacian(Field(g, np.ones(g.shape)))


@given(seeds)
def test_inv_laplacian_round_trip(seed):
    g = make_grid(2, 16)
    v = rand_field(g, seed)
    w = inv_laplacian(-laplacian(v))
    assert np.allclose(w.values, v.values - v.mean, atol=1e-10)
    assert abs(w.mean) < 1e-13


@given(seeds)
def test_inv_laplacian_solves_poisson(seed):
    g = make_grid(2, 16)
    v = rand_field(g, seed, meanzero=True)
    w = inv_laplacian(v)
    assert np.max(np.abs(laplacian(w).values + v.values)) <= 1e-10


def test_frac_one_is_minus_laplacian():
    g = make_grid(2, 16)
    v = rand_field(g, 4)
    assert np.allclose(frac_laplacian(v, 1).values, -laplacian(v).values, atol=1e-10)


def test_frac_zero_is_identity():
    g = make_grid(2, 16)
    v = rand_field(g, 5, meanzero=True)
    assert np.allclose(frac_laplacian(v, 0).values, v.values, atol=1e-13)


@given(seeds)
def test_frac_semigroup(seed):
    g = make_grid(2, 16)
    v = rand_field(g, seed, meanzero=True)
    half = frac_laplacian(frac_laplacian(v, 0.5), 0.5)
    assert np.allclose(half.values, frac_laplacian(v, 1).values, atol=1e-10)


def test_frac_negative_needs_mean_zero():
    g = make_grid(2, 16)
    with pytest.raises(NotMeanZero):
        frac_laplacian(Field(g, np.ones(g.shape)), -0.5)
    v = rand_field(g, 6, meanzero=True)
    assert np.allclose(frac_laplacian(v, -1).values, inv_laplacian(v).values, atol=1e-13)


# -- norms and inner products -----------------------------------------------------


@pytest.mark.parametrize(
    "kind,kw",
    [("L2", {}), ("L4", {}), ("Lp", {"p": 3}), ("Linf", {}), ("H1_semi", {}), ("Hminus1", {}), ("Halpha", {"alpha": 0.7})],
)
def test_norm_of_zero(kind, kw):
    g = make_grid(2, 8)
    assert norm(Field(g, np.zeros(g.shape)), kind, **kw) == 0.0


def test_cosine_norms():
    g = make_grid(2, 64)
    v = cos1(g)
    assert abs(norm(v, "L2") - 1 / np.sqrt(2)) < 1e-12
    assert abs(norm(v, "Hminus1") - 1 / (np.pi * np.sqrt(2))) < 1e-10
    assert abs(norm(v, "H1_semi") - np.pi / np.sqrt(2)) < 1e-10
    assert abs(norm(v, "Linf") - np.cos(np.pi / 128)) < 1e-14


def test_hminus1_rejects_mean():
    g = make_grid(2, 8)
    with pytest.raises(NotMeanZero):
        norm(Field(g, np.ones(g.shape)), "Hminus1")


def test_lp_needs_p():
    g = make_grid(2, 8)
    with pytest.raises(ValueError):
        norm(Field(g, np.ones(g.shape)), "Lp")


def test_lp_quadrature_is_midpoint():
    g = make_grid(2, 8)
    v = rand_field(g, 7)
    assert abs(norm(v, "Lp", p=3) - np.mean(np.abs(v.values) ** 3) ** (1 / 3)) < 1e-14


@given(seeds)
def test_parseval(seed):
    g = make_grid(2, 16)
    v = rand_field(g, seed)
    lhs = norm(v, "L2") ** 2
    rhs = np.sum(v.coeffs**2) / g.size
    assert abs(lhs - rhs) <= 1e-12 * lhs


def test_interpolation_inequality_100_fields():
    g = make_grid(2, 16)
    for seed in range(100):
        v = rand_field(g, seed, meanzero=True)
        lhs = norm(v, "L2") ** 2
        assert lhs <= norm(v, "Hminus1") * norm(v, "H1_semi") * (1 + 1e-12)


@given(seeds)
def test_halpha_monotone_in_alpha(seed):
    g = make_grid(2, 16)
    c = np.random.default_rng(seed).standard_normal(g.shape)
    c[0, 0] = 0.0
    v = Field.from_coeffs(g, c)
    vals = [norm(v, "Halpha", alpha=a) for a in (-1.0, -0.5, 0.0, 0.5, 1.0, 1.5)]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(vals, vals[1:]))


def test_halpha_special_cases():
    g = make_grid(2, 16)
    v = rand_field(g, 8, meanzero=True)
    assert abs(norm(v, "Halpha", alpha=1) - norm(v, "H1_semi")) < 1e-12
    assert abs(norm(v, "Halpha", alpha=-1) - norm(v, "Hminus1")) < 1e-12
    assert abs(norm(v, "Halpha", alpha=0) - norm(v, "L2")) < 1e-12
    w = Field(g, v.values + 2.0)
    full = norm(w, "Halpha", alpha=1, with_mean=True)
    assert abs(full**2 - (norm(w, "H1_semi") ** 2 + 4.0)) < 1e-10


def test_inner_definitions():
    g = make_grid(2, 32)
    v = rand_field(g, 9)
    assert abs(inner(v, v, "L2") - norm(v, "L2") ** 2) < 1e-12
    assert abs(inner(cos1(g), cos1(g, 2), "L2")) < 1e-14


@given(seeds)
def test_hminus1_inner_symmetric(seed):
    g = make_grid(2, 16)
    u, v = rand_field(g, seed, True), rand_field(g, seed + 7, True)
    a, b = inner(u, v, "Hminus1"), inner(v, u, "Hminus1")
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))
    assert abs(a - inner(u, inv_laplacian(v), "L2")) <= 1e-12 * max(1.0, abs(a))


def test_inner_rejects_unknown_kind():
    g = make_grid(2, 8)
    v = rand_field(g, 0)
    with pytest.raises(ValueError):
        inner(v, v, "H2")


# -- snapshot formats --------------------------------------------------------------


def test_schf_round_trip(tmp_path):
    g = make_grid(3, 4)
    v = rand_field(g, 10).values
    p = tmp_path / "x.schf"
    write_schf(p, v, 0.05)
    raw = p.read_bytes()
    assert raw[:4] == b"SCHF"
    assert len(raw) == 4 + 4 * 3 + 8 + 8 * 64
    back, eps = read_schf(p)
    assert eps == 0.05 and np.array_equal(back, v)
    assert np.array_equal(np.frombuffer(raw[24:], "<f8"), v.ravel(order="C"))


def test_schf_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.schf"
    p.write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(ValueError):
        read_schf(p)


def test_field_csv(tmp_path):
    g = make_grid(2, 4)
    v = rand_field(g, 11).values
    p = tmp_path / "f.csv"
    write_field_csv(p, g, v)
    lines = p.read_text().splitlines()
    assert lines[0] == "x1,x2,value"
    data = np.loadtxt(p, delimiter=",", skiprows=1)
    assert data.shape == (16, 3)
    assert np.array_equal(data[:, 2], v.ravel())
    assert np.allclose(data[1, :2], [0.125, 0.375])
