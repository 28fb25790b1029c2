import numpy as np
import pytest

from oscmar.filters import BasisVariant, CoefficientSet, assemble_filter
from oscmar.model import (
    CountMode, FreeDictionary, OSCDictionary, adjoint, filter_gradient, load_dictionary,
    operator_norm, param_count, save_dictionary, synthesize,
)
from oscmar.tensor import conv2d

from conftest import rel_err


def random_dict(L=4, K=2, seed=0):
    return OSCDictionary(CoefficientSet.random(9, K, 0.25, scale=0.3, seed=seed), L)


def test_zero_maps_give_zero_artifact():
    d = random_dict()
    assert not np.any(synthesize(d, np.zeros((8, 20, 20))))
    assert not np.any(adjoint(d, np.zeros((20, 20))))


def test_impulse_reproduces_filter():
    d = random_dict()
    M = np.zeros((8, 21, 21))
    M[5, 10, 10] = 1.0  # l = 2, k = 1
    A = synthesize(d, M)
    np.testing.assert_allclose(A[6:15, 6:15], assemble_filter(d.coeffs, 1, np.pi), atol=1e-13)
    assert np.abs(A).sum() == pytest.approx(np.abs(A[6:15, 6:15]).sum())


def test_synthesis_matches_channel_loop(rng):
    d = random_dict()
    M = rng.standard_normal((8, 32, 32))
    expected = np.zeros((32, 32))
    for l in range(4):
        for k in range(2):
            expected += conv2d(assemble_filter(d.coeffs, k, 2 * np.pi * l / 4), M[l * 2 + k])
    assert rel_err(synthesize(d, M), expected) <= 1e-12
    assert rel_err(synthesize(d, M, method="direct"), expected) <= 1e-12


def test_adjoint_channels(rng):
    d = random_dict()
    Z = rng.standard_normal((24, 24))
    np.testing.assert_allclose(adjoint(d, Z), adjoint(d, Z, method="direct"), atol=1e-12)


def test_adjoint_identity_50_instances():
    rng = np.random.default_rng(3)
    for i in range(50):
        d = random_dict(L=int(rng.integers(1, 9)), K=int(rng.integers(1, 4)), seed=i)
        H, W = rng.integers(9, 40, size=2)
        M = rng.standard_normal((d.n_channels, H, W))
        Z = rng.standard_normal((H, W))
        lhs, rhs = np.vdot(synthesize(d, M), Z), np.vdot(M, adjoint(d, Z))
        assert abs(lhs - rhs) / (abs(lhs) + 1e-30) <= 1e-10


def test_delta_dictionary_adjoint_copies_residual(rng):
    filters = np.zeros((3, 5, 5))
    filters[:, 2, 2] = [1.0, -2.0, 0.5]
    d = FreeDictionary(filters)
    Z = rng.standard_normal((12, 12))
    out = adjoint(d, Z)
    for c, scale in enumerate([1.0, -2.0, 0.5]):
        np.testing.assert_allclose(out[c], scale * Z, atol=1e-13)


def test_channel_mismatch_rejected():
    with pytest.raises(ValueError):
        synthesize(random_dict(), np.zeros((7, 16, 16)))


def test_isotropic_dictionary_ignores_angle_permutation(rng):
    coeffs = CoefficientSet.zeros(9, 2, 0.25)
    coeffs.a[:, 0, 0] = [1.0, 0.3]
    d = OSCDictionary(coeffs, 4)
    M = rng.standard_normal((4, 2, 20, 20))
    A = synthesize(d, M.reshape(8, 20, 20))
    A_perm = synthesize(d, np.roll(M, 1, axis=0).reshape(8, 20, 20))
    assert rel_err(A_perm, A) <= 1e-12


def test_filter_gradient_matches_difference_quotient(rng):
    d = random_dict()
    M = rng.standard_normal((8, 20, 20))
    R = rng.standard_normal((20, 20))
    G = filter_gradient(M, R, 9)
    # <R, D(M)> is linear in the taps, so a unit perturbation measures the gradient exactly
    for c, u, v in [(0, 0, 0), (3, 4, 7), (7, 8, 2)]:
        bumped = d.filters.copy()
        bumped[c, u, v] += 1.0
        diff = np.vdot(R, synthesize(FreeDictionary(bumped, 4), M)) - np.vdot(R, synthesize(d, M))
        assert G[c, u, v] == pytest.approx(diff, rel=1e-9)


def test_param_counts():
    d = OSCDictionary(CoefficientSet.zeros(9, 4, 0.25), 8)
    assert param_count(d, CountMode.FREE_FILTERS) == 2592
    assert param_count(d, CountMode.PARAMETRIZED) == 644
    dicd = OSCDictionary(CoefficientSet.zeros(9, 32, 0.25), 1)
    assert param_count(dicd, "free_filters") == 2592


def test_operator_norm_converges():
    d = random_dict(L=8, K=4, seed=1)
    short = operator_norm(d, (48, 48), n_iter=50)
    long = operator_norm(d, (48, 48), n_iter=100)
    assert abs(short - long) <= 0.01 * long


def test_dictionary_is_immutable_and_rebuilt():
    d = random_dict()
    with pytest.raises(ValueError):
        d.filters[0, 0, 0] = 1.0
    coeffs = d.coeffs.copy()
    coeffs.a *= 2
    coeffs.b *= 2
    d2 = d.with_coeffs(coeffs)
    np.testing.assert_allclose(d2.filters, 2 * d.filters, atol=1e-14)


@pytest.mark.parametrize("variant", list(BasisVariant))
def test_dictionary_roundtrip(tmp_path, variant):
    d = OSCDictionary(CoefficientSet.random(9, 3, 0.25, seed=4), 8, variant)
    save_dictionary(tmp_path / "dict.meta", d)
    text = (tmp_path / "dict.meta").read_text().splitlines()
    assert [line.split("=")[0] for line in text] == ["p", "L", "K", "h", "variant", "coeffs"]
    back = load_dictionary(tmp_path / "dict.meta")
    assert (back.p, back.L, back.K, back.h, back.variant) == (9, 8, 3, 0.25, variant)
    assert back.filters.tobytes() == d.filters.tobytes()


def test_free_dictionary_roundtrip(tmp_path, rng):
    d = FreeDictionary(rng.standard_normal((8, 5, 5)), L=4)
    save_dictionary(tmp_path / "free.meta", d)
    back = load_dictionary(tmp_path / "free.meta")
    assert isinstance(back, FreeDictionary) and back.L == 4
    assert back.filters.tobytes() == d.filters.tobytes()
