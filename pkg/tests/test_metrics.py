import math

import numpy as np
import pytest

from ltcrdp.errors import ContractError, DomainError, InputError
from ltcrdp.metrics import (
    GaussianSpec,
    gaussian_rdp,
    gaussian_rdp_branch,
    gaussian_rdp_channel,
    gaussian_w2sq_per_dim,
    mse_per_dim,
    sliced_w2sq,
)


def _rdp_first_branch_oracle(s2, D, P):
    # direct transcription of the displayed perception-active formula, in bits
    a = (math.sqrt(s2) - math.sqrt(P)) ** 2
    return 0.5 * math.log2(s2 * a / (s2 * a - ((s2 + a - D) / 2) ** 2))


def test_mse_examples(rng):
    x = rng.standard_normal((100, 4))
    assert mse_per_dim(x, x) == (0.0, 0.0)
    assert mse_per_dim(x, x + 0.3)[0] == pytest.approx(0.09)
    big = rng.standard_normal((100_000, 3))
    m, se = mse_per_dim(big, np.zeros_like(big))
    assert abs(m - 1) < 3 * se
    with pytest.raises(InputError):
        mse_per_dim(x, x[:, :3])


def test_gaussian_spec_validation():
    with pytest.raises(InputError):
        GaussianSpec([0.0, 0.0], [1.0])
    with pytest.raises(InputError):
        GaussianSpec([0.0], [0.0])
    g = GaussianSpec.iid(3, 2.0)
    assert g.dimension == 3
    np.testing.assert_allclose(g.std, math.sqrt(2.0))


def test_w2_closed_form_examples():
    a = GaussianSpec.iid(4)
    assert gaussian_w2sq_per_dim(a, a) == 0.0
    b = GaussianSpec(np.ones(4), np.ones(4))
    c = GaussianSpec(np.zeros(4), np.full(4, 2.0))
    assert gaussian_w2sq_per_dim(b, c) == pytest.approx(1 + (1 - math.sqrt(2)) ** 2)
    assert gaussian_w2sq_per_dim(b, c) == pytest.approx(1.1716, abs=1e-4)
    P = 0.09
    assert gaussian_w2sq_per_dim(GaussianSpec.iid(2, 1.5), GaussianSpec.iid(2, (math.sqrt(1.5) - math.sqrt(P)) ** 2)) \
        == pytest.approx(P)
    with pytest.raises(InputError):
        gaussian_w2sq_per_dim(a, GaussianSpec.iid(3))


def test_sliced_identical_and_symmetric(rng):
    a = rng.standard_normal((500, 8))
    b = 1.5 * rng.standard_normal((500, 8)) + 0.2
    assert sliced_w2sq(a, a, 10, rng) == (0.0, 0.0)
    v1 = sliced_w2sq(a, b, 10, np.random.default_rng(4))[0]
    v2 = sliced_w2sq(b, a, 10, np.random.default_rng(4))[0]
    assert v1 == pytest.approx(v2, rel=1e-12)


def test_sliced_contract(rng):
    with pytest.raises(ContractError):
        sliced_w2sq(np.zeros((10, 2)), np.zeros((11, 2)), 5, rng)
    with pytest.raises(ContractError):
        sliced_w2sq(np.zeros((10, 2)), np.zeros((10, 2)), 0, rng)


def test_sliced_does_not_exceed_exact_on_gaussians(rng):
    # Isotropic pairs: sliced per-dim W2^2 equals the exact per-dim value in
    # expectation.  The SE comes from independent replicates so that sampling
    # noise, not just projection noise, is covered.
    N, n, reps = 20_000, 8, 8
    for shift, scale in ((0.5, 1.0), (0.0, 1.7), (1.0, 2.0)):
        vals = []
        for _ in range(reps):
            a = shift + rng.standard_normal((N, n))
            b = scale * rng.standard_normal((N, n))
            vals.append(sliced_w2sq(a, b, 100, rng)[0])
        v, se = np.mean(vals), np.std(vals, ddof=1) / math.sqrt(reps)
        exact = gaussian_w2sq_per_dim(GaussianSpec(np.full(n, shift), np.ones(n)), GaussianSpec.iid(n, scale**2))
        assert v <= exact + 3 * se


@pytest.mark.parametrize(
    "D,P,expected",
    [(0.25, math.inf, 1.0), (1.0, 0.0, 0.5 * math.log2(4 / 3)), (2.0, 0.0, 0.0), (0.5, 0.0, 0.5963225389711979)],
)
def test_rdp_examples(D, P, expected):
    assert gaussian_rdp(1.0, D, P) == pytest.approx(expected, abs=1e-12)


def test_rdp_first_branch_matches_oracle():
    for D in (0.2, 0.5, 0.9, 1.3):
        for P in (0.0, 0.01, 0.04):
            if gaussian_rdp_branch(1.0, D, P) == 1:
                assert gaussian_rdp(1.0, D, P) == pytest.approx(_rdp_first_branch_oracle(1.0, D, P), abs=1e-12)


def test_rdp_domain():
    for D in (0.0, -1.0, 2.5):
        with pytest.raises(DomainError):
            gaussian_rdp(1.0, D, 0.0)
    with pytest.raises(DomainError):
        gaussian_rdp(1.0, 0.5, -0.1)
    with pytest.raises(DomainError):
        gaussian_rdp(0.0, 0.5, 0.1)


def test_rdp_classical_branch_exact():
    for D in np.linspace(0.05, 2.0, 40):
        assert gaussian_rdp(1.3, D, math.inf) == max(0.5 * math.log2(1.3 / D), 0.0)


def test_rdp_monotone_grid():
    Ds = np.linspace(0.02, 2.0, 50)
    Ps = np.linspace(0.0, 1.0, 50)
    R = np.array([[gaussian_rdp(1.0, D, P) for P in Ps] for D in Ds])
    assert np.all(np.diff(R, axis=0) <= 1e-12)
    assert np.all(np.diff(R, axis=1) <= 1e-12)


def test_rdp_branch_continuity():
    for s2 in (0.5, 1.0, 3.0):
        for D in np.linspace(0.05, 1.95, 20) * s2:
            P = (math.sqrt(s2) - math.sqrt(abs(s2 - D))) ** 2
            if P == 0:
                continue
            below = gaussian_rdp(s2, D, P * (1 - 1e-13))
            at = gaussian_rdp(s2, D, P)
            assert abs(below - at) < 1e-9


def test_channel_examples():
    assert gaussian_rdp_channel(1.0, 1.0, 0.0) == pytest.approx((1.0, 0.5))
    v, _ = gaussian_rdp_channel(1.0, 0.5, 1.0)
    assert v == pytest.approx(0.5)
    v, th = gaussian_rdp_channel(1.0, 1e-9, 0.0)
    assert v == pytest.approx(1.0) and th == pytest.approx(1.0, abs=1e-8)


def test_channel_mutual_information_matches_rdp():
    for D, P in ((0.5, 0.0), (1.0, 0.04), (0.3, 0.2), (0.5, math.inf)):
        v, th = gaussian_rdp_channel(1.0, D, P)
        rho2 = th**2 / v
        assert -0.5 * math.log2(1 - rho2) == pytest.approx(gaussian_rdp(1.0, D, P), abs=1e-12)
        assert 1 - 2 * th + v == pytest.approx(D, abs=1e-12)
