import math

import mpmath
import numpy as np
import pytest
from scipy import stats

from afslab import disorder as dis
from afslab.errors import InvalidSpec, MissingPotential

N_KS = 100_000


def sites_1d(n):
    return np.arange(n)[:, None]


def test_transform_examples():
    assert dis.DisorderSpec.uniform(0, 1, amplitude=4).transform(0.5) == pytest.approx(2.0)
    assert dis.DisorderSpec.holder(0.5, amplitude=3).transform(0.25) == pytest.approx(3 * 0.0625)


def test_deterministic_and_schedule_independent():
    spec = dis.DisorderSpec.uniform(master_seed=77)
    pts = np.array([[0, 0], [5, -3], [-2, 9], [1000, -1000]])
    a = dis.sample(spec, 4, pts).values
    b = dis.sample(spec, 4, pts[::-1]).values[::-1]
    c = np.array([dis.sample(spec, 4, p[None, :]).values[0] for p in pts])
    assert np.array_equal(a, b) and np.array_equal(a, c)
    assert not np.array_equal(a, dis.sample(spec, 5, pts).values)
    assert not np.array_equal(a, dis.sample(spec.with_seed(78), 4, pts).values)


def test_uniforms_in_open_unit_interval_and_distinct_sites():
    u = dis.site_uniforms(0, 0, np.array([[-1], [1], [0]]))
    assert np.all((u > 0) & (u < 1)) and len(set(u)) == 3


@pytest.mark.parametrize("spec", [
    dis.DisorderSpec.uniform(-1, 2, amplitude=1.5, master_seed=1),
    dis.DisorderSpec.holder(0.5, amplitude=2.0, master_seed=2),
    dis.DisorderSpec.almost_zero_order(C=1.0, master_seed=3),
])
def test_ks_against_cdf(spec):
    v = dis.sample(spec, 0, sites_1d(N_KS)).values
    stat = stats.kstest(v, lambda t: spec.cdf(t)).statistic
    assert stat < 0.01


def test_holder_one_equals_uniform():
    pts = sites_1d(1000)
    a = dis.sample(dis.DisorderSpec.holder(1.0, master_seed=9), 2, pts).values
    b = dis.sample(dis.DisorderSpec.uniform(0, 1, master_seed=9), 2, pts).values
    assert np.array_equal(a, b)


def test_invalid_specs():
    with pytest.raises(InvalidSpec):
        dis.DisorderSpec.holder(1.5)
    with pytest.raises(InvalidSpec):
        dis.DisorderSpec.holder(0.0)
    with pytest.raises(InvalidSpec):
        dis.DisorderSpec("gaussian")


def test_continuity_modulus_examples():
    assert dis.continuity_modulus(dis.DisorderSpec.uniform(), 0.01) == pytest.approx(0.01)
    assert dis.continuity_modulus(dis.DisorderSpec.holder(0.5), 0.01) == pytest.approx(0.1)
    for bad in (0.0, 0.5, 0.7):
        with pytest.raises(InvalidSpec):
            dis.continuity_modulus(dis.DisorderSpec.uniform(), bad)


def test_azo_envelope_oracle():
    eps = 1e-6
    with mpmath.workdps(40):
        want = mpmath.mpf(10) ** (-6 / mpmath.log(mpmath.log(mpmath.mpf(10) ** 6)))
    spec = dis.DisorderSpec.almost_zero_order(C=1, C_prime=1)
    assert dis.modulus_bound(spec, eps) == pytest.approx(float(want), rel=1e-12)
    assert math.log10(float(want)) == pytest.approx(-2.284, abs=2e-3)
    for e in (1e-2, 1e-3, 1e-6, 1e-12):
        assert dis.continuity_modulus(spec, e) <= dis.modulus_bound(spec, e) * (1 + 1e-9)


def test_azo_inverse_accuracy():
    u = np.linspace(1e-6, 1 - 1e-6, 501)
    t = dis.azo_inverse(u, 1.0)
    back = dis.azo_cdf(t, 1.0)
    lo = dis.azo_cdf(np.maximum(t - 1e-14, 0), 1.0)
    hi = dis.azo_cdf(np.minimum(t + 1e-14, 1), 1.0)
    assert np.all((lo <= u + 1e-15) & (u <= hi + 1e-15))
    assert np.all(np.diff(dis.azo_cdf(np.linspace(0, 1, 10001), 1.0)) >= 0)
    # F is extremely steep at 0, so accuracy is in t, not in u
    assert np.allclose(back[u > 1e-3], u[u > 1e-3], atol=1e-9)


@pytest.mark.parametrize("eps", [1e-2, 1e-3])
def test_azo_level_set_concentration(eps):
    spec = dis.DisorderSpec.almost_zero_order(C=1.0, master_seed=5)
    v = np.sort(dis.sample(spec, 0, sites_1d(N_KS)).values)
    counts = np.searchsorted(v, v + eps, side="right") - np.arange(len(v))
    slack = 2 * 1.36 / math.sqrt(len(v))
    assert counts.max() / len(v) <= 2 * dis.continuity_modulus(spec, eps) + slack


def test_values_at_and_missing():
    spec = dis.DisorderSpec.uniform(master_seed=3)
    pts = np.array([[i, j] for i in range(-3, 4) for j in range(-3, 4)])
    V = dis.sample(spec, 0, pts)
    sub = pts[[5, 0, 17]]
    assert np.array_equal(V.values_at(sub), V.values[[5, 0, 17]])
    with pytest.raises(MissingPotential):
        V.values_at(np.array([[10, 10]]))
    far = dis.sample(spec, 0, np.array([[2 ** 40, -2 ** 40], [0, 0]]))
    assert far.values_at(np.array([[0, 0]]))[0] == far.values[1]


def test_to_dict_roundtrip():
    spec = dis.DisorderSpec.holder(0.3, amplitude=2, master_seed=11)
    assert dis.DisorderSpec(**spec.to_dict()) == spec
