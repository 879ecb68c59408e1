import numpy as np
import pytest

from kreboot import DataGenConfig, InputDomainError, derive_seed, generate, target_g
from kreboot.datagen import InputLaw, read_csv, splitmix64, write_csv


def test_target_values():
    assert target_g([0.0, 0.0, 0.0]) == 3.0
    assert target_g([1.0, 0.0, 0.0]) == 0.0
    assert target_g([0.0, 0.5, 0.0]) == pytest.approx(20.75 / 64, rel=1e-15)
    assert target_g([0.0, 0.0, 2.0]) == 0.0


def test_target_continuous_at_unit_sphere():
    assert abs(target_g([1 - 1e-9, 0, 0])) < 1e-40
    assert target_g([1 + 1e-9, 0, 0]) == 0.0


def test_target_vectorized():
    X = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]])
    np.testing.assert_allclose(target_g(X), [3.0, 0.32421875])
    with pytest.raises(InputDomainError):
        target_g([np.nan, 0, 0])


def test_noiseless_data_is_clean():
    d = generate(DataGenConfig(100, 0.0, 3))
    assert np.array_equal(d.y, d.clean)


def test_same_seed_bit_identical():
    a = generate(DataGenConfig(200, 1.0, 123))
    b = generate(DataGenConfig(200, 1.0, 123))
    for f in ("X", "y", "clean"):
        assert getattr(a, f).tobytes() == getattr(b, f).tobytes()
    c = generate(DataGenConfig(200, 1.0, 124))
    assert not np.array_equal(a.X, c.X)


def test_noise_levels_are_paired():
    a = generate(DataGenConfig(300, 1.0, 5))
    b = generate(DataGenConfig(300, 2.0, 5))
    assert np.array_equal(a.X, b.X)
    # subtracting clean back out costs a few ulps of |clean|
    np.testing.assert_allclose(b.y - b.clean, np.sqrt(2.0) * (a.y - a.clean), rtol=1e-12, atol=1e-14)


def test_noise_variance_law_of_large_numbers():
    d = generate(DataGenConfig(100_000, 1.0, 2024))
    assert 0.98 <= np.var(d.y - d.clean, ddof=1) <= 1.02


def test_ball_inputs():
    d = generate(DataGenConfig(100_000, 1.0, 77))
    r = np.linalg.norm(d.X, axis=1)
    assert r.max() <= 1.0
    # r^3 is uniform on [0, 1]: mean 1/2, standard error sqrt(1/12 / m)
    assert abs((r**3).mean() - 0.5) <= 3 * np.sqrt(1 / 12 / 100_000)


def test_cube_inputs():
    d = generate(DataGenConfig(1000, 1.0, 1, InputLaw.UNIFORM_CUBE3))
    assert np.abs(d.X).max() <= 1.0
    assert np.linalg.norm(d.X, axis=1).max() > 1.0


def test_config_validation():
    with pytest.raises(InputDomainError):
        DataGenConfig(0)
    with pytest.raises(InputDomainError):
        DataGenConfig(5, -1.0)
    with pytest.raises(ValueError):
        DataGenConfig(5, 1.0, 0, "sphere")


def test_seed_derivation():
    # first splitmix64 output for state 0 (reference value of the published algorithm)
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    seeds = {derive_seed(7, t) for t in range(1000)}
    assert len(seeds) == 1000
    assert derive_seed(7, 3) == derive_seed(7, 3)
    assert all(0 <= s < 2**64 for s in seeds)


def test_csv_roundtrip(tmp_path):
    d = generate(DataGenConfig(50, 1.0, 8))
    path = tmp_path / "d.csv"
    write_csv(path, d)
    assert path.read_text().splitlines()[0] == "x1,x2,x3,y,clean"
    e = read_csv(path)
    for f in ("X", "y", "clean"):
        assert np.array_equal(getattr(d, f), getattr(e, f))


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(InputDomainError):
        read_csv(p)
    p.write_text("")
    with pytest.raises(InputDomainError):
        read_csv(p)
