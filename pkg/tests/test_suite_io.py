import json
import math

import numpy as np
import pytest

from locbmo.io import config_hash, read_csv, write_csv, write_json
from locbmo.space import build_grid_space
from locbmo.suite import DEFAULT_SUITE, build_suite, eigenvector, random_smooth, suite_name


def test_default_suite_names(small_family):
    space, family, _ = small_family
    suite = build_suite(space, DEFAULT_SUITE, family)
    assert list(suite) == ["one", "log_spike", "fg_abs", "indicator[0,1]", "eigenvector0", "eigenvector1", "random0"]
    assert all(v.shape == (space.size,) and np.all(np.isfinite(v)) for v in suite.values())
    assert np.all(suite["fg_abs"] >= 0)


def test_eigenvector_normalized(small_family):
    space, family, _ = small_family
    for j in (0, 3):
        v = eigenvector(family, j)
        assert space.masses @ v**2 == pytest.approx(1.0)
        assert v[np.argmax(np.abs(v))] > 0


def test_random_smooth_depends_on_coordinates():
    coarse = build_grid_space(1, 2.0, 0.1)
    fine = build_grid_space(1, 2.0, 0.05)
    a, b = random_smooth(coarse, 4), random_smooth(fine, 4)
    assert np.allclose(a, b[::2])
    assert not np.allclose(random_smooth(coarse, 5), a)


def test_suite_seed_shift_and_errors(line):
    s0 = build_suite(line, [{"kind": "random", "seed": 1}], seed=2)
    s1 = build_suite(line, [{"kind": "random", "seed": 3}])
    assert np.array_equal(s0["random1"], s1["random3"])
    with pytest.raises(ValueError):
        build_suite(line, [{"kind": "eigenvector", "index": 0}])
    with pytest.raises(ValueError):
        build_suite(line, [{"kind": "nope"}])
    assert suite_name({"kind": "indicator", "lo": -0.5, "hi": 1}) == "indicator[-0.5,1]"


def test_csv_roundtrip_and_formatting(tmp_path):
    rows = [(1, 0.1, True, None, math.inf, float("nan"), {"b": 1, "a": np.int64(2)}, np.float64(1 / 3))]
    p = write_csv(tmp_path / "x" / "t.csv", list("abcdefgh"), rows, "abc", "mod", "op")
    lines = p.read_text().splitlines()
    assert lines[0] == "# config_sha256=abc module=mod operation=op"
    got = read_csv(p)[0]
    assert got["a"] == "1" and got["b"] == "0.1" and got["c"] == "true" and got["d"] == ""
    assert got["e"] == "inf" and got["f"] == "nan"
    assert json.loads(got["g"]) == {"a": 2, "b": 1}
    assert float(got["h"]) == 1 / 3


def test_json_and_hash(tmp_path):
    p = write_json(tmp_path / "w.json", {"v": np.arange(3), "x": np.float32(0.5)}, "d")
    data = json.loads(p.read_text())
    assert data == {"config_sha256": "d", "data": {"v": [0, 1, 2], "x": 0.5}}
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    with pytest.raises(TypeError):
        write_json(tmp_path / "bad.json", {"o": object()}, "d")
