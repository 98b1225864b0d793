import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import spearmanr

from conftest import CONFIGS
from negdl.data import AttributeCodec
from negdl.ndbgen import QKParams
from negdl.presets import preset_names, preset_params
from negdl.security import (
    SecurityReport,
    guessing_probability,
    random_strings,
    security_sweep,
    write_reports_csv,
    write_reports_json,
)
from negdl.sketch import DecodedInstance


def _decoded(bit_prob_zero, bits):
    return DecodedInstance(np.asarray(bit_prob_zero, dtype=float), AttributeCodec(bits, len(bit_prob_zero) // bits))


def test_point_mass_has_zero_bits():
    p_bf, g = guessing_probability(_decoded([1.0, 0.0, 0.0, 1.0], 4))
    assert p_bf == 1.0 and g == 0.0


def test_uniform_attribute_has_four_bits():
    p_bf, g = guessing_probability(_decoded([0.5] * 4, 4))
    assert g == pytest.approx(4.0) and p_bf == pytest.approx(1 / 16)


def test_G_matches_attribute_max_and_adds_over_attributes():
    rng = np.random.default_rng(0)
    bp = rng.uniform(0.05, 0.95, size=12)
    dec = _decoded(bp, 4)
    g = guessing_probability(dec)[1]
    per_attr = [-np.log2(dec.attr_posterior[i].max()) for i in range(3)]
    assert g == pytest.approx(sum(per_attr), abs=1e-9)
    parts = [guessing_probability(_decoded(bp[4 * i : 4 * i + 4], 4))[1] for i in range(3)]
    assert g == pytest.approx(sum(parts), abs=1e-9)


@given(st.lists(st.floats(0.0, 1.0), min_size=8, max_size=8))
def test_G_bounds(bp):
    p_bf, g = guessing_probability(_decoded(bp, 4))
    assert 0.0 <= g <= 8.0 + 1e-9
    assert 0.0 <= p_bf <= 1.0


def test_underflow_reports_zero_probability():
    p_bf, g = guessing_probability(_decoded([0.5] * (8 * 200), 8))
    assert g == pytest.approx(1600.0) and p_bf == 0.0


def test_random_strings_shape_and_determinism():
    codec = AttributeCodec(8, 784)
    a = random_strings(3, codec, 5)
    assert a.shape == (3, 6272) and set(np.unique(a)) <= {0, 1}
    assert np.array_equal(a, random_strings(3, codec, 5))


def test_sweep_ordering_and_thread_independence():
    codec = AttributeCodec(4, 9)
    strings = random_strings(6, codec, 1)
    params = [(n, preset_params(n, 4, 9)) for n in preset_names(4)]
    reports = security_sweep(strings, params, codec, seed=3)
    again = security_sweep(strings, params, codec, seed=3, threads=4)
    assert [r.per_instance_G for r in reports] == [r.per_instance_G for r in again]
    g = {r.name: r.mean_G for r in reports}
    # Q2 spreads differing bits evenly and hides the most.
    assert g["Q2"] == max(g.values())
    for r in reports:
        assert all(0.0 <= x <= 36.0 for x in r.per_instance_G)


def test_sweep_rejects_wrong_width():
    codec = AttributeCodec(4, 9)
    with pytest.raises(ValueError):
        security_sweep(np.zeros((2, 35), dtype=np.uint8), [("Q1", preset_params("Q1", 4, 9))], codec)


def test_reports_written(tmp_path):
    params = QKParams(q=(0.7, 0.1, 0.1, 0.1), attributes=9)
    rep = SecurityReport("Q5", params, [1.0, 3.0])
    write_reports_csv([rep], tmp_path / "s.csv")
    write_reports_json([rep], tmp_path / "s.json")
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert rows == [{"params": "Q5", "mean_G": "2.0", "min": "1.0", "max": "3.0", "n": "2"}]
    back = json.loads((tmp_path / "s.json").read_text())
    assert back[0]["per_instance_G"] == [1.0, 3.0]
    assert QKParams.from_dict(back[0]["qk_params"]) == params


@pytest.mark.slow
def test_accuracy_and_G_anticorrelate_across_presets():
    from negdl.experiment import ExperimentConfig, run_sweep

    raw = ExperimentConfig.load(CONFIGS / "mnist.json").to_dict()
    raw["dataset"].update(limit=600, test_limit=300)
    cfg = ExperimentConfig.from_dict({**raw, "threads": 8})
    rows = run_sweep(cfg, preset_names(8), write=False)
    rho = spearmanr([r["accuracy"] for r in rows], [r["mean_G"] for r in rows]).statistic
    assert rho < 0
