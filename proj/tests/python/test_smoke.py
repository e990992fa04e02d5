# Copyright 2026 The dynrollout Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import pathlib

import numpy as np
import pytest

import dynrollout as dr

TINY = """
name = tiny
seed = 3
poles = 0.5, 0.9
models = ZERO, LIN
train_trajs = 5
test_trajs = 6
train_horizon = 15
test_horizon = 15
"""


def test_version_and_presets():
    assert dr.__version__ == "0.1.0"
    names = dr.preset_names()
    assert "compound" in names and "data_table" in names
    assert "seed = 1" in dr.config_text("compound")


def test_selftest_passes():
    ok, report = dr.selftest()
    assert ok, report
    assert report.count("PASS") == 8


def test_generate_shapes_and_determinism():
    a = dr.generate_state_space(0.5, dim=4, n=3, horizon=20, seed=7)
    b = dr.generate_state_space(0.5, dim=4, n=3, horizon=20, seed=7)
    assert a.shape == (3, 21, 4)
    np.testing.assert_array_equal(a, b)
    lz = dr.generate_lorenz(n=2, horizon=50)
    assert lz.shape == (2, 51, 3)
    assert np.all((lz[:, 0, :] >= 5) & (lz[:, 0, :] < 10))


def test_transient_decay():
    assert dr.transient_decay_steps(0.5, [1.0]) == 14
    assert dr.transient_decay_steps(0.1, [1.0]) == 5


def test_run_sweep_is_reproducible(tmp_path: pathlib.Path):
    first = dr.run_sweep(TINY, tmp_path / "a")
    second = dr.run_sweep(TINY, tmp_path / "b", workers=2)
    assert first["all_succeeded"] and first["cell_count"] == 4
    a = pathlib.Path(first["artifacts"]["results"]).read_bytes()
    b = pathlib.Path(second["artifacts"]["results"]).read_bytes()
    assert a == b
    assert len(a.decode().splitlines()) == 1 + 4 * 15


def test_run_cell_profile_ordering():
    prof = dr.run_cell(TINY, 1)
    assert prof.shape == (15, 3)
    assert np.all(prof[:, 0] <= prof[:, 1]) and np.all(prof[:, 1] <= prof[:, 2])
    with pytest.raises(IndexError):
        dr.run_cell(TINY, 99)


def test_bad_config_raises():
    with pytest.raises(ValueError):
        dr.run_cell("name = x\npoles = 0.5\n", 0)


def test_snr_table_increasing():
    rows = dr.snr_table()
    snr = [s for _, s in rows]
    assert snr == sorted(snr) and len(set(snr)) == 3
