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

"""Rollout error experiments for learned one-step dynamics models."""

from ._dynrollout import (
    __version__,
    config_text,
    data_table,
    generate_lorenz,
    generate_state_space,
    preset_names,
    run_cell,
    run_sweep,
    selftest,
    snr_table,
    transient_decay_steps,
)

__all__ = [
    "__version__",
    "config_text",
    "data_table",
    "generate_lorenz",
    "generate_state_space",
    "preset_names",
    "run_cell",
    "run_sweep",
    "selftest",
    "snr_table",
    "transient_decay_steps",
]
