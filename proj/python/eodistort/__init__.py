# Copyright 2026 The eodistort Authors. All Rights Reserved.
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
# ==============================================================================
"""Class-conditional image distortions and robustness sweeps."""

from eodistort._core import (
    EodistortError,
    collect_sweep,
    color_dup,
    context_mask,
    distort,
    gray,
    iou,
    load_image,
    load_labels,
    luma,
    pixel_swap,
    rgb_to_gray,
    run_sweep,
    save_image,
    save_labels,
    stage_sweep,
)

__all__ = [
    "EodistortError",
    "collect_sweep",
    "color_dup",
    "context_mask",
    "distort",
    "gray",
    "iou",
    "load_image",
    "load_labels",
    "luma",
    "pixel_swap",
    "rgb_to_gray",
    "run_sweep",
    "save_image",
    "save_labels",
    "stage_sweep",
]
