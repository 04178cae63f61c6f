# SPDX-FileCopyrightText: © 2026 The wscod Authors
#
# SPDX-License-Identifier: Apache-2.0
"""Box-supervised camouflaged object detection on synthetic data.

Thin wrapper over the native core. Training functions return their log as
text, one ``key=value`` record per line; ``parse_log`` turns it into dicts.
"""

from ._core import (
    Config,
    Split,
    directory_hash,
    evaluate,
    evaluate_directories,
    gen_data,
    generate_sample,
    grad_check,
    make_pseudo,
    predict,
    pretrain,
    read_pgm,
    read_ppm,
    train_stage1,
    train_stage2,
    write_pgm,
)

__all__ = [
    "Config",
    "Split",
    "directory_hash",
    "evaluate",
    "evaluate_directories",
    "gen_data",
    "generate_sample",
    "grad_check",
    "make_pseudo",
    "parse_log",
    "predict",
    "pretrain",
    "read_pgm",
    "read_ppm",
    "train_stage1",
    "train_stage2",
    "write_pgm",
]


def parse_log(text):
    """Split key=value log lines into dicts of strings."""
    return [dict(field.split("=", 1) for field in line.split()) for line in text.splitlines() if line]
