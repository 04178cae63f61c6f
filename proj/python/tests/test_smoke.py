# SPDX-FileCopyrightText: © 2026 The wscod Authors
#
# SPDX-License-Identifier: Apache-2.0

import json
import math

import numpy as np
import pytest

import wscod

TINY = {
    "data": {"count": 12, "height": 32, "width": 32},
    "pretrain": {"count": 8, "epochs": 1, "batch": 4},
    "segmenter": {"image": 32, "patch": 4, "dim": 16, "blocks": 1, "mlp": 16, "rank": 2, "decoder_hidden": 8},
    "stage1": {"epochs": 1, "batch": 4},
    "detector": {"channels": 4},
    "stage2": {"epochs": 1, "batch": 4},
}


def test_config_round_trip_and_hash():
    c = wscod.Config.from_json(json.dumps(TINY))
    again = wscod.Config.from_json(c.to_json())
    assert again.hash() == c.hash()
    moved = wscod.Config.from_json(c.to_json())
    moved.out = "/somewhere/else"
    moved.workers = 4
    assert moved.hash() == c.hash()
    c.ablate("gcl")
    assert c.hash() != again.hash()


def test_config_errors_are_value_errors():
    with pytest.raises(ValueError, match="unknown config key 'stage1.lamda'"):
        wscod.Config.from_json('{"stage1": {"lamda": 1}}')
    with pytest.raises(ValueError):
        wscod.Config().ablate("everything")


def test_generated_sample_boxes_enclose_masks():
    s = wscod.generate_sample(3, size=32, difficulty=0.5, seed=1)
    assert s["image"].shape == (3, 32, 32)
    assert 0.0 <= s["image"].min() and s["image"].max() <= 1.0
    assert len(s["masks"]) == len(s["boxes"]) >= 1
    for mask, (r0, c0, r1, c1) in zip(s["masks"], s["boxes"]):
        rows, cols = np.nonzero(mask)
        assert (rows.min(), cols.min(), rows.max(), cols.max()) == (r0, c0, r1, c1)


def test_pgm_round_trip(tmp_path):
    a = np.arange(12, dtype=float).reshape(3, 4) / 11.0
    wscod.write_pgm(tmp_path / "a.pgm", a)
    back = wscod.read_pgm(tmp_path / "a.pgm")
    assert back.shape == (3, 4)
    assert np.abs(back - a).max() <= 0.5 / 255 + 1e-12


def test_grad_check_flags_only_the_corrupted_op():
    rows = wscod.grad_check(seed=5, trials=1, corrupt=True)
    bad = [r["op"] for r in rows if r["max_rel_error"] > 1e-5]
    assert bad == ["corrupted_double"]
    assert {r["group"] for r in rows} >= {"primitive", "fora", "msfa", "loss", "gcl"}


def test_end_to_end(tmp_path):
    c = wscod.Config.from_json(json.dumps(TINY))
    data, base, s1 = tmp_path / "data", tmp_path / "base.ck", tmp_path / "stage1"
    wscod.gen_data(c, data)
    assert len(wscod.parse_log(wscod.pretrain(c, base))) == 2

    log = wscod.parse_log(wscod.train_stage1(c, data, base, s1))
    assert [r["step"] for r in log] == ["0", "1", "2"]
    assert all(r["teacher_grad_free"] == "1" for r in log)

    labels = tmp_path / "labels"
    wscod.make_pseudo(c, s1 / "final.ck", data, wscod.Split.TRAIN, "teacher", labels)
    first = wscod.directory_hash(labels)
    wscod.make_pseudo(c, s1 / "final.ck", data, wscod.Split.TRAIN, "teacher", labels)
    assert wscod.directory_hash(labels) == first

    steps = wscod.parse_log(wscod.train_stage2(c, data, labels, tmp_path / "det.ck"))
    for r in steps:
        assert float(r["alpha"]) == pytest.approx(math.cos(math.pi * float(r["t"]) / 2), abs=1e-12)

    wscod.predict(c, tmp_path / "det.ck", data, wscod.Split.TEST, tmp_path / "pred")
    report = wscod.evaluate(tmp_path / "pred", data, wscod.Split.TEST)
    assert len(report["samples"]) == 2
    assert 0.0 <= report["miou"] <= 1.0

    perfect = wscod.evaluate(data / "gt", data, wscod.Split.TEST)
    assert (perfect["mae"], perfect["miou"], perfect["mf1"]) == (0.0, 1.0, 1.0)
