from __future__ import annotations

import json

import numpy as np
import pytest

from depthquery.config import PipelineConfig, config_from_dict, config_to_dict, load_config
from depthquery.errors import ConfigError, SchemaVersionError
from depthquery.serialization import (
    SCHEMA_VERSION,
    dumps,
    gt_from_dict,
    gt_to_dict,
    load_scene,
    save_scene,
    scene_to_dict,
)
from depthquery.simworld import frame_ground_truth


class TestConfig:
    def test_round_trip(self):
        cfg = PipelineConfig()
        assert config_from_dict(config_to_dict(cfg)) == cfg

    def test_nested_override(self):
        cfg = config_from_dict({"querygen": {"n_points": 2}, "roi": {"mins": [-30, -30, -5], "maxs": [30, 30, 5]}})
        assert cfg.querygen.n_points == 2 and cfg.querygen.depth_layers == 3
        assert cfg.roi.mins == (-30, -30, -5)

    @pytest.mark.parametrize(
        "data,key",
        [
            ({"dimm": 64}, "dimm"),
            ({"querygen": {"n_pts": 3}}, "querygen.n_pts"),
            ({"dim": "64"}, "dim"),
            ({"dim": 30}, "dim"),
            ({"use_temporal": 1}, "use_temporal"),
            ({"scene": {"rig": {"width": 1.5}}}, "scene.rig.width"),
            ({"noise": {"drop_prob": -0.1}}, "noise"),
            ({"query_mode": "grid"}, "query_mode"),
        ],
    )
    def test_errors_name_the_key(self, data, key):
        with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
            config_from_dict(data)

    def test_json_diagnostics(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{\n  "dim": 64,\n  oops\n}')
        with pytest.raises(ConfigError, match="line 3"):
            load_config(path)

    def test_empty_file_is_defaults(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("")
        assert load_config(path) == PipelineConfig()


class TestSceneFile:
    def test_round_trip(self, small_scene, tmp_path):
        path = tmp_path / "s.json"
        save_scene(small_scene, path)
        back = load_scene(path)
        assert dumps(scene_to_dict(back)) == path.read_text()
        for k in range(small_scene.n_frames):
            a, b = frame_ground_truth(small_scene, k), frame_ground_truth(back, k)
            assert np.array_equal(a.centers, b.centers) and np.array_equal(a.yaws, b.yaws)

    def test_full_precision(self, small_scene):
        doc = json.loads(dumps(scene_to_dict(small_scene)))
        assert doc["objects"][0]["center0"] == small_scene.objects[0].center0.tolist()

    def test_schema_version_checked(self, small_scene, tmp_path):
        doc = scene_to_dict(small_scene)
        doc["schema_version"] = SCHEMA_VERSION + 1
        path = tmp_path / "s.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaVersionError):
            load_scene(path)

    def test_kind_checked(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "kind": "report"}))
        with pytest.raises(SchemaVersionError):
            load_scene(path)

    def test_gt_round_trip(self, small_scene):
        gt = frame_ground_truth(small_scene, 1)
        back = gt_from_dict(json.loads(json.dumps(gt_to_dict(gt))))
        assert np.array_equal(back.centers, gt.centers) and np.array_equal(back.classes, gt.classes)
