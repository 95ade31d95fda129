import json

import pytest

from segtta import (
    AugmentationSpec,
    BackendDescriptor,
    RunConfig,
    default_augmentations,
    load_config,
    load_manifest,
)
from segtta.config import DatasetManifest, ManifestEntry, save_config
from segtta.errors import InvalidTau, SegTTAError


def oracle():
    return BackendDescriptor("oracle", name="o", confidence=1.0)


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig(backends=(oracle(),))
        assert cfg.tau == 0.6
        assert cfg.seed == 2024
        assert cfg.include_baseline

    def test_needs_a_backend(self):
        with pytest.raises(ValueError):
            RunConfig(backends=())

    def test_auto_names_are_unique(self):
        cfg = RunConfig(backends=(
            BackendDescriptor("constant"), BackendDescriptor("constant"),
        ))
        assert [b.name for b in cfg.backends] == ["b0", "b1"]

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            RunConfig(backends=(
                BackendDescriptor("constant", name="x"),
                BackendDescriptor("constant", name="x"),
            ))

    def test_tau_validated(self):
        with pytest.raises(InvalidTau):
            RunConfig(backends=(oracle(),), tau=0.0)

    def test_bad_voting_mode(self):
        with pytest.raises(ValueError):
            RunConfig(backends=(oracle(),), voting="plurality")

    def test_json_roundtrip(self, tmp_path):
        cfg = RunConfig(
            backends=(
                BackendDescriptor("noisy_oracle", name="n0", confidence=0.9,
                                  jitter=1, flip_prob=0.1),
                BackendDescriptor("external", name="x", command="run {input} {output}",
                                  timeout=30.0),
            ),
            augmentations=default_augmentations(),
            voting="majority",
            tau=0.5,
            seed=7,
            jobs=3,
            subset=(("n0", "baseline"),),
        )
        path = tmp_path / "cfg.json"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_missing_augmentations_field_uses_default_set(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"backends": [{"kind": "oracle", "name": "o"}]}))
        cfg = load_config(path)
        assert cfg.augmentations == default_augmentations()
        kinds = [a.kind for a in cfg.augmentations]
        assert kinds == ["gamma_correction", "contrast_enhancement",
                         "gaussian_blur", "gaussian_noise"]

    def test_unknown_field_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"backends": [{"kind": "oracle"}], "taus": [1]}))
        with pytest.raises(ValueError, match="taus"):
            load_config(path)


class TestManifest:
    def test_load_resolves_relative_paths(self, tmp_path):
        payload = [
            {"id": "a", "image": "a.nii", "label": "a_label.nii", "classes": 2},
            {"id": "b", "image": "sub/b.nii.gz", "classes": 2},
        ]
        path = tmp_path / "uterus.json"
        path.write_text(json.dumps(payload))
        manifest = load_manifest(path)
        assert manifest.name == "uterus"
        assert manifest.num_classes == 2
        assert manifest.entries[0].image == str(tmp_path / "a.nii")
        assert manifest.entries[1].label is None

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            DatasetManifest("d", (
                ManifestEntry("a", "x.nii", 2),
                ManifestEntry("a", "y.nii", 2),
            ))

    def test_class_count_must_agree(self):
        with pytest.raises(ValueError, match="num_classes"):
            DatasetManifest("d", (
                ManifestEntry("a", "x.nii", 2),
                ManifestEntry("b", "y.nii", 3),
            ))

    def test_not_a_list(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"cases": []}))
        with pytest.raises(SegTTAError, match="list"):
            load_manifest(path)

    def test_missing_field_named(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps([{"id": "a", "classes": 2}]))
        with pytest.raises(SegTTAError, match="image"):
            load_manifest(path)
