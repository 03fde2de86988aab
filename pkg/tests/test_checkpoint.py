"""Checkpoint archive: bit-exact round trips, optimizer state restoration,
manifest contents, and shape-mismatch rejection."""

import numpy as np
import pytest
import torch

from texthier.errors import CheckpointError
from texthier.model import build_model
from texthier.model.checkpoint import (
    FORMAT_VERSION,
    load_checkpoint,
    read_manifest,
    save_checkpoint,
)
from texthier.training.config import TrainConfig
from texthier.training.loop import make_optimizer


def randomized_model(seed: int):
    model = build_model("desk", seed=seed)
    with torch.no_grad():
        for param in model.trainable_parameters():
            param.add_(torch.randn_like(param) * 0.01)
    return model


class TestRoundTrip:
    def test_parameters_and_buffers_bit_exact(self, tmp_path):
        src = randomized_model(0)
        path = save_checkpoint(tmp_path / "m.ckpt", src, step=7, epoch=3)
        loaded, manifest = load_checkpoint(path)
        assert manifest["step"] == 7
        assert manifest["epoch"] == 3
        src_state = src.state_dict()
        loaded_state = loaded.state_dict()
        assert set(src_state) == set(loaded_state)
        for name in src_state:
            assert torch.equal(src_state[name], loaded_state[name]), name

    def test_load_into_existing_model(self, tmp_path):
        src = randomized_model(1)
        path = save_checkpoint(tmp_path / "m.ckpt", src)
        dst = build_model("desk", seed=99)
        load_checkpoint(path, model=dst)
        for a, b in zip(src.parameters(), dst.parameters()):
            assert torch.equal(a, b)

    def test_self_prompting_flags_restored(self, tmp_path):
        src = build_model("desk", seed=2, use_refiner=False, learned_tokens=True)
        path = save_checkpoint(tmp_path / "m.ckpt", src)
        loaded, manifest = load_checkpoint(path)
        assert manifest["self_prompting"] == {
            "use_refiner": False,
            "learned_tokens": True,
        }
        assert loaded.self_prompting.use_refiner is False
        assert loaded.self_prompting.learned_tokens is True

    def test_extra_payload(self, tmp_path):
        src = build_model("desk", seed=3)
        path = save_checkpoint(tmp_path / "m.ckpt", src, extra={"note": "hello"})
        assert read_manifest(path)["extra"] == {"note": "hello"}


class TestOptimizerState:
    def _step_once(self, model, optimizer):
        emb = model.image_encoder(torch.randn(1, 3, 256, 256))
        loss = model.self_prompting(emb).square().mean()
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

    def test_moments_restored_exactly(self, tmp_path):
        torch.manual_seed(4)
        model = build_model("desk", seed=4)
        cfg = TrainConfig()
        optimizer = make_optimizer(model, cfg)
        self._step_once(model, optimizer)
        path = save_checkpoint(tmp_path / "m.ckpt", model, optimizer=optimizer, step=1)

        fresh = build_model("desk", seed=5)
        fresh_opt = make_optimizer(fresh, cfg)
        load_checkpoint(path, model=fresh, optimizer=fresh_opt)

        orig_state = optimizer.state_dict()["state"]
        new_state = fresh_opt.state_dict()["state"]
        assert set(orig_state) == set(new_state)
        for idx in orig_state:
            for field in orig_state[idx]:
                a, b = orig_state[idx][field], new_state[idx][field]
                assert torch.equal(
                    torch.as_tensor(a, dtype=torch.float64),
                    torch.as_tensor(b, dtype=torch.float64),
                ), (idx, field)

    def test_optimizer_continuation_matches_uninterrupted(self, tmp_path):
        # Save after one step, restore into fresh objects, take one more
        # step on both; parameters must agree bit for bit.
        torch.manual_seed(6)
        model = build_model("desk", seed=6)
        cfg = TrainConfig()
        optimizer = make_optimizer(model, cfg)
        torch.manual_seed(100)
        self._step_once(model, optimizer)
        path = save_checkpoint(tmp_path / "m.ckpt", model, optimizer=optimizer)

        resumed = build_model("desk", seed=7)
        resumed_opt = make_optimizer(resumed, cfg)
        load_checkpoint(path, model=resumed, optimizer=resumed_opt)

        torch.manual_seed(200)
        self._step_once(model, optimizer)
        torch.manual_seed(200)
        self._step_once(resumed, resumed_opt)
        for a, b in zip(model.trainable_parameters(), resumed.trainable_parameters()):
            assert torch.equal(a, b)

    def test_missing_optimizer_state_rejected(self, tmp_path):
        model = build_model("desk", seed=8)
        path = save_checkpoint(tmp_path / "m.ckpt", model)
        opt = make_optimizer(model, TrainConfig())
        with pytest.raises(CheckpointError):
            load_checkpoint(path, model=model, optimizer=opt)


class TestValidation:
    def test_unreadable_file(self, tmp_path):
        bad = tmp_path / "junk.ckpt"
        bad.write_bytes(b"not a zip at all")
        with pytest.raises(CheckpointError):
            read_manifest(bad)
        with pytest.raises(CheckpointError):
            load_checkpoint(bad)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_format_version_pinned(self, tmp_path):
        model = build_model("desk", seed=9)
        path = save_checkpoint(tmp_path / "m.ckpt", model)
        manifest = read_manifest(path)
        assert manifest["format_version"] == FORMAT_VERSION == 1

    def test_shape_mismatch_rejected(self, tmp_path):
        import io
        import json
        import zipfile

        model = build_model("desk", seed=10)
        path = save_checkpoint(tmp_path / "m.ckpt", model)

        # Corrupt one stored array so its shape disagrees with the manifest.
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
            arrays = dict(np.load(io.BytesIO(zf.read("params.npz"))))
        victim = next(iter(arrays))
        arrays[victim] = arrays[victim].reshape(-1)[:-1] if arrays[victim].size > 1 else np.zeros((2, 2))
        tampered = tmp_path / "tampered.ckpt"
        with zipfile.ZipFile(tampered, "w") as zf:
            zf.writestr("manifest.json", json.dumps(manifest))
            buf = io.BytesIO()
            np.savez(buf, **arrays)
            zf.writestr("params.npz", buf.getvalue())
        with pytest.raises(CheckpointError):
            load_checkpoint(tampered)

    def test_wrong_model_shape_rejected(self, tmp_path):
        small = build_model("desk", seed=11)
        path = save_checkpoint(tmp_path / "m.ckpt", small)
        other = build_model("desk", encoder="base", seed=11)
        with pytest.raises(CheckpointError):
            load_checkpoint(path, model=other)

    def test_manifest_lists_every_array(self, tmp_path):
        model = build_model("desk", seed=12)
        path = save_checkpoint(tmp_path / "m.ckpt", model)
        manifest = read_manifest(path)
        state = model.state_dict()
        assert set(manifest["shapes"]) == set(state)
        for name, shape in manifest["shapes"].items():
            assert shape == list(state[name].shape)
