import json
import struct

import numpy as np
import pytest

import lemo


def tensor_file_bytes(arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = b"LEMO" + struct.pack("<HBB", 1, 0, arr.ndim)
    header += struct.pack("<%dI" % arr.ndim, *arr.shape)
    return header + arr.tobytes()


def test_tensor_file_bytes_match_reference_layout(tmp_path):
    arr = np.arange(24, dtype=np.float32).reshape(2, 3, 4) * 0.5 - 3.0
    assert lemo.encode_tensor(arr) == tensor_file_bytes(arr)
    path = tmp_path / "t.lemo"
    path.write_bytes(tensor_file_bytes(arr))
    np.testing.assert_array_equal(lemo.read_tensor(path), arr)
    lemo.write_tensor(tmp_path / "u.lemo", arr)
    assert (tmp_path / "u.lemo").read_bytes() == tensor_file_bytes(arr)


def test_decode_rejects_bad_magic():
    data = bytearray(tensor_file_bytes(np.zeros((2, 2), np.float32)))
    data[0:4] = b"NOPE"
    with pytest.raises(lemo.FormatError):
        lemo.decode_tensor(bytes(data))


def test_manifest_round_trip(tmp_path):
    lemo.write_tensor(tmp_path / "a.lemo", np.zeros((4, 3, 3), np.float32))
    lemo.write_tensor(tmp_path / "m.lemo", np.ones((6, 6), np.float32))
    manifest = {
        "orig_hw": [6, 6],
        "records": [
            {"feature_path": "a.lemo", "label": "normal", "split": "train-stream"},
            {"feature_path": "a.lemo", "label": "anomalous", "split": "test", "mask_path": "m.lemo"},
        ],
    }
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    records = lemo.load_manifest(tmp_path / "manifest.json", require_pixel_masks=True)
    assert [r["split"] for r in records] == ["train-stream", "test"]
    assert records[1]["label"] == "anomalous"
    assert records[1]["mask_path"].endswith("m.lemo")


def test_orthonormal_rows():
    p = lemo.orthonormal_rows(3, 10, 272)
    np.testing.assert_allclose(p @ p.T, np.eye(10), atol=1e-5)


def test_anomaly_map_against_numpy():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(5, 4, 3)).astype(np.float32)
    protos = rng.normal(size=(6, 5)).astype(np.float32)
    out = lemo.anomaly_map(z, protos)
    pts = z.reshape(5, -1).T.astype(np.float64)
    d = np.linalg.norm(pts[:, None, :] - protos[None, :, :].astype(np.float64), axis=2)
    s = d.min(axis=1)
    a = s * np.exp(-s) / np.exp(-d).sum(axis=1)
    np.testing.assert_allclose(out["s"].ravel(), s, atol=1e-5)
    np.testing.assert_allclose(out["a"].ravel(), a, atol=1e-6)


def test_loss_gradient_shapes_and_sign():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(6, 3, 3)).astype(np.float32)
    protos = rng.normal(size=(5, 6)).astype(np.float32)
    loss, gz, gp = lemo.anonce_loss(z, protos, tau=0.1, n_pos=2)
    assert loss >= 0.0
    assert gz.shape == z.shape and gp.shape == protos.shape
    step = 1e-2
    loss2, _, _ = lemo.anonce_loss(z - step * gz, protos - step * gp, tau=0.1, n_pos=2)
    assert loss2 < loss


def test_auroc_with_ties():
    assert lemo.auroc([0.1, 0.5, 0.5, 0.9], [0, 0, 1, 1]) == pytest.approx(0.875)


def test_engine_learns_and_detects():
    engine = lemo.Engine(64, {"seed": 2, "d_out": 32})
    first = None
    for i in range(60):
        features, _ = lemo.synth_frame(i)
        out = engine.process(features, "normal")
        first = out["loss"] if first is None else first
    assert engine.steps == 60
    assert out["loss"] < first
    normal, _ = lemo.synth_frame(1 << 32, anomalous=False)
    anomalous, mask = lemo.synth_frame((1 << 32) + 1, anomalous=True)
    assert mask.sum() > 0
    assert engine.detect(anomalous)["image_score"] > engine.detect(normal)["image_score"]
    assert engine.prototypes.shape == (10, 32)


def test_engine_rejects_unknown_config_key():
    with pytest.raises(lemo.ConfigError):
        lemo.Engine(64, {"no_such_key": 1})


def test_run_writes_report(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 1, "synth": {"train_frames": 20, "test_frames": 10}}))
    assert lemo.run(cfg, tmp_path / "out") == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["frames_processed"] == 20
    assert 0.0 <= report["metrics"]["i_auroc"] <= 1.0
