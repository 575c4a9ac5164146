import json

import numpy as np
import pytest

from uol import io
from uol.synth_data import SyntheticConfig, apply_label_shift, generate_dataset
from uol.trainer import TrainConfig, evaluate, reference_set_for, train


@pytest.fixture(scope="module")
def dataset():
    return generate_dataset(SyntheticConfig(n=96, feature_dim=6, rater_count=8, seed=4))


def test_dataset_round_trip(tmp_path, dataset):
    path = tmp_path / "d.jsonl"
    io.save_dataset(dataset, path)
    back = io.load_dataset(path)
    assert len(back) == len(dataset)
    for a, b in zip(dataset, back):
        assert a.id == b.id
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.ratings, b.ratings)
        assert (a.mean_score, a.rating_variance, a.true_score) == (b.mean_score, b.rating_variance, b.true_score)


def test_dataset_lines_have_the_documented_keys(tmp_path, dataset):
    path = tmp_path / "d.jsonl"
    io.save_dataset(dataset[:3], path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 3
    assert set(json.loads(lines[0])) == {"id", "features", "mean_score", "rating_variance", "true_score", "ratings"}


def test_shifted_dataset_round_trip(tmp_path, dataset):
    shifted = apply_label_shift(dataset, 2.0)
    io.save_dataset(shifted, tmp_path / "s.jsonl")
    back = io.load_dataset(tmp_path / "s.jsonl")
    assert [d.mean_score for d in back] == [d.mean_score for d in shifted]


def test_out_of_range_rating_names_the_line(tmp_path, dataset):
    rows = [io.instance_to_dict(d) for d in dataset[:3]]
    rows[1]["ratings"][0] = 7.0
    (tmp_path / "bad.jsonl").write_text("".join(json.dumps(r) + "\n" for r in rows))
    with pytest.raises(io.DatasetError, match=r":2:"):
        io.load_dataset(tmp_path / "bad.jsonl")


def test_malformed_line_names_the_line(tmp_path, dataset):
    good = json.dumps(io.instance_to_dict(dataset[0]))
    (tmp_path / "bad.jsonl").write_text(good + "\n" + good + "\n{not json\n")
    with pytest.raises(io.DatasetError, match=r":3:"):
        io.load_dataset(tmp_path / "bad.jsonl")


def test_empty_file_is_an_empty_dataset(tmp_path):
    (tmp_path / "e.jsonl").write_text("")
    assert io.load_dataset(tmp_path / "e.jsonl") == []


@pytest.fixture(scope="module")
def trained(dataset):
    model, trace = train(dataset, TrainConfig(mode="uol", epochs=2, seed=3, embed_dim=4,
                                              encoder_hidden=(8, 8), comparator_hidden=(8, 8)))
    return model, trace


def test_checkpoint_round_trip_is_exact(tmp_path, trained, dataset):
    model, _ = trained
    path = tmp_path / "m.ckpt"
    io.save_checkpoint(model, path)
    back = io.load_checkpoint(path)
    for a, b in zip(model.encoder.tensors() + model.comparator.tensors(),
                    back.encoder.tensors() + back.comparator.tensors()):
        assert np.array_equal(a, b)
    assert back.config == model.config
    ref_a = reference_set_for(model, dataset)
    ref_b = reference_set_for(back, dataset)
    assert evaluate(model, dataset, ref_a) == evaluate(back, dataset, ref_b)
    # serialisation is byte-stable
    assert io.dumps_checkpoint(back) == path.read_text(encoding="utf-8")


def test_regression_checkpoint_round_trip(tmp_path, dataset):
    model, _ = train(dataset, TrainConfig(mode="regression", epochs=2, seed=1, encoder_hidden=(8, 8)))
    io.save_checkpoint(model, tmp_path / "r.ckpt")
    back = io.load_checkpoint(tmp_path / "r.ckpt")
    assert evaluate(model, dataset) == evaluate(back, dataset)


def test_unknown_version_is_rejected(tmp_path, trained):
    body = json.loads(io.dumps_checkpoint(trained[0]))
    body["format_version"] = io.FORMAT_VERSION + 1
    (tmp_path / "v.ckpt").write_text(json.dumps(body))
    with pytest.raises(io.UnsupportedVersionError):
        io.load_checkpoint(tmp_path / "v.ckpt")


def test_truncated_checkpoint_is_rejected(tmp_path, trained):
    text = io.dumps_checkpoint(trained[0])
    for cut in (10, len(text) // 2, len(text) - 5):
        (tmp_path / "t.ckpt").write_text(text[:cut])
        with pytest.raises(io.CheckpointError):
            io.load_checkpoint(tmp_path / "t.ckpt")


def test_manifest_mismatch_is_rejected(tmp_path, trained):
    body = json.loads(io.dumps_checkpoint(trained[0]))
    body["encoder"][0]["bias"] = body["encoder"][0]["bias"][:-1]
    (tmp_path / "m.ckpt").write_text(json.dumps(body))
    with pytest.raises(io.CheckpointError):
        io.load_checkpoint(tmp_path / "m.ckpt")


def test_trace_csv(tmp_path, trained):
    _, trace = trained
    io.write_trace_csv(trace, tmp_path / "loss.csv")
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,lr,ce,hinge,kl,total"
    assert len(lines) == 1 + len(trace)
    assert float(lines[1].split(",")[-1]) == trace[0]["total"]
