import struct

import numpy as np
import pytest

from vpr_uncertainty.core import DescriptorSet, PoseSet
from vpr_uncertainty.errors import (BadMagic, DuplicateQueryId, MixedDimensions, ParseError,
                                    TruncatedPayload)
from vpr_uncertainty.ingest import (MAGIC, load_descriptors, load_external_scores, load_poses,
                                    save_descriptors, save_poses, save_scores)


def test_binary_small(tmp_path):
    desc = DescriptorSet(("a", "b"), [[1.0, 2.0, 3.0], [-0.5, 0.25, 8.0]])
    path = tmp_path / "d.bin"
    save_descriptors(path, desc)
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    assert struct.unpack_from("<QI", raw, 8) == (2, 3)
    loaded = load_descriptors(path)
    assert loaded.ids == ("a", "b")
    np.testing.assert_array_equal(loaded.values, desc.values)


def test_binary_round_trip_is_identity(tmp_path, rng):
    values = rng.standard_normal((100, 2048)).astype(np.float32).astype(np.float64)
    ids = tuple(f"img_{i:03d}.jpg" for i in rng.permutation(100))
    path = tmp_path / "big.bin"
    save_descriptors(path, DescriptorSet(ids, values))
    loaded = load_descriptors(path)
    assert loaded.ids == ids
    assert np.array_equal(loaded.values, values)
    save_descriptors(tmp_path / "again.bin", loaded)
    assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()


def test_unicode_ids(tmp_path):
    desc = DescriptorSet(("straße/ü.png", "日本.jpg"), np.ones((2, 1)))
    save_descriptors(tmp_path / "u.bin", desc)
    assert load_descriptors(tmp_path / "u.bin").ids == desc.ids


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"XXXX" + bytes(20))
    with pytest.raises(BadMagic):
        load_descriptors(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.bin"
    save_descriptors(path, DescriptorSet(("a", "b"), np.ones((2, 4))))
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(TruncatedPayload):
        load_descriptors(path)


def test_text_descriptors(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,1,2,3\nb,4,5,6\n")
    d = load_descriptors(path)
    assert d.ids == ("a", "b") and d.dim == 3
    path.write_text("a,1,2,3\nb,4,5\n")
    with pytest.raises(ParseError) as exc:
        load_descriptors(path)
    assert exc.value.line == 2


def test_text_descriptor_round_trip(tmp_path):
    desc = DescriptorSet(("a", "b"), [[0.1, 0.2], [1e-8, -3.5]])
    save_descriptors(tmp_path / "d.txt", desc)
    np.testing.assert_array_equal(load_descriptors(tmp_path / "d.txt").values,
                                  desc.values.astype(np.float32))


def test_poses(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("a,0,0\nb,3,4\n")
    poses = load_poses(path)
    assert poses.dim == 2 and poses.ids == ("a", "b")
    np.testing.assert_array_equal(poses.coords, [[0, 0], [3, 4]])


def test_poses_3d_and_header(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("id,x,y,z\na,0,0,1\n")
    assert load_poses(path).dim == 3


def test_poses_mixed_dimensions(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("a,0,0\nb,1,2,3\n")
    with pytest.raises(MixedDimensions):
        load_poses(path)


def test_poses_empty_file(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("")
    with pytest.raises(ParseError):
        load_poses(path)


def test_poses_round_trip(tmp_path):
    poses = PoseSet(("a", "b"), [[0.1, 1e6], [-2.5, 1 / 3]])
    save_poses(tmp_path / "p.csv", poses)
    np.testing.assert_array_equal(load_poses(tmp_path / "p.csv").coords, poses.coords)


def test_confidence_polarity(tmp_path):
    path = tmp_path / "gv.csv"
    path.write_text("query_id,score\nq1,250\n")
    (rec,) = load_external_scores(path, "gv", "confidence")
    assert rec.gv_confidence == 250 and rec.score == -250
    assert rec.label == "EXTERNAL(gv)"


def test_uncertainty_polarity(tmp_path):
    path = tmp_path / "due.csv"
    path.write_text("query_id,score\nq1,0.73\n")
    (rec,) = load_external_scores(path, "stun", "uncertainty")
    assert rec.score == 0.73 and rec.gv_confidence is None


def test_duplicate_query_id(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("query_id,score\nq1,1\nq1,2\n")
    with pytest.raises(DuplicateQueryId):
        load_external_scores(path, "x")


def test_score_header_required(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("q1,1\n")
    with pytest.raises(ParseError):
        load_external_scores(path, "x")


def test_scores_round_trip(tmp_path):
    save_scores(tmp_path / "s.csv", {"q1": 0.1, "q2": 3.0})
    recs = load_external_scores(tmp_path / "s.csv", "x")
    assert [(r.query_id, r.score) for r in recs] == [("q1", 0.1), ("q2", 3.0)]
