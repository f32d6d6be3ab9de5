import numpy as np
import pytest

from mlsgan.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from mlsgan.exceptions import FormatError, ParseError


def _arrays():
    rng = np.random.default_rng(0)
    return {"w": rng.standard_normal((3, 2)), "b": np.arange(4.0), "s": np.array(2.5)}


def test_roundtrip_exact(tmp_path):
    arrays = _arrays()
    save_checkpoint(tmp_path / "c", arrays, {"epochs_done": 3, "variant": "mls_gan"})
    back, meta = load_checkpoint(tmp_path / "c")
    assert list(back) == list(arrays)
    for k in arrays:
        assert back[k].tobytes() == np.asarray(arrays[k], dtype=np.float64).tobytes()
    assert meta == {"epochs_done": 3, "variant": "mls_gan"}


def test_bytes_are_stable(tmp_path):
    save_checkpoint(tmp_path / "a", _arrays(), {"z": 1, "a": 2})
    save_checkpoint(tmp_path / "b", _arrays(), {"a": 2, "z": 1})
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    assert (tmp_path / "a").read_bytes().startswith(MAGIC.encode() + b"\n")


def test_truncated(tmp_path):
    path = tmp_path / "c"
    save_checkpoint(path, _arrays())
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(ParseError, match="'s'"):
        load_checkpoint(path)


def test_trailing_bytes(tmp_path):
    path = tmp_path / "c"
    save_checkpoint(path, _arrays())
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(ParseError, match="trailing"):
        load_checkpoint(path)


def test_not_a_checkpoint(tmp_path):
    path = tmp_path / "c"
    path.write_bytes(b"something else\n{}\n")
    with pytest.raises(FormatError):
        load_checkpoint(path)
    path.write_bytes(MAGIC.encode() + b"\n{broken\n")
    with pytest.raises(ParseError):
        load_checkpoint(path)
