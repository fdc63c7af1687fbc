import json
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from degan import persist
from degan.adversarial import build_gan
from degan.config import RunConfig
from degan.errors import ConfigurationError, FormatError
from degan.numcore.rng import Rng
from degan.vae import build_vae

names = st.text(st.characters(min_codepoint=97, max_codepoint=122), min_size=1, max_size=8)
f64 = arrays(np.float64, st.lists(st.integers(0, 3), min_size=0, max_size=3).map(tuple),
             elements=st.floats(allow_nan=False))


@given(st.dictionaries(names, f64, max_size=4), st.dictionaries(names, st.integers(), max_size=3))
def test_encode_decode_round_trip(tensors, meta):
    kind, back, m = persist.decode(persist.encode("thing", tensors, meta))
    assert kind == "thing" and m == meta
    assert set(back) == set(tensors)
    for k, v in tensors.items():
        assert back[k].tobytes() == v.tobytes() and back[k].shape == v.shape


def test_dtype_codes():
    t = {"i": np.arange(3, dtype=np.int64), "u": np.arange(3, dtype=np.uint8), "f": np.ones(2)}
    _, back, _ = persist.decode(persist.encode("x", t))
    assert {k: v.dtype for k, v in back.items()} == {k: v.dtype for k, v in t.items()}


def test_layout_header():
    raw = persist.encode("vae", {"a": np.array([1.5])})
    assert raw[:4] == b"DEGC"
    assert struct.unpack("<I", raw[4:8])[0] == persist.VERSION
    assert struct.unpack("<I", raw[8:12])[0] == 3 and raw[12:15] == b"vae"


def test_corruption_detected():
    raw = bytearray(persist.encode("x", {"a": np.arange(4.0)}))
    raw[20] ^= 0xFF
    with pytest.raises(FormatError, match="CRC"):
        persist.decode(bytes(raw))
    with pytest.raises(FormatError, match="magic"):
        persist.decode(b"NOPE" + bytes(20))


@pytest.mark.parametrize("make", [lambda: build_vae(rng=Rng(0)), lambda: build_gan(rng=Rng(0))])
def test_model_file_bit_identical(make, tmp_path):
    m = make()
    p1 = persist.save_model(tmp_path / "a.degc", m)
    back = persist.load_model(p1)
    p2 = persist.save_model(tmp_path / "b.degc", back)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_wrong_kind_and_missing(tmp_path):
    p = persist.save_model(tmp_path / "v.degc", build_vae(rng=Rng(0)))
    with pytest.raises(FormatError, match="expected 'gan'"):
        persist.load_model(p, "gan")
    with pytest.raises(FileNotFoundError):
        persist.load_model(tmp_path / "none.degc")


# -- config --------------------------------------------------------------------------


def test_empty_config_has_defaults():
    cfg = RunConfig.from_json("")
    assert cfg == RunConfig()
    assert cfg.model.latent_dim == 128 and cfg.train.lambda1 == cfg.train.lambda2 == 1.0


@given(st.floats(1e-6, 1), st.integers(2, 64), st.floats(0, 5), st.integers(0, 2**31),
       st.sampled_from(["gaussian", "decoder_encoder"]), st.one_of(st.none(), st.integers(1, 10_000)))
def test_config_round_trip(lr, bs, l2, seed, noise, subset):
    cfg = RunConfig()
    cfg.train.lr, cfg.train.batch_size, cfg.train.lambda2, cfg.train.seed, cfg.train.noise = lr, bs, l2, seed, noise
    cfg.dataset.subset = subset
    text = cfg.to_json()
    again = RunConfig.from_json(text)
    assert again == cfg and again.to_json() == text


def test_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(ConfigurationError, match="unknown keys"):
        RunConfig.from_dict({"train": {"learning_rate": 1}})
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"extra": {}})
    with pytest.raises(ConfigurationError):
        RunConfig.from_json("{not json")
    p = tmp_path / "c.json"
    RunConfig().save(p)
    assert RunConfig.load(p) == RunConfig()
    assert json.loads(p.read_text())["output"]["run_dir"] == "runs/default"
