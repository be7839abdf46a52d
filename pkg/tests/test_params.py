import numpy as np
import pytest

from cosum.autodiff import ContractViolation, Tensor
from cosum.params import MAGIC, ParamStore, load_checkpoint, save_checkpoint


def make_store():
    store = ParamStore()
    store.add("beta", Tensor(np.arange(6, dtype=float).reshape(2, 3)))
    store.add("alpha", Tensor([1.5]))
    store.add("scalar", Tensor(2.25))
    return store


class TestParamStore:
    def test_grad_shapes_match_parameters(self):
        store = make_store()
        for name in store.names():
            assert store.grad(name).shape == store.get(name).shape

    def test_duplicate_and_empty_names_rejected(self):
        store = make_store()
        with pytest.raises(ContractViolation):
            store.add("alpha", Tensor([2.0]))
        with pytest.raises(ContractViolation):
            store.add("", Tensor([1.0]))

    def test_set_grad_shape_enforced(self):
        store = make_store()
        with pytest.raises(ContractViolation):
            store.set_grad("alpha", np.zeros((2, 2)))

    def test_set_preserves_shape(self):
        store = make_store()
        with pytest.raises(ContractViolation):
            store.set("alpha", Tensor([[1.0, 2.0]]))


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        store = make_store()
        config = {"kind": "test", "note": "abc", "dims": [2, 3]}
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, store, config)
        loaded, loaded_config = load_checkpoint(path)
        assert loaded_config == config
        assert loaded.names() == store.names()
        for name in store.names():
            assert np.array_equal(loaded.get(name).data, store.get(name).data)

    def test_save_is_deterministic(self, tmp_path):
        store = make_store()
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, store, {"x": 1})
        save_checkpoint(p2, store, {"x": 1})
        assert p1.read_bytes() == p2.read_bytes()

    def test_magic_header(self, tmp_path):
        store = make_store()
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, store, {})
        assert path.read_bytes()[: len(MAGIC)] == MAGIC

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "bogus.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
        with pytest.raises(ContractViolation):
            load_checkpoint(path)

    def test_rejects_truncated_data(self, tmp_path):
        store = make_store()
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, store, {})
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(ContractViolation):
            load_checkpoint(path)
