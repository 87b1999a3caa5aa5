import json
import os

import numpy as np
import pytest

from critic import CRITIC_NETS, TwinCritic
from ddpm_policy import DiffusionActor, NoiseSchedule
from errors import CheckpointFormatError, CheckpointNotFoundError
from file_exporters import (MAGIC, atomic_write, checkpoint_entry, decode_tensors, encode_tensors, load_checkpoint,
                            save_checkpoint)
from game_core import ConstantPolicy
from policy_pool import PolicyCheckpoint


def diffusion_checkpoint(seed=0):
    actor = DiffusionActor(3, 2, NoiseSchedule.build('vp', 4), hidden=(8, 8), rng=np.random.default_rng(seed))
    return PolicyCheckpoint.from_actor(actor, 2, 1, metadata={'env': 'particle-tag'})


def critic_checkpoint():
    actor = DiffusionActor(3, 2, NoiseSchedule.build('linear', 4), hidden=(8, 8), rng=np.random.default_rng(0))
    critic = TwinCritic(3, 2, gamma=0.9, hidden=(8, 8), rng=np.random.default_rng(1))
    critic.q1_target.load_flat(np.zeros(critic.q1.num_params))
    return PolicyCheckpoint.from_actor(actor, 1, 0, critic=critic)


def manifest_entry(checkpoint, file='iter.ckpt'):
    return json.loads(json.dumps(checkpoint_entry(checkpoint, file)))


class TestTensors:

    def test_layout(self):
        data = encode_tensors([('w', np.ones((2, 3))), ('b', np.zeros(3))])
        assert data[:4] == MAGIC
        names = [name for name, _ in decode_tensors(data)]
        assert names == ['w', 'b']

    def test_shapes_and_values(self):
        w = np.arange(6, dtype=np.float32).reshape(2, 3)
        (name, decoded), = decode_tensors(encode_tensors([('w', w)]))
        assert decoded.dtype == np.float32
        np.testing.assert_array_equal(decoded, w)

    def test_every_bit_flip_detected(self):
        data = encode_tensors([('action', np.array([0.25], dtype=np.float32))])
        for index in range(len(data)):
            for bit in range(8):
                corrupted = bytearray(data)
                corrupted[index] ^= 1 << bit
                with pytest.raises(CheckpointFormatError):
                    decode_tensors(bytes(corrupted))

    def test_truncation_detected(self):
        data = encode_tensors([('w', np.ones((4, 4)))])
        for length in range(len(data)):
            with pytest.raises(CheckpointFormatError):
                decode_tensors(data[:length])

    def test_trailing_bytes_detected(self):
        data = encode_tensors([('w', np.ones(2))])
        with pytest.raises(CheckpointFormatError):
            decode_tensors(data + b'\x00')


class TestCheckpointFiles:

    def test_diffusion_round_trip(self, tmp_path):
        checkpoint = diffusion_checkpoint()
        path = str(tmp_path / 'agent1' / 'iter2.ckpt')
        save_checkpoint(path, checkpoint)
        loaded = load_checkpoint(path, manifest_entry(checkpoint))
        np.testing.assert_array_equal(loaded.params, checkpoint.params)
        assert loaded.digest() == checkpoint.digest()
        assert loaded.metadata == {'env': 'particle-tag'}

    def test_critic_round_trip(self, tmp_path):
        checkpoint = critic_checkpoint()
        path = str(tmp_path / 'rl.ckpt')
        save_checkpoint(path, checkpoint)
        loaded = load_checkpoint(path, manifest_entry(checkpoint))
        assert sorted(loaded.critic) == sorted(CRITIC_NETS)
        for name in CRITIC_NETS:
            np.testing.assert_array_equal(loaded.critic[name], checkpoint.critic[name])
        np.testing.assert_array_equal(loaded.params, checkpoint.params)
        assert loaded.digest() == checkpoint.digest()

    def test_critic_shape_mismatch(self, tmp_path):
        checkpoint = critic_checkpoint()
        path = str(tmp_path / 'rl.ckpt')
        save_checkpoint(path, checkpoint)
        entry = manifest_entry(checkpoint)
        entry['architecture']['critic']['sizes'] = [8, 4, 1]
        with pytest.raises(CheckpointFormatError, match='critic'):
            load_checkpoint(path, entry)

    def test_critic_without_architecture(self, tmp_path):
        checkpoint = critic_checkpoint()
        path = str(tmp_path / 'rl.ckpt')
        save_checkpoint(path, checkpoint)
        entry = manifest_entry(checkpoint)
        del entry['architecture']['critic']
        with pytest.raises(CheckpointFormatError, match='critic'):
            load_checkpoint(path, entry)

    def test_constant_round_trip(self, tmp_path):
        checkpoint = PolicyCheckpoint.from_actor(ConstantPolicy([0.5, -0.5], 4), 0, 0)
        path = str(tmp_path / 'c.ckpt')
        save_checkpoint(path, checkpoint)
        loaded = load_checkpoint(path, manifest_entry(checkpoint))
        np.testing.assert_array_equal(loaded.params, [0.5, -0.5])
        assert loaded.learner_kind == 'constant'

    def test_missing_file(self, tmp_path):
        checkpoint = diffusion_checkpoint()
        with pytest.raises(CheckpointNotFoundError):
            load_checkpoint(str(tmp_path / 'absent.ckpt'), manifest_entry(checkpoint))

    def test_architecture_mismatch(self, tmp_path):
        checkpoint = diffusion_checkpoint()
        path = str(tmp_path / 'x.ckpt')
        save_checkpoint(path, checkpoint)
        entry = manifest_entry(checkpoint)
        entry['architecture']['hidden'] = [16, 16]
        with pytest.raises(CheckpointFormatError, match='architecture'):
            load_checkpoint(path, entry)

    def test_corrupted_file(self, tmp_path):
        checkpoint = diffusion_checkpoint()
        path = tmp_path / 'x.ckpt'
        save_checkpoint(str(path), checkpoint)
        data = bytearray(path.read_bytes())
        data[40] ^= 0x10
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(str(path), manifest_entry(checkpoint))

    def test_entry_fields(self):
        checkpoint = diffusion_checkpoint()
        entry = checkpoint_entry(checkpoint, 'agent1/iter2.ckpt')
        assert entry['file'] == 'agent1/iter2.ckpt'
        assert (entry['fp_iteration'], entry['side']) == (2, 1)
        assert entry['digest'] == checkpoint.digest()


class TestAtomicWrite:

    def test_replaces_without_leftovers(self, tmp_path):
        path = str(tmp_path / 'out.bin')
        atomic_write(path, b'first')
        atomic_write(path, b'second')
        assert os.listdir(tmp_path) == ['out.bin']
        with open(path, 'rb') as f:
            assert f.read() == b'second'
