"""Binary checkpoint files ("DFPW"): named float32 tensors with a trailing CRC32.

Layout, little-endian throughout:
    magic b"DFPW" | version u32 | tensor count u32
    per tensor: name length u16 | name bytes | ndim u8 | dims u32 * ndim | float32 payload
    CRC32 u32 of every preceding byte

RL best responses also store their critics as critic.<net>.layer<i>.{weight,bias}
for net in q1, q2, q1_target, q2_target.
"""

import os
import struct
import tempfile
import zlib
from typing import Dict, List, Tuple

import numpy as np

from critic import CRITIC_NETS, critic_layer_shapes
from errors import CheckpointFormatError, CheckpointNotFoundError, ConfigurationError
from policy_pool import PolicyCheckpoint, actor_from_checkpoint

MAGIC = b'DFPW'
FORMAT_VERSION = 1
CRITIC_PREFIX = 'critic.'

Tensors = List[Tuple[str, np.ndarray]]

__all__ = [
    'MAGIC', 'FORMAT_VERSION', 'atomic_write', 'encode_tensors', 'decode_tensors', 'checkpoint_tensors',
    'checkpoint_entry', 'save_checkpoint', 'load_checkpoint',
]


def atomic_write(path: str, data: bytes):
    """Write through a temp file in the target directory, then rename over `path`."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix='.tmp-')
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def encode_tensors(tensors: Tensors) -> bytes:
    parts = [MAGIC, struct.pack('<II', FORMAT_VERSION, len(tensors))]
    for name, array in tensors:
        raw_name = name.encode('utf-8')
        array = np.asarray(array, dtype='<f4')
        parts.append(struct.pack('<H', len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack('<B', array.ndim))
        parts.append(struct.pack(f'<{array.ndim}I', *array.shape))
        parts.append(array.tobytes(order='C'))
    body = b''.join(parts)
    return body + struct.pack('<I', zlib.crc32(body) & 0xFFFFFFFF)


def decode_tensors(data: bytes) -> Tensors:
    if len(data) < 16 or data[:4] != MAGIC:
        raise CheckpointFormatError("not a DFPW checkpoint (bad magic)")
    body, (stored_crc,) = data[:-4], struct.unpack('<I', data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise CheckpointFormatError("checkpoint CRC mismatch")
    version, count = struct.unpack_from('<II', body, 4)
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    offset = 12
    tensors: Tensors = []
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from('<H', body, offset)
            offset += 2
            name = body[offset:offset + name_len].decode('utf-8')
            offset += name_len
            (ndim,) = struct.unpack_from('<B', body, offset)
            offset += 1
            shape = struct.unpack_from(f'<{ndim}I', body, offset)
            offset += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            if offset + 4 * size > len(body):
                raise CheckpointFormatError(f"tensor '{name}' is truncated")
            array = np.frombuffer(body, dtype='<f4', count=size, offset=offset).reshape(shape).astype(np.float32)
            offset += 4 * size
            tensors.append((name, array))
    except (struct.error, UnicodeDecodeError) as e:
        raise CheckpointFormatError(f"malformed checkpoint: {e}") from e
    if offset != len(body):
        raise CheckpointFormatError(f"{len(body) - offset} trailing bytes after the last tensor")
    return tensors


def checkpoint_tensors(checkpoint: PolicyCheckpoint) -> Tensors:
    """Per-layer named tensors, in flat-parameter order; critic layers follow the actor's."""
    if checkpoint.learner_kind == 'constant':
        return [('action', checkpoint.params)]
    actor = actor_from_checkpoint(checkpoint)
    tensors = []
    for index, param in enumerate(actor.parameters()):
        kind = 'weight' if index % 2 == 0 else 'bias'
        tensors.append((f"layer{index // 2}.{kind}", param))
    if checkpoint.critic:
        shapes = critic_layer_shapes(checkpoint.architecture['critic'])
        for net in CRITIC_NETS:
            offset = 0
            for index, shape in enumerate(shapes):
                size = int(np.prod(shape))
                kind = 'weight' if index % 2 == 0 else 'bias'
                tensors.append((f"{CRITIC_PREFIX}{net}.layer{index // 2}.{kind}",
                                checkpoint.critic[net][offset:offset + size].reshape(shape)))
                offset += size
    return tensors


def checkpoint_entry(checkpoint: PolicyCheckpoint, file: str) -> Dict[str, object]:
    """Manifest record holding everything but the tensors."""
    return {
        'file': file, 'learner_kind': checkpoint.learner_kind, 'fp_iteration': checkpoint.fp_iteration,
        'side': checkpoint.side, 'architecture': checkpoint.architecture, 'metadata': checkpoint.metadata,
        'digest': checkpoint.digest(),
    }


def save_checkpoint(path: str, checkpoint: PolicyCheckpoint):
    atomic_write(path, encode_tensors(checkpoint_tensors(checkpoint)))


def _split_critic(path: str, tensors: Tensors, entry: Dict[str, object]) -> Tuple[Tensors, Dict[str, np.ndarray]]:
    actor = [(name, t) for name, t in tensors if not name.startswith(CRITIC_PREFIX)]
    rest = [(name[len(CRITIC_PREFIX):], t) for name, t in tensors if name.startswith(CRITIC_PREFIX)]
    if not rest:
        return actor, {}
    arch = entry.get('architecture', {}).get('critic')
    if arch is None:
        raise CheckpointFormatError(f"{path}: critic tensors without a recorded critic architecture")
    expected = sum(int(np.prod(shape)) for shape in critic_layer_shapes(arch))
    critic = {}
    for net in CRITIC_NETS:
        parts = [t.ravel() for name, t in rest if name.startswith(net + '.layer')]
        flat = np.concatenate(parts) if parts else np.zeros(0, np.float32)
        if flat.size != expected:
            raise CheckpointFormatError(f"{path}: critic network {net} has {flat.size} values, expected {expected}")
        critic[net] = flat
    return actor, critic


def load_checkpoint(path: str, entry: Dict[str, object]) -> PolicyCheckpoint:
    if not os.path.isfile(path):
        raise CheckpointNotFoundError(f"checkpoint {path} does not exist")
    with open(path, 'rb') as f:
        tensors = decode_tensors(f.read())
    tensors, critic = _split_critic(path, tensors, entry)
    params = np.concatenate([t.ravel() for _, t in tensors]) if tensors else np.zeros(0, np.float32)
    checkpoint = PolicyCheckpoint(entry['learner_kind'], int(entry['fp_iteration']), int(entry['side']),
                                  entry['architecture'], params, entry.get('metadata', {}), critic)
    try:
        actor_from_checkpoint(checkpoint)
    except ConfigurationError as e:
        raise CheckpointFormatError(f"{path}: tensors do not match the recorded architecture ({e})") from e
    return checkpoint
