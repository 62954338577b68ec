"""
Checkpoint files.

Layout, little endian:

    magic 'ZTIG' | u16 version | u16 hash length | config_hash (utf-8)
    | u32 epoch | u32 blob count
    | per blob: u16 name length | name | u64 blob length | blob
    | u32 CRC-32 of everything above

Each blob is the `torch.save` serialization of one subnetwork state dict.
"""
import io
import logging
import struct
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field

import torch

from retivid.video import constants
from retivid.video.exceptions import (
    ConfigMismatch, CorruptCheckpoint, UnwritablePath,
)

log = logging.getLogger(__name__)


@dataclass
class Checkpoint:
    """
    Trained weights of the three subnetworks.

    Attributes:
        weights (OrderedDict): network name -> state dict
        epoch (int): number of completed epochs
        config_hash (str): hash of the configuration the weights belong to

    """
    weights: OrderedDict = field(default_factory=OrderedDict)
    epoch: int = 0
    config_hash: str = ''


def _serialize_state(state_dict):
    buffer = io.BytesIO()
    torch.save(state_dict, buffer)
    return buffer.getvalue()


def save_checkpoint(ckpt, path):
    """
    Write a checkpoint file

    Args:
        ckpt (Checkpoint): checkpoint to write
        path (str): destination file

    Raises:
        UnwritablePath: if the file can not be written

    """
    hash_bytes = ckpt.config_hash.encode()
    body = io.BytesIO()
    body.write(constants.CHECKPOINT_MAGIC)
    body.write(struct.pack(
        '<HH', constants.CHECKPOINT_VERSION, len(hash_bytes)
    ))
    body.write(hash_bytes)
    body.write(struct.pack('<II', ckpt.epoch, len(ckpt.weights)))
    for name, state_dict in ckpt.weights.items():
        name_bytes = name.encode()
        blob = _serialize_state(state_dict)
        body.write(struct.pack('<H', len(name_bytes)))
        body.write(name_bytes)
        body.write(struct.pack('<Q', len(blob)))
        body.write(blob)
    data = body.getvalue()
    try:
        with open(path, 'wb') as fd:
            fd.write(data)
            fd.write(struct.pack('<I', zlib.crc32(data)))
    except OSError as ex:
        raise UnwritablePath(f"{path}: {ex}")
    log.info(
        f"Checkpoint of epoch {ckpt.epoch} saved to {path} "
        f"({len(data)} bytes)"
    )


class _Reader:
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def take(self, size):
        if self.offset + size > len(self.data):
            raise CorruptCheckpoint("Checkpoint is truncated")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, expected_hash=None):
    """
    Read a checkpoint file

    Args:
        path (str): checkpoint file
        expected_hash (str): config hash of the active configuration, the
            load is refused when it differs from the stored one. No check
            is done when None.

    Returns:
        Checkpoint: the stored checkpoint

    Raises:
        CorruptCheckpoint: bad magic, version, truncation or checksum
        ConfigMismatch: stored config hash differs from expected_hash

    """
    with open(path, 'rb') as fd:
        raw = fd.read()
    if len(raw) < 4 + len(constants.CHECKPOINT_MAGIC):
        raise CorruptCheckpoint(f"{path} is truncated")
    data, (crc,) = raw[:-4], struct.unpack('<I', raw[-4:])
    reader = _Reader(data)
    if reader.take(4) != constants.CHECKPOINT_MAGIC:
        raise CorruptCheckpoint(f"{path} is not a retivid checkpoint")
    if zlib.crc32(data) != crc:
        raise CorruptCheckpoint(f"{path} failed the checksum")
    version, hash_len = reader.unpack('<HH')
    if version != constants.CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"Unsupported checkpoint version {version}")
    config_hash = reader.take(hash_len).decode()
    if expected_hash is not None and config_hash != expected_hash:
        raise ConfigMismatch(expected_hash, config_hash)
    epoch, count = reader.unpack('<II')
    weights = OrderedDict()
    for _ in range(count):
        (name_len,) = reader.unpack('<H')
        name = reader.take(name_len).decode()
        (blob_len,) = reader.unpack('<Q')
        blob = reader.take(blob_len)
        try:
            weights[name] = torch.load(
                io.BytesIO(blob), map_location='cpu', weights_only=True
            )
        except Exception as ex:
            raise CorruptCheckpoint(f"Blob {name} can not be loaded: {ex}")
    log.info(f"Loaded checkpoint of epoch {epoch} from {path}")
    return Checkpoint(weights=weights, epoch=epoch, config_hash=config_hash)
