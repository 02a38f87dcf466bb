"""
Parameter files and checkpoint directories.

A parameter file is one JSON header line listing (name, shape) in
serialization order, followed by the little-endian float64 values of every
parameter back to back. A checkpoint directory holds one parameter file per
component, the run config, and manifest.json mapping component names to files
together with the config hash and step.
"""

import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from mooss.config import TrainConfig, config_hash, load_train_config, save_train_config
from mooss.core.tensor import Parameter
from utils.validation import ConfigError, UsageError, validate_file_exists

logger = logging.getLogger(__name__)

PARAM_FORMAT = 'mooss-params'
PARAM_FORMAT_VERSION = 1
MANIFEST_NAME = 'manifest.json'
CONFIG_NAME = 'config.cfg'


def save_parameters(path, params: Sequence[Parameter]) -> None:
    path = Path(path)
    header = {
        'format': PARAM_FORMAT,
        'version': PARAM_FORMAT_VERSION,
        'dtype': '<f8',
        'params': [{'name': p.name, 'shape': list(p.shape)} for p in params],
    }
    with open(path, 'wb') as f:
        f.write(json.dumps(header, sort_keys=True).encode('utf-8'))
        f.write(b'\n')
        for p in params:
            f.write(np.ascontiguousarray(p.data, dtype='<f8').tobytes())


def load_parameters(path) -> Dict[str, np.ndarray]:
    """
    Read a parameter file into name -> array, in file order.

    Raises:
        UsageError: If the file is missing, truncated or not a parameter file
    """
    path = Path(path)
    validate_file_exists(path, "Parameter file")
    with open(path, 'rb') as f:
        header_line = f.readline()
        payload = f.read()
    try:
        header = json.loads(header_line.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise UsageError(f"Invalid parameter file header in {path}: {e}") from None
    if header.get('format') != PARAM_FORMAT:
        raise UsageError(f"{path} is not a {PARAM_FORMAT} file")

    values = np.frombuffer(payload, dtype='<f8')
    expected = sum(int(np.prod(entry['shape'])) for entry in header['params'])
    if values.size != expected:
        raise UsageError(f"{path}: expected {expected} values, found {values.size}")

    arrays = {}
    offset = 0
    for entry in header['params']:
        shape = tuple(entry['shape'])
        count = int(np.prod(shape))
        arrays[entry['name']] = values[offset:offset + count].reshape(shape).astype(np.float64)
        offset += count
    return arrays


def restore_parameters(params: Sequence[Parameter], arrays: Dict[str, np.ndarray], component: str) -> None:
    """
    Copy stored values into params.

    Raises:
        ConfigError: If names or shapes differ from the stored ones
    """
    names = [p.name for p in params]
    if names != list(arrays):
        missing = sorted(set(names) - set(arrays))
        extra = sorted(set(arrays) - set(names))
        raise ConfigError(
            f"checkpoint component '{component}' does not match the model: "
            f"missing {missing}, unexpected {extra}"
        )
    for p in params:
        stored = arrays[p.name]
        if stored.shape != p.shape:
            raise ConfigError(f"checkpoint shape mismatch for {p.name}: {stored.shape} vs {p.shape}")
        p.data[...] = stored


@dataclass
class Checkpoint:
    directory: Path
    manifest: dict
    config: TrainConfig
    arrays: Dict[str, Dict[str, np.ndarray]]

    @property
    def step(self) -> int:
        return int(self.manifest['step'])


def save_checkpoint(directory, components: Dict[str, List[Parameter]], config: TrainConfig, step: int) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, params in components.items():
        filename = f"{name}.bin"
        save_parameters(directory / filename, params)
        files[name] = filename
    save_train_config(config, directory / CONFIG_NAME)
    manifest = {
        'components': files,
        'config': CONFIG_NAME,
        'config_hash': config_hash(config),
        'step': int(step),
    }
    with open(directory / MANIFEST_NAME, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write('\n')
    logger.debug(f"Saved checkpoint at step {step} to {directory}")
    return directory


def load_checkpoint(directory) -> Checkpoint:
    """
    Read a checkpoint directory.

    Raises:
        UsageError: If the manifest or a component file is missing
        ConfigError: If the stored config does not match the stored hash
    """
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    validate_file_exists(manifest_path, "Checkpoint manifest")
    with open(manifest_path, 'r', encoding='utf-8') as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise UsageError(f"Invalid JSON in {manifest_path}: {e}") from None

    config = load_train_config(directory / manifest.get('config', CONFIG_NAME))
    if config_hash(config) != manifest.get('config_hash'):
        raise ConfigError(f"config hash mismatch in {manifest_path}")
    arrays = {
        name: load_parameters(directory / filename)
        for name, filename in manifest['components'].items()
    }
    return Checkpoint(directory, manifest, config, arrays)
