"""
HomogenizedData on disk: ``<stem>.json`` holds the metadata and the tensors â,
b; ``<stem>.npz`` holds every cell field as a flat value array.
"""

import json
import logging
from pathlib import Path

import numpy as np

from spectral.exceptions import ResolutionMismatch
from spectral.fields import Grid, PeriodicField
from spectral.multiindex import MultiIndex

from .models import HomogenizedData

logger = logging.getLogger(__name__)

BUNDLE_VERSION = 1
# field map name -> (key arity, zero-mean tag)
FIELD_MAPS = {
    'N_first': (1, True),
    'N_second': (1, True),
    'g': (2, True),
    'g_tilde': (2, True),
    'G': (3, True),
    'G_tilde': (3, True),
    'F': (2, False),
}


def _stem(path):
    path = Path(path)
    return path.with_suffix('') if path.suffix in ('.json', '.npz') else path


def _key_label(key):
    if isinstance(key, MultiIndex):
        return key.label()
    return '|'.join(index.label() for index in key)


def _parse_key(label, arity):
    parts = tuple(MultiIndex.from_label(part) for part in label.split('|'))
    if len(parts) != arity:
        raise ValueError(f'Malformed bundle key {label!r}.')
    return parts[0] if arity == 1 else parts


def save_bundle(data, path):
    """Write ``data`` next to ``path`` (suffix ignored); returns the two file paths."""
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    grid = data.grid
    metadata = {
        'version': BUNDLE_VERSION,
        'order': data.order,
        'dim': data.dim,
        'grid': {'period': grid.period, 'shape': list(grid.shape), 'origin': grid.origin},
        'first_indices': [index.to_list() for index in data.first_indices],
        'second_indices': [index.to_list() for index in data.second_indices],
        'a_hat': data.a_hat.tolist(),
        'b': data.b.tolist(),
        'symmetric': data.symmetric,
        'diagnostics': data.diagnostics,
    }
    arrays = {}
    for name in FIELD_MAPS:
        for key, field in getattr(data, name).items():
            arrays[f'{name}:{_key_label(key)}'] = field.values.reshape(-1)
    json_path, npz_path = stem.with_suffix('.json'), stem.with_suffix('.npz')
    json_path.write_text(json.dumps(metadata, indent=2, sort_keys=True))
    np.savez_compressed(npz_path, **arrays)
    logger.info('Saved cell bundle to %s (+ %s, %d fields)', json_path, npz_path.name, len(arrays))
    return json_path, npz_path


def load_bundle(path):
    stem = _stem(path)
    metadata = json.loads(stem.with_suffix('.json').read_text())
    if metadata.get('version') != BUNDLE_VERSION:
        raise ResolutionMismatch(f'Unsupported bundle version {metadata.get("version")!r}.')
    grid = Grid(metadata['grid']['period'], tuple(metadata['grid']['shape']), metadata['grid']['origin'])
    maps = {name: {} for name in FIELD_MAPS}
    with np.load(stem.with_suffix('.npz')) as archive:
        for entry in archive.files:
            name, label = entry.split(':', 1)
            arity, zero_mean = FIELD_MAPS[name]
            values = archive[entry].reshape(grid.shape)
            maps[name][_parse_key(label, arity)] = PeriodicField(grid, values=values, zero_mean=zero_mean)
    logger.info('Loaded cell bundle %s', stem)
    return HomogenizedData(
        order=metadata['order'], dim=metadata['dim'],
        a_hat=np.asarray(metadata['a_hat'], dtype=float), b=np.asarray(metadata['b'], dtype=float),
        symmetric=metadata['symmetric'], diagnostics=metadata['diagnostics'], **maps,
    )
