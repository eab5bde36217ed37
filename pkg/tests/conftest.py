import numpy as np
import pytest

from eegnet import dataset as ds
from eegnet import synth


def build_prepared(windows_per_class=20, noise=0.25, seed=0, split_seed=0,
                   ratio=0.75, window=10, shuffle_labels=False):
    """In-memory synthetic prepared dataset (no file IO)."""
    spec = synth.default_spec(windows_per_class=windows_per_class, noise=noise,
                              seed=seed, window=window)
    _, recordings = synth.synth_dataset(spec)
    segments = []
    for rec in recordings:
        segments.extend(ds.segment_windows(rec, window=window))
    if shuffle_labels:
        rng = np.random.default_rng(split_seed + 1)
        labels = rng.permutation([s.label for s in segments])
        for seg, label in zip(segments, labels):
            seg.label = int(label)
    train_idx, test_idx = ds.split_indices(len(segments), ratio, split_seed)
    meta = {
        "window": window,
        "channels": 64,
        "mesh": [10, 11],
        "sample_rate": spec.sample_rate,
        "label_names": {str(i): c.name for i, c in enumerate(spec.classes)},
        "split": {"seed": split_seed, "ratio": ratio,
                  "train": train_idx.tolist(), "test": test_idx.tolist()},
        "skipped": [],
    }
    return ds.from_segments(segments, meta)


@pytest.fixture(scope="session")
def small_prepared():
    return build_prepared(windows_per_class=20, noise=0.25, seed=0, split_seed=0)
