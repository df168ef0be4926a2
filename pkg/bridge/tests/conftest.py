import json

import numpy as np
import pytest
from PIL import Image


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory):
    """Synthetic labeled images; enough structure for deterministic predictions."""
    d = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(0)
    labels = {}
    for i in range(4):
        arr = rng.integers(0, 255, size=(96, 96, 3), dtype=np.uint8)
        name = f"img{i:03d}.png"
        Image.fromarray(arr).save(d / name)
        labels[name] = i  # arbitrary class ids
    (d / "labels.json").write_text(json.dumps(labels))
    return d
