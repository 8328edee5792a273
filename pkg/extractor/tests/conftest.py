import numpy as np
import pytest

embex = pytest.importorskip("embex")


def _write_image(path, seed: int, size=(32, 24)) -> None:
    from PIL import Image

    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    Image.fromarray(pixels, mode="RGB").save(path)


@pytest.fixture
def image_tree(tmp_path):
    """Ten images over two identities, subdirectories 'ida' and 'idb'."""
    root = tmp_path / "images"
    for name, base in (("ida", 0), ("idb", 100)):
        folder = root / name
        folder.mkdir(parents=True)
        for i in range(5):
            _write_image(folder / f"img_{i}.png", seed=base + i)
    return root


@pytest.fixture
def write_image():
    return _write_image
