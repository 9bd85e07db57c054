import numpy as np
import pytest

from lodrecon.geometry import Polygon2
from lodrecon.ingest import FootprintRecord, PointClass, PointCloud
from lodrecon.pipeline import reconstruct_building
from lodrecon.synth import generate_building


def square(x0=0.0, y0=0.0, side=1.0, holes=()):
    ext = [(x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side)]
    return Polygon2.from_coords(ext, holes)


def rect(x0, y0, x1, y1):
    return Polygon2.from_coords([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def synthetic_building(kind, idx=0, seed=7, sigma=0.05):
    """Footprint record, point cloud and truth of one generated building."""
    fp, roof, ground, truth = generate_building(idx, kind, np.random.default_rng(seed), sigma)
    cls = np.r_[np.full(len(roof), PointClass.BUILDING), np.full(len(ground), PointClass.GROUND)].astype(np.int8)
    return FootprintRecord(truth["id"], fp), PointCloud(np.vstack([roof, ground]), cls), truth


def synthetic_model(kind, idx=0, seed=7, sigma=0.05, **kw):
    fp, cloud, _ = synthetic_building(kind, idx, seed, sigma)
    return reconstruct_building(fp, cloud, **kw)


@pytest.fixture
def unit_square():
    return square()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
