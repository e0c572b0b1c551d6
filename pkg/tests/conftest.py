import numpy as np
import pytest

from airwaykit.morphology import skeletonize
from airwaykit.synth import TreeSpec, generate_tree
from airwaykit.tree import build_tree
from airwaykit.volume import Geometry, VoxelGrid

# published challenge leaderboard: team -> (iou, dlr, dbr, precision, alr, amr,
# ovacc, seconds per scan)
PUBLISHED_RESULTS = {
    "MedibotTeam":      (0.9049, 0.9365, 0.9051, 0.9276, 0.0786, 0.0259, 0.9185, 43.79),
    "IMR":              (0.8770, 0.9510, 0.9312, 0.9014, 0.1089, 0.0299, 0.9152, 62.98),
    "Infervision":      (0.9016, 0.9201, 0.8825, 0.9399, 0.0639, 0.0425, 0.9110, 87.93),
    "Sanmed_AI":        (0.8903, 0.8838, 0.8354, 0.9203, 0.0854, 0.0404, 0.8825, 92.78),
    "Gexing":           (0.9087, 0.8603, 0.7765, 0.9518, 0.0499, 0.0466, 0.8743, 356.04),
    "DJ_92":            (0.8967, 0.8466, 0.7504, 0.9619, 0.0397, 0.0686, 0.8639, 223.66),
    "Riipl":            (0.9003, 0.8560, 0.7672, 0.9584, 0.0423, 0.0620, 0.8705, 531.52),
    "earth1is1flatten": (0.8221, 0.6986, 0.6043, 0.9325, 0.0906, 0.1538, 0.7644, 155.36),
    "dolphins":         (0.8838, 0.8556, 0.7627, 0.9365, 0.0682, 0.0580, 0.8597, 1500.12),
    "Junqiangmler":     (0.7488, 0.7853, 0.6853, 0.8200, 0.2188, 0.1313, 0.7599, 316.89),
}

PUBLISHED_ORDER = [
    "MedibotTeam", "IMR", "Infervision", "Sanmed_AI", "Gexing",
    "DJ_92", "Riipl", "earth1is1flatten", "dolphins", "Junqiangmler",
]


def make_grid(data, spacing=(1.0, 1.0, 1.0)) -> VoxelGrid:
    data = np.asarray(data)
    return VoxelGrid(Geometry(data.shape, spacing), data)


def straight_line_grid(n=20, dims=(24, 9, 9), spacing=(1.0, 1.0, 1.0)) -> VoxelGrid:
    data = np.zeros(dims, dtype=np.uint8)
    data[2:2 + n, 4, 4] = 1
    return make_grid(data, spacing)


@pytest.fixture(scope="session")
def y_tree():
    """Depth-1 bifurcating tube: mask, truth table, skeleton, branch graph."""
    spec = TreeSpec(depth=1, trunk_length=44.0, trunk_radius=2.0,
                    dims=(112, 112, 120))
    mask, truth = generate_tree(spec)
    skeleton = skeletonize(mask)
    tree = build_tree(skeleton, mask)
    return spec, mask, truth, skeleton, tree


@pytest.fixture(scope="session")
def deep_tree():
    """Depth-2 tree used by metric and corruption tests."""
    spec = TreeSpec(depth=2, trunk_length=48.0, trunk_radius=2.0,
                    radius_decay=0.85, dims=(234, 234, 170))
    mask, truth = generate_tree(spec)
    skeleton = skeletonize(mask)
    tree = build_tree(skeleton, mask)
    return spec, mask, truth, skeleton, tree
