import numpy as np
import pytest
from hypothesis import HealthCheck, assume, settings, strategies as st

from hdgmaxwell.families import CONSTRUCTIONS
from hdgmaxwell.mesh import MESH_BUILDERS

settings.register_profile(
    "hdg", deadline=None, max_examples=25, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("hdg")


def reference_vertices(shape):
    """Element 0 of the one-cell mesh of ``shape``."""
    return MESH_BUILDERS[shape](1).element_vertices(0)


def certified_pairs(kmax=3):
    """Every (tag, k) with an M-decomposition, k <= kmax."""
    out = []
    for tag, c in CONSTRUCTIONS.items():
        if c.decomposable:
            out += [(tag, k) for k in range(c.kmin, min(c.kmax, kmax) + 1)]
    return out


def random_field_coeffs(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def vector_eval(space, coeffs):
    return lambda p: np.einsum("qic,i->qc", space.values(p), coeffs)


def scalar_eval(space, coeffs):
    return lambda p: space.values(p) @ coeffs


@st.composite
def similar_elements(draw, shape):
    """A translated, rotated and scaled copy of the reference element."""
    v = reference_vertices(shape)
    angle = draw(st.floats(0.0, 2 * np.pi))
    scale = draw(st.floats(0.05, 20.0))
    shift = np.array([draw(st.floats(-50.0, 50.0)), draw(st.floats(-50.0, 50.0))])
    if shape == "square":
        angle = 0.0     # square families are built on axis-parallel cells
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return scale * v @ rot.T + shift


@st.composite
def random_triangles(draw):
    """Counterclockwise triangles with minimum angle bounded away from zero."""
    pts = draw(st.lists(st.floats(-3.0, 3.0), min_size=6, max_size=6))
    p = np.array(pts).reshape(3, 2)
    d1, d2 = p[1] - p[0], p[2] - p[0]
    area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
    if area < 0:
        p = p[[0, 2, 1]]
        area = -area
    edges = np.linalg.norm(p - np.roll(p, 1, axis=0), axis=1)
    assume(area > 0.05 * edges.max() ** 2)
    return p


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
