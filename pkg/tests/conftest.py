from __future__ import annotations

import os
import sys

import pytest

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from lib.levelset import CircleLevelSet, cut_topology  # noqa: E402
from lib.mesh import build_level  # noqa: E402
from lib.spaces import combined_dof_map  # noqa: E402
from lib.studies import BASE_BOX  # noqa: E402


@pytest.fixture(scope="session")
def circle_level0():
    mesh = build_level(BASE_BOX, 8, 0)
    topo = cut_topology(CircleLevelSet(), mesh)
    return topo, combined_dof_map(topo)
