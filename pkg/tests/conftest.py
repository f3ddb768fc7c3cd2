import pytest

from optbranch import branch_exchange as bx
from optbranch import opf
from optbranch.io import load_sce56


@pytest.fixture(scope="session")
def sce56():
    return load_sce56()


@pytest.fixture(scope="session")
def sce56_loop(sce56):
    """SCE-56 with tie (32,1) closed through a virtual copy of substation 1."""
    return bx.loop_for_tie(sce56, sce56.find_line(32, 1))


@pytest.fixture(scope="session")
def sce56_full(sce56_loop):
    joined, path = sce56_loop
    return opf.solve_opf(joined, roots=(path.start, path.end))


@pytest.fixture(scope="session")
def a2():
    return opf.OpfSettings(mode=opf.A2)
