import numpy as np
import pytest

from sphdk.geometry import SpherePoints


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_points(rng, n):
    return SpherePoints(rng.uniform(-np.pi, np.pi, n), np.arcsin(rng.uniform(-1, 1, n)))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def rotate(points, rot):
    xyz = points.xyz @ rot.T
    return SpherePoints(np.arctan2(xyz[:, 1], xyz[:, 0]), np.arcsin(np.clip(xyz[:, 2], -1, 1)))


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if not acceptance_log.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(acceptance_log.LINES, key=lambda s: int(s.split(":")[0].split()[1])):
        terminalreporter.write_line(line)
    for block in acceptance_log.DETAILS:
        terminalreporter.write_line("")
        for line in block.splitlines():
            terminalreporter.write_line(line)
