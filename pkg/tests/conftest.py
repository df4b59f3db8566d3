import numpy as np
import pytest

from depthobs.geometry import PixelGrid
from depthobs.scene import SceneModel, TrajectorySpec, generate_sequence


@pytest.fixture(scope="session")
def desk_grid():
    return PixelGrid.from_fov(160, 120, 50, 40)


@pytest.fixture(scope="session")
def small_grid():
    return PixelGrid.from_fov(16, 16, 50, 40)


@pytest.fixture(scope="session")
def noiseless_seq(desk_grid):
    return generate_sequence(desk_grid, SceneModel(), TrajectorySpec(n_frames=12), sigma=0.0)


@pytest.fixture(scope="session")
def frontoparallel_seq(desk_grid):
    """Tilt 0, constant v = (1, 0, 0): the constant-translation preset."""
    from depthobs.scene import constant_motion

    motions = constant_motion((1.0, 0.0, 0.0), fps=60.0, n_frames=8)
    return generate_sequence(
        desk_grid, SceneModel(tilt=0.0), TrajectorySpec(n_frames=8), sigma=0.0, motions=motions
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Collects one summary line per acceptance check; printed at the end."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def log(line):
        print(line)
        lines.append(line)

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=_criterion_order):
            terminalreporter.write_line(line)


def _criterion_order(line):
    head = line.split(":", 1)[0].split()
    return (0, int(head[1])) if head[0] == "CRITERION" else (1, line)
