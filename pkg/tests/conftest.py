import numpy as np
import pytest

from skinretarget import quaternion as quat
from skinretarget.io.synth import SceneSpec, generate_scene
from skinretarget.skeleton import Motion, Skeleton


def random_unit_quats(rng, shape):
    return quat.quat_normalize(rng.normal(size=tuple(shape) + (4,)))


def chain_skeleton(n=2, step=(0.0, 1.0, 0.0)):
    """Straight chain of ``n`` joints; the root sits at the origin."""
    offsets = np.zeros((n, 3))
    offsets[1:] = step
    return Skeleton([f"j{i}" for i in range(n)], [-1] + list(range(n - 1)), offsets)


def still_motion(skeleton, n_frames=1, root=(0.0, 0.0, 0.0)):
    g = np.zeros((n_frames, 4))
    g[:, :3] = root
    return Motion(quat.identity((n_frames, skeleton.n_joints)), g)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def arm_sweep_scene():
    return generate_scene(SceneSpec("arm_sweep", n_frames=12))


@pytest.fixture(scope="session")
def slim_to_fat_scene():
    return generate_scene(SceneSpec("slim_to_fat", n_frames=12))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
