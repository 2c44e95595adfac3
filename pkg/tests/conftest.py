import copy
import json

import pytest

from nonholo.scenefile import load_scene, read_scene_text, scene_from_dict


def scene_dict(name="heisenberg"):
    return json.loads(read_scene_text(name))


def build(raw):
    return scene_from_dict(copy.deepcopy(raw))


@pytest.fixture(scope="session")
def heis():
    return load_scene("heisenberg")


@pytest.fixture(scope="session")
def golden(heis):
    return heis.scene


@pytest.fixture(scope="session")
def golden_field(heis):
    return heis.field()


@pytest.fixture(scope="session")
def integrable():
    return load_scene("integrable")


@pytest.fixture(scope="session")
def vertical():
    return load_scene("vertical_circle")


@pytest.fixture(scope="session")
def flipped():
    return load_scene("sign_flipped")


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def record(request):
    """Append one criterion line to the end-of-run summary."""
    lines = request.config.acceptance_lines

    def add(line):
        lines.append(line)
        print(line)
    return add


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
