import numpy as np
import pytest

from beamlab.scene import (
    ReverbSpec,
    SceneSpec,
    hearing_aid_geometry,
    render_scene,
    speech_shaped_noise,
    white_noise,
)

_ACCEPTANCE = pytest.StashKey[list]()


def hearing_aid_scene(seed, sample_rate=8000, duration_s=0.5, reverb=None, preroll_s=0.1,
                      source_kind="white", elevation=False, input_si_sdr_db=0.0):
    """Two gated noise sources 1-2.5 m from the 6-mic hearing-aid array."""
    rng = np.random.default_rng(seed)

    def position():
        azimuth = rng.uniform(0, 2 * np.pi)
        radius = rng.uniform(1.0, 2.5)
        z = rng.uniform(-0.3, 0.3) if elevation else 0.0
        return [radius * np.cos(azimuth), radius * np.sin(azimuth), z]

    positions = np.array([position(), position()])
    spec = SceneSpec(hearing_aid_geometry(), positions, sample_rate, input_si_sdr_db,
                     reverb=reverb, preroll_s=preroll_s)
    n = int(duration_s * sample_rate)
    generate = white_noise if source_kind == "white" else speech_shaped_noise
    target = generate(n, rng, sample_rate, 4.0)
    interferer = generate(n, rng, sample_rate, 4.0)
    return render_scene(spec, target, interferer)


def toy_scene(seed, duration_s=0.5, reflections=16):
    """8 kHz reverberant scene used for optimizer tests."""
    reverb = ReverbSpec(0.2, reflections, seed) if reflections else None
    return hearing_aid_scene(seed, duration_s=duration_s, reverb=reverb)


@pytest.fixture(scope="session")
def scene_factory():
    return toy_scene


@pytest.fixture
def acceptance(request):
    """Record one criterion result for the terminal summary."""
    results = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        results.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_ACCEPTANCE, [])
    if results:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(results):
            terminalreporter.write_line(line)
