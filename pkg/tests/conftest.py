import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dakd.config import SynthConfig  # noqa: E402
from dakd.dataio import generate_synthetic, load_dataset  # noqa: E402

SMALL_SYNTH = SynthConfig(n_train_normal=12, n_train_anomalous=12, n_test_normal=6, n_test_anomalous=6,
                          frame_range=(480, 960), seed=3)


@pytest.fixture(scope="session")
def small_manifest(tmp_path_factory):
    return generate_synthetic(SMALL_SYNTH, tmp_path_factory.mktemp("small"))


@pytest.fixture(scope="session")
def small_data(small_manifest):
    return load_dataset(small_manifest)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
