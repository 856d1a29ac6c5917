import pytest


@pytest.fixture
def announce(capsys):
    """Print a line to the real terminal, bypassing capture."""

    def _announce(line: str) -> None:
        with capsys.disabled():
            print(line)

    return _announce
