import pytest

from coughxai.cli import main
from coughxai.fixture import generate_fixture


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Seeded synthetic corpus (no CNN weights); returns the config path."""
    return generate_fixture(tmp_path_factory.mktemp("corpus"), seed=7, with_model=False)


@pytest.fixture(scope="session")
def run_dir(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["run", "--config", str(corpus), "--out", str(out)]) == 0
    return out


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
