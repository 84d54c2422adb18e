import hashlib

import pytest

from politeia.codec import sign_record
from politeia.crypto import KeyPair


def key_for(name: str) -> KeyPair:
    return KeyPair.from_seed(hashlib.sha256(f"test:{name}".encode()).digest())


class Signer:
    """Deterministic test keys, one per node id."""

    def __init__(self) -> None:
        self.keys: dict[str, KeyPair] = {}

    def key(self, node: str) -> KeyPair:
        if node not in self.keys:
            self.keys[node] = key_for(node)
        return self.keys[node]

    def pub(self, node: str) -> bytes:
        return self.key(node).public_key

    def __call__(self, node: str, obj):
        return sign_record(self.key(node), obj)

    def registry(self) -> dict[str, bytes]:
        return {n: k.public_key for n, k in self.keys.items()}


@pytest.fixture
def signer() -> Signer:
    return Signer()


# -- acceptance report: one line per criterion in the terminal summary --------

_criteria: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        verdict = "PASS" if rep.passed else "FAIL"
        _criteria[number] = (title, verdict, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, verdict, seconds = _criteria[number]
        terminalreporter.write_line(f"[{verdict}] criterion {number}: {title} ({seconds:.1f}s)")
