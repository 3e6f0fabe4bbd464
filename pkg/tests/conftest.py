import pytest

from linkrisk.datagen import SynthConfig, synth_population
from linkrisk.model import CANDIDATE, QUERY, Document, Profile


def doc(day: float, text: str = "hello there", community: str = "misc") -> Document:
    return Document(int(day * 86400), community, text)


def profile(pid: str, side: str = QUERY, texts=(), community: str = "misc") -> Profile:
    return Profile(pid, side, tuple(doc(i, t, community) for i, t in enumerate(texts)))


@pytest.fixture(scope="session")
def small_population():
    return synth_population(SynthConfig(seed=11, n_matchable=40, n_candidate_distractors=30, n_query_distractors=10))


__all__ = ["doc", "profile", "QUERY", "CANDIDATE"]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    if not mod or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
