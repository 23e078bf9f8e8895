import pytest

from s3headline.amr import parse_penman
from s3headline.rst import Document, Edu, parse_rst
from s3headline.s3graph import build_s3

BOY_AMR = "(d / desire-01~0 :ARG0 (b / boy~1) :ARG1 (b2 / believe-01~3 :ARG0 (g / girl~2) :ARG1 b))"
TWO_EDU_TREE = '{"relation": "Elaborate", "nuclearity": ["N", "S"], "children": [{"edu": 0}, {"edu": 1}]}'


def two_edu_doc():
    return Document(
        "d0",
        (Edu(0, "desires boy girl believe", ("desires", "boy", "girl", "believe")),
         Edu(1, "and so on", ("and", "so", "on"))),
        "boy desires girl",
        ("boy", "desires", "girl"),
    )


@pytest.fixture
def example():
    """The hand-built two-EDU document: (doc, tree, amrs, graph)."""
    doc = two_edu_doc()
    tree = parse_rst(TWO_EDU_TREE)
    amrs = [parse_penman(BOY_AMR, 0), parse_penman("(a / and)", 1)]
    return doc, tree, amrs, build_s3(doc, tree, amrs)


# ---------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion at the end of the run

CRITERIA: dict = {}


def record_criterion(number: int, title: str, passed: bool, detail: str = "") -> None:
    CRITERIA[number] = (title, passed, detail)
    print(f"criterion {number} {'PASS' if passed else 'FAIL'}: {title}" + (f" ({detail})" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        title, passed, detail = CRITERIA[number]
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
