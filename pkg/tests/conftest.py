import sys

import numpy as np
import pytest

from qoiscore.classifier import ClassModel
from qoiscore.indicators import IndicatorBatch, LabeledSample


def make_sample(features, label, label_string=None):
    return LabeledSample.create(features, label, label_string)


def make_batch(cid, rows):
    """rows: iterable of (features, label[, label_string])."""
    return IndicatorBatch(cid, tuple(make_sample(*row) for row in rows))


@pytest.fixture
def two_class_model():
    # well separated 2-D classes "a" at the origin and "b" at (10, 0)
    return ClassModel.from_parameters(["a", "b"], [[0.0, 0.0], [10.0, 0.0]], np.eye(2))


@pytest.fixture
def tier_model():
    labels = ["ShadyRAT", "Zeus", "Avzhan"]
    return ClassModel.from_parameters(labels, [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]], np.eye(2))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
