#!/usr/bin/env python3
"""
Pipeline errors must survive pickling, since optimizer runs raise them in worker processes.
"""

import pickle

import numpy as np
import pytest

from errors import (CapacityExceeded, ChannelMismatch, ConfigMismatch, DegenerateGeometry, DegenerateScale,
                    DimensionMismatch, KTooLarge, MissingJoi, NonFiniteLoss, ObjectiveFailure, ParseError,
                    PipelineError, SchemaError)

ERRORS = [
    DegenerateScale(1e-12),
    CapacityExceeded("R-wrist", 4, 3),
    ConfigMismatch(7, 5),
    ParseError("Unexpected token", 12),
    ChannelMismatch(3, 9, 8),
    MissingJoi(["neck", "head"]),
    DegenerateGeometry("Reference point cloud has no spread"),
    DimensionMismatch(120, 105),
    NonFiniteLoss(4, float("inf")),
    KTooLarge(5, 3),
    SchemaError("bench", "joints[2].axis", "expected 3 floats"),
    ObjectiveFailure(np.array([0.5, -1.0]), RuntimeError("solver crashed")),
]


@pytest.mark.parametrize("error", ERRORS, ids=lambda e: type(e).__name__)
def test_errors_survive_pickling(error):
    again = pickle.loads(pickle.dumps(error))
    assert type(again) is type(error)
    assert isinstance(again, PipelineError)
    assert str(again) == str(error)


def test_structured_fields_survive_pickling():
    failure = pickle.loads(pickle.dumps(ObjectiveFailure(np.array([0.5, -1.0]), RuntimeError("solver crashed"))))
    assert np.array_equal(failure.point, [0.5, -1.0])
    assert isinstance(failure.cause, RuntimeError)
    assert str(failure.cause) == "solver crashed"

    mismatch = pickle.loads(pickle.dumps(DimensionMismatch(120, 105)))
    assert (mismatch.expected, mismatch.got) == (120, 105)
    assert pickle.loads(pickle.dumps(ParseError("bad", 7))).line == 7
