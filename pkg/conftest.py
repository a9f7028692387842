"""
Shared test setup: repository root on sys.path and a session-wide check that
every symmetric eigenvalue computation made during the tests returns a
spectrum obeying the l1/l2 sandwich.
"""

import os
import sys
from contextlib import contextmanager
from unittest import mock

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.abspath(__file__))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from src.rank_analyzer import l1_l2_sandwich  # noqa: E402


def _check_spectrum(values, violations):
    values = np.real(np.asarray(values))
    if values.size == 0:
        return
    for row in values.reshape(-1, values.shape[-1]):
        result = l1_l2_sandwich(np.clip(row, 0.0, None))
        if not result['holds']:
            violations.append(result)


@contextmanager
def eigen_property_hook():
    """
    Patch numpy.linalg.eigh and eigvalsh so every returned spectrum is checked

    Yields:
        List collecting the sandwich results that failed
    """
    violations = []
    original_eigh = np.linalg.eigh
    original_eigvalsh = np.linalg.eigvalsh

    def eigh(a, *args, **kwargs):
        result = original_eigh(a, *args, **kwargs)
        _check_spectrum(result[0], violations)
        return result

    def eigvalsh(a, *args, **kwargs):
        result = original_eigvalsh(a, *args, **kwargs)
        _check_spectrum(result, violations)
        return result

    with mock.patch('numpy.linalg.eigh', side_effect=eigh), \
            mock.patch('numpy.linalg.eigvalsh', side_effect=eigvalsh):
        yield violations


@pytest.fixture(scope='session', autouse=True)
def eigen_sandwich_check():
    with eigen_property_hook() as violations:
        yield violations
    assert not violations, f"l1/l2 eigenvalue sandwich violated: {violations[:5]}"
