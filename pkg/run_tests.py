#!/usr/bin/env python
"""
Test runner script for the spurious factor diagnostics package
Run this script to execute all unit tests
"""

import sys
import os
import unittest

from conftest import eigen_property_hook


def run_tests():
    """
    Discover and run all tests in the tests directory
    """

    # Add the repository root to the Python path
    root = os.path.dirname(os.path.abspath(__file__))
    sys.path.insert(0, root)

    # Find the tests directory
    test_dir = os.path.join(root, 'tests')

    # Discover and run tests with the eigenvalue property hook installed
    with eigen_property_hook() as violations:
        test_suite = unittest.defaultTestLoader.discover(test_dir, pattern='test_*.py', top_level_dir=root)
        test_runner = unittest.TextTestRunner(verbosity=2)
        result = test_runner.run(test_suite)

    if violations:
        print(f"l1/l2 eigenvalue sandwich violated {len(violations)} time(s): {violations[:5]}")
        return 1

    # Return exit code based on test results
    return 0 if result.wasSuccessful() else 1


if __name__ == "__main__":
    sys.exit(run_tests())
