"""
Descriptive command line exit codes, for improved code readability

These codes are a stable contract for CI harnesses that drive the lab.
"""

EXIT_0_SUCCESS = 0
EXIT_1_CONFIG_ERROR = 1
EXIT_2_INVARIANT_VIOLATION = 2
EXIT_3_NON_CONVERGENCE = 3
