# ABOUTME: Package initialization for the test suite.
# ABOUTME: Makes the tests directory a proper Python package.
