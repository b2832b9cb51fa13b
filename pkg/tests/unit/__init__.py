# ABOUTME: Package initialization for unit tests.
# ABOUTME: Makes the unit tests directory a proper Python package.
