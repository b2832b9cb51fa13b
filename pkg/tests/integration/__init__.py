# ABOUTME: Package initialization for integration tests.
# ABOUTME: Makes the integration tests directory a proper Python package.
