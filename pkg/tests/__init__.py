# Blab test suite
