"""
Test suite for the voltctl simulator.

Test Structure:
    - conftest.py: Shared fixtures and factories
    - test_models.py: Tests for Pydantic models
    - test_network.py, test_control.py, test_dynamics.py, test_scheduler.py,
      test_oracle.py, test_analysis.py: Tests for the numerical services
    - test_repositories.py: Tests for scenario and results files
    - test_harness.py: Tests for episodes and ensembles
    - test_cli.py: Tests for the command-line interface
    - test_acceptance.py: Long end-to-end runs (marked slow)

Running Tests:
    pytest                          # Run all tests
    pytest -m "not slow"            # Skip long runs
    pytest --cov=src                # With coverage
    pytest tests/test_oracle.py     # Run specific test file
"""
