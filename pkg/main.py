#!/usr/bin/env python3
"""
Field Status Sampling Toolkit
Main entry point for analytic, simulation and optimization runs.
"""

from src.cli.experiment_cli import main

if __name__ == "__main__":
    main()
