"""Directed greybox fuzzing guided by interprocedural branch-choice distances.

Submodules: icfg (graph model and weighting), distance, scheduler, grammar,
cmdline, harness, campaign and cli.
"""

__version__ = "0.1.0"
