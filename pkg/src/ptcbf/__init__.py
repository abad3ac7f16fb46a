"""Prescribed-time CLF / ZCBF quadratic-program control for timed reach-avoid tasks."""
