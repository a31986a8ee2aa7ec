"""Microbenchmarks of the runtime and a simulated swarm for end-to-end seeder runs."""

__all__ = [
    "micro",
    "report",
    "simpeers",
]


from . import micro, report, simpeers
