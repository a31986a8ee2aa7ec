"""Hybrid cooperative/preemptive tasks on one event loop and a few thread pools.

Tasks are :code:`async def` bodies that start *attached* to the event loop, where
they interleave only at explicit suspension points, and can *detach* to a thread
pool for code that blocks.
"""

__all__ = [
    "disk",
    "io",
    "scheduler",
    "sync",
]


from . import disk, io, scheduler, sync
