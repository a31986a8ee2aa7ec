"""A small seeder that serves one memory-mapped file to many peers.

Each peer gets a reader and a writer task on the event loop of `hybrid`; chunks that
are not in the page cache are written from a thread pool instead.
"""

__all__ = [
    "choke",
    "config",
    "content",
    "peer",
    "server",
    "wire",
]


from . import choke, config, content, peer, server, wire
