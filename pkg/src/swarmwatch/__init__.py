"""swarmwatch: BitTorrent swarm monitoring and cross-swarm analytics."""

__version__ = "0.1.0"
