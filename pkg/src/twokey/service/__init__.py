"""HTTP service around the parties, and matching clients."""

from .app import Node, build_node, create_app
from .client import LedgerClient, ServiceClient, XClient, YClient

__all__ = ["LedgerClient", "Node", "ServiceClient", "XClient", "YClient", "build_node", "create_app"]
