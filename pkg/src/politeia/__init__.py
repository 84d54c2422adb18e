"""Hierarchical community governance: organization, deliberation, reputation,
currency and an auditable archive chain, plus a deterministic simulator."""

__version__ = "0.1.0"
