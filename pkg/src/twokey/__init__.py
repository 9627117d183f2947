"""Split-key confidentiality for NFT-referenced data stores."""

__version__ = "0.1.0"
