"""Shopcore: a small storefront used by integration checks.

The package wires catalog loading, pricing, carts, checkout, and a
payments layer behind a plain Python API with no third party
dependencies.
"""

from .models import Product
from .catalog import Catalog

DEFAULT_CURRENCY = "EUR"
