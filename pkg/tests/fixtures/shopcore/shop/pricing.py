"""Discount selection and tax application for cart subtotals.

The engine picks the single best applicable discount rather than
stacking rules, then applies the flat tax rate on the reduced amount.
"""

from .models import PriceRule

TAX_RATE_PERCENT = 19


def standard_rules():
    """Default rule set: a volume discount plus a small flat promo."""
    return [
        PriceRule("volume", 10, threshold=10000),
        PriceRule("promo", 2),
    ]


def compute_discount(subtotal, rules):
    """Best single applicable discount for ``subtotal``, in minor units.

    Rules whose threshold exceeds the subtotal are skipped; among the
    rest the largest absolute cut wins.
    """
    best = 0
    for rule in rules:
        if not rule.applies_to(subtotal):
            continue
        cut = subtotal * rule.percent_off // 100
        if cut > best:
            best = cut
    return best


def apply_tax(amount):
    """Amount with the flat tax rate added, rounded down."""
    return amount + amount * TAX_RATE_PERCENT // 100


def final_price(subtotal, rules):
    """Discounted then taxed subtotal; the amount a customer pays."""
    discounted = subtotal - compute_discount(subtotal, rules)
    return apply_tax(discounted)
