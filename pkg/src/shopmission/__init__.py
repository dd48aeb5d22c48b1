"""Customer segmentation toolkit for receipt-level retail transaction data.

Three segmentations over loyalty-card transaction data: RFM (recency,
frequency, monetary value), PPS (purchased-product-structure category
ratios) and the two-stage shopping-mission segmentation that first
clusters baskets into archetypes and then clusters customers by their
archetype ratios.
"""

__version__ = "0.1.0"
