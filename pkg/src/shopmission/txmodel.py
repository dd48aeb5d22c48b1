"""Transaction data model: categories, purchased lines, baskets, customer histories.

Ingestion reads receipt-level CSV files, validates them against the category
table and the analysis window, and produces an immutable dataset that all
downstream feature computations share.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from datetime import date, datetime
from decimal import Decimal, InvalidOperation

RECEIPT_COLUMNS = [
    "basket_id",
    "customer_id",
    "timestamp",
    "product_id",
    "category_id",
    "unit_price",
    "quantity",
    "promo_flag",
]

CATEGORY_COLUMNS = ["category_id", "label"]


class TxError(Exception):
    """Base error for transaction ingestion and validation."""


class ParseError(TxError):
    def __init__(self, message, line_no=None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class ValidationError(TxError):
    pass


@dataclass(frozen=True)
class Category:
    id: str
    label: str


@dataclass(frozen=True)
class PurchasedLine:
    product_id: str
    category_id: str
    unit_price_cents: int  # minor currency units, exact
    quantity: int
    promo_flag: bool

    @property
    def value_cents(self) -> int:
        return self.unit_price_cents * self.quantity


@dataclass(frozen=True)
class Basket:
    basket_id: str
    customer_id: str
    timestamp: datetime
    lines: tuple

    @property
    def value_cents(self) -> int:
        return sum(line.value_cents for line in self.lines)

    @property
    def value(self) -> float:
        return self.value_cents / 100.0


@dataclass(frozen=True)
class CustomerHistory:
    customer_id: str
    baskets: tuple

    @property
    def value_cents(self) -> int:
        return sum(b.value_cents for b in self.baskets)


@dataclass(frozen=True)
class AnalysisWindow:
    start: date
    end: date

    def __post_init__(self):
        if self.end <= self.start:
            raise ValidationError(
                f"window end {self.end} must be after start {self.start}"
            )

    @property
    def length_days(self) -> int:
        return (self.end - self.start).days

    def contains(self, ts: datetime) -> bool:
        return self.start <= ts.date() <= self.end


@dataclass
class Dataset:
    categories: dict  # category_id -> Category
    baskets: list  # list of Basket, ordered by basket_id
    window: AnalysisWindow
    dropped_outside_window: int = 0
    _fingerprint: str = field(default="", repr=False)

    @property
    def n_baskets(self) -> int:
        return len(self.baskets)

    @property
    def category_ids(self) -> list:
        """Category axis order used by every feature vector: sorted ids."""
        return sorted(self.categories)

    @property
    def total_value_cents(self) -> int:
        return sum(b.value_cents for b in self.baskets)

    def fingerprint(self) -> str:
        """Stable content hash, independent of ingestion order."""
        if not self._fingerprint:
            h = hashlib.sha256()
            for b in sorted(self.baskets, key=lambda x: x.basket_id):
                h.update(
                    f"{b.basket_id},{b.customer_id},{b.timestamp.isoformat()},{b.value_cents}\n".encode()
                )
            for cid in self.category_ids:
                h.update(f"{cid}\n".encode())
            self._fingerprint = h.hexdigest()
        return self._fingerprint


def _parse_money_cents(text: str, line_no: int) -> int:
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise ParseError(f"bad money value {text!r}", line_no) from None
    cents = value * 100
    if cents != cents.to_integral_value():
        raise ParseError(
            f"money value {text!r} has sub-cent precision", line_no
        )
    return int(cents)


def _parse_timestamp(text: str, line_no: int) -> datetime:
    try:
        # Dates without time-of-day default to midnight.
        return datetime.fromisoformat(text)
    except ValueError:
        raise ParseError(f"bad timestamp {text!r}", line_no) from None


def read_categories(path) -> dict:
    categories = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CATEGORY_COLUMNS:
            raise ParseError(
                f"category table header must be {CATEGORY_COLUMNS}, got {reader.fieldnames}"
            )
        for line_no, row in enumerate(reader, start=2):
            cid = row["category_id"]
            if cid in categories:
                raise ValidationError(f"duplicate category id {cid!r}")
            categories[cid] = Category(id=cid, label=row["label"])
    if len(categories) < 2:
        raise ValidationError(
            f"need at least 2 categories, got {len(categories)}"
        )
    return categories


def ingest_receipts(path, category_table, window: AnalysisWindow) -> Dataset:
    """Read a receipts CSV, group rows into baskets, validate everything.

    Rows whose basket falls outside the window are dropped (counted in
    ``dropped_outside_window``). Unknown categories, malformed values,
    zero-value baskets and conflicting customer ids are hard errors.
    """
    categories = read_categories(category_table)

    lines_by_basket = {}
    basket_meta = {}  # basket_id -> (customer_id, timestamp)
    unknown_category_rows = []

    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != RECEIPT_COLUMNS:
            raise ParseError(
                f"receipts header must be {RECEIPT_COLUMNS}, got {reader.fieldnames}"
            )
        for line_no, row in enumerate(reader, start=2):
            if any(row.get(c) in (None, "") for c in RECEIPT_COLUMNS):
                raise ParseError("missing column value", line_no)
            bid = row["basket_id"]
            cid = row["customer_id"]
            ts = _parse_timestamp(row["timestamp"], line_no)
            price = _parse_money_cents(row["unit_price"], line_no)
            if price < 0:
                raise ValidationError(
                    f"line {line_no}: negative unit_price in basket {bid!r}"
                )
            try:
                qty = int(row["quantity"])
            except ValueError:
                raise ParseError(
                    f"bad quantity {row['quantity']!r}", line_no
                ) from None
            if qty < 1:
                raise ValidationError(
                    f"line {line_no}: quantity must be >= 1 in basket {bid!r}"
                )
            if row["promo_flag"] not in ("0", "1"):
                raise ParseError(
                    f"promo_flag must be 0 or 1, got {row['promo_flag']!r}",
                    line_no,
                )
            if row["category_id"] not in categories:
                unknown_category_rows.append((line_no, row["category_id"]))
                continue
            if bid in basket_meta:
                prev_cid, prev_ts = basket_meta[bid]
                if prev_cid != cid:
                    raise ValidationError(
                        f"line {line_no}: basket {bid!r} has conflicting "
                        f"customer ids {prev_cid!r} and {cid!r}"
                    )
            else:
                basket_meta[bid] = (cid, ts)
                lines_by_basket[bid] = []
            lines_by_basket[bid].append(
                PurchasedLine(
                    product_id=row["product_id"],
                    category_id=row["category_id"],
                    unit_price_cents=price,
                    quantity=qty,
                    promo_flag=row["promo_flag"] == "1",
                )
            )

    if unknown_category_rows:
        shown = ", ".join(
            f"line {ln} ({cid!r})" for ln, cid in unknown_category_rows[:10]
        )
        raise ValidationError(
            f"{len(unknown_category_rows)} rows reference unknown categories: {shown}"
        )

    baskets = []
    dropped = 0
    for bid in sorted(lines_by_basket):
        customer_id, ts = basket_meta[bid]
        basket = Basket(
            basket_id=bid,
            customer_id=customer_id,
            timestamp=ts,
            lines=tuple(lines_by_basket[bid]),
        )
        if not window.contains(ts):
            dropped += 1
            continue
        if basket.value_cents <= 0:
            raise ValidationError(
                f"basket {bid!r} has non-positive total value"
            )
        baskets.append(basket)

    return Dataset(
        categories=categories,
        baskets=baskets,
        window=window,
        dropped_outside_window=dropped,
    )


def build_histories(baskets) -> dict:
    """Partition baskets by customer id -> {customer_id: CustomerHistory}."""
    grouped = {}
    for basket in baskets:
        grouped.setdefault(basket.customer_id, []).append(basket)
    return {
        cid: CustomerHistory(customer_id=cid, baskets=tuple(bs))
        for cid, bs in sorted(grouped.items())
    }
