"""Synthetic receipt generator with planted ground truth.

Each customer draws a mission profile (distribution over basket archetypes)
and an RFM persona (visit count, timing and spend scale). Each basket draws
an archetype, then category spends from a Dirichlet perturbation of the
archetype mixture and a total value from the archetype's log-normal value
distribution. Deterministic given the seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np


class SyngenError(Exception):
    pass


@dataclass(frozen=True)
class Archetype:
    name: str
    mixture: tuple  # category spend shares, unit sum
    value_mu: float  # log-normal location of basket value
    value_sigma: float

    def __post_init__(self):
        if abs(sum(self.mixture) - 1.0) > 1e-9:
            raise SyngenError(f"archetype {self.name!r} mixture must sum to 1")
        if any(m < 0 for m in self.mixture):
            raise SyngenError(f"archetype {self.name!r} mixture has negatives")
        if self.value_sigma < 0:
            raise SyngenError(f"archetype {self.name!r} sigma must be >= 0")


@dataclass(frozen=True)
class MissionProfile:
    name: str
    archetype_weights: tuple  # distribution over archetypes, unit sum

    def __post_init__(self):
        if abs(sum(self.archetype_weights) - 1.0) > 1e-9:
            raise SyngenError(
                f"mission {self.name!r} weights must sum to 1"
            )


@dataclass(frozen=True)
class RfmPersona:
    name: str
    baskets_range: tuple  # inclusive (lo, hi) baskets per customer
    active_fraction: float = 1.0  # visits land in the first fraction of the window
    value_scale: float = 1.0

    def __post_init__(self):
        lo, hi = self.baskets_range
        if lo < 1 or hi < lo:
            raise SyngenError(f"persona {self.name!r} has bad baskets range")
        if not 0 < self.active_fraction <= 1:
            raise SyngenError(
                f"persona {self.name!r} active_fraction must be in (0, 1]"
            )


@dataclass
class GeneratorConfig:
    n_categories: int
    archetypes: list
    missions: list
    personas: list
    n_customers: int
    window_start: date
    window_end: date
    seed: int
    mission_weights: list = field(default_factory=list)
    persona_weights: list = field(default_factory=list)
    concentration: float = 80.0  # Dirichlet concentration of per-basket noise

    def __post_init__(self):
        if self.n_categories < 2:
            raise SyngenError("need at least 2 categories")
        for a in self.archetypes:
            if len(a.mixture) != self.n_categories:
                raise SyngenError(
                    f"archetype {a.name!r} mixture length != n_categories"
                )
        for m in self.missions:
            if len(m.archetype_weights) != len(self.archetypes):
                raise SyngenError(
                    f"mission {m.name!r} weights length != n_archetypes"
                )
        if self.window_end <= self.window_start:
            raise SyngenError("window end must be after start")
        if not self.mission_weights:
            self.mission_weights = [1 / len(self.missions)] * len(self.missions)
        if not self.persona_weights:
            self.persona_weights = [1 / len(self.personas)] * len(self.personas)
        if self.concentration <= 0:
            raise SyngenError("concentration must be positive")


@dataclass
class GroundTruth:
    basket_archetype: dict  # basket_id -> archetype name
    customer_mission: dict  # customer_id -> mission name
    customer_persona: dict  # customer_id -> persona name


def default_config(
    n_customers: int = 1000,
    seed: int = 0,
    n_categories: int = 8,
    baskets_range: tuple = (8, 16),
    concentration: float = 80.0,
) -> GeneratorConfig:
    """Planted-structure default: 2 general archetypes at distinct value
    levels plus 4 focused ones, 3 mission profiles, 3 RFM personas."""
    uniform = tuple(1 / n_categories for _ in range(n_categories))

    def focused(idx):
        mix = [0.1 / (n_categories - 1)] * n_categories
        mix[idx] = 0.9
        total = sum(mix)
        return tuple(m / total for m in mix)

    archetypes = [
        Archetype("general-small", uniform, np.log(8.0), 0.15),
        Archetype("general-big", uniform, np.log(60.0), 0.15),
        Archetype("focused-0", focused(0), np.log(15.0), 0.2),
        Archetype("focused-1", focused(1), np.log(15.0), 0.2),
        Archetype("focused-2", focused(2), np.log(15.0), 0.2),
        Archetype("focused-3", focused(3), np.log(15.0), 0.2),
    ]
    missions = [
        MissionProfile("general", (0.5, 0.5, 0.0, 0.0, 0.0, 0.0)),
        MissionProfile("focused", (0.0, 0.0, 0.25, 0.25, 0.25, 0.25)),
        MissionProfile("mixed", (0.25, 0.25, 0.125, 0.125, 0.125, 0.125)),
    ]
    # Personas differ in visit frequency and timing only; a value scale
    # would blur the basket-value axis that separates the general archetypes.
    lo, hi = baskets_range
    occasional = (max(1, lo // 2), max(2, hi // 2))
    personas = [
        RfmPersona("frequent", baskets_range, 1.0, 1.0),
        RfmPersona("occasional", occasional, 1.0, 1.0),
        RfmPersona("lapsed", occasional, 0.35, 1.0),
    ]
    return GeneratorConfig(
        n_categories=n_categories,
        archetypes=archetypes,
        missions=missions,
        personas=personas,
        n_customers=n_customers,
        window_start=date(2025, 1, 1),
        window_end=date(2025, 3, 31),
        seed=seed,
        concentration=concentration,
    )


def generate(config: GeneratorConfig, out_dir) -> GroundTruth:
    """Emit receipts.csv, categories.csv and the two ground-truth files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)

    category_ids = [f"K{i:02d}" for i in range(config.n_categories)]
    window_days = (config.window_end - config.window_start).days

    truth = GroundTruth({}, {}, {})
    receipt_rows = []

    for ci in range(config.n_customers):
        customer_id = f"c{ci:05d}"
        mission = config.missions[
            rng.choice(len(config.missions), p=config.mission_weights)
        ]
        persona = config.personas[
            rng.choice(len(config.personas), p=config.persona_weights)
        ]
        truth.customer_mission[customer_id] = mission.name
        truth.customer_persona[customer_id] = persona.name

        lo, hi = persona.baskets_range
        n_baskets = int(rng.integers(lo, hi + 1))
        active_days = max(1, int(window_days * persona.active_fraction))
        day_offsets = sorted(rng.integers(0, active_days + 1, size=n_baskets))

        for bi, day in enumerate(day_offsets):
            basket_id = f"b{ci:05d}_{bi:03d}"
            arch_idx = rng.choice(
                len(config.archetypes), p=mission.archetype_weights
            )
            archetype = config.archetypes[arch_idx]
            truth.basket_archetype[basket_id] = archetype.name

            total = persona.value_scale * rng.lognormal(
                archetype.value_mu, archetype.value_sigma
            )
            mixture = np.asarray(archetype.mixture)
            if np.isinf(config.concentration):
                # zero noise: ratios are exactly the archetype mixture
                shares = mixture.copy()
            else:
                alpha = config.concentration * mixture
                # Dirichlet needs strictly positive alphas; zero-mixture
                # categories stay exactly zero.
                active = alpha > 0
                shares = np.zeros(config.n_categories)
                shares[active] = rng.dirichlet(alpha[active])
            spend_cents = np.round(shares * total * 100).astype(int)
            if spend_cents.sum() <= 0:
                spend_cents[int(np.argmax(shares))] = 100
            ts = datetime.combine(
                config.window_start + timedelta(days=int(day)),
                datetime.min.time(),
            ) + timedelta(hours=int(rng.integers(8, 21)))
            for j, cents in enumerate(spend_cents):
                if cents <= 0:
                    continue
                receipt_rows.append(
                    [
                        basket_id,
                        customer_id,
                        ts.isoformat(),
                        f"prod_{category_ids[j]}",
                        category_ids[j],
                        f"{cents // 100}.{cents % 100:02d}",
                        1,
                        int(rng.random() < 0.1),
                    ]
                )

    with open(out_dir / "receipts.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            [
                "basket_id",
                "customer_id",
                "timestamp",
                "product_id",
                "category_id",
                "unit_price",
                "quantity",
                "promo_flag",
            ]
        )
        writer.writerows(receipt_rows)

    with open(out_dir / "categories.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["category_id", "label"])
        for cid in category_ids:
            writer.writerow([cid, f"Category {cid}"])

    with open(
        out_dir / "ground_truth_baskets.csv", "w", newline="", encoding="utf-8"
    ) as f:
        writer = csv.writer(f)
        writer.writerow(["basket_id", "archetype"])
        for bid in sorted(truth.basket_archetype):
            writer.writerow([bid, truth.basket_archetype[bid]])

    with open(
        out_dir / "ground_truth_customers.csv", "w", newline="", encoding="utf-8"
    ) as f:
        writer = csv.writer(f)
        writer.writerow(["customer_id", "mission", "persona"])
        for cid in sorted(truth.customer_mission):
            writer.writerow(
                [cid, truth.customer_mission[cid], truth.customer_persona[cid]]
            )

    return truth


def load_truth(out_dir) -> GroundTruth:
    out_dir = Path(out_dir)
    truth = GroundTruth({}, {}, {})
    with open(out_dir / "ground_truth_baskets.csv", newline="") as f:
        for row in csv.DictReader(f):
            truth.basket_archetype[row["basket_id"]] = row["archetype"]
    with open(out_dir / "ground_truth_customers.csv", newline="") as f:
        for row in csv.DictReader(f):
            truth.customer_mission[row["customer_id"]] = row["mission"]
            truth.customer_persona[row["customer_id"]] = row["persona"]
    return truth
