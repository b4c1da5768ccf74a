"""
Parameter sweep over {N, λ, c, soft, hard}.

The labeled stream is generated once and every grid point runs a fresh
engine over it, so rows differ only by their parameters. Rows are sorted
by recall (desc), then false-positive rate (asc); ties keep grid order.
"""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from modules.config import EngineConfig
from modules.errors import SinkError
from modules.models import Action, Decision, Intensity, Reason, Transaction
from engines.detection_engine import DetectionEngine
from lab.evaluation import EvalReport, evaluate
from lab.generator import AttackSpec, GenParams, generate, inject_attacks

logger = logging.getLogger(__name__)

GRID_KEYS = ("window_size", "forgetting_factor", "interval_multiplier", "soft_threshold", "hard_threshold")


class SweepGrid(BaseModel):
    window_size: List[int] = Field(default_factory=lambda: [20])
    forgetting_factor: List[float] = Field(default_factory=lambda: [0.9])
    interval_multiplier: List[float] = Field(default_factory=lambda: [3.0])
    soft_threshold: List[int] = Field(default_factory=lambda: [5])
    hard_threshold: List[int] = Field(default_factory=lambda: [10])

    def points(self) -> Iterator[Dict[str, float]]:
        for values in itertools.product(*(getattr(self, k) for k in GRID_KEYS)):
            yield dict(zip(GRID_KEYS, values))


def labeled_stream(gen: GenParams, attacks: Sequence[AttackSpec]) -> List[Transaction]:
    stream = generate(gen)
    return inject_attacks(stream.transactions, attacks, gen.seed, stream.personas)


def upper_outlier_blocks(decisions: Sequence[Decision]) -> int:
    """Blocks caused by the interval while monitoring (not by an ongoing attack)."""
    return sum(
        1 for d in decisions
        if d.action == Action.BLOCK and Reason.UPPER_OUTLIER in d.reasons and Reason.UNDER_ATTACK not in d.reasons
    )


def attack_starts(decisions: Sequence[Decision]) -> int:
    return sum(1 for d in decisions if d.intensity == Intensity.ATTACK_START)


def run_point(cfg: EngineConfig, txns: Sequence[Transaction]) -> Tuple[List[Decision], EvalReport]:
    decisions = DetectionEngine(cfg).process_stream(txns)
    return decisions, evaluate(decisions, txns)


def _row(point: Dict[str, float], decisions: List[Decision], report: EvalReport) -> dict:
    return {
        **point,
        **report.model_dump(mode="json"),
        "upper_outlier_blocks": upper_outlier_blocks(decisions),
        "attack_starts": attack_starts(decisions),
    }


def sweep(
    grid: SweepGrid,
    gen: GenParams,
    attacks: Sequence[AttackSpec],
    base: Optional[EngineConfig] = None,
    max_workers: int = 1,
) -> pd.DataFrame:
    base = base or EngineConfig()
    configs: List[Tuple[Dict[str, float], EngineConfig]] = []
    for point in grid.points():
        try:
            configs.append((point, EngineConfig.model_validate({**base.model_dump(), **point})))
        except ValidationError as e:
            logger.warning(f"[lab] skipping grid point {point}: {e.errors()[0].get('msg')}")

    columns = list(GRID_KEYS) + list(EvalReport.model_fields) + ["upper_outlier_blocks", "attack_starts"]
    if not configs:
        return pd.DataFrame(columns=columns)

    txns = labeled_stream(gen, attacks)
    logger.info(f"[lab] sweeping {len(configs)} grid points over {len(txns)} transactions")

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(lambda pc: run_point(pc[1], txns), configs))
    else:
        results = [run_point(cfg, txns) for _, cfg in configs]

    rows = [_row(point, d, r) for (point, _), (d, r) in zip(configs, results)]
    table = pd.DataFrame(rows, columns=columns)
    return table.sort_values(
        ["recall", "false_positive_rate"], ascending=[False, True], kind="mergesort",
    ).reset_index(drop=True)


def write_sweep_table(table: pd.DataFrame, out_csv: Path) -> Tuple[Path, Path]:
    """CSV at out_csv and the same rows as a JSON array next to it."""
    out_csv = Path(out_csv)
    out_json = out_csv.with_suffix(".json")
    try:
        table.to_csv(out_csv, index=False)
        table.to_json(out_json, orient="records", indent=2)
    except OSError as e:
        raise SinkError(f"cannot write sweep table: {e}") from e
    return out_csv, out_json
