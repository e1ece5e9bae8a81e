"""Corpus statistics: length, strategy, verbosity, and domain distributions.

`compute_stats` is a pure fold over annotations, so partial reports merge
associatively. Emission is byte-deterministic for CSV and JSON; each facet
also renders as a small self-contained SVG bar chart.
"""

from __future__ import annotations

import json
import xml.sax.saxutils as saxutils
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .annotator import AnnotationSet
from .errors import UnwritablePath

DEFAULT_BUCKET_WIDTH = 500
TOP_STRATEGIES = 20

FORMATS = ("csv", "json", "svg")


@dataclass
class StatsReport:
    n_records: int = 0
    bucket_width: int = DEFAULT_BUCKET_WIDTH
    length_histogram: dict[int, int] = field(default_factory=dict)
    strategy_frequency: list[tuple[str, int]] = field(default_factory=list)
    unique_strategy_histogram: dict[int, int] = field(default_factory=dict)
    verbosity_histogram: dict[int, int] = field(default_factory=dict)
    domain_distribution: list[tuple[str, int, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "bucket_width": self.bucket_width,
            "length_histogram": {str(k): v for k, v in sorted(self.length_histogram.items())},
            "strategy_frequency": [[name, count] for name, count in self.strategy_frequency],
            "unique_strategy_histogram": {
                str(k): v for k, v in sorted(self.unique_strategy_histogram.items())
            },
            "verbosity_histogram": {
                str(k): v for k, v in sorted(self.verbosity_histogram.items())
            },
            "domain_distribution": [
                [name, count, percent] for name, count, percent in self.domain_distribution
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StatsReport":
        return cls(
            n_records=data["n_records"],
            bucket_width=data["bucket_width"],
            length_histogram={int(k): v for k, v in data["length_histogram"].items()},
            strategy_frequency=[(name, count) for name, count in data["strategy_frequency"]],
            unique_strategy_histogram={
                int(k): v for k, v in data["unique_strategy_histogram"].items()
            },
            verbosity_histogram={int(k): v for k, v in data["verbosity_histogram"].items()},
            domain_distribution=[
                (name, count, percent) for name, count, percent in data["domain_distribution"]
            ],
        )


def _domain_rows(counts: Counter, total: int) -> list[tuple[str, int, float]]:
    rows = []
    for name, count in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
        rows.append((name, count, round(100.0 * count / total, 2)))
    return rows


def compute_stats(
    annotations: Sequence[AnnotationSet], bucket_width: int = DEFAULT_BUCKET_WIDTH
) -> StatsReport:
    """Exact counts over an annotated corpus.

    Strategy frequencies sort by descending count, ties by name. Verbosity
    buckets cover the full 0..10 range even when empty so histogram sums
    always equal n_records.
    """
    if bucket_width < 1:
        raise ValueError("bucket_width must be >= 1")
    lengths: Counter = Counter()
    strategies: Counter = Counter()
    unique_counts: Counter = Counter()
    verbosity: Counter = Counter({score: 0 for score in range(11)})
    domains: Counter = Counter()
    for annotation in annotations:
        lengths[(annotation.think_token_len // bucket_width) * bucket_width] += 1
        strategies.update(annotation.strategies)
        unique_counts[annotation.strategy_count] += 1
        verbosity[annotation.verbosity] += 1
        domains[annotation.discipline] += 1

    n = len(annotations)
    return StatsReport(
        n_records=n,
        bucket_width=bucket_width,
        length_histogram=dict(lengths),
        strategy_frequency=sorted(strategies.items(), key=lambda kv: (-kv[1], kv[0])),
        unique_strategy_histogram=dict(unique_counts),
        verbosity_histogram=dict(verbosity),
        domain_distribution=_domain_rows(domains, n) if n else [],
    )


def merge_stats(left: StatsReport, right: StatsReport) -> StatsReport:
    """Element-wise sum of two reports over the same bucket width."""
    if left.bucket_width != right.bucket_width:
        raise ValueError("cannot merge reports with different bucket widths")
    lengths = Counter(left.length_histogram) + Counter(right.length_histogram)
    strategies = Counter(dict(left.strategy_frequency)) + Counter(dict(right.strategy_frequency))
    uniques = Counter(left.unique_strategy_histogram) + Counter(right.unique_strategy_histogram)
    verbosity = Counter({score: 0 for score in range(11)})
    verbosity.update(left.verbosity_histogram)
    verbosity.update(right.verbosity_histogram)
    domain_counts = Counter(
        {name: count for name, count, _ in left.domain_distribution}
    ) + Counter({name: count for name, count, _ in right.domain_distribution})
    n = left.n_records + right.n_records
    return StatsReport(
        n_records=n,
        bucket_width=left.bucket_width,
        length_histogram=dict(lengths),
        strategy_frequency=sorted(strategies.items(), key=lambda kv: (-kv[1], kv[0])),
        unique_strategy_histogram=dict(uniques),
        verbosity_histogram=dict(verbosity),
        domain_distribution=_domain_rows(domain_counts, n) if n else [],
    )


def _csv_text(report: StatsReport) -> str:
    lines = ["facet,key,value"]
    lines.append(f"meta,n_records,{report.n_records}")
    lines.append(f"meta,bucket_width,{report.bucket_width}")
    for start, count in sorted(report.length_histogram.items()):
        lines.append(f"length,{start},{count}")
    for name, count in report.strategy_frequency:
        escaped = name.replace('"', '""')
        lines.append(f'strategy,"{escaped}",{count}')
    for size, count in sorted(report.unique_strategy_histogram.items()):
        lines.append(f"unique_strategies,{size},{count}")
    for score, count in sorted(report.verbosity_histogram.items()):
        lines.append(f"verbosity,{score},{count}")
    for name, count, percent in report.domain_distribution:
        escaped = name.replace('"', '""')
        lines.append(f'domain,"{escaped}",{count}')
        lines.append(f'domain_percent,"{escaped}",{percent}')
    return "\n".join(lines) + "\n"


def _svg_bar_chart(title: str, rows: list[tuple[str, float]], width: int = 640) -> str:
    """Minimal static horizontal bar chart; deterministic output."""
    bar_height, gap, label_width, top = 18, 6, 220, 40
    height = top + max(1, len(rows)) * (bar_height + gap) + 20
    peak = max((value for _, value in rows), default=1.0) or 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="10" y="24" font-family="sans-serif" font-size="16">{saxutils.escape(title)}</text>',
    ]
    for i, (label, value) in enumerate(rows):
        y = top + i * (bar_height + gap)
        bar = (width - label_width - 80) * (value / peak)
        parts.append(
            f'<text x="10" y="{y + 13}" font-family="sans-serif" font-size="11">'
            f"{saxutils.escape(str(label))}</text>"
        )
        parts.append(
            f'<rect x="{label_width}" y="{y}" width="{bar:.1f}" height="{bar_height}" '
            f'fill="#4878a8"/>'
        )
        parts.append(
            f'<text x="{label_width + bar + 6:.1f}" y="{y + 13}" font-family="sans-serif" '
            f'font-size="11">{value:g}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(
    report: StatsReport, out_dir: str | Path, formats: Sequence[str] = FORMATS
) -> list[Path]:
    """Write report files under `out_dir`; returns the paths written."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UnwritablePath(str(exc)) from None
    written: list[Path] = []

    if "json" in formats:
        path = out / "report.json"
        path.write_text(
            json.dumps(report.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            "utf-8",
        )
        written.append(path)
    if "csv" in formats:
        path = out / "report.csv"
        path.write_text(_csv_text(report), "utf-8")
        written.append(path)
    if "svg" in formats:
        charts = {
            "lengths.svg": (
                "Reasoning length distribution",
                [(str(k), float(v)) for k, v in sorted(report.length_histogram.items())],
            ),
            "strategies.svg": (
                f"Top {TOP_STRATEGIES} reasoning strategies",
                [(name, float(count)) for name, count in report.strategy_frequency[:TOP_STRATEGIES]],
            ),
            "unique_strategies.svg": (
                "Unique strategies per example",
                [(str(k), float(v)) for k, v in sorted(report.unique_strategy_histogram.items())],
            ),
            "verbosity.svg": (
                "Verbosity distribution",
                [(str(k), float(v)) for k, v in sorted(report.verbosity_histogram.items())],
            ),
            "domains.svg": (
                "Domain distribution",
                [(name, float(count)) for name, count, _ in report.domain_distribution],
            ),
        }
        for filename, (title, rows) in charts.items():
            path = out / filename
            path.write_text(_svg_bar_chart(title, rows), "utf-8")
            written.append(path)
    return written
