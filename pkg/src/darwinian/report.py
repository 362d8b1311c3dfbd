"""Reports on a finished search: percent-of-baseline tables, diffs, tallies."""

from __future__ import annotations

import difflib
import json
import re
import shutil
import tempfile
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Optional, Sequence

from .evaluate import OBJECTIVES, Evaluator, Measurement, Mode
from .extract import Extraction, decode_changes, genome_hash
from .search import Classification, classify_vs_baseline
from .stats import ALPHA, Alternative, mann_whitney_u, median_ci, percent_of_baseline

_IGNORED_DIRS = {"__pycache__", ".git"}
_HUNK = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")


# ---------------------------------------------------------------- diffs


def _tree_files(root: Path) -> set[str]:
    out = set()
    for p in root.rglob("*"):
        if p.is_file() and not (_IGNORED_DIRS & set(p.relative_to(root).parts)):
            out.add(p.relative_to(root).as_posix())
    return out


def _lines(path: Optional[Path]) -> list[str]:
    if path is None or not path.exists():
        return []
    return path.read_bytes().decode("utf-8", "surrogateescape").splitlines(keepends=True)


@dataclass
class TreeDiff:
    files: dict[str, str]  # relative path -> unified diff text
    added: int = 0
    removed: int = 0
    changed_lines: int = 0

    @property
    def text(self) -> str:
        return "".join(self.files[k] for k in sorted(self.files))


def diff_lines(a: list[str], b: list[str], path: str) -> str:
    old = f"a/{path}" if a else "/dev/null"
    new = f"b/{path}" if b else "/dev/null"
    out = []
    for line in difflib.unified_diff(a, b, old, new, n=3):
        out.append(line)
        if not line.endswith("\n"):
            out.append("\n\\ No newline at end of file\n")
    return "".join(out)


def count_changes(diff_text: str) -> tuple[int, int, int]:
    """(added, removed, changed) for a unified diff.

    A block of k removed lines replaced by j added lines counts as
    max(k, j) changed lines.
    """
    added = removed = changed = 0
    lines = diff_text.splitlines()
    i = 0
    while i < len(lines):
        m = _HUNK.match(lines[i])
        i += 1
        if not m:
            continue
        old_left = int(m.group(2) if m.group(2) is not None else 1)
        new_left = int(m.group(4) if m.group(4) is not None else 1)
        run_minus = run_plus = 0
        while i < len(lines) and (old_left > 0 or new_left > 0 or lines[i].startswith("\\")):
            tag = lines[i][:1]
            i += 1
            if tag == "\\":
                continue
            if tag == "-":
                removed += 1
                run_minus += 1
                old_left -= 1
            elif tag == "+":
                added += 1
                run_plus += 1
                new_left -= 1
            else:
                changed += max(run_minus, run_plus)
                run_minus = run_plus = 0
                old_left -= 1
                new_left -= 1
        changed += max(run_minus, run_plus)
    return added, removed, changed


def unified_diff(original_tree, variant_tree) -> TreeDiff:
    original_tree, variant_tree = Path(original_tree), Path(variant_tree)
    result = TreeDiff({})
    for rel in sorted(_tree_files(original_tree) | _tree_files(variant_tree)):
        a_path, b_path = original_tree / rel, variant_tree / rel
        if a_path.exists() and b_path.exists() and a_path.read_bytes() == b_path.read_bytes():
            continue
        text = diff_lines(_lines(a_path), _lines(b_path), rel)
        if text:
            result.files[rel] = text
            a, r, c = count_changes(text)
            result.added += a
            result.removed += r
            result.changed_lines += c
    return result


class PatchError(Exception):
    pass


def apply_patch(patch_text: str, root) -> list[str]:
    """Apply a unified diff (``a/``/``b/`` prefixes) to the tree at ``root``.

    Context must match exactly; returns the touched paths.
    """
    root = Path(root)
    lines = patch_text.splitlines(keepends=True)
    touched = []
    i = 0
    while i < len(lines):
        if not lines[i].startswith("--- "):
            i += 1
            continue
        old_name = lines[i][4:].rstrip("\n").split("\t")[0]
        new_name = lines[i + 1][4:].rstrip("\n").split("\t")[0]
        i += 2
        target = new_name if new_name != "/dev/null" else old_name
        rel = target[2:] if target[:2] in ("a/", "b/") else target
        path = root / rel
        src = _lines(path) if old_name != "/dev/null" else []
        out: list[str] = []
        pos = 0
        while i < len(lines) and lines[i].startswith("@@"):
            m = _HUNK.match(lines[i])
            if not m:
                raise PatchError(f"bad hunk header {lines[i]!r}")
            start = int(m.group(1)) - (0 if m.group(2) == "0" else 1)
            i += 1
            out.extend(src[pos:start])
            pos = start
            body = []
            while i < len(lines) and lines[i][:1] in (" ", "-", "+", "\\"):
                body.append(lines[i])
                i += 1
            for k, line in enumerate(body):
                tag, text = line[:1], line[1:]
                if tag == "\\":
                    continue
                if k + 1 < len(body) and body[k + 1].startswith("\\"):
                    text = text[:-1] if text.endswith("\n") else text
                if tag in " -":
                    if pos >= len(src) or src[pos] != text:
                        raise PatchError(f"{rel}: context mismatch at line {pos + 1}")
                    pos += 1
                if tag in " +":
                    out.append(text)
        out.extend(src[pos:])
        if new_name == "/dev/null":
            path.unlink()
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes("".join(out).encode("utf-8", "surrogateescape"))
        touched.append(rel)
    return touched


# ---------------------------------------------------------------- report model


def cost_estimate(total_machine_seconds: float, rate_per_hour: float) -> float:
    if total_machine_seconds < 0 or rate_per_hour < 0:
        raise ValueError("cost inputs must be non-negative")
    amount = Decimal(repr(total_machine_seconds)) / Decimal(3600) * Decimal(repr(rate_per_hour))
    return float(amount.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass
class SolutionRecord:
    solution_id: int
    genome: tuple
    objectives_verify: Measurement
    classification: Classification
    percent: tuple[float, float, float]
    significant: tuple[bool, bool, bool]
    p_values: tuple[float, float, float]
    dds_changes: list[dict]
    changed_lines: int
    diff_path: str
    diff: str = field(default="", repr=False)
    baseline_objectives: tuple = (1.0, 1.0, 1.0)

    @property
    def name(self) -> str:
        return f"solution-{self.solution_id}"

    def to_dict(self) -> dict:
        cols = [self.objectives_verify.column(i) for i in range(3)]
        ci = [median_ci(c) if len(c) >= 5 else None for c in cols]
        return {
            "id": self.name,
            "genome": list(self.genome),
            "genome_hash": genome_hash(self.genome),
            "classification": self.classification.value,
            "objectives": list(self.objectives_verify.objectives),
            "percent": [round(p, 6) for p in self.percent],
            "percent_ci": [
                [round(100 * c.lo / m, 6), round(100 * c.hi / m, 6)] if c is not None and m > 0 else None
                for c, m in zip(ci, self.baseline_objectives)
            ],
            "significant": list(self.significant),
            "p_values": list(self.p_values),
            "dds_changes": self.dds_changes,
            "changed_lines": self.changed_lines,
            "diff_path": self.diff_path,
        }


@dataclass
class FrontReport:
    baseline: Measurement
    solutions: list[SolutionRecord]
    total_machine_seconds: float
    rate_per_hour: float
    currency: str = "£"
    notes: list[str] = field(default_factory=list)
    dropped: list[dict] = field(default_factory=list)

    @property
    def cost(self) -> float:
        return cost_estimate(self.total_machine_seconds, self.rate_per_hour)

    def count(self, cls: Classification) -> int:
        return sum(1 for s in self.solutions if s.classification is cls)

    def best(self, objective: int) -> Optional[SolutionRecord]:
        if not self.solutions:
            return None
        return min(self.solutions, key=lambda s: (s.percent[objective], s.solution_id))

    @property
    def tally(self) -> dict:
        return dds_change_tally(self.solutions)


def dds_change_tally(solutions: Sequence[SolutionRecord]) -> dict[str, dict[str, int]]:
    """Count directed impl changes among the per-objective best solutions.

    A solution is counted for every objective on which it is (jointly) best.
    """
    table: dict[str, dict[str, int]] = {}
    if not solutions:
        return table
    for i, name in enumerate(OBJECTIVES):
        best = min(s.percent[i] for s in solutions)
        for s in solutions:
            if s.percent[i] != best:
                continue
            for ch in s.dds_changes:
                if ch["kind"] != "impl":
                    continue
                key = f"{ch['from_impl']} -> {ch['to_impl']}"
                row = table.setdefault(key, {o: 0 for o in OBJECTIVES})
                row[name] += 1
    return dict(sorted(table.items()))


def _p_less(variant, baseline) -> float:
    if len(variant) < 3 or len(baseline) < 3:
        return float("nan")
    return mann_whitney_u(variant, baseline, Alternative.LESS)[1]


def build_report(front, baseline: Measurement, evaluator: Evaluator, alpha: float = ALPHA) -> FrontReport:
    """Re-measure each front member in VERIFY mode and compare to baseline.

    ``front`` holds Individuals or plain genomes.  Members that fail during
    re-measurement are listed in ``dropped`` rather than reported.
    """
    ex: Extraction = evaluator.extraction
    cfg = evaluator.cfg
    records = []
    dropped = []
    genomes = []
    for member in front:
        g = tuple(getattr(member, "genome", member))
        if g not in genomes:
            genomes.append(g)
    base_cols = [baseline.column(i) for i in range(3)]
    with tempfile.TemporaryDirectory(prefix="darwinian-report-") as tmp:
        original = ex.materialize(ex.schema.seed_genome, Path(tmp) / "original")
        for g in genomes:
            outcome = evaluator.evaluate(g, Mode.VERIFY)
            if not outcome.feasible:
                dropped.append({"genome": list(g), "stage": outcome.stage.value, "detail": outcome.detail[-500:]})
                continue
            m = outcome.measurement
            percent = tuple(percent_of_baseline(m.objectives[i], baseline.objectives[i]) for i in range(3))
            pvals = tuple(_p_less(m.column(i), base_cols[i]) for i in range(3))
            variant = ex.materialize(g, Path(tmp) / genome_hash(g))
            diff = unified_diff(original, variant)
            k = len(records)
            rec = SolutionRecord(
                solution_id=k,
                genome=g,
                objectives_verify=m,
                classification=classify_vs_baseline(m.objectives, baseline.objectives),
                percent=percent,
                significant=tuple(p < alpha for p in pvals),
                p_values=pvals,
                dds_changes=decode_changes(ex.schema, g),
                changed_lines=diff.changed_lines,
                diff_path=f"diffs/solution-{k}.patch",
                diff=diff.text,
                baseline_objectives=baseline.objectives,
            )
            records.append(rec)
    notes = []
    if not records:
        notes.append("AllInfeasible: no feasible solution survived VERIFY re-measurement")
    return FrontReport(
        baseline=baseline,
        solutions=records,
        total_machine_seconds=getattr(evaluator, "recorded_machine_seconds", evaluator.total_machine_seconds),
        rate_per_hour=cfg.rate_per_hour,
        currency=cfg.currency,
        notes=notes,
        dropped=dropped,
    )


# ---------------------------------------------------------------- artifacts


def _fmt_obj(i: int, v: float) -> str:
    if i == 0:
        return f"{v:.4f} s"
    if i == 1:
        return f"{v / 2**20:.2f} MiB"
    return f"{v:.3f}"


def report_to_dict(report: FrontReport) -> dict:
    b = report.baseline
    summary = {}
    for i, name in enumerate(OBJECTIVES):
        col = b.column(i)
        entry = {"n": len(col), "median": b.objectives[i]}
        if len(col) >= 5:
            ci = median_ci(col)
            entry.update(ci_lo=ci.lo, ci_hi=ci.hi, confidence=ci.confidence)
        summary[name] = entry
    best = {name: (report.best(i).name if report.best(i) else None) for i, name in enumerate(OBJECTIVES)}
    return {
        "baseline": {"objectives": list(b.objectives), "samples_summary": summary},
        "solutions": [s.to_dict() for s in report.solutions],
        "counts": {c.value: report.count(c) for c in Classification},
        "best": best,
        "tally": report.tally,
        "cost": {
            "total_machine_seconds": report.total_machine_seconds,
            "rate_per_hour": report.rate_per_hour,
            "currency": report.currency,
            "amount": report.cost,
        },
        "dropped": report.dropped,
        "notes": report.notes,
    }


def render_markdown(report: FrontReport) -> str:
    b = report.baseline
    out = ["# Data structure optimisation report", ""]
    out.append("## Baseline")
    out.append("")
    out.append("| objective | median | 95% CI |")
    out.append("|---|---|---|")
    for i, name in enumerate(OBJECTIVES):
        col = b.column(i)
        ci = median_ci(col) if len(col) >= 5 else None
        rng = f"[{_fmt_obj(i, ci.lo)}, {_fmt_obj(i, ci.hi)}]" if ci else "n/a"
        out.append(f"| {name} | {_fmt_obj(i, b.objectives[i])} | {rng} |")
    out.append("")
    out.append(
        f"Solutions: {len(report.solutions)}; strictly dominant: {report.count(Classification.STRICTLY_DOMINANT)}; "
        f"non-dominated: {report.count(Classification.NON_DOMINATED)}; "
        f"dominated: {report.count(Classification.DOMINATED)}."
    )
    out.append("")
    for note in report.notes:
        out.append(f"> {note}")
        out.append("")
    if report.solutions:
        out.append("## Solutions (percent of baseline, < 100% is better)")
        out.append("")
        out.append("`*` marks a one-sided Mann-Whitney U p < 0.05 improvement over the baseline samples.")
        out.append("")
        out.append("| id | time | memory | cpu | class | DDS changes | lines | diff |")
        out.append("|---|---|---|---|---|---|---|---|")
        for s in report.solutions:
            cells = [f"{p:.1f}%{'*' if sig else ''}" for p, sig in zip(s.percent, s.significant)]
            out.append(
                f"| {s.name} | {' | '.join(cells)} | {s.classification.value} | "
                f"{len(s.dds_changes)} | {s.changed_lines} | {s.diff_path} |"
            )
        out.append("")
        out.append("## Best per objective")
        out.append("")
        for i, name in enumerate(OBJECTIVES):
            best = report.best(i)
            out.append(f"- {name}: {best.name} ({best.percent[i]:.1f}%) -> best-{name}/")
        out.append("")
    tally = report.tally
    if tally:
        out.append("## DDS changes among per-objective best solutions")
        out.append("")
        out.append("A solution counts once for every objective on which it is jointly best.")
        out.append("")
        out.append("| transformation | time | memory | cpu |")
        out.append("|---|---|---|---|")
        for key, row in tally.items():
            out.append(f"| {key} | {row['time']} | {row['memory']} | {row['cpu']} |")
        out.append("")
    if report.dropped:
        out.append(f"{len(report.dropped)} front member(s) failed VERIFY re-measurement and were dropped.")
        out.append("")
    out.append("## Cost")
    out.append("")
    hours = report.total_machine_seconds / 3600
    out.append(
        f"Machine time {hours:.2f} h at {report.currency}{report.rate_per_hour:.2f}/h: "
        f"{report.currency}{report.cost:.2f}"
    )
    out.append("")
    return "\n".join(out)


def emit_artifacts(report: FrontReport, out_dir, extraction: Extraction) -> Path:
    """Write report.md, pareto.json, per-solution patches and best trees."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for stale in ["diffs"] + [f"best-{name}" for name in OBJECTIVES]:
        shutil.rmtree(out_dir / stale, ignore_errors=True)
    (out_dir / "report.md").write_text(render_markdown(report), encoding="utf-8", newline="\n")
    (out_dir / "pareto.json").write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )
    if report.solutions:
        (out_dir / "diffs").mkdir()
        for s in report.solutions:
            (out_dir / s.diff_path).write_bytes(s.diff.encode("utf-8", "surrogateescape"))
        for i, name in enumerate(OBJECTIVES):
            extraction.materialize(report.best(i).genome, out_dir / f"best-{name}")
    return out_dir
