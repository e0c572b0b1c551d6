"""Leaderboard aggregation: accuracy rank blended with inference-time rank."""

from __future__ import annotations

import csv
import os
import shlex
import subprocess
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DuplicateTeamName, ProcessFailure

ACC_WEIGHT = 0.7
TIME_WEIGHT = 0.3
TIMEOUT_ENV = "AIRWAYKIT_CASE_TIMEOUT"


@dataclass(frozen=True)
class LeaderboardEntry:
    team: str
    ovacc_mean: float
    time_s: float
    rank_acc: float
    rank_time: float
    combined_r: float
    final_position: int


def _fractional_rank(values: np.ndarray, descending: bool) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    v = -values if descending else values
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=np.float64)
    i = 0
    while i < len(v):
        j = i
        while j < len(v) and v[order[j]] == v[order[i]]:
            j += 1
        ranks[order[i:j]] = (i + j + 1) / 2.0  # mean of positions i+1..j
        i = j
    return ranks


def rank_teams(entries: list[tuple[str, float, float]]) -> list[LeaderboardEntry]:
    """Order teams by 0.7 * accuracy-rank + 0.3 * time-rank (both fractional).

    Accuracy ranks descend (best OvAcc gets rank 1), time ranks ascend
    (fastest gets rank 1). Ties on the blended score break toward the higher
    OvAcc, then the lexicographically smaller team name.
    """
    if not entries:
        raise ValueError("at least one team is required")
    teams = [e[0] for e in entries]
    if len(set(teams)) != len(teams):
        raise DuplicateTeamName("team names must be unique")
    ovacc = np.array([e[1] for e in entries], dtype=float)
    times = np.array([e[2] for e in entries], dtype=float)
    if not np.all(np.isfinite(ovacc)):
        raise ValueError("OvAcc values must be finite")
    if not np.all(times > 0):
        raise ValueError("times must be positive")

    rank_acc = _fractional_rank(ovacc, descending=True)
    rank_time = _fractional_rank(times, descending=False)
    combined = ACC_WEIGHT * rank_acc + TIME_WEIGHT * rank_time

    order = sorted(range(len(teams)), key=lambda i: (combined[i], -ovacc[i], teams[i]))
    return [
        LeaderboardEntry(
            team=teams[i],
            ovacc_mean=float(ovacc[i]),
            time_s=float(times[i]),
            rank_acc=float(rank_acc[i]),
            rank_time=float(rank_time[i]),
            combined_r=float(combined[i]),
            final_position=pos,
        )
        for pos, i in enumerate(order, start=1)
    ]


def write_leaderboard(board: list[LeaderboardEntry], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["team", "ovacc", "time_s", "rank_acc", "rank_time", "R", "position"])
        for e in board:
            writer.writerow([e.team, repr(e.ovacc_mean), repr(e.time_s),
                             repr(e.rank_acc), repr(e.rank_time),
                             repr(e.combined_r), e.final_position])


# --- timing harness ---------------------------------------------------------

@dataclass(frozen=True)
class CaseTiming:
    case_id: str
    seconds: float
    status: str  # "ok", "failed", "timeout" or "missing-output"
    output_path: Path | None


@dataclass(frozen=True)
class TimingReport:
    cases: list[CaseTiming]
    mean_seconds: float


def case_id_of(path: str | Path) -> str:
    name = Path(path).name
    for suffix in (".nii.gz", ".nii"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return Path(path).stem


def time_runner(command_template: str, cases: list[Path], out_dir: Path,
                strict: bool = False) -> TimingReport:
    """Run an external segmentation command per case and record wall time.

    The template must contain ``{input}`` and ``{output}`` placeholders. A
    per-case timeout (seconds) is read from the AIRWAYKIT_CASE_TIMEOUT
    environment variable when set. Failing cases abort the run in strict
    mode; otherwise they are flagged and skipped in the mean.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timeout_s = os.environ.get(TIMEOUT_ENV)
    timeout = float(timeout_s) if timeout_s else None

    results = []
    for case in cases:
        case = Path(case)
        cid = case_id_of(case)
        output = out_dir / case.name
        argv = shlex.split(
            command_template.replace("{input}", str(case)).replace("{output}", str(output))
        )
        start = time.perf_counter()
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=timeout)
            elapsed = time.perf_counter() - start
            if proc.returncode != 0:
                status = "failed"
            elif not output.exists():
                status = "missing-output"
            else:
                status = "ok"
        except subprocess.TimeoutExpired:
            elapsed = time.perf_counter() - start
            status = "timeout"
        if status != "ok" and strict:
            raise ProcessFailure(f"case {cid}: {status}")
        results.append(CaseTiming(
            case_id=cid,
            seconds=elapsed,
            status=status,
            output_path=output if status == "ok" else None,
        ))
    ok_times = [r.seconds for r in results if r.status == "ok"]
    mean = float(np.mean(ok_times)) if ok_times else float("nan")
    return TimingReport(cases=results, mean_seconds=mean)


def write_times(report: TimingReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "seconds", "status"])
        for r in report.cases:
            writer.writerow([r.case_id, repr(r.seconds), r.status])
        writer.writerow(["__mean__", repr(report.mean_seconds), ""])
