import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airwaykit.errors import DuplicateTeamName, ProcessFailure
from airwaykit.ranking import (
    _fractional_rank,
    rank_teams,
    time_runner,
    write_leaderboard,
)

from conftest import PUBLISHED_ORDER, PUBLISHED_RESULTS


def published_entries():
    return [(team, row[6], row[7]) for team, row in PUBLISHED_RESULTS.items()]


class TestRankTeams:
    def test_published_leaderboard_order(self):
        board = rank_teams(published_entries())
        assert [e.team for e in board] == PUBLISHED_ORDER
        by_team = {e.team: e for e in board}
        # spot checks of the blended rank
        assert by_team["Gexing"].combined_r == pytest.approx(0.7 * 5 + 0.3 * 8)
        assert by_team["DJ_92"].combined_r == pytest.approx(0.7 * 7 + 0.3 * 6)
        assert by_team["MedibotTeam"].combined_r == 1.0

    def test_single_team(self):
        board = rank_teams([("solo", 0.9, 10.0)])
        assert board[0].final_position == 1
        assert board[0].combined_r == 1.0

    def test_full_tie_breaks_by_name(self):
        board = rank_teams([("beta", 0.8, 10.0), ("alpha", 0.8, 10.0)])
        assert [e.team for e in board] == ["alpha", "beta"]
        assert board[0].combined_r == board[1].combined_r

    def test_tie_on_r_breaks_by_ovacc(self):
        # both teams get combined_r = 1.5 but team "worse" has lower ovacc
        board = rank_teams([("worse", 0.7, 1.0), ("better", 0.9, 2.0)])
        assert board[0].combined_r == board[1].combined_r
        assert board[0].team == "better"

    def test_duplicate_team_rejected(self):
        with pytest.raises(DuplicateTeamName):
            rank_teams([("a", 0.5, 1.0), ("a", 0.6, 2.0)])

    def test_positive_time_required(self):
        with pytest.raises(ValueError):
            rank_teams([("a", 0.5, 0.0)])

    def test_equal_times_order_by_ovacc(self):
        entries = [("t1", 0.5, 9.0), ("t2", 0.9, 9.0), ("t3", 0.7, 9.0)]
        board = rank_teams(entries)
        assert [e.team for e in board] == ["t2", "t3", "t1"]

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_permutation_invariance_and_rank_sum(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 9))
        entries = [(f"team{i}", float(rng.integers(50, 100)) / 100,
                    float(rng.integers(1, 50))) for i in range(n)]
        board = rank_teams(entries)
        shuffled = list(entries)
        rng.shuffle(shuffled)
        board2 = rank_teams(shuffled)
        assert [e.team for e in board] == [e.team for e in board2]
        assert sum(e.rank_acc for e in board) == pytest.approx(n * (n + 1) / 2)
        assert all(1 <= e.rank_acc <= n and 1 <= e.rank_time <= n for e in board)
        assert sorted(e.final_position for e in board) == list(range(1, n + 1))

    def test_improving_ovacc_never_hurts(self):
        entries = published_entries()
        base = {e.team: e.final_position for e in rank_teams(entries)}
        improved = [(t, o + 0.002 if t == "Riipl" else o, s) for t, o, s in entries]
        new = {e.team: e.final_position for e in rank_teams(improved)}
        assert new["Riipl"] <= base["Riipl"]

    def test_fractional_rank_ties(self):
        ranks = _fractional_rank(np.array([3.0, 1.0, 3.0, 2.0]), descending=True)
        assert ranks.tolist() == [1.5, 4.0, 1.5, 3.0]

    def test_leaderboard_csv(self, tmp_path):
        board = rank_teams(published_entries())
        path = tmp_path / "board.csv"
        write_leaderboard(board, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "team,ovacc,time_s,rank_acc,rank_time,R,position"
        assert lines[1].startswith("MedibotTeam")


SLEEP_COPY = (f"{sys.executable} -c "
              "\"import shutil,sys,time; time.sleep(0.2); shutil.copy(sys.argv[1], sys.argv[2])\" "
              "{input} {output}")

FAILING = f"{sys.executable} -c \"import sys; sys.exit(3)\" {{input}} {{output}}"


class TestTimeRunner:
    def _cases(self, tmp_path, n=2):
        cases = []
        for i in range(n):
            p = tmp_path / f"case{i}.nii"
            p.write_bytes(b"payload")
            cases.append(p)
        return cases

    def test_timing_window(self, tmp_path):
        cases = self._cases(tmp_path)
        report = time_runner(SLEEP_COPY, cases, tmp_path / "out")
        assert all(r.status == "ok" for r in report.cases)
        for r in report.cases:
            assert 0.2 <= r.seconds < 3.0  # generous scheduler tolerance
            assert r.output_path.exists()
        assert report.mean_seconds >= 0.2

    def test_failing_case_strict_aborts(self, tmp_path):
        cases = self._cases(tmp_path, n=1)
        with pytest.raises(ProcessFailure) as err:
            time_runner(FAILING, cases, tmp_path / "out", strict=True)
        assert "case0" in str(err.value)

    def test_failing_case_lenient_flags(self, tmp_path):
        cases = self._cases(tmp_path, n=2)
        bad_then_good = (f"{sys.executable} -c "
                         "\"import shutil,sys; "
                         "sys.exit(3) if 'case0' in sys.argv[1] else shutil.copy(sys.argv[1], sys.argv[2])\" "
                         "{input} {output}")
        report = time_runner(bad_then_good, cases, tmp_path / "out")
        statuses = {r.case_id: r.status for r in report.cases}
        assert statuses["case0"] == "failed"
        assert statuses["case1"] == "ok"
        assert np.isfinite(report.mean_seconds)
