from __future__ import annotations

import json
import os

import pytest

from moascan.pipeline import ReportFinding, ScanReport
from moascan.report import ReportWriteError, dumps_canonical, read_json, render_report, write_report, write_text


def _report():
    return ScanReport(
        "single-pass",
        config={"mode": "single-pass"},
        findings=(ReportFinding("ssrf", "b/X.java", 0.5, ("SSRF",)), ReportFinding("sqli", "a/X.java")),
        timings={"elapsed_seconds": 1.25},
    )


def test_canonical_bytes_are_stable(tmp_path):
    first = write_report(_report(), tmp_path / "one.json").read_bytes()
    second = write_report(_report(), tmp_path / "two.json").read_bytes()
    assert first == second
    assert first.endswith(b"\n")
    assert b"elapsed_seconds" not in first


def test_timings_only_on_request():
    assert "elapsed_seconds" in render_report(_report(), include_timings=True)


def test_empty_report_is_valid_json():
    data = json.loads(render_report(ScanReport("single-pass")))
    assert data["kind"] == "scan-report" and data["findings"] == []
    assert ScanReport.from_dict(data).findings == ()


def test_table_uses_full_paths_only_when_basenames_collide():
    table = render_report(_report(), "table")
    assert "a/X.java" in table and "b/X.java" in table
    single = ScanReport("single-pass", findings=(ReportFinding("ssrf", "deep/dir/Y.java"),))
    assert "ssrf | Y.java | Reported" in render_report(single, "table")


def test_unknown_format_rejected():
    with pytest.raises(ValueError):
        render_report(_report(), "xml")


def test_dumps_canonical_sorts_keys():
    assert dumps_canonical({"b": 1, "a": 2}).index('"a"') < dumps_canonical({"b": 1, "a": 2}).index('"b"')


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_directory(tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(0o500)
    with pytest.raises(ReportWriteError):
        write_text("x", locked / "r.json")


def test_path_under_a_file_is_unwritable(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    with pytest.raises(ReportWriteError):
        write_text("x", blocker / "r.json")
    assert not (tmp_path / "blocker.tmp").exists()


def test_read_json_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(Exception, match="cannot read"):
        read_json(bad)
