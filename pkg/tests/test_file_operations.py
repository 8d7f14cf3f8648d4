import json

import numpy as np

from sde_perturbation.core import file_operations
from sde_perturbation.core.file_operations import remove_stale_outputs, write_report, write_table


def test_table_cells(tmp_path):
    path = tmp_path / "results.csv"
    rows = [
        {'N': np.int64(8), 'rms': 0.1, 'se': np.float64(2.0), 'ok': np.bool_(True)},
        {'N': 16, 'rms': float('inf'), 'ok': False},
    ]
    assert write_table(str(path), ['N', 'rms', 'se', 'ok'], rows) == 2
    assert path.read_bytes() == (b"N,rms,se,ok\n"
                                 b"8,0.10000000000000001,2,True\n"
                                 b"16,inf,,False\n")


def test_empty_table_keeps_header(tmp_path):
    path = tmp_path / "results.csv"
    assert write_table(str(path), ['case', 'z'], []) == 0
    assert path.read_text(encoding="utf-8") == "case,z\n"


def test_report_converts_numpy_values(tmp_path):
    path = tmp_path / "report.json"
    write_report(str(path), {
        'means': np.array([0.75, 0.0]),
        'count': np.int32(3),
        'passed': np.bool_(False),
        'slope': float('-inf'),
        'nested': {1: (np.float32(0.5), None)},
    })
    text = path.read_text(encoding="utf-8")
    assert text.endswith("}\n")
    report = json.loads(text)
    assert report == {'means': [0.75, 0.0], 'count': 3, 'passed': False, 'slope': '-inf',
                      'nested': {'1': [0.5, None]}}


def test_remove_stale_outputs(tmp_path):
    for name in ("report.json", "results.csv", "notes.txt"):
        (tmp_path / name).write_text("old", encoding="utf-8")
    removed = remove_stale_outputs(str(tmp_path), ["report.json", "results.csv", "config.ini"],
                                   permanent=True)
    assert removed == 2
    assert sorted(p.name for p in tmp_path.iterdir()) == ["notes.txt"]
    assert remove_stale_outputs(str(tmp_path), ["report.json"], permanent=True) == 0


def test_stale_outputs_go_to_trash_unless_permanent(tmp_path, monkeypatch):
    trashed = []
    monkeypatch.setattr(file_operations, "send2trash", trashed.append)
    (tmp_path / "results.csv").write_text("old", encoding="utf-8")
    (tmp_path / "config.ini").mkdir()
    assert remove_stale_outputs(str(tmp_path), ["results.csv", "config.ini"]) == 1
    assert trashed == [str(tmp_path / "results.csv")]


def test_unremovable_output_is_left_in_place(tmp_path, monkeypatch):
    def refuse(path):
        raise PermissionError(path)

    monkeypatch.setattr(file_operations, "send2trash", refuse)
    (tmp_path / "report.json").write_text("old", encoding="utf-8")
    assert remove_stale_outputs(str(tmp_path), ["report.json"]) == 0
    assert (tmp_path / "report.json").read_text(encoding="utf-8") == "old"
