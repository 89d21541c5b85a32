import io
import json
from fractions import Fraction

import numpy as np

from report_generator import (
    dump_json, emit, flatten, format_markdown_table, format_table, frame, merge_reports,
    report_to_markdown, to_jsonable,
)


def test_to_jsonable_normalizes_values():
    data = {'q': Fraction(1, 2), 'n': Fraction(3), 'x': np.float64(0.5), 'k': np.int64(2),
            'flag': np.bool_(True), 'z': 1 + 2j, 'arr': np.array([1, 2])}
    assert to_jsonable(data) == {'q': '1/2', 'n': 3, 'x': 0.5, 'k': 2, 'flag': True,
                                 'z': {'re': 1.0, 'im': 2.0}, 'arr': [1, 2]}


def test_dump_json_is_deterministic():
    a = dump_json({'b': 1, 'a': {'d': 2, 'c': 3}})
    b = dump_json({'a': {'c': 3, 'd': 2}, 'b': 1})
    assert a == b
    assert a.endswith("\n")
    assert json.loads(a) == {'a': {'c': 3, 'd': 2}, 'b': 1}


def test_merge_reports():
    merged = merge_reports([{'graph': 'o2', 'passed': True}, {'graph': 'loop', 'passed': False}])
    assert list(merged['fixtures']) == ['loop', 'o2']
    assert merged['passed'] is False


def test_flatten_nested_checks():
    rows = flatten({'b': {'y': True, 'x': 0.0}, 'a': None})
    assert rows == [['a', 'None'], ['b.x', '0'], ['b.y', 'True']]


def test_ascii_table():
    text = format_table("Checks", ["Check", "Value"], [["index", 2], ["norm", 0.3162277]])
    lines = text.strip().splitlines()
    assert lines[0] == "### Checks"
    assert lines[1].startswith("+") and lines[1] == lines[3] == lines[-1]
    assert "0.3162" in text
    assert "No data" in format_table("Empty", ["a"], [])


def test_markdown_table_escapes_pipes():
    text = format_markdown_table("T", ["a"], [["x|y"]])
    assert "| x\\|y |" in text


def test_frame_replaces_missing_values():
    df = frame([{'a': 1, 'b': None}, {'a': 2}])
    assert df['b'].tolist() == [None, None]


def test_report_to_markdown():
    report = {
        'command': 'kgroups', 'graph': 'o3', 'passed': True,
        'tables': {'K-groups': [{'algebra': 'O(o3)', 'K0': 'Z/2', 'K1': '0'}]},
        'checks': {'Euler characteristic 0': True},
        'config': {'seed': 1},
    }
    text = report_to_markdown(report)
    assert text.startswith("# kgroups: o3")
    assert "**PASS**" in text
    assert "| O(o3) | Z/2 | 0 |" in text
    assert "| Euler characteristic 0 | True |" in text


def test_corpus_markdown_includes_the_index_section():
    merged = merge_reports([{'command': 'fixture', 'graph': 'loop', 'passed': True}])
    merged['index'] = {'command': 'index', 'graph': 'rotation', 'passed': True,
                        'checks': {'U^k additivity': True}}
    text = report_to_markdown(merged)
    assert text.startswith("# Corpus report")
    assert "# index: rotation" in text
    assert "| U^k additivity | True |" in text


def test_emit_formats():
    out = io.StringIO()
    emit({'command': 'index', 'passed': True}, 'json', out)
    assert json.loads(out.getvalue())['command'] == 'index'
    out = io.StringIO()
    emit({'command': 'index', 'passed': True}, 'md', out)
    assert out.getvalue().startswith("# index")
