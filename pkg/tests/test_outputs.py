import json
import math
import xml.etree.ElementTree as ET

import numpy as np

from wavepacket_lab.outputs import OutputSink, RunManifest, Series, format_value, svg_plot, write_csv


def test_format_value_round_trips_floats():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17):
        assert float(format_value(x)) == x
    assert format_value(np.float32(0.5)) == "0.5"
    assert format_value(True) == "1" and format_value(np.int64(7)) == "7"


def test_write_csv_dict_and_sequence_rows(tmp_path):
    p = write_csv(tmp_path / "a.csv", ["x", "y"], [{"x": 1, "y": 0.1}, (2, math.inf)])
    assert p.read_text() == "x,y\n1,0.1\n2,inf\n"


def test_svg_is_well_formed(tmp_path):
    x = np.geomspace(1, 100, 6)
    p = svg_plot(tmp_path / "a.svg", [Series(x, x**-0.5, "a & b"), Series(x, 0 * x, "zeros", fit=False)],
                 "title <1>", "t", "y", reference_slope=-0.5)
    root = ET.parse(p).getroot()
    assert root.tag.endswith("svg")
    text = p.read_text()
    assert "slope -0.500" in text and "target -0.500" in text


def test_svg_linear_axes_and_empty(tmp_path):
    p = svg_plot(tmp_path / "b.svg", [Series([1, 2, 3], [3, 2, 1])], "lin", "x", "y", logx=False, logy=False)
    ET.parse(p)
    ET.parse(svg_plot(tmp_path / "c.svg", [], "empty", "x", "y"))


def test_manifest_and_checksums(tmp_path):
    sink = OutputSink(tmp_path)
    sink.csv("sub/a.csv", ["x"], [(1,)])
    sums = sink.checksums()
    assert list(sums) == ["sub/a.csv"] and len(sums["sub/a.csv"]) == 64
    man = RunManifest("demo", {"p": math.inf}, "0", outputs=sums, summary={"v": np.float64(2.0)})
    body = json.loads(man.to_json())
    assert body["config"]["p"] == "inf" and body["summary"]["v"] == 2.0
