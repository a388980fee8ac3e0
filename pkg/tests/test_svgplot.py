import xml.etree.ElementTree as ET

from synthpop import svgplot


def parse(svg_text):
    return ET.fromstring(svg_text)


def test_scatter_svg_structure():
    points = [(0.1, 0.1), (0.2, 0.15), (0.0, 0.3)]
    svg = svgplot.scatter_svg(
        points,
        title="demo",
        xlabel="x",
        ylabel="y",
        annotation=["SRMSE = 0.1", "Pearson = 0.9"],
    )
    root = parse(svg)
    assert root.tag.endswith("svg")
    body = svg
    assert body.count("<circle") == len(points)
    assert "SRMSE = 0.1" in body
    assert 'stroke-dasharray' in body  # diagonal reference line


def test_scatter_svg_deterministic_and_escaped():
    pts = [(0.5, 0.25)]
    a = svgplot.scatter_svg(pts, title="a<b&c", xlabel="x", ylabel="y")
    b = svgplot.scatter_svg(pts, title="a<b&c", xlabel="x", ylabel="y")
    assert a == b
    assert "a&lt;b&amp;c" in a
    parse(a)


def test_line_chart_log_scales_and_none_handling():
    series = [
        ("m1", [(10.0, 1.0), (100.0, 10.0), (1000.0, None)]),
        ("m2", [(10.0, 5.0), (100.0, 0.5)]),
    ]
    svg = svgplot.line_chart_svg(
        series, title="t", xlabel="n", ylabel="ratio", logx=True, logy=True
    )
    root = parse(svg)
    assert svg.count("<polyline") == 2
    assert "m1" in svg and "m2" in svg
    assert root is not None


def test_line_chart_empty_series_is_valid():
    svg = svgplot.line_chart_svg([("empty", [])], title="t", xlabel="x", ylabel="y")
    parse(svg)
